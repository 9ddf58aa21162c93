//! Dataset ingestion: CSV conversion and binary validation.

use clap::Args;
use std::collections::BTreeMap;
use std::path::PathBuf;

use dorf_core::error::{Error, Result};
use dorf_core::io::{import_csi_csv, read_csi_header, read_csi_trial, write_csi_trial, CsvMetadata};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// A trial file: .csv (converted) or .csi (validated and copied).
    #[arg(long)]
    pub input: PathBuf,
    /// Directory that receives canonical trial files.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 52)]
    pub subcarriers: usize,
    #[arg(long, default_value_t = 3)]
    pub antennas: usize,
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 2.4e9)]
    pub carrier: f64,
    #[arg(long, default_value_t = 312_500.0)]
    pub spacing: f64,
    /// Subject identifier recorded in the trial header (CSV input only).
    #[arg(long, default_value_t = 0)]
    pub subject: u32,
    /// Activity label recorded in the trial header (CSV input only).
    #[arg(long, default_value_t = 0)]
    pub label: u32,
}

pub fn run(args: &IngestArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    let ext = args
        .input
        .extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let stem = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trial".into());
    let dest = args.out_dir.join(format!("{stem}.csi"));

    match ext.as_str() {
        "csv" => {
            let meta = CsvMetadata {
                n_subcarriers: args.subcarriers,
                n_antennas: args.antennas,
                sample_rate_hz: args.rate,
                carrier_hz: args.carrier,
                subcarrier_spacing_hz: args.spacing,
                subject_id: args.subject,
                activity_label: args.label,
            };
            let trial = import_csi_csv(&args.input, &meta)?;
            write_csi_trial(&trial, &dest)?;
            println!(
                "converted {} -> {} (T={} N_sub={} A={})",
                args.input.display(),
                dest.display(),
                trial.n_frames(),
                trial.n_subcarriers(),
                trial.n_antennas()
            );
        }
        "csi" => {
            // Full validation pass before accepting the file.
            let trial = read_csi_trial(&args.input)?;
            write_csi_trial(&trial, &dest)?;
            println!(
                "validated {} -> {} (T={} N_sub={} A={})",
                args.input.display(),
                dest.display(),
                trial.n_frames(),
                trial.n_subcarriers(),
                trial.n_antennas()
            );
        }
        other => {
            return Err(Error::invalid(format!(
                "unsupported input extension '{other}' (expected .csv or .csi)"
            )));
        }
    }
    print_inventory(&args.out_dir)
}

/// Prints the subjects × classes × trials inventory of a trial directory.
pub fn print_inventory(dir: &std::path::Path) -> Result<()> {
    let mut counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for entry in trial_files(dir)? {
        let header = read_csi_header(&entry)?;
        *counts
            .entry((header.subject_id, header.activity_label))
            .or_default() += 1;
    }
    let subjects: std::collections::BTreeSet<u32> = counts.keys().map(|(s, _)| *s).collect();
    let classes: std::collections::BTreeSet<u32> = counts.keys().map(|(_, c)| *c).collect();
    let total: usize = counts.values().sum();
    println!(
        "inventory: {} subjects, {} classes, {} trials",
        subjects.len(),
        classes.len(),
        total
    );
    for ((s, c), n) in &counts {
        println!("  subject {s} class {c}: {n} trials");
    }
    Ok(())
}

/// Sorted `.csi` files in a directory.
pub fn trial_files(dir: &std::path::Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "csi").unwrap_or(false))
        .collect();
    files.sort();
    Ok(files)
}
