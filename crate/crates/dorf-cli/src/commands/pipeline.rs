//! The `pipeline` command: sanitize → radial velocities → factorize →
//! spherical resampling → antenna merge, per trial, with cached stages.

use rayon::prelude::*;
use std::path::Path;

use dorf_core::error::{Error, Result};

use crate::cache::Cache;
use crate::commands::ingest::trial_files;
use crate::config::PipelineConfig;
use crate::stages::{process_trial, TrialArtifacts};

/// Runs every trial through the pipeline; returns the artifacts in
/// deterministic (file-name) order plus the number of executed stages.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(Vec<TrialArtifacts>, Cache)> {
    cfg.validate()?;
    let files = trial_files(&cfg.data_dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no .csi trial files in {}",
            cfg.data_dir.display()
        )));
    }
    let cache = Cache::new(&cfg.out_dir)?;
    let mut artifacts: Vec<TrialArtifacts> = files
        .par_iter()
        .map(|path| {
            process_trial(path, cfg, &cache)
                .map_err(|e| Error::invalid(format!("trial {}: {e}", path.display())))
        })
        .collect::<Result<_>>()?;
    artifacts.sort_by(|a, b| a.stem.cmp(&b.stem));
    Ok((artifacts, cache))
}

/// Writes field containers and fit reports for every trial.
pub fn write_artifacts(cfg: &PipelineConfig, artifacts: &[TrialArtifacts]) -> Result<()> {
    let fields_dir = cfg.out_dir.join("fields");
    let reports_dir = cfg.out_dir.join("reports");
    std::fs::create_dir_all(&fields_dir)?;
    std::fs::create_dir_all(&reports_dir)?;
    for artifact in artifacts {
        write_if_changed(
            &fields_dir.join(format!("{}.pf", artifact.stem)),
            &artifact.field_bytes,
        )?;
        for (antenna, report) in &artifact.fit_reports {
            write_if_changed(
                &reports_dir.join(format!("{}_a{antenna}.txt", artifact.stem)),
                report.as_bytes(),
            )?;
        }
    }
    Ok(())
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Ok(existing) = std::fs::read(path) {
        if existing == bytes {
            return Ok(());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn run(cfg: &PipelineConfig) -> Result<()> {
    let (artifacts, cache) = run_pipeline(cfg)?;
    write_artifacts(cfg, &artifacts)?;
    let executed = cache.misses();
    if executed == 0 {
        println!(
            "pipeline: {} trials, 0 stages executed (all {} cached)",
            artifacts.len(),
            cache.hits()
        );
    } else {
        println!(
            "pipeline: {} trials, {executed} stages executed, {} cache hits",
            artifacts.len(),
            cache.hits()
        );
    }
    println!(
        "fields in {}, fit reports in {}",
        cfg.out_dir.join("fields").display(),
        cfg.out_dir.join("reports").display()
    );
    Ok(())
}
