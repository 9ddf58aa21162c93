//! The `report` command: renders projection traces from a field container
//! and confusion heatmaps from a cross-validation report.

use clap::Args;
use ndarray::Array2;
use std::path::PathBuf;

use dorf_core::error::{Error, Result};
use dorf_core::io::read_projection_set;

use crate::plot::{confusion_heatmap, trace_grid};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A field container (.pf) to render as four projection-trace views.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// A loso_report.kv to render as a confusion heatmap.
    #[arg(long)]
    pub loso: Option<PathBuf>,
    /// Output directory for the images.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: &ReportArgs) -> Result<()> {
    if args.field.is_none() && args.loso.is_none() {
        return Err(Error::invalid("nothing to report: pass --field and/or --loso"));
    }
    std::fs::create_dir_all(&args.out_dir)?;
    if let Some(field_path) = &args.field {
        let (set, _, _) = read_projection_set(field_path)?;
        let c = set.data.dim().1;
        // Four channels spread across the sphere (and antennas, when merged).
        let picks = [0, c / 4, c / 2, 3 * c / 4];
        let traces: Vec<(String, Vec<f64>)> = picks
            .iter()
            .map(|&ch| {
                let (antenna, m, n) = set.provenance[ch];
                (
                    format!("antenna {antenna} dir ({m},{n})"),
                    set.data.column(ch).to_vec(),
                )
            })
            .collect();
        let stem = field_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "field".into());
        let out = args.out_dir.join(format!("{stem}_views.png"));
        trace_grid(&traces, &out)?;
        println!("wrote {}", out.display());
    }
    if let Some(loso_path) = &args.loso {
        let text = std::fs::read_to_string(loso_path)?;
        let confusion = parse_confusion(&text)?;
        let out = args.out_dir.join("confusion_total.png");
        confusion_heatmap(&confusion, &out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn parse_confusion(kv: &str) -> Result<Array2<f64>> {
    let mut classes = None;
    let mut cells = Vec::new();
    for line in kv.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if key == "classes" {
            classes = Some(
                value
                    .parse::<usize>()
                    .map_err(|_| Error::invalid("bad classes value"))?,
            );
        } else if let Some(rest) = key.strip_prefix("confusion_") {
            let Some((r, c)) = rest.split_once('_') else {
                continue;
            };
            let r: usize = r.parse().map_err(|_| Error::invalid("bad confusion key"))?;
            let c: usize = c.parse().map_err(|_| Error::invalid("bad confusion key"))?;
            let v: f64 = value
                .parse()
                .map_err(|_| Error::invalid("bad confusion value"))?;
            cells.push((r, c, v));
        }
    }
    let k = classes.ok_or_else(|| Error::invalid("report has no classes field"))?;
    let mut m = Array2::zeros((k, k));
    for (r, c, v) in cells {
        if r < k && c < k {
            m[[r, c]] = v;
        }
    }
    Ok(m)
}
