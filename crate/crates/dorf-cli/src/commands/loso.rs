//! Leave-one-subject-out cross-validation.
//!
//! Each fold holds out one subject, splits the remaining trials into a
//! stratified train/validation pair, trains the classifier, and evaluates on
//! the held-out subject. The report carries per-subject accuracies, their
//! mean and sample standard deviation, and row-normalized confusion matrices;
//! per-trial predictions are exported as CSV. Folds run sequentially by
//! default and in parallel on request; every fold's seeds derive from the
//! subject id, so the artifacts are identical either way, and everything
//! except wall-clock timings is byte-reproducible from the global seed.

use ndarray::Array2;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use dorf_core::classifier::{build_kernel_bank, predict, stratified_split, train, Dataset};
use dorf_core::error::{Error, Result};

use crate::commands::pipeline::{run_pipeline, write_artifacts};
use crate::config::PipelineConfig;
use crate::plot::confusion_heatmap;
use crate::stages::{field_windows, pooled_features};

pub struct LosoOutcome {
    pub subjects: Vec<u32>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub confusion_total: Array2<f64>,
    pub confusion_per_fold: Vec<Array2<f64>>,
    /// `(trial stem, truth, probabilities, argmax)` for every held-out trial.
    pub predictions: Vec<(String, usize, Vec<f64>, usize)>,
    pub config_hash: u64,
    pub trials: usize,
}

pub struct Timing {
    pipeline_s: f64,
    features_s: f64,
    folds_s: Vec<f64>,
}

struct FoldResult {
    held: u32,
    accuracy: f64,
    confusion: Array2<f64>,
    predictions: Vec<(String, usize, Vec<f64>, usize)>,
    elapsed_s: f64,
}

pub fn run(cfg: &PipelineConfig, parallel_folds: bool) -> Result<()> {
    let (outcome, timing) = evaluate(cfg, parallel_folds)?;
    write_reports(cfg, &outcome, &timing)?;
    println!(
        "loso: {} folds, mean accuracy {:.2}% (std {:.2}%)",
        outcome.subjects.len(),
        100.0 * outcome.mean,
        100.0 * outcome.std
    );
    println!("report: {}", cfg.out_dir.join("loso_report.txt").display());
    Ok(())
}

pub fn evaluate(cfg: &PipelineConfig, parallel_folds: bool) -> Result<(LosoOutcome, Timing)> {
    let started = Instant::now();
    let (artifacts, cache) = run_pipeline(cfg)?;
    write_artifacts(cfg, &artifacts)?;
    let pipeline_s = started.elapsed().as_secs_f64();

    // One kernel bank for the whole run, sized to the field length.
    let t_prime = field_windows(&artifacts[0].field_bytes)?;
    let bank = build_kernel_bank(cfg.kernels, t_prime, cfg.stage_seed("kernels"))?;

    let started = Instant::now();
    let features: Vec<Vec<f64>> = artifacts
        .par_iter()
        .map(|a| pooled_features(&a.field_bytes, &bank, &cache))
        .collect::<Result<_>>()?;
    let features_s = started.elapsed().as_secs_f64();

    let d = features[0].len();
    let n = artifacts.len();
    let mut all_features = Array2::zeros((n, d));
    for (i, f) in features.iter().enumerate() {
        if f.len() != d {
            return Err(Error::invalid("inconsistent feature dimensions"));
        }
        for (j, v) in f.iter().enumerate() {
            all_features[[i, j]] = *v;
        }
    }
    let labels: Vec<usize> = artifacts.iter().map(|a| a.label as usize).collect();
    let subjects_of: Vec<u32> = artifacts.iter().map(|a| a.subject).collect();
    for (i, &l) in labels.iter().enumerate() {
        if l >= cfg.num_classes {
            return Err(Error::invalid(format!(
                "trial {}: label {l} outside {} classes",
                artifacts[i].stem, cfg.num_classes
            )));
        }
    }

    let subject_set: BTreeSet<u32> = subjects_of.iter().copied().collect();
    if subject_set.len() < 2 {
        return Err(Error::invalid("LOSO requires >=2 subjects"));
    }
    let subjects: Vec<u32> = subject_set.into_iter().collect();
    let k = cfg.num_classes;

    let dataset = Dataset {
        features: all_features,
        labels,
    };
    let stems: Vec<String> = artifacts.iter().map(|a| a.stem.clone()).collect();

    let run_fold = |held: u32| -> Result<FoldResult> {
        let fold_started = Instant::now();
        let held_idx: Vec<usize> = (0..n).filter(|&i| subjects_of[i] == held).collect();
        let rest_idx: Vec<usize> = (0..n).filter(|&i| subjects_of[i] != held).collect();
        let rest_labels: Vec<usize> = rest_idx.iter().map(|&i| dataset.labels[i]).collect();
        for class in 0..k {
            if !rest_labels.contains(&class) {
                return Err(Error::invalid(format!(
                    "fold holding out subject {held}: class {class} absent from training data"
                )));
            }
        }
        let (tr_local, va_local) = stratified_split(
            &rest_labels,
            cfg.val_fraction,
            cfg.stage_seed(&format!("valsplit_{held}")),
        )?;
        let tr_idx: Vec<usize> = tr_local.iter().map(|&i| rest_idx[i]).collect();
        let va_idx: Vec<usize> = va_local.iter().map(|&i| rest_idx[i]).collect();

        let mut train_cfg = cfg.train_config();
        train_cfg.seed = cfg.stage_seed(&format!("training_{held}"));
        let model = train(
            bank.clone(),
            &dataset.subset(&tr_idx),
            &dataset.subset(&va_idx),
            &train_cfg,
        )?;

        let mut confusion = Array2::zeros((k, k));
        let mut predictions = Vec::with_capacity(held_idx.len());
        let mut correct = 0usize;
        for &i in &held_idx {
            let row: Vec<f64> = dataset.features.row(i).to_vec();
            let probs = predict(&model, &row)?;
            let arg = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(c, _)| c)
                .unwrap_or(0);
            confusion[[dataset.labels[i], arg]] += 1.0;
            if arg == dataset.labels[i] {
                correct += 1;
            }
            predictions.push((stems[i].clone(), dataset.labels[i], probs, arg));
        }
        Ok(FoldResult {
            held,
            accuracy: correct as f64 / held_idx.len() as f64,
            confusion,
            predictions,
            elapsed_s: fold_started.elapsed().as_secs_f64(),
        })
    };

    let mut folds: Vec<FoldResult> = if parallel_folds {
        subjects
            .par_iter()
            .map(|&held| run_fold(held))
            .collect::<Result<_>>()?
    } else {
        subjects
            .iter()
            .map(|&held| run_fold(held))
            .collect::<Result<_>>()?
    };
    folds.sort_by_key(|f| f.held);

    let mut accuracies = Vec::with_capacity(folds.len());
    let mut confusion_per_fold = Vec::with_capacity(folds.len());
    let mut confusion_total = Array2::zeros((k, k));
    let mut folds_s = Vec::with_capacity(folds.len());
    let mut predictions = Vec::new();
    for fold in folds {
        accuracies.push(fold.accuracy);
        confusion_total += &fold.confusion;
        confusion_per_fold.push(fold.confusion);
        folds_s.push(fold.elapsed_s);
        predictions.extend(fold.predictions);
    }
    predictions.sort_by(|a, b| a.0.cmp(&b.0));

    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let std = if accuracies.len() > 1 {
        (accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / (accuracies.len() - 1) as f64)
            .sqrt()
    } else {
        0.0
    };

    Ok((
        LosoOutcome {
            subjects,
            accuracies,
            mean,
            std,
            confusion_total,
            confusion_per_fold,
            predictions,
            config_hash: cfg.artifact_hash(),
            trials: n,
        },
        Timing {
            pipeline_s,
            features_s,
            folds_s,
        },
    ))
}

fn write_reports(cfg: &PipelineConfig, outcome: &LosoOutcome, timing: &Timing) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let k = cfg.num_classes;

    // Machine-readable report: fully deterministic, no timing.
    let mut kv = String::new();
    let _ = writeln!(kv, "version = 1");
    let _ = writeln!(kv, "config_hash = {:016x}", outcome.config_hash);
    let _ = writeln!(kv, "subjects = {}", outcome.subjects.len());
    let _ = writeln!(kv, "classes = {k}");
    let _ = writeln!(kv, "trials = {}", outcome.trials);
    for (i, (s, acc)) in outcome
        .subjects
        .iter()
        .zip(&outcome.accuracies)
        .enumerate()
    {
        let _ = writeln!(kv, "subject_{i}_id = {s}");
        let _ = writeln!(kv, "accuracy_{i} = {acc:?}");
    }
    let _ = writeln!(kv, "accuracy_mean = {:?}", outcome.mean);
    let _ = writeln!(kv, "accuracy_std = {:?}", outcome.std);
    for r in 0..k {
        for c in 0..k {
            let _ = writeln!(
                kv,
                "confusion_{r}_{c} = {:?}",
                outcome.confusion_total[[r, c]]
            );
        }
    }
    std::fs::write(cfg.out_dir.join("loso_report.kv"), kv)?;

    // Per-trial predictions.
    let mut csv = String::from("trial,truth");
    for c in 0..k {
        let _ = write!(csv, ",p{c}");
    }
    csv.push_str(",predicted\n");
    for (stem, truth, probs, arg) in &outcome.predictions {
        let _ = write!(csv, "{stem},{truth}");
        for p in probs {
            let _ = write!(csv, ",{p:?}");
        }
        let _ = writeln!(csv, ",{arg}");
    }
    std::fs::write(cfg.out_dir.join("predictions.csv"), csv)?;

    // Human-readable report in the accuracy-table style.
    let mut txt = String::new();
    let _ = writeln!(txt, "leave-one-subject-out cross-validation");
    let _ = writeln!(txt, "config hash: {:016x}", outcome.config_hash);
    let _ = writeln!(
        txt,
        "subjects: {}, classes: {k}, trials: {}",
        outcome.subjects.len(),
        outcome.trials
    );
    let _ = writeln!(txt);
    let _ = writeln!(txt, "held-out subject    accuracy (%)");
    for (s, acc) in outcome.subjects.iter().zip(&outcome.accuracies) {
        let _ = writeln!(txt, "{s:>17}    {:>10.1}", 100.0 * acc);
    }
    let _ = writeln!(txt);
    let _ = writeln!(txt, "                    Mean    Standard Deviation");
    let _ = writeln!(
        txt,
        "accuracy (%)     {:>7.1}    {:>18.1}",
        100.0 * outcome.mean,
        100.0 * outcome.std
    );
    let _ = writeln!(txt);
    let _ = writeln!(txt, "confusion (rows = truth, cols = predicted):");
    for r in 0..k {
        let cells: Vec<String> = (0..k)
            .map(|c| format!("{:>6.0}", outcome.confusion_total[[r, c]]))
            .collect();
        let _ = writeln!(txt, "  {}", cells.join(" "));
    }
    let _ = writeln!(txt);
    let _ = writeln!(txt, "timing (excluded from determinism):");
    let _ = writeln!(txt, "  pipeline: {:.2} s", timing.pipeline_s);
    let _ = writeln!(txt, "  features: {:.2} s", timing.features_s);
    for (s, t) in outcome.subjects.iter().zip(&timing.folds_s) {
        let _ = writeln!(txt, "  fold subject {s}: {t:.2} s");
    }
    std::fs::write(cfg.out_dir.join("loso_report.txt"), txt)?;

    confusion_heatmap(
        &outcome.confusion_total,
        &cfg.out_dir.join("confusion_total.png"),
    )?;
    for (s, confusion) in outcome.subjects.iter().zip(&outcome.confusion_per_fold) {
        confusion_heatmap(
            confusion,
            &cfg.out_dir.join(format!("confusion_subject_{s}.png")),
        )?;
    }
    Ok(())
}
