//! Integration tests for the command-line surface: exit codes, ingestion
//! errors, cache behavior, and artifact determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dorf"))
}

fn tmp(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dorf_cli_{tag}_{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read_dir_sorted(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    v
}

#[test]
fn usage_error_exits_1() {
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("pipeline"));
    assert!(text.contains("loso"));
}

#[test]
fn missing_data_dir_exits_2() {
    let dir = tmp("missing");
    let out = bin()
        .args(["pipeline", "--data-dir"])
        .arg(dir.join("nope"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn synth_rejects_zero_duration() {
    let dir = tmp("dur");
    let out = bin()
        .args(["synth", "--duration", "0", "--subjects", "1", "--trials", "1", "--out-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("duration"), "{err}");
}

#[test]
fn ingest_reference_shaped_csv() {
    let dir = tmp("csv");
    // 500 frames x 52 subcarriers x 3 antennas.
    let mut text = String::new();
    for t in 0..500 {
        let row: Vec<String> = (0..52 * 3)
            .flat_map(|k| {
                let re = 1.0 + 0.001 * ((t * 7 + k) % 13) as f64;
                let im = 0.002 * ((t + k) % 5) as f64;
                [format!("{re}"), format!("{im}")]
            })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let csv = dir.join("trial.csv");
    std::fs::write(&csv, text).unwrap();
    let out_dir = dir.join("data");
    let out = bin()
        .args(["ingest", "--input"])
        .arg(&csv)
        .arg("--out-dir")
        .arg(&out_dir)
        .args(["--subcarriers", "52", "--antennas", "3", "--subject", "4", "--label", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("T=500 N_sub=52 A=3"), "{stdout}");
    let header = dorf_core::io::read_csi_header(&out_dir.join("trial.csi")).unwrap();
    assert_eq!(header.n_frames, 500);
    assert_eq!(header.subject_id, 4);
    assert_eq!(header.activity_label, 2);
}

#[test]
fn ingest_rejects_empty_and_odd_csv() {
    let dir = tmp("badcsv");
    let empty = dir.join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = bin()
        .args(["ingest", "--input"])
        .arg(&empty)
        .arg("--out-dir")
        .arg(dir.join("data"))
        .args(["--subcarriers", "2", "--antennas", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no rows"));

    let odd = dir.join("odd.csv");
    std::fs::write(&odd, "1.0,0.0,2.0,0.0\n1.0,0.5,2.0\n").unwrap();
    let out = bin()
        .args(["ingest", "--input"])
        .arg(&odd)
        .arg("--out-dir")
        .arg(dir.join("data"))
        .args(["--subcarriers", "2", "--antennas", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

fn small_synth(dir: &Path, seed: u64) {
    let out = bin()
        .args(["synth", "--subjects", "2", "--trials", "2", "--duration", "2.5"])
        .args(["--subcarriers", "16", "--moving-paths", "3", "--seed", &seed.to_string()])
        .arg("--out-dir")
        .arg(dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
}

const SMALL_PIPE: &[&str] = &[
    "--window-len", "64", "--hop", "16", "--zero-pad", "8",
    "--dc-guard-hz", "0.15", "--bins-per-antenna", "3", "--max-iters", "40",
];

#[test]
fn synth_seed_changes_content_not_shape() {
    let dir = tmp("seeds");
    small_synth(&dir.join("a"), 5);
    small_synth(&dir.join("b"), 6);
    let a = read_dir_sorted(&dir.join("a"));
    let b = read_dir_sorted(&dir.join("b"));
    assert_eq!(a.len(), b.len());
    let mut any_diff = false;
    for (pa, pb) in a.iter().zip(b.iter()) {
        assert_eq!(pa.file_name(), pb.file_name());
        let ha = dorf_core::io::read_csi_header(pa).unwrap();
        let hb = dorf_core::io::read_csi_header(pb).unwrap();
        assert_eq!(ha.n_frames, hb.n_frames);
        assert_eq!(ha.n_subcarriers, hb.n_subcarriers);
        if std::fs::read(pa).unwrap() != std::fs::read(pb).unwrap() {
            any_diff = true;
        }
    }
    assert!(any_diff, "different seeds must change the channel geometry");
}

#[test]
fn pipeline_rerun_hits_cache_and_is_deterministic() {
    let dir = tmp("cache");
    small_synth(&dir.join("data"), 5);
    let run = |out_dir: &Path| {
        let out = bin()
            .args(["pipeline", "--data-dir"])
            .arg(dir.join("data"))
            .arg("--out-dir")
            .arg(out_dir)
            .args(SMALL_PIPE)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        String::from_utf8_lossy(&out.stdout).into_owned()
    };
    let first = run(&dir.join("out1"));
    assert!(first.contains("stages executed"), "{first}");
    let second = run(&dir.join("out1"));
    assert!(second.contains("0 stages executed"), "{second}");

    // A separate output directory reproduces byte-identical fields.
    run(&dir.join("out2"));
    let fields1 = read_dir_sorted(&dir.join("out1/fields"));
    let fields2 = read_dir_sorted(&dir.join("out2/fields"));
    assert_eq!(fields1.len(), 16);
    for (a, b) in fields1.iter().zip(fields2.iter()) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}

#[test]
fn config_change_invalidates_cache() {
    let dir = tmp("inval");
    small_synth(&dir.join("data"), 6);
    let run = |extra: &[&str]| {
        let mut args: Vec<&str> = vec!["pipeline"];
        args.extend_from_slice(SMALL_PIPE);
        args.extend_from_slice(extra);
        let out = bin()
            .args(&args)
            .arg("--data-dir")
            .arg(dir.join("data"))
            .arg("--out-dir")
            .arg(dir.join("out"))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        String::from_utf8_lossy(&out.stdout).into_owned()
    };
    run(&[]);
    // Unchanged config: full cache hit.
    assert!(run(&[]).contains("0 stages executed"));
    // A factorization parameter change recomputes factorize+field only.
    let changed = run(&["--lambda", "0.2"]);
    assert!(
        changed.contains("32 stages executed"),
        "expected 2 stages x 16 trials recomputed: {changed}"
    );
}

#[test]
fn corrupted_field_artifact_is_named() {
    let dir = tmp("corrupt");
    small_synth(&dir.join("data"), 7);
    let out = bin()
        .args(["pipeline", "--data-dir"])
        .arg(dir.join("data"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(SMALL_PIPE)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let field = read_dir_sorted(&dir.join("out/fields"))[0].clone();
    std::fs::write(&field, b"NOTMAGIC garbage").unwrap();
    let out = bin()
        .args(["report", "--field"])
        .arg(&field)
        .arg("--out-dir")
        .arg(dir.join("plots"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad magic"), "{err}");
    assert!(
        err.contains(field.file_name().unwrap().to_str().unwrap()),
        "{err}"
    );
}

#[test]
fn loso_requires_two_subjects() {
    let dir = tmp("onesub");
    let out = bin()
        .args(["synth", "--subjects", "1", "--trials", "2", "--duration", "2.5"])
        .args(["--subcarriers", "16", "--moving-paths", "3"])
        .arg("--out-dir")
        .arg(dir.join("data"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin()
        .args(["loso", "--data-dir"])
        .arg(dir.join("data"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(SMALL_PIPE)
        .args(["--kernels", "50", "--max-epochs", "20", "--patience", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(">=2 subjects"));
}

#[test]
fn report_renders_trace_views() {
    let dir = tmp("plots");
    small_synth(&dir.join("data"), 8);
    bin()
        .args(["pipeline", "--data-dir"])
        .arg(dir.join("data"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(SMALL_PIPE)
        .output()
        .unwrap();
    let field = read_dir_sorted(&dir.join("out/fields"))[0].clone();
    let out = bin()
        .args(["report", "--field"])
        .arg(&field)
        .arg("--out-dir")
        .arg(dir.join("plots"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let pngs = read_dir_sorted(&dir.join("plots"));
    assert_eq!(pngs.len(), 1);
    let bytes = std::fs::read(&pngs[0]).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
}

#[test]
fn config_file_round_trip_via_flags() {
    let dir = tmp("cfgfile");
    let cfg_path = dir.join("run.cfg");
    std::fs::write(
        &cfg_path,
        "version = 1\nseed = 9\nwindow_len = 64\nhop = 16\nzero_pad = 8\nbins_per_antenna = 3\nmax_iters = 40\n",
    )
    .unwrap();
    small_synth(&dir.join("data"), 9);
    let out = bin()
        .args(["pipeline", "--config"])
        .arg(&cfg_path)
        .arg("--data-dir")
        .arg(dir.join("data"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    // Unknown keys are rejected as usage-level config errors.
    std::fs::write(&cfg_path, "version = 1\nnot_a_key = 2\n").unwrap();
    let out = bin()
        .args(["pipeline", "--config"])
        .arg(&cfg_path)
        .arg("--data-dir")
        .arg(dir.join("data"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));
}
