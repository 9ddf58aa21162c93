//! Per-trial stage execution with content-addressed caching.
//!
//! Stages: extract (sanitize + per-bin radial velocities), factorize (per
//! antenna or joint), field (spherical resampling + antenna merge, emitted in
//! the public field container), features (random-kernel extraction + max
//! pool). Each stage's cache key chains the previous stage's key with the
//! parameters that affect it, so any relevant config change invalidates
//! exactly the stages downstream of it.

use ndarray::Array2;
use std::path::Path;

use dorf_core::classifier::{extract_features, pool_features, KernelBank};
use dorf_core::csi::sanitize_trial;
use dorf_core::doppler::{radial_velocity_matrix, DopplerMatrix};
use dorf_core::error::{Error, Result};
use dorf_core::factorization::{factorize, DirectionSet, VelocityTrack};
use dorf_core::io::{decode_projection_set, encode_projection_set, read_csi_trial};
use dorf_core::sphere::{merge_dorfs, project_dorf, MergePolicy, SphereGrid};

use crate::cache::{stage_key, Cache};
use crate::config::{fnv1a64, PipelineConfig};

const EXTRACT_MAGIC: &[u8; 4] = b"CXT1";
const FACTOR_MAGIC: &[u8; 4] = b"FXT1";

struct ByteWriter(Vec<u8>);

impl ByteWriter {
    fn new(magic: &[u8; 4]) -> Self {
        ByteWriter(magic.to_vec())
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s<'a>(&mut self, vs: impl Iterator<Item = &'a f64>) {
        for v in vs {
            self.f64(*v);
        }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: String,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 4], what: String) -> Result<Self> {
        if buf.len() < 4 || &buf[..4] != magic {
            return Err(Error::invalid(format!("{what}: bad magic")));
        }
        Ok(ByteReader { buf, pos: 4, what })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::invalid(format!("{}: truncated", self.what)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn byte_block(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

fn encode_matrices(mats: &[DopplerMatrix]) -> Vec<u8> {
    let mut w = ByteWriter::new(EXTRACT_MAGIC);
    w.u32(mats.len() as u32);
    for m in mats {
        let (t, n) = m.v_r.dim();
        w.u32(t as u32);
        w.u32(n as u32);
        w.u32(m.antenna as u32);
        w.f64(m.lambda_m);
        w.f64(m.nyquist_speed_mps);
        for &b in &m.bin_indices {
            w.u32(b as u32);
        }
        w.f64s(m.window_times.iter());
        w.f64s(m.v_r.iter());
    }
    w.0
}

fn decode_matrices(bytes: &[u8], what: &str) -> Result<Vec<DopplerMatrix>> {
    let mut r = ByteReader::new(bytes, EXTRACT_MAGIC, what.to_string())?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let t = r.u32()? as usize;
        let n = r.u32()? as usize;
        let antenna = r.u32()? as usize;
        let lambda_m = r.f64()?;
        let nyquist = r.f64()?;
        let mut bin_indices = Vec::with_capacity(n);
        for _ in 0..n {
            bin_indices.push(r.u32()? as usize);
        }
        let window_times = r.f64s(t)?;
        let flat = r.f64s(t * n)?;
        let mut v_r = Array2::zeros((t, n));
        for (i, v) in flat.into_iter().enumerate() {
            v_r[[i / n, i % n]] = v;
        }
        out.push(DopplerMatrix {
            v_r,
            window_times,
            lambda_m,
            nyquist_speed_mps: nyquist,
            antenna,
            bin_indices,
        });
    }
    Ok(out)
}

struct FactorsBundle {
    factors: Vec<(usize, VelocityTrack, DirectionSet)>,
    reports: Vec<(usize, String)>,
}

fn encode_factors(bundle: &FactorsBundle) -> Vec<u8> {
    let mut w = ByteWriter::new(FACTOR_MAGIC);
    w.u32(bundle.factors.len() as u32);
    for ((antenna, v, r), (_, report)) in bundle.factors.iter().zip(&bundle.reports) {
        w.u32(*antenna as u32);
        w.u32(v.len() as u32);
        w.u32(r.len() as u32);
        w.f64s(v.times.iter());
        w.f64s(v.v.iter());
        w.f64s(r.r.iter());
        w.bytes(report.as_bytes());
    }
    w.0
}

fn decode_factors(bytes: &[u8], what: &str) -> Result<FactorsBundle> {
    let mut rd = ByteReader::new(bytes, FACTOR_MAGIC, what.to_string())?;
    let count = rd.u32()? as usize;
    let mut factors = Vec::with_capacity(count);
    let mut reports = Vec::with_capacity(count);
    for _ in 0..count {
        let antenna = rd.u32()? as usize;
        let t = rd.u32()? as usize;
        let n = rd.u32()? as usize;
        let times = rd.f64s(t)?;
        let v_flat = rd.f64s(3 * t)?;
        let r_flat = rd.f64s(3 * n)?;
        let report = String::from_utf8_lossy(rd.byte_block()?).into_owned();
        let mut v = Array2::zeros((t, 3));
        for (i, x) in v_flat.into_iter().enumerate() {
            v[[i / 3, i % 3]] = x;
        }
        let mut r = Array2::zeros((n, 3));
        for (i, x) in r_flat.into_iter().enumerate() {
            r[[i / 3, i % 3]] = x;
        }
        factors.push((antenna, VelocityTrack { v, times }, DirectionSet { r }));
        reports.push((antenna, report));
    }
    Ok(FactorsBundle { factors, reports })
}

fn extract_params(cfg: &PipelineConfig) -> String {
    format!(
        "window={} hop={} zp={} guard={:?} taper={:?} bins={} antenna={:?}",
        cfg.window_len,
        cfg.hop,
        cfg.zero_pad,
        cfg.dc_guard_hz,
        cfg.taper,
        cfg.bins_per_antenna,
        cfg.antenna
    )
}

fn factor_params(cfg: &PipelineConfig) -> String {
    format!(
        "lambda={:?} gamma={:?} epsilon={:?} iters={} band={:?} joint={} seed={}",
        cfg.lambda,
        cfg.gamma,
        cfg.epsilon,
        cfg.max_iters,
        cfg.dtw_band,
        cfg.joint_factorization,
        cfg.stage_seed("factorization")
    )
}

/// Everything the pipeline produces for one trial.
pub struct TrialArtifacts {
    pub stem: String,
    pub subject: u32,
    pub label: u32,
    /// Public field container bytes (`DORFPF01`).
    pub field_bytes: Vec<u8>,
    pub fit_reports: Vec<(usize, String)>,
}

/// Runs extract → factorize → field for one trial file, using the cache.
pub fn process_trial(
    trial_path: &Path,
    cfg: &PipelineConfig,
    cache: &Cache,
) -> Result<TrialArtifacts> {
    let stem = trial_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trial".into());
    let trial_bytes = std::fs::read(trial_path)?;
    let trial_hash = fnv1a64(&trial_bytes);
    let header = dorf_core::io::read_csi_header(trial_path)?;

    let extract_key = stage_key(trial_hash, &extract_params(cfg));
    let extract_bytes = cache.get_or_compute("extract", extract_key, || {
        let trial = read_csi_trial(trial_path)?;
        let clean = sanitize_trial(&trial)?;
        let mut mats = radial_velocity_matrix(&clean, &cfg.spectrogram(), cfg.bin_selection())
            .map_err(|e| Error::invalid(format!("{}: {e}", trial_path.display())))?;
        if let Some(a) = cfg.antenna {
            if a >= mats.len() {
                return Err(Error::invalid(format!(
                    "{}: antenna {a} out of range ({} available)",
                    trial_path.display(),
                    mats.len()
                )));
            }
            mats = vec![mats.swap_remove(a)];
        }
        Ok(encode_matrices(&mats))
    })?;

    let factor_key = stage_key(extract_key, &factor_params(cfg));
    let factor_bytes = cache.get_or_compute("factorize", factor_key, || {
        let mats = decode_matrices(
            &extract_bytes,
            &format!("cache entry extract/{extract_key:016x}"),
        )?;
        let fac_cfg = cfg.factorization();
        let inputs: Vec<DopplerMatrix> = if cfg.joint_factorization {
            vec![DopplerMatrix::concat(&mats)?]
        } else {
            mats
        };
        let mut bundle = FactorsBundle {
            factors: Vec::new(),
            reports: Vec::new(),
        };
        for m in &inputs {
            let (v, r, report) = factorize(m, &fac_cfg)
                .map_err(|e| Error::numeric(format!("{stem} antenna {}: {e}", m.antenna)))?;
            bundle.factors.push((m.antenna, v, r));
            bundle.reports.push((m.antenna, report.to_key_value()));
        }
        Ok(encode_factors(&bundle))
    })?;

    let field_key = stage_key(factor_key, &format!("grid_m={}", cfg.grid_m));
    let field_bytes = cache.get_or_compute("field", field_key, || {
        let bundle = decode_factors(
            &factor_bytes,
            &format!("cache entry factorize/{factor_key:016x}"),
        )?;
        let grid = SphereGrid::new(cfg.grid_m)?;
        let fields: Vec<_> = bundle
            .factors
            .iter()
            .map(|(antenna, v, _)| project_dorf(v, &grid, *antenna))
            .collect();
        let merged = merge_dorfs(&fields, MergePolicy::Concat)?;
        // Serialize through the public container for bit-stable artifacts.
        encode_projection_set(&merged, cfg.grid_m, fields.len())
    })?;

    let bundle = decode_factors(
        &factor_bytes,
        &format!("cache entry factorize/{factor_key:016x}"),
    )?;
    Ok(TrialArtifacts {
        stem,
        subject: header.subject_id,
        label: header.activity_label,
        field_bytes,
        fit_reports: bundle.reports,
    })
}

/// Pooled feature vector of one trial, computed from its field container
/// bytes and cached by content.
pub fn pooled_features(
    field_bytes: &[u8],
    bank: &KernelBank,
    cache: &Cache,
) -> Result<Vec<f64>> {
    let key = stage_key(
        fnv1a64(field_bytes),
        &format!(
            "kernels={} seed={} input_len={}",
            bank.len(),
            bank.seed,
            bank.input_len
        ),
    );
    let bytes = cache.get_or_compute("features", key, || {
        let (set, _, _) =
            decode_projection_set(field_bytes, Path::new("cached field bytes"))?;
        let fm = extract_features(&set.data, bank)?;
        let pooled = pool_features(&fm)?;
        let mut out = Vec::with_capacity(pooled.len() * 8);
        for v in &pooled {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    })?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Windows in the field container without fully decoding it.
pub fn field_windows(field_bytes: &[u8]) -> Result<usize> {
    if field_bytes.len() < 12 || &field_bytes[..8] != dorf_core::io::FIELD_MAGIC {
        return Err(Error::invalid("field bytes: bad magic"));
    }
    Ok(u32::from_le_bytes(field_bytes[8..12].try_into().unwrap()) as usize)
}
