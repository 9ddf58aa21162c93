//! Binary containers and CSV converters.
//!
//! All containers are little-endian with an 8-byte magic:
//!
//! * `DORFCSI1` — CSI trial: header `{u32 T, u32 N_sub, u32 A, f64 rate,
//!   f64 carrier, f64 spacing, u32 label, u32 subject}`, payload
//!   `T·N_sub·A` interleaved `(f32 re, f32 im)` in time-major order, then
//!   subcarrier, then antenna.
//! * `DORFVR01` — projection matrix: `{u32 T', u32 N, f64 lambda_m}` +
//!   row-major f32 payload. The container carries no time axis; the loader
//!   assigns unit-spaced window times.
//! * `DORFVF01` — factors: `{u32 T', u32 N}` + f32 payloads `V` then `R`.
//! * `DORFPF01` — merged fields: `{u32 T', u32 M, u32 antennas}` + f32
//!   payload, channel index `a·2M² + m·2M + n`.
//!
//! The CSV importer takes one row per time frame with `re,im` column pairs
//! ordered subcarrier-major, antenna-minor.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::csi::CsiTrial;
use crate::doppler::DopplerMatrix;
use crate::error::{Error, Result};
use crate::factorization::{DirectionSet, VelocityTrack};
use crate::sphere::ProjectionSet;

pub const CSI_MAGIC: &[u8; 8] = b"DORFCSI1";
pub const DOPPLER_MAGIC: &[u8; 8] = b"DORFVR01";
pub const FACTORS_MAGIC: &[u8; 8] = b"DORFVF01";
pub const FIELD_MAGIC: &[u8; 8] = b"DORFPF01";

struct Reader<'a, R: Read> {
    inner: R,
    path: &'a Path,
}

impl<'a, R: Read> Reader<'a, R> {
    fn new(inner: R, path: &'a Path) -> Self {
        Self { inner, path }
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let mut m = [0u8; 8];
        self.inner
            .read_exact(&mut m)
            .map_err(|_| Error::format(self.path, "file too short for magic"))?;
        if &m != expected {
            return Err(Error::format(
                self.path,
                format!(
                    "bad magic {:?} (expected {})",
                    String::from_utf8_lossy(&m),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::format(self.path, "truncated header"))?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::format(self.path, "truncated header"))?;
        Ok(f64::from_le_bytes(b))
    }

    fn f32_payload(&mut self, count: usize) -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; count * 4];
        self.inner
            .read_exact(&mut bytes)
            .map_err(|_| Error::format(self.path, "truncated payload"))?;
        let mut rest = [0u8; 1];
        if self.inner.read(&mut rest).unwrap_or(0) != 0 {
            return Err(Error::format(self.path, "trailing bytes after payload"));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

/// Writes a `DORFCSI1` container.
pub fn write_csi_trial(trial: &CsiTrial, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let (t, n_sub, a) = trial.samples.dim();
    w.write_all(CSI_MAGIC)?;
    for v in [t as u32, n_sub as u32, a as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [
        trial.sample_rate_hz,
        trial.carrier_hz,
        trial.subcarrier_spacing_hz,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [trial.activity_label, trial.subject_id] {
        w.write_all(&v.to_le_bytes())?;
    }
    for ti in 0..t {
        for n in 0..n_sub {
            for ai in 0..a {
                let c = trial.samples[[ti, n, ai]];
                w.write_all(&(c.re as f32).to_le_bytes())?;
                w.write_all(&(c.im as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a `DORFCSI1` container.
pub fn read_csi_trial(path: &Path) -> Result<CsiTrial> {
    let mut r = Reader::new(BufReader::new(std::fs::File::open(path)?), path);
    r.magic(CSI_MAGIC)?;
    let t = r.u32()? as usize;
    let n_sub = r.u32()? as usize;
    let a = r.u32()? as usize;
    let rate = r.f64()?;
    let carrier = r.f64()?;
    let spacing = r.f64()?;
    let label = r.u32()?;
    let subject = r.u32()?;
    let count = t
        .checked_mul(n_sub)
        .and_then(|x| x.checked_mul(a))
        .and_then(|x| x.checked_mul(2))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    let payload = r.f32_payload(count)?;
    let mut samples = Array3::zeros((t, n_sub, a));
    let mut it = payload.iter();
    for ti in 0..t {
        for n in 0..n_sub {
            for ai in 0..a {
                let re = *it.next().unwrap() as f64;
                let im = *it.next().unwrap() as f64;
                samples[[ti, n, ai]] = Complex64::new(re, im);
            }
        }
    }
    CsiTrial::new(samples, rate, carrier, spacing, subject, label)
}

/// Decoded `DORFCSI1` header without the payload.
#[derive(Debug, Clone, Copy)]
pub struct CsiHeader {
    pub n_frames: usize,
    pub n_subcarriers: usize,
    pub n_antennas: usize,
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub activity_label: u32,
    pub subject_id: u32,
}

/// Reads only the header of a `DORFCSI1` container.
pub fn read_csi_header(path: &Path) -> Result<CsiHeader> {
    let mut r = Reader::new(BufReader::new(std::fs::File::open(path)?), path);
    r.magic(CSI_MAGIC)?;
    Ok(CsiHeader {
        n_frames: r.u32()? as usize,
        n_subcarriers: r.u32()? as usize,
        n_antennas: r.u32()? as usize,
        sample_rate_hz: r.f64()?,
        carrier_hz: r.f64()?,
        subcarrier_spacing_hz: r.f64()?,
        activity_label: r.u32()?,
        subject_id: r.u32()?,
    })
}

/// Writes a `DORFVR01` container.
pub fn write_doppler_matrix(m: &DopplerMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(DOPPLER_MAGIC)?;
    w.write_all(&(m.n_windows() as u32).to_le_bytes())?;
    w.write_all(&(m.n_bins() as u32).to_le_bytes())?;
    w.write_all(&m.lambda_m.to_le_bytes())?;
    for v in m.v_r.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `DORFVR01` container. Window times are synthesized as the window
/// index since the container does not carry a time axis.
pub fn read_doppler_matrix(path: &Path) -> Result<DopplerMatrix> {
    let mut r = Reader::new(BufReader::new(std::fs::File::open(path)?), path);
    r.magic(DOPPLER_MAGIC)?;
    let t = r.u32()? as usize;
    let n = r.u32()? as usize;
    let lambda_m = r.f64()?;
    let payload = r.f32_payload(t * n)?;
    let mut v_r = Array2::zeros((t, n));
    for (idx, v) in payload.iter().enumerate() {
        v_r[[idx / n, idx % n]] = *v as f64;
    }
    Ok(DopplerMatrix {
        v_r,
        window_times: (0..t).map(|i| i as f64).collect(),
        lambda_m,
        nyquist_speed_mps: f64::INFINITY,
        antenna: 0,
        bin_indices: (0..n).collect(),
    })
}

/// Writes a `DORFVF01` container: `V` then `R`, both f32.
pub fn write_factors(v: &VelocityTrack, r: &DirectionSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(FACTORS_MAGIC)?;
    w.write_all(&(v.len() as u32).to_le_bytes())?;
    w.write_all(&(r.len() as u32).to_le_bytes())?;
    for x in v.v.iter() {
        w.write_all(&(*x as f32).to_le_bytes())?;
    }
    for x in r.r.iter() {
        w.write_all(&(*x as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `DORFVF01` container.
pub fn read_factors(path: &Path) -> Result<(VelocityTrack, DirectionSet)> {
    let mut rd = Reader::new(BufReader::new(std::fs::File::open(path)?), path);
    rd.magic(FACTORS_MAGIC)?;
    let t = rd.u32()? as usize;
    let n = rd.u32()? as usize;
    let payload = rd.f32_payload(3 * (t + n))?;
    let mut v = Array2::zeros((t, 3));
    let mut r = Array2::zeros((n, 3));
    for i in 0..t * 3 {
        v[[i / 3, i % 3]] = payload[i] as f64;
    }
    for i in 0..n * 3 {
        r[[i / 3, i % 3]] = payload[t * 3 + i] as f64;
    }
    Ok((
        VelocityTrack {
            v,
            times: (0..t).map(|i| i as f64).collect(),
        },
        DirectionSet { r },
    ))
}

/// Encodes a merged projection set as `DORFPF01` bytes.
///
/// The channel count must equal `antennas · 2M²`.
pub fn encode_projection_set(
    set: &ProjectionSet,
    m_rows: usize,
    antennas: usize,
) -> Result<Vec<u8>> {
    if set.n_channels() != antennas * 2 * m_rows * m_rows {
        return Err(Error::invalid(format!(
            "channel count {} does not equal {antennas}·2·{m_rows}²",
            set.n_channels()
        )));
    }
    let mut out = Vec::with_capacity(20 + 4 * set.data.len());
    out.extend_from_slice(FIELD_MAGIC);
    for v in [set.n_windows() as u32, m_rows as u32, antennas as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in set.data.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes `DORFPF01` bytes; `origin` names the source in errors.
pub fn decode_projection_set(bytes: &[u8], origin: &Path) -> Result<(ProjectionSet, usize, usize)> {
    let mut r = Reader::new(bytes, origin);
    r.magic(FIELD_MAGIC)?;
    let t = r.u32()? as usize;
    let m_rows = r.u32()? as usize;
    let antennas = r.u32()? as usize;
    let channels = antennas * 2 * m_rows * m_rows;
    let payload = r.f32_payload(t * channels)?;
    let mut data = Array2::zeros((t, channels));
    for (idx, v) in payload.iter().enumerate() {
        data[[idx / channels, idx % channels]] = *v as f64;
    }
    let mut provenance = Vec::with_capacity(channels);
    for a in 0..antennas {
        for m in 0..m_rows {
            for n in 0..2 * m_rows {
                provenance.push((a, m, n));
            }
        }
    }
    Ok((ProjectionSet { data, provenance }, m_rows, antennas))
}

/// Writes a `DORFPF01` container from a merged projection set.
pub fn write_projection_set(
    set: &ProjectionSet,
    m_rows: usize,
    antennas: usize,
    path: &Path,
) -> Result<()> {
    let bytes = encode_projection_set(set, m_rows, antennas)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads a `DORFPF01` container back into a projection set.
pub fn read_projection_set(path: &Path) -> Result<(ProjectionSet, usize, usize)> {
    let bytes = std::fs::read(path)?;
    decode_projection_set(&bytes, path)
}

/// Shape and metadata needed to interpret a CSI CSV file.
#[derive(Debug, Clone, Copy)]
pub struct CsvMetadata {
    pub n_subcarriers: usize,
    pub n_antennas: usize,
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subject_id: u32,
    pub activity_label: u32,
}

/// Imports a plain-text CSV trial: one row per frame, `2·N_sub·A` columns of
/// `re,im` pairs ordered subcarrier-major, antenna-minor.
pub fn import_csi_csv(path: &Path, meta: &CsvMetadata) -> Result<CsiTrial> {
    let file = std::fs::File::open(path)?;
    let want_cols = 2 * meta.n_subcarriers * meta.n_antennas;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(want_cols);
        for field in trimmed.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
                line: line_no,
                message: format!("cannot parse '{}' as a number", field.trim()),
            })?;
            row.push(v);
        }
        if row.len() % 2 != 0 {
            return Err(Error::Csv {
                line: line_no,
                message: format!("odd column count {}", row.len()),
            });
        }
        if row.len() != want_cols {
            return Err(Error::Csv {
                line: line_no,
                message: format!("expected {want_cols} columns, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            line: 0,
            message: "no rows".into(),
        });
    }
    let t = rows.len();
    let mut samples = Array3::zeros((t, meta.n_subcarriers, meta.n_antennas));
    for (ti, row) in rows.iter().enumerate() {
        for n in 0..meta.n_subcarriers {
            for a in 0..meta.n_antennas {
                let base = 2 * (n * meta.n_antennas + a);
                samples[[ti, n, a]] = Complex64::new(row[base], row[base + 1]);
            }
        }
    }
    CsiTrial::new(
        samples,
        meta.sample_rate_hz,
        meta.carrier_hz,
        meta.subcarrier_spacing_hz,
        meta.subject_id,
        meta.activity_label,
    )
}

/// Exports a projection matrix as CSV with a header row.
pub fn export_doppler_csv(m: &DopplerMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "time_s")?;
    for bin in &m.bin_indices {
        write!(w, ",bin_{bin}")?;
    }
    writeln!(w)?;
    for s in 0..m.n_windows() {
        write!(w, "{}", m.window_times[s])?;
        for i in 0..m.n_bins() {
            write!(w, ",{}", m.v_r[[s, i]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Exports one time slice of a field tensor as CSV (`m` rows, `2M` columns).
pub fn export_field_slice_csv(field: &crate::sphere::Dorf, s: usize, path: &Path) -> Result<()> {
    let (t, m_rows, n_cols) = field.p.dim();
    if s >= t {
        return Err(Error::invalid(format!(
            "slice {s} out of range for {t} windows"
        )));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "m\\n")?;
    for n in 0..n_cols {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for m in 0..m_rows {
        write!(w, "{m}")?;
        for n in 0..n_cols {
            write!(w, ",{}", field.p[[s, m, n]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Exports factors as CSV: a velocity block then a direction block.
pub fn export_factors_csv(v: &VelocityTrack, r: &DirectionSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "time_s,vx,vy,vz")?;
    for s in 0..v.len() {
        writeln!(
            w,
            "{},{},{},{}",
            v.times[s],
            v.v[[s, 0]],
            v.v[[s, 1]],
            v.v[[s, 2]]
        )?;
    }
    writeln!(w, "bin,rx,ry,rz")?;
    for i in 0..r.len() {
        writeln!(w, "{},{},{},{}", i, r.r[[i, 0]], r.r[[i, 1]], r.r[[i, 2]])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("dorf_io_{tag}_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn random_trial(t: usize, n: usize, a: usize, seed: u64) -> CsiTrial {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = Array3::from_shape_fn((t, n, a), |_| {
            Complex64::new(
                (rng.random_range(-1.0f64..1.0) * 1e4).round() / 1e4,
                (rng.random_range(-1.0f64..1.0) * 1e4).round() / 1e4,
            )
        });
        CsiTrial::new(samples, 100.0, 2.4e9, 312_500.0, 3, 1).unwrap()
    }

    #[test]
    fn csi_container_round_trips() {
        let dir = temp_dir("csi");
        let path = dir.join("trial.bin");
        let trial = random_trial(5, 8, 2, 1);
        write_csi_trial(&trial, &path).unwrap();
        let loaded = read_csi_trial(&path).unwrap();
        assert_eq!(loaded.samples.dim(), (5, 8, 2));
        assert_eq!(loaded.subject_id, 3);
        assert_eq!(loaded.activity_label, 1);
        for (a, b) in trial.samples.iter().zip(loaded.samples.iter()) {
            assert!((a.re - b.re).abs() < 1e-6 && (a.im - b.im).abs() < 1e-6);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_magic_is_named() {
        let dir = temp_dir("magic");
        let path = dir.join("bad.bin");
        std::fs::write(&path, b"NOTMAGIC extra").unwrap();
        let err = read_csi_trial(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
        assert!(err.to_string().contains("bad.bin"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_payload_is_detected() {
        let dir = temp_dir("trunc");
        let full = dir.join("full.bin");
        let trial = random_trial(3, 4, 1, 2);
        write_csi_trial(&trial, &full).unwrap();
        let bytes = std::fs::read(&full).unwrap();
        let cut = dir.join("cut.bin");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(read_csi_trial(&cut).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn doppler_container_round_trips() {
        let dir = temp_dir("vr");
        let path = dir.join("vr.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v_r = Array2::from_shape_fn((6, 4), |_| {
            (rng.random_range(-2.0f64..2.0) * 1e3).round() / 1e3
        });
        let m = DopplerMatrix {
            v_r: v_r.clone(),
            window_times: (0..6).map(|i| i as f64 * 0.16).collect(),
            lambda_m: 0.1249,
            nyquist_speed_mps: 6.25,
            antenna: 0,
            bin_indices: vec![1, 5, 7, 9],
        };
        write_doppler_matrix(&m, &path).unwrap();
        let loaded = read_doppler_matrix(&path).unwrap();
        assert_eq!(loaded.v_r.dim(), (6, 4));
        assert_eq!(loaded.lambda_m, 0.1249);
        for (a, b) in v_r.iter().zip(loaded.v_r.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn factors_container_round_trips() {
        let dir = temp_dir("vf");
        let path = dir.join("vf.bin");
        let v = VelocityTrack {
            v: Array2::from_shape_fn((4, 3), |(s, c)| (s * 3 + c) as f64 * 0.25),
            times: vec![0.0, 0.16, 0.32, 0.48],
        };
        let r = DirectionSet {
            r: Array2::from_shape_fn((2, 3), |(i, c)| if i == 0 { [1.0, 0.0, 0.0][c] } else { [0.0, 1.0, 0.0][c] }),
        };
        write_factors(&v, &r, &path).unwrap();
        let (lv, lr) = read_factors(&path).unwrap();
        assert_eq!(lv.v.dim(), (4, 3));
        assert_eq!(lr.r.dim(), (2, 3));
        for (a, b) in v.v.iter().zip(lv.v.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        for (a, b) in r.r.iter().zip(lr.r.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn field_container_round_trips() {
        use crate::factorization::VelocityTrack;
        use crate::sphere::{merge_dorfs, project_dorf, MergePolicy, SphereGrid};
        let dir = temp_dir("pf");
        let path = dir.join("pf.bin");
        let grid = SphereGrid::new(2).unwrap();
        let track = VelocityTrack {
            v: Array2::from_shape_fn((3, 3), |(s, c)| (s as f64 + 1.0) * [0.5, -0.25, 0.125][c]),
            times: vec![0.0, 1.0, 2.0],
        };
        let fields: Vec<_> = (0..2).map(|a| project_dorf(&track, &grid, a)).collect();
        let set = merge_dorfs(&fields, MergePolicy::Concat).unwrap();
        write_projection_set(&set, 2, 2, &path).unwrap();
        let (loaded, m_rows, antennas) = read_projection_set(&path).unwrap();
        assert_eq!((m_rows, antennas), (2, 2));
        assert_eq!(loaded.data.dim(), set.data.dim());
        assert_eq!(loaded.provenance, set.provenance);
        for (a, b) in set.data.iter().zip(loaded.data.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_import_round_trips_values() {
        let dir = temp_dir("csv");
        let path = dir.join("trial.csv");
        // 2 frames, 2 subcarriers, 1 antenna.
        std::fs::write(&path, "1.0,0.5,2.0,-0.5\n0.25,0.0,1.5,1.0\n").unwrap();
        let meta = CsvMetadata {
            n_subcarriers: 2,
            n_antennas: 1,
            sample_rate_hz: 100.0,
            carrier_hz: 2.4e9,
            subcarrier_spacing_hz: 312_500.0,
            subject_id: 0,
            activity_label: 2,
        };
        let trial = import_csi_csv(&path, &meta).unwrap();
        assert_eq!(trial.samples.dim(), (2, 2, 1));
        assert_eq!(trial.samples[[0, 0, 0]], Complex64::new(1.0, 0.5));
        assert_eq!(trial.samples[[1, 1, 0]], Complex64::new(1.5, 1.0));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let dir = temp_dir("csverr");
        let empty = dir.join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        let meta = CsvMetadata {
            n_subcarriers: 2,
            n_antennas: 1,
            sample_rate_hz: 100.0,
            carrier_hz: 2.4e9,
            subcarrier_spacing_hz: 312_500.0,
            subject_id: 0,
            activity_label: 0,
        };
        let err = import_csi_csv(&empty, &meta).unwrap_err();
        assert!(err.to_string().contains("no rows"), "{err}");

        let odd = dir.join("odd.csv");
        std::fs::write(&odd, "1.0,0.5,2.0,-0.5\n1.0,0.5,2.0\n").unwrap();
        let err = import_csi_csv(&odd, &meta).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let garbage = dir.join("garbage.csv");
        std::fs::write(&garbage, "1.0,abc,2.0,-0.5\n").unwrap();
        let err = import_csi_csv(&garbage, &meta).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn field_slice_csv_matches_tensor() {
        use crate::factorization::VelocityTrack;
        use crate::sphere::{project_dorf, SphereGrid};
        let dir = temp_dir("slice");
        let path = dir.join("slice.csv");
        let grid = SphereGrid::new(2).unwrap();
        let track = VelocityTrack {
            v: Array2::from_shape_fn((2, 3), |(s, c)| (s + c) as f64 * 0.5),
            times: vec![0.0, 1.0],
        };
        let field = project_dorf(&track, &grid, 0);
        export_field_slice_csv(&field, 1, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let first_cell: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert!((first_cell - field.p[[1, 0, 0]]).abs() < 1e-12);
        assert!(export_field_slice_csv(&field, 9, &path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn doppler_csv_export_has_header_and_rows() {
        let dir = temp_dir("vrcsv");
        let path = dir.join("vr.csv");
        let m = DopplerMatrix {
            v_r: Array2::from_shape_fn((2, 2), |(s, i)| (s + i) as f64),
            window_times: vec![0.1, 0.2],
            lambda_m: 0.125,
            nyquist_speed_mps: 6.25,
            antenna: 0,
            bin_indices: vec![3, 7],
        };
        export_doppler_csv(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time_s,bin_3,bin_7");
        assert_eq!(lines.next().unwrap(), "0.1,0,1");
        assert_eq!(lines.next().unwrap(), "0.2,1,2");
        std::fs::remove_dir_all(&dir).ok();
    }
}
