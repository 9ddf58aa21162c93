//! Delay-Doppler decomposition of sanitized CSI.
//!
//! An inverse DFT across subcarriers turns each frame into a delay profile
//! whose bins isolate multipath components by propagation delay. Motion adds
//! a time-varying phase to each bin, so a windowed periodogram of a bin's
//! time series peaks at the Doppler frequency of the path occupying it.
//! Converting the peak with `v_r = λ·f★` gives the radial velocity seen
//! along that path's (unknown) arrival direction; collecting all retained
//! bins over all analysis windows yields the projection matrix `V_r`.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::csi::SanitizedTrial;
use crate::error::{Error, Result};

/// Taper applied to each analysis window before the FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Taper {
    /// Symmetric Hann window (default).
    Hann,
    /// No taper.
    Rect,
}

impl Taper {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Taper::Rect => vec![1.0; len],
            Taper::Hann => {
                if len == 1 {
                    return vec![1.0];
                }
                (0..len)
                    .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (len - 1) as f64).cos()))
                    .collect()
            }
        }
    }
}

/// Windowed-periodogram parameters for Doppler estimation.
#[derive(Debug, Clone, Copy)]
pub struct SpectrogramConfig {
    /// Analysis window length in samples.
    pub window_len: usize,
    /// Hop between consecutive windows in samples.
    pub hop: usize,
    pub taper: Taper,
    /// FFT length = `window_len · zero_pad_factor`.
    pub zero_pad_factor: usize,
    /// Frequencies with `|f| < dc_guard_hz` are excluded from the peak search.
    pub dc_guard_hz: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            window_len: 128,
            hop: 16,
            taper: Taper::Hann,
            zero_pad_factor: 4,
            dc_guard_hz: 0.5,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(Error::invalid("window_len must be at least 1"));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::invalid(format!(
                "hop must satisfy 1 <= hop <= window_len, got hop={} window_len={}",
                self.hop, self.window_len
            )));
        }
        if self.zero_pad_factor == 0 {
            return Err(Error::invalid("zero_pad_factor must be at least 1"));
        }
        if !(self.dc_guard_hz.is_finite() && self.dc_guard_hz >= 0.0) {
            return Err(Error::invalid("dc_guard_hz must be finite and >= 0"));
        }
        Ok(())
    }

    /// Number of analysis windows in a series of `t_len` samples.
    pub fn n_windows(&self, t_len: usize) -> usize {
        if t_len < self.window_len {
            0
        } else {
            (t_len - self.window_len) / self.hop + 1
        }
    }

    /// Width of one FFT bin in Hz.
    pub fn freq_resolution_hz(&self, sample_rate_hz: f64) -> f64 {
        sample_rate_hz / (self.window_len * self.zero_pad_factor) as f64
    }
}

/// Per-antenna delay profile time series with its delay-bin centers.
#[derive(Debug, Clone)]
pub struct DelayProfileSeries {
    /// Complex profile, shape `[T × N_bins]`.
    pub h: Array2<Complex64>,
    /// Delay-bin centers in seconds, `tau[i] = i / (N_bins · Δf)`.
    pub tau: Vec<f64>,
    pub antenna: usize,
}

/// Delay-bin centers `τ_i = i/(N·Δf)` for `i = 0..N-1`.
pub fn delay_bin_times(n_bins: usize, delta_f_hz: f64) -> Result<Vec<f64>> {
    if n_bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    if !(delta_f_hz.is_finite() && delta_f_hz > 0.0) {
        return Err(Error::invalid(format!(
            "subcarrier spacing must be positive, got {delta_f_hz}"
        )));
    }
    Ok((0..n_bins)
        .map(|i| i as f64 / (n_bins as f64 * delta_f_hz))
        .collect())
}

/// Inverse DFT across subcarriers, one profile series per antenna.
///
/// `h(s, τ_i) = (1/N) Σ_n H_n(s) e^{+j2πnΔfτ_i}` with the bin centers of
/// [`delay_bin_times`]; the forward DFT of the output recovers the input.
pub fn delay_profile(trial: &SanitizedTrial) -> Result<Vec<DelayProfileSeries>> {
    let (t_len, n_sub, n_ant) = trial.magnitude.dim();
    if n_sub < 2 {
        return Err(Error::invalid("delay profile needs at least 2 subcarriers"));
    }
    let tau = delay_bin_times(n_sub, trial.subcarrier_spacing_hz)?;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n_sub);
    let scale = 1.0 / n_sub as f64;

    let mut out = Vec::with_capacity(n_ant);
    let mut row = vec![Complex64::default(); n_sub];
    for a in 0..n_ant {
        let mut h = Array2::default((t_len, n_sub));
        for t in 0..t_len {
            for n in 0..n_sub {
                row[n] = Complex64::from_polar(
                    trial.magnitude[[t, n, a]],
                    trial.phase[[t, n, a]],
                );
            }
            ifft.process(&mut row);
            for (dst, src) in h.row_mut(t).iter_mut().zip(row.iter()) {
                *dst = src * scale;
            }
        }
        out.push(DelayProfileSeries {
            h,
            tau: tau.clone(),
            antenna: a,
        });
    }
    Ok(out)
}

/// Result of a single-window Doppler peak search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerPeak {
    /// Signed peak frequency in Hz.
    pub freq_hz: f64,
    /// Set when the window carries no energy after mean removal.
    pub silent: bool,
}

/// Signed frequency of FFT bin `k` of an `n`-point transform.
fn bin_freq(k: usize, n: usize, sample_rate_hz: f64) -> f64 {
    let step = sample_rate_hz / n as f64;
    if k <= n / 2 {
        k as f64 * step
    } else {
        (k as f64 - n as f64) * step
    }
}

fn peak_with_plan(
    window: &[Complex64],
    cfg: &SpectrogramConfig,
    sample_rate_hz: f64,
    fft: &Arc<dyn Fft<f64>>,
    taper: &[f64],
    scratch: &mut Vec<Complex64>,
) -> Result<DopplerPeak> {
    let len = cfg.window_len;
    let mean = window.iter().sum::<Complex64>() / len as f64;
    let peak_abs = window.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
    let max_abs = window.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak_abs <= 1e-12 * max_abs {
        return Ok(DopplerPeak {
            freq_hz: 0.0,
            silent: true,
        });
    }

    let fft_len = len * cfg.zero_pad_factor;
    scratch.clear();
    scratch.extend(
        window
            .iter()
            .zip(taper.iter())
            .map(|(c, &w)| (c - mean) * w),
    );
    scratch.resize(fft_len, Complex64::default());
    fft.process(scratch);

    let mut best: Option<(f64, f64)> = None; // (power, freq)
    for (k, c) in scratch.iter().enumerate() {
        let f = bin_freq(k, fft_len, sample_rate_hz);
        if f.abs() < cfg.dc_guard_hz {
            continue;
        }
        let p = c.norm_sqr();
        let better = match best {
            None => true,
            Some((bp, bf)) => {
                p > bp
                    || (p == bp && (f.abs() < bf.abs() || (f.abs() == bf.abs() && f > bf)))
            }
        };
        if better {
            best = Some((p, f));
        }
    }
    match best {
        Some((_, f)) => Ok(DopplerPeak {
            freq_hz: f,
            silent: false,
        }),
        None => Err(Error::invalid(format!(
            "dc_guard_hz={} excludes the entire spectrum",
            cfg.dc_guard_hz
        ))),
    }
}

/// Peak of the tapered, zero-padded periodogram of the mean-removed window.
///
/// The search runs over the full signed-frequency axis, excluding
/// `|f| < dc_guard_hz`; ties go to the smaller `|f|`, then to positive `f`.
/// Uses the first `window_len` samples of `bin_series`.
pub fn doppler_peak(
    bin_series: &[Complex64],
    cfg: &SpectrogramConfig,
    sample_rate_hz: f64,
) -> Result<DopplerPeak> {
    cfg.validate()?;
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    if bin_series.len() < cfg.window_len {
        return Err(Error::invalid(format!(
            "bin series of length {} is shorter than window_len {}",
            bin_series.len(),
            cfg.window_len
        )));
    }
    if bin_series.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::invalid("bin series contains NaN or Inf"));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.window_len * cfg.zero_pad_factor);
    let taper = cfg.taper.coefficients(cfg.window_len);
    let mut scratch = Vec::new();
    peak_with_plan(
        &bin_series[..cfg.window_len],
        cfg,
        sample_rate_hz,
        &fft,
        &taper,
        &mut scratch,
    )
}

/// Which delay bins contribute columns to the projection matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinSelection {
    /// Keep every delay bin.
    All,
    /// Keep the given number of bins with the largest time-averaged AC power.
    TopPower(usize),
}

impl Default for BinSelection {
    fn default() -> Self {
        BinSelection::TopPower(20)
    }
}

/// Radial-velocity projections for one antenna: `v_r ∈ R^{T'×N}` in m/s.
#[derive(Debug, Clone)]
pub struct DopplerMatrix {
    /// Velocities, shape `[T' × N]` with `N` retained bins.
    pub v_r: Array2<f64>,
    /// Center time of each analysis window in seconds.
    pub window_times: Vec<f64>,
    /// Carrier wavelength in meters.
    pub lambda_m: f64,
    /// Largest recoverable radial speed, `λ·sample_rate/2`.
    pub nyquist_speed_mps: f64,
    /// Antenna the bins came from (first antenna for merged matrices).
    pub antenna: usize,
    /// Original delay-bin index of every retained column.
    pub bin_indices: Vec<usize>,
}

impl DopplerMatrix {
    pub fn n_windows(&self) -> usize {
        self.v_r.dim().0
    }

    pub fn n_bins(&self) -> usize {
        self.v_r.dim().1
    }

    /// Concatenates per-antenna matrices along the bin axis (joint mode).
    pub fn concat(parts: &[DopplerMatrix]) -> Result<DopplerMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let t = first.n_windows();
        if parts.iter().any(|p| p.n_windows() != t) {
            return Err(Error::invalid("window counts differ across antennas"));
        }
        let n_total: usize = parts.iter().map(|p| p.n_bins()).sum();
        let mut v_r = Array2::zeros((t, n_total));
        let mut bin_indices = Vec::with_capacity(n_total);
        let mut col = 0;
        for p in parts {
            for j in 0..p.n_bins() {
                for s in 0..t {
                    v_r[[s, col]] = p.v_r[[s, j]];
                }
                bin_indices.push(p.bin_indices[j]);
                col += 1;
            }
        }
        Ok(DopplerMatrix {
            v_r,
            window_times: first.window_times.clone(),
            lambda_m: first.lambda_m,
            nyquist_speed_mps: first.nyquist_speed_mps,
            antenna: first.antenna,
            bin_indices,
        })
    }
}

/// Extracts the per-bin radial-velocity matrix for every antenna.
///
/// Each retained bin's time series is scanned with sliding windows; each
/// window contributes `v_r = λ·f★` (0 for silent windows). With
/// [`BinSelection::TopPower`], bins are ranked by the time-averaged power of
/// their mean-removed series and the retained indices are kept in ascending
/// bin order.
pub fn radial_velocity_matrix(
    trial: &SanitizedTrial,
    cfg: &SpectrogramConfig,
    selection: BinSelection,
) -> Result<Vec<DopplerMatrix>> {
    cfg.validate()?;
    let (t_len, n_sub, _) = trial.magnitude.dim();
    if t_len < cfg.window_len {
        return Err(Error::invalid(format!(
            "trial with {t_len} frames is shorter than one {}-sample window",
            cfg.window_len
        )));
    }
    let lambda_m = trial.wavelength_m();
    let nyquist = lambda_m * trial.sample_rate_hz / 2.0;
    let n_windows = cfg.n_windows(t_len);
    let window_times: Vec<f64> = (0..n_windows)
        .map(|w| (w * cfg.hop) as f64 + (cfg.window_len - 1) as f64 / 2.0)
        .map(|s| s / trial.sample_rate_hz)
        .collect();

    let profiles = delay_profile(trial)?;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.window_len * cfg.zero_pad_factor);
    let taper = cfg.taper.coefficients(cfg.window_len);

    let mut out = Vec::with_capacity(profiles.len());
    for profile in &profiles {
        let bins = select_bins(&profile.h, selection, n_sub)?;
        let mut v_r = Array2::zeros((n_windows, bins.len()));
        let mut series = vec![Complex64::default(); t_len];
        let mut scratch = Vec::new();
        for (j, &bin) in bins.iter().enumerate() {
            for t in 0..t_len {
                series[t] = profile.h[[t, bin]];
            }
            for w in 0..n_windows {
                let start = w * cfg.hop;
                let peak = peak_with_plan(
                    &series[start..start + cfg.window_len],
                    cfg,
                    trial.sample_rate_hz,
                    &fft,
                    &taper,
                    &mut scratch,
                )?;
                v_r[[w, j]] = if peak.silent {
                    0.0
                } else {
                    lambda_m * peak.freq_hz
                };
            }
        }
        out.push(DopplerMatrix {
            v_r,
            window_times: window_times.clone(),
            lambda_m,
            nyquist_speed_mps: nyquist,
            antenna: profile.antenna,
            bin_indices: bins,
        });
    }
    Ok(out)
}

/// Time-averaged AC power ranking; returns retained bins in ascending order.
fn select_bins(
    h: &Array2<Complex64>,
    selection: BinSelection,
    n_sub: usize,
) -> Result<Vec<usize>> {
    match selection {
        BinSelection::All => Ok((0..n_sub).collect()),
        BinSelection::TopPower(b) => {
            if b == 0 {
                return Err(Error::invalid("bin budget must be at least 1"));
            }
            if b >= n_sub {
                return Ok((0..n_sub).collect());
            }
            let t_len = h.dim().0;
            let mut power: Vec<(usize, f64)> = (0..n_sub)
                .map(|i| {
                    let mean = h.column(i).sum() / t_len as f64;
                    let ac = h
                        .column(i)
                        .iter()
                        .map(|c| (c - mean).norm_sqr())
                        .sum::<f64>()
                        / t_len as f64;
                    (i, ac)
                })
                .collect();
            power.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let mut keep: Vec<usize> = power[..b].iter().map(|(i, _)| *i).collect();
            keep.sort_unstable();
            Ok(keep)
        }
    }
}
