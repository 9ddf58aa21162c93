//! CSI data model and phase sanitization.
//!
//! Raw CSI phase is corrupted by sampling frequency offset (SFO), symbol
//! timing offset (STO), and random per-packet phase jumps. All three show up
//! as a linear trend of phase across subcarriers (slope = timing offsets,
//! intercept = common phase), so sanitization unwraps the phase along the
//! subcarrier axis and subtracts a per-frame least-squares line. Magnitudes
//! are never touched.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One gesture trial of complex CSI: `[time × subcarrier × antenna]`.
#[derive(Debug, Clone)]
pub struct CsiTrial {
    /// Complex channel gains, shape `[T × N_sub × A]`.
    pub samples: Array3<Complex64>,
    /// Frame rate in Hz.
    pub sample_rate_hz: f64,
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing_hz: f64,
    /// Opaque subject identifier.
    pub subject_id: u32,
    /// Opaque activity label.
    pub activity_label: u32,
}

impl CsiTrial {
    /// Validates shape and metadata: `T >= 1`, `N_sub >= 2`, `A >= 1`,
    /// strictly positive rates, and no non-finite entries.
    pub fn new(
        samples: Array3<Complex64>,
        sample_rate_hz: f64,
        carrier_hz: f64,
        subcarrier_spacing_hz: f64,
        subject_id: u32,
        activity_label: u32,
    ) -> Result<Self> {
        let (t, n_sub, a) = samples.dim();
        if t < 1 {
            return Err(Error::invalid("trial must contain at least one frame"));
        }
        if n_sub < 2 {
            return Err(Error::invalid(format!(
                "trial needs at least 2 subcarriers, got {n_sub}"
            )));
        }
        if a < 1 {
            return Err(Error::invalid("trial needs at least one antenna"));
        }
        for (name, v) in [
            ("sample_rate_hz", sample_rate_hz),
            ("carrier_hz", carrier_hz),
            ("subcarrier_spacing_hz", subcarrier_spacing_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if samples.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("CSI samples contain NaN or Inf"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            carrier_hz,
            subcarrier_spacing_hz,
            subject_id,
            activity_label,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.samples.dim().0
    }

    pub fn n_subcarriers(&self) -> usize {
        self.samples.dim().1
    }

    pub fn n_antennas(&self) -> usize {
        self.samples.dim().2
    }

    /// Wavelength of the carrier in meters.
    pub fn wavelength_m(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_hz
    }
}

/// Per-frame line fits recorded by sanitization, plus any subcarriers whose
/// magnitude was zero (their phase is undefined and was substituted with 0).
#[derive(Debug, Clone)]
pub struct SanitizationReport {
    /// Fitted slope in radians per subcarrier index, shape `[T × A]`.
    pub slope: Array2<f64>,
    /// Fitted intercept in radians, shape `[T × A]`.
    pub intercept: Array2<f64>,
    /// `(frame, subcarrier, antenna)` triples flagged during fitting.
    pub zero_magnitude: Vec<(usize, usize, usize)>,
}

/// A trial after phase sanitization.
///
/// Stored in polar form so the magnitude of every entry is the exact
/// magnitude of the source trial; only the phase plane is rewritten.
#[derive(Debug, Clone)]
pub struct SanitizedTrial {
    /// Entry magnitudes, bitwise equal to `|CsiTrial.samples|`.
    pub magnitude: Array3<f64>,
    /// Detrended phases in radians.
    pub phase: Array3<f64>,
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subject_id: u32,
    pub activity_label: u32,
    pub report: SanitizationReport,
}

impl SanitizedTrial {
    /// Wraps a trial that is already free of hardware phase artifacts
    /// (e.g. simulator output) without detrending anything.
    pub fn from_clean_trial(trial: &CsiTrial) -> Self {
        let dim = trial.samples.dim();
        let mut magnitude = Array3::zeros(dim);
        let mut phase = Array3::zeros(dim);
        ndarray::Zip::from(&trial.samples)
            .and(&mut magnitude)
            .and(&mut phase)
            .for_each(|c, m, p| {
                *m = c.norm();
                *p = if *m == 0.0 { 0.0 } else { c.arg() };
            });
        SanitizedTrial {
            magnitude,
            phase,
            sample_rate_hz: trial.sample_rate_hz,
            carrier_hz: trial.carrier_hz,
            subcarrier_spacing_hz: trial.subcarrier_spacing_hz,
            subject_id: trial.subject_id,
            activity_label: trial.activity_label,
            report: SanitizationReport {
                slope: Array2::zeros((dim.0, dim.2)),
                intercept: Array2::zeros((dim.0, dim.2)),
                zero_magnitude: Vec::new(),
            },
        }
    }

    pub fn n_frames(&self) -> usize {
        self.magnitude.dim().0
    }

    pub fn n_subcarriers(&self) -> usize {
        self.magnitude.dim().1
    }

    pub fn n_antennas(&self) -> usize {
        self.magnitude.dim().2
    }

    pub fn wavelength_m(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Materializes the complex samples `magnitude · e^{j·phase}`.
    pub fn to_complex(&self) -> Array3<Complex64> {
        let mut out = Array3::zeros(self.magnitude.dim());
        ndarray::Zip::from(&mut out)
            .and(&self.magnitude)
            .and(&self.phase)
            .for_each(|o, &m, &p| *o = Complex64::from_polar(m, p));
        out
    }

    /// Rewraps the sanitized samples as a `CsiTrial` (used to re-run
    /// sanitization or to feed exporters that expect raw trials).
    pub fn to_trial(&self) -> CsiTrial {
        CsiTrial {
            samples: self.to_complex(),
            sample_rate_hz: self.sample_rate_hz,
            carrier_hz: self.carrier_hz,
            subcarrier_spacing_hz: self.subcarrier_spacing_hz,
            subject_id: self.subject_id,
            activity_label: self.activity_label,
        }
    }
}

/// Unwraps a sequence of phases so consecutive differences fall in `(-π, π]`.
///
/// The first element is returned unchanged; every later element is shifted by
/// the multiple of 2π that brings its step from the previous element into the
/// half-open interval. A raw step of exactly π is kept, a raw step of exactly
/// -π becomes +π.
pub fn unwrap_phase(frame: &[f64]) -> Result<Vec<f64>> {
    if frame.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("phase vector contains NaN or Inf"));
    }
    let mut out = Vec::with_capacity(frame.len());
    let mut prev_in = match frame.first() {
        Some(&p) => {
            out.push(p);
            p
        }
        None => return Ok(out),
    };
    let mut prev_out = prev_in;
    for &p in &frame[1..] {
        let raw = p - prev_in;
        let d = if raw > -PI && raw <= PI {
            raw
        } else {
            let mut wrapped = (raw + PI).rem_euclid(2.0 * PI) - PI;
            if wrapped <= -PI {
                wrapped += 2.0 * PI;
            }
            wrapped
        };
        prev_out += d;
        out.push(prev_out);
        prev_in = p;
    }
    Ok(out)
}

/// Ordinary least-squares line `slope·x + intercept` over `x = 0..n-1`.
fn fit_line(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    // Sxx = n(n²-1)/12 in closed form.
    let sxx = n * (n * n - 1.0) / 12.0;
    if sxx == 0.0 {
        return (0.0, y_mean);
    }
    let sxy: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as f64 - x_mean) * (v - y_mean))
        .sum();
    let slope = sxy / sxx;
    (slope, y_mean - slope * x_mean)
}

/// Removes SFO/STO/common-phase artifacts from a trial.
///
/// Per frame and per antenna: phases are unwrapped across subcarriers, a
/// least-squares line in the subcarrier index is fitted and subtracted, and
/// the fit is recorded. Subcarriers with zero magnitude get phase 0 before
/// fitting and are flagged. Antennas are treated independently.
pub fn sanitize_trial(trial: &CsiTrial) -> Result<SanitizedTrial> {
    let (t_len, n_sub, n_ant) = trial.samples.dim();
    let mut magnitude = Array3::zeros((t_len, n_sub, n_ant));
    let mut phase = Array3::zeros((t_len, n_sub, n_ant));
    let mut slope = Array2::zeros((t_len, n_ant));
    let mut intercept = Array2::zeros((t_len, n_ant));
    let mut zero_magnitude = Vec::new();

    let mut raw = vec![0.0; n_sub];
    for a in 0..n_ant {
        for t in 0..t_len {
            for n in 0..n_sub {
                let c = trial.samples[[t, n, a]];
                let m = c.norm();
                magnitude[[t, n, a]] = m;
                raw[n] = if m == 0.0 {
                    zero_magnitude.push((t, n, a));
                    0.0
                } else {
                    c.arg()
                };
            }
            let unwrapped = unwrap_phase(&raw)?;
            let (s, b) = fit_line(&unwrapped);
            slope[[t, a]] = s;
            intercept[[t, a]] = b;
            for n in 0..n_sub {
                phase[[t, n, a]] = unwrapped[n] - (s * n as f64 + b);
            }
        }
    }

    Ok(SanitizedTrial {
        magnitude,
        phase,
        sample_rate_hz: trial.sample_rate_hz,
        carrier_hz: trial.carrier_hz,
        subcarrier_spacing_hz: trial.subcarrier_spacing_hz,
        subject_id: trial.subject_id,
        activity_label: trial.activity_label,
        report: SanitizationReport {
            slope,
            intercept,
            zero_magnitude,
        },
    })
}
