//! Synthetic ground truth: motions, projection matrices, and full CSI.
//!
//! Every stage of the pipeline can be driven from known inputs generated
//! here: analytic gesture velocity tracks, direct `V_r = V Rᵀ + N` projection
//! matrices, and multipath CSI assembled from per-path gains/delays with the
//! motion-induced delay accumulated as the running integral of `v·m/c`.
//! A moving path's delay shrinks while the motion closes along its arrival
//! direction, so a positive radial speed produces a positive Doppler peak and
//! the extracted `v_r = λ·f★` reproduces `v·m` with its sign.
//!
//! A linear phase-ramp injector is included solely to exercise sanitization.

use nalgebra::{Rotation3, Vector3};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::csi::CsiTrial;
use crate::doppler::DopplerMatrix;
use crate::error::{Error, Result};
use crate::factorization::{seeded_unit_directions, DirectionSet, VelocityTrack};
use crate::SPEED_OF_LIGHT;

/// The four canonical gesture classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    Circle,
    LeftRight,
    UpDown,
    PushPull,
}

impl MotionKind {
    pub const ALL: [MotionKind; 4] = [
        MotionKind::Circle,
        MotionKind::LeftRight,
        MotionKind::UpDown,
        MotionKind::PushPull,
    ];

    pub fn label(self) -> u32 {
        match self {
            MotionKind::Circle => 0,
            MotionKind::LeftRight => 1,
            MotionKind::UpDown => 2,
            MotionKind::PushPull => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionKind::Circle => "circle",
            MotionKind::LeftRight => "left_right",
            MotionKind::UpDown => "up_down",
            MotionKind::PushPull => "push_pull",
        }
    }
}

/// Analytic trajectory parameters.
///
/// `amplitude` is the trajectory amplitude; peak speed is `amplitude·ω` with
/// `ω = 2π/period`. `orientation` is a rotation vector (axis times angle)
/// applied to the canonical trajectory. `seed` tags the description for dataset
/// generators that derive per-trial jitter; the analytic evaluation itself is
/// exact and deterministic.
#[derive(Debug, Clone, Copy)]
pub struct MotionSpec {
    pub kind: MotionKind,
    pub amplitude: f64,
    pub period_s: f64,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub orientation: [f64; 3],
    pub seed: u64,
}

impl MotionSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("period_s", self.period_s),
            ("duration_s", self.duration_s),
            ("rate_hz", self.rate_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Evaluates the analytic velocity track of a gesture.
///
/// Canonical forms with `ω = 2π/period`, `A = amplitude`:
/// circle `v(t) = Aω(−sin ωt, cos ωt, 0)`; left-right / push-pull / up-down
/// are `Aω·sin(ωt)` along x / y / z. The orientation rotation is applied to
/// every sample.
pub fn gen_motion(spec: &MotionSpec) -> Result<VelocityTrack> {
    spec.validate()?;
    let n = (spec.duration_s * spec.rate_hz).round() as usize;
    if n == 0 {
        return Err(Error::invalid("duration times rate rounds to zero samples"));
    }
    let omega = 2.0 * std::f64::consts::PI / spec.period_s;
    let peak = spec.amplitude * omega;
    let q = Rotation3::new(Vector3::new(
        spec.orientation[0],
        spec.orientation[1],
        spec.orientation[2],
    ));
    let mut v = Array2::zeros((n, 3));
    let mut times = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / spec.rate_hz;
        let phase = omega * t;
        let canonical = match spec.kind {
            MotionKind::Circle => Vector3::new(-phase.sin(), phase.cos(), 0.0) * peak,
            MotionKind::LeftRight => Vector3::new(peak * phase.sin(), 0.0, 0.0),
            MotionKind::PushPull => Vector3::new(0.0, peak * phase.sin(), 0.0),
            MotionKind::UpDown => Vector3::new(0.0, 0.0, peak * phase.sin()),
        };
        let rotated = q * canonical;
        v[[k, 0]] = rotated.x;
        v[[k, 1]] = rotated.y;
        v[[k, 2]] = rotated.z;
        times.push(t);
    }
    Ok(VelocityTrack { v, times })
}

/// `V_r = V Rᵀ + noise` against an explicit direction set.
pub fn gen_projections_with_directions(
    track: &VelocityTrack,
    directions: &DirectionSet,
    noise_sigma: f64,
    seed: u64,
) -> Result<DopplerMatrix> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::invalid("noise sigma must be finite and >= 0"));
    }
    let t_len = track.len();
    let n_dirs = directions.len();
    if t_len == 0 || n_dirs == 0 {
        return Err(Error::invalid("track and direction set must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70_72_6f_6a);
    let mut v_r = Array2::zeros((t_len, n_dirs));
    for s in 0..t_len {
        let v = Vector3::new(track.v[[s, 0]], track.v[[s, 1]], track.v[[s, 2]]);
        for i in 0..n_dirs {
            let r = Vector3::new(
                directions.r[[i, 0]],
                directions.r[[i, 1]],
                directions.r[[i, 2]],
            );
            let noise: f64 = if noise_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                noise_sigma * z
            } else {
                0.0
            };
            v_r[[s, i]] = v.dot(&r) + noise;
        }
    }
    Ok(DopplerMatrix {
        v_r,
        window_times: track.times.clone(),
        lambda_m: SPEED_OF_LIGHT / 2.4e9,
        nyquist_speed_mps: f64::INFINITY,
        antenna: 0,
        bin_indices: (0..n_dirs).collect(),
    })
}

/// Draws directions uniformly on the sphere, then `V_r = V Rᵀ + noise`.
/// Returns the matrix and the ground-truth directions.
pub fn gen_projections(
    track: &VelocityTrack,
    n_dirs: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(DopplerMatrix, DirectionSet)> {
    if n_dirs == 0 {
        return Err(Error::invalid("need at least one direction"));
    }
    let directions = seeded_unit_directions(n_dirs, seed);
    let v_r = gen_projections_with_directions(track, &directions, noise_sigma, seed)?;
    Ok((v_r, directions))
}

/// One multipath component.
#[derive(Debug, Clone, Copy)]
pub struct PathSpec {
    pub gain: Complex64,
    /// Static propagation delay in seconds, must stay inside `[0, 1/Δf)`.
    pub delay_s: f64,
    /// Unit arrival direction; a moving path is one with `moves = true`.
    pub direction: [f64; 3],
    /// Static paths keep their delay regardless of motion.
    pub moves: bool,
}

/// Channel geometry and noise for CSI synthesis.
#[derive(Debug, Clone)]
pub struct ChannelSpec {
    pub paths: Vec<PathSpec>,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    /// Std of the complex white noise added per sample (per complex entry).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::invalid("channel needs at least one path"));
        }
        if self.n_subcarriers < 2 {
            return Err(Error::invalid("channel needs at least 2 subcarriers"));
        }
        for (name, v) in [
            ("carrier_hz", self.carrier_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be finite and >= 0"));
        }
        let unambiguous = 1.0 / self.subcarrier_spacing_hz;
        for (l, p) in self.paths.iter().enumerate() {
            if !(0.0..unambiguous).contains(&p.delay_s) {
                return Err(Error::invalid(format!(
                    "path {l}: delay {} outside unambiguous range [0, {unambiguous})",
                    p.delay_s
                )));
            }
            let norm = Vector3::new(p.direction[0], p.direction[1], p.direction[2]).norm();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "path {l}: arrival direction has norm {norm}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Assembles CSI frames from the channel model.
///
/// Per sample time, every moving path's delay is its static delay minus the
/// accumulated closing displacement `∫ v·m dt / c` (trapezoidal), and
/// `H_n = Σ_l β_l e^{−j2πf_nτ_l}` with `f_n = f_c − (n − N/2)Δf`. Complex
/// white noise of the configured σ is added. Errors if any path's delay
/// leaves the unambiguous range, naming the path.
pub fn gen_csi(track: &VelocityTrack, chan: &ChannelSpec, rate_hz: f64) -> Result<CsiTrial> {
    chan.validate()?;
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let t_len = track.len();
    if t_len == 0 {
        return Err(Error::invalid("empty velocity track"));
    }
    let dt = 1.0 / rate_hz;
    if t_len >= 2 {
        let spacing = track.times[1] - track.times[0];
        if (spacing - dt).abs() > 1e-9 * dt.max(spacing) {
            return Err(Error::invalid(format!(
                "track spacing {spacing} does not match sample rate {rate_hz}"
            )));
        }
    }
    let n_sub = chan.n_subcarriers;
    let unambiguous = 1.0 / chan.subcarrier_spacing_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(chan.seed);

    // Running closing displacement per path (meters).
    let mut displacement = vec![0.0; chan.paths.len()];
    let mut samples = Array3::zeros((t_len, n_sub, 1));
    let half_n = n_sub as f64 / 2.0;
    for k in 0..t_len {
        if k > 0 {
            for (l, p) in chan.paths.iter().enumerate() {
                if !p.moves {
                    continue;
                }
                let m = Vector3::new(p.direction[0], p.direction[1], p.direction[2]);
                let prev = Vector3::new(
                    track.v[[k - 1, 0]],
                    track.v[[k - 1, 1]],
                    track.v[[k - 1, 2]],
                )
                .dot(&m);
                let cur = Vector3::new(track.v[[k, 0]], track.v[[k, 1]], track.v[[k, 2]]).dot(&m);
                displacement[l] += dt * (prev + cur) / 2.0;
            }
        }
        let mut delays = Vec::with_capacity(chan.paths.len());
        for (l, p) in chan.paths.iter().enumerate() {
            let tau = if p.moves {
                p.delay_s - displacement[l] / SPEED_OF_LIGHT
            } else {
                p.delay_s
            };
            if !(0.0..unambiguous).contains(&tau) {
                return Err(Error::invalid(format!(
                    "path {l}: delay {tau} left the unambiguous range at sample {k}"
                )));
            }
            delays.push(tau);
        }
        for n in 0..n_sub {
            let f_n = chan.carrier_hz - (n as f64 - half_n) * chan.subcarrier_spacing_hz;
            let mut h = Complex64::new(0.0, 0.0);
            for (p, &tau) in chan.paths.iter().zip(delays.iter()) {
                h += p.gain
                    * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f_n * tau);
            }
            if chan.noise_sigma > 0.0 {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                h += Complex64::new(re, im) * (chan.noise_sigma / std::f64::consts::SQRT_2);
            }
            samples[[k, n, 0]] = h;
        }
    }
    CsiTrial::new(
        samples,
        rate_hz,
        chan.carrier_hz,
        chan.subcarrier_spacing_hz,
        0,
        0,
    )
}

/// Stacks per-antenna trials generated from per-antenna channels into one
/// multi-antenna trial. All channels must agree on shape metadata.
pub fn stack_antennas(trials: &[CsiTrial]) -> Result<CsiTrial> {
    let first = trials
        .first()
        .ok_or_else(|| Error::invalid("no antennas to stack"))?;
    let (t_len, n_sub, _) = first.samples.dim();
    let mut samples = Array3::zeros((t_len, n_sub, trials.len()));
    for (a, trial) in trials.iter().enumerate() {
        if trial.samples.dim() != (t_len, n_sub, 1) {
            return Err(Error::invalid("antenna trials have mismatched shapes"));
        }
        for t in 0..t_len {
            for n in 0..n_sub {
                samples[[t, n, a]] = trial.samples[[t, n, 0]];
            }
        }
    }
    CsiTrial::new(
        samples,
        first.sample_rate_hz,
        first.carrier_hz,
        first.subcarrier_spacing_hz,
        first.subject_id,
        first.activity_label,
    )
}

/// Multiplies each frame by a random linear phase ramp across subcarriers
/// (uniform slope up to `max_slope_rad`, uniform intercept), emulating
/// SFO/STO/common-phase artifacts for sanitization tests.
pub fn inject_phase_ramps(trial: &CsiTrial, max_slope_rad: f64, seed: u64) -> CsiTrial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_len, n_sub, n_ant) = trial.samples.dim();
    let mut samples = trial.samples.clone();
    for a in 0..n_ant {
        for t in 0..t_len {
            let slope = rng.random_range(-max_slope_rad..=max_slope_rad);
            let intercept = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            for n in 0..n_sub {
                let ramp = Complex64::from_polar(1.0, slope * n as f64 + intercept);
                samples[[t, n, a]] *= ramp;
            }
        }
    }
    CsiTrial {
        samples,
        ..trial.clone()
    }
}
