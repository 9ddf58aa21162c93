//! Synthetic dataset generation.
//!
//! Each synthetic subject gets its own random multipath geometry per antenna
//! (one static line-of-sight path, one static reflector, and a set of moving
//! paths parked on distinct delay bins), modeling cross-user variation. Each
//! trial draws a gesture class with per-subject and per-trial orientation,
//! amplitude, and period jitter. Everything derives from one seed.

use clap::Args;
use nalgebra::{Rotation3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

use dorf_core::doppler::delay_bin_times;
use dorf_core::error::{Error, Result};
use dorf_core::io::write_csi_trial;
use dorf_core::synth::{
    gen_csi, gen_motion, inject_phase_ramps, stack_antennas, ChannelSpec, MotionKind, MotionSpec,
    PathSpec,
};

use crate::config::fnv1a64;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory that receives the trial files.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub subjects: usize,
    /// Trials per subject per class.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Trial duration in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    /// CSI frame rate in Hz.
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 52)]
    pub subcarriers: usize,
    #[arg(long, default_value_t = 3)]
    pub antennas: usize,
    /// Moving multipath components per antenna.
    #[arg(long, default_value_t = 16)]
    pub moving_paths: usize,
    /// Complex noise std added to every CSI sample.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Base gesture amplitude in meters.
    #[arg(long, default_value_t = 0.5)]
    pub amplitude: f64,
    /// Base gesture period in seconds.
    #[arg(long, default_value_t = 4.0)]
    pub period: f64,
    /// Inject random per-frame linear phase ramps (hardware emulation).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub impair: bool,
}

fn derive(root: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut bytes = root.to_le_bytes().to_vec();
    bytes.extend_from_slice(tag.as_bytes());
    for p in parts {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fnv1a64(&bytes)
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.3 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn subject_channel(args: &SynthArgs, subject: usize, antenna: usize) -> Result<ChannelSpec> {
    let seed = derive(args.seed, "channel", &[subject as u64, antenna as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = delay_bin_times(args.subcarriers, 312_500.0)?;
    let max_paths = (args.subcarriers.saturating_sub(9)) / 2;
    if args.moving_paths == 0 || args.moving_paths > max_paths {
        return Err(Error::invalid(format!(
            "moving_paths must be in 1..={max_paths} for {} subcarriers",
            args.subcarriers
        )));
    }
    let mut paths = vec![
        PathSpec {
            gain: Complex64::new(6.0, 0.0),
            delay_s: tau[0],
            direction: [0.0, 0.0, 1.0],
            moves: false,
        },
        PathSpec {
            gain: Complex64::new(0.0, 1.2),
            delay_s: tau[args.subcarriers - 7],
            direction: [0.0, 0.0, 1.0],
            moves: false,
        },
    ];
    for i in 0..args.moving_paths {
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        paths.push(PathSpec {
            gain: Complex64::from_polar(0.5, phase),
            delay_s: tau[2 + 2 * i],
            direction: random_unit(&mut rng),
            moves: true,
        });
    }
    Ok(ChannelSpec {
        paths,
        carrier_hz: 2.4e9,
        subcarrier_spacing_hz: 312_500.0,
        n_subcarriers: args.subcarriers,
        noise_sigma: args.noise,
        seed,
    })
}

/// Class tempo bands. The factorization is identifiable only up to a global
/// rotation, so gestures that differ purely by axis orientation (the three
/// linear classes) are not separable from the recovered motion alone; real
/// gestures differ in tempo as well, and these multipliers keep the class
/// period bands disjoint under the per-trial jitter.
fn period_multiplier(kind: MotionKind) -> f64 {
    match kind {
        MotionKind::Circle => 1.0,
        MotionKind::LeftRight => 0.7,
        MotionKind::UpDown => 0.85,
        MotionKind::PushPull => 0.55,
    }
}

fn trial_motion(args: &SynthArgs, subject: usize, class: MotionKind, trial: usize) -> MotionSpec {
    let subject_seed = derive(args.seed, "orientation", &[subject as u64]);
    let mut subj_rng = ChaCha8Rng::seed_from_u64(subject_seed);
    let subj_axis = random_unit(&mut subj_rng);
    let subj_angle = subj_rng.random_range(0.0..0.4);
    let q_subject = Rotation3::new(
        Vector3::new(subj_axis[0], subj_axis[1], subj_axis[2]) * subj_angle,
    );

    let trial_seed = derive(
        args.seed,
        "motion",
        &[subject as u64, class.label() as u64, trial as u64],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let axis = random_unit(&mut rng);
    let angle = rng.random_range(0.0..0.25);
    let q_trial = Rotation3::new(Vector3::new(axis[0], axis[1], axis[2]) * angle);
    let combined = (q_subject * q_trial).scaled_axis();

    MotionSpec {
        kind: class,
        amplitude: args.amplitude * rng.random_range(0.8..1.2),
        period_s: args.period * period_multiplier(class) * rng.random_range(0.93..1.07),
        duration_s: args.duration,
        rate_hz: args.rate,
        orientation: [combined.x, combined.y, combined.z],
        seed: trial_seed,
    }
}

pub fn run(args: &SynthArgs) -> Result<()> {
    if args.subjects == 0 || args.trials == 0 {
        return Err(Error::invalid("subjects and trials must be positive"));
    }
    if !(args.duration.is_finite() && args.duration > 0.0) {
        return Err(Error::invalid("duration must be positive"));
    }
    std::fs::create_dir_all(&args.out_dir)?;

    let channels: Vec<Vec<ChannelSpec>> = (0..args.subjects)
        .map(|s| {
            (0..args.antennas)
                .map(|a| subject_channel(args, s, a))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let mut files = 0usize;
    for subject in 0..args.subjects {
        for class in MotionKind::ALL {
            for trial in 0..args.trials {
                let spec = trial_motion(args, subject, class, trial);
                let track = gen_motion(&spec)?;
                let per_antenna: Vec<_> = (0..args.antennas)
                    .map(|a| gen_csi(&track, &channels[subject][a], args.rate))
                    .collect::<Result<_>>()?;
                let mut stacked = stack_antennas(&per_antenna)?;
                stacked.subject_id = subject as u32;
                stacked.activity_label = class.label();
                let final_trial = if args.impair {
                    let ramp_seed = derive(
                        args.seed,
                        "impair",
                        &[subject as u64, class.label() as u64, trial as u64],
                    );
                    inject_phase_ramps(&stacked, 0.3, ramp_seed)
                } else {
                    stacked
                };
                let name = format!(
                    "s{subject:02}_c{}_t{trial:02}.csi",
                    class.label()
                );
                write_csi_trial(&final_trial, &args.out_dir.join(name))?;
                files += 1;
            }
        }
    }
    println!(
        "generated {} subjects x {} classes x {} trials = {files} trial files in {}",
        args.subjects,
        MotionKind::ALL.len(),
        args.trials,
        args.out_dir.display()
    );
    Ok(())
}
