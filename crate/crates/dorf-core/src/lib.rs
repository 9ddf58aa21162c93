//! Doppler radiance fields (DoRFs) from Wi-Fi channel state information.
//!
//! The pipeline turns complex CSI trials into a geometry-independent motion
//! representation and classifies the performed activity:
//!
//! 1. [`csi`] — phase sanitization (unwrap + per-frame linear detrend).
//! 2. [`doppler`] — IDFT delay profiles and per-delay-bin radial Doppler
//!    velocities, giving the projection matrix `V_r ∈ R^{T'×N}`.
//! 3. [`factorization`] — constrained alternating least squares recovering a
//!    3D velocity track `V` and unit directions `R` with `V_r ≈ V Rᵀ`.
//! 4. [`sphere`] — resampling of the track onto a uniform spherical grid,
//!    yielding the DoRF tensor `P ∈ R^{T'×M×2M}`.
//! 5. [`classifier`] — random convolutional kernel features, max pooling
//!    across projections, and a shallow dense network.
//!
//! [`synth`] generates ground-truth motions, projection matrices, and full
//! synthetic CSI so every stage can be verified against known inputs, and
//! [`io`] holds the binary trial/matrix/field containers and CSV converters.

pub mod classifier;
pub mod csi;
pub mod doppler;
pub mod error;
pub mod factorization;
pub mod io;
pub mod sphere;
pub mod synth;

pub use classifier::{
    build_kernel_bank, extract_features, pool_features, predict, train, Dataset, FeatureMatrix,
    KernelBank, Model, TrainConfig,
};
pub use csi::{sanitize_trial, unwrap_phase, CsiTrial, SanitizationReport, SanitizedTrial};
pub use doppler::{
    delay_bin_times, delay_profile, doppler_peak, radial_velocity_matrix, BinSelection,
    DelayProfileSeries, DopplerMatrix, DopplerPeak, SpectrogramConfig, Taper,
};
pub use error::{Error, Result};
pub use factorization::{
    direction_update, dtw_loss, factorize, procrustes_align, seeded_unit_directions,
    velocity_update, DirectionSet, FactorizationConfig, FitReport, StopReason, VelocityTrack,
};
pub use sphere::{merge_dorfs, project_dorf, Dorf, MergePolicy, ProjectionSet, SphereGrid};
pub use synth::{gen_csi, gen_motion, gen_projections, ChannelSpec, MotionKind, MotionSpec, PathSpec};

/// Speed of light in m/s, used for wavelength and delay conversions.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
