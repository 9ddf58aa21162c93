//! Random convolutional kernel features for projection time series.
//!
//! Follows the standard random-kernel recipe: normal weights centered to zero
//! mean, uniform bias in [-1, 1], lengths drawn from {7, 9, 11}, dyadic
//! dilations bounded so the receptive field fits the input length, and a
//! random padding flag. Each (channel, kernel) pair yields two statistics:
//! the maximum activation and the proportion of positive activations.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const CANDIDATE_LENGTHS: [usize; 3] = [7, 9, 11];

/// One random convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    /// Mean-centered weights, length in {7, 9, 11}.
    pub weights: Vec<f64>,
    /// Bias drawn uniformly from [-1, 1].
    pub bias: f64,
    /// Power-of-two dilation.
    pub dilation: usize,
    /// Zero-pad the series so the output keeps the input length.
    pub padding: bool,
}

impl Kernel {
    /// Receptive field `(len-1)·dilation + 1`.
    pub fn receptive_field(&self) -> usize {
        (self.weights.len() - 1) * self.dilation + 1
    }
}

/// A reproducible bank of random kernels for inputs of a fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    pub kernels: Vec<Kernel>,
    pub seed: u64,
    /// Series length the dilation bound was drawn for.
    pub input_len: usize,
}

impl KernelBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Features per channel: two statistics per kernel.
    pub fn feature_dim(&self) -> usize {
        2 * self.kernels.len()
    }
}

/// Draws `count` kernels deterministically from `seed` for series of length
/// `input_len`. Dilations are capped so every receptive field fits.
pub fn build_kernel_bank(count: usize, input_len: usize, seed: u64) -> Result<KernelBank> {
    if count == 0 {
        return Err(Error::invalid("kernel count must be at least 1"));
    }
    let usable: Vec<usize> = CANDIDATE_LENGTHS
        .iter()
        .copied()
        .filter(|&l| l <= input_len)
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid(format!(
            "input length {input_len} is shorter than the smallest kernel ({})",
            CANDIDATE_LENGTHS[0]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernels = Vec::with_capacity(count);
    for _ in 0..count {
        let len = usable[rng.random_range(0..usable.len())];
        let mut weights: Vec<f64> = (0..len)
            .map(|_| {
                use rand_distr::{Distribution, StandardNormal};
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let mean = weights.iter().sum::<f64>() / len as f64;
        for w in weights.iter_mut() {
            *w -= mean;
        }
        let bias = rng.random_range(-1.0..=1.0);
        let max_exp = max_dilation_exponent(input_len, len);
        let dilation = 1usize << rng.random_range(0..=max_exp);
        let padding = rng.random_bool(0.5);
        kernels.push(Kernel {
            weights,
            bias,
            dilation,
            padding,
        });
    }
    Ok(KernelBank {
        kernels,
        seed,
        input_len,
    })
}

/// Largest `a` with `(len-1)·2^a + 1 <= input_len`.
fn max_dilation_exponent(input_len: usize, kernel_len: usize) -> u32 {
    let cap = (input_len - 1) / (kernel_len - 1);
    if cap <= 1 {
        0
    } else {
        cap.ilog2()
    }
}

/// Per-channel feature rows, shape `[C × 2D]`.
///
/// Feature `2k` is kernel `k`'s maximum activation, feature `2k+1` its
/// proportion of positive activations.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub f: Array2<f64>,
}

impl FeatureMatrix {
    pub fn n_channels(&self) -> usize {
        self.f.dim().0
    }

    pub fn feature_dim(&self) -> usize {
        self.f.dim().1
    }
}

/// Convolves every channel of `projections` (`[T' × C]`) against every
/// kernel and collects the two summary statistics per pair.
pub fn extract_features(projections: &Array2<f64>, bank: &KernelBank) -> Result<FeatureMatrix> {
    let (t_len, n_channels) = projections.dim();
    if t_len < 2 {
        return Err(Error::invalid("need at least 2 time steps per channel"));
    }
    if n_channels == 0 {
        return Err(Error::invalid("no projection channels"));
    }
    for k in &bank.kernels {
        if !k.padding && k.receptive_field() > t_len {
            return Err(Error::invalid(format!(
                "series of length {t_len} is shorter than an unpadded receptive field of {}",
                k.receptive_field()
            )));
        }
    }
    if projections.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("projections contain NaN or Inf"));
    }

    let mut f = Array2::zeros((n_channels, bank.feature_dim()));
    let mut series = vec![0.0; t_len];
    for c in 0..n_channels {
        for (t, v) in series.iter_mut().enumerate() {
            *v = projections[[t, c]];
        }
        for (k_idx, kernel) in bank.kernels.iter().enumerate() {
            let (max, ppv) = apply_kernel(&series, kernel);
            f[[c, 2 * k_idx]] = max;
            f[[c, 2 * k_idx + 1]] = ppv;
        }
    }
    Ok(FeatureMatrix { f })
}

/// (max activation, proportion of positive activations) for one series.
fn apply_kernel(series: &[f64], kernel: &Kernel) -> (f64, f64) {
    let t_len = series.len() as isize;
    let len = kernel.weights.len() as isize;
    let d = kernel.dilation as isize;
    let (first, count) = if kernel.padding {
        let pad = ((len - 1) * d) / 2;
        (-pad, series.len())
    } else {
        (0, series.len() - (len as usize - 1) * kernel.dilation)
    };
    let mut max = f64::NEG_INFINITY;
    let mut positive = 0usize;
    for p in 0..count as isize {
        let mut acc = kernel.bias;
        let base = first + p;
        for (k, &w) in kernel.weights.iter().enumerate() {
            let idx = base + k as isize * d;
            if idx >= 0 && idx < t_len {
                acc += w * series[idx as usize];
            }
        }
        if acc > max {
            max = acc;
        }
        if acc > 0.0 {
            positive += 1;
        }
    }
    (max, positive as f64 / count as f64)
}

/// Element-wise maximum across the channel axis.
pub fn pool_features(features: &FeatureMatrix) -> Result<Vec<f64>> {
    let (c, d) = features.f.dim();
    if c == 0 {
        return Err(Error::invalid("cannot pool zero channels"));
    }
    let mut pooled = vec![f64::NEG_INFINITY; d];
    for row in features.f.rows() {
        for (p, &v) in pooled.iter_mut().zip(row.iter()) {
            if v > *p {
                *p = v;
            }
        }
    }
    Ok(pooled)
}
