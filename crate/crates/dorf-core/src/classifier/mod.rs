//! Activity classification over pooled projection features.
//!
//! A trial's merged projection set is turned into one feature vector by the
//! random-kernel extractor ([`kernels`]) followed by an element-wise max pool
//! across channels, which makes the representation invariant to the order,
//! repetition, and global relabeling of projections. A shallow dense network
//! ([`network`]) maps pooled features to class probabilities.

pub mod kernels;
pub mod network;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
pub use kernels::{build_kernel_bank, extract_features, pool_features, FeatureMatrix, Kernel, KernelBank};
pub use network::{Gradients, Network, NetworkDims};

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub weight_decay: f64,
    pub reduced_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// Standardize features to zero mean / unit variance on the train split.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            label_smoothing: 0.1,
            max_epochs: 2500,
            patience: 200,
            weight_decay: 0.01,
            reduced_dim: 128,
            hidden_dim: 256,
            num_classes: 4,
            standardize: true,
            seed: 0,
        }
    }
}

/// Labeled pooled-feature rows, one per trial.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Shape `[n_trials × d]`.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.features.dim().1;
        let mut features = Array2::zeros((indices.len(), d));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            for j in 0..d {
                features[[row, j]] = self.features[[i, j]];
            }
            labels.push(self.labels[i]);
        }
        Dataset { features, labels }
    }
}

/// Per-feature affine normalization fitted on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    fn fit(features: &Array2<f64>) -> Normalizer {
        let (n, d) = features.dim();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for j in 0..d {
            let col_mean = features.column(j).sum() / n as f64;
            let var = features
                .column(j)
                .iter()
                .map(|&x| (x - col_mean) * (x - col_mean))
                .sum::<f64>()
                / n as f64;
            mean[j] = col_mean;
            let s = var.sqrt();
            std[j] = if s > 1e-12 { s } else { 1.0 };
        }
        Normalizer { mean, std }
    }

    fn apply_matrix(&self, features: &Array2<f64>) -> Array2<f64> {
        let mut out = features.clone();
        for j in 0..self.mean.len() {
            for i in 0..out.dim().0 {
                out[[i, j]] = (out[[i, j]] - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &x)| (x - self.mean[j]) / self.std[j])
            .collect()
    }
}

/// A trained classifier: kernel bank, optional normalizer, network, config.
#[derive(Debug, Clone)]
pub struct Model {
    pub bank: KernelBank,
    pub normalizer: Option<Normalizer>,
    pub network: Network,
    pub config: TrainConfig,
    /// Best validation loss seen during training.
    pub best_val_loss: f64,
    /// Epochs actually run.
    pub epochs_run: usize,
}

impl Model {
    /// Probabilities from a trial's merged projection set `[T' × C]`.
    pub fn predict_from_projections(&self, projections: &Array2<f64>) -> Result<Vec<f64>> {
        let fm = extract_features(projections, &self.bank)?;
        let pooled = pool_features(&fm)?;
        predict(self, &pooled)
    }
}

/// Class distribution for one pooled feature vector.
pub fn predict(model: &Model, pooled: &[f64]) -> Result<Vec<f64>> {
    let input = match &model.normalizer {
        Some(n) => {
            if pooled.len() != n.mean.len() {
                return Err(Error::invalid(format!(
                    "feature dimension {} does not match model input {}",
                    pooled.len(),
                    n.mean.len()
                )));
            }
            n.apply_row(pooled)
        }
        None => pooled.to_vec(),
    };
    model.network.predict(&input)
}

/// Trains the shallow network on pooled features.
///
/// Keeps the weights with the lowest validation loss; stops early after
/// `patience` epochs without improvement. Deterministic for a fixed
/// `(data, config)` pair: initialization, batch order, and the update
/// sequence all derive from `config.seed`.
pub fn train(
    bank: KernelBank,
    train_data: &Dataset,
    val_data: &Dataset,
    config: &TrainConfig,
) -> Result<Model> {
    if train_data.is_empty() || val_data.is_empty() {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }
    if config.batch_size == 0 || config.max_epochs == 0 {
        return Err(Error::invalid("batch_size and max_epochs must be positive"));
    }
    let d = train_data.features.dim().1;
    if val_data.features.dim().1 != d {
        return Err(Error::invalid("train/validation feature dimensions differ"));
    }
    let k = config.num_classes;
    let mut present = vec![false; k];
    for &l in &train_data.labels {
        if l >= k {
            return Err(Error::invalid(format!("label {l} outside {k} classes")));
        }
        present[l] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::invalid("training split needs at least 2 classes"));
    }
    if val_data.labels.iter().any(|&l| l >= k) {
        return Err(Error::invalid("validation label outside class range"));
    }

    let normalizer = config.standardize.then(|| Normalizer::fit(&train_data.features));
    let x_train = match &normalizer {
        Some(n) => n.apply_matrix(&train_data.features),
        None => train_data.features.clone(),
    };
    let x_val = match &normalizer {
        Some(n) => n.apply_matrix(&val_data.features),
        None => val_data.features.clone(),
    };

    let dims = NetworkDims {
        input: d,
        reduced: config.reduced_dim,
        hidden: config.hidden_dim,
        classes: k,
    };
    let mut net = Network::new(dims, config.seed)?;
    let n_params = network::flatten_params(&net).len();
    let mut opt = network::AdamW::new(config.learning_rate, config.weight_decay, n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));

    let n = train_data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best_val = f64::INFINITY;
    let mut best_params = network::flatten_params(&net);
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut params = network::flatten_params(&net);
        for chunk in order.chunks(config.batch_size) {
            let mut xb = Array2::zeros((chunk.len(), d));
            let mut yb = Vec::with_capacity(chunk.len());
            for (row, &i) in chunk.iter().enumerate() {
                for j in 0..d {
                    xb[[row, j]] = x_train[[i, j]];
                }
                yb.push(train_data.labels[i]);
            }
            let (loss, grads) = net.loss_and_grad(&xb, &yb, config.label_smoothing)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("training loss diverged to {loss}"),
                });
            }
            let flat_grads = network::flatten_grads(&grads);
            opt.step(&mut params, &flat_grads);
            network::unflatten_params(&mut net, &params);
        }

        let val_loss = net.loss(&x_val, &val_data.labels, config.label_smoothing)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("validation loss diverged to {val_loss}"),
            });
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_params = network::flatten_params(&net);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    network::unflatten_params(&mut net, &best_params);
    Ok(Model {
        bank,
        normalizer,
        network: net,
        config: *config,
        best_val_loss: best_val,
        epochs_run,
    })
}

/// Deterministic stratified split: per class, a seeded shuffle sends
/// `round(val_fraction · n_class)` trials (at least 1 when the class has at
/// least 2) to validation. Returns `(train_indices, val_indices)`, sorted.
pub fn stratified_split(
    labels: &[usize],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::invalid("val_fraction must be in [0, 1)"));
    }
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); max_label + 1];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for members in per_class.iter_mut() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let want = (val_fraction * members.len() as f64).round() as usize;
        let n_val = if members.len() >= 2 && val_fraction > 0.0 {
            want.clamp(1, members.len() - 1)
        } else {
            0
        };
        val_idx.extend_from_slice(&members[..n_val]);
        train_idx.extend_from_slice(&members[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((train_idx, val_idx))
}

const MODEL_MAGIC: &[u8; 8] = b"DORFMD01";

impl Model {
    /// Writes the versioned binary model container.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MODEL_MAGIC)?;
        let c = &self.config;
        for v in [
            c.learning_rate,
            c.label_smoothing,
            c.weight_decay,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [
            c.batch_size as u64,
            c.max_epochs as u64,
            c.patience as u64,
            c.reduced_dim as u64,
            c.hidden_dim as u64,
            c.num_classes as u64,
            c.standardize as u64,
            c.seed,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        // The bank is reproducible from (count, input_len, seed) alone.
        for v in [self.bank.len() as u64, self.bank.input_len as u64, self.bank.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        match &self.normalizer {
            None => w.write_all(&0u64.to_le_bytes())?,
            Some(n) => {
                w.write_all(&(n.mean.len() as u64).to_le_bytes())?;
                for v in n.mean.iter().chain(n.std.iter()) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        let dims = self.network.dims;
        for v in [
            dims.input as u64,
            dims.reduced as u64,
            dims.hidden as u64,
            dims.classes as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in network::flatten_params(&self.network) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.best_val_loss.to_le_bytes())?;
        w.write_all(&(self.epochs_run as u64).to_le_bytes())?;
        Ok(())
    }

    /// Reads a model container written by [`Model::write_to`].
    pub fn read_from(path: &Path) -> Result<Model> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format(path, "truncated header"))?;
        if &magic != MODEL_MAGIC {
            return Err(Error::format(path, "bad magic (expected DORFMD01)"));
        }
        let mut f64_buf = [0u8; 8];
        let mut read_f64 = |r: &mut dyn Read| -> Result<f64> {
            r.read_exact(&mut f64_buf)
                .map_err(|_| Error::format(path, "truncated payload"))?;
            Ok(f64::from_le_bytes(f64_buf))
        };
        let learning_rate = read_f64(&mut r)?;
        let label_smoothing = read_f64(&mut r)?;
        let weight_decay = read_f64(&mut r)?;
        let mut u64_buf = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut u64_buf)
                .map_err(|_| Error::format(path, "truncated payload"))?;
            Ok(u64::from_le_bytes(u64_buf))
        };
        let batch_size = read_u64(&mut r)? as usize;
        let max_epochs = read_u64(&mut r)? as usize;
        let patience = read_u64(&mut r)? as usize;
        let reduced_dim = read_u64(&mut r)? as usize;
        let hidden_dim = read_u64(&mut r)? as usize;
        let num_classes = read_u64(&mut r)? as usize;
        let standardize = read_u64(&mut r)? != 0;
        let seed = read_u64(&mut r)?;
        let bank_count = read_u64(&mut r)? as usize;
        let bank_input_len = read_u64(&mut r)? as usize;
        let bank_seed = read_u64(&mut r)?;
        let bank = build_kernel_bank(bank_count, bank_input_len, bank_seed)?;

        let norm_len = read_u64(&mut r)? as usize;
        let normalizer = if norm_len == 0 {
            None
        } else {
            let mut mean = vec![0.0; norm_len];
            let mut std = vec![0.0; norm_len];
            for v in mean.iter_mut() {
                *v = read_f64(&mut r)?;
            }
            for v in std.iter_mut() {
                *v = read_f64(&mut r)?;
            }
            Some(Normalizer { mean, std })
        };

        let dims = NetworkDims {
            input: read_u64(&mut r)? as usize,
            reduced: read_u64(&mut r)? as usize,
            hidden: read_u64(&mut r)? as usize,
            classes: read_u64(&mut r)? as usize,
        };
        let mut network = Network::new(dims, seed)?;
        let n_params = network::flatten_params(&network).len();
        let mut flat = vec![0.0; n_params];
        for v in flat.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        network::unflatten_params(&mut network, &flat);
        let best_val_loss = read_f64(&mut r)?;
        let epochs_run = read_u64(&mut r)? as usize;

        Ok(Model {
            bank,
            normalizer,
            network,
            config: TrainConfig {
                learning_rate,
                batch_size,
                label_smoothing,
                max_epochs,
                patience,
                weight_decay,
                reduced_dim,
                hidden_dim,
                num_classes,
                standardize,
                seed,
            },
            best_val_loss,
            epochs_run,
        })
    }
}
