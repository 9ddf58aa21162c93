//! Shallow classification network and its optimizer.
//!
//! Three dense layers: a linear projection to the reduced feature dimension,
//! a rectified hidden layer, and a logit layer over the classes. Training
//! uses first-order adaptive moments with decoupled weight decay and
//! cross-entropy against label-smoothed targets. Everything is plain `f64`
//! with a fixed evaluation order so runs are bit-reproducible.
//!
//! The fields and gradient entry points are public so external test suites
//! can check the analytic gradients against finite differences.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Layer sizes of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkDims {
    pub input: usize,
    pub reduced: usize,
    pub hidden: usize,
    pub classes: usize,
}

/// The dense network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub dims: NetworkDims,
    /// `[input × reduced]`
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
    /// `[reduced × hidden]`
    pub hid_w: Array2<f64>,
    pub hid_b: Array1<f64>,
    /// `[hidden × classes]`
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

/// Gradients with the same shapes as [`Network`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
    pub hid_w: Array2<f64>,
    pub hid_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl Network {
    /// Seeded Xavier-uniform initialization, zero biases.
    pub fn new(dims: NetworkDims, seed: u64) -> Result<Self> {
        if dims.input == 0 || dims.reduced == 0 || dims.hidden == 0 || dims.classes < 2 {
            return Err(Error::invalid(format!("degenerate network dims {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            dims,
            proj_w: xavier(&mut rng, dims.input, dims.reduced),
            proj_b: Array1::zeros(dims.reduced),
            hid_w: xavier(&mut rng, dims.reduced, dims.hidden),
            hid_b: Array1::zeros(dims.hidden),
            out_w: xavier(&mut rng, dims.hidden, dims.classes),
            out_b: Array1::zeros(dims.classes),
        })
    }

    /// Class probabilities for one feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dims.input {
            return Err(Error::invalid(format!(
                "feature dimension {} does not match model input {}",
                x.len(),
                self.dims.input
            )));
        }
        let mut batch = Array2::zeros((1, self.dims.input));
        for (i, v) in x.iter().enumerate() {
            batch[[0, i]] = *v;
        }
        let logits = self.forward_logits(&batch);
        Ok(softmax_row(&logits.row(0).to_vec()))
    }

    fn forward_logits(&self, x: &Array2<f64>) -> Array2<f64> {
        let z1 = x.dot(&self.proj_w) + &self.proj_b;
        let h_pre = z1.dot(&self.hid_w) + &self.hid_b;
        let h = h_pre.mapv(|v| v.max(0.0));
        h.dot(&self.out_w) + &self.out_b
    }

    /// Mean label-smoothed cross-entropy over the batch, plus gradients.
    ///
    /// The target for row `b` is `(1-α)·onehot(labels[b]) + α/K`.
    pub fn loss_and_grad(
        &self,
        x: &Array2<f64>,
        labels: &[usize],
        smoothing: f64,
    ) -> Result<(f64, Gradients)> {
        let (b, d) = x.dim();
        if d != self.dims.input {
            return Err(Error::invalid("batch feature dimension mismatch"));
        }
        if b == 0 || labels.len() != b {
            return Err(Error::invalid("batch and label sizes disagree"));
        }
        let k = self.dims.classes;
        if labels.iter().any(|&l| l >= k) {
            return Err(Error::invalid("label outside class range"));
        }

        // Forward pass, keeping intermediates.
        let z1 = x.dot(&self.proj_w) + &self.proj_b;
        let h_pre = z1.dot(&self.hid_w) + &self.hid_b;
        let h = h_pre.mapv(|v| v.max(0.0));
        let logits = h.dot(&self.out_w) + &self.out_b;

        let mut loss = 0.0;
        let mut d_logits = Array2::zeros((b, k));
        for row in 0..b {
            let logit_row: Vec<f64> = logits.row(row).to_vec();
            let (log_probs, probs) = log_softmax_row(&logit_row);
            for c in 0..k {
                let target = smoothing / k as f64
                    + if c == labels[row] { 1.0 - smoothing } else { 0.0 };
                loss -= target * log_probs[c];
                d_logits[[row, c]] = (probs[c] - target) / b as f64;
            }
        }
        loss /= b as f64;

        // Backward pass.
        let d_out_w = h.t().dot(&d_logits);
        let d_out_b = d_logits.sum_axis(ndarray::Axis(0));
        let mut d_h = d_logits.dot(&self.out_w.t());
        ndarray::Zip::from(&mut d_h).and(&h_pre).for_each(|g, &pre| {
            if pre <= 0.0 {
                *g = 0.0;
            }
        });
        let d_hid_w = z1.t().dot(&d_h);
        let d_hid_b = d_h.sum_axis(ndarray::Axis(0));
        let d_z1 = d_h.dot(&self.hid_w.t());
        let d_proj_w = x.t().dot(&d_z1);
        let d_proj_b = d_z1.sum_axis(ndarray::Axis(0));

        Ok((
            loss,
            Gradients {
                proj_w: d_proj_w,
                proj_b: d_proj_b,
                hid_w: d_hid_w,
                hid_b: d_hid_b,
                out_w: d_out_w,
                out_b: d_out_b,
            },
        ))
    }

    /// Mean label-smoothed cross-entropy without gradients.
    pub fn loss(&self, x: &Array2<f64>, labels: &[usize], smoothing: f64) -> Result<f64> {
        let logits = self.forward_logits(x);
        let k = self.dims.classes;
        let b = x.dim().0;
        if b == 0 || labels.len() != b {
            return Err(Error::invalid("batch and label sizes disagree"));
        }
        let mut loss = 0.0;
        for row in 0..b {
            let (log_probs, _) = log_softmax_row(&logits.row(row).to_vec());
            for c in 0..k {
                let target = smoothing / k as f64
                    + if c == labels[row] { 1.0 - smoothing } else { 0.0 };
                loss -= target * log_probs[c];
            }
        }
        Ok(loss / b as f64)
    }
}

/// Numerically stable softmax of one logit row.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax_row(logits: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    let log_probs: Vec<f64> = logits.iter().map(|&l| l - log_z).collect();
    let probs: Vec<f64> = log_probs.iter().map(|&lp| lp.exp()).collect();
    (log_probs, probs)
}

/// Adaptive-moment optimizer state with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64, n_params: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One update over the flattened parameter/gradient pair.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate
                * (m_hat / (v_hat.sqrt() + self.epsilon) + self.weight_decay * params[i]);
        }
    }
}

/// Flattens the network parameters into one vector (fixed tensor order).
pub fn flatten_params(net: &Network) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend(net.proj_w.iter());
    out.extend(net.proj_b.iter());
    out.extend(net.hid_w.iter());
    out.extend(net.hid_b.iter());
    out.extend(net.out_w.iter());
    out.extend(net.out_b.iter());
    out
}

/// Writes a flattened vector back into the network (inverse of
/// [`flatten_params`]).
pub fn unflatten_params(net: &mut Network, flat: &[f64]) {
    let mut it = flat.iter();
    for dst in net
        .proj_w
        .iter_mut()
        .chain(net.proj_b.iter_mut())
        .chain(net.hid_w.iter_mut())
        .chain(net.hid_b.iter_mut())
        .chain(net.out_w.iter_mut())
        .chain(net.out_b.iter_mut())
    {
        *dst = *it.next().expect("flat parameter vector too short");
    }
    assert!(it.next().is_none(), "flat parameter vector too long");
}

/// Flattens gradients in the same order as [`flatten_params`].
pub fn flatten_grads(g: &Gradients) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend(g.proj_w.iter());
    out.extend(g.proj_b.iter());
    out.extend(g.hid_w.iter());
    out.extend(g.hid_b.iter());
    out.extend(g.out_w.iter());
    out.extend(g.out_b.iter());
    out
}
