//! Constrained alternating least squares for 3D velocity recovery.
//!
//! Models the projection matrix as `V_r = V Rᵀ + N` with `V ∈ R^{T'×3}` the
//! velocity track and `R ∈ R^{N×3}` unit arrival directions, and minimizes
//!
//! ```text
//! ½ Σ_{s,i} [V_r(s,i) − v(s)ᵀr_i]² + λ Σ_s ‖v(s)‖² + γ Σ_i ‖r_i‖²
//! s.t. ‖r_i‖ = 1
//! ```
//!
//! by alternating exact ridge solves for the rows of `V` and `R` (the latter
//! renormalized), with a rotation-only alignment between iterations to keep
//! the factor orientation from drifting, and a banded dynamic-time-warping
//! loss as the stopping criterion. The factorization is identifiable only up
//! to a global orthogonal transform of both factors.

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::doppler::DopplerMatrix;
use crate::error::{Error, Result};

/// Recovered 3D velocity per analysis window, in m/s.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTrack {
    /// Shape `[T' × 3]`.
    pub v: Array2<f64>,
    /// Window-center times in seconds.
    pub times: Vec<f64>,
}

impl VelocityTrack {
    pub fn len(&self) -> usize {
        self.v.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies `V → VQ` rowwise.
    pub fn rotated(&self, q: &Matrix3<f64>) -> VelocityTrack {
        VelocityTrack {
            v: apply_rotation(&self.v, q),
            times: self.times.clone(),
        }
    }

    /// Largest row speed, m/s.
    pub fn peak_speed(&self) -> f64 {
        (0..self.len())
            .map(|s| row3(&self.v, s).norm())
            .fold(0.0, f64::max)
    }
}

/// Unit arrival directions, one row per retained delay bin.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    /// Shape `[N × 3]`, rows unit-norm.
    pub r: Array2<f64>,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.r.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rotated(&self, q: &Matrix3<f64>) -> DirectionSet {
        DirectionSet {
            r: apply_rotation(&self.r, q),
        }
    }
}

/// Settings for [`factorize`].
#[derive(Debug, Clone, Copy)]
pub struct FactorizationConfig {
    /// Ridge weight for the velocity update.
    pub lambda: f64,
    /// Ridge weight for the direction update.
    pub gamma: f64,
    /// Stop once the DTW loss falls below this threshold.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Seeds the direction initialization and the zero-norm fallback.
    pub seed: u64,
    /// Sakoe-Chiba half-width in windows; `None` = 10% of `T'`, rounded up.
    pub dtw_band: Option<usize>,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma: 0.01,
            epsilon: 0.01,
            max_iters: 100,
            seed: 0,
            dtw_band: None,
        }
    }
}

impl FactorizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid("gamma must be finite and >= 0"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Why the alternating loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// DTW loss fell below epsilon.
    Converged,
    /// Iteration budget exhausted (not an error).
    MaxIters,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max_iters",
        }
    }
}

/// Convergence record of one [`factorize`] run.
#[derive(Debug, Clone)]
pub struct FitReport {
    /// DTW loss after each iteration.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// `‖V_r − V Rᵀ‖_F` at the returned factors.
    pub residual_fro: f64,
    /// Residual normalized by `‖V_r‖_F` (0 when the input is all zero).
    pub relative_residual: f64,
    /// Number of zero-norm direction fallbacks across all iterations.
    pub direction_fallbacks: usize,
}

impl FitReport {
    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }

    /// Key-value text rendering, one `key = value` pair per line.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("iterations = {}\n", self.iterations));
        out.push_str(&format!("stop_reason = {}\n", self.stop_reason.as_str()));
        out.push_str(&format!("final_loss = {:.17e}\n", self.final_loss()));
        out.push_str(&format!("residual_fro = {:.17e}\n", self.residual_fro));
        out.push_str(&format!(
            "relative_residual = {:.17e}\n",
            self.relative_residual
        ));
        out.push_str(&format!(
            "direction_fallbacks = {}\n",
            self.direction_fallbacks
        ));
        for (i, loss) in self.losses.iter().enumerate() {
            out.push_str(&format!("loss_{i} = {loss:.17e}\n"));
        }
        out
    }
}

fn row3(m: &Array2<f64>, i: usize) -> Vector3<f64> {
    Vector3::new(m[[i, 0]], m[[i, 1]], m[[i, 2]])
}

fn set_row3(m: &mut Array2<f64>, i: usize, v: &Vector3<f64>) {
    m[[i, 0]] = v.x;
    m[[i, 1]] = v.y;
    m[[i, 2]] = v.z;
}

fn apply_rotation(rows: &Array2<f64>, q: &Matrix3<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(rows.dim());
    let qt = q.transpose();
    for i in 0..rows.dim().0 {
        let rotated = qt * row3(rows, i);
        set_row3(&mut out, i, &rotated);
    }
    out
}

/// Gram matrix `MᵀM` of an `[n × 3]` row block.
fn gram(m: &Array2<f64>) -> Matrix3<f64> {
    let mut g = Matrix3::zeros();
    for i in 0..m.dim().0 {
        let r = row3(m, i);
        g += r * r.transpose();
    }
    g
}

/// Unit direction rows drawn uniformly on the sphere from a fixed seed.
///
/// Row `i` depends only on `(seed, i)` order in the stream, so the same seed
/// always reproduces the same set.
pub fn seeded_unit_directions(n: usize, seed: u64) -> DirectionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = Array2::zeros((n, 3));
    for i in 0..n {
        loop {
            let v = Vector3::new(
                standard_normal(&mut rng),
                standard_normal(&mut rng),
                standard_normal(&mut rng),
            );
            let norm = v.norm();
            if norm > 1e-9 {
                set_row3(&mut r, i, &(v / norm));
                break;
            }
        }
    }
    DirectionSet { r }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// Ridge solve for every velocity row: `v(s) = (RᵀR + λI)⁻¹ Rᵀ V_r(s,:)ᵀ`.
pub fn velocity_update(
    v_r: &DopplerMatrix,
    directions: &DirectionSet,
    lambda: f64,
) -> Result<VelocityTrack> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda must be finite and >= 0"));
    }
    if directions.len() != v_r.n_bins() {
        return Err(Error::invalid(format!(
            "direction count {} does not match bin count {}",
            directions.len(),
            v_r.n_bins()
        )));
    }
    let g = gram(&directions.r) + Matrix3::identity() * lambda;
    let inv = g.try_inverse().ok_or_else(|| {
        Error::numeric("RᵀR + λI is singular; raise lambda or provide non-degenerate directions")
    })?;
    let t_len = v_r.n_windows();
    let mut v = Array2::zeros((t_len, 3));
    for s in 0..t_len {
        let mut b = Vector3::zeros();
        for i in 0..directions.len() {
            b += row3(&directions.r, i) * v_r.v_r[[s, i]];
        }
        let sol = inv * b;
        set_row3(&mut v, s, &sol);
    }
    Ok(VelocityTrack {
        v,
        times: v_r.window_times.clone(),
    })
}

/// Ridge solve plus renormalization for every direction row:
/// `r_i = (VᵀV + γI)⁻¹ Vᵀ V_r(:,i)`, then `r_i ← r_i/‖r_i‖`.
///
/// A row whose pre-normalization solution has no usable norm (zero, or not
/// finite) is replaced by row `i` of [`seeded_unit_directions`] drawn from
/// `fallback_seed`; the indices of replaced rows are returned alongside.
pub fn direction_update(
    v_r: &DopplerMatrix,
    velocity: &VelocityTrack,
    gamma: f64,
    fallback_seed: u64,
) -> Result<(DirectionSet, Vec<usize>)> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::invalid("gamma must be finite and >= 0"));
    }
    if velocity.len() != v_r.n_windows() {
        return Err(Error::invalid(format!(
            "velocity rows {} do not match window count {}",
            velocity.len(),
            v_r.n_windows()
        )));
    }
    let h = gram(&velocity.v) + Matrix3::identity() * gamma;
    // Rank-deficient tracks (e.g. motion confined to a line) still define a
    // minimum-norm ridge solution, so solve through the pseudoinverse.
    let svd = h.svd(true, true);
    let sigma_max = svd.singular_values[0];
    let cutoff = (1e-12 * sigma_max).max(f64::MIN_POSITIVE);
    let inv = svd
        .pseudo_inverse(cutoff)
        .map_err(|e| Error::numeric(format!("pseudoinverse of VᵀV + γI failed: {e}")))?;
    let n_bins = v_r.n_bins();
    let fallback = seeded_unit_directions(n_bins, fallback_seed);
    let mut r = Array2::zeros((n_bins, 3));
    let mut fallbacks = Vec::new();
    for i in 0..n_bins {
        let mut u = Vector3::zeros();
        for s in 0..velocity.len() {
            u += row3(&velocity.v, s) * v_r.v_r[[s, i]];
        }
        let sol = inv * u;
        let norm = sol.norm();
        if norm.is_finite() && norm > 0.0 {
            set_row3(&mut r, i, &(sol / norm));
        } else {
            set_row3(&mut r, i, &row3(&fallback.r, i));
            fallbacks.push(i);
        }
    }
    Ok((DirectionSet { r }, fallbacks))
}

/// Orthogonal matrix minimizing `‖A·Q − reference‖_F`.
///
/// With `allow_reflection = false` the smallest singular direction is
/// sign-corrected so `det(Q) = +1`, which also resolves rank-deficient inputs
/// deterministically.
pub fn orthogonal_alignment(
    a: &Array2<f64>,
    reference: &Array2<f64>,
    allow_reflection: bool,
) -> Result<Matrix3<f64>> {
    if a.dim() != reference.dim() {
        return Err(Error::invalid(format!(
            "alignment shapes differ: {:?} vs {:?}",
            a.dim(),
            reference.dim()
        )));
    }
    if a.dim().1 != 3 {
        return Err(Error::invalid("alignment expects [n × 3] inputs"));
    }
    // Cross matrix AᵀB; maximize tr(QᵀAᵀB) over orthogonal Q.
    let mut cross = Matrix3::zeros();
    for s in 0..a.dim().0 {
        cross += row3(a, s) * row3(reference, s).transpose();
    }
    let svd = cross.svd(true, true);
    let mut u = svd.u.ok_or_else(|| Error::numeric("SVD failed to produce U"))?;
    let v_t = svd.v_t.ok_or_else(|| Error::numeric("SVD failed to produce Vᵀ"))?;
    let mut q = u * v_t;
    if !allow_reflection && q.determinant() < 0.0 {
        // Singular values are sorted descending; flip the smallest.
        for k in 0..3 {
            u[(k, 2)] = -u[(k, 2)];
        }
        q = u * v_t;
    }
    Ok(q)
}

/// Rotates both factors by the rotation that best aligns `v` with `reference`.
///
/// The product `V Rᵀ` is unchanged since `(VQ)(RQ)ᵀ = V Rᵀ`.
pub fn procrustes_align(
    v: &VelocityTrack,
    r: &DirectionSet,
    reference: &VelocityTrack,
) -> Result<(VelocityTrack, DirectionSet)> {
    let q = orthogonal_alignment(&v.v, &reference.v, false)?;
    Ok((v.rotated(&q), r.rotated(&q)))
}

/// RMSE between two tracks after the best orthogonal alignment of `estimate`
/// onto `truth`. Reflections are allowed when comparing against ground truth
/// because the factorization gauge is the full orthogonal group.
pub fn aligned_rmse(estimate: &VelocityTrack, truth: &VelocityTrack, allow_reflection: bool) -> Result<f64> {
    let q = orthogonal_alignment(&estimate.v, &truth.v, allow_reflection)?;
    let aligned = estimate.rotated(&q);
    let t = truth.len();
    if t == 0 {
        return Err(Error::invalid("empty track"));
    }
    let sq: f64 = (0..t)
        .map(|s| (row3(&aligned.v, s) - row3(&truth.v, s)).norm_squared())
        .sum();
    Ok((sq / t as f64).sqrt())
}

/// Mean over columns of the banded DTW distance between same-index columns,
/// each normalized by its optimal warping-path length. Symmetric in `a`/`b`.
///
/// A band narrower than the length difference of the two series is widened to
/// the minimum feasible width.
pub fn dtw_loss(a: &Array2<f64>, b: &Array2<f64>, band: usize) -> Result<f64> {
    let (ta, na) = a.dim();
    let (tb, nb) = b.dim();
    if na != nb {
        return Err(Error::invalid(format!(
            "column counts differ: {na} vs {nb}"
        )));
    }
    if ta == 0 || tb == 0 {
        return Err(Error::invalid("DTW inputs must be non-empty"));
    }
    if na == 0 {
        return Err(Error::invalid("DTW needs at least one column"));
    }
    let mut total = 0.0;
    let mut xs = Vec::with_capacity(ta);
    let mut ys = Vec::with_capacity(tb);
    for c in 0..na {
        xs.clear();
        xs.extend(a.column(c).iter().copied());
        ys.clear();
        ys.extend(b.column(c).iter().copied());
        total += dtw_column(&xs, &ys, band);
    }
    Ok(total / na as f64)
}

/// Banded DTW on one pair of series, cost `|x−y|`, lexicographic
/// `(cost, steps)` dynamic program so the normalizing path length is
/// deterministic and symmetric.
fn dtw_column(x: &[f64], y: &[f64], band: usize) -> f64 {
    const INF: (f64, u64) = (f64::INFINITY, u64::MAX);
    let (tx, ty) = (x.len(), y.len());
    let w = band.max(tx.abs_diff(ty));
    let mut prev = vec![INF; ty];
    let mut cur = vec![INF; ty];
    for i in 0..tx {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(ty - 1);
        for cell in cur.iter_mut() {
            *cell = INF;
        }
        for j in lo..=hi {
            let cost = (x[i] - y[j]).abs();
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = INF;
                if i > 0 {
                    best = min_cost_steps(best, prev[j]);
                    if j > 0 {
                        best = min_cost_steps(best, prev[j - 1]);
                    }
                }
                if j > 0 {
                    best = min_cost_steps(best, cur[j - 1]);
                }
                best
            };
            cur[j] = (best.0 + cost, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, steps) = prev[ty - 1];
    cost / steps as f64
}

fn min_cost_steps(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// The regularized squared objective the alternating updates minimize:
/// `½‖V_r − VRᵀ‖² + (λ/2)Σ‖v‖² + (γ/2)Σ‖r‖²`. The ridge normal equations
/// `(RᵀR + λI)` correspond to the half-scaled regularizers, so this is the
/// quantity that is guaranteed non-increasing across a velocity solve.
fn squared_objective(
    v_r: &Array2<f64>,
    v: &Array2<f64>,
    r: &Array2<f64>,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let mut fit = 0.0;
    for s in 0..v_r.dim().0 {
        let vs = row3(v, s);
        for i in 0..v_r.dim().1 {
            let e = v_r[[s, i]] - vs.dot(&row3(r, i));
            fit += e * e;
        }
    }
    let vel: f64 = (0..v.dim().0).map(|s| row3(v, s).norm_squared()).sum();
    let dir: f64 = (0..r.dim().0).map(|i| row3(r, i).norm_squared()).sum();
    0.5 * (fit + lambda * vel + gamma * dir)
}

fn predicted(v: &Array2<f64>, r: &Array2<f64>) -> Array2<f64> {
    let (t, n) = (v.dim().0, r.dim().0);
    let mut p = Array2::zeros((t, n));
    for s in 0..t {
        let vs = row3(v, s);
        for i in 0..n {
            p[[s, i]] = vs.dot(&row3(r, i));
        }
    }
    p
}

/// Alternating optimization recovering `(V, R)` from a projection matrix.
///
/// Directions start as seeded random unit vectors; every iteration runs the
/// velocity ridge solve, the direction ridge solve with renormalization, a
/// rotation-only alignment against the previous iterate's track (skipped on
/// the first iteration), and the DTW stopping loss. Runs are bit-reproducible
/// for a fixed `(input, config)` pair.
pub fn factorize(
    v_r: &DopplerMatrix,
    cfg: &FactorizationConfig,
) -> Result<(VelocityTrack, DirectionSet, FitReport)> {
    cfg.validate()?;
    let (t_len, n_bins) = v_r.v_r.dim();
    if t_len == 0 || n_bins == 0 {
        return Err(Error::invalid("projection matrix must be non-empty"));
    }
    if v_r.v_r.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("projection matrix contains NaN or Inf"));
    }
    let band = cfg.dtw_band.unwrap_or_else(|| t_len.div_ceil(10));

    let mut directions = seeded_unit_directions(n_bins, cfg.seed);
    let mut velocity = VelocityTrack {
        v: Array2::zeros((t_len, 3)),
        times: v_r.window_times.clone(),
    };
    let mut prev_track: Option<VelocityTrack> = None;
    let mut losses = Vec::new();
    let mut fallback_count = 0;
    let mut stop_reason = StopReason::MaxIters;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;

        #[cfg(debug_assertions)]
        let obj_before = prev_track
            .as_ref()
            .map(|p| squared_objective(&v_r.v_r, &p.v, &directions.r, cfg.lambda, cfg.gamma));

        velocity = velocity_update(v_r, &directions, cfg.lambda)?;

        #[cfg(debug_assertions)]
        if let Some(before) = obj_before {
            let after =
                squared_objective(&v_r.v_r, &velocity.v, &directions.r, cfg.lambda, cfg.gamma);
            debug_assert!(
                after <= before * (1.0 + 1e-9) + 1e-12,
                "velocity update increased the objective: {before} -> {after}"
            );
        }

        let (new_directions, fallbacks) =
            direction_update(v_r, &velocity, cfg.gamma, cfg.seed)?;
        directions = new_directions;
        fallback_count += fallbacks.len();

        if let Some(prev) = &prev_track {
            let (av, ar) = procrustes_align(&velocity, &directions, prev)?;
            velocity = av;
            directions = ar;
        }

        let loss = dtw_loss(&v_r.v_r, &predicted(&velocity.v, &directions.r), band)?;
        losses.push(loss);
        prev_track = Some(velocity.clone());

        if loss < cfg.epsilon {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    let residual = {
        let p = predicted(&velocity.v, &directions.r);
        let mut err = 0.0;
        let mut norm = 0.0;
        for (o, q) in v_r.v_r.iter().zip(p.iter()) {
            err += (o - q) * (o - q);
            norm += o * o;
        }
        (err.sqrt(), norm.sqrt())
    };
    let report = FitReport {
        losses,
        iterations,
        stop_reason,
        residual_fro: residual.0,
        relative_residual: if residual.1 > 0.0 {
            residual.0 / residual.1
        } else {
            0.0
        },
        direction_fallbacks: fallback_count,
    };
    Ok((velocity, directions, report))
}
