//! Uniform spherical resampling of velocity tracks.
//!
//! The recovered track is projected onto an `M × 2M` equiangular grid of
//! unit directions, producing the field tensor `P(s, m, n) = v(s)·d_mn`.
//! The grid is antipodally closed: the antipode of `(m, n)` is
//! `(M-1-m, (n+M) mod 2M)`, so `P` is exactly antisymmetric under that index
//! map. The equiangular layout crowds the poles rather than being
//! area-uniform; that is intentional and matched by the index formulas.

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::factorization::VelocityTrack;

/// Equiangular direction grid with `θ_m = (m+0.5)π/M`, `φ_n = (n+0.5)π/M`.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub m_rows: usize,
    /// Unit vectors, shape `[M × 2M × 3]`.
    pub directions: Array3<f64>,
    /// Latitude angles, length `M`.
    pub thetas: Vec<f64>,
    /// Longitude angles, length `2M`.
    pub phis: Vec<f64>,
}

impl SphereGrid {
    /// Builds the grid for a given latitude count `M >= 1` (2M² directions).
    pub fn new(m_rows: usize) -> Result<Self> {
        if m_rows == 0 {
            return Err(Error::invalid("grid size M must be at least 1"));
        }
        let m = m_rows;
        let thetas: Vec<f64> = (0..m)
            .map(|i| (i as f64 + 0.5) * std::f64::consts::PI / m as f64)
            .collect();
        let phis: Vec<f64> = (0..2 * m)
            .map(|n| (n as f64 + 0.5) * 2.0 * std::f64::consts::PI / (2 * m) as f64)
            .collect();
        let mut directions = Array3::zeros((m, 2 * m, 3));
        for (mi, &theta) in thetas.iter().enumerate() {
            let (st, ct) = (theta.sin(), theta.cos());
            for (ni, &phi) in phis.iter().enumerate() {
                directions[[mi, ni, 0]] = st * phi.cos();
                directions[[mi, ni, 1]] = st * phi.sin();
                directions[[mi, ni, 2]] = ct;
            }
        }
        Ok(Self {
            m_rows,
            directions,
            thetas,
            phis,
        })
    }

    pub fn n_directions(&self) -> usize {
        2 * self.m_rows * self.m_rows
    }

    pub fn direction(&self, m: usize, n: usize) -> Vector3<f64> {
        Vector3::new(
            self.directions[[m, n, 0]],
            self.directions[[m, n, 1]],
            self.directions[[m, n, 2]],
        )
    }

    /// Index of the direction antipodal to `(m, n)`.
    pub fn antipode(&self, m: usize, n: usize) -> (usize, usize) {
        (self.m_rows - 1 - m, (n + self.m_rows) % (2 * self.m_rows))
    }

    /// Least-squares inversion of one field slice back to a velocity vector.
    ///
    /// Needs `M >= 2`; an `M = 1` grid spans only the equatorial plane.
    pub fn least_squares_velocity(&self, slice: &Array2<f64>) -> Result<Vector3<f64>> {
        if slice.dim() != (self.m_rows, 2 * self.m_rows) {
            return Err(Error::invalid(format!(
                "slice shape {:?} does not match grid {}x{}",
                slice.dim(),
                self.m_rows,
                2 * self.m_rows
            )));
        }
        let mut gram = Matrix3::zeros();
        let mut rhs = Vector3::zeros();
        for m in 0..self.m_rows {
            for n in 0..2 * self.m_rows {
                let d = self.direction(m, n);
                gram += d * d.transpose();
                rhs += d * slice[[m, n]];
            }
        }
        // An M = 1 grid collapses to the equator; reject near-singular
        // systems instead of inverting roundoff.
        let svd = gram.svd(false, false);
        let (s_max, s_min) = (svd.singular_values[0], svd.singular_values[2]);
        let well_conditioned = s_min.is_finite() && s_min > 1e-9 * s_max;
        if !well_conditioned {
            return Err(Error::numeric(
                "grid directions do not span R^3 (need M >= 2)",
            ));
        }
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::numeric("grid gram matrix is singular"))?;
        Ok(inv * rhs)
    }
}

/// The resampled field tensor `P ∈ R^{T'×M×2M}` for one antenna.
#[derive(Debug, Clone)]
pub struct Dorf {
    /// Projections in m/s, shape `[T' × M × 2M]`.
    pub p: Array3<f64>,
    pub m_rows: usize,
    pub antenna_id: usize,
}

impl Dorf {
    pub fn n_windows(&self) -> usize {
        self.p.dim().0
    }
}

/// Projects every velocity row onto every grid direction.
pub fn project_dorf(track: &VelocityTrack, grid: &SphereGrid, antenna_id: usize) -> Dorf {
    let t_len = track.len();
    let m = grid.m_rows;
    let mut p = Array3::zeros((t_len, m, 2 * m));
    for s in 0..t_len {
        let v = Vector3::new(track.v[[s, 0]], track.v[[s, 1]], track.v[[s, 2]]);
        for mi in 0..m {
            for ni in 0..2 * m {
                p[[s, mi, ni]] = v.dot(&grid.direction(mi, ni));
            }
        }
    }
    Dorf {
        p,
        m_rows: m,
        antenna_id,
    }
}

/// How per-antenna fields are combined into one projection set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergePolicy {
    /// Concatenate along the channel axis, flattening `(m, n)` per antenna.
    #[default]
    Concat,
}

/// Channel-major stack of merged fields: `[T' × C]` with `C = Σ 2M²`.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    pub data: Array2<f64>,
    /// `(antenna_id, m, n)` source of every channel.
    pub provenance: Vec<(usize, usize, usize)>,
}

impl ProjectionSet {
    pub fn n_windows(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }
}

/// Merges per-antenna fields; channel `a·2M² + m·2M + n` holds antenna `a`'s
/// projection at grid index `(m, n)`.
pub fn merge_dorfs(fields: &[Dorf], policy: MergePolicy) -> Result<ProjectionSet> {
    let MergePolicy::Concat = policy;
    let first = fields
        .first()
        .ok_or_else(|| Error::invalid("no fields to merge"))?;
    let t_len = first.n_windows();
    for f in fields {
        if f.n_windows() != t_len {
            return Err(Error::invalid(format!(
                "window counts differ across antennas: {} vs {}",
                t_len,
                f.n_windows()
            )));
        }
    }
    let c: usize = fields.iter().map(|f| 2 * f.m_rows * f.m_rows).sum();
    let mut data = Array2::zeros((t_len, c));
    let mut provenance = Vec::with_capacity(c);
    let mut col = 0;
    for f in fields {
        for m in 0..f.m_rows {
            for n in 0..2 * f.m_rows {
                for s in 0..t_len {
                    data[[s, col]] = f.p[[s, m, n]];
                }
                provenance.push((f.antenna_id, m, n));
                col += 1;
            }
        }
    }
    Ok(ProjectionSet { data, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn track_from_rows(rows: &[[f64; 3]]) -> VelocityTrack {
        let mut v = Array2::zeros((rows.len(), 3));
        for (i, r) in rows.iter().enumerate() {
            for k in 0..3 {
                v[[i, k]] = r[k];
            }
        }
        VelocityTrack {
            v,
            times: (0..rows.len()).map(|i| i as f64).collect(),
        }
    }

    #[test]
    fn m1_grid_is_the_equatorial_pair() {
        let g = SphereGrid::new(1).unwrap();
        assert_eq!(g.n_directions(), 2);
        assert!((g.thetas[0] - PI / 2.0).abs() < 1e-15);
        assert!((g.phis[0] - PI / 2.0).abs() < 1e-15);
        assert!((g.phis[1] - 3.0 * PI / 2.0).abs() < 1e-15);
        let d0 = g.direction(0, 0);
        let d1 = g.direction(0, 1);
        assert!((d0 - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!((d1 - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn m2_grid_has_eight_unit_directions() {
        let g = SphereGrid::new(2).unwrap();
        assert_eq!(g.n_directions(), 8);
        assert!((g.thetas[0] - PI / 4.0).abs() < 1e-15);
        assert!((g.thetas[1] - 3.0 * PI / 4.0).abs() < 1e-15);
        for m in 0..2 {
            for n in 0..4 {
                assert!((g.direction(m, n).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn m8_grid_matches_reference_size() {
        let g = SphereGrid::new(8).unwrap();
        assert_eq!(g.n_directions(), 128);
        assert!(SphereGrid::new(0).is_err());
    }

    #[test]
    fn antipodes_are_grid_points() {
        for m_rows in [1usize, 2, 3, 8] {
            let g = SphereGrid::new(m_rows).unwrap();
            for m in 0..m_rows {
                for n in 0..2 * m_rows {
                    let (am, an) = g.antipode(m, n);
                    let d = g.direction(m, n) + g.direction(am, an);
                    assert!(d.norm() < 1e-12, "M={m_rows} ({m},{n})");
                }
            }
        }
    }

    #[test]
    fn z_velocity_projects_to_cos_theta() {
        let g = SphereGrid::new(3).unwrap();
        let track = track_from_rows(&[[0.0, 0.0, 1.0]]);
        let d = project_dorf(&track, &g, 0);
        for m in 0..3 {
            for n in 0..6 {
                assert!((d.p[[0, m, n]] - g.thetas[m].cos()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_velocity_projects_to_zero() {
        let g = SphereGrid::new(2).unwrap();
        let track = track_from_rows(&[[0.0, 0.0, 0.0]]);
        let d = project_dorf(&track, &g, 0);
        assert!(d.p.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn x_velocity_is_orthogonal_to_m1_grid() {
        let g = SphereGrid::new(1).unwrap();
        let track = track_from_rows(&[[1.0, 0.0, 0.0]]);
        let d = project_dorf(&track, &g, 0);
        assert!(d.p[[0, 0, 0]].abs() < 1e-15);
        assert!(d.p[[0, 0, 1]].abs() < 1e-15);
    }

    #[test]
    fn field_is_antipodally_antisymmetric() {
        let g = SphereGrid::new(4).unwrap();
        let track = track_from_rows(&[[0.3, -1.2, 0.7], [2.0, 0.1, -0.5]]);
        let d = project_dorf(&track, &g, 0);
        for s in 0..2 {
            for m in 0..4 {
                for n in 0..8 {
                    let (am, an) = g.antipode(m, n);
                    assert!((d.p[[s, m, n]] + d.p[[s, am, an]]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn projection_is_linear() {
        let g = SphereGrid::new(3).unwrap();
        let a = track_from_rows(&[[0.2, -0.4, 1.0]]);
        let b = track_from_rows(&[[-1.1, 0.3, 0.25]]);
        let sum = track_from_rows(&[[0.2 - 1.1, -0.4 + 0.3, 1.25]]);
        let pa = project_dorf(&a, &g, 0);
        let pb = project_dorf(&b, &g, 0);
        let ps = project_dorf(&sum, &g, 0);
        for m in 0..3 {
            for n in 0..6 {
                assert!((pa.p[[0, m, n]] + pb.p[[0, m, n]] - ps.p[[0, m, n]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_about_z_permutes_longitudes() {
        let m_rows = 4;
        let g = SphereGrid::new(m_rows).unwrap();
        let track = track_from_rows(&[[0.8, -0.2, 0.5]]);
        // Rotating the track by the longitude step relabels channels.
        let step = PI / m_rows as f64;
        let q = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), step)
            .into_inner();
        let rotated = track.rotated(&q);
        let p = project_dorf(&track, &g, 0);
        let pr = project_dorf(&rotated, &g, 0);
        for m in 0..m_rows {
            for n in 0..2 * m_rows {
                let shifted = (n + 1) % (2 * m_rows);
                assert!(
                    (pr.p[[0, m, n]] - p.p[[0, m, shifted]]).abs() < 1e-12,
                    "m={m} n={n}"
                );
            }
        }
    }

    #[test]
    fn velocity_recovers_from_slice() {
        let g = SphereGrid::new(2).unwrap();
        let v = Vector3::new(1.3, -0.2, 0.9);
        let track = track_from_rows(&[[v.x, v.y, v.z]]);
        let d = project_dorf(&track, &g, 0);
        let slice = d.p.index_axis(ndarray::Axis(0), 0).to_owned();
        let rec = g.least_squares_velocity(&slice).unwrap();
        assert!((rec - v).norm() / v.norm() < 1e-9);
    }

    #[test]
    fn m1_grid_cannot_invert() {
        let g = SphereGrid::new(1).unwrap();
        let slice = Array2::zeros((1, 2));
        assert!(g.least_squares_velocity(&slice).is_err());
    }

    #[test]
    fn merge_concatenates_antenna_channels() {
        let g = SphereGrid::new(8).unwrap();
        let track = track_from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let fields: Vec<Dorf> = (0..3).map(|a| project_dorf(&track, &g, a)).collect();
        let merged = merge_dorfs(&fields, MergePolicy::Concat).unwrap();
        assert_eq!(merged.n_channels(), 384);
        assert_eq!(merged.n_windows(), 2);
        assert_eq!(merged.provenance[0], (0, 0, 0));
        assert_eq!(merged.provenance[128], (1, 0, 0));
        // Channel a·2M² + m·2M + n carries P(s, m, n) of antenna a.
        assert_eq!(merged.data[[1, 200]], fields[1].p[[1, 4, 8]]);
    }

    #[test]
    fn merge_single_antenna_is_flatten() {
        let g = SphereGrid::new(2).unwrap();
        let track = track_from_rows(&[[0.4, 0.2, -0.1]]);
        let field = project_dorf(&track, &g, 0);
        let merged = merge_dorfs(std::slice::from_ref(&field), MergePolicy::Concat).unwrap();
        assert_eq!(merged.n_channels(), 8);
        for m in 0..2 {
            for n in 0..4 {
                assert_eq!(merged.data[[0, m * 4 + n]], field.p[[0, m, n]]);
            }
        }
    }

    #[test]
    fn merge_rejects_mismatched_windows() {
        let g = SphereGrid::new(2).unwrap();
        let t24 = VelocityTrack {
            v: Array2::zeros((24, 3)),
            times: (0..24).map(|i| i as f64).collect(),
        };
        let t25 = VelocityTrack {
            v: Array2::zeros((25, 3)),
            times: (0..25).map(|i| i as f64).collect(),
        };
        let a = project_dorf(&t24, &g, 0);
        let b = project_dorf(&t25, &g, 1);
        let err = merge_dorfs(&[a, b], MergePolicy::Concat).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("24") && msg.contains("25"), "{msg}");
    }
}
