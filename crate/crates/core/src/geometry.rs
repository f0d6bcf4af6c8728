//! Compact convex action sets behind a linear-optimization oracle.
//!
//! Every set kind answers `lmo` (deterministic tie-breaking, so runs replay
//! byte-identically) and `membership`; vertex-enumerable kinds also answer
//! `vertices`. Sets must span the ambient space — constructors reject
//! anything degenerate instead of projecting to a subspace.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::lp::{self, LpOutcome};

/// Box vertex enumeration is capped at 2^20 corners; beyond that the box is
/// treated as LMO-only.
pub const BOX_VERTEX_DIM_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    /// Standard probability simplex `{x >= 0, sum x = 1}` in `R^dim`.
    Simplex,
    /// Axis-aligned box `[lower, upper]`, `lower < upper` componentwise.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// Euclidean ball of positive radius.
    Ball { center: DVector<f64>, radius: f64 },
    /// Convex hull of an explicit vertex list spanning the ambient space.
    VPolytope { vertices: Vec<DVector<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSet {
    dim: usize,
    kind: SetKind,
}

impl ConvexSet {
    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::InvalidSet("simplex needs dim >= 1".into()));
        }
        Ok(Self {
            dim,
            kind: SetKind::Simplex,
        })
    }

    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        let lower = DVector::from_element(dim, -half_width);
        let upper = DVector::from_element(dim, half_width);
        Self::bounded_box(lower, upper)
    }

    pub fn bounded_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(CoreError::InvalidSet("box bounds length mismatch".into()));
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] >= upper[i] {
                return Err(CoreError::InvalidSet(format!(
                    "box needs lower < upper in every coordinate (coordinate {i}: {} vs {})",
                    lower[i], upper[i]
                )));
            }
        }
        let dim = lower.len();
        Ok(Self {
            dim,
            kind: SetKind::Box { lower, upper },
        })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(CoreError::InvalidSet("ball needs dim >= 1".into()));
        }
        if !radius.is_finite() || radius <= 0.0 {
            return Err(CoreError::InvalidSet(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        let dim = center.len();
        Ok(Self {
            dim,
            kind: SetKind::Ball { center, radius },
        })
    }

    pub fn vpolytope(vertices: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(CoreError::InvalidSet("vpolytope needs vertices".into()));
        };
        let dim = first.len();
        if dim == 0 || vertices.iter().any(|v| v.len() != dim) {
            return Err(CoreError::InvalidSet(
                "vpolytope vertices must share a positive dimension".into(),
            ));
        }
        // span(X) = R^dim: the vertex matrix must have full row rank.
        let mat = DMatrix::from_columns(&vertices.to_vec());
        let scale = mat.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        if mat.rank(1e-10 * scale) < dim {
            return Err(CoreError::InvalidSet(
                "vpolytope vertices do not span the ambient space".into(),
            ));
        }
        Ok(Self {
            dim,
            kind: SetKind::VPolytope { vertices },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn has_vertices(&self) -> bool {
        match &self.kind {
            SetKind::Simplex | SetKind::VPolytope { .. } => true,
            SetKind::Box { .. } => self.dim <= BOX_VERTEX_DIM_CAP,
            SetKind::Ball { .. } => false,
        }
    }

    pub fn has_closed_form_gauge(&self) -> bool {
        match &self.kind {
            SetKind::Simplex => true,
            SetKind::Box { .. } => self.centered_box_halfwidths().is_some(),
            SetKind::Ball { .. } => self.centered_ball_radius().is_some(),
            SetKind::VPolytope { .. } => false,
        }
    }

    pub fn has_closed_form_regularizer(&self) -> bool {
        self.has_closed_form_gauge()
    }

    /// Whether the regularized argmax admits an exact solve when paired with
    /// a structurally compatible regularizer (scalar or diagonal `H`).
    pub fn has_exact_reg_argmax(&self) -> bool {
        matches!(
            &self.kind,
            SetKind::Simplex | SetKind::Box { .. } | SetKind::Ball { .. }
        )
    }

    /// Half-widths `u` when the box is `[-u, u]`.
    pub fn centered_box_halfwidths(&self) -> Option<DVector<f64>> {
        match &self.kind {
            SetKind::Box { lower, upper } => {
                if (0..self.dim).all(|i| lower[i] == -upper[i]) {
                    Some(upper.clone())
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    pub fn centered_ball_radius(&self) -> Option<f64> {
        match &self.kind {
            SetKind::Ball { center, radius } => {
                if center.iter().all(|&c| c == 0.0) {
                    Some(*radius)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `argmax_{x in set} <c, x>` with deterministic tie-breaking: simplex
    /// and vpolytope pick the lowest-index maximizing vertex, the box maps
    /// `c_i = 0` to the upper bound, the ball maps `c = 0` to the center.
    pub fn lmo(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(c)?;
        match &self.kind {
            SetKind::Simplex => {
                let mut best = 0usize;
                for i in 1..self.dim {
                    if c[i] > c[best] {
                        best = i;
                    }
                }
                let mut x = DVector::zeros(self.dim);
                x[best] = 1.0;
                Ok(x)
            }
            SetKind::Box { lower, upper } => {
                let mut x = DVector::zeros(self.dim);
                for i in 0..self.dim {
                    x[i] = if c[i] < 0.0 { lower[i] } else { upper[i] };
                }
                Ok(x)
            }
            SetKind::Ball { center, radius } => {
                let norm = c.norm();
                if norm == 0.0 {
                    return Ok(center.clone());
                }
                Ok(center + c * (*radius / norm))
            }
            SetKind::VPolytope { vertices } => {
                let mut best = 0usize;
                let mut best_val = c.dot(&vertices[0]);
                for (i, v) in vertices.iter().enumerate().skip(1) {
                    let val = c.dot(v);
                    if val > best_val {
                        best_val = val;
                        best = i;
                    }
                }
                Ok(vertices[best].clone())
            }
        }
    }

    /// Support value `max_{x in set} <c, x>`.
    pub fn support(&self, c: &DVector<f64>) -> Result<f64> {
        Ok(c.dot(&self.lmo(c)?))
    }

    /// True iff `x` lies within Euclidean distance `tol` of the set.
    pub fn membership(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        self.check_dim(x)?;
        match &self.kind {
            SetKind::Simplex => {
                let (_, dist) = project_to_simplex(x);
                Ok(dist <= tol)
            }
            SetKind::Box { lower, upper } => {
                let mut sq = 0.0;
                for i in 0..self.dim {
                    let excess = (lower[i] - x[i]).max(x[i] - upper[i]).max(0.0);
                    sq += excess * excess;
                }
                Ok(sq.sqrt() <= tol)
            }
            SetKind::Ball { center, radius } => Ok((x - center).norm() <= radius + tol),
            SetKind::VPolytope { vertices } => {
                // Feasibility program over convex-combination weights,
                // minimizing the l1 residual (an upper bound on the l2
                // distance, so acceptance is conservative).
                let d = self.dim;
                let n = vertices.len();
                let mut c = vec![0.0; n + 2 * d];
                for slot in c.iter_mut().skip(n) {
                    *slot = 1.0;
                }
                let mut rows = Vec::with_capacity(d + 1);
                for r in 0..d {
                    let mut row = vec![0.0; n + 2 * d];
                    for (j, v) in vertices.iter().enumerate() {
                        row[j] = v[r];
                    }
                    row[n + r] = 1.0;
                    row[n + d + r] = -1.0;
                    rows.push(row);
                }
                let mut sum_row = vec![0.0; n + 2 * d];
                for slot in sum_row.iter_mut().take(n) {
                    *slot = 1.0;
                }
                rows.push(sum_row);
                let mut b: Vec<f64> = x.iter().copied().collect();
                b.push(1.0);
                match lp::solve_min(&c, &rows, &b)? {
                    LpOutcome::Optimal(sol) => {
                        let slack = 1e-10 * (1.0 + x.amax());
                        Ok(sol.objective <= tol + slack)
                    }
                    LpOutcome::Infeasible { .. } => Err(CoreError::Internal(
                        "membership feasibility program has no solution".into(),
                    )),
                }
            }
        }
    }

    /// Finite vertex list whose convex hull equals the set.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>> {
        match &self.kind {
            SetKind::Simplex => Ok((0..self.dim)
                .map(|i| {
                    let mut e = DVector::zeros(self.dim);
                    e[i] = 1.0;
                    e
                })
                .collect()),
            SetKind::Box { lower, upper } => {
                if self.dim > BOX_VERTEX_DIM_CAP {
                    return Err(CoreError::Unsupported(format!(
                        "box vertex enumeration capped at dim {BOX_VERTEX_DIM_CAP}"
                    )));
                }
                let count = 1usize << self.dim;
                let mut out = Vec::with_capacity(count);
                for mask in 0..count {
                    let mut v = DVector::zeros(self.dim);
                    for i in 0..self.dim {
                        v[i] = if mask & (1 << i) != 0 { upper[i] } else { lower[i] };
                    }
                    out.push(v);
                }
                Ok(out)
            }
            SetKind::Ball { .. } => Err(CoreError::Unsupported(
                "ball has no vertex list; use direction sampling".into(),
            )),
            SetKind::VPolytope { vertices } => Ok(vertices.clone()),
        }
    }

    /// Random feasible point, used by certification sampling and tests.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match &self.kind {
            SetKind::Simplex => dirichlet_uniform(self.dim, rng),
            SetKind::Box { lower, upper } => DVector::from_fn(self.dim, |i, _| {
                lower[i] + (upper[i] - lower[i]) * rng.gen::<f64>()
            }),
            SetKind::Ball { center, radius } => {
                let dir = random_direction(self.dim, rng);
                let r = *radius * rng.gen::<f64>().powf(1.0 / self.dim as f64);
                center + dir * r
            }
            SetKind::VPolytope { vertices } => {
                let w = dirichlet_uniform(vertices.len(), rng);
                let mut x = DVector::zeros(self.dim);
                for (j, v) in vertices.iter().enumerate() {
                    x += v * w[j];
                }
                x
            }
        }
    }
}

/// Uniform point on the probability simplex via exponential spacings.
fn dirichlet_uniform<R: Rng>(dim: usize, rng: &mut R) -> DVector<f64> {
    let mut w = DVector::from_fn(dim, |_, _| -> f64 {
        let u: f64 = rng.gen::<f64>();
        -(1.0 - u).ln()
    });
    let total = w.sum();
    w /= total;
    w
}

/// Uniform direction on the unit sphere.
pub fn random_direction<R: Rng>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-based, exact up
/// to rounding). Returns `(projection, distance)`.
pub fn project_to_simplex(y: &DVector<f64>) -> (DVector<f64>, f64) {
    let dim = y.len();
    let mut sorted: Vec<f64> = y.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (1.0 - cumsum) / (j + 1) as f64;
        if u + candidate > 0.0 {
            tau = candidate;
        }
    }
    let proj = DVector::from_fn(dim, |i, _| (y[i] + tau).max(0.0));
    let dist = (y - &proj).norm();
    (proj, dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn lmo_simplex_picks_coordinate_max() {
        let s = ConvexSet::simplex(3).unwrap();
        let x = s.lmo(&DVector::from_vec(vec![0.2, -1.0, 0.5])).unwrap();
        assert_eq!(x, DVector::from_vec(vec![0.0, 0.0, 1.0]));
    }

    #[test]
    fn lmo_ball_scales_direction() {
        let s = ConvexSet::ball(DVector::zeros(2), 2.0).unwrap();
        let x = s.lmo(&vec2(3.0, 4.0)).unwrap();
        assert!((x - vec2(1.2, 1.6)).norm() < 1e-12);
    }

    #[test]
    fn lmo_box_zero_coordinate_goes_up() {
        let s = ConvexSet::cube(2, 1.0).unwrap();
        let x = s.lmo(&vec2(0.0, -2.0)).unwrap();
        assert_eq!(x, vec2(1.0, -1.0));
    }

    #[test]
    fn lmo_ties_break_to_lowest_index() {
        let s = ConvexSet::simplex(3).unwrap();
        let x = s.lmo(&DVector::from_vec(vec![1.0, 1.0, 1.0])).unwrap();
        assert_eq!(x, DVector::from_vec(vec![1.0, 0.0, 0.0]));
    }

    #[test]
    fn lmo_dimension_mismatch() {
        let s = ConvexSet::simplex(3).unwrap();
        assert!(s.lmo(&vec2(1.0, 2.0)).is_err());
    }

    #[test]
    fn membership_examples() {
        let simplex = ConvexSet::simplex(2).unwrap();
        assert!(simplex.membership(&vec2(0.5, 0.5), 0.0).unwrap());
        let ball = ConvexSet::ball(DVector::zeros(2), 1.0).unwrap();
        assert!(ball.membership(&vec2(1.0001, 0.0), 1e-3).unwrap());
        let cube = ConvexSet::cube(2, 1.0).unwrap();
        assert!(!cube.membership(&vec2(1.1, 0.0), 0.0).unwrap());
    }

    #[test]
    fn membership_vpolytope_feasibility() {
        let tri = ConvexSet::vpolytope(vec![vec2(1.0, 0.0), vec2(0.0, 1.0), vec2(1.0, 1.0)])
            .unwrap();
        assert!(tri.membership(&vec2(0.5, 0.5), 1e-9).unwrap());
        assert!(tri.membership(&vec2(0.7, 0.8), 1e-9).unwrap());
        assert!(!tri.membership(&vec2(0.1, 0.1), 1e-6).unwrap());
        // Inflation accepts a point just outside.
        assert!(tri.membership(&vec2(1.0005, 1.0), 1e-3).unwrap());
    }

    #[test]
    fn vertices_examples() {
        let simplex = ConvexSet::simplex(2).unwrap();
        assert_eq!(
            simplex.vertices().unwrap(),
            vec![vec2(1.0, 0.0), vec2(0.0, 1.0)]
        );
        let cube = ConvexSet::cube(2, 1.0).unwrap();
        assert_eq!(cube.vertices().unwrap().len(), 4);
        let ball = ConvexSet::ball(DVector::zeros(2), 1.0).unwrap();
        assert!(matches!(
            ball.vertices(),
            Err(CoreError::Unsupported(_))
        ));
    }

    #[test]
    fn degenerate_sets_rejected() {
        assert!(ConvexSet::ball(DVector::zeros(2), 0.0).is_err());
        assert!(ConvexSet::bounded_box(vec2(0.0, 0.0), vec2(1.0, 0.0)).is_err());
        // Two collinear vertices do not span R^2.
        assert!(ConvexSet::vpolytope(vec![vec2(1.0, 1.0), vec2(2.0, 2.0)]).is_err());
    }

    #[test]
    fn lmo_dominates_random_feasible_points() {
        let mut rng = stream_rng(11, 99);
        let sets = [
            ConvexSet::simplex(4).unwrap(),
            ConvexSet::cube(3, 1.5).unwrap(),
            ConvexSet::ball(DVector::zeros(3), 2.0).unwrap(),
            ConvexSet::vpolytope(vec![
                vec2(1.0, 0.0),
                vec2(0.0, 1.0),
                vec2(1.0, 1.0),
                vec2(-0.5, 0.3),
            ])
            .unwrap(),
        ];
        for set in &sets {
            for _ in 0..200 {
                let c = random_direction(set.dim(), &mut rng);
                let best = set.support(&c).unwrap();
                for _ in 0..20 {
                    let p = set.sample_point(&mut rng);
                    assert!(best >= c.dot(&p) - 1e-9);
                }
                let opt = set.lmo(&c).unwrap();
                assert!(set.membership(&opt, 1e-9).unwrap());
            }
        }
    }

    #[test]
    fn lmo_equals_vertex_max_on_enumerable_sets() {
        let mut rng = stream_rng(12, 99);
        let sets = [
            ConvexSet::simplex(5).unwrap(),
            ConvexSet::cube(4, 2.0).unwrap(),
        ];
        for set in &sets {
            let verts = set.vertices().unwrap();
            for _ in 0..200 {
                let c = random_direction(set.dim(), &mut rng);
                let vmax = verts
                    .iter()
                    .map(|v| c.dot(v))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(set.support(&c).unwrap(), vmax);
            }
        }
    }

    #[test]
    fn simplex_projection_known_points() {
        let (p, dist) = project_to_simplex(&vec2(0.5, 0.5));
        assert!((p - vec2(0.5, 0.5)).norm() < 1e-12);
        assert!(dist < 1e-12);
        let (p, _) = project_to_simplex(&vec2(2.0, 0.0));
        assert!((p - vec2(1.0, 0.0)).norm() < 1e-12);
        let (p, _) = project_to_simplex(&vec2(-1.0, -1.0));
        assert!((p - vec2(0.5, 0.5)).norm() < 1e-12);
    }
}
