//! Ellipsoidal rounding and the quadratic regularizer.
//!
//! For the symmetrized action set `K = conv(X u -X)` we need an ellipsoid
//! sandwich `E ⊆ K ⊆ alpha E` with `alpha <= sqrt(d(d+1))`. Closed forms
//! cover simplex / centered box / centered ball; everything else goes
//! through an origin-centered minimum-volume enclosing ellipsoid computed
//! by Khachiyan coordinate ascent (with the usual away-step refinement) and
//! the symmetric John inclusion. The sandwich is certified at build time,
//! never trusted.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::geometry::{random_direction, ConvexSet};
use crate::rng::stream_rng;

const MVEE_ITER_CAP: usize = 100_000;
const MVEE_REFACTOR_EVERY: usize = 64;
const SANDWICH_DIRECTIONS: usize = 1000;
const SANDWICH_SEED: u64 = 0xE111;

/// Structure tag used to dispatch exact regularized-argmax solves.
#[derive(Debug, Clone, PartialEq)]
pub enum RegStructure {
    /// `H = s I`.
    Scalar(f64),
    /// `H = diag(d)`.
    Diagonal(DVector<f64>),
    General,
}

#[derive(Debug, Clone)]
pub struct Regularizer {
    h: DMatrix<f64>,
    h_inv: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    alpha_eff: f64,
    eps_mvee: f64,
    structure: RegStructure,
}

impl Regularizer {
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn h_inv(&self) -> &DMatrix<f64> {
        &self.h_inv
    }

    pub fn chol_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// Achieved sandwich factor (`K ⊆ alpha_eff E` over checked points).
    pub fn alpha_eff(&self) -> f64 {
        self.alpha_eff
    }

    pub fn eps_mvee(&self) -> f64 {
        self.eps_mvee
    }

    pub fn structure(&self) -> &RegStructure {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `phi(x) = x' H x / 2`.
    pub fn phi(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.h * x).dot(x)
    }

    /// `grad phi(x) = H x`.
    pub fn grad_phi(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x
    }

    /// `D_phi(u, v) = (u-v)' H (u-v) / 2` (exact for quadratics).
    pub fn bregman(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let d = u - v;
        0.5 * (&self.h * &d).dot(&d)
    }

    /// `||z||_H = sqrt(z' H z)`.
    pub fn h_norm(&self, z: &DVector<f64>) -> f64 {
        (&self.h * z).dot(z).max(0.0).sqrt()
    }
}

/// Origin-centered minimum-volume enclosing ellipsoid of a symmetric point
/// set; returns `H` with `p' H p <= 1 + eps` for every input point and
/// `(1+eps)`-optimal volume.
///
/// Khachiyan ascent on `log det M(u)`, `M(u) = sum u_i p_i p_i'`, choosing
/// at each step the better of the Frank-Wolfe move (toward the max-score
/// point) and the away move (off the min-score carried point). Scores are
/// maintained by rank-one updates with periodic full refactorization.
pub fn mvee(points: &[DVector<f64>], eps: f64) -> Result<DMatrix<f64>> {
    if eps.is_nan() || eps <= 0.0 || eps >= 0.5 {
        return Err(CoreError::InvalidParameter(format!(
            "mvee eps must lie in (0, 0.5), got {eps}"
        )));
    }
    let n = points.len();
    let Some(first) = points.first() else {
        return Err(CoreError::InvalidParameter("mvee needs points".into()));
    };
    let d = first.len();
    if points.iter().any(|p| p.len() != d) {
        return Err(CoreError::InvalidParameter(
            "mvee points must share one dimension".into(),
        ));
    }
    // The center is pinned at the origin, which is only the MVEE center for
    // a negation-closed list; enforce that (up to rounding in the inputs).
    for p in points {
        let tol = 1e-9 * (1.0 + p.amax());
        let has_neg = points.iter().any(|q| (q + p).amax() <= tol);
        if !has_neg {
            return Err(CoreError::InvalidParameter(
                "mvee point list must be closed under negation".into(),
            ));
        }
    }

    if d == 1 {
        let m = points.iter().fold(0.0f64, |a, p| a.max(p[0].abs()));
        if m == 0.0 {
            return Err(CoreError::RankDeficient("mvee of the origin alone".into()));
        }
        return Ok(DMatrix::from_element(1, 1, 1.0 / (m * m)));
    }

    let dd = d as f64;
    let target = dd * (1.0 + eps);
    let mut u = vec![1.0 / n as f64; n];

    let refactor = |u: &[f64]| -> Result<(DMatrix<f64>, Vec<f64>)> {
        let mut m = DMatrix::zeros(d, d);
        for (i, p) in points.iter().enumerate() {
            if u[i] > 0.0 {
                m += p * p.transpose() * u[i];
            }
        }
        let chol = Cholesky::new(m).ok_or_else(|| {
            CoreError::RankDeficient("mvee points do not span the space".into())
        })?;
        let m_inv = chol.inverse();
        let scores = points.iter().map(|p| (&m_inv * p).dot(p)).collect();
        Ok((m_inv, scores))
    };

    let (mut m_inv, mut scores) = refactor(&u)?;
    let mut since_refactor = 0usize;

    for _ in 0..MVEE_ITER_CAP {
        let (j_max, kappa) = argmax(&scores);
        if kappa <= target {
            // Confirm on exactly refactored state before accepting.
            let (mi, sc) = refactor(&u)?;
            m_inv = mi;
            scores = sc;
            since_refactor = 0;
            let (_, kappa_exact) = argmax(&scores);
            if kappa_exact <= target * (1.0 + 1e-12) {
                return Ok(m_inv / dd);
            }
            continue;
        }

        // Frank-Wolfe move toward the worst-covered point.
        let beta_fw = (kappa - dd) / (dd * (kappa - 1.0));
        let gain_fw = step_gain(dd, beta_fw, kappa);

        // Away move off the best-covered carried point. For scores <= 1 the
        // line-search optimum lies past the step parameterization's pole, so
        // the best admissible move is the full drop.
        let mut away: Option<(usize, f64, f64)> = None;
        if let Some((j_min, g_min)) = argmin_supported(&scores, &u) {
            if u[j_min] < 1.0 - 1e-12 && g_min < dd {
                let cap = -u[j_min] / (1.0 - u[j_min]);
                let beta = if g_min <= 1.0 {
                    cap
                } else {
                    ((g_min - dd) / (dd * (g_min - 1.0))).max(cap)
                };
                if beta < 0.0 {
                    away = Some((j_min, beta, step_gain(dd, beta, g_min)));
                }
            }
        }

        let (j, beta) = match away {
            Some((ja, ba, gain_aw)) if gain_aw > gain_fw => (ja, ba),
            _ => (j_max, beta_fw),
        };

        // u <- (1-beta) u + beta e_j, with rank-one score maintenance.
        let g_j = scores[j];
        let gamma = beta / (1.0 - beta);
        let denom = 1.0 + gamma * g_j;
        if !denom.is_finite() || denom.abs() < 1e-12 {
            let (mi, sc) = refactor(&u)?;
            m_inv = mi;
            scores = sc;
            since_refactor = 0;
            continue;
        }
        for w in u.iter_mut() {
            *w *= 1.0 - beta;
        }
        u[j] += beta;
        if u[j] < 1e-15 {
            u[j] = 0.0;
        }

        since_refactor += 1;
        if since_refactor >= MVEE_REFACTOR_EVERY {
            let (mi, sc) = refactor(&u)?;
            m_inv = mi;
            scores = sc;
            since_refactor = 0;
        } else {
            let w = &m_inv * &points[j];
            let scale = gamma / denom;
            for (i, p) in points.iter().enumerate() {
                let t = w.dot(p);
                scores[i] = (scores[i] - scale * t * t) / (1.0 - beta);
            }
            m_inv = (m_inv - &w * w.transpose() * scale) / (1.0 - beta);
        }
    }
    Err(CoreError::IterationCap {
        cap: MVEE_ITER_CAP,
        context: "mvee coordinate ascent".into(),
    })
}

fn argmax(scores: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    (best, scores[best])
}

fn argmin_supported(scores: &[f64], u: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<usize> = None;
    for i in 0..scores.len() {
        if u[i] > 1e-12 && best.is_none_or(|b| scores[i] < scores[b]) {
            best = Some(i);
        }
    }
    best.map(|i| (i, scores[i]))
}

/// `log det` gain of the move `u <- (1-beta) u + beta e_j` when point `j`
/// has score `g`.
fn step_gain(d: f64, beta: f64, g: f64) -> f64 {
    d * (1.0 - beta).ln() + (1.0 + beta * g / (1.0 - beta)).ln()
}

/// Build the ellipsoidal regularizer `phi(x) = x' H x / 2` for the set.
pub fn build_regularizer(set: &ConvexSet, eps: f64) -> Result<Regularizer> {
    let d = set.dim();
    let dd = d as f64;

    let sample_points = rounding_points(set)?;
    let (h, structure) = if set.has_closed_form_regularizer() {
        if let Some(widths) = set.centered_box_halfwidths() {
            // Inscribed John ellipsoid of the box itself.
            let diag = DVector::from_fn(d, |i, _| 1.0 / (widths[i] * widths[i]));
            (DMatrix::from_diagonal(&diag), RegStructure::Diagonal(diag))
        } else if let Some(r) = set.centered_ball_radius() {
            let s = 1.0 / (r * r);
            (DMatrix::identity(d, d) * s, RegStructure::Scalar(s))
        } else {
            // Simplex: K is the cross-polytope, inscribed ball radius
            // 1/sqrt(d), enclosing ball radius 1.
            (DMatrix::identity(d, d) * dd, RegStructure::Scalar(dd))
        }
    } else {
        let h_mvee = mvee(&sample_points, eps)?;
        (h_mvee * (dd * (1.0 + eps) * (1.0 + eps)), RegStructure::General)
    };

    // Achieved outer factor, measured on the symmetrized points we can see.
    let mut alpha_sq: f64 = 0.0;
    for p in &sample_points {
        alpha_sq = alpha_sq.max((&h * p).dot(p));
    }
    let alpha_eff = alpha_sq.sqrt();

    let chol = Cholesky::new(h.clone()).ok_or_else(|| {
        CoreError::RankDeficient("regularizer matrix is not positive definite".into())
    })?;
    let chol_l: DMatrix<f64> = chol.l().clone_owned();
    let pivots: Vec<f64> = (0..d).map(|i| chol_l[(i, i)]).collect();
    let pmax = pivots.iter().fold(0.0f64, |a, &b| a.max(b));
    let pmin = pivots.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if pmin.is_nan() || pmin <= 1e-12 * pmax {
        return Err(CoreError::RankDeficient(format!(
            "regularizer Cholesky pivot ratio {:.3e} below 1e-12",
            pmin / pmax
        )));
    }
    let h_inv = chol.inverse();

    let reg = Regularizer {
        h,
        h_inv,
        chol_l,
        alpha_eff,
        eps_mvee: eps,
        structure,
    };
    certify_sandwich(&reg, set, &sample_points)?;
    Ok(reg)
}

/// Minimizer of `phi` over the set: the regularized argmax with zero
/// utility. Unique by strong convexity.
pub fn argmin_phi(reg: &Regularizer, set: &ConvexSet) -> Result<DVector<f64>> {
    let zero = DVector::zeros(set.dim());
    crate::oftrl::solve_reg_argmax(&zero, 1.0, reg, set, &crate::oftrl::SolveOptions::default())
}

/// Symmetrized vertex list, or LMO boundary samples for sets without
/// vertices (only balls here; the closed forms cover centered balls, so
/// this path is exercised by tests).
fn rounding_points(set: &ConvexSet) -> Result<Vec<DVector<f64>>> {
    let d = set.dim();
    if let Ok(verts) = set.vertices() {
        let mut pts = Vec::with_capacity(verts.len() * 2);
        for v in &verts {
            pts.push(v.clone());
        }
        for v in &verts {
            pts.push(-v);
        }
        Ok(pts)
    } else {
        let count = 4 * d * d;
        let mut rng = stream_rng(SANDWICH_SEED, 1);
        let mut pts = Vec::with_capacity(count * 2);
        for _ in 0..count {
            let dir = random_direction(d, &mut rng);
            let p = set.lmo(&dir)?;
            pts.push(-&p);
            pts.push(p);
        }
        Ok(pts)
    }
}

/// Certify `E ⊆ K ⊆ alpha_eff E` with `alpha_eff <= sqrt(d(d+1))`:
/// vertex check on the outer inclusion, support-function check on the inner.
fn certify_sandwich(
    reg: &Regularizer,
    set: &ConvexSet,
    sym_points: &[DVector<f64>],
) -> Result<()> {
    let d = set.dim() as f64;
    let alpha_limit = (d * (d + 1.0)).sqrt();
    if reg.alpha_eff > alpha_limit + 1e-9 {
        return Err(CoreError::CertificationFailed {
            what: "sandwich outer factor alpha_eff".into(),
            value: reg.alpha_eff,
            limit: alpha_limit,
        });
    }
    let alpha_sq = reg.alpha_eff * reg.alpha_eff;
    for p in sym_points {
        let q = (reg.h() * p).dot(p);
        if q > alpha_sq + 1e-9 {
            return Err(CoreError::CertificationFailed {
                what: "vertex check v' H v".into(),
                value: q,
                limit: alpha_sq,
            });
        }
    }
    // Inner inclusion via support functions: h_E(z) <= h_K(z) for random z.
    let mut rng = stream_rng(SANDWICH_SEED, 2);
    for _ in 0..SANDWICH_DIRECTIONS {
        let z = random_direction(set.dim(), &mut rng);
        let h_e = (reg.h_inv() * &z).dot(&z).max(0.0).sqrt();
        let h_k = set.support(&z)?.max(set.support(&(-&z))?);
        if h_e > h_k * (1.0 + 1e-6) {
            return Err(CoreError::CertificationFailed {
                what: "inner inclusion support check".into(),
                value: h_e,
                limit: h_k,
            });
        }
    }
    Ok(())
}
