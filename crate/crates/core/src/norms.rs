//! Set-induced primal/dual norm pair.
//!
//! The dual norm is `max_{x in X} |<x, z>|`, evaluated with two LMO calls.
//! The primal norm is the gauge of `K = conv(X u -X)`: closed forms for
//! simplex / centered box / centered ball, otherwise a small LP over the
//! symmetrized vertices. Used by the regularizer audits, the RVU audit, and
//! the concentration diagnostics — never in the round loop.

use nalgebra::DVector;

use crate::error::{CoreError, Result};
use crate::geometry::ConvexSet;
use crate::lp::{self, LpOutcome};

#[derive(Debug, Clone, PartialEq)]
pub enum GaugeClosedForm {
    /// Simplex: `K` is the cross-polytope, gauge is l1, dual is l-inf.
    SimplexL1,
    /// Centered box `[-u, u]`: gauge is `max_i |z_i| / u_i`, dual is
    /// `sum_i u_i |z_i|`.
    BoxScaledLinf { halfwidths: DVector<f64> },
    /// Centered ball: gauge is `||z||_2 / r`, dual is `r ||z||_2`.
    BallL2 { radius: f64 },
}

/// `max_{x in X} |<x, z>|` via two LMO calls; needs no context.
pub fn dual_norm(set: &ConvexSet, z: &DVector<f64>) -> Result<f64> {
    Ok(set.support(z)?.max(set.support(&(-z))?))
}

#[derive(Debug, Clone)]
pub struct NormContext {
    set: ConvexSet,
    symmetrized_vertices: Option<Vec<DVector<f64>>>,
    closed_form: Option<GaugeClosedForm>,
}

impl NormContext {
    /// Context with closed forms detected from the set.
    pub fn new(set: &ConvexSet) -> Result<Self> {
        let closed_form = if let Some(u) = set.centered_box_halfwidths() {
            Some(GaugeClosedForm::BoxScaledLinf { halfwidths: u })
        } else if let Some(r) = set.centered_ball_radius() {
            Some(GaugeClosedForm::BallL2 { radius: r })
        } else if set.has_closed_form_gauge() {
            Some(GaugeClosedForm::SimplexL1)
        } else {
            None
        };
        let symmetrized_vertices = symmetrize(set);
        if closed_form.is_none() && symmetrized_vertices.is_none() {
            return Err(CoreError::Unsupported(
                "primal norm needs a closed form or enumerable vertices".into(),
            ));
        }
        Ok(Self {
            set: set.clone(),
            symmetrized_vertices,
            closed_form,
        })
    }

    /// Context forced onto the generic LP path (cross-checking closed forms).
    pub fn generic(set: &ConvexSet) -> Result<Self> {
        let symmetrized_vertices = symmetrize(set).ok_or_else(|| {
            CoreError::Unsupported("generic gauge path needs enumerable vertices".into())
        })?;
        Ok(Self {
            set: set.clone(),
            symmetrized_vertices: Some(symmetrized_vertices),
            closed_form: None,
        })
    }

    pub fn set(&self) -> &ConvexSet {
        &self.set
    }

    /// `||z||_* = max_{x in X} |<x, z>|` via two LMO calls.
    pub fn dual_norm(&self, z: &DVector<f64>) -> Result<f64> {
        dual_norm(&self.set, z)
    }

    /// Gauge of `K = conv(X u -X)`: `min { t > 0 : z in tK }`.
    pub fn primal_norm(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.set.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.set.dim(),
                got: z.len(),
            });
        }
        if z.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        match &self.closed_form {
            Some(GaugeClosedForm::SimplexL1) => Ok(z.iter().map(|v| v.abs()).sum()),
            Some(GaugeClosedForm::BoxScaledLinf { halfwidths }) => Ok((0..z.len())
                .map(|i| z[i].abs() / halfwidths[i])
                .fold(0.0, f64::max)),
            Some(GaugeClosedForm::BallL2 { radius }) => Ok(z.norm() / radius),
            None => self.gauge_lp(z),
        }
    }

    /// `||x||_X * ||z||_* - |<x, z>|`; nonnegative by norm duality.
    pub fn norm_duality_check(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        Ok(self.primal_norm(x)? * self.dual_norm(z)? - x.dot(z).abs())
    }

    /// `min sum mu  s.t.  sum mu_i w_i = z, mu >= 0` over symmetrized
    /// vertices `w_i`; the optimum is the gauge of `K`.
    fn gauge_lp(&self, z: &DVector<f64>) -> Result<f64> {
        let verts = self
            .symmetrized_vertices
            .as_ref()
            .ok_or_else(|| CoreError::Unsupported("no vertices for gauge LP".into()))?;
        let d = self.set.dim();
        let n = verts.len();
        let c = vec![1.0; n];
        let mut rows = Vec::with_capacity(d);
        for r in 0..d {
            rows.push(verts.iter().map(|w| w[r]).collect::<Vec<_>>());
        }
        let b: Vec<f64> = z.iter().copied().collect();
        match lp::solve_min(&c, &rows, &b)? {
            LpOutcome::Optimal(sol) => Ok(sol.objective),
            LpOutcome::Infeasible { residual } => Err(CoreError::LpFailure(format!(
                "gauge program infeasible (residual {residual:.3e}); set does not span"
            ))),
        }
    }
}

fn symmetrize(set: &ConvexSet) -> Option<Vec<DVector<f64>>> {
    set.vertices().ok().map(|vs| {
        let mut out = Vec::with_capacity(vs.len() * 2);
        for v in &vs {
            out.push(v.clone());
        }
        for v in &vs {
            out.push(-v);
        }
        out
    })
}
