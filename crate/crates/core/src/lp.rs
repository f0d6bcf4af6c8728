//! Minimal dense LP solver for the gauge and membership programs.
//!
//! Solves `min c'x  s.t.  Ax = b, x >= 0` with a two-phase full-tableau
//! simplex (objective row carried through pivots, Dantzig pricing with a
//! Bland fallback against cycling). Problems here are tiny — tens of rows,
//! at most ~1k columns — and live only in audits and metrics, never in the
//! round loop.

use crate::error::{CoreError, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;
const BLAND_AFTER: usize = 2_000;

#[derive(Debug, Clone)]
pub struct LpSolution {
    #[allow(dead_code)] // carried for callers that need the argmin, not just the value
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// Phase-1 could not drive the artificials to zero; `residual` is the
    /// leftover infeasibility (an l1 distance in the constraint system).
    Infeasible { residual: f64 },
}

/// Constraint rows plus a maintained reduced-cost row (index `rows`).
struct Tableau {
    rows: usize,
    cols: usize, // structural + artificial columns
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.width + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    /// Rebuild the reduced-cost row for objective `costs`.
    fn set_objective(&mut self, costs: &[f64]) {
        let zrow = self.rows;
        for (j, &cost) in costs.iter().enumerate() {
            *self.at_mut(zrow, j) = cost;
        }
        *self.at_mut(zrow, self.cols) = 0.0;
        for r in 0..self.rows {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                for j in 0..=self.cols {
                    let v = self.at(r, j);
                    *self.at_mut(zrow, j) -= cb * v;
                }
            }
        }
    }

    fn pivot(&mut self, prow: usize, pcol: usize) {
        let pval = self.at(prow, pcol);
        let inv = 1.0 / pval;
        for c in 0..self.width {
            *self.at_mut(prow, c) *= inv;
        }
        for r in 0..=self.rows {
            if r == prow {
                continue;
            }
            let factor = self.at(r, pcol);
            if factor == 0.0 {
                continue;
            }
            for c in 0..self.width {
                let v = self.at(prow, c);
                *self.at_mut(r, c) -= factor * v;
            }
            *self.at_mut(r, pcol) = 0.0;
        }
        self.basis[prow] = pcol;
    }

    /// Pivot until the current objective row is optimal over columns
    /// `< allowed_cols`. Returns the objective value.
    fn optimize(&mut self, allowed_cols: usize) -> Result<f64> {
        let zrow = self.rows;
        let mut pivots = 0usize;
        loop {
            let mut entering = None;
            let mut best = -PIVOT_TOL;
            for j in 0..allowed_cols {
                let red = self.at(zrow, j);
                if pivots >= BLAND_AFTER {
                    if red < -PIVOT_TOL {
                        entering = Some(j);
                        break;
                    }
                } else if red < best {
                    best = red;
                    entering = Some(j);
                }
            }
            let Some(pcol) = entering else {
                break;
            };

            let mut prow: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, pcol);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    if ratio < best_ratio - 1e-15
                        || (ratio < best_ratio + 1e-15
                            && prow.is_some_and(|p| self.basis[r] < self.basis[p]))
                    {
                        best_ratio = ratio;
                        prow = Some(r);
                    }
                }
            }
            let Some(prow) = prow else {
                return Err(CoreError::LpFailure("unbounded program".into()));
            };
            self.pivot(prow, pcol);
            pivots += 1;
            if pivots > MAX_PIVOTS {
                return Err(CoreError::LpFailure(format!(
                    "pivot cap {MAX_PIVOTS} exceeded"
                )));
            }
        }
        // Objective row rhs holds -(objective value).
        Ok(-self.at(zrow, self.cols))
    }
}

/// Solve `min c'x  s.t.  a_eq x = b, x >= 0`.
///
/// `a_eq` is row-major with `b.len()` rows of `c.len()` entries each.
pub fn solve_min(c: &[f64], a_eq: &[Vec<f64>], b: &[f64]) -> Result<LpOutcome> {
    let m = b.len();
    let n = c.len();
    if a_eq.len() != m || a_eq.iter().any(|row| row.len() != n) {
        return Err(CoreError::LpFailure("inconsistent LP shape".into()));
    }

    let cols = n + m; // structural + one artificial per row
    let width = cols + 1;
    let mut data = vec![0.0; (m + 1) * width];
    for (r, row) in a_eq.iter().enumerate() {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for (j, &v) in row.iter().enumerate() {
            data[r * width + j] = sign * v;
        }
        data[r * width + n + r] = 1.0;
        data[r * width + cols] = sign * b[r];
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        width,
        data,
        basis: (n..n + m).collect(),
    };

    // Phase 1: minimize the artificials.
    let mut phase1 = vec![0.0; cols];
    for slot in phase1.iter_mut().skip(n) {
        *slot = 1.0;
    }
    tab.set_objective(&phase1);
    let residual = tab.optimize(cols)?;
    if residual > FEAS_TOL {
        return Ok(LpOutcome::Infeasible { residual });
    }
    // Drive any zero-level artificial out of the basis when possible.
    for r in 0..m {
        if tab.basis[r] >= n {
            let pcol = (0..n).find(|&j| tab.at(r, j).abs() > 1e-8);
            if let Some(pcol) = pcol {
                tab.pivot(r, pcol);
            }
        }
    }

    // Phase 2: original objective over structural columns only (rows whose
    // basis is still artificial are degenerate and pinned at zero).
    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(c);
    tab.set_objective(&phase2);
    let objective = tab.optimize(n)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r);
        }
    }
    Ok(LpOutcome::Optimal(LpSolution { x, objective }))
}
