//! The zero-sum game instance seen only by the referee.
//!
//! Payoffs are normalized at construction: `scale` is a guaranteed upper
//! bound on `sup |x' A y|` over the action sets, and players ever only see
//! rewards of `A / scale`, so the feedback they observe lies in `[-1, 1]`.

use nalgebra::{DMatrix, DVector};

use saddlesim_core::geometry::{random_direction, ConvexSet, SetKind};
use saddlesim_core::rng::stream_rng;

use crate::error::{Result, SimError};

const ASCENT_STARTS: usize = 16;
const ASCENT_SWEEPS: usize = 128;
const ASCENT_SEED: u64 = 0x5CA1E;

#[derive(Debug, Clone)]
pub struct GameInstance {
    set_x: ConvexSet,
    set_y: ConvexSet,
    a: DMatrix<f64>,
    scale: f64,
    a_scaled: DMatrix<f64>,
}

impl GameInstance {
    pub fn new(set_x: ConvexSet, set_y: ConvexSet, a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != set_x.dim() || a.ncols() != set_y.dim() {
            return Err(SimError::Config(format!(
                "matrix is {}x{} but the sets have dimensions {} and {}",
                a.nrows(),
                a.ncols(),
                set_x.dim(),
                set_y.dim()
            )));
        }
        let scale = payoff_scale(&set_x, &set_y, &a)?;
        let a_scaled = &a / scale;
        Ok(Self {
            set_x,
            set_y,
            a,
            scale,
            a_scaled,
        })
    }

    pub fn set_x(&self) -> &ConvexSet {
        &self.set_x
    }

    pub fn set_y(&self) -> &ConvexSet {
        &self.set_y
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn matrix_scaled(&self) -> &DMatrix<f64> {
        &self.a_scaled
    }

    /// Row player's normalized payoff `<x, (A/s) y>`.
    pub fn payoff(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (self.a_scaled.transpose() * x).dot(y)
    }
}

/// Guaranteed upper bound on `sup |x' A y|`: exact over vertex pairs when
/// both sets enumerate, exact via the ball support function when one side
/// is a ball, and an alternating-ascent estimate doubled as a safety factor
/// when neither side has vertices. Never returns zero.
pub fn payoff_scale(set_x: &ConvexSet, set_y: &ConvexSet, a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != set_x.dim() || a.ncols() != set_y.dim() {
        return Err(SimError::Config("matrix shape mismatch".into()));
    }
    let vx = set_x.vertices().ok();
    let vy = set_y.vertices().ok();
    let s = match (vx, vy) {
        (Some(vx), Some(vy)) => {
            let mut best: f64 = 0.0;
            for v in &vx {
                let av = a.transpose() * v;
                for w in &vy {
                    best = best.max(av.dot(w).abs());
                }
            }
            best
        }
        (Some(vx), None) => {
            let SetKind::Ball { center, radius } = set_y.kind() else {
                return Err(SimError::Config(
                    "vertex-free set other than a ball".into(),
                ));
            };
            let mut best: f64 = 0.0;
            for v in &vx {
                let av = a.transpose() * v;
                best = best.max(av.dot(center).abs() + radius * av.norm());
            }
            best
        }
        (None, Some(vy)) => {
            let SetKind::Ball { center, radius } = set_x.kind() else {
                return Err(SimError::Config(
                    "vertex-free set other than a ball".into(),
                ));
            };
            let mut best: f64 = 0.0;
            for w in &vy {
                let aw = a * w;
                best = best.max(aw.dot(center).abs() + radius * aw.norm());
            }
            best
        }
        (None, None) => 2.0 * alternating_ascent(set_x, set_y, a)?,
    };
    Ok(s.max(f64::EPSILON))
}

/// Alternating LMO ascent of `|x' A y|` from random starts.
fn alternating_ascent(set_x: &ConvexSet, set_y: &ConvexSet, a: &DMatrix<f64>) -> Result<f64> {
    let mut rng = stream_rng(ASCENT_SEED, 0);
    let mut best: f64 = 0.0;
    for _ in 0..ASCENT_STARTS {
        let dir = random_direction(set_y.dim(), &mut rng);
        let mut y = set_y.lmo(&dir)?;
        let mut current: f64 = 0.0;
        for _ in 0..ASCENT_SWEEPS {
            let ay = a * &y;
            let x = pick_abs_max(set_x, &ay)?;
            let atx = a.transpose() * &x;
            y = pick_abs_max(set_y, &atx)?;
            let val = atx.dot(&y).abs();
            if val <= current * (1.0 + 1e-12) {
                current = current.max(val);
                break;
            }
            current = val;
        }
        best = best.max(current);
    }
    Ok(best)
}

fn pick_abs_max(set: &ConvexSet, c: &DVector<f64>) -> Result<DVector<f64>> {
    let plus = set.lmo(c)?;
    let vp = c.dot(&plus);
    let minus = set.lmo(&(-c))?;
    let vm = c.dot(&minus);
    Ok(if vm.abs() > vp.abs() { minus } else { plus })
}
