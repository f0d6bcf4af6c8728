//! Per-phase sampling schedule, reward pairing, and the least-squares phase
//! estimate with its fallback rules.
//!
//! A phase `t` runs `B_t = ceil(batch_c * ln(8 t^2 / delta) * t^3)` rounds.
//! Each round a fair coin picks the base action `xbar_t` or the mixture
//! `(1 - lambda_t) xbar_t + lambda_t x_i` with a uniform spanner index `i`
//! and `lambda_t = t^-2`. At phase end, paired base/explore rewards are
//! transformed to unbiased samples of `<x_i, theta_t>` and solved by
//! ordinary least squares over the balanced multiset, whose Gram matrix is
//! exactly `n q V`.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::spanner::SpannerDesign;

/// Schedule constants for one phase. The fallback threshold is
/// `fallback_c * 32 n^2 ln(8 t^2 / delta)`; logs are natural.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    pub t: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub fallback_threshold: f64,
    pub delta: f64,
    pub batch_c: f64,
    pub fallback_c: f64,
}

/// Build the schedule for phase `t` of a player with own dimension `dim`.
pub fn schedule(
    t: usize,
    dim: usize,
    delta: f64,
    batch_c: f64,
    fallback_c: f64,
) -> Result<PhaseSchedule> {
    if t == 0 {
        return Err(CoreError::InvalidParameter("phase index starts at 1".into()));
    }
    if delta.is_nan() || delta <= 0.0 || delta > 0.5 {
        return Err(CoreError::InvalidParameter(format!(
            "delta must lie in (0, 1/2], got {delta}"
        )));
    }
    if batch_c <= 0.0 || fallback_c <= 0.0 || batch_c.is_nan() || fallback_c.is_nan() {
        return Err(CoreError::InvalidParameter(
            "batch_c and fallback_c must be positive".into(),
        ));
    }
    let tf = t as f64;
    let log_term = (8.0 * tf * tf / delta).ln();
    let batch_size = (batch_c * log_term * tf.powi(3)).ceil().max(1.0) as usize;
    let n = dim as f64;
    Ok(PhaseSchedule {
        t,
        batch_size,
        lambda: tf.powi(-2),
        fallback_threshold: fallback_c * 32.0 * n * n * log_term,
        delta,
        batch_c,
        fallback_c,
    })
}

/// How one round's action was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionTag {
    Base,
    Explore(usize),
}

/// Draw one action: fair coin for the base strategy, otherwise a uniform
/// spanner point mixed in with weight `lambda_t`.
pub fn choose_action<R: Rng>(
    xbar: &DVector<f64>,
    sched: &PhaseSchedule,
    design: &SpannerDesign,
    rng: &mut R,
) -> (DVector<f64>, ActionTag) {
    if rng.gen_range(0..2u32) == 0 {
        (xbar.clone(), ActionTag::Base)
    } else {
        let i = rng.gen_range(0..design.len());
        let action = xbar * (1.0 - sched.lambda) + &design.points()[i] * sched.lambda;
        (action, ActionTag::Explore(i))
    }
}

/// Rewards collected during one phase, split by action tag.
#[derive(Debug, Clone)]
pub struct PhaseBuffer {
    base: Vec<(u64, f64)>,
    explore: Vec<Vec<(u64, f64)>>,
    expected: usize,
    total: usize,
}

impl PhaseBuffer {
    pub fn new(design_len: usize, expected: usize) -> Self {
        Self {
            base: Vec::new(),
            explore: vec![Vec::new(); design_len],
            expected,
            total: 0,
        }
    }

    pub fn record(&mut self, round: u64, tag: ActionTag, reward: f64) -> Result<()> {
        if self.is_complete() {
            return Err(CoreError::Protocol(
                "phase buffer already holds a full batch".into(),
            ));
        }
        if !reward.is_finite() || reward.abs() > 1.0 + 1e-9 {
            return Err(CoreError::Protocol(format!(
                "reward {reward} outside the normalized range [-1, 1]"
            )));
        }
        match tag {
            ActionTag::Base => self.base.push((round, reward)),
            ActionTag::Explore(i) => {
                let slot = self.explore.get_mut(i).ok_or_else(|| {
                    CoreError::Protocol(format!("explore index {i} out of range"))
                })?;
                slot.push((round, reward));
            }
        }
        self.total += 1;
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.total == self.expected
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn base_count(&self) -> usize {
        self.base.len()
    }

    pub fn explore_counts(&self) -> Vec<usize> {
        self.explore.iter().map(Vec::len).collect()
    }
}

/// Why an estimate was replaced by the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    None,
    /// `B_t` below the `32 n^2 ln(8 t^2/delta)` threshold.
    SmallBatch,
    /// Base or per-index explore counts below their quotas.
    CountFailure,
}

impl Fallback {
    pub fn as_str(&self) -> &'static str {
        match self {
            Fallback::None => "none",
            Fallback::SmallBatch => "small_batch",
            Fallback::CountFailure => "count_failure",
        }
    }
}

/// Phase estimate of the utility vector, plus diagnostics.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub theta_hat: DVector<f64>,
    pub fallback: Fallback,
    pub base_count: usize,
    pub explore_counts: Vec<usize>,
    /// `(spanner index, transformed reward)` pairs that entered the least
    /// squares solve; consumed by referee-side residual diagnostics.
    pub transformed: Vec<(usize, f64)>,
}

/// Least-squares phase estimate over the balanced multiset of transformed
/// rewards. Falls back to the zero vector on a small batch or failed counts.
pub fn estimate(
    buffer: &PhaseBuffer,
    sched: &PhaseSchedule,
    design: &SpannerDesign,
) -> Result<Estimate> {
    if !buffer.is_complete() {
        return Err(CoreError::Protocol(format!(
            "estimate called on {}/{} records",
            buffer.total, buffer.expected
        )));
    }
    let n = design.len();
    let dim = design.dim();
    let base_count = buffer.base_count();
    let explore_counts = buffer.explore_counts();

    let fallback = |kind: Fallback| Estimate {
        theta_hat: DVector::zeros(dim),
        fallback: kind,
        base_count,
        explore_counts: explore_counts.clone(),
        transformed: Vec::new(),
    };

    let b_t = sched.batch_size;
    if (b_t as f64) < sched.fallback_threshold {
        return Ok(fallback(Fallback::SmallBatch));
    }
    let q = (b_t / (4 * n)).max(1);
    let base_need = b_t.div_ceil(4);
    if base_count < base_need || explore_counts.iter().any(|&c| c < q) {
        return Ok(fallback(Fallback::CountFailure));
    }

    // First q explore records per spanner index (round order within each
    // index), paired in order with the first n*q base records.
    let mut transformed = Vec::with_capacity(n * q);
    let mut rhs = DVector::zeros(dim);
    let mut base_iter = buffer.base.iter();
    for (i, records) in buffer.explore.iter().enumerate() {
        for &(_, r_explore) in records.iter().take(q) {
            let &(_, r_base) = base_iter.next().ok_or_else(|| {
                CoreError::Internal("base records exhausted during pairing".into())
            })?;
            let r_hat = (r_explore - (1.0 - sched.lambda) * r_base) / sched.lambda;
            rhs += &design.points()[i] * r_hat;
            transformed.push((i, r_hat));
        }
    }

    // Balanced multiset: the Gram matrix is exactly q * n * V, so the OLS
    // solve reuses the design's V^{-1}.
    let theta_hat = design.v_inv() * rhs / (q as f64 * n as f64);
    Ok(Estimate {
        theta_hat,
        fallback: Fallback::None,
        base_count,
        explore_counts,
        transformed,
    })
}

/// `u_t = t * theta_t - (t-1) * theta_{t-1}` with `theta_0 = 0`.
pub fn phase_utility(
    theta_t: &DVector<f64>,
    theta_prev: &DVector<f64>,
    t: usize,
) -> DVector<f64> {
    theta_t * t as f64 - theta_prev * (t as f64 - 1.0)
}
