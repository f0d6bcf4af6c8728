//! The uncoupled player state machine.
//!
//! A `PlayerState` is built from the player's own action set and scalar
//! parameters only — nothing here references a payoff matrix, the opponent,
//! or even the opponent's dimension. The referee drives it through the
//! `next_action` / `observe` pair; the rest (spanner, regularizer, schedule,
//! estimation, OFTRL) is internal.

use nalgebra::DVector;
use rand_chacha::ChaCha12Rng;

use crate::error::{CoreError, Result};
use crate::estimator::{
    choose_action, estimate, phase_utility, schedule, ActionTag, Estimate, PhaseBuffer,
    PhaseSchedule,
};
use crate::geometry::ConvexSet;
use crate::norms::NormContext;
use crate::oftrl::{audit_tolerance, rvu_audit, OftrlState, SolveOptions};
use crate::rng::stream_rng;
use crate::rounding::{build_regularizer, Regularizer};
use crate::spanner::{build_spanner, default_max_swaps, exploration_mean, SpannerDesign};

/// Everything a player needs besides its own action set.
#[derive(Debug, Clone)]
pub struct PlayerParams {
    pub delta: f64,
    pub eta: f64,
    pub seed: u64,
    /// RNG stream label; the referee assigns distinct labels per player.
    pub stream: u64,
    pub batch_c: f64,
    pub fallback_c: f64,
    pub audit: bool,
    pub mvee_eps: f64,
    pub spanner_c: f64,
}

impl PlayerParams {
    pub fn new(delta: f64, eta: f64, seed: u64) -> Self {
        Self {
            delta,
            eta,
            seed,
            stream: 0,
            batch_c: 1.0,
            fallback_c: 1.0,
            audit: false,
            mvee_eps: 1e-7,
            spanner_c: crate::spanner::DEFAULT_C,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_multipliers(mut self, batch_c: f64, fallback_c: f64) -> Self {
        self.batch_c = batch_c;
        self.fallback_c = fallback_c;
        self
    }

    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }
}

/// Everything a completed phase exposes for logging and referee-side
/// diagnostics.
#[derive(Debug, Clone)]
pub struct PhaseReport {
    pub t: usize,
    pub schedule: PhaseSchedule,
    /// Running average the phase played around.
    pub xbar: DVector<f64>,
    /// OFTRL iterate entering the phase.
    pub tilde: DVector<f64>,
    /// OFTRL iterate produced at phase end.
    pub tilde_next: DVector<f64>,
    pub estimate: Estimate,
    /// Phase utility fed into OFTRL.
    pub utility: DVector<f64>,
    /// Min RVU slack over the comparator set, when auditing.
    pub rvu_slack: Option<f64>,
    pub audit_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PlayerState {
    set: ConvexSet,
    design: SpannerDesign,
    design_mean: DVector<f64>,
    reg: Regularizer,
    norms: Option<NormContext>,
    oftrl: OftrlState,
    theta_prev: DVector<f64>,
    tilde_history: Vec<DVector<f64>>,
    xbar: DVector<f64>,
    t: usize,
    sched: PhaseSchedule,
    buffer: PhaseBuffer,
    rng: ChaCha12Rng,
    pending: Option<ActionTag>,
    rounds_observed: u64,
    params: PlayerParams,
}

const XBAR_DRIFT_CHECK_EVERY: usize = 32;
const XBAR_DRIFT_TOL: f64 = 1e-10;

impl PlayerState {
    /// Build a player from its own set and parameters alone.
    pub fn new(set: ConvexSet, params: PlayerParams) -> Result<Self> {
        let dim = set.dim();
        let design = build_spanner(&set, params.spanner_c, default_max_swaps(dim))?;
        let design_mean = exploration_mean(&design);
        let reg = build_regularizer(&set, params.mvee_eps)?;
        let norms = NormContext::new(&set).ok();
        if params.audit && norms.is_none() {
            return Err(CoreError::Unsupported(
                "RVU auditing needs primal-norm support for the set".into(),
            ));
        }
        let oftrl = OftrlState::new(&reg, &set, params.eta, params.audit)?;
        let tilde1 = oftrl.iterate().clone();
        let sched = schedule(1, dim, params.delta, params.batch_c, params.fallback_c)?;
        let buffer = PhaseBuffer::new(design.len(), sched.batch_size);
        Ok(Self {
            set,
            design,
            design_mean,
            reg,
            norms,
            oftrl,
            theta_prev: DVector::zeros(dim),
            tilde_history: vec![tilde1.clone()],
            xbar: tilde1,
            t: 1,
            sched,
            buffer,
            rng: stream_rng(params.seed, params.stream),
            pending: None,
            rounds_observed: 0,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn set(&self) -> &ConvexSet {
        &self.set
    }

    pub fn design(&self) -> &SpannerDesign {
        &self.design
    }

    /// Mean of the exploration distribution (uniform over design points).
    pub fn design_mean(&self) -> &DVector<f64> {
        &self.design_mean
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    pub fn norms(&self) -> Option<&NormContext> {
        self.norms.as_ref()
    }

    /// Current phase index (1-based).
    pub fn phase(&self) -> usize {
        self.t
    }

    pub fn schedule(&self) -> &PhaseSchedule {
        &self.sched
    }

    /// Running average the current phase plays around.
    pub fn xbar(&self) -> &DVector<f64> {
        &self.xbar
    }

    /// OFTRL iterate of the current phase.
    pub fn tilde(&self) -> &DVector<f64> {
        &self.tilde_history[self.t - 1]
    }

    pub fn rounds_observed(&self) -> u64 {
        self.rounds_observed
    }

    /// Draw the next action. Must alternate with `observe`.
    pub fn next_action(&mut self) -> Result<DVector<f64>> {
        if self.pending.is_some() {
            return Err(CoreError::Protocol(
                "next_action called twice without observe".into(),
            ));
        }
        let (action, tag) = choose_action(&self.xbar, &self.sched, &self.design, &mut self.rng);
        self.pending = Some(tag);
        Ok(action)
    }

    /// Feed back the scalar reward of the pending action. Returns the phase
    /// report when this observation completes the phase.
    pub fn observe(&mut self, reward: f64) -> Result<Option<PhaseReport>> {
        let tag = self.pending.take().ok_or_else(|| {
            CoreError::Protocol("observe called without a pending action".into())
        })?;
        self.rounds_observed += 1;
        self.buffer.record(self.rounds_observed, tag, reward)?;
        if !self.buffer.is_complete() {
            return Ok(None);
        }
        self.rollover().map(Some)
    }

    fn rollover(&mut self) -> Result<PhaseReport> {
        let t = self.t;
        let est = estimate(&self.buffer, &self.sched, &self.design)?;
        let utility = phase_utility(&est.theta_hat, &self.theta_prev, t);
        let opts = SolveOptions::default();
        let tilde_next = self.oftrl.step(&utility, &self.reg, &self.set, &opts)?;

        let (rvu_slack, audit_tol) = if self.params.audit {
            let slack = self.min_rvu_slack()?;
            let tol = audit_tolerance(t, self.oftrl.max_solve_tol());
            (Some(slack), Some(tol))
        } else {
            (None, None)
        };

        let report = PhaseReport {
            t,
            schedule: self.sched.clone(),
            xbar: self.xbar.clone(),
            tilde: self.tilde_history[t - 1].clone(),
            tilde_next: tilde_next.clone(),
            estimate: est.clone(),
            utility,
            rvu_slack,
            audit_tol,
        };

        self.theta_prev = est.theta_hat;
        self.tilde_history.push(tilde_next);
        let tf = t as f64;
        self.xbar = (&self.xbar * tf + &self.tilde_history[t]) / (tf + 1.0);
        self.t = t + 1;
        if self.t.is_multiple_of(XBAR_DRIFT_CHECK_EVERY) {
            self.recompute_xbar()?;
        }
        self.sched = schedule(
            self.t,
            self.set.dim(),
            self.params.delta,
            self.params.batch_c,
            self.params.fallback_c,
        )?;
        self.buffer = PhaseBuffer::new(self.design.len(), self.sched.batch_size);
        Ok(report)
    }

    /// Incremental running average vs. full recomputation.
    fn recompute_xbar(&mut self) -> Result<()> {
        let mut exact = DVector::zeros(self.set.dim());
        for x in self.tilde_history.iter().take(self.t) {
            exact += x;
        }
        exact /= self.t as f64;
        let drift = (&exact - &self.xbar).amax();
        if drift > XBAR_DRIFT_TOL {
            return Err(CoreError::Internal(format!(
                "running average drifted by {drift:.3e}"
            )));
        }
        self.xbar = exact;
        Ok(())
    }

    /// Min RVU slack over a small comparator set: the initial iterate, the
    /// LHS-maximizing LMO point, and the vertices when few.
    fn min_rvu_slack(&self) -> Result<f64> {
        let ctx = self.norms.as_ref().ok_or_else(|| {
            CoreError::Unsupported("RVU audit without norm context".into())
        })?;
        let history = self
            .oftrl
            .history()
            .ok_or_else(|| CoreError::Internal("audit enabled but no history".into()))?;
        let mut total_u = DVector::zeros(self.set.dim());
        for (_, u) in history {
            total_u += u;
        }
        let mut comparators = vec![history[0].0.clone(), self.set.lmo(&total_u)?];
        if let Ok(verts) = self.set.vertices() {
            if verts.len() <= 64 {
                comparators.extend(verts);
            }
        }
        let mut min_slack = f64::INFINITY;
        for comparator in &comparators {
            let slack = rvu_audit(history, comparator, self.params.eta, &self.reg, ctx)?;
            min_slack = min_slack.min(slack);
        }
        Ok(min_slack)
    }
}
