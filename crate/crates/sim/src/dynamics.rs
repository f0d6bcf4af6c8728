//! The lockstep round loop: two uncoupled players driven by a referee that
//! holds the game matrix, dispenses zero-sum rewards, and logs ground-truth
//! diagnostics at phase boundaries.

use nalgebra::DVector;

use saddlesim_core::norms::{dual_norm, NormContext};
use saddlesim_core::rng::{COL_STREAM, ROW_STREAM};
use saddlesim_core::{PhaseReport, PlayerParams, PlayerState};

use crate::error::{Result, SimError};
use crate::game::GameInstance;
use crate::metrics::{
    concentration_bound, duality_gap, true_phase_theta_col, true_phase_theta_row,
};
use crate::trace::{PhaseRecord, PlayerPhaseRecord, RoundRecord, RunMeta, Trace};

pub const DEFAULT_ETA: f64 = 1.0 / 6.0;
pub const DEFAULT_ROUND_LOG_STRIDE: u64 = 100;
const ACTION_FEASIBILITY_TOL: f64 = 1e-8;
const U_INCREMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub delta: f64,
    pub eta: f64,
    pub max_phases: usize,
    pub batch_c: f64,
    pub fallback_c: f64,
    pub seed: u64,
    pub audit: bool,
    pub round_log_stride: u64,
}

impl RunConfig {
    pub fn new(delta: f64, max_phases: usize, seed: u64) -> Self {
        Self {
            delta,
            eta: DEFAULT_ETA,
            max_phases,
            batch_c: 1.0,
            fallback_c: 1.0,
            seed,
            audit: false,
            round_log_stride: DEFAULT_ROUND_LOG_STRIDE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.delta.is_nan() || self.delta <= 0.0 || self.delta > 0.5 {
            return Err(SimError::Config(format!(
                "delta must lie in (0, 1/2], got {}",
                self.delta
            )));
        }
        if self.max_phases == 0 {
            return Err(SimError::Config("max_phases must be >= 1".into()));
        }
        if self.round_log_stride == 0 {
            return Err(SimError::Config("round_log_stride must be >= 1".into()));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return Err(SimError::Config("eta must be positive".into()));
        }
        Ok(())
    }
}

fn runtime(phase: usize, round: u64) -> impl Fn(saddlesim_core::CoreError) -> SimError {
    move |source| SimError::Runtime {
        phase,
        round,
        source,
    }
}

/// Run both players for `max_phases` phases and return the full trace.
/// Deterministic given the seed: the two players draw from disjoint labelled
/// RNG streams and every reduction is fixed-order.
pub fn run(game: &GameInstance, cfg: &RunConfig) -> Result<Trace> {
    cfg.validate()?;
    let start = std::time::Instant::now();

    let params = |stream: u64| {
        PlayerParams::new(cfg.delta, cfg.eta, cfg.seed)
            .with_stream(stream)
            .with_multipliers(cfg.batch_c, cfg.fallback_c)
            .with_audit(cfg.audit)
    };
    let mut row = PlayerState::new(game.set_x().clone(), params(ROW_STREAM))?;
    let mut col = PlayerState::new(game.set_y().clone(), params(COL_STREAM))?;

    // Primal norms for the u-increment diagnostic; referee-side only.
    let ctx_x = NormContext::new(game.set_x()).ok();
    let ctx_y = NormContext::new(game.set_y()).ok();

    let mut trace = Trace {
        meta: RunMeta {
            seed: cfg.seed,
            ..RunMeta::default()
        },
        ..Trace::default()
    };

    let mut k: u64 = 0;
    let mut prev_u_x: Option<DVector<f64>> = None;
    let mut prev_u_y: Option<DVector<f64>> = None;
    let mut prev_tilde_x: Option<DVector<f64>> = None;
    let mut prev_tilde_y: Option<DVector<f64>> = None;

    for t in 1..=cfg.max_phases {
        // Shared delta means identical schedules; anything else is fatal.
        let batch = row.schedule().batch_size;
        if batch != col.schedule().batch_size {
            return Err(SimError::Internal(format!(
                "schedule mismatch in phase {t}: {batch} vs {}",
                col.schedule().batch_size
            )));
        }

        let mut report_x: Option<PhaseReport> = None;
        let mut report_y: Option<PhaseReport> = None;
        let mut last_gap = f64::NAN;

        for s in 1..=batch {
            k += 1;
            let x = row.next_action().map_err(runtime(t, k))?;
            let y = col.next_action().map_err(runtime(t, k))?;
            let reward = game.payoff(&x, &y);

            let log_this = k.is_multiple_of(cfg.round_log_stride) || s == batch;
            if log_this {
                if !game.set_x().membership(&x, ACTION_FEASIBILITY_TOL).map_err(runtime(t, k))?
                    || !game.set_y().membership(&y, ACTION_FEASIBILITY_TOL).map_err(runtime(t, k))?
                {
                    return Err(SimError::Internal(format!(
                        "phase {t} round {k}: played action left its set"
                    )));
                }
                let gap = duality_gap(game, &x, &y)?;
                if gap < -1e-9 {
                    return Err(SimError::Internal(format!(
                        "phase {t} round {k}: negative duality gap {gap}"
                    )));
                }
                trace.rounds.push(RoundRecord {
                    k,
                    t,
                    s,
                    reward,
                    gap,
                });
                if s == batch {
                    last_gap = gap;
                }
            }

            // Zero-sum dispensing: +r to the row player, -r to the column.
            if let Some(rep) = row.observe(reward).map_err(runtime(t, k))? {
                report_x = Some(rep);
            }
            if let Some(rep) = col.observe(-reward).map_err(runtime(t, k))? {
                report_y = Some(rep);
            }
        }

        let rx = report_x
            .ok_or_else(|| SimError::Internal(format!("row report missing in phase {t}")))?;
        let ry = report_y
            .ok_or_else(|| SimError::Internal(format!("col report missing in phase {t}")))?;

        let lambda = rx.schedule.lambda;
        let gap_avg = duality_gap(game, &rx.xbar, &ry.xbar)?;

        // Ground-truth utility vectors and estimate errors.
        let theta_bar_x = true_phase_theta_row(game, &ry.xbar, col.design_mean(), lambda);
        let theta_bar_y = true_phase_theta_col(game, &rx.xbar, row.design_mean(), lambda);
        let delta_x = &rx.estimate.theta_hat - &theta_bar_x;
        let delta_y = &ry.estimate.theta_hat - &theta_bar_y;

        // True phase utilities u_t^x = (A/s) y_t, u_t^y = -(A/s)' x_t for
        // the OFTRL iterates in play during this phase.
        let u_x = game.matrix_scaled() * &ry.tilde;
        let u_y = -(game.matrix_scaled().transpose() * &rx.tilde);

        let (u_lhs_x, u_rhs_x) = match (&prev_u_x, &prev_tilde_y) {
            (Some(pu), Some(pt)) => (
                dual_norm(game.set_x(), &(&u_x - pu))?,
                primal_or_nan(&ctx_y, &(&ry.tilde - pt)),
            ),
            _ => (0.0, 0.0),
        };
        let (u_lhs_y, u_rhs_y) = match (&prev_u_y, &prev_tilde_x) {
            (Some(pu), Some(pt)) => (
                dual_norm(game.set_y(), &(&u_y - pu))?,
                primal_or_nan(&ctx_x, &(&rx.tilde - pt)),
            ),
            _ => (0.0, 0.0),
        };

        let resid_x = max_transformed_residual(&rx, row.design().points(), &theta_bar_x);
        let resid_y = max_transformed_residual(&ry, col.design().points(), &theta_bar_y);
        let row_rec = player_record(game.set_x(), t, &rx, &delta_x, resid_x, u_lhs_x, u_rhs_x)?;
        let col_rec = player_record(game.set_y(), t, &ry, &delta_y, resid_y, u_lhs_y, u_rhs_y)?;

        if gap_avg < -1e-9 || last_gap < -1e-9 {
            return Err(SimError::Internal(format!(
                "negative duality gap in phase {t}: avg {gap_avg}, last {last_gap}"
            )));
        }

        trace.phases.push(PhaseRecord {
            t,
            batch,
            lambda,
            gap_avg,
            gap_last: last_gap,
            row: row_rec,
            col: col_rec,
        });

        prev_u_x = Some(u_x);
        prev_u_y = Some(u_y);
        prev_tilde_x = Some(rx.tilde.clone());
        prev_tilde_y = Some(ry.tilde.clone());
    }

    trace.meta.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(trace)
}

fn primal_or_nan(ctx: &Option<NormContext>, z: &DVector<f64>) -> f64 {
    ctx.as_ref()
        .and_then(|c| c.primal_norm(z).ok())
        .unwrap_or(f64::NAN)
}

/// Largest `|r_hat - <z, theta_bar>|` over this phase's paired samples.
fn max_transformed_residual(
    report: &PhaseReport,
    design_points: &[DVector<f64>],
    theta_bar: &DVector<f64>,
) -> f64 {
    report
        .estimate
        .transformed
        .iter()
        .map(|&(i, r_hat)| (r_hat - design_points[i].dot(theta_bar)).abs())
        .fold(0.0, f64::max)
}

fn player_record(
    set: &saddlesim_core::ConvexSet,
    t: usize,
    report: &PhaseReport,
    delta: &DVector<f64>,
    resid_max: f64,
    u_inc_lhs: f64,
    u_inc_rhs: f64,
) -> Result<PlayerPhaseRecord> {
    let delta_dual = dual_norm(set, delta)?;
    let conc_bound = concentration_bound(set.dim(), t);
    Ok(PlayerPhaseRecord {
        fallback: report.estimate.fallback.as_str(),
        n0: report.estimate.base_count,
        min_ni: report
            .estimate
            .explore_counts
            .iter()
            .copied()
            .min()
            .unwrap_or(0),
        delta_dual,
        conc_bound,
        conc_ok: delta_dual <= conc_bound,
        resid_max,
        u_inc_lhs,
        u_inc_rhs,
        rvu_slack: report.rvu_slack,
    })
}

/// Count of `u`-increment violations (`lhs > rhs + tol`) over phases with a
/// well-defined increment; NaN right-hand sides (no primal norm) are skipped.
pub fn u_increment_violations(trace: &Trace) -> usize {
    trace
        .phases
        .iter()
        .filter(|p| p.t >= 2)
        .map(|p| {
            usize::from(!p.row.u_inc_rhs.is_nan() && p.row.u_inc_lhs > p.row.u_inc_rhs + U_INCREMENT_TOL)
                + usize::from(!p.col.u_inc_rhs.is_nan() && p.col.u_inc_lhs > p.col.u_inc_rhs + U_INCREMENT_TOL)
        })
        .sum()
}
