//! Ground-truth diagnostics computed with referee knowledge: duality gaps,
//! true phase utility vectors, and convergence-slope fits. Players never see
//! any of this.

use nalgebra::DVector;

use saddlesim_core::geometry::ConvexSet;

use crate::error::{Result, SimError};
use crate::game::GameInstance;
use crate::trace::Trace;

/// `max_x' <x', A y> - min_y' <x, A y'>` in normalized payoff units, via two
/// LMO calls. Nonnegative for any feasible pair; zero exactly at a Nash
/// equilibrium.
pub fn duality_gap(game: &GameInstance, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let a = game.matrix_scaled();
    let ay = a * y;
    let best_row = game.set_x().support(&ay)?;
    let atx = a.transpose() * x;
    let worst_col = atx.dot(&game.set_y().lmo(&(-&atx))?);
    Ok(best_row - worst_col)
}

/// Expected strategy inside a phase: the fair coin mixes the base action
/// with the lambda-blend of the exploration mean,
/// `(1 - lambda/2) xbar + (lambda/2) zhat`.
pub fn expected_phase_strategy(
    xbar: &DVector<f64>,
    design_mean: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    xbar * (1.0 - 0.5 * lambda) + design_mean * (0.5 * lambda)
}

/// Row player's true phase utility vector `theta = (A/s) yhat_t`.
pub fn true_phase_theta_row(
    game: &GameInstance,
    ybar: &DVector<f64>,
    y_design_mean: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    game.matrix_scaled() * expected_phase_strategy(ybar, y_design_mean, lambda)
}

/// Column player's true phase utility vector `-(A/s)' xhat_t`.
pub fn true_phase_theta_col(
    game: &GameInstance,
    xbar: &DVector<f64>,
    x_design_mean: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    -(game.matrix_scaled().transpose() * expected_phase_strategy(xbar, x_design_mean, lambda))
}

/// Concentration radius `48 sqrt(n^3 / t^3)` for own dimension `n`.
pub fn concentration_bound(dim: usize, t: usize) -> f64 {
    let n = dim as f64;
    let tf = t as f64;
    48.0 * (n.powi(3) / tf.powi(3)).sqrt()
}

/// Least squares of `ln y` against `ln x`; returns `(slope, intercept)`.
pub fn log_log_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(SimError::InsufficientData(format!(
            "log-log fit needs >= 3 positive points, got {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|p| p.0).sum();
    let sy: f64 = usable.iter().map(|p| p.1).sum();
    let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(SimError::InsufficientData(
            "log-log fit has degenerate abscissae".into(),
        ));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok((slope, intercept))
}

/// Per-phase fields that admit a slope fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseField {
    GapAvg,
    GapLast,
    DeltaDualX,
    DeltaDualY,
}

/// Fit `ln field` against `ln t` over phases `t_min..=t_max`.
pub fn slope_fit(
    trace: &Trace,
    field: PhaseField,
    t_min: usize,
    t_max: usize,
) -> Result<(f64, f64)> {
    let points: Vec<(f64, f64)> = trace
        .phases
        .iter()
        .filter(|p| p.t >= t_min && p.t <= t_max)
        .map(|p| {
            let y = match field {
                PhaseField::GapAvg => p.gap_avg,
                PhaseField::GapLast => p.gap_last,
                PhaseField::DeltaDualX => p.row.delta_dual,
                PhaseField::DeltaDualY => p.col.delta_dual,
            };
            (p.t as f64, y)
        })
        .collect();
    log_log_fit(&points)
}

/// Fit `ln gap` against `ln k` over the strided round records whose phase
/// lies in `t_min..=t_max` (the last-iterate trend in round count).
pub fn slope_fit_rounds(trace: &Trace, t_min: usize, t_max: usize) -> Result<(f64, f64)> {
    let points: Vec<(f64, f64)> = trace
        .rounds
        .iter()
        .filter(|r| r.t >= t_min && r.t <= t_max)
        .map(|r| (r.k as f64, r.gap))
        .collect();
    log_log_fit(&points)
}

/// Build the run summary from a finished trace.
pub fn summarize(trace: &Trace, config_hash: String, git_describe: String) -> crate::trace::Summary {
    let last = trace.phases.last();
    let t_max = last.map_or(0, |p| p.t);
    let fit_range = (5, t_max);
    let slope_avg_gap = slope_fit(trace, PhaseField::GapAvg, fit_range.0, fit_range.1)
        .ok()
        .map(|(s, _)| s);
    let slope_last_gap_rounds = slope_fit_rounds(trace, fit_range.0, fit_range.1)
        .ok()
        .map(|(s, _)| s);

    let mut concentration_violations = 0usize;
    let mut nonfallback_phases = 0usize;
    let mut min_rvu_slack: Option<f64> = None;
    for p in &trace.phases {
        for side in [&p.row, &p.col] {
            if side.fallback == "none" {
                nonfallback_phases += 1;
                if !side.conc_ok {
                    concentration_violations += 1;
                }
            }
            if let Some(slack) = side.rvu_slack {
                min_rvu_slack = Some(min_rvu_slack.map_or(slack, |m: f64| m.min(slack)));
            }
        }
    }

    crate::trace::Summary {
        phase_schema_version: crate::trace::PHASE_SCHEMA_VERSION,
        round_schema_version: crate::trace::ROUND_SCHEMA_VERSION,
        seed: trace.meta.seed,
        config_hash,
        git_describe,
        phases: trace.phases.len(),
        rounds_total: trace.total_rounds(),
        final_avg_gap: last.map_or(0.0, |p| p.gap_avg),
        final_last_gap: last.map_or(0.0, |p| p.gap_last),
        slope_avg_gap,
        slope_last_gap_rounds,
        concentration_violations,
        nonfallback_phases,
        u_increment_violations: crate::dynamics::u_increment_violations(trace),
        min_rvu_slack,
        elapsed_seconds: trace.meta.elapsed_seconds,
    }
}

/// Vertex-enumeration oracle for the duality gap on enumerable sets.
pub fn duality_gap_by_enumeration(
    game: &GameInstance,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    let a = game.matrix_scaled();
    let ay = a * y;
    let best_row = game
        .set_x()
        .vertices()
        .map_err(SimError::from)?
        .iter()
        .map(|v| ay.dot(v))
        .fold(f64::NEG_INFINITY, f64::max);
    let atx = a.transpose() * x;
    let worst_col = game
        .set_y()
        .vertices()
        .map_err(SimError::from)?
        .iter()
        .map(|w| atx.dot(w))
        .fold(f64::INFINITY, f64::min);
    Ok(best_row - worst_col)
}

/// Helper used by off-line checks of the membership preconditions.
pub fn assert_feasible(set: &ConvexSet, x: &DVector<f64>, tol: f64) -> Result<()> {
    if set.membership(x, tol)? {
        Ok(())
    } else {
        Err(SimError::Internal(format!(
            "point left its action set beyond tolerance {tol}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn pennies() -> GameInstance {
        GameInstance::new(
            ConvexSet::simplex(2).unwrap(),
            ConvexSet::simplex(2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
        )
        .unwrap()
    }

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn gap_examples() {
        let game = pennies();
        let center = vec2(0.5, 0.5);
        assert!(duality_gap(&game, &center, &center).unwrap().abs() < 1e-12);
        let corner = vec2(1.0, 0.0);
        assert!((duality_gap(&game, &corner, &corner).unwrap() - 2.0).abs() < 1e-12);

        let zero_game = GameInstance::new(
            ConvexSet::simplex(2).unwrap(),
            ConvexSet::simplex(2).unwrap(),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        assert_eq!(duality_gap(&zero_game, &corner, &center).unwrap(), 0.0);
    }

    #[test]
    fn gap_matches_vertex_enumeration() {
        let game = pennies();
        for (a, b) in [(0.3, 0.9), (0.5, 0.5), (1.0, 0.0), (0.2, 0.2)] {
            let x = vec2(a, 1.0 - a);
            let y = vec2(b, 1.0 - b);
            let lmo_gap = duality_gap(&game, &x, &y).unwrap();
            let enum_gap = duality_gap_by_enumeration(&game, &x, &y).unwrap();
            assert_eq!(lmo_gap, enum_gap);
        }
    }

    #[test]
    fn true_theta_examples() {
        let game = pennies();
        let ybar = vec2(1.0, 0.0);
        let mean = vec2(0.5, 0.5);
        // lambda -> 0 recovers A ybar.
        let theta = true_phase_theta_row(&game, &ybar, &mean, 0.0);
        assert!((theta - game.matrix_scaled() * &ybar).amax() < 1e-12);
        // lambda = 1: the expectation is (ybar + mean)/2... via the displayed
        // form (1 - 1/2) ybar + (1/2) mean.
        let theta1 = true_phase_theta_row(&game, &ybar, &mean, 1.0);
        let yhat = &ybar * 0.5 + &mean * 0.5;
        assert!((theta1 - game.matrix_scaled() * yhat).amax() < 1e-12);

        let zero_game = GameInstance::new(
            ConvexSet::simplex(2).unwrap(),
            ConvexSet::simplex(2).unwrap(),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        assert_eq!(
            true_phase_theta_row(&zero_game, &ybar, &mean, 0.5).amax(),
            0.0
        );
    }

    #[test]
    fn slope_fit_synthetic_inputs() {
        let inv: Vec<(f64, f64)> = (1..=40).map(|t| (t as f64, 3.0 / t as f64)).collect();
        let (slope, _) = log_log_fit(&inv).unwrap();
        assert!((slope + 1.0).abs() < 1e-9);

        let quarter: Vec<(f64, f64)> = (1..=40)
            .map(|t| (t as f64, 2.0 * (t as f64).powf(-0.25)))
            .collect();
        let (slope, _) = log_log_fit(&quarter).unwrap();
        assert!((slope + 0.25).abs() < 1e-9);

        let flat: Vec<(f64, f64)> = (1..=40).map(|t| (t as f64, 5.0)).collect();
        let (slope, _) = log_log_fit(&flat).unwrap();
        assert!(slope.abs() < 1e-9);

        assert!(log_log_fit(&[(1.0, 1.0), (2.0, 0.5)]).is_err());
    }
}
