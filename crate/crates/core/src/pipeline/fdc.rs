//! Feasibility-driven correction: first-order moves of the reference point,
//! then an escalation ladder of convexification choices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::FeasibilityReport;
use crate::convexify::{convexify_problem, ConvexProblem, ConvexifyError, Policy, Strategy};
use crate::curvature::detect_nonconvex;
use crate::expr::{Assignment, ExprError};
use crate::model::{Location, Problem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdcError {
    #[error("point is already feasible")]
    AlreadyFeasible,
    #[error("violated constraints have zero gradient; no correction direction")]
    ZeroDirection,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Stage-2 escalation rungs, tried in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rung {
    PartialSca,
    EpigraphLift,
    ScaHandoff,
}

const LADDER: [Rung; 3] = [Rung::PartialSca, Rung::EpigraphLift, Rung::ScaHandoff];

/// Stage 1 step: `x + alpha * dx` with
/// `dx = -sum max(0, g_i) grad g_i - sum h_j grad h_j`, bounds counted as
/// inequalities, then clipped to the box.
pub fn fdc_stage1(
    pb: &Problem,
    x: &Assignment,
    report: &FeasibilityReport,
    alpha: f64,
) -> Result<Assignment, FdcError> {
    if report.feasible {
        return Err(FdcError::AlreadyFeasible);
    }
    let names = pb.var_names();
    let env = pb.env(x);
    let mut dx = vec![0.0; names.len()];
    let mut add = |weight: f64, grad: &crate::GradientVector| {
        for (k, n) in names.iter().enumerate() {
            dx[k] -= weight * grad.get(n).unwrap_or(0.0);
        }
    };
    for g in &pb.ineq {
        let v = g.evaluate(&env)?;
        if v > 0.0 {
            add(v, &g.gradient(&env, &names)?);
        }
    }
    for h in &pb.eq {
        let v = h.evaluate(&env)?;
        if v != 0.0 {
            add(v, &h.gradient(&env, &names)?);
        }
    }
    let mut out = Assignment::new();
    for (k, v) in pb.variables.iter().enumerate() {
        let xv = x
            .get(&v.name)
            .ok_or_else(|| ExprError::UnboundSymbol(v.name.clone()))?;
        // lb - x <= 0 has gradient -1, x - ub <= 0 has gradient +1
        if xv < v.lb {
            dx[k] += v.lb - xv;
        } else if xv > v.ub {
            dx[k] -= xv - v.ub;
        }
        out.insert(v.name.clone(), (xv + alpha * dx[k]).clamp(v.lb, v.ub))?;
    }
    if dx.iter().all(|d| *d == 0.0) {
        return Err(FdcError::ZeroDirection);
    }
    Ok(out)
}

/// Stage 2 at iteration `l` of `max_fdc`: starts at rung
/// `l - max_fdc / 2 - 1` and falls through rungs that do not apply.
/// For [`Rung::ScaHandoff`] the returned problem is the partial
/// linearization at `x_prev`, which the caller iterates from.
pub fn fdc_stage2(
    pb: &Problem,
    x_prev: &Assignment,
    l: usize,
    max_fdc: usize,
    base: &Policy,
) -> Result<(Rung, ConvexProblem), ConvexifyError> {
    let first = l.saturating_sub(max_fdc / 2 + 1).min(LADDER.len() - 1);
    let partial = Policy {
        partial_linearization: true,
        sca_fallback: true,
        ..base.clone()
    };
    let mut last_err = None;
    for &rung in &LADDER[first..] {
        let attempt = match rung {
            Rung::PartialSca | Rung::ScaHandoff => convexify_problem(pb, x_prev, &partial),
            Rung::EpigraphLift => {
                let objective_nonconvex = detect_nonconvex(pb)
                    .iter()
                    .any(|c| c.location == Location::Objective);
                if !objective_nonconvex {
                    continue;
                }
                let mut lift = partial.clone();
                lift.overrides
                    .retain(|(loc, _)| *loc != Location::Objective);
                lift.overrides
                    .push((Location::Objective, Strategy::EpigraphLift));
                convexify_problem(pb, x_prev, &lift)
            }
        };
        match attempt {
            Ok(pc) => return Ok((rung, pc)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| ConvexifyError::ConvexificationFailed(detect_nonconvex(pb))))
}
