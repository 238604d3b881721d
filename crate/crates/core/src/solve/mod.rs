//! Embedded solvers for certified convex problems, the SCA outer loop, and
//! text emission for external Python backends.

mod barrier;
mod bfgs;
mod linalg;
mod script;
mod simplex;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convexify::{
    complete_reference, convexify_problem, ConvexProblem, ConvexifyError, Policy, Strategy,
};
use crate::curvature::{curvature_of, Domain};
use crate::expr::compiled::Compiled;
use crate::expr::{Assignment, Expr, ExprError};
use crate::model::{Direction, Problem};

pub use script::{emit_script, ScriptError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptBackend {
    Scipy,
    Cvxpy,
    Gurobi,
}

impl ScriptBackend {
    pub const ALL: [ScriptBackend; 3] = [
        ScriptBackend::Scipy,
        ScriptBackend::Cvxpy,
        ScriptBackend::Gurobi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScriptBackend::Scipy => "scipy",
            ScriptBackend::Cvxpy => "cvxpy",
            ScriptBackend::Gurobi => "gurobi",
        }
    }
}

impl FromStr for ScriptBackend {
    type Err = ScriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("script:").unwrap_or(s);
        ScriptBackend::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ScriptError::UnsupportedBackend(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackendId {
    InternalAffine,
    InternalBarrier,
    Script(ScriptBackend),
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendId::InternalAffine => f.write_str("internal-affine"),
            BackendId::InternalBarrier => f.write_str("internal-barrier"),
            BackendId::Script(b) => write!(f, "script:{}", b.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Cap on inner iterations (pivots or quasi-Newton steps) per solve.
    pub max_iter: usize,
    /// Barrier termination: stop once `mu * rows <= tol`.
    pub tol: f64,
    /// Allowed constraint violation, and relative stationarity, for `Optimal`.
    pub feas_tol: f64,
    pub mu0: f64,
    pub mu_factor: f64,
    /// Backtracking shrink factor.
    pub beta: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Initial trial step of each line search.
    pub step_scale: f64,
    pub sca_max_iter: usize,
    pub sca_step_tol: f64,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 20_000,
            tol: 1e-8,
            feas_tol: 1e-6,
            mu0: 10.0,
            mu_factor: 10.0,
            beta: 0.5,
            armijo: 1e-4,
            step_scale: 1.0,
            sca_max_iter: 200,
            sca_step_tol: 1e-7,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [
            self.tol,
            self.feas_tol,
            self.mu0,
            self.armijo,
            self.step_scale,
            self.sca_step_tol,
        ];
        let ok = positive.iter().all(|v| *v > 0.0 && v.is_finite())
            && self.mu_factor > 1.0
            && self.beta > 0.0
            && self.beta < 1.0
            && self.armijo < 1.0
            && self.max_iter >= 1
            && self.sca_max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(SolveError::InvalidOptions)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    MaxIterations,
    Infeasible,
    NumericalFailure,
}

impl Status {
    pub fn has_point(self) -> bool {
        matches!(self, Status::Optimal | Status::MaxIterations)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Largest inequality or bound violation, zero when satisfied.
    pub max_ineq: f64,
    pub max_eq: f64,
    pub stationarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    pub backend: BackendId,
    pub x: Option<Assignment>,
    /// Objective in the problem's own direction.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub residuals: Residuals,
    pub message: String,
}

impl Solution {
    fn failed(
        status: Status,
        backend: BackendId,
        iterations: usize,
        message: impl Into<String>,
    ) -> Self {
        Solution {
            status,
            backend,
            x: None,
            objective: None,
            iterations,
            residuals: Residuals::default(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("invalid solver options")]
    InvalidOptions,
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("sca iteration {iteration}: {source}")]
    Convexify {
        iteration: usize,
        #[source]
        source: ConvexifyError,
    },
    #[error("sca iteration {iteration}: {source}")]
    Inner {
        iteration: usize,
        #[source]
        source: Box<SolveError>,
    },
}

fn all_affine(pb: &Problem) -> bool {
    let d = Domain::from_problem(pb);
    pb.functions().all(|(_, e)| curvature_of(e, &d).is_affine())
}

/// Picks a solve path from the problem's structure.
pub fn select_backend(pc: &ConvexProblem, prefer_script: Option<ScriptBackend>) -> BackendId {
    if let Some(b) = prefer_script {
        return BackendId::Script(b);
    }
    if all_affine(pc.problem()) {
        BackendId::InternalAffine
    } else {
        BackendId::InternalBarrier
    }
}

/// The objective oriented for minimization.
fn min_objective(pb: &Problem) -> Expr {
    match pb.direction {
        Direction::Minimize => pb.objective.clone(),
        Direction::Maximize => -pb.objective.clone(),
    }
}

/// `a . x = b` form of an affine function `e(x) = a . x - b`.
fn affine_row(c: &Compiled, at: &[f64]) -> Result<(Vec<f64>, f64), ExprError> {
    let mut a = vec![0.0; at.len()];
    let v = c.value_grad(at, &mut a)?;
    let b = linalg::dot(&a, at) - v;
    Ok((a, b))
}

/// Violations of `pb` at `x`: inequalities, bounds and equalities.
/// Integrality is not checked.
pub fn residuals(pb: &Problem, x: &Assignment) -> Result<Residuals, ExprError> {
    let env = pb.env(x);
    let mut r = Residuals::default();
    for g in &pb.ineq {
        r.max_ineq = r.max_ineq.max(g.evaluate(&env)?);
    }
    for v in &pb.variables {
        let xv = x
            .get(&v.name)
            .ok_or_else(|| ExprError::UnboundSymbol(v.name.clone()))?;
        r.max_ineq = r.max_ineq.max(v.lb - xv).max(xv - v.ub);
    }
    for h in &pb.eq {
        r.max_eq = r.max_eq.max(h.evaluate(&env)?.abs());
    }
    Ok(r)
}

fn to_assignment(names: &[String], x: &[f64]) -> Assignment {
    names.iter().cloned().zip(x.iter().copied()).collect()
}

/// Solves a certified convex problem with the internal solvers.
///
/// `x0` may be partial or outside the box; it is completed and projected
/// inward. Maximization is carried out as minimization of the negation.
pub fn solve(
    pc: &ConvexProblem,
    x0: &Assignment,
    opts: &SolveOptions,
) -> Result<Solution, SolveError> {
    opts.validate()?;
    let pb = pc.problem();
    let names = pb.var_names();
    let n = names.len();
    let env = pb.param_env();
    let start: Vec<f64> = {
        let r = complete_reference(pb, x0);
        names.iter().map(|v| r.get(v).unwrap_or(0.0)).collect()
    };
    let f = Compiled::compile(&min_objective(pb), &names, &env)?;
    let ineq: Vec<Compiled> = pb
        .ineq
        .iter()
        .map(|g| Compiled::compile(g, &names, &env))
        .collect::<Result<_, _>>()?;
    let eq: Vec<Compiled> = pb
        .eq
        .iter()
        .map(|h| Compiled::compile(h, &names, &env))
        .collect::<Result<_, _>>()?;

    let backend = select_backend(pc, None);
    let mut shift = 0.0;
    let (xs, iterations, stationarity, converged) = if backend == BackendId::InternalAffine {
        let lp = simplex::Lp {
            c: affine_row(&f, &start)?.0,
            ub_rows: ineq
                .iter()
                .map(|g| affine_row(g, &start))
                .collect::<Result<_, _>>()?,
            eq_rows: eq
                .iter()
                .map(|h| affine_row(h, &start))
                .collect::<Result<_, _>>()?,
            lb: pb.variables.iter().map(|v| v.lb).collect(),
            ub: pb.variables.iter().map(|v| v.ub).collect(),
        };
        match simplex::solve_lp(&lp, opts.max_iter) {
            simplex::LpOutcome::Optimal { x, iterations } => (x, iterations, 0.0, true),
            simplex::LpOutcome::Infeasible { iterations } => {
                return Ok(Solution::failed(
                    Status::Infeasible,
                    backend,
                    iterations,
                    "no feasible point",
                ))
            }
            simplex::LpOutcome::Unbounded { iterations } => {
                return Ok(Solution::failed(
                    Status::NumericalFailure,
                    backend,
                    iterations,
                    "objective is unbounded",
                ))
            }
            simplex::LpOutcome::IterationLimit { iterations } => {
                return Ok(Solution::failed(
                    Status::MaxIterations,
                    backend,
                    iterations,
                    "pivot limit reached",
                ))
            }
        }
    } else {
        let mut rows = Vec::new();
        let mut erows = Vec::new();
        for h in &eq {
            erows.push(affine_row(h, &start)?);
        }
        for (k, v) in pb.variables.iter().enumerate() {
            if v.lb == v.ub {
                let mut a = vec![0.0; n];
                a[k] = 1.0;
                erows.push((a, v.lb));
                continue;
            }
            if v.lb.is_finite() {
                rows.push(barrier::Row::Bound {
                    k,
                    b: v.lb,
                    upper: false,
                });
            }
            if v.ub.is_finite() {
                rows.push(barrier::Row::Bound {
                    k,
                    b: v.ub,
                    upper: true,
                });
            }
        }
        rows.extend(ineq.into_iter().map(barrier::Row::Fn));
        let space = match linalg::affine_subspace(&erows, &start) {
            Ok(s) => s,
            Err(gap) => {
                return Ok(Solution::failed(
                    Status::Infeasible,
                    backend,
                    0,
                    format!("equality constraints are inconsistent (gap {gap:.3e})"),
                ))
            }
        };
        let mut z0 = space.coords(&start);
        // nudge off points where the objective is not differentiable
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut scratch = vec![0.0; n];
        for _ in 0..8 {
            if f.value_grad(&space.point(&z0), &mut scratch).is_ok() {
                break;
            }
            z0.iter_mut()
                .for_each(|v| *v += 1e-7 * rng.gen_range(-1.0..1.0));
        }
        let smooth = barrier::Smooth { f, rows, space, n };
        match smooth.run(&z0, opts) {
            barrier::Outcome::Done {
                x,
                iterations,
                stationarity,
                converged,
                shift: loosened,
            } => {
                shift = loosened;
                (x, iterations, stationarity, converged)
            }
            barrier::Outcome::Infeasible {
                iterations,
                violation,
            } => {
                return Ok(Solution::failed(
                    Status::Infeasible,
                    backend,
                    iterations,
                    format!("restoration ended with violation {violation:.3e}"),
                ))
            }
            barrier::Outcome::Failure {
                iterations,
                message,
            } => {
                return Ok(Solution::failed(
                    Status::NumericalFailure,
                    backend,
                    iterations,
                    message,
                ))
            }
        }
    };

    let x = to_assignment(&names, &xs);
    let objective = pb.objective.evaluate(&pb.env(&x));
    let mut res = residuals(pb, &x)?;
    res.stationarity = stationarity;
    let objective = match objective {
        Ok(v) if v.is_finite() => v,
        _ => {
            return Ok(Solution::failed(
                Status::NumericalFailure,
                backend,
                iterations,
                "objective is not finite",
            ))
        }
    };
    let feasible = res.max_ineq <= opts.feas_tol && res.max_eq <= opts.feas_tol;
    let (status, message) = match (converged, feasible) {
        (true, true) if shift > 0.0 => (
            Status::Optimal,
            format!("no strict interior; constraints loosened by {shift:e}"),
        ),
        (true, true) => (Status::Optimal, String::new()),
        (true, false) => (
            Status::MaxIterations,
            "converged point violates constraints".to_string(),
        ),
        (false, _) if iterations >= opts.max_iter => {
            (Status::MaxIterations, "iteration cap reached".to_string())
        }
        (false, _) => (
            Status::MaxIterations,
            "stalled before the stationarity tolerance".to_string(),
        ),
    };
    Ok(Solution {
        status,
        backend,
        x: Some(x),
        objective: Some(objective),
        iterations,
        residuals: res,
        message,
    })
}

/// Restoration on the original problem: minimizes
/// `sum max(0, g_i)^2 + sum h_j^2` plus squared bound violations from `x0`
/// and returns the result clipped to the box. Integrality is ignored.
pub fn restore(
    pb: &Problem,
    x0: &Assignment,
    opts: &SolveOptions,
) -> Result<Assignment, SolveError> {
    opts.validate()?;
    let names = pb.var_names();
    let n = names.len();
    let env = pb.param_env();
    let start = complete_reference(pb, x0);
    let z0: Vec<f64> = names.iter().map(|v| start.get(v).unwrap_or(0.0)).collect();
    let ineq: Vec<Compiled> = pb
        .ineq
        .iter()
        .map(|g| Compiled::compile(g, &names, &env))
        .collect::<Result<_, _>>()?;
    let eq: Vec<Compiled> = pb
        .eq
        .iter()
        .map(|h| Compiled::compile(h, &names, &env))
        .collect::<Result<_, _>>()?;
    let mut scratch = vec![0.0; n];
    let mut fg = |x: &[f64]| {
        let mut total = 0.0;
        let mut g = vec![0.0; n];
        for c in &ineq {
            let v = c
                .value_grad(x, &mut scratch)
                .ok()
                .filter(|v| v.is_finite())?;
            if v > 0.0 {
                total += v * v;
                linalg::axpy(&mut g, 2.0 * v, &scratch);
            }
        }
        for c in &eq {
            let v = c
                .value_grad(x, &mut scratch)
                .ok()
                .filter(|v| v.is_finite())?;
            total += v * v;
            linalg::axpy(&mut g, 2.0 * v, &scratch);
        }
        for (k, d) in pb.variables.iter().enumerate() {
            let over = (x[k] - d.ub).max(d.lb - x[k]);
            if over > 0.0 {
                total += over * over;
                g[k] += if x[k] > d.ub { 2.0 * over } else { -2.0 * over };
            }
        }
        Some((total, g))
    };
    let ls = bfgs::LineSearch {
        step0: opts.step_scale,
        shrink: opts.beta,
        armijo: opts.armijo,
    };
    let z = match bfgs::minimize(&mut fg, &z0, 1e-14, opts.max_iter, ls, &mut |_| false) {
        Ok(r) => r.z,
        Err(_) => z0,
    };
    Ok(names
        .iter()
        .zip(pb.variables.iter().zip(z))
        .map(|(name, (d, v))| (name.clone(), v.clamp(d.lb, d.ub)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaStep {
    pub iteration: usize,
    pub surrogate_objective: Option<f64>,
    /// True objective at the new point, original direction.
    pub objective: Option<f64>,
    pub tau: f64,
    pub step: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaOutcome {
    pub solution: Solution,
    pub trace: Vec<ScaStep>,
}

const MERIT_WEIGHT: f64 = 1e4;

/// Minimization-oriented objective plus weighted violation.
fn merit(pb: &Problem, x: &Assignment) -> f64 {
    let Ok(f) = min_objective(pb).evaluate(&pb.env(x)) else {
        return f64::INFINITY;
    };
    match residuals(pb, x) {
        Ok(r) if f.is_finite() => f + MERIT_WEIGHT * r.max_ineq.max(r.max_eq),
        _ => f64::INFINITY,
    }
}

/// Sequential convex approximation: convexify at the current point, solve,
/// move, repeat until the step is below `sca_step_tol`.
///
/// A candidate that increases the merit is rejected and the subproblem is
/// re-solved with a proximal term `tau/2 ||x - x_t||^2`, `tau` doubling
/// (from 1) on each rejection and halving after each acceptance.
pub fn sca_solve(
    pb: &Problem,
    x0: &Assignment,
    policy: &Policy,
    opts: &SolveOptions,
) -> Result<ScaOutcome, SolveError> {
    opts.validate()?;
    let original_names = pb.var_names();
    let mut xt = complete_reference(pb, x0);
    let mut merit_t = merit(pb, &xt);
    let mut tau: f64 = 0.0;
    let mut trace = Vec::new();
    let mut total_iter = 0;
    let mut last: Option<Solution> = None;
    for t in 0..opts.sca_max_iter {
        let pc = convexify_problem(pb, &xt, policy).map_err(|source| SolveError::Convexify {
            iteration: t,
            source,
        })?;
        let linearized = pc.record().strategies().contains(&Strategy::Sca);
        let sub = pc
            .with_proximal(tau, &xt)
            .map_err(|source| SolveError::Convexify {
                iteration: t,
                source,
            })?;
        let sol = solve(&sub, &xt, opts).map_err(|e| SolveError::Inner {
            iteration: t,
            source: Box::new(e),
        })?;
        total_iter += sol.iterations;
        if !linearized {
            // the transform is exact, so one solve is the answer
            let mut solution = sol.clone();
            if let Some(x) = &sol.x {
                let xo = pc.to_original(x)?;
                solution.objective = Some(pb.objective.evaluate(&pb.env(&xo))?);
                solution.residuals = Residuals {
                    stationarity: sol.residuals.stationarity,
                    ..residuals(pb, &xo)?
                };
                solution.x = Some(xo);
            }
            trace.push(ScaStep {
                iteration: t,
                surrogate_objective: sol.objective,
                objective: solution.objective,
                tau,
                step: 0.0,
                accepted: true,
            });
            return Ok(ScaOutcome { solution, trace });
        }
        let candidate = match (&sol.x, sol.status) {
            (Some(x), s) if s.has_point() => Some(pc.to_original(x)?),
            _ => None,
        };
        let Some(xc) = candidate.filter(|_| sol.status != Status::Infeasible) else {
            if sol.status == Status::Infeasible {
                return Ok(ScaOutcome {
                    solution: sol,
                    trace,
                });
            }
            // an unbounded linearization needs damping
            trace.push(ScaStep {
                iteration: t,
                surrogate_objective: None,
                objective: None,
                tau,
                step: 0.0,
                accepted: false,
            });
            tau = (2.0 * tau).max(1.0);
            last = Some(sol);
            continue;
        };
        let xc: Assignment = original_names
            .iter()
            .filter_map(|v| xc.get(v).map(|x| (v.clone(), x)))
            .collect();
        let merit_c = merit(pb, &xc);
        let step = xc.max_abs_diff(&xt);
        let accepted = merit_c <= merit_t + 1e-12 * merit_t.abs().max(1.0);
        trace.push(ScaStep {
            iteration: t,
            surrogate_objective: sol.objective,
            objective: pb.objective.evaluate(&pb.env(&xc)).ok(),
            tau,
            step,
            accepted,
        });
        if !accepted {
            tau = (2.0 * tau).max(1.0);
            last = Some(sol);
            continue;
        }
        xt = xc;
        merit_t = merit_c;
        tau /= 2.0;
        last = Some(sol);
        if step <= opts.sca_step_tol {
            break;
        }
    }
    let inner = last.expect("at least one iteration ran");
    let converged = trace
        .last()
        .is_some_and(|s| s.accepted && s.step <= opts.sca_step_tol);
    let res = residuals(pb, &xt)?;
    let feasible = res.max_ineq <= opts.feas_tol && res.max_eq <= opts.feas_tol;
    let status = if converged && feasible && inner.status == Status::Optimal {
        Status::Optimal
    } else {
        Status::MaxIterations
    };
    let objective = pb.objective.evaluate(&pb.env(&xt))?;
    Ok(ScaOutcome {
        solution: Solution {
            status,
            backend: inner.backend,
            objective: Some(objective),
            x: Some(xt),
            iterations: total_iter,
            residuals: Residuals {
                stationarity: inner.residuals.stationarity,
                ..res
            },
            message: if converged {
                String::new()
            } else {
                "sca iteration cap reached".to_string()
            },
        },
        trace,
    })
}

#[cfg(test)]
mod tests;
