//! End-to-end runs: formulate, convexify, solve, check feasibility, and the
//! two correction loops (error repair and feasibility-driven correction).

mod ecl;
mod fdc;
mod feasibility;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use ecl::{
    ecl_repair, ErrorClass, ErrorReport, RepairAction, RepairContext, RepairSource, Stage,
    DEFAULT_BINDING, SHRINK_FACTOR,
};
pub use fdc::{fdc_stage1, fdc_stage2, FdcError, Rung};
pub use feasibility::{check_feasibility, FeasibilityReport};

use crate::convexify::{convexify_problem, ConvexProblem, ConvexifyError, Policy, Strategy};
use crate::curvature::{detect_nonconvex, verify_convex};
use crate::expr::{Assignment, ExprError};
use crate::gateway::ModelGateway;
use crate::model::{
    extract_from_nl, parse_json, parse_problem, validate_consistency, ConsistencyReport,
    ExtractionError, Problem,
};
use crate::solve::{self, Solution, SolveError, SolveOptions, Status};

/// Half-width of the box imposed on unbounded variables by a
/// [`RepairAction::ShrinkStep`] repair.
pub const SHRINK_BOX: f64 = 1e3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    pub disable_convexify: bool,
    pub disable_ecl: bool,
    pub disable_fdc: bool,
}

#[derive(Clone)]
pub struct PipelineConfig {
    /// Maximum number of repairs.
    pub max_ecl: usize,
    /// Maximum number of correction iterations.
    pub max_fdc: usize,
    /// Feasibility tolerance against the original problem.
    pub eps: f64,
    /// Stage-1 step sizes by iteration (first entry is iteration 1).
    /// Missing entries use `1 / (l + 1)`.
    pub alpha: Vec<f64>,
    pub ablations: Ablations,
    pub solve: SolveOptions,
    pub policy: Policy,
    pub gateway: Option<Arc<dyn ModelGateway>>,
    /// Initial reference point; missing coordinates use box midpoints.
    pub x0: Assignment,
    /// Formulation rounds for natural-language input.
    pub extract_rounds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_ecl: 3,
            max_fdc: 6,
            eps: 1e-6,
            alpha: Vec::new(),
            ablations: Ablations::default(),
            solve: SolveOptions::default(),
            policy: Policy::default(),
            gateway: None,
            x0: Assignment::new(),
            extract_rounds: 3,
        }
    }
}

impl fmt::Debug for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PipelineConfig")
            .field("max_ecl", &self.max_ecl)
            .field("max_fdc", &self.max_fdc)
            .field("eps", &self.eps)
            .field("alpha", &self.alpha)
            .field("ablations", &self.ablations)
            .field("solve", &self.solve)
            .field("policy", &self.policy)
            .field("gateway", &self.gateway.is_some())
            .field("x0", &self.x0)
            .field("extract_rounds", &self.extract_rounds)
            .finish()
    }
}

impl PipelineConfig {
    pub fn alpha_at(&self, l: usize) -> f64 {
        match l.checked_sub(1).and_then(|i| self.alpha.get(i)) {
            Some(a) => *a,
            None => 1.0 / (l as f64 + 1.0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(format!("eps must be positive, got {}", self.eps));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(format!("alpha values must lie in (0, 1], got {a}"));
        }
        self.solve.validate().map_err(|e| e.to_string())
    }
}

/// What a run starts from.
#[derive(Debug, Clone)]
pub enum Input {
    Problem(Problem),
    /// Modeling-language text or canonical JSON.
    Source(String),
    /// Natural language; needs a gateway.
    Description(String),
}

/// Wall-clock seconds per stage. Repair attempts after the first solve
/// count toward `ecl`, everything after the first feasibility check toward
/// `fdc`. Always zero on wasm32.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub formulate: f64,
    pub convexify: f64,
    pub solve: f64,
    pub feasibility: f64,
    pub ecl: f64,
    pub fdc: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.formulate + self.convexify + self.solve + self.feasibility + self.ecl + self.fdc
    }
}

struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Clock {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn secs(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EclEntry {
    /// The attempt that failed, 0 for the first solve.
    pub iteration: usize,
    pub error: ErrorReport,
    pub action: RepairAction,
    pub source: RepairSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdcEntry {
    pub stage: u8,
    pub l: usize,
    pub alpha: Option<f64>,
    /// Reference point the iteration convexified at.
    pub x0: Option<Assignment>,
    pub rung: Option<Rung>,
    pub status: Option<Status>,
    pub feasible: bool,
    pub max_violation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// A final point exists and is feasible for the original problem.
    pub success_flag: bool,
    /// Some solve produced a point.
    pub execute_flag: bool,
    /// Final point in the original variables.
    pub x: Option<Assignment>,
    /// Original objective at `x`.
    pub objective: Option<f64>,
    pub status: Option<Status>,
    /// The problem that was run, after any parameter bindings.
    pub problem: Option<Problem>,
    /// Surrogate behind the final point.
    pub convex_problem: Option<ConvexProblem>,
    pub ecl_trace: Vec<EclEntry>,
    pub fdc_trace: Vec<FdcEntry>,
    pub timings: Timings,
    pub consistency: Option<ConsistencyReport>,
    pub feasibility: Option<FeasibilityReport>,
    pub failure: Option<ErrorReport>,
    pub warnings: Vec<String>,
}

impl PipelineResult {
    fn failed(failure: ErrorReport, timings: Timings) -> Self {
        PipelineResult {
            success_flag: false,
            execute_flag: false,
            x: None,
            objective: None,
            status: None,
            problem: None,
            convex_problem: None,
            ecl_trace: Vec::new(),
            fdc_trace: Vec::new(),
            timings,
            consistency: None,
            feasibility: None,
            failure: Some(failure),
            warnings: Vec::new(),
        }
    }

    /// The machine-readable run report.
    pub fn to_json(&self) -> Value {
        let mut v = self.to_json_without_timings();
        v["timings"] = json!(self.timings);
        v
    }

    /// [`to_json`](Self::to_json) minus timings, for comparing runs.
    pub fn to_json_without_timings(&self) -> Value {
        json!({
            "flags": {
                "execute": u8::from(self.execute_flag),
                "success": u8::from(self.success_flag),
                "consistent": self.consistency.as_ref().map(|c| c.consistent()),
            },
            "status": self.status,
            "objective": self.objective,
            "x": self.x,
            "transforms": self.convex_problem.as_ref().map(|pc| pc.record()),
            "ecl_trace": self.ecl_trace,
            "fdc_trace": self.fdc_trace,
            "feasibility": self.feasibility,
            "consistency": self.consistency,
            "failure": self.failure,
            "warnings": self.warnings,
        })
    }
}

fn report(
    class: ErrorClass,
    stage: Stage,
    iteration: usize,
    message: impl Into<String>,
    payload: Value,
) -> ErrorReport {
    ErrorReport {
        class,
        stage,
        iteration,
        message: message.into(),
        payload,
    }
}

fn from_expr_error(e: &ExprError, stage: Stage, k: usize) -> ErrorReport {
    match e {
        ExprError::UnboundSymbol(s) => report(
            ErrorClass::UnboundSymbol,
            stage,
            k,
            e.to_string(),
            json!({ "symbol": s }),
        ),
        _ => report(
            ErrorClass::SolverNumericalFailure,
            stage,
            k,
            e.to_string(),
            Value::Null,
        ),
    }
}

fn from_convexify_error(e: &ConvexifyError, k: usize) -> ErrorReport {
    match e {
        ConvexifyError::Expr(inner) => from_expr_error(inner, Stage::Convexify, k),
        ConvexifyError::ConvexificationFailed(comps) => report(
            ErrorClass::ConvexificationFailed,
            Stage::Convexify,
            k,
            e.to_string(),
            json!({ "components": comps }),
        ),
        _ => report(
            ErrorClass::ConvexificationFailed,
            Stage::Convexify,
            k,
            e.to_string(),
            Value::Null,
        ),
    }
}

fn from_solve_error(e: &SolveError, k: usize) -> ErrorReport {
    match e {
        SolveError::Expr(inner) => from_expr_error(inner, Stage::Solve, k),
        SolveError::Convexify { source, .. } => from_convexify_error(source, k),
        SolveError::Inner { source, .. } => from_solve_error(source, k),
        SolveError::InvalidOptions => report(
            ErrorClass::SolverNumericalFailure,
            Stage::Solve,
            k,
            e.to_string(),
            Value::Null,
        ),
    }
}

/// A solve that produced a point, mapped back to the original variables.
struct Solved {
    x: Assignment,
    objective: f64,
    status: Status,
    pc: ConvexProblem,
}

fn finish(
    pb: &Problem,
    pc: ConvexProblem,
    sol: Solution,
    k: usize,
    mapped: bool,
) -> Result<Solved, ErrorReport> {
    let class = match sol.status {
        Status::Infeasible => Some(ErrorClass::SolverInfeasible),
        Status::NumericalFailure => Some(ErrorClass::SolverNumericalFailure),
        _ => None,
    };
    let x = match (class, sol.x) {
        (None, Some(x)) => x,
        (class, _) => {
            return Err(report(
                class.unwrap_or(ErrorClass::SolverNumericalFailure),
                Stage::Solve,
                k,
                sol.message,
                json!({ "status": sol.status, "iterations": sol.iterations }),
            ))
        }
    };
    let x = if mapped {
        x
    } else {
        pc.to_original(&x)
            .map_err(|e| from_expr_error(&e, Stage::Solve, k))?
    };
    let objective = pb
        .objective
        .evaluate(&pb.env(&x))
        .map_err(|e| from_expr_error(&e, Stage::Solve, k))?;
    Ok(Solved {
        x,
        objective,
        status: sol.status,
        pc,
    })
}

fn escalated_policy(base: &Policy) -> Policy {
    Policy {
        partial_linearization: true,
        sca_fallback: true,
        ..base.clone()
    }
}

/// Iterated convexification from `x0`; the surrogate kept is the one at
/// the final point.
fn solve_iterated(
    pb: &Problem,
    x0: &Assignment,
    policy: &Policy,
    opts: &SolveOptions,
    k: usize,
) -> Result<Solved, ErrorReport> {
    let out = solve::sca_solve(pb, x0, policy, opts).map_err(|e| from_solve_error(&e, k))?;
    let at = out.solution.x.clone().unwrap_or_else(|| x0.clone());
    let pc = convexify_problem(pb, &at, policy).map_err(|e| from_convexify_error(&e, k))?;
    finish(pb, pc, out.solution, k, true)
}

/// Mutable state carried across repairs.
#[derive(Debug, Clone)]
struct Work {
    pb: Problem,
    x0: Assignment,
    opts: SolveOptions,
    escalated: bool,
    boxed: bool,
}

impl Work {
    /// The problem handed to convexification: `pb`, with unbounded
    /// variables boxed after a shrink repair.
    fn target(&self) -> Problem {
        let mut pb = self.pb.clone();
        if self.boxed {
            for v in &mut pb.variables {
                v.lb = v.lb.max(-SHRINK_BOX);
                v.ub = v.ub.min(SHRINK_BOX);
            }
        }
        pb
    }
}

/// One convexify-and-solve attempt. Returns the outcome together with the
/// seconds spent convexifying and solving.
fn attempt(
    w: &Work,
    cfg: &PipelineConfig,
    x0: &Assignment,
    k: usize,
) -> (Result<Solved, ErrorReport>, f64, f64) {
    let pb = w.target();
    let clock = Clock::start();
    if w.escalated {
        let r = solve_iterated(&pb, x0, &escalated_policy(&cfg.policy), &w.opts, k);
        return (r, 0.0, clock.secs());
    }
    let pc = if cfg.ablations.disable_convexify {
        if verify_convex(&pb) {
            ConvexProblem::from_convex(&pb).map_err(|e| from_convexify_error(&e, k))
        } else {
            Err(report(
                ErrorClass::ConvexificationFailed,
                Stage::Convexify,
                k,
                "problem is not certified convex and convexification is disabled",
                json!({ "components": detect_nonconvex(&pb) }),
            ))
        }
    } else {
        convexify_problem(&pb, x0, &cfg.policy).map_err(|e| from_convexify_error(&e, k))
    };
    let convexify_secs = clock.secs();
    let pc = match pc {
        Ok(pc) => pc,
        Err(e) => return (Err(e), convexify_secs, 0.0),
    };
    let clock = Clock::start();
    let r = solve::solve(&pc, x0, &w.opts)
        .map_err(|e| from_solve_error(&e, k))
        .and_then(|sol| finish(&pb, pc, sol, k, false));
    (r, convexify_secs, clock.secs())
}

fn apply_repair(w: &mut Work, action: &RepairAction, warnings: &mut Vec<String>) {
    match action {
        RepairAction::BindDefault { name, value } => {
            warnings.push(format!("parameter `{name}` had no value; bound to {value}"));
            w.pb.params.insert(name.clone(), Some(*value));
        }
        RepairAction::EscalateSca => w.escalated = true,
        RepairAction::ShrinkStep { factor } => {
            w.opts.step_scale *= factor;
            w.boxed = true;
        }
        RepairAction::Restore => {
            if let Ok(x) = solve::restore(&w.target(), &w.x0, &w.opts) {
                w.x0 = x;
            }
        }
        RepairAction::NoRepair => {}
    }
}

fn formulate(
    input: Input,
    cfg: &PipelineConfig,
) -> Result<(Problem, Option<ConsistencyReport>, Vec<String>), ErrorReport> {
    let parse_failure = |msg: String| {
        report(
            ErrorClass::ParseError,
            Stage::Formulate,
            0,
            msg,
            Value::Null,
        )
    };
    match input {
        Input::Problem(pb) => {
            pb.validate().map_err(|e| parse_failure(e.to_string()))?;
            let rep = validate_consistency(&pb, None, None);
            Ok((pb, Some(rep), Vec::new()))
        }
        Input::Source(text) => {
            let parsed = if text.trim_start().starts_with('{') {
                parse_json(text.as_bytes())
            } else {
                parse_problem(&text)
            };
            let pb = parsed.map_err(|e| parse_failure(e.to_string()))?;
            let rep = validate_consistency(&pb, None, None);
            Ok((pb, Some(rep), Vec::new()))
        }
        Input::Description(desc) => {
            let Some(gw) = cfg.gateway.as_deref() else {
                return Err(report(
                    ErrorClass::GatewayError,
                    Stage::Formulate,
                    0,
                    "natural-language input needs a model gateway",
                    Value::Null,
                ));
            };
            match extract_from_nl(&desc, gw, cfg.extract_rounds) {
                Ok(ex) => Ok((ex.problem, Some(ex.report), ex.diagnostics)),
                Err(ExtractionError::Gateway(e)) => Err(report(
                    ErrorClass::GatewayError,
                    Stage::Formulate,
                    0,
                    e.to_string(),
                    Value::Null,
                )),
                Err(e) => Err(parse_failure(e.to_string())),
            }
        }
    }
}

/// Runs the whole pipeline. Failures never panic; they are reported in
/// the result.
pub fn run(input: Input, cfg: &PipelineConfig) -> PipelineResult {
    let mut timings = Timings::default();
    let clock = Clock::start();
    let formulated = formulate(input, cfg);
    timings.formulate = clock.secs();
    let (pb, consistency, mut warnings) = match formulated {
        Ok(f) => f,
        Err(e) => return PipelineResult::failed(e, timings),
    };

    let mut w = Work {
        pb,
        x0: cfg.x0.clone(),
        opts: cfg.solve.clone(),
        escalated: false,
        boxed: false,
    };
    let mut ecl_trace = Vec::new();
    let mut solved = None;
    let mut failure = None;
    let ecl_clock = Clock::start();
    for k in 0..=cfg.max_ecl {
        let (r, conv_secs, solve_secs) = attempt(&w, cfg, &w.x0.clone(), k);
        if k == 0 {
            timings.convexify = conv_secs;
            timings.solve = solve_secs;
        }
        let err = match r {
            Ok(s) => {
                solved = Some(s);
                failure = None;
                break;
            }
            Err(e) => e,
        };
        failure = Some(err.clone());
        if cfg.ablations.disable_ecl || k == cfg.max_ecl {
            break;
        }
        let ctx = RepairContext {
            escalated: w.escalated,
            ablations: cfg.ablations,
        };
        let (action, source) = ecl_repair(&err, &ctx, cfg.gateway.as_deref());
        ecl_trace.push(EclEntry {
            iteration: k,
            error: err,
            action: action.clone(),
            source,
        });
        if action == RepairAction::NoRepair {
            break;
        }
        apply_repair(&mut w, &action, &mut warnings);
    }
    if !ecl_trace.is_empty() {
        timings.ecl = (ecl_clock.secs() - timings.convexify - timings.solve).max(0.0);
    }

    let Some(mut cur) = solved else {
        let mut out =
            PipelineResult::failed(failure.expect("a failed attempt left a report"), timings);
        out.problem = Some(w.pb);
        out.ecl_trace = ecl_trace;
        out.consistency = consistency;
        out.warnings = warnings;
        return out;
    };

    let clock = Clock::start();
    let mut rep = check_feasibility(&w.pb, &cur.x, cfg.eps);
    timings.feasibility = clock.secs();

    let mut fdc_trace = Vec::new();
    if !rep.feasible && !cfg.ablations.disable_fdc {
        let clock = Clock::start();
        let half = cfg.max_fdc / 2;
        for l in 1..=cfg.max_fdc {
            let (entry, next) = if l <= half {
                fdc_first_order(&w, cfg, &cur, &rep, l)
            } else {
                fdc_escalate(&w, cfg, &cur, l)
            };
            let mut entry = entry;
            if let Some(s) = next {
                rep = check_feasibility(&w.pb, &s.x, cfg.eps);
                entry.feasible = rep.feasible;
                entry.max_violation = Some(rep.max_violation());
                cur = s;
            }
            fdc_trace.push(entry);
            if rep.feasible {
                break;
            }
        }
        timings.fdc = clock.secs();
    }

    PipelineResult {
        success_flag: rep.feasible,
        execute_flag: true,
        objective: Some(cur.objective),
        status: Some(cur.status),
        x: Some(cur.x),
        problem: Some(w.pb),
        convex_problem: Some(cur.pc),
        ecl_trace,
        fdc_trace,
        timings,
        consistency,
        feasibility: Some(rep),
        failure: None,
        warnings,
    }
}

fn fdc_entry(stage: u8, l: usize) -> FdcEntry {
    FdcEntry {
        stage,
        l,
        alpha: None,
        x0: None,
        rung: None,
        status: None,
        feasible: false,
        max_violation: None,
        error: None,
    }
}

/// Moves the reference point along the violation-reducing direction and
/// re-solves from it.
fn fdc_first_order(
    w: &Work,
    cfg: &PipelineConfig,
    cur: &Solved,
    rep: &FeasibilityReport,
    l: usize,
) -> (FdcEntry, Option<Solved>) {
    let alpha = cfg.alpha_at(l);
    let mut entry = fdc_entry(1, l);
    entry.alpha = Some(alpha);
    let x0 = match fdc_stage1(&w.pb, &cur.x, rep, alpha) {
        Ok(x0) => x0,
        Err(e) => {
            entry.error = Some(e.to_string());
            return (entry, None);
        }
    };
    entry.x0 = Some(x0.clone());
    let (r, _, _) = attempt(w, cfg, &x0, 0);
    record(entry, r)
}

/// Climbs the convexification ladder from the previous solution.
fn fdc_escalate(
    w: &Work,
    cfg: &PipelineConfig,
    cur: &Solved,
    l: usize,
) -> (FdcEntry, Option<Solved>) {
    let mut entry = fdc_entry(2, l);
    entry.x0 = Some(cur.x.clone());
    let pb = w.target();
    let (rung, pc) = match fdc_stage2(&pb, &cur.x, l, cfg.max_fdc, &cfg.policy) {
        Ok(r) => r,
        Err(e) => {
            let rep = from_convexify_error(&e, l);
            entry.error = Some(format!("{}: {}", rep.class, rep.message));
            return (entry, None);
        }
    };
    entry.rung = Some(rung);
    let r = match rung {
        Rung::ScaHandoff => solve_iterated(&pb, &cur.x, &escalated_policy(&cfg.policy), &w.opts, l),
        _ => solve::solve(&pc, &cur.x, &w.opts)
            .map_err(|e| from_solve_error(&e, l))
            .and_then(|sol| finish(&pb, pc, sol, l, false)),
    };
    record(entry, r)
}

fn record(mut entry: FdcEntry, r: Result<Solved, ErrorReport>) -> (FdcEntry, Option<Solved>) {
    match r {
        Ok(s) => {
            entry.status = Some(s.status);
            (entry, Some(s))
        }
        Err(e) => {
            entry.error = Some(format!("{}: {}", e.class, e.message));
            (entry, None)
        }
    }
}

/// Strategies applied to reach the final surrogate, for reporting.
pub fn applied_strategies(r: &PipelineResult) -> Vec<Strategy> {
    r.convex_problem
        .as_ref()
        .map(|pc| pc.record().strategies())
        .unwrap_or_default()
}
