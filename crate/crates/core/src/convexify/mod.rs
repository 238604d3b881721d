//! Turning a detected non-convex problem into a certified convex surrogate.

mod sca;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::curvature::{
    curvature_of, detect_nonconvex, ratio_threshold, signed_terms, ComponentKind, Curvature,
    Domain, NonconvexComponent, SignInfo,
};
use crate::expr::{Assignment, Expr, ExprError};
use crate::model::{Direction, Location, Problem, VarDecl, VarKind};

pub use sca::{partial_linearize, sca_linearize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Strategy {
    Sca,
    Substitution,
    BinaryRelaxation,
    RatioRearrange,
    EpigraphLift,
    /// Named but not implemented; applying it fails.
    Sdr,
    /// Named but not implemented; applying it fails.
    Lagrangian,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvexifyError {
    #[error("no convexification rule applies to {0}")]
    NoStrategy(Box<NonconvexComponent>),
    #[error("strategy {0} is not implemented")]
    Unimplemented(Strategy),
    #[error("strategy {0} must be enabled explicitly")]
    StrategyDisabled(Strategy),
    #[error("{strategy} does not apply at {location}: {detail}")]
    ShapeMismatch {
        strategy: Strategy,
        location: Location,
        detail: String,
    },
    #[error("cannot certify the sign of denominator `{0}`")]
    SignUncertifiable(String),
    #[error("surrogate is still not convex: {}", .0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; "))]
    ConvexificationFailed(Vec<NonconvexComponent>),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Knobs for [`convexify_problem`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Policy {
    /// Strategies forced for specific locations, taking precedence over
    /// the rule table.
    pub overrides: Vec<(Location, Strategy)>,
    /// Linearize only the offending additive terms instead of the whole
    /// function.
    pub partial_linearization: bool,
    /// Fall back to linearization when the rule table has no entry.
    pub sca_fallback: bool,
    /// Allow selecting SDR and Lagrangian (which then fail as unimplemented).
    pub allow_unformalized: bool,
}

impl Policy {
    fn override_at(&self, loc: &Location) -> Option<Strategy> {
        self.overrides
            .iter()
            .find(|(l, _)| l == loc)
            .map(|(_, s)| *s)
    }
}

fn serialize_expr<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(e)
}

/// One applied strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformEntry {
    pub location: Location,
    /// `None` for constraints created by a lifting.
    pub kind: Option<ComponentKind>,
    pub strategy: Strategy,
    #[serde(serialize_with = "serialize_expr")]
    pub before: Expr,
    #[serde(serialize_with = "serialize_expr")]
    pub after: Expr,
}

/// Applied strategies in application order, plus the reference point when
/// any entry linearizes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TransformRecord {
    pub entries: Vec<TransformEntry>,
    pub reference: Option<Assignment>,
}

impl TransformRecord {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        self.entries.iter().map(|e| e.strategy).collect()
    }

    fn uses_reference(&self) -> bool {
        self.entries.iter().any(|e| e.strategy == Strategy::Sca)
    }
}

/// A problem certified convex at construction, together with the record of
/// how it was obtained and the problem it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProblem {
    problem: Problem,
    record: TransformRecord,
    original: Problem,
    /// Original variables in terms of surrogate variables, when they differ.
    recover: Option<BTreeMap<String, Expr>>,
}

impl ConvexProblem {
    fn certify(
        problem: Problem,
        record: TransformRecord,
        original: Problem,
        recover: Option<BTreeMap<String, Expr>>,
    ) -> Result<Self, ConvexifyError> {
        let residual = detect_nonconvex(&problem);
        if !residual.is_empty() {
            return Err(ConvexifyError::ConvexificationFailed(residual));
        }
        Ok(ConvexProblem {
            problem,
            record,
            original,
            recover,
        })
    }

    /// Wraps a problem that is already convex, with an empty record.
    pub fn from_convex(pb: &Problem) -> Result<Self, ConvexifyError> {
        Self::certify(pb.clone(), TransformRecord::default(), pb.clone(), None)
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn record(&self) -> &TransformRecord {
        &self.record
    }

    pub fn original(&self) -> &Problem {
        &self.original
    }

    /// Maps a point of the surrogate back to the original variables.
    pub fn to_original(&self, x: &Assignment) -> Result<Assignment, ExprError> {
        let mut out = Assignment::new();
        match &self.recover {
            None => {
                for v in &self.original.variables {
                    let val = x
                        .get(&v.name)
                        .ok_or_else(|| ExprError::UnboundSymbol(v.name.clone()))?;
                    out.insert(v.name.clone(), val)?;
                }
            }
            Some(map) => {
                let env = self.problem.env(x);
                for (k, e) in map {
                    out.insert(k.clone(), e.evaluate(&env)?)?;
                }
            }
        }
        Ok(out)
    }

    /// Same problem with `tau/2 * ||x - center||^2` added to the minimized
    /// objective (subtracted when maximizing). Variables missing from
    /// `center` are left out of the term.
    pub fn with_proximal(
        &self,
        tau: f64,
        center: &Assignment,
    ) -> Result<ConvexProblem, ConvexifyError> {
        if tau <= 0.0 {
            return Ok(self.clone());
        }
        let terms: Vec<Expr> = self
            .problem
            .variables
            .iter()
            .filter_map(|v| {
                center
                    .get(&v.name)
                    .map(|c| (Expr::var(&v.name) - Expr::Const(c)).powi(2))
            })
            .collect();
        if terms.is_empty() {
            return Ok(self.clone());
        }
        let prox = Expr::Const(tau / 2.0) * Expr::sum(terms);
        let mut pb = self.problem.clone();
        pb.objective = match pb.direction {
            Direction::Minimize => pb.objective + prox,
            Direction::Maximize => pb.objective - prox,
        };
        Self::certify(
            pb,
            self.record.clone(),
            self.original.clone(),
            self.recover.clone(),
        )
    }
}

/// Rule table: which strategy handles a component.
pub fn select_strategy(
    comp: &NonconvexComponent,
    pb: &Problem,
) -> Result<Strategy, ConvexifyError> {
    let no_rule = || ConvexifyError::NoStrategy(Box::new(comp.clone()));
    match comp.kind {
        ComponentKind::IntegerVariable => Ok(Strategy::BinaryRelaxation),
        ComponentKind::FractionalRatio => {
            let Location::Ineq(i) = comp.location else {
                return Err(no_rule());
            };
            let d = Domain::from_problem(pb);
            match rearrange_ratio(&pb.ineq[i], &d) {
                Ok(g) if curvature_of(&g, &d).is_convex() => Ok(Strategy::RatioRearrange),
                _ => Err(no_rule()),
            }
        }
        ComponentKind::BilinearProduct
        | ComponentKind::UnknownCurvatureTerm
        | ComponentKind::ConvexInMaximizeViolation
        | ComponentKind::ConcaveInMinimize => {
            if comp.location == Location::Objective && abs_shape(pb).is_some() {
                Ok(Strategy::EpigraphLift)
            } else {
                Ok(Strategy::Sca)
            }
        }
        ComponentKind::NonaffineEquality => Ok(Strategy::Sca),
    }
}

/// Continuous relaxation: binaries become `[0, 1]`, integers keep their
/// bounds. Constraints are untouched.
pub fn relax_integrality(pb: &Problem) -> Problem {
    let mut out = pb.clone();
    for v in &mut out.variables {
        v.kind = VarKind::Continuous;
    }
    out
}

/// `gamma - num / den <= 0` becomes `gamma * den - num <= 0`, which is
/// equivalent wherever `den > 0`.
pub fn rearrange_ratio(g: &Expr, domain: &Domain) -> Result<Expr, ConvexifyError> {
    let shape = ratio_threshold(g).ok_or_else(|| ConvexifyError::ShapeMismatch {
        strategy: Strategy::RatioRearrange,
        location: Location::Ineq(0),
        detail: format!("`{g}` is not a ratio threshold"),
    })?;
    if domain.sign_of(&shape.den) != SignInfo::Positive {
        return Err(ConvexifyError::SignUncertifiable(shape.den.to_string()));
    }
    let zero = matches!(shape.gamma, Expr::Const(c) if c == 0.0);
    Ok(if zero {
        -shape.num
    } else {
        shape.gamma * shape.den - shape.num
    })
}

/// Reference point used when the caller gives none: box midpoint,
/// `lb + 1` or `ub - 1` for half-bounded variables, 0 for free ones, kept
/// `1e-6` inside any nondegenerate box.
pub fn default_reference_point(pb: &Problem) -> Assignment {
    pb.variables
        .iter()
        .map(|v| (v.name.clone(), default_coordinate(v)))
        .collect()
}

fn default_coordinate(v: &VarDecl) -> f64 {
    let x = match (v.lb.is_finite(), v.ub.is_finite()) {
        (true, true) => 0.5 * (v.lb + v.ub),
        (true, false) => v.lb + 1.0,
        (false, true) => v.ub - 1.0,
        (false, false) => 0.0,
    };
    clamp_inside(v, x)
}

fn clamp_inside(v: &VarDecl, x: f64) -> f64 {
    const MARGIN: f64 = 1e-6;
    if v.ub - v.lb > 2.0 * MARGIN {
        x.clamp(v.lb + MARGIN, v.ub - MARGIN)
    } else {
        x.clamp(v.lb, v.ub)
    }
}

/// Completes `x0` with default coordinates and projects it into the box.
pub fn complete_reference(pb: &Problem, x0: &Assignment) -> Assignment {
    pb.variables
        .iter()
        .map(|v| {
            let x = x0
                .get(&v.name)
                .map_or_else(|| default_coordinate(v), |x| clamp_inside(v, x));
            (v.name.clone(), x)
        })
        .collect()
}

/// `|u| + c` objectives (after orienting to minimization).
fn abs_shape(pb: &Problem) -> Option<(Expr, Vec<Expr>)> {
    let f = match pb.direction {
        Direction::Minimize => pb.objective.clone(),
        Direction::Maximize => -pb.objective.clone(),
    };
    let mut terms = Vec::new();
    signed_terms(&f, 1.0, &mut terms);
    let mut inner = None;
    let mut rest = Vec::new();
    for (s, t) in terms {
        match t {
            Expr::Abs(u) if s > 0.0 && inner.is_none() && !u.free_vars().is_empty() => {
                inner = Some((**u).clone())
            }
            t if t.free_vars().is_empty() => {
                rest.push(if s > 0.0 { t.clone() } else { -t.clone() })
            }
            _ => return None,
        }
    }
    inner.map(|u| (u, rest))
}

fn fresh_name(taken: &BTreeSet<String>, base: &str) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !taken.contains(n))
        .unwrap()
}

fn taken_names(pb: &Problem) -> BTreeSet<String> {
    pb.variables
        .iter()
        .map(|v| v.name.clone())
        .chain(pb.params.keys().cloned())
        .collect()
}

/// Affine function as coefficients over `vars` plus a constant.
fn affine_parts(e: &Expr, vars: &[String], at: &Assignment) -> Result<(Vec<f64>, f64), ExprError> {
    let g = e.gradient(at, vars)?;
    let coeffs: Vec<f64> = vars.iter().map(|v| g.get(v).unwrap_or(0.0)).collect();
    let mut c = e.evaluate(at)?;
    for (v, a) in vars.iter().zip(&coeffs) {
        c -= a * at.get(v).unwrap_or(0.0);
    }
    Ok((coeffs, c))
}

fn linear_combination(coeffs: &[f64], names: &[String], constant: f64, t: &str) -> Expr {
    let mut terms: Vec<Expr> = coeffs
        .iter()
        .zip(names)
        .filter(|(a, _)| **a != 0.0)
        .map(|(a, n)| Expr::Const(*a) * Expr::var(n))
        .collect();
    if constant != 0.0 {
        terms.push(Expr::Const(constant) * Expr::var(t));
    }
    match terms.len() {
        0 => Expr::Const(0.0),
        1 => terms.pop().unwrap(),
        _ => Expr::Add(terms),
    }
}

struct Builder<'a> {
    pb: Problem,
    original: &'a Problem,
    policy: &'a Policy,
    x0: Assignment,
    record: TransformRecord,
    recover: Option<BTreeMap<String, Expr>>,
}

impl Builder<'_> {
    fn at(&self) -> Assignment {
        self.pb.env(&self.x0)
    }

    fn mismatch(
        &self,
        strategy: Strategy,
        location: &Location,
        detail: impl Into<String>,
    ) -> ConvexifyError {
        ConvexifyError::ShapeMismatch {
            strategy,
            location: location.clone(),
            detail: detail.into(),
        }
    }

    fn push(
        &mut self,
        location: Location,
        kind: Option<ComponentKind>,
        strategy: Strategy,
        before: Expr,
        after: Expr,
    ) {
        self.record.entries.push(TransformEntry {
            location,
            kind,
            strategy,
            before,
            after,
        });
    }

    fn linearize(&self, e: &Expr, keep: fn(Curvature) -> bool) -> Result<Expr, ExprError> {
        if self.policy.partial_linearization {
            partial_linearize(e, keep, &self.at(), &Domain::from_problem(&self.pb))
        } else {
            sca_linearize(e, &self.at())
        }
    }

    fn apply(
        &mut self,
        comp: &NonconvexComponent,
        strategy: Strategy,
    ) -> Result<(), ConvexifyError> {
        let loc = comp.location.clone();
        let kind = Some(comp.kind);
        match strategy {
            Strategy::Sdr | Strategy::Lagrangian => {
                if self.policy.allow_unformalized {
                    Err(ConvexifyError::Unimplemented(strategy))
                } else {
                    Err(ConvexifyError::StrategyDisabled(strategy))
                }
            }
            Strategy::BinaryRelaxation => {
                let Location::Variable(name) = &loc else {
                    return Err(self.mismatch(strategy, &loc, "only variables can be relaxed"));
                };
                let v = self
                    .pb
                    .variables
                    .iter_mut()
                    .find(|v| &v.name == name)
                    .ok_or_else(|| ConvexifyError::ShapeMismatch {
                        strategy,
                        location: loc.clone(),
                        detail: "unknown variable".into(),
                    })?;
                v.kind = VarKind::Continuous;
                self.push(
                    loc.clone(),
                    kind,
                    strategy,
                    Expr::var(name),
                    Expr::var(name),
                );
                Ok(())
            }
            Strategy::RatioRearrange => {
                let Location::Ineq(i) = loc else {
                    return Err(self.mismatch(
                        strategy,
                        &loc,
                        "only inequality constraints can be rearranged",
                    ));
                };
                let before = self.pb.ineq[i].clone();
                let after = rearrange_ratio(&before, &Domain::from_problem(&self.pb)).map_err(
                    |e| match e {
                        ConvexifyError::ShapeMismatch {
                            strategy, detail, ..
                        } => ConvexifyError::ShapeMismatch {
                            strategy,
                            location: loc.clone(),
                            detail,
                        },
                        e => e,
                    },
                )?;
                self.pb.ineq[i] = after.clone();
                self.push(loc, kind, strategy, before, after);
                Ok(())
            }
            Strategy::Sca => {
                let (before, after) = match loc {
                    Location::Ineq(i) => {
                        let before = self.pb.ineq[i].clone();
                        let after = self.linearize(&before, Curvature::is_convex)?;
                        self.pb.ineq[i] = after.clone();
                        (before, after)
                    }
                    Location::Eq(j) => {
                        let before = self.pb.eq[j].clone();
                        let after = self.linearize(&before, Curvature::is_affine)?;
                        self.pb.eq[j] = after.clone();
                        (before, after)
                    }
                    Location::Objective => {
                        let before = self.pb.objective.clone();
                        let keep = match self.pb.direction {
                            Direction::Minimize => Curvature::is_convex,
                            Direction::Maximize => Curvature::is_concave,
                        };
                        let after = self.linearize(&before, keep)?;
                        self.pb.objective = after.clone();
                        (before, after)
                    }
                    Location::Variable(_) => {
                        return Err(self.mismatch(
                            strategy,
                            &loc,
                            "variables cannot be linearized",
                        ));
                    }
                };
                self.push(loc, kind, strategy, before, after);
                Ok(())
            }
            Strategy::EpigraphLift => self.epigraph(comp),
            Strategy::Substitution => self.substitution(comp),
        }
    }

    /// `min |u| + c` becomes `min t + c` with `u - t <= 0` and `-u - t <= 0`;
    /// a non-affine `u` is linearized in both constraints.
    fn epigraph(&mut self, comp: &NonconvexComponent) -> Result<(), ConvexifyError> {
        let strategy = Strategy::EpigraphLift;
        if comp.location != Location::Objective {
            return Err(self.mismatch(strategy, &comp.location, "only objectives are lifted"));
        }
        let (u, rest) = abs_shape(&self.pb).ok_or_else(|| {
            self.mismatch(
                strategy,
                &comp.location,
                "objective is not of the form |u| + c",
            )
        })?;
        let d = Domain::from_problem(&self.pb);
        let linearized = !curvature_of(&u, &d).is_affine();
        let u_lin = if linearized {
            sca_linearize(&u, &self.at())?
        } else {
            u.clone()
        };
        let t = fresh_name(&taken_names(&self.pb), "epi_t");
        self.pb.variables.push(VarDecl {
            name: t.clone(),
            kind: VarKind::Continuous,
            lb: 0.0,
            ub: f64::INFINITY,
        });
        let abs_bound = u_lin.clone().abs().evaluate(&self.at()).unwrap_or(0.0);
        self.x0.insert(t.clone(), abs_bound + 1.0)?;
        let before = self.pb.objective.clone();
        let lifted = Expr::sum(std::iter::once(Expr::var(&t)).chain(rest));
        self.pb.objective = match self.pb.direction {
            Direction::Minimize => lifted,
            Direction::Maximize => -lifted,
        };
        let after = self.pb.objective.clone();
        self.push(
            Location::Objective,
            Some(comp.kind),
            strategy,
            before,
            after,
        );
        let sides = [
            (u.clone() - Expr::var(&t), u_lin.clone() - Expr::var(&t)),
            (-u - Expr::var(&t), -u_lin - Expr::var(&t)),
        ];
        for (before, side) in sides {
            self.pb.ineq.push(side.clone());
            let loc = Location::Ineq(self.pb.ineq.len() - 1);
            let how = if linearized { Strategy::Sca } else { strategy };
            self.push(loc, None, how, before, side);
        }
        Ok(())
    }

    /// Change of variables `y = x / den(x)`, `t = 1 / den(x)` for a
    /// linear-fractional objective over affine constraints. The result is
    /// affine in `(y, t)`; `x = y / t` recovers the original point.
    fn substitution(&mut self, comp: &NonconvexComponent) -> Result<(), ConvexifyError> {
        let strategy = Strategy::Substitution;
        let loc = comp.location.clone();
        if loc != Location::Objective {
            return Err(self.mismatch(strategy, &loc, "only objectives are substituted"));
        }
        let Expr::Div(num, den) = &self.pb.objective else {
            return Err(self.mismatch(strategy, &loc, "objective is not a ratio"));
        };
        let (num, den) = ((**num).clone(), (**den).clone());
        let d = Domain::from_problem(&self.pb);
        if !(curvature_of(&num, &d).is_affine() && curvature_of(&den, &d).is_affine()) {
            return Err(self.mismatch(strategy, &loc, "ratio is not linear-fractional"));
        }
        if d.sign_of(&den) != SignInfo::Positive {
            return Err(ConvexifyError::SignUncertifiable(den.to_string()));
        }
        if !self
            .pb
            .ineq
            .iter()
            .chain(&self.pb.eq)
            .all(|g| curvature_of(g, &d).is_affine())
        {
            return Err(self.mismatch(strategy, &loc, "constraints are not all affine"));
        }
        if !self.pb.all_continuous() {
            return Err(self.mismatch(strategy, &loc, "discrete variables remain"));
        }

        let at = self.at();
        let xs: Vec<String> = self.pb.var_names();
        let mut taken = taken_names(&self.pb);
        let ys: Vec<String> = xs
            .iter()
            .map(|x| {
                let n = fresh_name(&taken, &format!("cc_{x}"));
                taken.insert(n.clone());
                n
            })
            .collect();
        let t = fresh_name(&taken, "cc_t");

        let lift = |e: &Expr| -> Result<Expr, ExprError> {
            let (a, c) = affine_parts(e, &xs, &at)?;
            Ok(linear_combination(&a, &ys, c, &t))
        };
        let objective = lift(&num)?;
        let mut ineq = self
            .pb
            .ineq
            .iter()
            .map(&lift)
            .collect::<Result<Vec<_>, _>>()?;
        let mut eq = self
            .pb
            .eq
            .iter()
            .map(&lift)
            .collect::<Result<Vec<_>, _>>()?;
        eq.push(lift(&den)? - Expr::Const(1.0));

        let mut variables = Vec::new();
        for (v, y) in self.pb.variables.iter().zip(&ys) {
            let (lb, ub) = match (v.lb >= 0.0, v.ub <= 0.0) {
                (true, _) => (0.0, f64::INFINITY),
                (_, true) => (f64::NEG_INFINITY, 0.0),
                _ => (f64::NEG_INFINITY, f64::INFINITY),
            };
            variables.push(VarDecl {
                name: y.clone(),
                kind: VarKind::Continuous,
                lb,
                ub,
            });
            if v.lb.is_finite() && v.lb != 0.0 {
                ineq.push(Expr::Const(v.lb) * Expr::var(&t) - Expr::var(y));
            }
            if v.ub.is_finite() && v.ub != 0.0 {
                ineq.push(Expr::var(y) - Expr::Const(v.ub) * Expr::var(&t));
            }
        }
        variables.push(VarDecl {
            name: t.clone(),
            kind: VarKind::Continuous,
            lb: 0.0,
            ub: f64::INFINITY,
        });

        // reference point in the new coordinates
        let den_at = den.evaluate(&at)?;
        let mut x0 = Assignment::new();
        for (x, y) in xs.iter().zip(&ys) {
            x0.insert(y.clone(), self.x0.get(x).unwrap_or(0.0) / den_at)?;
        }
        x0.insert(t.clone(), 1.0 / den_at)?;

        let before = self.pb.objective.clone();
        self.recover = Some(
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| (x.clone(), Expr::var(y) / Expr::var(&t)))
                .collect(),
        );
        self.pb.objective = objective.clone();
        self.pb.ineq = ineq;
        self.pb.eq = eq;
        self.pb.variables = variables;
        self.x0 = x0;
        self.push(loc, Some(comp.kind), strategy, before, objective);
        Ok(())
    }
}

/// Applies one strategy per detected component, in the order variables,
/// inequality constraints, equality constraints, objective. Linearizations
/// are taken at `x0`, completed with default coordinates and projected
/// into the box. An already convex problem comes back unchanged with an
/// empty record.
pub fn convexify_problem(
    pb: &Problem,
    x0: &Assignment,
    policy: &Policy,
) -> Result<ConvexProblem, ConvexifyError> {
    let comps = detect_nonconvex(pb);
    if comps.is_empty() {
        return ConvexProblem::from_convex(pb);
    }
    let mut b = Builder {
        pb: pb.clone(),
        original: pb,
        policy,
        x0: complete_reference(pb, x0),
        record: TransformRecord::default(),
        recover: None,
    };
    for comp in &comps {
        let strategy = match policy.override_at(&comp.location) {
            Some(s) => s,
            None => match select_strategy(comp, &b.pb) {
                Ok(s) => s,
                Err(ConvexifyError::NoStrategy(_)) if policy.sca_fallback => Strategy::Sca,
                Err(e) => return Err(e),
            },
        };
        b.apply(comp, strategy)?;
    }
    if b.record.uses_reference() {
        b.record.reference = Some(b.x0.clone());
    }
    ConvexProblem::certify(b.pb, b.record, b.original.clone(), b.recover)
}
