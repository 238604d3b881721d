//! Curvature certification by composition rules, and detection of the
//! parts of a problem that keep it from being convex.

mod interval;
mod sample;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::expr::{Assignment, Expr};
use crate::model::{Direction, Location, Problem};

pub use interval::{Interval, SignInfo};
pub use sample::{sample_convexity_check, Verdict};

/// What the rules can certify. `Unknown` means "not certified", not
/// "certified non-convex".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Curvature {
    Constant,
    Affine,
    Convex,
    Concave,
    Unknown,
}

impl Curvature {
    pub fn is_convex(self) -> bool {
        matches!(
            self,
            Curvature::Constant | Curvature::Affine | Curvature::Convex
        )
    }

    pub fn is_concave(self) -> bool {
        matches!(
            self,
            Curvature::Constant | Curvature::Affine | Curvature::Concave
        )
    }

    pub fn is_affine(self) -> bool {
        matches!(self, Curvature::Constant | Curvature::Affine)
    }

    pub fn negate(self) -> Curvature {
        match self {
            Curvature::Convex => Curvature::Concave,
            Curvature::Concave => Curvature::Convex,
            c => c,
        }
    }

    fn add(self, o: Curvature) -> Curvature {
        use Curvature::*;
        match (self, o) {
            (Unknown, _) | (_, Unknown) => Unknown,
            (Constant, c) | (c, Constant) => c,
            (Affine, c) | (c, Affine) => c,
            (Convex, Convex) => Convex,
            (Concave, Concave) => Concave,
            _ => Unknown,
        }
    }

    /// Curvature of `c * self` for a constant `c` with the given sign.
    fn scale(self, sign: SignInfo) -> Curvature {
        if sign.is_nonneg() {
            self
        } else if sign.is_nonpos() {
            self.negate()
        } else if self.is_affine() {
            self
        } else {
            Curvature::Unknown
        }
    }
}

impl fmt::Display for Curvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Variable bounds and parameter values used to bound subexpressions.
#[derive(Debug, Clone, Default)]
pub struct Domain {
    bounds: BTreeMap<String, Interval>,
    params: Assignment,
}

impl Domain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_problem(pb: &Problem) -> Self {
        Domain {
            bounds: pb
                .variables
                .iter()
                .map(|v| (v.name.clone(), Interval::new(v.lb, v.ub)))
                .collect(),
            params: pb.param_env(),
        }
    }

    pub fn with_var(mut self, name: &str, lo: f64, hi: f64) -> Self {
        self.bounds.insert(name.to_string(), Interval::new(lo, hi));
        self
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        let _ = self.params.insert(name, value);
        self
    }

    pub fn interval_of(&self, e: &Expr) -> Interval {
        analyze(e, self).1
    }

    pub fn sign_of(&self, e: &Expr) -> SignInfo {
        self.interval_of(e).sign()
    }
}

/// Curvature of `e` on the domain.
pub fn curvature_of(e: &Expr, d: &Domain) -> Curvature {
    analyze(e, d).0
}

fn analyze(e: &Expr, d: &Domain) -> (Curvature, Interval) {
    use Curvature::*;
    match e {
        Expr::Const(c) => (Constant, Interval::point(*c)),
        Expr::Param(p) => (
            Constant,
            d.params.get(p).map_or(Interval::ALL, Interval::point),
        ),
        Expr::Var(v) => (Affine, d.bounds.get(v).copied().unwrap_or(Interval::ALL)),
        Expr::Add(xs) => xs
            .iter()
            .fold((Constant, Interval::point(0.0)), |(c, i), x| {
                let (cx, ix) = analyze(x, d);
                (c.add(cx), i.add(ix))
            }),
        Expr::Neg(x) => {
            let (c, i) = analyze(x, d);
            (c.negate(), i.neg())
        }
        Expr::Mul(xs) => {
            let parts: Vec<_> = xs.iter().map(|x| analyze(x, d)).collect();
            let range = parts
                .iter()
                .fold(Interval::point(1.0), |acc, p| acc.mul(p.1));
            let varying: Vec<_> = parts.iter().filter(|p| p.0 != Constant).collect();
            let curv = match varying.len() {
                0 => Constant,
                1 => {
                    let k = parts
                        .iter()
                        .filter(|p| p.0 == Constant)
                        .fold(Interval::point(1.0), |acc, p| acc.mul(p.1));
                    if k == Interval::point(0.0) {
                        Constant
                    } else {
                        varying[0].0.scale(k.sign())
                    }
                }
                _ => Unknown,
            };
            (curv, range)
        }
        Expr::Div(n, den) => {
            let (cn, inum) = analyze(n, d);
            let (cd, id) = analyze(den, d);
            let range = inum.div(id);
            let curv = match (cn, cd) {
                (Constant, Constant) => Constant,
                (_, Constant) => {
                    if id.contains_zero() {
                        if cn.is_affine() {
                            Affine
                        } else {
                            Unknown
                        }
                    } else {
                        cn.scale(id.sign())
                    }
                }
                (Constant, _) => match (inum.sign(), id.sign()) {
                    // c / u is convex decreasing in u > 0 when c >= 0
                    (s, SignInfo::Positive) if s.is_nonneg() && cd.is_concave() => Convex,
                    (s, SignInfo::Positive) if s.is_nonpos() && cd.is_concave() => Concave,
                    (s, SignInfo::Negative) if s.is_nonpos() && cd.is_convex() => Convex,
                    (s, SignInfo::Negative) if s.is_nonneg() && cd.is_convex() => Concave,
                    _ => Unknown,
                },
                _ => Unknown,
            };
            (curv, range)
        }
        Expr::Pow(b, p) => {
            let (cb, ib) = analyze(b, d);
            (pow_curvature(cb, ib, *p), ib.pow(*p))
        }
        Expr::Log(x) | Expr::Log2(x) => {
            let (c, i) = analyze(x, d);
            let range = if matches!(e, Expr::Log(_)) {
                i.ln()
            } else {
                i.ln().scale(1.0 / std::f64::consts::LN_2)
            };
            (compose(c, Concave, Mono::Increasing), range)
        }
        Expr::Exp(x) => {
            let (c, i) = analyze(x, d);
            (compose(c, Convex, Mono::Increasing), i.exp())
        }
        Expr::Sqrt(x) => {
            let (c, i) = analyze(x, d);
            (compose(c, Concave, Mono::Increasing), i.sqrt())
        }
        Expr::Abs(x) => {
            let (c, i) = analyze(x, d);
            let curv = match i.sign() {
                s if s.is_nonneg() => c,
                s if s.is_nonpos() => c.negate(),
                _ if c.is_affine() && c != Constant => Convex,
                _ if c == Constant => Constant,
                _ => Unknown,
            };
            (curv, i.abs())
        }
    }
}

#[derive(Clone, Copy)]
enum Mono {
    Increasing,
    Decreasing,
    Neither,
}

/// Composition rule for `outer(inner)`.
fn compose(inner: Curvature, outer: Curvature, mono: Mono) -> Curvature {
    use Curvature::*;
    if inner == Constant {
        return Constant;
    }
    let ok = match (outer, mono) {
        (_, _) if inner == Affine => true,
        (Convex, Mono::Increasing) => inner == Convex,
        (Convex, Mono::Decreasing) => inner == Concave,
        (Concave, Mono::Increasing) => inner == Concave,
        (Concave, Mono::Decreasing) => inner == Convex,
        _ => false,
    };
    if ok && matches!(outer, Convex | Concave) {
        outer
    } else {
        Unknown
    }
}

fn pow_curvature(cb: Curvature, ib: Interval, p: f64) -> Curvature {
    use Curvature::*;
    if cb == Constant || p == 0.0 {
        return Constant;
    }
    if p == 1.0 {
        return cb;
    }
    let integer = p.fract() == 0.0;
    let even = integer && (p / 2.0).fract() == 0.0;
    let s = ib.sign();
    if p > 1.0 {
        if even {
            // x^p is convex everywhere, increasing for x >= 0, decreasing for x <= 0
            let mono = if s.is_nonneg() {
                Mono::Increasing
            } else if s.is_nonpos() {
                Mono::Decreasing
            } else {
                Mono::Neither
            };
            compose(cb, Convex, mono)
        } else if s.is_nonneg() {
            compose(cb, Convex, Mono::Increasing)
        } else if integer && s.is_nonpos() {
            compose(cb, Concave, Mono::Increasing)
        } else {
            Unknown
        }
    } else if p > 0.0 {
        if s.is_nonneg() {
            compose(cb, Concave, Mono::Increasing)
        } else {
            Unknown
        }
    } else if s == SignInfo::Positive {
        compose(cb, Convex, Mono::Decreasing)
    } else if integer && s == SignInfo::Negative {
        if even {
            compose(cb, Convex, Mono::Increasing)
        } else {
            compose(cb, Concave, Mono::Decreasing)
        }
    } else {
        Unknown
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ComponentKind {
    BilinearProduct,
    FractionalRatio,
    ConcaveInMinimize,
    ConvexInMaximizeViolation,
    NonaffineEquality,
    IntegerVariable,
    UnknownCurvatureTerm,
}

/// One reason the problem is not certified convex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonconvexComponent {
    pub location: Location,
    pub kind: ComponentKind,
    #[serde(serialize_with = "serialize_display")]
    pub term: Expr,
}

fn serialize_display<S: serde::Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(e)
}

impl fmt::Display for NonconvexComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.kind, self.location, self.term)
    }
}

/// `num / den >= gamma`, recovered from a normalized constraint
/// `gamma - num / den <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioShape {
    pub num: Expr,
    pub den: Expr,
    pub gamma: Expr,
}

pub(crate) fn signed_terms<'a>(e: &'a Expr, sign: f64, out: &mut Vec<(f64, &'a Expr)>) {
    match e {
        Expr::Add(xs) => xs.iter().for_each(|x| signed_terms(x, sign, out)),
        Expr::Neg(x) => signed_terms(x, -sign, out),
        _ => out.push((sign, e)),
    }
}

/// Matches constraints of the form `gamma - num / den <= 0` where `gamma`
/// is variable-free and the ratio is not.
pub fn ratio_threshold(g: &Expr) -> Option<RatioShape> {
    let mut terms = Vec::new();
    signed_terms(g, 1.0, &mut terms);
    let mut ratio = None;
    let mut rest = Vec::new();
    for (s, t) in terms {
        match t {
            Expr::Div(n, den) if !t.free_vars().is_empty() => {
                if ratio.is_some() || s > 0.0 {
                    return None;
                }
                ratio = Some(((**n).clone(), (**den).clone()));
            }
            _ if t.free_vars().is_empty() => {
                rest.push(if s > 0.0 { t.clone() } else { -t.clone() })
            }
            _ => return None,
        }
    }
    let (num, den) = ratio?;
    Some(RatioShape {
        num,
        den,
        gamma: Expr::sum(rest),
    })
}

/// First product (pre-order) with two or more non-constant factors.
fn find_bilinear(e: &Expr, d: &Domain) -> Option<Expr> {
    let mut found = None;
    e.walk(&mut |n| {
        if found.is_none() {
            if let Expr::Mul(xs) = n {
                let varying = xs.iter().filter(|x| !x.free_vars().is_empty()).count();
                if varying >= 2 && curvature_of(n, d) == Curvature::Unknown {
                    found = Some(n.clone());
                }
            }
        }
    });
    found
}

fn classify_constraint(g: &Expr, d: &Domain) -> Option<(ComponentKind, Expr)> {
    let c = curvature_of(g, d);
    if c.is_convex() {
        return None;
    }
    if let Some(shape) = ratio_threshold(g) {
        return Some((
            ComponentKind::FractionalRatio,
            Expr::Div(Box::new(shape.num), Box::new(shape.den)),
        ));
    }
    if let Some(m) = find_bilinear(g, d) {
        return Some((ComponentKind::BilinearProduct, m));
    }
    if c == Curvature::Concave {
        return Some((ComponentKind::ConcaveInMinimize, g.clone()));
    }
    Some((ComponentKind::UnknownCurvatureTerm, g.clone()))
}

fn classify_objective(pb: &Problem, d: &Domain) -> Option<(ComponentKind, Expr)> {
    let f = &pb.objective;
    let c = curvature_of(f, d);
    let ok = match pb.direction {
        Direction::Minimize => c.is_convex(),
        Direction::Maximize => c.is_concave(),
    };
    if ok {
        return None;
    }
    if let Some(m) = find_bilinear(f, d) {
        return Some((ComponentKind::BilinearProduct, m));
    }
    match (pb.direction, c) {
        (Direction::Minimize, Curvature::Concave) => {
            Some((ComponentKind::ConcaveInMinimize, f.clone()))
        }
        (Direction::Maximize, Curvature::Convex) => {
            Some((ComponentKind::ConvexInMaximizeViolation, f.clone()))
        }
        _ => Some((ComponentKind::UnknownCurvatureTerm, f.clone())),
    }
}

/// Every obstacle to convexity, in the order variables, inequality
/// constraints, equality constraints, objective. Empty exactly when
/// [`verify_convex`] holds.
pub fn detect_nonconvex(pb: &Problem) -> Vec<NonconvexComponent> {
    let d = Domain::from_problem(pb);
    let mut out = Vec::new();
    for v in pb.variables.iter().filter(|v| v.kind.is_discrete()) {
        out.push(NonconvexComponent {
            location: Location::Variable(v.name.clone()),
            kind: ComponentKind::IntegerVariable,
            term: Expr::Var(v.name.clone()),
        });
    }
    for (i, g) in pb.ineq.iter().enumerate() {
        if let Some((kind, term)) = classify_constraint(g, &d) {
            out.push(NonconvexComponent {
                location: Location::Ineq(i),
                kind,
                term,
            });
        }
    }
    for (j, h) in pb.eq.iter().enumerate() {
        if !curvature_of(h, &d).is_affine() {
            out.push(NonconvexComponent {
                location: Location::Eq(j),
                kind: ComponentKind::NonaffineEquality,
                term: h.clone(),
            });
        }
    }
    if let Some((kind, term)) = classify_objective(pb, &d) {
        out.push(NonconvexComponent {
            location: Location::Objective,
            kind,
            term,
        });
    }
    out
}

/// Convex objective (concave when maximizing), convex inequality
/// functions, affine equality functions, and only continuous variables.
pub fn verify_convex(pb: &Problem) -> bool {
    let d = Domain::from_problem(pb);
    let objective_ok = match pb.direction {
        Direction::Minimize => curvature_of(&pb.objective, &d).is_convex(),
        Direction::Maximize => curvature_of(&pb.objective, &d).is_concave(),
    };
    objective_ok
        && pb.all_continuous()
        && pb.ineq.iter().all(|g| curvature_of(g, &d).is_convex())
        && pb.eq.iter().all(|h| curvature_of(h, &d).is_affine())
}
