//! Scalar expression IR.
//!
//! Every objective and constraint in a [`Problem`](crate::model::Problem) is an
//! immutable [`Expr`] tree. Indexed sums from the modeling language are
//! expanded into `Add` nodes at construction time, so the tree only ever holds
//! scalar operations.

pub(crate) mod compiled;
mod display;
mod simplify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use compiled::Compiled;
pub use simplify::simplify;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("not differentiable: {0}")]
    NonDifferentiable(String),
    #[error("non-finite value {value} for `{name}`")]
    NonFinite { name: String, value: f64 },
}

/// A scalar expression over decision variables and named parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Param(String),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, f64),
    Neg(Box<Expr>),
    Log(Box<Expr>),
    Log2(Box<Expr>),
    Exp(Box<Expr>),
    Abs(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        let name = name.into();
        assert!(!name.is_empty(), "variable name must be nonempty");
        Expr::Var(name)
    }

    pub fn param(name: impl Into<String>) -> Expr {
        let name = name.into();
        assert!(!name.is_empty(), "parameter name must be nonempty");
        Expr::Param(name)
    }

    /// Sum of the given terms. An empty sum is the constant 0 and a single
    /// term is returned as is.
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        let mut terms: Vec<Expr> = terms.into_iter().collect();
        match terms.len() {
            0 => Expr::Const(0.0),
            1 => terms.pop().unwrap(),
            _ => Expr::Add(terms),
        }
    }

    pub fn product(factors: impl IntoIterator<Item = Expr>) -> Expr {
        let mut factors: Vec<Expr> = factors.into_iter().collect();
        match factors.len() {
            0 => Expr::Const(1.0),
            1 => factors.pop().unwrap(),
            _ => Expr::Mul(factors),
        }
    }

    /// Quotient. Returns `None` when the denominator is the literal constant 0.
    pub fn checked_div(num: Expr, den: Expr) -> Option<Expr> {
        if matches!(den, Expr::Const(c) if c == 0.0) {
            None
        } else {
            Some(Expr::Div(Box::new(num), Box::new(den)))
        }
    }

    pub fn pow(self, exponent: f64) -> Expr {
        Expr::Pow(Box::new(self), exponent)
    }

    pub fn powi(self, exponent: i32) -> Expr {
        self.pow(exponent as f64)
    }

    pub fn log(self) -> Expr {
        Expr::Log(Box::new(self))
    }

    pub fn log2(self) -> Expr {
        Expr::Log2(Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn abs(self) -> Expr {
        Expr::Abs(Box::new(self))
    }

    pub fn sqrt(self) -> Expr {
        Expr::Sqrt(Box::new(self))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Immediate children, in order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => Vec::new(),
            Expr::Add(xs) | Expr::Mul(xs) => xs.iter().collect(),
            Expr::Div(n, d) => vec![n, d],
            Expr::Pow(b, _) => vec![b],
            Expr::Neg(c)
            | Expr::Log(c)
            | Expr::Log2(c)
            | Expr::Exp(c)
            | Expr::Abs(c)
            | Expr::Sqrt(c) => vec![c],
        }
    }

    /// Rebuild this node with every child passed through `f`.
    pub fn map_children(&self, mut f: impl FnMut(&Expr) -> Expr) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => self.clone(),
            Expr::Add(xs) => Expr::Add(xs.iter().map(&mut f).collect()),
            Expr::Mul(xs) => Expr::Mul(xs.iter().map(&mut f).collect()),
            Expr::Div(n, d) => Expr::Div(Box::new(f(n)), Box::new(f(d))),
            Expr::Pow(b, p) => Expr::Pow(Box::new(f(b)), *p),
            Expr::Neg(c) => Expr::Neg(Box::new(f(c))),
            Expr::Log(c) => Expr::Log(Box::new(f(c))),
            Expr::Log2(c) => Expr::Log2(Box::new(f(c))),
            Expr::Exp(c) => Expr::Exp(Box::new(f(c))),
            Expr::Abs(c) => Expr::Abs(Box::new(f(c))),
            Expr::Sqrt(c) => Expr::Sqrt(Box::new(f(c))),
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Names of the decision variables reachable in the tree.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Var(v) = e {
                out.insert(v.clone());
            }
        });
        out
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Param(v) = e {
                out.insert(v.clone());
            }
        });
        out
    }

    /// True when no decision variable occurs in the tree.
    pub fn is_constant(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Var(_)));
        !found
    }

    /// Replace variables and parameters by name, simultaneously. Inserted
    /// trees are not visited again.
    pub fn substitute(&self, bindings: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Var(name) | Expr::Param(name) => match bindings.get(name) {
                Some(e) => e.clone(),
                None => self.clone(),
            },
            _ => self.map_children(|c| c.substitute(bindings)),
        }
    }

    /// Value of the expression under `a`. Parameters and variables are both
    /// looked up in `a`.
    pub fn evaluate(&self, a: &Assignment) -> Result<f64, ExprError> {
        Compiled::compile(self, &[], a)?.value(&[])
    }

    /// Partial derivatives with respect to `vars` at the point `at`, by
    /// symbolic rules on the tree. `|u|` uses subgradient 0 at `u = 0`.
    pub fn gradient<S: AsRef<str>>(
        &self,
        at: &Assignment,
        vars: &[S],
    ) -> Result<GradientVector, ExprError> {
        let names: Vec<String> = vars.iter().map(|s| s.as_ref().to_string()).collect();
        let mut x = Vec::with_capacity(names.len());
        for n in &names {
            x.push(
                at.get(n)
                    .ok_or_else(|| ExprError::UnboundSymbol(n.clone()))?,
            );
        }
        let compiled = Compiled::compile(self, &names, at)?;
        let mut g = vec![0.0; names.len()];
        compiled.value_grad(&x, &mut g)?;
        Ok(GradientVector(names.into_iter().zip(g).collect()))
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match self {
            Expr::Add(mut xs) => {
                xs.push(rhs);
                Expr::Add(xs)
            }
            lhs => Expr::Add(vec![lhs, rhs]),
        }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + Expr::Neg(Box::new(rhs))
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match self {
            Expr::Mul(mut xs) => {
                xs.push(rhs);
                Expr::Mul(xs)
            }
            lhs => Expr::Mul(vec![lhs, rhs]),
        }
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    /// Panics if `rhs` is the literal constant 0; use [`Expr::checked_div`]
    /// for untrusted input.
    fn div(self, rhs: Expr) -> Expr {
        Expr::checked_div(self, rhs).expect("division by the literal constant 0")
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Expr {
        Expr::Const(v)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        display::write_expr(f, self)
    }
}

/// Values for variables and parameters. Every value is finite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct Assignment(BTreeMap<String, f64>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) -> Result<(), ExprError> {
        let name = name.into();
        if !value.is_finite() {
            return Err(ExprError::NonFinite { name, value });
        }
        self.0.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Entries of `other` override entries of `self`.
    pub fn merged(&self, other: &Assignment) -> Assignment {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.0.insert(k.to_string(), v);
        }
        out
    }

    /// Largest absolute coordinate difference over the keys of `self`.
    /// Keys missing from `other` count as infinitely far.
    pub fn max_abs_diff(&self, other: &Assignment) -> f64 {
        self.iter()
            .map(|(k, v)| other.get(k).map_or(f64::INFINITY, |w| (v - w).abs()))
            .fold(0.0, f64::max)
    }
}

impl TryFrom<BTreeMap<String, f64>> for Assignment {
    type Error = ExprError;
    fn try_from(map: BTreeMap<String, f64>) -> Result<Self, ExprError> {
        let mut a = Assignment::new();
        for (k, v) in map {
            a.insert(k, v)?;
        }
        Ok(a)
    }
}

impl From<Assignment> for BTreeMap<String, f64> {
    fn from(a: Assignment) -> Self {
        a.0
    }
}

/// Panics on a non-finite value.
impl<S: Into<String>> FromIterator<(S, f64)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut a = Assignment::new();
        for (k, v) in iter {
            a.insert(k, v).expect("assignment values must be finite");
        }
        a
    }
}

/// Partial derivatives keyed by variable name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector(pub BTreeMap<String, f64>);

impl GradientVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}
