//! Optimization problems, the modeling language, the canonical JSON form,
//! and formulation checks.

mod consistency;
mod dsl;
mod extract;
mod json;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Assignment, Expr};

pub use consistency::{validate_consistency, ConsistencyReport, Criterion};
pub use dsl::{emit_dsl, parse_problem};
pub use extract::{extract_from_nl, parse_optimization_flag, Extraction, ExtractionError};
pub use json::{emit_json, parse_json};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("undeclared symbol `{name}` at {line}:{col}")]
    UndeclaredSymbol {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("duplicate declaration of `{name}`")]
    DuplicateDeclaration {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("bound violation for `{name}`: {detail}")]
    BoundViolation { name: String, detail: String },
    #[error("strict inequality at {line}:{col} is not supported; use <= or >=")]
    StrictInequality { line: usize, col: usize },
    #[error("invalid model at {line}:{col}: {detail}")]
    Invalid {
        line: usize,
        col: usize,
        detail: String,
    },
    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

impl VarKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VarKind::Continuous => "continuous",
            VarKind::Integer => "integer",
            VarKind::Binary => "binary",
        }
    }
}

impl std::str::FromStr for VarKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "continuous" => Ok(VarKind::Continuous),
            "integer" => Ok(VarKind::Integer),
            "binary" => Ok(VarKind::Binary),
            other => Err(format!("unknown variable kind `{other}`")),
        }
    }
}

/// A scalar decision variable. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

impl VarDecl {
    pub fn new(
        name: impl Into<String>,
        kind: VarKind,
        lb: f64,
        ub: f64,
    ) -> Result<Self, ModelError> {
        let d = VarDecl {
            name: name.into(),
            kind,
            lb,
            ub,
        };
        d.check()?;
        Ok(d)
    }

    pub fn continuous(name: impl Into<String>, lb: f64, ub: f64) -> Result<Self, ModelError> {
        Self::new(name, VarKind::Continuous, lb, ub)
    }

    pub fn binary(name: impl Into<String>) -> Self {
        VarDecl {
            name: name.into(),
            kind: VarKind::Binary,
            lb: 0.0,
            ub: 1.0,
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        let bad = |detail: String| ModelError::BoundViolation {
            name: self.name.clone(),
            detail,
        };
        if self.lb.is_nan() || self.ub.is_nan() {
            return Err(bad("bound is NaN".into()));
        }
        if self.lb == f64::INFINITY || self.ub == f64::NEG_INFINITY {
            return Err(bad("bounds leave an empty domain".into()));
        }
        if self.lb > self.ub {
            return Err(bad(format!(
                "lower bound {} exceeds upper bound {}",
                self.lb, self.ub
            )));
        }
        if self.kind == VarKind::Binary && (self.lb != 0.0 || self.ub != 1.0) {
            return Err(bad(format!(
                "binary variables have bounds [0, 1], got [{}, {}]",
                self.lb, self.ub
            )));
        }
        Ok(())
    }

    pub fn is_bounded(&self) -> bool {
        self.lb.is_finite() && self.ub.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Minimize => "minimize",
            Direction::Maximize => "maximize",
        }
    }
}

/// Where a constraint or objective lives inside a [`Problem`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "at", content = "index", rename_all = "snake_case")]
pub enum Location {
    Variable(String),
    Ineq(usize),
    Eq(usize),
    Objective,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Variable(v) => write!(f, "variable {v}"),
            Location::Ineq(i) => write!(f, "ineq[{i}]"),
            Location::Eq(j) => write!(f, "eq[{j}]"),
            Location::Objective => f.write_str("objective"),
        }
    }
}

/// An optimization problem: optimize `objective` subject to `ineq[i] <= 0`,
/// `eq[j] == 0` and the variable bounds.
///
/// Parameters are declared in `params`; a `None` value marks a parameter
/// that was declared without a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub name: String,
    pub direction: Direction,
    pub objective: Expr,
    pub ineq: Vec<Expr>,
    pub eq: Vec<Expr>,
    pub variables: Vec<VarDecl>,
    pub params: BTreeMap<String, Option<f64>>,
}

const RESERVED: &[&str] = &[
    "problem",
    "var",
    "param",
    "minimize",
    "maximize",
    "subject",
    "to",
    "for",
    "in",
    "continuous",
    "integer",
    "binary",
    "inf",
    "log",
    "log2",
    "exp",
    "abs",
    "sqrt",
    "sum",
];

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !RESERVED.contains(&s)
}

impl Problem {
    /// Number of inequality constraints.
    pub fn m(&self) -> usize {
        self.ineq.len()
    }

    /// Number of equality constraints.
    pub fn p(&self) -> usize {
        self.eq.len()
    }

    pub fn var_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn decl(&self, name: &str) -> Option<&VarDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn all_continuous(&self) -> bool {
        self.variables.iter().all(|v| v.kind == VarKind::Continuous)
    }

    /// Objective followed by every constraint, with locations.
    pub fn functions(&self) -> impl Iterator<Item = (Location, &Expr)> {
        std::iter::once((Location::Objective, &self.objective))
            .chain(
                self.ineq
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (Location::Ineq(i), e)),
            )
            .chain(
                self.eq
                    .iter()
                    .enumerate()
                    .map(|(j, e)| (Location::Eq(j), e)),
            )
    }

    pub fn function_at(&self, loc: &Location) -> Option<&Expr> {
        match loc {
            Location::Objective => Some(&self.objective),
            Location::Ineq(i) => self.ineq.get(*i),
            Location::Eq(j) => self.eq.get(*j),
            Location::Variable(_) => None,
        }
    }

    /// Parameter values that are known.
    pub fn param_env(&self) -> Assignment {
        self.params
            .iter()
            .filter_map(|(k, v)| v.map(|v| (k.clone(), v)))
            .filter(|(_, v)| v.is_finite())
            .collect()
    }

    /// Parameter values merged with a point.
    pub fn env(&self, x: &Assignment) -> Assignment {
        self.param_env().merged(x)
    }

    /// Parameters referenced anywhere in the problem.
    pub fn referenced_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (_, e) in self.functions() {
            out.extend(e.params());
        }
        out
    }

    /// Variables referenced by the objective or any constraint.
    pub fn referenced_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (_, e) in self.functions() {
            out.extend(e.free_vars());
        }
        out
    }

    /// Structural well-formedness: unique declarations, every symbol
    /// declared, valid bounds and names, no literal zero denominators.
    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |detail: String| ModelError::Invalid {
            line: 0,
            col: 0,
            detail,
        };
        if !is_identifier(&self.name) {
            return Err(invalid(format!(
                "problem name `{}` is not an identifier",
                self.name
            )));
        }
        let mut seen = BTreeSet::new();
        for v in &self.variables {
            if !is_identifier(&v.name) {
                return Err(invalid(format!(
                    "variable name `{}` is not an identifier",
                    v.name
                )));
            }
            if !seen.insert(v.name.as_str()) || self.params.contains_key(&v.name) {
                return Err(ModelError::DuplicateDeclaration {
                    name: v.name.clone(),
                    line: 0,
                    col: 0,
                });
            }
            v.check()?;
        }
        for (k, v) in &self.params {
            if !is_identifier(k) {
                return Err(invalid(format!(
                    "parameter name `{k}` is not an identifier"
                )));
            }
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(invalid(format!("parameter `{k}` has non-finite value {v}")));
                }
            }
        }
        for (loc, e) in self.functions() {
            for v in e.free_vars() {
                if !seen.contains(v.as_str()) {
                    return Err(ModelError::UndeclaredSymbol {
                        name: v,
                        line: 0,
                        col: 0,
                    });
                }
            }
            for p in e.params() {
                if !self.params.contains_key(&p) {
                    return Err(ModelError::UndeclaredSymbol {
                        name: p,
                        line: 0,
                        col: 0,
                    });
                }
            }
            let mut bad = None;
            e.walk(&mut |n| match n {
                Expr::Div(_, d) if matches!(**d, Expr::Const(c) if c == 0.0) => {
                    bad = Some(format!("{loc}: division by the constant 0"))
                }
                Expr::Const(c) if !c.is_finite() => {
                    bad = Some(format!("{loc}: non-finite constant"))
                }
                Expr::Pow(_, p) if !p.is_finite() => {
                    bad = Some(format!("{loc}: non-finite exponent"))
                }
                Expr::Var(s) | Expr::Param(s) if s.is_empty() => {
                    bad = Some(format!("{loc}: empty name"))
                }
                _ => {}
            });
            if let Some(detail) = bad {
                return Err(invalid(detail));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_dsl(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn var_decl_invariants() {
        assert!(VarDecl::continuous("x", 1.0, 0.0).is_err());
        assert!(VarDecl::new("a", VarKind::Binary, 0.0, 2.0).is_err());
        assert!(VarDecl::continuous("x", f64::NEG_INFINITY, f64::INFINITY).is_ok());
        assert!(VarDecl::continuous("x", f64::INFINITY, f64::INFINITY).is_err());
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("p_1"));
        assert!(is_identifier("_x"));
        assert!(!is_identifier("1p"));
        assert!(!is_identifier("p[1]"));
        assert!(!is_identifier("log"));
        assert!(!is_identifier(""));
    }

    #[test]
    fn validate_catches_undeclared_and_duplicates() {
        let mut pb = Problem {
            name: "t".into(),
            direction: Direction::Minimize,
            objective: Expr::var("x") + Expr::var("y"),
            ineq: vec![],
            eq: vec![],
            variables: vec![VarDecl::continuous("x", 0.0, 1.0).unwrap()],
            params: BTreeMap::new(),
        };
        assert!(matches!(
            pb.validate(),
            Err(ModelError::UndeclaredSymbol { .. })
        ));
        pb.variables
            .push(VarDecl::continuous("y", 0.0, 1.0).unwrap());
        assert!(pb.validate().is_ok());
        pb.variables
            .push(VarDecl::continuous("y", 0.0, 1.0).unwrap());
        assert!(matches!(
            pb.validate(),
            Err(ModelError::DuplicateDeclaration { .. })
        ));
    }
}
