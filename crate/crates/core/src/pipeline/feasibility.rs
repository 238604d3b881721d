use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::expr::Assignment;
use crate::model::Problem;

/// Violations of the original problem at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// `max(0, g_i(x))` by inequality index.
    pub ineq: BTreeMap<usize, f64>,
    /// `|h_j(x)|` by equality index.
    pub eq: BTreeMap<usize, f64>,
    /// Distance outside `[lb, ub]` by variable.
    pub bounds: BTreeMap<String, f64>,
    /// `|x - round(x)|` for integer and binary variables.
    pub integrality: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub diagnostic: Option<String>,
}

impl FeasibilityReport {
    pub fn max_violation(&self) -> f64 {
        self.ineq
            .values()
            .chain(self.eq.values())
            .chain(self.bounds.values())
            .chain(self.integrality.values())
            .fold(0.0, |m, v| m.max(*v))
    }

    fn infeasible(tolerance: f64, diagnostic: String) -> Self {
        FeasibilityReport {
            feasible: false,
            ineq: BTreeMap::new(),
            eq: BTreeMap::new(),
            bounds: BTreeMap::new(),
            integrality: BTreeMap::new(),
            tolerance,
            diagnostic: Some(diagnostic),
        }
    }
}

/// Evaluates every constraint, bound and integrality requirement of `pb`
/// at `x`. A point that cannot be evaluated is reported infeasible with a
/// diagnostic.
pub fn check_feasibility(pb: &Problem, x: &Assignment, eps: f64) -> FeasibilityReport {
    let env = pb.env(x);
    let mut rep = FeasibilityReport::infeasible(eps, String::new());
    rep.diagnostic = None;
    for (i, g) in pb.ineq.iter().enumerate() {
        match g.evaluate(&env) {
            Ok(v) if !v.is_nan() => {
                rep.ineq.insert(i, v.max(0.0));
            }
            Ok(_) => return FeasibilityReport::infeasible(eps, format!("ineq[{i}] is NaN")),
            Err(e) => return FeasibilityReport::infeasible(eps, format!("ineq[{i}]: {e}")),
        }
    }
    for (j, h) in pb.eq.iter().enumerate() {
        match h.evaluate(&env) {
            Ok(v) if !v.is_nan() => {
                rep.eq.insert(j, v.abs());
            }
            Ok(_) => return FeasibilityReport::infeasible(eps, format!("eq[{j}] is NaN")),
            Err(e) => return FeasibilityReport::infeasible(eps, format!("eq[{j}]: {e}")),
        }
    }
    for v in &pb.variables {
        let Some(xv) = x.get(&v.name) else {
            return FeasibilityReport::infeasible(eps, format!("no value for `{}`", v.name));
        };
        let out = (v.lb - xv).max(xv - v.ub).max(0.0);
        if out > 0.0 {
            rep.bounds.insert(v.name.clone(), out);
        }
        if v.kind.is_discrete() {
            rep.integrality
                .insert(v.name.clone(), (xv - xv.round()).abs());
        }
    }
    rep.feasible = rep.max_violation() <= eps;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_problem;

    const POWER: &str = include_str!("../../corpus/power_allocation.ncx");

    fn point(vals: &[f64]) -> Assignment {
        vals.iter()
            .enumerate()
            .map(|(i, v)| (format!("p_{}", i + 1), *v))
            .collect()
    }

    #[test]
    fn case_study_points() {
        let pb = parse_problem(POWER).unwrap();
        let ok = check_feasibility(&pb, &point(&[2.0; 5]), 1e-6);
        assert!(ok.feasible);
        assert_eq!(ok.ineq[&0], 0.0);
        let bad = check_feasibility(&pb, &point(&[3.0; 5]), 1e-6);
        assert!(!bad.feasible);
        assert_eq!(bad.ineq[&0], 5.0);
    }

    #[test]
    fn relaxed_binary_fails_integrality() {
        let pb = parse_problem("var a binary\nmaximize a").unwrap();
        let rep = check_feasibility(&pb, &[("a", 0.5)].into_iter().collect(), 1e-6);
        assert!(!rep.feasible);
        assert_eq!(rep.integrality["a"], 0.5);
    }

    #[test]
    fn domain_errors_are_infeasible() {
        let pb = parse_problem("var x\nminimize x\nsubject to\n log(x) <= 1").unwrap();
        let rep = check_feasibility(&pb, &[("x", -1.0)].into_iter().collect(), 1e-6);
        assert!(!rep.feasible);
        assert!(rep.diagnostic.is_some());
    }
}
