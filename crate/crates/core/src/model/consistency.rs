use serde::Serialize;

use super::{emit_dsl, Problem};
use crate::expr::Expr;
use crate::gateway::{ModelGateway, TemplateId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub passed: bool,
    pub skipped: bool,
    pub diagnostics: Vec<String>,
}

impl Criterion {
    fn from_diagnostics(diagnostics: Vec<String>) -> Self {
        Criterion {
            passed: diagnostics.is_empty(),
            skipped: false,
            diagnostics,
        }
    }

    fn skipped(reason: &str) -> Self {
        Criterion {
            passed: true,
            skipped: true,
            diagnostics: vec![format!("skipped: {reason}")],
        }
    }
}

/// The four formulation checks. `consistent` is their conjunction and is
/// only set by [`validate_consistency`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub alignment: Criterion,
    pub completeness: Criterion,
    pub type_correctness: Criterion,
    pub value_accuracy: Criterion,
    consistent: bool,
}

impl ConsistencyReport {
    pub fn new(
        alignment: Criterion,
        completeness: Criterion,
        type_correctness: Criterion,
        value_accuracy: Criterion,
    ) -> Self {
        let consistent = alignment.passed
            && completeness.passed
            && type_correctness.passed
            && value_accuracy.passed;
        ConsistencyReport {
            alignment,
            completeness,
            type_correctness,
            value_accuracy,
            consistent,
        }
    }

    pub fn consistent(&self) -> bool {
        self.consistent
    }

    pub fn diagnostics(&self) -> Vec<String> {
        [
            &self.alignment,
            &self.completeness,
            &self.type_correctness,
            &self.value_accuracy,
        ]
        .iter()
        .flat_map(|c| c.diagnostics.iter().cloned())
        .collect()
    }
}

fn completeness(pb: &Problem) -> Criterion {
    let mut diags = Vec::new();
    let used = pb.referenced_vars();
    for v in &pb.variables {
        if !used.contains(&v.name) {
            diags.push(format!("variable `{}` is declared but never used", v.name));
        }
    }
    for (loc, e) in pb.functions() {
        for v in e.free_vars() {
            if pb.decl(&v).is_none() {
                diags.push(format!("{loc} references undeclared variable `{v}`"));
            }
        }
        for p in e.params() {
            if !pb.params.contains_key(&p) {
                diags.push(format!("{loc} references undeclared parameter `{p}`"));
            }
        }
    }
    Criterion::from_diagnostics(diags)
}

fn type_correctness(pb: &Problem) -> Criterion {
    let discrete: Vec<&str> = pb
        .variables
        .iter()
        .filter(|v| v.kind.is_discrete())
        .map(|v| v.name.as_str())
        .collect();
    let mut diags = Vec::new();
    if !discrete.is_empty() {
        for (loc, e) in pb.functions() {
            e.walk(&mut |n| {
                let (what, arg) = match n {
                    Expr::Log(a) => ("log", a),
                    Expr::Log2(a) => ("log2", a),
                    Expr::Exp(a) => ("exp", a),
                    Expr::Sqrt(a) => ("sqrt", a),
                    Expr::Div(_, d) => ("a denominator", d),
                    _ => return,
                };
                for v in arg.free_vars() {
                    if discrete.contains(&v.as_str()) {
                        diags.push(format!(
                            "{loc}: discrete variable `{v}` appears inside {what}"
                        ));
                    }
                }
            });
        }
    }
    Criterion::from_diagnostics(diags)
}

fn value_accuracy(pb: &Problem) -> Criterion {
    let diags = pb
        .referenced_params()
        .into_iter()
        .filter_map(|p| match pb.params.get(&p) {
            Some(Some(v)) if v.is_finite() => None,
            Some(Some(v)) => Some(format!("parameter `{p}` has non-finite value {v}")),
            _ => Some(format!("parameter `{p}` has no value")),
        })
        .collect();
    Criterion::from_diagnostics(diags)
}

fn alignment(pb: &Problem, desc: Option<&str>, gateway: Option<&dyn ModelGateway>) -> Criterion {
    let (Some(desc), Some(gw)) = (desc, gateway) else {
        return Criterion::skipped("no description or no gateway");
    };
    let input = format!(
        "Problem description:\n{desc}\n\nFormulation:\n{}",
        emit_dsl(pb)
    );
    match gw.complete_builtin(TemplateId::ConsistencyQuery, &input) {
        Ok(r) if r == "1" => Criterion::from_diagnostics(Vec::new()),
        Ok(_) => {
            Criterion::from_diagnostics(vec!["formulation does not match the description".into()])
        }
        Err(e) => Criterion::from_diagnostics(vec![format!("alignment check failed: {e}")]),
    }
}

/// Completeness, type correctness and value accuracy are computed
/// directly; alignment with the description needs both a description and a
/// gateway and is otherwise reported as skipped.
pub fn validate_consistency(
    pb: &Problem,
    desc: Option<&str>,
    gateway: Option<&dyn ModelGateway>,
) -> ConsistencyReport {
    ConsistencyReport::new(
        alignment(pb, desc, gateway),
        completeness(pb),
        type_correctness(pb),
        value_accuracy(pb),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, ScriptedBackend};
    use crate::model::parse_problem;

    const CASE: &str = "param N0 = 0.001\nvar p[5] in [0, 10]\n\
        maximize sum(log2(1 + p[i] / N0), i, 1, 5)\nsubject to\n  sum(p[i], i, 1, 5) <= 10\n";

    #[test]
    fn case_study_is_consistent_with_alignment_skipped() {
        let r = validate_consistency(&parse_problem(CASE).unwrap(), None, None);
        assert!(r.consistent());
        assert!(r.alignment.skipped);
        assert!(!r.completeness.skipped);
    }

    #[test]
    fn unused_variable_fails_completeness() {
        let pb = parse_problem("var x\nvar y\nminimize x ^ 2").unwrap();
        let r = validate_consistency(&pb, None, None);
        assert!(!r.completeness.passed);
        assert!(!r.consistent());
    }

    #[test]
    fn binary_inside_log_fails_type_check() {
        let pb = parse_problem("var b binary\nmaximize log(1 + b)").unwrap();
        let r = validate_consistency(&pb, None, None);
        assert!(!r.type_correctness.passed);
        assert!(!r.consistent());
        let pb = parse_problem("var b binary\nvar x in [1, 2]\nminimize x / (1 + b)").unwrap();
        assert!(
            !validate_consistency(&pb, None, None)
                .type_correctness
                .passed
        );
    }

    #[test]
    fn missing_parameter_value_fails_value_accuracy() {
        let pb = parse_problem("param c\nvar x in [0, 1]\nminimize c * x").unwrap();
        let r = validate_consistency(&pb, None, None);
        assert!(!r.value_accuracy.passed);
        assert!(r.completeness.passed);
    }

    #[test]
    fn alignment_uses_gateway() {
        let pb = parse_problem(CASE).unwrap();
        let yes = Gateway::new(ScriptedBackend::new(["1"]));
        let no = Gateway::new(ScriptedBackend::new(["0"]));
        assert!(validate_consistency(&pb, Some("allocate power"), Some(&yes)).consistent());
        let r = validate_consistency(&pb, Some("allocate power"), Some(&no));
        assert!(!r.alignment.passed && !r.consistent());
    }
}
