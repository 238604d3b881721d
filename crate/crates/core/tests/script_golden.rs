use ncx_core::convexify::{convexify_problem, Policy};
use ncx_core::parse_problem;
use ncx_core::solve::{emit_script, ScriptBackend, ScriptError};
use ncx_core::Assignment;

const POWER: &str = include_str!("../corpus/power_allocation.ncx");

fn power_script(backend: ScriptBackend) -> Result<String, ScriptError> {
    let pb = parse_problem(POWER).unwrap();
    let pc = convexify_problem(&pb, &Assignment::new(), &Policy::default()).unwrap();
    emit_script(&pc, backend)
}

#[test]
fn scipy_matches_golden() {
    let text = power_script(ScriptBackend::Scipy).unwrap();
    assert_eq!(text, include_str!("fixtures/power_allocation.scipy.py"));
    assert!(text.contains("def objective(x):"));
    assert_eq!(text.matches("def constraint_").count(), 2);
}

#[test]
fn cvxpy_matches_golden() {
    let text = power_script(ScriptBackend::Cvxpy).unwrap();
    assert_eq!(text, include_str!("fixtures/power_allocation.cvxpy.py"));
}

#[test]
fn gurobi_has_no_log2() {
    assert!(matches!(
        power_script(ScriptBackend::Gurobi),
        Err(ScriptError::UnsupportedAtom { node, .. }) if node == "log2"
    ));
}

#[test]
fn text_is_lf_only() {
    for b in [ScriptBackend::Scipy, ScriptBackend::Cvxpy] {
        assert!(!power_script(b).unwrap().contains('\r'));
    }
}
