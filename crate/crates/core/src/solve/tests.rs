use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::parse_problem;

const POWER: &str = include_str!("../../corpus/power_allocation.ncx");

fn convex(src: &str) -> ConvexProblem {
    ConvexProblem::from_convex(&parse_problem(src).unwrap()).unwrap()
}

fn run(src: &str) -> Solution {
    solve(&convex(src), &Assignment::new(), &SolveOptions::default()).unwrap()
}

fn xs(sol: &Solution, names: &[&str]) -> Vec<f64> {
    let x = sol.x.as_ref().expect("solution has a point");
    names.iter().map(|n| x.get(n).unwrap()).collect()
}

fn list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[test]
fn unconstrained_quadratic() {
    let s = run("var x\nminimize (x - 1)^2");
    assert_eq!(s.status, Status::Optimal);
    assert!((xs(&s, &["x"])[0] - 1.0).abs() <= 1e-6);
    assert!(s.objective.unwrap().abs() <= 1e-6);
}

#[test]
fn power_allocation_case() {
    let started = std::time::Instant::now();
    let s = run(POWER);
    let elapsed = started.elapsed();
    assert_eq!(s.status, Status::Optimal, "{}", s.message);
    assert_eq!(s.backend, BackendId::InternalBarrier);
    assert!(
        (s.objective.unwrap() - 54.8325272595287).abs() <= 1e-3,
        "{:?}",
        s.objective
    );
    for v in xs(&s, &["p_1", "p_2", "p_3", "p_4", "p_5"]) {
        assert!((v - 2.0).abs() <= 1e-4, "{v}");
    }
    assert!(
        elapsed.as_secs_f64() < 1.0 || cfg!(debug_assertions),
        "{elapsed:?}"
    );
}

#[test]
fn equality_centroid_shift() {
    let a = [1.0, 2.0, 3.0];
    let b = 3.0;
    let src = format!(
        "param a = [{}]\nparam b = {b}\nvar x[3]\nminimize sum((x[i] - a[i])^2, i, 1, 3)\nsubject to\n sum(x[i], i, 1, 3) == b",
        list(&a)
    );
    let s = run(&src);
    assert_eq!(s.status, Status::Optimal);
    let shift = (b - a.iter().sum::<f64>()) / 3.0;
    for (got, ai) in xs(&s, &["x_1", "x_2", "x_3"]).iter().zip(a) {
        assert!((got - (ai + shift)).abs() <= 1e-6);
    }
}

/// Euclidean projection onto the probability simplex by sorting.
fn simplex_projection(a: &[f64]) -> Vec<f64> {
    let mut u = a.to_vec();
    u.sort_by(|p, q| q.partial_cmp(p).unwrap());
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        acc += uj;
        let t = (acc - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            theta = t;
        }
    }
    a.iter().map(|v| (v - theta).max(0.0)).collect()
}

struct Case {
    src: String,
    x: Vec<f64>,
    value: f64,
}

fn sq_dist(x: &[f64], a: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(a)
        .zip(w)
        .map(|((x, a), w)| w * (x - a) * (x - a))
        .sum()
}

fn objective_src(n: usize) -> String {
    format!("var x[{n}]\nminimize sum(w[i] * (x[i] - a[i])^2, i, 1, {n})\n")
}

/// Twenty quadratics whose minimizers have closed forms.
fn analytic_suite() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    for k in 0..20 {
        let n = 2 + k % 4;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let head = |w: &[f64]| format!("param a = [{}]\nparam w = [{}]\n", list(&a), list(w));
        let case = match k % 4 {
            0 => {
                // box: clamp
                let lo = rng.gen_range(-1.0..0.0);
                let hi = rng.gen_range(0.1..1.0);
                let w = vec![1.0; n];
                let x: Vec<f64> = a.iter().map(|v| v.clamp(lo, hi)).collect();
                let src = format!("{}var x[{n}] in [{lo}, {hi}]\nminimize sum(w[i] * (x[i] - a[i])^2, i, 1, {n})\n", head(&w));
                Case {
                    value: sq_dist(&x, &a, &w),
                    x,
                    src,
                }
            }
            1 => {
                // probability simplex: sort-based projection
                let w = vec![1.0; n];
                let x = simplex_projection(&a);
                let src = format!(
                    "{}var x[{n}] in [0, inf]\nminimize sum(w[i] * (x[i] - a[i])^2, i, 1, {n})\nsubject to\n sum(x[i], i, 1, {n}) == 1\n",
                    head(&w)
                );
                Case {
                    value: sq_dist(&x, &a, &w),
                    x,
                    src,
                }
            }
            2 => {
                // weighted hyperplane: Lagrange multiplier in closed form
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
                let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let b = rng.gen_range(-1.0..1.0);
                let ca: f64 = c.iter().zip(&a).map(|(c, a)| c * a).sum();
                let lam = (b - ca) / c.iter().zip(&w).map(|(c, w)| c * c / w).sum::<f64>();
                let x: Vec<f64> = a
                    .iter()
                    .zip(&c)
                    .zip(&w)
                    .map(|((a, c), w)| a + lam * c / w)
                    .collect();
                let src = format!(
                    "{}param c = [{}]\n{}subject to\n sum(c[i] * x[i], i, 1, {n}) == {b}\n",
                    head(&w),
                    list(&c),
                    objective_src(n)
                );
                Case {
                    value: sq_dist(&x, &a, &w),
                    x,
                    src,
                }
            }
            _ => {
                // half-space: project when violated
                let w = vec![1.0; n];
                let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let ca: f64 = c.iter().zip(&a).map(|(c, a)| c * a).sum();
                let b = ca - rng.gen_range(-0.5..1.5);
                let cc: f64 = c.iter().map(|v| v * v).sum();
                let t = (ca - b).max(0.0) / cc;
                let x: Vec<f64> = a.iter().zip(&c).map(|(a, c)| a - t * c).collect();
                let src = format!(
                    "{}param c = [{}]\n{}subject to\n sum(c[i] * x[i], i, 1, {n}) <= {b}\n",
                    head(&w),
                    list(&c),
                    objective_src(n)
                );
                Case {
                    value: sq_dist(&x, &a, &w),
                    x,
                    src,
                }
            }
        };
        out.push(case);
    }
    out
}

#[test]
fn analytic_oracle_suite() {
    let suite = analytic_suite();
    assert_eq!(suite.len(), 20);
    for (k, case) in suite.iter().enumerate() {
        let s = run(&case.src);
        assert_eq!(
            s.status,
            Status::Optimal,
            "case {k}: {}\n{}",
            s.message,
            case.src
        );
        let names: Vec<String> = (1..=case.x.len()).map(|i| format!("x_{i}")).collect();
        let got = xs(&s, &names.iter().map(String::as_str).collect::<Vec<_>>());
        let err = got
            .iter()
            .zip(&case.x)
            .map(|(g, e)| (g - e).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-4, "case {k}: x error {err}\n{}", case.src);
        assert!(
            (s.objective.unwrap() - case.value).abs() <= 1e-5,
            "case {k}: value"
        );
        assert!(
            s.residuals.max_ineq <= 1e-6 && s.residuals.max_eq <= 1e-6,
            "case {k}: {:?}",
            s.residuals
        );
    }
}

#[test]
fn affine_fast_path() {
    let pc = convex("var x in [0, inf]\nvar y in [0, inf]\nmaximize 3*x + 5*y\nsubject to\n x <= 4\n 2*y <= 12\n 3*x + 2*y <= 18");
    assert_eq!(select_backend(&pc, None), BackendId::InternalAffine);
    assert_eq!(
        select_backend(&pc, Some(ScriptBackend::Cvxpy)),
        BackendId::Script(ScriptBackend::Cvxpy)
    );
    let s = solve(&pc, &Assignment::new(), &SolveOptions::default()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_relative_eq!(s.objective.unwrap(), 36.0, epsilon = 1e-9);
    assert_eq!(
        select_backend(&convex(POWER), None),
        BackendId::InternalBarrier
    );
}

#[test]
fn infeasible_and_unbounded() {
    let s = run("var x\nminimize x^2\nsubject to\n x >= 2\n x <= 1");
    assert_eq!(s.status, Status::Infeasible);
    assert!(s.x.is_none());
    let s = run("var x\nminimize x\nsubject to\n x <= 1");
    assert_eq!(s.status, Status::NumericalFailure);
    let s = run("var x\nminimize exp(x) - 2 * x\nsubject to\n x + 1 == 0\n x - 1 == 0");
    assert_eq!(s.status, Status::Infeasible);
    // the feasible set lies outside the objective's domain
    let s = run("var x\nminimize -log(x)\nsubject to\n x <= -1");
    assert_eq!(s.status, Status::NumericalFailure);
}

#[test]
fn infeasible_start_is_restored() {
    let pc = convex("var x\nvar y\nminimize x^2 + y^2\nsubject to\n x + y >= 4\n x - y <= 1");
    let start: Assignment = [("x", -10.0), ("y", -10.0)].into_iter().collect();
    let s = solve(&pc, &start, &SolveOptions::default()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    let v = xs(&s, &["x", "y"]);
    assert!((v[0] - 2.0).abs() < 1e-5 && (v[1] - 2.0).abs() < 1e-5);
}

#[test]
fn degenerate_interior_is_relaxed() {
    // x <= 1 and x >= 1 leave no strict interior
    let s = run("var x\nminimize (x - 3)^2\nsubject to\n x <= 1\n 1 - x <= 0");
    assert!(s.status.has_point());
    assert!((xs(&s, &["x"])[0] - 1.0).abs() <= 1e-5);
    assert!(s.residuals.max_ineq <= 1e-6);
}

#[test]
fn direction_symmetry() {
    let a = run("var x in [0, 4]\nvar y in [0, 4]\nmaximize log(1 + x) + sqrt(y) - x^2 / 4\nsubject to\n x + y <= 3");
    let b = run("var x in [0, 4]\nvar y in [0, 4]\nminimize -(log(1 + x) + sqrt(y) - x^2 / 4)\nsubject to\n x + y <= 3");
    assert_eq!(a.status, Status::Optimal);
    assert_eq!(a.x, b.x);
    assert_eq!(a.objective.unwrap(), -b.objective.unwrap());
}

#[test]
fn deterministic() {
    let opts = SolveOptions {
        seed: 7,
        ..SolveOptions::default()
    };
    let pc = convex(POWER);
    let a = solve(&pc, &Assignment::new(), &opts).unwrap();
    let b = solve(&pc, &Assignment::new(), &opts).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert!(a.x.unwrap().max_abs_diff(&b.x.unwrap()) <= 1e-12);
}

#[test]
fn unbound_parameter_is_an_error() {
    let pc = convex("param c\nvar x\nminimize (x - c)^2");
    assert!(matches!(
        solve(&pc, &Assignment::new(), &SolveOptions::default()),
        Err(SolveError::Expr(ExprError::UnboundSymbol(_)))
    ));
    let bad = SolveOptions {
        beta: 1.5,
        ..SolveOptions::default()
    };
    assert_eq!(
        solve(&convex("var x\nminimize x^2"), &Assignment::new(), &bad),
        Err(SolveError::InvalidOptions)
    );
}

#[test]
fn sca_already_convex() {
    let pb = parse_problem(POWER).unwrap();
    let out = sca_solve(
        &pb,
        &Assignment::new(),
        &Policy::default(),
        &SolveOptions::default(),
    )
    .unwrap();
    assert_eq!(out.trace.len(), 1);
    let direct = run(POWER);
    assert_eq!(out.solution.x, direct.x);
    assert_eq!(out.solution.objective, direct.objective);
}

fn grid_min(
    f: impl Fn(&[f64]) -> f64,
    lo: f64,
    hi: f64,
    dims: usize,
    steps: usize,
) -> (Vec<f64>, f64) {
    let mut best = (vec![], f64::INFINITY);
    let total = (steps + 1).pow(dims as u32);
    for k in 0..total {
        let mut rem = k;
        let p: Vec<f64> = (0..dims)
            .map(|_| {
                let i = rem % (steps + 1);
                rem /= steps + 1;
                lo + (hi - lo) * i as f64 / steps as f64
            })
            .collect();
        let v = f(&p);
        if v < best.1 {
            best = (p, v);
        }
    }
    best
}

#[test]
fn sca_bilinear() {
    let pb = parse_problem("var x1 in [1, 2]\nvar x2 in [1, 2]\nminimize x1 * x2").unwrap();
    let start: Assignment = [("x1", 1.5), ("x2", 1.5)].into_iter().collect();
    let out = sca_solve(&pb, &start, &Policy::default(), &SolveOptions::default()).unwrap();
    let (argmin, value) = grid_min(|p| p[0] * p[1], 1.0, 2.0, 2, 100);
    assert_eq!(out.solution.status, Status::Optimal);
    let got = xs(&out.solution, &["x1", "x2"]);
    assert!((got[0] - argmin[0]).abs() <= 1e-6 && (got[1] - argmin[1]).abs() <= 1e-6);
    assert!((out.solution.objective.unwrap() - value).abs() <= 1e-6);
}

#[test]
fn sca_quartic_well() {
    let pb = parse_problem("var x in [-2, 2]\nminimize (x^2 - 1)^2").unwrap();
    let start: Assignment = [("x", 0.5)].into_iter().collect();
    let out = sca_solve(&pb, &start, &Policy::default(), &SolveOptions::default()).unwrap();
    let (_, value) = grid_min(|p| (p[0] * p[0] - 1.0).powi(2), -2.0, 2.0, 1, 40_000);
    let x = xs(&out.solution, &["x"])[0];
    assert!((x * x - 1.0).abs() <= 1e-3, "x = {x}");
    assert!(out.solution.objective.unwrap() - value <= 1e-6);
    assert!(out.trace.len() > 1);
    // accepted steps never increase the true objective
    let accepted: Vec<f64> = out
        .trace
        .iter()
        .filter(|s| s.accepted)
        .filter_map(|s| s.objective)
        .collect();
    assert!(accepted.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn kkt_proxy_holds_for_optimal() {
    for case in analytic_suite().iter().take(8) {
        let s = run(&case.src);
        if s.status == Status::Optimal {
            assert!(s.residuals.max_ineq <= 1e-6 && s.residuals.max_eq <= 1e-6);
        }
    }
}

#[test]
fn restore_reaches_feasible_region() {
    let pb = parse_problem(
        "var x in [-5, 5]\nvar y in [-5, 5]\nminimize x\nsubject to\n x^2 + y^2 <= 1\n x + y == 1",
    )
    .unwrap();
    let start: Assignment = [("x", 4.0), ("y", -4.0)].into_iter().collect();
    let x = restore(&pb, &start, &SolveOptions::default()).unwrap();
    let r = residuals(&pb, &x).unwrap();
    assert!(r.max_ineq <= 1e-6 && r.max_eq <= 1e-6, "{r:?}");
}
