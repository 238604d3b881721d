use ncx_core::convexify::{rearrange_ratio, relax_integrality, sca_linearize};
use ncx_core::curvature::Domain;
use ncx_core::model::{emit_dsl, emit_json, parse_json};
use ncx_core::pipeline::{check_feasibility, run, Ablations, Input, PipelineConfig};
use ncx_core::{parse_problem, Assignment, Expr};
use proptest::prelude::*;

/// Expressions over `x`, `y` that are strictly positive for `x, y > 0`.
fn positive_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::var("x")),
        Just(Expr::var("y")),
        (0.5..3.0f64).prop_map(Expr::Const),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(vec![a, b])),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(vec![a, b])),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (
                inner.clone(),
                prop::sample::select(vec![-1.0, 0.5, 2.0, 3.0])
            )
                .prop_map(|(a, p)| Expr::Pow(Box::new(a), p)),
            inner.clone().prop_map(|a| Expr::Sqrt(Box::new(a))),
            inner
                .clone()
                .prop_map(|a| Expr::Exp(Box::new(Expr::Mul(vec![Expr::Const(-0.2), a])))),
        ]
    })
}

/// Positive expressions plus logs and negations of them.
fn smooth_expr() -> impl Strategy<Value = Expr> {
    prop_oneof![
        positive_expr(),
        positive_expr().prop_map(|e| Expr::Log(Box::new(e))),
        (positive_expr(), positive_expr()).prop_map(|(a, b)| a - b),
    ]
}

fn at(x: f64, y: f64) -> Assignment {
    [("x".to_string(), x), ("y".to_string(), y)]
        .into_iter()
        .collect()
}

fn central(e: &Expr, x: f64, y: f64, wrt_x: bool) -> f64 {
    let h = 1e-4;
    let f = |d: f64| {
        let p = if wrt_x { at(x + d, y) } else { at(x, y + d) };
        e.evaluate(&p).unwrap()
    };
    let d1 = (f(h) - f(-h)) / (2.0 * h);
    let d2 = (f(h / 2.0) - f(-h / 2.0)) / h;
    (4.0 * d2 - d1) / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gradient_matches_finite_differences(e in smooth_expr(), x in 0.6..2.0f64, y in 0.6..2.0f64) {
        let v = e.evaluate(&at(x, y)).unwrap();
        prop_assume!(v.is_finite() && v.abs() < 1e4);
        let g = e.gradient(&at(x, y), &["x", "y"]).unwrap();
        for (name, wrt_x) in [("x", true), ("y", false)] {
            let sym = g.get(name).unwrap_or(0.0);
            let fd = central(&e, x, y, wrt_x);
            prop_assert!((sym - fd).abs() <= 1e-5 * sym.abs().max(1.0), "{e}: {sym} vs {fd}");
        }
    }

    #[test]
    fn linearization_is_tangent(e in smooth_expr(), x in 0.6..2.0f64, y in 0.6..2.0f64) {
        let p = at(x, y);
        let v = e.evaluate(&p).unwrap();
        prop_assume!(v.is_finite() && v.abs() < 1e6);
        let s = sca_linearize(&e, &p).unwrap();
        prop_assert!((s.evaluate(&p).unwrap() - v).abs() <= 1e-12 * v.abs().max(1.0));
        let (ge, gs) = (e.gradient(&p, &["x", "y"]).unwrap(), s.gradient(&p, &["x", "y"]).unwrap());
        for n in ["x", "y"] {
            let (a, b) = (ge.get(n).unwrap_or(0.0), gs.get(n).unwrap_or(0.0));
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn ratio_rearrangement_preserves_the_feasible_set(
        a in 0.1..3.0f64, c in 0.05..2.0f64, s in 0.01..1.0f64, gamma in 0.1..4.0f64,
        x in 0.0..5.0f64, y in 0.0..5.0f64,
    ) {
        // gamma - a x / (c y + s) <= 0
        let den = Expr::Const(c) * Expr::var("y") + Expr::Const(s);
        let g = Expr::Const(gamma) - Expr::Const(a) * Expr::var("x") / den;
        let d = Domain::new().with_var("x", 0.0, 5.0).with_var("y", 0.0, 5.0);
        let r = rearrange_ratio(&g, &d).unwrap();
        let (gv, rv) = (g.evaluate(&at(x, y)).unwrap(), r.evaluate(&at(x, y)).unwrap());
        // r = den * g with den > 0
        prop_assert!((rv - (c * y + s) * gv).abs() <= 1e-9 * rv.abs().max(1.0));
        if gv.abs() > 1e-9 {
            prop_assert_eq!(gv <= 0.0, rv <= 0.0);
        }
    }

    #[test]
    fn relaxation_contains_integer_points(
        w in prop::collection::vec(-3.0..3.0f64, 3), cap in -2.0..4.0f64, bits in 0u8..8,
    ) {
        let src = format!(
            "var b[3] binary\nminimize b[1] + b[2] + b[3]\nsubject to\n {} * b[1] + {} * b[2] + {} * b[3] <= {}",
            w[0], w[1], w[2], cap
        );
        let pb = parse_problem(&src).unwrap();
        let relaxed = relax_integrality(&pb);
        let x: Assignment = pb
            .var_names()
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, f64::from((bits >> i) & 1)))
            .collect();
        if check_feasibility(&pb, &x, 1e-9).feasible {
            prop_assert!(check_feasibility(&relaxed, &x, 1e-9).feasible);
        }
    }

    #[test]
    fn printed_problems_parse_back(e in smooth_expr(), lo in 0.1..1.0f64, cap in 1.0..50.0f64, maximize in any::<bool>()) {
        let src = format!(
            "var x in [{lo}, 4]\nvar y in [{lo}, 4]\n{} {e}\nsubject to\n x + y <= {cap}",
            if maximize { "maximize" } else { "minimize" }
        );
        let pb = parse_problem(&src).unwrap();
        prop_assert_eq!(&parse_problem(&emit_dsl(&pb)).unwrap(), &pb);
        prop_assert_eq!(&parse_json(&emit_json(&pb)).unwrap(), &pb);
    }

    #[test]
    fn parser_never_panics(s in "\\PC{0,80}", bytes in prop::collection::vec(any::<u8>(), 0..80)) {
        let _ = parse_problem(&s);
        let _ = parse_json(&bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn looser_tolerance_keeps_success(a in 1.5..60.0f64, lo_eps in -10i32..-3, widen in 1i32..4) {
        let src = format!("var x in [1, 9]\nminimize x\nsubject to\n x ^ 2 == {a}");
        let cfg = |eps: f64| PipelineConfig {
            eps,
            ablations: Ablations { disable_fdc: true, ..Ablations::default() },
            ..PipelineConfig::default()
        };
        let tight = run(Input::Source(src.clone()), &cfg(10f64.powi(lo_eps)));
        let loose = run(Input::Source(src), &cfg(10f64.powi(lo_eps + widen)));
        prop_assert!(!tight.success_flag || loose.success_flag);
        prop_assert!(!loose.success_flag || loose.execute_flag);
    }
}
