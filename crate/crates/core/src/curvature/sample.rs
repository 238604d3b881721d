use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expr::{Assignment, Compiled, Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Verdict {
    NoViolation,
    /// `f(lambda x + (1 - lambda) y)` exceeded the chord between `f(x)` and `f(y)`.
    ViolationAt {
        x: BTreeMap<String, f64>,
        y: BTreeMap<String, f64>,
        lambda: f64,
    },
}

impl Verdict {
    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::ViolationAt { .. })
    }
}

/// Empirical convexity test on a box. Draws `samples` random pairs and
/// mixing weights, and reports the first pair where `f` lies above its
/// chord by more than `1e-9 * max(1, |f|)`. To test concavity, pass `-f`.
///
/// Every free variable of `expr` must have finite bounds in `bounds`;
/// parameters are read from `env`. Domain errors from evaluation are
/// returned as is.
pub fn sample_convexity_check(
    expr: &Expr,
    bounds: &BTreeMap<String, (f64, f64)>,
    env: &Assignment,
    samples: usize,
    seed: u64,
) -> Result<Verdict, ExprError> {
    let names: Vec<String> = bounds.keys().cloned().collect();
    let boxes: Vec<(f64, f64)> = bounds.values().copied().collect();
    for (n, (lo, hi)) in names.iter().zip(&boxes) {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ExprError::Domain(format!(
                "sampling box for `{n}` is [{lo}, {hi}]"
            )));
        }
    }
    let f = Compiled::compile(expr, &names, env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        boxes
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
            .collect()
    };
    for _ in 0..samples {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let lambda: f64 = rng.gen_range(f64::EPSILON..1.0);
        let z: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        let (fx, fy, fz) = (f.value(&x)?, f.value(&y)?, f.value(&z)?);
        let chord = lambda * fx + (1.0 - lambda) * fy;
        let tol = 1e-9 * fx.abs().max(fy.abs()).max(fz.abs()).max(1.0);
        if fz > chord + tol {
            let named = |v: Vec<f64>| names.iter().cloned().zip(v).collect();
            return Ok(Verdict::ViolationAt {
                x: named(x),
                y: named(y),
                lambda,
            });
        }
    }
    Ok(Verdict::NoViolation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(pairs: &[(&str, f64, f64)]) -> BTreeMap<String, (f64, f64)> {
        pairs
            .iter()
            .map(|(n, lo, hi)| (n.to_string(), (*lo, *hi)))
            .collect()
    }

    #[test]
    fn square_has_no_violation() {
        let e = Expr::var("x").powi(2);
        let v = sample_convexity_check(&e, &bx(&[("x", -5.0, 5.0)]), &Assignment::new(), 1000, 7)
            .unwrap();
        assert_eq!(v, Verdict::NoViolation);
    }

    #[test]
    fn bilinear_has_violation() {
        let e = Expr::var("x1") * Expr::var("x2");
        let b = bx(&[("x1", -1.0, 1.0), ("x2", -1.0, 1.0)]);
        let v = sample_convexity_check(&e, &b, &Assignment::new(), 1000, 42).unwrap();
        let Verdict::ViolationAt { x, y, lambda } = v else {
            panic!("expected a violation");
        };
        // recheck the witness independently
        let at = |p: &BTreeMap<String, f64>| p["x1"] * p["x2"];
        let mid: BTreeMap<String, f64> = x
            .keys()
            .map(|k| (k.clone(), lambda * x[k] + (1.0 - lambda) * y[k]))
            .collect();
        assert!(at(&mid) > lambda * at(&x) + (1.0 - lambda) * at(&y));
    }

    #[test]
    fn rate_term_is_concave_by_sampling() {
        let e = -(Expr::constant(1.0) + Expr::var("p") / Expr::constant(0.001)).log2();
        let v = sample_convexity_check(&e, &bx(&[("p", 0.0, 10.0)]), &Assignment::new(), 1000, 1)
            .unwrap();
        assert_eq!(v, Verdict::NoViolation);
    }

    #[test]
    fn unbounded_box_is_an_error() {
        let e = Expr::var("x");
        let b = bx(&[("x", 0.0, f64::INFINITY)]);
        assert!(sample_convexity_check(&e, &b, &Assignment::new(), 10, 0).is_err());
        let missing = sample_convexity_check(
            &Expr::var("y"),
            &bx(&[("x", 0.0, 1.0)]),
            &Assignment::new(),
            10,
            0,
        );
        assert!(matches!(missing, Err(ExprError::UnboundSymbol(_))));
    }

    #[test]
    fn deterministic_in_seed() {
        let e = Expr::var("a") * Expr::var("b") - Expr::var("a").powi(2);
        let b = bx(&[("a", -2.0, 2.0), ("b", -2.0, 2.0)]);
        let env = Assignment::new();
        assert_eq!(
            sample_convexity_check(&e, &b, &env, 200, 9).unwrap(),
            sample_convexity_check(&e, &b, &env, 200, 9).unwrap()
        );
    }
}
