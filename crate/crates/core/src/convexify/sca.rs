use crate::curvature::{curvature_of, signed_terms, Curvature, Domain};
use crate::expr::{Assignment, Expr, ExprError};

/// First-order surrogate `f(x0) + grad f(x0) . (x - x0)`.
///
/// `at` must bind every free variable of `expr` and every parameter it
/// uses. Parameters are folded into the coefficients. Evaluating the
/// result at `x0` gives `f(x0)` exactly, since every slope term is
/// multiplied by a literal zero there.
pub fn sca_linearize(expr: &Expr, at: &Assignment) -> Result<Expr, ExprError> {
    let vars: Vec<String> = expr.free_vars().into_iter().collect();
    let value = expr.evaluate(at)?;
    let grad = expr.gradient(at, &vars)?;
    let mut terms = vec![Expr::Const(value)];
    for (v, g) in grad.iter() {
        if g == 0.0 {
            continue;
        }
        let x0 = at
            .get(v)
            .ok_or_else(|| ExprError::UnboundSymbol(v.to_string()))?;
        let shift = if x0 == 0.0 {
            Expr::var(v)
        } else {
            Expr::var(v) - Expr::Const(x0)
        };
        terms.push(Expr::Const(g) * shift);
    }
    Ok(if terms.len() == 1 {
        terms.pop().unwrap()
    } else {
        Expr::Add(terms)
    })
}

/// Linearizes only the additive terms whose (signed) curvature fails
/// `keep`, leaving certified terms untouched.
pub fn partial_linearize(
    expr: &Expr,
    keep: impl Fn(Curvature) -> bool,
    at: &Assignment,
    domain: &Domain,
) -> Result<Expr, ExprError> {
    let mut terms = Vec::new();
    signed_terms(expr, 1.0, &mut terms);
    let mut out = Vec::with_capacity(terms.len());
    for (sign, t) in terms {
        let c = curvature_of(t, domain);
        let oriented = if sign > 0.0 { c } else { c.negate() };
        let piece = if keep(oriented) {
            t.clone()
        } else {
            sca_linearize(t, at)?
        };
        out.push(if sign > 0.0 { piece } else { -piece });
    }
    Ok(if out.len() == 1 {
        out.pop().unwrap()
    } else {
        Expr::Add(out)
    })
}
