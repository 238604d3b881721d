use super::Expr;

/// Constant folding plus removal of additive zeros and multiplicative ones.
///
/// The result evaluates to the same value as the input wherever the input is
/// defined. Folds that could hide a domain error (for instance `0 * log(x)`)
/// are not performed.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => e.clone(),
        Expr::Add(xs) => {
            let mut constant = 0.0;
            let mut saw_constant = false;
            let mut terms = Vec::new();
            for t in xs.iter().map(simplify) {
                match t {
                    Expr::Const(c) => {
                        constant += c;
                        saw_constant = true;
                    }
                    Expr::Add(inner) => {
                        for u in inner {
                            match u {
                                Expr::Const(c) => {
                                    constant += c;
                                    saw_constant = true;
                                }
                                u => terms.push(u),
                            }
                        }
                    }
                    t => terms.push(t),
                }
            }
            if saw_constant && constant != 0.0 {
                terms.insert(0, Expr::Const(constant));
            }
            Expr::sum(terms)
        }
        Expr::Mul(xs) => {
            let mut constant = 1.0;
            let mut factors = Vec::new();
            for t in xs.iter().map(simplify) {
                match t {
                    Expr::Const(c) => constant *= c,
                    Expr::Mul(inner) => {
                        for u in inner {
                            match u {
                                Expr::Const(c) => constant *= c,
                                u => factors.push(u),
                            }
                        }
                    }
                    t => factors.push(t),
                }
            }
            if constant == 0.0 && factors.iter().all(is_total) {
                return Expr::Const(0.0);
            }
            if !constant.is_finite() {
                // leave overflowing constant products for evaluation to report
                return Expr::Mul(xs.iter().map(simplify).collect());
            }
            if constant != 1.0 || factors.is_empty() {
                factors.insert(0, Expr::Const(constant));
            }
            Expr::product(factors)
        }
        Expr::Div(n, d) => {
            let n = simplify(n);
            let d = simplify(d);
            match (&n, &d) {
                (Expr::Const(a), Expr::Const(b)) if *b != 0.0 && (a / b).is_finite() => {
                    Expr::Const(a / b)
                }
                (_, Expr::Const(b)) if *b == 1.0 => n,
                (Expr::Const(a), Expr::Const(b)) if *a == 0.0 && *b != 0.0 => Expr::Const(0.0),
                _ => Expr::Div(Box::new(n), Box::new(d)),
            }
        }
        Expr::Pow(b, p) => {
            let b = simplify(b);
            if *p == 1.0 {
                return b;
            }
            if *p == 0.0 && is_total(&b) {
                return Expr::Const(1.0);
            }
            match b {
                Expr::Const(c) => fold(Expr::Pow(Box::new(Expr::Const(c)), *p)),
                b => Expr::Pow(Box::new(b), *p),
            }
        }
        Expr::Neg(c) => match simplify(c) {
            Expr::Const(v) => Expr::Const(-v),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        },
        Expr::Log(c) => unary(e, simplify(c)),
        Expr::Log2(c) => unary(e, simplify(c)),
        Expr::Exp(c) => unary(e, simplify(c)),
        Expr::Abs(c) => unary(e, simplify(c)),
        Expr::Sqrt(c) => unary(e, simplify(c)),
    }
}

fn unary(original: &Expr, child: Expr) -> Expr {
    let rebuilt = original.map_children(|_| child.clone());
    if matches!(child, Expr::Const(_)) {
        fold(rebuilt)
    } else {
        rebuilt
    }
}

/// Evaluate a variable-free node; keep it unevaluated if that fails.
fn fold(e: Expr) -> Expr {
    match super::Compiled::compile(&e, &[], &Default::default()).and_then(|c| c.value(&[])) {
        Ok(v) => Expr::Const(v),
        Err(_) => e,
    }
}

/// Nodes whose evaluation can never raise a domain error for finite inputs
/// of moderate size.
fn is_total(e: &Expr) -> bool {
    match e {
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => true,
        Expr::Add(xs) | Expr::Mul(xs) => xs.iter().all(is_total),
        Expr::Neg(c) | Expr::Abs(c) => is_total(c),
        Expr::Pow(b, p) => *p >= 0.0 && p.fract() == 0.0 && is_total(b),
        Expr::Div(..) | Expr::Log(_) | Expr::Log2(_) | Expr::Exp(_) | Expr::Sqrt(_) => false,
    }
}
