use super::{Assignment, Expr, ExprError};

/// An expression with variables resolved to slice indices and every other
/// symbol folded to its value. Used on hot paths (solver, gradients).
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    root: Node,
    n: usize,
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Var(usize),
    Add(Vec<Node>),
    Mul(Vec<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
    Neg(Box<Node>),
    Log(Box<Node>),
    Log2(Box<Node>),
    Exp(Box<Node>),
    Abs(Box<Node>),
    Sqrt(Box<Node>),
}

type Dual = (f64, Option<Vec<f64>>);

impl Compiled {
    /// Symbols named in `vars` become slice positions; all other variables
    /// and parameters must be bound in `env`.
    pub fn compile(expr: &Expr, vars: &[String], env: &Assignment) -> Result<Self, ExprError> {
        Ok(Compiled {
            root: lower(expr, vars, env)?,
            n: vars.len(),
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, ExprError> {
        debug_assert_eq!(x.len(), self.n);
        Ok(eval(&self.root, x, 0)?.0)
    }

    /// Writes the gradient into `grad` and returns the value.
    pub fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, ExprError> {
        debug_assert_eq!(x.len(), self.n);
        let (v, g) = eval(&self.root, x, self.n)?;
        match g {
            Some(g) => grad.copy_from_slice(&g),
            None => grad.iter_mut().for_each(|v| *v = 0.0),
        }
        Ok(v)
    }
}

fn lower(e: &Expr, vars: &[String], env: &Assignment) -> Result<Node, ExprError> {
    let lower1 = |c: &Expr| lower(c, vars, env).map(Box::new);
    Ok(match e {
        Expr::Const(c) => Node::Const(*c),
        Expr::Var(name) | Expr::Param(name) => match vars.iter().position(|v| v == name) {
            Some(i) => Node::Var(i),
            None => Node::Const(
                env.get(name)
                    .ok_or_else(|| ExprError::UnboundSymbol(name.clone()))?,
            ),
        },
        Expr::Add(xs) => Node::Add(
            xs.iter()
                .map(|c| lower(c, vars, env))
                .collect::<Result<_, _>>()?,
        ),
        Expr::Mul(xs) => Node::Mul(
            xs.iter()
                .map(|c| lower(c, vars, env))
                .collect::<Result<_, _>>()?,
        ),
        Expr::Div(a, b) => Node::Div(lower1(a)?, lower1(b)?),
        Expr::Pow(b, p) => Node::Pow(lower1(b)?, *p),
        Expr::Neg(c) => Node::Neg(lower1(c)?),
        Expr::Log(c) => Node::Log(lower1(c)?),
        Expr::Log2(c) => Node::Log2(lower1(c)?),
        Expr::Exp(c) => Node::Exp(lower1(c)?),
        Expr::Abs(c) => Node::Abs(lower1(c)?),
        Expr::Sqrt(c) => Node::Sqrt(lower1(c)?),
    })
}

fn finite(v: f64, what: &str) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Domain(format!("{what} is not finite")))
    }
}

fn scale(g: Option<Vec<f64>>, k: f64) -> Option<Vec<f64>> {
    g.map(|mut g| {
        g.iter_mut().for_each(|v| *v *= k);
        g
    })
}

fn axpy(acc: &mut Option<Vec<f64>>, k: f64, g: &Option<Vec<f64>>) {
    if let Some(g) = g {
        let a = acc.get_or_insert_with(|| vec![0.0; g.len()]);
        for (a, g) in a.iter_mut().zip(g) {
            *a += k * g;
        }
    }
}

/// Forward-mode evaluation. `n == 0` skips derivative bookkeeping.
fn eval(node: &Node, x: &[f64], n: usize) -> Result<Dual, ExprError> {
    let want = n > 0;
    Ok(match node {
        Node::Const(c) => (*c, None),
        Node::Var(i) => {
            let g = want.then(|| {
                let mut g = vec![0.0; n];
                g[*i] = 1.0;
                g
            });
            (x[*i], g)
        }
        Node::Add(xs) => {
            let mut v = 0.0;
            let mut g = None;
            for c in xs {
                let (cv, cg) = eval(c, x, n)?;
                v += cv;
                axpy(&mut g, 1.0, &cg);
            }
            (finite(v, "sum")?, g)
        }
        Node::Mul(xs) => {
            let parts = xs
                .iter()
                .map(|c| eval(c, x, n))
                .collect::<Result<Vec<_>, _>>()?;
            let v: f64 = parts.iter().map(|p| p.0).product();
            let mut g = None;
            if want {
                // prefix/suffix products avoid dividing by a zero factor
                let k = parts.len();
                let mut suffix = vec![1.0; k + 1];
                for i in (0..k).rev() {
                    suffix[i] = suffix[i + 1] * parts[i].0;
                }
                let mut prefix = 1.0;
                for (i, p) in parts.iter().enumerate() {
                    axpy(&mut g, prefix * suffix[i + 1], &p.1);
                    prefix *= p.0;
                }
            }
            (finite(v, "product")?, g)
        }
        Node::Div(a, b) => {
            let (av, ag) = eval(a, x, n)?;
            let (bv, bg) = eval(b, x, n)?;
            if bv == 0.0 {
                return Err(ExprError::Domain("division by zero".into()));
            }
            let v = finite(av / bv, "quotient")?;
            let mut g = None;
            axpy(&mut g, 1.0 / bv, &ag);
            axpy(&mut g, -av / (bv * bv), &bg);
            (v, g)
        }
        Node::Pow(b, p) => {
            let (bv, bg) = eval(b, x, n)?;
            let p = *p;
            if p == 0.0 {
                return Ok((1.0, None));
            }
            if bv < 0.0 && p.fract() != 0.0 {
                return Err(ExprError::Domain(format!(
                    "negative base {bv} raised to non-integer power {p}"
                )));
            }
            if bv == 0.0 && p < 0.0 {
                return Err(ExprError::Domain("zero raised to a negative power".into()));
            }
            let v = finite(pow(bv, p), "power")?;
            let g = match bg {
                Some(bg) if want => {
                    if bv == 0.0 && p < 1.0 {
                        return Err(ExprError::NonDifferentiable(format!("power {p} at base 0")));
                    }
                    let d = if p == 1.0 { 1.0 } else { p * pow(bv, p - 1.0) };
                    scale(Some(bg), finite(d, "power derivative")?)
                }
                _ => None,
            };
            (v, g)
        }
        Node::Neg(c) => {
            let (v, g) = eval(c, x, n)?;
            (-v, scale(g, -1.0))
        }
        Node::Log(c) | Node::Log2(c) => {
            let (v, g) = eval(c, x, n)?;
            if v <= 0.0 {
                return Err(ExprError::Domain(format!(
                    "logarithm of non-positive value {v}"
                )));
            }
            if matches!(node, Node::Log(_)) {
                (v.ln(), scale(g, 1.0 / v))
            } else {
                (v.log2(), scale(g, 1.0 / (v * std::f64::consts::LN_2)))
            }
        }
        Node::Exp(c) => {
            let (v, g) = eval(c, x, n)?;
            let e = finite(v.exp(), "exponential")?;
            (e, scale(g, e))
        }
        Node::Abs(c) => {
            let (v, g) = eval(c, x, n)?;
            let s = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            (v.abs(), scale(g, s))
        }
        Node::Sqrt(c) => {
            let (v, g) = eval(c, x, n)?;
            if v < 0.0 {
                return Err(ExprError::Domain(format!(
                    "square root of negative value {v}"
                )));
            }
            let r = v.sqrt();
            let g = match g {
                Some(g) if want => {
                    if r == 0.0 {
                        return Err(ExprError::NonDifferentiable("square root at 0".into()));
                    }
                    scale(Some(g), 0.5 / r)
                }
                _ => None,
            };
            (r, g)
        }
    })
}

fn pow(b: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
        b.powi(p as i32)
    } else {
        b.powf(p)
    }
}
