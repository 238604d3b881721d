//! Printing in modeling-language syntax. The output re-parses to a
//! structurally equal tree.

use std::fmt::{self, Formatter};

use super::Expr;

pub(super) fn write_expr(f: &mut Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Const(c) => write!(f, "{c}"),
        Expr::Var(n) | Expr::Param(n) => f.write_str(n),
        Expr::Add(xs) => {
            for (i, t) in xs.iter().enumerate() {
                match (i, t) {
                    (0, _) => write_add_term(f, t)?,
                    (_, Expr::Neg(inner)) => {
                        f.write_str(" - ")?;
                        write_add_term(f, inner)?;
                    }
                    _ => {
                        f.write_str(" + ")?;
                        write_add_term(f, t)?;
                    }
                }
            }
            Ok(())
        }
        Expr::Mul(xs) => {
            for (i, t) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(" * ")?;
                }
                let wrap = match t {
                    Expr::Add(_) | Expr::Mul(_) => true,
                    Expr::Div(..) => i > 0,
                    _ => false,
                };
                write_wrapped(f, t, wrap)?;
            }
            Ok(())
        }
        Expr::Div(n, d) => {
            write_wrapped(f, n, matches!(**n, Expr::Add(_)))?;
            f.write_str(" / ")?;
            let wrap = matches!(**d, Expr::Add(_) | Expr::Mul(_) | Expr::Div(..));
            write_wrapped(f, d, wrap)
        }
        Expr::Pow(b, p) => {
            let wrap =
                !is_atom(b) || matches!(**b, Expr::Const(c) if c < 0.0 || c.is_sign_negative());
            write_wrapped(f, b, wrap)?;
            write!(f, " ^ {p}")
        }
        Expr::Neg(c) => {
            f.write_str("-")?;
            let wrap = match &**c {
                Expr::Const(_) => true,
                Expr::Var(_) | Expr::Param(_) | Expr::Neg(_) | Expr::Pow(..) => false,
                other => !is_call(other),
            };
            write_wrapped(f, c, wrap)
        }
        Expr::Log(c) => write_call(f, "log", c),
        Expr::Log2(c) => write_call(f, "log2", c),
        Expr::Exp(c) => write_call(f, "exp", c),
        Expr::Abs(c) => write_call(f, "abs", c),
        Expr::Sqrt(c) => write_call(f, "sqrt", c),
    }
}

fn write_add_term(f: &mut Formatter<'_>, t: &Expr) -> fmt::Result {
    write_wrapped(f, t, matches!(t, Expr::Add(_)))
}

fn write_wrapped(f: &mut Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        f.write_str("(")?;
        write_expr(f, e)?;
        f.write_str(")")
    } else {
        write_expr(f, e)
    }
}

fn write_call(f: &mut Formatter<'_>, name: &str, arg: &Expr) -> fmt::Result {
    write!(f, "{name}(")?;
    write_expr(f, arg)?;
    f.write_str(")")
}

fn is_call(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Log(_) | Expr::Log2(_) | Expr::Exp(_) | Expr::Abs(_) | Expr::Sqrt(_)
    )
}

fn is_atom(e: &Expr) -> bool {
    matches!(e, Expr::Const(_) | Expr::Var(_) | Expr::Param(_)) || is_call(e)
}
