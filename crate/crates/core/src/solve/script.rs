//! Python script text for external solvers. Nothing here is executed.

use std::fmt::Write;

use super::ScriptBackend;
use crate::convexify::{default_reference_point, ConvexProblem};
use crate::expr::Expr;
use crate::model::{Direction, Problem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScriptError {
    #[error("unsupported backend `{0}`")]
    UnsupportedBackend(String),
    #[error("{backend} cannot express `{node}`")]
    UnsupportedAtom { backend: String, node: String },
    #[error("parameter `{0}` has no value")]
    UnboundParam(String),
}

const ADD: u8 = 1;
const MUL: u8 = 2;
const UNARY: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

struct Printer<'a> {
    backend: ScriptBackend,
    vars: &'a [String],
}

fn number(c: f64) -> String {
    if c.is_infinite() {
        return if c > 0.0 {
            "float('inf')".into()
        } else {
            "-float('inf')".into()
        };
    }
    if c.is_nan() {
        return "float('nan')".into();
    }
    format!("{c}")
}

fn wrap((s, p): (String, u8), min: u8) -> String {
    if p < min {
        format!("({s})")
    } else {
        s
    }
}

impl Printer<'_> {
    fn unsupported(&self, node: &str) -> ScriptError {
        ScriptError::UnsupportedAtom {
            backend: self.backend.as_str().to_string(),
            node: node.to_string(),
        }
    }

    fn call(&self, f: &str, u: &Expr) -> Result<(String, u8), ScriptError> {
        let inner = self.print(u)?.0;
        let text = match (self.backend, f) {
            (ScriptBackend::Gurobi, _) => return Err(self.unsupported(f)),
            (ScriptBackend::Scipy, _) => format!("np.{f}({inner})"),
            (ScriptBackend::Cvxpy, "log2") => {
                return Ok((format!("cp.log({inner})/np.log(2)"), MUL))
            }
            (ScriptBackend::Cvxpy, _) => format!("cp.{f}({inner})"),
        };
        Ok((text, ATOM))
    }

    fn print(&self, e: &Expr) -> Result<(String, u8), ScriptError> {
        Ok(match e {
            Expr::Const(c) if *c < 0.0 => (number(*c), UNARY),
            Expr::Const(c) => (number(*c), ATOM),
            Expr::Var(v) => match self.vars.iter().position(|n| n == v) {
                Some(i) => (format!("x[{i}]"), ATOM),
                None => (v.clone(), ATOM),
            },
            Expr::Param(p) => (p.clone(), ATOM),
            Expr::Add(terms) => {
                let mut s = String::new();
                for (i, t) in terms.iter().enumerate() {
                    let (negated, body) = match t {
                        Expr::Neg(u) => (true, self.print(u)?),
                        Expr::Const(c) if *c < 0.0 => (true, (number(-c), ATOM)),
                        _ => (false, self.print(t)?),
                    };
                    match (i, negated) {
                        (0, false) => s.push_str(&wrap(body, ADD)),
                        (0, true) => {
                            s.push('-');
                            s.push_str(&wrap(body, MUL));
                        }
                        (_, false) => {
                            s.push_str(" + ");
                            s.push_str(&wrap(body, ADD));
                        }
                        (_, true) => {
                            s.push_str(" - ");
                            s.push_str(&wrap(body, MUL));
                        }
                    }
                }
                (s, ADD)
            }
            Expr::Mul(fs) => {
                let parts: Vec<String> = fs
                    .iter()
                    .map(|f| Ok(wrap(self.print(f)?, MUL)))
                    .collect::<Result<_, _>>()?;
                (parts.join("*"), MUL)
            }
            Expr::Div(a, b) => {
                if self.backend == ScriptBackend::Gurobi && !b.free_vars().is_empty() {
                    return Err(self.unsupported("division by a variable"));
                }
                (
                    format!(
                        "{}/{}",
                        wrap(self.print(a)?, MUL),
                        wrap(self.print(b)?, UNARY)
                    ),
                    MUL,
                )
            }
            Expr::Pow(u, p) => {
                if self.backend == ScriptBackend::Gurobi && !(*p == 1.0 || *p == 2.0) {
                    return Err(self.unsupported("pow"));
                }
                let exp = if *p < 0.0 {
                    format!("({})", number(*p))
                } else {
                    number(*p)
                };
                (format!("{}**{exp}", wrap(self.print(u)?, ATOM)), POW)
            }
            Expr::Neg(u) => (format!("-{}", wrap(self.print(u)?, UNARY)), UNARY),
            Expr::Log(u) => self.call("log", u)?,
            Expr::Log2(u) => self.call("log2", u)?,
            Expr::Exp(u) => self.call("exp", u)?,
            Expr::Abs(u) => self.call("abs", u)?,
            Expr::Sqrt(u) => self.call("sqrt", u)?,
        })
    }

    fn text(&self, e: &Expr) -> Result<String, ScriptError> {
        Ok(self.print(e)?.0)
    }
}

/// Display form with index suffixes removed, so that `p_1 - 3` and
/// `p_2 - 3` share a shape.
fn shape(e: &Expr) -> String {
    let s = e.to_string();
    let mut out = String::with_capacity(s.len());
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let after_ident = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
        if chars[i] == '_' && after_ident && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()) {
            i += 1;
            while chars.get(i).is_some_and(|c| c.is_ascii_digit()) {
                i += 1;
            }
            continue;
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

fn negate(e: &Expr) -> Expr {
    match e {
        Expr::Add(terms) => Expr::Add(terms.iter().map(negate).collect()),
        Expr::Neg(u) => (**u).clone(),
        Expr::Const(c) => Expr::Const(-c),
        other => -other.clone(),
    }
}

/// Constraints in scipy's `fun(x) >= 0` / `fun(x) == 0` convention,
/// consecutive same-shape rows grouped into one callback.
fn groups(pb: &Problem) -> Vec<(&'static str, Vec<Expr>)> {
    let rows = pb
        .ineq
        .iter()
        .map(|g| ("ineq", negate(g)))
        .chain(pb.eq.iter().map(|h| ("eq", h.clone())));
    let mut out: Vec<(&'static str, String, Vec<Expr>)> = Vec::new();
    for (kind, e) in rows {
        let key = shape(&e);
        match out.last_mut() {
            Some((k, s, items)) if *k == kind && *s == key => items.push(e),
            _ => out.push((kind, key, vec![e])),
        }
    }
    out.into_iter().map(|(k, _, items)| (k, items)).collect()
}

fn params_block(pb: &Problem) -> Result<String, ScriptError> {
    let used = pb.referenced_params();
    let mut s = String::new();
    for name in &used {
        match pb.params.get(name).copied().flatten() {
            Some(v) => writeln!(s, "{name} = {}", number(v)).unwrap(),
            None => return Err(ScriptError::UnboundParam(name.clone())),
        }
    }
    Ok(s)
}

fn bound(v: f64) -> String {
    if v.is_finite() {
        number(v)
    } else {
        "None".into()
    }
}

/// Renders `pc` as a script for an external Python backend.
pub fn emit_script(pc: &ConvexProblem, backend: ScriptBackend) -> Result<String, ScriptError> {
    let pb = pc.problem();
    let vars = pb.var_names();
    let p = Printer {
        backend,
        vars: &vars,
    };
    let x0 = default_reference_point(pb);
    let mut s = String::new();
    match backend {
        ScriptBackend::Scipy => {
            s.push_str("import numpy as np\nfrom scipy.optimize import minimize\n\n");
            let params = params_block(pb)?;
            if !params.is_empty() {
                writeln!(s, "# Parameters\n{params}").unwrap();
            }
            s.push_str("# Variables\n");
            for (i, v) in vars.iter().enumerate() {
                writeln!(s, "# x[{i}] = {v}").unwrap();
            }
            s.push_str("\n# Objective\ndef objective(x):\n");
            match pb.direction {
                Direction::Minimize => {
                    writeln!(s, "    return {}", p.text(&pb.objective)?).unwrap()
                }
                Direction::Maximize => {
                    writeln!(s, "    return -({})", p.text(&pb.objective)?).unwrap()
                }
            }
            let groups = groups(pb);
            if !groups.is_empty() {
                s.push_str("\n# Constraints\n");
                for (i, (_, items)) in groups.iter().enumerate() {
                    writeln!(s, "def constraint_{}(x):", i + 1).unwrap();
                    if items.len() == 1 {
                        writeln!(s, "    return {}", p.text(&items[0])?).unwrap();
                    } else {
                        s.push_str("    return np.array([\n");
                        for e in items {
                            writeln!(s, "        {},", p.text(e)?).unwrap();
                        }
                        s.push_str("    ])\n");
                    }
                    s.push('\n');
                }
            } else {
                s.push('\n');
            }
            let start: Vec<String> = vars
                .iter()
                .map(|v| number(x0.get(v).unwrap_or(0.0)))
                .collect();
            writeln!(
                s,
                "# Initial guess\nx0 = np.array([{}])\n",
                start.join(", ")
            )
            .unwrap();
            let bounds: Vec<String> = pb
                .variables
                .iter()
                .map(|v| format!("({}, {})", bound(v.lb), bound(v.ub)))
                .collect();
            writeln!(s, "# Bounds\nbounds = [{}]\n", bounds.join(", ")).unwrap();
            if groups.is_empty() {
                s.push_str("result = minimize(objective, x0, bounds=bounds)\n\n");
            } else {
                s.push_str("constraints = [\n");
                for (i, (kind, _)) in groups.iter().enumerate() {
                    writeln!(s, "    {{'type': '{kind}', 'fun': constraint_{}}},", i + 1).unwrap();
                }
                s.push_str("]\n\nresult = minimize(objective, x0, bounds=bounds, constraints=constraints)\n\n");
            }
            let value = match pb.direction {
                Direction::Minimize => "result.fun",
                Direction::Maximize => "-result.fun",
            };
            writeln!(s, "print(\"Objective value:\", {value})").unwrap();
            s.push_str("print(\"Solution:\", result.x)\n");
        }
        ScriptBackend::Cvxpy => {
            s.push_str("import cvxpy as cp\nimport numpy as np\n\n");
            let params = params_block(pb)?;
            if !params.is_empty() {
                writeln!(s, "# Parameters\n{params}").unwrap();
            }
            writeln!(s, "# Variables: {}", vars.join(", ")).unwrap();
            writeln!(s, "x = cp.Variable({})\n", vars.len()).unwrap();
            let sense = match pb.direction {
                Direction::Minimize => "Minimize",
                Direction::Maximize => "Maximize",
            };
            writeln!(s, "objective = cp.{sense}({})", p.text(&pb.objective)?).unwrap();
            let mut rows = Vec::new();
            for g in &pb.ineq {
                rows.push(format!("{} <= 0", p.text(g)?));
            }
            for h in &pb.eq {
                rows.push(format!("{} == 0", p.text(h)?));
            }
            for (i, v) in pb.variables.iter().enumerate() {
                if v.lb.is_finite() {
                    rows.push(format!("x[{i}] >= {}", number(v.lb)));
                }
                if v.ub.is_finite() {
                    rows.push(format!("x[{i}] <= {}", number(v.ub)));
                }
            }
            if rows.is_empty() {
                s.push_str("\nprob = cp.Problem(objective)\n");
            } else {
                s.push_str("\nconstraints = [\n");
                for r in rows {
                    writeln!(s, "    {r},").unwrap();
                }
                s.push_str("]\n\nprob = cp.Problem(objective, constraints)\n");
            }
            s.push_str("prob.solve()\n\nprint(\"Objective value:\", prob.value)\nprint(\"Solution:\", x.value)\n");
        }
        ScriptBackend::Gurobi => {
            s.push_str("import gurobipy as gp\nfrom gurobipy import GRB\n\n");
            let params = params_block(pb)?;
            if !params.is_empty() {
                writeln!(s, "# Parameters\n{params}").unwrap();
            }
            s.push_str("m = gp.Model()\nx = [\n");
            for v in &pb.variables {
                let lb = if v.lb.is_finite() {
                    number(v.lb)
                } else {
                    "-GRB.INFINITY".into()
                };
                let ub = if v.ub.is_finite() {
                    number(v.ub)
                } else {
                    "GRB.INFINITY".into()
                };
                writeln!(s, "    m.addVar(lb={lb}, ub={ub}, name=\"{}\"),", v.name).unwrap();
            }
            s.push_str("]\n\n");
            let sense = match pb.direction {
                Direction::Minimize => "GRB.MINIMIZE",
                Direction::Maximize => "GRB.MAXIMIZE",
            };
            writeln!(s, "m.setObjective({}, {sense})", p.text(&pb.objective)?).unwrap();
            let has_rows = !pb.ineq.is_empty() || !pb.eq.is_empty();
            for g in &pb.ineq {
                writeln!(s, "m.addConstr({} <= 0)", p.text(g)?).unwrap();
            }
            for h in &pb.eq {
                writeln!(s, "m.addConstr({} == 0)", p.text(h)?).unwrap();
            }
            if has_rows {
                s.push('\n');
            }
            s.push_str("m.optimize()\n\nprint(\"Objective value:\", m.ObjVal)\nprint(\"Solution:\", [v.X for v in x])\n");
        }
    }
    Ok(s)
}
