//! Canonical JSON form.
//!
//! Expressions are tagged nodes: `{"op": "add", "args": [...]}`, with
//! `{"op": "const", "value": 1.5}` and `{"op": "var" | "param", "name": ...}`
//! as leaves. A power stores its exponent as a constant second argument.
//! Infinite bounds and missing parameter values are `null`.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::{Direction, ModelError, Problem, VarDecl, VarKind};
use crate::expr::Expr;

fn schema(path: &str, reason: impl Into<String>) -> ModelError {
    ModelError::Schema {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn expr_to_value(e: &Expr) -> Value {
    let node = |op: &str, args: Vec<Value>| json!({"op": op, "args": args});
    match e {
        Expr::Const(c) => json!({"op": "const", "value": c}),
        Expr::Var(n) => json!({"op": "var", "name": n}),
        Expr::Param(n) => json!({"op": "param", "name": n}),
        Expr::Add(xs) => node("add", xs.iter().map(expr_to_value).collect()),
        Expr::Mul(xs) => node("mul", xs.iter().map(expr_to_value).collect()),
        Expr::Div(a, b) => node("div", vec![expr_to_value(a), expr_to_value(b)]),
        Expr::Pow(b, p) => node(
            "pow",
            vec![expr_to_value(b), json!({"op": "const", "value": p})],
        ),
        Expr::Neg(c) => node("neg", vec![expr_to_value(c)]),
        Expr::Log(c) => node("log", vec![expr_to_value(c)]),
        Expr::Log2(c) => node("log2", vec![expr_to_value(c)]),
        Expr::Exp(c) => node("exp", vec![expr_to_value(c)]),
        Expr::Abs(c) => node("abs", vec![expr_to_value(c)]),
        Expr::Sqrt(c) => node("sqrt", vec![expr_to_value(c)]),
    }
}

fn bound_value(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Serialize a problem to its canonical JSON form.
pub fn emit_json(pb: &Problem) -> Vec<u8> {
    let variables: Vec<Value> = pb
        .variables
        .iter()
        .map(|v| {
            json!({
                "name": v.name,
                "kind": v.kind.as_str(),
                "lb": bound_value(v.lb),
                "ub": bound_value(v.ub),
            })
        })
        .collect();
    let params: Map<String, Value> = pb
        .params
        .iter()
        .map(|(k, v)| (k.clone(), v.map_or(Value::Null, |v| json!(v))))
        .collect();
    let doc = json!({
        "name": pb.name,
        "direction": pb.direction.as_str(),
        "variables": variables,
        "parameters": params,
        "objective": expr_to_value(&pb.objective),
        "ineq": pb.ineq.iter().map(expr_to_value).collect::<Vec<_>>(),
        "eq": pb.eq.iter().map(expr_to_value).collect::<Vec<_>>(),
    });
    let mut out = serde_json::to_vec_pretty(&doc).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

const MAX_DEPTH: usize = 200;

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, ModelError> {
    obj.get(key)
        .ok_or_else(|| schema(&format!("{path}/{key}"), "missing field"))
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ModelError> {
    v.as_object()
        .ok_or_else(|| schema(path, "expected an object"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, ModelError> {
    v.as_array()
        .ok_or_else(|| schema(path, "expected an array"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, ModelError> {
    v.as_str().ok_or_else(|| schema(path, "expected a string"))
}

fn as_finite(v: &Value, path: &str) -> Result<f64, ModelError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| schema(path, "expected a finite number"))
}

fn name_of(v: &Value, path: &str) -> Result<String, ModelError> {
    let s = as_str(v, path)?;
    if !super::is_identifier(s) {
        return Err(schema(path, format!("`{s}` is not a valid identifier")));
    }
    Ok(s.to_string())
}

fn value_to_expr(v: &Value, path: &str, depth: usize) -> Result<Expr, ModelError> {
    if depth > MAX_DEPTH {
        return Err(schema(path, "expression nested too deeply"));
    }
    let obj = as_object(v, path)?;
    let op_path = format!("{path}/op");
    let op = as_str(field(obj, "op", path)?, &op_path)?;
    match op {
        "const" => {
            return Ok(Expr::Const(as_finite(
                field(obj, "value", path)?,
                &format!("{path}/value"),
            )?))
        }
        "var" => {
            return Ok(Expr::Var(name_of(
                field(obj, "name", path)?,
                &format!("{path}/name"),
            )?))
        }
        "param" => {
            return Ok(Expr::Param(name_of(
                field(obj, "name", path)?,
                &format!("{path}/name"),
            )?))
        }
        _ => {}
    }
    let args_path = format!("{path}/args");
    let raw_args = as_array(field(obj, "args", path)?, &args_path)?;
    let arity = |n: usize| {
        if raw_args.len() == n {
            Ok(())
        } else {
            Err(schema(
                &args_path,
                format!("`{op}` takes {n} argument(s), got {}", raw_args.len()),
            ))
        }
    };
    match op {
        "add" | "mul" | "div" | "neg" | "log" | "log2" | "exp" | "abs" | "sqrt" => {}
        "pow" => {
            arity(2)?;
            let base = value_to_expr(&raw_args[0], &format!("{args_path}/0"), depth + 1)?;
            let exp_path = format!("{args_path}/1");
            return match value_to_expr(&raw_args[1], &exp_path, depth + 1)? {
                Expr::Const(p) => Ok(base.pow(p)),
                _ => Err(schema(&exp_path, "exponent must be a constant node")),
            };
        }
        other => return Err(schema(&op_path, format!("unknown operator `{other}`"))),
    }
    let args = raw_args
        .iter()
        .enumerate()
        .map(|(i, a)| value_to_expr(a, &format!("{args_path}/{i}"), depth + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let mut it = args.into_iter();
    Ok(match op {
        "add" | "mul" => {
            if raw_args.is_empty() {
                return Err(schema(
                    &args_path,
                    format!("`{op}` takes at least one argument"),
                ));
            }
            let xs: Vec<Expr> = it.collect();
            if op == "add" {
                Expr::Add(xs)
            } else {
                Expr::Mul(xs)
            }
        }
        "div" => {
            arity(2)?;
            let (n, d) = (it.next().unwrap(), it.next().unwrap());
            Expr::checked_div(n, d)
                .ok_or_else(|| schema(&format!("{args_path}/1"), "denominator is the constant 0"))?
        }
        _ => {
            arity(1)?;
            let c = it.next().unwrap();
            match op {
                "neg" => -c,
                "log" => c.log(),
                "log2" => c.log2(),
                "exp" => c.exp(),
                "abs" => c.abs(),
                _ => c.sqrt(),
            }
        }
    })
}

fn bound(v: Option<&Value>, path: &str, default: f64) -> Result<f64, ModelError> {
    match v {
        None | Some(Value::Null) => Ok(default),
        Some(v) => as_finite(v, path),
    }
}

/// Parse the canonical JSON form. Errors carry a JSON-pointer path.
pub fn parse_json(bytes: &[u8]) -> Result<Problem, ModelError> {
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| schema("", format!("invalid JSON: {e}")))?;
    let root = as_object(&doc, "")?;

    let name = name_of(field(root, "name", "")?, "/name")?;
    let direction = match as_str(field(root, "direction", "")?, "/direction")? {
        "minimize" => Direction::Minimize,
        "maximize" => Direction::Maximize,
        other => return Err(schema("/direction", format!("unknown direction `{other}`"))),
    };

    let mut variables = Vec::new();
    for (i, v) in as_array(field(root, "variables", "")?, "/variables")?
        .iter()
        .enumerate()
    {
        let path = format!("/variables/{i}");
        let obj = as_object(v, &path)?;
        let vname = name_of(field(obj, "name", &path)?, &format!("{path}/name"))?;
        let kind_path = format!("{path}/kind");
        let kind: VarKind = as_str(field(obj, "kind", &path)?, &kind_path)?
            .parse()
            .map_err(|e: String| schema(&kind_path, e))?;
        let lb = bound(obj.get("lb"), &format!("{path}/lb"), f64::NEG_INFINITY)?;
        let ub = bound(obj.get("ub"), &format!("{path}/ub"), f64::INFINITY)?;
        let decl = VarDecl::new(vname, kind, lb, ub).map_err(|e| schema(&path, e.to_string()))?;
        variables.push(decl);
    }

    let mut params = BTreeMap::new();
    if let Some(p) = root.get("parameters") {
        for (k, v) in as_object(p, "/parameters")? {
            let path = format!("/parameters/{k}");
            if !super::is_identifier(k) {
                return Err(schema(&path, "not a valid identifier"));
            }
            let value = match v {
                Value::Null => None,
                v => Some(as_finite(v, &path)?),
            };
            params.insert(k.clone(), value);
        }
    }

    let objective = value_to_expr(field(root, "objective", "")?, "/objective", 0)?;
    let list = |key: &str| -> Result<Vec<Expr>, ModelError> {
        match root.get(key) {
            None => Ok(Vec::new()),
            Some(v) => as_array(v, &format!("/{key}"))?
                .iter()
                .enumerate()
                .map(|(i, e)| value_to_expr(e, &format!("/{key}/{i}"), 0))
                .collect(),
        }
    };
    let pb = Problem {
        name,
        direction,
        objective,
        ineq: list("ineq")?,
        eq: list("eq")?,
        variables,
        params,
    };
    pb.validate().map_err(|e| schema("", e.to_string()))?;
    Ok(pb)
}
