//! Browser entry points. Every function takes problem text and returns a
//! JSON string, so the page needs no generated type bindings.

use ncx_core::convexify::{convexify_problem, Policy};
use ncx_core::curvature::{curvature_of, detect_nonconvex, verify_convex, Domain};
use ncx_core::model::emit_dsl;
use ncx_core::pipeline::{run, Input, PipelineConfig};
use ncx_core::solve::{emit_script, ScriptBackend};
use ncx_core::{parse_problem, Problem};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn error(msg: impl ToString) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn parse(src: &str) -> Result<Problem, String> {
    parse_problem(src).map_err(|e| e.to_string())
}

/// Runs the full pipeline with default settings.
#[wasm_bindgen]
pub fn solve(src: &str) -> String {
    let r = run(Input::Source(src.to_string()), &PipelineConfig::default());
    r.to_json_without_timings().to_string()
}

/// Curvature of every function plus the non-convex components.
#[wasm_bindgen]
pub fn analyze(src: &str) -> String {
    let pb = match parse(src) {
        Ok(pb) => pb,
        Err(e) => return error(e),
    };
    let d = Domain::from_problem(&pb);
    let curvature: Vec<Value> = pb
        .functions()
        .map(|(loc, e)| json!({ "location": loc.to_string(), "expr": e.to_string(), "curvature": curvature_of(e, &d).to_string() }))
        .collect();
    json!({
        "problem": pb.name,
        "convex": verify_convex(&pb),
        "curvature": curvature,
        "components": detect_nonconvex(&pb),
    })
    .to_string()
}

/// Convex surrogate in the modeling language, or as a solver script when
/// `backend` is `scipy`, `cvxpy` or `gurobi`.
#[wasm_bindgen]
pub fn transform(src: &str, backend: &str) -> String {
    let pb = match parse(src) {
        Ok(pb) => pb,
        Err(e) => return error(e),
    };
    let pc = match convexify_problem(&pb, &Default::default(), &Policy::default()) {
        Ok(pc) => pc,
        Err(e) => return error(e),
    };
    let text = if backend.is_empty() || backend == "dsl" {
        Ok(emit_dsl(pc.problem()))
    } else {
        backend
            .parse::<ScriptBackend>()
            .and_then(|b| emit_script(&pc, b))
            .map_err(|e| e.to_string())
    };
    match text {
        Ok(t) => json!({ "text": t, "transforms": pc.record() }).to_string(),
        Err(e) => error(e),
    }
}
