use thiserror::Error;

use super::{
    parse_json, parse_problem, validate_consistency, ConsistencyReport, Direction, Problem,
};
use crate::gateway::{fenced_block, GatewayError, ModelGateway, TemplateId};

#[derive(Debug, Clone)]
pub struct Extraction {
    pub problem: Problem,
    pub report: ConsistencyReport,
    pub rounds: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Error)]
pub enum ExtractionError {
    #[error("empty problem description")]
    EmptyDescription,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no consistent formulation after {rounds} round(s); last problem: {last_error}")]
    Failed {
        rounds: usize,
        last_error: String,
        last_report: Option<Box<ConsistencyReport>>,
    },
}

/// Finds `[Optimization Flag: 1]` (maximize) or `[Optimization Flag: 0]`
/// (minimize); the last marker wins.
pub fn parse_optimization_flag(text: &str) -> Option<Direction> {
    let marker = "[Optimization Flag:";
    let mut found = None;
    let mut rest = text;
    while let Some(i) = rest.find(marker) {
        let after = &rest[i + marker.len()..];
        if let Some(end) = after.find(']') {
            match after[..end].trim() {
                "1" => found = Some(Direction::Maximize),
                "0" => found = Some(Direction::Minimize),
                _ => {}
            }
        }
        rest = after;
    }
    found
}

fn parse_payload(block: &str) -> Result<Problem, String> {
    let body = block.trim();
    let parsed = if body.starts_with('{') {
        parse_json(body.as_bytes())
    } else {
        parse_problem(body)
    };
    parsed.map_err(|e| e.to_string())
}

/// Asks the gateway for a formulation of `desc` until one parses and
/// passes the consistency checks, for at most `max_rounds` rounds. Later
/// rounds tell the model why the previous reply was rejected.
///
/// Replies that break the reply contract count as failed rounds; transport
/// errors and fixture misses end the extraction.
pub fn extract_from_nl(
    desc: &str,
    gateway: &dyn ModelGateway,
    max_rounds: usize,
) -> Result<Extraction, ExtractionError> {
    if desc.trim().is_empty() {
        return Err(ExtractionError::EmptyDescription);
    }
    let mut feedback: Option<String> = None;
    let mut last_report = None;
    let mut last_error = String::from("no rounds attempted");
    for round in 1..=max_rounds {
        let input = match &feedback {
            None => desc.to_string(),
            Some(why) => format!("{desc}\n\nThe previous formulation was rejected: {why}"),
        };
        let reply = match gateway.complete_builtin(TemplateId::MathQuery, &input) {
            Ok(r) => r,
            Err(e @ GatewayError::ContractViolation { .. }) => {
                last_error = e.to_string();
                feedback = Some("the reply had no fenced formulation block".into());
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let block = fenced_block(&reply).unwrap_or_default();
        let mut problem = match parse_payload(block) {
            Ok(p) => p,
            Err(e) => {
                last_error = e.clone();
                feedback = Some(e);
                continue;
            }
        };
        let mut diagnostics = Vec::new();
        match parse_optimization_flag(&reply) {
            Some(d) => problem.direction = d,
            None => {
                diagnostics.push(format!(
                    "no optimization flag in reply; defaulting to minimize (formulation said {})",
                    problem.direction.as_str()
                ));
                problem.direction = Direction::Minimize;
            }
        }
        let report = validate_consistency(&problem, Some(desc), Some(gateway));
        if report.consistent() {
            return Ok(Extraction {
                problem,
                report,
                rounds: round,
                diagnostics,
            });
        }
        last_error = report.diagnostics().join("; ");
        feedback = Some(last_error.clone());
        last_report = Some(Box::new(report));
    }
    Err(ExtractionError::Failed {
        rounds: max_rounds,
        last_error,
        last_report,
    })
}
