//! Error classification and the repair registry.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Ablations;
use crate::gateway::{ModelGateway, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    ParseError,
    UnboundSymbol,
    ConvexificationFailed,
    SolverNumericalFailure,
    SolverInfeasible,
    GatewayError,
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Formulate,
    Convexify,
    Solve,
    Feasibility,
    Ecl,
    Fdc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub class: ErrorClass,
    pub stage: Stage,
    /// Attempt number, 0 for the first solve.
    pub iteration: usize,
    pub message: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RepairAction {
    BindDefault {
        name: String,
        value: f64,
    },
    EscalateSca,
    ShrinkStep {
        factor: f64,
    },
    Restore,
    #[serde(rename = "none")]
    NoRepair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairSource {
    Registry,
    Gateway,
    Exhausted,
}

/// What the registry needs to know about the run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RepairContext {
    pub escalated: bool,
    pub ablations: Ablations,
}

/// Value bound to a parameter declared without one.
pub const DEFAULT_BINDING: f64 = 1.0;
pub const SHRINK_FACTOR: f64 = 0.1;

fn registry(err: &ErrorReport, ctx: &RepairContext) -> Option<RepairAction> {
    match err.class {
        ErrorClass::UnboundSymbol => {
            let name = err.payload.get("symbol")?.as_str()?.to_string();
            Some(RepairAction::BindDefault {
                name,
                value: DEFAULT_BINDING,
            })
        }
        ErrorClass::ConvexificationFailed if !ctx.ablations.disable_convexify && !ctx.escalated => {
            Some(RepairAction::EscalateSca)
        }
        ErrorClass::SolverNumericalFailure => Some(RepairAction::ShrinkStep {
            factor: SHRINK_FACTOR,
        }),
        ErrorClass::SolverInfeasible => Some(RepairAction::Restore),
        _ => None,
    }
}

/// Picks a repair: the registry first, then the gateway's suggestion,
/// else `NoRepair`.
pub fn ecl_repair(
    err: &ErrorReport,
    ctx: &RepairContext,
    gateway: Option<&dyn ModelGateway>,
) -> (RepairAction, RepairSource) {
    if let Some(action) = registry(err, ctx) {
        return (action, RepairSource::Registry);
    }
    let Some(gw) = gateway else {
        return (RepairAction::NoRepair, RepairSource::Exhausted);
    };
    let input = serde_json::to_string_pretty(err).unwrap_or_default();
    let suggestion = gw
        .complete_builtin(TemplateId::RepairQuery, &input)
        .ok()
        .and_then(|reply| serde_json::from_str::<RepairAction>(&reply).ok());
    match suggestion {
        Some(RepairAction::EscalateSca) if ctx.ablations.disable_convexify => {
            (RepairAction::NoRepair, RepairSource::Gateway)
        }
        Some(action) => (action, RepairSource::Gateway),
        None => (RepairAction::NoRepair, RepairSource::Gateway),
    }
}
