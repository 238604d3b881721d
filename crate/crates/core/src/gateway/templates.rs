use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GatewayError;

pub const PLACEHOLDER: &str = "$input$";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    MathQuery,
    ConvexQuery,
    CodeQuery,
    ExecuteCodeQuery,
    FeasibilityCheckQuery,
    RepairQuery,
    ConsistencyQuery,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::MathQuery,
        TemplateId::ConvexQuery,
        TemplateId::CodeQuery,
        TemplateId::ExecuteCodeQuery,
        TemplateId::FeasibilityCheckQuery,
        TemplateId::RepairQuery,
        TemplateId::ConsistencyQuery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::MathQuery => "math_query",
            TemplateId::ConvexQuery => "convex_query",
            TemplateId::CodeQuery => "code_query",
            TemplateId::ExecuteCodeQuery => "execute_code_query",
            TemplateId::FeasibilityCheckQuery => "feasibility_check_query",
            TemplateId::RepairQuery => "repair_query",
            TemplateId::ConsistencyQuery => "consistency_query",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a reply must look like to be accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contract {
    /// A problem in the modeling language or canonical JSON inside a fenced block.
    Dsl,
    /// A JSON object, bare or fenced.
    Json,
    FreeText,
    /// `0` or `1` after trimming.
    Binary01,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub system: Option<String>,
    user: String,
    pub contract: Contract,
}

/// A template with its placeholder filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub template: TemplateId,
    pub system: Option<String>,
    pub user: String,
    pub warning: Option<String>,
}

impl Rendered {
    /// Fixture key: hex SHA-256 over the system text (if any) and the user text.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        if let Some(s) = &self.system {
            h.update(s.as_bytes());
            h.update([0u8]);
        }
        h.update(self.user.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

const FORMAT_RULES: &str = "\
Write the formulation in the modeling language inside a fenced code block: \
`var` declarations with kinds and bounds, `param` values, one `minimize` or \
`maximize` line, then `subject to` followed by one constraint per line.";

const MATH_QUERY: &str = "\
Based on this optimization problem, construct a complete mathematical formula, including the \
objective function and constraints. Please also provide formulas for some of the other variables \
mentioned in the formula, such as channel condition h, and the values corresponding to these variables.
Please specify whether to maximize or minimize, using the format '[Optimization Flag: 1]' for \
maximize and '[Optimization Flag: 0]' for minimize.
";

const CONVEX_EXAMPLE: &str = "\
Example 1:
Non-convex problem: min_x x^2 - 2x + 1 (Non-convex part: x^2 may not be convex in some intervals)
Convex conversion: min_x (x - 1)^2 (Converted to a convex function by completing the square)

Example 2:
Non-convex problem: min_{x,y} x^2 y + 3xy - 2 (Non-convex part: x^2 y is non-convex)
Convex conversion: (List the specific conversion method and result here)";

const CONVEX_QUERY: &str = "\
Please convert the following non-convex mathematical formula into a convex form:

";

const CODE_QUERY: &str = "\
Please generate Python code to solve the following convex optimization problem.
Use appropriate optimization libraries (e.g., scipy.optimize). Clearly define the objective \
function, constraints (if any), and initial guesses. Provide clear comments in the code to \
explain the key steps.
The convex optimization formula is: ";

const EXECUTE_CODE_QUERY: &str = "\
Execute the code below, which was generated to solve the convex optimization problem. If the \
execution fails, analyze the error message and suggest possible solutions. If the execution is \
successful, extract the optimal solution and the optimal value from the output, and present them \
in a clear format.
The code is: ";

const FEASIBILITY_CHECK_QUERY: &str = "\
Below are the original problem description, the corresponding mathematical formula, and the \
obtained solution of the optimization problem.
Determine whether the solution is within the feasible region. If it is, return 1; if not, return 0.

";

const REPAIR_QUERY: &str = "\
A solver run failed with the error report below. Suggest one repair as a JSON object whose \
\"action\" field is one of \"bind_default\" (with \"name\" and \"value\"), \"shrink_step\" (with \
\"factor\"), \"escalate_sca\", \"restore\" or \"none\".

";

const CONSISTENCY_QUERY: &str = "\
Below are a problem description and a mathematical formulation built from it. Determine whether \
the formulation accurately reflects the description. If it does, return 1; if not, return 0.

";

impl PromptTemplate {
    /// Fails unless `user` contains exactly one placeholder.
    pub fn new(
        id: TemplateId,
        system: Option<String>,
        user: impl Into<String>,
        contract: Contract,
    ) -> Result<Self, GatewayError> {
        let user = user.into();
        let count = user.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(GatewayError::Placeholder {
                template: id,
                count,
            });
        }
        Ok(PromptTemplate {
            id,
            system,
            user,
            contract,
        })
    }

    pub fn builtin(id: TemplateId) -> PromptTemplate {
        let (system, body, contract) = match id {
            TemplateId::MathQuery => (
                None,
                format!("{MATH_QUERY}{FORMAT_RULES}\nInput: "),
                Contract::Dsl,
            ),
            TemplateId::ConvexQuery => (
                Some(CONVEX_EXAMPLE.to_string()),
                format!("{FORMAT_RULES}\n{CONVEX_QUERY}"),
                Contract::Dsl,
            ),
            TemplateId::CodeQuery => (None, CODE_QUERY.to_string(), Contract::FreeText),
            TemplateId::ExecuteCodeQuery => {
                (None, EXECUTE_CODE_QUERY.to_string(), Contract::FreeText)
            }
            TemplateId::FeasibilityCheckQuery => (
                None,
                FEASIBILITY_CHECK_QUERY.to_string(),
                Contract::Binary01,
            ),
            TemplateId::RepairQuery => (None, REPAIR_QUERY.to_string(), Contract::Json),
            TemplateId::ConsistencyQuery => {
                (None, CONSISTENCY_QUERY.to_string(), Contract::Binary01)
            }
        };
        PromptTemplate::new(id, system, format!("{body}{PLACEHOLDER}"), contract)
            .expect("built-in templates carry one placeholder")
    }

    pub fn user_text(&self) -> &str {
        &self.user
    }

    pub fn render(&self, input: &str) -> Rendered {
        Rendered {
            template: self.id,
            system: self.system.clone(),
            user: self.user.replacen(PLACEHOLDER, input, 1),
            warning: input
                .trim()
                .is_empty()
                .then(|| format!("{}: empty input", self.id)),
        }
    }
}

/// Contents of the first fenced code block, without the info string.
pub fn fenced_block(reply: &str) -> Option<&str> {
    let start = reply.find("```")?;
    let after = &reply[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Checks a reply against a contract; binary replies are normalized to
/// `"0"` or `"1"`.
pub fn check_reply(contract: Contract, reply: &str) -> Result<String, GatewayError> {
    let violation = || GatewayError::ContractViolation {
        contract,
        excerpt: reply.chars().take(80).collect(),
    };
    match contract {
        Contract::FreeText => Ok(reply.to_string()),
        Contract::Binary01 => {
            let t = reply
                .trim()
                .trim_matches(|c: char| c == '`' || c == '"' || c == '\'' || c == '.')
                .trim();
            match t {
                "0" | "1" => Ok(t.to_string()),
                _ => Err(violation()),
            }
        }
        Contract::Dsl => match fenced_block(reply) {
            Some(b) if !b.trim().is_empty() => Ok(reply.to_string()),
            _ => Err(violation()),
        },
        Contract::Json => {
            let body = fenced_block(reply).unwrap_or(reply);
            match serde_json::from_str::<serde_json::Value>(body.trim()) {
                Ok(serde_json::Value::Object(_)) => Ok(body.trim().to_string()),
                _ => Err(violation()),
            }
        }
    }
}
