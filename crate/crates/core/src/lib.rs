//! Detect non-convex structure in optimization problems, convexify them,
//! solve the convex surrogate, and repair failed or infeasible runs.

pub mod convexify;
pub mod curvature;
pub mod eval;
pub mod expr;
pub mod gateway;
pub mod model;
pub mod pipeline;
pub mod solve;

pub use expr::{Assignment, Expr, ExprError, GradientVector};
pub use model::{parse_problem, Direction, Problem, VarDecl, VarKind};
