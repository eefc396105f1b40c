use std::path::PathBuf;

use serde_json::{json, Value};
use thiserror::Error;
use turnpike_core::problem::Violation;

/// Exit code for config, I/O and parameter errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for solver failures (blow-up, Newton failure).
pub const EXIT_SOLVER: i32 = 3;
/// Exit code for optimizer divergence.
pub const EXIT_OPTIMIZER: i32 = 4;
/// Exit code when `check` finds a failing oracle.
pub const EXIT_CHECK: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {}: {source}", path.display())]
    ConfigRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    ConfigParse(String),
    #[error("config violates problem constraints: {}", join(.0))]
    Violations(Vec<Violation>),
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] turnpike_core::Error),
    #[error("{failed} of {total} oracle checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use turnpike_core::Error as E;
        match self {
            Self::ConfigRead { .. }
            | Self::ConfigParse(_)
            | Self::Violations(_)
            | Self::Output { .. } => EXIT_CONFIG,
            Self::ChecksFailed { .. } => EXIT_CHECK,
            Self::Core(e) => match e {
                E::Divergence { .. } => EXIT_OPTIMIZER,
                E::BlowUp { .. }
                | E::NewtonFailure { .. }
                | E::NotApplicable(_)
                | E::FitWindow { .. } => EXIT_SOLVER,
                E::DimensionMismatch { .. } | E::InvalidParameter(_) | E::InvalidSpec(_) => {
                    EXIT_CONFIG
                }
            },
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        use turnpike_core::Error as E;
        let (kind, details) = match self {
            Self::ConfigRead { path, .. } => ("config_read", json!({ "path": path })),
            Self::ConfigParse(_) => ("config_parse", Value::Null),
            Self::Violations(v) => ("config_violations", json!({ "violations": v })),
            Self::Output { path, .. } => ("output", json!({ "path": path })),
            Self::ChecksFailed { failed, total } => {
                ("checks_failed", json!({ "failed": failed, "total": total }))
            }
            Self::Core(e) => match e {
                E::BlowUp { step, suggested_dt } => (
                    "blow_up",
                    json!({ "step": step, "suggested_dt": suggested_dt }),
                ),
                E::NewtonFailure {
                    iterations,
                    residual,
                } => (
                    "newton_failure",
                    json!({ "iterations": iterations, "residual": residual }),
                ),
                E::Divergence {
                    iteration,
                    stepsize,
                } => (
                    "divergence",
                    json!({ "iteration": iteration, "stepsize": stepsize, "hint": "use a smaller optimizer.stepsize" }),
                ),
                E::InvalidSpec(v) => ("config_violations", json!({ "violations": v })),
                E::InvalidParameter(_) | E::DimensionMismatch { .. } => {
                    ("invalid_parameter", Value::Null)
                }
                E::NotApplicable(_) => ("not_applicable", Value::Null),
                E::FitWindow { samples } => ("fit_window", json!({ "samples": samples })),
            },
        };
        json!({
            "error": kind,
            "message": self.to_string(),
            "exit_code": self.exit_code(),
            "details": details,
        })
    }
}
