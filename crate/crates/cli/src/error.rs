use std::path::PathBuf;

use eoc_core::EocError;
use serde_json::{json, Value};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(EocError),
    Io { path: Option<PathBuf>, message: String },
    Diverged(String),
}

impl From<EocError> for CliError {
    fn from(e: EocError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn io(path: Option<&std::path::Path>, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.map(|p| p.to_path_buf()),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(EocError::Infeasible { .. }) => EXIT_INFEASIBLE,
            CliError::Diverged(_) => EXIT_DIVERGED,
            _ => EXIT_USAGE,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, message, extra) = match self {
            CliError::Usage(m) => ("usage", m.clone(), Value::Null),
            CliError::Io { path, message } => (
                "io",
                message.clone(),
                json!({ "path": path.as_ref().map(|p| p.display().to_string()) }),
            ),
            CliError::Diverged(m) => ("diverged", m.clone(), Value::Null),
            CliError::Core(e) => {
                let kind = match e {
                    EocError::Infeasible { .. } => "infeasible",
                    EocError::Domain { .. } => "domain",
                    EocError::Evaluation { .. } => "evaluation",
                    EocError::DegenerateSlope(_) => "degenerate-slope",
                    EocError::Precondition(_) => "precondition",
                    EocError::Degenerate(_) => "degenerate",
                    EocError::Config(_) => "config",
                    EocError::Io { .. } | EocError::Csv { .. } => "io",
                };
                let extra = match e {
                    EocError::Infeasible { sb2, .. } => json!({ "sb2": sb2 }),
                    EocError::Io { path, .. } | EocError::Csv { path, .. } => {
                        json!({ "path": path.display().to_string() })
                    }
                    _ => Value::Null,
                };
                (kind, e.to_string(), extra)
            }
        };
        let mut error = json!({ "kind": kind, "message": message });
        if let Value::Object(map) = extra {
            error.as_object_mut().unwrap().extend(map);
        }
        json!({ "schema_version": crate::output::SCHEMA_VERSION, "error": error })
    }
}
