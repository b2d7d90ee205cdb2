//! Machine-readable error envelope printed on stderr.

use serde::Serialize;
use zerocast_core::Error as CoreError;

/// Marks an error as a usage/config problem (exit 2) and names the
/// offending fields.
#[derive(Debug)]
pub struct UsageError {
    pub message: String,
    pub fields: Vec<String>,
}

impl UsageError {
    pub fn new(message: impl Into<String>, fields: &[&str]) -> anyhow::Error {
        anyhow::Error::new(UsageError {
            message: message.into(),
            fields: fields.iter().map(|s| s.to_string()).collect(),
        })
    }
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for UsageError {}

#[derive(Serialize)]
pub struct CliError {
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<String>,
}

impl CliError {
    pub fn from_anyhow(err: &anyhow::Error) -> Self {
        if let Some(usage) = err.downcast_ref::<UsageError>() {
            return CliError {
                kind: "usage",
                message: usage.message.clone(),
                fields: usage.fields.clone(),
            };
        }
        if let Some(core) = err.downcast_ref::<CoreError>() {
            let kind = match core {
                CoreError::Config(_) | CoreError::Input(_) => "config",
                _ => "runtime",
            };
            return CliError {
                kind,
                message: format!("{core}"),
                fields: Vec::new(),
            };
        }
        CliError {
            kind: "runtime",
            message: format!("{err:#}"),
            fields: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "usage" | "config" => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}
