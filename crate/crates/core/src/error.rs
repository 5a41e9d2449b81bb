use thiserror::Error;

/// Simulator-wide error type.
///
/// `Config` and `InvalidInput` map to CLI exit code 2, `Contract` to exit
/// code 3. A contract violation means a module invariant was broken by its
/// inputs and always names the offending module.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("contract violation in `{module}`: {detail}")]
    Contract { module: &'static str, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SimError {
    pub fn contract(module: &'static str, detail: impl Into<String>) -> Self {
        SimError::Contract {
            module,
            detail: detail.into(),
        }
    }

    /// Process exit code for the CLI surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::InvalidInput(_) => 2,
            SimError::Contract { .. } => 3,
            SimError::Io(_) | SimError::Json(_) => 2,
        }
    }
}
