use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{module}: {source}")]
    Core {
        module: &'static str,
        #[source]
        source: sg_tomo::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Tag a core error with the pipeline stage it came from.
    pub fn core(module: &'static str) -> impl FnOnce(sg_tomo::Error) -> CliError {
        move |source| CliError::Core { module, source }
    }

    /// 1 for configuration and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Json(_) => 1,
            CliError::Core { source, .. } if source.is_config() => 1,
            CliError::Core { .. } => 2,
        }
    }
}
