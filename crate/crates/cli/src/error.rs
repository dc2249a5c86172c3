use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("{suite}: {source}")]
    Module {
        suite: String,
        #[source]
        source: wentzell_core::Error,
    },

    /// Any module error inside `verify`.
    #[error("suite {suite}: {source}")]
    Suite {
        suite: String,
        #[source]
        source: wentzell_core::Error,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn module(suite: &str, source: wentzell_core::Error) -> Self {
        CliError::Module { suite: suite.into(), source }
    }

    /// 1 for configuration problems, 2 for a non-elliptic field, 3 for any other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Module { source: wentzell_core::Error::NotElliptic { .. }, .. } => 2,
            CliError::Module { .. } | CliError::Suite { .. } | CliError::Output { .. } => 3,
        }
    }
}
