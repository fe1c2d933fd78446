use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dcom_core::dcomsim::SimError;
use dcom_core::decomp::DecompError;
use dcom_core::harness::HarnessError;
use dcom_core::lanczos::LanczosError;
use dcom_core::linalg::LinalgError;
use dcom_core::outlier::OutlierError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error("{message}")]
    Core { kind: &'static str, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Config { .. } => "config",
            CliError::Input(_) => "input",
            CliError::Core { kind, .. } => kind,
        }
    }

    /// Prints `{"error": {"kind", "message"}}` on stderr.
    pub fn report(&self) -> ExitCode {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Io { path, .. } | CliError::Config { path, .. } = self {
            body["path"] = json!(path.display().to_string());
        }
        eprintln!("{}", json!({ "error": body }));
        ExitCode::from(if matches!(self, CliError::Usage(_)) { 2 } else { 1 })
    }
}

macro_rules! core_error {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Core { kind: $kind, message: e.to_string() }
            }
        })*
    };
}

core_error! {
    LinalgError => "matrix",
    LanczosError => "lanczos",
    DecompError => "decomposition",
    OutlierError => "outlier",
    SimError => "simulation",
    HarnessError => "harness",
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core {
            kind: "csv",
            message: e.to_string(),
        }
    }
}
