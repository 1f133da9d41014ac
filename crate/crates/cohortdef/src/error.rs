use std::fmt;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] cohortdef_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("{context}: {source}")]
    Json {
        context: String,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error("calibration curve is degenerate (chosen point {alpha_f},{alpha_d})")]
    Degenerate { alpha_f: u32, alpha_d: u32 },
}

/// Coarse error classes surfaced as CLI exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Input,
    EmptyPattern,
    CalibrationDegenerate,
    NotFound,
    Internal,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Input => "input",
            Category::EmptyPattern => "empty-pattern",
            Category::CalibrationDegenerate => "calibration-degenerate",
            Category::NotFound => "not-found",
            Category::Internal => "internal",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Input | Category::NotFound => 2,
            Category::EmptyPattern => 3,
            Category::CalibrationDegenerate => 4,
            Category::Internal => 1,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        use cohortdef_core::Error as C;
        match self {
            Error::Core(C::EmptyPattern(_)) => Category::EmptyPattern,
            Error::Core(C::UnknownPatient(_)) => Category::NotFound,
            Error::Core(_) | Error::Io { .. } | Error::Csv { .. } | Error::Json { .. } | Error::Input(_) => {
                Category::Input
            }
            Error::Degenerate { .. } => Category::CalibrationDegenerate,
        }
    }
}
