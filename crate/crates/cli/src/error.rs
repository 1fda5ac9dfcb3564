use std::fmt;
use std::path::Path;

/// Failure of a command, carrying its exit code: 2 for configuration
/// problems, 3 for numerical failures, 1 for I/O.
#[derive(Debug)]
pub enum CliError {
    Config { location: String, message: String },
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn config(path: &Path, line: Option<usize>, message: String) -> Self {
        let location = match line {
            Some(l) => format!("{}:{l}", path.display()),
            None => path.display().to_string(),
        };
        CliError::Config { location, message }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { location, message } => write!(f, "{location}: {message}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
