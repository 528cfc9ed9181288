use std::fmt;
use std::path::Path;

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid input: exit 2.
    Config(String),
    /// A built-in invariant check failed: exit 3.
    Invariant(String),
    /// Anything else (fit failures, output I/O): exit 1.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Prefixes the message with the offending file.
    pub fn in_file(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Config(m) => CliError::Config(format!("{p}: {m}")),
            CliError::Invariant(m) => CliError::Invariant(format!("{p}: {m}")),
            CliError::Other(m) => CliError::Other(format!("{p}: {m}")),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Other(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<moneykin::Error> for CliError {
    fn from(e: moneykin::Error) -> Self {
        use moneykin::Error as E;
        match e {
            E::Config(m) | E::Usage(m) => CliError::Config(m),
            E::Invariant(m) => CliError::Invariant(m),
            e @ (E::Parse { .. } | E::Json(_) | E::Csv(_) | E::StateExplosion { .. }) => {
                CliError::Config(e.to_string())
            }
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Reads an input file; a missing or unreadable input is a usage error.
pub fn read_input(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}
