use std::fmt;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files.
    Input(String),
    /// The simulator broke one of its own invariants.
    Invariant(String),
}

impl CliError {
    /// The more severe of the two, preferring `self` on a tie.
    pub fn max_severity(self, other: CliError) -> CliError {
        match (&self, &other) {
            (CliError::Invariant(_), _) | (_, CliError::Input(_)) => self,
            _ => other,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(1),
            CliError::Invariant(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => f.write_str(m),
            CliError::Invariant(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<palsim::Error> for CliError {
    fn from(e: palsim::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Invariant(e.to_string())
        }
    }
}
