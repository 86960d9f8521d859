use std::fmt;

use thiserror::Error;

/// Every problem found in one config file, each prefixed with its location when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violations(pub Vec<String>);

impl Violations {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config rejected ({count} problem(s)):\n{0}", count = .0.len())]
    Config(Violations),
    #[error("{0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) | CliError::Input(_) | CliError::Write { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(Violations(vec![msg.into()]))
    }
}

impl From<curvflow::Error> for CliError {
    fn from(e: curvflow::Error) -> Self {
        use curvflow::Error as E;
        match e {
            E::StiffnessFailure { .. }
            | E::BlowDown { .. }
            | E::Quadrature { .. }
            | E::Divergent(_)
            | E::RegimeExit { .. }
            | E::UnresolvedScale { .. } => CliError::Numerical(e.to_string()),
            E::Config(m) => CliError::config(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
