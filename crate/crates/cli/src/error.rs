use lbvn::io::IoError;
use lbvn::montecarlo::McError;
use lbvn::scenario::SimError;
use lbvn::transport::TransportError;
use thiserror::Error;

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    MonteCarlo(McError),
    #[error("{0}")]
    Usage(String),
    /// Some items of a batch failed and were reported; the rest succeeded.
    #[error("{failed} of {total} {what} failed")]
    Partial {
        failed: usize,
        total: usize,
        what: &'static str,
        code: u8,
    },
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Sim(e.into())
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::Transport(t) => CliError::Sim(t.into()),
            other => CliError::MonteCarlo(other),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        CliError::Sim(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Sim(IoError::Write(e).into())
    }
}

pub fn sim_code(e: &SimError) -> u8 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERICAL
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Sim(e) => sim_code(e),
            CliError::MonteCarlo(McError::Timeouts { .. }) => EXIT_NUMERICAL,
            CliError::MonteCarlo(_) => EXIT_INPUT,
            CliError::Usage(_) => EXIT_INPUT,
            CliError::Partial { code, .. } => *code,
        }
    }
}

impl From<lbvn::network::NetworkError> for CliError {
    fn from(e: lbvn::network::NetworkError) -> Self {
        CliError::Sim(e.into())
    }
}

impl From<lbvn::hydraulics::HydraulicsError> for CliError {
    fn from(e: lbvn::hydraulics::HydraulicsError) -> Self {
        CliError::Sim(e.into())
    }
}

impl From<lbvn::receiver::ReceiverError> for CliError {
    fn from(e: lbvn::receiver::ReceiverError) -> Self {
        CliError::Sim(e.into())
    }
}
