use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("ill-conditioned system (condition number {0:e})")]
    IllConditioned(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("pilot length {tau_p} is shorter than the number of users {users}")]
    PilotsTooShort { tau_p: usize, users: usize },
    #[error("no noise subspace: {rx_antennas} receive antennas for {sources} sources")]
    NoNoiseSubspace { rx_antennas: usize, sources: usize },
    #[error("malformed container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
