use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a model formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration violates a structural invariant (counts, ranges).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Signal-processing power of an RRU leaves nothing for forwarding.
    #[error("infeasible power budget at RRU {rru}: P_sp = {p_sp} W >= P_RRU = {p_rru} W")]
    InfeasibleBudget { rru: usize, p_sp: f64, p_rru: f64 },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed realization dump: {0}")]
    Dump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
