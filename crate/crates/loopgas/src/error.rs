use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate edge between variable {var} and check {check}")]
    DuplicateEdge { var: usize, check: usize },
    #[error("edge ({var}, {check}) out of range for n={n}, m={m}")]
    IndexOutOfRange {
        var: usize,
        check: usize,
        n: usize,
        m: usize,
    },
    #[error("inconsistent weights: {0}")]
    InconsistentWeights(String),
    #[error("n*l = {edges} is not divisible by r = {r}")]
    Divisibility { edges: usize, r: usize },
    #[error("configuration model gave up after {attempts} restarts")]
    RejectionBudgetExceeded { attempts: usize },
    #[error("infeasible degree sequence: {0}")]
    InfeasibleDegreeSequence(String),
    #[error("budget exceeded: {what} (limit {limit})")]
    BudgetExceeded { what: String, limit: u64 },
    #[error("no sign change bracketing a root: {0}")]
    NoSignChange(String),
    #[error("inadmissible kappa {kappa} for (l, r) = ({l}, {r})")]
    InadmissibleKappa { l: usize, r: usize, kappa: f64 },
    #[error("instance too large for brute force: n = {n} exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("wrong weight kind: expected {expected}, found {found}")]
    WrongWeightKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("node {node} has degree {degree}, above the table cap {cap}")]
    DegreeTooLarge {
        node: usize,
        degree: usize,
        cap: usize,
    },
    #[error("logarithm of a non-positive argument in {0}")]
    LogDomain(String),
    #[error("message {value} too close to the boundary for step {step}")]
    BoundaryTooClose { value: f64, step: f64 },
    #[error("singular activity denominator {value:e} at {node}")]
    SingularDenominator { node: String, value: f64 },
    #[error("bound hypothesis not met: {0}")]
    HypothesisNotMet(String),
    #[error("order {m} exceeds the supported maximum {max}")]
    OrderTooLarge { m: usize, max: usize },
    #[error("invalid degree sequence: {0}")]
    InvalidDegreeSequence(String),
    #[error("rate-function domain is empty: {0}")]
    InfeasibleDomain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors raised by enumeration or sampling budgets.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::BudgetExceeded { .. } | Error::RejectionBudgetExceeded { .. }
        )
    }
}
