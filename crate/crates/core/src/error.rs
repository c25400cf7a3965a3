use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown tariff `{0}`")]
    UnknownTariff(String),

    #[error("invalid tariff: {0}")]
    InvalidTariff(String),

    #[error("dynamic tariff requires an aggregate load curve")]
    MissingAggregateLoad,

    #[error("aggregate load must be strictly positive (first offending step {0})")]
    NonPositiveAggregateLoad(usize),

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("negative value in {what} at step {index}: {value}")]
    NegativeValue {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing coefficient for category {category} / era {era}")]
    MissingCoefficient { category: String, era: String },

    #[error("no reference profile for category {0}")]
    MissingProfile(String),

    #[error("stage-2 reconciliation infeasible at steps {0:?}")]
    ReconciliationInfeasible(Vec<usize>),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("power flow did not converge after {iterations} iterations (worst mismatch {mismatch:e} p.u.)")]
    NonConvergence { iterations: usize, mismatch: f64 },

    #[error("voltage collapse at bus {bus}: |V| = {magnitude:.4} p.u.")]
    VoltageCollapse { bus: String, magnitude: f64 },

    #[error("power flow failed at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("hosting capacity undefined: {0} violations without PV")]
    DemandSideViolations(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
