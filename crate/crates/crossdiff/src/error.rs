use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} outside domain [0, {sup}]")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        sup: f64,
    },

    #[error("evaluation of {what} at s = {s} produced non-finite value {value}")]
    ModelEval {
        what: &'static str,
        s: f64,
        value: f64,
    },

    #[error("incompatible source term: integral defect {defect:.6e} exceeds tolerance {tol:.6e}")]
    IncompatibleSource { defect: f64, tol: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix inversion failed, condition estimate {cond:.3e}")]
    IllConditioned { cond: f64 },

    #[error("aggregate value {value} outside [0, {sup}] at face {face}")]
    StateOutOfRange { face: usize, value: f64, sup: f64 },

    #[error("non-finite value in species {species}, cell {cell}")]
    NonFinite { species: usize, cell: usize },

    #[error("step {step} (t = {t:.6e}) failed: {source}")]
    AtStep {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("step limit of {0} steps exceeded")]
    StepLimit(usize),

    #[error("infeasible perturbation: {0}")]
    InfeasiblePerturbation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expression error: {0}")]
    Expr(String),
}

impl Error {
    /// Process exit code category: 1 config/spec, 2 numerical, 3 is reserved
    /// for io failures which are handled at the CLI layer.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Expr(_) | Error::InfeasiblePerturbation(_) => 1,
            Error::AtStep { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
