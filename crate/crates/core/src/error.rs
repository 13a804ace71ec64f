use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid eigenvalues: {0}")]
    InvalidSpectrum(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("gain requirement for rule {rule}: {reason}")]
    Gains { rule: String, reason: String },

    #[error("matrix is not orthonormal (defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },

    #[error("matrix is rank deficient (smallest eigenvalue of XᵀX = {min_eig:.3e})")]
    Singular { min_eig: f64 },

    #[error("inconsistent fixed-point descriptor: {0}")]
    Descriptor(String),

    #[error("unsupported Hadamard block size {0}; the Sylvester construction needs 1 or a power of two")]
    HadamardSize(usize),

    #[error("matrix has no off-diagonal entry above {tol:e}; no skew witness exists")]
    NoWitness { tol: f64 },

    #[error("not a fixed point: stationarity residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotFixedPoint { residual: f64, tolerance: f64 },

    #[error("integration diverged at step {step} (‖W‖_F = {norm:.3e})")]
    Diverged { step: usize, norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown rule `{name}`; valid rules: {valid}")]
    UnknownRule { name: String, valid: String },
}

pub type Result<T> = std::result::Result<T, Error>;
