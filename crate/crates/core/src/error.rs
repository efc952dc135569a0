use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not square or shapes do not match: {0}")]
    Shape(String),
    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("trace is {0}, expected 1")]
    TraceNotOne(f64),
    #[error("eigensolver failed to converge")]
    EigenSolverFailure,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("Fock space over {modes} modes exceeds cap of {cap} modes")]
    FockCap { modes: usize, cap: usize },
    #[error("sigma is singular on the support of rho")]
    SingularSigma,
    #[error("operands must be strictly positive")]
    SingularInput,
    #[error("epsilon {0} is outside (0, 1)")]
    EpsilonOutOfRange(f64),
    #[error("operator is not a valid test: eigenvalue {0:.3e} outside [0, 1]")]
    InvalidTest(f64),
    #[error("threshold L must be positive, got {0}")]
    NonpositiveL(f64),
    #[error("convolution would produce {0} atoms")]
    AtomExplosion(usize),
    #[error("measure has total mass {0}, expected 1")]
    NotNormalized(f64),
    #[error("eigenvalue {0} of I + W leaves the right half-plane")]
    BranchFault(num_complex::Complex64),
    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudget(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// Whether the error is a resource cap (dimension, Fock space, atom count)
    /// rather than a numerical failure.
    pub fn is_cap(&self) -> bool {
        matches!(self, Error::DimensionCap { .. } | Error::FockCap { .. } | Error::AtomExplosion(_))
    }
}
