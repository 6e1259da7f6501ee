use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("singular lattice basis (|det| = {det:e})")]
    SingularBasis { det: f64 },

    #[error("lattice basis must have 1 to 3 vectors of matching dimension, got {0}")]
    BadBasisShape(String),

    #[error("invalid k-grid size {sizes:?}: need one entry >= 2 per dimension")]
    InvalidGridSize { sizes: Vec<usize> },

    #[error("the spread functional requires an orthogonal lattice")]
    NonOrthogonalLattice,

    #[error("potential is not real: coefficient at {g:?} is not conj of its partner")]
    NonHermitianPotential { g: [i32; 3] },

    #[error("Hermitian eigensolver did not converge at k = {k:?}")]
    EigFailure { k: Vec<f64> },

    #[error("eigen-residual {residual:e} exceeds tolerance at k = {k:?}")]
    EigResidual { k: Vec<f64>, residual: f64 },

    #[error("band window n={first}, m={count} exceeds basis size {basis}")]
    WindowOutOfRange { first: usize, count: usize, basis: usize },

    #[error("gap condition violated at k-index {k_index} (k = {k:?}): gap = {gap:e}")]
    GapViolation { k_index: usize, k: Vec<f64>, gap: f64 },

    #[error("degenerate projection at k-index {k_index}: sigma_min = {sigma_min:e}")]
    DegenerateProjection { k_index: usize, sigma_min: f64 },

    #[error("Kato-Nagy transport failed at step {step}: |P1 - P0| = {norm}")]
    TransportGap { step: usize, norm: f64 },

    #[error("input columns not orthonormal at k-index {k_index} (deviation {deviation:e})")]
    NonOrthonormalInput { k_index: usize, deviation: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Armijo line search stalled at iteration {iter} (step {step:e})")]
    LineSearchStall { iter: usize, step: f64 },

    #[error("gradient check failed at iteration {iter}: relative error {rel_err:e}")]
    GradientCheckFailed { iter: usize, rel_err: f64 },

    #[error("abelian oracle requires m = 1, got m = {m}")]
    NotAbelian { m: usize },

    #[error("Poisson source has nonzero mean {mean:e}")]
    NonzeroMean { mean: f64 },

    #[error("minimal-image center of band {band} did not converge")]
    CenterDrift { band: usize },

    #[error("band {band}: boundary amplitude ratio {ratio:e} too large, enlarge the k-grid")]
    InsufficientDecay { band: usize, ratio: f64 },

    #[error("chart integrals disagree on overlap annulus: {inner} vs {outer}")]
    QuadratureDivergence { inner: f64, outer: f64 },

    #[error("tangency violated (residual {residual:e})")]
    TangencyViolation { residual: f64 },

    #[error("invalid holomorphic line: {0}")]
    InvalidLine(String),

    #[error("config error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    pub fn io(path: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        Error::Io { path: path.to_string(), msg: err.to_string() }
    }

    pub(crate) fn config(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Config { line, msg: msg.into() }
    }

    /// Process exit code for the family this error belongs to.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config { .. } | Parse { .. } => 2,
            SingularBasis { .. } | BadBasisShape(_) | InvalidGridSize { .. } | NonOrthogonalLattice => 3,
            NonHermitianPotential { .. } | WindowOutOfRange { .. } => 3,
            EigFailure { .. } | EigResidual { .. } => 4,
            GapViolation { .. } => 5,
            DegenerateProjection { .. } | TransportGap { .. } | NonOrthonormalInput { .. } => 6,
            ShapeMismatch(_) => 6,
            LineSearchStall { .. } | GradientCheckFailed { .. } => 7,
            NotAbelian { .. } | NonzeroMean { .. } => 8,
            CenterDrift { .. } | InsufficientDecay { .. } => 9,
            QuadratureDivergence { .. } | TangencyViolation { .. } | InvalidLine(_) => 10,
            Io { .. } => 11,
        }
    }
}
