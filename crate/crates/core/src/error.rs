//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Everything that can go wrong while building meshes, assembling
/// operators, solving eigenproblems or evaluating variation formulas.
#[derive(Debug, Error)]
pub enum Error {
    /// A canonical-domain name that the mesh builder does not know.
    #[error("unknown canonical domain kind `{0}`")]
    UnknownDomainKind(String),

    /// A size parameter (length, radius, ...) that is zero, negative or NaN.
    #[error("degenerate size parameter: {0}")]
    DegenerateSize(String),

    /// Mesh resolution below the minimum the builders accept.
    #[error("resolution too coarse: got {got}, need at least {min}")]
    ResolutionTooCoarse { got: usize, min: usize },

    /// Simplicial FEM path only covers dimensions 1 and 2.
    #[error("mesh dimension {0} is not supported; only 1 and 2 are")]
    UnsupportedDimension(usize),

    /// A cell whose chart volume vanishes (or is negative after repair).
    #[error("degenerate cell {cell}: chart volume {volume:.3e}")]
    DegenerateCell { cell: usize, volume: f64 },

    /// Parse failure for the text mesh format.
    #[error("mesh file parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    /// A tensor that must be positive definite fails the check on a cell.
    #[error("tensor not positive definite on cell {cell} (min generalized eigenvalue {min_eig:.6e})")]
    NotPositiveDefinite { cell: usize, min_eig: f64 },

    /// `g + tH` stopped being a metric on some cell.
    #[error("metric perturbation loses positivity on cell {cell} at t = {t}")]
    IndefinitePerturbation { cell: usize, t: f64 },

    /// Dirichlet conditions removed every vertex.
    #[error("empty free DOF set after applying boundary conditions")]
    EmptyFreeSet,

    /// More eigenpairs requested than the discrete space holds.
    #[error("requested {requested} eigenpairs but only {available} free DOFs")]
    TooManyEigenpairs { requested: usize, available: usize },

    /// The iterative eigensolver gave up.
    #[error("eigensolver non-convergence: {found}/{requested} pairs, worst residual {achieved:.3e} (target {target:.3e})")]
    EigenNonConvergence {
        requested: usize,
        found: usize,
        achieved: f64,
        target: f64,
    },

    /// A factorization hit a non-positive pivot (matrix not SPD).
    #[error("factorization pivot {pivot:.3e} at row {row}: matrix is not positive definite")]
    FactorizationBreakdown { row: usize, pivot: f64 },

    /// Variation formulas need a mass-orthonormal eigenvector cluster.
    #[error("eigenvector cluster is not mass-orthonormal (residual {0:.3e})")]
    ClusterNotOrthonormal(f64),

    /// Spectrum solved under one boundary condition, used under another.
    #[error("boundary condition mismatch: spectrum is {spectrum}, request is {requested}")]
    BoundaryConditionMismatch { spectrum: String, requested: String },

    /// Eigenbranch pairing across finite-difference states is ambiguous.
    #[error("branch matching ambiguous at step {step:.3e} (subspace overlap {overlap:.3e}); retry with a smaller step")]
    BranchMatching { step: f64, overlap: f64 },

    /// A deformation folded a cell over itself.
    #[error("cell {cell} inverts under the deformation at t = {t}")]
    CellInversion { cell: usize, t: f64 },

    /// Two-component boundary constructions need two boundary components.
    #[error("construction needs at least 2 boundary components, mesh has {0}")]
    TwoComponentBoundary(usize),

    /// A "multiplet" whose internal gaps reveal simple eigenvalues.
    #[error("cluster looks like separate simple eigenvalues, not a multiplet: internal gap {gap:.3e} exceeds {limit:.3e}")]
    NearClusterMisuse { gap: f64, limit: f64 },

    /// Flow time outside `[0, delta)` where `delta` is the blow-up time.
    #[error("flow time {t} outside [0, {delta})")]
    FlowTimeOutOfRange { t: f64, delta: f64 },

    /// Pinching constant outside `(0, 1/2]`.
    #[error("pinching constant {0} outside (0, 1/2]")]
    InvalidPinching(f64),

    /// Catch-all input validation failure with a human-readable reason.
    #[error("{0}")]
    Invalid(String),

    /// Filesystem trouble while reading or writing meshes/reports.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that indicate bad input rather than numerical
    /// breakdown.  The CLI maps these to a distinct exit code.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::EigenNonConvergence { .. }
                | Error::FactorizationBreakdown { .. }
                | Error::BranchMatching { .. }
                | Error::IndefinitePerturbation { .. }
                | Error::CellInversion { .. }
        )
    }
}
