//! Numerical laboratory for the biharmonic heat flow on model cone and
//! edge geometries.
//!
//! The singular model space is a product `R^b x C(F)` where `C(F)` is an
//! unbounded cone over a rescaled circle or round sphere. After the unitary
//! rescaling `u -> s^{f/2} u` the radial part of the Laplacian decomposes
//! over fiber modes into Schroedinger operators
//! `l_nu = -d^2/ds^2 + (nu^2 - 1/4)/s^2`, each diagonalized by a Hankel
//! transform of order `nu`. The crate builds that transform on a discrete
//! grid, assembles the kernel of `exp(-t Delta^2)` per mode, verifies its
//! structural identities (symmetry, homogeneity, unit mass, composition,
//! tip exponents), and solves the Cahn-Hilliard equation by Picard
//! iteration on its Duhamel fixed-point map.
//!
//! Module map:
//!
//! * [`specfun`] - Bessel `J_nu`, its zeros, Gauss-Legendre rules.
//! * [`geometry`] - fiber spectra, admissibility, indicial roots, index sets.
//! * [`hankel`] - the discrete order-`nu` Hankel transform.
//! * [`kernel`] - pointwise and tabulated biharmonic heat kernels plus the
//!   verification suite for their identities.
//! * [`semigroup`] - fields on the edge, `exp(-t Delta^2)` and `Delta` as
//!   spectral multipliers, Banach norms, mapping-property checks.
//! * [`cahn_hilliard`] - the Duhamel fixed-point solver and its diagnostics.
//! * [`oracle`] - independent finite-difference ground truth.

pub mod cahn_hilliard;
pub mod geometry;
pub mod hankel;
pub mod kernel;
pub mod oracle;
pub mod semigroup;
pub mod specfun;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("convention mismatch: expected {expected}, got {got}")]
    ConventionMismatch { expected: String, got: String },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("fiber spectrum has no eigenfunction evaluators: {0}")]
    MissingEigenfunctions(String),
    #[error("aliasing: fiber quadrature ({quad}) is coarser than 4x the max retained mode ({mode})")]
    Aliasing { quad: usize, mode: usize },
    #[error("exponent fit refused: {0}")]
    FitRefused(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no short-time solution at the requested resolution; contraction factors {factors:?}")]
    NoShortTimeSolution { factors: Vec<f64> },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
