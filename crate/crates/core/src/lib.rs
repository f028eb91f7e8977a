//! Forward and inverse exponential X-ray transform of planar symmetric
//! 2-tensor fields supported in the unit disk.
//!
//! The forward operator integrates the projection `<F(x) theta, theta>` of a
//! symmetric 2-tensor field `F` along chords of the unit disk against the
//! exponential weight `exp(mu t)`, producing boundary data indexed by an
//! outgoing boundary point and a direction.  The inverse path recovers `F`
//! from that data for two closed ranges of the operator: incompressible
//! (divergence-free) fields and trace-free fields.  Reconstruction runs
//! through the angular Fourier modes of the transport solution: a
//! Bukhgeim-type Cauchy integral extends attenuated mode data from the
//! boundary into the disk, an elliptic boundary value problem and a
//! Cauchy-Pompeiu integral supply the two remaining modes, and pointwise
//! algebra reassembles the tensor components.
//!
//! Modules are layered bottom-up: [`geometry`] (chords and travel times),
//! [`fields`] (grids, tensors, phantoms), [`transform`] (forward operator and
//! sinogram I/O), [`attenuation`] (the attenuation factor and its angular
//! coefficients), [`bukhgeim`] (the Cauchy integral for sequence-valued
//! analytic maps), [`elliptic`] (finite-difference Dirichlet solvers on the
//! disk), [`pompeiu`] (d-bar area/contour integrals), [`pipeline`] (end-to-end
//! reconstruction), and [`cli`] (command-line driver).

pub mod attenuation;
pub mod bukhgeim;
pub mod cli;
pub mod elliptic;
pub mod fields;
pub mod geometry;
pub mod pipeline;
pub mod pompeiu;
pub mod transform;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A point that must lie in the closed unit disk does not.
    #[error("point ({0}, {1}) lies outside the closed unit disk")]
    OutsideDisk(f64, f64),
    /// Invalid configuration (grid size, mode count, phantom support, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Two objects that must share a grid or sampling layout do not.
    #[error("mismatch: {0}")]
    Mismatch(String),
    /// A numerical self-check failed beyond its stated tolerance.
    #[error("numerical check failed: {0}")]
    NumericalCheck(String),
    /// A linear system could not be factorized.
    #[error("singular system: {0}")]
    Singular(String),
    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
