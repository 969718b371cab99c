//! Certified L2-gain bounds for linear, 2nd-order PDEs in two spatial variables.
//!
//! The pipeline: a PDE in the standardized coefficient form is converted to an
//! equivalent Partial Integral Equation (PIE) whose operators live in the
//! *-algebra of 2D partial integral (PI) operators with polynomial kernels.
//! A KYP-style operator inequality then certifies a bound `gamma` on the
//! worst-case energy amplification from disturbance to output; positivity of
//! the unknown PI operators is enforced through a PSD-matrix parameterization,
//! which reduces the whole test to a semidefinite program.
//!
//! Modules:
//! - [`poly`]: exact rational multivariate polynomials in (x, y, theta, nu),
//!   the substrate for every operator kernel.
//! - [`lin`]: affine forms over scalar SDP unknowns, used as polynomial
//!   coefficients while assembling the operator inequality.
//! - [`op`]: PI-operator parameter bundles and the algebra (apply, add,
//!   compose, adjoint, derivative composition, inversion).
//! - [`grid`]: Gauss-Legendre quadrature oracle and numeric operator
//!   application on polynomial test states.
//! - [`pde`]: the standardized PDE format, boundary trace maps, and the
//!   PDE-to-PIE conversion.
//! - [`cone`]: the PSD-matrix parameterization of positive PI operators and
//!   coefficient-matching constraint emission.
//! - [`sdp`]: the cone-program interface and solver backend.
//! - [`gain`]: KYP operator assembly, gain minimization, and certificate
//!   verification.
//! - [`fd`]: an independent finite-difference H-infinity estimator for
//!   cross-validation.
//! - [`spec_io`]: file formats (PDE spec files, operator dumps, certificates).

pub mod cone;
pub mod fd;
pub mod gain;
pub mod grid;
pub mod lin;
pub mod op;
pub mod pde;
pub mod poly;
pub mod sdp;
pub mod spec_io;
pub mod testgen;

pub use poly::{Interval, Poly, PolyMat, Var, Q};

/// Errors produced by the operator algebra and the conversion pipeline.
#[derive(Debug, thiserror::Error)]
pub enum PiError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("degree {deg} exceeds cap {cap}; runaway composition?")]
    DegreeCap { deg: u32, cap: u32 },
    #[error("integration bound contains the integration variable")]
    BadBound,
    #[error("variable {0:?} not assigned in evaluation point")]
    Unassigned(poly::Var),
    #[error("operator signature mismatch: {0}")]
    SigMismatch(String),
    #[error("derivative-composition hypothesis violated: {0}")]
    DiffHypothesis(String),
    #[error("multiplier part of the operator is singular")]
    SingularMultiplier,
    #[error("singular Woodbury core (cond {cond:.3e}); boundary conditions not well-posed in the sense of the fundamental-state map")]
    SingularCore { cond: f64 },
    #[error("operator is not in multiplier-plus-finite-rank form: {0}")]
    NotFiniteRank(String),
    #[error("target coefficient not representable at this degree ({0}); increase d")]
    IncreaseDegree(String),
    #[error("gain test requires E1 = 0 (T1 = 0); conversion produced a nonzero T1")]
    NonzeroT1,
    #[error("solver: {0}")]
    Solver(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("spec file: {0}")]
    SpecFile(String),
}

pub type Result<T> = std::result::Result<T, PiError>;
