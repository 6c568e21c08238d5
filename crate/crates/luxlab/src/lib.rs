//! Numerical laboratory for weighted Orlicz-space analysis on dyadic meshes.
//!
//! The crate bundles the constructive objects needed to experiment with
//! two-weight norm inequalities for multilinear maximal operators:
//!
//! * [`growth`] — growth functions `Φ` (power, power-log, exponential,
//!   entropy, tabulated), their numeric inverses, doubling/submultiplicativity
//!   classifiers, Legendre-type complementary functions, and the composed
//!   function with `Φ⁻¹ = ∏ Φᵢ⁻¹`.
//! * [`dyadic`] — shifted dyadic grids `D^β` with `β ∈ {0, 1/3}^d`, exact
//!   integer cube arithmetic, the three-lattice cover, and sparse-family
//!   validation.
//! * [`field`] — piecewise-constant weights and functions on a dyadic mesh,
//!   with exact integrals and weighted averages.
//! * [`orlicz`] — modulars and Luxemburg norms over weighted mesh fields.
//! * [`maximal`] — weighted multilinear, fractional, and logarithmic maximal
//!   operators; level-cube selection; sparse decomposition.
//! * [`weights`] — the auxiliary weight `ν`, Muckenhoupt-type constants, and
//!   every two-weight class constant used by the experiment harness.
//! * [`carleson`] — Carleson sequences: constants, embedding sums, level-set
//!   sums, and builders from sparse families.
//! * [`harness`] — named, seeded experiments that measure the two sides of
//!   each inequality and emit deterministic JSON/CSV reports.
//!
//! All computation happens on a bounded window; suprema over cube families
//! are restricted to cubes lying fully inside it. Every integral of a mesh
//! field is exact for the discretized object (no quadrature error), so the
//! inequality checks exercise genuine function classes rather than
//! approximations of them.

#![forbid(unsafe_code)]

pub mod carleson;
pub mod dyadic;
pub mod field;
pub mod growth;
pub mod harness;
pub mod maximal;
pub mod numerics;
pub mod orlicz;
pub mod weights;

/// Crate-wide error type.
///
/// Variants mirror the failure vocabulary of the public operations: bad
/// mathematical inputs (`Domain`), caller mistakes (`Usage`), numeric range
/// exhaustion (`Overflow`), objects finer than the mesh (`Resolution`),
/// divisions by vanishing quantities (`Degenerate`), suprema that escape to
/// infinity (`Unbounded`), sparse decompositions that cannot reach the
/// half-packing target (`Decomposition`), experiment misconfiguration
/// (`Config`), violated experiment hypotheses (`Hypothesis`), text-format
/// problems (`Parse`), and I/O (`Io`).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("overflow error: {0}")]
    Overflow(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("degenerate error: {0}")]
    Degenerate(String),
    #[error("unbounded error: {0}")]
    Unbounded(String),
    #[error("decomposition error: packing {packing} still above 1/2 after {retries} retries")]
    Decomposition { packing: f64, retries: u32 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
