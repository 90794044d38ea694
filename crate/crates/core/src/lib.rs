//! Mesoscopic linear statistics of Ewens random permutation matrices.
//!
//! The spectrum of a permutation matrix is determined by its cycle type, so
//! every statistic here is evaluated from cycle counts in time proportional
//! to the number of distinct cycle lengths (or to `n` for the principal-branch
//! statistic), instead of diagonalising an `n × n` matrix.
//!
//! Modules:
//!
//! - [`testfn`]: admissible test functions, their Fourier transforms and the
//!   periodisations `Θ_f`, `Ξ_f` (plus the finite principal-branch versions).
//! - [`ewens`]: Feller-chain samplers for Ewens(θ) cycle counts, the coupled
//!   Poisson counts, `Ψ_n` and exact small-`n` cycle-type laws.
//! - [`linstat`]: the statistics `X` (all determinations) and `X′` (principal
//!   branch), with brute-force eigenangle and determinant oracles.
//! - [`limitlaw`]: CLT predictions, the scale-invariant Poisson limit `Z`,
//!   its characteristic function, and the Euler–Maclaurin discrepancy bound.
//! - [`montecarlo`]: seeded parallel ensembles, estimators and distributional
//!   comparisons, plus CSV / JSON output.

pub mod error;
pub mod ewens;
pub mod limitlaw;
pub mod linstat;
pub mod montecarlo;
pub mod quad;
pub mod testfn;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Version string embedded in emitted reports.
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
