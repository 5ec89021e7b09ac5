//! Velocity-matrix analysis of first-order symmetric hyperbolic systems.
//!
//! The crate computes the velocity matrix `M(x)` of a system
//! `E ∂_t Ψ = -½ Σ_j (A^j ∂_j Ψ + ∂_j(A^j Ψ)) - iVΨ`, probes completeness of the
//! metric `M̂^{-1}` on the domain, and runs energy-conserving evolutions that
//! exhibit finite propagation speed and confinement.

pub mod cli;
pub mod dsl;
pub mod grid;
pub mod matkernel;
pub mod systems;
pub mod velocity;
pub mod geometry;
pub mod evolve;
