//! Generalized Grothendieck constants and dimension witnesses.
//!
//! `K_G(n → m)` is the smallest constant such that, for every real matrix
//! `M`, the maximum of `Σ M_ij a_i·b_j` over `n`-dimensional unit vectors is
//! at most `K_G(n → m)` times the same maximum over `m`-dimensional unit
//! vectors. The kernel `M(a, b) = a·b` on the sphere gives the lower bound
//!
//! ```text
//! K_G(n → m) ≥ (m/n) · (Γ(m/2) Γ((n+1)/2) / (Γ((m+1)/2) Γ(n/2)))²
//! ```
//!
//! which is strictly above 1 for all `m < n`. The modules here evaluate that
//! bound exactly ([`analytic_bounds`]), check every sphere integral behind it
//! by Monte Carlo ([`sphere`]), optimize discretized bilinear forms over
//! rank-constrained unit-vector assignments ([`embedding_opt`]), simulate the
//! Clifford-algebra strategy that realizes `E[αβ|ab] = a·b` on a maximally
//! entangled state ([`quantum`]), and run the finite-question dimension
//! witness end to end ([`witness`]).

pub mod analytic_bounds;
pub mod embedding_opt;
mod error;
pub mod quantum;
pub mod rng;
pub mod sphere;
pub mod witness;

pub use error::{Error, Result};
