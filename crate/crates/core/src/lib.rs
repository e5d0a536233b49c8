//! Numerical laboratory for small-amplitude quasi-periodic traveling gravity
//! water waves in infinite depth.
//!
//! The crate is organized bottom-up:
//!
//! - [`spectral`]: Fourier fields on the circle and on tori, multipliers,
//!   dealiased products.
//! - [`dno`]: the Dirichlet-Neumann operator `G(η)ψ` by Taylor expansion in `η`.
//! - [`wavesys`]: the Hamiltonian water-wave vector field, energy, momentum,
//!   symmetries, complex coordinates and a validation integrator.
//! - [`resonance`]: exact resonance enumeration for the dispersion law `√|j|`.
//! - [`normalform`]: the quartic Birkhoff normal form on the tangential sites.
//! - [`melnikov`]: diophantine and Melnikov small-divisor checks, Monte Carlo
//!   measure estimates.
//! - [`qpsolver`]: traveling torus embeddings, residual and Newton refinement.
//! - [`linop`]: the linearized operator at an embedding, its spectrum and the
//!   fitted diagonal model.
//! - [`experiment`]: configuration-driven experiment runner used by the CLI.

pub mod dno;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod linop;
pub mod melnikov;
pub mod normalform;
pub mod qpsolver;
pub mod resonance;
pub mod spectral;
pub mod wavesys;

pub use error::{Error, Result};
