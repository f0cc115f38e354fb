//! Pseudospectral laboratory for solitary waves of the Benjamin equation
//!
//! ```text
//! ∂ₜu + ∂ₓ³u + γH∂ₓ²u + u∂ₓu = 0
//! ```
//!
//! on a periodic box. The crate computes solitary-wave profiles, evolves
//! perturbed data with an exponential integrator, decomposes states near the
//! solitary-wave orbit and evaluates localized monotonicity functionals and
//! commutator estimates.

pub mod error;
pub mod evolution;
pub mod experiments;
pub mod modulation;
pub mod monotonicity;
pub mod solitary;
pub mod spectral;

pub use error::{Error, Result};
pub use evolution::{EvolutionConfig, Trajectory};
pub use solitary::{SolitaryWave, WaveParams};
pub use spectral::{Field, Grid, Norm};
