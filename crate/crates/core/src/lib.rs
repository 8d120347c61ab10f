//! Monte Carlo tools for the stochastic maximum principle of controlled SDEs
//! with a pointwise delay in the state and the control.
//!
//! - [`grid`] and [`noise`]: time grids on `[-delay, T]` and reproducible increments.
//! - [`model`]: coefficient families, expression coefficients and problem specs.
//! - [`forward`]: Euler simulation, spike variations and ladder studies.
//! - [`adjoint`]: first and second adjoint equations by regression.
//! - [`mp`]: the Hamiltonian gap.
//! - [`lq`]: the delayed LQ benchmark, its Picard solver and checks.
//! - [`harness`]: configuration-driven experiments with manifests.

pub mod adjoint;
pub mod error;
pub mod forward;
pub mod grid;
pub mod harness;
pub mod model;
pub mod lq;
pub mod mp;
pub mod noise;
pub mod paths;
pub mod stats;
pub mod tolerances;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use noise::{sample_noise, NoiseEnsemble};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/grid-and-noise.md")]
mod book_grid_and_noise {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/models.md")]
mod book_models {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/forward.md")]
mod book_forward {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/adjoints.md")]
mod book_adjoints {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/maximum-principle.md")]
mod book_maximum_principle {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/lq.md")]
mod book_lq {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/harness.md")]
mod book_harness {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/reproducibility.md")]
mod book_reproducibility {}
