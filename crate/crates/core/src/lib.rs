//! Few-photon scattering from driven quantum systems into chiral waveguides,
//! computed in a temporal-mode basis.

pub mod analytic_tls;
pub mod blocks;
pub mod error;
pub mod expm;
pub mod grid;
pub mod heisenberg;
pub mod hilbert;
pub mod model;
pub mod observables;
pub mod propagator;
pub mod scattering;
pub mod stats;
pub mod trajectories;

pub use error::{Error, Result};
