//! Cooperative spectrum sensing with amplify-and-forward reporting to a fusion
//! center: error analysis, fading averages, resource allocation and simulation.

pub mod alloc;
pub mod detector;
pub mod error;
pub mod fading;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod simkit;

pub use error::{Error, Result};
pub use model::{Allocation, AllocationMode, CostModel, Network, NetworkSpec, NoisePriors, UserProfile};
