//! Simulation and verification toolkit for virtual-contraction-based tracking
//! control of flexible-joint robots in port-Hamiltonian form.

pub mod cli;
pub mod config;
pub mod contraction;
pub mod controller;
pub mod error;
pub mod fjr;
pub mod linalg;
pub mod ph;
pub mod scalar;
pub mod sim;
pub mod vsys;

pub use error::{Error, Result};
pub use ph::{MechModel, State, StateRate};
