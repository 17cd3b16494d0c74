//! Finite-size Dicke–Stark model solved in the extended coherent-state basis.
//!
//! The crate is organised bottom-up:
//!
//! - [`core_model`]: parameters, basis index maps, displaced-Fock overlaps
//! - [`hamiltonian`]: dense Hamiltonians in the coherent-state and Fock bases
//! - [`spectrum`]: eigendecomposition and truncation control
//! - [`meanfield`]: closed-form critical couplings and energy landscapes
//! - [`observables`]: photon number, Gibbs states, G²(0), negativity, squeezing
//! - [`dynamics`]: closed evolution and the dressed master equation

pub mod core_model;
pub mod dynamics;
pub mod error;
pub mod hamiltonian;
pub mod meanfield;
pub mod observables;
pub mod spectrum;

pub use core_model::{DcsBasis, FockBasis, ModelParams, SpinProjection};
pub use error::{Error, Result};
pub use hamiltonian::{BasisTag, SymmetricMatrix};
pub use spectrum::EigenDecomposition;
