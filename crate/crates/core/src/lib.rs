#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agents;
pub mod constraints;
pub mod env;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod patterns;
pub mod pauli;
pub mod qubits;
pub mod relaxation;
pub mod sdp;

pub use error::{Error, Result};
