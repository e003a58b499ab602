//! Learning matrix-product-operator representations of mixed quantum states
//! from local randomized measurements.

pub mod error;
pub mod fidelity;
pub mod learner;
pub mod linalg;
pub mod measurement;
pub mod mpo;
pub mod mps;
pub mod pauli;
pub mod pauli_mpo;
pub mod qpca;
pub mod serialize;
pub mod shadows;
pub mod states;
pub mod transfer;

pub use error::{Error, Result};
pub use linalg::C64;
pub use mpo::MPOperator;
pub use mps::MPState;
pub use pauli::{Pauli, PauliString};
pub use pauli_mpo::PauliMpo;
