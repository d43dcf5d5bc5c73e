//! Verification, reduction and search for LOCC implementations of
//! two-qubit controlled-unitary gates.

pub mod error;
pub mod linalg;
pub mod protocol;
pub mod reducer;
pub mod reference;
pub mod search;
pub mod states;
pub mod verifier;

pub use error::{Error, Result};
