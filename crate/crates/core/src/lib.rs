//! Operator-theoretic tools for measure-preserving dynamics on tori and periodic orbits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod fock;
pub mod koopman;
pub mod linalg;
pub mod par;
pub mod qcirc;
pub mod qmda;
pub mod report;
pub mod rkha;
pub mod special;

pub use error::{Error, Result};
pub use par::Execution;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
