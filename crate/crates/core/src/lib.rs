//! Numerical construction of Loewner chains with an attracting origin in
//! several complex variables.

pub mod chain;
pub mod error;
pub mod field;
pub mod flow;
pub mod linalg;
pub mod linear;
pub mod ode;
pub mod quadrature;
pub mod sampling;
pub mod schedule;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64};
