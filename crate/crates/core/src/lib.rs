//! Moment-matching model reduction for second-order systems
//! `M ẍ + D ẋ + K x = F u`, `y = Cp x + Cv ẋ`, with preconditioned CG solves,
//! sparse approximate inverses and stability diagnostics.

pub mod airga;
pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod h2;
pub mod krylov;
pub mod linalg;
pub mod model_io;
pub mod spai;
pub mod system;

pub use error::{Error, Result};
