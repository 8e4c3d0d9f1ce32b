//! Low-complexity acoustic scene classification engine.

pub mod augment;
pub mod budget;
pub mod error;
pub mod frontend;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
