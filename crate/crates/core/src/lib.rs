//! Simulation of repeated system–ancilla collisions and of the effective
//! dynamics they generate in the short-collision limit.

pub mod error;
pub mod filtering;
pub mod dynamics;
pub mod engine;
pub mod linalg;
pub mod model;
pub mod scenario;
pub mod tolerance;

pub use error::{Error, Result};
