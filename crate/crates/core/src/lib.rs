pub mod cli;
pub mod error;
pub mod linalg;
pub mod mps;
pub mod noise;
pub mod observables;
pub mod protocol;
pub mod selftest;
pub mod sim;
pub mod teleport;
pub mod variants;

pub use error::{Error, Result};
