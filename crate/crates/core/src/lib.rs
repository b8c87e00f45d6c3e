pub mod acf;
pub mod analytic;
pub mod error;
pub mod exec;
pub mod fock;
pub mod io;
pub mod pipeline;
mod quad;
pub mod rng;
pub mod selftest;
pub mod signal;
pub mod synth;
pub mod tomography;

pub use error::{Error, ErrorKind, Result};
