//! Random walks in random environments that are small perturbations of the
//! simple symmetric random walk on Z^d: environment laws, exact killed Green's
//! functions, Kalikow's auxiliary walk, ballisticity probes, the low-disorder
//! velocity expansion and renormalization-scale arithmetic.

pub mod ballistic;
pub mod cli;
pub mod environment;
pub mod error;
pub mod expansion;
pub mod green;
pub mod kalikow;
pub mod lattice;
pub mod linalg;
pub mod renorm;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod stats;
pub mod walker;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GreenRowF64 = green::GreenRow<f64>;
pub type GreenRowExact = green::GreenRow<num_rational::BigRational>;
pub type KalikowEnvironmentF64 = kalikow::KalikowEnvironment<f64>;
pub type KalikowEnvironmentExact = kalikow::KalikowEnvironment<num_rational::BigRational>;
