//! Numerical laboratory for finite von Neumann algebras: noncommutative
//! `L^p` norms, Tomita-Takesaki data, KMS states, Araki perturbation and
//! Dyson expansionals, and exponential classes of measurable operators.

pub mod algebra;
pub mod dyson;
pub mod error;
pub mod expclass;
pub mod kms;
pub mod matcore;
pub mod modular;
pub mod nclp;
pub mod quadrature;
pub mod relmod;
pub mod report;
pub mod sample;
pub mod suites;

pub use error::{LabError, Result};
