//! Backward errors of approximate eigenpairs for nonlinear eigenvalue
//! problems in split form `F(λ) = Σⱼ fⱼ(λ) Fⱼ`.

pub mod error;
pub mod linalg;
pub mod nep;

pub use error::{Error, Result};
pub mod perturbation;
pub mod unstructured;
pub mod structured;
pub mod symmetric;
pub mod riemann;
pub mod solve;
pub mod gallery;
pub mod bench;
pub mod io;
pub mod cli;
