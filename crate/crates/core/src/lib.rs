//! FETI-DP for symmetric interior penalty discretizations of
//! `−∇·(ρ∇u) = f` on the unit square with piecewise constant `ρ`.

#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod assembly;
pub mod dofs;
pub mod error;
pub mod experiment;
pub mod fetidp;
pub mod krylov;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod subdomain;

pub use error::{Error, Result};
