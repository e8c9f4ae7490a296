//! Lattice Boltzmann solvers for plane channel flow over porous layers.
//!
//! The crate covers the pore-scale D3Q19 TRT solver with simple and
//! interpolated bounce-back walls on voxelised sphere packings, the
//! homogenised (REV-scale) generalised lattice Boltzmann model, and
//! closed-form two-domain interface models with parameter extraction.

pub mod bench;
pub mod boundary;
pub mod config;
pub mod error;
pub mod field;
pub mod geometry;
pub mod glbm;
pub mod interface;
pub mod lattice;
pub mod output;
pub mod pore_scale;
pub mod profile;
pub mod scenario;

pub use error::{Error, Result};
