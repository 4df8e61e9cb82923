//! Symplectic and Hermitian-symplectic cocycles over ergodic base dynamics:
//! Siegel disc geometry, Lyapunov spectra, fibered rotation numbers, Kotani
//! theory for Schrödinger operators on strips, periodic band structure and
//! perturbative density of positive exponents.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod group_core;
pub mod siegel_geometry;
pub mod cocycle_engine;
pub mod rotation_module;
pub mod kotani;
pub mod strip_operators;
pub mod periodic_bands;
pub mod perturbation;

pub use error::{Error, Result};
