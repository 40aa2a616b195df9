//! Dimension-reducing transforms composed with probabilistic output heads.
//!
//! The crate covers dense numerics, partial least squares, shrinkage
//! diagnostics, Gaussian-process regression, small feed-forward networks,
//! single-index estimation and the composite models built from them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brillinger;
pub mod error;
pub mod gp;
pub mod numerics;
pub mod pipeline;
pub mod pls;
pub mod random;
pub mod nnet;
pub mod shrinkage;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use numerics::{Matrix, StandardizationParams, Svd, Vector};
pub use pls::{fit_pls, fit_pls_helland, PlsModel};
