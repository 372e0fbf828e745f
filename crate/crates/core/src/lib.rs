//! Modulating-function based κ-fast convergent observers for single-output
//! nonlinear systems in observable canonical form.
//!
//! The pipeline is: pick a [`modfun::ModulatingFunction`], build the
//! triangular [`transform::TransformT`], design an [`observer::ObserverDesign`]
//! from a gain `K`, then co-simulate with [`sim::run_experiment`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod modfun;
pub mod observer;
pub mod plant;
pub mod sim;
pub mod transform;

pub use error::{Error, Result};
