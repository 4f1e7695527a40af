//! Joint estimation of a polychotomous choice and a binary outcome linked by a
//! Gaussian copula, with a Wald test for shared unobservables.
//!
//! Alternatives are indexed from 0 in the library API; data files and
//! reports use 1-based labels.

pub mod choice_model;
pub mod cli;
pub mod data_io;
pub mod error;
pub mod first_stage;
pub mod ghk;
pub mod inference;
pub mod joint_model;
pub mod optim;
pub mod pipeline;
pub mod stats_core;

pub use error::{Error, Result};
