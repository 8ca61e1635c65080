//! Top-K item recovery from discrete choice data.
//!
//! The crate covers the whole pipeline:
//!
//! - [`choice_models`]: IID random utility models (Gumbel, normal and exponential noise),
//!   the closed-form multinomial logit and explicit per-menu probability tables.
//! - [`menu`] and [`sampling`]: menu enumeration and the multi-round uniform sampling model
//!   that turns a choice model into a [`sampling::ChoiceDataset`].
//! - [`rankers`]: choice-based Borda count, MNL maximum likelihood and spectral ranking.
//! - [`theory`]: generalized Borda scores, gaps, sample-complexity bounds and the identities
//!   they satisfy, evaluated exactly by enumeration or by Monte Carlo.
//! - [`preflib`]: ranking corpora to empirical choice probabilities and ground truth.
//! - [`harness`]: accuracy/timing experiments.
//! - [`verify`]: a self-check suite of numerical identities.
//!
//! Items are 0-based inside the library. Every file format and the CLI use 1-based items.

#![warn(missing_debug_implementations, rust_2018_idioms)]

pub mod choice_models;
pub mod error;
pub mod harness;
pub mod io;
pub mod menu;
pub mod preflib;
pub mod rankers;
pub mod rng;
pub mod sampling;
pub mod theory;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
