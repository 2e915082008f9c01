//! Stochastic optimization when the data distribution reacts to the
//! deployed model.
//!
//! The crate covers the decoupled risk `J(θ₁; θ₂)` over finite-support
//! decision-dependent distributions, the stationarity measure
//! `‖∇J(θ; θ)‖²`, greedy and lazy deployment schemes with SGD, and a set of
//! diagnostics (Wasserstein-1 sensitivity, gradient noise, smoothness and
//! an exact expected-descent check).
//!
//! It is `no_std` and only needs `alloc`; file formats, configuration and
//! the command line live in the companion `perfpred` crate.
#![no_std]

extern crate alloc;

pub mod datasets;
pub mod diagnostics;
mod error;
pub mod models;
pub mod numkit;
pub mod optim;
pub mod shiftmaps;

pub use error::{Error, Result};
pub use models::{LabelEncoding, Loss, Sample};
pub use numkit::RngStream;
pub use shiftmaps::{BaseDataset, ShiftMap};
