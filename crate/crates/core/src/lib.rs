//! Factored scaling curves.
//!
//! Fits power-law curves that map the number of demonstrations collected for
//! a factor (or a pair of factors) to overall policy performance, extrapolates
//! them over a data budget, and turns the predicted gains into a per-factor
//! collection plan. A synthetic ground-truth world stands in for policy
//! training and evaluation so the whole loop can be simulated.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod allocator;
pub mod combos;
pub mod curves;
pub mod domain;
mod error;
pub mod proxy;
pub mod simharness;

pub use error::{Error, Result};
