#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod arch;
pub mod audit;
pub mod data;
pub mod error;
pub mod fft;
pub mod grad;
pub mod layers;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod smoothing;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{CTensor4, Shape, Tensor4};
