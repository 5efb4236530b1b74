#![no_std]
#![doc = include_str!("../README.md")]
extern crate alloc;

pub mod adapter;
pub mod backbone;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod heads;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod rga;
pub mod tensor;

pub use error::{Error, Result};
pub use params::{Ctx, Grads, Mode, ParamId, ParamStore, Role};
pub use tensor::Tensor;
