//! Layers with explicit forward caches and hand-written backward passes.
//!
//! Every `forward` borrows the [`ParamStore`](crate::params::ParamStore)
//! immutably and returns a cache; `backward` consumes that cache, accumulates
//! gradients for trainable parameters into [`Grads`](crate::params::Grads)
//! and returns the gradient with respect to the layer input.

mod act;
mod attention;
mod conv;
mod linear;
mod norm;

pub use act::{gelu, gelu_grad, relu_backward, relu_inplace};
pub use attention::{Attention, AttentionCache};
pub use conv::{col2im, im2col, Conv2d, ConvBlock, ConvBlockCache, ConvCache};
pub use linear::{Linear, LinearCache};
pub use norm::{BatchNorm, BnCache, LayerNorm, LnCache};
