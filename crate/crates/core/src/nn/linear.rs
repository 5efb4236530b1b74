use alloc::format;
use alloc::vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{normal_tensor, Grads, ParamId, ParamStore, Role};
use crate::tensor::{gemm, Tensor};

/// Affine map over the trailing axis: `y = x W + b` with `W: [in, out]`.
/// Doubles as a 1x1 convolution on channel-last grids.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    input: Tensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamStore,
        name: &str,
        group: &str,
        role: Role,
        in_dim: usize,
        out_dim: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let w = normal_tensor(rng, &[in_dim, out_dim], std);
        Self::from_weight(ps, name, group, role, w)
    }

    pub fn from_weight(ps: &mut ParamStore, name: &str, group: &str, role: Role, weight: Tensor) -> Self {
        let (in_dim, out_dim) = (weight.shape()[0], weight.shape()[1]);
        let weight = ps.add(format!("{name}.weight"), group, role, weight);
        let bias = ps.add(format!("{name}.bias"), group, role, Tensor::zeros(&[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn param_count(in_dim: usize, out_dim: usize) -> usize {
        in_dim * out_dim + out_dim
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<(Tensor, LinearCache)> {
        let y = self.apply(ps, x)?;
        Ok((y, LinearCache { input: x.clone() }))
    }

    /// Forward without keeping a cache.
    pub fn apply(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        if x.channels() != self.in_dim {
            return Err(Error::ChannelMismatch {
                expected: self.in_dim,
                got: x.channels(),
            });
        }
        let rows = x.rows();
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = self.out_dim;
        let bias = ps.get(self.bias).data();
        let mut out = vec![0.0; rows * self.out_dim];
        for r in 0..rows {
            out[r * self.out_dim..(r + 1) * self.out_dim].copy_from_slice(bias);
        }
        gemm(
            rows,
            self.in_dim,
            self.out_dim,
            x.data(),
            false,
            ps.get(self.weight).data(),
            false,
            1.0,
            &mut out,
        );
        Tensor::from_vec(&shape, out)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        grads: &mut Grads,
        cache: &LinearCache,
        g: &Tensor,
        need_input: bool,
    ) -> Option<Tensor> {
        linear_backward(
            ps,
            grads,
            self.weight,
            self.bias,
            &cache.input,
            self.in_dim,
            self.out_dim,
            g,
            need_input,
        )
    }
}

/// Shared backward for `y = cols W + b`, used by linear maps and im2col convs.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    ps: &ParamStore,
    grads: &mut Grads,
    weight: ParamId,
    bias: ParamId,
    cols: &Tensor,
    in_dim: usize,
    out_dim: usize,
    g: &Tensor,
    need_input: bool,
) -> Option<Tensor> {
    let rows = g.rows();
    debug_assert_eq!(cols.len(), rows * in_dim);
    if grads.tracks(weight) {
        gemm(
            in_dim,
            rows,
            out_dim,
            cols.data(),
            true,
            g.data(),
            false,
            1.0,
            grads.slot(weight),
        );
    }
    if grads.tracks(bias) {
        let gb = grads.slot(bias);
        for row in g.data().chunks_exact(out_dim) {
            for (a, b) in gb.iter_mut().zip(row) {
                *a += b;
            }
        }
    }
    if !need_input {
        return None;
    }
    let mut dx = vec![0.0; rows * in_dim];
    gemm(
        rows,
        out_dim,
        in_dim,
        g.data(),
        false,
        ps.get(weight).data(),
        true,
        0.0,
        &mut dx,
    );
    let mut shape = cols.shape().to_vec();
    *shape.last_mut().unwrap() = in_dim;
    Some(Tensor::from_vec(&shape, dx).expect("shape"))
}
