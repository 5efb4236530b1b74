use alloc::format;
use alloc::vec;

use rand::Rng;

use super::act::{relu_backward, relu_inplace};
use super::linear::linear_backward;
use super::norm::{BatchNorm, BnCache};
use crate::error::{Error, Result};
use crate::params::{kaiming_std, normal_tensor, Ctx, Grads, ParamId, ParamStore, Role};
use crate::tensor::{gemm, Tensor};

/// Unrolls `k x k` taps with dilation `d` and "same" zero padding.
/// Output is `[b, h, w, k*k*c]` with taps ordered `(ky, kx, c)`.
pub fn im2col(x: &Tensor, kernel: usize, dilation: usize) -> Tensor {
    let (b, h, w, c) = x.dims4();
    let pad = (dilation * (kernel - 1) / 2) as isize;
    let kk = kernel * kernel * c;
    let mut cols = vec![0.0; b * h * w * kk];
    let src = x.data();
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let row = ((bi * h + y) * w + xx) * kk;
                for ky in 0..kernel {
                    let iy = y as isize + (ky * dilation) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kernel {
                        let ix = xx as isize + (kx * dilation) as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let s = ((bi * h + iy as usize) * w + ix as usize) * c;
                        let d = row + (ky * kernel + kx) * c;
                        cols[d..d + c].copy_from_slice(&src[s..s + c]);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[b, h, w, kk], cols).expect("shape")
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back onto the grid.
pub fn col2im(cols: &Tensor, shape: (usize, usize, usize, usize), kernel: usize, dilation: usize) -> Tensor {
    let (b, h, w, c) = shape;
    let pad = (dilation * (kernel - 1) / 2) as isize;
    let kk = kernel * kernel * c;
    let mut out = Tensor::zeros(&[b, h, w, c]);
    let dst = out.data_mut();
    let src = cols.data();
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let row = ((bi * h + y) * w + xx) * kk;
                for ky in 0..kernel {
                    let iy = y as isize + (ky * dilation) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kernel {
                        let ix = xx as isize + (kx * dilation) as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let d = ((bi * h + iy as usize) * w + ix as usize) * c;
                        let s = row + (ky * kernel + kx) * c;
                        for (a, v) in dst[d..d + c].iter_mut().zip(&src[s..s + c]) {
                            *a += v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Stride-1 2-D convolution on channel-last grids with dims-preserving padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Tensor,
    input_dims: (usize, usize, usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamStore,
        name: &str,
        group: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        let fan_in = kernel * kernel * in_ch;
        let w = normal_tensor(rng, &[fan_in, out_ch], kaiming_std(fan_in));
        let weight = ps.add(format!("{name}.weight"), group, Role::Trainable, w);
        let bias = ps.add(format!("{name}.bias"), group, Role::Trainable, Tensor::zeros(&[out_ch]));
        Self {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            dilation,
        }
    }

    pub fn param_count(in_ch: usize, out_ch: usize, kernel: usize) -> usize {
        kernel * kernel * in_ch * out_ch + out_ch
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        let (b, h, w, c) = x.dims4();
        if c != self.in_ch {
            return Err(Error::ChannelMismatch {
                expected: self.in_ch,
                got: c,
            });
        }
        let cols = if self.kernel == 1 {
            x.clone()
        } else {
            im2col(x, self.kernel, self.dilation)
        };
        let rows = b * h * w;
        let kk = cols.channels();
        let mut out = vec![0.0; rows * self.out_ch];
        let bias = ps.get(self.bias).data();
        for r in 0..rows {
            out[r * self.out_ch..(r + 1) * self.out_ch].copy_from_slice(bias);
        }
        gemm(
            rows,
            kk,
            self.out_ch,
            cols.data(),
            false,
            ps.get(self.weight).data(),
            false,
            1.0,
            &mut out,
        );
        let y = Tensor::from_vec(&[b, h, w, self.out_ch], out)?;
        Ok((
            y,
            ConvCache {
                cols,
                input_dims: (b, h, w, c),
            },
        ))
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        grads: &mut Grads,
        cache: &ConvCache,
        g: &Tensor,
        need_input: bool,
    ) -> Option<Tensor> {
        let kk = self.kernel * self.kernel * self.in_ch;
        let dcols = linear_backward(
            ps,
            grads,
            self.weight,
            self.bias,
            &cache.cols,
            kk,
            self.out_ch,
            g,
            need_input,
        )?;
        if self.kernel == 1 {
            Some(dcols)
        } else {
            Some(col2im(&dcols, cache.input_dims, self.kernel, self.dilation))
        }
    }
}

/// Convolution followed by batch normalisation and ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm,
}

#[derive(Debug, Clone)]
pub struct ConvBlockCache {
    conv: ConvCache,
    bn: BnCache,
    out: Tensor,
}

impl ConvBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamStore,
        name: &str,
        group: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        let conv = Conv2d::new(ps, &format!("{name}.conv"), group, in_ch, out_ch, kernel, dilation, rng);
        let bn = BatchNorm::new(ps, &format!("{name}.bn"), group, out_ch);
        Self { conv, bn }
    }

    pub fn param_count(in_ch: usize, out_ch: usize, kernel: usize) -> usize {
        Conv2d::param_count(in_ch, out_ch, kernel) + BatchNorm::param_count(out_ch)
    }

    pub fn forward(&self, ps: &ParamStore, ctx: &mut Ctx, x: &Tensor) -> Result<(Tensor, ConvBlockCache)> {
        let (y, conv) = self.conv.forward(ps, x)?;
        let (mut y, bn) = self.bn.forward(ps, ctx, &y);
        relu_inplace(&mut y);
        Ok((y.clone(), ConvBlockCache { conv, bn, out: y }))
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        grads: &mut Grads,
        cache: &ConvBlockCache,
        g: &Tensor,
        need_input: bool,
    ) -> Option<Tensor> {
        let mut g = g.clone();
        relu_backward(&cache.out, &mut g);
        let g = self.bn.backward(ps, grads, &cache.bn, &g);
        self.conv.backward(ps, grads, &cache.conv, &g, need_input)
    }
}
