use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::linear::{Linear, LinearCache};
use crate::error::Result;
use crate::params::{Grads, ParamStore, Role};
use crate::tensor::{gemm, Tensor};

/// Global multi-head self-attention over all tokens of one image.
#[derive(Debug, Clone)]
pub struct Attention {
    pub qkv: Linear,
    pub proj: Linear,
    pub dim: usize,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    qkv_cache: LinearCache,
    qkv: Tensor,
    probs: Vec<f64>,
    proj_cache: LinearCache,
    batch: usize,
    tokens: usize,
}

impl Attention {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamStore,
        name: &str,
        group: &str,
        role: Role,
        dim: usize,
        heads: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        assert!(dim % heads == 0);
        Self {
            qkv: Linear::new(ps, &format!("{name}.qkv"), group, role, dim, 3 * dim, std, rng),
            proj: Linear::new(ps, &format!("{name}.proj"), group, role, dim, dim, std, rng),
            dim,
            heads,
        }
    }

    pub fn param_count(dim: usize) -> usize {
        Linear::param_count(dim, 3 * dim) + Linear::param_count(dim, dim)
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Copies head `h` of q/k/v (`which` = 0, 1, 2) for image `b` into a
    /// contiguous `[tokens, head_dim]` buffer.
    fn gather(&self, qkv: &[f64], b: usize, tokens: usize, which: usize, h: usize) -> Vec<f64> {
        let d = self.head_dim();
        let stride = 3 * self.dim;
        let off = which * self.dim + h * d;
        let mut out = Vec::with_capacity(tokens * d);
        for t in 0..tokens {
            let r = (b * tokens + t) * stride + off;
            out.extend_from_slice(&qkv[r..r + d]);
        }
        out
    }

    fn scatter_add(
        &self,
        dst: &mut [f64],
        src: &[f64],
        b: usize,
        tokens: usize,
        which: usize,
        h: usize,
        stride: usize,
    ) {
        let d = self.head_dim();
        let off = which * self.dim + h * d;
        for t in 0..tokens {
            let r = (b * tokens + t) * stride + off;
            for (a, v) in dst[r..r + d].iter_mut().zip(&src[t * d..(t + 1) * d]) {
                *a += v;
            }
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<(Tensor, AttentionCache)> {
        let shape = x.shape().to_vec();
        let batch = shape[0];
        let tokens = x.rows() / batch;
        let d = self.head_dim();
        let scale = 1.0 / libm::sqrt(d as f64);
        let (qkv, qkv_cache) = self.qkv.forward(ps, x)?;
        let mut probs = vec![0.0; batch * self.heads * tokens * tokens];
        let mut mixed = vec![0.0; batch * tokens * self.dim];
        for b in 0..batch {
            for h in 0..self.heads {
                let q = self.gather(qkv.data(), b, tokens, 0, h);
                let k = self.gather(qkv.data(), b, tokens, 1, h);
                let v = self.gather(qkv.data(), b, tokens, 2, h);
                let p = &mut probs[(b * self.heads + h) * tokens * tokens..][..tokens * tokens];
                gemm(tokens, d, tokens, &q, false, &k, true, 0.0, p);
                for row in p.chunks_exact_mut(tokens) {
                    let mut max = f64::NEG_INFINITY;
                    for s in row.iter_mut() {
                        *s *= scale;
                        max = max.max(*s);
                    }
                    let mut z = 0.0;
                    for s in row.iter_mut() {
                        *s = libm::exp(*s - max);
                        z += *s;
                    }
                    row.iter_mut().for_each(|s| *s /= z);
                }
                let mut o = vec![0.0; tokens * d];
                gemm(tokens, tokens, d, p, false, &v, false, 0.0, &mut o);
                for t in 0..tokens {
                    let r = (b * tokens + t) * self.dim + h * d;
                    mixed[r..r + d].copy_from_slice(&o[t * d..(t + 1) * d]);
                }
            }
        }
        let mixed = Tensor::from_vec(&shape, mixed)?;
        let (out, proj_cache) = self.proj.forward(ps, &mixed)?;
        Ok((
            out,
            AttentionCache {
                qkv_cache,
                qkv,
                probs,
                proj_cache,
                batch,
                tokens,
            },
        ))
    }

    pub fn backward(&self, ps: &ParamStore, grads: &mut Grads, cache: &AttentionCache, g: &Tensor) -> Tensor {
        let (batch, tokens) = (cache.batch, cache.tokens);
        let d = self.head_dim();
        let scale = 1.0 / libm::sqrt(d as f64);
        let dmixed = self
            .proj
            .backward(ps, grads, &cache.proj_cache, g, true)
            .expect("input grad");
        let stride = 3 * self.dim;
        let mut dqkv = vec![0.0; batch * tokens * stride];
        for b in 0..batch {
            for h in 0..self.heads {
                let q = self.gather(cache.qkv.data(), b, tokens, 0, h);
                let k = self.gather(cache.qkv.data(), b, tokens, 1, h);
                let v = self.gather(cache.qkv.data(), b, tokens, 2, h);
                let p = &cache.probs[(b * self.heads + h) * tokens * tokens..][..tokens * tokens];
                let mut dout = Vec::with_capacity(tokens * d);
                for t in 0..tokens {
                    let r = (b * tokens + t) * self.dim + h * d;
                    dout.extend_from_slice(&dmixed.data()[r..r + d]);
                }
                // dV = P^T dO, dP = dO V^T
                let mut dv = vec![0.0; tokens * d];
                gemm(tokens, tokens, d, p, true, &dout, false, 0.0, &mut dv);
                let mut dp = vec![0.0; tokens * tokens];
                gemm(tokens, d, tokens, &dout, false, &v, true, 0.0, &mut dp);
                // softmax backward, folded with the score scale
                for (drow, prow) in dp.chunks_exact_mut(tokens).zip(p.chunks_exact(tokens)) {
                    let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                    for (dv, pv) in drow.iter_mut().zip(prow) {
                        *dv = pv * (*dv - dot) * scale;
                    }
                }
                let mut dq = vec![0.0; tokens * d];
                gemm(tokens, tokens, d, &dp, false, &k, false, 0.0, &mut dq);
                let mut dk = vec![0.0; tokens * d];
                gemm(tokens, tokens, d, &dp, true, &q, false, 0.0, &mut dk);
                self.scatter_add(&mut dqkv, &dq, b, tokens, 0, h, stride);
                self.scatter_add(&mut dqkv, &dk, b, tokens, 1, h, stride);
                self.scatter_add(&mut dqkv, &dv, b, tokens, 2, h, stride);
            }
        }
        let mut shape = g.shape().to_vec();
        *shape.last_mut().unwrap() = stride;
        let dqkv = Tensor::from_vec(&shape, dqkv).expect("shape");
        self.qkv
            .backward(ps, grads, &cache.qkv_cache, &dqkv, true)
            .expect("input grad")
    }
}
