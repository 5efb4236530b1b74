use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::params::{Ctx, Grads, ParamId, ParamStore, Role};
use crate::tensor::Tensor;

/// Batch normalisation over every non-channel axis. Uses batch statistics in
/// training mode and running statistics in evaluation mode. Initialised to
/// identity (scale 1, shift 0, running mean 0, running variance 1).
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl BatchNorm {
    pub fn new(ps: &mut ParamStore, name: &str, group: &str, channels: usize) -> Self {
        let t = Role::Trainable;
        Self {
            gamma: ps.add(format!("{name}.gamma"), group, t, Tensor::filled(&[channels], 1.0)),
            beta: ps.add(format!("{name}.beta"), group, t, Tensor::zeros(&[channels])),
            running_mean: ps.add(
                format!("{name}.running_mean"),
                group,
                Role::Buffer,
                Tensor::zeros(&[channels]),
            ),
            running_var: ps.add(
                format!("{name}.running_var"),
                group,
                Role::Buffer,
                Tensor::filled(&[channels], 1.0),
            ),
            channels,
            eps: 1e-5,
        }
    }

    pub fn param_count(channels: usize) -> usize {
        2 * channels
    }

    pub fn forward(&self, ps: &ParamStore, ctx: &mut Ctx, x: &Tensor) -> (Tensor, BnCache) {
        let c = self.channels;
        assert_eq!(x.channels(), c);
        let rows = x.rows();
        let (mean, var, batch_stats) = if ctx.is_train() {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for row in x.data().chunks_exact(c) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            for row in x.data().chunks_exact(c) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= rows as f64);
            let unbias = if rows > 1 { rows as f64 / (rows - 1) as f64 } else { 1.0 };
            ctx.record_stats(
                self.running_mean,
                self.running_var,
                mean.clone(),
                var.iter().map(|v| v * unbias).collect(),
            );
            (mean, var, true)
        } else {
            (
                ps.get(self.running_mean).data().to_vec(),
                ps.get(self.running_var).data().to_vec(),
                false,
            )
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.eps)).collect();
        let gamma = ps.get(self.gamma).data();
        let beta = ps.get(self.beta).data();
        let mut x_hat = x.clone();
        let mut y = x.clone();
        for (xh, yr) in x_hat
            .data_mut()
            .chunks_exact_mut(c)
            .zip(y.data_mut().chunks_exact_mut(c))
        {
            for j in 0..c {
                let n = (xh[j] - mean[j]) * inv_std[j];
                xh[j] = n;
                yr[j] = gamma[j] * n + beta[j];
            }
        }
        (
            y,
            BnCache {
                x_hat,
                inv_std,
                batch_stats,
            },
        )
    }

    pub fn backward(&self, ps: &ParamStore, grads: &mut Grads, cache: &BnCache, g: &Tensor) -> Tensor {
        let c = self.channels;
        let rows = g.rows() as f64;
        let gamma = ps.get(self.gamma).data();
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (gr, xr) in g.data().chunks_exact(c).zip(cache.x_hat.data().chunks_exact(c)) {
            for j in 0..c {
                sum_g[j] += gr[j];
                sum_gx[j] += gr[j] * xr[j];
            }
        }
        if grads.tracks(self.gamma) {
            for (a, b) in grads.slot(self.gamma).iter_mut().zip(&sum_gx) {
                *a += b;
            }
        }
        if grads.tracks(self.beta) {
            for (a, b) in grads.slot(self.beta).iter_mut().zip(&sum_g) {
                *a += b;
            }
        }
        let mut dx = g.clone();
        for (dr, xr) in dx
            .data_mut()
            .chunks_exact_mut(c)
            .zip(cache.x_hat.data().chunks_exact(c))
        {
            for j in 0..c {
                let scale = gamma[j] * cache.inv_std[j];
                dr[j] = if cache.batch_stats {
                    scale * (dr[j] - sum_g[j] / rows - xr[j] * sum_gx[j] / rows)
                } else {
                    scale * dr[j]
                };
            }
        }
        dx
    }
}

/// Layer normalisation over the trailing axis.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, group: &str, role: Role, dim: usize) -> Self {
        Self {
            gamma: ps.add(format!("{name}.gamma"), group, role, Tensor::filled(&[dim], 1.0)),
            beta: ps.add(format!("{name}.beta"), group, role, Tensor::zeros(&[dim])),
            dim,
            eps: 1e-6,
        }
    }

    pub fn param_count(dim: usize) -> usize {
        2 * dim
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> (Tensor, LnCache) {
        let d = self.dim;
        let gamma = ps.get(self.gamma).data();
        let beta = ps.get(self.beta).data();
        let mut x_hat = x.clone();
        let mut y = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for (xh, yr) in x_hat
            .data_mut()
            .chunks_exact_mut(d)
            .zip(y.data_mut().chunks_exact_mut(d))
        {
            let mean = xh.iter().sum::<f64>() / d as f64;
            let var = xh.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / libm::sqrt(var + self.eps);
            inv_std.push(is);
            for j in 0..d {
                xh[j] = (xh[j] - mean) * is;
                yr[j] = gamma[j] * xh[j] + beta[j];
            }
        }
        (y, LnCache { x_hat, inv_std })
    }

    pub fn backward(&self, ps: &ParamStore, grads: &mut Grads, cache: &LnCache, g: &Tensor) -> Tensor {
        let d = self.dim;
        let gamma = ps.get(self.gamma).data();
        if grads.tracks(self.gamma) {
            let mut dg = vec![0.0; d];
            let mut db = vec![0.0; d];
            for (gr, xr) in g.data().chunks_exact(d).zip(cache.x_hat.data().chunks_exact(d)) {
                for j in 0..d {
                    dg[j] += gr[j] * xr[j];
                    db[j] += gr[j];
                }
            }
            for (a, b) in grads.slot(self.gamma).iter_mut().zip(&dg) {
                *a += b;
            }
            for (a, b) in grads.slot(self.beta).iter_mut().zip(&db) {
                *a += b;
            }
        }
        let mut dx = g.clone();
        for ((dr, xr), is) in dx
            .data_mut()
            .chunks_exact_mut(d)
            .zip(cache.x_hat.data().chunks_exact(d))
            .zip(&cache.inv_std)
        {
            let mut mean_g = 0.0;
            let mut mean_gx = 0.0;
            for j in 0..d {
                let gj = dr[j] * gamma[j];
                mean_g += gj;
                mean_gx += gj * xr[j];
            }
            mean_g /= d as f64;
            mean_gx /= d as f64;
            for j in 0..d {
                dr[j] = is * (dr[j] * gamma[j] - mean_g - xr[j] * mean_gx);
            }
        }
        dx
    }
}
