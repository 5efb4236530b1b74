//! Frozen ViT-style encoder with per-layer adapter insertion points and a
//! trainable linear task head.
//!
//! Token grids stay 2-D (`[batch, grid_h, grid_w, channels]`) throughout so the
//! convolutional adapters need no reshaping.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::adapter::{AdapterCache, AdapterModule};
use crate::error::{Error, Result};
use crate::nn::{gelu, gelu_grad, Attention, AttentionCache, LayerNorm, Linear, LinearCache, LnCache};
use crate::params::{identity_matrix, normal_tensor, trunc_normal_tensor, Ctx, Grads, ParamId, ParamStore, Role};
use crate::tensor::Tensor;

/// `[batch, grid_h, grid_w, embed_dim]` token grid.
pub type TokenGrid = Tensor;
/// `[batch, grid_h, grid_w, channels]` encoder or head features.
pub type FeatureMap = Tensor;

pub const PATCH_GROUP: &str = "patch_embed";
pub const TASK_HEAD_GROUP: &str = "task_head";

pub fn layer_group(i: usize) -> alloc::string::String {
    format!("layers.{i}")
}

/// A single `height x width x 3` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor(Tensor);

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_tensor(Tensor::from_vec(&[height, width, 3], data)?)
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        if t.shape().len() != 3 || t.shape()[2] != 3 || t.shape()[0] == 0 || t.shape()[1] == 0 {
            return Err(Error::ShapeMismatch {
                left: t.shape().to_vec(),
                right: alloc::vec![0, 0, 3],
            });
        }
        t.ensure_finite("image")?;
        if t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::OutOfRange("image"));
        }
        Ok(Self(t))
    }

    pub fn height(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width() + x) * 3;
        let d = self.0.data();
        [d[i], d[i + 1], d[i + 2]]
    }

    /// `[1, h, w, 3]` view for batching.
    pub fn to_batch(&self) -> Tensor {
        let (h, w) = (self.height(), self.width());
        self.0.clone().reshape(&[1, h, w, 3]).expect("shape")
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapterPlacement {
    /// Adapter wraps each layer's input.
    Pre,
    /// Adapter wraps each layer's output.
    Post,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    /// Side length the positional table is laid out for.
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_ratio: usize,
    pub task_dim: usize,
    pub placement: AdapterPlacement,
    pub init_std: f64,
}

impl BackboneConfig {
    /// Two layers, 64 channels, 8x8 patches on 64x64 inputs.
    pub fn desk() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            embed_dim: 64,
            num_layers: 2,
            num_heads: 4,
            mlp_ratio: 4,
            task_dim: 64,
            placement: AdapterPlacement::Pre,
            init_std: 0.02,
        }
    }

    /// ViT-H sized encoder with 14x14 patches.
    pub fn vit_h() -> Self {
        Self {
            image_size: 1024,
            patch_size: 14,
            embed_dim: 1280,
            num_layers: 32,
            num_heads: 16,
            mlp_ratio: 4,
            task_dim: 1280,
            placement: AdapterPlacement::Pre,
            init_std: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.embed_dim == 0 || self.num_heads == 0 || self.task_dim == 0 {
            return Err(Error::Config("sizes must be positive".into()));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if self.image_size % self.patch_size != 0 {
            return Err(Error::Config("image_size must be a multiple of patch_size".into()));
        }
        Ok(())
    }

    pub fn grid(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let p = self.patch_size;
        if height == 0 || width == 0 || height % p != 0 || width % p != 0 {
            return Err(Error::DimensionMismatch {
                height,
                width,
                patch: p,
            });
        }
        Ok((height / p, width / p))
    }
}

/// Linear projection of non-overlapping patches plus a positional table.
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    pub proj: Linear,
    pub pos: ParamId,
    pub patch: usize,
    pub pos_grid: usize,
}

impl PatchEmbed {
    pub fn param_count(cfg: &BackboneConfig) -> usize {
        let g = cfg.image_size / cfg.patch_size;
        Linear::param_count(cfg.patch_size * cfg.patch_size * 3, cfg.embed_dim) + g * g * cfg.embed_dim
    }
}

/// Pre-norm transformer block: `x + attn(ln1(x))`, then `h + mlp(ln2(h))`.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    ln1: LnCache,
    attn: AttentionCache,
    ln2: LnCache,
    fc1: LinearCache,
    pre_gelu: Tensor,
    fc2: LinearCache,
}

impl TransformerLayer {
    fn new<R: Rng + ?Sized>(ps: &mut ParamStore, i: usize, cfg: &BackboneConfig, rng: &mut R) -> Self {
        let g = layer_group(i);
        let c = cfg.embed_dim;
        let hidden = c * cfg.mlp_ratio;
        let f = Role::Frozen;
        let std = cfg.init_std;
        let ln1 = LayerNorm::new(ps, &format!("{g}.ln1"), &g, f, c);
        let attn = Attention::new(ps, &format!("{g}.attn"), &g, f, c, cfg.num_heads, std, rng);
        let ln2 = LayerNorm::new(ps, &format!("{g}.ln2"), &g, f, c);
        let fc1 = Linear::from_weight(
            ps,
            &format!("{g}.fc1"),
            &g,
            f,
            trunc_normal_tensor(rng, &[c, hidden], std),
        );
        let fc2 = Linear::from_weight(
            ps,
            &format!("{g}.fc2"),
            &g,
            f,
            trunc_normal_tensor(rng, &[hidden, c], std),
        );
        Self {
            ln1,
            attn,
            ln2,
            fc1,
            fc2,
        }
    }

    pub fn param_count(cfg: &BackboneConfig) -> usize {
        let c = cfg.embed_dim;
        let hidden = c * cfg.mlp_ratio;
        2 * LayerNorm::param_count(c)
            + Attention::param_count(c)
            + Linear::param_count(c, hidden)
            + Linear::param_count(hidden, c)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<(Tensor, LayerCache)> {
        let (n1, ln1) = self.ln1.forward(ps, x);
        let (a, attn) = self.attn.forward(ps, &n1)?;
        let mut h = x.clone();
        h.add_assign(&a);
        let (n2, ln2) = self.ln2.forward(ps, &h);
        let (pre_gelu, fc1) = self.fc1.forward(ps, &n2)?;
        let act = pre_gelu.map(gelu);
        let (m, fc2) = self.fc2.forward(ps, &act)?;
        h.add_assign(&m);
        Ok((
            h,
            LayerCache {
                ln1,
                attn,
                ln2,
                fc1,
                pre_gelu,
                fc2,
            },
        ))
    }

    pub fn backward(&self, ps: &ParamStore, grads: &mut Grads, cache: &LayerCache, g: &Tensor) -> Tensor {
        let dact = self.fc2.backward(ps, grads, &cache.fc2, g, true).unwrap();
        let mut dpre = dact;
        for (d, &z) in dpre.data_mut().iter_mut().zip(cache.pre_gelu.data()) {
            *d *= gelu_grad(z);
        }
        let dn2 = self.fc1.backward(ps, grads, &cache.fc1, &dpre, true).unwrap();
        let mut dh = self.ln2.backward(ps, grads, &cache.ln2, &dn2);
        dh.add_assign(g);
        let dn1 = self.attn.backward(ps, grads, &cache.attn, &dh);
        let mut dx = self.ln1.backward(ps, grads, &cache.ln1, &dn1);
        dx.add_assign(&dh);
        dx
    }
}

#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub patch: PatchEmbed,
    pub layers: Vec<TransformerLayer>,
    pub task_head: Linear,
}

#[derive(Debug, Clone)]
pub struct EncodeCache {
    adapters: Vec<(AdapterCache, Option<LayerCache>)>,
    layers: Vec<LayerCache>,
    head: LinearCache,
}

impl Backbone {
    /// Builds the encoder. Patch embedding and transformer layers are frozen;
    /// the task head is trainable and identity-initialised when dims match.
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, config: BackboneConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let p = config.patch_size;
        let c = config.embed_dim;
        let fan_in = p * p * 3;
        let proj = Linear::new(
            ps,
            "patch_embed.proj",
            PATCH_GROUP,
            Role::Frozen,
            fan_in,
            c,
            1.0 / libm::sqrt(fan_in as f64),
            rng,
        );
        let g = config.image_size / p;
        let pos = ps.add(
            "patch_embed.pos".into(),
            PATCH_GROUP,
            Role::Frozen,
            trunc_normal_tensor(rng, &[g, g, c], config.init_std),
        );
        let patch = PatchEmbed {
            proj,
            pos,
            patch: p,
            pos_grid: g,
        };
        let layers = (0..config.num_layers)
            .map(|i| TransformerLayer::new(ps, i, &config, rng))
            .collect();
        let head_w = if config.task_dim == c {
            identity_matrix(c)
        } else {
            normal_tensor(rng, &[c, config.task_dim], 1.0 / libm::sqrt(c as f64))
        };
        let task_head = Linear::from_weight(ps, "task_head", TASK_HEAD_GROUP, Role::Trainable, head_w);
        Ok(Self {
            config,
            patch,
            layers,
            task_head,
        })
    }

    /// Splits `[b, H, W, 3]` images into patches and projects them.
    pub fn patch_embed(&self, ps: &ParamStore, images: &Tensor) -> Result<TokenGrid> {
        let (b, h, w, ch) = images.dims4();
        if ch != 3 {
            return Err(Error::ChannelMismatch { expected: 3, got: ch });
        }
        let (gh, gw) = self.config.grid(h, w)?;
        let p = self.patch.patch;
        let k = p * p * 3;
        let mut patches = Tensor::zeros(&[b, gh, gw, k]);
        let src = images.data();
        {
            let dst = patches.data_mut();
            for bi in 0..b {
                for ty in 0..gh {
                    for tx in 0..gw {
                        let base = ((bi * gh + ty) * gw + tx) * k;
                        for py in 0..p {
                            let s = ((bi * h + ty * p + py) * w + tx * p) * 3;
                            dst[base + py * p * 3..base + (py + 1) * p * 3].copy_from_slice(&src[s..s + p * 3]);
                        }
                    }
                }
            }
        }
        let mut tokens = self.patch.proj.apply(ps, &patches)?;
        let c = self.config.embed_dim;
        let pos = ps.get(self.patch.pos).data();
        let pg = self.patch.pos_grid;
        for bi in 0..b {
            for ty in 0..gh {
                // nearest resampling of the positional table for other grid sizes
                let sy = ty * pg / gh;
                for tx in 0..gw {
                    let sx = tx * pg / gw;
                    let t = ((bi * gh + ty) * gw + tx) * c;
                    let s = (sy * pg + sx) * c;
                    for (a, v) in tokens.data_mut()[t..t + c].iter_mut().zip(&pos[s..s + c]) {
                        *a += v;
                    }
                }
            }
        }
        Ok(tokens)
    }

    pub fn task_head(&self, ps: &ParamStore, tokens: &TokenGrid) -> Result<FeatureMap> {
        tokens.ensure_finite("tokens")?;
        self.task_head.apply(ps, tokens)
    }

    /// Runs the frozen layers interleaved with `adapters` and maps the result
    /// through the task head.
    pub fn encode(
        &self,
        ps: &ParamStore,
        ctx: &mut Ctx,
        images: &Tensor,
        adapters: &[AdapterModule],
    ) -> Result<(FeatureMap, EncodeCache)> {
        if adapters.len() != self.layers.len() {
            return Err(Error::AdapterCount {
                expected: self.layers.len(),
                got: adapters.len(),
            });
        }
        let mut x = self.patch_embed(ps, images)?;
        let mut adapter_caches = Vec::with_capacity(adapters.len());
        let mut layer_caches = Vec::with_capacity(adapters.len());
        for (layer, adapter) in self.layers.iter().zip(adapters) {
            match self.config.placement {
                AdapterPlacement::Pre => {
                    let (a, ac) = adapter.forward(ps, ctx, &x)?;
                    let (y, lc) = layer.forward(ps, &a)?;
                    adapter_caches.push((ac, None));
                    layer_caches.push(lc);
                    x = y;
                }
                AdapterPlacement::Post => {
                    let (y, lc) = layer.forward(ps, &x)?;
                    let (a, ac) = adapter.forward(ps, ctx, &y)?;
                    adapter_caches.push((ac, None));
                    layer_caches.push(lc);
                    x = a;
                }
            }
        }
        let (f, head) = self.task_head.forward(ps, &x)?;
        f.ensure_finite("features")?;
        Ok((
            f,
            EncodeCache {
                adapters: adapter_caches,
                layers: layer_caches,
                head,
            },
        ))
    }

    /// Back-propagates feature gradients into the task head and adapters.
    /// Frozen layers only pass gradients through.
    pub fn backward(
        &self,
        ps: &ParamStore,
        grads: &mut Grads,
        cache: &EncodeCache,
        adapters: &[AdapterModule],
        grad_features: &FeatureMap,
    ) {
        let mut g = self
            .task_head
            .backward(ps, grads, &cache.head, grad_features, true)
            .unwrap();
        let n = self.layers.len();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let adapter = &adapters[i];
            let ac = &cache.adapters[i].0;
            let lc = &cache.layers[i];
            match self.config.placement {
                AdapterPlacement::Pre => {
                    let da = layer.backward(ps, grads, lc, &g);
                    match adapter.backward(ps, grads, ac, &da, i > 0) {
                        Some(dx) => g = dx,
                        None => return,
                    }
                }
                AdapterPlacement::Post => {
                    let dy = adapter.backward(ps, grads, ac, &g, true).unwrap();
                    if i == 0 {
                        return;
                    }
                    g = layer.backward(ps, grads, lc, &dy);
                }
            }
        }
    }
}

/// Parameter counts split by role.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreezeReport {
    pub frozen: usize,
    pub trainable: usize,
}

impl FreezeReport {
    pub fn fraction(&self) -> f64 {
        let total = self.frozen + self.trainable;
        if total == 0 {
            0.0
        } else {
            self.trainable as f64 / total as f64
        }
    }
}

pub fn freeze_report(ps: &ParamStore) -> FreezeReport {
    FreezeReport {
        frozen: ps.count(Role::Frozen),
        trainable: ps.count(Role::Trainable),
    }
}
