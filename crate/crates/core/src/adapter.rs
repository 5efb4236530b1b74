//! Multiscale adapter: parallel convolution branches with growing kernel size
//! and dilation, a 1x1 merge and a 1x1 residual projection.
//!
//! ```text
//! branch_i(x) = post_i(pre_i(entry_i(x)))
//! out         = merge(concat(branch_f, branch_g, branch_h)) + residual(x)
//! ```
//!
//! Every convolution except `residual` is followed by batch norm and ReLU.
//! `residual` is a plain 1x1 convolution initialised to identity.

use alloc::format;
use alloc::string::ToString;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcheck;
use crate::nn::{Conv2d, ConvBlock, ConvBlockCache, ConvCache};
use crate::params::{identity_matrix, Ctx, Grads, Mode, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdapterVariant {
    /// Branches f, g, h with dilations 1, 3, 5.
    Full,
    /// Full layout with every dilation forced to 1.
    B,
    /// Without the 3x3 branch (g).
    C,
    /// Without the 1x1 branch (f).
    D,
    /// Pass-through with no parameters.
    Identity,
}

impl AdapterVariant {
    pub const ALL: [AdapterVariant; 5] = [Self::Full, Self::B, Self::C, Self::D, Self::Identity];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::B => "b",
            Self::C => "c",
            Self::D => "d",
            Self::Identity => "identity",
        }
    }
}

impl fmt::Display for AdapterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdapterVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "a" => Ok(Self::Full),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            "d" => Ok(Self::D),
            "identity" | "none" => Ok(Self::Identity),
            other => Err(Error::UnknownVariant(other.to_string())),
        }
    }
}

/// Which of the three branches a variant keeps, in concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    F,
    G,
    H,
}

impl BranchKind {
    fn index(self) -> usize {
        match self {
            Self::F => 0,
            Self::G => 1,
            Self::H => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterConfig {
    pub variant: AdapterVariant,
    pub in_channels: usize,
    pub mid_channels: usize,
    pub dilation_rates: [usize; 3],
    pub pre_kernels: [usize; 3],
    pub post_kernel: usize,
}

impl AdapterConfig {
    pub fn new(variant: AdapterVariant, in_channels: usize, mid_channels: usize) -> Self {
        Self {
            variant,
            in_channels,
            mid_channels,
            dilation_rates: [1, 3, 5],
            pre_kernels: [1, 3, 5],
            post_kernel: 3,
        }
    }

    pub fn branches(&self) -> &'static [BranchKind] {
        match self.variant {
            AdapterVariant::Full | AdapterVariant::B => &[BranchKind::F, BranchKind::G, BranchKind::H],
            AdapterVariant::C => &[BranchKind::F, BranchKind::H],
            AdapterVariant::D => &[BranchKind::G, BranchKind::H],
            AdapterVariant::Identity => &[],
        }
    }

    pub fn dilation(&self, kind: BranchKind) -> usize {
        if self.variant == AdapterVariant::B {
            1
        } else {
            self.dilation_rates[kind.index()]
        }
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub kind: BranchKind,
    pub entry: ConvBlock,
    pub pre: ConvBlock,
    pub post: ConvBlock,
}

#[derive(Debug, Clone)]
pub struct AdapterModule {
    pub config: AdapterConfig,
    pub branches: Vec<Branch>,
    pub merge: Option<ConvBlock>,
    pub residual: Option<Conv2d>,
}

#[derive(Debug, Clone)]
pub struct AdapterCache {
    branches: Vec<[ConvBlockCache; 3]>,
    merge: Option<ConvBlockCache>,
    residual: Option<ConvCache>,
}

impl AdapterModule {
    pub fn build<R: Rng + ?Sized>(ps: &mut ParamStore, group: &str, config: AdapterConfig, rng: &mut R) -> Self {
        let c = config.in_channels;
        let m = config.mid_channels;
        let mut branches = Vec::new();
        for &kind in config.branches() {
            let i = kind.index();
            let name = format!("{group}.branch_{}", ["f", "g", "h"][i]);
            branches.push(Branch {
                kind,
                entry: ConvBlock::new(ps, &format!("{name}.entry"), group, c, m, 1, 1, rng),
                pre: ConvBlock::new(ps, &format!("{name}.pre"), group, m, m, config.pre_kernels[i], 1, rng),
                post: ConvBlock::new(
                    ps,
                    &format!("{name}.post"),
                    group,
                    m,
                    m,
                    config.post_kernel,
                    config.dilation(kind),
                    rng,
                ),
            });
        }
        let (merge, residual) = if branches.is_empty() {
            (None, None)
        } else {
            let merge = ConvBlock::new(ps, &format!("{group}.merge"), group, branches.len() * m, c, 1, 1, rng);
            let residual = Conv2d::new(ps, &format!("{group}.residual"), group, c, c, 1, 1, rng);
            *ps.get_mut(residual.weight) = identity_matrix(c);
            (Some(merge), Some(residual))
        };
        Self {
            config,
            branches,
            merge,
            residual,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.branches.is_empty()
    }

    /// All parameter ids owned by this adapter, in construction order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        let mut block = |b: &ConvBlock| {
            ids.extend([b.conv.weight, b.conv.bias, b.bn.gamma, b.bn.beta]);
        };
        for br in &self.branches {
            block(&br.entry);
            block(&br.pre);
            block(&br.post);
        }
        if let Some(m) = &self.merge {
            block(m);
        }
        if let Some(r) = &self.residual {
            ids.extend([r.weight, r.bias]);
        }
        ids
    }

    pub fn param_count(&self, ps: &ParamStore) -> usize {
        self.param_ids().iter().map(|&id| ps.get(id).len()).sum()
    }

    pub fn forward(&self, ps: &ParamStore, ctx: &mut Ctx, x: &Tensor) -> Result<(Tensor, AdapterCache)> {
        if x.channels() != self.config.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.config.in_channels,
                got: x.channels(),
            });
        }
        if self.is_identity() {
            return Ok((
                x.clone(),
                AdapterCache {
                    branches: Vec::new(),
                    merge: None,
                    residual: None,
                },
            ));
        }
        let (b, h, w, _) = x.dims4();
        let m = self.config.mid_channels;
        let nb = self.branches.len();
        let mut concat = Tensor::zeros(&[b, h, w, nb * m]);
        let mut caches = Vec::with_capacity(nb);
        for (bi, br) in self.branches.iter().enumerate() {
            let (e, ce) = br.entry.forward(ps, ctx, x)?;
            let (p, cp) = br.pre.forward(ps, ctx, &e)?;
            let (o, co) = br.post.forward(ps, ctx, &p)?;
            for (dst, src) in concat.data_mut().chunks_exact_mut(nb * m).zip(o.data().chunks_exact(m)) {
                dst[bi * m..(bi + 1) * m].copy_from_slice(src);
            }
            caches.push([ce, cp, co]);
        }
        let merge = self.merge.as_ref().expect("non-identity adapter");
        let residual = self.residual.as_ref().expect("non-identity adapter");
        let (mut out, cm) = merge.forward(ps, ctx, &concat)?;
        let (skip, cr) = residual.forward(ps, x)?;
        out.add_assign(&skip);
        Ok((
            out,
            AdapterCache {
                branches: caches,
                merge: Some(cm),
                residual: Some(cr),
            },
        ))
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        grads: &mut Grads,
        cache: &AdapterCache,
        g: &Tensor,
        need_input: bool,
    ) -> Option<Tensor> {
        if self.is_identity() {
            return need_input.then(|| g.clone());
        }
        let merge = self.merge.as_ref().unwrap();
        let residual = self.residual.as_ref().unwrap();
        let dconcat = merge
            .backward(ps, grads, cache.merge.as_ref().unwrap(), g, true)
            .unwrap();
        let mut dx = residual.backward(ps, grads, cache.residual.as_ref().unwrap(), g, need_input);
        let (b, h, w, _) = g.dims4();
        let m = self.config.mid_channels;
        let nb = self.branches.len();
        for (bi, (br, c)) in self.branches.iter().zip(&cache.branches).enumerate() {
            let mut dout = Tensor::zeros(&[b, h, w, m]);
            for (dst, src) in dout
                .data_mut()
                .chunks_exact_mut(m)
                .zip(dconcat.data().chunks_exact(nb * m))
            {
                dst.copy_from_slice(&src[bi * m..(bi + 1) * m]);
            }
            let dp = br.post.backward(ps, grads, &c[2], &dout, true).unwrap();
            let de = br.pre.backward(ps, grads, &c[1], &dp, true).unwrap();
            let di = br.entry.backward(ps, grads, &c[0], &de, need_input);
            if let (Some(acc), Some(di)) = (dx.as_mut(), di) {
                acc.add_assign(&di);
            }
        }
        dx
    }
}

/// Builds an adapter of the given variant with dims-preserving channels
/// (`mid_channels = in_channels`).
pub fn build_variant<R: Rng + ?Sized>(
    ps: &mut ParamStore,
    group: &str,
    variant: AdapterVariant,
    in_channels: usize,
    rng: &mut R,
) -> AdapterModule {
    AdapterModule::build(ps, group, AdapterConfig::new(variant, in_channels, in_channels), rng)
}

/// Maximum relative error between analytic input and parameter gradients of
/// `sum(adapter(probe))` and central finite differences.
pub fn adapter_gradcheck(module: &AdapterModule, ps: &mut ParamStore, probe: &Tensor, mode: Mode) -> f64 {
    let mut grads = Grads::new(ps);
    let mut ctx = Ctx::new(mode);
    let (out, cache) = module.forward(ps, &mut ctx, probe).expect("forward");
    let ones = Tensor::filled(out.shape(), 1.0);
    let dx = module
        .backward(ps, &mut grads, &cache, &ones, true)
        .expect("input grad");
    let eval = |ps: &ParamStore, x: &Tensor| -> f64 {
        let mut ctx = Ctx::new(mode);
        module.forward(ps, &mut ctx, x).expect("forward").0.sum()
    };
    let input_err = gradcheck::check_input(probe, &dx, gradcheck::DEFAULT_STEP, |x| eval(ps, x));
    let ids = module.param_ids();
    let param_err = gradcheck::check_params(ps, &ids, &grads, gradcheck::DEFAULT_STEP, |ps| eval(ps, probe));
    input_err.max(param_err)
}
