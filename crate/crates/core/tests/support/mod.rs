//! Brute-force reference implementations and the check suites built on them.
//! Shared by the core integration tests and the acceptance target.
#![allow(dead_code)]

use dadf_core::adapter::{AdapterConfig, AdapterModule, AdapterVariant};
use dadf_core::backbone::{AdapterPlacement, BackboneConfig};
use dadf_core::data::{sample_rng, Label};
use dadf_core::heads::{classifier_gradcheck, decoder_gradcheck, Classifier, ClsInput, DecoderConfig, MaskDecoder};
use dadf_core::losses::{cls_loss, dice_loss, overall_loss, seg_loss, LossWeights};
use dadf_core::metrics::{accuracy, auc, iinc, pbca};
use dadf_core::model::{Batch, Dadf, ModelConfig};
use dadf_core::nn::{BatchNorm, Conv2d, ConvBlock, Linear};
use dadf_core::params::{jitter, normal_tensor};
use dadf_core::rga::{
    reconstruction_gradcheck, reconstruction_loss_with, refine_gradcheck, RecData, RecReduction, Rga, RgaConfig,
};
use dadf_core::{gradcheck, Ctx, Mode, ParamId, ParamStore, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOL: f64 = 1e-4;
pub const ORACLE_TOL: f64 = 1e-6;
pub const AUC_TOL: f64 = 1e-9;

pub fn rng(seed: u64) -> ChaCha8Rng {
    sample_rng(seed, 7)
}

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    normal_tensor(rng, shape, 1.0)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn at(t: &Tensor, b: usize, y: usize, x: usize, c: usize) -> f64 {
    let s = t.shape();
    t.data()[((b * s[1] + y) * s[2] + x) * s[3] + c]
}

/// Direct nested-loop dilated convolution with "same" zero padding.
pub fn naive_conv(ps: &ParamStore, conv: &Conv2d, x: &Tensor) -> Tensor {
    let (b, h, w, ci) = x.dims4();
    let k = conv.kernel;
    let d = conv.dilation;
    let pad = (d * (k - 1) / 2) as isize;
    let wt = ps.get(conv.weight).data();
    let bias = ps.get(conv.bias).data();
    let co = conv.out_ch;
    let mut out = Tensor::zeros(&[b, h, w, co]);
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                for o in 0..co {
                    let mut acc = bias[o];
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = y as isize + (ky * d) as isize - pad;
                            let ix = xx as isize + (kx * d) as isize - pad;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for c in 0..ci {
                                let wi = ((ky * k + kx) * ci + c) * co + o;
                                acc += wt[wi] * at(x, bi, iy as usize, ix as usize, c);
                            }
                        }
                    }
                    out.data_mut()[((bi * h + y) * w + xx) * co + o] = acc;
                }
            }
        }
    }
    out
}

/// Evaluation-mode batch norm with running statistics.
pub fn naive_bn_eval(ps: &ParamStore, bn: &BatchNorm, x: &Tensor) -> Tensor {
    let g = ps.get(bn.gamma).data();
    let be = ps.get(bn.beta).data();
    let m = ps.get(bn.running_mean).data();
    let v = ps.get(bn.running_var).data();
    let c = bn.channels;
    let mut out = x.clone();
    for (i, o) in out.data_mut().iter_mut().enumerate() {
        let j = i % c;
        *o = g[j] * (*o - m[j]) / (v[j] + bn.eps).sqrt() + be[j];
    }
    out
}

pub fn naive_block(ps: &ParamStore, block: &ConvBlock, x: &Tensor) -> Tensor {
    naive_bn_eval(ps, &block.bn, &naive_conv(ps, &block.conv, x)).map(|v| v.max(0.0))
}

/// `concat(f, g, h)` through the merge block plus the residual conv, all from
/// the loop oracles above.
pub fn naive_adapter(ps: &ParamStore, module: &AdapterModule, x: &Tensor) -> Tensor {
    if module.is_identity() {
        return x.clone();
    }
    let (b, h, w, _) = x.dims4();
    let m = module.config.mid_channels;
    let outs: Vec<Tensor> = module
        .branches
        .iter()
        .map(|br| {
            let e = naive_block(ps, &br.entry, x);
            let p = naive_block(ps, &br.pre, &e);
            naive_block(ps, &br.post, &p)
        })
        .collect();
    let nb = outs.len();
    let mut cat = Tensor::zeros(&[b, h, w, nb * m]);
    for r in 0..b * h * w {
        for (bi, o) in outs.iter().enumerate() {
            for j in 0..m {
                cat.data_mut()[r * nb * m + bi * m + j] = o.data()[r * m + j];
            }
        }
    }
    let mut out = naive_block(ps, module.merge.as_ref().unwrap(), &cat);
    out.add_assign(&naive_conv(ps, module.residual.as_ref().unwrap(), x));
    out
}

/// Channel map of a conv on a single-pixel grid: only the centre tap sees
/// data, so the conv is `W_centre^T v + b`.
fn centre_affine(ps: &ParamStore, conv: &Conv2d, v: &[f64]) -> Vec<f64> {
    let k = conv.kernel;
    let centre = (k / 2) * k + k / 2;
    let ci = conv.in_ch;
    let co = conv.out_ch;
    let wt = ps.get(conv.weight).data();
    let mut out = ps.get(conv.bias).data().to_vec();
    for (o, acc) in out.iter_mut().enumerate() {
        for (c, &vc) in v.iter().enumerate() {
            *acc += wt[(centre * ci + c) * co + o] * vc;
        }
    }
    out
}

fn centre_block(ps: &ParamStore, block: &ConvBlock, v: &[f64]) -> Vec<f64> {
    let y = centre_affine(ps, &block.conv, v);
    let bn = &block.bn;
    let g = ps.get(bn.gamma).data();
    let be = ps.get(bn.beta).data();
    let m = ps.get(bn.running_mean).data();
    let var = ps.get(bn.running_var).data();
    y.iter()
        .enumerate()
        .map(|(j, &z)| (g[j] * (z - m[j]) / (var[j] + bn.eps).sqrt() + be[j]).max(0.0))
        .collect()
}

/// Dense matrix composition of the adapter on a 1x1 grid.
pub fn single_pixel_adapter(ps: &ParamStore, module: &AdapterModule, v: &[f64]) -> Vec<f64> {
    let mut cat = Vec::new();
    for br in &module.branches {
        let e = centre_block(ps, &br.entry, v);
        let p = centre_block(ps, &br.pre, &e);
        cat.extend(centre_block(ps, &br.post, &p));
    }
    let mut out = centre_block(ps, module.merge.as_ref().unwrap(), &cat);
    for (o, r) in out
        .iter_mut()
        .zip(centre_affine(ps, module.residual.as_ref().unwrap(), v))
    {
        *o += r;
    }
    out
}

/// Pixelwise affine map `v W + b` over the channel axis.
pub fn naive_linear(ps: &ParamStore, lin: &Linear, x: &Tensor) -> Tensor {
    let ci = lin.in_dim;
    let co = lin.out_dim;
    let w = ps.get(lin.weight).data();
    let b = ps.get(lin.bias).data();
    let rows = x.len() / ci;
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = co;
    let mut out = Tensor::zeros(&shape);
    for r in 0..rows {
        for o in 0..co {
            let mut acc = b[o];
            for c in 0..ci {
                acc += x.data()[r * ci + c] * w[c * co + o];
            }
            out.data_mut()[r * co + o] = acc;
        }
    }
    out
}

/// `F + softmax_spatial(phi(S)) * phi(F)` with explicit loops.
pub fn naive_refine(ps: &ParamStore, rga: &Rga, f: &Tensor, s: &Tensor) -> Tensor {
    let (b, h, w, c) = f.dims4();
    let es = naive_linear(ps, &rga.enhancer, s);
    let ef = naive_linear(ps, &rga.enhancer, f);
    let mut out = f.clone();
    for bi in 0..b {
        for ch in 0..c {
            let mut mx = f64::NEG_INFINITY;
            for y in 0..h {
                for x in 0..w {
                    mx = mx.max(at(&es, bi, y, x, ch));
                }
            }
            let mut z = 0.0;
            for y in 0..h {
                for x in 0..w {
                    z += (at(&es, bi, y, x, ch) - mx).exp();
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let a = (at(&es, bi, y, x, ch) - mx).exp() / z;
                    let k = ((bi * h + y) * w + x) * c + ch;
                    out.data_mut()[k] += a * ef.data()[k];
                }
            }
        }
    }
    out
}

/// Sum of per-sample L1 norms over the selected samples, divided by their count.
pub fn naive_rec(f: &Tensor, g: &Tensor, labels: &[Label], data: RecData) -> f64 {
    let per = f.len() / labels.len();
    let mut total = 0.0;
    let mut m = 0;
    for (i, &l) in labels.iter().enumerate() {
        if !data.includes(l) {
            continue;
        }
        m += 1;
        for k in i * per..(i + 1) * per {
            total += (g.data()[k] - f.data()[k]).abs();
        }
    }
    if m == 0 {
        0.0
    } else {
        total / m as f64
    }
}

fn naive_bce(z: f64, y: f64) -> f64 {
    let p = 1.0 / (1.0 + (-z).exp());
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub fn naive_seg(logits: &Tensor, gt: &Tensor) -> f64 {
    let b = logits.shape()[0];
    let per = logits.len() / b;
    let mut total = 0.0;
    for bi in 0..b {
        let mut s = 0.0;
        for k in bi * per..(bi + 1) * per {
            s += naive_bce(logits.data()[k], gt.data()[k]);
        }
        total += s / per as f64;
    }
    total / b as f64
}

pub fn naive_cls(logits: &[f64], labels: &[Label]) -> f64 {
    let mut s = 0.0;
    for (&z, &l) in logits.iter().zip(labels) {
        s += naive_bce(z, if l == Label::Fake { 1.0 } else { 0.0 });
    }
    s / logits.len() as f64
}

pub fn naive_pbca(pred: &[f64], gt: &[f64]) -> f64 {
    let mut hits = 0;
    for i in 0..pred.len() {
        let p = if pred[i] >= 0.5 { 1.0 } else { 0.0 };
        if p == gt[i] {
            hits += 1;
        }
    }
    100.0 * hits as f64 / pred.len() as f64
}

pub fn naive_accuracy(scores: &[f64], labels: &[Label]) -> f64 {
    let mut hits = 0;
    for i in 0..scores.len() {
        let prob = 1.0 / (1.0 + (-scores[i]).exp());
        let predicted = if prob >= 0.5 { Label::Fake } else { Label::Real };
        if predicted == labels[i] {
            hits += 1;
        }
    }
    100.0 * hits as f64 / scores.len() as f64
}

/// Probability that a random fake outscores a random real, ties counting half.
pub fn pairwise_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == Label::Fake && labels[j] == Label::Real {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    100.0 * wins / pairs
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    let mut l: Vec<Label> = (0..n)
        .map(|_| if rng.random::<bool>() { Label::Fake } else { Label::Real })
        .collect();
    l[0] = Label::Real;
    l[n - 1] = Label::Fake;
    l
}

/// Adapter with every trainable tensor and BN running statistic perturbed so
/// no parameter sits at its initial symmetric value.
pub fn jittered_adapter(variant: AdapterVariant, c: usize, m: usize, seed: u64) -> (ParamStore, AdapterModule) {
    let mut ps = ParamStore::new();
    let mut r = rng(seed);
    let module = AdapterModule::build(&mut ps, "adapter", AdapterConfig::new(variant, c, m), &mut r);
    let ids: Vec<ParamId> = module.param_ids();
    jitter(&mut ps, &ids, 0.1, &mut r);
    let mut stats = Vec::new();
    let mut bns = Vec::new();
    for br in &module.branches {
        bns.extend([&br.entry.bn, &br.pre.bn, &br.post.bn]);
    }
    bns.extend(module.merge.iter().map(|m| &m.bn));
    for bn in bns {
        stats.push((bn.running_mean, bn.running_var));
    }
    for (mean, var) in stats {
        jitter(&mut ps, &[mean], 0.1, &mut r);
        for v in ps.get_mut(var).data_mut() {
            *v = 0.5 + r.random::<f64>();
        }
    }
    (ps, module)
}

pub const ADAPTER_VARIANTS: [AdapterVariant; 4] = [
    AdapterVariant::Full,
    AdapterVariant::B,
    AdapterVariant::C,
    AdapterVariant::D,
];

/// Tiny end-to-end configuration: 8x8 images, 4x4 patches, one layer.
pub fn tiny_config() -> ModelConfig {
    let mut cfg = ModelConfig::desk();
    cfg.backbone = BackboneConfig {
        image_size: 8,
        patch_size: 4,
        embed_dim: 8,
        num_layers: 1,
        num_heads: 2,
        mlp_ratio: 2,
        task_dim: 8,
        placement: AdapterPlacement::Pre,
        init_std: 0.2,
    };
    cfg.adapter_mid_channels = Some(2);
    cfg.decoder = DecoderConfig {
        stages: 2,
        channels: vec![4, 4],
    };
    // noise large enough that |F_gau - F| stays away from its kink
    cfg.rga = RgaConfig {
        noise_variance: 1e-2,
        ..RgaConfig::default()
    };
    cfg.rec_data = RecData::Both;
    cfg
}

pub fn tiny_batch(seed: u64) -> Batch {
    let mut r = rng(seed);
    let mut images = Tensor::zeros(&[2, 8, 8, 3]);
    for v in images.data_mut() {
        *v = 0.2 + 0.6 * r.random::<f64>();
    }
    let mut masks = Tensor::zeros(&[2, 8, 8, 1]);
    for (i, v) in masks.data_mut().iter_mut().enumerate() {
        *v = if i >= 64 && (i % 8) < 4 { 1.0 } else { 0.0 };
    }
    Batch {
        images,
        masks,
        labels: vec![Label::Real, Label::Fake],
        indices: vec![0, 1],
    }
}

/// One named outcome with the measured worst value.
pub struct Outcome {
    pub name: String,
    pub value: f64,
    pub pass: bool,
}

impl Outcome {
    fn below(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            pass: value < tol,
        }
    }

    fn within(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            pass: value <= tol,
        }
    }

    fn exact(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            pass: value == 0.0,
        }
    }
}

pub fn adapter_gradients() -> Vec<Outcome> {
    let mut out = Vec::new();
    for (i, v) in ADAPTER_VARIANTS.into_iter().enumerate() {
        let (mut ps, module) = jittered_adapter(v, 8, 4, 10 + i as u64);
        let probe = randn(&mut rng(20 + i as u64), &[1, 4, 4, 8]);
        let err = dadf_core::adapter::adapter_gradcheck(&module, &mut ps, &probe, Mode::Eval);
        out.push(Outcome::below(format!("adapter {v} 4x4x8"), err, GRAD_TOL));
    }
    out
}

pub fn rga_gradients() -> Vec<Outcome> {
    let mut out = Vec::new();
    let mut ps = ParamStore::new();
    let rga = Rga::new(&mut ps, RgaConfig::default(), 8).unwrap();
    let mut r = rng(30);
    jitter(&mut ps, &[rga.enhancer.weight, rga.enhancer.bias], 0.3, &mut r);
    let f = randn(&mut r, &[1, 4, 4, 8]);
    let s = randn(&mut r, &[1, 4, 4, 8]).map(f64::abs);
    let head = randn(&mut r, &[1, 4, 4, 8]);
    out.push(Outcome::below(
        "rga refine",
        refine_gradcheck(&rga, &mut ps, &f, &s, &head),
        GRAD_TOL,
    ));

    let f = randn(&mut r, &[2, 2, 2, 8]);
    let g = randn(&mut r, &[2, 2, 2, 8]);
    let labels = [Label::Real, Label::Fake];
    for data in [RecData::Real, RecData::Both] {
        for red in [RecReduction::Sum, RecReduction::Mean] {
            let err = reconstruction_gradcheck(&f, &g, &labels, data, red);
            out.push(Outcome::below(
                format!("reconstruction loss {} {}", data.as_str(), red.as_str()),
                err,
                GRAD_TOL,
            ));
        }
    }

    let mut model = Dadf::new(tiny_config()).unwrap();
    let ids = model.trainable_ids();
    jitter(&mut model.params, &ids, 0.05, &mut rng(31));
    let batch = tiny_batch(32);
    let err = model.gradcheck(&batch, &rng(33), gradcheck::DEFAULT_STEP).unwrap();
    out.push(Outcome::below("end-to-end through rga path", err, GRAD_TOL));
    out
}

pub fn head_gradients() -> Vec<Outcome> {
    let mut out = Vec::new();
    let mut ps = ParamStore::new();
    let mut r = rng(40);
    let cfg = DecoderConfig {
        stages: 2,
        channels: vec![4, 4],
    };
    let decoder = MaskDecoder::new(&mut ps, cfg, 4, 8, &mut r).unwrap();
    let ids: Vec<ParamId> = ps.ids().collect();
    jitter(&mut ps, &ids, 0.05, &mut r);
    let probe = randn(&mut r, &[1, 2, 2, 4]);
    let head_mask = randn(&mut r, &[1, 16, 16, 1]);
    let head_pen = randn(&mut r, &[1, 16, 16, 4]);
    let err = decoder_gradcheck(&decoder, &mut ps, &probe, &head_mask, &head_pen);
    out.push(Outcome::below("decoder 2x2x4", err, GRAD_TOL));

    let mut ps = ParamStore::new();
    let cls = Classifier::new(&mut ps, ClsInput::Penultimate, 4, &mut r);
    jitter(&mut ps, &[cls.fc.bias], 0.1, &mut r);
    let probe = randn(&mut r, &[2, 4, 4, 4]);
    out.push(Outcome::below(
        "classifier",
        classifier_gradcheck(&cls, &mut ps, &probe, &[0.7, -1.3]),
        GRAD_TOL,
    ));
    out
}

pub fn loss_gradients() -> Vec<Outcome> {
    let mut out = Vec::new();
    let mut r = rng(50);
    let logits = randn(&mut r, &[2, 4, 4, 1]).map(|v| 2.0 * v);
    let gt = Tensor::from_vec(
        &[2, 4, 4, 1],
        (0..32).map(|i| if (i * 7) % 5 < 2 { 1.0 } else { 0.0 }).collect(),
    )
    .unwrap();
    let step = gradcheck::DEFAULT_STEP;
    let (_, d) = seg_loss(&logits, &gt).unwrap();
    let err = gradcheck::check_input(&logits, &d, step, |z| seg_loss(z, &gt).unwrap().0);
    out.push(Outcome::below("segmentation bce", err, GRAD_TOL));
    let (_, d) = dice_loss(&logits, &gt).unwrap();
    let err = gradcheck::check_input(&logits, &d, step, |z| dice_loss(z, &gt).unwrap().0);
    out.push(Outcome::below("segmentation dice", err, GRAD_TOL));

    let labels = random_labels(&mut r, 6);
    let z = randn(&mut r, &[6]).map(|v| 3.0 * v);
    let (_, d) = cls_loss(z.data(), &labels).unwrap();
    let d = Tensor::from_vec(&[6], d).unwrap();
    let err = gradcheck::check_input(&z, &d, step, |z| cls_loss(z.data(), &labels).unwrap().0);
    out.push(Outcome::below("classification bce", err, GRAD_TOL));
    out
}

pub fn gradient_suite() -> Vec<Outcome> {
    let mut all = adapter_gradients();
    all.extend(rga_gradients());
    all.extend(head_gradients());
    all.extend(loss_gradients());
    all
}

pub fn adapter_oracles() -> Vec<Outcome> {
    let mut out = Vec::new();
    for (i, v) in ADAPTER_VARIANTS.into_iter().enumerate() {
        let (ps, module) = jittered_adapter(v, 3, 2, 60 + i as u64);
        let x = randn(&mut rng(70 + i as u64), &[2, 5, 5, 3]);
        let (y, _) = module.forward(&ps, &mut Ctx::eval(), &x).unwrap();
        let oracle = naive_adapter(&ps, &module, &x);
        out.push(Outcome::within(
            format!("adapter {v} vs loop oracle"),
            max_abs_diff(y.data(), oracle.data()),
            ORACLE_TOL,
        ));

        let (ps, module) = jittered_adapter(v, 6, 4, 80 + i as u64);
        let x = randn(&mut rng(90 + i as u64), &[3, 1, 1, 6]);
        let (y, _) = module.forward(&ps, &mut Ctx::eval(), &x).unwrap();
        let mut worst = 0.0f64;
        for b in 0..3 {
            let o = single_pixel_adapter(&ps, &module, &x.data()[b * 6..(b + 1) * 6]);
            worst = worst.max(max_abs_diff(&y.data()[b * 6..(b + 1) * 6], &o));
        }
        out.push(Outcome::within(
            format!("adapter {v} single pixel vs matrix composition"),
            worst,
            ORACLE_TOL,
        ));
    }
    out
}

pub fn rga_oracles() -> Vec<Outcome> {
    let mut out = Vec::new();
    let mut r = rng(100);
    let mut ps = ParamStore::new();
    let rga = Rga::new(&mut ps, RgaConfig::default(), 3).unwrap();
    jitter(&mut ps, &[rga.enhancer.weight, rga.enhancer.bias], 0.5, &mut r);
    let f = randn(&mut r, &[2, 2, 2, 3]);
    let s = randn(&mut r, &[2, 2, 2, 3]).map(f64::abs);
    let (y, _) = rga.refine(&ps, &f, &s).unwrap();
    out.push(Outcome::within(
        "rga refine 2x2x3 vs loop oracle",
        max_abs_diff(y.data(), naive_refine(&ps, &rga, &f, &s).data()),
        ORACLE_TOL,
    ));

    let labels = vec![Label::Real, Label::Fake, Label::Real, Label::Fake];
    let f = randn(&mut r, &[4, 2, 2, 3]);
    let g = randn(&mut r, &[4, 2, 2, 3]);
    let mut worst = 0.0f64;
    for data in [RecData::Real, RecData::Fake, RecData::Both] {
        let (l, _, _) = reconstruction_loss_with(&f, &g, &labels, data, RecReduction::Sum).unwrap();
        worst = worst.max((l - naive_rec(&f, &g, &labels, data)).abs());
        let (lm, _, _) = reconstruction_loss_with(&f, &g, &labels, data, RecReduction::Mean).unwrap();
        worst = worst.max((lm - naive_rec(&f, &g, &labels, data) / 12.0).abs());
    }
    out.push(Outcome::within("reconstruction loss vs loop oracle", worst, ORACLE_TOL));

    // fake rows: zero gradient and zero value change under perturbation
    let mut fake_grad = 0.0f64;
    let mut fake_delta = 0.0f64;
    for red in [RecReduction::Sum, RecReduction::Mean] {
        let (l0, df, dg) = reconstruction_loss_with(&f, &g, &labels, RecData::Real, red).unwrap();
        let mut f2 = f.clone();
        let mut g2 = g.clone();
        for b in [1usize, 3] {
            for k in b * 12..(b + 1) * 12 {
                fake_grad = fake_grad.max(df.data()[k].abs()).max(dg.data()[k].abs());
                f2.data_mut()[k] += 5.0 * r.random::<f64>() - 2.5;
                g2.data_mut()[k] -= 3.0;
            }
        }
        let (l1, _, _) = reconstruction_loss_with(&f2, &g2, &labels, RecData::Real, red).unwrap();
        fake_delta = fake_delta.max((l1 - l0).abs());
    }
    out.push(Outcome::exact("reconstruction loss: fake gradient", fake_grad));
    out.push(Outcome::exact("reconstruction loss: fake value change", fake_delta));
    out
}

pub fn loss_oracles() -> Vec<Outcome> {
    let mut out = Vec::new();
    let mut r = rng(110);
    let logits = randn(&mut r, &[2, 4, 4, 1]);
    let gt = Tensor::from_vec(
        &[2, 4, 4, 1],
        (0..32).map(|_| if r.random::<bool>() { 1.0 } else { 0.0 }).collect(),
    )
    .unwrap();
    let (seg, _) = seg_loss(&logits, &gt).unwrap();
    out.push(Outcome::within(
        "segmentation loss vs loop oracle",
        (seg - naive_seg(&logits, &gt)).abs(),
        ORACLE_TOL,
    ));

    let labels = random_labels(&mut r, 8);
    let z = randn(&mut r, &[8]);
    let (cls, _) = cls_loss(z.data(), &labels).unwrap();
    out.push(Outcome::within(
        "classification loss vs loop oracle",
        (cls - naive_cls(z.data(), &labels)).abs(),
        ORACLE_TOL,
    ));

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (s, rec, c) = (r.random::<f64>(), 10.0 * r.random::<f64>(), r.random::<f64>());
        let w = LossWeights {
            lambda1: r.random::<f64>(),
            lambda2: r.random::<f64>(),
        };
        worst = worst.max((overall_loss(s, rec, c, w) - (s + w.lambda1 * rec + w.lambda2 * c)).abs());
    }
    let worked = overall_loss(1.0, 2.0, 3.0, LossWeights::default());
    worst = worst.max((worked - 1.5).abs());
    out.push(Outcome::within(
        "overall combination vs weighted sum",
        worst,
        ORACLE_TOL,
    ));

    // the model's logged objective is the same combination of its parts
    let model = Dadf::new(tiny_config()).unwrap();
    let st = model.objective(&tiny_batch(111), &rng(112)).unwrap();
    let w = model.config.weights;
    out.push(Outcome::within(
        "model objective = seg + l1 rec + l2 cls",
        (st.overall - (st.seg + w.lambda1 * st.rec + w.lambda2 * st.cls)).abs(),
        ORACLE_TOL,
    ));
    out
}

pub fn fidelity_suite() -> Vec<Outcome> {
    let mut all = adapter_oracles();
    all.extend(rga_oracles());
    all.extend(loss_oracles());
    all
}

pub fn metric_suite() -> Vec<Outcome> {
    let mut out = Vec::new();
    let mut r = rng(120);
    let mut worst_pbca = 0.0f64;
    let mut worst_acc = 0.0f64;
    let mut worst_auc = 0.0f64;
    for trial in 0..50 {
        let pred: Vec<f64> = (0..16).map(|_| r.random::<f64>()).collect();
        let gt: Vec<f64> = (0..16).map(|_| if r.random::<bool>() { 1.0 } else { 0.0 }).collect();
        worst_pbca = worst_pbca.max((pbca(&pred, &gt, 0.5).unwrap() - naive_pbca(&pred, &gt)).abs());

        let labels = random_labels(&mut r, 20);
        // coarse rounding on odd trials forces ties
        let scores: Vec<f64> = (0..20)
            .map(|_| {
                let s = 4.0 * r.random::<f64>() - 2.0;
                if trial % 2 == 1 {
                    (s * 2.0).round() / 2.0
                } else {
                    s
                }
            })
            .collect();
        worst_acc = worst_acc.max((accuracy(&scores, &labels).unwrap() - naive_accuracy(&scores, &labels)).abs());
        worst_auc = worst_auc.max((auc(&scores, &labels).unwrap() - pairwise_auc(&scores, &labels)).abs());
    }
    out.push(Outcome::exact("pbca vs pixel loop", worst_pbca));
    out.push(Outcome::exact("acc vs sample loop", worst_acc));
    out.push(Outcome::within("auc vs pairwise oracle", worst_auc, AUC_TOL));

    let a = [true, true, false, false];
    let cases: [(&str, [bool; 4], [bool; 4], f64); 4] = [
        ("iinc identical", a, a, 0.0),
        ("iinc disjoint", a, [false, false, true, true], 1.0),
        ("iinc both empty", [false; 4], [false; 4], 0.0),
        ("iinc half overlap", a, [false, true, true, false], 0.5),
    ];
    for (name, p, g, want) in cases {
        out.push(Outcome::exact(name, (iinc(&p, &g).unwrap() - want).abs()));
    }
    out
}
