//! The assembled detector: frozen encoder with adapters, optional
//! reconstruction guided attention, mask decoder and classification head.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::adapter::{AdapterConfig, AdapterModule, AdapterVariant};
use crate::backbone::{freeze_report, Backbone, BackboneConfig, EncodeCache, FreezeReport};
use crate::data::{sample_rng, Label, Sample};
use crate::error::{Error, Result};
use crate::heads::{Classifier, ClsInput, DecoderConfig, MaskDecoder};
use crate::losses::{cls_loss, dice_loss, overall_loss, seg_loss, sigmoid, LossWeights, SegLoss};
use crate::metrics::{MetricsAccumulator, MetricsReport};
use crate::optim::AdamW;
use crate::params::{Ctx, Grads, ParamId, ParamStore, Role};
use crate::rga::{
    add_white_noise, feature_difference, reconstruction_loss_with, RecData, RecReduction, RefineCache, Rga, RgaConfig,
};
use crate::tensor::Tensor;

pub fn adapter_group(i: usize) -> alloc::string::String {
    format!("adapters.{i}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub adapter_variant: AdapterVariant,
    /// Per-branch channels; `None` uses the embedding width.
    pub adapter_mid_channels: Option<usize>,
    pub rga_enabled: bool,
    pub rga: RgaConfig,
    pub rec_data: RecData,
    pub rec_reduction: RecReduction,
    pub decoder: DecoderConfig,
    pub cls_input: ClsInput,
    pub seg_loss: SegLoss,
    pub weights: LossWeights,
    /// Seed for every initialiser. The backbone uses its own stream so
    /// configurations sharing a seed share identical frozen weights.
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            backbone: BackboneConfig::desk(),
            adapter_variant: AdapterVariant::Full,
            adapter_mid_channels: None,
            rga_enabled: true,
            rga: RgaConfig::default(),
            rec_data: RecData::Real,
            rec_reduction: RecReduction::Mean,
            decoder: DecoderConfig::desk(),
            cls_input: ClsInput::Penultimate,
            seg_loss: SegLoss::Bce,
            weights: LossWeights::default(),
            init_seed: 0,
        }
    }

    /// Identity adapters and no attention module.
    pub fn baseline(mut self) -> Self {
        self.adapter_variant = AdapterVariant::Identity;
        self.rga_enabled = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.rga.validate()?;
        self.decoder.validate(self.backbone.patch_size)?;
        self.weights.validate()?;
        if self.adapter_mid_channels == Some(0) {
            return Err(Error::Config("adapter.mid_channels must be positive".into()));
        }
        Ok(())
    }
}

/// A stacked batch ready for the network.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[b, H, W, 3]`
    pub images: Tensor,
    /// `[b, H, W, 1]` with values in {0, 1}
    pub masks: Tensor,
    pub labels: Vec<Label>,
    /// Dataset indices; seed the per-sample inference noise.
    pub indices: Vec<u64>,
}

impl Batch {
    pub fn from_samples(samples: &[&Sample], indices: &[u64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if samples.len() != indices.len() {
            return Err(Error::ShapeMismatch {
                left: alloc::vec![samples.len()],
                right: alloc::vec![indices.len()],
            });
        }
        let images: Vec<Tensor> = samples.iter().map(|s| s.image.to_batch()).collect();
        let masks: Vec<Tensor> = samples
            .iter()
            .map(|s| Tensor::from_vec(&[1, s.mask.height(), s.mask.width(), 1], s.mask.to_f64()))
            .collect::<Result<_>>()?;
        Ok(Self {
            images: Tensor::stack(&images)?,
            masks: Tensor::stack(&masks)?,
            labels: samples.iter().map(|s| s.label).collect(),
            indices: indices.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Where the noisy second encoder pass gets its noise from.
pub enum Noise<'a> {
    /// Skip the second pass; `S = 0`.
    Off,
    /// Draw from a running generator (training).
    Stream(&'a mut ChaCha8Rng),
    /// Seed each sample from `(rga.seed, index)` (inference).
    PerSample,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// `[b, H, W, 1]`
    pub mask_logits: Tensor,
    /// One detection logit per sample; fake is positive.
    pub scores: Vec<f64>,
    pub features: Tensor,
    pub noisy_features: Option<Tensor>,
    /// `[b, h, w, c]` attention map when the attention module is active.
    pub attention: Option<Tensor>,
}

struct ForwardCache {
    clean: EncodeCache,
    noisy: Option<EncodeCache>,
    refine: Option<RefineCache>,
    decoder: crate::heads::DecoderCache,
    cls: crate::heads::ClassifierCache,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub seg: f64,
    pub rec: f64,
    pub cls: f64,
    pub overall: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    /// `[b, H, W, 1]` probabilities.
    pub mask_prob: Tensor,
    pub scores: Vec<f64>,
    pub attention: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Dadf {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub backbone: Backbone,
    pub adapters: Vec<AdapterModule>,
    pub rga: Option<Rga>,
    pub decoder: MaskDecoder,
    pub classifier: Classifier,
    steps: usize,
}

impl Dadf {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut ps = ParamStore::new();
        let seed = config.init_seed;
        let backbone = Backbone::new(&mut ps, config.backbone.clone(), &mut sample_rng(seed, 0))?;
        let c = config.backbone.embed_dim;
        let mid = config.adapter_mid_channels.unwrap_or(c);
        let mut rng = sample_rng(seed, 1);
        let adapters = (0..config.backbone.num_layers)
            .map(|i| {
                let cfg = AdapterConfig::new(config.adapter_variant, c, mid);
                AdapterModule::build(&mut ps, &adapter_group(i), cfg, &mut rng)
            })
            .collect();
        let task = config.backbone.task_dim;
        let rga = if config.rga_enabled {
            Some(Rga::new(&mut ps, config.rga.clone(), task)?)
        } else {
            None
        };
        let decoder = MaskDecoder::new(
            &mut ps,
            config.decoder.clone(),
            task,
            config.backbone.patch_size,
            &mut sample_rng(seed, 3),
        )?;
        let cls_ch = match config.cls_input {
            ClsInput::Penultimate => decoder.penultimate_channels(),
            ClsInput::Mask => 1,
        };
        let classifier = Classifier::new(&mut ps, config.cls_input, cls_ch, &mut sample_rng(seed, 4));
        Ok(Self {
            config,
            params: ps,
            backbone,
            adapters,
            rga,
            decoder,
            classifier,
            steps: 0,
        })
    }

    pub fn freeze_report(&self) -> FreezeReport {
        freeze_report(&self.params)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.params
            .ids()
            .filter(|&id| self.params.entry(id).role == Role::Trainable)
            .collect()
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn set_steps_taken(&mut self, steps: usize) {
        self.steps = steps;
    }

    fn noisy_images(&self, batch: &Batch, noise: &mut Noise<'_>) -> Result<Option<Tensor>> {
        let cfg = &self.config.rga;
        match noise {
            Noise::Off => Ok(None),
            Noise::Stream(rng) => Ok(Some(add_white_noise(
                &batch.images,
                cfg.noise_mean,
                cfg.noise_variance,
                *rng,
            )?)),
            Noise::PerSample => {
                let per = batch.images.len() / batch.len();
                let mut out = batch.images.clone();
                for (bi, &idx) in batch.indices.iter().enumerate() {
                    let one = Tensor::from_vec(&[per], batch.images.data()[bi * per..(bi + 1) * per].to_vec())?;
                    let noisy =
                        add_white_noise(&one, cfg.noise_mean, cfg.noise_variance, &mut sample_rng(cfg.seed, idx))?;
                    out.data_mut()[bi * per..(bi + 1) * per].copy_from_slice(noisy.data());
                }
                Ok(Some(out))
            }
        }
    }

    fn forward_cached(&self, ctx: &mut Ctx, batch: &Batch, mut noise: Noise<'_>) -> Result<(Forward, ForwardCache)> {
        let (f, clean) = self.backbone.encode(&self.params, ctx, &batch.images, &self.adapters)?;
        let mut noisy_features = None;
        let mut noisy = None;
        let mut refine = None;
        let mut attention = None;
        let refined = match &self.rga {
            None => f.clone(),
            Some(rga) => {
                let s = match self.noisy_images(batch, &mut noise)? {
                    Some(x_gau) => {
                        let (fg, cache) = self.backbone.encode(&self.params, ctx, &x_gau, &self.adapters)?;
                        let s = feature_difference(&f, &fg)?;
                        noisy = Some(cache);
                        noisy_features = Some(fg);
                        s
                    }
                    None => Tensor::zeros(f.shape()),
                };
                let (out, rc) = rga.refine(&self.params, &f, &s)?;
                attention = Some(rc.attention().clone());
                refine = Some(rc);
                out
            }
        };
        let (logits, pen, decoder) = self.decoder.decode(&self.params, &refined)?;
        let cls_in = match self.classifier.input {
            ClsInput::Penultimate => &pen,
            ClsInput::Mask => &logits,
        };
        let (scores, cls) = self.classifier.classify(&self.params, cls_in)?;
        logits.ensure_finite("mask logits")?;
        Ok((
            Forward {
                mask_logits: logits,
                scores,
                features: f,
                noisy_features,
                attention,
            },
            ForwardCache {
                clean,
                noisy,
                refine,
                decoder,
                cls,
            },
        ))
    }

    /// Inference forward. Running statistics are used and never updated.
    pub fn forward(&self, batch: &Batch) -> Result<Forward> {
        let noise = if self.config.rga.inference_noise {
            Noise::PerSample
        } else {
            Noise::Off
        };
        let mut ctx = Ctx::eval();
        Ok(self.forward_cached(&mut ctx, batch, noise)?.0)
    }

    pub fn predict(&self, batch: &Batch) -> Result<Prediction> {
        let out = self.forward(batch)?;
        Ok(Prediction {
            mask_prob: out.mask_logits.map(sigmoid),
            scores: out.scores,
            attention: out.attention,
        })
    }

    /// Loss terms and gradients for one batch. Running statistics collected
    /// in `ctx` are left for the caller to commit.
    pub fn loss_and_grads(
        &self,
        ctx: &mut Ctx,
        batch: &Batch,
        noise: Noise<'_>,
        grads: &mut Grads,
    ) -> Result<StepStats> {
        let (out, cache) = self.forward_cached(ctx, batch, noise)?;
        let w = self.config.weights;

        let (seg, mut d_logits) = seg_loss(&out.mask_logits, &batch.masks)?;
        let seg = if self.config.seg_loss == SegLoss::BceDice {
            let (dice, dd) = dice_loss(&out.mask_logits, &batch.masks)?;
            d_logits.add_assign(&dd);
            seg + dice
        } else {
            seg
        };
        let (cls, d_scores) = cls_loss(&out.scores, &batch.labels)?;
        let d_scores: Vec<f64> = d_scores.iter().map(|g| g * w.lambda2).collect();
        let (rec, d_rec_f, d_rec_g) = match &out.noisy_features {
            Some(fg) => reconstruction_loss_with(
                &out.features,
                fg,
                &batch.labels,
                self.config.rec_data,
                self.config.rec_reduction,
            )?,
            None => (
                0.0,
                Tensor::zeros(out.features.shape()),
                Tensor::zeros(out.features.shape()),
            ),
        };
        let overall = overall_loss(seg, rec, cls, w);

        let d_cls_in = self.classifier.backward(&self.params, grads, &cache.cls, &d_scores);
        let d_pen = match self.classifier.input {
            ClsInput::Penultimate => Some(&d_cls_in),
            ClsInput::Mask => {
                d_logits.add_assign(&d_cls_in);
                None
            }
        };
        let d_refined = self
            .decoder
            .backward(&self.params, grads, &cache.decoder, &d_logits, d_pen);
        let mut d_f = d_refined;
        if let (Some(rga), Some(rc)) = (&self.rga, &cache.refine) {
            let (df, ds) = rga.refine_backward(&self.params, grads, rc, &d_f);
            d_f = df;
            if let (Some(fg), Some(noisy)) = (&out.noisy_features, &cache.noisy) {
                let mut d_fg = Tensor::zeros(fg.shape());
                for i in 0..fg.len() {
                    let diff = fg.data()[i] - out.features.data()[i];
                    let sign = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    let g = ds.data()[i] * sign;
                    d_fg.data_mut()[i] = g + w.lambda1 * d_rec_g.data()[i];
                    d_f.data_mut()[i] += -g + w.lambda1 * d_rec_f.data()[i];
                }
                self.backbone
                    .backward(&self.params, grads, noisy, &self.adapters, &d_fg);
            }
        }
        self.backbone
            .backward(&self.params, grads, &cache.clean, &self.adapters, &d_f);
        let ids = self.trainable_ids();
        Ok(StepStats {
            seg,
            rec,
            cls,
            overall,
            grad_norm: grads.norm(ids),
        })
    }

    /// One optimisation step. Aborts with [`Error::Diverged`] before touching
    /// any parameter if the loss or a gradient is non-finite.
    pub fn train_step(&mut self, batch: &Batch, opt: &mut AdamW, rng: &mut ChaCha8Rng) -> Result<StepStats> {
        let mut ctx = Ctx::train();
        let mut grads = Grads::new(&self.params);
        let noise = if self.rga.is_some() {
            Noise::Stream(rng)
        } else {
            Noise::Off
        };
        let stats = self.loss_and_grads(&mut ctx, batch, noise, &mut grads)?;
        if !stats.overall.is_finite() || !grads.is_finite() {
            return Err(Error::Diverged(self.steps));
        }
        ctx.commit(&mut self.params);
        opt.step(&mut self.params, &grads);
        self.steps += 1;
        Ok(stats)
    }
    /// Training objective with a fixed noise draw and batch statistics;
    /// running statistics are discarded.
    pub fn objective(&self, batch: &Batch, noise_rng: &ChaCha8Rng) -> Result<StepStats> {
        let mut ctx = Ctx::train();
        let mut grads = Grads::new(&self.params);
        let mut rng = noise_rng.clone();
        self.loss_and_grads(&mut ctx, batch, Noise::Stream(&mut rng), &mut grads)
    }

    /// End-to-end check of every trainable gradient against central
    /// differences of [`Dadf::objective`]. Returns the largest relative error.
    /// Only sensible for tiny configurations.
    pub fn gradcheck(&mut self, batch: &Batch, noise_rng: &ChaCha8Rng, step: f64) -> Result<f64> {
        let mut ctx = Ctx::train();
        let mut grads = Grads::new(&self.params);
        let mut rng = noise_rng.clone();
        self.loss_and_grads(&mut ctx, batch, Noise::Stream(&mut rng), &mut grads)?;
        let f0 = self.objective(batch, noise_rng)?.overall;
        let mut worst = 0.0f64;
        for id in self.trainable_ids() {
            let analytic = grads.get(id).expect("trainable").to_vec();
            for (i, &a) in analytic.iter().enumerate() {
                let orig = self.params.get(id).data()[i];
                let mut failure = None;
                let numeric = crate::gradcheck::smooth_difference(f0, step, |d| {
                    self.params.get_mut(id).data_mut()[i] = orig + d;
                    let v = self.objective(batch, noise_rng).map(|s| s.overall);
                    self.params.get_mut(id).data_mut()[i] = orig;
                    v.unwrap_or_else(|e| {
                        failure = Some(e);
                        f64::NAN
                    })
                });
                if let Some(e) = failure {
                    return Err(e);
                }
                worst = worst.max(crate::gradcheck::relative_error(a, numeric));
            }
        }
        Ok(worst)
    }
}

/// Mean loss terms over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochStats {
    pub seg: f64,
    pub rec: f64,
    pub cls: f64,
    pub overall: f64,
    pub steps: usize,
}

impl Dadf {
    /// Shuffles `samples` with `rng` and runs one pass of mini-batch steps.
    /// `indices[i]` is the dataset index of `samples[i]`.
    pub fn train_epoch(
        &mut self,
        samples: &[Sample],
        indices: &[u64],
        batch_size: usize,
        opt: &mut AdamW,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochStats> {
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(rng);
        let mut acc = EpochStats::default();
        for chunk in order.chunks(batch_size) {
            let refs: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let idx: Vec<u64> = chunk.iter().map(|&i| indices[i]).collect();
            let batch = Batch::from_samples(&refs, &idx)?;
            let s = self.train_step(&batch, opt, rng)?;
            acc.seg += s.seg;
            acc.rec += s.rec;
            acc.cls += s.cls;
            acc.overall += s.overall;
            acc.steps += 1;
        }
        let n = acc.steps as f64;
        acc.seg /= n;
        acc.rec /= n;
        acc.cls /= n;
        acc.overall /= n;
        Ok(acc)
    }

    /// Per-sample predictions in batches; the results do not depend on
    /// `batch_size`.
    pub fn predict_all(&self, samples: &[Sample], indices: &[u64], batch_size: usize) -> Result<Vec<Prediction>> {
        if samples.len() != indices.len() {
            return Err(Error::ShapeMismatch {
                left: alloc::vec![samples.len()],
                right: alloc::vec![indices.len()],
            });
        }
        let bs = batch_size.max(1);
        let mut out = Vec::with_capacity(samples.len().div_ceil(bs));
        for (chunk, idx) in samples.chunks(bs).zip(indices.chunks(bs)) {
            let refs: Vec<&Sample> = chunk.iter().collect();
            out.push(self.predict(&Batch::from_samples(&refs, idx)?)?);
        }
        Ok(out)
    }

    pub fn evaluate(&self, samples: &[Sample], indices: &[u64], batch_size: usize) -> Result<MetricsReport> {
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut acc = MetricsAccumulator::new();
        let bs = batch_size.max(1);
        for (pred, chunk) in self.predict_all(samples, indices, bs)?.iter().zip(samples.chunks(bs)) {
            let per = pred.mask_prob.len() / chunk.len();
            for (i, s) in chunk.iter().enumerate() {
                let prob = &pred.mask_prob.data()[i * per..(i + 1) * per];
                acc.push(prob, &s.mask.to_f64(), pred.scores[i], s.label)?;
            }
        }
        acc.report(100.0 * self.freeze_report().fraction())
    }
}
