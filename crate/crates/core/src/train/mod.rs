//! Deterministic desk-scale training of the toy embedding network.
//!
//! Each step samples one chunk width for the whole minibatch from the current
//! stage's interval, crops every utterance to that width, and takes one
//! momentum-SGD step on the mean batch loss. Stages switch at fixed epochs;
//! the learning rate drops by `lr_drop` at every stage boundary.
//!
//! Random streams (all ChaCha8 seeded from `TrainConfig::seed`): stream 0
//! initializes the model, stream 1 drives shuffling and chunk sampling, and
//! stream `2 + epoch` draws that epoch's diagnostic sample.

pub mod corpus;
pub mod model;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use corpus::{generate_corpus, sample_chunk, sample_chunk_width, Corpus, SyntheticCorpusSpec, Utterance};
pub use model::{forward_embed, Activation, ModelShape, ToyModel};

use crate::error::config;
use crate::loss::{classification_loss_grad, LossSpec, LossVariant};
use crate::math::sqrt;
use crate::metrics::Trial;
use crate::schedule::{MarginSchedule, StagePlan};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Divisor applied to the learning rate at each stage boundary.
    pub lr_drop: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-3,
            lr_drop: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub margin: MarginSchedule,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Chunk-width interval `[L1, L2]` for each stage. Its length fixes the
    /// number of stages.
    pub chunk_intervals: Vec<(usize, usize)>,
    /// First epoch of each stage; `None` splits the epochs into equal parts.
    pub stage_starts: Option<Vec<usize>>,
    pub hidden: Vec<(usize, Activation)>,
    pub embed_dim: usize,
    /// Fraction of training utterances sampled for per-epoch diagnostics.
    pub diagnostics_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossSpec::circle(60.0, 0.4),
            margin: MarginSchedule::Fixed,
            sgd: SgdConfig::default(),
            batch_size: 64,
            epochs: 9,
            chunk_intervals: vec![(20, 40), (30, 50), (40, 60)],
            stage_starts: None,
            hidden: vec![(64, Activation::Tanh), (64, Activation::Tanh)],
            embed_dim: 32,
            diagnostics_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn stage_plan(&self) -> Result<StagePlan> {
        let plan = match &self.stage_starts {
            Some(starts) => StagePlan::from_starts(starts.clone())?,
            None => StagePlan::equal(self.epochs, self.chunk_intervals.len())?,
        };
        if plan.stages() != self.chunk_intervals.len() {
            return Err(config!(
                "{} stage starts for {} chunk intervals",
                plan.stages(),
                self.chunk_intervals.len()
            ));
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let sgd = &self.sgd;
        if !(sgd.learning_rate.is_finite() && sgd.learning_rate > 0.0) {
            return Err(config!("learning rate must be finite and > 0"));
        }
        if !(0.0..1.0).contains(&sgd.momentum) {
            return Err(config!("momentum must lie in [0, 1)"));
        }
        if !(sgd.weight_decay.is_finite() && sgd.weight_decay >= 0.0) {
            return Err(config!("weight decay must be finite and >= 0"));
        }
        if !(sgd.lr_drop.is_finite() && sgd.lr_drop >= 1.0) {
            return Err(config!("lr_drop must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(config!("batch size must be >= 1"));
        }
        if !(self.diagnostics_fraction > 0.0 && self.diagnostics_fraction <= 1.0) {
            return Err(config!("diagnostics fraction must lie in (0, 1]"));
        }
        if self.chunk_intervals.is_empty() {
            return Err(config!("need at least one chunk interval"));
        }
        for &(l1, l2) in &self.chunk_intervals {
            if l1 == 0 || l1 > l2 {
                return Err(config!("invalid chunk interval [{l1}, {l2}]"));
            }
        }
        if self
            .chunk_intervals
            .windows(2)
            .any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1)
        {
            return Err(config!(
                "chunk intervals must not shrink across stages: {:?}",
                self.chunk_intervals
            ));
        }
        let stages = self.stage_plan()?.stages();
        match &self.margin {
            MarginSchedule::Fixed => {}
            schedule => {
                if self.loss.variant != LossVariant::CircleLoss {
                    return Err(config!("margin schedules apply to circle loss only"));
                }
                match schedule {
                    MarginSchedule::Stage(s) if s.stages() != stages => {
                        return Err(config!(
                            "{} stage margins for {stages} training stages",
                            s.stages()
                        ));
                    }
                    MarginSchedule::Chunk(c) => {
                        c.validate()?;
                        let lo = self.chunk_intervals.iter().map(|i| i.0).min().unwrap();
                        let hi = self.chunk_intervals.iter().map(|i| i.1).max().unwrap();
                        if lo < c.l_min || hi > c.l_max {
                            return Err(config!(
                                "chunk intervals span [{lo}, {hi}], outside the margin bounds [{}, {}]",
                                c.l_min,
                                c.l_max
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Learning rate during a stage.
    pub fn learning_rate(&self, stage: usize) -> f64 {
        let mut lr = self.sgd.learning_rate;
        for _ in 0..stage {
            lr /= self.sgd.lr_drop;
        }
        lr
    }

    /// The margin for an epoch-level schedule; `None` for chunk-based
    /// margins, which vary per step.
    pub fn epoch_margin(&self, stage: usize) -> Result<Option<f64>> {
        match &self.margin {
            MarginSchedule::Fixed => Ok(Some(self.loss.margin())),
            MarginSchedule::Stage(s) => s.stage_margin(stage).map(Some),
            MarginSchedule::Chunk(_) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    pub s_p_mean: f64,
    pub s_n_mean: f64,
    pub r_mean: f64,
    /// Mean of the per-step batch losses.
    pub loss: f64,
    /// The epoch's margin; for chunk-based margins, the mean step margin.
    pub margin: f64,
}

/// Distance of `(s_p_mean, s_n_mean)` from the optimum `(1, 0)`.
pub fn mean_radius(s_p_mean: f64, s_n_mean: f64) -> f64 {
    sqrt((1.0 - s_p_mean) * (1.0 - s_p_mean) + s_n_mean * s_n_mean)
}

/// Mean batch loss and parameter gradient for one minibatch of chunks.
///
/// `batch` pairs each `frames × frame_dim` chunk with its label.
pub fn batch_loss_grad(model: &ToyModel, batch: &[(Vec<f64>, usize)], spec: &LossSpec) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; model.params().len()];
    let mut total = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (chunk, label) in batch {
        let cache = model.forward(chunk);
        let cosines = model.cosines(&cache.embedding);
        if let Some(c) = cosines.iter().find(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("cosine {c}")));
        }
        let (loss, mut dcos) = classification_loss_grad(&cosines, *label, spec)?;
        dcos.iter_mut().for_each(|g| *g *= scale);
        model.backward(&cache, &dcos, &mut grad);
        total += loss;
    }
    Ok((total * scale, grad))
}

struct Sgd {
    velocity: Vec<f64>,
}

impl Sgd {
    /// `v ← μv + g + λw`, `w ← w - lr·v`; no decay inside `no_decay`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &SgdConfig, no_decay: core::ops::Range<usize>) {
        for (i, ((w, g), v)) in params.iter_mut().zip(grad).zip(&mut self.velocity).enumerate() {
            let decay = if no_decay.contains(&i) { 0.0 } else { cfg.weight_decay * *w };
            *v = cfg.momentum * *v + g + decay;
            *w -= lr * *v;
        }
    }
}

/// Trained model plus one diagnostics row per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub model: ToyModel,
    pub diagnostics: Vec<EpochDiagnostics>,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn model_shape(config: &TrainConfig, corpus: &Corpus) -> ModelShape {
    ModelShape {
        frame_dim: corpus.frame_dim,
        hidden: config.hidden.clone(),
        embed_dim: config.embed_dim,
        num_classes: corpus.num_speakers,
    }
}

/// Initial model for a config and corpus, exactly as [`train`] starts.
pub fn initial_model(config: &TrainConfig, corpus: &Corpus) -> Result<ToyModel> {
    ToyModel::init(model_shape(config, corpus), &mut rng_stream(config.seed, 0))
}

/// Runs minibatch momentum SGD. Returns an [`Error::NonFinite`] describing
/// the failing step and the completed epochs if the loss diverges.
pub fn train(config: &TrainConfig, corpus: &Corpus) -> Result<TrainOutput> {
    config.validate()?;
    if corpus.utterances.is_empty() {
        return Err(config!("corpus has no utterances"));
    }
    let plan = config.stage_plan()?;
    let mut model = initial_model(config, corpus)?;
    let mut sgd = Sgd {
        velocity: vec![0.0; model.params().len()],
    };
    let mut data_rng = rng_stream(config.seed, 1);
    let mut diagnostics = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..corpus.utterances.len()).collect();
    let dim = corpus.frame_dim;

    for epoch in 0..config.epochs {
        let stage = plan.stage_of(epoch);
        let lr = config.learning_rate(stage);
        let (l1, l2) = config.chunk_intervals[stage];
        let epoch_margin = config.epoch_margin(stage)?;
        order.shuffle(&mut data_rng);

        let (mut loss_sum, mut margin_sum, mut steps) = (0.0, 0.0, 0usize);
        for batch_ids in order.chunks(config.batch_size) {
            let width = sample_chunk_width(l1, l2, &mut data_rng)?;
            let margin = match (&config.margin, epoch_margin) {
                (MarginSchedule::Chunk(c), _) => c.chunk_margin(width)?,
                (_, Some(m)) => m,
                (_, None) => unreachable!(),
            };
            let spec = with_margin(&config.loss, margin);
            let batch = batch_ids
                .iter()
                .map(|&i| {
                    let u = &corpus.utterances[i];
                    Ok((sample_chunk(&u.frames, dim, width, &mut data_rng)?, u.label))
                })
                .collect::<Result<Vec<_>>>()?;

            let (loss, grad) = match batch_loss_grad(&model, &batch, &spec) {
                Ok((loss, grad)) if loss.is_finite() && grad.iter().all(|g| g.is_finite()) => (loss, grad),
                Ok((loss, _)) => return Err(divergence(epoch, steps, &format!("loss {loss}"), &diagnostics)),
                Err(Error::NonFinite(what)) => return Err(divergence(epoch, steps, &what, &diagnostics)),
                Err(e) => return Err(e),
            };
            let cls = model.classifier_range();
            sgd.step(model.params_mut(), &grad, lr, &config.sgd, cls);
            model.normalize_classifier();
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(divergence(epoch, steps, "parameters", &diagnostics));
            }
            loss_sum += loss;
            margin_sum += margin;
            steps += 1;
        }

        let (s_p_mean, s_n_mean) = similarity_means(&model, corpus, config, epoch);
        diagnostics.push(EpochDiagnostics {
            epoch,
            s_p_mean,
            s_n_mean,
            r_mean: mean_radius(s_p_mean, s_n_mean),
            loss: loss_sum / steps as f64,
            margin: epoch_margin.unwrap_or(margin_sum / steps as f64),
        });
    }
    Ok(TrainOutput { model, diagnostics })
}

fn with_margin(spec: &LossSpec, margin: f64) -> LossSpec {
    match spec.variant {
        LossVariant::CircleLoss => LossSpec { m: margin, ..*spec },
        _ => *spec,
    }
}

fn divergence(epoch: usize, step: usize, what: &str, done: &[EpochDiagnostics]) -> Error {
    let mut msg = format!("training diverged at epoch {epoch}, step {step}: non-finite {what}");
    match done.last() {
        Some(d) => msg.push_str(&format!(
            "; last completed epoch {}: loss {}, s_p_mean {}, s_n_mean {}, r_mean {}, margin {}",
            d.epoch, d.loss, d.s_p_mean, d.s_n_mean, d.r_mean, d.margin
        )),
        None => msg.push_str("; no epoch completed"),
    }
    Error::NonFinite(msg)
}

/// Mean target cosine and mean non-target cosine over a seeded sample of
/// training utterances, embedded whole.
fn similarity_means(model: &ToyModel, corpus: &Corpus, config: &TrainConfig, epoch: usize) -> (f64, f64) {
    let n = corpus.utterances.len();
    let take = (libm::ceil(config.diagnostics_fraction * n as f64) as usize).clamp(1, n);
    let mut rng = rng_stream(config.seed, 2 + epoch as u64);
    let mut picks = index::sample(&mut rng, n, take).into_vec();
    picks.sort_unstable();

    let classes = corpus.num_speakers;
    let (mut sp, mut sn) = (0.0, 0.0);
    for &i in &picks {
        let u = &corpus.utterances[i];
        let cos = model.cosines(&forward_embed(model, &u.frames));
        sp += cos[u.label];
        let others: f64 = cos.iter().enumerate().filter(|&(j, _)| j != u.label).map(|(_, c)| c).sum();
        sn += others / (classes - 1) as f64;
    }
    (sp / take as f64, sn / take as f64)
}

/// Whole-utterance embeddings keyed by utterance id.
pub fn embed_corpus(model: &ToyModel, corpus: &Corpus) -> BTreeMap<String, Vec<f64>> {
    corpus
        .utterances
        .iter()
        .map(|u| (u.id.clone(), forward_embed(model, &u.frames)))
        .collect()
}

/// Every unordered pair of distinct utterances, labeled by true speaker.
pub fn all_pairs_trials(corpus: &Corpus) -> Vec<Trial> {
    let u = &corpus.utterances;
    let mut trials = Vec::with_capacity(u.len() * u.len().saturating_sub(1) / 2);
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            trials.push(Trial {
                enroll: u[i].id.clone(),
                test: u[j].id.clone(),
                is_target: u[i].speaker == u[j].speaker,
            });
        }
    }
    trials
}

/// Fraction of utterances whose highest-cosine class is their training label.
pub fn training_accuracy(model: &ToyModel, corpus: &Corpus) -> f64 {
    let correct = corpus
        .utterances
        .iter()
        .filter(|u| {
            let cos = model.cosines(&forward_embed(model, &u.frames));
            let best = cos
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j);
            best == Some(u.label)
        })
        .count();
    correct as f64 / corpus.utterances.len() as f64
}
