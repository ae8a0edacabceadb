//! Mean-pooled embedding network with a cosine classifier.
//!
//! Frames pass through dense layers with an elementwise nonlinearity, are
//! averaged, projected to the embedding dimension and length-normalized. The
//! classifier holds one unit-norm row per class, so classifier·embedding is a
//! vector of cosines.
//!
//! All parameters live in one flat vector in this order: for each hidden
//! layer its weights (`out × in`, row-major) then bias, the projection
//! weights and bias, then the classifier rows (`classes × embed_dim`).

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::config;
use crate::math::{dot, normalize, sqrt, tanh};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tanh(x),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    pub frame_dim: usize,
    pub hidden: Vec<(usize, Activation)>,
    pub embed_dim: usize,
    pub num_classes: usize,
}

/// Location of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
struct DenseSlot {
    inputs: usize,
    outputs: usize,
    weights: Range<usize>,
    bias: Range<usize>,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        if self.frame_dim == 0 || self.embed_dim == 0 || self.num_classes == 0 {
            return Err(config!("model dimensions must be >= 1: {self:?}"));
        }
        if self.hidden.iter().any(|&(w, _)| w == 0) {
            return Err(config!("hidden layer widths must be >= 1"));
        }
        Ok(())
    }

    fn dense_slots(&self) -> Vec<DenseSlot> {
        let mut slots = Vec::with_capacity(self.hidden.len() + 1);
        let mut offset = 0;
        let mut inputs = self.frame_dim;
        let widths = self.hidden.iter().map(|&(w, _)| w).chain([self.embed_dim]);
        for outputs in widths {
            let weights = offset..offset + outputs * inputs;
            let bias = weights.end..weights.end + outputs;
            offset = bias.end;
            slots.push(DenseSlot {
                inputs,
                outputs,
                weights,
                bias,
            });
            inputs = outputs;
        }
        slots
    }

    fn classifier_range(&self) -> Range<usize> {
        let start = self.dense_slots().last().map_or(0, |s| s.bias.end);
        start..start + self.num_classes * self.embed_dim
    }

    pub fn num_params(&self) -> usize {
        self.classifier_range().end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    shape: ModelShape,
    slots: Vec<DenseSlot>,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Per layer, the `frames × width` outputs; index 0 is the input chunk.
    activations: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    raw_norm: f64,
    pub embedding: Vec<f64>,
}

impl ToyModel {
    /// Weights ~ N(0, 1/fan_in), zero biases, classifier rows uniform on the
    /// unit sphere.
    pub fn init<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let slots = shape.dense_slots();
        let mut params = vec![0.0; shape.num_params()];
        for slot in &slots {
            let std = 1.0 / sqrt(slot.inputs as f64);
            for w in &mut params[slot.weights.clone()] {
                let z: f64 = StandardNormal.sample(rng);
                *w = std * z;
            }
        }
        for w in &mut params[shape.classifier_range()] {
            *w = StandardNormal.sample(rng);
        }
        let mut model = Self { shape, slots, params };
        model.normalize_classifier();
        Ok(model)
    }

    pub fn from_params(shape: ModelShape, params: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if params.len() != shape.num_params() {
            return Err(config!(
                "expected {} parameters, got {}",
                shape.num_params(),
                params.len()
            ));
        }
        let slots = shape.dense_slots();
        Ok(Self { shape, slots, params })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Parameter range of the classifier rows.
    pub fn classifier_range(&self) -> Range<usize> {
        self.shape.classifier_range()
    }

    pub fn classifier_row(&self, class: usize) -> &[f64] {
        let start = self.classifier_range().start + class * self.shape.embed_dim;
        &self.params[start..start + self.shape.embed_dim]
    }

    pub fn normalize_classifier(&mut self) {
        let range = self.classifier_range();
        for row in self.params[range].chunks_mut(self.shape.embed_dim) {
            normalize(row);
        }
    }

    fn activation_of(&self, layer: usize) -> Activation {
        self.shape
            .hidden
            .get(layer)
            .map_or(Activation::Identity, |&(_, a)| a)
    }

    /// Forward pass over a `frames × frame_dim` chunk.
    pub fn forward(&self, chunk: &[f64]) -> ForwardCache {
        let dim = self.shape.frame_dim;
        let frames = chunk.len() / dim;
        assert!(frames > 0 && chunk.len() == frames * dim, "chunk must hold whole frames");

        let hidden = self.slots.len() - 1;
        let mut activations = Vec::with_capacity(hidden + 1);
        activations.push(chunk.to_vec());
        for (k, slot) in self.slots[..hidden].iter().enumerate() {
            let act = self.activation_of(k);
            let w = &self.params[slot.weights.clone()];
            let b = &self.params[slot.bias.clone()];
            let input = &activations[k];
            let mut out = Vec::with_capacity(frames * slot.outputs);
            for x in input.chunks(slot.inputs) {
                out.extend(
                    w.chunks(slot.inputs)
                        .zip(b)
                        .map(|(row, bias)| act.apply(dot(row, x) + bias)),
                );
            }
            activations.push(out);
        }

        let last = activations.last().unwrap();
        let width = last.len() / frames;
        let mut pooled = vec![0.0; width];
        for h in last.chunks(width) {
            pooled.iter_mut().zip(h).for_each(|(p, v)| *p += v);
        }
        pooled.iter_mut().for_each(|p| *p /= frames as f64);

        let proj = &self.slots[hidden];
        let w = &self.params[proj.weights.clone()];
        let b = &self.params[proj.bias.clone()];
        let mut embedding: Vec<f64> = w
            .chunks(proj.inputs)
            .zip(b)
            .map(|(row, bias)| dot(row, &pooled) + bias)
            .collect();
        let raw_norm = normalize(&mut embedding);
        ForwardCache {
            activations,
            pooled,
            raw_norm,
            embedding,
        }
    }

    /// Cosine between the embedding and every classifier row.
    pub fn cosines(&self, embedding: &[f64]) -> Vec<f64> {
        self.params[self.classifier_range()]
            .chunks(self.shape.embed_dim)
            .map(|row| dot(row, embedding))
            .collect()
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// gradient with respect to the cosines is `dcos`.
    pub fn backward(&self, cache: &ForwardCache, dcos: &[f64], grad: &mut [f64]) {
        let embed_dim = self.shape.embed_dim;
        let e = &cache.embedding;

        let cls = self.classifier_range();
        let mut de = vec![0.0; embed_dim];
        for ((row, grow), &g) in self.params[cls.clone()]
            .chunks(embed_dim)
            .zip(grad[cls].chunks_mut(embed_dim))
            .zip(dcos)
        {
            for i in 0..embed_dim {
                de[i] += g * row[i];
                grow[i] += g * e[i];
            }
        }

        // Through e = r / |r|.
        let radial = dot(e, &de);
        let dr: Vec<f64> = de
            .iter()
            .zip(e)
            .map(|(d, x)| (d - x * radial) / cache.raw_norm)
            .collect();

        let hidden = self.slots.len() - 1;
        let proj = &self.slots[hidden];
        let w = &self.params[proj.weights.clone()];
        let mut dpooled = vec![0.0; proj.inputs];
        for (o, &d) in dr.iter().enumerate() {
            let row = o * proj.inputs;
            for i in 0..proj.inputs {
                grad[proj.weights.start + row + i] += d * cache.pooled[i];
                dpooled[i] += d * w[row + i];
            }
            grad[proj.bias.start + o] += d;
        }

        let frames = cache.activations[0].len() / self.shape.frame_dim;
        dpooled.iter_mut().for_each(|d| *d /= frames as f64);

        for t in 0..frames {
            let mut dh = dpooled.clone();
            for k in (0..hidden).rev() {
                let slot = &self.slots[k];
                let act = self.activation_of(k);
                let out = &cache.activations[k + 1][t * slot.outputs..(t + 1) * slot.outputs];
                let input = &cache.activations[k][t * slot.inputs..(t + 1) * slot.inputs];
                let w = &self.params[slot.weights.clone()];
                let mut dinput = vec![0.0; slot.inputs];
                for o in 0..slot.outputs {
                    let da = dh[o] * act.derivative_from_output(out[o]);
                    if da == 0.0 {
                        continue;
                    }
                    let row = o * slot.inputs;
                    for i in 0..slot.inputs {
                        grad[slot.weights.start + row + i] += da * input[i];
                        dinput[i] += da * w[row + i];
                    }
                    grad[slot.bias.start + o] += da;
                }
                dh = dinput;
            }
        }
    }
}

/// Unit-norm embedding of a chunk.
pub fn forward_embed(model: &ToyModel, chunk: &[f64]) -> Vec<f64> {
    model.forward(chunk).embedding
}
