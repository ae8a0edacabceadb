//! Softmax, angular-margin softmax and circle losses with analytic gradients.
//!
//! All softmax-style expressions are evaluated on logit differences relative
//! to the target, so the returned loss is never negative and scales like
//! `s = 60` cannot overflow.
//!
//! The toy-scenario functions ([`amsoftmax_toy_grad`], [`circle_toy_grad`])
//! report gradients as descent magnitudes: `g_p = -∂L/∂s_p` and
//! `g_n = ∂L/∂s_n`. Both are non-negative in the usual operating region, which
//! is how the gradient fields are plotted.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, domain};
use crate::math::{acos, cos, exp, log, log1p, sigmoid, sin, softplus, sqrt};
use crate::Result;

/// Slack allowed on cosine inputs before they count as out of range.
pub const COSINE_SLACK: f64 = 1e-9;

/// Cosines are clamped to `|c| <= 1 - ARCCOS_CLAMP` before evaluating the
/// arccos derivative, which is singular at ±1.
pub const ARCCOS_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossVariant {
    /// Cross-entropy on scaled cosines, `s·cos θ_j`.
    Softmax,
    /// Target logit `s·(cos(m1·θ_y + m2) - m3)`; covers A-, Arc- and Am-Softmax.
    AngularSoftmax,
    /// Reduced circle loss with a single margin `m`.
    CircleLoss,
}

/// A loss variant and its hyper-parameters.
///
/// Only the fields relevant to `variant` are read: `m1`, `m2`, `m3` for
/// [`LossVariant::AngularSoftmax`] and `m` for [`LossVariant::CircleLoss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub variant: LossVariant,
    pub s: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m: f64,
}

impl LossSpec {
    fn base(variant: LossVariant, s: f64) -> Self {
        Self {
            variant,
            s,
            m1: 1.0,
            m2: 0.0,
            m3: 0.0,
            m: 0.0,
        }
    }

    pub fn softmax(s: f64) -> Self {
        Self::base(LossVariant::Softmax, s)
    }

    pub fn angular(s: f64, m1: f64, m2: f64, m3: f64) -> Self {
        Self {
            m1,
            m2,
            m3,
            ..Self::base(LossVariant::AngularSoftmax, s)
        }
    }

    /// Additive margin softmax: `ψ(θ) = cos θ - m`.
    pub fn am_softmax(s: f64, m: f64) -> Self {
        Self::angular(s, 1.0, 0.0, m)
    }

    /// Additive angular margin softmax: `ψ(θ) = cos(θ + m)`.
    pub fn arc_softmax(s: f64, m: f64) -> Self {
        Self::angular(s, 1.0, m, 0.0)
    }

    pub fn circle(s: f64, m: f64) -> Self {
        Self {
            m,
            ..Self::base(LossVariant::CircleLoss, s)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(config!("scale s must be finite and > 0, got {}", self.s));
        }
        match self.variant {
            LossVariant::Softmax => {}
            LossVariant::AngularSoftmax => {
                if !(self.m1.is_finite() && self.m1 >= 1.0) {
                    return Err(config!("m1 must be >= 1, got {}", self.m1));
                }
                for (name, v) in [("m2", self.m2), ("m3", self.m3)] {
                    if !(0.0..1.0).contains(&v) {
                        return Err(config!("{name} must lie in [0, 1), got {v}"));
                    }
                }
            }
            LossVariant::CircleLoss => {
                if !(self.m > 0.0 && self.m < 1.0) {
                    return Err(config!("circle margin m must lie in (0, 1), got {}", self.m));
                }
            }
        }
        Ok(())
    }

    /// The margin a schedule would drive: `m` for circle loss, `m2`/`m3` for
    /// the angular family (whichever is active), 0 for plain softmax.
    pub fn margin(&self) -> f64 {
        match self.variant {
            LossVariant::Softmax => 0.0,
            LossVariant::AngularSoftmax if self.m3 != 0.0 => self.m3,
            LossVariant::AngularSoftmax => self.m2,
            LossVariant::CircleLoss => self.m,
        }
    }

    fn expect(&self, variant: LossVariant) -> Result<()> {
        if self.variant != variant {
            return Err(config!("expected a {variant:?} spec, got {:?}", self.variant));
        }
        self.validate()
    }
}

/// Positive similarity and the `C - 1` negative similarities of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityState {
    pub s_p: f64,
    pub s_n: Vec<f64>,
}

impl SimilarityState {
    /// Tolerance on the `[-1, 1]` range check.
    pub const RANGE_TOL: f64 = 1e-12;

    pub fn new(s_p: f64, s_n: Vec<f64>) -> Result<Self> {
        if s_n.is_empty() {
            return Err(domain!("need at least one negative similarity (C >= 2)"));
        }
        for &v in core::iter::once(&s_p).chain(&s_n) {
            if !v.is_finite() || v.abs() > 1.0 + Self::RANGE_TOL {
                return Err(domain!("similarity {v} outside [-1, 1]"));
            }
        }
        Ok(Self { s_p, s_n })
    }

    /// Class count `C`.
    pub fn classes(&self) -> usize {
        self.s_n.len() + 1
    }
}

/// Gradient of a loss with respect to the positive and negative similarities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradPair {
    pub g_p: f64,
    pub g_n: f64,
    /// Set when an input similarity lies outside `[0, 1]`, the range the
    /// toy analysis assumes. The values are still computed.
    pub outside_unit_interval: bool,
}

/// Toy-scenario loss value plus the same range flag as [`GradPair`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyLoss {
    pub loss: f64,
    pub outside_unit_interval: bool,
}

/// Raw cross-entropy `-log softmax(logits)[label]`.
pub fn softmax_loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(domain!("label {label} out of range for {} classes", logits.len()));
    }
    if let Some(z) = logits.iter().find(|z| !z.is_finite()) {
        return Err(domain!("non-finite logit {z}"));
    }
    Ok(cross_entropy(logits, label))
}

/// Cross-entropy computed from differences `z_j - z_label`.
///
/// The result is `max(0, d) + ln(...)` with the `ln` argument at least one,
/// so it is never negative.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let target = logits[label];
    let diffs = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &z)| z - target);
    let max = diffs.clone().fold(0.0_f64, f64::max);
    if max == 0.0 {
        log1p(diffs.map(exp).sum())
    } else {
        max + log(exp(-max) + diffs.map(|d| exp(d - max)).sum::<f64>())
    }
}

/// Cross-entropy and its gradient `p - onehot` with respect to the logits.
fn cross_entropy_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = cross_entropy(logits, label);
    let target = logits[label];
    let grad = logits
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            let p = exp(z - target - loss);
            if j == label {
                p - 1.0
            } else {
                p
            }
        })
        .collect();
    (loss, grad)
}

/// Angular softmax loss on angles: `θ_y` for the target, `θ_j` for the rest.
///
/// The target logit is `s·(cos(m1·θ_y + m2) - m3)`, the others `s·cos θ_j`.
/// No monotone extension is applied when `m1·θ_y + m2 > π`.
pub fn angular_softmax_loss(target_angle: f64, other_angles: &[f64], spec: &LossSpec) -> Result<f64> {
    spec.expect(LossVariant::AngularSoftmax)?;
    for &theta in core::iter::once(&target_angle).chain(other_angles) {
        if !(0.0..=core::f64::consts::PI).contains(&theta) {
            return Err(domain!("angle {theta} outside [0, π]"));
        }
    }
    let mut logits = Vec::with_capacity(other_angles.len() + 1);
    logits.push(spec.s * (cos(spec.m1 * target_angle + spec.m2) - spec.m3));
    logits.extend(other_angles.iter().map(|&t| spec.s * cos(t)));
    Ok(cross_entropy(&logits, 0))
}

fn check_toy(s_p: f64, s_n: f64, classes: usize) -> Result<bool> {
    if classes < 2 {
        return Err(domain!("toy scenario needs C >= 2, got {classes}"));
    }
    for v in [s_p, s_n] {
        if !v.is_finite() || v.abs() > 1.0 + SimilarityState::RANGE_TOL {
            return Err(domain!("similarity {v} outside [-1, 1]"));
        }
    }
    Ok(!(0.0..=1.0).contains(&s_p) || !(0.0..=1.0).contains(&s_n))
}

fn ln_negatives(classes: usize) -> f64 {
    log((classes - 1) as f64)
}

/// Additive-margin softmax with one positive and `C - 1` identical negatives.
///
/// Reads `s` and the additive margin `m3` from an angular spec.
pub fn amsoftmax_toy_loss(s_p: f64, s_n: f64, spec: &LossSpec, classes: usize) -> Result<ToyLoss> {
    spec.expect(LossVariant::AngularSoftmax)?;
    let outside_unit_interval = check_toy(s_p, s_n, classes)?;
    let s = spec.s;
    let loss = softplus(s * s_n + ln_negatives(classes) - s * (s_p - spec.m3));
    Ok(ToyLoss {
        loss,
        outside_unit_interval,
    })
}

/// Toy gradients of the additive-margin softmax.
///
/// Both components equal `s·(C-1) / (e^{s(s_p - s_n - m)} + C - 1)`; they are
/// computed once so `g_p == g_n` holds bit for bit.
pub fn amsoftmax_toy_grad(s_p: f64, s_n: f64, spec: &LossSpec, classes: usize) -> Result<GradPair> {
    spec.expect(LossVariant::AngularSoftmax)?;
    let outside_unit_interval = check_toy(s_p, s_n, classes)?;
    let s = spec.s;
    let g = s * sigmoid(ln_negatives(classes) - s * (s_p - s_n - spec.m3));
    Ok(GradPair {
        g_p: g,
        g_n: g,
        outside_unit_interval,
    })
}

fn circle_positive_logit(s_p: f64, s: f64, m: f64) -> f64 {
    s * (m * m - (1.0 - s_p) * (1.0 - s_p))
}

fn circle_negative_logit(s_n: f64, s: f64, m: f64) -> f64 {
    s * (s_n * s_n - m * m)
}

/// Reduced circle loss:
/// `z_p = s(m² - (1 - s_p)²)`, `z_n^j = s((s_n^j)² - m²)`, cross-entropy on
/// `[z_p, z_n^1, ...]`.
pub fn circle_loss(state: &SimilarityState, spec: &LossSpec) -> Result<f64> {
    spec.expect(LossVariant::CircleLoss)?;
    let mut logits = Vec::with_capacity(state.classes());
    logits.push(circle_positive_logit(state.s_p, spec.s, spec.m));
    logits.extend(state.s_n.iter().map(|&v| circle_negative_logit(v, spec.s, spec.m)));
    Ok(cross_entropy(&logits, 0))
}

/// Parameters of the general circle loss: optima `O_p`, `O_n`, margins
/// `Δ_p`, `Δ_n` and scale `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleParams {
    pub o_p: f64,
    pub o_n: f64,
    pub delta_p: f64,
    pub delta_n: f64,
    pub s: f64,
}

impl CircleParams {
    /// The single-margin reduction `O_p = 1 + m`, `O_n = -m`, `Δ_p = 1 - m`,
    /// `Δ_n = m`.
    pub fn reduced(s: f64, m: f64) -> Self {
        Self {
            o_p: 1.0 + m,
            o_n: -m,
            delta_p: 1.0 - m,
            delta_n: m,
            s,
        }
    }
}

/// Self-paced weights and the parameters they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleInternals {
    pub alpha_p: f64,
    pub alpha_n: Vec<f64>,
    pub o_p: f64,
    pub o_n: f64,
    pub delta_p: f64,
    pub delta_n: f64,
}

/// `α_p = O_p - s_p` and `α_n^j = s_n^j - O_n`. Weights are not clipped at
/// zero. Under the reduced parameters `α_p = 1 + m - s_p > 0` for every
/// `s_p <= 1`.
pub fn circle_internals(state: &SimilarityState, params: &CircleParams) -> CircleInternals {
    CircleInternals {
        alpha_p: params.o_p - state.s_p,
        alpha_n: state.s_n.iter().map(|&v| v - params.o_n).collect(),
        o_p: params.o_p,
        o_n: params.o_n,
        delta_p: params.delta_p,
        delta_n: params.delta_n,
    }
}

/// General circle loss with explicit self-paced weights:
/// `z_p = s·α_p·(s_p - Δ_p)`, `z_n^j = s·α_n^j·(s_n^j - Δ_n)`.
pub fn circle_loss_general(state: &SimilarityState, params: &CircleParams) -> Result<f64> {
    if !(params.s.is_finite() && params.s > 0.0) {
        return Err(config!("scale s must be finite and > 0, got {}", params.s));
    }
    if ![params.o_p, params.o_n, params.delta_p, params.delta_n]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(config!("circle parameters must be finite"));
    }
    let internals = circle_internals(state, params);
    let mut logits = Vec::with_capacity(state.classes());
    logits.push(params.s * internals.alpha_p * (state.s_p - params.delta_p));
    logits.extend(
        internals
            .alpha_n
            .iter()
            .zip(&state.s_n)
            .map(|(a, &v)| params.s * a * (v - params.delta_n)),
    );
    Ok(cross_entropy(&logits, 0))
}

/// Reduced circle loss with one positive and `C - 1` identical negatives.
pub fn circle_toy_loss(s_p: f64, s_n: f64, spec: &LossSpec, classes: usize) -> Result<ToyLoss> {
    spec.expect(LossVariant::CircleLoss)?;
    let outside_unit_interval = check_toy(s_p, s_n, classes)?;
    let z_p = circle_positive_logit(s_p, spec.s, spec.m);
    let z_n = circle_negative_logit(s_n, spec.s, spec.m);
    Ok(ToyLoss {
        loss: softplus(z_n + ln_negatives(classes) - z_p),
        outside_unit_interval,
    })
}

/// Toy gradients of the reduced circle loss.
///
/// With `x = s(2m² - (1 - s_p)² - s_n²)` and `w = (C-1) / (e^x + C - 1)`:
/// `g_p = w·2s(1 - s_p)` and `g_n = w·2s·s_n`.
pub fn circle_toy_grad(s_p: f64, s_n: f64, spec: &LossSpec, classes: usize) -> Result<GradPair> {
    spec.expect(LossVariant::CircleLoss)?;
    let outside_unit_interval = check_toy(s_p, s_n, classes)?;
    let (s, m) = (spec.s, spec.m);
    let x = s * (2.0 * m * m - (1.0 - s_p) * (1.0 - s_p) - s_n * s_n);
    let w = sigmoid(ln_negatives(classes) - x);
    Ok(GradPair {
        g_p: w * 2.0 * s * (1.0 - s_p),
        g_n: w * 2.0 * s * s_n,
        outside_unit_interval,
    })
}

/// `ψ(c)` and `dψ/dc` for the angular target logit as a function of the
/// target cosine.
fn angular_target(c: f64, spec: &LossSpec) -> (f64, f64) {
    let c = c.clamp(-1.0, 1.0);
    let cd = c.clamp(-1.0 + ARCCOS_CLAMP, 1.0 - ARCCOS_CLAMP);
    if spec.m1 == 1.0 {
        // cos(θ + m2) expanded, with sin θ = sqrt(1 - c²) on θ ∈ [0, π].
        let (sm, cm) = (sin(spec.m2), cos(spec.m2));
        let psi = c * cm - sqrt(1.0 - c * c) * sm - spec.m3;
        let dpsi = cm + cd * sm / sqrt(1.0 - cd * cd);
        (psi, dpsi)
    } else {
        let phi = spec.m1 * acos(c) + spec.m2;
        let psi = cos(phi) - spec.m3;
        let dpsi = spec.m1 * sin(spec.m1 * acos(cd) + spec.m2) / sqrt(1.0 - cd * cd);
        (psi, dpsi)
    }
}

/// Loss and gradient with respect to every class cosine for one sample.
///
/// `cosines[label]` is the target similarity. Inputs may exceed `[-1, 1]` by
/// at most [`COSINE_SLACK`]. For the angular family the arccos derivative is
/// evaluated on a cosine clamped to `|c| <= 1 - ARCCOS_CLAMP`.
pub fn classification_loss_grad(cosines: &[f64], label: usize, spec: &LossSpec) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    if label >= cosines.len() {
        return Err(domain!("label {label} out of range for {} classes", cosines.len()));
    }
    if let Some(c) = cosines
        .iter()
        .find(|c| !c.is_finite() || c.abs() > 1.0 + COSINE_SLACK)
    {
        return Err(domain!("cosine {c} outside [-1, 1]"));
    }
    let s = spec.s;
    let (logits, dlogit): (Vec<f64>, Vec<f64>) = match spec.variant {
        LossVariant::Softmax => (cosines.iter().map(|&c| s * c).collect(), vec![s; cosines.len()]),
        LossVariant::AngularSoftmax => cosines
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                if j == label {
                    let (psi, dpsi) = angular_target(c, spec);
                    (s * psi, s * dpsi)
                } else {
                    (s * c, s)
                }
            })
            .unzip(),
        LossVariant::CircleLoss => cosines
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                if j == label {
                    (circle_positive_logit(c, s, spec.m), 2.0 * s * (1.0 - c))
                } else {
                    (circle_negative_logit(c, s, spec.m), 2.0 * s * c)
                }
            })
            .unzip(),
    };
    let (loss, mut grad) = cross_entropy_grad(&logits, label);
    grad.iter_mut().zip(&dlogit).for_each(|(g, d)| *g *= d);
    Ok((loss, grad))
}
