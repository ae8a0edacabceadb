//! Verification scoring: cosine scores, EER, minDCF and score histograms.
//!
//! A trial is accepted when its score is at or above the threshold. Both error
//! rates are computed from integer counts over a sweep of every distinct
//! score, plus the reject-all point at `+inf`. Tied scores move together as a
//! single step.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{config, domain};
use crate::math::{dot, norm};
use crate::{Error, Result};

/// Allowed deviation from unit norm for embeddings passed to [`cosine_score`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialScore {
    pub score: f64,
    pub is_target: bool,
}

impl TrialScore {
    pub fn new(score: f64, is_target: bool) -> Self {
        Self { score, is_target }
    }
}

/// Detection cost parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfSpec {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfSpec {
    fn default() -> Self {
        Self {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl DcfSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(config!("p_target {} outside (0, 1)", self.p_target));
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) || !(self.c_miss.is_finite() && self.c_fa.is_finite()) {
            return Err(config!("DCF costs must be finite and > 0"));
        }
        Ok(())
    }

    /// Cost of the better trivial system (accept-all or reject-all).
    pub fn normalizer(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
    }

    /// Un-normalized detection cost at the given error rates.
    pub fn cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        self.c_miss * p_miss * self.p_target + self.c_fa * p_fa * (1.0 - self.p_target)
    }
}

/// One point of the error-rate sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    /// Accept scores `>= threshold`; `+inf` rejects everything.
    pub threshold: f64,
    pub misses: usize,
    pub false_alarms: usize,
}

/// Error-rate sweep over all distinct scores, from reject-all to accept-all.
#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    pub points: Vec<OperatingPoint>,
    pub targets: usize,
    pub nontargets: usize,
}

impl Roc {
    pub fn new(trials: &[TrialScore]) -> Result<Self> {
        if let Some(t) = trials.iter().find(|t| !t.score.is_finite()) {
            return Err(domain!("non-finite trial score {}", t.score));
        }
        let targets = trials.iter().filter(|t| t.is_target).count();
        let nontargets = trials.len() - targets;
        if targets == 0 || nontargets == 0 {
            return Err(domain!(
                "need both target and non-target trials, got {targets} and {nontargets}"
            ));
        }
        let mut sorted: Vec<TrialScore> = trials.to_vec();
        sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

        let mut points = Vec::with_capacity(sorted.len() + 1);
        let (mut misses, mut false_alarms) = (targets, 0);
        points.push(OperatingPoint {
            threshold: f64::INFINITY,
            misses,
            false_alarms,
        });
        for group in sorted.chunk_by(|a, b| a.score == b.score) {
            let hits = group.iter().filter(|t| t.is_target).count();
            misses -= hits;
            false_alarms += group.len() - hits;
            points.push(OperatingPoint {
                threshold: group[0].score,
                misses,
                false_alarms,
            });
        }
        Ok(Self {
            points,
            targets,
            nontargets,
        })
    }

    pub fn p_miss(&self, p: &OperatingPoint) -> f64 {
        p.misses as f64 / self.targets as f64
    }

    pub fn p_fa(&self, p: &OperatingPoint) -> f64 {
        p.false_alarms as f64 / self.nontargets as f64
    }

    /// Where the miss and false-alarm curves cross, interpolating linearly
    /// between the two operating points that bracket the crossing.
    pub fn eer(&self) -> EerResult {
        let rates: Vec<(f64, f64, f64)> = self
            .points
            .iter()
            .map(|p| (self.p_miss(p), self.p_fa(p), p.threshold))
            .collect();
        eer_from_rates(&rates)
    }

    pub fn min_dcf(&self, spec: &DcfSpec) -> DcfResult {
        let mut best = DcfResult {
            min_dcf: f64::INFINITY,
            threshold: f64::INFINITY,
        };
        for p in &self.points {
            let c = spec.cost(self.p_miss(p), self.p_fa(p)) / spec.normalizer();
            if c < best.min_dcf {
                best = DcfResult {
                    min_dcf: c,
                    threshold: p.threshold,
                };
            }
        }
        best
    }
}

/// Crossing of `(p_miss, p_fa, threshold)` rows ordered from reject-all to
/// accept-all. The first row must have `p_miss > p_fa` and the last
/// `p_miss < p_fa`.
pub fn eer_from_rates(rates: &[(f64, f64, f64)]) -> EerResult {
    for w in rates.windows(2) {
        let (pm0, pf0, t0) = w[0];
        let (pm1, pf1, t1) = w[1];
        let (d0, d1) = (pm0 - pf0, pm1 - pf1);
        if d1 == 0.0 {
            return EerResult { eer: pm1, threshold: t1 };
        }
        if d0 > 0.0 && d1 < 0.0 {
            let t = d0 / (d0 - d1);
            let threshold = if t0.is_finite() { t0 + t * (t1 - t0) } else { t1 };
            return EerResult {
                eer: pf0 + t * (pf1 - pf0),
                threshold,
            };
        }
    }
    unreachable!("the sweep always ends at p_miss = 0, p_fa = 1")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    /// Fraction, not percent.
    pub eer: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfResult {
    /// Normalized by [`DcfSpec::normalizer`].
    pub min_dcf: f64,
    pub threshold: f64,
}

pub fn compute_eer(trials: &[TrialScore]) -> Result<EerResult> {
    Ok(Roc::new(trials)?.eer())
}

pub fn compute_min_dcf(trials: &[TrialScore], spec: &DcfSpec) -> Result<DcfResult> {
    spec.validate()?;
    Ok(Roc::new(trials)?.min_dcf(spec))
}

/// Dot product of two unit-norm embeddings.
pub fn cosine_score(e1: &[f64], e2: &[f64]) -> Result<f64> {
    if e1.len() != e2.len() || e1.is_empty() {
        return Err(domain!(
            "embedding dimensions differ or are empty: {} vs {}",
            e1.len(),
            e2.len()
        ));
    }
    for e in [e1, e2] {
        let n = norm(e);
        if n.is_nan() || (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(domain!("embedding norm {n} is not 1"));
        }
    }
    Ok(dot(e1, e2))
}

/// An enrollment/test pair from a trial list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub is_target: bool,
}

/// Scores every trial in order.
pub fn score_trials(embeddings: &BTreeMap<String, Vec<f64>>, trials: &[Trial]) -> Result<Vec<TrialScore>> {
    let lookup = |id: &str| {
        embeddings
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(id.into()))
    };
    trials
        .iter()
        .map(|t| {
            let score = cosine_score(lookup(&t.enroll)?, lookup(&t.test)?)?;
            Ok(TrialScore::new(score, t.is_target))
        })
        .collect()
}

/// Uniform bins over `[-1, 1]`. Bins are left-closed except the last, which
/// is closed on both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Scores outside `[-1, 1]` land in the end bins.
pub fn similarity_histogram(scores: &[f64], bin_count: usize) -> Result<Histogram> {
    if bin_count == 0 {
        return Err(domain!("histogram needs at least one bin"));
    }
    let edges: Vec<f64> = (0..=bin_count)
        .map(|i| -1.0 + 2.0 * i as f64 / bin_count as f64)
        .collect();
    let mut counts = alloc::vec![0u64; bin_count];
    for &x in scores {
        if x.is_nan() {
            return Err(domain!("NaN score"));
        }
        let guess = libm::floor((x + 1.0) / 2.0 * bin_count as f64);
        let mut idx = guess.clamp(0.0, (bin_count - 1) as f64) as usize;
        while idx > 0 && x < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < bin_count && x >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}
