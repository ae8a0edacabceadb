//! Margin schedules: per training stage, or per sampled chunk width.

use alloc::vec::Vec;

use crate::error::{config, domain};
use crate::Result;

/// Margins for consecutive training stages, non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSchedule {
    margins: Vec<f64>,
}

impl StageSchedule {
    pub fn new(margins: Vec<f64>) -> Result<Self> {
        if margins.is_empty() {
            return Err(config!("stage schedule needs at least one margin"));
        }
        if let Some(m) = margins.iter().find(|m| !(**m > 0.0 && **m < 1.0)) {
            return Err(config!("stage margin {m} outside (0, 1)"));
        }
        if margins.windows(2).any(|w| w[1] > w[0]) {
            return Err(config!("stage margins must be non-increasing, got {margins:?}"));
        }
        Ok(Self { margins })
    }

    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    pub fn stages(&self) -> usize {
        self.margins.len()
    }

    pub fn stage_margin(&self, stage: usize) -> Result<f64> {
        self.margins.get(stage).copied().ok_or_else(|| {
            config!("stage {stage} out of range for a {}-stage schedule", self.margins.len())
        })
    }
}

/// Chunk-width margin `m = (1 - λ (L - L_min) / (L_max - L_min)) · m0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkMarginSpec {
    pub m0: f64,
    pub lambda: f64,
    pub l_min: usize,
    pub l_max: usize,
}

impl ChunkMarginSpec {
    pub const DEFAULT_LAMBDA: f64 = 0.25;

    pub fn new(m0: f64, lambda: f64, l_min: usize, l_max: usize) -> Result<Self> {
        let spec = Self {
            m0,
            lambda,
            l_min,
            l_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m0 > 0.0 && self.m0 < 1.0) {
            return Err(config!("chunk base margin m0 {} outside (0, 1)", self.m0));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(config!("chunk lambda {} outside [0, 1]", self.lambda));
        }
        if self.l_min >= self.l_max {
            return Err(config!(
                "chunk bounds need L_min < L_max, got [{}, {}]",
                self.l_min,
                self.l_max
            ));
        }
        Ok(())
    }

    pub fn chunk_margin(&self, l: usize) -> Result<f64> {
        if l < self.l_min || l > self.l_max {
            return Err(domain!(
                "chunk width {l} outside [{}, {}]",
                self.l_min,
                self.l_max
            ));
        }
        let frac = (l - self.l_min) as f64 / (self.l_max - self.l_min) as f64;
        Ok((1.0 - self.lambda * frac) * self.m0)
    }
}

/// How the loss margin evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginSchedule {
    /// The loss spec's own margin throughout.
    Fixed,
    Stage(StageSchedule),
    Chunk(ChunkMarginSpec),
}

/// First epoch of every stage; `starts[0] == 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    starts: Vec<usize>,
}

impl StagePlan {
    /// Splits `epochs` into `stages` near-equal consecutive blocks.
    pub fn equal(epochs: usize, stages: usize) -> Result<Self> {
        if stages == 0 {
            return Err(config!("need at least one training stage"));
        }
        let starts = (0..stages).map(|k| (k * epochs).div_ceil(stages)).collect();
        Ok(Self { starts })
    }

    pub fn from_starts(starts: Vec<usize>) -> Result<Self> {
        if starts.first() != Some(&0) {
            return Err(config!("stage starts must begin at epoch 0, got {starts:?}"));
        }
        if starts.windows(2).any(|w| w[1] < w[0]) {
            return Err(config!("stage starts must be non-decreasing, got {starts:?}"));
        }
        Ok(Self { starts })
    }

    pub fn stages(&self) -> usize {
        self.starts.len()
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    /// Stage index of a 0-based epoch.
    pub fn stage_of(&self, epoch: usize) -> usize {
        self.starts.partition_point(|&s| s <= epoch) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn stage_margins_follow_schedule() {
        let s = StageSchedule::new(vec![0.40, 0.35, 0.32]).unwrap();
        assert_eq!(s.stage_margin(0).unwrap(), 0.40);
        assert_eq!(s.stage_margin(1).unwrap(), 0.35);
        assert_eq!(s.stage_margin(2).unwrap(), 0.32);
        assert!(matches!(s.stage_margin(3), Err(crate::Error::Config(_))));
        let single = StageSchedule::new(vec![0.40]).unwrap();
        assert_eq!(single.stage_margin(0).unwrap(), 0.40);
    }

    #[test]
    fn stage_schedule_rejects_bad_input() {
        assert!(StageSchedule::new(vec![]).is_err());
        assert!(StageSchedule::new(vec![0.3, 0.4]).is_err());
        assert!(StageSchedule::new(vec![1.0]).is_err());
        assert!(StageSchedule::new(vec![0.4, 0.0]).is_err());
    }

    #[test]
    fn chunk_margin_examples() {
        let c = ChunkMarginSpec::new(0.40, 0.25, 200, 400).unwrap();
        assert_eq!(c.chunk_margin(200).unwrap(), 0.40);
        assert_eq!(c.chunk_margin(400).unwrap(), 0.75 * 0.40);
        assert!((c.chunk_margin(300).unwrap() - 0.35).abs() < 1e-15);
        assert!(matches!(c.chunk_margin(199), Err(crate::Error::Domain(_))));
        assert!(c.chunk_margin(401).is_err());
        let flat = ChunkMarginSpec::new(0.40, 0.0, 200, 400).unwrap();
        assert!((200..=400).all(|l| flat.chunk_margin(l).unwrap() == 0.40));
    }

    #[test]
    fn chunk_spec_validation() {
        assert!(ChunkMarginSpec::new(0.4, 0.25, 300, 300).is_err());
        assert!(ChunkMarginSpec::new(0.4, 1.5, 200, 300).is_err());
        assert!(ChunkMarginSpec::new(1.2, 0.5, 200, 300).is_err());
    }

    #[test]
    fn equal_thirds() {
        let p = StagePlan::equal(9, 3).unwrap();
        assert_eq!(p.starts(), &[0, 3, 6]);
        let stages: Vec<_> = (0..9).map(|e| p.stage_of(e)).collect();
        assert_eq!(stages, vec![0, 0, 0, 1, 1, 1, 2, 2, 2]);
        let p = StagePlan::equal(10, 3).unwrap();
        assert_eq!(p.starts(), &[0, 4, 7]);
        assert_eq!(p.stage_of(100), 2);
    }

    #[test]
    fn explicit_starts() {
        let p = StagePlan::from_starts(vec![0, 5, 8]).unwrap();
        assert_eq!(p.stage_of(4), 0);
        assert_eq!(p.stage_of(5), 1);
        assert_eq!(p.stage_of(9), 2);
        assert!(StagePlan::from_starts(vec![1, 5]).is_err());
        assert!(StagePlan::from_starts(vec![0, 5, 3]).is_err());
    }
}
