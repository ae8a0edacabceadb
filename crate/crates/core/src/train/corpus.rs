//! Synthetic speaker corpus and chunk sampling.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{config, domain};
use crate::math::normalize;
use crate::Result;

/// Parameters of a synthetic corpus. Generation is a pure function of this
/// value.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusSpec {
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    pub frame_dim: usize,
    pub max_frames: usize,
    /// Standard deviation of the per-coordinate frame noise.
    pub within_speaker_noise: f64,
    /// Fraction of utterances whose training label is replaced by a random
    /// other speaker.
    pub label_noise_rate: f64,
    pub seed: u64,
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frame_dim < 2 {
            return Err(config!("frame_dim must be >= 2, got {}", self.frame_dim));
        }
        if self.num_speakers < 2 {
            return Err(config!("num_speakers must be >= 2, got {}", self.num_speakers));
        }
        if self.utterances_per_speaker == 0 || self.max_frames == 0 {
            return Err(config!("utterances_per_speaker and max_frames must be >= 1"));
        }
        if !(self.within_speaker_noise.is_finite() && self.within_speaker_noise >= 0.0) {
            return Err(config!(
                "within_speaker_noise must be finite and >= 0, got {}",
                self.within_speaker_noise
            ));
        }
        if !(0.0..1.0).contains(&self.label_noise_rate) {
            return Err(config!(
                "label_noise_rate must lie in [0, 1), got {}",
                self.label_noise_rate
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// True speaker.
    pub speaker: usize,
    /// Training label; differs from `speaker` for relabeled utterances.
    pub label: usize,
    /// `num_frames × frame_dim`, row-major.
    pub frames: Vec<f64>,
}

impl Utterance {
    pub fn num_frames(&self, frame_dim: usize) -> usize {
        self.frames.len() / frame_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub frame_dim: usize,
    pub num_speakers: usize,
    pub utterances: Vec<Utterance>,
    /// Indices of relabeled utterances, ascending.
    pub relabeled: Vec<usize>,
}

pub fn utterance_id(speaker: usize, index: usize) -> String {
    format!("spk{speaker:03}-utt{index:03}")
}

/// Every speaker gets a direction drawn uniformly on the unit sphere; every
/// frame is that direction plus isotropic Gaussian noise. Then exactly
/// `floor(label_noise_rate · N)` utterances are relabeled.
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.frame_dim;

    let directions: Vec<Vec<f64>> = (0..spec.num_speakers)
        .map(|_| {
            let mut d: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            normalize(&mut d);
            d
        })
        .collect();

    let noise = Normal::new(0.0, spec.within_speaker_noise)
        .map_err(|e| config!("within_speaker_noise: {e}"))?;
    let mut utterances = Vec::with_capacity(spec.num_speakers * spec.utterances_per_speaker);
    for (speaker, dir) in directions.iter().enumerate() {
        for index in 0..spec.utterances_per_speaker {
            let frames = (0..spec.max_frames)
                .flat_map(|_| dir.iter())
                .map(|&mu| mu + noise.sample(&mut rng))
                .collect();
            utterances.push(Utterance {
                id: utterance_id(speaker, index),
                speaker,
                label: speaker,
                frames,
            });
        }
    }

    let n = utterances.len();
    let count = libm::floor(spec.label_noise_rate * n as f64) as usize;
    let mut relabeled = index::sample(&mut rng, n, count).into_vec();
    relabeled.sort_unstable();
    for &i in &relabeled {
        let speaker = utterances[i].speaker;
        let other = rng.random_range(0..spec.num_speakers - 1);
        utterances[i].label = if other >= speaker { other + 1 } else { other };
    }

    Ok(Corpus {
        frame_dim: dim,
        num_speakers: spec.num_speakers,
        utterances,
        relabeled,
    })
}

/// Crops `frames` to exactly `width` frames at a uniform random offset.
/// Utterances shorter than `width` are first repeated cyclically to the
/// smallest whole number of copies that covers `width`.
pub fn sample_chunk<R: Rng + ?Sized>(frames: &[f64], frame_dim: usize, width: usize, rng: &mut R) -> Result<Vec<f64>> {
    if frame_dim == 0 || !frames.len().is_multiple_of(frame_dim) {
        return Err(domain!("frame buffer of {} values is not a multiple of {frame_dim}", frames.len()));
    }
    let total = frames.len() / frame_dim;
    if total == 0 {
        return Err(domain!("cannot crop an empty utterance"));
    }
    if width == 0 {
        return Err(domain!("chunk width must be >= 1"));
    }
    let extended = width.div_ceil(total) * total;
    let offset = rng.random_range(0..=extended - width);
    let mut chunk = Vec::with_capacity(width * frame_dim);
    for i in 0..width {
        let t = (offset + i) % total;
        chunk.extend_from_slice(&frames[t * frame_dim..(t + 1) * frame_dim]);
    }
    Ok(chunk)
}

/// Uniform integer in `[l1, l2]`.
pub fn sample_chunk_width<R: Rng + ?Sized>(l1: usize, l2: usize, rng: &mut R) -> Result<usize> {
    if l1 > l2 {
        return Err(config!("chunk interval [{l1}, {l2}] is empty"));
    }
    Ok(rng.random_range(l1..=l2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            num_speakers: 4,
            utterances_per_speaker: 3,
            frame_dim: 5,
            max_frames: 7,
            within_speaker_noise: 0.3,
            label_noise_rate: 0.0,
            seed: 11,
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        assert_eq!(generate_corpus(&spec()).unwrap(), generate_corpus(&spec()).unwrap());
        let other = SyntheticCorpusSpec { seed: 12, ..spec() };
        assert_ne!(generate_corpus(&spec()).unwrap(), generate_corpus(&other).unwrap());
    }

    #[test]
    fn noiseless_utterances_repeat_the_direction() {
        let c = generate_corpus(&SyntheticCorpusSpec {
            within_speaker_noise: 0.0,
            ..spec()
        })
        .unwrap();
        let first = &c.utterances[0].frames;
        assert_eq!(&c.utterances[1].frames, first);
        assert_eq!(&first[..5], &first[5..10]);
        let n: f64 = first[..5].iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relabel_count_is_floor() {
        let c = generate_corpus(&SyntheticCorpusSpec {
            num_speakers: 10,
            utterances_per_speaker: 100,
            label_noise_rate: 0.1,
            max_frames: 1,
            ..spec()
        })
        .unwrap();
        assert_eq!(c.relabeled.len(), 100);
        let changed: Vec<usize> = c
            .utterances
            .iter()
            .enumerate()
            .filter(|(_, u)| u.label != u.speaker)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(changed, c.relabeled);
        let c = generate_corpus(&SyntheticCorpusSpec {
            label_noise_rate: 0.25,
            ..spec()
        })
        .unwrap();
        assert_eq!(c.relabeled.len(), 3);
    }

    #[test]
    fn corpus_validation() {
        assert!(generate_corpus(&SyntheticCorpusSpec { frame_dim: 1, ..spec() }).is_err());
        assert!(generate_corpus(&SyntheticCorpusSpec { num_speakers: 1, ..spec() }).is_err());
        assert!(generate_corpus(&SyntheticCorpusSpec {
            label_noise_rate: 1.0,
            ..spec()
        })
        .is_err());
    }

    #[test]
    fn chunk_crop_and_extend() {
        let frames: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 3 frames of dim 2
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_chunk(&frames, 2, 3, &mut rng).unwrap(), frames);
        let twice = sample_chunk(&frames, 2, 6, &mut rng).unwrap();
        assert_eq!(twice, [frames.clone(), frames.clone()].concat());
        let one = sample_chunk(&frames, 2, 1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(one, sample_chunk(&frames, 2, 1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap());
        assert_eq!(one.len(), 2);
        let long = sample_chunk(&frames, 2, 4, &mut rng).unwrap();
        assert_eq!(long.len(), 8);
        assert!(sample_chunk(&[], 2, 1, &mut rng).is_err());
        assert!(sample_chunk(&frames, 2, 0, &mut rng).is_err());
    }

    #[test]
    fn chunk_width_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_chunk_width(300, 300, &mut rng).unwrap(), 300);
        assert!(sample_chunk_width(4, 3, &mut rng).is_err());
        let a: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..50).map(|_| sample_chunk_width(200, 400, &mut r).unwrap()).collect()
        };
        let b: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..50).map(|_| sample_chunk_width(200, 400, &mut r).unwrap()).collect()
        };
        assert_eq!(a, b);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_chunk_width(200, 400, &mut r).unwrap() as f64).sum::<f64>() / n as f64;
        assert!((mean - 300.0).abs() < 1.0, "{mean}");
    }
}
