//! Run configuration files.
//!
//! A config is TOML with one table per section; `loss.s = 60` and a `[loss]`
//! table with `s = 60` are equivalent. Every key is optional and unknown keys
//! are rejected. Defaults are listed in the README.

use std::fs;
use std::path::{Path, PathBuf};

use marginlab_core::train::{Activation, SgdConfig, SyntheticCorpusSpec, TrainConfig};
use marginlab_core::{ChunkMarginSpec, DcfSpec, LossSpec, LossVariant, MarginSchedule, StageSchedule};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Training seed: model initialization, chunk sampling, diagnostics.
    pub seed: u64,
    pub out: PathBuf,
    pub loss: LossSection,
    pub margin: MarginSection,
    pub sgd: SgdSection,
    pub train: TrainSection,
    pub corpus: CorpusSection,
    pub eval: EvalSection,
    pub grad_field: GradFieldSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            loss: LossSection::default(),
            margin: MarginSection::default(),
            sgd: SgdSection::default(),
            train: TrainSection::default(),
            corpus: CorpusSection::default(),
            eval: EvalSection::default(),
            grad_field: GradFieldSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Softmax,
    AmSoftmax,
    ArcSoftmax,
    Angular,
    Circle,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub variant: LossKind,
    /// Scale; 60 for circle loss, 30 otherwise.
    pub s: Option<f64>,
    /// Margin of am-softmax, arc-softmax (0.2) and circle loss (0.4).
    pub m: Option<f64>,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            variant: LossKind::Circle,
            s: None,
            m: None,
            m1: 1.0,
            m2: 0.0,
            m3: 0.0,
        }
    }
}

impl LossSection {
    pub fn spec(&self) -> LossSpec {
        let s = self.s.unwrap_or(if self.variant == LossKind::Circle { 60.0 } else { 30.0 });
        match self.variant {
            LossKind::Softmax => LossSpec::softmax(s),
            LossKind::AmSoftmax => LossSpec::am_softmax(s, self.m.unwrap_or(0.2)),
            LossKind::ArcSoftmax => LossSpec::arc_softmax(s, self.m.unwrap_or(0.2)),
            LossKind::Angular => LossSpec::angular(s, self.m1, self.m2, self.m3),
            LossKind::Circle => LossSpec::circle(s, self.m.unwrap_or(0.4)),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MarginKind {
    #[default]
    Fixed,
    Stage,
    Chunk,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MarginSection {
    pub kind: MarginKind,
    /// One margin per training stage.
    pub stages: Vec<f64>,
    /// Chunk-based base margin; defaults to the loss margin.
    pub m0: Option<f64>,
    pub lambda: f64,
    /// Chunk-width bounds; default to the span of `train.chunk_intervals`.
    pub l_min: Option<usize>,
    pub l_max: Option<usize>,
}

impl Default for MarginSection {
    fn default() -> Self {
        Self {
            kind: MarginKind::Fixed,
            stages: vec![0.40, 0.35, 0.32],
            m0: None,
            lambda: ChunkMarginSpec::DEFAULT_LAMBDA,
            l_min: None,
            l_max: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SgdSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_drop: f64,
}

impl Default for SgdSection {
    fn default() -> Self {
        let d = SgdConfig::default();
        Self {
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            weight_decay: d.weight_decay,
            lr_drop: d.lr_drop,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    #[default]
    Tanh,
    Identity,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub chunk_intervals: Vec<[usize; 2]>,
    /// Zero-based first epoch of each stage; omitted means equal stages.
    pub stage_starts: Option<Vec<usize>>,
    pub hidden: Vec<usize>,
    pub activation: ActivationKind,
    pub embed_dim: usize,
    pub diagnostics_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            batch_size: d.batch_size,
            epochs: d.epochs,
            chunk_intervals: d.chunk_intervals.iter().map(|&(a, b)| [a, b]).collect(),
            stage_starts: None,
            hidden: d.hidden.iter().map(|h| h.0).collect(),
            activation: ActivationKind::Tanh,
            embed_dim: d.embed_dim,
            diagnostics_fraction: d.diagnostics_fraction,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    pub frame_dim: usize,
    pub max_frames: usize,
    pub within_speaker_noise: f64,
    pub label_noise_rate: f64,
    pub seed: u64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            num_speakers: 50,
            utterances_per_speaker: 20,
            frame_dim: 16,
            max_frames: 60,
            within_speaker_noise: 2.0,
            label_noise_rate: 0.05,
            seed: 1,
        }
    }
}

impl CorpusSection {
    pub fn spec(&self) -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            num_speakers: self.num_speakers,
            utterances_per_speaker: self.utterances_per_speaker,
            frame_dim: self.frame_dim,
            max_frames: self.max_frames,
            within_speaker_noise: self.within_speaker_noise,
            label_noise_rate: self.label_noise_rate,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EvalSplit {
    /// Fresh speakers drawn from `eval.seed`.
    #[default]
    Heldout,
    /// The training corpus, scored by true speaker.
    Train,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub split: EvalSplit,
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    /// Held-out frame settings default to the training corpus.
    pub frame_dim: Option<usize>,
    pub max_frames: Option<usize>,
    pub within_speaker_noise: Option<f64>,
    pub seed: u64,
    /// Trial list file; omitted means every pair of evaluation utterances.
    pub trials: Option<PathBuf>,
    pub histogram_bins: usize,
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = DcfSpec::default();
        Self {
            split: EvalSplit::Heldout,
            num_speakers: 20,
            utterances_per_speaker: 10,
            frame_dim: None,
            max_frames: None,
            within_speaker_noise: None,
            seed: 1000,
            trials: None,
            histogram_bins: 40,
            p_target: d.p_target,
            c_miss: d.c_miss,
            c_fa: d.c_fa,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GradFieldSection {
    pub resolution: usize,
    pub classes: usize,
}

impl Default for GradFieldSection {
    fn default() -> Self {
        Self {
            resolution: 101,
            classes: 5994,
        }
    }
}

fn prefixed(section: &str) -> impl Fn(marginlab_core::Error) -> CliError + '_ {
    move |e| match CliError::from(e) {
        CliError::Config(msg) => CliError::Config(format!("{section}: {msg}")),
        other => other,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn loss_spec(&self) -> CliResult<LossSpec> {
        let spec = self.loss.spec();
        spec.validate().map_err(prefixed("loss"))?;
        Ok(spec)
    }

    pub fn margin_schedule(&self) -> CliResult<MarginSchedule> {
        let m = &self.margin;
        Ok(match m.kind {
            MarginKind::Fixed => MarginSchedule::Fixed,
            MarginKind::Stage => {
                MarginSchedule::Stage(StageSchedule::new(m.stages.clone()).map_err(prefixed("margin.stages"))?)
            }
            MarginKind::Chunk => {
                let intervals = &self.train.chunk_intervals;
                let lo = intervals.iter().map(|i| i[0]).min().unwrap_or(0);
                let hi = intervals.iter().map(|i| i[1]).max().unwrap_or(0);
                let spec = ChunkMarginSpec::new(
                    m.m0.unwrap_or(self.loss.spec().margin()),
                    m.lambda,
                    m.l_min.unwrap_or(lo),
                    m.l_max.unwrap_or(hi),
                )
                .map_err(prefixed("margin"))?;
                MarginSchedule::Chunk(spec)
            }
        })
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let t = &self.train;
        let activation = match t.activation {
            ActivationKind::Tanh => Activation::Tanh,
            ActivationKind::Identity => Activation::Identity,
        };
        let config = TrainConfig {
            loss: self.loss_spec()?,
            margin: self.margin_schedule()?,
            sgd: SgdConfig {
                learning_rate: self.sgd.learning_rate,
                momentum: self.sgd.momentum,
                weight_decay: self.sgd.weight_decay,
                lr_drop: self.sgd.lr_drop,
            },
            batch_size: t.batch_size,
            epochs: t.epochs,
            chunk_intervals: t.chunk_intervals.iter().map(|i| (i[0], i[1])).collect(),
            stage_starts: t.stage_starts.clone(),
            hidden: t.hidden.iter().map(|&h| (h, activation)).collect(),
            embed_dim: t.embed_dim,
            diagnostics_fraction: t.diagnostics_fraction,
            seed: self.seed,
        };
        config.validate().map_err(prefixed("train"))?;
        if config.hidden.iter().any(|h| h.0 == 0) || config.embed_dim == 0 {
            return Err(CliError::Config("train: layer widths must be >= 1".into()));
        }
        Ok(config)
    }

    pub fn corpus_spec(&self) -> CliResult<SyntheticCorpusSpec> {
        let spec = self.corpus.spec();
        spec.validate().map_err(prefixed("corpus"))?;
        Ok(spec)
    }

    /// Corpus of held-out speakers. Labels carry no noise since scoring uses
    /// the true speaker.
    pub fn eval_corpus_spec(&self) -> CliResult<SyntheticCorpusSpec> {
        let e = &self.eval;
        let spec = match e.split {
            EvalSplit::Train => self.corpus_spec()?,
            EvalSplit::Heldout => SyntheticCorpusSpec {
                num_speakers: e.num_speakers,
                utterances_per_speaker: e.utterances_per_speaker,
                frame_dim: e.frame_dim.unwrap_or(self.corpus.frame_dim),
                max_frames: e.max_frames.unwrap_or(self.corpus.max_frames),
                within_speaker_noise: e.within_speaker_noise.unwrap_or(self.corpus.within_speaker_noise),
                label_noise_rate: 0.0,
                seed: e.seed,
            },
        };
        spec.validate().map_err(prefixed("eval"))?;
        Ok(spec)
    }

    pub fn dcf_spec(&self) -> CliResult<DcfSpec> {
        let spec = DcfSpec {
            p_target: self.eval.p_target,
            c_miss: self.eval.c_miss,
            c_fa: self.eval.c_fa,
        };
        spec.validate().map_err(prefixed("eval"))?;
        Ok(spec)
    }

    pub fn is_circle(&self) -> bool {
        self.loss.spec().variant == LossVariant::CircleLoss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn dotted_keys_and_tables_agree() {
        let a = RunConfig::parse("loss.s = 32.0\nloss.variant = \"softmax\"\n").unwrap();
        let b = RunConfig::parse("[loss]\ns = 32.0\nvariant = \"softmax\"\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_spec().unwrap(), LossSpec::softmax(32.0));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("[train]\nepoch = 3\n").unwrap_err();
        assert!(matches!(&err, CliError::Config(m) if m.contains("epoch")), "{err}");
        let err = RunConfig::parse("bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn chunk_bounds_default_to_interval_span() {
        let cfg = RunConfig::parse("margin.kind = \"chunk\"\n").unwrap();
        match cfg.margin_schedule().unwrap() {
            MarginSchedule::Chunk(c) => {
                assert_eq!((c.l_min, c.l_max), (20, 60));
                assert_eq!(c.m0, 0.4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_name_their_section() {
        let cfg = RunConfig::parse("loss.m = 1.5\n").unwrap();
        let err = cfg.train_config().unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("loss"), "{err}");
    }
}
