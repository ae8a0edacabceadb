use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use marginlab_core::loss::{amsoftmax_toy_grad, circle_toy_grad};
use marginlab_core::metrics::{
    compute_eer, compute_min_dcf, score_trials, similarity_histogram, DcfResult, EerResult, Trial, TrialScore,
};
use marginlab_core::train::{self, all_pairs_trials, embed_corpus, generate_corpus, Corpus, TrainOutput};
use marginlab_core::{LossSpec, LossVariant, MarginSchedule};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats::{self, GradRow};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const MODEL_FILE: &str = "model.bin";
pub const GRAD_FIELD_FILE: &str = "grad_field.csv";
pub const SCORES_FILE: &str = "scores.txt";
pub const TARGET_HIST_FILE: &str = "hist_target.csv";
pub const NONTARGET_HIST_FILE: &str = "hist_nontarget.csv";

/// Toy gradients over the uniform `resolution × resolution` grid on
/// `[0, 1]²`, with `s_p` in the outer loop.
pub fn grad_field(spec: &LossSpec, resolution: usize, classes: usize) -> CliResult<Vec<GradRow>> {
    if resolution < 2 {
        return Err(CliError::Config(format!("grad_field.resolution must be >= 2, got {resolution}")));
    }
    spec.validate()?;
    let toy = match spec.variant {
        LossVariant::Softmax => LossSpec::am_softmax(spec.s, 0.0),
        LossVariant::AngularSoftmax if spec.m1 == 1.0 && spec.m2 == 0.0 => *spec,
        LossVariant::CircleLoss => *spec,
        LossVariant::AngularSoftmax => {
            return Err(CliError::Config(
                "loss: gradient fields are defined for softmax, am-softmax and circle loss".into(),
            ))
        }
    };
    let step = (resolution - 1) as f64;
    let mut rows = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let s_p = i as f64 / step;
        for j in 0..resolution {
            let s_n = j as f64 / step;
            let g = match toy.variant {
                LossVariant::CircleLoss => circle_toy_grad(s_p, s_n, &toy, classes)?,
                _ => amsoftmax_toy_grad(s_p, s_n, &toy, classes)?,
            };
            rows.push([s_p, s_n, g.g_p, g.g_n]);
        }
    }
    Ok(rows)
}

pub fn write_grad_field(cfg: &RunConfig, spec: &LossSpec, path: &Path) -> CliResult<usize> {
    let rows = grad_field(spec, cfg.grad_field.resolution, cfg.grad_field.classes)?;
    formats::write_file(path, formats::grad_field_csv(&rows).as_bytes())?;
    Ok(rows.len())
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub output: TrainOutput,
    pub corpus: Corpus,
    /// EER over all pairs of training utterances, scored by true speaker.
    pub train_eer: EerResult,
}

impl TrainReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        match self.output.diagnostics.last() {
            Some(d) => {
                let _ = writeln!(out, "epochs: {}", d.epoch + 1);
                let _ = writeln!(out, "final loss: {:.6}", d.loss);
                let _ = writeln!(out, "final r_mean: {:.6}", d.r_mean);
            }
            None => out.push_str("epochs: 0\n"),
        }
        let _ = writeln!(out, "train EER: {:.2}%", 100.0 * self.train_eer.eer);
        out
    }
}

/// Trains on the configured corpus without touching the filesystem.
pub fn run_training(cfg: &RunConfig) -> CliResult<TrainReport> {
    let config = cfg.train_config()?;
    let corpus = generate_corpus(&cfg.corpus_spec()?)?;
    let output = train::train(&config, &corpus)?;
    let scores = score_trials(&embed_corpus(&output.model, &corpus), &all_pairs_trials(&corpus))?;
    let train_eer = compute_eer(&scores)?;
    Ok(TrainReport {
        output,
        corpus,
        train_eer,
    })
}

/// Trains and writes the diagnostics CSV and model file into `out`.
pub fn train_to_dir(cfg: &RunConfig, out: &Path) -> CliResult<TrainReport> {
    let report = run_training(cfg)?;
    formats::write_file(
        &out.join(DIAGNOSTICS_FILE),
        formats::diagnostics_csv(&report.output.diagnostics).as_bytes(),
    )?;
    formats::write_file(&out.join(MODEL_FILE), &formats::encode_model(&report.output.model))?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub trials: Vec<Trial>,
    pub scores: Vec<TrialScore>,
    pub eer: EerResult,
    pub min_dcf: DcfResult,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        let targets = self.scores.iter().filter(|s| s.is_target).count();
        format!(
            "trials: {} ({} target, {} non-target)\nEER: {:.2}%\nminDCF: {:.3}\n",
            self.scores.len(),
            targets,
            self.scores.len() - targets,
            100.0 * self.eer.eer,
            self.min_dcf.min_dcf
        )
    }
}

/// Scores whole-utterance embeddings of the evaluation corpus.
pub fn run_eval(cfg: &RunConfig, model: &train::ToyModel) -> CliResult<EvalReport> {
    let corpus = generate_corpus(&cfg.eval_corpus_spec()?)?;
    if model.shape().frame_dim != corpus.frame_dim {
        return Err(CliError::Config(format!(
            "model expects frame_dim {}, evaluation corpus has {}",
            model.shape().frame_dim,
            corpus.frame_dim
        )));
    }
    let trials = match &cfg.eval.trials {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            formats::parse_trials(&text)?
        }
        None => all_pairs_trials(&corpus),
    };
    let scores = score_trials(&embed_corpus(model, &corpus), &trials)?;
    let eer = compute_eer(&scores)?;
    let min_dcf = compute_min_dcf(&scores, &cfg.dcf_spec()?)?;
    Ok(EvalReport {
        trials,
        scores,
        eer,
        min_dcf,
    })
}

/// Evaluates and writes the score file and both histograms into `out`.
pub fn eval_to_dir(cfg: &RunConfig, model_path: &Path, out: &Path) -> CliResult<EvalReport> {
    let model = formats::read_model(model_path)?;
    let report = run_eval(cfg, &model)?;
    let raw: Vec<f64> = report.scores.iter().map(|s| s.score).collect();
    formats::write_file(&out.join(SCORES_FILE), formats::scores_text(&report.trials, &raw).as_bytes())?;
    for (file, target) in [(TARGET_HIST_FILE, true), (NONTARGET_HIST_FILE, false)] {
        let picked: Vec<f64> = report
            .scores
            .iter()
            .filter(|s| s.is_target == target)
            .map(|s| s.score)
            .collect();
        let hist = similarity_histogram(&picked, cfg.eval.histogram_bins)?;
        formats::write_file(&out.join(file), formats::histogram_csv(&hist).as_bytes())?;
    }
    Ok(report)
}

/// Effective margin per epoch, or per chunk width for chunk-based margins.
pub fn margin_plan(cfg: &RunConfig) -> CliResult<String> {
    let config = cfg.train_config()?;
    let mut out = String::new();
    match &config.margin {
        MarginSchedule::Chunk(c) => {
            out.push_str("L,margin\n");
            let lo = config.chunk_intervals.iter().map(|i| i.0).min().unwrap_or(c.l_min);
            let hi = config.chunk_intervals.iter().map(|i| i.1).max().unwrap_or(c.l_max);
            for l in lo..=hi {
                let _ = writeln!(out, "{l},{}", c.chunk_margin(l)?);
            }
        }
        _ => {
            let plan = config.stage_plan()?;
            out.push_str("epoch,stage,learning_rate,margin\n");
            for epoch in 0..config.epochs {
                let stage = plan.stage_of(epoch);
                let margin = config.epoch_margin(stage)?.unwrap_or(f64::NAN);
                let _ = writeln!(
                    out,
                    "{},{},{},{margin}",
                    epoch + 1,
                    stage + 1,
                    config.learning_rate(stage)
                );
            }
        }
    }
    Ok(out)
}
