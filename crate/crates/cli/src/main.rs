use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use marginlab::commands;
use marginlab::config::{LossKind, RunConfig};
use marginlab::CliResult;

#[derive(Parser)]
#[command(name = "marginlab", version, about = "Angular-margin loss laboratory")]
struct Cli {
    /// Run configuration file (TOML). Omitted means all defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ToyLoss {
    Softmax,
    AmSoftmax,
    Circle,
}

#[derive(Subcommand)]
enum Command {
    /// Export toy-loss gradients over a grid on [0, 1]² as CSV.
    GradField {
        /// Loss variant; defaults to `loss.variant`.
        #[arg(long)]
        loss: Option<ToyLoss>,
        /// Scale factor s.
        #[arg(long)]
        scale: Option<f64>,
        /// Margin m.
        #[arg(long)]
        margin: Option<f64>,
        /// Grid points per axis.
        #[arg(long)]
        resolution: Option<usize>,
        /// Class count C.
        #[arg(long)]
        classes: Option<usize>,
        /// Output file; defaults to `<out>/grad_field.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train on the synthetic corpus; writes diagnostics.csv and model.bin.
    Train,
    /// Score trials with a trained model; writes scores and histograms.
    Eval {
        /// Model file; defaults to `<out>/model.bin`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Trial list; overrides `eval.trials`.
        #[arg(long)]
        trials: Option<PathBuf>,
    },
    /// Print the effective margin per epoch or per chunk width.
    MarginPlan,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    let out = cfg.out.clone();

    match cli.command {
        Command::GradField {
            loss,
            scale,
            margin,
            resolution,
            classes,
            output,
        } => {
            if let Some(kind) = loss {
                cfg.loss.variant = match kind {
                    ToyLoss::Softmax => LossKind::Softmax,
                    ToyLoss::AmSoftmax => LossKind::AmSoftmax,
                    ToyLoss::Circle => LossKind::Circle,
                };
            }
            cfg.loss.s = scale.or(cfg.loss.s);
            cfg.loss.m = margin.or(cfg.loss.m);
            cfg.grad_field.resolution = resolution.unwrap_or(cfg.grad_field.resolution);
            cfg.grad_field.classes = classes.unwrap_or(cfg.grad_field.classes);
            let spec = cfg.loss_spec()?;
            let path = output.unwrap_or_else(|| out.join(commands::GRAD_FIELD_FILE));
            let rows = commands::write_grad_field(&cfg, &spec, &path)?;
            println!("wrote {rows} rows to {}", path.display());
        }
        Command::Train => {
            let report = commands::train_to_dir(&cfg, &out)?;
            print!("{}", report.summary());
            println!("wrote {}", out.join(commands::DIAGNOSTICS_FILE).display());
            println!("wrote {}", out.join(commands::MODEL_FILE).display());
        }
        Command::Eval { model, trials } => {
            if trials.is_some() {
                cfg.eval.trials = trials;
            }
            let model = model.unwrap_or_else(|| out.join(commands::MODEL_FILE));
            let report = commands::eval_to_dir(&cfg, &model, &out)?;
            print!("{}", report.summary());
            println!("wrote {}", out.join(commands::SCORES_FILE).display());
        }
        Command::MarginPlan => print!("{}", commands::margin_plan(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("marginlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
