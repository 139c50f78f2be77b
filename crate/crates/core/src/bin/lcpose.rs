use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lcpose::cli;
use lcpose::eval::F1Variant;
use lcpose::inference::DEFAULT_ORACLE_BUDGET;
use lcpose::io::{metrics_to_string, RunConfig};
use lcpose::model::MiningMode;
use lcpose::Result;

#[derive(Parser)]
#[command(name = "lcpose", version, about = "Pose estimation with latent clothing attributes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for training or generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mining {
    Standard,
    Literal,
    Margin,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Pairwise,
    Matched,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report path; defaults to `<out>.report.jsonl`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum)]
        mining: Option<Mining>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Predict pose and attributes for every record.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against dataset ground truth.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Metrics file; always printed to stdout as well.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pcp_threshold: Option<f64>,
        #[arg(long, value_enum)]
        f1_variant: Option<Variant>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        positives: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare alternating inference against exhaustive search.
    OracleCheck {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Largest label space to enumerate per record.
        #[arg(long, default_value_t = DEFAULT_ORACLE_BUDGET)]
        budget: u128,
        #[command(flatten)]
        common: Common,
    },
    /// Draw predicted boxes for one record; wrong parts in red.
    Overlay {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// 1-based record index.
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pcp_threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn config(common: &Common) -> Result<RunConfig> {
    cli::load_config(common.config.as_deref())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            dataset,
            out,
            report,
            mining,
            max_iters,
            quiet,
            common,
        } => {
            let mut cfg = config(&common)?.train;
            if let Some(m) = mining {
                cfg.mining = match m {
                    Mining::Standard => MiningMode::Standard,
                    Mining::Literal => MiningMode::Literal,
                    Mining::Margin => MiningMode::Margin,
                };
            }
            if let Some(n) = max_iters {
                cfg.max_infer_iters = n;
            }
            let report = report.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".report.jsonl");
                p.into()
            });
            let r = cli::cmd_train(&dataset, &cfg, common.seed.unwrap_or(0), &out, &report, !quiet)?;
            eprintln!("wrote {} ({} report rows)", out.display(), r.rows.len());
        }
        Command::Infer {
            model,
            dataset,
            out,
            max_iters,
            common,
        } => {
            let cfg = config(&common)?;
            let preds = cli::cmd_infer(&model, &dataset, &out, max_iters.unwrap_or(cfg.infer.max_iters))?;
            eprintln!("wrote {} predictions to {}", preds.len(), out.display());
        }
        Command::Eval {
            predictions,
            dataset,
            out,
            pcp_threshold,
            f1_variant,
            common,
        } => {
            let cfg = config(&common)?.eval;
            let variant = match f1_variant {
                Some(Variant::Pairwise) => F1Variant::Pairwise,
                Some(Variant::Matched) => F1Variant::Matched,
                None => cfg.f1_variant,
            };
            let threshold = pcp_threshold.unwrap_or(cfg.pcp_threshold);
            if !(threshold > 0.0 && threshold.is_finite()) {
                return Err(lcpose::Error::config("pcp threshold must be positive"));
            }
            let m = cli::cmd_eval(&predictions, &dataset, out.as_deref(), threshold, variant)?;
            print!("{}", metrics_to_string(&m));
        }
        Command::Synth {
            out,
            positives,
            negatives,
            candidates,
            rho,
            noise,
            common,
        } => {
            let mut cfg = config(&common)?.synth;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.positives = positives.unwrap_or(cfg.positives);
            cfg.negatives = negatives.unwrap_or(cfg.negatives);
            cfg.candidates = candidates.unwrap_or(cfg.candidates);
            cfg.rho = rho.unwrap_or(cfg.rho);
            cfg.noise = noise.unwrap_or(cfg.noise);
            let ds = cli::cmd_synth(&cfg, &out)?;
            eprintln!("wrote {} records to {}", ds.len(), out.display());
        }
        Command::OracleCheck {
            model,
            dataset,
            max_iters,
            budget,
            common,
        } => {
            let cfg = config(&common)?;
            let r = cli::cmd_oracle_check(&model, &dataset, max_iters.unwrap_or(cfg.infer.max_iters), budget)?;
            println!("checked\t{}", r.checked);
            println!("skipped\t{}", r.skipped);
            println!("exact\t{}", r.exact);
            println!("score_match\t{}", r.score_match);
            println!("recovery_rate\t{:.6}", r.recovery_rate());
            println!("max_gap\t{:e}", r.max_gap);
        }
        Command::Overlay {
            dataset,
            predictions,
            index,
            out,
            pcp_threshold,
            common,
        } => {
            let cfg = config(&common)?.eval;
            let index = index
                .checked_sub(1)
                .ok_or_else(|| lcpose::Error::config("record indices are 1-based"))?;
            cli::cmd_overlay(
                &dataset,
                &predictions,
                index,
                &out,
                pcp_threshold.unwrap_or(cfg.pcp_threshold),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
