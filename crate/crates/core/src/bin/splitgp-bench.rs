//! Benchmark driver: `run`, `grid` and `summarize`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splitgp::bench::{self, ExperimentConfig, GridAxis, MetricRecord};
use splitgp::Result;

#[derive(Parser)]
#[command(name = "splitgp-bench", about = "Streaming GP regression benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metric records as CSV.
    Run(RunArgs),
    /// Run the experiment at every point of a parameter grid.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        /// Axis as key=v1,v2,...; repeat for a product grid.
        #[arg(long = "grid", required = true)]
        axes: Vec<GridAxis>,
        /// Where to write the per-grid-point summary (default: stderr).
        #[arg(long)]
        summary_out: Option<PathBuf>,
    },
    /// Mean and 95% interval per model, parameter and checkpoint.
    Summarize {
        /// Records written by `run` or `grid`.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated: splitting, fullgp, localgp, rbcm.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    wgen: Option<f64>,
    #[arg(long)]
    experts: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    replicates: Option<u32>,
    #[arg(long)]
    kfold: Option<usize>,
    /// Hold-out split: training fraction, or train/test counts.
    #[arg(long)]
    split: Option<String>,
    /// synthetic[:n] or csv:<path>.
    #[arg(long)]
    dataset: Option<String>,
    /// start:stop:step training-set sizes to evaluate at.
    #[arg(long)]
    sweep: Option<String>,
    /// every-update, splits-and-batches or manual.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    fit_iters: Option<usize>,
    /// Further key=value overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let flags: [(&str, Option<String>); 14] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("model", self.model.clone()),
            ("m", self.m.map(|v| v.to_string())),
            ("wgen", self.wgen.map(|v| v.to_string())),
            ("experts", self.experts.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("replicates", self.replicates.map(|v| v.to_string())),
            ("kfold", self.kfold.map(|v| v.to_string())),
            ("split", self.split.clone()),
            ("dataset", self.dataset.clone()),
            ("sweep", self.sweep.clone()),
            ("schedule", self.schedule.clone()),
            ("fit_iters", self.fit_iters.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| splitgp::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_records(records: &[MetricRecord], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => bench::emit_csv(records, p),
        None => bench::write_records(records, std::io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let records = bench::run_experiment(&cfg)?;
            write_records(&records, cfg.out.as_ref())
        }
        Command::Grid { run, axes, summary_out } => {
            let cfg = run.config()?;
            let (records, summary) = bench::grid_search(&cfg, &axes)?;
            write_records(&records, cfg.out.as_ref())?;
            match summary_out {
                Some(p) => std::fs::write(p, summary.to_string())?,
                None => eprint!("{summary}"),
            }
            Ok(())
        }
        Command::Summarize { input, out } => {
            let rows = bench::summarize(&bench::read_records(&input)?);
            match out {
                Some(p) => bench::write_summary(&rows, std::fs::File::create(p)?),
                None => bench::write_summary(&rows, std::io::stdout().lock()),
            }
        }
    }
}
