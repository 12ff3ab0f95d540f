use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bgfn::runner::{self, metrics, PlotFilter, Report, RunConfig, OUTPUT_ROOT_VAR};
use bgfn::{Error, Result};

#[derive(Parser)]
#[command(name = "bgfn", version, about = "Boosted GFlowNet training and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Override a config key, e.g. `--set train.epsilon=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Root for run directories.
    #[arg(long, env = OUTPUT_ROOT_VAR, default_value = ".")]
    output_root: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured schedule: baseline, then boosters at their epochs.
    Train {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Continue from the latest checkpoint of the run.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs.
        #[arg(long)]
        until: Option<u64>,
    },
    /// Spawn a booster at a checkpoint's epoch and train to the end.
    Boost {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the configuration stored in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint: L1 on the grid, unique high scorers on sequences.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Backward samples per member and terminal.
        #[arg(long)]
        b: Option<usize>,
        /// Append metric rows here instead of printing them.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw terminals from a checkpoint's ensemble.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge every metrics file below a directory into one long table.
    ExportPlotdata {
        dir: PathBuf,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Train {
            config,
            common,
            resume,
            until,
        } => {
            let cfg = RunConfig::load(&config, &common.overrides)?;
            let state = runner::train(&cfg, &common.output_root, resume, until, !common.quiet)?;
            println!(
                "{}: {} epochs, {} stages, run dir {}",
                cfg.run_id,
                state.epoch,
                state.ensemble.len(),
                runner::run_dir(&common.output_root, &cfg).display()
            );
        }
        Command::Boost {
            checkpoint,
            config,
            common,
        } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p, &common.overrides)?,
                None => {
                    let ck = runner::Checkpoint::load(&checkpoint)?;
                    RunConfig::parse(&ck.config, &common.overrides, &checkpoint.display().to_string())?
                }
            };
            let state = runner::boost(&cfg, &checkpoint, &common.output_root, !common.quiet)?;
            println!("{}: {} epochs, {} stages", cfg.run_id, state.epoch, state.ensemble.len());
        }
        Command::Eval {
            checkpoint,
            config,
            seed,
            b,
            out,
        } => {
            let expected = config.map(|p| RunConfig::load(&p, &[])).transpose()?;
            let loaded = runner::load_checkpoint(&checkpoint, expected.as_ref())?;
            let seed = seed.unwrap_or(loaded.cfg.seed);
            let (report, rows) = runner::eval_checkpoint(&loaded, seed, b)?;
            match &report {
                Report::L1(r) => println!("epoch {}: L1 {:e} (B = {}, {} stages)", r.epoch, r.l1, r.b, r.member_log_z.len()),
                Report::Unique(r) => println!(
                    "epoch {}: {} unique above threshold ({} new, {} distinct sampled)",
                    r.epoch, r.cumulative, r.new, r.sampled_unique
                ),
            }
            match out {
                Some(p) => metrics::append_rows(&p, &rows)?,
                None => metrics::write_table(io::stdout().lock(), &rows)?,
            }
        }
        Command::Sample { checkpoint, n, seed, out } => {
            let loaded = runner::load_checkpoint(&checkpoint, None)?;
            let mut w = output(out.as_deref())?;
            runner::sample_checkpoint(&loaded, n, seed, &mut w)?;
        }
        Command::ExportPlotdata {
            dir,
            metric,
            run_id,
            out,
        } => {
            let rows = runner::export_plotdata(&dir, &PlotFilter { metric, run_id })?;
            metrics::write_table(output(out.as_deref())?, &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Numeric { .. } = e {
                eprintln!("numeric abort; the last checkpoint is left in place");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
