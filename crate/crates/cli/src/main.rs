use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use odcs::{cmd_eval, cmd_predict, cmd_synth, cmd_train, CliError};
use odcs_core::data::RoiBox;
use odcs_core::runtime;

/// Optic disc and cup segmentation.
///
/// Worker threads are capped by ODCS_THREADS (default 1).
#[derive(Parser)]
#[command(name = "odcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic fundus images, masks and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a key = value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Per-image rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Segment one image.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Region of interest as x,y,w,h; detected when absent.
        #[arg(long)]
        roi: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> odcs::Result<()> {
    match cli.command {
        Command::Synth { out, count, size, seed } => {
            let manifest = cmd_synth(&out, count, size, seed)?;
            println!("wrote {count} samples, manifest {}", manifest.display());
        }
        Command::Train { config, resume } => {
            let s = cmd_train(&config, resume.as_deref())?;
            match s.last {
                Some(l) => println!(
                    "epochs={} steps={} l_dice={} l_mfm={} l_total={} checkpoint={}",
                    s.epochs,
                    s.steps,
                    l.dice,
                    l.mfm,
                    l.total,
                    s.checkpoint.display()
                ),
                None => println!("epochs={} steps={} (nothing to do)", s.epochs, s.steps),
            }
        }
        Command::Eval { ckpt, manifest, csv } => {
            let report = cmd_eval(&ckpt, &manifest, csv.as_deref())?;
            println!("{}", report.summary());
        }
        Command::Predict {
            ckpt,
            image,
            roi,
            out,
            overlay,
        } => {
            let roi = roi.map(|r| RoiBox::parse(&r)).transpose()?;
            cmd_predict(&ckpt, &image, roi, &out, overlay.as_deref())?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "{}",
                CliError::Usage(first.trim_start_matches("error: ").to_string()).line()
            );
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    runtime::set_threads(runtime::threads_from_env());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
