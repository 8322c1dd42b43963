//! `ganaug` — run the GAN-augmentation experiments from the command line.
//!
//! Exit codes: 0 success, 1 config error, 2 training/numerical error,
//! 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ganaug_core::error::Error;
use ganaug_core::experiment::{
    load_report, run_embed, run_image_smoke, run_toy, ExperimentConfig, ExperimentKind,
    ExperimentReport,
};

#[derive(Parser)]
#[command(name = "ganaug", version, about = "CycleGAN-based data augmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// JSON experiment config; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override
    #[arg(long)]
    out: Option<PathBuf>,
    /// CycleGAN step-count override
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Toy three-Gaussian experiment: baseline SVM vs CycleGAN-augmented SVM
    Toy(RunFlags),
    /// Smoke-scale image pipeline on a label,pixels CSV
    ImageSmoke(RunFlags),
    /// Emit t-SNE embeddings for the configured experiment
    Embed(RunFlags),
    /// Re-print the summary of an existing run directory
    Report {
        /// Directory containing report.json
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(flags: &RunFlags, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let mut config = match &flags.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => match kind {
            ExperimentKind::Toy => ExperimentConfig::default(),
            ExperimentKind::ImageSmoke => {
                return Err(Error::config(
                    "image-smoke needs --config with an image_csv entry",
                ))
            }
        },
    };
    config.kind = kind;
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    if let Some(out) = &flags.out {
        config.output_dir = out.display().to_string();
    }
    if let Some(steps) = flags.steps {
        config.cyclegan.steps = steps;
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(report: &ExperimentReport) {
    println!("experiment: {:?} (seed {})", report.kind, report.seed);
    println!(
        "class histogram before: {:?}  after: {:?}",
        report.histogram_before, report.histogram_after
    );
    let acc = |block: &Option<ganaug_core::experiment::AccuracyBlock>, tag: &str| {
        if let Some(b) = block {
            let per: Vec<String> = b
                .per_class
                .iter()
                .zip(&report.class_names)
                .map(|(a, name)| match a {
                    Some(v) => format!("{name} {:.1}%", v * 100.0),
                    None => format!("{name} n/a"),
                })
                .collect();
            println!("{tag}: overall {:.1}%  ({})", b.overall * 100.0, per.join(", "));
        }
    };
    acc(&report.baseline, "baseline ");
    acc(&report.augmented, "augmented");
    for note in &report.notes {
        println!("note: {note}");
    }
    let files = report.referenced_files();
    println!("artifacts ({} files) in {}", files.len() + 1, report.config.output_dir);
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Toy(flags) => {
            let config = load_config(&flags, ExperimentKind::Toy)?;
            let report = run_toy(&config)?;
            print_summary(&report);
        }
        Command::ImageSmoke(flags) => {
            let config = load_config(&flags, ExperimentKind::ImageSmoke)?;
            let report = run_image_smoke(&config)?;
            print_summary(&report);
        }
        Command::Embed(flags) => {
            let kind = match &flags.config {
                Some(path) => ExperimentConfig::from_json_file(path)?.kind,
                None => ExperimentKind::Toy,
            };
            let config = load_config(&flags, kind)?;
            let report = run_embed(&config)?;
            print_summary(&report);
        }
        Command::Report { out } => {
            let report = load_report(&out)?;
            for file in report.referenced_files() {
                let path = out.join(&file);
                if !path.exists() {
                    return Err(Error::io(
                        path.display().to_string(),
                        std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            "referenced file missing",
                        ),
                    ));
                }
            }
            print_summary(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits; anything else is a config error
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
