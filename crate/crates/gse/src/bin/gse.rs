use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gse::commands::{cmd_experiment, cmd_kernels, cmd_preprocess, cmd_report, cmd_run, cmd_synth, SynthArgs};
use gse::config::RunConfig;
use gse::report::summary_text;
use gse::train::Ablation;
use gse::Result;
use gse_core::protocol::ExperimentKind;

/// GSE ResNeXt underwater acoustic classification.
///
/// Exit status: 0 success, 1 usage or configuration error, 2 data error,
/// 3 numeric failure.
#[derive(Parser)]
#[command(name = "gse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set train.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic ship-noise corpus and its manifest.
    Synth {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        /// Seconds per recording.
        #[arg(long, default_value_t = 150.0)]
        duration: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Class profile TOML (defaults to the built-in profiles).
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Compute and cache spectrograms for every segment.
    Preprocess {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Cross-validate one task.
    Run {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        task: u8,
        #[arg(long, value_enum, default_value_t = Ablation::None)]
        ablate: Ablation,
        /// Also export test-set latent features per fold.
        #[arg(long)]
        latents: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run a temporal-proximity experiment grid over the Task 2 fifths.
    Experiment {
        #[arg(long)]
        kind: ExperimentKind,
        #[arg(long, value_enum, default_value_t = Ablation::None)]
        ablate: Ablation,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Summarize every results file under a directory.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
    /// Render a checkpoint's first-layer kernels as a PNG tile sheet.
    Kernels {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            classes,
            per_class,
            duration,
            out,
            seed,
            profiles,
        } => {
            let rows = cmd_synth(&SynthArgs {
                classes,
                per_class,
                duration,
                out: out.clone(),
                seed,
                profiles,
            })?;
            println!("wrote {} recordings and {}", rows.len(), out.join("manifest.csv").display());
        }
        Command::Preprocess { manifest, cache, cfg } => {
            let mut config = cfg.load()?;
            if let Some(m) = manifest {
                config.paths.manifest = m;
            }
            if let Some(c) = cache.filter(|_| std::env::var_os("GSE_CACHE_DIR").is_none()) {
                config.paths.cache = c;
            }
            let r = cmd_preprocess(&config)?;
            println!("{} written, {} replaced, {} already cached", r.written, r.replaced, r.skipped);
        }
        Command::Run {
            task,
            ablate,
            latents,
            cfg,
        } => {
            let s = cmd_run(&cfg.load()?, task, ablate, latents)?;
            let a = s.results.aggregate;
            println!(
                "task {task} ({}): MCC {:.2} ± {:.2} %, results in {}",
                ablate.name(),
                a.mean * 100.0,
                a.std * 100.0,
                s.dir.display()
            );
        }
        Command::Experiment { kind, ablate, cfg } => {
            let s = cmd_experiment(&cfg.load()?, kind, ablate)?;
            for p in s.results.points.iter().flatten() {
                println!("size {} distance {}: MCC {:.2} %", p.size, p.distance, p.mean_mcc * 100.0);
            }
            println!("results in {}", s.dir.display());
        }
        Command::Report { results } => print!("{}", summary_text(&cmd_report(&results)?)),
        Command::Kernels { checkpoint, out } => {
            let cols = cmd_kernels(&checkpoint, &out)?;
            println!("wrote {} ({cols} kernels per row)", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
