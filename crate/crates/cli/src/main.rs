use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use iom_cli::{evaluate_dir, gen_data, sweep, train_run, tune, PipelineConfig, Registries, RunDir};
use iom_core::iom::ArchConfig;

#[derive(Parser)]
#[command(
    name = "iom",
    version,
    about = "Offline design optimization with invariant objective models"
)]
struct Cli {
    /// Root directory for default output locations.
    #[arg(long, global = true, env = "IOM_OUT_DIR", default_value = "iom-out")]
    out_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a task dataset with its statistics and split sidecars.
    GenData {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one run into a run directory.
    Train {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue an interrupted run from its saved state.
        #[arg(long)]
        resume: bool,
        #[arg(long, hide = true)]
        halt_after: Option<usize>,
    },
    /// Train one run per lambda.
    Sweep {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of runs trained at the same time.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Pick a lambda and checkpoint from a sweep without the oracle.
    Tune {
        sweep_dir: PathBuf,
        #[arg(long)]
        quantile: Option<f64>,
    },
    /// Score a run or a tuned sweep with the task oracle.
    Evaluate {
        dir: PathBuf,
        /// Expected training method of the evaluated run.
        #[arg(long)]
        method: Option<String>,
        /// Aggregate CSV to update (default: <out-root>/aggregate.csv).
        #[arg(long)]
        aggregate: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Compact,
    Full,
}

/// Flags mirroring [`PipelineConfig`]; each overrides the `--config` file.
#[derive(Args, Default)]
struct PipelineArgs {
    /// Pipeline config JSON to start from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    /// Dataset size.
    #[arg(long)]
    n: Option<usize>,
    /// Seed for the dataset and for training.
    #[arg(long)]
    seed: Option<u64>,
    /// Top fraction of generated samples to withhold.
    #[arg(long)]
    strip: Option<f64>,
    /// Load this dataset CSV instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated lambda values for sweeps.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_head: Option<f64>,
    #[arg(long)]
    lr_phi: Option<f64>,
    #[arg(long)]
    lr_disc: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    ascent_steps: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long, value_enum)]
    arch: Option<Arch>,
}

impl PipelineArgs {
    fn is_empty(&self) -> bool {
        let PipelineArgs {
            config,
            task,
            n,
            seed,
            strip,
            data,
            method,
            lambda,
            lambdas,
            quantile,
            epochs,
            batch_size,
            lr_head,
            lr_phi,
            lr_disc,
            eta,
            particles,
            ascent_steps,
            candidates,
            checkpoint_every,
            arch,
        } = self;
        config.is_none()
            && task.is_none()
            && n.is_none()
            && seed.is_none()
            && strip.is_none()
            && data.is_none()
            && method.is_none()
            && lambda.is_none()
            && lambdas.is_none()
            && quantile.is_none()
            && epochs.is_none()
            && batch_size.is_none()
            && lr_head.is_none()
            && lr_phi.is_none()
            && lr_disc.is_none()
            && eta.is_none()
            && particles.is_none()
            && ascent_steps.is_none()
            && candidates.is_none()
            && checkpoint_every.is_none()
            && arch.is_none()
    }

    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match (&self.config, &self.task) {
            (Some(path), _) => PipelineConfig::load(path)?,
            (None, Some(task)) => PipelineConfig::new(task),
            (None, None) => bail!("either --task or --config is required"),
        };
        if let Some(v) = &self.task {
            c.task = v.clone();
        }
        if let Some(v) = self.n {
            c.n = v;
        }
        if let Some(v) = self.seed {
            c.data_seed = v;
            c.train.seed = v;
        }
        if self.strip.is_some() {
            c.strip = self.strip;
        }
        if self.data.is_some() {
            c.data = self.data.clone();
        }
        if let Some(v) = &self.method {
            c.method = v.clone();
        }
        if let Some(v) = self.lambda {
            c.train.lambda = v;
        }
        if let Some(v) = &self.lambdas {
            c.lambdas = v.clone();
        }
        if let Some(v) = self.quantile {
            c.quantile = v;
        }
        let t = &mut c.train;
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr_head {
            t.lr_head = v;
        }
        if let Some(v) = self.lr_phi {
            t.lr_phi = v;
        }
        if let Some(v) = self.lr_disc {
            t.lr_disc = v;
        }
        if let Some(v) = self.eta {
            t.eta = v;
        }
        if let Some(v) = self.particles {
            t.particle_count = v;
        }
        if let Some(v) = self.ascent_steps {
            t.ascent_steps = v;
        }
        if let Some(v) = self.candidates {
            t.candidate_count = v;
        }
        if let Some(v) = self.checkpoint_every {
            t.checkpoint_every = v;
        }
        match self.arch {
            Some(Arch::Compact) => t.arch = ArchConfig::compact(),
            Some(Arch::Full) => t.arch = ArchConfig::full(),
            None => {}
        }
        Ok(c)
    }
}

fn default_dir(root: &Path, kind: &str, c: &PipelineConfig) -> PathBuf {
    let name = match kind {
        "data" => format!("{}-n{}-seed{}", c.task, c.n, c.data_seed),
        "runs" => format!(
            "{}-{}-lambda{}-seed{}",
            c.task, c.method, c.train.lambda, c.train.seed
        ),
        _ => format!("{}-{}-seed{}", c.task, c.method, c.train.seed),
    };
    root.join(kind).join(name)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let reg = Registries::default();
    match cli.command {
        Command::GenData { pipeline, out } => {
            let c = pipeline.resolve()?;
            let out = out.unwrap_or_else(|| default_dir(&cli.out_root, "data", &c));
            let csv = gen_data(&reg, &c, &out)?;
            println!("wrote {}", csv.display());
        }
        Command::Train {
            pipeline,
            out,
            resume,
            halt_after,
        } => {
            let requested = if pipeline.is_empty() {
                None
            } else {
                Some(pipeline.resolve()?)
            };
            let out = match (out, &requested) {
                (Some(out), _) => out,
                (None, Some(c)) => default_dir(&cli.out_root, "runs", c),
                (None, None) => bail!("either --task, --config or --out is required"),
            };
            let dir = RunDir::new(&out);
            let config = match requested {
                Some(c) => c,
                None if resume => dir.config()?,
                None => bail!("either --task or --config is required"),
            };
            let outcome = train_run(&reg, &dir, &config, resume, halt_after)?;
            if outcome.halted {
                println!(
                    "halted after epoch {} in {}; continue with --resume",
                    outcome.epochs_done,
                    out.display()
                );
            } else {
                println!(
                    "trained {} epochs into {}",
                    outcome.epochs_done,
                    out.display()
                );
            }
        }
        Command::Sweep {
            pipeline,
            out,
            parallel,
        } => {
            let c = pipeline.resolve()?;
            let out = out.unwrap_or_else(|| default_dir(&cli.out_root, "sweeps", &c));
            let manifest = sweep(&reg, &c, &out, parallel)?;
            for run in &manifest.runs {
                println!(
                    "lambda {:<8} {:<10} {}",
                    run.lambda,
                    run.status.label(),
                    run.dir
                );
            }
            println!("sweep written to {}", out.display());
        }
        Command::Tune {
            sweep_dir,
            quantile,
        } => {
            let report = tune(&sweep_dir, quantile)?;
            println!(
                "selected lambda {} at epoch {}",
                report.chosen_lambda, report.chosen_epoch
            );
        }
        Command::Evaluate {
            dir,
            method,
            aggregate,
        } => {
            let aggregate = aggregate.unwrap_or_else(|| cli.out_root.join("aggregate.csv"));
            let r = evaluate_dir(&reg, &dir, method.as_deref(), &aggregate)?;
            println!(
                "{} {}: best {} (normalized {:.4}) over {} candidates",
                r.task, r.method, r.raw_best, r.normalized, r.n_candidates
            );
            if !r.non_finite.is_empty() {
                println!("{} candidates were non-finite", r.non_finite.len());
            }
        }
    }
    Ok(())
}
