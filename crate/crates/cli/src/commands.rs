//! The pipeline stages behind each subcommand.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use iom_core::eval::{evaluate, upsert_aggregate, AggregateRow, EvalResult};
use iom_core::iom::{final_candidates, metrics_csv, EpochMetrics, RunOptions, TrainState, Trainer};
use iom_core::methods::MethodRegistry;
use iom_core::tasks::{
    designs_csv, generate_dataset_with_strip, parse_designs_csv, save_dataset, DatasetMeta,
    TaskCatalog,
};
use iom_core::tuning::{
    offline_select, sweep_member_config, RunStatus, RunSummary, SelectionReport,
};

use crate::config::PipelineConfig;
use crate::rundir::{
    read_json, read_text, write_atomic, write_json, RunDir, SweepEntry, SweepManifest, CANDIDATES,
    CONFIG, METRICS, PARTICLES, RESULT, SELECTION, STATE, SWEEP_MANIFEST,
};

/// Task and method registries shared by all commands.
#[derive(Clone)]
pub struct Registries {
    pub tasks: TaskCatalog,
    pub methods: MethodRegistry,
}

impl Default for Registries {
    fn default() -> Self {
        Self {
            tasks: TaskCatalog::builtin(),
            methods: MethodRegistry::builtin(),
        }
    }
}

/// Writes `dataset.csv` and its sidecars into `out`. Returns the CSV path.
pub fn gen_data(reg: &Registries, config: &PipelineConfig, out: &Path) -> Result<PathBuf> {
    let task = reg.tasks.get(&config.task)?;
    let dataset =
        generate_dataset_with_strip(task.as_ref(), config.n, config.data_seed, config.strip)?;
    let csv = out.join("dataset.csv");
    let meta = DatasetMeta {
        task: config.task.clone(),
        n: config.n,
        seed: config.data_seed,
        strip_top_fraction: config.strip.unwrap_or_else(|| task.strip_top_fraction()),
    };
    save_dataset(&dataset, &csv, Some(&meta))?;
    Ok(csv)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub epochs_done: usize,
    /// Stopped early on request; the run can be resumed.
    pub halted: bool,
}

/// Trains one run into `dir`. With `resume` the run continues from the
/// stored state and `config` must match the stored config.
pub fn train_run(
    reg: &Registries,
    dir: &RunDir,
    config: &PipelineConfig,
    resume: bool,
    halt_after: Option<usize>,
) -> Result<TrainOutcome> {
    config.validate(&reg.tasks)?;
    let method = reg.methods.get(&config.method)?;
    let dataset = config.dataset(&reg.tasks)?;
    let trainer = Trainer::new(&dataset, method.configure(&config.train))?;
    let every = |e: &EpochMetrics| trainer.config().keeps_checkpoint(e.epoch);

    let (state, metrics) = if resume {
        let stored = dir.config()?;
        if &stored != config {
            bail!(
                "{} does not match the requested config",
                dir.path(CONFIG).display()
            );
        }
        let state_path = dir.path(STATE);
        let state =
            TrainState::from_text(&read_text(&state_path)?, &state_path.display().to_string())?;
        let mut metrics = dir.metrics()?;
        if metrics.len() < state.epochs_done {
            bail!(
                "{} has {} rows but the saved state is at epoch {}",
                dir.path(METRICS).display(),
                metrics.len(),
                state.epochs_done
            );
        }
        metrics.truncate(state.epochs_done);
        dir.log(&format!("resuming at epoch {}", state.epochs_done))?;
        (state, metrics)
    } else {
        dir.reset()?;
        write_atomic(&dir.path(CONFIG), &config.to_json())?;
        dir.log(&format!("training {} on {}", config.method, config.task))?;
        (trainer.initial_state()?, Vec::new())
    };

    let mut rows = metrics.clone();
    let save = |state: &TrainState, rows: &[EpochMetrics]| -> Result<()> {
        write_atomic(&dir.path(METRICS), &metrics_csv(rows))?;
        write_atomic(&dir.path(STATE), &state.to_text())
    };
    let options = RunOptions {
        stop_after: halt_after,
        keep_checkpoints: false,
    };
    let io_error = |e: anyhow::Error| iom_core::Error::Usage(format!("{e:#}"));
    let result = trainer.run(state, metrics, options, |state, row| {
        rows.push(row.clone());
        if every(row) {
            write_atomic(&dir.checkpoint_path(row.epoch), &state.model.to_text())
                .map_err(io_error)?;
            save(state, &rows).map_err(io_error)?;
        }
        Ok(())
    });
    let (record, state) = match result {
        Ok(done) => done,
        Err(e) => {
            write_atomic(&dir.path(METRICS), &metrics_csv(&rows))?;
            dir.log(&format!("aborted: {e}"))?;
            return Err(e.into());
        }
    };
    save(&state, &record.metrics)?;

    let c = trainer.config();
    if state.epochs_done < c.epochs {
        dir.log(&format!("halted after epoch {}", state.epochs_done))?;
        return Ok(TrainOutcome {
            epochs_done: state.epochs_done,
            halted: true,
        });
    }
    let candidates = final_candidates(
        &record.model,
        &dataset,
        c.ascent_steps,
        c.eta,
        c.candidate_count,
        c.seed,
    )?;
    write_atomic(&dir.path(CANDIDATES), &designs_csv(&candidates.raw))?;
    let particles = dataset.stats().destandardize_inputs(&record.particles);
    write_atomic(&dir.path(PARTICLES), &designs_csv(&particles))?;
    dir.log(&format!("finished {} epochs", state.epochs_done))?;
    Ok(TrainOutcome {
        epochs_done: state.epochs_done,
        halted: false,
    })
}

/// Trains one run per λ under `out/runs/`, at most `parallel` at a time, and
/// writes the sweep manifest. Failed runs are recorded, not fatal.
pub fn sweep(
    reg: &Registries,
    config: &PipelineConfig,
    out: &Path,
    parallel: usize,
) -> Result<SweepManifest> {
    config.validate(&reg.tasks)?;
    let method = reg.methods.get(&config.method)?;
    if !method.uses_lambda() {
        bail!(
            "method `{}` ignores lambda, so there is nothing to sweep",
            config.method
        );
    }
    let fingerprint = config.dataset(&reg.tasks)?.fingerprint();
    let members: Vec<(SweepEntry, PipelineConfig)> = config
        .lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let train = sweep_member_config(&config.train, lambda, i);
            let entry = SweepEntry {
                lambda,
                seed: train.seed,
                dir: format!("runs/run_{i:02}"),
                status: RunStatus::Completed,
            };
            (
                entry,
                PipelineConfig {
                    train,
                    ..config.clone()
                },
            )
        })
        .collect();

    let next = AtomicUsize::new(0);
    let statuses: Mutex<Vec<Option<RunStatus>>> = Mutex::new(vec![None; members.len()]);
    let workers = parallel.clamp(1, members.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((entry, member)) = members.get(i) else {
                    break;
                };
                let dir = RunDir::new(out.join(&entry.dir));
                let status = match train_run(reg, &dir, member, false, None) {
                    Ok(_) => RunStatus::Completed,
                    Err(e) => RunStatus::Failed(format!("{e:#}")),
                };
                statuses.lock().expect("status lock")[i] = Some(status);
            });
        }
    });
    let statuses = statuses.into_inner().expect("status lock");
    let runs = members
        .into_iter()
        .zip(statuses)
        .map(|((entry, _), status)| SweepEntry {
            status: status.expect("every job ran"),
            ..entry
        })
        .collect();
    let manifest = SweepManifest {
        config: config.clone(),
        dataset_fingerprint: fingerprint,
        runs,
    };
    write_json(&out.join(SWEEP_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Summaries of every sweep member, read from its metrics and checkpoints.
pub fn sweep_summaries(sweep_dir: &Path, manifest: &SweepManifest) -> Result<Vec<RunSummary>> {
    (0..manifest.runs.len())
        .map(|i| {
            let entry = &manifest.runs[i];
            let dir = manifest.run_dir(sweep_dir, i);
            if !dir.root().is_dir() {
                bail!("sweep run directory {} is missing", dir.root().display());
            }
            Ok(match &entry.status {
                RunStatus::Completed => RunSummary {
                    lambda: entry.lambda,
                    status: RunStatus::Completed,
                    metrics: dir.metrics()?,
                    checkpoint_epochs: dir.checkpoint_epochs()?,
                },
                RunStatus::Failed(reason) => RunSummary::failed(entry.lambda, reason.clone()),
            })
        })
        .collect()
}

/// Offline selection over a sweep directory. Reads manifests, metrics and
/// checkpoint names only.
pub fn tune(sweep_dir: &Path, quantile: Option<f64>) -> Result<SelectionReport> {
    let manifest = SweepManifest::load(sweep_dir)?;
    let summaries = sweep_summaries(sweep_dir, &manifest)?;
    let report = offline_select(&summaries, quantile.unwrap_or(manifest.config.quantile))?;
    write_json(&sweep_dir.join(SELECTION), &report)?;
    Ok(report)
}

/// Scores a run directory's candidates, or a tuned sweep's selected
/// checkpoint, writes `result.json` and adds a row to the aggregate CSV.
pub fn evaluate_dir(
    reg: &Registries,
    dir: &Path,
    method: Option<&str>,
    aggregate: &Path,
) -> Result<EvalResult> {
    let (config, candidates, lambda) = if dir.join(SWEEP_MANIFEST).exists() {
        let manifest = SweepManifest::load(dir)?;
        let sel_path = dir.join(SELECTION);
        if !sel_path.exists() {
            bail!("{} has no {SELECTION}; run `tune` first", dir.display());
        }
        let selection: SelectionReport = read_json(&sel_path)?;
        if selection.chosen_index >= manifest.runs.len() {
            bail!(
                "{} points at run {} of {}",
                sel_path.display(),
                selection.chosen_index,
                manifest.runs.len()
            );
        }
        let run = manifest.run_dir(dir, selection.chosen_index);
        let config = run.config()?;
        let dataset = config.dataset(&reg.tasks)?;
        let model = run.load_checkpoint(selection.chosen_epoch)?;
        let c = &config.train;
        let cand = final_candidates(
            &model,
            &dataset,
            c.ascent_steps,
            c.eta,
            c.candidate_count,
            c.seed,
        )?;
        write_atomic(&dir.join(CANDIDATES), &designs_csv(&cand.raw))?;
        (config, cand.raw, Some(selection.chosen_lambda))
    } else {
        let run = RunDir::new(dir);
        let config = run.config()?;
        let path = run.path(CANDIDATES);
        if !path.exists() {
            bail!(
                "{} has no {CANDIDATES}; the run did not finish",
                dir.display()
            );
        }
        let cand = parse_designs_csv(&read_text(&path)?, &path.display().to_string())?;
        let lambda = reg
            .methods
            .get(&config.method)?
            .uses_lambda()
            .then_some(config.train.lambda);
        (config, cand, lambda)
    };
    if let Some(m) = method {
        reg.methods.get(m)?;
        if m != config.method {
            bail!(
                "{} was trained with `{}`, not `{m}`",
                dir.display(),
                config.method
            );
        }
    }
    let task = reg
        .tasks
        .get(&config.task)
        .map_err(|_| anyhow!("task `{}` has no oracle to evaluate against", config.task))?;
    let dataset = config.dataset(&reg.tasks)?;
    let mut result = evaluate(&candidates, task.as_ref(), &dataset, &config.method)?;
    result.lambda = lambda;
    write_json(&dir.join(RESULT), &result)?;
    if let Some(parent) = aggregate.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    upsert_aggregate(
        aggregate,
        AggregateRow {
            task: config.task.clone(),
            method: config.method.clone(),
            normalized_score: result.normalized,
            seed: config.data_seed,
        },
    )?;
    Ok(result)
}
