use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use sketch_lstd::envs::{
    self, estimate_ground_truth, read_ground_truth, sample_trajectory_states, write_ground_truth,
};
use sketch_lstd::features::{build_feature_map, feature_l1_norm, FeatureMap};
use sketch_lstd::harness::{
    learning_curves, read_results, select_best_params, sensitivity_table, write_best_params,
    write_learning_curves, write_results, write_sensitivity, Assignment, Criterion, Experiment,
    Params, RunRecord, RunStatus, SweepGrid, TestSet,
};
use sketch_lstd::rng;
use sketch_lstd::AgentConfig;

use crate::checks::{self, CheckOutcome, Fault};
use crate::config::{ConfigError, ExperimentConfig};
use crate::CliError;

/// Flags shared by the experiment commands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub dry_run: bool,
    pub max_assignments: Option<usize>,
    pub compute_truth: bool,
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    Ok(cfg)
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

struct Prepared {
    bench: envs::Benchmark,
    map: FeatureMap,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let bench =
        envs::benchmark(&cfg.environment.name, cfg.environment.randomness).map_err(|e| {
            ConfigError::Invalid {
                key: "environment".into(),
                message: e.to_string(),
            }
        })?;
    let map = build_feature_map(&cfg.features.spec, &cfg.features.bounds, cfg.base_seed).map_err(
        |e| ConfigError::Invalid {
            key: "features".into(),
            message: e.to_string(),
        },
    )?;
    Ok(Prepared { bench, map })
}

/// Writes the Monte Carlo ground-truth cache and returns its path.
pub fn cmd_ground_truth(cfg: &ExperimentConfig, opts: &Options) -> Result<PathBuf, CliError> {
    let p = prepare(cfg)?;
    let path = cfg.ground_truth.cache_path(&opts.out);
    if opts.dry_run {
        println!(
            "would estimate {} states × {} rollouts on {} into {}",
            cfg.ground_truth.num_states,
            cfg.ground_truth.rollouts_per_state,
            cfg.environment.name,
            path.display()
        );
        return Ok(path);
    }
    let gt = with_pool(opts.jobs, || {
        estimate_ground_truth(
            &*p.bench.mdp,
            &*p.bench.policy,
            &cfg.ground_truth.settings(),
            cfg.base_seed,
        )
    })?
    .map_err(runtime)?;
    ensure_parent(&path)?;
    write_ground_truth(&gt, &path).map_err(runtime)?;
    println!(
        "wrote {} states to {} ({} truncated rollouts)",
        gt.len(),
        path.display(),
        gt.truncated_rollouts
    );
    Ok(path)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::Runtime)?;
    }
    Ok(())
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(runtime)?
            .install(f)),
        None => Ok(f()),
    }
}

fn load_test_set(
    cfg: &ExperimentConfig,
    p: &Prepared,
    opts: &Options,
) -> Result<TestSet, CliError> {
    let path = cfg.ground_truth.cache_path(&opts.out);
    let gt = if path.exists() {
        read_ground_truth(&path).map_err(runtime)?
    } else if opts.compute_truth {
        cmd_ground_truth(
            cfg,
            &Options {
                dry_run: false,
                ..opts.clone()
            },
        )?;
        read_ground_truth(&path).map_err(runtime)?
    } else {
        return Err(runtime(anyhow::anyhow!(
            "ground-truth cache {} not found; run `ground-truth` first or pass --compute-truth",
            path.display()
        )));
    };
    if gt.states.first().map(Vec::len) != Some(p.map.state_dims()) {
        return Err(runtime(anyhow::anyhow!(
            "ground-truth cache {} does not match the configured environment",
            path.display()
        )));
    }
    TestSet::from_ground_truth(&p.map, &gt).map_err(runtime)
}

fn assignments(cfg: &ExperimentConfig, configs: &[AgentConfig]) -> Vec<Assignment> {
    let runs = cfg.experiment.runs;
    let seeds = sketch_lstd::harness::run_seeds(cfg.base_seed, runs);
    configs
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| {
            seeds.iter().enumerate().map(move |(i, &seed)| Assignment {
                run_id: ci * runs + i,
                seed,
                config: c.clone(),
            })
        })
        .collect()
}

fn print_plan(cfg: &ExperimentConfig, configs: &[AgentConfig]) {
    // Output may be piped into `head`; stop quietly once the reader is gone.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{} assignments × {} seeds = {} runs of {} steps on {} / {}",
        configs.len(),
        cfg.experiment.runs,
        configs.len() * cfg.experiment.runs,
        cfg.experiment.steps,
        cfg.environment.name,
        cfg.features.spec.kind()
    );
    for (i, c) in configs.iter().enumerate() {
        if writeln!(out, "{i:>5}  {:<8} {}", c.algorithm(), Params::of(c).key()).is_err() {
            break;
        }
    }
}

fn truncate(mut configs: Vec<AgentConfig>, max: Option<usize>) -> Vec<AgentConfig> {
    if let Some(n) = max {
        configs.truncate(n);
    }
    configs
}

fn execute(
    cfg: &ExperimentConfig,
    opts: &Options,
    p: &Prepared,
    configs: &[AgentConfig],
) -> Result<Vec<RunRecord>, CliError> {
    let test = load_test_set(cfg, p, opts)?;
    let exp = Experiment {
        mdp: &*p.bench.mdp,
        policy: &*p.bench.policy,
        features: &p.map,
        test: &test,
        env_name: cfg.environment.name.clone(),
        features_label: cfg.features.spec.kind().to_string(),
        total_steps: cfg.experiment.steps,
        eval_every: cfg.experiment.eval_every,
        record_timing: cfg.experiment.record_timing,
    };
    let records = exp
        .run_batch(&assignments(cfg, configs), opts.jobs)
        .map_err(runtime)?;
    let path = opts.out.join("results.csv");
    ensure_parent(&path)?;
    write_results(&records, &path).map_err(runtime)?;
    let diverged = records
        .iter()
        .filter(|r| r.status == RunStatus::Diverged)
        .count();
    println!(
        "wrote {} runs to {} ({diverged} diverged)",
        records.len(),
        path.display()
    );
    if diverged == records.len() {
        return Err(runtime(anyhow::anyhow!("every run diverged")));
    }
    Ok(records)
}

/// Runs the product of the configured parameter values.
pub fn cmd_run(cfg: &ExperimentConfig, opts: &Options) -> Result<Vec<RunRecord>, CliError> {
    let p = prepare(cfg)?;
    let configs = truncate(cfg.expand_run()?, opts.max_assignments);
    if opts.dry_run {
        print_plan(cfg, &configs);
        return Ok(Vec::new());
    }
    execute(cfg, opts, &p, &configs)
}

/// Step-size grid scale: the largest feature `‖x‖₁` over on-policy probe
/// states (the ground-truth trajectory, without rollouts).
fn sweep_grid(cfg: &ExperimentConfig, p: &Prepared) -> Result<SweepGrid, CliError> {
    let probes = sample_trajectory_states(
        &*p.bench.mdp,
        &*p.bench.policy,
        cfg.ground_truth.num_states,
        cfg.ground_truth.trajectory_factor,
        rng::derive_seed(cfg.base_seed, u64::MAX),
    )
    .map_err(runtime)?;
    let l1 = feature_l1_norm(&p.map, &probes).map_err(runtime)?;
    Ok(SweepGrid::new(l1))
}

/// Full parameter sweep plus best-parameter and sensitivity summaries.
pub fn cmd_sweep(cfg: &ExperimentConfig, opts: &Options) -> Result<Vec<RunRecord>, CliError> {
    let p = prepare(cfg)?;
    let grid = sweep_grid(cfg, &p)?;
    let configs = truncate(cfg.expand_sweep(&grid)?, opts.max_assignments);
    if opts.dry_run {
        print_plan(cfg, &configs);
        return Ok(Vec::new());
    }
    let records = execute(cfg, opts, &p, &configs)?;
    summarize(&records, cfg.experiment.selection, &opts.out)?;
    Ok(records)
}

/// Best parameters and sensitivity over each algorithm's swept parameter.
fn summarize(records: &[RunRecord], selection: Criterion, out: &Path) -> Result<(), CliError> {
    let best = select_best_params(records, selection).map_err(runtime)?;
    write_best_params(&best, &out.join("best_params.csv")).map_err(runtime)?;
    let mut algorithms: Vec<_> = records.iter().map(|r| r.algorithm).collect();
    algorithms.dedup();
    let mut rows = Vec::new();
    for alg in sketch_lstd::Algorithm::ALL {
        if !algorithms.contains(&alg) {
            continue;
        }
        let subset: Vec<RunRecord> = records
            .iter()
            .filter(|r| r.algorithm == alg)
            .cloned()
            .collect();
        rows.extend(sensitivity_table(&subset, SweepGrid::primary_param(alg)));
    }
    write_sensitivity(&rows, &out.join("sensitivity.csv")).map_err(runtime)?;
    for b in &best {
        println!(
            "best {:<8} {} (score {:.4})",
            b.algorithm,
            b.params.key(),
            b.score
        );
    }
    Ok(())
}

/// Aggregates results CSVs into learning-curve, best-parameter and
/// sensitivity CSVs under `out`.
pub fn cmd_report(inputs: &[PathBuf], out: &Path, selection: Criterion) -> Result<(), CliError> {
    let mut records = Vec::new();
    for path in inputs {
        records.extend(read_results(path).map_err(runtime)?);
    }
    std::fs::create_dir_all(out).map_err(runtime)?;
    write_learning_curves(&learning_curves(&records), &out.join("learning_curves.csv"))
        .map_err(runtime)?;
    summarize(&records, selection, out)?;
    println!(
        "aggregated {} runs from {} file(s) into {}",
        records.len(),
        inputs.len(),
        out.display()
    );
    Ok(())
}

/// Runs the invariant battery (or one check) and prints one line per check.
pub fn cmd_verify(only: Option<&str>, fault: Option<Fault>) -> Result<Vec<CheckOutcome>, CliError> {
    let names: Vec<&str> = match only {
        Some(name) if checks::CHECKS.contains(&name) => vec![name],
        Some(name) => {
            return Err(ConfigError::Invalid {
                key: "--only".into(),
                message: format!(
                    "unknown check `{name}`; expected one of {}",
                    checks::CHECKS.join(", ")
                ),
            }
            .into())
        }
        None => checks::CHECKS.to_vec(),
    };
    let mut outcomes = Vec::new();
    for name in names {
        let o = checks::run_check(name, fault).expect("known check");
        println!(
            "{} {:<18} {:>7.2}s  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        );
        outcomes.push(o);
    }
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.name)
        .collect();
    if !failed.is_empty() {
        return Err(runtime(anyhow::anyhow!(
            "failed checks: {}",
            failed.join(", ")
        )));
    }
    Ok(outcomes)
}
