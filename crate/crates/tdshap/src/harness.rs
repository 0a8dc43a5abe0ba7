//! End-to-end cleansing pipeline: run a valuation method on the training
//! split, order instances by estimated value, sweep how many to remove on
//! the validation split, retrain, and report the test-set change.
//!
//! Split hygiene is enforced by construction and instrumented: the run
//! context tags every metric evaluation with the current phase, and the
//! test split is only touched after the removal count has been fixed from
//! validation alone. Per-seed pipelines run in parallel; every random
//! choice is derived from the seed, so reports are reproducible across
//! worker counts.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    exact_shapley, loo_grouped, random_order, tmc_shapley, BaselineConfig, ValuationVector,
};
use crate::dataset::{Dataset, NoiseMode, Split, SplitSizes, TaskKind};
use crate::derive_seed;
use crate::engine::{self, AuditRecord, StopRule, TdshapConfig};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::learners::LearnerSpec;
use crate::metrics::{EvalLog, EvalRecord, MetricKind, RunContext};

// Salted seed derivations so noise injection, the random-removal baseline,
// and Monte Carlo sampling never share a stream with each other or with
// the engine.
const NOISE_SALT: u64 = 0x4e4f_4953;
const RANDOM_SALT: u64 = 0x524e_4400;
const TMC_SALT: u64 = 0x544d_4300;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub csv: PathBuf,
    /// Header name of the label column.
    pub label: String,
    pub task: TaskKind,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct NoiseConfig<F> {
    /// Fraction of the training split to corrupt.
    pub fraction: f64,
    pub mode: NoiseMode<F>,
}

/// Engine parameters minus the seed (which the experiment supplies per
/// trial). Defaults follow the protocol this harness reproduces:
/// tau = -0.1, epsilon = 0.1, 50 iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(bound = "F: Float")]
pub struct TdshapParams<F> {
    pub tau: F,
    pub epsilon: F,
    pub n_min: usize,
    pub batch_k: usize,
    pub stop: StopRule<F>,
    pub warm_start: bool,
}

impl<F: Float> Default for TdshapParams<F> {
    fn default() -> Self {
        let base = TdshapConfig::default();
        TdshapParams {
            tau: base.tau,
            epsilon: base.epsilon,
            n_min: base.n_min,
            batch_k: base.batch_k,
            stop: base.stop,
            warm_start: base.warm_start,
        }
    }
}

impl<F: Float> TdshapParams<F> {
    pub fn to_config(&self, seed: u64) -> TdshapConfig<F> {
        TdshapConfig {
            tau: self.tau,
            epsilon: self.epsilon,
            n_min: self.n_min,
            batch_k: self.batch_k,
            stop: self.stop,
            seed,
            warm_start: self.warm_start,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound = "F: Float")]
pub enum MethodConfig<F> {
    Tdshap(TdshapParams<F>),
    Tmc {
        #[serde(default = "default_n_perm")]
        n_perm: usize,
        #[serde(default)]
        truncation_tol: Option<F>,
    },
    Exact,
    Loo {
        #[serde(default = "default_n_loo")]
        n_loo: usize,
    },
    Random,
}

fn default_n_perm() -> usize {
    500
}

fn default_n_loo() -> usize {
    1
}

impl<F: Float> MethodConfig<F> {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Tdshap(_) => "tdshap",
            MethodConfig::Tmc { .. } => "tmc",
            MethodConfig::Exact => "exact",
            MethodConfig::Loo { .. } => "loo",
            MethodConfig::Random => "random",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            MethodConfig::Tdshap(params) => {
                if params.epsilon.is_nan() || params.epsilon <= F::zero() {
                    return Err(Error::InvalidConfig("epsilon must be positive".into()));
                }
                Ok(())
            }
            MethodConfig::Tmc {
                n_perm,
                truncation_tol,
            } => BaselineConfig {
                n_perm: *n_perm,
                truncation_tol: *truncation_tol,
                n_loo: 1,
            }
            .validate(),
            MethodConfig::Loo { n_loo } if *n_loo < 1 => {
                Err(Error::InvalidConfig("n_loo must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct ExperimentConfig<F> {
    /// CSV source; optional so in-memory datasets can reuse the pipeline.
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    pub split: SplitSizes,
    pub learner: LearnerSpec<F>,
    pub metric: MetricKind,
    pub method: MethodConfig<F>,
    /// Sweep resolution; `None` picks max(1, n_train / 50).
    #[serde(default)]
    pub removal_grid_step: Option<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub noise: Option<NoiseConfig<F>>,
    /// Where report.json, per-seed CSVs and audit logs land; `None`
    /// keeps everything in memory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl<F: Float> ExperimentConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if let Some(step) = self.removal_grid_step {
            if step < 1 {
                return Err(Error::InvalidConfig("grid step must be >= 1".into()));
            }
        }
        self.learner.validate()?;
        self.method.validate()
    }
}

/// What a valuation method hands to the removal stage: either per-instance
/// scores or an already-ordered removal list.
#[derive(Clone, Debug)]
pub enum Valuation<F> {
    Scored(ValuationVector<F>),
    Ordered { order: Vec<usize>, method: String },
}

impl<F> Valuation<F> {
    pub fn method_name(&self) -> &str {
        match self {
            Valuation::Scored(v) => &v.method,
            Valuation::Ordered { method, .. } => method,
        }
    }
}

/// Ascending-value removal order (lowest value removed first, ties to the
/// lower id); ordered methods pass through. Every train id must be
/// covered, and nothing else.
pub fn removal_order<F: Float>(
    valuation: &Valuation<F>,
    train_ids: &[usize],
) -> Result<Vec<usize>> {
    let train: BTreeSet<usize> = train_ids.iter().copied().collect();
    match valuation {
        Valuation::Scored(v) => {
            for id in &train {
                if !v.phi.contains_key(id) {
                    return Err(Error::UnknownInstance(*id));
                }
            }
            if v.phi.len() != train.len() {
                return Err(Error::InvalidConfig(
                    "valuation scores instances outside the training split".into(),
                ));
            }
            if v.phi.values().any(|p| !p.is_finite()) {
                return Err(Error::Numerical("non-finite valuation".into()));
            }
            let mut order: Vec<usize> = train_ids.to_vec();
            order.sort_by(|a, b| {
                v.phi[a]
                    .partial_cmp(&v.phi[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.cmp(b))
            });
            Ok(order)
        }
        Valuation::Ordered { order, .. } => {
            let got: BTreeSet<usize> = order.iter().copied().collect();
            if got != train || order.len() != train.len() {
                return Err(Error::InvalidConfig(
                    "removal order does not cover the training split exactly".into(),
                ));
            }
            Ok(order.clone())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct CurvePoint<F> {
    pub n_remove: usize,
    pub val_v: F,
    pub test_v: F,
}

#[derive(Clone, Debug)]
pub struct SweepResult<F> {
    pub n_remove: usize,
    pub curve: Vec<CurvePoint<F>>,
    pub sweep_s: f64,
    pub final_s: f64,
}

pub(crate) fn resolve_grid_step(n_train: usize, configured: Option<usize>) -> usize {
    configured.unwrap_or_else(|| (n_train / 50).max(1))
}

/// Sweeps removal prefixes over the grid {0, g, 2g, ...} (capped so at
/// least one instance remains), picks the grid point maximizing validation
/// V (ties to the smaller count), then — and only then — scores every
/// swept model on the test split for the reported curve.
pub fn choose_n_remove<F: Float>(
    ctx: &RunContext<'_, F>,
    order: &[usize],
    grid_step: usize,
) -> Result<SweepResult<F>> {
    if grid_step < 1 {
        return Err(Error::InvalidConfig("grid step must be >= 1".into()));
    }
    let train = &ctx.split().train_ids;
    if order.len() != train.len() {
        return Err(Error::InvalidConfig(
            "removal order does not cover the training split exactly".into(),
        ));
    }
    ctx.set_phase("sweep");
    let sweep_started = Instant::now();
    let grid: Vec<usize> = (0..train.len()).step_by(grid_step).collect();
    let swept: Vec<(F, crate::learners::FittedModel<F>)> = grid
        .par_iter()
        .map(|&r| {
            let removed: BTreeSet<usize> = order[..r].iter().copied().collect();
            let retained: Vec<usize> = train
                .iter()
                .copied()
                .filter(|id| !removed.contains(id))
                .collect();
            let model = ctx.fit_subset(&retained)?;
            let val_v = ctx.eval_val(&model)?;
            Ok((val_v, model))
        })
        .collect::<Result<_>>()?;
    let mut best = 0usize;
    for i in 1..grid.len() {
        if swept[i].0 > swept[best].0 {
            best = i;
        }
    }
    let sweep_s = sweep_started.elapsed().as_secs_f64();

    ctx.set_phase("final");
    let final_started = Instant::now();
    let test_vs: Vec<F> = swept
        .par_iter()
        .map(|(_, model)| ctx.eval_test(model))
        .collect::<Result<_>>()?;
    let final_s = final_started.elapsed().as_secs_f64();
    let curve: Vec<CurvePoint<F>> = grid
        .iter()
        .zip(swept.iter().zip(&test_vs))
        .map(|(&n_remove, ((val_v, _), &test_v))| CurvePoint {
            n_remove,
            val_v: *val_v,
            test_v,
        })
        .collect();
    Ok(SweepResult {
        n_remove: grid[best],
        curve,
        sweep_s,
        final_s,
    })
}

/// Fraction of the injected corruptions caught in the first `n_remove`
/// removals; `None` when nothing was corrupted.
pub fn prefix_recall(order: &[usize], n_remove: usize, corrupted: &[usize]) -> Option<f64> {
    if corrupted.is_empty() {
        return None;
    }
    let prefix: BTreeSet<usize> = order[..n_remove.min(order.len())].iter().copied().collect();
    let caught = corrupted.iter().filter(|id| prefix.contains(id)).count();
    Some(caught as f64 / corrupted.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub valuation_s: f64,
    pub sweep_s: f64,
    pub final_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct ValuationRow<F> {
    pub instance_id: usize,
    /// Estimated value for scored methods; removal rank (0 = removed
    /// first) for the pre-ordered ones.
    pub phi: F,
    pub method: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct SeedOutcome<F: Float> {
    pub seed: u64,
    pub n_remove: usize,
    pub baseline_val: F,
    pub baseline_test: F,
    pub cleansed_val: F,
    pub cleansed_test: F,
    pub trainings_total: u64,
    pub corrupted_ids: Vec<usize>,
    /// Share of corrupted ids inside the removal prefix, when noise was
    /// injected.
    pub corrupted_recall: Option<f64>,
    /// Threshold classification, when the method produces one.
    pub harmful: Option<Vec<usize>>,
    pub removal_order: Vec<usize>,
    pub curve: Vec<CurvePoint<F>>,
    pub timing: PhaseTiming,
    #[serde(skip)]
    pub valuation_rows: Vec<ValuationRow<F>>,
    #[serde(skip)]
    pub audit: Vec<AuditRecord<F>>,
    #[serde(skip)]
    pub eval_records: Vec<EvalRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedError {
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct MeanStd<F> {
    pub mean: F,
    /// Sample standard deviation (n - 1); zero for a single seed.
    pub std: F,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct Aggregate<F> {
    pub seeds_completed: usize,
    pub baseline_test: MeanStd<F>,
    pub cleansed_test: MeanStd<F>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct CleansingReport<F: Float> {
    pub method: String,
    pub aggregate: Aggregate<F>,
    pub seeds: Vec<SeedOutcome<F>>,
    pub errors: Vec<SeedError>,
    pub config: ExperimentConfig<F>,
}

/// Valuation-only results (no removal sweep, no test contact).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct ValuationOutcome<F: Float> {
    pub seed: u64,
    pub trainings_total: u64,
    pub corrupted_ids: Vec<usize>,
    pub harmful: Option<Vec<usize>>,
    pub rows: Vec<ValuationRow<F>>,
    pub valuation_s: f64,
    #[serde(skip)]
    pub audit: Vec<AuditRecord<F>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct ValuationReport<F: Float> {
    pub method: String,
    pub seeds: Vec<ValuationOutcome<F>>,
    pub errors: Vec<SeedError>,
    pub config: ExperimentConfig<F>,
}

fn mean_std<F: Float>(values: &[F]) -> MeanStd<F> {
    if values.is_empty() {
        return MeanStd {
            mean: F::zero(),
            std: F::zero(),
        };
    }
    let n = F::from_count(values.len() as u64);
    let mean = values.iter().copied().sum::<F>() / n;
    if values.len() < 2 {
        return MeanStd {
            mean,
            std: F::zero(),
        };
    }
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>();
    MeanStd {
        mean,
        std: (ss / (n - F::one())).sqrt(),
    }
}

pub(crate) fn aggregate_outcomes<F: Float>(outcomes: &[SeedOutcome<F>]) -> Aggregate<F> {
    let baseline: Vec<F> = outcomes.iter().map(|o| o.baseline_test).collect();
    let cleansed: Vec<F> = outcomes.iter().map(|o| o.cleansed_test).collect();
    Aggregate {
        seeds_completed: outcomes.len(),
        baseline_test: mean_std(&baseline),
        cleansed_test: mean_std(&cleansed),
    }
}

/// Runs the valuation method for one prepared context; shared by the
/// cleansing and valuation-only pipelines. Yields the valuation, the
/// threshold classification when the method has one, and the audit trail.
type Valuated<F> = (Valuation<F>, Option<Vec<usize>>, Vec<AuditRecord<F>>);

fn valuate<F: Float>(
    ctx: &RunContext<'_, F>,
    method: &MethodConfig<F>,
    seed: u64,
) -> Result<Valuated<F>> {
    match method {
        MethodConfig::Tdshap(params) => {
            let result = engine::run(ctx, &params.to_config(seed))?;
            let samples: u64 = result.pulls.values().sum();
            let harmful = result.harmful_set.clone();
            let audit = result.audit_log;
            Ok((
                Valuation::Scored(ValuationVector {
                    phi: result.phi_hat,
                    method: "tdshap".to_owned(),
                    samples_used: samples,
                }),
                Some(harmful),
                audit,
            ))
        }
        MethodConfig::Tmc {
            n_perm,
            truncation_tol,
        } => {
            let cfg = BaselineConfig {
                n_perm: *n_perm,
                truncation_tol: *truncation_tol,
                n_loo: 1,
            };
            let v = tmc_shapley(ctx, &cfg, derive_seed(seed, TMC_SALT))?;
            Ok((Valuation::Scored(v), None, Vec::new()))
        }
        MethodConfig::Exact => Ok((Valuation::Scored(exact_shapley(ctx)?), None, Vec::new())),
        MethodConfig::Loo { n_loo } => Ok((
            Valuation::Ordered {
                order: loo_grouped(ctx, *n_loo)?,
                method: "loo".to_owned(),
            },
            None,
            Vec::new(),
        )),
        MethodConfig::Random => Ok((
            Valuation::Ordered {
                order: random_order(&ctx.split().train_ids, derive_seed(seed, RANDOM_SALT)),
                method: "random".to_owned(),
            },
            None,
            Vec::new(),
        )),
    }
}

fn build_rows<F: Float>(valuation: &Valuation<F>, order: &[usize]) -> Vec<ValuationRow<F>> {
    let mut rows: Vec<ValuationRow<F>> = match valuation {
        Valuation::Scored(v) => v
            .phi
            .iter()
            .map(|(&id, &phi)| ValuationRow {
                instance_id: id,
                phi,
                method: v.method.clone(),
            })
            .collect(),
        Valuation::Ordered { method, .. } => order
            .iter()
            .enumerate()
            .map(|(rank, &id)| ValuationRow {
                instance_id: id,
                phi: F::from_count(rank as u64),
                method: method.clone(),
            })
            .collect(),
    };
    rows.sort_by_key(|r| r.instance_id);
    rows
}

/// Splits, optionally corrupts, and valuates one seed's copy of the data;
/// returns everything downstream stages need.
struct PreparedSeed<F: Float> {
    dataset: Dataset<F>,
    split: Split,
    corrupted: Vec<usize>,
}

fn prepare_seed<F: Float>(
    base: &Dataset<F>,
    config: &ExperimentConfig<F>,
    seed: u64,
) -> Result<PreparedSeed<F>> {
    let mut dataset = base.clone();
    let split = dataset.split(config.split, seed)?;
    let corrupted = match &config.noise {
        Some(noise) if noise.fraction > 0.0 => dataset.inject_label_noise(
            &split,
            noise.fraction,
            noise.mode,
            derive_seed(seed, NOISE_SALT),
        )?,
        _ => Vec::new(),
    };
    Ok(PreparedSeed {
        dataset,
        split,
        corrupted,
    })
}

fn run_seed<F: Float>(
    base: &Dataset<F>,
    config: &ExperimentConfig<F>,
    seed: u64,
) -> Result<SeedOutcome<F>> {
    let prepared = prepare_seed(base, config, seed)?;
    let log = EvalLog::new(&prepared.split);
    let ctx = RunContext::new(
        &prepared.dataset,
        &prepared.split,
        &config.learner,
        config.metric,
    )?
    .with_eval_log(&log);

    ctx.set_phase("valuation");
    let valuation_started = Instant::now();
    let (valuation, harmful, audit) = valuate(&ctx, &config.method, seed)?;
    let valuation_s = valuation_started.elapsed().as_secs_f64();

    let order = removal_order(&valuation, &prepared.split.train_ids)?;
    let grid_step = resolve_grid_step(prepared.split.train_ids.len(), config.removal_grid_step);
    let sweep = choose_n_remove(&ctx, &order, grid_step)?;
    let chosen = sweep
        .curve
        .iter()
        .find(|p| p.n_remove == sweep.n_remove)
        .expect("chosen point is on the curve");

    Ok(SeedOutcome {
        seed,
        n_remove: sweep.n_remove,
        baseline_val: sweep.curve[0].val_v,
        baseline_test: sweep.curve[0].test_v,
        cleansed_val: chosen.val_v,
        cleansed_test: chosen.test_v,
        trainings_total: ctx.trainings(),
        corrupted_recall: prefix_recall(&order, sweep.n_remove, &prepared.corrupted),
        corrupted_ids: prepared.corrupted,
        harmful,
        valuation_rows: build_rows(&valuation, &order),
        removal_order: order,
        curve: sweep.curve,
        timing: PhaseTiming {
            valuation_s,
            sweep_s: sweep.sweep_s,
            final_s: sweep.final_s,
        },
        audit,
        eval_records: log.entries(),
    })
}

fn split_results<T>(results: Vec<(u64, Result<T>)>) -> Result<(Vec<T>, Vec<SeedError>)> {
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    let mut first_error: Option<Error> = None;
    for (seed, result) in results {
        match result {
            Ok(outcome) => ok.push(outcome),
            Err(e) => {
                errors.push(SeedError {
                    seed,
                    message: e.to_string(),
                });
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if ok.is_empty() {
        if let Some(e) = first_error {
            return Err(e);
        }
    }
    if !errors.is_empty() {
        log::warn!(
            "{} of {} seeds failed; aggregating over the rest",
            errors.len(),
            errors.len() + ok.len()
        );
    }
    Ok((ok, errors))
}

/// Full cleansing experiment on an already-loaded dataset.
pub fn run_experiment_on<F: Float>(
    base: &Dataset<F>,
    config: &ExperimentConfig<F>,
) -> Result<CleansingReport<F>> {
    config.validate()?;
    let results: Vec<(u64, Result<SeedOutcome<F>>)> = config
        .seeds
        .par_iter()
        .map(|&seed| (seed, run_seed(base, config, seed)))
        .collect();
    let (mut outcomes, errors) = split_results(results)?;
    outcomes.sort_by_key(|o| o.seed);
    let report = CleansingReport {
        method: config.method.name().to_owned(),
        aggregate: aggregate_outcomes(&outcomes),
        seeds: outcomes,
        errors,
        config: config.clone(),
    };
    if let Some(dir) = &config.output_dir {
        emit_cleansing_files(dir, &report)?;
    }
    Ok(report)
}

/// Loads the configured CSV, then runs the experiment.
pub fn run_experiment<F: Float>(config: &ExperimentConfig<F>) -> Result<CleansingReport<F>> {
    let source = config
        .dataset
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no dataset source".into()))?;
    let base = Dataset::load_csv(&source.csv, &source.label, source.task)?;
    run_experiment_on(&base, config)
}

/// Valuation without the cleansing sweep; never touches the test split.
pub fn run_valuation_on<F: Float>(
    base: &Dataset<F>,
    config: &ExperimentConfig<F>,
) -> Result<ValuationReport<F>> {
    config.validate()?;
    let results: Vec<(u64, Result<ValuationOutcome<F>>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<ValuationOutcome<F>> {
                let prepared = prepare_seed(base, config, seed)?;
                let ctx = RunContext::new(
                    &prepared.dataset,
                    &prepared.split,
                    &config.learner,
                    config.metric,
                )?;
                let started = Instant::now();
                let (valuation, harmful, audit) = valuate(&ctx, &config.method, seed)?;
                let order = removal_order(&valuation, &prepared.split.train_ids)?;
                Ok(ValuationOutcome {
                    seed,
                    trainings_total: ctx.trainings(),
                    corrupted_ids: prepared.corrupted,
                    harmful,
                    rows: build_rows(&valuation, &order),
                    valuation_s: started.elapsed().as_secs_f64(),
                    audit,
                })
            };
            (seed, run())
        })
        .collect();
    let (mut outcomes, errors) = split_results(results)?;
    outcomes.sort_by_key(|o| o.seed);
    let report = ValuationReport {
        method: config.method.name().to_owned(),
        seeds: outcomes,
        errors,
        config: config.clone(),
    };
    if let Some(dir) = &config.output_dir {
        emit_valuation_files(dir, &report)?;
    }
    Ok(report)
}

pub fn run_valuation<F: Float>(config: &ExperimentConfig<F>) -> Result<ValuationReport<F>> {
    let source = config
        .dataset
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no dataset source".into()))?;
    let base = Dataset::load_csv(&source.csv, &source.label, source.task)?;
    run_valuation_on(&base, config)
}

fn emit_cleansing_files<F: Float>(dir: &Path, report: &CleansingReport<F>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), report)?;
    for outcome in &report.seeds {
        write_curve_csv(
            &dir.join(format!("curve_seed{}.csv", outcome.seed)),
            &outcome.curve,
        )?;
        write_valuation_csv(
            &dir.join(format!("valuation_seed{}.csv", outcome.seed)),
            &outcome.valuation_rows,
        )?;
        if !outcome.audit.is_empty() {
            write_audit(
                &dir.join(format!("audit_seed{}.jsonl", outcome.seed)),
                &outcome.audit,
            )?;
        }
    }
    Ok(())
}

fn emit_valuation_files<F: Float>(dir: &Path, report: &ValuationReport<F>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), report)?;
    for outcome in &report.seeds {
        write_valuation_csv(
            &dir.join(format!("valuation_seed{}.csv", outcome.seed)),
            &outcome.rows,
        )?;
        if !outcome.audit.is_empty() {
            write_audit(
                &dir.join(format!("audit_seed{}.jsonl", outcome.seed)),
                &outcome.audit,
            )?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

fn write_curve_csv<F: Float>(path: &Path, curve: &[CurvePoint<F>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["n_remove", "val_V", "test_V"])?;
    for point in curve {
        writer.serialize((point.n_remove, point.val_v, point.test_v))?;
    }
    writer.flush()?;
    Ok(())
}

fn write_valuation_csv<F: Float>(path: &Path, rows: &[ValuationRow<F>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["instance_id", "phi", "method"])?;
    for row in rows {
        writer.serialize((row.instance_id, row.phi, &row.method))?;
    }
    writer.flush()?;
    Ok(())
}

fn write_audit<F: Float>(path: &Path, records: &[AuditRecord<F>]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut file, record)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

/// The report as JSON with wall-clock fields cleared, for byte-level
/// reproducibility comparisons.
pub fn comparable_json<F: Float>(report: &CleansingReport<F>) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    strip_timing(&mut value);
    Ok(serde_json::to_string_pretty(&value)?)
}

fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("timing");
            map.remove("elapsed_ms");
            map.remove("valuation_s");
            for child in map.values_mut() {
                strip_timing(child);
            }
        }
        serde_json::Value::Array(items) => {
            for child in items {
                strip_timing(child);
            }
        }
        _ => {}
    }
}
