//! Validation metrics, the utility function, and the instrumented run
//! context every valuation method goes through.
//!
//! Utility of a training subset S is the chosen metric of the model fitted
//! on S, measured on the validation split. All three metrics are oriented
//! so that larger is better, which keeps one code path for "remove the
//! lowest-value instances" downstream.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Instance, Split, TaskKind};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::learners::{FittedModel, Learner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    NegMae,
    NegMse,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::NegMae => "neg_mae",
            MetricKind::NegMse => "neg_mse",
        }
    }

    pub fn validate_for(self, task: TaskKind) -> Result<()> {
        match (self, task) {
            (MetricKind::Accuracy, TaskKind::Regression) => Err(Error::InvalidConfig(
                "accuracy requires a classification task".into(),
            )),
            (MetricKind::NegMae | MetricKind::NegMse, TaskKind::Classification) => Err(
                Error::InvalidConfig("regression error metrics require a regression task".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Scores a fitted model on a slice of held-out instances.
pub fn evaluate<F: Float>(
    model: &FittedModel<F>,
    instances: &[&Instance<F>],
    metric: MetricKind,
) -> Result<F> {
    if instances.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let n = F::from_count(instances.len() as u64);
    match metric {
        MetricKind::Accuracy => {
            let mut hits = 0u64;
            for inst in instances {
                let pred = model.predict(&inst.features)?;
                // Class labels are integral; compare as integers so 1.0
                // and 0.9999999 from a rounded ridge output agree.
                if pred.as_f64().round() as i64 == inst.label.as_f64().round() as i64 {
                    hits += 1;
                }
            }
            Ok(F::from_count(hits) / n)
        }
        MetricKind::NegMae => {
            let mut total = F::zero();
            for inst in instances {
                total += (model.predict(&inst.features)? - inst.label).abs();
            }
            Ok(-(total / n))
        }
        MetricKind::NegMse => {
            let mut total = F::zero();
            for inst in instances {
                let e = model.predict(&inst.features)? - inst.label;
                total += e * e;
            }
            Ok(-(total / n))
        }
    }
}

/// One marginal contribution observation drawn from a permutation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct MarginalSample<F> {
    pub instance_id: usize,
    /// FNV-1a hash of the permutation, enough to tell draws apart in audit
    /// output without storing whole permutations.
    pub permutation_digest: String,
    pub phi: F,
    /// Model fits charged to this sample (2 standalone, 1 when the prefix
    /// model was shared inside a batch).
    pub trainings_used: u64,
}

/// Hex FNV-1a digest of a permutation of ids.
pub fn permutation_digest(sigma: &[usize]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &id in sigma {
        for byte in (id as u64).to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Ids strictly before `n` in the permutation.
pub fn prefix_before(sigma: &[usize], n: usize) -> Result<&[usize]> {
    match sigma.iter().position(|&id| id == n) {
        Some(pos) => Ok(&sigma[..pos]),
        None => Err(Error::NotInPermutation(n)),
    }
}

/// What one metric evaluation touched; the audit trail for split hygiene.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct EvalRecord {
    pub phase: String,
    pub train_ids_seen: usize,
    pub val_ids_seen: usize,
    pub test_ids_seen: usize,
}

/// Records every metric evaluation, tagged with the phase the harness was
/// in, so tests can assert the test split stays untouched until the final
/// report.
pub struct EvalLog {
    train: BTreeSet<usize>,
    val: BTreeSet<usize>,
    test: BTreeSet<usize>,
    phase: Mutex<String>,
    entries: Mutex<Vec<EvalRecord>>,
}

impl EvalLog {
    pub fn new(split: &Split) -> Self {
        EvalLog {
            train: split.train_ids.iter().copied().collect(),
            val: split.val_ids.iter().copied().collect(),
            test: split.test_ids.iter().copied().collect(),
            phase: Mutex::new("valuation".to_owned()),
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn set_phase(&self, phase: &str) {
        *self.phase.lock().unwrap() = phase.to_owned();
    }

    pub fn record(&self, ids: &[usize]) {
        let record = EvalRecord {
            phase: self.phase.lock().unwrap().clone(),
            train_ids_seen: ids.iter().filter(|id| self.train.contains(id)).count(),
            val_ids_seen: ids.iter().filter(|id| self.val.contains(id)).count(),
            test_ids_seen: ids.iter().filter(|id| self.test.contains(id)).count(),
        };
        self.entries.lock().unwrap().push(record);
    }

    pub fn entries(&self) -> Vec<EvalRecord> {
        self.entries.lock().unwrap().clone()
    }
}

/// Everything a valuation method needs: the data, the split, the learner,
/// the metric, and counters shared across threads.
pub struct RunContext<'a, F: Float> {
    dataset: &'a Dataset<F>,
    split: &'a Split,
    learner: &'a dyn Learner<F>,
    metric: MetricKind,
    eval_log: Option<&'a EvalLog>,
    fits: AtomicU64,
}

impl<'a, F: Float> RunContext<'a, F> {
    pub fn new(
        dataset: &'a Dataset<F>,
        split: &'a Split,
        learner: &'a dyn Learner<F>,
        metric: MetricKind,
    ) -> Result<Self> {
        split.validate()?;
        metric.validate_for(dataset.task())?;
        Ok(RunContext {
            dataset,
            split,
            learner,
            metric,
            eval_log: None,
            fits: AtomicU64::new(0),
        })
    }

    pub fn with_eval_log(mut self, log: &'a EvalLog) -> Self {
        self.eval_log = Some(log);
        self
    }

    pub fn dataset(&self) -> &'a Dataset<F> {
        self.dataset
    }

    pub fn split(&self) -> &'a Split {
        self.split
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn set_phase(&self, phase: &str) {
        if let Some(log) = self.eval_log {
            log.set_phase(phase);
        }
    }

    /// Total model fits so far; the budget every method is compared on.
    pub fn trainings(&self) -> u64 {
        self.fits.load(Ordering::Relaxed)
    }

    pub fn supports_warm_start(&self) -> bool {
        self.learner.supports_warm_start()
    }

    pub fn fit_subset(&self, subset: &[usize]) -> Result<FittedModel<F>> {
        self.fits.fetch_add(1, Ordering::Relaxed);
        self.learner.fit(self.dataset, subset, None)
    }

    pub fn fit_subset_warm(
        &self,
        subset: &[usize],
        warm_from: Option<&FittedModel<F>>,
    ) -> Result<FittedModel<F>> {
        self.fits.fetch_add(1, Ordering::Relaxed);
        self.learner.fit(self.dataset, subset, warm_from)
    }

    pub fn val_instances(&self) -> Result<Vec<&'a Instance<F>>> {
        self.dataset.gather(&self.split.val_ids)
    }

    pub fn eval_val(&self, model: &FittedModel<F>) -> Result<F> {
        if let Some(log) = self.eval_log {
            log.record(&self.split.val_ids);
        }
        evaluate(
            model,
            &self.dataset.gather(&self.split.val_ids)?,
            self.metric,
        )
    }

    pub fn eval_test(&self, model: &FittedModel<F>) -> Result<F> {
        if self.split.test_ids.is_empty() {
            return Err(Error::EmptyTest);
        }
        if let Some(log) = self.eval_log {
            log.record(&self.split.test_ids);
        }
        evaluate(
            model,
            &self.dataset.gather(&self.split.test_ids)?,
            self.metric,
        )
    }

    /// Utility of a training subset: fit on it, score on validation.
    pub fn utility(&self, subset: &[usize]) -> Result<F> {
        let model = self.fit_subset(subset)?;
        self.eval_val(&model)
    }

    pub fn utility_warm(&self, subset: &[usize], warm_from: Option<&FittedModel<F>>) -> Result<F> {
        let model = self.fit_subset_warm(subset, warm_from)?;
        self.eval_val(&model)
    }
}

/// Marginal contribution of instance `n` under permutation `sigma`:
/// utility with `n` appended to its prefix minus utility of the prefix.
pub fn marginal_contribution<F: Float>(
    ctx: &RunContext<'_, F>,
    n: usize,
    sigma: &[usize],
) -> Result<MarginalSample<F>> {
    let prefix = prefix_before(sigma, n)?;
    let without = ctx.utility(prefix)?;
    let mut with_n = prefix.to_vec();
    with_n.push(n);
    let with = ctx.utility(&with_n)?;
    Ok(MarginalSample {
        instance_id: n,
        permutation_digest: permutation_digest(sigma),
        phi: with - without,
        trainings_used: 2,
    })
}
