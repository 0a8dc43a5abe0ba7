//! Instance store, split assignment, CSV ingestion and label corruption.
//!
//! A [`Dataset`] is immutable once experiment setup is done: [`Dataset::split`]
//! and [`Dataset::inject_label_noise`] are the only mutating steps, and both
//! refresh the derived label statistics (label range, fallback predictor
//! stats) that learners and width bounds read later. Ids are row positions
//! and never change.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

/// One training/validation/test row. `label` holds a real value for
/// regression and a class index (stored exactly) for classification.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance<F> {
    pub id: usize,
    pub features: Vec<F>,
    pub label: F,
}

/// Statistics of the training labels, backing the constant fallback
/// predictor. Before a split is assigned they cover the whole dataset.
#[derive(Clone, Debug)]
struct FallbackStats<F> {
    mean: F,
    majority_class: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset<F: Float> {
    instances: Vec<Instance<F>>,
    task: TaskKind,
    n_features: usize,
    n_classes: usize,
    label_range: (F, F),
    fallback: FallbackStats<F>,
}

/// Requested split sizes. They may sum to less than the dataset size, in
/// which case the remaining instances stay unassigned (subsampling).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Disjoint id lists, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound = "F: Float")]
pub enum NoiseMode<F> {
    /// Replace each selected class label with a different class, uniformly.
    FlipClass,
    /// Add a fixed offset to each selected regression label.
    AddOffset(F),
}

impl<F: Float> Dataset<F> {
    /// Builds a dataset from parallel feature rows and labels.
    pub fn new(features: Vec<Vec<F>>, labels: Vec<F>, task: TaskKind) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidConfig(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let instances = features
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(id, (features, label))| Instance {
                id,
                features,
                label,
            })
            .collect();
        Self::from_instances(instances, task)
    }

    pub fn from_instances(instances: Vec<Instance<F>>, task: TaskKind) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n_features = instances[0].features.len();
        for (row, inst) in instances.iter().enumerate() {
            if inst.id != row {
                return Err(Error::InvalidConfig(format!(
                    "instance ids must equal row positions; row {row} has id {}",
                    inst.id
                )));
            }
            if inst.features.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    got: inst.features.len(),
                });
            }
            if inst.features.iter().any(|x| !x.is_finite()) || !inst.label.is_finite() {
                return Err(Error::NonNumericCell {
                    row: row + 1,
                    column: "<in-memory>".to_owned(),
                    value: "non-finite".to_owned(),
                });
            }
            if task == TaskKind::Classification && !is_class_label(inst.label) {
                return Err(Error::UnknownLabelClass {
                    row: row + 1,
                    value: format!("{}", inst.label),
                });
            }
        }
        let n_classes = match task {
            TaskKind::Regression => 0,
            TaskKind::Classification => {
                1 + instances
                    .iter()
                    .map(|i| i.label.as_f64() as usize)
                    .max()
                    .unwrap_or(0)
            }
        };
        let all_ids: Vec<usize> = (0..instances.len()).collect();
        let mut ds = Dataset {
            instances,
            task,
            n_features,
            n_classes,
            label_range: (F::zero(), F::zero()),
            fallback: FallbackStats {
                mean: F::zero(),
                majority_class: 0,
            },
        };
        ds.refresh_derived(&all_ids, &[]);
        Ok(ds)
    }

    /// Loads a CSV with a header row. `label_column` names the target; every
    /// other column is a feature, in header order.
    pub fn load_csv(path: &Path, label_column: &str, task: TaskKind) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let label_idx = headers
            .iter()
            .position(|h| h == label_column)
            .ok_or_else(|| Error::MissingColumn {
                column: label_column.to_owned(),
            })?;

        let mut instances = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            let row = row_idx + 1;
            let mut features = Vec::with_capacity(headers.len() - 1);
            let mut label = F::zero();
            for (col, raw) in record.iter().enumerate() {
                let parsed: f64 = raw.trim().parse().map_err(|_| Error::NonNumericCell {
                    row,
                    column: headers[col].to_owned(),
                    value: raw.to_owned(),
                })?;
                if !parsed.is_finite() {
                    return Err(Error::NonNumericCell {
                        row,
                        column: headers[col].to_owned(),
                        value: raw.to_owned(),
                    });
                }
                if col == label_idx {
                    if task == TaskKind::Classification && !is_class_label(F::cast(parsed)) {
                        return Err(Error::UnknownLabelClass {
                            row,
                            value: raw.to_owned(),
                        });
                    }
                    label = F::cast(parsed);
                } else {
                    features.push(F::cast(parsed));
                }
            }
            instances.push(Instance {
                id: row_idx,
                features,
                label,
            });
        }
        Self::from_instances(instances, task)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Number of label classes; 0 for regression.
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// `(y_min, y_max)` over train and validation labels once a split is
    /// assigned; over all labels before that. Test labels never contribute.
    pub fn label_range(&self) -> (F, F) {
        self.label_range
    }

    pub fn instance(&self, id: usize) -> Result<&Instance<F>> {
        self.instances.get(id).ok_or(Error::UnknownInstance(id))
    }

    pub fn instances(&self) -> &[Instance<F>] {
        &self.instances
    }

    pub fn gather(&self, ids: &[usize]) -> Result<Vec<&Instance<F>>> {
        ids.iter().map(|&id| self.instance(id)).collect()
    }

    /// Constant prediction used when a learner has nothing to fit on: the
    /// training-label mean for regression, the training majority class
    /// (ties to the lowest index) for classification.
    pub fn fallback_value(&self) -> F {
        match self.task {
            TaskKind::Regression => self.fallback.mean,
            TaskKind::Classification => F::from_count(self.fallback.majority_class as u64),
        }
    }

    /// Assigns a uniformly random disjoint split and refreshes the derived
    /// label statistics. Deterministic given `seed`.
    pub fn split(&mut self, sizes: SplitSizes, seed: u64) -> Result<Split> {
        for (part, n) in [
            ("train", sizes.train),
            ("val", sizes.val),
            ("test", sizes.test),
        ] {
            if n == 0 {
                return Err(Error::EmptySplitPart { part });
            }
        }
        let requested = sizes.train + sizes.val + sizes.test;
        if requested > self.len() {
            return Err(Error::SplitTooLarge {
                requested,
                available: self.len(),
            });
        }
        let mut ids: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        let mut train_ids: Vec<usize> = ids[..sizes.train].to_vec();
        let mut val_ids: Vec<usize> = ids[sizes.train..sizes.train + sizes.val].to_vec();
        let mut test_ids: Vec<usize> = ids[sizes.train + sizes.val..requested].to_vec();
        train_ids.sort_unstable();
        val_ids.sort_unstable();
        test_ids.sort_unstable();
        self.refresh_derived(&train_ids, &val_ids);
        Ok(Split {
            train_ids,
            val_ids,
            test_ids,
        })
    }

    /// Corrupts exactly `floor(fraction * |train|)` training labels and
    /// returns the corrupted ids, sorted. Validation and test labels are
    /// never touched. Deterministic given `seed`.
    pub fn inject_label_noise(
        &mut self,
        split: &Split,
        fraction: f64,
        mode: NoiseMode<F>,
        seed: u64,
    ) -> Result<Vec<usize>> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidNoise(format!(
                "fraction {fraction} outside [0, 1]"
            )));
        }
        match (mode, self.task) {
            (NoiseMode::AddOffset(_), TaskKind::Classification) => {
                return Err(Error::OffsetNoiseOnClassification)
            }
            (NoiseMode::FlipClass, TaskKind::Regression) => {
                return Err(Error::InvalidNoise(
                    "flip_class needs classification labels".to_owned(),
                ))
            }
            (NoiseMode::FlipClass, TaskKind::Classification) if self.n_classes < 2 => {
                return Err(Error::InvalidNoise(
                    "flip_class needs at least two classes".to_owned(),
                ))
            }
            _ => {}
        }
        if fraction == 0.0 {
            return Ok(Vec::new());
        }
        let count = (fraction * split.train_ids.len() as f64).floor() as usize;
        if count == 0 {
            return Err(Error::NoiseFractionVacuous {
                fraction,
                train: split.train_ids.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = split.train_ids.clone();
        pool.shuffle(&mut rng);
        let mut corrupted: Vec<usize> = pool[..count].to_vec();
        corrupted.sort_unstable();
        for &id in &corrupted {
            let old = self.instances[id].label;
            let new = match mode {
                NoiseMode::AddOffset(delta) => old + delta,
                NoiseMode::FlipClass => {
                    // Uniform over the other classes: draw from C-1 slots and
                    // skip past the original.
                    let old_class = old.as_f64() as usize;
                    let draw = rng.random_range(0..self.n_classes - 1);
                    let new_class = if draw >= old_class { draw + 1 } else { draw };
                    F::from_count(new_class as u64)
                }
            };
            self.instances[id].label = new;
        }
        self.refresh_derived(&split.train_ids, &split.val_ids);
        Ok(corrupted)
    }

    fn refresh_derived(&mut self, train_ids: &[usize], val_ids: &[usize]) {
        let mut min = F::infinity();
        let mut max = F::neg_infinity();
        for &id in train_ids.iter().chain(val_ids) {
            let y = self.instances[id].label;
            min = min.min(y);
            max = max.max(y);
        }
        self.label_range = (min, max);

        let n = train_ids.len();
        let sum: F = train_ids.iter().map(|&id| self.instances[id].label).sum();
        let mean = if n == 0 {
            F::zero()
        } else {
            sum / F::from_count(n as u64)
        };
        let majority_class = if self.task == TaskKind::Classification {
            let mut counts = vec![0usize; self.n_classes.max(1)];
            for &id in train_ids {
                counts[self.instances[id].label.as_f64() as usize] += 1;
            }
            // Strict comparison keeps the lowest class index on ties.
            let mut best = 0;
            for (c, &cnt) in counts.iter().enumerate() {
                if cnt > counts[best] {
                    best = c;
                }
            }
            best
        } else {
            0
        };
        self.fallback = FallbackStats {
            mean,
            majority_class,
        };
    }
}

fn is_class_label<F: Float>(label: F) -> bool {
    label.is_finite() && label >= F::zero() && label.fract() == F::zero()
}

impl Split {
    /// Train and val must be populated; test may be empty for
    /// valuation-only work that never scores held-out data.
    pub fn validate(&self) -> Result<()> {
        for (part, ids) in [("train", &self.train_ids), ("val", &self.val_ids)] {
            if ids.is_empty() {
                return Err(Error::EmptySplitPart { part });
            }
        }
        let mut seen = HashSet::new();
        for id in self
            .train_ids
            .iter()
            .chain(&self.val_ids)
            .chain(&self.test_ids)
        {
            if !seen.insert(*id) {
                return Err(Error::InvalidConfig(format!(
                    "instance {id} assigned to more than one split part"
                )));
            }
        }
        Ok(())
    }
}
