//! Learner zoo: closed-form ridge, CART, k-NN, and a data-independent
//! constant predictor.
//!
//! Every fit is deterministic and retrains from scratch; the `warm_from`
//! hook exists so an iterative learner can be added behind [`Learner`]
//! without engine changes, but none of the bundled learners consumes a warm
//! model. A fit on a subset below the learner's internal minimum degrades
//! to the constant fallback predictor instead of erroring, so utility is
//! defined for every subset including the empty one.

mod knn;
mod linear;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::float::Float;

pub use tree::Node;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "F: Float")]
pub enum LearnerKind<F> {
    Ridge {
        #[serde(default = "default_lambda")]
        lambda: F,
    },
    CartTree {
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_samples_leaf: usize,
    },
    Knn {
        k: usize,
    },
    Constant,
}

fn default_lambda<F: Float>() -> F {
    F::one()
}

fn default_min_leaf() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(bound = "F: Float")]
pub struct LearnerSpec<F> {
    #[serde(flatten)]
    pub kind: LearnerKind<F>,
    /// Kept false for every bundled learner; an iterative learner added
    /// later can flip it to receive the pre-trained full model in `fit`.
    #[serde(default)]
    pub supports_warm_start: bool,
}

impl<F: Float> LearnerSpec<F> {
    pub fn ridge(lambda: F) -> Self {
        Self {
            kind: LearnerKind::Ridge { lambda },
            supports_warm_start: false,
        }
    }

    pub fn cart_tree(max_depth: usize, min_samples_leaf: usize) -> Self {
        Self {
            kind: LearnerKind::CartTree {
                max_depth,
                min_samples_leaf,
            },
            supports_warm_start: false,
        }
    }

    pub fn knn(k: usize) -> Self {
        Self {
            kind: LearnerKind::Knn { k },
            supports_warm_start: false,
        }
    }

    pub fn constant() -> Self {
        Self {
            kind: LearnerKind::Constant,
            supports_warm_start: false,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            LearnerKind::Ridge { .. } => "ridge",
            LearnerKind::CartTree { .. } => "cart_tree",
            LearnerKind::Knn { .. } => "knn",
            LearnerKind::Constant => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            LearnerKind::Ridge { lambda } => {
                if !lambda.is_finite() || *lambda <= F::zero() {
                    return Err(Error::InvalidLearner(format!(
                        "ridge lambda must be positive, got {lambda}"
                    )));
                }
            }
            LearnerKind::CartTree {
                max_depth,
                min_samples_leaf,
            } => {
                if *max_depth < 1 {
                    return Err(Error::InvalidLearner(
                        "cart_tree max_depth must be >= 1".into(),
                    ));
                }
                if *min_samples_leaf < 1 {
                    return Err(Error::InvalidLearner(
                        "cart_tree min_samples_leaf must be >= 1".into(),
                    ));
                }
            }
            LearnerKind::Knn { k } => {
                if *k < 1 {
                    return Err(Error::InvalidLearner("knn k must be >= 1".into()));
                }
            }
            LearnerKind::Constant => {}
        }
        if self.supports_warm_start {
            return Err(Error::InvalidLearner(format!(
                "{} cannot consume a warm model; supports_warm_start must stay false",
                self.kind_name()
            )));
        }
        Ok(())
    }

    /// Smallest subset this learner can actually fit; below it the constant
    /// fallback is used. CART needs one legal leaf.
    fn internal_minimum(&self) -> usize {
        match self.kind {
            LearnerKind::Ridge { .. } | LearnerKind::Knn { .. } => 1,
            LearnerKind::CartTree {
                min_samples_leaf, ..
            } => min_samples_leaf,
            LearnerKind::Constant => usize::MAX, // always the fallback
        }
    }
}

/// Anything the valuation engine can refit on arbitrary training subsets.
pub trait Learner<F: Float>: Send + Sync {
    fn fit(
        &self,
        dataset: &Dataset<F>,
        subset: &[usize],
        warm_from: Option<&FittedModel<F>>,
    ) -> Result<FittedModel<F>>;

    fn supports_warm_start(&self) -> bool {
        false
    }
}

impl<F: Float> Learner<F> for LearnerSpec<F> {
    fn fit(
        &self,
        dataset: &Dataset<F>,
        subset: &[usize],
        warm_from: Option<&FittedModel<F>>,
    ) -> Result<FittedModel<F>> {
        fit(self, dataset, subset, warm_from)
    }

    fn supports_warm_start(&self) -> bool {
        self.supports_warm_start
    }
}

#[derive(Clone, Debug)]
pub enum ModelParams<F: Float> {
    Constant { value: F },
    Ridge { weights: Vec<F>, intercept: F },
    Tree { root: Node<F> },
    Knn { k: usize, points: Vec<(Vec<F>, F)> },
}

/// A trained model; prediction is a pure function of (model, features).
#[derive(Clone, Debug)]
pub struct FittedModel<F: Float> {
    params: ModelParams<F>,
    training_subset_size: usize,
    n_features: usize,
    task: TaskKind,
    n_classes: usize,
}

impl<F: Float> FittedModel<F> {
    /// Builds a constant model directly; used as the degenerate fallback
    /// and convenient for mock learners in tests.
    pub fn constant(value: F, subset_size: usize, n_features: usize, task: TaskKind) -> Self {
        FittedModel {
            params: ModelParams::Constant { value },
            training_subset_size: subset_size,
            n_features,
            task,
            n_classes: 0,
        }
    }

    pub fn predict(&self, features: &[F]) -> Result<F> {
        if features.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: features.len(),
            });
        }
        Ok(match &self.params {
            ModelParams::Constant { value } => *value,
            ModelParams::Ridge { weights, intercept } => {
                let mut y = *intercept;
                for (w, x) in weights.iter().zip(features) {
                    y += *w * *x;
                }
                match self.task {
                    TaskKind::Regression => y,
                    // Ridge fit on class indices: snap to the nearest class.
                    TaskKind::Classification => {
                        let top = F::from_count(self.n_classes.saturating_sub(1) as u64);
                        y.round().max(F::zero()).min(top)
                    }
                }
            }
            ModelParams::Tree { root } => root.predict(features),
            ModelParams::Knn { k, points } => {
                knn::predict(points, *k, self.task, self.n_classes, features)
            }
        })
    }

    pub fn params(&self) -> &ModelParams<F> {
        &self.params
    }

    pub fn training_subset_size(&self) -> usize {
        self.training_subset_size
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.params, ModelParams::Constant { .. })
    }
}

/// Fits `spec` on the given subset of dataset ids.
///
/// The subset is canonicalized to ascending id order first so utility is a
/// function of the subset as a set: two permutation prefixes with the same
/// content always produce bit-identical models.
pub fn fit<F: Float>(
    spec: &LearnerSpec<F>,
    dataset: &Dataset<F>,
    subset: &[usize],
    warm_from: Option<&FittedModel<F>>,
) -> Result<FittedModel<F>> {
    spec.validate()?;
    if warm_from.is_some() && !spec.supports_warm_start {
        return Err(Error::WarmStartUnsupported {
            kind: spec.kind_name().to_owned(),
        });
    }
    let mut ids: Vec<usize> = subset.to_vec();
    ids.sort_unstable();
    debug_assert!(
        ids.windows(2).all(|w| w[0] < w[1]),
        "training subsets must not repeat ids"
    );
    let instances = dataset.gather(&ids)?;

    let params = if ids.len() < spec.internal_minimum() {
        ModelParams::Constant {
            value: dataset.fallback_value(),
        }
    } else {
        match &spec.kind {
            LearnerKind::Ridge { lambda } => {
                let (weights, intercept) = linear::fit_ridge(&instances, *lambda)?;
                ModelParams::Ridge { weights, intercept }
            }
            LearnerKind::CartTree {
                max_depth,
                min_samples_leaf,
            } => ModelParams::Tree {
                root: tree::fit_cart(
                    &instances,
                    &tree::TreeParams {
                        max_depth: *max_depth,
                        min_samples_leaf: *min_samples_leaf,
                    },
                    dataset.task(),
                    dataset.n_classes(),
                ),
            },
            LearnerKind::Knn { k } => ModelParams::Knn {
                k: *k,
                points: instances
                    .iter()
                    .map(|i| (i.features.clone(), i.label))
                    .collect(),
            },
            LearnerKind::Constant => unreachable!("constant minimum is usize::MAX"),
        }
    };
    Ok(FittedModel {
        params,
        training_subset_size: ids.len(),
        n_features: dataset.n_features(),
        task: dataset.task(),
        n_classes: dataset.n_classes(),
    })
}

/// Checks the leaf-mean-shift lemma on a fitted regression tree: adding one
/// in-range label to the leaf that `features` routes to moves the leaf mean
/// by at most `(y_max - y_min) / (k + 1)` where `k` is the leaf count.
pub fn leaf_mean_shift_bound_check<F: Float>(
    model: &FittedModel<F>,
    features: &[F],
    label: F,
    label_range: (F, F),
) -> Result<bool> {
    let root = match (&model.params, model.task) {
        (ModelParams::Tree { root }, TaskKind::Regression) => root,
        (ModelParams::Tree { .. }, TaskKind::Classification) => {
            return Err(Error::InvalidLearner(
                "leaf mean shift check needs a regression tree".into(),
            ))
        }
        _ => {
            return Err(Error::InvalidLearner(
                "leaf mean shift check needs a fitted tree".into(),
            ))
        }
    };
    if features.len() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            got: features.len(),
        });
    }
    let (mean, k) = root.leaf_for(features);
    let kf = F::from_count(k as u64);
    let shifted = (kf * mean + label) / (kf + F::one());
    let shift = (mean - shifted).abs();
    let (lo, hi) = label_range;
    let bound = (hi - lo) / (kf + F::one());
    // Tiny headroom for floating rounding in the leaf mean.
    Ok(shift <= bound * (F::one() + F::cast(1e-9)) + F::cast(1e-15))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn regression_ds(rows: &[(f64, f64)]) -> Dataset<f64> {
        Dataset::new(
            rows.iter().map(|&(x, _)| vec![x]).collect(),
            rows.iter().map(|&(_, y)| y).collect(),
            TaskKind::Regression,
        )
        .unwrap()
    }

    fn classification_ds(rows: &[(f64, f64)]) -> Dataset<f64> {
        Dataset::new(
            rows.iter().map(|&(x, _)| vec![x]).collect(),
            rows.iter().map(|&(_, y)| y).collect(),
            TaskKind::Classification,
        )
        .unwrap()
    }

    #[test]
    fn constant_learner_ignores_the_subset() {
        let ds = regression_ds(&[(0.0, 1.0), (1.0, 2.0), (2.0, 6.0)]);
        let spec = LearnerSpec::constant();
        let full = fit(&spec, &ds, &[0, 1, 2], None).unwrap();
        let partial = fit(&spec, &ds, &[2], None).unwrap();
        let empty = fit(&spec, &ds, &[], None).unwrap();
        assert_eq!(full.predict(&[9.0]).unwrap(), 3.0);
        assert_eq!(partial.predict(&[9.0]).unwrap(), 3.0);
        assert_eq!(empty.predict(&[9.0]).unwrap(), 3.0);
        assert_eq!(empty.training_subset_size(), 0);
    }

    #[test]
    fn empty_subset_falls_back_for_every_learner() {
        let ds = regression_ds(&[(0.0, 2.0), (1.0, 4.0)]);
        for spec in [
            LearnerSpec::ridge(1.0),
            LearnerSpec::cart_tree(3, 1),
            LearnerSpec::knn(1),
        ] {
            let model = fit(&spec, &ds, &[], None).unwrap();
            assert!(model.is_constant());
            assert_eq!(model.predict(&[10.0]).unwrap(), 3.0);
        }
    }

    #[test]
    fn classification_fallback_is_majority_with_low_tie() {
        let ds = classification_ds(&[(0.0, 1.0), (1.0, 1.0), (2.0, 0.0), (3.0, 0.0)]);
        let model = fit(&LearnerSpec::knn(1), &ds, &[], None).unwrap();
        // Two votes each; the lowest class index wins.
        assert_eq!(model.predict(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn tree_below_leaf_floor_degrades_to_constant() {
        let ds = regression_ds(&[(0.0, 1.0), (1.0, 5.0), (2.0, 9.0)]);
        let spec = LearnerSpec::cart_tree(4, 3);
        let small = fit(&spec, &ds, &[0, 1], None).unwrap();
        assert!(small.is_constant());
        let big = fit(&spec, &ds, &[0, 1, 2], None).unwrap();
        assert!(!big.is_constant());
    }

    #[test]
    fn subset_order_does_not_change_the_model() {
        let ds = regression_ds(&[(0.0, 1.0), (0.5, 5.0), (1.0, 9.0), (1.5, 2.0)]);
        let spec = LearnerSpec::knn(2);
        let a = fit(&spec, &ds, &[2, 0, 3], None).unwrap();
        let b = fit(&spec, &ds, &[3, 2, 0], None).unwrap();
        for x in [-1.0, 0.3, 0.76, 2.0] {
            assert_eq!(a.predict(&[x]).unwrap(), b.predict(&[x]).unwrap());
        }
    }

    #[test]
    fn ridge_identity_case_predicts_zero() {
        let model = FittedModel {
            params: ModelParams::Ridge {
                weights: vec![0.0, 0.0],
                intercept: 0.0,
            },
            training_subset_size: 2,
            n_features: 2,
            task: TaskKind::Regression,
            n_classes: 0,
        };
        assert_eq!(model.predict(&[3.0, -4.0]).unwrap(), 0.0);
    }

    #[test]
    fn ridge_single_point_predicts_its_mean_everywhere() {
        let ds = regression_ds(&[(2.0, 3.0), (5.0, 7.0)]);
        let model = fit(&LearnerSpec::ridge(1.0), &ds, &[0], None).unwrap();
        for x in [-10.0, 0.0, 2.0, 99.0] {
            assert_eq!(model.predict(&[x]).unwrap(), 3.0);
        }
    }

    #[test]
    fn knn_example_from_two_points() {
        let ds = regression_ds(&[(0.0, 1.0), (10.0, 5.0)]);
        let model = fit(&LearnerSpec::knn(1), &ds, &[0, 1], None).unwrap();
        assert_eq!(model.predict(&[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn ridge_on_classification_snaps_to_classes() {
        let ds = classification_ds(&[(0.0, 0.0), (1.0, 0.0), (9.0, 1.0), (10.0, 1.0)]);
        let model = fit(&LearnerSpec::ridge(0.01), &ds, &[0, 1, 2, 3], None).unwrap();
        let lo = model.predict(&[0.0]).unwrap();
        let hi = model.predict(&[10.0]).unwrap();
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 1.0);
        // Far extrapolation still clamps into the class range.
        assert_eq!(model.predict(&[1000.0]).unwrap(), 1.0);
        assert_eq!(model.predict(&[-1000.0]).unwrap(), 0.0);
    }

    #[test]
    fn warm_start_rejected_for_bundled_learners() {
        let ds = regression_ds(&[(0.0, 1.0), (1.0, 2.0)]);
        let warm = fit(&LearnerSpec::ridge(1.0), &ds, &[0, 1], None).unwrap();
        for spec in [
            LearnerSpec::ridge(1.0),
            LearnerSpec::cart_tree(2, 1),
            LearnerSpec::knn(1),
            LearnerSpec::constant(),
        ] {
            let err = fit(&spec, &ds, &[0], Some(&warm)).unwrap_err();
            assert!(matches!(err, Error::WarmStartUnsupported { .. }));
            assert!(!spec.supports_warm_start());
        }
    }

    #[test]
    fn spec_validation_catches_bad_hyperparameters() {
        assert!(LearnerSpec::ridge(0.0).validate().is_err());
        assert!(LearnerSpec::ridge(-1.0).validate().is_err());
        assert!(LearnerSpec::<f64>::cart_tree(0, 1).validate().is_err());
        assert!(LearnerSpec::<f64>::cart_tree(3, 0).validate().is_err());
        assert!(LearnerSpec::<f64>::knn(0).validate().is_err());
        let mut spec = LearnerSpec::<f64>::ridge(1.0);
        spec.supports_warm_start = true;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn predict_checks_dimensions() {
        let ds = regression_ds(&[(0.0, 1.0), (1.0, 2.0)]);
        let model = fit(&LearnerSpec::knn(1), &ds, &[0, 1], None).unwrap();
        let err = model.predict(&[1.0, 2.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 1,
                got: 2
            }
        ));
    }

    #[test]
    fn unknown_subset_id_errors() {
        let ds = regression_ds(&[(0.0, 1.0)]);
        let err = fit(&LearnerSpec::knn(1), &ds, &[5], None).unwrap_err();
        assert!(matches!(err, Error::UnknownInstance(5)));
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec: LearnerSpec<f64> =
            serde_json::from_str(r#"{"kind":"cart_tree","max_depth":5,"min_samples_leaf":64}"#)
                .unwrap();
        assert_eq!(spec, LearnerSpec::cart_tree(5, 64));
        assert!(!spec.supports_warm_start);
        let ridge: LearnerSpec<f64> = serde_json::from_str(r#"{"kind":"ridge"}"#).unwrap();
        assert_eq!(ridge, LearnerSpec::ridge(1.0)); // default lambda
        let text = serde_json::to_string(&LearnerSpec::<f64>::knn(3)).unwrap();
        let back: LearnerSpec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, LearnerSpec::knn(3));
    }

    #[test]
    fn leaf_shift_check_rejects_wrong_models() {
        let ds = regression_ds(&[(0.0, 1.0), (1.0, 2.0)]);
        let knn = fit(&LearnerSpec::knn(1), &ds, &[0, 1], None).unwrap();
        assert!(leaf_mean_shift_bound_check(&knn, &[0.0], 1.0, (0.0, 2.0)).is_err());
        let cls = classification_ds(&[(0.0, 0.0), (1.0, 1.0)]);
        let tree = fit(&LearnerSpec::cart_tree(1, 1), &cls, &[0, 1], None).unwrap();
        assert!(leaf_mean_shift_bound_check(&tree, &[0.0], 1.0, (0.0, 1.0)).is_err());
    }

    #[test]
    fn works_in_f32() {
        let ds: Dataset<f32> = Dataset::new(
            vec![vec![0.0f32], vec![1.0], vec![2.0]],
            vec![0.0f32, 1.0, 2.0],
            TaskKind::Regression,
        )
        .unwrap();
        let model = fit(&LearnerSpec::<f32>::ridge(1.0), &ds, &[0, 1, 2], None).unwrap();
        let y = model.predict(&[1.0f32]).unwrap();
        assert!((y - 1.0).abs() < 1e-5);
    }

    proptest! {
        /// The lemma behind the tree width refinement: one in-range label
        /// moves a leaf mean by at most range / (k + 1).
        #[test]
        fn leaf_mean_shift_bound_holds(
            labels in proptest::collection::vec(0.0f64..1.0, 4..40),
            added in 0.0f64..1.0,
            msl in 1usize..4,
        ) {
            let rows: Vec<(f64, f64)> = labels
                .iter()
                .enumerate()
                .map(|(i, &y)| (i as f64 / labels.len() as f64, y))
                .collect();
            let ds = regression_ds(&rows);
            let ids: Vec<usize> = (0..rows.len()).collect();
            let model = fit(&LearnerSpec::cart_tree(4, msl), &ds, &ids, None).unwrap();
            prop_assume!(!model.is_constant());
            for x in [0.0, 0.31, 0.62, 0.97] {
                prop_assert!(
                    leaf_mean_shift_bound_check(&model, &[x], added, (0.0, 1.0)).unwrap()
                );
            }
        }
    }
}
