//! CART training with variance-reduction (regression) or Gini
//! (classification) splits.
//!
//! Split search follows the usual sorted-sweep: candidate thresholds are
//! midpoints between consecutive distinct feature values, a split is legal
//! only if both children keep at least `min_samples_leaf` instances, and
//! ties in gain resolve to the lowest feature index, then the lowest
//! threshold. The tree therefore never produces a leaf below the floor,
//! which is what the leaf-mean-shift check relies on.

use crate::dataset::{Instance, TaskKind};
use crate::float::Float;

#[derive(Clone, Debug)]
pub enum Node<F> {
    Leaf {
        prediction: F,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: F,
        left: Box<Node<F>>,
        right: Box<Node<F>>,
    },
}

impl<F: Float> Node<F> {
    pub fn predict(&self, x: &[F]) -> F {
        self.leaf_for(x).0
    }

    /// Prediction and training count of the leaf `x` routes to.
    pub fn leaf_for(&self, x: &[F]) -> (F, usize) {
        match self {
            Node::Leaf {
                prediction,
                n_samples,
            } => (*prediction, *n_samples),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.leaf_for(x)
                } else {
                    right.leaf_for(x)
                }
            }
        }
    }

    pub fn leaves(&self) -> Vec<(F, usize)> {
        match self {
            Node::Leaf {
                prediction,
                n_samples,
            } => vec![(*prediction, *n_samples)],
            Node::Split { left, right, .. } => {
                let mut out = left.leaves();
                out.extend(right.leaves());
                out
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

pub(crate) fn fit_cart<F: Float>(
    instances: &[&Instance<F>],
    params: &TreeParams,
    task: TaskKind,
    n_classes: usize,
) -> Node<F> {
    let items: Vec<usize> = (0..instances.len()).collect();
    build(instances, items, 0, params, task, n_classes)
}

fn build<F: Float>(
    instances: &[&Instance<F>],
    items: Vec<usize>,
    depth: usize,
    params: &TreeParams,
    task: TaskKind,
    n_classes: usize,
) -> Node<F> {
    let n = items.len();
    if depth >= params.max_depth || n < 2 * params.min_samples_leaf {
        return leaf(instances, &items, task, n_classes);
    }
    let best = match task {
        TaskKind::Regression => best_split_regression(instances, &items, params),
        TaskKind::Classification => best_split_gini(instances, &items, params, n_classes),
    };
    let Some((feature, threshold)) = best else {
        return leaf(instances, &items, task, n_classes);
    };
    let (left_items, right_items): (Vec<usize>, Vec<usize>) = items
        .into_iter()
        .partition(|&i| instances[i].features[feature] <= threshold);
    Node::Split {
        feature,
        threshold,
        left: Box::new(build(
            instances,
            left_items,
            depth + 1,
            params,
            task,
            n_classes,
        )),
        right: Box::new(build(
            instances,
            right_items,
            depth + 1,
            params,
            task,
            n_classes,
        )),
    }
}

fn leaf<F: Float>(
    instances: &[&Instance<F>],
    items: &[usize],
    task: TaskKind,
    n_classes: usize,
) -> Node<F> {
    let prediction = match task {
        TaskKind::Regression => {
            let sum: F = items.iter().map(|&i| instances[i].label).sum();
            sum / F::from_count(items.len() as u64)
        }
        TaskKind::Classification => {
            let mut counts = vec![0usize; n_classes.max(1)];
            for &i in items {
                counts[instances[i].label.as_f64() as usize] += 1;
            }
            let mut best = 0;
            for (c, &cnt) in counts.iter().enumerate() {
                if cnt > counts[best] {
                    best = c;
                }
            }
            F::from_count(best as u64)
        }
    };
    Node::Leaf {
        prediction,
        n_samples: items.len(),
    }
}

/// Maximizes the drop in sum of squared errors. Returns `None` when no
/// legal split improves on the parent.
fn best_split_regression<F: Float>(
    instances: &[&Instance<F>],
    items: &[usize],
    params: &TreeParams,
) -> Option<(usize, F)> {
    let n = items.len();
    let d = instances[0].features.len();
    let total_sum: F = items.iter().map(|&i| instances[i].label).sum();
    let total_sumsq: F = items
        .iter()
        .map(|&i| instances[i].label * instances[i].label)
        .sum();
    let parent = sse(total_sum, total_sumsq, n);

    let mut best: Option<(F, usize, F)> = None; // (gain, feature, threshold)
    for feature in 0..d {
        let mut pairs: Vec<(F, F)> = items
            .iter()
            .map(|&i| (instances[i].features[feature], instances[i].label))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        let mut left_sum = F::zero();
        let mut left_sumsq = F::zero();
        for i in 1..n {
            let (x_prev, y_prev) = pairs[i - 1];
            left_sum += y_prev;
            left_sumsq += y_prev * y_prev;
            if pairs[i].0 <= x_prev {
                continue; // equal values cannot be separated
            }
            if i < params.min_samples_leaf || n - i < params.min_samples_leaf {
                continue;
            }
            let gain = parent
                - sse(left_sum, left_sumsq, i)
                - sse(total_sum - left_sum, total_sumsq - left_sumsq, n - i);
            let threshold = (x_prev + pairs[i].0) / F::cast(2.0);
            if gain > F::zero() && best.as_ref().map_or(true, |b| gain > b.0) {
                best = Some((gain, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn sse<F: Float>(sum: F, sumsq: F, n: usize) -> F {
    sumsq - sum * sum / F::from_count(n as u64)
}

/// Minimizes the count-weighted Gini impurity of the children, expressed as
/// a gain over the parent so the tie-breaking rule matches regression.
fn best_split_gini<F: Float>(
    instances: &[&Instance<F>],
    items: &[usize],
    params: &TreeParams,
    n_classes: usize,
) -> Option<(usize, F)> {
    let n = items.len();
    let d = instances[0].features.len();
    let mut total = vec![0usize; n_classes.max(1)];
    for &i in items {
        total[instances[i].label.as_f64() as usize] += 1;
    }
    let parent = gini_scaled::<F>(&total, n);

    let mut best: Option<(F, usize, F)> = None;
    for feature in 0..d {
        let mut pairs: Vec<(F, usize)> = items
            .iter()
            .map(|&i| {
                (
                    instances[i].features[feature],
                    instances[i].label.as_f64() as usize,
                )
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        let mut left = vec![0usize; n_classes.max(1)];
        for i in 1..n {
            let (x_prev, c_prev) = pairs[i - 1];
            left[c_prev] += 1;
            if pairs[i].0 <= x_prev {
                continue;
            }
            if i < params.min_samples_leaf || n - i < params.min_samples_leaf {
                continue;
            }
            let right: Vec<usize> = total.iter().zip(&left).map(|(&t, &l)| t - l).collect();
            let gain = parent - gini_scaled::<F>(&left, i) - gini_scaled::<F>(&right, n - i);
            let threshold = (x_prev + pairs[i].0) / F::cast(2.0);
            if gain > F::zero() && best.as_ref().map_or(true, |b| gain > b.0) {
                best = Some((gain, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// `n * gini = n - sum_c count_c^2 / n`; additive across children.
fn gini_scaled<F: Float>(counts: &[usize], n: usize) -> F {
    let nf = F::from_count(n as u64);
    let sq: F = counts
        .iter()
        .map(|&c| {
            let cf = F::from_count(c as u64);
            cf * cf
        })
        .sum();
    nf - sq / nf
}
