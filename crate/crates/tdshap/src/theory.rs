//! Closed-form guarantees for the thresholding valuation loop: problem
//! complexity, marginal-contribution width bounds per metric, the
//! sufficient iteration count, and the failure-probability bound.
//!
//! These are loose worst-case bounds meant for diagnostics; the engine
//! warns (never blocks) when a configured budget falls below
//! `t_sufficient`. Natural logarithms throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::metrics::MetricKind;

/// Upper bound N/ε² on complexity Σ_n 1/(|φ_n − τ| + ε)².
pub fn complexity_upper<F: Float>(n_instances: usize, epsilon: F) -> Result<F> {
    if epsilon.is_nan() || epsilon <= F::zero() {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(F::from_count(n_instances as u64) / (epsilon * epsilon))
}

/// Worst-case spread of one marginal contribution for the given metric.
///
/// Accuracy lives in [0, 1] so a marginal moves by at most 1 in each
/// direction; the regression error metrics are bounded through the label
/// range of the data the models can see (train plus validation).
pub fn width_bound<F: Float>(metric: MetricKind, label_range: Option<(F, F)>) -> Result<F> {
    match metric {
        MetricKind::Accuracy => Ok(F::cast(2.0)),
        MetricKind::NegMae | MetricKind::NegMse => {
            let (lo, hi) = label_range.ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{} width bound needs the label range",
                    metric.name()
                ))
            })?;
            if hi.is_nan() || lo.is_nan() || hi < lo {
                return Err(Error::InvalidConfig(format!(
                    "label range is inverted: ({lo}, {hi})"
                )));
            }
            let delta = hi - lo;
            Ok(match metric {
                MetricKind::NegMae => F::cast(2.0) * delta,
                _ => F::cast(2.0) * delta * delta,
            })
        }
    }
}

/// Refined width for a structure-stable regression tree: adding one
/// instance to a leaf holding `n_instance` points moves its mean by at
/// most range/(n_instance + 1), shrinking the squared-error width by
/// 2/(n_instance + 1).
pub fn width_bound_tree<F: Float>(n_instance: usize, label_range: (F, F)) -> Result<F> {
    if n_instance < 1 {
        return Err(Error::InvalidConfig(
            "tree width bound needs n_instance >= 1".into(),
        ));
    }
    let base = width_bound(MetricKind::NegMse, Some(label_range))?;
    Ok(base * tree_factor::<F>(n_instance))
}

fn tree_factor<F: Float>(n_instance: usize) -> F {
    F::cast(2.0) / F::from_count(n_instance as u64 + 1)
}

/// Does T satisfy T ≥ (64Nw²/ε²)·ln(N(1+ln T))?
fn sufficient_holds(t: u64, coeff: f64, n: f64) -> bool {
    let t = t as f64;
    t >= coeff * (n * (1.0 + t.ln())).ln()
}

/// Smallest integer T with T ≥ (64Nw²/ε²)·ln(N(1+ln T)).
///
/// Solved by fixed-point iteration from T₀ = 64Nw²/ε²; the map is a very
/// flat log-log contraction so it stabilizes in a handful of rounds. The
/// result is verified by substitution and then walked down to the minimal
/// satisfying integer.
pub fn sufficient_iterations<F: Float>(n_instances: usize, w: F, epsilon: F) -> Result<u64> {
    let n = n_instances as f64;
    let w = w.as_f64();
    let eps = epsilon.as_f64();
    if n_instances < 1 || w.is_nan() || w <= 0.0 || eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidConfig(
            "sufficient iteration count needs N >= 1, w > 0, epsilon > 0".into(),
        ));
    }
    let coeff = 64.0 * n * w * w / (eps * eps);
    let mut t = coeff.ceil().max(1.0) as u64;
    let mut stabilized = false;
    for _ in 0..100 {
        let next = (coeff * (n * (1.0 + (t as f64).ln())).ln()).ceil().max(1.0) as u64;
        if next == t {
            stabilized = true;
            break;
        }
        t = next;
    }
    if !stabilized || !sufficient_holds(t, coeff, n) {
        return Err(Error::NonConvergence { rounds: 100 });
    }
    while t > 1 && sufficient_holds(t - 1, coeff, n) {
        t -= 1;
    }
    Ok(t)
}

/// Failure-probability bound 1/(N²(1+ln T)²) at the sufficient budget.
pub fn failure_bound(n_instances: usize, t: u64) -> f64 {
    let n = n_instances as f64;
    let denom = 1.0 + (t as f64).ln();
    1.0 / (n * n * denom * denom)
}

/// Bundle of all the guarantees for one problem instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct TheoryReport<F> {
    pub n_instances: usize,
    pub epsilon: F,
    pub metric: MetricKind,
    pub label_range: Option<(F, F)>,
    pub h_upper: F,
    pub w_bound: F,
    /// Sub-Gaussian scale of one marginal sample, w/2.
    pub r_equiv: F,
    pub t_sufficient: u64,
    pub p_fail_bound: f64,
    /// 2/(n_instance + 1) when a leaf-size refinement applies.
    pub tree_factor: Option<F>,
    /// Logarithm convention used by every formula above.
    pub log_base: String,
}

impl<F: Float> TheoryReport<F> {
    pub fn compute(
        n_instances: usize,
        epsilon: F,
        metric: MetricKind,
        label_range: Option<(F, F)>,
        tree_leaf_size: Option<usize>,
    ) -> Result<Self> {
        let h_upper = complexity_upper(n_instances, epsilon)?;
        let w_bound = width_bound(metric, label_range)?;
        let t_sufficient = sufficient_iterations(n_instances, w_bound, epsilon)?;
        let tree_factor = match (tree_leaf_size, metric) {
            (Some(m), MetricKind::NegMse) => Some(tree_factor::<F>(m.max(1))),
            (Some(_), _) => {
                return Err(Error::InvalidConfig(
                    "the tree width refinement applies to neg_mse only".into(),
                ))
            }
            (None, _) => None,
        };
        Ok(TheoryReport {
            n_instances,
            epsilon,
            metric,
            label_range,
            h_upper,
            w_bound,
            r_equiv: w_bound / F::cast(2.0),
            t_sufficient,
            p_fail_bound: failure_bound(n_instances, t_sufficient),
            tree_factor,
            log_base: "natural".to_owned(),
        })
    }
}
