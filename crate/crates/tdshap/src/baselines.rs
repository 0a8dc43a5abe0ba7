//! Reference valuation methods: the exact Shapley oracle, truncated Monte
//! Carlo Shapley, grouped leave-one-out ranking, and random removal.
//!
//! The exact oracle is the ground truth every estimator is tested against;
//! the others are the comparison methods the cleansing harness runs.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::metrics::RunContext;

/// Hard ceiling for the exact oracle; 2^N utility evaluations.
pub const EXACT_MAX_DEFAULT: usize = 8;

/// Per-instance values produced by one valuation method.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct ValuationVector<F> {
    pub phi: BTreeMap<usize, F>,
    pub method: String,
    /// Marginal samples (estimators) or utility evaluations (oracle).
    pub samples_used: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct BaselineConfig<F> {
    /// Instances removed per leave-one-out round.
    #[serde(default = "default_n_loo")]
    pub n_loo: usize,
    /// Monte Carlo permutation budget.
    #[serde(default = "default_n_perm")]
    pub n_perm: usize,
    /// Truncation tolerance for the Monte Carlo scan. `None` picks the
    /// standard 1% of |V(D) - V(empty)|; zero disables truncation.
    #[serde(default)]
    pub truncation_tol: Option<F>,
}

fn default_n_loo() -> usize {
    1
}

fn default_n_perm() -> usize {
    500
}

impl<F> Default for BaselineConfig<F> {
    fn default() -> Self {
        BaselineConfig {
            n_loo: default_n_loo(),
            n_perm: default_n_perm(),
            truncation_tol: None,
        }
    }
}

impl<F: Float> BaselineConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.n_loo < 1 {
            return Err(Error::InvalidConfig("n_loo must be >= 1".into()));
        }
        if self.n_perm < 1 {
            return Err(Error::InvalidConfig("n_perm must be >= 1".into()));
        }
        if let Some(tol) = self.truncation_tol {
            if tol.is_nan() || tol < F::zero() {
                return Err(Error::InvalidConfig(format!(
                    "truncation_tol must be >= 0, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// Exact Shapley values with the default size cap.
pub fn exact_shapley<F: Float>(ctx: &RunContext<'_, F>) -> Result<ValuationVector<F>> {
    exact_shapley_capped(ctx, EXACT_MAX_DEFAULT)
}

/// Exact Shapley values via the subset-weighted sum
/// phi_n = sum over S not containing n of |S|!(N-|S|-1)!/N! * (V(S+n) - V(S)),
/// equal to the all-permutations average but needing 2^N utilities instead
/// of N! after memoization.
pub fn exact_shapley_capped<F: Float>(
    ctx: &RunContext<'_, F>,
    max_train: usize,
) -> Result<ValuationVector<F>> {
    let train = &ctx.split().train_ids;
    let n = train.len();
    if n > max_train {
        return Err(Error::ExactTooLarge { n, max: max_train });
    }
    let masks = 1usize << n;
    let utilities: Vec<F> = (0..masks)
        .into_par_iter()
        .map(|mask| {
            let subset: Vec<usize> = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| train[i])
                .collect();
            ctx.utility(&subset)
        })
        .collect::<Result<_>>()?;

    // weight(s) = s!(N-1-s)!/N! = 1/(N * C(N-1, s))
    let weights: Vec<F> = (0..n)
        .map(|s| F::cast(1.0 / (n as f64 * binomial(n - 1, s))))
        .collect();

    let mut phi = BTreeMap::new();
    for (i, &id) in train.iter().enumerate() {
        let bit = 1usize << i;
        let mut total = F::zero();
        for mask in 0..masks {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                total += weights[s] * (utilities[mask | bit] - utilities[mask]);
            }
        }
        phi.insert(id, total);
    }
    Ok(ValuationVector {
        phi,
        method: "exact".to_owned(),
        samples_used: masks as u64,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Truncated Monte Carlo Shapley: scan sampled permutations front to back,
/// and once the prefix utility is within `truncation_tol` of the full-set
/// utility, record the remaining marginals of that permutation as zero.
///
/// The truncation test runs after each evaluated position, so the first
/// position of every permutation always contributes a real marginal.
pub fn tmc_shapley<F: Float>(
    ctx: &RunContext<'_, F>,
    config: &BaselineConfig<F>,
    seed: u64,
) -> Result<ValuationVector<F>> {
    config.validate()?;
    let train = ctx.split().train_ids.clone();
    let n = train.len();
    let v_full = ctx.utility(&train)?;
    let v_empty = ctx.utility(&[])?;
    let tol = match config.truncation_tol {
        Some(t) => t,
        None => F::cast(0.01) * (v_full - v_empty).abs(),
    };

    // One RNG stream per permutation; collected in permutation order so
    // the fold below is deterministic regardless of worker scheduling.
    let per_perm: Vec<Vec<(usize, F)>> = (0..config.n_perm)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut sigma = train.clone();
            sigma.shuffle(&mut rng);
            let mut marginals = Vec::with_capacity(n);
            let mut v_prev = v_empty;
            let mut truncated = false;
            for j in 0..n {
                if truncated {
                    marginals.push((sigma[j], F::zero()));
                    continue;
                }
                let v_curr = ctx.utility(&sigma[..=j])?;
                marginals.push((sigma[j], v_curr - v_prev));
                v_prev = v_curr;
                if (v_curr - v_full).abs() < tol {
                    truncated = true;
                }
            }
            Ok(marginals)
        })
        .collect::<Result<_>>()?;

    let mut sums: BTreeMap<usize, F> = train.iter().map(|&id| (id, F::zero())).collect();
    for perm in &per_perm {
        for &(id, phi) in perm {
            *sums.get_mut(&id).expect("permutation of train ids") += phi;
        }
    }
    let denom = F::from_count(config.n_perm as u64);
    let phi = sums.into_iter().map(|(id, s)| (id, s / denom)).collect();
    Ok(ValuationVector {
        phi,
        method: "tmc".to_owned(),
        samples_used: (config.n_perm * n) as u64,
    })
}

/// Grouped leave-one-out removal order: repeatedly score every retained
/// instance by V(retained) - V(retained minus it), drop the `n_loo` lowest
/// (ties to the lower id), until nothing is left. Earlier in the returned
/// list means judged more harmful.
pub fn loo_grouped<F: Float>(ctx: &RunContext<'_, F>, n_loo: usize) -> Result<Vec<usize>> {
    let mut retained = ctx.split().train_ids.clone();
    if n_loo < 1 {
        return Err(Error::InvalidConfig("n_loo must be >= 1".into()));
    }
    if n_loo > retained.len() {
        return Err(Error::InvalidConfig(format!(
            "n_loo {} exceeds the training set size {}",
            n_loo,
            retained.len()
        )));
    }
    let mut order = Vec::with_capacity(retained.len());
    while !retained.is_empty() {
        let v_curr = ctx.utility(&retained)?;
        let mut scores: Vec<(F, usize)> = retained
            .par_iter()
            .map(|&id| {
                let without: Vec<usize> = retained.iter().copied().filter(|&x| x != id).collect();
                ctx.utility(&without).map(|v| (v_curr - v, id))
            })
            .collect::<Result<_>>()?;
        if scores.iter().any(|(s, _)| !s.is_finite()) {
            return Err(Error::Numerical("non-finite leave-one-out score".into()));
        }
        scores.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(CmpOrdering::Equal)
                .then_with(|| a.1.cmp(&b.1))
        });
        for &(_, id) in scores.iter().take(n_loo) {
            order.push(id);
            retained.retain(|&x| x != id);
        }
    }
    Ok(order)
}

/// Uniformly random removal order under the given seed.
pub fn random_order(train_ids: &[usize], seed: u64) -> Vec<usize> {
    let mut order = train_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}
