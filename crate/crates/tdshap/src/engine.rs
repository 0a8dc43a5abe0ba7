//! The thresholding-bandit valuation loop.
//!
//! Each training instance is an arm; pulling an arm draws one marginal
//! contribution from a random permutation and folds it into a running
//! mean. The APT index directs pulls toward instances whose mean is still
//! ambiguous against the threshold, so the harmful set converges with far
//! fewer model fits than full Shapley estimation.
//!
//! Two sampling refinements: a minimum prefix length for sampled
//! permutations (keeps early prefixes from dominating), and K-batch
//! evaluation (K arms placed consecutively in one permutation, scored with
//! K+1 fits instead of 2K). A warm-start hook forwards a full-data model
//! to learners that can consume one.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::learners::FittedModel;
use crate::metrics::{permutation_digest, MarginalSample, RunContext};
use crate::stream_rng;
use crate::theory::{sufficient_iterations, width_bound};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound = "F: Float")]
pub enum StopRule<F> {
    /// Fixed number of loop iterations (0 = initialization only).
    Iterations(u64),
    /// Elapsed seconds since the run started.
    WallClock(f64),
    /// Stop once every mean update in the last `window` iterations is
    /// smaller than `delta`.
    MaxDelta { delta: F, window: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(bound = "F: Float")]
pub struct TdshapConfig<F> {
    /// Harmfulness threshold on the estimated value.
    pub tau: F,
    /// Precision margin around tau; must be positive.
    pub epsilon: F,
    /// Minimum prefix length of sampled permutations (0 disables).
    pub n_min: usize,
    /// Arms evaluated per iteration on one shared permutation (1 disables).
    pub batch_k: usize,
    pub stop: StopRule<F>,
    pub seed: u64,
    pub warm_start: bool,
}

impl<F: Float> Default for TdshapConfig<F> {
    fn default() -> Self {
        TdshapConfig {
            tau: F::cast(-0.1),
            epsilon: F::cast(0.1),
            n_min: 0,
            batch_k: 1,
            stop: StopRule::Iterations(50),
            seed: 0,
            warm_start: false,
        }
    }
}

impl<F: Float> TdshapConfig<F> {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= F::zero() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive and finite, got {}; the index would lose its exploration term",
                self.epsilon
            )));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidConfig("tau must be finite".into()));
        }
        if self.batch_k < 1 {
            return Err(Error::InvalidConfig("batch_k must be >= 1".into()));
        }
        let room = n_train.saturating_sub(self.n_min.max(1));
        if self.batch_k > room {
            return Err(Error::InfeasibleBlock {
                n_min: self.n_min,
                k: self.batch_k,
                n: n_train,
            });
        }
        if let StopRule::MaxDelta { delta, window } = self.stop {
            if delta.is_nan() || delta <= F::zero() || window < 1 {
                return Err(Error::InvalidConfig(
                    "max_delta stop needs delta > 0 and window >= 1".into(),
                ));
            }
        }
        if let StopRule::WallClock(secs) = self.stop {
            if secs.is_nan() || secs < 0.0 {
                return Err(Error::InvalidConfig(
                    "wall_clock stop needs a non-negative duration".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-arm running means and pull counts.
#[derive(Clone, Debug)]
pub struct BanditState<F> {
    ids: Vec<usize>,
    phi_hat: Vec<F>,
    pulls: Vec<u64>,
    iteration: u64,
}

impl<F: Float> BanditState<F> {
    pub fn new(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        let n = ids.len();
        BanditState {
            ids,
            phi_hat: vec![F::zero(); n],
            pulls: vec![0; n],
            iteration: 0,
        }
    }

    /// Assembles a state directly; for tests of the selection rule.
    pub fn from_parts(ids: Vec<usize>, phi_hat: Vec<F>, pulls: Vec<u64>) -> Result<Self> {
        if ids.len() != phi_hat.len() || ids.len() != pulls.len() {
            return Err(Error::InvalidConfig(
                "state vectors must have equal lengths".into(),
            ));
        }
        if !ids.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "state ids must be sorted and distinct".into(),
            ));
        }
        Ok(BanditState {
            ids,
            phi_hat,
            pulls,
            iteration: 0,
        })
    }

    fn idx(&self, n: usize) -> Result<usize> {
        self.ids
            .binary_search(&n)
            .map_err(|_| Error::UnknownInstance(n))
    }

    /// Folds one sample into arm `n` by the running-mean recurrence
    /// mean <- T/(T+1) * mean + 1/(T+1) * phi; returns |mean change|.
    pub fn record_sample(&mut self, n: usize, phi: F) -> Result<F> {
        let i = self.idx(n)?;
        let t = F::from_count(self.pulls[i]);
        let old = self.phi_hat[i];
        let new = t / (t + F::one()) * old + phi / (t + F::one());
        self.phi_hat[i] = new;
        self.pulls[i] += 1;
        Ok((new - old).abs())
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn phi_hat(&self, n: usize) -> Result<F> {
        Ok(self.phi_hat[self.idx(n)?])
    }

    pub fn pulls(&self, n: usize) -> Result<u64> {
        Ok(self.pulls[self.idx(n)?])
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn total_pulls(&self) -> u64 {
        self.pulls.iter().sum()
    }

    fn all_finite(&self) -> bool {
        self.phi_hat.iter().all(|p| p.is_finite())
    }
}

/// The sampling-urgency index sqrt(T_n) * (|mean_n - tau| + epsilon);
/// the arm with the smallest index is pulled next.
pub fn apt_index<F: Float>(state: &BanditState<F>, n: usize, tau: F, epsilon: F) -> Result<F> {
    let i = state.idx(n)?;
    Ok(apt_index_raw(
        state.phi_hat[i],
        state.pulls[i],
        tau,
        epsilon,
    ))
}

pub(crate) fn apt_index_raw<F: Float>(mean: F, pulls: u64, tau: F, epsilon: F) -> F {
    F::from_count(pulls).sqrt() * ((mean - tau).abs() + epsilon)
}

/// Indices of the k smallest values; ties at the selection boundary are
/// resolved uniformly at random. Shared by the engine and the bandit
/// simulator.
pub(crate) fn smallest_k<F: Float>(values: &[F], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    debug_assert!(k >= 1 && k <= values.len());
    if k == 1 {
        return vec![argmin_uniform(values, rng)];
    }
    if k == values.len() {
        return (0..values.len()).collect();
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.cmp(&b))
    });
    let boundary = values[order[k - 1]];
    let mut chosen: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] < boundary)
        .collect();
    let mut tied: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] == boundary)
        .collect();
    let need = k - chosen.len();
    // Partial Fisher-Yates: the first `need` slots end up a uniform sample.
    for j in 0..need {
        let pick = rng.random_range(j..tied.len());
        tied.swap(j, pick);
    }
    chosen.extend_from_slice(&tied[..need]);
    chosen
}

/// Single-pass uniform argmin; reservoir draw on ties so no allocation.
pub(crate) fn argmin_uniform<F: Float>(values: &[F], rng: &mut impl Rng) -> usize {
    let mut best = values[0];
    let mut chosen = 0usize;
    let mut ties = 1u32;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best {
            best = v;
            chosen = i;
            ties = 1;
        } else if v == best {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                chosen = i;
            }
        }
    }
    chosen
}

/// The k arms with the smallest APT index, boundary ties uniform.
pub fn select_arms<F: Float>(
    state: &BanditState<F>,
    k: usize,
    tau: F,
    epsilon: F,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if k < 1 || k > state.ids.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot select {k} arms out of {}",
            state.ids.len()
        )));
    }
    let indices: Vec<F> = (0..state.ids.len())
        .map(|i| apt_index_raw(state.phi_hat[i], state.pulls[i], tau, epsilon))
        .collect();
    Ok(smallest_k(&indices, k, rng)
        .into_iter()
        .map(|i| state.ids[i])
        .collect())
}

/// Permutation of `train_ids` with the block's ids consecutive (block
/// order shuffled), at least `n_min` ids before the block, and the block
/// start uniform over the feasible positions. Returns the permutation and
/// the block start.
pub fn sample_block_permutation<F: Rng>(
    train_ids: &[usize],
    block: &[usize],
    n_min: usize,
    rng: &mut F,
) -> Result<(Vec<usize>, usize)> {
    let n = train_ids.len();
    let k = block.len();
    if n_min + k > n {
        return Err(Error::InfeasibleBlock { n_min, k, n });
    }
    let mut others: Vec<usize> = train_ids
        .iter()
        .copied()
        .filter(|id| !block.contains(id))
        .collect();
    if others.len() != n - k {
        return Err(Error::InvalidConfig(
            "block contains ids outside the training set".into(),
        ));
    }
    others.shuffle(rng);
    let mut ordered = block.to_vec();
    ordered.shuffle(rng);
    let start = rng.random_range(n_min..=n - k);
    let mut sigma = Vec::with_capacity(n);
    sigma.extend_from_slice(&others[..start]);
    sigma.extend_from_slice(&ordered);
    sigma.extend_from_slice(&others[start..]);
    Ok((sigma, start))
}

/// Marginal contributions of a consecutive block in one permutation,
/// sharing the prefix model: K+1 fits for K samples. The prefix model is
/// fitted once, then extended one block member at a time.
pub fn evaluate_block<F: Float>(
    ctx: &RunContext<'_, F>,
    sigma: &[usize],
    block: &[usize],
    warm_from: Option<&FittedModel<F>>,
) -> Result<Vec<MarginalSample<F>>> {
    let start = sigma
        .iter()
        .position(|&id| id == block[0])
        .ok_or(Error::NotInPermutation(block[0]))?;
    if start + block.len() > sigma.len() || &sigma[start..start + block.len()] != block {
        return Err(Error::BlockNotConsecutive);
    }
    let digest = permutation_digest(sigma);
    let mut samples = Vec::with_capacity(block.len());
    let mut v_prev = ctx.utility_warm(&sigma[..start], warm_from)?;
    for (k, &id) in block.iter().enumerate() {
        let v = ctx.utility_warm(&sigma[..=start + k], warm_from)?;
        samples.push(MarginalSample {
            instance_id: id,
            permutation_digest: digest.clone(),
            phi: v - v_prev,
            trainings_used: if k == 0 { 2 } else { 1 },
        });
        v_prev = v;
    }
    Ok(samples)
}

/// One line of the audit trail: a block evaluation, either an
/// initialization batch (t = 0) or a loop iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct AuditRecord<F> {
    pub t: u64,
    pub phase: String,
    /// Arms in the order they sit in the permutation.
    pub arms: Vec<usize>,
    pub sigma_digest: String,
    pub phi: Vec<F>,
    pub trainings: u64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct ValuationResult<F: Float> {
    pub phi_hat: BTreeMap<usize, F>,
    /// Exactly {n : phi_hat[n] <= tau}; no other membership rule.
    #[serde(rename = "harmful")]
    pub harmful_set: Vec<usize>,
    pub pulls: BTreeMap<usize, u64>,
    pub trainings_total: u64,
    pub iterations: u64,
    pub seed: u64,
    pub config: TdshapConfig<F>,
    #[serde(skip)]
    pub audit_log: Vec<AuditRecord<F>>,
}

/// Stop test, evaluated before each loop iteration.
pub fn check_stop<F: Float>(
    iterations_done: u64,
    stop: &StopRule<F>,
    elapsed_secs: f64,
    recent_updates: &VecDeque<F>,
) -> bool {
    match stop {
        StopRule::Iterations(n) => iterations_done >= *n,
        StopRule::WallClock(secs) => elapsed_secs >= *secs,
        StopRule::MaxDelta { delta, window } => {
            recent_updates.len() >= *window
                && recent_updates
                    .iter()
                    .rev()
                    .take(*window)
                    .all(|u| *u < *delta)
        }
    }
}

pub fn run<F: Float>(
    ctx: &RunContext<'_, F>,
    config: &TdshapConfig<F>,
) -> Result<ValuationResult<F>> {
    run_streaming(ctx, config, None)
}

/// Runs the full loop, streaming each audit record to `sink` as a JSON
/// line the moment it is produced, so a failed run still leaves a complete
/// trail.
pub fn run_streaming<F: Float>(
    ctx: &RunContext<'_, F>,
    config: &TdshapConfig<F>,
    mut sink: Option<&mut dyn Write>,
) -> Result<ValuationResult<F>> {
    let train = ctx.split().train_ids.clone();
    config.validate(train.len())?;
    let started = Instant::now();

    let warm_model = if config.warm_start {
        if !ctx.supports_warm_start() {
            return Err(Error::WarmStartUnsupported {
                kind: "configured learner".to_owned(),
            });
        }
        Some(ctx.fit_subset(&train)?)
    } else {
        None
    };

    advise_on_budget(ctx, config, train.len());

    let mut state = BanditState::new(train.clone());
    let mut audit: Vec<AuditRecord<F>> = Vec::new();

    // Initialization: one sample per arm, arms grouped into random blocks
    // of K so each batch costs |batch| + 1 fits. Batches are independent
    // and run in parallel; results are folded in batch order so the state
    // matches a sequential run.
    let mut pool = train.clone();
    pool.shuffle(&mut stream_rng(config.seed, 0));
    let batches: Vec<Vec<usize>> = pool.chunks(config.batch_k).map(|c| c.to_vec()).collect();
    type BatchOut<F> = (Vec<usize>, String, Vec<MarginalSample<F>>);
    let init_outputs: Vec<BatchOut<F>> = batches
        .par_iter()
        .enumerate()
        .map(|(i, batch)| {
            let mut rng = stream_rng(config.seed, 1 + i as u64);
            let (sigma, start) = sample_block_permutation(&train, batch, config.n_min, &mut rng)?;
            let ordered = sigma[start..start + batch.len()].to_vec();
            let samples = evaluate_block(ctx, &sigma, &ordered, warm_model.as_ref())?;
            Ok((ordered, permutation_digest(&sigma), samples))
        })
        .collect::<Result<_>>()?;
    for (arms, sigma_digest, samples) in init_outputs {
        let mut phi = Vec::with_capacity(samples.len());
        let mut trainings = 0;
        for s in &samples {
            state.record_sample(s.instance_id, s.phi)?;
            phi.push(s.phi);
            trainings += s.trainings_used;
        }
        let record = AuditRecord {
            t: 0,
            phase: "init".to_owned(),
            arms,
            sigma_digest,
            phi,
            trainings,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        emit(&mut audit, &mut sink, record)?;
    }
    if !state.all_finite() {
        return Err(Error::Numerical(
            "non-finite mean after initialization".into(),
        ));
    }

    let window = match config.stop {
        StopRule::MaxDelta { window, .. } => window,
        _ => 1,
    };
    let mut recent: VecDeque<F> = VecDeque::with_capacity(window);
    let mut iterations = 0u64;
    loop {
        if check_stop(
            iterations,
            &config.stop,
            started.elapsed().as_secs_f64(),
            &recent,
        ) {
            break;
        }
        let t = iterations + 1;
        let mut rng = stream_rng(config.seed, (1 << 32) + t);
        let arms = select_arms(&state, config.batch_k, config.tau, config.epsilon, &mut rng)?;
        let (sigma, start) = sample_block_permutation(&train, &arms, config.n_min, &mut rng)?;
        let ordered = sigma[start..start + arms.len()].to_vec();
        let samples = evaluate_block(ctx, &sigma, &ordered, warm_model.as_ref())?;

        let mut phi = Vec::with_capacity(samples.len());
        let mut trainings = 0;
        let mut max_update = F::zero();
        for s in &samples {
            let update = state.record_sample(s.instance_id, s.phi)?;
            max_update = max_update.max(update);
            phi.push(s.phi);
            trainings += s.trainings_used;
        }
        let record = AuditRecord {
            t,
            phase: "loop".to_owned(),
            arms: ordered,
            sigma_digest: permutation_digest(&sigma),
            phi,
            trainings,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        emit(&mut audit, &mut sink, record)?;
        if !state.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite mean at iteration {t}"
            )));
        }
        if recent.len() == window {
            recent.pop_front();
        }
        recent.push_back(max_update);
        iterations = t;
        state.iteration = t;
    }

    let phi_hat: BTreeMap<usize, F> = state
        .ids
        .iter()
        .zip(&state.phi_hat)
        .map(|(&id, &p)| (id, p))
        .collect();
    let harmful_set: Vec<usize> = phi_hat
        .iter()
        .filter(|(_, &p)| p <= config.tau)
        .map(|(&id, _)| id)
        .collect();
    let pulls = state
        .ids
        .iter()
        .zip(&state.pulls)
        .map(|(&id, &t)| (id, t))
        .collect();
    Ok(ValuationResult {
        phi_hat,
        harmful_set,
        pulls,
        trainings_total: ctx.trainings(),
        iterations,
        seed: config.seed,
        config: config.clone(),
        audit_log: audit,
    })
}

fn emit<F: Float>(
    audit: &mut Vec<AuditRecord<F>>,
    sink: &mut Option<&mut dyn Write>,
    record: AuditRecord<F>,
) -> Result<()> {
    if let Some(out) = sink {
        serde_json::to_writer(&mut **out, &record)?;
        out.write_all(b"\n")?;
        out.flush()?;
    }
    audit.push(record);
    Ok(())
}

/// Logs a warning when a fixed iteration budget is far below the
/// sufficient sample count of the convergence guarantee. Advisory only:
/// the bound's constants are loose at small scale.
fn advise_on_budget<F: Float>(ctx: &RunContext<'_, F>, config: &TdshapConfig<F>, n: usize) {
    let StopRule::Iterations(n_iter) = config.stop else {
        return;
    };
    let Ok(w) = width_bound(ctx.metric(), Some(ctx.dataset().label_range())) else {
        return;
    };
    let Ok(t_sufficient) = sufficient_iterations(n, w, config.epsilon) else {
        return;
    };
    let budget = n as u64 + n_iter.saturating_mul(config.batch_k as u64);
    if budget < t_sufficient {
        log::warn!(
            "sample budget {budget} is below the sufficient count {t_sufficient}; \
             the guarantee does not apply (results may still be fine in practice)"
        );
    }
}
