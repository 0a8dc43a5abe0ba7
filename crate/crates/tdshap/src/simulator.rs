//! Learner-free bandit testbed: the same APT policy as the engine, run on
//! synthetic reward distributions with known means, so the failure bounds
//! can be checked empirically with millions of cheap pulls.
//!
//! A trial's failure is decided against the true means: an arm whose mean
//! sits outside the (tau - eps, tau + eps) band must end up on the correct
//! side of the classification; arms inside the band can never fail.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{apt_index_raw, argmin_uniform};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::stream_rng;
use crate::theory::{failure_bound, sufficient_iterations};

/// Bounded reward laws; bounded support keeps the width exact so the
/// guarantee's hypothesis is checkable, not assumed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "F: Float")]
pub enum ArmDistribution<F> {
    /// `hi` with probability p, else `lo`.
    BernoulliShifted {
        p: f64,
        lo: F,
        hi: F,
    },
    Uniform {
        lo: F,
        hi: F,
    },
    /// `a` with probability p, else `b`.
    TwoPoint {
        a: F,
        b: F,
        p: f64,
    },
}

impl<F: Float> ArmDistribution<F> {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ArmDistribution::BernoulliShifted { p, lo, hi } => {
                (0.0..=1.0).contains(&p) && lo.is_finite() && hi.is_finite() && hi >= lo
            }
            ArmDistribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && hi >= lo,
            ArmDistribution::TwoPoint { a, b, p } => {
                (0.0..=1.0).contains(&p) && a.is_finite() && b.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "bad arm distribution {self:?}"
            )))
        }
    }

    pub fn mean(&self) -> F {
        match *self {
            ArmDistribution::BernoulliShifted { p, lo, hi } => lo + F::cast(p) * (hi - lo),
            ArmDistribution::Uniform { lo, hi } => (lo + hi) / F::cast(2.0),
            ArmDistribution::TwoPoint { a, b, p } => F::cast(p) * a + F::cast(1.0 - p) * b,
        }
    }

    /// Support width; the per-arm contribution to the scenario's w.
    pub fn width(&self) -> F {
        match *self {
            ArmDistribution::BernoulliShifted { lo, hi, .. }
            | ArmDistribution::Uniform { lo, hi } => hi - lo,
            ArmDistribution::TwoPoint { a, b, .. } => (b - a).abs(),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> F {
        match *self {
            ArmDistribution::BernoulliShifted { p, lo, hi } => {
                if rng.random::<f64>() < p {
                    hi
                } else {
                    lo
                }
            }
            ArmDistribution::Uniform { lo, hi } => lo + F::cast(rng.random::<f64>()) * (hi - lo),
            ArmDistribution::TwoPoint { a, b, p } => {
                if rng.random::<f64>() < p {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// An arm with its analytic mean pinned next to the distribution; the
/// constructor computes the mean, so the two cannot drift apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct SyntheticArm<F> {
    pub mean: F,
    pub distribution: ArmDistribution<F>,
}

impl<F: Float> SyntheticArm<F> {
    pub fn new(distribution: ArmDistribution<F>) -> Result<Self> {
        distribution.validate()?;
        Ok(SyntheticArm {
            mean: distribution.mean(),
            distribution,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimPolicy {
    #[default]
    Apt,
    /// Round-robin baseline at the same budget.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub trials: u64,
    pub failures: u64,
    pub failure_rate: f64,
    /// Failure-probability bound at this budget, or the vacuous 1.0 when
    /// the budget is below the sufficient count.
    pub bound: f64,
}

/// A full simulation request, JSON-friendly for the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Float")]
pub struct SimScenario<F> {
    pub arms: Vec<ArmDistribution<F>>,
    pub tau: F,
    pub epsilon: F,
    pub t: u64,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: SimPolicy,
}

impl<F: Float> SimScenario<F> {
    pub fn run(&self) -> Result<SimOutcome> {
        let arms = self
            .arms
            .iter()
            .map(|d| SyntheticArm::new(*d))
            .collect::<Result<Vec<_>>>()?;
        match self.policy {
            SimPolicy::Apt => simulate_apt(
                &arms,
                self.tau,
                self.epsilon,
                self.t,
                self.trials,
                self.seed,
            ),
            SimPolicy::Uniform => simulate_uniform(
                &arms,
                self.tau,
                self.epsilon,
                self.t,
                self.trials,
                self.seed,
            ),
        }
    }
}

pub fn simulate_apt<F: Float>(
    arms: &[SyntheticArm<F>],
    tau: F,
    epsilon: F,
    t: u64,
    trials: u64,
    seed: u64,
) -> Result<SimOutcome> {
    simulate(arms, tau, epsilon, t, trials, seed, SimPolicy::Apt)
}

pub fn simulate_uniform<F: Float>(
    arms: &[SyntheticArm<F>],
    tau: F,
    epsilon: F,
    t: u64,
    trials: u64,
    seed: u64,
) -> Result<SimOutcome> {
    simulate(arms, tau, epsilon, t, trials, seed, SimPolicy::Uniform)
}

fn simulate<F: Float>(
    arms: &[SyntheticArm<F>],
    tau: F,
    epsilon: F,
    t: u64,
    trials: u64,
    seed: u64,
    policy: SimPolicy,
) -> Result<SimOutcome> {
    validate_scenario(arms, tau, epsilon, t, trials)?;
    // One RNG stream per trial, so the failure count is independent of how
    // rayon schedules the trials.
    let failures: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(seed, trial);
            let state = run_trial(arms, tau, epsilon, t, policy, &mut rng);
            u64::from(is_failure(arms, tau, epsilon, &state.means))
        })
        .sum();
    Ok(SimOutcome {
        trials,
        failures,
        failure_rate: failures as f64 / trials as f64,
        bound: bound_at_budget(arms, epsilon, t),
    })
}

fn validate_scenario<F: Float>(
    arms: &[SyntheticArm<F>],
    tau: F,
    epsilon: F,
    t: u64,
    trials: u64,
) -> Result<()> {
    if arms.is_empty() {
        return Err(Error::InvalidConfig("no arms".into()));
    }
    for arm in arms {
        arm.distribution.validate()?;
    }
    if !tau.is_finite() || !epsilon.is_finite() || epsilon <= F::zero() {
        return Err(Error::InvalidConfig(
            "tau must be finite and epsilon positive".into(),
        ));
    }
    if t < arms.len() as u64 {
        return Err(Error::InvalidConfig(format!(
            "budget {t} cannot initialize {} arms",
            arms.len()
        )));
    }
    if trials < 1 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    Ok(())
}

/// The guarantee's bound applies only from the sufficient budget upward;
/// below it we report the vacuous 1.0 rather than pretend.
fn bound_at_budget<F: Float>(arms: &[SyntheticArm<F>], epsilon: F, t: u64) -> f64 {
    let w = arms
        .iter()
        .map(|a| a.distribution.width())
        .fold(F::zero(), F::max);
    match sufficient_iterations(arms.len(), w, epsilon) {
        Ok(t_sufficient) if t >= t_sufficient => failure_bound(arms.len(), t),
        _ => 1.0,
    }
}

pub(crate) struct TrialState<F> {
    pub means: Vec<F>,
    pub pulls: Vec<u64>,
}

pub(crate) fn run_trial<F: Float>(
    arms: &[SyntheticArm<F>],
    tau: F,
    epsilon: F,
    t: u64,
    policy: SimPolicy,
    rng: &mut impl Rng,
) -> TrialState<F> {
    let n = arms.len();
    let mut state = TrialState {
        means: vec![F::zero(); n],
        pulls: vec![0u64; n],
    };
    // Cached index values: a pull only changes its own arm's index, so the
    // argmin scan never recomputes the others.
    let mut index = vec![F::zero(); n];
    for i in 0..n {
        pull_arm(arms, i, tau, epsilon, &mut state, &mut index, rng);
    }
    for step in n as u64..t {
        let i = match policy {
            SimPolicy::Apt => argmin_uniform(&index, rng),
            SimPolicy::Uniform => (step % n as u64) as usize,
        };
        pull_arm(arms, i, tau, epsilon, &mut state, &mut index, rng);
    }
    state
}

fn pull_arm<F: Float>(
    arms: &[SyntheticArm<F>],
    i: usize,
    tau: F,
    epsilon: F,
    state: &mut TrialState<F>,
    index: &mut [F],
    rng: &mut impl Rng,
) {
    let reward = arms[i].distribution.sample(rng);
    let count = F::from_count(state.pulls[i]);
    state.means[i] = count / (count + F::one()) * state.means[i] + reward / (count + F::one());
    state.pulls[i] += 1;
    index[i] = apt_index_raw(state.means[i], state.pulls[i], tau, epsilon);
}

/// True when some arm outside the precision band ends up misclassified.
fn is_failure<F: Float>(arms: &[SyntheticArm<F>], tau: F, epsilon: F, means: &[F]) -> bool {
    arms.iter().zip(means).any(|(arm, &estimate)| {
        let flagged = estimate <= tau;
        (arm.mean <= tau - epsilon && !flagged) || (arm.mean >= tau + epsilon && flagged)
    })
}
