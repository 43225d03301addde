//! Projected stochastic gradient descent on the smoothed dual objective,
//! returning the averaged iterate and a convergence trace.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cohort::{compute_rho, degenerate_groups, Cohort, Criterion, ThresholdModel};
use crate::error::{Error, Result};
use crate::objective::SmoothedObjective;

/// Step-size policy. `Auto` is `((1 + gamma) / (1 + b)) * sqrt(K / T)`;
/// `SqrtScaled(c)` is `c * sqrt(K / T)` (with `SqrtScaled(0.1)` matching a
/// common hand-tuned preset); `Fixed` uses the value as given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Auto,
    Fixed(f64),
    SqrtScaled(f64),
}

impl LearningRate {
    pub fn resolve(&self, groups: usize, steps: usize, gamma: f64, b: f64) -> Result<f64> {
        let ratio = (groups as f64 / steps as f64).sqrt();
        let alpha = match self {
            LearningRate::Auto => (1.0 + gamma) / (1.0 + b) * ratio,
            LearningRate::Fixed(a) => *a,
            LearningRate::SqrtScaled(c) => c * ratio,
        };
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::invalid_parameter(format!(
                "learning rate resolves to {alpha}; it must be positive and finite"
            )));
        }
        Ok(alpha)
    }
}

/// How example indices are drawn. Uniform sampling with replacement is the
/// analyzed scheme; shuffled epochs are offered for practical runs and are
/// excluded from the convergence-bound guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    WithReplacement,
    ShuffledEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub steps: usize,
    pub learning_rate: LearningRate,
    pub seed: u64,
    /// Projection half-width; defaults to `1 + gamma`.
    pub projection_bound: Option<f64>,
    pub trace_every: usize,
    pub sampling: Sampling,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            steps: 100_000,
            learning_rate: LearningRate::Auto,
            seed: 0,
            projection_bound: None,
            trace_every: 1_000,
            sampling: Sampling::WithReplacement,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub objective: f64,
    pub mu: Vec<f64>,
}

/// Objective samples along the run, the averaged iterate, and per-group
/// update counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub averaged_mu: Vec<f64>,
    pub update_counts: Vec<u64>,
}

impl TrainTrace {
    /// CSV rows `step,objective,mu_0,..,mu_{K-1}` with a header.
    pub fn to_csv(&self) -> String {
        let k = self.averaged_mu.len();
        let mut out = String::from("step,objective");
        for i in 0..k {
            out.push_str(&format!(",mu_{i}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{:?}", row.step, row.objective));
            for m in &row.mu {
                out.push_str(&format!(",{m:?}"));
            }
            out.push('\n');
        }
        out
    }
}

/// The certified suboptimality of the averaged iterate at the auto rate:
/// `2 (1 + gamma) / (1 + b) * sqrt(K / T)`.
pub fn suboptimality_bound(groups: usize, steps: usize, gamma: f64, b: f64) -> f64 {
    2.0 * (1.0 + gamma) / (1.0 + b) * (groups as f64 / steps as f64).sqrt()
}

/// Fits the per-group dual variables by projected SGD.
///
/// Starts from zero, performs `config.steps` single-example updates with
/// the seeded generator, projects every update onto the box
/// `[-(1 + gamma), 1 + gamma]`, and averages every iterate. Deterministic
/// given the cohort order, seed, and configuration; runs single-threaded
/// by contract.
pub fn fit(
    cohort: &Cohort,
    criterion: &Criterion,
    gamma: f64,
    config: &SgdConfig,
) -> Result<(ThresholdModel, TrainTrace)> {
    if config.steps == 0 {
        return Err(Error::invalid_parameter("step count must be positive"));
    }
    if config.trace_every == 0 {
        return Err(Error::invalid_parameter("trace interval must be positive"));
    }
    criterion.validate()?;
    let rho = compute_rho(cohort)?;
    let objective = SmoothedObjective::with_rho(cohort, criterion, gamma, rho.clone())?;
    let k = cohort.group_count();
    let n = cohort.len();
    let steps = config.steps;
    let b = criterion.offset();
    let alpha = config.learning_rate.resolve(k, steps, gamma, b)?;
    let bound = config.projection_bound.unwrap_or(1.0 + gamma);
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::invalid_parameter(
            "projection bound must be positive and finite",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mu = vec![0.0f64; k];
    let mut mu_sum = vec![0.0f64; k];
    let mut update_counts = vec![0u64; k];
    let mut rows = Vec::with_capacity(steps / config.trace_every + 2);
    rows.push(TraceRow {
        step: 0,
        objective: objective.value(&mu),
        mu: mu.clone(),
    });

    let mut order: Vec<usize> = match config.sampling {
        Sampling::WithReplacement => Vec::new(),
        Sampling::ShuffledEpochs => (0..n).collect(),
    };

    for t in 1..=steps {
        let index = match config.sampling {
            Sampling::WithReplacement => rng.random_range(0..n),
            Sampling::ShuffledEpochs => {
                let pos = (t - 1) % n;
                if pos == 0 {
                    order.shuffle(&mut rng);
                }
                order[pos]
            }
        };
        let (group, grad) = objective.example_gradient(index, &mu);
        mu[group] = (mu[group] - alpha * grad).clamp(-bound, bound);
        update_counts[group] += 1;
        for (sum, &m) in mu_sum.iter_mut().zip(mu.iter()) {
            *sum += m;
        }
        if t % config.trace_every == 0 || t == steps {
            rows.push(TraceRow {
                step: t,
                objective: objective.value(&mu),
                mu: mu.clone(),
            });
        }
    }

    let averaged: Vec<f64> = mu_sum.iter().map(|s| s / steps as f64).collect();
    let trace = TrainTrace {
        rows,
        averaged_mu: averaged.clone(),
        update_counts,
    };
    let degenerate = degenerate_groups(criterion, &rho);
    let model = ThresholdModel::new(averaged, rho, gamma, *criterion, degenerate)?;
    Ok((model, trace))
}
