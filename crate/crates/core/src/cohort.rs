//! Domain types: scored examples, cohorts, fairness criteria, and the
//! learned per-group threshold model.

use crate::error::{Error, Result};

/// One observation as seen by the post-processor: the base classifier's
/// score in `[-1, 1]`, the demographic group, the sensitive-class flag,
/// and (optionally) the true binary label.
///
/// The raw feature vector is never stored; the score is all the
/// post-processor ever sees of the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredExample {
    pub score: f64,
    pub group_id: usize,
    pub sensitive: bool,
    pub label: Option<bool>,
}

impl ScoredExample {
    pub fn new(score: f64, group_id: usize, sensitive: bool, label: Option<bool>) -> Self {
        ScoredExample {
            score,
            group_id,
            sensitive,
            label,
        }
    }
}

/// An immutable, validated collection of scored examples partitioned into
/// `group_count` demographic groups by `group_id`.
///
/// Construction rejects out-of-range scores; clamping of raw inputs is an
/// ingestion policy and happens before a `Cohort` exists.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    examples: Vec<ScoredExample>,
    group_count: usize,
    group_sizes: Vec<usize>,
}

impl Cohort {
    pub fn new(examples: Vec<ScoredExample>, group_count: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyCohort);
        }
        if group_count == 0 {
            return Err(Error::invalid_parameter("group count must be at least 1"));
        }
        let mut group_sizes = vec![0usize; group_count];
        for (index, ex) in examples.iter().enumerate() {
            if !ex.score.is_finite() {
                return Err(Error::NonFiniteScore { index });
            }
            if ex.score < -1.0 || ex.score > 1.0 {
                return Err(Error::ScoreOutOfRange {
                    index,
                    score: ex.score,
                });
            }
            if ex.group_id >= group_count {
                return Err(Error::GroupOutOfRange {
                    index,
                    group: ex.group_id,
                    count: group_count,
                });
            }
            group_sizes[ex.group_id] += 1;
        }
        Ok(Cohort {
            examples,
            group_count,
            group_sizes,
        })
    }

    pub fn examples(&self) -> &[ScoredExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.group_count
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    /// Example indices of each group, in cohort order.
    pub fn group_indices(&self) -> Vec<Vec<usize>> {
        let mut indices: Vec<Vec<usize>> = self
            .group_sizes
            .iter()
            .map(|&n| Vec::with_capacity(n))
            .collect();
        for (i, ex) in self.examples.iter().enumerate() {
            indices[ex.group_id].push(i);
        }
        indices
    }

    /// Fraction of examples the unadjusted hard classifier `1{score > 0}`
    /// predicts positive. Default target rate under predictive equality.
    pub fn positive_rate(&self) -> f64 {
        let positives = self.examples.iter().filter(|ex| ex.score > 0.0).count();
        positives as f64 / self.examples.len() as f64
    }
}

/// Which fairness constraint family is enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// Zero covariance between the decision and the sensitive flag within
    /// each group.
    ConditionalStatisticalParity,
    /// Equal expected positive-decision rate `target_rate` across all
    /// groups. No sensitive class is designated.
    PredictiveEquality { target_rate: f64 },
}

impl Criterion {
    pub fn predictive_equality(target_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&target_rate) || !target_rate.is_finite() {
            return Err(Error::InvalidTargetRate { rate: target_rate });
        }
        Ok(Criterion::PredictiveEquality { target_rate })
    }

    /// Predictive equality at the cohort's empirical positive rate of the
    /// unadjusted hard classifier.
    pub fn predictive_equality_from(cohort: &Cohort) -> Self {
        Criterion::PredictiveEquality {
            target_rate: cohort.positive_rate(),
        }
    }

    /// The constant `b` of the smoothed objective: 0 under conditional
    /// statistical parity, the target rate under predictive equality.
    pub fn offset(&self) -> f64 {
        match self {
            Criterion::ConditionalStatisticalParity => 0.0,
            Criterion::PredictiveEquality { target_rate } => *target_rate,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Criterion::ConditionalStatisticalParity => Ok(()),
            Criterion::PredictiveEquality { target_rate } => {
                if !(0.0..=1.0).contains(target_rate) || !target_rate.is_finite() {
                    Err(Error::InvalidTargetRate { rate: *target_rate })
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Per-group sensitive-class rates: `rho[k]` is the fraction of sensitive
/// examples in group `k`.
pub fn compute_rho(cohort: &Cohort) -> Result<Vec<f64>> {
    let mut sensitive = vec![0usize; cohort.group_count()];
    for ex in cohort.examples() {
        if ex.sensitive {
            sensitive[ex.group_id] += 1;
        }
    }
    cohort
        .group_sizes()
        .iter()
        .zip(sensitive.iter())
        .enumerate()
        .map(|(group, (&size, &count))| {
            if size == 0 {
                Err(Error::EmptyGroup { group })
            } else {
                Ok(count as f64 / size as f64)
            }
        })
        .collect()
}

/// The per-example constraint weight: `1_S(x) - rho_k` under conditional
/// statistical parity, `1` under predictive equality. Always in `[-1, 1]`.
pub fn tau_value(criterion: &Criterion, rho_k: f64, sensitive: bool) -> f64 {
    match criterion {
        Criterion::ConditionalStatisticalParity => {
            let s = if sensitive { 1.0 } else { 0.0 };
            s - rho_k
        }
        Criterion::PredictiveEquality { .. } => 1.0,
    }
}

/// Groups whose constraint is vacuous. Under conditional parity a group
/// with every example sensitive or none sensitive has all constraint
/// weights zero, leaving its dual variable unidentified; it is pinned to 0
/// and flagged.
pub fn degenerate_groups(criterion: &Criterion, rho: &[f64]) -> Vec<bool> {
    match criterion {
        Criterion::ConditionalStatisticalParity => {
            rho.iter().map(|&r| r == 0.0 || r == 1.0).collect()
        }
        Criterion::PredictiveEquality { .. } => vec![false; rho.len()],
    }
}

/// The learned post-processing rule: per-group dual variables `mu`, the
/// group sensitive rates `rho` they were fitted against, the smoothing
/// width `gamma`, and the criterion. Fully determines the randomized
/// decision rule; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdModel {
    mu: Vec<f64>,
    rho: Vec<f64>,
    gamma: f64,
    criterion: Criterion,
    degenerate: Vec<bool>,
}

impl ThresholdModel {
    pub fn new(
        mu: Vec<f64>,
        rho: Vec<f64>,
        gamma: f64,
        criterion: Criterion,
        degenerate: Vec<bool>,
    ) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::invalid_parameter("model needs at least one group"));
        }
        if mu.len() != rho.len() || mu.len() != degenerate.len() {
            return Err(Error::invalid_parameter(
                "mu, rho, and degeneracy flags must have one entry per group",
            ));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::invalid_parameter("gamma must be positive and finite"));
        }
        criterion.validate()?;
        let bound = 1.0 + gamma;
        for (k, &m) in mu.iter().enumerate() {
            if !m.is_finite() || m.abs() > bound {
                return Err(Error::invalid_parameter(format!(
                    "mu[{k}] = {m} is outside the projection interval [-{bound}, {bound}]"
                )));
            }
        }
        for (k, &r) in rho.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid_parameter(format!(
                    "rho[{k}] = {r} is not a probability"
                )));
            }
        }
        Ok(ThresholdModel {
            mu,
            rho,
            gamma,
            criterion,
            degenerate,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn criterion(&self) -> &Criterion {
        &self.criterion
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn group_count(&self) -> usize {
        self.mu.len()
    }

    /// Constraint weight of one example under this model's criterion.
    ///
    /// Panics if the example's group id is out of range; `decide` performs
    /// the checked lookup.
    pub fn tau(&self, example: &ScoredExample) -> f64 {
        tau_value(&self.criterion, self.rho[example.group_id], example.sensitive)
    }

    /// The score threshold `mu_k * tau(x)` below which the example is
    /// rejected outright.
    pub fn threshold(&self, example: &ScoredExample) -> f64 {
        self.mu[example.group_id] * self.tau(example)
    }
}
