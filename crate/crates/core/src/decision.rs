//! Turning a fitted model into per-example decision probabilities and
//! sampled hard labels.

use rand::Rng;

use crate::cohort::{Cohort, ScoredExample, ThresholdModel};
use crate::error::{Error, Result};

/// The probability of predicting the positive class for one example.
/// Deterministic (0 or 1) whenever the score is outside the gamma-wide
/// transition band around the group threshold.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DecisionProbability(f64);

impl DecisionProbability {
    pub fn new(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) || !q.is_finite() {
            return Err(Error::InvalidProbability { value: q });
        }
        Ok(DecisionProbability(q))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// The randomized group-wise thresholding rule. With
/// `theta(x) = mu_k * tau(x)`:
///
/// ```text
/// q = 0                       if f(x) <= theta(x)
/// q = 1                       if f(x) >= gamma + theta(x)
/// q = (f(x) - theta(x)) / gamma   otherwise
/// ```
///
/// Ties at both boundaries resolve to the deterministic branch; the
/// interior formula agrees there, so the choice is value-neutral.
/// Consumes no randomness; see [`sample`] for drawing hard labels.
pub fn decide(example: &ScoredExample, model: &ThresholdModel) -> Result<DecisionProbability> {
    if example.group_id >= model.group_count() {
        return Err(Error::UnknownGroup {
            group: example.group_id,
            count: model.group_count(),
        });
    }
    let theta = model.threshold(example);
    let gamma = model.gamma();
    let f = example.score;
    let q = if f <= theta {
        0.0
    } else if f >= gamma + theta {
        1.0
    } else {
        (f - theta) / gamma
    };
    DecisionProbability::new(q)
}

/// Decision probabilities for a whole cohort, in cohort order.
pub fn decide_all(cohort: &Cohort, model: &ThresholdModel) -> Result<Vec<f64>> {
    cohort
        .examples()
        .iter()
        .map(|ex| decide(ex, model).map(|q| q.value()))
        .collect()
}

/// Draws a hard label: 1 with probability `q`. Deterministic given the
/// generator state; `q = 0` and `q = 1` never flip.
pub fn sample<R: Rng + ?Sized>(q: DecisionProbability, rng: &mut R) -> bool {
    rng.random::<f64>() < q.value()
}
