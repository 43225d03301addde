//! Seeded synthetic cohort generation for experiments and end-to-end
//! checks. Scores equal `2 eta - 1` by construction, so fitted rules can
//! be compared against population optima.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::cohort::{Cohort, ScoredExample};
use crate::error::{Error, Result};

/// Score and sensitive-flag distribution of one group.
///
/// `eta` is drawn from `Beta(eta_alpha, eta_beta)`; the sensitive
/// propensity is `clamp(sensitive_base + sensitive_slope * (2 eta - 1))`,
/// so a zero slope makes the flag independent of the score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthGroup {
    pub weight: f64,
    pub eta_alpha: f64,
    pub eta_beta: f64,
    pub sensitive_base: f64,
    pub sensitive_slope: f64,
}

/// Parameters of a synthetic population: one entry per group.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub groups: Vec<SynthGroup>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::invalid_parameter("spec needs at least one group"));
        }
        for (k, g) in self.groups.iter().enumerate() {
            if !g.weight.is_finite() || g.weight <= 0.0 {
                return Err(Error::invalid_parameter(format!(
                    "group {k}: weight must be positive"
                )));
            }
            if !g.eta_alpha.is_finite()
                || !g.eta_beta.is_finite()
                || g.eta_alpha <= 0.0
                || g.eta_beta <= 0.0
            {
                return Err(Error::invalid_parameter(format!(
                    "group {k}: beta shape parameters must be positive"
                )));
            }
            if !(0.0..=1.0).contains(&g.sensitive_base) {
                return Err(Error::invalid_parameter(format!(
                    "group {k}: sensitive base must lie in [0, 1]"
                )));
            }
            if !g.sensitive_slope.is_finite() {
                return Err(Error::invalid_parameter(format!(
                    "group {k}: sensitive slope must be finite"
                )));
            }
        }
        Ok(())
    }
}

/// Draws a labeled cohort of `n` examples from the spec, deterministically
/// per seed.
pub fn synthesize(spec: &SynthSpec, n: usize, seed: u64) -> Result<Cohort> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid_parameter("sample size must be positive"));
    }
    let total_weight: f64 = spec.groups.iter().map(|g| g.weight).sum();
    let mut cumulative = Vec::with_capacity(spec.groups.len());
    let mut acc = 0.0;
    for g in &spec.groups {
        acc += g.weight;
        cumulative.push(acc);
    }
    let betas: Vec<Beta<f64>> = spec
        .groups
        .iter()
        .map(|g| {
            Beta::new(g.eta_alpha, g.eta_beta)
                .map_err(|e| Error::invalid_parameter(format!("beta distribution: {e}")))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|_| {
            let draw: f64 = rng.random::<f64>() * total_weight;
            let k = cumulative
                .iter()
                .position(|&c| draw < c)
                .unwrap_or(spec.groups.len() - 1);
            let g = &spec.groups[k];
            let eta: f64 = betas[k].sample(&mut rng);
            let score = (2.0 * eta - 1.0).clamp(-1.0, 1.0);
            let propensity = (g.sensitive_base + g.sensitive_slope * score).clamp(0.0, 1.0);
            let sensitive = rng.random_bool(propensity);
            let label = rng.random_bool(eta.clamp(0.0, 1.0));
            ScoredExample::new(score, k, sensitive, Some(label))
        })
        .collect();
    Cohort::new(examples, spec.groups.len())
}
