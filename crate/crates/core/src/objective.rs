//! The smoothed dual objective: a C¹ convex approximation of
//! `max(0, theta - z)` with width `gamma`, its derivative, and the
//! per-example stochastic gradient used by the optimizer.

use crate::cohort::{compute_rho, tau_value, Cohort, Criterion};
use crate::error::{Error, Result};

fn check_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::invalid_parameter(
            "gamma must be positive and finite",
        ));
    }
    Ok(())
}

#[inline]
fn xi_unchecked(z: f64, theta: f64, gamma: f64) -> f64 {
    if z >= theta {
        0.0
    } else if z > theta - gamma {
        let d = theta - z;
        d * d / (2.0 * gamma)
    } else {
        theta - z - gamma / 2.0
    }
}

#[inline]
fn xi_prime_unchecked(z: f64, theta: f64, gamma: f64) -> f64 {
    if z >= theta {
        0.0
    } else if z > theta - gamma {
        -(theta - z) / gamma
    } else {
        -1.0
    }
}

/// Smoothed hinge penalty: 0 for `z >= theta`, quadratic of curvature
/// `1/gamma` on `(theta - gamma, theta)`, and linear `theta - z - gamma/2`
/// below. Both branch points use the closed interval of the upper branch;
/// the adjacent branches agree there, so evaluation is branch-stable.
pub fn xi(z: f64, theta: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(xi_unchecked(z, theta, gamma))
}

/// Derivative of [`xi`] with respect to `z`; always in `[-1, 0]`.
pub fn xi_prime(z: f64, theta: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(xi_prime_unchecked(z, theta, gamma))
}

/// Pairwise (cascade) summation; error grows like O(eps * log n) instead
/// of O(eps * n), keeping oracle-vs-SGD objective comparisons meaningful
/// at cohort sizes around 1e5.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Shared constants of the smoothed objective: the smoothing width and the
/// linear coefficient `b` (0 under conditional parity, the target rate
/// under predictive equality).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedObjectiveParams {
    gamma: f64,
    b: f64,
}

impl SmoothedObjectiveParams {
    pub fn new(gamma: f64, b: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !b.is_finite() {
            return Err(Error::invalid_parameter("offset b must be finite"));
        }
        Ok(SmoothedObjectiveParams { gamma, b })
    }

    pub fn for_criterion(criterion: &Criterion, gamma: f64) -> Result<Self> {
        criterion.validate()?;
        SmoothedObjectiveParams::new(gamma, criterion.offset())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// The dual objective `F(mu)` over a fixed cohort:
///
/// ```text
/// F(mu) = sum_i [ b * mu_{k(i)} + xi(tau_i * mu_{k(i)}; f_i) ]
/// ```
///
/// with one dual variable per group. Convex in `mu`, and each per-example
/// gradient is bounded by `1 + b`.
#[derive(Debug, Clone)]
pub struct SmoothedObjective<'a> {
    cohort: &'a Cohort,
    params: SmoothedObjectiveParams,
    rho: Vec<f64>,
    tau: Vec<f64>,
}

impl<'a> SmoothedObjective<'a> {
    pub fn new(cohort: &'a Cohort, criterion: &Criterion, gamma: f64) -> Result<Self> {
        let rho = compute_rho(cohort)?;
        Self::with_rho(cohort, criterion, gamma, rho)
    }

    pub fn with_rho(
        cohort: &'a Cohort,
        criterion: &Criterion,
        gamma: f64,
        rho: Vec<f64>,
    ) -> Result<Self> {
        if rho.len() != cohort.group_count() {
            return Err(Error::invalid_parameter(
                "rho must have one entry per group",
            ));
        }
        let params = SmoothedObjectiveParams::for_criterion(criterion, gamma)?;
        let tau = cohort
            .examples()
            .iter()
            .map(|ex| tau_value(criterion, rho[ex.group_id], ex.sensitive))
            .collect();
        Ok(SmoothedObjective {
            cohort,
            params,
            rho,
            tau,
        })
    }

    pub fn params(&self) -> &SmoothedObjectiveParams {
        &self.params
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn group_count(&self) -> usize {
        self.cohort.group_count()
    }

    pub fn cohort(&self) -> &Cohort {
        self.cohort
    }

    /// `F(mu)`, accumulated with pairwise summation in cohort order.
    pub fn value(&self, mu: &[f64]) -> f64 {
        assert_eq!(mu.len(), self.group_count(), "mu length must match groups");
        let gamma = self.params.gamma;
        let b = self.params.b;
        let terms: Vec<f64> = self
            .cohort
            .examples()
            .iter()
            .zip(self.tau.iter())
            .map(|(ex, &tau)| {
                let m = mu[ex.group_id];
                b * m + xi_unchecked(tau * m, ex.score, gamma)
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// Stochastic gradient of a single example: the owning group and
    /// `g = b + tau * xi'(tau * mu_k; f)` with `|g| <= 1 + b`.
    pub fn example_gradient(&self, index: usize, mu: &[f64]) -> (usize, f64) {
        let ex = &self.cohort.examples()[index];
        let tau = self.tau[index];
        let m = mu[ex.group_id];
        let g = self.params.b
            + tau * xi_prime_unchecked(tau * m, ex.score, self.params.gamma);
        (ex.group_id, g)
    }
}
