//! Ground-truth solvers. The constrained quadratic program decomposes into
//! one monotone one-dimensional dual problem per group, so bisection
//! yields machine-precision primal-dual pairs without an external solver.
//! Small discrete instances additionally get the exact randomized
//! thresholding rule by driving the regularization to zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cohort::{
    compute_rho, degenerate_groups, tau_value, Cohort, Criterion, ScoredExample, ThresholdModel,
};
use crate::error::{Error, Result};
use crate::objective::pairwise_sum;

const BISECT_VALUE_TOL: f64 = 1e-10;
const BISECT_WIDTH_TOL: f64 = 1e-12;

/// Regularization ladder used to read off the zero-width limit rule.
const GAMMA_LADDER: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// Decision probabilities closer than this to 0 or 1 are treated as
/// deterministic when extracting thresholds.
const SNAP_TOL: f64 = 1e-6;

#[inline]
fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Root of a continuous non-increasing function on `[lo, hi]`, assuming
/// `g(lo) >= 0 >= g(hi)`. Stops at `|g| <= 1e-10` or width `<= 1e-12`.
fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let value = g(mid);
        if value.abs() <= BISECT_VALUE_TOL || (hi - lo) <= BISECT_WIDTH_TOL {
            return mid;
        }
        if value > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact-to-tolerance solution of the per-group constrained QP.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub mu: Vec<f64>,
    pub q: Vec<f64>,
    pub degenerate: Vec<bool>,
    /// Value of the constrained objective `sum_i (gamma/2) q_i^2 - f_i q_i`
    /// at `q`. By strong duality this equals the negated optimum of the
    /// smoothed dual objective.
    pub primal_objective: f64,
}

impl QpSolution {
    /// Packages the dual variables as a decision model.
    pub fn into_model(
        self,
        cohort: &Cohort,
        criterion: &Criterion,
        gamma: f64,
    ) -> Result<ThresholdModel> {
        let rho = compute_rho(cohort)?;
        ThresholdModel::new(self.mu, rho, gamma, *criterion, self.degenerate)
    }
}

/// Solves the fairness-constrained QP on a cohort by per-group bisection
/// of the monotone dual.
///
/// Within each group the optimal primal is `q_i = clip((f_i - mu tau_i) / gamma)`
/// and the constraint residual `g(mu) = sum tau_i q_i(mu) - c_k` is
/// non-increasing in `mu` (verified on a grid before each bisection).
/// The dual variable is searched over `[-(1+gamma), 1+gamma]`; when the
/// residual does not change sign inside the box the boundary minimizer is
/// returned. Groups with all-zero constraint weights keep `mu_k = 0` and
/// are flagged degenerate.
pub fn qp_oracle(cohort: &Cohort, criterion: &Criterion, gamma: f64) -> Result<QpSolution> {
    criterion.validate()?;
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::invalid_parameter(
            "gamma must be positive and finite",
        ));
    }
    let rho = compute_rho(cohort)?;
    let degenerate = degenerate_groups(criterion, &rho);
    let groups = cohort.group_indices();
    let examples = cohort.examples();
    let mut mu = vec![0.0f64; cohort.group_count()];
    let mut q = vec![0.0f64; cohort.len()];

    for (k, members) in groups.iter().enumerate() {
        let taus: Vec<f64> = members
            .iter()
            .map(|&i| tau_value(criterion, rho[k], examples[i].sensitive))
            .collect();
        let scores: Vec<f64> = members.iter().map(|&i| examples[i].score).collect();
        let target = match criterion {
            Criterion::ConditionalStatisticalParity => 0.0,
            Criterion::PredictiveEquality { target_rate } => target_rate * members.len() as f64,
        };
        let residual = |m: f64| -> f64 {
            let mut total = 0.0;
            for (&t, &f) in taus.iter().zip(scores.iter()) {
                total += t * clip01((f - m * t) / gamma);
            }
            total - target
        };

        if degenerate[k] {
            mu[k] = 0.0;
        } else {
            let lo = -(1.0 + gamma);
            let hi = 1.0 + gamma;
            grid_monotonicity_check(&residual, lo, hi, members.len(), k)?;
            // The root set of the piecewise-linear residual can be an
            // interval; prefer the zero dual when it qualifies, otherwise
            // bisect toward zero. A residual that keeps its sign across
            // the whole box pins the minimizer at the boundary.
            let at_zero = residual(0.0);
            mu[k] = if at_zero.abs() <= BISECT_VALUE_TOL {
                0.0
            } else if at_zero > 0.0 {
                if residual(hi) >= 0.0 {
                    hi
                } else {
                    bisect(residual, 0.0, hi)
                }
            } else if residual(lo) <= 0.0 {
                lo
            } else {
                bisect(residual, lo, 0.0)
            };
            if let Criterion::PredictiveEquality { target_rate } = criterion {
                if residual(mu[k]).abs() > 1e-6 * members.len() as f64 {
                    return Err(Error::InfeasibleTarget {
                        group: k,
                        rate: *target_rate,
                    });
                }
            }
        }
        for (&i, &t) in members.iter().zip(taus.iter()) {
            q[i] = clip01((examples[i].score - mu[k] * t) / gamma);
        }
    }

    let terms: Vec<f64> = q
        .iter()
        .zip(examples.iter())
        .map(|(&qi, ex)| 0.5 * gamma * qi * qi - ex.score * qi)
        .collect();
    Ok(QpSolution {
        mu,
        q,
        degenerate,
        primal_objective: pairwise_sum(&terms),
    })
}

/// Defensive check that the dual residual is non-increasing, evaluated on
/// a coarse grid before bisecting.
fn grid_monotonicity_check(
    residual: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    group_size: usize,
    group: usize,
) -> Result<()> {
    let tolerance = 1e-9 * group_size.max(1) as f64;
    let mut previous = f64::INFINITY;
    for step in 0..=16 {
        let x = lo + (hi - lo) * step as f64 / 16.0;
        let value = residual(x);
        if value > previous + tolerance {
            return Err(Error::NonMonotoneDual { group });
        }
        previous = value;
    }
    Ok(())
}

/// One point of a finite population: mass, Bayes regressor value, the
/// sensitive propensity `gamma(x) = p(1_S = 1 | x)`, and the group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretePoint {
    pub mass: f64,
    pub eta: f64,
    pub gamma_x: f64,
    pub group_id: usize,
}

/// A finite discrete instance of the fair-classification problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInstance {
    points: Vec<DiscretePoint>,
    group_count: usize,
}

impl DiscreteInstance {
    pub fn new(points: Vec<DiscretePoint>, group_count: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDistribution {
                reason: "instance has no points".into(),
            });
        }
        if group_count == 0 {
            return Err(Error::InvalidDistribution {
                reason: "group count must be at least 1".into(),
            });
        }
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            if !p.mass.is_finite() || p.mass < 0.0 {
                return Err(Error::InvalidDistribution {
                    reason: format!("point {i}: mass {} is not a nonnegative number", p.mass),
                });
            }
            if !(0.0..=1.0).contains(&p.eta) {
                return Err(Error::InvalidDistribution {
                    reason: format!("point {i}: eta {} is outside [0, 1]", p.eta),
                });
            }
            if !(0.0..=1.0).contains(&p.gamma_x) {
                return Err(Error::InvalidDistribution {
                    reason: format!("point {i}: propensity {} is outside [0, 1]", p.gamma_x),
                });
            }
            if p.group_id >= group_count {
                return Err(Error::InvalidDistribution {
                    reason: format!(
                        "point {i}: group {} out of range for {group_count} groups",
                        p.group_id
                    ),
                });
            }
            total += p.mass;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidDistribution {
                reason: format!("point masses sum to {total}, expected 1"),
            });
        }
        Ok(DiscreteInstance {
            points,
            group_count,
        })
    }

    pub fn points(&self) -> &[DiscretePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.group_count
    }

    pub fn group_masses(&self) -> Vec<f64> {
        let mut masses = vec![0.0f64; self.group_count];
        for p in &self.points {
            masses[p.group_id] += p.mass;
        }
        masses
    }

    /// Parses the one-point-per-line text format
    /// `mass eta gamma_x group`, with blank lines and `#` comments
    /// allowed. The group count is one past the largest group id.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut group_count = 0usize;
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::ParseInstance {
                    line: line_no + 1,
                    reason: format!("expected 4 fields (mass eta gamma_x group), got {}", fields.len()),
                });
            }
            let parse_f64 = |s: &str, name: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::ParseInstance {
                    line: line_no + 1,
                    reason: format!("{name} '{s}' is not a number"),
                })
            };
            let mass = parse_f64(fields[0], "mass")?;
            let eta = parse_f64(fields[1], "eta")?;
            let gamma_x = parse_f64(fields[2], "gamma_x")?;
            let group_id = fields[3].parse::<usize>().map_err(|_| Error::ParseInstance {
                line: line_no + 1,
                reason: format!("group '{}' is not an integer", fields[3]),
            })?;
            group_count = group_count.max(group_id + 1);
            points.push(DiscretePoint {
                mass,
                eta,
                gamma_x,
                group_id,
            });
        }
        DiscreteInstance::new(points, group_count)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# mass eta gamma_x group\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:?} {:?} {:?} {}\n",
                p.mass, p.eta, p.gamma_x, p.group_id
            ));
        }
        out
    }

    /// Splits every point on the realized sensitive flag, producing an
    /// equivalent instance with deterministic propensities. Decision rules
    /// on the split instance may depend on the flag, matching what the
    /// cohort-level rule sees.
    pub fn split_by_sensitive(&self) -> DiscreteInstance {
        let mut points = Vec::with_capacity(self.points.len() * 2);
        for p in &self.points {
            let sensitive_mass = p.mass * p.gamma_x;
            let plain_mass = p.mass - sensitive_mass;
            if sensitive_mass > 0.0 {
                points.push(DiscretePoint {
                    mass: sensitive_mass,
                    eta: p.eta,
                    gamma_x: 1.0,
                    group_id: p.group_id,
                });
            }
            if plain_mass > 0.0 {
                points.push(DiscretePoint {
                    mass: plain_mass,
                    eta: p.eta,
                    gamma_x: 0.0,
                    group_id: p.group_id,
                });
            }
        }
        DiscreteInstance {
            points,
            group_count: self.group_count,
        }
    }

    /// Draws a labeled cohort of size `n`: the score is `2 eta - 1` by
    /// construction, the sensitive flag is Bernoulli in the propensity,
    /// and the label is Bernoulli in `eta`. Deterministic per seed.
    pub fn sample_cohort(&self, n: usize, seed: u64) -> Result<Cohort> {
        if n == 0 {
            return Err(Error::invalid_parameter("sample size must be positive"));
        }
        let mut cumulative = Vec::with_capacity(self.points.len());
        let mut total = 0.0;
        for p in &self.points {
            total += p.mass;
            cumulative.push(total);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = (0..n)
            .map(|_| {
                let draw: f64 = rng.random::<f64>() * total;
                let index = cumulative
                    .iter()
                    .position(|&c| draw < c)
                    .unwrap_or(self.points.len() - 1);
                let p = &self.points[index];
                let sensitive = rng.random_bool(p.gamma_x);
                let label = rng.random_bool(p.eta);
                ScoredExample::new(2.0 * p.eta - 1.0, p.group_id, sensitive, Some(label))
            })
            .collect();
        Cohort::new(examples, self.group_count)
    }
}

/// Group-wise affine constraints `E[w(x) q(x) | X_k] = b_k`, given as one
/// weight per point and one offset per group.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub weights: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl AffineConstraint {
    /// Parity of the decision with the sensitive propensity inside each
    /// group: `w(x) = gamma(x) - mean_k(gamma)` with the mass-weighted
    /// group mean, offset 0.
    pub fn statistical_parity(instance: &DiscreteInstance) -> Self {
        let masses = instance.group_masses();
        let mut weighted = vec![0.0f64; instance.group_count()];
        for p in instance.points() {
            weighted[p.group_id] += p.mass * p.gamma_x;
        }
        let means: Vec<f64> = weighted
            .iter()
            .zip(masses.iter())
            .map(|(&w, &m)| if m > 0.0 { w / m } else { 0.0 })
            .collect();
        let weights = instance
            .points()
            .iter()
            .map(|p| p.gamma_x - means[p.group_id])
            .collect();
        AffineConstraint {
            weights,
            offsets: vec![0.0; instance.group_count()],
        }
    }

    /// Parity against an explicit target representation:
    /// `w(x) = gamma(x) - target`, offset 0.
    pub fn parity_with_target(instance: &DiscreteInstance, target: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::InvalidTargetRate { rate: target });
        }
        Ok(AffineConstraint {
            weights: instance.points().iter().map(|p| p.gamma_x - target).collect(),
            offsets: vec![0.0; instance.group_count()],
        })
    }

    /// Equal positive rate `rate` in every group: `w = 1`, `b_k = rate`.
    pub fn predictive_equality(instance: &DiscreteInstance, rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidTargetRate { rate });
        }
        Ok(AffineConstraint {
            weights: vec![1.0; instance.len()],
            offsets: vec![rate; instance.group_count()],
        })
    }

    /// A vacuous constraint; the solver then returns the plain Bayes rule.
    pub fn unconstrained(instance: &DiscreteInstance) -> Self {
        AffineConstraint {
            weights: vec![0.0; instance.len()],
            offsets: vec![0.0; instance.group_count()],
        }
    }

    fn validate(&self, instance: &DiscreteInstance) -> Result<()> {
        if self.weights.len() != instance.len() {
            return Err(Error::invalid_parameter(
                "constraint needs one weight per point",
            ));
        }
        if self.offsets.len() != instance.group_count() {
            return Err(Error::invalid_parameter(
                "constraint needs one offset per group",
            ));
        }
        Ok(())
    }
}

/// Dual solution of the regularized population problem at a fixed width.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedSolution {
    pub mu: Vec<f64>,
    pub q: Vec<f64>,
    /// `E[q(x) (2 eta(x) - 1)]`, the utility this rule attains.
    pub utility: f64,
}

/// Solves the population version of the constrained problem at smoothing
/// width `gamma`: per group, bisection of the mass-weighted dual residual
/// `g(mu) = sum p w clip((h - mu w)/gamma) - b_k P_k` with `h = 2 eta - 1`.
pub fn solve_regularized(
    instance: &DiscreteInstance,
    constraint: &AffineConstraint,
    gamma: f64,
) -> Result<RegularizedSolution> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::invalid_parameter(
            "gamma must be positive and finite",
        ));
    }
    constraint.validate(instance)?;
    let group_masses = instance.group_masses();
    let mut mu = vec![0.0f64; instance.group_count()];
    let mut q = vec![0.0f64; instance.len()];

    for k in 0..instance.group_count() {
        let members: Vec<usize> = instance
            .points()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.group_id == k)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let target = constraint.offsets[k] * group_masses[k];
        let residual = |m: f64| -> f64 {
            let mut total = 0.0;
            for &i in &members {
                let p = &instance.points()[i];
                let w = constraint.weights[i];
                let h = 2.0 * p.eta - 1.0;
                total += p.mass * w * clip01((h - m * w) / gamma);
            }
            total - target
        };

        let vacuous = members.iter().all(|&i| constraint.weights[i] == 0.0);
        if vacuous {
            if target.abs() > 1e-12 {
                return Err(Error::InfeasibleConstraint { group: k });
            }
            mu[k] = 0.0;
        } else {
            // Expand the bracket until the non-increasing residual changes
            // sign; failure to bracket means no rule meets the offset.
            let mut lo = -1.0;
            let mut hi = 1.0;
            let mut expansions = 0;
            while residual(lo) < 0.0 {
                lo *= 2.0;
                expansions += 1;
                if expansions > 60 {
                    return Err(Error::InfeasibleConstraint { group: k });
                }
            }
            expansions = 0;
            while residual(hi) > 0.0 {
                hi *= 2.0;
                expansions += 1;
                if expansions > 60 {
                    return Err(Error::InfeasibleConstraint { group: k });
                }
            }
            mu[k] = bisect(residual, lo, hi);
            if residual(mu[k]).abs() > 1e-6 {
                return Err(Error::InfeasibleConstraint { group: k });
            }
        }
        for &i in &members {
            let p = &instance.points()[i];
            let h = 2.0 * p.eta - 1.0;
            q[i] = clip01((h - mu[k] * constraint.weights[i]) / gamma);
        }
    }

    let utility = instance
        .points()
        .iter()
        .zip(q.iter())
        .map(|(p, &qi)| p.mass * qi * (2.0 * p.eta - 1.0))
        .sum();
    Ok(RegularizedSolution { mu, q, utility })
}

/// The zero-width limit rule: a per-group threshold on the Bayes regressor
/// with a randomization mass at the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesOptimalRule {
    /// Per-group threshold `t_k` on `eta`.
    pub thresholds: Vec<f64>,
    /// Randomization mass `tau_k` applied exactly at the threshold.
    pub randomization: Vec<f64>,
    /// Positive-decision probability of every point.
    pub probabilities: Vec<f64>,
}

/// Expected 0-1 error of per-point positive probabilities against the
/// instance's Bayes regressor.
pub fn expected_error(instance: &DiscreteInstance, probabilities: &[f64]) -> f64 {
    instance
        .points()
        .iter()
        .zip(probabilities.iter())
        .map(|(p, &q)| p.mass * (q * (1.0 - p.eta) + (1.0 - q) * p.eta))
        .sum()
}

/// Solves the constrained problem exactly on a finite instance by driving
/// the smoothing width through `1e-2 .. 1e-6` and reading the limit rule
/// off the final solution. The randomization mass is the decision
/// probability of the boundary point at the smallest width.
pub fn bayes_optimal_discrete(
    instance: &DiscreteInstance,
    constraint: &AffineConstraint,
) -> Result<BayesOptimalRule> {
    let mut last = None;
    for &gamma in GAMMA_LADDER.iter() {
        last = Some(solve_regularized(instance, constraint, gamma)?);
    }
    let solution = last.expect("ladder is nonempty");
    Ok(extract_rule(instance, &solution.q))
}

/// Reads the group thresholds, randomization masses, and snapped per-point
/// probabilities out of a small-width solution.
fn extract_rule(instance: &DiscreteInstance, q: &[f64]) -> BayesOptimalRule {
    let probabilities: Vec<f64> = q
        .iter()
        .map(|&qi| {
            if qi <= SNAP_TOL {
                0.0
            } else if qi >= 1.0 - SNAP_TOL {
                1.0
            } else {
                qi
            }
        })
        .collect();

    let mut thresholds = vec![0.0f64; instance.group_count()];
    let mut randomization = vec![0.0f64; instance.group_count()];
    for k in 0..instance.group_count() {
        let members: Vec<usize> = instance
            .points()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.group_id == k)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            thresholds[k] = 0.5;
            continue;
        }
        let eta = |i: usize| instance.points()[i].eta;
        let fractional: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| probabilities[i] > 0.0 && probabilities[i] < 1.0)
            .collect();
        if let Some(&boundary) = fractional
            .iter()
            .max_by(|&&a, &&b| {
                instance.points()[a]
                    .mass
                    .partial_cmp(&instance.points()[b].mass)
                    .expect("masses are finite")
            })
        {
            thresholds[k] = eta(boundary);
            randomization[k] = probabilities[boundary];
        } else {
            let zeros = members.iter().copied().filter(|&i| probabilities[i] == 0.0);
            let ones = members.iter().copied().filter(|&i| probabilities[i] == 1.0);
            let max_zero = zeros.map(eta).fold(f64::NEG_INFINITY, f64::max);
            let min_one = ones.map(eta).fold(f64::INFINITY, f64::min);
            if max_zero.is_finite() {
                thresholds[k] = max_zero;
                randomization[k] = 0.0;
            } else {
                // Whole group accepted.
                thresholds[k] = min_one;
                randomization[k] = 1.0;
            }
        }
    }
    BayesOptimalRule {
        thresholds,
        randomization,
        probabilities,
    }
}
