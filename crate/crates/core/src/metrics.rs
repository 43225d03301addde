//! Bias auditing: conditional covariances, residual group bias, expected
//! error rates, and the accuracy-fairness impossibility bound with its
//! witness partition.

use crate::cohort::{compute_rho, degenerate_groups, Cohort, ThresholdModel};
use crate::error::{Error, Result};
use crate::objective::pairwise_sum;

/// Covariance of the decision probabilities and a binary flag over the
/// masked examples: `E[q s | mask] - E[q | mask] E[s | mask]`.
///
/// `q` is treated as the expected decision so the metric is exact for
/// randomized rules; no sampling noise enters.
pub fn conditional_covariance(q: &[f64], flags: &[bool], mask: &[bool]) -> Result<f64> {
    if q.len() != flags.len() || q.len() != mask.len() {
        return Err(Error::invalid_parameter(
            "q, flags, and mask must have equal lengths",
        ));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let n = count as f64;
    let mut sum_q = 0.0;
    let mut sum_s = 0.0;
    let mut sum_qs = 0.0;
    for ((&qi, &si), _) in q.iter().zip(flags).zip(mask).filter(|(_, &m)| m) {
        let s = if si { 1.0 } else { 0.0 };
        sum_q += qi;
        sum_s += s;
        sum_qs += qi * s;
    }
    Ok(sum_qs / n - (sum_q / n) * (sum_s / n))
}

/// Residual group bias: `r_k = |X_k|^{-1} |sum_{i in X_k} (1_S(i) - rho_k) q_i|`
/// with `rho_k` recomputed on the audited cohort, so `r_k = 0` exactly when
/// the parity constraint holds on this data. The model fixes the group
/// universe only.
pub fn residual_bias(cohort: &Cohort, q: &[f64], model: &ThresholdModel) -> Result<Vec<f64>> {
    if model.group_count() != cohort.group_count() {
        return Err(Error::UnknownGroup {
            group: cohort.group_count() - 1,
            count: model.group_count(),
        });
    }
    let rho = compute_rho(cohort)?;
    group_residuals(cohort, q, &rho)
}

fn group_residuals(cohort: &Cohort, q: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
    if q.len() != cohort.len() {
        return Err(Error::invalid_parameter(
            "q must have one entry per example",
        ));
    }
    let mut sums = vec![0.0f64; cohort.group_count()];
    for (ex, &qi) in cohort.examples().iter().zip(q.iter()) {
        let s = if ex.sensitive { 1.0 } else { 0.0 };
        sums[ex.group_id] += (s - rho[ex.group_id]) * qi;
    }
    Ok(sums
        .iter()
        .zip(cohort.group_sizes())
        .map(|(&sum, &size)| sum.abs() / size as f64)
        .collect())
}

/// Expected 0-1 error of a randomized rule: the mean of `1 - q` on
/// positive labels and `q` on negative ones. Errors on any missing label.
pub fn error_rate(q: &[f64], labels: &[Option<bool>]) -> Result<f64> {
    if q.len() != labels.len() {
        return Err(Error::invalid_parameter(
            "q and labels must have equal lengths",
        ));
    }
    if q.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut total = 0.0;
    for (index, (&qi, label)) in q.iter().zip(labels.iter()).enumerate() {
        match label {
            Some(true) => total += 1.0 - qi,
            Some(false) => total += qi,
            None => return Err(Error::MissingLabel { index }),
        }
    }
    Ok(total / q.len() as f64)
}

/// Per-group audit numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBias {
    pub group: usize,
    pub size: usize,
    pub rho: f64,
    /// Covariance of the decision and the sensitive flag within the group.
    pub cov_sensitive: f64,
    /// Covariance of the decision and group membership over the whole
    /// cohort (the predictive-equality audit).
    pub cov_membership: f64,
    /// Residual parity bias of the group.
    pub residual: f64,
    pub degenerate: bool,
}

/// A full bias audit of one cohort under one set of decision
/// probabilities. All covariances are bounded by 0.25 in magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub n: usize,
    /// Mean decision probability over the cohort.
    pub positive_mass: f64,
    /// Expected 0-1 error when every example carries a label.
    pub error: Option<f64>,
    pub groups: Vec<GroupBias>,
}

impl BiasReport {
    /// Audits `q` against the cohort. When a model is supplied its group
    /// universe is validated and its degeneracy flags are carried through;
    /// otherwise vacuous-parity groups are flagged from the data.
    pub fn compute(cohort: &Cohort, q: &[f64], model: Option<&ThresholdModel>) -> Result<Self> {
        if q.len() != cohort.len() {
            return Err(Error::invalid_parameter(
                "q must have one entry per example",
            ));
        }
        let rho = compute_rho(cohort)?;
        let degenerate = match model {
            Some(m) => {
                if m.group_count() != cohort.group_count() {
                    return Err(Error::UnknownGroup {
                        group: cohort.group_count() - 1,
                        count: m.group_count(),
                    });
                }
                m.degenerate().to_vec()
            }
            None => degenerate_groups(
                &crate::cohort::Criterion::ConditionalStatisticalParity,
                &rho,
            ),
        };
        let residuals = group_residuals(cohort, q, &rho)?;
        let flags: Vec<bool> = cohort.examples().iter().map(|ex| ex.sensitive).collect();
        let mut groups = Vec::with_capacity(cohort.group_count());
        for k in 0..cohort.group_count() {
            let mask: Vec<bool> = cohort
                .examples()
                .iter()
                .map(|ex| ex.group_id == k)
                .collect();
            let cov_sensitive = conditional_covariance(q, &flags, &mask)?;
            let full = vec![true; cohort.len()];
            let cov_membership = conditional_covariance(q, &mask, &full)?;
            groups.push(GroupBias {
                group: k,
                size: cohort.group_sizes()[k],
                rho: rho[k],
                cov_sensitive,
                cov_membership,
                residual: residuals[k],
                degenerate: degenerate[k],
            });
        }
        let labels: Vec<Option<bool>> = cohort.examples().iter().map(|ex| ex.label).collect();
        let error = if labels.iter().all(|l| l.is_some()) {
            Some(error_rate(q, &labels)?)
        } else {
            None
        };
        Ok(BiasReport {
            n: cohort.len(),
            positive_mass: pairwise_sum(q) / q.len() as f64,
            error,
            groups,
        })
    }

    /// Flat `key = value` rendering.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n = {}\n", self.n));
        out.push_str(&format!("positive_mass = {:?}\n", self.positive_mass));
        if let Some(err) = self.error {
            out.push_str(&format!("error = {err:?}\n"));
        }
        out.push_str(&format!("group_count = {}\n", self.groups.len()));
        for g in &self.groups {
            let k = g.group;
            out.push_str(&format!("group_{k}_size = {}\n", g.size));
            out.push_str(&format!("group_{k}_rho = {:?}\n", g.rho));
            out.push_str(&format!("group_{k}_cov_sensitive = {:?}\n", g.cov_sensitive));
            out.push_str(&format!(
                "group_{k}_cov_membership = {:?}\n",
                g.cov_membership
            ));
            out.push_str(&format!("group_{k}_residual = {:?}\n", g.residual));
            out.push_str(&format!("group_{k}_degenerate = {}\n", g.degenerate));
        }
        out
    }

    /// One CSV row per group.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("group,size,rho,cov_sensitive,cov_membership,residual,degenerate\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?},{}\n",
                g.group, g.size, g.rho, g.cov_sensitive, g.cov_membership, g.residual, g.degenerate
            ));
        }
        out
    }
}

/// A finite instance for the impossibility bound: point masses, the
/// sensitive propensity `gamma(x)`, and a deterministic binary predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpossibilityInput {
    mass: Vec<f64>,
    gamma: Vec<f64>,
    predictor: Vec<bool>,
}

impl ImpossibilityInput {
    pub fn new(mass: Vec<f64>, gamma: Vec<f64>, predictor: Vec<bool>) -> Result<Self> {
        if mass.is_empty() || mass.len() != gamma.len() || mass.len() != predictor.len() {
            return Err(Error::InvalidDistribution {
                reason: "mass, gamma, and predictor must be nonempty and equally long".into(),
            });
        }
        let total: f64 = mass.iter().sum();
        if mass.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::InvalidDistribution {
                reason: "point masses must be nonnegative".into(),
            });
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidDistribution {
                reason: format!("point masses sum to {total}, expected 1"),
            });
        }
        if gamma.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
            return Err(Error::InvalidDistribution {
                reason: "propensities must lie in [0, 1]".into(),
            });
        }
        Ok(ImpossibilityInput {
            mass,
            gamma,
            predictor,
        })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpossibilityBound {
    /// `0.5 * E|gamma - mean(gamma)| * min(Ef, 1 - Ef)`; no partition can
    /// make every conditional covariance smaller in expectation.
    pub lower_bound: f64,
    /// The bound's left-hand side evaluated on the witness partition.
    pub witness_lhs: f64,
    /// Membership in the witness set `W`.
    pub witness: Vec<bool>,
}

/// Mass-weighted covariance of the predictor and the propensity over the
/// selected points, conditioned on selection.
fn masked_covariance(input: &ImpossibilityInput, select: impl Fn(usize) -> bool) -> (f64, f64) {
    let mut mass = 0.0;
    let mut mean_f = 0.0;
    let mut mean_g = 0.0;
    let mut mean_fg = 0.0;
    for i in 0..input.len() {
        if !select(i) {
            continue;
        }
        let p = input.mass[i];
        let f = if input.predictor[i] { 1.0 } else { 0.0 };
        mass += p;
        mean_f += p * f;
        mean_g += p * input.gamma[i];
        mean_fg += p * f * input.gamma[i];
    }
    if mass <= 0.0 {
        return (0.0, 0.0);
    }
    let cov = mean_fg / mass - (mean_f / mass) * (mean_g / mass);
    (mass, cov)
}

/// Evaluates both sides of the accuracy-fairness tradeoff on a finite
/// instance.
///
/// The witness set pairs above-average propensity with positive
/// predictions and the rest with negative ones; ties `gamma(x) = mean`
/// route to the negative side. The returned `witness_lhs` is guaranteed to
/// be at least `lower_bound`.
pub fn impossibility_bound(input: &ImpossibilityInput) -> ImpossibilityBound {
    let gamma_bar: f64 = input
        .mass
        .iter()
        .zip(input.gamma.iter())
        .map(|(&p, &g)| p * g)
        .sum();
    let mean_f: f64 = input
        .mass
        .iter()
        .zip(input.predictor.iter())
        .map(|(&p, &f)| if f { p } else { 0.0 })
        .sum();
    let mean_abs_dev: f64 = input
        .mass
        .iter()
        .zip(input.gamma.iter())
        .map(|(&p, &g)| p * (g - gamma_bar).abs())
        .sum();
    let lower_bound = 0.5 * mean_abs_dev * mean_f.min(1.0 - mean_f);

    let witness: Vec<bool> = input
        .gamma
        .iter()
        .zip(input.predictor.iter())
        .map(|(&g, &f)| if g > gamma_bar { f } else { !f })
        .collect();
    let (mass_w, cov_w) = masked_covariance(input, |i| witness[i]);
    let (mass_c, cov_c) = masked_covariance(input, |i| !witness[i]);
    let witness_lhs = mass_w * cov_w.abs() + mass_c * cov_c.abs();

    ImpossibilityBound {
        lower_bound,
        witness_lhs,
        witness,
    }
}
