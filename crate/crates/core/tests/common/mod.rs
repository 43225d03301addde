//! Shared fixtures and independent brute-force oracles for the
//! integration suites. Everything here stays deliberately separate from
//! the library's own solver paths.

use debias_core::{
    compute_rho, tau_value, Cohort, Criterion, DiscreteInstance, DiscretePoint, ScoredExample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A cohort on which the parity constraint already holds at zero dual
/// variables and every score sits well outside the smoothing band: equal
/// counts of sensitive and plain examples on each side of zero, scores
/// bounded away from zero by 0.6.
pub fn balanced_wide_margin_cohort(n: usize, groups: usize, seed: u64) -> Cohort {
    assert_eq!(n % (groups * 4), 0, "need equal cells per group");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    let per_cell = n / (groups * 4);
    for k in 0..groups {
        for (sensitive, positive) in [(true, true), (false, true), (true, false), (false, false)] {
            for _ in 0..per_cell {
                let magnitude = rng.random_range(0.6..=1.0);
                let score = if positive { magnitude } else { -magnitude };
                examples.push(ScoredExample::new(score, k, sensitive, Some(positive)));
            }
        }
    }
    Cohort::new(examples, groups).unwrap()
}

/// A cohort with real gender-style bias: sensitive members score visibly
/// higher, with group-specific strength, so the parity constraint is
/// active and the optimum dual is interior.
pub fn biased_cohort(n: usize, groups: usize, seed: u64) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| {
            let k = i % groups;
            let sensitive = rng.random_bool(0.4 + 0.05 * k as f64);
            let shift = 0.08 + 0.04 * k as f64;
            let base: f64 = rng.random_range(-0.9..=0.9);
            let score = (base + if sensitive { shift } else { -shift }).clamp(-1.0, 1.0);
            examples_label(base, score, k, sensitive)
        })
        .collect();
    Cohort::new(examples, groups).unwrap()
}

fn examples_label(base: f64, score: f64, group: usize, sensitive: bool) -> ScoredExample {
    ScoredExample::new(score, group, sensitive, Some(base > 0.0))
}

/// Small random cohorts for primal-dual cross checks.
pub fn small_random_cohort(rng: &mut ChaCha8Rng) -> Cohort {
    let groups = rng.random_range(1..=3);
    let n = rng.random_range(groups.max(2)..=50);
    let examples = (0..n)
        .map(|i| {
            let k = if i < groups { i } else { rng.random_range(0..groups) };
            ScoredExample::new(
                rng.random_range(-1.0..=1.0),
                k,
                rng.random_bool(0.5),
                None,
            )
        })
        .collect();
    Cohort::new(examples, groups).unwrap()
}

/// Value of the constrained objective `sum (gamma/2) q^2 - f q`.
pub fn primal_value(cohort: &Cohort, q: &[f64], gamma: f64) -> f64 {
    cohort
        .examples()
        .iter()
        .zip(q.iter())
        .map(|(ex, &qi)| 0.5 * gamma * qi * qi - ex.score * qi)
        .sum()
}

/// Independent brute-force solution of the constrained QP.
///
/// The objective is `(gamma/2) ||q - f/gamma||^2` plus a constant, so the
/// optimum is the Euclidean projection of `f/gamma` onto the intersection
/// of the box `[0,1]^n` with the per-group constraint hyperplanes.
/// Dykstra's alternating projections compute that projection without ever
/// touching the library's dual bisection.
pub fn dykstra_qp(cohort: &Cohort, criterion: &Criterion, gamma: f64, cycles: usize) -> Vec<f64> {
    let n = cohort.len();
    let rho = compute_rho(cohort).unwrap();
    let indices = cohort.group_indices();

    struct Hyperplane {
        members: Vec<usize>,
        weights: Vec<f64>,
        target: f64,
        norm_sq: f64,
    }
    let mut planes = Vec::new();
    for (k, members) in indices.iter().enumerate() {
        let weights: Vec<f64> = members
            .iter()
            .map(|&i| tau_value(criterion, rho[k], cohort.examples()[i].sensitive))
            .collect();
        let norm_sq: f64 = weights.iter().map(|w| w * w).sum();
        if norm_sq == 0.0 {
            continue; // vacuous constraint
        }
        let target = match criterion {
            Criterion::ConditionalStatisticalParity => 0.0,
            Criterion::PredictiveEquality { target_rate } => target_rate * members.len() as f64,
        };
        planes.push(Hyperplane {
            members: members.clone(),
            weights,
            target,
            norm_sq,
        });
    }

    let mut x: Vec<f64> = cohort.examples().iter().map(|ex| ex.score / gamma).collect();
    // One correction vector per set (box first, then each hyperplane).
    let set_count = planes.len() + 1;
    let mut corrections = vec![vec![0.0f64; n]; set_count];

    for _ in 0..cycles {
        // Box projection.
        for i in 0..n {
            let y = (x[i] + corrections[0][i]).clamp(0.0, 1.0);
            corrections[0][i] = x[i] + corrections[0][i] - y;
            x[i] = y;
        }
        // Hyperplane projections.
        for (s, plane) in planes.iter().enumerate() {
            let c = &mut corrections[s + 1];
            let mut dot = 0.0;
            for (&i, &w) in plane.members.iter().zip(plane.weights.iter()) {
                dot += w * (x[i] + c[i]);
            }
            let shift = (dot - plane.target) / plane.norm_sq;
            for (&i, &w) in plane.members.iter().zip(plane.weights.iter()) {
                let y = x[i] + c[i] - shift * w;
                c[i] = x[i] + c[i] - y;
                x[i] = y;
            }
        }
    }
    x
}

/// The discrete population used for the consistency trend: two groups,
/// eight regressor levels each, sensitive propensity rising with the
/// regressor so conditional parity is genuinely binding.
pub fn trend_population() -> DiscreteInstance {
    let mut points = Vec::new();
    let levels = 8;
    for k in 0..2usize {
        let group_mass = if k == 0 { 0.55 } else { 0.45 };
        for j in 0..levels {
            let eta = (2 * j + 1) as f64 / (2 * levels) as f64;
            let gamma_x = (0.15 + 0.1 * k as f64 + 0.55 * eta).clamp(0.0, 1.0);
            points.push(DiscretePoint {
                mass: group_mass / levels as f64,
                eta,
                gamma_x,
                group_id: k,
            });
        }
    }
    DiscreteInstance::new(points, 2).unwrap()
}
