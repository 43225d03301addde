//! Probability calibration of raw classifier margins by a maximum
//! likelihood logistic fit (damped Newton), mapping margins to scores in
//! `(-1, 1)`.

use crate::errors::{CliError, CliResult};

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 50;
const RIDGE: f64 = 1e-12;
const MIN_STEP: f64 = 1e-12;

/// Fitted logistic map `p = 1 / (1 + exp(a * margin + b))`. With labels
/// that increase with the margin the fitted `a` is negative, so larger
/// margins give larger probabilities. The score is `2p - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    pub a: f64,
    pub b: f64,
    /// Set when the fit hit the iteration cap, which is what perfectly
    /// separated margins produce (the likelihood optimum is at infinity).
    pub separation_warning: bool,
    pub iterations: usize,
}

impl CalibrationParams {
    pub fn probability(&self, margin: f64) -> f64 {
        let z = self.a * margin + self.b;
        if z >= 0.0 {
            (-z).exp() / (1.0 + (-z).exp())
        } else {
            1.0 / (1.0 + z.exp())
        }
    }

    pub fn score(&self, margin: f64) -> f64 {
        2.0 * self.probability(margin) - 1.0
    }
}

fn negative_log_likelihood(margins: &[f64], labels: &[bool], a: f64, b: f64) -> f64 {
    margins
        .iter()
        .zip(labels.iter())
        .map(|(&m, &y)| {
            let z = a * m + b;
            // -log p for positives, -log(1-p) for negatives, stably.
            let softplus = if z >= 0.0 {
                z + (1.0 + (-z).exp()).ln()
            } else {
                (1.0 + z.exp()).ln()
            };
            if y {
                softplus
            } else {
                softplus - z
            }
        })
        .sum()
}

/// Maximum-likelihood Platt fit by damped Newton iteration, run until the
/// gradient norm drops to 1e-8 or 50 iterations elapse.
pub fn calibrate(margins: &[f64], labels: &[bool]) -> CliResult<CalibrationParams> {
    if margins.len() != labels.len() {
        return Err(CliError::data(
            "margins and labels must have equal lengths",
        ));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CliError::data(
            "calibration needs both label classes present",
        ));
    }
    if positives < 2 || negatives < 2 {
        return Err(CliError::data(
            "calibration needs at least 2 examples of each label",
        ));
    }
    if margins.iter().any(|m| !m.is_finite()) {
        return Err(CliError::data("margins must be finite"));
    }

    let mut a = 0.0f64;
    let mut b = ((negatives as f64 + 1.0) / (positives as f64 + 1.0)).ln();
    let mut nll = negative_log_likelihood(margins, labels, a, b);
    let mut iterations = 0;
    let mut gradient_converged = false;
    let mut stalled = false;

    while iterations < MAX_ITERATIONS {
        let mut grad_a = 0.0;
        let mut grad_b = 0.0;
        let mut h_aa = RIDGE;
        let mut h_ab = 0.0;
        let mut h_bb = RIDGE;
        for (&m, &y) in margins.iter().zip(labels.iter()) {
            let z = a * m + b;
            let p = if z >= 0.0 {
                (-z).exp() / (1.0 + (-z).exp())
            } else {
                1.0 / (1.0 + z.exp())
            };
            let d = if y { 1.0 } else { 0.0 } - p;
            grad_a += d * m;
            grad_b += d;
            let curve = p * (1.0 - p);
            h_aa += curve * m * m;
            h_ab += curve * m;
            h_bb += curve;
        }
        if grad_a.abs().max(grad_b.abs()) <= GRADIENT_TOL {
            gradient_converged = true;
            break;
        }
        let det = h_aa * h_bb - h_ab * h_ab;
        let step_a = -(h_bb * grad_a - h_ab * grad_b) / det;
        let step_b = -(h_aa * grad_b - h_ab * grad_a) / det;

        let mut scale = 1.0;
        loop {
            let candidate = negative_log_likelihood(
                margins,
                labels,
                a + scale * step_a,
                b + scale * step_b,
            );
            if candidate < nll {
                a += scale * step_a;
                b += scale * step_b;
                nll = candidate;
                break;
            }
            scale *= 0.5;
            if scale < MIN_STEP {
                // No descent left at floating-point resolution.
                stalled = true;
                break;
            }
        }
        if stalled {
            break;
        }
        iterations += 1;
    }

    // Separated data drives |a| outward until every probability saturates
    // at its label; flag that even when the gradient check fired first.
    let saturated = margins.iter().zip(labels.iter()).all(|(&m, &y)| {
        let z = a * m + b;
        let p = if z >= 0.0 {
            (-z).exp() / (1.0 + (-z).exp())
        } else {
            1.0 / (1.0 + z.exp())
        };
        if y {
            p > 1.0 - 1e-6
        } else {
            p < 1e-6
        }
    });

    Ok(CalibrationParams {
        a,
        b,
        separation_warning: !gradient_converged || saturated,
        iterations,
    })
}
