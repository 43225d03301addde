//! Post-processing toolkit that removes group bias from any black-box
//! binary classifier's scores.
//!
//! A base classifier emits scores in `[-1, 1]`; this crate learns one dual
//! variable per demographic group by unconstrained smooth convex
//! optimization and turns them into a randomized group-wise thresholding
//! rule. Exact small-instance oracles certify the learned rules, and the
//! metrics module audits bias before and after adjustment.
//!
//! The pieces, bottom to top:
//!
//! * [`cohort`] — scored examples, groups, criteria, and the fitted model.
//! * [`objective`] — the smoothed hinge objective and its gradients.
//! * [`optimizer`] — projected stochastic gradient descent with averaging.
//! * [`decision`] — decision probabilities and label sampling.
//! * [`metrics`] — bias reports and the accuracy-fairness lower bound.
//! * [`oracle`] — exact QP and discrete Bayes-optimal solvers.
//! * [`synth`] — seeded synthetic cohorts.

pub mod cohort;
pub mod decision;
pub mod error;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod synth;

pub use cohort::{
    compute_rho, degenerate_groups, tau_value, Cohort, Criterion, ScoredExample, ThresholdModel,
};
pub use decision::{decide, decide_all, sample, DecisionProbability};
pub use error::{Error, Result};
pub use metrics::{
    conditional_covariance, error_rate, impossibility_bound, residual_bias, BiasReport, GroupBias,
    ImpossibilityBound, ImpossibilityInput,
};
pub use objective::{xi, xi_prime, SmoothedObjective, SmoothedObjectiveParams};
pub use optimizer::{
    fit, suboptimality_bound, LearningRate, Sampling, SgdConfig, TraceRow, TrainTrace,
};
pub use oracle::{
    bayes_optimal_discrete, expected_error, qp_oracle, solve_regularized, AffineConstraint,
    BayesOptimalRule, DiscreteInstance, DiscretePoint, QpSolution, RegularizedSolution,
};
pub use synth::{synthesize, SynthGroup, SynthSpec};
