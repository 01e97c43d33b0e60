//! Acquisition functions, all maximized.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;
use serde::{Deserialize, Serialize};

/// Exploration weight for the upper confidence bound.
pub const UCB_KAPPA: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    ExpectedImprovement,
    /// `μ + κσ`: the lower confidence bound of the negated objective.
    ConfidenceBound,
    ProbabilityOfImprovement,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 3] = [
        AcquisitionKind::ExpectedImprovement,
        AcquisitionKind::ConfidenceBound,
        AcquisitionKind::ProbabilityOfImprovement,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            AcquisitionKind::ExpectedImprovement => "EI",
            AcquisitionKind::ConfidenceBound => "LCB",
            AcquisitionKind::ProbabilityOfImprovement => "PI",
        }
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if sd <= 0.0 {
        return (mean - best).max(0.0);
    }
    let z = (mean - best) / sd;
    (mean - best) * normal_cdf(z) + sd * normal_pdf(z)
}

pub fn probability_of_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if sd <= 0.0 {
        return if mean > best { 1.0 } else { 0.0 };
    }
    normal_cdf((mean - best) / sd)
}

pub fn confidence_bound(mean: f64, sd: f64) -> f64 {
    mean + UCB_KAPPA * sd.max(0.0)
}

pub fn acquisition(kind: AcquisitionKind, mean: f64, sd: f64, best: f64) -> f64 {
    match kind {
        AcquisitionKind::ExpectedImprovement => expected_improvement(mean, sd, best),
        AcquisitionKind::ConfidenceBound => confidence_bound(mean, sd),
        AcquisitionKind::ProbabilityOfImprovement => probability_of_improvement(mean, sd, best),
    }
}
