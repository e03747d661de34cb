//! Regression and tracking metrics with compensated summation.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Pose};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("R2 is undefined for constant ground truth")]
    ZeroVariance,
}

/// Neumaier-compensated sum; the result does not depend on how partial
/// sums round, only on input order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if libm::fabs(sum) >= libm::fabs(v) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check(pred: &[f64], truth: &[f64]) -> Result<usize, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(pred.len())
}

fn residuals<'a>(pred: &'a [f64], truth: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    pred.iter().zip(truth).map(|(p, t)| p - t)
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    let n = check(pred, truth)?;
    let mean = compensated_sum(truth.iter().copied()) / n as f64;
    let ss_tot = compensated_sum(truth.iter().map(|t| (t - mean) * (t - mean)));
    if ss_tot <= 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let ss_res = compensated_sum(residuals(pred, truth).map(|e| e * e));
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    let n = check(pred, truth)?;
    Ok(libm::sqrt(
        compensated_sum(residuals(pred, truth).map(|e| e * e)) / n as f64,
    ))
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    let n = check(pred, truth)?;
    Ok(compensated_sum(residuals(pred, truth).map(libm::fabs)) / n as f64)
}

/// Sum of absolute errors over the four pose components, yaw wrapped.
pub fn l1_loss(pred: &Pose, truth: &Pose) -> f64 {
    Variable::ALL
        .iter()
        .map(|v| libm::fabs(v.error(pred, truth)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    X,
    Y,
    Z,
    Phi,
}

impl Variable {
    pub const ALL: [Variable; 4] = [Variable::X, Variable::Y, Variable::Z, Variable::Phi];

    pub const fn as_str(self) -> &'static str {
        match self {
            Variable::X => "x",
            Variable::Y => "y",
            Variable::Z => "z",
            Variable::Phi => "phi",
        }
    }

    pub fn of(self, p: &Pose) -> f64 {
        p.to_array()[self as usize]
    }

    /// Prediction minus truth; angular differences wrap into `(-pi, pi]`.
    pub fn error(self, pred: &Pose, truth: &Pose) -> f64 {
        let d = self.of(pred) - self.of(truth);
        if self == Variable::Phi {
            wrap_angle(d)
        } else {
            d
        }
    }
}

/// Truth `x` below which a sample counts as near.
pub const NEAR_FAR_THRESHOLD: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub variable: Variable,
    /// `None` when the truth is constant over the subset.
    pub r2: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub samples: usize,
    pub variables: Vec<VariableMetrics>,
    /// Mean R2 over x, y and z.
    pub mean_r2_xyz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFailure {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub all: SubsetReport,
    pub near: SubsetReport,
    pub far: SubsetReport,
    pub failures: Vec<PredictionFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub variable: Variable,
    pub truth: f64,
    pub prediction: f64,
    pub near: bool,
}

fn subset(pairs: &[(Pose, Pose)]) -> SubsetReport {
    let variables: Vec<VariableMetrics> = Variable::ALL
        .iter()
        .map(|&v| {
            let truth: Vec<f64> = pairs.iter().map(|(_, t)| v.of(t)).collect();
            // residual-aligned predictions keep the yaw error wrapped
            let pred: Vec<f64> = pairs.iter().map(|(p, t)| v.of(t) + v.error(p, t)).collect();
            VariableMetrics {
                variable: v,
                r2: r2(&pred, &truth).ok(),
                rmse: rmse(&pred, &truth).unwrap_or(0.0),
                mae: mae(&pred, &truth).unwrap_or(0.0),
            }
        })
        .collect();
    let xyz: Option<Vec<f64>> = variables[..3].iter().map(|m| m.r2).collect();
    SubsetReport {
        samples: pairs.len(),
        mean_r2_xyz: xyz.map(|v| compensated_sum(v) / 3.0),
        variables,
    }
}

/// Runs `predict` over every `(input, truth)` sample. Failed predictions
/// are recorded and left out of the statistics.
pub fn evaluate<S, E: core::fmt::Display>(
    samples: impl IntoIterator<Item = (S, Pose)>,
    mut predict: impl FnMut(&S) -> Result<Pose, E>,
) -> (EvalReport, Vec<ScatterPoint>) {
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for (index, (input, truth)) in samples.into_iter().enumerate() {
        match predict(&input) {
            Ok(p) if p.is_finite() => pairs.push((p, truth)),
            Ok(_) => failures.push(PredictionFailure {
                index,
                reason: String::from("non-finite prediction"),
            }),
            Err(e) => failures.push(PredictionFailure {
                index,
                reason: alloc::format!("{e}"),
            }),
        }
    }
    let near_flag = |t: &Pose| t.x < NEAR_FAR_THRESHOLD;
    let (near, far): (Vec<_>, Vec<_>) = pairs.iter().partition(|(_, t)| near_flag(t));
    let scatter = Variable::ALL
        .iter()
        .flat_map(|&v| {
            pairs.iter().map(move |(p, t)| ScatterPoint {
                variable: v,
                truth: v.of(t),
                prediction: v.of(p),
                near: near_flag(t),
            })
        })
        .collect();
    let report = EvalReport {
        samples: pairs.len() + failures.len(),
        all: subset(&pairs),
        near: subset(&near),
        far: subset(&far),
        failures,
    };
    (report, scatter)
}
