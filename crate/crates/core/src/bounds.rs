//! Sample-complexity bound calculators.
//!
//! Every bound is evaluated in real arithmetic with natural logs and
//! ceiled exactly once, at the outermost formula, so composed bounds are
//! never inflated by intermediate rounding. The general reduction takes
//! any class sample complexity m(ε, δ) and reparametrizes it for the
//! multicalibration guarantee:
//!
//!   samples = ⌈ (2/γ) · m(ψε/3, δ/(4·|G|·|Y|)) ⌉
//!
//! The reduction's bound is really a max over groups of per-group
//! complexities; the callables here are group-agnostic upper bounds, so
//! taking that max (when group-specific bounds exist) is the caller's
//! job. Note the hard-margin scenario bound carries ε to the FIRST power
//! while every other scenario uses ε²; it is implemented as displayed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("norm-product precondition violated: product = {product} < 1")]
    PreconditionViolated { product: f64 },
}

/// The fairness-side knobs shared by all multicalibration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Minimum group frequency.
    pub gamma: f64,
    /// Minimum conditional prediction frequency within a group.
    pub psi: f64,
    pub num_groups: u64,
    pub num_labels: u64,
}

impl FairnessParams {
    pub fn validate(&self) -> Result<(), BoundError> {
        let in_open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_open_unit(self.epsilon) {
            return Err(BoundError::InvalidParams(format!(
                "epsilon must lie in (0,1), got {}",
                self.epsilon
            )));
        }
        if !in_open_unit(self.delta) {
            return Err(BoundError::InvalidParams(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(BoundError::InvalidParams(format!(
                "gamma must lie in (0,1], got {}",
                self.gamma
            )));
        }
        if !(self.psi > 0.0 && self.psi <= 1.0) {
            return Err(BoundError::InvalidParams(format!(
                "psi must lie in (0,1], got {}",
                self.psi
            )));
        }
        if self.num_groups < 1 {
            return Err(BoundError::InvalidParams("num_groups must be >= 1".into()));
        }
        if self.num_labels < 2 {
            return Err(BoundError::InvalidParams("num_labels must be >= 2".into()));
        }
        Ok(())
    }
}

/// A ceiled sample count plus enough context to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub samples: u64,
    pub formula_id: String,
    pub inputs: BTreeMap<String, f64>,
}

fn ceil_samples(raw: f64) -> Result<u64, BoundError> {
    if !raw.is_finite() || raw < 0.0 {
        return Err(BoundError::InvalidParams(format!(
            "bound evaluated to {raw}, expected a finite non-negative value"
        )));
    }
    Ok(raw.ceil() as u64)
}

fn echo_params(p: &FairnessParams) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("epsilon".into(), p.epsilon);
    m.insert("delta".into(), p.delta);
    m.insert("gamma".into(), p.gamma);
    m.insert("psi".into(), p.psi);
    m.insert("num_groups".into(), p.num_groups as f64);
    m.insert("num_labels".into(), p.num_labels as f64);
    m
}

/// Reparametrize any class sample complexity `m(ε, δ)` (real-valued,
/// pre-ceiling) into a multicalibration sample complexity. The splitting
/// factors 3 and 4|G||Y| come from the reduction itself and are not
/// configurable.
pub fn multicalibration_from_erm<M>(m: M, p: &FairnessParams) -> Result<BoundResult, BoundError>
where
    M: Fn(f64, f64) -> f64,
{
    p.validate()?;
    let eps_inner = p.psi * p.epsilon / 3.0;
    let delta_inner = p.delta / (4.0 * p.num_groups as f64 * p.num_labels as f64);
    let raw = (2.0 / p.gamma) * m(eps_inner, delta_inner);
    Ok(BoundResult {
        samples: ceil_samples(raw)?,
        formula_id: "main".into(),
        inputs: echo_params(p),
    })
}

/// Multicalibration bound for a class of finite VC dimension `d_vc`.
pub fn vc_multicalibration_bound(
    d_vc: u64,
    p: &FairnessParams,
    leading_const: f64,
) -> Result<BoundResult, BoundError> {
    p.validate()?;
    if d_vc < 1 {
        return Err(BoundError::InvalidParams("d_vc must be >= 1".into()));
    }
    if !(leading_const > 0.0) {
        return Err(BoundError::InvalidParams("leading_const must be positive".into()));
    }
    let gy = p.num_groups as f64 * p.num_labels as f64;
    let raw = leading_const * (d_vc as f64 + (gy / p.delta).ln())
        / (p.epsilon * p.epsilon * p.psi * p.psi * p.gamma);
    let mut inputs = echo_params(p);
    inputs.insert("d_vc".into(), d_vc as f64);
    inputs.insert("leading_const".into(), leading_const);
    Ok(BoundResult {
        samples: ceil_samples(raw)?,
        formula_id: "vc".into(),
        inputs,
    })
}

fn kernel_erm_raw(b_sq: f64, lambda_margin: f64, epsilon: f64, delta: f64) -> f64 {
    let margin_factor = (1.0f64).max(1.0 / (lambda_margin * lambda_margin));
    (23.0 * margin_factor * b_sq + 64.0 * (4.0 / delta).ln()) / (epsilon * epsilon)
}

fn check_erm_args(epsilon: f64, delta: f64) -> Result<(), BoundError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(BoundError::InvalidParams(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundError::InvalidParams(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    Ok(())
}

/// ERM sample complexity for a soft-margin kernel SVM whose kernel is
/// bounded by B² and whose regularization sets margin parameter λ.
pub fn kernel_erm_sample_complexity(
    b_sq: f64,
    lambda_margin: f64,
    epsilon: f64,
    delta: f64,
) -> Result<u64, BoundError> {
    check_erm_args(epsilon, delta)?;
    if !(b_sq >= 0.0) {
        return Err(BoundError::InvalidParams("B^2 must be non-negative".into()));
    }
    if !(lambda_margin > 0.0) {
        return Err(BoundError::InvalidParams("lambda_margin must be positive".into()));
    }
    ceil_samples(kernel_erm_raw(b_sq, lambda_margin, epsilon, delta))
}

/// Multicalibration bound for the kernel SVM class with the reduction's
/// constants carried through exactly (not via the generic composition).
pub fn kernel_multicalibration_bound(
    b_sq: f64,
    lambda_margin: f64,
    p: &FairnessParams,
) -> Result<BoundResult, BoundError> {
    p.validate()?;
    if !(b_sq >= 0.0) {
        return Err(BoundError::InvalidParams("B^2 must be non-negative".into()));
    }
    if !(lambda_margin > 0.0) {
        return Err(BoundError::InvalidParams("lambda_margin must be positive".into()));
    }
    let gy = p.num_groups as f64 * p.num_labels as f64;
    let margin_factor = (1.0f64).max(1.0 / (lambda_margin * lambda_margin));
    let raw = (1152.0 * (16.0 * gy / p.delta).ln() + 414.0 * margin_factor * b_sq)
        / (p.gamma * p.epsilon * p.epsilon * p.psi * p.psi);
    let mut inputs = echo_params(p);
    inputs.insert("b_sq".into(), b_sq);
    inputs.insert("lambda_margin".into(), lambda_margin);
    Ok(BoundResult {
        samples: ceil_samples(raw)?,
        formula_id: "kernel".into(),
        inputs,
    })
}

/// Capacity factor shared by the two-layer network bounds:
/// ‖X‖_F · (Π s_i) · (Σ (b_j / s_j)^{2/3})^{3/2}, times ln(2·d_max) for
/// the precondition check.
fn relu_capacity(
    d_max: u64,
    frobenius_x: f64,
    spectral: &[f64],
    two_one: &[f64],
) -> Result<(f64, f64), BoundError> {
    if d_max < 1 {
        return Err(BoundError::InvalidParams("d_max must be >= 1".into()));
    }
    if !(frobenius_x >= 0.0) {
        return Err(BoundError::InvalidParams("frobenius_X must be non-negative".into()));
    }
    if spectral.len() != two_one.len() || spectral.is_empty() {
        return Err(BoundError::InvalidParams(
            "spectral and two_one norm lists must be nonempty and equal length".into(),
        ));
    }
    if spectral.iter().any(|&s| !(s > 0.0)) {
        return Err(BoundError::InvalidParams("all spectral norms must be positive".into()));
    }
    let spec_prod: f64 = spectral.iter().product();
    let ratio_sum: f64 = spectral
        .iter()
        .zip(two_one)
        .map(|(s, b)| (b / s).powf(2.0 / 3.0))
        .sum();
    let capacity = frobenius_x * spec_prod * ratio_sum.powf(1.5);
    let product = (2.0 * d_max as f64).ln() * capacity;
    if product < 1.0 {
        return Err(BoundError::PreconditionViolated { product });
    }
    Ok((capacity, (2.0 * d_max as f64).ln()))
}

fn relu_erm_raw(
    d_max: u64,
    frobenius_x: f64,
    spectral: &[f64],
    two_one: &[f64],
    epsilon: f64,
    delta: f64,
) -> Result<f64, BoundError> {
    let (capacity, log_width) = relu_capacity(d_max, frobenius_x, spectral, two_one)?;
    Ok((7200.0 * log_width * log_width * capacity * capacity + 64.0 * (4.0 / delta).ln())
        / (epsilon * epsilon))
}

/// ERM sample complexity for a two-layer ReLU network with the given
/// per-layer spectral norms `s_i` and transpose-(2,1) norms `b_i`, on
/// data of Frobenius norm ‖X‖_F, where `d_max` is the widest layer.
pub fn relu_erm_sample_complexity(
    d_max: u64,
    frobenius_x: f64,
    spectral: &[f64],
    two_one: &[f64],
    epsilon: f64,
    delta: f64,
) -> Result<u64, BoundError> {
    check_erm_args(epsilon, delta)?;
    ceil_samples(relu_erm_raw(d_max, frobenius_x, spectral, two_one, epsilon, delta)?)
}

/// Multicalibration bound for the two-layer ReLU class, constants carried
/// through the reduction exactly.
pub fn relu_multicalibration_bound(
    spectral: &[f64],
    two_one: &[f64],
    d_max: u64,
    frobenius_x: f64,
    p: &FairnessParams,
) -> Result<BoundResult, BoundError> {
    p.validate()?;
    let (capacity, log_width) = relu_capacity(d_max, frobenius_x, spectral, two_one)?;
    let gy = p.num_groups as f64 * p.num_labels as f64;
    let raw = (129600.0 * log_width * log_width * capacity * capacity
        + 1152.0 * (16.0 * gy / p.delta).ln())
        / (p.gamma * p.psi * p.psi * p.epsilon * p.epsilon);
    let mut inputs = echo_params(p);
    inputs.insert("d_max".into(), d_max as f64);
    inputs.insert("frobenius_X".into(), frobenius_x);
    Ok(BoundResult {
        samples: ceil_samples(raw)?,
        formula_id: "relu".into(),
        inputs,
    })
}

/// Multicalibration bound for hard-margin distributions: diameter `D`,
/// margin `ρ`. This is the one bound where ε enters to the first power.
pub fn hard_margin_multicalibration_bound(
    diameter_d: f64,
    margin_rho: f64,
    p: &FairnessParams,
    leading_const: f64,
) -> Result<BoundResult, BoundError> {
    p.validate()?;
    if !(margin_rho > 0.0 && margin_rho <= diameter_d) {
        return Err(BoundError::InvalidParams(format!(
            "need 0 < rho <= D, got rho={margin_rho}, D={diameter_d}"
        )));
    }
    if !(leading_const > 0.0) {
        return Err(BoundError::InvalidParams("leading_const must be positive".into()));
    }
    let gy = p.num_groups as f64 * p.num_labels as f64;
    let raw = leading_const * diameter_d * diameter_d * (4.0 * gy / p.delta).ln()
        / (margin_rho * margin_rho * p.gamma * p.psi * p.epsilon);
    let mut inputs = echo_params(p);
    inputs.insert("diameter_D".into(), diameter_d);
    inputs.insert("margin_rho".into(), margin_rho);
    inputs.insert("leading_const".into(), leading_const);
    Ok(BoundResult {
        samples: ceil_samples(raw)?,
        formula_id: "hard-margin".into(),
        inputs,
    })
}

/// Two-sided uniform-convergence gap from a Rademacher complexity `R` and
/// a loss bound `c`, at confidence 1−δ over `n` samples.
///
/// `empirical_form` selects the data-dependent variant
/// `2R + 4c√(2·ln(4/δ)/n)`; otherwise the expectation variant
/// `2R + c√(2·ln(2/δ)/n)` is used.
pub fn two_sided_generalization_gap(
    rademacher: f64,
    loss_bound_c: f64,
    n: u64,
    delta: f64,
    empirical_form: bool,
) -> Result<f64, BoundError> {
    if !(rademacher >= 0.0) {
        return Err(BoundError::InvalidParams("rademacher must be non-negative".into()));
    }
    if !(loss_bound_c > 0.0) {
        return Err(BoundError::InvalidParams("loss_bound_c must be positive".into()));
    }
    if n == 0 {
        return Err(BoundError::InvalidParams("n must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundError::InvalidParams(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let n = n as f64;
    Ok(if empirical_form {
        2.0 * rademacher + 4.0 * loss_bound_c * (2.0 * (4.0 / delta).ln() / n).sqrt()
    } else {
        2.0 * rademacher + loss_bound_c * (2.0 * (2.0 / delta).ln() / n).sqrt()
    })
}

/// Outcome of checking the ratio-closeness implication on one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioCloseness {
    /// Some hypothesis fails; the implication says nothing here.
    HypothesesNotMet,
    ConclusionHolds,
    ConclusionFails,
}

/// Checks the implication: if p1 ≤ p2, ψ ≤ p2, and both perturbed values
/// stay within ψε/3 of the originals, then the ratios p1/p2 and pt1/pt2
/// differ by at most ε. Division by zero cannot occur under satisfied
/// hypotheses since pt2 ≥ ψ − ψε/3 > 0.
pub fn ratio_closeness(
    p1: f64,
    p2: f64,
    pt1: f64,
    pt2: f64,
    psi: f64,
    epsilon: f64,
) -> RatioCloseness {
    let slack = psi * epsilon / 3.0;
    let hypotheses = p1 <= p2
        && psi <= p2
        && psi > 0.0
        && epsilon > 0.0
        && epsilon < 1.0
        && (p1 - pt1).abs() <= slack
        && (p2 - pt2).abs() <= slack;
    if !hypotheses {
        return RatioCloseness::HypothesesNotMet;
    }
    if (p1 / p2 - pt1 / pt2).abs() <= epsilon {
        RatioCloseness::ConclusionHolds
    } else {
        RatioCloseness::ConclusionFails
    }
}

/// Minimum sample size N so that, with probability ≥ 1−δ, every group of
/// frequency ≥ γ receives more than γN/2 of the N samples:
/// ⌈8·ln(|Γ|/δ)/γ⌉.
pub fn group_occupancy_threshold(
    num_groups: u64,
    gamma: f64,
    delta: f64,
) -> Result<u64, BoundError> {
    if num_groups < 1 {
        return Err(BoundError::InvalidParams("num_groups must be >= 1".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(BoundError::InvalidParams(format!(
            "gamma must lie in (0,1], got {gamma}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundError::InvalidParams(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    ceil_samples(8.0 * (num_groups as f64 / delta).ln() / gamma)
}
