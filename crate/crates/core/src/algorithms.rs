//! Weight update rules for the control filter bank.
//!
//! All three rules share the same gradient term
//!
//! ```text
//! g_kj = Σ_m c_m · x'_jkm(n)
//! ```
//!
//! with a per-error-microphone coefficient `c_m`:
//!
//! * McFxLMS: `c_m = μ · e_m`
//! * MNFxLMS: `c_m = μ̃ · e_m / (Σ_j Σ_k ‖x'_jkm‖² + ε)`
//!
//! McFxLMS and MNFxLMS then apply `w_kj ← w_kj − g_kj`; the momentum variant
//! accumulates `η_kj ← γ·η_kj + g_kj` and applies `w_kj ← w_kj − η_kj`.
//! Sums over microphones always run in increasing `m`, so the three rules and
//! their loop-nest references are reproducible to the last bit.

use serde::{Deserialize, Serialize};

use crate::error::{AncError, Result};
use crate::model::{dot, ControlFilterBank, FilteredReferenceState};

/// Default regularizer ε of the normalized updates.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    #[serde(rename = "mcfxlms")]
    McFxLms,
    #[serde(rename = "mnfxlms")]
    MnFxLms,
    #[serde(rename = "momentum_mnfxlms")]
    MomentumMnFxLms,
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::McFxLms => "mcfxlms",
            AlgorithmKind::MnFxLms => "mnfxlms",
            AlgorithmKind::MomentumMnFxLms => "momentum_mnfxlms",
        }
    }

    pub fn is_normalized(&self) -> bool {
        !matches!(self, AlgorithmKind::McFxLms)
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    /// μ for McFxLMS, μ̃ for the normalized variants.
    pub step_size: f64,
    /// γ; zero unless `kind` is momentum MNFxLMS.
    pub forgetting_factor: f64,
    pub epsilon: f64,
}

impl AlgorithmConfig {
    pub fn mcfxlms(step_size: f64) -> Self {
        AlgorithmConfig {
            kind: AlgorithmKind::McFxLms,
            step_size,
            forgetting_factor: 0.0,
            epsilon: 0.0,
        }
    }

    pub fn mnfxlms(step_size: f64, epsilon: f64) -> Self {
        AlgorithmConfig {
            kind: AlgorithmKind::MnFxLms,
            step_size,
            forgetting_factor: 0.0,
            epsilon,
        }
    }

    pub fn momentum_mnfxlms(step_size: f64, forgetting_factor: f64, epsilon: f64) -> Self {
        AlgorithmConfig {
            kind: AlgorithmKind::MomentumMnFxLms,
            step_size,
            forgetting_factor,
            epsilon,
        }
    }

    /// Checks the parameters and returns non-fatal warnings.
    ///
    /// A zero step size is accepted and yields an open-loop run.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(AncError::param(
                "step_size",
                format!("{} must be finite and non-negative", self.step_size),
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(AncError::param(
                "epsilon",
                format!("{} must be finite and non-negative", self.epsilon),
            ));
        }
        match self.kind {
            AlgorithmKind::MomentumMnFxLms => check_forgetting_factor(self.forgetting_factor)?,
            _ if self.forgetting_factor != 0.0 => {
                return Err(AncError::param(
                    "forgetting_factor",
                    format!("only used by momentum_mnfxlms, got {} for {}", self.forgetting_factor, self.kind),
                ))
            }
            _ => {}
        }
        if self.kind.is_normalized() && !(self.step_size > 0.0 && self.step_size < 1.0) {
            warnings.push(format!(
                "{}: normalized step size {} lies outside (0, 1)",
                self.kind, self.step_size
            ));
        }
        Ok(warnings)
    }

    /// Applies one update of the configured rule.
    pub fn apply(
        &self,
        bank: &mut ControlFilterBank,
        refs: &FilteredReferenceState,
        errors: &[f64],
    ) -> Result<()> {
        match self.kind {
            AlgorithmKind::McFxLms => mcfxlms_update(bank, refs, errors, self.step_size),
            AlgorithmKind::MnFxLms => {
                mnfxlms_update(bank, refs, errors, self.step_size, self.epsilon)
            }
            AlgorithmKind::MomentumMnFxLms => momentum_update(
                bank,
                refs,
                errors,
                self.step_size,
                self.forgetting_factor,
                self.epsilon,
            ),
        }
    }
}

pub(crate) fn check_forgetting_factor(gamma: f64) -> Result<()> {
    if gamma.is_finite() && (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(AncError::param(
            "forgetting_factor",
            format!("{gamma} is outside [0, 1); the momentum accumulator would be unstable"),
        ))
    }
}

fn check_shapes(bank: &ControlFilterBank, refs: &FilteredReferenceState, errors: &[f64]) -> Result<()> {
    let d = refs.dims();
    if bank.sources() != d.sources || bank.refs() != d.refs || bank.taps() != d.control_taps {
        return Err(AncError::ShapeMismatch {
            what: "control filter bank taps".into(),
            expected: d.sources * d.refs * d.control_taps,
            actual: bank.sources() * bank.refs() * bank.taps(),
        });
    }
    if errors.len() != d.errors {
        return Err(AncError::ShapeMismatch {
            what: "error samples".into(),
            expected: d.errors,
            actual: errors.len(),
        });
    }
    if let Some(m) = errors.iter().position(|e| !e.is_finite()) {
        return Err(AncError::NonFiniteError { mic: m });
    }
    Ok(())
}

fn normalized_coefficients(
    refs: &FilteredReferenceState,
    errors: &[f64],
    step_size: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    errors
        .iter()
        .enumerate()
        .map(|(m, &e)| {
            let den = refs.power(m) + epsilon;
            if !den.is_finite() {
                Err(AncError::NonFiniteDenominator { mic: m })
            } else if den == 0.0 {
                // silent channel contributes nothing
                Ok(0.0)
            } else {
                Ok(step_size * e / den)
            }
        })
        .collect()
}

/// Writes g_kj = Σ_m coef[m] · x'_jkm into `grad`.
#[inline]
fn accumulate_gradient(
    refs: &FilteredReferenceState,
    coef: &[f64],
    j: usize,
    k: usize,
    grad: &mut [f64],
) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    for (m, &c) in coef.iter().enumerate() {
        let line = refs.line(j, k, m).as_slice();
        for (g, &x) in grad.iter_mut().zip(line) {
            *g += c * x;
        }
    }
}

enum Apply {
    Direct,
    Momentum(f64),
}

fn update_with(
    bank: &mut ControlFilterBank,
    refs: &FilteredReferenceState,
    coef: &[f64],
    apply: Apply,
) -> Result<()> {
    let d = *refs.dims();
    let mut grad = vec![0.0; d.control_taps];
    for j in 0..d.refs {
        for k in 0..d.sources {
            accumulate_gradient(refs, coef, j, k, &mut grad);
            let (w, eta) = bank.filter_mut(k, j);
            let mut finite = true;
            match apply {
                Apply::Direct => {
                    for (w, g) in w.iter_mut().zip(&grad) {
                        *w -= g;
                        finite &= w.is_finite();
                    }
                }
                Apply::Momentum(gamma) => {
                    for ((w, eta), g) in w.iter_mut().zip(eta.iter_mut()).zip(&grad) {
                        *eta = gamma * *eta + g;
                        *w -= *eta;
                        finite &= w.is_finite();
                    }
                }
            }
            if !finite {
                return Err(AncError::Divergence {
                    source_idx: k,
                    reference_idx: j,
                });
            }
        }
    }
    Ok(())
}

/// Fixed-step multichannel FxLMS: w_kj ← w_kj − μ Σ_m e_m x'_jkm.
pub fn mcfxlms_update(
    bank: &mut ControlFilterBank,
    refs: &FilteredReferenceState,
    errors: &[f64],
    step_size: f64,
) -> Result<()> {
    check_shapes(bank, refs, errors)?;
    let coef: Vec<f64> = errors.iter().map(|&e| step_size * e).collect();
    update_with(bank, refs, &coef, Apply::Direct)
}

/// Multichannel normalized FxLMS.
///
/// Each error microphone's contribution is scaled by the inverse of its own
/// filtered-reference power; cross-microphone terms are neglected.
pub fn mnfxlms_update(
    bank: &mut ControlFilterBank,
    refs: &FilteredReferenceState,
    errors: &[f64],
    step_size: f64,
    epsilon: f64,
) -> Result<()> {
    check_shapes(bank, refs, errors)?;
    let coef = normalized_coefficients(refs, errors, step_size, epsilon)?;
    update_with(bank, refs, &coef, Apply::Direct)
}

/// Momentum MNFxLMS: the normalized gradient is fed through the leaky
/// accumulator η_kj ← γ·η_kj + g_kj before being subtracted from w_kj.
pub fn momentum_update(
    bank: &mut ControlFilterBank,
    refs: &FilteredReferenceState,
    errors: &[f64],
    step_size: f64,
    forgetting_factor: f64,
    epsilon: f64,
) -> Result<()> {
    check_shapes(bank, refs, errors)?;
    check_forgetting_factor(forgetting_factor)?;
    let coef = normalized_coefficients(refs, errors, step_size, epsilon)?;
    update_with(bank, refs, &coef, Apply::Momentum(forgetting_factor))
}

/// Equivalent per-microphone step size μ_m = μ̃ / (Σ_j Σ_k ‖x'_jkm‖² + ε).
///
/// Returns `f64::INFINITY` when the denominator is zero.
pub fn equivalent_step_size(
    refs: &FilteredReferenceState,
    step_size: f64,
    epsilon: f64,
    m: usize,
) -> Result<f64> {
    let errors = refs.dims().errors;
    if m >= errors {
        return Err(AncError::param(
            "m",
            format!("error microphone {m} out of range (M = {errors})"),
        ));
    }
    let den = refs.power(m) + epsilon;
    if den == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(step_size / den)
    }
}

/// d_m + Σ_j Σ_k w_kjᵀ x'_jkm for every microphone m.
///
/// With the pre-update bank this is the a-priori error of the linearized
/// model; with the post-update bank it is the a-posteriori residual that the
/// normalized update drives towards zero.
pub fn aposteriori_residual(
    bank: &ControlFilterBank,
    refs: &FilteredReferenceState,
    disturbances: &[f64],
) -> Result<Vec<f64>> {
    let d = *refs.dims();
    if disturbances.len() != d.errors {
        return Err(AncError::ShapeMismatch {
            what: "disturbance samples".into(),
            expected: d.errors,
            actual: disturbances.len(),
        });
    }
    Ok(disturbances
        .iter()
        .enumerate()
        .map(|(m, &dm)| {
            let mut acc = 0.0;
            for j in 0..d.refs {
                for k in 0..d.sources {
                    acc += dot(bank.weight(k, j), refs.line(j, k, m).as_slice());
                }
            }
            dm + acc
        })
        .collect())
}
