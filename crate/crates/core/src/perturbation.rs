//! Feature-space noise plans and the local smooth discrepancy (LSD).
//!
//! Every perturbation returned here has L2 norm exactly `epsilon` (up to
//! rounding) or the call fails with [`SrdaError::FlatGradient`]; callers
//! that need a total function use [`plan_perturbation`], which falls back to
//! isotropic noise.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SrdaError};
use crate::model::{softmax_rows, Model};
use crate::numeric::ops::{self, cross_entropy_logit_grad, NORM_FLOOR};
use crate::numeric::{l2_norm, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Isotropic,
    Fgsm,
    Vat,
}

impl PlanKind {
    pub const ALL: [PlanKind; 3] = [PlanKind::Isotropic, PlanKind::Fgsm, PlanKind::Vat];

    pub fn name(self) -> &'static str {
        match self {
            PlanKind::Isotropic => "isotropic",
            PlanKind::Fgsm => "fgsm",
            PlanKind::Vat => "vat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "isotropic" => Some(PlanKind::Isotropic),
            "fgsm" => Some(PlanKind::Fgsm),
            "vat" => Some(PlanKind::Vat),
            _ => None,
        }
    }
}

impl std::fmt::Display for PlanKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoisePlan {
    pub kind: PlanKind,
    /// Norm of every perturbation.
    pub epsilon: f64,
    /// Probe scale for the VAT power iteration.
    pub vat_xi: f64,
    pub vat_power_iters: usize,
}

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_VAT_XI: f64 = 1e-1;
pub const DEFAULT_VAT_POWER_ITERS: usize = 1;

impl NoisePlan {
    pub fn new(kind: PlanKind, epsilon: f64) -> Self {
        Self { kind, epsilon, vat_xi: DEFAULT_VAT_XI, vat_power_iters: DEFAULT_VAT_POWER_ITERS }
    }

    pub fn isotropic(epsilon: f64) -> Self {
        Self::new(PlanKind::Isotropic, epsilon)
    }

    pub fn fgsm(epsilon: f64) -> Self {
        Self::new(PlanKind::Fgsm, epsilon)
    }

    pub fn vat(epsilon: f64) -> Self {
        Self::new(PlanKind::Vat, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SrdaError::InvalidInput(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.vat_xi > 0.0 && self.vat_xi.is_finite()) {
            return Err(SrdaError::InvalidInput(format!("vat_xi must be positive, got {}", self.vat_xi)));
        }
        if self.vat_power_iters == 0 {
            return Err(SrdaError::InvalidInput("vat_power_iters must be ≥ 1".into()));
        }
        Ok(())
    }
}

const MAX_RESAMPLES: usize = 100;

/// `ε · m / ‖m‖₂` with `m ~ N(0, I)`.
pub fn sample_isotropic(dim: usize, epsilon: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(SrdaError::InvalidInput("isotropic noise needs dim ≥ 1".into()));
    }
    for _ in 0..MAX_RESAMPLES {
        let m = rng.normal_vec(dim);
        if let Ok(unit) = ops::l2_normalize(&m) {
            return Ok(unit.into_iter().map(|v| epsilon * v).collect());
        }
    }
    Err(SrdaError::Internal(format!("{MAX_RESAMPLES} degenerate gaussian draws in a row")))
}

fn check_feature(model: &Model, g: &[f64]) -> Result<()> {
    if g.len() != model.feature_dim() {
        return Err(SrdaError::ShapeError(format!("feature row has {} entries, model expects {}", g.len(), model.feature_dim())));
    }
    Ok(())
}

fn scaled_unit(m: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let norm = l2_norm(m);
    if !(norm >= NORM_FLOOR) {
        return Err(SrdaError::FlatGradient);
    }
    Ok(m.iter().map(|v| epsilon * (v / norm)).collect())
}

/// Gradient with respect to the classifier input at `point` of
/// `cross_entropy(C(point), reference)`. Classifier parameters are only read.
fn classifier_ce_input_grad(model: &Model, point: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    let (logits, cache) = model.classifier.forward(&Matrix::row_vector(point))?;
    let q = ops::softmax(logits.row(0))?;
    let upstream = Matrix::row_vector(&cross_entropy_logit_grad(&q, reference));
    Ok(model.classifier.input_grad(&cache, &upstream)?.into_vec())
}

fn classify_row(model: &Model, g: &[f64]) -> Result<Vec<f64>> {
    Ok(model.classify(&Matrix::row_vector(g))?.into_vec())
}

/// FGSM-style direction in feature space against the model's own
/// pseudo-label: `ε · m/‖m‖` with `m = ∇_g D(C(g), onehot(C(g)))`.
pub fn fgsm_direction(model: &Model, g: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    check_feature(model, g)?;
    let p = classify_row(model, g)?;
    let pseudo = ops::one_hot(ops::argmax(&p), p.len());
    let m = classifier_ce_input_grad(model, g, &pseudo)?;
    scaled_unit(&m, epsilon)
}

/// Power iteration for the dominant direction of a local discrepancy.
/// `grad_at(ξ·d)` must return the gradient of the discrepancy with respect
/// to the displacement, evaluated at displacement `ξ·d`. Returns a unit vector.
pub fn vat_power_iteration(mut grad_at: impl FnMut(&[f64]) -> Result<Vec<f64>>, start: Vec<f64>, xi: f64, iters: usize) -> Result<Vec<f64>> {
    let mut d = start;
    for _ in 0..iters {
        let displacement: Vec<f64> = d.iter().map(|v| xi * v).collect();
        let grad = grad_at(&displacement)?;
        d = scaled_unit(&grad, 1.0)?;
    }
    Ok(d)
}

/// VAT-style direction: power iteration on `d ↦ D(C(g + ξd), C(g))`
/// starting from a random unit vector, scaled to `ε`.
pub fn vat_direction(model: &Model, g: &[f64], plan: &NoisePlan, rng: &mut Rng) -> Result<Vec<f64>> {
    check_feature(model, g)?;
    let reference = classify_row(model, g)?;
    let start = sample_isotropic(g.len(), 1.0, rng)?;
    let unit = vat_power_iteration(
        |disp| {
            let probe: Vec<f64> = g.iter().zip(disp).map(|(a, b)| a + b).collect();
            // chain rule through g + ξd contributes the factor ξ
            let grad = classifier_ce_input_grad(model, &probe, &reference)?;
            Ok(grad.into_iter().map(|v| plan.vat_xi * v).collect())
        },
        start,
        plan.vat_xi,
        plan.vat_power_iters,
    )?;
    Ok(unit.into_iter().map(|v| plan.epsilon * v).collect())
}

/// Result of [`plan_perturbation`].
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub r: Vec<f64>,
    /// True when an anisotropic plan hit a flat gradient and isotropic
    /// noise was used instead.
    pub fell_back: bool,
}

/// The plan's perturbation for one feature row, falling back to isotropic
/// noise on [`SrdaError::FlatGradient`].
pub fn plan_perturbation(model: &Model, g: &[f64], plan: &NoisePlan, rng: &mut Rng) -> Result<Perturbation> {
    let attempt = match plan.kind {
        PlanKind::Isotropic => return Ok(Perturbation { r: sample_isotropic(g.len(), plan.epsilon, rng)?, fell_back: false }),
        PlanKind::Fgsm => fgsm_direction(model, g, plan.epsilon),
        PlanKind::Vat => vat_direction(model, g, plan, rng),
    };
    match attempt {
        Ok(r) => Ok(Perturbation { r, fell_back: false }),
        Err(SrdaError::FlatGradient) => Ok(Perturbation { r: sample_isotropic(g.len(), plan.epsilon, rng)?, fell_back: true }),
        Err(e) => Err(e),
    }
}

/// One perturbation per row of `g`, drawn in row order from `rng`.
/// Returns the perturbations and the number of isotropic fallbacks.
pub fn perturbation_batch(model: &Model, g: &Matrix, plan: &NoisePlan, rng: &mut Rng) -> Result<(Matrix, usize)> {
    let mut r = Matrix::zeros(g.rows(), g.cols());
    let mut fallbacks = 0;
    for i in 0..g.rows() {
        let p = plan_perturbation(model, g.row(i), plan, rng)?;
        fallbacks += usize::from(p.fell_back);
        r.row_mut(i).copy_from_slice(&p.r);
    }
    Ok((r, fallbacks))
}

/// `g' = g + r`.
pub fn perturb(g: &Matrix, r: &Matrix) -> Result<Matrix> {
    g.add(r)
}

/// `D(C(g + r), C(g))` with the clean prediction as the fixed reference.
pub fn lsd_value(model: &Model, g: &[f64], r: &[f64]) -> Result<f64> {
    check_feature(model, g)?;
    if r.len() != g.len() {
        return Err(SrdaError::ShapeError(format!("perturbation has {} entries, feature row {}", r.len(), g.len())));
    }
    let clean = classify_row(model, g)?;
    let shifted: Vec<f64> = g.iter().zip(r).map(|(a, b)| a + b).collect();
    let perturbed = classify_row(model, &shifted)?;
    ops::cross_entropy(&perturbed, &clean)
}

/// Mean LSD over a batch and its gradient with respect to `g`, holding `r`
/// and the clean reference fixed. Row results do not depend on the batch.
pub fn lsd_batch_with_grad(model: &Model, g: &Matrix, r: &Matrix) -> Result<(f64, Matrix)> {
    if g.shape() != r.shape() || g.cols() != model.feature_dim() {
        return Err(SrdaError::ShapeError(format!("features {:?}, perturbations {:?}", g.shape(), r.shape())));
    }
    let clean = softmax_rows(&model.classifier.infer(g)?)?;
    let (logits, cache) = model.classifier.forward(&perturb(g, r)?)?;
    let perturbed = softmax_rows(&logits)?;
    let b = g.rows() as f64;
    let mut total = 0.0;
    let mut upstream = Matrix::zeros(g.rows(), model.classes());
    for i in 0..g.rows() {
        total += ops::cross_entropy(perturbed.row(i), clean.row(i))?;
        let grad = cross_entropy_logit_grad(perturbed.row(i), clean.row(i));
        for (u, v) in upstream.row_mut(i).iter_mut().zip(grad) {
            *u = v / b;
        }
    }
    let grad_g = model.classifier.input_grad(&cache, &upstream)?;
    Ok((total / b, grad_g))
}
