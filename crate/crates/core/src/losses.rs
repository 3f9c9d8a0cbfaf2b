//! Per-head losses, their weighted combination, and analytic gradients.
//!
//! Semantic and edge heads use the soft Dice/Jaccard composition
//! `dice * jaccard / (dice + jaccard)`; the class head uses weighted
//! categorical cross-entropy averaged over pixels. Map-level entry points
//! take the 32-bit map types; the `_f64` variants are the numerical core and
//! what the finite-difference verification drives.
//!
//! Training itself is out of scope here; for the record, weight bundles are
//! expected to come from minimizing the combined loss with Adam, mini-batch
//! 5, initial learning rate 0.004, decayed by 0.3 after five stagnant
//! epochs, stopping after fifteen.

use crate::maps::{ClassMap, ClassProbMap, ProbMap, NUM_CLASSES};
use thiserror::Error;

/// Smoothing constant added to numerator and denominator of both soft losses.
pub const SMOOTH_EPS: f64 = 1e-6;
/// Predictions are clamped to `[PROB_FLOOR, 1]` before any logarithm.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
    #[error("target class {class} out of range for {channels} channels")]
    BadTarget { class: u8, channels: usize },
}

/// The three head weights and the per-class cross-entropy weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub class_weights: Vec<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_a: 1.0,
            lambda_b: 5.0,
            lambda_c: 4.0,
            class_weights: vec![1.0; NUM_CLASSES],
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let lambdas = [self.lambda_a, self.lambda_b, self.lambda_c];
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(LossError::InvalidWeights(
                "lambdas must be finite and non-negative".into(),
            ));
        }
        if lambdas.iter().all(|&l| l == 0.0) {
            return Err(LossError::InvalidWeights(
                "at least one lambda must be positive".into(),
            ));
        }
        if self.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LossError::InvalidWeights(
                "class weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Replaces the class weights with ones (the equal-class-weights ablation).
    pub fn with_equal_class_weights(mut self) -> Self {
        self.class_weights = vec![1.0; self.class_weights.len().max(NUM_CLASSES)];
        self
    }
}

/// Inverse-frequency class weights normalized to mean 1. Classes absent from
/// the counts get the largest computed weight.
pub fn class_weights_from_frequencies(pixel_counts: &[u64]) -> Vec<f64> {
    let total: u64 = pixel_counts.iter().sum();
    if total == 0 {
        return vec![1.0; pixel_counts.len()];
    }
    let raw: Vec<f64> = pixel_counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                total as f64 / c as f64
            }
        })
        .collect();
    let max_present = raw.iter().cloned().fold(0.0f64, f64::max).max(1.0);
    let filled: Vec<f64> = raw
        .iter()
        .map(|&w| if w == 0.0 { max_present } else { w })
        .collect();
    let mean = filled.iter().sum::<f64>() / filled.len() as f64;
    filled.iter().map(|w| w / mean).collect()
}

fn check_len(pred: &[f64], target: &[f64]) -> Result<(), LossError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(LossError::ShapeMismatch(format!(
            "pred has {} values, target has {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

fn overlap_sums(pred: &[f64], target: &[f64]) -> (f64, f64, f64) {
    let mut s_pt = 0.0;
    let mut s_p = 0.0;
    let mut s_t = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        s_pt += p * t;
        s_p += p;
        s_t += t;
    }
    (s_pt, s_p, s_t)
}

/// Soft Dice loss `1 - (2*sum(pt) + eps) / (sum(p) + sum(t) + eps)`.
pub fn dice_loss_f64(pred: &[f64], target: &[f64]) -> Result<f64, LossError> {
    check_len(pred, target)?;
    let (s_pt, s_p, s_t) = overlap_sums(pred, target);
    Ok(1.0 - (2.0 * s_pt + SMOOTH_EPS) / (s_p + s_t + SMOOTH_EPS))
}

/// Soft Jaccard loss `1 - (sum(pt) + eps) / (sum(p) + sum(t) - sum(pt) + eps)`.
pub fn jaccard_loss_f64(pred: &[f64], target: &[f64]) -> Result<f64, LossError> {
    check_len(pred, target)?;
    let (s_pt, s_p, s_t) = overlap_sums(pred, target);
    Ok(1.0 - (s_pt + SMOOTH_EPS) / (s_p + s_t - s_pt + SMOOTH_EPS))
}

/// Composition of the two segmentation losses, 0 at the perfect-prediction
/// limit where both components vanish.
pub fn combined_from_components(dice: f64, jaccard: f64) -> f64 {
    if dice + jaccard == 0.0 {
        0.0
    } else {
        dice * jaccard / (dice + jaccard)
    }
}

pub fn combined_seg_loss_f64(pred: &[f64], target: &[f64]) -> Result<f64, LossError> {
    Ok(combined_from_components(
        dice_loss_f64(pred, target)?,
        jaccard_loss_f64(pred, target)?,
    ))
}

/// Weighted categorical cross-entropy, mean over pixels of
/// `w[target] * -ln(clamp(p_target))`.
///
/// `pred` is channel-last with `channels` values per pixel; `targets` holds
/// one class id per pixel.
pub fn weighted_cce_f64(
    pred: &[f64],
    channels: usize,
    targets: &[u8],
    class_weights: &[f64],
) -> Result<f64, LossError> {
    if channels == 0 || targets.is_empty() || pred.len() != targets.len() * channels {
        return Err(LossError::ShapeMismatch(format!(
            "pred has {} values for {} pixels x {} channels",
            pred.len(),
            targets.len(),
            channels
        )));
    }
    if class_weights.len() < channels {
        return Err(LossError::InvalidWeights(format!(
            "need {} class weights, got {}",
            channels,
            class_weights.len()
        )));
    }
    if class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(LossError::InvalidWeights(
            "class weights must be finite and non-negative".into(),
        ));
    }
    let mut sum = 0.0;
    for (px, &t) in targets.iter().enumerate() {
        let t = t as usize;
        if t >= channels {
            return Err(LossError::BadTarget {
                class: t as u8,
                channels,
            });
        }
        let p = pred[px * channels + t].clamp(PROB_FLOOR, 1.0);
        sum += class_weights[t] * -p.ln();
    }
    Ok(sum / targets.len() as f64)
}

/// Weighted total `lambda_a*l_a + lambda_b*l_b + lambda_c*l_c`, evaluated as
/// a left-to-right fold.
pub fn total_from_components(l_a: f64, l_b: f64, l_c: f64, weights: &LossWeights) -> f64 {
    weights.lambda_a * l_a + weights.lambda_b * l_b + weights.lambda_c * l_c
}

fn map_to_f64(map: &ProbMap) -> Vec<f64> {
    map.data().iter().map(|&v| f64::from(v)).collect()
}

fn check_map_shapes(pred: &ProbMap, target: &ProbMap) -> Result<(), LossError> {
    if pred.height() != target.height() || pred.width() != target.width() {
        return Err(LossError::ShapeMismatch(format!(
            "pred {}x{} vs target {}x{}",
            pred.height(),
            pred.width(),
            target.height(),
            target.width()
        )));
    }
    Ok(())
}

pub fn dice_loss(pred: &ProbMap, target: &ProbMap) -> Result<f64, LossError> {
    check_map_shapes(pred, target)?;
    dice_loss_f64(&map_to_f64(pred), &map_to_f64(target))
}

pub fn jaccard_loss(pred: &ProbMap, target: &ProbMap) -> Result<f64, LossError> {
    check_map_shapes(pred, target)?;
    jaccard_loss_f64(&map_to_f64(pred), &map_to_f64(target))
}

pub fn combined_seg_loss(pred: &ProbMap, target: &ProbMap) -> Result<f64, LossError> {
    check_map_shapes(pred, target)?;
    combined_seg_loss_f64(&map_to_f64(pred), &map_to_f64(target))
}

pub fn weighted_cce(
    pred: &ClassProbMap,
    target: &ClassMap,
    class_weights: &[f64],
) -> Result<f64, LossError> {
    if pred.height() != target.height() || pred.width() != target.width() {
        return Err(LossError::ShapeMismatch(format!(
            "pred {}x{} vs target {}x{}",
            pred.height(),
            pred.width(),
            target.height(),
            target.width()
        )));
    }
    let data: Vec<f64> = pred.data().iter().map(|&v| f64::from(v)).collect();
    weighted_cce_f64(&data, pred.channels(), target.data(), class_weights)
}

/// All three losses combined per the head weighting.
pub fn total_loss(
    semantic: (&ProbMap, &ProbMap),
    edges: (&ProbMap, &ProbMap),
    classes: (&ClassProbMap, &ClassMap),
    weights: &LossWeights,
) -> Result<f64, LossError> {
    weights.validate()?;
    let l_a = combined_seg_loss(semantic.0, semantic.1)?;
    let l_b = combined_seg_loss(edges.0, edges.1)?;
    let l_c = weighted_cce(classes.0, classes.1, &weights.class_weights)?;
    Ok(total_from_components(l_a, l_b, l_c, weights))
}

// ---------------------------------------------------------------------------
// Analytic gradients with respect to the predictions
// ---------------------------------------------------------------------------

/// d(dice loss)/d(pred_i).
pub fn dice_grad_f64(pred: &[f64], target: &[f64]) -> Result<Vec<f64>, LossError> {
    check_len(pred, target)?;
    let (s_pt, s_p, s_t) = overlap_sums(pred, target);
    let den = s_p + s_t + SMOOTH_EPS;
    let num = 2.0 * s_pt + SMOOTH_EPS;
    Ok(target
        .iter()
        .map(|&t| -(2.0 * t * den - num) / (den * den))
        .collect())
}

/// d(jaccard loss)/d(pred_i).
pub fn jaccard_grad_f64(pred: &[f64], target: &[f64]) -> Result<Vec<f64>, LossError> {
    check_len(pred, target)?;
    let (s_pt, s_p, s_t) = overlap_sums(pred, target);
    let union = s_p + s_t - s_pt + SMOOTH_EPS;
    let inter = s_pt + SMOOTH_EPS;
    Ok(target
        .iter()
        .map(|&t| -(t * union - inter * (1.0 - t)) / (union * union))
        .collect())
}

/// d(combined loss)/d(pred_i) by the quotient rule over the two components.
pub fn combined_grad_f64(pred: &[f64], target: &[f64]) -> Result<Vec<f64>, LossError> {
    let d = dice_loss_f64(pred, target)?;
    let j = jaccard_loss_f64(pred, target)?;
    let gd = dice_grad_f64(pred, target)?;
    let gj = jaccard_grad_f64(pred, target)?;
    let sum = d + j;
    if sum == 0.0 {
        return Ok(vec![0.0; pred.len()]);
    }
    Ok(gd
        .iter()
        .zip(&gj)
        .map(|(&dd, &dj)| ((dd * j + d * dj) * sum - d * j * (dd + dj)) / (sum * sum))
        .collect())
}

/// d(weighted cce)/d(pred), channel-last like `pred`. Nonzero only at target
/// channels away from the clamp boundaries.
pub fn weighted_cce_grad_f64(
    pred: &[f64],
    channels: usize,
    targets: &[u8],
    class_weights: &[f64],
) -> Result<Vec<f64>, LossError> {
    // validates shapes and weight ranges
    weighted_cce_f64(pred, channels, targets, class_weights)?;
    let n = targets.len() as f64;
    let mut grad = vec![0.0; pred.len()];
    for (px, &t) in targets.iter().enumerate() {
        let t = t as usize;
        let p = pred[px * channels + t];
        if p > PROB_FLOOR && p < 1.0 {
            grad[px * channels + t] = -class_weights[t] / (p * n);
        }
    }
    Ok(grad)
}
