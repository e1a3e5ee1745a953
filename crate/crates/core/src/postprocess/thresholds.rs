use serde::{Deserialize, Serialize};

use super::components::{connected_components_with_peaks, Connectivity, Mask};
use super::metrics::{match_and_score, GroundTruth};
use crate::error::{Error, Result};
use crate::volume::Volume3;

/// Weight of sensitivity relative to specificity when choosing `tau`.
pub const DEFAULT_SENSITIVITY_WEIGHT: f64 = 5.0;
/// Number of evenly spaced `tau'` candidates in `[min heatmap, tau)`.
pub const DEFAULT_TAU_PRIME_STEPS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarizationThresholds {
    /// Detection threshold on the heatmap maximum.
    pub tau: f64,
    /// Extension threshold for the component skirt, `tau' < tau`.
    pub tau_prime: f64,
}

impl BinarizationThresholds {
    pub fn new(tau: f64, tau_prime: f64) -> Result<Self> {
        if !(tau_prime < tau) {
            return Err(Error::InvalidParameter(format!(
                "tau' ({tau_prime}) must be below tau ({tau})"
            )));
        }
        Ok(Self { tau, tau_prime })
    }
}

pub fn heatmap_max(heatmap: &Volume3) -> f64 {
    heatmap.min_max().1 as f64
}

/// Sample-level prediction: positive iff the heatmap maximum reaches `tau`.
pub fn predicted_label(heatmap: &Volume3, tau: f64) -> bool {
    heatmap_max(heatmap) >= tau
}

/// `(sensitivity, specificity)` of `max >= tau` against the labels.
pub fn sensitivity_specificity(samples: &[(f64, bool)], tau: f64) -> (f64, f64) {
    let (mut tp, mut p, mut tn, mut n) = (0usize, 0usize, 0usize, 0usize);
    for &(max, label) in samples {
        if label {
            p += 1;
            tp += (max >= tau) as usize;
        } else {
            n += 1;
            tn += (max < tau) as usize;
        }
    }
    (tp as f64 / p as f64, tn as f64 / n as f64)
}

pub fn weighted_balanced_accuracy(samples: &[(f64, bool)], tau: f64, weight: f64) -> f64 {
    let (sens, spec) = sensitivity_specificity(samples, tau);
    (weight * sens + spec) / (weight + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauChoice {
    pub tau: f64,
    pub weighted_balanced_accuracy: f64,
}

/// Candidate cut points: midpoints between consecutive distinct maxima,
/// plus one value below all maxima and one above.
pub fn tau_candidates(maxima: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = maxima.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(lo - 1.0);
    out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(hi + 1.0);
    out
}

/// Picks `tau` maximizing weighted balanced accuracy over `(max, label)`
/// pairs. Ties go to the larger `tau`.
pub fn select_tau(samples: &[(f64, bool)], weight: f64) -> Result<TauChoice> {
    let positives = samples.iter().filter(|s| s.1).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::SingleClass(format!(
            "{positives} positive of {} samples",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|s| !s.0.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite heatmap maximum {}", bad.0)));
    }
    let maxima: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let mut best = TauChoice {
        tau: f64::NAN,
        weighted_balanced_accuracy: f64::NEG_INFINITY,
    };
    for tau in tau_candidates(&maxima) {
        let score = weighted_balanced_accuracy(samples, tau, weight);
        if score >= best.weighted_balanced_accuracy {
            best = TauChoice {
                tau,
                weighted_balanced_accuracy: score,
            };
        }
    }
    Ok(best)
}

/// Two-threshold binarization: threshold at `tau'`, then keep only the
/// components whose peak reaches `tau`.
pub fn binarize(heatmap: &Volume3, thresholds: BinarizationThresholds, connectivity: Connectivity) -> Result<Mask> {
    BinarizationThresholds::new(thresholds.tau, thresholds.tau_prime)?;
    let skirt = Mask::new(
        heatmap.shape(),
        heatmap
            .data()
            .iter()
            .map(|&v| v as f64 >= thresholds.tau_prime)
            .collect(),
    )?;
    let mut components = connected_components_with_peaks(&skirt, connectivity, heatmap)?;
    components
        .components
        .retain(|c| c.peak.is_some_and(|p| p >= thresholds.tau));
    Ok(components.to_mask())
}

/// `steps` evenly spaced values in `[lowest, tau)`.
pub fn tau_prime_grid(lowest: f64, tau: f64, steps: usize) -> Vec<f64> {
    if !(lowest < tau) || steps == 0 {
        return Vec::new();
    }
    let step = (tau - lowest) / steps as f64;
    (0..steps)
        .map(|k| lowest + k as f64 * step)
        .filter(|&t| t < tau)
        .collect()
}

/// Default `tau'` grid over the smallest value of the calibration heatmaps.
pub fn default_tau_prime_grid(heatmaps: &[&Volume3], tau: f64) -> Vec<f64> {
    let lowest = heatmaps
        .iter()
        .map(|h| h.min_max().0 as f64)
        .fold(f64::INFINITY, f64::min);
    tau_prime_grid(lowest, tau, DEFAULT_TAU_PRIME_STEPS)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauPrimeChoice {
    pub tau_prime: f64,
    /// Mean dice, or mean MaxIoU for box ground truth.
    pub score: f64,
}

/// Overlap score used for `tau'` calibration: dice for masks, MaxIoU for boxes.
pub fn calibration_score(pred: &Mask, truth: &GroundTruth, connectivity: Connectivity) -> Result<f64> {
    match truth {
        GroundTruth::Mask(gt) => super::metrics::dice(pred, gt),
        GroundTruth::Box(_) => {
            let components = super::components::connected_components(pred, connectivity);
            Ok(match_and_score(&components, truth, connectivity)?
                .max_iou
                .unwrap_or(0.0))
        }
    }
}

/// Grid search for the `tau'` with the best mean calibration score. Ties go
/// to the larger `tau'`.
pub fn select_tau_prime(
    calibration: &[(&Volume3, &GroundTruth)],
    tau: f64,
    candidates: &[f64],
    connectivity: Connectivity,
) -> Result<TauPrimeChoice> {
    if calibration.is_empty() {
        return Err(Error::InvalidParameter("no calibration samples for tau'".into()));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if let Some(bad) = candidates.iter().find(|&&c| !(c < tau)) {
        return Err(Error::InvalidParameter(format!(
            "tau' candidate {bad} is not below tau {tau}"
        )));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = TauPrimeChoice {
        tau_prime: f64::NAN,
        score: f64::NEG_INFINITY,
    };
    for tau_prime in sorted {
        let thresholds = BinarizationThresholds { tau, tau_prime };
        let mut total = 0.0;
        for (heatmap, truth) in calibration {
            let mask = binarize(heatmap, thresholds, connectivity)?;
            total += calibration_score(&mask, truth, connectivity)?;
        }
        let score = total / calibration.len() as f64;
        if score >= best.score {
            best = TauPrimeChoice { tau_prime, score };
        }
    }
    Ok(best)
}
