use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::components::{connected_components, Connectivity};
use super::metrics::{match_and_score, GroundTruth, SampleScore};
use super::thresholds::{
    binarize, predicted_label, select_tau, select_tau_prime, sensitivity_specificity, tau_prime_grid,
    BinarizationThresholds, DEFAULT_SENSITIVITY_WEIGHT, DEFAULT_TAU_PRIME_STEPS,
};
use crate::error::{Error, Result};
use crate::volume::Volume3;

/// A heatmap with its sample label and optional localization ground truth.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub name: String,
    pub heatmap: Volume3,
    pub label: bool,
    pub truth: Option<GroundTruth>,
}

impl LabeledSample {
    pub fn new(name: impl Into<String>, heatmap: Volume3, label: bool, truth: Option<GroundTruth>) -> Result<Self> {
        let name = name.into();
        match &truth {
            Some(GroundTruth::Mask(m)) if m.shape() != heatmap.shape() => {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: mask {:?} vs heatmap {:?}",
                    m.shape(),
                    heatmap.shape()
                )))
            }
            Some(GroundTruth::Box(b)) if !b.fits(heatmap.shape()) => {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: box {b:?} outside heatmap {:?}",
                    heatmap.shape()
                )))
            }
            _ => {}
        }
        Ok(Self {
            name,
            heatmap,
            label,
            truth,
        })
    }

    fn annotated(&self) -> bool {
        self.truth.as_ref().is_some_and(GroundTruth::is_annotated)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValConfig {
    pub folds: usize,
    /// Annotated samples drawn from the first half for the `tau'` search.
    pub calibration_samples: usize,
    pub seed: u64,
    pub sensitivity_weight: f64,
    pub connectivity: Connectivity,
    pub tau_prime_steps: usize,
}

impl Default for CrossValConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            calibration_samples: 5,
            seed: 0,
            sensitivity_weight: DEFAULT_SENSITIVITY_WEIGHT,
            connectivity: Connectivity::TwentySix,
            tau_prime_steps: DEFAULT_TAU_PRIME_STEPS,
        }
    }
}

/// Scores of one fold on its held-out half. Localization metrics are means
/// over held-out samples with non-empty ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub fold: usize,
    pub tau: f64,
    pub tau_prime: Option<f64>,
    pub sensitivity: f64,
    pub specificity: f64,
    pub balanced_accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub dice: Option<f64>,
    pub max_iou: Option<f64>,
    /// Held-out samples that contributed localization metrics.
    pub scored_samples: usize,
    pub test_samples: Vec<String>,
}

/// Fold-averaged scores. Optional metrics average over the folds that have them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValSummary {
    pub folds: usize,
    pub tau: f64,
    pub tau_prime: Option<f64>,
    pub sensitivity: f64,
    pub specificity: f64,
    pub balanced_accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub dice: Option<f64>,
    pub max_iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub config: CrossValConfig,
    pub mean: CrossValSummary,
    pub per_fold: Vec<SegmentationReport>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn check_classes(samples: &[&LabeledSample], half: &str, fold: usize) -> Result<()> {
    let positives = samples.iter().filter(|s| s.label).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::SingleClass(format!(
            "fold {fold}: {half} half has {positives} positive of {} samples",
            samples.len()
        )));
    }
    Ok(())
}

/// Scores one held-out sample with fixed thresholds.
pub fn score_sample(
    sample: &LabeledSample,
    thresholds: BinarizationThresholds,
    connectivity: Connectivity,
) -> Result<Option<SampleScore>> {
    let Some(truth) = sample.truth.as_ref().filter(|t| t.is_annotated()) else {
        return Ok(None);
    };
    let mask = binarize(&sample.heatmap, thresholds, connectivity)?;
    let components = connected_components(&mask, connectivity);
    match_and_score(&components, truth, connectivity).map(Some)
}

fn run_fold(samples: &[LabeledSample], fold: usize, cfg: &CrossValConfig, any_truth: bool) -> Result<SegmentationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(fold as u64);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let half = samples.len() / 2;
    let first: Vec<&LabeledSample> = order[..half].iter().map(|&i| &samples[i]).collect();
    let second: Vec<&LabeledSample> = order[half..].iter().map(|&i| &samples[i]).collect();
    check_classes(&first, "first", fold)?;
    check_classes(&second, "second", fold)?;

    let maxima: Vec<(f64, bool)> = first
        .iter()
        .map(|s| (s.heatmap.min_max().1 as f64, s.label))
        .collect();
    let tau = select_tau(&maxima, cfg.sensitivity_weight)?.tau;

    let tau_prime = if any_truth {
        let mut annotated: Vec<&LabeledSample> = first.iter().copied().filter(|s| s.annotated()).collect();
        if annotated.is_empty() {
            return Err(Error::Degenerate(format!(
                "fold {fold}: no annotated samples in the calibration half"
            )));
        }
        annotated.shuffle(&mut rng);
        annotated.truncate(cfg.calibration_samples.max(1));
        let lowest = annotated
            .iter()
            .map(|s| s.heatmap.min_max().0 as f64)
            .fold(f64::INFINITY, f64::min);
        let candidates = tau_prime_grid(lowest, tau, cfg.tau_prime_steps);
        let calibration: Vec<(&Volume3, &GroundTruth)> = annotated
            .iter()
            .map(|s| (&s.heatmap, s.truth.as_ref().expect("annotated")))
            .collect();
        Some(select_tau_prime(&calibration, tau, &candidates, cfg.connectivity)?.tau_prime)
    } else {
        None
    };

    let test_pairs: Vec<(f64, bool)> = second
        .iter()
        .map(|s| (s.heatmap.min_max().1 as f64, s.label))
        .collect();
    let (sensitivity, specificity) = sensitivity_specificity(&test_pairs, tau);
    debug_assert!(second
        .iter()
        .zip(&test_pairs)
        .all(|(s, p)| predicted_label(&s.heatmap, tau) == (p.0 >= tau)));

    let scores: Vec<SampleScore> = match tau_prime {
        Some(tau_prime) => {
            let thresholds = BinarizationThresholds { tau, tau_prime };
            second
                .par_iter()
                .map(|s| score_sample(s, thresholds, cfg.connectivity))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect()
        }
        None => Vec::new(),
    };

    Ok(SegmentationReport {
        fold,
        tau,
        tau_prime,
        sensitivity,
        specificity,
        balanced_accuracy: 0.5 * (sensitivity + specificity),
        precision: mean(scores.iter().filter_map(|s| s.precision)),
        recall: mean(scores.iter().filter_map(|s| s.recall)),
        f1: mean(scores.iter().filter_map(|s| s.f1)),
        dice: mean(scores.iter().filter_map(|s| s.dice)),
        max_iou: mean(scores.iter().filter_map(|s| s.max_iou)),
        scored_samples: scores.len(),
        test_samples: second.iter().map(|s| s.name.clone()).collect(),
    })
}

/// Monte-Carlo cross-validation: each fold shuffles the samples, fits `tau`
/// and `tau'` on the first half and scores the second half.
pub fn monte_carlo_eval(samples: &[LabeledSample], cfg: &CrossValConfig) -> Result<CrossValReport> {
    if cfg.folds == 0 {
        return Err(Error::InvalidParameter("folds must be at least 1".into()));
    }
    if samples.len() < 4 {
        return Err(Error::SingleClass(format!(
            "{} samples cannot be split into two halves with both classes",
            samples.len()
        )));
    }
    let any_truth = samples.iter().any(LabeledSample::annotated);
    let per_fold = (0..cfg.folds)
        .map(|fold| run_fold(samples, fold, cfg, any_truth))
        .collect::<Result<Vec<_>>>()?;
    let avg = |f: fn(&SegmentationReport) -> f64| mean(per_fold.iter().map(f)).expect("folds >= 1");
    let avg_opt = |f: fn(&SegmentationReport) -> Option<f64>| mean(per_fold.iter().filter_map(f));
    let summary = CrossValSummary {
        folds: per_fold.len(),
        tau: avg(|r| r.tau),
        tau_prime: avg_opt(|r| r.tau_prime),
        sensitivity: avg(|r| r.sensitivity),
        specificity: avg(|r| r.specificity),
        balanced_accuracy: avg(|r| r.balanced_accuracy),
        precision: avg_opt(|r| r.precision),
        recall: avg_opt(|r| r.recall),
        f1: avg_opt(|r| r.f1),
        dice: avg_opt(|r| r.dice),
        max_iou: avg_opt(|r| r.max_iou),
    };
    Ok(CrossValReport {
        config: *cfg,
        mean: summary,
        per_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postprocess::components::Mask;

    fn sample(i: usize, label: bool, peak: f32) -> LabeledSample {
        let shape = [8, 8, 8];
        let mut heat = vec![0.0f32; 512];
        let mut mask = Mask::empty(shape);
        if label {
            for idx in [2 * 64 + 2 * 8 + 2, 2 * 64 + 2 * 8 + 3, 2 * 64 + 3 * 8 + 2] {
                heat[idx] = peak;
                mask.set(idx, true);
            }
        }
        let truth = label.then_some(GroundTruth::Mask(mask));
        LabeledSample::new(format!("s{i}"), Volume3::new(shape, heat).unwrap(), label, truth).unwrap()
    }

    #[test]
    fn perfectly_separable_dataset_scores_one() {
        let data: Vec<LabeledSample> = (0..20).map(|i| sample(i, i % 2 == 0, 1.0 + i as f32 * 0.01)).collect();
        let cfg = CrossValConfig { seed: 3, ..Default::default() };
        let report = monte_carlo_eval(&data, &cfg).unwrap();
        for fold in &report.per_fold {
            assert_eq!(fold.balanced_accuracy, 1.0);
            assert_eq!((fold.precision, fold.recall, fold.f1, fold.dice), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
        }
        assert_eq!(report.mean.balanced_accuracy, 1.0);
    }

    #[test]
    fn identical_heatmaps_carry_no_signal() {
        let shape = [4, 4, 4];
        let data: Vec<LabeledSample> = (0..40)
            .map(|i| LabeledSample::new(format!("s{i}"), Volume3::zeros(shape).unwrap(), i % 2 == 0, None).unwrap())
            .collect();
        let report = monte_carlo_eval(&data, &CrossValConfig::default()).unwrap();
        for fold in &report.per_fold {
            assert_eq!(fold.balanced_accuracy, 0.5);
            assert_eq!(fold.tau_prime, None);
        }
    }

    #[test]
    fn same_seed_same_report() {
        let data: Vec<LabeledSample> = (0..16).map(|i| sample(i, i % 3 == 0, 0.5 + (i % 5) as f32)).collect();
        let cfg = CrossValConfig { seed: 11, folds: 4, ..Default::default() };
        let a = monte_carlo_eval(&data, &cfg).unwrap();
        let b = monte_carlo_eval(&data, &cfg).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_eval(&data, &CrossValConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.per_fold[0].test_samples, c.per_fold[0].test_samples);
    }

    #[test]
    fn single_class_halves_are_rejected() {
        let data: Vec<LabeledSample> = (0..8).map(|i| sample(i, i == 0, 1.0)).collect();
        assert!(matches!(
            monte_carlo_eval(&data, &CrossValConfig::default()),
            Err(Error::SingleClass(_))
        ));
    }
}
