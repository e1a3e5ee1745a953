use serde::{Deserialize, Serialize};

use super::components::{connected_components, sorted_intersection, BoundingBox, ComponentSet, Connectivity, Mask};
use crate::error::{Error, Result};

/// Ground truth for one sample.
#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruth {
    Mask(Mask),
    Box(BoundingBox),
}

impl GroundTruth {
    /// True when there is something to find.
    pub fn is_annotated(&self) -> bool {
        match self {
            GroundTruth::Mask(m) => !m.is_empty(),
            GroundTruth::Box(_) => true,
        }
    }
}

/// `a` matches `b` when `intersection / union > 1/8`, compared exactly.
pub fn iou_matches(intersection: u64, union: u64) -> bool {
    union > 0 && 8 * intersection > union
}

/// `2 |A n B| / (|A| + |B|)`; two empty masks score 1.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let (mut inter, mut na, mut nb) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as u64;
        nb += y as u64;
        inter += (x && y) as u64;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Detection and overlap scores of one sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Matched ground-truth components.
    pub detected: usize,
    pub ground_truth_components: usize,
    pub predicted_components: usize,
    /// `None` when the ground truth is empty.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Mask ground truth only.
    pub dice: Option<f64>,
    /// Box ground truth only: best IoU of any predicted component box.
    pub max_iou: Option<f64>,
}

fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Counts matches between predicted and ground-truth components at
/// IoU > 1/8 and derives precision, recall, F1 and dice or MaxIoU.
///
/// Ground-truth masks are split into components with `connectivity`.
pub fn match_and_score(pred: &ComponentSet, truth: &GroundTruth, connectivity: Connectivity) -> Result<SampleScore> {
    match truth {
        GroundTruth::Mask(mask) => {
            if mask.shape() != pred.shape {
                return Err(Error::ShapeMismatch(format!(
                    "prediction {:?} vs ground truth {:?}",
                    pred.shape,
                    mask.shape()
                )));
            }
            let gt = connected_components(mask, connectivity);
            Ok(score_masks(pred, &gt, mask))
        }
        GroundTruth::Box(gt_box) => {
            if !gt_box.fits(pred.shape) {
                return Err(Error::ShapeMismatch(format!(
                    "box {gt_box:?} outside volume {:?}",
                    pred.shape
                )));
            }
            Ok(score_box(pred, gt_box))
        }
    }
}

fn score_masks(pred: &ComponentSet, gt: &ComponentSet, gt_mask: &Mask) -> SampleScore {
    let mut pred_hit = vec![false; pred.len()];
    let mut gt_hit = vec![false; gt.len()];
    for (p, pc) in pred.components.iter().enumerate() {
        for (g, gc) in gt.components.iter().enumerate() {
            if pc.bbox.intersection(&gc.bbox) == 0 {
                continue;
            }
            let inter = sorted_intersection(&pc.voxels, &gc.voxels) as u64;
            let union = (pc.len() + gc.len()) as u64 - inter;
            if iou_matches(inter, union) {
                pred_hit[p] = true;
                gt_hit[g] = true;
            }
        }
    }
    let pred_voxels = pred.voxels();
    let gt_voxels = gt_mask.indices();
    let inter = sorted_intersection(&pred_voxels, &gt_voxels);
    let total = pred_voxels.len() + gt_voxels.len();
    let dice = if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 };
    finish(&pred_hit, &gt_hit, Some(dice), None)
}

fn score_box(pred: &ComponentSet, gt_box: &BoundingBox) -> SampleScore {
    let mut pred_hit = vec![false; pred.len()];
    let mut best = 0.0f64;
    for (p, pc) in pred.components.iter().enumerate() {
        let (inter, union) = pc.bbox.overlap(gt_box);
        best = best.max(inter as f64 / union as f64);
        pred_hit[p] = iou_matches(inter, union);
    }
    let gt_hit = [pred_hit.iter().any(|&h| h)];
    finish(&pred_hit, &gt_hit, None, Some(best))
}

fn finish(pred_hit: &[bool], gt_hit: &[bool], dice: Option<f64>, max_iou: Option<f64>) -> SampleScore {
    let tp = pred_hit.iter().filter(|&&h| h).count();
    let detected = gt_hit.iter().filter(|&&h| h).count();
    let mut score = SampleScore {
        true_positives: tp,
        false_positives: pred_hit.len() - tp,
        false_negatives: gt_hit.len() - detected,
        detected,
        ground_truth_components: gt_hit.len(),
        predicted_components: pred_hit.len(),
        dice,
        max_iou,
        ..SampleScore::default()
    };
    if !gt_hit.is_empty() {
        let precision = if pred_hit.is_empty() { 0.0 } else { tp as f64 / pred_hit.len() as f64 };
        let recall = detected as f64 / gt_hit.len() as f64;
        score.precision = Some(precision);
        score.recall = Some(recall);
        score.f1 = Some(f1_score(precision, recall));
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(shape: [usize; 3], lo: [usize; 3], hi: [usize; 3]) -> Mask {
        let mut m = Mask::empty(shape);
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    m.set((i * shape[1] + j) * shape[2] + k, true);
                }
            }
        }
        m
    }

    fn union(a: &Mask, b: &Mask) -> Mask {
        Mask::new(a.shape(), a.data().iter().zip(b.data()).map(|(x, y)| *x || *y).collect()).unwrap()
    }

    #[test]
    fn identical_prediction_scores_one() {
        let m = cube([8, 8, 8], [1, 1, 1], [3, 4, 2]);
        let pred = connected_components(&m, Connectivity::TwentySix);
        let s = match_and_score(&pred, &GroundTruth::Mask(m.clone()), Connectivity::TwentySix).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.dice), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn one_of_two_predictions_matches() {
        let gt = cube([10, 10, 10], [1, 1, 1], [3, 3, 3]);
        let pred_mask = union(&gt, &cube([10, 10, 10], [7, 7, 7], [8, 8, 8]));
        let pred = connected_components(&pred_mask, Connectivity::TwentySix);
        let s = match_and_score(&pred, &GroundTruth::Mask(gt), Connectivity::TwentySix).unwrap();
        assert_eq!(s.precision, Some(0.5));
        assert_eq!(s.recall, Some(1.0));
        assert!((s.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_of_one_eighth_does_not_match() {
        // Balls of radius r and 2r sharing a center: (r^3) / (2r)^3.
        let r = 1.7f64;
        let small = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        let large = 4.0 / 3.0 * std::f64::consts::PI * (2.0 * r).powi(3);
        assert!((small / large - 0.125).abs() < 1e-15);
        // Discrete analog: a 2^3 cube inside a 4^3 cube.
        let outer = cube([6, 6, 6], [0, 0, 0], [3, 3, 3]);
        let inner = cube([6, 6, 6], [1, 1, 1], [2, 2, 2]);
        assert!(!iou_matches(8, 64));
        assert!(iou_matches(9, 64));
        let pred = connected_components(&inner, Connectivity::TwentySix);
        let s = match_and_score(&pred, &GroundTruth::Mask(outer), Connectivity::TwentySix).unwrap();
        assert_eq!((s.true_positives, s.false_positives, s.false_negatives), (0, 1, 1));
        assert_eq!(s.f1, Some(0.0));
    }

    #[test]
    fn empty_cases() {
        let shape = [5, 5, 5];
        let none = connected_components(&Mask::empty(shape), Connectivity::TwentySix);
        let s = match_and_score(&none, &GroundTruth::Mask(Mask::empty(shape)), Connectivity::TwentySix).unwrap();
        assert_eq!(s.precision, None);
        assert_eq!(s.dice, Some(1.0));

        let gt = cube(shape, [1, 1, 1], [2, 2, 2]);
        let s = match_and_score(&none, &GroundTruth::Mask(gt), Connectivity::TwentySix).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.dice), (Some(0.0), Some(0.0), Some(0.0), Some(0.0)));
        assert_eq!(dice(&Mask::empty(shape), &Mask::empty(shape)).unwrap(), 1.0);
    }

    #[test]
    fn box_ground_truth() {
        let shape = [10, 10, 10];
        let gt = BoundingBox::new([2, 2, 2], [5, 5, 5]).unwrap();
        let pred_mask = union(&cube(shape, [2, 2, 2], [5, 5, 4]), &cube(shape, [8, 8, 8], [9, 9, 9]));
        let pred = connected_components(&pred_mask, Connectivity::TwentySix);
        let s = match_and_score(&pred, &GroundTruth::Box(gt), Connectivity::TwentySix).unwrap();
        assert_eq!(s.max_iou, Some(48.0 / 64.0));
        assert_eq!((s.precision, s.recall), (Some(0.5), Some(1.0)));
        assert_eq!(s.dice, None);

        let none = connected_components(&Mask::empty(shape), Connectivity::TwentySix);
        let s = match_and_score(&none, &GroundTruth::Box(gt), Connectivity::TwentySix).unwrap();
        assert_eq!(s.max_iou, Some(0.0));
        assert_eq!(s.recall, Some(0.0));
    }
}
