//! match_and_score against an independent brute-force implementation.

#[path = "support/mask_oracle.rs"]
mod mask_oracle;

use mask_oracle::{brute_force, perturb, random_mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomorecon_core::postprocess::components::{connected_components, Connectivity, Mask};
use tomorecon_core::postprocess::metrics::{match_and_score, GroundTruth};

#[test]
fn matches_brute_force_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    for case in 0..200 {
        let shape = [rng.random_range(2..=16), rng.random_range(2..=16), rng.random_range(2..=16)];
        let gt = random_mask(&mut rng, shape);
        let pred = if rng.random_bool(0.5) {
            perturb(&mut rng, &gt)
        } else {
            random_mask(&mut rng, shape)
        };
        let conn = if case % 2 == 0 { Connectivity::TwentySix } else { Connectivity::Six };
        let expected = brute_force(&pred, &gt, shape, conn);

        let pred_set = connected_components(&Mask::new(shape, pred).unwrap(), conn);
        let truth = GroundTruth::Mask(Mask::new(shape, gt).unwrap());
        let got = match_and_score(&pred_set, &truth, conn).unwrap();
        assert_eq!(got.true_positives, expected.tp, "case {case}");
        assert_eq!(got.false_positives, expected.fp, "case {case}");
        assert_eq!(got.false_negatives, expected.fn_, "case {case}");
        assert_eq!(got.precision, expected.precision, "case {case}");
        assert_eq!(got.recall, expected.recall, "case {case}");
        assert_eq!(got.f1, expected.f1, "case {case}");
        assert_eq!(got.dice, Some(expected.dice), "case {case}");
    }
}

#[test]
fn nested_spheres_at_one_eighth_do_not_match() {
    // Radii r and 2r: volume ratio (r / 2r)^3 = 1/8 exactly.
    let (r, big) = (1.0f64, 2.0f64);
    let ratio = r.powi(3) / big.powi(3);
    assert_eq!(ratio, 0.125);
    let shape = [4, 4, 4];
    let outer = vec![true; 64];
    let mut inner = vec![false; 64];
    for i in 1..3 {
        for j in 1..3 {
            for k in 1..3 {
                inner[(i * 4 + j) * 4 + k] = true;
            }
        }
    }
    let pred = connected_components(&Mask::new(shape, inner).unwrap(), Connectivity::TwentySix);
    let s = match_and_score(&pred, &GroundTruth::Mask(Mask::new(shape, outer).unwrap()), Connectivity::TwentySix).unwrap();
    assert_eq!(s.true_positives, 0);
    assert_eq!(s.f1, Some(0.0));
}
