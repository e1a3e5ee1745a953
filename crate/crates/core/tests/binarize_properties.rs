use proptest::prelude::*;
use tomorecon_core::postprocess::components::Connectivity;
use tomorecon_core::postprocess::thresholds::{binarize, predicted_label, BinarizationThresholds};
use tomorecon_core::volume::Volume3;

fn heatmap() -> impl Strategy<Value = Volume3> {
    (2usize..10, 2usize..10, 2usize..10).prop_flat_map(|(d, h, w)| {
        prop::collection::vec(-2.0f32..2.0, d * h * w).prop_map(move |data| Volume3::new([d, h, w], data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn label_is_kept_and_masks_are_monotone(
        heat in heatmap(),
        tau in -1.5f64..1.5,
        gaps in prop::collection::vec(0.01f64..3.0, 1..6),
        six in any::<bool>(),
    ) {
        let conn = if six { Connectivity::Six } else { Connectivity::TwentySix };
        let mut gaps = gaps;
        gaps.sort_by(f64::total_cmp);
        let label = predicted_label(&heat, tau);
        let mut previous: Option<Vec<bool>> = None;
        // tau' decreasing: each mask must contain the previous one.
        for gap in gaps {
            let mask = binarize(&heat, BinarizationThresholds::new(tau, tau - gap).unwrap(), conn).unwrap();
            prop_assert_eq!(!mask.is_empty(), label);
            if let Some(prev) = &previous {
                prop_assert!(prev.iter().zip(mask.data()).all(|(p, m)| !*p || *m));
            }
            previous = Some(mask.data().to_vec());
        }
    }
}
