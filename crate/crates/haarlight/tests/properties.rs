//! Property tests for the transform and rotation-map invariants.

use proptest::prelude::*;

use haarlight::haar::{forward_transform, inverse_transform, truncate_top_k};
use haarlight::map::{LatLongMap, PI, TAU};
use haarlight::sphere::{rotate_angles, RotationSpec};

fn arb_map(max_exp: u32) -> impl Strategy<Value = LatLongMap> {
    (1..=max_exp)
        .prop_flat_map(|n| {
            let len = 1usize << (2 * n);
            (
                Just(n),
                proptest::collection::vec(-100.0f64..100.0, len..=len),
            )
        })
        .prop_map(|(n, data)| LatLongMap::from_samples(n, 1, data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn roundtrip_and_parseval(m in arb_map(5)) {
        let pyr = forward_transform(&m);
        let back = inverse_transform(&pyr).unwrap();
        let peak = m.peak_abs().max(1e-12);
        for (a, b) in m.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() / peak < 1e-12);
        }
        let ms: f64 = m.samples().iter().map(|v| v * v).sum::<f64>()
            / m.samples().len() as f64;
        let energy = pyr.energy()[0];
        prop_assert!((ms - energy).abs() <= 1e-9 * ms.max(1e-12));
    }

    #[test]
    fn transform_linearity(m1 in arb_map(4), s in -3.0f64..3.0) {
        // forward(s * m) = s * forward(m), checked through reconstruction.
        let scaled = LatLongMap::from_samples(
            m1.size_exp(),
            1,
            m1.samples().iter().map(|v| s * v).collect(),
        ).unwrap();
        let pa = forward_transform(&m1);
        let pb = forward_transform(&scaled);
        prop_assert!((pb.scaling[0] - s * pa.scaling[0]).abs() < 1e-9);
        for (la, lb) in pa.levels.iter().zip(&pb.levels) {
            for (ga, gb) in [(&la.h, &lb.h), (&la.v, &lb.v), (&la.d, &lb.d)] {
                for (x, y) in ga.iter().zip(gb) {
                    prop_assert!((y - s * x).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn truncation_monotone(m in arb_map(4)) {
        let pyr = forward_transform(&m);
        let mut prev = f64::INFINITY;
        for k in [1usize, 4, 16, 64, 256] {
            let back = inverse_transform(&truncate_top_k(&pyr, k).unwrap().to_pyramid().unwrap()).unwrap();
            let mse = back.mse(&m).unwrap();
            prop_assert!(mse <= prev + 1e-12);
            prev = mse;
        }
    }

    #[test]
    fn rotation_map_inverse(
        a in -PI..PI, b in -PI..PI, g in -PI..PI,
        theta in 0.2..PI - 0.2, phi in 0.0..TAU,
    ) {
        let rot = RotationSpec::from_euler(a, b, g);
        let (t1, p1) = rotate_angles(&rot, theta, phi);
        prop_assume!(t1 > 0.05 && t1 < PI - 0.05);
        let (t2, p2) = rotate_angles(&rot.inverse(), t1, p1);
        prop_assert!((t2 - theta).abs() < 1e-9);
        let dphi = (p2 - phi).rem_euclid(TAU).min((phi - p2).rem_euclid(TAU));
        prop_assert!(dphi < 1e-9);
    }
}
