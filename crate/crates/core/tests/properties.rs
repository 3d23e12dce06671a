//! Property tests for the coordinate system, losses, metrics and filters.

use ppr_core::evaluation::{fleiss_kappa, pairwise_auroc, roc_curve};
use ppr_core::pipeline::{coords_loss, filter_error_map, ErrorMap, FilterKind};
use ppr_core::volumes::{denormalize_coord, equalize_histogram, normalize_coord, Coord, Dims, Volume};
use proptest::prelude::*;

fn coord_strategy() -> impl Strategy<Value = Coord> {
    (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(x, y, z)| Coord { x, y, z })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalize_denormalize_round_trip(
        dx in 2usize..40,
        dy in 2usize..40,
        dz in 2usize..40,
        fx in 0.0f64..1.0,
        fy in 0.0f64..1.0,
        fz in 0.0f64..1.0,
    ) {
        let dims = Dims { x: dx, y: dy, z: dz };
        let idx = [
            (fx * (dx - 1) as f64).round() as usize,
            (fy * (dy - 1) as f64).round() as usize,
            (fz * (dz - 1) as f64).round() as usize,
        ];
        let c = normalize_coord(idx, dims).unwrap();
        prop_assert_eq!(denormalize_coord(c, dims), idx);
        prop_assert!(c.x >= 0.0 && c.x <= 1.0);
        prop_assert!(c.y >= 0.0 && c.y <= 1.0);
        prop_assert!(c.z >= 0.0 && c.z <= 1.0);
    }

    #[test]
    fn coords_loss_is_a_metric(a in coord_strategy(), b in coord_strategy(), c in coord_strategy()) {
        let dab = coords_loss(a, b);
        let dba = coords_loss(b, a);
        prop_assert!(dab >= 0.0);
        prop_assert_eq!(dab, dba);
        prop_assert_eq!(coords_loss(a, a), 0.0);
        if dab == 0.0 {
            prop_assert_eq!(a.as_array(), b.as_array());
        }
        // Triangle inequality with a small floating tolerance.
        prop_assert!(coords_loss(a, c) <= dab + coords_loss(b, c) + 1e-12);
        prop_assert!(dab <= 3f64.sqrt() + 1e-15);
    }

    #[test]
    fn auroc_invariant_under_monotone_transforms(
        scores in prop::collection::vec(0.0f64..1.0, 4..40),
        flips in prop::collection::vec(any::<bool>(), 4..40),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let n = scores.len().min(flips.len());
        let scores = &scores[..n];
        let mut labels = flips[..n].to_vec();
        labels[0] = true;
        if labels.iter().all(|&l| l) {
            labels[1] = false;
        }
        let base = roc_curve(scores, &labels).unwrap().auroc;
        // Strictly increasing map: affine then cube.
        let mapped: Vec<f64> = scores.iter().map(|&s| {
            let t = scale * s + shift;
            t * t * t + t
        }).collect();
        let transformed = roc_curve(&mapped, &labels).unwrap().auroc;
        prop_assert!((base - transformed).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_matches_rank_statistic(
        raw in prop::collection::vec((0u8..12, any::<bool>()), 4..60),
    ) {
        let mut scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64 / 11.0).collect();
        let mut labels: Vec<bool> = raw.iter().map(|&(_, l)| l).collect();
        scores.push(0.3);
        labels.push(true);
        scores.push(0.4);
        labels.push(false);
        let a = roc_curve(&scores, &labels).unwrap().auroc;
        let b = pairwise_auroc(&scores, &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "trapezoid {} vs pairwise {}", a, b);
    }

    #[test]
    fn kappa_is_one_under_unanimity(
        assignments in prop::collection::vec(0usize..3, 2..30),
    ) {
        prop_assume!(assignments.windows(2).any(|w| w[0] != w[1]));
        let ratings: Vec<Vec<usize>> = assignments
            .iter()
            .map(|&cat| {
                let mut row = vec![0usize; 3];
                row[cat] = 3;
                row
            })
            .collect();
        prop_assert_eq!(fleiss_kappa(&ratings, 3).unwrap(), 1.0);
    }

    #[test]
    fn erosion_is_anti_extensive_and_median_bounded(
        values in prop::collection::vec(0.0f32..1.0, 64..=64),
    ) {
        let dims = Dims::cube(4);
        let map = ErrorMap::new(dims, values.clone()).unwrap();
        let eroded = filter_error_map(&map, FilterKind::GreyErosion, 3).unwrap();
        for (e, v) in eroded.values.iter().zip(&values) {
            prop_assert!(e <= v);
        }
        let (lo, hi) = values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
        let median = filter_error_map(&map, FilterKind::Median, 3).unwrap();
        for m in &median.values {
            prop_assert!(*m >= lo && *m <= hi);
        }
    }

    #[test]
    fn equalize_histogram_monotone_on_random_volumes(
        values in prop::collection::vec(0.0f32..1.0, 27..=27),
    ) {
        let dims = Dims::cube(3);
        let v = Volume::new(dims, values.clone()).unwrap();
        let out = equalize_histogram(&v, 64, None).unwrap();
        let mut pairs: Vec<(f32, f32)> = values.into_iter().zip(out.voxels).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            prop_assert!(w[0].1 <= w[1].1);
        }
    }
}
