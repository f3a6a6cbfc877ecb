//! Invariants checked on generated inputs.

use madet::candidates::{deduplicate, CandidateRegion};
use madet::classifier::{BoostConfig, Criterion, TrainedEnsemble};
use madet::evaluation::{fold_assignment, froc, froc_partial_auc, froc_score, image_roc_auc, Annotation, Detection, GroundTruth, ImageTruth};
use madet::features::{FeatureMatrix, FeatureVector, RowId, NUM_FEATURES};
use madet::field::ScalarField;
use madet::gradient::weight_transform;
use madet::lcf::{dense_maps, evaluate_point, GradientField, SupportConfig};
use madet::regions::BoundingBox;
use madet::synth::{random_scene, render, RandomSceneParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(w: usize, h: usize, seed: u64) -> ScalarField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0))
}

fn region(pixels: Vec<(u32, u32)>) -> CandidateRegion {
    CandidateRegion::new(pixels, 1.0, 0.5).unwrap()
}

fn rectangle(x: u32, y: u32, w: u32, h: u32) -> Vec<(u32, u32)> {
    (y..y + h).flat_map(|yy| (x..x + w).map(move |xx| (xx, yy))).collect()
}

fn matrix(rows: Vec<[f64; NUM_FEATURES]>, labels: Vec<i8>) -> FeatureMatrix {
    FeatureMatrix {
        ids: (0..rows.len()).map(|i| RowId { image: "p".into(), id: i, cx: 0.0, cy: 0.0 }).collect(),
        rows: rows.into_iter().map(FeatureVector).collect(),
        labels: Some(labels),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filter_outputs_in_range_and_ordered(seed in 0u64..10_000, r_max in 4usize..10) {
        let cfg = SupportConfig { r_min: 0, r_max, ..SupportConfig::default() };
        let img = noise(20, 20, seed);
        let field = GradientField::of_image(&img, cfg.gradient_sigma);
        let [arf, sbf, sef] = dense_maps(&field, &cfg).unwrap();
        for i in 0..400 {
            let (a, b, e) = (arf.response.as_slice()[i], sbf.response.as_slice()[i], sef.response.as_slice()[i]);
            for v in [a, b, e] {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
            prop_assert!(a <= e + 1e-12 && e <= b + 1e-12, "arf {a} sef {e} sbf {b}");
            for r in [arf.radius.as_slice()[i], sbf.radius.as_slice()[i], sef.radius.as_slice()[i]] {
                prop_assert!((0.0..=r_max as f64).contains(&r));
            }
        }
    }

    #[test]
    fn dense_and_point_paths_agree(seed in 0u64..10_000, x in 0usize..24, y in 0usize..24) {
        let cfg = SupportConfig { r_min: 2, r_max: 7, ..SupportConfig::default() };
        let img = noise(24, 24, seed);
        let field = GradientField::of_image(&img, cfg.gradient_sigma);
        let maps = dense_maps(&field, &cfg).unwrap();
        let p = evaluate_point(&field, (x as f64, y as f64), &cfg).values;
        let dense = [maps[0].response.get(x, y), maps[1].response.get(x, y), maps[2].response.get(x, y)];
        for (u, v) in dense.iter().zip([p.arf_response, p.sbf_response, p.sef_response]) {
            prop_assert!((u - v).abs() <= 1e-9);
        }
        prop_assert!(p.sbf_radius >= 2.0 && p.sef_radius >= 2.0 && p.arf_radius >= 0.0);
    }

    #[test]
    fn weight_transform_is_bounded_and_decreasing(a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let w = weight_transform(&ScalarField::new(2, 1, vec![a, b]).unwrap());
        let (wa, wb) = (w.get(0, 0), w.get(1, 0));
        prop_assert!(wa > -1.0 && wa <= 1.0);
        if a < b {
            prop_assert!(wa >= wb);
        }
    }

    #[test]
    fn region_props_consistent(x in 0u32..20, y in 0u32..20, w in 1u32..12, h in 1u32..12, hole in any::<bool>()) {
        let mut pixels = rectangle(x, y, w, h);
        if hole && w >= 3 && h >= 3 {
            pixels.retain(|&p| p != (x + 1, y + 1));
        }
        let c = region(pixels);
        let p = c.props();
        prop_assert!(p.area <= p.convex_area);
        prop_assert!((p.solidity - p.area as f64 / p.convex_area as f64).abs() < 1e-12);
        prop_assert!((p.equiv_diameter - (4.0 * p.area as f64 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&p.extent) && (0.0..1.0 + 1e-12).contains(&p.eccentricity));
        let b: BoundingBox = c.bounding_box();
        let (cx, cy) = c.centroid();
        prop_assert!(cx >= b.x0 as f64 && cx <= b.x1 as f64 && cy >= b.y0 as f64 && cy <= b.y1 as f64);
        prop_assert_eq!(p.euler_number, if hole && w >= 3 && h >= 3 { 0 } else { 1 });
    }

    #[test]
    fn deduplication_is_disjoint_and_lossless(rects in proptest::collection::vec((0u32..30, 0u32..30, 1u32..6, 1u32..6), 1..12)) {
        let regions: Vec<_> = rects.iter().map(|&(x, y, w, h)| region(rectangle(x, y, w, h))).collect();
        let mut before: Vec<_> = regions.iter().flat_map(|r| r.pixels().to_vec()).collect();
        before.sort_unstable();
        before.dedup();
        let merged = deduplicate(regions);
        let mut after: Vec<_> = merged.iter().flat_map(|r| r.pixels().to_vec()).collect();
        let total = after.len();
        after.sort_unstable();
        after.dedup();
        prop_assert_eq!(total, after.len(), "merged regions overlap");
        prop_assert_eq!(before, after);
        for w in merged.windows(2) {
            let (a, b) = (w[0].centroid(), w[1].centroid());
            prop_assert!((a.1, a.0) <= (b.1, b.0));
        }
    }

    #[test]
    fn froc_is_monotone_and_bounded(seed in 0u64..10_000, images in 2usize..8, dets in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = GroundTruth {
            images: (0..images)
                .map(|i| ImageTruth {
                    image_id: format!("i{i}"),
                    annotations: (0..rng.gen_range(0..4)).map(|_| Annotation { x: rng.gen_range(0.0..100.0), y: rng.gen_range(0.0..100.0), radius: None }).collect(),
                })
                .collect(),
        };
        let detections: Vec<Detection> = (0..dets)
            .map(|_| Detection {
                image_id: format!("i{}", rng.gen_range(0..images)),
                x: rng.gen_range(0.0..100.0),
                y: rng.gen_range(0.0..100.0),
                score: rng.gen_range(0.0..1.0),
            })
            .collect();
        let curve = froc(&detections, &truth, 15.0).unwrap();
        for w in curve.points.windows(2) {
            prop_assert!(w[1].fpi >= w[0].fpi && w[1].sensitivity >= w[0].sensitivity);
        }
        let f = froc_score(&curve);
        let area = froc_partial_auc(&curve);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((0.0..=0.984375).contains(&area));
    }

    #[test]
    fn roc_auc_flips_with_labels(scores in proptest::collection::vec(0.0f64..1.0, 4..30), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positive: Vec<bool> = scores.iter().map(|_| rng.gen_bool(0.5)).collect();
        positive[0] = true;
        positive[1] = false;
        let auc = image_roc_auc(&scores, &positive).unwrap();
        let flipped: Vec<bool> = positive.iter().map(|p| !p).collect();
        let other = image_roc_auc(&scores, &flipped).unwrap();
        prop_assert!((auc + other - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folds_partition_evenly(images in 2usize..60, k in 2usize..12, seed in 0u64..1000) {
        prop_assume!(images >= k);
        let folds = fold_assignment(images, k, seed).unwrap();
        prop_assert_eq!(&folds, &fold_assignment(images, k, seed).unwrap());
        let sizes: Vec<usize> = (0..k).map(|f| folds.iter().filter(|&&x| x == f).count()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn normalized_columns_are_standard(seed in 0u64..10_000, n in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; NUM_FEATURES]> = (0..n).map(|_| std::array::from_fn(|j| if j == 5 { 2.0 } else { rng.gen_range(-10.0..10.0) })).collect();
        let (z, stats) = matrix(rows, vec![1; n]).normalize().unwrap();
        for j in 0..NUM_FEATURES {
            let col: Vec<f64> = z.rows.iter().map(|r| r.0[j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
            if j == 5 {
                prop_assert!(col.iter().all(|&v| v == 0.0) && stats.std[j] == 1.0);
            } else {
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
                prop_assert!((sd - 1.0).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn training_invariants(seed in 0u64..1000, rounds in 1usize..30, splits in 1usize..8, criterion in prop_oneof![Just(Criterion::Gini), Just(Criterion::Deviance), Just(Criterion::Twoing)]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 120;
        let rows: Vec<[f64; NUM_FEATURES]> = (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        let labels: Vec<i8> = rows.iter().map(|r| if r[0] + 0.3 * r[1] > 0.7 { 1 } else { -1 }).collect();
        prop_assume!(labels.iter().filter(|&&l| l > 0).count() >= 2);
        let m = matrix(rows, labels);
        let features: Vec<usize> = (0..NUM_FEATURES).collect();
        let cfg = BoostConfig { num_rounds: rounds, max_splits: splits, split_criterion: criterion, rng_seed: seed, ..BoostConfig::default() };
        let (model, trace) = TrainedEnsemble::train(&m, &features, &cfg).unwrap();
        prop_assert_eq!(model.ensemble.trees.len(), model.ensemble.alphas.len());
        prop_assert!(model.ensemble.alphas.iter().all(|a| a.is_finite()));
        prop_assert!(model.ensemble.trees.iter().all(|t| t.split_count() <= splits));
        prop_assert!(trace.iter().all(|t| (t.weight_sum - 1.0).abs() <= 1e-12));
        let text = model.to_json().unwrap();
        let back = TrainedEnsemble::from_json(&text).unwrap();
        prop_assert_eq!(&back.to_json().unwrap(), &text);
        for r in &m.rows {
            let s = model.score(r);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s.to_bits(), back.score(r).to_bits());
        }
        let imp = model.feature_importance();
        prop_assert!(imp.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn scenes_render_deterministically(seed in 0u64..1000, blobs in 0usize..6) {
        let params = RandomSceneParams { blobs, spots: 3, ..RandomSceneParams::default() };
        let spec = random_scene(&params, seed);
        prop_assert_eq!(&spec, &random_scene(&params, seed));
        prop_assert!(spec.validate().is_ok());
        let (a, b) = (render(&spec, "x").unwrap(), render(&spec, "x").unwrap());
        prop_assert_eq!(a.image.green(), b.image.green());
        prop_assert_eq!(a.truth.annotations.len(), spec.blobs.len());
    }
}

#[test]
fn inference_uses_training_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<[f64; NUM_FEATURES]> = (0..80).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0))).collect();
    let labels: Vec<i8> = rows.iter().map(|r| if r[2] > 0.7 { 1 } else { -1 }).collect();
    let train = matrix(rows, labels);
    let cfg = BoostConfig { num_rounds: 10, max_splits: 4, ..BoostConfig::default() };
    let (model, _) = TrainedEnsemble::train(&train, &[0, 1, 2], &cfg).unwrap();
    let stats = madet::features::NormStats::fit(&train.rows).unwrap();
    assert_eq!(model.norm_stats, stats);
    // A shifted test set must be scored against the training statistics.
    let test: Vec<FeatureVector> = (0..20).map(|_| FeatureVector(std::array::from_fn(|_| rng.gen_range(2.0..5.0)))).collect();
    for v in &test {
        let expected = model.ensemble.decision(stats.apply(v).as_slice()).unwrap();
        assert_eq!(model.decision(v).to_bits(), expected.to_bits());
    }
}
