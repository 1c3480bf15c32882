use std::fs;

use pseudomask::pipeline::{ANNOTATIONS_FILE, SUMMARY_FILE};
use pseudomask::{process_image, run_batch, Mask, PipelineConfig};
use pseudomask_harness::io::{evaluate_dirs, read_ground_truth, write_corpus, MANIFEST_FILE};
use pseudomask_harness::{
    evaluate, generate_corpus, generate_scene, ImageGroundTruth, ImagePredictions, SceneParams,
    ScoredMask, Template,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn templates_plant_the_expected_instances() {
    let params = SceneParams::default();
    for (template, count) in [
        (Template::AdjacentTwins, 2),
        (Template::SingleBlob, 1),
        (Template::RampBlob, 1),
        (Template::Blank, 0),
    ] {
        for seed in 0..10 {
            let s = generate_scene(seed, template, &params).unwrap();
            assert_eq!(s.gt_masks.len(), count, "{}", s.id);
            assert_eq!(s.gt_patch_masks.len(), count, "{}", s.id);
            let (gh, gw) = s.grid_dims();
            assert_eq!(s.image.dims(), (gh * params.stride, gw * params.stride));
            for (i, a) in s.gt_masks.iter().enumerate() {
                assert!(a.any());
                for b in &s.gt_masks[i + 1..] {
                    assert!(a.is_disjoint(b));
                }
            }
        }
    }
}

#[test]
fn twins_touch_share_a_prototype_and_sit_at_two_depths() {
    for seed in 0..20 {
        let s = generate_scene(seed, Template::AdjacentTwins, &SceneParams::default()).unwrap();
        let (a, b) = (&s.planted[0], &s.planted[1]);
        assert_eq!(a.prototype, b.prototype);
        let mut depths = [a.depth, b.depth];
        depths.sort_by(f64::total_cmp);
        assert_eq!(depths, [0.3, 0.7]);
        // 4-adjacent somewhere along the shared edge
        let (m0, m1) = (&s.gt_patch_masks[0], &s.gt_patch_masks[1]);
        let (h, w) = m0.dims();
        let touching = m0.nodes().any(|n| {
            let (r, c) = (n / w, n % w);
            (r + 1 < h && m1.get(r + 1, c))
                || (c + 1 < w && m1.get(r, c + 1))
                || (r > 0 && m1.get(r - 1, c))
                || (c > 0 && m1.get(r, c - 1))
        });
        assert!(touching, "{}", s.id);
    }
}

#[test]
fn same_seed_same_scene() {
    let params = SceneParams::default();
    for template in Template::ALL {
        assert_eq!(
            generate_scene(42, template, &params).unwrap(),
            generate_scene(42, template, &params).unwrap()
        );
    }
    let a = generate_corpus(5, 4, Template::RampBlob, &params).unwrap();
    let b = generate_corpus(5, 4, Template::RampBlob, &params).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
}

#[test]
fn twins_yield_two_accurate_annotations() {
    for seed in 0..3 {
        let s =
            generate_scene(800 + seed, Template::AdjacentTwins, &SceneParams::default()).unwrap();
        let set = process_image(
            &s.id,
            &s.features,
            &s.depth,
            &s.image,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(set.instances.len(), 2, "{}", s.id);
        for gt in &s.gt_masks {
            let best = set
                .instances
                .iter()
                .map(|i| i.pixel_mask.iou(gt))
                .fold(0.0, f64::max);
            assert!(best >= 0.9, "{}: IoU {best}", s.id);
        }
        let merged = process_image(
            &s.id,
            &s.features,
            &s.depth,
            &s.image,
            &PipelineConfig::semantic_only(),
        )
        .unwrap();
        assert_eq!(merged.instances.len(), 1, "{}", s.id);
    }
}

#[test]
fn blank_scenes_never_crash() {
    for seed in 0..3 {
        let s = generate_scene(seed, Template::Blank, &SceneParams::default()).unwrap();
        for cfg in [PipelineConfig::default(), PipelineConfig::semantic_only()] {
            let set = process_image(&s.id, &s.features, &s.depth, &s.image, &cfg).unwrap();
            assert!(set.instances.len() <= 1);
        }
    }
}

#[test]
fn corpus_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = generate_corpus(0, 3, Template::AdjacentTwins, &SceneParams::default()).unwrap();
    let manifest = write_corpus(dir.path(), &scenes).unwrap();
    assert_eq!(manifest, dir.path().join(MANIFEST_FILE));
    let gts = read_ground_truth(dir.path()).unwrap();
    let want: Vec<ImageGroundTruth> = scenes.iter().map(Into::into).collect();
    assert_eq!(gts, want);
}

#[test]
fn batch_reruns_are_byte_identical_and_score_well() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = generate_corpus(60, 3, Template::AdjacentTwins, &SceneParams::default()).unwrap();
    let manifest = write_corpus(&dir.path().join("corpus"), &scenes).unwrap();
    let cfg = PipelineConfig {
        overlays: true,
        ..PipelineConfig::default()
    };
    let first = run_batch(&manifest, &dir.path().join("a"), &cfg).unwrap();
    run_batch(&manifest, &dir.path().join("b"), &cfg).unwrap();
    assert_eq!(first.images, 3);
    assert!(first.failures.is_empty());
    let read = |d: &str| fs::read(dir.path().join(d).join(ANNOTATIONS_FILE)).unwrap();
    assert_eq!(read("a"), read("b"));
    for s in &scenes {
        let overlay = |d: &str| {
            fs::read(
                dir.path()
                    .join(d)
                    .join("overlays")
                    .join(format!("{}.png", s.id)),
            )
            .unwrap()
        };
        assert_eq!(overlay("a"), overlay("b"));
    }
    let r = evaluate_dirs(&dir.path().join("a"), &dir.path().join("corpus")).unwrap();
    assert_eq!(r.ap50, 1.0);
}

#[test]
fn empty_manifest_gives_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join(MANIFEST_FILE);
    fs::write(&manifest, "").unwrap();
    let summary = run_batch(
        &manifest,
        &dir.path().join("out"),
        &PipelineConfig::default(),
    )
    .unwrap();
    assert_eq!(
        (summary.images, summary.processed, summary.masks),
        (0, 0, 0)
    );
    assert!(dir.path().join("out").join(SUMMARY_FILE).is_file());
    assert_eq!(
        fs::read_to_string(dir.path().join("out").join(ANNOTATIONS_FILE)).unwrap(),
        ""
    );
}

fn block(r0: usize, c0: usize, h: usize, w: usize) -> Mask {
    Mask::from_fn(20, 20, |r, c| {
        r >= r0 && r < r0 + h && c >= c0 && c < c0 + w
    })
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<ImagePredictions>, Vec<ImageGroundTruth>) {
    let mut gts = Vec::new();
    let mut preds = Vec::new();
    for img in 0..4 {
        let masks: Vec<Mask> = (0..rng.random_range(1..=3))
            .map(|k| block(k * 6, rng.random_range(0..10), 5, 8))
            .collect();
        let mut instances = Vec::new();
        for m in &masks {
            if rng.random_bool(0.8) {
                let (dr, dc) = (rng.random_range(0..2), rng.random_range(0..3));
                let (r0, c0, _, _) = bounds(m);
                instances.push(ScoredMask {
                    mask: block(r0 + dr, c0 + dc, 5, 8),
                    score: rng.random::<f64>(),
                });
            }
        }
        if rng.random_bool(0.5) {
            instances.push(ScoredMask {
                mask: block(15, 0, 4, 4),
                score: rng.random::<f64>(),
            });
        }
        gts.push(ImageGroundTruth {
            image_id: format!("img{img}"),
            masks,
        });
        preds.push(ImagePredictions {
            image_id: format!("img{img}"),
            instances,
        });
    }
    (preds, gts)
}

fn bounds(m: &Mask) -> (usize, usize, usize, usize) {
    let [x, y, w, h] = m.bbox();
    (y as usize, x as usize, h as usize, w as usize)
}

#[test]
fn ap_falls_with_stricter_iou_and_ignores_input_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    for _ in 0..50 {
        let (mut preds, mut gts) = random_case(&mut rng);
        let r = evaluate(&preds, &gts).unwrap();
        assert!(
            r.per_threshold.windows(2).all(|p| p[1].1 <= p[0].1 + 1e-15),
            "{:?}",
            r.per_threshold
        );
        assert!((0.0..=1.0).contains(&r.ap50));
        preds.shuffle(&mut rng);
        gts.shuffle(&mut rng);
        for p in &mut preds {
            p.instances.shuffle(&mut rng);
        }
        let again = evaluate(&preds, &gts).unwrap();
        assert_eq!(r.ap50, again.ap50);
        assert_eq!(r.ap_mean, again.ap_mean);
    }
}

#[test]
fn one_of_two_found_is_the_recall_plateau() {
    let gts = vec![ImageGroundTruth {
        image_id: "a".into(),
        masks: vec![block(0, 0, 10, 10), block(10, 10, 10, 10)],
    }];
    // IoU 0.9 against the first object
    let found = Mask::from_fn(20, 20, |r, c| r < 10 && c < 9);
    assert!((found.iou(&gts[0].masks[0]) - 0.9).abs() < 1e-12);
    let preds = vec![ImagePredictions {
        image_id: "a".into(),
        instances: vec![ScoredMask {
            mask: found,
            score: 1.0,
        }],
    }];
    let r = evaluate(&preds, &gts).unwrap();
    // recall points 0.00..=0.50 score precision 1, the rest score 0
    assert_eq!(r.ap50, 51.0 / 101.0);
}
