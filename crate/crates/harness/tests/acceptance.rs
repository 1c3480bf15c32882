//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use pseudomask::affinity::{cosine_affinity, sharpen, spatial_importance, AFFINITY_FLOOR};
use pseudomask::augment::{alpha_blend_paste, soft_target_bce, AugmentError};
use pseudomask::confidence::{clamp_confidence, expand_mask};
use pseudomask::localcut::dinic_mincut;
use pseudomask::ncut::{solve_second_eigvec, SolverOptions};
use pseudomask::{
    process_image, run_batch, AffinityMatrix, ExponentCombine, FeatureMap, Grid, ImageRgb, Mask,
    PipelineConfig, SpatialConfidenceMap, SpatialImportanceMap,
};
use pseudomask_harness::io::{evaluate_dirs, read_ground_truth, read_predictions, write_corpus};
use pseudomask_harness::oracle::generalized_residual;
use pseudomask_harness::random::{random_affinity, random_flow_graph};
use pseudomask_harness::stages::first_sweep;
use pseudomask_harness::{
    brute_force_mincut, dense_second_eigvec, generate_corpus, generate_scene, SceneParams, Template,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

fn main() {
    let work = tempfile::tempdir().expect("temporary directory");
    let checks: Vec<(&str, Check)> = vec![
        ("min-cut correctness", Box::new(mincut)),
        ("eigensolver correctness", Box::new(eigensolver)),
        (
            "central claim (adjacent twins)",
            Box::new(|| central_claim(work.path())),
        ),
        (
            "spatial importance properties",
            Box::new(spatial_importance_props),
        ),
        (
            "spatial confidence properties",
            Box::new(spatial_confidence_props),
        ),
        ("loss verification", Box::new(loss)),
        ("blending", Box::new(blending)),
        (
            "determinism across worker counts",
            Box::new(|| determinism(work.path())),
        ),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn mincut() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut max_n = 0;
    for case in 0..200 {
        let n = rng.random_range(2..=12);
        let density = rng.random_range(0.15..0.9);
        let g = random_flow_graph(&mut rng, n, density, 25);
        let fast = dinic_mincut(&g);
        let brute = brute_force_mincut(&g).map_err(|e| e.to_string())?;
        ensure(fast.cut_value == brute.cut_value, || {
            format!(
                "case {case}: dinic {} vs brute force {}",
                fast.cut_value, brute.cut_value
            )
        })?;
        ensure(fast.flow_value == fast.cut_value, || {
            format!(
                "case {case}: flow {} ≠ cut {}",
                fast.flow_value, fast.cut_value
            )
        })?;
        ensure(g.cut_capacity(&fast.source_side) == brute.cut_value, || {
            format!("case {case}: partition capacity differs")
        })?;
        ensure(
            fast.source_side[g.source()] && !fast.source_side[g.sink()],
            || format!("case {case}: terminals misplaced"),
        )?;
        max_n = max_n.max(n);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "200 graphs up to n={max_n} exact in {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn eigensolver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let matrices: Vec<AffinityMatrix<f64>> = (0..50)
        .map(|i| {
            let n = if i == 0 {
                400
            } else {
                rng.random_range(2..=400)
            };
            random_affinity(&mut rng, n)
        })
        .collect();
    let opts = SolverOptions::default();
    let stats: Vec<Result<(f64, f64, f64), String>> = matrices
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let nodes: Vec<usize> = (0..w.n()).collect();
            let got =
                solve_second_eigvec(w, &nodes, &opts).map_err(|e| format!("matrix {i}: {e}"))?;
            let want = dense_second_eigvec(w).map_err(|e| format!("matrix {i}: {e}"))?;
            let dl = (got.eigenvalue - want.eigenvalue).abs();
            let dot: f64 = got
                .vector
                .iter()
                .zip(&want.vector)
                .map(|(a, b)| a * b)
                .sum();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cos = dot.abs() / (norm(&got.vector) * norm(&want.vector));
            let residual = generalized_residual(w, &got.vector, got.eigenvalue).max(got.residual);
            Ok((dl, cos, residual))
        })
        .collect();
    let (mut max_dl, mut min_cos, mut max_res) = (0.0f64, 1.0f64, 0.0f64);
    for (i, s) in stats.into_iter().enumerate() {
        let (dl, cos, res) = s?;
        ensure(dl <= 1e-8, || {
            format!("matrix {i} (n={}): |Δλ| = {dl:e}", matrices[i].n())
        })?;
        ensure(cos >= 1.0 - 1e-8, || {
            format!("matrix {i} (n={}): |cos| = {cos}", matrices[i].n())
        })?;
        ensure(res <= 1e-6, || {
            format!("matrix {i} (n={}): residual {res:e}", matrices[i].n())
        })?;
        max_dl = max_dl.max(dl);
        min_cos = min_cos.min(cos);
        max_res = max_res.max(res);
    }

    let mut two_node = 0;
    for k in 1..10_000 {
        let w = k as f64 / 10_000.0;
        let m = AffinityMatrix::from_vec(1, 2, vec![1.0, w, w, 1.0]).expect("2x2");
        let e = solve_second_eigvec(&m, &[0, 1], &opts).map_err(|e| format!("w={w}: {e}"))?;
        let want = 2.0 * w / (1.0 + w);
        ensure(e.eigenvalue == want, || {
            format!("w={w}: λ = {:e}, closed form {:e}", e.eigenvalue, want)
        })?;
        two_node += 1;
    }
    Ok(format!(
        "50 matrices: max |Δλ| {max_dl:.1e}, min |cos| 1-{:.1e}, max residual {max_res:.1e}; {two_node} two-node cases exact",
        1.0 - min_cos
    ))
}

const CORPUS_SEED: u64 = 1000;
const CORPUS_SIZE: usize = 50;

fn central_claim(work: &Path) -> Outcome {
    let scenes = generate_corpus(
        CORPUS_SEED,
        CORPUS_SIZE,
        Template::AdjacentTwins,
        &SceneParams::default(),
    )
    .map_err(|e| e.to_string())?;
    let corpus = work.join("corpus");
    let manifest = write_corpus(&corpus, &scenes).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let full = run_batch(&manifest, &work.join("full4"), &PipelineConfig::default())
        .map_err(|e| e.to_string())?;
    let full_time = start.elapsed();
    let baseline = run_batch(
        &manifest,
        &work.join("baseline"),
        &PipelineConfig::semantic_only(),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(
        full.failures.is_empty() && baseline.failures.is_empty(),
        || format!("failures: {:?} {:?}", full.failures, baseline.failures),
    )?;

    let gts = read_ground_truth(&corpus).map_err(|e| e.to_string())?;
    let by_id = |dir: &Path| -> Result<BTreeMap<String, Vec<Mask>>, String> {
        Ok(read_predictions(dir)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p| {
                (
                    p.image_id,
                    p.instances.into_iter().map(|i| i.mask).collect(),
                )
            })
            .collect())
    };
    let full_preds = by_id(&work.join("full4"))?;
    let base_preds = by_id(&work.join("baseline"))?;

    let mut merged = 0;
    let mut separated = 0;
    let mut min_iou = f64::INFINITY;
    for gt in &gts {
        ensure(gt.masks.len() == 2, || {
            format!("{}: {} planted instances", gt.image_id, gt.masks.len())
        })?;
        if base_preds.get(&gt.image_id).map_or(0, Vec::len) == 1 {
            merged += 1;
        }
        let preds = full_preds.get(&gt.image_id).cloned().unwrap_or_default();
        if preds.len() == 2 {
            // both pairings; the better one decides
            let a = preds[0].iou(&gt.masks[0]).min(preds[1].iou(&gt.masks[1]));
            let b = preds[0].iou(&gt.masks[1]).min(preds[1].iou(&gt.masks[0]));
            let iou = a.max(b);
            min_iou = min_iou.min(iou);
            if iou >= 0.9 {
                separated += 1;
            }
        }
    }
    let full_ap = evaluate_dirs(&work.join("full4"), &corpus).map_err(|e| e.to_string())?;
    let base_ap = evaluate_dirs(&work.join("baseline"), &corpus).map_err(|e| e.to_string())?;
    let detail = format!(
        "baseline merged {merged}/{CORPUS_SIZE}, AP50 {:.4}; full separated {separated}/{CORPUS_SIZE} (min IoU {min_iou:.3}), \
         AP50 {:.4}, AP {:.4}; full {:.1}s, total {:.1}s",
        base_ap.ap50,
        full_ap.ap50,
        full_ap.ap_mean,
        full_time.as_secs_f64(),
        elapsed.as_secs_f64()
    );
    ensure(merged == CORPUS_SIZE, || {
        format!("baseline did not always merge: {detail}")
    })?;
    ensure(separated * 10 >= CORPUS_SIZE * 9, || {
        format!("too few scenes separated: {detail}")
    })?;
    ensure(full_ap.ap50 >= 0.95, || {
        format!("full AP50 too low: {detail}")
    })?;
    ensure(base_ap.ap50 <= 0.55, || {
        format!("baseline AP50 too high: {detail}")
    })?;
    ensure(elapsed < Duration::from_secs(300), || {
        format!("too slow: {detail}")
    })?;
    Ok(detail)
}

fn random_depth(rng: &mut ChaCha8Rng) -> Grid<f64> {
    let (h, w) = (rng.random_range(2..=40), rng.random_range(2..=40));
    match rng.random_range(0..3) {
        0 => Grid::from_fn(h, w, |_, _| rng.random::<f64>()),
        1 => {
            let (lo, hi) = (rng.random_range(0.0..0.5), rng.random_range(0.5..1.0));
            let edge = rng.random_range(1..w.max(2));
            Grid::from_fn(h, w, |_, c| if c < edge { lo } else { hi })
        }
        _ => {
            let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
            Grid::from_fn(h, w, |r, c| if r >= r0 && c >= c0 { 0.3 } else { 0.8 })
        }
    }
}

fn spatial_importance_props() -> Outcome {
    let beta = 0.45;
    for (h, w) in [(1, 1), (1, 9), (5, 7), (32, 32), (60, 60)] {
        for value in [0.0, 0.3, 0.731, 1.0] {
            let map = spatial_importance(&Grid::filled(h, w, value), 2.0, beta);
            ensure(map.values().as_slice().iter().all(|&v| v == beta), || {
                format!(
                    "constant depth {value} on {h}x{w} gave {:?}",
                    map.values().min_max()
                )
            })?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut maps = 0;
    for case in 0..100 {
        let depth = random_depth(&mut rng);
        let (lo, hi) = depth.min_max();
        if lo == hi {
            continue;
        }
        let map = spatial_importance(&depth, 2.0, beta);
        let (mlo, mhi) = map.values().min_max();
        ensure(mhi == 1.0, || format!("case {case}: max importance {mhi}"))?;
        ensure(mlo >= beta, || format!("case {case}: min importance {mlo}"))?;
        maps += 1;
    }

    let mut entries = 0usize;
    for case in 0..40 {
        let (h, w) = (rng.random_range(2..=12), rng.random_range(2..=12));
        let patches: Vec<Vec<f64>> = (0..h * w)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let features = FeatureMap::from_patches(h, w, &patches).expect("patch grid");
        let raw = cosine_affinity(&features).map_err(|e| e.to_string())?;
        let clamped: Vec<f64> = raw
            .as_slice()
            .iter()
            .map(|v| v.clamp(AFFINITY_FLOOR, 1.0))
            .collect();
        let depth = Grid::from_fn(h, w, |_, _| rng.random::<f64>());
        let importance = spatial_importance(&depth, 2.0, beta);
        for combine in [
            ExponentCombine::Max,
            ExponentCombine::Mean,
            ExponentCombine::GeometricMean,
        ] {
            let sharp = sharpen(raw.clone(), &importance, combine);
            for (k, (&s, &c)) in sharp.as_slice().iter().zip(&clamped).enumerate() {
                ensure(s >= c, || {
                    format!("case {case} {combine:?}: entry {k} dropped from {c} to {s}")
                })?;
                entries += 1;
            }
        }

        for value in [beta, 0.7, 0.99] {
            let sharp = sharpen(
                raw.clone(),
                &SpatialImportanceMap::uniform(h, w, value),
                ExponentCombine::Max,
            );
            let mut order: Vec<usize> = (0..clamped.len()).collect();
            order.sort_by(|&a, &b| clamped[a].total_cmp(&clamped[b]));
            for pair in order.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let (sa, sb) = (sharp.as_slice()[a], sharp.as_slice()[b]);
                let kept = if clamped[a] == clamped[b] {
                    sa == sb
                } else {
                    sa <= sb
                };
                ensure(kept, || {
                    format!("case {case} importance {value}: order of {a} and {b} flipped")
                })?;
            }
        }
    }
    Ok(format!("constant maps ≡ β; {maps} non-constant maps reach 1; {entries} sharpened entries ≥ clamped; order kept"))
}

fn spatial_confidence_props() -> Outcome {
    let params = SceneParams::default();
    let cfg = PipelineConfig {
        crf: false,
        ..PipelineConfig::default()
    };
    let steps = cfg.t_steps as f64;
    let mut sweeps = 0;
    let mut banded = 0;
    for template in [
        Template::AdjacentTwins,
        Template::SingleBlob,
        Template::RampBlob,
    ] {
        for seed in 0..10u64 {
            let scene = generate_scene(500 + seed, template, &params).map_err(|e| e.to_string())?;
            let sweep = first_sweep(&scene, &cfg).map_err(|e| format!("{}: {e}", scene.id))?;
            let values = sweep.confidence.values().as_slice();
            for (node, (&v, &count)) in values.iter().zip(&sweep.counts).enumerate() {
                let scaled = v * steps;
                ensure(
                    (scaled - scaled.round()).abs() <= 1e-9 && scaled.round() == count as f64,
                    || {
                        format!(
                            "{}: node {node} has T·SC = {scaled}, count {count}",
                            scene.id
                        )
                    },
                )?;
                ensure(count as usize <= cfg.t_steps, || {
                    format!("{}: node {node} count {count}", scene.id)
                })?;
            }
            sweeps += 1;

            let set = process_image(&scene.id, &scene.features, &scene.depth, &scene.image, &cfg)
                .map_err(|e| format!("{}: {e}", scene.id))?;
            ensure(!set.instances.is_empty(), || {
                format!("{}: no instances", scene.id)
            })?;
            for inst in &set.instances {
                let region = inst.confidence.region();
                let floor_ok = region
                    .nodes()
                    .all(|n| inst.confidence.values().as_slice()[n] >= cfg.sc_min);
                ensure(floor_ok, || {
                    format!("{}: confidence below the floor", scene.id)
                })?;
            }

            match template {
                Template::RampBlob => {
                    let planted = &scene.planted[0];
                    let ramp = planted.ramp.expect("ramp scenes carry a ramp");
                    let (h, w) = scene.grid_dims();
                    // the object grown by one patch; uncertainty must not appear elsewhere
                    let near = Mask::from_fn(h, w, |r, c| {
                        r + 1 >= planted.rect.row
                            && r <= planted.rect.row + planted.rect.height
                            && c + 1 >= planted.rect.col
                            && c <= planted.rect.col + planted.rect.width
                    });
                    let first = planted.rect.col + planted.rect.width - ramp.columns;
                    let in_ramp = |n: usize| n % w >= first && planted.rect.contains(n / w, n % w);
                    let unsure: Vec<usize> = sweep
                        .confidence
                        .region()
                        .nodes()
                        .filter(|&n| values[n] < 1.0)
                        .collect();
                    ensure(!unsure.is_empty(), || {
                        format!("{}: no uncertain patches", scene.id)
                    })?;
                    ensure(unsure.iter().all(|&n| near.contains(n)), || {
                        format!(
                            "{}: uncertain patches away from the object: {:?}",
                            scene.id, unsure
                        )
                    })?;
                    ensure(unsure.iter().any(|&n| in_ramp(n)), || {
                        format!("{}: no uncertain patch in the ramp columns", scene.id)
                    })?;
                    banded += 1;
                }
                _ => {
                    for inst in &set.instances {
                        let crisp = inst
                            .mask
                            .nodes()
                            .all(|n| inst.confidence.values().as_slice()[n] == 1.0);
                        ensure(crisp, || {
                            format!("{}: instance {} has SC < 1", scene.id, inst.instance_index)
                        })?;
                    }
                }
            }
        }
    }

    let (h, w) = (6, 6);
    let region = Mask::from_fn(h, w, |r, c| r > 0 && c > 0);
    let raw = SpatialConfidenceMap::new(
        Grid::from_fn(h, w, |r, c| ((r + c) % 7) as f64 / 6.0),
        region.clone(),
    )
    .expect("same dims");
    let clamped = clamp_confidence(&raw, cfg.sc_min);
    for n in 0..h * w {
        let (before, after) = (raw.values().as_slice()[n], clamped.values().as_slice()[n]);
        let want = if region.contains(n) {
            before.max(cfg.sc_min)
        } else {
            0.0
        };
        ensure(after == want, || {
            format!("clamp at node {n}: {before} became {after}")
        })?;
    }
    Ok(format!("{sweeps} sweeps integral; crisp scenes SC ≡ 1; {banded} ramp scenes uncertain on the object incl. ramp columns; floor 0.5 held"))
}

fn loss() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let h_step = 1e-5;
    let mut worst = 0.0f64;
    for case in 0..100 {
        let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let pred = Grid::from_fn(h, w, |_, _| rng.random_range(0.05..0.95));
        let target = Mask::from_fn(h, w, |_, _| rng.random_bool(0.5));
        let region = Mask::from_fn(h, w, |_, _| rng.random_bool(0.7));
        let sc = SpatialConfidenceMap::new(
            Grid::from_fn(h, w, |_, _| rng.random_range(0.0..=1.0)),
            region,
        )
        .expect("same dims");
        let (_, grad) = soft_target_bce(&pred, &target, &sc).map_err(|e| e.to_string())?;
        for i in 0..h * w {
            let at = |delta: f64| {
                let mut p = pred.clone();
                p.as_mut_slice()[i] += delta;
                soft_target_bce(&p, &target, &sc).expect("same dims").0
            };
            let fd = (at(h_step) - at(-h_step)) / (2.0 * h_step);
            let g = grad.as_slice()[i];
            let scale = g.abs().max(fd.abs());
            let rel = if scale == 0.0 {
                0.0
            } else {
                (g - fd).abs() / scale
            };
            ensure(rel <= 1e-4, || {
                format!("case {case} pixel {i}: analytic {g}, finite difference {fd}")
            })?;
            worst = worst.max(rel);
        }

        for certain in [
            SpatialConfidenceMap::certain(&Mask::full(h, w)),
            SpatialConfidenceMap::certain(&Mask::empty(h, w)),
        ] {
            let (got, got_grad) =
                soft_target_bce(&pred, &target, &certain).map_err(|e| e.to_string())?;
            let mut want = 0.0;
            for (i, &p) in pred.as_slice().iter().enumerate() {
                let t = target.as_slice()[i];
                want += if t { -p.ln() } else { -(1.0 - p).ln() };
                let want_grad = if t {
                    (p - 1.0) / (p * (1.0 - p))
                } else {
                    p / (p * (1.0 - p))
                };
                ensure(got_grad.as_slice()[i] == want_grad, || {
                    format!("case {case}: unweighted gradient differs at {i}")
                })?;
            }
            ensure(got == want, || {
                format!("case {case}: SC ≡ 1 loss {got} vs unweighted {want}")
            })?;
        }
    }
    Ok(format!("100 instances, worst relative gradient error {worst:.1e}; SC ≡ 1 equals plain BCE bit for bit"))
}

fn blending() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut trials = 0;
    let mut pasted_pixels = 0usize;
    for case in 0..200 {
        let (gh, gw) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let stride = rng.random_range(1..=6);
        let (sh, sw) = (gh * stride, gw * stride);
        let (dh, dw) = (rng.random_range(4..=48), rng.random_range(4..=48));
        let mut color = |h: usize, w: usize| {
            ImageRgb::from_fn(h, w, |_, _| std::array::from_fn(|_| rng.random::<f64>()))
        };
        let src = color(sh, sw);
        let dst = color(dh, dw);
        let mask = Mask::from_fn(gh, gw, |_, _| rng.random_bool(0.6));
        if !mask.any() {
            continue;
        }
        let sc = SpatialConfidenceMap::new(
            Grid::from_fn(gh, gw, |_, _| rng.random::<f64>()),
            mask.clone(),
        )
        .expect("same dims");
        let scale = rng.random_range(0.3..2.0);
        // centred so most pastes land on the canvas
        let offset = (
            rng.random_range(-(sw as i64) / 2..dw as i64 / 2),
            rng.random_range(-(sh as i64) / 2..dh as i64 / 2),
        );
        let soft = match alpha_blend_paste(&src, &dst, &mask, &sc, scale, offset) {
            Ok(c) => c.image,
            Err(AugmentError::DegenerateScale { .. }) => continue,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        let zero =
            SpatialConfidenceMap::new(Grid::filled(gh, gw, 0.0), mask.clone()).expect("same dims");
        let identity = alpha_blend_paste(&src, &dst, &mask, &zero, scale, offset)
            .map_err(|e| e.to_string())?
            .image;
        let hard = alpha_blend_paste(
            &src,
            &dst,
            &mask,
            &SpatialConfidenceMap::certain(&mask),
            scale,
            offset,
        )
        .map_err(|e| e.to_string())?
        .image;
        ensure(identity == dst, || {
            format!("case {case}: SC ≡ 0 changed the destination")
        })?;

        let pixel_mask = expand_mask(&mask, sh, sw);
        let source_of = |y: usize, x: usize| -> Option<(usize, usize)> {
            let sy = ((y as f64 - offset.1 as f64 + 0.5) / scale).floor();
            let sx = ((x as f64 - offset.0 as f64 + 0.5) / scale).floor();
            let inside = sy >= 0.0 && sx >= 0.0 && sy < sh as f64 && sx < sw as f64;
            (inside && pixel_mask.get(sy as usize, sx as usize))
                .then_some((sy as usize, sx as usize))
        };
        for y in 0..dh {
            for x in 0..dw {
                let (d, out, pasted) = (dst.get(y, x), soft.get(y, x), hard.get(y, x));
                match source_of(y, x) {
                    Some((sy, sx)) => {
                        let s = src.get(sy, sx);
                        for ch in 0..3 {
                            let (lo, hi) = (s[ch].min(d[ch]), s[ch].max(d[ch]));
                            ensure(out[ch] >= lo && out[ch] <= hi, || {
                                format!("case {case}: ({y}, {x}) channel {ch} = {} outside [{lo}, {hi}]", out[ch])
                            })?;
                        }
                        ensure(pasted == s, || {
                            format!("case {case}: hard paste at ({y}, {x}) is not the source")
                        })?;
                        pasted_pixels += 1;
                    }
                    None => {
                        ensure(out == d && pasted == d, || {
                            format!("case {case}: ({y}, {x}) changed outside the instance")
                        })?;
                    }
                }
            }
        }
        trials += 1;
    }
    ensure(trials >= 100, || format!("only {trials} usable trials"))?;
    Ok(format!("{trials} pastes, {pasted_pixels} blended pixels within bounds; SC ≡ 0 identity and SC ≡ 1 hard paste exact"))
}

fn determinism(work: &Path) -> Outcome {
    let manifest = work
        .join("corpus")
        .join(pseudomask_harness::io::MANIFEST_FILE);
    if !manifest.is_file() {
        let scenes = generate_corpus(
            CORPUS_SEED,
            CORPUS_SIZE,
            Template::AdjacentTwins,
            &SceneParams::default(),
        )
        .map_err(|e| e.to_string())?;
        write_corpus(&work.join("corpus"), &scenes).map_err(|e| e.to_string())?;
    }
    let four = work.join("full4");
    if !four.join(pseudomask::pipeline::SUMMARY_FILE).is_file() {
        run_batch(&manifest, &four, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    }
    let one = work.join("full1");
    run_batch(
        &manifest,
        &one,
        &PipelineConfig {
            worker_count: 1,
            ..PipelineConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;

    let a = snapshot(&four).map_err(|e| e.to_string())?;
    let b = snapshot(&one).map_err(|e| e.to_string())?;
    ensure(a.keys().eq(b.keys()), || {
        format!("file sets differ: {:?} vs {:?}", a.keys(), b.keys())
    })?;
    let mut bytes = 0;
    for (name, content) in &a {
        ensure(*content == b[name], || format!("{name} differs"))?;
        bytes += content.len();
    }
    Ok(format!("{} files, {bytes} bytes identical for 1 and 4 workers (wall time and worker count excluded)", a.len()))
}

/// Every output file by relative path. The summary and resolved config are stripped of
/// the wall time and the worker count, which describe the run rather than its result.
fn snapshot(dir: &Path) -> std::io::Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let name = path
                .strip_prefix(dir)
                .expect("inside dir")
                .to_string_lossy()
                .into_owned();
            let mut content = fs::read(&path)?;
            if name == pseudomask::pipeline::SUMMARY_FILE {
                let mut v: serde_json::Value = serde_json::from_slice(&content)?;
                v.as_object_mut().map(|o| o.remove("wall_time_s"));
                v.get_mut("config")
                    .and_then(|c| c.as_object_mut())
                    .map(|o| o.remove("worker_count"));
                content = serde_json::to_vec(&v)?;
            } else if name == pseudomask::pipeline::RESOLVED_CONFIG_FILE {
                let text = String::from_utf8_lossy(&content);
                content = text
                    .lines()
                    .filter(|l| !l.starts_with("worker_count"))
                    .collect::<Vec<_>>()
                    .join("\n")
                    .into_bytes();
            }
            out.insert(name, content);
        }
    }
    Ok(out)
}
