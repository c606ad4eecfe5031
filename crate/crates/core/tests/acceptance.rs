//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Set `CADMATCH_ACCEPTANCE_QUICK=1` to skip the three training runs behind
//! criteria 7 to 9 (they are then reported as SKIP).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use cadmatch_core::data::{generate_dataset, random_axis, Dataset, DatasetSpec, Split};
use cadmatch_core::embedding::{nce_loss, EmbeddingIndex, EmbeddingTag, EmbeddingVector};
use cadmatch_core::eval::{build_index, evaluate, Ablation, EvalConfig, EvalReport};
use cadmatch_core::geometry::primitives::{cuboid, cylinder, wedge};
use cadmatch_core::geometry::{quat_geodesic, sample_surface, BBox, PointCloud, Quaternion};
use cadmatch_core::image::BitMask;
use cadmatch_core::learner::{gradient_check, random_problem, train, TrainConfig, TrainOutput};
use cadmatch_core::metrics::{
    average_precision, box_iou, chamfer, f1_at, mask_iou, normal_consistency, ApGroundTruth, ApImage, ApInput,
    ApPrediction,
};
use cadmatch_core::metrics::ap::RECALL_POINTS;
use cadmatch_core::pose::{
    decode_center, decode_rotation, encode_center, encode_rotation, lift_center, CameraIntrinsics, RotationBins,
};
use cadmatch_core::HyperParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1. Analytic gradients against central differences.
fn gradients() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..20 {
        let (p, b, h) = random_problem(seed);
        let r = gradient_check(&p, &b, &h, 1e-5, 1e-6).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst < 1e-4 && secs < 60.0 && skipped * 100 <= checked,
        format!("max rel error {worst:.2e} over {checked} coordinates ({skipped} at kinks), {secs:.1}s"),
    )
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

// 2. Contrastive loss against the textbook formula.
fn nce_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = HyperParams::default();
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let dim = rng.random_range(2..9);
        let v = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let anchor = v(&mut rng);
        let n_pos = rng.random_range(1..4);
        let n_neg = rng.random_range(0..=(6 - n_pos - 1).min(3));
        let pos: Vec<Vec<f64>> = (0..n_pos).map(|_| v(&mut rng)).collect();
        let neg: Vec<Vec<f64>> = (0..n_neg).map(|_| v(&mut rng)).collect();
        let d = |x: &[f64]| cos(&anchor, x) / h.tau;
        let neg_sum: f64 = neg.iter().map(|n| d(n).exp()).sum();
        let expect: f64 = pos.iter().map(|p| -(d(p).exp() / (d(p).exp() + h.c * neg_sum)).ln()).sum();
        let pr: Vec<&[f64]> = pos.iter().map(|x| &x[..]).collect();
        let nr: Vec<&[f64]> = neg.iter().map(|x| &x[..]).collect();
        let got = nce_loss(&anchor, &pr, &nr, h.c, h.tau).map_err(|e| e.to_string())?;
        worst = worst.max((got - expect).abs());
    }
    // One positive at D = 2 and one negative at D = 1.
    let at = |d: f64| {
        let c = d * h.tau;
        vec![c, (1.0 - c * c).sqrt()]
    };
    let worked = nce_loss(&[1.0, 0.0], &[&at(2.0)], &[&at(1.0)], 1.5, h.tau).map_err(|e| e.to_string())?;
    // The commonly quoted 0.43936 rounds e^-1 to 0.3678; compare against
    // the exact value and report the gap.
    let exact = (1.0 + 1.5 * (-1.0f64).exp()).ln();
    check(
        worst < 1e-10 && (worked - exact).abs() < 1e-5,
        format!(
            "max abs error {worst:.2e} over 500 draws, worked example {worked:.6} (exact {exact:.6}, quoted 0.43936, gap {:.1e})",
            (worked - 0.43936).abs()
        ),
    )
}

// 3. Index retrieval against a linear scan.
fn retrieval_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 32;
    let mut entries = Vec::new();
    for i in 0..500u32 {
        // Coarse values make exact similarity ties common.
        let values: Vec<f64> = (0..dim).map(|_| rng.random_range(-2..=2) as f64).collect();
        let values = if values.iter().all(|&x| x == 0.0) { vec![1.0; dim] } else { values };
        entries.push(EmbeddingVector { values, tag: EmbeddingTag::ObjectView, class_id: i % 4, object_id: i / 5, view_id: i % 5 });
    }
    // Copy vectors onto other objects of the same class to force ties.
    for i in 0..20 {
        entries[400 + i].values = entries[i].values.clone();
    }
    let index = EmbeddingIndex::build(&entries).map_err(|e| e.to_string())?;
    let mut agree = 0;
    for qi in 0..1000 {
        let query: Vec<f64> = if qi % 4 == 0 {
            entries[rng.random_range(0..entries.len())].values.clone()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let class = rng.random_range(0..4u32);
        let mut best: Option<(f64, u32)> = None;
        for e in entries.iter().filter(|e| e.class_id == class) {
            let s = cos(&query, &e.values);
            best = match best {
                Some((bs, bo)) if bs > s || (bs == s && bo < e.object_id) => Some((bs, bo)),
                _ => Some((s, e.object_id)),
            };
        }
        if index.retrieve(&query, class, 1).map_err(|e| e.to_string())? == vec![best.unwrap().1] {
            agree += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(agree == 1000 && secs < 10.0, format!("{agree}/1000 agree, {secs:.2}s"))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Quaternion {
    Quaternion::from_axis_angle(random_axis(rng), rng.random_range(0.0..PI)).unwrap()
}

// 4. Pose codec round trips.
fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let theta = HyperParams::default().theta;
    let bins = RotationBins::from_map(BTreeMap::from([(0u32, (0..16).map(|_| random_rotation(&mut rng)).collect())]))
        .map_err(|e| e.to_string())?;
    let (mut gated, mut worst_rot) = (0, 0.0f64);
    for _ in 0..10_000 {
        let truth = random_rotation(&mut rng);
        let t = encode_rotation(truth, &bins, 0, theta).map_err(|e| e.to_string())?;
        if t.regress_mask {
            gated += 1;
            let back = decode_rotation(t.bin_index, t.delta.to_array(), &bins, 0).map_err(|e| e.to_string())?;
            worst_rot = worst_rot.max(quat_geodesic(back, truth).map_err(|e| e.to_string())?);
        }
    }
    let intr = CameraIntrinsics::centered(160.0, 128, 128).map_err(|e| e.to_string())?;
    let mut worst_center = 0.0f64;
    for _ in 0..10_000 {
        let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(3.0..12.0)];
        let px = intr.project(p).map_err(|e| e.to_string())?;
        let (w, h) = (rng.random_range(5.0..60.0), rng.random_range(5.0..60.0));
        let b = BBox::new(
            px[0] - rng.random_range(0.0..w),
            px[1] - rng.random_range(0.0..h),
            px[0] + rng.random_range(0.1..w),
            px[1] + rng.random_range(0.1..h),
        )
        .map_err(|e| e.to_string())?;
        let d = encode_center(&b, px).map_err(|e| e.to_string())?;
        let back = lift_center(decode_center(&b, d).map_err(|e| e.to_string())?, p[2], &intr).map_err(|e| e.to_string())?;
        worst_center = worst_center.max((0..3).map(|i| (back[i] - p[i]).abs()).fold(0.0, f64::max));
    }
    check(
        gated > 0 && worst_rot < 1e-9 && worst_center < 1e-9,
        format!("{gated} gated rotations, max geodesic {worst_rot:.1e} rad, max centre error {worst_center:.1e}"),
    )
}

/// Greedy matching then 101-point interpolation, written out directly.
fn brute_ap(preds: &[(f64, usize)], num_gt: usize) -> f64 {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].0.total_cmp(&preds[a].0));
    let mut taken = vec![false; num_gt];
    let (mut tp, mut curve) = (0, Vec::new());
    for (rank, &i) in order.iter().enumerate() {
        let g = preds[i].1;
        if g < num_gt && !taken[g] {
            taken[g] = true;
            tp += 1;
        }
        curve.push((tp as f64 / num_gt as f64, tp as f64 / (rank + 1) as f64));
    }
    let mut total = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        total += curve.iter().filter(|c| c.0 >= r).map(|c| c.1).fold(0.0, f64::max);
    }
    total / RECALL_POINTS as f64
}

// 5. Metric identities and hand cases.
fn metric_identities() -> Outcome {
    let mut worst = 0.0f64;
    for (i, mesh) in [cuboid([1.0, 0.5, 0.3]), cylinder(0.4, 1.5, 16), wedge(1.0, 0.6, 0.8)].iter().enumerate() {
        let a = sample_surface(mesh, 2000, i as u64).map_err(|e| e.to_string())?;
        let b = sample_surface(mesh, 2000, 100 + i as u64).map_err(|e| e.to_string())?;
        worst = worst.max(chamfer(&a, &a).map_err(|e| e.to_string())?);
        worst = worst.max((1.0 - f1_at(&a, &a, 0.1).map_err(|e| e.to_string())?).abs());
        let flipped = PointCloud::new(
            b.points.clone(),
            b.normals.as_ref().map(|n| n.iter().map(|v| [-v[0], -v[1], -v[2]]).collect()),
        )
        .map_err(|e| e.to_string())?;
        let nc = normal_consistency(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((nc - normal_consistency(&a, &flipped).map_err(|e| e.to_string())?).abs());
    }
    let b1 = BBox::new(0.0, 0.0, 2.0, 1.0).unwrap();
    let b2 = BBox::new(1.0, 0.0, 3.0, 1.0).unwrap();
    worst = worst.max((box_iou(&b1, &b2) - 1.0 / 3.0).abs());
    let (mut m1, mut m2) = (BitMask::new(3, 1), BitMask::new(3, 1));
    for x in 0..2 {
        m1.set(x, 0, true);
        m2.set(x + 1, 0, true);
    }
    worst = worst.max((mask_iou(&m1, &m2).map_err(|e| e.to_string())? - 1.0 / 3.0).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2000 {
        let num_gt = rng.random_range(1..5);
        let n = rng.random_range(0..=10);
        // Payload is the ground truth a prediction hits, or a miss past the end.
        let preds: Vec<(f64, usize)> =
            (0..n).map(|_| ((rng.random_range(0..6) as f64) / 5.0, rng.random_range(0..num_gt + 2))).collect();
        let input = ApInput {
            images: vec![ApImage {
                image_id: 0,
                predictions: preds
                    .iter()
                    .map(|&(confidence, payload)| ApPrediction { class_id: 0, confidence, payload })
                    .collect(),
                ground_truths: (0..num_gt).map(|g| ApGroundTruth { class_id: 0, payload: g }).collect(),
            }],
        };
        let ap = average_precision(&input, 0.5, |p, g| if p == g { 1.0 } else { 0.0 }).map_err(|e| e.to_string())?;
        worst = worst.max((ap.mean - brute_ap(&preds, num_gt)).abs());
    }
    check(worst < 1e-12, format!("largest deviation {worst:.1e}"))
}

// 6. Default constants.
fn defaults() -> Outcome {
    let h = HyperParams::default();
    let ok = h.tau == 0.15
        && h.c == 1.5
        && h.huber_delta == 0.15
        && h.rotation_bins == 16
        && h.theta == PI / 6.0
        && h.canonical_views == 16
        && h.q == 8
        && h.p_h == 32
        && h.n_h == 128
        && h.repeat_threshold == 0.1
        && h.n_k == 1
        && (h.weight_embed, h.weight_pose_class, h.weight_pose_reg) == (0.5, 0.25, 5.0)
        && h.base_lr == 0.08
        && h.lr_decay == 0.1;
    check(ok, format!("{h:?}"))
}

struct Run {
    out: TrainOutput,
    elapsed: Duration,
}

fn report(data: &Dataset, run: &Run, split: Split, heldout: bool, ablation: Ablation) -> Result<EvalReport, String> {
    let index = build_index(&run.out.params, data, heldout, &Default::default()).map_err(|e| e.to_string())?;
    let cfg = EvalConfig { split, ablation, ..EvalConfig::default() };
    Ok(evaluate(&run.out.params, &run.out.bins, data, &index, heldout, &cfg).map_err(|e| e.to_string())?.0)
}

// 7. Desk-scale end-to-end run on the calibration seed.
fn end_to_end(data: &Dataset, run: &Run) -> Outcome {
    let r = report(data, run, Split::Val, false, Ablation::NONE)?;
    let secs = run.elapsed.as_secs_f64();
    let steps = run.out.trace.len();
    check(
        steps <= 3000
            && secs < 900.0
            && r.retrieval_top1 >= 0.85
            && r.median_rotation_error_deg <= 15.0
            && r.mesh_ap.ap50.mean >= 0.7,
        format!(
            "{steps} steps in {secs:.0}s, top-1 {:.3} (>= 0.85), median rotation {:.2} deg (<= 15), AP50 {:.3} (>= 0.7)",
            r.retrieval_top1, r.median_rotation_error_deg, r.mesh_ap.ap50.mean
        ),
    )
}

// 8. Adding held-out CADs to the index helps on unseen objects.
fn enlarged_index(data: &Dataset, runs: &[Run]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (seed, run) in runs.iter().enumerate() {
        let base = report(data, run, Split::Unseen, false, Ablation::NONE)?.mesh_ap.ap.mean;
        let full = report(data, run, Split::Unseen, true, Ablation::NONE)?.mesh_ap.ap.mean;
        ok &= full >= base;
        parts.push(format!("seed {seed}: {full:.3} vs {base:.3}"));
    }
    check(ok, format!("AP with / without held-out CADs, {}", parts.join("; ")))
}

// 9. Each ground-truth substitution helps.
fn ablations(data: &Dataset, runs: &[Run]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (seed, run) in runs.iter().enumerate() {
        let base = report(data, run, Split::Val, false, Ablation::NONE)?.mesh_ap.ap.mean;
        let mut line = format!("seed {seed}: none {base:.3}");
        for (name, ab) in [
            ("shape", Ablation { gt_shape: true, ..Ablation::NONE }),
            ("rotation", Ablation { gt_rotation: true, ..Ablation::NONE }),
            ("translation", Ablation { gt_translation: true, ..Ablation::NONE }),
        ] {
            let ap = report(data, run, Split::Val, false, ab)?.mesh_ap.ap.mean;
            ok &= ap >= base;
            line.push_str(&format!(" {name} {ap:.3}"));
        }
        parts.push(line);
    }
    check(ok, parts.join("; "))
}

fn main() {
    let mut failed = 0;
    let mut emit = |n: usize, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("PASS [{n}] {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL [{n}] {name}: {d}");
            }
        }
    };
    emit(1, "gradient check", gradients());
    emit(2, "contrastive loss oracle", nce_oracle());
    emit(3, "retrieval oracle", retrieval_oracle());
    emit(4, "pose codec round trip", codec());
    emit(5, "metric identities", metric_identities());
    emit(6, "default hyperparameters", defaults());

    let names = ["end-to-end desk-scale run", "enlarged index on unseen objects", "ground-truth ablations"];
    if std::env::var_os("CADMATCH_ACCEPTANCE_QUICK").is_some() {
        for (i, name) in names.iter().enumerate() {
            println!("SKIP [{}] {name}", i + 7);
        }
    } else {
        let data = generate_dataset(&DatasetSpec::default()).expect("calibration dataset");
        let runs: Result<Vec<Run>, String> = (0..3)
            .map(|seed| {
                let t = Instant::now();
                let out = train(&TrainConfig { seed, ..TrainConfig::tuned() }, &data).map_err(|e| e.to_string())?;
                Ok(Run { out, elapsed: t.elapsed() })
            })
            .collect();
        match runs {
            Ok(runs) => {
                emit(7, names[0], end_to_end(&data, &runs[0]));
                emit(8, names[1], enlarged_index(&data, &runs));
                emit(9, names[2], ablations(&data, &runs));
            }
            Err(e) => {
                for (i, name) in names.iter().enumerate() {
                    emit(i + 7, name, Err(format!("training failed: {e}")));
                }
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
