//! Central finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::FeatureMap;
use super::loss::{evaluate, Batch, Freeze, TrainRegion, TrainView};
use super::model::{EncoderConfig, EncoderParams};
use crate::data::random_axis;
use crate::embedding::HyperParams;
use crate::error::Result;
use crate::geometry::Quaternion;
use crate::pose::PoseTarget;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates where every step size crossed a kink.
    pub skipped: usize,
    pub max_rel_error: f64,
    /// Tensor name and index of the largest error.
    pub worst: Option<(String, usize)>,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares every trainable coordinate's analytic gradient with a central
/// difference. When a perturbation changes a discrete decision (ReLU
/// activity, mined set, Huber branch) the step is shrunk, up to two times.
pub fn gradient_check(
    params: &EncoderParams,
    batch: &Batch,
    hyper: &HyperParams,
    h: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let base = evaluate(params, batch, hyper, Some(Freeze::default()))?;
    let grad = base.grad.expect("gradient requested");
    let names = params.tensor_names();
    let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().cloned().collect();
    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut probe = params.clone();
    for (t, name) in names.iter().enumerate() {
        for i in 0..analytic[t].len() {
            let original = params.tensors()[t][i];
            let mut result = None;
            let mut step = h;
            for _ in 0..3 {
                probe.tensors_mut()[t][i] = original + step;
                let plus = evaluate(&probe, batch, hyper, None)?;
                probe.tensors_mut()[t][i] = original - step;
                let minus = evaluate(&probe, batch, hyper, None)?;
                probe.tensors_mut()[t][i] = original;
                if plus.pattern == base.pattern && minus.pattern == base.pattern {
                    result = Some((plus.loss.total - minus.loss.total) / (2.0 * step));
                    break;
                }
                step /= 10.0;
            }
            match result {
                Some(numeric) => {
                    report.checked += 1;
                    let e = relative_error(analytic[t][i], numeric, floor);
                    if e > report.max_rel_error {
                        report.max_rel_error = e;
                        report.worst = Some((name.clone(), i));
                    }
                }
                None => report.skipped += 1,
            }
        }
    }
    Ok(report)
}

fn random_map(rng: &mut ChaCha8Rng, cfg: &EncoderConfig) -> FeatureMap {
    let mut f = FeatureMap::zeros(cfg.in_channels, cfg.input_size, cfg.input_size);
    for v in f.data.iter_mut() {
        *v = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(-1.0..1.0) };
    }
    f
}

/// A random small network and batch covering every loss term: two classes,
/// several objects, gated and ungated pose targets.
pub fn random_problem(seed: u64) -> (EncoderParams, Batch, HyperParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EncoderConfig {
        in_channels: 4,
        input_size: 8,
        width: 4,
        conv_layers: 3,
        // Alternate global and 2x2 pooling across seeds.
        pool_grid: 1 + (seed % 2) as usize,
        // Narrower than the real 128 to keep the finite-difference sweep fast.
        embed_dim: 32,
        num_classes: 2,
        rotation_bins: 16,
    };
    let mut params = EncoderParams::init(cfg, [0.95, 0.0, 0.0, 0.0], rng.random()).expect("valid config");
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    for s in [&mut params.image, &mut params.view] {
        for (a, b) in s.pool_shift.iter_mut().zip(s.pool_scale.iter_mut()) {
            *a = rng.random_range(-0.2..0.2);
            *b = rng.random_range(0.5..2.0);
        }
    }
    for s in [&mut params.image, &mut params.view] {
        for c in &mut s.convs {
            for o in 0..c.cout {
                c.shift[o] = rng.random_range(-0.2..0.2);
                c.scale[o] = rng.random_range(0.5..2.0);
            }
        }
    }
    let mut batch = Batch::default();
    for i in 0..3u32 {
        let angle = rng.random_range(0.0..1.0);
        let delta = Quaternion::from_axis_angle(random_axis(&mut rng), angle)
            .expect("unit axis")
            .canonical();
        batch.regions.push(TrainRegion {
            input: random_map(&mut rng, &cfg),
            class_id: i % 2,
            object_id: i,
            target: PoseTarget {
                bin_index: rng.random_range(0..cfg.rotation_bins),
                delta,
                regress_mask: i != 1,
                center_delta: [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
            },
            weight: rng.random_range(0.5..2.0),
            embed: i != 2,
        });
    }
    for (view_id, object_id) in [0u32, 0, 1, 2, 2, 4, 5, 5].into_iter().enumerate() {
        batch.views.push(TrainView {
            input: random_map(&mut rng, &cfg),
            class_id: object_id % 2,
            object_id,
            view_id: view_id as u32,
        });
    }
    (params, batch, HyperParams::default())
}
