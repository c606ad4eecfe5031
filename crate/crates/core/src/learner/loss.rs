//! Combined training objective over a batch of regions and views.

use serde::{Deserialize, Serialize};

use super::features::FeatureMap;
use super::model::{heads_backward, heads_forward, stream_backward, stream_forward, EncoderParams, StreamCache};
use crate::embedding::{mine_hard, nce_loss_with_grad, Candidate, HyperParams};
use crate::error::{Error, Result};
use crate::pose::{pose_loss, PoseTarget};

/// An image region with its pose targets; `input` is already mask-gated.
#[derive(Debug, Clone)]
pub struct TrainRegion {
    pub input: FeatureMap,
    pub class_id: u32,
    pub object_id: u32,
    pub target: PoseTarget,
    /// Per-example weight (1 when rebalancing is done by sampling).
    pub weight: f64,
    /// False for regions that only train the pose and centre heads.
    pub embed: bool,
}

/// A rendered object view; `input` is already mask-gated.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub input: FeatureMap,
    pub class_id: u32,
    pub object_id: u32,
    pub view_id: u32,
}

#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub regions: Vec<TrainRegion>,
    pub views: Vec<TrainView>,
}

/// Loss value and its weighted parts, each averaged over regions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub embed: f64,
    pub pose_class: f64,
    pub pose_reg: f64,
    pub center: f64,
}

/// Which parameter groups receive no gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Freeze {
    pub image_stream: bool,
    pub view_stream: bool,
    pub heads: bool,
}

/// Forward pass result with enough state for the backward pass.
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub grad: Option<EncoderParams>,
    /// Discrete decisions (ReLU activity, mined sets, Huber branches);
    /// the loss is smooth wherever this stays constant.
    pub pattern: Vec<bool>,
    /// Mined positive and negative counts per region.
    pub mined: Vec<(usize, usize)>,
}

pub fn total_loss(params: &EncoderParams, batch: &Batch, hyper: &HyperParams) -> Result<LossBreakdown> {
    Ok(evaluate(params, batch, hyper, None)?.loss)
}

pub fn backward(
    params: &EncoderParams,
    batch: &Batch,
    hyper: &HyperParams,
    freeze: Freeze,
) -> Result<(LossBreakdown, EncoderParams)> {
    let e = evaluate(params, batch, hyper, Some(freeze))?;
    Ok((e.loss, e.grad.expect("gradient requested")))
}

pub fn evaluate(
    params: &EncoderParams,
    batch: &Batch,
    hyper: &HyperParams,
    grad_mode: Option<Freeze>,
) -> Result<Evaluation> {
    if batch.regions.is_empty() {
        return Err(Error::domain("loss of an empty batch"));
    }
    let cfg = &params.config;
    let region_caches: Vec<StreamCache> = batch
        .regions
        .iter()
        .map(|r| stream_forward(&params.image, &r.input))
        .collect::<Result<_>>()?;
    let view_caches: Vec<StreamCache> = batch
        .views
        .iter()
        .map(|v| stream_forward(&params.view, &v.input))
        .collect::<Result<_>>()?;

    let n = batch.regions.len() as f64;
    let n_embed = batch.regions.iter().filter(|r| r.embed).count().max(1) as f64;
    let mut loss = LossBreakdown::default();
    let mut pattern = Vec::new();
    let mut mined = Vec::new();
    let mut d_regions: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut d_views: Vec<Vec<f64>> = vec![vec![0.0; cfg.embed_dim]; batch.views.len()];
    let mut grad = grad_mode.map(|_| params.zeros_like());

    for (i, r) in batch.regions.iter().enumerate() {
        let cache = &region_caches[i];
        cache.relu_pattern(&mut pattern);
        let scale = r.weight / n;
        let embed_scale = r.weight / n_embed;

        // Embedding term over mined views of the same class.
        let mut pos_idx = Vec::new();
        let mut neg_idx = Vec::new();
        for (j, v) in batch.views.iter().enumerate() {
            if !r.embed || v.class_id != r.class_id {
                continue;
            }
            if v.object_id == r.object_id {
                pos_idx.push(j);
            } else {
                neg_idx.push(j);
            }
        }
        let cand = |j: &usize| Candidate {
            values: &view_caches[*j].embedding,
            object_id: batch.views[*j].object_id,
            view_id: batch.views[*j].view_id,
        };
        let pos_c: Vec<Candidate<'_>> = pos_idx.iter().map(cand).collect();
        let neg_c: Vec<Candidate<'_>> = neg_idx.iter().map(cand).collect();
        let m = mine_hard(&cache.embedding, &pos_c, &neg_c, hyper.p_h, hyper.n_h);
        mined.push((m.positives.len(), m.negatives.len()));
        for j in 0..pos_idx.len() {
            pattern.push(m.positives.contains(&j));
        }
        for j in 0..neg_idx.len() {
            pattern.push(m.negatives.contains(&j));
        }
        let mut d_anchor = vec![0.0; cfg.embed_dim];
        if !m.positives.is_empty() {
            let pos: Vec<&[f64]> = m.positives.iter().map(|&k| pos_c[k].values).collect();
            let neg: Vec<&[f64]> = m.negatives.iter().map(|&k| neg_c[k].values).collect();
            let g = nce_loss_with_grad(&cache.embedding, &pos, &neg, hyper.c, hyper.tau)?;
            loss.embed += embed_scale * g.loss;
            let k = embed_scale * hyper.weight_embed;
            for (d, a) in d_anchor.iter_mut().zip(&g.anchor) {
                *d = k * a;
            }
            for (slot, gp) in m.positives.iter().zip(&g.positives) {
                for (d, v) in d_views[pos_idx[*slot]].iter_mut().zip(gp) {
                    *d += k * v;
                }
            }
            for (slot, gn) in m.negatives.iter().zip(&g.negatives) {
                for (d, v) in d_views[neg_idx[*slot]].iter_mut().zip(gn) {
                    *d += k * v;
                }
            }
        }

        // Pose and centre terms from the class's head slice.
        let out = heads_forward(&params.heads, cfg, &cache.pooled, r.class_id)?;
        if r.target.bin_index >= out.logits.len() {
            return Err(Error::domain("pose target bin outside the head"));
        }
        let pl = pose_loss(&out.logits, out.delta, out.center, &r.target, hyper.huber_delta);
        loss.pose_class += scale * pl.class;
        loss.pose_reg += scale * pl.delta;
        loss.center += scale * pl.center;
        if r.target.regress_mask {
            let t = r.target.delta.to_array();
            pattern.extend((0..4).map(|c| (out.delta[c] - t[c]).abs() <= hyper.huber_delta));
        }
        pattern.extend((0..2).map(|c| (out.center[c] - r.target.center_delta[c]).abs() <= hyper.huber_delta));

        if let Some(g) = grad.as_mut() {
            let kc = scale * hyper.weight_pose_class;
            let kr = scale * hyper.weight_pose_reg;
            let d_logits: Vec<f64> = pl.d_logits.iter().map(|v| kc * v).collect();
            let d_delta = pl.d_delta.map(|v| kr * v);
            let d_center = pl.d_center.map(|v| kr * v);
            let dp = heads_backward(&params.heads, cfg, &cache.pooled, r.class_id, &d_logits, d_delta, d_center, &mut g.heads);
            d_regions.push((d_anchor, dp));
        }
    }
    for c in &view_caches {
        c.relu_pattern(&mut pattern);
    }
    loss.total = hyper.weight_embed * loss.embed
        + hyper.weight_pose_class * loss.pose_class
        + hyper.weight_pose_reg * (loss.pose_reg + loss.center);
    if !loss.total.is_finite() {
        return Err(Error::domain(format!("non-finite loss {:?}", loss)));
    }

    if let (Some(g), Some(freeze)) = (grad.as_mut(), grad_mode) {
        if !freeze.image_stream {
            for (i, (d_emb, dp)) in d_regions.iter().enumerate() {
                stream_backward(&params.image, &region_caches[i], d_emb, Some(dp), &mut g.image);
            }
        }
        if !freeze.view_stream {
            for (j, d) in d_views.iter().enumerate() {
                if d.iter().any(|&v| v != 0.0) {
                    stream_backward(&params.view, &view_caches[j], d, None, &mut g.view);
                }
            }
        }
        if freeze.heads {
            for t in [
                &mut g.heads.pose_class.weight,
                &mut g.heads.pose_class.bias,
                &mut g.heads.delta.weight,
                &mut g.heads.delta.bias,
                &mut g.heads.center.weight,
                &mut g.heads.center.bias,
            ] {
                t.fill(0.0);
            }
        }
    }
    Ok(Evaluation {
        loss,
        grad,
        pattern,
        mined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::nce_loss;
    use crate::geometry::Quaternion;
    use crate::learner::gradcheck::random_problem;
    use crate::learner::model::EncoderConfig;
    use crate::pose::huber;

    /// Network whose heads ignore features: zero weights, biases equal to
    /// the target outputs.
    fn perfect(target: &PoseTarget) -> (EncoderParams, Batch) {
        let (mut p, mut b, _) = random_problem(5);
        b.regions.truncate(1);
        let r = &mut b.regions[0];
        r.target = *target;
        r.class_id = 0;
        r.weight = 1.0;
        let cfg: EncoderConfig = p.config;
        let h = &mut p.heads;
        h.pose_class.weight.fill(0.0);
        h.delta.weight.fill(0.0);
        h.center.weight.fill(0.0);
        h.pose_class.bias.fill(0.0);
        h.pose_class.bias[target.bin_index] = 60.0;
        h.delta.bias[..4].copy_from_slice(&target.delta.to_array());
        h.center.bias[..2].copy_from_slice(&target.center_delta);
        assert_eq!(cfg.rotation_bins, 16);
        (p, b)
    }

    fn target() -> PoseTarget {
        PoseTarget {
            bin_index: 3,
            delta: Quaternion::new(0.99, 0.1, 0.0, -0.05).normalize().unwrap(),
            regress_mask: true,
            center_delta: [0.04, -0.02],
        }
    }

    #[test]
    fn empty_batch_fails() {
        let (p, _, h) = random_problem(0);
        assert!(total_loss(&p, &Batch::default(), &h).is_err());
    }

    #[test]
    fn perfect_predictions_zero_pose_terms_and_head_grads() {
        let (p, b) = perfect(&target());
        let h = HyperParams::default();
        let (l, g) = backward(&p, &b, &h, Freeze::default()).unwrap();
        assert_eq!(l.pose_reg, 0.0);
        assert_eq!(l.center, 0.0);
        assert!(l.pose_class < 1e-20);
        assert!(g.heads.delta.weight.iter().chain(&g.heads.delta.bias).all(|&v| v == 0.0));
        assert!(g.heads.center.weight.iter().chain(&g.heads.center.bias).all(|&v| v == 0.0));
        assert!(g.heads.pose_class.weight.iter().chain(&g.heads.pose_class.bias).all(|&v| v.abs() < 1e-20));
    }

    #[test]
    fn single_region_matches_composed_oracles() {
        let (p, mut b, h) = random_problem(7);
        b.regions.truncate(1);
        b.regions[0].weight = 1.0;
        // Object 0 (class 0): views 0 and 1 positive, view 5 (object 4) the
        // only negative once the other class-0 views are dropped.
        b.views.retain(|v| v.object_id == 0 || v.object_id == 4 || v.class_id == 1);
        let r = &b.regions[0];
        let a = stream_forward(&p.image, &r.input).unwrap();
        let views: Vec<_> = b.views.iter().map(|v| stream_forward(&p.view, &v.input).unwrap()).collect();
        let pos: Vec<&[f64]> = b.views.iter().zip(&views).filter(|(v, _)| v.object_id == 0).map(|(_, c)| c.embedding.as_slice()).collect();
        let neg: Vec<&[f64]> = b.views.iter().zip(&views).filter(|(v, _)| v.object_id == 4).map(|(_, c)| c.embedding.as_slice()).collect();
        assert_eq!(neg.len(), 1);
        let embed = nce_loss(&a.embedding, &pos, &neg, h.c, h.tau).unwrap();

        let out = heads_forward(&p.heads, &p.config, &a.pooled, r.class_id).unwrap();
        let m = out.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + out.logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        let ce = lse - out.logits[r.target.bin_index];
        let t = r.target.delta.to_array();
        let reg: f64 = (0..4).map(|i| huber(out.delta[i] - t[i], h.huber_delta)).sum();
        let cen: f64 = (0..2).map(|i| huber(out.center[i] - r.target.center_delta[i], h.huber_delta)).sum();
        let want = 0.5 * embed + 0.25 * ce + 5.0 * (reg + cen);
        let got = total_loss(&p, &b, &h).unwrap();
        assert!((got.total - want).abs() < 1e-12, "{} vs {want}", got.total);
    }

    #[test]
    fn loss_linear_in_weights() {
        let (p, b, h) = random_problem(2);
        let base = total_loss(&p, &b, &h).unwrap().total;
        let h2 = HyperParams {
            weight_embed: 2.0 * h.weight_embed,
            weight_pose_class: 2.0 * h.weight_pose_class,
            weight_pose_reg: 2.0 * h.weight_pose_reg,
            ..h
        };
        let doubled = total_loss(&p, &b, &h2).unwrap().total;
        assert!((doubled - 2.0 * base).abs() < 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn frozen_stream_gets_zero_gradient() {
        let (p, b, h) = random_problem(3);
        let freeze = Freeze { view_stream: true, ..Freeze::default() };
        let (_, g) = backward(&p, &b, &h, freeze).unwrap();
        for c in &g.view.convs {
            assert!(c.weight.iter().chain(&c.bias).all(|&v| v == 0.0));
        }
        assert!(g.view.embed.weight.iter().all(|&v| v == 0.0));
        assert!(g.image.embed.weight.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn mining_caps_respected() {
        let (p, mut b, h) = random_problem(4);
        let extra: Vec<TrainView> = (0..200)
            .map(|i| TrainView { view_id: 100 + i, object_id: if i < 40 { 0 } else { 2 + 2 * (i % 7) }, ..b.views[0].clone() })
            .collect();
        b.views.extend(extra);
        let e = evaluate(&p, &b, &h, None).unwrap();
        for &(np, nn) in &e.mined {
            assert!(np <= h.p_h && nn <= h.n_h);
        }
        assert!(e.mined.iter().any(|&(np, nn)| np == h.p_h && nn == h.n_h));
    }
}
