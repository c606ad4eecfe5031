//! Detection-style average precision: greedy confidence-ordered matching
//! and 101-point interpolated precision, per class and over IoU-style
//! thresholds `0.50:0.05:0.95`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ApPrediction<P> {
    pub class_id: usize,
    pub confidence: f64,
    pub payload: P,
}

#[derive(Debug, Clone)]
pub struct ApGroundTruth<P> {
    pub class_id: usize,
    pub payload: P,
}

#[derive(Debug, Clone)]
pub struct ApImage<P> {
    pub image_id: usize,
    pub predictions: Vec<ApPrediction<P>>,
    pub ground_truths: Vec<ApGroundTruth<P>>,
}

#[derive(Debug, Clone)]
pub struct ApInput<P> {
    pub images: Vec<ApImage<P>>,
}

impl<P> Default for ApInput<P> {
    fn default() -> Self {
        Self { images: Vec::new() }
    }
}

/// AP per class (classes without ground truth omitted) and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub per_class: BTreeMap<usize, f64>,
    pub mean: f64,
}

/// COCO summary: AP averaged over the ten thresholds, AP50 and AP75.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAp {
    pub ap: ClassAp,
    pub ap50: ClassAp,
    pub ap75: ClassAp,
}

pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| 0.5 + 0.05 * i as f64)
}

pub const RECALL_POINTS: usize = 101;

/// Match scores between the predictions and ground truths of one class in
/// one image, predictions in descending confidence.
struct ClassBlock {
    class_id: usize,
    confidences: Vec<f64>,
    /// `scores[p][g]`.
    scores: Vec<Vec<f64>>,
    num_gt: usize,
}

/// Pairwise match scores computed once and reused across thresholds.
pub struct ScoredInput {
    blocks: Vec<ClassBlock>,
}

impl ScoredInput {
    pub fn new<P, F>(input: &ApInput<P>, match_fn: F) -> Result<Self>
    where
        F: Fn(&P, &P) -> f64,
    {
        let mut images: Vec<&ApImage<P>> = input.images.iter().collect();
        images.sort_by_key(|im| im.image_id);
        let mut blocks = Vec::new();
        for im in images {
            if let Some(p) = im.predictions.iter().find(|p| !p.confidence.is_finite()) {
                return Err(Error::domain(format!(
                    "non-finite confidence {} in image {}",
                    p.confidence, im.image_id
                )));
            }
            let mut classes: Vec<usize> = im
                .predictions
                .iter()
                .map(|p| p.class_id)
                .chain(im.ground_truths.iter().map(|g| g.class_id))
                .collect();
            classes.sort_unstable();
            classes.dedup();
            for c in classes {
                let mut preds: Vec<&ApPrediction<P>> =
                    im.predictions.iter().filter(|p| p.class_id == c).collect();
                preds.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
                let gts: Vec<&ApGroundTruth<P>> =
                    im.ground_truths.iter().filter(|g| g.class_id == c).collect();
                blocks.push(ClassBlock {
                    class_id: c,
                    confidences: preds.iter().map(|p| p.confidence).collect(),
                    scores: preds
                        .iter()
                        .map(|p| gts.iter().map(|g| match_fn(&p.payload, &g.payload)).collect())
                        .collect(),
                    num_gt: gts.len(),
                });
            }
        }
        Ok(Self { blocks })
    }

    /// AP per class at a single match threshold (score >= threshold matches).
    pub fn at(&self, threshold: f64) -> ClassAp {
        let mut per_class: BTreeMap<usize, (Vec<(f64, bool)>, usize)> = BTreeMap::new();
        for b in &self.blocks {
            let entry = per_class.entry(b.class_id).or_default();
            entry.1 += b.num_gt;
            let mut taken = vec![false; b.num_gt];
            for (p, &conf) in b.confidences.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (g, &s) in b.scores[p].iter().enumerate() {
                    if taken[g] || s < threshold {
                        continue;
                    }
                    if best.is_none_or(|(_, bs)| s > bs) {
                        best = Some((g, s));
                    }
                }
                if let Some((g, _)) = best {
                    taken[g] = true;
                }
                entry.0.push((conf, best.is_some()));
            }
        }
        let per_class: BTreeMap<usize, f64> = per_class
            .into_iter()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(c, (mut dets, n))| {
                // Stable: equal confidences keep image order.
                dets.sort_by(|a, b| b.0.total_cmp(&a.0));
                (c, interpolated_ap(&dets, n))
            })
            .collect();
        let mean = mean_of(per_class.values().copied());
        ClassAp { per_class, mean }
    }

    pub fn coco(&self) -> CocoAp {
        let per_t: Vec<ClassAp> = coco_thresholds().iter().map(|&t| self.at(t)).collect();
        let mut per_class = BTreeMap::new();
        for c in per_t[0].per_class.keys() {
            per_class.insert(*c, mean_of(per_t.iter().map(|a| a.per_class[c])));
        }
        CocoAp {
            ap: ClassAp {
                mean: mean_of(per_class.values().copied()),
                per_class,
            },
            ap50: per_t[0].clone(),
            ap75: per_t[5].clone(),
        }
    }
}

fn mean_of(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// 101-point interpolated AP of a confidence-sorted detection list.
fn interpolated_ap(dets: &[(f64, bool)], num_gt: usize) -> f64 {
    let mut recall = Vec::with_capacity(dets.len());
    let mut precision = Vec::with_capacity(dets.len());
    let mut tp = 0usize;
    for (k, &(_, hit)) in dets.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut total = 0.0;
    for i in 0..RECALL_POINTS {
        let r = i as f64 / (RECALL_POINTS - 1) as f64;
        let k = recall.partition_point(|&x| x < r);
        if k < precision.len() {
            total += precision[k];
        }
    }
    total / RECALL_POINTS as f64
}

/// AP at one match threshold; `match_fn(pred, gt)` returns the IoU-style score.
pub fn average_precision<P, F>(input: &ApInput<P>, threshold: f64, match_fn: F) -> Result<ClassAp>
where
    F: Fn(&P, &P) -> f64,
{
    Ok(ScoredInput::new(input, match_fn)?.at(threshold))
}

/// AP over the ten COCO thresholds plus AP50 and AP75.
pub fn coco_average_precision<P, F>(input: &ApInput<P>, match_fn: F) -> Result<CocoAp>
where
    F: Fn(&P, &P) -> f64,
{
    Ok(ScoredInput::new(input, match_fn)?.coco())
}
