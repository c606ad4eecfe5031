//! End-to-end evaluation: embedding index construction, per-region
//! retrieval and pose decoding, ground-truth substitution ablations and the
//! metrics report.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{crop_region, derive_seed, view_region, Dataset, RegionGt, RoiConfig, Sample, Split};
use crate::embedding::{EmbeddingIndex, EmbeddingTag, EmbeddingVector};
use crate::error::{Error, Result};
use crate::geometry::{apply_pose, quat_geodesic, BBox, Pose, Quaternion, Vec3};
use crate::learner::{encode_view, jitter_box, predict_region, EncoderParams};
use crate::metrics::{
    mesh_ap, ApGroundTruth, ApImage, ApInput, ApPrediction, CocoAp, Correspondence, F1At, MeshPayload,
    F1_THRESHOLDS, MESH_F1_THRESHOLD, METRIC_SAMPLES,
};
use crate::pose::{lift_center, RotationBins};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Components replaced by their ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub gt_shape: bool,
    pub gt_rotation: bool,
    pub gt_translation: bool,
    pub gt_boxes: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation { gt_shape: false, gt_rotation: false, gt_translation: false, gt_boxes: false };
    pub const ALL: Ablation = Ablation { gt_shape: true, gt_rotation: true, gt_translation: true, gt_boxes: true };

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }
}

impl FromStr for Ablation {
    type Err = Error;

    /// Comma-separated subset of `shape,rotation,translation,boxes`, or
    /// `none` / `all`.
    fn from_str(s: &str) -> Result<Self> {
        let mut a = Ablation::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "none" => {}
                "all" => a = Ablation::ALL,
                "shape" => a.gt_shape = true,
                "rotation" => a.gt_rotation = true,
                "translation" => a.gt_translation = true,
                "boxes" => a.gt_boxes = true,
                other => return Err(Error::Config(format!("unknown ablation `{other}`"))),
            }
        }
        Ok(a)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [
            (self.gt_shape, "shape"),
            (self.gt_rotation, "rotation"),
            (self.gt_translation, "translation"),
            (self.gt_boxes, "boxes"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub split: Split,
    pub ablation: Ablation,
    /// Corner noise of the simulated detector, as a fraction of box size.
    pub box_jitter: f64,
    pub seed: u64,
    pub samples: usize,
    pub f1_threshold: f64,
    pub roi: RoiConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Val,
            ablation: Ablation::NONE,
            box_jitter: 0.025,
            seed: 0,
            samples: METRIC_SAMPLES,
            f1_threshold: MESH_F1_THRESHOLD,
            roi: RoiConfig::default(),
        }
    }
}

/// Embeds the canonical views of every training object, plus held-out
/// objects when `include_heldout` is set.
pub fn build_index(params: &EncoderParams, data: &Dataset, include_heldout: bool, roi: &RoiConfig) -> Result<EmbeddingIndex> {
    EmbeddingIndex::build(&index_entries(params, data, include_heldout, roi)?)
}

/// The view embeddings behind [`build_index`].
pub fn index_entries(params: &EncoderParams, data: &Dataset, include_heldout: bool, roi: &RoiConfig) -> Result<Vec<EmbeddingVector>> {
    let mut entries = Vec::new();
    for cad in data.cads.iter().filter(|c| include_heldout || !c.heldout) {
        for v in &cad.views {
            let r = view_region(&cad.mesh, v.rotation, data.spec.view_resolution, cad.class_id, roi)?;
            entries.push(EmbeddingVector {
                values: encode_view(params, &r)?,
                tag: EmbeddingTag::ObjectView,
                class_id: cad.class_id,
                object_id: cad.object_id,
                view_id: v.view_id,
            });
        }
    }
    Ok(entries)
}

/// Retrieved shape and decoded pose for one detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosedPrediction {
    pub class_id: u32,
    pub bbox: BBox,
    pub object_id: u32,
    pub similarity: f64,
    pub rotation: Quaternion,
    pub center_px: [f64; 2],
    /// Camera-space translation on the ground-truth depth plane.
    pub translation: Vec3,
}

/// Crops `det_box`, retrieves the nearest object and decodes the pose.
pub fn predict_detection(
    params: &EncoderParams,
    bins: &RotationBins,
    index: &EmbeddingIndex,
    sample: &Sample,
    gt: &RegionGt,
    det_box: BBox,
    roi: &RoiConfig,
) -> Result<PosedPrediction> {
    let region = crop_region(&sample.image, &gt.mask, det_box, gt.class_id, roi)?;
    let p = predict_region(params, bins, &region)?;
    let hit = index
        .retrieve_scored(&p.embedding, gt.class_id, 1)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::lookup(format!("index has no objects for class {}", gt.class_id)))?;
    Ok(PosedPrediction {
        class_id: gt.class_id,
        bbox: det_box,
        object_id: hit.object_id,
        similarity: hit.similarity,
        rotation: p.rotation,
        center_px: p.center_px,
        translation: lift_center(p.center_px, gt.pose.translation[2], &sample.intrinsics)?,
    })
}

/// Outcome for one ground-truth region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionResult {
    pub image_id: u32,
    pub class_id: u32,
    pub gt_object: u32,
    pub prediction: PosedPrediction,
    /// Pose and shape actually scored, after ablation substitutions.
    pub scored_object: u32,
    pub scored_pose: Pose,
    pub rotation_error_deg: f64,
    pub center_error_px: f64,
    pub chamfer: f64,
    pub normal_consistency: f64,
    pub f1: Vec<F1At>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub split: Split,
    pub ablation: String,
    pub heldout_in_index: bool,
    pub images: usize,
    pub regions: usize,
    pub retrieval_top1: f64,
    pub median_rotation_error_deg: f64,
    pub mean_center_error_px: f64,
    pub mesh_ap: CocoAp,
    pub f1_threshold: f64,
    pub chamfer: f64,
    pub normal_consistency: f64,
    pub f1: Vec<F1At>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn posed_payload(data: &Dataset, object_id: u32, pose: &Pose, samples: usize) -> Result<MeshPayload> {
    let mesh = apply_pose(pose, &data.cad(object_id)?.mesh);
    // The seed depends only on the object so identical posed shapes give
    // identical clouds.
    MeshPayload::from_mesh(&mesh, samples, derive_seed(0x5eed, 9, object_id as u64))
}

/// Runs the full pipeline over one split.
pub fn evaluate(
    params: &EncoderParams,
    bins: &RotationBins,
    data: &Dataset,
    index: &EmbeddingIndex,
    heldout_in_index: bool,
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<RegionResult>)> {
    let samples: Vec<&Sample> = data.split(cfg.split).collect();
    if samples.is_empty() {
        return Err(Error::Config(format!("split {:?} has no images", cfg.split)));
    }
    let ab = cfg.ablation;
    let mut results = Vec::new();
    let mut ap = ApInput::default();
    for s in &samples {
        let mut image = ApImage { image_id: s.image_id as usize, predictions: Vec::new(), ground_truths: Vec::new() };
        for (ri, gt) in s.regions.iter().enumerate() {
            // Detector noise is drawn identically whether or not it is used.
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, s.image_id as u64, ri as u64));
            let noisy = jitter_box(&gt.bbox, cfg.box_jitter, &mut rng)?;
            let det_box = if ab.gt_boxes { gt.bbox } else { noisy };
            let pred = predict_detection(params, bins, index, s, gt, det_box, &cfg.roi)?;

            let object = if ab.gt_shape { gt.object_id } else { pred.object_id };
            let rotation = if ab.gt_rotation { gt.pose.rotation } else { pred.rotation };
            let translation = if ab.gt_translation { gt.pose.translation } else { pred.translation };
            let pose = Pose { rotation, translation, scale: gt.pose.scale };

            let gt_payload = posed_payload(data, gt.object_id, &gt.pose, cfg.samples)?;
            let pred_payload = posed_payload(data, object, &pose, cfg.samples)?;
            let score = shape_score(&pred_payload, &gt_payload)?;
            let [u, v] = pred.center_px;
            results.push(RegionResult {
                image_id: s.image_id,
                class_id: gt.class_id,
                gt_object: gt.object_id,
                rotation_error_deg: quat_geodesic(rotation, gt.pose.rotation)?.to_degrees(),
                center_error_px: (u - gt.center_px[0]).hypot(v - gt.center_px[1]),
                prediction: pred.clone(),
                scored_object: object,
                scored_pose: pose,
                chamfer: score.0,
                normal_consistency: score.1,
                f1: score.2,
            });
            image.predictions.push(ApPrediction {
                class_id: gt.class_id as usize,
                confidence: 0.5 * (pred.similarity + 1.0),
                payload: pred_payload,
            });
            image.ground_truths.push(ApGroundTruth { class_id: gt.class_id as usize, payload: gt_payload });
        }
        ap.images.push(image);
    }
    let n = results.len().max(1) as f64;
    let mean = |f: &dyn Fn(&RegionResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let f1 = F1_THRESHOLDS
        .iter()
        .enumerate()
        .map(|(i, &t)| F1At { threshold: t, value: mean(&|r| r.f1[i].value) })
        .collect();
    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        split: cfg.split,
        ablation: ab.to_string(),
        heldout_in_index,
        images: samples.len(),
        regions: results.len(),
        retrieval_top1: mean(&|r| (r.prediction.object_id == r.gt_object) as u8 as f64),
        median_rotation_error_deg: median(&mut results.iter().map(|r| r.rotation_error_deg).collect::<Vec<_>>()),
        mean_center_error_px: mean(&|r| r.center_error_px),
        mesh_ap: mesh_ap(&ap, cfg.f1_threshold)?,
        f1_threshold: cfg.f1_threshold,
        chamfer: mean(&|r| r.chamfer),
        normal_consistency: mean(&|r| r.normal_consistency),
        f1,
    };
    Ok((report, results))
}

/// Chamfer, normal consistency and F1 in units where the ground truth's
/// longest box edge is 10.
fn shape_score(pred: &MeshPayload, gt: &MeshPayload) -> Result<(f64, f64, Vec<F1At>)> {
    let c = Correspondence::new(&pred.cloud, &gt.cloud);
    let f = gt.factor;
    let f1 = F1_THRESHOLDS.iter().map(|&t| F1At { threshold: t, value: c.f1(t / f) }).collect();
    Ok((c.chamfer() * f * f, c.normal_consistency(&pred.cloud.cloud, &gt.cloud.cloud)?, f1))
}

/// Per-class retrieval accuracy, for diagnostics.
pub fn per_class_top1(results: &[RegionResult]) -> BTreeMap<u32, f64> {
    let mut acc: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in results {
        let e = acc.entry(r.class_id).or_default();
        e.0 += (r.prediction.object_id == r.gt_object) as usize;
        e.1 += 1;
    }
    acc.into_iter().map(|(c, (h, n))| (c, h as f64 / n as f64)).collect()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, DatasetSpec};
    use crate::learner::{train, TrainConfig, TrainOutput};

    fn setup() -> (Dataset, TrainOutput) {
        let data = generate_dataset(&DatasetSpec {
            classes: 2,
            objects_per_class: 4,
            heldout_per_class: 1,
            train_images: 20,
            val_images: 3,
            unseen_images: 2,
            canonical_views: 4,
            seed: 5,
            ..DatasetSpec::default()
        })
        .unwrap();
        let mut cfg = TrainConfig { steps: 0, width: 4, init_samples: 8, ..TrainConfig::default() };
        cfg.hyper.rotation_bins = 4;
        let out = train(&cfg, &data).unwrap();
        (data, out)
    }

    fn run(data: &Dataset, out: &TrainOutput, cfg: EvalConfig, heldout: bool) -> (EvalReport, Vec<RegionResult>) {
        let roi = RoiConfig::default();
        let index = build_index(&out.params, data, heldout, &roi).unwrap();
        evaluate(&out.params, &out.bins, data, &index, heldout, &EvalConfig { samples: 500, ..cfg }).unwrap()
    }

    #[test]
    fn ablation_parsing() {
        for s in ["none", "shape", "rotation,translation", "shape,rotation,translation,boxes"] {
            assert_eq!(s.parse::<Ablation>().unwrap().to_string(), s);
        }
        assert_eq!("all".parse::<Ablation>().unwrap(), Ablation::ALL);
        assert_eq!(" boxes , shape ".parse::<Ablation>().unwrap().to_string(), "shape,boxes");
        assert!("colour".parse::<Ablation>().is_err());
        assert!(Ablation::default().is_none());
    }

    #[test]
    fn median_cases() {
        assert!(median(&mut []).is_nan());
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn index_holds_canonical_views() {
        let (data, out) = setup();
        let roi = RoiConfig::default();
        let train_only = index_entries(&out.params, &data, false, &roi).unwrap();
        let all = index_entries(&out.params, &data, true, &roi).unwrap();
        assert_eq!(train_only.len(), 6 * 4);
        assert_eq!(all.len(), 8 * 4);
        assert!(train_only.iter().all(|e| !data.cad(e.object_id).unwrap().heldout));
        assert!(all.iter().all(|e| e.tag == EmbeddingTag::ObjectView && e.values.len() == 128));
    }

    #[test]
    fn full_ground_truth_is_perfect() {
        let (data, out) = setup();
        let (r, res) = run(&data, &out, EvalConfig { ablation: Ablation::ALL, ..EvalConfig::default() }, false);
        assert_eq!(r.mesh_ap.ap.mean, 1.0);
        assert_eq!(r.chamfer, 0.0);
        assert_eq!(r.median_rotation_error_deg, 0.0);
        assert!(r.f1.iter().all(|f| f.value == 1.0));
        assert_eq!(r.regions, res.len());
        assert!(res.iter().all(|x| x.scored_object == x.gt_object));
    }

    #[test]
    fn evaluation_is_deterministic_and_none_is_identity() {
        let (data, out) = setup();
        let (a, ra) = run(&data, &out, EvalConfig::default(), false);
        let (b, rb) = run(&data, &out, EvalConfig { ablation: "none".parse().unwrap(), ..EvalConfig::default() }, false);
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        // Substituting the ground-truth shape changes only which mesh is scored.
        let (_, rs) = run(&data, &out, EvalConfig { ablation: Ablation { gt_shape: true, ..Ablation::NONE }, ..EvalConfig::default() }, false);
        for (x, y) in ra.iter().zip(&rs) {
            assert_eq!(x.prediction, y.prediction);
            assert_eq!(y.scored_object, y.gt_object);
            if x.scored_object == x.gt_object {
                assert_eq!(x.chamfer, y.chamfer);
            }
        }
    }

    #[test]
    fn unseen_split_retrieves_only_indexed_objects() {
        let (data, out) = setup();
        let cfg = EvalConfig { split: Split::Unseen, ..EvalConfig::default() };
        let (r, res) = run(&data, &out, cfg, false);
        assert_eq!(r.retrieval_top1, 0.0);
        assert!(res.iter().all(|x| !data.cad(x.prediction.object_id).unwrap().heldout));
        let (r, _) = run(&data, &out, cfg, true);
        assert!(r.heldout_in_index);
    }

    #[test]
    fn empty_split_is_a_config_error() {
        let (mut data, out) = setup();
        data.samples.retain(|s| s.split != Split::Val);
        let index = build_index(&out.params, &data, false, &RoiConfig::default()).unwrap();
        let e = evaluate(&out.params, &out.bins, &data, &index, false, &EvalConfig::default()).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }
}
