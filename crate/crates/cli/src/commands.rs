//! Implementations of the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use cadmatch_core::data::{crop_region, generate_dataset, MAX_OBJECTS, load_dataset, save_dataset, Dataset, DatasetSpec, RoiConfig, Split};
use cadmatch_core::embedding::{read_embeddings, write_embeddings, EmbeddingIndex, EmbeddingTag, EmbeddingVector};
use cadmatch_core::eval::{evaluate, index_entries, predict_detection, Ablation, EvalConfig};
use cadmatch_core::geometry::{apply_pose, Pose};
use cadmatch_core::learner::{
    load_checkpoint, predict_region, save_checkpoint, train as run_training, write_trace_csv, EncoderParams, Optimizer,
    TrainConfig,
};
use cadmatch_core::pose::RotationBins;
use cadmatch_core::HyperParams;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{EvalArgs, ExportArgs, GenDataArgs, IndexArgs, ModelArgs, RetrieveArgs, TrainArgs};

type CliResult<T = ()> = Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn required(path: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    path.ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn existing(path: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    let p = required(path, flag)?;
    if !p.exists() {
        return Err(CliError::Config(format!("--{flag} {} does not exist", p.display())));
    }
    Ok(p)
}

fn out_dir(path: Option<PathBuf>) -> CliResult<PathBuf> {
    let p = required(path, "out")?;
    fs::create_dir_all(&p).map_err(|e| CliError::Config(format!("cannot create --out {}: {e}", p.display())))?;
    Ok(p)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(cadmatch_core::Error::from)?;
    fs::write(path, text + "\n").map_err(|e| CliError::Core(cadmatch_core::Error::Io { path: path.into(), source: e }))
}

pub fn gen_data(a: GenDataArgs, cfg: &RunConfig) -> CliResult {
    cfg.check_keys(&[
        "out",
        "seed",
        "classes",
        "objects_per_class",
        "heldout_per_class",
        "train_images",
        "val_images",
        "unseen_images",
        "image_size",
        "max_objects",
    ])?;
    let d = DatasetSpec::default();
    let spec = DatasetSpec {
        seed: cfg.get_or("seed", a.seed, d.seed)?,
        classes: cfg.get_or("classes", a.classes, d.classes)?,
        objects_per_class: cfg.get_or("objects_per_class", a.objects_per_class, d.objects_per_class)?,
        heldout_per_class: cfg.get_or("heldout_per_class", a.heldout_per_class, d.heldout_per_class)?,
        train_images: cfg.get_or("train_images", a.train_images, d.train_images)?,
        val_images: cfg.get_or("val_images", a.val_images, d.val_images)?,
        unseen_images: cfg.get_or("unseen_images", a.unseen_images, d.unseen_images)?,
        image_size: cfg.get_or("image_size", a.image_size, d.image_size)?,
        max_objects: cfg.get_or("max_objects", a.max_objects, d.max_objects)?,
        ..d
    };
    spec.validate().map_err(config_err)?;
    let out = out_dir(cfg.get("out", a.out)?)?;
    let data = generate_dataset(&spec)?;
    save_dataset(&out, &data)?;
    println!(
        "wrote {} CAD models and {} images to {}",
        data.cads.len(),
        data.samples.len(),
        out.display()
    );
    Ok(())
}

pub fn train(a: TrainArgs, cfg: &RunConfig) -> CliResult {
    cfg.check_keys(&[
        "recipe",
        "data",
        "out",
        "seed",
        "steps",
        "lr",
        "optimizer",
        "momentum",
        "weight_decay",
        "grad_clip",
        "width",
        "pool_grid",
        "tau",
        "c",
        "huber_delta",
        "rotation_bins",
        "theta",
        "q",
        "p_h",
        "n_h",
        "repeat_threshold",
        "weight_embed",
        "weight_pose_class",
        "weight_pose_reg",
        "roi_jitter",
        "negatives_per_region",
        "pose_regions",
        "brightness_jitter",
        "no_flip",
        "freeze_image",
        "freeze_view",
    ])?;
    let d = match cfg.get_or("recipe", a.recipe, "default".to_string())?.as_str() {
        "default" => TrainConfig::default(),
        "tuned" => TrainConfig::tuned(),
        other => return Err(CliError::Config(format!("unknown recipe `{other}` (default or tuned)"))),
    };
    let h = d.hyper.clone();
    let hyper = HyperParams {
        tau: cfg.get_or("tau", a.tau, h.tau)?,
        c: cfg.get_or("c", a.c, h.c)?,
        huber_delta: cfg.get_or("huber_delta", a.huber_delta, h.huber_delta)?,
        rotation_bins: cfg.get_or("rotation_bins", a.rotation_bins, h.rotation_bins)?,
        theta: cfg.get_or("theta", a.theta, h.theta)?,
        q: cfg.get_or("q", a.q, h.q)?,
        p_h: cfg.get_or("p_h", a.p_h, h.p_h)?,
        n_h: cfg.get_or("n_h", a.n_h, h.n_h)?,
        repeat_threshold: cfg.get_or("repeat_threshold", a.repeat_threshold, h.repeat_threshold)?,
        weight_embed: cfg.get_or("weight_embed", a.weight_embed, h.weight_embed)?,
        weight_pose_class: cfg.get_or("weight_pose_class", a.weight_pose_class, h.weight_pose_class)?,
        weight_pose_reg: cfg.get_or("weight_pose_reg", a.weight_pose_reg, h.weight_pose_reg)?,
        base_lr: cfg.get_or("lr", a.lr, h.base_lr)?,
        roi_jitter: cfg.get_or("roi_jitter", a.roi_jitter, h.roi_jitter)?,
        ..h
    };
    let optimizer = match cfg.get_or("optimizer", a.optimizer, String::new())?.as_str() {
        "" => d.optimizer,
        "sgd" => Optimizer::Sgd,
        "adam" => Optimizer::Adam,
        other => return Err(CliError::Config(format!("unknown optimizer `{other}` (sgd or adam)"))),
    };
    let flag = |key: &str, given: bool| -> CliResult<bool> { Ok(given || cfg.get_or(key, None, false)?) };
    let mut tc = TrainConfig {
        steps: cfg.get_or("steps", a.steps, d.steps)?,
        hyper,
        seed: cfg.get_or("seed", a.seed, d.seed)?,
        width: cfg.get_or("width", a.width, d.width)?,
        pool_grid: cfg.get_or("pool_grid", a.pool_grid, d.pool_grid)?,
        negatives_per_region: cfg.get_or("negatives_per_region", a.negatives_per_region, d.negatives_per_region)?,
        pose_regions: cfg.get_or("pose_regions", a.pose_regions, d.pose_regions)?,
        flip: !flag("no_flip", a.no_flip)?,
        brightness_jitter: cfg.get_or("brightness_jitter", a.brightness_jitter, d.brightness_jitter)?,
        optimizer,
        momentum: cfg.get_or("momentum", a.momentum, d.momentum)?,
        weight_decay: cfg.get_or("weight_decay", a.weight_decay, d.weight_decay)?,
        grad_clip: cfg.get_or("grad_clip", a.grad_clip, d.grad_clip)?,
        ..d
    };
    tc.freeze.image_stream = flag("freeze_image", a.freeze_image)?;
    tc.freeze.view_stream = flag("freeze_view", a.freeze_view)?;
    tc.validate().map_err(config_err)?;
    let data_dir = existing(cfg.get("data", a.data)?, "data")?;
    let out = out_dir(cfg.get("out", a.out)?)?;

    let data = load_dataset(&data_dir)?;
    let result = run_training(&tc, &data)?;
    save_checkpoint(&out.join("checkpoint.bin"), &result.params, &result.bins)?;
    result.bins.save(&out.join("bins.json"))?;
    write_trace_csv(&out.join("trace.csv"), &result.trace)?;
    write_json(&out.join("train_config.json"), &tc)?;
    match result.trace.last() {
        Some(r) => println!("trained {} steps, final loss {:.5}", tc.steps, r.loss.total),
        None => println!("wrote initial parameters (0 steps)"),
    }
    Ok(())
}

struct Model {
    data: Dataset,
    params: EncoderParams,
    bins: RotationBins,
}

const MODEL_KEYS: [&str; 2] = ["data", "checkpoint"];

fn load_model(m: ModelArgs, cfg: &RunConfig) -> CliResult<Model> {
    let data_dir = existing(cfg.get("data", m.data)?, "data")?;
    let mut ckpt = existing(cfg.get("checkpoint", m.checkpoint)?, "checkpoint")?;
    if ckpt.is_dir() {
        ckpt = ckpt.join("checkpoint.bin");
    }
    let (params, bins) = load_checkpoint(&ckpt)?;
    let data = load_dataset(&data_dir)?;
    if params.config.num_classes != data.classes.len() {
        return Err(CliError::Config(format!(
            "checkpoint has {} classes but the dataset has {}",
            params.config.num_classes,
            data.classes.len()
        )));
    }
    Ok(Model { data, params, bins })
}

fn keys<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    MODEL_KEYS.iter().copied().chain(extra.iter().copied()).collect()
}

fn roi_for(params: &EncoderParams) -> RoiConfig {
    RoiConfig { size: params.config.input_size, ..RoiConfig::default() }
}

fn load_index(m: &Model, path: Option<PathBuf>, include_heldout: bool) -> CliResult<EmbeddingIndex> {
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Config(format!("--index {} does not exist", p.display())));
            }
            Ok(EmbeddingIndex::build(&read_embeddings(&p)?)?)
        }
        None => Ok(EmbeddingIndex::build(&index_entries(&m.params, &m.data, include_heldout, &roi_for(&m.params))?)?),
    }
}

pub fn build_index(a: IndexArgs, cfg: &RunConfig) -> CliResult {
    cfg.check_keys(&keys(&["out", "include_heldout"]))?;
    let include = a.include_heldout || cfg.get_or("include_heldout", None, false)?;
    let m = load_model(a.model, cfg)?;
    let out = out_dir(cfg.get("out", a.out)?)?;
    let entries = index_entries(&m.params, &m.data, include, &roi_for(&m.params))?;
    write_embeddings(&out.join("index.emb"), &entries)?;
    println!("indexed {} views", entries.len());
    Ok(())
}

#[derive(Serialize)]
struct RetrievedRegion {
    region: usize,
    class: String,
    object_id: u32,
    similarity: f64,
    rotation: [f64; 4],
    translation: [f64; 3],
}

pub fn retrieve(a: RetrieveArgs, cfg: &RunConfig) -> CliResult {
    cfg.check_keys(&keys(&["sample", "index", "include_heldout", "emit_obj", "out"]))?;
    let id = cfg
        .get("sample", a.sample)?
        .ok_or_else(|| CliError::Config("--sample is required".into()))?;
    let include = a.include_heldout || cfg.get_or("include_heldout", None, false)?;
    let emit = a.emit_obj || cfg.get_or("emit_obj", None, false)?;
    let out = if emit { Some(out_dir(cfg.get("out", a.out)?)?) } else { None };
    let index_path = cfg.get("index", a.index)?;
    let m = load_model(a.model, cfg)?;
    let sample = m
        .data
        .samples
        .iter()
        .find(|s| s.image_id == id)
        .ok_or_else(|| cadmatch_core::Error::Lookup(format!("no sample with image id {id}")))?;
    let index = load_index(&m, index_path, include)?;
    let roi = roi_for(&m.params);
    for (i, gt) in sample.regions.iter().enumerate() {
        let p = predict_detection(&m.params, &m.bins, &index, sample, gt, gt.bbox, &roi)?;
        let r = p.rotation;
        let line = RetrievedRegion {
            region: i,
            class: m.data.classes[gt.class_id as usize].clone(),
            object_id: p.object_id,
            similarity: p.similarity,
            rotation: [r.w, r.x, r.y, r.z],
            translation: p.translation,
        };
        println!("{}", serde_json::to_string(&line).map_err(cadmatch_core::Error::from)?);
        if let Some(dir) = &out {
            let pose = Pose { rotation: p.rotation, translation: p.translation, scale: gt.pose.scale };
            let mesh = apply_pose(&pose, &m.data.cad(p.object_id)?.mesh);
            mesh.save_obj(dir.join(format!("image{id:06}_region{i}.obj")))?;
        }
    }
    Ok(())
}

pub fn eval(a: EvalArgs, cfg: &RunConfig) -> CliResult {
    cfg.check_keys(&keys(&["split", "ablation", "index", "include_heldout", "seed", "samples", "out"]))?;
    let split: Split = cfg.get_or("split", a.split, "val".to_string())?.parse().map_err(config_err)?;
    let ablation: Ablation = cfg.get_or("ablation", a.ablation, "none".to_string())?.parse().map_err(config_err)?;
    let include = a.include_heldout || cfg.get_or("include_heldout", None, false)?;
    let d = EvalConfig::default();
    let out = out_dir(cfg.get("out", a.out)?)?;
    let index_path = cfg.get("index", a.index)?;
    let m = load_model(a.model, cfg)?;
    let ec = EvalConfig {
        split,
        ablation,
        seed: cfg.get_or("seed", a.seed, d.seed)?,
        samples: cfg.get_or("samples", a.samples, d.samples)?,
        roi: roi_for(&m.params),
        ..d
    };
    if m.data.split(split).next().is_none() {
        return Err(CliError::Config(format!("split `{}` has no images", split.name())));
    }
    let index = load_index(&m, index_path, include)?;
    let (report, regions) = evaluate(&m.params, &m.bins, &m.data, &index, include, &ec)?;
    write_json(&out.join("eval_report.json"), &report)?;
    let lines: Vec<String> = regions
        .iter()
        .map(|r| serde_json::to_string(r).map_err(|e| CliError::Core(e.into())))
        .collect::<CliResult<_>>()?;
    let path = out.join("eval_regions.jsonl");
    fs::write(&path, lines.join("\n") + "\n").map_err(|e| CliError::Core(cadmatch_core::Error::Io { path, source: e }))?;
    println!(
        "{} regions: top1 {:.3}, median rotation error {:.2} deg, mesh AP {:.3} / AP50 {:.3} / AP75 {:.3}",
        report.regions,
        report.retrieval_top1,
        report.median_rotation_error_deg,
        report.mesh_ap.ap.mean,
        report.mesh_ap.ap50.mean,
        report.mesh_ap.ap75.mean
    );
    Ok(())
}

pub fn export_embeddings(a: ExportArgs, cfg: &RunConfig) -> CliResult {
    cfg.check_keys(&keys(&["split", "out"]))?;
    let split: Split = cfg.get_or("split", a.split, "val".to_string())?.parse().map_err(config_err)?;
    let out = out_dir(cfg.get("out", a.out)?)?;
    let m = load_model(a.model, cfg)?;
    let roi = roi_for(&m.params);
    let mut vectors = Vec::new();
    let mut objects = std::collections::BTreeSet::new();
    for s in m.data.split(split) {
        for (i, gt) in s.regions.iter().enumerate() {
            let region = crop_region(&s.image, &gt.mask, gt.bbox, gt.class_id, &roi)?;
            vectors.push(EmbeddingVector {
                values: predict_region(&m.params, &m.bins, &region)?.embedding,
                tag: EmbeddingTag::ImageRegion,
                class_id: gt.class_id,
                object_id: gt.object_id,
                view_id: s.image_id * MAX_OBJECTS as u32 + i as u32,
            });
            objects.insert(gt.object_id);
        }
    }
    let all_views = index_entries(&m.params, &m.data, true, &roi)?;
    let regions = vectors.len();
    vectors.extend(all_views.into_iter().filter(|v| objects.contains(&v.object_id)));
    write_embeddings(&out.join("embeddings.bin"), &vectors)?;
    println!("exported {regions} regions and {} views", vectors.len() - regions);
    Ok(())
}
