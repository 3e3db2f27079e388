//! The pipelines behind each subcommand. Every `run_*` reads its inputs,
//! calls into the core crate and writes canonical outputs into `out`.
//!
//! Work inside a command is spread over the ambient rayon pool; results are
//! always gathered in input order so output bytes do not depend on it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use masktext_core::loss::{self, ContrastiveConfig, LossWeights, MaskLossInputs, ObjectnessScores, SoftMaskMatrix};
use masktext_core::metrics::{self, GtInstance, LabelSet};
use masktext_core::{fusion, CameraFrame, EmbeddingMatrix, FrameInput, FusionConfig, MaskTextPair, MergeConfig, RegionMask3D};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{write_bytes, Error, Result};
use crate::json::{canonical_document, canonical_lines};
use crate::records::*;
use crate::{depth, emb, ply};

fn create_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Write { path: out.to_path_buf(), source: e })
}

/// First error in input order, so failures are reported deterministically.
fn collect_ordered<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

// ---------------------------------------------------------------- fuse

#[derive(Debug, Clone)]
pub struct FuseOptions {
    pub manifest: PathBuf,
    pub epsilon: f64,
    pub stride: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuseReportRecord {
    pub scene_id: String,
    pub frames_processed: usize,
    pub masks_in: usize,
    pub pairs_out: usize,
    pub empty_regions_skipped: usize,
}

fn load_frame(base: &Path, scene_id: &str, f: &ManifestFrame) -> Result<FrameInput> {
    let ctx = format!("scene {scene_id} frame {}", f.frame_id);
    let camera: CameraRecord = read_json(&resolve(base, &f.camera_json_path), "camera")
        .map_err(|e| prefix(e, &ctx))?;
    if camera.frame_id != f.frame_id {
        return Err(Error::Contract(format!("{ctx}: camera file is for frame {}", camera.frame_id)));
    }
    let (k, pose) = camera.to_core(&format!("{ctx}: camera"))?;
    let depth = depth::read_depth(&resolve(base, &f.depth_path)).map_err(|e| prefix(e, &ctx))?;
    let masks_file: MasksFile = read_json(&resolve(base, &f.masks_json_path), "masks").map_err(|e| prefix(e, &ctx))?;
    if masks_file.frame_id != f.frame_id {
        return Err(Error::Contract(format!("{ctx}: masks file is for frame {}", masks_file.frame_id)));
    }
    let masks = masks_file
        .masks
        .iter()
        .map(|m| m.to_core(&format!("{ctx}: masks")))
        .collect::<Result<Vec<_>>>()?;
    let captions: Vec<CaptionRecord> =
        read_jsonl(&resolve(base, &f.captions_jsonl_path), "captions").map_err(|e| prefix(e, &ctx))?;
    let captions = captions_by_mask(captions, &f.frame_id, &format!("{ctx}: captions"))?;
    let frame = CameraFrame::new(f.frame_id.clone(), k, pose, depth).map_err(|e| Error::from_core(&ctx, e))?;
    Ok(FrameInput { frame, masks, captions })
}

fn prefix(e: Error, ctx: &str) -> Error {
    match e {
        Error::Read { context, path, source } => Error::Read { context: format!("{ctx}: {context}"), path, source },
        Error::Format { context, message } => Error::Format { context: format!("{ctx}: {context}"), message },
        Error::Contract(m) => Error::Contract(format!("{ctx}: {m}")),
        other => other,
    }
}

pub fn run_fuse(opts: &FuseOptions) -> Result<FuseReportRecord> {
    let manifest: SceneManifest = read_json(&opts.manifest, "manifest")?;
    let mctx = format!("manifest {}", opts.manifest.display());
    manifest.validate(&mctx)?;
    let scene = manifest.scene_id.as_str();
    let cfg = FusionConfig::new(opts.epsilon, opts.stride).map_err(|e| Error::from_core(format!("scene {scene}"), e))?;
    let base = opts.manifest.parent().unwrap_or(Path::new("."));

    let cloud = ply::read_ply(&resolve(base, &manifest.pointcloud_path)).map_err(|e| prefix(e, &format!("scene {scene}")))?;
    if cloud.len() as u64 != manifest.n_points {
        return Err(Error::Contract(format!(
            "scene {scene}: manifest declares {} points, point cloud has {}",
            manifest.n_points,
            cloud.len()
        )));
    }
    if cloud.len() > u32::MAX as usize {
        return Err(Error::Contract(format!("scene {scene}: too many points")));
    }

    let selected: Vec<&ManifestFrame> =
        manifest.frames.iter().enumerate().filter(|(i, _)| cfg.selects(*i)).map(|(_, f)| f).collect();
    let outputs = collect_ordered(
        selected
            .par_iter()
            .map(|f| {
                let input = load_frame(base, scene, f)?;
                fusion::fuse_frame(&cloud, &input, &cfg).map_err(|e| Error::from_core(format!("scene {scene}"), e))
            })
            .collect(),
    )?;
    let fused = fusion::assemble(outputs).map_err(|e| Error::from_core(format!("scene {scene}"), e))?;

    create_out_dir(&opts.out)?;
    let records: Vec<PairRecord> = fused.pairs.par_iter().map(PairRecord::from_core).collect();
    write_bytes(&opts.out.join("pairs.jsonl"), &canonical_lines(&records))?;
    let r = fused.report;
    let report = FuseReportRecord {
        scene_id: manifest.scene_id.clone(),
        frames_processed: r.frames_processed,
        masks_in: r.masks_in,
        pairs_out: r.pairs_out,
        empty_regions_skipped: r.empty_regions_skipped,
    };
    write_bytes(&opts.out.join("fuse_report.json"), &canonical_document(&report))?;
    Ok(report)
}

// ---------------------------------------------------------------- merge

#[derive(Debug, Clone)]
pub struct MergeOptions {
    pub pairs: PathBuf,
    pub proposals: PathBuf,
    /// Inferred as one past the largest point index when absent.
    pub n_points: Option<u32>,
    pub iou_threshold: f64,
    pub max_captions: usize,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReportRecord {
    pub pairs_in: usize,
    pub proposals_in: usize,
    pub merged_out: usize,
    pub assigned: usize,
    pub unassigned: usize,
}

pub fn run_merge(opts: &MergeOptions) -> Result<MergeReportRecord> {
    let cfg = MergeConfig { iou_threshold: opts.iou_threshold, max_captions: opts.max_captions, shuffle_seed: opts.seed };
    cfg.validate().map_err(|e| Error::from_core("merge", e))?;
    let pair_records: Vec<PairRecord> = read_jsonl(&opts.pairs, "pairs")?;
    let proposal_records: Vec<ProposalRecord> = read_jsonl(&opts.proposals, "proposals")?;

    let max_index = pair_records
        .iter()
        .flat_map(|p| &p.point_indices)
        .chain(proposal_records.iter().flat_map(|p| &p.point_indices))
        .max()
        .copied();
    let n_points = match (opts.n_points, max_index) {
        (Some(n), _) => n,
        (None, Some(m)) => m.checked_add(1).ok_or_else(|| Error::Contract("point index out of range".into()))?,
        (None, None) => 0,
    };

    let pctx = format!("pairs {}", opts.pairs.display());
    let pairs: Vec<MaskTextPair> = collect_ordered(pair_records.par_iter().map(|r| r.to_core(n_points, &pctx)).collect())?;
    let qctx = format!("proposals {}", opts.proposals.display());
    let proposals = collect_ordered(proposal_records.par_iter().map(|r| r.to_core(n_points, &qctx)).collect())?;
    let mut seen = std::collections::BTreeSet::new();
    for p in &proposals {
        if !seen.insert(p.proposal_id.as_str()) {
            return Err(Error::format(&qctx, format!("duplicate proposal id {}", p.proposal_id)));
        }
    }

    let out = masktext_core::merge_captions(&pairs, &proposals, &cfg).map_err(|e| Error::from_core("merge", e))?;
    let captions: BTreeMap<String, String> = pairs.iter().map(|p| (p.pair_id(), p.caption.clone())).collect();
    let merged = collect_ordered(
        out.merged
            .par_iter()
            .map(|m| {
                let text = masktext_core::concat_captions(m, &captions, &cfg).map_err(|e| Error::from_core("merge", e))?;
                Ok(MergedRecord::from_core(m, text))
            })
            .collect(),
    )?;

    create_out_dir(&opts.out)?;
    write_bytes(&opts.out.join("merged.jsonl"), &canonical_lines(&merged))?;
    let report = MergeReportRecord {
        pairs_in: pairs.len(),
        proposals_in: proposals.len(),
        merged_out: merged.len(),
        assigned: out.assigned,
        unassigned: out.unassigned,
    };
    write_bytes(&opts.out.join("merge_report.json"), &canonical_document(&report))?;
    Ok(report)
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Clone)]
pub struct StatsOptions {
    /// One pairs file per scene.
    pub pairs: Vec<PathBuf>,
    /// The matching point cloud of each scene.
    pub pointclouds: Vec<PathBuf>,
    /// Report entropy multiplied by 100.
    pub entropy_x100: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub n_points: usize,
    pub pairs: usize,
    pub coverage_pct: f64,
    /// Absent when the cloud has no instance labels.
    pub entropy: Option<EntropyStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyStats {
    pub mean: f64,
    pub masks: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionSummary {
    pub total_tokens: usize,
    pub unique_normalized_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub scenes: Vec<SceneStats>,
    pub mean_coverage_pct: f64,
    /// Mean over all entropy-bearing masks of all scenes.
    pub mean_entropy: Option<f64>,
    pub entropy_unit: String,
    pub captions: CaptionSummary,
}

pub fn run_stats(opts: &StatsOptions) -> Result<StatsRecord> {
    if opts.pairs.len() != opts.pointclouds.len() {
        return Err(Error::Contract(format!(
            "stats: {} pairs files but {} point clouds",
            opts.pairs.len(),
            opts.pointclouds.len()
        )));
    }
    let scale = if opts.entropy_x100 { 100.0 } else { 1.0 };
    let scenes = collect_ordered(
        opts.pairs
            .par_iter()
            .zip(opts.pointclouds.par_iter())
            .map(|(pairs_path, cloud_path)| -> Result<(SceneStats, Vec<f64>, Vec<String>)> {
                let cloud = ply::read_ply(cloud_path)?;
                let ctx = format!("pairs {}", pairs_path.display());
                let n = u32::try_from(cloud.len()).map_err(|_| Error::Contract(format!("{ctx}: cloud too large")))?;
                let records: Vec<PairRecord> = read_jsonl(pairs_path, "pairs")?;
                let pairs = records.iter().map(|r| r.to_core(n, &ctx)).collect::<Result<Vec<_>>>()?;
                let coverage_pct = metrics::coverage(&pairs, cloud.len()).map_err(|e| Error::from_core(&ctx, e))?;
                let (entropy, bits) = if cloud.instance_id().is_some() {
                    let r = metrics::mask_entropy(&pairs, &cloud).map_err(|e| Error::from_core(&ctx, e))?;
                    let bits: Vec<f64> = r.per_mask.iter().map(|(_, b)| *b).collect();
                    let stats = EntropyStats { mean: r.mean_bits * scale, masks: bits.len(), skipped: r.skipped };
                    (Some(stats), bits)
                } else {
                    (None, Vec::new())
                };
                let captions = pairs.into_iter().map(|p| p.caption).collect();
                Ok((SceneStats { n_points: cloud.len(), pairs: records.len(), coverage_pct, entropy }, bits, captions))
            })
            .collect(),
    )?;

    let mut per_scene = Vec::new();
    let mut all_bits = Vec::new();
    let mut all_captions = Vec::new();
    let mut any_entropy = false;
    for (s, bits, captions) in scenes {
        any_entropy |= s.entropy.is_some();
        per_scene.push(s);
        all_bits.extend(bits);
        all_captions.extend(captions);
    }
    let coverages: Vec<f64> = per_scene.iter().map(|s| s.coverage_pct).collect();
    let mean_entropy = any_entropy.then(|| {
        if all_bits.is_empty() {
            f64::NAN
        } else {
            scale * all_bits.iter().sum::<f64>() / all_bits.len() as f64
        }
    });
    let caption_stats = metrics::caption_stats(&all_captions, metrics::DEFAULT_STOPWORDS);
    let record = StatsRecord {
        scenes: per_scene,
        mean_coverage_pct: metrics::mean_coverage(&coverages),
        mean_entropy,
        entropy_unit: if opts.entropy_x100 { "bits_x100" } else { "bits" }.into(),
        captions: CaptionSummary {
            total_tokens: caption_stats.total_tokens,
            unique_normalized_tokens: caption_stats.unique_normalized_tokens,
        },
    };
    create_out_dir(&opts.out)?;
    write_bytes(&opts.out.join("stats.json"), &canonical_document(&record))?;
    let mut vocab = String::new();
    for t in &caption_stats.vocabulary {
        vocab.push_str(t);
        vocab.push('\n');
    }
    write_bytes(&opts.out.join("vocabulary.txt"), vocab.as_bytes())?;
    Ok(record)
}

// ---------------------------------------------------------------- eval-sem

#[derive(Debug, Clone)]
pub struct EvalSemOptions {
    pub point_feats: PathBuf,
    /// One row per class of the label set, in label-set order.
    pub class_emb: PathBuf,
    pub labels: PathBuf,
    /// Ground truth from the `semantic_id` property; -1 is ignored.
    pub gt_pointcloud: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub name: String,
    pub iou: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSemRecord {
    pub f_miou: f64,
    pub f_macc: f64,
    pub n_points: usize,
    pub per_class: BTreeMap<String, ClassScore>,
}

pub fn run_eval_sem(opts: &EvalSemOptions) -> Result<EvalSemRecord> {
    let labels = read_labelset(&opts.labels)?;
    let feats = emb::read_embeddings(&opts.point_feats)?;
    let classes = emb::read_embeddings(&opts.class_emb)?;
    let cloud = ply::read_ply(&opts.gt_pointcloud)?;
    if classes.count() != labels.classes().len() {
        return Err(Error::Contract(format!(
            "{} class embeddings for {} label-set classes",
            classes.count(),
            labels.classes().len()
        )));
    }
    let gt = cloud
        .semantic_id()
        .ok_or_else(|| Error::Contract(format!("{} has no semantic_id property", opts.gt_pointcloud.display())))?;
    if feats.count() != cloud.len() {
        return Err(Error::Contract(format!("{} point features for {} points", feats.count(), cloud.len())));
    }
    let pred_idx = metrics::semantic_predict(&feats, &classes).map_err(|e| Error::from_core("eval-sem", e))?;
    let pred: Vec<i64> = pred_idx.iter().map(|&c| labels.classes()[c].id).collect();
    let gt: Vec<i64> = gt.iter().map(|&g| g as i64).collect();
    let s = metrics::fg_miou_macc(&pred, &gt, &labels).map_err(|e| Error::from_core("eval-sem", e))?;
    let names: BTreeMap<i64, &str> = labels.classes().iter().map(|c| (c.id, c.name.as_str())).collect();
    let per_class = s
        .per_class_iou
        .iter()
        .map(|(id, iou)| {
            let acc = s.per_class_acc[id];
            (id.to_string(), ClassScore { name: names[id].to_string(), iou: *iou, acc })
        })
        .collect();
    let record = EvalSemRecord { f_miou: s.f_miou, f_macc: s.f_macc, n_points: cloud.len(), per_class };
    create_out_dir(&opts.out)?;
    write_bytes(&opts.out.join("eval_sem.json"), &canonical_document(&record))?;
    Ok(record)
}

// ---------------------------------------------------------------- eval-inst

#[derive(Debug, Clone)]
pub enum GtSource {
    /// JSONL of `{point_indices, semantic_id}`; needs the point count.
    Records { path: PathBuf, n_points: u32 },
    /// Instances from `instance_id >= 0`, classed by majority `semantic_id`.
    PointCloud(PathBuf),
}

#[derive(Debug, Clone)]
pub struct EvalInstOptions {
    pub pred: PathBuf,
    pub gt: GtSource,
    pub labels: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassApRecord {
    pub ap: f64,
    pub ap50: f64,
    pub ap25: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstRecord {
    pub map: f64,
    pub ap50: f64,
    pub ap25: f64,
    pub per_class: BTreeMap<String, ClassApRecord>,
}

/// Ground-truth instances of a labeled cloud, ordered by instance id.
/// Points with a negative semantic id do not vote; instances without any
/// voting point are dropped.
pub fn gt_instances_from_cloud(cloud: &masktext_core::PointCloud) -> Result<Vec<GtInstance>> {
    let inst = cloud.instance_id().ok_or_else(|| Error::Contract("point cloud has no instance_id property".into()))?;
    let sem = cloud.semantic_id().ok_or_else(|| Error::Contract("point cloud has no semantic_id property".into()))?;
    let mut members: BTreeMap<i32, (Vec<u32>, BTreeMap<i32, usize>)> = BTreeMap::new();
    for (i, (&id, &s)) in inst.iter().zip(sem).enumerate() {
        if id < 0 {
            continue;
        }
        let e = members.entry(id).or_default();
        e.0.push(i as u32);
        if s >= 0 {
            *e.1.entry(s).or_default() += 1;
        }
    }
    let n = cloud.len() as u32;
    Ok(members
        .into_values()
        .filter_map(|(idx, votes)| {
            // max_by_key keeps the last maximum; iterate descending so ties go to the lowest id
            let class = votes.iter().rev().max_by_key(|(_, c)| **c).map(|(s, _)| *s)?;
            let region = RegionMask3D::new(idx, n).expect("ascending indices");
            Some(GtInstance { region, semantic_id: class as i64 })
        })
        .collect())
}

pub fn run_eval_inst(opts: &EvalInstOptions) -> Result<EvalInstRecord> {
    let labels: LabelSet = read_labelset(&opts.labels)?;
    let (gt, n_points) = match &opts.gt {
        GtSource::Records { path, n_points } => {
            let recs: Vec<GtInstanceRecord> = read_jsonl(path, "ground truth")?;
            let ctx = format!("ground truth {}", path.display());
            (recs.iter().map(|r| r.to_core(*n_points, &ctx)).collect::<Result<Vec<_>>>()?, *n_points)
        }
        GtSource::PointCloud(path) => {
            let cloud = ply::read_ply(path)?;
            let gt = gt_instances_from_cloud(&cloud).map_err(|e| prefix(e, &format!("ground truth {}", path.display())))?;
            (gt, cloud.len() as u32)
        }
    };
    let recs: Vec<InstancePredRecord> = read_jsonl(&opts.pred, "predictions")?;
    let ctx = format!("predictions {}", opts.pred.display());
    let preds = recs.iter().map(|r| r.to_core(n_points, &ctx)).collect::<Result<Vec<_>>>()?;
    let s = metrics::instance_ap(&preds, &gt, &labels).map_err(|e| Error::from_core("eval-inst", e))?;
    let record = EvalInstRecord {
        map: s.map,
        ap50: s.ap50,
        ap25: s.ap25,
        per_class: s
            .per_class
            .iter()
            .map(|(id, c)| (id.to_string(), ClassApRecord { ap: c.ap, ap50: c.ap50, ap25: c.ap25 }))
            .collect(),
    };
    create_out_dir(&opts.out)?;
    write_bytes(&opts.out.join("eval_inst.json"), &canonical_document(&record))?;
    Ok(record)
}

// ---------------------------------------------------------------- loss

/// Loss fixture: `Q` queries over `n_points` points and `M` ground-truth
/// masks. `pred_masks` holds probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossFixture {
    pub n_points: u32,
    pub objectness: Vec<[f64; 2]>,
    pub pred_masks: Vec<Vec<f64>>,
    pub gt_regions: Vec<Vec<u32>>,
    pub mask_emb: Vec<Vec<f64>>,
    pub caption_emb: Vec<Vec<f64>>,
    #[serde(default)]
    pub point_contrastive: Option<PointContrastiveFixture>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointContrastiveFixture {
    pub point_emb: Vec<Vec<f64>>,
    pub text_emb: Vec<Vec<f64>>,
    pub regions: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct LossOptions {
    pub input: PathBuf,
    pub weights: LossWeights,
    pub contrastive: ContrastiveConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub obj: f64,
    pub dice: f64,
    pub bce: f64,
    pub cap: f64,
    pub total: f64,
    pub matches: Vec<[usize; 2]>,
    pub point_contrastive: Option<f64>,
}

fn embeddings(rows: &[Vec<f64>], dim_hint: usize, ctx: &str) -> Result<EmbeddingMatrix> {
    if rows.is_empty() {
        return EmbeddingMatrix::new(0, dim_hint.max(1), Vec::new(), false).map_err(|e| Error::from_core(ctx, e));
    }
    EmbeddingMatrix::from_rows(rows).map_err(|e| Error::from_core(ctx, e))
}

fn regions(list: &[Vec<u32>], n: u32, ctx: &str) -> Result<Vec<RegionMask3D>> {
    list.iter()
        .map(|r| RegionMask3D::from_unsorted(r.clone(), n).map_err(|e| Error::from_core(ctx, e)))
        .collect()
}

pub fn compute_loss(fx: &LossFixture, w: &LossWeights, cfg: &ContrastiveConfig) -> Result<LossRecord> {
    let ctx = "loss fixture";
    let core = |e| Error::from_core(ctx, e);
    let n = fx.n_points as usize;
    if let Some(q) = fx.pred_masks.iter().position(|r| r.len() != n) {
        return Err(Error::Contract(format!("{ctx}: pred_masks row {q} has {} values, expected {n}", fx.pred_masks[q].len())));
    }
    let pred = SoftMaskMatrix::new(fx.pred_masks.len(), n, fx.pred_masks.concat()).map_err(core)?;
    let scores = ObjectnessScores::new(fx.objectness.clone()).map_err(core)?;
    let gt = regions(&fx.gt_regions, fx.n_points, ctx)?;
    let dim = fx.mask_emb.first().or(fx.caption_emb.first()).map_or(1, Vec::len);
    let mask_emb = embeddings(&fx.mask_emb, dim, ctx)?;
    let caption_emb = embeddings(&fx.caption_emb, dim, ctx)?;
    let inputs = MaskLossInputs { scores: &scores, pred: &pred, gt_regions: &gt, mask_emb: &mask_emb, caption_emb: &caption_emb };
    let b = loss::total_mask_loss(&inputs, w, cfg).map_err(core)?;
    let point_contrastive = match &fx.point_contrastive {
        None => None,
        Some(pc) => {
            let n_pts = u32::try_from(pc.point_emb.len()).map_err(|_| Error::Contract(format!("{ctx}: too many points")))?;
            let d = pc.point_emb.first().map_or(1, Vec::len);
            let pts = embeddings(&pc.point_emb, d, ctx)?;
            let txt = embeddings(&pc.text_emb, d, ctx)?;
            let regs = regions(&pc.regions, n_pts, ctx)?;
            Some(loss::point_contrastive_loss(&pts, &txt, &regs, cfg).map_err(core)?)
        }
    };
    Ok(LossRecord {
        obj: b.obj,
        dice: b.dice,
        bce: b.bce,
        cap: b.cap,
        total: b.total,
        matches: b.matches.iter().map(|&(q, m)| [q, m]).collect(),
        point_contrastive,
    })
}

pub fn run_loss(opts: &LossOptions) -> Result<LossRecord> {
    let fixture: LossFixture = read_json(&opts.input, "loss fixture")?;
    let record = compute_loss(&fixture, &opts.weights, &opts.contrastive)?;
    create_out_dir(&opts.out)?;
    write_bytes(&opts.out.join("loss.json"), &canonical_document(&record))?;
    Ok(record)
}

// ---------------------------------------------------------------- inspect

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InspectKind {
    Ply,
    Depth,
    Emb,
    Masks,
}

/// Loads one file and returns a one-line canonical JSON summary.
pub fn inspect(kind: InspectKind, path: &Path) -> Result<String> {
    let v = match kind {
        InspectKind::Ply => {
            let c = ply::read_ply(path)?;
            serde_json::json!({
                "kind": "ply",
                "n_points": c.len(),
                "instance_id": c.instance_id().is_some(),
                "semantic_id": c.semantic_id().is_some(),
            })
        }
        InspectKind::Depth => {
            let d = depth::read_raw_depth(path)?;
            let m = d.to_depth_map()?;
            let valid = m.values().iter().filter(|&&v| v > 0.0).count();
            serde_json::json!({"kind": "depth", "height": d.height, "width": d.width, "scale": d.scale as f64, "valid": valid})
        }
        InspectKind::Emb => {
            let e = emb::read_embeddings(path)?;
            serde_json::json!({"kind": "emb", "count": e.count(), "dim": e.dim(), "normalized": e.is_normalized()})
        }
        InspectKind::Masks => {
            let f: MasksFile = read_json(path, "masks")?;
            let ctx = format!("masks {}", path.display());
            let areas = f.masks.iter().map(|m| Ok(m.to_core(&ctx)?.area())).collect::<Result<Vec<u64>>>()?;
            serde_json::json!({"kind": "masks", "frame_id": f.frame_id, "masks": f.masks.len(), "areas": areas})
        }
    };
    Ok(crate::json::to_canonical(&v))
}
