//! JSON schemas of the input and output files, and their conversion to
//! core values.

use std::collections::BTreeMap;
use std::path::Path;

use masktext_core::metrics::{GtInstance, InstancePrediction, LabelClass, LabelSet};
use masktext_core::{CameraIntrinsics, CameraPose, Mask2D, MaskTextPair, MergedProposal, Proposal3D, RegionMask3D};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, Error, Result};
use crate::json::{parse_document, parse_lines};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub frame_id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: Vec<f64>,
}

impl CameraRecord {
    pub fn to_core(&self, ctx: &str) -> Result<(CameraIntrinsics, CameraPose)> {
        let k = CameraIntrinsics::new(self.width, self.height, self.fx, self.fy, self.cx, self.cy)
            .map_err(|e| Error::from_core(ctx, e))?;
        let m: [f64; 16] = self.world_to_camera.as_slice().try_into().map_err(|_| {
            Error::format(ctx, format!("world_to_camera has {} values, expected 16", self.world_to_camera.len()))
        })?;
        let pose = CameraPose::new(m).map_err(|e| Error::from_core(ctx, e))?;
        Ok((k, pose))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RleRecord {
    /// `[height, width]`
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub mask_id: String,
    pub source: String,
    pub rle: RleRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasksFile {
    pub frame_id: String,
    pub masks: Vec<MaskRecord>,
}

impl MaskRecord {
    pub fn from_core(m: &Mask2D) -> Self {
        MaskRecord {
            mask_id: m.mask_id.clone(),
            source: m.source.clone(),
            rle: RleRecord { size: [m.height(), m.width()], counts: m.counts().to_vec() },
        }
    }

    pub fn to_core(&self, ctx: &str) -> Result<Mask2D> {
        let [h, w] = self.rle.size;
        Mask2D::new(h, w, self.rle.counts.clone(), self.mask_id.clone(), self.source.clone())
            .map_err(|e| Error::from_core(ctx, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub frame_id: String,
    pub mask_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSetFile {
    pub classes: Vec<LabelClassRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelClassRecord {
    pub id: i64,
    pub name: String,
    #[serde(default)]
    pub background: bool,
}

pub fn read_labelset(path: &Path) -> Result<LabelSet> {
    let ctx = format!("label set {}", path.display());
    let file: LabelSetFile = parse_document(&read_text(path, "label set")?, &ctx)?;
    let classes = file
        .classes
        .into_iter()
        .map(|c| LabelClass { id: c.id, name: c.name, background: c.background })
        .collect();
    LabelSet::new(classes).map_err(|e| Error::from_core(ctx, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFrame {
    pub frame_id: String,
    pub camera_json_path: String,
    pub depth_path: String,
    pub masks_json_path: String,
    pub captions_jsonl_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub scene_id: String,
    pub pointcloud_path: String,
    pub n_points: u64,
    pub frames: Vec<ManifestFrame>,
}

impl SceneManifest {
    pub fn validate(&self, ctx: &str) -> Result<()> {
        if self.pointcloud_path.is_empty() {
            return Err(Error::format(ctx, format!("scene {}: empty pointcloud_path", self.scene_id)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.frames {
            if !seen.insert(f.frame_id.as_str()) {
                return Err(Error::format(ctx, format!("scene {}: duplicate frame id {}", self.scene_id, f.frame_id)));
            }
            for p in [&f.camera_json_path, &f.depth_path, &f.masks_json_path, &f.captions_jsonl_path] {
                if p.is_empty() {
                    return Err(Error::format(ctx, format!("scene {} frame {}: empty path", self.scene_id, f.frame_id)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub pair_id: String,
    pub frame_id: String,
    pub mask_id: String,
    pub point_indices: Vec<u32>,
    pub caption: String,
}

impl PairRecord {
    pub fn from_core(p: &MaskTextPair) -> Self {
        PairRecord {
            pair_id: p.pair_id(),
            frame_id: p.frame_id.clone(),
            mask_id: p.mask_id.clone(),
            point_indices: p.region.indices().to_vec(),
            caption: p.caption.clone(),
        }
    }

    pub fn to_core(&self, n_points: u32, ctx: &str) -> Result<MaskTextPair> {
        if self.pair_id != masktext_core::scene::pair_id(&self.frame_id, &self.mask_id) {
            return Err(Error::format(ctx, format!("pair_id {} does not match frame/mask ids", self.pair_id)));
        }
        let region = RegionMask3D::from_unsorted(self.point_indices.clone(), n_points)
            .map_err(|e| Error::from_core(format!("{ctx}: pair {}", self.pair_id), e))?;
        MaskTextPair::new(region, self.caption.clone(), self.frame_id.clone(), self.mask_id.clone())
            .map_err(|e| Error::from_core(format!("{ctx}: pair {}", self.pair_id), e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub proposal_id: String,
    pub point_indices: Vec<u32>,
}

impl ProposalRecord {
    pub fn to_core(&self, n_points: u32, ctx: &str) -> Result<Proposal3D> {
        let c = format!("{ctx}: proposal {}", self.proposal_id);
        let region = RegionMask3D::from_unsorted(self.point_indices.clone(), n_points).map_err(|e| Error::from_core(&c, e))?;
        Proposal3D::new(self.proposal_id.clone(), region).map_err(|e| Error::from_core(&c, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergedRecord {
    pub proposal_id: String,
    pub point_indices: Vec<u32>,
    pub caption_ids: Vec<String>,
    pub concatenated_caption: String,
}

impl MergedRecord {
    pub fn from_core(m: &MergedProposal, concatenated_caption: String) -> Self {
        MergedRecord {
            proposal_id: m.proposal_id.clone(),
            point_indices: m.region.indices().to_vec(),
            caption_ids: m.caption_ids.clone(),
            concatenated_caption,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstancePredRecord {
    pub point_indices: Vec<u32>,
    pub score: f64,
    pub semantic_id: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtInstanceRecord {
    pub point_indices: Vec<u32>,
    pub semantic_id: i64,
}

impl InstancePredRecord {
    pub fn to_core(&self, n_points: u32, ctx: &str) -> Result<InstancePrediction> {
        let region = RegionMask3D::from_unsorted(self.point_indices.clone(), n_points).map_err(|e| Error::from_core(ctx, e))?;
        Ok(InstancePrediction { region, score: self.score, semantic_id: self.semantic_id })
    }
}

impl GtInstanceRecord {
    pub fn to_core(&self, n_points: u32, ctx: &str) -> Result<GtInstance> {
        let region = RegionMask3D::from_unsorted(self.point_indices.clone(), n_points).map_err(|e| Error::from_core(ctx, e))?;
        Ok(GtInstance { region, semantic_id: self.semantic_id })
    }
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    let text = read_text(path, what)?;
    parse_lines(&text, &format!("{what} {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = read_text(path, what)?;
    parse_document(&text, &format!("{what} {}", path.display()))
}

/// Captions of one frame keyed by mask id; duplicates and foreign frame ids
/// are rejected.
pub fn captions_by_mask(records: Vec<CaptionRecord>, frame_id: &str, ctx: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for r in records {
        if r.frame_id != frame_id {
            return Err(Error::Contract(format!("{ctx}: caption for mask {} names frame {}, expected {frame_id}", r.mask_id, r.frame_id)));
        }
        if out.insert(r.mask_id.clone(), r.text).is_some() {
            return Err(Error::format(ctx, format!("frame {frame_id}: duplicate caption for mask {}", r.mask_id)));
        }
    }
    Ok(out)
}
