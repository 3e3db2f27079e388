//! Lifting per-frame 2D masks onto a point cloud.
//!
//! A point joins the region of mask `k` in a frame when it projects in front
//! of the camera onto a pixel set in `k`, that pixel carries a valid depth,
//! and the point's camera-space depth is strictly within `epsilon` of it.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{contract, format_err, Result};
use crate::mask::{Mask2D, RegionMask3D};
use crate::scene::{CameraIntrinsics, CameraPose, DepthMap, MaskTextPair, PointCloud};

/// A posed RGB-D view.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub frame_id: String,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    depth: DepthMap,
}

impl CameraFrame {
    pub fn new(frame_id: String, intrinsics: CameraIntrinsics, pose: CameraPose, depth: DepthMap) -> Result<Self> {
        intrinsics.validate()?;
        if depth.width() != intrinsics.width || depth.height() != intrinsics.height {
            return Err(contract!(
                "frame {frame_id}: depth is {}x{} but intrinsics are {}x{}",
                depth.width(),
                depth.height(),
                intrinsics.width,
                intrinsics.height
            ));
        }
        Ok(Self { frame_id, intrinsics, pose, depth })
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn pose(&self) -> &CameraPose {
        &self.pose
    }

    pub fn depth(&self) -> &DepthMap {
        &self.depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Depth tolerance in meters.
    pub epsilon: f64,
    /// Only frames whose ordinal is a multiple of the stride are fused.
    pub frame_stride: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, frame_stride: 1 }
    }
}

impl FusionConfig {
    pub fn new(epsilon: f64, frame_stride: usize) -> Result<Self> {
        let cfg = Self { epsilon, frame_stride };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(contract!("epsilon must be positive and finite, got {}", self.epsilon));
        }
        if self.frame_stride == 0 {
            return Err(contract!("frame stride must be at least 1"));
        }
        Ok(())
    }

    pub fn selects(&self, ordinal: usize) -> bool {
        ordinal % self.frame_stride == 0
    }
}

/// Pixel column, pixel row and camera-space depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: u32,
    pub v: u32,
    pub depth: f64,
}

/// Projects a world point to its nearest pixel, or `None` when it is behind
/// the camera or outside the half-open image domain.
#[inline]
pub fn project_point(p: [f64; 3], frame: &CameraFrame) -> Option<Projection> {
    project(p, &frame.pose, &frame.intrinsics)
}

#[inline]
fn project(p: [f64; 3], pose: &CameraPose, k: &CameraIntrinsics) -> Option<Projection> {
    let [x, y, z] = pose.transform(p);
    if !(z > 0.0) {
        return None;
    }
    let u = libm::round(k.fx * x / z + k.cx);
    let v = libm::round(k.fy * y / z + k.cy);
    if !(u >= 0.0 && u < k.width as f64 && v >= 0.0 && v < k.height as f64) {
        return None;
    }
    Some(Projection { u: u as u32, v: v as u32, depth: z })
}

/// Points passing the depth-consistency test in `frame`, as
/// `(point index, row-major pixel index)` in ascending point order.
///
/// The test does not depend on any mask, so it is evaluated once per frame.
pub fn visible_points(cloud: &PointCloud, frame: &CameraFrame, cfg: &FusionConfig) -> Vec<(u32, u32)> {
    let width = frame.intrinsics.width;
    let mut out = Vec::new();
    for (i, &p) in cloud.points().iter().enumerate() {
        if let Some(proj) = project(p, &frame.pose, &frame.intrinsics) {
            let d = frame.depth.at(proj.u, proj.v);
            if d > 0.0 && libm::fabs(proj.depth - d) < cfg.epsilon {
                out.push((i as u32, proj.v * width + proj.u));
            }
        }
    }
    out
}

/// Builds one 3D region per input mask, aligned by index.
pub fn associate_frame(
    cloud: &PointCloud,
    frame: &CameraFrame,
    masks: &[Mask2D],
    cfg: &FusionConfig,
) -> Result<Vec<RegionMask3D>> {
    cfg.validate()?;
    check_mask_dims(frame, masks)?;
    let visible = visible_points(cloud, frame, cfg);
    Ok(regions_from_visible(&visible, masks, cloud.len() as u32))
}

fn check_mask_dims(frame: &CameraFrame, masks: &[Mask2D]) -> Result<()> {
    let k = &frame.intrinsics;
    for m in masks {
        if m.width() != k.width || m.height() != k.height {
            return Err(contract!(
                "frame {}: mask {} is {}x{} but the frame is {}x{}",
                frame.frame_id,
                m.mask_id,
                m.width(),
                m.height(),
                k.width,
                k.height
            ));
        }
    }
    Ok(())
}

fn regions_from_visible(visible: &[(u32, u32)], masks: &[Mask2D], n_points: u32) -> Vec<RegionMask3D> {
    masks
        .iter()
        .map(|m| {
            let grid = m.decode();
            let indices: Vec<u32> = visible
                .iter()
                .filter(|(_, px)| grid[*px as usize])
                .map(|(i, _)| *i)
                .collect();
            RegionMask3D::new(indices, n_points).expect("visible points are ascending and in range")
        })
        .collect()
}

/// One frame's masks with captions keyed by mask id.
#[derive(Debug, Clone)]
pub struct FrameInput {
    pub frame: CameraFrame,
    pub masks: Vec<Mask2D>,
    pub captions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub pairs: Vec<MaskTextPair>,
    pub masks_in: usize,
    pub empty_regions_skipped: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FuseReport {
    pub frames_processed: usize,
    pub masks_in: usize,
    pub pairs_out: usize,
    pub empty_regions_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseOutput {
    /// Sorted by `(frame_id, mask_id)`.
    pub pairs: Vec<MaskTextPair>,
    pub report: FuseReport,
}

/// Fuses a single frame into mask-text pairs, dropping empty regions.
pub fn fuse_frame(cloud: &PointCloud, input: &FrameInput, cfg: &FusionConfig) -> Result<FrameOutput> {
    let frame_id = &input.frame.frame_id;
    let mut seen = BTreeMap::new();
    for m in &input.masks {
        if seen.insert(m.mask_id.as_str(), ()).is_some() {
            return Err(format_err!("frame {frame_id}: duplicate mask id {}", m.mask_id));
        }
    }
    let mut captions = Vec::with_capacity(input.masks.len());
    for m in &input.masks {
        let text = input
            .captions
            .get(&m.mask_id)
            .ok_or_else(|| format_err!("frame {frame_id}: no caption for mask {}", m.mask_id))?;
        if text.trim().is_empty() {
            return Err(format_err!("frame {frame_id}: caption for mask {} is empty", m.mask_id));
        }
        captions.push(text);
    }

    let regions = associate_frame(cloud, &input.frame, &input.masks, cfg)?;
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for ((m, region), text) in input.masks.iter().zip(regions).zip(captions) {
        if region.is_empty() {
            skipped += 1;
            continue;
        }
        pairs.push(MaskTextPair {
            region,
            caption: text.clone(),
            frame_id: frame_id.clone(),
            mask_id: m.mask_id.clone(),
        });
    }
    Ok(FrameOutput { pairs, masks_in: input.masks.len(), empty_regions_skipped: skipped })
}

/// Combines per-frame outputs into the sorted scene output.
///
/// The result does not depend on the order of `outputs`.
pub fn assemble(outputs: Vec<FrameOutput>) -> Result<FuseOutput> {
    let mut report = FuseReport { frames_processed: outputs.len(), ..Default::default() };
    let mut pairs = Vec::new();
    for out in outputs {
        report.masks_in += out.masks_in;
        report.empty_regions_skipped += out.empty_regions_skipped;
        pairs.extend(out.pairs);
    }
    pairs.sort_by(|a, b| (&a.frame_id, &a.mask_id).cmp(&(&b.frame_id, &b.mask_id)));
    if let Some(w) = pairs.windows(2).find(|w| w[0].frame_id == w[1].frame_id && w[0].mask_id == w[1].mask_id) {
        return Err(format_err!("duplicate pair for frame {} mask {}", w[0].frame_id, w[0].mask_id));
    }
    report.pairs_out = pairs.len();
    Ok(FuseOutput { pairs, report })
}

/// Fuses every selected frame of a scene, serially.
pub fn fuse_scene(cloud: &PointCloud, frames: &[FrameInput], cfg: &FusionConfig) -> Result<FuseOutput> {
    cfg.validate()?;
    let outputs = frames
        .iter()
        .enumerate()
        .filter(|(i, _)| cfg.selects(*i))
        .map(|(_, f)| fuse_frame(cloud, f, cfg))
        .collect::<Result<Vec<_>>>()?;
    assemble(outputs)
}
