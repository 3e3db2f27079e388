//! Domain types shared by every stage of the pipeline.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::mask::RegionMask3D;

/// A point cloud with optional per-point ground-truth labels.
///
/// Labels use `-1` for unlabeled points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
    instance_id: Option<Vec<i32>>,
    semantic_id: Option<Vec<i32>>,
}

impl PointCloud {
    pub fn new(
        points: Vec<[f64; 3]>,
        instance_id: Option<Vec<i32>>,
        semantic_id: Option<Vec<i32>>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(contract!("point cloud must contain at least one point"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(contract!("point {i} has a non-finite coordinate"));
        }
        for (name, labels) in [("instance_id", &instance_id), ("semantic_id", &semantic_id)] {
            if let Some(labels) = labels {
                if labels.len() != points.len() {
                    return Err(contract!(
                        "{name} has {} entries for {} points",
                        labels.len(),
                        points.len()
                    ));
                }
            }
        }
        Ok(Self { points, instance_id, semantic_id })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed cloud; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn instance_id(&self) -> Option<&[i32]> {
        self.instance_id.as_deref()
    }

    pub fn semantic_id(&self) -> Option<&[i32]> {
        self.semantic_id.as_deref()
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(width: u32, height: u32, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self { width, height, fx, fy, cx, cy };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(contract!("image size {}x{} must be at least 1x1", self.width, self.height));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(contract!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(contract!("principal point must be finite"));
        }
        Ok(())
    }
}

/// Rigid world-to-camera transform stored as a row-major 4x4 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    world_to_camera: [f64; 16],
}

const ROTATION_TOL: f64 = 1e-6;

impl CameraPose {
    pub const IDENTITY: CameraPose = CameraPose {
        world_to_camera: [
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    };

    pub fn new(world_to_camera: [f64; 16]) -> Result<Self> {
        let m = &world_to_camera;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(contract!("pose contains non-finite entries"));
        }
        if m[12..] != [0.0, 0.0, 0.0, 1.0] {
            return Err(contract!("pose bottom row must be [0, 0, 0, 1]"));
        }
        let r = |i: usize, j: usize| m[i * 4 + j];
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r(k, i) * r(k, j)).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if libm::fabs(dot - expect) > ROTATION_TOL {
                    return Err(contract!("pose rotation block is not orthonormal"));
                }
            }
        }
        let det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1))
            - r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0))
            + r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
        if libm::fabs(det - 1.0) > ROTATION_TOL {
            return Err(contract!("pose rotation block has determinant {det}, expected 1"));
        }
        Ok(Self { world_to_camera })
    }

    /// Builds a pose from a rotation (row-major 3x3) and translation.
    pub fn from_rotation_translation(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let mut m = [0.0; 16];
        for i in 0..3 {
            m[i * 4..i * 4 + 3].copy_from_slice(&rotation[i]);
            m[i * 4 + 3] = translation[i];
        }
        m[15] = 1.0;
        Self::new(m)
    }

    pub fn matrix(&self) -> &[f64; 16] {
        &self.world_to_camera
    }

    /// Maps a world point into camera coordinates.
    #[inline]
    pub fn transform(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.world_to_camera;
        [
            m[0] * p[0] + m[1] * p[1] + m[2] * p[2] + m[3],
            m[4] * p[0] + m[5] * p[1] + m[6] * p[2] + m[7],
            m[8] * p[0] + m[9] * p[1] + m[10] * p[2] + m[11],
        ]
    }
}

/// Metric depth image; `0.0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: u32,
    width: u32,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(height: u32, width: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != height as usize * width as usize {
            return Err(contract!(
                "depth map has {} values for {height}x{width} pixels",
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(contract!("depth value at index {i} is negative or non-finite"));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Depth at column `u`, row `v`.
    #[inline]
    pub fn at(&self, u: u32, v: u32) -> f64 {
        self.values[v as usize * self.width as usize + u as usize]
    }
}

/// A 3D region paired with the caption of the 2D mask it was lifted from.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTextPair {
    pub region: RegionMask3D,
    pub caption: String,
    pub frame_id: String,
    pub mask_id: String,
}

impl MaskTextPair {
    pub fn new(region: RegionMask3D, caption: String, frame_id: String, mask_id: String) -> Result<Self> {
        if caption.trim().is_empty() {
            return Err(contract!("caption for frame {frame_id} mask {mask_id} is empty"));
        }
        Ok(Self { region, caption, frame_id, mask_id })
    }

    /// Stable identifier used to refer to this pair from merged proposals.
    pub fn pair_id(&self) -> String {
        pair_id(&self.frame_id, &self.mask_id)
    }
}

pub fn pair_id(frame_id: &str, mask_id: &str) -> String {
    alloc::format!("{frame_id}:{mask_id}")
}

/// A class-agnostic 3D instance proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal3D {
    pub proposal_id: String,
    pub region: RegionMask3D,
}

impl Proposal3D {
    pub fn new(proposal_id: String, region: RegionMask3D) -> Result<Self> {
        if region.is_empty() {
            return Err(contract!("proposal {proposal_id} has an empty region"));
        }
        Ok(Self { proposal_id, region })
    }
}

/// A proposal together with the identifiers of every caption matched to it.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedProposal {
    pub proposal_id: String,
    pub region: RegionMask3D,
    pub caption_ids: Vec<String>,
}

impl MergedProposal {
    pub fn new(proposal_id: String, region: RegionMask3D, caption_ids: Vec<String>) -> Result<Self> {
        if region.is_empty() {
            return Err(contract!("merged proposal {proposal_id} has an empty region"));
        }
        let mut sorted: Vec<&String> = caption_ids.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(contract!("merged proposal {proposal_id} lists a caption twice"));
        }
        Ok(Self { proposal_id, region, caption_ids })
    }
}

const NORM_TOL: f64 = 1e-5;

/// Row-major `count x dim` matrix of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    count: usize,
    dim: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(count: usize, dim: usize, data: Vec<f64>, normalized: bool) -> Result<Self> {
        if dim == 0 {
            return Err(contract!("embedding dimension must be at least 1"));
        }
        if data.len() != count * dim {
            return Err(contract!("embedding data has {} values, expected {count}x{dim}", data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(contract!("embedding row {} has a non-finite value", i / dim));
        }
        let m = Self { count, dim, data, normalized };
        if normalized {
            for r in 0..count {
                let n = norm(m.row(r));
                if libm::fabs(n - 1.0) > NORM_TOL {
                    return Err(contract!("row {r} flagged normalized but has norm {n}"));
                }
            }
        }
        Ok(m)
    }

    /// Builds an unflagged matrix from rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != dim) {
            return Err(contract!("row {r} has length {}, expected {dim}", rows[r].len()));
        }
        Self::new(rows.len(), dim, rows.concat(), false)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Returns a copy with every row scaled to unit L2 norm.
    pub fn normalized(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (r, row) in data.chunks_exact_mut(self.dim).enumerate() {
            let n = norm(row);
            if n == 0.0 {
                return Err(contract!("embedding row {r} has zero norm"));
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        Ok(Self { count: self.count, dim: self.dim, data, normalized: true })
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self { count: rows.len(), dim: self.dim, data, normalized: self.normalized }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}
