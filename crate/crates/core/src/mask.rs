//! Binary masks: run-length encoded 2D masks and sparse 3D point regions.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{contract, format_err, Result};

/// A 2D binary mask stored as uncompressed run lengths.
///
/// Runs alternate zeros/ones in row-major order, starting with zeros; a
/// leading zero count means the mask starts with ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2D {
    height: u32,
    width: u32,
    counts: Vec<u32>,
    pub mask_id: String,
    pub source: String,
}

impl Mask2D {
    pub fn new(height: u32, width: u32, counts: Vec<u32>, mask_id: String, source: String) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let expect = height as u64 * width as u64;
        if total != expect {
            return Err(format_err!(
                "mask {mask_id}: run lengths sum to {total}, expected {height}x{width}={expect}"
            ));
        }
        if counts.iter().skip(1).any(|&c| c == 0) {
            return Err(format_err!("mask {mask_id}: zero-length run after the first count"));
        }
        Ok(Self { height, width, counts, mask_id, source })
    }

    /// Run-length encodes a row-major binary grid.
    pub fn encode(height: u32, width: u32, grid: &[bool], mask_id: String, source: String) -> Result<Self> {
        if grid.len() != height as usize * width as usize {
            return Err(contract!("mask {mask_id}: grid has {} cells for {height}x{width}", grid.len()));
        }
        Self::new(height, width, rle_encode(grid), mask_id, source)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Decodes into a row-major grid of `height * width` cells.
    pub fn decode(&self) -> Vec<bool> {
        let mut grid = vec![false; self.height as usize * self.width as usize];
        let mut pos = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            let end = pos + c as usize;
            if i % 2 == 1 {
                grid[pos..end].fill(true);
            }
            pos = end;
        }
        grid
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }
}

pub fn rle_decode(mask: &Mask2D) -> Vec<bool> {
    mask.decode()
}

/// Zeros-first run lengths of a binary sequence.
pub fn rle_encode(grid: &[bool]) -> Vec<u32> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &cell in grid {
        if cell != current {
            counts.push(run);
            run = 0;
            current = cell;
        }
        run += 1;
    }
    counts.push(run);
    counts
}

/// Sparse binary mask over the points of a cloud with `n_points` points.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegionMask3D {
    indices: Vec<u32>,
    n_points: u32,
}

impl RegionMask3D {
    pub fn new(indices: Vec<u32>, n_points: u32) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(contract!("region indices must be strictly increasing"));
        }
        if let Some(&last) = indices.last() {
            if last >= n_points {
                return Err(contract!("region index {last} out of range for {n_points} points"));
            }
        }
        Ok(Self { indices, n_points })
    }

    /// Sorts and deduplicates arbitrary indices before validating the range.
    pub fn from_unsorted(mut indices: Vec<u32>, n_points: u32) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, n_points)
    }

    pub fn empty(n_points: u32) -> Self {
        Self { indices: Vec::new(), n_points }
    }

    pub fn from_dense(bits: &[bool]) -> Self {
        let indices = bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u32).collect();
        Self { indices, n_points: bits.len() as u32 }
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut bits = vec![false; self.n_points as usize];
        for &i in &self.indices {
            bits[i as usize] = true;
        }
        bits
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn n_points(&self) -> u32 {
        self.n_points
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: u32) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    fn check_same_cloud(&self, other: &Self) -> Result<()> {
        if self.n_points != other.n_points {
            return Err(contract!(
                "regions refer to clouds of different sizes ({} vs {})",
                self.n_points,
                other.n_points
            ));
        }
        Ok(())
    }

    pub fn intersection_len(&self, other: &Self) -> Result<usize> {
        self.check_same_cloud(other)?;
        let (a, b) = (&self.indices, &other.indices);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(n)
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.check_same_cloud(other)?;
        let (a, b) = (&self.indices, &other.indices);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Ok(Self { indices: out, n_points: self.n_points })
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.check_same_cloud(other)?;
        let indices = self.indices.iter().copied().filter(|&i| other.contains(i)).collect();
        Ok(Self { indices, n_points: self.n_points })
    }
}

/// Intersection over union of two regions on the same cloud; 0 for an empty union.
pub fn mask3d_iou(a: &RegionMask3D, b: &RegionMask3D) -> Result<f64> {
    let inter = a.intersection_len(b)?;
    Ok(iou_from_counts(inter, a.len(), b.len()))
}

#[inline]
pub(crate) fn iou_from_counts(inter: usize, a: usize, b: usize) -> f64 {
    let union = a + b - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
