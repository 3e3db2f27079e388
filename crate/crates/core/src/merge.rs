//! Caption merging: each mask-text pair goes to the proposal it overlaps
//! most (IoU argmax), if that overlap clears the threshold.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::mask::iou_from_counts;
use crate::rng::{fnv1a64, shuffle, SplitMix64};
use crate::scene::{MaskTextPair, MergedProposal, Proposal3D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeConfig {
    pub iou_threshold: f64,
    /// Captions kept per proposal by [`sample_captions`].
    pub max_captions: usize,
    pub shuffle_seed: Option<u64>,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, max_captions: 8, shuffle_seed: None }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(contract!("IoU threshold must be in (0, 1], got {}", self.iou_threshold));
        }
        if self.max_captions == 0 {
            return Err(contract!("max_captions must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutput {
    /// Proposals that received at least one caption, in input order.
    pub merged: Vec<MergedProposal>,
    /// For each input pair, the index of the proposal it was assigned to.
    pub assignment: Vec<Option<usize>>,
    pub assigned: usize,
    pub unassigned: usize,
}

/// Assigns every pair to its best-overlapping proposal.
///
/// Ties on IoU go to the lowest proposal index.
pub fn merge_captions(pairs: &[MaskTextPair], proposals: &[Proposal3D], cfg: &MergeConfig) -> Result<MergeOutput> {
    cfg.validate()?;
    let n_points = match (pairs.first(), proposals.first()) {
        (Some(p), _) => p.region.n_points(),
        (None, Some(p)) => p.region.n_points(),
        (None, None) => 0,
    };
    for p in pairs {
        if p.region.n_points() != n_points {
            return Err(contract!("pair {} refers to a cloud of {} points, expected {n_points}", p.pair_id(), p.region.n_points()));
        }
    }
    for p in proposals {
        if p.region.n_points() != n_points {
            return Err(contract!(
                "proposal {} refers to a cloud of {} points, expected {n_points}",
                p.proposal_id,
                p.region.n_points()
            ));
        }
    }

    // point -> proposals containing it, in CSR layout
    let mut offsets = vec![0u32; n_points as usize + 1];
    for p in proposals {
        for &i in p.region.indices() {
            offsets[i as usize + 1] += 1;
        }
    }
    for i in 0..n_points as usize {
        offsets[i + 1] += offsets[i];
    }
    let mut members = vec![0u32; *offsets.last().unwrap_or(&0) as usize];
    let mut fill = offsets.clone();
    for (l, p) in proposals.iter().enumerate() {
        for &i in p.region.indices() {
            members[fill[i as usize] as usize] = l as u32;
            fill[i as usize] += 1;
        }
    }

    let mut hits = vec![0usize; proposals.len()];
    let mut touched = Vec::new();
    let mut assignment = Vec::with_capacity(pairs.len());
    for pair in pairs {
        for &i in pair.region.indices() {
            for &l in &members[offsets[i as usize] as usize..offsets[i as usize + 1] as usize] {
                if hits[l as usize] == 0 {
                    touched.push(l as usize);
                }
                hits[l as usize] += 1;
            }
        }
        touched.sort_unstable();
        let mut best: Option<(usize, f64)> = None;
        for &l in &touched {
            let iou = iou_from_counts(hits[l], pair.region.len(), proposals[l].region.len());
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((l, iou));
            }
            hits[l] = 0;
        }
        touched.clear();
        assignment.push(best.filter(|&(_, iou)| iou >= cfg.iou_threshold).map(|(l, _)| l));
    }

    let mut per_proposal: Vec<Vec<&MaskTextPair>> = vec![Vec::new(); proposals.len()];
    for (pair, slot) in pairs.iter().zip(&assignment) {
        if let Some(l) = slot {
            per_proposal[*l].push(pair);
        }
    }
    let mut merged = Vec::new();
    for (proposal, mut matched) in proposals.iter().zip(per_proposal) {
        if matched.is_empty() {
            continue;
        }
        matched.sort_by(|a, b| (&a.frame_id, &a.mask_id).cmp(&(&b.frame_id, &b.mask_id)));
        let ids = matched.iter().map(|p| p.pair_id()).collect();
        merged.push(MergedProposal::new(proposal.proposal_id.clone(), proposal.region.clone(), ids)?);
    }
    let assigned = assignment.iter().flatten().count();
    Ok(MergeOutput { merged, unassigned: pairs.len() - assigned, assigned, assignment })
}

/// Picks at most `cfg.max_captions` caption ids from a merged proposal.
///
/// Without a seed the stored order is truncated. With a seed the ids are
/// shuffled by [`shuffle`] driven by splitmix64 seeded with
/// `seed ^ fnv1a64(proposal_id)`, then truncated.
pub fn sample_captions(merged: &MergedProposal, cfg: &MergeConfig) -> Vec<String> {
    let ids = &merged.caption_ids;
    if ids.len() <= cfg.max_captions {
        return ids.clone();
    }
    let mut out = ids.clone();
    if let Some(seed) = cfg.shuffle_seed {
        let mut rng = SplitMix64::new(seed ^ fnv1a64(merged.proposal_id.as_bytes()));
        shuffle(&mut out, &mut rng);
    }
    out.truncate(cfg.max_captions);
    out
}

/// Joins the sampled captions with `". "` after trimming trailing periods
/// and whitespace from each.
pub fn concat_captions(merged: &MergedProposal, captions: &BTreeMap<String, String>, cfg: &MergeConfig) -> Result<String> {
    if merged.caption_ids.is_empty() {
        return Err(contract!("merged proposal {} has no captions", merged.proposal_id));
    }
    let mut parts = Vec::new();
    for id in sample_captions(merged, cfg) {
        let text = captions
            .get(&id)
            .ok_or_else(|| contract!("proposal {}: caption {id} not found", merged.proposal_id))?;
        let trimmed = text.trim_end_matches(|c: char| c == '.' || c.is_whitespace());
        if !trimmed.is_empty() {
            parts.push(trimmed);
        }
    }
    Ok(parts.join(". "))
}
