use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use unicode_normalization::UnicodeNormalization;

use crate::error::{contract, Result};
use crate::scene::{MaskTextPair, PointCloud};

/// Percentage of the `n_points` points covered by at least one pair.
pub fn coverage(pairs: &[MaskTextPair], n_points: usize) -> Result<f64> {
    if n_points == 0 {
        return Err(contract!("coverage needs a non-empty cloud"));
    }
    let mut covered = vec![false; n_points];
    for p in pairs {
        if p.region.n_points() as usize != n_points {
            return Err(contract!("pair {} refers to {} points, expected {n_points}", p.pair_id(), p.region.n_points()));
        }
        for &i in p.region.indices() {
            covered[i as usize] = true;
        }
    }
    let n = covered.iter().filter(|&&c| c).count();
    Ok(100.0 * n as f64 / n_points as f64)
}

/// Unweighted mean of per-scene coverage values; 0 for no scenes.
pub fn mean_coverage(per_scene: &[f64]) -> f64 {
    if per_scene.is_empty() {
        0.0
    } else {
        per_scene.iter().sum::<f64>() / per_scene.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    /// `(pair index, bits)` for every mask with at least one labeled point.
    pub per_mask: Vec<(usize, f64)>,
    /// Unweighted mean over `per_mask`; NaN when it is empty.
    pub mean_bits: f64,
    /// Masks whose points are all unlabeled.
    pub skipped: usize,
}

/// Shannon entropy (bits) of the ground-truth instance ids inside each mask.
pub fn mask_entropy(pairs: &[MaskTextPair], cloud: &PointCloud) -> Result<EntropyReport> {
    let ids = cloud
        .instance_id()
        .ok_or_else(|| contract!("mask entropy needs instance labels on the point cloud"))?;
    let mut per_mask = Vec::new();
    let mut skipped = 0;
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for (k, p) in pairs.iter().enumerate() {
        if p.region.n_points() as usize != cloud.len() {
            return Err(contract!("pair {} refers to {} points, cloud has {}", p.pair_id(), p.region.n_points(), cloud.len()));
        }
        counts.clear();
        for &i in p.region.indices() {
            let id = ids[i as usize];
            if id >= 0 {
                *counts.entry(id).or_default() += 1;
            }
        }
        let total: usize = counts.values().sum();
        if total == 0 {
            skipped += 1;
            continue;
        }
        let h: f64 = counts
            .values()
            .map(|&c| {
                let p = c as f64 / total as f64;
                -p * libm::log2(p)
            })
            .sum();
        // a single outcome is exactly zero bits, not -0
        per_mask.push((k, if counts.len() == 1 { 0.0 } else { h }));
    }
    let mean_bits = if per_mask.is_empty() {
        f64::NAN
    } else {
        per_mask.iter().map(|(_, h)| h).sum::<f64>() / per_mask.len() as f64
    };
    Ok(EntropyReport { per_mask, mean_bits, skipped })
}

/// English function words dropped before counting vocabulary.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "across", "after", "against", "all", "along", "also", "an", "and", "any", "are",
    "around", "as", "at", "be", "been", "behind", "below", "beneath", "beside", "between", "both", "but", "by",
    "can", "could", "each", "for", "from", "has", "have", "here", "in", "into", "is", "it", "its", "near",
    "next", "of", "off", "on", "onto", "or", "other", "over", "some", "that", "the", "their", "there", "these",
    "this", "those", "through", "to", "toward", "towards", "under", "up", "upon", "was", "were", "which",
    "while", "with", "within",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionStats {
    pub unique_normalized_tokens: usize,
    /// Whitespace tokens after character stripping, before stopword removal.
    pub total_tokens: usize,
    /// Sorted unique normalized tokens.
    pub vocabulary: Vec<String>,
}

/// Lowercased NFC tokens with everything but letters, digits and internal
/// hyphens removed. Tokens that end up empty are dropped.
pub fn normalize_tokens(caption: &str) -> Vec<String> {
    let lowered: String = caption.nfc().flat_map(char::to_lowercase).collect();
    lowered
        .split_whitespace()
        .map(|tok| {
            let kept: String = tok.chars().filter(|c| c.is_alphanumeric() || *c == '-').collect();
            String::from(kept.trim_matches('-'))
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn singularize(token: &str) -> &str {
    if token.chars().count() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        &token[..token.len() - 1]
    } else {
        token
    }
}

/// Vocabulary statistics over a caption corpus.
pub fn caption_stats<S: AsRef<str>>(captions: &[S], stopwords: &[&str]) -> CaptionStats {
    let stop: BTreeSet<String> = stopwords.iter().flat_map(|w| normalize_tokens(w)).collect();
    let mut vocab = BTreeSet::new();
    let mut total = 0;
    for c in captions {
        for tok in normalize_tokens(c.as_ref()) {
            total += 1;
            if !stop.contains(&tok) {
                vocab.insert(String::from(singularize(&tok)));
            }
        }
    }
    let vocabulary: Vec<String> = vocab.into_iter().collect();
    CaptionStats { unique_normalized_tokens: vocabulary.len(), total_tokens: total, vocabulary }
}
