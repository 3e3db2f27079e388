use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::semantic::LabelSet;
use crate::error::{contract, Result};
use crate::mask::{iou_from_counts, RegionMask3D};

#[derive(Debug, Clone, PartialEq)]
pub struct InstancePrediction {
    pub region: RegionMask3D,
    pub score: f64,
    pub semantic_id: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub region: RegionMask3D,
    pub semantic_id: i64,
}

/// IoU thresholds averaged into mAP: 0.50, 0.55, ..., 0.95.
pub const AP_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAp {
    /// Mean AP over [`AP_THRESHOLDS`].
    pub ap: f64,
    pub ap50: f64,
    pub ap25: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceScores {
    pub map: f64,
    pub ap50: f64,
    pub ap25: f64,
    /// Foreground classes present in the ground truth.
    pub per_class: BTreeMap<i64, ClassAp>,
}

/// Average precision for instance masks.
///
/// Per class, predictions are visited by descending score and greedily
/// matched to the unmatched ground truth of that class with the highest IoU
/// at or above the threshold. The precision-recall curve is integrated with
/// all-point interpolation. Class APs are averaged over foreground classes
/// present in the ground truth.
pub fn instance_ap(preds: &[InstancePrediction], gt: &[GtInstance], labels: &LabelSet) -> Result<InstanceScores> {
    let n_points = gt.first().map(|g| g.region.n_points()).or_else(|| preds.first().map(|p| p.region.n_points()));
    for (i, p) in preds.iter().enumerate() {
        if !p.score.is_finite() {
            return Err(contract!("prediction {i} has a non-finite score"));
        }
        if p.region.is_empty() {
            return Err(contract!("prediction {i} has an empty region"));
        }
        if labels.position(p.semantic_id).is_none() {
            return Err(contract!("prediction {i} has unknown class id {}", p.semantic_id));
        }
        if Some(p.region.n_points()) != n_points {
            return Err(contract!("prediction {i} refers to a different cloud size"));
        }
    }
    for (i, g) in gt.iter().enumerate() {
        if labels.position(g.semantic_id).is_none() {
            return Err(contract!("ground-truth instance {i} has unknown class id {}", g.semantic_id));
        }
        if Some(g.region.n_points()) != n_points {
            return Err(contract!("ground-truth instance {i} refers to a different cloud size"));
        }
    }

    let mut per_class = BTreeMap::new();
    for class in labels.classes() {
        if class.background {
            continue;
        }
        let gts: Vec<&RegionMask3D> = gt.iter().filter(|g| g.semantic_id == class.id).map(|g| &g.region).collect();
        if gts.is_empty() {
            continue;
        }
        let mut ps: Vec<&InstancePrediction> = preds.iter().filter(|p| p.semantic_id == class.id).collect();
        ps.sort_by(|a, b| b.score.total_cmp(&a.score));
        let ious: Vec<Vec<f64>> = ps
            .iter()
            .map(|p| {
                gts.iter()
                    .map(|g| {
                        let inter = p.region.intersection_len(g).expect("cloud sizes checked");
                        iou_from_counts(inter, p.region.len(), g.len())
                    })
                    .collect()
            })
            .collect();
        let at = |t: f64| average_precision(&ious, gts.len(), t);
        let ap = AP_THRESHOLDS.iter().map(|&t| at(t)).sum::<f64>() / AP_THRESHOLDS.len() as f64;
        per_class.insert(class.id, ClassAp { ap, ap50: at(0.50), ap25: at(0.25) });
    }

    let mean = |f: fn(&ClassAp) -> f64| {
        if per_class.is_empty() {
            f64::NAN
        } else {
            per_class.values().map(f).sum::<f64>() / per_class.len() as f64
        }
    };
    Ok(InstanceScores { map: mean(|c| c.ap), ap50: mean(|c| c.ap50), ap25: mean(|c| c.ap25), per_class })
}

/// `ious[p][g]` for score-sorted predictions `p` against ground truth `g`.
fn average_precision(ious: &[Vec<f64>], n_gt: usize, threshold: f64) -> f64 {
    let mut taken = vec![false; n_gt];
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(ious.len());
    let mut recall = Vec::with_capacity(ious.len());
    for (k, row) in ious.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (g, &iou) in row.iter().enumerate() {
            if !taken[g] && iou >= threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp += 1;
        }
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}
