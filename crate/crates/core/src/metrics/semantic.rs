use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::scene::{dot, norm, EmbeddingMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelClass {
    pub id: i64,
    pub name: String,
    pub background: bool,
}

/// Benchmark classes; background classes are excluded from f-metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    classes: Vec<LabelClass>,
    index: BTreeMap<i64, usize>,
}

impl LabelSet {
    pub fn new(classes: Vec<LabelClass>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, c) in classes.iter().enumerate() {
            if c.id < 0 {
                return Err(contract!("class id {} is negative", c.id));
            }
            if index.insert(c.id, i).is_some() {
                return Err(contract!("class id {} appears twice", c.id));
            }
        }
        if classes.iter().all(|c| c.background) {
            return Err(contract!("label set needs at least one foreground class"));
        }
        Ok(Self { classes, index })
    }

    pub fn classes(&self) -> &[LabelClass] {
        &self.classes
    }

    pub fn position(&self, id: i64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn is_background(&self, id: i64) -> bool {
        self.position(id).is_some_and(|i| self.classes[i].background)
    }
}

/// Per point, the class whose embedding has the highest cosine similarity.
/// Ties go to the lowest class index.
pub fn semantic_predict(point_feats: &EmbeddingMatrix, class_emb: &EmbeddingMatrix) -> Result<Vec<usize>> {
    if point_feats.dim() != class_emb.dim() {
        return Err(contract!("feature dimension {} differs from class dimension {}", point_feats.dim(), class_emb.dim()));
    }
    if class_emb.count() == 0 {
        return Err(contract!("semantic prediction needs at least one class"));
    }
    let classes = class_emb
        .normalized()
        .map_err(|_| contract!("class embedding row {} has zero norm", first_zero_row(class_emb)))?;
    let mut out = Vec::with_capacity(point_feats.count());
    for (i, f) in point_feats.rows().enumerate() {
        let n = norm(f);
        if n == 0.0 {
            return Err(contract!("point feature row {i} has zero norm"));
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (c, t) in classes.rows().enumerate() {
            let s = dot(f, t) / n;
            if s > best.1 {
                best = (c, s);
            }
        }
        out.push(best.0);
    }
    Ok(out)
}

fn first_zero_row(m: &EmbeddingMatrix) -> usize {
    m.rows().position(|r| norm(r) == 0.0).unwrap_or(0)
}

/// Ground truth (rows) by prediction (columns), indexed by label-set position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
    /// Labeled points that received no prediction (`-1`), per GT class.
    unpredicted: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(size: usize) -> Self {
        Self { size, counts: vec![0; size * size], unpredicted: vec![0; size] }
    }

    pub fn add(&mut self, gt: usize, pred: Option<usize>) {
        match pred {
            Some(p) => self.counts[gt * self.size + p] += 1,
            None => self.unpredicted[gt] += 1,
        }
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.size + pred]
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn gt_total(&self, c: usize) -> u64 {
        (0..self.size).map(|p| self.get(c, p)).sum::<u64>() + self.unpredicted[c]
    }

    pub fn pred_total(&self, c: usize) -> u64 {
        (0..self.size).map(|g| self.get(g, c)).sum()
    }

    pub fn iou(&self, c: usize) -> f64 {
        let tp = self.true_positives(c);
        let denom = self.gt_total(c) + self.pred_total(c) - tp;
        if denom == 0 {
            f64::NAN
        } else {
            tp as f64 / denom as f64
        }
    }

    pub fn accuracy(&self, c: usize) -> f64 {
        let total = self.gt_total(c);
        if total == 0 {
            f64::NAN
        } else {
            self.true_positives(c) as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticScores {
    /// Mean IoU over foreground classes present in GT, times 100; NaN when none.
    pub f_miou: f64,
    pub f_macc: f64,
    /// Class id -> IoU in [0, 1], for the classes averaged above.
    pub per_class_iou: BTreeMap<i64, f64>,
    pub per_class_acc: BTreeMap<i64, f64>,
    pub confusion: ConfusionMatrix,
}

/// Foreground mIoU / mAcc over points with a ground-truth label.
pub fn fg_miou_macc(pred: &[i64], gt: &[i64], labels: &LabelSet) -> Result<SemanticScores> {
    if pred.len() != gt.len() {
        return Err(contract!("{} predictions for {} ground-truth labels", pred.len(), gt.len()));
    }
    let lookup = |id: i64, what: &str, i: usize| -> Result<Option<usize>> {
        if id == -1 {
            return Ok(None);
        }
        labels
            .position(id)
            .map(Some)
            .ok_or_else(|| contract!("{what} class id {id} at point {i} is not in the label set"))
    };
    let mut cm = ConfusionMatrix::new(labels.classes().len());
    for (i, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        let p = lookup(p, "predicted", i)?;
        if let Some(g) = lookup(g, "ground-truth", i)? {
            cm.add(g, p);
        }
    }
    let mut per_class_iou = BTreeMap::new();
    let mut per_class_acc = BTreeMap::new();
    for (c, class) in labels.classes().iter().enumerate() {
        if class.background || cm.gt_total(c) == 0 {
            continue;
        }
        per_class_iou.insert(class.id, cm.iou(c));
        per_class_acc.insert(class.id, cm.accuracy(c));
    }
    let mean = |m: &BTreeMap<i64, f64>| {
        if m.is_empty() {
            f64::NAN
        } else {
            100.0 * m.values().sum::<f64>() / m.len() as f64
        }
    };
    Ok(SemanticScores {
        f_miou: mean(&per_class_iou),
        f_macc: mean(&per_class_acc),
        per_class_iou,
        per_class_acc,
        confusion: cm,
    })
}
