//! Training objectives as plain numerical functions.
//!
//! Point-text and mask-caption contrastive losses share one InfoNCE kernel
//! that also returns analytic gradients with respect to both embedding
//! matrices. All reductions run in a fixed sequential order.

use alloc::vec;
use alloc::vec::Vec;

use crate::assign::{hungarian_match, CostMatrix};
use crate::error::{contract, Result};
use crate::mask::RegionMask3D;
use crate::scene::{dot, norm, EmbeddingMatrix};

/// Probability clamp applied to soft masks before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-7;
/// Additive smoothing in the dice ratio.
pub const DICE_SMOOTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_obj: f64,
    pub lambda_dice: f64,
    pub lambda_bce: f64,
    pub lambda_cap: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_obj: 2.0, lambda_dice: 5.0, lambda_bce: 2.0, lambda_cap: 1.0 }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights { lambda_obj: 0.0, lambda_dice: 0.0, lambda_bce: 0.0, lambda_cap: 0.0 };

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_obj, self.lambda_dice, self.lambda_bce, self.lambda_cap];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(contract!("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// L2-normalize embedding rows before taking dot products.
    pub normalize_embeddings: bool,
    /// Divide each region's summed point loss by the region size.
    pub per_mask_mean: bool,
    /// Leave the softmax denominator logits undivided by the temperature.
    pub formula_literal_denominator: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self::with_temperature(1.0)
    }
}

impl ContrastiveConfig {
    pub fn with_temperature(temperature: f64) -> Self {
        Self { temperature, normalize_embeddings: true, per_mask_mean: true, formula_literal_denominator: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(contract!("temperature must be positive and finite, got {}", self.temperature));
        }
        Ok(())
    }
}

/// `rows x cols` soft mask probabilities, clamped away from 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMaskMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SoftMaskMatrix {
    pub fn new(rows: usize, cols: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(contract!("soft mask has {} values, expected {rows}x{cols}", data.len()));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(contract!("soft mask value at ({}, {}) is outside [0, 1]", i / cols, i % cols));
        }
        data.iter_mut().for_each(|v| *v = clamp_prob(*v));
        Ok(Self { rows, cols, data })
    }

    /// Hard 0/1 masks from regions, clamped like any other prediction.
    pub fn from_regions(regions: &[RegionMask3D], n_points: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(regions.len() * n_points);
        for r in regions {
            if r.n_points() as usize != n_points {
                return Err(contract!("region covers {} points, expected {n_points}", r.n_points()));
            }
            data.extend(r.to_dense().into_iter().map(|b| if b { 1.0 } else { 0.0 }));
        }
        Self::new(regions.len(), n_points, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Two-class objectness logits per query.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectnessScores {
    logits: Vec<[f64; 2]>,
}

impl ObjectnessScores {
    pub fn new(logits: Vec<[f64; 2]>) -> Result<Self> {
        if let Some(q) = logits.iter().position(|l| !(l[0].is_finite() && l[1].is_finite())) {
            return Err(contract!("objectness logits for query {q} are not finite"));
        }
        Ok(Self { logits })
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn logits(&self) -> &[[f64; 2]] {
        &self.logits
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Soft masks `sigmoid(mask_emb . point_emb^T)`.
pub fn sigmoid_masks(mask_emb: &EmbeddingMatrix, point_emb: &EmbeddingMatrix) -> Result<SoftMaskMatrix> {
    check_dims(mask_emb, point_emb)?;
    let mut data = Vec::with_capacity(mask_emb.count() * point_emb.count());
    for q in mask_emb.rows() {
        data.extend(point_emb.rows().map(|p| clamp_prob(sigmoid(dot(q, p)))));
    }
    Ok(SoftMaskMatrix { rows: mask_emb.count(), cols: point_emb.count(), data })
}

fn check_dims(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(contract!("embedding dimensions differ ({} vs {})", a.dim(), b.dim()));
    }
    Ok(())
}

/// Loss value with gradients, each laid out like the matrix it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGrad {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_target: Vec<f64>,
}

/// One InfoNCE term: anchor row `i` should select target row `k`.
#[derive(Debug, Clone, Copy)]
struct Term {
    anchor: usize,
    target: usize,
    weight: f64,
}

/// Weighted InfoNCE over anchor rows `x` and target rows `y`.
///
/// `terms` must be sorted by anchor.
fn info_nce(x: &EmbeddingMatrix, y: &EmbeddingMatrix, terms: &[Term], cfg: &ContrastiveConfig, want_grad: bool) -> Result<LossWithGrad> {
    let (xn, yn) = if cfg.normalize_embeddings { (x.normalized()?, y.normalized()?) } else { (x.clone(), y.clone()) };
    let dim = x.dim();
    let k = y.count();
    let tau = cfg.temperature;
    let tau_den = if cfg.formula_literal_denominator { 1.0 } else { tau };

    let mut loss = 0.0;
    let mut gx_hat = vec![0.0; if want_grad { xn.data().len() } else { 0 }];
    let mut gy_hat = vec![0.0; if want_grad { yn.data().len() } else { 0 }];
    let mut sims = vec![0.0; k];
    let mut probs = vec![0.0; k];

    let mut start = 0;
    while start < terms.len() {
        let i = terms[start].anchor;
        let mut end = start;
        while end < terms.len() && terms[end].anchor == i {
            end += 1;
        }
        let xi = xn.row(i);
        for (j, s) in sims.iter_mut().enumerate() {
            *s = dot(xi, yn.row(j));
        }
        let max = sims.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s / tau_den));
        let mut z = 0.0;
        for (p, &s) in probs.iter_mut().zip(&sims) {
            *p = libm::exp(s / tau_den - max);
            z += *p;
        }
        let lse = max + libm::log(z);
        probs.iter_mut().for_each(|p| *p /= z);

        let mut weight_sum = 0.0;
        for t in &terms[start..end] {
            loss += t.weight * (lse - sims[t.target] / tau);
            weight_sum += t.weight;
            if want_grad {
                let yk = yn.row(t.target);
                for d in 0..dim {
                    gx_hat[i * dim + d] -= t.weight * yk[d] / tau;
                    gy_hat[t.target * dim + d] -= t.weight * xi[d] / tau;
                }
            }
        }
        if want_grad {
            for j in 0..k {
                let c = weight_sum * probs[j] / tau_den;
                let yj = yn.row(j);
                for d in 0..dim {
                    gx_hat[i * dim + d] += c * yj[d];
                    gy_hat[j * dim + d] += c * xi[d];
                }
            }
        }
        start = end;
    }

    if want_grad && cfg.normalize_embeddings {
        unnormalize_grad(x, &xn, &mut gx_hat);
        unnormalize_grad(y, &yn, &mut gy_hat);
    }
    Ok(LossWithGrad { loss, grad_anchor: gx_hat, grad_target: gy_hat })
}

/// Chain rule through `x / |x|`: `g <- (g - x_hat (x_hat . g)) / |x|`.
fn unnormalize_grad(raw: &EmbeddingMatrix, unit: &EmbeddingMatrix, grad: &mut [f64]) {
    let dim = raw.dim();
    for (r, g) in grad.chunks_exact_mut(dim).enumerate() {
        let n = norm(raw.row(r));
        let u = unit.row(r);
        let proj = dot(u, g);
        for d in 0..dim {
            g[d] = (g[d] - u[d] * proj) / n;
        }
    }
}

fn point_terms(point_emb: &EmbeddingMatrix, text_emb: &EmbeddingMatrix, regions: &[RegionMask3D], cfg: &ContrastiveConfig) -> Result<Vec<Term>> {
    cfg.validate()?;
    check_dims(point_emb, text_emb)?;
    if regions.is_empty() {
        return Err(contract!("point contrastive loss needs at least one region"));
    }
    if text_emb.count() != regions.len() {
        return Err(contract!("{} text embeddings for {} regions", text_emb.count(), regions.len()));
    }
    let k = regions.len() as f64;
    let mut terms = Vec::new();
    for (ki, r) in regions.iter().enumerate() {
        if r.is_empty() {
            return Err(contract!("region {ki} is empty"));
        }
        if r.n_points() as usize != point_emb.count() {
            return Err(contract!("region {ki} covers {} points but there are {} point embeddings", r.n_points(), point_emb.count()));
        }
        let w = if cfg.per_mask_mean { 1.0 / (k * r.len() as f64) } else { 1.0 / k };
        terms.extend(r.indices().iter().map(|&i| Term { anchor: i as usize, target: ki, weight: w }));
    }
    terms.sort_by_key(|t| (t.anchor, t.target));
    Ok(terms)
}

/// Region-averaged point-to-caption contrastive loss.
pub fn point_contrastive_loss(point_emb: &EmbeddingMatrix, text_emb: &EmbeddingMatrix, regions: &[RegionMask3D], cfg: &ContrastiveConfig) -> Result<f64> {
    let terms = point_terms(point_emb, text_emb, regions, cfg)?;
    Ok(info_nce(point_emb, text_emb, &terms, cfg, false)?.loss)
}

/// [`point_contrastive_loss`] with gradients; `grad_anchor` is per point,
/// `grad_target` per text embedding.
pub fn point_contrastive_loss_grad(point_emb: &EmbeddingMatrix, text_emb: &EmbeddingMatrix, regions: &[RegionMask3D], cfg: &ContrastiveConfig) -> Result<LossWithGrad> {
    let terms = point_terms(point_emb, text_emb, regions, cfg)?;
    info_nce(point_emb, text_emb, &terms, cfg, true)
}

fn caption_terms(mask_emb: &EmbeddingMatrix, caption_emb: &EmbeddingMatrix, cfg: &ContrastiveConfig) -> Result<Vec<Term>> {
    cfg.validate()?;
    check_dims(mask_emb, caption_emb)?;
    let m = caption_emb.count();
    if m == 0 {
        return Err(contract!("mask caption loss needs at least one matched pair"));
    }
    if mask_emb.count() != m {
        return Err(contract!("{} mask embeddings for {m} caption embeddings", mask_emb.count()));
    }
    Ok((0..m).map(|i| Term { anchor: i, target: i, weight: 1.0 / m as f64 }).collect())
}

/// Contrastive loss between matched mask and caption rows (row `m` of each
/// belong together).
pub fn mask_caption_loss(mask_emb: &EmbeddingMatrix, caption_emb: &EmbeddingMatrix, cfg: &ContrastiveConfig) -> Result<f64> {
    let terms = caption_terms(mask_emb, caption_emb, cfg)?;
    Ok(info_nce(mask_emb, caption_emb, &terms, cfg, false)?.loss)
}

pub fn mask_caption_loss_grad(mask_emb: &EmbeddingMatrix, caption_emb: &EmbeddingMatrix, cfg: &ContrastiveConfig) -> Result<LossWithGrad> {
    let terms = caption_terms(mask_emb, caption_emb, cfg)?;
    info_nce(mask_emb, caption_emb, &terms, cfg, true)
}

fn check_row(pred: &[f64], gt: &RegionMask3D) -> Result<()> {
    if pred.len() != gt.n_points() as usize {
        return Err(contract!("prediction has {} entries for a {}-point region", pred.len(), gt.n_points()));
    }
    Ok(())
}

/// Smoothed dice loss of one soft mask against a region.
pub fn dice_loss(pred: &[f64], gt: &RegionMask3D) -> Result<f64> {
    check_row(pred, gt)?;
    let inter: f64 = gt.indices().iter().map(|&i| pred[i as usize]).sum();
    let total: f64 = pred.iter().sum();
    Ok(1.0 - (2.0 * inter + DICE_SMOOTH) / (total + gt.len() as f64 + DICE_SMOOTH))
}

/// Mean binary cross-entropy of one soft mask against a region.
pub fn bce_loss(pred: &[f64], gt: &RegionMask3D) -> Result<f64> {
    check_row(pred, gt)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let mut inside = gt.indices().iter().peekable();
    let mut sum = 0.0;
    for (i, &p) in pred.iter().enumerate() {
        let p = clamp_prob(p);
        if inside.peek() == Some(&&(i as u32)) {
            inside.next();
            sum += libm::log(p);
        } else {
            sum += libm::log(1.0 - p);
        }
    }
    Ok(-sum / pred.len() as f64)
}

/// Mean two-class cross-entropy; class 1 for matched queries.
pub fn objectness_loss(scores: &ObjectnessScores, matched: &[bool]) -> Result<f64> {
    if scores.len() != matched.len() {
        return Err(contract!("{} objectness rows for {} match flags", scores.len(), matched.len()));
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (l, &m) in scores.logits().iter().zip(matched) {
        let hi = l[0].max(l[1]);
        let lse = hi + libm::log1p(libm::exp(-libm::fabs(l[0] - l[1])));
        sum += lse - l[m as usize];
    }
    Ok(sum / scores.len() as f64)
}

/// Matching cost `lambda_bce * bce + lambda_dice * dice` for every
/// (prediction, ground truth) pair.
pub fn match_cost(pred: &SoftMaskMatrix, gt_regions: &[RegionMask3D], w: &LossWeights) -> Result<CostMatrix> {
    let mut data = Vec::with_capacity(pred.rows() * gt_regions.len());
    for q in 0..pred.rows() {
        let row = pred.row(q);
        for gt in gt_regions {
            data.push(w.lambda_bce * bce_loss(row, gt)? + w.lambda_dice * dice_loss(row, gt)?);
        }
    }
    CostMatrix::new(pred.rows(), gt_regions.len(), data)
}

/// Inputs to [`total_mask_loss`]: `Q` predictions and `M` ground-truth masks.
#[derive(Debug, Clone, Copy)]
pub struct MaskLossInputs<'a> {
    pub scores: &'a ObjectnessScores,
    pub pred: &'a SoftMaskMatrix,
    pub gt_regions: &'a [RegionMask3D],
    pub mask_emb: &'a EmbeddingMatrix,
    pub caption_emb: &'a EmbeddingMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub obj: f64,
    pub dice: f64,
    pub bce: f64,
    pub cap: f64,
    pub total: f64,
    /// `(query, gt)` pairs chosen by the matcher, sorted by query.
    pub matches: Vec<(usize, usize)>,
}

impl LossBreakdown {
    pub fn recombine(&self, w: &LossWeights) -> f64 {
        w.lambda_obj * self.obj + w.lambda_dice * self.dice + w.lambda_bce * self.bce + w.lambda_cap * self.cap
    }
}

/// Matches predictions to ground truth and evaluates the weighted mask loss.
///
/// Dice and BCE are averaged over matched pairs, objectness over all
/// queries, and the caption term over matched pairs.
pub fn total_mask_loss(inputs: &MaskLossInputs<'_>, w: &LossWeights, cfg: &ContrastiveConfig) -> Result<LossBreakdown> {
    w.validate()?;
    cfg.validate()?;
    let q = inputs.pred.rows();
    let m = inputs.gt_regions.len();
    if inputs.scores.len() != q || inputs.mask_emb.count() != q {
        return Err(contract!(
            "{q} predicted masks but {} objectness rows and {} mask embeddings",
            inputs.scores.len(),
            inputs.mask_emb.count()
        ));
    }
    if inputs.caption_emb.count() != m {
        return Err(contract!("{m} ground-truth masks but {} caption embeddings", inputs.caption_emb.count()));
    }
    check_dims(inputs.mask_emb, inputs.caption_emb)?;

    let matches = if m == 0 { Vec::new() } else { hungarian_match(&match_cost(inputs.pred, inputs.gt_regions, w)?).pairs };
    let mut matched = vec![false; q];
    let (mut dice, mut bce) = (0.0, 0.0);
    for &(qi, mi) in &matches {
        matched[qi] = true;
        dice += dice_loss(inputs.pred.row(qi), &inputs.gt_regions[mi])?;
        bce += bce_loss(inputs.pred.row(qi), &inputs.gt_regions[mi])?;
    }
    let obj = objectness_loss(inputs.scores, &matched)?;
    let cap = if matches.is_empty() {
        0.0
    } else {
        let n = matches.len() as f64;
        dice /= n;
        bce /= n;
        let qs: Vec<usize> = matches.iter().map(|p| p.0).collect();
        let ms: Vec<usize> = matches.iter().map(|p| p.1).collect();
        mask_caption_loss(&inputs.mask_emb.select_rows(&qs), &inputs.caption_emb.select_rows(&ms), cfg)?
    };
    let mut out = LossBreakdown { obj, dice, bce, cap, total: 0.0, matches };
    out.total = out.recombine(w);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::RegionMask3D;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::vec::Vec;

    const CLOSED_TWO_WAY: f64 = 0.313_261_687_518_222_8; // -ln(e / (e + 1))

    fn emb(rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&rows).unwrap()
    }

    fn random_emb(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingMatrix {
        EmbeddingMatrix::new(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect(), false).unwrap()
    }

    fn region(idx: Vec<u32>, n: u32) -> RegionMask3D {
        RegionMask3D::new(idx, n).unwrap()
    }

    /// Straight transcription of the region-averaged contrastive formula.
    fn point_oracle(p: &EmbeddingMatrix, t: &EmbeddingMatrix, regions: &[RegionMask3D], cfg: &ContrastiveConfig) -> f64 {
        let unit = |v: &[f64]| -> Vec<f64> {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect()
        };
        let prep = |m: &EmbeddingMatrix| -> Vec<Vec<f64>> {
            m.rows().map(|r| if cfg.normalize_embeddings { unit(r) } else { r.to_vec() }).collect()
        };
        let (ps, ts) = (prep(p), prep(t));
        let dotp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let den_tau = if cfg.formula_literal_denominator { 1.0 } else { cfg.temperature };
        let mut total = 0.0;
        for (k, r) in regions.iter().enumerate() {
            let mut s = 0.0;
            for &i in r.indices() {
                let zi = &ps[i as usize];
                let num = (dotp(zi, &ts[k]) / cfg.temperature).exp();
                let den: f64 = ts.iter().map(|tj| (dotp(zi, tj) / den_tau).exp()).sum();
                s += -(num / den).ln();
            }
            total += if cfg.per_mask_mean { s / r.len() as f64 } else { s };
        }
        total / regions.len() as f64
    }

    #[test]
    fn sigmoid_examples() {
        let z = EmbeddingMatrix::new(2, 3, vec![0.0; 6], false).unwrap();
        let s = sigmoid_masks(&z, &z).unwrap();
        assert!(s.data.iter().all(|&v| v == 0.5));
        let a = emb(vec![vec![libm::sqrt(libm::log(3.0))]]);
        let s = sigmoid_masks(&a, &a).unwrap();
        assert!((s.row(0)[0] - 0.75).abs() < 1e-15);
        assert!(sigmoid_masks(&a, &EmbeddingMatrix::new(1, 2, vec![0.0; 2], false).unwrap()).is_err());
        let big = emb(vec![vec![100.0]]);
        assert_eq!(sigmoid_masks(&big, &big).unwrap().row(0)[0], 1.0 - PROB_CLAMP);
    }

    #[test]
    fn sigmoid_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, b) = (random_emb(&mut rng, 4, 8), random_emb(&mut rng, 6, 8));
        let s = sigmoid_masks(&a, &b).unwrap();
        for q in 0..4 {
            for i in 0..6 {
                let d: f64 = a.row(q).iter().zip(b.row(i)).map(|(x, y)| x * y).sum();
                let expect = 1.0 / (1.0 + (-d).exp());
                assert!((s.row(q)[i] - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn point_loss_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_emb(&mut rng, 10, 4);
        let t = random_emb(&mut rng, 1, 4);
        let l = point_contrastive_loss(&p, &t, &[region(vec![0, 3, 7], 10)], &ContrastiveConfig::default()).unwrap();
        assert!(l.abs() <= 1e-12);

        let t = emb(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let p = emb(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let regions = [region(vec![0, 1], 3), region(vec![2], 3)];
        let l = point_contrastive_loss(&p, &t, &regions, &ContrastiveConfig::with_temperature(1.0)).unwrap();
        assert!((l - CLOSED_TWO_WAY).abs() < 1e-12, "{l}");
        assert!((0.313262 - l).abs() < 1e-6);
    }

    #[test]
    fn point_loss_errors() {
        let t = emb(vec![vec![1.0, 0.0]]);
        let p = emb(vec![vec![1.0, 0.0]]);
        let cfg = ContrastiveConfig::default();
        assert!(point_contrastive_loss(&p, &emb(vec![]), &[], &cfg).is_err());
        assert!(point_contrastive_loss(&p, &t, &[RegionMask3D::empty(1)], &cfg).is_err());
        assert!(point_contrastive_loss(&p, &t, &[region(vec![0], 2)], &cfg).is_err());
        let bad = ContrastiveConfig::with_temperature(0.0);
        assert!(point_contrastive_loss(&p, &t, &[region(vec![0], 1)], &bad).is_err());
    }

    #[test]
    fn point_loss_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let p = random_emb(&mut rng, 50, 16);
        let t = random_emb(&mut rng, 5, 16);
        let regions: Vec<RegionMask3D> = (0..5)
            .map(|_| RegionMask3D::from_unsorted((0..rng.gen_range(1..20)).map(|_| rng.gen_range(0..50)).collect(), 50).unwrap())
            .collect();
        for (normalize, per_mask, literal) in [(true, true, false), (false, true, false), (true, false, false), (true, true, true)] {
            let cfg = ContrastiveConfig { temperature: 0.07, normalize_embeddings: normalize, per_mask_mean: per_mask, formula_literal_denominator: literal };
            let got = point_contrastive_loss(&p, &t, &regions, &cfg).unwrap();
            let expect = point_oracle(&p, &t, &regions, &cfg);
            assert!(((got - expect) / expect).abs() <= 1e-9, "{got} vs {expect} ({normalize} {per_mask} {literal})");
        }
    }

    #[test]
    fn mask_caption_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_emb(&mut rng, 1, 6);
        let b = random_emb(&mut rng, 1, 6);
        assert!(mask_caption_loss(&a, &b, &ContrastiveConfig::default()).unwrap().abs() <= 1e-12);
        let c = emb(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let l = mask_caption_loss(&c, &c, &ContrastiveConfig::with_temperature(1.0)).unwrap();
        assert!((l - CLOSED_TWO_WAY).abs() < 1e-12);
        assert!(mask_caption_loss(&emb(vec![]), &emb(vec![]), &ContrastiveConfig::default()).is_err());
    }

    #[test]
    fn mask_caption_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_emb(&mut rng, 6, 16);
        let b = random_emb(&mut rng, 6, 16);
        let cfg = ContrastiveConfig::with_temperature(0.1);
        // pairs (m, m) as regions over six one-point "clouds" reduce to the point formula
        let regions: Vec<RegionMask3D> = (0..6).map(|m| region(vec![m], 6)).collect();
        let expect = point_oracle(&a, &b, &regions, &cfg);
        let got = mask_caption_loss(&a, &b, &cfg).unwrap();
        assert!(((got - expect) / expect).abs() <= 1e-9);
    }

    #[test]
    fn dice_examples() {
        let gt = region((0..10).collect(), 20);
        let exact: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 0.0 }).collect();
        assert_eq!(dice_loss(&exact, &gt).unwrap(), 0.0);
        let zero = vec![0.0; 20];
        assert!((dice_loss(&zero, &gt).unwrap() - (1.0 - 1.0 / 11.0)).abs() < 1e-15);
        assert!(dice_loss(&zero[..5], &gt).is_err());
    }

    #[test]
    fn bce_examples() {
        let gt = region(vec![1, 4], 6);
        assert!((bce_loss(&[0.5; 6], &gt).unwrap() - core::f64::consts::LN_2).abs() <= 1e-12);
        let exact = [0.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let floor = -(1.0 - PROB_CLAMP).ln();
        assert!((bce_loss(&exact, &gt).unwrap() - floor).abs() < 1e-18);
    }

    #[test]
    fn dice_and_bce_match_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let pred: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
        let bits: Vec<bool> = (0..100).map(|_| rng.gen()).collect();
        let gt = RegionMask3D::from_dense(&bits);
        let g = |i: usize| if bits[i] { 1.0 } else { 0.0 };
        let inter: f64 = (0..100).map(|i| pred[i] * g(i)).sum();
        let dice = 1.0 - (2.0 * inter + 1.0) / (pred.iter().sum::<f64>() + (0..100).map(g).sum::<f64>() + 1.0);
        assert!((dice_loss(&pred, &gt).unwrap() - dice).abs() <= 1e-12);
        let bce = -(0..100)
            .map(|i| {
                let p = pred[i].clamp(1e-7, 1.0 - 1e-7);
                g(i) * p.ln() + (1.0 - g(i)) * (1.0 - p).ln()
            })
            .sum::<f64>()
            / 100.0;
        assert!((bce_loss(&pred, &gt).unwrap() - bce).abs() <= 1e-12);
    }

    #[test]
    fn objectness_examples() {
        let s = ObjectnessScores::new(std::vec![[0.0, 0.0]; 3]).unwrap();
        assert!((objectness_loss(&s, &[true, false, true]).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        let s = ObjectnessScores::new(std::vec![[-50.0, 50.0]]).unwrap();
        assert!(objectness_loss(&s, &[true]).unwrap() <= 1e-20);
        assert!(objectness_loss(&s, &[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let logits: Vec<[f64; 2]> = (0..8).map(|_| [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]).collect();
        let matched: Vec<bool> = (0..8).map(|_| rng.gen()).collect();
        let expect = logits
            .iter()
            .zip(&matched)
            .map(|(l, &m)| {
                let e0 = l[0].exp();
                let e1 = l[1].exp();
                -(if m { e1 } else { e0 } / (e0 + e1)).ln()
            })
            .sum::<f64>()
            / 8.0;
        let got = objectness_loss(&ObjectnessScores::new(logits).unwrap(), &matched).unwrap();
        assert!((got - expect).abs() <= 1e-12);
    }

    #[test]
    fn match_cost_composition() {
        let w = LossWeights::default();
        let gt = [region(vec![0, 1], 4), region(vec![2], 4)];
        let pred = SoftMaskMatrix::from_regions(&gt, 4).unwrap();
        let c = match_cost(&pred, &gt, &w).unwrap();
        // clamping leaves both components at the 1e-7 scale
        let floor = w.lambda_bce * -(1.0 - PROB_CLAMP).ln();
        assert!(c.get(0, 0) >= floor && c.get(0, 0) < 1e-5, "{}", c.get(0, 0));
        assert!(c.get(0, 1) > 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..3 * 30).map(|_| rng.gen()).collect();
        let pred = SoftMaskMatrix::new(3, 30, data).unwrap();
        let gts: Vec<RegionMask3D> = (0..2).map(|_| RegionMask3D::from_dense(&(0..30).map(|_| rng.gen()).collect::<Vec<bool>>())).collect();
        let c = match_cost(&pred, &gts, &w).unwrap();
        for q in 0..3 {
            for m in 0..2 {
                let expect = 2.0 * bce_loss(pred.row(q), &gts[m]).unwrap() + 5.0 * dice_loss(pred.row(q), &gts[m]).unwrap();
                assert!((c.get(q, m) - expect).abs() <= 1e-12);
            }
        }
    }

    fn perfect_fixture() -> (ObjectnessScores, SoftMaskMatrix, Vec<RegionMask3D>, EmbeddingMatrix, EmbeddingMatrix) {
        let gt = std::vec![region(vec![1, 2, 5], 8)];
        let pred = SoftMaskMatrix::from_regions(&gt, 8).unwrap();
        let scores = ObjectnessScores::new(std::vec![[-50.0, 50.0]]).unwrap();
        let e = emb(vec![vec![0.3, -0.2, 0.9]]);
        (scores, pred, gt, e.clone(), e)
    }

    #[test]
    fn total_loss_perfect_and_zero_weights() {
        let (scores, pred, gt, me, ce) = perfect_fixture();
        let inputs = MaskLossInputs { scores: &scores, pred: &pred, gt_regions: &gt, mask_emb: &me, caption_emb: &ce };
        let w = LossWeights::default();
        let out = total_mask_loss(&inputs, &w, &ContrastiveConfig::default()).unwrap();
        assert!(out.total <= 1e-5, "{out:?}");
        assert!((out.recombine(&w) - out.total).abs() <= 1e-12);
        let zero = total_mask_loss(&inputs, &LossWeights::ZERO, &ContrastiveConfig::default()).unwrap();
        assert_eq!(zero.total, 0.0);
    }

    #[test]
    fn total_loss_without_ground_truth_is_objectness_only() {
        let scores = ObjectnessScores::new(std::vec![[0.0, 0.0], [1.0, -1.0]]).unwrap();
        let pred = SoftMaskMatrix::new(2, 3, std::vec![0.5; 6]).unwrap();
        let me = emb(vec![vec![1.0], vec![2.0]]);
        let ce = EmbeddingMatrix::new(0, 1, std::vec![], false).unwrap();
        let inputs = MaskLossInputs { scores: &scores, pred: &pred, gt_regions: &[], mask_emb: &me, caption_emb: &ce };
        let out = total_mask_loss(&inputs, &LossWeights::default(), &ContrastiveConfig::default()).unwrap();
        assert_eq!((out.dice, out.bce, out.cap), (0.0, 0.0, 0.0));
        assert!(out.obj > 0.0);
        assert_eq!(out.total, 2.0 * out.obj);
    }

    struct Random {
        scores: ObjectnessScores,
        pred: SoftMaskMatrix,
        gt: Vec<RegionMask3D>,
        me: EmbeddingMatrix,
        ce: EmbeddingMatrix,
    }

    fn random_total(rng: &mut ChaCha8Rng, q: usize, m: usize, n: usize) -> Random {
        let scores = ObjectnessScores::new((0..q).map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect()).unwrap();
        let pred = SoftMaskMatrix::new(q, n, (0..q * n).map(|_| rng.gen()).collect()).unwrap();
        let gt = (0..m)
            .map(|_| {
                let mut bits: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
                bits[rng.gen_range(0..n)] = true;
                RegionMask3D::from_dense(&bits)
            })
            .collect();
        Random { scores, pred, gt, me: random_emb(rng, q, 8), ce: random_emb(rng, m, 8) }
    }

    #[test]
    fn total_loss_matches_component_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let r = random_total(&mut rng, 6, 4, 40);
        let w = LossWeights::default();
        let cfg = ContrastiveConfig::with_temperature(0.5);
        let inputs = MaskLossInputs { scores: &r.scores, pred: &r.pred, gt_regions: &r.gt, mask_emb: &r.me, caption_emb: &r.ce };
        let out = total_mask_loss(&inputs, &w, &cfg).unwrap();

        // independent composition: brute-force the optimal matching over all
        // injective maps gt -> query, then evaluate each component oracle
        let cost = |qi: usize, mi: usize| 2.0 * bce_loss(r.pred.row(qi), &r.gt[mi]).unwrap() + 5.0 * dice_loss(r.pred.row(qi), &r.gt[mi]).unwrap();
        let mut best = (f64::INFINITY, Vec::new());
        for a in 0..6 {
            for b in 0..6 {
                for c in 0..6 {
                    for d in 0..6 {
                        let qs = [a, b, c, d];
                        if (0..4).any(|i| (0..i).any(|j| qs[i] == qs[j])) {
                            continue;
                        }
                        let total: f64 = (0..4).map(|mi| cost(qs[mi], mi)).sum();
                        if total < best.0 {
                            best = (total, qs.to_vec());
                        }
                    }
                }
            }
        }
        let qs = best.1;
        let mut expected_matches: Vec<(usize, usize)> = qs.iter().enumerate().map(|(mi, &qi)| (qi, mi)).collect();
        expected_matches.sort();
        assert_eq!(out.matches, expected_matches);
        let dice = (0..4).map(|mi| dice_loss(r.pred.row(qs[mi]), &r.gt[mi]).unwrap()).sum::<f64>() / 4.0;
        let bce = (0..4).map(|mi| bce_loss(r.pred.row(qs[mi]), &r.gt[mi]).unwrap()).sum::<f64>() / 4.0;
        let matched: Vec<bool> = (0..6).map(|qi| qs.contains(&qi)).collect();
        let obj = objectness_loss(&r.scores, &matched).unwrap();
        let regions: Vec<RegionMask3D> = (0..4).map(|i| region(vec![i as u32], 4)).collect();
        let cap = point_oracle(&r.me.select_rows(&qs), &r.ce, &regions, &cfg);
        let total = 2.0 * obj + 5.0 * dice + 2.0 * bce + cap;
        assert!((out.total - total).abs() <= 1e-9 * total.abs().max(1.0));
        assert!((out.cap - cap).abs() <= 1e-9);
    }

    fn check_grad(loss: impl Fn(&EmbeddingMatrix, &EmbeddingMatrix) -> f64, x: &EmbeddingMatrix, y: &EmbeddingMatrix, g: &LossWithGrad, rng: &mut ChaCha8Rng) {
        let h = 1e-5;
        for _ in 0..20 {
            let which = rng.gen_bool(0.5);
            let base = if which { x } else { y };
            let idx = rng.gen_range(0..base.data().len());
            let bump = |delta: f64| {
                let mut d = base.data().to_vec();
                d[idx] += delta;
                EmbeddingMatrix::new(base.count(), base.dim(), d, false).unwrap()
            };
            let (plus, minus) = (bump(h), bump(-h));
            let fd = if which { (loss(&plus, y) - loss(&minus, y)) / (2.0 * h) } else { (loss(x, &plus) - loss(x, &minus)) / (2.0 * h) };
            let an = if which { g.grad_anchor[idx] } else { g.grad_target[idx] };
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-6), "fd {fd} analytic {an}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn point_loss_gradients(seed in any::<u64>(), normalize in any::<bool>(), literal in any::<bool>(), per_mask in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_emb(&mut rng, 12, 8);
            let t = random_emb(&mut rng, 3, 8);
            let regions: Vec<RegionMask3D> = (0..3)
                .map(|_| RegionMask3D::from_unsorted((0..rng.gen_range(1..8)).map(|_| rng.gen_range(0..12)).collect(), 12).unwrap())
                .collect();
            let cfg = ContrastiveConfig { temperature: rng.gen_range(0.2..2.0), normalize_embeddings: normalize, per_mask_mean: per_mask, formula_literal_denominator: literal };
            let g = point_contrastive_loss_grad(&p, &t, &regions, &cfg).unwrap();
            prop_assert!((g.loss - point_contrastive_loss(&p, &t, &regions, &cfg).unwrap()).abs() < 1e-15);
            check_grad(|a, b| point_contrastive_loss(a, b, &regions, &cfg).unwrap(), &p, &t, &g, &mut rng);
        }

        #[test]
        fn mask_caption_gradients(seed in any::<u64>(), normalize in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_emb(&mut rng, 5, 8);
            let b = random_emb(&mut rng, 5, 8);
            let cfg = ContrastiveConfig { normalize_embeddings: normalize, ..ContrastiveConfig::with_temperature(rng.gen_range(0.2..2.0)) };
            let g = mask_caption_loss_grad(&a, &b, &cfg).unwrap();
            check_grad(|x, y| mask_caption_loss(x, y, &cfg).unwrap(), &a, &b, &g, &mut rng);
        }

        #[test]
        fn text_scaling_keeps_argmax(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_emb(&mut rng, 10, 4);
            let t = random_emb(&mut rng, 3, 4);
            let scaled = EmbeddingMatrix::new(3, 4, t.data().iter().map(|v| v * scale).collect(), false).unwrap();
            let regions: Vec<RegionMask3D> = (0..3).map(|k| region(vec![k as u32], 10)).collect();
            let cfg = ContrastiveConfig::default();
            let a = point_contrastive_loss(&p, &t, &regions, &cfg).unwrap();
            let b = point_contrastive_loss(&p, &scaled, &regions, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn dice_and_bce_ranges(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..50);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let gt = RegionMask3D::from_dense(&(0..n).map(|_| rng.gen()).collect::<Vec<bool>>());
            let d = dice_loss(&pred, &gt).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!(bce_loss(&pred, &gt).unwrap() >= 0.0);
        }

        #[test]
        fn total_loss_permutation_equivariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_total(&mut rng, 5, 3, 30);
            let cfg = ContrastiveConfig::with_temperature(0.3);
            let w = LossWeights::default();
            let base = total_mask_loss(&MaskLossInputs { scores: &r.scores, pred: &r.pred, gt_regions: &r.gt, mask_emb: &r.me, caption_emb: &r.ce }, &w, &cfg).unwrap();
            let perm = [2usize, 0, 1];
            let gt: Vec<RegionMask3D> = perm.iter().map(|&i| r.gt[i].clone()).collect();
            let ce = r.ce.select_rows(&perm);
            let out = total_mask_loss(&MaskLossInputs { scores: &r.scores, pred: &r.pred, gt_regions: &gt, mask_emb: &r.me, caption_emb: &ce }, &w, &cfg).unwrap();
            prop_assert_eq!((base.obj, base.dice, base.bce, base.cap, base.total), (out.obj, out.dice, out.bce, out.cap, out.total));
        }
    }
}
