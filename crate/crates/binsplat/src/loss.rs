//! Progressive multi-level contrastive loss, virtual-negative guidance, and
//! the assembled training objective.
//!
//! Level 1 uses plain pull/push contrast over pixel pairs. At level l >= 2
//! each pair falls into exactly one case: same level-l mask (pull), same
//! parent but different level-l mask (push with margin D_l), different
//! parent (no constraint — the coarser levels already separate the pair), or
//! excluded because a member is unlabeled at level l. Pair terms are summed
//! over contributing pairs: with per-pair averaging the regularizer
//! out-muscles the pulls per component and early bit patterns freeze before
//! pixels of one mask can agree.
//!
//! Repulsion pairs whose binarized rows coincide exactly sit at the maximum
//! of their term, where the L2 kink admits any descent direction; the
//! gradient there is chosen along the pre-binarized feature difference, the
//! nearest distinguishing direction. Without this, masks whose codes ever
//! collide can never separate again. Satisfied pull pairs keep the zero
//! subgradient.
//!
//! Groups whose parent mask is indivisible have no negatives at the finer
//! level; an all-one virtual negative turns their norm into a repulsion
//! target, pushing the group toward the all-zero code.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::codec;
use crate::mask::MaskPyramid;
use crate::scene::LevelLayout;

const ROW_CHUNK: usize = 32;

/// One sampled training pixel with its labels at every level (0 = unlabeled).
#[derive(Debug, Clone)]
pub struct PixelSample {
    pub view: u32,
    pub x: u32,
    pub y: u32,
    pub labels: Vec<u32>,
}

/// A batch of sampled pixels with rendered features.
///
/// `features` holds the pre-binarized compositor output F_p; `binary` holds
/// the thresholded rows fed to the contrastive terms. Gradients w.r.t.
/// `binary` pass straight through to `features`.
#[derive(Debug, Clone)]
pub struct PixelBatch {
    pub layout: LevelLayout,
    pub samples: Vec<PixelSample>,
    pub features: Vec<f64>,
    pub binary: Vec<f64>,
}

impl PixelBatch {
    pub fn new(
        layout: LevelLayout,
        samples: Vec<PixelSample>,
        features: Vec<f64>,
        binary: Vec<f64>,
    ) -> Self {
        let dim = layout.total_dim();
        assert_eq!(features.len(), samples.len() * dim);
        assert_eq!(binary.len(), samples.len() * dim);
        assert!(
            samples.iter().all(|s| s.labels.len() == layout.levels() && s.labels[0] != 0),
            "every batch pixel must be labeled at level 1"
        );
        Self { layout, samples, features, binary }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn binary_row(&self, i: usize) -> &[f64] {
        let dim = self.layout.total_dim();
        &self.binary[i * dim..(i + 1) * dim]
    }

    fn feature_row(&self, i: usize) -> &[f64] {
        let dim = self.layout.total_dim();
        &self.features[i * dim..(i + 1) * dim]
    }
}

/// Per-level loss terms and pair-case counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelTerms {
    /// Summed pull distance over positive pairs.
    pub positive: f64,
    /// Summed margin-minus-distance over repulsion pairs.
    pub negative: f64,
    /// Summed level-slice norm over pixels of indivisible groups.
    pub virtual_negative: f64,
    pub positive_pairs: u64,
    pub negative_pairs: u64,
    pub skipped_pairs: u64,
    pub excluded_pairs: u64,
    pub vn_pixels: u64,
}

impl LevelTerms {
    pub fn pair_total(&self) -> u64 {
        self.positive_pairs + self.negative_pairs + self.skipped_pairs + self.excluded_pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub regularizer: f64,
    pub guiding: f64,
    pub contrastive: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { regularizer: 10.0, guiding: 1.0, contrastive: 1.0 }
    }
}

/// Everything the training step logs for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub levels: Vec<LevelTerms>,
    pub regularizer: f64,
    pub weights: LossWeights,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Which constraint a pair receives at a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCase {
    Positive,
    Negative,
    Skipped,
    Excluded,
}

/// Case analysis for an unordered pair at `level` (1-based).
pub fn pair_case(a: &PixelSample, b: &PixelSample, level: usize) -> PairCase {
    let la = a.labels[level - 1];
    let lb = b.labels[level - 1];
    if level == 1 {
        return if la == lb { PairCase::Positive } else { PairCase::Negative };
    }
    if la == 0 || lb == 0 {
        return PairCase::Excluded;
    }
    if la == lb {
        return PairCase::Positive;
    }
    if a.labels[level - 2] == b.labels[level - 2] {
        return PairCase::Negative;
    }
    PairCase::Skipped
}

fn pair_loss(batch: &PixelBatch, level: usize) -> (LevelTerms, Vec<f64>) {
    let n = batch.len();
    let dim = batch.layout.total_dim();
    let range = batch.layout.level_range(level);
    let ldim = range.len();
    let margin = ldim as f64;

    struct Partial {
        pos_sum: f64,
        neg_sum: f64,
        pos_pairs: u64,
        neg_pairs: u64,
        skipped: u64,
        excluded: u64,
        pos_grad: Vec<f64>,
        neg_grad: Vec<f64>,
    }

    let rows: Vec<usize> = (0..n).collect();
    let partials: Vec<Partial> = rows
        .par_chunks(ROW_CHUNK)
        .map(|chunk| {
            let mut part = Partial {
                pos_sum: 0.0,
                neg_sum: 0.0,
                pos_pairs: 0,
                neg_pairs: 0,
                skipped: 0,
                excluded: 0,
                pos_grad: vec![0.0; n * ldim],
                neg_grad: vec![0.0; n * ldim],
            };
            for &p in chunk {
                for q in p + 1..n {
                    let case = pair_case(&batch.samples[p], &batch.samples[q], level);
                    match case {
                        PairCase::Skipped => {
                            part.skipped += 1;
                            continue;
                        }
                        PairCase::Excluded => {
                            part.excluded += 1;
                            continue;
                        }
                        _ => {}
                    }
                    let fp = &batch.binary_row(p)[range.clone()];
                    let fq = &batch.binary_row(q)[range.clone()];
                    let dist2: f64 =
                        fp.iter().zip(fq).map(|(a, b)| (a - b) * (a - b)).sum();
                    let dist = dist2.sqrt();
                    match case {
                        PairCase::Positive => {
                            part.pos_sum += dist;
                            part.pos_pairs += 1;
                            if dist > 0.0 {
                                for d in 0..ldim {
                                    let dir = (fp[d] - fq[d]) / dist;
                                    part.pos_grad[p * ldim + d] += dir;
                                    part.pos_grad[q * ldim + d] -= dir;
                                }
                            }
                        }
                        PairCase::Negative => {
                            part.neg_sum += margin - dist;
                            part.neg_pairs += 1;
                            if dist > 0.0 {
                                for d in 0..ldim {
                                    let dir = (fp[d] - fq[d]) / dist;
                                    part.neg_grad[p * ldim + d] -= dir;
                                    part.neg_grad[q * ldim + d] += dir;
                                }
                            } else {
                                // Coinciding codes: separate along the
                                // continuous feature difference.
                                let cp = &batch.feature_row(p)[range.clone()];
                                let cq = &batch.feature_row(q)[range.clone()];
                                let n: f64 = cp
                                    .iter()
                                    .zip(cq)
                                    .map(|(a, b)| (a - b) * (a - b))
                                    .sum::<f64>()
                                    .sqrt();
                                if n > 0.0 {
                                    for d in 0..ldim {
                                        let dir = (cp[d] - cq[d]) / n;
                                        part.neg_grad[p * ldim + d] -= dir;
                                        part.neg_grad[q * ldim + d] += dir;
                                    }
                                }
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
            part
        })
        .collect();

    let mut terms = LevelTerms::default();
    let mut pos_grad = vec![0.0; n * ldim];
    let mut neg_grad = vec![0.0; n * ldim];
    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    for part in partials {
        pos_sum += part.pos_sum;
        neg_sum += part.neg_sum;
        terms.positive_pairs += part.pos_pairs;
        terms.negative_pairs += part.neg_pairs;
        terms.skipped_pairs += part.skipped;
        terms.excluded_pairs += part.excluded;
        for (acc, v) in pos_grad.iter_mut().zip(part.pos_grad) {
            *acc += v;
        }
        for (acc, v) in neg_grad.iter_mut().zip(part.neg_grad) {
            *acc += v;
        }
    }

    let mut grad = vec![0.0; n * dim];
    terms.positive = pos_sum;
    terms.negative = neg_sum;
    for i in 0..n {
        for d in 0..ldim {
            grad[i * dim + range.start + d] =
                pos_grad[i * ldim + d] + neg_grad[i * ldim + d];
        }
    }
    (terms, grad)
}

/// Standard pull/push contrast over level-1 features (all batch pixels carry
/// a level-1 label). Returns the terms and the gradient w.r.t. the binarized
/// batch rows.
pub fn level1_loss(batch: &PixelBatch) -> (LevelTerms, Vec<f64>) {
    pair_loss(batch, 1)
}

/// Level-l contrast for l >= 2 with the three-case analysis.
pub fn level_loss(batch: &PixelBatch, level: usize) -> (LevelTerms, Vec<f64>) {
    assert!(
        (2..=batch.layout.levels()).contains(&level),
        "level {level} out of range 2..={}",
        batch.layout.levels()
    );
    pair_loss(batch, level)
}

/// Mask hierarchy nodes that have exactly one child at the next level,
/// keyed as (child level, parent mask id). Computed once from the global
/// hierarchy, not per batch.
pub fn detect_indivisible(pyramid: &MaskPyramid) -> BTreeSet<(usize, u32)> {
    let mut set = BTreeSet::new();
    for level in 2..=pyramid.levels() {
        for &parent in pyramid.registry(level - 1).keys() {
            if pyramid.child_count(level - 1, parent) == 1 {
                set.insert((level, parent));
            }
        }
    }
    set
}

/// Push pixels of indivisible groups away from the all-one virtual negative
/// by penalizing their level-slice norm, summed over such pixels per level.
/// Returns per-level (term, pixel count) and the gradient w.r.t. the
/// binarized rows.
pub fn virtual_negative_loss(
    batch: &PixelBatch,
    indivisible: &BTreeSet<(usize, u32)>,
) -> (Vec<(f64, u64)>, Vec<f64>) {
    let n = batch.len();
    let dim = batch.layout.total_dim();
    let levels = batch.layout.levels();
    let mut per_level = vec![(0.0, 0u64); levels];
    let mut grad = vec![0.0; n * dim];
    for level in 2..=levels {
        let range = batch.layout.level_range(level);
        let mut sum = 0.0;
        let mut count = 0u64;
        for i in 0..n {
            let parent = batch.samples[i].labels[level - 2];
            if parent == 0 || !indivisible.contains(&(level, parent)) {
                continue;
            }
            count += 1;
            let row = &batch.binary_row(i)[range.clone()];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            sum += norm;
            if norm > 0.0 {
                for (d, &v) in row.iter().enumerate() {
                    grad[i * dim + range.start + d] += v / norm;
                }
            }
        }
        per_level[level - 1] = (sum, count);
    }
    (per_level, grad)
}

/// Assemble the full objective: binary regularizer on F_p, virtual-negative
/// terms, and all level contrasts, in one pass over the batch. Returns the
/// breakdown and dLoss/dF_p for the compositor backward (contrastive and
/// guiding gradients pass through the straight-through estimator unchanged).
pub fn total_loss(
    batch: &PixelBatch,
    indivisible: &BTreeSet<(usize, u32)>,
    weights: LossWeights,
) -> (LossBreakdown, Vec<f64>) {
    let dim = batch.layout.total_dim();
    let n = batch.len();
    let levels = batch.layout.levels();

    let (reg, reg_grad) = codec::binary_regularizer(&batch.features, dim);
    let (vn_terms, vn_grad) = virtual_negative_loss(batch, indivisible);

    let mut level_terms = Vec::with_capacity(levels);
    let mut d_features = vec![0.0; n * dim];
    for level in 1..=levels {
        let (mut terms, grad) = pair_loss(batch, level);
        let (vn, vn_count) = vn_terms[level - 1];
        terms.virtual_negative = vn;
        terms.vn_pixels = vn_count;
        for (acc, g) in d_features.iter_mut().zip(&grad) {
            *acc += weights.contrastive * g;
        }
        level_terms.push(terms);
    }
    for i in 0..n * dim {
        d_features[i] += weights.guiding * vn_grad[i] + weights.regularizer * reg_grad[i];
    }

    let contrastive_sum: f64 =
        level_terms.iter().map(|t| t.positive + t.negative).sum();
    let vn_sum: f64 = level_terms.iter().map(|t| t.virtual_negative).sum();
    let total = weights.regularizer * reg
        + weights.guiding * vn_sum
        + weights.contrastive * contrastive_sum;

    (
        LossBreakdown { levels: level_terms, regularizer: reg, weights, total },
        d_features,
    )
}
