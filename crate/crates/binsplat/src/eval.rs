//! Segmentation metrics against ground-truth mask pyramids.
//!
//! Predicted label ids carry no fixed correspondence to truth ids, so mIoU
//! matches them greedily by descending intersection, one-to-one; unmatched
//! truth masks score zero. Pixels unlabeled in the truth are excluded from
//! the metric entirely.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::mask::MaskPyramid;

#[derive(Debug, Clone)]
pub struct MiouReport {
    /// Mean IoU over truth masks, in [0, 1].
    pub miou: f64,
    /// Per truth mask: (truth id, matched IoU).
    pub per_mask: Vec<(u32, f64)>,
}

/// Greedy one-to-one matching between predicted and truth labels at a level,
/// restricted to truth-labeled pixels. `predictions` holds one label image
/// per entry of `views`, aligned with the pyramid's dimensions.
pub fn eval_miou(
    predictions: &[Vec<u32>],
    truth: &MaskPyramid,
    views: &[usize],
    level: usize,
) -> Result<MiouReport> {
    if predictions.len() != views.len() {
        return Err(Error::Contract(format!(
            "{} prediction images for {} views",
            predictions.len(),
            views.len()
        )));
    }
    let pixels = (truth.width() * truth.height()) as usize;
    let mut intersections: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut pred_sizes: BTreeMap<u32, u64> = BTreeMap::new();
    let mut truth_sizes: BTreeMap<u32, u64> = BTreeMap::new();
    for (pred, &view) in predictions.iter().zip(views) {
        if pred.len() != pixels {
            return Err(Error::Contract(format!(
                "prediction for view {view} has {} pixels, truth is {pixels}",
                pred.len()
            )));
        }
        let labels = truth.label_map(view, level);
        for p in 0..pixels {
            let t = labels[p];
            if t == 0 {
                continue;
            }
            let pr = pred[p];
            *intersections.entry((pr, t)).or_insert(0) += 1;
            *pred_sizes.entry(pr).or_insert(0) += 1;
            *truth_sizes.entry(t).or_insert(0) += 1;
        }
    }

    let mut pairs: Vec<((u32, u32), u64)> = intersections.into_iter().collect();
    // Descending intersection, deterministic tie-break by ids.
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut matched_pred: BTreeMap<u32, ()> = BTreeMap::new();
    let mut matched_truth: BTreeMap<u32, f64> = BTreeMap::new();
    for ((pr, t), inter) in pairs {
        if matched_pred.contains_key(&pr) || matched_truth.contains_key(&t) {
            continue;
        }
        let union = pred_sizes[&pr] + truth_sizes[&t] - inter;
        matched_pred.insert(pr, ());
        matched_truth.insert(t, inter as f64 / union as f64);
    }

    let per_mask: Vec<(u32, f64)> = truth_sizes
        .keys()
        .map(|&t| (t, matched_truth.get(&t).copied().unwrap_or(0.0)))
        .collect();
    let miou = if per_mask.is_empty() {
        0.0
    } else {
        per_mask.iter().map(|(_, iou)| iou).sum::<f64>() / per_mask.len() as f64
    };
    Ok(MiouReport { miou, per_mask })
}

/// Fraction of truth-labeled pixel pairs on which prediction and truth agree
/// about same-vs-different, computed exactly from the label contingency
/// table.
pub fn pairwise_consistency(
    predictions: &[Vec<u32>],
    truth: &MaskPyramid,
    views: &[usize],
    level: usize,
) -> Result<f64> {
    if predictions.len() != views.len() {
        return Err(Error::Contract("one prediction image per view required".into()));
    }
    let pixels = (truth.width() * truth.height()) as usize;
    let mut cells: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut pred_sizes: BTreeMap<u32, u64> = BTreeMap::new();
    let mut truth_sizes: BTreeMap<u32, u64> = BTreeMap::new();
    let mut total = 0u64;
    for (pred, &view) in predictions.iter().zip(views) {
        let labels = truth.label_map(view, level);
        for p in 0..pixels {
            let t = labels[p];
            if t == 0 {
                continue;
            }
            total += 1;
            *cells.entry((pred[p], t)).or_insert(0) += 1;
            *pred_sizes.entry(pred[p]).or_insert(0) += 1;
            *truth_sizes.entry(t).or_insert(0) += 1;
        }
    }
    if total < 2 {
        return Ok(1.0);
    }
    let choose2 = |n: u64| -> f64 { (n as f64) * (n as f64 - 1.0) / 2.0 };
    let all_pairs = choose2(total);
    let same_truth: f64 = truth_sizes.values().map(|&n| choose2(n)).sum();
    let same_pred: f64 = pred_sizes.values().map(|&n| choose2(n)).sum();
    let same_both: f64 = cells.values().map(|&n| choose2(n)).sum();
    // Agreeing pairs: same in both, or different in both.
    let agree = same_both + (all_pairs - same_truth - same_pred + same_both);
    Ok(agree / all_pairs)
}

/// Per-level metrics plus artifact size and render timing.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub levels: Vec<LevelEval>,
    pub code_table_bytes: usize,
    /// Seconds for one full class-map render, when measured.
    pub class_render_seconds: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LevelEval {
    pub level: usize,
    pub miou: f64,
    pub consistency: f64,
    pub per_mask: Vec<(u32, f64)>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,miou_percent,consistency_percent\n");
        for l in &self.levels {
            out.push_str(&format!(
                "{},{},{}\n",
                l.level,
                l.miou * 100.0,
                l.consistency * 100.0
            ));
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "level  mIoU%   consistency%  per-mask IoU")?;
        for l in &self.levels {
            let marks: Vec<String> =
                l.per_mask.iter().map(|(id, iou)| format!("{id}:{:.1}", iou * 100.0)).collect();
            writeln!(
                f,
                "{:>5}  {:>6.2}  {:>11.2}  {}",
                l.level,
                l.miou * 100.0,
                l.consistency * 100.0,
                marks.join(" ")
            )?;
        }
        writeln!(f, "code table payload: {} bytes", self.code_table_bytes)?;
        if let Some(s) = self.class_render_seconds {
            writeln!(f, "class-map render: {:.4} s", s)?;
        }
        Ok(())
    }
}
