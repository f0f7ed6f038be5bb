use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SamplingConfig, ScoredProposal};
use crate::error::{Error, Result};
use crate::geometry::{encode_delta, iou, BBox, BoxDelta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoiLabel {
    Foreground(u32),
    Background,
}

/// RoIs for one image. Foregrounds come first; `regression_targets[i]` and
/// `assigned_gt[i]` belong to `rois[i]` for `i < fg_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiMinibatch {
    pub rois: Vec<BBox>,
    pub labels: Vec<RoiLabel>,
    pub regression_targets: Vec<BoxDelta>,
    pub assigned_gt: Vec<usize>,
    pub fg_count: usize,
    pub bg_count: usize,
}

fn best_overlap(b: &BBox, gts: &[GroundTruth]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, g) in gts.iter().enumerate() {
        let o = iou(b, &g.bbox);
        if best.is_none_or(|(_, bo)| o > bo) {
            best = Some((i, o));
        }
    }
    best
}

/// Label regions against ground truth and draw up to `R` RoIs.
///
/// A region is foreground when its best IoU with any ground truth box is at
/// least `fg_iou_min`, background when it lies in `[bg_iou_lo, bg_iou_hi)`,
/// and ignored otherwise. At most `floor(pos_fraction * R)` foregrounds are
/// drawn uniformly without replacement; the rest of the batch is filled with
/// backgrounds, also without replacement.
pub fn sample_minibatch<R: Rng + ?Sized>(
    selected: &[ScoredProposal],
    ground_truth: &[GroundTruth],
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<RoiMinibatch> {
    let mut candidates: Vec<BBox> = selected.iter().map(|p| p.bbox).collect();
    if cfg.exclude_gt {
        candidates.retain(|b| !ground_truth.iter().any(|g| g.bbox.bit_eq(b)));
    } else {
        candidates.extend(ground_truth.iter().map(|g| g.bbox));
    }

    let mut fg: Vec<(BBox, usize)> = Vec::new();
    let mut bg: Vec<BBox> = Vec::new();
    for b in candidates {
        let (gt, overlap) = best_overlap(&b, ground_truth).unwrap_or((usize::MAX, 0.0));
        if gt != usize::MAX && overlap >= cfg.fg_iou_min {
            fg.push((b, gt));
        } else if overlap >= cfg.bg_iou_lo && overlap < cfg.bg_iou_hi {
            bg.push(b);
        }
    }
    if fg.is_empty() && bg.is_empty() {
        return Err(Error::EmptyMinibatch);
    }

    let fg_quota = (cfg.pos_fraction * cfg.batch_rois as f64).floor() as usize;
    let fg_take = fg_quota.min(fg.len());
    let bg_take = (cfg.batch_rois - fg_take).min(bg.len());

    let mut batch = RoiMinibatch {
        rois: Vec::with_capacity(fg_take + bg_take),
        labels: Vec::with_capacity(fg_take + bg_take),
        regression_targets: Vec::with_capacity(fg_take),
        assigned_gt: Vec::with_capacity(fg_take),
        fg_count: fg_take,
        bg_count: bg_take,
    };
    for i in sample(rng, fg.len(), fg_take) {
        let (roi, gt) = fg[i];
        let target = &ground_truth[gt];
        batch.rois.push(roi);
        batch.labels.push(RoiLabel::Foreground(target.class));
        batch.regression_targets.push(encode_delta(&roi, &target.bbox)?);
        batch.assigned_gt.push(gt);
    }
    for i in sample(rng, bg.len(), bg_take) {
        batch.rois.push(bg[i]);
        batch.labels.push(RoiLabel::Background);
    }
    Ok(batch)
}
