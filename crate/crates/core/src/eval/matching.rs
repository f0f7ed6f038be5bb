use std::collections::HashMap;

use super::{Detection, GroundTruthBox};
use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchFlag {
    TruePositive,
    FalsePositive,
    /// Matched an ignored ground truth box; counts as neither.
    Ignored,
}

/// Ground truth as seen by the matcher.
pub(crate) struct GtSlot {
    pub bbox: BBox,
    /// Matches against this box are ignored.
    pub ignore: bool,
    /// May absorb any number of detections (difficult boxes).
    pub reusable: bool,
}

/// Greedy matching of score-ordered detections.
///
/// Each detection takes the unmatched, non-ignored ground truth with the
/// highest IoU of at least `threshold` (first one on ties). Only if none
/// exists does it fall back to an ignored ground truth. Returns the matched
/// slot per detection.
pub(crate) fn greedy_match(dets: &[BBox], gts: &[GtSlot], threshold: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64, bool)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] && !gt.reusable {
                    continue;
                }
                let o = iou(d, &gt.bbox);
                if o < threshold {
                    continue;
                }
                let better = match best {
                    None => true,
                    // regular boxes always beat ignored ones
                    Some((_, bo, bign)) => (bign && !gt.ignore) || (bign == gt.ignore && o > bo),
                };
                if better {
                    best = Some((g, o, gt.ignore));
                }
            }
            best.map(|(g, _, _)| {
                taken[g] = true;
                g
            })
        })
        .collect()
}

/// Flag each detection as TP/FP/ignored at `iou_threshold`, matching within
/// each (image, category) group in descending score order. Difficult ground
/// truth boxes are ignored. Flags are returned in input order.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> Vec<MatchFlag> {
    let mut det_groups: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        det_groups.entry((&d.image_id, &d.category)).or_default().push(i);
    }
    let mut gt_groups: HashMap<(&str, &str), Vec<&GroundTruthBox>> = HashMap::new();
    for g in gts {
        gt_groups.entry((&g.image_id, &g.category)).or_default().push(g);
    }

    let mut flags = vec![MatchFlag::FalsePositive; dets.len()];
    for (key, mut idx) in det_groups {
        idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
        let slots: Vec<GtSlot> = gt_groups
            .get(&key)
            .map(|v| {
                v.iter()
                    .map(|g| GtSlot {
                        bbox: g.bbox,
                        ignore: g.difficult,
                        reusable: g.difficult,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let boxes: Vec<BBox> = idx.iter().map(|&i| dets[i].bbox).collect();
        for (&i, m) in idx.iter().zip(greedy_match(&boxes, &slots, iou_threshold)) {
            flags[i] = match m {
                Some(g) if slots[g].ignore => MatchFlag::Ignored,
                Some(_) => MatchFlag::TruePositive,
                None => MatchFlag::FalsePositive,
            };
        }
    }
    flags
}
