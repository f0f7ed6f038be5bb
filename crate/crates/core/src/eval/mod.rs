//! Detection metrics: VOC-style per-class AP and COCO-style AP/AR summaries.

mod ap;
mod coco;
mod matching;
mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

pub use ap::{average_precision, Interpolation};
pub use coco::{coco_summary, CocoParams};
pub use matching::{match_detections, MatchFlag};
pub use report::{EvalReport, SummaryMetrics, SUMMARY_COLUMNS};

/// Per-image detection budget used at test time.
pub const MAX_DETECTIONS_PER_IMAGE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BBox,
    pub score: f64,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub bbox: BBox,
    pub category: String,
    pub difficult: bool,
}

/// Keep the `limit` highest-scoring detections of each image, across all
/// categories. Ties go to the earlier detection; survivors keep input order.
pub fn cap_detections(dets: &[Detection], limit: usize) -> Vec<Detection> {
    let mut per_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        per_image.entry(d.image_id.as_str()).or_default().push(i);
    }
    let mut keep = vec![false; dets.len()];
    for idx in per_image.values_mut() {
        idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
        for &i in idx.iter().take(limit) {
            keep[i] = true;
        }
    }
    dets.iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then(|| d.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalStyle {
    Voc(Interpolation),
    Coco,
}

/// Per-category AP at IoU 0.5 and their mean, VOC style.
pub fn voc_evaluate(dets: &[Detection], gts: &[GroundTruthBox], interpolation: Interpolation) -> EvalReport {
    let flags = match_detections(dets, gts, 0.5);
    let mut categories: Vec<&str> = gts
        .iter()
        .map(|g| g.category.as_str())
        .chain(dets.iter().map(|d| d.category.as_str()))
        .collect();
    categories.sort_unstable();
    categories.dedup();

    let mut report = EvalReport::new(vec![0.5]);
    report.detections_evaluated = dets.len();
    for cat in categories {
        let num_gt = gts.iter().filter(|g| g.category == cat && !g.difficult).count();
        let entries: Vec<(f64, MatchFlag)> = dets
            .iter()
            .zip(&flags)
            .filter(|(d, _)| d.category == cat)
            .map(|(d, f)| (d.score, *f))
            .collect();
        let ap = average_precision(&entries, num_gt, interpolation);
        report.per_category.insert(cat.to_string(), vec![ap]);
    }
    report.map = report.mean_at(0);
    report
}

/// Evaluate with an optional per-image detection cap applied first.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    style: EvalStyle,
    cap: Option<usize>,
) -> EvalReport {
    let capped;
    let dets = match cap {
        Some(limit) => {
            capped = cap_detections(dets, limit);
            &capped[..]
        }
        None => dets,
    };
    match style {
        EvalStyle::Voc(interp) => voc_evaluate(dets, gts, interp),
        EvalStyle::Coco => coco_summary(dets, gts, &CocoParams::default()),
    }
}
