//! COCO-style summary: AP over IoU 0.50:0.05:0.95 with 101-point recall
//! sampling, split by object area, and AR under per-image detection budgets.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use super::ap::{envelope, pr_curve, sampled};
use super::matching::{greedy_match, GtSlot};
use super::{Detection, EvalReport, GroundTruthBox, MatchFlag, SummaryMetrics};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct CocoParams {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: usize,
    /// Ascending per-image, per-category detection budgets.
    pub max_dets: Vec<usize>,
    /// `(all, small, medium, large)` inclusive area bounds.
    pub area_ranges: [(f64, f64); 4],
}

impl Default for CocoParams {
    fn default() -> Self {
        const BIG: f64 = 1e10;
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            recall_points: 101,
            max_dets: vec![1, 10, 100],
            area_ranges: [
                (0.0, BIG),
                (0.0, 32.0 * 32.0),
                (32.0 * 32.0, 96.0 * 96.0),
                (96.0 * 96.0, BIG),
            ],
        }
    }
}

const AREA_ALL: usize = 0;

/// Per (threshold, area, budget) result for one category.
struct CategoryEval {
    /// `[t][a][m]`
    precision: Vec<Vec<Vec<Option<f64>>>>,
    recall: Vec<Vec<Vec<Option<f64>>>>,
}

fn in_range(area: f64, (lo, hi): (f64, f64)) -> bool {
    area >= lo && area <= hi
}

fn evaluate_category(
    images: &[&str],
    dets: &HashMap<&str, Vec<&Detection>>,
    gts: &HashMap<&str, Vec<&GroundTruthBox>>,
    params: &CocoParams,
) -> CategoryEval {
    let nt = params.iou_thresholds.len();
    let na = params.area_ranges.len();
    let nm = params.max_dets.len();
    let mut precision = vec![vec![vec![None; nm]; na]; nt];
    let mut recall = vec![vec![vec![None; nm]; na]; nt];
    let recall_thresholds: Vec<f64> = (0..params.recall_points)
        .map(|i| i as f64 / (params.recall_points - 1).max(1) as f64)
        .collect();

    for (a, &range) in params.area_ranges.iter().enumerate() {
        // per image: (score, flag per threshold) for score-ordered detections
        let mut per_image: Vec<Vec<(f64, Vec<MatchFlag>)>> = Vec::with_capacity(images.len());
        let mut num_positive = 0usize;
        for img in images {
            let img_gts = gts.get(img).map(Vec::as_slice).unwrap_or_default();
            let img_dets = dets.get(img).map(Vec::as_slice).unwrap_or_default();
            let slots: Vec<GtSlot> = img_gts
                .iter()
                .map(|g| GtSlot {
                    bbox: g.bbox,
                    ignore: g.difficult || !in_range(g.bbox.area(), range),
                    reusable: g.difficult,
                })
                .collect();
            num_positive += slots.iter().filter(|s| !s.ignore).count();
            let boxes: Vec<BBox> = img_dets.iter().map(|d| d.bbox).collect();

            let mut rows: Vec<(f64, Vec<MatchFlag>)> =
                img_dets.iter().map(|d| (d.score, Vec::with_capacity(nt))).collect();
            for &t in &params.iou_thresholds {
                let matches = greedy_match(&boxes, &slots, t);
                for ((row, m), d) in rows.iter_mut().zip(matches).zip(img_dets) {
                    let flag = match m {
                        Some(g) if slots[g].ignore => MatchFlag::Ignored,
                        Some(_) => MatchFlag::TruePositive,
                        None if !in_range(d.bbox.area(), range) => MatchFlag::Ignored,
                        None => MatchFlag::FalsePositive,
                    };
                    row.1.push(flag);
                }
            }
            per_image.push(rows);
        }
        if num_positive == 0 {
            continue;
        }

        for (m, &budget) in params.max_dets.iter().enumerate() {
            let pooled: Vec<&(f64, Vec<MatchFlag>)> =
                per_image.iter().flat_map(|rows| rows.iter().take(budget)).collect();
            for t in 0..nt {
                let entries: Vec<(f64, MatchFlag)> = pooled.iter().map(|(s, f)| (*s, f[t])).collect();
                let curve = pr_curve(&entries, num_positive);
                let env = envelope(&curve);
                let q = sampled(&curve, &env, recall_thresholds.iter().copied());
                precision[t][a][m] = Some(q.iter().sum::<f64>() / q.len() as f64);
                recall[t][a][m] = Some(curve.last().map_or(0.0, |c| c.0));
            }
        }
    }
    CategoryEval { precision, recall }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// COCO-style AP/AR summary.
///
/// Detections are matched per image and category in descending score order,
/// keeping at most the largest budget in `max_dets` per image and category.
/// Ground truth outside an area band is ignored for that band, as are
/// unmatched detections outside it. Difficult boxes are always ignored.
/// Categories without positive ground truth are reported absent.
pub fn coco_summary(dets: &[Detection], gts: &[GroundTruthBox], params: &CocoParams) -> EvalReport {
    let mut images: BTreeSet<&str> = BTreeSet::new();
    let mut categories: BTreeSet<&str> = BTreeSet::new();
    for d in dets {
        images.insert(&d.image_id);
        categories.insert(&d.category);
    }
    for g in gts {
        images.insert(&g.image_id);
        categories.insert(&g.category);
    }
    let images: Vec<&str> = images.into_iter().collect();
    let categories: Vec<&str> = categories.into_iter().collect();
    let max_budget = params.max_dets.iter().copied().max().unwrap_or(0);

    let mut det_index: HashMap<&str, HashMap<&str, Vec<&Detection>>> = HashMap::new();
    for d in dets {
        det_index
            .entry(&d.category)
            .or_default()
            .entry(&d.image_id)
            .or_default()
            .push(d);
    }
    for per_img in det_index.values_mut() {
        for v in per_img.values_mut() {
            // stable: equal scores keep input order
            v.sort_by(|a, b| b.score.total_cmp(&a.score));
            v.truncate(max_budget);
        }
    }
    let mut gt_index: HashMap<&str, HashMap<&str, Vec<&GroundTruthBox>>> = HashMap::new();
    for g in gts {
        gt_index
            .entry(&g.category)
            .or_default()
            .entry(&g.image_id)
            .or_default()
            .push(g);
    }

    let empty_d = HashMap::new();
    let empty_g = HashMap::new();
    let evals: Vec<CategoryEval> = categories
        .par_iter()
        .map(|cat| {
            evaluate_category(
                &images,
                det_index.get(cat).unwrap_or(&empty_d),
                gt_index.get(cat).unwrap_or(&empty_g),
                params,
            )
        })
        .collect();

    let nt = params.iou_thresholds.len();
    let last_m = params.max_dets.len().saturating_sub(1);
    let budget_index = |n: usize| params.max_dets.iter().position(|&m| m == n);
    let thr_index = |v: f64| params.iou_thresholds.iter().position(|t| (t - v).abs() < 1e-12);

    let ap_over = |ts: &[usize], a: usize, m: Option<usize>| {
        m.and_then(|m| mean(evals.iter().flat_map(|e| ts.iter().map(move |&t| e.precision[t][a][m]))))
    };
    let ar_over = |a: usize, m: Option<usize>| {
        m.and_then(|m| mean(evals.iter().flat_map(|e| (0..nt).map(move |t| e.recall[t][a][m]))))
    };
    let all_t: Vec<usize> = (0..nt).collect();
    let only = |v: f64| thr_index(v).map(|t| vec![t]).unwrap_or_default();
    let top = (!params.max_dets.is_empty()).then_some(last_m);

    let summary = SummaryMetrics {
        ap: ap_over(&all_t, AREA_ALL, top),
        ap50: ap_over(&only(0.5), AREA_ALL, top),
        ap75: ap_over(&only(0.75), AREA_ALL, top),
        ap_small: ap_over(&all_t, 1, top),
        ap_medium: ap_over(&all_t, 2, top),
        ap_large: ap_over(&all_t, 3, top),
        ar1: ar_over(AREA_ALL, budget_index(1)),
        ar10: ar_over(AREA_ALL, budget_index(10)),
        ar100: ar_over(AREA_ALL, budget_index(100)),
        ar_small: ar_over(1, top),
        ar_medium: ar_over(2, top),
        ar_large: ar_over(3, top),
    };

    let mut report = EvalReport::new(params.iou_thresholds.clone());
    report.detections_evaluated = dets.len();
    for (cat, e) in categories.iter().zip(&evals) {
        let per_t = (0..nt).map(|t| top.and_then(|m| e.precision[t][AREA_ALL][m])).collect();
        report.per_category.insert(cat.to_string(), per_t);
    }
    report.map = thr_index(0.5).and_then(|t| report.mean_at(t));
    report.summary = Some(summary);
    report
}
