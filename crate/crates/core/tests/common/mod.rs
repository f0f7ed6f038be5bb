//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use roisample::eval::{Detection, GroundTruthBox};
use roisample::pooling::{crop_and_resize, FeatureMap, PooledFeature};
use roisample::sampling::ScoredProposal;
use roisample::{iou, BBox};

/// NMS by full pairwise IoU matrix: proposal `i` (in rank order) survives iff
/// no surviving higher-ranked proposal overlaps it by more than `threshold`.
pub fn exhaustive_nms(props: &[ScoredProposal], threshold: f64) -> Vec<ScoredProposal> {
    let mut order: Vec<&ScoredProposal> = props.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.source_index.cmp(&b.source_index))
    });
    let n = order.len();
    let matrix: Vec<Vec<f64>> = order
        .iter()
        .map(|a| order.iter().map(|b| iou(&a.bbox, &b.bbox)).collect())
        .collect();
    let mut kept = vec![false; n];
    for i in 0..n {
        kept[i] = !(0..i).any(|j| kept[j] && matrix[j][i] > threshold);
    }
    order
        .into_iter()
        .zip(kept)
        .filter_map(|(p, k)| k.then_some(*p))
        .collect()
}

/// Clustered random proposals with coarse scores so that ties occur.
pub fn random_proposals<R: Rng>(rng: &mut R, n: usize) -> Vec<ScoredProposal> {
    let clusters = (n / 8).max(1);
    let centers: Vec<(f64, f64, f64)> = (0..clusters)
        .map(|_| {
            (
                rng.random_range(0.0..1000.0),
                rng.random_range(0.0..1000.0),
                rng.random_range(10.0..200.0),
            )
        })
        .collect();
    (0..n)
        .map(|i| {
            let (cx, cy, s) = centers[rng.random_range(0..clusters)];
            let w = s * rng.random_range(0.7..1.3);
            let h = s * rng.random_range(0.7..1.3);
            let x = cx + rng.random_range(-0.2..0.2) * s;
            let y = cy + rng.random_range(-0.2..0.2) * s;
            let score = (rng.random_range(0.0..1.0f64) * 100.0).round() / 100.0;
            ScoredProposal::new(BBox::from_center(x, y, w, h).unwrap(), score, i).unwrap()
        })
        .collect()
}

// ---------------------------------------------------------------- evaluation

pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Enumerate every injective partial assignment of detections (score order)
/// to ground truth with IoU >= `t`, and call `visit` with the chosen GT per
/// detection.
fn enumerate_assignments(dets: &[BBox], gts: &[BBox], t: f64, visit: &mut dyn FnMut(&[Option<usize>])) {
    fn rec(
        d: usize,
        dets: &[BBox],
        gts: &[BBox],
        t: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        visit: &mut dyn FnMut(&[Option<usize>]),
    ) {
        if d == dets.len() {
            visit(cur);
            return;
        }
        cur.push(None);
        rec(d + 1, dets, gts, t, used, cur, visit);
        cur.pop();
        for g in 0..gts.len() {
            if !used[g] && iou(&dets[d], &gts[g]) >= t {
                used[g] = true;
                cur.push(Some(g));
                rec(d + 1, dets, gts, t, used, cur, visit);
                cur.pop();
                used[g] = false;
            }
        }
    }
    rec(0, dets, gts, t, &mut vec![false; gts.len()], &mut Vec::new(), visit);
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Lexicographic in score order: matched before unmatched, then higher IoU.
    ScoreOrderLexicographic,
    /// Largest number of matched detections.
    MaxTruePositives,
}

fn best_assignment(dets: &[BBox], gts: &[BBox], t: f64, objective: Objective) -> Vec<bool> {
    let mut best: Option<(Vec<(u8, f64)>, Vec<bool>)> = None;
    enumerate_assignments(dets, gts, t, &mut |a| {
        let key: Vec<(u8, f64)> = match objective {
            Objective::ScoreOrderLexicographic => a
                .iter()
                .enumerate()
                .map(|(d, m)| m.map_or((0, 0.0), |g| (1, iou(&dets[d], &gts[g]))))
                .collect(),
            Objective::MaxTruePositives => vec![(a.iter().filter(|m| m.is_some()).count() as u8, 0.0)],
        };
        let better = match &best {
            None => true,
            Some((k, _)) => key.partial_cmp(k) == Some(std::cmp::Ordering::Greater),
        };
        if better {
            best = Some((key, a.iter().map(Option::is_some).collect()));
        }
    });
    best.map(|b| b.1).unwrap_or_default()
}

/// AP from scratch: precision at each of 101 recall levels is the best
/// precision attained at any rank whose recall reaches the level.
fn ap_101(mut scored: Vec<(f64, bool)>, npos: usize) -> f64 {
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut points = Vec::new();
    let mut tp = 0usize;
    for (k, (_, hit)) in scored.iter().enumerate() {
        tp += usize::from(*hit);
        points.push((tp as f64 / npos as f64, tp as f64 / (k + 1) as f64));
    }
    let total: f64 = (0..=100)
        .map(|i| {
            let r = i as f64 / 100.0;
            points
                .iter()
                .filter(|p| p.0 >= r)
                .map(|p| p.1)
                .fold(0.0, f64::max)
        })
        .sum();
    total / 101.0
}

/// COCO-style AP (all areas, no difficult boxes) by assignment enumeration.
pub fn brute_force_ap(dets: &[Detection], gts: &[GroundTruthBox], objective: Objective) -> Option<f64> {
    let cats: BTreeSet<&str> = gts.iter().map(|g| g.category.as_str()).collect();
    let images: BTreeSet<&str> = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .chain(gts.iter().map(|g| g.image_id.as_str()))
        .collect();
    let mut values = Vec::new();
    for cat in &cats {
        let npos = gts.iter().filter(|g| g.category == *cat).count();
        for t in coco_thresholds() {
            let mut scored = Vec::new();
            for img in &images {
                let mut ds: Vec<&Detection> = dets
                    .iter()
                    .filter(|d| d.category == *cat && d.image_id == *img)
                    .collect();
                ds.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
                let gb: Vec<BBox> = gts
                    .iter()
                    .filter(|g| g.category == *cat && g.image_id == *img)
                    .map(|g| g.bbox)
                    .collect();
                let db: Vec<BBox> = ds.iter().map(|d| d.bbox).collect();
                let hits = best_assignment(&db, &gb, t, objective);
                scored.extend(ds.iter().zip(hits).map(|(d, h)| (d.score, h)));
            }
            values.push(ap_101(scored, npos));
        }
    }
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// At most 5 detections and 5 ground truth boxes over two categories and one
/// or two images, drawn close together so that overlaps are common.
pub fn tiny_instance<R: Rng>(rng: &mut R) -> (Vec<Detection>, Vec<GroundTruthBox>) {
    let cats = ["a", "b"];
    let images = ["im0", "im1"];
    let n_img = rng.random_range(1..=2);
    let n_gt = rng.random_range(0..=5);
    let n_det = rng.random_range(0..=5);
    let rand_box = |rng: &mut R| {
        let x = rng.random_range(0.0..60.0);
        let y = rng.random_range(0.0..60.0);
        BBox::new(x, y, x + rng.random_range(8.0..50.0), y + rng.random_range(8.0..50.0)).unwrap()
    };
    let gts: Vec<GroundTruthBox> = (0..n_gt)
        .map(|_| GroundTruthBox {
            image_id: images[rng.random_range(0..n_img)].into(),
            bbox: rand_box(rng),
            category: cats[rng.random_range(0..2)].into(),
            difficult: false,
        })
        .collect();
    let dets = (0..n_det)
        .map(|_| {
            let (image_id, bbox, category) = if !gts.is_empty() && rng.random_bool(0.7) {
                let g = &gts[rng.random_range(0..gts.len())];
                let j = |rng: &mut R| rng.random_range(-6.0..6.0);
                let (x1, y1) = (g.bbox.x1() + j(rng), g.bbox.y1() + j(rng));
                let (x2, y2) = (g.bbox.x2() + j(rng), g.bbox.y2() + j(rng));
                let b = BBox::new(x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2)).unwrap();
                let cat = if rng.random_bool(0.85) { g.category.clone() } else { cats[rng.random_range(0..2)].into() };
                (g.image_id.clone(), b, cat)
            } else {
                (images[rng.random_range(0..n_img)].into(), rand_box(rng), cats[rng.random_range(0..2)].into())
            };
            Detection {
                image_id,
                bbox,
                score: rng.random_range(0.0..1.0),
                category,
            }
        })
        .collect();
    (dets, gts)
}

// ---------------------------------------------------------------- pooling

fn loss(fm: &FeatureMap, roi: &BBox, crop: usize, upstream: &PooledFeature) -> f64 {
    crop_and_resize(fm, roi, crop)
        .unwrap()
        .data
        .iter()
        .zip(&upstream.data)
        .map(|(a, b)| a * b)
        .sum()
}

/// Central-difference gradient of `sum(upstream * crop_and_resize(fm))`.
pub fn numeric_crop_gradient(fm: &FeatureMap, roi: &BBox, crop: usize, upstream: &PooledFeature, eps: f64) -> Vec<f64> {
    let (c, h, w) = fm.shape();
    let base = fm.data().to_vec();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            plus[i] += eps;
            let mut minus = base.clone();
            minus[i] -= eps;
            let fp = FeatureMap::new(c, h, w, plus).unwrap();
            let fm_ = FeatureMap::new(c, h, w, minus).unwrap();
            (loss(&fp, roi, crop, upstream) - loss(&fm_, roi, crop, upstream)) / (2.0 * eps)
        })
        .collect()
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Random feature map (at most 4x8x8), RoI, crop size and upstream gradient.
pub fn random_pool_case<R: Rng>(rng: &mut R) -> (FeatureMap, BBox, usize, PooledFeature) {
    let c = rng.random_range(1..=4);
    let h = rng.random_range(2..=8);
    let w = rng.random_range(2..=8);
    let data = (0..c * h * w).map(|_| rng.random_range(-3.0..3.0)).collect();
    let fm = FeatureMap::new(c, h, w, data).unwrap();
    let x1 = rng.random_range(-0.5..w as f64 - 1.0);
    let y1 = rng.random_range(-0.5..h as f64 - 1.0);
    let roi = BBox::new(
        x1,
        y1,
        rng.random_range(x1..w as f64 - 0.5),
        rng.random_range(y1..h as f64 - 0.5),
    )
    .unwrap();
    let crop = rng.random_range(1..=14);
    let up = (0..c * crop * crop).map(|_| rng.random_range(-1.0..1.0)).collect();
    (fm, roi, crop, PooledFeature::new(c, crop, up).unwrap())
}
