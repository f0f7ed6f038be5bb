use super::MatchFlag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Area under the monotone precision envelope.
    AllPoint,
    /// Mean of the envelope at recall 0, 0.1, ..., 1 (VOC2007 devkit).
    ElevenPoint,
    /// Envelope sampled at recall 0, 0.01, ..., 1 (COCO evaluation tool).
    Coco101,
}

/// Cumulative (recall, precision) after each non-ignored detection, in
/// descending score order (stable for equal scores).
pub(crate) fn pr_curve(entries: &[(f64, MatchFlag)], num_gt: usize) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[b].0.total_cmp(&entries[a].0).then(a.cmp(&b)));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = Vec::with_capacity(entries.len());
    for i in order {
        match entries[i].1 {
            MatchFlag::TruePositive => tp += 1,
            MatchFlag::FalsePositive => fp += 1,
            MatchFlag::Ignored => continue,
        }
        curve.push((tp as f64 / num_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    curve
}

/// Running maximum of precision from the right.
pub(crate) fn envelope(curve: &[(f64, f64)]) -> Vec<f64> {
    let mut env: Vec<f64> = curve.iter().map(|c| c.1).collect();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    env
}

/// Sample the envelope at each recall threshold: precision at the first point
/// whose recall reaches the threshold, 0 if none does.
pub(crate) fn sampled(curve: &[(f64, f64)], env: &[f64], thresholds: impl Iterator<Item = f64>) -> Vec<f64> {
    thresholds
        .map(|t| {
            let idx = curve.partition_point(|c| c.0 < t);
            env.get(idx).copied().unwrap_or(0.0)
        })
        .collect()
}

/// Average precision from scored match flags. `None` when there is no
/// ground truth to recall.
pub fn average_precision(entries: &[(f64, MatchFlag)], num_gt: usize, interpolation: Interpolation) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let curve = pr_curve(entries, num_gt);
    let env = envelope(&curve);
    let ap = match interpolation {
        // recall rises by exactly 1/num_gt at each true positive
        Interpolation::AllPoint => {
            let mut prev_recall = 0.0;
            let mut sum = 0.0;
            for (c, e) in curve.iter().zip(&env) {
                if c.0 > prev_recall {
                    sum += e;
                    prev_recall = c.0;
                }
            }
            sum / num_gt as f64
        }
        Interpolation::ElevenPoint => {
            let s = sampled(&curve, &env, (0..=10).map(|i| i as f64 / 10.0));
            s.iter().sum::<f64>() / 11.0
        }
        Interpolation::Coco101 => {
            let s = sampled(&curve, &env, (0..=100).map(|i| i as f64 / 100.0));
            s.iter().sum::<f64>() / 101.0
        }
    };
    Some(ap)
}
