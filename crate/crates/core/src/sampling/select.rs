use std::fmt::Write as _;

use rand::Rng;

use super::{greedy_nms, ranked, SamplingConfig, Scheme, ScoredProposal};
use crate::anchors::{scale_bucket_of, AnchorSpec};
use crate::error::{Error, Result};
use crate::geometry::is_small;

fn drop_small(proposals: &[ScoredProposal], min_size: f64) -> Vec<ScoredProposal> {
    if min_size > 0.0 {
        proposals
            .iter()
            .filter(|p| !is_small(&p.bbox, min_size))
            .copied()
            .collect()
    } else {
        proposals.to_vec()
    }
}

fn top(proposals: &[ScoredProposal], n: usize) -> Vec<ScoredProposal> {
    let mut v = ranked(proposals);
    v.truncate(n);
    v
}

/// TOP: the first `k` proposals in rank order.
pub fn select_top(proposals: &[ScoredProposal], k: usize) -> Vec<ScoredProposal> {
    top(proposals, k)
}

/// NMS: top `K` by score, greedy NMS, then top `k` of the survivors.
pub fn select_nms(proposals: &[ScoredProposal], cfg: &SamplingConfig) -> Vec<ScoredProposal> {
    let candidates = top(&drop_small(proposals, cfg.min_size), cfg.pre_top_k);
    let mut kept = greedy_nms(&candidates, cfg.nms_threshold);
    kept.truncate(cfg.post_top_k);
    kept
}

/// ALL: top `k` by score with no de-duplication.
pub fn select_all(proposals: &[ScoredProposal], cfg: &SamplingConfig) -> Vec<ScoredProposal> {
    top(&drop_small(proposals, cfg.min_size), cfg.post_top_k)
}

pub(crate) fn check_ratio(ratio: &[f64]) -> Result<()> {
    if ratio.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::config("ratio entries must be finite and nonnegative"));
    }
    if !ratio.iter().any(|r| *r > 0.0) {
        return Err(Error::config("ratio table needs at least one positive entry"));
    }
    Ok(())
}

/// Per-bucket keep probability `ratio[i] / max(ratio)`.
pub fn keep_probabilities(ratio: &[f64]) -> Result<Vec<f64>> {
    check_ratio(ratio)?;
    let max = ratio.iter().copied().fold(0.0, f64::max);
    Ok(ratio.iter().map(|r| r / max).collect())
}

/// Fit a target scale distribution by thinning.
///
/// Takes the top `k` by score, keeps every region of the bucket(s) with the
/// largest ratio and keeps each other region independently with probability
/// `ratio[i] / max(ratio)`. One uniform draw is consumed per region whose keep
/// probability is strictly between 0 and 1, in rank order.
pub fn select_by_ratio<R: Rng + ?Sized>(
    proposals: &[ScoredProposal],
    target_ratio: &[f64],
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Vec<ScoredProposal>> {
    if target_ratio.len() != cfg.anchors.num_buckets() {
        return Err(Error::config(format!(
            "ratio has {} entries for {} scales",
            target_ratio.len(),
            cfg.anchors.num_buckets()
        )));
    }
    let keep_p = keep_probabilities(target_ratio)?;
    let candidates = top(&drop_small(proposals, cfg.min_size), cfg.post_top_k);
    let mut out = Vec::with_capacity(candidates.len());
    for p in candidates {
        let prob = keep_p[scale_bucket_of(&p.bbox, &cfg.anchors)?.index];
        let keep = if prob >= 1.0 {
            true
        } else if prob <= 0.0 {
            false
        } else {
            rng.random::<f64>() < prob
        };
        if keep {
            out.push(p);
        }
    }
    Ok(out)
}

/// Power-law target distribution `r(s) = s^-gamma` over the anchor scales.
pub fn pow_ratio(spec: &AnchorSpec, gamma: f64) -> Vec<f64> {
    spec.scales().iter().map(|s| s.powf(-gamma)).collect()
}

/// Normalized histogram of scale buckets among `selected`.
pub fn measure_scale_ratio(selected: &[ScoredProposal], spec: &AnchorSpec) -> Result<Vec<f64>> {
    if selected.is_empty() {
        return Err(Error::EmptyInput("no regions to measure"));
    }
    let mut counts = vec![0usize; spec.num_buckets()];
    for p in selected {
        counts[scale_bucket_of(&p.bbox, spec)?.index] += 1;
    }
    let n = selected.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Dispatch on `cfg.scheme`.
pub fn select<R: Rng + ?Sized>(
    proposals: &[ScoredProposal],
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Vec<ScoredProposal>> {
    match cfg.scheme {
        Scheme::Nms => Ok(select_nms(proposals, cfg)),
        Scheme::All => Ok(select_all(proposals, cfg)),
        Scheme::Pre => select_by_ratio(proposals, &cfg.ratio_table, cfg, rng),
        Scheme::Pow => select_by_ratio(proposals, &pow_ratio(&cfg.anchors, cfg.gamma), cfg, rng),
        Scheme::Top => Ok(select_top(&drop_small(proposals, cfg.min_size), cfg.pre_top_k)),
    }
}

/// Per-scale ratio table, serialized as one `scale value` line per bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTable {
    pub scales: Vec<f64>,
    pub values: Vec<f64>,
}

impl RatioTable {
    pub fn new(spec: &AnchorSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.num_buckets() {
            return Err(Error::input("ratio table length does not match scales"));
        }
        Ok(Self {
            scales: spec.scales().to_vec(),
            values,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (scale, v) in self.scales.iter().zip(&self.values) {
            writeln!(s, "{scale} {v}").expect("write to string");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut scales = Vec::new();
        let mut values = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse {
                line: n + 1,
                msg: format!("{msg}: '{line}'"),
            };
            let mut parts = line.split_whitespace();
            let (Some(s), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected 'scale value'"));
            };
            let s: f64 = s.parse().map_err(|_| bad("bad scale"))?;
            let v: f64 = v.parse().map_err(|_| bad("bad value"))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad("value must be a nonnegative real"));
            }
            scales.push(s);
            values.push(v);
        }
        if scales.is_empty() {
            return Err(Error::EmptyInput("ratio table has no entries"));
        }
        Ok(Self { scales, values })
    }

    /// Values reordered to match `spec`, which must have the same scale set.
    pub fn values_for(&self, spec: &AnchorSpec) -> Result<Vec<f64>> {
        if self.scales.len() != spec.num_buckets() {
            return Err(Error::input("ratio table scales do not match anchor scales"));
        }
        spec.scales()
            .iter()
            .map(|s| {
                self.scales
                    .iter()
                    .position(|t| t == s)
                    .map(|i| self.values[i])
                    .ok_or_else(|| Error::input(format!("ratio table has no entry for scale {s}")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::rng::stream_rng;

    fn square(cx: f64, side: f64, score: f64, idx: usize) -> ScoredProposal {
        ScoredProposal::new(BBox::from_center(cx, cx, side, side).unwrap(), score, idx).unwrap()
    }

    #[test]
    fn keep_probabilities_worked_example() {
        assert_eq!(keep_probabilities(&[0.4, 0.2, 0.2]).unwrap(), vec![1.0, 0.5, 0.5]);
        assert_eq!(keep_probabilities(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(keep_probabilities(&[0.0, 0.0, 0.0]).is_err());
        assert!(keep_probabilities(&[0.1, -0.1, 0.0]).is_err());
    }

    #[test]
    fn pow_ratio_examples() {
        let spec = AnchorSpec::default();
        assert_eq!(pow_ratio(&spec, 1.0), vec![0.125, 0.0625, 0.03125]);
        assert_eq!(keep_probabilities(&pow_ratio(&spec, 1.0)).unwrap(), vec![1.0, 0.5, 0.25]);
        assert_eq!(pow_ratio(&spec, 0.0), vec![1.0, 1.0, 1.0]);
        assert_eq!(keep_probabilities(&pow_ratio(&spec, 2.0)).unwrap(), vec![1.0, 0.25, 0.0625]);
    }

    #[test]
    fn measure_examples() {
        let spec = AnchorSpec::default();
        let mut v = Vec::new();
        for i in 0..4 {
            v.push(square(300.0, 128.0, 0.5, i));
        }
        assert_eq!(measure_scale_ratio(&v, &spec).unwrap(), vec![1.0, 0.0, 0.0]);
        v.push(square(300.0, 256.0, 0.5, 4));
        v.push(square(300.0, 256.0, 0.5, 5));
        v.push(square(300.0, 512.0, 0.5, 6));
        v.push(square(300.0, 512.0, 0.5, 7));
        assert_eq!(measure_scale_ratio(&v, &spec).unwrap(), vec![0.5, 0.25, 0.25]);
        assert!(matches!(measure_scale_ratio(&[], &spec), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn top_and_all_undersized() {
        let v: Vec<_> = (0..3).map(|i| square(100.0 * i as f64, 50.0, i as f64, i)).collect();
        let idx: Vec<_> = select_top(&v, 5000).iter().map(|p| p.source_index).collect();
        assert_eq!(idx, vec![2, 1, 0]);
        let cfg = SamplingConfig::train(Scheme::All);
        assert_eq!(select_all(&v, &cfg).len(), 3);
    }

    #[test]
    fn nms_no_overlap_is_sorted_truncation() {
        let v: Vec<_> = (0..10).map(|i| square(100.0 * i as f64, 50.0, (i * 7 % 10) as f64, i)).collect();
        let mut cfg = SamplingConfig::train(Scheme::Nms);
        cfg.post_top_k = 4;
        let out = select_nms(&v, &cfg);
        assert_eq!(out, select_top(&v, 4));
    }

    #[test]
    fn min_size_filter() {
        let v = vec![square(50.0, 10.0, 0.9, 0), square(200.0, 100.0, 0.1, 1)];
        let mut cfg = SamplingConfig::train(Scheme::Nms);
        assert_eq!(select_nms(&v, &cfg).len(), 2);
        cfg.min_size = 16.0;
        let out = select_nms(&v, &cfg);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].source_index, 1);
    }

    #[test]
    fn ratio_select_keeps_argmax_bucket() {
        let mut v = Vec::new();
        for i in 0..300 {
            let side = [128.0, 256.0, 512.0][i % 3];
            v.push(square(1000.0, side, 1.0 - i as f64 * 1e-3, i));
        }
        let cfg = SamplingConfig::train(Scheme::Pre);
        let mut rng = stream_rng(1, 0);
        let out = select_by_ratio(&v, &[0.2, 0.4, 0.0], &cfg, &mut rng).unwrap();
        let spec = &cfg.anchors;
        let count = |b| out.iter().filter(|p| scale_bucket_of(&p.bbox, spec).unwrap().index == b).count();
        assert_eq!(count(1), 100);
        assert_eq!(count(2), 0);
        assert!(count(0) > 20 && count(0) < 80);
        assert!(select_by_ratio(&v, &[0.0; 3], &cfg, &mut rng).is_err());
        assert!(select_by_ratio(&v, &[1.0; 2], &cfg, &mut rng).is_err());
    }

    #[test]
    fn ratio_table_text() {
        let spec = AnchorSpec::default();
        let t = RatioTable::new(&spec, vec![0.4, 0.2, 0.2]).unwrap();
        assert_eq!(t.to_text(), "8 0.4\n16 0.2\n32 0.2\n");
        let back = RatioTable::parse(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.values_for(&spec).unwrap(), vec![0.4, 0.2, 0.2]);
        let shuffled = RatioTable::parse("32 0.1\n8 0.7\n16 0.2\n").unwrap();
        assert_eq!(shuffled.values_for(&spec).unwrap(), vec![0.7, 0.2, 0.1]);
        assert!(RatioTable::parse("8 -1\n").is_err());
        assert!(RatioTable::parse("8\n").is_err());
        assert!(RatioTable::parse("").is_err());
        assert!(RatioTable::parse("4 1\n16 1\n32 1\n").unwrap().values_for(&spec).is_err());
    }
}
