use super::{ranked, ScoredProposal};
use crate::geometry::iou;

/// Greedy non-maximum suppression.
///
/// Walks proposals in rank order (descending score, ascending
/// `source_index`), keeping each one that is not suppressed and suppressing
/// every later proposal whose IoU with it exceeds `threshold`.
pub fn greedy_nms(proposals: &[ScoredProposal], threshold: f64) -> Vec<ScoredProposal> {
    let order = ranked(proposals);
    let n = order.len();
    let boxes: Vec<_> = order.iter().map(|p| p.bbox).collect();
    let mut suppressed = vec![false; n];
    let mut keep = Vec::new();

    for i in 0..n {
        if suppressed[i] {
            continue;
        }
        keep.push(order[i]);
        let kept = &boxes[i];
        for (j, b) in boxes.iter().enumerate().skip(i + 1) {
            if !suppressed[j] && iou(kept, b) > threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn p(b: [f64; 4], score: f64, idx: usize) -> ScoredProposal {
        ScoredProposal::new(BBox::try_from(b).unwrap(), score, idx).unwrap()
    }

    #[test]
    fn duplicate_suppressed() {
        let v = vec![p([0., 0., 10., 10.], 0.8, 0), p([0., 0., 10., 10.], 0.9, 1)];
        let out = greedy_nms(&v, 0.7);
        assert_eq!(out, vec![v[1]]);
    }

    #[test]
    fn disjoint_all_kept_sorted() {
        let v = vec![
            p([0., 0., 10., 10.], 0.1, 0),
            p([20., 0., 30., 10.], 0.9, 1),
            p([40., 0., 50., 10.], 0.5, 2),
        ];
        let out = greedy_nms(&v, 0.7);
        let idx: Vec<_> = out.iter().map(|q| q.source_index).collect();
        assert_eq!(idx, vec![1, 2, 0]);
    }

    #[test]
    fn ties_break_by_source_index() {
        let v = vec![p([0., 0., 10., 10.], 0.5, 3), p([0., 0., 10., 10.], 0.5, 1)];
        assert_eq!(greedy_nms(&v, 0.5)[0].source_index, 1);
    }

    #[test]
    fn threshold_is_strict() {
        // IoU exactly 1/3
        let v = vec![p([0., 0., 10., 10.], 0.9, 0), p([5., 0., 15., 10.], 0.8, 1)];
        let third = iou(&v[0].bbox, &v[1].bbox);
        assert_eq!(greedy_nms(&v, third).len(), 2);
        assert_eq!(greedy_nms(&v, third - 1e-9).len(), 1);
    }

    #[test]
    fn chain_suppression_is_greedy() {
        // b overlaps a and c, a and c do not overlap: a suppresses b, c survives.
        let v = vec![
            p([0., 0., 10., 10.], 0.9, 0),
            p([2., 0., 12., 10.], 0.8, 1),
            p([4., 0., 14., 10.], 0.7, 2),
        ];
        let idx: Vec<_> = greedy_nms(&v, 0.5).iter().map(|q| q.source_index).collect();
        assert_eq!(idx, vec![0, 2]);
    }

    #[test]
    fn empty() {
        assert!(greedy_nms(&[], 0.7).is_empty());
    }
}
