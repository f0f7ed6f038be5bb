use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Column names of the summary, in reporting order.
pub const SUMMARY_COLUMNS: [&str; 12] = [
    "AP", "AP-.5", "AP-.75", "AP-S", "AP-M", "AP-L", "AR-1", "AR-10", "AR-100", "AR-S", "AR-M", "AR-L",
];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SummaryMetrics {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub ar1: Option<f64>,
    pub ar10: Option<f64>,
    pub ar100: Option<f64>,
    pub ar_small: Option<f64>,
    pub ar_medium: Option<f64>,
    pub ar_large: Option<f64>,
}

impl SummaryMetrics {
    pub fn columns(&self) -> [(&'static str, Option<f64>); 12] {
        let v = [
            self.ap,
            self.ap50,
            self.ap75,
            self.ap_small,
            self.ap_medium,
            self.ap_large,
            self.ar1,
            self.ar10,
            self.ar100,
            self.ar_small,
            self.ar_medium,
            self.ar_large,
        ];
        std::array::from_fn(|i| (SUMMARY_COLUMNS[i], v[i]))
    }
}

/// Metric values are fractions in `[0, 1]`; `None` marks absent entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub iou_thresholds: Vec<f64>,
    /// AP per IoU threshold for each category.
    pub per_category: BTreeMap<String, Vec<Option<f64>>>,
    pub map: Option<f64>,
    pub summary: Option<SummaryMetrics>,
    pub detections_evaluated: usize,
}

pub(crate) fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}", x * 100.0),
        None => "absent".to_string(),
    }
}

impl EvalReport {
    pub fn new(iou_thresholds: Vec<f64>) -> Self {
        Self {
            iou_thresholds,
            per_category: BTreeMap::new(),
            map: None,
            summary: None,
            detections_evaluated: 0,
        }
    }

    /// Mean AP over present categories at threshold index `t`.
    pub fn mean_at(&self, t: usize) -> Option<f64> {
        let present: Vec<f64> = self.per_category.values().filter_map(|v| v.get(t).copied().flatten()).collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }

    fn category_ap(v: &[Option<f64>]) -> Option<f64> {
        let present: Vec<f64> = v.iter().flatten().copied().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }

    /// `key=value` lines, percentages with one decimal.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        if let Some(summary) = &self.summary {
            for (name, v) in summary.columns() {
                writeln!(s, "{name}={}", pct(v)).unwrap();
            }
        } else {
            writeln!(s, "mAP={}", pct(self.map)).unwrap();
        }
        for (cat, v) in &self.per_category {
            writeln!(s, "AP[{cat}]={}", pct(Self::category_ap(v))).unwrap();
        }
        writeln!(s, "detections_evaluated={}", self.detections_evaluated).unwrap();
        s
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let (names, values): (Vec<String>, Vec<String>) = match &self.summary {
            Some(summary) => summary.columns().iter().map(|(n, v)| (n.to_string(), pct(*v))).unzip(),
            None => std::iter::once(("mAP".to_string(), pct(self.map)))
                .chain(self.per_category.iter().map(|(c, v)| (c.clone(), pct(Self::category_ap(v)))))
                .unzip(),
        };
        let widths: Vec<usize> = names.iter().zip(&values).map(|(n, v)| n.len().max(v.len())).collect();
        let row = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(s, "{}", row(&names)).unwrap();
        writeln!(s, "{}", row(&values)).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_match_table_header() {
        let s = SummaryMetrics::default();
        let names: Vec<_> = s.columns().iter().map(|c| c.0).collect();
        assert_eq!(
            names.join(" "),
            "AP AP-.5 AP-.75 AP-S AP-M AP-L AR-1 AR-10 AR-100 AR-S AR-M AR-L"
        );
    }

    #[test]
    fn kv_format() {
        let mut r = EvalReport::new(vec![0.5]);
        r.per_category.insert("cat".into(), vec![Some(0.70912)]);
        r.per_category.insert("dog".into(), vec![None]);
        r.map = Some(0.70912);
        assert_eq!(r.to_kv(), "mAP=70.9\nAP[cat]=70.9\nAP[dog]=absent\ndetections_evaluated=0\n");
        r.summary = Some(SummaryMetrics {
            ap: Some(0.265),
            ..Default::default()
        });
        let kv = r.to_kv();
        assert!(kv.starts_with("AP=26.5\nAP-.5=absent\n"));
        assert_eq!(kv.lines().count(), 15);
    }

    #[test]
    fn table_has_two_aligned_rows() {
        let mut r = EvalReport::new(vec![0.5]);
        r.summary = Some(SummaryMetrics::default());
        let t = r.to_table();
        let lines: Vec<_> = t.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].len(), lines[1].len());
    }
}
