//! Dense anchor lattice and scale bucketing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    scales: Vec<f64>,
    aspect_ratios: Vec<f64>,
    stride: f64,
}

impl Default for AnchorSpec {
    fn default() -> Self {
        Self {
            scales: vec![8.0, 16.0, 32.0],
            aspect_ratios: vec![0.5, 1.0, 2.0],
            stride: 16.0,
        }
    }
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(format!("{name} must be nonempty")));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::config(format!("{name} entries must be positive and finite, got {v}")));
    }
    Ok(())
}

impl AnchorSpec {
    pub fn new(scales: Vec<f64>, aspect_ratios: Vec<f64>, stride: f64) -> Result<Self> {
        check_positive("scales", &scales)?;
        check_positive("aspect_ratios", &aspect_ratios)?;
        check_positive("stride", &[stride])?;
        Ok(Self {
            scales,
            aspect_ratios,
            stride,
        })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn aspect_ratios(&self) -> &[f64] {
        &self.aspect_ratios
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn num_buckets(&self) -> usize {
        self.scales.len()
    }

    /// Side length in pixels of a square anchor at scale index `i`.
    pub fn nominal_size(&self, i: usize) -> f64 {
        self.scales[i] * self.stride
    }

    pub fn buckets(&self) -> impl Iterator<Item = ScaleBucket> + '_ {
        (0..self.scales.len()).map(|index| ScaleBucket {
            index,
            nominal_size: self.nominal_size(index),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBucket {
    pub index: usize,
    pub nominal_size: f64,
}

/// One anchor per (cell, ratio, scale), cells in row-major order, scale
/// varying fastest. Cell `(i, j)` is centered at `((i + 0.5) * stride, (j + 0.5) * stride)`.
/// Anchors are not clipped.
pub fn generate_anchors(spec: &AnchorSpec, feat_width: usize, feat_height: usize) -> Vec<BBox> {
    let per_cell: Vec<(f64, f64)> = spec
        .aspect_ratios
        .iter()
        .flat_map(|&ratio| {
            spec.scales.iter().map(move |&scale| {
                let side = scale * spec.stride;
                let r = ratio.sqrt();
                (side * r, side / r)
            })
        })
        .collect();

    let mut out = Vec::with_capacity(feat_width * feat_height * per_cell.len());
    for j in 0..feat_height {
        let cy = (j as f64 + 0.5) * spec.stride;
        for i in 0..feat_width {
            let cx = (i as f64 + 0.5) * spec.stride;
            for &(w, h) in &per_cell {
                out.push(BBox::from_center(cx, cy, w, h).expect("anchor extents are positive"));
            }
        }
    }
    out
}

/// Bucket whose nominal size is nearest to `sqrt(area)` in log2 space.
/// Ties go to the smaller nominal size.
pub fn scale_bucket_of(b: &BBox, spec: &AnchorSpec) -> Result<ScaleBucket> {
    let area = b.area();
    if area <= 0.0 {
        return Err(Error::DegenerateBox("cannot bucket a zero-area box"));
    }
    let size = area.sqrt().log2();
    const TIE_EPS: f64 = 1e-12;
    let mut best: Option<(f64, ScaleBucket)> = None;
    for bucket in spec.buckets() {
        let d = (size - bucket.nominal_size.log2()).abs();
        best = match best {
            None => Some((d, bucket)),
            Some((bd, bb)) => {
                let closer = d < bd - TIE_EPS;
                let tie_smaller = (d - bd).abs() <= TIE_EPS && bucket.nominal_size < bb.nominal_size;
                if closer || tie_smaller {
                    Some((d, bucket))
                } else {
                    Some((bd, bb))
                }
            }
        };
    }
    Ok(best.expect("spec has at least one scale").1)
}
