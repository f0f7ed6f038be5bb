//! RoI feature extraction.
//!
//! `crop_and_resize` works in cell-center coordinates: the value of cell
//! `(y, x)` sits at the point `(x, y)`, so a RoI `[x0, y0, x0 + S - 1, y0 + S - 1]`
//! with integer corners samples an `S x S` block of cells exactly.
//! `roi_pool` works in cell-edge coordinates: cell `(y, x)` covers
//! `[x, x + 1) x [y, y + 1)`, so `[0, 0, W, H]` is the whole map.

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    /// `data` is channel-major: index `(c * height + y) * width + x`.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::input("feature map dimensions must be positive"));
        }
        if data.len() != channels * height * width {
            return Err(Error::input(format!(
                "feature map data has {} values, expected {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("feature map contains non-finite values"));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Square per-channel grids, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeature {
    pub channels: usize,
    pub size: usize,
    pub data: Vec<f64>,
}

impl PooledFeature {
    pub fn new(channels: usize, size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * size * size {
            return Err(Error::input("pooled feature data length does not match shape"));
        }
        Ok(Self {
            channels,
            size,
            data,
        })
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.size + y) * self.size + x]
    }
}

/// Two-tap linear interpolation along one axis, edge-clamped.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

impl Tap {
    fn at(pos: f64, len: usize) -> Self {
        let p = pos.clamp(0.0, (len - 1) as f64);
        let lo = p.floor() as usize;
        Tap {
            lo,
            hi: (lo + 1).min(len - 1),
            frac: p - lo as f64,
        }
    }
}

/// Exact whenever `a == b`, unlike `a * (1 - t) + b * t`.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn sample_positions(start: f64, end: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (end - start) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| {
        if n == 1 {
            0.5 * (start + end)
        } else {
            start + i as f64 * step
        }
    })
}

fn taps(roi: &BBox, crop_size: usize, height: usize, width: usize) -> Result<(Vec<Tap>, Vec<Tap>)> {
    if crop_size == 0 {
        return Err(Error::input("crop size must be at least 1"));
    }
    let ys = sample_positions(roi.y1(), roi.y2(), crop_size).map(|y| Tap::at(y, height)).collect();
    let xs = sample_positions(roi.x1(), roi.x2(), crop_size).map(|x| Tap::at(x, width)).collect();
    Ok((ys, xs))
}

/// Bilinear crop of `roi` onto a `crop_size x crop_size` grid whose corner
/// samples land on the RoI corners. `crop_size == 1` samples the RoI center.
pub fn crop_and_resize(fm: &FeatureMap, roi: &BBox, crop_size: usize) -> Result<PooledFeature> {
    let (ty, tx) = taps(roi, crop_size, fm.height, fm.width)?;
    let w = fm.width;
    let mut out = Vec::with_capacity(fm.channels * crop_size * crop_size);
    for c in 0..fm.channels {
        let plane = fm.plane(c);
        for y in &ty {
            let (r0, r1) = (&plane[y.lo * w..(y.lo + 1) * w], &plane[y.hi * w..(y.hi + 1) * w]);
            for x in &tx {
                let top = lerp(r0[x.lo], r0[x.hi], x.frac);
                let bottom = lerp(r1[x.lo], r1[x.hi], x.frac);
                out.push(lerp(top, bottom, y.frac));
            }
        }
    }
    PooledFeature::new(fm.channels, crop_size, out)
}

/// Gradient of `crop_and_resize` with respect to the feature map values.
pub fn crop_and_resize_backward(
    fm_shape: (usize, usize, usize),
    roi: &BBox,
    crop_size: usize,
    upstream: &PooledFeature,
) -> Result<FeatureMap> {
    let (channels, height, width) = fm_shape;
    if upstream.channels != channels || upstream.size != crop_size {
        return Err(Error::input(format!(
            "upstream gradient is {}x{}x{}, forward produced {}x{}x{}",
            upstream.channels, upstream.size, upstream.size, channels, crop_size, crop_size
        )));
    }
    let mut grad = FeatureMap::zeros(channels, height, width)?;
    let (ty, tx) = taps(roi, crop_size, height, width)?;
    let plane_len = height * width;
    for c in 0..channels {
        let g = &mut grad.data[c * plane_len..(c + 1) * plane_len];
        for (i, y) in ty.iter().enumerate() {
            for (j, x) in tx.iter().enumerate() {
                let up = upstream.get(c, i, j);
                if up == 0.0 {
                    continue;
                }
                let (wy0, wy1) = (1.0 - y.frac, y.frac);
                let (wx0, wx1) = (1.0 - x.frac, x.frac);
                g[y.lo * width + x.lo] += up * wy0 * wx0;
                g[y.lo * width + x.hi] += up * wy0 * wx1;
                g[y.hi * width + x.lo] += up * wy1 * wx0;
                g[y.hi * width + x.hi] += up * wy1 * wx1;
            }
        }
    }
    Ok(grad)
}

/// Classic quantized RoI max pooling. Empty bins produce 0.
pub fn roi_pool(fm: &FeatureMap, roi: &BBox, out_size: usize) -> Result<PooledFeature> {
    if out_size == 0 {
        return Err(Error::input("output size must be at least 1"));
    }
    let quantize = |lo: f64, hi: f64, len: usize| {
        let start = (lo.floor().max(0.0) as usize).min(len);
        let end = (hi.ceil().max(0.0) as usize).min(len).max(start);
        (start, end - start)
    };
    let (x0, xlen) = quantize(roi.x1(), roi.x2(), fm.width);
    let (y0, ylen) = quantize(roi.y1(), roi.y2(), fm.height);
    let bin = |start: usize, len: usize, i: usize| (start + i * len / out_size, start + (i + 1) * len / out_size);

    let mut out = Vec::with_capacity(fm.channels * out_size * out_size);
    for c in 0..fm.channels {
        for by in 0..out_size {
            let (ys, ye) = bin(y0, ylen, by);
            for bx in 0..out_size {
                let (xs, xe) = bin(x0, xlen, bx);
                let mut best: Option<f64> = None;
                for y in ys..ye {
                    for x in xs..xe {
                        let v = fm.get(c, y, x);
                        best = Some(best.map_or(v, |b| b.max(v)));
                    }
                }
                out.push(best.unwrap_or(0.0));
            }
        }
    }
    PooledFeature::new(fm.channels, out_size, out)
}

/// 2x2 max pooling with stride 2.
pub fn max_pool_2x2(p: &PooledFeature) -> Result<PooledFeature> {
    if p.size % 2 != 0 {
        return Err(Error::input(format!("max_pool_2x2 needs an even grid, got {}", p.size)));
    }
    let half = p.size / 2;
    let mut out = Vec::with_capacity(p.channels * half * half);
    for c in 0..p.channels {
        for y in 0..half {
            for x in 0..half {
                let m = p
                    .get(c, 2 * y, 2 * x)
                    .max(p.get(c, 2 * y, 2 * x + 1))
                    .max(p.get(c, 2 * y + 1, 2 * x))
                    .max(p.get(c, 2 * y + 1, 2 * x + 1));
                out.push(m);
            }
        }
    }
    PooledFeature::new(p.channels, half, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn ramp(c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::new(c, h, w, (0..c * h * w).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn constant_map() {
        let fm = FeatureMap::new(2, 5, 6, vec![3.25; 60]).unwrap();
        for roi in [bx(0.3, 0.7, 4.2, 3.9), bx(-2.0, -2.0, 9.0, 9.0), bx(1.0, 1.0, 1.0, 1.0)] {
            let out = crop_and_resize(&fm, &roi, 14).unwrap();
            assert!(out.data.iter().all(|v| *v == 3.25));
        }
        let rp = roi_pool(&fm, &bx(0.0, 0.0, 6.0, 5.0), 3).unwrap();
        assert!(rp.data.iter().all(|v| *v == 3.25));
    }

    #[test]
    fn aligned_subgrid_exact() {
        let fm = ramp(3, 20, 20);
        let out = crop_and_resize(&fm, &bx(2.0, 3.0, 15.0, 16.0), 14).unwrap();
        for c in 0..3 {
            for y in 0..14 {
                for x in 0..14 {
                    assert_eq!(out.get(c, y, x), fm.get(c, y + 3, x + 2));
                }
            }
        }
    }

    #[test]
    fn crop_then_pool_gives_7x7() {
        let fm = ramp(4, 30, 30);
        let crop = crop_and_resize(&fm, &bx(1.5, 2.5, 20.0, 25.0), 14).unwrap();
        assert_eq!(crop.size, 14);
        let pooled = max_pool_2x2(&crop).unwrap();
        assert_eq!((pooled.channels, pooled.size), (4, 7));
    }

    #[test]
    fn crop_size_one_samples_center() {
        let fm = ramp(1, 4, 4);
        let out = crop_and_resize(&fm, &bx(1.0, 1.0, 3.0, 3.0), 1).unwrap();
        assert_eq!(out.data, vec![fm.get(0, 2, 2)]);
        assert!(crop_and_resize(&fm, &bx(1.0, 1.0, 3.0, 3.0), 0).is_err());
    }

    #[test]
    fn collapsed_roi_samples_a_point() {
        let fm = ramp(1, 4, 4);
        let out = crop_and_resize(&fm, &bx(1.5, 2.0, 1.5, 2.0), 3).unwrap();
        let expect = 0.5 * (fm.get(0, 2, 1) + fm.get(0, 2, 2));
        assert!(out.data.iter().all(|v| *v == expect));
    }

    #[test]
    fn backward_zero_upstream() {
        let up = PooledFeature::new(2, 5, vec![0.0; 50]).unwrap();
        let g = crop_and_resize_backward((2, 6, 6), &bx(0.5, 0.5, 4.5, 4.0), 5, &up).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_single_tap_partition_of_unity() {
        let mut data = vec![0.0; 2 * 4 * 4];
        data[16 + 5] = 1.0; // channel 1, (y=1, x=1)
        let up = PooledFeature::new(2, 4, data).unwrap();
        let g = crop_and_resize_backward((2, 8, 8), &bx(0.3, 1.1, 6.2, 5.7), 4, &up).unwrap();
        let ch0: Vec<f64> = g.data()[..64].to_vec();
        let ch1: Vec<f64> = g.data()[64..].to_vec();
        assert!(ch0.iter().all(|v| *v == 0.0));
        assert!(ch1.iter().filter(|v| **v != 0.0).count() <= 4);
        assert!((ch1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ch1.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn backward_shape_mismatch() {
        let up = PooledFeature::new(2, 5, vec![0.0; 50]).unwrap();
        assert!(crop_and_resize_backward((3, 6, 6), &bx(0.0, 0.0, 4.0, 4.0), 5, &up).is_err());
        assert!(crop_and_resize_backward((2, 6, 6), &bx(0.0, 0.0, 4.0, 4.0), 7, &up).is_err());
    }

    #[test]
    fn roi_pool_examples() {
        let fm = FeatureMap::new(1, 3, 3, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(roi_pool(&fm, &bx(0.0, 0.0, 3.0, 3.0), 1).unwrap().data, vec![9.0]);
        assert_eq!(
            roi_pool(&fm, &bx(0.0, 0.0, 3.0, 3.0), 3).unwrap().data,
            (1..=9).map(f64::from).collect::<Vec<_>>()
        );
        let big = ramp(1, 10, 10);
        let sub = roi_pool(&big, &bx(2.0, 3.0, 4.0, 5.0), 2).unwrap();
        assert_eq!(sub.data, vec![32.0, 33.0, 42.0, 43.0]);
        // sub-cell RoI quantizes outward
        assert_eq!(roi_pool(&fm, &bx(0.2, 0.2, 0.8, 0.8), 1).unwrap().data, vec![1.0]);
        // fewer cells than bins leaves empty bins at 0
        let sparse = roi_pool(&fm, &bx(0.0, 0.0, 1.0, 1.0), 2).unwrap();
        assert_eq!(sparse.data, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn max_pool_examples() {
        let p = PooledFeature::new(1, 14, vec![2.0; 196]).unwrap();
        let q = max_pool_2x2(&p).unwrap();
        assert_eq!(q.size, 7);
        assert!(q.data.iter().all(|v| *v == 2.0));

        let mut data = vec![0.0; 16];
        data[2 * 4 + 3] = 5.0;
        let q = max_pool_2x2(&PooledFeature::new(1, 4, data).unwrap()).unwrap();
        assert_eq!(q.data, vec![0.0, 0.0, 0.0, 5.0]);
        assert!(max_pool_2x2(&PooledFeature::new(1, 3, vec![0.0; 9]).unwrap()).is_err());
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, [f64; 4])> {
        (
            prop::collection::vec(-5.0..5.0f64, 2 * 6 * 7),
            prop::collection::vec(-5.0..5.0f64, 2 * 6 * 7),
            (-1.0..7.0f64, -1.0..6.0f64, 0.0..5.0f64, 0.0..5.0f64),
        )
            .prop_map(|(a, b, (x, y, w, h))| (a, b, [x, y, x + w, y + h]))
    }

    proptest! {
        #[test]
        fn crop_is_linear((a, b, r) in arb_case(), alpha in -2.0..2.0f64, beta in -2.0..2.0f64) {
            let roi = BBox::try_from(r).unwrap();
            let fa = FeatureMap::new(2, 6, 7, a.clone()).unwrap();
            let fb = FeatureMap::new(2, 6, 7, b.clone()).unwrap();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let fm = FeatureMap::new(2, 6, 7, mix).unwrap();
            let out = crop_and_resize(&fm, &roi, 5).unwrap();
            let oa = crop_and_resize(&fa, &roi, 5).unwrap();
            let ob = crop_and_resize(&fb, &roi, 5).unwrap();
            for i in 0..out.data.len() {
                prop_assert!((out.data[i] - (alpha * oa.data[i] + beta * ob.data[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn crop_output_within_input_range((a, _b, r) in arb_case()) {
            let roi = BBox::try_from(r).unwrap();
            let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let fm = FeatureMap::new(2, 6, 7, a).unwrap();
            for v in crop_and_resize(&fm, &roi, 6).unwrap().data {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }

        #[test]
        fn roi_pool_values_from_input((a, _b, r) in arb_case(), size in 1usize..5) {
            let roi = BBox::try_from(r).unwrap();
            let fm = FeatureMap::new(2, 6, 7, a.clone()).unwrap();
            for v in roi_pool(&fm, &roi, size).unwrap().data {
                prop_assert!(v == 0.0 || a.contains(&v));
            }
        }
    }
}
