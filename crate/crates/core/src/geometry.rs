//! Axis-aligned boxes in continuous image coordinates.
//!
//! Area is `(x2 - x1) * (y2 - y1)` with no "+1" pixel correction, so a box
//! produced by clipping may legitimately have zero area.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox {
            x1,
            y1,
            x2,
            y2,
            reason,
        };
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x2 < x1 || y2 < y1 {
            return Err(invalid("negative extent"));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box from center and size.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }

    /// Bitwise coordinate equality (distinguishes `0.0` from `-0.0`).
    pub fn bit_eq(&self, other: &BBox) -> bool {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Regression offsets of a target box relative to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDelta {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

impl BoxDelta {
    pub const ZERO: BoxDelta = BoxDelta {
        dx: 0.0,
        dy: 0.0,
        dw: 0.0,
        dh: 0.0,
    };
}

/// Intersection over union. Two zero-area boxes have IoU 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

fn check_anchor(anchor: &BBox) -> Result<()> {
    if anchor.width() > 0.0 && anchor.height() > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateBox("anchor must have positive width and height"))
    }
}

pub fn encode_delta(anchor: &BBox, target: &BBox) -> Result<BoxDelta> {
    check_anchor(anchor)?;
    if target.width() <= 0.0 || target.height() <= 0.0 {
        return Err(Error::DegenerateBox("encode target has zero width or height"));
    }
    let (acx, acy) = anchor.center();
    let (tcx, tcy) = target.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    Ok(BoxDelta {
        dx: (tcx - acx) / aw,
        dy: (tcy - acy) / ah,
        dw: (target.width() / aw).ln(),
        dh: (target.height() / ah).ln(),
    })
}

pub fn decode_delta(anchor: &BBox, delta: &BoxDelta) -> Result<BBox> {
    check_anchor(anchor)?;
    let d = delta;
    if !(d.dx.is_finite() && d.dy.is_finite() && d.dw.is_finite() && d.dh.is_finite()) {
        return Err(Error::NumericRange("non-finite delta"));
    }
    let (acx, acy) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let w = aw * d.dw.exp();
    let h = ah * d.dh.exp();
    let cx = acx + d.dx * aw;
    let cy = acy + d.dy * ah;
    if !(w.is_finite() && h.is_finite() && cx.is_finite() && cy.is_finite()) {
        return Err(Error::NumericRange("decoded box exceeds f64 range"));
    }
    BBox::from_center(cx, cy, w, h).map_err(|_| Error::NumericRange("decoded box exceeds f64 range"))
}

/// Clamp to `[0, width] x [0, height]`.
pub fn clip_to_image(b: &BBox, width: f64, height: f64) -> BBox {
    let cx = |v: f64| v.clamp(0.0, width);
    let cy = |v: f64| v.clamp(0.0, height);
    BBox {
        x1: cx(b.x1),
        y1: cy(b.y1),
        x2: cx(b.x2),
        y2: cy(b.y2),
    }
}

pub fn is_small(b: &BBox, min_size: f64) -> bool {
    b.width() < min_size || b.height() < min_size
}
