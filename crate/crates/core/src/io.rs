//! File formats.
//!
//! * Boxes: line-delimited JSON records with fields in the fixed order
//!   `image_id, x1, y1, x2, y2, score, category, difficult`. Proposals omit
//!   `category` and `difficult`; ground truth omits `score`.
//! * Feature maps: a text header line `C H W` followed by `C*H*W`
//!   little-endian f32 values, channel-major.
//! * Pooled features: header `N C S S` followed by `N*C*S*S` little-endian f32.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Detection, GroundTruthBox};
use crate::geometry::BBox;
use crate::pooling::{FeatureMap, PooledFeature};
use crate::sampling::ScoredProposal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub image_id: String,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficult: Option<u8>,
}

impl Record {
    pub fn bbox(&self) -> Result<BBox> {
        BBox::new(self.x1, self.y1, self.x2, self.y2)
    }

    pub fn proposal(image_id: &str, p: &ScoredProposal) -> Self {
        Self::with_box(image_id, &p.bbox, Some(p.score), None, None)
    }

    pub fn detection(d: &Detection) -> Self {
        Self::with_box(&d.image_id, &d.bbox, Some(d.score), Some(d.category.clone()), None)
    }

    pub fn ground_truth(g: &GroundTruthBox) -> Self {
        Self::with_box(&g.image_id, &g.bbox, None, Some(g.category.clone()), Some(u8::from(g.difficult)))
    }

    fn with_box(image_id: &str, b: &BBox, score: Option<f64>, category: Option<String>, difficult: Option<u8>) -> Self {
        Self {
            image_id: image_id.to_string(),
            x1: b.x1(),
            y1: b.y1(),
            x2: b.x2(),
            y2: b.y2(),
            score,
            category,
            difficult,
        }
    }
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut writer: W, records: &[Record]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn at(i: usize, e: Error) -> Error {
    Error::Parse {
        line: i + 1,
        msg: e.to_string(),
    }
}

/// Proposals grouped by image in order of first appearance. `source_index`
/// is the record's position in the input.
pub fn proposals_by_image(records: &[Record]) -> Result<Vec<(String, Vec<ScoredProposal>)>> {
    let mut groups: Vec<(String, Vec<ScoredProposal>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let score = r.score.ok_or_else(|| at(i, Error::input("proposal record needs a score")))?;
        let p = ScoredProposal::new(r.bbox().map_err(|e| at(i, e))?, score, i).map_err(|e| at(i, e))?;
        match groups.iter_mut().find(|g| g.0 == r.image_id) {
            Some(g) => g.1.push(p),
            None => groups.push((r.image_id.clone(), vec![p])),
        }
    }
    Ok(groups)
}

pub fn detections_from(records: &[Record]) -> Result<Vec<Detection>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let score = r.score.filter(|s| s.is_finite());
            let (Some(score), Some(category)) = (score, r.category.clone()) else {
                return Err(at(i, Error::input("detection record needs a finite score and a category")));
            };
            Ok(Detection {
                image_id: r.image_id.clone(),
                bbox: r.bbox().map_err(|e| at(i, e))?,
                score,
                category,
            })
        })
        .collect()
}

pub fn ground_truth_from(records: &[Record]) -> Result<Vec<GroundTruthBox>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let category = r
                .category
                .clone()
                .ok_or_else(|| at(i, Error::input("ground truth record needs a category")))?;
            let difficult = match r.difficult.unwrap_or(0) {
                0 => false,
                1 => true,
                v => return Err(at(i, Error::input(format!("difficult must be 0 or 1, got {v}")))),
            };
            Ok(GroundTruthBox {
                image_id: r.image_id.clone(),
                bbox: r.bbox().map_err(|e| at(i, e))?,
                category,
                difficult,
            })
        })
        .collect()
}

fn read_header<R: BufRead>(reader: &mut R, fields: usize) -> Result<Vec<usize>> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let dims: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::input(format!("bad header '{}'", line.trim()))))
        .collect::<Result<_>>()?;
    if dims.len() != fields {
        return Err(Error::input(format!("header '{}' needs {fields} integers", line.trim())));
    }
    Ok(dims)
}

fn read_f32s<R: Read>(reader: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    if buf.len() != 4 * n {
        return Err(Error::input(format!("payload has {} bytes, expected {}", buf.len(), 4 * n)));
    }
    Ok(buf
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

fn write_f32s<W: Write>(writer: &mut W, data: &[f64]) -> Result<()> {
    for v in data {
        writer.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_feature_map<R: BufRead>(mut reader: R) -> Result<FeatureMap> {
    let d = read_header(&mut reader, 3)?;
    let data = read_f32s(&mut reader, d[0] * d[1] * d[2])?;
    FeatureMap::new(d[0], d[1], d[2], data)
}

pub fn write_feature_map<W: Write>(mut writer: W, fm: &FeatureMap) -> Result<()> {
    let (c, h, w) = fm.shape();
    writeln!(writer, "{c} {h} {w}")?;
    write_f32s(&mut writer, fm.data())
}

pub fn write_pooled<W: Write>(mut writer: W, pooled: &[PooledFeature]) -> Result<()> {
    let (c, s) = pooled.first().map_or((0, 0), |p| (p.channels, p.size));
    if pooled.iter().any(|p| p.channels != c || p.size != s) {
        return Err(Error::input("pooled features have mixed shapes"));
    }
    writeln!(writer, "{} {c} {s} {s}", pooled.len())?;
    for p in pooled {
        write_f32s(&mut writer, &p.data)?;
    }
    Ok(())
}

pub fn read_pooled<R: BufRead>(mut reader: R) -> Result<Vec<PooledFeature>> {
    let d = read_header(&mut reader, 4)?;
    if d[2] != d[3] {
        return Err(Error::input("pooled grids must be square"));
    }
    let per = d[1] * d[2] * d[3];
    let data = read_f32s(&mut reader, d[0] * per)?;
    data.chunks(per.max(1))
        .take(d[0])
        .map(|c| PooledFeature::new(d[1], d[2], c.to_vec()))
        .collect()
}
