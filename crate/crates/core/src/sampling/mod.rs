//! Region selection schemes and classifier minibatch sampling.
//!
//! Training-time selectors: NMS, ALL, PRE, POW. Test-time: NMS, TOP.

pub(crate) mod config;
mod minibatch;
mod nms;
mod select;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use config::{SamplingConfig, Scheme};
pub use minibatch::{sample_minibatch, GroundTruth, RoiLabel, RoiMinibatch};
pub use nms::greedy_nms;
pub use select::{
    keep_probabilities, measure_scale_ratio, pow_ratio, select, select_all, select_by_ratio,
    select_nms, select_top, RatioTable,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredProposal {
    pub bbox: BBox,
    pub score: f64,
    pub source_index: usize,
}

impl ScoredProposal {
    pub fn new(bbox: BBox, score: f64, source_index: usize) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::input(format!("proposal {source_index} has non-finite score")));
        }
        Ok(Self {
            bbox,
            score,
            source_index,
        })
    }

    /// Number `(box, score)` pairs by position.
    pub fn from_scored_boxes<I>(items: I) -> Result<Vec<Self>>
    where
        I: IntoIterator<Item = (BBox, f64)>,
    {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (b, s))| Self::new(b, s, i))
            .collect()
    }
}

/// Descending score, ties by ascending `source_index`.
pub fn rank_order(a: &ScoredProposal, b: &ScoredProposal) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.source_index.cmp(&b.source_index))
}

pub(crate) fn ranked(proposals: &[ScoredProposal]) -> Vec<ScoredProposal> {
    let mut v = proposals.to_vec();
    v.sort_by(rank_order);
    v
}
