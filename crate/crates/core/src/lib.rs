//! Region-proposal processing for two-stage detectors: box geometry, anchor
//! lattices, proposal selection schemes (NMS, ALL, PRE, POW, TOP), RoI
//! minibatch sampling, crop-and-resize pooling and AP/AR evaluation, plus a
//! synthetic scene harness for comparing selection schemes.

pub mod anchors;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod pooling;
pub mod rng;
pub mod sampling;

pub use anchors::{generate_anchors, scale_bucket_of, AnchorSpec, ScaleBucket};
pub use error::{Error, Result};
pub use geometry::{clip_to_image, decode_delta, encode_delta, iou, is_small, BBox, BoxDelta};
