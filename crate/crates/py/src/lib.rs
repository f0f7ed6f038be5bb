//! Python bindings. Boxes cross the boundary as `(x1, y1, x2, y2)` tuples.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use roisample::eval::{coco_summary, voc_evaluate, CocoParams, Detection, GroundTruthBox, Interpolation};
use roisample::harness::{run_comparison, SceneSpec};
use roisample::pooling::{crop_and_resize as crop, crop_and_resize_backward, FeatureMap, PooledFeature};
use roisample::rng::stream_rng;
use roisample::sampling::{self, SamplingConfig, Scheme, ScoredProposal};
use roisample::{AnchorSpec, BBox, BoxDelta};

type Quad = (f64, f64, f64, f64);

fn err(e: roisample::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn bbox(q: Quad) -> PyResult<BBox> {
    BBox::new(q.0, q.1, q.2, q.3).map_err(err)
}

fn quad(b: &BBox) -> Quad {
    (b.x1(), b.y1(), b.x2(), b.y2())
}

fn proposals(boxes: Vec<Quad>, scores: Vec<f64>) -> PyResult<Vec<ScoredProposal>> {
    if boxes.len() != scores.len() {
        return Err(PyValueError::new_err("boxes and scores differ in length"));
    }
    boxes
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (b, s))| ScoredProposal::new(bbox(b)?, s, i).map_err(err))
        .collect()
}

fn anchor_spec(scales: Option<Vec<f64>>, aspect_ratios: Option<Vec<f64>>, stride: f64) -> PyResult<AnchorSpec> {
    let d = AnchorSpec::default();
    AnchorSpec::new(
        scales.unwrap_or_else(|| d.scales().to_vec()),
        aspect_ratios.unwrap_or_else(|| d.aspect_ratios().to_vec()),
        stride,
    )
    .map_err(err)
}

fn sampling_config(scheme: &str, phase: &str, overrides: &str) -> PyResult<SamplingConfig> {
    let scheme: Scheme = scheme.parse().map_err(err)?;
    let cfg = match phase {
        "train" => SamplingConfig::train(scheme),
        "test" => SamplingConfig::test(scheme),
        _ => return Err(PyValueError::new_err("phase must be 'train' or 'test'")),
    };
    cfg.merge_kv(overrides).map_err(err)
}

#[pyfunction]
fn iou(a: Quad, b: Quad) -> PyResult<f64> {
    Ok(roisample::iou(&bbox(a)?, &bbox(b)?))
}

/// Regression deltas `(dx, dy, dw, dh)` taking `anchor` to `target`.
#[pyfunction]
fn encode_delta(anchor: Quad, target: Quad) -> PyResult<Quad> {
    let d = roisample::encode_delta(&bbox(anchor)?, &bbox(target)?).map_err(err)?;
    Ok((d.dx, d.dy, d.dw, d.dh))
}

#[pyfunction]
fn decode_delta(anchor: Quad, delta: Quad) -> PyResult<Quad> {
    let d = BoxDelta {
        dx: delta.0,
        dy: delta.1,
        dw: delta.2,
        dh: delta.3,
    };
    Ok(quad(&roisample::decode_delta(&bbox(anchor)?, &d).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (feat_width, feat_height, scales=None, aspect_ratios=None, stride=16.0))]
fn generate_anchors(
    feat_width: usize,
    feat_height: usize,
    scales: Option<Vec<f64>>,
    aspect_ratios: Option<Vec<f64>>,
    stride: f64,
) -> PyResult<Vec<Quad>> {
    let spec = anchor_spec(scales, aspect_ratios, stride)?;
    Ok(roisample::generate_anchors(&spec, feat_width, feat_height).iter().map(quad).collect())
}

/// Index of the anchor scale nearest to the box size in log space.
#[pyfunction]
#[pyo3(signature = (b, scales=None, stride=16.0))]
fn scale_bucket(b: Quad, scales: Option<Vec<f64>>, stride: f64) -> PyResult<usize> {
    let spec = anchor_spec(scales, None, stride)?;
    Ok(roisample::scale_bucket_of(&bbox(b)?, &spec).map_err(err)?.index)
}

/// Indices of the boxes kept by greedy NMS, highest score first.
#[pyfunction]
#[pyo3(signature = (boxes, scores, threshold=0.7))]
fn greedy_nms(boxes: Vec<Quad>, scores: Vec<f64>, threshold: f64) -> PyResult<Vec<usize>> {
    let props = proposals(boxes, scores)?;
    Ok(sampling::greedy_nms(&props, threshold).iter().map(|p| p.source_index).collect())
}

/// Indices selected by a sampling scheme. `overrides` is `key=value` text
/// applied on top of the phase preset.
#[pyfunction]
#[pyo3(signature = (boxes, scores, scheme, phase="train", overrides="", stream=0))]
fn select(boxes: Vec<Quad>, scores: Vec<f64>, scheme: &str, phase: &str, overrides: &str, stream: u64) -> PyResult<Vec<usize>> {
    let cfg = sampling_config(scheme, phase, overrides)?;
    cfg.validate().map_err(err)?;
    let props = proposals(boxes, scores)?;
    let kept = sampling::select(&props, &cfg, &mut stream_rng(cfg.seed, stream)).map_err(err)?;
    Ok(kept.iter().map(|p| p.source_index).collect())
}

/// `key=value` dump of a preset, optionally with overrides.
#[pyfunction]
#[pyo3(signature = (scheme, phase="train", overrides=""))]
fn config_dump(scheme: &str, phase: &str, overrides: &str) -> PyResult<String> {
    Ok(sampling_config(scheme, phase, overrides)?.to_kv())
}

#[pyfunction]
fn keep_probabilities(ratio: Vec<f64>) -> PyResult<Vec<f64>> {
    sampling::keep_probabilities(&ratio).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (gamma, scales=None, stride=16.0))]
fn pow_ratio(gamma: f64, scales: Option<Vec<f64>>, stride: f64) -> PyResult<Vec<f64>> {
    Ok(sampling::pow_ratio(&anchor_spec(scales, None, stride)?, gamma))
}

/// Bilinear crop of a `(C, H, W)` row-major feature map; returns `C*S*S` values.
#[pyfunction]
fn crop_and_resize(data: Vec<f64>, shape: (usize, usize, usize), roi: Quad, crop_size: usize) -> PyResult<Vec<f64>> {
    let fm = FeatureMap::new(shape.0, shape.1, shape.2, data).map_err(err)?;
    Ok(crop(&fm, &bbox(roi)?, crop_size).map_err(err)?.data)
}

/// Gradient of `crop_and_resize` with respect to the feature map.
#[pyfunction]
fn crop_and_resize_grad(shape: (usize, usize, usize), roi: Quad, crop_size: usize, upstream: Vec<f64>) -> PyResult<Vec<f64>> {
    let up = PooledFeature::new(shape.0, crop_size, upstream).map_err(err)?;
    Ok(crop_and_resize_backward(shape, &bbox(roi)?, crop_size, &up).map_err(err)?.into_data())
}

type DetTuple = (String, Quad, f64, String);
type GtTuple = (String, Quad, String, bool);

fn eval_inputs(dets: Vec<DetTuple>, gts: Vec<GtTuple>) -> PyResult<(Vec<Detection>, Vec<GroundTruthBox>)> {
    let dets = dets
        .into_iter()
        .map(|(image_id, b, score, category)| {
            Ok(Detection {
                image_id,
                bbox: bbox(b)?,
                score,
                category,
            })
        })
        .collect::<PyResult<_>>()?;
    let gts = gts
        .into_iter()
        .map(|(image_id, b, category, difficult)| {
            Ok(GroundTruthBox {
                image_id,
                bbox: bbox(b)?,
                category,
                difficult,
            })
        })
        .collect::<PyResult<_>>()?;
    Ok((dets, gts))
}

/// COCO-style summary. Detections are `(image_id, box, score, category)`,
/// ground truth `(image_id, box, category, difficult)`. Absent values are None.
#[pyfunction]
fn coco_eval<'py>(py: Python<'py>, dets: Vec<DetTuple>, gts: Vec<GtTuple>) -> PyResult<Bound<'py, PyDict>> {
    let (dets, gts) = eval_inputs(dets, gts)?;
    let report = coco_summary(&dets, &gts, &CocoParams::default());
    let out = PyDict::new(py);
    if let Some(s) = report.summary {
        for (name, v) in s.columns() {
            out.set_item(name, v)?;
        }
    }
    Ok(out)
}

/// Per-category VOC AP at IoU 0.5 plus `mAP`.
#[pyfunction]
#[pyo3(signature = (dets, gts, eleven_point=false))]
fn voc_eval<'py>(py: Python<'py>, dets: Vec<DetTuple>, gts: Vec<GtTuple>, eleven_point: bool) -> PyResult<Bound<'py, PyDict>> {
    let (dets, gts) = eval_inputs(dets, gts)?;
    let interp = if eleven_point { Interpolation::ElevenPoint } else { Interpolation::AllPoint };
    let report = voc_evaluate(&dets, &gts, interp);
    let out = PyDict::new(py);
    for (cat, v) in &report.per_category {
        out.set_item(cat, v.first().copied().flatten())?;
    }
    out.set_item("mAP", report.map)?;
    Ok(out)
}

/// Run the synthetic comparison. `spec` is scene `key=value` text; returns
/// the summary table, key/values and per-scene CSV.
#[pyfunction]
#[pyo3(signature = (spec="", schemes=vec!["nms".to_string(), "all".to_string(), "pow".to_string()], with_eval=false))]
fn simulate<'py>(py: Python<'py>, spec: &str, schemes: Vec<String>, with_eval: bool) -> PyResult<Bound<'py, PyDict>> {
    let spec = SceneSpec::from_kv(spec).map_err(err)?;
    let mut configs = Vec::new();
    for s in &schemes {
        let mut cfg = SamplingConfig::train(s.parse().map_err(err)?);
        cfg.anchors = spec.anchors.clone();
        if cfg.scheme == Scheme::Pre {
            let mut nms = SamplingConfig::train(Scheme::Nms);
            nms.anchors = spec.anchors.clone();
            cfg.ratio_table = roisample::harness::measure_reference_ratio(&spec, &nms).map_err(err)?;
        }
        configs.push(cfg);
    }
    let r = py.detach(|| run_comparison(&spec, &configs, with_eval)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("table", r.to_table())?;
    out.set_item("kv", r.to_kv())?;
    out.set_item("per_scene_csv", r.per_scene_csv())?;
    Ok(out)
}

#[pymodule]
fn pyroisample(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RNG_ALGORITHM", roisample::rng::RNG_ALGORITHM)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(encode_delta, m)?)?;
    m.add_function(wrap_pyfunction!(decode_delta, m)?)?;
    m.add_function(wrap_pyfunction!(generate_anchors, m)?)?;
    m.add_function(wrap_pyfunction!(scale_bucket, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_nms, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(config_dump, m)?)?;
    m.add_function(wrap_pyfunction!(keep_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(pow_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(crop_and_resize, m)?)?;
    m.add_function(wrap_pyfunction!(crop_and_resize_grad, m)?)?;
    m.add_function(wrap_pyfunction!(coco_eval, m)?)?;
    m.add_function(wrap_pyfunction!(voc_eval, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
