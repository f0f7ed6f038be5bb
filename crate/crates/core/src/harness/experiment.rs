use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::scene::{generate_scene, Scene, SceneSpec};
use crate::anchors::scale_bucket_of;
use crate::error::{Error, Result};
use crate::eval::{cap_detections, coco_summary, CocoParams, Detection, EvalReport, GroundTruthBox, MAX_DETECTIONS_PER_IMAGE};
use crate::geometry::iou;
use crate::rng::{stream_rng, RNG_ALGORITHM};
use crate::sampling::{measure_scale_ratio, sample_minibatch, select, SamplingConfig, Scheme, ScoredProposal};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneStats {
    pub histogram: Vec<usize>,
    /// Mean anchor scale (not pixels) of the selected regions.
    pub mean_nominal_scale: Option<f64>,
    /// Fraction of ground truth covered at IoU 0.5.
    pub recall: Option<f64>,
    pub fg: usize,
    pub bg: usize,
    pub minibatch_skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub config: SamplingConfig,
    pub histogram: Vec<usize>,
    pub selected: usize,
    pub mean_nominal_scale: Option<f64>,
    pub recall: Option<f64>,
    pub fg: usize,
    pub bg: usize,
    pub skipped_minibatches: usize,
    pub per_scene: Vec<SceneStats>,
    /// Selected regions scored as class-agnostic detections.
    pub eval: Option<EvalReport>,
}

impl SchemeSummary {
    pub fn histogram_fractions(&self) -> Vec<f64> {
        let n = self.selected.max(1) as f64;
        self.histogram.iter().map(|c| *c as f64 / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: SceneSpec,
    pub schemes: Vec<SchemeSummary>,
}

fn scenes_for(spec: &SceneSpec) -> Vec<Scene> {
    (0..spec.scenes)
        .into_par_iter()
        .map(|i| generate_scene(spec, &mut stream_rng(spec.seed, i as u64)))
        .collect()
}

fn scene_stats(
    spec: &SceneSpec,
    scene: &Scene,
    cfg: &SamplingConfig,
    scene_index: usize,
) -> Result<(SceneStats, Vec<ScoredProposal>)> {
    let mut rng = stream_rng(cfg.seed, scene_index as u64);
    let selected = select(&scene.proposals, cfg, &mut rng)?;

    let mut histogram = vec![0usize; spec.anchors.num_buckets()];
    let mut scale_sum = 0.0;
    for p in &selected {
        let b = scale_bucket_of(&p.bbox, &spec.anchors)?;
        histogram[b.index] += 1;
        scale_sum += spec.anchors.scales()[b.index];
    }
    let covered = scene
        .ground_truth
        .iter()
        .filter(|g| selected.iter().any(|p| iou(&p.bbox, &g.bbox) >= 0.5))
        .count();
    let (fg, bg, skipped) = match sample_minibatch(&selected, &scene.ground_truth, cfg, &mut rng) {
        Ok(mb) => (mb.fg_count, mb.bg_count, false),
        Err(Error::EmptyMinibatch) => (0, 0, true),
        Err(e) => return Err(e),
    };
    let stats = SceneStats {
        histogram,
        mean_nominal_scale: (!selected.is_empty()).then(|| scale_sum / selected.len() as f64),
        recall: (!scene.ground_truth.is_empty()).then(|| covered as f64 / scene.ground_truth.len() as f64),
        fg,
        bg,
        minibatch_skipped: skipped,
    };
    Ok((stats, selected))
}

fn run_scheme(spec: &SceneSpec, scenes: &[Scene], cfg: &SamplingConfig, with_eval: bool) -> Result<SchemeSummary> {
    cfg.validate()?;
    let results: Vec<(SceneStats, Vec<ScoredProposal>)> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, s)| scene_stats(spec, s, cfg, i))
        .collect::<Result<_>>()?;

    let nb = spec.anchors.num_buckets();
    let mut histogram = vec![0usize; nb];
    let (mut fg, mut bg, mut skipped) = (0, 0, 0);
    let (mut covered, mut total_gt) = (0.0, 0usize);
    for ((st, _), scene) in results.iter().zip(scenes) {
        for (h, c) in histogram.iter_mut().zip(&st.histogram) {
            *h += c;
        }
        fg += st.fg;
        bg += st.bg;
        skipped += usize::from(st.minibatch_skipped);
        if let Some(r) = st.recall {
            covered += r * scene.ground_truth.len() as f64;
            total_gt += scene.ground_truth.len();
        }
    }
    let selected: usize = histogram.iter().sum();
    let scale_sum: f64 = histogram.iter().zip(spec.anchors.scales()).map(|(c, s)| *c as f64 * s).sum();

    let eval = with_eval.then(|| {
        let mut dets = Vec::new();
        let mut gts = Vec::new();
        for (i, ((_, sel), scene)) in results.iter().zip(scenes).enumerate() {
            let image_id = format!("scene{i:05}");
            dets.extend(sel.iter().map(|p| Detection {
                image_id: image_id.clone(),
                bbox: p.bbox,
                score: p.score,
                category: "object".into(),
            }));
            gts.extend(scene.ground_truth.iter().map(|g| GroundTruthBox {
                image_id: image_id.clone(),
                bbox: g.bbox,
                category: "object".into(),
                difficult: false,
            }));
        }
        coco_summary(&cap_detections(&dets, MAX_DETECTIONS_PER_IMAGE), &gts, &CocoParams::default())
    });

    Ok(SchemeSummary {
        scheme: cfg.scheme,
        config: cfg.clone(),
        histogram,
        selected,
        mean_nominal_scale: (selected > 0).then(|| scale_sum / selected as f64),
        recall: (total_gt > 0).then(|| covered / total_gt as f64),
        fg,
        bg,
        skipped_minibatches: skipped,
        per_scene: results.into_iter().map(|(s, _)| s).collect(),
        eval,
    })
}

/// Run each config over `spec.scenes` seeded scenes. Scene `i` is drawn
/// from stream `i` of `spec.seed`; selection and minibatch sampling for a
/// config use stream `i` of that config's seed.
pub fn run_comparison(spec: &SceneSpec, configs: &[SamplingConfig], with_eval: bool) -> Result<ExperimentResult> {
    if configs.is_empty() {
        return Err(Error::config("at least one sampling config is required"));
    }
    spec.validate()?;
    let scenes = scenes_for(spec);
    let schemes = configs
        .iter()
        .map(|cfg| run_scheme(spec, &scenes, cfg, with_eval))
        .collect::<Result<_>>()?;
    Ok(ExperimentResult {
        spec: spec.clone(),
        schemes,
    })
}

/// Scale distribution of `cfg` (normally an NMS config) pooled over the
/// scenes of `spec`; the input PRE expects as its ratio table.
pub fn measure_reference_ratio(spec: &SceneSpec, cfg: &SamplingConfig) -> Result<Vec<f64>> {
    spec.validate()?;
    cfg.validate()?;
    let scenes = scenes_for(spec);
    let mut pooled = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, i as u64);
        pooled.extend(select(&s.proposals, cfg, &mut rng)?);
    }
    measure_scale_ratio(&pooled, &spec.anchors)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), |x| format!("{x:.4}"))
}

impl ExperimentResult {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeSummary> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }

    pub fn to_table(&self) -> String {
        let scales: Vec<String> = self.spec.anchors.scales().iter().map(|s| format!("s{s}")).collect();
        let mut t = String::new();
        write!(t, "{:<6} {:>9}", "scheme", "selected").unwrap();
        for s in &scales {
            write!(t, " {s:>8}").unwrap();
        }
        writeln!(t, " {:>10} {:>9} {:>8} {:>8} {:>7}", "mean_scale", "recall50", "fg", "bg", "skipped").unwrap();
        for s in &self.schemes {
            write!(t, "{:<6} {:>9}", s.scheme.name(), s.selected).unwrap();
            for f in s.histogram_fractions() {
                write!(t, " {f:>8.4}").unwrap();
            }
            writeln!(
                t,
                " {:>10} {:>9} {:>8} {:>8} {:>7}",
                opt(s.mean_nominal_scale),
                opt(s.recall),
                s.fg,
                s.bg,
                s.skipped_minibatches
            )
            .unwrap();
        }
        t
    }

    pub fn to_kv(&self) -> String {
        let mut t = String::new();
        for s in &self.schemes {
            let n = s.scheme.name();
            writeln!(t, "{n}.selected={}", s.selected).unwrap();
            let hist: Vec<String> = s.histogram.iter().map(|c| c.to_string()).collect();
            writeln!(t, "{n}.histogram={}", hist.join(",")).unwrap();
            writeln!(t, "{n}.mean_nominal_scale={}", opt(s.mean_nominal_scale)).unwrap();
            writeln!(t, "{n}.recall50={}", opt(s.recall)).unwrap();
            writeln!(t, "{n}.fg={}", s.fg).unwrap();
            writeln!(t, "{n}.bg={}", s.bg).unwrap();
            writeln!(t, "{n}.skipped_minibatches={}", s.skipped_minibatches).unwrap();
            if let Some(e) = &s.eval {
                for line in e.to_kv().lines() {
                    writeln!(t, "{n}.eval.{line}").unwrap();
                }
            }
        }
        t
    }

    pub fn per_scene_csv(&self) -> String {
        let mut t = String::from("scheme,scene,");
        let hist: Vec<String> = self.spec.anchors.scales().iter().map(|s| format!("n_s{s}")).collect();
        writeln!(t, "{},mean_scale,recall50,fg,bg,skipped", hist.join(",")).unwrap();
        for s in &self.schemes {
            for (i, st) in s.per_scene.iter().enumerate() {
                let h: Vec<String> = st.histogram.iter().map(|c| c.to_string()).collect();
                writeln!(
                    t,
                    "{},{i},{},{},{},{},{},{}",
                    s.scheme.name(),
                    h.join(","),
                    opt(st.mean_nominal_scale),
                    opt(st.recall),
                    st.fg,
                    st.bg,
                    u8::from(st.minibatch_skipped)
                )
                .unwrap();
            }
        }
        t
    }

    /// Run parameters: generator, scene spec and every config.
    pub fn metadata(&self) -> String {
        let mut t = String::new();
        writeln!(t, "rng_algorithm={RNG_ALGORITHM}").unwrap();
        writeln!(t, "[scene]").unwrap();
        t.push_str(&self.spec.to_kv());
        for s in &self.schemes {
            writeln!(t, "[config.{}]", s.scheme.name()).unwrap();
            t.push_str(&s.config.to_kv());
        }
        t
    }

    /// Write `summary.txt`, `result.kv`, `per_scene.csv` and `metadata.txt`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.txt"), self.to_table())?;
        fs::write(dir.join("result.kv"), self.to_kv())?;
        fs::write(dir.join("per_scene.csv"), self.per_scene_csv())?;
        fs::write(dir.join("metadata.txt"), self.metadata())?;
        Ok(())
    }
}
