use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use roisample::eval::{evaluate, EvalStyle, Interpolation, MAX_DETECTIONS_PER_IMAGE};
use roisample::harness::{measure_reference_ratio, run_comparison, SceneSpec};
use roisample::io::{
    detections_from, ground_truth_from, proposals_by_image, read_feature_map, read_records, write_pooled,
    write_records, Record,
};
use roisample::pooling::{crop_and_resize, max_pool_2x2, roi_pool};
use roisample::rng::{stream_id, stream_rng};
use roisample::sampling::{greedy_nms, measure_scale_ratio, select, RatioTable, SamplingConfig, Scheme};
use roisample::{AnchorSpec, BBox, Error, Result};

#[derive(Parser)]
#[command(name = "roisample", version, about = "Region proposal selection, RoI pooling and detection evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Phase {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Voc,
    Coco,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolMode {
    /// Bilinear crop_and_resize.
    Crop,
    /// Quantized max RoI pooling.
    Roi,
}

#[derive(Subcommand)]
enum Command {
    /// Greedy non-maximum suppression, per image.
    Nms {
        #[arg(long, default_value_t = 0.7)]
        threshold: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select regions with one of the sampling schemes, per image.
    Select {
        #[arg(long)]
        scheme: Scheme,
        /// key=value overrides on top of the phase preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ratio table for PRE ("scale value" per line).
        #[arg(long)]
        ratio: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Phase::Train)]
        phase: Phase,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pool a feature map over a list of RoIs.
    Pool {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        rois: PathBuf,
        #[arg(long, default_value_t = 14)]
        crop: usize,
        #[arg(long, value_enum, default_value_t = PoolMode::Crop)]
        mode: PoolMode,
        /// Follow with a 2x2 max-pool (14x14 becomes 7x7).
        #[arg(long)]
        max_pool: bool,
        /// Multiplier from RoI coordinates to feature-map cells.
        #[arg(long, default_value_t = 1.0 / 16.0)]
        spatial_scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections against ground truth.
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gts: PathBuf,
        #[arg(long, value_enum)]
        style: Style,
        /// Disable the 100-detections-per-image cap.
        #[arg(long)]
        no_cap: bool,
        /// VOC 11-point interpolation instead of all-point.
        #[arg(long)]
        eleven_point: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare schemes on seeded synthetic scenes.
    Simulate {
        /// Scene spec (key=value); defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "nms,all,pow")]
        schemes: Vec<Scheme>,
        /// key=value overrides applied to every scheme's train preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ratio table for PRE; measured from an NMS run when omitted.
        #[arg(long)]
        ratio: Option<PathBuf>,
        /// Also score the selected regions as detections.
        #[arg(long)]
        eval: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scale distribution of a set of regions.
    MeasureRatio {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 16.0)]
        stride: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn load_records(path: &Path) -> Result<Vec<Record>> {
    let file = File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    read_records(BufReader::new(file))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn save_records(path: &Path, records: &[Record]) -> Result<()> {
    let mut w = create(path)?;
    write_records(&mut w, records)?;
    w.flush()?;
    Ok(())
}

fn load_proposals(path: &Path) -> Result<Vec<(String, Vec<roisample::sampling::ScoredProposal>)>> {
    let groups = proposals_by_image(&load_records(path)?)?;
    if groups.is_empty() {
        return Err(Error::EmptyInput("no proposals in input"));
    }
    Ok(groups)
}

fn build_config(scheme: Scheme, phase: Phase, config: Option<&Path>, ratio: Option<&Path>) -> Result<SamplingConfig> {
    let mut cfg = match phase {
        Phase::Train => SamplingConfig::train(scheme),
        Phase::Test => SamplingConfig::test(scheme),
    };
    if let Some(path) = config {
        cfg = cfg.merge_kv(&read_text(path)?)?;
    }
    if let Some(path) = ratio {
        cfg.ratio_table = RatioTable::parse(&read_text(path)?)?.values_for(&cfg.anchors)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Nms { threshold, input, out } => {
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(Error::InvalidConfig("threshold must be in (0, 1]".into()));
            }
            let mut records = Vec::new();
            for (image, props) in load_proposals(&input)? {
                records.extend(greedy_nms(&props, threshold).iter().map(|p| Record::proposal(&image, p)));
            }
            save_records(&out, &records)
        }
        Command::Select {
            scheme,
            config,
            ratio,
            phase,
            input,
            out,
        } => {
            let cfg = build_config(scheme, phase, config.as_deref(), ratio.as_deref())?;
            let mut records = Vec::new();
            for (image, props) in load_proposals(&input)? {
                let mut rng = stream_rng(cfg.seed, stream_id(&image));
                records.extend(select(&props, &cfg, &mut rng)?.iter().map(|p| Record::proposal(&image, p)));
            }
            save_records(&out, &records)
        }
        Command::Pool {
            features,
            rois,
            crop,
            mode,
            max_pool,
            spatial_scale,
            out,
        } => {
            if !(spatial_scale.is_finite() && spatial_scale > 0.0) {
                return Err(Error::InvalidConfig("spatial-scale must be positive".into()));
            }
            let file = File::open(&features).map_err(|e| Error::InvalidInput(format!("{}: {e}", features.display())))?;
            let fm = read_feature_map(BufReader::new(file))?;
            let records = load_records(&rois)?;
            if records.is_empty() {
                return Err(Error::EmptyInput("no RoIs in input"));
            }
            let pooled = records
                .iter()
                .map(|r| {
                    let b = r.bbox()?;
                    let s = spatial_scale;
                    let roi = BBox::new(b.x1() * s, b.y1() * s, b.x2() * s, b.y2() * s)?;
                    let p = match mode {
                        PoolMode::Crop => crop_and_resize(&fm, &roi, crop)?,
                        PoolMode::Roi => roi_pool(&fm, &roi, crop)?,
                    };
                    if max_pool {
                        max_pool_2x2(&p)
                    } else {
                        Ok(p)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let mut w = create(&out)?;
            write_pooled(&mut w, &pooled)?;
            w.flush()?;
            Ok(())
        }
        Command::Eval {
            dets,
            gts,
            style,
            no_cap,
            eleven_point,
            out,
        } => {
            let dets = detections_from(&load_records(&dets)?)?;
            let gts = ground_truth_from(&load_records(&gts)?)?;
            if gts.is_empty() {
                return Err(Error::EmptyInput("no ground truth in input"));
            }
            let style = match style {
                Style::Voc if eleven_point => EvalStyle::Voc(Interpolation::ElevenPoint),
                Style::Voc => EvalStyle::Voc(Interpolation::AllPoint),
                Style::Coco => EvalStyle::Coco,
            };
            let cap = (!no_cap).then_some(MAX_DETECTIONS_PER_IMAGE);
            let report = evaluate(&dets, &gts, style, cap);
            let mut w = create(&out)?;
            write!(w, "{}\n{}", report.to_table(), report.to_kv())?;
            w.flush()?;
            Ok(())
        }
        Command::Simulate {
            spec,
            schemes,
            config,
            ratio,
            eval,
            out,
        } => {
            let spec = match spec {
                Some(path) => SceneSpec::from_kv(&read_text(&path)?)?,
                None => SceneSpec::default(),
            };
            if schemes.is_empty() {
                return Err(Error::InvalidConfig("no schemes given".into()));
            }
            let mut configs = Vec::with_capacity(schemes.len());
            for scheme in schemes {
                let mut cfg = SamplingConfig::train(scheme);
                if let Some(path) = &config {
                    cfg = cfg.merge_kv(&read_text(path)?)?;
                }
                cfg.anchors = spec.anchors.clone();
                if let Some(path) = &ratio {
                    cfg.ratio_table = RatioTable::parse(&read_text(path)?)?.values_for(&cfg.anchors)?;
                } else if scheme == Scheme::Pre && cfg.ratio_table.is_empty() {
                    let mut reference = SamplingConfig::train(Scheme::Nms);
                    reference.anchors = spec.anchors.clone();
                    reference.seed = cfg.seed;
                    cfg.ratio_table = measure_reference_ratio(&spec, &reference)?;
                }
                cfg.validate()?;
                configs.push(cfg);
            }
            run_comparison(&spec, &configs, eval)?.write_dir(&out)
        }
        Command::MeasureRatio {
            input,
            scales,
            stride,
            out,
        } => {
            let anchors = AnchorSpec::new(scales, AnchorSpec::default().aspect_ratios().to_vec(), stride)?;
            let regions: Vec<_> = proposals_by_image(&load_records(&input)?)?
                .into_iter()
                .flat_map(|(_, p)| p)
                .collect();
            let table = RatioTable::new(&anchors, measure_scale_ratio(&regions, &anchors)?)?;
            let mut w = create(&out)?;
            w.write_all(table.to_text().as_bytes())?;
            w.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
