use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::anchors::AnchorSpec;
use crate::error::{Error, Result};
use crate::geometry::{clip_to_image, iou, BBox};
use crate::sampling::config::{parse_kv, parse_list, parse_num};
use crate::sampling::{GroundTruth, ScoredProposal};

/// Knobs of the synthetic proposal generator.
///
/// Each object spawns `proposals_per_object` jittered proposals, and each of
/// those is repeated `duplication_factor[bucket]` times as near-duplicates
/// (corner jitter of 1% of the object size).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub image_width: f64,
    pub image_height: f64,
    /// Objects per scale bucket.
    pub objects: Vec<usize>,
    pub proposals_per_object: usize,
    pub duplication_factor: Vec<usize>,
    pub score_noise_sigma: f64,
    /// Corner jitter of object proposals, pixels.
    pub localization_noise_sigma: f64,
    /// Uniform low-score background proposals.
    pub clutter_count: usize,
    pub seed: u64,
    /// Scenes per comparison run.
    pub scenes: usize,
    pub anchors: AnchorSpec,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_width: 1024.0,
            image_height: 1024.0,
            objects: vec![4, 4, 4],
            proposals_per_object: 4,
            duplication_factor: vec![1, 1, 1],
            score_noise_sigma: 0.05,
            localization_noise_sigma: 8.0,
            clutter_count: 200,
            seed: 0,
            scenes: 100,
            anchors: AnchorSpec::default(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let nb = self.anchors.num_buckets();
        if !(self.image_width > 0.0 && self.image_height > 0.0 && self.image_width.is_finite() && self.image_height.is_finite()) {
            return Err(Error::config("image_size must be positive"));
        }
        if self.objects.len() != nb || self.duplication_factor.len() != nb {
            return Err(Error::config(format!("objects and duplication_factor need {nb} entries, one per scale")));
        }
        for s in [self.score_noise_sigma, self.localization_noise_sigma] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::config("noise sigmas must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let joinf = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "image_size={},{}\nobjects={}\nproposals_per_object={}\nduplication_factor={}\n\
             score_noise_sigma={}\nlocalization_noise_sigma={}\nclutter_count={}\nseed={}\nscenes={}\n\
             scales={}\naspect_ratios={}\nstride={}\n",
            self.image_width,
            self.image_height,
            join(&self.objects),
            self.proposals_per_object,
            join(&self.duplication_factor),
            self.score_noise_sigma,
            self.localization_noise_sigma,
            self.clutter_count,
            self.seed,
            self.scenes,
            joinf(self.anchors.scales()),
            joinf(self.anchors.aspect_ratios()),
            self.anchors.stride(),
        )
    }

    /// Parse `key=value` text; missing keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        let mut scales = spec.anchors.scales().to_vec();
        let mut ratios = spec.anchors.aspect_ratios().to_vec();
        let mut stride = spec.anchors.stride();
        for (k, v) in parse_kv(text)? {
            match k.as_str() {
                "image_size" => {
                    let s: Vec<f64> = parse_list(&k, &v)?;
                    let [w, h] = s[..] else {
                        return Err(Error::config("image_size needs width,height"));
                    };
                    spec.image_width = w;
                    spec.image_height = h;
                }
                "objects" => spec.objects = parse_list(&k, &v)?,
                "proposals_per_object" => spec.proposals_per_object = parse_num(&k, &v)?,
                "duplication_factor" => spec.duplication_factor = parse_list(&k, &v)?,
                "score_noise_sigma" => spec.score_noise_sigma = parse_num(&k, &v)?,
                "localization_noise_sigma" => spec.localization_noise_sigma = parse_num(&k, &v)?,
                "clutter_count" => spec.clutter_count = parse_num(&k, &v)?,
                "seed" => spec.seed = parse_num(&k, &v)?,
                "scenes" => spec.scenes = parse_num(&k, &v)?,
                "scales" => scales = parse_list(&k, &v)?,
                "aspect_ratios" => ratios = parse_list(&k, &v)?,
                "stride" => stride = parse_num(&k, &v)?,
                other => return Err(Error::config(format!("unknown scene key '{other}'"))),
            }
        }
        spec.anchors = AnchorSpec::new(scales, ratios, stride)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ground_truth: Vec<GroundTruth>,
    /// Which scale bucket each ground truth box was drawn for.
    pub gt_bucket: Vec<usize>,
    pub proposals: Vec<ScoredProposal>,
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated nonnegative")
}

fn jitter<R: Rng + ?Sized>(b: &BBox, sigma: f64, w: f64, h: f64, rng: &mut R) -> Option<BBox> {
    let n = normal(sigma);
    let (mut x1, mut y1) = (b.x1() + n.sample(rng), b.y1() + n.sample(rng));
    let (mut x2, mut y2) = (b.x2() + n.sample(rng), b.y2() + n.sample(rng));
    if x2 < x1 {
        std::mem::swap(&mut x1, &mut x2);
    }
    if y2 < y1 {
        std::mem::swap(&mut y1, &mut y2);
    }
    let c = clip_to_image(&BBox::new(x1, y1, x2, y2).ok()?, w, h);
    (c.width() >= 1.0 && c.height() >= 1.0).then_some(c)
}

/// Draw one scene.
///
/// Ground truth sizes are the bucket's nominal size scaled by `2^u`,
/// `u ~ U(-0.25, 0.25)`, with aspect ratio `2^v`, `v ~ U(-0.5, 0.5)`; the
/// geometric-mean side stays within a quarter octave of nominal. Object
/// proposals score `0.5 + 0.5 * IoU(gt)` plus noise; duplicates reuse their
/// parent's base score plus fresh noise. Clutter boxes have log-uniform sizes
/// across the scale range and scores `U(0, 0.3)` plus noise.
pub fn generate_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Scene {
    let (w, h) = (spec.image_width, spec.image_height);
    let score_noise = normal(spec.score_noise_sigma);
    let mut ground_truth = Vec::new();
    let mut gt_bucket = Vec::new();
    let mut boxes: Vec<(BBox, f64)> = Vec::new();

    for (bucket, &count) in spec.objects.iter().enumerate() {
        let nominal = spec.anchors.nominal_size(bucket);
        for _ in 0..count {
            let side = nominal * 2f64.powf(rng.random_range(-0.25..=0.25));
            let aspect = 2f64.powf(rng.random_range(-0.5..=0.5)).sqrt();
            let (bw, bh) = ((side * aspect).min(w), (side / aspect).min(h));
            let x1 = rng.random_range(0.0..=(w - bw));
            let y1 = rng.random_range(0.0..=(h - bh));
            let gt = BBox::new(x1, y1, x1 + bw, y1 + bh).expect("positive size inside image");
            ground_truth.push(GroundTruth { bbox: gt, class: 1 });
            gt_bucket.push(bucket);

            let dup_sigma = 0.01 * side;
            for _ in 0..spec.proposals_per_object {
                let Some(base) = jitter(&gt, spec.localization_noise_sigma, w, h, rng) else {
                    continue;
                };
                let base_score = 0.5 + 0.5 * iou(&base, &gt);
                boxes.push((base, base_score + score_noise.sample(rng)));
                for _ in 1..spec.duplication_factor[bucket] {
                    if let Some(d) = jitter(&base, dup_sigma, w, h, rng) {
                        boxes.push((d, base_score + score_noise.sample(rng)));
                    }
                }
            }
        }
    }

    let sizes: Vec<f64> = (0..spec.anchors.num_buckets()).map(|i| spec.anchors.nominal_size(i)).collect();
    let lo = sizes.iter().copied().fold(f64::INFINITY, f64::min).log2() - 0.5;
    let hi = sizes.iter().copied().fold(0.0, f64::max).log2() + 0.5;
    for _ in 0..spec.clutter_count {
        let side = 2f64.powf(rng.random_range(lo..=hi));
        let aspect = 2f64.powf(rng.random_range(-0.5..=0.5)).sqrt();
        let cx = rng.random_range(0.0..=w);
        let cy = rng.random_range(0.0..=h);
        let Ok(b) = BBox::from_center(cx, cy, side * aspect, side / aspect) else {
            continue;
        };
        let c = clip_to_image(&b, w, h);
        if c.width() >= 1.0 && c.height() >= 1.0 {
            boxes.push((c, rng.random_range(0.0..0.3) + score_noise.sample(rng)));
        }
    }

    let proposals = ScoredProposal::from_scored_boxes(boxes).expect("generated scores are finite");
    Scene {
        ground_truth,
        gt_bucket,
        proposals,
    }
}
