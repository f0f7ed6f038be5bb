use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    Nms,
    All,
    Pre,
    Pow,
    Top,
}

impl Scheme {
    pub const ALL_SCHEMES: [Scheme; 5] = [Scheme::Nms, Scheme::All, Scheme::Pre, Scheme::Pow, Scheme::Top];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Nms => "nms",
            Scheme::All => "all",
            Scheme::Pre => "pre",
            Scheme::Pow => "pow",
            Scheme::Top => "top",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nms" => Ok(Scheme::Nms),
            "all" => Ok(Scheme::All),
            "pre" => Ok(Scheme::Pre),
            "pow" => Ok(Scheme::Pow),
            "top" => Ok(Scheme::Top),
            other => Err(Error::config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Region selection and minibatch parameters.
///
/// The `train`/`test` presets carry the reference Faster RCNN constants:
/// NMS keeps the top 12000 (train) / 6000 (test) by score, de-duplicates at
/// IoU 0.7 and retains 2000 / 300. ALL, PRE and POW take the top 6000 with no
/// NMS. TOP keeps the top 5000. The classifier samples 256 RoIs from one image
/// with a 0.25 foreground fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub scheme: Scheme,
    /// `K`: candidates kept by score before de-duplication.
    pub pre_top_k: usize,
    /// `k`: regions kept after selection.
    pub post_top_k: usize,
    pub nms_threshold: f64,
    /// `R`: RoIs per classifier minibatch.
    pub batch_rois: usize,
    /// `N`: images per minibatch.
    pub images_per_batch: usize,
    pub pos_fraction: f64,
    pub gamma: f64,
    /// Target scale distribution for PRE, one entry per scale bucket.
    pub ratio_table: Vec<f64>,
    pub fg_iou_min: f64,
    pub bg_iou_lo: f64,
    pub bg_iou_hi: f64,
    /// Boxes narrower or shorter than this are dropped before selection; 0 disables.
    pub min_size: f64,
    /// Keep ground-truth boxes out of the RoI set.
    pub exclude_gt: bool,
    pub seed: u64,
    pub anchors: AnchorSpec,
}

impl SamplingConfig {
    fn base(scheme: Scheme, pre_top_k: usize, post_top_k: usize) -> Self {
        Self {
            scheme,
            pre_top_k,
            post_top_k,
            nms_threshold: 0.7,
            batch_rois: 256,
            images_per_batch: 1,
            pos_fraction: 0.25,
            gamma: 1.0,
            ratio_table: Vec::new(),
            fg_iou_min: 0.5,
            bg_iou_lo: 0.1,
            bg_iou_hi: 0.5,
            min_size: 0.0,
            exclude_gt: true,
            seed: 0,
            anchors: AnchorSpec::default(),
        }
    }

    pub fn train(scheme: Scheme) -> Self {
        match scheme {
            Scheme::Nms => Self::base(scheme, 12000, 2000),
            Scheme::All | Scheme::Pre | Scheme::Pow => Self::base(scheme, 6000, 6000),
            Scheme::Top => Self::base(scheme, 5000, 5000),
        }
    }

    /// Test-time presets. Only NMS and TOP differ from `train`.
    pub fn test(scheme: Scheme) -> Self {
        match scheme {
            Scheme::Nms => Self::base(scheme, 6000, 300),
            _ => Self::train(scheme),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidConfig(m));
        if self.pre_top_k == 0 || self.post_top_k == 0 {
            return err("K and k must be positive".into());
        }
        if self.post_top_k > self.pre_top_k {
            return err(format!("k ({}) must not exceed K ({})", self.post_top_k, self.pre_top_k));
        }
        if !(self.nms_threshold > 0.0 && self.nms_threshold <= 1.0) {
            return err(format!("nms_threshold {} outside (0, 1]", self.nms_threshold));
        }
        if self.batch_rois == 0 || self.images_per_batch == 0 {
            return err("R and N must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.pos_fraction) {
            return err(format!("pos_fraction {} outside [0, 1]", self.pos_fraction));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return err(format!("gamma {} must be finite and nonnegative", self.gamma));
        }
        if !(self.bg_iou_lo < self.bg_iou_hi && self.bg_iou_hi <= self.fg_iou_min) {
            return err(format!(
                "need bg_iou_lo < bg_iou_hi <= fg_iou_min, got {} {} {}",
                self.bg_iou_lo, self.bg_iou_hi, self.fg_iou_min
            ));
        }
        if !(self.min_size.is_finite() && self.min_size >= 0.0) {
            return err(format!("min_size {} must be nonnegative", self.min_size));
        }
        if self.scheme == Scheme::Pre {
            if self.ratio_table.len() != self.anchors.num_buckets() {
                return err(format!(
                    "ratio_table has {} entries, expected one per scale ({})",
                    self.ratio_table.len(),
                    self.anchors.num_buckets()
                ));
            }
            super::select::check_ratio(&self.ratio_table)?;
        }
        Ok(())
    }

    /// Flat `key=value` text, one key per line, in a fixed order.
    pub fn to_kv(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        put("scheme", self.scheme.to_string());
        put("K", self.pre_top_k.to_string());
        put("k", self.post_top_k.to_string());
        put("nms_threshold", self.nms_threshold.to_string());
        put("R", self.batch_rois.to_string());
        put("N", self.images_per_batch.to_string());
        put("pos_fraction", self.pos_fraction.to_string());
        put("gamma", self.gamma.to_string());
        put("ratio_table", join(&self.ratio_table));
        put("fg_iou_min", self.fg_iou_min.to_string());
        put("bg_iou_range", join(&[self.bg_iou_lo, self.bg_iou_hi]));
        put("min_size", self.min_size.to_string());
        put("exclude_gt", self.exclude_gt.to_string());
        put("seed", self.seed.to_string());
        put("scales", join(self.anchors.scales()));
        put("aspect_ratios", join(self.anchors.aspect_ratios()));
        put("stride", self.anchors.stride().to_string());
        s
    }

    /// Parse `key=value` text. Keys not given take the `train` preset of the
    /// configured scheme (`scheme` defaults to `nms`). Blank lines and `#`
    /// comments are ignored.
    pub fn from_kv(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        let scheme = match pairs.get("scheme") {
            Some(v) => v.parse()?,
            None => Scheme::Nms,
        };
        let mut cfg = Self::train(scheme);
        cfg.apply_kv(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Override fields of `self` from `key=value` text. A `scheme` key, if
    /// present, must name the scheme already configured. The result is not
    /// validated.
    pub fn merge_kv(mut self, text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        if let Some(v) = pairs.get("scheme") {
            let scheme: Scheme = v.parse()?;
            if scheme != self.scheme {
                return Err(Error::config(format!("config is for scheme {scheme}, expected {}", self.scheme)));
            }
        }
        self.apply_kv(&pairs)?;
        Ok(self)
    }

    fn apply_kv(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        let mut scales = self.anchors.scales().to_vec();
        let mut ratios = self.anchors.aspect_ratios().to_vec();
        let mut stride = self.anchors.stride();
        for (key, value) in pairs {
            match key.as_str() {
                "scheme" => {}
                "K" => self.pre_top_k = parse_num(key, value)?,
                "k" => self.post_top_k = parse_num(key, value)?,
                "nms_threshold" => self.nms_threshold = parse_num(key, value)?,
                "R" => self.batch_rois = parse_num(key, value)?,
                "N" => self.images_per_batch = parse_num(key, value)?,
                "pos_fraction" => self.pos_fraction = parse_num(key, value)?,
                "gamma" => self.gamma = parse_num(key, value)?,
                "ratio_table" => self.ratio_table = parse_list(key, value)?,
                "fg_iou_min" => self.fg_iou_min = parse_num(key, value)?,
                "bg_iou_range" => {
                    let r: Vec<f64> = parse_list(key, value)?;
                    if r.len() != 2 {
                        return Err(Error::config("bg_iou_range needs two values lo,hi"));
                    }
                    self.bg_iou_lo = r[0];
                    self.bg_iou_hi = r[1];
                }
                "min_size" => self.min_size = parse_num(key, value)?,
                "exclude_gt" => self.exclude_gt = parse_num(key, value)?,
                "seed" => self.seed = parse_num(key, value)?,
                "scales" => scales = parse_list(key, value)?,
                "aspect_ratios" => ratios = parse_list(key, value)?,
                "stride" => stride = parse_num(key, value)?,
                other => return Err(Error::config(format!("unknown config key '{other}'"))),
            }
        }
        self.anchors = AnchorSpec::new(scales, ratios, stride)?;
        Ok(())
    }
}

pub(crate) fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: n + 1,
            msg: format!("expected key=value, got '{line}'"),
        })?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("duplicate key '{}'", k.trim()),
            });
        }
    }
    Ok(out)
}

pub(crate) fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("bad value '{value}' for {key}")))
}

pub(crate) fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}
