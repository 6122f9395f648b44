//! Flat `key = value` experiment configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Command-line
//! flags are applied as further assignments after the file, so they win.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sparsect::classical::{FbpFilter, SartConfig, SartTvConfig};
use sparsect::dgr::{DgrConfig, EarlyStop};
use sparsect::objective::LossWeights;
use sparsect_neural::{SkipNetConfig, UpsampleMode};

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    SheppLogan,
    Ellipses { count: (usize, usize) },
    Slices { dir: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Fbp,
    Sart,
    SartTv,
    Dgr,
}

impl MethodKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "fbp" => Self::Fbp,
            "sart" => Self::Sart,
            "sart_tv" | "sart+tv" => Self::SartTv,
            "dgr" => Self::Dgr,
            _ => bail!("unknown method `{s}` (expected fbp, sart, sart_tv or dgr)"),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fbp => "fbp",
            Self::Sart => "sart",
            Self::SartTv => "sart_tv",
            Self::Dgr => "dgr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    pub image_size: usize,
    pub views: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub method: MethodKind,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub hu_window: (f64, f64),
    pub fbp_filter: FbpFilter,
    pub sart: SartConfig,
    pub sart_tv: SartTvConfig,
    pub dgr: DgrConfig,
    pub archs: Vec<String>,
    /// Benchmark rows; `None` runs the full table.
    pub rows: Option<Vec<String>>,
}

/// Learning rate used by the harness at desk scale.
pub const DESK_LR: f64 = 0.01;
/// Iteration budget used by the harness at desk scale.
pub const DESK_ITERATIONS: usize = 800;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::Ellipses { count: (5, 15) },
            image_size: 128,
            views: vec![64],
            snr_db: vec![39.0],
            method: MethodKind::Fbp,
            seeds: vec![0],
            out: PathBuf::from("out"),
            hu_window: (-300.0, 300.0),
            fbp_filter: FbpFilter::Ramp,
            sart: SartConfig::default(),
            sart_tv: SartTvConfig::default(),
            dgr: DgrConfig {
                iterations: DESK_ITERATIONS,
                lr: DESK_LR,
                ..DgrConfig::default()
            },
            archs: vec!["v1".into(), "v2".into(), "v3".into()],
            rows: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e| anyhow!("invalid value `{v}` for `{key}`: {e}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let out: Vec<T> = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        bail!("`{key}` needs at least one value");
    }
    Ok(out)
}

/// `a..b` (exclusive) or a comma list.
fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (parse_num("seeds", a)?, parse_num("seeds", b)?);
        if b <= a {
            bail!("empty seed range `{v}`");
        }
        return Ok((a..b).collect());
    }
    parse_list("seeds", v)
}

/// One or two values separated by `,` (or `-` when `dash` is set).
fn parse_pair<T: std::str::FromStr + Copy>(key: &str, v: &str, dash: bool) -> Result<(T, T)>
where
    T::Err: fmt::Display,
{
    let parts: Vec<&str> = v
        .split(|c| c == ',' || (dash && c == '-'))
        .filter(|s| !s.is_empty())
        .collect();
    match parts.as_slice() {
        [a] => {
            let a = parse_num(key, a)?;
            Ok((a, a))
        }
        [a, b] => Ok((parse_num(key, a)?, parse_num(key, b)?)),
        _ => bail!("`{key}` expects one or two values, got `{v}`"),
    }
}

/// Weights written `meas/ssim/tv`, e.g. `0.9/0/0.1`.
pub fn parse_weights(v: &str) -> Result<LossWeights> {
    let w: Vec<f64> = v
        .split('/')
        .map(|s| parse_num("weights", s))
        .collect::<Result<_>>()?;
    if w.len() != 3 {
        bail!("weights must be written meas/ssim/tv, got `{v}`");
    }
    Ok(LossWeights::new(w[0], w[1], w[2])?)
}

pub fn net_by_name(name: &str) -> Result<SkipNetConfig> {
    SkipNetConfig::by_name(name).ok_or_else(|| anyhow!("unknown architecture `{name}` (expected v1, v2 or v3)"))
}

impl ExperimentConfig {
    /// Defaults overridden by the file at `path`, if any, then by `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| anyhow!("{}:{}: expected key = value", p.display(), lineno + 1))?;
                cfg.set(k.trim(), v.trim())
                    .with_context(|| format!("{}:{}", p.display(), lineno + 1))?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = match v {
                    "shepp_logan" => Dataset::SheppLogan,
                    "ellipses" => Dataset::Ellipses {
                        count: match &self.dataset {
                            Dataset::Ellipses { count } => *count,
                            _ => (5, 15),
                        },
                    },
                    "slices" => Dataset::Slices {
                        dir: match &self.dataset {
                            Dataset::Slices { dir } => dir.clone(),
                            _ => PathBuf::new(),
                        },
                    },
                    _ => bail!("unknown dataset `{v}` (expected shepp_logan, ellipses or slices)"),
                }
            }
            "ellipse_count" => self.dataset = Dataset::Ellipses { count: parse_pair(key, v, true)? },
            "slices_dir" => self.dataset = Dataset::Slices { dir: PathBuf::from(v) },
            "image_size" => self.image_size = parse_num(key, v)?,
            "views" => self.views = parse_list(key, v)?,
            "snr_db" => {
                self.snr_db = v
                    .split(',')
                    .map(|s| match s.trim() {
                        "inf" => Ok(f64::INFINITY),
                        s => parse_num(key, s),
                    })
                    .collect::<Result<_>>()?
            }
            "method" => self.method = MethodKind::parse(v)?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "out" => self.out = PathBuf::from(v),
            "hu_window" => self.hu_window = parse_pair(key, v, false)?,
            "fbp_filter" => {
                self.fbp_filter = match v {
                    "ramp" => FbpFilter::Ramp,
                    "hann" => FbpFilter::Hann,
                    _ => bail!("unknown filter `{v}` (expected ramp or hann)"),
                }
            }
            "sart_iterations" => {
                self.sart.iterations = parse_num(key, v)?;
                self.sart_tv.sart.iterations = self.sart.iterations;
            }
            "sart_relaxation" => {
                self.sart.relaxation = parse_num(key, v)?;
                self.sart_tv.sart.relaxation = self.sart.relaxation;
            }
            "tv_weight" => {
                let w: f64 = parse_num(key, v)?;
                self.sart_tv = SartTvConfig {
                    denoise_inner_iters: self.sart_tv.denoise_inner_iters,
                    ..SartTvConfig::with_tv_weight(w)
                };
                self.sart_tv.sart = self.sart.clone();
            }
            "denoise_step" => self.sart_tv.denoise_step = parse_num(key, v)?,
            "denoise_inner_iters" => self.sart_tv.denoise_inner_iters = parse_num(key, v)?,
            "dgr_iterations" => self.dgr.iterations = parse_num(key, v)?,
            "dgr_lr" => self.dgr.lr = parse_num(key, v)?,
            "dgr_weights" => self.dgr.weights = parse_weights(v)?,
            "dgr_net" => {
                let seed = self.dgr.net.seed;
                self.dgr.net = SkipNetConfig {
                    seed,
                    upsample: self.dgr.net.upsample,
                    ..net_by_name(v)?
                }
            }
            "dgr_upsample" => {
                self.dgr.net.upsample = match v {
                    "nearest" => UpsampleMode::Nearest,
                    "bilinear" => UpsampleMode::Bilinear,
                    _ => bail!("unknown upsample mode `{v}`"),
                }
            }
            "dgr_input_noise_variance" => self.dgr.input_noise_variance = parse_num(key, v)?,
            "dgr_early_stop" => {
                self.dgr.early_stop = if v == "off" {
                    None
                } else {
                    let (w, d): (f64, f64) = parse_pair(key, v, false)?;
                    Some(EarlyStop {
                        window: w as usize,
                        min_delta: d,
                    })
                }
            }
            "archs" => {
                let list: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                for a in &list {
                    net_by_name(a)?;
                }
                self.archs = list;
            }
            "rows" => {
                self.rows = if v == "all" {
                    None
                } else {
                    Some(v.split(',').map(|s| s.trim().to_string()).collect())
                }
            }
            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 {
            bail!("image_size must be at least 16");
        }
        if self.views.contains(&0) {
            bail!("views must be positive");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if let Dataset::Slices { dir } = &self.dataset {
            if dir.as_os_str().is_empty() {
                bail!("dataset = slices needs slices_dir");
            }
        }
        self.sart.validate()?;
        self.sart_tv.validate()?;
        self.dgr.validate()?;
        Ok(())
    }

    /// Key/value dump for run manifests.
    pub fn describe(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put(
            "dataset",
            match &self.dataset {
                Dataset::SheppLogan => "shepp_logan".into(),
                Dataset::Ellipses { count } => format!("ellipses({}-{})", count.0, count.1),
                Dataset::Slices { dir } => format!("slices({})", dir.display()),
            },
        );
        put("image_size", self.image_size.to_string());
        put("views", join(&self.views));
        put("snr_db", join(&self.snr_db));
        put("method", self.method.name().into());
        put("seeds", join(&self.seeds));
        put("hu_window", format!("{},{}", self.hu_window.0, self.hu_window.1));
        put("fbp_filter", format!("{:?}", self.fbp_filter).to_lowercase());
        put("sart_iterations", self.sart.iterations.to_string());
        put("sart_relaxation", self.sart.relaxation.to_string());
        put("tv_weight", self.sart_tv.tv_weight.to_string());
        put("denoise_step", self.sart_tv.denoise_step.to_string());
        put("denoise_inner_iters", self.sart_tv.denoise_inner_iters.to_string());
        put("dgr_iterations", self.dgr.iterations.to_string());
        put("dgr_lr", self.dgr.lr.to_string());
        put("dgr_weights", self.dgr.weights.to_string());
        put("dgr_net", join(&self.dgr.net.channels_per_scale));
        put("dgr_upsample", format!("{:?}", self.dgr.net.upsample).to_lowercase());
        put("dgr_input_noise_variance", self.dgr.input_noise_variance.to_string());
        put(
            "dgr_early_stop",
            self.dgr
                .early_stop
                .map(|e| format!("{},{}", e.window, e.min_delta))
                .unwrap_or_else(|| "off".into()),
        );
        put("archs", self.archs.join(","));
        put("rows", self.rows.as_ref().map(|r| r.join(",")).unwrap_or_else(|| "all".into()));
        m
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
