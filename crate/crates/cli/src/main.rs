use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand};
use sparsect_cli::commands::{self, RoiSpec};
use sparsect_cli::config::ExperimentConfig;
use sparsect_cli::profile::parse_roi;

#[derive(Parser)]
#[command(name = "sparsect", version, about = "Sparse-view CT reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct each seed's image with one method.
    Reconstruct(Common),
    /// Run the method-by-views table over all seeds.
    Benchmark(Common),
    /// Export DGR PSNR/SSIM curves for each SNR and architecture.
    Curves(Common),
    /// Write ground-truth phantoms.
    Phantom(Common),
    /// Write clean and noisy sinograms.
    Project {
        #[command(flatten)]
        common: Common,
        /// Project this image file instead of generating one.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write one row profile per image and a CNR table.
    Profile(ProfileArgs),
}

/// Configuration shared by the experiment commands. Flags override the
/// config file; `--set` accepts any config key.
#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` assignments, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    method: Option<String>,
    /// Comma list of view counts.
    #[arg(long)]
    views: Option<String>,
    /// Comma list of SNR values in dB (`inf` for noiseless).
    #[arg(long = "snr-db")]
    snr_db: Option<String>,
    #[arg(long = "image-size")]
    image_size: Option<String>,
    /// `a..b` or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// DGR iteration budget.
    #[arg(long)]
    iterations: Option<String>,
    /// DGR learning rate.
    #[arg(long)]
    lr: Option<String>,
    /// DGR loss weights as `meas/ssim/tv`.
    #[arg(long)]
    weights: Option<String>,
    /// DGR architecture (v1, v2 or v3).
    #[arg(long)]
    net: Option<String>,
    /// Comma list of architectures for `curves`.
    #[arg(long)]
    archs: Option<String>,
    /// Benchmark rows, e.g. `fbp,sart,dgr:0.9/0/0.1`, or `all`.
    #[arg(long)]
    rows: Option<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = Vec::new();
        let flags = [
            ("dataset", &self.dataset),
            ("method", &self.method),
            ("views", &self.views),
            ("snr_db", &self.snr_db),
            ("image_size", &self.image_size),
            ("seeds", &self.seeds),
            ("out", &self.out),
            ("dgr_iterations", &self.iterations),
            ("dgr_lr", &self.lr),
            ("dgr_weights", &self.weights),
            ("dgr_net", &self.net),
            ("archs", &self.archs),
            ("rows", &self.rows),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                overrides.push((k.to_string(), v.clone()));
            }
        }
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{s}`"))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Args)]
struct ProfileArgs {
    /// `PHANTOM:METHOD=PATH`; repeat for every image.
    #[arg(long = "image", required = true)]
    images: Vec<String>,
    /// Image row to profile.
    #[arg(long)]
    row: usize,
    /// Feature ROI `row0,col0,rows,cols` for every phantom.
    #[arg(long)]
    feature: Option<String>,
    /// Background ROI `row0,col0,rows,cols` for every phantom.
    #[arg(long)]
    background: Option<String>,
    /// Per-phantom ROIs `PHANTOM=FEATURE/BACKGROUND`.
    #[arg(long = "roi")]
    rois: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run_profile(a: &ProfileArgs) -> Result<()> {
    let images = a
        .images
        .iter()
        .map(|s| {
            let (label, path) = s
                .split_once('=')
                .ok_or_else(|| anyhow!("--image expects PHANTOM:METHOD=PATH, got `{s}`"))?;
            let (p, m) = label
                .split_once(':')
                .ok_or_else(|| anyhow!("--image label must be PHANTOM:METHOD, got `{label}`"))?;
            Ok((p.to_string(), m.to_string(), PathBuf::from(path)))
        })
        .collect::<Result<Vec<_>>>()?;
    let default = match (&a.feature, &a.background) {
        (Some(f), Some(b)) => Some((parse_roi(f)?, parse_roi(b)?)),
        (None, None) => None,
        _ => bail!("--feature and --background must be given together"),
    };
    let per_phantom = a
        .rois
        .iter()
        .map(|s| {
            let (p, rest) = s.split_once('=').ok_or_else(|| anyhow!("--roi expects PHANTOM=FEATURE/BACKGROUND"))?;
            let (f, b) = rest.split_once('/').ok_or_else(|| anyhow!("--roi expects PHANTOM=FEATURE/BACKGROUND"))?;
            Ok((p.to_string(), parse_roi(f)?, parse_roi(b)?))
        })
        .collect::<Result<Vec<_>>>()?;
    commands::profile(&a.out, &images, a.row, &RoiSpec { default, per_phantom })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Reconstruct(c) => commands::reconstruct(&c.load()?),
        Command::Benchmark(c) => commands::benchmark(&c.load()?),
        Command::Curves(c) => commands::curves(&c.load()?),
        Command::Phantom(c) => commands::phantom(&c.load()?),
        Command::Project { common, input } => commands::project(&common.load()?, input.as_deref()),
        Command::Profile(a) => run_profile(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
