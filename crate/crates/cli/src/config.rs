//! Run configuration: a single JSON document per run. Parameters default to
//! the values used throughout the reference analyses (m = 10, n = 9999,
//! sigma = 2, alpha = 0.05) and eta defaults to the documented t(sigma)
//! lookup t(2) = 1, t(4) = 0.4, t(6) = 0.1 (0 elsewhere).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use cubetop_core::cubical::InfiniteMode;
use cubetop_core::imagio::{self, ImageStack, RegionSpec, StackFormat};
use cubetop_core::stats::NullModel;
use cubetop_core::summaries::SummaryStatistic;
use cubetop_core::synth::GroundTruthSpec;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Where the frame stack lives.
    pub input: Option<InputConfig>,
    /// Analysis region: polygon `R` and/or rectangular subimage window.
    pub region: Option<RegionSpec>,
    /// Vacuum window `U`; only the rectangle is used.
    pub vacuum: Option<RegionSpec>,
    #[serde(default)]
    pub params: Params,
    pub null_model: Option<NullModelConfig>,
    pub simulate: Option<SimulateConfig>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub format: StackFormat,
    pub path: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub sigma: Option<f64>,
    pub eta: Option<f64>,
    pub m: Option<usize>,
    pub ell: Option<usize>,
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub infinite_mode: Option<InfiniteMode>,
    pub statistic: Option<SummaryStatistic>,
    pub statistics: Option<Vec<SummaryStatistic>>,
    /// Window stride for `summarize` (1 = every window).
    pub stride: Option<usize>,
    pub max_lag: Option<usize>,
    pub bins: Option<usize>,
    /// Emit an overlay PGM from `detect`.
    pub overlay: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NullModelConfig {
    /// i.i.d. Poisson; `lambda` is the per-frame rate (fitted from the
    /// vacuum window when absent) and is scaled by `m`.
    Poisson {
        lambda: Option<f64>,
        m: Option<usize>,
        seed: Option<u64>,
    },
    /// Draws from a pixel pool: either a `pool_file` (one value per line)
    /// or the summed vacuum windows of the input stack.
    Empirical {
        pool_file: Option<PathBuf>,
        m: Option<usize>,
        seed: Option<u64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub truth: GroundTruthSpec,
    pub seeds: Vec<u64>,
    pub sigmas: Vec<f64>,
    pub eta: Option<f64>,
    pub infinite_mode: Option<InfiniteMode>,
}

/// The documented eta default per smoothing level.
pub fn eta_lookup(sigma: f64) -> f64 {
    if sigma == 2.0 {
        1.0
    } else if sigma == 4.0 {
        0.4
    } else if sigma == 6.0 {
        0.1
    } else {
        0.0
    }
}

impl Config {
    /// Parses the config, reporting schema violations with field paths.
    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut de = serde_json::Deserializer::from_str(&text);
        let config: Config = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| anyhow::anyhow!("config field `{}`: {}", e.path(), e.inner()))?;
        Ok(config)
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma.unwrap_or(2.0)
    }

    pub fn eta(&self) -> f64 {
        self.params.eta.unwrap_or_else(|| eta_lookup(self.sigma()))
    }

    pub fn m(&self) -> usize {
        self.params.m.unwrap_or(10)
    }

    pub fn ell(&self) -> usize {
        self.params.ell.unwrap_or(0)
    }

    pub fn n(&self) -> usize {
        self.params.n.unwrap_or(9999)
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha.unwrap_or(0.05)
    }

    pub fn infinite_mode(&self) -> InfiniteMode {
        self.params.infinite_mode.unwrap_or(InfiniteMode::MaxPixelValue)
    }

    pub fn statistic(&self) -> SummaryStatistic {
        self.params.statistic.unwrap_or(SummaryStatistic::Alps)
    }

    pub fn statistics(&self) -> Vec<SummaryStatistic> {
        self.params
            .statistics
            .clone()
            .unwrap_or_else(|| vec![SummaryStatistic::Entropy, SummaryStatistic::Alps])
    }

    pub fn region(&self) -> RegionSpec {
        self.region.clone().unwrap_or_default()
    }

    pub fn seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed.or(self.seed).unwrap_or(0)
    }

    pub fn load_stack(&self) -> anyhow::Result<ImageStack> {
        let input = self
            .input
            .as_ref()
            .context("config field `input` is required for this subcommand")?;
        imagio::load_stack(&input.path, input.format)
            .with_context(|| format!("loading stack from {}", input.path.display()))
    }

    pub fn vacuum_rect(&self) -> anyhow::Result<cubetop_core::imagio::Rect> {
        self.vacuum
            .as_ref()
            .and_then(|v| v.rect)
            .context("config field `vacuum.rect` is required for this subcommand")
    }

    /// Builds the null model for the window dimensions, fitting lambda or
    /// assembling the empirical pool from the stack when needed.
    pub fn build_null_model(
        &self,
        stack: Option<&ImageStack>,
        width: usize,
        height: usize,
        cli_seed: Option<u64>,
    ) -> anyhow::Result<NullModel> {
        let fallback_seed = self.seed(cli_seed);
        let model_cfg = self
            .null_model
            .as_ref()
            .context("config field `null_model` is required for this subcommand")?;
        match model_cfg {
            NullModelConfig::Poisson { lambda, m, seed } => {
                let m = m.unwrap_or_else(|| self.m());
                let lambda = match lambda {
                    Some(l) => *l,
                    None => {
                        let stack = stack.context(
                            "null_model.lambda absent: an input stack and vacuum are needed to fit it",
                        )?;
                        cubetop_core::stats::fit_lambda(stack, self.vacuum_rect()?)?
                    }
                };
                let seed = cli_seed.or(*seed).or(self.seed).unwrap_or(0);
                Ok(NullModel::poisson(lambda * m as f64, width, height, seed)?)
            }
            NullModelConfig::Empirical { pool_file, m, seed } => {
                let pool = match pool_file {
                    Some(path) => read_pool_file(path)?,
                    None => {
                        let stack = stack.context(
                            "null_model.pool_file absent: an input stack and vacuum are needed to build the pool",
                        )?;
                        summed_vacuum_pool(stack, self.vacuum_rect()?, m.unwrap_or_else(|| self.m()))?
                    }
                };
                let seed = cli_seed.or(*seed).or(Some(fallback_seed)).unwrap_or(0);
                Ok(NullModel::empirical(pool, width, height, seed)?)
            }
        }
    }
}

fn read_pool_file(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading pool file {}", path.display()))?;
    let mut pool = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .with_context(|| format!("pool file line {}: {:?}", lineno + 1, line))?;
        pool.push(v);
    }
    if pool.is_empty() {
        bail!("pool file {} holds no values", path.display());
    }
    Ok(pool)
}

/// Pixel pool of the disjoint summed windows `I_{m, mk}` over the vacuum
/// rectangle.
fn summed_vacuum_pool(
    stack: &ImageStack,
    vacuum: cubetop_core::imagio::Rect,
    m: usize,
) -> anyhow::Result<Vec<f64>> {
    let windows = stack.frame_count() / m;
    if windows == 0 {
        bail!(
            "stack of {} frames is shorter than one window of m = {m}",
            stack.frame_count()
        );
    }
    let mut pool = Vec::with_capacity(windows * vacuum.area());
    for k in 0..windows {
        let frame = imagio::sum_frames(stack, m, k * m)?;
        for y in vacuum.y0..vacuum.y1 {
            for x in vacuum.x0..vacuum.x1 {
                pool.push(frame.get(x, y));
            }
        }
    }
    Ok(pool)
}
