//! Subcommand implementations. Every artifact is written atomically
//! (temp file + rename) into the output directory.

use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use rayon::prelude::*;

use cubetop_core::cubical::InfiniteMode;
use cubetop_core::detect::{self, MarkedPointSet};
use cubetop_core::imagio::{self, ImageFrame, Rect, RegionSpec};
use cubetop_core::stats::{self, GofConfig};
use cubetop_core::summaries::SummaryStatistic;
use cubetop_core::synth;

use crate::config::Config;

pub struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Outputs { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes bytes under a temporary name and renames into place.
    pub fn write(&self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        let tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .with_context(|| format!("creating temp file in {}", self.dir.display()))?;
        std::fs::write(tmp.path(), bytes)
            .with_context(|| format!("writing {}", tmp.path().display()))?;
        tmp.persist(&path)
            .with_context(|| format!("renaming into {}", path.display()))?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut bytes = serde_json::to_vec(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// PGM written through the same temp-and-rename path.
    pub fn write_pgm(&self, name: &str, frame: &ImageFrame, maxval: u32) -> anyhow::Result<PathBuf> {
        let tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        imagio::write_pgm(frame, maxval, tmp.path())?;
        let path = self.path(name);
        tmp.persist(&path)
            .with_context(|| format!("renaming into {}", path.display()))?;
        info!("wrote {}", path.display());
        Ok(path)
    }
}

fn observed_frame(config: &Config) -> anyhow::Result<ImageFrame> {
    let stack = config.load_stack()?;
    let frame = imagio::sum_frames(&stack, config.m(), config.ell())?;
    Ok(frame)
}

fn run_detect_pipeline(config: &Config, frame: &ImageFrame) -> anyhow::Result<MarkedPointSet> {
    let mut points = detect::detect(
        frame,
        &config.region(),
        config.sigma(),
        config.eta(),
        config.infinite_mode(),
    )?;
    points.frame_index = Some(config.ell());
    Ok(points)
}

pub fn detect_cmd(config: &Config, out: &Outputs) -> anyhow::Result<()> {
    let frame = observed_frame(config)?;
    let points = run_detect_pipeline(config, &frame)?;
    let mut csv = Vec::new();
    points.write_csv(&mut csv)?;
    out.write("detection.csv", &csv)?;
    if config.params.overlay.unwrap_or(false) {
        let maxval = frame.max_value().round().max(1.0) as u32;
        let mut overlay = frame.clone();
        for p in &points.points {
            overlay.set(p.pixel.x as usize, p.pixel.y as usize, maxval as f64);
        }
        out.write_pgm("overlay.pgm", &overlay, maxval)?;
    }
    println!("detect: {} features (sigma={}, eta={})", points.len(), config.sigma(), config.eta());
    Ok(())
}

pub fn summarize_cmd(config: &Config, out: &Outputs) -> anyhow::Result<()> {
    let stack = config.load_stack()?;
    let m = config.m();
    let stride = config.params.stride.unwrap_or(1).max(1);
    let statistics = config.statistics();
    let region = config.region();
    let windows: Vec<usize> = (0..=stack.frame_count().saturating_sub(m))
        .step_by(stride)
        .collect();

    let per_window: Vec<Vec<(usize, SummaryStatistic, f64)>> = windows
        .par_iter()
        .map(|&ell| -> anyhow::Result<Vec<(usize, SummaryStatistic, f64)>> {
            let frame = imagio::sum_frames(&stack, m, ell)?;
            let points = detect::detect(
                &frame,
                &region,
                config.sigma(),
                config.eta(),
                config.infinite_mode(),
            )?;
            let mut rows = Vec::with_capacity(statistics.len());
            for stat in &statistics {
                let value = stat.evaluate(&points).unwrap_or(f64::NAN);
                rows.push((ell, *stat, value));
            }
            Ok(rows)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let rows: Vec<(usize, SummaryStatistic, f64)> = per_window.into_iter().flatten().collect();
    let mut csv = Vec::new();
    cubetop_core::summaries::write_timeseries_csv(&rows, &mut csv)?;
    out.write("summary.csv", &csv)?;
    println!(
        "summarize: {} windows x {} statistics",
        windows.len(),
        statistics.len()
    );
    Ok(())
}

pub fn gof_cmd(config: &Config, out: &Outputs, cli_seed: Option<u64>) -> anyhow::Result<()> {
    let stack = config.load_stack()?;
    let frame = imagio::sum_frames(&stack, config.m(), config.ell())?;
    let region = config.region();
    let rect = region
        .rect
        .unwrap_or_else(|| Rect::full(frame.width(), frame.height()));
    let model = config.build_null_model(Some(&stack), rect.width(), rect.height(), cli_seed)?;
    let gof = GofConfig {
        sigma: config.sigma(),
        eta: config.eta(),
        statistic: config.statistic(),
        infinite_mode: config.infinite_mode(),
        n: config.n(),
        alpha: config.alpha(),
    };
    let report = stats::gof_test(&frame, &region, &gof, &model)?;
    out.write_json("gof.json", &report)?;
    println!(
        "gof: statistic={} observed={} p={} (n={})",
        report.statistic, report.observed, report.p_value, report.n
    );
    Ok(())
}

pub fn multitest_cmd(config: &Config, out: &Outputs, cli_seed: Option<u64>) -> anyhow::Result<()> {
    let stack = config.load_stack()?;
    let m = config.params.m.unwrap_or(5);
    let n_windows = stack.frame_count() / m;
    anyhow::ensure!(n_windows >= 1, "stack shorter than one window of m = {m}");
    let region = config.region();
    let rect = region
        .rect
        .unwrap_or_else(|| Rect::full(stack.width(), stack.height()));
    let model = config.build_null_model(Some(&stack), rect.width(), rect.height(), cli_seed)?;
    let statistic = config.statistic();
    let sigma = config.sigma();
    let eta = config.eta();
    let mode = config.infinite_mode();

    // Observed statistic for each window in the disjoint summed series.
    let observed: Vec<f64> = (0..n_windows)
        .into_par_iter()
        .map(|k| -> anyhow::Result<f64> {
            let frame = imagio::sum_frames(&stack, m, k * m)?;
            let points = detect::detect(&frame, &region, sigma, eta, mode)?;
            Ok(statistic.evaluate(&points).unwrap_or(f64::NEG_INFINITY))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    // One shared pool of null statistics reused across every hypothesis.
    let local_region = RegionSpec {
        polygon: region.polygon.as_ref().map(|poly| {
            poly.iter()
                .map(|[x, y]| [x - rect.x0 as f64, y - rect.y0 as f64])
                .collect()
        }),
        rect: None,
    };
    let pool: Vec<f64> = (0..config.n() as u64)
        .into_par_iter()
        .map(|replicate| -> anyhow::Result<f64> {
            let image = stats::generate_null_image(&model, replicate);
            let points = detect::detect(&image, &local_region, sigma, eta, mode)?;
            Ok(statistic.evaluate(&points).unwrap_or(f64::NEG_INFINITY))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let report = stats::multi_test(&observed, &pool, config.alpha());
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write("multitest.csv", &csv)?;
    println!(
        "multitest: {} of {} windows rejected at alpha={} (statistic={})",
        report.n_rejected,
        report.n_hypotheses,
        report.alpha,
        statistic.name()
    );
    Ok(())
}

pub fn simulate_cmd(config: &Config, out: &Outputs, cli_seed: Option<u64>) -> anyhow::Result<()> {
    let sim = config
        .simulate
        .as_ref()
        .context("config field `simulate` is required for this subcommand")?;
    let eta = sim.eta.unwrap_or(0.0);
    let mode = sim.infinite_mode.unwrap_or(InfiniteMode::MaxFiniteDeath);
    let master_seed = config.seed(cli_seed);

    let truth = synth::render_truth(&sim.truth)?;
    let counts_max = (sim.truth.dose * truth.max_value()).round().max(1.0) as u32;
    out.write_pgm("truth.pgm", &scale_to(&truth, counts_max), counts_max)?;

    let region = RegionSpec::default();
    let mut csv = String::from("sigma,seed,count,hausdorff,pearson\n");
    for &sigma in &sim.sigmas {
        let clean = detect::detect(&truth, &region, sigma, eta, mode)?;
        for &seed in &sim.seeds {
            let noisy = synth::add_shot_noise(&truth, sim.truth.dose, master_seed ^ seed, seed)?;
            if sigma == sim.sigmas[0] {
                out.write_pgm(&format!("noisy_{seed:04}.pgm"), &noisy, counts_max.max(noisy.max_value() as u32))?;
            }
            let recovered = detect::detect(&noisy, &region, sigma, eta, mode)?;
            let hausdorff = if recovered.is_empty() || clean.is_empty() {
                f64::NAN
            } else {
                synth::hausdorff(&clean.locations(), &recovered.locations())?
            };
            let pearson = synth::matched_intensity_correlation(&clean, &recovered)
                .unwrap_or(f64::NAN);
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                sigma,
                seed,
                recovered.len(),
                hausdorff,
                pearson
            ));
        }
    }
    out.write("recovery.csv", csv.as_bytes())?;
    println!(
        "simulate: {} sigmas x {} seeds scored against {} true peaks",
        sim.sigmas.len(),
        sim.seeds.len(),
        sim.truth.centers.len()
    );
    Ok(())
}

fn scale_to(frame: &ImageFrame, maxval: u32) -> ImageFrame {
    let max = frame.max_value().max(1e-300);
    ImageFrame::from_fn(frame.width(), frame.height(), |x, y| {
        (frame.get(x, y) / max * maxval as f64).round()
    })
}

#[derive(serde::Serialize)]
struct DiagnoseReport {
    lambda: f64,
    dkw_pooled: stats::DkwReport,
    /// The same KS distance judged at the single-frame sample size.
    dkw_single_frame: stats::DkwReport,
}

pub fn diagnose_cmd(config: &Config, out: &Outputs) -> anyhow::Result<()> {
    let stack = config.load_stack()?;
    let vacuum = config.vacuum_rect()?;
    let lambda = stats::fit_lambda(&stack, vacuum)?;

    let mut sample = Vec::with_capacity(vacuum.area() * stack.frame_count());
    for frame in stack.frames() {
        for y in vacuum.y0..vacuum.y1 {
            for x in vacuum.x0..vacuum.x1 {
                sample.push(frame.get(x, y).round() as u64);
            }
        }
    }
    let pooled = stats::dkw_test(&sample, lambda)?;
    let single = stats::DkwReport {
        ks: pooled.ks,
        n_samples: vacuum.area() as u64,
        p_value: stats::dkw_pvalue_from_ks(pooled.ks, vacuum.area() as f64),
    };
    let report = DiagnoseReport {
        lambda,
        dkw_pooled: pooled,
        dkw_single_frame: single,
    };
    out.write_json("diagnose.json", &report)?;

    let max_lag = config
        .params
        .max_lag
        .unwrap_or_else(|| 50.min(stack.frame_count().saturating_sub(1)));
    if max_lag >= 1 && stack.frame_count() > max_lag {
        let auto = stats::mean_autocorrelation(&stack, vacuum, max_lag)?;
        let mut csv = String::from("lag,rho,null_sd\n");
        for (h, rho) in auto.rho.iter().enumerate() {
            csv.push_str(&format!("{},{},{}\n", h + 1, rho, auto.null_sd));
        }
        out.write("autocorrelation.csv", csv.as_bytes())?;
    }

    let frame = imagio::sum_frames(&stack, config.m().min(stack.frame_count()), 0)?;
    let bins = stats::semivariogram(&frame, vacuum, config.params.bins.unwrap_or(15))?;
    let mut csv = String::from("bin,lo,hi,pairs,gamma\n");
    for (l, bin) in bins.iter().enumerate() {
        let gamma = bin
            .gamma
            .map(|g| g.to_string())
            .unwrap_or_else(|| "nan".to_string());
        csv.push_str(&format!("{},{},{},{},{}\n", l, bin.lo, bin.hi, bin.pairs, gamma));
    }
    out.write("semivariogram.csv", csv.as_bytes())?;

    println!(
        "diagnose: lambda={} ks={} p(pooled)={}",
        report.lambda, report.dkw_pooled.ks, report.dkw_pooled.p_value
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct ThresholdReport {
    t_star: f64,
}

pub fn threshold_cmd(config: &Config, out: &Outputs) -> anyhow::Result<()> {
    let frame = observed_frame(config)?;
    let result = detect::pd_threshold(&frame)?;
    out.write_json("threshold.json", &ThresholdReport { t_star: result.t_star })?;
    let tmp = tempfile::NamedTempFile::new_in(out.path("").parent().unwrap_or(Path::new(".")))?;
    detect::write_binary_pgm(&result.mask, tmp.path())?;
    tmp.persist(out.path("binary.pgm"))?;
    println!("threshold: t*={}", result.t_star);
    Ok(())
}
