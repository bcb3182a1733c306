//! Poisson null model, goodness-of-fit diagnostics, Monte Carlo hypothesis
//! tests, and the shared-null Benjamini-Hochberg procedure.
//!
//! Null images are generated pixel-by-pixel from counter-based streams
//! keyed on `(seed, replicate, pixel)`, so replicates can be evaluated on
//! any number of threads in any order and still reproduce bit-identically.

use std::io::Write;

use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::DiscreteCDF;

use crate::cubical::InfiniteMode;
use crate::detect;
use crate::error::{Error, Result};
use crate::imagio::{ImageFrame, ImageStack, Rect, RegionSpec};
use crate::rng;
use crate::summaries::SummaryStatistic;

// ---------------------------------------------------------------------------
// Null model
// ---------------------------------------------------------------------------

/// Pixel distribution under the no-signal hypothesis.
#[derive(Debug, Clone)]
pub enum NullKind {
    /// i.i.d. Poisson with the summed-frame parameter `lambda_m = m * lambda`.
    Poisson { lambda_m: f64 },
    /// Uniform draws with replacement from an observed pixel pool.
    Empirical { pool: Vec<f64> },
}

/// A null model for one rectangular window.
#[derive(Debug, Clone)]
pub struct NullModel {
    pub kind: NullKind,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl NullModel {
    pub fn poisson(lambda_m: f64, width: usize, height: usize, seed: u64) -> Result<Self> {
        if !lambda_m.is_finite() || lambda_m < 0.0 {
            return Err(Error::InvalidParameter(format!("lambda_m = {lambda_m}")));
        }
        Ok(NullModel { kind: NullKind::Poisson { lambda_m }, width, height, seed })
    }

    pub fn empirical(pool: Vec<f64>, width: usize, height: usize, seed: u64) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::InvalidParameter("empty empirical pool".to_string()));
        }
        if let Some(bad) = pool.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!("pool value {bad}")));
        }
        Ok(NullModel { kind: NullKind::Empirical { pool }, width, height, seed })
    }
}

/// Draws one replicate image. Deterministic in `(model.seed, replicate)`
/// and independent of evaluation order.
///
/// Sampling is by cdf-table inversion below the rate 30 (one uniform per
/// pixel) and by rejection above it.
pub fn generate_null_image(model: &NullModel, replicate: u64) -> ImageFrame {
    let (w, h) = (model.width, model.height);
    match &model.kind {
        NullKind::Poisson { lambda_m } => {
            if *lambda_m == 0.0 {
                return ImageFrame::filled(w, h, 0.0);
            }
            if *lambda_m < 30.0 {
                let cdf = poisson_cdf_table(*lambda_m);
                return ImageFrame::from_fn(w, h, |x, y| {
                    let mut stream = rng::stream(model.seed, replicate, (y * w + x) as u64);
                    let u = stream.next_f64();
                    cdf.partition_point(|&c| c <= u) as f64
                });
            }
            let poisson = rand_distr::Poisson::new(*lambda_m).expect("validated lambda");
            ImageFrame::from_fn(w, h, |x, y| {
                let mut stream = rng::stream(model.seed, replicate, (y * w + x) as u64);
                poisson.sample(&mut stream)
            })
        }
        NullKind::Empirical { pool } => ImageFrame::from_fn(w, h, |x, y| {
            let mut stream = rng::stream(model.seed, replicate, (y * w + x) as u64);
            pool[stream.gen_range(0..pool.len())]
        }),
    }
}

/// Cumulative Poisson probabilities out to a sub-1e-16 tail; inversion of a
/// uniform against this table is an exact sampler at f64 resolution.
fn poisson_cdf_table(lambda: f64) -> Vec<f64> {
    let mut table = Vec::with_capacity(2 * lambda as usize + 32);
    let mut pmf = (-lambda).exp();
    let mut cum = pmf;
    table.push(cum);
    let mut k = 0u32;
    while 1.0 - cum > 1e-16 && k < 4096 {
        k += 1;
        pmf *= lambda / k as f64;
        cum += pmf;
        table.push(cum);
    }
    table
}

/// Maximum-likelihood Poisson rate: the grand mean of the vacuum pixels
/// over every frame of the stack.
pub fn fit_lambda(stack: &ImageStack, vacuum: Rect) -> Result<f64> {
    vacuum.check_within(stack.width(), stack.height())?;
    let mut total = 0.0;
    for frame in stack.frames() {
        for y in vacuum.y0..vacuum.y1 {
            for x in vacuum.x0..vacuum.x1 {
                total += frame.get(x, y);
            }
        }
    }
    Ok(total / (vacuum.area() * stack.frame_count()) as f64)
}

// ---------------------------------------------------------------------------
// DKW goodness of fit
// ---------------------------------------------------------------------------

/// Kolmogorov-Smirnov distance against a fitted Poisson, with the DKW
/// p-value bound.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DkwReport {
    pub ks: f64,
    pub n_samples: u64,
    pub p_value: f64,
}

/// `min(1, 2 exp(-2 n ks^2))`. The sample size enters explicitly: the
/// pooled size `|U| N` and the per-frame size `|U|` give different answers
/// and callers must choose.
pub fn dkw_pvalue_from_ks(ks: f64, n_samples: f64) -> f64 {
    (2.0 * (-2.0 * n_samples * ks * ks).exp()).min(1.0)
}

/// Sup distance over the nonnegative integers between the sample's
/// empirical cdf and the Poisson(`lambda`) cdf, evaluated out to where both
/// cdfs exceed `1 - 1e-12`.
pub fn dkw_test(sample: &[u64], lambda: f64) -> Result<DkwReport> {
    if sample.is_empty() {
        return Err(Error::InvalidParameter("empty sample".to_string()));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
    }
    let max_sample = *sample.iter().max().unwrap();
    let n = sample.len() as f64;
    let mut histogram = vec![0u64; max_sample as usize + 1];
    for &v in sample {
        histogram[v as usize] += 1;
    }

    let poisson_cdf: Box<dyn Fn(u64) -> f64> = if lambda == 0.0 {
        Box::new(|_| 1.0)
    } else {
        let p = statrs::distribution::Poisson::new(lambda)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Box::new(move |k| p.cdf(k))
    };

    let mut ks = 0.0f64;
    let mut cum = 0u64;
    let mut k = 0u64;
    loop {
        if let Some(c) = histogram.get(k as usize) {
            cum += c;
        }
        let empirical = cum as f64 / n;
        let fitted = poisson_cdf(k);
        ks = ks.max((empirical - fitted).abs());
        let both_saturated = empirical > 1.0 - 1e-12 && fitted > 1.0 - 1e-12;
        if k >= max_sample && both_saturated {
            break;
        }
        k += 1;
    }
    Ok(DkwReport {
        ks,
        n_samples: sample.len() as u64,
        p_value: dkw_pvalue_from_ks(ks, n),
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo p-values
// ---------------------------------------------------------------------------

/// One Monte Carlo test. Serializes to the report JSON
/// `{statistic, observed, p_value, n, alpha, ci, seed}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TestReport {
    pub statistic: String,
    pub observed: f64,
    pub p_value: f64,
    pub n: usize,
    pub alpha: f64,
    pub ci: [f64; 2],
    pub seed: u64,
    /// Replicates on which the statistic was undefined (counted as never
    /// exceeding the observed value). Not part of the report format.
    #[serde(skip)]
    pub undefined_replicates: usize,
}

/// Half-width `q_{alpha,n} = sqrt(-ln(alpha/2) / (2n)) + 1/n` of the
/// at-least-`1-alpha` confidence interval around a Monte Carlo p-value.
pub fn mc_ci_halfwidth(alpha: f64, n: usize) -> f64 {
    (-(alpha / 2.0).ln() / (2.0 * n as f64)).sqrt() + 1.0 / n as f64
}

impl TestReport {
    /// The half-width the interval was built from.
    pub fn ci_halfwidth(&self) -> f64 {
        mc_ci_halfwidth(self.alpha, self.n)
    }
}

/// Monte Carlo p-value `(1 + #{T_i >= t}) / (n+1)` with its confidence
/// interval. Undefined replicates are encoded as `-inf` by callers and can
/// never reach the observed value.
pub fn mc_pvalue(
    statistic: &str,
    observed: f64,
    null_samples: &[f64],
    alpha: f64,
    seed: u64,
) -> TestReport {
    let n = null_samples.len();
    let exceed = null_samples.iter().filter(|&&t| t >= observed).count();
    let p = (1 + exceed) as f64 / (n + 1) as f64;
    let q = mc_ci_halfwidth(alpha, n);
    TestReport {
        statistic: statistic.to_string(),
        observed,
        p_value: p,
        n,
        alpha,
        ci: [(p - q).max(0.0), (p + q).min(1.0)],
        seed,
        undefined_replicates: null_samples
            .iter()
            .filter(|t| t.is_infinite() && **t < 0.0)
            .count(),
    }
}

/// Parameters of one goodness-of-fit run.
#[derive(Debug, Clone)]
pub struct GofConfig {
    pub sigma: f64,
    pub eta: f64,
    pub statistic: SummaryStatistic,
    pub infinite_mode: InfiniteMode,
    pub n: usize,
    pub alpha: f64,
}

fn evaluate_or_undefined(
    statistic: SummaryStatistic,
    points: &detect::MarkedPointSet,
) -> Result<Option<f64>> {
    match statistic.evaluate(points) {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyLifetimes)
        | Err(Error::ZeroTotalLifetime)
        | Err(Error::ZeroVariance(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs the detection pipeline on the observed frame and on `n` null
/// replicates, and ranks the observed statistic among the replicates.
/// All statistics reject for large values. Replicates are evaluated in
/// parallel; results are keyed by replicate index, so reports are
/// bit-identical across thread counts.
pub fn gof_test(
    frame: &ImageFrame,
    region: &RegionSpec,
    config: &GofConfig,
    model: &NullModel,
) -> Result<TestReport> {
    let rect = region
        .rect
        .unwrap_or_else(|| Rect::full(frame.width(), frame.height()));
    if (model.width, model.height) != (rect.width(), rect.height()) {
        return Err(Error::DimensionMismatch {
            expected: (rect.width(), rect.height()),
            found: (model.width, model.height),
        });
    }

    let observed_points =
        detect::detect(frame, region, config.sigma, config.eta, config.infinite_mode)?;
    let observed = evaluate_or_undefined(config.statistic, &observed_points)?
        .ok_or_else(|| Error::UndefinedStatistic(config.statistic.name().to_string()))?;

    // Null replicates live on the subimage window; shift the polygon into
    // window coordinates so the pipeline is identical to the observed one.
    let local_region = RegionSpec {
        polygon: region.polygon.as_ref().map(|poly| {
            poly.iter()
                .map(|[x, y]| [x - rect.x0 as f64, y - rect.y0 as f64])
                .collect()
        }),
        rect: None,
    };

    let null_stats: Vec<f64> = (0..config.n as u64)
        .into_par_iter()
        .map(|replicate| -> Result<f64> {
            let image = generate_null_image(model, replicate);
            let points = detect::detect(
                &image,
                &local_region,
                config.sigma,
                config.eta,
                config.infinite_mode,
            )?;
            Ok(evaluate_or_undefined(config.statistic, &points)?.unwrap_or(f64::NEG_INFINITY))
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(mc_pvalue(
        config.statistic.name(),
        observed,
        &null_stats,
        config.alpha,
        model.seed,
    ))
}

// ---------------------------------------------------------------------------
// Spatio-temporal diagnostics
// ---------------------------------------------------------------------------

/// Mean per-pixel autocorrelations over a vacuum window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutocorrelationReport {
    /// `rho[h-1]` is the mean autocorrelation at lag `h`.
    pub rho: Vec<f64>,
    /// Standard deviation `1/sqrt(|U| N)` of the mean under independence.
    pub null_sd: f64,
    /// Pixels with constant series, excluded from the averages.
    pub excluded_pixels: usize,
}

/// Per-pixel biased (1/N) sample autocorrelations at lags `1..=max_lag`,
/// averaged over the vacuum pixels. Constant pixel series are excluded and
/// counted.
pub fn mean_autocorrelation(
    stack: &ImageStack,
    vacuum: Rect,
    max_lag: usize,
) -> Result<AutocorrelationReport> {
    vacuum.check_within(stack.width(), stack.height())?;
    let n = stack.frame_count();
    if max_lag == 0 || max_lag >= n {
        return Err(Error::InvalidParameter(format!(
            "max_lag {max_lag} with {n} frames"
        )));
    }

    let mut sums = vec![0.0f64; max_lag];
    let mut included = 0usize;
    let mut excluded = 0usize;
    let mut series = vec![0.0f64; n];
    for y in vacuum.y0..vacuum.y1 {
        for x in vacuum.x0..vacuum.x1 {
            for (k, frame) in stack.frames().iter().enumerate() {
                series[k] = frame.get(x, y);
            }
            let mean = series.iter().sum::<f64>() / n as f64;
            let c0: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum();
            if c0 == 0.0 {
                excluded += 1;
                continue;
            }
            included += 1;
            for (h, slot) in sums.iter_mut().enumerate() {
                let lag = h + 1;
                let mut ch = 0.0;
                for k in 0..n - lag {
                    ch += (series[k] - mean) * (series[k + lag] - mean);
                }
                *slot += ch / c0;
            }
        }
    }
    if included == 0 {
        return Err(Error::ZeroVariance(
            "every vacuum pixel series is constant".to_string(),
        ));
    }
    Ok(AutocorrelationReport {
        rho: sums.iter().map(|s| s / included as f64).collect(),
        null_sd: 1.0 / ((vacuum.area() * n) as f64).sqrt(),
        excluded_pixels: excluded,
    })
}

/// One distance bin of the empirical semivariogram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemivariogramBin {
    pub lo: f64,
    pub hi: f64,
    /// Ordered pixel pairs falling in the bin.
    pub pairs: u64,
    /// Absent when the bin is empty.
    pub gamma: Option<f64>,
}

/// Empirical semivariogram of one frame over a vacuum window, with distance
/// bins `[4l/3, 4l/3 + 4/3)` for `l = 0..bins`.
pub fn semivariogram(
    frame: &ImageFrame,
    vacuum: Rect,
    bins: usize,
) -> Result<Vec<SemivariogramBin>> {
    vacuum.check_within(frame.width(), frame.height())?;
    if bins == 0 {
        return Err(Error::InvalidParameter("bins = 0".to_string()));
    }
    let max_dist = 4.0 * bins as f64 / 3.0;
    let reach = max_dist.ceil() as i64;
    let (uw, uh) = (vacuum.width() as i64, vacuum.height() as i64);

    let mut sums = vec![0.0f64; bins];
    let mut counts = vec![0u64; bins];
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if dx == 0 && dy == 0 {
                continue;
            }
            let dist = ((dx * dx + dy * dy) as f64).sqrt();
            if dist >= max_dist {
                continue;
            }
            let bin = (dist * 0.75) as usize;
            let nx = uw - dx.abs();
            let ny = uh - dy.abs();
            if nx <= 0 || ny <= 0 {
                continue;
            }
            // Ordered pairs: each (dx, dy) and its negation both count.
            let x_range = if dx >= 0 { 0..nx } else { -dx..uw };
            let y_range = if dy >= 0 { 0..ny } else { -dy..uh };
            let mut acc = 0.0;
            for y in y_range {
                for x in x_range.clone() {
                    let a = frame.get(
                        (vacuum.x0 as i64 + x) as usize,
                        (vacuum.y0 as i64 + y) as usize,
                    );
                    let b = frame.get(
                        (vacuum.x0 as i64 + x + dx) as usize,
                        (vacuum.y0 as i64 + y + dy) as usize,
                    );
                    acc += (a - b) * (a - b);
                }
            }
            sums[bin] += acc;
            counts[bin] += (nx * ny) as u64;
        }
    }

    Ok((0..bins)
        .map(|l| SemivariogramBin {
            lo: 4.0 * l as f64 / 3.0,
            hi: 4.0 * (l + 1) as f64 / 3.0,
            pairs: counts[l],
            gamma: (counts[l] > 0).then(|| sums[l] / (2.0 * counts[l] as f64)),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Multiple testing
// ---------------------------------------------------------------------------

/// One hypothesis in a multiple-testing report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MultiTestRow {
    /// Original hypothesis index.
    pub index: usize,
    pub p_value: f64,
    /// Rank among the sorted p-values, 1-based; ties break by index.
    pub rank: usize,
    /// Rejection threshold `rank * alpha / (N C_N)`.
    pub threshold: f64,
    pub rejected: bool,
}

/// Outcome of the shared-null Benjamini-Hochberg procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiTestReport {
    pub alpha: f64,
    pub n_hypotheses: usize,
    pub c_n: f64,
    pub n_rejected: usize,
    /// Rows in rank order.
    pub rows: Vec<MultiTestRow>,
}

impl MultiTestReport {
    /// CSV rows `k,index,p_value,rank,threshold,rejected` in rank order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,index,p_value,rank,threshold,rejected")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.rank, row.index, row.p_value, row.rank, row.threshold, row.rejected
            )?;
        }
        Ok(())
    }
}

/// Harmonic number `C_N = sum_{k=1}^{N} 1/k`.
pub fn harmonic_number(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

/// Benjamini-Hochberg with the `C_N` correction on precomputed p-values:
/// rejects the `l` smallest where `l = sup{k : p_(k) <= k alpha / (N C_N)}`.
pub fn multi_test_from_pvalues(p_values: &[f64], alpha: f64) -> MultiTestReport {
    let n = p_values.len();
    let c_n = harmonic_number(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        p_values[a]
            .partial_cmp(&p_values[b])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut ell = 0usize;
    for (pos, &idx) in order.iter().enumerate() {
        let rank = pos + 1;
        if p_values[idx] <= rank as f64 * alpha / (n as f64 * c_n) {
            ell = rank;
        }
    }

    let rows: Vec<MultiTestRow> = order
        .iter()
        .enumerate()
        .map(|(pos, &idx)| {
            let rank = pos + 1;
            MultiTestRow {
                index: idx,
                p_value: p_values[idx],
                rank,
                threshold: rank as f64 * alpha / (n as f64 * c_n),
                rejected: rank <= ell,
            }
        })
        .collect();

    MultiTestReport {
        alpha,
        n_hypotheses: n,
        c_n,
        n_rejected: ell,
        rows,
    }
}

/// Monte Carlo p-values against one shared pool of null statistics, then
/// the BH procedure. All hypotheses share the same null; reusing one pool
/// of `n` simulations across the `N` tests is what keeps the procedure
/// cheap. Undefined observations may be passed as `-inf`; their p-value
/// is 1.
pub fn multi_test(observed: &[f64], shared_null: &[f64], alpha: f64) -> MultiTestReport {
    let mut sorted_null = shared_null.to_vec();
    sorted_null.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted_null.len();
    let p_values: Vec<f64> = observed
        .iter()
        .map(|&t| {
            let below = sorted_null.partition_point(|&x| x < t);
            (1 + n - below) as f64 / (n + 1) as f64
        })
        .collect();
    multi_test_from_pvalues(&p_values, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn stack_of(frames: Vec<ImageFrame>) -> ImageStack {
        ImageStack::new(frames).unwrap()
    }

    #[test]
    fn lambda_mle_is_the_grand_mean() {
        let zeros = stack_of(vec![ImageFrame::filled(4, 4, 0.0); 3]);
        assert_eq!(fit_lambda(&zeros, Rect::full(4, 4)).unwrap(), 0.0);

        let fives = stack_of(vec![ImageFrame::filled(2, 2, 5.0)]);
        assert_eq!(fit_lambda(&fives, Rect::full(2, 2)).unwrap(), 5.0);

        let a = ImageFrame::new(2, 1, vec![1.0, 2.0]).unwrap();
        let b = ImageFrame::new(2, 1, vec![3.0, 4.0]).unwrap();
        let s = stack_of(vec![a, b]);
        assert_eq!(fit_lambda(&s, Rect::full(2, 1)).unwrap(), 2.5);
    }

    #[test]
    fn vacuum_rect_must_fit_the_stack() {
        let err = fit_lambda(
            &stack_of(vec![ImageFrame::filled(4, 4, 1.0)]),
            Rect::new(0, 0, 5, 4).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::RectOutOfBounds { .. }));
    }

    #[test]
    fn dkw_arithmetic() {
        // Direct evaluation: 2 exp(-2 * 1e5 * 0.00329^2) = 0.2295412...
        let p = dkw_pvalue_from_ks(0.00329, 1e5);
        assert!((p - 0.22954118288913344).abs() < 1e-12);
        // The pooled sample size of a long series forces rejection.
        assert!(dkw_pvalue_from_ks(0.00329, 1.124e8) < 1e-300);
        assert_eq!(dkw_pvalue_from_ks(0.0, 12345.0), 1.0);
    }

    #[test]
    fn dkw_monotone_in_ks_and_sample_size() {
        let mut last = f64::INFINITY;
        for ks in [0.001, 0.002, 0.004, 0.02] {
            let p = dkw_pvalue_from_ks(ks, 1e4);
            assert!(p <= last);
            last = p;
        }
        assert!(dkw_pvalue_from_ks(0.01, 1e5) < dkw_pvalue_from_ks(0.01, 1e4));
    }

    #[test]
    fn dkw_test_hand_case() {
        // One sample of value 0 against Poisson(ln 2): F_hat(0) = 1,
        // F_0(0) = 1/2, so ks = 1/2 and p = min(1, 2 e^{-1/2}) = 1.
        let report = dkw_test(&[0], std::f64::consts::LN_2).unwrap();
        assert!((report.ks - 0.5).abs() < 1e-12);
        assert_eq!(report.p_value, 1.0);
        assert_eq!(report.n_samples, 1);
    }

    #[test]
    fn dkw_test_detects_wrong_rate() {
        let model = NullModel::poisson(4.0, 100, 100, 11).unwrap();
        let image = generate_null_image(&model, 0);
        let sample: Vec<u64> = image.pixels().iter().map(|v| *v as u64).collect();
        let good = dkw_test(&sample, 4.0).unwrap();
        let bad = dkw_test(&sample, 6.0).unwrap();
        assert!(good.p_value > 0.01, "p = {}", good.p_value);
        assert!(bad.p_value < 1e-10, "p = {}", bad.p_value);
    }

    #[test]
    fn mc_pvalue_floor_and_ceiling() {
        let nulls = vec![0.0; 9999];
        let floor = mc_pvalue("count", 1.0, &nulls, 0.05, 0);
        assert!((floor.p_value - 0.0001).abs() < 1e-15);
        let ceil = mc_pvalue("count", -1.0, &nulls, 0.05, 0);
        assert_eq!(ceil.p_value, 1.0);
        assert_eq!(ceil.ci[1], 1.0);
    }

    #[test]
    fn mc_ci_halfwidth_value() {
        let q = mc_ci_halfwidth(0.05, 9999);
        assert!((q - 0.013681704260097217).abs() < 1e-15);
        assert_eq!(format!("{:.4}", q), "0.0137");
    }

    #[test]
    fn null_image_degenerate_models() {
        let zero = NullModel::poisson(0.0, 3, 2, 1).unwrap();
        assert!(generate_null_image(&zero, 5).pixels().iter().all(|&v| v == 0.0));

        let single = NullModel::empirical(vec![7.0], 4, 4, 1).unwrap();
        assert!(generate_null_image(&single, 2).pixels().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn null_image_poisson_moments() {
        let model = NullModel::poisson(4.0, 1000, 1000, 99).unwrap();
        let image = generate_null_image(&model, 0);
        let n = image.len() as f64;
        let mean = image.pixels().iter().sum::<f64>() / n;
        // CLT bound at 5 sigma: sd of the mean is 2/1000.
        assert!((mean - 4.0).abs() < 0.01, "mean = {mean}");
        let var = image
            .pixels()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        assert!((var - 4.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn null_image_is_replicate_and_order_deterministic() {
        let model = NullModel::poisson(3.0, 16, 16, 7).unwrap();
        let a = generate_null_image(&model, 3);
        let b = generate_null_image(&model, 3);
        assert_eq!(a, b);
        assert_ne!(a, generate_null_image(&model, 4));
    }

    #[test]
    fn empirical_pool_draws_only_pool_values() {
        let model = NullModel::empirical(vec![1.0, 5.0, 9.0], 32, 32, 2).unwrap();
        let image = generate_null_image(&model, 0);
        assert!(image.pixels().iter().all(|v| [1.0, 5.0, 9.0].contains(v)));
        let ones = image.pixels().iter().filter(|&&v| v == 1.0).count();
        assert!((ones as f64 / 1024.0 - 1.0 / 3.0).abs() < 0.1);
    }

    fn demo_region() -> RegionSpec {
        RegionSpec::from_polygon(vec![[1.0, 1.0], [15.0, 1.0], [15.0, 15.0], [1.0, 15.0]])
            .with_rect(Rect::new(0, 0, 16, 16).unwrap())
    }

    fn demo_config(statistic: SummaryStatistic, n: usize) -> GofConfig {
        GofConfig {
            sigma: 1.0,
            eta: 0.0,
            statistic,
            infinite_mode: InfiniteMode::MaxPixelValue,
            n,
            alpha: 0.05,
        }
    }

    #[test]
    fn gof_is_deterministic() {
        let model = NullModel::poisson(4.0, 16, 16, 21).unwrap();
        let observed = generate_null_image(&model, 1_000_000);
        let config = demo_config(SummaryStatistic::Count, 49);
        let a = gof_test(&observed, &demo_region(), &config, &model).unwrap();
        let b = gof_test(&observed, &demo_region(), &config, &model).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn gof_rejects_a_planted_signal() {
        // Deep separated wells on a bright background vs a dim Poisson
        // null: no unsmoothed lambda = 1 draw has lifetimes above eta = 10.
        let mut observed = ImageFrame::filled(16, 16, 40.0);
        for (x, y) in [(3, 3), (3, 9), (9, 3), (9, 9), (13, 13)] {
            observed.set(x, y, 0.0);
        }
        let model = NullModel::poisson(1.0, 16, 16, 5).unwrap();
        let config = GofConfig { sigma: 0.0, eta: 10.0, ..demo_config(SummaryStatistic::Count, 99) };
        let report = gof_test(&observed, &demo_region(), &config, &model).unwrap();
        assert_eq!(report.p_value, 0.01);
        assert_eq!(report.statistic, "count");
    }

    #[test]
    fn gof_alps_hits_the_floor_on_a_strong_signal() {
        // Twelve deep wells against a dim noise model, scored with the
        // full n = 9999 replicate budget: the observed ALPS value tops
        // every replicate and the p-value sits at its floor 1/(n+1).
        let mut observed = ImageFrame::filled(48, 48, 60.0);
        for i in 0..3u32 {
            for j in 0..4u32 {
                observed.set((6 + 13 * i) as usize, (6 + 12 * j) as usize, 0.0);
            }
        }
        let region = RegionSpec::from_rect(Rect::new(0, 0, 48, 48).unwrap());
        let model = NullModel::poisson(2.0, 48, 48, 31).unwrap();
        let config = GofConfig {
            sigma: 4.0,
            eta: 0.1,
            statistic: SummaryStatistic::Alps,
            infinite_mode: InfiniteMode::MaxPixelValue,
            n: 9999,
            alpha: 0.05,
        };
        let report = gof_test(&observed, &region, &config, &model).unwrap();
        assert!((report.p_value - 0.0001).abs() < 1e-12, "p = {}", report.p_value);
        assert!((report.ci_halfwidth() - mc_ci_halfwidth(0.05, 9999)).abs() < 1e-15);
    }

    #[test]
    fn gof_undefined_observed_statistic_errors() {
        // Constant observed frame: the lone class has zero lifetime, gets
        // dropped, and entropy is undefined on the empty output.
        let observed = ImageFrame::filled(16, 16, 2.0);
        let model = NullModel::poisson(2.0, 16, 16, 5).unwrap();
        let config = GofConfig { sigma: 0.0, ..demo_config(SummaryStatistic::Entropy, 9) };
        let err = gof_test(&observed, &demo_region(), &config, &model).unwrap_err();
        assert!(matches!(err, Error::UndefinedStatistic(_)));
    }

    #[test]
    fn gof_pvalue_is_roughly_uniform_under_the_null() {
        // Smoke-level validity check; the acceptance suite runs the larger
        // calibrated version.
        let trials = 200;
        let mut at_or_below = 0;
        for trial in 0..trials {
            let model = NullModel::poisson(3.0, 8, 8, 1000 + trial).unwrap();
            let observed = generate_null_image(&model, u64::MAX - 1);
            let region = RegionSpec::from_rect(Rect::new(0, 0, 8, 8).unwrap());
            let config = GofConfig {
                sigma: 0.0,
                eta: 0.0,
                statistic: SummaryStatistic::Count,
                infinite_mode: InfiniteMode::MaxPixelValue,
                n: 39,
                alpha: 0.05,
            };
            let report = gof_test(&observed, &region, &config, &model).unwrap();
            if report.p_value <= 0.1 {
                at_or_below += 1;
            }
        }
        // P(p <= 0.1) <= 0.1 under the null; 3-sigma binomial slack.
        let rate = at_or_below as f64 / trials as f64;
        assert!(
            rate <= 0.1 + 3.0 * (0.1f64 * 0.9 / trials as f64).sqrt(),
            "rate {rate}"
        );
    }

    #[test]
    fn autocorrelation_of_alternating_series() {
        let frames: Vec<ImageFrame> = (0..4)
            .map(|k| ImageFrame::filled(2, 2, (k % 2) as f64))
            .collect();
        let report = mean_autocorrelation(&stack_of(frames), Rect::full(2, 2), 1).unwrap();
        assert!((report.rho[0] - (-0.75)).abs() < 1e-12);
        assert_eq!(report.excluded_pixels, 0);
        assert!((report.null_sd - 0.25).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_excludes_constant_pixels() {
        let mut a = ImageFrame::filled(2, 1, 1.0);
        let mut b = ImageFrame::filled(2, 1, 1.0);
        a.set(0, 0, 0.0);
        b.set(0, 0, 2.0);
        let report = mean_autocorrelation(&stack_of(vec![a, b]), Rect::full(2, 1), 1).unwrap();
        assert_eq!(report.excluded_pixels, 1);

        let constant = stack_of(vec![ImageFrame::filled(2, 1, 3.0); 2]);
        assert!(matches!(
            mean_autocorrelation(&constant, Rect::full(2, 1), 1),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn autocorrelation_of_iid_noise_is_small() {
        let model = NullModel::poisson(4.0, 20, 20, 3).unwrap();
        let frames: Vec<ImageFrame> = (0..50).map(|k| generate_null_image(&model, k)).collect();
        let report = mean_autocorrelation(&stack_of(frames), Rect::full(20, 20), 3).unwrap();
        for rho in &report.rho {
            assert!(
                rho.abs() < 5.0 * report.null_sd,
                "rho {rho} sd {}",
                report.null_sd
            );
        }
    }

    #[test]
    fn semivariogram_of_constant_frame_is_zero() {
        let f = ImageFrame::filled(10, 10, 3.0);
        let bins = semivariogram(&f, Rect::full(10, 10), 4).unwrap();
        for bin in &bins {
            if bin.pairs > 0 {
                assert_eq!(bin.gamma, Some(0.0));
            }
        }
    }

    #[test]
    fn semivariogram_two_pixel_window() {
        let f = ImageFrame::new(2, 1, vec![0.0, 2.0]).unwrap();
        let bins = semivariogram(&f, Rect::full(2, 1), 1).unwrap();
        assert_eq!(bins[0].pairs, 2);
        assert_eq!(bins[0].gamma, Some(2.0));
    }

    #[test]
    fn semivariogram_of_poisson_noise_is_flat_at_lambda() {
        let model = NullModel::poisson(4.0, 400, 250, 17).unwrap();
        let image = generate_null_image(&model, 0);
        let bins = semivariogram(&image, Rect::full(400, 250), 15).unwrap();
        for bin in &bins {
            let g = bin.gamma.unwrap();
            assert!((g - 4.0).abs() < 0.08, "gamma = {g} in [{}, {})", bin.lo, bin.hi);
        }
    }

    #[test]
    fn bh_rejects_only_the_smallest_in_the_worked_example() {
        let report = multi_test_from_pvalues(&[0.001, 0.02, 0.5], 0.05);
        assert!((report.c_n - 11.0 / 6.0).abs() < 1e-12);
        let thresholds: Vec<f64> = report.rows.iter().map(|r| r.threshold).collect();
        assert!((thresholds[0] - 0.05 / 5.5).abs() < 1e-12);
        assert!((thresholds[1] - 0.1 / 5.5).abs() < 1e-12);
        assert!((thresholds[2] - 0.15 / 5.5).abs() < 1e-12);
        assert_eq!(report.n_rejected, 1);
        assert!(report.rows[0].rejected && report.rows[0].index == 0);
        assert!(!report.rows[1].rejected && !report.rows[2].rejected);
    }

    #[test]
    fn bh_rejects_none_for_unit_pvalues() {
        let report = multi_test_from_pvalues(&[1.0; 8], 0.05);
        assert_eq!(report.n_rejected, 0);
    }

    #[test]
    fn harmonic_number_by_direct_summation() {
        assert!((harmonic_number(224) - 5.991092198796449).abs() < 1e-12);
        assert_eq!(harmonic_number(1), 1.0);
    }

    #[test]
    fn bh_step_up_takes_the_supremum() {
        // p_(1) misses its threshold but p_(2) passes; both are rejected.
        let c2 = harmonic_number(2);
        let t1 = 0.05 / (2.0 * c2);
        let t2 = 0.05 * 2.0 / (2.0 * c2);
        let report = multi_test_from_pvalues(&[t1 * 1.5, t2 * 0.9], 0.05);
        assert_eq!(report.n_rejected, 2);
    }

    #[test]
    fn shared_pool_pvalues_match_direct_ranks() {
        let mut rng = SplitMix64::new(1);
        let pool: Vec<f64> = (0..500).map(|_| rng.next_f64()).collect();
        let observed: Vec<f64> = (0..20).map(|_| rng.next_f64()).collect();
        let report = multi_test(&observed, &pool, 0.05);
        for row in &report.rows {
            let t = observed[row.index];
            let count = pool.iter().filter(|&&x| x >= t).count();
            let expect = (1 + count) as f64 / 501.0;
            assert!((row.p_value - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn multitest_csv_format() {
        let report = multi_test_from_pvalues(&[0.5, 0.001], 0.05);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,index,p_value,rank,threshold,rejected"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("1,1,0.001,1,"));
        assert!(first.ends_with(",true"));
    }

    #[test]
    fn report_json_shape() {
        let report = mc_pvalue("alps", 2.5, &[1.0, 3.0], 0.05, 42);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.starts_with("{\"statistic\":\"alps\",\"observed\":2.5,\"p_value\":"));
        assert!(json.contains("\"ci\":["));
        assert!(json.ends_with("\"seed\":42}"));
        let back: TestReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.p_value, report.p_value);
    }
}
