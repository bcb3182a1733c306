//! Synthetic test images: isotropic Gaussian dips on a flat background,
//! corrupted by Poisson shot noise, plus the recovery metrics used to score
//! a detector against ground truth (column count, Hausdorff distance,
//! matched intensity correlation).
//!
//! Features are dark: the truth image is `background - sum of peaks`,
//! clamped at zero, so the sublevel filtration finds them as minima.

use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::detect::MarkedPointSet;
use crate::error::{Error, Result};
use crate::imagio::ImageFrame;
use crate::rng;

/// Parameters of a synthetic ground-truth image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub width: usize,
    pub height: usize,
    /// Sub-pixel peak centers, in the same coordinates as pixel centers
    /// `(x + 0.5, y + 0.5)`.
    pub centers: Vec<[f64; 2]>,
    /// Per-peak dip depths; a single entry broadcasts to every peak.
    pub amplitudes: Vec<f64>,
    /// Peak width (standard deviation, pixels).
    pub peak_sigma: f64,
    /// Flat background intensity.
    pub background: f64,
    /// Expected counts per unit intensity.
    pub dose: f64,
}

impl GroundTruthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("empty truth image".to_string()));
        }
        // Zero peaks is legal: a flat background renders a pure-noise
        // instance.
        if self.centers.is_empty() && !self.amplitudes.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} amplitudes for 0 centers",
                self.amplitudes.len()
            )));
        }
        if !self.centers.is_empty()
            && (self.amplitudes.is_empty()
                || (self.amplitudes.len() != 1 && self.amplitudes.len() != self.centers.len()))
        {
            return Err(Error::InvalidParameter(format!(
                "{} amplitudes for {} centers",
                self.amplitudes.len(),
                self.centers.len()
            )));
        }
        if self.amplitudes.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::InvalidParameter("amplitudes must be positive".to_string()));
        }
        if !self.dose.is_finite() || self.dose <= 0.0 {
            return Err(Error::InvalidParameter(format!("dose = {}", self.dose)));
        }
        if !self.peak_sigma.is_finite() || self.peak_sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!("peak_sigma = {}", self.peak_sigma)));
        }
        if !self.background.is_finite() || self.background < 0.0 {
            return Err(Error::InvalidParameter(format!("background = {}", self.background)));
        }
        for c in &self.centers {
            if !(c[0] >= 0.0 && c[0] <= self.width as f64 && c[1] >= 0.0 && c[1] <= self.height as f64)
            {
                return Err(Error::InvalidParameter(format!(
                    "center ({}, {}) outside the frame",
                    c[0], c[1]
                )));
            }
        }
        Ok(())
    }

    fn amplitude(&self, peak: usize) -> f64 {
        if self.amplitudes.len() == 1 {
            self.amplitudes[0]
        } else {
            self.amplitudes[peak]
        }
    }
}

/// Noise-free intensity image: background minus Gaussian dips, clamped at
/// zero, evaluated at pixel centers.
pub fn render_truth(spec: &GroundTruthSpec) -> Result<ImageFrame> {
    spec.validate()?;
    let two_sigma_sq = 2.0 * spec.peak_sigma * spec.peak_sigma;
    Ok(ImageFrame::from_fn(spec.width, spec.height, |x, y| {
        let cx = x as f64 + 0.5;
        let cy = y as f64 + 0.5;
        let mut v = spec.background;
        for (j, c) in spec.centers.iter().enumerate() {
            let d2 = (cx - c[0]) * (cx - c[0]) + (cy - c[1]) * (cy - c[1]);
            v -= spec.amplitude(j) * (-d2 / two_sigma_sq).exp();
        }
        v.max(0.0)
    }))
}

/// Independent Poisson counts with mean `dose * truth(p)` per pixel,
/// deterministic in `(seed, replicate)`.
pub fn add_shot_noise(truth: &ImageFrame, dose: f64, seed: u64, replicate: u64) -> Result<ImageFrame> {
    if !dose.is_finite() || dose <= 0.0 {
        return Err(Error::InvalidParameter(format!("dose = {dose}")));
    }
    let (w, h) = (truth.width(), truth.height());
    Ok(ImageFrame::from_fn(w, h, |x, y| {
        let mean = dose * truth.get(x, y);
        if mean == 0.0 {
            return 0.0;
        }
        let mut stream = rng::stream(seed, replicate, (y * w + x) as u64);
        rand_distr::Poisson::new(mean).expect("positive mean").sample(&mut stream)
    }))
}

/// Hausdorff distance between two point sets: the larger of the two
/// directed max-min Euclidean distances. Brute force.
pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Pearson correlation of lifetime marks after greedy nearest-neighbor
/// matching: candidate pairs are taken in ascending distance order, each
/// point matched at most once. Requires equally sized sets of at least two
/// points and nonconstant lifetimes on both sides.
pub fn matched_intensity_correlation(a: &MarkedPointSet, b: &MarkedPointSet) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::ZeroVariance(
            "correlation needs at least two matched points".to_string(),
        ));
    }

    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, pa) in a.points.iter().enumerate() {
        for (j, pb) in b.points.iter().enumerate() {
            let dx = pa.pixel.x as f64 - pb.pixel.x as f64;
            let dy = pa.pixel.y as f64 - pb.pixel.y as f64;
            candidates.push(((dx * dx + dy * dy).sqrt(), i, j));
        }
    }
    candidates.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap()
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });

    let mut a_used = vec![false; a.len()];
    let mut b_used = vec![false; b.len()];
    let mut pairs = Vec::with_capacity(a.len());
    for (_, i, j) in candidates {
        if !a_used[i] && !b_used[j] {
            a_used[i] = true;
            b_used[j] = true;
            pairs.push((a.points[i].lifetime, b.points[j].lifetime));
            if pairs.len() == a.len() {
                break;
            }
        }
    }

    pearson(&pairs)
}

fn pearson(pairs: &[(f64, f64)]) -> Result<f64> {
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in pairs {
        sxx += (x - mean_x) * (x - mean_x);
        syy += (y - mean_y) * (y - mean_y);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("constant lifetimes in correlation".to_string()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
