//! The feature-detection pipeline: smooth, take dimension-0 persistence on
//! a rectangular subimage, keep the classes whose positive cells fall in
//! the polygonal region, and threshold by lifetime. Also persistence-based
//! image binarization.

use std::io::Write;

use crate::cubical::{self, InfiniteMode, Pixel};
use crate::error::{Error, Result};
use crate::imagio::{self, ImageFrame, PixelSet, Rect, RegionSpec};

/// A detected feature: the pixel that created a component and the
/// component's lifetime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkedPoint {
    pub pixel: Pixel,
    pub lifetime: f64,
}

/// Detector output: feature locations with lifetime marks, plus the
/// parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPointSet {
    pub points: Vec<MarkedPoint>,
    pub sigma: f64,
    pub eta: f64,
    pub frame_index: Option<usize>,
    pub region: RegionSpec,
}

impl MarkedPointSet {
    /// Number of detected features (the column count).
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lifetimes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lifetime).collect()
    }

    pub fn locations(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| (p.pixel.x as f64, p.pixel.y as f64))
            .collect()
    }

    /// CSV rows `x,y,lifetime`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,lifetime")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.pixel.x, p.pixel.y, p.lifetime)?;
        }
        Ok(())
    }
}

/// Runs the detection pipeline on one frame.
///
/// The frame is cropped to the rectangular window of `region` (the whole
/// frame when absent), smoothed with `sigma`, dimension-0 persistence is
/// computed with infinite deaths resolved per `infinite_mode`, classes
/// whose positive cell lies outside the polygon are dropped, and classes
/// with lifetime `<= eta` are dropped. Returned coordinates are absolute.
/// An empty result is not an error.
pub fn detect(
    frame: &ImageFrame,
    region: &RegionSpec,
    sigma: f64,
    eta: f64,
    infinite_mode: InfiniteMode,
) -> Result<MarkedPointSet> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta}")));
    }
    let rect = match region.rect {
        Some(r) => {
            r.check_within(frame.width(), frame.height())?;
            r
        }
        None => Rect::full(frame.width(), frame.height()),
    };

    let membership = match &region.polygon {
        Some(poly) => {
            imagio::validate_polygon(poly)?;
            let xs = poly.iter().map(|v| v[0]);
            let ys = poly.iter().map(|v| v[1]);
            let bbox_ok = xs.clone().fold(f64::NEG_INFINITY, f64::max) > rect.x0 as f64
                && xs.fold(f64::INFINITY, f64::min) < rect.x1 as f64
                && ys.clone().fold(f64::NEG_INFINITY, f64::max) > rect.y0 as f64
                && ys.fold(f64::INFINITY, f64::min) < rect.y1 as f64;
            if !bbox_ok {
                return Err(Error::RegionOutsideFrame);
            }
            Some(imagio::pixels_in_polygon(poly, frame.width(), frame.height())?)
        }
        None => None,
    };

    let full_frame = rect == Rect::full(frame.width(), frame.height());
    let cropped;
    let window = if full_frame {
        frame
    } else {
        cropped = frame.crop(rect)?;
        &cropped
    };
    let smoothed = imagio::smooth(window, sigma)?;
    let diagram = cubical::compute_pd0(&smoothed, None)?;

    // Infinite deaths resolve in place rather than through a rebuilt
    // diagram; this sits inside Monte Carlo loops.
    let substitute = match infinite_mode {
        InfiniteMode::MaxFiniteDeath => diagram
            .pairs
            .iter()
            .filter(|p| !p.is_infinite() && p.death > p.birth)
            .map(|p| p.death)
            .fold(f64::NEG_INFINITY, f64::max),
        InfiniteMode::MaxPixelValue => smoothed.max_value(),
    };
    if !substitute.is_finite() {
        return Err(Error::NoFinitePair);
    }

    let mut points = Vec::new();
    for pair in diagram.pairs_in_dim(0) {
        let abs = Pixel {
            x: pair.birth_pixel.x + rect.x0 as u32,
            y: pair.birth_pixel.y + rect.y0 as u32,
        };
        if let Some(mask) = &membership {
            if !mask.contains(abs.x as usize, abs.y as usize) {
                continue;
            }
        }
        let death = if pair.is_infinite() { substitute } else { pair.death };
        let lifetime = death - pair.birth;
        if lifetime > eta {
            points.push(MarkedPoint { pixel: abs, lifetime });
        }
    }

    Ok(MarkedPointSet {
        points,
        sigma,
        eta,
        frame_index: None,
        region: region.clone(),
    })
}

/// Persistence-based binarization threshold and mask.
#[derive(Debug, Clone)]
pub struct PdThreshold {
    /// Chosen threshold `t*`.
    pub t_star: f64,
    /// The sublevel set `{I <= t*}`.
    pub mask: PixelSet,
}

/// Chooses the binarization threshold maximizing the total dimension-0
/// persistence alive at `t` (sum of `d - b` over pairs with `b <= t < d`,
/// infinite deaths resolved to the largest pixel value), over all distinct
/// pixel values; ties resolve to the smallest threshold.
pub fn pd_threshold(frame: &ImageFrame) -> Result<PdThreshold> {
    let diagram = cubical::compute_pd0(frame, None)?;
    let resolved = cubical::resolve_infinite(&diagram, InfiniteMode::MaxPixelValue, frame)?;

    let mut candidates: Vec<f64> = frame.pixels().to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let mut births: Vec<(f64, f64)> = resolved
        .pairs_in_dim(0)
        .filter(|p| p.death > p.birth)
        .map(|p| (p.birth, p.lifetime()))
        .collect();
    births.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut deaths: Vec<(f64, f64)> = resolved
        .pairs_in_dim(0)
        .filter(|p| p.death > p.birth)
        .map(|p| (p.death, p.lifetime()))
        .collect();
    deaths.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut alive = 0.0f64;
    let (mut bi, mut di) = (0usize, 0usize);
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &t in &candidates {
        while bi < births.len() && births[bi].0 <= t {
            alive += births[bi].1;
            bi += 1;
        }
        while di < deaths.len() && deaths[di].0 <= t {
            alive -= deaths[di].1;
            di += 1;
        }
        if alive > best.0 {
            best = (alive, t);
        }
    }
    let t_star = best.1;

    let mask = PixelSet::from_mask(
        frame.width(),
        frame.height(),
        frame.pixels().iter().map(|&v| v <= t_star).collect(),
    );
    Ok(PdThreshold { t_star, mask })
}

/// Writes a binarization mask as a maxval-1 P5 PGM, in-set pixels black.
pub fn write_binary_pgm(mask: &PixelSet, path: &std::path::Path) -> Result<()> {
    let frame = ImageFrame::from_fn(mask.width(), mask.height(), |x, y| {
        if mask.contains(x, y) {
            0.0
        } else {
            1.0
        }
    });
    imagio::write_pgm(&frame, 1, path)
}
