//! Image model and ingestion: pixel grids, frame stacks, PGM and raw-u16
//! readers, window summation, polygonal regions, and discrete Gaussian
//! smoothing.
//!
//! Frames store raw counts (or real values after smoothing) row-major.
//! Normalizing counts into [0, 1] would not change sublevel ordering, which
//! is all the persistence engine consumes, so no normalization happens here.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single grayscale frame. Pixel values are finite and nonnegative:
/// integer counts for raw data, reals after smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidImage(format!("pixel value {bad} out of range")));
        }
        Ok(ImageFrame { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        ImageFrame {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Builds a frame from a per-pixel function. The caller must produce
    /// finite, nonnegative values.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        ImageFrame { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x] = value;
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn max_value(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Copies the half-open rectangle `rect` into a new frame.
    pub fn crop(&self, rect: Rect) -> Result<ImageFrame> {
        rect.check_within(self.width, self.height)?;
        let mut pixels = Vec::with_capacity(rect.width() * rect.height());
        for y in rect.y0..rect.y1 {
            let row = &self.pixels[y * self.width + rect.x0..y * self.width + rect.x1];
            pixels.extend_from_slice(row);
        }
        Ok(ImageFrame {
            width: rect.width(),
            height: rect.height(),
            pixels,
        })
    }
}

/// An ordered series of frames with uniform dimensions.
#[derive(Debug, Clone)]
pub struct ImageStack {
    frames: Vec<ImageFrame>,
}

impl ImageStack {
    pub fn new(frames: Vec<ImageFrame>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| {
            Error::InvalidImage("a stack needs at least one frame".to_string())
        })?;
        let dims = (first.width, first.height);
        for frame in &frames {
            if (frame.width, frame.height) != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: (frame.width, frame.height),
                });
            }
        }
        Ok(ImageStack { frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn frame(&self, index: usize) -> &ImageFrame {
        &self.frames[index]
    }

    pub fn frames(&self) -> &[ImageFrame] {
        &self.frames
    }
}

/// Pixelwise sum of the window of `m` frames starting at `ell` (0-based).
pub fn sum_frames(stack: &ImageStack, m: usize, ell: usize) -> Result<ImageFrame> {
    if m < 1 || ell + m > stack.frame_count() {
        return Err(Error::WindowOutOfRange {
            ell,
            m,
            frames: stack.frame_count(),
        });
    }
    let mut pixels = stack.frame(ell).pixels.clone();
    for k in 1..m {
        for (acc, v) in pixels.iter_mut().zip(stack.frame(ell + k).pixels.iter()) {
            *acc += v;
        }
    }
    Ok(ImageFrame {
        width: stack.width(),
        height: stack.height(),
        pixels,
    })
}

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "[usize; 4]", try_from = "[usize; 4]")]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidParameter(format!(
                "empty rectangle [{x0},{x1})x[{y0},{y1})"
            )));
        }
        Ok(Rect { x0, y0, x1, y1 })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Rect { x0: 0, y0: 0, x1: width, y1: height }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x1 > width || self.y1 > height {
            return Err(Error::RectOutOfBounds {
                rect: (self.x0, self.y0, self.x1, self.y1),
                width,
                height,
            });
        }
        Ok(())
    }
}

impl From<Rect> for [usize; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

impl TryFrom<[usize; 4]> for Rect {
    type Error = Error;

    fn try_from(v: [usize; 4]) -> Result<Self> {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

/// Polygonal analysis region `R` and/or rectangular subimage window.
/// Serialized as `{"polygon": [[x,y], ...]}` and `{"rect": [x0,y0,x1,y1]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct RegionSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rect: Option<Rect>,
}

impl RegionSpec {
    pub fn from_polygon(polygon: Vec<[f64; 2]>) -> Self {
        RegionSpec { polygon: Some(polygon), rect: None }
    }

    pub fn from_rect(rect: Rect) -> Self {
        RegionSpec { polygon: None, rect: Some(rect) }
    }

    pub fn with_rect(mut self, rect: Rect) -> Self {
        self.rect = Some(rect);
        self
    }
}

/// Rejects polygons with fewer than three vertices, non-finite coordinates,
/// repeated consecutive vertices, zero area, or self-intersections.
pub fn validate_polygon(polygon: &[[f64; 2]]) -> Result<()> {
    if polygon.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "{} vertices, need at least 3",
            polygon.len()
        )));
    }
    if polygon.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::DegeneratePolygon("non-finite vertex".to_string()));
    }
    let n = polygon.len();
    let mut area2 = 0.0;
    for i in 0..n {
        let [x0, y0] = polygon[i];
        let [x1, y1] = polygon[(i + 1) % n];
        if x0 == x1 && y0 == y1 {
            return Err(Error::DegeneratePolygon("repeated consecutive vertex".to_string()));
        }
        area2 += x0 * y1 - x1 * y0;
    }
    if area2 == 0.0 {
        return Err(Error::DegeneratePolygon("zero area".to_string()));
    }
    // Simple polygon: non-adjacent edges must not cross.
    for i in 0..n {
        for j in i + 1..n {
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let a = (polygon[i], polygon[(i + 1) % n]);
            let b = (polygon[j], polygon[(j + 1) % n]);
            if segments_cross(a.0, a.1, b.0, b.1) {
                return Err(Error::DegeneratePolygon(format!(
                    "edges {i} and {j} intersect"
                )));
            }
        }
    }
    Ok(())
}

fn segments_cross(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| -> f64 {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: [f64; 2], q: [f64; 2], r: [f64; 2], d: f64| -> bool {
        d == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    on(b0, b1, a0, d1) || on(b0, b1, a1, d2) || on(a0, a1, b0, d3) || on(a0, a1, b1, d4)
}

/// Location of a query point relative to a polygon boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLocation {
    Inside,
    OnEdge,
    Outside,
}

/// Even-odd rule; a point exactly on an edge or vertex reports `OnEdge`.
pub fn locate_point(polygon: &[[f64; 2]], px: f64, py: f64) -> PointLocation {
    let n = polygon.len();
    for i in 0..n {
        let [ax, ay] = polygon[i];
        let [bx, by] = polygon[(i + 1) % n];
        let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
        if cross == 0.0 {
            let dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay);
            let len2 = (bx - ax) * (bx - ax) + (by - ay) * (by - ay);
            if (0.0..=len2).contains(&dot) {
                return PointLocation::OnEdge;
            }
        }
    }
    let mut inside = false;
    for i in 0..n {
        let [ax, ay] = polygon[i];
        let [bx, by] = polygon[(i + 1) % n];
        // Half-open vertical rule: each edge covers [min(ay,by), max(ay,by)).
        if (ay > py) != (by > py) {
            let x_cross = ax + (py - ay) / (by - ay) * (bx - ax);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    if inside {
        PointLocation::Inside
    } else {
        PointLocation::Outside
    }
}

/// A set of pixels within a `width` x `height` grid, stored as a bitmask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelSet {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    count: usize,
}

impl PixelSet {
    pub fn empty(width: usize, height: usize) -> Self {
        PixelSet {
            width,
            height,
            mask: vec![false; width * height],
            count: 0,
        }
    }

    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), width * height);
        let count = mask.iter().filter(|b| **b).count();
        PixelSet { width, height, mask, count }
    }

    pub fn insert(&mut self, x: usize, y: usize) {
        let idx = y * self.width + x;
        if !self.mask[idx] {
            self.mask[idx] = true;
            self.count += 1;
        }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.mask[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixels in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mask.iter().enumerate().filter_map(move |(i, m)| {
            m.then_some((i % self.width, i / self.width))
        })
    }
}

/// Pixels of a `width` x `height` frame whose centers `(x+0.5, y+0.5)` lie
/// strictly inside the polygon. Centers exactly on an edge are excluded.
pub fn pixels_in_polygon(polygon: &[[f64; 2]], width: usize, height: usize) -> Result<PixelSet> {
    validate_polygon(polygon)?;
    let min_x = polygon.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
    let max_x = polygon.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = polygon.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
    let max_y = polygon.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
    let x_lo = min_x.floor().max(0.0) as usize;
    let y_lo = min_y.floor().max(0.0) as usize;
    let x_hi = (max_x.ceil().max(0.0) as usize).min(width);
    let y_hi = (max_y.ceil().max(0.0) as usize).min(height);

    let mut set = PixelSet::empty(width, height);
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let cx = x as f64 + 0.5;
            let cy = y as f64 + 0.5;
            if locate_point(polygon, cx, cy) == PointLocation::Inside {
                set.insert(x, y);
            }
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Gaussian smoothing
// ---------------------------------------------------------------------------

/// Truncated discrete Gaussian, renormalized to unit mass. `sigma = 0`
/// degenerates to the single weight 1 at the origin.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    weights_1d: Vec<f64>,
}

impl GaussianKernel {
    /// Truncation radius is `ceil(4 sigma)`, which discards < 1e-4 of the
    /// mass before renormalization.
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidParameter(format!("sigma = {sigma}")));
        }
        if sigma == 0.0 {
            return Ok(GaussianKernel { sigma, radius: 0, weights_1d: vec![1.0] });
        }
        let radius = (4.0 * sigma).ceil() as usize;
        let mut weights: Vec<f64> = (-(radius as i64)..=radius as i64)
            .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(GaussianKernel { sigma, radius, weights_1d: weights })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// One-dimensional factor weights, indexed by offset `-radius..=radius`.
    pub fn weights_1d(&self) -> &[f64] {
        &self.weights_1d
    }

    #[inline]
    pub fn weight_at(&self, d: i64) -> f64 {
        self.weights_1d[(d + self.radius as i64) as usize]
    }

    /// Full `(2r+1) x (2r+1)` grid. The spherical Gaussian factorizes, so
    /// this is the outer product of the 1-d weights and sums to one.
    pub fn weights_2d(&self) -> Vec<f64> {
        let n = 2 * self.radius + 1;
        let mut grid = Vec::with_capacity(n * n);
        for wy in &self.weights_1d {
            for wx in &self.weights_1d {
                grid.push(wx * wy);
            }
        }
        grid
    }
}

/// Discrete Gaussian convolution. Pixels outside the frame contribute
/// nothing and each output is renormalized by the in-frame kernel mass, so
/// constant images stay constant at the borders.
pub fn smooth(frame: &ImageFrame, sigma: f64) -> Result<ImageFrame> {
    let kernel = GaussianKernel::new(sigma)?;
    if kernel.radius() == 0 {
        return Ok(frame.clone());
    }
    let (w, h) = (frame.width, frame.height);
    let r = kernel.radius() as i64;

    // In-frame kernel mass factorizes over axes for a rectangular frame.
    let axis_mass = |len: usize| -> Vec<f64> {
        (0..len as i64)
            .map(|x| {
                let mut m = 0.0;
                for d in -r..=r {
                    if (0..len as i64).contains(&(x - d)) {
                        m += kernel.weight_at(d);
                    }
                }
                m
            })
            .collect()
    };
    let mass_x = axis_mass(w);
    let mass_y = axis_mass(h);

    // Horizontal pass with zero padding. The kernel is symmetric, so the
    // interior span is a plain sliding dot product.
    let weights = kernel.weights_1d();
    let taps = weights.len();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &frame.pixels[y * w..(y + 1) * w];
        let dst = &mut tmp[y * w..(y + 1) * w];
        let boundary = |x: usize, row: &[f64]| -> f64 {
            let mut acc = 0.0;
            for d in -r..=r {
                let sx = x as i64 - d;
                if (0..w as i64).contains(&sx) {
                    acc += kernel.weight_at(d) * row[sx as usize];
                }
            }
            acc
        };
        if w > 2 * kernel.radius() {
            let radius = kernel.radius();
            for (x, d) in dst[..radius].iter_mut().enumerate() {
                *d = boundary(x, row);
            }
            for (i, d) in dst[radius..w - radius].iter_mut().enumerate() {
                let window = &row[i..i + taps];
                let mut acc = 0.0;
                for (wt, v) in weights.iter().zip(window) {
                    acc += wt * v;
                }
                *d = acc;
            }
            for (i, d) in dst[w - radius..].iter_mut().enumerate() {
                *d = boundary(w - radius + i, row);
            }
        } else {
            for (x, d) in dst.iter_mut().enumerate() {
                *d = boundary(x, row);
            }
        }
    }
    // Vertical pass as weighted row accumulation, then renormalize by the
    // per-pixel in-frame mass.
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (di, &wt) in weights.iter().enumerate() {
            let sy = y as i64 - (di as i64 - r);
            if (0..h as i64).contains(&sy) {
                let src = &tmp[sy as usize * w..sy as usize * w + w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
        let my = mass_y[y];
        for (x, d) in dst.iter_mut().enumerate() {
            *d /= mass_x[x] * my;
        }
    }
    Ok(ImageFrame { width: w, height: h, pixels: out })
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Supported stack layouts on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackFormat {
    /// Directory of `frame_%06d.pgm` files (binary P5), indexed from 0.
    PgmDir,
    /// `header.json` + `frames.bin` of little-endian u16, frame-major.
    RawU16,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHeader {
    width: usize,
    height: usize,
    num_frames: usize,
    dtype: String,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads an image series. Pixel values are the raw stored counts.
pub fn load_stack(path: &Path, format: StackFormat) -> Result<ImageStack> {
    match format {
        StackFormat::PgmDir => {
            let mut frames = Vec::new();
            loop {
                let file = path.join(format!("frame_{:06}.pgm", frames.len()));
                if !file.exists() {
                    break;
                }
                frames.push(read_pgm(&file)?);
            }
            if frames.is_empty() {
                return Err(Error::InvalidImage(format!(
                    "no frame_000000.pgm under {}",
                    path.display()
                )));
            }
            ImageStack::new(frames)
        }
        StackFormat::RawU16 => {
            let header_path = path.join("header.json");
            let text = std::fs::read_to_string(&header_path)
                .map_err(|e| io_err(&header_path, e))?;
            let header: RawHeader = serde_json::from_str(&text)?;
            if header.dtype != "u16le" {
                return Err(Error::InvalidImage(format!(
                    "unsupported dtype {:?}",
                    header.dtype
                )));
            }
            let data_path = path.join("frames.bin");
            let bytes = std::fs::read(&data_path).map_err(|e| io_err(&data_path, e))?;
            let frame_px = header.width * header.height;
            let expected = (frame_px * header.num_frames * 2) as u64;
            if (bytes.len() as u64) < expected {
                return Err(Error::TruncatedFrameData {
                    expected,
                    found: bytes.len() as u64,
                });
            }
            if bytes.len() as u64 > expected {
                return Err(Error::InvalidImage(format!(
                    "frames.bin has {} bytes, expected {expected}",
                    bytes.len()
                )));
            }
            let mut frames = Vec::with_capacity(header.num_frames);
            for f in 0..header.num_frames {
                let start = f * frame_px * 2;
                let pixels = bytes[start..start + frame_px * 2]
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
                    .collect();
                frames.push(ImageFrame::new(header.width, header.height, pixels)?);
            }
            ImageStack::new(frames)
        }
    }
}

/// Reads a binary (P5) PGM. Samples wider than 8 bits are big-endian per
/// the PGM specification.
pub fn read_pgm(path: &Path) -> Result<ImageFrame> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| io_err(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    parse_pgm(&bytes)
}

fn parse_pgm(bytes: &[u8]) -> Result<ImageFrame> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and '#' comments.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::PgmFormat("unexpected end of header".to_string()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(bytes)? != "P5" {
        return Err(Error::PgmFormat("missing P5 magic".to_string()));
    }
    let parse = |s: String| -> Result<u64> {
        s.parse::<u64>()
            .map_err(|_| Error::PgmFormat(format!("bad header token {s:?}")))
    };
    let width = parse(token(bytes)?)? as usize;
    let height = parse(token(bytes)?)? as usize;
    let maxval = parse(token(bytes)?)? as u32;
    if maxval > 65535 {
        return Err(Error::MaxvalOverflow(maxval));
    }
    if maxval == 0 {
        return Err(Error::PgmFormat("maxval 0".to_string()));
    }
    // Exactly one whitespace byte separates the header from raster data.
    pos += 1;
    let bpp = if maxval > 255 { 2 } else { 1 };
    let expected = width * height * bpp;
    let data = bytes
        .get(pos..pos + expected)
        .ok_or(Error::TruncatedFrameData {
            expected: expected as u64,
            found: bytes.len().saturating_sub(pos) as u64,
        })?;
    let pixels: Vec<f64> = if bpp == 2 {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    } else {
        data.iter().map(|b| *b as f64).collect()
    };
    if pixels.iter().any(|p| *p > maxval as f64) {
        return Err(Error::PgmFormat("sample exceeds maxval".to_string()));
    }
    ImageFrame::new(width, height, pixels)
}

/// Writes a binary (P5) PGM. Values are rounded to the nearest integer and
/// must not exceed `maxval`; 16-bit samples are written big-endian.
pub fn write_pgm(frame: &ImageFrame, maxval: u32, path: &Path) -> Result<()> {
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MaxvalOverflow(maxval));
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let header = format!("P5\n{} {}\n{}\n", frame.width, frame.height, maxval);
    out.write_all(header.as_bytes()).map_err(|e| io_err(path, e))?;
    for &v in &frame.pixels {
        let q = v.round();
        if q < 0.0 || q > maxval as f64 {
            return Err(Error::InvalidImage(format!(
                "pixel {v} outside [0, {maxval}] for PGM output"
            )));
        }
        let q = q as u32;
        if maxval > 255 {
            out.write_all(&(q as u16).to_be_bytes())
                .map_err(|e| io_err(path, e))?;
        } else {
            out.write_all(&[q as u8]).map_err(|e| io_err(path, e))?;
        }
    }
    out.flush().map_err(|e| io_err(path, e))
}
