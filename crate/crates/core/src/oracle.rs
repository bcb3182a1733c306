//! Brute-force ground truth for the persistence engine.
//!
//! Builds the full T-construction cube complex of a frame and runs the
//! standard column reduction of the Z2 boundary matrix, with cells ordered
//! by (filtration value, dimension, id). Deliberately slow and simple:
//! dense bit columns, no clearing or twist tricks, so that it can be
//! trusted as a reference. Also provides Betti numbers at a fixed threshold
//! by flood fill, straight from the connectivity definitions (8-connected
//! black regions; 4-connected white regions away from the border).

use crate::error::{Error, Result};
use crate::imagio::ImageFrame;

const GUARD: usize = 32;

#[derive(Debug, Clone, Copy)]
struct Cell {
    dim: u8,
    value: f64,
    faces: [u32; 4],
    face_count: u8,
}

/// Elementary cubes of a frame with their filtration values and faces.
/// Cube values follow the T-construction: the minimum over the pixels
/// (2-cubes) containing the cube.
pub struct CubeComplex {
    cells: Vec<Cell>,
}

impl CubeComplex {
    /// Frames larger than 32x32 are rejected; reduction is quadratic and
    /// this type exists for testing only.
    pub fn from_frame(frame: &ImageFrame) -> Result<Self> {
        let (w, h) = (frame.width(), frame.height());
        if w > GUARD || h > GUARD {
            return Err(Error::OracleGuardRail { width: w, height: h });
        }

        // Cell ids: vertices, then horizontal edges, vertical edges, squares.
        let nv = (w + 1) * (h + 1);
        let nhe = w * (h + 1);
        let nve = (w + 1) * h;
        let vertex = |x: usize, y: usize| -> u32 { (y * (w + 1) + x) as u32 };
        let hedge = |x: usize, y: usize| -> u32 { (nv + y * w + x) as u32 };
        let vedge = |x: usize, y: usize| -> u32 { (nv + nhe + y * (w + 1) + x) as u32 };

        // Minimum pixel value over a rectangle of pixels clipped to the grid.
        let pixel_min = |xs: std::ops::Range<i64>, ys: std::ops::Range<i64>| -> f64 {
            let mut m = f64::INFINITY;
            for py in ys {
                for px in xs.clone() {
                    if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                        m = m.min(frame.get(px as usize, py as usize));
                    }
                }
            }
            m
        };

        let mut cells = Vec::with_capacity(nv + nhe + nve + w * h);
        for y in 0..=h {
            for x in 0..=w {
                cells.push(Cell {
                    dim: 0,
                    value: pixel_min(x as i64 - 1..x as i64 + 1, y as i64 - 1..y as i64 + 1),
                    faces: [0; 4],
                    face_count: 0,
                });
            }
        }
        for y in 0..=h {
            for x in 0..w {
                cells.push(Cell {
                    dim: 1,
                    value: pixel_min(x as i64..x as i64 + 1, y as i64 - 1..y as i64 + 1),
                    faces: [vertex(x, y), vertex(x + 1, y), 0, 0],
                    face_count: 2,
                });
            }
        }
        for y in 0..h {
            for x in 0..=w {
                cells.push(Cell {
                    dim: 1,
                    value: pixel_min(x as i64 - 1..x as i64 + 1, y as i64..y as i64 + 1),
                    faces: [vertex(x, y), vertex(x, y + 1), 0, 0],
                    face_count: 2,
                });
            }
        }
        for y in 0..h {
            for x in 0..w {
                cells.push(Cell {
                    dim: 2,
                    value: frame.get(x, y),
                    faces: [hedge(x, y), hedge(x, y + 1), vedge(x, y), vedge(x + 1, y)],
                    face_count: 4,
                });
            }
        }
        Ok(CubeComplex { cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells of each dimension with value <= t: the (V, E, F) of the
    /// thresholded complex.
    pub fn counts_at(&self, t: f64) -> (usize, usize, usize) {
        let mut counts = [0usize; 3];
        for c in &self.cells {
            if c.value <= t {
                counts[c.dim as usize] += 1;
            }
        }
        (counts[0], counts[1], counts[2])
    }
}

/// A (birth, death) pair from the reduction; death is `f64::INFINITY` for
/// essential classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePair {
    pub dim: u8,
    pub birth: f64,
    pub death: f64,
}

impl OraclePair {
    pub fn is_alive_at(&self, t: f64) -> bool {
        self.birth <= t && t < self.death
    }
}

/// Positive-persistence pairs (birth < death) of one dimension, sorted.
pub fn positive_pairs(pairs: &[OraclePair], dim: u8) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|p| p.dim == dim && p.death > p.birth)
        .map(|p| (p.birth, p.death))
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

// Dense Z2 column keyed by position in the sorted cell order.
#[derive(Clone)]
struct BitColumn {
    words: Vec<u64>,
}

impl BitColumn {
    fn zero(len: usize) -> Self {
        BitColumn { words: vec![0; len.div_ceil(64)] }
    }

    fn set(&mut self, bit: usize) {
        self.words[bit / 64] ^= 1 << (bit % 64);
    }

    fn xor(&mut self, other: &BitColumn) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a ^= b;
        }
    }

    fn low(&self) -> Option<usize> {
        for (i, w) in self.words.iter().enumerate().rev() {
            if *w != 0 {
                return Some(i * 64 + 63 - w.leading_zeros() as usize);
            }
        }
        None
    }
}

/// Standard persistence column reduction. Emits every pair, including
/// zero-persistence ones, plus essential classes with infinite death.
pub fn reduce(complex: &CubeComplex) -> Vec<OraclePair> {
    let n = complex.cells.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| {
        let ca = &complex.cells[a as usize];
        let cb = &complex.cells[b as usize];
        ca.value
            .partial_cmp(&cb.value)
            .unwrap()
            .then(ca.dim.cmp(&cb.dim))
            .then(a.cmp(&b))
    });
    let mut position = vec![0u32; n];
    for (pos, &cell) in order.iter().enumerate() {
        position[cell as usize] = pos as u32;
    }

    let mut pivot_owner: Vec<Option<u32>> = vec![None; n];
    let mut reduced: Vec<Option<BitColumn>> = vec![None; n];
    let mut paired = vec![false; n];
    let mut pairs = Vec::new();

    for (pos, &cell_id) in order.iter().enumerate() {
        let cell = &complex.cells[cell_id as usize];
        if cell.dim == 0 {
            continue;
        }
        let mut col = BitColumn::zero(n);
        for f in 0..cell.face_count as usize {
            col.set(position[cell.faces[f] as usize] as usize);
        }
        let mut low = col.low();
        while let Some(l) = low {
            match pivot_owner[l] {
                Some(owner) => {
                    col.xor(reduced[owner as usize].as_ref().unwrap());
                    low = col.low();
                }
                None => break,
            }
        }
        if let Some(l) = low {
            pivot_owner[l] = Some(pos as u32);
            let birth_cell = &complex.cells[order[l] as usize];
            pairs.push(OraclePair {
                dim: birth_cell.dim,
                birth: birth_cell.value,
                death: cell.value,
            });
            paired[l] = true;
            paired[pos] = true;
            reduced[pos] = Some(col);
        }
        // A vanished column marks `cell` as positive; essentials are
        // collected below.
    }

    for (pos, &cell_id) in order.iter().enumerate() {
        let cell = &complex.cells[cell_id as usize];
        let is_positive = cell.dim == 0 || reduced[pos].is_none();
        if is_positive && !paired[pos] && cell.dim <= 1 {
            pairs.push(OraclePair {
                dim: cell.dim,
                birth: cell.value,
                death: f64::INFINITY,
            });
        }
    }
    pairs
}

/// Betti numbers of the thresholded image by flood fill: `beta_0` counts
/// 8-connected components of `{I <= t}`, `beta_1` counts 4-connected
/// components of `{I > t}` that do not touch the frame border.
pub fn betti_at(frame: &ImageFrame, t: f64) -> (usize, usize) {
    let (w, h) = (frame.width(), frame.height());
    let black = |x: usize, y: usize| frame.get(x, y) <= t;

    let mut seen = vec![false; w * h];
    let mut beta0 = 0;
    let mut beta1 = 0;
    let mut stack = Vec::new();

    for sy in 0..h {
        for sx in 0..w {
            if seen[sy * w + sx] {
                continue;
            }
            let start_black = black(sx, sy);
            seen[sy * w + sx] = true;
            stack.push((sx, sy));
            let mut touches_border = false;
            while let Some((x, y)) = stack.pop() {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    touches_border = true;
                }
                let neighbors: &[(i64, i64)] = if start_black {
                    &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
                } else {
                    &[(-1, 0), (1, 0), (0, -1), (0, 1)]
                };
                for (dx, dy) in neighbors {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if !seen[ny * w + nx] && black(nx, ny) == start_black {
                        seen[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            if start_black {
                beta0 += 1;
            } else if !touches_border {
                beta1 += 1;
            }
        }
    }
    (beta0, beta1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubical::{compute_pd0, compute_pd1};
    use crate::rng::SplitMix64;

    fn frame(width: usize, height: usize, px: &[f64]) -> ImageFrame {
        ImageFrame::new(width, height, px.to_vec()).unwrap()
    }

    #[test]
    fn single_pixel() {
        let f = frame(1, 1, &[4.0]);
        let pairs = reduce(&CubeComplex::from_frame(&f).unwrap());
        assert_eq!(positive_pairs(&pairs, 0), vec![(4.0, f64::INFINITY)]);
        assert!(positive_pairs(&pairs, 1).is_empty());
    }

    #[test]
    fn ramp_1x4() {
        let f = frame(4, 1, &[3.0, 1.0, 2.0, 0.0]);
        let pairs = reduce(&CubeComplex::from_frame(&f).unwrap());
        assert_eq!(
            positive_pairs(&pairs, 0),
            vec![(0.0, f64::INFINITY), (1.0, 2.0)]
        );
    }

    #[test]
    fn ring_hole() {
        let f = frame(3, 3, &[0.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0]);
        let pairs = reduce(&CubeComplex::from_frame(&f).unwrap());
        assert_eq!(positive_pairs(&pairs, 1), vec![(0.0, 9.0)]);
    }

    #[test]
    fn guard_rail() {
        let f = ImageFrame::filled(33, 2, 0.0);
        assert!(matches!(
            CubeComplex::from_frame(&f),
            Err(Error::OracleGuardRail { .. })
        ));
    }

    #[test]
    fn betti_examples() {
        let all_low = ImageFrame::filled(3, 2, 1.0);
        assert_eq!(betti_at(&all_low, 1.0), (1, 0));

        let diag = frame(2, 2, &[0.0, 5.0, 5.0, 0.0]);
        assert_eq!(betti_at(&diag, 0.0), (1, 0));

        let ring = frame(3, 3, &[0.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(betti_at(&ring, 0.0), (1, 1));
    }

    fn random_frame(rng: &mut SplitMix64, w: usize, h: usize, levels: u64) -> ImageFrame {
        ImageFrame::from_fn(w, h, |_, _| (rng.next() % levels) as f64)
    }

    #[test]
    fn engine_matches_reduction_on_random_frames() {
        let mut rng = SplitMix64::new(0x0bac1e);
        for round in 0..120 {
            let w = 1 + (rng.next() % 7) as usize;
            let h = 1 + (rng.next() % 7) as usize;
            let f = random_frame(&mut rng, w, h, 6);
            let truth = reduce(&CubeComplex::from_frame(&f).unwrap());
            let pd0 = compute_pd0(&f, None).unwrap();
            let pd1 = compute_pd1(&f).unwrap();
            let engine0: Vec<(f64, f64)> = {
                let mut v: Vec<(f64, f64)> = pd0
                    .pairs
                    .iter()
                    .filter(|p| p.death > p.birth)
                    .map(|p| (p.birth, p.death))
                    .collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            };
            let engine1: Vec<(f64, f64)> = {
                let mut v: Vec<(f64, f64)> = pd1
                    .pairs
                    .iter()
                    .filter(|p| p.death > p.birth)
                    .map(|p| (p.birth, p.death))
                    .collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            };
            assert_eq!(engine0, positive_pairs(&truth, 0), "round {round} dim0 {f:?}");
            assert_eq!(engine1, positive_pairs(&truth, 1), "round {round} dim1 {f:?}");
        }
    }

    #[test]
    fn betti_matches_alive_pairs_at_all_thresholds() {
        let mut rng = SplitMix64::new(0xbe771);
        for _ in 0..60 {
            let w = 1 + (rng.next() % 6) as usize;
            let h = 1 + (rng.next() % 6) as usize;
            let f = random_frame(&mut rng, w, h, 5);
            let pairs = reduce(&CubeComplex::from_frame(&f).unwrap());
            for t in 0..5 {
                let t = t as f64;
                let (b0, b1) = betti_at(&f, t);
                let alive0 = pairs.iter().filter(|p| p.dim == 0 && p.is_alive_at(t)).count();
                let alive1 = pairs.iter().filter(|p| p.dim == 1 && p.is_alive_at(t)).count();
                assert_eq!((alive0, alive1), (b0, b1), "t={t} {f:?}");
            }
        }
    }
}
