//! Sublevel-set cubical persistence of 2-d frames under the T-construction
//! (pixels are top-dimensional cubes; every lower cube takes the minimum
//! value of the pixels containing it).
//!
//! Dimension 0 runs union-find over pixels in increasing value with the
//! elder rule: black regions connect through diagonals, so pixel adjacency
//! is 8-connectivity. Dimension 1 is computed by duality: a hole is a
//! 4-connected white region not touching the frame border, so a reverse
//! sweep over superlevel sets with a virtual border node finds every cycle.
//! Both passes are near-linear after the initial sort.
//!
//! Equal pixel values are processed in row-major order and ties among
//! components are broken toward the lexicographically smallest root, which
//! makes diagrams deterministic. Zero-persistence pairs produced by tied
//! merges are kept; downstream thresholds discard them.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::imagio::{ImageFrame, PixelSet};

/// Pixel coordinate, `x` column and `y` row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl fmt::Display for Pixel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The cell whose insertion killed a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeathCell {
    /// Dimension 0: the adjacency that merged two components. `entering`
    /// is the pixel whose insertion triggered the merge.
    Merge { entering: Pixel, neighbor: Pixel },
    /// Dimension 1: the last pixel of the enclosed white region.
    Fill { pixel: Pixel },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistencePair {
    pub dim: u8,
    pub birth: f64,
    /// `f64::INFINITY` for essential classes until resolved.
    pub death: f64,
    /// Dimension 0: the minimum pixel of the dying component (positive cell).
    /// Dimension 1: the pixel whose entry enclosed the white region.
    pub birth_pixel: Pixel,
    pub death_cell: Option<DeathCell>,
}

impl PersistencePair {
    pub fn lifetime(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_infinite(&self) -> bool {
        self.death.is_infinite()
    }

    /// Alive at threshold `t` means `birth <= t < death`.
    pub fn is_alive_at(&self, t: f64) -> bool {
        self.birth <= t && t < self.death
    }
}

/// Where a diagram came from; informational only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagramProvenance {
    pub frame_index: Option<usize>,
    pub sigma: Option<f64>,
    pub region: Option<String>,
}

/// Multiset of persistence pairs; duplicates are meaningful.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersistenceDiagram {
    pub pairs: Vec<PersistencePair>,
    pub provenance: DiagramProvenance,
}

impl PersistenceDiagram {
    pub fn pairs_in_dim(&self, dim: u8) -> impl Iterator<Item = &PersistencePair> {
        self.pairs.iter().filter(move |p| p.dim == dim)
    }

    /// Number of dimension-`dim` classes alive at threshold `t`.
    pub fn alive_at(&self, dim: u8, t: f64) -> usize {
        self.pairs_in_dim(dim).filter(|p| p.is_alive_at(t)).count()
    }

    /// Finite lifetimes in one dimension (infinite pairs skipped).
    pub fn finite_lifetimes(&self, dim: u8) -> Vec<f64> {
        self.pairs_in_dim(dim)
            .filter(|p| !p.is_infinite())
            .map(|p| p.lifetime())
            .collect()
    }

    pub fn infinite_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_infinite()).count()
    }

    /// CSV rows `dim,birth,death,birth_x,birth_y`; infinite deaths print as
    /// `inf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "dim,birth,death,birth_x,birth_y")?;
        for p in &self.pairs {
            let death = if p.is_infinite() {
                "inf".to_string()
            } else {
                format!("{}", p.death)
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                p.dim, p.birth, death, p.birth_pixel.x, p.birth_pixel.y
            )?;
        }
        Ok(())
    }
}

/// How to replace infinite death times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfiniteMode {
    /// Largest finite death in the diagram.
    MaxFiniteDeath,
    /// Largest pixel value of the frame the diagram came from.
    MaxPixelValue,
}

/// Replaces every infinite death per `mode`; finite pairs are untouched.
/// `MaxFiniteDeath` considers only positive-persistence pairs, since
/// zero-persistence merge records are artifacts of tie processing.
pub fn resolve_infinite(
    diagram: &PersistenceDiagram,
    mode: InfiniteMode,
    context: &ImageFrame,
) -> Result<PersistenceDiagram> {
    let substitute = match mode {
        InfiniteMode::MaxFiniteDeath => diagram
            .pairs
            .iter()
            .filter(|p| !p.is_infinite() && p.death > p.birth)
            .map(|p| p.death)
            .fold(f64::NEG_INFINITY, f64::max),
        InfiniteMode::MaxPixelValue => context.max_value(),
    };
    if !substitute.is_finite() {
        return Err(Error::NoFinitePair);
    }
    let mut out = diagram.clone();
    for p in &mut out.pairs {
        if p.is_infinite() {
            p.death = substitute;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Union-find over pixels
// ---------------------------------------------------------------------------

/// Union-find whose roots carry a packed `(value, pixel)` key identifying
/// the component's representative cell (minimum for the sublevel sweep,
/// maximum for the reversed sweep). Packing the IEEE bits of a nonnegative
/// f64 above the pixel index gives a single integer whose natural order is
/// exactly (value, pixel).
struct UnionFind {
    parent: Vec<u32>,
    key: Vec<u128>,
}

const INACTIVE: u32 = u32::MAX;

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: vec![INACTIVE; n],
            key: vec![0; n],
        }
    }

    #[inline]
    fn activate(&mut self, i: u32, key: u128) {
        self.parent[i as usize] = i;
        self.key[i as usize] = key;
    }

    #[inline]
    fn is_active(&self, i: u32) -> bool {
        self.parent[i as usize] != INACTIVE
    }

    #[inline]
    fn find(&mut self, mut i: u32) -> u32 {
        // Path halving.
        while self.parent[i as usize] != i {
            let p = self.parent[i as usize];
            self.parent[i as usize] = self.parent[p as usize];
            i = self.parent[i as usize];
        }
        i
    }

    /// Merges two distinct roots; the elder side (smaller key) stays the
    /// root, so the key array never needs rewriting. Returns the new root
    /// and the dying component's key. In the sweeps here the younger side
    /// is usually a freshly activated singleton, which keeps trees shallow;
    /// path halving covers the rest.
    #[inline]
    fn union(&mut self, ra: u32, rb: u32) -> (u32, u128) {
        let (top, sub) = if self.key[ra as usize] < self.key[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[sub as usize] = top;
        (top, self.key[sub as usize])
    }
}

#[inline]
fn pack_key(value_bits: u64, idx: u32) -> u128 {
    ((value_bits as u128) << 32) | idx as u128
}

#[inline]
fn key_index(key: u128) -> u32 {
    (key & 0xFFFF_FFFF) as u32
}

#[inline]
fn pixel_of(idx: u32, width: usize) -> Pixel {
    Pixel {
        x: (idx as usize % width) as u32,
        y: (idx as usize / width) as u32,
    }
}

/// Pixel keys sorted ascending. `flip` complements the value bits, which
/// reverses the value order while keeping ties in ascending pixel order.
/// Frames of small nonnegative integers (every raw count frame) take a
/// counting-sort path; everything else falls back to a comparison sort.
fn sorted_keys(values: &[f64], domain: Option<&PixelSet>, width: usize, flip: bool) -> Vec<u128> {
    let included = |idx: usize| -> bool {
        domain.is_none_or(|set| set.contains(idx % width, idx / width))
    };
    let bits = |v: f64| -> u64 {
        // +0.0 normalizes a negative zero so the bit order matches the
        // numeric order.
        let v = v + 0.0;
        if flip {
            !v.to_bits()
        } else {
            v.to_bits()
        }
    };

    const MAX_BUCKETS: usize = 1 << 17;
    let small_int = values.len() >= (1 << 15)
        && values
            .iter()
            .all(|v| v.fract() == 0.0 && *v < MAX_BUCKETS as f64);
    if small_int {
        let mut counts = vec![0u32; MAX_BUCKETS + 1];
        let mut n = 0usize;
        for (idx, &v) in values.iter().enumerate() {
            if included(idx) {
                let mut slot = v as usize;
                if flip {
                    slot = MAX_BUCKETS - 1 - slot;
                }
                counts[slot + 1] += 1;
                n += 1;
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut out = vec![0u128; n];
        for (idx, &v) in values.iter().enumerate() {
            if included(idx) {
                let mut slot = v as usize;
                if flip {
                    slot = MAX_BUCKETS - 1 - slot;
                }
                out[counts[slot] as usize] = pack_key(bits(v), idx as u32);
                counts[slot] += 1;
            }
        }
        return out;
    }

    let mut keys: Vec<u128> = Vec::with_capacity(values.len());
    for (idx, &v) in values.iter().enumerate() {
        if included(idx) {
            keys.push(pack_key(bits(v), idx as u32));
        }
    }
    keys.sort_unstable();
    keys
}

/// All dimension-0 pairs of the sublevel filtration, restricted to `domain`
/// when given. Exactly one infinite pair is produced per 8-connected
/// component of the domain.
pub fn compute_pd0(frame: &ImageFrame, domain: Option<&PixelSet>) -> Result<PersistenceDiagram> {
    let (w, h) = (frame.width(), frame.height());
    if let Some(set) = domain {
        if set.width() != w || set.height() != h {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                found: (set.width(), set.height()),
            });
        }
        if set.is_empty() {
            return Err(Error::EmptyDomain);
        }
    }
    let values = frame.pixels();
    let order = sorted_keys(values, domain, w, false);

    let mut uf = UnionFind::new(w * h);
    let mut pairs = Vec::with_capacity(order.len());

    for &key in &order {
        let p = key_index(key);
        uf.activate(p, key);
        let v = values[p as usize];
        let (px, py) = (p as usize % w, p as usize / w);
        let x_lo = px.saturating_sub(1);
        let x_hi = (px + 1).min(w - 1);
        let y_lo = py.saturating_sub(1);
        let y_hi = (py + 1).min(h - 1);
        // p was just activated as its own root; track the merged root so no
        // find(p) is ever needed.
        let mut rp = p;
        let entering = Pixel { x: px as u32, y: py as u32 };
        for qy in y_lo..=y_hi {
            for qx in x_lo..=x_hi {
                let q = (qy * w + qx) as u32;
                if q == p || !uf.is_active(q) {
                    continue;
                }
                let rq = uf.find(q);
                if rp == rq {
                    continue;
                }
                // Elder rule: the smaller (birth, pixel) key survives.
                let (top, dying) = uf.union(rp, rq);
                rp = top;
                let birth_idx = key_index(dying);
                pairs.push(PersistencePair {
                    dim: 0,
                    birth: values[birth_idx as usize],
                    death: v,
                    birth_pixel: pixel_of(birth_idx, w),
                    death_cell: Some(DeathCell::Merge {
                        entering,
                        neighbor: Pixel { x: qx as u32, y: qy as u32 },
                    }),
                });
            }
        }
    }

    // Surviving roots are the essential classes.
    let mut essentials: Vec<u128> = order
        .iter()
        .map(|&key| key_index(key))
        .filter(|&p| uf.parent[p as usize] == p)
        .map(|p| uf.key[p as usize])
        .collect();
    essentials.sort_unstable();
    for key in essentials {
        pairs.push(PersistencePair {
            dim: 0,
            birth: values[key_index(key) as usize],
            death: f64::INFINITY,
            birth_pixel: pixel_of(key_index(key), w),
            death_cell: None,
        });
    }

    Ok(PersistenceDiagram { pairs, provenance: DiagramProvenance::default() })
}

/// All dimension-1 pairs of the sublevel filtration over the full frame.
///
/// Runs the dual sweep: pixels enter in decreasing value as "white", joined
/// by 4-adjacency, with a virtual node for everything beyond the frame
/// border. A white component dies (= a hole is born, at the entering pixel's
/// value) when it merges into an older component or into the border; the
/// hole's death is the maximum pixel of the region, where it was filled.
/// On a full rectangle every component eventually reaches the border, so
/// there is no infinite pair.
pub fn compute_pd1(frame: &ImageFrame) -> Result<PersistenceDiagram> {
    let (w, h) = (frame.width(), frame.height());
    let values = frame.pixels();
    let n = w * h;
    let border = n as u32;

    // Reverse sweep: complemented value bits sort descending by value with
    // ties in ascending pixel order. The virtual border node carries the
    // all-zero key, strictly below any finite pixel key, so it survives
    // every merge; components absorbed into it inherit key zero, and a
    // merge whose dying key is zero joins two border-connected regions and
    // is not a cycle event.
    let order = sorted_keys(values, None, w, true);

    let mut uf = UnionFind::new(n + 1);
    uf.activate(border, 0);
    let mut pairs = Vec::with_capacity(order.len());

    for &key in &order {
        let p = key_index(key);
        uf.activate(p, key);
        let v = values[p as usize];
        let (px, py) = (p as usize % w, p as usize / w);
        let mut rp = p;
        let entering = Pixel { x: px as u32, y: py as u32 };

        let unite = |uf: &mut UnionFind, pairs: &mut Vec<PersistencePair>, rp: &mut u32, q: u32| {
            let rq = uf.find(q);
            if *rp == rq {
                return;
            }
            let (top, dying) = uf.union(*rp, rq);
            *rp = top;
            if dying == 0 {
                return;
            }
            let max_pixel = key_index(dying);
            pairs.push(PersistencePair {
                dim: 1,
                birth: v,
                death: values[max_pixel as usize],
                birth_pixel: entering,
                death_cell: Some(DeathCell::Fill { pixel: pixel_of(max_pixel, w) }),
            });
        };

        if px == 0 || py == 0 || px == w - 1 || py == h - 1 {
            unite(&mut uf, &mut pairs, &mut rp, border);
        }
        if px > 0 && uf.is_active(p - 1) {
            unite(&mut uf, &mut pairs, &mut rp, p - 1);
        }
        if px + 1 < w && uf.is_active(p + 1) {
            unite(&mut uf, &mut pairs, &mut rp, p + 1);
        }
        if py > 0 && uf.is_active(p - w as u32) {
            unite(&mut uf, &mut pairs, &mut rp, p - w as u32);
        }
        if py + 1 < h && uf.is_active(p + w as u32) {
            unite(&mut uf, &mut pairs, &mut rp, p + w as u32);
        }
    }
    // On a full rectangle everything drains into the border component.
    debug_assert_eq!({ let r = uf.find(0); uf.key[r as usize] }, 0);

    Ok(PersistenceDiagram { pairs, provenance: DiagramProvenance::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(width: usize, height: usize, px: &[f64]) -> ImageFrame {
        ImageFrame::new(width, height, px.to_vec()).unwrap()
    }

    /// Positive-persistence (birth < death) pairs as a sortable list.
    fn positive(diagram: &PersistenceDiagram, dim: u8) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = diagram
            .pairs_in_dim(dim)
            .filter(|p| p.death > p.birth)
            .map(|p| (p.birth, p.death))
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn pd0_of_1x4_ramp() {
        let f = frame(4, 1, &[3.0, 1.0, 2.0, 0.0]);
        let d = compute_pd0(&f, None).unwrap();
        assert_eq!(positive(&d, 0), vec![(0.0, f64::INFINITY), (1.0, 2.0)]);
        // The finite positive class is created by the value-1 pixel.
        let finite = d
            .pairs_in_dim(0)
            .find(|p| !p.is_infinite() && p.death > p.birth)
            .unwrap();
        assert_eq!(finite.birth_pixel, Pixel { x: 1, y: 0 });
    }

    #[test]
    fn pd0_of_constant_frame() {
        let f = ImageFrame::filled(3, 3, 2.0);
        let d = compute_pd0(&f, None).unwrap();
        assert_eq!(d.infinite_count(), 1);
        assert_eq!(positive(&d, 0), vec![(2.0, f64::INFINITY)]);
        // Tied merges stay in the diagram as zero-persistence pairs.
        assert_eq!(d.pairs.len(), 9);
    }

    #[test]
    fn diagonal_pixels_are_8_connected() {
        let f = frame(2, 2, &[0.0, 5.0, 5.0, 0.0]);
        let d = compute_pd0(&f, None).unwrap();
        assert_eq!(positive(&d, 0), vec![(0.0, f64::INFINITY)]);
    }

    #[test]
    fn pd0_restricted_domain() {
        // Mask out the middle column: two components, two infinite pairs.
        let f = frame(3, 1, &[1.0, 0.0, 2.0]);
        let mut mask = PixelSet::empty(3, 1);
        mask.insert(0, 0);
        mask.insert(2, 0);
        let d = compute_pd0(&f, Some(&mask)).unwrap();
        assert_eq!(
            positive(&d, 0),
            vec![(1.0, f64::INFINITY), (2.0, f64::INFINITY)]
        );
        let empty = PixelSet::empty(3, 1);
        assert!(matches!(
            compute_pd0(&f, Some(&empty)),
            Err(Error::EmptyDomain)
        ));
    }

    #[test]
    fn pd1_ring_around_center() {
        let f = frame(
            3,
            3,
            &[0.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0],
        );
        let d = compute_pd1(&f).unwrap();
        assert_eq!(positive(&d, 1), vec![(0.0, 9.0)]);
        let pair = d.pairs_in_dim(1).find(|p| p.death > p.birth).unwrap();
        assert_eq!(pair.death_cell, Some(DeathCell::Fill { pixel: Pixel { x: 1, y: 1 } }));
    }

    #[test]
    fn pd1_of_monotone_gradient_is_empty() {
        let f = ImageFrame::from_fn(4, 4, |x, y| (y * 4 + x) as f64);
        let d = compute_pd1(&f).unwrap();
        assert!(positive(&d, 1).is_empty());
    }

    #[test]
    fn pd1_of_constant_frame_is_empty() {
        let f = ImageFrame::filled(4, 3, 1.0);
        let d = compute_pd1(&f).unwrap();
        assert!(positive(&d, 1).is_empty());
        assert_eq!(d.infinite_count(), 0);
    }

    #[test]
    fn pd1_two_chambers_split_by_wall() {
        // Ring of zeros around cells 9 | 5 | 8; the wall at 5 splits the
        // white chamber, so holes (0,9) and (5,8).
        let f = frame(
            5,
            3,
            &[
                0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 9.0, 5.0, 8.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0,
            ],
        );
        let d = compute_pd1(&f).unwrap();
        assert_eq!(positive(&d, 1), vec![(0.0, 9.0), (5.0, 8.0)]);
    }

    #[test]
    fn resolve_infinite_modes() {
        let f = frame(4, 1, &[3.0, 1.0, 2.0, 0.0]);
        let d = compute_pd0(&f, None).unwrap();
        let finite = resolve_infinite(&d, InfiniteMode::MaxFiniteDeath, &f).unwrap();
        assert_eq!(positive(&finite, 0), vec![(0.0, 2.0), (1.0, 2.0)]);

        let constant = compute_pd0(&ImageFrame::filled(2, 2, 0.0), None).unwrap();
        let ctx = frame(2, 2, &[0.0, 7.0, 3.0, 0.0]);
        let resolved = resolve_infinite(&constant, InfiniteMode::MaxPixelValue, &ctx).unwrap();
        assert_eq!(positive(&resolved, 0), vec![(0.0, 7.0)]);
        assert!(matches!(
            resolve_infinite(&constant, InfiniteMode::MaxFiniteDeath, &ctx),
            Err(Error::NoFinitePair)
        ));

        let untouched = resolve_infinite(&finite, InfiniteMode::MaxFiniteDeath, &f).unwrap();
        assert_eq!(untouched.pairs, finite.pairs);
    }

    #[test]
    fn csv_format() {
        let f = frame(4, 1, &[3.0, 1.0, 2.0, 0.0]);
        let d = compute_pd0(&f, None).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("dim,birth,death,birth_x,birth_y"));
        assert!(text.lines().any(|l| l == "0,1,2,1,0"));
        assert!(text.lines().any(|l| l == "0,0,inf,3,0"));
    }

    #[test]
    fn translation_invariance_with_constant_padding() {
        let inner = [0.0, 4.0, 2.0, 7.0, 1.0, 3.0, 5.0, 6.0, 8.0];
        let base = ImageFrame::from_fn(7, 7, |x, y| {
            if (1..4).contains(&x) && (1..4).contains(&y) {
                inner[(y - 1) * 3 + (x - 1)]
            } else {
                9.0
            }
        });
        let shifted = ImageFrame::from_fn(7, 7, |x, y| {
            if (3..6).contains(&x) && (2..5).contains(&y) {
                inner[(y - 2) * 3 + (x - 3)]
            } else {
                9.0
            }
        });
        assert_eq!(
            positive(&compute_pd0(&base, None).unwrap(), 0),
            positive(&compute_pd0(&shifted, None).unwrap(), 0)
        );
        assert_eq!(
            positive(&compute_pd1(&base).unwrap(), 1),
            positive(&compute_pd1(&shifted).unwrap(), 1)
        );
    }

    #[test]
    fn elder_rule_birth_matches_positive_cell() {
        let f = frame(
            4,
            4,
            &[
                5.0, 6.0, 7.0, 8.0, //
                4.0, 0.0, 9.0, 1.0, //
                5.0, 7.0, 9.0, 2.0, //
                6.0, 5.0, 4.0, 3.0,
            ],
        );
        let d = compute_pd0(&f, None).unwrap();
        for p in d.pairs_in_dim(0) {
            let v = f.get(p.birth_pixel.x as usize, p.birth_pixel.y as usize);
            assert_eq!(v, p.birth);
        }
    }
}
