//! Separable Gaussian smoothing of a sparse 6D space.
//!
//! Occupied bins are grouped into clusters whose smoothed supports cannot
//! touch (Chebyshev gap above twice the radius). Each cluster is convolved on
//! its own, in a dense block when its padded bounding box is small enough and
//! in a sparse map otherwise. Both paths gather every output bin's axis
//! neighbors in ascending offset order, so they produce identical bits.

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};

use super::{check_kernel, gaussian_weights, BinKey, HoughSpace};
use crate::error::{Error, Result};

/// Largest padded cluster box (cells) convolved densely.
const DENSE_CELL_LIMIT: usize = 1 << 22;

/// Largest candidate-group box (cells) convolved densely during pruning.
const GROUP_CELL_LIMIT: usize = 1 << 25;

/// Spreads every bin's mass over its Chebyshev-radius neighborhood with a
/// normalized Gaussian weight. Total mass is conserved.
///
/// Runs as six 1D passes, one per axis, so the cost follows the occupied
/// support rather than the full `(2r + 1)^6` kernel.
pub fn gaussian_smooth(h: &HoughSpace, sigma_bins: f64, radius_bins: u32) -> Result<HoughSpace> {
    check_kernel(sigma_bins, radius_bins)?;
    let taps = taps(sigma_bins, radius_bins);
    let bins = clusters(h, radius_bins)
        .into_par_iter()
        .map(|c| smooth_cluster(&c, &taps, radius_bins).into_bins())
        .flatten_iter()
        .collect();
    Ok(HoughSpace {
        bins,
        b_r: h.b_r,
        b_t: h.b_t,
        raw_votes: h.raw_votes.clone(),
    })
}

/// `argmax_bin(gaussian_smooth(h, ..))` without materializing the smoothed
/// space.
pub fn smoothed_argmax(h: &HoughSpace, sigma_bins: f64, radius_bins: u32) -> Result<(BinKey, f64)> {
    check_kernel(sigma_bins, radius_bins)?;
    let taps = taps(sigma_bins, radius_bins);
    let bins = h.sorted_bins();
    let (upper, lower) = bounds(&bins, &taps, radius_bins);
    let upper: FxHashMap<BinKey, f64> = bins.iter().map(|b| b.0).zip(upper).collect();
    clusters(h, radius_bins)
        .into_par_iter()
        .filter_map(|c| {
            let candidates: Vec<(BinKey, f64)> = c.iter().copied().filter(|b| upper[&b.0] >= lower).collect();
            if candidates.is_empty() {
                return None;
            }
            let (origin, dims, cells) = padded_cells(&c, radius_bins);
            if cells <= DENSE_CELL_LIMIT {
                Block::new(origin, dims, &c).smoothed(&taps).inner_argmax(0)
            } else {
                candidate_argmax(&c, &candidates, &taps, radius_bins)
            }
        })
        .reduce_with(better)
        .ok_or(Error::EmptyHoughSpace)
}

/// Heavier wins; equal masses go to the smaller key.
fn better(a: (BinKey, f64), b: (BinKey, f64)) -> (BinKey, f64) {
    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
        b
    } else {
        a
    }
}

fn taps(sigma_bins: f64, radius_bins: u32) -> Vec<(i32, f64)> {
    let r = radius_bins as i32;
    (-r..=r)
        .zip(gaussian_weights(sigma_bins, radius_bins))
        .filter(|(_, w)| *w > 0.0)
        .collect()
}

/// Connected groups of bins at Chebyshev distance ≤ 2r, in key order.
fn clusters(h: &HoughSpace, radius_bins: u32) -> Vec<Vec<(BinKey, f64)>> {
    let bins = h.sorted_bins();
    let reach = 2 * radius_bins as i32;
    let mut parent: Vec<usize> = (0..bins.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    // Keys are sorted, so the first axis bounds the sweep.
    for i in 0..bins.len() {
        for j in i + 1..bins.len() {
            if bins[j].0 .0[0] - bins[i].0 .0[0] > reach {
                break;
            }
            if bins[i].0.chebyshev(&bins[j].0) <= reach as u32 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut slot: FxHashMap<usize, usize> = FxHashMap::default();
    let mut out: Vec<Vec<(BinKey, f64)>> = Vec::new();
    for (i, bin) in bins.into_iter().enumerate() {
        let root = find(&mut parent, i);
        let s = *slot.entry(root).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[s].push(bin);
    }
    out
}

enum Field {
    Dense(Block),
    Sparse(FxHashMap<BinKey, f64>),
}

impl Field {
    fn into_bins(self) -> Vec<(BinKey, f64)> {
        match self {
            Field::Dense(b) => b.nonzero().collect(),
            Field::Sparse(m) => m.into_iter().collect(),
        }
    }

}

fn padded_cells(bins: &[(BinKey, f64)], radius_bins: u32) -> ([i32; 6], [usize; 6], usize) {
    let r = radius_bins as i32;
    let mut lo = [i32::MAX; 6];
    let mut hi = [i32::MIN; 6];
    for (k, _) in bins {
        for a in 0..6 {
            lo[a] = lo[a].min(k.0[a]);
            hi[a] = hi[a].max(k.0[a]);
        }
    }
    let mut dims = [0usize; 6];
    let mut cells = 1usize;
    for a in 0..6 {
        dims[a] = (hi[a] - lo[a] + 1 + 2 * r) as usize;
        cells = cells.saturating_mul(dims[a]);
    }
    (lo.map(|x| x - r), dims, cells)
}

/// Bounds on the smoothed field of key-sorted bins: per bin, an upper bound
/// over its `r`-ball, and one global lower bound on the maximum.
///
/// Every smoothed cell lies within `r` of some bin `b`, and all of its
/// contributors lie within `2r` of `b`, so `w_max * mass(ball(b, 2r))` bounds
/// the field around `b`. The field sampled at the bins themselves gives the
/// lower bound.
fn bounds(bins: &[(BinKey, f64)], taps: &[(i32, f64)], radius_bins: u32) -> (Vec<f64>, f64) {
    let r = radius_bins as i32;
    let reach = 2 * r;
    let mut table = vec![0.0; 2 * reach as usize + 1];
    for &(o, w) in taps {
        table[(o + reach) as usize] = w;
    }
    let weight = |o: i32| table[(o + reach) as usize];
    let w_max = taps.iter().map(|t| t.1).fold(0.0, f64::max).powi(6);
    let mut near: Vec<Vec<usize>> = (0..bins.len()).map(|i| vec![i]).collect();
    for i in 0..bins.len() {
        for j in i + 1..bins.len() {
            if bins[j].0 .0[0] - bins[i].0 .0[0] > reach {
                break;
            }
            if bins[i].0.chebyshev(&bins[j].0) <= reach as u32 {
                near[i].push(j);
                near[j].push(i);
            }
        }
    }
    let upper: Vec<f64> = near
        .iter()
        .map(|n| w_max * n.iter().map(|&j| bins[j].1).sum::<f64>() * (1.0 + 1e-9))
        .collect();
    let lower = near
        .iter()
        .enumerate()
        .map(|(i, n)| {
            n.iter()
                .map(|&j| (0..6).map(|a| weight(bins[j].0 .0[a] - bins[i].0 .0[a])).product::<f64>() * bins[j].1)
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        * (1.0 - 1e-9);
    (upper, lower)
}

/// Smoothed argmax over the `r`-balls of `candidates` within one cluster,
/// densely per candidate group when its box is small and per window otherwise.
fn candidate_argmax(
    bins: &[(BinKey, f64)],
    candidates: &[(BinKey, f64)],
    taps: &[(i32, f64)],
    radius_bins: u32,
) -> Option<(BinKey, f64)> {
    let reach = 2 * radius_bins;
    let groups = clusters(&HoughSpace::from_bins(1.0, 1.0, candidates.iter().copied()), radius_bins);
    groups
        .into_par_iter()
        .filter_map(|group| {
            let (origin, dims, cells) = padded_cells(&group, 2 * radius_bins);
            if cells > GROUP_CELL_LIMIT {
                return group
                    .iter()
                    .filter_map(|(k, _)| {
                        let local: Vec<(BinKey, f64)> =
                            bins.iter().copied().filter(|b| b.0.chebyshev(k) <= reach).collect();
                        window_argmax(*k, &local, taps, radius_bins)
                    })
                    .reduce(better);
            }
            let inside = |k: &BinKey| (0..6).all(|a| (0..dims[a] as i32).contains(&(k.0[a] - origin[a])));
            let local: Vec<(BinKey, f64)> = bins.iter().copied().filter(|b| inside(&b.0)).collect();
            let block = Block::new(origin, dims, &local).smoothed_inner(taps, radius_bins as usize);
            block.inner_argmax(radius_bins as usize)
        })
        .reduce_with(better)
}

/// Smoothed argmax over `ball(center, r)`, given every bin within `2r`.
///
/// Pass `k` is only computed where axes `0..=k` are within `r` of the center,
/// which is exactly the dependency cone of the ball.
fn window_argmax(center: BinKey, bins: &[(BinKey, f64)], taps: &[(i32, f64)], radius_bins: u32) -> Option<(BinKey, f64)> {
    let r = radius_bins as usize;
    let side = 4 * r + 1;
    let origin = center.0.map(|x| x - 2 * r as i32);
    let block = Block::new(origin, [side; 6], bins);
    let strides = block.strides;
    let mut src = block.data;
    let mut dst = vec![0.0; src.len()];
    for axis in 0..6 {
        let ranges: [(usize, usize); 6] = std::array::from_fn(|a| if a <= axis { (r, 3 * r) } else { (0, 4 * r) });
        for_each_cell(&ranges, &strides, |idx| {
            let mut sum = 0.0;
            for &(o, w) in taps {
                sum += src[(idx as i64 - o as i64 * strides[axis] as i64) as usize] * w;
            }
            dst[idx] = sum;
        });
        std::mem::swap(&mut src, &mut dst);
    }
    let mut best: Option<(BinKey, f64)> = None;
    for_each_cell(&[(r, 3 * r); 6], &strides, |idx| {
        if src[idx] > 0.0 {
            let mut k = [0i32; 6];
            let mut rem = idx;
            for a in 0..6 {
                k[a] = origin[a] + (rem / strides[a]) as i32;
                rem %= strides[a];
            }
            let x = (BinKey(k), src[idx]);
            best = Some(best.map_or(x, |b| better(b, x)));
        }
    });
    best
}

/// Visits the flat index of every cell in an inclusive box, in row-major order.
fn for_each_cell(ranges: &[(usize, usize); 6], strides: &[usize; 6], mut f: impl FnMut(usize)) {
    for_each_row(ranges, strides, |start, len| (start..start + len).for_each(&mut f));
}

/// Visits every contiguous last-axis row of an inclusive box as
/// `(first flat index, length)`, in row-major order.
fn for_each_row(ranges: &[(usize, usize); 6], strides: &[usize; 6], mut f: impl FnMut(usize, usize)) {
    let len = ranges[5].1 + 1 - ranges[5].0;
    let mut at = ranges.map(|r| r.0);
    loop {
        f((0..6).map(|a| at[a] * strides[a]).sum(), len);
        let mut a = 4;
        loop {
            if at[a] < ranges[a].1 {
                at[a] += 1;
                break;
            }
            at[a] = ranges[a].0;
            if a == 0 {
                return;
            }
            a -= 1;
        }
    }
}

fn smooth_cluster(bins: &[(BinKey, f64)], taps: &[(i32, f64)], radius_bins: u32) -> Field {
    let (origin, dims, cells) = padded_cells(bins, radius_bins);
    if cells <= DENSE_CELL_LIMIT {
        Field::Dense(Block::new(origin, dims, bins).smoothed(taps))
    } else {
        Field::Sparse(smooth_sparse(bins, taps))
    }
}

fn smooth_sparse(bins: &[(BinKey, f64)], taps: &[(i32, f64)]) -> FxHashMap<BinKey, f64> {
    let mut current: FxHashMap<BinKey, f64> = bins.iter().copied().collect();
    for axis in 0..6 {
        let mut targets: FxHashSet<BinKey> = FxHashSet::default();
        targets.reserve(current.len() * taps.len());
        for key in current.keys() {
            for &(o, _) in taps {
                let mut k = *key;
                k.0[axis] += o;
                targets.insert(k);
            }
        }
        let targets: Vec<BinKey> = targets.into_iter().collect();
        current = targets
            .into_par_iter()
            .filter_map(|k| {
                let mut sum = 0.0;
                for &(o, w) in taps {
                    let mut src = k;
                    src.0[axis] -= o;
                    if let Some(m) = current.get(&src) {
                        sum += m * w;
                    }
                }
                (sum > 0.0).then_some((k, sum))
            })
            .collect();
    }
    current
}

/// Dense row-major box; the last axis is contiguous.
struct Block {
    origin: [i32; 6],
    dims: [usize; 6],
    strides: [usize; 6],
    data: Vec<f64>,
}

impl Block {
    fn new(origin: [i32; 6], dims: [usize; 6], bins: &[(BinKey, f64)]) -> Self {
        let mut strides = [1usize; 6];
        for a in (0..5).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let mut block = Block {
            origin,
            dims,
            strides,
            data: vec![0.0; strides[0] * dims[0]],
        };
        for (k, m) in bins {
            let idx: usize = (0..6).map(|a| (k.0[a] - origin[a]) as usize * strides[a]).sum();
            block.data[idx] = *m;
        }
        block
    }

    fn smoothed(self, taps: &[(i32, f64)]) -> Self {
        self.smoothed_inner(taps, 0)
    }

    /// Like `smoothed`, but only exact `trim` cells away from every face.
    /// Pass `k` skips cells outside the trimmed range on axes `0..=k`,
    /// which no trimmed output depends on.
    fn smoothed_inner(mut self, taps: &[(i32, f64)], trim: usize) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for axis in 0..6 {
            let ranges: [(usize, usize); 6] =
                std::array::from_fn(|a| if a <= axis { (trim, self.dims[a] - 1 - trim) } else { (0, self.dims[a] - 1) });
            let (stride, dim) = (self.strides[axis], self.dims[axis] as i64);
            let src = &self.data;
            // Everything outside the block is zero, so out-of-range taps are
            // skipped; on the last axis they clip the row instead.
            for_each_row(&ranges, &self.strides, |start, len| {
                let row = &mut out[start..start + len];
                row.fill(0.0);
                let c = if axis == 5 { ranges[5].0 as i64 } else { (start / stride) as i64 % dim };
                for &(o, w) in taps {
                    let o = o as i64;
                    let (skip, take) = if axis == 5 {
                        let lo = (o - c).max(0);
                        let hi = (dim + o - c).min(len as i64);
                        (lo, hi - lo)
                    } else if (0..dim).contains(&(c - o)) {
                        (0, len as i64)
                    } else {
                        continue;
                    };
                    if take <= 0 {
                        continue;
                    }
                    let (skip, take) = (skip as usize, take as usize);
                    let from = (start as i64 + skip as i64 - o * stride as i64) as usize;
                    for (cell, m) in row[skip..skip + take].iter_mut().zip(&src[from..from + take]) {
                        *cell += m * w;
                    }
                }
            });
            std::mem::swap(&mut self.data, &mut out);
        }
        self
    }

    /// Argmax over cells at least `trim` away from every face.
    fn inner_argmax(&self, trim: usize) -> Option<(BinKey, f64)> {
        let ranges: [(usize, usize); 6] = std::array::from_fn(|a| (trim, self.dims[a] - 1 - trim));
        let mut best: Option<(usize, f64)> = None;
        // Row-major order is key order, so strict `>` keeps the smallest key.
        for_each_cell(&ranges, &self.strides, |idx| {
            let m = self.data[idx];
            if m > 0.0 && best.is_none_or(|b| m > b.1) {
                best = Some((idx, m));
            }
        });
        best.map(|(idx, m)| (self.key_of(idx), m))
    }

    fn key_of(&self, mut idx: usize) -> BinKey {
        let mut k = [0i32; 6];
        for a in 0..6 {
            k[a] = self.origin[a] + (idx / self.strides[a]) as i32;
            idx %= self.strides[a];
        }
        BinKey(k)
    }

    fn nonzero(&self) -> impl Iterator<Item = (BinKey, f64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| (self.key_of(i), *m))
    }
}
