//! Putative correspondences, triplet sampling and the rigidity tuple test.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::cloud::{FeatureSet, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

/// A putative match between point `src` of P and point `dst` of Q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src: u32,
    pub dst: u32,
    /// Negative descriptor distance; carried along, never used as a vote weight.
    pub similarity: f64,
}

impl Correspondence {
    pub fn new(src: u32, dst: u32, similarity: f64) -> Self {
        Self { src, dst, similarity }
    }

    pub fn points<'a>(&self, p: &'a PointCloud, q: &'a PointCloud) -> (&'a Vec3, &'a Vec3) {
        (&p.points[self.src as usize], &q.points[self.dst as usize])
    }
}

/// Three distinct indices into a correspondence list, stored ascending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet(pub [u32; 3]);

impl Triplet {
    pub fn new(a: u32, b: u32, c: u32) -> Self {
        let mut ids = [a, b, c];
        ids.sort_unstable();
        Triplet(ids)
    }

    pub fn point_sets(&self, corrs: &[Correspondence], p: &PointCloud, q: &PointCloud) -> ([Vec3; 3], [Vec3; 3]) {
        let mut src = [Vec3::zeros(); 3];
        let mut dst = [Vec3::zeros(); 3];
        for (k, &c) in self.0.iter().enumerate() {
            let (a, b) = corrs[c as usize].points(p, q);
            src[k] = *a;
            dst[k] = *b;
        }
        (src, dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchConfig {
    /// Voxel size v (m); the tuple test tolerates distance gaps below 3·v.
    pub voxel_v: f64,
    pub n_triplets: usize,
    pub seed: u64,
    #[serde(default)]
    pub mutual_check: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            voxel_v: 0.05,
            n_triplets: 50_000,
            seed: 0,
            mutual_check: false,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_v > 0.0 && self.voxel_v.is_finite()) {
            return Err(Error::InvalidConfig(format!("voxel_v must be > 0, got {}", self.voxel_v)));
        }
        if self.n_triplets == 0 {
            return Err(Error::InvalidConfig("n_triplets must be >= 1".into()));
        }
        Ok(())
    }
}

/// Top-1 nearest neighbors in descriptor space, in both directions.
///
/// Pairs found from P→Q come first (by P index), followed by the Q→P pairs
/// not already present (by Q index). With `mutual` only pairs found in both
/// directions are kept.
pub fn match_features(feat_p: &FeatureSet, feat_q: &FeatureSet, mutual: bool) -> Result<Vec<Correspondence>> {
    if feat_p.dim() != feat_q.dim() {
        return Err(Error::DimensionMismatch {
            expected: feat_p.dim(),
            got: feat_q.dim(),
        });
    }
    let index_p = feat_p.nn_index()?;
    let index_q = feat_q.nn_index()?;

    let forward: Vec<(usize, f64)> = (0..feat_p.len())
        .into_par_iter()
        .map(|i| index_q.nearest(feat_p.row(i)))
        .collect::<Result<_>>()?;
    let backward: Vec<(usize, f64)> = (0..feat_q.len())
        .into_par_iter()
        .map(|j| index_p.nearest(feat_q.row(j)))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(forward.len() + backward.len());
    if mutual {
        for (i, &(j, d)) in forward.iter().enumerate() {
            if backward[j].0 == i {
                out.push(Correspondence::new(i as u32, j as u32, -d));
            }
        }
        return Ok(out);
    }
    let mut seen: FxHashSet<(u32, u32)> = FxHashSet::default();
    for (i, &(j, d)) in forward.iter().enumerate() {
        if seen.insert((i as u32, j as u32)) {
            out.push(Correspondence::new(i as u32, j as u32, -d));
        }
    }
    for (j, &(i, d)) in backward.iter().enumerate() {
        if seen.insert((i as u32, j as u32)) {
            out.push(Correspondence::new(i as u32, j as u32, -d));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub inlier_ratio: f64,
    pub n_total: usize,
    /// A pair is a true match iff `‖q - T(p)‖ <= tolerance` (m).
    pub tolerance: f64,
    pub seed: u64,
}

/// Correspondences with an exactly controlled inlier fraction.
///
/// `round(inlier_ratio · n_total)` pairs match each P point with its nearest
/// Q point under `t_gt`, restricted to pairs within `tolerance`; the rest are
/// uniformly random pairs that violate the tolerance. Output order is shuffled.
pub fn oracle_correspondences(
    p: &PointCloud,
    q: &PointCloud,
    t_gt: &RigidTransform,
    spec: &OracleSpec,
) -> Result<Vec<Correspondence>> {
    if !(0.0..=1.0).contains(&spec.inlier_ratio) {
        return Err(Error::InvalidConfig(format!(
            "inlier_ratio must be in [0, 1], got {}",
            spec.inlier_ratio
        )));
    }
    if spec.n_total == 0 {
        return Err(Error::InvalidConfig("n_total must be >= 1".into()));
    }
    if !(spec.tolerance > 0.0) {
        return Err(Error::InvalidConfig("tolerance must be > 0".into()));
    }
    if p.is_empty() || q.is_empty() {
        return Err(Error::InvalidConfig("oracle correspondences need non-empty clouds".into()));
    }
    let n_in = (spec.inlier_ratio * spec.n_total as f64).round() as usize;
    let n_out = spec.n_total - n_in;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut out = Vec::with_capacity(spec.n_total);
    if n_in > 0 {
        let index = q.nn_index()?;
        let mut candidates: Vec<(u32, u32)> = Vec::new();
        for (i, pt) in p.points.iter().enumerate() {
            let m = t_gt.apply(pt);
            let (j, d) = index.nearest(m.as_slice())?;
            if d <= spec.tolerance {
                candidates.push((i as u32, j as u32));
            }
        }
        if candidates.is_empty() {
            return Err(Error::InvalidConfig(
                "no point pair lies within tolerance under the ground truth".into(),
            ));
        }
        // Without replacement while candidates last, then another pass.
        while out.len() < n_in {
            candidates.shuffle(&mut rng);
            let take = (n_in - out.len()).min(candidates.len());
            out.extend(candidates[..take].iter().map(|&(i, j)| Correspondence::new(i, j, 0.0)));
        }
    }

    let max_attempts = 1000 * (n_out + 1);
    let mut attempts = 0;
    while out.len() < spec.n_total {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InvalidConfig(
                "could not draw outlier pairs outside tolerance".into(),
            ));
        }
        let i = rng.random_range(0..p.len());
        let j = rng.random_range(0..q.len());
        if (q.points[j] - t_gt.apply(&p.points[i])).norm() > spec.tolerance {
            out.push(Correspondence::new(i as u32, j as u32, 0.0));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Rigidity filter: every pairwise distance gap must be strictly below `3·v`.
pub fn tuple_test_points(src: &[Vec3; 3], dst: &[Vec3; 3], v: f64) -> bool {
    let threshold = 3.0 * v;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let gap = ((src[i] - src[j]).norm() - (dst[i] - dst[j]).norm()).abs();
        if !(gap < threshold) {
            return false;
        }
    }
    true
}

pub fn tuple_test(t: &Triplet, corrs: &[Correspondence], p: &PointCloud, q: &PointCloud, v: f64) -> bool {
    let (src, dst) = t.point_sets(corrs, p, q);
    tuple_test_points(&src, &dst, v)
}

/// Rejects near-collinear triangles: area below `1e-3 · longest²` or any side
/// shorter than 1 µm.
pub fn is_degenerate(pts: &[Vec3; 3]) -> bool {
    let sides = [
        (pts[1] - pts[0]).norm(),
        (pts[2] - pts[0]).norm(),
        (pts[2] - pts[1]).norm(),
    ];
    if sides.iter().any(|&s| !(s >= 1e-6)) {
        return true;
    }
    let longest = sides.iter().cloned().fold(0.0, f64::max);
    let area = 0.5 * (pts[1] - pts[0]).cross(&(pts[2] - pts[0])).norm();
    area < 1e-3 * longest * longest
}

/// Draws three distinct indices below `n`.
pub fn draw_triplet(rng: &mut ChaCha8Rng, n: usize) -> Triplet {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n);
    while b == a {
        b = rng.random_range(0..n);
    }
    let mut c = rng.random_range(0..n);
    while c == a || c == b {
        c = rng.random_range(0..n);
    }
    Triplet::new(a as u32, b as u32, c as u32)
}

/// The raw seeded draws, before any filtering.
pub fn draw_triplets(n_corrs: usize, cfg: &MatchConfig) -> Result<Vec<Triplet>> {
    if n_corrs < 3 {
        return Err(Error::TooFewCorrespondences(n_corrs));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.n_triplets).map(|_| draw_triplet(&mut rng, n_corrs)).collect())
}

/// Seeded uniform triplet draws that survive the degeneracy filter and the
/// tuple test, in draw order.
pub fn sample_triplets(
    corrs: &[Correspondence],
    p: &PointCloud,
    q: &PointCloud,
    cfg: &MatchConfig,
) -> Result<Vec<Triplet>> {
    let draws = draw_triplets(corrs.len(), cfg)?;
    Ok(draws
        .into_par_iter()
        .filter(|t| {
            let (src, dst) = t.point_sets(corrs, p, q);
            !is_degenerate(&src) && tuple_test_points(&src, &dst, cfg.voxel_v)
        })
        .collect())
}

/// Fraction of correspondences with `‖q - T(p)‖ <= tau`; 0 for an empty list.
pub fn inlier_ratio(
    corrs: &[Correspondence],
    p: &PointCloud,
    q: &PointCloud,
    t_gt: &RigidTransform,
    tau: f64,
) -> f64 {
    if corrs.is_empty() {
        return 0.0;
    }
    let hits = corrs
        .iter()
        .filter(|c| {
            let (a, b) = c.points(p, q);
            (b - t_gt.apply(a)).norm() <= tau
        })
        .count();
    hits as f64 / corrs.len() as f64
}
