//! Sparse 6D Hough voting over triplet poses.
//!
//! Every surviving triplet is aligned in closed form, its rotation converted
//! to axis-angle, and a unit vote cast into the bin
//! `(⌊r / b_r⌋, ⌊t / b_t⌋)`. Only occupied bins are stored. The consensus pose
//! is read off the heaviest bin, optionally after Gaussian smoothing of the
//! vote mass.

use std::time::Instant;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{rotation_to_axis_angle, solve_procrustes, AxisAngle, RigidTransform, Vec3};
use crate::matching::{sample_triplets, Correspondence, MatchConfig, Triplet};
use crate::result::{Method, RegistrationResult, Timings};

mod smooth;

pub use smooth::{gaussian_smooth, smoothed_argmax};

/// Integer coordinates of a bin: three rotation indices, then three
/// translation indices. Signed, since both parameter blocks can be negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinKey(pub [i32; 6]);

impl BinKey {
    pub fn offset(&self, by: &[i32; 6]) -> BinKey {
        let mut k = self.0;
        for (a, b) in k.iter_mut().zip(by) {
            *a += b;
        }
        BinKey(k)
    }

    pub fn chebyshev(&self, other: &BinKey) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap_or(0)
    }
}

/// Componentwise floor division of the pose parameters by the bin sizes.
pub fn bin_of(r: &AxisAngle, t: &Vec3, b_r: f64, b_t: f64) -> BinKey {
    let f = |x: f64, b: f64| (x / b).floor() as i32;
    BinKey([
        f(r.0.x, b_r),
        f(r.0.y, b_r),
        f(r.0.z, b_r),
        f(t.x, b_t),
        f(t.y, b_t),
        f(t.z, b_t),
    ])
}

/// A single cast vote with its continuous parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    pub key: BinKey,
    pub rotation: AxisAngle,
    pub translation: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Smoothing {
    None,
    Gaussian { sigma_bins: f64, radius_bins: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoughConfig {
    /// Rotation bin size (rad).
    pub b_r: f64,
    /// Translation bin size (m).
    pub b_t: f64,
    pub smoothing: Smoothing,
    /// Least-squares refit on correspondences within this distance (m) of the
    /// decoded pose. Off when `None`.
    #[serde(default)]
    pub refit_tau: Option<f64>,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            b_r: 0.02,
            b_t: 0.02,
            smoothing: Smoothing::Gaussian {
                sigma_bins: 1.5,
                radius_bins: 2,
            },
            refit_tau: None,
        }
    }
}

impl HoughConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_r > 0.0 && self.b_r.is_finite()) || !(self.b_t > 0.0 && self.b_t.is_finite()) {
            return Err(Error::InvalidConfig("bin sizes must be finite and > 0".into()));
        }
        if let Smoothing::Gaussian {
            sigma_bins,
            radius_bins,
        } = self.smoothing
        {
            check_kernel(sigma_bins, radius_bins)?;
        }
        if let Some(tau) = self.refit_tau {
            if !(tau > 0.0) {
                return Err(Error::InvalidConfig("refit_tau must be > 0".into()));
            }
        }
        Ok(())
    }
}

fn check_kernel(sigma_bins: f64, radius_bins: u32) -> Result<()> {
    if !(sigma_bins > 0.0 && sigma_bins.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma_bins must be > 0, got {sigma_bins}")));
    }
    if radius_bins < 1 {
        return Err(Error::InvalidConfig("radius_bins must be >= 1".into()));
    }
    Ok(())
}

/// Sparse accumulator: bin → vote mass, plus the raw votes for decoding.
#[derive(Debug, Clone, Default)]
pub struct HoughSpace {
    bins: FxHashMap<BinKey, f64>,
    b_r: f64,
    b_t: f64,
    raw_votes: Vec<Vote>,
}

impl HoughSpace {
    pub fn new(b_r: f64, b_t: f64) -> Self {
        Self {
            bins: FxHashMap::default(),
            b_r,
            b_t,
            raw_votes: Vec::new(),
        }
    }

    /// Builds a space from explicit masses; non-positive masses are dropped.
    pub fn from_bins(b_r: f64, b_t: f64, bins: impl IntoIterator<Item = (BinKey, f64)>) -> Self {
        let mut space = Self::new(b_r, b_t);
        for (k, m) in bins {
            if m > 0.0 {
                *space.bins.entry(k).or_insert(0.0) += m;
            }
        }
        space
    }

    pub fn with_votes(mut self, votes: Vec<Vote>) -> Self {
        self.raw_votes = votes;
        self
    }

    pub fn bin_sizes(&self) -> (f64, f64) {
        (self.b_r, self.b_t)
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn mass(&self, key: &BinKey) -> f64 {
        self.bins.get(key).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.sorted_bins().iter().map(|(_, m)| m).sum()
    }

    pub fn raw_votes(&self) -> &[Vote] {
        &self.raw_votes
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BinKey, &f64)> {
        self.bins.iter()
    }

    /// Bins in ascending key order.
    pub fn sorted_bins(&self) -> Vec<(BinKey, f64)> {
        let mut v: Vec<(BinKey, f64)> = self.bins.iter().map(|(k, m)| (*k, *m)).collect();
        v.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn shifted(&self, by: &[i32; 6]) -> Self {
        let mut out = Self::from_bins(self.b_r, self.b_t, self.bins.iter().map(|(k, m)| (k.offset(by), *m)));
        out.raw_votes = self.raw_votes.clone();
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = Self::from_bins(self.b_r, self.b_t, self.bins.iter().map(|(k, m)| (*k, m * c)));
        out.raw_votes = self.raw_votes.clone();
        out
    }
}

/// Closed-form pose of one triplet as (axis-angle, translation).
pub fn triplet_pose(
    t: &Triplet,
    corrs: &[Correspondence],
    p: &PointCloud,
    q: &PointCloud,
) -> Result<(AxisAngle, Vec3)> {
    let (src, dst) = t.point_sets(corrs, p, q);
    let pose = solve_procrustes(&src, &dst)?;
    let r = rotation_to_axis_angle(&pose.rotation);
    if r.0 == Vec3::zeros() {
        // Below the small-angle cutoff the vote's rotation is exactly I; keep
        // the translation consistent with it so identical clouds vote (0, 0).
        let n = src.len() as f64;
        let centroid = |pts: &[Vec3]| pts.iter().sum::<Vec3>() / n;
        return Ok((r, centroid(&dst) - centroid(&src)));
    }
    Ok((r, pose.translation))
}

const ACCUMULATE_CHUNK: usize = 4096;

/// Casts one unit vote per pose. Chunks are tallied in parallel and merged;
/// unit masses make the result independent of the partition.
pub fn accumulate(poses: &[(AxisAngle, Vec3)], b_r: f64, b_t: f64) -> HoughSpace {
    let votes: Vec<Vote> = poses
        .par_iter()
        .map(|(r, t)| Vote {
            key: bin_of(r, t, b_r, b_t),
            rotation: *r,
            translation: *t,
        })
        .collect();

    let bins = votes
        .par_chunks(ACCUMULATE_CHUNK)
        .map(|chunk| {
            let mut local: FxHashMap<BinKey, f64> = FxHashMap::default();
            for v in chunk {
                *local.entry(v.key).or_insert(0.0) += 1.0;
            }
            local
        })
        .reduce(FxHashMap::default, |mut a, b| {
            for (k, m) in b {
                *a.entry(k).or_insert(0.0) += m;
            }
            a
        });

    HoughSpace {
        bins,
        b_r,
        b_t,
        raw_votes: votes,
    }
}

/// Normalized 1D Gaussian weights for offsets `-radius..=radius`.
///
/// The 6D kernel is their product over the six axes, so it sums to 1 over
/// the truncated Chebyshev box.
pub fn gaussian_weights(sigma_bins: f64, radius_bins: u32) -> Vec<f64> {
    let r = radius_bins as i32;
    let raw: Vec<f64> = (-r..=r)
        .map(|o| (-((o * o) as f64) / (2.0 * sigma_bins * sigma_bins)).exp())
        .collect();
    let norm: f64 = raw.iter().sum();
    raw.iter().map(|w| w / norm).collect()
}

/// Heaviest bin; ties go to the lexicographically smallest key.
pub fn argmax_bin(h: &HoughSpace) -> Result<(BinKey, f64)> {
    let mut best: Option<(BinKey, f64)> = None;
    for (k, &m) in h.iter() {
        best = match best {
            Some((bk, bm)) if bm > m || (bm == m && bk < *k) => Some((bk, bm)),
            _ => Some((*k, m)),
        };
    }
    best.ok_or(Error::EmptyHoughSpace)
}

/// Continuous pose for a winning bin.
///
/// Averages the raw votes within Chebyshev distance 1 of `winner`; falls back
/// to the bin center when there are none.
pub fn decode(h: &HoughSpace, winner: &BinKey) -> RigidTransform {
    let mut r_sum = Vec3::zeros();
    let mut t_sum = Vec3::zeros();
    let mut n = 0usize;
    for v in h.raw_votes.iter().filter(|v| v.key.chebyshev(winner) <= 1) {
        r_sum += v.rotation.0;
        t_sum += v.translation;
        n += 1;
    }
    if n > 0 {
        let k = n as f64;
        return RigidTransform::from_axis_angle(&AxisAngle(r_sum / k), t_sum / k);
    }
    bin_center(winner, h.b_r, h.b_t)
}

pub fn bin_center(key: &BinKey, b_r: f64, b_t: f64) -> RigidTransform {
    let c = |i: i32, b: f64| (i as f64 + 0.5) * b;
    let k = key.0;
    RigidTransform::from_axis_angle(
        &AxisAngle(Vec3::new(c(k[0], b_r), c(k[1], b_r), c(k[2], b_r))),
        Vec3::new(c(k[3], b_t), c(k[4], b_t), c(k[5], b_t)),
    )
}

/// Procrustes on every correspondence within `tau` of `pose`; `None` when
/// fewer than three qualify.
pub fn refit(
    pose: &RigidTransform,
    corrs: &[Correspondence],
    p: &PointCloud,
    q: &PointCloud,
    tau: f64,
) -> Option<RigidTransform> {
    let (src, dst): (Vec<Vec3>, Vec<Vec3>) = corrs
        .iter()
        .map(|c| c.points(p, q))
        .filter(|(a, b)| (*b - pose.apply(a)).norm() <= tau)
        .map(|(a, b)| (*a, *b))
        .unzip();
    solve_procrustes(&src, &dst).ok()
}

/// Full voting pipeline: sample → pose → accumulate → smooth → argmax → decode.
pub fn register(
    corrs: &[Correspondence],
    p: &PointCloud,
    q: &PointCloud,
    match_cfg: &MatchConfig,
    hough_cfg: &HoughConfig,
) -> Result<RegistrationResult> {
    if corrs.len() < 3 {
        return Err(Error::TooFewCorrespondences(corrs.len()));
    }
    hough_cfg.validate()?;
    let mut timings = Timings::default();

    let clock = Instant::now();
    let triplets = sample_triplets(corrs, p, q, match_cfg)?;
    timings.push("sample", clock.elapsed());

    let clock = Instant::now();
    let poses: Vec<Option<(AxisAngle, Vec3)>> = triplets
        .par_iter()
        .map(|t| triplet_pose(t, corrs, p, q).ok())
        .collect();
    let n_dropped = poses.iter().filter(|x| x.is_none()).count();
    let poses: Vec<(AxisAngle, Vec3)> = poses.into_iter().flatten().collect();
    timings.push("pose", clock.elapsed());
    if poses.is_empty() {
        return Err(Error::NoValidTriplets {
            sampled: match_cfg.n_triplets,
        });
    }

    let clock = Instant::now();
    let space = accumulate(&poses, hough_cfg.b_r, hough_cfg.b_t);
    timings.push("vote", clock.elapsed());

    let clock = Instant::now();
    let (winner, mass) = match hough_cfg.smoothing {
        Smoothing::None => argmax_bin(&space)?,
        Smoothing::Gaussian {
            sigma_bins,
            radius_bins,
        } => smoothed_argmax(&space, sigma_bins, radius_bins)?,
    };
    timings.push("argmax", clock.elapsed());

    let clock = Instant::now();
    let mut transform = decode(&space, &winner);
    if let Some(tau) = hough_cfg.refit_tau {
        if let Some(refined) = refit(&transform, corrs, p, q, tau) {
            transform = refined;
        }
    }
    timings.push("decode", clock.elapsed());

    Ok(RegistrationResult {
        method: Method::Hough,
        transform,
        winning_bin: Some(winner),
        winning_mass: mass,
        n_correspondences: corrs.len(),
        n_triplets_sampled: match_cfg.n_triplets,
        n_triplets_accepted: poses.len(),
        n_votes_dropped: n_dropped,
        timings,
        config: serde_json::json!({
            "match": match_cfg,
            "hough": hough_cfg,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_angle_to_rotation, rre, rte};
    use std::collections::BTreeMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bin_indexing() {
        let k = bin_of(&AxisAngle(Vec3::new(0.039, 0.0, 0.0)), &Vec3::zeros(), 0.02, 0.02);
        assert_eq!(k, BinKey([1, 0, 0, 0, 0, 0]));
        let k = bin_of(&AxisAngle::zero(), &Vec3::new(-0.01, 0.0, 0.0), 0.02, 0.02);
        assert_eq!(k.0[3], -1);
    }

    #[test]
    fn default_bins_are_indoor_configuration() {
        let cfg = HoughConfig::default();
        assert_eq!((cfg.b_r, cfg.b_t), (0.02, 0.02));
    }

    #[test]
    fn empty_and_repeated_votes() {
        let h = accumulate(&[], 0.02, 0.02);
        assert!(h.is_empty());
        assert_eq!(h.total_mass(), 0.0);

        let pose = (AxisAngle(Vec3::new(0.1, 0.2, 0.3)), Vec3::new(0.5, -0.5, 0.0));
        let h = accumulate(&[pose; 7], 0.02, 0.02);
        assert_eq!(h.len(), 1);
        assert_eq!(h.total_mass(), 7.0);
    }

    fn random_poses(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<(AxisAngle, Vec3)> {
        (0..n)
            .map(|_| {
                (
                    AxisAngle(Vec3::new(
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                    )),
                    Vec3::new(
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                    ),
                )
            })
            .collect()
    }

    #[test]
    fn accumulate_matches_sequential_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let poses = random_poses(&mut rng, 10_000, 0.05);
        let h = accumulate(&poses, 0.02, 0.02);
        let mut hist: std::collections::BTreeMap<BinKey, f64> = Default::default();
        for (r, t) in &poses {
            *hist.entry(bin_of(r, t, 0.02, 0.02)).or_insert(0.0) += 1.0;
        }
        assert_eq!(h.sorted_bins(), hist.into_iter().collect::<Vec<_>>());
        assert_eq!(h.total_mass(), 10_000.0);
        for v in h.raw_votes() {
            for k in 0..3 {
                let lo = v.key.0[k] as f64 * 0.02;
                assert!(v.rotation.0[k] >= lo && v.rotation.0[k] < lo + 0.02);
                let lo = v.key.0[k + 3] as f64 * 0.02;
                assert!(v.translation[k] >= lo && v.translation[k] < lo + 0.02);
            }
        }
    }

    #[test]
    fn single_bin_smoothing_support() {
        let h = HoughSpace::from_bins(0.02, 0.02, [(BinKey([0; 6]), 1.0)]);
        for sigma in [0.5, 1.0, 3.0] {
            let s = gaussian_smooth(&h, sigma, 1).unwrap();
            assert_eq!(s.len(), 729);
            assert!((s.total_mass() - 1.0).abs() < 1e-12);
        }
        assert!(gaussian_smooth(&HoughSpace::new(0.1, 0.1), 1.0, 2).unwrap().is_empty());
    }

    #[test]
    fn smoothing_rejects_bad_kernel() {
        let h = HoughSpace::new(0.1, 0.1);
        assert!(gaussian_smooth(&h, 0.0, 1).is_err());
        assert!(gaussian_smooth(&h, 1.0, 0).is_err());
    }

    #[test]
    fn smoothing_is_linear_for_two_bins() {
        let a = (BinKey([0, 0, 0, 0, 0, 0]), 2.0);
        let b = (BinKey([1, 2, 0, -1, 0, 3]), 3.0);
        let both = gaussian_smooth(&HoughSpace::from_bins(0.1, 0.1, [a, b]), 1.0, 2).unwrap();
        let sa = gaussian_smooth(&HoughSpace::from_bins(0.1, 0.1, [a]), 1.0, 2).unwrap();
        let sb = gaussian_smooth(&HoughSpace::from_bins(0.1, 0.1, [b]), 1.0, 2).unwrap();
        for (k, m) in both.iter() {
            let expect = sa.mass(k) + sb.mass(k);
            assert!((m - expect).abs() <= 1e-12 * expect.max(1.0));
        }
        for (k, _) in sa.iter().chain(sb.iter()) {
            assert!(both.mass(k) > 0.0);
        }
    }

    /// Direct 6D convolution with exp(-|o|^2 / 2 sigma^2) over the Chebyshev
    /// box, normalized by the box sum.
    fn direct_smooth(bins: &[(BinKey, f64)], sigma: f64, radius: i32) -> BTreeMap<BinKey, f64> {
        let side = (2 * radius + 1) as usize;
        let mut kernel = Vec::new();
        for flat in 0..side.pow(6) {
            let mut rem = flat;
            let mut off = [0i32; 6];
            for slot in off.iter_mut() {
                *slot = (rem % side) as i32 - radius;
                rem /= side;
            }
            let d2: i32 = off.iter().map(|o| o * o).sum();
            kernel.push((off, (-(d2 as f64) / (2.0 * sigma * sigma)).exp()));
        }
        let z: f64 = kernel.iter().map(|(_, w)| w).sum();
        let mut out = BTreeMap::new();
        for (k, m) in bins {
            for (off, w) in &kernel {
                *out.entry(k.offset(off)).or_insert(0.0) += m * w / z;
            }
        }
        out
    }

    #[test]
    fn separable_smoothing_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let bins: Vec<(BinKey, f64)> = (0..40)
            .map(|_| {
                let mut k = [0i32; 6];
                for c in k.iter_mut() {
                    *c = rng.random_range(-4..4);
                }
                (BinKey(k), rng.random_range(0.5..3.0))
            })
            .collect();
        let h = HoughSpace::from_bins(0.1, 0.1, bins.iter().copied());
        for (sigma, radius) in [(1.0, 1), (1.5, 2)] {
            let fast = gaussian_smooth(&h, sigma, radius as u32).unwrap();
            let slow = direct_smooth(&h.sorted_bins(), sigma, radius);
            assert_eq!(fast.len(), slow.len());
            for (k, m) in &slow {
                assert!((fast.mass(k) - m).abs() <= 1e-12 * m.max(1.0), "{k:?}");
            }
        }
    }

    #[test]
    fn argmax_cases() {
        let h = HoughSpace::from_bins(0.1, 0.1, [(BinKey([3; 6]), 1.0)]);
        assert_eq!(argmax_bin(&h).unwrap(), (BinKey([3; 6]), 1.0));
        let a = BinKey([0, 0, 0, 0, 0, 1]);
        let b = BinKey([0, 0, 0, 0, 1, 0]);
        let h = HoughSpace::from_bins(0.1, 0.1, [(b, 2.0), (a, 2.0)]);
        assert_eq!(argmax_bin(&h).unwrap(), (a, 2.0));
        assert!(matches!(argmax_bin(&HoughSpace::new(0.1, 0.1)), Err(Error::EmptyHoughSpace)));
    }

    #[test]
    fn argmax_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let bins: Vec<(BinKey, f64)> = (0..500)
                .map(|_| {
                    let mut k = [0i32; 6];
                    for x in k.iter_mut() {
                        *x = rng.random_range(-3..3);
                    }
                    (BinKey(k), rng.random_range(1..5) as f64)
                })
                .collect();
            let h = HoughSpace::from_bins(0.1, 0.1, bins);
            let sorted = h.sorted_bins();
            let max = sorted.iter().map(|x| x.1).fold(0.0, f64::max);
            let expected = *sorted.iter().find(|x| x.1 == max).unwrap();
            assert_eq!(argmax_bin(&h).unwrap(), expected);
            assert_eq!(argmax_bin(&h.scaled(0.37)).unwrap().0, expected.0);
        }
    }

    #[test]
    fn decode_identical_votes() {
        let pose = (AxisAngle(Vec3::new(0.11, -0.23, 0.05)), Vec3::new(0.3, 0.1, -0.2));
        let h = accumulate(&[pose; 4], 0.02, 0.02);
        let (w, _) = argmax_bin(&h).unwrap();
        let t = decode(&h, &w);
        let expected = RigidTransform::from_axis_angle(&pose.0, pose.1);
        assert!(t.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn decode_midpoint_of_two_votes() {
        let a = (AxisAngle(Vec3::new(0.101, 0.0, 0.0)), Vec3::new(0.201, 0.0, 0.0));
        let b = (AxisAngle(Vec3::new(0.109, 0.0, 0.0)), Vec3::new(0.209, 0.0, 0.0));
        let h = accumulate(&[a, b], 0.02, 0.02);
        assert_eq!(h.len(), 1);
        let (w, m) = argmax_bin(&h).unwrap();
        assert_eq!(m, 2.0);
        let t = decode(&h, &w);
        let expected =
            RigidTransform::from_axis_angle(&AxisAngle(Vec3::new(0.105, 0.0, 0.0)), Vec3::new(0.205, 0.0, 0.0));
        assert!(t.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn decode_falls_back_to_bin_center() {
        // Votes far from the constructed winner.
        let far = (AxisAngle(Vec3::new(1.0, 1.0, 1.0)), Vec3::new(1.0, 1.0, 1.0));
        let h = accumulate(&[far], 0.1, 0.2);
        let winner = BinKey([0, 1, -1, 2, 0, -3]);
        let t = decode(&h, &winner);
        // Centers: rotation (0.05, 0.15, -0.05), translation (0.5, 0.1, -0.5).
        let expected = RigidTransform::from_axis_angle(
            &AxisAngle(Vec3::new(0.05, 0.15, -0.05)),
            Vec3::new(0.5, 0.1, -0.5),
        );
        assert!(t.max_abs_diff(&expected) < 1e-12);
    }

    fn noiseless_setup(n: usize) -> (PointCloud, PointCloud, Vec<Correspondence>, RigidTransform) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gt = RigidTransform::new(
            axis_angle_to_rotation(&AxisAngle(Vec3::new(0.413, -0.331, 0.787))),
            Vec3::new(0.313, -0.171, 0.517),
        );
        let p: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
            .collect();
        let q: Vec<Vec3> = p.iter().map(|x| gt.apply(x)).collect();
        let corrs = (0..n as u32).map(|i| Correspondence::new(i, i, 0.0)).collect();
        (PointCloud::new(p), PointCloud::new(q), corrs, gt)
    }

    #[test]
    fn triplet_pose_recovers_transform() {
        let (p, q, corrs, gt) = noiseless_setup(20);
        let expected_r = rotation_to_axis_angle(&gt.rotation);
        let a = triplet_pose(&Triplet::new(0, 5, 9), &corrs, &p, &q).unwrap();
        let b = triplet_pose(&Triplet::new(2, 11, 17), &corrs, &p, &q).unwrap();
        assert!((a.0 .0 - expected_r.0).abs().max() < 1e-9);
        assert!((a.1 - gt.translation).abs().max() < 1e-9);
        assert!((a.0 .0 - b.0 .0).abs().max() < 1e-9);
        assert!((a.1 - b.1).abs().max() < 1e-9);

        let corrs_id: Vec<_> = (0..20).map(|i| Correspondence::new(i, i, 0.0)).collect();
        let (r, t) = triplet_pose(&Triplet::new(1, 2, 3), &corrs_id, &p, &p).unwrap();
        assert!(r.0.norm() < 1e-9 && t.norm() < 1e-9);
    }

    #[test]
    fn register_noiseless_all_inliers() {
        let (p, q, corrs, gt) = noiseless_setup(1000);
        let mcfg = MatchConfig {
            n_triplets: 2000,
            ..Default::default()
        };
        for smoothing in [Smoothing::None, HoughConfig::default().smoothing] {
            let hcfg = HoughConfig {
                smoothing,
                ..Default::default()
            };
            let res = register(&corrs, &p, &q, &mcfg, &hcfg).unwrap();
            assert!(rre(&res.transform.rotation, &gt.rotation) < 1e-6);
            assert!(rte(&res.transform.translation, &gt.translation) < hcfg.b_t);
            assert!(res.n_triplets_accepted <= res.n_triplets_sampled);
        }
    }

    #[test]
    fn register_identity_pair() {
        let (p, _, corrs, _) = noiseless_setup(200);
        let res = register(
            &corrs,
            &p,
            &p,
            &MatchConfig {
                n_triplets: 500,
                ..Default::default()
            },
            &HoughConfig {
                smoothing: Smoothing::None,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(res.winning_bin, Some(BinKey([0; 6])));
        assert!(res.transform.max_abs_diff(&RigidTransform::identity()) < 1e-9);
        assert_eq!(res.winning_mass, res.n_triplets_accepted as f64);
    }

    #[test]
    fn register_errors() {
        let (p, q, corrs, _) = noiseless_setup(3);
        assert!(matches!(
            register(&corrs[..2], &p, &q, &MatchConfig::default(), &HoughConfig::default()),
            Err(Error::TooFewCorrespondences(2))
        ));
        // Collinear sources reject every draw.
        let line = PointCloud::new((0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect());
        let corrs: Vec<_> = (0..5).map(|i| Correspondence::new(i, i, 0.0)).collect();
        assert!(matches!(
            register(&corrs, &line, &line, &MatchConfig { n_triplets: 50, ..Default::default() }, &HoughConfig::default()),
            Err(Error::NoValidTriplets { sampled: 50 })
        ));
    }

    #[test]
    fn inlier_bin_beats_scattered_outliers() {
        let (p, q, corrs, gt) = noiseless_setup(30);
        let inlier_poses: Vec<_> = [(0, 1, 2), (3, 4, 5), (6, 7, 8)]
            .iter()
            .map(|&(a, b, c)| triplet_pose(&Triplet::new(a, b, c), &corrs, &p, &q).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut poses = inlier_poses.clone();
        // Two outlier votes per bin, each in distinct far bins.
        for _ in 0..50 {
            let o = (
                AxisAngle(Vec3::new(rng.random_range(1.0..2.0), rng.random_range(1.0..2.0), 0.0)),
                Vec3::new(rng.random_range(2.0..9.0), 0.0, 0.0),
            );
            poses.push(o);
            poses.push(o);
        }
        let h = accumulate(&poses, 0.02, 0.02);
        let (w, m) = argmax_bin(&h).unwrap();
        assert_eq!(m, 3.0);
        assert!(decode(&h, &w).max_abs_diff(&gt) < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sparse_space() -> impl Strategy<Value = HoughSpace> {
            prop::collection::vec((prop::array::uniform6(-4i32..4), 0.1..5.0f64), 1..40)
                .prop_map(|bins| HoughSpace::from_bins(0.1, 0.1, bins.into_iter().map(|(k, m)| (BinKey(k), m))))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn smoothing_conserves_mass(h in sparse_space(), sigma in 0.5..2.0f64, radius in 1u32..3) {
                let s = gaussian_smooth(&h, sigma, radius).unwrap();
                let (a, b) = (h.total_mass(), s.total_mass());
                prop_assert!((a - b).abs() <= 1e-9 * a);
                prop_assert!(s.iter().all(|(_, m)| *m > 0.0));
            }

            #[test]
            fn smoothing_shift_equivariant(h in sparse_space(), shift in prop::array::uniform6(-5i32..5)) {
                let a = gaussian_smooth(&h.shifted(&shift), 1.0, 1).unwrap();
                let b = gaussian_smooth(&h, 1.0, 1).unwrap().shifted(&shift);
                prop_assert_eq!(a.len(), b.len());
                for (k, m) in a.iter() {
                    prop_assert!((m - b.mass(k)).abs() <= 1e-9 * m.max(1.0));
                }
            }

            #[test]
            fn argmax_scale_invariant(h in sparse_space(), c in 0.01..100.0f64) {
                prop_assert_eq!(argmax_bin(&h).unwrap().0, argmax_bin(&h.scaled(c)).unwrap().0);
            }

            #[test]
            fn accumulate_order_independent(seed in 0u64..1000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut poses = random_poses(&mut rng, 300, 0.06);
                let a = accumulate(&poses, 0.02, 0.02).sorted_bins();
                poses.reverse();
                let b = accumulate(&poses, 0.02, 0.02).sorted_bins();
                prop_assert_eq!(a, b);
            }
        }
    }
}
