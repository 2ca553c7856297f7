//! Seeded synthetic scan pairs with known ground truth.
//!
//! Scenes are built from a handful of planar patches and Gaussian blobs inside
//! the box `[-0.5, 0.5]³`. A fixed fraction of the sampled points is shared by
//! both scans; the remainder is private to each scan.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{axis_angle_to_rotation, AxisAngle, RigidTransform, Vec3};

const HALF_BOX: f64 = 0.5;
const N_PATCHES: usize = 6;
const N_BLOBS: usize = 3;
const PATCH_PROBABILITY: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Points per scan.
    pub n_points: usize,
    /// Fraction of each scan's points shared with the other, in (0, 1].
    pub overlap_fraction: f64,
    /// Std-dev (m) of the per-axis displacement between corresponding points.
    pub noise_sigma: f64,
    /// Rotation angle of the ground-truth transform (rad).
    pub rotation_magnitude: f64,
    /// Translation length of the ground-truth transform (m).
    pub translation_magnitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_points: 2000,
            overlap_fraction: 0.5,
            noise_sigma: 0.01,
            rotation_magnitude: 1.0,
            translation_magnitude: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction <= 1.0) {
            return bad("overlap_fraction must be in (0, 1]");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and >= 0");
        }
        if !(self.rotation_magnitude >= 0.0 && self.rotation_magnitude <= std::f64::consts::PI) {
            return bad("rotation_magnitude must be in [0, pi]");
        }
        if !(self.translation_magnitude >= 0.0 && self.translation_magnitude.is_finite()) {
            return bad("translation_magnitude must be finite and >= 0");
        }
        Ok(())
    }

    pub fn n_shared(&self) -> usize {
        (self.overlap_fraction * self.n_points as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub source: PointCloud,
    pub target: PointCloud,
    /// Maps source coordinates into target coordinates.
    pub transform: RigidTransform,
    /// `(source index, target index)` of every shared point, ordered by source index.
    pub shared: Vec<(usize, usize)>,
}

enum Structure {
    Patch {
        center: Vec3,
        u: Vec3,
        w: Vec3,
        half_u: f64,
        half_w: f64,
    },
    Blob {
        center: Vec3,
        sigma: f64,
    },
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_in_box(rng: &mut ChaCha8Rng, half: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

fn build_scene(rng: &mut ChaCha8Rng) -> Vec<Structure> {
    let mut scene = Vec::with_capacity(N_PATCHES + N_BLOBS);
    for _ in 0..N_PATCHES {
        let normal = random_unit(rng);
        let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = normal.cross(&helper).normalize();
        let w = normal.cross(&u);
        scene.push(Structure::Patch {
            center: random_in_box(rng, 0.3),
            u,
            w,
            half_u: rng.random_range(0.12..0.3),
            half_w: rng.random_range(0.12..0.3),
        });
    }
    for _ in 0..N_BLOBS {
        scene.push(Structure::Blob {
            center: random_in_box(rng, 0.3),
            sigma: rng.random_range(0.03..0.08),
        });
    }
    scene
}

fn sample_point(scene: &[Structure], rng: &mut ChaCha8Rng) -> Vec3 {
    let idx = if rng.random_bool(PATCH_PROBABILITY) {
        rng.random_range(0..N_PATCHES)
    } else {
        N_PATCHES + rng.random_range(0..N_BLOBS)
    };
    let p = match &scene[idx] {
        Structure::Patch {
            center,
            u,
            w,
            half_u,
            half_w,
        } => center + u * rng.random_range(-half_u..*half_u) + w * rng.random_range(-half_w..*half_w),
        Structure::Blob { center, sigma } => {
            let n = Normal::new(0.0, *sigma).expect("positive sigma");
            center + Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
        }
    };
    p.map(|x| x.clamp(-HALF_BOX, HALF_BOX))
}

/// Draws a scan pair and the transform mapping the first into the second.
///
/// Every point of both scans receives independent Gaussian noise of
/// `noise_sigma / √2` per axis, so corresponding points differ by
/// `noise_sigma` per axis.
pub fn synthesize_pair(cfg: &SynthConfig) -> Result<SyntheticPair> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scene = build_scene(&mut rng);

    let n_shared = cfg.n_shared();
    let n_private = cfg.n_points - n_shared;
    let base: Vec<Vec3> = (0..n_shared + 2 * n_private)
        .map(|_| sample_point(&scene, &mut rng))
        .collect();

    let rotation = axis_angle_to_rotation(&AxisAngle(random_unit(&mut rng) * cfg.rotation_magnitude));
    let translation = random_unit(&mut rng) * cfg.translation_magnitude;
    let transform = RigidTransform::new(rotation, translation);

    // Base indices of each scan: shared block, then that scan's private block.
    let mut src_ids: Vec<usize> = (0..n_shared).chain(n_shared..n_shared + n_private).collect();
    let mut dst_ids: Vec<usize> = (0..n_shared)
        .chain(n_shared + n_private..n_shared + 2 * n_private)
        .collect();
    src_ids.shuffle(&mut rng);
    dst_ids.shuffle(&mut rng);

    let per_cloud_sigma = cfg.noise_sigma / std::f64::consts::SQRT_2;
    let noise = Normal::new(0.0, per_cloud_sigma.max(0.0)).expect("finite sigma");
    let jitter = |rng: &mut ChaCha8Rng| -> Vec3 {
        if per_cloud_sigma == 0.0 {
            Vec3::zeros()
        } else {
            Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng))
        }
    };

    let source: Vec<Vec3> = src_ids.iter().map(|&i| base[i] + jitter(&mut rng)).collect();
    let target: Vec<Vec3> = dst_ids
        .iter()
        .map(|&i| transform.apply(&base[i]) + jitter(&mut rng))
        .collect();

    let mut target_slot = vec![usize::MAX; n_shared];
    for (j, &b) in dst_ids.iter().enumerate() {
        if b < n_shared {
            target_slot[b] = j;
        }
    }
    let shared = src_ids
        .iter()
        .enumerate()
        .filter(|(_, &b)| b < n_shared)
        .map(|(i, &b)| (i, target_slot[b]))
        .collect();

    Ok(SyntheticPair {
        source: PointCloud::new(source),
        target: PointCloud::new(target),
        transform,
        shared,
    })
}
