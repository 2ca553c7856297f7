//! Point clouds, descriptor sets, voxel downsampling and nearest-neighbor
//! indices.

mod kdtree;
pub mod synth;

use std::collections::BTreeMap;

pub use kdtree::{squared_distance, KdTree};
pub use synth::{synthesize_pair, SynthConfig, SyntheticPair};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

/// Ordered set of 3D points in meters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|x| x.is_finite()))
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self::new(self.points.iter().map(|p| t.apply(p)).collect())
    }

    pub fn nn_index(&self) -> Result<KdTree> {
        let data = self.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        KdTree::new(data, 3)
    }
}

impl From<Vec<Vec3>> for PointCloud {
    fn from(points: Vec<Vec3>) -> Self {
        Self::new(points)
    }
}

/// Per-point descriptors, row-major `count × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("descriptor dimension must be >= 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidConfig(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite descriptor value in row {}",
                i / dim
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(rows.concat(), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn nn_index(&self) -> Result<KdTree> {
        KdTree::new(self.data.clone(), self.dim)
    }
}

pub type VoxelKey = [i64; 3];

pub fn voxel_of(p: &Vec3, v: f64) -> VoxelKey {
    [
        (p.x / v).floor() as i64,
        (p.y / v).floor() as i64,
        (p.z / v).floor() as i64,
    ]
}

/// Replaces all points in each origin-anchored cube of side `v` by their
/// centroid. Output is ordered by ascending voxel index.
pub fn voxel_downsample(cloud: &PointCloud, v: f64) -> Result<PointCloud> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidVoxelSize(v));
    }
    let mut cells: BTreeMap<VoxelKey, (Vec3, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let cell = cells.entry(voxel_of(p, v)).or_insert((Vec3::zeros(), 0));
        cell.0 += p;
        cell.1 += 1;
    }
    Ok(PointCloud::new(
        cells
            .into_values()
            .map(|(sum, n)| sum / n as f64)
            .collect(),
    ))
}
