//! Global pairwise point-cloud registration by voting triplet poses into a
//! sparse 6D Hough space (axis-angle rotation plus translation).
//!
//! Pipeline: correspondences → filtered triplets → one Procrustes pose per
//! triplet → binned votes → optional Gaussian smoothing → argmax → decode.
//! A textbook RANSAC baseline and a seeded synthetic benchmark are included.

pub mod baselines;
pub mod bench;
pub mod cloud;
mod error;
pub mod geometry;
pub mod hough;
pub mod io;
pub mod matching;
pub mod result;

pub use baselines::{ransac_register, RansacConfig};
pub use cloud::{FeatureSet, PointCloud};
pub use error::{Error, Result};
pub use geometry::{AxisAngle, RigidTransform, Vec3};
pub use hough::{register, HoughConfig, Smoothing};
pub use matching::{Correspondence, MatchConfig};
pub use result::{Method, RegistrationResult};
