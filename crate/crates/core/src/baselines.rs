//! Textbook RANSAC over the same putative correspondences, for comparison
//! with Hough voting.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{solve_procrustes, RigidTransform, Vec3};
use crate::matching::{draw_triplet, is_degenerate, tuple_test_points, Correspondence};
use crate::result::{Method, RegistrationResult, Timings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RansacConfig {
    /// Every draw counts, including samples rejected before solving.
    pub max_iterations: usize,
    /// Inlier distance (m). Also the tuple-test gap bound for samples.
    pub inlier_tau: f64,
    pub seed: u64,
    /// Stop once `(1 - w³)^k < 1 - confidence`; `None` runs all iterations.
    pub early_exit_confidence: Option<f64>,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1_000_000,
            inlier_tau: 0.15,
            seed: 0,
            early_exit_confidence: Some(0.999),
        }
    }
}

impl RansacConfig {
    pub const SAMPLE_SIZE: usize = 3;

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.inlier_tau > 0.0 && self.inlier_tau.is_finite()) {
            return Err(Error::InvalidConfig("inlier_tau must be > 0".into()));
        }
        if let Some(c) = self.early_exit_confidence {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::InvalidConfig("early_exit_confidence must be in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// One evaluated hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub iteration: usize,
    pub transform: RigidTransform,
    pub inliers: usize,
}

/// Full record of a run, for replay checks.
#[derive(Debug, Clone)]
pub struct RansacTrace {
    pub hypotheses: Vec<Hypothesis>,
    /// Best inlier count after each evaluated hypothesis.
    pub best_so_far: Vec<usize>,
    pub iterations: usize,
}

fn count_inliers(t: &RigidTransform, pairs: &[(Vec3, Vec3)], tau2: f64) -> usize {
    pairs
        .iter()
        .filter(|(a, b)| (b - t.apply(a)).norm_squared() <= tau2)
        .count()
}

fn inlier_pairs(t: &RigidTransform, pairs: &[(Vec3, Vec3)], tau2: f64) -> (Vec<Vec3>, Vec<Vec3>) {
    pairs
        .iter()
        .filter(|(a, b)| (b - t.apply(a)).norm_squared() <= tau2)
        .map(|(a, b)| (*a, *b))
        .unzip()
}

fn required_iterations(w: f64, confidence: f64) -> f64 {
    let all_in = w.powi(3);
    if all_in >= 1.0 {
        return 0.0;
    }
    if all_in <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 - confidence).ln() / (1.0 - all_in).ln()
}

fn run(
    corrs: &[Correspondence],
    p: &PointCloud,
    q: &PointCloud,
    cfg: &RansacConfig,
    keep_trace: bool,
) -> Result<(Option<Hypothesis>, RansacTrace, usize)> {
    if corrs.len() < 3 {
        return Err(Error::TooFewCorrespondences(corrs.len()));
    }
    cfg.validate()?;
    let pairs: Vec<(Vec3, Vec3)> = corrs
        .iter()
        .map(|c| {
            let (a, b) = c.points(p, q);
            (*a, *b)
        })
        .collect();
    let tau2 = cfg.inlier_tau * cfg.inlier_tau;
    // Same scale as the Hough tuple test: gap < 3·v with v = tau / 3.
    let tuple_v = cfg.inlier_tau / 3.0;
    let n = pairs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best: Option<Hypothesis> = None;
    let mut trace = RansacTrace {
        hypotheses: Vec::new(),
        best_so_far: Vec::new(),
        iterations: 0,
    };
    let mut evaluated = 0usize;
    for it in 0..cfg.max_iterations {
        trace.iterations = it + 1;
        let t = draw_triplet(&mut rng, n);
        let src = t.0.map(|i| pairs[i as usize].0);
        let dst = t.0.map(|i| pairs[i as usize].1);
        if is_degenerate(&src) || !tuple_test_points(&src, &dst, tuple_v) {
            continue;
        }
        let Ok(model) = solve_procrustes(&src, &dst) else {
            continue;
        };
        evaluated += 1;
        let inliers = count_inliers(&model, &pairs, tau2);
        let hyp = Hypothesis {
            iteration: it,
            transform: model,
            inliers,
        };
        if best.as_ref().map_or(true, |b| inliers > b.inliers) {
            best = Some(hyp.clone());
        }
        let best_count = best.as_ref().map_or(0, |b| b.inliers);
        if keep_trace {
            trace.hypotheses.push(hyp);
            trace.best_so_far.push(best_count);
        }
        if let Some(conf) = cfg.early_exit_confidence {
            let w = best_count as f64 / n as f64;
            if ((it + 1) as f64) >= required_iterations(w, conf) {
                break;
            }
        }
    }
    Ok((best, trace, evaluated))
}

/// Hypothesize-and-verify registration. The winning hypothesis (most inliers,
/// earliest on ties) is refit by least squares on its inlier set.
pub fn ransac_register(
    corrs: &[Correspondence],
    p: &PointCloud,
    q: &PointCloud,
    cfg: &RansacConfig,
) -> Result<RegistrationResult> {
    let clock = Instant::now();
    let (best, trace, evaluated) = run(corrs, p, q, cfg, false)?;
    let mut timings = Timings::default();
    timings.push("hypotheses", clock.elapsed());

    let best = best.ok_or(Error::NoValidTriplets {
        sampled: trace.iterations,
    })?;

    let clock = Instant::now();
    let pairs: Vec<(Vec3, Vec3)> = corrs
        .iter()
        .map(|c| {
            let (a, b) = c.points(p, q);
            (*a, *b)
        })
        .collect();
    let (src, dst) = inlier_pairs(&best.transform, &pairs, cfg.inlier_tau * cfg.inlier_tau);
    let transform = solve_procrustes(&src, &dst).unwrap_or(best.transform);
    timings.push("refit", clock.elapsed());

    Ok(RegistrationResult {
        method: Method::Ransac,
        transform,
        winning_bin: None,
        winning_mass: best.inliers as f64,
        n_correspondences: corrs.len(),
        n_triplets_sampled: trace.iterations,
        n_triplets_accepted: evaluated,
        n_votes_dropped: 0,
        timings,
        config: serde_json::json!({ "ransac": cfg, "variant": "textbook" }),
    })
}

/// Runs RANSAC and returns every evaluated hypothesis alongside the best one.
pub fn ransac_trace(
    corrs: &[Correspondence],
    p: &PointCloud,
    q: &PointCloud,
    cfg: &RansacConfig,
) -> Result<(Option<Hypothesis>, RansacTrace)> {
    let (best, trace, _) = run(corrs, p, q, cfg, true)?;
    Ok((best, trace))
}
