//! Seeded synthetic benchmark: recall, RRE and RTE over a grid of inlier
//! ratios, correspondence counts, noise levels, bin sizes and smoothing
//! settings, for Hough voting and RANSAC.
//!
//! Each `(inlier ratio, correspondence count, noise)` scenario draws `trials`
//! scan pairs; every method variant runs on the same pairs. The trial seed is
//! `mix(mix(mix(base_seed) ^ scenario) ^ trial)` with `mix` the SplitMix64
//! finalizer, so any scenario can be rerun on its own.

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ransac_register, RansacConfig};
use crate::cloud::{synthesize_pair, PointCloud, SynthConfig};
use crate::error::{Error, Result};
use crate::geometry::{MetricPair, RigidTransform};
use crate::hough::{register, HoughConfig, Smoothing};
use crate::matching::{oracle_correspondences, Correspondence, MatchConfig, OracleSpec};
use crate::result::{Method, RegistrationResult};

/// The suite shipped with the crate.
pub const DEFAULT_SUITE_JSON: &str = include_str!("../suites/default.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub rre_max_deg: f64,
    pub rte_max_m: f64,
}

impl Thresholds {
    /// Indoor convention: 15° and 0.30 m.
    pub const INDOOR: Thresholds = Thresholds {
        rre_max_deg: 15.0,
        rte_max_m: 0.30,
    };
    /// Outdoor (KITTI) convention: 5° and 0.6 m.
    pub const OUTDOOR: Thresholds = Thresholds {
        rre_max_deg: 5.0,
        rte_max_m: 0.6,
    };
}

/// Success iff RRE ≤ `rre_max_deg` and RTE ≤ `rte_max_m` (both inclusive).
pub fn score(pred: &RigidTransform, gt: &RigidTransform, th: &Thresholds) -> (bool, MetricPair) {
    let m = MetricPair::between(pred, gt);
    let ok = m.rre.to_degrees() <= th.rre_max_deg && m.rte <= th.rte_max_m;
    (ok, m)
}

pub fn score_result(result: &RegistrationResult, gt: &RigidTransform, th: &Thresholds) -> (bool, MetricPair) {
    score(&result.transform, gt, th)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinSize {
    pub rot: f64,
    pub trans: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub n_points: usize,
    pub overlap_fraction: f64,
    pub rotation_magnitude: f64,
    pub translation_magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RansacSettings {
    pub max_iterations: usize,
    /// Defaults to `3 · voxel_v`.
    #[serde(default)]
    pub inlier_tau: Option<f64>,
    #[serde(default)]
    pub early_exit_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    pub inlier_ratios: Vec<f64>,
    pub n_correspondences: Vec<usize>,
    pub noise_sigmas: Vec<f64>,
    pub bin_sizes: Vec<BinSize>,
    pub smoothing: Vec<Smoothing>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub base_seed: u64,
    pub thresholds: Thresholds,
    pub scene: SceneConfig,
    /// Tuple-test voxel size v (m).
    pub voxel_v: f64,
    pub n_triplets: usize,
    pub ransac: RansacSettings,
    /// Optional least-squares refit of the decoded Hough pose (m).
    #[serde(default)]
    pub refit_tau: Option<f64>,
    /// Oracle inlier tolerance as a multiple of the noise sigma (floor 1e-6 m).
    #[serde(default = "default_oracle_sigmas")]
    pub oracle_tolerance_sigmas: f64,
    /// Wall times make output run-dependent, so they are off by default.
    #[serde(default)]
    pub record_timings: bool,
}

fn default_oracle_sigmas() -> f64 {
    4.0
}

impl BenchSuite {
    pub fn from_json(text: &str) -> Result<Self> {
        let suite: BenchSuite =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("suite: {e}")))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn default_suite() -> Self {
        Self::from_json(DEFAULT_SUITE_JSON).expect("bundled suite is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::InvalidConfig(format!("suite field `{field}`: {why}")));
        if self.inlier_ratios.is_empty() || self.inlier_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("inlier_ratios", "must be a non-empty list of values in [0, 1]");
        }
        if self.n_correspondences.is_empty() || self.n_correspondences.iter().any(|&n| n < 3) {
            return bad("n_correspondences", "must be a non-empty list of counts >= 3");
        }
        if self.noise_sigmas.is_empty() || self.noise_sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise_sigmas", "must be a non-empty list of values >= 0");
        }
        if self.methods.is_empty() {
            return bad("methods", "must not be empty");
        }
        if self.methods.contains(&Method::Hough) {
            if self.bin_sizes.is_empty() || self.bin_sizes.iter().any(|b| !(b.rot > 0.0 && b.trans > 0.0)) {
                return bad("bin_sizes", "must be a non-empty list of positive sizes");
            }
            if self.smoothing.is_empty() {
                return bad("smoothing", "must not be empty");
            }
            for s in &self.smoothing {
                HoughConfig {
                    b_r: 1.0,
                    b_t: 1.0,
                    smoothing: *s,
                    refit_tau: None,
                }
                .validate()
                .or_else(|e| bad("smoothing", &e.to_string()))?;
            }
        }
        if self.trials == 0 {
            return bad("trials", "must be >= 1");
        }
        if !(self.thresholds.rre_max_deg > 0.0 && self.thresholds.rte_max_m > 0.0) {
            return bad("thresholds", "must be > 0");
        }
        if !(self.voxel_v > 0.0) {
            return bad("voxel_v", "must be > 0");
        }
        if self.n_triplets == 0 {
            return bad("n_triplets", "must be >= 1");
        }
        if self.refit_tau.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return bad("refit_tau", "must be > 0 when set");
        }
        if self.ransac.max_iterations == 0 {
            return bad("ransac.max_iterations", "must be >= 1");
        }
        if !(self.oracle_tolerance_sigmas > 0.0) {
            return bad("oracle_tolerance_sigmas", "must be > 0");
        }
        let scene = SynthConfig {
            n_points: self.scene.n_points,
            overlap_fraction: self.scene.overlap_fraction,
            noise_sigma: 0.0,
            rotation_magnitude: self.scene.rotation_magnitude,
            translation_magnitude: self.scene.translation_magnitude,
            seed: 0,
        };
        scene.validate().or_else(|e| bad("scene", &e.to_string()))?;
        if scene.n_shared() == 0 {
            return bad("scene", "overlap leaves no shared points");
        }
        Ok(())
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &inlier_ratio in &self.inlier_ratios {
            for &n_correspondences in &self.n_correspondences {
                for &noise_sigma in &self.noise_sigmas {
                    out.push(Scenario {
                        index: out.len(),
                        inlier_ratio,
                        n_correspondences,
                        noise_sigma,
                    });
                }
            }
        }
        out
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &method in &self.methods {
            match method {
                Method::Hough => {
                    for &bins in &self.bin_sizes {
                        for &smoothing in &self.smoothing {
                            out.push(Variant::Hough { bins, smoothing });
                        }
                    }
                }
                Method::Ransac => out.push(Variant::Ransac),
            }
        }
        out
    }

    fn ransac_config(&self, seed: u64) -> RansacConfig {
        RansacConfig {
            max_iterations: self.ransac.max_iterations,
            inlier_tau: self.ransac.inlier_tau.unwrap_or(3.0 * self.voxel_v),
            seed,
            early_exit_confidence: self.ransac.early_exit_confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub index: usize,
    pub inlier_ratio: f64,
    pub n_correspondences: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Hough { bins: BinSize, smoothing: Smoothing },
    Ransac,
}

impl Variant {
    pub fn method(&self) -> Method {
        match self {
            Variant::Hough { .. } => Method::Hough,
            Variant::Ransac => Method::Ransac,
        }
    }

    pub fn bins(&self) -> Option<BinSize> {
        match self {
            Variant::Hough { bins, .. } => Some(*bins),
            Variant::Ransac => None,
        }
    }

    pub fn smoothing_label(&self) -> String {
        match self {
            Variant::Hough {
                smoothing: Smoothing::None,
                ..
            } => "none".into(),
            Variant::Hough {
                smoothing:
                    Smoothing::Gaussian {
                        sigma_bins,
                        radius_bins,
                    },
                ..
            } => format!("gaussian:s{sigma_bins}:r{radius_bins}"),
            Variant::Ransac => String::new(),
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(base_seed: u64, scenario: usize, trial: usize) -> u64 {
    mix64(mix64(mix64(base_seed) ^ scenario as u64) ^ trial as u64)
}

/// Everything a trial needs: the scan pair and its correspondences.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub seed: u64,
    pub source: PointCloud,
    pub target: PointCloud,
    pub gt: RigidTransform,
    pub corrs: Vec<Correspondence>,
}

pub fn trial_data(suite: &BenchSuite, scenario: &Scenario, trial: usize) -> Result<TrialData> {
    let seed = trial_seed(suite.base_seed, scenario.index, trial);
    let pair = synthesize_pair(&SynthConfig {
        n_points: suite.scene.n_points,
        overlap_fraction: suite.scene.overlap_fraction,
        noise_sigma: scenario.noise_sigma,
        rotation_magnitude: suite.scene.rotation_magnitude,
        translation_magnitude: suite.scene.translation_magnitude,
        seed,
    })?;
    let corrs = oracle_correspondences(
        &pair.source,
        &pair.target,
        &pair.transform,
        &OracleSpec {
            inlier_ratio: scenario.inlier_ratio,
            n_total: scenario.n_correspondences,
            tolerance: (suite.oracle_tolerance_sigmas * scenario.noise_sigma).max(1e-6),
            seed: mix64(seed ^ 1),
        },
    )?;
    Ok(TrialData {
        seed,
        source: pair.source,
        target: pair.target,
        gt: pair.transform,
        corrs,
    })
}

pub fn run_variant(suite: &BenchSuite, variant: &Variant, data: &TrialData) -> Result<RegistrationResult> {
    let method_seed = mix64(data.seed ^ 2);
    match variant {
        Variant::Hough { bins, smoothing } => register(
            &data.corrs,
            &data.source,
            &data.target,
            &MatchConfig {
                voxel_v: suite.voxel_v,
                n_triplets: suite.n_triplets,
                seed: method_seed,
                mutual_check: false,
            },
            &HoughConfig {
                b_r: bins.rot,
                b_t: bins.trans,
                smoothing: *smoothing,
                refit_tau: suite.refit_tau,
            },
        ),
        Variant::Ransac => ransac_register(&data.corrs, &data.source, &data.target, &suite.ransac_config(method_seed)),
    }
}

/// One method run on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: usize,
    pub variant: usize,
    pub method: Method,
    pub inlier_ratio: f64,
    pub n_correspondences: usize,
    pub noise_sigma: f64,
    pub bin_rot: Option<f64>,
    pub bin_trans: Option<f64>,
    pub smoothing: String,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub rre_deg: Option<f64>,
    pub rte_m: Option<f64>,
    pub error: Option<String>,
    pub time_s: Option<f64>,
}

/// Aggregate over the trials of one (scenario, variant) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub inlier_ratio: f64,
    pub n_correspondences: usize,
    pub noise_sigma: f64,
    pub bin_rot: Option<f64>,
    pub bin_trans: Option<f64>,
    pub smoothing: String,
    pub trials: usize,
    pub successes: usize,
    pub failures_with_error: usize,
    pub recall: f64,
    pub rre_mean_success_deg: Option<f64>,
    pub rre_std_success_deg: Option<f64>,
    pub rte_mean_success_m: Option<f64>,
    pub rte_std_success_m: Option<f64>,
    pub rre_mean_all_deg: Option<f64>,
    pub rre_std_all_deg: Option<f64>,
    pub rte_mean_all_m: Option<f64>,
    pub rte_std_all_m: Option<f64>,
    pub mean_time_s: Option<f64>,
}

/// Population mean and standard deviation; `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Folds per-trial records (in trial order) into one row.
pub fn aggregate(records: &[&TrialRecord]) -> Option<BenchRow> {
    let first = records.first()?;
    let successes: Vec<&&TrialRecord> = records.iter().filter(|r| r.success).collect();
    let pick = |rs: &[&&TrialRecord], f: fn(&TrialRecord) -> Option<f64>| -> Vec<f64> {
        rs.iter().filter_map(|r| f(r)).collect()
    };
    let all: Vec<&&TrialRecord> = records.iter().collect();
    let (rre_ms, rre_ss) = mean_std(&pick(&successes, |r| r.rre_deg));
    let (rte_ms, rte_ss) = mean_std(&pick(&successes, |r| r.rte_m));
    let (rre_ma, rre_sa) = mean_std(&pick(&all, |r| r.rre_deg));
    let (rte_ma, rte_sa) = mean_std(&pick(&all, |r| r.rte_m));
    let (time, _) = mean_std(&pick(&all, |r| r.time_s));
    Some(BenchRow {
        method: first.method,
        inlier_ratio: first.inlier_ratio,
        n_correspondences: first.n_correspondences,
        noise_sigma: first.noise_sigma,
        bin_rot: first.bin_rot,
        bin_trans: first.bin_trans,
        smoothing: first.smoothing.clone(),
        trials: records.len(),
        successes: successes.len(),
        failures_with_error: records.iter().filter(|r| r.error.is_some()).count(),
        recall: successes.len() as f64 / records.len() as f64,
        rre_mean_success_deg: rre_ms,
        rre_std_success_deg: rre_ss,
        rte_mean_success_m: rte_ms,
        rte_std_success_m: rte_ss,
        rre_mean_all_deg: rre_ma,
        rre_std_all_deg: rre_sa,
        rte_mean_all_m: rte_ma,
        rte_std_all_m: rte_sa,
        mean_time_s: time,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub records: Vec<TrialRecord>,
}

fn record_for(
    suite: &BenchSuite,
    scenario: &Scenario,
    vi: usize,
    variant: &Variant,
    trial: usize,
    data: Result<&TrialData, String>,
) -> TrialRecord {
    let bins = variant.bins();
    let mut rec = TrialRecord {
        scenario: scenario.index,
        variant: vi,
        method: variant.method(),
        inlier_ratio: scenario.inlier_ratio,
        n_correspondences: scenario.n_correspondences,
        noise_sigma: scenario.noise_sigma,
        bin_rot: bins.map(|b| b.rot),
        bin_trans: bins.map(|b| b.trans),
        smoothing: variant.smoothing_label(),
        trial,
        seed: trial_seed(suite.base_seed, scenario.index, trial),
        success: false,
        rre_deg: None,
        rte_m: None,
        error: None,
        time_s: None,
    };
    let data = match data {
        Ok(d) => d,
        Err(e) => {
            rec.error = Some(e);
            return rec;
        }
    };
    let clock = Instant::now();
    let outcome = run_variant(suite, variant, data);
    let elapsed = clock.elapsed();
    if suite.record_timings {
        rec.time_s = Some(elapsed.as_secs_f64());
    }
    match outcome {
        Ok(res) => {
            let (ok, m) = score_result(&res, &data.gt, &suite.thresholds);
            rec.success = ok;
            rec.rre_deg = Some(m.rre.to_degrees());
            rec.rte_m = Some(m.rte);
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Runs the whole grid. Per-trial failures become unsuccessful records.
pub fn run_suite(suite: &BenchSuite) -> Result<BenchReport> {
    suite.validate()?;
    let variants = suite.variants();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for scenario in suite.scenarios() {
        // Trials in parallel; each returns its records in variant order.
        let per_trial: Vec<Vec<TrialRecord>> = (0..suite.trials)
            .into_par_iter()
            .map(|k| {
                let data = trial_data(suite, &scenario, k).map_err(|e| e.to_string());
                variants
                    .iter()
                    .enumerate()
                    .map(|(vi, v)| record_for(suite, &scenario, vi, v, k, data.as_ref().map_err(Clone::clone)))
                    .collect()
            })
            .collect();
        for vi in 0..variants.len() {
            let cell: Vec<&TrialRecord> = per_trial.iter().map(|recs| &recs[vi]).collect();
            rows.extend(aggregate(&cell));
        }
        // Log order: scenario, variant, trial.
        for vi in 0..variants.len() {
            records.extend(per_trial.iter().map(|recs| recs[vi].clone()));
        }
    }
    Ok(BenchReport { rows, records })
}

pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::InvalidConfig(format!("csv encoding: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn records_to_jsonl(records: &[TrialRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// RANSAC iteration count that fits in `budget`, from a timed probe run.
pub fn calibrate_ransac_iterations(
    corrs: &[Correspondence],
    p: &PointCloud,
    q: &PointCloud,
    cfg: &RansacConfig,
    budget: Duration,
    probe_iterations: usize,
) -> Result<usize> {
    let probe = RansacConfig {
        max_iterations: probe_iterations.max(1),
        early_exit_confidence: None,
        ..*cfg
    };
    let clock = Instant::now();
    // A probe without any valid hypothesis still measures the sampling cost.
    match ransac_register(corrs, p, q, &probe) {
        Ok(_) | Err(Error::NoValidTriplets { .. }) => {}
        Err(e) => return Err(e),
    }
    let per_iter = clock.elapsed().as_secs_f64() / probe.max_iterations as f64;
    Ok(((budget.as_secs_f64() / per_iter.max(1e-12)).floor() as usize).max(1))
}
