use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use houghreg::baselines::{ransac_register, RansacConfig};
use houghreg::bench::{records_to_jsonl, rows_to_csv, run_suite, score, BenchSuite, Thresholds};
use houghreg::cloud::{synthesize_pair, voxel_downsample, SynthConfig};
use houghreg::hough::{register, HoughConfig, Smoothing};
use houghreg::io::{self, CloudFormat};
use houghreg::matching::{match_features, oracle_correspondences, MatchConfig, OracleSpec};
use houghreg::result::Method;
use houghreg::Error;

const THREADS_ENV: &str = "HOUGHREG_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "houghreg",
    version,
    about = "Global point-cloud registration by sparse 6D Hough voting",
    after_help = "Set HOUGHREG_THREADS to cap worker threads (0 or unset = one per core)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the rigid transform mapping the source cloud onto the target.
    Register(RegisterArgs),
    /// Generate a synthetic scan pair with its ground-truth transform.
    Synth(SynthArgs),
    /// Run a benchmark suite and write per-cell CSV plus per-trial JSONL.
    Bench(BenchArgs),
    /// Compare a predicted transform file against ground truth.
    Eval(EvalArgs),
    /// Voxel-downsample a cloud (one centroid per occupied voxel).
    Downsample(DownsampleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Hough,
    Ransac,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    /// Source cloud P (ASCII, or DHPC binary).
    #[arg(long)]
    source: PathBuf,
    /// Target cloud Q (ASCII, or DHPC binary).
    #[arg(long)]
    target: PathBuf,
    /// Per-point descriptors of the source cloud (DHFV).
    #[arg(long, requires = "features_target", conflicts_with = "correspondences")]
    features_source: Option<PathBuf>,
    /// Per-point descriptors of the target cloud (DHFV).
    #[arg(long, requires = "features_source")]
    features_target: Option<PathBuf>,
    /// Precomputed correspondences (DHCR) instead of descriptor matching.
    #[arg(long, required_unless_present = "features_source")]
    correspondences: Option<PathBuf>,
    /// Keep only matches found in both directions.
    #[arg(long)]
    mutual: bool,
    /// Estimator.
    #[arg(long, value_enum, default_value = "hough")]
    method: MethodArg,
    /// Voxel size v in meters; the tuple test rejects distance gaps >= 3v.
    #[arg(long, default_value_t = 0.05)]
    voxel: f64,
    /// Number of triplets to draw.
    #[arg(long, default_value_t = 50_000)]
    triplets: usize,
    /// Rotation bin size in radians (axis-angle components).
    #[arg(long, default_value_t = 0.02)]
    bin_rot: f64,
    /// Translation bin size in meters.
    #[arg(long, default_value_t = 0.02)]
    bin_trans: f64,
    /// Gaussian kernel std-dev in bins; 0 disables smoothing.
    #[arg(long, default_value_t = 1.5)]
    smooth_sigma: f64,
    /// Gaussian kernel Chebyshev radius in bins.
    #[arg(long, default_value_t = 2)]
    smooth_radius: u32,
    /// Least-squares refit on correspondences within this distance (m) of the voted pose [default: off].
    #[arg(long)]
    refit_tau: Option<f64>,
    /// RANSAC iteration cap.
    #[arg(long, default_value_t = 1_000_000)]
    ransac_iterations: usize,
    /// RANSAC inlier distance in meters [default: 3 x --voxel].
    #[arg(long)]
    ransac_tau: Option<f64>,
    /// RANSAC early-exit confidence in (0, 1); 0 disables early exit.
    #[arg(long, default_value_t = 0.999)]
    ransac_confidence: f64,
    /// Seed for triplet draws and RANSAC samples; echoed into the result.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result JSON.
    #[arg(long)]
    out: PathBuf,
    /// 4x4 row-major transform, one row per line.
    #[arg(long)]
    out_transform: Option<PathBuf>,
    /// Write per-stage wall times (s) into the result; makes output run-dependent.
    #[arg(long)]
    record_timings: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Points per scan.
    #[arg(long, default_value_t = 2000)]
    n_points: usize,
    /// Fraction of points shared between the scans, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    /// Noise std-dev in meters.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Ground-truth rotation angle in radians.
    #[arg(long, default_value_t = 1.0)]
    rot_mag: f64,
    /// Ground-truth translation length in meters.
    #[arg(long, default_value_t = 0.5)]
    trans_mag: f64,
    /// Seed for the scene, the transform and the oracle correspondences.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Source cloud output (.dhpc/.bin = binary, otherwise ASCII).
    #[arg(long)]
    out_source: PathBuf,
    /// Target cloud output (.dhpc/.bin = binary, otherwise ASCII).
    #[arg(long)]
    out_target: PathBuf,
    /// Ground-truth 4x4 transform output.
    #[arg(long)]
    out_transform: PathBuf,
    /// Oracle correspondences output (DHCR).
    #[arg(long)]
    out_correspondences: Option<PathBuf>,
    /// Oracle inlier fraction.
    #[arg(long, default_value_t = 0.1)]
    inlier_ratio: f64,
    /// Oracle correspondence count.
    #[arg(long, default_value_t = 2000)]
    n_correspondences: usize,
    /// Oracle inlier distance in meters [default: max(4 x --noise, 1e-6)].
    #[arg(long)]
    oracle_tolerance: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Suite JSON [default: the bundled suite].
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Per-cell aggregate CSV.
    #[arg(long, required_unless_present = "print_default_suite")]
    out_csv: Option<PathBuf>,
    /// Per-trial JSON lines.
    #[arg(long)]
    out_jsonl: Option<PathBuf>,
    /// Override the suite's trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the suite's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall times (s); makes output run-dependent.
    #[arg(long)]
    record_timings: bool,
    /// Print the bundled suite JSON and exit.
    #[arg(long, exclusive = true)]
    print_default_suite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// 15 deg / 0.30 m
    Indoor,
    /// 5 deg / 0.6 m
    Kitti,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Units {
    M,
    Cm,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted 4x4 transform.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth 4x4 transform.
    #[arg(long)]
    gt: PathBuf,
    /// Threshold preset; explicit --rre-max/--rte-max take precedence.
    #[arg(long, value_enum, default_value = "indoor")]
    preset: Preset,
    /// Rotation error threshold in degrees [default: 15, kitti: 5].
    #[arg(long)]
    rre_max: Option<f64>,
    /// Translation error threshold in meters [default: 0.30, kitti: 0.6].
    #[arg(long)]
    rte_max: Option<f64>,
    /// Unit for printed RTE.
    #[arg(long, value_enum, default_value = "m")]
    units: Units,
}

#[derive(Debug, Args)]
struct DownsampleArgs {
    /// Input cloud (ASCII, or DHPC binary).
    #[arg(long)]
    input: PathBuf,
    /// Output cloud (.dhpc/.bin = binary, otherwise ASCII).
    #[arg(long)]
    output: PathBuf,
    /// Voxel edge length in meters.
    #[arg(long, default_value_t = 0.05)]
    voxel: f64,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::MalformedFile { .. } | Error::DimensionMismatch { .. } | Error::EmptyIndex => 3,
            Error::TooFewCorrespondences(_) | Error::NoValidTriplets { .. } | Error::EmptyHoughSpace | Error::DegenerateInput(_) => 4,
            Error::InvalidConfig(_) | Error::InvalidVoxelSize(_) => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    let outcome = match cli.command {
        Command::Register(a) => cmd_register(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Downsample(a) => cmd_downsample(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("{THREADS_ENV}={raw:?} is not a non-negative integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("{THREADS_ENV}: {e}")))
}

fn positive(flag: &str, x: f64) -> CliResult {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{flag} must be > 0, got {x}")))
    }
}

fn ensure_not_input(out: &Path, inputs: &[&Path]) -> CliResult {
    for i in inputs {
        if out == *i {
            return Err(Failure::usage(format!("refusing to overwrite input {}", i.display())));
        }
    }
    Ok(())
}

fn cmd_register(a: RegisterArgs) -> CliResult {
    positive("--voxel", a.voxel)?;
    positive("--bin-rot", a.bin_rot)?;
    positive("--bin-trans", a.bin_trans)?;
    if let Some(t) = a.refit_tau {
        positive("--refit-tau", t)?;
    }
    let mut inputs: Vec<&Path> = vec![&a.source, &a.target];
    inputs.extend(a.features_source.as_deref());
    inputs.extend(a.features_target.as_deref());
    inputs.extend(a.correspondences.as_deref());
    ensure_not_input(&a.out, &inputs)?;
    if let Some(t) = &a.out_transform {
        ensure_not_input(t, &inputs)?;
    }

    let clock = Instant::now();
    let p = io::load_cloud(&a.source)?;
    let q = io::load_cloud(&a.target)?;
    let corrs = match (&a.correspondences, &a.features_source, &a.features_target) {
        (Some(path), _, _) => {
            let corrs = io::load_correspondences(path)?;
            io::check_correspondences(&corrs, &p, &q).map_err(|e| Failure {
                code: 3,
                message: format!("{}: {e}", path.display()),
            })?;
            corrs
        }
        (None, Some(fs), Some(ft)) => {
            let feat_p = io::load_features(fs)?;
            let feat_q = io::load_features(ft)?;
            for (f, c, path) in [(&feat_p, &p, fs), (&feat_q, &q, ft)] {
                if f.len() != c.len() {
                    return Err(Failure {
                        code: 3,
                        message: format!(
                            "{}: {} descriptors for a cloud of {} points",
                            path.display(),
                            f.len(),
                            c.len()
                        ),
                    });
                }
            }
            match_features(&feat_p, &feat_q, a.mutual)?
        }
        _ => return Err(Failure::usage("need --correspondences or both --features-source and --features-target")),
    };

    let result = match a.method {
        MethodArg::Hough => {
            let smoothing = if a.smooth_sigma == 0.0 {
                Smoothing::None
            } else {
                Smoothing::Gaussian {
                    sigma_bins: a.smooth_sigma,
                    radius_bins: a.smooth_radius,
                }
            };
            register(
                &corrs,
                &p,
                &q,
                &MatchConfig {
                    voxel_v: a.voxel,
                    n_triplets: a.triplets,
                    seed: a.seed,
                    mutual_check: a.mutual,
                },
                &HoughConfig {
                    b_r: a.bin_rot,
                    b_t: a.bin_trans,
                    smoothing,
                    refit_tau: a.refit_tau,
                },
            )?
        }
        MethodArg::Ransac => ransac_register(
            &corrs,
            &p,
            &q,
            &RansacConfig {
                max_iterations: a.ransac_iterations,
                inlier_tau: a.ransac_tau.unwrap_or(3.0 * a.voxel),
                seed: a.seed,
                early_exit_confidence: (a.ransac_confidence != 0.0).then_some(a.ransac_confidence),
            },
        )?,
    };

    io::write_atomic(&a.out, result.to_json(a.record_timings).as_bytes())?;
    if let Some(t) = &a.out_transform {
        io::save_transform(&result.transform, t)?;
    }
    let support = match result.method {
        Method::Hough => format!("winning mass {:.3}", result.winning_mass),
        Method::Ransac => format!("inliers {}", result.winning_mass),
    };
    println!(
        "{}: {} correspondences, {}, {:.3} s",
        result.method.as_str(),
        result.n_correspondences,
        support,
        clock.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    let pair = synthesize_pair(&SynthConfig {
        n_points: a.n_points,
        overlap_fraction: a.overlap,
        noise_sigma: a.noise,
        rotation_magnitude: a.rot_mag,
        translation_magnitude: a.trans_mag,
        seed: a.seed,
    })?;
    let corrs = match &a.out_correspondences {
        Some(_) => {
            let tolerance = a.oracle_tolerance.unwrap_or((4.0 * a.noise).max(1e-6));
            positive("--oracle-tolerance", tolerance)?;
            Some(oracle_correspondences(
                &pair.source,
                &pair.target,
                &pair.transform,
                &OracleSpec {
                    inlier_ratio: a.inlier_ratio,
                    n_total: a.n_correspondences,
                    tolerance,
                    // Independent of the cloud stream so clouds do not change with these flags.
                    seed: a.seed ^ 0x6f72_6163_6c65,
                },
            )?)
        }
        None => None,
    };
    io::save_cloud(&pair.source, &a.out_source, CloudFormat::from_path(&a.out_source))?;
    io::save_cloud(&pair.target, &a.out_target, CloudFormat::from_path(&a.out_target))?;
    io::save_transform(&pair.transform, &a.out_transform)?;
    if let (Some(path), Some(corrs)) = (&a.out_correspondences, &corrs) {
        io::save_correspondences(corrs, path)?;
    }
    println!(
        "synth: {} + {} points, seed {}",
        pair.source.len(),
        pair.target.len(),
        a.seed
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CliResult {
    if a.print_default_suite {
        print!("{}", houghreg::bench::DEFAULT_SUITE_JSON);
        return Ok(());
    }
    let mut suite = match &a.suite {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure {
                code: 3,
                message: format!("{}: {e}", path.display()),
            })?;
            BenchSuite::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => BenchSuite::default_suite(),
    };
    if let Some(t) = a.trials {
        suite.trials = t;
    }
    if let Some(s) = a.seed {
        suite.base_seed = s;
    }
    suite.record_timings |= a.record_timings;
    suite.validate()?;

    let report = run_suite(&suite)?;
    let out_csv = a.out_csv.as_deref().expect("clap requires --out-csv");
    io::write_atomic(out_csv, rows_to_csv(&report.rows)?.as_bytes())?;
    if let Some(path) = &a.out_jsonl {
        io::write_atomic(path, records_to_jsonl(&report.records).as_bytes())?;
    }
    for row in &report.rows {
        println!(
            "{:<6} ratio {:<5} n {:<5} noise {:<6} {:<16} recall {:.3}",
            row.method.as_str(),
            row.inlier_ratio,
            row.n_correspondences,
            row.noise_sigma,
            row.smoothing,
            row.recall
        );
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let base = match a.preset {
        Preset::Indoor => Thresholds::INDOOR,
        Preset::Kitti => Thresholds::OUTDOOR,
    };
    let th = Thresholds {
        rre_max_deg: a.rre_max.unwrap_or(base.rre_max_deg),
        rte_max_m: a.rte_max.unwrap_or(base.rte_max_m),
    };
    positive("--rre-max", th.rre_max_deg)?;
    positive("--rte-max", th.rte_max_m)?;
    let pred = io::load_transform(&a.pred)?;
    let gt = io::load_transform(&a.gt)?;
    let (ok, m) = score(&pred, &gt, &th);
    let (rte, unit) = match a.units {
        Units::M => (m.rte, "m"),
        Units::Cm => (m.rte * 100.0, "cm"),
    };
    println!(
        "rre_deg {:.6} rte_{unit} {:.6} success {ok} (rre_max_deg {} rte_max_m {})",
        m.rre.to_degrees(),
        rte,
        th.rre_max_deg,
        th.rte_max_m
    );
    Ok(())
}

fn cmd_downsample(a: DownsampleArgs) -> CliResult {
    positive("--voxel", a.voxel)?;
    ensure_not_input(&a.output, &[&a.input])?;
    let cloud = io::load_cloud(&a.input)?;
    let out = voxel_downsample(&cloud, a.voxel)?;
    io::save_cloud(&out, &a.output, CloudFormat::from_path(&a.output))?;
    println!("downsample: {} -> {} points", cloud.len(), out.len());
    Ok(())
}
