//! The three run modes and their output files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde_json::{json, Value};
use sg_tomo::sample::{stream_rng, PositionSampler};
use sg_tomo::{
    fisher_continuous, fisher_quadrant, intensity, linear_inversion, log_error, measurement_matrix, mle_continuous,
    mle_discrete, probabilities, sample_counts, sample_positions, Bloch64, ErrorSummary, EstimateReport, Grid64, Map64,
    Matrix64, Scheme, Setup64,
};

use crate::cache::MapCache;
use crate::config::{EstimatorKind, RunConfig};
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const SWEEP_HEADER: &str =
    "g1,g2,lambda,T,theta,phi,scheme,delta,var1,var2,var3,delta_no_s2,delta_S,status";

/// JSON number, or `"inf"`/`"-inf"`/`"nan"` for values JSON cannot carry.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn summary_json(e: &ErrorSummary) -> Value {
    json!({
        "scheme": e.scheme.to_string(),
        "delta": num(e.delta),
        "variances": e.variances.iter().map(|&v| num(v)).collect::<Vec<_>>(),
        "delta_no_s2": num(e.delta_no_s2),
        "condition": num(e.condition),
        "singular": e.is_singular(),
        "null_direction": e.null_direction,
        "quantum_delta_s": num(e.quantum_delta_s),
        "quantum_delta_r": e.quantum_delta_r.map(num),
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
}

pub fn error_summary(scheme: Scheme, map: &Map64, matrix: &Matrix64, s: &Bloch64) -> Result<ErrorSummary> {
    let info = match scheme {
        Scheme::Quadrant => fisher_quadrant(matrix, s),
        Scheme::Continuous => fisher_continuous(map, s),
    }
    .map_err(CliError::core("fisher"))?;
    log_error(&info).map_err(CliError::core("fisher"))
}

/// Draw one data set and estimate from it.
fn estimate_once(
    cfg: &RunConfig,
    map: &Map64,
    matrix: &Matrix64,
    s: &Bloch64,
    seed: u64,
    sampler: Option<&PositionSampler<f64>>,
) -> Result<EstimateReport<f64>> {
    match cfg.scheme {
        Scheme::Quadrant => {
            let mut p = probabilities(matrix, s).map_err(CliError::core("measure"))?;
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-3 {
                log::warn!("quadrant probabilities sum to {total}; the lattice under-resolves the beam");
            }
            p.iter_mut().for_each(|v| *v /= total);
            let counts = sample_counts(&p, cfg.particles, seed).map_err(CliError::core("sample"))?;
            let f = counts.frequencies::<f64>();
            match cfg.estimator {
                EstimatorKind::Li => linear_inversion(&f, matrix, cfg.project),
                EstimatorKind::Mle => mle_discrete(&f, matrix, &cfg.mle),
            }
            .map_err(CliError::core("estimate"))
        }
        Scheme::Continuous => {
            let sample = match sampler {
                Some(sp) => sp.draw(cfg.particles as usize, &mut stream_rng(seed, 0)),
                None => {
                    let i = intensity(map, s).map_err(CliError::core("measure"))?;
                    sample_positions(&map.grid, &i, cfg.particles as usize, seed).map_err(CliError::core("sample"))?
                }
            };
            mle_continuous(&sample, map, &cfg.mle).map_err(CliError::core("estimate"))
        }
    }
}

fn setup_json(setup: &Setup64, grid: &Grid64) -> Value {
    json!({ "setup": setup, "grid": grid })
}

pub struct SingleOutcome {
    pub digest: String,
    pub files: Vec<PathBuf>,
}

/// Simulate, sample, estimate and evaluate one configuration.
pub fn run_single(cfg: &RunConfig, cache: &MapCache) -> Result<SingleOutcome> {
    cfg.validate()?;
    let (setup, grid, s) = (cfg.setup()?, cfg.grid()?, cfg.state.bloch()?);
    let map = cache.get(&setup, &grid)?;
    let matrix = measurement_matrix(&map);
    let boundary = map_boundary(&map);
    if boundary > 1e-3 {
        log::warn!("intensity reaches the lattice edge (relative peak {boundary:.2e}); enlarge the box");
    }

    fs::create_dir_all(&cfg.out)?;
    let i = intensity(&map, &s).map_err(CliError::core("measure"))?;
    let intensity_path = cfg.out.join("intensity.csv");
    {
        let mut w = BufWriter::new(fs::File::create(&intensity_path)?);
        writeln!(w, "x,z,intensity")?;
        for j in 0..grid.n_z {
            for k in 0..grid.n_x {
                writeln!(w, "{},{},{:e}", grid.x(k), grid.z(j), i.get(k, j))?;
            }
        }
        w.flush()?;
    }
    let matrix_path = cfg.out.join("matrix.csv");
    matrix.write_csv(BufWriter::new(fs::File::create(&matrix_path)?)).map_err(CliError::core("measure"))?;

    let report = estimate_once(cfg, &map, &matrix, &s, cfg.seed, None)?;
    let mut estimate = report.to_json();
    estimate["scheme"] = json!(cfg.scheme.to_string());
    estimate["true_s"] = json!(s.to_f64());
    estimate["particles"] = json!(cfg.particles);
    estimate["seed"] = json!(cfg.seed);
    estimate["run"] = setup_json(&setup, &grid);
    let estimate_path = cfg.out.join("estimate.json");
    write_json(&estimate_path, &estimate)?;

    let summary = error_summary(cfg.scheme, &map, &matrix, &s)?;
    let mut errors = summary_json(&summary);
    errors["schema_version"] = json!(SCHEMA_VERSION);
    errors["state"] = json!(s.to_f64());
    errors["particles"] = json!(cfg.particles);
    errors["expected_total_variance"] = num(10f64.powf(summary.delta) / cfg.particles as f64);
    errors["boundary_ratio"] = num(boundary);
    errors["run"] = setup_json(&setup, &grid);
    let errors_path = cfg.out.join("error_summary.json");
    write_json(&errors_path, &errors)?;

    let [_, a, b, c] = report.s_hat.to_f64();
    let digest = format!(
        "{} {} s_hat=({a:.4},{b:.4},{c:.4}) iterations={} converged={} delta={:.4}",
        cfg.scheme, report.method, report.iterations, report.converged, summary.delta
    );
    Ok(SingleOutcome { digest, files: vec![intensity_path, matrix_path, estimate_path, errors_path] })
}

/// Peak of the unpolarized intensity on the outermost lattice ring relative to the overall peak.
fn map_boundary(map: &Map64) -> f64 {
    let (nx, nz) = (map.grid.n_x, map.grid.n_z);
    let mut edge = 0.0f64;
    let mut peak = 0.0f64;
    for j in 0..nz {
        for k in 0..nx {
            let v = map.at(map.grid.index(k, j))[0];
            peak = peak.max(v);
            if j == 0 || k == 0 || j + 1 == nz || k + 1 == nx {
                edge = edge.max(v);
            }
        }
    }
    if peak > 0.0 {
        edge / peak
    } else {
        0.0
    }
}

/// One parameter point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub g1: f64,
    pub g2: f64,
    pub lambda: f64,
    pub t: f64,
}

pub fn sweep_points(cfg: &RunConfig) -> Vec<SweepPoint> {
    let times = if cfg.sweep.times.is_empty() { vec![cfg.t_detect] } else { cfg.sweep.times.clone() };
    let mut out = Vec::new();
    for &lambda in &cfg.sweep.lambdas {
        for &t in &times {
            for g1 in cfg.sweep.g1.values() {
                for g2 in cfg.sweep.g2.values() {
                    out.push(SweepPoint { g1, g2, lambda, t });
                }
            }
        }
    }
    out
}

/// Probed states as `(θ, φ, s)`, in row order.
fn sweep_states(cfg: &RunConfig) -> Result<Vec<(f64, f64, Bloch64)>> {
    let (theta0, phi0) = cfg.state.angles();
    if cfg.sweep.thetas.is_empty() && cfg.sweep.phis.is_empty() {
        return Ok(vec![(theta0, phi0, cfg.state.bloch()?)]);
    }
    let thetas = if cfg.sweep.thetas.is_empty() { vec![theta0] } else { cfg.sweep.thetas.clone() };
    let phis = if cfg.sweep.phis.is_empty() { vec![phi0] } else { cfg.sweep.phis.clone() };
    let mut out = Vec::new();
    for &theta in &thetas {
        for &phi in &phis {
            let s = Bloch64::from_angles(theta, phi).map_err(|e| CliError::Config(e.to_string()))?;
            out.push((theta, phi, s));
        }
    }
    Ok(out)
}

fn csv_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn sweep_rows(
    cfg: &RunConfig,
    cache: &MapCache,
    p: &SweepPoint,
    states: &[(f64, f64, Bloch64)],
    grid: &Grid64,
) -> Vec<String> {
    let prefix = |theta: f64, phi: f64, scheme: Scheme| {
        format!("{},{},{},{},{},{},{}", p.g1, p.g2, p.lambda, p.t, theta, phi, scheme)
    };
    let failed = |msg: String| {
        let msg = msg.replace([',', '\n'], ";");
        let mut rows = Vec::new();
        for &(theta, phi, _) in states {
            for &scheme in &cfg.sweep.schemes {
                rows.push(format!("{},,,,,,,error: {msg}", prefix(theta, phi, scheme)));
            }
        }
        rows
    };
    let map = match Setup64::new(p.g1, p.g2, p.lambda, p.t, cfg.nt)
        .map_err(|e| CliError::Config(e.to_string()))
        .and_then(|setup| cache.get(&setup, grid))
    {
        Ok(m) => m,
        Err(e) => return failed(e.to_string()),
    };
    let matrix = measurement_matrix(&map);
    let mut rows = Vec::new();
    for &(theta, phi, s) in states {
        for &scheme in &cfg.sweep.schemes {
            let head = prefix(theta, phi, scheme);
            rows.push(match error_summary(scheme, &map, &matrix, &s) {
                Ok(e) => format!(
                    "{head},{},{},{},{},{},{},{}",
                    csv_num(e.delta),
                    csv_num(e.variances[0]),
                    csv_num(e.variances[1]),
                    csv_num(e.variances[2]),
                    csv_num(e.delta_no_s2),
                    csv_num(e.quantum_delta_s),
                    if e.is_singular() { "singular" } else { "ok" }
                ),
                Err(e) => format!("{head},,,,,,,error: {}", e.to_string().replace([',', '\n'], ";")),
            });
        }
    }
    rows
}

/// Fisher-information error landscape over the configured grid of setups.
///
/// Rows come out in the order of [`sweep_points`] whatever the worker count.
pub fn run_sweep(cfg: &RunConfig, cache: &MapCache) -> Result<PathBuf> {
    cfg.validate()?;
    if cfg.sweep.schemes.is_empty() || cfg.sweep.lambdas.is_empty() {
        return Err(CliError::Config("sweep needs at least one scheme and one lambda".into()));
    }
    let grid = cfg.grid()?;
    let states = sweep_states(cfg)?;
    let points = sweep_points(cfg);
    log::info!("sweep over {} setups and {} states", points.len(), states.len());
    let pool = thread_pool(cfg.workers)?;
    let rows: Vec<Vec<String>> =
        pool.install(|| points.par_iter().map(|p| sweep_rows(cfg, cache, p, &states, &grid)).collect());

    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("sweep.csv");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    writeln!(w, "{SWEEP_HEADER}")?;
    for row in rows.iter().flatten() {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(path)
}

pub struct MonteCarloOutcome {
    pub trials_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Value,
}

/// Repeat the estimation on independent data sets and compare the spread with `K⁻¹/N`.
pub fn run_montecarlo(cfg: &RunConfig, cache: &MapCache) -> Result<MonteCarloOutcome> {
    cfg.validate()?;
    if cfg.trials < 2 {
        return Err(CliError::Config(format!("montecarlo needs at least 2 trials, got {}", cfg.trials)));
    }
    let (setup, grid, s) = (cfg.setup()?, cfg.grid()?, cfg.state.bloch()?);
    let map = cache.get(&setup, &grid)?;
    let matrix = measurement_matrix(&map);
    let sampler = match cfg.scheme {
        Scheme::Continuous => {
            let i = intensity(&map, &s).map_err(CliError::core("measure"))?;
            Some(PositionSampler::new(&grid, &i).map_err(CliError::core("sample"))?)
        }
        Scheme::Quadrant => None,
    };

    let pool = thread_pool(cfg.workers)?;
    let results: Vec<Result<EstimateReport<f64>>> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|k| {
                let seed = cfg.seed.wrapping_add(k as u64);
                estimate_once(cfg, &map, &matrix, &s, seed, sampler.as_ref())
            })
            .collect()
    });

    fs::create_dir_all(&cfg.out)?;
    let trials_path = cfg.out.join("montecarlo_trials.csv");
    let mut w = BufWriter::new(fs::File::create(&trials_path)?);
    writeln!(w, "trial,seed,s1,s2,s3,iterations,converged,status")?;
    let mut estimates = Vec::new();
    let (mut failed, mut not_converged) = (0usize, 0usize);
    for (k, r) in results.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(k as u64);
        match r {
            Ok(rep) => {
                let [_, a, b, c] = rep.s_hat.to_f64();
                writeln!(w, "{k},{seed},{a},{b},{c},{},{},ok", rep.iterations, rep.converged)?;
                estimates.push([a, b, c]);
                if !rep.converged {
                    not_converged += 1;
                }
            }
            Err(e) => {
                failed += 1;
                writeln!(w, "{k},{seed},,,,,,error: {}", e.to_string().replace([',', '\n'], ";"))?;
            }
        }
    }
    w.flush()?;
    if estimates.len() < 2 {
        return Err(CliError::Core {
            module: "estimate",
            source: sg_tomo::Error::Consistency(format!(
                "only {} of {} trials produced an estimate",
                estimates.len(),
                cfg.trials
            )),
        });
    }

    let n = estimates.len() as f64;
    let mut mean = [0.0; 3];
    for e in &estimates {
        for m in 0..3 {
            mean[m] += e[m] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for e in &estimates {
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += (e[a] - mean[a]) * (e[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    let truth = s.to_f64();
    let bias: Vec<f64> = (0..3).map(|m| mean[m] - truth[m + 1]).collect();

    let summary = error_summary(cfg.scheme, &map, &matrix, &s)?;
    let info = match cfg.scheme {
        Scheme::Quadrant => fisher_quadrant(&matrix, &s),
        Scheme::Continuous => fisher_continuous(&map, &s),
    }
    .map_err(CliError::core("fisher"))?;
    let expected = if summary.is_singular() {
        None
    } else {
        Matrix3::from_fn(|a, b| info.k[a][b]).try_inverse().map(|inv| inv / cfg.particles as f64)
    };
    let expected_json = expected.map(|m| (0..3).map(|a| (0..3).map(|b| m[(a, b)]).collect::<Vec<_>>()).collect::<Vec<_>>());
    let ratio = expected.map(|m| (0..3).map(|a| cov[a][a] / m[(a, a)]).collect::<Vec<_>>());

    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "scheme": cfg.scheme.to_string(),
        "estimator": cfg.estimator,
        "true_s": truth,
        "particles": cfg.particles,
        "trials": cfg.trials,
        "used_trials": estimates.len(),
        "not_converged": not_converged,
        "failed": failed,
        "mean": mean,
        "bias": bias,
        "covariance": cov,
        "expected_covariance": expected_json,
        "variance_ratio": ratio,
        "delta": num(summary.delta),
        "run": setup_json(&setup, &grid),
    });
    let summary_path = cfg.out.join("montecarlo_summary.json");
    write_json(&summary_path, &value)?;
    Ok(MonteCarloOutcome { trials_path, summary_path, summary: value })
}
