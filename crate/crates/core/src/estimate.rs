//! Spin-state estimators: linear inversion and the RρR maximum-likelihood
//! iteration for quadrant counts and for position-resolved hits.
//!
//! Both likelihood estimators iterate
//!
//! `s_μ ← (2 r_μ - s_μ γ) / (2 r_0 + γ)`, `γ = Σ_{i=1..3} r_i² - r_0²`,
//!
//! which is the Bloch form of `ρ ← N[R ρ R]`, starting from the maximally
//! mixed state. `r_μ` are the Pauli coefficients of the likelihood gradient
//! operator `R`: `Σ_k f_k M_kμ / p_k` for counts and
//! `(1/N) Σ_hits M_μ / I` for positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Accumulator;
use crate::linalg::pseudo_inverse;
use crate::measure::{MeasurementMap, MeasurementMatrix};
use crate::sample::PositionSample;
use crate::scalar::Real;
use crate::spinor::BlochVector;

/// Version tag written into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// Relative singular-value cutoff for the pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub max_iter: usize,
    /// Stop once `max_μ |s_μ^(n+1) - s_μ^(n)|` falls below this.
    pub tol: f64,
    /// Smallest model probability (or intensity) accepted where data is present.
    pub likelihood_floor: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { max_iter: 10_000, tol: 1e-10, likelihood_floor: 1e-12 }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol > 0.0) || !(self.likelihood_floor > 0.0) {
            return Err(Error::Config(format!("invalid estimator configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LinearInversion,
    MleDiscrete,
    MleContinuous,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::LinearInversion => "linear_inversion",
            Method::MleDiscrete => "mle_discrete",
            Method::MleContinuous => "mle_continuous",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport<T> {
    pub method: Method,
    pub s_hat: BlochVector<T>,
    pub iterations: usize,
    pub converged: bool,
    /// ML: `max_μ |(1 - r_0) s_μ - r_μ|`; linear inversion: `max_k |(M s)_k - f_k|`.
    pub residual: f64,
    /// Set when the linear-inversion result was pulled back into the Bloch ball.
    pub projected: bool,
    /// Number of halvings applied by the monotonicity guard.
    pub damping_events: usize,
    /// Log-likelihood of `s_hat` up to constants (ML only).
    pub log_likelihood: Option<f64>,
}

impl<T: Real> EstimateReport<T> {
    pub fn purity(&self) -> f64 {
        self.s_hat.purity().as_f64()
    }

    /// `{schema_version, method, s, iterations, converged, residual, purity, ...}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "method": self.method.to_string(),
            "s": self.s_hat.to_f64(),
            "iterations": self.iterations,
            "converged": self.converged,
            "residual": self.residual,
            "purity": self.purity(),
            "projected": self.projected,
            "damping_events": self.damping_events,
            "log_likelihood": self.log_likelihood,
        })
    }
}

fn check_frequencies<T: Real>(f: &[T], matrix: &MeasurementMatrix<T>) -> Result<()> {
    if f.len() != matrix.n_regions() {
        return Err(Error::Config(format!(
            "{} frequencies for {} detector regions",
            f.len(),
            matrix.n_regions()
        )));
    }
    if f.iter().any(|v| !(v.as_f64() >= 0.0)) {
        return Err(Error::InvalidProbabilities("frequencies must be non-negative".into()));
    }
    let sum: f64 = f.iter().map(|v| v.as_f64()).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbabilities(format!("frequencies sum to {sum}")));
    }
    Ok(())
}

/// Linear inversion `s = M⁺ f` through the SVD pseudo-inverse.
///
/// The result may lie outside the Bloch ball; with `project` set it is
/// rescaled onto the unit sphere in that case.
pub fn linear_inversion<T: Real>(f: &[T], matrix: &MeasurementMatrix<T>, project: bool) -> Result<EstimateReport<T>> {
    check_frequencies(f, matrix)?;
    let (pinv, singular_values, rank) = pseudo_inverse(&matrix.rows, PINV_CUTOFF);
    if rank < 4 {
        return Err(Error::IllConditioned { singular_values });
    }
    let mut s = [T::zero(); 4];
    for (mu, row) in pinv.iter().enumerate() {
        s[mu] = T::lit(row.iter().zip(f).map(|(a, b)| a * b.as_f64()).sum());
    }
    let mut s_hat = BlochVector { s };
    let residual = matrix
        .apply(&s_hat)
        .iter()
        .zip(f)
        .map(|(p, fk)| (*p - *fk).abs().as_f64())
        .fold(0.0, f64::max);
    let mut projected = false;
    if project {
        s_hat.s[0] = T::one();
        let r = s_hat.radius();
        if r > T::one() {
            for v in &mut s_hat.s[1..] {
                *v = *v / r;
            }
            projected = true;
        }
    }
    Ok(EstimateReport {
        method: Method::LinearInversion,
        s_hat,
        iterations: 0,
        converged: true,
        residual,
        projected,
        damping_events: 0,
        log_likelihood: None,
    })
}

/// Log-likelihood per particle of the quadrant model, `Σ_k f_k ln p_k`.
pub fn log_likelihood_discrete<T: Real>(f: &[T], matrix: &MeasurementMatrix<T>, s: &BlochVector<T>) -> T {
    let p = matrix.apply(s);
    let mut acc = Accumulator::default();
    for (fk, pk) in f.iter().zip(&p) {
        if *fk > T::zero() {
            acc.add(*fk * pk.ln());
        }
    }
    acc.total()
}

/// Log-likelihood of position hits, `Σ_hits ln I(x_k, z_k)`.
pub fn log_likelihood_continuous<T: Real>(sample: &PositionSample<T>, map: &MeasurementMap<T>, s: &BlochVector<T>) -> T {
    let mut acc = Accumulator::default();
    for (cell, count) in sample.histogram() {
        acc.add(T::lit(count as f64) * map.intensity_at(cell, s).ln());
    }
    acc.total()
}

/// Pauli coefficients of `R` at one state together with the log-likelihood.
type Gradient<T> = ([T; 4], T);

/// Shared RρR loop. `eval` returns `(r, loglik)` at a state.
fn rrho<T: Real, F>(cfg: &EstimatorConfig, method: Method, mut eval: F) -> Result<EstimateReport<T>>
where
    F: FnMut(&BlochVector<T>) -> Result<Gradient<T>>,
{
    cfg.validate()?;
    let two = T::lit(2.0);
    let tol = T::lit(cfg.tol);
    let guard = T::lit(1e-12);
    let mut s = BlochVector::maximally_mixed();
    let (mut r, mut ll) = eval(&s)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut damping_events = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let gamma = r[1] * r[1] + r[2] * r[2] + r[3] * r[3] - r[0] * r[0];
        let denom = two * r[0] + gamma;
        let mut next = BlochVector::new(
            (two * r[1] - s.s[1] * gamma) / denom,
            (two * r[2] - s.s[2] * gamma) / denom,
            (two * r[3] - s.s[3] * gamma) / denom,
        );
        clamp_to_ball(&mut next);
        let (mut r_next, mut ll_next) = eval(&next)?;
        let mut halvings = 0;
        while ll_next < ll - guard && halvings < 60 {
            next = midpoint(&s, &next);
            (r_next, ll_next) = eval(&next)?;
            halvings += 1;
        }
        if halvings > 0 {
            damping_events += 1;
        }
        let step = (1..4).map(|m| (next.s[m] - s.s[m]).abs()).fold(T::zero(), T::max);
        s = next;
        r = r_next;
        ll = ll_next;
        if step < tol {
            converged = true;
            break;
        }
    }
    let residual = (1..4)
        .map(|m| ((T::one() - r[0]) * s.s[m] - r[m]).abs().as_f64())
        .fold(0.0, f64::max);
    Ok(EstimateReport {
        method,
        s_hat: s,
        iterations,
        converged,
        residual,
        projected: false,
        damping_events,
        log_likelihood: Some(ll.as_f64()),
    })
}

fn clamp_to_ball<T: Real>(s: &mut BlochVector<T>) {
    let r = s.radius();
    if r > T::one() {
        for v in &mut s.s[1..] {
            *v = *v / r;
        }
    }
}

fn midpoint<T: Real>(a: &BlochVector<T>, b: &BlochVector<T>) -> BlochVector<T> {
    let h = T::lit(0.5);
    BlochVector::new((a.s[1] + b.s[1]) * h, (a.s[2] + b.s[2]) * h, (a.s[3] + b.s[3]) * h)
}

/// Maximum-likelihood estimate from quadrant frequencies.
///
/// The reported log-likelihood is per particle, `Σ_k f_k ln p_k`.
pub fn mle_discrete<T: Real>(f: &[T], matrix: &MeasurementMatrix<T>, cfg: &EstimatorConfig) -> Result<EstimateReport<T>> {
    check_frequencies(f, matrix)?;
    let floor = T::lit(cfg.likelihood_floor);
    rrho(cfg, Method::MleDiscrete, |s| {
        let p = matrix.apply(s);
        let mut r = [T::zero(); 4];
        let mut ll = Accumulator::default();
        for ((row, &pk), &fk) in matrix.rows.iter().zip(&p).zip(f) {
            if fk <= T::zero() {
                continue;
            }
            if pk < floor {
                return Err(Error::LikelihoodDegeneracy { value: pk.as_f64(), floor: cfg.likelihood_floor });
            }
            let w = fk / pk;
            for mu in 0..4 {
                r[mu] = r[mu] + w * row[mu];
            }
            ll.add(fk * pk.ln());
        }
        Ok((r, ll.total()))
    })
}

/// Maximum-likelihood estimate from position hits.
///
/// Hits are grouped by lattice cell, so the cost per iteration scales with the
/// number of distinct cells. The reported log-likelihood is the total
/// `Σ_hits ln I`.
pub fn mle_continuous<T: Real>(sample: &PositionSample<T>, map: &MeasurementMap<T>, cfg: &EstimatorConfig) -> Result<EstimateReport<T>> {
    if sample.is_empty() {
        return Err(Error::Config("no hits to estimate from".into()));
    }
    if let Some(&bad) = sample.cells.iter().find(|&&c| c >= map.grid.len()) {
        return Err(Error::Config(format!("hit cell {bad} is outside the measurement map")));
    }
    let hist = sample.histogram();
    let weights: Vec<(usize, T, [T; 4])> = hist
        .iter()
        .map(|&(cell, count)| (cell, T::lit(count as f64), map.at(cell)))
        .collect();
    let n = T::from_usize_lossy(sample.len());
    let floor = T::lit(cfg.likelihood_floor);
    rrho(cfg, Method::MleContinuous, |s| {
        let mut r = [Accumulator::default(); 4];
        let mut ll = Accumulator::default();
        for (_, count, m) in &weights {
            let i = m[0] * s.s[0] + m[1] * s.s[1] + m[2] * s.s[2] + m[3] * s.s[3];
            if i < floor {
                return Err(Error::LikelihoodDegeneracy { value: i.as_f64(), floor: cfg.likelihood_floor });
            }
            let w = *count / i;
            for mu in 0..4 {
                r[mu].add(w * m[mu]);
            }
            ll.add(*count * i.ln());
        }
        Ok((std::array::from_fn(|mu| r[mu].total() / n), ll.total()))
    })
}
