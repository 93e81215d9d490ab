//! Run configuration: a JSON document plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sg_tomo::{Bloch64, EstimatorConfig, Grid64, Scheme, Setup64};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Linear inversion (quadrant scheme only).
    Li,
    /// Maximum likelihood for the configured scheme.
    Mle,
}

impl std::str::FromStr for EstimatorKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "li" => Ok(EstimatorKind::Li),
            "mle" => Ok(EstimatorKind::Mle),
            other => Err(CliError::Config(format!("unknown estimator {other:?} (expected li or mle)"))),
        }
    }
}

/// Initial spin state, either as polar angles of a pure state or as a Bloch vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Angles { theta: f64, phi: f64 },
    Bloch { bloch: [f64; 3] },
}

impl StateSpec {
    pub fn bloch(&self) -> Result<Bloch64> {
        match *self {
            StateSpec::Angles { theta, phi } => Bloch64::from_angles(theta, phi),
            StateSpec::Bloch { bloch: [a, b, c] } => Bloch64::physical(a, b, c),
        }
        .map_err(|e| CliError::Config(e.to_string()))
    }

    /// `(θ, φ)` for reporting; derived from the Bloch vector when needed.
    pub fn angles(&self) -> (f64, f64) {
        match *self {
            StateSpec::Angles { theta, phi } => (theta, phi),
            StateSpec::Bloch { bloch: [a, b, c] } => {
                let r = (a * a + b * b + c * c).sqrt();
                let theta = if r > 0.0 { (c / r).clamp(-1.0, 1.0).acos() } else { 0.0 };
                let phi = b.atan2(a).rem_euclid(std::f64::consts::TAU);
                (theta, phi)
            }
        }
    }
}

/// Inclusive, evenly spaced range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n).map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub g1: Axis,
    pub g2: Axis,
    pub lambdas: Vec<f64>,
    /// Detection times; empty means the run's `T`.
    pub times: Vec<f64>,
    /// Polar angles of the probed pure states; empty means the run's state.
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    pub schemes: Vec<Scheme>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            g1: Axis { start: 1.0, stop: 5.0, n: 5 },
            g2: Axis { start: 0.4, stop: 4.0, n: 5 },
            lambdas: vec![0.3],
            times: Vec::new(),
            thetas: Vec::new(),
            phis: Vec::new(),
            schemes: vec![Scheme::Quadrant, Scheme::Continuous],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub g1: f64,
    pub g2: f64,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub t_detect: f64,
    pub nt: usize,
    /// Half-width of the square simulation box.
    pub grid_extent: f64,
    pub grid_n: usize,
    pub state: StateSpec,
    pub scheme: Scheme,
    pub estimator: EstimatorKind,
    /// Pull linear-inversion estimates outside the Bloch ball back onto it.
    pub project: bool,
    pub particles: u64,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
    /// Worker threads for sweeps and Monte Carlo; `None` uses every core.
    pub workers: Option<usize>,
    pub mle: EstimatorConfig,
    pub sweep: SweepSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            g1: 2.0,
            g2: 3.24,
            lambda: 0.3,
            t_detect: 1.0,
            nt: sg_tomo::evolve::DEFAULT_STEPS,
            grid_extent: 50.0,
            grid_n: 600,
            state: StateSpec::Angles { theta: 1.91, phi: 4.78 },
            scheme: Scheme::Quadrant,
            estimator: EstimatorKind::Mle,
            project: false,
            particles: 10_000,
            trials: 100,
            seed: 1,
            out: PathBuf::from("sg-tomo-out"),
            cache_dir: None,
            workers: None,
            mle: EstimatorConfig::default(),
            sweep: SweepSpec::default(),
        }
    }
}

/// Values supplied on the command line; each replaces the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub lambda: Option<f64>,
    pub t_detect: Option<f64>,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub scheme: Option<Scheme>,
    pub estimator: Option<EstimatorKind>,
    pub particles: Option<u64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub grid_extent: Option<f64>,
    pub grid_n: Option<usize>,
    pub nt: Option<usize>,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config document: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {$(
                if let Some(v) = o.$field.clone() {
                    self.$target = v;
                }
            )*};
        }
        set!(g1 => g1, g2 => g2, lambda => lambda, t_detect => t_detect, scheme => scheme,
             estimator => estimator, particles => particles, trials => trials, seed => seed,
             grid_extent => grid_extent, grid_n => grid_n, nt => nt, out => out);
        if o.cache_dir.is_some() {
            self.cache_dir = o.cache_dir.clone();
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if o.theta.is_some() || o.phi.is_some() {
            let (theta, phi) = match self.state {
                StateSpec::Angles { theta, phi } => (theta, phi),
                StateSpec::Bloch { .. } if o.theta.is_some() && o.phi.is_some() => (0.0, 0.0),
                StateSpec::Bloch { .. } => {
                    return Err(CliError::Config("--theta and --phi must be given together to replace a Bloch-vector state".into()))
                }
            };
            self.state = StateSpec::Angles { theta: o.theta.unwrap_or(theta), phi: o.phi.unwrap_or(phi) };
        }
        Ok(())
    }

    pub fn setup(&self) -> Result<Setup64> {
        Setup64::new(self.g1, self.g2, self.lambda, self.t_detect, self.nt).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn grid(&self) -> Result<Grid64> {
        Grid64::square(self.grid_extent, self.grid_n).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Cross-field consistency.
    pub fn validate(&self) -> Result<()> {
        self.setup()?;
        self.grid()?;
        self.state.bloch()?;
        self.mle.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.estimator == EstimatorKind::Li && self.scheme != Scheme::Quadrant {
            return Err(CliError::Config("linear inversion needs the quadrant scheme".into()));
        }
        if self.particles == 0 {
            return Err(CliError::Config("particles must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(RunConfig::from_json("{}").unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_documents_keep_defaults() {
        let c = RunConfig::from_json(r#"{"g1": 4.9, "T": 1.5, "state": {"bloch": [0.1, 0.2, 0.3]}, "sweep": {"lambdas": [1.0]}}"#)
            .unwrap();
        assert_eq!(c.g1, 4.9);
        assert_eq!(c.t_detect, 1.5);
        assert_eq!(c.g2, 3.24);
        assert_eq!(c.sweep.lambdas, vec![1.0]);
        assert_eq!(c.sweep.g1, SweepSpec::default().g1);
        assert!(matches!(c.state, StateSpec::Bloch { .. }));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(RunConfig::from_json(r#"{"gg1": 1}"#), Err(CliError::Config(_))));
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut c = RunConfig::default();
        c.apply(&Overrides { g1: Some(4.0), theta: Some(0.5), grid_n: Some(64), ..Default::default() }).unwrap();
        assert_eq!(c.g1, 4.0);
        assert_eq!(c.grid_n, 64);
        assert_eq!(c.state, StateSpec::Angles { theta: 0.5, phi: 4.78 });
    }

    #[test]
    fn inconsistent_choices_are_rejected() {
        let c = RunConfig { estimator: EstimatorKind::Li, scheme: Scheme::Continuous, ..Default::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { lambda: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { state: StateSpec::Bloch { bloch: [1.0, 1.0, 0.0] }, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn axis_values_are_inclusive() {
        assert_eq!(Axis { start: 1.0, stop: 2.0, n: 3 }.values(), vec![1.0, 1.5, 2.0]);
        assert_eq!(Axis { start: 1.0, stop: 2.0, n: 1 }.values(), vec![1.0]);
    }

    #[test]
    fn angles_recovered_from_bloch_vectors() {
        let (t, p) = StateSpec::Bloch { bloch: [0.0, -1.0, 0.0] }.angles();
        assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((p - 1.5 * std::f64::consts::PI).abs() < 1e-12);
    }
}
