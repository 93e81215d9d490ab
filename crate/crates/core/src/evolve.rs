//! Split-step propagation through the quadrupole region and the free flight after it.
//!
//! Dimensionless Hamiltonian: `g2 (p_x² + p_z²) + g1 (x σ1 - z σ3)`. The
//! magnet acts for `t ∈ [0, 1]` and is propagated with the symmetric splitting
//! `[e^{-i h_m δt/2} e^{-i h_l δt} e^{-i h_m δt/2}]^{n_t}`; the free flight to
//! the detection time `T` is a single exact spectral step.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, GridSpec, Spectral};
use crate::scalar::{sinc, Real};
use crate::spinor::{init_spinor, SpinorField};

/// Reduced Planck constant (CODATA 2018, exact), J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Default number of splitting steps across the magnet.
pub const DEFAULT_STEPS: usize = 600;

/// Dimensionless description of one Stern-Gerlach setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetupParams<T> {
    /// Field coupling `μbστ/2ħ`.
    pub g1: T,
    /// Kinetic coupling `ħτ/2mσ²`.
    pub g2: T,
    /// Aspect ratio `σ'/σ` of the initial Gaussian.
    pub lambda: T,
    /// Detection time in units of the transit time; `T = 1` is the magnet exit.
    pub t_detect: T,
    /// Splitting steps across the magnet interval `[0, 1]`.
    pub n_t: usize,
}

impl<T: Real> SetupParams<T> {
    pub fn new(g1: T, g2: T, lambda: T, t_detect: T, n_t: usize) -> Result<Self> {
        let p = Self { g1, g2, lambda, t_detect, n_t };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.g1, self.g2, self.lambda, self.t_detect].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("setup parameters must be finite".into()));
        }
        if self.g1 < T::zero() {
            return Err(Error::Config(format!("g1 must be non-negative, got {}", self.g1)));
        }
        if !(self.g2 > T::zero()) {
            return Err(Error::Config(format!("g2 must be positive, got {}", self.g2)));
        }
        if !(self.lambda > T::zero()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.t_detect < T::one() {
            return Err(Error::Config(format!("detection time must be >= 1, got {}", self.t_detect)));
        }
        if self.n_t == 0 {
            return Err(Error::Config("need at least one splitting step".into()));
        }
        Ok(())
    }
}

/// Pauli expansion `u0 I + u1 σ1 + u3 σ3` of `exp(-i h_m τ)` on every node (`u2 ≡ 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct HalfStepCoefficients<T> {
    pub u0: ComplexField<T>,
    pub u1: ComplexField<T>,
    pub u3: ComplexField<T>,
}

/// Coefficients of `exp(-i g1 (xσ1 - zσ3) τ)` for `τ = dt_half`.
///
/// With `r = √(x² + z²)` and `θ = g1 r τ` this is `cos θ - i sin θ n̂·σ`,
/// `n̂ = (x, 0, -z)/r`. `sin θ / r` is evaluated as `g1 τ sinc θ`, so the origin
/// needs no special case. Negative `τ` gives the inverse step.
pub fn half_step_coefficients<T: Real>(grid: &GridSpec<T>, g1: T, dt_half: T) -> Result<HalfStepCoefficients<T>> {
    if !dt_half.is_finite() || !g1.is_finite() {
        return Err(Error::Config("half-step duration and g1 must be finite".into()));
    }
    let k = g1 * dt_half;
    let mut u0 = Vec::with_capacity(grid.len());
    let mut u1 = Vec::with_capacity(grid.len());
    let mut u3 = Vec::with_capacity(grid.len());
    for i in 0..grid.n_x {
        let x = grid.x(i);
        for j in 0..grid.n_z {
            let z = grid.z(j);
            let theta = k * (x * x + z * z).sqrt();
            let s = k * sinc(theta);
            u0.push(Complex::new(theta.cos(), T::zero()));
            u1.push(Complex::new(T::zero(), -s * x));
            u3.push(Complex::new(T::zero(), s * z));
        }
    }
    let (n_x, n_z) = grid.shape();
    Ok(HalfStepCoefficients {
        u0: ComplexField::from_vec(n_x, n_z, u0)?,
        u1: ComplexField::from_vec(n_x, n_z, u1)?,
        u3: ComplexField::from_vec(n_x, n_z, u3)?,
    })
}

/// Left-multiply the spinor by `Σ u_μ σ_μ` node by node:
///
/// `φ̄_0 = Σ_μ u_μ φ_μ`, `φ̄_l = u_l φ_0 + u_0 φ_l + i Σ_{ij} ε_{ijl} u_i φ_j`.
pub fn apply_magnetic_half_step<T: Real>(field: &mut SpinorField<T>, u: &HalfStepCoefficients<T>) -> Result<()> {
    for c in [&u.u0, &u.u1, &u.u3] {
        field.grid.check_shape(c)?;
    }
    let i_unit = Complex::new(T::zero(), T::one());
    let [p0, p1, p2, p3] = &mut field.phi;
    let it = p0
        .data
        .iter_mut()
        .zip(p1.data.iter_mut())
        .zip(p2.data.iter_mut())
        .zip(p3.data.iter_mut())
        .zip(u.u0.data.iter().zip(u.u1.data.iter()).zip(u.u3.data.iter()));
    for ((((f0, f1), f2), f3), ((&a0, &a1), &a3)) in it {
        let (b0, b1, b2, b3) = (*f0, *f1, *f2, *f3);
        *f0 = a0 * b0 + a1 * b1 + a3 * b3;
        *f1 = a1 * b0 + a0 * b1 - i_unit * a3 * b2;
        *f2 = a0 * b2 + i_unit * (a3 * b1 - a1 * b3);
        *f3 = a3 * b0 + a0 * b3 + i_unit * a1 * b2;
    }
    Ok(())
}

/// Free-particle phase `exp(-i g2 (p_x² + p_z²) dt) / (n_x n_z)` in the
/// transposed `[k_z][k_x]` layout of [`Spectral::forward_raw`].
fn kinetic_phase<T: Real>(grid: &GridSpec<T>, g2: T, dt: T) -> Vec<Complex<T>> {
    let norm = T::one() / T::from_usize_lossy(grid.len());
    let mut out = Vec::with_capacity(grid.len());
    for kz in 0..grid.n_z {
        let pz = grid.p_z(kz);
        for kx in 0..grid.n_x {
            let px = grid.p_x(kx);
            out.push(Complex::from_polar(norm, -g2 * (px * px + pz * pz) * dt));
        }
    }
    out
}

/// Reusable operators for one `(grid, g1, g2, dt)` combination.
#[derive(Debug, Clone)]
pub struct Propagator<T: Real> {
    spectral: Spectral<T>,
    g1: T,
    g2: T,
    dt: T,
    half: HalfStepCoefficients<T>,
    full: HalfStepCoefficients<T>,
    phase: Vec<Complex<T>>,
}

impl<T: Real> Propagator<T> {
    /// Operators for splitting steps of length `dt` (may be negative).
    pub fn new(grid: &GridSpec<T>, g1: T, g2: T, dt: T) -> Result<Self> {
        Ok(Self {
            spectral: Spectral::new(grid),
            g1,
            g2,
            dt,
            half: half_step_coefficients(grid, g1, dt / T::lit(2.0))?,
            full: half_step_coefficients(grid, g1, dt)?,
            phase: kinetic_phase(grid, g2, dt),
        })
    }

    pub fn spectral(&self) -> &Spectral<T> {
        &self.spectral
    }

    /// `n` symmetric splitting steps. Adjacent magnetic half-steps are fused
    /// into one full step, which is the same operator product.
    pub fn strang(&self, field: &mut SpinorField<T>, n: usize) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        apply_magnetic_half_step(field, &self.half)?;
        for step in 0..n {
            apply_phase(&self.spectral, field, &self.phase);
            if step + 1 < n {
                apply_magnetic_half_step(field, &self.full)?;
            }
        }
        apply_magnetic_half_step(field, &self.half)?;
        field.time = field.time + self.dt * T::from_usize_lossy(n);
        Ok(())
    }

    pub fn g1(&self) -> T {
        self.g1
    }

    pub fn g2(&self) -> T {
        self.g2
    }
}

fn apply_phase<T: Real>(spectral: &Spectral<T>, field: &mut SpinorField<T>, phase: &[Complex<T>]) {
    field.phi.par_iter_mut().for_each_init(
        || spectral.work_buffer(),
        |work, component| {
            spectral.forward_raw(&mut component.data, work);
            for (v, p) in component.data.iter_mut().zip(phase) {
                *v = *v * p;
            }
            spectral.inverse_raw(&mut component.data, work);
        },
    );
}

/// Exact free evolution `exp(-i g2 (p_x² + p_z²) dt)` of every component.
pub fn apply_kinetic_step<T: Real>(field: &mut SpinorField<T>, g2: T, dt: T) -> Result<()> {
    if !(dt >= T::zero()) || !dt.is_finite() {
        return Err(Error::Config(format!("kinetic step duration must be >= 0, got {dt}")));
    }
    if dt == T::zero() {
        return Ok(());
    }
    let spectral = Spectral::new(&field.grid);
    let phase = kinetic_phase(&field.grid, g2, dt);
    apply_phase(&spectral, field, &phase);
    field.time = field.time + dt;
    Ok(())
}

/// State at `t = 1` (magnet exit) from a state at `t = 0`.
pub fn evolve_magnet<T: Real>(field: &SpinorField<T>, params: &SetupParams<T>) -> Result<SpinorField<T>> {
    params.validate()?;
    let dt = T::one() / T::from_usize_lossy(params.n_t);
    let prop = Propagator::new(&field.grid, params.g1, params.g2, dt)?;
    let mut out = field.clone();
    prop.strang(&mut out, params.n_t)?;
    out.time = field.time + T::one();
    Ok(out)
}

/// Free flight from the magnet exit to the detection time `T`.
pub fn evolve_free<T: Real>(field: &SpinorField<T>, params: &SetupParams<T>) -> Result<SpinorField<T>> {
    params.validate()?;
    let mut out = field.clone();
    apply_kinetic_step(&mut out, params.g2, params.t_detect - T::one())?;
    out.time = field.time + (params.t_detect - T::one());
    Ok(out)
}

/// Initial Gaussian evolved through the whole setup to the detection time.
pub fn simulate<T: Real>(grid: &GridSpec<T>, params: &SetupParams<T>) -> Result<SpinorField<T>> {
    params.validate()?;
    let start = init_spinor(grid, params.lambda)?;
    let exit = evolve_magnet(&start, params)?;
    let end = evolve_free(&exit, params)?;
    let ratio = end.boundary_ratio();
    if ratio > T::lit(1e-6) {
        log::warn!("state reaches the box edge at detection: boundary/peak = {ratio:e}; enlarge the grid");
    }
    Ok(end)
}

/// Couplings and transit time from SI inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensionless {
    pub g1: f64,
    pub g2: f64,
    /// Transit time through the magnet, seconds.
    pub tau: f64,
}

/// `τ = L/v`, `g1 = μbστ/2ħ`, `g2 = ħτ/2mσ²`.
///
/// `mu` in J/T, `mass` in kg, `gradient` in T/m, `length` in m, `speed` in m/s,
/// `sigma` in m.
pub fn dimensionless_from_physical(
    mu: f64,
    mass: f64,
    gradient: f64,
    length: f64,
    speed: f64,
    sigma: f64,
) -> Result<Dimensionless> {
    let inputs = [("mu", mu), ("mass", mass), ("gradient", gradient), ("length", length), ("speed", speed), ("sigma", sigma)];
    for (name, v) in inputs {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    let tau = length / speed;
    Ok(Dimensionless {
        g1: mu * gradient * sigma * tau / (2.0 * HBAR),
        g2: HBAR * tau / (2.0 * mass * sigma * sigma),
        tau,
    })
}
