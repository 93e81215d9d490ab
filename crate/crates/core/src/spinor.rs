//! Pauli algebra, Bloch vectors and the four-component spinor field.
//!
//! An evolved state is written as `Σ_α φ_α(x, z) σ_α |χ⟩` for an arbitrary
//! spin reference `|χ⟩`. Observables only ever involve the coefficient fields
//! `φ_α` and the structure tensor `d`, so `|χ⟩` never needs to be chosen.
//!
//! Normalization: at `t = 0` only `φ_0` is populated and
//! `Σ_α ∫|φ_α|² = ∫|φ_0|² = 1`. Because `Σ_α φ_α σ_α` stays proportional to a
//! unitary (left multiplication by the propagator preserves the
//! Hilbert-Schmidt norm `½Tr(W†W) = Σ_α|φ_α|²`), this total is conserved, and
//! the intensity `Σ_μ M_μ s_μ` integrates to `s_0 = 1` with no extra factor.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Field, GridSpec};
use crate::scalar::Real;

/// Bloch parametrization `ρ = ½ Σ_μ s_μ σ_μ` of a spin-1/2 density operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector<T> {
    pub s: [T; 4],
}

impl<T: Real> BlochVector<T> {
    pub fn new(s1: T, s2: T, s3: T) -> Self {
        Self { s: [T::one(), s1, s2, s3] }
    }

    pub fn maximally_mixed() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// Like [`Self::new`] but rejects vectors outside the Bloch ball.
    pub fn physical(s1: T, s2: T, s3: T) -> Result<Self> {
        let v = Self::new(s1, s2, s3);
        if !v.is_physical(T::lit(1e-9)) {
            return Err(Error::Unphysical(v.to_f64()));
        }
        Ok(v)
    }

    /// Pure state on the sphere: `(sinθ cosφ, sinθ sinφ, cosθ)`.
    pub fn from_angles(theta: T, phi: T) -> Result<Self> {
        if !(theta >= T::zero() && theta <= T::PI()) {
            return Err(Error::Config(format!("polar angle {theta} outside [0, π]")));
        }
        if !(phi > T::zero() && phi <= T::TAU()) {
            return Err(Error::Config(format!("azimuth {phi} outside (0, 2π]")));
        }
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Ok(Self::new(st * cp, st * sp, ct))
    }

    /// Squared length of the spatial part, `s1² + s2² + s3²`.
    pub fn purity(&self) -> T {
        self.s[1] * self.s[1] + self.s[2] * self.s[2] + self.s[3] * self.s[3]
    }

    pub fn radius(&self) -> T {
        self.purity().sqrt()
    }

    pub fn is_physical(&self, tol: T) -> bool {
        (self.s[0] - T::one()).abs() <= tol && self.purity() <= T::one() + tol
    }

    pub fn spatial(&self) -> [T; 3] {
        [self.s[1], self.s[2], self.s[3]]
    }

    pub fn to_f64(&self) -> [f64; 4] {
        self.s.map(|v| v.as_f64())
    }

    /// Spin density matrix `½ Σ s_μ σ_μ`.
    pub fn density_matrix(&self) -> Mat2<T> {
        let paulis = pauli_matrices::<T>();
        let mut rho = Mat2::zero();
        for mu in 0..4 {
            rho = rho.add(&paulis[mu].scale(Complex::new(self.s[mu] / T::lit(2.0), T::zero())));
        }
        rho
    }
}

/// Dense 2×2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2<T>(pub [[Complex<T>; 2]; 2]);

impl<T: Real> Mat2<T> {
    pub fn zero() -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Self([[z, z], [z, z]])
    }

    pub fn identity() -> Self {
        let (z, o) = (Complex::new(T::zero(), T::zero()), Complex::new(T::one(), T::zero()));
        Self([[o, z], [z, o]])
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = Self::zero();
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = out.0[i][j] + rhs.0[i][j];
            }
        }
        out
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v = *v * c;
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let a = &self.0;
        Self([[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]])
    }

    pub fn trace(&self) -> Complex<T> {
        self.0[0][0] + self.0[1][1]
    }

    pub fn apply(&self, v: [Complex<T>; 2]) -> [Complex<T>; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// Coefficients `c_μ = ½Tr(σ_μ A)` of the Pauli expansion `A = Σ c_μ σ_μ`.
    pub fn pauli_coefficients(&self) -> [Complex<T>; 4] {
        let half = Complex::new(T::lit(0.5), T::zero());
        pauli_matrices::<T>().map(|p| p.mul(self).trace() * half)
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> T {
        let mut m = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.0[i][j] - rhs.0[i][j]).norm());
            }
        }
        m
    }
}

/// `[σ_0, σ_1, σ_2, σ_3]` with `σ_0 = I`.
pub fn pauli_matrices<T: Real>() -> [Mat2<T>; 4] {
    let z = Complex::new(T::zero(), T::zero());
    let o = Complex::new(T::one(), T::zero());
    let i = Complex::new(T::zero(), T::one());
    [
        Mat2([[o, z], [z, o]]),
        Mat2([[z, o], [o, z]]),
        Mat2([[z, -i], [i, z]]),
        Mat2([[o, z], [z, -o]]),
    ]
}

/// Levi-Civita symbol over `{1, 2, 3}`; zero if any index is 0.
pub fn levi_civita(i: usize, j: usize, k: usize) -> i8 {
    match (i, j, k) {
        (1, 2, 3) | (2, 3, 1) | (3, 1, 2) => 1,
        (3, 2, 1) | (1, 3, 2) | (2, 1, 3) => -1,
        _ => 0,
    }
}

/// Structure tensor `d[α][β][μ] = Tr(σ_α σ_β σ_μ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTriple<T> {
    pub d: [[[Complex<T>; 4]; 4]; 4],
}

impl<T: Real> PauliTriple<T> {
    /// All 64 entries from explicit 2×2 products.
    pub fn new() -> Self {
        let s = pauli_matrices::<T>();
        let half = Complex::new(T::lit(0.5), T::zero());
        let mut d = [[[Complex::new(T::zero(), T::zero()); 4]; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                let ab = s[a].mul(&s[b]);
                for m in 0..4 {
                    d[a][b][m] = ab.mul(&s[m]).trace() * half;
                }
            }
        }
        Self { d }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, m: usize) -> Complex<T> {
        self.d[a][b][m]
    }
}

impl<T: Real> Default for PauliTriple<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Convenience wrapper for [`PauliTriple::new`].
pub fn pauli_triple<T: Real>() -> PauliTriple<T> {
    PauliTriple::new()
}

/// Pauli components `φ_α(x, z)` of the evolving state.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField<T: Real> {
    pub phi: [ComplexField<T>; 4],
    pub grid: GridSpec<T>,
    pub time: T,
}

impl<T: Real> SpinorField<T> {
    pub fn new(grid: GridSpec<T>, phi: [ComplexField<T>; 4], time: T) -> Result<Self> {
        for c in &phi {
            grid.check_shape(c)?;
        }
        Ok(Self { phi, grid, time })
    }

    /// `Σ_α ∫|φ_α|² dx dz`.
    pub fn norm(&self) -> T {
        let area = self.grid.cell_area();
        self.phi
            .iter()
            .map(|c| crate::grid::compensated_sum(c.data.iter().map(|v| v.norm_sqr())) * area)
            .fold(T::zero(), |a, b| a + b)
    }

    /// 2×2 operator `Σ_α φ_α σ_α` at one node.
    pub fn operator_at(&self, idx: usize) -> Mat2<T> {
        let s = pauli_matrices::<T>();
        let mut w = Mat2::zero();
        for a in 0..4 {
            w = w.add(&s[a].scale(self.phi[a].data[idx]));
        }
        w
    }

    /// Largest `|φ_α|` on the outermost ring of the lattice relative to the global peak.
    pub fn boundary_ratio(&self) -> T {
        let (n_x, n_z) = self.grid.shape();
        let mut peak = T::zero();
        let mut edge = T::zero();
        for c in &self.phi {
            for i in 0..n_x {
                for j in 0..n_z {
                    let v = c.get(i, j).norm();
                    peak = peak.max(v);
                    if i == 0 || j == 0 || i == n_x - 1 || j == n_z - 1 {
                        edge = edge.max(v);
                    }
                }
            }
        }
        if peak > T::zero() {
            edge / peak
        } else {
            T::zero()
        }
    }
}

/// Elongated Gaussian `√(1/2πλ) exp(-(x² + (z/λ)²)/4)` in `φ_0`, other components zero.
pub fn init_spinor<T: Real>(grid: &GridSpec<T>, lambda: T) -> Result<SpinorField<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::Config(format!("aspect ratio must be positive, got {lambda}")));
    }
    let amp = (T::one() / (T::TAU() * lambda)).sqrt();
    let quarter = T::lit(0.25);
    let phi0 = grid.sample(|x, z| {
        let zl = z / lambda;
        Complex::new(amp * (-(x * x + zl * zl) * quarter).exp(), T::zero())
    });
    let zero = Field::filled(grid.n_x, grid.n_z, Complex::new(T::zero(), T::zero()));
    let field = SpinorField::new(*grid, [phi0, zero.clone(), zero.clone(), zero], T::zero())?;
    let ratio = field.boundary_ratio();
    if ratio > T::lit(1e-8) {
        log::warn!("initial Gaussian reaches the box edge: boundary/peak = {ratio:e}");
    }
    Ok(field)
}
