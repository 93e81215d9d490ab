//! Uniform position/momentum lattice, spectral transforms and Riemann-sum quadrature.
//!
//! The lattice holds `n_x × n_z` closed-open cells: `x_i = x_min + i·dx` for
//! `i = 0..n_x` with `dx = (x_max - x_min)/n_x`, so `x_max` itself is the
//! periodic image of `x_min` and is not stored. Fields are stored row-major
//! with `z` as the fast axis (`index = i·n_z + j`).
//!
//! Momenta live in natural FFT order: index `k < n/2` carries `k·dp`, the rest
//! carry `(k - n)·dp`, covering `[-π/dx, π/dx)`. [`centered`] reorders a
//! momentum-space field so that the zero frequency sits in the middle.
//!
//! Momentum amplitudes approximate the continuous transform
//! `F(p, q) = (1/2π) ∫ f(x, z) e^{-i(px + qz)} dx dz`, which makes the pair
//! unitary between the two lattices: `Σ|f|² dx dz = Σ|F|² dp_x dp_z`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub x_min: T,
    pub x_max: T,
    pub z_min: T,
    pub z_max: T,
    pub n_x: usize,
    pub n_z: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(x_min: T, x_max: T, z_min: T, z_max: T, n_x: usize, n_z: usize) -> Result<Self> {
        if !(x_max > x_min) || !(z_max > z_min) {
            return Err(Error::Config(format!(
                "grid bounds must be ordered, got x [{x_min}, {x_max}], z [{z_min}, {z_max}]"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite() && z_min.is_finite() && z_max.is_finite()) {
            return Err(Error::Config("grid bounds must be finite".into()));
        }
        if n_x < 2 || n_z < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 samples per axis, got {n_x} × {n_z}"
            )));
        }
        Ok(Self { x_min, x_max, z_min, z_max, n_x, n_z })
    }

    /// Square box `[-extent, extent]²` with `n` samples per axis.
    pub fn square(extent: T, n: usize) -> Result<Self> {
        Self::new(-extent, extent, -extent, extent, n, n)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_x, self.n_z)
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / T::from_usize_lossy(self.n_x)
    }

    pub fn dz(&self) -> T {
        (self.z_max - self.z_min) / T::from_usize_lossy(self.n_z)
    }

    pub fn cell_area(&self) -> T {
        self.dx() * self.dz()
    }

    pub fn dp_x(&self) -> T {
        T::TAU() / (T::from_usize_lossy(self.n_x) * self.dx())
    }

    pub fn dp_z(&self) -> T {
        T::TAU() / (T::from_usize_lossy(self.n_z) * self.dz())
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.x_min + T::from_usize_lossy(i) * self.dx()
    }

    #[inline]
    pub fn z(&self, j: usize) -> T {
        self.z_min + T::from_usize_lossy(j) * self.dz()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_z + j
    }

    /// Momentum carried by natural-order index `k` along x.
    #[inline]
    pub fn p_x(&self, k: usize) -> T {
        signed_frequency::<T>(k, self.n_x) * self.dp_x()
    }

    #[inline]
    pub fn p_z(&self, k: usize) -> T {
        signed_frequency::<T>(k, self.n_z) * self.dp_z()
    }

    /// Lattice node nearest to `(x, z)`, or `None` outside the box.
    pub fn cell_of(&self, x: T, z: T) -> Option<(usize, usize)> {
        let fi = ((x - self.x_min) / self.dx()).round();
        let fj = ((z - self.z_min) / self.dz()).round();
        if fi < T::zero() || fj < T::zero() {
            return None;
        }
        let (i, j) = (fi.to_usize()?, fj.to_usize()?);
        (i < self.n_x && j < self.n_z).then_some((i, j))
    }

    pub fn check_shape<E>(&self, field: &Field<E>) -> Result<()> {
        if field.shape() != self.shape() {
            return Err(Error::ShapeMismatch { expected: self.shape(), found: field.shape() });
        }
        Ok(())
    }

    /// Evaluate `f(x, z)` on every node.
    pub fn sample<E, F: FnMut(T, T) -> E>(&self, mut f: F) -> Field<E> {
        let mut data = Vec::with_capacity(self.len());
        for i in 0..self.n_x {
            let x = self.x(i);
            for j in 0..self.n_z {
                data.push(f(x, self.z(j)));
            }
        }
        Field { n_x: self.n_x, n_z: self.n_z, data }
    }

    /// Riemann sum `Σ f(x_i, z_j)·dx·dz` over the whole lattice.
    pub fn integrate(&self, field: &Field<T>) -> Result<T> {
        self.check_shape(field)?;
        Ok(compensated_sum(field.data.iter().copied()) * self.cell_area())
    }

    /// Riemann sum restricted to the nodes inside `region`.
    pub fn integrate_over<R: Region<T> + ?Sized>(&self, field: &Field<T>, region: &R) -> Result<T> {
        self.check_shape(field)?;
        let mut acc = Accumulator::default();
        for i in 0..self.n_x {
            let x = self.x(i);
            for j in 0..self.n_z {
                if region.contains(x, self.z(j)) {
                    acc.add(field.data[self.index(i, j)]);
                }
            }
        }
        Ok(acc.total() * self.cell_area())
    }
}

fn signed_frequency<T: Real>(k: usize, n: usize) -> T {
    if k < n.div_ceil(2) {
        T::from_usize_lossy(k)
    } else {
        -T::from_usize_lossy(n - k)
    }
}

/// Predicate selecting lattice nodes.
pub trait Region<T> {
    fn contains(&self, x: T, z: T) -> bool;
}

impl<T, F: Fn(T, T) -> bool> Region<T> for F {
    fn contains(&self, x: T, z: T) -> bool {
        self(x, z)
    }
}

/// Values on the lattice, row-major with `z` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<E> {
    n_x: usize,
    n_z: usize,
    pub data: Vec<E>,
}

pub type ScalarField<T> = Field<T>;
pub type ComplexField<T> = Field<Complex<T>>;

impl<E: Clone> Field<E> {
    pub fn filled(n_x: usize, n_z: usize, value: E) -> Self {
        Self { n_x, n_z, data: vec![value; n_x * n_z] }
    }
}

impl<E> Field<E> {
    pub fn from_vec(n_x: usize, n_z: usize, data: Vec<E>) -> Result<Self> {
        if data.len() != n_x * n_z {
            return Err(Error::ShapeMismatch {
                expected: (n_x, n_z),
                found: (data.len() / n_z.max(1), n_z),
            });
        }
        Ok(Self { n_x, n_z, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_x, self.n_z)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &E {
        &self.data[i * self.n_z + j]
    }

    pub fn map<F, G: FnMut(&E) -> F>(&self, f: G) -> Field<F> {
        Field { n_x: self.n_x, n_z: self.n_z, data: self.data.iter().map(f).collect() }
    }
}

impl<T: Real> Field<Complex<T>> {
    pub fn norm_sqr(&self) -> Field<T> {
        self.map(|c| c.norm_sqr())
    }
}

/// Fftshift: move the zero-frequency bin of a natural-order field to `(n_x/2, n_z/2)`.
pub fn centered<E: Clone>(field: &Field<E>) -> Field<E> {
    let (n_x, n_z) = field.shape();
    let (sx, sz) = (n_x / 2, n_z / 2);
    let mut data = Vec::with_capacity(field.data.len());
    for i in 0..n_x {
        let si = (i + n_x - sx) % n_x;
        for j in 0..n_z {
            let sj = (j + n_z - sz) % n_z;
            data.push(field.data[si * n_z + sj].clone());
        }
    }
    Field { n_x, n_z, data }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator<T> {
    sum: T,
    carry: T,
}

impl<T: Real> Accumulator<T> {
    #[inline]
    pub fn add(&mut self, v: T) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry = self.carry + ((self.sum - t) + v);
        } else {
            self.carry = self.carry + ((v - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn total(&self) -> T {
        self.sum + self.carry
    }
}

pub fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut acc = Accumulator::default();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// FFT plans for one lattice shape.
///
/// The `raw` transforms are unnormalized and leave data in transposed
/// (`p_z`-major) layout; the kinetic propagator works in that layout to skip
/// two transposes per step.
#[derive(Clone)]
pub struct Spectral<T: Real> {
    grid: GridSpec<T>,
    fwd_x: Arc<dyn Fft<T>>,
    inv_x: Arc<dyn Fft<T>>,
    fwd_z: Arc<dyn Fft<T>>,
    inv_z: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for Spectral<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl<T: Real> Spectral<T> {
    pub fn new(grid: &GridSpec<T>) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid: *grid,
            fwd_x: planner.plan_fft_forward(grid.n_x),
            inv_x: planner.plan_fft_inverse(grid.n_x),
            fwd_z: planner.plan_fft_forward(grid.n_z),
            inv_z: planner.plan_fft_inverse(grid.n_z),
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    /// Scratch buffer large enough for the raw transforms.
    pub fn scratch(&self) -> Vec<Complex<T>> {
        let n = [
            self.fwd_x.get_inplace_scratch_len(),
            self.inv_x.get_inplace_scratch_len(),
            self.fwd_z.get_inplace_scratch_len(),
            self.inv_z.get_inplace_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        vec![Complex::new(T::zero(), T::zero()); n.max(self.grid.len())]
    }

    /// Unnormalized forward DFT. `data` is position-major on entry and
    /// `[k_z][k_x]` on exit; `work` must hold at least `n_x·n_z` entries.
    pub fn forward_raw(&self, data: &mut [Complex<T>], work: &mut [Complex<T>]) {
        let (n_x, n_z) = self.grid.shape();
        let n = n_x * n_z;
        let (tmp, rest) = work.split_at_mut(n);
        self.fwd_z.process_with_scratch(data, scratch_slice(rest, &self.fwd_z));
        transpose::transpose(data, tmp, n_z, n_x);
        self.fwd_x.process_with_scratch(tmp, scratch_slice(rest, &self.fwd_x));
        data.copy_from_slice(tmp);
    }

    /// Unnormalized inverse of [`Self::forward_raw`]; input in `[k_z][k_x]`
    /// layout, output position-major. Multiply by `1/(n_x·n_z)` to invert.
    pub fn inverse_raw(&self, data: &mut [Complex<T>], work: &mut [Complex<T>]) {
        let (n_x, n_z) = self.grid.shape();
        let n = n_x * n_z;
        let (tmp, rest) = work.split_at_mut(n);
        self.inv_x.process_with_scratch(data, scratch_slice(rest, &self.inv_x));
        transpose::transpose(data, tmp, n_x, n_z);
        self.inv_z.process_with_scratch(tmp, scratch_slice(rest, &self.inv_z));
        data.copy_from_slice(tmp);
    }

    /// Momentum amplitudes in natural order, `[k_x][k_z]` layout.
    pub fn to_momentum(&self, field: &ComplexField<T>) -> Result<ComplexField<T>> {
        self.grid.check_shape(field)?;
        let g = &self.grid;
        let (n_x, n_z) = g.shape();
        let mut data = field.data.clone();
        let mut work = self.work_buffer();
        self.forward_raw(&mut data, &mut work);
        let scale = g.cell_area() / T::TAU();
        let mut out = vec![Complex::new(T::zero(), T::zero()); n_x * n_z];
        for kz in 0..n_z {
            let pz = g.p_z(kz);
            for kx in 0..n_x {
                let px = g.p_x(kx);
                let phase = Complex::from_polar(scale, -(px * g.x_min + pz * g.z_min));
                out[kx * n_z + kz] = data[kz * n_x + kx] * phase;
            }
        }
        Field::from_vec(n_x, n_z, out)
    }

    /// Inverse of [`Self::to_momentum`].
    pub fn to_position(&self, momentum: &ComplexField<T>) -> Result<ComplexField<T>> {
        self.grid.check_shape(momentum)?;
        let g = &self.grid;
        let (n_x, n_z) = g.shape();
        let scale = g.dp_x() * g.dp_z() / T::TAU();
        let mut data = vec![Complex::new(T::zero(), T::zero()); n_x * n_z];
        for kx in 0..n_x {
            let px = g.p_x(kx);
            for kz in 0..n_z {
                let pz = g.p_z(kz);
                let phase = Complex::from_polar(scale, px * g.x_min + pz * g.z_min);
                data[kz * n_x + kx] = momentum.data[kx * n_z + kz] * phase;
            }
        }
        let mut work = self.work_buffer();
        self.inverse_raw(&mut data, &mut work);
        Field::from_vec(n_x, n_z, data)
    }

    pub fn work_buffer(&self) -> Vec<Complex<T>> {
        let extra = [
            self.fwd_x.get_inplace_scratch_len(),
            self.inv_x.get_inplace_scratch_len(),
            self.fwd_z.get_inplace_scratch_len(),
            self.inv_z.get_inplace_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        vec![Complex::new(T::zero(), T::zero()); self.grid.len() + extra]
    }
}

fn scratch_slice<'a, T: Real>(rest: &'a mut [Complex<T>], fft: &Arc<dyn Fft<T>>) -> &'a mut [Complex<T>] {
    &mut rest[..fft.get_inplace_scratch_len()]
}
