//! Effective spin observables of the whole setup.
//!
//! The intensity at a node is `I(x, z) = Σ_μ M_μ(x, z) s_μ`, where the real
//! fields `M_μ` are the Pauli coefficients of the spin operator that
//! represents preparation, evolution and detection at that node. Writing the
//! propagated state as `W = Σ_α φ_α σ_α`, that operator is `W†W`, hence
//!
//! `M_μ = ½Tr(σ_μ W†W) = Σ_{αβ} φ_α φ_β* d_{βαμ}`.
//!
//! Integrating `M_μ` over detector regions gives the measurement matrix
//! `M_kμ`, and `p = M s` are the detection probabilities.

use std::io::{BufRead, Write};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Accumulator, Field, GridSpec, Region, ScalarField};
use crate::scalar::Real;
use crate::spinor::{BlochVector, PauliTriple, SpinorField};

/// Tolerances for the consistency checks in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Largest imaginary residue accepted when forming `M_μ`.
    pub realness: f64,
    /// Most negative intensity or probability that is clipped to zero instead of rejected.
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { realness: 1e-10, positivity: 1e-10 }
    }
}

impl Tolerances {
    /// Defaults widened to the rounding level of `T`.
    pub fn for_real<T: Real>() -> Self {
        let t = 1e-10f64.max(8.0 * T::epsilon().as_f64());
        Self { realness: t, positivity: t }
    }
}

/// The fields `M_μ(x, z, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMap<T: Real> {
    pub m: [ScalarField<T>; 4],
    pub grid: GridSpec<T>,
    pub time: T,
}

pub fn measurement_map<T: Real>(field: &SpinorField<T>, d: &PauliTriple<T>) -> Result<MeasurementMap<T>> {
    measurement_map_with(field, d, &Tolerances::for_real::<T>())
}

pub fn measurement_map_with<T: Real>(
    field: &SpinorField<T>,
    d: &PauliTriple<T>,
    tol: &Tolerances,
) -> Result<MeasurementMap<T>> {
    let n = field.grid.len();
    let mut m: [Vec<T>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    let mut worst_imag = T::zero();
    for idx in 0..n {
        let phi: [Complex<T>; 4] = std::array::from_fn(|a| field.phi[a].data[idx]);
        for (mu, out) in m.iter_mut().enumerate() {
            let mut acc = Complex::new(T::zero(), T::zero());
            for a in 0..4 {
                for b in 0..4 {
                    let c = d.d[b][a][mu];
                    if c.re != T::zero() || c.im != T::zero() {
                        acc = acc + phi[a] * phi[b].conj() * c;
                    }
                }
            }
            worst_imag = worst_imag.max(acc.im.abs());
            out.push(acc.re);
        }
    }
    if worst_imag.as_f64() > tol.realness {
        return Err(Error::Consistency(format!(
            "M_mu has imaginary residue {worst_imag:e} above {:e}",
            tol.realness
        )));
    }
    let (n_x, n_z) = field.grid.shape();
    let [m0, m1, m2, m3] = m;
    Ok(MeasurementMap {
        m: [
            Field::from_vec(n_x, n_z, m0)?,
            Field::from_vec(n_x, n_z, m1)?,
            Field::from_vec(n_x, n_z, m2)?,
            Field::from_vec(n_x, n_z, m3)?,
        ],
        grid: field.grid,
        time: field.time,
    })
}

impl<T: Real> MeasurementMap<T> {
    /// `Σ_μ M_μ s_μ` at one node, unclipped.
    #[inline]
    pub fn intensity_at(&self, idx: usize, s: &BlochVector<T>) -> T {
        self.m[0].data[idx] * s.s[0]
            + self.m[1].data[idx] * s.s[1]
            + self.m[2].data[idx] * s.s[2]
            + self.m[3].data[idx] * s.s[3]
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [T; 4] {
        [self.m[0].data[idx], self.m[1].data[idx], self.m[2].data[idx], self.m[3].data[idx]]
    }

    /// `∫ M_μ` over the whole lattice for each `μ`.
    pub fn totals(&self) -> Result<[T; 4]> {
        let mut out = [T::zero(); 4];
        for (mu, o) in out.iter_mut().enumerate() {
            *o = self.grid.integrate(&self.m[mu])?;
        }
        Ok(out)
    }

    /// `max_μ≥1 max |M_μ|` relative to `max M_0`, per component.
    pub fn relative_peaks(&self) -> [T; 4] {
        let peak0 = self.m[0].data.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        std::array::from_fn(|mu| self.m[mu].data.iter().fold(T::zero(), |a, &v| a.max(v.abs())) / peak0)
    }

    /// Write `x,z,M0,M1,M2,M3` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,z,M0,M1,M2,M3")?;
        for i in 0..self.grid.n_x {
            let x = self.grid.x(i);
            for j in 0..self.grid.n_z {
                let idx = self.grid.index(i, j);
                let [a, b, c, d] = self.at(idx);
                writeln!(w, "{x},{},{a},{b},{c},{d}", self.grid.z(j))?;
            }
        }
        Ok(())
    }

    /// Read rows written by [`Self::write_csv`] back onto `grid`.
    pub fn read_csv<R: BufRead>(r: R, grid: &GridSpec<T>, time: T) -> Result<Self> {
        let mut cols: [Vec<T>; 4] = std::array::from_fn(|_| Vec::with_capacity(grid.len()));
        let tol = T::lit(1e-6) * grid.dx().min(grid.dz());
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "x,z,M0,M1,M2,M3" => {}
            _ => return Err(Error::Parse("missing measurement map header".into())),
        }
        let mut count = 0usize;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = parse_row::<T>(&line, 6)?;
            if count >= grid.len() {
                return Err(Error::Parse("more rows than lattice nodes".into()));
            }
            let (i, j) = (count / grid.n_z, count % grid.n_z);
            if (vals[0] - grid.x(i)).abs() > tol || (vals[1] - grid.z(j)).abs() > tol {
                return Err(Error::Parse(format!("row {count} does not sit on node ({i}, {j})")));
            }
            for mu in 0..4 {
                cols[mu].push(vals[2 + mu]);
            }
            count += 1;
        }
        if count != grid.len() {
            return Err(Error::Parse(format!("expected {} rows, found {count}", grid.len())));
        }
        let [a, b, c, d] = cols;
        Ok(Self {
            m: [
                Field::from_vec(grid.n_x, grid.n_z, a)?,
                Field::from_vec(grid.n_x, grid.n_z, b)?,
                Field::from_vec(grid.n_x, grid.n_z, c)?,
                Field::from_vec(grid.n_x, grid.n_z, d)?,
            ],
            grid: *grid,
            time,
        })
    }
}

fn parse_row<T: Real>(line: &str, expected: usize) -> Result<Vec<T>> {
    let vals: Vec<T> = line
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map(T::lit)
                .map_err(|e| Error::Parse(format!("{t:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != expected {
        return Err(Error::Parse(format!("expected {expected} columns, got {}", vals.len())));
    }
    Ok(vals)
}

/// Pointwise intensity `Σ_μ M_μ s_μ`; values in `[-tol, 0)` are clipped to zero.
pub fn intensity<T: Real>(map: &MeasurementMap<T>, s: &BlochVector<T>) -> Result<ScalarField<T>> {
    intensity_with(map, s, &Tolerances::for_real::<T>())
}

pub fn intensity_with<T: Real>(map: &MeasurementMap<T>, s: &BlochVector<T>, tol: &Tolerances) -> Result<ScalarField<T>> {
    if !s.is_physical(T::lit(1e-9)) {
        return Err(Error::Unphysical(s.to_f64()));
    }
    let floor = T::lit(-tol.positivity);
    let mut out = Vec::with_capacity(map.grid.len());
    for idx in 0..map.grid.len() {
        let v = map.intensity_at(idx, s);
        if v < floor {
            return Err(Error::Positivity { value: v.as_f64(), tolerance: tol.positivity });
        }
        out.push(v.max(T::zero()));
    }
    Field::from_vec(map.grid.n_x, map.grid.n_z, out)
}

/// Quadrant detector cells. Nodes on `x = 0` belong to the `x > 0` side and
/// nodes on `z = 0` to the `z > 0` side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    /// `x ≥ 0, z ≥ 0`
    First,
    /// `x < 0, z ≥ 0`
    Second,
    /// `x < 0, z < 0`
    Third,
    /// `x ≥ 0, z < 0`
    Fourth,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::First, Quadrant::Second, Quadrant::Third, Quadrant::Fourth];

    pub fn of<T: Real>(x: T, z: T) -> Self {
        match (x >= T::zero(), z >= T::zero()) {
            (true, true) => Quadrant::First,
            (false, true) => Quadrant::Second,
            (false, false) => Quadrant::Third,
            (true, false) => Quadrant::Fourth,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl<T: Real> Region<T> for Quadrant {
    fn contains(&self, x: T, z: T) -> bool {
        Quadrant::of(x, z) == *self
    }
}

pub fn quadrant_regions() -> [Quadrant; 4] {
    Quadrant::ALL
}

/// Rows `M_kμ = ∫_{Ω_k} M_μ`, one per detector region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMatrix<T> {
    pub rows: Vec<[T; 4]>,
}

impl<T: Real> MeasurementMatrix<T> {
    pub fn new(rows: Vec<[T; 4]>) -> Self {
        Self { rows }
    }

    pub fn n_regions(&self) -> usize {
        self.rows.len()
    }

    /// `Σ_k M_kμ` for each column.
    pub fn column_sums(&self) -> [T; 4] {
        let mut out = [T::zero(); 4];
        for row in &self.rows {
            for mu in 0..4 {
                out[mu] = out[mu] + row[mu];
            }
        }
        out
    }

    /// `M s` without any clipping.
    pub fn apply(&self, s: &BlochVector<T>) -> Vec<T> {
        self.rows
            .iter()
            .map(|r| r[0] * s.s[0] + r[1] * s.s[1] + r[2] * s.s[2] + r[3] * s.s[3])
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in &self.rows {
            writeln!(w, "{},{},{},{}", row[0], row[1], row[2], row[3])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v = parse_row::<T>(&line, 4)?;
            rows.push([v[0], v[1], v[2], v[3]]);
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty measurement matrix".into()));
        }
        Ok(Self { rows })
    }
}

/// Quadrant measurement matrix, accumulated in a single pass over the lattice.
pub fn measurement_matrix<T: Real>(map: &MeasurementMap<T>) -> MeasurementMatrix<T> {
    let g = &map.grid;
    let mut acc = [[Accumulator::<T>::default(); 4]; 4];
    for i in 0..g.n_x {
        let x = g.x(i);
        for j in 0..g.n_z {
            let k = Quadrant::of(x, g.z(j)).index();
            let idx = g.index(i, j);
            for mu in 0..4 {
                acc[k][mu].add(map.m[mu].data[idx]);
            }
        }
    }
    let area = g.cell_area();
    MeasurementMatrix { rows: acc.iter().map(|row| std::array::from_fn(|mu| row[mu].total() * area)).collect() }
}

/// Measurement matrix for arbitrary regions; every node should fall in exactly one.
pub fn measurement_matrix_for<T: Real, R: Region<T>>(map: &MeasurementMap<T>, regions: &[R]) -> Result<MeasurementMatrix<T>> {
    let mut rows = Vec::with_capacity(regions.len());
    for r in regions {
        let mut row = [T::zero(); 4];
        for (mu, v) in row.iter_mut().enumerate() {
            *v = map.grid.integrate_over(&map.m[mu], r)?;
        }
        rows.push(row);
    }
    Ok(MeasurementMatrix { rows })
}

/// Detection probabilities `p_k = Σ_μ M_kμ s_μ`.
pub fn probabilities<T: Real>(matrix: &MeasurementMatrix<T>, s: &BlochVector<T>) -> Result<Vec<T>> {
    probabilities_with(matrix, s, &Tolerances::for_real::<T>())
}

pub fn probabilities_with<T: Real>(matrix: &MeasurementMatrix<T>, s: &BlochVector<T>, tol: &Tolerances) -> Result<Vec<T>> {
    if !s.is_physical(T::lit(1e-9)) {
        return Err(Error::Unphysical(s.to_f64()));
    }
    let floor = T::lit(-tol.positivity);
    matrix
        .apply(s)
        .into_iter()
        .map(|p| {
            if p < floor {
                Err(Error::Positivity { value: p.as_f64(), tolerance: tol.positivity })
            } else {
                Ok(p.max(T::zero()))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{evolve_magnet, SetupParams};
    use crate::spinor::{init_spinor, pauli_matrices, pauli_triple};
    use crate::testutil::{random_field, rng};
    use rand::Rng;

    fn evolved(g1: f64, g2: f64, lambda: f64) -> MeasurementMap<f64> {
        let g = GridSpec::square(12.0, 64).unwrap();
        let p = SetupParams::new(g1, g2, lambda, 1.0, 100).unwrap();
        let f = evolve_magnet(&init_spinor(&g, lambda).unwrap(), &p).unwrap();
        measurement_map(&f, &pauli_triple()).unwrap()
    }

    fn random_state(r: &mut impl Rng) -> BlochVector<f64> {
        loop {
            let v: [f64; 3] = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
            if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
                return BlochVector::new(v[0], v[1], v[2]);
            }
        }
    }

    #[test]
    fn tolerances_follow_precision() {
        assert_eq!(Tolerances::for_real::<f64>(), Tolerances::default());
        let t = Tolerances::for_real::<f32>();
        assert!((t.realness - 8.0 * f32::EPSILON as f64).abs() < 1e-12);
    }

    #[test]
    fn unevolved_state_is_spin_blind() {
        let g = GridSpec::<f64>::square(8.0, 32).unwrap();
        let f = init_spinor(&g, 0.4).unwrap();
        let m = measurement_map(&f, &pauli_triple()).unwrap();
        for idx in 0..g.len() {
            assert!((m.m[0].data[idx] - f.phi[0].data[idx].norm_sqr()).abs() < 1e-15);
            assert!(m.m[1..].iter().all(|c| c.data[idx] == 0.0));
        }
    }

    #[test]
    fn map_matches_operator_trace() {
        let g = GridSpec::square(2.0, 8).unwrap();
        let f = random_field(&g, 5);
        let m = measurement_map(&f, &pauli_triple()).unwrap();
        let s = pauli_matrices::<f64>();
        for idx in 0..g.len() {
            let w = f.operator_at(idx);
            let ww = w.adjoint().mul(&w);
            for mu in 0..4 {
                let t = ww.mul(&s[mu]).trace() * 0.5;
                assert!(t.im.abs() < 1e-13);
                assert!((m.m[mu].data[idx] - t.re).abs() < 1e-13);
            }
            let p: [Complex<f64>; 4] = std::array::from_fn(|a| f.phi[a].data[idx]);
            let m2 = 2.0 * (p[0] * p[2].conj()).re - 2.0 * (p[1] * p[3].conj()).im;
            assert!((m.m[2].data[idx] - m2).abs() < 1e-13);
        }
    }

    #[test]
    fn completeness_and_positivity_after_evolution() {
        let m = evolved(2.0, 0.5, 0.4);
        let t = m.totals().unwrap();
        assert!((t[0] - 1.0).abs() < 1e-6 && t[1..].iter().all(|v| v.abs() < 1e-6), "{t:?}");
        for idx in 0..m.grid.len() {
            let v = m.at(idx);
            assert!(v[0] >= 0.0);
            assert!((v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt() <= v[0] * (1.0 + 1e-9) + 1e-15);
        }
        let mut r = rng(9);
        for _ in 0..100 {
            let s = random_state(&mut r);
            let i = intensity(&m, &s).unwrap();
            assert!(i.data.iter().all(|v| *v >= 0.0));
            assert!((m.grid.integrate(&i).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn quadrant_tie_breaks() {
        assert_eq!(Quadrant::of(0.0, 0.0), Quadrant::First);
        assert_eq!(Quadrant::of(0.0, -1.0), Quadrant::Fourth);
        assert_eq!(Quadrant::of(-1.0, 0.0), Quadrant::Second);
        assert_eq!(Quadrant::of(-1.0, -1e-300), Quadrant::Third);
        assert_eq!(Quadrant::ALL.map(|q| q.index()), [0, 1, 2, 3]);
    }

    #[test]
    fn quadrants_partition_the_lattice() {
        let g = GridSpec::square(3.0, 6).unwrap();
        for i in 0..g.n_x {
            for j in 0..g.n_z {
                let hits = Quadrant::ALL.iter().filter(|q| Region::<f64>::contains(*q, g.x(i), g.z(j))).count();
                assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn column_sums_reproduce_totals() {
        let m = evolved(2.0, 0.4, 0.5);
        let matrix = measurement_matrix(&m);
        let sums = matrix.column_sums();
        let totals = m.totals().unwrap();
        for mu in 0..4 {
            assert!((sums[mu] - totals[mu]).abs() < 1e-12);
        }
        assert!((sums[0] - 1.0).abs() < 1e-6 && sums[1..].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn single_pass_matches_per_region_integrals() {
        let m = evolved(2.5, 0.7, 0.5);
        let a = measurement_matrix(&m);
        let b = measurement_matrix_for(&m, &Quadrant::ALL).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for mu in 0..4 {
                assert!((ra[mu] - rb[mu]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn no_field_gives_spin_independent_rows() {
        let m = evolved(0.0, 0.7, 0.5);
        let matrix = measurement_matrix(&m);
        for row in &matrix.rows {
            assert!(row[1..].iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn symmetric_gaussian_fills_quadrants_equally() {
        // Nodes at ±dx/2, ±3dx/2, ... so no node sits on an axis.
        let dx = 0.1;
        let g = GridSpec::<f64>::new(-10.05, 9.95, -10.05, 9.95, 200, 200).unwrap();
        assert!((g.dx() - dx).abs() < 1e-12);
        let f = init_spinor(&g, 1.0).unwrap();
        let matrix = measurement_matrix(&measurement_map(&f, &pauli_triple()).unwrap());
        for row in &matrix.rows {
            assert!((row[0] - 0.25).abs() < 1e-6, "{row:?}");
        }
    }

    #[test]
    fn axis_nodes_shift_weight_by_order_dx() {
        let g = GridSpec::<f64>::square(10.0, 100).unwrap();
        let f = init_spinor(&g, 1.0).unwrap();
        let matrix = measurement_matrix(&measurement_map(&f, &pauli_triple()).unwrap());
        // The x = 0 and z = 0 lines carry weight ~ dx / sqrt(2π) in each marginal.
        let line = g.dx() / (2.0 * std::f64::consts::PI).sqrt();
        let first = matrix.rows[Quadrant::First.index()][0];
        let third = matrix.rows[Quadrant::Third.index()][0];
        assert!(first > 0.25 && third < 0.25);
        assert!((first - third - line).abs() < 1e-6, "{first} {third} {line}");
    }

    #[test]
    fn probabilities_equal_region_integrals_of_intensity() {
        let m = evolved(2.0, 0.9, 0.4);
        let matrix = measurement_matrix(&m);
        let s = BlochVector::from_angles(1.91, 4.78).unwrap();
        let p = probabilities(&matrix, &s).unwrap();
        let i = intensity(&m, &s).unwrap();
        for q in Quadrant::ALL {
            assert!((p[q.index()] - m.grid.integrate_over(&i, &q).unwrap()).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(matches!(probabilities(&matrix, &BlochVector::new(1.0, 1.0, 0.0)), Err(Error::Unphysical(_))));
    }

    #[test]
    fn negative_model_probability_is_reported() {
        let matrix = MeasurementMatrix::new(vec![[0.5, 0.6, 0.0, 0.0], [0.5, -0.6, 0.0, 0.0]]);
        let s = BlochVector::new(-1.0, 0.0, 0.0);
        assert!(matches!(probabilities(&matrix, &s), Err(Error::Positivity { .. })));
    }

    #[test]
    fn s2_signal_fades_as_the_beam_becomes_round() {
        let peaks: Vec<f64> = [0.3, 0.6, 0.9, 1.0].iter().map(|&l| evolved(2.0, 0.5, l).relative_peaks()[2]).collect();
        assert!(peaks.windows(2).all(|w| w[1] < w[0]), "{peaks:?}");
        assert!(peaks[3] < 1e-8, "{peaks:?}");
    }

    #[test]
    fn csv_round_trips() {
        let m = evolved(2.0, 0.5, 0.5);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = MeasurementMap::read_csv(buf.as_slice(), &m.grid, m.time).unwrap();
        for mu in 0..4 {
            assert_eq!(back.m[mu].data, m.m[mu].data);
        }
        let matrix = measurement_matrix(&m);
        let mut buf = Vec::new();
        matrix.write_csv(&mut buf).unwrap();
        assert_eq!(MeasurementMatrix::read_csv(buf.as_slice()).unwrap(), matrix);
        assert!(MeasurementMatrix::<f64>::read_csv("1,2,3\n".as_bytes()).is_err());
    }
}
