//! Classical Fisher information for both detection schemes, the logarithmic
//! error and the quantum Cramér-Rao reference values.
//!
//! With `s_0 = 1` fixed, the scaled information matrix `K = J/N` is the 3×3
//! block over `μ, ν ∈ {1, 2, 3}`:
//!
//! * quadrants: `K_μν = Σ_k M_kμ M_kν / p_k`
//! * continuous: `K_μν = ∫ M_μ M_ν / I dx dz`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Accumulator;
use crate::linalg::{sym_eigen3, sym_inverse3};
use crate::measure::{MeasurementMap, MeasurementMatrix};
use crate::scalar::Real;
use crate::spinor::BlochVector;

/// Condition number beyond which `K` is treated as singular.
pub const MAX_CONDITION: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Quadrant,
    Continuous,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Quadrant => "quadrant",
            Scheme::Continuous => "continuous",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrant" => Ok(Scheme::Quadrant),
            "continuous" => Ok(Scheme::Continuous),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Scaled Fisher matrix `K` over the Bloch components `s1, s2, s3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoMatrix<T> {
    pub k: [[T; 3]; 3],
    pub scheme: Scheme,
    pub s_ref: BlochVector<T>,
}

impl<T: Real> InfoMatrix<T> {
    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 3] {
        sym_eigen3(&self.k).0
    }

    pub fn frobenius(&self) -> f64 {
        self.k.iter().flatten().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                worst = worst.max((self.k[r][c] - self.k[c][r]).abs().as_f64());
            }
        }
        worst
    }
}

/// Fisher matrix of the quadrant (multinomial) scheme.
pub fn fisher_quadrant<T: Real>(matrix: &MeasurementMatrix<T>, s: &BlochVector<T>) -> Result<InfoMatrix<T>> {
    if !s.is_physical(T::lit(1e-9)) {
        return Err(Error::Unphysical(s.to_f64()));
    }
    let p = matrix.apply(s);
    let mut k = [[T::zero(); 3]; 3];
    for (row, &pk) in matrix.rows.iter().zip(&p) {
        if !(pk > T::zero()) {
            return Err(Error::Consistency(format!(
                "quadrant probability {pk:e} is not positive; the Fisher matrix is undefined"
            )));
        }
        for mu in 0..3 {
            for nu in 0..3 {
                k[mu][nu] = k[mu][nu] + row[mu + 1] * row[nu + 1] / pk;
            }
        }
    }
    Ok(InfoMatrix { k, scheme: Scheme::Quadrant, s_ref: *s })
}

/// Options for [`fisher_continuous_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousOptions {
    /// Nodes with `I` at or below this are excluded from the integral.
    pub floor: f64,
    /// Largest `|M_μ|` tolerated at an excluded node.
    pub support: f64,
}

impl Default for ContinuousOptions {
    fn default() -> Self {
        Self { floor: 1e-300, support: 1e-10 }
    }
}

/// Fisher matrix of the continuous (position-resolved) scheme.
pub fn fisher_continuous<T: Real>(map: &MeasurementMap<T>, s: &BlochVector<T>) -> Result<InfoMatrix<T>> {
    fisher_continuous_with(map, s, &ContinuousOptions::default())
}

pub fn fisher_continuous_with<T: Real>(
    map: &MeasurementMap<T>,
    s: &BlochVector<T>,
    opts: &ContinuousOptions,
) -> Result<InfoMatrix<T>> {
    if !s.is_physical(T::lit(1e-9)) {
        return Err(Error::Unphysical(s.to_f64()));
    }
    let floor = T::lit(opts.floor);
    let support = T::lit(opts.support);
    let mut acc = [[Accumulator::<T>::default(); 3]; 3];
    for idx in 0..map.grid.len() {
        let m = map.at(idx);
        let i = m[0] * s.s[0] + m[1] * s.s[1] + m[2] * s.s[2] + m[3] * s.s[3];
        if i <= floor {
            let weight = m.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            if weight > support {
                return Err(Error::SupportViolation { intensity: i.as_f64(), weight: weight.as_f64() });
            }
            continue;
        }
        for mu in 0..3 {
            let a = m[mu + 1] / i;
            for nu in mu..3 {
                acc[mu][nu].add(a * m[nu + 1]);
            }
        }
    }
    let area = map.grid.cell_area();
    let mut k = [[T::zero(); 3]; 3];
    for mu in 0..3 {
        for nu in mu..3 {
            let v = acc[mu][nu].total() * area;
            k[mu][nu] = v;
            k[nu][mu] = v;
        }
    }
    Ok(InfoMatrix { k, scheme: Scheme::Continuous, s_ref: *s })
}

/// Logarithmic error and the variances behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub scheme: Scheme,
    /// `log10 tr K⁻¹`; `+∞` when `K` is singular.
    pub delta: f64,
    /// `diag K⁻¹`, the asymptotic per-particle variances of `s1, s2, s3`.
    pub variances: [f64; 3],
    /// `log10` of the trace without the `s2` variance.
    pub delta_no_s2: f64,
    pub condition: f64,
    /// Eigenvector of the smallest eigenvalue when `K` is singular.
    pub null_direction: Option<[f64; 3]>,
    pub quantum_delta_s: f64,
    pub quantum_delta_r: Option<f64>,
}

impl ErrorSummary {
    pub fn is_singular(&self) -> bool {
        self.null_direction.is_some()
    }

    /// `delta ≥ Δ_S` within `slack`, the Cramér-Rao ordering.
    pub fn respects_quantum_bound(&self, slack: f64) -> bool {
        self.delta >= self.quantum_delta_s - slack
    }
}

/// Logarithmic error of `K`, with the quantum reference values for `K.s_ref`.
pub fn log_error<T: Real>(info: &InfoMatrix<T>) -> Result<ErrorSummary> {
    let (vals, vecs) = sym_eigen3(&info.k);
    let (lo, hi) = (vals[0], vals[2]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let (q_s, q_r) = quantum_bounds(&info.s_ref)?;
    if !(hi > 0.0) || !(condition < MAX_CONDITION) {
        // Singular: report the s1/s3 block alone for the "without s2" figure.
        let sub = [[info.k[0][0].as_f64(), info.k[0][2].as_f64()], [info.k[2][0].as_f64(), info.k[2][2].as_f64()]];
        let det = sub[0][0] * sub[1][1] - sub[0][1] * sub[1][0];
        let delta_no_s2 = if det > 0.0 { ((sub[0][0] + sub[1][1]) / det).log10() } else { f64::INFINITY };
        return Ok(ErrorSummary {
            scheme: info.scheme,
            delta: f64::INFINITY,
            variances: [f64::INFINITY; 3],
            delta_no_s2,
            condition,
            null_direction: Some([vecs[0][0], vecs[1][0], vecs[2][0]]),
            quantum_delta_s: q_s.as_f64(),
            quantum_delta_r: q_r.map(|v| v.as_f64()),
        });
    }
    let inv = sym_inverse3(&vals, &vecs);
    let variances = [inv[0][0], inv[1][1], inv[2][2]];
    Ok(ErrorSummary {
        scheme: info.scheme,
        delta: variances.iter().sum::<f64>().log10(),
        variances,
        delta_no_s2: (variances[0] + variances[2]).log10(),
        condition,
        null_direction: None,
        quantum_delta_s: q_s.as_f64(),
        quantum_delta_r: q_r.map(|v| v.as_f64()),
    })
}

/// Purity threshold separating mixed from pure states.
const PURE_TOL: f64 = 1e-9;

/// Symmetric and right-logarithmic-derivative reference values `(Δ_S, Δ_R)`.
///
/// Mixed states: both equal `log10(3 - |s|²)`. Pure states: `Δ_S = log10 3`
/// and `Δ_R` is not available.
pub fn quantum_bounds<T: Real>(s: &BlochVector<T>) -> Result<(T, Option<T>)> {
    if !s.is_physical(T::lit(PURE_TOL)) {
        return Err(Error::Unphysical(s.to_f64()));
    }
    let r2 = s.purity();
    if r2 < T::one() - T::lit(PURE_TOL) {
        let d = (T::lit(3.0) - r2).log10();
        Ok((d, Some(d)))
    } else {
        Ok((T::lit(3.0).log10(), None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(k: [[f64; 3]; 3]) -> InfoMatrix<f64> {
        InfoMatrix { k, scheme: Scheme::Quadrant, s_ref: BlochVector::new(0.0, 0.0, 0.0) }
    }

    #[test]
    fn identity_information_gives_log_three() {
        let e = log_error(&info([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])).unwrap();
        assert!((e.delta - 3f64.log10()).abs() < 1e-15);
        assert_eq!(e.variances, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn weak_s2_direction_dominates_the_error() {
        let e = log_error(&info([[1.0, 0.0, 0.0], [0.0, 1e-12, 0.0], [0.0, 0.0, 1.0]])).unwrap();
        assert!((e.delta - 12.0).abs() < 1e-9);
        assert!((e.delta_no_s2 - 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn singular_information_is_a_sentinel() {
        let e = log_error(&info([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 2.0]])).unwrap();
        assert!(e.delta.is_infinite() && e.is_singular());
        let n = e.null_direction.unwrap();
        assert!((n[1].abs() - 1.0).abs() < 1e-12);
        assert!((e.delta_no_s2 - 1.5f64.log10()).abs() < 1e-12);
        let zero = log_error(&info([[0.0; 3]; 3])).unwrap();
        assert!(zero.delta.is_infinite());
    }

    #[test]
    fn quantum_reference_values() {
        let (s, r) = quantum_bounds(&BlochVector::<f64>::maximally_mixed()).unwrap();
        assert!((s - 3f64.log10()).abs() < 1e-15 && r == Some(s));
        assert!((s - 0.477).abs() < 1e-3);

        let pure = BlochVector::from_angles(1.91, 4.78).unwrap();
        let (s, r) = quantum_bounds(&pure).unwrap();
        assert!((s - 3f64.log10()).abs() < 1e-15);
        assert!(r.is_none());

        let half = BlochVector::<f64>::new(0.5, 0.5, 0.0);
        let (s, r) = quantum_bounds(&half).unwrap();
        assert!((s - 0.397_940_008_672_037_6).abs() < 1e-12);
        assert_eq!(r, Some(s));

        assert!(quantum_bounds(&BlochVector::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn quadrant_fisher_requires_positive_probabilities() {
        let m = MeasurementMatrix::new(vec![
            [0.5, 0.5, 0.0, 0.0],
            [0.5, -0.5, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]);
        assert!(fisher_quadrant(&m, &BlochVector::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn spin_blind_matrix_has_zero_information() {
        let m = MeasurementMatrix::new(vec![[0.25, 0.0, 0.0, 0.0]; 4]);
        let k = fisher_quadrant(&m, &BlochVector::from_angles(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(k.k, [[0.0; 3]; 3]);
        assert!(log_error(&k).unwrap().delta.is_infinite());
    }

    mod oracles {
        use super::super::*;
        use crate::evolve::{evolve_magnet, SetupParams};
        use crate::grid::GridSpec;
        use crate::measure::{measurement_map, measurement_matrix, MeasurementMap};
        use crate::spinor::{init_spinor, pauli_triple};

        fn map() -> MeasurementMap<f64> {
            let g = GridSpec::square(12.0, 64).unwrap();
            let p = SetupParams::new(2.0, 0.6, 0.5, 1.0, 100).unwrap();
            let f = evolve_magnet(&init_spinor(&g, 0.5).unwrap(), &p).unwrap();
            measurement_map(&f, &pauli_triple()).unwrap()
        }

        fn shifted(s: &BlochVector<f64>, d: [f64; 3]) -> BlochVector<f64> {
            BlochVector::new(s.s[1] + d[0], s.s[2] + d[1], s.s[3] + d[2])
        }

        /// `-∂²/∂s_μ∂s_ν` of `l(s')` at `s' = s` by central differences.
        fn neg_hessian(l: impl Fn(&BlochVector<f64>) -> f64, s: &BlochVector<f64>, h: f64) -> [[f64; 3]; 3] {
            let e = |m: usize, a: f64| -> [f64; 3] { std::array::from_fn(|k| if k == m { a } else { 0.0 }) };
            let add = |a: [f64; 3], b: [f64; 3]| -> [f64; 3] { std::array::from_fn(|k| a[k] + b[k]) };
            let mut out = [[0.0; 3]; 3];
            for m in 0..3 {
                for n in 0..3 {
                    let f = |a: f64, b: f64| l(&shifted(s, add(e(m, a), e(n, b))));
                    out[m][n] = -(f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
                }
            }
            out
        }

        fn assert_close(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3], rel: f64) {
            let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for m in 0..3 {
                for n in 0..3 {
                    assert!((a[m][n] - b[m][n]).abs() <= rel * scale, "{a:?} vs {b:?}");
                }
            }
        }

        #[test]
        fn quadrant_fisher_is_expected_curvature() {
            let matrix = measurement_matrix(&map());
            for s in [BlochVector::from_angles(1.91, 4.78).unwrap(), BlochVector::new(0.2, -0.3, 0.1)] {
                let p = matrix.apply(&s);
                let l = |t: &BlochVector<f64>| matrix.apply(t).iter().zip(&p).map(|(q, pk)| pk * q.ln()).sum::<f64>();
                let fd = neg_hessian(l, &s, 1e-3);
                assert_close(&fisher_quadrant(&matrix, &s).unwrap().k, &fd, 1e-4);
            }
        }

        #[test]
        fn continuous_fisher_is_expected_curvature() {
            let m = map();
            let area = m.grid.cell_area();
            let s = BlochVector::new(0.3, -0.25, 0.2);
            let l = |t: &BlochVector<f64>| {
                (0..m.grid.len())
                    .map(|idx| {
                        let i = m.intensity_at(idx, &s);
                        if i > 1e-300 { i * m.intensity_at(idx, t).ln() } else { 0.0 }
                    })
                    .sum::<f64>()
                    * area
            };
            let fd = neg_hessian(l, &s, 1e-3);
            assert_close(&fisher_continuous(&m, &s).unwrap().k, &fd, 1e-4);
        }

        #[test]
        fn continuous_fisher_equals_quadrant_formula_on_single_nodes() {
            let m = map();
            let area = m.grid.cell_area();
            let rows = (0..m.grid.len()).map(|idx| m.at(idx).map(|v| v * area)).collect();
            let nodes = crate::measure::MeasurementMatrix::new(rows);
            let s = BlochVector::new(0.1, 0.4, -0.5);
            assert_close(&fisher_continuous(&m, &s).unwrap().k, &fisher_quadrant(&nodes, &s).unwrap().k, 1e-12);
        }

        #[test]
        fn coarse_graining_loses_information() {
            let m = map();
            let matrix = measurement_matrix(&m);
            for s in [BlochVector::from_angles(1.91, 4.78).unwrap(), BlochVector::new(0.0, 0.5, 0.5)] {
                let kc = fisher_continuous(&m, &s).unwrap().k;
                let kq = fisher_quadrant(&matrix, &s).unwrap().k;
                let diff: [[f64; 3]; 3] = std::array::from_fn(|a| std::array::from_fn(|b| kc[a][b] - kq[a][b]));
                let (vals, _) = crate::linalg::sym_eigen3(&diff);
                assert!(vals[0] >= -1e-8, "{vals:?}");
                assert!(log_error(&fisher_quadrant(&matrix, &s).unwrap()).unwrap().delta
                    >= log_error(&fisher_continuous(&m, &s).unwrap()).unwrap().delta - 1e-8);
            }
        }

        #[test]
        fn support_violation_is_reported() {
            let mut m = map();
            m.m[0].data[0] = 0.0;
            m.m[1].data[0] = 1e-3;
            let s = BlochVector::new(0.0, 0.0, 0.0);
            assert!(matches!(fisher_continuous(&m, &s), Err(Error::SupportViolation { .. })));
        }
    }

}
