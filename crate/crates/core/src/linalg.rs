//! Small dense decompositions. These run in `f64` through nalgebra whatever
//! the simulation scalar is; the matrices involved are at most 4×k.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

use crate::scalar::Real;

/// Moore-Penrose inverse of a `k×4` matrix via SVD, discarding singular
/// values below `rel_cutoff · σ_max`. Returns `(pinv (4×k), singular values, rank)`.
pub fn pseudo_inverse<T: Real>(rows: &[[T; 4]], rel_cutoff: f64) -> (Vec<Vec<f64>>, Vec<f64>, usize) {
    let k = rows.len();
    let a = DMatrix::from_fn(k, 4, |r, c| rows[r][c].as_f64());
    let svd = a.svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cut = rel_cutoff * smax;
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut pinv = vec![vec![0.0; k]; 4];
    let mut rank = 0;
    for (idx, &s) in sv.iter().enumerate() {
        if s <= cut || s == 0.0 {
            continue;
        }
        rank += 1;
        for i in 0..4 {
            for j in 0..k {
                pinv[i][j] += vt[(idx, i)] * u[(j, idx)] / s;
            }
        }
    }
    let mut sorted = sv;
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (pinv, sorted, rank)
}

/// Eigen-decomposition of a symmetric 3×3 matrix; eigenvalues ascending,
/// eigenvectors as columns in matching order.
pub fn sym_eigen3<T: Real>(k: &[[T; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let m = Matrix3::from_fn(|r, c| 0.5 * (k[r][c].as_f64() + k[c][r].as_f64()));
    let eig = SymmetricEigen::new(m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.map(|i| eig.eigenvalues[i]);
    let mut vecs = [[0.0; 3]; 3];
    for (col, &i) in order.iter().enumerate() {
        for r in 0..3 {
            vecs[r][col] = eig.eigenvectors[(r, i)];
        }
    }
    (vals, vecs)
}

/// Inverse of a symmetric positive-definite 3×3 matrix through its eigenbasis.
pub fn sym_inverse3(vals: &[f64; 3], vecs: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            inv[r][c] = (0..3).map(|e| vecs[r][e] * vecs[c][e] / vals[e]).sum();
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_inverts_a_square_matrix() {
        let rows = [[1.0, 2.0, 0.0, 1.0], [0.0, 1.0, 3.0, 0.0], [2.0, 0.0, 1.0, 1.0], [1.0, 1.0, 1.0, 4.0]];
        let (p, sv, rank) = pseudo_inverse(&rows, 1e-12);
        assert_eq!(rank, 4);
        assert!(sv[0] >= sv[3]);
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| p[i][k] * rows[k][j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pinv_drops_null_directions() {
        let rows = [[0.25, 0.0, 0.0, 0.0]; 4];
        let (_, sv, rank) = pseudo_inverse(&rows, 1e-12);
        assert_eq!(rank, 1);
        assert!((sv[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_inverse_matches_direct() {
        let k = [[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 0.5]];
        let (vals, vecs) = sym_eigen3(&k);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let inv = sym_inverse3(&vals, &vecs);
        let direct = Matrix3::from_fn(|r, c| k[r][c]).try_inverse().unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((inv[r][c] - direct[(r, c)]).abs() < 1e-12);
            }
        }
    }
}
