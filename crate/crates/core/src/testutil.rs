use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{ComplexField, GridSpec};
use crate::spinor::SpinorField;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(grid: &GridSpec<f64>, seed: u64) -> SpinorField<f64> {
    let mut r = rng(seed);
    let phi = std::array::from_fn(|_| {
        let data = (0..grid.len())
            .map(|_| Complex::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::from_vec(grid.n_x, grid.n_z, data).unwrap()
    });
    SpinorField::new(*grid, phi, 0.0).unwrap()
}

/// Smooth, well-localized spinor with all four components populated.
pub fn smooth_field(grid: &GridSpec<f64>) -> SpinorField<f64> {
    let shapes = [(0.0, 0.0, 1.0), (0.7, -0.4, 0.5), (-0.5, 0.3, -0.8), (0.2, 0.6, 0.3)];
    let phi = shapes.map(|(x0, z0, k)| {
        grid.sample(|x, z| {
            let g = (-((x - x0) * (x - x0) + (z - z0) * (z - z0)) / 2.0).exp();
            Complex::from_polar(g, k * x - 0.5 * k * z)
        })
    });
    let mut f = SpinorField::new(*grid, phi, 0.0).unwrap();
    let n = f.norm().sqrt();
    for c in &mut f.phi {
        for v in &mut c.data {
            *v /= n;
        }
    }
    f
}

pub fn max_diff(a: &SpinorField<f64>, b: &SpinorField<f64>) -> f64 {
    a.phi
        .iter()
        .zip(&b.phi)
        .flat_map(|(x, y)| x.data.iter().zip(&y.data).map(|(u, v)| (u - v).norm()))
        .fold(0.0, f64::max)
}

pub fn l2_diff(a: &SpinorField<f64>, b: &SpinorField<f64>) -> f64 {
    let s: f64 = a
        .phi
        .iter()
        .zip(&b.phi)
        .flat_map(|(x, y)| x.data.iter().zip(&y.data).map(|(u, v)| (u - v).norm_sqr()))
        .sum();
    (s * a.grid.cell_area()).sqrt()
}
