//! Evolve one setup on the full lattice and print its inverse-information diagonal.
//!
//! `cargo run --release -p sg-tomo --example baseline -- g1 g2 lambda [n] [extent] [nt]`

use std::time::Instant;

use sg_tomo::evolve::{simulate, SetupParams};
use sg_tomo::fisher::{fisher_continuous, fisher_quadrant, log_error};
use sg_tomo::measure::{measurement_map, measurement_matrix};
use sg_tomo::spinor::{pauli_triple, BlochVector};
use sg_tomo::GridSpec;

fn main() -> sg_tomo::Result<()> {
    let a: Vec<f64> = std::env::args().skip(1).map(|s| s.parse().unwrap()).collect();
    let (g1, g2, lambda) = (a[0], a[1], a[2]);
    let n = a.get(3).copied().unwrap_or(600.0) as usize;
    let extent = a.get(4).copied().unwrap_or(50.0);
    let nt = a.get(5).copied().unwrap_or(600.0) as usize;
    let grid = GridSpec::square(extent, n)?;
    let params = SetupParams::new(g1, g2, lambda, 1.0, nt)?;
    let start = Instant::now();
    let field = simulate(&grid, &params)?;
    let evolved = start.elapsed();
    let map = measurement_map(&field, &pauli_triple())?;
    let s = BlochVector::from_angles(1.91, 4.78)?;
    let matrix = measurement_matrix(&map);
    println!("evolution {:.2?}, norm {:.3e}, boundary {:.3e}", evolved, field.norm() - 1.0, field.boundary_ratio());
    println!("totals {:?}", map.totals()?);
    for row in &matrix.rows {
        println!("row {row:?}");
    }
    for info in [fisher_quadrant(&matrix, &s)?, fisher_continuous(&map, &s)?] {
        let e = log_error(&info)?;
        println!("{:?}: delta {:.4} var {:?} no_s2 {:?} cond {:.3e}", info.scheme, e.delta, e.variances, e.delta_no_s2, e.condition);
    }
    Ok(())
}
