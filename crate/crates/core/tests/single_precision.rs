use sg_tomo::fisher::{fisher_continuous, fisher_quadrant, log_error};
use sg_tomo::{measurement_map, measurement_matrix, pauli_triple, simulate, Bloch32, Bloch64, Grid32, Grid64, Setup32, Setup64};

#[test]
fn single_and_double_precision_agree() {
    let g32 = Grid32::square(16.0, 96).unwrap();
    let g64 = Grid64::square(16.0, 96).unwrap();
    let f32_field = simulate(&g32, &Setup32::new(2.0, 0.8, 0.5, 1.2, 150).unwrap()).unwrap();
    let f64_field = simulate(&g64, &Setup64::new(2.0, 0.8, 0.5, 1.2, 150).unwrap()).unwrap();
    assert!((f32_field.norm() - 1.0).abs() < 1e-4);

    let m32 = measurement_map(&f32_field, &pauli_triple()).unwrap();
    let m64 = measurement_map(&f64_field, &pauli_triple()).unwrap();
    let r32 = measurement_matrix(&m32);
    let r64 = measurement_matrix(&m64);
    for (a, b) in r32.rows.iter().zip(&r64.rows) {
        for mu in 0..4 {
            assert!((a[mu] as f64 - b[mu]).abs() < 1e-4, "{a:?} vs {b:?}");
        }
    }

    let s32 = Bloch32::from_angles(1.91, 4.78).unwrap();
    let s64 = Bloch64::from_angles(1.91, 4.78).unwrap();
    let d32 = log_error(&fisher_quadrant(&r32, &s32).unwrap()).unwrap().delta;
    let d64 = log_error(&fisher_quadrant(&r64, &s64).unwrap()).unwrap().delta;
    assert!((d32 - d64).abs() < 1e-2, "{d32} vs {d64}");
    let c32 = log_error(&fisher_continuous(&m32, &s32).unwrap()).unwrap().delta;
    let c64 = log_error(&fisher_continuous(&m64, &s64).unwrap()).unwrap().delta;
    assert!((c32 - c64).abs() < 1e-2, "{c32} vs {c64}");
}
