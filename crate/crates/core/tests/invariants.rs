use homlab::corrector::{homogenized_matrix, solve_corrector, CorrectorConfig, ProtocolChoice};
use homlab::experiments::{rate_experiment, LadderConfig};
use homlab::tensor_field::{CoefficientTensorField, FieldKind, FrequencyLayout, TensorValue, TrigTerm};

fn phi() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

fn golden_1d() -> CoefficientTensorField {
    let layout = FrequencyLayout::independent(vec![vec![1.0, phi()]]).unwrap();
    CoefficientTensorField::scalar_quasi_periodic(layout, 2.0, &[(vec![1, 0], 0.5, 0.0), (vec![0, 1], 0.5, 0.0)])
        .unwrap()
        .certified(4096, 0)
        .unwrap()
}

fn periodic_1d() -> CoefficientTensorField {
    CoefficientTensorField::scalar_trig(1, 2.0, &[(vec![1.0], 0.0, 1.0)])
        .unwrap()
        .certified(1024, 0)
        .unwrap()
}

fn scalar_2x2(rows: [[f64; 2]; 2]) -> TensorValue {
    TensorValue::from_nested(&rows.map(|r| r.map(|v| vec![vec![v]]).to_vec()).to_vec()).unwrap()
}

/// Periodic 2D field with a skew part, so `A ≠ A*`.
fn skew_2d() -> CoefficientTensorField {
    CoefficientTensorField::new(FieldKind::TrigPolynomial(vec![
        TrigTerm {
            freq: vec![0.0, 0.0],
            cos: scalar_2x2([[2.0, 0.3], [-0.3, 1.5]]),
            sin: TensorValue::zeros(2, 1),
        },
        TrigTerm {
            freq: vec![1.0, 0.0],
            cos: scalar_2x2([[0.5, 0.2], [0.0, 0.0]]),
            sin: TensorValue::zeros(2, 1),
        },
        TrigTerm {
            freq: vec![0.0, 1.0],
            cos: TensorValue::zeros(2, 1),
            sin: scalar_2x2([[0.0, 0.0], [-0.2, 0.4]]),
        },
    ]))
    .unwrap()
    .certified(2048, 0)
    .unwrap()
}

#[test]
fn truncated_homogenized_matrix_is_cauchy_in_t() {
    let f = golden_1d();
    let a: Vec<f64> = [8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|&t| {
            let cfg = CorrectorConfig::new(t, 1.0 / 16.0).with_protocol(ProtocolChoice::Truncated);
            let set = solve_corrector(&f, &cfg).unwrap();
            homogenized_matrix(&f, &set).unwrap().get(0, 0, 0, 0)
        })
        .collect();
    let diffs: Vec<f64> = a.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{a:?}");
}

#[test]
fn homogenized_matrix_of_adjoint_is_transpose() {
    let f = skew_2d();
    let g = f.adjoint().certified(2048, 0).unwrap();
    let cfg = CorrectorConfig::new(1.0, 1.0 / 64.0);
    let a = homogenized_matrix(&f, &solve_corrector(&f, &cfg).unwrap()).unwrap();
    let b = homogenized_matrix(&g, &solve_corrector(&g, &cfg).unwrap()).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let (x, y) = (a.get(i, j, 0, 0), b.get(j, i, 0, 0));
            assert!((x - y).abs() <= 1e-6, "({i},{j}): {x} vs {y}");
        }
    }
    assert!((a.get(0, 1, 0, 0) - a.get(1, 0, 0, 0)).abs() > 1e-3);
}

#[test]
fn homogenized_matrix_stays_within_certified_bounds() {
    for f in [skew_2d(), golden_1d()] {
        let cfg = CorrectorConfig::new(16.0, 1.0 / 16.0).with_protocol(ProtocolChoice::Truncated);
        let cfg = if f.d() == 2 { CorrectorConfig::new(1.0, 1.0 / 64.0) } else { cfg };
        let a = homogenized_matrix(&f, &solve_corrector(&f, &cfg).unwrap()).unwrap();
        assert!(a.ellipticity_ok, "{:?}", a.ellipticity);
    }
}

#[test]
fn truncated_window_position_matters_less_as_t_grows() {
    let f = golden_1d();
    let spread = |t: f64| {
        let vals: Vec<f64> = [0.0, 37.0, -101.0]
            .iter()
            .map(|&c| {
                let cfg = CorrectorConfig::new(t, 1.0 / 16.0)
                    .with_protocol(ProtocolChoice::Truncated)
                    .with_center(vec![c]);
                homogenized_matrix(&f, &solve_corrector(&f, &cfg).unwrap()).unwrap().get(0, 0, 0, 0)
            })
            .collect();
        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let (coarse, fine) = (spread(8.0), spread(64.0));
    assert!(fine < coarse, "{coarse} -> {fine}");
}

#[test]
fn ladder_errors_shrink_and_correction_helps() {
    let eps = vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let r = rate_experiment(&LadderConfig::new(periodic_1d(), eps)).unwrap();
    let l2: Vec<f64> = r.rows.iter().map(|row| row.errors.l2_plain).collect();
    assert!(l2.windows(2).all(|w| w[1] < w[0]), "{l2:?}");
    for row in &r.rows {
        assert!(row.errors.h1_corrected <= row.errors.h1_plain, "{row:?}");
    }
}

#[test]
fn ladder_is_stable_under_refinement() {
    let eps = vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let coarse = rate_experiment(&LadderConfig::new(periodic_1d(), eps.clone())).unwrap();
    let mut cfg = LadderConfig::new(periodic_1d(), eps);
    cfg.cells_per_eps = 64;
    cfg.corrector_h = 1.0 / 128.0;
    let fine = rate_experiment(&cfg).unwrap();
    for (a, b) in coarse.rows.iter().zip(&fine.rows) {
        let rel = (a.errors.l2_plain - b.errors.l2_plain).abs() / b.errors.l2_plain;
        assert!(rel < 0.1, "eps {}: {} vs {}", a.eps, a.errors.l2_plain, b.errors.l2_plain);
    }
}

#[test]
#[ignore = "screening decay at buffer 6 leaves about 1e-4; run with --ignored"]
fn doubling_the_buffer_leaves_window_values_unchanged() {
    let f = golden_1d();
    let window = |buffer: f64| {
        let cfg = CorrectorConfig::new(16.0, 1.0 / 16.0)
            .with_protocol(ProtocolChoice::Truncated)
            .with_buffer(buffer);
        solve_corrector(&f, &cfg).unwrap().window_chi(0, 0).unwrap()
    };
    let (a, b) = (window(6.0), window(12.0));
    let scale = b.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.values().iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 1e-6 * scale, "relative change {}", diff / scale);
}
