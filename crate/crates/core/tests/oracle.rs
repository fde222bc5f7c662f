mod common;

use common::{brute_force_box, ExpSineModel};
use heatqc::carleson::{box_energy, InnerGrid};
use heatqc::extension::{derivative_matrix, extension_point, heat_solution};
use heatqc::{QuadratureConfig, Weight};

fn expsine() -> Weight {
    Weight::from_name("expsine").unwrap()
}

#[test]
fn fourier_model_reproduces_the_weight() {
    let m = ExpSineModel::new();
    for i in 0..50 {
        let x = -7.0 + 0.29 * i as f64;
        assert!((m.weight(x) - x.sin().exp()).abs() < 1e-14, "{x}");
    }
}

#[test]
fn derivatives_match_fourier_model() {
    let m = ExpSineModel::new();
    let w = expsine();
    let cfg = QuadratureConfig::default();
    for &t in &[1e-3, 0.05, 0.7, 3.0, 20.0] {
        for i in 0..9 {
            let x = -4.0 + 1.1 * i as f64;
            let d = derivative_matrix(&w, x, t, &cfg).unwrap();
            let got = [d.u_x, d.u_t, d.v_x, d.v_t, d.diff];
            let want = m.derivatives(x, t);
            for k in 0..5 {
                let tol = 1e-8 * want[0].abs() + 2.0 * d.errors[k];
                assert!((got[k] - want[k]).abs() < tol, "x={x} t={t} entry {k}: {} vs {}", got[k], want[k]);
            }
        }
    }
}

#[test]
fn difference_term_keeps_relative_accuracy_at_small_t() {
    // U_x - V_t is O(t²) here and would be lost to cancellation if formed
    // by subtraction
    let m = ExpSineModel::new();
    let w = expsine();
    let cfg = QuadratureConfig::default();
    for &t in &[1e-2, 1e-3] {
        let d = derivative_matrix(&w, 0.4, t, &cfg).unwrap();
        let want = m.derivatives(0.4, t)[4];
        assert!(((d.diff - want) / want).abs() < 1e-6, "t={t}: {} vs {want}", d.diff);
    }
}

#[test]
fn extension_matches_fourier_model() {
    let m = ExpSineModel::new();
    let w = expsine();
    let cfg = QuadratureConfig::default();
    for &t in &[0.01, 0.5, 4.0] {
        for &x in &[-3.0, -0.2, 0.0, 1.7, 9.0] {
            let (u, v) = extension_point(&w, x, t, &cfg).unwrap();
            let (u0, v0) = m.extension(x, t);
            assert!((u - u0).abs() < 1e-8 * (1.0 + u0.abs()), "U({x},{t}) = {u} vs {u0}");
            assert!((v - v0).abs() < 1e-8 * (1.0 + v0.abs()), "V({x},{t}) = {v} vs {v0}");
        }
    }
}

#[test]
fn heat_solution_matches_fourier_model() {
    let m = ExpSineModel::new();
    let w = expsine();
    let cfg = QuadratureConfig::default();
    for &s in &[1e-4, 0.3, 5.0] {
        for &x in &[-1.0, 0.25, 2.0] {
            let h = heat_solution(&w, x, s, &cfg).unwrap();
            let want = m.heat(x, s);
            for (k, got) in [h.u, h.u_x, h.u_xx].into_iter().enumerate() {
                assert!((got - want[k]).abs() < 1e-8 * want[0] + 2.0 * h.errors[k], "s={s} x={x} k={k}");
            }
        }
    }
}

#[test]
fn box_energy_matches_brute_force_box() {
    let m = ExpSineModel::new();
    let w = expsine();
    let cfg = QuadratureConfig::default();
    for &(x0, t) in &[(0.0, 1.0), (2.0, 0.3)] {
        let brute = brute_force_box(&m, x0, t, 512);
        let b = box_energy(&w, x0, t, &cfg, InnerGrid::default()).unwrap();
        assert!(((b.a - brute) / brute).abs() < 1e-2, "({x0}, {t}): {} vs {brute}", b.a);
    }
}

#[test]
fn brute_force_confirms_ten_percent_decay() {
    // the threshold used by the vanishing criterion, checked independently
    let m = ExpSineModel::new();
    let x0: Vec<f64> = (0..17).map(|i| i as f64 * std::f64::consts::TAU / 16.0).collect();
    let sup = |t: f64| x0.iter().map(|&x| brute_force_box(&m, x, t, 256)).fold(0.0, f64::max);
    let (big, small) = (sup(1.0), sup(1e-3));
    assert!(small < 0.1 * big, "{small} vs {big}");
}
