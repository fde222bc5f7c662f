use heatqc::carleson::{box_energy, carleson_scan, InnerGrid, ScanOptions, ScanRegion};
use heatqc::weights::{Family, WeightSpec};
use heatqc::{QuadratureConfig, Weight};

fn cfg() -> QuadratureConfig {
    QuadratureConfig {
        rel_tol: 1e-7,
        ..QuadratureConfig::default()
    }
}

fn small() -> InnerGrid {
    InnerGrid { nx: 8, ns: 16 }
}

#[test]
fn energy_vanishes_exactly_for_constant_weights() {
    for c in [0.2, 1.0, 37.0] {
        let w = Weight::new(WeightSpec::new(Family::Constant { c })).unwrap();
        for &(x0, t) in &[(0.0, 1.0), (-3.0, 0.01), (5.0, 20.0)] {
            let b = box_energy(&w, x0, t, &cfg(), small()).unwrap();
            assert!(b.a < 1e-20 && b.thm3_energy < 1e-20 && b.thm5_energy < 1e-20, "{c}: {b:?}");
        }
    }
}

#[test]
fn energy_is_positive_for_nonconstant_weights() {
    for name in ["sqrt", "invsqrt", "expsine", "step"] {
        let w = Weight::from_name(name).unwrap();
        let b = box_energy(&w, 0.5, 1.0, &cfg(), small()).unwrap();
        assert!(b.a > 1e-6 && b.thm3_energy > 1e-6 && b.thm5_energy > 1e-8, "{name}: {b:?}");
    }
}

#[test]
fn dilatation_energy_is_controlled_by_derivative_energies() {
    // |μ|² ≤ (5/2)(V_x/U_x)² + ¼ (2(U_x - V_t)/U_x)² pointwise
    for name in ["sqrt", "expsine", "step"] {
        let w = Weight::from_name(name).unwrap();
        for &(x0, t) in &[(0.0, 1.0), (1.2, 0.2), (-2.0, 3.0)] {
            let b = box_energy(&w, x0, t, &cfg(), small()).unwrap();
            let bound = 1.25 * b.thm3_energy + 0.125 * b.thm5_energy;
            assert!(b.a <= bound * (1.0 + 1e-3) + b.quad_error, "{name} ({x0}, {t}): {} > {bound}", b.a);
        }
    }
}

#[test]
fn power_weight_energy_is_scale_invariant_at_origin() {
    for a in [0.5, -0.5, 1.0] {
        let w = Weight::new(WeightSpec::power(a)).unwrap();
        let vals: Vec<f64> = [1e-2, 1.0, 1e2]
            .iter()
            .map(|&t| box_energy(&w, 0.0, t, &cfg(), InnerGrid::default()).unwrap().a)
            .collect();
        let mean = vals.iter().sum::<f64>() / 3.0;
        for v in &vals {
            assert!((v - mean).abs() < 0.02 * mean, "a={a}: {vals:?}");
        }
    }
}

#[test]
fn off_centre_power_boxes_follow_dilation() {
    let w = Weight::new(WeightSpec::power(0.5)).unwrap();
    let b1 = box_energy(&w, 0.7, 0.5, &cfg(), InnerGrid::default()).unwrap();
    let b2 = box_energy(&w, 7.0, 5.0, &cfg(), InnerGrid::default()).unwrap();
    assert!(((b1.a - b2.a) / b1.a).abs() < 0.02, "{} vs {}", b1.a, b2.a);
}

#[test]
fn inner_grid_refinement_is_stable() {
    let w = Weight::from_name("expsine").unwrap();
    let coarse = box_energy(&w, 1.0, 0.8, &cfg(), small()).unwrap();
    let fine = box_energy(&w, 1.0, 0.8, &cfg(), small().doubled()).unwrap();
    assert!(((coarse.a - fine.a) / fine.a).abs() < 0.01, "{} vs {}", coarse.a, fine.a);
}

#[test]
fn scan_refines_on_nested_grids() {
    let w = Weight::from_name("expsine").unwrap();
    let region = ScanRegion { x: (-1.0, 1.0), t: (0.1, 1.0) };
    let opts = ScanOptions {
        inner: small(),
        max_refinements: 1,
        stop_change: 0.0,
    };
    let r = carleson_scan(&w, region, (4, 4), &cfg(), opts).unwrap();
    assert_eq!(r.refinement_history.len(), 2);
    assert_eq!(r.boxes.len(), 7 * 7);
    assert!(r.failures.is_empty());
    let coarse = r.refinement_history[0].sup_a;
    assert!(r.sup_estimate >= coarse);
    assert!(r.boxes.windows(2).all(|p| (p[0].t, p[0].x0) <= (p[1].t, p[1].x0)));
    // the profile is indexed by t, largest first
    assert!(r.vanishing_profile.windows(2).all(|p| p[0].0 > p[1].0));
}
