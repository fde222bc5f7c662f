//! The heat solution `u = ω ∗ Φ_s`, the extension `F = (U, V)` of the
//! primitive `f`, its derivative matrix and its complex dilatation.
//!
//! All four partial derivatives come from convolutions of `ω` at length
//! `t`, evaluated in a single pass:
//!
//! | quantity       | kernel   |
//! |----------------|----------|
//! | `U_x`          | `φ`      |
//! | `V_x = 2U_t`   | `ψ`      |
//! | `V_t / 2`      | `φ̃`      |
//! | `-2(U_x - V_t)`| `Φ″`     |
//!
//! `U_x - V_t` gets its own kernel because `U_x` and `V_t` agree to many
//! digits at small `t` for smooth weights.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::quadrature::{convolve_multi, MultiConvolution, QuadratureConfig};
use crate::weights::Weight;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatSolution {
    pub x: f64,
    pub s: f64,
    pub u: f64,
    pub u_x: f64,
    pub u_xx: f64,
    /// Certified error of `(u, u_x, u_xx)`.
    pub errors: [f64; 3],
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

fn certified(m: MultiConvolution, cfg: &QuadratureConfig) -> Result<MultiConvolution> {
    if m.certified(cfg) {
        Ok(m)
    } else {
        Err(Error::ToleranceNotMet { best: m.component(0) })
    }
}

fn total_errors(m: &MultiConvolution) -> Vec<f64> {
    m.errors.iter().zip(&m.truncation).map(|(e, t)| e + t).collect()
}

/// `u`, `u_x`, `u_xx` at `(x, s)`.
pub fn heat_solution(weight: &Weight, x: f64, s: f64, cfg: &QuadratureConfig) -> Result<HeatSolution> {
    check_positive("s", s)?;
    let l = s.sqrt();
    let (k0, k1, k2) = (Kernel::heat(), Kernel::heat_dx(), Kernel::heat_dxx());
    let m = certified(convolve_multi(weight, &[&k0, &k1, &k2], l, x, cfg, weight.doubling_hint(), 0)?, cfg)?;
    let e = total_errors(&m);
    Ok(HeatSolution {
        x,
        s,
        u: m.values[0],
        u_x: m.values[1] / l,
        u_xx: m.values[2] / s,
        errors: [e[0], e[1] / l, e[2] / s],
    })
}

/// `F(x, t) = (f ∗ φ_t, f ∗ ψ_t)(x)` with `f` the primitive of `ω`.
pub fn extension_point(weight: &Weight, x: f64, t: f64, cfg: &QuadratureConfig) -> Result<(f64, f64)> {
    let (u, v, _) = extension_point_with_error(weight, x, t, cfg)?;
    Ok((u, v))
}

pub fn extension_point_with_error(weight: &Weight, x: f64, t: f64, cfg: &QuadratureConfig) -> Result<(f64, f64, f64)> {
    check_positive("t", t)?;
    let (fx, fx_err) = weight.primitive_with_error(x);
    let centered = weight.primitive_centered(x);
    let (phi, psi) = (Kernel::phi(), Kernel::psi());
    // the primitive grows one power faster than the weight
    let hint = weight.doubling_hint().map(|r| 2.0 * r);
    let m = convolve_multi(&centered, &[&phi, &psi], t, x, cfg, hint, 0)?;
    let m = certified(m, cfg)?;
    let e = total_errors(&m);
    Ok((fx + m.values[0], m.values[1], fx_err + e[0].max(e[1])))
}

/// The four partial derivatives of `F` at `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeMatrix {
    pub u_x: f64,
    pub u_t: f64,
    pub v_x: f64,
    pub v_t: f64,
    /// `U_x - V_t`, computed directly.
    pub diff: f64,
    /// Certified errors of `(U_x, U_t, V_x, V_t, U_x - V_t)`.
    pub errors: [f64; 5],
}

pub fn derivative_matrix(weight: &Weight, x: f64, t: f64, cfg: &QuadratureConfig) -> Result<DerivativeMatrix> {
    check_positive("t", t)?;
    let ks = [Kernel::phi(), Kernel::psi(), Kernel::phi_tilde(), Kernel::heat_dxx()];
    let refs: Vec<&Kernel> = ks.iter().collect();
    let m = certified(convolve_multi(weight, &refs, t, x, cfg, weight.doubling_hint(), 0)?, cfg)?;
    let e = total_errors(&m);
    let c = &m.values;
    Ok(DerivativeMatrix {
        u_x: c[0],
        u_t: 0.5 * c[1],
        v_x: c[1],
        v_t: 2.0 * c[2],
        diff: -0.5 * c[3],
        errors: [e[0], 0.5 * e[1], e[1], 2.0 * e[2], 0.5 * e[3]],
    })
}

/// Complex dilatation and its companions at one point, without `U`, `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dilatation {
    pub d: DerivativeMatrix,
    pub mu: Complex64,
    pub k: f64,
    pub jacobian: f64,
    /// Propagated bound on the error of `|μ|`.
    pub budget: f64,
    /// `|μ|` is within `budget` of 1.
    pub flagged: bool,
}

impl Dilatation {
    pub fn from_derivatives(d: DerivativeMatrix, x: f64, t: f64) -> Result<Self> {
        let dz = Complex64::new(d.u_x + d.v_t, d.v_x - d.u_t) * 0.5;
        let dzbar = Complex64::new(d.diff, d.v_x + d.u_t) * 0.5;
        let [eux, eut, evx, evt, ediff] = d.errors;
        let jacobian = d.u_x * d.v_t - d.u_t * d.v_x;
        let j_err = eux * d.v_t.abs() + evt * d.u_x.abs() + eut * d.v_x.abs() + evx * d.u_t.abs();
        let dz_abs = dz.norm();
        let dz_err = 0.5 * (eux + evt + evx + eut);
        let dzbar_err = 0.5 * (ediff + evx + eut);
        let (mu, budget) = if dz_abs > 0.0 {
            let mu = dzbar / dz;
            (mu, (dzbar_err + mu.norm() * dz_err) / (dz_abs - dz_err).max(0.5 * dz_abs))
        } else {
            (Complex64::new(f64::INFINITY, 0.0), f64::INFINITY)
        };
        let abs_mu = mu.norm();
        let clean = jacobian > 0.0 && abs_mu < 1.0;
        let explained = jacobian + j_err > 0.0 && abs_mu - budget < 1.0;
        if !clean && !explained {
            return Err(Error::NonQuasiconformalSample {
                x,
                t,
                jacobian,
                abs_mu,
                budget,
            });
        }
        let m2 = mu.norm_sqr();
        let k = if m2 < 1.0 { (1.0 + m2) / (1.0 - m2) } else { f64::INFINITY };
        Ok(Self {
            d,
            mu,
            k,
            jacobian,
            budget,
            flagged: !clean || abs_mu >= 1.0 - budget,
        })
    }

    /// `|μ|²` through the Jacobian form `(ΣD² - 2J)/(ΣD² + 2J)`.
    pub fn mu_sq_from_jacobian(&self) -> f64 {
        let d = &self.d;
        let sum = d.u_x * d.u_x + d.u_t * d.u_t + d.v_x * d.v_x + d.v_t * d.v_t;
        (sum - 2.0 * self.jacobian) / (sum + 2.0 * self.jacobian)
    }

    /// Right side of `|μ|² U_x² ≤ 2U_t² + 2V_x² + (U_x - V_t)²`.
    pub fn energy_bound(&self) -> f64 {
        let d = &self.d;
        2.0 * d.u_t * d.u_t + 2.0 * d.v_x * d.v_x + d.diff * d.diff
    }
}

pub fn dilatation(weight: &Weight, x: f64, t: f64, cfg: &QuadratureConfig) -> Result<Dilatation> {
    Dilatation::from_derivatives(derivative_matrix(weight, x, t, cfg)?, x, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionSample {
    pub x: f64,
    pub t: f64,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "U_x")]
    pub u_x: f64,
    #[serde(rename = "U_t")]
    pub u_t: f64,
    #[serde(rename = "V_x")]
    pub v_x: f64,
    #[serde(rename = "V_t")]
    pub v_t: f64,
    pub mu: Complex64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub error_budget: f64,
    pub flagged: bool,
}

/// `F`, its derivatives and `μ` at `z = x + it`.
pub fn beltrami(weight: &Weight, x: f64, t: f64, cfg: &QuadratureConfig) -> Result<ExtensionSample> {
    let dil = dilatation(weight, x, t, cfg)?;
    let (u, v, f_err) = extension_point_with_error(weight, x, t, cfg)?;
    let d = dil.d;
    Ok(ExtensionSample {
        x,
        t,
        u,
        v,
        u_x: d.u_x,
        u_t: d.u_t,
        v_x: d.v_x,
        v_t: d.v_t,
        mu: dil.mu,
        k: dil.k,
        j: dil.jacobian,
        error_budget: dil.budget.max(f_err),
        flagged: dil.flagged,
    })
}

/// [`beltrami`] over a tensor grid, `t` varying fastest.
pub fn beltrami_grid(weight: &Weight, xs: &[f64], ts: &[f64], cfg: &QuadratureConfig) -> Vec<Result<ExtensionSample>> {
    let pts: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ts.iter().map(move |&t| (x, t))).collect();
    pts.par_iter().map(|&(x, t)| beltrami(weight, x, t, cfg)).collect()
}

/// `(ω ∗ φ_t, ω ∗ (|·|φ)_t, ω ∗ (·²φ)_t)(x)`: the three moment averages
/// that are mutually comparable for doubling weights.
pub fn moment_averages(weight: &Weight, x: f64, t: f64, cfg: &QuadratureConfig) -> Result<[f64; 3]> {
    check_positive("t", t)?;
    let ks = [Kernel::phi(), Kernel::phi_abs(), Kernel::phi_tilde()];
    let refs: Vec<&Kernel> = ks.iter().collect();
    let m = certified(convolve_multi(weight, &refs, t, x, cfg, weight.doubling_hint(), 0)?, cfg)?;
    Ok([m.values[0], m.values[1], m.values[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightSpec;
    use statrs::function::gamma::gamma;
    use std::f64::consts::PI;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn unit_weight_is_identity() {
        let w = Weight::from_name("unit").unwrap();
        for &(x, t) in &[(0.0, 1.0), (-3.5, 0.01), (7.0, 20.0)] {
            let h = heat_solution(&w, x, t, &cfg()).unwrap();
            assert!((h.u - 1.0).abs() < 1e-13 && h.u_x.abs() < 1e-12 && h.u_xx.abs() < 1e-11);
            let (u, v) = extension_point(&w, x, t, &cfg()).unwrap();
            assert!((u - x).abs() < 1e-10 && (v - t).abs() < 1e-10, "{u} {v}");
            let s = beltrami(&w, x, t, &cfg()).unwrap();
            assert!(s.mu.norm() < 1e-12);
            assert!((s.k - 1.0).abs() < 1e-12 && (s.j - 1.0).abs() < 1e-12);
            assert!(!s.flagged);
        }
    }

    #[test]
    fn constant_two_doubles_the_map() {
        let w = Weight::new(WeightSpec::constant(2.0)).unwrap();
        let (u, v) = extension_point(&w, 1.5, 0.4, &cfg()).unwrap();
        assert!((u - 3.0).abs() < 1e-10 && (v - 0.8).abs() < 1e-10);
    }

    #[test]
    fn sqrt_weight_heat_values() {
        let w = Weight::from_name("sqrt").unwrap();
        let c = gamma(0.75) / PI.sqrt();
        for s in [1.0, 0.01, 16.0] {
            let h = heat_solution(&w, 0.0, s, &cfg()).unwrap();
            assert!((h.u - s.powf(0.25) * c).abs() < 1e-9 * h.u);
            assert!(h.u_x.abs() < 1e-12);
        }
        let d = derivative_matrix(&w, 0.0, 0.3, &cfg()).unwrap();
        assert!(d.v_x.abs() < 1e-12);
    }

    #[test]
    fn expsine_extension_matches_oracle() {
        let w = Weight::from_name("expsine").unwrap();
        let (u, v) = extension_point(&w, 0.0, 1.0, &cfg()).unwrap();
        let ocfg = QuadratureConfig::oracle(400_000);
        let fx = w.primitive(0.0);
        let cp = w.primitive_centered(0.0);
        let ou = fx + crate::quadrature::oracle_convolve(&cp, &Kernel::phi(), 1.0, 0.0, ocfg.oracle_nodes, ocfg.oracle_reach);
        let ov = crate::quadrature::oracle_convolve(&cp, &Kernel::psi(), 1.0, 0.0, ocfg.oracle_nodes, ocfg.oracle_reach);
        assert!((u - ou).abs() < 1e-6 && (v - ov).abs() < 1e-6, "{u} {ou} {v} {ov}");
    }

    #[test]
    fn closed_forms_match_time_derivative_relations() {
        // U_x = u(x, t²), V_x = t u_x(x, t²), U_x - V_t = -(t²/2) u_xx(x, t²)
        for name in ["expsine", "sqrt", "step"] {
            let w = Weight::from_name(name).unwrap();
            for &(x, t) in &[(0.3, 0.5), (-1.2, 2.0)] {
                let d = derivative_matrix(&w, x, t, &cfg()).unwrap();
                let h = heat_solution(&w, x, t * t, &cfg()).unwrap();
                let tol = 1e-7 * h.u;
                assert!((d.u_x - h.u).abs() < tol);
                assert!((d.v_x - t * h.u_x).abs() < tol);
                assert!((d.diff + 0.5 * t * t * h.u_xx).abs() < tol);
                assert_eq!(d.u_t, 0.5 * d.v_x);
            }
        }
    }

    #[test]
    fn dilatation_identities() {
        for (_, spec) in crate::weights::catalog() {
            let w = Weight::new(spec).unwrap();
            for &(x, t) in &[(0.1, 0.05), (2.0, 1.0), (-4.0, 6.0)] {
                let dil = dilatation(&w, x, t, &cfg()).unwrap();
                let m2 = dil.mu.norm_sqr();
                assert!((m2 - dil.mu_sq_from_jacobian()).abs() < 1e-7);
                assert!(m2 * dil.d.u_x.powi(2) <= dil.energy_bound() * (1.0 + 1e-9) + 1e-15);
                assert!(dil.jacobian > 0.0 && (dil.k - (1.0 + m2) / (1.0 - m2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_weight_mu_constant_along_axis() {
        let w = Weight::from_name("sqrt").unwrap();
        let m0 = dilatation(&w, 0.0, 1.0, &cfg()).unwrap().mu;
        for t in [1e-3, 0.1, 10.0] {
            let m = dilatation(&w, 0.0, t, &cfg()).unwrap().mu;
            assert!((m - m0).norm() < 1e-7, "{m} vs {m0}");
        }
    }

    #[test]
    fn rejects_bad_scale() {
        let w = Weight::from_name("unit").unwrap();
        assert!(matches!(beltrami(&w, 0.0, 0.0, &cfg()), Err(Error::Domain(_))));
        assert!(matches!(heat_solution(&w, 0.0, -1.0, &cfg()), Err(Error::Domain(_))));
    }

    #[test]
    fn degenerate_derivatives_are_rejected() {
        let d = DerivativeMatrix {
            u_x: 1.0,
            u_t: 0.0,
            v_x: 0.0,
            v_t: -1.0,
            diff: 2.0,
            errors: [1e-12; 5],
        };
        assert!(matches!(
            Dilatation::from_derivatives(d, 0.0, 1.0),
            Err(Error::NonQuasiconformalSample { .. })
        ));
        let near = DerivativeMatrix {
            u_x: 1.0,
            u_t: 0.0,
            v_x: 0.0,
            v_t: 1e-9,
            diff: 1.0 - 1e-9,
            errors: [1e-8; 5],
        };
        assert!(Dilatation::from_derivatives(near, 0.0, 1.0).unwrap().flagged);
    }
}
