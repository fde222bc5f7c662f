//! Convolution kernels: the Gaussian family used by the heat extension, the
//! kernel `η` with `Φ′ = η ∗ Φ_{1/2}`, and the classical box pair.
//!
//! A kernel stores only its base profile `γ`. The two dilation conventions
//! are views over it: [`ScaleKind::TimeScale`] at `s` is
//! `s^{-1/2} γ(x / √s)` and [`ScaleKind::LengthScale`] at `t` is
//! `t^{-1} γ(x / t)`. Both reduce to a dilation by a length `L`
//! (`L = √s` or `L = t`), which is what the integrators consume.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::{Breakpoint, RealFn};
use crate::quadrature::{self, gauss_kronrod, QuadratureConfig};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleKind {
    TimeScale,
    LengthScale,
}

impl ScaleKind {
    /// The dilation length `L` for a scale parameter.
    pub fn length(self, scale: f64) -> f64 {
        match self {
            ScaleKind::TimeScale => scale.sqrt(),
            ScaleKind::LengthScale => scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `Φ(x) = e^{-x²}/√π`; also the length-scale `φ`.
    Gaussian,
    /// `ψ = φ′ = -2xφ`; identical profile to `Φ′`.
    GaussianDx,
    /// `Φ″ = (4x² - 2)φ`.
    GaussianDxx,
    /// `φ̃ = x²φ`.
    PhiTilde,
    /// `|x|φ`.
    PhiAbs,
    /// `η(x) = -(4√2/√π) x e^{-2x²}`.
    Eta,
    /// `½ 1_{[-1,1]}`.
    BoxEven,
    /// `(r/2) 1_{[-1,0]} - (r/2) 1_{[0,1]}`.
    BoxSign { r: f64 },
}

impl Profile {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Gaussian => FRAC_1_SQRT_PI * (-x * x).exp(),
            Profile::GaussianDx => -2.0 * x * FRAC_1_SQRT_PI * (-x * x).exp(),
            Profile::GaussianDxx => (4.0 * x * x - 2.0) * FRAC_1_SQRT_PI * (-x * x).exp(),
            Profile::PhiTilde => x * x * FRAC_1_SQRT_PI * (-x * x).exp(),
            Profile::PhiAbs => x.abs() * FRAC_1_SQRT_PI * (-x * x).exp(),
            Profile::Eta => -4.0 * SQRT_2 * FRAC_1_SQRT_PI * x * (-2.0 * x * x).exp(),
            Profile::BoxEven => {
                if x.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Profile::BoxSign { r } => {
                if (-1.0..0.0).contains(&x) {
                    0.5 * r
                } else if (0.0..=1.0).contains(&x) {
                    -0.5 * r
                } else {
                    0.0
                }
            }
        }
    }
}

/// `(∫γ, ∫xγ, ∫x²γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

/// `|γ(x)| ≤ a (1 + x²) e^{-b x²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    pub a: f64,
    pub b: f64,
}

impl DecayEnvelope {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (1.0 + x * x) * (-self.b * x * x).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub name: &'static str,
    pub profile: Profile,
    pub moments: Moments,
    pub decay_envelope: DecayEnvelope,
    pub parity: Parity,
    pub abs_integral: f64,
    /// Jump locations of the base profile.
    pub discontinuities: Vec<f64>,
    /// Half-width of the support, for compactly supported profiles.
    pub support: Option<f64>,
}

/// Registry names accepted by [`Kernel::by_name`].
pub const KERNEL_NAMES: [&str; 10] = [
    "heat",
    "phi",
    "psi",
    "phi_tilde",
    "phi_abs",
    "eta",
    "heat_dx",
    "heat_dxx",
    "ba_box",
    "ba_sign",
];

/// Default parameter of the classical odd box kernel.
pub const DEFAULT_BA_R: f64 = 2.0;

impl Kernel {
    fn gaussian_family(name: &'static str, profile: Profile) -> Self {
        let sp = PI.sqrt();
        let (moments, env_a, parity, abs_integral) = match profile {
            Profile::Gaussian => (
                Moments { m0: 1.0, m1: 0.0, m2: 0.5 },
                FRAC_1_SQRT_PI,
                Parity::Even,
                1.0,
            ),
            Profile::GaussianDx => (
                Moments { m0: 0.0, m1: -1.0, m2: 0.0 },
                FRAC_1_SQRT_PI,
                Parity::Odd,
                2.0 / sp,
            ),
            Profile::GaussianDxx => (
                Moments { m0: 0.0, m1: 0.0, m2: 2.0 },
                4.0 * FRAC_1_SQRT_PI,
                Parity::Even,
                4.0 * SQRT_2 / (std::f64::consts::E * PI).sqrt(),
            ),
            Profile::PhiTilde => (
                Moments { m0: 0.5, m1: 0.0, m2: 0.75 },
                FRAC_1_SQRT_PI,
                Parity::Even,
                0.5,
            ),
            Profile::PhiAbs => (
                Moments { m0: 1.0 / sp, m1: 0.0, m2: 1.0 / sp },
                0.5 * FRAC_1_SQRT_PI,
                Parity::Even,
                1.0 / sp,
            ),
            _ => unreachable!("not a Gaussian-family profile"),
        };
        Kernel {
            name,
            profile,
            moments,
            decay_envelope: DecayEnvelope { a: env_a, b: 1.0 },
            parity,
            abs_integral,
            discontinuities: Vec::new(),
            support: None,
        }
    }

    pub fn heat() -> Self {
        Self::gaussian_family("heat", Profile::Gaussian)
    }

    pub fn phi() -> Self {
        Self::gaussian_family("phi", Profile::Gaussian)
    }

    pub fn psi() -> Self {
        Self::gaussian_family("psi", Profile::GaussianDx)
    }

    pub fn phi_tilde() -> Self {
        Self::gaussian_family("phi_tilde", Profile::PhiTilde)
    }

    pub fn phi_abs() -> Self {
        Self::gaussian_family("phi_abs", Profile::PhiAbs)
    }

    pub fn heat_dx() -> Self {
        Self::gaussian_family("heat_dx", Profile::GaussianDx)
    }

    pub fn heat_dxx() -> Self {
        Self::gaussian_family("heat_dxx", Profile::GaussianDxx)
    }

    pub fn eta() -> Self {
        let c = 4.0 * SQRT_2 * FRAC_1_SQRT_PI;
        Kernel {
            name: "eta",
            profile: Profile::Eta,
            moments: Moments { m0: 0.0, m1: -1.0, m2: 0.0 },
            decay_envelope: DecayEnvelope { a: 0.5 * c, b: 2.0 },
            parity: Parity::Odd,
            abs_integral: 2.0 * SQRT_2 * FRAC_1_SQRT_PI,
            discontinuities: Vec::new(),
            support: None,
        }
    }

    pub fn ba_box() -> Self {
        Kernel {
            name: "ba_box",
            profile: Profile::BoxEven,
            moments: Moments { m0: 1.0, m1: 0.0, m2: 1.0 / 3.0 },
            decay_envelope: DecayEnvelope { a: 0.5, b: 0.0 },
            parity: Parity::Even,
            abs_integral: 1.0,
            discontinuities: vec![-1.0, 1.0],
            support: Some(1.0),
        }
    }

    pub fn ba_sign(r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("ba_sign requires r > 0, got {r}")));
        }
        Ok(Kernel {
            name: "ba_sign",
            profile: Profile::BoxSign { r },
            moments: Moments {
                m0: 0.0,
                m1: -0.5 * r,
                m2: 0.0,
            },
            decay_envelope: DecayEnvelope { a: 0.5 * r, b: 0.0 },
            parity: Parity::Odd,
            abs_integral: r,
            discontinuities: vec![-1.0, 0.0, 1.0],
            support: Some(1.0),
        })
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "heat" => Self::heat(),
            "phi" => Self::phi(),
            "psi" => Self::psi(),
            "phi_tilde" => Self::phi_tilde(),
            "phi_abs" => Self::phi_abs(),
            "eta" => Self::eta(),
            "heat_dx" => Self::heat_dx(),
            "heat_dxx" => Self::heat_dxx(),
            "ba_box" => Self::ba_box(),
            "ba_sign" => Self::ba_sign(DEFAULT_BA_R)?,
            other => return Err(Error::UnknownKernel(other.to_string())),
        })
    }

    #[inline]
    pub fn eval_profile(&self, x: f64) -> f64 {
        self.profile.eval(x)
    }

    /// Upper bound of `|γ|` on `|x| ≥ r`, valid for `r ≥ 1`.
    pub fn tail_sup(&self, r: f64) -> f64 {
        if let Some(s) = self.support {
            if r >= s {
                return 0.0;
            }
        }
        debug_assert!(r >= 1.0);
        self.decay_envelope.eval(r)
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("scale must be positive, got {scale}")))
    }
}

/// Dilated kernel value `γ_scale(x)` under the chosen convention.
pub fn kernel_eval(kernel: &Kernel, scale_kind: ScaleKind, scale: f64, x: f64) -> Result<f64> {
    check_scale(scale)?;
    let l = scale_kind.length(scale);
    Ok(kernel.eval_profile(x / l) / l)
}

pub fn kernel_moments(kernel: &Kernel) -> (f64, f64, f64) {
    (kernel.moments.m0, kernel.moments.m1, kernel.moments.m2)
}

fn profile_segments(kernel: &Kernel) -> Vec<gauss_kronrod::Segment> {
    let reach = kernel.support.unwrap_or(40.0);
    let breaks: Vec<(f64, u32)> = kernel.discontinuities.iter().map(|d| (*d, 1)).collect();
    let mut segs = Vec::new();
    // Gaussian tails are split at ±1, ±4 so the panels start well-resolved.
    let mut cuts = vec![-reach, reach];
    if kernel.support.is_none() {
        cuts.extend_from_slice(&[-4.0, -1.0, 1.0, 4.0]);
    }
    cuts.sort_by(f64::total_cmp);
    for w in cuts.windows(2) {
        segs.extend(gauss_kronrod::split_segments(w[0], w[1], &breaks, 0));
    }
    segs
}

/// Recomputes `(m0, m1, m2)` and `∫|γ|` by quadrature of the dilated
/// kernel at `scale`, returning the moments of the base profile.
pub fn quadrature_moments(kernel: &Kernel, scale_kind: ScaleKind, scale: f64) -> Result<(Moments, f64)> {
    check_scale(scale)?;
    let l = scale_kind.length(scale);
    let segs: Vec<_> = profile_segments(kernel)
        .into_iter()
        .map(|mut s| {
            s.a *= l;
            s.b *= l;
            s
        })
        .collect();
    let tol = gauss_kronrod::ComponentTol {
        rel: 1e-13,
        abs: 1e-15,
    };
    let r = gauss_kronrod::integrate(
        |x, out: &mut [f64]| {
            let g = kernel.eval_profile(x / l) / l;
            let u = x / l;
            out[0] = g;
            out[1] = u * g;
            out[2] = u * u * g;
            out[3] = g.abs();
        },
        &segs,
        4,
        &[tol; 4],
        2000,
    );
    if !r.converged {
        return Err(Error::Domain(format!(
            "moment quadrature for '{}' did not converge",
            kernel.name
        )));
    }
    Ok((
        Moments {
            m0: r.values[0],
            m1: r.values[1],
            m2: r.values[2],
        },
        r.values[3],
    ))
}

/// Recomputes the moments by quadrature and checks them against the
/// stored analytic values.
pub fn verify_moments(kernel: &Kernel, tol: f64) -> Result<Moments> {
    let (m, _) = quadrature_moments(kernel, ScaleKind::LengthScale, 1.0)?;
    let stored = kernel.moments;
    let worst = (m.m0 - stored.m0)
        .abs()
        .max((m.m1 - stored.m1).abs())
        .max((m.m2 - stored.m2).abs());
    if worst > tol {
        return Err(Error::Domain(format!(
            "kernel '{}' moments differ from analytic values by {worst:e}",
            kernel.name
        )));
    }
    Ok(stored)
}

struct EtaFn;

impl RealFn for EtaFn {
    fn eval(&self, x: f64) -> f64 {
        Profile::Eta.eval(x)
    }
}

/// `(η ∗ Φ_{1/2})(x)` with `Φ_{1/2}` on the time scale.
pub fn eta_heat_convolution(x: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let r = quadrature::convolve_fn(&EtaFn, &Kernel::heat(), ScaleKind::TimeScale, 0.5, x, cfg)?;
    Ok(r.value)
}

/// `sup_x |Φ′(x) - (η ∗ Φ_{1/2})(x)|` over the grid.
pub fn eta_identity_residual(xs: &[f64], cfg: &QuadratureConfig) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    let mut sup = 0.0f64;
    for &x in xs {
        let lhs = Profile::GaussianDx.eval(x);
        let rhs = eta_heat_convolution(x, cfg)?;
        sup = sup.max((lhs - rhs).abs());
    }
    Ok(sup)
}

/// One line of the kernel self-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl SuiteCheck {
    fn new(name: String, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            pass: value.is_finite() && value < tolerance,
        }
    }
}

/// Mass of every dilated kernel at scales 10⁻², 1, 10² under both
/// conventions, the `η` identity on 101 points of `[-5, 5]` and `∫|η|`.
pub fn kernel_suite(cfg: &QuadratureConfig) -> Vec<SuiteCheck> {
    let mut out = Vec::new();
    for name in KERNEL_NAMES {
        let k = Kernel::by_name(name).expect("listed kernel");
        let mut worst = 0.0f64;
        for kind in [ScaleKind::LengthScale, ScaleKind::TimeScale] {
            for scale in [1e-2, 1.0, 1e2] {
                worst = match quadrature_moments(&k, kind, scale) {
                    Ok((m, _)) => worst.max((m.m0 - k.moments.m0).abs()),
                    Err(_) => f64::INFINITY,
                };
            }
        }
        out.push(SuiteCheck::new(format!("mass {name}"), worst, 1e-8));
    }
    let xs: Vec<f64> = (0..101).map(|i| -5.0 + 0.1 * i as f64).collect();
    let residual = eta_identity_residual(&xs, cfg).unwrap_or(f64::INFINITY);
    out.push(SuiteCheck::new("eta identity".into(), residual, 1e-6));
    let abs = quadrature_moments(&Kernel::eta(), ScaleKind::LengthScale, 1.0)
        .map(|(_, a)| (a - 2.0 * SQRT_2 / PI.sqrt()).abs())
        .unwrap_or(f64::INFINITY);
    out.push(SuiteCheck::new("eta abs integral".into(), abs, 1e-8));
    out
}

/// Breakpoints of a dilated kernel, for callers integrating it directly.
pub fn kernel_breakpoints(kernel: &Kernel, length: f64) -> Vec<Breakpoint> {
    kernel
        .discontinuities
        .iter()
        .map(|d| Breakpoint::jump(d * length))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<Kernel> {
        KERNEL_NAMES.iter().map(|n| Kernel::by_name(n).unwrap()).collect()
    }

    #[test]
    fn eval_examples() {
        let v = kernel_eval(&Kernel::phi(), ScaleKind::LengthScale, 1.0, 0.0).unwrap();
        assert!((v - 1.0 / PI.sqrt()).abs() < 1e-15);
        let v = kernel_eval(&Kernel::heat(), ScaleKind::TimeScale, 1.0, 1.0).unwrap();
        assert!((v - 1.0 / (std::f64::consts::E * PI.sqrt())).abs() < 1e-15);
        assert!((v - 0.207554).abs() < 1e-6);
        let v = kernel_eval(&Kernel::eta(), ScaleKind::LengthScale, 1.0, 0.5).unwrap();
        assert!((v - (-2.0 * SQRT_2 * (-0.5f64).exp() / PI.sqrt())).abs() < 1e-15);
        assert!((v + 0.967883).abs() < 1e-6);
    }

    #[test]
    fn non_positive_scale_is_domain_error() {
        for s in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                kernel_eval(&Kernel::heat(), ScaleKind::TimeScale, s, 0.0),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(Kernel::by_name("nope"), Err(Error::UnknownKernel(_))));
        assert!(Kernel::ba_sign(0.0).is_err());
    }

    #[test]
    fn analytic_moments_match_quadrature() {
        for k in all() {
            verify_moments(&k, 1e-12).unwrap();
            let (_, abs) = quadrature_moments(&k, ScaleKind::LengthScale, 1.0).unwrap();
            assert!((abs - k.abs_integral).abs() < 1e-12, "{}: {abs}", k.name);
        }
    }

    #[test]
    fn named_moment_examples() {
        // ∫x²e^{-x²}dx/√π = 1/2 ; ∫xφ′ = -∫φ = -1
        assert_eq!(kernel_moments(&Kernel::phi()), (1.0, 0.0, 0.5));
        assert_eq!(kernel_moments(&Kernel::psi()), (0.0, -1.0, 0.0));
        assert_eq!(kernel_moments(&Kernel::eta()).0, 0.0);
        assert_eq!(kernel_moments(&Kernel::ba_sign(2.0).unwrap()).1, -1.0);
    }

    #[test]
    fn decay_envelope_holds_on_dense_grid() {
        for k in all() {
            for i in 0..=40_000 {
                let x = -20.0 + i as f64 * 1e-3;
                assert!(
                    k.eval_profile(x).abs() <= k.decay_envelope.eval(x) * (1.0 + 1e-14),
                    "{} at {x}",
                    k.name
                );
            }
        }
    }

    #[test]
    fn parity_is_consistent() {
        for k in all() {
            for i in 1..200 {
                let x = i as f64 * 0.0371;
                let (p, m) = (k.eval_profile(x), k.eval_profile(-x));
                match k.parity {
                    Parity::Even => assert!((p - m).abs() < 1e-15, "{}", k.name),
                    Parity::Odd => assert!((p + m).abs() < 1e-15, "{}", k.name),
                    Parity::None => {}
                }
            }
        }
    }

    #[test]
    fn length_scale_bridges_time_scale() {
        for &t in &[1e-3, 0.1, 1.0, 7.5] {
            for i in -50..=50 {
                let x = i as f64 * 0.1 * t;
                let a = kernel_eval(&Kernel::phi(), ScaleKind::LengthScale, t, x).unwrap();
                let b = kernel_eval(&Kernel::heat(), ScaleKind::TimeScale, t * t, x).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "t={t} x={x}");
            }
        }
    }

    #[test]
    fn heat_derivative_max_inside_core() {
        // max over |x| < √t of |(Φ_t)′| is √2/(√(eπ) t) at x = √t/√2
        for &t in &[0.01, 1.0, 9.0] {
            let dphi = |x: f64| -2.0 * x / t * kernel_eval(&Kernel::heat(), ScaleKind::TimeScale, t, x).unwrap();
            let n = 200_000;
            let mut best = (0.0f64, 0.0f64);
            for i in 0..n {
                let x = -t.sqrt() + 2.0 * t.sqrt() * (i as f64 + 0.5) / n as f64;
                let v = dphi(x).abs();
                if v > best.0 {
                    best = (v, x.abs());
                }
            }
            let exact = SQRT_2 / ((std::f64::consts::E * PI).sqrt() * t);
            assert!((best.0 - exact).abs() <= 1e-6 * exact);
            assert!((best.1 - t.sqrt() / SQRT_2).abs() < 1e-4 * t.sqrt());
        }
    }

    #[test]
    fn eta_identity_at_points() {
        let cfg = QuadratureConfig::default();
        assert!(eta_identity_residual(&[0.0], &cfg).unwrap() < 1e-15);
        let v = eta_heat_convolution(1.0, &cfg).unwrap();
        let direct = -2.0 * (-1.0f64).exp() / PI.sqrt();
        assert!((v - direct).abs() < 1e-10);
        assert!((v + 0.415107).abs() < 1e-6);
    }

    #[test]
    fn eta_identity_matches_dense_trapezoid() {
        // brute force: trapezoid on [-30, 30] with 600k nodes
        let phi_half = |x: f64| (2.0 / PI).sqrt() * (-2.0 * x * x).exp();
        let n = 600_000;
        let h = 60.0 / n as f64;
        let cfg = QuadratureConfig::default();
        for &x in &[-2.0, -0.3, 0.7, 1.9] {
            let mut s = 0.0;
            for i in 0..=n {
                let y = -30.0 + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                s += w * Profile::Eta.eval(y) * phi_half(x - y);
            }
            let oracle = s * h;
            let v = eta_heat_convolution(x, &cfg).unwrap();
            assert!((v - oracle).abs() < 1e-9, "x={x}: {v} vs {oracle}");
        }
    }
}
