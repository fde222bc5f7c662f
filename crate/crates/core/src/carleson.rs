//! Box energies of the measure `|μ|² dx ds / s` and of the two auxiliary
//! densities `(u_x/u)²` and `σ(u_xx/u)²`.
//!
//! A box `I(x0, t) × (0, t]` is integrated as a tensor rule: composite
//! Simpson in `ln s` on `[s_min, t]`, `s_min = 10⁻⁴ t`, and adaptive
//! Gauss–Kronrod in `x` for each `s` level. The strip `(0, s_min)` is
//! closed with a power law `g(s) ∝ s^β` fitted to the slice integrals over
//! the lowest decade; that tail is added to the energy and to its error.

use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{dilatation, heat_solution};
use crate::quadrature::gauss_kronrod::{integrate, split_segments, ComponentTol};
use crate::quadrature::QuadratureConfig;
use crate::weights::Weight;

/// Ratio `s_min / t` of the lowest computed level.
pub const S_MIN_RATIO: f64 = 1e-4;
const SLICE_REL_TOL: f64 = 1e-5;
const SLICE_MAX_PANELS: usize = 2000;
/// Smallest decay exponent trusted for the tail fit.
const MIN_TAIL_EXPONENT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerGrid {
    /// Initial uniform panels across `|x - x0| < t`.
    pub nx: usize,
    /// Simpson intervals in `ln s` (rounded up to even).
    pub ns: usize,
}

impl Default for InnerGrid {
    fn default() -> Self {
        Self { nx: 16, ns: 32 }
    }
}

impl InnerGrid {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 || self.ns < 8 {
            return Err(Error::Config(format!(
                "inner grid sizes must be >= 8, got ({}, {})",
                self.nx, self.ns
            )));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        Self {
            nx: 2 * self.nx,
            ns: 2 * self.ns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonBox {
    pub x0: f64,
    pub t: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub thm3_energy: f64,
    pub thm5_energy: f64,
    pub quad_error: f64,
    pub samples: usize,
    /// Samples where `|μ|` came within its error budget of 1.
    pub flagged: usize,
}

// the three densities integrated over every box, per sample point
const DIM: usize = 3;

fn densities(weight: &Weight, x: f64, s: f64, cfg: &QuadratureConfig) -> Result<([f64; DIM], bool)> {
    let dil = match dilatation(weight, x, s, cfg) {
        Ok(d) => d,
        Err(Error::ToleranceNotMet { .. }) => dilatation(weight, x, s, &cfg.tightened(0.01))?,
        Err(e) => return Err(e),
    };
    let ux = dil.d.u_x;
    let r1 = dil.d.v_x / ux;
    let r3 = -2.0 * dil.d.diff / ux;
    Ok(([dil.mu.norm_sqr(), r1 * r1, r3 * r3], dil.flagged))
}

struct Slice {
    values: [f64; DIM],
    errors: [f64; DIM],
    samples: usize,
    flagged: usize,
}

fn slice(weight: &Weight, x0: f64, t: f64, s: f64, nx: usize, cfg: &QuadratureConfig) -> Result<Slice> {
    let (a, b) = (x0 - t, x0 + t);
    let mut breaks: Vec<(f64, u32)> = (1..nx).map(|i| (a + (b - a) * i as f64 / nx as f64, 1)).collect();
    breaks.extend(
        weight
            .weight_breakpoints()
            .iter()
            .filter(|p| p.at > a && p.at < b)
            .map(|p| (p.at, 1)),
    );
    let segs = split_segments(a, b, &breaks, 0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let mut samples = 0usize;
    let mut flagged = 0usize;
    let tol = ComponentTol {
        rel: SLICE_REL_TOL,
        abs: 1e-16 * t,
    };
    let r = integrate(
        |x, out: &mut [f64]| {
            samples += 1;
            match densities(weight, x, s, cfg) {
                Ok((v, f)) => {
                    out.copy_from_slice(&v);
                    flagged += f as usize;
                }
                Err(e) => {
                    out.fill(0.0);
                    failure.lock().unwrap().get_or_insert(e);
                }
            }
        },
        &segs,
        DIM,
        &[tol; DIM],
        SLICE_MAX_PANELS,
    );
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(Slice {
        values: [r.values[0], r.values[1], r.values[2]],
        errors: [r.errors[0], r.errors[1], r.errors[2]],
        samples,
        flagged,
    })
}

/// `∫₀^{s₀} g(s) ds/s` for `g(s) = g(s₀)(s/s₀)^β`, with `β` read off
/// `g` at `s₀` and `10 s₀`.
fn power_law_tail(g_low: f64, g_decade: f64) -> f64 {
    if g_low <= 0.0 {
        return 0.0;
    }
    let beta = if g_decade > 0.0 {
        (g_decade / g_low).log10()
    } else {
        MIN_TAIL_EXPONENT
    };
    g_low / beta.max(MIN_TAIL_EXPONENT)
}

fn simpson_weights(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        })
        .collect()
}

/// Energies of the box over `|x - x0| < t`, `0 < s < t`.
pub fn box_energy(weight: &Weight, x0: f64, t: f64, cfg: &QuadratureConfig, grid: InnerGrid) -> Result<CarlesonBox> {
    if !(t > 0.0 && t.is_finite()) || !x0.is_finite() {
        return Err(Error::Domain(format!("box needs finite x0 and t > 0, got ({x0}, {t})")));
    }
    grid.validate()?;
    let ns = (grid.ns + 1) & !1;
    let tau_lo = (S_MIN_RATIO * t).ln();
    let tau_hi = t.ln();
    let h = (tau_hi - tau_lo) / ns as f64;
    let levels: Vec<f64> = (0..=ns).map(|i| (tau_lo + h * i as f64).exp()).collect();
    let slices: Vec<Slice> = levels
        .par_iter()
        .map(|&s| slice(weight, x0, t, s, grid.nx, cfg))
        .collect::<Result<_>>()?;

    // node nearest to one decade above s_min, for the tail fit
    let decade = ((10f64.ln() / h).round() as usize).clamp(1, ns);
    let w_fine = simpson_weights(ns);
    let w_coarse = simpson_weights(ns / 2);
    let mut energies = [0.0; DIM];
    let mut errors = [0.0; DIM];
    for k in 0..DIM {
        let fine: f64 = slices.iter().zip(&w_fine).map(|(s, w)| w * s.values[k]).sum::<f64>() * h / 3.0;
        let coarse = if ns % 4 == 0 {
            slices.iter().step_by(2).zip(&w_coarse).map(|(s, w)| w * s.values[k]).sum::<f64>() * 2.0 * h / 3.0
        } else {
            fine
        };
        let inner: f64 = slices.iter().zip(&w_fine).map(|(s, w)| w * s.errors[k]).sum::<f64>() * h / 3.0;
        let tail = power_law_tail(slices[0].values[k], slices[decade].values[k]);
        energies[k] = fine + tail;
        errors[k] = (fine - coarse).abs() / 15.0 + inner + tail;
    }
    let scale = [1.0 / t, 2.0 / t, 2.0 / t];
    Ok(CarlesonBox {
        x0,
        t,
        a: energies[0] * scale[0],
        thm3_energy: energies[1] * scale[1],
        thm5_energy: energies[2] * scale[2],
        quad_error: errors[0] * scale[0],
        samples: slices.iter().map(|s| s.samples).sum(),
        flagged: slices.iter().map(|s| s.flagged).sum(),
    })
}

#[derive(Clone, Copy)]
enum HeatEnergy {
    Gradient,
    Hessian,
}

// (1/t)∫₀^{t²}∫ density dx dσ in σ-space: log-σ Simpson plus power-law tail
fn sigma_energy(weight: &Weight, x0: f64, t: f64, cfg: &QuadratureConfig, grid: InnerGrid, which: HeatEnergy) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    grid.validate()?;
    let ns = (grid.ns + 1) & !1;
    let lo = (S_MIN_RATIO * t).powi(2).ln();
    let hi = (t * t).ln();
    let h = (hi - lo) / ns as f64;
    let (a, b) = (x0 - t, x0 + t);
    let mut breaks: Vec<(f64, u32)> = (1..grid.nx).map(|i| (a + (b - a) * i as f64 / grid.nx as f64, 1)).collect();
    breaks.extend(weight.weight_breakpoints().iter().filter(|p| p.at > a && p.at < b).map(|p| (p.at, 1)));
    let segs = split_segments(a, b, &breaks, 0);
    let levels: Vec<f64> = (0..=ns).map(|i| (lo + h * i as f64).exp()).collect();
    // σ · ∫ density(x, σ) dx, the integrand against dτ = dσ/σ
    let g: Vec<f64> = levels
        .par_iter()
        .map(|&sigma| {
            let failure: Mutex<Option<Error>> = Mutex::new(None);
            let r = integrate(
                |x, out: &mut [f64]| match heat_solution(weight, x, sigma, cfg) {
                    Ok(hs) => {
                        out[0] = match which {
                            HeatEnergy::Gradient => (hs.u_x / hs.u).powi(2),
                            HeatEnergy::Hessian => sigma * (hs.u_xx / hs.u).powi(2),
                        }
                    }
                    Err(e) => {
                        out[0] = 0.0;
                        failure.lock().unwrap().get_or_insert(e);
                    }
                },
                &segs,
                1,
                &[ComponentTol {
                    rel: SLICE_REL_TOL,
                    abs: 1e-16 * t,
                }],
                SLICE_MAX_PANELS,
            );
            match failure.into_inner().unwrap() {
                Some(e) => Err(e),
                None => Ok(sigma * r.values[0]),
            }
        })
        .collect::<Result<_>>()?;
    let w = simpson_weights(ns);
    let body: f64 = g.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() * h / 3.0;
    // one decade in s is two decades in σ
    let decade = ((100f64.ln() / h).round() as usize).clamp(1, ns);
    let tail = power_law_tail(g[0], g[decade]) * 2.0;
    Ok((body + tail) / t)
}

/// `(1/t)∫₀^{t²}∫_{|x-x0|<t} (u_x/u)² dx dσ`.
pub fn thm3_energy(weight: &Weight, x0: f64, t: f64, cfg: &QuadratureConfig, grid: InnerGrid) -> Result<f64> {
    sigma_energy(weight, x0, t, cfg, grid, HeatEnergy::Gradient)
}

/// `(1/t)∫₀^{t²}∫_{|x-x0|<t} σ (u_xx/u)² dx dσ`.
pub fn thm5_energy(weight: &Weight, x0: f64, t: f64, cfg: &QuadratureConfig, grid: InnerGrid) -> Result<f64> {
    sigma_energy(weight, x0, t, cfg, grid, HeatEnergy::Hessian)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRegion {
    pub x: (f64, f64),
    pub t: (f64, f64),
}

impl ScanRegion {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x.0.is_finite()
            && self.x.1.is_finite()
            && self.x.0 <= self.x.1
            && self.t.0 > 0.0
            && self.t.1.is_finite()
            && self.t.0 <= self.t.1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid scan region {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub n_x0: usize,
    pub n_t: usize,
    pub sup_a: f64,
    pub sup_thm3: f64,
    pub sup_thm5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxFailure {
    pub x0: f64,
    pub t: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub boxes: Vec<CarlesonBox>,
    pub failures: Vec<BoxFailure>,
    pub sup_estimate: f64,
    pub refinement_history: Vec<RefinementStep>,
    /// `(t, sup over x0 of A)` on the finest box grid.
    pub vanishing_profile: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub inner: InnerGrid,
    /// Further box-grid doublings allowed after the first pass.
    pub max_refinements: usize,
    /// Relative change of all three sups below which refinement stops.
    pub stop_change: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            inner: InnerGrid::default(),
            max_refinements: 2,
            stop_change: 0.05,
        }
    }
}

fn axis(lo: f64, hi: f64, n: usize, log: bool) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            if log {
                (lo.ln() + u * (hi.ln() - lo.ln())).exp()
            } else {
                lo + u * (hi - lo)
            }
        })
        .collect()
}

fn relative_change(new: f64, old: f64) -> f64 {
    if new == old {
        0.0
    } else {
        (new - old).abs() / old.abs().max(new.abs())
    }
}

/// Box energies over a grid of `n_x0` centres and `n_t` log-spaced sizes,
/// refined by doubling (nested grids) until the sup settles.
pub fn carleson_scan(
    weight: &Weight,
    region: ScanRegion,
    box_grid: (usize, usize),
    cfg: &QuadratureConfig,
    opts: ScanOptions,
) -> Result<CarlesonReport> {
    region.validate()?;
    opts.inner.validate()?;
    let (mut nx, mut nt) = box_grid;
    if nx < 4 || nt < 4 {
        return Err(Error::Config(format!("box grid must be at least 4 x 4, got {nx} x {nt}")));
    }
    // results keyed by position on the finest lattice seen so far
    let mut done: Vec<((f64, f64), std::result::Result<CarlesonBox, String>)> = Vec::new();
    let mut history = Vec::new();
    for level in 0..=opts.max_refinements {
        let xs = axis(region.x.0, region.x.1, nx, false);
        let ts = axis(region.t.0, region.t.1, nt, true);
        let todo: Vec<(f64, f64)> = xs
            .iter()
            .flat_map(|&x| ts.iter().map(move |&t| (x, t)))
            .filter(|p| !done.iter().any(|(q, _)| same_point(*q, *p)))
            .collect();
        let fresh: Vec<_> = todo
            .par_iter()
            .map(|&(x0, t)| {
                let r = box_energy(weight, x0, t, cfg, opts.inner).map_err(|e| e.to_string());
                ((x0, t), r)
            })
            .collect();
        done.extend(fresh);
        let ok = || done.iter().filter_map(|(_, r)| r.as_ref().ok());
        let step = RefinementStep {
            n_x0: nx,
            n_t: nt,
            sup_a: ok().map(|b| b.a).fold(0.0, f64::max),
            sup_thm3: ok().map(|b| b.thm3_energy).fold(0.0, f64::max),
            sup_thm5: ok().map(|b| b.thm5_energy).fold(0.0, f64::max),
        };
        let settled = history
            .last()
            .map(|prev: &RefinementStep| {
                relative_change(step.sup_a, prev.sup_a) < opts.stop_change
                    && relative_change(step.sup_thm3, prev.sup_thm3) < opts.stop_change
                    && relative_change(step.sup_thm5, prev.sup_thm5) < opts.stop_change
            })
            .unwrap_or(false);
        history.push(step);
        if settled || level == opts.max_refinements {
            break;
        }
        nx = 2 * nx - 1;
        nt = 2 * nt - 1;
    }

    done.sort_by(|a, b| a.0 .1.total_cmp(&b.0 .1).then(a.0 .0.total_cmp(&b.0 .0)));
    let mut boxes = Vec::new();
    let mut failures = Vec::new();
    for ((x0, t), r) in done {
        match r {
            Ok(b) => boxes.push(b),
            Err(error) => failures.push(BoxFailure { x0, t, error }),
        }
    }
    let mut profile: Vec<(f64, f64)> = Vec::new();
    for b in &boxes {
        match profile.iter_mut().find(|(t, _)| *t == b.t) {
            Some(entry) => entry.1 = entry.1.max(b.a),
            None => profile.push((b.t, b.a)),
        }
    }
    profile.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(CarlesonReport {
        sup_estimate: history.last().map(|s| s.sup_a).unwrap_or(0.0),
        boxes,
        failures,
        refinement_history: history,
        vanishing_profile: profile,
    })
}

fn same_point(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() <= 1e-12 * (1.0 + a.0.abs()) && (a.1 - b.1).abs() <= 1e-12 * a.1
}

/// `(t, sup_{x0} A(x0, t))` for each `t`, in the given order.
pub fn vanishing_profile(
    weight: &Weight,
    x0_grid: &[f64],
    t_decades: &[f64],
    cfg: &QuadratureConfig,
    inner: InnerGrid,
) -> Result<Vec<(f64, f64)>> {
    if x0_grid.is_empty() || t_decades.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    if t_decades.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("t values must be strictly decreasing".into()));
    }
    let pts: Vec<(f64, f64)> = t_decades
        .iter()
        .flat_map(|&t| x0_grid.iter().map(move |&x| (x, t)))
        .collect();
    let boxes: Vec<CarlesonBox> = pts
        .par_iter()
        .map(|&(x0, t)| box_energy(weight, x0, t, cfg, inner))
        .collect::<Result<_>>()?;
    Ok(t_decades
        .iter()
        .map(|&t| {
            let sup = boxes.iter().filter(|b| b.t == t).map(|b| b.a).fold(0.0, f64::max);
            (t, sup)
        })
        .collect())
}
