//! Convolutions `(g ∗ γ_L)(x) = ∫ g(x - L z) γ(z) dz` on the whole line.
//!
//! The `z` axis is cut into a core `|z| < 1` and dyadic shells
//! `2^{n-1} ≤ |z| < 2^n`. Core and the first shells are integrated
//! adaptively; further shells are added until the bound on the discarded
//! tail, `Σ_{m>N} sup_{|z|≥2^{m-1}}|γ| · ρ^{m-N} M_N` with `M_N` the mass of
//! `|g|` seen so far and `ρ` the measured shell growth, is below tolerance.

pub mod gauss_kronrod;
mod oracle;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::RealFn;
use crate::kernels::{Kernel, ScaleKind};
use crate::weights::Weight;

use gauss_kronrod::{integrate_nodes, split_segments_anchored, ComponentTol, Node, Segment};

pub use oracle::oracle_convolve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Panel budget for each adaptive run.
    pub max_panels: usize,
    /// Maximum number of dyadic shells before truncation.
    pub annulus_budget: usize,
    /// Use the dense fixed-grid integrator instead of the adaptive one.
    pub oracle_mode: bool,
    pub oracle_nodes: usize,
    /// Half-width of the `z` window used by the dense integrator.
    pub oracle_reach: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_panels: 4096,
            annulus_budget: 16,
            oracle_mode: false,
            oracle_nodes: 2_000_000,
            oracle_reach: 40.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.rel_tol) || !in_unit(self.abs_tol) {
            return Err(Error::Config(format!(
                "rel_tol and abs_tol must lie in (0, 1), got {} and {}",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_panels < 16 {
            return Err(Error::Config(format!("max_panels must be >= 16, got {}", self.max_panels)));
        }
        if self.annulus_budget < 4 {
            return Err(Error::Config(format!(
                "annulus_budget must be >= 4, got {}",
                self.annulus_budget
            )));
        }
        if self.oracle_mode && (self.oracle_nodes < 64 || !(self.oracle_reach > 1.0)) {
            return Err(Error::Config("oracle needs >= 64 nodes and reach > 1".into()));
        }
        Ok(())
    }

    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            ..*self
        }
    }

    pub fn oracle(nodes: usize) -> Self {
        Self {
            oracle_mode: true,
            oracle_nodes: nodes,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub panels_used: usize,
    pub truncation_bound: f64,
    /// `∫|g γ|` over the core (index 0) and each integrated shell.
    pub shell_contributions: Vec<f64>,
}

/// Several kernels against the same function and length, one pass.
#[derive(Debug, Clone)]
pub struct MultiConvolution {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub truncation: Vec<f64>,
    pub abs_values: Vec<f64>,
    pub panels: usize,
    /// `[shell][kernel]` absolute contributions, core first.
    pub shells: Vec<Vec<f64>>,
    pub converged: bool,
}

impl MultiConvolution {
    pub fn component(&self, k: usize) -> QuadratureResult {
        QuadratureResult {
            value: self.values[k],
            error_estimate: self.errors[k],
            panels_used: self.panels,
            truncation_bound: self.truncation[k],
            shell_contributions: self.shells.iter().map(|s| s[k]).collect(),
        }
    }

    /// Whether every component meets `max(abs_tol, rel_tol·|value|)`
    /// (or the roundoff floor of its absolute integral).
    pub fn certified(&self, cfg: &QuadratureConfig) -> bool {
        self.converged
            && (0..self.values.len()).all(|k| {
                let target = cfg
                    .abs_tol
                    .max(cfg.rel_tol * self.values[k].abs())
                    .max(128.0 * f64::EPSILON * self.abs_values[k]);
                self.errors[k] + self.truncation[k] <= target
            })
    }
}

const INITIAL_SHELLS: usize = 3;

fn shell_segments(n: usize, zbreaks: &[(f64, u32, Option<f64>)]) -> Vec<Segment> {
    if n == 0 {
        return split_segments_anchored(-1.0, 1.0, zbreaks, 0);
    }
    let lo = 2f64.powi(n as i32 - 1);
    let hi = 2.0 * lo;
    let mut segs = split_segments_anchored(-hi, -lo, zbreaks, n);
    segs.extend(split_segments_anchored(lo, hi, zbreaks, n));
    segs
}

/// Adaptive convolution of `g` against several kernels at dilation length
/// `length`. `min_shells` forces that many shells to be integrated even
/// when the tail bound would allow stopping earlier.
pub fn convolve_multi(
    g: &dyn RealFn,
    kernels: &[&Kernel],
    length: f64,
    x: f64,
    cfg: &QuadratureConfig,
    doubling_hint: Option<f64>,
    min_shells: usize,
) -> Result<MultiConvolution> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive, got {length}")));
    }
    let nk = kernels.len();
    let dim = nk + 1; // last component: mass of |g|
    // singular points keep their exact location so that nodes next to
    // them are evaluated at y0 - L dz rather than at a rounded x - L z
    let mut zbreaks: Vec<(f64, u32, Option<f64>)> = g
        .breakpoints()
        .into_iter()
        .map(|b| (snap_to_edge((x - b.at) / length), b.grade, (b.grade > 1).then_some(b.at)))
        .collect();
    for k in kernels {
        zbreaks.extend(k.discontinuities.iter().map(|d| (*d, 1, None)));
    }

    let compact = kernels.iter().all(|k| matches!(k.support, Some(s) if s <= 1.0));
    let mut tols = vec![
        ComponentTol {
            rel: 0.5 * cfg.rel_tol,
            abs: 0.5 * cfg.abs_tol,
        };
        dim
    ];
    tols[nk] = ComponentTol { rel: 1e-3, abs: 0.0 };

    let integrand = |node: Node, out: &mut [f64]| {
        let z = node.z;
        let y = match node.near {
            Some((y0, dz)) => y0 - length * dz,
            None => x - length * z,
        };
        let gv = g.eval(y);
        // an integrable pole hit exactly by roundoff is a null set
        let gv = if gv.is_finite() { gv } else { 0.0 };
        for (o, k) in out.iter_mut().zip(kernels.iter()) {
            *o = gv * k.eval_profile(z);
        }
        out[nk] = gv.abs();
    };

    let first = if compact { 0 } else { INITIAL_SHELLS.max(min_shells).min(cfg.annulus_budget) };
    let mut segs = Vec::new();
    for n in 0..=first {
        segs.extend(shell_segments(n, &zbreaks));
    }
    let r = integrate_nodes(integrand, &segs, dim, &tols, cfg.max_panels);
    let mut values = r.values.clone();
    let mut errors = r.errors.clone();
    let mut abs_values = r.abs_values.clone();
    let mut panels = r.panels;
    let mut converged = r.converged;
    let mut shell_abs: Vec<Vec<f64>> = r.tag_abs.clone();
    let mut shell_mass: Vec<f64> = r.tag_values.iter().map(|v| v[nk]).collect();
    shell_abs.resize(first + 1, vec![0.0; dim]);
    shell_mass.resize(first + 1, 0.0);

    let mut n_done = first;
    let truncation = loop {
        let trunc = if compact {
            vec![0.0; nk]
        } else {
            tail_bound(kernels, &shell_mass, n_done, doubling_hint)
        };
        let tail_ok = (0..nk).all(|k| {
            let target = cfg.abs_tol.max(cfg.rel_tol * values[k].abs());
            trunc[k] <= 0.25 * target
        });
        if n_done >= 4 {
            let last = shell_abs[n_done][0..nk].iter().sum::<f64>();
            let prev = shell_abs[n_done - 1][0..nk].iter().sum::<f64>();
            if last > prev && last > 0.0 && !tail_ok {
                let best = MultiConvolution {
                    values: values.clone(),
                    errors: errors.clone(),
                    truncation: trunc,
                    abs_values: abs_values.clone(),
                    panels,
                    shells: strip_mass(&shell_abs, nk),
                    converged: false,
                }
                .component(0);
                return Err(Error::NonDoublingSuspected { shell: n_done, best });
            }
        }
        if compact || tail_ok || n_done >= cfg.annulus_budget {
            break trunc;
        }
        n_done += 1;
        let r = integrate_nodes(integrand, &shell_segments(n_done, &zbreaks), dim, &tols, cfg.max_panels);
        for k in 0..dim {
            values[k] += r.values[k];
            errors[k] += r.errors[k];
            abs_values[k] += r.abs_values[k];
        }
        panels += r.panels;
        converged &= r.converged;
        shell_abs.push(r.abs_values.clone());
        shell_mass.push(r.values[nk]);
    };

    values.truncate(nk);
    errors.truncate(nk);
    abs_values.truncate(nk);
    Ok(MultiConvolution {
        values,
        errors,
        truncation,
        abs_values,
        panels,
        shells: strip_mass(&shell_abs, nk),
        converged,
    })
}

/// Moves a point within roundoff of a core or shell edge onto the edge,
/// so no sliver segment is created.
fn snap_to_edge(z: f64) -> f64 {
    let a = z.abs();
    if a < 0.5 || !a.is_finite() {
        return z;
    }
    let edge = 2f64.powi(a.log2().round() as i32);
    if (a - edge).abs() <= 64.0 * f64::EPSILON * edge {
        edge.copysign(z)
    } else {
        z
    }
}

fn strip_mass(shells: &[Vec<f64>], nk: usize) -> Vec<Vec<f64>> {
    shells.iter().map(|s| s[..nk].to_vec()).collect()
}

fn tail_bound(kernels: &[&Kernel], shell_mass: &[f64], n_done: usize, hint: Option<f64>) -> Vec<f64> {
    let mut cumulative = Vec::with_capacity(shell_mass.len());
    let mut acc = 0.0;
    for m in shell_mass {
        acc += m;
        cumulative.push(acc);
    }
    let mut rho = hint.unwrap_or(2.0).max(2.0);
    for n in 2..cumulative.len() {
        if cumulative[n - 1] > 0.0 {
            rho = rho.max(cumulative[n] / cumulative[n - 1]);
        }
    }
    let mass = cumulative[n_done];
    kernels
        .iter()
        .map(|k| {
            let mut total = 0.0;
            let mut growth = 1.0;
            for m in (n_done + 1)..(n_done + 64) {
                growth *= rho;
                let term = k.tail_sup(2f64.powi(m as i32 - 1)) * growth * mass;
                total += term;
                if term <= 1e-300 || !term.is_finite() {
                    break;
                }
            }
            total
        })
        .collect()
}

fn certify(m: MultiConvolution, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    let ok = m.certified(cfg);
    let r = m.component(0);
    if ok {
        Ok(r)
    } else {
        Err(Error::ToleranceNotMet { best: r })
    }
}

/// `(g ∗ γ_scale)(x)` for an arbitrary function handle.
pub fn convolve_fn(
    g: &dyn RealFn,
    kernel: &Kernel,
    scale_kind: ScaleKind,
    scale: f64,
    x: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive, got {scale}")));
    }
    let length = scale_kind.length(scale);
    if cfg.oracle_mode {
        let value = oracle_convolve(g, kernel, length, x, cfg.oracle_nodes, cfg.oracle_reach);
        return Ok(QuadratureResult {
            value,
            error_estimate: 0.0,
            panels_used: cfg.oracle_nodes,
            truncation_bound: 0.0,
            shell_contributions: Vec::new(),
        });
    }
    let m = convolve_multi(g, &[kernel], length, x, cfg, None, 0)?;
    certify(m, cfg)
}

/// `(ω ∗ γ_scale)(x)`.
pub fn convolve_point(
    weight: &Weight,
    kernel: &Kernel,
    scale_kind: ScaleKind,
    scale: f64,
    x: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive, got {scale}")));
    }
    if cfg.oracle_mode {
        return convolve_fn(weight, kernel, scale_kind, scale, x, cfg);
    }
    let length = scale_kind.length(scale);
    let m = convolve_multi(weight, &[kernel], length, x, cfg, weight.doubling_hint(), 0)?;
    certify(m, cfg)
}

/// [`convolve_point`] over `(x, scale)` pairs; per-point errors are kept,
/// output order matches input order.
pub fn convolve_grid(
    weight: &Weight,
    kernel: &Kernel,
    scale_kind: ScaleKind,
    points: &[(f64, f64)],
    cfg: &QuadratureConfig,
) -> Vec<Result<QuadratureResult>> {
    points
        .par_iter()
        .map(|&(x, s)| convolve_point(weight, kernel, scale_kind, s, x, cfg))
        .collect()
}

/// Absolute contributions of the core and of shells `1..=n_shells`,
/// all integrated regardless of the tail bound.
pub fn shell_profile(
    weight: &Weight,
    kernel: &Kernel,
    scale_kind: ScaleKind,
    scale: f64,
    x: f64,
    n_shells: usize,
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let cfg = QuadratureConfig {
        annulus_budget: cfg.annulus_budget.max(n_shells),
        ..*cfg
    };
    let m = convolve_multi(
        weight,
        &[kernel],
        scale_kind.length(scale),
        x,
        &cfg,
        weight.doubling_hint(),
        n_shells,
    )?;
    Ok(m.shells.iter().map(|s| s[0]).collect())
}
