//! Function-space diagnostics for a weight and its logarithm: mean
//! oscillation and BMO/VMO profiles, the A∞ ratio, John–Nirenberg level
//! sets, the Hardy–Littlewood maximal function and a Littlewood–Paley
//! square function.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::RealFn;
use crate::kernels::{Kernel, ScaleKind};
use crate::quadrature::gauss_kronrod::{integrate_scalar, split_segments, ComponentTol};
use crate::quadrature::{convolve_fn, QuadratureConfig, QuadratureResult};
use crate::weights::Weight;

const SIGN_SAMPLES: usize = 257;
const OFFSETS: usize = 32;

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(Error::Domain(format!("need a bounded nonempty interval, got [{a}, {b}]")))
    }
}

fn adaptive(f: impl Fn(f64) -> f64, breaks: &[(f64, u32)], a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let segs = split_segments(a, b, breaks, 0);
    let tol = ComponentTol {
        rel: cfg.rel_tol,
        abs: cfg.abs_tol,
    };
    let (value, err, converged) = integrate_scalar(f, &segs, tol, cfg.max_panels);
    if converged {
        Ok(value)
    } else {
        Err(Error::ToleranceNotMet {
            best: QuadratureResult {
                value,
                error_estimate: err,
                panels_used: cfg.max_panels,
                truncation_bound: 0.0,
                shell_contributions: Vec::new(),
            },
        })
    }
}

fn breaks_of(f: &dyn RealFn) -> Vec<(f64, u32)> {
    f.breakpoints().iter().map(|p| (p.at, p.grade)).collect()
}

/// `∫_a^b f`, exact when the handle knows its integral.
fn integral(f: &dyn RealFn, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
    match f.integral(a, b) {
        Some(v) => Ok(v),
        None => adaptive(|x| f.eval(x), &breaks_of(f), a, b, cfg),
    }
}

/// Points in `(a, b)` where `f - c` changes sign, located by bisection
/// between samples.
fn sign_changes(f: &dyn RealFn, c: f64, a: f64, b: f64) -> Vec<f64> {
    let h = (b - a) / (SIGN_SAMPLES - 1) as f64;
    let side = |x: f64| f.eval(x) - c > 0.0;
    let mut roots = Vec::new();
    let mut prev_x = a + 0.5 * h * 1e-9;
    let mut prev = side(prev_x);
    for i in 1..SIGN_SAMPLES {
        let x = if i == SIGN_SAMPLES - 1 { b - 0.5 * h * 1e-9 } else { a + h * i as f64 };
        let cur = side(x);
        if cur != prev {
            let (mut lo, mut hi) = (prev_x, x);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if side(mid) == prev {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_x = x;
        prev = cur;
    }
    roots
}

/// `(1/|I|)∫_I |α - α_I|`.
pub fn mean_oscillation(alpha: &dyn RealFn, interval: (f64, f64), cfg: &QuadratureConfig) -> Result<f64> {
    let (a, b) = interval;
    check_interval(a, b)?;
    let len = b - a;
    let mean = integral(alpha, a, b, cfg)? / len;
    if !mean.is_finite() {
        return Err(Error::Singularity { x: a });
    }
    let mut cuts = vec![a];
    cuts.extend(sign_changes(alpha, mean, a, b));
    cuts.push(b);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += (integral(alpha, w[0], w[1], cfg)? - mean * (w[1] - w[0])).abs();
    }
    Ok(total / len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    /// `(δ, sup of the mean oscillation over sampled I with |I| ≤ δ)`.
    pub per_scale: Vec<(f64, f64)>,
    pub bmo_norm_estimate: f64,
    /// Non-decreasing envelope of `per_scale`, ascending in `δ`.
    pub vmo_modulus: Vec<(f64, f64)>,
    pub ainfty_ratio_sup: Option<f64>,
    pub jn_tail_samples: Vec<(f64, f64)>,
}

fn place(c: f64, len: f64, window: (f64, f64)) -> (f64, f64) {
    let lo = (c - 0.5 * len).max(window.0).min(window.1 - len);
    (lo, lo + len)
}

fn candidate_intervals(
    alpha: &dyn RealFn,
    window: (f64, f64),
    delta: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, f64)> {
    let width = window.1 - window.0;
    let mut out = Vec::new();
    for len in [delta.min(width), 0.5 * delta.min(width)] {
        let free = width - len;
        if free <= 0.0 {
            out.push(window);
            continue;
        }
        // stratified random centres
        for i in 0..samples {
            let u = (i as f64 + rng.gen::<f64>()) / samples as f64;
            let lo = window.0 + u * free;
            out.push((lo, lo + len));
        }
        // dyadic intervals of the window at the nearest level not above len
        let level = (width / len).log2().ceil().max(0.0) as i32;
        let count = 1usize << level.min(30);
        let dy = width / count as f64;
        let stride = count.div_ceil(samples).max(1);
        for i in (0..count).step_by(stride) {
            let lo = window.0 + dy * i as f64;
            out.push((lo, lo + dy));
        }
        // intervals containing a non-smooth point at every relative offset
        for p in alpha.breakpoints() {
            if p.at >= window.0 && p.at <= window.1 {
                for k in 0..=OFFSETS {
                    let r = k as f64 / OFFSETS as f64;
                    out.push(place(p.at + (0.5 - r) * len, len, window));
                }
            }
        }
    }
    out.retain(|(a, b)| b > a);
    out
}

/// Sup of the mean oscillation per scale over sampled subintervals of
/// `window`. The result is a lower estimate of the true sup.
pub fn bmo_vmo_profile(
    alpha: &dyn RealFn,
    window: (f64, f64),
    scales: &[f64],
    samples_per_scale: usize,
    seed: u64,
    cfg: &QuadratureConfig,
) -> Result<OscillationReport> {
    check_interval(window.0, window.1)?;
    if scales.is_empty() || scales.iter().any(|d| !(*d > 0.0)) || scales.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("scales must be positive and strictly decreasing".into()));
    }
    if samples_per_scale == 0 {
        return Err(Error::Config("samples_per_scale must be positive".into()));
    }
    let mut per_scale = Vec::with_capacity(scales.len());
    for (i, &delta) in scales.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let intervals = candidate_intervals(alpha, window, delta, samples_per_scale, &mut rng);
        let values: Vec<f64> = intervals
            .par_iter()
            .map(|&iv| mean_oscillation(alpha, iv, cfg))
            .collect::<Result<_>>()?;
        per_scale.push((delta, values.into_iter().fold(0.0, f64::max)));
    }
    let mut vmo_modulus: Vec<(f64, f64)> = Vec::with_capacity(per_scale.len());
    let mut running = 0.0f64;
    for &(delta, v) in per_scale.iter().rev() {
        running = running.max(v);
        vmo_modulus.push((delta, running));
    }
    Ok(OscillationReport {
        bmo_norm_estimate: running,
        per_scale,
        vmo_modulus,
        ainfty_ratio_sup: None,
        jn_tail_samples: Vec::new(),
    })
}

/// Arithmetic over geometric mean of `ω` on `I`.
pub fn ainfty_ratio(weight: &Weight, interval: (f64, f64), cfg: &QuadratureConfig) -> Result<f64> {
    let (a, b) = interval;
    check_interval(a, b)?;
    let len = b - a;
    let mean = weight.mass(a, b) / len;
    let log_mean = integral(&weight.log_weight(), a, b, cfg)? / len;
    if !log_mean.is_finite() {
        let x = weight.weight_breakpoints().first().map(|p| p.at).unwrap_or(a);
        return Err(Error::Singularity { x });
    }
    Ok((mean / log_mean.exp()).max(1.0))
}

/// Sup of [`ainfty_ratio`] over `n` random subintervals of `window` with
/// log-uniform lengths.
pub fn ainfty_sweep(weight: &Weight, window: (f64, f64), n: usize, seed: u64, cfg: &QuadratureConfig) -> Result<f64> {
    check_interval(window.0, window.1)?;
    let width = window.1 - window.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intervals: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let len = width * 10f64.powf(-3.0 * rng.gen::<f64>());
            let lo = window.0 + rng.gen::<f64>() * (width - len);
            (lo, lo + len)
        })
        .collect();
    let ratios: Vec<f64> = intervals
        .par_iter()
        .map(|&iv| ainfty_ratio(weight, iv, cfg))
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(1.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JnTail {
    pub samples: Vec<(f64, f64)>,
    /// Least-squares slope of `ln(fraction)` against `λ`.
    pub slope: Option<f64>,
}

/// Measure of `{x ∈ I : |α(x) - α_I| > λ}` relative to `|I|`, by midpoint
/// sampling at `n_samples` points.
pub fn jn_tail(alpha: &dyn RealFn, interval: (f64, f64), lambdas: &[f64], n_samples: usize) -> Result<JnTail> {
    let (a, b) = interval;
    check_interval(a, b)?;
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Config("lambdas must be positive and increasing".into()));
    }
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let mean = integral(alpha, a, b, &QuadratureConfig::default())? / (b - a);
    let h = (b - a) / n_samples as f64;
    let mut dev: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| (alpha.eval(a + h * (i as f64 + 0.5)) - mean).abs())
        .collect();
    dev.sort_by(f64::total_cmp);
    let samples: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&l| {
            let above = n_samples - dev.partition_point(|d| *d <= l);
            (l, above as f64 / n_samples as f64)
        })
        .collect();
    let pts: Vec<(f64, f64)> = samples.iter().filter(|p| p.1 > 0.0).map(|p| (p.0, p.1.ln())).collect();
    let slope = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(JnTail { samples, slope })
}

/// Lower and upper estimates of `M(g 1_R)(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximalEstimate {
    pub value: f64,
    pub radius: f64,
    /// Bound from the monotonicity of `s ↦ ∫_{|x-y|<s}|g|` between grid radii.
    pub upper: f64,
}

const MAXIMAL_GRID: usize = 40;

/// `sup_{s>0} (1/2s)∫_{|x-y|<s} |g 1_R|(y) dy`.
pub fn maximal_function(g: &dyn RealFn, x: f64, restriction: (f64, f64), cfg: &QuadratureConfig) -> Result<f64> {
    Ok(maximal_function_bounds(g, x, restriction, cfg)?.value)
}

pub fn maximal_function_bounds(
    g: &dyn RealFn,
    x: f64,
    restriction: (f64, f64),
    cfg: &QuadratureConfig,
) -> Result<MaximalEstimate> {
    let (ra, rb) = restriction;
    check_interval(ra, rb)?;
    if !x.is_finite() {
        return Err(Error::Domain(format!("x must be finite, got {x}")));
    }
    let breaks: Vec<(f64, u32)> = breaks_of(g);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let mass = |s: f64| -> f64 {
        let lo = (x - s).max(ra);
        let hi = (x + s).min(rb);
        if hi <= lo {
            return 0.0;
        }
        match adaptive(|y| g.eval(y).abs(), &breaks, lo, hi, cfg) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                0.0
            }
        }
    };
    // the float width of the symmetric window, which differs from 2s by roundoff
    let width = |s: f64| (x + s) - (x - s);
    let mean = |s: f64| mass(s) / width(s);

    // beyond the farthest end of R the mass is constant and the mean falls
    let s_hi = (x - ra).abs().max((x - rb).abs());
    let s_lo = s_hi * 1e-6;
    let grid: Vec<f64> = (0..MAXIMAL_GRID)
        .map(|i| (s_lo.ln() + (s_hi.ln() - s_lo.ln()) * i as f64 / (MAXIMAL_GRID - 1) as f64).exp())
        .collect();
    let masses: Vec<f64> = grid.iter().map(|&s| mass(s)).collect();
    let mut best = (0.0f64, s_hi);
    for (s, m) in grid.iter().zip(&masses) {
        let v = m / width(*s);
        if v > best.0 {
            best = (v, *s);
        }
    }
    let mut upper = masses[0] / width(grid[0]);
    for i in 0..MAXIMAL_GRID - 1 {
        upper = upper.max(masses[i + 1] / width(grid[i]));
    }
    // radii where the window meets a non-smooth point or an end of R
    let mut special: Vec<f64> = breaks.iter().map(|p| (x - p.0).abs()).collect();
    special.extend([(x - ra).abs(), (x - rb).abs()]);
    for s in special {
        if s > 0.0 && s <= s_hi {
            let v = mean(s);
            if v > best.0 {
                best = (v, s);
            }
        }
    }
    // local refinement around the best grid radius
    let k = grid.partition_point(|s| *s < best.1).min(MAXIMAL_GRID - 1);
    let (mut lo, mut hi) = (grid[k.saturating_sub(1)].ln(), grid[(k + 1).min(MAXIMAL_GRID - 1)].ln());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (mean(c.exp()), mean(d.exp()));
    for _ in 0..60 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = mean(c.exp());
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = mean(d.exp());
        }
    }
    for (v, s) in [(fc, c.exp()), (fd, d.exp())] {
        if v > best.0 {
            best = (v, s);
        }
    }
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(MaximalEstimate {
        value: best.0,
        radius: best.1,
        upper: upper.max(best.0),
    })
}

/// `(∫_{s_min}^{s_max} (g ∗ γ_s)(x)² ds/s)^{1/2}` with `γ_s` on the length
/// scale.
pub fn lp_square_function(
    g: &dyn RealFn,
    kernel: &Kernel,
    x: f64,
    s_range: (f64, f64),
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if kernel.moments.m0.abs() > 1e-12 {
        return Err(Error::ZeroMeanRequired(kernel.name.to_string()));
    }
    let (s0, s1) = s_range;
    if !(s0 > 0.0 && s0 < s1 && s1.is_finite()) {
        return Err(Error::Domain(format!("need 0 < s_min < s_max, got ({s0}, {s1})")));
    }
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let inner = QuadratureConfig {
        rel_tol: cfg.rel_tol * 0.1,
        ..*cfg
    };
    let f = |tau: f64| match convolve_fn(g, kernel, ScaleKind::LengthScale, tau.exp(), x, &inner) {
        Ok(r) => r.value * r.value,
        Err(e) => {
            failure.lock().unwrap().get_or_insert(e);
            0.0
        }
    };
    let (a, b) = (s0.ln(), s1.ln());
    let panels = ((b - a) / 0.5).ceil().max(1.0) as usize;
    let breaks: Vec<(f64, u32)> = (1..panels).map(|i| (a + (b - a) * i as f64 / panels as f64, 1)).collect();
    let v = adaptive(f, &breaks, a, b, cfg);
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(v?.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::{Breakpoint, FnHandle};
    use crate::weights::WeightSpec;
    use std::f64::consts::E;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn log_abs() -> Weight {
        // ω = |x| has α = log|x|
        Weight::new(WeightSpec::power(1.0)).unwrap()
    }

    #[test]
    fn constant_has_no_oscillation() {
        let c = FnHandle::new(|_| 3.0);
        assert_eq!(mean_oscillation(&c, (-1.0, 2.0), &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn log_oscillation_is_scale_invariant() {
        let w = log_abs();
        for d in [1.0, 1e-2, 1e-4, 1e3] {
            let m = mean_oscillation(&w.log_weight(), (-d, d), &cfg()).unwrap();
            assert!((m - 2.0 / E).abs() < 1e-12, "{d}: {m}");
        }
    }

    #[test]
    fn log_oscillation_without_closed_form() {
        let f = FnHandle::new(|x: f64| x.abs().ln()).with_breakpoints(vec![Breakpoint::singular(0.0, 3)]);
        let m = mean_oscillation(&f, (-0.3, 0.3), &cfg()).unwrap();
        assert!((m - 2.0 / E).abs() < 1e-7, "{m}");
    }

    #[test]
    fn oscillation_shift_and_scale() {
        let f = FnHandle::new(|x: f64| (3.0 * x).sin() + x * x);
        let g = FnHandle::new(|x: f64| (3.0 * x).sin() + x * x + 5.0);
        let h = FnHandle::new(|x: f64| -2.5 * ((3.0 * x).sin() + x * x));
        let iv = (-0.7, 1.9);
        let m = mean_oscillation(&f, iv, &cfg()).unwrap();
        assert!((mean_oscillation(&g, iv, &cfg()).unwrap() - m).abs() < 1e-9);
        assert!((mean_oscillation(&h, iv, &cfg()).unwrap() - 2.5 * m).abs() < 1e-9);
    }

    #[test]
    fn sine_oscillation_is_lipschitz_small() {
        let f = FnHandle::new(f64::sin);
        for h in [1.0, 0.1, 0.01] {
            let m = mean_oscillation(&f, (0.0, h), &cfg()).unwrap();
            assert!(m <= h / 2.0 + 1e-15);
        }
    }

    #[test]
    fn profile_signatures() {
        let w = Weight::new(WeightSpec::power(0.5)).unwrap();
        let r = bmo_vmo_profile(&w.log_weight(), (-1.0, 1.0), &[1.0, 1e-2, 1e-4], 16, 7, &cfg()).unwrap();
        // flat across scales; symmetric intervals alone give 1/e, the sup
        // over offsets is larger
        let first = r.per_scale[0].1;
        for (d, v) in &r.per_scale {
            assert!((v - first).abs() < 1e-3 * first && *v > 1.0 / E, "{d}: {v}");
        }
        let s = FnHandle::new(f64::sin);
        let r = bmo_vmo_profile(&s, (-3.0, 3.0), &[1.0, 0.1, 0.01], 32, 7, &cfg()).unwrap();
        for (d, v) in &r.vmo_modulus {
            assert!(*v <= d / 2.0 + 1e-12);
        }
        assert!(r.vmo_modulus.windows(2).all(|w| w[1].1 >= w[0].1));
        let z = FnHandle::new(|_| 0.0);
        let r = bmo_vmo_profile(&z, (0.0, 1.0), &[0.5, 0.1], 4, 0, &cfg()).unwrap();
        assert_eq!(r.bmo_norm_estimate, 0.0);
    }

    #[test]
    fn profile_is_seed_deterministic() {
        let s = FnHandle::new(|x: f64| (5.0 * x).sin().abs());
        let a = bmo_vmo_profile(&s, (0.0, 4.0), &[1.0, 0.2], 9, 42, &cfg()).unwrap();
        let b = bmo_vmo_profile(&s, (0.0, 4.0), &[1.0, 0.2], 9, 42, &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ainfty_examples() {
        let c = Weight::new(WeightSpec::constant(3.0)).unwrap();
        assert!((ainfty_ratio(&c, (-2.0, 5.0), &cfg()).unwrap() - 1.0).abs() < 1e-14);
        let w = Weight::new(WeightSpec::power(0.5)).unwrap();
        let r = ainfty_ratio(&w, (0.0, 1.0), &cfg()).unwrap();
        assert!((r - 0.5f64.exp() / 1.5).abs() < 1e-12);
        for (_, spec) in crate::weights::catalog() {
            let w = Weight::new(spec).unwrap();
            let sup = ainfty_sweep(&w, (-10.0, 10.0), 50, 3, &cfg()).unwrap();
            assert!(sup.is_finite() && sup >= 1.0);
        }
    }

    #[test]
    fn jn_tail_examples() {
        let w = log_abs();
        let r = jn_tail(&w.log_weight(), (-1.0, 1.0), &[0.5, 1.0, 2.0, 3.0], 1_000_000).unwrap();
        assert!((r.samples[1].1 - (-2.0f64).exp()).abs() < 1e-4);
        assert!(r.slope.unwrap() < 0.0);
        let c = FnHandle::new(|_| 1.0);
        let r = jn_tail(&c, (0.0, 1.0), &[0.1, 1.0], 1000).unwrap();
        assert!(r.samples.iter().all(|p| p.1 == 0.0));
        assert!(r.slope.is_none());
    }

    #[test]
    fn maximal_function_examples() {
        let ind = FnHandle::new(|y: f64| if (0.0..=1.0).contains(&y) { 1.0 } else { 0.0 })
            .with_breakpoints(vec![Breakpoint::jump(0.0), Breakpoint::jump(1.0)]);
        let m = maximal_function_bounds(&ind, 2.0, (-5.0, 5.0), &cfg()).unwrap();
        assert!((m.value - 0.25).abs() < 1e-9 && (m.radius - 2.0).abs() < 1e-6, "{m:?}");
        assert!(m.upper >= m.value);
        let m = maximal_function(&ind, 0.5, (-5.0, 5.0), &cfg()).unwrap();
        assert!((m - 1.0).abs() < 1e-9);
        let one = FnHandle::new(|_| 1.0);
        assert!((maximal_function(&one, 0.0, (-1.0, 1.0), &cfg()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn maximal_dominates_local_means() {
        let f = FnHandle::new(|y: f64| (2.0 * y).sin() * y.exp().min(5.0));
        let m = maximal_function(&f, 0.3, (-2.0, 2.0), &cfg()).unwrap();
        for s in [0.01f64, 0.1, 0.5, 1.0, 2.5] {
            let lo = (0.3 - s).max(-2.0);
            let hi = (0.3 + s).min(2.0);
            let local = adaptive(|y| f.eval(y).abs(), &[], lo, hi, &cfg()).unwrap() / (2.0 * s);
            assert!(m >= local * (1.0 - 1e-9));
        }
    }

    #[test]
    fn square_function_examples() {
        let c = FnHandle::new(|_| 2.0);
        let v = lp_square_function(&c, &Kernel::psi(), 0.3, (1e-3, 1.0), &cfg()).unwrap();
        assert!(v < 1e-9);
        assert!(matches!(
            lp_square_function(&c, &Kernel::phi(), 0.0, (1e-3, 1.0), &cfg()),
            Err(Error::ZeroMeanRequired(_))
        ));
    }

    #[test]
    fn square_function_matches_log_grid_oracle() {
        let w = Weight::from_name("expsine").unwrap();
        let g = FnHandle::new(|y| w.value(y) - 1.0);
        let v = lp_square_function(&g, &Kernel::psi(), 0.0, (1e-3, 1.0), &cfg()).unwrap();
        // trapezoid on 10⁴ log-spaced nodes with dense convolutions
        let n = 10_000;
        let (a, b) = (1e-3f64.ln(), 0.0);
        let h = (b - a) / (n - 1) as f64;
        let k = Kernel::psi();
        let mut sum = 0.0;
        for i in 0..n {
            let s = (a + h * i as f64).exp();
            let c = crate::quadrature::oracle_convolve(&g, &k, s, 0.0, 4000, 12.0);
            let wgt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            sum += wgt * c * c;
        }
        let oracle = (sum * h).sqrt();
        assert!((v - oracle).abs() < 1e-4 * oracle, "{v} vs {oracle}");
    }
}
