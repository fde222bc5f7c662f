//! Doubling weights `ω`, their logarithms `α = log ω` and primitives
//! `f(x) = ∫_0^x ω`, plus a small catalog of classified examples.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::{Breakpoint, RealFn};
use crate::quadrature::gauss_kronrod::{integrate_scalar, split_segments, ComponentTol, Segment};
use crate::quadrature::QuadratureResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLevel {
    pub a: f64,
    pub b: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    /// `ω ≡ c`.
    Constant { c: f64 },
    /// `ω(x) = |x|^a`, `a > -1`.
    Power { a: f64 },
    /// `ω(x) = exp(ε sin(kx))`.
    ExpSine { eps: f64, k: f64 },
    /// `ω = value` on each `[a, b)` level and `base` elsewhere.
    DyadicStep { base: f64, levels: Vec<StepLevel> },
    /// Linear interpolation through `(x, ω(x))`, constant beyond the ends.
    Sampled { table: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub is_ainfty: Flag,
    pub log_in_bmo: Flag,
    pub log_in_vmo: Flag,
}

impl Default for Classification {
    fn default() -> Self {
        Self {
            is_ainfty: Flag::Unknown,
            log_in_bmo: Flag::Unknown,
            log_in_vmo: Flag::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_doubling: Option<f64>,
    #[serde(default)]
    pub classification: Classification,
}

impl WeightSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            claimed_doubling: None,
            classification: Classification::default(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Family::Constant { c })
    }

    pub fn power(a: f64) -> Self {
        Self::new(Family::Power { a })
    }

    pub fn exp_sine(eps: f64, k: f64) -> Self {
        Self::new(Family::ExpSine { eps, k })
    }

    pub fn sampled(table: Vec<(f64, f64)>) -> Self {
        Self::new(Family::Sampled { table })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidWeight(m));
        match &self.family {
            Family::Constant { c } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return bad(format!("constant weight needs c > 0, got {c}"));
                }
            }
            Family::Power { a } => {
                if !(*a > -1.0 && a.is_finite()) {
                    return bad(format!("power weight needs a > -1, got {a}"));
                }
            }
            Family::ExpSine { eps, k } => {
                if !(*eps >= 0.0 && eps.is_finite()) || !(*k > 0.0 && k.is_finite()) {
                    return bad(format!("exp-sine weight needs eps >= 0 and k > 0, got ({eps}, {k})"));
                }
            }
            Family::DyadicStep { base, levels } => {
                if !(*base > 0.0 && base.is_finite()) {
                    return bad(format!("step base must be positive, got {base}"));
                }
                let mut sorted = levels.clone();
                sorted.sort_by(|p, q| p.a.total_cmp(&q.a));
                for l in &sorted {
                    if !(l.b > l.a && l.a.is_finite() && l.b.is_finite()) {
                        return bad(format!("step level [{}, {}) is empty or unbounded", l.a, l.b));
                    }
                    if !(l.value > 0.0 && l.value.is_finite()) {
                        return bad(format!("step value must be positive, got {}", l.value));
                    }
                }
                if sorted.windows(2).any(|w| w[1].a < w[0].b) {
                    return bad("step levels overlap".into());
                }
            }
            Family::Sampled { table } => {
                if table.is_empty() {
                    return bad("sampled weight needs at least one point".into());
                }
                if table.iter().any(|(x, w)| !x.is_finite() || !(*w > 0.0 && w.is_finite())) {
                    return bad("sampled weight values must be finite and positive".into());
                }
                if table.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("sampled abscissae must be strictly increasing".into());
                }
            }
        }
        if let Some(rho) = self.claimed_doubling {
            if !(rho > 1.0) {
                return bad(format!("claimed doubling constant must exceed 1, got {rho}"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: WeightSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidWeight(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weight spec serializes")
    }

    /// A catalog name, or else a path to a JSON spec file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Ok(spec) = lookup(name_or_path) {
            return Ok(spec);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            return Self::from_json(&text);
        }
        Err(Error::UnknownWeight(name_or_path.to_string()))
    }
}

fn spec_with(family: Family, rho: Option<f64>, flags: (Flag, Flag, Flag)) -> WeightSpec {
    WeightSpec {
        family,
        claimed_doubling: rho,
        classification: Classification {
            is_ainfty: flags.0,
            log_in_bmo: flags.1,
            log_in_vmo: flags.2,
        },
    }
}

/// Catalog of named weights with asserted classification flags.
pub fn catalog() -> Vec<(&'static str, WeightSpec)> {
    use Flag::*;
    vec![
        ("unit", spec_with(Family::Constant { c: 1.0 }, Some(2.0), (Yes, Yes, Yes))),
        (
            "sqrt",
            spec_with(Family::Power { a: 0.5 }, Some(2f64.powf(1.5)), (Yes, Yes, No)),
        ),
        ("invsqrt", spec_with(Family::Power { a: -0.5 }, None, (Yes, Yes, No))),
        (
            "expsine",
            spec_with(
                Family::ExpSine { eps: 1.0, k: 1.0 },
                Some(2.0 * 2f64.exp()),
                (Yes, Yes, Yes),
            ),
        ),
        (
            "step",
            spec_with(
                Family::DyadicStep {
                    base: 1.0,
                    levels: vec![StepLevel {
                        a: 0.0,
                        b: 1.0,
                        value: 4.0,
                    }],
                },
                Some(8.0),
                (Yes, Yes, No),
            ),
        ),
    ]
}

pub fn lookup(name: &str) -> Result<WeightSpec> {
    catalog()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| s)
        .ok_or_else(|| Error::UnknownWeight(name.to_string()))
}

/// Grading exponent for `|z|^e` under `z = v^p`. The mapped integrand
/// `v^{p(e+1)-1}` is smooth when `p(e+1)` is an integer; otherwise a grade
/// with `p(e+1) >= 2` keeps it continuously differentiable.
fn power_grade(e: f64) -> u32 {
    if e.fract() == 0.0 && e >= 0.0 {
        return 1;
    }
    let m = e + 1.0;
    (2..=12)
        .find(|&p| {
            let q = p as f64 * m;
            (q - q.round()).abs() < 1e-9
        })
        .unwrap_or_else(|| ((2.0 / m).ceil() as u32).clamp(2, 64))
}

/// Cumulative integrals of a periodic weight over one period.
#[derive(Debug, Clone)]
struct PeriodicPrimitive {
    period: f64,
    cell: f64,
    anchors: Vec<f64>,
    total: f64,
    err: f64,
}

const PRIMITIVE_CELLS: usize = 256;
const CACHE_TOL: ComponentTol = ComponentTol {
    rel: 1e-15,
    abs: 1e-300,
};

impl PeriodicPrimitive {
    fn build(period: f64, w: impl Fn(f64) -> f64) -> Self {
        let cell = period / PRIMITIVE_CELLS as f64;
        let mut anchors = Vec::with_capacity(PRIMITIVE_CELLS + 1);
        let mut acc = 0.0;
        let mut err = 0.0;
        anchors.push(0.0);
        for j in 0..PRIMITIVE_CELLS {
            let a = j as f64 * cell;
            let (v, e, _) = integrate_scalar(&w, &[Segment::plain(a, a + cell)], CACHE_TOL, 64);
            acc += v;
            err += e;
            anchors.push(acc);
        }
        Self {
            period,
            cell,
            total: acc,
            anchors,
            err,
        }
    }

    fn eval(&self, x: f64, w: impl Fn(f64) -> f64) -> (f64, f64) {
        let n = (x / self.period).floor();
        let r = x - n * self.period;
        let j = ((r / self.cell) as usize).min(PRIMITIVE_CELLS - 1);
        let a = j as f64 * self.cell;
        let (part, e, _) = if r > a {
            integrate_scalar(&w, &[Segment::plain(a, r)], CACHE_TOL, 64)
        } else {
            (0.0, 0.0, true)
        };
        (
            n * self.total + self.anchors[j] + part,
            (n.abs() + 1.0) * self.err + e,
        )
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Constant(f64),
    Power(f64),
    ExpSine {
        eps: f64,
        k: f64,
        cache: PeriodicPrimitive,
    },
    Step {
        base: f64,
        levels: Vec<StepLevel>,
    },
    Sampled {
        xs: Vec<f64>,
        ws: Vec<f64>,
        // ∫ from xs[0] to xs[i]
        cum: Vec<f64>,
        offset: f64,
    },
}

/// A validated weight ready for evaluation, with any primitive cache
/// precomputed. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Weight {
    spec: WeightSpec,
    repr: Repr,
}

impl Weight {
    pub fn new(spec: WeightSpec) -> Result<Self> {
        spec.validate()?;
        let repr = match &spec.family {
            Family::Constant { c } => Repr::Constant(*c),
            Family::Power { a } => Repr::Power(*a),
            Family::ExpSine { eps, k } => {
                let (eps, k) = (*eps, *k);
                let cache = PeriodicPrimitive::build(2.0 * PI / k, |x| (eps * (k * x).sin()).exp());
                Repr::ExpSine { eps, k, cache }
            }
            Family::DyadicStep { base, levels } => {
                let mut levels = levels.clone();
                levels.sort_by(|p, q| p.a.total_cmp(&q.a));
                Repr::Step { base: *base, levels }
            }
            Family::Sampled { table } => {
                let xs: Vec<f64> = table.iter().map(|p| p.0).collect();
                let ws: Vec<f64> = table.iter().map(|p| p.1).collect();
                let mut cum = vec![0.0; xs.len()];
                for i in 1..xs.len() {
                    cum[i] = cum[i - 1] + 0.5 * (ws[i] + ws[i - 1]) * (xs[i] - xs[i - 1]);
                }
                let mut r = Repr::Sampled {
                    xs,
                    ws,
                    cum,
                    offset: 0.0,
                };
                let at_zero = sampled_raw_primitive(&r, 0.0);
                if let Repr::Sampled { offset, .. } = &mut r {
                    *offset = at_zero;
                }
                r
            }
        };
        Ok(Self { spec, repr })
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::new(WeightSpec::resolve(name)?)
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    /// `ω(x)`. For `Power(a)` at `x = 0` this is `0` (`a > 0`) or `+∞` (`a < 0`).
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Constant(c) => *c,
            Repr::Power(a) => x.abs().powf(*a),
            Repr::ExpSine { eps, k, .. } => (eps * (k * x).sin()).exp(),
            Repr::Step { base, levels } => step_value(*base, levels, x),
            Repr::Sampled { xs, ws, .. } => sampled_value(xs, ws, x),
        }
    }

    /// `f(x) = ∫_0^x ω` from closed forms or the period cache, with an
    /// error bound.
    pub fn primitive_with_error(&self, x: f64) -> (f64, f64) {
        match &self.repr {
            Repr::Constant(c) => (c * x, 0.0),
            Repr::Power(a) => (x.signum() * x.abs().powf(a + 1.0) / (a + 1.0), 0.0),
            Repr::ExpSine { eps, k, cache } => {
                let (eps, k) = (*eps, *k);
                cache.eval(x, |y| (eps * (k * y).sin()).exp())
            }
            Repr::Step { base, levels } => (step_cumulative(*base, levels, x) - step_cumulative(*base, levels, 0.0), 0.0),
            Repr::Sampled { offset, .. } => (sampled_raw_primitive(&self.repr, x) - offset, 0.0),
        }
    }

    #[inline]
    pub fn primitive(&self, x: f64) -> f64 {
        self.primitive_with_error(x).0
    }

    /// `∫_a^b ω`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        self.primitive(b) - self.primitive(a)
    }

    /// Non-smooth points of `ω`.
    pub fn weight_breakpoints(&self) -> Vec<Breakpoint> {
        match &self.repr {
            Repr::Constant(_) | Repr::ExpSine { .. } => Vec::new(),
            Repr::Power(a) => {
                if *a == 0.0 {
                    Vec::new()
                } else {
                    vec![Breakpoint::singular(0.0, power_grade(*a))]
                }
            }
            Repr::Step { levels, .. } => levels
                .iter()
                .flat_map(|l| [Breakpoint::jump(l.a), Breakpoint::jump(l.b)])
                .collect(),
            Repr::Sampled { xs, .. } => xs.iter().map(|x| Breakpoint::jump(*x)).collect(),
        }
    }

    /// Non-smooth points of `f`.
    pub fn primitive_breakpoints(&self) -> Vec<Breakpoint> {
        match &self.repr {
            Repr::Power(a) => {
                if *a == 0.0 {
                    Vec::new()
                } else {
                    vec![Breakpoint::singular(0.0, power_grade(a + 1.0))]
                }
            }
            _ => self.weight_breakpoints(),
        }
    }

    /// The log-weight `α = log ω` as a function handle.
    pub fn log_weight(&self) -> LogWeight<'_> {
        LogWeight { weight: self }
    }

    /// `f(·) - f(x0)`, the primitive recentred so that its convolution
    /// against a kernel avoids cancellation with the kernel's mass.
    pub fn primitive_centered(&self, x0: f64) -> CenteredPrimitive<'_> {
        CenteredPrimitive {
            weight: self,
            f0: self.primitive(x0),
        }
    }

    /// The largest doubling ratio the weight can have, when known.
    pub fn doubling_hint(&self) -> Option<f64> {
        self.spec.claimed_doubling
    }
}

impl RealFn for Weight {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        self.value(x)
    }

    fn breakpoints(&self) -> Vec<Breakpoint> {
        self.weight_breakpoints()
    }

    fn integral(&self, a: f64, b: f64) -> Option<f64> {
        Some(self.mass(a, b))
    }
}

pub struct CenteredPrimitive<'a> {
    weight: &'a Weight,
    f0: f64,
}

impl RealFn for CenteredPrimitive<'_> {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        self.weight.primitive(x) - self.f0
    }

    fn breakpoints(&self) -> Vec<Breakpoint> {
        self.weight.primitive_breakpoints()
    }
}

/// `α = log ω`, with closed-form interval integrals where available.
pub struct LogWeight<'a> {
    weight: &'a Weight,
}

impl RealFn for LogWeight<'_> {
    fn eval(&self, x: f64) -> f64 {
        match &self.weight.repr {
            Repr::Power(a) => a * x.abs().ln(),
            Repr::ExpSine { eps, k, .. } => eps * (k * x).sin(),
            _ => self.weight.value(x).ln(),
        }
    }

    fn breakpoints(&self) -> Vec<Breakpoint> {
        match &self.weight.repr {
            Repr::Power(a) if *a != 0.0 => vec![Breakpoint::singular(0.0, 3)],
            Repr::Power(_) => Vec::new(),
            _ => self.weight.weight_breakpoints(),
        }
    }

    fn integral(&self, a: f64, b: f64) -> Option<f64> {
        match &self.weight.repr {
            Repr::Constant(c) => Some(c.ln() * (b - a)),
            Repr::Power(p) => {
                let g = |x: f64| if x == 0.0 { 0.0 } else { x * x.abs().ln() - x };
                Some(p * (g(b) - g(a)))
            }
            Repr::ExpSine { eps, k, .. } => Some(eps * ((k * a).cos() - (k * b).cos()) / k),
            Repr::Step { base, levels } => {
                let mut total = base.ln() * (b - a);
                for l in levels {
                    let overlap = (b.min(l.b) - a.max(l.a)).max(0.0);
                    total += (l.value.ln() - base.ln()) * overlap;
                }
                Some(total)
            }
            Repr::Sampled { .. } => None,
        }
    }
}

fn step_value(base: f64, levels: &[StepLevel], x: f64) -> f64 {
    levels
        .iter()
        .find(|l| x >= l.a && x < l.b)
        .map(|l| l.value)
        .unwrap_or(base)
}

// ∫_0^x with the base value extended, then corrected per level
fn step_cumulative(base: f64, levels: &[StepLevel], x: f64) -> f64 {
    let mut total = base * x;
    for l in levels {
        let covered = (x.min(l.b) - l.a).max(0.0);
        total += (l.value - base) * covered;
    }
    total
}

fn sampled_value(xs: &[f64], ws: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ws[0];
    }
    if x >= xs[n - 1] {
        return ws[n - 1];
    }
    let i = xs.partition_point(|&p| p <= x) - 1;
    let u = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ws[i] + u * (ws[i + 1] - ws[i])
}

// ∫ from xs[0] to x (negative when x < xs[0])
fn sampled_raw_primitive(repr: &Repr, x: f64) -> f64 {
    let Repr::Sampled { xs, ws, cum, .. } = repr else {
        unreachable!()
    };
    let n = xs.len();
    if x <= xs[0] {
        return ws[0] * (x - xs[0]);
    }
    if x >= xs[n - 1] {
        return cum[n - 1] + ws[n - 1] * (x - xs[n - 1]);
    }
    let i = xs.partition_point(|&p| p <= x) - 1;
    let h = x - xs[i];
    let slope = (ws[i + 1] - ws[i]) / (xs[i + 1] - xs[i]);
    cum[i] + ws[i] * h + 0.5 * slope * h * h
}

/// `ω(x)`, rejecting the singular point of negative power weights.
pub fn weight_eval(spec: &WeightSpec, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("x must be finite, got {x}")));
    }
    if let Family::Power { a } = spec.family {
        if a < 0.0 && x == 0.0 {
            return Err(Error::Singularity { x });
        }
    }
    Ok(Weight::new(spec.clone())?.value(x))
}

/// `f(x) = ∫_0^x ω` to absolute error `tol`.
pub fn weight_primitive(weight: &Weight, x: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let (v, e) = weight.primitive_with_error(x);
    if e <= tol {
        return Ok(v);
    }
    // cache not accurate enough; integrate directly from the origin
    let (lo, hi, sign) = if x >= 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
    let breaks: Vec<(f64, u32)> = weight
        .weight_breakpoints()
        .into_iter()
        .map(|b| (b.at, b.grade))
        .collect();
    let segs = split_segments(lo, hi, &breaks, 0);
    let max_panels = 1 << 16;
    let (v, e, ok) = integrate_scalar(
        |y| weight.value(y),
        &segs,
        ComponentTol { rel: 0.0, abs: tol },
        max_panels,
    );
    if ok && e <= tol {
        Ok(sign * v)
    } else {
        Err(Error::ToleranceNotMet {
            best: QuadratureResult {
                value: sign * v,
                error_estimate: e,
                panels_used: max_panels,
                truncation_bound: 0.0,
                shell_contributions: Vec::new(),
            },
        })
    }
}

/// Largest sampled `∫_{2I} ω / ∫_I ω` over centred intervals
/// `I = (c - r, c + r)`; a lower bound for the doubling constant.
pub fn doubling_estimate(weight: &Weight, centers: &[f64], scales: &[f64]) -> Result<f64> {
    if centers.is_empty() || scales.is_empty() {
        return Err(Error::Domain("doubling estimate needs nonempty grids".into()));
    }
    if scales.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("doubling scales must be positive".into()));
    }
    let mut rho = 0.0f64;
    for &c in centers {
        for &r in scales {
            let inner = weight.mass(c - r, c + r);
            let outer = weight.mass(c - 2.0 * r, c + 2.0 * r);
            rho = rho.max(outer / inner);
        }
    }
    Ok(rho)
}
