//! Dense fixed-grid reference integrator.
//!
//! Composite Simpson in `z` on `[-reach, reach]` (or the kernel support),
//! split at every breakpoint. Pieces ending at a singular point use
//! `z = z0 ± h w^q` with `q` twice the breakpoint grade, which is a
//! different substitution from the adaptive path and keeps the two error
//! channels apart.

use crate::func::RealFn;
use crate::kernels::Kernel;

pub fn oracle_convolve(g: &dyn RealFn, kernel: &Kernel, length: f64, x: f64, nodes: usize, reach: f64) -> f64 {
    let half = match kernel.support {
        Some(s) => s.min(reach),
        None => reach,
    };
    // (z, grade, y) with y the exact argument of g at the cut
    let mut cuts: Vec<(f64, u32, f64)> = vec![(-half, 1, x + length * half), (half, 1, x - length * half)];
    for b in g.breakpoints() {
        let z = (x - b.at) / length;
        if z > -half && z < half {
            cuts.push((z, b.grade, b.at));
        }
    }
    for &d in &kernel.discontinuities {
        if d > -half && d < half {
            cuts.push((d, 1, x - length * d));
        }
    }
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
    cuts.dedup_by(|a, b| {
        if (a.0 - b.0).abs() < 1e-14 * (1.0 + a.0.abs()) {
            if a.1 > b.1 {
                b.2 = a.2;
            }
            b.1 = b.1.max(a.1);
            true
        } else {
            false
        }
    });

    let f = |z: f64| g.eval(x - length * z) * kernel.eval_profile(z);
    // g and γ at z0 + dz, with g's argument formed from the exact anchor
    let near = |z0: f64, y0: f64| move |dz: f64| g.eval(y0 - length * dz) * kernel.eval_profile(z0 + dz);
    let span = 2.0 * half;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, ga, ya) = w[0];
        let (b, gb, yb) = w[1];
        if b <= a {
            continue;
        }
        let share = ((nodes as f64) * (b - a) / span).round() as usize;
        let n = (share.max(64) + 1) & !1;
        let sa = ga > 1;
        let sb = gb > 1;
        total += match (sa, sb) {
            (false, false) => simpson(&f, a, b, n),
            (true, false) => graded(&near(a, ya), b - a, 2 * ga, n),
            (false, true) => graded(&near(b, yb), a - b, 2 * gb, n),
            (true, true) => {
                let m = 0.5 * (a + b);
                graded(&near(a, ya), m - a, 2 * ga, n / 2 + 2) + graded(&near(b, yb), m - b, 2 * gb, n / 2 + 2)
            }
        };
    }
    total
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    // one-sided values at the ends, which may sit on a jump
    let d = 1e-12 * (b - a);
    let mut acc = Neumaier::default();
    acc.add(f(a + d));
    acc.add(f(b - d));
    for i in 1..n {
        let c = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc.add(c * f(a + h * i as f64));
    }
    acc.total() * h / 3.0
}

/// Compensated sum; millions of nodes otherwise leave ~1e-14 of
/// roundoff on integrals that cancel to zero.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `∫ f(dz)` for `dz` between 0 and `h` (either orientation) with `dz = h w^q`.
fn graded(f: &impl Fn(f64) -> f64, h: f64, q: u32, n: usize) -> f64 {
    let n = (n + 1) & !1;
    let q = q as i32;
    let g = |w: f64| {
        // the Jacobian vanishes at w = 0; skip the singular point itself
        if w < 1e-9 {
            return 0.0;
        }
        let jac = q as f64 * w.powi(q - 1);
        f(h * w.powi(q)) * jac
    };
    simpson(&g, 0.0, 1.0, n) * h.abs()
}
