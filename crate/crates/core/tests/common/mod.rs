#![allow(dead_code)]

use std::f64::consts::PI;

/// Fourier model of `ω(x) = exp(sin x)`. Convolution with a dilated
/// Gaussian-family kernel multiplies each harmonic by the kernel's Fourier
/// transform, which gives every quantity in closed form.
pub struct ExpSineModel {
    a0: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl ExpSineModel {
    pub fn new() -> Self {
        let n = 128;
        let harmonics = 30;
        let nodes: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let w: Vec<f64> = nodes.iter().map(|x| x.sin().exp()).collect();
        let a0 = w.iter().sum::<f64>() / n as f64;
        let coeff = |k: usize, f: fn(f64) -> f64| {
            2.0 / n as f64 * nodes.iter().zip(&w).map(|(x, v)| v * f(k as f64 * x)).sum::<f64>()
        };
        Self {
            a0,
            cos: (1..=harmonics).map(|k| coeff(k, f64::cos)).collect(),
            sin: (1..=harmonics).map(|k| coeff(k, f64::sin)).collect(),
        }
    }

    pub fn weight(&self, x: f64) -> f64 {
        self.a0
            + (1..=self.cos.len())
                .map(|k| self.cos[k - 1] * (k as f64 * x).cos() + self.sin[k - 1] * (k as f64 * x).sin())
                .sum::<f64>()
    }

    /// `ω ∗ (φ, ψ, x²φ, Φ″)` at length `t`.
    pub fn moments(&self, x: f64, t: f64) -> [f64; 4] {
        let mut c = [self.a0, 0.0, 0.5 * self.a0, 0.0];
        for k in 1..=self.cos.len() {
            let n = k as f64;
            let xi2 = n * n * t * t;
            let g = (-0.25 * xi2).exp();
            let (s, co) = (n * x).sin_cos();
            let even = self.cos[k - 1] * co + self.sin[k - 1] * s;
            let odd = -self.cos[k - 1] * s + self.sin[k - 1] * co;
            c[0] += g * even;
            c[1] += n * t * g * odd;
            c[2] += (0.5 - 0.25 * xi2) * g * even;
            c[3] += -xi2 * g * even;
        }
        c
    }

    /// `(U_x, U_t, V_x, V_t, U_x - V_t)`.
    pub fn derivatives(&self, x: f64, t: f64) -> [f64; 5] {
        let c = self.moments(x, t);
        [c[0], 0.5 * c[1], c[1], 2.0 * c[2], c[0] - 2.0 * c[2]]
    }

    pub fn mu_sq(&self, x: f64, t: f64) -> f64 {
        let [ux, ut, vx, vt, diff] = self.derivatives(x, t);
        let (dr, di) = (ux + vt, vx - ut);
        let (nr, ni) = (diff, vx + ut);
        (nr * nr + ni * ni) / (dr * dr + di * di)
    }

    /// `(U, V)` with the primitive normalised to vanish at 0.
    pub fn extension(&self, x: f64, t: f64) -> (f64, f64) {
        let mut u = self.a0 * x;
        for k in 1..=self.cos.len() {
            let n = k as f64;
            let g = (-0.25 * n * n * t * t).exp();
            let (s, c) = (n * x).sin_cos();
            // the constant of integration passes through the kernel unchanged
            u += g * (self.cos[k - 1] * s - self.sin[k - 1] * c) / n + self.sin[k - 1] / n;
        }
        (u, t * self.moments(x, t)[0])
    }

    /// `u(x, s)` for the heat semigroup `∂_s u = ¼ ∂²_x u`.
    pub fn heat(&self, x: f64, s: f64) -> [f64; 3] {
        let mut u = [self.a0, 0.0, 0.0];
        for k in 1..=self.cos.len() {
            let n = k as f64;
            let g = (-0.25 * n * n * s).exp();
            let (sn, c) = (n * x).sin_cos();
            let even = self.cos[k - 1] * c + self.sin[k - 1] * sn;
            let odd = -self.cos[k - 1] * sn + self.sin[k - 1] * c;
            u[0] += g * even;
            u[1] += n * g * odd;
            u[2] += -n * n * g * even;
        }
        u
    }
}

/// `(1/t)∫_{|x-x0|<t}∫_0^t |μ|² ds/s dx` by the midpoint rule on an
/// `n × n` grid in `(x, ln s)`, with `s` down to `1e-8 t`.
pub fn brute_force_box(model: &ExpSineModel, x0: f64, t: f64, n: usize) -> f64 {
    let hx = 2.0 * t / n as f64;
    let (l0, l1) = ((1e-8 * t).ln(), t.ln());
    let hl = (l1 - l0) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = x0 - t + (i as f64 + 0.5) * hx;
        for j in 0..n {
            let s = (l0 + (j as f64 + 0.5) * hl).exp();
            total += model.mu_sq(x, s);
        }
    }
    total * hx * hl / t
}
