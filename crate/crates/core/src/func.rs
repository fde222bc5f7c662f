//! Real functions of one variable as seen by the integrators.

/// A point where an integrand stops being smooth.
///
/// `grade == 1` is a plain jump or kink: panels are split there and
/// nothing else. `grade > 1` marks an integrable algebraic or logarithmic
/// singularity; panels touching it are integrated after the substitution
/// `z = z0 ± h v^grade`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub at: f64,
    pub grade: u32,
}

impl Breakpoint {
    pub fn jump(at: f64) -> Self {
        Self { at, grade: 1 }
    }

    pub fn singular(at: f64, grade: u32) -> Self {
        Self {
            at,
            grade: grade.max(1),
        }
    }
}

pub trait RealFn: Sync {
    fn eval(&self, x: f64) -> f64;

    /// Non-smooth points of the function.
    fn breakpoints(&self) -> Vec<Breakpoint> {
        Vec::new()
    }

    /// Exact `∫_a^b`, when a closed form is known.
    fn integral(&self, _a: f64, _b: f64) -> Option<f64> {
        None
    }
}

/// Wraps a closure (plus optional breakpoints) as a [`RealFn`].
pub struct FnHandle<F> {
    f: F,
    breakpoints: Vec<Breakpoint>,
}

impl<F: Fn(f64) -> f64 + Sync> FnHandle<F> {
    pub fn new(f: F) -> Self {
        Self {
            f,
            breakpoints: Vec::new(),
        }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<Breakpoint>) -> Self {
        self.breakpoints = breakpoints;
        self
    }
}

impl<F: Fn(f64) -> f64 + Sync> RealFn for FnHandle<F> {
    fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn breakpoints(&self) -> Vec<Breakpoint> {
        self.breakpoints.clone()
    }
}

impl<T: RealFn + ?Sized> RealFn for &T {
    fn eval(&self, x: f64) -> f64 {
        (**self).eval(x)
    }

    fn breakpoints(&self) -> Vec<Breakpoint> {
        (**self).breakpoints()
    }

    fn integral(&self, a: f64, b: f64) -> Option<f64> {
        (**self).integral(a, b)
    }
}
