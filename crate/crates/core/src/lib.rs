//! Heat-flow quasiconformal extensions of weights on the line: the
//! extension `F = (U, V)` of the primitive of a weight, its complex
//! dilatation, Carleson box energies of `|μ|² dx dt / t`, and the
//! BMO/VMO/A∞ diagnostics of the weight.

pub mod analysis;
pub mod carleson;
pub mod cli;
pub mod error;
pub mod extension;
pub mod func;
pub mod kernels;
pub mod quadrature;
pub mod weights;

pub use error::{Error, Result};
pub use extension::{beltrami, derivative_matrix, extension_point, heat_solution, ExtensionSample, HeatSolution};
pub use func::{Breakpoint, FnHandle, RealFn};
pub use kernels::{Kernel, ScaleKind};
pub use quadrature::{convolve_grid, convolve_point, QuadratureConfig, QuadratureResult};
pub use weights::{Weight, WeightSpec};
