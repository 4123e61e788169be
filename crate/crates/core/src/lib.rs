//! Vortices and gravitating vortices on the flat torus and the round sphere.
//!
//! Conventions shared by every module:
//! - each surface has area 2π and Gaussian curvature χ (2 on the sphere, 0 on the torus);
//! - `Δ` is the nonnegative Laplace–Beltrami operator;
//! - the hermitian metric is `h = h₀ e^{2f}` and the Kähler form `ω = (1 - Δ₀v) ω₀`;
//! - `|φ|²_{h₀}` is the Higgs norm on the background, a field on the grid.

pub mod error;
pub mod surface;
pub mod higgs;
pub mod krylov;
pub mod vortex;
pub mod futaki;
pub mod gravitating;
pub mod diagnostics;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
