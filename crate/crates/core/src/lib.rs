//! Spectral mean estimation for noisy, point-sampled closed curves.
//!
//! Contours are observed at `n` equally spaced parameter values on the circle
//! and modelled as a common curve plus a stationary cyclic Gaussian process.
//! Inference happens in the Fourier domain: per-contour Riemann coefficients
//! are averaged into a spectral mean, per-frequency noise variances are
//! estimated alongside, and the mean is synthesized back into a curve.
//! Mis-parametrised contours are registered first by a root shift and a
//! circle diffeomorphism obtained as the time-one flow of a trigonometric
//! velocity field.
//!
//! ```
//! use curvespec::{estimator, spectral::Grid, ContourStack, Vec2};
//!
//! let grid = Grid::standard(31).unwrap();
//! let circle: Vec<Vec2> = grid.theta().iter().map(|&t| Vec2::new(t.cos(), t.sin())).collect();
//! let stack = ContourStack::new(grid, vec![circle.clone(), circle]).unwrap();
//! let fit = estimator::fit(&stack, 5).unwrap();
//! let p = estimator::estimate_curve(&fit, 0.0);
//! assert!((p.x - 1.0).abs() < 1e-12 && p.y.abs() < 1e-12);
//! ```

pub mod align;
pub mod diffeo;
mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod noise;
pub mod plot;
pub mod quadrature;
pub mod rng;
pub mod spectral;
mod vec2;

pub use error::{Error, Result};
pub use estimator::ContourStack;
pub use spectral::{ContourSamples, FourierCoeffs, Grid};
pub use vec2::Vec2;

/// Schema tag written into every serialized artifact.
pub const SCHEMA_VERSION: &str = "curvespec/1";
