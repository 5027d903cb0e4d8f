//! Partial-wave spectral toolkit for the free and perturbed wave and Dirac
//! equations on R^n.
//!
//! Fields are expanded in angular channels (spherical harmonics for scalars,
//! spinor harmonics for Dirac fields); on each channel the Fourier transform
//! becomes a Hankel transform, and evolution reduces to a radial problem.
//! On top of that sit discrete versions of the endpoint Strichartz, smoothing
//! and energy norms, a split-step solver for the cubic Dirac equation, and a
//! harness that measures norm ratios over random ensembles.

pub mod error;
pub mod nld;
pub mod norms;
pub mod propagators;
pub mod quadrature;
pub mod radial;
pub mod specfun;
pub mod sphere;
pub mod verify;

pub use error::{Error, Result};
pub use nld::{CubicSpec, NldConfig, NldSolver, PotentialSpec};
pub use norms::{Frame, NormConfig, NormReport, NormStream, PartialWave, Trajectory};
pub use propagators::{ChannelIndex, ChannelSpectrum, DiracChannelState, DiracSpectrum};
pub use radial::{AngularSymbol, RadialGrid, RadialProfile, Side, WeightSpec};
pub use sphere::{DiracChannelIndex, ScalarCoeffs, SphereGrid, SpinorField};
pub use verify::{EnsembleSpec, RatioStudy};

pub use num_complex::Complex64;
