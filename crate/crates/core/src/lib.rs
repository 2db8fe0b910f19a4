//! Bounded activity fields on `R^d` evolved by radial-kernel convolution
//! followed by monotone sharpening, with reflection-symmetry diagnostics and
//! the discrete k-cap process on soft geometric random graphs.
//!
//! - [`grid`], [`kernel`], [`convolve`]: fields on uniform grids, radial
//!   kernels, zero-padded convolution.
//! - [`rule`], [`engine`]: sharpening rules, the volume-preserving threshold,
//!   and the evolution loop.
//! - [`symmetry`]: reflecting hyperplanes, slab widths, center estimation,
//!   ball deviation of level sets.
//! - [`graph`]: graph sampling, k-cap dynamics, and the empirical-average
//!   limit harness.

pub mod convolve;
pub mod engine;
pub mod error;
pub mod graph;
pub mod grid;
pub mod init;
pub mod kernel;
pub mod rule;
pub mod symmetry;

pub use convolve::{convolve, Backend, Convolver};
pub use engine::{Engine, RunOutcome, RunTrace, StopSpec};
pub use error::{Error, Result};
pub use grid::{GridSpec, Point, ScalarField};
pub use kernel::Kernel;
pub use rule::{apply_sharpening, volume_threshold, RuleKind, SharpeningRule, ThresholdResult};
