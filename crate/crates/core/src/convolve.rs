//! Zero-padded convolution of grid fields with radial kernels.
//!
//! The spectral backend embeds the field in a grid with twice as many cells
//! per axis, so the circular convolution computed by the FFT equals the linear
//! convolution of the zero-extended field. The direct backend evaluates the
//! same sum cell by cell and serves as the reference.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::kernel::Kernel;

/// Kernel mass beyond the doubled grid above this fraction is reported.
pub const TRUNCATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Spectral,
    Direct,
}

/// A kernel prepared for one grid: the kernel sampled on the doubled grid and
/// its discrete Fourier transform.
pub struct Convolver {
    spec: GridSpec,
    padded: usize,
    /// Kernel sampled at integer cell offsets, laid out on the doubled grid.
    samples: Vec<f64>,
    transform: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    tail_fraction: f64,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver")
            .field("spec", &self.spec)
            .field("tail_fraction", &self.tail_fraction)
            .finish_non_exhaustive()
    }
}

impl Convolver {
    pub fn new(kernel: &Kernel, spec: GridSpec) -> Self {
        let n = spec.cells_per_axis();
        let m = 2 * n;
        let dim = spec.dim();
        let h = spec.cell_size();
        let total = m.pow(dim as u32);

        let mut samples = vec![0.0; total];
        for (index, slot) in samples.iter_mut().enumerate() {
            let mut rest = index;
            let mut r2 = 0.0;
            for _ in 0..dim {
                let k = rest % m;
                rest /= m;
                let offset = if k < n { k as f64 } else { k as f64 - m as f64 };
                r2 += (offset * h) * (offset * h);
            }
            *slot = kernel.eval_sq(r2);
        }

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let mut transform: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut transform, dim, m, &forward);

        Convolver {
            spec,
            padded: m,
            samples,
            transform,
            forward,
            inverse,
            tail_fraction: kernel.tail_fraction(dim, 2.0 * spec.half_width()),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Fraction of kernel mass outside the ball of radius `2W`, the largest
    /// offset the grid can realize.
    pub fn tail_fraction(&self) -> f64 {
        self.tail_fraction
    }

    pub fn truncation_warning(&self) -> Option<String> {
        (self.tail_fraction > TRUNCATION_TOLERANCE).then(|| {
            format!(
                "kernel tail mass fraction {:.3e} lies beyond the grid reach of {}",
                self.tail_fraction,
                2.0 * self.spec.half_width()
            )
        })
    }

    pub fn convolve(&self, psi: &ScalarField, backend: Backend) -> Result<ScalarField> {
        if psi.spec() != &self.spec {
            return Err(Error::GridMismatch {
                expected: self.spec.to_string(),
                found: psi.spec().to_string(),
            });
        }
        let values = match backend {
            Backend::Spectral => self.spectral(psi),
            Backend::Direct => self.direct(psi),
        };
        ScalarField::from_values(self.spec, values, psi.time())
    }

    fn spectral(&self, psi: &ScalarField) -> Vec<f64> {
        let dim = self.spec.dim();
        let n = self.spec.cells_per_axis();
        let m = self.padded;
        let mut buffer = vec![Complex64::new(0.0, 0.0); self.transform.len()];
        for (index, &v) in psi.values().iter().enumerate() {
            if v != 0.0 {
                buffer[padded_index(&self.spec, index, m)] = Complex64::new(v, 0.0);
            }
        }
        fft_nd(&mut buffer, dim, m, &self.forward);
        for (b, k) in buffer.iter_mut().zip(&self.transform) {
            *b *= k;
        }
        fft_nd(&mut buffer, dim, m, &self.inverse);
        let scale = self.spec.cell_volume() / self.transform.len() as f64;
        (0..n.pow(dim as u32))
            .map(|index| buffer[padded_index(&self.spec, index, m)].re * scale)
            .collect()
    }

    fn direct(&self, psi: &ScalarField) -> Vec<f64> {
        let spec = &self.spec;
        let m = self.padded;
        let dim = spec.dim();
        let support: Vec<([usize; 3], f64)> = psi
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (spec.unravel(j), *v))
            .collect();
        let cell_volume = spec.cell_volume();
        (0..spec.len())
            .into_par_iter()
            .map(|i| {
                let target = spec.unravel(i);
                let mut acc = 0.0;
                for (source, v) in &support {
                    let mut k = 0;
                    for axis in 0..dim {
                        let diff = (target[axis] + m - source[axis]) % m;
                        k = k * m + diff;
                    }
                    acc += v * self.samples[k];
                }
                acc * cell_volume
            })
            .collect()
    }
}

/// Convolves with a freshly prepared kernel transform.
pub fn convolve(psi: &ScalarField, kernel: &Kernel, backend: Backend) -> Result<ScalarField> {
    Convolver::new(kernel, *psi.spec()).convolve(psi, backend)
}

fn padded_index(spec: &GridSpec, index: usize, m: usize) -> usize {
    let multi = spec.unravel(index);
    (0..spec.dim()).fold(0, |acc, axis| acc * m + multi[axis])
}

/// In-place multidimensional FFT over a row-major cube with side `m`.
fn fft_nd(buffer: &mut [Complex64], dim: usize, m: usize, fft: &Arc<dyn Fft<f64>>) {
    // Last axis: contiguous lines.
    fft.process(buffer);
    if dim == 1 {
        return;
    }
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..dim - 1 {
        let stride = m.pow((dim - 1 - axis) as u32);
        let block = stride * m;
        for outer in (0..buffer.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = buffer[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    buffer[base + k * stride] = *v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(spec: GridSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..spec.len()).map(|_| rng.random::<f64>()).collect();
        ScalarField::from_values(spec, values, 0).unwrap()
    }

    /// Textbook double sum over cell centers, independent of the offset table.
    fn brute_force(psi: &ScalarField, kernel: &Kernel) -> Vec<f64> {
        let spec = psi.spec();
        (0..spec.len())
            .map(|i| {
                let xi = spec.center(i);
                let sum: f64 = (0..spec.len())
                    .map(|j| {
                        let xj = spec.center(j);
                        psi.values()[j] * kernel.eval(crate::grid::dist(&xi, &xj))
                    })
                    .sum();
                sum * spec.cell_volume()
            })
            .collect()
    }

    #[test]
    fn zero_in_zero_out() {
        let spec = GridSpec::new(2, 16, 2.0).unwrap();
        let f = convolve(&ScalarField::zeros(spec), &Kernel::gaussian(0.5).unwrap(), Backend::Spectral)
            .unwrap();
        assert!(f.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn both_backends_match_brute_force() {
        let kernel = Kernel::gaussian(0.4).unwrap();
        for (dim, n) in [(1, 32), (2, 16), (3, 8)] {
            let spec = GridSpec::new(dim, n, 1.5).unwrap();
            let psi = random_field(spec, 11 + dim as u64);
            let oracle = brute_force(&psi, &kernel);
            let max = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for backend in [Backend::Spectral, Backend::Direct] {
                let f = convolve(&psi, &kernel, backend).unwrap();
                let err = f
                    .values()
                    .iter()
                    .zip(&oracle)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(err <= 1e-10 * max, "d={dim} {backend:?}: {err}");
            }
        }
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let kernel = Kernel::gaussian(0.4).unwrap();
        let conv = Convolver::new(&kernel, GridSpec::new(2, 16, 1.0).unwrap());
        let other = ScalarField::zeros(GridSpec::new(2, 16, 2.0).unwrap());
        assert!(matches!(
            conv.convolve(&other, Backend::Spectral),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn wide_kernel_is_flagged_as_truncated() {
        let spec = GridSpec::new(2, 16, 1.0).unwrap();
        assert!(Convolver::new(&Kernel::gaussian(0.1).unwrap(), spec)
            .truncation_warning()
            .is_none());
        assert!(Convolver::new(&Kernel::gaussian(2.0).unwrap(), spec)
            .truncation_warning()
            .is_some());
    }

    #[test]
    fn output_is_not_clamped() {
        let spec = GridSpec::new(1, 32, 4.0).unwrap();
        let psi = ScalarField::from_fn(spec, |_| 1.0);
        let f = convolve(&psi, &Kernel::gaussian(1.0).unwrap(), Backend::Spectral).unwrap();
        // The interior value approaches sqrt(2π) ≈ 2.5.
        assert!(f.values()[16] > 2.0);
    }
}
