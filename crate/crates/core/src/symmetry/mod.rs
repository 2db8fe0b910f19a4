//! Reflection-symmetry measurements on grid fields: reflections across
//! oriented hyperplanes, reflecting-hyperplane tests, reflecting-slab widths,
//! the symmetrization center, and level-set deviation from balls.

mod deviation;
mod slab;

pub use deviation::{level_set_ball_deviation, sandwich_epsilon, BallDeviation};
pub use slab::{
    center_estimate, circle_directions, default_directions, direction_angles, fibonacci_sphere,
    max_slab_width, slab_mass_bound_holds,
    slab_width, CenterEstimate, MaxSlab, SlabMeasurement,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{dot, norm, Point, ScalarField};

/// Oriented hyperplane `{x : ⟨x, u⟩ = a}` with negative side `⟨x, u⟩ < a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperplane {
    normal: Point,
    offset: f64,
}

impl Hyperplane {
    /// Normalizes `normal`; it must be nonzero and finite.
    pub fn new(normal: Point, offset: f64) -> Result<Self> {
        let len = norm(&normal);
        if !(len.is_finite() && len > 0.0) || !offset.is_finite() {
            return Err(Error::config("hyperplane", "normal must be nonzero and finite"));
        }
        Ok(Hyperplane {
            normal: normal.map(|c| c / len),
            offset,
        })
    }

    /// Hyperplane with the given normal passing through `point`.
    pub fn through(point: &Point, normal: Point) -> Result<Self> {
        let h = Hyperplane::new(normal, 0.0)?;
        Ok(Hyperplane {
            offset: dot(point, &h.normal),
            ..h
        })
    }

    pub fn normal(&self) -> &Point {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// The same point set with the opposite orientation.
    pub fn flipped(&self) -> Self {
        Hyperplane {
            normal: self.normal.map(|c| -c),
            offset: -self.offset,
        }
    }

    /// `⟨x, u⟩ - a`: negative on the negative side.
    #[inline]
    pub fn signed_distance(&self, x: &Point) -> f64 {
        dot(x, &self.normal) - self.offset
    }

    #[inline]
    pub fn reflect(&self, x: &Point) -> Point {
        let s = 2.0 * self.signed_distance(x);
        [
            x[0] - s * self.normal[0],
            x[1] - s * self.normal[1],
            x[2] - s * self.normal[2],
        ]
    }
}

/// `x^H = x - 2(⟨x, u⟩ - a) u`.
pub fn reflect_point(x: &Point, h: &Hyperplane) -> Point {
    h.reflect(x)
}

/// `ψ^H(x) = ψ(x^H)`, read by multilinear interpolation and clamped.
pub fn reflect_field(psi: &ScalarField, h: &Hyperplane) -> ScalarField {
    let spec = *psi.spec();
    let values = spec
        .centers()
        .map(|x| psi.interpolate(&h.reflect(&x)).clamp(0.0, 1.0))
        .collect();
    ScalarField::from_values(spec, values, psi.time()).expect("same grid")
}

/// How a reflected value is read when testing `ψ(x) ≤ ψ(x^H) + tol`.
///
/// With `reach = 0` the reflected value is the multilinear interpolant at
/// `x^H`. With `reach > 0` it is the largest of that interpolant and every
/// cell value whose center lies within `reach` of `x^H`; this makes the test
/// insensitive to the grid-scale staircase of indicator fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionTest {
    pub tol: f64,
    pub reach: f64,
}

impl ReflectionTest {
    /// Pure interpolated reads with tolerance `tol`.
    pub fn interpolated(tol: f64) -> Self {
        ReflectionTest { tol, reach: 0.0 }
    }

    /// The default for diagnostics: reach of one cell diagonal.
    pub fn for_field(psi: &ScalarField) -> Self {
        let spec = psi.spec();
        ReflectionTest {
            tol: 1e-9,
            reach: spec.cell_size() * (spec.dim() as f64).sqrt(),
        }
    }
}

/// Reads reflected values with a fixed [`ReflectionTest`].
pub(crate) struct ReflectedReader<'a> {
    psi: &'a ScalarField,
    reach: f64,
    /// Integer cell offsets that may lie within `reach`, nearest first.
    offsets: Vec<[isize; 3]>,
}

impl<'a> ReflectedReader<'a> {
    pub(crate) fn new(psi: &'a ScalarField, reach: f64) -> Self {
        let spec = psi.spec();
        let h = spec.cell_size();
        let mut offsets = Vec::new();
        if reach > 0.0 {
            let span = (reach / h + 0.5).ceil() as isize;
            let range = |axis: usize| if axis < spec.dim() { -span..=span } else { 0..=0 };
            for i in range(0) {
                for j in range(1) {
                    for k in range(2) {
                        offsets.push([i, j, k]);
                    }
                }
            }
            offsets.sort_by_key(|o| o[0] * o[0] + o[1] * o[1] + o[2] * o[2]);
        }
        ReflectedReader { psi, reach, offsets }
    }

    /// True when the reflected read at `y` is at least `needed`.
    #[inline]
    pub(crate) fn reaches(&self, y: &Point, needed: f64) -> bool {
        if self.psi.interpolate(y) >= needed {
            return true;
        }
        if self.reach <= 0.0 {
            return false;
        }
        self.neighborhood_max(y, needed) >= needed
    }

    #[inline]
    pub(crate) fn read(&self, y: &Point) -> f64 {
        let v = self.psi.interpolate(y);
        if self.reach <= 0.0 {
            v
        } else {
            v.max(self.neighborhood_max(y, f64::INFINITY))
        }
    }

    /// Largest cell value within `reach` of `y`; stops early once `stop` is met.
    fn neighborhood_max(&self, y: &Point, stop: f64) -> f64 {
        let spec = self.psi.spec();
        let h = spec.cell_size();
        let w = spec.half_width();
        let dim = spec.dim();
        let mut nearest = [0isize; 3];
        for axis in 0..dim {
            nearest[axis] = ((y[axis] + w) / h - 0.5).round() as isize;
        }
        let reach2 = self.reach * self.reach;
        let mut best = 0.0f64;
        for o in &self.offsets {
            let mut multi = [0isize; 3];
            let mut d2 = 0.0;
            for axis in 0..dim {
                multi[axis] = nearest[axis] + o[axis];
                let c = -w + (multi[axis] as f64 + 0.5) * h;
                d2 += (c - y[axis]) * (c - y[axis]);
            }
            if d2 > reach2 {
                continue;
            }
            let v = self.psi.get(multi);
            if v > best {
                best = v;
                if best >= stop {
                    break;
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    pub reflecting: bool,
    /// `h^d Σ_{x ∈ H⁻} max(0, ψ(x) - ψ(x^H) - tol)`.
    pub violation_mass: f64,
}

/// Tests `ψ(x) ≤ ψ(x^H) + tol` on every cell of the negative side.
pub fn is_reflecting(psi: &ScalarField, h: &Hyperplane, test: &ReflectionTest) -> Reflection {
    let spec = psi.spec();
    let reader = ReflectedReader::new(psi, test.reach);
    let mut violation = 0.0;
    for (i, &v) in psi.values().iter().enumerate() {
        if v <= test.tol {
            continue;
        }
        let x = spec.center(i);
        if h.signed_distance(&x) >= 0.0 {
            continue;
        }
        let excess = v - reader.read(&h.reflect(&x)) - test.tol;
        if excess > 0.0 {
            violation += excess;
        }
    }
    let violation_mass = violation * spec.cell_volume();
    Reflection {
        reflecting: violation_mass == 0.0,
        violation_mass,
    }
}

/// `Δ(H) = h^d Σ_{x ∈ H⁻} (ψ(x^H) - ψ(x))` with interpolated reads.
pub fn asymmetry_mass(psi: &ScalarField, h: &Hyperplane) -> f64 {
    let spec = psi.spec();
    let sum: f64 = spec
        .centers()
        .zip(psi.values())
        .filter(|(x, _)| h.signed_distance(x) < 0.0)
        .map(|(x, v)| psi.interpolate(&h.reflect(&x)) - v)
        .sum();
    sum * spec.cell_volume()
}

/// Largest pointwise error of reflecting the field twice across random
/// hyperplanes through the support, using interpolated reads. This is the
/// field's own interpolation tolerance.
pub fn calibrate_tolerance(psi: &ScalarField, hyperplanes: usize, seed: u64) -> f64 {
    let spec = psi.spec();
    let dim = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support: Vec<usize> = (0..spec.len()).filter(|&i| psi.values()[i] > 0.0).collect();
    if support.is_empty() {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for _ in 0..hyperplanes {
        let anchor = spec.center(support[rng.random_range(0..support.len())]);
        let mut normal = [0.0; 3];
        for c in normal.iter_mut().take(dim) {
            *c = rng.random::<f64>() - 0.5;
        }
        let Ok(h) = Hyperplane::through(&anchor, normal) else {
            continue;
        };
        // Cells whose mirror image leaves the grid read zero there and say
        // nothing about interpolation error.
        let inner = spec.half_width() - spec.cell_size();
        let twice = reflect_field(&reflect_field(psi, &h), &h);
        for (i, (a, b)) in twice.values().iter().zip(psi.values()).enumerate() {
            let y = h.reflect(&spec.center(i));
            if y[..dim].iter().all(|c| c.abs() <= inner) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}
