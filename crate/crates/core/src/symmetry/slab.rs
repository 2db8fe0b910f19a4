use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{Hyperplane, ReflectedReader, ReflectionTest};
use crate::error::{Error, Result};
use crate::grid::{dot, Point, ScalarField};

/// Bisection refines the coarse scan to `step / 2^BISECTIONS`.
const BISECTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabMeasurement {
    pub direction: Point,
    /// `a_t(u)`: every hyperplane `⟨x, u⟩ = c` with `c` below it is reflecting.
    pub lower: f64,
    /// `a_t(-u)`.
    pub lower_opposite: f64,
    /// `-a_t(-u) - a_t(u)`, unclamped.
    pub width: f64,
    pub tol: f64,
    pub step: f64,
    /// The field has no support; offsets and width are zero.
    pub empty: bool,
}

impl SlabMeasurement {
    /// Width clamped at zero; the raw width may dip below zero by up to the
    /// search resolution plus the read reach.
    pub fn reported_width(&self) -> f64 {
        self.width.max(0.0)
    }

    /// Slab midpoint along the direction, `(a_t(u) - a_t(-u)) / 2`.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower - self.lower_opposite)
    }
}

/// Cells with positive value, with projections sorted along one direction.
struct SortedSupport {
    points: Vec<(f64, Point, f64)>,
}

impl SortedSupport {
    fn new(support: &[(Point, f64)], u: &Point) -> Self {
        let mut points: Vec<(f64, Point, f64)> =
            support.iter().map(|(x, v)| (dot(x, u), *x, *v)).collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        SortedSupport { points }
    }

    fn passes(&self, reader: &ReflectedReader, h: &Hyperplane, tol: f64) -> bool {
        let end = self.points.partition_point(|(p, _, _)| *p < h.offset());
        self.points[..end]
            .iter()
            .filter(|(_, _, v)| *v > tol)
            .all(|(_, x, v)| reader.reaches(&h.reflect(x), v - tol))
    }
}

fn support_of(psi: &ScalarField) -> Vec<(Point, f64)> {
    let spec = psi.spec();
    psi.values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (spec.center(i), *v))
        .collect()
}

/// `a_t(u)`: scan upward from below the support in steps of `step`, then
/// bisect between the last passing and first failing offsets.
fn lower_offset(
    sorted: &SortedSupport,
    reader: &ReflectedReader,
    u: &Point,
    test: &ReflectionTest,
    step: f64,
    limit: f64,
) -> f64 {
    let check = |a: f64| sorted.passes(reader, &Hyperplane { normal: *u, offset: a }, test.tol);
    let mut pass = sorted.points[0].0;
    let mut fail = None;
    while pass < limit {
        let next = pass + step;
        if check(next) {
            pass = next;
        } else {
            fail = Some(next);
            break;
        }
    }
    let Some(mut fail) = fail else {
        return pass;
    };
    for _ in 0..BISECTIONS {
        let mid = 0.5 * (pass + fail);
        if check(mid) {
            pass = mid;
        } else {
            fail = mid;
        }
    }
    pass
}

/// Minimal reflecting-slab width along `u`.
pub fn slab_width(psi: &ScalarField, u: &Point, test: &ReflectionTest, step: f64) -> SlabMeasurement {
    let support = support_of(psi);
    let reader = ReflectedReader::new(psi, test.reach);
    slab_with(&support, &reader, psi, u, test, step)
}

fn slab_with(
    support: &[(Point, f64)],
    reader: &ReflectedReader,
    psi: &ScalarField,
    u: &Point,
    test: &ReflectionTest,
    step: f64,
) -> SlabMeasurement {
    let len = crate::grid::norm(u);
    let u = u.map(|c| c / len);
    if support.is_empty() {
        return SlabMeasurement {
            direction: u,
            lower: 0.0,
            lower_opposite: 0.0,
            width: 0.0,
            tol: test.tol,
            step,
            empty: true,
        };
    }
    let spec = psi.spec();
    let limit = 2.0 * spec.half_width() * (spec.dim() as f64).sqrt() + step;
    let neg = u.map(|c| -c);
    let lower = lower_offset(&SortedSupport::new(support, &u), reader, &u, test, step, limit);
    let lower_opposite =
        lower_offset(&SortedSupport::new(support, &neg), reader, &neg, test, step, limit);
    SlabMeasurement {
        direction: u,
        lower,
        lower_opposite,
        width: -lower_opposite - lower,
        tol: test.tol,
        step,
        empty: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxSlab {
    /// Largest width over the sampled directions; a lower bound on the
    /// supremum over all directions.
    pub width: f64,
    pub direction: Point,
    pub per_direction: Vec<SlabMeasurement>,
}

impl MaxSlab {
    pub fn argmax(&self) -> &SlabMeasurement {
        self.per_direction
            .iter()
            .find(|m| m.direction == self.direction)
            .expect("argmax is one of the measurements")
    }
}

pub fn max_slab_width(
    psi: &ScalarField,
    directions: &[Point],
    test: &ReflectionTest,
    step: f64,
) -> Result<MaxSlab> {
    if directions.is_empty() {
        return Err(Error::config("directions", "at least one direction is required"));
    }
    let support = support_of(psi);
    let reader = ReflectedReader::new(psi, test.reach);
    let per_direction: Vec<SlabMeasurement> = directions
        .par_iter()
        .map(|u| slab_with(&support, &reader, psi, u, test, step))
        .collect();
    let best = per_direction
        .iter()
        .fold(None::<&SlabMeasurement>, |best, m| match best {
            Some(b) if b.reported_width() >= m.reported_width() => Some(b),
            _ => Some(m),
        })
        .expect("nonempty");
    Ok(MaxSlab {
        width: best.reported_width(),
        direction: best.direction,
        per_direction,
    })
}

/// Default direction sets: `±e₁` in 1D, 64 angles evenly spaced on `[0, π)`
/// in 2D, and a 128-point Fibonacci sphere in 3D.
pub fn default_directions(dim: usize) -> Vec<Point> {
    match dim {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => circle_directions(64),
        3 => fibonacci_sphere(128),
        _ => panic!("dimension {dim} unsupported"),
    }
}

pub fn circle_directions(count: usize) -> Vec<Point> {
    (0..count)
        .map(|k| {
            let a = PI * k as f64 / count as f64;
            [a.cos(), a.sin(), 0.0]
        })
        .collect()
}

pub fn fibonacci_sphere(count: usize) -> Vec<Point> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Angles describing a direction: `[atan2(y, x)]` in 2D, `[polar, azimuth]`
/// in 3D, nothing in 1D beyond the sign of the axis.
pub fn direction_angles(u: &Point, dim: usize) -> Vec<f64> {
    match dim {
        1 => vec![if u[0] >= 0.0 { 0.0 } else { PI }],
        2 => vec![u[1].atan2(u[0])],
        _ => vec![u[2].clamp(-1.0, 1.0).acos(), u[1].atan2(u[0])],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterEstimate {
    pub center: Point,
    /// Euclidean norm of the least-squares residual.
    pub residual: f64,
}

/// Least-squares point satisfying `⟨p, u⟩ = (a_t(u) - a_t(-u)) / 2` for every
/// measured direction.
pub fn center_estimate(measurements: &[SlabMeasurement], dim: usize) -> Result<CenterEstimate> {
    let rows: Vec<&SlabMeasurement> = measurements.iter().filter(|m| !m.empty).collect();
    if rows.is_empty() {
        return Err(Error::RankDeficient { dim });
    }
    let a = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].direction[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|m| m.midpoint()));
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if svd.singular_values.len() < dim || !(min_sv > 1e-9 * max_sv) {
        return Err(Error::RankDeficient { dim });
    }
    let x = svd.solve(&b, 1e-12).map_err(|_| Error::RankDeficient { dim })?;
    let residual = (&a * &x - &b).norm();
    let mut center = [0.0; 3];
    for (c, v) in center.iter_mut().zip(x.iter()) {
        *c = *v;
    }
    Ok(CenterEstimate { center, residual })
}

/// Sanity check on a measured slab: the mass inside it is at least
/// `mass / (⌈2R/ℓ⌉ + 1)` minus `slack`, for support inside `B(0, R)`.
pub fn slab_mass_bound_holds(psi: &ScalarField, slab: &SlabMeasurement, radius: f64, slack: f64) -> bool {
    let width = slab.reported_width();
    if slab.empty || width <= 0.0 {
        return true;
    }
    let spec = psi.spec();
    let lo = slab.lower;
    let hi = -slab.lower_opposite;
    let inside: f64 = spec
        .centers()
        .zip(psi.values())
        .filter(|(x, _)| {
            let p = dot(x, &slab.direction);
            p >= lo && p <= hi
        })
        .map(|(_, v)| *v)
        .sum::<f64>()
        * spec.cell_volume();
    let pieces = (2.0 * radius / width).ceil() + 1.0;
    inside >= psi.mass() / pieces - slack
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{dist, GridSpec};
    use crate::symmetry::is_reflecting;

    fn union(spec: GridSpec, balls: &[(Point, f64)]) -> ScalarField {
        let balls = balls.to_vec();
        ScalarField::from_fn(spec, move |x| {
            if balls.iter().any(|(c, r)| dist(x, c) < *r) {
                1.0
            } else {
                0.0
            }
        })
    }

    fn spec() -> GridSpec {
        GridSpec::new(2, 128, 4.0).unwrap()
    }

    #[test]
    fn ball_has_negligible_slabs_in_every_direction() {
        let spec = spec();
        let h = spec.cell_size();
        let psi = union(spec, &[([0.3, -0.2, 0.0], 1.0)]);
        let test = ReflectionTest::for_field(&psi);
        let max = max_slab_width(&psi, &default_directions(2), &test, h).unwrap();
        assert!(max.width <= 2.0 * h, "{}", max.width);
        for m in &max.per_direction {
            assert!(m.width >= -2.0 * h, "{m:?}");
        }
    }

    #[test]
    fn square_is_mirror_symmetric() {
        let spec = spec();
        let h = spec.cell_size();
        let psi = ScalarField::from_fn(spec, |x| {
            if x[0].abs() < 1.0 && x[1].abs() < 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let m = slab_width(&psi, &[1.0, 0.0, 0.0], &ReflectionTest::for_field(&psi), h);
        assert!(m.reported_width() <= 2.0 * h, "{m:?}");
    }

    #[test]
    fn empty_field_is_flagged() {
        let psi = ScalarField::zeros(spec());
        let m = slab_width(&psi, &[1.0, 0.0, 0.0], &ReflectionTest::for_field(&psi), 0.1);
        assert!(m.empty);
        assert_eq!(m.width, 0.0);
    }

    #[test]
    fn two_balls_match_exhaustive_offset_scan() {
        let spec = spec();
        let h = spec.cell_size();
        let psi = union(spec, &[([0.0, 0.0, 0.0], 1.0), ([3.0, 0.0, 0.0], 0.5)]);
        let test = ReflectionTest::for_field(&psi);
        let u = [1.0, 0.0, 0.0];
        let m = slab_width(&psi, &u, &test, h);

        // Oracle: scan every offset at resolution h/4 with the full test, and
        // take the first failure.
        let oracle = |normal: Point| {
            let mut a = -4.0;
            loop {
                let plane = Hyperplane::new(normal, a + h / 4.0).unwrap();
                if !is_reflecting(&psi, &plane, &test).reflecting {
                    return a;
                }
                a += h / 4.0;
            }
        };
        let lower = oracle(u);
        let lower_opposite = oracle([-1.0, 0.0, 0.0]);
        assert!((m.lower - lower).abs() <= h / 4.0 + 1e-12, "{} vs {lower}", m.lower);
        assert!((m.lower_opposite - lower_opposite).abs() <= h / 4.0 + 1e-12);
        // The slab lies between the mirror line of the big ball (x = 0) and
        // that of the pair; the asymmetry is along e₁.
        assert!(m.lower > -0.1 && m.lower < 0.5, "{m:?}");
        assert!(-m.lower_opposite > 0.5 && -m.lower_opposite < 3.1, "{m:?}");
    }

    #[test]
    fn axial_asymmetry_peaks_along_the_axis() {
        let spec = spec();
        let h = spec.cell_size();
        let psi = union(spec, &[([0.0, 0.0, 0.0], 1.0), ([2.5, 0.0, 0.0], 0.6)]);
        let test = ReflectionTest::for_field(&psi);
        let sampled = max_slab_width(&psi, &default_directions(2), &test, h).unwrap();
        let along = slab_width(&psi, &[1.0, 0.0, 0.0], &test, h);
        // Staircase boundaries let neighbouring directions gain a fraction of a cell.
        assert!(
            (sampled.width - along.reported_width()).abs() <= h,
            "{} at {:?} vs {}",
            sampled.width,
            sampled.direction,
            along.reported_width()
        );
        assert!(sampled.direction[0].abs() >= (0.2f64).cos());
        let dense = max_slab_width(&psi, &circle_directions(512), &test, h).unwrap();
        assert!((dense.width - sampled.width).abs() <= h, "{} vs {}", dense.width, sampled.width);
    }

    #[test]
    fn center_of_a_ball() {
        let spec = spec();
        let h = spec.cell_size();
        let c = [0.4, -0.7, 0.0];
        let psi = union(spec, &[(c, 1.0)]);
        let test = ReflectionTest::for_field(&psi);
        let max = max_slab_width(&psi, &default_directions(2), &test, h).unwrap();
        let est = center_estimate(&max.per_direction, 2).unwrap();
        assert!(dist(&est.center, &c) <= 2.0 * h, "{:?}", est.center);
    }

    #[test]
    fn center_of_two_balls_is_on_the_axis_and_translates() {
        let spec = spec();
        let h = spec.cell_size();
        let test_dirs = default_directions(2);
        let base = union(spec, &[([-1.0, 0.0, 0.0], 1.0), ([1.5, 0.0, 0.0], 0.6)]);
        let shift = [0.25, 0.5, 0.0];
        let moved = union(spec, &[([-0.75, 0.5, 0.0], 1.0), ([1.75, 0.5, 0.0], 0.6)]);
        let p = |psi: &ScalarField| {
            let test = ReflectionTest::for_field(psi);
            let max = max_slab_width(psi, &test_dirs, &test, h).unwrap();
            center_estimate(&max.per_direction, 2).unwrap().center
        };
        let p0 = p(&base);
        let p1 = p(&moved);
        assert!(p0[1].abs() <= 2.0 * h, "{p0:?}");
        let expected = [p0[0] + shift[0], p0[1] + shift[1], 0.0];
        assert!(dist(&p1, &expected) <= 2.0 * h, "{p1:?} vs {expected:?}");
    }

    #[test]
    fn parallel_directions_are_rank_deficient() {
        let spec = spec();
        let psi = union(spec, &[([0.0; 3], 1.0)]);
        let test = ReflectionTest::for_field(&psi);
        let dirs = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
        let max = max_slab_width(&psi, &dirs, &test, spec.cell_size()).unwrap();
        assert!(matches!(center_estimate(&max.per_direction, 2), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn fibonacci_directions_are_unit_and_spread() {
        let dirs = fibonacci_sphere(128);
        assert!(dirs.iter().all(|u| (crate::grid::norm(u) - 1.0).abs() < 1e-12));
        let mean_z: f64 = dirs.iter().map(|u| u[2]).sum::<f64>() / 128.0;
        assert!(mean_z.abs() < 1e-12);
    }

    #[test]
    fn measured_slab_holds_its_mass_share() {
        let spec = spec();
        let h = spec.cell_size();
        let psi = union(spec, &[([0.0, 0.0, 0.0], 1.0), ([2.5, 0.0, 0.0], 0.6)]);
        let test = ReflectionTest::for_field(&psi);
        let max = max_slab_width(&psi, &default_directions(2), &test, h).unwrap();
        for m in &max.per_direction {
            assert!(slab_mass_bound_holds(&psi, m, 3.2, 4.0 * h));
        }
    }
}
