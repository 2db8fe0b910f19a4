//! Initial activity fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dist, Point, ScalarField};
use crate::grid::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Ball(Ball),
    UnionOfBalls { balls: Vec<Ball> },
    Rectangle { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitialCondition {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let check_point = |key: &str, p: &[f64]| {
            if p.len() != dim || p.iter().any(|c| !c.is_finite()) {
                Err(Error::config(key, format!("expected {dim} finite coordinates")))
            } else {
                Ok(())
            }
        };
        let check_ball = |b: &Ball| {
            check_point("initial.center", &b.center)?;
            if !(b.radius.is_finite() && b.radius > 0.0) {
                return Err(Error::config("initial.radius", "must be positive"));
            }
            Ok(())
        };
        match self {
            InitialCondition::Ball(b) => check_ball(b),
            InitialCondition::UnionOfBalls { balls } => {
                if balls.is_empty() {
                    return Err(Error::config("initial.balls", "needs at least one ball"));
                }
                balls.iter().try_for_each(check_ball)
            }
            InitialCondition::Rectangle { lo, hi } => {
                check_point("initial.lo", lo)?;
                check_point("initial.hi", hi)?;
                if lo.iter().zip(hi).any(|(a, b)| a >= b) {
                    return Err(Error::config("initial.hi", "must exceed `lo` on every axis"));
                }
                Ok(())
            }
        }
    }

    /// Indicator field of the shape, sampled at cell centers.
    pub fn render(&self, spec: GridSpec) -> Result<ScalarField> {
        self.validate(spec.dim())?;
        let field = match self {
            InitialCondition::Ball(b) => {
                let (c, r) = (to_point(&b.center), b.radius);
                ScalarField::from_fn(spec, move |x| indicator(dist(x, &c) < r))
            }
            InitialCondition::UnionOfBalls { balls } => {
                let balls: Vec<(Point, f64)> =
                    balls.iter().map(|b| (to_point(&b.center), b.radius)).collect();
                ScalarField::from_fn(spec, move |x| {
                    indicator(balls.iter().any(|(c, r)| dist(x, c) < *r))
                })
            }
            InitialCondition::Rectangle { lo, hi } => {
                let (lo, hi) = (to_point(lo), to_point(hi));
                let dim = spec.dim();
                ScalarField::from_fn(spec, move |x| {
                    indicator((0..dim).all(|a| x[a] >= lo[a] && x[a] < hi[a]))
                })
            }
        };
        Ok(field)
    }
}

pub fn to_point(coords: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (slot, c) in p.iter_mut().zip(coords) {
        *slot = *c;
    }
    p
}

fn indicator(inside: bool) -> f64 {
    if inside {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_mass_approximates_area() {
        let spec = GridSpec::new(2, 256, 2.0).unwrap();
        let psi = InitialCondition::Ball(Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        })
        .render(spec)
        .unwrap();
        assert!((psi.mass() - std::f64::consts::PI).abs() < 0.01);
    }

    #[test]
    fn rectangle_needs_ordered_corners() {
        let ic = InitialCondition::Rectangle {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, -1.0],
        };
        assert!(ic.validate(2).is_err());
        let err = InitialCondition::Ball(Ball {
            center: vec![0.0],
            radius: 1.0,
        })
        .validate(2)
        .unwrap_err();
        assert!(err.to_string().contains("initial.center"));
    }
}
