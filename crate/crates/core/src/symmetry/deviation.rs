use crate::grid::{ball_radius_for_volume, dist, Point, ScalarField};

/// How far a superlevel set is from the ball of equal volume about `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallDeviation {
    pub theta: f64,
    /// `|L_θ|` by cell counting.
    pub volume: f64,
    /// Radius of the ball with volume `|L_θ|`.
    pub radius: f64,
    /// `|B(p, r) \ L_θ|`.
    pub inner_deficit: f64,
    /// `|L_θ \ B(p, r)|`.
    pub outer_excess: f64,
    /// Smallest `ε` with `B(p, r - ε) ⊆ L_θ ⊆ B(p, r + ε)` on cell centers.
    pub epsilon: f64,
}

pub fn level_set_ball_deviation(psi: &ScalarField, theta: f64, p: &Point) -> BallDeviation {
    let spec = psi.spec();
    let count = psi.values().iter().filter(|v| **v >= theta).count();
    let volume = count as f64 * spec.cell_volume();
    if count == 0 {
        return BallDeviation {
            theta,
            volume: 0.0,
            radius: 0.0,
            inner_deficit: 0.0,
            outer_excess: 0.0,
            epsilon: 0.0,
        };
    }
    let radius = ball_radius_for_volume(spec.dim(), volume);
    let (epsilon, inner, outer) = measure(psi, theta, p, radius);
    BallDeviation {
        theta,
        volume,
        radius,
        inner_deficit: inner,
        outer_excess: outer,
        epsilon,
    }
}

/// `ε̂` of the superlevel set `L_θ` against a ball of prescribed radius.
pub fn sandwich_epsilon(psi: &ScalarField, theta: f64, p: &Point, radius: f64) -> f64 {
    measure(psi, theta, p, radius).0
}

fn measure(psi: &ScalarField, theta: f64, p: &Point, radius: f64) -> (f64, f64, f64) {
    let spec = psi.spec();
    let horizon = radius + spec.half_width();
    let mut farthest_in = f64::NEG_INFINITY;
    let mut nearest_out = f64::INFINITY;
    let mut inner = 0usize;
    let mut outer = 0usize;
    for (x, v) in spec.centers().zip(psi.values()) {
        let r = dist(&x, p);
        if *v >= theta {
            farthest_in = farthest_in.max(r);
            if r >= radius {
                outer += 1;
            }
        } else {
            if r < horizon {
                nearest_out = nearest_out.min(r);
            }
            if r < radius {
                inner += 1;
            }
        }
    }
    let epsilon = (farthest_in - radius).max(radius - nearest_out).max(0.0);
    let cv = spec.cell_volume();
    (epsilon, inner as f64 * cv, outer as f64 * cv)
}
