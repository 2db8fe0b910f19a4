use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::rng::{stream, Stream};
use crate::grid::{dist, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnclosingBall {
    pub center: Point,
    pub radius: f64,
}

impl EnclosingBall {
    fn contains(&self, p: &Point) -> bool {
        self.radius >= 0.0 && dist(&self.center, p) <= self.radius * (1.0 + 1e-12) + 1e-12
    }
}

/// Minimal ball containing `points`, by Welzl's move-to-front algorithm.
/// Returns `None` for an empty input.
pub fn smallest_enclosing_ball(points: &[Point], dim: usize) -> Option<EnclosingBall> {
    if points.is_empty() {
        return None;
    }
    let mut pts = points.to_vec();
    pts.shuffle(&mut stream(0, Stream::Replicate, 0));
    let end = pts.len();
    let mut support = Vec::with_capacity(dim + 1);
    Some(move_to_front(&mut pts, end, &mut support, dim))
}

fn move_to_front(pts: &mut Vec<Point>, end: usize, support: &mut Vec<Point>, dim: usize) -> EnclosingBall {
    let mut ball = circumball(support, dim);
    if support.len() == dim + 1 {
        return ball;
    }
    for i in 0..end {
        if !ball.contains(&pts[i]) {
            support.push(pts[i]);
            ball = move_to_front(pts, i, support, dim);
            support.pop();
            let p = pts.remove(i);
            pts.insert(0, p);
        }
    }
    ball
}

/// Smallest ball with every support point on its boundary.
fn circumball(support: &[Point], dim: usize) -> EnclosingBall {
    match support.len() {
        0 => EnclosingBall { center: [0.0; 3], radius: -1.0 },
        1 => EnclosingBall { center: support[0], radius: 0.0 },
        k => {
            // c = p0 + sum_i l_i (p_i - p0) with (p_i - p0).(c - p0) = |p_i - p0|^2 / 2.
            let p0 = support[0];
            let diffs: Vec<Point> = support[1..]
                .iter()
                .map(|p| [p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]])
                .collect();
            let m = k - 1;
            let gram = DMatrix::from_fn(m, m, |i, j| (0..dim).map(|a| diffs[i][a] * diffs[j][a]).sum());
            let rhs = DVector::from_fn(m, |i, _| 0.5 * (0..dim).map(|a| diffs[i][a].powi(2)).sum::<f64>());
            match gram.lu().solve(&rhs) {
                Some(l) if l.iter().all(|v| v.is_finite()) => {
                    let mut c = p0;
                    for (i, d) in diffs.iter().enumerate() {
                        for a in 0..dim {
                            c[a] += l[i] * d[a];
                        }
                    }
                    let radius = support.iter().map(|p| dist(&c, p)).fold(0.0, f64::max);
                    EnclosingBall { center: c, radius }
                }
                _ => farthest_pair_ball(support),
            }
        }
    }
}

fn farthest_pair_ball(support: &[Point]) -> EnclosingBall {
    let mut best = (0.0, support[0], support[0]);
    for (i, a) in support.iter().enumerate() {
        for b in &support[i + 1..] {
            let d = dist(a, b);
            if d > best.0 {
                best = (d, *a, *b);
            }
        }
    }
    let (_, a, b) = best;
    let center = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
    EnclosingBall { center, radius: best.0 / 2.0 }
}
