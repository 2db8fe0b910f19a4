//! Empirical bilinear averages on sampled graphs against their continuum
//! integral.
//!
//! `Y_n = 1/(n(n-1)) Σ_{i≠j} φ(x_i) 1_A(x_j) e(x_i, x_j)` and
//! `Z = |X|^{-2} ∫∫ φ(x) 1_A(y) g(‖x-y‖) dx dy`, so `E[Y_n] = Z`.

use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{stream, Stream};
use super::{check_graph_inputs, row_edges, sample_positions, BoxDomain, GeometricGraph};
use crate::error::{Error, Result};
use crate::grid::{dist, Point};
use crate::init::to_point;
use crate::kernel::Kernel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Whole,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Region::Whole => true,
            Region::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .enumerate()
                .all(|(a, (l, h))| p[a] >= *l && p[a] < *h),
            Region::Ball { center, radius } => dist(p, &to_point(center)) < *radius,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Region::Whole => Ok(()),
            Region::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::config("region.lo", format!("expected {dim} coordinates")));
                }
                Ok(())
            }
            Region::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::config("region.center", format!("expected {dim} coordinates")));
                }
                if !(*radius > 0.0) {
                    return Err(Error::config("region.radius", "must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// Observable `φ : X → [0, 1]`; values are clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Constant { value: f64 },
    Coordinate { axis: usize },
    Linear { weights: Vec<f64>, bias: f64 },
}

impl Observable {
    pub fn eval(&self, p: &Point) -> f64 {
        let v = match self {
            Observable::Constant { value } => *value,
            Observable::Coordinate { axis } => p[*axis],
            Observable::Linear { weights, bias } => {
                bias + weights.iter().zip(p).map(|(w, x)| w * x).sum::<f64>()
            }
        };
        v.clamp(0.0, 1.0)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Observable::Constant { value } if !(0.0..=1.0).contains(value) => {
                Err(Error::config("phi.value", "must lie in [0, 1]"))
            }
            Observable::Coordinate { axis } if *axis >= dim => {
                Err(Error::config("phi.axis", format!("must be below {dim}")))
            }
            Observable::Linear { weights, .. } if weights.len() != dim => {
                Err(Error::config("phi.weights", format!("expected {dim} weights")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSetup {
    pub domain: BoxDomain,
    pub region: Region,
    pub phi: Observable,
    pub kernel: Kernel,
}

impl LimitSetup {
    pub fn validate(&self) -> Result<()> {
        self.region.validate(self.domain.dim())?;
        self.phi.validate(self.domain.dim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub z: f64,
    pub error: f64,
    pub nodes_per_axis: usize,
}

fn midpoint_rule(setup: &LimitSetup, m: usize) -> f64 {
    let dim = setup.domain.dim();
    let (lo, hi) = (setup.domain.lo(), setup.domain.hi());
    let total = m.pow(dim as u32);
    let nodes: Vec<Point> = (0..total)
        .map(|mut idx| {
            let mut p = [0.0; 3];
            for a in 0..dim {
                let i = idx % m;
                idx /= m;
                p[a] = lo[a] + (hi[a] - lo[a]) * (i as f64 + 0.5) / m as f64;
            }
            p
        })
        .collect();
    let xs: Vec<(Point, f64)> = nodes
        .iter()
        .map(|p| (*p, setup.phi.eval(p)))
        .filter(|(_, w)| *w != 0.0)
        .collect();
    let ys: Vec<Point> = nodes.iter().copied().filter(|p| setup.region.contains(p)).collect();
    let rows: Vec<f64> = xs
        .par_iter()
        .map(|(x, w)| {
            let s: f64 = ys
                .iter()
                .map(|y| {
                    let r2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2);
                    setup.kernel.eval_sq(r2)
                })
                .sum();
            w * s
        })
        .collect();
    // The |X|^2 volume elements cancel against the normalization.
    rows.iter().sum::<f64>() / (total as f64 * total as f64)
}

/// `Z` by the tensor-product midpoint rule with Richardson extrapolation,
/// doubling the resolution from `start` until the error estimate reaches
/// `tolerance` or the evaluation budget runs out. The estimate is the change
/// between successive extrapolated values.
pub fn quadrature(setup: &LimitSetup, start: usize, tolerance: f64, budget: u64) -> Quadrature {
    let dim = setup.domain.dim() as u32;
    let cost = |m: usize| (m as u64).pow(2 * dim);
    let mut m = start.max(2);
    let mut coarse = midpoint_rule(setup, m);
    let mut fine = midpoint_rule(setup, 2 * m);
    let mut extrapolated = fine + (fine - coarse) / 3.0;
    let mut error = (fine - coarse).abs() / 3.0;
    loop {
        if error <= tolerance || cost(4 * m) > budget {
            return Quadrature { z: extrapolated, error, nodes_per_axis: 2 * m };
        }
        m *= 2;
        coarse = fine;
        fine = midpoint_rule(setup, 2 * m);
        let next = fine + (fine - coarse) / 3.0;
        error = (next - extrapolated).abs();
        extrapolated = next;
    }
}

/// `Y_n` on a materialized graph.
pub fn graph_average(graph: &GeometricGraph, region: &Region, phi: &Observable) -> f64 {
    let n = graph.n();
    let weight: Vec<f64> = graph.positions().iter().map(|p| phi.eval(p)).collect();
    let member: Vec<bool> = graph.positions().iter().map(|p| region.contains(p)).collect();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            graph
                .neighbors(i)
                .into_iter()
                .filter(|&j| member[j])
                .map(|_| weight[i])
                .sum()
        })
        .collect();
    rows.iter().sum::<f64>() / (n as f64 * (n as f64 - 1.0))
}

/// `Y_n` for `sample_graph(n, domain, kernel, seed)` without storing edges.
/// Uses exactly the same random draws, so the value equals
/// [`graph_average`] on the sampled graph up to summation order.
pub fn empirical_average(n: usize, setup: &LimitSetup, seed: u64, pair_cap: u64) -> Result<f64> {
    check_graph_inputs(n, &setup.domain, &setup.kernel, pair_cap)?;
    let positions = sample_positions(n, &setup.domain, seed);
    let weight: Vec<f64> = positions.iter().map(|p| setup.phi.eval(p)).collect();
    let member: Vec<bool> = positions.iter().map(|p| setup.region.contains(p)).collect();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            row_edges(i, &positions, &setup.kernel, seed, |j| {
                if member[j] {
                    acc += weight[i];
                }
                if member[i] {
                    acc += weight[j];
                }
            });
            acc
        })
        .collect();
    Ok(rows.iter().sum::<f64>() / (n as f64 * (n as f64 - 1.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub quadrature_start: usize,
    pub quadrature_budget: u64,
    pub pair_cap: u64,
}

impl CompareConfig {
    pub fn new(sizes: Vec<usize>, replicates: usize, epsilon: f64, seed: u64) -> Self {
        CompareConfig {
            sizes,
            replicates,
            epsilon,
            seed,
            quadrature_start: 100,
            quadrature_budget: 200_000_000,
            pair_cap: super::DEFAULT_PAIR_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRow {
    pub n: usize,
    pub replicates: usize,
    pub mean_y: f64,
    pub mean_abs_dev: f64,
    pub se: f64,
    pub exceedance: f64,
    pub exceedance_se: f64,
    pub bound: f64,
    /// The bound is at least 1, so the concentration check says nothing.
    pub vacuous: bool,
    pub concentration_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitComparison {
    pub z: f64,
    pub z_error: f64,
    pub epsilon: f64,
    pub rows: Vec<LimitRow>,
    /// Per-replicate `Y_n`, in the order of `rows`.
    pub samples: Vec<Vec<f64>>,
    pub monotone_ok: bool,
    pub concentration_ok: bool,
}

impl LimitComparison {
    pub fn passed(&self) -> bool {
        self.monotone_ok && self.concentration_ok
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "n,replicates,z,z_error,mean_y,mean_abs_dev,se,epsilon,exceedance,exceedance_se,bound,vacuous,concentration_ok"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.replicates,
                self.z,
                self.z_error,
                r.mean_y,
                r.mean_abs_dev,
                r.se,
                self.epsilon,
                r.exceedance,
                r.exceedance_se,
                r.bound,
                r.vacuous,
                r.concentration_ok
            )?;
        }
        Ok(())
    }
}

/// Seed of replicate `r` at size index `s`.
fn replicate_seed(seed: u64, s: usize, r: usize) -> u64 {
    stream(seed, Stream::Replicate, ((s as u64) << 32) | r as u64).next_u64()
}

pub fn continuum_compare(setup: &LimitSetup, config: &CompareConfig) -> Result<LimitComparison> {
    setup.validate()?;
    if config.sizes.is_empty() {
        return Err(Error::config("sizes", "needs at least one size"));
    }
    if config.replicates < 2 {
        return Err(Error::config("replicates", "needs at least two"));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::config("epsilon", "must be positive"));
    }
    for &n in &config.sizes {
        check_graph_inputs(n, &setup.domain, &setup.kernel, config.pair_cap)?;
    }
    let limit = config.epsilon / 10.0;
    let q = quadrature(setup, config.quadrature_start, limit, config.quadrature_budget);
    if q.error > limit {
        return Err(Error::RefineQuadrature { estimate: q.error, limit });
    }

    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (s, &n) in config.sizes.iter().enumerate() {
        let ys = (0..config.replicates)
            .into_par_iter()
            .map(|r| empirical_average(n, setup, replicate_seed(config.seed, s, r), config.pair_cap))
            .collect::<Result<Vec<f64>>>()?;
        let reps = ys.len() as f64;
        let devs: Vec<f64> = ys.iter().map(|y| (y - q.z).abs()).collect();
        let mean_abs_dev = devs.iter().sum::<f64>() / reps;
        let var = devs.iter().map(|d| (d - mean_abs_dev).powi(2)).sum::<f64>() / (reps - 1.0);
        let exceedance = devs.iter().filter(|&&d| d >= config.epsilon).count() as f64 / reps;
        let exceedance_se = (exceedance * (1.0 - exceedance) / reps).sqrt();
        let bound = 2.0 * (-config.epsilon.powi(2) * n as f64 / 4.0).exp();
        rows.push(LimitRow {
            n,
            replicates: config.replicates,
            mean_y: ys.iter().sum::<f64>() / reps,
            mean_abs_dev,
            se: (var / reps).sqrt(),
            exceedance,
            exceedance_se,
            bound,
            vacuous: bound >= 1.0,
            concentration_ok: exceedance <= bound + 3.0 * exceedance_se,
        });
        samples.push(ys);
    }
    let monotone_ok = rows.windows(2).all(|w| {
        let slack = 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
        w[1].mean_abs_dev <= w[0].mean_abs_dev + slack
    });
    let concentration_ok = rows.iter().all(|r| r.concentration_ok);
    Ok(LimitComparison {
        z: q.z,
        z_error: q.error,
        epsilon: config.epsilon,
        rows,
        samples,
        monotone_ok,
        concentration_ok,
    })
}
