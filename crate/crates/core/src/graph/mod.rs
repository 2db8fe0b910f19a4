//! Soft geometric random graphs and the discrete k-cap process.
//!
//! Vertices are uniform on a box; each unordered pair is joined independently
//! with probability `g̃(‖x - y‖)`. All randomness flows through named,
//! seedable streams (see [`rng`]) so positions, edges, tie-breaking and
//! initial sets are reproducible independently of each other.

mod enclosing;
mod kcap;
mod limit;
pub mod rng;

pub use enclosing::{smallest_enclosing_ball, EnclosingBall};
pub use kcap::{
    empirical_input, in_degrees, k_cap_step, k_cap_trajectory, random_active_set, threshold_step,
    ActiveSet,
};
pub use limit::{
    continuum_compare, empirical_average, graph_average, quadrature, CompareConfig, LimitComparison,
    LimitRow, LimitSetup, Observable, Quadrature, Region,
};

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Point;
use crate::kernel::Kernel;
use rng::{stream, Stream};

/// Pair budget above which sampling refuses to run.
pub const DEFAULT_PAIR_CAP: u64 = 500_000_000;

/// Graphs with fewer vertices than this use a dense bit matrix.
pub const DENSE_BELOW: usize = 2000;

pub const GRAPH_MAGIC: &str = "alphacap-graph v1";

/// Axis-aligned box `[lo, hi]` in `R^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    dim: usize,
    lo: Point,
    hi: Point,
}

impl BoxDomain {
    pub fn new(dim: usize, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if !(1..=3).contains(&dim) || lo.len() != dim || hi.len() != dim {
            return Err(Error::config("domain", format!("expected {dim} bounds per corner")));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::config("domain.hi", "must exceed `lo` on every axis"));
        }
        Ok(BoxDomain {
            dim,
            lo: crate::init::to_point(lo),
            hi: crate::init::to_point(hi),
        })
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        BoxDomain::new(dim, &vec![0.0; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.hi[a] - self.lo[a]).product()
    }

    pub fn diameter(&self) -> f64 {
        crate::grid::dist(&self.lo, &self.hi)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.lo[a] + (self.hi[a] - self.lo[a]) * rng.random::<f64>();
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Adjacency {
    Dense { words: usize, bits: Vec<u64> },
    Sparse { offsets: Vec<usize>, targets: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricGraph {
    domain: BoxDomain,
    positions: Vec<Point>,
    adjacency: Adjacency,
    edge_count: usize,
    seed: u64,
}

/// Positions drawn from the position stream of `seed`.
pub(crate) fn sample_positions(n: usize, domain: &BoxDomain, seed: u64) -> Vec<Point> {
    let mut rng = stream(seed, Stream::Positions, 0);
    (0..n).map(|_| domain.sample(&mut rng)).collect()
}

/// Calls `visit(j)` for each `j > i` joined to `i`. Row `i` draws one uniform
/// per candidate pair from its own edge stream, so rows are independent.
#[inline]
pub(crate) fn row_edges(
    i: usize,
    positions: &[Point],
    kernel: &Kernel,
    seed: u64,
    mut visit: impl FnMut(usize),
) {
    let mut rng = stream(seed, Stream::Edges, i as u64);
    let xi = positions[i];
    for (j, xj) in positions.iter().enumerate().skip(i + 1) {
        let u: f64 = rng.random();
        let d = [xi[0] - xj[0], xi[1] - xj[1], xi[2] - xj[2]];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if u < kernel.eval_sq(r2) {
            visit(j);
        }
    }
}

pub(crate) fn check_graph_inputs(n: usize, domain: &BoxDomain, kernel: &Kernel, cap: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::config("n", format!("{n} is below 2")));
    }
    let pairs = n as u64 * (n as u64 - 1) / 2;
    if pairs > cap {
        return Err(Error::PairBudget { n, pairs, cap });
    }
    let peak = kernel.eval(0.0);
    let far = kernel.eval(domain.diameter());
    if !(peak <= 1.0 && far >= 0.0) {
        return Err(Error::config(
            "kernel",
            format!("edge probabilities must lie in [0, 1]; g̃(0) = {peak}"),
        ));
    }
    Ok(())
}

/// Samples `G(n, X, g)`.
pub fn sample_graph(n: usize, domain: &BoxDomain, kernel: &Kernel, seed: u64) -> Result<GeometricGraph> {
    sample_graph_with_cap(n, domain, kernel, seed, DEFAULT_PAIR_CAP)
}

pub fn sample_graph_with_cap(
    n: usize,
    domain: &BoxDomain,
    kernel: &Kernel,
    seed: u64,
    cap: u64,
) -> Result<GeometricGraph> {
    check_graph_inputs(n, domain, kernel, cap)?;
    let positions = sample_positions(n, domain, seed);
    let upper: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::new();
            row_edges(i, &positions, kernel, seed, |j| row.push(j as u32));
            row
        })
        .collect();
    let edge_count = upper.iter().map(Vec::len).sum();

    let adjacency = if n < DENSE_BELOW {
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        for (i, row) in upper.iter().enumerate() {
            for &j in row {
                let j = j as usize;
                bits[i * words + j / 64] |= 1 << (j % 64);
                bits[j * words + i / 64] |= 1 << (i % 64);
            }
        }
        Adjacency::Dense { words, bits }
    } else {
        let mut degree = vec![0usize; n];
        for (i, row) in upper.iter().enumerate() {
            degree[i] += row.len();
            for &j in row {
                degree[j as usize] += 1;
            }
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n]];
        for (i, row) in upper.iter().enumerate() {
            for &j in row {
                targets[fill[i]] = j;
                fill[i] += 1;
                targets[fill[j as usize]] = i as u32;
                fill[j as usize] += 1;
            }
        }
        for i in 0..n {
            targets[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Adjacency::Sparse { offsets, targets }
    };

    Ok(GeometricGraph {
        domain: *domain,
        positions,
        adjacency,
        edge_count,
        seed,
    })
}

impl GeometricGraph {
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.adjacency, Adjacency::Dense { .. })
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        match &self.adjacency {
            Adjacency::Dense { words, bits } => bits[u * words + v / 64] >> (v % 64) & 1 == 1,
            Adjacency::Sparse { offsets, targets } => targets[offsets[u]..offsets[u + 1]]
                .binary_search(&(v as u32))
                .is_ok(),
        }
    }

    /// Neighbors of `v` in increasing order.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        match &self.adjacency {
            Adjacency::Dense { words, bits } => {
                let row = &bits[v * words..(v + 1) * words];
                let mut out = Vec::new();
                for (w, &word) in row.iter().enumerate() {
                    let mut word = word;
                    while word != 0 {
                        let b = word.trailing_zeros() as usize;
                        out.push(w * 64 + b);
                        word &= word - 1;
                    }
                }
                out
            }
            Adjacency::Sparse { offsets, targets } => targets[offsets[v]..offsets[v + 1]]
                .iter()
                .map(|&j| j as usize)
                .collect(),
        }
    }

    pub fn degree(&self, v: usize) -> usize {
        match &self.adjacency {
            Adjacency::Dense { words, bits } => bits[v * words..(v + 1) * words]
                .iter()
                .map(|w| w.count_ones() as usize)
                .sum(),
            Adjacency::Sparse { offsets, .. } => offsets[v + 1] - offsets[v],
        }
    }

    /// Edges `(i, j)` with `i < j` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|i| {
                self.neighbors(i)
                    .into_iter()
                    .filter(move |&j| j > i)
                    .map(move |j| (i, j))
            })
            .collect()
    }

    /// The same graph with vertex `v` renamed `perm[v]`.
    pub fn relabeled(&self, perm: &[usize]) -> GeometricGraph {
        let n = self.n();
        assert_eq!(perm.len(), n);
        let mut positions = vec![[0.0; 3]; n];
        for (v, &p) in perm.iter().enumerate() {
            positions[p] = self.positions[v];
        }
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        for (i, j) in self.edges() {
            let (a, b) = (perm[i], perm[j]);
            bits[a * words + b / 64] |= 1 << (b % 64);
            bits[b * words + a / 64] |= 1 << (a % 64);
        }
        GeometricGraph {
            domain: self.domain,
            positions,
            adjacency: Adjacency::Dense { words, bits },
            edge_count: self.edge_count,
            seed: self.seed,
        }
    }

    /// Header line then one `i j` pair per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{GRAPH_MAGIC} n={} d={} seed={}",
            self.n(),
            self.domain.dim,
            self.seed
        )?;
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}")?;
        }
        Ok(())
    }

    pub fn write_positions_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let axes = ["x", "y", "z"];
        writeln!(out, "index,{}", axes[..self.domain.dim].join(","))?;
        for (i, p) in self.positions.iter().enumerate() {
            let coords: Vec<String> = p[..self.domain.dim].iter().map(f64::to_string).collect();
            writeln!(out, "{i},{}", coords.join(","))?;
        }
        Ok(())
    }
}
