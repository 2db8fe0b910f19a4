//! Radially symmetric kernels `g(x) = g̃(‖x‖)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `exp(-r² / 2σ²)`.
    Gaussian { sigma: f64 },
    /// `1 / (1 + r²)`.
    InverseSquare,
    /// Piecewise-linear profile through `(r, g̃(r))` nodes. The last value is
    /// held beyond the final node.
    Table { nodes: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Scaled so that `g̃(0) = 1`.
    PeakOne,
    /// The profile's natural scale. For the gaussian this is the probability
    /// density in `dim` dimensions.
    Raw { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    profile: Profile,
    normalization: Normalization,
    scale: f64,
}

impl Kernel {
    pub fn new(profile: Profile, normalization: Normalization) -> Result<Self> {
        match &profile {
            Profile::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::config("kernel.sigma", format!("{sigma} must be positive")));
                }
            }
            Profile::InverseSquare => {}
            Profile::Table { nodes } => validate_table(nodes)?,
        }
        if let Normalization::Raw { dim } = normalization {
            if !(1..=3).contains(&dim) {
                return Err(Error::config("kernel.normalization", "raw dimension must be 1..=3"));
            }
        }
        let scale = match (&profile, normalization) {
            (Profile::Gaussian { sigma }, Normalization::Raw { dim }) => {
                (2.0 * PI * sigma * sigma).powf(-(dim as f64) / 2.0)
            }
            (Profile::Table { nodes }, Normalization::PeakOne) => 1.0 / nodes[0].1,
            _ => 1.0,
        };
        Ok(Kernel {
            profile,
            normalization,
            scale,
        })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Kernel::new(Profile::Gaussian { sigma }, Normalization::PeakOne)
    }

    pub fn inverse_square() -> Self {
        Kernel::new(Profile::InverseSquare, Normalization::PeakOne).expect("always valid")
    }

    pub fn table(nodes: Vec<(f64, f64)>) -> Result<Self> {
        Kernel::new(Profile::Table { nodes }, Normalization::Raw { dim: 1 })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// `g̃(r)` for `r ≥ 0`.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        let raw = match &self.profile {
            Profile::Gaussian { sigma } => (-r * r / (2.0 * sigma * sigma)).exp(),
            Profile::InverseSquare => 1.0 / (1.0 + r * r),
            Profile::Table { nodes } => table_eval(nodes, r),
        };
        self.scale * raw
    }

    /// `g̃` as a function of squared distance, which avoids a square root in
    /// the gaussian hot paths.
    #[inline]
    pub fn eval_sq(&self, r2: f64) -> f64 {
        match &self.profile {
            Profile::Gaussian { sigma } => self.scale * (-r2 / (2.0 * sigma * sigma)).exp(),
            Profile::InverseSquare => self.scale / (1.0 + r2),
            Profile::Table { .. } => self.eval(r2.sqrt()),
        }
    }

    /// Fraction of the kernel's mass in `R^dim` lying outside the ball of the
    /// given radius. Returns 1 when the mass is unbounded.
    pub fn tail_fraction(&self, dim: usize, radius: f64) -> f64 {
        let shell = |r: f64| self.eval(r) * r.powi(dim as i32 - 1);
        match &self.profile {
            Profile::Gaussian { sigma } => {
                let far = radius.max(0.0) + 40.0 * sigma;
                let inner = simpson(shell, 0.0, radius, 4096);
                let outer = simpson(shell, radius, far, 4096);
                outer / (inner + outer)
            }
            Profile::InverseSquare => {
                if dim == 1 {
                    1.0 - 2.0 / PI * radius.atan()
                } else {
                    1.0
                }
            }
            Profile::Table { nodes } => {
                let (last_r, last_g) = *nodes.last().expect("nonempty table");
                if last_g > 0.0 {
                    return 1.0;
                }
                let total = simpson(shell, 0.0, last_r, 8192);
                if radius >= last_r || total <= 0.0 {
                    0.0
                } else {
                    simpson(shell, radius, last_r, 8192) / total
                }
            }
        }
    }

    /// Samples `g̃` on `[0, 2R]` and checks the regularity conditions the
    /// evolution relies on.
    pub fn validate(&self, support_radius: f64, samples: usize) -> Result<KernelReport> {
        if !(support_radius.is_finite() && support_radius > 0.0) {
            return Err(Error::config("radius", "must be positive"));
        }
        if samples < 100 {
            return Err(Error::config("samples", format!("{samples} is below 100")));
        }
        let top = 2.0 * support_radius;
        let step = top / (samples - 1) as f64;
        let rs: Vec<f64> = (0..samples).map(|i| i as f64 * step).collect();
        let gs: Vec<f64> = rs.iter().map(|&r| self.eval(r)).collect();
        let peak = gs[0].abs().max(f64::MIN_POSITIVE);
        let tolerance = MONOTONE_TOLERANCE * peak;

        let positivity = match rs.iter().zip(&gs).find(|(_, g)| !(**g > 0.0)) {
            Some((r, _)) => Check::fail(*r),
            None => Check::pass(),
        };

        let mut worst_rise = 0.0;
        let mut monotone = Check::pass();
        let mut lipschitz = 0.0f64;
        let mut lipschitz_at = 0.0;
        for i in 0..samples - 1 {
            let rise = gs[i + 1] - gs[i];
            if rise > tolerance && rise > worst_rise {
                worst_rise = rise;
                monotone = Check::fail(rs[i + 1]);
            }
            let slope = rise.abs() / step;
            if slope > lipschitz {
                lipschitz = slope;
                lipschitz_at = 0.5 * (rs[i] + rs[i + 1]);
            }
        }
        let lipschitz_check = if lipschitz.is_finite() {
            Check {
                passed: true,
                worst_radius: Some(lipschitz_at),
            }
        } else {
            Check::fail(lipschitz_at)
        };

        let peak_check = if (gs[0] - 1.0).abs() <= 1e-12 {
            Check::pass()
        } else {
            Check::fail(0.0)
        };

        Ok(KernelReport {
            radial_symmetry: Check::pass(),
            positivity,
            monotone_decreasing: monotone,
            lipschitz: lipschitz_check,
            lipschitz_estimate: lipschitz,
            peak_normalized: peak_check,
            samples,
            max_radius: top,
        })
    }
}

/// Increases smaller than this fraction of the peak are treated as flat.
const MONOTONE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub passed: bool,
    pub worst_radius: Option<f64>,
}

impl Check {
    fn pass() -> Self {
        Check {
            passed: true,
            worst_radius: None,
        }
    }

    fn fail(r: f64) -> Self {
        Check {
            passed: false,
            worst_radius: Some(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub radial_symmetry: Check,
    pub positivity: Check,
    pub monotone_decreasing: Check,
    pub lipschitz: Check,
    pub lipschitz_estimate: f64,
    pub peak_normalized: Check,
    pub samples: usize,
    pub max_radius: f64,
}

impl KernelReport {
    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }

    pub fn checks(&self) -> [(&'static str, Check); 5] {
        [
            ("radial_symmetry", self.radial_symmetry),
            ("positivity", self.positivity),
            ("monotone_decreasing", self.monotone_decreasing),
            ("lipschitz", self.lipschitz),
            ("peak_normalized", self.peak_normalized),
        ]
    }
}

fn validate_table(nodes: &[(f64, f64)]) -> Result<()> {
    if nodes.len() < 2 {
        return Err(Error::config("kernel.table", "needs at least two nodes"));
    }
    if nodes[0].0 != 0.0 {
        return Err(Error::config("kernel.table", "first node must be at r = 0"));
    }
    if nodes[0].1 <= 0.0 {
        return Err(Error::config("kernel.table", "value at r = 0 must be positive"));
    }
    for w in nodes.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::config("kernel.table", "radii must be strictly increasing"));
        }
    }
    if nodes.iter().any(|(r, g)| !r.is_finite() || !g.is_finite() || *g < 0.0) {
        return Err(Error::config("kernel.table", "values must be finite and nonnegative"));
    }
    Ok(())
}

fn table_eval(nodes: &[(f64, f64)], r: f64) -> f64 {
    let upper = nodes.partition_point(|(x, _)| *x <= r);
    if upper == 0 {
        return nodes[0].1;
    }
    if upper == nodes.len() {
        return nodes[nodes.len() - 1].1;
    }
    let (r0, g0) = nodes[upper - 1];
    let (r1, g1) = nodes[upper];
    g0 + (g1 - g0) * (r - r0) / (r1 - r0)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
