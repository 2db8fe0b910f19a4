//! The evolution loop: convolve, sharpen, record diagnostics.

use std::io::Write;
use std::time::{Duration, Instant};

use crate::convolve::{Backend, Convolver};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point, ScalarField};
use crate::kernel::Kernel;
use crate::rule::{apply_sharpening, RuleKind, SharpeningRule, ThresholdResult};
use crate::symmetry::{
    asymmetry_mass, center_estimate, default_directions, direction_angles, level_set_ball_deviation,
    max_slab_width, BallDeviation, Hyperplane, ReflectionTest,
};

/// Levels whose ball deviations are recorded in every diagnostics row.
pub const TRACE_LEVELS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

pub const DEFAULT_MAX_STEPS: usize = 500;

/// Support radius used when none is configured: four times the radius of the
/// smallest origin-centered ball containing the initial support.
pub fn default_support_radius(psi0: &ScalarField) -> f64 {
    4.0 * psi0.support_radius()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopSpec {
    pub max_steps: usize,
    /// Stop once the measured `d_t` is at most this. Checked on diagnostics steps.
    pub slab_width: Option<f64>,
    /// Stop once `‖ψ_{t+1} - ψ_t‖₁` falls below this.
    pub l1_change: Option<f64>,
}

impl StopSpec {
    pub fn max_steps(max_steps: usize) -> Self {
        StopSpec {
            max_steps,
            slab_width: None,
            l1_change: None,
        }
    }

    /// `T_max = 500`, `d_t ≤ 2h`, `L¹ change < 1e-9 α`.
    pub fn defaults(spec: &GridSpec, volume: f64) -> Self {
        StopSpec {
            max_steps: DEFAULT_MAX_STEPS,
            slab_width: Some(2.0 * spec.cell_size()),
            l1_change: Some(1e-9 * volume),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSpec {
    /// Measure every `every` steps; zero disables diagnostics.
    pub every: usize,
    pub directions: Vec<Point>,
    pub test: Option<ReflectionTest>,
    /// Coarse offset step for slab scans; defaults to the cell size.
    pub step: Option<f64>,
}

impl DiagnosticsSpec {
    pub fn none() -> Self {
        DiagnosticsSpec {
            every: 0,
            directions: Vec::new(),
            test: None,
            step: None,
        }
    }

    pub fn every(every: usize, dim: usize) -> Self {
        DiagnosticsSpec {
            every,
            directions: default_directions(dim),
            test: None,
            step: None,
        }
    }

    fn due(&self, t: usize) -> bool {
        self.every > 0 && t.is_multiple_of(self.every)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryRecord {
    /// Largest sampled slab width, a lower bound on `d_t`.
    pub slab_width: f64,
    pub direction: Point,
    /// Width per sampled direction, in the order of the direction set.
    pub widths: Vec<f64>,
    pub center: Option<Point>,
    pub center_residual: Option<f64>,
    pub deviations: Vec<BallDeviation>,
    /// Asymmetry mass at the lower face of the widest slab.
    pub delta: f64,
}

/// Measures the symmetry diagnostics of one field.
pub fn measure_symmetry(psi: &ScalarField, diag: &DiagnosticsSpec) -> Result<SymmetryRecord> {
    let spec = psi.spec();
    let test = diag.test.unwrap_or_else(|| ReflectionTest::for_field(psi));
    let step = diag.step.unwrap_or_else(|| spec.cell_size());
    let directions = if diag.directions.is_empty() {
        default_directions(spec.dim())
    } else {
        diag.directions.clone()
    };
    let max = max_slab_width(psi, &directions, &test, step)?;
    let center = center_estimate(&max.per_direction, spec.dim()).ok();
    let p = center.map(|c| c.center).unwrap_or([0.0; 3]);
    let argmax = max.argmax();
    let delta = if argmax.empty {
        0.0
    } else {
        asymmetry_mass(psi, &Hyperplane::new(argmax.direction, argmax.lower)?)
    };
    Ok(SymmetryRecord {
        slab_width: max.width,
        direction: max.direction,
        widths: max.per_direction.iter().map(|m| m.width).collect(),
        center: center.map(|c| c.center),
        center_residual: center.map(|c| c.residual),
        deviations: TRACE_LEVELS
            .iter()
            .map(|&theta| level_set_ball_deviation(psi, theta, &p))
            .collect(),
        delta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Index of the field produced by this step.
    pub t: usize,
    pub mass: f64,
    pub threshold: Option<ThresholdResult>,
    pub l1_change: f64,
    pub symmetry: Option<SymmetryRecord>,
    pub duration: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    SlabWidth,
    L1Change,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    /// Diagnostics of the initial field, when diagnostics are enabled.
    pub initial: Option<SymmetryRecord>,
    pub warnings: Vec<String>,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub field: ScalarField,
}

/// A kernel and rule prepared for one grid.
#[derive(Debug)]
pub struct Engine {
    convolver: Convolver,
    rule: SharpeningRule,
    backend: Backend,
}

impl Engine {
    pub fn new(kernel: &Kernel, rule: SharpeningRule, spec: GridSpec, backend: Backend) -> Result<Self> {
        rule.validate()?;
        if let RuleKind::VolumeThreshold { alpha } = rule.kind {
            if alpha >= spec.domain_volume() {
                return Err(Error::TargetExceedsDomain {
                    alpha,
                    domain: spec.domain_volume(),
                });
            }
        }
        Ok(Engine {
            convolver: Convolver::new(kernel, spec),
            rule,
            backend,
        })
    }

    pub fn rule(&self) -> &SharpeningRule {
        &self.rule
    }

    pub fn convolver(&self) -> &Convolver {
        &self.convolver
    }

    /// `ψ_{t+1} = γ(ψ_t * g)`.
    pub fn step(&self, psi: &ScalarField) -> Result<(ScalarField, Option<ThresholdResult>)> {
        let next_t = psi.time() + 1;
        let f = self.convolver.convolve(psi, self.backend)?;
        if !f.is_finite() {
            return Err(Error::NonFinite { step: next_t });
        }
        let sharpened = apply_sharpening(&f, &self.rule)?;
        if !sharpened.field.is_finite() {
            return Err(Error::NonFinite { step: next_t });
        }
        Ok((sharpened.field.with_time(next_t), sharpened.threshold))
    }

    pub fn run(&self, psi0: &ScalarField, stop: &StopSpec, diag: &DiagnosticsSpec) -> Result<RunOutcome> {
        self.run_observed(psi0, stop, diag, |_, _| Ok(()))
    }

    /// Like [`Engine::run`], calling `observe` with every new field and its
    /// record as soon as the step completes.
    pub fn run_observed(
        &self,
        psi0: &ScalarField,
        stop: &StopSpec,
        diag: &DiagnosticsSpec,
        mut observe: impl FnMut(&ScalarField, &StepRecord) -> Result<()>,
    ) -> Result<RunOutcome> {
        if stop.max_steps == 0 {
            return Err(Error::config("stop.max_steps", "must be at least 1"));
        }
        let mut warnings = Vec::new();
        warnings.extend(self.convolver.truncation_warning());
        let initial = if diag.every > 0 {
            Some(measure_symmetry(psi0, diag)?)
        } else {
            None
        };
        let mut records = Vec::new();
        let mut psi = psi0.clone();
        let mut reason = StopReason::MaxSteps;
        for _ in 0..stop.max_steps {
            let start = Instant::now();
            let (next, threshold) = self.step(&psi)?;
            if let Some(r) = &threshold {
                if r.degenerate {
                    warnings.push(format!("step {}: threshold tie covers every candidate cell", next.time()));
                }
            }
            let l1_change = next.l1_distance(&psi);
            let symmetry = if diag.due(next.time()) {
                Some(measure_symmetry(&next, diag)?)
            } else {
                None
            };
            let record = StepRecord {
                t: next.time(),
                mass: next.mass(),
                threshold,
                l1_change,
                symmetry,
                duration: start.elapsed(),
            };
            let slab_stop = matches!(
                (stop.slab_width, &record.symmetry),
                (Some(limit), Some(s)) if s.slab_width <= limit
            );
            let l1_stop = matches!(stop.l1_change, Some(limit) if l1_change < limit);
            observe(&next, &record)?;
            records.push(record);
            psi = next;
            if slab_stop {
                reason = StopReason::SlabWidth;
                break;
            }
            if l1_stop {
                reason = StopReason::L1Change;
                break;
            }
        }
        Ok(RunOutcome {
            trace: RunTrace {
                records,
                initial,
                warnings,
                config: None,
                seed: None,
                stop: reason,
            },
            field: psi,
        })
    }
}

/// One step with a freshly prepared kernel transform.
pub fn step(
    psi: &ScalarField,
    kernel: &Kernel,
    rule: &SharpeningRule,
    backend: Backend,
) -> Result<(ScalarField, Option<ThresholdResult>)> {
    Engine::new(kernel, *rule, *psi.spec(), backend)?.step(psi)
}

/// Column names of the trace CSV for a grid of dimension `dim`.
pub fn trace_columns(dim: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "t",
        "mass",
        "threshold",
        "achieved_volume",
        "tie_mass",
        "fill",
        "degenerate",
        "l1_change",
        "d_t",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let angles = if dim == 3 { 2 } else { 1 };
    cols.extend((0..angles).map(|i| format!("argmax_angle_{i}")));
    cols.extend(["p_x", "p_y", "p_z"].iter().take(dim).map(|s| s.to_string()));
    cols.extend(TRACE_LEVELS.iter().map(|t| format!("eps_{t}")));
    cols.push("delta".to_string());
    cols
}

/// Writes one row per executed step. The first line is a `#` comment carrying
/// the configuration echo when present. Timing is not written, so identical
/// runs produce identical bytes.
pub fn write_trace_csv<W: Write>(trace: &RunTrace, dim: usize, mut out: W) -> Result<()> {
    if let Some(config) = &trace.config {
        writeln!(out, "# config: {config}")?;
    }
    let cols = trace_columns(dim);
    writeln!(out, "{}", cols.join(","))?;
    let angles = if dim == 3 { 2 } else { 1 };
    for r in &trace.records {
        let mut row: Vec<String> = vec![r.t.to_string(), r.mass.to_string()];
        match &r.threshold {
            Some(th) => {
                row.push(th.threshold.to_string());
                row.push(th.achieved_volume.to_string());
                row.push(th.tie_mass.to_string());
                row.push(th.fill.to_string());
                row.push((th.degenerate as u8).to_string());
            }
            None => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        row.push(r.l1_change.to_string());
        match &r.symmetry {
            Some(s) => {
                row.push(s.slab_width.to_string());
                row.extend(direction_angles(&s.direction, dim).iter().map(f64::to_string));
                match s.center {
                    Some(p) => row.extend(p.iter().take(dim).map(f64::to_string)),
                    None => row.extend(std::iter::repeat_n(String::new(), dim)),
                }
                row.extend(s.deviations.iter().map(|d| d.epsilon.to_string()));
                row.push(s.delta.to_string());
            }
            None => row.extend(std::iter::repeat_n(String::new(), cols.len() - row.len())),
        }
        debug_assert_eq!(row.len(), cols.len(), "angles = {angles}");
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
