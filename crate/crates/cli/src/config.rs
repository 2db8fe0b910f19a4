//! TOML experiment configurations. Every range check reports the dotted key
//! it applies to; `docs/config.md` documents each key.

use std::path::{Path, PathBuf};

use alphacap_core::engine::{default_support_radius, StopSpec};
use alphacap_core::graph::{BoxDomain, CompareConfig, LimitSetup, Observable, Region, DEFAULT_PAIR_CAP};
use alphacap_core::init::{Ball, InitialCondition};
use alphacap_core::kernel::{Normalization, Profile};
use alphacap_core::{Backend, Error, GridSpec, Kernel, RuleKind, ScalarField, SharpeningRule};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn invalid(key: &str, reason: impl Into<String>) -> CliError {
    Error::config(key, reason).into()
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub cells: usize,
    pub half_width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub profile: String,
    pub sigma: Option<f64>,
    pub nodes: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_normalization")]
    pub normalization: String,
}

fn default_normalization() -> String {
    "peak_one".into()
}

impl KernelSection {
    pub fn gaussian(sigma: f64) -> Self {
        KernelSection {
            profile: "gaussian".into(),
            sigma: Some(sigma),
            nodes: None,
            normalization: default_normalization(),
        }
    }

    pub fn build(&self, dim: usize) -> CliResult<Kernel> {
        let profile = match self.profile.as_str() {
            "gaussian" => Profile::Gaussian {
                sigma: self
                    .sigma
                    .ok_or_else(|| invalid("kernel.sigma", "required for the gaussian profile"))?,
            },
            "inverse_square" => Profile::InverseSquare,
            "table" => Profile::Table {
                nodes: self
                    .nodes
                    .as_ref()
                    .ok_or_else(|| invalid("kernel.nodes", "required for the table profile"))?
                    .iter()
                    .map(|[r, g]| (*r, *g))
                    .collect(),
            },
            other => {
                return Err(invalid(
                    "kernel.profile",
                    format!("unknown profile `{other}` (expected gaussian, inverse_square or table)"),
                ))
            }
        };
        let normalization = match self.normalization.as_str() {
            "peak_one" => Normalization::PeakOne,
            "raw" => Normalization::Raw { dim },
            other => {
                return Err(invalid(
                    "kernel.normalization",
                    format!("unknown normalization `{other}` (expected peak_one or raw)"),
                ))
            }
        };
        Ok(Kernel::new(profile, normalization)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSection {
    pub kind: String,
    /// Target volume; defaults to the mass of the initial field.
    pub alpha: Option<f64>,
    pub threshold: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Defaults to four times the initial support radius.
    pub support_radius: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSection {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: String,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub balls: Option<Vec<BallSection>>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    /// Grid dump to start from; relative paths resolve against the config file.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSection {
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Defaults to `2h`; zero disables.
    pub slab_width: Option<f64>,
    /// Defaults to `1e-9 α`; zero disables.
    pub l1_change: Option<f64>,
}

fn default_max_steps() -> usize {
    alphacap_core::engine::DEFAULT_MAX_STEPS
}

impl Default for StopSection {
    fn default() -> Self {
        StopSection {
            max_steps: default_max_steps(),
            slab_width: None,
            l1_change: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_every")]
    pub every: usize,
    /// Overrides the default direction count (64 in 2D, 128 in 3D).
    pub directions: Option<usize>,
}

fn default_every() -> usize {
    10
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            every: default_every(),
            directions: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Dump the field every this many steps; zero keeps only the first and last.
    #[serde(default)]
    pub dump_every: usize,
    #[serde(default = "default_true")]
    pub snapshots: bool,
}

fn default_true() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: None,
            dump_every: 0,
            snapshots: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_backend")]
    pub backend: String,
    pub grid: GridSection,
    pub kernel: KernelSection,
    pub rule: RuleSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub stop: StopSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_backend() -> String {
    "spectral".into()
}

/// A validated run configuration, ready for the engine.
#[derive(Debug)]
pub struct RunPlan {
    pub spec: GridSpec,
    pub kernel: Kernel,
    pub rule: SharpeningRule,
    pub backend: Backend,
    pub psi0: ScalarField,
    pub stop: StopSpec,
    pub diagnostics_every: usize,
    pub directions: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        read_toml(path)
    }

    /// Validates every section. `base` resolves relative file paths.
    pub fn plan(&self, base: &Path) -> CliResult<RunPlan> {
        let g = &self.grid;
        let spec = GridSpec::new(g.dim, g.cells, g.half_width)?;
        let kernel = self.kernel.build(g.dim)?;
        let backend = match self.backend.as_str() {
            "spectral" => Backend::Spectral,
            "direct" => Backend::Direct,
            other => return Err(invalid("backend", format!("unknown backend `{other}`"))),
        };
        let psi0 = self.initial_field(spec, base)?;

        let support_radius = match self.rule.support_radius {
            Some(r) => r,
            None => {
                let r = default_support_radius(&psi0);
                if r <= 0.0 {
                    return Err(invalid("rule.support_radius", "initial field is empty; set it explicitly"));
                }
                r
            }
        };
        let r = &self.rule;
        let need = |value: Option<f64>, key: &str| {
            value.ok_or_else(|| invalid(key, format!("required for rule kind `{}`", r.kind)))
        };
        let kind = match r.kind.as_str() {
            "volume_threshold" => {
                let alpha = r.alpha.unwrap_or_else(|| psi0.mass());
                if alpha >= spec.domain_volume() {
                    return Err(invalid(
                        "rule.alpha",
                        format!(
                            "target volume exceeds domain ({alpha} ≥ grid volume {})",
                            spec.domain_volume()
                        ),
                    ));
                }
                RuleKind::VolumeThreshold { alpha }
            }
            "fixed_threshold" => RuleKind::FixedThreshold {
                threshold: need(r.threshold, "rule.threshold")?,
            },
            "clipped_linear" => RuleKind::ClippedLinear {
                slope: need(r.slope, "rule.slope")?,
                intercept: need(r.intercept, "rule.intercept")?,
            },
            other => {
                return Err(invalid(
                    "rule.kind",
                    format!("unknown rule `{other}` (expected volume_threshold, fixed_threshold or clipped_linear)"),
                ))
            }
        };
        let rule = SharpeningRule::new(kind, support_radius)?;

        let s = &self.stop;
        if s.max_steps == 0 {
            return Err(invalid("stop.max_steps", "must be at least 1"));
        }
        let defaults = StopSpec::defaults(&spec, match kind {
            RuleKind::VolumeThreshold { alpha } => alpha,
            _ => psi0.mass().max(spec.cell_volume()),
        });
        let positive = |v: Option<f64>, key: &str, default: Option<f64>| -> CliResult<Option<f64>> {
            match v {
                None => Ok(default),
                Some(x) if x.is_finite() && x > 0.0 => Ok(Some(x)),
                Some(x) if x == 0.0 => Ok(None),
                Some(x) => Err(invalid(key, format!("{x} must be non-negative"))),
            }
        };
        let stop = StopSpec {
            max_steps: s.max_steps,
            slab_width: positive(s.slab_width, "stop.slab_width", defaults.slab_width)?,
            l1_change: positive(s.l1_change, "stop.l1_change", defaults.l1_change)?,
        };
        if let Some(n) = self.diagnostics.directions {
            let minimum = if g.dim == 1 { 1 } else { g.dim };
            if n < minimum {
                return Err(invalid("diagnostics.directions", format!("needs at least {minimum}")));
            }
        }
        Ok(RunPlan {
            spec,
            kernel,
            rule,
            backend,
            psi0,
            stop,
            diagnostics_every: self.diagnostics.every,
            directions: self.diagnostics.directions,
        })
    }

    fn initial_field(&self, spec: GridSpec, base: &Path) -> CliResult<ScalarField> {
        let i = &self.initial;
        let need_vec = |v: &Option<Vec<f64>>, key: &str| {
            v.clone().ok_or_else(|| invalid(key, format!("required for initial kind `{}`", i.kind)))
        };
        let condition = match i.kind.as_str() {
            "ball" => InitialCondition::Ball(Ball {
                center: need_vec(&i.center, "initial.center")?,
                radius: i
                    .radius
                    .ok_or_else(|| invalid("initial.radius", "required for initial kind `ball`"))?,
            }),
            "union_of_balls" => InitialCondition::UnionOfBalls {
                balls: i
                    .balls
                    .as_ref()
                    .ok_or_else(|| invalid("initial.balls", "required for initial kind `union_of_balls`"))?
                    .iter()
                    .map(|b| Ball {
                        center: b.center.clone(),
                        radius: b.radius,
                    })
                    .collect(),
            },
            "rectangle" => InitialCondition::Rectangle {
                lo: need_vec(&i.lo, "initial.lo")?,
                hi: need_vec(&i.hi, "initial.hi")?,
            },
            "file" => {
                let rel = i
                    .path
                    .as_ref()
                    .ok_or_else(|| invalid("initial.path", "required for initial kind `file`"))?;
                let path = base.join(rel);
                let bytes = std::fs::read(&path).map_err(|e| {
                    invalid("initial.path", format!("cannot read {}: {e}", path.display()))
                })?;
                let field = ScalarField::read_dump(&bytes)?;
                if *field.spec() != spec {
                    return Err(invalid(
                        "initial.path",
                        format!("dump grid {} does not match configured grid {spec}", field.spec()),
                    ));
                }
                return Ok(field.with_time(0).clamped());
            }
            other => {
                return Err(invalid(
                    "initial.kind",
                    format!("unknown kind `{other}` (expected ball, union_of_balls, rectangle or file)"),
                ))
            }
        };
        Ok(condition.render(spec)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub dim: usize,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub sizes: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_quadrature_nodes")]
    pub quadrature_nodes: usize,
    pub pair_cap: Option<u64>,
}

fn default_replicates() -> usize {
    50
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_quadrature_nodes() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphOutputSection {
    pub dir: Option<PathBuf>,
    /// Also write one sampled graph at the smallest size.
    #[serde(default)]
    pub export_graph: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub seed: Option<u64>,
    pub domain: DomainSection,
    pub kernel: KernelSection,
    pub region: Region,
    pub phi: Observable,
    pub compare: CompareSection,
    pub output: Option<GraphOutputSection>,
}

impl GraphConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        read_toml(path)
    }

    pub fn plan(&self, seed: u64) -> CliResult<(LimitSetup, CompareConfig)> {
        let d = &self.domain;
        let lo = d.lo.clone().unwrap_or_else(|| vec![0.0; d.dim]);
        let hi = d.hi.clone().unwrap_or_else(|| vec![1.0; d.dim]);
        if !(1..=3).contains(&d.dim) {
            return Err(invalid("domain.dim", format!("{} is not in 1..=3", d.dim)));
        }
        let domain = BoxDomain::new(d.dim, &lo, &hi)?;
        let setup = LimitSetup {
            domain,
            region: self.region.clone(),
            phi: self.phi.clone(),
            kernel: self.kernel.build(d.dim)?,
        };
        setup.validate()?;
        let c = &self.compare;
        if c.sizes.is_empty() {
            return Err(invalid("compare.sizes", "needs at least one size"));
        }
        if let Some(&n) = c.sizes.iter().find(|&&n| n < 2) {
            return Err(invalid("compare.sizes", format!("{n} is below 2")));
        }
        if c.replicates < 2 {
            return Err(invalid("compare.replicates", "needs at least two"));
        }
        if !(c.epsilon.is_finite() && c.epsilon > 0.0) {
            return Err(invalid("compare.epsilon", "must be positive"));
        }
        if c.quadrature_nodes < 2 {
            return Err(invalid("compare.quadrature_nodes", "needs at least two"));
        }
        let mut config = CompareConfig::new(c.sizes.clone(), c.replicates, c.epsilon, seed);
        config.quadrature_start = c.quadrature_nodes;
        config.pair_cap = c.pair_cap.unwrap_or(DEFAULT_PAIR_CAP);
        Ok((setup, config))
    }
}

/// `[kernel]` alone, for `validate-kernel` with table profiles.
#[derive(Debug, Clone, Deserialize)]
pub struct KernelFile {
    pub kernel: KernelSection,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RunConfig {
        toml::from_str(text).unwrap()
    }

    const BALL: &str = r#"
        [grid]
        dim = 2
        cells = 64
        half_width = 4.0
        [kernel]
        profile = "gaussian"
        sigma = 0.25
        [rule]
        kind = "volume_threshold"
        [initial]
        kind = "ball"
        center = [0.0, 0.0]
        radius = 1.0
    "#;

    #[test]
    fn defaults_fill_in() {
        let plan = parse(BALL).plan(Path::new(".")).unwrap();
        assert_eq!(plan.stop.max_steps, 500);
        assert_eq!(plan.stop.slab_width, Some(2.0 * plan.spec.cell_size()));
        assert!(matches!(plan.rule.kind, RuleKind::VolumeThreshold { alpha } if (alpha - plan.psi0.mass()).abs() < 1e-12));
        assert!((plan.rule.support_radius - 4.0 * plan.psi0.support_radius()).abs() < 1e-12);
    }

    #[test]
    fn alpha_beyond_the_domain_names_alpha() {
        let text = BALL.replace("kind = \"volume_threshold\"", "kind = \"volume_threshold\"\nalpha = 100.0");
        let err = parse(&text).plan(Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("alpha") && err.contains("exceeds domain"), "{err}");
    }

    #[test]
    fn errors_name_their_keys() {
        let cases = [
            ("sigma = 0.25", "sigma = -1.0", "kernel.sigma"),
            ("profile = \"gaussian\"", "profile = \"cauchy\"", "kernel.profile"),
            ("cells = 64", "cells = 4", "grid.cells"),
            ("radius = 1.0", "radius = 0.0", "initial.radius"),
            ("kind = \"volume_threshold\"", "kind = \"clipped_linear\"", "rule.slope"),
        ];
        for (from, to, key) in cases {
            let err = parse(&BALL.replace(from, to)).plan(Path::new(".")).unwrap_err().to_string();
            assert!(err.contains(key), "{key}: {err}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BALL.replace("half_width = 4.0", "half_width = 4.0\nhalfwidth = 2.0");
        assert!(toml::from_str::<RunConfig>(&text).unwrap_err().to_string().contains("halfwidth"));
    }

    #[test]
    fn missing_initial_file_is_a_config_error() {
        let text = BALL.replace("kind = \"ball\"", "kind = \"file\"\npath = \"nope.grid\"");
        let err = parse(&text).plan(Path::new("/nonexistent")).unwrap_err().to_string();
        assert!(err.contains("initial.path"), "{err}");
    }
}
