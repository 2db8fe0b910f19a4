mod config;
mod error;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alphacap_core::engine::{write_trace_csv, DiagnosticsSpec, StepRecord, StopReason};
use alphacap_core::graph::{continuum_compare, sample_graph};
use alphacap_core::symmetry::{
    center_estimate, circle_directions, default_directions, direction_angles, fibonacci_sphere,
    level_set_ball_deviation, max_slab_width, ReflectionTest,
};
use alphacap_core::{Engine, Error, Kernel, Point, ScalarField};
use clap::{Parser, Subcommand};

use config::{GraphConfig, KernelFile, KernelSection, RunConfig};
use error::{CliError, CliResult};
use output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "alphacap", version, about = "Convolve-and-sharpen field evolution, symmetry diagnostics and geometric-graph limits")]
struct Cli {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir` in the configuration.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve a field from a TOML configuration.
    Run { config: PathBuf },
    /// Measure symmetry diagnostics of a grid dump.
    Diagnose {
        dump: PathBuf,
        /// Number of sampled directions (2D: angles on [0, π); 3D: Fibonacci sphere).
        #[arg(long)]
        directions: Option<usize>,
        /// Superlevel thresholds for ball deviations.
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75, 1.0])]
        levels: Vec<f64>,
    },
    /// Compare sampled-graph averages with their continuum limit.
    GraphCompare { config: PathBuf },
    /// Check a kernel: `gaussian:<sigma>`, `inverse_square`, or a TOML file with a [kernel] table.
    ValidateKernel {
        spec: String,
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Dimension used by `raw` normalization.
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
}

const DEFAULT_OUT_DIR: &str = "alphacap-out";

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Run { config } => run(cli, config),
        Command::Diagnose {
            dump,
            directions,
            levels,
        } => diagnose(cli, dump, *directions, levels),
        Command::GraphCompare { config } => graph_compare(cli, config),
        Command::ValidateKernel {
            spec,
            radius,
            samples,
            dim,
        } => validate_kernel(spec, *radius, *samples, *dim),
    }
}

fn out_dir(cli: &Cli, configured: Option<&PathBuf>, base: &Path) -> CliResult<OutDir> {
    let root = match (&cli.out_dir, configured) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => base.join(dir),
        (None, None) => PathBuf::from(DEFAULT_OUT_DIR),
    };
    OutDir::create(&root)
}

fn config_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn directions_for(dim: usize, count: Option<usize>) -> Vec<Point> {
    match (dim, count) {
        (2, Some(n)) => circle_directions(n),
        (3, Some(n)) => fibonacci_sphere(n),
        _ => default_directions(dim),
    }
}

fn run(cli: &Cli, path: &Path) -> CliResult<()> {
    let mut config = RunConfig::load(path)?;
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let base = config_base(path);
    let plan = config.plan(&base)?;
    let out = out_dir(cli, config.output.dir.as_ref(), &base)?;
    let engine = Engine::new(&plan.kernel, plan.rule, plan.spec, plan.backend)?;
    let diag = DiagnosticsSpec {
        every: plan.diagnostics_every,
        directions: directions_for(plan.spec.dim(), plan.directions),
        ..DiagnosticsSpec::every(plan.diagnostics_every, plan.spec.dim())
    };
    let dump_every = config.output.dump_every;
    let snapshots = config.output.snapshots;

    out.dump(&plan.psi0, snapshots)?;
    let mut last_dumped = 0;
    let quiet = cli.quiet;
    let observe = |field: &ScalarField, record: &StepRecord| -> alphacap_core::Result<()> {
        if dump_every > 0 && record.t % dump_every == 0 {
            out.dump(field, snapshots).map_err(into_core)?;
            last_dumped = record.t;
        }
        if !quiet {
            if let Some(s) = &record.symmetry {
                println!(
                    "t = {:>5}  mass = {:.6}  d_t = {:.4}  L1 change = {:.3e}",
                    record.t, record.mass, s.slab_width, record.l1_change
                );
            }
        }
        Ok(())
    };
    let mut outcome = engine.run_observed(&plan.psi0, &plan.stop, &diag, observe)?;
    if outcome.field.time() != last_dumped {
        out.dump(&outcome.field, snapshots)?;
    }
    outcome.trace.seed = config.seed;
    outcome.trace.config = Some(serde_json::to_string(&config).expect("configuration serializes"));
    let dim = plan.spec.dim();
    out.write("trace.csv", |w| write_trace_csv(&outcome.trace, dim, w))?;
    out.write("diagnostics.csv", |w| {
        let angles = if dim == 3 { 2 } else { 1 };
        let mut header = vec!["t".to_string(), "direction".to_string()];
        header.extend((0..angles).map(|i| format!("angle_{i}")));
        header.push("width".into());
        writeln!(w, "{}", header.join(","))?;
        let initial = outcome.trace.initial.iter().map(|s| (0, s));
        let steps = outcome
            .trace
            .records
            .iter()
            .filter_map(|r| r.symmetry.as_ref().map(|s| (r.t, s)));
        for (t, s) in initial.chain(steps) {
            for (k, (u, width)) in diag.directions.iter().zip(&s.widths).enumerate() {
                let a: Vec<String> = direction_angles(u, dim).iter().map(f64::to_string).collect();
                writeln!(w, "{t},{k},{},{width}", a.join(","))?;
            }
        }
        Ok(())
    })?;
    for w in &outcome.trace.warnings {
        eprintln!("warning: {w}");
    }
    if !cli.quiet {
        let reason = match outcome.trace.stop {
            StopReason::MaxSteps => "step limit reached",
            StopReason::SlabWidth => "slab width below limit",
            StopReason::L1Change => "field stopped changing",
        };
        println!(
            "stopped after {} steps ({reason}); outputs in {}",
            outcome.field.time(),
            out.path("").display()
        );
    }
    Ok(())
}

fn into_core(e: CliError) -> Error {
    match e {
        CliError::Core(e) => e,
        CliError::Output { source, .. } | CliError::Input { source, .. } => Error::Io(source),
        other => Error::Io(std::io::Error::other(other.to_string())),
    }
}

fn diagnose(cli: &Cli, path: &Path, directions: Option<usize>, levels: &[f64]) -> CliResult<()> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    let psi = ScalarField::read_dump(&bytes)?;
    let spec = *psi.spec();
    let dim = spec.dim();
    if let Some(n) = directions {
        if n < dim.max(1) {
            return Err(Error::config("directions", format!("needs at least {dim}")).into());
        }
    }
    if let Some(t) = levels.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::config("levels", format!("{t} is not in (0, 1]")).into());
    }
    let dirs = directions_for(dim, directions);
    let test = ReflectionTest::for_field(&psi);
    let max = max_slab_width(&psi, &dirs, &test, spec.cell_size())?;
    let center = center_estimate(&max.per_direction, dim).ok();
    let p = center.map(|c| c.center).unwrap_or([0.0; 3]);
    let deviations: Vec<_> = levels.iter().map(|&t| level_set_ball_deviation(&psi, t, &p)).collect();

    let out = out_dir(cli, None, Path::new("."))?;
    out.write("diagnose_slabs.csv", |w| {
        let angles = if dim == 3 { 2 } else { 1 };
        let mut header: Vec<String> = (0..angles).map(|i| format!("angle_{i}")).collect();
        header.extend(["lower", "lower_opposite", "width"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for m in &max.per_direction {
            let a: Vec<String> = direction_angles(&m.direction, dim).iter().map(f64::to_string).collect();
            writeln!(w, "{},{},{},{}", a.join(","), m.lower, m.lower_opposite, m.reported_width())?;
        }
        Ok(())
    })?;
    out.write("diagnose_levels.csv", |w| {
        writeln!(w, "theta,volume,radius,inner_deficit,outer_excess,epsilon")?;
        for d in &deviations {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                d.theta, d.volume, d.radius, d.inner_deficit, d.outer_excess, d.epsilon
            )?;
        }
        Ok(())
    })?;

    let h = spec.cell_size();
    println!("grid: {spec}, t = {}, mass = {}", psi.time(), psi.mass());
    println!("d_t = {} ({:.3} h)", max.width, max.width / h);
    println!("argmax direction angles = {:?}", direction_angles(&max.direction, dim));
    match center {
        Some(c) => println!("center p = {:?} (residual {})", &c.center[..dim], c.residual),
        None => println!("center p = undetermined"),
    }
    for d in &deviations {
        println!("theta = {}: epsilon = {} ({:.3} h)", d.theta, d.epsilon, d.epsilon / h);
    }
    Ok(())
}

fn graph_compare(cli: &Cli, path: &Path) -> CliResult<()> {
    let config = GraphConfig::load(path)?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let (setup, compare) = config.plan(seed)?;
    let base = config_base(path);
    let out = out_dir(cli, config.output.as_ref().and_then(|o| o.dir.as_ref()), &base)?;
    let result = continuum_compare(&setup, &compare)?;
    out.write("limit_comparison.csv", |w| result.write_csv(w))?;
    if config.output.as_ref().is_some_and(|o| o.export_graph) {
        let n = *compare.sizes.iter().min().expect("sizes validated nonempty");
        let graph = sample_graph(n, &setup.domain, &setup.kernel, seed)?;
        out.write("graph.edges", |w| graph.write_edge_list(w))?;
        out.write("positions.csv", |w| graph.write_positions_csv(w))?;
    }
    if !cli.quiet {
        println!("Z = {} (quadrature error {:e})", result.z, result.z_error);
        for row in &result.rows {
            println!(
                "n = {:>7}  mean Y = {:.6}  mean |Y - Z| = {:.3e}  P(|Y - Z| > eps) = {:.3}  bound = {:.3}{}",
                row.n,
                row.mean_y,
                row.mean_abs_dev,
                row.exceedance,
                row.bound,
                if row.vacuous { " (vacuous)" } else { "" }
            );
        }
    }
    if result.passed() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "limit comparison failed (decreasing deviation: {}, concentration: {})",
            result.monotone_ok, result.concentration_ok
        )))
    }
}

fn parse_kernel_spec(spec: &str, dim: usize) -> CliResult<Kernel> {
    let path = Path::new(spec);
    if path.is_file() {
        let file: KernelFile = config::read_toml(path)?;
        return file.kernel.build(dim);
    }
    let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match name {
        "gaussian" => {
            let sigma: f64 = arg
                .parse()
                .map_err(|_| Error::config("kernel.sigma", format!("`{arg}` is not a number (use gaussian:<sigma>)")))?;
            KernelSection::gaussian(sigma).build(dim)
        }
        "inverse_square" | "inverse-square" if arg.is_empty() => Ok(Kernel::inverse_square()),
        _ => Err(Error::config(
            "kernel",
            format!("`{spec}` is neither a kernel file nor one of gaussian:<sigma>, inverse_square"),
        )
        .into()),
    }
}

fn validate_kernel(spec: &str, radius: f64, samples: usize, dim: usize) -> CliResult<()> {
    let kernel = parse_kernel_spec(spec, dim)?;
    let report = kernel.validate(radius, samples)?;
    for (name, check) in report.checks() {
        match check.worst_radius {
            Some(r) if !check.passed => println!("{name:<20} FAIL (worst at r = {r})"),
            _ => println!("{name:<20} PASS"),
        }
    }
    println!("lipschitz estimate   {}", report.lipschitz_estimate);
    if report.all_passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks()
            .iter()
            .filter(|(_, c)| !c.passed)
            .map(|(n, _)| *n)
            .collect();
        Err(CliError::Failed(format!("kernel check failed: {}", failed.join(", "))))
    }
}
