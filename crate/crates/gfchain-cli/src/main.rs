//! Command line front end: transition matrices, invariant measures,
//! trajectories, refinement studies, and drift diagnostics, each printed
//! as a short summary on stdout and written in full precision as CSV.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gfchain::analysis::{
    drift_check, refinement_study, tail_check, write_convergence_csv, write_diagnostics_rows,
    DiagnosticsReport,
};
use gfchain::measure::{invariant_measure, PiecewiseUniformMeasure};
use gfchain::sampler::{simulate_path, write_trajectory_csv};
use gfchain::{Grid, ModelSpec, TransitionMatrix};

#[derive(Parser)]
#[command(
    name = "gfchain",
    version,
    about = "Growth-fragmentation chains: transition kernels, invariant measures, \
             trajectories, refinement studies, and drift diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the dense transition matrix as CSV
    Kernel(Common),
    /// Power-iterate to the invariant measure and write it as CSV
    Invariant(Common),
    /// Simulate one seeded trajectory and write it as CSV
    Simulate(Common),
    /// Run a mesh refinement study and write per-level errors as CSV
    Refine(Common),
    /// Check the drift and tail inequalities and write the results as CSV
    Check(Common),
}

/// Options shared by every subcommand; each ignores what it does not use.
#[derive(Args, Clone, Default)]
struct Common {
    /// Built-in model name (example1 .. example4)
    #[arg(long)]
    model: Option<String>,

    /// Tabulated ratio: CSV of grid point and value (needs --a and --nx)
    #[arg(long)]
    table: Option<PathBuf>,

    /// Upper bound of the size grid (default 5; refine defaults to 10)
    #[arg(long)]
    a: Option<f64>,

    /// Number of grid cells, even (default 500)
    #[arg(long)]
    nx: Option<usize>,

    /// l1 tolerance of power iteration (default 1e-12)
    #[arg(long)]
    tol: Option<f64>,

    /// Power iteration cap (default 100000)
    #[arg(long)]
    max_iter: Option<usize>,

    /// Trajectory seed (default 0)
    #[arg(long)]
    seed: Option<u64>,

    /// Trajectory length (default 10000)
    #[arg(long)]
    steps: Option<usize>,

    /// Trajectory initial size (default a/2)
    #[arg(long)]
    init: Option<f64>,

    /// Refinement levels (default 4)
    #[arg(long)]
    levels: Option<usize>,

    /// Coarsest mesh of the refinement study (default 0.1)
    #[arg(long)]
    h_max: Option<f64>,

    /// Output CSV path (default per subcommand)
    #[arg(long)]
    out: Option<PathBuf>,

    /// key=value file supplying defaults for the options above
    #[arg(long)]
    config: Option<PathBuf>,
}

/// CLI failure classes, one exit code each.
enum CliError {
    /// Anything wrong with the request itself: exit 2.
    Invalid(String),
    /// Power iteration ran out of budget: exit 3.
    NoConvergence(String),
    /// The output file could not be written: exit 4.
    Output(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::NoConvergence(_) => 3,
            CliError::Output(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Invalid(d) => format!("invalid input: {d}"),
            CliError::NoConvergence(d) => format!("no convergence: {d}"),
            CliError::Output(d) => format!("output: {d}"),
        }
    }
}

impl From<gfchain::Error> for CliError {
    fn from(e: gfchain::Error) -> Self {
        match e {
            gfchain::Error::NonConvergence { .. } => CliError::NoConvergence(e.to_string()),
            gfchain::Error::Io(_) => CliError::Output(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Kernel(c) => kernel_cmd(merged(c)?),
        Command::Invariant(c) => invariant_cmd(merged(c)?),
        Command::Simulate(c) => simulate_cmd(merged(c)?),
        Command::Refine(c) => refine_cmd(merged(c)?),
        Command::Check(c) => check_cmd(merged(c)?),
    }
}

/// Applies the config file under the explicit flags: a flag given on the
/// command line always wins, and choosing a ratio source on the command
/// line masks both `model` and `table` keys of the file.
fn merged(mut c: Common) -> Result<Common, CliError> {
    if let Some(path) = c.config.take() {
        let cfg = read_config(&path)?;
        if c.model.is_none() && c.table.is_none() {
            c.model = cfg.model;
            c.table = cfg.table;
        }
        c.a = c.a.or(cfg.a);
        c.nx = c.nx.or(cfg.nx);
        c.tol = c.tol.or(cfg.tol);
        c.max_iter = c.max_iter.or(cfg.max_iter);
        c.seed = c.seed.or(cfg.seed);
        c.steps = c.steps.or(cfg.steps);
        c.init = c.init.or(cfg.init);
        c.levels = c.levels.or(cfg.levels);
        c.h_max = c.h_max.or(cfg.h_max);
        c.out = c.out.or(cfg.out);
    }
    if c.model.is_some() && c.table.is_some() {
        return Err(CliError::Invalid("give either --model or --table, not both".into()));
    }
    Ok(c)
}

/// Parses a `key = value` file using the long option names; dashes and
/// underscores in keys are interchangeable. Unknown keys are errors.
fn read_config(path: &Path) -> Result<Common, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = Common::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Invalid(format!(
                "config line {}: expected key = value, got `{line}`",
                idx + 1
            )));
        };
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "model" => cfg.model = Some(value.to_string()),
            "table" => cfg.table = Some(PathBuf::from(value)),
            "a" => cfg.a = Some(parse_value(&key, value)?),
            "nx" => cfg.nx = Some(parse_value(&key, value)?),
            "tol" => cfg.tol = Some(parse_value(&key, value)?),
            "max_iter" => cfg.max_iter = Some(parse_value(&key, value)?),
            "seed" => cfg.seed = Some(parse_value(&key, value)?),
            "steps" => cfg.steps = Some(parse_value(&key, value)?),
            "init" => cfg.init = Some(parse_value(&key, value)?),
            "levels" => cfg.levels = Some(parse_value(&key, value)?),
            "h_max" => cfg.h_max = Some(parse_value(&key, value)?),
            "out" => cfg.out = Some(PathBuf::from(value)),
            other => {
                return Err(CliError::Invalid(format!(
                    "config line {}: unknown key `{other}`",
                    idx + 1
                )));
            }
        }
    }
    Ok(cfg)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| {
        CliError::Invalid(format!("config key `{key}`: cannot parse `{value}`: {e}"))
    })
}

/// Grid points for stdout summaries: six decimals, trailing zeros
/// trimmed, so `12 * 0.05` prints as `0.6` and not `0.6000000000000001`.
/// CSV output is unaffected and stays full precision.
fn tidy(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn build_grid(a: f64, nx: usize) -> Result<Grid, CliError> {
    let grid = Grid::new(a, nx)?;
    for w in grid.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(grid)
}

/// Tabulated models have no defaults to fall back on: the grid the table
/// lives on must be stated.
fn require_table_grid(c: &Common) -> Result<(), CliError> {
    if c.table.is_some() && (c.a.is_none() || c.nx.is_none()) {
        return Err(CliError::Invalid(
            "a table model needs explicit --a and --nx to define its grid".into(),
        ));
    }
    Ok(())
}

fn builtin_model(c: &Common) -> Result<ModelSpec, CliError> {
    let name = c.model.as_deref().unwrap_or("example1");
    ModelSpec::builtin(name).ok_or_else(|| {
        CliError::Invalid(format!(
            "unknown model `{name}` (built-ins: example1, example2, example3, example4)"
        ))
    })
}

fn resolve_model(c: &Common, grid: Grid) -> Result<ModelSpec, CliError> {
    match &c.table {
        Some(path) => load_table(path, grid),
        None => builtin_model(c),
    }
}

/// Reads a two-column CSV of grid point and ratio value. Blank lines and
/// `#` comments are skipped and one optional `x,s` header is accepted;
/// each data row must sit on its grid point to within 1e-9 relative.
fn load_table(path: &Path, grid: Grid) -> Result<ModelSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read table {}: {e}", path.display())))?;
    let mut values: Vec<f64> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if values.is_empty() && line.eq_ignore_ascii_case("x,s") {
            continue;
        }
        let Some((xs, vs)) = line.split_once(',') else {
            return Err(CliError::Invalid(format!(
                "table line {}: expected `x,value`, got `{line}`",
                idx + 1
            )));
        };
        let x: f64 = parse_value("x", xs.trim())?;
        let v: f64 = parse_value("value", vs.trim())?;
        if values.len() == grid.n_x() {
            return Err(CliError::Invalid(format!(
                "table has more rows than the {} grid cells",
                grid.n_x()
            )));
        }
        let want = grid.point(values.len() + 1);
        if (x - want).abs() > 1e-9 * want.abs().max(1.0) {
            return Err(CliError::Invalid(format!(
                "table row {}: x = {x} does not match grid point {want}",
                values.len() + 1
            )));
        }
        values.push(v);
    }
    if values.len() != grid.n_x() {
        return Err(CliError::Invalid(format!(
            "table has {} rows, the grid needs {}",
            values.len(),
            grid.n_x()
        )));
    }
    Ok(ModelSpec::from_table(grid, values)?)
}

fn write_out<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> gfchain::Result<()>,
{
    let file = File::create(path)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write(&mut w)
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))?;
    w.flush()
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

fn kernel_cmd(c: Common) -> Result<(), CliError> {
    require_table_grid(&c)?;
    let a = c.a.unwrap_or(5.0);
    let nx = c.nx.unwrap_or(500);
    let grid = build_grid(a, nx)?;
    let model = resolve_model(&c, grid)?;
    let matrix = TransitionMatrix::build(&model, grid)?;
    println!("kernel: {} on (0, {}] with {} cells", model.tag(), a, nx);
    let out = c.out.unwrap_or_else(|| PathBuf::from("kernel.csv"));
    write_out(&out, |w| matrix.write_csv(w))?;
    let dim = matrix.dim();
    println!("kernel: wrote {dim} x {dim} matrix to {}", out.display());
    Ok(())
}

fn invariant_cmd(c: Common) -> Result<(), CliError> {
    require_table_grid(&c)?;
    let a = c.a.unwrap_or(5.0);
    let nx = c.nx.unwrap_or(500);
    let tol = c.tol.unwrap_or(1e-12);
    let max_iter = c.max_iter.unwrap_or(100_000);
    let grid = build_grid(a, nx)?;
    let model = resolve_model(&c, grid)?;
    let matrix = TransitionMatrix::build(&model, grid)?;
    println!("invariant: {} on (0, {}] with {} cells", model.tag(), a, nx);
    let start = PiecewiseUniformMeasure::uniform(grid);
    let (pi, iterations) = invariant_measure(&matrix, &start, tol, max_iter)?;
    println!("invariant: converged in {iterations} iterations to l1 tolerance {tol:e}");
    let masses = pi.masses();
    let peak = masses
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(k, _)| k)
        .unwrap();
    println!(
        "invariant: mode in ({}, {}], mass {:.1e}",
        tidy(grid.point(peak)),
        tidy(grid.point(peak + 1)),
        masses[peak]
    );
    let out = c.out.unwrap_or_else(|| PathBuf::from("invariant.csv"));
    write_out(&out, |w| pi.write_csv(w))?;
    println!("invariant: wrote {} cells to {}", pi.len(), out.display());
    Ok(())
}

fn simulate_cmd(c: Common) -> Result<(), CliError> {
    require_table_grid(&c)?;
    let a = c.a.unwrap_or(5.0);
    let nx = c.nx.unwrap_or(500);
    let seed = c.seed.unwrap_or(0);
    let steps = c.steps.unwrap_or(10_000);
    let init = c.init.unwrap_or(a / 2.0);
    let grid = build_grid(a, nx)?;
    let model = resolve_model(&c, grid)?;
    println!("simulate: {} on (0, {}] with {} cells", model.tag(), a, nx);
    let sizes = simulate_path(&model, grid, init, steps, seed)?;
    println!("simulate: {steps} steps from {init} with seed {seed}");
    let out = c.out.unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    write_out(&out, |w| write_trajectory_csv(w, &sizes))?;
    println!("simulate: wrote {} sizes to {}", sizes.len(), out.display());
    Ok(())
}

fn refine_cmd(c: Common) -> Result<(), CliError> {
    if c.table.is_some() {
        return Err(CliError::Invalid(
            "a tabulated ratio is pinned to one grid and cannot drive a refinement study".into(),
        ));
    }
    let a = c.a.unwrap_or(10.0);
    let h_max = c.h_max.unwrap_or(0.1);
    let levels = c.levels.unwrap_or(4);
    let tol = c.tol.unwrap_or(1e-12);
    let model = builtin_model(&c)?;
    let report = refinement_study(&model, a, h_max, levels, tol)?;
    println!(
        "refine: {} on (0, {}], h from {} down to {}",
        model.tag(),
        a,
        h_max,
        report.levels.last().expect("at least two levels").h
    );
    println!("refine: {:>10}  {:>12}  {:>8}", "h", "error", "ratio");
    for (j, level) in report.levels.iter().enumerate() {
        let ratio = if j == 0 { "-".to_string() } else { format!("{:.3}", report.ratios[j - 1]) };
        println!("refine: {:>10}  {:>12.4e}  {:>8}", level.h, level.tv_error, ratio);
    }
    match (report.order_all, report.order_tail) {
        (Some(o), Some(t)) => println!("refine: fitted order {o:.3} (tail {t:.3})"),
        (Some(o), None) => println!("refine: fitted order {o:.3}"),
        _ => println!("refine: too few levels to fit an order"),
    }
    let out = c.out.unwrap_or_else(|| PathBuf::from("convergence.csv"));
    write_out(&out, |w| write_convergence_csv(w, &report))?;
    println!("refine: wrote {} levels to {}", report.levels.len(), out.display());
    Ok(())
}

fn check_cmd(c: Common) -> Result<(), CliError> {
    if c.table.is_some() {
        return Err(CliError::Invalid(
            "drift checks need growth bounds and an integrable ratio; tabulated models have neither"
                .into(),
        ));
    }
    let model = builtin_model(&c)?;
    let gp = model.growth_params().ok_or_else(|| {
        CliError::Invalid(format!("model `{}` declares no growth bounds", model.tag()))
    })?;

    // Sample where the theory applies: strictly above twice the growth
    // threshold for the drift, and cutoffs from x' = x upward for the tail.
    let shift = 2.0 * gp.x0;
    let drift_xs: Vec<f64> = [2.0, 3.0, 4.0, 6.0].iter().map(|d| d + shift).collect();
    let tail_x = 1.0 + shift;
    let tail_xps = [tail_x, tail_x + 1.0, tail_x + 2.0];

    let drift = drift_check(&model, &drift_xs)?;
    let tail = tail_check(&model, tail_x, &tail_xps)?;

    println!("check: {} drift at {} sizes, tail from x = {}", model.tag(), drift_xs.len(), tail_x);
    let report_lines = |label: &str, report: &DiagnosticsReport| {
        for s in &report.samples {
            println!(
                "check: {label} {}: lhs {:.6e} bound {:.6e} {}",
                s.x,
                s.lhs,
                s.bound,
                if s.pass { "pass" } else { "FAIL" }
            );
        }
    };
    report_lines("drift at x =", &drift);
    report_lines("tail at x' =", &tail);
    let total = drift.samples.len() + tail.samples.len();
    let passed = drift.samples.iter().chain(&tail.samples).filter(|s| s.pass).count();
    println!("check: {passed} of {total} samples pass");

    let out = c.out.unwrap_or_else(|| PathBuf::from("diagnostics.csv"));
    write_out(&out, |w| {
        writeln!(w, "x,lhs,bound,pass")?;
        writeln!(w, "# drift")?;
        write_diagnostics_rows(w, &drift)?;
        writeln!(w, "# tail x={tail_x}")?;
        write_diagnostics_rows(w, &tail)
    })?;
    println!("check: wrote {total} rows to {}", out.display());
    Ok(())
}
