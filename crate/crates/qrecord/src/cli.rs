//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad input, 3 numerical trouble (including
//! oracle disagreement and boundary leakage), 4 a model that fails to
//! reproduce its table or violates a bound.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qrecord_core::constraints::{
    check_overlap_constraint, check_separation_constraint, ensure_factorizes, ConstraintError,
};
use qrecord_core::fit::{fit, Bounds, FitConfig};
use qrecord_core::flipflop::{
    classical_curve, disagreement_curve, disagreement_probability, numeric_curve, quadrant_disagreement_numeric,
    time_grid, DisagreementCurve, FlipflopError, ModelParams,
};
use qrecord_core::linalg::operator_norm;
use qrecord_core::model::{model_distance, overlap, KnobModel};
use qrecord_core::synthesis::{generate_inequivalent_model, synthesize_model};
use serde::Serialize;

use crate::json::{self, BoundReportDoc, FitResultDoc, JsonError, ModelDoc};
use crate::pde::{
    disagreement_from_grid, init_packet, GridSpec, LeakagePolicy, PdeError, Propagator, LEAKAGE_THRESHOLD,
};
use crate::record::{self, RecordError};
use crate::snapshot::{write_marginals, Snapshot};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_CONSTRAINT: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl ToString) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.to_string(),
        }
    }

    fn numerical(message: impl ToString) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            message: message.to_string(),
        }
    }

    fn constraint(message: impl ToString) -> Self {
        CliError {
            code: EXIT_CONSTRAINT,
            message: message.to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::input(e)
    }
}

impl From<JsonError> for CliError {
    fn from(e: JsonError) -> Self {
        CliError::input(e)
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        CliError::input(e)
    }
}

impl From<FlipflopError> for CliError {
    fn from(e: FlipflopError) -> Self {
        match e {
            FlipflopError::WidthOverflow { .. } | FlipflopError::Quadrature(_) => CliError::numerical(e),
            _ => CliError::input(e),
        }
    }
}

impl From<PdeError> for CliError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Leakage { .. } | PdeError::Fit(_) => CliError::numerical(e),
            _ => CliError::input(e),
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "qrecord", version, about = "Metastable recorder model: simulation, oracle, synthesis, checks and fitting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a disagreement-probability curve as CSV.
    Simulate(SimulateArgs),
    /// Compare the closed form against a split-step solution on a grid.
    Oracle(OracleArgs),
    /// Build a model that reproduces a relative-frequency table.
    Synthesize(SynthesizeArgs),
    /// Check a model against a table: factorization and both bounds.
    Check(CheckArgs),
    /// Fit (omega, lambda, b) to a recorded curve.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
pub struct PacketArgs {
    #[arg(long, default_value_t = 1.81, allow_hyphen_values = true)]
    pub lambda: f64,
    /// Initial packet width in natural length units.
    #[arg(long, default_value_t = 0.556, allow_hyphen_values = true)]
    pub b: f64,
    /// Bias of the initial packet.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub c: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub packet: PacketArgs,
    #[arg(long, default_value_t = 6.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Override (hbar / m omega b^2)^2; defaults to 1/b^4.
    #[arg(long)]
    pub hfac: Option<f64>,
    /// Use the classical-limit curve instead of the quantum one.
    #[arg(long, conflicts_with_all = ["numeric", "hfac"])]
    pub classical: bool,
    /// Angular frequency for the classical curve; times are then physical.
    #[arg(long, default_value_t = 1.0, requires = "classical")]
    pub omega: f64,
    /// Integrate the quadrant density numerically (needed when c != 0).
    #[arg(long)]
    pub numeric: bool,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub packet: PacketArgs,
    /// Grid points per axis (a power of two, at least 64).
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Half width of the square domain.
    #[arg(long = "L", default_value_t = 12.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 0.005)]
    pub dt: f64,
    #[arg(long, default_value_t = 3.0)]
    pub t_max: f64,
    /// Spacing of the comparison times.
    #[arg(long, default_value_t = 0.5)]
    pub t_step: f64,
    #[arg(long, default_value_t = 5e-3)]
    pub tol: f64,
    /// Stop with exit code 3 as soon as the boundary band carries mass.
    #[arg(long)]
    pub strict_leakage: bool,
    /// Binary dump of the final grid state.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// CSV of the final x and y marginals.
    #[arg(long)]
    pub marginals: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Relative-frequency table (JSON).
    pub table: PathBuf,
    /// Where to write the model; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write a second, inequivalent model reproducing the same table.
    #[arg(long, value_name = "PATH", requires = "seed")]
    pub inequivalent: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub model: PathBuf,
    pub table: PathBuf,
    /// Where to write the reports; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Record CSV (`t,probability`).
    pub record: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub omega_min: f64,
    #[arg(long, default_value_t = 4.0)]
    pub omega_max: f64,
    #[arg(long, default_value_t = 0.2, allow_hyphen_values = true)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 0.2)]
    pub b_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub b_max: f64,
    /// Fix omega instead of fitting it.
    #[arg(long)]
    pub pin_omega: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub grid_seeds: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    /// Where to write the result; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write `t,probability,fitted` for plotting.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Oracle(a) => oracle(a),
        Command::Synthesize(a) => synthesize(a),
        Command::Check(a) => check(a),
        Command::Fit(a) => fit_record(a),
    }
}

fn require_input(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::input(format!("input file {} does not exist", path.display())))
    }
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(CliError::input)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult {
    let times = time_grid(a.t_max, a.dt)?;
    let curve = if a.classical {
        classical_curve(&times, a.packet.lambda, a.omega)?
    } else {
        let params = match a.hfac {
            Some(h) => ModelParams::with_hfac(a.packet.lambda, a.packet.b, a.packet.c, h)?,
            None => ModelParams::new(a.packet.lambda, a.packet.b, a.packet.c)?,
        };
        if a.numeric {
            numeric_curve(&times, &params)?
        } else if a.packet.c != 0.0 {
            return Err(CliError::input(
                "the closed form needs c = 0; pass --numeric to integrate the biased density",
            ));
        } else {
            disagreement_curve(&times, &params)?
        }
    };
    record::write_record(&curve, sink(a.output.as_deref())?)?;
    Ok(())
}

fn analytic_at(t: f64, p: &ModelParams) -> Result<f64, FlipflopError> {
    if p.c == 0.0 {
        disagreement_probability(t, p)
    } else {
        quadrant_disagreement_numeric(t, p)
    }
}

fn oracle(a: OracleArgs) -> CliResult {
    let params = ModelParams::new(a.packet.lambda, a.packet.b, a.packet.c)?;
    let spec = GridSpec::new(a.n, a.half_width, a.dt)?;
    let times = time_grid(a.t_max, a.t_step)?;
    let policy = if a.strict_leakage {
        LeakagePolicy::Error
    } else {
        LeakagePolicy::Record
    };
    let mut state = init_packet(spec, params.b, params.c)?;
    let propagator = Propagator::new(spec, params.lambda);

    let mut report = String::new();
    let _ = writeln!(
        report,
        "# lambda={} b={} c={} n={} L={} dt={}",
        params.lambda, params.b, params.c, a.n, a.half_width, a.dt
    );
    let _ = writeln!(report, "t,analytic,grid,abs_error,boundary_mass");
    let mut worst: f64 = 0.0;
    let mut max_band: f64 = state.boundary_mass();
    let mut onset = None;
    for &t in &times {
        let step = propagator.evolve(&mut state, t, policy)?;
        max_band = max_band.max(step.max_boundary_mass);
        onset = onset.or(step.leakage_onset);
        let exact = analytic_at(t, &params)?;
        let grid = disagreement_from_grid(&state);
        let err = (exact - grid).abs();
        worst = worst.max(err);
        let _ = writeln!(report, "{t},{exact:.10},{grid:.10},{err:.3e},{:.3e}", state.boundary_mass());
    }
    let passed = worst <= a.tol;
    let _ = writeln!(
        report,
        "# max abs error {worst:.3e} (tol {:.1e}): {}",
        a.tol,
        if passed { "PASS" } else { "FAIL" }
    );
    match onset {
        Some(t) => {
            let _ = writeln!(
                report,
                "# boundary mass exceeded {LEAKAGE_THRESHOLD:e} from t = {t:.3} (max {max_band:.3e})"
            );
        }
        None => {
            let _ = writeln!(report, "# max boundary mass {max_band:.3e}");
        }
    }
    print!("{report}");

    if let Some(path) = &a.snapshot {
        Snapshot::of(&state).save(path)?;
    }
    if let Some(path) = &a.marginals {
        write_marginals(&state, BufWriter::new(File::create(path)?))?;
    }
    if passed {
        Ok(())
    } else {
        let mut msg = format!("grid and closed form differ by {worst:.3e} > {:.1e}", a.tol);
        if onset.is_some() {
            msg.push_str("; the packet reached the boundary, enlarge the domain (--L)");
        }
        Err(CliError::numerical(msg))
    }
}

fn max_pairwise_overlap(model: &KnobModel) -> Result<f64, CliError> {
    let n_a = model.space().n_a();
    let mut worst: f64 = 0.0;
    for a1 in 0..n_a {
        for a2 in a1 + 1..n_a {
            let o = overlap(model.rho(a1), model.rho(a2)).map_err(CliError::numerical)?;
            worst = worst.max(o);
        }
    }
    Ok(worst)
}

fn synthesize(a: SynthesizeArgs) -> CliResult {
    require_input(&a.table)?;
    let nu = json::load_table(&a.table)?;
    let synth = synthesize_model(&nu);
    let model = &synth.model;
    let (fact_err, _) = model.factorization_error(&nu).map_err(CliError::numerical)?;
    let max_overlap = max_pairwise_overlap(model)?;
    emit_json(&ModelDoc::from_model(model), a.output.as_deref())?;
    eprintln!("dimension {}", model.dim());
    eprintln!("max factorization error {fact_err:.3e}");
    eprintln!("max pairwise overlap {max_overlap:.3e}");

    if let (Some(path), Some(seed)) = (&a.inequivalent, a.seed) {
        let inq = generate_inequivalent_model(&nu, seed).map_err(CliError::input)?;
        let distance = model_distance(model, &inq.model).map_err(CliError::numerical)?;
        let gap = operator_norm(&(inq.model.effect(inq.b1, inq.outcome) - inq.model.effect(inq.b2, inq.outcome)));
        json::write_json(&ModelDoc::from_model(&inq.model), path)?;
        let labels = nu.space();
        eprintln!(
            "inequivalent model: dimension {}, distance {distance:.3e}, norm gap {gap:.6} between E({})({}) and E({})({})",
            inq.model.dim(),
            labels.b_settings()[inq.b1],
            labels.outcomes()[inq.outcome],
            labels.b_settings()[inq.b2],
            labels.outcomes()[inq.outcome],
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckDoc {
    factorizes: bool,
    overlap: BoundReportDoc,
    separation: BoundReportDoc,
}

fn check(a: CheckArgs) -> CliResult {
    require_input(&a.model)?;
    require_input(&a.table)?;
    let model = json::load_model(&a.model)?;
    let nu = json::load_table(&a.table)?;
    if model.space() != nu.space() {
        return Err(CliError::input("model and table are defined over different knob spaces"));
    }
    match ensure_factorizes(&model, &nu) {
        Ok(()) => {}
        Err(e @ ConstraintError::Factorization { .. }) => return Err(CliError::constraint(e)),
        Err(e) => return Err(CliError::input(e)),
    }
    let overlap = check_overlap_constraint(&model, &nu).map_err(CliError::numerical)?;
    let separation = check_separation_constraint(&model, &nu).map_err(CliError::numerical)?;
    let ok = overlap.all_satisfied() && separation.all_satisfied();
    emit_json(
        &CheckDoc {
            factorizes: true,
            overlap: BoundReportDoc::from_report(&overlap),
            separation: BoundReportDoc::from_report(&separation),
        },
        a.output.as_deref(),
    )?;
    if ok {
        Ok(())
    } else {
        Err(CliError::constraint("the model violates a bound"))
    }
}

fn fit_record(a: FitArgs) -> CliResult {
    require_input(&a.record)?;
    let data: DisagreementCurve = record::load_record_csv(&a.record)?;
    let config = FitConfig {
        omega: Bounds::new(a.omega_min, a.omega_max),
        lambda: Bounds::new(a.lambda_min, a.lambda_max),
        b: Bounds::new(a.b_min, a.b_max),
        grid_seeds: a.grid_seeds,
        tolerance: a.tolerance,
        max_iters: a.max_iters,
        pinned_omega: a.pin_omega,
        ..FitConfig::default()
    };
    let result = fit(&data, &config).map_err(CliError::input)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    if !result.converged {
        eprintln!("warning: the fit did not converge");
    }
    emit_json(&FitResultDoc::from_result(&result), a.output.as_deref())?;
    if let Some(path) = &a.curve {
        let fitted: Vec<f64> = data
            .probabilities()
            .iter()
            .zip(&result.residuals)
            .map(|(p, r)| p + r)
            .collect();
        record::write_fitted(&data, &fitted, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}
