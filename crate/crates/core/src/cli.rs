//! Batch front-end behind the `tshopfield` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 a certificate,
//! convergence or envelope check failed, 4 integrator failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certificates;
use crate::dynamics::{
    self, EnvelopeCheck, EquilibriumConfig, EquilibriumResult, SimConfig, SolverStats, ENVELOPE_SLACK,
};
use crate::error::{Error, Result};
use crate::io;
use crate::network::{ActivationKind, GameState, Graph, NetworkSpec, NodeParams, PayoffSpec, UpdateMode};
use crate::timescale::TimeScale;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;
pub const EXIT_INTEGRATOR: i32 = 4;

/// Lyapunov slack used for the per-run summary.
const LYAPUNOV_SLACK: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "tshopfield", version, about = "Hopfield-type social-network dynamics on time scales")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every stability certificate and print the report as JSON.
    Certify(CertifyArgs),
    /// Simulate trajectories, write CSV traces and a JSON summary.
    Simulate(SimulateArgs),
    /// Solve for the equilibrium state.
    Equilibrium(EquilibriumArgs),
    /// Iterate the discrete threshold game.
    Game(GameArgs),
    /// Write a generated network description.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct Horizon {
    #[arg(long, value_name = "PATH")]
    pub timescale: PathBuf,
    /// Start time; defaults to the smallest point of the time scale.
    #[arg(long)]
    pub t0: Option<f64>,
    /// End time; defaults to the largest point (or +inf for an unbounded scale).
    #[arg(long)]
    pub tf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, value_name = "PATH")]
    pub network: PathBuf,
    #[command(flatten)]
    pub horizon: Horizon,
    /// Declared graininess bound; defaults to the observed maximum.
    #[arg(long)]
    pub mu_star: Option<f64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_name = "PATH")]
    pub network: PathBuf,
    #[command(flatten)]
    pub horizon: Horizon,
    #[arg(long)]
    pub mu_star: Option<f64>,
    /// Number of trajectories.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial state of run 0 as comma-separated values; other runs start
    /// uniformly in the ball of radius `--radius` around the equilibrium.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub u0: Option<Vec<f64>>,
    /// Sampling radius; defaults to 2 r0.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Relative tolerance of the continuous integrator.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Samples per continuous stretch.
    #[arg(long, default_value_t = 32)]
    pub samples: usize,
    /// Step budget of the continuous integrator, per trajectory.
    #[arg(long, default_value_t = 5_000_000)]
    pub max_steps: usize,
    /// Check the exponential envelope with the certified rate.
    #[arg(long)]
    pub check_envelope: bool,
    /// CSV file for a single run, or a directory for several runs.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    #[arg(long, value_name = "PATH")]
    pub network: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sync,
    Seq,
}

#[derive(Debug, Args)]
pub struct GameArgs {
    #[arg(long, value_name = "PATH")]
    pub network: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Sync)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    pub steps: u64,
    /// `defect`, `cooperate`, `random`, or a comma-separated 0/1 list.
    #[arg(long, default_value = "defect")]
    pub init: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphKind {
    Ring,
    Complete,
    Star,
    ErdosRenyi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Logistic,
    Pwl,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: GraphKind,
    #[arg(long)]
    pub n: usize,
    /// Edge probability for `erdos-renyi`.
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cooperation benefit.
    #[arg(long, default_value_t = 0.04)]
    pub b: f64,
    /// Cooperation cost.
    #[arg(long, default_value_t = 0.02)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub capacitance: f64,
    #[arg(long, default_value_t = 1.0)]
    pub resistance: f64,
    /// Activation slope (Lipschitz constant).
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Activation bound.
    #[arg(long, default_value_t = 1.0)]
    pub bound: f64,
    /// External input J.
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub input: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    /// Cooperation threshold U.
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = ActivationArg::Tanh)]
    pub activation: ActivationArg,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
enum Failure {
    Input(Error),
    Integrator(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::IntegratorFailure { .. } => Failure::Integrator(e),
            other => Failure::Input(other),
        }
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure::Input(Error::InvalidParameter(msg.into()))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr, results to stdout or `--out`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Certify(a) => cmd_certify(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Equilibrium(a) => cmd_equilibrium(&a),
        Command::Game(a) => cmd_game(&a),
        Command::Generate(a) => cmd_generate(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
        Err(Failure::Integrator(e)) => {
            eprintln!("error: {e}");
            EXIT_INTEGRATOR
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            EXIT_CHECK_FAILED
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_net(path: &Path) -> Result<NetworkSpec> {
    io::load_network(path).map_err(|e| with_path(path, e))
}

fn load_ts(path: &Path) -> Result<TimeScale> {
    io::load_timescale(path).map_err(|e| with_path(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    Error::InvalidParameter(format!("{}: {e}", path.display()))
}

fn resolve_horizon(h: &Horizon, ts: &TimeScale) -> Result<(f64, f64)> {
    let t0 = ts.snap(h.t0.unwrap_or_else(|| ts.inf()))?;
    let tf = match h.tf {
        Some(t) => ts.snap(t)?,
        None => ts.sup(),
    };
    if tf < t0 {
        return Err(Error::EmptyHorizon { t0, tf });
    }
    Ok((t0, tf))
}

fn cmd_certify(a: &CertifyArgs) -> std::result::Result<(), Failure> {
    let net = load_net(&a.network)?;
    let ts = load_ts(&a.horizon.timescale)?;
    let (t0, tf) = resolve_horizon(&a.horizon, &ts)?;
    let report = certificates::certify(&net, &ts, t0, tf, a.mu_star)?;
    info!("certify: n = {}, mu* = {}, all_pass = {}", report.n, report.mu_star, report.all_pass);
    if report.lambda_convention_disagreement {
        warn!("degree condition and uniqueness M-matrix test disagree for this network");
    }
    emit(a.out.as_deref(), &io::to_json(&report)?)?;
    if report.all_pass {
        Ok(())
    } else {
        Err(Failure::Check(report.failures.join("; ")))
    }
}

#[derive(Debug, Serialize)]
struct LyapunovSummary {
    pass: bool,
    max_increase: f64,
    violations: usize,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    run: usize,
    u0: Vec<f64>,
    final_state: Vec<f64>,
    samples: usize,
    stats: SolverStats,
    lyapunov: LyapunovSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    envelope: Option<EnvelopeCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    t0: f64,
    tf: f64,
    seed: u64,
    radius: f64,
    equilibrium: EquilibriumResult,
    beta: Option<f64>,
    envelope_checked: bool,
    all_envelopes_pass: Option<bool>,
    all_lyapunov_pass: bool,
    runs: Vec<RunSummary>,
}

fn cmd_simulate(a: &SimulateArgs) -> std::result::Result<(), Failure> {
    if a.runs == 0 {
        return Err(input_error("--runs must be at least 1"));
    }
    let net = load_net(&a.network)?;
    let ts = load_ts(&a.horizon.timescale)?;
    let (t0, tf) = resolve_horizon(&a.horizon, &ts)?;
    if !tf.is_finite() {
        return Err(input_error("--tf is required on an unbounded time scale"));
    }
    let sys = net.build_system();
    let eq = dynamics::find_equilibrium(&sys, &EquilibriumConfig::default());
    if !eq.converged {
        warn!("equilibrium search did not converge (residual {:e}); V is measured against the last iterate", eq.residual);
    }
    let u_star = eq.state();

    let beta = if a.check_envelope {
        let report = certificates::certify(&net, &ts, t0, tf, a.mu_star)?;
        if !report.exponential.pass {
            return Err(Failure::Check(format!(
                "--check-envelope needs a certified rate, but the exponential certificate fails (beta = {})",
                report.exponential.beta
            )));
        }
        Some(report.exponential.beta)
    } else {
        None
    };

    let radius = a.radius.unwrap_or(2.0 * eq.r0);
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(input_error("--radius must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut starts = Vec::with_capacity(a.runs);
    for i in 0..a.runs {
        let sampled = dynamics::sample_ball(&u_star, radius, &mut rng);
        match (&a.u0, i) {
            (Some(u0), 0) => {
                if u0.len() != sys.dim() {
                    return Err(Error::DimensionMismatch { expected: sys.dim(), got: u0.len() }.into());
                }
                starts.push(DVector::from_column_slice(u0));
            }
            _ => starts.push(sampled),
        }
    }

    let cfg = SimConfig { rtol: a.tol, dense_samples: a.samples, max_steps: a.max_steps, ..SimConfig::default() };
    let trajectories = dynamics::simulate_many(&sys, &ts, &starts, t0, tf, &cfg);

    let csv_paths: Vec<Option<PathBuf>> = match &a.out {
        None => vec![None; a.runs],
        Some(p) if a.runs == 1 => vec![Some(p.clone())],
        Some(dir) => {
            fs::create_dir_all(dir).map_err(Error::from)?;
            (0..a.runs).map(|i| Some(dir.join(format!("run_{i:03}.csv")))).collect()
        }
    };

    let mut runs = Vec::with_capacity(a.runs);
    for (i, (traj, path)) in trajectories.into_iter().zip(csv_paths).enumerate() {
        let traj = traj?;
        let trace = dynamics::lyapunov_trace(&traj, &u_star);
        let lyap = dynamics::check_lyapunov_decrease(&traj.times(), &trace, LYAPUNOV_SLACK);
        let envelope = match beta {
            Some(b) => Some(dynamics::verify_envelope(&traj, &u_star, b, &ts, ENVELOPE_SLACK)?),
            None => None,
        };
        if let Some(p) = &path {
            let file = fs::File::create(p).map_err(Error::from)?;
            io::write_trajectory_csv(file, &traj, &u_star, envelope.as_ref().map(|e| e.bounds.as_slice()))?;
        }
        runs.push(RunSummary {
            run: i,
            u0: starts[i].iter().copied().collect(),
            final_state: traj.last().u.iter().copied().collect(),
            samples: traj.samples.len(),
            stats: traj.stats,
            lyapunov: LyapunovSummary {
                pass: lyap.pass,
                max_increase: lyap.max_increase,
                violations: lyap.violations.len(),
            },
            envelope,
            csv: path.map(|p| p.display().to_string()),
        });
    }

    let all_envelopes_pass = beta.map(|_| runs.iter().all(|r| r.envelope.as_ref().is_some_and(|e| e.pass)));
    let summary = SimulationSummary {
        t0,
        tf,
        seed: a.seed,
        radius,
        all_lyapunov_pass: runs.iter().all(|r| r.lyapunov.pass),
        equilibrium: eq,
        beta,
        envelope_checked: beta.is_some(),
        all_envelopes_pass,
        runs,
    };
    emit(None, &io::to_json(&summary)?)?;
    if all_envelopes_pass == Some(false) {
        let bad: Vec<String> = summary
            .runs
            .iter()
            .filter(|r| r.envelope.as_ref().is_some_and(|e| !e.pass))
            .map(|r| r.run.to_string())
            .collect();
        return Err(Failure::Check(format!("envelope violated in runs {}", bad.join(","))));
    }
    Ok(())
}

fn cmd_equilibrium(a: &EquilibriumArgs) -> std::result::Result<(), Failure> {
    if !(a.tol > 0.0) {
        return Err(input_error("--tol must be positive"));
    }
    let net = load_net(&a.network)?;
    let sys = net.build_system();
    let res = dynamics::find_equilibrium(&sys, &EquilibriumConfig { tol: a.tol, max_iter: a.max_iter, ..Default::default() });
    emit(a.out.as_deref(), &io::to_json(&res)?)?;
    if res.converged {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "equilibrium search did not converge after {} iterations (residual {:e})",
            res.iterations, res.residual
        )))
    }
}

fn parse_init(init: &str, n: usize, seed: u64) -> Result<GameState> {
    match init.trim().to_ascii_lowercase().as_str() {
        "defect" => Ok(GameState::all_defect(n)),
        "cooperate" => Ok(GameState::all_cooperate(n)),
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            GameState::new((0..n).map(|_| u8::from(rng.gen::<bool>())).collect())
        }
        list => {
            let states = list
                .split(',')
                .map(|s| s.trim().parse::<u8>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidParameter(format!("bad --init list: {e}")))?;
            if states.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: states.len() });
            }
            GameState::new(states)
        }
    }
}

fn cmd_game(a: &GameArgs) -> std::result::Result<(), Failure> {
    let net = load_net(&a.network)?;
    let init = parse_init(&a.init, net.len(), a.seed)?;
    let mode = match a.mode {
        ModeArg::Sync => UpdateMode::Sync,
        ModeArg::Seq => UpdateMode::Seq,
    };
    let states = crate::network::run_game(&net.graph, &net.payoff, init, &net.thresholds(), mode, a.steps)?;
    let mut buf = Vec::new();
    io::write_game_csv(&mut buf, &states)?;
    emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))?;
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> std::result::Result<(), Failure> {
    if a.n == 0 {
        return Err(input_error("--n must be at least 1"));
    }
    let graph = match a.kind {
        GraphKind::Ring => Graph::ring(a.n),
        GraphKind::Complete => Graph::complete(a.n),
        GraphKind::Star => Graph::star(a.n),
        GraphKind::ErdosRenyi => Graph::erdos_renyi(a.n, a.p, a.seed)?,
    };
    let mut node = NodeParams::new(a.capacitance, a.resistance, a.lambda, a.bound);
    node.input = a.input;
    node.theta = a.theta;
    node.threshold = a.threshold;
    let activation = match a.activation {
        ActivationArg::Tanh => ActivationKind::Tanh,
        ActivationArg::Logistic => ActivationKind::Logistic,
        ActivationArg::Pwl => ActivationKind::Pwl,
    };
    let net = NetworkSpec::uniform(graph, node, PayoffSpec::new(a.b, a.c)?, activation)?;
    emit(a.out.as_deref(), &io::network_json(&net)?)?;
    Ok(())
}
