use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use loopgnss::eval::{evaluate as evaluate_trajectories, EvalError, EvaluationReport};
use loopgnss::graph::OptimizerReport;
use loopgnss::io::{
    parse_rinex_obs_with, read_graph_json, read_satellite_states, read_trajectory_csv, write_graph_json,
    write_rinex_obs, write_satellite_states, write_trajectory_csv, ConfigFile, EdgeKind, GraphExport, IoError,
    RinexHeader, RinexOptions, TrajectoryRecord, TrajectoryStatus,
};
use loopgnss::pipeline::{run_pipeline, FixCounts, PipelineError, PipelineInput};
use loopgnss::simulator;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OBS_FILE: &str = "obs.rnx";
pub const TRUTH_FILE: &str = "truth.csv";
pub const SAT_STATES_FILE: &str = "sat_states.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const GRAPH_FILE: &str = "graph.json";
pub const REPORT_FILE: &str = "report.json";
pub const LOG_FILE: &str = "solve.log";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("optimizer did not converge after {iterations} iterations (outputs were written)")]
    NotConverged { iterations: usize },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Solver(String),
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Content errors are parse failures; reader and writer failures are I/O.
fn from_io(path: &Path, e: IoError) -> CliError {
    if e.is_io() {
        io_error(path, e)
    } else {
        CliError::Parse(format!("{}: {e}", path.display()))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| io_error(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush().map_err(|e| io_error(path, e))
}

fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    ConfigFile::from_toml(&text).map_err(|e| from_io(path, e))
}

pub fn simulate(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?.scenario;
    let data = simulator::simulate(&cfg).map_err(|e| CliError::Parse(format!("{}: {e}", config.display())))?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;

    let path = out.join(OBS_FILE);
    let mut w = create(&path)?;
    write_rinex_obs(&RinexHeader::for_epochs("SIMULATED", &data.epochs), &data.epochs, &mut w)
        .map_err(|e| from_io(&path, e.into()))?;
    finish(&path, w)?;

    let path = out.join(TRUTH_FILE);
    let mut w = create(&path)?;
    let truth = data
        .truth
        .iter()
        .map(|t| TrajectoryRecord::new(t.time, t.position, TrajectoryStatus::Truth))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| from_io(&path, e))?;
    write_trajectory_csv(&truth, &mut w).map_err(|e| from_io(&path, e))?;
    finish(&path, w)?;

    let path = out.join(SAT_STATES_FILE);
    let mut w = create(&path)?;
    let times: Vec<_> = data.epochs.iter().map(|e| e.time).collect();
    let channels = loopgnss::io::glonass_channels(&data.epochs);
    write_satellite_states(&times, &data.satellites, &channels, &mut w).map_err(|e| from_io(&path, e))?;
    finish(&path, w)?;

    log::info!("simulated {} epochs into {}", data.epochs.len(), out.display());
    Ok(())
}

pub struct SolveArgs {
    pub obs: PathBuf,
    pub sat_states: PathBuf,
    pub config: PathBuf,
    pub out: PathBuf,
    pub use_trrtk: bool,
    pub use_pseudorange: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCounts {
    pub velocity: usize,
    pub trrtk: usize,
    pub pseudorange: usize,
    pub prior: usize,
}

/// Machine-readable summary of a solve run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method_label: String,
    pub epochs: usize,
    pub parser_warnings: usize,
    pub optimizer: OptimizerReport,
    pub factors: FactorCounts,
    /// Loop-closure outcomes by time difference (s).
    pub fix_histogram: BTreeMap<u64, FixCounts>,
}

pub fn method_label(use_trrtk: bool) -> &'static str {
    if use_trrtk {
        "TR-RTK"
    } else {
        "w/o TR-RTK"
    }
}

pub fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.config)?;
    config.solver.use_trrtk = args.use_trrtk;
    config.solver.graph.use_pseudorange &= args.use_pseudorange;

    let sidecar = read_satellite_states(open(&args.sat_states)?).map_err(|e| from_io(&args.sat_states, e))?;
    let options = RinexOptions { glonass_channels: sidecar.glonass_channels.clone() };
    let obs = parse_rinex_obs_with(open(&args.obs)?, &options).map_err(|e| from_io(&args.obs, e.into()))?;
    let satellites = sidecar.align(&obs.epochs).map_err(|e| from_io(&args.sat_states, e))?;

    let scenario = &config.scenario;
    let input =
        PipelineInput { epochs: &obs.epochs, satellites: &satellites, iono: &scenario.iono, tropo: &scenario.tropo };
    let out = run_pipeline(&input, &config.solver).map_err(|e| match e {
        PipelineError::LengthMismatch { .. } => CliError::Parse(e.to_string()),
        other => CliError::Solver(other.to_string()),
    })?;

    let label = method_label(args.use_trrtk);
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;

    let path = args.out.join(TRAJECTORY_FILE);
    let mut records = Vec::with_capacity(2 * out.times.len());
    for (positions, status) in
        [(&out.initial_positions, TrajectoryStatus::Initial), (&out.positions, TrajectoryStatus::Optimized)]
    {
        for (t, p) in out.times.iter().zip(positions) {
            records.push(TrajectoryRecord::new(*t, *p, status).map_err(|e| CliError::Solver(e.to_string()))?);
        }
    }
    let mut w = create(&path)?;
    write_trajectory_csv(&records, &mut w).map_err(|e| from_io(&path, e))?;
    finish(&path, w)?;

    let mut export = GraphExport::new(&out.graph, &out.states);
    export.trrtk_window = Some(config.solver.trrtk.max_time_difference);
    export.report = Some(out.report.clone());
    let path = args.out.join(GRAPH_FILE);
    let mut w = create(&path)?;
    write_graph_json(&export, &mut w).map_err(|e| from_io(&path, e))?;
    finish(&path, w)?;

    let report = SolveReport {
        method_label: label.to_string(),
        epochs: out.times.len(),
        parser_warnings: obs.warnings.len(),
        optimizer: out.report.clone(),
        factors: FactorCounts {
            velocity: out.graph.velocity_factors.len(),
            trrtk: out.graph.trrtk_factors.len(),
            pseudorange: out.graph.pseudorange_factors.len(),
            prior: out.graph.priors.len(),
        },
        fix_histogram: out.fix_histogram.clone(),
    };
    let path = args.out.join(REPORT_FILE);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| io_error(&path, e))?;
    finish(&path, w)?;

    let path = args.out.join(LOG_FILE);
    let text = solve_log(&report);
    fs::write(&path, &text).map_err(|e| io_error(&path, e))?;
    print!("{text}");

    if !out.report.converged {
        return Err(CliError::NotConverged { iterations: out.report.iterations });
    }
    Ok(())
}

fn solve_log(r: &SolveReport) -> String {
    let mut s = String::new();
    let o = &r.optimizer;
    let _ = writeln!(s, "method: {}", r.method_label);
    let _ = writeln!(s, "epochs: {} (parser warnings: {})", r.epochs, r.parser_warnings);
    let _ = writeln!(
        s,
        "factors: velocity {}, loop closure {}, pseudorange {}, prior {}",
        r.factors.velocity, r.factors.trrtk, r.factors.pseudorange, r.factors.prior
    );
    let _ = writeln!(
        s,
        "optimizer: cost {:.6} -> {:.6}, {} iterations, converged {}, relinearizations {}",
        o.initial_cost, o.final_cost, o.iterations, o.converged, o.relinearizations
    );
    if !r.fix_histogram.is_empty() {
        let _ = writeln!(s, "loop closures by time difference:");
        let _ = writeln!(
            s,
            "  {:>6} {:>9} {:>7} {:>9} {:>7} {:>9}",
            "dt [s]", "attempted", "fixed", "rejected", "failed", "fix rate"
        );
        let mut total = FixCounts::default();
        for (dt, c) in &r.fix_histogram {
            let _ = writeln!(
                s,
                "  {dt:>6} {:>9} {:>7} {:>9} {:>7} {:>8.1}%",
                c.attempted,
                c.fixed,
                c.rejected,
                c.failed,
                rate(c)
            );
            total.attempted += c.attempted;
            total.fixed += c.fixed;
            total.rejected += c.rejected;
            total.failed += c.failed;
        }
        let c = &total;
        let _ = writeln!(
            s,
            "  {:>6} {:>9} {:>7} {:>9} {:>7} {:>8.1}%",
            "all",
            c.attempted,
            c.fixed,
            c.rejected,
            c.failed,
            rate(c)
        );
    }
    s
}

fn rate(c: &FixCounts) -> f64 {
    if c.attempted == 0 {
        0.0
    } else {
        100.0 * c.fixed as f64 / c.attempted as f64
    }
}

/// Rows with `status`, or every row when none carries it.
fn select(records: Vec<TrajectoryRecord>, status: TrajectoryStatus) -> Vec<TrajectoryRecord> {
    if records.iter().any(|r| r.status == status) {
        records.into_iter().filter(|r| r.status == status).collect()
    } else {
        records
    }
}

fn default_label(est: &Path) -> String {
    let report = est.parent().map(|d| d.join(REPORT_FILE));
    report
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|text| serde_json::from_str::<SolveReport>(&text).ok())
        .map_or_else(|| "estimate".to_string(), |r| r.method_label)
}

pub fn evaluate(est: &Path, truth: &Path, json: bool, label: Option<&str>) -> Result<(), CliError> {
    let estimate = select(read_trajectory_csv(open(est)?).map_err(|e| from_io(est, e))?, TrajectoryStatus::Optimized);
    let reference = select(read_trajectory_csv(open(truth)?).map_err(|e| from_io(truth, e))?, TrajectoryStatus::Truth);
    if estimate.len() != reference.len() {
        return Err(CliError::Parse(
            EvalError::LengthMismatch { estimate: estimate.len(), truth: reference.len() }.to_string(),
        ));
    }
    if let Some((a, b)) = estimate.iter().zip(&reference).find(|(a, b)| a.time.tow != b.time.tow) {
        return Err(CliError::Parse(format!("epochs differ: estimate tow {} vs truth tow {}", a.time.tow, b.time.tow)));
    }
    let label = label.map_or_else(|| default_label(est), str::to_string);
    let e: Vec<_> = estimate.iter().map(|r| r.position).collect();
    let t: Vec<_> = reference.iter().map(|r| r.position).collect();
    let report = evaluate_trajectories(&e, &t, label).map_err(|e| CliError::Parse(e.to_string()))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Solver(e.to_string()))?);
    } else {
        print!("{}", report_table(&report));
    }
    Ok(())
}

fn report_table(r: &EvaluationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14} {:>8} {:>12} {:>12} {:>10}", "method", "epochs", "RPE [m]", "max RPE [m]", "APE [m]");
    let _ = writeln!(
        s,
        "{:<14} {:>8} {:>12.4} {:>12.4} {:>10.3}",
        r.method_label, r.epochs, r.rpe_mean, r.rpe_max, r.ape_mean
    );
    s
}

pub fn inspect(path: &Path) -> Result<(), CliError> {
    let g = read_graph_json(open(path)?).map_err(|e| from_io(path, e))?;
    print!("{}", graph_summary(&g));
    Ok(())
}

fn graph_summary(g: &GraphExport) -> String {
    let mut s = String::new();
    let span = match (g.nodes.first(), g.nodes.last()) {
        (Some(a), Some(b)) => (f64::from(b.week - a.week)) * 604_800.0 + (b.tow - a.tow),
        _ => 0.0,
    };
    let _ = writeln!(s, "nodes: {} over {:.1} s", g.nodes.len(), span);
    let counts = g.edge_counts();
    for kind in [EdgeKind::Velocity, EdgeKind::Trrtk, EdgeKind::Pseudorange] {
        let _ = writeln!(s, "{:<12} {}", format!("{kind:?}:").to_lowercase(), counts.get(&kind).copied().unwrap_or(0));
    }
    let _ = writeln!(s, "priors:      {}", g.priors.len());
    let mut by_dt: BTreeMap<i64, usize> = BTreeMap::new();
    let mut longest: f64 = 0.0;
    for e in g.edges.iter().filter(|e| e.kind == EdgeKind::Trrtk) {
        let dt = e.time_difference.unwrap_or(0.0);
        longest = longest.max(dt.abs());
        *by_dt.entry(dt.round() as i64).or_insert(0) += 1;
    }
    if !by_dt.is_empty() {
        let window = g.trrtk_window.map_or_else(|| "unknown".to_string(), |w| format!("{w:.1} s"));
        let _ = writeln!(s, "loop closures by time difference (window {window}, longest {longest:.1} s):");
        for (dt, n) in by_dt {
            let _ = writeln!(s, "  {dt:>5} s: {n}");
        }
    }
    if let Some(r) = &g.report {
        let _ = writeln!(
            s,
            "optimizer: cost {:.6} -> {:.6}, {} iterations, converged {}",
            r.initial_cost, r.final_cost, r.iterations, r.converged
        );
    }
    s
}
