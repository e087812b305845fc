//! Command-line front end.
//!
//! Each subcommand writes one CSV file whose first line is a `#` comment
//! naming the tool version, subcommand and seed, followed by a fixed header.
//! A JSON sidecar with the same stem records the resolved configuration.
//! Exit status is 0 on success, 1 for usage and configuration errors and 2
//! for runtime failures; failures also print one JSON line on stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::beamformer::optimize_beamformer;
use crate::config::{ConfigError, RunConfig, CONFIG_ENV};
use crate::crlb::crlb_expanded;
use crate::geometry::{wrap_angle, PolarPosition, UcaGeometry};
use crate::harness::{crlb_sweep, rate_sweep, rmse_sweep, sensing_beam, BoundRow, RateRow, SummaryRow, TrialRecord};
use crate::ml::estimate;
use crate::rng::child_seed;
use crate::signal::{generate_pilots, synthesize_observation, ue_received_snr};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CRLB_HEADER: &[&str] = &[
    "radius_m",
    "d_m",
    "crlb_d_m",
    "crlb_theta_rad",
    "snr_db",
    "theta_deg",
    "trace",
    "status",
];

pub const SUMMARY_HEADER: &[&str] = &[
    "radius_m",
    "d_m",
    "n_trials",
    "rmse_d_m",
    "rmse_d_se_m",
    "crlb_d_m",
    "full_model_crlb_d_m",
    "rmse_theta_rad",
    "rmse_theta_se_rad",
    "crlb_theta_rad",
    "convergence_rate",
    "success_rate",
    "mean_snr_db",
    "mean_rate_est_bps",
    "mean_rate_opt_bps",
];

pub const TRIALS_HEADER: &[&str] = &[
    "radius_m",
    "d_true_m",
    "theta_true_deg",
    "d_hat_m",
    "theta_hat_deg",
    "converged",
    "success",
    "snr_db",
    "rate_est_bps",
    "rate_opt_bps",
    "crlb_d_m",
    "crlb_theta_rad",
    "seed",
    "error",
];

pub const RATE_HEADER: &[&str] = &[
    "radius_m",
    "d_m",
    "mean_snr_db",
    "mean_rate_est_bps",
    "mean_rate_opt_bps",
    "n_trials",
];

pub const BEAM_HEADER: &[&str] = &["element", "weight_re", "weight_im", "magnitude", "phase_deg"];

pub const ESTIMATE_HEADER: &[&str] = &[
    "radius_m",
    "d_true_m",
    "theta_true_deg",
    "d_hat_m",
    "theta_hat_deg",
    "cost",
    "converged",
    "iterations",
    "basin_index",
];

#[derive(Debug, Parser)]
#[command(name = "nfisac", version, about = "Near-field ISAC bounds, beam design and ML estimation with a circular array")]
pub struct Cli {
    /// JSON run configuration; falls back to $NFISAC_CONFIG, then built-in defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores, or `workers` from the config).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Raise log verbosity (repeatable); overrides `verbosity` from the config.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form range and angle bounds with the optimized beam, per radius and distance.
    CrlbSweep(OutArgs),
    /// Design the bound-minimizing beam for one user position.
    OptimizeBeamformer(BeamArgs),
    /// Synthesize one slot for a scenario and run the ML estimator on it.
    Estimate(EstimateArgs),
    /// Monte Carlo RMSE against the bound, with convergence and success rates.
    MonteCarlo(McArgs),
    /// Monte Carlo achievable rates with estimated and true-position beams.
    RateSweep(McArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output CSV path (default: <output_dir>/<subcommand>.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BeamArgs {
    #[arg(long)]
    pub radius: f64,
    #[arg(long)]
    pub distance: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta_deg: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Scenario JSON with keys radius_m, d_m, theta_deg, seed, zero_noise.
    #[arg(long, conflicts_with_all = ["radius", "distance", "theta_deg"])]
    pub scenario: Option<PathBuf>,
    #[arg(long, requires = "distance")]
    pub radius: Option<f64>,
    #[arg(long, requires = "radius")]
    pub distance: Option<f64>,
    #[arg(long)]
    pub theta_deg: Option<f64>,
    /// Synthesize the echo without noise.
    #[arg(long)]
    pub zero_noise: bool,
    /// Use the full subcarrier count instead of `mc_subcarriers`.
    #[arg(long)]
    pub full_m: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Trials per (radius, distance).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Subcarrier count for the trials.
    #[arg(long, conflicts_with = "full_m")]
    pub reduced_m: Option<usize>,
    /// Run the trials with the configured full subcarrier count.
    #[arg(long)]
    pub full_m: bool,
    /// Also write per-trial records to this CSV.
    #[arg(long)]
    pub trials_out: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Single-user scenario for `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub radius_m: f64,
    pub d_m: f64,
    #[serde(default)]
    pub theta_deg: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub zero_noise: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(ConfigError),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn line(&self) -> String {
        let (kind, message) = match self {
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::Config(e) => ("config", e.to_string()),
            Failure::Runtime(m) => ("runtime", m.clone()),
        };
        json!({ "error": { "kind": kind, "message": message } }).to_string()
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("cannot write `{}`: {e}", path.display()))
}

/// Parses `args` and runs the selected subcommand; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", Failure::Usage(e.kind().to_string()).line());
            }
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.line());
            f.code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_path(p).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        cfg.workers = Some(w);
    }
    if cli.verbose > 0 {
        cfg.verbosity = match cli.verbose {
            1 => "debug",
            _ => "trace",
        }
        .to_string();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = load_config(cli)?;
    if let Command::MonteCarlo(a) | Command::RateSweep(a) = &cli.command {
        if let Some(t) = a.trials {
            cfg.trials = t;
        }
        if let Some(m) = a.reduced_m {
            cfg.mc_subcarriers = Some(m);
        }
        if a.full_m {
            cfg.mc_subcarriers = None;
        }
    }
    cfg.validate().map_err(Failure::Config)?;
    if let Ok(level) = cfg.verbosity.parse::<log::LevelFilter>() {
        log::set_max_level(level);
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = cfg.workers {
            b = b.num_threads(w);
        }
        b.build().map_err(|e| Failure::Runtime(e.to_string()))?
    };
    pool.install(|| match &cli.command {
        Command::CrlbSweep(a) => cmd_crlb(&cfg, a),
        Command::OptimizeBeamformer(a) => cmd_beam(&cfg, a),
        Command::Estimate(a) => cmd_estimate(&cfg, a),
        Command::MonteCarlo(a) => cmd_monte_carlo(&cfg, a),
        Command::RateSweep(a) => cmd_rate(&cfg, a),
    })
}

/// A position given on the command line; invalid values are usage errors.
fn user_position(geom: &UcaGeometry, d_m: f64, theta_deg: f64) -> Result<PolarPosition, Failure> {
    let pos = PolarPosition::new(d_m, theta_deg.to_radians()).map_err(|e| Failure::Usage(e.to_string()))?;
    geom.check_position(&pos).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(pos)
}

fn out_path(cfg: &RunConfig, args: &OutArgs, name: &str) -> PathBuf {
    args.out
        .clone()
        .unwrap_or_else(|| Path::new(&cfg.output_dir).join(format!("{name}.csv")))
}

/// CSV writer that prefixes the provenance comment.
fn csv_writer(path: &Path, command: &str, seed: u64, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_fail(path, e))?;
    }
    let mut file = BufWriter::new(File::create(path).map_err(|e| io_fail(path, e))?);
    writeln!(file, "# nfisac {VERSION} command={command} seed={seed}").map_err(|e| io_fail(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| io_fail(path, e))?;
    Ok(w)
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<(), Failure> {
    w.flush().map_err(|e| io_fail(path, e))
}

fn sidecar(path: &Path, command: &str, cfg: &RunConfig, extra: serde_json::Value) -> Result<(), Failure> {
    let side = path.with_extension("json");
    let doc = json!({
        "tool": "nfisac",
        "version": VERSION,
        "command": command,
        "master_seed": cfg.master_seed,
        "config": cfg,
        "ofdm_si": cfg.ofdm(),
        "result": extra,
    });
    let text = serde_json::to_string_pretty(&doc).expect("sidecar serializes");
    std::fs::write(&side, text + "\n").map_err(|e| io_fail(&side, e))
}

fn f(x: f64) -> String {
    x.to_string()
}

fn cmd_crlb(cfg: &RunConfig, args: &OutArgs) -> Result<(), Failure> {
    let path = out_path(cfg, args, "crlb-sweep");
    let rows: Vec<BoundRow> = crlb_sweep(&cfg.sweep(false))?;
    let mut w = csv_writer(&path, "crlb-sweep", cfg.master_seed, CRLB_HEADER)?;
    for r in &rows {
        w.write_record([
            f(r.radius_m),
            f(r.d_m),
            f(r.crlb_d_m),
            f(r.crlb_theta_rad),
            f(r.snr_db),
            f(r.theta_rad.to_degrees()),
            f(r.trace),
            r.flag.clone().unwrap_or_else(|| "ok".into()),
        ])
        .map_err(|e| io_fail(&path, e))?;
    }
    finish(w, &path)?;
    sidecar(&path, "crlb-sweep", cfg, json!({ "rows": rows.len() }))
}

fn cmd_beam(cfg: &RunConfig, args: &BeamArgs) -> Result<(), Failure> {
    let path = out_path(cfg, &args.out, "optimize-beamformer");
    let ofdm = cfg.ofdm();
    let geom = UcaGeometry::new(cfg.n_elements, args.radius, ofdm.wavelength_m())
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let pos = user_position(&geom, args.distance, args.theta_deg)?;
    let settings = cfg.sweep(false).trial;
    let design = if ofdm.sigma2_w > 0.0 {
        ofdm
    } else {
        return Err(Failure::Usage("beam design needs a finite sigma2_dbm".into()));
    };
    let res = optimize_beamformer(&geom, &pos, &design, &settings.optimizer, None)?;
    let bound = crlb_expanded(&geom, &pos, &res.beamformer, &ofdm)?;
    let snr = ue_received_snr(&geom, &pos, &res.beamformer, &ofdm)?;
    let mut w = csv_writer(&path, "optimize-beamformer", cfg.master_seed, BEAM_HEADER)?;
    for (k, x) in res.beamformer.iter().enumerate() {
        w.write_record([k.to_string(), f(x.re), f(x.im), f(x.norm()), f(x.arg().to_degrees())])
            .map_err(|e| io_fail(&path, e))?;
    }
    finish(w, &path)?;
    let summary = json!({
        "radius_m": args.radius,
        "d_m": args.distance,
        "theta_deg": args.theta_deg,
        "initial_trace": res.trace_history[0],
        "final_trace": res.final_trace(),
        "iterations": res.iterations,
        "stop": res.stop,
        "crlb_d_m": bound.std_d_m(),
        "crlb_theta_rad": bound.std_theta_rad(),
        "snr_db": snr.db(),
    });
    println!(
        "trace {:.6e} -> {:.6e} in {} iterations ({:?}); crlb_d = {:.6e} m, crlb_theta = {:.6e} rad",
        res.trace_history[0],
        res.final_trace(),
        res.iterations,
        res.stop,
        bound.std_d_m(),
        bound.std_theta_rad()
    );
    sidecar(&path, "optimize-beamformer", cfg, summary)
}

fn scenario_from(args: &EstimateArgs) -> Result<Scenario, Failure> {
    if let Some(p) = &args.scenario {
        let text = std::fs::read_to_string(p).map_err(|source| {
            Failure::Config(ConfigError::Io {
                path: p.display().to_string(),
                source,
            })
        })?;
        let mut s: Scenario = serde_json::from_str(&text)
            .map_err(|e| Failure::Config(ConfigError::Malformed(format!("scenario: {e}"))))?;
        s.zero_noise |= args.zero_noise;
        return Ok(s);
    }
    match (args.radius, args.distance) {
        (Some(radius_m), Some(d_m)) => Ok(Scenario {
            radius_m,
            d_m,
            theta_deg: args.theta_deg.unwrap_or(0.0),
            seed: None,
            zero_noise: args.zero_noise,
        }),
        _ => Err(Failure::Usage("estimate needs --scenario or --radius and --distance".into())),
    }
}

fn cmd_estimate(cfg: &RunConfig, args: &EstimateArgs) -> Result<(), Failure> {
    let path = out_path(cfg, &args.out, "estimate");
    let sc = scenario_from(args)?;
    let seed = sc.seed.unwrap_or(cfg.master_seed);
    let settings = cfg.sweep(!args.full_m).trial;
    let geom = settings
        .geometry(sc.radius_m)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let truth = user_position(&geom, sc.d_m, sc.theta_deg)?;
    let beam = sensing_beam(&geom, &truth, &settings)?;
    let echo = if sc.zero_noise {
        settings.ofdm.with_noise(0.0)
    } else {
        settings.ofdm
    };
    let pilots = generate_pilots(&echo, child_seed(seed, &[1]));
    let obs = synthesize_observation(&geom, &truth, &beam, &echo, &pilots, child_seed(seed, &[2]))?;
    let spec = settings.grid.spec(&geom, &echo);
    let est = estimate(&obs, &geom, &spec, &settings.lm)?;
    let theta_hat_deg = wrap_angle(est.theta_hat_rad).to_degrees();
    println!(
        "d_hat = {} m, theta_hat = {} deg, converged = {}",
        est.d_hat_m, theta_hat_deg, est.converged
    );
    let mut w = csv_writer(&path, "estimate", seed, ESTIMATE_HEADER)?;
    w.write_record([
        f(sc.radius_m),
        f(sc.d_m),
        f(sc.theta_deg),
        f(est.d_hat_m),
        f(theta_hat_deg),
        f(est.cost),
        est.converged.to_string(),
        est.iterations.to_string(),
        est.basin_index.to_string(),
    ])
    .map_err(|e| io_fail(&path, e))?;
    finish(w, &path)?;
    sidecar(&path, "estimate", cfg, json!({ "scenario": sc, "seed": seed, "grid": spec }))
}

fn write_trials(path: &Path, cfg: &RunConfig, command: &str, records: &[TrialRecord]) -> Result<(), Failure> {
    let mut w = csv_writer(path, command, cfg.master_seed, TRIALS_HEADER)?;
    for r in records {
        w.write_record([
            f(r.radius_m),
            f(r.d_true_m),
            f(r.theta_true_rad.to_degrees()),
            f(r.d_hat_m),
            f(r.theta_hat_rad.to_degrees()),
            r.converged.to_string(),
            r.success.to_string(),
            f(r.snr_db),
            f(r.rate_est_bps),
            f(r.rate_opt_bps),
            f(r.crlb_var_d.sqrt()),
            f(r.crlb_var_theta.sqrt()),
            r.seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(|e| io_fail(path, e))?;
    }
    finish(w, path)
}

fn cmd_monte_carlo(cfg: &RunConfig, args: &McArgs) -> Result<(), Failure> {
    let path = out_path(cfg, &args.out, "monte-carlo");
    let (rows, records): (Vec<SummaryRow>, _) = rmse_sweep(&cfg.sweep(true))?;
    let mut w = csv_writer(&path, "monte-carlo", cfg.master_seed, SUMMARY_HEADER)?;
    for r in &rows {
        w.write_record([
            f(r.radius_m),
            f(r.d_m),
            r.n_trials.to_string(),
            f(r.rmse_d_m),
            f(r.rmse_d_se_m),
            f(r.crlb_d_m),
            f(r.full_model_crlb_d_m),
            f(r.rmse_theta_rad),
            f(r.rmse_theta_se_rad),
            f(r.crlb_theta_rad),
            f(r.convergence_rate),
            f(r.success_rate),
            f(r.mean_snr_db),
            f(r.mean_rate_est_bps),
            f(r.mean_rate_opt_bps),
        ])
        .map_err(|e| io_fail(&path, e))?;
    }
    finish(w, &path)?;
    if let Some(tp) = &args.trials_out {
        write_trials(tp, cfg, "monte-carlo", &records)?;
    }
    sidecar(&path, "monte-carlo", cfg, json!({ "rows": rows.len(), "trials": records.len() }))
}

fn cmd_rate(cfg: &RunConfig, args: &McArgs) -> Result<(), Failure> {
    let path = out_path(cfg, &args.out, "rate-sweep");
    let (rows, records): (Vec<RateRow>, _) = rate_sweep(&cfg.sweep(true))?;
    let mut w = csv_writer(&path, "rate-sweep", cfg.master_seed, RATE_HEADER)?;
    for r in &rows {
        w.write_record([
            f(r.radius_m),
            f(r.d_m),
            f(r.mean_snr_db),
            f(r.mean_rate_est_bps),
            f(r.mean_rate_opt_bps),
            r.n_trials.to_string(),
        ])
        .map_err(|e| io_fail(&path, e))?;
    }
    finish(w, &path)?;
    if let Some(tp) = &args.trials_out {
        write_trials(tp, cfg, "rate-sweep", &records)?;
    }
    let violations = crate::harness::rate_monotonicity_violations(&rows);
    sidecar(&path, "rate-sweep", cfg, json!({ "rows": rows.len(), "monotonicity_violations": violations }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["nfisac", "no-such-command"]), 1);
        assert_eq!(run(["nfisac", "monte-carlo", "--reduced-m", "8", "--full-m"]), 1);
        assert_eq!(run(["nfisac", "estimate"]), 1);
        assert_eq!(run(["nfisac", "--help"]), 0);
    }
}
