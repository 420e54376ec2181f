//! Command-line jobs: `stp`, `validate`, `optimize` and `sweep`.
//!
//! Every job returns its CSV as a string together with a [`RunManifest`];
//! the binary only parses flags, sets up the thread pool and writes files.
//! Units at this boundary are mW for powers and m for distances; the CSV
//! columns say which unit they carry.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{evaluate_stp, Receiver, StpMethod};
use crate::config::{PowerVector, ScenarioConfig};
use crate::error::{Error, Result};
use crate::metrics::{AnalyticOptions, RateMode};
use crate::montecarlo::{estimate_stp, SimulationPlan};
use crate::optimizer::{optimize_ee, OptimizerOptions};
use crate::sweep::{linear_grid, log_grid, sweep_ee, SweepAxis, SweepOptions};

/// Allowed |analytic − simulated| STP gap beyond the 95% half-width.
pub const BOUND_GAP_BUDGET: f64 = 0.03;

/// Exit code for an optimization without a feasible point.
pub const EXIT_INFEASIBLE: i32 = 4;

const MW: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "mmwave-ee", version, about = "Energy efficiency of mm-wave D2D underlay networks")]
pub struct Cli {
    /// Scenario JSON file; the built-in baseline preset when omitted.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write PREFIX.csv and PREFIX.manifest.json instead of printing.
    #[arg(long, global = true, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Successful transmission probability of one band.
    Stp(StpArgs),
    /// Compare analytic and simulated STP in every band.
    Validate(ValidateArgs),
    /// Optimize per-band D2D powers for energy efficiency.
    Optimize(OptimizeArgs),
    /// Optimized energy efficiency over a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Who {
    D2d,
    Bs,
}

impl From<Who> for Receiver {
    fn from(w: Who) -> Self {
        match w {
            Who::D2d => Receiver::D2d,
            Who::Bs => Receiver::Bs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Auto,
    Quadrature,
    Closed,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RateArg {
    Fixed,
    Sup,
}

impl From<RateArg> for RateMode {
    fn from(r: RateArg) -> Self {
        match r {
            RateArg::Fixed => RateMode::Fixed,
            RateArg::Sup => RateMode::Sup,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct StpArgs {
    /// Band number, starting at 1.
    #[arg(long, default_value_t = 1)]
    pub band: usize,
    #[arg(long, value_enum, default_value_t = Who::D2d)]
    pub who: Who,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
    /// D2D transmit power in mW (default: even split of the budget).
    #[arg(long)]
    pub pd: Option<f64>,
    /// Realizations for `--method mc`.
    #[arg(long, default_value_t = 10_000)]
    pub realizations: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 1000)]
    pub realizations: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_enum, default_value_t = RateArg::Fixed)]
    pub rate: RateArg,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// lambda_d_ref | lambda_c_ref | p_cir | p_c | p_d_band1 | theta_bw | r_d
    #[arg(long)]
    pub axis: String,
    /// First grid value (mW for power axes).
    #[arg(long)]
    pub from: f64,
    /// Last grid value (mW for power axes).
    #[arg(long)]
    pub to: f64,
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    /// Logarithmic spacing.
    #[arg(long)]
    pub log: bool,
    /// Add Monte Carlo EE estimates at each operating point.
    #[arg(long, conflicts_with = "analytic")]
    pub mc: bool,
    /// Analytic results only (default).
    #[arg(long)]
    pub analytic: bool,
    /// Realizations per band for `--mc`.
    #[arg(long, default_value_t = 1000)]
    pub realizations: usize,
}

/// Where a CSV column's values come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnProvenance {
    pub column: String,
    pub source: String,
}

/// Record of one run, written next to its CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of the resolved (SI) scenario's canonical JSON.
    pub config_sha256: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub columns: Vec<ColumnProvenance>,
}

/// Result of one job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobOutput {
    pub csv: String,
    pub manifest: RunManifest,
    pub exit_code: i32,
    /// Human-readable notes for stderr.
    pub messages: Vec<String>,
}

/// SHA-256 (hex) of the scenario's canonical JSON.
pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let json = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn method_name(method: StpMethod) -> &'static str {
    match method {
        StpMethod::Auto => "analytic_auto",
        StpMethod::Quadrature => "quadrature",
        StpMethod::ClosedForm => "closed_form",
    }
}

/// Run context shared by the jobs.
#[derive(Debug, Clone)]
pub struct JobContext {
    pub cfg: ScenarioConfig,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl JobContext {
    pub fn new(cfg: ScenarioConfig, seed: u64, threads: Option<usize>) -> Self {
        Self { cfg, seed, threads }
    }

    fn manifest(&self, command: &str, started: f64, columns: Vec<(String, String)>) -> Result<RunManifest> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: config_hash(&self.cfg)?,
            seed: self.seed,
            threads: self.threads,
            started_unix_s: started,
            finished_unix_s: unix_now(),
            columns: columns
                .into_iter()
                .map(|(column, source)| ColumnProvenance { column, source })
                .collect(),
        })
    }

    fn plan(&self, realizations: usize) -> SimulationPlan {
        SimulationPlan::with_realizations(realizations, self.seed)
    }
}

fn fixed(name: &str, source: &str) -> (String, String) {
    (name.to_string(), source.to_string())
}

/// `stp`: one band, one receiver.
pub fn run_stp(ctx: &JobContext, args: &StpArgs) -> Result<JobOutput> {
    let started = unix_now();
    let cfg = &ctx.cfg;
    if args.band < 1 || args.band > cfg.num_bands {
        return Err(Error::InvalidArgument(format!(
            "--band must be in 1..={} (got {})",
            cfg.num_bands, args.band
        )));
    }
    let band = args.band - 1;
    let p_d = match args.pd {
        Some(mw) if !(mw >= 0.0 && mw.is_finite()) => {
            return Err(Error::InvalidArgument(format!("--pd must be ≥ 0 (got {mw})")))
        }
        Some(mw) => mw * MW,
        None => PowerVector::even_split(cfg).as_slice()[band],
    };
    let who: Receiver = args.who.into();
    let mut messages = Vec::new();
    if p_d == 0.0 && who == Receiver::D2d {
        messages.push("warning: zero D2D power, the D2D link is in outage".to_string());
    }
    let (value, method, err, ci) = match args.method {
        MethodArg::Mc => {
            let mut p = PowerVector::even_split(cfg);
            p.0[band] = p_d;
            let est = estimate_stp(cfg, &p, band, who, &ctx.plan(args.realizations))?;
            (est.mean, "monte_carlo".to_string(), 0.0, Some(est.half_width_95))
        }
        m => {
            let method = match m {
                MethodArg::Auto => StpMethod::Auto,
                MethodArg::Quadrature => StpMethod::Quadrature,
                _ => StpMethod::ClosedForm,
            };
            let r = evaluate_stp(cfg, p_d, band, who, method)?;
            (r.value, r.method.as_str().to_string(), r.abs_err_est, None)
        }
    };
    let mut csv = String::from("band,who,p_d_mw,stp,method,abs_err_est,ci95\n");
    let ci_text = ci.map(|c| c.to_string()).unwrap_or_default();
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{}",
        args.band,
        who,
        p_d / MW,
        value,
        method,
        err,
        ci_text
    );
    let manifest = ctx.manifest(
        "stp",
        started,
        vec![
            fixed("band", "input"),
            fixed("who", "input"),
            fixed("p_d_mw", "input"),
            fixed("stp", &method),
            fixed("method", "provenance"),
            fixed("abs_err_est", &method),
            fixed("ci95", if ci.is_some() { "monte_carlo" } else { "empty" }),
        ],
    )?;
    Ok(JobOutput {
        csv,
        manifest,
        exit_code: 0,
        messages,
    })
}

/// `validate`: analytic vs simulated STP at the even-split powers.
pub fn run_validate(ctx: &JobContext, args: &ValidateArgs) -> Result<JobOutput> {
    let started = unix_now();
    let cfg = &ctx.cfg;
    let p = PowerVector::even_split(cfg);
    let plan = ctx.plan(args.realizations);
    plan.validate()?;
    let mut csv = String::from("band,who,analytic_stp,mc_stp,ci95,gap,status\n");
    let mut flagged = 0;
    let mut analytic_source = String::new();
    for band in 0..cfg.num_bands {
        for who in [Receiver::D2d, Receiver::Bs] {
            let an = evaluate_stp(cfg, p.as_slice()[band], band, who, StpMethod::Auto)?;
            let mc = estimate_stp(cfg, &p, band, who, &plan)?;
            let gap = an.value - mc.mean;
            let ok = gap.abs() <= mc.half_width_95 + BOUND_GAP_BUDGET;
            if !ok {
                flagged += 1;
            }
            analytic_source = an.method.as_str().to_string();
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                band + 1,
                who,
                an.value,
                mc.mean,
                mc.half_width_95,
                gap,
                if ok { "ok" } else { "flag" }
            );
        }
    }
    let mut messages = vec![format!(
        "{} of {} comparisons outside CI + {BOUND_GAP_BUDGET} budget",
        flagged,
        2 * cfg.num_bands
    )];
    messages.push(format!("powers: even split, {} mW per band", p.as_slice()[0] / MW));
    let manifest = ctx.manifest(
        "validate",
        started,
        vec![
            fixed("band", "input"),
            fixed("who", "input"),
            fixed("analytic_stp", &analytic_source),
            fixed("mc_stp", "monte_carlo"),
            fixed("ci95", "monte_carlo"),
            fixed("gap", "analytic_stp - mc_stp"),
            fixed("status", "derived"),
        ],
    )?;
    Ok(JobOutput {
        csv,
        manifest,
        exit_code: 0,
        messages,
    })
}

/// `optimize`: per-band optimum with slacks; exit code 4 when infeasible.
pub fn run_optimize(ctx: &JobContext, args: &OptimizeArgs) -> Result<JobOutput> {
    let started = unix_now();
    let cfg = &ctx.cfg;
    let options = OptimizerOptions {
        seed: ctx.seed,
        analytic: AnalyticOptions {
            method: StpMethod::Auto,
            rate_mode: args.rate.into(),
        },
        ..OptimizerOptions::default()
    };
    let out = optimize_ee(cfg, &options)?;
    let s = &out.constraint_slacks;
    let mut csv = String::from(
        "band,p_opt_mw,stp_d,stp_c,qos_d_slack,qos_c_slack,box_slack_mw,budget_slack_mw,ee_bit_per_j,feasible\n",
    );
    for i in 0..cfg.num_bands {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            out.p_opt.as_slice()[i] / MW,
            s.stp_d[i],
            s.stp_c[i],
            s.qos_d[i],
            s.qos_c[i],
            s.box_upper[i].min(s.box_lower[i]) / MW,
            s.budget / MW,
            out.ee_opt,
            out.feasible
        );
    }
    let verdict = if out.feasible { "feasible" } else { "infeasible" };
    let messages = vec![
        format!("{verdict}: EE = {:e} bit/J", out.ee_opt),
        format!(
            "{} starts, {} simplex iterations, {} objective evaluations",
            out.solver_trace.restarts, out.solver_trace.iterations, out.solver_trace.evaluations
        ),
    ];
    let method = method_name(options.analytic.method);
    let manifest = ctx.manifest(
        "optimize",
        started,
        vec![
            fixed("band", "input"),
            fixed("p_opt_mw", "optimizer"),
            fixed("stp_d", method),
            fixed("stp_c", method),
            fixed("qos_d_slack", method),
            fixed("qos_c_slack", method),
            fixed("box_slack_mw", "derived"),
            fixed("budget_slack_mw", "derived"),
            fixed("ee_bit_per_j", method),
            fixed("feasible", "derived"),
        ],
    )?;
    Ok(JobOutput {
        csv,
        manifest,
        exit_code: if out.feasible { 0 } else { EXIT_INFEASIBLE },
        messages,
    })
}

/// `sweep`: one CSV row per grid point.
pub fn run_sweep(ctx: &JobContext, args: &SweepArgs) -> Result<JobOutput> {
    let started = unix_now();
    let cfg = &ctx.cfg;
    let axis: SweepAxis = args.axis.parse()?;
    let unit = if axis.is_power() { MW } else { 1.0 };
    if args.log && !(args.from > 0.0 && args.to > 0.0) {
        return Err(Error::InvalidArgument("--log needs positive --from and --to".into()));
    }
    let grid_cli = if args.log {
        log_grid(args.from, args.to, args.points)
    } else {
        linear_grid(args.from, args.to, args.points)
    };
    let grid: Vec<f64> = grid_cli.iter().map(|v| v * unit).collect();
    let options = SweepOptions {
        optimizer: OptimizerOptions {
            seed: ctx.seed,
            ..OptimizerOptions::default()
        },
        monte_carlo: args.mc.then(|| ctx.plan(args.realizations)),
    };
    let rows = sweep_ee(cfg, axis, &grid, &options)?;
    let m = cfg.num_bands;
    let mut header = vec!["axis_value".to_string(), "ee".to_string()];
    header.extend((1..=m).map(|i| format!("stp_d_{i}")));
    header.extend((1..=m).map(|i| format!("stp_c_{i}")));
    header.push("feasible".to_string());
    if args.mc {
        header.push("ee_mc".to_string());
        header.push("ee_mc_ci95".to_string());
    }
    let mut csv = header.join(",");
    csv.push('\n');
    for (row, shown) in rows.iter().zip(&grid_cli) {
        let mut fields = vec![shown.to_string(), row.ee.to_string()];
        fields.extend(row.stp_d.iter().map(|v| v.to_string()));
        fields.extend(row.stp_c.iter().map(|v| v.to_string()));
        fields.push(row.feasible.to_string());
        if let Some(mc) = &row.mc {
            fields.push(mc.ee.mean.to_string());
            fields.push(mc.ee.half_width_95.to_string());
        }
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    let method = method_name(options.optimizer.analytic.method);
    let axis_source = format!("input:{axis}{}", if axis.is_power() { " [mW]" } else { "" });
    let ee_source = if axis == SweepAxis::PDBand1 {
        format!("{method} at fixed powers [bit/J]")
    } else {
        format!("{method} at optimized powers [bit/J]")
    };
    let mut columns = vec![fixed("axis_value", &axis_source), fixed("ee", &ee_source)];
    columns.extend(header[2..2 + 2 * m].iter().map(|h| fixed(h, method)));
    columns.push(fixed("feasible", "derived"));
    if args.mc {
        columns.push(fixed("ee_mc", "monte_carlo [bit/J]"));
        columns.push(fixed("ee_mc_ci95", "monte_carlo delta method"));
    }
    let manifest = ctx.manifest("sweep", started, columns)?;
    Ok(JobOutput {
        csv,
        manifest,
        exit_code: 0,
        messages: Vec::new(),
    })
}

/// Load the scenario named on the command line, or the baseline preset.
pub fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::baseline()),
    }
}

/// Dispatch a parsed command line.
pub fn run(cli: &Cli) -> Result<JobOutput> {
    let cfg = load_scenario(cli.scenario.as_deref())?;
    let ctx = JobContext::new(cfg, cli.seed, cli.threads);
    match &cli.command {
        Command::Stp(a) => run_stp(&ctx, a),
        Command::Validate(a) => run_validate(&ctx, a),
        Command::Optimize(a) => run_optimize(&ctx, a),
        Command::Sweep(a) => run_sweep(&ctx, a),
    }
}

/// Write the CSV and manifest either to `PREFIX.csv` / `PREFIX.manifest.json`
/// or to stdout / stderr.
pub fn emit(out: &JobOutput, prefix: Option<&Path>) -> Result<()> {
    let manifest = serde_json::to_string_pretty(&out.manifest)?;
    for m in &out.messages {
        eprintln!("{m}");
    }
    match prefix {
        Some(prefix) => {
            let with_ext = |ext: &str| {
                let mut s = prefix.as_os_str().to_owned();
                s.push(ext);
                PathBuf::from(s)
            };
            std::fs::write(with_ext(".csv"), &out.csv)?;
            std::fs::write(with_ext(".manifest.json"), manifest + "\n")?;
        }
        None => {
            print!("{}", out.csv);
            eprintln!("{manifest}");
        }
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let job = || run(&cli).and_then(|out| emit(&out, cli.out.as_deref()).map(|_| out.exit_code));
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(job),
            Err(e) => Err(Error::InvalidArgument(format!("--threads: {e}"))),
        },
        None => job(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> JobContext {
        JobContext::new(ScenarioConfig::baseline(), 0, None)
    }

    #[test]
    fn hash_tracks_resolved_scenario() {
        let a = config_hash(&ScenarioConfig::baseline()).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&ScenarioConfig::baseline()).unwrap());
        let mut cfg = ScenarioConfig::baseline();
        cfg.p_cir = 1e-4;
        assert_ne!(a, config_hash(&cfg).unwrap());
    }

    #[test]
    fn stp_auto_uses_rayleigh_closed_form() {
        let args = StpArgs {
            band: 1,
            who: Who::D2d,
            method: MethodArg::Auto,
            pd: None,
            realizations: 10,
        };
        let out = run_stp(&ctx(), &args).unwrap();
        let row: Vec<&str> = out.csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[4], "closed_form_m1");
        let v: f64 = row[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn stp_zero_power_warns() {
        let args = StpArgs {
            band: 2,
            who: Who::D2d,
            method: MethodArg::Quadrature,
            pd: Some(0.0),
            realizations: 10,
        };
        let out = run_stp(&ctx(), &args).unwrap();
        assert!(out.messages[0].contains("outage"));
        assert!(out.csv.contains(",0,quadrature,"));
    }

    #[test]
    fn stp_band_out_of_range() {
        let args = StpArgs {
            band: 6,
            who: Who::Bs,
            method: MethodArg::Auto,
            pd: None,
            realizations: 10,
        };
        assert_eq!(run_stp(&ctx(), &args).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn sweep_with_no_points_is_header_only() {
        let args = SweepArgs {
            axis: "p_cir".into(),
            from: 0.0,
            to: 1.0,
            points: 0,
            log: false,
            mc: false,
            analytic: true,
            realizations: 10,
        };
        let out = run_sweep(&ctx(), &args).unwrap();
        assert_eq!(
            out.csv,
            "axis_value,ee,stp_d_1,stp_d_2,stp_d_3,stp_d_4,stp_d_5,stp_c_1,stp_c_2,stp_c_3,stp_c_4,stp_c_5,feasible\n"
        );
        assert_eq!(out.manifest.columns.len(), 13);
    }

    #[test]
    fn unknown_axis_is_a_config_error() {
        let args = SweepArgs {
            axis: "bogus".into(),
            from: 0.0,
            to: 1.0,
            points: 2,
            log: false,
            mc: false,
            analytic: false,
            realizations: 10,
        };
        assert_eq!(run_sweep(&ctx(), &args).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn parse_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["mmwave-ee", "optimize", "--seed", "3", "--threads", "2"]).unwrap();
        assert_eq!(cli.seed, 3);
        assert_eq!(cli.threads, Some(2));
        assert!(matches!(cli.command, Command::Optimize(_)));
    }
}
