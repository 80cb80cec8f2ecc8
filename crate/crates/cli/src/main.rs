//! `irac`: profiles, simulations, the acceptance suite and velocity sweeps.
//!
//! Exit codes: 0 success, 1 acceptance failure, 2 configuration or
//! precondition error, 3 numerical failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use irac::acceptance::{criterion_id, run_suite, AcceptanceOptions, CRITERIA};
use irac::analysis::{detect_single_interval_time, error_series, fit_exponential_rate, FitOptions};
use irac::config::{RunConfig, Scenario};
use irac::io::{fmt_g17, write_json, write_profile, write_snapshots, write_table};
use irac::pde::{build_compliant_initial_data, run_simulation, sample_profile, wave_boundary_values, Scheme};
use irac::{profile_family, solve_profile, Error, Result};

#[derive(Parser)]
#[command(name = "irac", version, about = "Degenerate traveling waves of u_t = (u_xx - f(u))_+")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// `lo:hi:step`.
    #[arg(long = "alpha-list", global = true, allow_hyphen_values = true)]
    alpha_list: Option<String>,
    /// `imex` or `explicit`.
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// `wave`, `compliant` or `constant`.
    #[arg(long, global = true)]
    scenario: Option<Scenario>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the traveling-wave profile at each alpha.
    Profile,
    /// Time-step one scenario and write its snapshots.
    Simulate,
    /// Run the acceptance suite. `IRAC_TOL_SCALE` scales every tolerance.
    Verify {
        /// Criterion name or number; repeatable or comma-separated.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Velocity family `(alpha, c, c_identity)` over an alpha list.
    Sweep,
}

enum Failure {
    Error(Error),
    Acceptance,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = load_config(&cli.common).and_then(|cfg| {
        match &cli.command {
            Command::Profile => cmd_profile(&cfg),
            Command::Simulate => cmd_simulate(&cfg),
            Command::Verify { only } => return cmd_verify(&cfg, only),
            Command::Sweep => cmd_sweep(&cfg),
        }
        .map_err(Failure::from)
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Acceptance) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_precondition() { 2 } else { 3 })
        }
    }
}

fn load_config(c: &Common) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(a) = c.alpha {
        cfg.alpha = a;
        cfg.alpha_list = None;
    }
    if let Some(l) = &c.alpha_list {
        cfg.alpha_list = Some(l.clone());
    }
    if let Some(s) = c.scheme {
        cfg.sim.scheme = s;
    }
    if let Some(s) = c.scenario {
        cfg.scenario = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn profile_stem(alpha: f64) -> String {
    format!("profile_alpha{alpha:+.4}")
}

fn cmd_profile(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let nl = cfg.nonlinearity()?;
    let opts = cfg.shooting();
    let mut rows = Vec::new();
    println!("{:>24} {:>24} {:>24}", "alpha", "c", "c_identity");
    for alpha in cfg.alphas()? {
        let sol = solve_profile(&nl, alpha, &opts)?;
        write_profile(&sol, &cfg.out, &profile_stem(alpha))?;
        println!("{:>24} {:>24} {:>24}", fmt_g17(alpha), fmt_g17(sol.c), fmt_g17(sol.c_identity));
        rows.push(vec![alpha, sol.c, sol.c_identity]);
    }
    write_table(&cfg.out.join("profiles.csv"), &["alpha", "c", "c_identity"], &rows)
}

#[derive(Serialize)]
struct RPoint {
    t: f64,
    r: Option<f64>,
}

#[derive(Serialize)]
struct Nondeterministic {
    wall_time_s: f64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a RunConfig,
    steps: usize,
    snapshot_count: usize,
    min_increment: f64,
    warnings: &'a [String],
    summary: BTreeMap<&'static str, Option<f64>>,
    r_series: Vec<RPoint>,
    /// Excluded from reproducibility comparisons.
    nondeterministic: Nondeterministic,
}

fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::Wave => "wave",
        Scenario::Compliant => "compliant",
        Scenario::Constant => "constant",
    }
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    cfg.validate()?;
    let nl = cfg.nonlinearity()?;
    let grid = cfg.grid()?;
    let alpha = cfg.alpha;
    // Step-size preconditions before any profile work.
    cfg.sim(alpha, alpha).validate(&nl, &grid)?;

    let ini = &cfg.initial;
    let (sol, u0, (bl, br)) = match cfg.scenario {
        Scenario::Wave => {
            let sol = solve_profile(&nl, alpha, &cfg.shooting())?;
            let u0 = sample_profile(&sol, &grid, ini.shift);
            let bc = wave_boundary_values(&sol, &grid, ini.shift);
            (Some(sol), u0, bc)
        }
        Scenario::Compliant => {
            let u0 = build_compliant_initial_data(&nl, alpha, ini.xi1, ini.ramp_width, ini.top, &grid)?;
            let sol = solve_profile(&nl, alpha, &cfg.shooting())?;
            (Some(sol), u0, (alpha, nl.a_plus))
        }
        Scenario::Constant => (None, vec![ini.gamma; grid.n], (ini.gamma, ini.gamma)),
    };
    let out = run_simulation(&cfg.sim(bl, br), &u0, &nl, &grid)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }

    let snaps = &out.snapshots;
    let last = snaps.last().expect("at least the initial snapshot");
    let mut summary: BTreeMap<&'static str, Option<f64>> = BTreeMap::new();
    summary.insert("t_end", Some(last.t));
    summary.insert("r_end", last.r);
    let mut line = format!("{} t_end={}", scenario_name(cfg.scenario), fmt_g17(last.t));
    match (cfg.scenario, &sol) {
        (Scenario::Wave, Some(sol)) => {
            let errs = error_series(snaps, sol, &grid);
            let (a, b) = (errs.first().expect("non-empty"), errs.last().expect("non-empty"));
            let drift = (b.shift - a.shift) / (b.t - a.t);
            summary.insert("c", Some(sol.c));
            summary.insert("drift", Some(drift));
            summary.insert("sup_error_end", Some(b.sup_error));
            line += &format!(" c={} drift={} sup_error_end={:.3e}", fmt_g17(sol.c), fmt_g17(drift), b.sup_error);
        }
        (Scenario::Compliant, Some(sol)) => {
            let t2 = detect_single_interval_time(snaps, &nl, alpha, &grid);
            summary.insert("c", Some(sol.c));
            summary.insert("t2", t2);
            line += &format!(" c={}", fmt_g17(sol.c));
            match t2 {
                Some(t2) => {
                    line += &format!(" t2={}", fmt_g17(t2));
                    let errs = error_series(snaps, sol, &grid);
                    // Fit above twice the level the error settles at.
                    let floor = errs.iter().map(|s| s.sup_error).fold(f64::INFINITY, f64::min);
                    match fit_exponential_rate(&errs, sol.c, &FitOptions { t_start: t2, noise_floor: 2.0 * floor }) {
                        Ok(rep) => {
                            summary.insert("kappa", Some(rep.kappa_fit));
                            summary.insert("r_squared", Some(rep.r_squared));
                            summary.insert("x0", Some(rep.x0_fit));
                            line += &format!(
                                " kappa={:.6} r_squared={:.6} x0={:.6}",
                                rep.kappa_fit, rep.r_squared, rep.x0_fit
                            );
                        }
                        Err(e) => eprintln!("warning: no rate fit: {e}"),
                    }
                }
                None => eprintln!("warning: contact set never settles into one interval"),
            }
        }
        _ => {
            let dev = last.u.iter().map(|v| (v - ini.gamma).abs()).fold(0.0, f64::max);
            summary.insert("max_deviation", Some(dev));
            line += &format!(" max_deviation={dev:.3e}");
        }
    }

    let stem = format!("snapshots_{}", scenario_name(cfg.scenario));
    write_snapshots(snaps, &grid, &cfg.out.join(format!("{stem}.csv")))?;
    let sidecar = Sidecar {
        config: cfg,
        steps: out.steps,
        snapshot_count: snaps.len(),
        min_increment: out.min_increment,
        warnings: &out.warnings,
        summary,
        r_series: snaps.iter().map(|s| RPoint { t: s.t, r: s.r }).collect(),
        nondeterministic: Nondeterministic { wall_time_s: start.elapsed().as_secs_f64() },
    };
    write_json(&cfg.out.join(format!("{stem}.json")), &sidecar)?;
    println!("{line}");
    Ok(())
}

fn cmd_verify(cfg: &RunConfig, only: &[String]) -> std::result::Result<(), Failure> {
    let mut ids = Vec::new();
    for name in only {
        let id = criterion_id(name).ok_or_else(|| {
            let known: Vec<&str> = CRITERIA.iter().map(|c| c.1).collect();
            Error::InvalidInput(format!("unknown criterion '{name}'; known: {}", known.join(", ")))
        })?;
        ids.push(id);
    }
    ids.sort_unstable();
    ids.dedup();
    let report = run_suite(&ids, &AcceptanceOptions::from_env());
    for c in &report.criteria {
        println!("{}", c.line());
    }
    let passed = report.criteria.iter().filter(|c| c.passed).count();
    println!("{passed}/{} criteria passed", report.criteria.len());
    write_json(&cfg.out.join("verify.json"), &report)?;
    if report.all_passed {
        Ok(())
    } else {
        for c in report.criteria.iter().filter(|c| !c.passed) {
            eprintln!("failed: {}", c.name);
        }
        Err(Failure::Acceptance)
    }
}

fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let nl = cfg.nonlinearity()?;
    let family = profile_family(&nl, &cfg.alphas()?, &cfg.shooting());
    let mut rows = Vec::new();
    let mut first_err = None;
    println!("{:>24} {:>24} {:>24}", "alpha", "c", "c_identity");
    for e in &family {
        match &e.outcome {
            Ok((c, ci)) => {
                println!("{:>24} {:>24} {:>24}", fmt_g17(e.alpha), fmt_g17(*c), fmt_g17(*ci));
                rows.push(vec![e.alpha, *c, *ci]);
            }
            Err(err) => {
                println!("{:>24} {:>24}", fmt_g17(e.alpha), format!("error: {err}"));
                rows.push(vec![e.alpha, f64::NAN, f64::NAN]);
                first_err.get_or_insert_with(|| err.clone());
            }
        }
    }
    let cs: Vec<f64> = rows.iter().map(|r| r[1]).filter(|c| c.is_finite()).collect();
    let decreasing = cs.windows(2).all(|w| w[1] < w[0]);
    println!("c strictly decreasing in alpha: {}", if decreasing { "yes" } else { "no" });
    write_table(&cfg.out.join("family.csv"), &["alpha", "c", "c_identity"], &rows)?;
    first_err.map_or(Ok(()), Err)
}
