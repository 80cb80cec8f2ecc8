//! The acceptance suite: fifteen numbered criteria on the cubic `u^3 - u`.
//! Expensive simulations are shared between criteria and computed once per
//! process.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    asymptotic_offset, check_free_boundary_regularity, check_front_rate, check_front_rate_against,
    detect_single_interval_time, error_series, fit_exponential_rate, weighted_energy, ConvergenceReport,
    ErrorSample, FitOptions, FrontRate,
};
use crate::comparison::{
    anchor_envelope, check_ordering, check_residual_sign, default_envelope_parameters, ComparisonEnvelope,
    EnvelopeConstants, Sign,
};
use crate::error::{Error, Result};
use crate::pde::{
    build_compliant_initial_data, compute_multiplier, gaussian_weighted_norm, run_simulation, sample_profile,
    wave_boundary_values, Grid1D, PdeState, Scheme, SimConfig,
};
use crate::potential::Nonlinearity;
use crate::profile::{
    evaluate_profile, profile_bounds, profile_second_derivative_limits, profile_sup_distance, solve_profile,
    solve_profile_regularized, ProfileKind, ProfileSolution, ShootingOptions,
};

/// Criterion ids and names, in report order.
pub const CRITERIA: [(u32, &str); 15] = [
    (1, "velocity-identity"),
    (2, "strict-monotonicity"),
    (3, "grid-convergence"),
    (4, "degeneracy-jump"),
    (5, "regularized-consistency"),
    (6, "wave-persistence"),
    (7, "exponential-convergence"),
    (8, "free-boundary-rate"),
    (9, "envelope-validity"),
    (10, "comparison-ordering"),
    (11, "multiplier-structure"),
    (12, "steady-states"),
    (13, "scheme-cross-validation"),
    (14, "family-instability"),
    (15, "weighted-energy"),
];

const ALPHA: f64 = -0.8;
const TEST_ALPHAS: [f64; 4] = [-0.9, -0.8, -0.7, -0.65];
const ORDER_ALPHAS: [f64; 5] = [-0.9, -0.7, -0.5, -0.3, -0.1];
const DT: f64 = 1e-3;
const T_END: f64 = 40.0;
/// Snapshots every 0.05 time units.
const SNAPSHOT_EVERY: usize = 50;
const SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AcceptanceOptions {
    /// Multiplies every upper-bound tolerance. Values below one tighten.
    pub tol_scale: f64,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self { tol_scale: 1.0 }
    }
}

impl AcceptanceOptions {
    /// Reads `IRAC_TOL_SCALE`, defaulting to 1.
    pub fn from_env() -> Self {
        let tol_scale = std::env::var("IRAC_TOL_SCALE").ok().and_then(|v| v.parse().ok()).unwrap_or(1.0);
        Self { tol_scale }
    }

    fn tol(&self, v: f64) -> f64 {
        v * self.tol_scale
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub measured: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u32) -> Self {
        Self {
            id,
            name: CRITERIA[(id - 1) as usize].1.to_string(),
            passed: true,
            measured: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            detail: String::new(),
        }
    }

    fn m(&mut self, key: &str, v: f64) {
        self.measured.insert(key.to_string(), v);
    }

    fn tol(&mut self, key: &str, v: f64) {
        self.tolerances.insert(key.to_string(), v);
    }

    /// Records a sub-check; the criterion fails if any sub-check fails.
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.passed = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(&what.into());
        }
    }

    fn fail_with(mut self, e: &Error) -> Self {
        self.check(false, format!("error: {e}"));
        self
    }

    /// One human-readable line, `PASS`/`FAIL` first.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let vals: Vec<String> = self.measured.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        let mut s = format!("{status} [{:>2}] {:<24} {}", self.id, self.name, vals.join(" "));
        if !self.detail.is_empty() {
            s.push_str(&format!(" | {}", self.detail));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptanceReport {
    pub tol_scale: f64,
    pub all_passed: bool,
    pub criteria: Vec<CriterionResult>,
}

/// Looks a criterion up by name or number.
pub fn criterion_id(name: &str) -> Option<u32> {
    let key = name.trim().to_ascii_lowercase();
    CRITERIA
        .iter()
        .find(|(id, n)| *n == key || id.to_string() == key)
        .map(|(id, _)| *id)
}

pub fn run_criterion(id: u32, opts: &AcceptanceOptions) -> CriterionResult {
    match id {
        1 => velocity_identity(opts),
        2 => strict_monotonicity(),
        3 => grid_convergence(),
        4 => degeneracy_jump(opts),
        5 => regularized_consistency(),
        6 => wave_persistence(opts),
        7 => exponential_convergence(opts),
        8 => free_boundary_rate(),
        9 => envelope_validity(),
        10 => comparison_ordering(opts),
        11 => multiplier_structure(opts),
        12 => steady_states(opts),
        13 => scheme_cross_validation(opts),
        14 => family_instability(),
        15 => weighted_energy_decay(opts),
        _ => panic!("no criterion {id}"),
    }
}

/// Runs the selected criteria (all when `only` is empty) in parallel.
pub fn run_suite(only: &[u32], opts: &AcceptanceOptions) -> AcceptanceReport {
    let ids: Vec<u32> = if only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { only.to_vec() };
    let mut criteria: Vec<CriterionResult> = ids.par_iter().map(|&id| run_criterion(id, opts)).collect();
    criteria.sort_by_key(|c| c.id);
    AcceptanceReport { tol_scale: opts.tol_scale, all_passed: criteria.iter().all(|c| c.passed), criteria }
}

// ---------------------------------------------------------------- shared data

fn nl() -> &'static Nonlinearity<f64> {
    static NL: OnceLock<Nonlinearity<f64>> = OnceLock::new();
    NL.get_or_init(Nonlinearity::cubic)
}

/// `h = 0.01` on `[-20, 30]`.
pub fn default_grid() -> Grid1D<f64> {
    Grid1D::new(-20.0, 30.0, 4999).expect("valid grid")
}

fn grid() -> &'static Grid1D<f64> {
    static G: OnceLock<Grid1D<f64>> = OnceLock::new();
    G.get_or_init(default_grid)
}

fn profile(alpha: f64) -> Result<&'static ProfileSolution<f64>> {
    static CACHE: OnceLock<Vec<(f64, Result<ProfileSolution<f64>>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        let mut alphas: Vec<f64> = TEST_ALPHAS.iter().chain(&ORDER_ALPHAS).copied().collect();
        alphas.push(-0.75);
        alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        alphas.dedup();
        alphas.par_iter().map(|&a| (a, solve_profile(nl(), a, &ShootingOptions::default()))).collect()
    });
    match cache.iter().find(|(a, _)| *a == alpha) {
        Some((_, r)) => r.as_ref().map_err(Clone::clone),
        None => Err(Error::InvalidInput(format!("alpha {alpha} is not precomputed"))),
    }
}

/// Per-run invariants gathered for the all-runs checks.
#[derive(Clone, Debug)]
struct RunStats {
    label: &'static str,
    min_increment: f64,
    max_eta: f64,
    /// `max_t (int eta(t)^2 rho - int eta(0)^2 rho)`.
    eta_bound_excess: f64,
    eta_bound_rhs: f64,
}

fn run_log() -> &'static Mutex<Vec<RunStats>> {
    static LOG: OnceLock<Mutex<Vec<RunStats>>> = OnceLock::new();
    LOG.get_or_init(|| Mutex::new(Vec::new()))
}

fn simulate(
    label: &'static str,
    cfg: &SimConfig<f64>,
    u0: &[f64],
    grid: &Grid1D<f64>,
) -> Result<Vec<PdeState<f64>>> {
    let out = run_simulation(cfg, u0, nl(), grid)?;
    let rhs = {
        let s0 = &out.snapshots[0];
        let eta0 = compute_multiplier(s0, nl(), grid);
        gaussian_weighted_norm(&eta0.iter().map(|v| v * v).collect::<Vec<_>>(), grid)
    };
    let mut max_eta = f64::NEG_INFINITY;
    let mut excess = f64::NEG_INFINITY;
    for s in &out.snapshots {
        max_eta = max_eta.max(s.eta.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let lhs = gaussian_weighted_norm(&s.eta.iter().map(|v| v * v).collect::<Vec<_>>(), grid);
        excess = excess.max(lhs - rhs);
    }
    run_log().lock().unwrap().push(RunStats {
        label,
        min_increment: out.min_increment,
        max_eta,
        eta_bound_excess: excess,
        eta_bound_rhs: rhs,
    });
    Ok(out.snapshots)
}

struct Run {
    snapshots: Vec<PdeState<f64>>,
    errors: Vec<ErrorSample<f64>>,
}

fn long_config(bc_left: f64, bc_right: f64) -> SimConfig<f64> {
    SimConfig {
        scheme: Scheme::ImexProjected,
        dt: DT,
        t_end: T_END,
        bc_left,
        bc_right,
        snapshot_every: SNAPSHOT_EVERY,
        alpha: Some(ALPHA),
    }
}

fn wave_run_at(label: &'static str, shift: f64) -> Result<Run> {
    let sol = profile(ALPHA)?;
    let g = grid();
    let u0 = sample_profile(sol, g, shift);
    let (bl, br) = wave_boundary_values(sol, g, shift);
    let snapshots = simulate(label, &long_config(bl, br), &u0, g)?;
    let errors = error_series(&snapshots, sol, g);
    Ok(Run { snapshots, errors })
}

/// IMEX run from the sampled wave `phi(x)`, `T = 40`.
fn wave_run() -> Result<&'static Run> {
    static RUN: OnceLock<Result<Run>> = OnceLock::new();
    RUN.get_or_init(|| wave_run_at("wave", 0.0)).as_ref().map_err(Clone::clone)
}

fn compliant_data(g: &Grid1D<f64>) -> Result<Vec<f64>> {
    build_compliant_initial_data(nl(), ALPHA, -5.0, 3.0, 0.9, g)
}

/// IMEX run from the compliant data (`xi1 = -5`, ramp 3, top 0.9), `T = 40`.
fn compliant_run() -> Result<&'static Run> {
    static RUN: OnceLock<Result<Run>> = OnceLock::new();
    RUN.get_or_init(|| {
        let sol = profile(ALPHA)?;
        let u0 = compliant_data(grid())?;
        let snapshots = simulate("compliant", &long_config(ALPHA, nl().a_plus), &u0, grid())?;
        let errors = error_series(&snapshots, sol, grid());
        Ok(Run { snapshots, errors })
    })
    .as_ref()
    .map_err(Clone::clone)
}

struct Convergence {
    t2: f64,
    report: ConvergenceReport<f64>,
    offset: f64,
    offset_spread: f64,
    front_floor: f64,
    front: Result<FrontRate<f64>>,
    front_raw: Result<FrontRate<f64>>,
}

/// Rate fits of the compliant run. The sup-error is fitted above twice the
/// discretization floor seen on the wave run. The free-boundary deviation is
/// measured against a second wave run placed at the compliant run's
/// asymptotic position, which removes the grid-dependent lag of the discrete
/// contact point.
fn convergence() -> Result<&'static Convergence> {
    static CONV: OnceLock<Result<Convergence>> = OnceLock::new();
    CONV.get_or_init(|| {
        let sol = profile(ALPHA)?;
        let comp = compliant_run()?;
        let wave = wave_run()?;
        let t2 = detect_single_interval_time(&comp.snapshots, nl(), ALPHA, grid())
            .ok_or_else(|| Error::InsufficientData("contact set never settles into one interval".into()))?;
        let floor = wave.errors.iter().map(|s| s.sup_error).fold(0.0, f64::max);
        let report = fit_exponential_rate(&comp.errors, sol.c, &FitOptions { t_start: t2, noise_floor: 2.0 * floor })?;
        let (offset, offset_spread) = asymptotic_offset(&comp.errors, &wave.errors)?;
        let reference = wave_run_at("wave-matched", offset)?;
        let mut devs: Vec<f64> = comp
            .errors
            .iter()
            .zip(&reference.errors)
            .skip(comp.errors.len() * 3 / 4)
            .filter_map(|(a, b)| Some((a.r? - b.r?).abs()))
            .collect();
        devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let front_floor = 10.0 * devs.get(devs.len() / 2).copied().unwrap_or(0.0);
        let front = check_front_rate_against(&report, &reference.errors, front_floor);
        let front_raw = check_front_rate(&report, sol.c, front_floor);
        Ok(Convergence { t2, report, offset, offset_spread, front_floor, front, front_raw })
    })
    .as_ref()
    .map_err(Clone::clone)
}

// ---------------------------------------------------------------- criteria

fn velocity_identity(opts: &AcceptanceOptions) -> CriterionResult {
    let mut res = CriterionResult::new(1);
    let tol = opts.tol(1e-3);
    res.tol("relative_gap", tol);
    let mut worst: f64 = 0.0;
    for &a in &TEST_ALPHAS {
        let sol = match profile(a) {
            Ok(s) => s,
            Err(e) => return res.fail_with(&e),
        };
        let rel = (sol.c - sol.c_identity).abs() / sol.c.abs();
        worst = worst.max(rel);
        let b = profile_bounds(nl(), a);
        res.m(&format!("c[{a}]"), sol.c);
        res.check(rel < tol, format!("alpha {a}: relative gap {rel:e}"));
        res.check(sol.c < 0.0 && sol.c_identity < 0.0, format!("alpha {a}: non-negative velocity"));
        res.check(sol.c >= -b.c2, format!("alpha {a}: c = {} below -C2 = {}", sol.c, -b.c2));
    }
    res.m("worst_relative_gap", worst);
    res
}

fn strict_monotonicity() -> CriterionResult {
    let mut res = CriterionResult::new(2);
    res.tol("margin", 1e-8);
    let mut cs = Vec::new();
    for &a in &ORDER_ALPHAS {
        match profile(a) {
            Ok(s) => {
                res.m(&format!("c[{a}]"), s.c);
                cs.push(s.c)
            }
            Err(e) => return res.fail_with(&e),
        }
    }
    let margin = cs.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    res.m("min_margin", margin);
    res.check(margin > 1e-8, format!("smallest decrease {margin:e}"));
    res
}

fn grid_convergence() -> CriterionResult {
    let mut res = CriterionResult::new(3);
    res.tol("min_error_ratio", 3.0);
    // 4e-3 is a diagnostic: at the stated steps the error is already at the
    // bisection resolution, so the stated ratio is usually infinite.
    let cs: Vec<Result<f64>> = [2e-3, 1e-3, 5e-4, 4e-3]
        .par_iter()
        .map(|&ds| solve_profile(nl(), ALPHA, &ShootingOptions::default().with_ds(ds)).map(|s| s.c))
        .collect();
    let cs: Vec<f64> = match cs.into_iter().collect::<Result<Vec<f64>>>() {
        Ok(v) => v,
        Err(e) => return res.fail_with(&e),
    };
    let (e1, e2) = ((cs[0] - cs[1]).abs(), (cs[1] - cs[2]).abs());
    let ratio = e1 / e2;
    res.m("c_ds_2e-3", cs[0]);
    res.m("c_ds_1e-3", cs[1]);
    res.m("c_ds_5e-4", cs[2]);
    res.m("error_ratio", ratio);
    res.m("error_ratio_from_4e-3", (cs[3] - cs[0]).abs() / e1);
    res.check(ratio >= 3.0, format!("error ratio {ratio}"));
    res
}

fn degeneracy_jump(opts: &AcceptanceOptions) -> CriterionResult {
    let mut res = CriterionResult::new(4);
    let sol = match profile(ALPHA) {
        Ok(s) => s,
        Err(e) => return res.fail_with(&e),
    };
    let f_alpha = nl().eval(ALPHA);
    let (left, right) = profile_second_derivative_limits(nl(), sol);
    res.check(left == 0.0 && right == f_alpha, format!("limits ({left}, {right}) differ from (0, {f_alpha})"));
    let run = match wave_run() {
        Ok(r) => r,
        Err(e) => return res.fail_with(&e),
    };
    let g = grid();
    let c_tol = opts.tol(5.0);
    res.tol("curvature", c_tol * g.h * f_alpha);
    res.tol("slope", c_tol * g.h);
    let (mut worst_curv, mut worst_slope, mut n) = (0.0f64, 0.0f64, 0usize);
    // The sampled continuous profile needs a few cell-crossing times
    // (h / |c| = 0.26) to relax into the discrete wave.
    let burn_in = 1.0;
    res.m("burn_in", burn_in);
    for w in run.snapshots.windows(2).filter(|w| w[0].t >= burn_in) {
        match check_free_boundary_regularity((&w[0], &w[1]), nl(), g, ALPHA, DT, c_tol) {
            Ok(rep) => {
                worst_curv = worst_curv.max((rep.dxx_right - f_alpha).abs());
                worst_slope = worst_slope.max(rep.dx_right.abs());
                n += 1;
            }
            Err(e) => return res.fail_with(&e),
        }
    }
    res.m("worst_curvature_gap", worst_curv);
    res.m("worst_slope", worst_slope);
    res.m("snapshots", n as f64);
    res.check(worst_curv <= c_tol * g.h * f_alpha, format!("|u_xx(r+) - f(alpha)| reaches {worst_curv:e}"));
    res.check(worst_slope <= c_tol * g.h, format!("|u_x(r+)| reaches {worst_slope:e}"));
    res
}

fn regularized_consistency() -> CriterionResult {
    let mut res = CriterionResult::new(5);
    let sol = match profile(ALPHA) {
        Ok(s) => s,
        Err(e) => return res.fail_with(&e),
    };
    let mus = [0.1, 0.05, 0.025];
    let sols: Vec<Result<ProfileSolution<f64>>> =
        mus.par_iter().map(|&mu| solve_profile_regularized(nl(), ALPHA, mu, &ShootingOptions::default())).collect();
    let level = (ALPHA + nl().a_plus) / 2.0;
    let (mut dist, mut dc, mut amu) = (Vec::new(), Vec::new(), Vec::new());
    for (mu, s) in mus.iter().zip(sols) {
        let s = match s {
            Ok(s) => s,
            Err(e) => return res.fail_with(&e),
        };
        let d = profile_sup_distance(&s, sol, level).unwrap_or(f64::INFINITY);
        let a = match s.kind {
            ProfileKind::Regularized { alpha_mu, .. } => alpha_mu,
            ProfileKind::Sharp => f64::NAN,
        };
        res.m(&format!("sup_dist[{mu}]"), d);
        res.m(&format!("c_gap[{mu}]"), (s.c - sol.c).abs());
        res.m(&format!("alpha_mu[{mu}]"), a);
        dist.push(d);
        dc.push((s.c - sol.c).abs());
        amu.push(a);
    }
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    res.check(decreasing(&dist), "sup distance not strictly decreasing in mu");
    res.check(decreasing(&dc), "velocity gap not strictly decreasing in mu");
    res.check(amu.windows(2).all(|w| w[1] > w[0]), "alpha_mu not strictly increasing");
    res.check(amu.iter().all(|&a| a > nl().a_minus && a < ALPHA), "alpha_mu outside (a_minus, alpha)");
    res
}

fn wave_persistence(opts: &AcceptanceOptions) -> CriterionResult {
    let mut res = CriterionResult::new(6);
    let (sol, run) = match (profile(ALPHA), wave_run()) {
        (Ok(s), Ok(r)) => (s, r),
        (Err(e), _) | (_, Err(e)) => return res.fail_with(&e),
    };
    let h = grid().h;
    let Some(s) = run.errors.iter().find(|s| (s.t - 10.0).abs() < 1e-9) else {
        return res.fail_with(&Error::InsufficientData("no snapshot at T = 10".into()));
    };
    let drift = (s.shift - sol.c * 10.0).abs();
    res.m("drift", drift);
    res.m("sup_error", s.sup_error);
    res.tol("drift", opts.tol(5.0 * h));
    res.tol("sup_error", opts.tol(10.0 * h * h));
    res.check(drift <= opts.tol(5.0 * h), format!("|shift - c T| = {drift:e}"));
    res.check(s.sup_error <= opts.tol(10.0 * h * h), format!("sup error {:e}", s.sup_error));
    res
}

fn exponential_convergence(opts: &AcceptanceOptions) -> CriterionResult {
    let mut res = CriterionResult::new(7);
    let (conv, run) = match (convergence(), compliant_run()) {
        (Ok(c), Ok(r)) => (c, r),
        (Err(e), _) | (_, Err(e)) => return res.fail_with(&e),
    };
    let rep = &conv.report;
    let terminal = run.errors.last().map(|s| s.sup_error).unwrap_or(f64::INFINITY);
    res.m("t2", conv.t2);
    res.m("kappa", rep.kappa_fit);
    res.m("r_squared", rep.r_squared);
    res.m("x0", rep.x0_fit);
    res.m("samples", rep.samples_used as f64);
    res.m("noise_floor", rep.noise_floor);
    res.m("terminal_error", terminal);
    res.tol("min_r_squared", 0.95);
    res.tol("terminal_error", opts.tol(1e-3));
    res.check(rep.kappa_fit > 0.0, format!("kappa = {}", rep.kappa_fit));
    res.check(rep.r_squared > 0.95, format!("r^2 = {}", rep.r_squared));
    res.check(terminal < opts.tol(1e-3), format!("terminal error {terminal:e}"));
    res
}

fn free_boundary_rate() -> CriterionResult {
    let mut res = CriterionResult::new(8);
    let conv = match convergence() {
        Ok(c) => c,
        Err(e) => return res.fail_with(&e),
    };
    res.tol("ratio_min", 0.35);
    res.tol("ratio_max", 1.5);
    res.m("offset", conv.offset);
    res.m("offset_spread", conv.offset_spread);
    res.m("noise_floor", conv.front_floor);
    if let Ok(raw) = &conv.front_raw {
        res.m("ratio_against_x0_fit", raw.ratio);
    }
    match &conv.front {
        Ok(f) => {
            res.m("kappa_r", f.kappa_r);
            res.m("ratio", f.ratio);
            res.m("r_squared", f.r_squared);
            res.m("samples", f.samples_used as f64);
            res.check((0.35..=1.5).contains(&f.ratio), format!("ratio {}", f.ratio));
        }
        Err(e) => return res.fail_with(e),
    }
    res
}

/// `4000` interior nodes on `[-60, 60]`: wide enough for the left drift
/// `sigma delta` of the upper envelope.
fn envelope_grid() -> Grid1D<f64> {
    Grid1D::new(-60.0, 60.0, 4000).expect("valid grid")
}

const ENVELOPE_TIMES: [f64; 4] = [0.0, 1.0, 5.0, 20.0];

/// Ten Latin-hypercube draws of `(delta, beta, sigma)` inside the admissible
/// region: `delta` in `[0.2, 1] delta_max`, `beta` in `[0.2, 0.9] beta0`,
/// `sigma` in `[1.2, 4] sigma_beta(beta)`.
pub fn latin_hypercube_draws(consts: &EnvelopeConstants<f64>, delta_max: f64, seed: u64) -> Vec<(f64, f64, f64)> {
    const N: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<Vec<usize>> = (0..3).map(|_| (0..N).collect()).collect();
    for s in &mut strata {
        s.shuffle(&mut rng);
    }
    (0..N)
        .map(|i| {
            let mut u = [0.0; 3];
            for (d, s) in strata.iter().enumerate() {
                u[d] = (s[i] as f64 + rng.gen::<f64>()) / N as f64;
            }
            let delta = delta_max * (0.2 + 0.8 * u[0]);
            let beta = consts.beta0 * (0.2 + 0.7 * u[1]);
            let sigma = consts.sigma_beta(beta) * (1.2 + 2.8 * u[2]);
            (delta, beta, sigma)
        })
        .collect()
}

fn envelope_validity() -> CriterionResult {
    let mut res = CriterionResult::new(9);
    let sol = match profile(ALPHA) {
        Ok(s) => s,
        Err(e) => return res.fail_with(&e),
    };
    let (consts, delta, beta, sigma) = match default_envelope_parameters(sol, nl()) {
        Ok(v) => v,
        Err(e) => return res.fail_with(&e),
    };
    let g = envelope_grid();
    let draws = latin_hypercube_draws(&consts, delta, SEED);
    let reports: Vec<Result<(bool, f64)>> = draws
        .par_iter()
        .map(|&(d, b, s)| {
            let mut ok = true;
            let mut worst = f64::INFINITY;
            for sign in [Sign::Plus, Sign::Minus] {
                let env = ComparisonEnvelope::new(sol, &consts, d, s, b, 0.0, sign)?;
                let rep = check_residual_sign(&env, nl(), &g, &ENVELOPE_TIMES);
                ok &= rep.passed;
                let margin = match sign {
                    Sign::Plus => rep.worst_residual + rep.tol_res,
                    Sign::Minus => rep.tol_res - rep.worst_residual,
                };
                worst = worst.min(margin);
            }
            Ok((ok, worst))
        })
        .collect();
    let mut passed_draws = 0;
    let mut worst_margin = f64::INFINITY;
    for r in reports {
        match r {
            Ok((ok, m)) => {
                passed_draws += ok as usize;
                worst_margin = worst_margin.min(m);
            }
            Err(e) => return res.fail_with(&e),
        }
    }
    res.m("draws_passed", passed_draws as f64);
    res.m("worst_margin", worst_margin);
    res.check(passed_draws == draws.len(), format!("{} of {} draws fail", draws.len() - passed_draws, draws.len()));

    // Negative control: an inadmissible sigma must break the supersolution.
    let sigma_bad = consts.sigma_beta(beta) / 10.0;
    let bad = ComparisonEnvelope { profile: sol, delta, sigma: sigma_bad, beta, x0: 0.0, sign: Sign::Plus };
    let rep = check_residual_sign(&bad, nl(), &g, &ENVELOPE_TIMES);
    res.m("control_sigma", sigma_bad);
    res.m("control_worst_residual", rep.worst_residual);
    res.m("control_tol", rep.tol_res);
    res.m("default_sigma", sigma);
    // Smallest sigma at which the upper envelope still passes.
    let passes = |s: f64| {
        let env = ComparisonEnvelope { sigma: s, ..bad };
        check_residual_sign(&env, nl(), &g, &ENVELOPE_TIMES).passed
    };
    if !passes(0.0) {
        let (mut lo, mut hi) = (0.0, sigma_bad);
        if passes(hi) {
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if passes(mid) {
                    hi = mid
                } else {
                    lo = mid
                }
            }
            res.m("measured_sigma_threshold", hi);
        }
    }
    res.check(!rep.passed, format!("negative control sigma = sigma_beta/10 = {sigma_bad:.4} still passes"));
    res
}

fn comparison_ordering(opts: &AcceptanceOptions) -> CriterionResult {
    let mut res = CriterionResult::new(10);
    let (sol, run) = match (profile(ALPHA), compliant_run()) {
        (Ok(s), Ok(r)) => (s, r),
        (Err(e), _) | (_, Err(e)) => return res.fail_with(&e),
    };
    let (consts, delta, beta, sigma) = match default_envelope_parameters(sol, nl()) {
        Ok(v) => v,
        Err(e) => return res.fail_with(&e),
    };
    let env = |sign| ComparisonEnvelope::new(sol, &consts, delta, sigma, beta, 0.0, sign);
    let (minus, plus) = match (env(Sign::Minus), env(Sign::Plus)) {
        (Ok(m), Ok(p)) => (m, p),
        (Err(e), _) | (_, Err(e)) => return res.fail_with(&e),
    };
    let u0 = &run.snapshots[0].u;
    let (Some(xm), Some(xp)) = (anchor_envelope(u0, grid(), &minus), anchor_envelope(u0, grid(), &plus)) else {
        return res.fail_with(&Error::OrderingPrecondition("no anchor orders the envelopes at t = 0".into()));
    };
    res.m("x0_minus", xm);
    res.m("x0_plus", xp);
    res.tol("ordering", opts.tol(1e-8));
    match check_ordering(&run.snapshots, grid(), &minus.with_x0(xm), &plus.with_x0(xp), 0.0) {
        Ok(rep) => {
            res.m("snapshots", rep.snapshots_checked as f64);
            res.m("max_excess", rep.max_excess);
            res.check(rep.max_excess <= opts.tol(1e-8), format!("first violation {:?}", rep.first_violation));
        }
        Err(e) => return res.fail_with(&e),
    }
    res
}

/// Forces every simulation of the suite so that the all-runs checks see
/// them.
fn all_runs() -> Result<Vec<RunStats>> {
    wave_run()?;
    compliant_run()?;
    convergence()?;
    cross_validation()?;
    steady_runs()?;
    Ok(run_log().lock().unwrap().clone())
}

fn multiplier_structure(opts: &AcceptanceOptions) -> CriterionResult {
    let mut res = CriterionResult::new(11);
    let run = match wave_run() {
        Ok(r) => r,
        Err(e) => return res.fail_with(&e),
    };
    let g = grid();
    let f_alpha = nl().eval(ALPHA);
    let band = opts.tol(5.0 * g.h * f_alpha);
    res.tol("band", band);
    let (mut worst_in, mut worst_out) = (0.0f64, 0.0f64);
    for s in &run.snapshots {
        let Some(r) = s.r else {
            res.check(false, format!("no free boundary at t = {}", s.t));
            continue;
        };
        for i in 0..g.n {
            let x = g.x(i);
            if x < r - 2.0 * g.h {
                worst_in = worst_in.max((s.eta[i] + f_alpha).abs());
            } else if x > r + 2.0 * g.h {
                worst_out = worst_out.max(s.eta[i].abs());
            }
        }
    }
    res.m("worst_contact_gap", worst_in);
    res.m("worst_free_gap", worst_out);
    res.check(worst_in <= band, format!("eta + f(alpha) reaches {worst_in:e} on the contact set"));
    res.check(worst_out <= band, format!("|eta| reaches {worst_out:e} off contact"));

    let stats = match all_runs() {
        Ok(s) => s,
        Err(e) => return res.fail_with(&e),
    };
    let max_eta = stats.iter().map(|s| s.max_eta).fold(f64::NEG_INFINITY, f64::max);
    res.m("max_eta_all_runs", max_eta);
    res.tol("max_eta", 1e-12);
    res.check(max_eta <= 1e-12, format!("eta reaches {max_eta:e}"));
    for s in &stats {
        let slack = opts.tol(1e-10 + 1e-8 * s.eta_bound_rhs);
        res.check(s.eta_bound_excess <= slack, format!("{}: weighted multiplier bound exceeded by {:e}", s.label, s.eta_bound_excess));
    }
    let worst = stats.iter().map(|s| s.eta_bound_excess).fold(f64::NEG_INFINITY, f64::max);
    res.m("worst_weighted_bound_excess", worst);
    res
}

/// `u == gamma` for 10^4 steps of each scheme, `gamma` in `{alpha, (alpha + a0)/2}`.
fn steady_runs() -> Result<&'static Vec<(String, f64)>> {
    static RUNS: OnceLock<Result<Vec<(String, f64)>>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let g = grid();
        let cases: Vec<(f64, Scheme, f64)> = [ALPHA, (ALPHA + nl().a_zero) / 2.0]
            .iter()
            .flat_map(|&gamma| {
                [(gamma, Scheme::ExplicitPositivePart, 0.4 * g.h * g.h * 0.99), (gamma, Scheme::ImexProjected, DT)]
            })
            .collect();
        cases
            .par_iter()
            .map(|&(gamma, scheme, dt)| {
                let cfg = SimConfig {
                    scheme,
                    dt,
                    t_end: dt * 1e4,
                    bc_left: gamma,
                    bc_right: gamma,
                    snapshot_every: 10_000,
                    alpha: None,
                };
                let snaps = simulate("steady", &cfg, &vec![gamma; g.n], g)?;
                let last = snaps.last().expect("final snapshot");
                let drift = last.u.iter().map(|v| (v - gamma).abs()).fold(0.0, f64::max);
                Ok((format!("{scheme:?}[{gamma}]"), drift))
            })
            .collect()
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn steady_states(opts: &AcceptanceOptions) -> CriterionResult {
    let mut res = CriterionResult::new(12);
    res.tol("drift", opts.tol(1e-12));
    res.tol("min_increment", -opts.tol(1e-12));
    let runs = match steady_runs() {
        Ok(r) => r,
        Err(e) => return res.fail_with(&e),
    };
    for (label, drift) in runs {
        res.m(&format!("drift {label}"), *drift);
        res.check(*drift <= opts.tol(1e-12), format!("{label} drifts by {drift:e}"));
    }
    let stats = match all_runs() {
        Ok(s) => s,
        Err(e) => return res.fail_with(&e),
    };
    let min_inc = stats.iter().map(|s| s.min_increment).fold(f64::INFINITY, f64::min);
    res.m("min_increment_all_runs", min_inc);
    res.m("runs", stats.len() as f64);
    res.check(min_inc >= -opts.tol(1e-12), format!("an increment of {min_inc:e}"));
    res
}

/// Explicit (`dt = 2.5e-5`) and IMEX (`dt = 1e-3`) from the compliant data to `T = 1`.
fn cross_validation() -> Result<f64> {
    static D: OnceLock<Result<f64>> = OnceLock::new();
    D.get_or_init(|| {
        let g = grid();
        let u0 = compliant_data(g)?;
        let cfg = |scheme, dt| SimConfig {
            scheme,
            dt,
            t_end: 1.0,
            bc_left: ALPHA,
            bc_right: nl().a_plus,
            snapshot_every: 1_000_000,
            alpha: Some(ALPHA),
        };
        let (a, b) = rayon::join(
            || simulate("explicit-T1", &cfg(Scheme::ExplicitPositivePart, 2.5e-5), &u0, g),
            || simulate("imex-T1", &cfg(Scheme::ImexProjected, DT), &u0, g),
        );
        let (a, b) = (a?, b?);
        let (ua, ub) = (&a.last().expect("snapshot").u, &b.last().expect("snapshot").u);
        Ok(ua.iter().zip(ub).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    })
    .clone()
}

fn scheme_cross_validation(opts: &AcceptanceOptions) -> CriterionResult {
    let mut res = CriterionResult::new(13);
    res.tol("sup_distance", opts.tol(1e-3));
    match cross_validation() {
        Ok(d) => {
            res.m("sup_distance", d);
            res.check(d <= opts.tol(1e-3), format!("schemes differ by {d:e}"));
        }
        Err(e) => return res.fail_with(&e),
    }
    res
}

fn family_instability() -> CriterionResult {
    let mut res = CriterionResult::new(14);
    let (s1, s2) = match (profile(-0.8), profile(-0.75)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return res.fail_with(&e),
    };
    let dc = (s1.c - s2.c).abs();
    let t = 6.0 / dc;
    let (p1, p2) = (s1.c * t, s2.c * t);
    let lo = p1.min(p2) - 10.0;
    let hi = p1.max(p2) + s1.s_end().max(s2.s_end()) + 10.0;
    let n = ((hi - lo) / 1e-2).ceil() as usize;
    let sup = (0..=n)
        .map(|k| {
            let x = lo + k as f64 * 1e-2;
            (evaluate_profile(s1, x - p1) - evaluate_profile(s2, x - p2)).abs()
        })
        .fold(0.0, f64::max);
    let need = (nl().a_plus - nl().a_zero) / 2.0;
    res.m("T", t);
    res.m("separation", dc * t);
    res.m("sup_distance", sup);
    res.tol("min_sup_distance", need);
    res.check(dc * t > 5.0, "fronts not separated");
    res.check(sup > need, format!("sup distance {sup}"));
    res
}

/// `E(t)` in the frame `y = x - p - c t`, `p` a little left of every later
/// `r(t) - c t`, for snapshots with `t >= tau0`.
fn energy_series(run: &Run, sol: &ProfileSolution<f64>, tau0: f64) -> Result<Vec<(f64, f64)>> {
    let g = grid();
    let p = run
        .snapshots
        .iter()
        .filter(|s| s.t >= tau0)
        .filter_map(|s| s.r.map(|r| r - sol.c * s.t))
        .fold(f64::INFINITY, f64::min)
        - 5.0 * g.h;
    if !p.is_finite() {
        return Err(Error::NoFreeBoundary("no free boundary after tau0".into()));
    }
    run.snapshots
        .par_iter()
        .filter(|s| s.t >= tau0)
        .map(|s| weighted_energy(s, sol, nl(), g, p + sol.c * s.t).map(|e| (s.t, e)))
        .collect()
}

fn weighted_energy_decay(opts: &AcceptanceOptions) -> CriterionResult {
    let mut res = CriterionResult::new(15);
    let (sol, comp, wave, conv) = match (profile(ALPHA), compliant_run(), wave_run(), convergence()) {
        (Ok(s), Ok(c), Ok(w), Ok(v)) => (s, c, w, v),
        (Err(e), ..) | (_, Err(e), ..) | (_, _, Err(e), _) | (.., Err(e)) => return res.fail_with(&e),
    };
    let tau0 = conv.t2;
    match energy_series(comp, sol, tau0) {
        Ok(e) => {
            let e0 = e[0].1;
            let rise = e.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
            res.m("tau0", tau0);
            res.m("E_tau0", e0);
            res.m("max_increase", rise);
            res.tol("max_increase", opts.tol(1e-6) * e0);
            res.check(rise <= opts.tol(1e-6) * e0, format!("E increases by {rise:e}"));
        }
        Err(e) => return res.fail_with(&e),
    }
    match energy_series(wave, sol, 0.0) {
        Ok(e) => {
            let e0 = e[0].1;
            let spread = e.iter().map(|v| (v.1 - e0).abs()).fold(0.0, f64::max) / e0;
            res.m("wave_relative_variation", spread);
            res.tol("wave_relative_variation", opts.tol(1e-4));
            res.check(spread <= opts.tol(1e-4), format!("wave energy varies by {spread:e}"));
        }
        Err(e) => return res.fail_with(&e),
    }
    res
}
