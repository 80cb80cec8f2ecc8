//! Degenerate traveling-wave profiles.
//!
//! The profile `phi` equals `alpha` on `(-inf, 0]` and solves
//! `phi'' = f(phi) - c phi'` on `(0, inf)` with `phi(0) = alpha`,
//! `phi'(0) = 0` and `phi -> a_plus`. The velocity `c < 0` is found by
//! shooting from the contact point and bisecting on `c` between a trajectory
//! that overshoots `a_plus` and one that turns back below it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{check_alpha, Nonlinearity};
use crate::quadrature::adaptive_simpson;
use crate::scalar::Scalar;

/// Outcome of one shooting trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    /// `phi` reached `a_plus` with `psi > 0`.
    Overshoot,
    /// `psi` returned to zero below `a_plus`.
    Turnback,
    /// Entered the `tol_asym` neighbourhood of `(a_plus, 0)`.
    Converged,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event<T> {
    pub kind: Classification,
    /// Arclength at which the event was located.
    pub s: T,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory<T> {
    pub s: Vec<T>,
    pub phi: Vec<T>,
    pub psi: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    fn push(&mut self, s: T, phi: T, psi: T) {
        self.s.push(s);
        self.phi.push(phi);
        self.psi.push(psi);
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Numerical parameters of the shooting solver.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShootingOptions<T> {
    pub ds: T,
    /// Width of the final velocity bracket.
    pub tol_c: T,
    /// Radius of the CONVERGED neighbourhood of `(a_plus, 0)`.
    pub tol_asym: T,
    /// Integration length; `None` means `40 (a_plus - a_minus)`.
    pub s_max: Option<T>,
    pub max_bisections: usize,
}

impl<T: Scalar> Default for ShootingOptions<T> {
    fn default() -> Self {
        Self {
            ds: T::lit(1e-3),
            tol_c: T::lit(1e-14),
            tol_asym: T::lit(1e-8),
            s_max: None,
            max_bisections: 200,
        }
    }
}

impl<T: Scalar> ShootingOptions<T> {
    pub fn with_ds(mut self, ds: T) -> Self {
        self.ds = ds;
        self
    }

    fn s_max_for(&self, nl: &Nonlinearity<T>) -> T {
        self.s_max.unwrap_or_else(|| T::lit(40.0) * nl.span())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileKind<T> {
    Sharp,
    /// Moreau-Yosida penalized profile; `alpha_mu` is the rest state.
    Regularized { mu: T, alpha_mu: T },
}

/// A computed traveling-wave profile on the uniform grid `s_i = i ds`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSolution<T> {
    pub alpha: T,
    pub c: T,
    pub s_grid: Vec<T>,
    pub phi: Vec<T>,
    pub psi: Vec<T>,
    pub ds: T,
    /// `|phi[N] - a_plus| + |psi[N]|`.
    pub residual_at_end: T,
    /// Velocity recomputed from the energy identity.
    pub c_identity: T,
    pub kind: ProfileKind<T>,
    pub a_plus: T,
    /// `f'(a_plus)`, fixes the exponential tail.
    pub fprime_aplus: T,
    /// How the stored trajectory ended before truncation.
    pub end_event: Classification,
}

impl<T: Scalar> ProfileSolution<T> {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn s_end(&self) -> T {
        *self.s_grid.last().expect("non-empty profile")
    }

    /// Decay rate `nu > 0` of `a_plus - phi ~ e^{-nu s}`: the stable root of
    /// `mu^2 + c mu - f'(a_plus) = 0` is `-nu`.
    pub fn tail_rate(&self) -> T {
        tail_rate(self.c, self.fprime_aplus)
    }

    /// Rest state left of the contact point (`alpha`, or `alpha_mu`).
    pub fn rest_state(&self) -> T {
        match self.kind {
            ProfileKind::Sharp => self.alpha,
            ProfileKind::Regularized { alpha_mu, .. } => alpha_mu,
        }
    }
}

fn tail_rate<T: Scalar>(c: T, fprime_aplus: T) -> T {
    (c + (c * c + T::lit(4.0) * fprime_aplus).sqrt()) / T::lit(2.0)
}

/// A-priori bounds `0 <= phi' <= c1` and `-c2 <= c < 0`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProfileBounds<T> {
    pub c1: T,
    pub c2: T,
}

pub fn profile_bounds<T: Scalar>(nl: &Nonlinearity<T>, alpha: T) -> ProfileBounds<T> {
    let tol = T::tol(1e-13);
    let to_aplus = adaptive_simpson(|z| nl.eval(z), alpha, nl.a_plus, tol);
    let to_azero = adaptive_simpson(|z| nl.eval(z), alpha, nl.a_zero, tol);
    let sup_left = nl.sup_abs(nl.a_minus, nl.a_zero);
    let c1 = (T::lit(2.0) * (-to_aplus + (nl.a_zero - alpha + T::one()) * sup_left)).sqrt();
    let c2 = nl.sup_abs(nl.a_minus, nl.a_plus) / (T::lit(2.0) * to_azero).sqrt();
    ProfileBounds { c1, c2 }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// CONVERGED ends the trajectory.
    Track,
    /// Integrate through the neighbourhood of `a_plus` until the trajectory
    /// leaves it; used by the bisection so that `c` is resolved below
    /// `tol_asym`.
    Strict,
}

#[inline]
fn rk4<T: Scalar, R: Fn(T) -> T>(reaction: &R, c: T, p: T, q: T, h: T) -> (T, T) {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let rhs = |p: T, q: T| (q, reaction(p) - c * q);
    let (k1p, k1q) = rhs(p, q);
    let (k2p, k2q) = rhs(p + h / two * k1p, q + h / two * k1q);
    let (k3p, k3q) = rhs(p + h / two * k2p, q + h / two * k2q);
    let (k4p, k4q) = rhs(p + h * k3p, q + h * k3q);
    (
        p + h / six * (k1p + two * k2p + two * k3p + k4p),
        q + h / six * (k1q + two * k2q + two * k3q + k4q),
    )
}

/// Locates the event inside the last step by bisecting on the step fraction.
fn refine_event<T: Scalar, R: Fn(T) -> T>(
    reaction: &R,
    c: T,
    p: T,
    q: T,
    ds: T,
    triggered: impl Fn(T, T) -> bool,
) -> (T, T, T) {
    let (mut lo, mut hi) = (T::zero(), T::one());
    let stop = T::lit(1e-6);
    while hi - lo > stop {
        let mid = (lo + hi) / T::lit(2.0);
        let (pm, qm) = rk4(reaction, c, p, q, mid * ds);
        if triggered(pm, qm) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (pe, qe) = rk4(reaction, c, p, q, hi * ds);
    (hi * ds, pe, qe)
}

#[allow(clippy::too_many_arguments)]
fn shoot<T: Scalar, R: Fn(T) -> T>(
    reaction: &R,
    a_plus: T,
    start: (T, T),
    c: T,
    ds: T,
    s_max: T,
    tol_asym: T,
    mode: Mode,
    record: bool,
) -> Result<(Trajectory<T>, Event<T>)> {
    let mut traj = Trajectory::default();
    let (mut p, mut q) = start;
    if record {
        traj.push(T::zero(), p, q);
    }
    let steps = (s_max / ds).ceil().to_usize().unwrap_or(usize::MAX);
    for k in 0..steps {
        let s = T::lit(k as f64) * ds;
        let (pn, qn) = rk4(reaction, c, p, q, ds);
        let s_next = T::lit((k + 1) as f64) * ds;
        if !(pn.is_finite() && qn.is_finite()) {
            return Err(Error::InvalidInput(format!("profile ODE blew up at s = {s}")));
        }
        if mode == Mode::Track && (pn - a_plus).abs() + qn.abs() < tol_asym {
            if record {
                traj.push(s_next, pn, qn);
            }
            return Ok((traj, Event { kind: Classification::Converged, s: s_next }));
        }
        if pn >= a_plus {
            let (frac, pe, qe) = refine_event(reaction, c, p, q, ds, |pm, _| pm >= a_plus);
            if record {
                traj.push(s + frac, pe, qe);
            }
            return Ok((traj, Event { kind: Classification::Overshoot, s: s + frac }));
        }
        if qn <= T::zero() {
            let (frac, pe, qe) = refine_event(reaction, c, p, q, ds, |_, qm| qm <= T::zero());
            if record {
                traj.push(s + frac, pe, qe);
            }
            return Ok((traj, Event { kind: Classification::Turnback, s: s + frac }));
        }
        p = pn;
        q = qn;
        if record {
            traj.push(s_next, p, q);
        }
    }
    Err(Error::NoEvent { s_max: s_max.to_f64_lossy() })
}

fn require_admissible<T: Scalar>(nl: &Nonlinearity<T>, alpha: T) -> Result<()> {
    let adm = check_alpha(nl, alpha);
    if adm.satisfies_hyp {
        Ok(())
    } else {
        Err(Error::AlphaNotAdmissible(
            adm.reason.unwrap_or_else(|| format!("alpha = {alpha}")),
        ))
    }
}

/// Integrates `phi' = psi, psi' = f(phi) - c psi` from `(alpha, 0)` with
/// classical RK4 and classifies the trajectory.
pub fn integrate_profile_ode<T: Scalar>(
    nl: &Nonlinearity<T>,
    alpha: T,
    c: T,
    ds: T,
    s_max: T,
) -> Result<(Trajectory<T>, Event<T>)> {
    if !(ds > T::zero() && s_max > T::zero()) {
        return Err(Error::InvalidInput("ds and s_max must be positive".into()));
    }
    if !(c < T::zero()) {
        return Err(Error::InvalidInput(format!("velocity must be negative, got {c}")));
    }
    if !(alpha > nl.a_minus && alpha < nl.a_zero) {
        return Err(Error::AlphaNotAdmissible(format!("alpha = {alpha}")));
    }
    let reaction = |s: T| nl.eval(s);
    shoot(
        &reaction,
        nl.a_plus,
        (alpha, T::zero()),
        c,
        ds,
        s_max,
        T::lit(1e-8),
        Mode::Track,
        true,
    )
}

/// Bisection on `c` over `[lo, hi]`. The orientation is read off the two
/// bracket ends. Returns the final velocity.
fn bisect_velocity<T: Scalar>(
    classify: impl Fn(T) -> Result<Classification>,
    mut lo: T,
    mut hi: T,
    opts: &ShootingOptions<T>,
) -> Result<T> {
    let class_lo = classify(lo)?;
    let class_hi = classify(hi)?;
    if class_lo == class_hi {
        return Err(Error::BracketInvalid(format!("{class_lo:?} on [{lo}, {hi}]")));
    }
    let two = T::lit(2.0);
    for _ in 0..opts.max_bisections {
        let mid = (lo + hi) / two;
        if hi - lo < opts.tol_c || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        match classify(mid) {
            Ok(k) if k == class_lo => lo = mid,
            Ok(_) => hi = mid,
            // On the connecting orbit to within rounding.
            Err(Error::NoEvent { .. }) => return Ok(mid),
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoConvergence(opts.max_bisections))
}

/// Cuts a final trajectory at its closest approach to `(a_plus, 0)` unless
/// it already ended CONVERGED.
fn truncate_at_closest<T: Scalar>(traj: &mut Trajectory<T>, event: Event<T>, a_plus: T) {
    if event.kind == Classification::Converged {
        return;
    }
    // The refined event point is off the uniform grid.
    let last_grid = traj.len() - 1;
    let best = (0..last_grid)
        .filter(|&i| traj.phi[i] < a_plus)
        .min_by(|&i, &j| {
            let di = (traj.phi[i] - a_plus).abs() + traj.psi[i].abs();
            let dj = (traj.phi[j] - a_plus).abs() + traj.psi[j].abs();
            di.partial_cmp(&dj).expect("finite")
        })
        .unwrap_or(0);
    traj.s.truncate(best + 1);
    traj.phi.truncate(best + 1);
    traj.psi.truncate(best + 1);
}

/// Solves for `(c_alpha, phi_alpha)`.
pub fn solve_profile<T: Scalar>(
    nl: &Nonlinearity<T>,
    alpha: T,
    opts: &ShootingOptions<T>,
) -> Result<ProfileSolution<T>> {
    require_admissible(nl, alpha)?;
    let s_max = opts.s_max_for(nl);
    let reaction = |s: T| nl.eval(s);
    let bounds = profile_bounds(nl, alpha);
    let classify = |c: T| {
        shoot(&reaction, nl.a_plus, (alpha, T::zero()), c, opts.ds, s_max, opts.tol_asym, Mode::Strict, false)
            .map(|(_, e)| e.kind)
    };
    let c = bisect_velocity(classify, -bounds.c2 - T::one(), -T::lit(1e-12), opts)?;
    let (mut traj, event) = shoot(
        &reaction,
        nl.a_plus,
        (alpha, T::zero()),
        c,
        opts.ds,
        s_max,
        opts.tol_asym,
        Mode::Track,
        true,
    )
    .or_else(|e| match e {
        Error::NoEvent { .. } => shoot(
            &reaction,
            nl.a_plus,
            (alpha, T::zero()),
            c,
            opts.ds,
            s_max,
            opts.tol_asym,
            Mode::Strict,
            true,
        ),
        e => Err(e),
    })?;
    truncate_at_closest(&mut traj, event, nl.a_plus);
    finish(nl, traj, alpha, c, opts.ds, ProfileKind::Sharp, event.kind)
}

fn finish<T: Scalar>(
    nl: &Nonlinearity<T>,
    traj: Trajectory<T>,
    alpha: T,
    c: T,
    ds: T,
    kind: ProfileKind<T>,
    end_event: Classification,
) -> Result<ProfileSolution<T>> {
    let n = traj.len() - 1;
    let residual_at_end = (traj.phi[n] - nl.a_plus).abs() + traj.psi[n].abs();
    let mut sol = ProfileSolution {
        alpha,
        c,
        s_grid: traj.s,
        phi: traj.phi,
        psi: traj.psi,
        ds,
        residual_at_end,
        c_identity: T::nan(),
        kind,
        a_plus: nl.a_plus,
        fprime_aplus: nl.deriv(nl.a_plus),
        end_event,
    };
    sol.c_identity = velocity_identity(nl, &sol)?;
    Ok(sol)
}

/// `c = (W(a_plus) - W(alpha)) / int psi^2`, with the integral taken by the
/// trapezoid rule plus the analytic exponential tail beyond `s_N`.
/// Regularized profiles use the penalized primitive and their launch energy.
pub fn velocity_identity<T: Scalar>(nl: &Nonlinearity<T>, sol: &ProfileSolution<T>) -> Result<T> {
    let two = T::lit(2.0);
    let n = sol.len();
    let mut integral = T::zero();
    for i in 1..n {
        let h = sol.s_grid[i] - sol.s_grid[i - 1];
        integral = integral + h * (sol.psi[i] * sol.psi[i] + sol.psi[i - 1] * sol.psi[i - 1]) / two;
    }
    let nu = sol.tail_rate();
    let gap = sol.a_plus - sol.phi[n - 1];
    integral = integral + nu * gap * gap / two;

    let numerator = match sol.kind {
        ProfileKind::Sharp => nl.primitive(nl.a_plus) - nl.primitive(sol.alpha),
        ProfileKind::Regularized { mu, alpha_mu } => {
            let launch_rate = unstable_rate(nl, sol.alpha, mu, alpha_mu, sol.c);
            integral = integral + sol.psi[0] * sol.psi[0] / (two * launch_rate);
            let g = |s: T| penalized_primitive(nl, sol.alpha, mu, s);
            g(nl.a_plus) - g(alpha_mu)
        }
    };
    if integral < T::lit(1e-14) {
        return Err(Error::DivideNearZero(integral.to_f64_lossy()));
    }
    Ok(numerator / integral)
}

/// `phi(x)`: `alpha` (the rest state) for `x <= 0`, cubic Hermite on the grid
/// using the stored `psi`, exponential approach to `a_plus` past the grid.
pub fn evaluate_profile<T: Scalar>(sol: &ProfileSolution<T>, x: T) -> T {
    if x <= T::zero() {
        return sol.rest_state();
    }
    let n = sol.len() - 1;
    let s_end = sol.s_grid[n];
    if x >= s_end {
        let nu = sol.tail_rate();
        return sol.a_plus - (sol.a_plus - sol.phi[n]) * (-nu * (x - s_end)).exp();
    }
    let (i, t, h) = locate(sol, x);
    let (h00, h10, h01, h11) = hermite_basis(t);
    h00 * sol.phi[i] + h10 * h * sol.psi[i] + h01 * sol.phi[i + 1] + h11 * h * sol.psi[i + 1]
}

/// `phi'(x)`, consistent with [`evaluate_profile`].
pub fn evaluate_profile_derivative<T: Scalar>(sol: &ProfileSolution<T>, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let n = sol.len() - 1;
    let s_end = sol.s_grid[n];
    if x >= s_end {
        let nu = sol.tail_rate();
        return nu * (sol.a_plus - sol.phi[n]) * (-nu * (x - s_end)).exp();
    }
    let (i, t, h) = locate(sol, x);
    let six = T::lit(6.0);
    let (d00, d10, d01, d11) = (
        six * t * t - six * t,
        T::lit(3.0) * t * t - T::lit(4.0) * t + T::one(),
        -six * t * t + six * t,
        T::lit(3.0) * t * t - T::lit(2.0) * t,
    );
    (d00 * sol.phi[i] + d01 * sol.phi[i + 1]) / h + d10 * sol.psi[i] + d11 * sol.psi[i + 1]
}

#[inline]
fn locate<T: Scalar>(sol: &ProfileSolution<T>, x: T) -> (usize, T, T) {
    let n = sol.len() - 1;
    let i = (x / sol.ds).floor().to_usize().unwrap_or(0).min(n - 1);
    let h = sol.s_grid[i + 1] - sol.s_grid[i];
    let t = ((x - sol.s_grid[i]) / h).max(T::zero()).min(T::one());
    (i, t, h)
}

#[inline]
fn hermite_basis<T: Scalar>(t: T) -> (T, T, T, T) {
    let t2 = t * t;
    let t3 = t2 * t;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    (
        two * t3 - three * t2 + T::one(),
        t3 - two * t2 + t,
        -two * t3 + three * t2,
        t3 - t2,
    )
}

/// One-sided limits of `phi''` at the contact point: `0` from the left and
/// `f(phi(0)) - c psi(0)` from the right.
pub fn profile_second_derivative_limits<T: Scalar>(nl: &Nonlinearity<T>, sol: &ProfileSolution<T>) -> (T, T) {
    (T::zero(), nl.eval(sol.phi[0]) - sol.c * sol.psi[0])
}

/// One-sided Moreau-Yosida penalty of the constraint `s >= alpha`.
#[inline]
pub fn penalty<T: Scalar>(alpha: T, mu: T, s: T) -> T {
    if s < alpha {
        (s - alpha) / mu
    } else {
        T::zero()
    }
}

fn penalized_primitive<T: Scalar>(nl: &Nonlinearity<T>, alpha: T, mu: T, s: T) -> T {
    let below = (alpha - s).max(T::zero());
    nl.primitive(s) + below * below / (T::lit(2.0) * mu)
}

/// Root `alpha_mu in (a_minus, alpha)` of `f(s) + p_mu(s)`.
pub fn penalized_rest_state<T: Scalar>(nl: &Nonlinearity<T>, alpha: T, mu: T) -> Result<T> {
    let g = |s: T| nl.eval(s) + penalty(alpha, mu, s);
    let (mut lo, mut hi) = (nl.a_minus, alpha);
    if !(g(lo) < T::zero() && g(hi) > T::zero()) {
        return Err(Error::NoRootAlphaMu);
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / T::lit(2.0))
}

fn unstable_rate<T: Scalar>(nl: &Nonlinearity<T>, alpha: T, mu: T, alpha_mu: T, c: T) -> T {
    let slope = nl.deriv(alpha_mu) + penalty_slope(alpha, mu, alpha_mu);
    (-c + (c * c + T::lit(4.0) * slope).sqrt()) / T::lit(2.0)
}

fn penalty_slope<T: Scalar>(alpha: T, mu: T, s: T) -> T {
    if s < alpha {
        T::one() / mu
    } else {
        T::zero()
    }
}

/// Solves the penalized profile equation `phi'' = f(phi) + p_mu(phi) - c phi'`.
/// Trajectories leave the saddle `(alpha_mu, 0)` along its unstable direction
/// at distance `launch_eps`.
pub fn solve_profile_regularized<T: Scalar>(
    nl: &Nonlinearity<T>,
    alpha: T,
    mu: T,
    opts: &ShootingOptions<T>,
) -> Result<ProfileSolution<T>> {
    solve_profile_regularized_with_launch(nl, alpha, mu, T::lit(1e-7) * nl.span(), opts)
}

pub fn solve_profile_regularized_with_launch<T: Scalar>(
    nl: &Nonlinearity<T>,
    alpha: T,
    mu: T,
    launch_eps: T,
    opts: &ShootingOptions<T>,
) -> Result<ProfileSolution<T>> {
    if !(mu > T::zero() && mu <= T::one()) {
        return Err(Error::InvalidInput(format!("mu = {mu} outside (0, 1]")));
    }
    require_admissible(nl, alpha)?;
    let alpha_mu = penalized_rest_state(nl, alpha, mu)?;
    if nl.deriv(alpha_mu) + penalty_slope(alpha, mu, alpha_mu) <= T::zero() {
        return Err(Error::InvalidInput("penalized rest state is not a saddle".into()));
    }
    let reaction = |s: T| nl.eval(s) + penalty(alpha, mu, s);
    let launch = |c: T| {
        let rate = unstable_rate(nl, alpha, mu, alpha_mu, c);
        let norm = (T::one() + rate * rate).sqrt();
        (alpha_mu + launch_eps / norm, launch_eps * rate / norm)
    };
    let s_max = opts.s_max_for(nl);
    let bounds = profile_bounds(nl, alpha);
    let classify = |c: T| {
        shoot(&reaction, nl.a_plus, launch(c), c, opts.ds, s_max, opts.tol_asym, Mode::Strict, false)
            .map(|(_, e)| e.kind)
    };
    let c = bisect_velocity(classify, -bounds.c2 - T::one(), -T::lit(1e-12), opts)?;
    let (mut traj, event) =
        shoot(&reaction, nl.a_plus, launch(c), c, opts.ds, s_max, opts.tol_asym, Mode::Track, true).or_else(
            |e| match e {
                Error::NoEvent { .. } => {
                    shoot(&reaction, nl.a_plus, launch(c), c, opts.ds, s_max, opts.tol_asym, Mode::Strict, true)
                }
                e => Err(e),
            },
        )?;
    truncate_at_closest(&mut traj, event, nl.a_plus);
    finish(nl, traj, alpha, c, opts.ds, ProfileKind::Regularized { mu, alpha_mu }, event.kind)
}

/// Position where the profile first reaches `level` (linear between nodes).
pub fn level_crossing<T: Scalar>(sol: &ProfileSolution<T>, level: T) -> Option<T> {
    let i = sol.phi.iter().position(|&p| p >= level)?;
    if i == 0 {
        return Some(T::zero());
    }
    let (p0, p1) = (sol.phi[i - 1], sol.phi[i]);
    let theta = (level - p0) / (p1 - p0);
    Some(sol.s_grid[i - 1] + theta * (sol.s_grid[i] - sol.s_grid[i - 1]))
}

/// `sup_x |phi_a(x) - phi_b(x)|` after aligning both profiles where they
/// cross `level`.
pub fn profile_sup_distance<T: Scalar>(a: &ProfileSolution<T>, b: &ProfileSolution<T>, level: T) -> Option<T> {
    let xa = level_crossing(a, level)?;
    let xb = level_crossing(b, level)?;
    let lo = -xa.max(xb) - T::one();
    let hi = (a.s_end() - xa).max(b.s_end() - xb) + T::one();
    let step = a.ds.min(b.ds);
    let n = ((hi - lo) / step).ceil().to_usize()?;
    let sup = (0..=n)
        .map(|k| {
            let y = lo + T::lit(k as f64) * step;
            (evaluate_profile(a, y + xa) - evaluate_profile(b, y + xb)).abs()
        })
        .fold(T::zero(), T::max);
    Some(sup)
}

/// One row of a velocity family table.
#[derive(Clone, Debug)]
pub struct FamilyEntry<T> {
    pub alpha: T,
    pub outcome: Result<(T, T)>,
}

/// Computes `(c, c_identity)` for each `alpha` independently and in parallel.
/// Failures are recorded per entry.
pub fn profile_family<T: Scalar>(
    nl: &Nonlinearity<T>,
    alphas: &[T],
    opts: &ShootingOptions<T>,
) -> Vec<FamilyEntry<T>> {
    let mut sorted = alphas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted
        .par_iter()
        .map(|&alpha| FamilyEntry {
            alpha,
            outcome: solve_profile(nl, alpha, opts).map(|s| (s.c, s.c_identity)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cubic() -> Nonlinearity<f64> {
        Nonlinearity::cubic()
    }

    /// Forward Euler with a tiny step, written independently of the RK4 path.
    fn euler_oracle(alpha: f64, c: f64) -> Classification {
        let f = |u: f64| u * u * u - u;
        let (mut p, mut q) = (alpha, 0.0);
        let h = 1e-5;
        for _ in 0..20_000_000 {
            let (pn, qn) = (p + h * q, q + h * (f(p) - c * q));
            if pn >= 1.0 {
                return Classification::Overshoot;
            }
            if qn <= 0.0 && p > alpha {
                return Classification::Turnback;
            }
            p = pn;
            q = qn;
        }
        panic!("oracle did not classify");
    }

    #[test]
    fn strong_negative_velocity_overshoots_and_near_zero_turns_back() {
        let nl = cubic();
        let (_, e1) = integrate_profile_ode(&nl, -0.5, -10.0, 1e-3, 80.0).unwrap();
        assert_eq!(e1.kind, Classification::Overshoot);
        assert_eq!(euler_oracle(-0.5, -10.0), Classification::Overshoot);

        let (traj, e2) = integrate_profile_ode(&nl, -0.5, -1e-6, 1e-3, 80.0).unwrap();
        assert_eq!(e2.kind, Classification::Turnback);
        assert_eq!(euler_oracle(-0.5, -1e-6), Classification::Turnback);
        // Energy is nearly conserved: the turning point solves W(phi) = W(alpha), phi = 0.5.
        let last = *traj.phi.last().unwrap();
        assert!((last - 0.5).abs() < 1e-3, "{last}");
    }

    #[test]
    fn first_step_leaves_contact_with_slope_f_alpha() {
        let nl = cubic();
        let ds = 1e-3;
        let (traj, _) = integrate_profile_ode(&nl, -0.5, -0.2, ds, 80.0).unwrap();
        assert_eq!((traj.phi[0], traj.psi[0]), (-0.5, 0.0));
        assert_relative_eq!(traj.psi[1], nl.eval(-0.5) * ds, max_relative = 1e-3);
    }

    #[test]
    fn event_is_located_inside_the_step() {
        let nl = cubic();
        let (traj, e) = integrate_profile_ode(&nl, -0.5, -10.0, 1e-2, 80.0).unwrap();
        let p_end = *traj.phi.last().unwrap();
        assert!(p_end >= 1.0 && p_end - 1.0 < 1e-4, "{p_end}");
        assert_eq!(*traj.s.last().unwrap(), e.s);
    }

    #[test]
    fn invalid_integration_inputs() {
        let nl = cubic();
        assert!(integrate_profile_ode(&nl, -0.5, 0.1, 1e-3, 10.0).is_err());
        assert!(integrate_profile_ode(&nl, -0.5, -0.1, 0.0, 10.0).is_err());
        assert!(matches!(
            integrate_profile_ode(&nl, 0.2, -0.1, 1e-3, 10.0),
            Err(Error::AlphaNotAdmissible(_))
        ));
        assert!(matches!(
            integrate_profile_ode(&nl, -0.5, -0.23, 1e-3, 0.5),
            Err(Error::NoEvent { .. })
        ));
    }

    #[test]
    fn sharp_profile_invariants() {
        let nl = cubic();
        let sol = solve_profile(&nl, -0.5, &ShootingOptions::default()).unwrap();
        assert_eq!((sol.phi[0], sol.psi[0]), (-0.5, 0.0));
        assert!(sol.c < 0.0);
        assert!(((sol.c - sol.c_identity) / sol.c).abs() < 1e-4, "{} vs {}", sol.c, sol.c_identity);
        let bounds = profile_bounds(&nl, -0.5);
        assert!(sol.c >= -bounds.c2);
        let n = sol.len() - 1;
        assert!(sol.psi[1..n].iter().all(|&p| p > 0.0));
        assert!(sol.phi.iter().all(|&p| (-0.5..1.0).contains(&p)));
        assert!(sol.psi.iter().all(|&p| p <= bounds.c1));
        assert!(sol.residual_at_end < 1e-5, "{}", sol.residual_at_end);
    }

    #[test]
    fn velocity_decreases_with_alpha() {
        let nl = cubic();
        let opts = ShootingOptions::default();
        let c1 = solve_profile(&nl, -0.8, &opts).unwrap().c;
        let c2 = solve_profile(&nl, -0.5, &opts).unwrap().c;
        assert!(c1 > c2, "{c1} {c2}");
    }

    #[test]
    fn identity_numerator_and_degenerate_denominator() {
        let nl = cubic();
        let mut sol = solve_profile(&nl, -0.5, &ShootingOptions::default()).unwrap();
        assert_relative_eq!(nl.primitive(1.0) - nl.primitive(-0.5), -0.140625, epsilon = 1e-15);
        assert!(sol.c_identity < 0.0);
        sol.psi.iter_mut().for_each(|p| *p = 0.0);
        sol.phi.iter_mut().for_each(|p| *p = 1.0);
        assert!(matches!(velocity_identity(&nl, &sol), Err(Error::DivideNearZero(_))));
    }

    #[test]
    fn inadmissible_alpha_is_rejected() {
        let nl = cubic();
        let err = solve_profile(&nl, 0.5, &ShootingOptions::default()).unwrap_err();
        assert!(matches!(err, Error::AlphaNotAdmissible(_)));
    }

    #[test]
    fn evaluation_extends_the_grid() {
        let nl = cubic();
        let sol = solve_profile(&nl, -0.7, &ShootingOptions::default()).unwrap();
        assert_eq!(evaluate_profile(&sol, -5.0), -0.7);
        assert_eq!(evaluate_profile(&sol, 0.0), -0.7);
        assert!((evaluate_profile(&sol, 1e3) - 1.0).abs() < 1e-12);
        // Hermite interpolation reproduces the nodes.
        let i = sol.len() / 3;
        assert_relative_eq!(evaluate_profile(&sol, sol.s_grid[i]), sol.phi[i], epsilon = 1e-14);
        assert_relative_eq!(evaluate_profile_derivative(&sol, sol.s_grid[i]), sol.psi[i], epsilon = 1e-12);
        // Continuity at the grid end.
        let s_end = sol.s_end();
        assert_relative_eq!(evaluate_profile(&sol, s_end - 1e-12), evaluate_profile(&sol, s_end + 1e-12), epsilon = 1e-10);
    }

    #[test]
    fn tail_rate_matches_observed_decay() {
        let nl = cubic();
        let sol = solve_profile(&nl, -0.7, &ShootingOptions::default()).unwrap();
        // Window inside the linear regime, ahead of the unstable drift near the cut.
        let n = sol.len();
        let (i, j) = (n - 1 - 6000, n - 1 - 4000);
        let rate = ((1.0 - sol.phi[i]).ln() - (1.0 - sol.phi[j]).ln()) / (sol.s_grid[j] - sol.s_grid[i]);
        assert_relative_eq!(rate, sol.tail_rate(), max_relative = 1e-3);
        let naive = (-sol.c + (sol.c * sol.c + 8.0).sqrt()) / 2.0;
        assert!((rate - naive).abs() > 10.0 * (rate - sol.tail_rate()).abs());
    }

    #[test]
    fn second_derivative_jumps_at_contact() {
        let nl = cubic();
        let sol = solve_profile(&nl, -0.5, &ShootingOptions::default()).unwrap();
        let (left, right) = profile_second_derivative_limits(&nl, &sol);
        assert_eq!(left, 0.0);
        assert_eq!(right, nl.eval(-0.5));
        assert_relative_eq!(right, 0.375, epsilon = 1e-15);
    }

    #[test]
    fn regularized_rest_state_and_penalty() {
        let nl = cubic();
        assert_eq!(penalty(-0.5, 0.1, -0.5), 0.0);
        assert!(penalty(-0.5, 0.1, -0.6) < 0.0);
        let mut prev = -1.0;
        for mu in [0.1, 0.05, 0.025, 0.0125] {
            let a = penalized_rest_state(&nl, -0.5, mu).unwrap();
            assert!(a > -1.0 && a < -0.5 && a > prev);
            prev = a;
        }
    }

    #[test]
    fn regularized_profile_is_insensitive_to_launch_distance() {
        let nl = cubic();
        let opts = ShootingOptions::default();
        let eps = 1e-7 * nl.span();
        let a = solve_profile_regularized_with_launch(&nl, -0.8, 0.05, eps, &opts).unwrap();
        let b = solve_profile_regularized_with_launch(&nl, -0.8, 0.05, eps / 2.0, &opts).unwrap();
        assert!(((a.c - b.c) / a.c).abs() < 1e-6, "{} {}", a.c, b.c);
        assert!(profile_sup_distance(&a, &b, 0.0).unwrap() < 1e-6);
        assert!(((a.c - a.c_identity) / a.c).abs() < 1e-3);
    }

    #[test]
    fn family_is_sorted_and_handles_failures() {
        let nl = cubic();
        let opts = ShootingOptions::default();
        assert!(profile_family(&nl, &[], &opts).is_empty());
        let rows = profile_family(&nl, &[-0.3, 0.4, -0.9], &opts);
        assert_eq!(rows.iter().map(|r| r.alpha).collect::<Vec<_>>(), vec![-0.9, -0.3, 0.4]);
        assert!(rows[0].outcome.is_ok() && rows[1].outcome.is_ok());
        assert!(rows[2].outcome.is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn sharp_profiles_satisfy_their_bounds(alpha in -0.95f64..-0.1, x in -50.0f64..=0.0) {
            let nl = cubic();
            let sol = solve_profile(&nl, alpha, &ShootingOptions::default()).unwrap();
            let b = profile_bounds(&nl, alpha);
            proptest::prop_assert!(sol.c < 0.0 && sol.c >= -b.c2);
            proptest::prop_assert!(((sol.c - sol.c_identity) / sol.c).abs() < 1e-3);
            let n = sol.len() - 1;
            proptest::prop_assert!(sol.psi[1..n].iter().all(|&p| p > 0.0 && p <= b.c1));
            proptest::prop_assert!(sol.psi[n] < 1e-8 + sol.residual_at_end);
            proptest::prop_assert_eq!(evaluate_profile(&sol, x), alpha);
        }
    }
}
