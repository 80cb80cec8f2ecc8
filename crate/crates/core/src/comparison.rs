//! Sub- and supersolution envelopes built from a degenerate profile:
//! `w(x, t) = phi(x - x0 - c t +/- sigma delta (1 - e^{-beta t})) +/- delta e^{-beta t}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{Grid1D, PdeState};
use crate::potential::Nonlinearity;
use crate::profile::{evaluate_profile, evaluate_profile_derivative, ProfileSolution};
use crate::scalar::Scalar;

const SAMPLES_Y: usize = 200;
const SAMPLES_S: usize = 41;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sign {
    Plus,
    Minus,
}

/// Admissible region of the envelope parameters for one profile.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnvelopeConstants<T> {
    pub delta0: T,
    pub beta0: T,
    /// `f'` lower bound `f'(alpha)/2` holds for `y <= r`.
    pub r: T,
    /// `f' >= c_big_r > 0` holds for `y >= R`.
    pub big_r: T,
    pub c_big_r: T,
    /// `min phi'` over `[r, R]`.
    pub m: T,
    /// `sup |f'|` over `[a_minus - delta0, a_plus + delta0]`.
    pub sup_fprime: T,
    pub fprime_alpha: T,
}

impl<T: Scalar> EnvelopeConstants<T> {
    /// `sigma_beta(beta) = (sup |f'| / beta + 1) / m`.
    pub fn sigma_beta(&self, beta: T) -> T {
        (self.sup_fprime / beta + T::one()) / self.m
    }

    pub fn is_admissible(&self, delta: T, beta: T, sigma: T) -> bool {
        delta > T::zero()
            && delta < self.delta0
            && beta > T::zero()
            && beta < self.beta0
            && sigma > self.sigma_beta(beta)
    }
}

/// Inf of `f'(phi(y) + s delta)` over `y` in `ys` and `s in [-1, 1]`.
fn inf_fprime<T: Scalar>(nl: &Nonlinearity<T>, sol: &ProfileSolution<T>, ys: impl Iterator<Item = T>, delta: T) -> T {
    let mut inf = T::infinity();
    for y in ys {
        let p = evaluate_profile(sol, y);
        for k in 0..SAMPLES_S {
            let s = T::lit(-1.0 + 2.0 * k as f64 / (SAMPLES_S - 1) as f64);
            inf = inf.min(nl.deriv(p + s * delta));
        }
    }
    inf
}

fn linspace<T: Scalar>(a: T, b: T, n: usize) -> impl Iterator<Item = T> {
    (0..n).map(move |k| a + (b - a) * T::lit(k as f64 / (n - 1) as f64))
}

/// Largest `r = 2^{-k}` with the left condition, if any.
fn find_r<T: Scalar>(nl: &Nonlinearity<T>, sol: &ProfileSolution<T>, delta: T) -> Option<T> {
    let target = nl.deriv(sol.alpha) / T::lit(2.0);
    let mut r = T::one();
    for _ in 0..=20 {
        if inf_fprime(nl, sol, linspace(T::zero(), r, SAMPLES_Y), delta) > target {
            return Some(r);
        }
        r = r / T::lit(2.0);
    }
    None
}

/// Smallest `R = 2^k` with the right condition, and the inf there.
fn find_big_r<T: Scalar>(nl: &Nonlinearity<T>, sol: &ProfileSolution<T>, delta: T) -> Option<(T, T)> {
    let mut big_r = T::one();
    for _ in 0..=12 {
        let far = big_r + T::lit(40.0);
        let ys = linspace(big_r, far, SAMPLES_Y);
        let inf = inf_fprime(nl, sol, ys, delta).min(inf_fprime(nl, sol, std::iter::once(T::lit(1e6)), delta));
        if inf > T::zero() {
            return Some((big_r, inf));
        }
        big_r = big_r * T::lit(2.0);
    }
    None
}

fn satisfiable<T: Scalar>(nl: &Nonlinearity<T>, sol: &ProfileSolution<T>, delta: T) -> bool {
    find_r(nl, sol, delta).is_some() && find_big_r(nl, sol, delta).is_some()
}

/// Numerical version of the envelope construction with the largest
/// `delta0 <= (a_plus - a_minus) / 4`.
pub fn compute_envelope_constants<T: Scalar>(
    sol: &ProfileSolution<T>,
    nl: &Nonlinearity<T>,
) -> Result<EnvelopeConstants<T>> {
    compute_envelope_constants_capped(sol, nl, nl.span() / T::lit(4.0))
}

/// As [`compute_envelope_constants`] with `delta0` searched in `(0, cap]`.
/// A smaller cap allows a larger `r` and hence a larger `m`.
pub fn compute_envelope_constants_capped<T: Scalar>(
    sol: &ProfileSolution<T>,
    nl: &Nonlinearity<T>,
    cap: T,
) -> Result<EnvelopeConstants<T>> {
    let fprime_alpha = nl.deriv(sol.alpha);
    if !(fprime_alpha > T::zero()) {
        return Err(Error::NoAdmissibleDelta(format!("f'(alpha) = {fprime_alpha} is not positive")));
    }
    let floor = T::lit(1e-6);
    let delta0 = if satisfiable(nl, sol, cap) {
        cap
    } else if !satisfiable(nl, sol, floor) {
        return Err(Error::NoAdmissibleDelta(format!("scans fail already at delta = {floor}")));
    } else {
        let (mut lo, mut hi) = (floor, cap);
        for _ in 0..50 {
            let mid = (lo + hi) / T::lit(2.0);
            if satisfiable(nl, sol, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let r = find_r(nl, sol, delta0).expect("satisfiable");
    let (big_r, c_big_r) = find_big_r(nl, sol, delta0).expect("satisfiable");
    let m = (0..2000)
        .map(|k| r + (big_r - r) * T::lit(k as f64 / 1999.0))
        .map(|y| evaluate_profile_derivative(sol, y))
        .fold(T::infinity(), T::min);
    if !(m > T::zero()) {
        return Err(Error::NoAdmissibleDelta("profile slope vanishes on [r, R]".into()));
    }
    Ok(EnvelopeConstants {
        delta0,
        beta0: c_big_r.min(fprime_alpha / T::lit(2.0)),
        r,
        big_r,
        c_big_r,
        m,
        sup_fprime: nl.sup_abs_deriv(nl.a_minus - delta0, nl.a_plus + delta0),
        fprime_alpha,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ComparisonEnvelope<'a, T> {
    pub profile: &'a ProfileSolution<T>,
    pub delta: T,
    pub sigma: T,
    pub beta: T,
    pub x0: T,
    pub sign: Sign,
}

impl<'a, T: Scalar> ComparisonEnvelope<'a, T> {
    /// Checked constructor.
    pub fn new(
        profile: &'a ProfileSolution<T>,
        consts: &EnvelopeConstants<T>,
        delta: T,
        sigma: T,
        beta: T,
        x0: T,
        sign: Sign,
    ) -> Result<Self> {
        if !consts.is_admissible(delta, beta, sigma) {
            return Err(Error::InvalidInput(format!(
                "envelope parameters (delta {delta}, beta {beta}, sigma {sigma}) are not admissible"
            )));
        }
        Ok(Self { profile, delta, sigma, beta, x0, sign })
    }

    fn sgn(&self) -> T {
        match self.sign {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    /// Argument of the profile.
    pub fn z(&self, x: T, t: T) -> T {
        let decay = (-self.beta * t).exp();
        x - self.x0 - self.profile.c * t + self.sgn() * self.sigma * self.delta * (T::one() - decay)
    }

    pub fn with_x0(mut self, x0: T) -> Self {
        self.x0 = x0;
        self
    }

    /// Exact time derivative.
    pub fn dt(&self, x: T, t: T) -> T {
        let decay = (-self.beta * t).exp();
        let dz = -self.profile.c + self.sgn() * self.sigma * self.delta * self.beta * decay;
        evaluate_profile_derivative(self.profile, self.z(x, t)) * dz - self.sgn() * self.delta * self.beta * decay
    }
}

pub fn eval_envelope<T: Scalar>(env: &ComparisonEnvelope<'_, T>, x: T, t: T) -> T {
    let decay = (-env.beta * t).exp();
    evaluate_profile(env.profile, env.z(x, t)) + env.sgn() * env.delta * decay
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub sign: Sign,
    pub passed: bool,
    /// Most adverse residual (smallest for PLUS, largest for MINUS).
    pub worst_residual: f64,
    pub worst_x: f64,
    pub worst_t: f64,
    pub tol_res: f64,
    pub checked_nodes: usize,
    pub delta: f64,
    pub beta: f64,
    pub sigma: f64,
}

fn residual_at<T: Scalar>(env: &ComparisonEnvelope<'_, T>, nl: &Nonlinearity<T>, x: T, t: T, h: T) -> T {
    let w = eval_envelope(env, x, t);
    let d2 = (eval_envelope(env, x - h, t) - T::lit(2.0) * w + eval_envelope(env, x + h, t)) / (h * h);
    env.dt(x, t) - d2 + f_eval(nl, w)
}

#[inline]
fn f_eval<T: Scalar>(nl: &Nonlinearity<T>, w: T) -> T {
    nl.eval(w)
}

/// Checks `w_t - D2 w + f(w) >= -tol` (PLUS) everywhere, or `<= tol` (MINUS)
/// where the profile argument is positive. Nodes whose stencil straddles the
/// contact kink are skipped for MINUS. The tolerance is five times the
/// Richardson estimate of the `D2` truncation error from grids `h` and `2h`.
pub fn check_residual_sign<T: Scalar>(
    env: &ComparisonEnvelope<'_, T>,
    nl: &Nonlinearity<T>,
    grid: &Grid1D<T>,
    times: &[T],
) -> ResidualReport {
    let h = grid.h;
    let two_h = T::lit(2.0) * h;
    let mut calib = T::zero();
    for &t in times {
        for x in grid.nodes() {
            if env.z(x, t).abs() <= two_h {
                continue;
            }
            let w = eval_envelope(env, x, t);
            let d_h = (eval_envelope(env, x - h, t) - T::lit(2.0) * w + eval_envelope(env, x + h, t)) / (h * h);
            let d_2h =
                (eval_envelope(env, x - two_h, t) - T::lit(2.0) * w + eval_envelope(env, x + two_h, t)) / (two_h * two_h);
            calib = calib.max((d_2h - d_h).abs() / T::lit(3.0));
        }
    }
    let tol = (T::lit(5.0) * calib).max(T::tol(1e-10));

    let mut worst = match env.sign {
        Sign::Plus => T::infinity(),
        Sign::Minus => T::neg_infinity(),
    };
    let (mut wx, mut wt) = (T::nan(), T::nan());
    let mut checked = 0usize;
    for &t in times {
        for x in grid.nodes() {
            let z = env.z(x, t);
            if env.sign == Sign::Minus && z < h {
                continue;
            }
            checked += 1;
            let res = residual_at(env, nl, x, t, h);
            let adverse = match env.sign {
                Sign::Plus => res < worst,
                Sign::Minus => res > worst,
            };
            if adverse {
                worst = res;
                wx = x;
                wt = t;
            }
        }
    }
    let passed = match env.sign {
        Sign::Plus => worst >= -tol,
        Sign::Minus => worst <= tol,
    };
    ResidualReport {
        sign: env.sign,
        passed,
        worst_residual: worst.to_f64_lossy(),
        worst_x: wx.to_f64_lossy(),
        worst_t: wt.to_f64_lossy(),
        tol_res: tol.to_f64_lossy(),
        checked_nodes: checked,
        delta: env.delta.to_f64_lossy(),
        beta: env.beta.to_f64_lossy(),
        sigma: env.sigma.to_f64_lossy(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderingReport {
    pub passed: bool,
    pub snapshots_checked: usize,
    /// `(t, x, excess)` of the first violation.
    pub first_violation: Option<(f64, f64, f64)>,
    /// Largest `w- - u` and `u - w+` seen.
    pub max_excess: f64,
}

fn ordering_excess<T: Scalar>(
    u: &[T],
    grid: &Grid1D<T>,
    minus: &ComparisonEnvelope<'_, T>,
    plus: &ComparisonEnvelope<'_, T>,
    t: T,
) -> (T, T) {
    let mut worst = (T::neg_infinity(), T::nan());
    for (i, &v) in u.iter().enumerate() {
        let x = grid.x(i);
        let e = (eval_envelope(minus, x, t) - v).max(v - eval_envelope(plus, x, t));
        if e > worst.0 {
            worst = (e, x);
        }
    }
    worst
}

/// `w-(x, t) - 1e-8 <= u(x, t) <= w+(x, t) + 1e-8` on every snapshot with
/// `t >= t_anchor`, envelope time measured from `t_anchor`. The first such
/// snapshot must be ordered.
pub fn check_ordering<T: Scalar>(
    series: &[PdeState<T>],
    grid: &Grid1D<T>,
    env_minus: &ComparisonEnvelope<'_, T>,
    env_plus: &ComparisonEnvelope<'_, T>,
    t_anchor: T,
) -> Result<OrderingReport> {
    let tol = T::tol(1e-8);
    let mut iter = series.iter().filter(|s| s.t >= t_anchor);
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidInput("no snapshot at or after the anchor time".into()))?;
    let (e0, x0) = ordering_excess(&first.u, grid, env_minus, env_plus, first.t - t_anchor);
    if e0 > tol {
        return Err(Error::OrderingPrecondition(format!("excess {e0:e} at x = {x0}")));
    }
    let mut report = OrderingReport {
        passed: true,
        snapshots_checked: 1,
        first_violation: None,
        max_excess: e0.to_f64_lossy(),
    };
    for s in iter {
        let (e, x) = ordering_excess(&s.u, grid, env_minus, env_plus, s.t - t_anchor);
        report.snapshots_checked += 1;
        report.max_excess = report.max_excess.max(e.to_f64_lossy());
        if e > tol && report.first_violation.is_none() {
            report.passed = false;
            report.first_violation = Some((s.t.to_f64_lossy(), x.to_f64_lossy(), e.to_f64_lossy()));
        }
    }
    Ok(report)
}

/// Tightest anchor `x0` that orders the envelope against `u` at envelope
/// time zero, or `None` if no shift does.
pub fn anchor_envelope<T: Scalar>(u: &[T], grid: &Grid1D<T>, env: &ComparisonEnvelope<'_, T>) -> Option<T> {
    let ordered = |x0: T| {
        let e = env.with_x0(x0);
        u.iter().enumerate().all(|(i, &v)| {
            let w = eval_envelope(&e, grid.x(i), T::zero());
            match env.sign {
                Sign::Plus => w >= v,
                Sign::Minus => w <= v,
            }
        })
    };
    let reach = env.profile.s_end() + T::lit(10.0);
    // PLUS holds for x0 far left, MINUS for x0 far right.
    let (mut good, mut bad) = match env.sign {
        Sign::Plus => (grid.x_min - reach, grid.x_max + reach),
        Sign::Minus => (grid.x_max + reach, grid.x_min - reach),
    };
    if !ordered(good) {
        return None;
    }
    if ordered(bad) {
        return Some(bad);
    }
    for _ in 0..80 {
        let mid = (good + bad) / T::lit(2.0);
        if ordered(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// Default parameters `beta = beta0 / 2`, `delta = min(delta0 / 2, 0.05)`,
/// `sigma = 2 sigma_beta(beta)`. When `delta0 / 2` exceeds `0.05` the
/// constants are recomputed with `delta0` capped at `0.1`.
pub fn default_envelope_parameters<T: Scalar>(
    sol: &ProfileSolution<T>,
    nl: &Nonlinearity<T>,
) -> Result<(EnvelopeConstants<T>, T, T, T)> {
    let mut consts = compute_envelope_constants(sol, nl)?;
    let cap = T::lit(0.05);
    if consts.delta0 / T::lit(2.0) > cap {
        consts = compute_envelope_constants_capped(sol, nl, T::lit(2.0) * cap)?;
    }
    let delta = (consts.delta0 / T::lit(2.0)).min(cap);
    let beta = consts.beta0 / T::lit(2.0);
    let sigma = T::lit(2.0) * consts.sigma_beta(beta);
    Ok((consts, delta, beta, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{solve_profile, ShootingOptions};
    use std::sync::OnceLock;

    fn setup() -> &'static (Nonlinearity<f64>, ProfileSolution<f64>) {
        static CELL: OnceLock<(Nonlinearity<f64>, ProfileSolution<f64>)> = OnceLock::new();
        CELL.get_or_init(|| {
            let nl = Nonlinearity::cubic();
            let sol = solve_profile(&nl, -0.8, &ShootingOptions::default()).unwrap();
            (nl, sol)
        })
    }

    #[test]
    fn constants_for_the_cubic() {
        let (nl, sol) = setup();
        let k = compute_envelope_constants(sol, nl).unwrap();
        // f'(v) > f'(-0.8)/2 = 0.46 needs |v| > 0.6976, so delta0 is just below 0.1024.
        assert!(k.delta0 > 0.09 && k.delta0 < 0.1025, "{}", k.delta0);
        assert!(k.beta0 <= 0.46 + 1e-15);
        assert!(k.m > 0.0 && k.r < k.big_r);
        assert!(k.sigma_beta(0.1) > k.sigma_beta(0.2));
        assert!(k.sigma_beta(1e-9) > 1e9);
    }

    #[test]
    fn alpha_with_nonpositive_slope_is_rejected() {
        let nl = Nonlinearity::cubic();
        let sol = solve_profile(&nl, -0.5, &ShootingOptions::default()).unwrap();
        assert!(matches!(compute_envelope_constants(&sol, &nl), Err(Error::NoAdmissibleDelta(_))));
    }

    #[test]
    fn admissibility_is_monotone() {
        let (nl, sol) = setup();
        let k = compute_envelope_constants(sol, nl).unwrap();
        for i in 1..10 {
            let beta = k.beta0 * i as f64 / 10.0;
            for j in 1..10 {
                let delta = k.delta0 * j as f64 / 10.0;
                let sigma = 1.01 * k.sigma_beta(beta);
                assert!(k.is_admissible(delta, beta, sigma));
                assert!(k.is_admissible(delta / 2.0, beta, 2.0 * sigma));
            }
        }
        assert!(!k.is_admissible(k.delta0, k.beta0 / 2.0, 2.0 * k.sigma_beta(k.beta0 / 2.0)));
    }

    #[test]
    fn envelope_limits() {
        let (nl, sol) = setup();
        let (k, delta, beta, sigma) = default_envelope_parameters(sol, nl).unwrap();
        let plus = ComparisonEnvelope::new(sol, &k, delta, sigma, beta, 1.0, Sign::Plus).unwrap();
        let x = 3.0;
        assert_eq!(eval_envelope(&plus, x, 0.0), evaluate_profile(sol, x - 1.0) + delta);
        let far = eval_envelope(&plus, x, 1e4);
        let expected = evaluate_profile(sol, x - 1.0 - sol.c * 1e4 + sigma * delta);
        assert!((far - expected).abs() < 1e-12);
        let minus = ComparisonEnvelope { sign: Sign::Minus, ..plus };
        assert!(eval_envelope(&minus, -50.0, 2.0) < sol.alpha);
    }

    #[test]
    fn envelope_is_monotone_in_x() {
        let (nl, sol) = setup();
        let (k, delta, beta, sigma) = default_envelope_parameters(sol, nl).unwrap();
        for sign in [Sign::Plus, Sign::Minus] {
            let env = ComparisonEnvelope::new(sol, &k, delta, sigma, beta, 0.0, sign).unwrap();
            for t in [0.0, 1.0, 7.0] {
                let vals: Vec<f64> = (0..2000).map(|i| eval_envelope(&env, -60.0 + 0.06 * i as f64, t)).collect();
                assert!(vals.windows(2).all(|w| w[1] >= w[0]));
            }
        }
    }

    #[test]
    fn time_derivative_matches_difference_quotient() {
        let (nl, sol) = setup();
        let (k, delta, beta, sigma) = default_envelope_parameters(sol, nl).unwrap();
        let env = ComparisonEnvelope::new(sol, &k, delta, sigma, beta, 0.0, Sign::Plus).unwrap();
        let (x, t, e) = (-10.0, 3.0, 1e-6);
        let fd = (eval_envelope(&env, x, t + e) - eval_envelope(&env, x, t - e)) / (2.0 * e);
        assert!((fd - env.dt(x, t)).abs() < 1e-6, "{fd} {}", env.dt(x, t));
    }

    #[test]
    fn anchors_order_exact_profile_data() {
        let (nl, sol) = setup();
        let (k, delta, beta, sigma) = default_envelope_parameters(sol, nl).unwrap();
        let grid = Grid1D::new(-20.0, 30.0, 999).unwrap();
        let u = crate::pde::sample_profile(sol, &grid, 2.0);
        let plus = ComparisonEnvelope::new(sol, &k, delta, sigma, beta, 0.0, Sign::Plus).unwrap();
        let minus = ComparisonEnvelope { sign: Sign::Minus, ..plus };
        let xp = anchor_envelope(&u, &grid, &plus).unwrap();
        let xm = anchor_envelope(&u, &grid, &minus).unwrap();
        assert!(xp >= 2.0 && xm <= 2.0 + 1e-9, "{xp} {xm}");
        let state = PdeState::initial(u, sol.alpha, 1.0, nl, &grid);
        let series = vec![state];
        let ok = check_ordering(&series, &grid, &minus.with_x0(2.0), &plus.with_x0(2.0), 0.0).unwrap();
        assert!(ok.passed);
        let err = check_ordering(&series, &grid, &minus.with_x0(2.0), &plus.with_x0(xp + 1.0), 0.0);
        assert!(matches!(err, Err(Error::OrderingPrecondition(_))));
    }

    proptest::proptest! {
        #[test]
        fn admissibility_survives_smaller_delta_and_larger_sigma(
            fd in 0.01f64..1.0, fb in 0.01f64..0.99, fs in 1.0f64..10.0, shrink in 0.0f64..1.0, grow in 1.0f64..10.0,
        ) {
            let (nl, sol) = setup();
            let k = compute_envelope_constants(sol, nl).unwrap();
            let (delta, beta) = (fd * k.delta0, fb * k.beta0);
            let sigma = fs * k.sigma_beta(beta);
            if k.is_admissible(delta, beta, sigma) {
                proptest::prop_assert!(k.is_admissible(shrink * delta, beta, grow * sigma));
            }
        }

        #[test]
        fn envelopes_are_monotone_in_x(x in -60.0f64..60.0, dx in 0.0f64..5.0, t in 0.0f64..40.0, plus in proptest::bool::ANY) {
            let (nl, sol) = setup();
            let (k, delta, beta, sigma) = default_envelope_parameters(sol, nl).unwrap();
            let sign = if plus { Sign::Plus } else { Sign::Minus };
            let env = ComparisonEnvelope::new(sol, &k, delta, sigma, beta, 0.0, sign).unwrap();
            proptest::prop_assert!(eval_envelope(&env, x + dx, t) >= eval_envelope(&env, x, t));
        }
    }
}
