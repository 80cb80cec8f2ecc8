//! Time stepping of `u_t = (u_xx - f(u))_+` on a truncated line with
//! Dirichlet ends, multiplier recovery and free-boundary tracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Nonlinearity;
use crate::profile::{evaluate_profile, ProfileSolution};
use crate::scalar::Scalar;

/// Uniform grid of `n` interior nodes `x_i = x_min + (i + 1) h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D<T> {
    pub x_min: T,
    pub x_max: T,
    pub n: usize,
    pub h: T,
}

impl<T: Scalar> Grid1D<T> {
    pub fn new(x_min: T, x_max: T, n: usize) -> Result<Self> {
        if !(x_min < x_max) || n < 16 {
            return Err(Error::InvalidInput(format!(
                "grid needs x_min < x_max and n >= 16, got [{x_min}, {x_max}] with n = {n}"
            )));
        }
        let h = (x_max - x_min) / T::lit((n + 1) as f64);
        Ok(Self { x_min, x_max, n, h })
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.x_min + T::lit((i + 1) as f64) * self.h
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    /// Forward Euler on the positive part.
    #[serde(alias = "explicit")]
    ExplicitPositivePart,
    /// Backward Euler diffusion, explicit reaction, projection on `u^n`.
    #[serde(alias = "imex")]
    ImexProjected,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "explicit" | "explicit_positive_part" => Ok(Scheme::ExplicitPositivePart),
            "imex" | "imex_projected" => Ok(Scheme::ImexProjected),
            _ => Err(Error::Parse(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SimConfig<T> {
    pub scheme: Scheme,
    pub dt: T,
    pub t_end: T,
    pub bc_left: T,
    pub bc_right: T,
    pub snapshot_every: usize,
    /// Obstacle level used for free-boundary tracking; `None` disables it.
    pub alpha: Option<T>,
}

impl<T: Scalar> SimConfig<T> {
    pub fn validate(&self, nl: &Nonlinearity<T>, grid: &Grid1D<T>) -> Result<()> {
        if !(self.dt > T::zero() && self.t_end > T::zero()) || self.snapshot_every == 0 {
            return Err(Error::InvalidInput("dt, t_end and snapshot_every must be positive".into()));
        }
        match self.scheme {
            Scheme::ExplicitPositivePart => check_cfl(self.dt, grid),
            Scheme::ImexProjected => check_imex(self.dt, nl),
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().to_usize().unwrap_or(0).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeState<T> {
    pub t: T,
    pub u: Vec<T>,
    /// Multiplier of the constraint, `<= 0`.
    pub eta: Vec<T>,
    pub r: Option<T>,
    /// Previous time level; the running lower bound.
    pub obstacle: Vec<T>,
    pub bc_left: T,
    pub bc_right: T,
}

impl<T: Scalar> PdeState<T> {
    /// State at `t = 0` with the multiplier of the initial data.
    pub fn initial(u0: Vec<T>, bc_left: T, bc_right: T, nl: &Nonlinearity<T>, grid: &Grid1D<T>) -> Self {
        let mut s = Self {
            t: T::zero(),
            obstacle: u0.clone(),
            eta: Vec::new(),
            u: u0,
            r: None,
            bc_left,
            bc_right,
        };
        s.eta = compute_multiplier(&s, nl, grid);
        s
    }
}

/// `D2 u` with the Dirichlet values of the state.
pub fn laplacian<T: Scalar>(u: &[T], bc_left: T, bc_right: T, h: T) -> Vec<T> {
    let n = u.len();
    let inv_h2 = T::one() / (h * h);
    let two = T::lit(2.0);
    (0..n)
        .map(|i| {
            let left = if i == 0 { bc_left } else { u[i - 1] };
            let right = if i + 1 == n { bc_right } else { u[i + 1] };
            (left - two * u[i] + right) * inv_h2
        })
        .collect()
}

/// `-(D2 u - f(u))_-` at every node.
pub fn compute_multiplier<T: Scalar>(state: &PdeState<T>, nl: &Nonlinearity<T>, grid: &Grid1D<T>) -> Vec<T> {
    laplacian(&state.u, state.bc_left, state.bc_right, grid.h)
        .into_iter()
        .zip(&state.u)
        .map(|(d2, &u)| (d2 - nl.eval(u)).min(T::zero()))
        .collect()
}

fn check_cfl<T: Scalar>(dt: T, grid: &Grid1D<T>) -> Result<()> {
    let limit = T::lit(0.4) * grid.h * grid.h;
    if dt > limit * (T::one() + T::lit(1e-12)) {
        return Err(Error::CflViolation { dt: dt.to_f64_lossy(), limit: limit.to_f64_lossy() });
    }
    Ok(())
}

/// `0.2 / max |f'|` over the wells.
pub fn imex_dt_limit<T: Scalar>(nl: &Nonlinearity<T>) -> T {
    T::lit(0.2) / nl.sup_abs_deriv(nl.a_minus, nl.a_plus)
}

fn check_imex<T: Scalar>(dt: T, nl: &Nonlinearity<T>) -> Result<()> {
    let limit = imex_dt_limit(nl);
    if dt > limit {
        return Err(Error::ImexStability { dt: dt.to_f64_lossy(), limit: limit.to_f64_lossy() });
    }
    Ok(())
}

pub fn step_explicit_positive_part<T: Scalar>(
    state: &PdeState<T>,
    nl: &Nonlinearity<T>,
    grid: &Grid1D<T>,
    dt: T,
) -> Result<PdeState<T>> {
    check_cfl(dt, grid)?;
    Ok(explicit_step(state, nl, grid, dt))
}

fn explicit_step<T: Scalar>(state: &PdeState<T>, nl: &Nonlinearity<T>, grid: &Grid1D<T>, dt: T) -> PdeState<T> {
    let d2 = laplacian(&state.u, state.bc_left, state.bc_right, grid.h);
    let mut u = Vec::with_capacity(state.u.len());
    let mut eta = Vec::with_capacity(state.u.len());
    for (&ui, d) in state.u.iter().zip(d2) {
        let res = d - nl.eval(ui);
        u.push(ui + dt * res.max(T::zero()));
        // Evaluated at the old level, so it vanishes exactly where u moved.
        eta.push(res.min(T::zero()));
    }
    PdeState {
        t: state.t + dt,
        u,
        eta,
        r: None,
        obstacle: state.u.clone(),
        bc_left: state.bc_left,
        bc_right: state.bc_right,
    }
}

/// LU factors of the constant matrix `I - dt D2` (Thomas algorithm).
#[derive(Clone, Debug)]
pub struct TridiagFactor<T> {
    k: T,
    /// Modified super-diagonal.
    c_mod: Vec<T>,
    /// Inverse pivots.
    inv_pivot: Vec<T>,
}

impl<T: Scalar> TridiagFactor<T> {
    pub fn new(n: usize, dt: T, h: T) -> Result<Self> {
        let k = dt / (h * h);
        let diag = T::one() + T::lit(2.0) * k;
        let off = -k;
        let mut c_mod = vec![T::zero(); n];
        let mut inv_pivot = vec![T::zero(); n];
        let mut prev_c = T::zero();
        for i in 0..n {
            let pivot = diag - off * prev_c;
            if pivot.abs() <= T::epsilon() {
                return Err(Error::TridiagSingular(i));
            }
            inv_pivot[i] = T::one() / pivot;
            c_mod[i] = off * inv_pivot[i];
            prev_c = c_mod[i];
        }
        Ok(Self { k, c_mod, inv_pivot })
    }

    /// Solves in place.
    pub fn solve(&self, rhs: &mut [T]) {
        let n = rhs.len();
        let off = -self.k;
        let mut prev = T::zero();
        for (r, &p) in rhs.iter_mut().zip(&self.inv_pivot) {
            *r = (*r - off * prev) * p;
            prev = *r;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] = rhs[i] - self.c_mod[i] * rhs[i + 1];
        }
    }
}

pub fn step_imex_projected<T: Scalar>(
    state: &PdeState<T>,
    nl: &Nonlinearity<T>,
    grid: &Grid1D<T>,
    dt: T,
) -> Result<PdeState<T>> {
    check_imex(dt, nl)?;
    let factor = TridiagFactor::new(grid.n, dt, grid.h)?;
    Ok(imex_step(state, nl, grid, dt, &factor))
}

fn imex_step<T: Scalar>(
    state: &PdeState<T>,
    nl: &Nonlinearity<T>,
    grid: &Grid1D<T>,
    dt: T,
    factor: &TridiagFactor<T>,
) -> PdeState<T> {
    let n = state.u.len();
    let mut u: Vec<T> = state.u.iter().map(|&v| v - dt * nl.eval(v)).collect();
    u[0] = u[0] + factor.k * state.bc_left;
    u[n - 1] = u[n - 1] + factor.k * state.bc_right;
    factor.solve(&mut u);
    let mut contact = vec![false; n];
    for i in 0..n {
        if u[i] <= state.u[i] {
            u[i] = state.u[i];
            contact[i] = true;
        }
    }
    let d2 = laplacian(&u, state.bc_left, state.bc_right, grid.h);
    let eta = (0..n)
        .map(|i| if contact[i] { (d2[i] - nl.eval(u[i])).min(T::zero()) } else { T::zero() })
        .collect();
    PdeState {
        t: state.t + dt,
        u,
        eta,
        r: None,
        obstacle: state.u.clone(),
        bc_left: state.bc_left,
        bc_right: state.bc_right,
    }
}

/// Contact threshold `max(1e-10, f(alpha) h^2 / 4)`.
pub fn contact_tolerance<T: Scalar>(nl: &Nonlinearity<T>, alpha: T, h: T) -> T {
    T::tol(1e-10).max(T::lit(0.25) * nl.eval(alpha) * h * h)
}

/// Right end of the leftmost contact run `{u <= alpha + eps_fb}`, refined
/// below the grid scale by a square-root fit through the next two nodes.
/// Everywhere-contact returns `x_max`; no contact at the left end returns `None`.
pub fn locate_free_boundary<T: Scalar>(u: &[T], nl: &Nonlinearity<T>, alpha: T, grid: &Grid1D<T>) -> Option<T> {
    let eps = contact_tolerance(nl, alpha, grid.h);
    let in_contact = |v: T| v <= alpha + eps;
    let first_free = u.iter().position(|&v| !in_contact(v));
    let j1 = match first_free {
        None => return Some(grid.x_max),
        Some(0) => return None,
        Some(j) => j,
    };
    let x1 = grid.x(j1);
    if j1 + 1 >= u.len() {
        return Some(grid.x(j1 - 1));
    }
    // u - alpha ~ (x - r)^2 near contact, so sqrt(u - alpha) is linear in x.
    let d1 = (u[j1] - alpha).max(T::zero()).sqrt();
    let d2 = (u[j1 + 1] - alpha).max(T::zero()).sqrt();
    let r = if d2 > d1 { x1 - grid.h * d1 / (d2 - d1) } else { grid.x(j1 - 1) };
    Some(r.max(x1 - T::lit(2.0) * grid.h).min(x1))
}

/// Time series of snapshots plus bookkeeping from [`run_simulation`].
#[derive(Clone, Debug)]
pub struct SimulationOutput<T> {
    pub snapshots: Vec<PdeState<T>>,
    pub steps: usize,
    /// Smallest per-node, per-step increment seen over the whole run.
    pub min_increment: T,
    pub warnings: Vec<String>,
}

/// Stepper with the tridiagonal factor cached across steps.
pub struct Stepper<'a, T> {
    nl: &'a Nonlinearity<T>,
    grid: &'a Grid1D<T>,
    scheme: Scheme,
    dt: T,
    factor: Option<TridiagFactor<T>>,
}

impl<'a, T: Scalar> Stepper<'a, T> {
    pub fn new(nl: &'a Nonlinearity<T>, grid: &'a Grid1D<T>, scheme: Scheme, dt: T) -> Result<Self> {
        let factor = match scheme {
            Scheme::ExplicitPositivePart => {
                check_cfl(dt, grid)?;
                None
            }
            Scheme::ImexProjected => {
                check_imex(dt, nl)?;
                Some(TridiagFactor::new(grid.n, dt, grid.h)?)
            }
        };
        Ok(Self { nl, grid, scheme, dt, factor })
    }

    pub fn step(&self, state: &PdeState<T>) -> PdeState<T> {
        match (&self.scheme, &self.factor) {
            (Scheme::ImexProjected, Some(f)) => imex_step(state, self.nl, self.grid, self.dt, f),
            _ => explicit_step(state, self.nl, self.grid, self.dt),
        }
    }
}

pub fn run_simulation<T: Scalar>(
    cfg: &SimConfig<T>,
    u0: &[T],
    nl: &Nonlinearity<T>,
    grid: &Grid1D<T>,
) -> Result<SimulationOutput<T>> {
    if u0.len() != grid.n {
        return Err(Error::InvalidInput(format!("u0 has {} values for {} nodes", u0.len(), grid.n)));
    }
    let (lo, hi) = (nl.a_minus - T::one(), nl.a_plus + T::one());
    if u0.iter().any(|&v| !(v >= lo && v <= hi)) {
        return Err(Error::InvalidInput(format!("u0 leaves [{lo}, {hi}]")));
    }
    cfg.validate(nl, grid)?;
    let stepper = Stepper::new(nl, grid, cfg.scheme, cfg.dt)?;
    let steps = cfg.steps();

    let mut warnings = Vec::new();
    let track = |s: &mut PdeState<T>, warnings: &mut Vec<String>| {
        if let Some(alpha) = cfg.alpha {
            s.r = locate_free_boundary(&s.u, nl, alpha, grid);
            if let Some(r) = s.r {
                let margin = T::lit(10.0) * grid.h;
                let near = r - grid.x_min < margin || (grid.x_max - r < margin && r < grid.x_max);
                if near && warnings.is_empty() {
                    warnings.push(format!("BOUNDARY_PROXIMITY: free boundary at {r} (t = {})", s.t));
                }
            }
        }
    };

    let mut state = PdeState::initial(u0.to_vec(), cfg.bc_left, cfg.bc_right, nl, grid);
    track(&mut state, &mut warnings);
    let mut snapshots = vec![state.clone()];
    let mut min_increment = T::infinity();
    for k in 1..=steps {
        let mut next = stepper.step(&state);
        next.t = T::lit(k as f64) * cfg.dt;
        for (a, b) in next.u.iter().zip(&state.u) {
            min_increment = min_increment.min(*a - *b);
        }
        if k % cfg.snapshot_every == 0 || k == steps {
            track(&mut next, &mut warnings);
            snapshots.push(next.clone());
        }
        state = next;
    }
    Ok(SimulationOutput { snapshots, steps, min_increment, warnings })
}

/// `alpha` left of `xi1`, a C^1 quintic smoothstep up to `top` over
/// `[xi1, xi1 + ramp_width]`, then constant.
pub fn build_compliant_initial_data<T: Scalar>(
    nl: &Nonlinearity<T>,
    alpha: T,
    xi1: T,
    ramp_width: T,
    top: T,
    grid: &Grid1D<T>,
) -> Result<Vec<T>> {
    if !(alpha < nl.a_zero && nl.a_zero < top && top < nl.a_plus) {
        return Err(Error::InvalidInput(format!(
            "need alpha < a_zero < top < a_plus, got alpha = {alpha}, top = {top}"
        )));
    }
    if !(ramp_width > T::zero()) || xi1 <= grid.x_min || xi1 + ramp_width >= grid.x_max {
        return Err(Error::RampOutOfGrid {
            start: xi1.to_f64_lossy(),
            end: (xi1 + ramp_width).to_f64_lossy(),
        });
    }
    Ok(grid.nodes().into_iter().map(|x| compliant_value(alpha, xi1, ramp_width, top, x)).collect())
}

pub fn compliant_value<T: Scalar>(alpha: T, xi1: T, ramp_width: T, top: T, x: T) -> T {
    if x <= xi1 {
        return alpha;
    }
    if x >= xi1 + ramp_width {
        return top;
    }
    let t = (x - xi1) / ramp_width;
    let smooth = t * t * t * (T::lit(10.0) - T::lit(15.0) * t + T::lit(6.0) * t * t);
    alpha + (top - alpha) * smooth
}

/// `phi(x_i - shift)` at every node.
pub fn sample_profile<T: Scalar>(sol: &ProfileSolution<T>, grid: &Grid1D<T>, shift: T) -> Vec<T> {
    grid.nodes().into_iter().map(|x| evaluate_profile(sol, x - shift)).collect()
}

/// Dirichlet configuration matching a profile placed at `shift`.
pub fn wave_boundary_values<T: Scalar>(sol: &ProfileSolution<T>, grid: &Grid1D<T>, shift: T) -> (T, T) {
    (evaluate_profile(sol, grid.x_min - shift), evaluate_profile(sol, grid.x_max - shift))
}

/// `int |g|^2 rho` with a Gaussian weight centred mid-grid, width a tenth
/// of the domain.
pub fn gaussian_weighted_norm<T: Scalar>(g: &[T], grid: &Grid1D<T>) -> T {
    let center = (grid.x_min + grid.x_max) / T::lit(2.0);
    let width = (grid.x_max - grid.x_min) / T::lit(10.0);
    g.iter()
        .enumerate()
        .map(|(i, &v)| {
            let z = (grid.x(i) - center) / width;
            v * v * (-z * z).exp() * grid.h
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{solve_profile, ShootingOptions};
    use approx::assert_relative_eq;

    fn cubic() -> Nonlinearity<f64> {
        Nonlinearity::cubic()
    }

    fn constant_state(g: f64, grid: &Grid1D<f64>) -> PdeState<f64> {
        PdeState::initial(vec![g; grid.n], g, g, &cubic(), grid)
    }

    #[test]
    fn grid_spacing_and_validation() {
        let g = Grid1D::new(-20.0, 30.0, 4999).unwrap();
        assert_relative_eq!(g.h, 0.01, epsilon = 1e-15);
        assert_relative_eq!(g.x(0), -19.99, epsilon = 1e-12);
        assert!(Grid1D::new(0.0, 1.0, 15).is_err());
        assert!(Grid1D::new(1.0, 0.0, 100).is_err());
    }

    #[test]
    fn explicit_equilibria_and_growth() {
        let nl = cubic();
        let grid = Grid1D::new(0.0, 1.0, 63).unwrap();
        let dt = 0.4 * grid.h * grid.h;
        for g in [1.0, -0.5] {
            let s = constant_state(g, &grid);
            let next = step_explicit_positive_part(&s, &nl, &grid, dt).unwrap();
            assert_eq!(next.u, s.u);
        }
        let s = constant_state(0.5, &grid);
        let next = step_explicit_positive_part(&s, &nl, &grid, dt).unwrap();
        assert_relative_eq!(next.u[10], 0.5 + dt * 0.375, epsilon = 1e-15);
        assert!(matches!(
            step_explicit_positive_part(&s, &nl, &grid, dt * 1.01),
            Err(Error::CflViolation { .. })
        ));
    }

    #[test]
    fn imex_projection_freezes_left_well_constants() {
        let nl = cubic();
        let grid = Grid1D::new(0.0, 1.0, 63).unwrap();
        let s = constant_state(-0.5, &grid);
        let next = step_imex_projected(&s, &nl, &grid, 1e-3).unwrap();
        assert_eq!(next.u, s.u);
        assert!(next.eta.iter().all(|&e| (e + 0.375).abs() < 1e-12));
        assert!(matches!(step_imex_projected(&s, &nl, &grid, 0.2), Err(Error::ImexStability { .. })));
    }

    #[test]
    fn multiplier_of_constants() {
        let nl = cubic();
        let grid = Grid1D::new(0.0, 1.0, 31).unwrap();
        assert!(compute_multiplier(&constant_state(1.0, &grid), &nl, &grid).iter().all(|&e| e == 0.0));
        let eta = compute_multiplier(&constant_state(-0.5, &grid), &nl, &grid);
        assert!(eta.iter().all(|&e| (e + 0.375).abs() < 1e-15));
    }

    #[test]
    fn tridiagonal_solve_matches_matrix() {
        let (n, dt, h) = (50, 0.3, 0.1);
        let f = TridiagFactor::<f64>::new(n, dt, h).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let k = dt / (h * h);
        let mut b: Vec<f64> = (0..n)
            .map(|i| {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                (1.0 + 2.0 * k) * x[i] - k * (l + r)
            })
            .collect();
        f.solve(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert_relative_eq!(a, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn small_dt_imex_agrees_with_explicit() {
        let nl = cubic();
        let grid = Grid1D::new(0.0, 1.0, 31).unwrap();
        let u0: Vec<f64> = grid.nodes().iter().map(|x| 0.2 + 0.3 * x * x).collect();
        let s = PdeState::initial(u0, 0.2, 0.5, &nl, &grid);
        let diff = |dt: f64| {
            let a = step_explicit_positive_part(&s, &nl, &grid, dt).unwrap();
            let b = step_imex_projected(&s, &nl, &grid, dt).unwrap();
            a.u.iter().zip(&b.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let (d1, d2) = (diff(1e-4), diff(5e-5));
        assert!(d1 < 1e-5);
        assert!(d2 < d1 / 3.0, "{d1} {d2}");
    }

    #[test]
    fn free_boundary_conventions() {
        let nl = cubic();
        let grid = Grid1D::new(-1.0, 1.0, 99).unwrap();
        assert_eq!(locate_free_boundary(&vec![-0.5; 99], &nl, -0.5, &grid), Some(1.0));
        assert_eq!(locate_free_boundary(&vec![0.5; 99], &nl, -0.5, &grid), None);
        // u = alpha + f(alpha)/2 (x - r)_+^2 is located to rounding.
        let r0 = 0.1234;
        let u: Vec<f64> = grid.nodes().iter().map(|&x| -0.5 + 0.1875 * (x - r0).max(0.0).powi(2)).collect();
        assert_relative_eq!(locate_free_boundary(&u, &nl, -0.5, &grid).unwrap(), r0, epsilon = 1e-12);
    }

    #[test]
    fn exact_wave_free_boundary_is_second_order() {
        let nl = cubic();
        let sol = solve_profile(&nl, -0.8, &ShootingOptions::default()).unwrap();
        let err = |n: usize| {
            let grid = Grid1D::new(-5.0, 5.0, n).unwrap();
            let s0 = 0.3217;
            let u = sample_profile(&sol, &grid, s0);
            (locate_free_boundary(&u, &nl, -0.8, &grid).unwrap() - s0).abs()
        };
        let (e1, e2) = (err(499), err(999));
        assert!(e1 < 1e-3 && e2 < e1, "{e1} {e2}");
    }

    #[test]
    fn compliant_data_shape() {
        let nl = cubic();
        let grid = Grid1D::new(-20.0, 30.0, 4999).unwrap();
        assert_eq!(compliant_value(-0.8, -5.0, 3.0, 0.9, -5.0), -0.8);
        assert_eq!(compliant_value(-0.8, -5.0, 3.0, 0.9, -2.0), 0.9);
        let u = build_compliant_initial_data(&nl, -0.8, -5.0, 3.0, 0.9, &grid).unwrap();
        assert!(u.windows(2).all(|w| w[1] >= w[0]));
        assert!(build_compliant_initial_data(&nl, -0.8, -5.0, 3.0, 1.0, &grid).is_err());
        assert!(matches!(
            build_compliant_initial_data(&nl, -0.8, 28.0, 3.0, 0.9, &grid),
            Err(Error::RampOutOfGrid { .. })
        ));
    }

    #[test]
    fn snapshot_bookkeeping_and_monotonicity() {
        let nl = cubic();
        let grid = Grid1D::new(-10.0, 10.0, 399).unwrap();
        let u0 = build_compliant_initial_data(&nl, -0.8, -2.0, 3.0, 0.9, &grid).unwrap();
        let cfg = SimConfig {
            scheme: Scheme::ImexProjected,
            dt: 1e-3,
            t_end: 0.1,
            bc_left: -0.8,
            bc_right: 1.0,
            snapshot_every: 20,
            alpha: Some(-0.8),
        };
        let out = run_simulation(&cfg, &u0, &nl, &grid).unwrap();
        assert_eq!(out.steps, 100);
        assert_eq!(out.snapshots.len(), 100 / 20 + 1);
        assert!(out.min_increment >= -1e-12);
        for s in &out.snapshots {
            assert!(s.eta.iter().all(|&e| e <= 1e-12));
            assert!(s.u.iter().zip(&s.obstacle).all(|(u, o)| *u >= o - 1e-12));
            let tol = 1e-8 * s.eta.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            assert!(s.eta.iter().zip(s.u.iter().zip(&s.obstacle)).all(|(e, (u, o))| (e * (u - o)).abs() <= tol));
            assert!(s.r.is_some());
        }
    }

    #[test]
    fn maximum_principle_between_steady_bounds() {
        let nl = cubic();
        let grid = Grid1D::new(-5.0, 5.0, 199).unwrap();
        // gamma_- = -1 and gamma_+ = 1 satisfy f(gamma_-) <= 0 <= f(gamma_+).
        let u0: Vec<f64> = grid.nodes().iter().map(|&x: &f64| (3.0 * x).sin() * 0.95).collect();
        for scheme in [Scheme::ExplicitPositivePart, Scheme::ImexProjected] {
            let dt = if scheme == Scheme::ImexProjected { 1e-3 } else { 0.4 * grid.h * grid.h };
            let cfg = SimConfig { scheme, dt, t_end: 0.5, bc_left: -0.9, bc_right: 0.9, snapshot_every: 50, alpha: None };
            let out = run_simulation(&cfg, &u0, &nl, &grid).unwrap();
            for s in &out.snapshots {
                assert!(s.u.iter().all(|&v| (-1.0 - 1e-10..=1.0 + 1e-10).contains(&v)));
            }
        }
    }

    #[test]
    fn cfl_violation_is_reported_before_stepping() {
        let nl = cubic();
        let grid = Grid1D::new(-5.0, 5.0, 199).unwrap();
        let cfg = SimConfig {
            scheme: Scheme::ExplicitPositivePart,
            dt: 2e-3,
            t_end: 1.0,
            bc_left: 0.0,
            bc_right: 0.0,
            snapshot_every: 1,
            alpha: None,
        };
        let err = run_simulation(&cfg, &vec![0.0; 199], &nl, &grid).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }) && err.is_precondition());
    }

    #[test]
    fn scheme_names_parse() {
        assert_eq!("imex".parse::<Scheme>().unwrap(), Scheme::ImexProjected);
        assert_eq!("EXPLICIT_POSITIVE_PART".parse::<Scheme>().unwrap(), Scheme::ExplicitPositivePart);
        assert!("rk4".parse::<Scheme>().is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn steps_are_monotone_with_a_signed_multiplier_and_bounded(
            u0 in proptest::collection::vec(-1.0f64..=1.0, 99),
            bc in (-1.0f64..=1.0, -1.0f64..=1.0),
            explicit in proptest::bool::ANY,
        ) {
            let nl = cubic();
            let grid = Grid1D::new(-2.0, 2.0, 99).unwrap();
            let (scheme, dt) = if explicit {
                (Scheme::ExplicitPositivePart, 0.4 * grid.h * grid.h)
            } else {
                (Scheme::ImexProjected, 1e-3)
            };
            let cfg = SimConfig { scheme, dt, t_end: 0.05, bc_left: bc.0, bc_right: bc.1, snapshot_every: 5, alpha: None };
            let out = run_simulation(&cfg, &u0, &nl, &grid).unwrap();
            proptest::prop_assert!(out.min_increment >= -1e-12);
            for s in &out.snapshots {
                proptest::prop_assert!(s.eta.iter().all(|&e| e <= 1e-12));
                proptest::prop_assert!(s.u.iter().all(|&v| (-1.0 - 1e-10..=1.0 + 1e-10).contains(&v)));
            }
        }
    }
}
