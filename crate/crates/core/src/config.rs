//! Run configuration, read from TOML. Every field has a default, so an empty
//! document is a valid configuration (the compliant-data scenario at
//! `alpha = -0.8` on the cubic).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{Grid1D, Scheme, SimConfig};
use crate::potential::{Nonlinearity, NonlinearitySpec};
use crate::profile::ShootingOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Initial data sampled from the traveling wave.
    Wave,
    /// `alpha` on the left, quintic ramp, constant `top` on the right.
    Compliant,
    /// `u == gamma`.
    Constant,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wave" => Ok(Scenario::Wave),
            "compliant" => Ok(Scenario::Compliant),
            "constant" => Ok(Scenario::Constant),
            _ => Err(Error::Parse(format!("unknown scenario '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// Interior nodes; `h = (x_max - x_min) / (n + 1)`.
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x_min: -20.0, x_max: 30.0, n: 4999 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: usize,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self { scheme: Scheme::ImexProjected, dt: 1e-3, t_end: 40.0, snapshot_every: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub xi1: f64,
    pub ramp_width: f64,
    pub top: f64,
    /// Position of the sampled wave.
    pub shift: f64,
    pub gamma: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { xi1: -5.0, ramp_width: 3.0, top: 0.9, shift: 0.0, gamma: -0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSpec {
    pub ds: f64,
    pub tol_c: f64,
    pub tol_asym: f64,
    pub max_bisections: usize,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        let o = ShootingOptions::<f64>::default();
        Self { ds: o.ds, tol_c: o.tol_c, tol_asym: o.tol_asym, max_bisections: o.max_bisections }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub alpha: f64,
    /// `lo:hi:step`; overrides `alpha` where a list is used.
    pub alpha_list: Option<String>,
    pub nonlinearity: NonlinearitySpec,
    pub grid: GridSpec,
    pub sim: SimSpec,
    pub initial: InitialSpec,
    pub profile: ProfileSpec,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Compliant,
            alpha: -0.8,
            alpha_list: None,
            nonlinearity: NonlinearitySpec::Cubic,
            grid: GridSpec::default(),
            sim: SimSpec::default(),
            initial: InitialSpec::default(),
            profile: ProfileSpec::default(),
            out: PathBuf::from("out"),
            seed: 20_240_601,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    /// Full configuration with defaults filled in.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity<f64>> {
        self.nonlinearity.build()
    }

    pub fn grid(&self) -> Result<Grid1D<f64>> {
        Grid1D::new(self.grid.x_min, self.grid.x_max, self.grid.n)
    }

    pub fn shooting(&self) -> ShootingOptions<f64> {
        ShootingOptions {
            ds: self.profile.ds,
            tol_c: self.profile.tol_c,
            tol_asym: self.profile.tol_asym,
            s_max: None,
            max_bisections: self.profile.max_bisections,
        }
    }

    /// Simulation settings; boundary values are filled in by the scenario.
    pub fn sim(&self, bc_left: f64, bc_right: f64) -> SimConfig<f64> {
        SimConfig {
            scheme: self.sim.scheme,
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            bc_left,
            bc_right,
            snapshot_every: self.sim.snapshot_every,
            alpha: Some(self.alpha),
        }
    }

    /// `alpha_list` if given, else `[alpha]`.
    pub fn alphas(&self) -> Result<Vec<f64>> {
        match &self.alpha_list {
            Some(s) => parse_alpha_list(s),
            None => Ok(vec![self.alpha]),
        }
    }

    /// Checks everything that can be checked without running a solver.
    pub fn validate(&self) -> Result<()> {
        let nl = self.nonlinearity()?;
        self.grid()?;
        for a in self.alphas()? {
            if !a.is_finite() {
                return Err(Error::InvalidInput(format!("alpha {a}")));
            }
        }
        if !(self.profile.ds > 0.0) || self.profile.max_bisections == 0 {
            return Err(Error::InvalidInput("profile.ds and profile.max_bisections must be positive".into()));
        }
        if !(self.sim.dt > 0.0 && self.sim.t_end > 0.0) || self.sim.snapshot_every == 0 {
            return Err(Error::InvalidInput("sim.dt, sim.t_end and sim.snapshot_every must be positive".into()));
        }
        if self.scenario == Scenario::Compliant && !(self.initial.top > nl.a_zero && self.initial.top < nl.a_plus) {
            return Err(Error::InvalidInput(format!(
                "initial.top = {} must lie in (a_zero, a_plus) = ({}, {})",
                self.initial.top, nl.a_zero, nl.a_plus
            )));
        }
        Ok(())
    }
}

/// `lo:hi:step`, inclusive of `hi` when it lies on the lattice.
pub fn parse_alpha_list(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("alpha list '{s}' is not lo:hi:step")));
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| Error::Parse(format!("alpha list '{s}': {e}")));
    let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0) || !(hi >= lo) || ![lo, hi, step].iter().all(|v| v.is_finite()) {
        return Err(Error::Parse(format!("alpha list '{s}' needs lo <= hi and step > 0")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(Error::Parse(format!("alpha list '{s}' has too many entries")));
    }
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}
