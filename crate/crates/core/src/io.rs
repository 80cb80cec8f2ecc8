//! CSV and JSON emission. Numbers are written as `%.17g`, which round-trips
//! every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{Grid1D, PdeState};
use crate::profile::{Classification, ProfileKind, ProfileSolution};
use crate::scalar::Scalar;

/// C-style `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{x:.*}", (16 - exp) as usize);
        strip_zeros(&fixed).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")))
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = writer(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(serde_json::from_str(&s)?)
}

/// Scalar metadata of a profile, stored next to its CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileHeader {
    pub alpha: f64,
    pub c: f64,
    pub c_identity: f64,
    pub ds: f64,
    pub residual_at_end: f64,
    pub kind: ProfileKind<f64>,
    pub a_plus: f64,
    pub fprime_aplus: f64,
    pub end_event: Classification,
    pub len: usize,
}

impl ProfileHeader {
    pub fn of<T: Scalar>(sol: &ProfileSolution<T>) -> Self {
        let f = |v: T| v.to_f64_lossy();
        Self {
            alpha: f(sol.alpha),
            c: f(sol.c),
            c_identity: f(sol.c_identity),
            ds: f(sol.ds),
            residual_at_end: f(sol.residual_at_end),
            kind: match sol.kind {
                ProfileKind::Sharp => ProfileKind::Sharp,
                ProfileKind::Regularized { mu, alpha_mu } => ProfileKind::Regularized { mu: f(mu), alpha_mu: f(alpha_mu) },
            },
            a_plus: f(sol.a_plus),
            fprime_aplus: f(sol.fprime_aplus),
            end_event: sol.end_event,
            len: sol.len(),
        }
    }
}

/// Writes `stem.csv` (columns `s,phi,psi`) and `stem.json` (the header).
pub fn write_profile<T: Scalar>(sol: &ProfileSolution<T>, dir: &Path, stem: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer(&dir.join(format!("{stem}.csv")))?);
    w.write_record(["s", "phi", "psi"])?;
    for i in 0..sol.len() {
        w.write_record([
            fmt_g17(sol.s_grid[i].to_f64_lossy()),
            fmt_g17(sol.phi[i].to_f64_lossy()),
            fmt_g17(sol.psi[i].to_f64_lossy()),
        ])?;
    }
    w.flush()?;
    write_json(&dir.join(format!("{stem}.json")), &ProfileHeader::of(sol))
}

/// Inverse of [`write_profile`].
pub fn read_profile(dir: &Path, stem: &str) -> Result<ProfileSolution<f64>> {
    let h: ProfileHeader = read_json(&dir.join(format!("{stem}.json")))?;
    let mut r = csv::Reader::from_path(dir.join(format!("{stem}.csv")))?;
    let (mut s, mut phi, mut psi) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!("profile row has {} fields", rec.len())));
        }
        s.push(parse_f64(&rec[0])?);
        phi.push(parse_f64(&rec[1])?);
        psi.push(parse_f64(&rec[2])?);
    }
    if s.len() != h.len || s.is_empty() {
        return Err(Error::Parse(format!("profile has {} rows, header says {}", s.len(), h.len)));
    }
    Ok(ProfileSolution {
        alpha: h.alpha,
        c: h.c,
        s_grid: s,
        phi,
        psi,
        ds: h.ds,
        residual_at_end: h.residual_at_end,
        c_identity: h.c_identity,
        kind: h.kind,
        a_plus: h.a_plus,
        fprime_aplus: h.fprime_aplus,
        end_event: h.end_event,
    })
}

/// One snapshot as read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Long-format CSV with columns `t,x,u,eta`, one row per node and snapshot.
pub fn write_snapshots<T: Scalar>(series: &[PdeState<T>], grid: &Grid1D<T>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer(path)?);
    w.write_record(["t", "x", "u", "eta"])?;
    let xs: Vec<String> = grid.nodes().into_iter().map(|x| fmt_g17(x.to_f64_lossy())).collect();
    for s in series {
        let t = fmt_g17(s.t.to_f64_lossy());
        for (i, x) in xs.iter().enumerate() {
            let eta = s.eta.get(i).copied().unwrap_or_else(T::zero);
            w.write_record([t.as_str(), x, &fmt_g17(s.u[i].to_f64_lossy()), &fmt_g17(eta.to_f64_lossy())])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Groups rows by consecutive equal `t`.
pub fn read_snapshots(path: &Path) -> Result<Vec<SnapshotRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<SnapshotRecord> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("snapshot row has {} fields", rec.len())));
        }
        let t = parse_f64(&rec[0])?;
        let (x, u, eta) = (parse_f64(&rec[1])?, parse_f64(&rec[2])?, parse_f64(&rec[3])?);
        match out.last_mut() {
            Some(last) if last.t.to_bits() == t.to_bits() => {
                last.x.push(x);
                last.u.push(u);
                last.eta.push(eta);
            }
            _ => out.push(SnapshotRecord { t, x: vec![x], u: vec![u], eta: vec![eta] }),
        }
    }
    Ok(out)
}

/// `(t, r)` pairs, `r = None` where no free boundary was found.
pub fn r_series<T: Scalar>(series: &[PdeState<T>]) -> Vec<(f64, Option<f64>)> {
    series.iter().map(|s| (s.t.to_f64_lossy(), s.r.map(|r| r.to_f64_lossy()))).collect()
}

/// Simple `name,value` table, used for error series and families.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer(path)?);
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::InvalidInput(format!("row of {} values for {} columns", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|&v| fmt_g17(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(parse_f64).collect::<Result<Vec<f64>>>()?);
    }
    Ok((header, rows))
}
