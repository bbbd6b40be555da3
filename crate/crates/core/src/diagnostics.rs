//! Post-processing of trajectories: profile convergence, the `P_η` functional,
//! the logarithmic change of variable, component-gap decay and evaluation of
//! correctors on minimizer sets.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{delta_rate, pairwise_nonzero};
use crate::error::{Error, Result};
use crate::evolution::{HJSystem, SystemState, Trajectory};
use crate::grid::{GridFunction, Point};

/// Tie tolerance for grid argmins.
pub const ARGMIN_TOL: f64 = 1e-9;

/// `u_i + c_i t` at every snapshot.
pub fn shifted(traj: &Trajectory, c: &[f64]) -> Result<Trajectory> {
    check_c(traj, c)?;
    let snapshots = traj
        .snapshots
        .iter()
        .map(|s| SystemState {
            t: s.t,
            components: s
                .components
                .iter()
                .zip(c)
                .map(|(u, ci)| u.add_scalar(ci * s.t))
                .collect(),
        })
        .collect();
    Ok(Trajectory {
        snapshots,
        ..traj.clone()
    })
}

fn check_c(traj: &Trajectory, c: &[f64]) -> Result<()> {
    if c.len() != traj.m() {
        return Err(Error::Structure(format!("{} constants for {} components", c.len(), traj.m())));
    }
    Ok(())
}

/// `(t, max_i ‖u_i(t) + c_i t − u_i(T) − c_i T‖∞)` per snapshot.
pub fn profile_distances(traj: &Trajectory, c: &[f64]) -> Result<Vec<(f64, f64)>> {
    let s = shifted(traj, c)?;
    let last = s.last().clone();
    s.snapshots
        .iter()
        .map(|snap| Ok((snap.t, snap.linf_distance(&last)?)))
        .collect()
}

/// `sup_{x, s ≥ t} [φ(x,t) − φ(x,s) − 2η(s−t)]` over snapshot times, clamped at 0.
/// `t` is rounded up to the first snapshot at or after it.
pub fn p_eta(traj: &Trajectory, component: usize, eta: f64, t: f64) -> Result<f64> {
    if component >= traj.m() {
        return Err(Error::Range(format!("component {component} out of range")));
    }
    let k = start_index(traj, t)?;
    Ok(p_eta_from(traj, component, eta, k))
}

fn start_index(traj: &Trajectory, t: f64) -> Result<usize> {
    traj.snapshots
        .iter()
        .position(|s| s.t >= t - 1e-9)
        .ok_or_else(|| Error::Range(format!("t = {t} is beyond the last snapshot {}", traj.last().t)))
}

fn p_eta_from(traj: &Trajectory, component: usize, eta: f64, k: usize) -> f64 {
    let base = &traj.snapshots[k];
    let phi_t = base.components[component].values();
    let mut best: f64 = 0.0;
    for s in &traj.snapshots[k + 1..] {
        let lag = 2.0 * eta * (s.t - base.t);
        for (a, b) in phi_t.iter().zip(s.components[component].values()) {
            best = best.max(a - b - lag);
        }
    }
    best
}

/// Result of the logarithmic change of variable.
#[derive(Debug, Clone)]
pub struct ExpTransform {
    /// `w_i = ln(u_i + c_i t + κ)`.
    pub traj: Trajectory,
    pub kappa: f64,
}

/// Shifts `u + ct` by the constant `κ` that makes its minimum exactly 1, then takes logs.
pub fn exp_transform(traj: &Trajectory, c: &[f64]) -> Result<ExpTransform> {
    let s = shifted(traj, c)?;
    let min = s
        .snapshots
        .iter()
        .flat_map(|snap| snap.components.iter().map(|u| u.min()))
        .fold(f64::INFINITY, f64::min);
    let kappa = 1.0 - min;
    let snapshots = s
        .snapshots
        .iter()
        .map(|snap| {
            let components = snap
                .components
                .iter()
                .map(|u| GridFunction::from_values(*u.grid(), u.values().iter().map(|v| (v + kappa).ln()).collect()))
                .collect::<Result<Vec<_>>>()
                .map_err(|_| Error::Range("exp transform produced a non-finite value".into()))?;
            Ok(SystemState { t: snap.t, components })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpTransform {
        traj: Trajectory { snapshots, ..s },
        kappa,
    })
}

impl ExpTransform {
    /// Inverse map back to `u`.
    pub fn invert(&self, c: &[f64]) -> Trajectory {
        let snapshots = self
            .traj
            .snapshots
            .iter()
            .map(|snap| SystemState {
                t: snap.t,
                components: snap
                    .components
                    .iter()
                    .zip(c)
                    .map(|(w, ci)| w.map(|v| v.exp() - self.kappa - ci * snap.t))
                    .collect(),
            })
            .collect();
        Trajectory {
            snapshots,
            ..self.traj.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapDecay {
    /// `(t, Φ(t))` with `Φ = max_{i≠j} ‖u_i − u_j‖∞`.
    pub table: Vec<(f64, f64)>,
    pub fitted_rate: Option<f64>,
    /// Lower bound from the coupling, when defined.
    pub delta_rate: Option<f64>,
}

impl GapDecay {
    /// Largest excess of `Φ(t)` over `Φ(0)e^{−rate·t} + slack`.
    pub fn bound_excess(&self, rate: f64, slack: f64) -> f64 {
        let phi0 = self.table[0].1;
        self.table
            .iter()
            .map(|(t, phi)| phi - phi0 * (-rate * t).exp() - slack)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn gap(state: &SystemState) -> Result<f64> {
    let mut g: f64 = 0.0;
    for i in 0..state.m() {
        for j in i + 1..state.m() {
            g = g.max(state.components[i].linf_distance(&state.components[j])?);
        }
    }
    Ok(g)
}

/// Gap table plus an exponential fit on the window `Φ ∈ [10·floor, Φ(0)/2]`.
pub fn component_gap_decay(system: &HJSystem, traj: &Trajectory, floor: f64) -> Result<GapDecay> {
    if !system.identical_hamiltonians() {
        return Err(Error::Structure("gap decay needs identical Hamiltonians".into()));
    }
    let table = traj
        .snapshots
        .iter()
        .map(|s| Ok((s.t, gap(s)?)))
        .collect::<Result<Vec<_>>>()?;
    let delta = match system.coupling().as_constant() {
        Some(d) if pairwise_nonzero(d) => Some(delta_rate(d)?),
        _ => None,
    };
    let phi0 = table[0].1;
    let fitted_rate = if phi0 > 0.0 {
        let pts: Vec<(f64, f64)> = table
            .iter()
            .filter(|(_, p)| *p >= 10.0 * floor && *p <= phi0 / 2.0 && *p > 0.0)
            .map(|(t, p)| (*t, p.ln()))
            .collect();
        fit_slope(&pts).map(|s| -s)
    } else {
        None
    };
    Ok(GapDecay {
        table,
        fitted_rate,
        delta_rate: delta,
    })
}

fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum::<f64>() / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "points", rename_all = "snake_case")]
pub enum SetSpec {
    /// Common minimizers at which all `f_i` share the same minimum value.
    F,
    /// Common minimizers of all `f_i`.
    S,
    Custom(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetEvaluation {
    pub points: Vec<Point>,
    /// `values[i][k] = v_i(points[k])`.
    pub values: Vec<Vec<f64>>,
    /// True when a minimizer set came out empty.
    pub empty: bool,
}

/// Grid nodes where every `f_i` is within [`ARGMIN_TOL`] of its minimum.
pub fn common_argmin(f: &[GridFunction]) -> Vec<usize> {
    let mins: Vec<f64> = f.iter().map(|g| g.min()).collect();
    (0..f[0].grid().len())
        .filter(|&k| f.iter().zip(&mins).all(|(g, m)| g.values()[k] - m <= ARGMIN_TOL))
        .collect()
}

pub fn evaluate_on_set(v: &[GridFunction], set: &SetSpec, f: &[GridFunction]) -> Result<SetEvaluation> {
    let points: Vec<Point> = match set {
        SetSpec::Custom(pts) => pts.clone(),
        SetSpec::F | SetSpec::S => {
            if f.is_empty() {
                return Err(Error::Structure("minimizer sets need the potentials f_i".into()));
            }
            let grid = *f[0].grid();
            let mins: Vec<f64> = f.iter().map(|g| g.min()).collect();
            let same_min = mins.iter().all(|m| (m - mins[0]).abs() <= ARGMIN_TOL);
            if matches!(set, SetSpec::F) && !same_min {
                Vec::new()
            } else {
                common_argmin(f).into_iter().map(|k| grid.coords(k)).collect()
            }
        }
    };
    let values = v
        .iter()
        .map(|vi| points.iter().map(|x| vi.interpolate(x)).collect())
        .collect();
    Ok(SetEvaluation {
        empty: points.is_empty(),
        points,
        values,
    })
}

/// `max_i max_{x∈set} |a_i(x) − b_i(x)|`.
pub fn set_agreement(a: &[GridFunction], b: &[GridFunction], points: &[Point]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ai, bi)| points.iter().map(move |x| (ai.interpolate(x) - bi.interpolate(x)).abs()))
        .fold(0.0, f64::max)
}

/// Sup distance between two states after subtracting from each its own
/// `u_1(anchor)` (one scalar for all components).
pub fn normalized_distance(a: &SystemState, b: &SystemState, anchor: &Point) -> Result<f64> {
    let sa = a.components[0].interpolate(anchor);
    let sb = b.components[0].interpolate(anchor);
    let mut d: f64 = 0.0;
    for (x, y) in a.components.iter().zip(&b.components) {
        d = d.max(x.add_scalar(-sa).linf_distance(&y.add_scalar(-sb))?);
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneTail {
    /// `min_{i,x}` of `(u_i + c_i t)(x, t_{k+1}) − (u_i + c_i t)(x, t_k)` over the trailing quarter.
    pub min_increment: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn monotone_tail(traj: &Trajectory, c: &[f64], tolerance: f64) -> Result<MonotoneTail> {
    let s = shifted(traj, c)?;
    let start = 0.75 * s.last().t;
    let k0 = start_index(&s, start)?;
    let mut min_inc = f64::INFINITY;
    for w in s.snapshots[k0..].windows(2) {
        for (a, b) in w[0].components.iter().zip(&w[1].components) {
            min_inc = min_inc.min(b.sub(a)?.min());
        }
    }
    if !min_inc.is_finite() {
        min_inc = 0.0;
    }
    Ok(MonotoneTail {
        min_increment: min_inc,
        tolerance,
        passed: min_inc >= -tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PEtaRow {
    pub eta: f64,
    pub t: f64,
    /// `max_i P_η` on the exp-transformed profile.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub c_used: Vec<f64>,
    pub profile_distances: Vec<(f64, f64)>,
    pub p_eta_table: Vec<PEtaRow>,
    pub gap_table: Vec<(f64, f64)>,
    pub fitted_gap_rate: Option<f64>,
    pub delta_rate: Option<f64>,
    pub monotone_tail: MonotoneTail,
    pub snapshot_cadence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    /// Gap level treated as scheme noise in the decay fit.
    #[serde(default)]
    pub gap_floor: f64,
    /// Monotone-tail slack in units of `h + dt`.
    #[serde(default = "default_tail_factor")]
    pub tail_factor: f64,
    #[serde(default)]
    pub sets: Vec<SetSpec>,
}

fn default_etas() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}
fn default_tail_factor() -> f64 {
    5.0
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            etas: default_etas(),
            gap_floor: 0.0,
            tail_factor: default_tail_factor(),
            sets: Vec::new(),
        }
    }
}

impl ConvergenceReport {
    /// Largest `P_η` at or after `t` for the given η.
    pub fn p_eta_after(&self, eta: f64, t: f64) -> f64 {
        self.p_eta_table
            .iter()
            .filter(|r| r.eta == eta && r.t >= t - 1e-9)
            .map(|r| r.value)
            .fold(0.0, f64::max)
    }

    /// `report.json` plus `profile.csv`, `p_eta.csv` and `gap.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join("profile.csv"))?;
        w.write_record(["t", "distance"])?;
        for (t, d) in &self.profile_distances {
            w.write_record([t.to_string(), d.to_string()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("p_eta.csv"))?;
        w.write_record(["eta", "t", "value"])?;
        for r in &self.p_eta_table {
            w.write_record([r.eta.to_string(), r.t.to_string(), r.value.to_string()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("gap.csv"))?;
        w.write_record(["t", "phi"])?;
        for (t, p) in &self.gap_table {
            w.write_record([t.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Full report for one run with ergodic vector `c`.
pub fn diagnose(system: &HJSystem, traj: &Trajectory, c: &[f64], cfg: &DiagnosticsConfig) -> Result<ConvergenceReport> {
    let profile = profile_distances(traj, c)?;
    let w = exp_transform(traj, c)?;
    let cells: Vec<(f64, usize)> = cfg
        .etas
        .iter()
        .flat_map(|&eta| (0..traj.snapshots.len()).map(move |k| (eta, k)))
        .collect();
    let p_eta_table = cells
        .par_iter()
        .map(|&(eta, k)| PEtaRow {
            eta,
            t: traj.snapshots[k].t,
            value: (0..traj.m()).map(|i| p_eta_from(&w.traj, i, eta, k)).fold(0.0, f64::max),
        })
        .collect();
    let (gap_table, fitted, delta) = if system.identical_hamiltonians() && system.m() > 1 {
        let g = component_gap_decay(system, traj, cfg.gap_floor)?;
        (g.table, g.fitted_rate, g.delta_rate)
    } else {
        let t = traj
            .snapshots
            .iter()
            .map(|s| Ok((s.t, gap(s)?)))
            .collect::<Result<Vec<_>>>()?;
        (t, None, None)
    };
    let slack = cfg.tail_factor * (system.grid().h() + traj.dt);
    Ok(ConvergenceReport {
        c_used: c.to_vec(),
        profile_distances: profile,
        p_eta_table,
        gap_table,
        fitted_gap_rate: fitted,
        delta_rate: delta,
        monotone_tail: monotone_tail(traj, c, slack)?,
        snapshot_cadence: traj.config.snapshot_every,
    })
}
