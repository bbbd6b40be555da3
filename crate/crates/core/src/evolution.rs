//! Explicit monotone time stepping of
//! `∂u_i/∂t + H_i(x, Du_i) + Σ_j d_ij u_j = 0` on a periodic grid.
//!
//! Each step applies forward Euler to the Lax–Friedrichs semi-discretisation
//! with the coupling treated explicitly. The dissipation coefficient is either
//! the Hamiltonian's global `lf_alpha` or, by default, a local bound on
//! `|H_p|` over the one-sided gradients at the node (capped by `lf_alpha`),
//! which keeps the numerical viscosity small where gradients are small.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{rows_of, validate_coupling, CouplingMatrix};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Point};
use crate::hamiltonian::{lf_flux_unchecked, Hamiltonian};

/// Node count above which a step is split across threads.
const PAR_THRESHOLD: usize = 4096;

/// How the Lax–Friedrichs dissipation coefficient is chosen at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dissipation {
    /// `α = lf_alpha` everywhere.
    Global,
    /// `α = min(lf_alpha, max |H_p|)` over the one-sided gradients at the node.
    #[default]
    Local,
}

#[derive(Debug, Clone)]
pub struct HJSystem {
    hams: Vec<Hamiltonian>,
    coupling: CouplingMatrix,
    grid: Grid,
    dissipation: Dissipation,
    coords: Vec<Point>,
    /// Row-major `m×m` blocks: one for a constant coupling, else one per node.
    dblocks: Vec<f64>,
    field: bool,
}

impl HJSystem {
    pub fn new(hams: Vec<Hamiltonian>, coupling: CouplingMatrix, grid: Grid) -> Result<Self> {
        let m = hams.len();
        if m == 0 {
            return Err(Error::Structure("system needs at least one component".into()));
        }
        if coupling.m() != m {
            return Err(Error::Structure(format!(
                "{m} Hamiltonians but a {}x{} coupling",
                coupling.m(),
                coupling.m()
            )));
        }
        if let Some(h) = hams.iter().find(|h| h.dim() != grid.dim()) {
            return Err(Error::Structure(format!(
                "Hamiltonian '{}' is {}D on a {}D grid",
                h.name(),
                h.dim(),
                grid.dim()
            )));
        }
        let check = validate_coupling(&coupling, &grid)?;
        if !check.valid {
            let v = &check.violations[0];
            return Err(Error::Coupling(format!(
                "coupling is not monotone at ({}, {}): {}",
                v.i, v.j, v.reason
            )));
        }
        let coords = (0..grid.len()).map(|i| grid.coords(i)).collect();
        let field = coupling.as_constant().is_none();
        let dblocks = coupling
            .samples(&grid)
            .iter()
            .flat_map(|d| rows_of(d).into_iter().flatten())
            .collect();
        Ok(Self {
            hams,
            coupling,
            grid,
            dissipation: Dissipation::default(),
            coords,
            dblocks,
            field,
        })
    }

    pub fn with_dissipation(mut self, d: Dissipation) -> Self {
        self.dissipation = d;
        self
    }

    pub fn m(&self) -> usize {
        self.hams.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hamiltonians(&self) -> &[Hamiltonian] {
        &self.hams
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn dissipation(&self) -> Dissipation {
        self.dissipation
    }

    /// All components share one evaluator.
    pub fn identical_hamiltonians(&self) -> bool {
        self.hams.iter().all(|h| h.same_evaluator(&self.hams[0]))
    }

    pub fn max_lf_alpha(&self) -> f64 {
        self.hams.iter().map(|h| h.lf_alpha()).fold(0.0, f64::max)
    }

    /// Largest diagonal coupling entry over all sampled nodes.
    pub fn max_diagonal(&self) -> f64 {
        let m = self.m();
        self.dblocks
            .chunks(m * m)
            .flat_map(|b| (0..m).map(move |i| b[i * m + i]))
            .fold(0.0, f64::max)
    }

    #[inline]
    fn d_at(&self, node: usize, i: usize, j: usize) -> f64 {
        let m = self.m();
        let base = if self.field { node * m * m } else { 0 };
        self.dblocks[base + i * m + j]
    }

    pub fn describe(&self) -> SystemDescription {
        SystemDescription {
            m: self.m(),
            grid: self.grid,
            hamiltonians: self
                .hams
                .iter()
                .map(|h| HamiltonianSummary {
                    name: h.name().to_string(),
                    tags: h.tags().iter().copied().collect(),
                    lf_alpha: h.lf_alpha(),
                })
                .collect(),
            coupling: self.coupling.as_constant().map(rows_of),
            dissipation: self.dissipation,
        }
    }

    /// Rate `F_i(u)(x) = flux_i(x) + Σ_j d_ij(x) u_j(x)` for every component and node,
    /// so that the semi-discrete system reads `u' = -F(u)`.
    pub(crate) fn rates(&self, u: &[Vec<f64>], out: &mut [Vec<f64>]) {
        let len = self.grid.len();
        let work = |(i, row): (usize, &mut Vec<f64>)| {
            if len >= PAR_THRESHOLD {
                row.par_iter_mut()
                    .enumerate()
                    .for_each(|(node, r)| *r = self.node_rate(u, i, node));
            } else {
                for (node, r) in row.iter_mut().enumerate() {
                    *r = self.node_rate(u, i, node);
                }
            }
        };
        if len >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(work);
        } else {
            out.iter_mut().enumerate().for_each(work);
        }
    }

    #[inline]
    fn node_rate(&self, u: &[Vec<f64>], i: usize, node: usize) -> f64 {
        let (pm, pp) = self.one_sided(&u[i], node);
        let x = &self.coords[node];
        let h = &self.hams[i];
        let alpha = self.node_alpha(h, x, &pm, &pp);
        let mut coupling = 0.0;
        for (j, uj) in u.iter().enumerate() {
            let d = self.d_at(node, i, j);
            if d != 0.0 {
                coupling += d * uj[node];
            }
        }
        lf_flux_unchecked(h, x, &pm, &pp, alpha) + coupling
    }

    #[inline]
    fn one_sided(&self, u: &[f64], node: usize) -> (Point, Point) {
        let h = self.grid.h();
        let mut pm = [0.0; 2];
        let mut pp = [0.0; 2];
        for axis in 0..self.grid.dim() {
            let prev = u[self.grid.neighbor(node, axis, -1)];
            let next = u[self.grid.neighbor(node, axis, 1)];
            pm[axis] = (u[node] - prev) / h;
            pp[axis] = (next - u[node]) / h;
        }
        (pm, pp)
    }

    #[inline]
    fn node_alpha(&self, h: &Hamiltonian, x: &Point, pm: &Point, pp: &Point) -> f64 {
        let cap = h.lf_alpha();
        match self.dissipation {
            Dissipation::Global => cap,
            Dissipation::Local => {
                let mid = [0.5 * (pm[0] + pp[0]), 0.5 * (pm[1] + pp[1])];
                let mut a = h.speed(x, pm).max(h.speed(x, pp)).max(h.speed(x, &mid));
                if self.grid.dim() == 2 {
                    a = a.max(h.speed(x, &[pm[0], pp[1]])).max(h.speed(x, &[pp[0], pm[1]]));
                }
                a.min(cap)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSummary {
    pub name: String,
    pub tags: Vec<crate::hamiltonian::ClassTag>,
    pub lf_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDescription {
    pub m: usize,
    pub grid: Grid,
    pub hamiltonians: Vec<HamiltonianSummary>,
    pub coupling: Option<Vec<Vec<f64>>>,
    pub dissipation: Dissipation,
}

/// All components at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub components: Vec<GridFunction>,
}

impl SystemState {
    pub fn new(t: f64, components: Vec<GridFunction>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Structure("state needs at least one component".into()));
        }
        for c in &components[1..] {
            components[0].grid().check_same(c.grid())?;
        }
        Ok(Self { t, components })
    }

    /// Every component sampled from its own function at `t = 0`.
    pub fn sample<F>(grid: Grid, fs: &[F]) -> Result<Self>
    where
        F: Fn(&Point) -> f64,
    {
        let comps = fs
            .iter()
            .map(|f| GridFunction::sample(grid, f))
            .collect::<Result<Vec<_>>>()?;
        Self::new(0.0, comps)
    }

    /// Spatially constant components.
    pub fn constants(grid: Grid, values: &[f64]) -> Self {
        Self {
            t: 0.0,
            components: values.iter().map(|&v| GridFunction::constant(grid, v)).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn raw(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|c| c.values().to_vec()).collect()
    }

    /// Add `κ_i` to component `i`.
    pub fn add_constants(&self, kappa: &[f64]) -> Self {
        Self {
            t: self.t,
            components: self
                .components
                .iter()
                .zip(kappa)
                .map(|(c, k)| c.add_scalar(*k))
                .collect(),
        }
    }

    /// `max_i sup_x |self_i - other_i|`.
    pub fn linf_distance(&self, other: &SystemState) -> Result<f64> {
        let mut d: f64 = 0.0;
        for (a, b) in self.components.iter().zip(&other.components) {
            d = d.max(a.linf_distance(b)?);
        }
        Ok(d)
    }

    fn from_raw(t: f64, grid: Grid, raw: Vec<Vec<f64>>) -> Self {
        Self {
            t,
            components: raw
                .into_iter()
                .map(|v| GridFunction::from_values(grid, v).expect("finite state"))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_final: f64,
    pub snapshot_every: f64,
    #[serde(default)]
    pub dt_override: Option<f64>,
}

fn default_cfl() -> f64 {
    0.5
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            t_final: 1.0,
            snapshot_every: 0.1,
            dt_override: None,
        }
    }
}

impl EvolutionConfig {
    pub fn new(t_final: f64, snapshot_every: f64) -> Self {
        Self {
            t_final,
            snapshot_every,
            ..Default::default()
        }
    }
}

/// `min(cfl·h/(N·max α), cfl/max d_ii)`, the second term dropped when the coupling vanishes.
pub fn cfl_dt(system: &HJSystem, config: &EvolutionConfig) -> Result<f64> {
    if !(config.cfl > 0.0 && config.cfl <= 1.0) {
        return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", config.cfl)));
    }
    let alpha = system.max_lf_alpha();
    let n_dim = system.grid.dim() as f64;
    let mut dt = config.cfl * system.grid.h() / (n_dim * alpha);
    let dmax = system.max_diagonal();
    if dmax > 0.0 {
        dt = dt.min(config.cfl / dmax);
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("time step {dt} is not positive")));
    }
    if let Some(o) = config.dt_override {
        if !(o > 0.0) || o > dt * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt_override {o} violates the stability bound {dt}"
            )));
        }
        return Ok(o);
    }
    Ok(dt)
}

fn stability_bound(system: &HJSystem) -> f64 {
    let mut dt = system.grid.h() / (system.grid.dim() as f64 * system.max_lf_alpha());
    let dmax = system.max_diagonal();
    if dmax > 0.0 {
        dt = dt.min(1.0 / dmax);
    }
    dt
}

/// Reusable buffers for repeated stepping.
pub(crate) struct Stepper<'a> {
    system: &'a HJSystem,
    rate: Vec<Vec<f64>>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(system: &'a HJSystem) -> Self {
        Self {
            system,
            rate: vec![vec![0.0; system.grid.len()]; system.m()],
        }
    }

    /// In-place Euler step `u ← u - dt·(F(u) + extra)`, with an optional zeroth-order
    /// term `extra_i = λ u_i` used by the discounted problem.
    pub(crate) fn advance(&mut self, u: &mut [Vec<f64>], dt: f64, discount: f64, t: f64) -> Result<()> {
        self.system.rates(u, &mut self.rate);
        for (i, (ui, ri)) in u.iter_mut().zip(&self.rate).enumerate() {
            for (node, (v, r)) in ui.iter_mut().zip(ri).enumerate() {
                *v -= dt * (r + discount * *v);
                if !v.is_finite() {
                    return Err(Error::Divergence {
                        t: t + dt,
                        component: i,
                        node,
                        value: *v,
                    });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn rate(&self) -> &[Vec<f64>] {
        &self.rate
    }

    pub(crate) fn compute_rates(&mut self, u: &[Vec<f64>]) {
        self.system.rates(u, &mut self.rate);
    }
}

/// One explicit step of length `dt`.
pub fn step(state: &SystemState, system: &HJSystem, dt: f64) -> Result<SystemState> {
    system.coupling.require_constant()?;
    check_state(state, system)?;
    let bound = stability_bound(system);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::Config(format!("dt {dt} outside the stability bound {bound}")));
    }
    let mut u = state.raw();
    Stepper::new(system).advance(&mut u, dt, 0.0, state.t)?;
    Ok(SystemState::from_raw(state.t + dt, system.grid, u))
}

fn check_state(state: &SystemState, system: &HJSystem) -> Result<()> {
    if state.m() != system.m() {
        return Err(Error::Structure(format!(
            "state has {} components, system has {}",
            state.m(),
            system.m()
        )));
    }
    state.grid().check_same(&system.grid)
}

/// Snapshots of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<SystemState>,
    /// Nominal step size; the last step before each snapshot may be shorter.
    pub dt: f64,
    pub steps: usize,
    pub config: EvolutionConfig,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &SystemState {
        self.snapshots.last().expect("trajectory has a snapshot")
    }

    pub fn grid(&self) -> &Grid {
        self.snapshots[0].grid()
    }

    pub fn m(&self) -> usize {
        self.snapshots[0].m()
    }

    /// Index of the snapshot closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, s) in self.snapshots.iter().enumerate() {
            if (s.t - t).abs() < (self.snapshots[best].t - t).abs() {
                best = k;
            }
        }
        best
    }

    /// Manifest JSON plus one binary grid file per (component, snapshot).
    pub fn write_dir(&self, dir: &Path, system: &SystemDescription) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, s) in self.snapshots.iter().enumerate() {
            let mut row = Vec::new();
            for (i, c) in s.components.iter().enumerate() {
                let name = format!("u{i}_s{k:05}.bin");
                c.save_binary(&dir.join(&name))?;
                row.push(name);
            }
            files.push(row);
        }
        let manifest = TrajectoryManifest {
            system: system.clone(),
            config: self.config.clone(),
            dt: self.dt,
            steps: self.steps,
            snapshot_times: self.times(),
            files,
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<(Self, TrajectoryManifest)> {
        let manifest: TrajectoryManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let mut snapshots = Vec::new();
        for (t, row) in manifest.snapshot_times.iter().zip(&manifest.files) {
            let comps = row
                .iter()
                .map(|f| GridFunction::load_binary(&dir.join(f)))
                .collect::<Result<Vec<_>>>()?;
            snapshots.push(SystemState::new(*t, comps)?);
        }
        Ok((
            Self {
                snapshots,
                dt: manifest.dt,
                steps: manifest.steps,
                config: manifest.config.clone(),
            },
            manifest,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub system: SystemDescription,
    pub config: EvolutionConfig,
    pub dt: f64,
    pub steps: usize,
    pub snapshot_times: Vec<f64>,
    pub files: Vec<Vec<String>>,
}

fn snapshot_schedule(config: &EvolutionConfig) -> Result<Vec<f64>> {
    if !(config.t_final >= 0.0) || !config.t_final.is_finite() {
        return Err(Error::Config(format!("t_final must be >= 0, got {}", config.t_final)));
    }
    if !(config.snapshot_every > 0.0) {
        return Err(Error::Config("snapshot_every must be positive".into()));
    }
    let mut times = Vec::new();
    let mut k = 1usize;
    loop {
        let t = k as f64 * config.snapshot_every;
        if t >= config.t_final - 1e-9 * config.snapshot_every {
            break;
        }
        times.push(t);
        k += 1;
    }
    if config.t_final > 0.0 {
        times.push(config.t_final);
    }
    Ok(times)
}

/// March `u0` to `t_final`, recording snapshots at multiples of `snapshot_every` and at `t_final`.
pub fn solve(system: &HJSystem, u0: &SystemState, config: &EvolutionConfig) -> Result<Trajectory> {
    system.coupling.require_constant()?;
    check_state(u0, system)?;
    let dt = cfl_dt(system, config)?;
    let targets = snapshot_schedule(config)?;
    let mut stepper = Stepper::new(system);
    let mut u = u0.raw();
    let mut snapshots = vec![SystemState {
        t: 0.0,
        components: u0.components.clone(),
    }];
    let mut t = 0.0;
    let mut steps = 0usize;
    for target in targets {
        let start = t;
        let mut k = 0usize;
        loop {
            let next = start + (k + 1) as f64 * dt;
            if next >= target - 1e-12 * dt.max(target) {
                stepper.advance(&mut u, target - t, 0.0, t)?;
                steps += 1;
                t = target;
                break;
            }
            stepper.advance(&mut u, dt, 0.0, t)?;
            steps += 1;
            k += 1;
            t = next;
        }
        snapshots.push(SystemState::from_raw(t, system.grid, u.clone()));
    }
    Ok(Trajectory {
        snapshots,
        dt,
        steps,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `max_i sup_x (u_i - v_i)(·, 0)⁺`.
    pub initial_gap: f64,
    /// `max_i sup_x (u_i - v_i)(·, t)` per snapshot.
    pub gaps: Vec<f64>,
    /// Worst excess of a gap over the initial gap, clamped at zero.
    pub worst_violation: f64,
}

/// Discrete comparison principle between two runs of the same system and config.
pub fn comparison_check(u: &Trajectory, v: &Trajectory) -> Result<ComparisonReport> {
    if u.snapshots.len() != v.snapshots.len() {
        return Err(Error::Structure("trajectories have different snapshot counts".into()));
    }
    let gap = |a: &SystemState, b: &SystemState| -> Result<f64> {
        let mut g = f64::NEG_INFINITY;
        for (x, y) in a.components.iter().zip(&b.components) {
            g = g.max(x.sub(y)?.max());
        }
        Ok(g)
    };
    let gaps = u
        .snapshots
        .iter()
        .zip(&v.snapshots)
        .map(|(a, b)| gap(a, b))
        .collect::<Result<Vec<_>>>()?;
    let initial_gap = gaps[0].max(0.0);
    let worst = gaps.iter().map(|g| g - initial_gap).fold(0.0, f64::max);
    Ok(ComparisonReport {
        initial_gap,
        gaps,
        worst_violation: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// `sup_t max_i ‖u_i(·,t) + c_i t‖∞`.
    pub sup_shifted: f64,
    /// Largest one-sided difference quotient over snapshots and components.
    pub sup_space_lipschitz: f64,
    /// Largest `‖u(t_{k+1}) - u(t_k)‖∞ / (t_{k+1} - t_k)`.
    pub sup_time_ratio: f64,
    pub bounded: bool,
}

pub fn lipschitz_check(traj: &Trajectory, c: &[f64], cap: f64) -> Result<LipschitzReport> {
    if c.len() != traj.m() {
        return Err(Error::Structure(format!("{} constants for {} components", c.len(), traj.m())));
    }
    let mut sup_shifted: f64 = 0.0;
    let mut lip: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for (k, s) in traj.snapshots.iter().enumerate() {
        for (i, comp) in s.components.iter().enumerate() {
            sup_shifted = sup_shifted.max(comp.add_scalar(c[i] * s.t).sup_norm());
            lip = lip.max(comp.lipschitz());
        }
        if k > 0 {
            let prev = &traj.snapshots[k - 1];
            let dt = s.t - prev.t;
            if dt > 0.0 {
                ratio = ratio.max(s.linf_distance(prev)? / dt);
            }
        }
    }
    let bounded = [sup_shifted, lip, ratio].iter().all(|v| v.is_finite() && *v <= cap);
    Ok(LipschitzReport {
        sup_shifted,
        sup_space_lipschitz: lip,
        sup_time_ratio: ratio,
        bounded,
    })
}
