//! JSON-configured experiments and the named theorem suites.
//!
//! A config names one experiment kind plus the blocks it needs. [`run`]
//! wires the modules together, writes deterministic artifacts (no
//! timestamps or timings) and returns the list of checks it made.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::coupling::{analyze, ergodic_constant_formula, matrix_from_rows, rows_of, CouplingMatrix};
use crate::diagnostics::{
    common_argmin, component_gap_decay, diagnose, evaluate_on_set, monotone_tail, normalized_distance,
    profile_distances, DiagnosticsConfig, ConvergenceReport,
};
use crate::ergodic::{estimate_ergodic_constant, long_time_constant, DiscountSchedule, ErgodicResult};
use crate::error::{Error, Result};
use crate::evolution::{solve, Dissipation, EvolutionConfig, HJSystem, SystemState, Trajectory};
use crate::fourier::{DirectionalWeight, FourierSeries};
use crate::grid::{Grid, GridFunction, Point};
use crate::hamiltonian::{builtin, HamiltonianParams, HamiltonianSpec, BUILTIN_HAMILTONIANS};
use crate::switching::{
    estimate_value, hamiltonian_from_spec, linear_eikonal_spec, FixedAction, GreedyPolicy, ModeSpec,
    SwitchingProcessSpec,
};

/// Environment variable consulted for the worker count when `--threads` is absent.
pub const THREADS_ENV: &str = "HJSYS_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const BUILTIN_COUPLINGS: [&str; 4] = ["symmetric2", "asymmetric2", "cyclic3", "decoupled2"];

pub const SUITES: [&str; 5] = [
    "mainresult-nonconvex",
    "exist-smoo-strictconvex",
    "largenew-eikonal",
    "identical-gap",
    "appendix-mc",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Evolve,
    Ergodic,
    Diagnose,
    Simulate,
    ValidateCoupling,
    TheoremSuite,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Evolve,
        ExperimentKind::Ergodic,
        ExperimentKind::Diagnose,
        ExperimentKind::Simulate,
        ExperimentKind::ValidateCoupling,
        ExperimentKind::TheoremSuite,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::Diagnose => "diagnose",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::ValidateCoupling => "validate-coupling",
            ExperimentKind::TheoremSuite => "theorem-suite",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 1, n: 256 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n).map_err(|e| Error::Config(format!("system.grid: {e}")))
    }
}

/// A built-in coupling id or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingSpec {
    Builtin(String),
    Rows(Vec<Vec<f64>>),
}

impl CouplingSpec {
    pub fn build(&self) -> Result<CouplingMatrix> {
        match self {
            CouplingSpec::Rows(r) => CouplingMatrix::from_rows(r),
            CouplingSpec::Builtin(id) => CouplingMatrix::from_rows(&builtin_coupling(id)?),
        }
    }
}

pub fn builtin_coupling(id: &str) -> Result<Vec<Vec<f64>>> {
    Ok(match id {
        "symmetric2" => vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
        "asymmetric2" => vec![vec![2.0, -2.0], vec![-1.0, 1.0]],
        "cyclic3" => vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0], vec![-1.0, 0.0, 1.0]],
        "decoupled2" => vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        other => {
            return Err(Error::Config(format!(
                "unknown coupling '{other}' (known: {})",
                BUILTIN_COUPLINGS.join(", ")
            )))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub hamiltonians: Vec<HamiltonianSpec>,
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub dissipation: Dissipation,
}

impl SystemConfig {
    pub fn build(&self) -> Result<HJSystem> {
        let grid = self.grid.build()?;
        let hams = self
            .hamiltonians
            .iter()
            .enumerate()
            .map(|(k, s)| {
                builtin(&s.id, grid.dim(), &s.params)
                    .map_err(|e| Error::Config(format!("system.hamiltonians[{k}]: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let coupling = self
            .coupling
            .build()
            .map_err(|e| Error::Config(format!("system.coupling: {e}")))?;
        Ok(HJSystem::new(hams, coupling, grid)
            .map_err(|e| Error::Config(format!("system: {e}")))?
            .with_dissipation(self.dissipation))
    }

    /// Potentials `f_i` on the grid when every Hamiltonian carries an eikonal split.
    fn potentials(&self, system: &HJSystem) -> Option<Vec<GridFunction>> {
        system
            .hamiltonians()
            .iter()
            .map(|h| {
                let p = h.eikonal_parts()?.potential.clone();
                GridFunction::sample(*system.grid(), |x| p(x)).ok()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub evolution: Option<EvolutionConfig>,
    #[serde(default)]
    pub discount: Option<DiscountSchedule>,
    /// Initial data, one series per component; missing components start at 0.
    #[serde(default)]
    pub initial: Vec<FourierSeries>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicyChoice {
    /// Greedy against the PDE solution of the derived system.
    #[default]
    Greedy,
    Fixed { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub x: Point,
    pub mode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub spec: SwitchingProcessSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub horizon: f64,
    pub probes: Vec<Probe>,
    /// Companion PDE grid size.
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// Defaults to a quarter of the companion grid step.
    #[serde(default)]
    pub dt_sim: Option<f64>,
    #[serde(default)]
    pub policy: PolicyChoice,
    /// Relative MC-vs-PDE tolerance checked at every probe.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_samples() -> usize {
    10_000
}
fn default_grid_n() -> usize {
    256
}
fn default_rel_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// May be omitted when the kind is given on the command line.
    #[serde(default)]
    pub experiment_kind: Option<ExperimentKind>,
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    /// Theorem suite name.
    #[serde(default)]
    pub suite: Option<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.experiment_kind
            .ok_or_else(|| Error::Config("experiment_kind: missing".into()))
    }

    /// Checks that the blocks the kind needs are present.
    pub fn validate(&self) -> Result<()> {
        let need_system = |what: &str| -> Result<&SystemConfig> {
            let s = self
                .system
                .as_ref()
                .ok_or_else(|| Error::Config(format!("system: required for {what}")))?;
            if s.hamiltonians.is_empty() {
                return Err(Error::Config(format!("system.hamiltonians: required for {what}")));
            }
            if let Some(k) = s
                .hamiltonians
                .iter()
                .position(|h| !BUILTIN_HAMILTONIANS.contains(&h.id.as_str()))
            {
                return Err(Error::Config(format!(
                    "system.hamiltonians[{k}].id: unknown Hamiltonian '{}'",
                    s.hamiltonians[k].id
                )));
            }
            Ok(s)
        };
        match self.kind()? {
            ExperimentKind::Evolve | ExperimentKind::Diagnose => {
                need_system(self.kind()?.as_str())?;
                if self.solver.evolution.is_none() {
                    return Err(Error::Config("solver.evolution: required".into()));
                }
            }
            ExperimentKind::Ergodic => {
                need_system("ergodic")?;
                if let Some(d) = &self.solver.discount {
                    d.validate().map_err(|e| Error::Config(format!("solver.discount: {e}")))?;
                }
            }
            ExperimentKind::Simulate => {
                let s = self
                    .simulate
                    .as_ref()
                    .ok_or_else(|| Error::Config("simulate: required".into()))?;
                s.spec.validate().map_err(|e| Error::Config(format!("simulate.spec: {e}")))?;
                if s.probes.is_empty() {
                    return Err(Error::Config("simulate.probes: at least one probe is required".into()));
                }
            }
            ExperimentKind::ValidateCoupling => {
                if self.system.is_none() {
                    return Err(Error::Config("system.coupling: required".into()));
                }
            }
            ExperimentKind::TheoremSuite => {
                let name = self
                    .suite
                    .as_deref()
                    .ok_or_else(|| Error::Config("suite: required for theorem-suite".into()))?;
                if !SUITES.contains(&name) {
                    return Err(Error::Config(format!(
                        "suite: unknown suite '{name}' (known: {})",
                        SUITES.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One assertion made by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    /// Passes when `value ≥ tolerance`.
    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value >= tolerance,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 1.0,
            passed: ok,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {:.6e} (limit {:.3e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub kind: ExperimentKind,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_ASSERTION
        }
    }
}

/// Exit code for an error that stopped a run.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } | Error::Convergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

/// Names in one catalog: `hamiltonians`, `couplings` or `suites`.
pub fn list_builtin(kind: &str) -> Result<Vec<String>> {
    let names: &[&str] = match kind {
        "hamiltonians" => &BUILTIN_HAMILTONIANS,
        "couplings" => &BUILTIN_COUPLINGS,
        "suites" => &SUITES,
        other => {
            return Err(Error::Config(format!(
                "unknown catalog '{other}' (expected hamiltonians, couplings or suites)"
            )))
        }
    };
    Ok(names.iter().map(|s| s.to_string()).collect())
}

/// Runs a validated config. `out` overrides `config.output`.
pub fn run(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let kind = config.kind()?;
    let out_dir = out.map(Path::to_path_buf).or_else(|| config.output.clone());
    if let Some(d) = &out_dir {
        std::fs::create_dir_all(d)
            .map_err(|e| Error::Config(format!("output: cannot create {}: {e}", d.display())))?;
    }
    let (summary, checks) = match kind {
        ExperimentKind::Evolve => run_evolve(config, out_dir.as_deref())?,
        ExperimentKind::Ergodic => run_ergodic(config, out_dir.as_deref())?,
        ExperimentKind::Diagnose => run_diagnose(config, out_dir.as_deref())?,
        ExperimentKind::Simulate => run_simulate(config.simulate.as_ref().expect("validated"))?,
        ExperimentKind::ValidateCoupling => run_validate_coupling(config)?,
        ExperimentKind::TheoremSuite => {
            let name = config.suite.as_deref().expect("validated");
            let checks = run_suite(name, out_dir.as_deref())?;
            (json!({ "suite": name }), checks)
        }
    };
    let outcome = RunOutcome {
        kind,
        summary,
        checks,
        out_dir: out_dir.clone(),
    };
    if let Some(d) = &out_dir {
        let manifest = json!({
            "config": config,
            "kind": kind,
            "summary": outcome.summary,
            "checks": outcome.checks,
            "passed": outcome.passed(),
        });
        std::fs::write(d.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(outcome)
}

fn initial_state(config: &ExperimentConfig, system: &HJSystem) -> Result<SystemState> {
    let zero = FourierSeries::default();
    let comps = (0..system.m())
        .map(|i| {
            let s = config.solver.initial.get(i).unwrap_or(&zero);
            GridFunction::sample(*system.grid(), |x| s.eval(x))
        })
        .collect::<Result<Vec<_>>>()?;
    SystemState::new(0.0, comps)
}

fn evolve_from_config(config: &ExperimentConfig) -> Result<(SystemConfig, HJSystem, Trajectory)> {
    let sc = config.system.clone().expect("validated");
    let system = sc.build()?;
    let u0 = initial_state(config, &system)?;
    let evo = config.solver.evolution.as_ref().expect("validated");
    let traj = solve(&system, &u0, evo)?;
    Ok((sc, system, traj))
}

fn run_evolve(config: &ExperimentConfig, out: Option<&Path>) -> Result<(serde_json::Value, Vec<Check>)> {
    let (_, system, traj) = evolve_from_config(config)?;
    if let Some(d) = out {
        traj.write_dir(&d.join("trajectory"), &system.describe())?;
    }
    let last = traj.last();
    Ok((
        json!({
            "dt": traj.dt,
            "steps": traj.steps,
            "snapshot_times": traj.times(),
            "final_sup": last.components.iter().map(|c| c.sup_norm()).collect::<Vec<_>>(),
        }),
        Vec::new(),
    ))
}

fn formula_value(sc: &SystemConfig, system: &HJSystem) -> Result<Option<f64>> {
    let (Some(d), Some(f)) = (system.coupling().as_constant(), sc.potentials(system)) else {
        return Ok(None);
    };
    if common_argmin(&f).is_empty() || !analyze(d)?.irreducible {
        return Ok(None);
    }
    Ok(Some(ergodic_constant_formula(d, &f)?))
}

fn ergodic_summary(res: &ErgodicResult, formula: Option<f64>) -> serde_json::Value {
    json!({
        "c": res.c,
        "c_raw": res.c_raw,
        "residual": res.residual,
        "cross_spread": res.cross_spread,
        "warnings": res.warnings,
        "formula": formula,
        "discount_bounds": res.discount_bounds(0.05),
    })
}

fn run_ergodic(config: &ExperimentConfig, out: Option<&Path>) -> Result<(serde_json::Value, Vec<Check>)> {
    let sc = config.system.clone().expect("validated");
    let system = sc.build()?;
    let schedule = config.solver.discount.clone().unwrap_or_default();
    let res = estimate_ergodic_constant(&system, &schedule)?;
    if let Some(d) = out {
        res.write_dir(&d.join("ergodic"))?;
    }
    let formula = formula_value(&sc, &system)?;
    Ok((ergodic_summary(&res, formula), Vec::new()))
}

fn run_diagnose(config: &ExperimentConfig, out: Option<&Path>) -> Result<(serde_json::Value, Vec<Check>)> {
    let (sc, system, traj) = evolve_from_config(config)?;
    let schedule = config.solver.discount.clone().unwrap_or_default();
    let res = estimate_ergodic_constant(&system, &schedule)?;
    let c = vec![res.c[0]; system.m()];
    let report = diagnose(&system, &traj, &c, &config.diagnostics)?;
    let mut sets = Vec::new();
    if let Some(f) = sc.potentials(&system) {
        for s in &config.diagnostics.sets {
            sets.push(evaluate_on_set(&res.v, s, &f)?);
        }
    }
    if let Some(d) = out {
        report.write_dir(&d.join("diagnostics"))?;
        res.write_dir(&d.join("ergodic"))?;
    }
    let checks = vec![Check::at_least(
        "monotone_tail",
        report.monotone_tail.min_increment,
        -report.monotone_tail.tolerance,
    )];
    Ok((
        json!({
            "ergodic": ergodic_summary(&res, formula_value(&sc, &system)?),
            "fitted_gap_rate": report.fitted_gap_rate,
            "delta_rate": report.delta_rate,
            "final_profile_distance": report.profile_distances.first().map(|p| p.1),
            "sets": sets,
        }),
        checks,
    ))
}

/// PDE system whose value functions the switching process represents.
pub fn pde_system_for(spec: &SwitchingProcessSpec, grid: Grid) -> Result<HJSystem> {
    let hams = (0..spec.m())
        .map(|i| hamiltonian_from_spec(spec, i))
        .collect::<Result<Vec<_>>>()?;
    HJSystem::new(hams, spec.derived_coupling()?, grid)
}

fn terminal_state(spec: &SwitchingProcessSpec, grid: Grid) -> Result<SystemState> {
    let fs: Vec<&ModeSpec> = spec.modes.iter().collect();
    let comps = fs
        .iter()
        .map(|m| GridFunction::sample(grid, |x| m.terminal.eval(x)))
        .collect::<Result<Vec<_>>>()?;
    SystemState::new(0.0, comps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub x: Point,
    pub mode: usize,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub pde: f64,
    pub rel_error: f64,
}

/// MC values at the probes next to the PDE solution of the derived system.
pub fn simulate_probes(cfg: &SimulateConfig) -> Result<Vec<ProbeResult>> {
    let spec = &cfg.spec;
    let grid = Grid::new(spec.dim, cfg.grid_n)?;
    let system = pde_system_for(spec, grid)?;
    let u0 = terminal_state(spec, grid)?;
    let cadence = (cfg.horizon / 400.0).max(1e-6);
    let traj = solve(&system, &u0, &EvolutionConfig::new(cfg.horizon, cadence))?;
    let dt_sim = cfg.dt_sim.unwrap_or(grid.h() / 4.0);
    let greedy;
    let fixed;
    let policy: &dyn crate::switching::Policy = match cfg.policy {
        PolicyChoice::Greedy => {
            greedy = GreedyPolicy::new(spec, &traj)?;
            &greedy
        }
        PolicyChoice::Fixed { index } => {
            if index >= spec.controls.len() {
                return Err(Error::Config(format!("simulate.policy.index: {index} out of range")));
            }
            fixed = FixedAction(index);
            &fixed
        }
    };
    cfg.probes
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let est = estimate_value(
                spec,
                policy,
                p.x,
                p.mode,
                cfg.horizon,
                dt_sim,
                cfg.samples,
                cfg.seed.wrapping_add(k as u64),
            )?;
            let pde = traj.last().components[p.mode].interpolate(&p.x);
            Ok(ProbeResult {
                x: p.x,
                mode: p.mode,
                mc_mean: est.mean,
                mc_std_error: est.std_error,
                pde,
                rel_error: (est.mean - pde).abs() / pde.abs().max(1e-12),
            })
        })
        .collect()
}

fn run_simulate(cfg: &SimulateConfig) -> Result<(serde_json::Value, Vec<Check>)> {
    let probes = simulate_probes(cfg)?;
    let checks = probes
        .iter()
        .map(|p| Check::at_most(format!("mc_vs_pde x={:.3} mode={}", p.x[0], p.mode), p.rel_error, cfg.rel_tol))
        .collect();
    Ok((json!({ "probes": probes }), checks))
}

fn run_validate_coupling(config: &ExperimentConfig) -> Result<(serde_json::Value, Vec<Check>)> {
    let sc = config.system.as_ref().expect("validated");
    let d = match &sc.coupling {
        CouplingSpec::Rows(r) => matrix_from_rows(r),
        CouplingSpec::Builtin(id) => matrix_from_rows(&builtin_coupling(id)?),
    }
    .map_err(|e| Error::Config(format!("system.coupling: {e}")))?;
    let report = analyze(&d)?;
    let checks = vec![Check::flag("monotone", report.monotone)];
    Ok((
        json!({ "matrix": rows_of(&d), "report": report }),
        checks,
    ))
}

// ---------------------------------------------------------------------------
// Theorem suites

fn series(constant: f64, modes: &[(i32, f64, f64)]) -> FourierSeries {
    FourierSeries::one_d(constant, modes)
}

fn quad(f: FourierSeries) -> HamiltonianSpec {
    HamiltonianSpec {
        id: "quadratic_eikonal".into(),
        params: HamiltonianParams {
            f,
            ..Default::default()
        },
    }
}

fn symmetric_system(n: usize, hams: Vec<HamiltonianSpec>) -> SystemConfig {
    SystemConfig {
        grid: GridConfig { dim: 1, n },
        hamiltonians: hams,
        coupling: CouplingSpec::Builtin("symmetric2".into()),
        dissipation: Dissipation::Local,
    }
}

/// `f_1 = 1.5 − cos 2πx`, `f_2 = 2(1 − cos 2πx)`: common minimizer at 0 with different minima.
pub fn largenew_potentials() -> [FourierSeries; 2] {
    [series(1.5, &[(1, -1.0, 0.0)]), series(2.0, &[(1, -2.0, 0.0)])]
}

/// `f_1 = 1 − cos 2πx` (minimum at 0), `f_2 = (1 + cos 2πx)/2` (minimum at 1/2).
pub fn diff_mini_potentials() -> [FourierSeries; 2] {
    [series(1.0, &[(1, -1.0, 0.0)]), series(0.5, &[(1, 0.5, 0.0)])]
}

fn sample_state(grid: Grid, fs: &[FourierSeries]) -> Result<SystemState> {
    let comps = fs
        .iter()
        .map(|s| GridFunction::sample(grid, |x| s.eval(x)))
        .collect::<Result<Vec<_>>>()?;
    SystemState::new(0.0, comps)
}

/// Second Lipschitz initial condition used by the convergence suites.
fn wavy_initial() -> [FourierSeries; 2] {
    [series(0.0, &[(1, 0.0, 0.3)]), series(0.0, &[(2, 0.2, 0.0)])]
}

/// Convergence checks shared by the eikonal and strictly convex suites.
fn convergence_checks(
    system: &HJSystem,
    c: f64,
    t_final: f64,
    t_tail: f64,
    out: Option<&Path>,
) -> Result<Vec<Check>> {
    let grid = *system.grid();
    let h = grid.h();
    let cfg = EvolutionConfig::new(t_final, 0.5);
    let zero = sample_state(grid, &[FourierSeries::default(), FourierSeries::default()])?;
    let wavy = sample_state(grid, &wavy_initial())?;
    let ta = solve(system, &zero, &cfg)?;
    let tb = solve(system, &wavy, &cfg)?;
    let cv = vec![c; system.m()];
    let mut checks = Vec::new();
    for (label, tr) in [("zero", &ta), ("wavy", &tb)] {
        let worst = profile_distances(tr, &cv)?
            .into_iter()
            .filter(|(t, _)| *t >= t_tail - 1e-9)
            .map(|(_, d)| d)
            .fold(0.0, f64::max);
        checks.push(Check::at_most(format!("profile_tail_{label}"), worst, 5.0 * h));
    }
    let agree = normalized_distance(ta.last(), tb.last(), &[0.0, 0.0])?;
    checks.push(Check::at_most("terminal_agreement", agree, 10.0 * h));
    let lt = long_time_constant(&ta, &[0.0, 0.0], 10.0)?;
    checks.push(Check::at_most("long_time_vs_discount", (lt[0] - c).abs(), 0.02));
    if let Some(d) = out {
        ta.write_dir(&d.join("trajectory_zero"), &system.describe())?;
        tb.write_dir(&d.join("trajectory_wavy"), &system.describe())?;
    }
    Ok(checks)
}

fn suite_largenew(out: Option<&Path>) -> Result<Vec<Check>> {
    let [f1, f2] = largenew_potentials();
    let sc = symmetric_system(256, vec![quad(f1), quad(f2)]);
    let system = sc.build()?;
    let res = estimate_ergodic_constant(&system, &DiscountSchedule::default())?;
    let formula = formula_value(&sc, &system)?
        .ok_or_else(|| Error::Structure("formula does not apply".into()))?;
    let mut checks = vec![
        Check::at_most("c1_vs_formula", (res.c[0] - formula).abs(), 0.02),
        Check::at_most("cross_component_spread", res.cross_spread, 5e-3),
    ];
    let b = res.discount_bounds(0.05);
    checks.push(Check::at_most("discount_M_ratio", b.max_ratio, 1.05));
    checks.push(Check::at_least("discount_min_value", b.min_value, 0.0));
    checks.push(Check::at_most("discount_lipschitz_spread", b.lipschitz_spread, 0.10));
    checks.extend(convergence_checks(&system, res.c[0], 40.0, 30.0, out)?);
    if let Some(d) = out {
        res.write_dir(&d.join("ergodic"))?;
    }
    Ok(checks)
}

fn suite_exist_smoo(out: Option<&Path>) -> Result<Vec<Check>> {
    let [f1, f2] = diff_mini_potentials();
    let sc = symmetric_system(256, vec![quad(f1), quad(f2)]);
    let system = sc.build()?;
    let f = sc.potentials(&system).expect("eikonal split");
    let res = estimate_ergodic_constant(&system, &DiscountSchedule::default())?;
    let mut checks = vec![
        Check::flag("minimizer_set_S_empty", common_argmin(&f).is_empty()),
        Check::at_most("cross_component_spread", res.cross_spread, 5e-3),
    ];
    checks.extend(convergence_checks(&system, res.c[0], 40.0, 30.0, out)?);
    Ok(checks)
}

/// `f = 1 − cos 2πx` and `2(1 − cos 2πx)`, `q = 0.5 sin 2πx`, `F = 1 + 0.5 cos θ`: `K = {0}`.
pub fn nonconvex_suite_system(n: usize) -> SystemConfig {
    let q = vec![series(0.0, &[(1, 0.0, 0.5)])];
    let weight = DirectionalWeight {
        constant: 1.0,
        cos: vec![0.5],
        sin: vec![],
    };
    let ham = |f: FourierSeries| HamiltonianSpec {
        id: "nonconvex_bs00".into(),
        params: HamiltonianParams {
            f,
            q: q.clone(),
            weight: Some(weight.clone()),
            ..Default::default()
        },
    };
    symmetric_system(
        n,
        vec![ham(series(1.0, &[(1, -1.0, 0.0)])), ham(series(2.0, &[(1, -2.0, 0.0)]))],
    )
}

fn suite_nonconvex(out: Option<&Path>) -> Result<Vec<Check>> {
    let system = nonconvex_suite_system(256).build()?;
    let grid = *system.grid();
    let u0 = sample_state(grid, &wavy_initial())?;
    let traj = solve(&system, &u0, &EvolutionConfig::new(40.0, 0.5))?;
    let slack = 5.0 * (grid.h() + traj.dt);
    let c = [0.0, 0.0];
    let cfg = DiagnosticsConfig {
        etas: vec![0.05, 0.1, 0.2],
        ..Default::default()
    };
    let report: ConvergenceReport = diagnose(&system, &traj, &c, &cfg)?;
    let tail = monotone_tail(&traj, &c, slack)?;
    let mut checks = vec![
        Check::flag(
            "compact_set_nonempty",
            system.hamiltonians().iter().all(|h| h.compact_set().is_some()
                && !h.has_tag(crate::hamiltonian::ClassTag::EmptyCompactSet)),
        ),
        Check::at_least("monotone_tail", tail.min_increment, -slack),
    ];
    for eta in &cfg.etas {
        checks.push(Check::at_most(
            format!("p_eta_tail eta={eta}"),
            report.p_eta_after(*eta, 30.0),
            slack,
        ));
    }
    if let Some(d) = out {
        report.write_dir(&d.join("diagnostics"))?;
    }
    Ok(checks)
}

fn suite_identical_gap(out: Option<&Path>) -> Result<Vec<Check>> {
    let f = series(1.0, &[(1, -1.0, 0.0)]);
    let sc = symmetric_system(256, vec![quad(f.clone()), quad(f)]);
    // one evaluator shared by both components
    let mut system = sc.build()?;
    let h0 = system.hamiltonians()[0].clone();
    system = HJSystem::new(vec![h0.clone(), h0], system.coupling().clone(), *system.grid())?;
    let grid = *system.grid();
    let cfg = EvolutionConfig::new(5.0, 0.05);
    let u0 = sample_state(grid, &[series(0.0, &[(1, 0.0, 1.0)]), FourierSeries::default()])?;
    let traj = solve(&system, &u0, &cfg)?;
    let gap = component_gap_decay(&system, &traj, 0.0)?;
    let slack = 10.0 * (grid.h() + traj.dt);
    let mut checks = vec![
        Check::at_most("delta_rate_is_2", (gap.delta_rate.unwrap_or(0.0) - 2.0).abs(), 1e-12),
        Check::at_most("gap_bound_excess", gap.bound_excess(2.0, slack), 0.0),
    ];
    let flat = SystemState::constants(grid, &[1.0, 0.0]);
    let traj_flat = solve(&system, &flat, &cfg)?;
    let gap_flat = component_gap_decay(&system, &traj_flat, 1e-12)?;
    checks.push(Check::at_least(
        "fitted_rate_constant_data",
        gap_flat.fitted_rate.unwrap_or(0.0),
        1.9,
    ));
    if let Some(d) = out {
        std::fs::write(d.join("gap.json"), serde_json::to_string_pretty(&(gap, gap_flat))?)?;
    }
    Ok(checks)
}

/// Probe points (x, mode) of the Monte Carlo suite.
pub const MC_PROBES: [(f64, usize); 5] = [(0.1, 0), (0.3, 1), (0.5, 0), (0.7, 1), (0.85, 0)];

fn suite_appendix_mc(out: Option<&Path>) -> Result<Vec<Check>> {
    let spec = linear_eikonal_spec(1, &largenew_potentials(), 1.0, 64);
    let cfg = SimulateConfig {
        spec,
        samples: 10_000,
        seed: 2024,
        horizon: 2.0,
        probes: MC_PROBES.iter().map(|&(x, mode)| Probe { x: [x, 0.0], mode }).collect(),
        grid_n: 256,
        dt_sim: None,
        policy: PolicyChoice::Greedy,
        rel_tol: 0.05,
    };
    let probes = simulate_probes(&cfg)?;
    let mut checks: Vec<Check> = probes
        .iter()
        .map(|p| Check::at_most(format!("mc_vs_pde x={} mode={}", p.x[0], p.mode), p.rel_error, 0.05))
        .collect();
    // two-state occupation time with ℓ = (0, 1), rate 1, no motion
    let occ = occupation_spec();
    let t: f64 = 2.0;
    let exact = t / 2.0 - (1.0 - (-2.0 * t).exp()) / 4.0;
    let est = estimate_value(&occ, &FixedAction(0), [0.0, 0.0], 0, t, 0.01, 10_000, 7)?;
    checks.push(Check::at_most(
        "occupation_time_in_std_errors",
        (est.mean - exact).abs() / est.std_error,
        3.0,
    ));
    if let Some(d) = out {
        std::fs::write(d.join("probes.json"), serde_json::to_string_pretty(&probes)?)?;
    }
    Ok(checks)
}

/// Two motionless modes with costs 0 and 1 and unit switching rates.
pub fn occupation_spec() -> SwitchingProcessSpec {
    let mode = |cost: f64| ModeSpec {
        dynamics: crate::switching::Dynamics::Constant { velocity: vec![0.0] },
        cost: FourierSeries::constant(cost),
        action_quadratic: 0.0,
        terminal: FourierSeries::default(),
    };
    SwitchingProcessSpec {
        dim: 1,
        modes: vec![mode(0.0), mode(1.0)],
        rates: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        controls: vec![vec![0.0]],
    }
}

/// Runs a named suite and returns its checks.
pub fn run_suite(name: &str, out: Option<&Path>) -> Result<Vec<Check>> {
    match name {
        "largenew-eikonal" => suite_largenew(out),
        "exist-smoo-strictconvex" => suite_exist_smoo(out),
        "mainresult-nonconvex" => suite_nonconvex(out),
        "identical-gap" => suite_identical_gap(out),
        "appendix-mc" => suite_appendix_mc(out),
        other => Err(Error::Config(format!("unknown suite '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogs() {
        let h = list_builtin("hamiltonians").unwrap();
        for id in ["quadratic_eikonal", "linear_eikonal", "nonconvex_bs00"] {
            assert!(h.iter().any(|s| s == id));
        }
        assert_eq!(list_builtin("suites").unwrap().len(), 5);
        assert!(matches!(list_builtin("widgets"), Err(Error::Config(_))));
    }

    #[test]
    fn kind_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.as_str().parse::<ExperimentKind>().unwrap(), k);
            let j = serde_json::to_string(&k).unwrap();
            assert_eq!(j, format!("\"{}\"", k.as_str()));
        }
        assert!("evolve2".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn schema_errors_carry_field_paths() {
        let err = ExperimentConfig::from_json(
            r#"{"experiment_kind": "evolve", "system": {"coupling": "symmetric2", "grid": {"dim": 1, "n": "x"}}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("system.grid.n"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"experiment_kind": "evolve", "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn missing_blocks_are_config_errors() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment_kind": "evolve"}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ExperimentConfig::from_json(r#"{"experiment_kind": "theorem-suite", "suite": "nope"}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment_kind": "ergodic", "system": {"coupling": "symmetric2", "hamiltonians": [{"id": "cubic"}]}}"#,
        )
        .unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("hamiltonians[0]"));
    }

    #[test]
    fn validate_coupling_report() {
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment_kind": "validate-coupling", "system": {"coupling": [[1, -1], [-1, 1]]}}"#,
        )
        .unwrap();
        let out = run(&cfg, None).unwrap();
        assert!(out.passed());
        let r = &out.summary["report"];
        assert_eq!(r["irreducible"], true);
        assert!((r["delta_rate"].as_f64().unwrap() - 2.0).abs() < 1e-12);
        let lam = r["perron"].as_array().unwrap();
        assert!((lam[0].as_f64().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ergodic_of_free_system() {
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment_kind": "ergodic",
                "system": {"grid": {"dim": 1, "n": 16}, "coupling": "symmetric2",
                           "hamiltonians": [{"id": "quadratic_eikonal"}, {"id": "quadratic_eikonal"}]},
                "solver": {"discount": {"lambdas": [0.1, 0.05]}}}"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg, Some(dir.path())).unwrap();
        for c in out.summary["c"].as_array().unwrap() {
            assert!(c.as_f64().unwrap().abs() < 1e-12);
        }
        assert!(dir.path().join("manifest.json").exists());
        assert!(dir.path().join("ergodic/v0.bin").exists());
    }

    #[test]
    fn divergence_maps_to_exit_3() {
        let e = Error::Divergence {
            t: 0.0,
            component: 0,
            node: 0,
            value: f64::NAN,
        };
        assert_eq!(exit_code_for(&e), EXIT_DIVERGENCE);
        assert_eq!(exit_code_for(&Error::Config("x".into())), EXIT_CONFIG);
    }
}
