//! Ergodic constants and correctors by the vanishing-discount method, plus a
//! long-time slope estimator used as an independent cross-check.
//!
//! For each λ the discounted system `λv + H_i(x,Dv_i) + Σ_j d_ij v_j = 0` is
//! reached by pseudo-time marching. The marching removes the spatial and
//! cross-component mean of the rate each step, which kills the slowly decaying
//! constant mode (decay rate λ); the missing constant is restored exactly at the
//! end because both the flux and the coupling ignore a common additive constant.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{cfl_dt, EvolutionConfig, HJSystem, Stepper, Trajectory};
use crate::grid::{GridFunction, Point};
use crate::hamiltonian::ClassTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountSchedule {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_tol")]
    pub steady_state_tol: f64,
    #[serde(default)]
    pub anchor_x: Point,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Pseudo-time budget per λ.
    #[serde(default = "default_budget")]
    pub max_time: f64,
    /// Allowed `max_i |c_i - c_1|` before a warning is attached.
    #[serde(default = "default_cross_tol")]
    pub cross_tol: f64,
}

fn default_lambdas() -> Vec<f64> {
    (0..7).map(|k| 0.1 * 0.5f64.powi(k)).collect()
}
fn default_tol() -> f64 {
    1e-8
}
fn default_cfl() -> f64 {
    0.5
}
fn default_budget() -> f64 {
    400.0
}
fn default_cross_tol() -> f64 {
    5e-3
}

impl Default for DiscountSchedule {
    fn default() -> Self {
        Self {
            lambdas: default_lambdas(),
            steady_state_tol: default_tol(),
            anchor_x: [0.0, 0.0],
            cfl: default_cfl(),
            max_time: default_budget(),
            cross_tol: default_cross_tol(),
        }
    }
}

impl DiscountSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Config("lambdas: schedule is empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::Config(format!("lambdas: {l} is outside (0, 1)")));
        }
        if self.lambdas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("lambdas: must be strictly decreasing".into()));
        }
        if !(self.steady_state_tol > 0.0) {
            return Err(Error::Config("steady_state_tol: must be positive".into()));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::Config("max_time: must be positive".into()));
        }
        Ok(())
    }

    pub fn lambda_min(&self) -> f64 {
        *self.lambdas.last().expect("validated schedule")
    }
}

/// One discounted steady state.
#[derive(Debug, Clone)]
pub struct DiscountedSolution {
    pub lambda: f64,
    pub v: Vec<GridFunction>,
    /// Pseudo time spent marching.
    pub time: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    /// `-λ v_i^λ(x*)` per component.
    pub neg_lambda_v_anchor: Vec<f64>,
    pub sup_v: f64,
    pub min_v: f64,
    pub lipschitz: f64,
    pub time: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicResult {
    pub c: Vec<f64>,
    /// `-λ_min v_i(x*)` before extrapolation.
    pub c_raw: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<GridFunction>,
    pub residual: f64,
    pub per_lambda: Vec<LambdaRow>,
    pub cross_spread: f64,
    pub warnings: Vec<String>,
}

impl ErgodicResult {
    /// `result.json` plus `v{i}.bin` and `v{i}.csv` per component.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("result.json"), serde_json::to_string_pretty(self)?)?;
        for (i, v) in self.v.iter().enumerate() {
            v.save_binary(&dir.join(format!("v{i}.bin")))?;
            v.save_csv(&dir.join(format!("v{i}.csv")))?;
        }
        Ok(())
    }

    /// Checks the bound `0 ≤ v^λ ≤ M/λ` with `M` fitted at the largest λ.
    pub fn discount_bounds(&self, rel_tol: f64) -> DiscountBoundReport {
        discount_bounds(&self.per_lambda, rel_tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountBoundReport {
    pub m_fit: f64,
    /// `max_λ λ·sup v^λ / M`.
    pub max_ratio: f64,
    pub min_value: f64,
    /// `(max - min) / max` of the discrete Lipschitz constants.
    pub lipschitz_spread: f64,
    pub passed: bool,
}

pub fn discount_bounds(rows: &[LambdaRow], rel_tol: f64) -> DiscountBoundReport {
    let m_fit = rows[0].lambda * rows[0].sup_v;
    let max_ratio = rows
        .iter()
        .map(|r| r.lambda * r.sup_v / m_fit)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_value = rows.iter().map(|r| r.min_v).fold(f64::INFINITY, f64::min);
    let lmax = rows.iter().map(|r| r.lipschitz).fold(0.0, f64::max);
    let lmin = rows.iter().map(|r| r.lipschitz).fold(f64::INFINITY, f64::min);
    let lipschitz_spread = if lmax > 0.0 { (lmax - lmin) / lmax } else { 0.0 };
    DiscountBoundReport {
        m_fit,
        max_ratio,
        min_value,
        lipschitz_spread,
        passed: max_ratio <= 1.0 + rel_tol && min_value >= -1e-9,
    }
}

fn require_coercive(system: &HJSystem) -> Result<()> {
    if let Some(h) = system.hamiltonians().iter().find(|h| !h.has_tag(ClassTag::Coercive)) {
        return Err(Error::Structure(format!(
            "Hamiltonian '{}' is not tagged coercive",
            h.name()
        )));
    }
    Ok(())
}

fn discounted_dt(system: &HJSystem, lambda: f64, schedule: &DiscountSchedule) -> Result<f64> {
    let cfg = EvolutionConfig {
        cfl: schedule.cfl,
        ..Default::default()
    };
    let dt = cfl_dt(system, &cfg)?;
    Ok(dt.min(schedule.cfl / (system.max_diagonal() + lambda)))
}

/// Steady state of the discounted system for one λ.
pub fn solve_discounted(system: &HJSystem, lambda: f64, schedule: &DiscountSchedule) -> Result<Vec<GridFunction>> {
    Ok(solve_discounted_from(system, lambda, schedule, None)?.v)
}

/// As [`solve_discounted`], optionally warm-started from a previous `v`.
pub fn solve_discounted_from(
    system: &HJSystem,
    lambda: f64,
    schedule: &DiscountSchedule,
    init: Option<&[GridFunction]>,
) -> Result<DiscountedSolution> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Config(format!("lambda {lambda} is outside (0, 1)")));
    }
    require_coercive(system)?;
    let grid = *system.grid();
    let m = system.m();
    let mut w: Vec<Vec<f64>> = match init {
        Some(v) => {
            if v.len() != m {
                return Err(Error::Structure("warm start has the wrong component count".into()));
            }
            v.iter().map(|g| g.values().to_vec()).collect()
        }
        None => vec![vec![0.0; grid.len()]; m],
    };
    let dt = discounted_dt(system, lambda, schedule)?;
    let max_steps = (schedule.max_time / dt).ceil() as usize;
    let record_every = ((1.0 / dt).round() as usize).max(1);
    let total = (m * grid.len()) as f64;
    let mut stepper = Stepper::new(system);
    let mut g = vec![vec![0.0; grid.len()]; m];
    let mut history = Vec::new();
    let mut steps = 0usize;
    loop {
        stepper.compute_rates(&w);
        let mut mean = 0.0;
        for ((gi, ri), wi) in g.iter_mut().zip(stepper.rate()).zip(&w) {
            for ((gv, r), v) in gi.iter_mut().zip(ri).zip(wi) {
                *gv = r + lambda * v;
                mean += *gv;
            }
        }
        mean /= total;
        let resid = g
            .iter()
            .flat_map(|gi| gi.iter())
            .map(|v| (v - mean).abs())
            .fold(0.0, f64::max);
        if !resid.is_finite() {
            return Err(Error::Divergence {
                t: steps as f64 * dt,
                component: 0,
                node: 0,
                value: resid,
            });
        }
        if steps % record_every == 0 {
            history.push(resid);
        }
        if resid < schedule.steady_state_tol {
            let shift = mean / lambda;
            let v = w
                .into_iter()
                .map(|wi| GridFunction::from_values(grid, wi.into_iter().map(|x| x - shift).collect()))
                .collect::<Result<Vec<_>>>()?;
            return Ok(DiscountedSolution {
                lambda,
                v,
                time: steps as f64 * dt,
                steps,
            });
        }
        if steps >= max_steps {
            return Err(Error::Convergence {
                message: format!(
                    "lambda {lambda}: no steady state within {} time units (residual {resid:.3e})",
                    schedule.max_time
                ),
                history,
            });
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            for (v, gv) in wi.iter_mut().zip(gi) {
                *v -= dt * (gv - mean);
            }
        }
        steps += 1;
    }
}

fn lambda_row(sol: &DiscountedSolution, anchor: &Point) -> LambdaRow {
    LambdaRow {
        lambda: sol.lambda,
        neg_lambda_v_anchor: sol.v.iter().map(|v| -sol.lambda * v.interpolate(anchor)).collect(),
        sup_v: sol.v.iter().map(|v| v.max()).fold(f64::NEG_INFINITY, f64::max),
        min_v: sol.v.iter().map(|v| v.min()).fold(f64::INFINITY, f64::min),
        lipschitz: sol.v.iter().map(|v| v.lipschitz()).fold(0.0, f64::max),
        time: sol.time,
        steps: sol.steps,
    }
}

/// Runs the whole schedule (warm-starting each λ from the previous one) and
/// extrapolates `-λ v^λ(x*)` linearly in λ over the two smallest values.
pub fn estimate_ergodic_constant(system: &HJSystem, schedule: &DiscountSchedule) -> Result<ErgodicResult> {
    schedule.validate()?;
    let mut rows = Vec::new();
    let mut prev: Option<DiscountedSolution> = None;
    for &lambda in &schedule.lambdas {
        // Rescale the previous solution so that λv stays roughly fixed.
        let init = prev.as_ref().map(|p| {
            let mean = p.v.iter().map(|v| v.values().iter().sum::<f64>()).sum::<f64>()
                / (p.v.len() * system.grid().len()) as f64;
            let shift = mean * (p.lambda / lambda - 1.0);
            p.v.iter().map(|v| v.add_scalar(shift)).collect::<Vec<_>>()
        });
        let sol = solve_discounted_from(system, lambda, schedule, init.as_deref())?;
        rows.push(lambda_row(&sol, &schedule.anchor_x));
        prev = Some(sol);
    }
    let last = prev.expect("non-empty schedule");
    let c_raw = rows.last().unwrap().neg_lambda_v_anchor.clone();
    let c = if rows.len() >= 2 {
        let a = &rows[rows.len() - 2];
        let b = &rows[rows.len() - 1];
        a.neg_lambda_v_anchor
            .iter()
            .zip(&b.neg_lambda_v_anchor)
            .map(|(ca, cb)| (a.lambda * cb - b.lambda * ca) / (a.lambda - b.lambda))
            .collect()
    } else {
        c_raw.clone()
    };

    let anchor_val = last.v[0].interpolate(&schedule.anchor_x);
    let v: Vec<GridFunction> = last.v.iter().map(|vi| vi.add_scalar(-anchor_val)).collect();
    let residual = stationary_residual(system, &v, &c)?;

    let cross_spread = c.iter().map(|ci: &f64| (ci - c[0]).abs()).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    if cross_spread > schedule.cross_tol {
        warnings.push(format!(
            "cross-component spread {cross_spread:.3e} exceeds {:.1e}: coupling may be reducible or the grid under-resolved",
            schedule.cross_tol
        ));
    }
    if rows.len() >= 2 {
        warnings.push("c extrapolated assuming an O(lambda) error model".into());
    }
    Ok(ErgodicResult {
        c,
        c_raw,
        v,
        residual,
        per_lambda: rows,
        cross_spread,
        warnings,
    })
}

/// `sup |H_i(x, Dv_i) + Σ_j d_ij v_j - c_i|` with the scheme's numerical flux.
pub fn stationary_residual(system: &HJSystem, v: &[GridFunction], c: &[f64]) -> Result<f64> {
    if v.len() != system.m() || c.len() != system.m() {
        return Err(Error::Structure("component count mismatch".into()));
    }
    let raw: Vec<Vec<f64>> = v.iter().map(|g| g.values().to_vec()).collect();
    let mut stepper = Stepper::new(system);
    stepper.compute_rates(&raw);
    Ok(stepper
        .rate()
        .iter()
        .zip(c)
        .flat_map(|(r, ci)| r.iter().map(move |x| (x - ci).abs()))
        .fold(0.0, f64::max))
}

/// Least-squares slope of `-u_i(x*, t)` over snapshots with `t ≥ T/2`.
pub fn long_time_constant(traj: &Trajectory, anchor: &Point, min_window: f64) -> Result<Vec<f64>> {
    let t_end = traj.last().t;
    let start = t_end / 2.0;
    let window = t_end - start;
    let snaps: Vec<_> = traj.snapshots.iter().filter(|s| s.t >= start).collect();
    if window < min_window || snaps.len() < 2 {
        return Err(Error::Range(format!(
            "trailing window {window} with {} snapshots is shorter than {min_window}",
            snaps.len()
        )));
    }
    let n = snaps.len() as f64;
    let tm = snaps.iter().map(|s| s.t).sum::<f64>() / n;
    let stt = snaps.iter().map(|s| (s.t - tm).powi(2)).sum::<f64>();
    Ok((0..traj.m())
        .map(|i| {
            let ys: Vec<f64> = snaps.iter().map(|s| -s.components[i].interpolate(anchor)).collect();
            let ym = ys.iter().sum::<f64>() / n;
            snaps.iter().zip(&ys).map(|(s, y)| (s.t - tm) * (y - ym)).sum::<f64>() / stt
        })
        .collect())
}
