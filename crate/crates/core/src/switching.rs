//! Monte Carlo for the controlled process with random mode switching whose
//! value functions solve the weakly coupled system.
//!
//! Between switches the state follows `ẋ = b_ν(x, a)` (forward Euler, periodic
//! wrap); the mode jumps after an exponential holding time with rate
//! `Σ_{j≠i} γ_ij` to `j` with probability `γ_ij / Σ_k γ_ik`. A path pays
//! `∫ ℓ_ν(x, a) ds + u0_ν(x_T)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::fourier::FourierSeries;
use crate::grid::{wrap_unit, Point};
use crate::hamiltonian::{ClassTag, Hamiltonian};

/// Paths per random stream in [`estimate_value`].
pub const BATCH_SIZE: usize = 250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    /// `b(x, a) = speed(x)·a`.
    Action {
        #[serde(default = "unit_series")]
        speed: FourierSeries,
    },
    /// `b(x, a) = v`, independent of the action.
    Constant { velocity: Vec<f64> },
}

fn unit_series() -> FourierSeries {
    FourierSeries::constant(1.0)
}

impl Dynamics {
    #[inline]
    fn velocity(&self, x: &Point, a: &Point) -> Point {
        match self {
            Dynamics::Action { speed } => {
                let s = speed.eval(x);
                [s * a[0], s * a[1]]
            }
            Dynamics::Constant { velocity } => [
                velocity.first().copied().unwrap_or(0.0),
                velocity.get(1).copied().unwrap_or(0.0),
            ],
        }
    }
}

/// Data of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub dynamics: Dynamics,
    /// `ℓ(x, a) = cost(x) + action_quadratic·|a|²`.
    pub cost: FourierSeries,
    #[serde(default)]
    pub action_quadratic: f64,
    #[serde(default)]
    pub terminal: FourierSeries,
}

impl ModeSpec {
    #[inline]
    fn running_cost(&self, base: f64, a: &Point) -> f64 {
        base + self.action_quadratic * (a[0] * a[0] + a[1] * a[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingProcessSpec {
    pub dim: usize,
    pub modes: Vec<ModeSpec>,
    /// `γ_ij` for `j ≠ i`; diagonal entries are ignored.
    pub rates: Vec<Vec<f64>>,
    /// Finite action list; each entry has `dim` coordinates.
    pub controls: Vec<Vec<f64>>,
}

impl SwitchingProcessSpec {
    pub fn m(&self) -> usize {
        self.modes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if !(self.dim == 1 || self.dim == 2) {
            return Err(Error::Config(format!("dim: must be 1 or 2, got {}", self.dim)));
        }
        if m == 0 {
            return Err(Error::Config("modes: at least one mode is required".into()));
        }
        if self.rates.len() != m || self.rates.iter().any(|r| r.len() != m) {
            return Err(Error::Config(format!("rates: expected a {m}x{m} matrix")));
        }
        for (i, row) in self.rates.iter().enumerate() {
            for (j, &g) in row.iter().enumerate() {
                if i != j && !(g >= 0.0 && g.is_finite()) {
                    return Err(Error::Config(format!("rates[{i}][{j}]: must be a finite nonnegative rate")));
                }
            }
        }
        if self.controls.is_empty() {
            return Err(Error::Config("controls: control set is empty".into()));
        }
        if let Some(k) = self.controls.iter().position(|a| a.len() != self.dim) {
            return Err(Error::Config(format!("controls[{k}]: expected {} coordinates", self.dim)));
        }
        for (i, mode) in self.modes.iter().enumerate() {
            if let Dynamics::Constant { velocity } = &mode.dynamics {
                if velocity.len() != self.dim {
                    return Err(Error::Config(format!(
                        "modes[{i}].dynamics.velocity: expected {} coordinates",
                        self.dim
                    )));
                }
            }
        }
        Ok(())
    }

    fn actions(&self) -> Vec<Point> {
        self.controls
            .iter()
            .map(|a| [a[0], a.get(1).copied().unwrap_or(0.0)])
            .collect()
    }

    fn total_rate(&self, i: usize) -> f64 {
        self.rates[i].iter().enumerate().filter(|(j, _)| *j != i).map(|(_, g)| g).sum()
    }

    /// `d_ii = Σ_{j≠i} γ_ij`, `d_ij = −γ_ij`.
    pub fn derived_coupling(&self) -> Result<CouplingMatrix> {
        let m = self.m();
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { self.total_rate(i) } else { -self.rates[i][j] })
                    .collect()
            })
            .collect();
        CouplingMatrix::from_rows(&rows)
    }
}

/// `count` evenly spaced unit directions in 2D, or `count` points of `[-1, 1]`
/// (endpoints included) in 1D.
pub fn direction_controls(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => (0..count)
            .map(|k| vec![-1.0 + 2.0 * k as f64 / (count.max(2) - 1) as f64])
            .collect(),
        _ => (0..count)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
    }
}

/// `b_i = a` over `n_dir` directions, `ℓ_i = f_i`, symmetric switching at `rate`, `u0 = 0`.
pub fn linear_eikonal_spec(dim: usize, f: &[FourierSeries], rate: f64, n_dir: usize) -> SwitchingProcessSpec {
    let m = f.len();
    SwitchingProcessSpec {
        dim,
        modes: f
            .iter()
            .map(|fi| ModeSpec {
                dynamics: Dynamics::Action { speed: unit_series() },
                cost: fi.clone(),
                action_quadratic: 0.0,
                terminal: FourierSeries::default(),
            })
            .collect(),
        rates: (0..m)
            .map(|i| (0..m).map(|j| if i == j { 0.0 } else { rate }).collect())
            .collect(),
        controls: direction_controls(dim, n_dir),
    }
}

/// `H_i(x, p) = max_a [−⟨b_i(x, a), p⟩ − ℓ_i(x, a)]`.
pub fn hamiltonian_from_spec(spec: &SwitchingProcessSpec, mode: usize) -> Result<Hamiltonian> {
    spec.validate()?;
    if mode >= spec.m() {
        return Err(Error::Range(format!("mode {mode} out of range")));
    }
    let ms = spec.modes[mode].clone();
    let actions = spec.actions();
    let ms2 = ms.clone();
    let actions2 = actions.clone();
    let dim = spec.dim;
    let h = Hamiltonian::new(format!("switching_mode_{mode}"), dim, move |x, p| {
        let base = ms.cost.eval(x);
        actions
            .iter()
            .map(|a| {
                let b = ms.dynamics.velocity(x, a);
                -(b[0] * p[0] + b[1] * p[1]) - ms.running_cost(base, a)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    })
    .with_speed(move |x, _| {
        actions2
            .iter()
            .map(|a| {
                let b = ms2.dynamics.velocity(x, a);
                (b[0] * b[0] + b[1] * b[1]).sqrt()
            })
            .fold(0.0, f64::max)
    })
    .with_tags(&[ClassTag::Convex]);
    if spans_neighbourhood(spec, mode) {
        Ok(h.with_tags(&[ClassTag::Coercive]))
    } else {
        Ok(h)
    }
}

/// The velocity set contains a ball around 0 at every sampled x.
fn spans_neighbourhood(spec: &SwitchingProcessSpec, mode: usize) -> bool {
    let ms = &spec.modes[mode];
    let actions = spec.actions();
    let dirs: Vec<Point> = match spec.dim {
        1 => vec![[1.0, 0.0], [-1.0, 0.0]],
        _ => (0..32)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / 32.0;
                [th.cos(), th.sin()]
            })
            .collect(),
    };
    (0..16).all(|k| {
        let x = [k as f64 / 16.0, (k * 7 % 16) as f64 / 16.0];
        dirs.iter().all(|e| {
            actions
                .iter()
                .map(|a| {
                    let b = ms.dynamics.velocity(&x, a);
                    b[0] * e[0] + b[1] * e[1]
                })
                .fold(f64::NEG_INFINITY, f64::max)
                > 1e-12
        })
    })
}

/// Chooses an action index from `(x, mode, time to go)`.
pub trait Policy: Sync {
    fn id(&self) -> String;
    fn action(&self, x: &Point, mode: usize, time_to_go: f64) -> usize;
}

/// Always the same action.
#[derive(Debug, Clone, Copy)]
pub struct FixedAction(pub usize);

impl Policy for FixedAction {
    fn id(&self) -> String {
        format!("fixed_{}", self.0)
    }

    fn action(&self, _: &Point, _: usize, _: f64) -> usize {
        self.0
    }
}

/// Minimises `⟨b_i(x, a), Du_i(x, τ)⟩ + ℓ_i(x, a)` against a PDE trajectory,
/// where `τ` is the time to go and `Du` a central difference of the nearest snapshot.
pub struct GreedyPolicy<'a> {
    spec: &'a SwitchingProcessSpec,
    traj: &'a Trajectory,
    actions: Vec<Point>,
    cadence: f64,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(spec: &'a SwitchingProcessSpec, traj: &'a Trajectory) -> Result<Self> {
        if traj.m() != spec.m() {
            return Err(Error::Structure("trajectory and spec have different mode counts".into()));
        }
        if traj.grid().dim() != spec.dim {
            return Err(Error::Structure("trajectory and spec have different dimensions".into()));
        }
        Ok(Self {
            spec,
            traj,
            actions: spec.actions(),
            cadence: traj.config.snapshot_every,
        })
    }

    fn gradient(&self, x: &Point, mode: usize, tau: f64) -> Point {
        let k = ((tau / self.cadence).round() as usize).min(self.traj.snapshots.len() - 1);
        let u = &self.traj.snapshots[k].components[mode];
        let h = u.grid().h();
        let mut p = [0.0; 2];
        for (axis, pa) in p.iter_mut().enumerate().take(self.spec.dim) {
            let mut xp = *x;
            let mut xm = *x;
            xp[axis] += h;
            xm[axis] -= h;
            *pa = (u.interpolate(&xp) - u.interpolate(&xm)) / (2.0 * h);
        }
        p
    }
}

impl Policy for GreedyPolicy<'_> {
    fn id(&self) -> String {
        "greedy_pde".into()
    }

    fn action(&self, x: &Point, mode: usize, time_to_go: f64) -> usize {
        let p = self.gradient(x, mode, time_to_go);
        let ms = &self.spec.modes[mode];
        // cost(x) is the same for every action and drops out of the argmin
        let speed = match &ms.dynamics {
            Dynamics::Action { speed } => Some(speed.eval(x)),
            Dynamics::Constant { .. } => None,
        };
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for (k, a) in self.actions.iter().enumerate() {
            let b = match speed {
                Some(s) => [s * a[0], s * a[1]],
                None => ms.dynamics.velocity(x, a),
            };
            let v = b[0] * p[0] + b[1] * p[1] + ms.running_cost(0.0, a);
            if v < best_val {
                best_val = v;
                best = k;
            }
        }
        best
    }
}

/// A recorded path; one row per Euler substep plus the end point.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingPath {
    pub times: Vec<f64>,
    pub positions: Vec<Point>,
    pub modes: Vec<usize>,
    pub actions: Vec<usize>,
    pub cost: f64,
    pub switches: usize,
}

impl SwitchingPath {
    pub fn write_csv<W: Write>(&self, w: W, dim: usize) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        if dim == 1 {
            wr.write_record(["t", "x", "mode", "action"])?;
        } else {
            wr.write_record(["t", "x", "y", "mode", "action"])?;
        }
        for k in 0..self.times.len() {
            let mut rec = vec![self.times[k].to_string(), self.positions[k][0].to_string()];
            if dim == 2 {
                rec.push(self.positions[k][1].to_string());
            }
            rec.push(self.modes[k].to_string());
            rec.push(self.actions[k].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, dim: usize) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?, dim)
    }
}

struct Outcome {
    cost: f64,
    switches: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_path<R: Rng>(
    spec: &SwitchingProcessSpec,
    actions: &[Point],
    policy: &dyn Policy,
    x0: Point,
    mode0: usize,
    horizon: f64,
    dt_sim: f64,
    rng: &mut R,
    mut record: Option<&mut SwitchingPath>,
) -> Outcome {
    let dim = spec.dim;
    let mut x = x0;
    let mut mode = mode0;
    let mut t = 0.0;
    let mut cost = 0.0;
    let mut switches = 0;
    let mut next_switch = draw_holding(spec, mode, rng);
    while t < horizon {
        let seg_end = next_switch.min(horizon);
        while t < seg_end {
            let dt = dt_sim.min(seg_end - t);
            let k = policy.action(&x, mode, horizon - t);
            let a = &actions[k];
            let ms = &spec.modes[mode];
            if let Some(p) = record.as_deref_mut() {
                p.times.push(t);
                p.positions.push(x);
                p.modes.push(mode);
                p.actions.push(k);
            }
            cost += ms.running_cost(ms.cost.eval(&x), a) * dt;
            let b = ms.dynamics.velocity(&x, a);
            for axis in 0..dim {
                x[axis] = wrap_unit(x[axis] + dt * b[axis]);
            }
            t = if seg_end - t <= dt_sim { seg_end } else { t + dt };
        }
        if next_switch <= horizon {
            mode = draw_destination(spec, mode, rng);
            switches += 1;
            next_switch = t + draw_holding(spec, mode, rng);
        }
    }
    cost += spec.modes[mode].terminal.eval(&x);
    if let Some(p) = record {
        p.times.push(horizon);
        p.positions.push(x);
        p.modes.push(mode);
        p.actions.push(usize::MAX);
        p.cost = cost;
        p.switches = switches;
    }
    Outcome { cost, switches }
}

fn draw_holding<R: Rng>(spec: &SwitchingProcessSpec, mode: usize, rng: &mut R) -> f64 {
    let rate = spec.total_rate(mode);
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

fn draw_destination<R: Rng>(spec: &SwitchingProcessSpec, mode: usize, rng: &mut R) -> usize {
    let total = spec.total_rate(mode);
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = mode;
    for (j, &g) in spec.rates[mode].iter().enumerate() {
        if j == mode || g <= 0.0 {
            continue;
        }
        acc += g;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

fn check_start(spec: &SwitchingProcessSpec, mode0: usize, horizon: f64, dt_sim: f64) -> Result<()> {
    spec.validate()?;
    if mode0 >= spec.m() {
        return Err(Error::Range(format!("mode {mode0} out of range")));
    }
    if !(horizon >= 0.0) || !(dt_sim > 0.0) {
        return Err(Error::Config("horizon must be >= 0 and dt_sim > 0".into()));
    }
    Ok(())
}

/// One path, reproducible from `seed`.
pub fn simulate_trajectory(
    spec: &SwitchingProcessSpec,
    policy: &dyn Policy,
    x0: Point,
    mode0: usize,
    horizon: f64,
    dt_sim: f64,
    seed: u64,
) -> Result<SwitchingPath> {
    check_start(spec, mode0, horizon, dt_sim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = SwitchingPath {
        times: Vec::new(),
        positions: Vec::new(),
        modes: Vec::new(),
        actions: Vec::new(),
        cost: 0.0,
        switches: 0,
    };
    run_path(spec, &spec.actions(), policy, x0, mode0, horizon, dt_sim, &mut rng, Some(&mut path));
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    pub policy_id: String,
    /// Mean number of mode switches per path.
    pub mean_switches: f64,
}

/// Monte Carlo mean of path costs. Batch `b` draws from stream `b` of the
/// ChaCha generator seeded with `seed`, so results do not depend on threading.
#[allow(clippy::too_many_arguments)]
pub fn estimate_value(
    spec: &SwitchingProcessSpec,
    policy: &dyn Policy,
    x: Point,
    mode: usize,
    horizon: f64,
    dt_sim: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ValueEstimate> {
    check_start(spec, mode, horizon, dt_sim)?;
    if n_samples < 100 {
        return Err(Error::Config(format!("n_samples must be >= 100, got {n_samples}")));
    }
    let actions = spec.actions();
    let n_batches = n_samples.div_ceil(BATCH_SIZE);
    let batches: Vec<Vec<Outcome>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BATCH_SIZE.min(n_samples - b * BATCH_SIZE);
            (0..count)
                .map(|_| run_path(spec, &actions, policy, x, mode, horizon, dt_sim, &mut rng, None))
                .collect()
        })
        .collect();
    let outcomes: Vec<Outcome> = batches.into_iter().flatten().collect();
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.cost).sum::<f64>() / n;
    let var = outcomes.iter().map(|o| (o.cost - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ValueEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples: outcomes.len(),
        policy_id: policy.id(),
        mean_switches: outcomes.iter().map(|o| o.switches as f64).sum::<f64>() / n,
    })
}
