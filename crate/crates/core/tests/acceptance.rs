//! Acceptance criteria, one line per criterion. Tolerances are pinned here.
//!
//! Run with `cargo test --release --test acceptance` for a faster pass; the
//! lines are written straight to stdout so they show without `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use hjsys::coupling::{analyze, constant_solution, perron_vector, CouplingMatrix};
use hjsys::diagnostics::{
    component_gap_decay, diagnose, monotone_tail, normalized_distance, profile_distances, DiagnosticsConfig,
};
use hjsys::ergodic::{estimate_ergodic_constant, long_time_constant, DiscountSchedule, ErgodicResult};
use hjsys::evolution::{comparison_check, solve, EvolutionConfig, HJSystem, SystemState, Trajectory};
use hjsys::experiment::{
    diff_mini_potentials, largenew_potentials, nonconvex_suite_system, occupation_spec, simulate_probes,
    PolicyChoice, Probe, SimulateConfig, MC_PROBES,
};
use hjsys::grid::{Grid, GridFunction, Point};
use hjsys::hamiltonian::{make_quadratic_eikonal, Hamiltonian};
use hjsys::switching::{estimate_value, linear_eikonal_spec, FixedAction};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 256;
const FORMULA_TOL: f64 = 0.02;
const RUNTIME_LIMIT_S: f64 = 60.0;
const KER_D_TOL: f64 = 5e-3;
const T_LONG: f64 = 40.0;
const T_TAIL: f64 = 30.0;
const PROFILE_FACTOR: f64 = 5.0;
const TERMINAL_FACTOR: f64 = 10.0;
const P_ETA_FACTOR: f64 = 5.0;
const GAP_SLACK_FACTOR: f64 = 10.0;
const GAP_RATE_MIN: f64 = 1.9;
const COMPARISON_PAIRS: usize = 50;
const COMPARISON_PER_STEP: f64 = 1e-10;
const RANDOM_COUPLINGS: usize = 200;
const COUPLING_RESIDUAL: f64 = 1e-10;
const M_FIT_TOL: f64 = 0.05;
const LIP_SPREAD_TOL: f64 = 0.10;
const MC_SAMPLES: usize = 10_000;
const MC_REL_TOL: f64 = 0.05;
const MC_STD_ERRORS: f64 = 3.0;
const ODE_FACTOR: f64 = 5.0;

struct Ledger {
    lines: Vec<(usize, bool, String)>,
}

impl Ledger {
    fn record(&mut self, id: usize, ok: bool, detail: String) {
        let line = format!("criterion {id:>2} [{}] {detail}", if ok { "PASS" } else { "FAIL" });
        // bypasses the test harness capture
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        self.lines.push((id, ok, line));
    }
}

fn cos_series(constant: f64, a: f64) -> impl Fn(&Point) -> f64 + Send + Sync + Clone + 'static {
    move |x: &Point| constant + a * (2.0 * PI * x[0]).cos()
}

fn quad(f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Hamiltonian {
    make_quadratic_eikonal(1, Arc::new(f))
}

fn symmetric() -> CouplingMatrix {
    CouplingMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()
}

/// `f_1 = 1.5 − cos 2πx`, `f_2 = 2 − 2 cos 2πx`.
fn eikonal_system() -> HJSystem {
    HJSystem::new(
        vec![quad(cos_series(1.5, -1.0)), quad(cos_series(2.0, -2.0))],
        symmetric(),
        Grid::one_d(N).unwrap(),
    )
    .unwrap()
}

fn initial_pair(grid: Grid) -> (SystemState, SystemState) {
    let zero = SystemState::constants(grid, &[0.0, 0.0]);
    let wavy = SystemState::sample(
        grid,
        &[|x: &Point| 0.3 * (2.0 * PI * x[0]).sin(), |x: &Point| 0.2 * (4.0 * PI * x[0]).cos()],
    )
    .unwrap();
    (zero, wavy)
}

fn tail_profile(traj: &Trajectory, c: f64) -> f64 {
    profile_distances(traj, &[c, c])
        .unwrap()
        .into_iter()
        .filter(|(t, _)| *t >= T_TAIL - 1e-9)
        .map(|(_, d)| d)
        .fold(0.0, f64::max)
}

/// Large-time profile criterion shared by items 3 and 5.
fn profile_convergence(system: &HJSystem, c: f64) -> (bool, String) {
    let grid = *system.grid();
    let h = grid.h();
    let (zero, wavy) = initial_pair(grid);
    let cfg = EvolutionConfig::new(T_LONG, 0.5);
    let ta = solve(system, &zero, &cfg).unwrap();
    let tb = solve(system, &wavy, &cfg).unwrap();
    let pa = tail_profile(&ta, c);
    let pb = tail_profile(&tb, c);
    let agree = normalized_distance(ta.last(), tb.last(), &[0.0, 0.0]).unwrap();
    let ok = pa <= PROFILE_FACTOR * h && pb <= PROFILE_FACTOR * h && agree <= TERMINAL_FACTOR * h;
    (
        ok,
        format!(
            "tail sup |u+ct-u(T)| = {pa:.2e}, {pb:.2e} (<= {:.2e}); terminal agreement {agree:.2e} (<= {:.2e})",
            PROFILE_FACTOR * h,
            TERMINAL_FACTOR * h
        ),
    )
}

fn criteria_1_2_9(ledger: &mut Ledger) {
    let system = eikonal_system();
    // f_1 + f_2 = 3.5 - 3 cos with Λ = (1/2, 1/2): min of the average is 1/4 at x = 0
    let formula = -0.25;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let res: ErgodicResult = pool
        .install(|| estimate_ergodic_constant(&system, &DiscountSchedule::default()))
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let traj = solve(
        &system,
        &SystemState::constants(*system.grid(), &[0.0, 0.0]),
        &EvolutionConfig::new(T_LONG, 0.5),
    )
    .unwrap();
    let lt = long_time_constant(&traj, &[0.0, 0.0], 10.0).unwrap();
    let err = (res.c[0] - formula).abs();
    let lt_err = (lt[0] - res.c[0]).abs();
    ledger.record(
        1,
        err <= FORMULA_TOL && lt_err <= FORMULA_TOL && elapsed <= RUNTIME_LIMIT_S,
        format!(
            "c_1 = {:.5} vs -0.25 (err {err:.2e} <= {FORMULA_TOL}); long-time {:.5} (diff {lt_err:.2e}); {elapsed:.1}s single-threaded (<= {RUNTIME_LIMIT_S}s)",
            res.c[0], lt[0]
        ),
    );

    let spread = res.c.iter().map(|c| (c - res.c[0]).abs()).fold(0.0, f64::max);
    ledger.record(2, spread <= KER_D_TOL, format!("max_i |c_i - c_1| = {spread:.2e} (<= {KER_D_TOL})"));

    // M from the largest λ, then every λ checked against it
    let rows = &res.per_lambda;
    let m_fit = rows[0].lambda * rows[0].sup_v;
    let worst_ratio = rows.iter().map(|r| r.lambda * r.sup_v / m_fit).fold(0.0, f64::max);
    let min_v = rows.iter().map(|r| r.min_v).fold(f64::INFINITY, f64::min);
    let lmax = rows.iter().map(|r| r.lipschitz).fold(0.0, f64::max);
    let lmin = rows.iter().map(|r| r.lipschitz).fold(f64::INFINITY, f64::min);
    let lip_spread = (lmax - lmin) / lmax;
    ledger.record(
        9,
        worst_ratio <= 1.0 + M_FIT_TOL && min_v >= 0.0 && lip_spread <= LIP_SPREAD_TOL,
        format!(
            "max lambda sup v / M = {worst_ratio:.4} (<= {}); min v = {min_v:.3e} (>= 0); Lipschitz spread {lip_spread:.3e} (<= {LIP_SPREAD_TOL})",
            1.0 + M_FIT_TOL
        ),
    );
}

fn criterion_3(ledger: &mut Ledger) {
    let (ok, detail) = profile_convergence(&eikonal_system(), -0.25);
    ledger.record(3, ok, detail);
}

fn criterion_4(ledger: &mut Ledger) {
    let system = nonconvex_suite_system(N).build().unwrap();
    let grid = *system.grid();
    let (_, wavy) = initial_pair(grid);
    let traj = solve(&system, &wavy, &EvolutionConfig::new(T_LONG, 0.5)).unwrap();
    let slack = P_ETA_FACTOR * (grid.h() + traj.dt);
    let c = [0.0, 0.0];
    let cfg = DiagnosticsConfig {
        etas: vec![0.05, 0.1, 0.2],
        ..Default::default()
    };
    let report = diagnose(&system, &traj, &c, &cfg).unwrap();
    let tail = monotone_tail(&traj, &c, slack).unwrap();
    let p = cfg
        .etas
        .iter()
        .map(|&eta| report.p_eta_after(eta, T_TAIL))
        .fold(0.0, f64::max);
    let compact = system.hamiltonians().iter().all(|h| h.compact_set().is_some());
    ledger.record(
        4,
        compact && tail.passed && p <= slack,
        format!(
            "K nonempty: {compact}; monotone tail min increment {:.2e} (>= -{slack:.2e}); max P_eta for t >= {T_TAIL} = {p:.2e} (<= {slack:.2e})",
            tail.min_increment
        ),
    );
}

fn criterion_5(ledger: &mut Ledger) {
    let [f1, f2] = diff_mini_potentials();
    let (a, b) = (f1.clone(), f2.clone());
    let system = HJSystem::new(
        vec![quad(move |x: &Point| a.eval(x)), quad(move |x: &Point| b.eval(x))],
        symmetric(),
        Grid::one_d(N).unwrap(),
    )
    .unwrap();
    let grid = *system.grid();
    // different minimizers, so S is empty
    let g1 = GridFunction::sample(grid, |x| f1.eval(x)).unwrap();
    let g2 = GridFunction::sample(grid, |x| f2.eval(x)).unwrap();
    let argmin = |g: &GridFunction| {
        let m = g.min();
        (0..grid.len()).filter(|&i| g.values()[i] <= m + 1e-12).collect::<Vec<_>>()
    };
    let disjoint = argmin(&g1).iter().all(|i| !argmin(&g2).contains(i));
    let res = estimate_ergodic_constant(&system, &DiscountSchedule::default()).unwrap();
    let (ok, detail) = profile_convergence(&system, res.c[0]);
    ledger.record(5, ok && disjoint, format!("S empty: {disjoint}; c = {:.5}; {detail}", res.c[0]));
}

fn criterion_6(ledger: &mut Ledger) {
    let grid = Grid::one_d(N).unwrap();
    let h = quad(cos_series(1.0, -1.0));
    let system = HJSystem::new(vec![h.clone(), h], symmetric(), grid).unwrap();
    let cfg = EvolutionConfig::new(5.0, 0.05);
    let u0 = SystemState::sample(grid, &[|x: &Point| (2.0 * PI * x[0]).sin(), |_: &Point| 0.0]).unwrap();
    let traj = solve(&system, &u0, &cfg).unwrap();
    let slack = GAP_SLACK_FACTOR * (grid.h() + traj.dt);
    // Φ(t) = sup |u_1 - u_2|, recomputed here from the snapshots
    let phi = |s: &SystemState| {
        s.components[0]
            .values()
            .iter()
            .zip(s.components[1].values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let phi0 = phi(&traj.snapshots[0]);
    let excess = traj
        .snapshots
        .iter()
        .map(|s| phi(s) - phi0 * (-2.0 * s.t).exp() - slack)
        .fold(f64::NEG_INFINITY, f64::max);
    let flat = solve(&system, &SystemState::constants(grid, &[1.0, 0.0]), &cfg).unwrap();
    let gap = component_gap_decay(&system, &flat, 1e-12).unwrap();
    // least squares on log Φ, independent of the library fit
    let pts: Vec<(f64, f64)> = flat
        .snapshots
        .iter()
        .map(|s| (s.t, phi(s)))
        .filter(|(_, p)| *p > 1e-12)
        .map(|(t, p)| (t, p.ln()))
        .collect();
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mt) * (p.1 - my), a.1 + (p.0 - mt).powi(2)));
    let rate = -num / den;
    ledger.record(
        6,
        excess <= 0.0 && rate >= GAP_RATE_MIN && gap.delta_rate == Some(2.0),
        format!(
            "max Phi(t) - Phi(0)e^(-2t) - slack = {excess:.2e} (<= 0, slack {slack:.2e}); fitted rate {rate:.4} (>= {GAP_RATE_MIN}); delta = {:?}",
            gap.delta_rate
        ),
    );
}

fn random_series(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    (rng.gen_range(-1.0..1.0), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2))
}

fn criterion_7(ledger: &mut Ledger) {
    let grid = Grid::one_d(64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..COMPARISON_PAIRS {
        let (r1, r2) = (rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0));
        let rows = vec![vec![r1, -r1], vec![-r2, r2]];
        let (a1, a2) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let system = HJSystem::new(
            // slopes of u0 and v0 stay below 6π · 0.2 · 2 < 8
            vec![
                quad(cos_series(a1, -a1)).with_p_radius(8.0).unwrap(),
                quad(cos_series(a2, -0.5 * a2)).with_p_radius(8.0).unwrap(),
            ],
            CouplingMatrix::from_rows(&rows).unwrap(),
            grid,
        )
        .unwrap();
        let comps = |rng: &mut ChaCha8Rng| {
            (0..2)
                .map(|_| {
                    let (c, s1, c2) = random_series(rng);
                    GridFunction::sample(grid, move |x| c + s1 * (2.0 * PI * x[0]).sin() + c2 * (4.0 * PI * x[0]).cos())
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        let u0 = comps(&mut rng);
        let bump = comps(&mut rng);
        // v0 = u0 + |bump| keeps the pair ordered
        let v0: Vec<GridFunction> = u0
            .iter()
            .zip(&bump)
            .map(|(u, b)| {
                GridFunction::from_values(grid, u.values().iter().zip(b.values()).map(|(a, d)| a + d.abs()).collect())
                    .unwrap()
            })
            .collect();
        let cfg = EvolutionConfig::new(1.0, 0.25);
        let tu = solve(&system, &SystemState::new(0.0, u0).unwrap(), &cfg).unwrap();
        let tv = solve(&system, &SystemState::new(0.0, v0).unwrap(), &cfg).unwrap();
        let rep = comparison_check(&tu, &tv).unwrap();
        let allowed = COMPARISON_PER_STEP * tu.steps as f64;
        worst = worst.max(rep.worst_violation / allowed);
        ok &= rep.worst_violation <= allowed;
    }
    ledger.record(
        7,
        ok,
        format!("{COMPARISON_PAIRS} ordered pairs; worst violation / (1e-10 * steps) = {worst:.2e} (<= 1)"),
    );
}

/// Strong connectivity by subset enumeration: every proper nonempty subset has an outgoing edge.
fn brute_irreducible(d: &DMatrix<f64>) -> bool {
    let m = d.nrows();
    (1..(1u32 << m) - 1).all(|mask| {
        (0..m)
            .filter(|i| mask >> i & 1 == 1)
            .any(|i| (0..m).filter(|j| mask >> j & 1 == 0).any(|j| d[(i, j)] != 0.0))
    })
}

fn random_monotone(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = rng.gen_range(1..=6);
    let density = rng.gen_range(0.15..0.9);
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j && rng.gen_bool(density) {
                d[(i, j)] = -rng.gen_range(0.1..3.0);
            }
        }
        let row: f64 = (0..m).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -row;
    }
    d
}

fn criterion_8(ledger: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut mismatches, mut irreducible) = (0usize, 0usize);
    let (mut perron_res, mut solve_res) = (0.0f64, 0.0f64);
    for _ in 0..RANDOM_COUPLINGS {
        let d = random_monotone(&mut rng);
        let m = d.nrows();
        let truth = brute_irreducible(&d);
        let report = analyze(&d).unwrap();
        if report.irreducible != truth {
            mismatches += 1;
        }
        if !truth {
            continue;
        }
        irreducible += 1;
        let lam = perron_vector(&d).unwrap().lambda;
        let r = (d.transpose() * nalgebra::DVector::from_vec(lam.clone())).amax();
        perron_res = perron_res.max(r);
        if lam.iter().any(|&l| l <= 0.0) {
            mismatches += 1;
        }
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (u, a) = constant_solution(&d, &b).unwrap();
        let du = &d * nalgebra::DVector::from_vec(u);
        let res = (0..m).map(|i| (du[i] - (b[i] - a)).abs()).fold(0.0, f64::max);
        solve_res = solve_res.max(res);
    }
    ledger.record(
        8,
        mismatches == 0 && perron_res <= COUPLING_RESIDUAL && solve_res <= COUPLING_RESIDUAL,
        format!(
            "{RANDOM_COUPLINGS} matrices ({irreducible} irreducible): {mismatches} oracle mismatches; max |D^T L| = {perron_res:.2e}; max constant-solution residual = {solve_res:.2e} (<= {COUPLING_RESIDUAL:e})"
        ),
    );
}

fn criterion_10(ledger: &mut Ledger) {
    let cfg = SimulateConfig {
        spec: linear_eikonal_spec(1, &largenew_potentials(), 1.0, 64),
        samples: MC_SAMPLES,
        seed: 2024,
        horizon: 2.0,
        probes: MC_PROBES.iter().map(|&(x, mode)| Probe { x: [x, 0.0], mode }).collect(),
        grid_n: N,
        dt_sim: None,
        policy: PolicyChoice::Greedy,
        rel_tol: MC_REL_TOL,
    };
    let probes = simulate_probes(&cfg).unwrap();
    let worst = probes
        .iter()
        .map(|p| (p.mc_mean - p.pde).abs() / p.pde.abs())
        .fold(0.0, f64::max);
    // time spent in mode 2 starting from mode 1, rates 1: T/2 - (1 - e^{-2T})/4
    let t: f64 = 2.0;
    let exact = t / 2.0 - (1.0 - (-2.0 * t).exp()) / 4.0;
    let est = estimate_value(&occupation_spec(), &FixedAction(0), [0.0, 0.0], 0, t, 0.01, MC_SAMPLES, 7).unwrap();
    let z = (est.mean - exact).abs() / est.std_error;
    ledger.record(
        10,
        worst <= MC_REL_TOL && z <= MC_STD_ERRORS,
        format!(
            "{} probes, worst relative MC/PDE error {worst:.2e} (<= {MC_REL_TOL}); occupation time {:.4} vs {exact:.4} = {z:.2} std errors (<= {MC_STD_ERRORS})",
            probes.len(),
            est.mean
        ),
    );
}

fn criterion_11(ledger: &mut Ledger) {
    let grid = Grid::one_d(16).unwrap();
    let f = [1.0, 0.3, -0.4];
    let rows = vec![
        vec![2.0, -1.5, -0.5],
        vec![-0.25, 0.75, -0.5],
        vec![-1.0, 0.0, 1.0],
    ];
    let hams = f.iter().map(|&c| quad(move |_: &Point| c)).collect();
    let system = HJSystem::new(hams, CouplingMatrix::from_rows(&rows).unwrap(), grid).unwrap();
    let u0 = [0.5, -1.0, 2.0];
    let traj = solve(&system, &SystemState::constants(grid, &u0), &EvolutionConfig::new(5.0, 0.25)).unwrap();
    // u' = f - D u, so (u, 1)' = [[-D, f], [0, 0]] (u, 1)
    let mut a = DMatrix::zeros(4, 4);
    for i in 0..3 {
        for j in 0..3 {
            a[(i, j)] = -rows[i][j];
        }
        a[(i, 3)] = f[i];
    }
    let y0 = nalgebra::DVector::from_vec(vec![u0[0], u0[1], u0[2], 1.0]);
    let mut worst = 0.0f64;
    for s in &traj.snapshots {
        let y = (&a * s.t).exp() * &y0;
        for i in 0..3 {
            for v in s.components[i].values() {
                worst = worst.max((v - y[i]).abs());
            }
        }
    }
    let limit = ODE_FACTOR * traj.dt;
    ledger.record(
        11,
        worst <= limit,
        format!("sup error vs matrix exponential on [0,5] = {worst:.2e} (<= 5 dt = {limit:.2e})"),
    );
}

#[test]
fn acceptance_criteria() {
    let mut ledger = Ledger { lines: Vec::new() };
    criteria_1_2_9(&mut ledger);
    criterion_3(&mut ledger);
    criterion_4(&mut ledger);
    criterion_5(&mut ledger);
    criterion_6(&mut ledger);
    criterion_7(&mut ledger);
    criterion_8(&mut ledger);
    criterion_10(&mut ledger);
    criterion_11(&mut ledger);
    ledger.lines.sort_by_key(|l| l.0);
    let failed: Vec<&String> = ledger.lines.iter().filter(|l| !l.1).map(|l| &l.2).collect();
    assert_eq!(ledger.lines.len(), 11);
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\n"));
}
