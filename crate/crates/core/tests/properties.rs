//! Property tests for the invariants of each module.

use std::f64::consts::PI;
use std::sync::Arc;

use hjsys::coupling::{
    constant_solution, delta_rate, ergodic_constant_formula, is_irreducible, pairwise_nonzero, perron_vector,
    CouplingMatrix,
};
use hjsys::diagnostics::{exp_transform, p_eta, profile_distances};
use hjsys::ergodic::{estimate_ergodic_constant, DiscountSchedule};
use hjsys::evolution::{solve, EvolutionConfig, HJSystem, SystemState};
use hjsys::experiment::largenew_potentials;
use hjsys::fourier::FourierSeries;
use hjsys::grid::{torus_distance, Grid, GridFunction, Point};
use hjsys::hamiltonian::make_quadratic_eikonal;
use hjsys::switching::{estimate_value, linear_eikonal_spec, simulate_trajectory, FixedAction};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_monotone(seed: u64, m: usize, density: f64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j && rng.gen_bool(density) {
                d[(i, j)] = -rng.gen_range(0.1..3.0);
            }
        }
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -off;
    }
    d
}

fn brute_irreducible(d: &DMatrix<f64>) -> bool {
    let m = d.nrows();
    (1..(1u32 << m) - 1).all(|mask| {
        (0..m)
            .filter(|i| mask >> i & 1 == 1)
            .any(|i| (0..m).filter(|j| mask >> j & 1 == 0).any(|j| d[(i, j)] != 0.0))
    })
}

/// Max pairwise gap of `exp(-tD) u0`.
fn ode_gap(d: &DMatrix<f64>, u0: &DVector<f64>, t: f64) -> f64 {
    let u = (-d * t).exp() * u0;
    u.max() - u.min()
}

fn series(constant: f64, modes: &[(i32, f64, f64)]) -> FourierSeries {
    FourierSeries::one_d(constant, modes)
}

fn small_system(n: usize, a: f64, b: f64, r1: f64, r2: f64) -> HJSystem {
    let f1 = move |x: &Point| a * (1.0 - (2.0 * PI * x[0]).cos());
    let f2 = move |x: &Point| b * (1.0 + (2.0 * PI * x[0]).sin());
    HJSystem::new(
        vec![make_quadratic_eikonal(1, Arc::new(f1)), make_quadratic_eikonal(1, Arc::new(f2))],
        CouplingMatrix::from_rows(&[vec![r1, -r1], vec![-r2, r2]]).unwrap(),
        Grid::one_d(n).unwrap(),
    )
    .unwrap()
}

fn wave(grid: Grid, c: f64, s: f64, k: f64) -> GridFunction {
    GridFunction::sample(grid, move |x| c + s * (2.0 * PI * k * x[0]).sin()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn irreducibility_matches_subset_enumeration(seed in any::<u64>(), m in 1usize..=6, density in 0.1f64..0.9) {
        let d = random_monotone(seed, m, density);
        prop_assert_eq!(is_irreducible(&d).unwrap(), brute_irreducible(&d));
    }

    #[test]
    fn perron_and_constant_solution(seed in any::<u64>(), m in 1usize..=6, t in -3.0f64..3.0) {
        let d = random_monotone(seed, m, 0.7);
        prop_assume!(brute_irreducible(&d));
        let lam = perron_vector(&d).unwrap().lambda;
        prop_assert!(lam.iter().all(|&l| l > 0.0));
        prop_assert!((d.transpose() * DVector::from_vec(lam)).amax() <= 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (u, a) = constant_solution(&d, &b).unwrap();
        let du = &d * DVector::from_vec(u.clone());
        for i in 0..m {
            prop_assert!((du[i] - (b[i] - a)).abs() <= 1e-10);
        }
        let bt: Vec<f64> = b.iter().map(|v| v + t).collect();
        let (ut, at) = constant_solution(&d, &bt).unwrap();
        prop_assert!((at - a - t).abs() <= 1e-10);
        for (x, y) in u.iter().zip(&ut) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn formula_invariant_under_rescaling(seed in any::<u64>(), m in 2usize..=5, s in 0.01f64..100.0) {
        let d = random_monotone(seed, m, 0.8);
        prop_assume!(brute_irreducible(&d));
        let grid = Grid::one_d(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let f: Vec<GridFunction> = (0..m)
            .map(|_| wave(grid, rng.gen_range(0.0..2.0), rng.gen_range(-1.0..1.0), 1.0))
            .collect();
        let c = ergodic_constant_formula(&d, &f).unwrap();
        let cs = ergodic_constant_formula(&(&d * s), &f).unwrap();
        prop_assert!((c - cs).abs() <= 1e-12, "{} vs {}", c, cs);
    }

    /// The subset rate is exact for two components and a lower bound on the ODE decay otherwise.
    #[test]
    fn delta_rate_against_ode_decay(seed in any::<u64>(), m in 2usize..=5) {
        let d = random_monotone(seed, m, 1.0);
        prop_assume!(pairwise_nonzero(&d));
        let delta = delta_rate(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let u0 = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let (t1, t2) = (1.0 / delta, 3.0 / delta);
        let (g1, g2) = (ode_gap(&d, &u0, t1), ode_gap(&d, &u0, t2));
        prop_assume!(g2 > 1e-13);
        let fitted = (g1 / g2).ln() / (t2 - t1);
        if m == 2 {
            prop_assert!((fitted - delta).abs() <= 0.05 * delta, "fitted {} vs delta {}", fitted, delta);
        } else {
            prop_assert!(fitted >= 0.95 * delta, "fitted {} vs delta {}", fitted, delta);
        }
        // the gap bound itself
        let g0 = u0.max() - u0.min();
        prop_assert!(g1 <= g0 * (-delta * t1).exp() + 1e-12);
    }

    #[test]
    fn grid_shift_and_io_roundtrip(n in 8usize..64, c in -2.0f64..2.0, s in -2.0f64..2.0, k in 1i32..4) {
        let grid = Grid::one_d(n).unwrap();
        let g = wave(grid, c, s, k as f64);
        prop_assert_eq!(g.shift(0, n as isize), g.clone());
        prop_assert_eq!(g.shift(0, 3).shift(0, -3), g.clone());
        let mut bin = Vec::new();
        g.write_binary(&mut bin).unwrap();
        prop_assert_eq!(GridFunction::read_binary(&bin[..]).unwrap(), g.clone());
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        let back = GridFunction::read_csv(&csv[..]).unwrap();
        prop_assert!(back.linf_distance(&g).unwrap() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn comparison_on_random_pairs(
        a in 0.2f64..2.0, b in 0.2f64..2.0, r1 in 0.1f64..2.0, r2 in 0.1f64..2.0,
        c in -1.0f64..1.0, s in -0.3f64..0.3, gap in 0.0f64..0.5, bump in -0.2f64..0.2,
    ) {
        let system = small_system(32, a, b, r1, r2);
        let grid = *system.grid();
        let u0 = vec![wave(grid, c, s, 1.0), wave(grid, -c, s, 2.0)];
        // v0 - u0 = gap + |bump sin| >= 0
        let v0: Vec<GridFunction> = u0
            .iter()
            .map(|u| {
                let extra = GridFunction::sample(grid, |x| gap + (bump * (2.0 * PI * x[0]).sin()).abs()).unwrap();
                GridFunction::from_values(grid, u.values().iter().zip(extra.values()).map(|(p, q)| p + q).collect()).unwrap()
            })
            .collect();
        let cfg = EvolutionConfig::new(0.5, 0.125);
        let tu = solve(&system, &SystemState::new(0.0, u0).unwrap(), &cfg).unwrap();
        let tv = solve(&system, &SystemState::new(0.0, v0).unwrap(), &cfg).unwrap();
        let slack = 1e-10 * tu.steps as f64;
        for (su, sv) in tu.snapshots.iter().zip(&tv.snapshots) {
            for (cu, cv) in su.components.iter().zip(&sv.components) {
                for (x, y) in cu.values().iter().zip(cv.values()) {
                    prop_assert!(x - y <= slack);
                }
            }
        }
    }

    #[test]
    fn constant_shift_equivariance(
        a in 0.2f64..2.0, b in 0.2f64..2.0, r1 in 0.1f64..2.0, r2 in 0.1f64..2.0,
        s in -0.3f64..0.3, kappa in -4.0f64..4.0,
    ) {
        let system = small_system(32, a, b, r1, r2);
        let grid = *system.grid();
        let u0 = vec![wave(grid, 0.0, s, 1.0), wave(grid, 0.5, -s, 1.0)];
        let shifted: Vec<GridFunction> = u0.iter().map(|u| u.add_scalar(kappa)).collect();
        let cfg = EvolutionConfig::new(0.25, 0.125);
        let tu = solve(&system, &SystemState::new(0.0, u0).unwrap(), &cfg).unwrap();
        let tk = solve(&system, &SystemState::new(0.0, shifted).unwrap(), &cfg).unwrap();
        for (su, sk) in tu.snapshots.iter().zip(&tk.snapshots) {
            for (cu, ck) in su.components.iter().zip(&sk.components) {
                let err = cu.add_scalar(kappa).linf_distance(ck).unwrap();
                prop_assert!(err <= 1e-12, "shift error {}", err);
            }
        }
    }

    #[test]
    fn symmetric_swap_permutes_solution(a in 0.2f64..2.0, r in 0.1f64..2.0, s in -0.3f64..0.3, c in -1.0f64..1.0) {
        let grid = Grid::one_d(32).unwrap();
        let h = make_quadratic_eikonal(1, Arc::new(move |x: &Point| a * (1.0 - (2.0 * PI * x[0]).cos())));
        let system = HJSystem::new(
            vec![h.clone(), h],
            CouplingMatrix::from_rows(&[vec![r, -r], vec![-r, r]]).unwrap(),
            grid,
        )
        .unwrap();
        let p = wave(grid, c, s, 1.0);
        let q = wave(grid, -c, 2.0 * s, 2.0);
        let cfg = EvolutionConfig::new(0.25, 0.125);
        let t1 = solve(&system, &SystemState::new(0.0, vec![p.clone(), q.clone()]).unwrap(), &cfg).unwrap();
        let t2 = solve(&system, &SystemState::new(0.0, vec![q, p]).unwrap(), &cfg).unwrap();
        for (s1, s2) in t1.snapshots.iter().zip(&t2.snapshots) {
            prop_assert_eq!(&s1.components[0], &s2.components[1]);
            prop_assert_eq!(&s1.components[1], &s2.components[0]);
        }
    }

    #[test]
    fn p_eta_diagnostics(a in 0.2f64..2.0, b in 0.2f64..2.0, s in -0.5f64..0.5, c in 0.0f64..1.0) {
        let system = small_system(32, a, b, 1.0, 1.0);
        let grid = *system.grid();
        let u0 = SystemState::new(0.0, vec![wave(grid, c, s, 1.0), wave(grid, 0.0, s, 3.0)]).unwrap();
        let traj = solve(&system, &u0, &EvolutionConfig::new(2.0, 0.125)).unwrap();
        let cv = [0.0, 0.0];
        let dist = profile_distances(&traj, &cv).unwrap();
        let etas = [0.0, 0.01, 0.05, 0.1, 0.2, 0.5];
        for (k, snap) in traj.snapshots.iter().enumerate() {
            for i in 0..2 {
                let vals: Vec<f64> = etas.iter().map(|&e| p_eta(&traj, i, e, snap.t).unwrap()).collect();
                for w in vals.windows(2) {
                    prop_assert!(w[1] <= w[0]);
                }
                // triangle bound through the terminal profile
                let tail = dist[k..].iter().map(|d| d.1).fold(0.0, f64::max);
                prop_assert!(vals[0] <= 2.0 * tail + 1e-12);
            }
        }
        let ex = exp_transform(&traj, &cv).unwrap();
        let mut pairs = Vec::new();
        for (su, sw) in traj.snapshots.iter().zip(&ex.traj.snapshots) {
            for (cu, cw) in su.components.iter().zip(&sw.components) {
                pairs.extend(cu.values().iter().copied().zip(cw.values().iter().copied()));
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in pairs.windows(2) {
            prop_assert!(w[1].1 >= w[0].1);
        }
        let min_w = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        prop_assert!(min_w.abs() <= 1e-12);
        let back = ex.invert(&cv);
        for (s0, s1) in traj.snapshots.iter().zip(&back.snapshots) {
            for (c0, c1) in s0.components.iter().zip(&s1.components) {
                prop_assert!(c0.linf_distance(c1).unwrap() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn anchor_independence(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let system = small_system(32, 1.0, 0.5, 1.0, 1.0);
        let lambdas = vec![0.1, 0.05, 0.025];
        let sched = |a: f64| DiscountSchedule {
            lambdas: lambdas.clone(),
            anchor_x: [a, 0.0],
            ..Default::default()
        };
        let rx = estimate_ergodic_constant(&system, &sched(x)).unwrap();
        let ry = estimate_ergodic_constant(&system, &sched(y)).unwrap();
        let last = rx.per_lambda.last().unwrap();
        let bound = last.lambda * last.lipschitz * torus_distance(1, &[x, 0.0], &[y, 0.0]);
        for i in 0..2 {
            prop_assert!((rx.c_raw[i] - ry.c_raw[i]).abs() <= bound + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn constant_cost_shift_adds_kappa_t(seed in any::<u64>(), kappa in -2.0f64..2.0, x in 0.0f64..1.0, mode in 0usize..2) {
        let spec = linear_eikonal_spec(1, &largenew_potentials(), 1.0, 8);
        let mut shifted = spec.clone();
        for m in shifted.modes.iter_mut() {
            m.cost.constant += kappa;
        }
        let horizon = 1.0;
        let p = simulate_trajectory(&spec, &FixedAction(5), [x, 0.0], mode, horizon, 1.0 / 64.0, seed).unwrap();
        let q = simulate_trajectory(&shifted, &FixedAction(5), [x, 0.0], mode, horizon, 1.0 / 64.0, seed).unwrap();
        prop_assert_eq!(&p.times, &q.times);
        prop_assert_eq!(&p.modes, &q.modes);
        prop_assert!((q.cost - p.cost - kappa * horizon).abs() <= 1e-12);
    }

    #[test]
    fn larger_terminal_data_larger_value(seed in 0u64..1000, lift in 0.0f64..1.0, amp in 0.0f64..1.0, x in 0.0f64..1.0) {
        let spec = linear_eikonal_spec(1, &largenew_potentials(), 1.0, 8);
        let mut higher = spec.clone();
        for m in higher.modes.iter_mut() {
            // lift + amp (1 + cos) >= 0 pointwise
            m.terminal = series(m.terminal.constant + lift + amp, &[(1, amp, 0.0)]);
        }
        let lo = estimate_value(&spec, &FixedAction(2), [x, 0.0], 0, 0.5, 1.0 / 64.0, 100, seed).unwrap();
        let hi = estimate_value(&higher, &FixedAction(2), [x, 0.0], 0, 0.5, 1.0 / 64.0, 100, seed).unwrap();
        prop_assert!(hi.mean >= lo.mean - 1e-12);
    }
}
