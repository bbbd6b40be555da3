//! The control interpretation: Monte Carlo over a process with random mode
//! switching against the PDE value of the derived system.
//!
//! ```bash
//! cargo run --release --example switching_monte_carlo
//! ```

use hjsys::experiment::{largenew_potentials, occupation_spec, simulate_probes, PolicyChoice, Probe, SimulateConfig};
use hjsys::switching::{estimate_value, hamiltonian_from_spec, linear_eikonal_spec, simulate_trajectory, FixedAction};

fn main() -> hjsys::Result<()> {
    let spec = linear_eikonal_spec(1, &largenew_potentials(), 1.0, 64);
    let h = hamiltonian_from_spec(&spec, 0)?;
    println!("H_1(0.3, 0.8) = {:.6} (|p| - f = {:.6})", h.eval(&[0.3, 0.0], &[0.8, 0.0]), 0.8 - spec.modes[0].cost.eval(&[0.3, 0.0]));
    println!("derived coupling: {:?}", spec.derived_coupling()?);

    let path = simulate_trajectory(&spec, &FixedAction(63), [0.1, 0.0], 0, 2.0, 1.0 / 256.0, 1)?;
    println!("one path: {} switches, cost {:.4}, ends at x = {:.4}", path.switches, path.cost, path.positions.last().unwrap()[0]);

    let cfg = SimulateConfig {
        spec,
        samples: 2000,
        seed: 1,
        horizon: 2.0,
        probes: vec![Probe { x: [0.1, 0.0], mode: 0 }, Probe { x: [0.7, 0.0], mode: 1 }],
        grid_n: 128,
        dt_sim: None,
        policy: PolicyChoice::Greedy,
        rel_tol: 0.05,
    };
    for p in simulate_probes(&cfg)? {
        println!(
            "x = {:.2}, mode {}: MC {:.4} +- {:.4}, PDE {:.4}, rel err {:.2e}",
            p.x[0], p.mode, p.mc_mean, p.mc_std_error, p.pde, p.rel_error
        );
    }

    let t: f64 = 2.0;
    let exact = t / 2.0 - (1.0 - (-2.0 * t).exp()) / 4.0;
    let est = estimate_value(&occupation_spec(), &FixedAction(0), [0.0, 0.0], 0, t, 0.01, 10_000, 7)?;
    println!("occupation time: MC {:.4} +- {:.4}, exact {exact:.4}", est.mean, est.std_error);
    Ok(())
}
