//! Identical Hamiltonians: the gap between components decays at least like
//! `exp(-delta t)`, with `delta` computed from the coupling.
//!
//! ```bash
//! cargo run --release --example gap_decay
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use hjsys::coupling::CouplingMatrix;
use hjsys::diagnostics::component_gap_decay;
use hjsys::evolution::{solve, EvolutionConfig, HJSystem, SystemState};
use hjsys::grid::{Grid, Point};
use hjsys::hamiltonian::make_quadratic_eikonal;

fn main() -> hjsys::Result<()> {
    let grid = Grid::one_d(128)?;
    let h = make_quadratic_eikonal(1, Arc::new(|x: &Point| 1.0 - (2.0 * PI * x[0]).cos()));
    for rows in [
        vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
        vec![vec![2.0, -2.0], vec![-1.0, 1.0]],
    ] {
        let system = HJSystem::new(vec![h.clone(), h.clone()], CouplingMatrix::from_rows(&rows)?, grid)?;
        let flat = SystemState::constants(grid, &[1.0, 0.0]);
        let traj = solve(&system, &flat, &EvolutionConfig::new(4.0, 0.1))?;
        let gap = component_gap_decay(&system, &traj, 1e-12)?;
        println!(
            "D = {rows:?}: delta = {:?}, fitted rate = {:?}",
            gap.delta_rate, gap.fitted_rate
        );

        let wavy = SystemState::sample(grid, &[|x: &Point| (2.0 * PI * x[0]).sin(), |_: &Point| 0.0])?;
        let traj = solve(&system, &wavy, &EvolutionConfig::new(4.0, 0.1))?;
        let gap = component_gap_decay(&system, &traj, 0.0)?;
        let delta = gap.delta_rate.unwrap_or(0.0);
        println!("    sinusoidal data: max excess over Phi(0)exp(-delta t) = {:.3e}", gap.bound_excess(delta, 0.0));
    }
    Ok(())
}
