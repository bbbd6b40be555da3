//! March a two-component eikonal system in time, check the discrete
//! comparison principle and write the trajectory to disk.
//!
//! ```bash
//! cargo run --release --example evolve_system -- /tmp/hjsys_traj
//! ```

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use hjsys::coupling::CouplingMatrix;
use hjsys::evolution::{comparison_check, lipschitz_check, solve, EvolutionConfig, HJSystem, SystemState};
use hjsys::grid::{Grid, Point};
use hjsys::hamiltonian::make_quadratic_eikonal;

fn main() -> hjsys::Result<()> {
    let grid = Grid::one_d(128)?;
    let f1 = |x: &Point| 1.5 - (2.0 * PI * x[0]).cos();
    let f2 = |x: &Point| 2.0 * (1.0 - (2.0 * PI * x[0]).cos());
    let system = HJSystem::new(
        vec![make_quadratic_eikonal(1, Arc::new(f1)), make_quadratic_eikonal(1, Arc::new(f2))],
        CouplingMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]])?,
        grid,
    )?;
    let cfg = EvolutionConfig::new(10.0, 1.0);

    let low = SystemState::sample(grid, &[|x: &Point| 0.2 * (2.0 * PI * x[0]).sin(), |_: &Point| 0.0])?;
    let high = SystemState::sample(grid, &[|x: &Point| 0.3 + 0.2 * (2.0 * PI * x[0]).sin(), |_: &Point| 0.1])?;
    let u = solve(&system, &low, &cfg)?;
    let v = solve(&system, &high, &cfg)?;
    println!("dt = {:.3e}, {} steps", u.dt, u.steps);

    let cmp = comparison_check(&u, &v)?;
    println!("comparison: worst violation {:.3e}", cmp.worst_violation);

    // the ergodic constant of this system is -1/4
    let lip = lipschitz_check(&u, &[-0.25, -0.25], 100.0)?;
    println!("{lip:?}");
    for s in u.snapshots.iter().step_by(2) {
        println!("t = {:>5.2}  u1(0) = {:+.5}  u2(0) = {:+.5}", s.t, s.components[0].at(&[0.0, 0.0]), s.components[1].at(&[0.0, 0.0]));
    }

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        u.write_dir(&dir, &system.describe())?;
        println!("trajectory written to {}", dir.display());
    }
    Ok(())
}
