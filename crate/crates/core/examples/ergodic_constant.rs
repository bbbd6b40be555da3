//! Ergodic constant three ways: vanishing discount, long-time slope, and the
//! closed form available when the potentials share a minimizer.
//!
//! ```bash
//! cargo run --release --example ergodic_constant
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use hjsys::coupling::{ergodic_constant_formula, CouplingMatrix};
use hjsys::ergodic::{estimate_ergodic_constant, long_time_constant, DiscountSchedule};
use hjsys::evolution::{solve, EvolutionConfig, HJSystem, SystemState};
use hjsys::grid::{Grid, GridFunction, Point};
use hjsys::hamiltonian::make_quadratic_eikonal;

fn main() -> hjsys::Result<()> {
    let grid = Grid::one_d(256)?;
    let f1 = |x: &Point| 1.5 - (2.0 * PI * x[0]).cos();
    let f2 = |x: &Point| 2.0 * (1.0 - (2.0 * PI * x[0]).cos());
    let coupling = CouplingMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]])?;
    let system = HJSystem::new(
        vec![make_quadratic_eikonal(1, Arc::new(f1)), make_quadratic_eikonal(1, Arc::new(f2))],
        coupling.clone(),
        grid,
    )?;

    let res = estimate_ergodic_constant(&system, &DiscountSchedule::default())?;
    println!("{:>10} {:>12} {:>12} {:>10} {:>8}", "lambda", "-lv1(0)", "-lv2(0)", "sup v", "Lip");
    for r in &res.per_lambda {
        println!(
            "{:>10.3e} {:>12.6} {:>12.6} {:>10.3} {:>8.4}",
            r.lambda, r.neg_lambda_v_anchor[0], r.neg_lambda_v_anchor[1], r.sup_v, r.lipschitz
        );
    }
    println!("extrapolated c = {:?} (raw {:?}), residual {:.2e}", res.c, res.c_raw, res.residual);
    for w in &res.warnings {
        println!("note: {w}");
    }
    println!("{:?}", res.discount_bounds(0.05));

    let f = [GridFunction::sample(grid, f1)?, GridFunction::sample(grid, f2)?];
    let formula = ergodic_constant_formula(coupling.require_constant()?, &f)?;
    println!("closed form: {formula}");

    let traj = solve(&system, &SystemState::constants(grid, &[0.0, 0.0]), &EvolutionConfig::new(40.0, 0.5))?;
    println!("long-time slope: {:?}", long_time_constant(&traj, &[0.0, 0.0], 10.0)?);
    Ok(())
}
