//! Large-time diagnostics for the nonconvex example: monotone tail, the
//! `P_eta` table on the log-transformed profile, and profile distances.
//!
//! ```bash
//! cargo run --release --example convergence_diagnostics -- /tmp/hjsys_diag
//! ```

use std::path::PathBuf;

use hjsys::diagnostics::{diagnose, DiagnosticsConfig};
use hjsys::evolution::{solve, EvolutionConfig, SystemState};
use hjsys::experiment::nonconvex_suite_system;
use hjsys::grid::Point;

fn main() -> hjsys::Result<()> {
    let system = nonconvex_suite_system(128).build()?;
    let grid = *system.grid();
    let u0 = SystemState::sample(
        grid,
        &[
            |x: &Point| 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin(),
            |x: &Point| 0.2 * (4.0 * std::f64::consts::PI * x[0]).cos(),
        ],
    )?;
    let traj = solve(&system, &u0, &EvolutionConfig::new(20.0, 0.5))?;
    // K is nonempty here, so c = 0
    let report = diagnose(&system, &traj, &[0.0, 0.0], &DiagnosticsConfig::default())?;

    println!("monotone tail: {:?}", report.monotone_tail);
    for eta in [0.05, 0.1, 0.2] {
        println!(
            "P_eta(eta={eta}): t=0 -> {:.4e}, t>=10 -> {:.4e}",
            report.p_eta_after(eta, 0.0),
            report.p_eta_after(eta, 10.0)
        );
    }
    for (t, d) in report.profile_distances.iter().step_by(8) {
        println!("t = {t:>5.1}  |u(t) - u(T)| = {d:.3e}");
    }
    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        report.write_dir(&dir)?;
        println!("report written to {}", dir.display());
    }
    Ok(())
}
