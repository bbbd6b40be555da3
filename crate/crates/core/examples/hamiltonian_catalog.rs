//! Catalog Hamiltonians, the Lax–Friedrichs flux and sampled assumption checks.
//!
//! ```bash
//! cargo run --example hamiltonian_catalog
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use hjsys::fourier::DirectionalWeight;
use hjsys::grid::Point;
use hjsys::hamiltonian::{
    check_assumption, lax_friedrichs_flux, make_nonconvex_example, make_quadratic_eikonal, AssumptionId,
    SamplerConfig,
};

fn main() -> hjsys::Result<()> {
    let f = Arc::new(|x: &Point| 1.0 - (2.0 * PI * x[0]).cos());
    let quad = make_quadratic_eikonal(1, f.clone());
    let x = [0.25, 0.0];
    println!("{} at x=0.25, p=0.5: {}", quad.name(), quad.eval(&x, &[0.5, 0.0]));
    println!(
        "LF flux with p- = 0.2, p+ = 0.6: {}",
        lax_friedrichs_flux(&quad, &x, &[0.2, 0.0], &[0.6, 0.0], quad.lf_alpha())?
    );

    let weight = DirectionalWeight {
        constant: 1.0,
        cos: vec![0.5],
        sin: vec![],
    };
    let q = Arc::new(|x: &Point| [0.5 * (2.0 * PI * x[0]).sin(), 0.0]);
    let bs = make_nonconvex_example(1, weight, f, q)?;
    println!("{} tags: {:?}", bs.name(), bs.tags());

    let cfg = SamplerConfig::default();
    for (h, ids) in [
        (&quad, vec![AssumptionId::StrictConvex, AssumptionId::Coercive, AssumptionId::H10]),
        (&bs, vec![AssumptionId::H10, AssumptionId::H7, AssumptionId::StrictConvex]),
    ] {
        for id in ids {
            let r = check_assumption(h, id, &cfg)?;
            println!(
                "{:<18} {:?}: passed={} samples={} violations={}",
                h.name(),
                id,
                r.passed,
                r.sample_count,
                r.violations.len()
            );
            if let Some(profile) = &r.eta_psi_profile {
                println!("    psi(eta) profile: {profile:?}");
            }
        }
    }
    Ok(())
}
