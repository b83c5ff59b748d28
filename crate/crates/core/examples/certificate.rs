//! Test-function certificate: r-dependence of ∬ u^p φ_r against the scaling
//! exponent N + 2s - 2sp/(p-1), plus the convexity inequality for ζ^m.

use mixheat::fujita::{self, TestFunctionFamily};
use mixheat::kernels::ModelParams;
use mixheat::mild::{self, SolverConfig};
use mixheat::spectral::{Field, GridSpec};

fn main() -> mixheat::Result<()> {
    let grid = GridSpec::new(1, 40.0, 4096)?;
    let params = ModelParams::new(1, 0.5)?;
    let radii = [2.0, 4.0, 8.0, 16.0];
    for p in [1.5, 2.0, 2.5] {
        let u0 = Field::from_fn(grid, |x| 0.05 * (-x[0] * x[0]).exp())?;
        let config = SolverConfig {
            p,
            horizon: 16.0,
            dt: 1e-2,
            snapshot_stride: 5,
            record_stride: 5,
            ..SolverConfig::default()
        };
        let traj = mild::run(&u0, &config, &params)?;
        let rep = fujita::nonexistence_certificate(&traj, &radii)?;
        println!("p = {p}: slope {:.3}, exponent {:.3}", rep.fitted_slope, rep.predicted_exponent);
        for row in &rep.rows {
            println!(
                "  r = {:4}: ∬u^pφ = {:.4e}, capacity {:.4e}, weak-identity defect {:.1e}",
                row.r, row.integral_up_phi, row.bound_value, row.weak_identity_defect
            );
        }
    }
    let conv = fujita::convexity_check(&TestFunctionFamily::new(2.0, 4.0)?, &grid, 0.5)?;
    println!("convexity: max violation {:.2e} at scale {:.2e}", conv.max_violation, conv.scale);
    Ok(())
}
