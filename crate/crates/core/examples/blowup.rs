//! Blow-up of spatially uniform data, where the equation reduces to
//! u' = u^p with t* = a^(1-p)/(p-1), and the mild-form residual of a run.

use mixheat::kernels::ModelParams;
use mixheat::mild::{self, Scheme, SolverConfig};
use mixheat::spectral::{Field, GridSpec};

fn main() -> mixheat::Result<()> {
    let grid = GridSpec::new(1, 40.0, 256)?;
    let params = ModelParams::new(1, 0.5)?;
    for (p, a) in [(2.0, 1.0), (3.0, 1.0), (2.0, 2.0)] {
        let config = SolverConfig {
            p,
            horizon: 2.0,
            ..SolverConfig::default()
        };
        let traj = mild::run(&Field::constant(grid, a), &config, &params)?;
        let exact = a.powf(1.0 - p) / (p - 1.0);
        println!("p = {p}, a = {a}: {:?} (ODE {exact})", traj.outcome);
    }

    let u0 = Field::from_fn(grid, |x| 0.5 * (-x[0] * x[0]).exp())?;
    for scheme in [Scheme::Etd1, Scheme::Etd2] {
        let config = SolverConfig {
            p: 2.0,
            horizon: 1.0,
            dt: 1e-2,
            scheme,
            snapshot_stride: 10,
            ..SolverConfig::default()
        };
        let traj = mild::run(&u0, &config, &params)?;
        let res = mild::mild_residual(&traj)?;
        println!("{scheme:?}: mild residual {:.2e}", res.max_relative_defect);
    }
    Ok(())
}
