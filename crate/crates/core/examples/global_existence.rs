//! Small data above the Fujita exponent: the δ-schedule, the Picard ladder
//! under the envelope δ_n p_{t+τ0}, the Duhamel inequality and a long run.

use mixheat::fujita;
use mixheat::kernels::ModelParams;
use mixheat::mild::{self, SolverConfig};
use mixheat::spectral::GridSpec;

fn main() -> mixheat::Result<()> {
    let grid = GridSpec::new(1, 40.0, 1024)?;
    let params = ModelParams::new(1, 0.5)?;
    let p = 3.0;
    println!("critical exponent {}", fujita::critical_exponent(1, 0.5)?);

    let threshold = fujita::delta0_threshold(p)?;
    let delta0 = 0.5 * threshold;
    let schedule = fujita::delta_schedule(delta0, p, 10)?;
    println!("delta0 = {delta0:.5} (threshold {threshold:.5}), limit M = {:?}", schedule.limit);

    let (c, _) = fujita::empirical_kernel_constant(&params, &grid)?;
    let tau0 = 2.0 * fujita::tau0_lower_bound(&params, p, c)?;
    println!("kernel constant C = {c:.4}, tau0 = {tau0:.4}");

    let u0 = fujita::small_initial_datum(&grid, &params, delta0, tau0, 1e-3)?;
    let config = SolverConfig {
        p,
        horizon: 100.0,
        dt: 1e-2,
        record_stride: 100,
        ..SolverConfig::default()
    };
    let times = mild::graded_times(100.0, 33, 1e-3)?;
    let ladder = mild::picard_iterate(&u0, &times, 10, &config, &params)?;
    let env = fujita::envelope_check(&ladder, &schedule, tau0, &params, 1e-3)?;
    for (n, (r, d)) in env.ratios.iter().zip(&env.deltas).enumerate() {
        println!("  n = {n:2}: max u_n / p = {r:.6}  delta_n = {d:.6}");
    }

    let duhamel = fujita::duhamel_bound_check(&params, p, tau0, c, &grid, &times, 8)?;
    println!("Duhamel: factor {:.4}, min margin {:.4}", duhamel.factor, duhamel.min_margin);

    let traj = mild::run(&u0, &config, &params)?;
    println!("run to T = 100: {}, max sup-norm {:.4e}", traj.outcome.label(), traj.max_sup_norm());
    Ok(())
}
