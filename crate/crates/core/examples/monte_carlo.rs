//! Samples W_t + J_t (Brownian motion plus an independent 2s-stable process)
//! and compares the histogram with the spectral kernel.

use mixheat::kernels::{self, KernelOptions, ModelParams};
use mixheat::spectral::GridSpec;
use mixheat::stochastic::{self, SamplerConfig};

fn main() -> mixheat::Result<()> {
    let grid = GridSpec::new(1, 40.0, 1024)?;
    for (s, t) in [(0.5, 1.0), (0.75, 0.5), (0.25, 1.0)] {
        let params = ModelParams::new(1, s)?;
        let config = SamplerConfig {
            s,
            t,
            samples: 1_000_000,
            seed: 1,
            bin_width: grid.spacing(),
        };
        let e = stochastic::sample_mixed_process(&config, grid.half_length())?;
        let k = kernels::mixed_kernel_with(&params, &grid, t, &KernelOptions::free_space(16))?;
        let r = stochastic::compare_density(&e, &k)?;
        println!(
            "s = {s}, t = {t}: KS {:.2e} (95% critical {:.2e}), max |z| {:.2}, tail {:.2e} vs {:.2e}",
            r.ks_distance,
            r.ks_critical_95(),
            r.max_abs_z,
            r.empirical_tail,
            r.kernel_tail
        );
    }
    Ok(())
}
