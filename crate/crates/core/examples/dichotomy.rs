//! Finite-horizon blow-up/global sweep over exponents and data, written to
//! sweep.csv in the output directory (default: current directory).

use mixheat::fujita::{self, DatumSpec, SweepCell, SweepConfig};
use mixheat::mild::SolverConfig;
use mixheat::spectral::GridSpec;

fn main() -> mixheat::Result<()> {
    let mut cells = Vec::new();
    for p in [1.2, 1.5, 2.0, 2.5, 3.0] {
        for amplitude in [0.5, 1.0, 2.0] {
            cells.push(SweepCell { dim: 1, s: 0.5, p, datum: DatumSpec::Uniform { amplitude } });
        }
    }
    for p in [2.5, 3.0] {
        let datum = DatumSpec::SmallKernel { delta0_multiple: 0.5, tau0: None };
        cells.push(SweepCell { dim: 1, s: 0.5, p, datum });
    }
    let config = SweepConfig {
        solver: SolverConfig {
            horizon: 50.0,
            dt: 1e-2,
            record_stride: 10,
            ..SolverConfig::default()
        },
        grid: Some(GridSpec::new(1, 40.0, 512)?),
        ..SweepConfig::default()
    };
    let records = fujita::dichotomy_sweep(&cells, &config)?;
    for r in &records {
        println!(
            "p = {:3} {:12} amplitude {:.4}: {:8} t* = {:?}",
            r.cell.p,
            r.cell.datum.kind(),
            r.amplitude,
            r.outcome.label(),
            r.t_star()
        );
    }
    let dir = std::env::var("MIXHEAT_OUT").unwrap_or_else(|_| ".".into());
    fujita::write_sweep(&std::path::Path::new(&dir).join("sweep.csv"), &records)?;
    Ok(())
}
