//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs with `cargo test --test acceptance`. Oracles (Cauchy density,
//! brute-force iteration, ODE blow-up time) are computed here, independently
//! of the library.

use std::time::Instant;

use mixheat::fujita::{self, DatumSpec, SweepCell, SweepConfig};
use mixheat::kernels::{self, KernelOptions, ModelParams};
use mixheat::mild::{self, Outcome, SolverConfig};
use mixheat::spectral::{mixed_exponent, Field, GridSpec};
use mixheat::stochastic::{self, SamplerConfig};

type Check = Result<(bool, String), String>;
type Criterion<'a> = Box<dyn Fn() -> Check + 'a>;
type McRun = (f64, stochastic::EmpiricalDensity, stochastic::ComparisonReport);

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn grid1() -> GridSpec {
    GridSpec::new(1, 40.0, 1024).unwrap()
}

fn mass() -> Check {
    let cases = [(1, 0.25), (1, 0.5), (1, 0.75), (2, 0.5)];
    let mut worst = 0.0f64;
    for (dim, s) in cases {
        let params = ModelParams::new(dim, s).map_err(err)?;
        let grid = GridSpec::default_for(dim).map_err(err)?;
        for t in [0.01, 0.1, 1.0, 10.0] {
            let k = kernels::mixed_kernel(&params, &grid, t).map_err(err)?;
            worst = worst.max(k.mass_defect());
        }
    }
    Ok((worst <= 1e-6, format!("max |mass - 1| = {worst:.3e} (tol 1e-6)")))
}

fn semigroup() -> Check {
    let mut worst = 0.0f64;
    for s in [0.25, 0.5, 0.75] {
        let params = ModelParams::new(1, s).map_err(err)?;
        for (t, tau) in [(0.5, 0.5), (0.2, 1.0)] {
            let a = kernels::mixed_kernel(&params, &grid1(), t).map_err(err)?;
            let b = kernels::mixed_kernel(&params, &grid1(), tau).map_err(err)?;
            let r = kernels::verify_kernel_properties(&a, Some(&b)).map_err(err)?;
            worst = worst.max(r.semigroup.map(|d| d.relative_defect).unwrap_or(f64::INFINITY));
        }
    }
    Ok((worst <= 1e-6, format!("max relative semigroup defect = {worst:.3e} (tol 1e-6)")))
}

fn two_routes() -> Check {
    let mut worst = 0.0f64;
    for s in [0.25, 0.5, 0.75] {
        let params = ModelParams::new(1, s).map_err(err)?;
        for t in [0.1, 1.0, 10.0] {
            let a = kernels::mixed_kernel(&params, &grid1(), t).map_err(err)?;
            let b = kernels::mixed_kernel_convolution(&params, &grid1(), t).map_err(err)?;
            worst = worst.max(kernels::peak_relative_defect(&a.field, &b.field));
        }
    }
    Ok((worst <= 1e-8, format!("max peak-relative route defect = {worst:.3e} (tol 1e-8)")))
}

fn cauchy() -> Check {
    let params = ModelParams::new(1, 0.5).map_err(err)?;
    let grid = grid1();
    let mut worst = 0.0f64;
    for t in [0.5, 1.0, 2.0] {
        let k = kernels::fractional_kernel_with(&params, &grid, t, &KernelOptions::free_space(128))
            .map_err(err)?;
        for (i, &v) in k.field.values().iter().enumerate() {
            let x = grid.coordinate(i);
            if x.abs() <= 20.0 {
                let exact = t / (std::f64::consts::PI * (t * t + x * x));
                worst = worst.max((v - exact).abs() / exact);
            }
        }
    }
    Ok((worst <= 1e-4, format!("max relative error vs Cauchy density = {worst:.3e} (tol 1e-4)")))
}

fn monte_carlo_sweep(seed: u64) -> Result<Vec<McRun>, String> {
    let grid = grid1();
    let mut out = Vec::new();
    for (s, t) in [(0.5, 1.0), (0.75, 0.5)] {
        let params = ModelParams::new(1, s).map_err(err)?;
        let config = SamplerConfig {
            s,
            t,
            samples: 1_000_000,
            seed,
            bin_width: grid.spacing(),
        };
        let e = stochastic::sample_mixed_process(&config, grid.half_length()).map_err(err)?;
        let k = kernels::mixed_kernel_with(&params, &grid, t, &KernelOptions::free_space(16)).map_err(err)?;
        let r = stochastic::compare_density(&e, &k).map_err(err)?;
        out.push((s, e, r));
    }
    Ok(out)
}

fn monte_carlo() -> Check {
    let start = Instant::now();
    let runs = monte_carlo_sweep(20240611)?;
    let secs = start.elapsed().as_secs_f64();
    let worst = runs.iter().fold(0.0f64, |m, (_, _, r)| m.max(r.ks_distance));
    let detail = runs
        .iter()
        .map(|(s, _, r)| format!("s={s}: KS {:.2e}", r.ks_distance))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((worst <= 0.01 && secs <= 300.0, format!("{detail} (tol 1e-2), {secs:.1}s")))
}

fn bounds() -> Check {
    let params = ModelParams::new(1, 0.5).map_err(err)?;
    let fine = GridSpec::new(1, 40.0, 8192).map_err(err)?;
    let frac = kernels::estimate_bound_constant(&params, (0.1, 10.0), &fine).map_err(err)?;
    let mut ok = frac.fractional_stable && frac.fractional_constant_refined.is_finite();
    let mut detail = format!(
        "fractional C = {:.4} -> {:.4} on refinement",
        frac.fractional_constant, frac.fractional_constant_refined
    );
    for s in [0.25, 0.5, 0.75] {
        let params = ModelParams::new(1, s).map_err(err)?;
        let est = kernels::estimate_bound_constant(&params, (0.01, 1.0), &grid1()).map_err(err)?;
        ok &= est.mixed_stable && est.mixed_constant_refined.is_finite();
        detail += &format!(
            "; s={s}: sup p_t(0) t^(N/2s) = {:.4} -> {:.4}",
            est.mixed_constant, est.mixed_constant_refined
        );
    }
    Ok((ok, detail))
}

fn ode_blowup() -> Check {
    let params = ModelParams::new(1, 0.5).map_err(err)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for p in [2.0, 3.0] {
        // u' = u^p, u(0) = 1
        let exact = 1.0 / (p - 1.0);
        let config = SolverConfig {
            p,
            horizon: 2.0,
            ..SolverConfig::default()
        };
        let traj = mild::run(&Field::constant(grid1(), 1.0), &config, &params).map_err(err)?;
        match traj.outcome.t_star() {
            Some(t) => {
                ok &= ((t - exact) / exact).abs() <= 0.02;
                detail.push(format!("p={p}: t* = {t:.5} (exact {exact})"));
            }
            None => {
                ok = false;
                detail.push(format!("p={p}: no blow-up ({:?})", traj.outcome));
            }
        }
    }
    Ok((ok, detail.join(", ")))
}

/// Bounded after `iters` steps of `x -> d + x^2` from `x = d`.
fn stays_bounded(d: f64, iters: usize) -> bool {
    let mut x = d;
    for _ in 0..iters {
        x = d + x * x;
        if x > 10.0 {
            return false;
        }
    }
    true
}

fn schedule() -> Check {
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if stays_bounded(mid, 100_000) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let brute = 0.5 * (lo + hi);
    let threshold = fujita::delta0_threshold(2.0).map_err(err)?;
    let mut ok = (brute - 0.25).abs() <= 1e-6 && (threshold - 0.25).abs() <= 1e-6;
    for d in [0.25 - 2e-6, 0.25, 0.25 + 2e-6, 0.1, 0.3] {
        let sch = fujita::delta_schedule(d, 2.0, 100).map_err(err)?;
        ok &= sch.converged == stays_bounded(d, 100_000);
    }
    let mut worst = 0.0f64;
    for d in [0.01, 0.1, 0.2, 0.24, 0.25] {
        let sch = fujita::delta_schedule(d, 2.0, 10).map_err(err)?;
        let m = sch.limit.ok_or("no limit for a convergent schedule")?;
        let exact = (1.0 - (1.0 - 4.0 * d).sqrt()) / 2.0;
        worst = worst.max((m - exact).abs());
    }
    ok &= worst <= 1e-10;
    Ok((
        ok,
        format!("brute-force threshold {brute:.9}, library {threshold}, max |M - closed form| = {worst:.2e}"),
    ))
}

struct SmallData {
    params: ModelParams,
    grid: GridSpec,
    p: f64,
    delta0: f64,
    tau0: f64,
    constant: f64,
}

fn small_data() -> Result<SmallData, String> {
    let params = ModelParams::new(1, 0.5).map_err(err)?;
    let grid = grid1();
    let p = 3.0;
    let delta0 = 0.5 * fujita::delta0_threshold(p).map_err(err)?;
    let (constant, _) = fujita::empirical_kernel_constant(&params, &grid).map_err(err)?;
    let tau0 = 2.0 * fujita::tau0_lower_bound(&params, p, constant).map_err(err)?;
    Ok(SmallData {
        params,
        grid,
        p,
        delta0,
        tau0,
        constant,
    })
}

fn envelope(d: &SmallData) -> Check {
    let u0 = fujita::small_initial_datum(&d.grid, &d.params, d.delta0, d.tau0, 1e-3).map_err(err)?;
    let config = SolverConfig {
        p: d.p,
        horizon: 100.0,
        dt: 1e-2,
        record_stride: 10,
        ..SolverConfig::default()
    };
    let times = mild::graded_times(100.0, 33, 1e-3).map_err(err)?;
    let ladder = mild::picard_iterate(&u0, &times, 10, &config, &d.params).map_err(err)?;
    let schedule = fujita::delta_schedule(d.delta0, d.p, 10).map_err(err)?;
    let env = fujita::envelope_check(&ladder, &schedule, d.tau0, &d.params, 1e-3).map_err(err)?;
    let m = schedule.limit.ok_or("schedule does not converge")?;

    let traj = mild::run(&u0, &config, &d.params).map_err(err)?;
    let sigma = mixed_exponent(&d.grid, d.params.s).map_err(err)?;
    let worst = traj
        .times
        .iter()
        .zip(&traj.sup_norms)
        .map(|(&t, &sup)| sup - m * fujita::torus_kernel_peak(&sigma, &d.grid, t + d.tau0))
        .fold(f64::NEG_INFINITY, f64::max);
    let global = traj.outcome == Outcome::GlobalWithinHorizon;
    let max_gap = env
        .ratios
        .iter()
        .zip(&env.deltas)
        .map(|(r, dn)| r - dn)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((
        env.holds() && global && worst <= 1e-3,
        format!(
            "C = {:.4}, tau0 = {:.4}; max(ratio_n - delta_n) = {max_gap:.2e}; outcome {}; max(sup u - M sup p) = {worst:.2e}",
            d.constant,
            d.tau0,
            traj.outcome.label()
        ),
    ))
}

fn duhamel(d: &SmallData) -> Check {
    let t_grid = mild::graded_times(100.0, 33, 1e-3).map_err(err)?;
    let r = fujita::duhamel_bound_check(&d.params, d.p, d.tau0, d.constant, &d.grid, &t_grid, 8)
        .map_err(err)?;
    let a = fujita::duhamel_exponent(&d.params, d.p);
    let exact = d.tau0.powf(1.0 - a) / (a - 1.0);
    let quad = fujita::tau_integral(a, d.tau0, 1e6).map_err(err)?;
    let rel = (quad - exact).abs() / exact;
    Ok((
        r.strict && rel <= 1e-8,
        format!(
            "min margin = {:.3e} at (x={:.2}, t={:.3}); tau-integral relative error {rel:.2e}",
            r.min_margin, r.worst_x, r.worst_t
        ),
    ))
}

fn certificate() -> Check {
    let params = ModelParams::new(1, 0.5).map_err(err)?;
    let grid = GridSpec::new(1, 40.0, 8192).map_err(err)?;
    let radii = [2.0, 4.0, 8.0, 16.0];
    let mut ok = true;
    let mut detail = Vec::new();
    for p in [1.5, 2.0, 2.5] {
        let u0 = Field::from_fn(grid, |x| 0.05 * (-x[0] * x[0]).exp()).map_err(err)?;
        let config = SolverConfig {
            p,
            horizon: 16.0,
            dt: 1e-2,
            snapshot_stride: 5,
            record_stride: 5,
            ..SolverConfig::default()
        };
        let traj = mild::run(&u0, &config, &params).map_err(err)?;
        if traj.outcome != Outcome::GlobalWithinHorizon {
            return Err(format!("p={p}: solution left the horizon ({:?})", traj.outcome));
        }
        let rep = fujita::nonexistence_certificate(&traj, &radii).map_err(err)?;
        let exponent_ok = if p == 2.0 {
            rep.fitted_slope.abs() <= 0.1
        } else {
            rep.sign_matches()
        };
        let convex_ok = rep.convexity.iter().all(|c| c.holds(1e-8));
        ok &= exponent_ok && convex_ok;
        detail.push(format!(
            "p={p}: slope {:.3} vs exponent {:.3} [{}], convexity [{}]",
            rep.fitted_slope,
            rep.predicted_exponent,
            if exponent_ok { "ok" } else { "mismatch" },
            if convex_ok { "ok" } else { "violated" }
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn sweep_cells() -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for p in [1.2, 1.5, 2.0] {
        for amplitude in [0.5, 1.0, 2.0] {
            cells.push(SweepCell {
                dim: 1,
                s: 0.5,
                p,
                datum: DatumSpec::Uniform { amplitude },
            });
        }
    }
    for p in [2.5, 3.0] {
        cells.push(SweepCell {
            dim: 1,
            s: 0.5,
            p,
            datum: DatumSpec::SmallKernel {
                delta0_multiple: 0.5,
                tau0: None,
            },
        });
    }
    cells
}

fn run_sweep() -> Result<Vec<fujita::DichotomyRecord>, String> {
    let config = SweepConfig {
        solver: SolverConfig {
            horizon: 100.0,
            dt: 1e-2,
            record_stride: 10,
            ..SolverConfig::default()
        },
        grid: Some(grid1()),
        ..SweepConfig::default()
    };
    fujita::dichotomy_sweep(&sweep_cells(), &config).map_err(err)
}

fn dichotomy() -> Check {
    let start = Instant::now();
    let records = run_sweep()?;
    let secs = start.elapsed().as_secs_f64();
    let mut ok = secs <= 600.0;
    let mut detail = Vec::new();
    for p in [1.2, 1.5, 2.0] {
        let stars: Vec<Option<f64>> = records
            .iter()
            .filter(|r| r.cell.p == p && matches!(r.cell.datum, DatumSpec::Uniform { .. }))
            .map(|r| r.outcome.t_star())
            .collect();
        let all = stars.iter().all(|t| t.is_some_and(|t| t <= 50.0));
        let monotone = stars.windows(2).all(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => b <= a,
            _ => false,
        });
        ok &= all && monotone;
        detail.push(format!(
            "p={p}: t* = [{}]",
            stars
                .iter()
                .map(|t| t.map_or("none".to_string(), |v| format!("{v:.3}")))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    for r in records.iter().filter(|r| matches!(r.cell.datum, DatumSpec::SmallKernel { .. })) {
        ok &= r.outcome == Outcome::GlobalWithinHorizon;
        detail.push(format!("p={} small: {}", r.cell.p, r.outcome.label()));
    }
    detail.push(format!("{secs:.1}s"));
    Ok((ok, detail.join("; ")))
}

fn determinism() -> Check {
    let a = monte_carlo_sweep(7)?;
    let b = monte_carlo_sweep(7)?;
    let csv = |runs: &[McRun]| {
        runs.iter()
            .map(|(_, e, _)| mixheat::io::csv_string(&["x", "count"], &e.histogram_rows()))
            .collect::<Vec<_>>()
    };
    let mc_same = csv(&a) == csv(&b);
    let sweep_same = fujita::sweep_csv(&run_sweep()?) == fujita::sweep_csv(&run_sweep()?);
    Ok((
        mc_same && sweep_same,
        format!("histogram CSVs identical: {mc_same}; sweep CSVs identical: {sweep_same}"),
    ))
}

fn main() {
    let start = Instant::now();
    let small = small_data();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("kernel mass", Box::new(mass)),
        ("semigroup identity", Box::new(semigroup)),
        ("two-route agreement", Box::new(two_routes)),
        ("Cauchy closed form", Box::new(cauchy)),
        ("Monte Carlo oracle", Box::new(monte_carlo)),
        ("kernel bounds", Box::new(bounds)),
        ("ODE blow-up time", Box::new(ode_blowup)),
        ("delta schedule", Box::new(schedule)),
        ("envelope", Box::new(|| envelope(small.as_ref().map_err(Clone::clone)?))),
        ("Duhamel inequality", Box::new(|| duhamel(small.as_ref().map_err(Clone::clone)?))),
        ("certificate exponents", Box::new(certificate)),
        ("dichotomy sweep", Box::new(dichotomy)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        let (ok, detail) = match outcome {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:2} {:<22} {} ({:.1}s) {detail}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
