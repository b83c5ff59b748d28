//! Mild solutions of `∂_t u + Lu = u^p` on the periodic box.
//!
//! The linear part is propagated exactly by the symbol of `L`; the source is
//! treated by exponential time differencing (ETD1 or ETD2RK). The Picard
//! ladder `ũ_{n+1} = ũ_0 + Φũ_n` and the mild-form residual are computed
//! independently of the marching scheme, by trapezoidal quadrature in time.

use std::path::Path;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::io;
use crate::kernels::ModelParams;
use crate::spectral::{
    self, check_time, forward_unchecked, inverse_unchecked, mixed_exponent, Field, GridSpec,
    SpectrumField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Etd1,
    Etd2,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "etd1" => Ok(Scheme::Etd1),
            "etd2" => Ok(Scheme::Etd2),
            _ => Err(invalid("scheme", format!("expected etd1 or etd2, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub p: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Sup-norm at which the run is declared to blow up.
    pub blowup_threshold: f64,
    pub scheme: Scheme,
    /// Keep a field snapshot every `snapshot_stride` steps (0: none).
    pub snapshot_stride: usize,
    /// Record norms every `record_stride` steps.
    pub record_stride: usize,
    /// Turns the source `u^p` off (linear evolution only).
    pub source: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            dt: 1e-3,
            horizon: 1.0,
            blowup_threshold: 1e6,
            scheme: Scheme::Etd2,
            snapshot_stride: 0,
            record_stride: 1,
            source: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(invalid("p", "nonlinearity exponent must be > 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "time step must be > 0"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("T", "horizon must be > 0"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(invalid("U_max", "blow-up threshold must be > 0"));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be >= 1"));
        }
        Ok(())
    }
}

fn check_grid(params: &ModelParams, grid: &GridSpec) -> Result<()> {
    if params.dim != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "model dimension {} vs grid dimension {}",
            params.dim,
            grid.dim()
        )));
    }
    Ok(())
}

/// `e^{-ΔtL} u`.
pub fn propagate_linear(u: &Field, dt: f64, params: &ModelParams) -> Result<Field> {
    check_time(dt)?;
    check_grid(params, u.grid())?;
    if dt == 0.0 {
        return Ok(u.clone());
    }
    let m: Vec<f64> = mixed_exponent(u.grid(), params.s)?
        .into_iter()
        .map(|v| (-dt * v).exp())
        .collect();
    Ok(spectral::apply_multiplier(u, &m))
}

/// `φ1(z) = (1 - e^{-z})/z`.
pub fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// `φ2(z) = (e^{-z} - 1 + z)/z²`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        0.5 - z / 6.0 + z * z / 24.0 - z.powi(3) / 120.0 + z.powi(4) / 720.0
    } else {
        ((-z).exp_m1() + z) / (z * z)
    }
}

/// `B(z) = (1 - e^{-z}(1 + z))/z²`, weight of the left node in the product
/// trapezoid rule.
pub(crate) fn trapezoid_left(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        0.5 - z / 3.0 + z * z / 8.0 - z.powi(3) / 30.0 + z.powi(4) / 144.0
    } else {
        (-(-z).exp_m1() - z * (-z).exp()) / (z * z)
    }
}

/// `max(u, 0)^p`.
fn source(u: &Field, p: f64) -> Field {
    if p == 2.0 {
        return u.map(|v| if v > 0.0 { v * v } else { 0.0 });
    }
    u.map(|v| if v > 0.0 { v.powf(p) } else { 0.0 })
}

/// Precomputed multipliers for one step size.
struct Stepper {
    p: f64,
    scheme: Scheme,
    source: bool,
    decay: Vec<f64>,
    h_phi1: Vec<f64>,
    h_phi2: Vec<f64>,
}

impl Stepper {
    fn new(grid: &GridSpec, dt: f64, config: &SolverConfig, params: &ModelParams) -> Result<Self> {
        let sigma = mixed_exponent(grid, params.s)?;
        Ok(Self {
            p: config.p,
            scheme: config.scheme,
            source: config.source,
            decay: sigma.iter().map(|&v| (-v * dt).exp()).collect(),
            h_phi1: sigma.iter().map(|&v| dt * phi1(v * dt)).collect(),
            h_phi2: sigma.iter().map(|&v| dt * phi2(v * dt)).collect(),
        })
    }

    fn advance(&self, u: &Field) -> Field {
        let mut a_hat = forward_unchecked(u);
        a_hat.scale_by(&self.decay);
        if !self.source {
            return inverse_unchecked(&a_hat);
        }
        let n0 = forward_unchecked(&source(u, self.p));
        for ((c, n), w) in a_hat.coefficients_mut().iter_mut().zip(n0.coefficients()).zip(&self.h_phi1) {
            *c += n * w;
        }
        let a = inverse_unchecked(&a_hat);
        if self.scheme == Scheme::Etd1 {
            return a;
        }
        let na = forward_unchecked(&source(&a, self.p));
        for (((c, na), n), w) in a_hat
            .coefficients_mut()
            .iter_mut()
            .zip(na.coefficients())
            .zip(n0.coefficients())
            .zip(&self.h_phi2)
        {
            *c += (na - n) * w;
        }
        inverse_unchecked(&a_hat)
    }
}

/// One exponential-integrator step of size `dt`. The exponent `p` is taken
/// from `config` as is, so `p = 1` (linear growth) can be exercised here.
pub fn step(u: &Field, dt: f64, config: &SolverConfig, params: &ModelParams) -> Result<Field> {
    check_time(dt)?;
    check_grid(params, u.grid())?;
    Ok(Stepper::new(u.grid(), dt, config, params)?.advance(u))
}

/// `Σ |u(x)| / (1 + |x|^{N+2s}) Δx^N` over the box.
pub fn tail_norm(u: &Field, params: &ModelParams) -> f64 {
    let grid = u.grid();
    let q = params.dim as f64 + 2.0 * params.s;
    u.values()
        .iter()
        .enumerate()
        .map(|(i, v)| v.abs() / (1.0 + grid.radius(i).powf(q)))
        .sum::<f64>()
        * grid.cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    GlobalWithinHorizon,
    BlowUpAt { t_star: f64 },
    NumericalFailureAt { t: f64 },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::GlobalWithinHorizon => "global",
            Outcome::BlowUpAt { .. } => "blowup",
            Outcome::NumericalFailureAt { .. } => "failure",
        }
    }

    pub fn t_star(&self) -> Option<f64> {
        match self {
            Outcome::BlowUpAt { t_star } => Some(*t_star),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub config: SolverConfig,
    pub initial: Field,
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub masses: Vec<f64>,
    pub tail_norms: Vec<f64>,
    /// `(t, u(t))`, starting with the initial datum when snapshots are on.
    pub snapshots: Vec<(f64, Field)>,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn max_sup_norm(&self) -> f64 {
        self.sup_norms.iter().fold(0.0, |m, &v| m.max(v))
    }

    fn record(&mut self, t: f64, u: &Field) {
        self.times.push(t);
        self.sup_norms.push(u.sup_norm());
        self.masses.push(u.integral());
        self.tail_norms.push(tail_norm(u, &self.params));
    }

    pub fn rows(&self) -> Vec<Vec<String>> {
        (0..self.times.len())
            .map(|i| {
                io::float_row(&[
                    self.times[i],
                    self.sup_norms[i],
                    self.masses[i],
                    self.tail_norms[i],
                ])
            })
            .collect()
    }

    /// Trajectory CSV `t,sup_norm,mass,tail_norm`, its JSON sidecar and one
    /// kernel-format CSV per snapshot (`<stem>_snap_<k>.csv`).
    pub fn write(&self, csv: &Path, sidecar: &Path) -> Result<()> {
        io::write_csv(csv, &["t", "sup_norm", "mass", "tail_norm"], &self.rows())?;
        let grid = self.initial.grid();
        io::write_json(
            sidecar,
            &serde_json::json!({
                "outcome": self.outcome.label(),
                "t_star": self.outcome.t_star(),
                "detail": self.outcome,
                "config": self.config,
                "params": self.params,
                "grid": {"N": grid.dim(), "R": grid.half_length(), "n": grid.points()},
                "snapshot_times": self.snapshots.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
            }),
        )?;
        let stem = csv.with_extension("");
        for (k, (_, field)) in self.snapshots.iter().enumerate() {
            let name = format!(
                "{}_snap_{k:04}.csv",
                stem.file_name().and_then(|s| s.to_str()).unwrap_or("trajectory")
            );
            io::write_field_csv(&stem.with_file_name(name), field)?;
        }
        Ok(())
    }
}

fn failure_scale(u: &Field) -> Option<usize> {
    let sup = u.sup_norm();
    u.values()
        .iter()
        .position(|&v| !v.is_finite() || v < -1e-10 * sup)
}

/// Marches `u0` to the horizon, stopping at the first crossing of the
/// blow-up threshold (refined by one halving of the step) or at the first
/// non-finite or significantly negative value.
pub fn run(u0: &Field, config: &SolverConfig, params: &ModelParams) -> Result<Trajectory> {
    config.validate()?;
    check_grid(params, u0.grid())?;
    if !u0.is_finite() {
        return Err(invalid("u0", "initial datum must be finite"));
    }
    if u0.min() < -1e-10 * u0.sup_norm() {
        return Err(invalid("u0", "initial datum must be nonnegative"));
    }
    if u0.sup_norm() >= config.blowup_threshold {
        return Err(invalid("U_max", "blow-up threshold must exceed the initial sup-norm"));
    }
    let grid = *u0.grid();
    let dt = config.dt;
    let full = Stepper::new(&grid, dt, config, params)?;
    let half = Stepper::new(&grid, dt / 2.0, config, params)?;
    let steps = ((config.horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let last_dt = config.horizon - (steps - 1) as f64 * dt;

    let mut traj = Trajectory {
        params: *params,
        config: *config,
        initial: u0.clone(),
        times: Vec::new(),
        sup_norms: Vec::new(),
        masses: Vec::new(),
        tail_norms: Vec::new(),
        snapshots: Vec::new(),
        outcome: Outcome::GlobalWithinHorizon,
    };
    traj.record(0.0, u0);
    if config.snapshot_stride > 0 {
        traj.snapshots.push((0.0, u0.clone()));
    }

    let mut u = u0.clone();
    for k in 0..steps {
        let t = k as f64 * dt;
        let (h, next) = if k + 1 == steps && (last_dt - dt).abs() > 1e-12 * dt {
            let short = Stepper::new(&grid, last_dt, config, params)?;
            (last_dt, short.advance(&u))
        } else {
            (dt, full.advance(&u))
        };
        let t_next = if k + 1 == steps { config.horizon } else { t + h };
        if failure_scale(&next).is_some() {
            traj.record(t_next, &next);
            traj.outcome = Outcome::NumericalFailureAt { t: t_next };
            return Ok(traj);
        }
        if next.sup_norm() >= config.blowup_threshold {
            let first = half.advance(&u);
            let t_star = if first.sup_norm() >= config.blowup_threshold || !first.is_finite() {
                t + h / 4.0
            } else {
                t + 3.0 * h / 4.0
            };
            traj.record(t_next, &next);
            traj.outcome = Outcome::BlowUpAt { t_star };
            return Ok(traj);
        }
        u = next;
        if (k + 1) % config.record_stride == 0 || k + 1 == steps {
            traj.record(t_next, &u);
        }
        if config.snapshot_stride > 0 && ((k + 1) % config.snapshot_stride == 0 || k + 1 == steps) {
            traj.snapshots.push((t_next, u.clone()));
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `max |u - RHS| / sup|u(t)|` over all snapshot times and grid points.
    pub max_relative_defect: f64,
    pub at_time: f64,
    pub snapshots: usize,
}

/// Recomputes the right side of the mild formulation,
/// `e^{-tL}u0 + ∫_0^t e^{-(t-τ)L} u^p(τ) dτ`, from the initial datum and the
/// stored snapshots (product trapezoid rule in τ) and compares it with the
/// stored solution.
pub fn mild_residual(traj: &Trajectory) -> Result<ResidualReport> {
    let snaps = &traj.snapshots;
    if snaps.len() < 2 || snaps[0].0 != 0.0 {
        return Err(Error::Insufficient(
            "mild residual needs the initial datum and at least one later snapshot".into(),
        ));
    }
    let grid = *traj.initial.grid();
    let sigma = mixed_exponent(&grid, traj.params.s)?;
    let u0_hat = forward_unchecked(&traj.initial);
    let p = traj.config.p;
    let mut duhamel = SpectrumField::zeros(grid);
    let mut prev_src = forward_unchecked(&source(&snaps[0].1, p));
    let mut report = ResidualReport {
        max_relative_defect: 0.0,
        at_time: 0.0,
        snapshots: snaps.len(),
    };
    for w in 1..snaps.len() {
        let (ta, tb) = (snaps[w - 1].0, snaps[w].0);
        let h = tb - ta;
        let src = forward_unchecked(&source(&snaps[w].1, p));
        for (i, c) in duhamel.coefficients_mut().iter_mut().enumerate() {
            let z = sigma[i] * h;
            let decay = (-z).exp();
            let b = trapezoid_left(z);
            let lin = if traj.config.source {
                h * (prev_src.coefficients()[i] * b + src.coefficients()[i] * (phi1(z) - b))
            } else {
                num_complex::Complex64::new(0.0, 0.0)
            };
            *c = *c * decay + lin;
        }
        let mut rhs = u0_hat.clone();
        for (i, c) in rhs.coefficients_mut().iter_mut().enumerate() {
            *c = *c * (-sigma[i] * tb).exp() + duhamel.coefficients()[i];
        }
        let rhs = inverse_unchecked(&rhs);
        let u = &snaps[w].1;
        let scale = u.sup_norm();
        if scale > 0.0 {
            let defect = u.max_abs_diff(&rhs)? / scale;
            if defect > report.max_relative_defect {
                report.max_relative_defect = defect;
                report.at_time = tb;
            }
        }
        prev_src = src;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct IterationLadder {
    pub times: Vec<f64>,
    /// `iterates[k][i] = ũ_k(·, times[i])`.
    pub iterates: Vec<Vec<Field>>,
    pub sup_norms: Vec<f64>,
    /// `max (ũ_{k} - ũ_{k+1})_+` for each consecutive pair.
    pub monotonicity_defects: Vec<f64>,
    /// `‖ũ_{k+1} - ũ_k‖_∞` for each consecutive pair.
    pub increments: Vec<f64>,
    /// An iterate exceeded the blow-up threshold; the ladder stops there.
    pub diverged: bool,
}

/// Geometric time grid `0, t_1, …, t_{n-1} = horizon` with `t_1 = first`.
pub fn graded_times(horizon: f64, nodes: usize, first: f64) -> Result<Vec<f64>> {
    if nodes < 3 || !(first > 0.0 && first < horizon) {
        return Err(invalid("time grid", "need >= 3 nodes and 0 < first < horizon"));
    }
    let ratio = (horizon / first).powf(1.0 / (nodes - 2) as f64);
    let mut times = vec![0.0];
    times.extend((0..nodes - 1).map(|k| first * ratio.powi(k as i32)));
    *times.last_mut().unwrap() = horizon;
    Ok(times)
}

fn check_time_grid(times: &[f64], horizon: f64) -> Result<()> {
    if times.len() < 2 || times[0] != 0.0 {
        return Err(invalid("time grid", "must start at 0 and have >= 2 nodes"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("time grid", "must be strictly increasing"));
    }
    if *times.last().unwrap() > horizon * (1.0 + 1e-12) {
        return Err(invalid("time grid", "exceeds the horizon"));
    }
    Ok(())
}

/// `ũ_0(t) = e^{-tL}u0`, `ũ_{k+1} = ũ_0 + Φũ_k` with
/// `Φu(t) = ∫_0^t e^{-(t-τ)L} u^p(τ) dτ` by the trapezoidal rule on `times`.
pub fn picard_iterate(
    u0: &Field,
    times: &[f64],
    iterations: usize,
    config: &SolverConfig,
    params: &ModelParams,
) -> Result<IterationLadder> {
    config.validate()?;
    check_grid(params, u0.grid())?;
    check_time_grid(times, config.horizon)?;
    if iterations == 0 {
        return Err(invalid("n_iters", "at least one iteration"));
    }
    let grid = *u0.grid();
    let sigma = mixed_exponent(&grid, params.s)?;
    let u0_hat = forward_unchecked(u0);
    let base_hat: Vec<SpectrumField> = times
        .iter()
        .map(|&t| {
            let mut c = u0_hat.clone();
            let m: Vec<f64> = sigma.iter().map(|&v| (-v * t).exp()).collect();
            c.scale_by(&m);
            c
        })
        .collect();
    let base: Vec<Field> = base_hat.iter().map(inverse_unchecked).collect();
    let sup_of = |fields: &[Field]| fields.iter().fold(0.0f64, |m, f| m.max(f.sup_norm()));
    let mut ladder = IterationLadder {
        times: times.to_vec(),
        sup_norms: vec![sup_of(&base)],
        iterates: vec![base],
        monotonicity_defects: Vec::new(),
        increments: Vec::new(),
        diverged: false,
    };
    for _ in 0..iterations {
        let current = ladder.iterates.last().unwrap();
        let src: Vec<SpectrumField> = current
            .iter()
            .map(|u| forward_unchecked(&source(u, config.p)))
            .collect();
        let mut next = Vec::with_capacity(times.len());
        for (i, &ti) in times.iter().enumerate() {
            let mut acc = base_hat[i].clone();
            for j in 0..=i {
                let left = if j > 0 { times[j] - times[j - 1] } else { 0.0 };
                let right = if j < i { times[j + 1] - times[j] } else { 0.0 };
                let w = 0.5 * (left + right);
                if w == 0.0 {
                    continue;
                }
                let lag = ti - times[j];
                for (k, c) in acc.coefficients_mut().iter_mut().enumerate() {
                    *c += src[j].coefficients()[k] * (w * (-sigma[k] * lag).exp());
                }
            }
            next.push(inverse_unchecked(&acc));
        }
        let mut defect: f64 = 0.0;
        let mut increment: f64 = 0.0;
        for (a, b) in current.iter().zip(&next) {
            for (x, y) in a.values().iter().zip(b.values()) {
                defect = defect.max(x - y);
                increment = increment.max((y - x).abs());
            }
        }
        let sup = sup_of(&next);
        ladder.monotonicity_defects.push(defect.max(0.0));
        ladder.increments.push(increment);
        ladder.sup_norms.push(sup);
        ladder.iterates.push(next);
        if !(sup < config.blowup_threshold) {
            ladder.diverged = true;
            break;
        }
    }
    Ok(ladder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> ModelParams {
        ModelParams::new(1, 0.5).unwrap()
    }

    fn grid() -> GridSpec {
        GridSpec::new(1, 20.0, 256).unwrap()
    }

    fn bump(grid: GridSpec, amp: f64) -> Field {
        Field::from_fn(grid, |x| amp * (-x[0] * x[0]).exp()).unwrap()
    }

    #[test]
    fn phi_functions() {
        for z in [1e-8f64, 1e-3, 9.9e-3, 1.01e-2, 0.5, 3.0, 40.0] {
            let direct1 = (1.0 - (-z).exp()) / z;
            assert_relative_eq!(phi1(z), direct1, max_relative = 1e-7);
            // φ2 = (1 - φ1)/z
            let via = (1.0 - phi1(z)) / z;
            assert_relative_eq!(phi2(z), via, max_relative = if z < 1e-2 { 1e-5 } else { 1e-12 });
            // B = (φ1 - e^{-z})/z
            let b = (phi1(z) - (-z).exp()) / z;
            assert_relative_eq!(trapezoid_left(z), b, max_relative = if z < 1e-2 { 1e-5 } else { 1e-12 });
        }
        assert_eq!(phi1(0.0), 1.0);
        assert_eq!(phi2(0.0), 0.5);
    }

    #[test]
    fn propagate_identities() {
        let u = bump(grid(), 1.0);
        assert_eq!(propagate_linear(&u, 0.0, &params()).unwrap(), u);
        let c = Field::constant(grid(), 3.0);
        let pc = propagate_linear(&c, 2.0, &params()).unwrap();
        assert!(pc.max_abs_diff(&c).unwrap() < 1e-13);
        let once = propagate_linear(&u, 0.2, &params()).unwrap();
        assert!((once.integral() - u.integral()).abs() <= 1e-10 * u.integral());
        assert!(once.sup_norm() <= u.sup_norm());
    }

    proptest! {
        #[test]
        fn two_half_steps_equal_one(dt in 0.0f64..2.0, s in 0.05f64..0.95) {
            let params = ModelParams::new(1, s).unwrap();
            let u = bump(grid(), 1.0);
            let a = propagate_linear(&propagate_linear(&u, dt, &params).unwrap(), dt, &params).unwrap();
            let b = propagate_linear(&u, 2.0 * dt, &params).unwrap();
            prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn uniform_step_follows_the_ode() {
        let cfg = SolverConfig { scheme: Scheme::Etd1, ..SolverConfig::default() };
        for dt in [1e-2, 5e-3] {
            let u = Field::constant(grid(), 1.0);
            let next = step(&u, dt, &cfg, &params()).unwrap();
            let exact = 1.0 / (1.0 - dt);
            assert!((next.values()[7] - exact).abs() <= 2.0 * dt * dt);
        }
        let zero = Field::zeros(grid());
        assert_eq!(step(&zero, 0.1, &SolverConfig::default(), &params()).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn linear_potential_growth() {
        let cfg = SolverConfig { p: 1.0, ..SolverConfig::default() };
        let u = Field::constant(grid(), 1.0);
        let dt = 1e-2;
        let next = step(&u, dt, &cfg, &params()).unwrap();
        assert!((next.values()[0] - dt.exp()).abs() < dt.powi(3));
    }

    #[test]
    fn source_free_step_is_propagation() {
        let cfg = SolverConfig { source: false, ..SolverConfig::default() };
        let u = bump(grid(), 2.0);
        let a = step(&u, 0.3, &cfg, &params()).unwrap();
        let b = propagate_linear(&u, 0.3, &params()).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-14);
    }

    #[test]
    fn ode_blow_up_times() {
        for (p, a) in [(2.0, 1.0), (3.0, 1.0), (2.0, 2.0)] {
            let cfg = SolverConfig { p, horizon: 2.0, ..SolverConfig::default() };
            let traj = run(&Field::constant(grid(), a), &cfg, &params()).unwrap();
            let exact = a.powf(1.0 - p) / (p - 1.0);
            let t_star = traj.outcome.t_star().expect("blow-up");
            assert!((t_star - exact).abs() <= 0.02 * exact, "p={p} a={a}: {t_star}");
        }
    }

    #[test]
    fn zero_datum_is_global() {
        let cfg = SolverConfig { horizon: 0.5, ..SolverConfig::default() };
        let traj = run(&Field::zeros(grid()), &cfg, &params()).unwrap();
        assert_eq!(traj.outcome, Outcome::GlobalWithinHorizon);
        assert!(traj.sup_norms.iter().all(|&v| v == 0.0));
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn source_free_mass_is_conserved() {
        let cfg = SolverConfig { source: false, horizon: 10.0, dt: 1e-2, ..SolverConfig::default() };
        let u = bump(grid(), 1.0);
        let traj = run(&u, &cfg, &params()).unwrap();
        let m0 = traj.masses[0];
        assert!(traj.masses.iter().all(|m| (m - m0).abs() <= 1e-8 * m0));
        assert!(traj.sup_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn run_rejects_bad_input() {
        let cfg = SolverConfig::default();
        assert!(run(&Field::constant(grid(), 2e6), &cfg, &params()).is_err());
        let neg = Field::constant(grid(), -1.0);
        assert!(run(&neg, &cfg, &params()).is_err());
        assert!(SolverConfig { p: 1.0, ..cfg }.validate().is_err());
        assert!(SolverConfig { dt: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn tail_norm_examples() {
        let p = params();
        let g = GridSpec::new(1, 40.0, 4096).unwrap();
        assert_eq!(tail_norm(&Field::zeros(g), &p), 0.0);
        let one = tail_norm(&Field::constant(g, 1.0), &p);
        // left-endpoint rule of a smooth integrand on [-R, R)
        assert_relative_eq!(one, 2.0 * 40f64.atan(), max_relative = 1e-4);
        let u = bump(g, 1.0);
        assert_relative_eq!(tail_norm(&u.scaled(2.0), &p), 2.0 * tail_norm(&u, &p), max_relative = 1e-15);
    }

    #[test]
    fn mild_residual_cases() {
        let p = params();
        let lin = SolverConfig { source: false, horizon: 0.5, snapshot_stride: 10, ..SolverConfig::default() };
        let traj = run(&bump(grid(), 1.0), &lin, &p).unwrap();
        assert!(mild_residual(&traj).unwrap().max_relative_defect <= 1e-8);

        let zero = run(&Field::zeros(grid()), &lin, &p).unwrap();
        assert_eq!(mild_residual(&zero).unwrap().max_relative_defect, 0.0);

        let small = SolverConfig { horizon: 0.5, snapshot_stride: 1, ..SolverConfig::default() };
        let traj = run(&bump(grid(), 0.5), &small, &p).unwrap();
        assert!(mild_residual(&traj).unwrap().max_relative_defect <= 1e-3);

        let none = SolverConfig { snapshot_stride: 0, ..small };
        let traj = run(&bump(grid(), 0.5), &none, &p).unwrap();
        assert!(mild_residual(&traj).is_err());
    }

    #[test]
    fn etd2_residual_is_second_order() {
        let p = params();
        let defect = |dt: f64| {
            let cfg = SolverConfig { dt, horizon: 0.4, snapshot_stride: 1, ..SolverConfig::default() };
            let traj = run(&bump(grid(), 1.0), &cfg, &p).unwrap();
            mild_residual(&traj).unwrap().max_relative_defect
        };
        let coarse = defect(4e-3);
        let fine = defect(2e-3);
        assert!(coarse / fine >= 3.5, "{coarse} / {fine}");
    }

    #[test]
    fn picard_ladder_is_monotone_and_contracting() {
        let p = params();
        let cfg = SolverConfig { p: 3.0, horizon: 4.0, ..SolverConfig::default() };
        let times = graded_times(4.0, 20, 1e-2).unwrap();
        let ladder = picard_iterate(&bump(grid(), 0.3), &times, 5, &cfg, &p).unwrap();
        assert!(!ladder.diverged);
        assert!(ladder.monotonicity_defects.iter().all(|&d| d <= 1e-12));
        assert!(ladder.increments.windows(2).all(|w| w[1] < w[0]));
        let zero = picard_iterate(&Field::zeros(grid()), &times, 3, &cfg, &p).unwrap();
        assert!(zero.sup_norms.iter().all(|&v| v == 0.0));
        assert!(picard_iterate(&bump(grid(), 0.3), &[0.1, 0.2], 1, &cfg, &p).is_err());
    }

    #[test]
    fn trajectory_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SolverConfig { horizon: 0.01, snapshot_stride: 5, ..SolverConfig::default() };
        let traj = run(&bump(grid(), 1.0), &cfg, &params()).unwrap();
        traj.write(&dir.path().join("traj.csv"), &dir.path().join("traj.json")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("traj.csv")).unwrap();
        assert!(text.starts_with("t,sup_norm,mass,tail_norm\n"));
        assert_eq!(text.lines().count(), 1 + traj.times.len());
        assert!(dir.path().join("traj_snap_0002.csv").exists());
    }
}
