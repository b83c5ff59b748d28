//! Quantitative pieces of the Fujita dichotomy at `p̄ = 1 + 2s/N`: the
//! `δ_n` schedule and `τ0` threshold of the global-existence argument, the
//! kernel inequality behind it, the Picard envelope, test-function
//! certificates for non-existence and a sweep across `p̄`.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::io;
use crate::kernels::{
    estimate_bound_constant_with, mixed_kernel_symbol, BoundScanOptions, KernelBoundEstimate,
    KernelOptions, ModelParams,
};
use crate::mild::{self, IterationLadder, Outcome, SolverConfig, Trajectory};
use crate::spectral::{
    check_order, forward_unchecked, fractional_laplacian, inverse_unchecked, laplacian,
    mixed_exponent, Field, GridSpec,
};

/// `p̄ = 1 + 2s/N`.
pub fn critical_exponent(dim: usize, s: f64) -> Result<f64> {
    if dim == 0 {
        return Err(invalid("N", "dimension must be >= 1"));
    }
    check_order(s)?;
    Ok(1.0 + 2.0 * s / dim as f64)
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", "exponent must be > 1"));
    }
    Ok(())
}

/// `δ0* = (1 - 1/p) p^{-1/(p-1)}`: the largest `δ0` for which
/// `x = δ0 + x^p` has a root.
pub fn delta0_threshold(p: f64) -> Result<f64> {
    check_p(p)?;
    Ok((1.0 - 1.0 / p) * p.powf(-1.0 / (p - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FujitaSchedule {
    pub delta0: f64,
    pub p: f64,
    /// `δ_0, δ_1, …` (stops early once the sequence exceeds 1e300).
    pub deltas: Vec<f64>,
    /// Smallest root `M` of `x = δ0 + x^p`, when it exists.
    pub limit: Option<f64>,
    pub converged: bool,
    pub threshold: f64,
}

/// `δ_{n+1} = δ0 + δ_n^p` for `n < n_max`, with the limit `M` found by
/// bisection of `x - x^p - δ0` on `[0, p^{-1/(p-1)}]`.
pub fn delta_schedule(delta0: f64, p: f64, n_max: usize) -> Result<FujitaSchedule> {
    check_p(p)?;
    if !(delta0 >= 0.0 && delta0.is_finite()) {
        return Err(invalid("delta0", "must be finite and >= 0"));
    }
    let threshold = delta0_threshold(p)?;
    let mut deltas = vec![delta0];
    let mut d = delta0;
    for _ in 0..n_max {
        d = delta0 + d.powf(p);
        deltas.push(d);
        if d > 1e300 {
            break;
        }
    }
    let converged = delta0 <= threshold;
    let limit = converged.then(|| {
        let peak = p.powf(-1.0 / (p - 1.0));
        // double root at the threshold: bisection only resolves it to √ε
        if delta0 >= threshold * (1.0 - 4.0 * f64::EPSILON) {
            return peak;
        }
        let (mut lo, mut hi) = (0.0f64, peak);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - mid.powf(p) - delta0 >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if delta0 == 0.0 {
            0.0
        } else {
            hi
        }
    });
    Ok(FujitaSchedule {
        delta0,
        p,
        deltas,
        limit,
        converged,
        threshold,
    })
}

/// `a = N(p-1)/(2s)`, the time-decay exponent of `p^{p-1}` in the
/// Duhamel bound.
pub fn duhamel_exponent(params: &ModelParams, p: f64) -> f64 {
    params.dim as f64 * (p - 1.0) / (2.0 * params.s)
}

/// `(C^{1-p}(a - 1))^{2s/(2s - N(p-1))}`.
pub fn tau0_lower_bound(params: &ModelParams, p: f64, c: f64) -> Result<f64> {
    check_p(p)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("C", "kernel constant must be > 0"));
    }
    let a = duhamel_exponent(params, p);
    if a <= 1.0 {
        return Err(invalid(
            "p",
            format!("need p > {} (N(p-1) > 2s)", params.critical_exponent),
        ));
    }
    let n = params.dim as f64;
    let s2 = 2.0 * params.s;
    Ok((c.powf(1.0 - p) * (a - 1.0)).powf(s2 / (s2 - n * (p - 1.0))))
}

/// `∫_0^∞ (τ + τ0)^{-a} dτ` by Simpson's rule in `u = ln((τ+τ0)/τ0)` up to
/// `τ = cut`, plus the closed-form tail beyond `cut`.
pub fn tau_integral(a: f64, tau0: f64, cut: f64) -> Result<f64> {
    if !(a > 1.0) || !(tau0 > 0.0) || !(cut > 0.0) {
        return Err(invalid("tau integral", "need a > 1, tau0 > 0, cut > 0"));
    }
    let top = ((cut + tau0) / tau0).ln();
    let steps = 4000;
    let h = top / steps as f64;
    let f = |u: f64| tau0.powf(1.0 - a) * ((1.0 - a) * u).exp();
    let mut acc = f(0.0) + f(top);
    for i in 1..steps {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(acc * h / 3.0 + (cut + tau0).powf(1.0 - a) / (a - 1.0))
}

/// `(1-ε) δ0 p_{τ0}`, with the torus kernel of the grid.
pub fn small_initial_datum(
    grid: &GridSpec,
    params: &ModelParams,
    delta0: f64,
    tau0: f64,
    epsilon: f64,
) -> Result<Field> {
    if !(delta0 > 0.0) || !(tau0 > 0.0) {
        return Err(invalid("delta0/tau0", "must be > 0"));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(invalid("epsilon", "must lie in [0, 1)"));
    }
    let k = mixed_kernel_symbol(params, grid, tau0, &KernelOptions::default())?;
    Ok(k.field.scaled((1.0 - epsilon) * delta0))
}

/// `sup_x p_t(x) = p_t(0)` of the torus kernel, from its Fourier series.
pub fn torus_kernel_peak(sigma: &[f64], grid: &GridSpec, t: f64) -> f64 {
    let vol = (2.0 * grid.half_length()).powi(grid.dim() as i32);
    sigma.iter().map(|&v| (-t * v).exp()).sum::<f64>() / vol
}

/// Constant `C` of the on-diagonal bound `p_t ≤ C t^{-N/(2s)}`, estimated
/// over `t ∈ [0.01, 100]` with enough padding to reach the free-space
/// regime; errors when it does not stabilize under refinement.
pub fn empirical_kernel_constant(
    params: &ModelParams,
    grid: &GridSpec,
) -> Result<(f64, KernelBoundEstimate)> {
    let est = estimate_bound_constant_with(
        params,
        (0.01, 100.0),
        grid,
        &BoundScanOptions {
            padding: 32,
            ..BoundScanOptions::default()
        },
    )?;
    Ok((est.stable_mixed_constant()?, est))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuhamelReport {
    pub p: f64,
    pub tau0: f64,
    pub kernel_constant: f64,
    /// `∫_0^∞ (τ+τ0)^{-a} dτ` by quadrature plus tail, and in closed form.
    pub tau_integral: f64,
    pub tau_integral_exact: f64,
    /// `C^{p-1} ∫_0^∞ (τ+τ0)^{-a} dτ`; the argument needs this below one.
    pub factor: f64,
    /// `min (p_{t+τ0} - LHS)/p_{t+τ0}` over the sampled points.
    pub min_margin: f64,
    pub worst_x: f64,
    pub worst_t: f64,
    /// `max LHS / (factor · p_{t+τ0})`.
    pub max_lhs_over_bound: f64,
    pub strict: bool,
}

/// Evaluates `LHS(x,t) = ∫_0^t ∫ p_{t-τ}(x-y) p_{τ+τ0}(y)^p dy dτ` on the
/// torus of `grid` at every grid point and every `t` of `t_grid` (product
/// trapezoid rule in τ on `substeps` subintervals of each `t_grid` interval)
/// and compares it with `p_{t+τ0}(x)`.
pub fn duhamel_bound_check(
    params: &ModelParams,
    p: f64,
    tau0: f64,
    kernel_constant: f64,
    grid: &GridSpec,
    t_grid: &[f64],
    substeps: usize,
) -> Result<DuhamelReport> {
    let bound = tau0_lower_bound(params, p, kernel_constant)?;
    if tau0 < bound {
        return Err(invalid("tau0", format!("tau0 = {tau0} is below the bound {bound}")));
    }
    if t_grid.len() < 2 || t_grid[0] != 0.0 || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("t_grid", "must start at 0 and increase strictly"));
    }
    let a = duhamel_exponent(params, p);
    let t_max = *t_grid.last().unwrap();
    let integral = tau_integral(a, tau0, t_max.max(1.0) * 10.0)?;
    let exact = tau0.powf(1.0 - a) / (a - 1.0);
    let factor = kernel_constant.powf(p - 1.0) * integral;

    let sigma = mixed_exponent(grid, params.s)?;
    let kernel_at = |t: f64| -> Result<Field> {
        Ok(mixed_kernel_symbol(params, grid, t, &KernelOptions::default())?.field)
    };
    let src_at = |t: f64| -> Result<_> { Ok(forward_unchecked(&kernel_at(t + tau0)?.map(|v| v.max(0.0).powf(p)))) };

    let mut report = DuhamelReport {
        p,
        tau0,
        kernel_constant,
        tau_integral: integral,
        tau_integral_exact: exact,
        factor,
        min_margin: f64::INFINITY,
        worst_x: 0.0,
        worst_t: 0.0,
        max_lhs_over_bound: 0.0,
        strict: true,
    };
    let mut acc = crate::spectral::SpectrumField::zeros(*grid);
    let mut prev = src_at(0.0)?;
    let mut tau = 0.0;
    let sub = substeps.max(1);
    for w in t_grid.windows(2) {
        let h = (w[1] - w[0]) / sub as f64;
        for k in 1..=sub {
            let next_tau = if k == sub { w[1] } else { w[0] + k as f64 * h };
            let h = next_tau - tau;
            let next = src_at(next_tau)?;
            for (i, c) in acc.coefficients_mut().iter_mut().enumerate() {
                let z = sigma[i] * h;
                let b = mild::trapezoid_left(z);
                *c = *c * (-z).exp()
                    + (prev.coefficients()[i] * b + next.coefficients()[i] * (mild::phi1(z) - b)) * h;
            }
            prev = next;
            tau = next_tau;
        }
        let t = w[1];
        let lhs = inverse_unchecked(&acc);
        let rhs = kernel_at(t + tau0)?;
        for (i, (l, r)) in lhs.values().iter().zip(rhs.values()).enumerate() {
            let margin = (r - l) / r;
            if margin < report.min_margin {
                report.min_margin = margin;
                report.worst_x = grid.radius(i);
                report.worst_t = t;
            }
            report.max_lhs_over_bound = report.max_lhs_over_bound.max(l / (factor * r));
        }
    }
    report.strict = report.min_margin > 0.0;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    /// `max_{x,t} ũ_n / p_{t+τ0}` for each iterate.
    pub ratios: Vec<f64>,
    pub deltas: Vec<f64>,
    pub limit: Option<f64>,
    pub tolerance: f64,
    /// Iterates with `ratio > δ_n + tolerance`.
    pub violations: Vec<usize>,
}

impl EnvelopeReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares every iterate of a ladder with `δ_n p_{t+τ0}` (torus kernel).
pub fn envelope_check(
    ladder: &IterationLadder,
    schedule: &FujitaSchedule,
    tau0: f64,
    params: &ModelParams,
    tolerance: f64,
) -> Result<EnvelopeReport> {
    let grid = *ladder.iterates[0][0].grid();
    let kernels: Vec<Field> = ladder
        .times
        .iter()
        .map(|&t| Ok(mixed_kernel_symbol(params, &grid, t + tau0, &KernelOptions::default())?.field))
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = ladder
        .iterates
        .iter()
        .map(|it| {
            it.iter()
                .zip(&kernels)
                .flat_map(|(u, k)| u.values().iter().zip(k.values()).map(|(a, b)| a / b))
                .fold(0.0, f64::max)
        })
        .collect();
    let violations = ratios
        .iter()
        .enumerate()
        .filter(|(n, r)| {
            let d = schedule.deltas.get(*n).copied().unwrap_or(f64::INFINITY);
            **r > d + tolerance
        })
        .map(|(n, _)| n)
        .collect();
    Ok(EnvelopeReport {
        ratios,
        deltas: schedule.deltas.iter().take(ladder.iterates.len()).copied().collect(),
        limit: schedule.limit,
        tolerance,
        violations,
    })
}

/// `S(v) = f(v)/(f(v) + f(1-v))`, `f(v) = e^{-1/v}`: a C^∞ step from 0 at
/// `v <= 0` to 1 at `v >= 1`.
fn smooth_step(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if v >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / v).exp();
        let b = (-1.0 / (1.0 - v)).exp();
        a / (a + b)
    }
}

fn smooth_step_derivative(v: f64) -> f64 {
    if v <= 0.0 || v >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / v).exp();
    let b = (-1.0 / (1.0 - v)).exp();
    (a / (v * v) * b + a * b / ((1.0 - v) * (1.0 - v))) / ((a + b) * (a + b))
}

/// Cut-off profile: 1 on `[0, 1/2]`, 0 on `[1, ∞)`.
pub fn cutoff(rho: f64) -> f64 {
    smooth_step(2.0 * (1.0 - rho))
}

pub fn cutoff_derivative(rho: f64) -> f64 {
    -2.0 * smooth_step_derivative(2.0 * (1.0 - rho))
}

/// `φ(x,t) = ζ^m(x/(βr)) ψ^m(t/r^{2s})` with `m = 2p/(p-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunctionFamily {
    pub p: f64,
    pub r: f64,
    /// Spatial stretch of the critical-case variant (1 otherwise).
    pub beta: f64,
}

impl TestFunctionFamily {
    pub fn new(p: f64, r: f64) -> Result<Self> {
        Self::stretched(p, r, 1.0)
    }

    pub fn stretched(p: f64, r: f64, beta: f64) -> Result<Self> {
        check_p(p)?;
        if !(r > 1.0) || !(beta >= 1.0) {
            return Err(invalid("r/beta", "need r > 1 and beta >= 1"));
        }
        Ok(Self { p, r, beta })
    }

    pub fn m(&self) -> f64 {
        2.0 * self.p / (self.p - 1.0)
    }

    pub fn time_support(&self, s: f64) -> f64 {
        self.r.powf(2.0 * s)
    }

    /// `ψ^m(t/r^{2s})` and its time derivative.
    pub fn time_factor(&self, s: f64, t: f64) -> (f64, f64) {
        let scale = self.time_support(s);
        let m = self.m();
        let psi = cutoff(t / scale);
        let value = psi.powf(m);
        let deriv = if psi > 0.0 {
            m * psi.powf(m - 1.0) * cutoff_derivative(t / scale) / scale
        } else {
            0.0
        };
        (value, deriv)
    }
}

/// Spatial part of a test function with its spectral derivatives.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub family: TestFunctionFamily,
    pub s: f64,
    /// `ξ = ζ^m(x/(βr))`.
    pub xi: Field,
    pub laplacian: Field,
    pub fractional: Field,
    /// `ψ^m(t/r^{2s})` and `∂_t` of it on the time grid.
    pub times: Vec<f64>,
    pub time_values: Vec<f64>,
    pub time_derivatives: Vec<f64>,
}

impl TestFunction {
    /// `(L ξ)(x) = -Δξ + (-Δ)^s ξ`.
    pub fn generator(&self) -> Field {
        let v = self
            .laplacian
            .values()
            .iter()
            .zip(self.fractional.values())
            .map(|(l, f)| -l + f)
            .collect();
        Field::new(*self.xi.grid(), v).expect("finite")
    }
}

pub fn build_test_function(
    family: &TestFunctionFamily,
    grid: &GridSpec,
    t_grid: &[f64],
    s: f64,
) -> Result<TestFunction> {
    check_order(s)?;
    let radius = family.beta * family.r;
    if radius >= grid.half_length() {
        return Err(invalid("r", format!("support radius {radius} exceeds the box")));
    }
    if t_grid.last().copied().unwrap_or(0.0) < family.time_support(s) {
        return Err(invalid("t_grid", "time support exceeds the horizon"));
    }
    let m = family.m();
    let xi = Field::from_fn(*grid, |x| {
        let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt() / radius;
        cutoff(rho).powf(m)
    })?;
    let (time_values, time_derivatives) = t_grid.iter().map(|&t| family.time_factor(s, t)).unzip();
    Ok(TestFunction {
        family: *family,
        s,
        laplacian: laplacian(&xi),
        fractional: fractional_laplacian(&xi, s)?,
        xi,
        times: t_grid.to_vec(),
        time_values,
        time_derivatives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// `max ((-Δ)^s ζ_r^m - m ζ_r^{m-1} (-Δ)^s ζ_r)`; nonpositive when the
    /// inequality holds.
    pub max_violation: f64,
    /// `max |(-Δ)^s ζ_r^m|`.
    pub scale: f64,
}

impl ConvexityReport {
    pub fn holds(&self, relative_tolerance: f64) -> bool {
        self.max_violation <= relative_tolerance * self.scale
    }
}

/// Pointwise check of `(-Δ)^s[ζ_r^m] ≤ m ζ_r^{m-1} (-Δ)^s[ζ_r]`.
pub fn convexity_check(family: &TestFunctionFamily, grid: &GridSpec, s: f64) -> Result<ConvexityReport> {
    let radius = family.beta * family.r;
    if radius >= grid.half_length() {
        return Err(invalid("r", "support radius exceeds the box"));
    }
    let m = family.m();
    let zeta = Field::from_fn(*grid, |x| cutoff(x.iter().map(|v| v * v).sum::<f64>().sqrt() / radius))?;
    let lhs = fractional_laplacian(&zeta.map(|z| z.powf(m)), s)?;
    let frac = fractional_laplacian(&zeta, s)?;
    let mut report = ConvexityReport {
        max_violation: f64::NEG_INFINITY,
        scale: lhs.sup_norm(),
    };
    for ((l, z), f) in lhs.values().iter().zip(zeta.values()).zip(frac.values()) {
        let rhs = m * z.powf(m - 1.0) * f;
        report.max_violation = report.max_violation.max(l - rhs);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateRow {
    pub r: f64,
    /// `∬ u^p φ dx dt`.
    pub integral_up_phi: f64,
    /// `∬ [(-∂_t φ + Lφ)_+]^{p'} φ^{1-p'} dx dt`, `p' = p/(p-1)`.
    pub bound_value: f64,
    /// `|∬ u(-∂_t φ + Lφ) - ∫ u0 φ(·,0) - ∬ u^p φ|` relative to the
    /// largest of the three terms.
    pub weak_identity_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub dim: usize,
    pub s: f64,
    pub p: f64,
    pub rows: Vec<CertificateRow>,
    /// Least-squares slope of `log ∬u^pφ` against `log r`.
    pub fitted_slope: f64,
    /// `N + 2s - 2sp/(p-1)`.
    pub predicted_exponent: f64,
    pub convexity: Vec<ConvexityReport>,
}

impl CertificateReport {
    pub fn sign_matches(&self) -> bool {
        self.fitted_slope.signum() == self.predicted_exponent.signum()
    }

    pub fn rows_csv(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| io::float_row(&[r.r, r.integral_up_phi, r.bound_value]))
            .collect()
    }

    /// Certificate CSV `r,integral_up_phi,bound_value`.
    pub fn write(&self, csv: &Path) -> Result<()> {
        io::write_csv(csv, &["r", "integral_up_phi", "bound_value"], &self.rows_csv())
    }
}

/// `N + 2s - 2sp/(p-1)`.
pub fn certificate_exponent(params: &ModelParams, p: f64) -> f64 {
    params.dim as f64 + 2.0 * params.s - 2.0 * params.s * p / (p - 1.0)
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Test-function certificate of a trajectory over the radii `radii`.
pub fn nonexistence_certificate(traj: &Trajectory, radii: &[f64]) -> Result<CertificateReport> {
    if radii.len() < 3 {
        return Err(Error::Insufficient("need at least three radii for the fit".into()));
    }
    if traj.snapshots.len() < 2 {
        return Err(Error::Insufficient("trajectory has no snapshots".into()));
    }
    let params = traj.params;
    let p = traj.config.p;
    let grid = *traj.initial.grid();
    let times: Vec<f64> = traj.snapshots.iter().map(|(t, _)| *t).collect();
    let vol = grid.cell_volume();
    let q = p / (p - 1.0);
    let mut rows = Vec::with_capacity(radii.len());
    let mut convexity = Vec::with_capacity(radii.len());
    for &r in radii {
        let family = TestFunctionFamily::new(p, r)?;
        let tf = build_test_function(&family, &grid, &times, params.s)?;
        convexity.push(convexity_check(&family, &grid, params.s)?);
        let gen = tf.generator();
        let mut up_phi = Vec::with_capacity(times.len());
        let mut u_op = Vec::with_capacity(times.len());
        let mut cap = Vec::with_capacity(times.len());
        for (k, (_, u)) in traj.snapshots.iter().enumerate() {
            let (psi, dpsi) = (tf.time_values[k], tf.time_derivatives[k]);
            let mut a = 0.0;
            let mut b = 0.0;
            let mut c = 0.0;
            for i in 0..grid.len() {
                let phi = tf.xi.values()[i] * psi;
                let op = -tf.xi.values()[i] * dpsi + gen.values()[i] * psi;
                let ui = u.values()[i].max(0.0);
                a += ui.powf(p) * phi;
                b += ui * op;
                if phi > 1e-14 && op > 0.0 {
                    c += op.powf(q) * phi.powf(1.0 - q);
                }
            }
            up_phi.push(a * vol);
            u_op.push(b * vol);
            cap.push(c * vol);
        }
        let integral_up_phi = trapezoid(&times, &up_phi);
        let weak_lhs = trapezoid(&times, &u_op);
        let initial: f64 = traj
            .initial
            .values()
            .iter()
            .zip(tf.xi.values())
            .map(|(u, x)| u * x * tf.time_values[0])
            .sum::<f64>()
            * vol;
        let defect = weak_lhs - initial - integral_up_phi;
        let scale = weak_lhs.abs().max(initial.abs()).max(integral_up_phi.abs());
        rows.push(CertificateRow {
            r,
            integral_up_phi,
            bound_value: trapezoid(&times, &cap),
            weak_identity_defect: if scale > 0.0 { defect.abs() / scale } else { 0.0 },
        });
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.r.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.integral_up_phi.ln()).collect();
    Ok(CertificateReport {
        dim: params.dim,
        s: params.s,
        p,
        fitted_slope: least_squares_slope(&lx, &ly),
        predicted_exponent: certificate_exponent(&params, p),
        rows,
        convexity,
    })
}

/// Initial datum of a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatumSpec {
    /// `u0 ≡ amplitude`.
    Uniform { amplitude: f64 },
    /// `(1-ε) δ0 p_{τ0}` with `δ0 = multiple · δ0*` and, unless given,
    /// `τ0 = 2 · tau0_lower_bound(C)`.
    SmallKernel { delta0_multiple: f64, tau0: Option<f64> },
}

impl DatumSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DatumSpec::Uniform { .. } => "uniform",
            DatumSpec::SmallKernel { .. } => "small_kernel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub dim: usize,
    pub s: f64,
    pub p: f64,
    pub datum: DatumSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    pub solver: SolverConfig,
    /// Grid used for every cell of matching dimension (defaults otherwise).
    pub grid: Option<GridSpec>,
    /// Kernel constant for `τ0`; estimated per `(N, s)` when absent.
    pub kernel_constant: Option<f64>,
    pub epsilon: f64,
    /// Absolute slack of the `M sup p_{t+τ0}` envelope.
    pub envelope_tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            grid: None,
            kernel_constant: None,
            epsilon: 1e-3,
            envelope_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyRecord {
    pub cell: SweepCell,
    pub amplitude: f64,
    pub delta0: Option<f64>,
    pub tau0: Option<f64>,
    pub kernel_constant: Option<f64>,
    pub outcome: Outcome,
    pub max_supnorm: f64,
    /// `sup u(t) ≤ M sup p_{t+τ0} + tolerance` at every recorded time
    /// (small-kernel data only).
    pub envelope_ok: Option<bool>,
}

impl DichotomyRecord {
    pub fn t_star(&self) -> Option<f64> {
        self.outcome.t_star()
    }

    fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(io::fmt_f64).unwrap_or_default();
        vec![
            self.cell.dim.to_string(),
            io::fmt_f64(self.cell.s),
            io::fmt_f64(self.cell.p),
            self.cell.datum.kind().to_string(),
            io::fmt_f64(self.amplitude),
            opt(self.delta0),
            opt(self.tau0),
            self.outcome.label().to_string(),
            opt(self.t_star()),
            io::fmt_f64(self.max_supnorm),
            self.envelope_ok.map(|b| b.to_string()).unwrap_or_default(),
        ]
    }
}

pub const SWEEP_HEADER: [&str; 11] = [
    "N", "s", "p", "datum_kind", "amplitude", "delta0", "tau0", "outcome", "t_star",
    "max_supnorm", "envelope_ok",
];

pub fn sweep_csv(records: &[DichotomyRecord]) -> String {
    let rows: Vec<Vec<String>> = records.iter().map(|r| r.csv_row()).collect();
    io::csv_string(&SWEEP_HEADER, &rows)
}

pub fn write_sweep(path: &Path, records: &[DichotomyRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records.iter().map(|r| r.csv_row()).collect();
    io::write_csv(path, &SWEEP_HEADER, &rows)
}

fn cell_grid(config: &SweepConfig, dim: usize) -> Result<GridSpec> {
    match config.grid {
        Some(g) if g.dim() == dim => Ok(g),
        _ => GridSpec::default_for(dim),
    }
}

fn run_cell(cell: &SweepCell, config: &SweepConfig, constant: Option<f64>) -> Result<DichotomyRecord> {
    let params = ModelParams::new(cell.dim, cell.s)?;
    let grid = cell_grid(config, cell.dim)?;
    let solver = SolverConfig {
        p: cell.p,
        ..config.solver
    };
    match cell.datum {
        DatumSpec::Uniform { amplitude } => {
            let traj = mild::run(&Field::constant(grid, amplitude), &solver, &params)?;
            Ok(DichotomyRecord {
                cell: *cell,
                amplitude,
                delta0: None,
                tau0: None,
                kernel_constant: None,
                max_supnorm: traj.max_sup_norm(),
                outcome: traj.outcome,
                envelope_ok: None,
            })
        }
        DatumSpec::SmallKernel {
            delta0_multiple,
            tau0,
        } => {
            let c = constant.ok_or_else(|| invalid("C", "kernel constant unavailable"))?;
            let delta0 = delta0_multiple * delta0_threshold(cell.p)?;
            let schedule = delta_schedule(delta0, cell.p, 0)?;
            let tau0 = match tau0 {
                Some(v) => v,
                None => 2.0 * tau0_lower_bound(&params, cell.p, c)?,
            };
            let u0 = small_initial_datum(&grid, &params, delta0, tau0, config.epsilon)?;
            let traj = mild::run(&u0, &solver, &params)?;
            let sigma = mixed_exponent(&grid, cell.s)?;
            let envelope_ok = schedule.limit.map(|m| {
                traj.times.iter().zip(&traj.sup_norms).all(|(&t, &sup)| {
                    sup <= m * torus_kernel_peak(&sigma, &grid, t + tau0) + config.envelope_tolerance
                })
            });
            Ok(DichotomyRecord {
                cell: *cell,
                amplitude: u0.sup_norm(),
                delta0: Some(delta0),
                tau0: Some(tau0),
                kernel_constant: Some(c),
                max_supnorm: traj.max_sup_norm(),
                outcome: traj.outcome,
                envelope_ok: Some(envelope_ok.unwrap_or(false)),
            })
        }
    }
}

/// Runs every cell (in parallel) and returns the records in input order.
pub fn dichotomy_sweep(cells: &[SweepCell], config: &SweepConfig) -> Result<Vec<DichotomyRecord>> {
    config.solver.validate()?;
    // One kernel constant per (N, s) that needs it, computed up front.
    let mut constants: Vec<((usize, u64), f64)> = Vec::new();
    for cell in cells {
        if let DatumSpec::SmallKernel { tau0: None, .. } = cell.datum {
            let key = (cell.dim, cell.s.to_bits());
            if constants.iter().any(|(k, _)| *k == key) {
                continue;
            }
            let c = match config.kernel_constant {
                Some(c) => c,
                None => {
                    let params = ModelParams::new(cell.dim, cell.s)?;
                    empirical_kernel_constant(&params, &cell_grid(config, cell.dim)?)?.0
                }
            };
            constants.push((key, c));
        }
    }
    let lookup = |cell: &SweepCell| {
        constants
            .iter()
            .find(|(k, _)| *k == (cell.dim, cell.s.to_bits()))
            .map(|(_, c)| *c)
            .or(config.kernel_constant)
    };
    cells
        .par_iter()
        .map(|cell| run_cell(cell, config, lookup(cell)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn critical_exponents() {
        assert_eq!(critical_exponent(1, 0.5).unwrap(), 2.0);
        assert_eq!(critical_exponent(2, 0.5).unwrap(), 1.5);
        assert!((critical_exponent(1, 0.999_999).unwrap() - 3.0).abs() < 1e-5);
        assert!(critical_exponent(0, 0.5).is_err());
    }

    #[test]
    fn schedule_examples() {
        let z = delta_schedule(0.0, 2.0, 10).unwrap();
        assert!(z.deltas.iter().all(|&d| d == 0.0));
        assert_eq!(z.limit, Some(0.0));
        let q = delta_schedule(0.25, 2.0, 10).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.limit.unwrap(), 0.5, epsilon = 1e-12);
        let d = delta_schedule(0.3, 2.0, 100).unwrap();
        assert!(!d.converged);
        assert!(d.limit.is_none());
        assert_relative_eq!(delta0_threshold(3.0).unwrap(), 2.0 / (3.0 * 3f64.sqrt()), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn converged_schedules_increase_below_the_limit(frac in 0.01f64..1.0, p in 1.2f64..4.0) {
            let d0 = frac * delta0_threshold(p).unwrap();
            let sch = delta_schedule(d0, p, 200).unwrap();
            let m = sch.limit.unwrap();
            // strictly increasing until the limit is reached in floating point
            prop_assert!(sch.deltas.windows(2).all(|w| w[1] > w[0] || w[1] >= m * (1.0 - 1e-12)));
            prop_assert!(sch.deltas.iter().all(|&d| d <= m * (1.0 + 1e-12)));
            prop_assert!((m - m.powf(p) - d0).abs() < 1e-12);
        }

        #[test]
        fn tau0_bound_increases_with_c(c in 0.05f64..5.0, p in 2.2f64..4.0) {
            let params = ModelParams::new(1, 0.5).unwrap();
            let a = tau0_lower_bound(&params, p, c).unwrap();
            let b = tau0_lower_bound(&params, p, c * 1.1).unwrap();
            prop_assert!(b > a);
        }
    }

    #[test]
    fn tau0_examples() {
        let params = ModelParams::new(1, 0.5).unwrap();
        assert_relative_eq!(tau0_lower_bound(&params, 3.0, 1.0).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(tau0_lower_bound(&params, 2.5, 1.0).unwrap(), 4.0, epsilon = 1e-12);
        assert!(tau0_lower_bound(&params, 2.0, 1.0).is_err());
        assert!(tau0_lower_bound(&params, 1.5, 1.0).is_err());
    }

    #[test]
    fn tau_integral_closed_form() {
        for (a, tau0) in [(2.0, 0.2), (1.5, 3.0), (4.0, 1.0)] {
            let exact = f64::powf(tau0, 1.0 - a) / (a - 1.0);
            assert_relative_eq!(tau_integral(a, tau0, 50.0).unwrap(), exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn small_datum_construction() {
        let params = ModelParams::new(1, 0.5).unwrap();
        let grid = GridSpec::default_for(1).unwrap();
        let u = small_initial_datum(&grid, &params, 0.1, 0.5, 1e-3).unwrap();
        let k = mixed_kernel_symbol(&params, &grid, 0.5, &KernelOptions::default()).unwrap();
        for (a, b) in u.values().iter().zip(k.field.values()) {
            assert_relative_eq!(a / b, 0.999 * 0.1, max_relative = 1e-12);
        }
        assert!((u.integral() - 0.0999).abs() < 1e-6);
        assert!(u.min() >= 0.0);
    }

    #[test]
    fn torus_peak_matches_kernel() {
        let params = ModelParams::new(1, 0.5).unwrap();
        let grid = GridSpec::default_for(1).unwrap();
        let sigma = mixed_exponent(&grid, 0.5).unwrap();
        let k = mixed_kernel_symbol(&params, &grid, 0.7, &KernelOptions::default()).unwrap();
        assert_relative_eq!(torus_kernel_peak(&sigma, &grid, 0.7), k.peak(), max_relative = 1e-12);
    }

    #[test]
    fn profiles() {
        assert_eq!(cutoff(0.0), 1.0);
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(1.0), 0.0);
        assert!(cutoff(0.75) > 0.0 && cutoff(0.75) < 1.0);
        let h = 1e-6;
        for rho in [0.55, 0.7, 0.9] {
            let fd = (cutoff(rho + h) - cutoff(rho - h)) / (2.0 * h);
            assert_relative_eq!(cutoff_derivative(rho), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn test_function_plateaus() {
        let grid = GridSpec::new(1, 40.0, 2048).unwrap();
        let fam = TestFunctionFamily::new(2.0, 4.0).unwrap();
        assert_eq!(fam.m(), 4.0);
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1).collect();
        let tf = build_test_function(&fam, &grid, &times, 0.5).unwrap();
        for i in 0..grid.len() {
            if grid.radius(i) < 2.0 {
                assert_eq!(tf.xi.values()[i], 1.0);
            }
            if grid.radius(i) >= 4.0 {
                assert_eq!(tf.xi.values()[i], 0.0);
            }
        }
        for (k, &t) in times.iter().enumerate() {
            if t < 2.0 {
                assert_eq!(tf.time_values[k], 1.0);
                assert_eq!(tf.time_derivatives[k], 0.0);
            }
        }
        assert!(build_test_function(&TestFunctionFamily::new(2.0, 50.0).unwrap(), &grid, &times, 0.5).is_err());
        assert!(build_test_function(&fam, &grid, &times[..10], 0.5).is_err());
    }

    #[test]
    fn convexity_inequality() {
        let grid = GridSpec::new(1, 40.0, 8192).unwrap();
        for r in [2.0, 4.0, 8.0] {
            let rep = convexity_check(&TestFunctionFamily::new(2.0, r).unwrap(), &grid, 0.5).unwrap();
            assert!(rep.holds(1e-8), "r={r}: {rep:?}");
        }
    }

    #[test]
    fn certificate_exponent_values() {
        let params = ModelParams::new(1, 0.5).unwrap();
        assert_eq!(certificate_exponent(&params, 2.0), 0.0);
        assert_relative_eq!(certificate_exponent(&params, 1.5), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_trajectory_certificate() {
        let params = ModelParams::new(1, 0.5).unwrap();
        let grid = GridSpec::new(1, 40.0, 512).unwrap();
        let cfg = SolverConfig { horizon: 8.0, dt: 0.05, snapshot_stride: 4, ..SolverConfig::default() };
        let traj = mild::run(&Field::zeros(grid), &cfg, &params).unwrap();
        let rep = nonexistence_certificate(&traj, &[2.0, 4.0, 8.0]).unwrap();
        assert!(rep.rows.iter().all(|r| r.integral_up_phi == 0.0));
        assert!(nonexistence_certificate(&traj, &[2.0, 4.0]).is_err());
    }

    #[test]
    fn sweep_small_cells() {
        let cfg = SweepConfig {
            solver: SolverConfig { horizon: 2.5, dt: 2e-3, record_stride: 10, ..SolverConfig::default() },
            grid: Some(GridSpec::new(1, 20.0, 128).unwrap()),
            kernel_constant: Some(1.0 / std::f64::consts::PI),
            ..SweepConfig::default()
        };
        let cells = [
            SweepCell { dim: 1, s: 0.5, p: 1.5, datum: DatumSpec::Uniform { amplitude: 1.0 } },
            SweepCell { dim: 1, s: 0.5, p: 1.5, datum: DatumSpec::Uniform { amplitude: 0.0 } },
            SweepCell { dim: 1, s: 0.5, p: 3.0, datum: DatumSpec::SmallKernel { delta0_multiple: 0.5, tau0: None } },
        ];
        let recs = dichotomy_sweep(&cells, &cfg).unwrap();
        let t = recs[0].t_star().unwrap();
        assert!((t - 2.0).abs() <= 0.04, "{t}");
        assert_eq!(recs[1].outcome, Outcome::GlobalWithinHorizon);
        assert_eq!(recs[1].max_supnorm, 0.0);
        assert_eq!(recs[2].outcome, Outcome::GlobalWithinHorizon);
        assert_eq!(recs[2].envelope_ok, Some(true));
        let csv = sweep_csv(&recs);
        assert!(csv.starts_with("N,s,p,datum_kind,amplitude,delta0,tau0,outcome,t_star,max_supnorm,envelope_ok\n"));
    }
}
