//! Heat kernels `g_t` (Gauss–Weierstrass), `h_t^(s)` (fractional) and
//! `p_t = g_t * h_t^(s)` (mixed), their structural properties and the
//! empirical constants of the two-sided fractional bound and the on-diagonal
//! bound of the mixed kernel.
//!
//! Kernels are sampled on the periodic box of a [`GridSpec`]. With the
//! default [`KernelOptions`] the result is the *torus* kernel, whose discrete
//! mass is exactly one and which is the kernel of the solver's propagator.
//! Setting `padding > 1` computes the kernel on a box `padding` times larger
//! (same spacing) and crops it, which approximates the free-space kernel on
//! the requested box.

use std::path::Path;

use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::io;
use crate::spectral::{
    self, check_order, forward_unchecked, inverse_unchecked, wavenumber_norms, Field, GridSpec,
    SpectrumField,
};

/// Dimension, order and the derived constants of `L = -Δ + (-Δ)^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub dim: usize,
    pub s: f64,
    /// `C_{N,s}` of the singular-integral form of `(-Δ)^s`.
    pub normalization: f64,
    /// Fujita exponent `1 + 2s/N`.
    pub critical_exponent: f64,
}

impl ModelParams {
    pub fn new(dim: usize, s: f64) -> Result<Self> {
        let normalization = normalization_constant(dim, s)?;
        Ok(Self {
            dim,
            s,
            normalization,
            critical_exponent: 1.0 + 2.0 * s / dim as f64,
        })
    }

    /// `N / (2s)`: the on-diagonal decay exponent of `h_t` and `p_t`.
    pub fn decay_exponent(&self) -> f64 {
        self.dim as f64 / (2.0 * self.s)
    }
}

/// `C_{N,s} = 2^{2s-1}·2s·Γ((N+2s)/2) / (π^{N/2} Γ(1-s))`.
pub fn normalization_constant(dim: usize, s: f64) -> Result<f64> {
    if dim == 0 {
        return Err(invalid("N", "dimension must be >= 1"));
    }
    check_order(s)?;
    let n = dim as f64;
    Ok(2f64.powf(2.0 * s - 1.0) * 2.0 * s * gamma((n + 2.0 * s) / 2.0)
        / (std::f64::consts::PI.powf(n / 2.0) * gamma(1.0 - s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gauss,
    Fractional,
    Mixed,
}

impl KernelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelKind::Gauss => "gauss",
            KernelKind::Fractional => "fractional",
            KernelKind::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Symbol,
    Convolution,
    ClosedForm,
    MonteCarlo,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Symbol => "symbol",
            Provenance::Convolution => "convolution",
            Provenance::ClosedForm => "closed_form",
            Provenance::MonteCarlo => "monte_carlo",
        }
    }
}

/// Tolerances and the free-space padding used when constructing kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Box enlargement factor; 1 gives the torus kernel.
    pub padding: usize,
    pub mass_tolerance: f64,
    /// Negative values are flagged below `-ringing_tolerance · peak`.
    pub ringing_tolerance: f64,
    /// Admissible kernel mass outside `|x| <= R/2`.
    pub aliasing_budget: f64,
    /// Relative peak tolerance between the symbol and convolution routes.
    pub route_tolerance: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            padding: 1,
            mass_tolerance: 1e-6,
            ringing_tolerance: 1e-10,
            aliasing_budget: 1e-8,
            route_tolerance: 1e-8,
        }
    }
}

impl KernelOptions {
    pub fn free_space(padding: usize) -> Self {
        Self {
            padding,
            ..Self::default()
        }
    }
}

/// Non-fatal findings attached to a kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelDiagnostic {
    /// Spectral truncation produced values below `-tolerance · peak`.
    Ringing { min_over_peak: f64 },
    /// Tail mass outside `|x| <= R/2` estimated from the `t/|x|^{N+2s}` tail.
    AliasingBudget { tail_mass: f64, budget: f64 },
    /// Symbol and convolution routes disagree at the peak.
    RouteDisagreement { relative_defect: f64 },
}

/// A sampled heat kernel with its time label and provenance.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub field: Field,
    pub t: f64,
    pub kind: KernelKind,
    pub provenance: Provenance,
    /// Order `s` (absent for the Gaussian).
    pub order: Option<f64>,
    pub padding: usize,
    pub diagnostics: Vec<KernelDiagnostic>,
}

impl KernelField {
    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }

    pub fn mass(&self) -> f64 {
        self.field.integral()
    }

    pub fn mass_defect(&self) -> f64 {
        (self.mass() - 1.0).abs()
    }

    pub fn peak(&self) -> f64 {
        self.field.max()
    }

    /// Kernel CSV `x[,y[,z]],value` and its JSON sidecar.
    pub fn write(&self, csv: &Path, sidecar: &Path) -> Result<()> {
        io::write_field_csv(csv, &self.field)?;
        let grid = self.grid();
        io::write_json(
            sidecar,
            &serde_json::json!({
                "kind": self.kind,
                "provenance": self.provenance,
                "t": self.t,
                "s": self.order,
                "N": grid.dim(),
                "R": grid.half_length(),
                "n": grid.points(),
                "padding": self.padding,
                "mass_defect": self.mass_defect(),
                "diagnostics": self.diagnostics,
            }),
        )
    }
}

fn check_positive_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("t", format!("kernel time must be > 0, got {t}")));
    }
    Ok(())
}

fn surface_area(dim: usize) -> f64 {
    use std::f64::consts::PI;
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// Estimated kernel mass outside `|x| <= R/2`, from the asymptotic tail
/// `t·C_{N,s}/|x|^{N+2s}` shared by `h_t` and `p_t`.
pub fn tail_mass_estimate(params: &ModelParams, grid: &GridSpec, t: f64) -> f64 {
    let r = grid.half_length() / 2.0;
    t * params.normalization * surface_area(params.dim) * r.powf(-2.0 * params.s)
        / (2.0 * params.s)
}

fn gauss_tail_mass(grid: &GridSpec, t: f64, radius: f64) -> f64 {
    // union bound over axes
    grid.dim() as f64 * erfc(radius / (4.0 * t).sqrt())
}

fn gauss_1d(x: f64, t: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt()
}

/// Closed-form `g_t(x) = (4πt)^{-N/2} e^{-|x|²/(4t)}` sampled on the grid.
pub fn gauss_kernel(grid: &GridSpec, t: f64) -> Result<KernelField> {
    gauss_kernel_with(grid, t, &KernelOptions::default())
}

pub fn gauss_kernel_with(grid: &GridSpec, t: f64, options: &KernelOptions) -> Result<KernelField> {
    check_positive_time(t)?;
    let field = Field::from_fn(*grid, |x| x.iter().map(|&xi| gauss_1d(xi, t)).product())?;
    let kernel = KernelField {
        field,
        t,
        kind: KernelKind::Gauss,
        provenance: Provenance::ClosedForm,
        order: None,
        padding: 1,
        diagnostics: Vec::new(),
    };
    let defect = kernel.mass_defect();
    if defect > options.mass_tolerance {
        let mut suggested = grid.half_length();
        while gauss_tail_mass(grid, t, suggested) > 0.1 * options.mass_tolerance {
            suggested *= 1.25;
        }
        return Err(Error::MassDefect {
            defect,
            tolerance: options.mass_tolerance,
            suggested_half_length: suggested,
        });
    }
    Ok(kernel)
}

/// `Σ_m g_t(x + 2Rm)`: the Gaussian of the torus, sampled per axis.
pub(crate) fn periodized_gauss(grid: &GridSpec, t: f64) -> Field {
    let period = 2.0 * grid.half_length();
    let images = ((4.0 * t * 40.0).sqrt() / period).ceil() as i64 + 1;
    let line: Vec<f64> = (0..grid.points())
        .map(|j| {
            let x = grid.coordinate(j);
            (-images..=images).map(|m| gauss_1d(x + period * m as f64, t)).sum()
        })
        .collect();
    let values = (0..grid.len())
        .map(|i| {
            let axes = grid.unravel(i);
            axes[..grid.dim()].iter().map(|&j| line[j]).product()
        })
        .collect();
    Field::from_raw(*grid, values)
}

fn spectral_kernel(
    grid: &GridSpec,
    t: f64,
    padding: usize,
    multiplier: impl Fn(&GridSpec) -> Result<SpectrumField>,
) -> Result<Field> {
    let work = grid.extended(padding)?;
    let mut spec = multiplier(&work)?;
    let norm = (2.0 * work.half_length()).powi(work.dim() as i32).recip();
    for c in spec.coefficients_mut() {
        *c *= norm;
    }
    let _ = t;
    let full = inverse_unchecked(&spec);
    if padding == 1 {
        Ok(full)
    } else {
        full.crop(*grid)
    }
}

fn finish(mut kernel: KernelField, params: &ModelParams, options: &KernelOptions) -> KernelField {
    let peak = kernel.peak();
    let min = kernel.field.min();
    if min < -options.ringing_tolerance * peak {
        kernel.diagnostics.push(KernelDiagnostic::Ringing {
            min_over_peak: min / peak,
        });
    }
    let tail = tail_mass_estimate(params, kernel.grid(), kernel.t);
    if tail > options.aliasing_budget {
        kernel.diagnostics.push(KernelDiagnostic::AliasingBudget {
            tail_mass: tail,
            budget: options.aliasing_budget,
        });
    }
    kernel
}

/// `h_t^(s)`: inverse transform of `e^{-t|ξ|^{2s}}`.
pub fn fractional_kernel(params: &ModelParams, grid: &GridSpec, t: f64) -> Result<KernelField> {
    fractional_kernel_with(params, grid, t, &KernelOptions::default())
}

pub fn fractional_kernel_with(
    params: &ModelParams,
    grid: &GridSpec,
    t: f64,
    options: &KernelOptions,
) -> Result<KernelField> {
    check_positive_time(t)?;
    check_params_grid(params, grid)?;
    let field = spectral_kernel(grid, t, options.padding, |g| {
        spectral::symbol_fractional(g, params.s, t)
    })?;
    Ok(finish(
        KernelField {
            field,
            t,
            kind: KernelKind::Fractional,
            provenance: Provenance::Symbol,
            order: Some(params.s),
            padding: options.padding,
            diagnostics: Vec::new(),
        },
        params,
        options,
    ))
}

/// `p_t` by the symbol route `e^{-t(|ξ|² + |ξ|^{2s})}`, cross-checked at the
/// peak against the convolution route `g_t * h_t^(s)`.
pub fn mixed_kernel(params: &ModelParams, grid: &GridSpec, t: f64) -> Result<KernelField> {
    mixed_kernel_with(params, grid, t, &KernelOptions::default())
}

pub fn mixed_kernel_with(
    params: &ModelParams,
    grid: &GridSpec,
    t: f64,
    options: &KernelOptions,
) -> Result<KernelField> {
    let kernel = mixed_kernel_symbol(params, grid, t, options)?;
    let conv = mixed_kernel_convolution_with(params, grid, t, options)?;
    let defect = peak_relative_defect(&kernel.field, &conv.field);
    let mut kernel = kernel;
    if !(defect <= options.route_tolerance) {
        kernel
            .diagnostics
            .push(KernelDiagnostic::RouteDisagreement {
                relative_defect: defect,
            });
    }
    Ok(kernel)
}

pub(crate) fn mixed_kernel_symbol(
    params: &ModelParams,
    grid: &GridSpec,
    t: f64,
    options: &KernelOptions,
) -> Result<KernelField> {
    check_positive_time(t)?;
    check_params_grid(params, grid)?;
    let field = spectral_kernel(grid, t, options.padding, |g| spectral::symbol(g, params.s, t))?;
    Ok(finish(
        KernelField {
            field,
            t,
            kind: KernelKind::Mixed,
            provenance: Provenance::Symbol,
            order: Some(params.s),
            padding: options.padding,
            diagnostics: Vec::new(),
        },
        params,
        options,
    ))
}

/// `p_t` by the convolution route: the real-space Gaussian of the torus
/// convolved (through the transform) with `h_t^(s)`.
pub fn mixed_kernel_convolution(
    params: &ModelParams,
    grid: &GridSpec,
    t: f64,
) -> Result<KernelField> {
    mixed_kernel_convolution_with(params, grid, t, &KernelOptions::default())
}

pub fn mixed_kernel_convolution_with(
    params: &ModelParams,
    grid: &GridSpec,
    t: f64,
    options: &KernelOptions,
) -> Result<KernelField> {
    check_positive_time(t)?;
    check_params_grid(params, grid)?;
    let work = grid.extended(options.padding)?;
    let gauss = periodized_gauss(&work, t);
    let mut spec = forward_unchecked(&gauss);
    let frac = spectral::symbol_fractional(&work, params.s, t)?;
    for (c, m) in spec.coefficients_mut().iter_mut().zip(frac.coefficients()) {
        *c *= m.re;
    }
    let full = inverse_unchecked(&spec);
    let field = if options.padding == 1 {
        full
    } else {
        full.crop(*grid)?
    };
    Ok(finish(
        KernelField {
            field,
            t,
            kind: KernelKind::Mixed,
            provenance: Provenance::Convolution,
            order: Some(params.s),
            padding: options.padding,
            diagnostics: Vec::new(),
        },
        params,
        options,
    ))
}

fn check_params_grid(params: &ModelParams, grid: &GridSpec) -> Result<()> {
    if params.dim != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "model dimension {} vs grid dimension {}",
            params.dim,
            grid.dim()
        )));
    }
    Ok(())
}

/// `|a(0) - b(0)| / |b(0)|` at the origin sample (the kernels' peak).
pub fn peak_relative_defect(a: &Field, b: &Field) -> f64 {
    let pa = a.at_origin();
    let pb = b.at_origin();
    (pa - pb).abs() / pb.abs()
}

/// Kernel of the same kind/order at another time, by the same route.
fn same_kind_at(kernel: &KernelField, t: f64) -> Result<KernelField> {
    let grid = *kernel.grid();
    let options = KernelOptions::free_space(kernel.padding);
    match kernel.kind {
        KernelKind::Gauss => {
            let field = Field::from_fn(grid, |x| x.iter().map(|&xi| gauss_1d(xi, t)).product())?;
            Ok(KernelField {
                field,
                t,
                ..kernel.clone()
            })
        }
        KernelKind::Fractional | KernelKind::Mixed => {
            let s = kernel
                .order
                .ok_or_else(|| invalid("s", "spectral kernel without order"))?;
            let params = ModelParams::new(grid.dim(), s)?;
            if kernel.kind == KernelKind::Fractional {
                fractional_kernel_with(&params, &grid, t, &options)
            } else {
                mixed_kernel_symbol(&params, &grid, t, &options)
            }
        }
    }
}

/// Periodic convolution `Σ_y a(x - y) b(y) Δx^N`; direct summation on small
/// one-dimensional grids, transform-based otherwise.
pub fn periodic_convolution(a: &Field, b: &Field) -> Result<Field> {
    spectral::check_same_grid(a.grid(), b.grid())?;
    let grid = *a.grid();
    let vol = grid.cell_volume();
    if grid.dim() == 1 && grid.points() <= 4096 {
        let n = grid.points();
        let half = n / 2;
        let values = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| a.values()[(i + n + half - j) % n] * b.values()[j])
                    .sum::<f64>()
                    * vol
            })
            .collect();
        return Ok(Field::from_raw(grid, values));
    }
    let fa = forward_unchecked(a);
    let fb = forward_unchecked(b);
    let scale = (2.0 * grid.half_length()).powi(grid.dim() as i32);
    let mut prod = fa.multiply(&fb)?;
    for c in prod.coefficients_mut() {
        *c *= scale;
    }
    Ok(inverse_unchecked(&prod))
}

/// Per-property defects of a kernel (positivity, evenness, unit mass and,
/// with a second kernel, the semigroup identity).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub kind: KernelKind,
    pub t: f64,
    /// `min / peak`; property (1) holds when this is above `-1e-10`.
    pub min_over_peak: f64,
    /// `max |k(x) - k(-x)| / peak`.
    pub evenness_defect: f64,
    pub mass_defect: f64,
    /// Time of the second kernel and `max |k_t * k_τ - k_{t+τ}| / max k_{t+τ}`.
    pub semigroup: Option<SemigroupDefect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemigroupDefect {
    pub tau: f64,
    pub relative_defect: f64,
}

impl PropertyReport {
    pub fn within(&self, mass_tol: f64, ringing_tol: f64, semigroup_tol: f64) -> bool {
        self.min_over_peak >= -ringing_tol
            && self.evenness_defect <= 1e-12
            && self.mass_defect <= mass_tol
            && self
                .semigroup
                .is_none_or(|s| s.relative_defect <= semigroup_tol)
    }
}

pub fn verify_kernel_properties(
    kernel: &KernelField,
    second: Option<&KernelField>,
) -> Result<PropertyReport> {
    let peak = kernel.peak();
    let semigroup = match second {
        None => None,
        Some(other) => {
            spectral::check_same_grid(kernel.grid(), other.grid())?;
            if kernel.kind != other.kind || kernel.order != other.order {
                return Err(invalid("kernel", "semigroup check needs kernels of one kind"));
            }
            if kernel.padding != 1 || other.padding != 1 {
                return Err(invalid("padding", "semigroup check needs torus kernels"));
            }
            let conv = periodic_convolution(&kernel.field, &other.field)?;
            let reference = same_kind_at(kernel, kernel.t + other.t)?;
            let defect = conv.max_abs_diff(&reference.field)? / reference.peak();
            Some(SemigroupDefect {
                tau: other.t,
                relative_defect: defect,
            })
        }
    };
    Ok(PropertyReport {
        kind: kernel.kind,
        t: kernel.t,
        min_over_peak: kernel.field.min() / peak,
        evenness_defect: kernel.field.evenness_defect() / peak,
        mass_defect: kernel.mass_defect(),
        semigroup,
    })
}

/// Options of [`estimate_bound_constant_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundScanOptions {
    pub padding: usize,
    pub points_per_decade: usize,
    /// Admissible relative change of each constant under one refinement.
    pub stability_tolerance: f64,
}

impl Default for BoundScanOptions {
    fn default() -> Self {
        Self {
            padding: 8,
            points_per_decade: 4,
            stability_tolerance: 0.1,
        }
    }
}

/// Empirical constants of the fractional two-sided bound
/// `C⁻¹ m ≤ h_t ≤ C m`, `m = min{t^{-N/(2s)}, t/|x|^{N+2s}}`, and of the
/// on-diagonal bound `p_t(x) ≤ C t^{-N/(2s)}` of the mixed kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelBoundEstimate {
    pub dim: usize,
    pub s: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Scanned radii `|x| <= x_max`.
    pub x_max: f64,
    pub times: Vec<f64>,
    /// `max(1, max ratio, 1/min ratio)` of the fractional kernel.
    pub fractional_constant: f64,
    pub fractional_min_ratio: f64,
    pub fractional_max_ratio: f64,
    /// Same constant on the refined grid.
    pub fractional_constant_refined: f64,
    /// `max p_t(x) t^{N/(2s)}` of the mixed kernel.
    pub mixed_constant: f64,
    pub mixed_constant_refined: f64,
    pub fractional_stable: bool,
    pub mixed_stable: bool,
}

impl KernelBoundEstimate {
    /// The mixed-kernel constant, if it stabilized under refinement.
    pub fn stable_mixed_constant(&self) -> Result<f64> {
        if self.mixed_stable {
            Ok(self.mixed_constant_refined)
        } else {
            Err(Error::UnstableConstant {
                coarse: self.mixed_constant,
                refined: self.mixed_constant_refined,
            })
        }
    }

    pub fn stable_fractional_constant(&self) -> Result<f64> {
        if self.fractional_stable {
            Ok(self.fractional_constant_refined)
        } else {
            Err(Error::UnstableConstant {
                coarse: self.fractional_constant,
                refined: self.fractional_constant_refined,
            })
        }
    }
}

struct ScanResult {
    frac_min: f64,
    frac_max: f64,
    mixed_max: f64,
}

fn scan(params: &ModelParams, grid: &GridSpec, times: &[f64], padding: usize) -> Result<ScanResult> {
    let options = KernelOptions::free_space(padding);
    let x_max = grid.half_length() / 2.0;
    let n = params.dim as f64;
    let decay = params.decay_exponent();
    let mut out = ScanResult {
        frac_min: f64::INFINITY,
        frac_max: 0.0,
        mixed_max: 0.0,
    };
    for &t in times {
        let h = fractional_kernel_with(params, grid, t, &options)?;
        let p = mixed_kernel_symbol(params, grid, t, &options)?;
        for i in 0..grid.len() {
            let r = grid.radius(i);
            if r > x_max {
                continue;
            }
            let on_diag = t.powf(-decay);
            let bound = if r == 0.0 {
                on_diag
            } else {
                on_diag.min(t / r.powf(n + 2.0 * params.s))
            };
            let ratio = h.field.values()[i] / bound;
            out.frac_min = out.frac_min.min(ratio);
            out.frac_max = out.frac_max.max(ratio);
        }
        out.mixed_max = out.mixed_max.max(p.peak() * t.powf(decay));
    }
    Ok(out)
}

fn constant_from(min: f64, max: f64) -> f64 {
    if !(min > 0.0) || !max.is_finite() {
        return f64::INFINITY;
    }
    1f64.max(max).max(1.0 / min)
}

fn log_spaced(t_min: f64, t_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (t_max / t_min).log10();
    let steps = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=steps)
        .map(|i| t_min * 10f64.powf(decades * i as f64 / steps as f64))
        .collect()
}

pub fn estimate_bound_constant(
    params: &ModelParams,
    t_range: (f64, f64),
    grid: &GridSpec,
) -> Result<KernelBoundEstimate> {
    estimate_bound_constant_with(params, t_range, grid, &BoundScanOptions::default())
}

pub fn estimate_bound_constant_with(
    params: &ModelParams,
    t_range: (f64, f64),
    grid: &GridSpec,
    options: &BoundScanOptions,
) -> Result<KernelBoundEstimate> {
    let (t_min, t_max) = t_range;
    if !(t_min > 0.0 && t_max.is_finite() && t_max >= 100.0 * t_min * (1.0 - 1e-12)) {
        return Err(invalid("t_range", "time range must be positive and span two decades"));
    }
    check_params_grid(params, grid)?;
    let times = log_spaced(t_min, t_max, options.points_per_decade.max(1));
    let coarse = scan(params, grid, &times, options.padding)?;
    let fine = scan(params, &grid.refined()?, &times, options.padding)?;
    let fractional_constant = constant_from(coarse.frac_min, coarse.frac_max);
    let fractional_constant_refined = constant_from(fine.frac_min, fine.frac_max);
    let stable = |a: f64, b: f64| {
        a.is_finite() && b.is_finite() && (a - b).abs() <= options.stability_tolerance * b
    };
    Ok(KernelBoundEstimate {
        dim: params.dim,
        s: params.s,
        t_min,
        t_max,
        x_max: grid.half_length() / 2.0,
        times,
        fractional_constant,
        fractional_min_ratio: fine.frac_min,
        fractional_max_ratio: fine.frac_max,
        fractional_constant_refined,
        mixed_constant: coarse.mixed_max,
        mixed_constant_refined: fine.mixed_max,
        fractional_stable: stable(fractional_constant, fractional_constant_refined),
        mixed_stable: stable(coarse.mixed_max, fine.mixed_max),
    })
}

/// Radial profile `p_t(ρ e_1)` of the two-dimensional mixed kernel at the
/// given radii, evaluated from the Fourier series of the torus of `grid`
/// restricted to the first axis (no transform, no interpolation).
pub fn radial_profile(params: &ModelParams, grid: &GridSpec, t: f64, radii: &[f64]) -> Result<Vec<f64>> {
    if params.dim != 2 || grid.dim() != 2 {
        return Err(invalid("N", "radial profile is defined for N = 2"));
    }
    check_positive_time(t)?;
    let n = grid.points();
    let sigma = spectral::mixed_exponent(grid, params.s)?;
    let norms = wavenumber_norms(&GridSpec::new(1, grid.half_length(), n)?);
    let area = (2.0 * grid.half_length()).powi(2);
    // Row sums over the second axis give the line coefficients.
    let line: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|k| (-t * sigma[j * n + k]).exp()).sum::<f64>() / area)
        .collect();
    Ok(radii
        .iter()
        .map(|&r| {
            line.iter()
                .zip(&norms)
                .enumerate()
                .map(|(j, (c, xi))| {
                    let signed = if j < n / 2 { *xi } else { -*xi };
                    c * (signed * r).cos()
                })
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Γ by composite Simpson quadrature of ∫_0^∞ x^{z-1} e^{-x} dx (z >= 1).
    fn gamma_quadrature(z: f64) -> f64 {
        let upper = 60.0;
        let steps = 200_000;
        let h = upper / steps as f64;
        let f = |x: f64| if x == 0.0 { if z == 1.0 { 1.0 } else { 0.0 } } else { x.powf(z - 1.0) * (-x).exp() };
        let mut acc = f(0.0) + f(upper);
        for i in 1..steps {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn normalization_constant_values() {
        assert_relative_eq!(normalization_constant(1, 0.5).unwrap(), 1.0 / PI, epsilon = 1e-14);
        // N=2, s=1/2: Γ(3/2)/(π Γ(1/2)) = 1/(2π); Γ(3/2) by quadrature, Γ(1/2) = 2Γ(3/2).
        let g32 = gamma_quadrature(1.5);
        let oracle = g32 / (PI * 2.0 * g32);
        assert_relative_eq!(normalization_constant(2, 0.5).unwrap(), oracle, epsilon = 1e-9);
        assert_relative_eq!(oracle, 1.0 / (2.0 * PI), epsilon = 1e-12);
        // N=1, s=0.75: 2^{0.5}·1.5·Γ(1.25)/(√π Γ(0.25)), Γ(0.25) = 4Γ(1.25).
        let g125 = gamma_quadrature(1.25);
        let oracle = 2f64.sqrt() * 1.5 * g125 / (PI.sqrt() * 4.0 * g125);
        assert_relative_eq!(normalization_constant(1, 0.75).unwrap(), oracle, epsilon = 1e-9);
        assert!(normalization_constant(1, 0.0).is_err());
        assert!(normalization_constant(1, 1.0).is_err());
    }

    #[test]
    fn normalization_constant_vanishes_linearly_at_one() {
        // C_{1,s}/(1-s) → 4Γ(3/2)/√π = 2 as s → 1⁻.
        let r90 = normalization_constant(1, 0.9).unwrap() / 0.1;
        let r99 = normalization_constant(1, 0.99).unwrap() / 0.01;
        let r999 = normalization_constant(1, 0.999).unwrap() / 0.001;
        assert!((r99 - 2.0).abs() < (r90 - 2.0).abs());
        assert!((r999 - 2.0).abs() < (r99 - 2.0).abs());
        assert!((r999 - 2.0).abs() < 1e-2);
    }

    #[test]
    fn gauss_peak_mass_and_moment() {
        let grid = GridSpec::new(1, 40.0, 1024).unwrap();
        let g = gauss_kernel(&grid, 1.0).unwrap();
        assert_relative_eq!(g.field.at_origin(), (4.0 * PI).powf(-0.5), epsilon = 1e-15);
        assert!(g.mass_defect() < 1e-8);
        let second: f64 = (0..grid.len())
            .map(|i| grid.coordinate(i).powi(2) * g.field.values()[i])
            .sum::<f64>()
            * grid.spacing();
        assert_relative_eq!(second, 2.0, epsilon = 1e-8);
        assert!(gauss_kernel(&grid, 0.0).is_err());
        let err = gauss_kernel(&GridSpec::new(1, 5.0, 256).unwrap(), 10.0).unwrap_err();
        match err {
            Error::MassDefect { suggested_half_length, .. } => assert!(suggested_half_length > 5.0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn gauss_2d_peak() {
        let grid = GridSpec::default_for(2).unwrap();
        let g = gauss_kernel(&grid, 0.5).unwrap();
        assert_relative_eq!(g.peak(), 1.0 / (4.0 * PI * 0.5), epsilon = 1e-14);
    }

    #[test]
    fn fractional_kernel_is_a_probability_density() {
        let params = ModelParams::new(1, 0.5).unwrap();
        let grid = GridSpec::default_for(1).unwrap();
        let h = fractional_kernel(&params, &grid, 1.0).unwrap();
        assert!(h.mass_defect() < 1e-6);
        assert!(h.field.evenness_defect() <= 1e-14 * h.peak());
        assert!(h.field.min() > -1e-10 * h.peak());
    }

    #[test]
    fn poisson_kernel_on_the_torus() {
        // The inverse of e^{-t|ξ|} on a 2R-periodic box is the periodic
        // Poisson kernel; compare with the image sum of (1/π) t/(t²+x²).
        let params = ModelParams::new(1, 0.5).unwrap();
        let grid = GridSpec::new(1, 10.0, 512).unwrap();
        let t = 0.7;
        let h = fractional_kernel(&params, &grid, t).unwrap();
        for i in (0..grid.len()).step_by(7) {
            let x = grid.coordinate(i);
            let mut images = 0.0;
            for m in -200_000i64..=200_000 {
                let y = x + 20.0 * m as f64;
                images += t / (PI * (t * t + y * y));
            }
            // remainder of the image sum beyond |m| = 2e5: ≈ 2t/(π·20²·2e5)
            images += 2.0 * t / (PI * 400.0 * 2e5);
            assert_relative_eq!(h.field.values()[i], images, max_relative = 1e-9);
        }
    }

    #[test]
    fn mixed_routes_agree() {
        let params = ModelParams::new(1, 0.5).unwrap();
        let grid = GridSpec::default_for(1).unwrap();
        let p = mixed_kernel(&params, &grid, 1.0).unwrap();
        assert!(p.diagnostics.iter().all(|d| !matches!(d, KernelDiagnostic::RouteDisagreement { .. })));
        let c = mixed_kernel_convolution(&params, &grid, 1.0).unwrap();
        assert!(peak_relative_defect(&p.field, &c.field) < 1e-8);
        assert!(p.mass_defect() < 1e-6);
        // p_t lies below both factors' peaks
        assert!(p.peak() < (4.0 * PI).powf(-0.5));
        assert!(p.peak() < 1.0 / PI);
    }

    #[test]
    fn gauss_semigroup_is_exact() {
        let grid = GridSpec::default_for(1).unwrap();
        let a = gauss_kernel(&grid, 0.5).unwrap();
        let report = verify_kernel_properties(&a, Some(&a)).unwrap();
        assert!(report.semigroup.unwrap().relative_defect < 1e-10);
        assert!(report.min_over_peak >= 0.0);
    }

    #[test]
    fn mixed_semigroup_1d() {
        let params = ModelParams::new(1, 0.5).unwrap();
        let grid = GridSpec::default_for(1).unwrap();
        let a = mixed_kernel(&params, &grid, 0.5).unwrap();
        let report = verify_kernel_properties(&a, Some(&a)).unwrap();
        assert!(report.semigroup.unwrap().relative_defect < 1e-6);
        assert!(report.within(1e-6, 1e-10, 1e-6));
    }

    #[test]
    fn semigroup_needs_matching_kinds() {
        let params = ModelParams::new(1, 0.5).unwrap();
        let grid = GridSpec::new(1, 20.0, 256).unwrap();
        let a = mixed_kernel(&params, &grid, 0.5).unwrap();
        let b = gauss_kernel(&grid, 0.5).unwrap();
        assert!(verify_kernel_properties(&a, Some(&b)).is_err());
    }

    #[test]
    fn tail_of_fractional_kernel_matches_levy_density() {
        // h_t(x) ~ t C_{N,s} / |x|^{N+2s} for |x| → ∞.
        let params = ModelParams::new(1, 0.75).unwrap();
        let grid = GridSpec::new(1, 40.0, 2048).unwrap();
        let h = fractional_kernel_with(&params, &grid, 0.1, &KernelOptions::free_space(16)).unwrap();
        let i = grid.len() / 2 + (15.0 / grid.spacing()) as usize;
        let x = grid.coordinate(i);
        let asym = 0.1 * params.normalization / x.powf(2.5);
        assert_relative_eq!(h.field.values()[i], asym, max_relative = 1e-2);
    }

    #[test]
    fn aliasing_budget_diagnostic() {
        let params = ModelParams::new(1, 0.25).unwrap();
        let grid = GridSpec::default_for(1).unwrap();
        let h = mixed_kernel(&params, &grid, 10.0).unwrap();
        assert!(h
            .diagnostics
            .iter()
            .any(|d| matches!(d, KernelDiagnostic::AliasingBudget { .. })));
        assert!(h.mass_defect() < 1e-6);
    }

    #[test]
    fn radial_profile_matches_grid_kernel() {
        let params = ModelParams::new(2, 0.5).unwrap();
        let grid = GridSpec::new(2, 10.0, 64).unwrap();
        let p = mixed_kernel(&params, &grid, 1.0).unwrap();
        let radii: Vec<f64> = (0..8).map(|j| j as f64 * grid.spacing()).collect();
        let prof = radial_profile(&params, &grid, 1.0, &radii).unwrap();
        let o = grid.origin_index();
        for (j, v) in prof.iter().enumerate() {
            // points along the first axis: index offset j·n
            assert_relative_eq!(*v, p.field.values()[o + j * 64], max_relative = 1e-10);
        }
    }

    #[test]
    fn bound_scan_rejects_short_range() {
        let params = ModelParams::new(1, 0.5).unwrap();
        let grid = GridSpec::new(1, 10.0, 128).unwrap();
        assert!(estimate_bound_constant(&params, (0.1, 1.0), &grid).is_err());
    }

    #[test]
    fn gaussian_on_diagonal_scaling() {
        let grid = GridSpec::default_for(1).unwrap();
        for t in [0.1, 1.0, 5.0] {
            let g = gauss_kernel(&grid, t).unwrap();
            assert_relative_eq!(g.peak() * t.sqrt(), (4.0 * PI).powf(-0.5), epsilon = 1e-14);
        }
    }
}
