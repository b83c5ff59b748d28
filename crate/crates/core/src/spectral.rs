//! Periodic computational box, discrete Fourier transform and the symbol
//! multipliers of `L = -Δ + (-Δ)^s`.
//!
//! # Conventions
//!
//! The box is `[-R, R)^N` sampled at `x_j = -R + j·Δx`, `Δx = 2R/n`. Values
//! are stored row-major (last axis fastest). Spectra are stored in FFT index
//! order along every axis; raw index `j` carries the integer wavenumber
//! `k = j` for `j < n/2` and `k = j - n` otherwise, and the physical
//! wavenumber is `ξ_k = π k / R`. [`wavenumber_norms`] is the single source of
//! `|ξ|` for the whole crate.
//!
//! The transform pair is
//!
//! ```text
//! F_k = n^{-N} Σ_j f_j e^{-i ξ_k·x_j},      f_j = Σ_k F_k e^{i ξ_k·x_j},
//! ```
//!
//! so the zero mode is the mean of the field and Plancherel reads
//! `Σ_k |F_k|² = n^{-N} Σ_j |f_j|²`. A kernel with Fourier symbol `m(ξ)` on
//! the torus therefore has coefficients `m(ξ_k) / (2R)^N`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};

/// Truncated periodic box `[-R, R)^N` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GridSpec {
    dim: usize,
    half_length: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_length: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(invalid("N", format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(invalid("R", format!("half-length must be positive, got {half_length}")));
        }
        if points < 8 || !points.is_multiple_of(2) {
            return Err(invalid("n", format!("points per axis must be even and >= 8, got {points}")));
        }
        points
            .checked_pow(dim as u32)
            .filter(|&total| total <= (1usize << 31))
            .ok_or_else(|| invalid("n", "total point count too large"))?;
        Ok(Self {
            dim,
            half_length,
            points,
        })
    }

    /// Default grid: R = 40, n = 1024 (N=1); R = 20, n = 256 (N=2); R = 10, n = 64 (N=3).
    pub fn default_for(dim: usize) -> Result<Self> {
        match dim {
            1 => Self::new(1, 40.0, 1024),
            2 => Self::new(2, 20.0, 256),
            3 => Self::new(3, 10.0, 64),
            _ => Err(invalid("N", format!("dimension must be 1, 2 or 3, got {dim}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    /// Volume element `Δx^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of the `j`-th sample along any axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    /// Per-axis indices of the flat index `idx`.
    pub fn unravel(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.points;
            idx /= self.points;
        }
        out
    }

    pub fn ravel(&self, axes: &[usize]) -> usize {
        axes[..self.dim]
            .iter()
            .fold(0, |acc, &j| acc * self.points + j)
    }

    /// Physical position of the flat index `idx`.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let axes = self.unravel(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coordinate(axes[a]);
        }
        x
    }

    /// Euclidean norm `|x|` of the flat index `idx`.
    pub fn radius(&self, idx: usize) -> f64 {
        let x = self.position(idx);
        x[..self.dim].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Flat index of the point `-x`, i.e. `(n - j) mod n` along every axis.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let axes = self.unravel(idx);
        let mut m = [0; 3];
        for a in 0..self.dim {
            m[a] = (self.points - axes[a]) % self.points;
        }
        self.ravel(&m)
    }

    /// Flat index of the origin.
    pub fn origin_index(&self) -> usize {
        self.ravel(&[self.points / 2; 3])
    }

    /// Same box, twice the points per axis.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.dim, self.half_length, self.points * 2)
    }

    /// Box enlarged by `factor` at the same spacing.
    pub fn extended(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(invalid("padding", "padding factor must be >= 1"));
        }
        Self::new(self.dim, self.half_length * factor as f64, self.points * factor)
    }
}

/// Real samples on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without the finiteness check; the solver uses this to
    /// carry a diverged state back to the caller.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x)` at every grid point; `x` has `N` components.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                f(&x[..grid.dim()])
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Discrete integral `Σ f_j Δx^N`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn at_origin(&self) -> f64 {
        self.values[self.grid.origin_index()]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, factor: f64) -> Field {
        self.map(|v| v * factor)
    }

    /// `max |f(x) - f(-x)|` over all grid points.
    pub fn evenness_defect(&self) -> f64 {
        (0..self.values.len())
            .map(|i| (self.values[i] - self.values[self.grid.mirror_index(i)]).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Restriction to the central `grid` of a field living on an extended box
    /// with identical spacing.
    pub fn crop(&self, grid: GridSpec) -> Result<Field> {
        let big = self.grid;
        if big.dim() != grid.dim() || (big.spacing() - grid.spacing()).abs() > 1e-12 * grid.spacing()
        {
            return Err(Error::GridMismatch("crop requires equal spacing".into()));
        }
        if grid.points() > big.points() {
            return Err(Error::GridMismatch("crop target larger than source".into()));
        }
        let offset = (big.points() - grid.points()) / 2;
        let values = (0..grid.len())
            .map(|i| {
                let axes = grid.unravel(i);
                let mut src = [0; 3];
                for a in 0..grid.dim() {
                    src[a] = axes[a] + offset;
                }
                self.values[big.ravel(&src)]
            })
            .collect();
        Ok(Field::from_raw(grid, values))
    }
}

/// Fourier coefficients of a field, in FFT index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumField {
    grid: GridSpec,
    coefficients: Vec<Complex64>,
}

impl SpectrumField {
    pub fn new(grid: GridSpec, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} coefficients for a grid of {} points",
                coefficients.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, coefficients })
    }

    /// Real multiplier stored as a spectrum.
    pub fn from_real(grid: GridSpec, multiplier: Vec<f64>) -> Result<Self> {
        Self::new(grid, multiplier.into_iter().map(|m| Complex64::new(m, 0.0)).collect())
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coefficients: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    /// Zero-mode coefficient (the mean of the represented field).
    pub fn zero_mode(&self) -> Complex64 {
        self.coefficients[0]
    }

    /// Entrywise product.
    pub fn multiply(&self, other: &SpectrumField) -> Result<SpectrumField> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(SpectrumField {
            grid: self.grid,
            coefficients: self
                .coefficients
                .iter()
                .zip(&other.coefficients)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// Entrywise product with a real multiplier.
    pub fn scale_by(&mut self, multiplier: &[f64]) {
        for (c, m) in self.coefficients.iter_mut().zip(multiplier) {
            *c *= m;
        }
    }

    /// `max |F_{-k} - conj(F_k)|`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        (0..self.coefficients.len())
            .map(|i| {
                let j = spectral_mirror(&self.grid, i);
                (self.coefficients[j] - self.coefficients[i].conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `Σ |F_k|²`.
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn spectral_mirror(grid: &GridSpec, idx: usize) -> usize {
    let axes = grid.unravel(idx);
    let mut m = [0; 3];
    for a in 0..grid.dim() {
        m[a] = (grid.points() - axes[a]) % grid.points();
    }
    grid.ravel(&m)
}

pub(crate) fn check_same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let mut cache = CACHE
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .expect("fft plan cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// In-place unnormalized FFT along every axis.
fn fft_nd(grid: &GridSpec, data: &mut [Complex64], inverse: bool) {
    let n = grid.points();
    let (fwd, inv) = plans(n);
    let fft = if inverse { inv } else { fwd };
    if grid.dim() == 1 {
        fft.process(data);
        return;
    }
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let total = grid.len();
    for axis in 0..grid.dim() {
        let stride = n.pow((grid.dim() - 1 - axis) as u32);
        for start in 0..total {
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[start + k * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (k, v) in line.iter().enumerate() {
                data[start + k * stride] = *v;
            }
        }
    }
}

/// `(-1)^(j_1 + ... + j_N)`: the phase `e^{-iξ_k·x_0}` of the box corner.
fn corner_phase(grid: &GridSpec, idx: usize) -> f64 {
    let axes = grid.unravel(idx);
    let parity: usize = axes[..grid.dim()].iter().sum();
    if parity.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Forward transform with the module's normalization.
pub fn forward_transform(f: &Field) -> Result<SpectrumField> {
    if let Some(index) = f.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(forward_unchecked(f))
}

pub(crate) fn forward_unchecked(f: &Field) -> SpectrumField {
    let grid = f.grid;
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&grid, &mut data, false);
    let norm = 1.0 / grid.len() as f64;
    for (i, c) in data.iter_mut().enumerate() {
        *c *= norm * corner_phase(&grid, i);
    }
    SpectrumField {
        grid,
        coefficients: data,
    }
}

/// Inverse transform; rejects spectra that do not represent a real field.
pub fn inverse_transform(spectrum: &SpectrumField) -> Result<Field> {
    let scale = spectrum
        .coefficients
        .iter()
        .fold(0.0f64, |m, c| m.max(c.norm()));
    let defect = spectrum.conjugate_symmetry_defect();
    if !(defect <= 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::NotConjugateSymmetric { defect });
    }
    Ok(inverse_unchecked(spectrum))
}

pub(crate) fn inverse_unchecked(spectrum: &SpectrumField) -> Field {
    let grid = spectrum.grid;
    let mut data: Vec<Complex64> = spectrum
        .coefficients
        .iter()
        .enumerate()
        .map(|(i, c)| c * corner_phase(&grid, i))
        .collect();
    fft_nd(&grid, &mut data, true);
    Field::from_raw(grid, data.into_iter().map(|c| c.re).collect())
}

/// Applies a real Fourier multiplier to a field.
pub(crate) fn apply_multiplier(f: &Field, multiplier: &[f64]) -> Field {
    let mut spec = forward_unchecked(f);
    spec.scale_by(multiplier);
    inverse_unchecked(&spec)
}

/// `|ξ_k|` for every coefficient, in spectrum order.
pub fn wavenumber_norms(grid: &GridSpec) -> Vec<f64> {
    let n = grid.points() as isize;
    let unit = std::f64::consts::PI / grid.half_length();
    (0..grid.len())
        .map(|i| {
            let axes = grid.unravel(i);
            axes[..grid.dim()]
                .iter()
                .map(|&j| {
                    let k = if (j as isize) < n / 2 { j as isize } else { j as isize - n };
                    let xi = unit * k as f64;
                    xi * xi
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

pub(crate) fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", format!("order must lie in (0, 1), got {s}")));
    }
    Ok(())
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// `σ(ξ) = |ξ|² + |ξ|^{2s}` on the grid's wavenumbers (`|0|^{2s} = 0`).
pub fn mixed_exponent(grid: &GridSpec, s: f64) -> Result<Vec<f64>> {
    check_order(s)?;
    Ok(wavenumber_norms(grid)
        .into_iter()
        .map(|k| k * k + fractional_power(k, s))
        .collect())
}

fn fractional_power(k: f64, s: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k.powf(2.0 * s)
    }
}

/// Heat multiplier `e^{-t(|ξ|² + |ξ|^{2s})}` of the mixed operator.
pub fn symbol(grid: &GridSpec, s: f64, t: f64) -> Result<SpectrumField> {
    check_time(t)?;
    let sigma = mixed_exponent(grid, s)?;
    SpectrumField::from_real(*grid, sigma.into_iter().map(|v| (-t * v).exp()).collect())
}

/// Heat multiplier `e^{-t|ξ|^{2s}}` of the fractional Laplacian.
pub fn symbol_fractional(grid: &GridSpec, s: f64, t: f64) -> Result<SpectrumField> {
    check_order(s)?;
    check_time(t)?;
    let m = wavenumber_norms(grid)
        .into_iter()
        .map(|k| (-t * fractional_power(k, s)).exp())
        .collect();
    SpectrumField::from_real(*grid, m)
}

/// Heat multiplier `e^{-t|ξ|²}` of the Laplacian.
pub fn symbol_local(grid: &GridSpec, t: f64) -> Result<SpectrumField> {
    check_time(t)?;
    let m = wavenumber_norms(grid)
        .into_iter()
        .map(|k| (-t * k * k).exp())
        .collect();
    SpectrumField::from_real(*grid, m)
}

/// Spectral `(-Δ)^s f`.
pub fn fractional_laplacian(f: &Field, s: f64) -> Result<Field> {
    check_order(s)?;
    let m: Vec<f64> = wavenumber_norms(f.grid())
        .into_iter()
        .map(|k| fractional_power(k, s))
        .collect();
    Ok(apply_multiplier(f, &m))
}

/// Spectral `Δ f`.
pub fn laplacian(f: &Field) -> Field {
    let m: Vec<f64> = wavenumber_norms(f.grid()).into_iter().map(|k| -k * k).collect();
    apply_multiplier(f, &m)
}
