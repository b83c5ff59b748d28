//! Monte Carlo construction of `p_t` as the law of `W_t + J_t`, with `W_t` a
//! Brownian motion of generator `Δ` (variance `2t` per axis) and `J_t` an
//! independent symmetric `2s`-stable Lévy flight.
//!
//! Sampling is split into fixed chunks of [`CHUNK_SIZE`] variates. Chunk `c`
//! draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `c`, so the output
//! depends on the seed and the count only, never on the number of threads.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::io;
use crate::kernels::{radial_profile, KernelField, ModelParams};
use crate::spectral::{check_order, forward_unchecked, inverse_unchecked, SpectrumField};

pub const CHUNK_SIZE: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub s: f64,
    pub t: f64,
    pub samples: usize,
    pub seed: u64,
    pub bin_width: f64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        check_order(self.s)?;
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(invalid("t", "time must be finite and >= 0"));
        }
        if self.samples < 10_000 {
            return Err(invalid("samples", "at least 10^4 samples are required"));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(invalid("bin_width", "bin width must be > 0"));
        }
        Ok(())
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard symmetric `α`-stable variate (characteristic function
/// `e^{-|ξ|^α}`) by the Chambers–Mallows–Stuck transform.
fn standard_stable(alpha: f64, rng: &mut ChaCha8Rng) -> f64 {
    let v = PI * (uniform_open(rng) - 0.5);
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    let w: f64 = rng.sample(Exp1);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Positive stable variate of index `beta ∈ (0,1)` with
/// `E e^{-λA} = e^{-λ^beta}` (Kanter's representation).
fn positive_stable(beta: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u = PI * uniform_open(rng);
    let e: f64 = rng.sample(Exp1);
    (beta * u).sin() / u.sin().powf(1.0 / beta)
        * (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta)
}

fn check_stable_args(s: f64, t: f64) -> Result<()> {
    check_order(s)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", "time must be finite and >= 0"));
    }
    Ok(())
}

/// Symmetric `2s`-stable variates with characteristic function
/// `e^{-t|ξ|^{2s}}`.
pub fn sample_stable(s: f64, t: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    check_stable_args(s, t)?;
    let alpha = 2.0 * s;
    let scale = t.powf(1.0 / alpha);
    let mut out = vec![0.0; count];
    if t == 0.0 {
        return Ok(out);
    }
    out.par_chunks_mut(CHUNK_SIZE)
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut rng = chunk_rng(seed, c);
            for v in chunk.iter_mut() {
                *v = scale * standard_stable(alpha, &mut rng);
            }
        });
    Ok(out)
}

/// Samples of `W_t + J_t` in one dimension.
pub fn sample_mixed(s: f64, t: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    check_stable_args(s, t)?;
    let alpha = 2.0 * s;
    let scale = t.powf(1.0 / alpha);
    let sd = (2.0 * t).sqrt();
    let mut out = vec![0.0; count];
    out.par_chunks_mut(CHUNK_SIZE)
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut rng = chunk_rng(seed, c);
            for v in chunk.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = sd * g + scale * standard_stable(alpha, &mut rng);
            }
        });
    Ok(out)
}

/// Samples of `|W_t + J_t|` in two dimensions. The isotropic stable part is
/// drawn by subordination, `J_t = (2 t^{1/s} A)^{1/2} G` with `A` positive
/// `s`-stable and `G` a standard normal vector.
pub fn sample_mixed_radii_2d(s: f64, t: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    check_stable_args(s, t)?;
    let sd = (2.0 * t).sqrt();
    let sub = 2.0 * t.powf(1.0 / s);
    let mut out = vec![0.0; count];
    out.par_chunks_mut(CHUNK_SIZE)
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut rng = chunk_rng(seed, c);
            for v in chunk.iter_mut() {
                let g: [f64; 4] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let j = if t == 0.0 {
                    0.0
                } else {
                    (sub * positive_stable(s, &mut rng)).sqrt()
                };
                let x = sd * g[0] + j * g[2];
                let y = sd * g[1] + j * g[3];
                *v = x.hypot(y);
            }
        });
    Ok(out)
}

/// Mean of `cos(ξX)` and its standard error.
pub fn empirical_characteristic(samples: &[f64], xi: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let (sum, sum2) = samples.iter().fold((0.0, 0.0), |(a, b), &x| {
        let c = (xi * x).cos();
        (a + c, b + c * c)
    });
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BinGeometry {
    /// Bins on `[-R, R)` of the real line.
    Line,
    /// Radial shells `[r_i, r_{i+1})` of `|x|` in two dimensions.
    Radial,
}

/// Binned empirical law. Samples outside the binned range are counted in
/// the tails, never folded into the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDensity {
    pub geometry: BinGeometry,
    pub config: SamplerConfig,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
    pub sample_count: usize,
    pub tail_left: f64,
    pub tail_right: f64,
}

impl EmpiricalDensity {
    pub fn tail_fraction(&self) -> f64 {
        self.tail_left + self.tail_right
    }

    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    fn from_samples(
        geometry: BinGeometry,
        config: SamplerConfig,
        lower: f64,
        upper: f64,
        samples: &[f64],
    ) -> Result<Self> {
        let bins = ((upper - lower) / config.bin_width).round() as usize;
        if bins == 0 || ((upper - lower) / config.bin_width - bins as f64).abs() > 1e-9 {
            return Err(invalid("bin_width", "bin width must divide the binned range"));
        }
        let width = (upper - lower) / bins as f64;
        let (counts, left, right) = samples
            .par_chunks(CHUNK_SIZE)
            .map(|chunk| {
                let mut counts = vec![0u64; bins];
                let (mut left, mut right) = (0u64, 0u64);
                for &x in chunk {
                    let pos = (x - lower) / width;
                    if pos < 0.0 {
                        left += 1;
                    } else if pos >= bins as f64 {
                        right += 1;
                    } else {
                        counts[pos as usize] += 1;
                    }
                }
                (counts, left, right)
            })
            .reduce(
                || (vec![0u64; bins], 0, 0),
                |(mut a, l1, r1), (b, l2, r2)| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += y;
                    }
                    (a, l1 + l2, r1 + r2)
                },
            );
        let m = samples.len() as f64;
        Ok(Self {
            geometry,
            config,
            edges: (0..=bins).map(|i| lower + i as f64 * width).collect(),
            probabilities: counts.iter().map(|&c| c as f64 / m).collect(),
            counts,
            sample_count: samples.len(),
            tail_left: left as f64 / m,
            tail_right: right as f64 / m,
        })
    }

    pub fn histogram_rows(&self) -> Vec<Vec<String>> {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, &p)| io::float_row(&[self.edges[i], self.edges[i + 1], p]))
            .collect()
    }

    /// Histogram CSV `bin_left,bin_right,probability` and its JSON sidecar.
    pub fn write(&self, csv: &Path, sidecar: &Path) -> Result<()> {
        io::write_csv(csv, &["bin_left", "bin_right", "probability"], &self.histogram_rows())?;
        io::write_json(
            sidecar,
            &serde_json::json!({
                "seed": self.config.seed,
                "count": self.sample_count,
                "s": self.config.s,
                "t": self.config.t,
                "tail_fraction": self.tail_fraction(),
                "geometry": self.geometry,
            }),
        )
    }
}

/// Histogram of `W_t + J_t` over `[-R, R)` with bins of `config.bin_width`.
pub fn sample_mixed_process(config: &SamplerConfig, half_length: f64) -> Result<EmpiricalDensity> {
    config.validate()?;
    if !(half_length > 0.0) {
        return Err(invalid("R", "half-length must be > 0"));
    }
    let samples = sample_mixed(config.s, config.t, config.samples, config.seed)?;
    EmpiricalDensity::from_samples(BinGeometry::Line, *config, -half_length, half_length, &samples)
}

/// Histogram of `|W_t + J_t|` in two dimensions over `[0, r_max)`.
pub fn sample_mixed_process_2d(config: &SamplerConfig, r_max: f64) -> Result<EmpiricalDensity> {
    config.validate()?;
    if !(r_max > 0.0) {
        return Err(invalid("r_max", "radial range must be > 0"));
    }
    let samples = sample_mixed_radii_2d(config.s, config.t, config.samples, config.seed)?;
    EmpiricalDensity::from_samples(BinGeometry::Radial, *config, 0.0, r_max, &samples)
}

/// Binned Kolmogorov–Smirnov distance and per-bin z-scores between an
/// empirical law and a kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub ks_distance: f64,
    pub max_abs_z: f64,
    pub bins: usize,
    pub sample_count: usize,
    pub kernel_tail: f64,
    pub empirical_tail: f64,
}

impl ComparisonReport {
    /// 95% critical value `1.36/√M` of the Kolmogorov distribution.
    pub fn ks_critical_95(&self) -> f64 {
        1.36 / (self.sample_count as f64).sqrt()
    }
}

fn check_nonempty(e: &EmpiricalDensity) -> Result<()> {
    if e.sample_count == 0 || e.probabilities.is_empty() {
        return Err(Error::Insufficient("empirical density has no samples".into()));
    }
    Ok(())
}

fn report(e: &EmpiricalDensity, kernel_bins: &[f64], kernel_left: f64, kernel_tail: f64) -> ComparisonReport {
    let m = e.sample_count as f64;
    let mut fe = e.tail_left;
    let mut fk = kernel_left;
    let mut ks = (fe - fk).abs();
    let mut max_z: f64 = 0.0;
    for (pe, pk) in e.probabilities.iter().zip(kernel_bins) {
        fe += pe;
        fk += pk;
        ks = ks.max((fe - fk).abs());
        let expected = m * pk;
        if expected >= 5.0 {
            let sd = (expected * (1.0 - pk)).sqrt();
            max_z = max_z.max(((pe * m) - expected).abs() / sd);
        }
    }
    ComparisonReport {
        ks_distance: ks,
        max_abs_z: max_z,
        bins: kernel_bins.len(),
        sample_count: e.sample_count,
        kernel_tail,
        empirical_tail: e.tail_fraction(),
    }
}

/// Kernel mass `∫_{-R}^{x_j} k` at every grid point and at `R`, from the
/// antiderivative of the kernel's trigonometric interpolant.
pub fn kernel_cdf_1d(kernel: &KernelField) -> Result<Vec<f64>> {
    let grid = *kernel.grid();
    if grid.dim() != 1 {
        return Err(Error::GridMismatch("cumulative kernel needs N = 1".into()));
    }
    let n = grid.points();
    let r = grid.half_length();
    let spec = forward_unchecked(&kernel.field);
    let c0 = spec.zero_mode().re;
    let unit = PI / r;
    let anti: Vec<Complex64> = spec
        .coefficients()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if j == 0 || j == n / 2 {
                return Complex64::new(0.0, 0.0);
            }
            let k = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
            c / Complex64::new(0.0, unit * k)
        })
        .collect();
    let g = inverse_unchecked(&SpectrumField::new(grid, anti)?);
    let g0 = g.values()[0];
    let mut cdf: Vec<f64> = (0..n)
        .map(|j| c0 * (grid.coordinate(j) + r) + g.values()[j] - g0)
        .collect();
    cdf.push(c0 * 2.0 * r);
    Ok(cdf)
}

/// Compares a one-dimensional histogram with a kernel on the same box. The
/// bin width must be a whole number of grid spacings. Kernel mass missing
/// from the box is split evenly between the two tails.
pub fn compare_density(e: &EmpiricalDensity, kernel: &KernelField) -> Result<ComparisonReport> {
    check_nonempty(e)?;
    if e.geometry != BinGeometry::Line || kernel.grid().dim() != 1 {
        return Err(Error::GridMismatch("line histogram needs a one-dimensional kernel".into()));
    }
    let grid = kernel.grid();
    let r = grid.half_length();
    let lower = e.edges[0];
    let upper = *e.edges.last().unwrap();
    if (lower + r).abs() > 1e-9 * r || (upper - r).abs() > 1e-9 * r {
        return Err(Error::GridMismatch(format!(
            "histogram range [{lower}, {upper}) vs box [-{r}, {r})"
        )));
    }
    let ratio = e.bin_width() / grid.spacing();
    let q = ratio.round() as usize;
    if q == 0 || (ratio - q as f64).abs() > 1e-9 {
        return Err(Error::GridMismatch("bin width is not a multiple of the grid spacing".into()));
    }
    let cdf = kernel_cdf_1d(kernel)?;
    let tail = (1.0 - cdf[grid.points()]).max(0.0);
    let bins: Vec<f64> = (0..e.probabilities.len())
        .map(|i| cdf[(i + 1) * q] - cdf[i * q])
        .collect();
    Ok(report(e, &bins, tail / 2.0, tail))
}

/// Compares a radial histogram with the two-dimensional mixed kernel, whose
/// profile is evaluated from the Fourier series of `series_grid`.
pub fn compare_radial_density(
    e: &EmpiricalDensity,
    params: &ModelParams,
    series_grid: &crate::spectral::GridSpec,
    t: f64,
) -> Result<ComparisonReport> {
    check_nonempty(e)?;
    if e.geometry != BinGeometry::Radial {
        return Err(Error::GridMismatch("radial comparison needs a radial histogram".into()));
    }
    let r_max = *e.edges.last().unwrap();
    if r_max > series_grid.half_length() {
        return Err(Error::GridMismatch("radial range exceeds the series box".into()));
    }
    // Simpson's rule for F(r) = ∫_0^r 2πρ p(ρ) dρ on a fine radial mesh.
    let sub = 8;
    let steps = e.probabilities.len() * sub;
    let h = r_max / steps as f64;
    let radii: Vec<f64> = (0..=2 * steps).map(|i| i as f64 * h / 2.0).collect();
    let profile = radial_profile(params, series_grid, t, &radii)?;
    let f: Vec<f64> = radii.iter().zip(&profile).map(|(r, p)| 2.0 * PI * r * p).collect();
    let bins: Vec<f64> = (0..e.probabilities.len())
        .map(|b| {
            (b * sub..(b + 1) * sub)
                .map(|i| h / 6.0 * (f[2 * i] + 4.0 * f[2 * i + 1] + f[2 * i + 2]))
                .sum()
        })
        .collect();
    let tail = (1.0 - bins.iter().sum::<f64>()).max(0.0);
    Ok(report(e, &bins, 0.0, tail))
}
