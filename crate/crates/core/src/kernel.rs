//! The polyharmonic heat kernel `b(x, t)`, whose Fourier multiplier is
//! `exp(-t |xi|^{2m})`, and its self-similar profile `g = b(., 1)`.
//!
//! With this normalisation `b(x, t) = t^{-n/2m} g(x t^{-1/2m})` and `int g = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{GridSpec, SpectralField};
use crate::par;

pub const MAX_ORDER: usize = 3;

/// `exp(-t * xi_norm_sq^m)`.
pub fn multiplier(xi_norm_sq: f64, m: usize, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("{t} must be >= 0")));
    }
    if !(xi_norm_sq >= 0.0) {
        return Err(invalid("xi_norm_sq", format!("{xi_norm_sq} must be >= 0")));
    }
    Ok(multiplier_unchecked(xi_norm_sq, m, t))
}

#[inline]
pub(crate) fn multiplier_unchecked(xi_norm_sq: f64, m: usize, t: f64) -> f64 {
    (-t * xi_norm_sq.powi(m as i32)).exp()
}

/// `(4 pi)^{-n/2} exp(-|x|^2 / 4)`, the `m = 1` profile.
pub fn gaussian_profile(n: usize, r: f64) -> f64 {
    (4.0 * PI).powf(-(n as f64) / 2.0) * (-r * r / 4.0).exp()
}

fn check_orders(m: usize, n: usize) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&m) {
        return Err(invalid("m", format!("{m} outside 1..={MAX_ORDER}")));
    }
    if !(1..=3).contains(&n) {
        return Err(invalid("n", format!("{n} outside 1..=3")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod (7/15)

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Integral of `f` over `[a, b]` with initial `pieces` panels, refined until
/// the summed Kronrod-Gauss difference is below `tol`. Returns `(value, error)`.
pub(crate) fn adaptive_gk<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    pieces: usize,
    tol: f64,
) -> (f64, f64) {
    let mut panels: Vec<(f64, f64, f64, f64)> = (0..pieces.max(1))
        .map(|i| {
            let lo = a + (b - a) * i as f64 / pieces as f64;
            let hi = a + (b - a) * (i + 1) as f64 / pieces as f64;
            let (v, e) = gk15(f, lo, hi);
            (lo, hi, v, e)
        })
        .collect();
    for _ in 0..2000 {
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= tol {
            break;
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
    // Sum in interval order so the result does not depend on refinement history.
    panels.sort_by(|p, q| p.0.total_cmp(&q.0));
    let value = panels.iter().map(|p| p.2).sum();
    let err = panels.iter().map(|p| p.3).sum();
    (value, err)
}

/// Frequency cutoff `(40 + 10 log(1 + |x|))^{1/2m}` beyond which
/// `exp(-xi^{2m})` is below `e^{-40}`.
pub fn frequency_cutoff(m: usize, x: f64) -> f64 {
    (40.0 + 10.0 * (1.0 + x.abs()).ln()).powf(1.0 / (2 * m) as f64)
}

const QUAD_TOL: f64 = 1e-14;

/// `g^{(k)}(x)` in one dimension by quadrature of
/// `(1/pi) int_0^Xi xi^k cos(x xi + k pi/2) exp(-xi^{2m}) dxi`.
pub fn profile_derivative_1d(m: usize, k: usize, x: f64) -> Result<(f64, f64)> {
    check_orders(m, 1)?;
    let cut = frequency_cutoff(m, x);
    let phase = k as f64 * PI / 2.0;
    let f = |xi: f64| xi.powi(k as i32) * (x * xi + phase).cos() * (-xi.powi(2 * m as i32)).exp();
    let pieces = ((cut * (1.0 + x.abs()) / 2.0).ceil() as usize).clamp(4, 4096);
    let (v, e) = adaptive_gk(&f, 0.0, cut, pieces, QUAD_TOL * PI);
    let (v, e) = (v / PI, e / PI);
    if !(e <= 1e-12) || !v.is_finite() {
        return Err(Error::Quadrature { x, residual: e });
    }
    Ok((v, e))
}

/// Axial samples of the profile and its axial derivatives `d^k g / dx_1^k`,
/// `k = 0..=m`, at points `(x, 0, ..., 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelProfile {
    pub m: usize,
    pub n: usize,
    pub xs: Vec<f64>,
    /// `derivatives[k][i]` is the `k`-th axial derivative at `xs[i]`.
    pub derivatives: Vec<Vec<f64>>,
    /// Numerically evaluated `int g`; 1 by construction of the multiplier.
    pub normalization: f64,
    /// Largest quadrature or truncation error estimate.
    pub max_residual: f64,
}

impl KernelProfile {
    pub fn values(&self) -> &[f64] {
        &self.derivatives[0]
    }

    pub fn derivative(&self, k: usize) -> &[f64] {
        &self.derivatives[k]
    }

    pub fn sample_range(&self) -> f64 {
        self.xs.iter().fold(0.0, |a, x| a.max(x.abs()))
    }
}

/// Samples `g` and its first `m` axial derivatives at `xs`.
///
/// `n = 1` uses adaptive quadrature; `n >= 2` evaluates the inverse Fourier
/// integral as a lattice sum over a box four times wider than the sampled
/// range, summing the transverse directions first.
pub fn profile_g(m: usize, n: usize, xs: &[f64]) -> Result<KernelProfile> {
    check_orders(m, n)?;
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(invalid("xs", "sample points must be finite"));
    }
    let samples: Vec<Vec<(f64, f64)>> = if n == 1 {
        par::try_map_collect(xs.len(), |i| {
            (0..=m)
                .map(|k| profile_derivative_1d(m, k, xs[i]))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        lattice_axial_samples(m, n, xs)
    };
    let mut derivatives = vec![vec![0.0; xs.len()]; m + 1];
    let mut max_residual: f64 = 0.0;
    for (i, row) in samples.iter().enumerate() {
        for (k, &(v, e)) in row.iter().enumerate() {
            derivatives[k][i] = v;
            max_residual = max_residual.max(e);
        }
    }
    Ok(KernelProfile {
        m,
        n,
        xs: xs.to_vec(),
        derivatives,
        normalization: profile_mass(m)?,
        max_residual,
    })
}

/// `int g`, computed as the trapezoid sum of the one-dimensional marginal
/// (the marginal of the `n`-dimensional profile is the 1-D profile).
pub fn profile_mass(m: usize) -> Result<f64> {
    let h = 0.25;
    let half = 240usize;
    let vals = par::try_map_collect(half + 1, |j| {
        profile_derivative_1d(m, 0, j as f64 * h).map(|(v, _)| v)
    })?;
    let tail: f64 = vals[1..].iter().sum();
    Ok(h * (vals[0] + 2.0 * tail))
}

fn lattice_axial_samples(m: usize, n: usize, xs: &[f64]) -> Vec<Vec<(f64, f64)>> {
    let range = xs.iter().fold(10.0f64, |a, x| a.max(x.abs()));
    let box_len = 4.0 * range;
    let dxi = 2.0 * PI / box_len;
    let cut = frequency_cutoff(m, range);
    let kmax = (cut / dxi).ceil() as i64;
    let axis: Vec<f64> = (-kmax..=kmax).map(|k| k as f64 * dxi).collect();
    let w = dxi / (2.0 * PI);
    // Transverse marginal: (dxi/2pi)^{n-1} sum_{xi'} exp(-(xi_1^2 + |xi'|^2)^m).
    let marginal: Vec<f64> = par::map_collect(kmax as usize + 1, |i| {
        let x1 = i as f64 * dxi;
        let mut s = 0.0;
        if n == 2 {
            for &a in &axis {
                s += (-(x1 * x1 + a * a).powi(m as i32)).exp();
            }
        } else {
            for &a in &axis {
                for &b in &axis {
                    s += (-(x1 * x1 + a * a + b * b).powi(m as i32)).exp();
                }
            }
        }
        s * w.powi(n as i32 - 1)
    });
    let tail_bound = (-(cut.powi(2 * m as i32))).exp();
    par::map_collect(xs.len(), |i| {
        let x = xs[i];
        (0..=m)
            .map(|k| {
                let phase = k as f64 * PI / 2.0;
                let mut s = if k == 0 { marginal[0] } else { 0.0 };
                for (j, &mj) in marginal.iter().enumerate().skip(1) {
                    let xi = j as f64 * dxi;
                    s += 2.0 * xi.powi(k as i32) * (x * xi + phase).cos() * mj;
                }
                (s * w, tail_bound)
            })
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Decay fits

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub k: usize,
    /// Polynomial decay exponent tested.
    pub exponent: f64,
    /// `max |d^k g(x)| (1 + |x|)^L` over all samples.
    pub c_fit: f64,
    /// The same maximum restricted to `|x| <= sample_range / 2`.
    pub c_fit_half_range: f64,
    pub sample_range: f64,
    /// `c_fit / c_fit_half_range - 1`.
    pub growth: f64,
    /// True when `growth <= 0.1`.
    pub stable: bool,
}

pub const MIN_DECAY_RANGE: f64 = 10.0;

pub fn verify_decay(p: &KernelProfile, k: usize, exponent: f64) -> Result<DecayFit> {
    if k > p.m {
        return Err(invalid("k", format!("{k} exceeds the profile order {}", p.m)));
    }
    let range = p.sample_range();
    if range < MIN_DECAY_RANGE {
        return Err(invalid(
            "samples",
            format!("sample range {range} below the required {MIN_DECAY_RANGE}"),
        ));
    }
    let fit = |limit: f64| {
        p.xs
            .iter()
            .zip(&p.derivatives[k])
            .filter(|(x, _)| x.abs() <= limit)
            .map(|(x, v)| v.abs() * (1.0 + x.abs()).powf(exponent))
            .fold(0.0, f64::max)
    };
    let c_fit = fit(f64::INFINITY);
    let c_half = fit(range / 2.0);
    let growth = if c_half > 0.0 { c_fit / c_half - 1.0 } else { f64::INFINITY };
    Ok(DecayFit {
        k,
        exponent,
        c_fit,
        c_fit_half_range: c_half,
        sample_range: range,
        growth,
        stable: c_fit.is_finite() && growth <= 0.1,
    })
}

// ---------------------------------------------------------------------------
// Sampled kernels and L1 scaling

/// `b(., t)` centred at the origin on the periodic grid `spec`, via the
/// inverse transform of `exp(-t |xi|^{2m}) / L^n`.
pub fn heat_kernel_field(spec: &GridSpec, m: usize, t: f64) -> Result<crate::grid::Field> {
    check_orders(m, spec.dim())?;
    if !(t > 0.0) {
        return Err(invalid("t", format!("{t} must be > 0")));
    }
    let xi2 = spec.wavenumber_sq_table();
    let vol = spec.volume();
    let coeffs = xi2
        .iter()
        .map(|&s| Complex64::new(multiplier_unchecked(s, m, t) / vol, 0.0))
        .collect();
    Ok(SpectralField::from_coeffs(*spec, 1, coeffs, t)?.to_field())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Scaling {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub ts: Vec<f64>,
    /// `t^{k/2m} ||grad^k b(., t)||_1` per time.
    pub values: Vec<f64>,
    pub mean: f64,
    pub max_relative_deviation: f64,
    pub box_length: f64,
    pub points: usize,
}

/// Largest `exp(-t xi_max^{2m})` tolerated before a time is rejected as
/// under-resolved.
pub const RESOLUTION_FLOOR: f64 = 1e-14;

fn resolved(m: usize, t: f64, length: f64, points: usize) -> bool {
    let kmax = PI * points as f64 / length;
    (-t * kmax.powi(2 * m as i32)).exp() <= RESOLUTION_FLOOR
}

/// Measures `t^{k/2m} ||grad^k b(., t)||_{L^1}` for each `t`, which the
/// self-similar form makes independent of `t`.
///
/// One periodic box serves all times: its length is set by the widest
/// kernel and its resolution by the narrowest.
pub fn l1_scaling_check(m: usize, k: usize, n: usize, ts: &[f64]) -> Result<L1Scaling> {
    check_orders(m, n)?;
    if k > 2 * m {
        return Err(invalid("k", format!("{k} exceeds 2m = {}", 2 * m)));
    }
    if ts.is_empty() || ts.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(invalid("ts", "times must be positive and finite"));
    }
    let e = 1.0 / (2 * m) as f64;
    let t_max = ts.iter().cloned().fold(0.0, f64::max);
    let t_min = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let (base, cap): (f64, usize) = match n {
        1 => (64.0, 1usize << 16),
        2 => (32.0, 512),
        _ => (24.0, 128),
    };
    let length = base.max(2.0 * base / 1.6 * t_max.powf(e));
    let mut points = if n == 1 { 4096 } else { 64 };
    while !resolved(m, t_min, length, points) && points < cap {
        points *= 2;
    }
    if !resolved(m, t_min, length, points) {
        let need = (-RESOLUTION_FLOOR.ln()).powf(e) * length / (PI * cap as f64);
        return Err(Error::UnderResolved(format!(
            "t = {t_min} needs more than {cap} points per axis on a box of length {length:.1}; \
             use t >= {:.3e}",
            need.powi(2 * m as i32)
        )));
    }
    let spec = GridSpec::new(n, length, points)?;
    let values = par::try_map_collect(ts.len(), |i| {
        let t = ts[i];
        let norm = if n == 1 {
            l1_derivative_1d(&spec, m, k, t)
        } else {
            l1_gradient_riemann(&spec, m, k, t)?
        };
        Ok::<f64, Error>(t.powf(k as f64 * e) * norm)
    })?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let dev = values
        .iter()
        .map(|v| ((v - mean) / mean).abs())
        .fold(0.0, f64::max);
    Ok(L1Scaling {
        m,
        k,
        n,
        ts: ts.to_vec(),
        values,
        mean,
        max_relative_deviation: dev,
        box_length: length,
        points,
    })
}

/// Real trigonometric polynomial `c_0 + 2 sum_j Re(c_j e^{i xi_j x})`.
struct TrigPoly {
    freqs: Vec<f64>,
    coeffs: Vec<Complex64>,
    mean: f64,
}

impl TrigPoly {
    fn eval(&self, x: f64) -> f64 {
        let mut s = self.mean;
        for (xi, c) in self.freqs.iter().zip(&self.coeffs) {
            s += 2.0 * (c * Complex64::from_polar(1.0, xi * x)).re;
        }
        s
    }

    fn antiderivative(&self, x: f64) -> f64 {
        let mut s = self.mean * x;
        for (xi, c) in self.freqs.iter().zip(&self.coeffs) {
            s += 2.0 * (c * Complex64::from_polar(1.0, xi * x) / Complex64::new(0.0, *xi)).re;
        }
        s
    }
}

/// `||d^k b(., t)||_1` on a periodic line: locate sign changes on the grid,
/// refine each zero by bisection, integrate exactly between zeros.
fn l1_derivative_1d(spec: &GridSpec, m: usize, k: usize, t: f64) -> f64 {
    let length = spec.length();
    let n = spec.points();
    let mut freqs = Vec::new();
    let mut coeffs = Vec::new();
    for j in 1..n / 2 {
        let xi = spec.wavenumber(j);
        let amp = multiplier_unchecked(xi * xi, m, t) * xi.powi(k as i32) / length;
        if amp.abs() < 1e-30 {
            break;
        }
        freqs.push(xi);
        coeffs.push(Complex64::new(0.0, 1.0).powu(k as u32) * amp);
    }
    let mean = if k == 0 { 1.0 / length } else { 0.0 };
    let poly = TrigPoly {
        freqs,
        coeffs,
        mean,
    };
    let h = spec.spacing();
    let samples: Vec<f64> = (0..n).map(|i| poly.eval(i as f64 * h)).collect();
    let mut zeros = Vec::new();
    for i in 0..n {
        let (a, b) = (samples[i], samples[(i + 1) % n]);
        if a == 0.0 {
            zeros.push(i as f64 * h);
        } else if a * b < 0.0 {
            let (mut lo, mut hi) = (i as f64 * h, (i + 1) as f64 * h);
            let slo = a.signum();
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if poly.eval(mid).signum() == slo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            zeros.push(0.5 * (lo + hi));
        }
    }
    if zeros.is_empty() {
        return (poly.antiderivative(length) - poly.antiderivative(0.0)).abs();
    }
    let mut total = 0.0;
    for w in zeros.windows(2) {
        total += (poly.antiderivative(w[1]) - poly.antiderivative(w[0])).abs();
    }
    let first = zeros[0];
    let last = *zeros.last().unwrap();
    total += (poly.antiderivative(first + length) - poly.antiderivative(last)).abs();
    total
}

/// `||grad^k b(., t)||_1` with the full tensor norm, by a Riemann sum.
fn l1_gradient_riemann(spec: &GridSpec, m: usize, k: usize, t: f64) -> Result<f64> {
    let b = heat_kernel_field(spec, m, t)?.to_spectral()?;
    let grad = crate::nonlinearity::gradient_tensor(&b, k);
    let mag = grad.pointwise_norm();
    Ok(mag.iter().sum::<f64>() * spec.cell_volume())
}
