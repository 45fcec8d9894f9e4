//! Periodic sampling of maps `u: [0, L)^n -> R^l`, their Fourier
//! coefficients, and spectral differentiation.
//!
//! Conventions:
//! - grid points are `x_j = j * h` with `h = L / N`, row-major, last axis fastest;
//! - the forward transform is normalised so the `xi = 0` coefficient is the mean;
//! - wavenumbers are `(2 pi / L) * k` with `k` in `[-N/2, N/2)`;
//! - field data are stored component-major (all points of component 0, then 1, ...).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par;

pub const MAX_DIM: usize = 3;
pub const MIN_POINTS: usize = 8;
/// Largest number of samples per component accepted by [`GridSpec::new`].
pub const DEFAULT_SAMPLE_BUDGET: usize = 1 << 24;
/// Retained fraction of each axis' half-spectrum (the 2/3 rule).
pub const DEFAULT_DEALIAS_FRACTION: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    length: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(dim: usize, length: f64, points: usize) -> Result<Self> {
        Self::with_budget(dim, length, points, DEFAULT_SAMPLE_BUDGET)
    }

    pub fn with_budget(dim: usize, length: f64, points: usize, budget: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {length} must be > 0")));
        }
        if points < MIN_POINTS || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis {points} must be a power of two >= {MIN_POINTS}"
            )));
        }
        let total = points
            .checked_pow(dim as u32)
            .filter(|&t| t <= budget)
            .ok_or_else(|| {
                Error::InvalidGrid(format!(
                    "{points}^{dim} samples exceed the budget of {budget}"
                ))
            })?;
        debug_assert!(total > 0);
        Ok(Self {
            dim,
            length,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Total number of samples `N^n`.
    pub fn total(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Signed mode number of FFT slot `j`; the Nyquist slot maps to `-N/2`.
    pub fn signed_index(&self, j: usize) -> i64 {
        let n = self.points as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.points / 2
    }

    /// Angular wavenumber of FFT slot `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        2.0 * PI / self.length * self.signed_index(j) as f64
    }

    /// Fundamental angular wavenumber `2 pi / L`.
    pub fn fundamental(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Largest resolved wavenumber `pi N / L`.
    pub fn max_wavenumber(&self) -> f64 {
        PI * self.points as f64 / self.length
    }

    pub fn strides(&self) -> [usize; MAX_DIM] {
        let mut s = [0usize; MAX_DIM];
        for (a, item) in s.iter_mut().enumerate().take(self.dim) {
            *item = self.points.pow((self.dim - 1 - a) as u32);
        }
        s
    }

    pub fn coords(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut c = [0usize; MAX_DIM];
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            c[a] = rem % self.points;
            rem /= self.points;
        }
        c
    }

    pub fn flat(&self, coords: &[usize]) -> usize {
        coords[..self.dim]
            .iter()
            .fold(0, |acc, &c| acc * self.points + (c % self.points))
    }

    /// Physical position of sample `flat`.
    pub fn position(&self, flat: usize) -> [f64; MAX_DIM] {
        let c = self.coords(flat);
        let h = self.spacing();
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = c[a] as f64 * h;
        }
        x
    }

    /// Wavevector of spectral slot `flat`.
    pub fn wavevector(&self, flat: usize) -> [f64; MAX_DIM] {
        let c = self.coords(flat);
        let mut k = [0.0; MAX_DIM];
        for a in 0..self.dim {
            k[a] = self.wavenumber(c[a]);
        }
        k
    }

    /// `|xi|^2` for every spectral slot.
    pub fn wavenumber_sq_table(&self) -> Vec<f64> {
        let axis: Vec<f64> = (0..self.points).map(|j| self.wavenumber(j).powi(2)).collect();
        let mut out = vec![0.0; self.total()];
        for (flat, v) in out.iter_mut().enumerate() {
            let c = self.coords(flat);
            *v = (0..self.dim).map(|a| axis[c[a]]).sum();
        }
        out
    }

    /// Integer dealiasing cutoff: slots with `|k| > cutoff` on any axis are removed.
    pub fn dealias_cutoff(&self, fraction: f64) -> i64 {
        (fraction * self.points as f64 / 2.0 + 1e-9).floor() as i64
    }

    /// Same box and dimension, `points` per axis.
    pub fn refined(&self, points: usize) -> Result<Self> {
        Self::new(self.dim, self.length, points)
    }
}

// ---------------------------------------------------------------------------
// FFT plumbing

type Plan = Arc<dyn Fft<f64>>;

static PLANS: Lazy<Mutex<HashMap<(usize, bool), Plan>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(len: usize, forward: bool) -> Plan {
    let mut cache = PLANS.lock().expect("fft plan cache poisoned");
    cache
        .entry((len, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(len)
            } else {
                planner.plan_fft_inverse(len)
            }
        })
        .clone()
}

/// In-place unnormalised multi-dimensional FFT of one component block.
fn transform_block(spec: &GridSpec, block: &mut [Complex64], forward: bool) {
    let n = spec.points;
    let fft = plan(n, forward);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let strides = spec.strides();
    for axis in 0..spec.dim {
        let stride = strides[axis];
        if stride == 1 {
            fft.process_with_scratch(block, &mut scratch);
            continue;
        }
        let outer = block.len() / (n * stride);
        let mut lines = vec![Complex64::new(0.0, 0.0); block.len()];
        for o in 0..outer {
            for i in 0..stride {
                let line = (o * stride + i) * n;
                let base = o * n * stride + i;
                for j in 0..n {
                    lines[line + j] = block[base + j * stride];
                }
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        for o in 0..outer {
            for i in 0..stride {
                let line = (o * stride + i) * n;
                let base = o * n * stride + i;
                for j in 0..n {
                    block[base + j * stride] = lines[line + j];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Physical-space fields

/// Samples of an `R^l`-valued map on the grid at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: GridSpec,
    components: usize,
    data: Vec<f64>,
    time: f64,
}

impl Field {
    /// Builds a field from component-major data, rejecting non-finite entries.
    pub fn new(spec: GridSpec, components: usize, data: Vec<f64>, time: f64) -> Result<Self> {
        if components == 0 {
            return Err(Error::Shape("field needs at least one component".into()));
        }
        if data.len() != components * spec.total() {
            return Err(Error::Shape(format!(
                "expected {} values ({} points x {} components), got {}",
                components * spec.total(),
                spec.total(),
                components,
                data.len()
            )));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(invalid("time", format!("{time} must be finite and >= 0")));
        }
        let field = Self {
            spec,
            components,
            data,
            time,
        };
        field.check_finite()?;
        Ok(field)
    }

    pub(crate) fn from_raw(spec: GridSpec, components: usize, data: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(data.len(), components * spec.total());
        Self {
            spec,
            components,
            data,
            time,
        }
    }

    pub fn zeros(spec: GridSpec, components: usize, time: f64) -> Self {
        Self::from_raw(spec, components, vec![0.0; components * spec.total()], time)
    }

    /// Spatially constant field.
    pub fn constant(spec: GridSpec, value: &[f64], time: f64) -> Self {
        let total = spec.total();
        let mut data = Vec::with_capacity(total * value.len());
        for &v in value {
            data.extend(std::iter::repeat_n(v, total));
        }
        Self::from_raw(spec, value.len(), data, time)
    }

    /// Samples `f(x, out)` at every grid point.
    pub fn from_fn<F>(spec: GridSpec, components: usize, time: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let total = spec.total();
        let mut data = vec![0.0; components * total];
        let mut out = vec![0.0; components];
        for p in 0..total {
            let x = spec.position(p);
            f(&x[..spec.dim], &mut out);
            for c in 0..components {
                data[c * total + p] = out[c];
            }
        }
        Self::new(spec, components, data, time)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub(crate) fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    /// Component-major values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let t = self.spec.total();
        &self.data[c * t..(c + 1) * t]
    }


    /// Value of every component at sample `p`.
    pub fn point(&self, p: usize) -> Vec<f64> {
        let t = self.spec.total();
        (0..self.components).map(|c| self.data[c * t + p]).collect()
    }

    pub fn point_into(&self, p: usize, out: &mut [f64]) {
        let t = self.spec.total();
        for (c, o) in out.iter_mut().enumerate().take(self.components) {
            *o = self.data[c * t + p];
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        let t = self.spec.total();
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite {
                point: i % t,
                component: i / t,
                value: self.data[i],
            }),
        }
    }

    /// Pointwise Euclidean magnitude across components.
    pub fn magnitude(&self) -> Vec<f64> {
        let t = self.spec.total();
        let mut out = vec![0.0; t];
        for c in 0..self.components {
            for (o, v) in out.iter_mut().zip(self.component(c)) {
                *o += v * v;
            }
        }
        out.iter_mut().for_each(|v| *v = v.sqrt());
        out
    }

    /// `max_x |f(x)|` with the Euclidean norm over components.
    pub fn sup_norm(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }

    /// `sum_x |f(x)|^2 h^n`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() * self.spec.cell_volume()
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.spec == other.spec && self.components == other.components
    }

    fn require_same_shape(&self, other: &Field) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "fields differ: {:?}/{} vs {:?}/{}",
                self.spec, self.components, other.spec, other.components
            )))
        }
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &Field) -> Result<Field> {
        self.require_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x + a * y)
            .collect();
        Ok(Self::from_raw(self.spec, self.components, data, self.time))
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.add_scaled(-1.0, other)
    }

    pub fn scaled(&self, a: f64) -> Field {
        let data = self.data.iter().map(|x| a * x).collect();
        Self::from_raw(self.spec, self.components, data, self.time)
    }

    /// Pointwise map over the value vector at each sample.
    pub fn map_points<F>(&self, out_components: usize, f: F) -> Field
    where
        F: Fn(&[f64], &mut [f64]) + Sync + Send,
    {
        let t = self.spec.total();
        let l = self.components;
        let cols = par::map_collect(t, |p| {
            let mut y = vec![0.0; l];
            self.point_into(p, &mut y);
            let mut out = vec![0.0; out_components];
            f(&y, &mut out);
            out
        });
        let mut data = vec![0.0; out_components * t];
        for (p, col) in cols.into_iter().enumerate() {
            for (c, v) in col.into_iter().enumerate() {
                data[c * t + p] = v;
            }
        }
        Self::from_raw(self.spec, out_components, data, self.time)
    }

    /// Forward transform; the `xi = 0` coefficient is the mean of each component.
    pub fn to_spectral(&self) -> Result<SpectralField> {
        self.check_finite()?;
        Ok(self.to_spectral_unchecked())
    }

    pub(crate) fn to_spectral_unchecked(&self) -> SpectralField {
        let total = self.spec.total();
        let mut coeffs: Vec<Complex64> =
            self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let spec = self.spec;
        let norm = 1.0 / total as f64;
        par::for_each_chunk_mut(&mut coeffs, total, |_, block| {
            transform_block(&spec, block, true);
            block.iter_mut().for_each(|c| *c *= norm);
        });
        SpectralField {
            spec: self.spec,
            components: self.components,
            coeffs,
            time: self.time,
        }
    }

    /// Samples translated by whole grid cells: `out(x) = self(x - shift * h)`.
    pub fn shifted(&self, shift: &[i64]) -> Field {
        let total = self.spec.total();
        let n = self.spec.points as i64;
        let mut data = vec![0.0; self.data.len()];
        for p in 0..total {
            let c = self.spec.coords(p);
            let mut src = [0usize; MAX_DIM];
            for a in 0..self.spec.dim {
                src[a] = (c[a] as i64 - shift.get(a).copied().unwrap_or(0)).rem_euclid(n) as usize;
            }
            let q = self.spec.flat(&src);
            for comp in 0..self.components {
                data[comp * total + p] = self.data[comp * total + q];
            }
        }
        Self::from_raw(self.spec, self.components, data, self.time)
    }
}

// ---------------------------------------------------------------------------
// Spectral fields

/// Discrete Fourier coefficients of a [`Field`], component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    spec: GridSpec,
    components: usize,
    coeffs: Vec<Complex64>,
    time: f64,
}

impl SpectralField {
    pub fn from_coeffs(
        spec: GridSpec,
        components: usize,
        coeffs: Vec<Complex64>,
        time: f64,
    ) -> Result<Self> {
        if coeffs.len() != components * spec.total() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                components * spec.total(),
                coeffs.len()
            )));
        }
        Ok(Self {
            spec,
            components,
            coeffs,
            time,
        })
    }

    pub fn zeros(spec: GridSpec, components: usize, time: f64) -> Self {
        Self {
            spec,
            components,
            coeffs: vec![Complex64::new(0.0, 0.0); components * spec.total()],
            time,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let t = self.spec.total();
        &self.coeffs[c * t..(c + 1) * t]
    }

    /// Inverse transform, keeping the real part.
    pub fn to_field(&self) -> Field {
        let (field, _) = self.to_field_with_residue();
        field
    }

    /// Inverse transform plus the largest discarded imaginary part.
    pub fn to_field_with_residue(&self) -> (Field, f64) {
        let total = self.spec.total();
        let mut work = self.coeffs.clone();
        let spec = self.spec;
        par::for_each_chunk_mut(&mut work, total, |_, block| {
            transform_block(&spec, block, false);
        });
        let residue = work.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        let data = work.into_iter().map(|c| c.re).collect();
        (
            Field::from_raw(self.spec, self.components, data, self.time),
            residue,
        )
    }

    /// Multiplies every slot by `(i xi)^alpha`. Odd derivative orders zero the
    /// Nyquist slot of that axis so Hermitian symmetry is preserved.
    pub fn derivative(&self, alpha: &[usize], cap: usize) -> Result<SpectralField> {
        if alpha.len() > self.spec.dim {
            return Err(Error::Shape(format!(
                "multi-index of length {} for a {}-dimensional grid",
                alpha.len(),
                self.spec.dim
            )));
        }
        let order: usize = alpha.iter().sum();
        if order > cap {
            return Err(Error::DerivativeOrder { order, cap });
        }
        let mut a = [0usize; MAX_DIM];
        a[..alpha.len()].copy_from_slice(alpha);
        Ok(self.derivative_unchecked(&a))
    }

    pub(crate) fn derivative_unchecked(&self, alpha: &[usize; MAX_DIM]) -> SpectralField {
        if alpha.iter().all(|&a| a == 0) {
            return self.clone();
        }
        let mult = derivative_multiplier(&self.spec, alpha);
        self.apply_complex_multiplier(&mult)
    }

    pub(crate) fn apply_complex_multiplier(&self, mult: &[Complex64]) -> SpectralField {
        let total = self.spec.total();
        let mut coeffs = self.coeffs.clone();
        par::for_each_chunk_mut(&mut coeffs, total, |_, block| {
            for (c, m) in block.iter_mut().zip(mult) {
                *c *= m;
            }
        });
        SpectralField {
            coeffs,
            ..*self.shallow()
        }
    }

    /// Multiplies each slot by the real factor `mult[slot]`.
    pub fn apply_real_multiplier(&self, mult: &[f64]) -> SpectralField {
        let total = self.spec.total();
        let mut coeffs = self.coeffs.clone();
        par::for_each_chunk_mut(&mut coeffs, total, |_, block| {
            for (c, m) in block.iter_mut().zip(mult) {
                *c *= m;
            }
        });
        SpectralField {
            coeffs,
            ..*self.shallow()
        }
    }

    /// Spectral interpolation onto another grid of the same box: modes below
    /// both Nyquist limits are copied, everything else (Nyquist included) is dropped.
    pub fn resampled(&self, target: &GridSpec) -> Result<SpectralField> {
        if target.dim != self.spec.dim || target.length != self.spec.length {
            return Err(Error::Shape("resampling needs the same box".into()));
        }
        let keep = (self.spec.points.min(target.points) / 2) as i64;
        let (src_total, dst_total) = (self.spec.total(), target.total());
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.components * dst_total];
        for q in 0..src_total {
            let k = self.spec.coords(q);
            let mut dst = [0usize; MAX_DIM];
            let mut inside = true;
            for a in 0..self.spec.dim {
                let s = self.spec.signed_index(k[a]);
                if s.abs() >= keep {
                    inside = false;
                    break;
                }
                dst[a] = s.rem_euclid(target.points as i64) as usize;
            }
            if !inside {
                continue;
            }
            let d = target.flat(&dst[..self.spec.dim]);
            for c in 0..self.components {
                coeffs[c * dst_total + d] = self.coeffs[c * src_total + q];
            }
        }
        SpectralField::from_coeffs(*target, self.components, coeffs, self.time)
    }

    fn shallow(&self) -> Box<SpectralField> {
        Box::new(SpectralField {
            spec: self.spec,
            components: self.components,
            coeffs: Vec::new(),
            time: self.time,
        })
    }

    /// Zeroes every slot whose mode number exceeds `fraction * N / 2` on any axis.
    pub fn dealias(&self, fraction: f64) -> SpectralField {
        let mut out = self.clone();
        out.dealias_in_place(fraction);
        out
    }

    pub fn dealias_in_place(&mut self, fraction: f64) {
        let mask = dealias_mask(&self.spec, fraction);
        let total = self.spec.total();
        for block in self.coeffs.chunks_mut(total) {
            for (c, &keep) in block.iter_mut().zip(&mask) {
                if !keep {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    /// `max |c(xi) - conj(c(-xi))|` over all slots and components.
    pub fn hermitian_defect(&self) -> f64 {
        let total = self.spec.total();
        let n = self.spec.points;
        let mut worst: f64 = 0.0;
        for c in 0..self.components {
            let block = self.component(c);
            for p in 0..total {
                let k = self.spec.coords(p);
                let mut neg = [0usize; MAX_DIM];
                for a in 0..self.spec.dim {
                    neg[a] = (n - k[a]) % n;
                }
                let q = self.spec.flat(&neg);
                worst = worst.max((block[p] - block[q].conj()).norm());
            }
        }
        worst
    }

    /// `L^n * sum |c|^2`, the spectral side of Parseval's identity.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.spec.volume()
    }

    pub fn add_scaled(&self, a: f64, other: &SpectralField) -> Result<SpectralField> {
        if self.spec != other.spec || self.components != other.components {
            return Err(Error::Shape("spectral fields differ in shape".into()));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x + y * a)
            .collect();
        Ok(SpectralField {
            coeffs,
            ..*self.shallow()
        })
    }
}

/// `(i xi)^alpha` for every spectral slot of `spec`.
pub(crate) fn derivative_multiplier(spec: &GridSpec, alpha: &[usize; MAX_DIM]) -> Vec<Complex64> {
    let n = spec.points;
    let axis_factors: Vec<Vec<Complex64>> = (0..spec.dim)
        .map(|a| {
            (0..n)
                .map(|j| {
                    let order = alpha[a];
                    if order == 0 {
                        Complex64::new(1.0, 0.0)
                    } else if order % 2 == 1 && spec.is_nyquist(j) {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, spec.wavenumber(j)).powu(order as u32)
                    }
                })
                .collect()
        })
        .collect();
    (0..spec.total())
        .map(|p| {
            let c = spec.coords(p);
            (0..spec.dim).fold(Complex64::new(1.0, 0.0), |acc, a| acc * axis_factors[a][c[a]])
        })
        .collect()
}

pub(crate) fn dealias_mask(spec: &GridSpec, fraction: f64) -> Vec<bool> {
    let cutoff = spec.dealias_cutoff(fraction);
    (0..spec.total())
        .map(|p| {
            let c = spec.coords(p);
            (0..spec.dim).all(|a| spec.signed_index(c[a]).abs() <= cutoff)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Trajectories

/// Evenly spaced sample times `0, T/M, ..., T`.
pub fn uniform_times(t_final: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|i| t_final * i as f64 / steps as f64)
        .collect()
}

/// Fields sampled on a shared strictly increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    fields: Vec<Field>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, mut fields: Vec<Field>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(Error::TimeGrid(format!(
                "{} times for {} fields",
                times.len(),
                fields.len()
            )));
        }
        if times[0] < 0.0 || !times.iter().all(|t| t.is_finite()) {
            return Err(Error::TimeGrid("times must be finite and >= 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::TimeGrid("times must be strictly increasing".into()));
        }
        let first = &fields[0];
        if fields.iter().any(|f| !f.same_shape(first)) {
            return Err(Error::Shape("trajectory fields must share grid and components".into()));
        }
        for (f, &t) in fields.iter_mut().zip(&times) {
            f.set_time(t);
        }
        Ok(Self { times, fields })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn into_fields(self) -> Vec<Field> {
        self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn spec(&self) -> &GridSpec {
        self.fields[0].spec()
    }

    pub fn components(&self) -> usize {
        self.fields[0].components()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn last(&self) -> &Field {
        self.fields.last().expect("non-empty trajectory")
    }

    /// Step size when the grid is uniform (relative tolerance 1e-9).
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = (self.final_time() - self.times[0]) / (self.times.len() - 1) as f64;
        let ok = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(f64::MIN_POSITIVE));
        ok.then_some(dt)
    }

    pub fn same_grid(&self, other: &Trajectory) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
            && self.fields[0].same_shape(&other.fields[0])
    }

    /// Sample-wise `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &Trajectory) -> Result<Trajectory> {
        if !self.same_grid(other) {
            return Err(Error::TimeGrid("trajectories on different grids".into()));
        }
        let fields = self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(x, y)| x.add_scaled(a, y))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(self.times.clone(), fields)
    }

    pub fn sub(&self, other: &Trajectory) -> Result<Trajectory> {
        self.add_scaled(-1.0, other)
    }

    pub fn scaled(&self, a: f64) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            fields: self.fields.iter().map(|f| f.scaled(a)).collect(),
        }
    }

    /// `sup_t sup_x |u(x,t)|`.
    pub fn sup_norm(&self) -> f64 {
        self.fields.iter().map(Field::sup_norm).fold(0.0, f64::max)
    }

    /// Builds a trajectory by evaluating `f(i, t_i)` at every sample in parallel.
    pub fn try_from_fn<F>(times: Vec<f64>, f: F) -> Result<Self>
    where
        F: Fn(usize, f64) -> Result<Field> + Sync + Send,
    {
        let fields = par::try_map_collect(times.len(), |i| f(i, times[i]))?;
        Trajectory::new(times, fields)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec1(n: usize) -> GridSpec {
        GridSpec::new(1, 2.0 * PI * 8.0, n).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(0, 1.0, 16).is_err());
        assert!(GridSpec::new(4, 1.0, 16).is_err());
        assert!(GridSpec::new(1, -1.0, 16).is_err());
        assert!(GridSpec::new(1, 1.0, 4).is_err());
        assert!(GridSpec::new(1, 1.0, 24).is_err());
        assert!(GridSpec::with_budget(3, 1.0, 256, 1 << 20).is_err());
    }

    #[test]
    fn signed_indices_follow_fft_order() {
        let s = spec1(8);
        let idx: Vec<i64> = (0..8).map(|j| s.signed_index(j)).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert!(s.is_nyquist(4));
    }

    #[test]
    fn constant_field_has_dc_only_spectrum() {
        let s = GridSpec::new(2, 5.0, 16).unwrap();
        let f = Field::constant(s, &[2.5], 0.0);
        let sf = f.to_spectral().unwrap();
        assert!((sf.component(0)[0] - Complex64::new(2.5, 0.0)).norm() < 1e-14);
        let rest = sf.component(0)[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(rest < 1e-14);
    }

    #[test]
    fn cosine_has_two_conjugate_coefficients() {
        let s = spec1(32);
        let l = s.length();
        let f = Field::from_fn(s, 1, 0.0, |x, o| o[0] = (2.0 * PI * x[0] / l).cos()).unwrap();
        let sf = f.to_spectral().unwrap();
        let nonzero: Vec<usize> = (0..32).filter(|&j| sf.component(0)[j].norm() > 1e-12).collect();
        assert_eq!(nonzero, vec![1, 31]);
        assert!((sf.component(0)[1] - sf.component(0)[31].conj()).norm() < 1e-15);
        assert!((sf.component(0)[1].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn non_finite_input_is_located() {
        let s = spec1(8);
        let mut data = vec![0.0; 16];
        data[11] = f64::NAN;
        let err = Field::new(s, 2, data, 0.0).unwrap_err();
        match err {
            Error::NonFinite {
                point, component, ..
            } => {
                assert_eq!((point, component), (3, 1));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn derivative_of_cosine() {
        let s = spec1(64);
        let q = s.fundamental() * 3.0;
        let f = Field::from_fn(s, 1, 0.0, |x, o| o[0] = (q * x[0]).cos()).unwrap();
        let d = f.to_spectral().unwrap().derivative(&[1], 2).unwrap().to_field();
        for p in 0..64 {
            let x = s.position(p)[0];
            assert!((d.data()[p] + q * (q * x).sin()).abs() < 1e-12);
        }
        let same = f.to_spectral().unwrap().derivative(&[0], 2).unwrap().to_field();
        assert!(same.sub(&f).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn derivative_cap_is_enforced() {
        let s = spec1(16);
        let f = Field::zeros(s, 1, 0.0).to_spectral().unwrap();
        assert!(matches!(
            f.derivative(&[5], 4),
            Err(Error::DerivativeOrder { order: 5, cap: 4 })
        ));
    }

    #[test]
    fn polyharmonic_multiplier_on_a_mode() {
        // Delta^m e^{i xi x} = (-1)^m |xi|^{2m} e^{i xi x}
        let s = GridSpec::new(2, 10.0, 16).unwrap();
        let (kx, ky) = (2usize, 3usize);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); s.total()];
        coeffs[s.flat(&[kx, ky])] = Complex64::new(1.0, 0.0);
        let sf = SpectralField::from_coeffs(s, 1, coeffs, 0.0).unwrap();
        let xi2 = s.wavenumber(kx).powi(2) + s.wavenumber(ky).powi(2);
        for m in 1..=3usize {
            // Delta^m as a sum of pure second derivatives, multinomially expanded.
            let mut acc = SpectralField::zeros(s, 1, 0.0);
            for i in 0..=m {
                let binom = (0..i).fold(1.0, |b, j| b * (m - j) as f64 / (j + 1) as f64);
                let term = sf.derivative(&[2 * i, 2 * (m - i)], 2 * m).unwrap();
                acc = acc.add_scaled(binom, &term).unwrap();
            }
            let expected = (-1.0f64).powi(m as i32) * xi2.powi(m as i32);
            let got = acc.component(0)[s.flat(&[kx, ky])];
            assert!((got.re - expected).abs() < 1e-12 * expected.abs());
            assert!(got.im.abs() < 1e-12 * expected.abs());
        }
    }

    #[test]
    fn dealias_removes_top_third() {
        let s = spec1(32);
        let mut sf = SpectralField::zeros(s, 1, 0.0);
        sf.coeffs_mut().iter_mut().for_each(|c| *c = Complex64::new(1.0, 0.0));
        let d = sf.dealias(DEFAULT_DEALIAS_FRACTION);
        let kept: Vec<i64> = (0..32)
            .filter(|&j| d.component(0)[j].norm() > 0.0)
            .map(|j| s.signed_index(j))
            .collect();
        assert_eq!(kept.len(), 21);
        assert!(kept.iter().all(|k| k.abs() <= 10));
    }

    #[test]
    fn bandlimited_field_survives_dealiasing() {
        let s = spec1(32);
        let k = s.fundamental();
        let f = Field::from_fn(s, 1, 0.0, |x, o| o[0] = (3.0 * k * x[0]).sin() + 0.2).unwrap();
        let sf = f.to_spectral().unwrap();
        let d = sf.dealias(DEFAULT_DEALIAS_FRACTION);
        let diff = d.add_scaled(-1.0, &sf).unwrap();
        assert!(diff.coeffs().iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn trajectory_validation() {
        let s = spec1(8);
        let f = Field::zeros(s, 1, 0.0);
        assert!(Trajectory::new(vec![0.0, 0.0], vec![f.clone(), f.clone()]).is_err());
        assert!(Trajectory::new(vec![0.0], vec![f.clone(), f.clone()]).is_err());
        let g = Field::zeros(s, 2, 0.0);
        assert!(Trajectory::new(vec![0.0, 1.0], vec![f.clone(), g]).is_err());
        let t = Trajectory::new(uniform_times(1.0, 4), vec![f; 5]).unwrap();
        assert_eq!(t.uniform_step(), Some(0.25));
        assert_eq!(t.fields()[2].time(), 0.5);
    }

    #[test]
    fn shift_is_periodic_translation() {
        let s = spec1(16);
        let f = Field::from_fn(s, 1, 0.0, |x, o| o[0] = x[0]).unwrap();
        let g = f.shifted(&[3]);
        assert_eq!(g.data()[3], f.data()[0]);
        assert_eq!(g.data()[0], f.data()[13]);
    }
}
