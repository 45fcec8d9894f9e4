//! The divergence-form nonlinearity `F~(u) = sum_k div^k F_k(u)` of the
//! polyharmonic map heat flow, the energy `E_m`, and the `m = 1` trace form.
//!
//! The factor differentiated in every `F_k` is the matrix field
//! `P(x) = dPi~(u(x))`, row-major `P[a][b] = d Pi~_a / d y_b`, which acts on the
//! target index of `grad^j u`. Spatial indices of the shorter factor contract
//! against the leading indices of the longer one; the remaining indices are
//! left free for `div^k`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid::{
    dealias_mask, derivative_multiplier, Field, GridSpec, SpectralField, DEFAULT_DEALIAS_FRACTION,
    MAX_DIM,
};
use crate::par;
use crate::target::TargetManifold;

/// Spectral energy fraction above which a composed field counts as under-resolved.
pub const TAIL_WARNING: f64 = 1e-6;

/// Tensor-valued field with `rank` spatial indices and `components` target
/// components per index tuple.
///
/// Slots enumerate ordered index tuples `(i_1, ..., i_rank)` with `i_1` most
/// significant; data are slot-major, then component-major, then point.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    spec: GridSpec,
    rank: usize,
    components: usize,
    data: Vec<f64>,
}

pub(crate) fn slot_count(n: usize, rank: usize) -> usize {
    n.pow(rank as u32)
}

/// Index tuple of `slot`.
pub fn slot_indices(n: usize, rank: usize, slot: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    let mut rem = slot;
    for r in (0..rank).rev() {
        idx[r] = rem % n;
        rem /= n;
    }
    idx
}

pub fn slot_of(n: usize, indices: &[usize]) -> usize {
    indices.iter().fold(0, |acc, &i| acc * n + i)
}

/// Multi-index (derivative counts per axis) of `slot`.
pub(crate) fn slot_alpha(n: usize, rank: usize, slot: usize) -> [usize; MAX_DIM] {
    let mut a = [0usize; MAX_DIM];
    for i in slot_indices(n, rank, slot) {
        a[i] += 1;
    }
    a
}

impl TensorField {
    pub fn zeros(spec: GridSpec, rank: usize, components: usize) -> Self {
        let len = slot_count(spec.dim(), rank) * components * spec.total();
        Self {
            spec,
            rank,
            components,
            data: vec![0.0; len],
        }
    }

    /// A rank-0 tensor holding `f`.
    pub fn from_field(f: &Field) -> Self {
        Self {
            spec: *f.spec(),
            rank: 0,
            components: f.components(),
            data: f.data().to_vec(),
        }
    }

    /// Flattens slots and components into the components of a field.
    pub fn as_field(&self, time: f64) -> Field {
        Field::from_raw(self.spec, self.slots() * self.components, self.data.clone(), time)
    }

    fn from_flat_field(f: Field, rank: usize, components: usize) -> Self {
        let spec = *f.spec();
        Self {
            spec,
            rank,
            components,
            data: f.into_data(),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn slots(&self) -> usize {
        slot_count(self.spec.dim(), self.rank)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, slot: usize, component: usize) -> &[f64] {
        let t = self.spec.total();
        let off = (slot * self.components + component) * t;
        &self.data[off..off + t]
    }

    /// Full tensor norm `|T(x)|` at every point.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        let t = self.spec.total();
        let mut acc = vec![0.0; t];
        for block in self.data.chunks(t) {
            for (a, v) in acc.iter_mut().zip(block) {
                *a += v * v;
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norm().into_iter().fold(0.0, f64::max)
    }

    /// Rank-0 tensors become fields.
    pub fn to_field(&self, time: f64) -> Result<Field> {
        if self.rank != 0 {
            return Err(Error::Shape(format!(
                "rank-{} tensor is not a field",
                self.rank
            )));
        }
        Ok(Field::from_raw(self.spec, self.components, self.data.clone(), time))
    }

    pub fn scaled(&self, a: f64) -> TensorField {
        TensorField {
            data: self.data.iter().map(|v| a * v).collect(),
            ..self.clone()
        }
    }

    pub fn add_scaled(&self, a: f64, other: &TensorField) -> Result<TensorField> {
        if self.spec != other.spec || self.rank != other.rank || self.components != other.components
        {
            return Err(Error::Shape("tensor fields differ in shape".into()));
        }
        Ok(TensorField {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| x + a * y)
                .collect(),
            ..self.clone()
        })
    }

    /// 2/3-rule dealiasing of every slot and component.
    pub fn dealiased(&self) -> TensorField {
        let f = self.as_field(0.0).to_spectral_unchecked();
        let d = f.dealias(DEFAULT_DEALIAS_FRACTION).to_field();
        Self::from_flat_field(d, self.rank, self.components)
    }

    /// Contracts the first index with a derivative: `sum_i d_i T_{i, ...}`.
    pub fn div_first(&self) -> Result<TensorField> {
        if self.rank == 0 {
            return Err(Error::Shape("divergence of a rank-0 tensor".into()));
        }
        let n = self.spec.dim();
        let total = self.spec.total();
        let hat = self.as_field(0.0).to_spectral_unchecked();
        let out_rank = self.rank - 1;
        let out_slots = slot_count(n, out_rank);
        let c = self.components;
        let mults: Vec<Vec<Complex64>> = (0..n)
            .map(|i| {
                let mut a = [0usize; MAX_DIM];
                a[i] = 1;
                derivative_multiplier(&self.spec, &a)
            })
            .collect();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); out_slots * c * total];
        par::for_each_chunk_mut(&mut coeffs, total, |block_idx, block| {
            let (r, comp) = (block_idx / c, block_idx % c);
            for (i, mult) in mults.iter().enumerate() {
                let src_slot = i * out_slots + r;
                let src = &hat.coeffs()[(src_slot * c + comp) * total..][..total];
                for ((o, s), k) in block.iter_mut().zip(src).zip(mult) {
                    *o += s * k;
                }
            }
        });
        let sf = SpectralField::from_coeffs(self.spec, out_slots * c, coeffs, 0.0)?;
        Ok(Self::from_flat_field(sf.to_field(), out_rank, c))
    }

    /// `div^rank T = sum over slots of d^{alpha(slot)} T_slot`, in Fourier space.
    pub fn full_divergence_spectral(&self) -> SpectralField {
        let n = self.spec.dim();
        let total = self.spec.total();
        let c = self.components;
        let hat = self.as_field(0.0).to_spectral_unchecked();
        let mut groups: BTreeMap<[usize; MAX_DIM], Vec<usize>> = BTreeMap::new();
        for s in 0..self.slots() {
            groups.entry(slot_alpha(n, self.rank, s)).or_default().push(s);
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); c * total];
        for (alpha, slots) in &groups {
            let mult = derivative_multiplier(&self.spec, alpha);
            par::for_each_chunk_mut(&mut coeffs, total, |comp, block| {
                for &s in slots {
                    let src = &hat.coeffs()[(s * c + comp) * total..][..total];
                    for ((o, v), k) in block.iter_mut().zip(src).zip(&mult) {
                        *o += v * k;
                    }
                }
            });
        }
        SpectralField::from_coeffs(self.spec, c, coeffs, 0.0).expect("shape")
    }
}

/// `grad^k f` as a rank-`k` tensor, each distinct multi-index transformed once.
pub fn gradient_tensor(f: &SpectralField, k: usize) -> TensorField {
    let spec = *f.spec();
    let n = spec.dim();
    let c = f.components();
    let total = spec.total();
    let slots = slot_count(n, k);
    let mut groups: BTreeMap<[usize; MAX_DIM], Vec<usize>> = BTreeMap::new();
    for s in 0..slots {
        groups.entry(slot_alpha(n, k, s)).or_default().push(s);
    }
    let keys: Vec<[usize; MAX_DIM]> = groups.keys().cloned().collect();
    let fields = par::map_collect(keys.len(), |i| f.derivative_unchecked(&keys[i]).to_field());
    let mut data = vec![0.0; slots * c * total];
    for (key, field) in keys.iter().zip(fields) {
        for &s in &groups[key] {
            data[s * c * total..(s + 1) * c * total].copy_from_slice(field.data());
        }
    }
    TensorField {
        spec,
        rank: k,
        components: c,
        data,
    }
}

/// Pointwise `sum_{b} A[i_1..i_j, rest_a][a][b] * B[i_1..i_j, rest_b][b]`, where the
/// leading `contracted` indices of `a` (a matrix field with `l*l` components)
/// pair with the leading indices of `b` (a vector field with `l` components).
/// Free indices of `a` come first in the result.
pub fn matrix_product(a: &TensorField, b: &TensorField, contracted: usize) -> Result<TensorField> {
    let l = b.components;
    if a.components != l * l {
        return Err(Error::Shape(format!(
            "matrix factor has {} components, expected {}",
            a.components,
            l * l
        )));
    }
    if contracted > a.rank || contracted > b.rank || a.spec != b.spec {
        return Err(Error::Shape("incompatible tensor product".into()));
    }
    let n = a.spec.dim();
    let total = a.spec.total();
    let (fa, fb) = (a.rank - contracted, b.rank - contracted);
    let out_rank = fa + fb;
    let out_slots = slot_count(n, out_rank);
    let csum = slot_count(n, contracted);
    let mut data = vec![0.0; out_slots * l * total];
    par::for_each_chunk_mut(&mut data, total, |block_idx, block| {
        let (slot, alpha) = (block_idx / l, block_idx % l);
        let idx = slot_indices(n, out_rank, slot);
        let (ia, ib) = idx.split_at(fa);
        for cs in 0..csum {
            let ci = slot_indices(n, contracted, cs);
            let a_slot = slot_of(n, &[&ci[..], ia].concat());
            let b_slot = slot_of(n, &[&ci[..], ib].concat());
            for beta in 0..l {
                let av = a.get(a_slot, alpha * l + beta);
                let bv = b.get(b_slot, beta);
                for ((o, x), y) in block.iter_mut().zip(av).zip(bv) {
                    *o += x * y;
                }
            }
        }
    });
    Ok(TensorField {
        spec: a.spec,
        rank: out_rank,
        components: l,
        data,
    })
}

/// Energy fraction of `f` outside the dealiasing window.
pub fn spectral_tail_fraction(f: &SpectralField, fraction: f64) -> f64 {
    let mask = dealias_mask(f.spec(), fraction);
    let total = f.spec().total();
    let (mut tail, mut all) = (0.0, 0.0);
    for (i, c) in f.coeffs().iter().enumerate() {
        let e = c.norm_sqr();
        all += e;
        if !mask[i % total] {
            tail += e;
        }
    }
    if all > 0.0 {
        tail / all
    } else {
        0.0
    }
}

fn compose_dealiased(
    u: &Field,
    out_components: usize,
    f: impl Fn(&[f64], &mut [f64]) + Sync + Send,
) -> SpectralField {
    let composed = u.map_points(out_components, f).to_spectral_unchecked();
    let tail = spectral_tail_fraction(&composed, DEFAULT_DEALIAS_FRACTION);
    if tail > TAIL_WARNING {
        log::warn!("composed field under-resolved: spectral tail fraction {tail:.3e}");
    }
    composed.dealias(DEFAULT_DEALIAS_FRACTION)
}

fn check_inputs(u: &Field, tm: &TargetManifold, m: usize) -> Result<()> {
    if !(1..=crate::kernel::MAX_ORDER).contains(&m) {
        return Err(invalid("m", format!("{m} outside 1..=3")));
    }
    if u.components() != tm.l {
        return Err(Error::Shape(format!(
            "field has {} components, target lives in R^{}",
            u.components(),
            tm.l
        )));
    }
    Ok(())
}

/// `grad^j (Pi~(u))` for `j = 1..=up_to`, by spectral differentiation of the
/// dealiased composition.
pub fn composite_derivatives(
    u: &Field,
    tm: &TargetManifold,
    up_to: usize,
    m: usize,
) -> Result<Vec<TensorField>> {
    check_inputs(u, tm, m)?;
    if up_to > 2 * m {
        return Err(Error::DerivativeOrder {
            order: up_to,
            cap: 2 * m,
        });
    }
    u.check_finite()?;
    let p = compose_dealiased(u, tm.l, |y, o| tm.project_into(y, o));
    Ok(par::map_collect(up_to, |j| gradient_tensor(&p, j + 1)))
}

/// Derivatives shared by every `F_k`: `grad^j u` and `grad^j P` for `j = 0..=m`.
pub struct Ingredients {
    m: usize,
    du: Vec<TensorField>,
    dp: Vec<TensorField>,
}

impl Ingredients {
    pub fn new(u: &Field, tm: &TargetManifold, m: usize) -> Result<Self> {
        check_inputs(u, tm, m)?;
        u.check_finite()?;
        let uhat = u.to_spectral_unchecked();
        let l = tm.l;
        let phat = compose_dealiased(u, l * l, |y, o| tm.differential_into(y, o));
        let du = par::map_collect(m + 1, |j| gradient_tensor(&uhat, j));
        let dp = par::map_collect(m + 1, |j| gradient_tensor(&phat, j));
        Ok(Self { m, du, dp })
    }

    /// `F_k` for `0 <= k <= m - 1`.
    pub fn f_k(&self, k: usize) -> Result<TensorField> {
        let m = self.m;
        if k >= m {
            return Err(invalid("k", format!("{k} outside 0..={}", m - 1)));
        }
        let sign = |e: usize| if e.is_multiple_of(2) { 1.0 } else { -1.0 };
        if k + 2 <= m {
            let prod = matrix_product(&self.dp[m - k], &self.du[m], m - k)?.dealiased();
            return Ok(prod.scaled(sign(k + 1) * binomial(m, k)));
        }
        let mut acc = matrix_product(&self.dp[1], &self.du[m], 1)?
            .dealiased()
            .scaled(m as f64);
        for j in 0..m.saturating_sub(1) {
            let outer = matrix_product(&self.dp[m - j - 1], &self.du[j + 1], 0)?.dealiased();
            acc = acc.add_scaled(binomial(m - 1, j), &outer.div_first()?)?;
        }
        Ok(acc.scaled(sign(m)))
    }

    /// `F~(u)` in Fourier space, dealiased.
    pub fn f_tilde_spectral(&self) -> Result<SpectralField> {
        let parts = par::try_map_collect(self.m, |k| {
            self.f_k(k).map(|f| f.full_divergence_spectral())
        })?;
        let mut acc = parts[0].clone();
        for p in &parts[1..] {
            acc = acc.add_scaled(1.0, p)?;
        }
        acc.dealias_in_place(DEFAULT_DEALIAS_FRACTION);
        Ok(acc)
    }

    pub fn grad_u(&self, j: usize) -> &TensorField {
        &self.du[j]
    }
}

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

pub fn f_k(u: &Field, k: usize, tm: &TargetManifold, m: usize) -> Result<TensorField> {
    Ingredients::new(u, tm, m)?.f_k(k)
}

/// `F~(u) = sum_k div^k F_k(u)`.
pub fn f_tilde(u: &Field, tm: &TargetManifold, m: usize) -> Result<Field> {
    let s = Ingredients::new(u, tm, m)?.f_tilde_spectral()?;
    Ok(s.with_time(u.time()).to_field())
}

pub(crate) fn f_tilde_spectral(u: &Field, tm: &TargetManifold, m: usize) -> Result<SpectralField> {
    Ok(Ingredients::new(u, tm, m)?
        .f_tilde_spectral()?
        .with_time(u.time()))
}

/// `E_m(u) = 1/2 sum |grad^m u|^2 h^n` with the full gradient tensor.
pub fn energy_m(u: &Field, m: usize) -> Result<f64> {
    let g = gradient_tensor(&u.to_spectral()?, m);
    Ok(0.5 * g.data.iter().map(|v| v * v).sum::<f64>() * u.spec().cell_volume())
}

/// `|grad u|^2 Pi~(u)`, the `m = 1` trace form `sum_i A(Pi~(u))(d_i u, d_i u)`, dealiased.
pub fn f_gastel_m1(u: &Field, tm: &TargetManifold, m: usize) -> Result<Field> {
    if m != 1 {
        return Err(invalid("m", format!("trace form implemented for m = 1 only, got {m}")));
    }
    check_inputs(u, tm, m)?;
    let grad = gradient_tensor(&u.to_spectral()?, 1);
    let g2: Vec<f64> = grad.pointwise_norm().into_iter().map(|v| v * v).collect();
    let pu = u.map_points(tm.l, |y, o| tm.project_into(y, o));
    let total = u.spec().total();
    let mut data = pu.into_data();
    for (i, v) in data.iter_mut().enumerate() {
        *v *= g2[i % total];
    }
    let f = Field::from_raw(*u.spec(), tm.l, data, u.time());
    Ok(f
        .to_spectral_unchecked()
        .dealias(DEFAULT_DEALIAS_FRACTION)
        .to_field())
}
