//! Discrete estimators for the BMO seminorm, the parabolic `X_T` and `Y^k_T`
//! norms and the Carleson functional.
//!
//! Balls `B_r(x)` are periodic boxes of `2w + 1` points per axis with
//! `w = floor(r/h - 1/2)`, whose effective radius is `r_eff = (2w + 1) h / 2`.
//! Suprema run over a centre lattice (every `stride`-th point) and are then
//! refined around the best candidates by scanning their full neighbourhood.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, GridSpec, SpectralField, Trajectory};
use crate::nonlinearity::gradient_tensor;
use crate::par;
use crate::semigroup::apply_g_spectral;

pub const DEFAULT_CENTER_STRIDE: usize = 4;
/// Candidates whose neighbourhood is rescanned after the coarse pass.
const REFINE_CANDIDATES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderSet {
    spec: GridSpec,
    cap: f64,
    stride: usize,
    widths: Vec<usize>,
}

impl CylinderSet {
    /// Dyadic radii `L / 2^j` in `(0, cap]`, down to the smallest box with
    /// more than one point per axis.
    pub fn new(spec: &GridSpec, cap: f64, stride: usize) -> Result<Self> {
        let quarter = spec.length() / 4.0;
        if !(cap > 0.0 && cap <= quarter * (1.0 + 1e-12)) {
            return Err(invalid(
                "R",
                format!("radius cap {cap} must lie in (0, L/4 = {quarter}]"),
            ));
        }
        if stride == 0 {
            return Err(invalid("center_stride", "must be >= 1"));
        }
        let h = spec.spacing();
        let mut widths = Vec::new();
        let mut r = spec.length() / 4.0;
        while r >= 1.5 * h {
            if r <= cap * (1.0 + 1e-12) {
                widths.push((r / h - 0.5).floor() as usize);
            }
            r /= 2.0;
        }
        if widths.is_empty() {
            return Err(invalid(
                "R",
                format!("radius cap {cap} admits no dyadic radius >= 1.5 h = {}", 1.5 * h),
            ));
        }
        Ok(Self {
            spec: *spec,
            cap,
            stride,
            widths,
        })
    }

    pub fn with_default_stride(spec: &GridSpec, cap: f64) -> Result<Self> {
        Self::new(spec, cap, DEFAULT_CENTER_STRIDE)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Box half-widths in points, largest first.
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Effective radii `(2w + 1) h / 2`, largest first.
    pub fn radii(&self) -> Vec<f64> {
        self.widths.iter().map(|&w| self.effective_radius(w)).collect()
    }

    pub fn effective_radius(&self, w: usize) -> f64 {
        (2 * w + 1) as f64 * self.spec.spacing() / 2.0
    }

    pub fn centers(&self) -> Vec<usize> {
        lattice(&self.spec, self.stride)
    }

    fn require_spec(&self, spec: &GridSpec) -> Result<()> {
        if &self.spec != spec {
            return Err(Error::Shape("cylinder set built for another grid".into()));
        }
        Ok(())
    }
}

fn lattice(spec: &GridSpec, stride: usize) -> Vec<usize> {
    (0..spec.total())
        .filter(|&p| spec.coords(p)[..spec.dim()].iter().all(|c| c % stride == 0))
        .collect()
}

/// Points of the periodic box of half-width `w` around `p`.
pub fn box_points(spec: &GridSpec, p: usize, w: usize) -> Vec<usize> {
    let n = spec.dim();
    let np = spec.points() as i64;
    let c = spec.coords(p);
    let side = 2 * w + 1;
    let mut out = Vec::with_capacity(side.pow(n as u32));
    let mut off = [0usize; 3];
    loop {
        let mut q = [0usize; 3];
        for a in 0..n {
            q[a] = (c[a] as i64 + off[a] as i64 - w as i64).rem_euclid(np) as usize;
        }
        out.push(spec.flat(&q));
        let mut a = 0;
        loop {
            if a == n {
                return out;
            }
            off[a] += 1;
            if off[a] < side {
                break;
            }
            off[a] = 0;
            a += 1;
        }
    }
}

/// Periodic box sums of half-width `w` at every point, by separable sliding sums.
pub fn box_sums(spec: &GridSpec, data: &[f64], w: usize) -> Vec<f64> {
    let n = spec.points();
    let strides = spec.strides();
    let mut cur = data.to_vec();
    let mut line = vec![0.0; n];
    for axis in 0..spec.dim() {
        let stride = strides[axis];
        let mut next = vec![0.0; cur.len()];
        let outer = cur.len() / (n * stride);
        for o in 0..outer {
            for i in 0..stride {
                let base = o * n * stride + i;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = cur[base + j * stride];
                }
                let mut s: f64 = (0..=2 * w).map(|d| line[(n + d - w) % n]).sum();
                for j in 0..n {
                    next[base + j * stride] = s;
                    s += line[(j + w + 1) % n] - line[(n + j - w) % n];
                }
            }
        }
        cur = next;
    }
    cur
}

/// Maximum of `eval` over the centre lattice, refined around the best
/// candidates by scanning every point within `stride - 1` of them.
fn refined_sup<F>(spec: &GridSpec, stride: usize, eval: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let centers = lattice(spec, stride);
    let vals = par::map_collect(centers.len(), |i| eval(centers[i]));
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut best = vals.iter().cloned().fold(0.0, f64::max);
    if stride > 1 {
        let reach = stride - 1;
        for &i in order.iter().take(REFINE_CANDIDATES) {
            let near = box_points(spec, centers[i], reach);
            let v = par::map_collect(near.len(), |j| eval(near[j]));
            best = v.into_iter().fold(best, f64::max);
        }
    }
    best
}

fn mean_oscillation(f: &Field, p: usize, w: usize, r_eff: f64) -> f64 {
    let spec = f.spec();
    let pts = box_points(spec, p, w);
    let l = f.components();
    let count = pts.len() as f64;
    let mean: Vec<f64> = (0..l)
        .map(|c| pts.iter().map(|&q| f.component(c)[q]).sum::<f64>() / count)
        .collect();
    let dev: f64 = pts
        .iter()
        .map(|&q| {
            (0..l)
                .map(|c| (f.component(c)[q] - mean[c]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    dev * spec.cell_volume() / r_eff.powi(spec.dim() as i32)
}

/// `sup_{x, r <= R} r^{-n} int_{B_r(x)} |f - f_{x,r}|` over the cylinder set.
pub fn bmo_seminorm(f: &Field, cyl: &CylinderSet) -> Result<f64> {
    cyl.require_spec(f.spec())?;
    f.check_finite()?;
    let mut best: f64 = 0.0;
    for &w in cyl.widths() {
        let r = cyl.effective_radius(w);
        best = best.max(refined_sup(f.spec(), cyl.stride(), |p| {
            mean_oscillation(f, p, w, r)
        }));
    }
    Ok(best)
}

/// Exhaustive BMO scan: every grid point, every box width up to the cap.
pub fn bmo_brute_force(f: &Field, cap: f64) -> Result<f64> {
    let spec = f.spec();
    let h = spec.spacing();
    let wmax = (cap / h - 0.5).floor() as usize;
    let mut best: f64 = 0.0;
    for w in 1..=wmax {
        let r = (2 * w + 1) as f64 * h / 2.0;
        for p in 0..spec.total() {
            best = best.max(mean_oscillation(f, p, w, r));
        }
    }
    Ok(best)
}

/// Trapezoid weights for `int_{t_0}^{tau}` on `times`, with a partial last interval.
pub fn trapezoid_weights(times: &[f64], tau: f64) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for i in 0..times.len().saturating_sub(1) {
        let (a, b) = (times[i], times[i + 1]);
        if tau <= a {
            break;
        }
        if tau >= b {
            w[i] += (b - a) / 2.0;
            w[i + 1] += (b - a) / 2.0;
        } else {
            let theta = (tau - a) / (b - a);
            w[i] += (tau - a) * (1.0 - theta / 2.0);
            w[i + 1] += (tau - a) * theta / 2.0;
        }
    }
    w
}

/// `sup_{x, r} r^{-n} int_0^{r^{2m}} int_{B_r(x)} g dy dt` for sampled `g(t_i, .)`.
pub fn cylinder_sup(
    integrand: &[Vec<f64>],
    times: &[f64],
    cyl: &CylinderSet,
    m: usize,
) -> f64 {
    cylinder_sup_weighted(integrand, times, cyl, m, |_| 1.0)
}

/// [`cylinder_sup`] with an extra factor `weight(r)` per radius.
pub fn cylinder_sup_weighted<W: Fn(f64) -> f64>(
    integrand: &[Vec<f64>],
    times: &[f64],
    cyl: &CylinderSet,
    m: usize,
    weight: W,
) -> f64 {
    let spec = cyl.spec();
    let mut best: f64 = 0.0;
    for &w in cyl.widths() {
        let r = cyl.effective_radius(w);
        let weights = trapezoid_weights(times, r.powi(2 * m as i32));
        let active: Vec<usize> = (0..times.len()).filter(|&i| weights[i] > 0.0).collect();
        let sums = par::map_collect(active.len(), |j| box_sums(spec, &integrand[active[j]], w));
        let mut acc = vec![0.0; spec.total()];
        for (j, s) in sums.iter().enumerate() {
            let wt = weights[active[j]];
            for (a, v) in acc.iter_mut().zip(s) {
                *a += wt * v;
            }
        }
        let scale = weight(r) * spec.cell_volume() / r.powi(spec.dim() as i32);
        best = best.max(refined_sup(spec, cyl.stride(), |p| acc[p] * scale));
    }
    best
}

/// Exhaustive cylinder scan with direct box sums over every centre and width.
pub fn cylinder_brute_force(
    integrand: &[Vec<f64>],
    times: &[f64],
    spec: &GridSpec,
    cap: f64,
    m: usize,
) -> f64 {
    let h = spec.spacing();
    let wmax = (cap / h - 0.5).floor() as usize;
    let mut best: f64 = 0.0;
    for w in 1..=wmax {
        let r = (2 * w + 1) as f64 * h / 2.0;
        let tau = r.powi(2 * m as i32);
        for p in 0..spec.total() {
            let pts = box_points(spec, p, w);
            let at = |i: usize| pts.iter().map(|&q| integrand[i][q]).sum::<f64>();
            let mut integral = 0.0;
            for i in 0..times.len() - 1 {
                let (a, b) = (times[i], times[i + 1]);
                if tau <= a {
                    break;
                }
                let (fa, fb) = (at(i), at(i + 1));
                let end = tau.min(b);
                let fe = fa + (fb - fa) * (end - a) / (b - a);
                integral += 0.5 * (fa + fe) * (end - a);
            }
            best = best.max(integral * spec.cell_volume() / r.powi(spec.dim() as i32));
        }
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// `sup_t ||f||_inf`.
    pub sup: f64,
    /// `sup_{t > 0} t^{k/2m} ||grad^k f||_inf` for `k = 1..=m`.
    pub x_sup_parts: Vec<f64>,
    /// `sup_{x, r} (r^{-n} int_{P_r} |grad^k f|^{2m/k})^{k/2m}` for `k = 1..=m`.
    pub x_cyl_parts: Vec<f64>,
    /// `Y^k` norms for `k = 0..m-1` when a forcing was supplied.
    pub yk_parts: Vec<f64>,
    pub bmo: Option<f64>,
    pub carleson: Option<f64>,
}

impl NormReport {
    /// `[f]_X`, the sum of the weighted sup and cylinder parts.
    pub fn seminorm(&self) -> f64 {
        self.x_sup_parts.iter().sum::<f64>() + self.x_cyl_parts.iter().sum::<f64>()
    }

    /// `||f||_X = sup_t ||f||_inf + [f]_X`.
    pub fn x_norm(&self) -> f64 {
        self.sup + self.seminorm()
    }
}

fn check_m(m: usize) -> Result<()> {
    if !(1..=crate::kernel::MAX_ORDER).contains(&m) {
        return Err(invalid("m", format!("{m} outside 1..=3")));
    }
    Ok(())
}

fn positive_times(times: &[f64]) -> Result<()> {
    if !times.iter().any(|&t| t > 0.0) {
        return Err(Error::TimeGrid("no positive time sample".into()));
    }
    Ok(())
}

/// `|grad^k u(t_i)|` for every sample and every `k` in `1..=m`; `out[i][k-1]`.
fn gradient_magnitudes(u: &Trajectory, m: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    par::try_map_collect(u.len(), |i| {
        let hat = u.fields()[i].to_spectral()?;
        Ok::<_, Error>(
            (1..=m)
                .map(|k| gradient_tensor(&hat, k).pointwise_norm())
                .collect(),
        )
    })
}

/// The `X_T` norm of a trajectory, split into its parts.
pub fn x_norm(u: &Trajectory, m: usize, cyl: &CylinderSet) -> Result<NormReport> {
    check_m(m)?;
    cyl.require_spec(u.spec())?;
    positive_times(u.times())?;
    let times = u.times();
    let mags = gradient_magnitudes(u, m)?;
    let mut x_sup_parts = Vec::with_capacity(m);
    let mut x_cyl_parts = Vec::with_capacity(m);
    for k in 1..=m {
        let e = k as f64 / (2 * m) as f64;
        let sup = times
            .iter()
            .zip(&mags)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, g)| t.powf(e) * g[k - 1].iter().cloned().fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let p = 1.0 / e;
        let integrand: Vec<Vec<f64>> = mags
            .iter()
            .map(|g| g[k - 1].iter().map(|v| v.powf(p)).collect())
            .collect();
        let cyl_val = cylinder_sup(&integrand, times, cyl, m).powf(e);
        x_sup_parts.push(sup);
        x_cyl_parts.push(cyl_val);
    }
    Ok(NormReport {
        sup: u.sup_norm(),
        x_sup_parts,
        x_cyl_parts,
        ..Default::default()
    })
}

/// `||f||_{Y^k_T}`; the pointwise size is the Euclidean norm over all components.
pub fn yk_norm(f: &Trajectory, k: usize, m: usize, cyl: &CylinderSet) -> Result<f64> {
    check_m(m)?;
    if k >= m {
        return Err(invalid("k", format!("{k} outside 0..={}", m - 1)));
    }
    cyl.require_spec(f.spec())?;
    positive_times(f.times())?;
    let e = (2 * m - k) as f64 / (2 * m) as f64;
    let mags: Vec<Vec<f64>> = par::map_collect(f.len(), |i| f.fields()[i].magnitude());
    let sup = f
        .times()
        .iter()
        .zip(&mags)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, g)| t.powf(e) * g.iter().cloned().fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let p = 1.0 / e;
    let integrand: Vec<Vec<f64>> = mags
        .iter()
        .map(|g| g.iter().map(|v| v.powf(p)).collect())
        .collect();
    Ok(sup + cylinder_sup(&integrand, f.times(), cyl, m).powf(e))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=order {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Octaves of `t` below the smallest radius that are integrated explicitly;
/// the remainder `[0, t_0]` uses `t_0^2/2 |grad f|^2`.
const CARLESON_EXTRA_OCTAVES: usize = 8;
const CARLESON_GL_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub value: f64,
    /// `(r_eff, sup over centres)` per radius.
    pub per_radius: Vec<(f64, f64)>,
}

/// `sup r^{-n} int_0^r int_{B_r(x)} |Phi_t * f|^2 dx dt/t` with
/// `Phi_t * f = t grad (G f)(t^{2m})`.
pub fn carleson_functional(f: &Field, m: usize, cyl: &CylinderSet) -> Result<CarlesonReport> {
    check_m(m)?;
    cyl.require_spec(f.spec())?;
    let spec = f.spec();
    let hat = f.to_spectral()?;
    let radii = cyl.radii();
    let r_min = *radii.last().expect("non-empty");
    if r_min < 2.0 * spec.spacing() {
        log::warn!(
            "Carleson layers below r = {:.3e} are under-resolved on spacing {:.3e}",
            2.0 * spec.spacing(),
            spec.spacing()
        );
    }
    let t0 = r_min / 2f64.powi(CARLESON_EXTRA_OCTAVES as i32);
    let mut bounds: Vec<f64> = (1..=CARLESON_EXTRA_OCTAVES)
        .rev()
        .map(|i| r_min / 2f64.powi(i as i32))
        .collect();
    bounds.push(t0);
    bounds.extend(radii.iter().rev());
    bounds.sort_by(|a, b| a.total_cmp(b));
    bounds.dedup();
    let (gx, gw) = gauss_legendre(CARLESON_GL_ORDER);
    let mut nodes = Vec::new();
    for w in bounds.windows(2) {
        let (a, b) = (w[0].ln(), w[1].ln());
        for (x, wt) in gx.iter().zip(&gw) {
            let s = 0.5 * (a + b) + 0.5 * (b - a) * x;
            nodes.push((s.exp(), 0.5 * (b - a) * wt));
        }
    }
    let square = |sf: &SpectralField, t: f64| {
        let g = gradient_tensor(sf, 1).pointwise_norm();
        g.into_iter().map(|v| t * t * v * v).collect::<Vec<f64>>()
    };
    let layers = par::map_collect(nodes.len(), |i| {
        let t = nodes[i].0;
        square(&apply_g_spectral(&hat, m, t.powi(2 * m as i32)), t)
    });
    let tail: Vec<f64> = square(&hat, 1.0)
        .into_iter()
        .map(|v| v * t0 * t0 / 2.0)
        .collect();
    let mut acc = tail;
    let mut per_radius = Vec::new();
    let mut next = 0;
    for (&w, &r) in cyl.widths().iter().zip(&radii).rev() {
        while next < nodes.len() && nodes[next].0 <= r {
            let wt = nodes[next].1;
            for (a, v) in acc.iter_mut().zip(&layers[next]) {
                *a += wt * v;
            }
            next += 1;
        }
        let sums = box_sums(spec, &acc, w);
        let scale = spec.cell_volume() / r.powi(spec.dim() as i32);
        let v = refined_sup(spec, cyl.stride(), |p| sums[p] * scale);
        per_radius.push((r, v));
    }
    per_radius.reverse();
    let value = per_radius.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(CarlesonReport { value, per_radius })
}

/// All parts of the report for a trajectory, with BMO and Carleson values of
/// its first sample.
pub fn full_report(u: &Trajectory, m: usize, cyl: &CylinderSet) -> Result<NormReport> {
    let mut r = x_norm(u, m, cyl)?;
    let first = &u.fields()[0];
    r.bmo = Some(bmo_seminorm(first, cyl)?);
    r.carleson = Some(carleson_functional(first, m, cyl)?.value);
    Ok(r)
}
