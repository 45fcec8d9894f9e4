//! Numerical checks of the smoothing, distance, operator-bound and
//! constraint estimates, plus the bank of initial maps they run on.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, GridSpec, SpectralField, Trajectory};
use crate::nonlinearity::{energy_m, f_tilde_spectral, gradient_tensor};
use crate::norms::{bmo_seminorm, cylinder_sup, cylinder_sup_weighted, x_norm, yk_norm, CylinderSet};
use crate::par;
use crate::semigroup::{apply_g_spectral, apply_s, rates, DuhamelScheme};
use crate::solver::{band_limited_noise, FlowParams};
use crate::target::{dot, TargetManifold};

/// Log-oscillation amplitudes of the standard bank.
pub const LOG_AMPLITUDES: [f64; 3] = [0.01, 0.05, 0.1];
/// Mollification width of the log profile.
pub const LOG_MOLLIFIER: f64 = 2.0;
/// Time samples per octave for the free-evolution studies.
const SAMPLES_PER_OCTAVE: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    Constant,
    EquatorWrap,
    BumpRotation,
    LogOscillation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub name: String,
    pub kind: BankKind,
    /// Amplitude of a log-oscillation entry.
    pub amplitude: Option<f64>,
    pub field: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestBank {
    pub entries: Vec<BankEntry>,
}

/// `(cos q x_1, sin q x_1, 0)` with `q` the `j`-th wavenumber of the box.
pub fn equator_wrap(spec: &GridSpec, j: usize) -> Result<Field> {
    let q = spec.fundamental() * j as f64;
    Field::from_fn(*spec, 3, 0.0, |x, o| {
        o[0] = (q * x[0]).cos();
        o[1] = (q * x[0]).sin();
        o[2] = 0.0;
    })
}

/// North pole rotated about `e_1` by `a exp(-|x - x0|^2 / 2w^2)`.
pub fn bump_rotation(spec: &GridSpec, center: &[f64], amplitude: f64, width: f64) -> Result<Field> {
    let l = spec.length();
    Field::from_fn(*spec, 3, 0.0, |x, o| {
        let mut r2 = 0.0;
        for a in 0..spec.dim() {
            // nearest periodic image
            let d = (x[a] - center[a] + l / 2.0).rem_euclid(l) - l / 2.0;
            r2 += d * d;
        }
        let theta = amplitude * (-r2 / (2.0 * width * width)).exp();
        o[0] = 0.0;
        o[1] = theta.sin();
        o[2] = theta.cos();
    })
}

/// Periodised, mollified `log|x - x0|` with zero mean.
pub fn log_profile(spec: &GridSpec, center: &[f64], sigma: f64) -> Result<Field> {
    let n = spec.dim();
    let c_n = match n {
        1 => PI,
        2 => 2.0 * PI,
        _ => 2.0 * PI * PI,
    };
    let vol = spec.volume();
    let coeffs: Vec<Complex64> = (0..spec.total())
        .map(|q| {
            let xi = spec.wavevector(q);
            let s2: f64 = xi[..n].iter().map(|v| v * v).sum();
            if s2 == 0.0 || (0..n).any(|a| spec.is_nyquist(spec.coords(q)[a])) {
                return Complex64::new(0.0, 0.0);
            }
            let phase: f64 = (0..n).map(|a| xi[a] * center[a]).sum();
            let amp = -c_n * s2.powf(-(n as f64) / 2.0) * (-sigma * sigma * s2 / 2.0).exp() / vol;
            Complex64::from_polar(amp, -phase)
        })
        .collect();
    Ok(SpectralField::from_coeffs(*spec, 1, coeffs, 0.0)?.to_field())
}

/// `(cos(eps lambda), sin(eps lambda), 0)` for the log profile centred in the box.
pub fn log_oscillation(spec: &GridSpec, eps: f64) -> Result<Field> {
    let center = vec![spec.length() / 2.0; spec.dim()];
    let lambda = log_profile(spec, &center, LOG_MOLLIFIER)?;
    Ok(lambda.map_points(3, |v, o| {
        o[0] = (eps * v[0]).cos();
        o[1] = (eps * v[0]).sin();
        o[2] = 0.0;
    }))
}

impl TestBank {
    /// Two constants, two equator wraps, two seeded bump rotations and the
    /// log-oscillation maps for every amplitude in [`LOG_AMPLITUDES`].
    pub fn standard(spec: &GridSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        let mut push = |name: String, kind, amplitude, field| {
            entries.push(BankEntry {
                name,
                kind,
                amplitude,
                field,
            })
        };
        push("constant_pole".into(), BankKind::Constant, None, Field::constant(*spec, &[0.0, 0.0, 1.0], 0.0));
        push("constant_tilted".into(), BankKind::Constant, None, Field::constant(*spec, &[0.6, 0.0, 0.8], 0.0));
        for j in [1, 2] {
            push(format!("equator_wrap_{j}"), BankKind::EquatorWrap, None, equator_wrap(spec, j)?);
        }
        let l = spec.length();
        for i in 0..2 {
            let center: Vec<f64> = (0..spec.dim()).map(|_| rng.gen_range(0.25 * l..0.75 * l)).collect();
            let amp = rng.gen_range(0.5..1.5);
            push(
                format!("bump_rotation_{i}"),
                BankKind::BumpRotation,
                None,
                bump_rotation(spec, &center, amp, 3.0)?,
            );
        }
        for eps in LOG_AMPLITUDES {
            push(format!("log_oscillation_{eps}"), BankKind::LogOscillation, Some(eps), log_oscillation(spec, eps)?);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, name: &str) -> Option<&BankEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn of_kind(&self, kind: BankKind) -> impl Iterator<Item = &BankEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }
}

/// `0` followed by a geometric grid from about `(h/4)^{2m}` to `t_hi`.
pub fn log_time_grid(spec: &GridSpec, m: usize, t_hi: f64) -> Vec<f64> {
    let t_lo = (spec.spacing() / 4.0).powi(2 * m as i32).min(t_hi / 2.0);
    let count = ((t_hi / t_lo).log2() * SAMPLES_PER_OCTAVE).ceil() as usize;
    let mut times = vec![0.0];
    times.extend((0..=count).map(|i| t_lo * (t_hi / t_lo).powf(i as f64 / count as f64)));
    times
}

fn free_samples(u0: &Field, m: usize, times: &[f64]) -> Result<Trajectory> {
    let hat = u0.to_spectral()?;
    Trajectory::try_from_fn(times.to_vec(), |_, t| Ok(apply_g_spectral(&hat, m, t).to_field()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub m: usize,
    pub radius: f64,
    pub bmo: f64,
    pub sup_norm: f64,
    /// Zero BMO: every ratio would be 0/0.
    pub vacuous: bool,
    /// `sup r^{-n} int_{P_r} r^{2k-2m} |grad^k G u0|^2` for `k = 1..=m`.
    pub cylinder_lhs: Vec<f64>,
    /// `sup_{t <= R^{2m}} t^{k/2m} ||grad^k G u0||_inf` for `k = 1..=m`.
    pub sup_lhs: Vec<f64>,
    /// `sup r^{-n} int_{P_r} |grad^k G u0|^{2m/k}` for `k = 1..m`.
    pub lp_lhs: Vec<f64>,
    /// `sum cylinder_lhs / bmo^2`.
    pub c_cylinder: f64,
    /// `sum sup_lhs / bmo`.
    pub c_sup: f64,
    /// `lp_lhs[k] / (||u0||^{2m/k - 2} bmo^2)` per `k`.
    pub c_lp: Vec<f64>,
}

/// Left sides of the free-evolution smoothing estimates divided by their right sides.
pub fn smoothing_report(u0: &Field, m: usize, cyl: &CylinderSet) -> Result<SmoothingReport> {
    if !(1..=crate::kernel::MAX_ORDER).contains(&m) {
        return Err(invalid("m", format!("{m} outside 1..=3")));
    }
    let radius = cyl.cap();
    let bmo = bmo_seminorm(u0, cyl)?;
    let sup_norm = u0.sup_norm();
    let t_hi = radius.powi(2 * m as i32);
    let times = log_time_grid(u0.spec(), m, t_hi);
    let traj = free_samples(u0, m, &times)?;
    let mags: Vec<Vec<Vec<f64>>> = par::try_map_collect(traj.len(), |i| {
        let hat = traj.fields()[i].to_spectral()?;
        Ok::<_, Error>((1..=m).map(|k| gradient_tensor(&hat, k).pointwise_norm()).collect())
    })?;
    let mut cylinder_lhs = Vec::new();
    let mut sup_lhs = Vec::new();
    let mut lp_lhs = Vec::new();
    for k in 1..=m {
        let sq: Vec<Vec<f64>> = mags.iter().map(|g| g[k - 1].iter().map(|v| v * v).collect()).collect();
        let e = (2 * k) as f64 - (2 * m) as f64;
        cylinder_lhs.push(cylinder_sup_weighted(&sq, &times, cyl, m, |r| r.powf(e)));
        let ek = k as f64 / (2 * m) as f64;
        sup_lhs.push(
            times
                .iter()
                .zip(&mags)
                .filter(|(t, _)| **t > 0.0)
                .map(|(t, g)| t.powf(ek) * g[k - 1].iter().cloned().fold(0.0, f64::max))
                .fold(0.0, f64::max),
        );
        if k < m {
            let p = (2 * m) as f64 / k as f64;
            let pw: Vec<Vec<f64>> = mags.iter().map(|g| g[k - 1].iter().map(|v| v.powf(p)).collect()).collect();
            lp_lhs.push(cylinder_sup(&pw, &times, cyl, m));
        }
    }
    let vacuous = bmo == 0.0;
    let div = |a: f64, b: f64| if vacuous { 0.0 } else { a / b };
    let c_lp = lp_lhs
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = (2 * m) as f64 / (i + 1) as f64;
            div(*v, sup_norm.powf(p - 2.0) * bmo * bmo)
        })
        .collect();
    Ok(SmoothingReport {
        m,
        radius,
        bmo,
        sup_norm,
        vacuous,
        c_cylinder: div(cylinder_lhs.iter().sum(), bmo * bmo),
        c_sup: div(sup_lhs.iter().sum(), bmo),
        c_lp,
        cylinder_lhs,
        sup_lhs,
        lp_lhs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub bmo: f64,
    /// `max_{t <= R^{2m}} max_x dist(G u0, N)`.
    pub max_dist: f64,
    /// `1 - |mean u0|`, the distance the free evolution saturates at on the torus.
    pub floor: f64,
    /// `(max_dist - floor) / bmo`, clamped at 0.
    pub k_hat: f64,
    pub times: Vec<f64>,
    pub trace: Vec<f64>,
}

/// Distance of the free evolution from the sphere over `t <= R^{2m}`.
pub fn distance_report(u0: &Field, m: usize, cyl: &CylinderSet, tm: &TargetManifold) -> Result<DistanceReport> {
    let bmo = bmo_seminorm(u0, cyl)?;
    let times = log_time_grid(u0.spec(), m, cyl.cap().powi(2 * m as i32));
    let hat = u0.to_spectral()?;
    let trace = par::try_map_collect(times.len(), |i| {
        tm.dist_to_n(&apply_g_spectral(&hat, m, times[i]).to_field()).map(|d| d.0)
    })?;
    let total = u0.spec().total();
    let mean: Vec<f64> = (0..u0.components())
        .map(|c| u0.component(c).iter().sum::<f64>() / total as f64)
        .collect();
    let floor = (1.0 - dot(&mean, &mean).sqrt()).abs();
    let max_dist = trace.iter().cloned().fold(0.0, f64::max);
    Ok(DistanceReport {
        bmo,
        max_dist,
        floor,
        k_hat: if bmo > 0.0 { (max_dist - floor).max(0.0) / bmo } else { 0.0 },
        times,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SBoundReport {
    pub m: usize,
    pub k: usize,
    /// `||S(d^alpha f)||_X / ||f||_{Y^k}` per forcing.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Forcings with zero `Y^k` norm.
    pub skipped: usize,
    /// Sup error of `S` on a single constant-in-time mode against the closed form.
    pub mode_error: f64,
}

/// `d^alpha` with `alpha = k e_1`, applied to every sample.
fn axial_derivative(f: &Trajectory, k: usize) -> Result<Trajectory> {
    let mut alpha = vec![0; f.spec().dim()];
    alpha[0] = k;
    Trajectory::try_from_fn(f.times().to_vec(), |i, _| {
        Ok(f.fields()[i].to_spectral()?.derivative(&alpha, k)?.to_field())
    })
}

/// Operator bound of `S` composed with `k` derivatives, on random forcings
/// `a(x) + (t/T) b(x)` drawn on a grid of `base_points` and interpolated onto `spec`.
pub fn s_bound_report(
    spec: &GridSpec,
    k: usize,
    p: &FlowParams,
    samples: usize,
    base_points: usize,
) -> Result<SBoundReport> {
    p.validate()?;
    let m = p.m;
    if k >= m {
        return Err(invalid("k", format!("{k} outside 0..={}", m - 1)));
    }
    let base = GridSpec::new(spec.dim(), spec.length(), base_points)?;
    let cyl = p.cylinders(spec)?;
    let scheme = DuhamelScheme::new(p.duhamel_order, p.dt())?;
    let times = p.times();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let draws: Vec<(Field, Field)> = (0..samples)
        .map(|_| {
            let a = band_limited_noise(&base, 1, &mut rng);
            let b = band_limited_noise(&base, 1, &mut rng);
            (a, b)
        })
        .collect();
    let results = par::try_map_collect(draws.len(), |i| {
        let a = draws[i].0.to_spectral()?.resampled(spec)?.to_field();
        let b = draws[i].1.to_spectral()?.resampled(spec)?.to_field();
        let f = Trajectory::try_from_fn(times.clone(), |_, t| a.add_scaled(t / p.t_final, &b))?;
        let denom = yk_norm(&f, k, m, &cyl)?;
        if denom == 0.0 {
            return Ok::<Option<f64>, Error>(None);
        }
        let sf = apply_s(&axial_derivative(&f, k)?, m, &scheme)?;
        Ok(Some(x_norm(&sf, m, &cyl)?.x_norm() / denom))
    })?;
    let ratios: Vec<f64> = results.iter().flatten().cloned().collect();
    Ok(SBoundReport {
        m,
        k,
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
        skipped: results.iter().filter(|r| r.is_none()).count(),
        ratios,
        mode_error: s_mode_error(spec, k, p)?,
    })
}

/// `S` on `d^alpha cos(xi x_1)` constant in time against
/// `(1 - e^{-t lambda}) / lambda * d^alpha cos(xi x_1)`.
pub fn s_mode_error(spec: &GridSpec, k: usize, p: &FlowParams) -> Result<f64> {
    let xi = spec.fundamental() * 3.0;
    let lambda = xi.powi(2 * p.m as i32);
    let mode = Field::from_fn(*spec, 1, 0.0, |x, o| o[0] = (xi * x[0]).cos())?;
    let times = p.times();
    let f = Trajectory::new(times.clone(), vec![mode.clone(); times.len()])?;
    let sf = apply_s(&axial_derivative(&f, k)?, p.m, &DuhamelScheme::new(p.duhamel_order, p.dt())?)?;
    let dmode = axial_derivative(&f, k)?;
    let errs = par::try_map_collect(times.len(), |i| {
        let exact = dmode.fields()[i].scaled(-(-times[i] * lambda).exp_m1() / lambda);
        Ok::<f64, Error>(sf.fields()[i].sub(&exact)?.sup_norm())
    })?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub times: Vec<f64>,
    /// `int rho(u(t))`.
    pub rho: Vec<f64>,
    /// `int |grad^m Q(u(t))|^2`.
    pub dissipation: Vec<f64>,
    /// `int <dPi(u) F(u), Q(u)>`.
    pub orthogonality: Vec<f64>,
    /// `max_t |d/dt int rho + int |grad^m Q|^2 + orthogonality|` over interior samples.
    pub residual: f64,
    /// `max_t |orthogonality| / int |F(u)| |Q(u)|`.
    pub orthogonality_normalized: f64,
    /// Index of the first sample outside the tube; the report stops there.
    pub exit_index: Option<usize>,
}

/// Penalty balance of the flow on a trajectory.
pub fn constraint_report(traj: &Trajectory, tm: &TargetManifold, m: usize) -> Result<ConstraintReport> {
    let rows = par::try_map_collect(traj.len(), |i| {
        let u = &traj.fields()[i];
        let disp = tm.q_and_rho(u)?;
        let grad = gradient_tensor(&disp.q.to_spectral()?, m);
        let diss = grad.data().iter().map(|v| v * v).sum::<f64>() * u.spec().cell_volume();
        let f = f_tilde_spectral(u, tm, m)?.to_field();
        let l = tm.l;
        let mut jac = vec![0.0; l * l];
        let (mut orth, mut scale) = (0.0, 0.0);
        let (mut y, mut fv, mut qv, mut w) = (vec![0.0; l], vec![0.0; l], vec![0.0; l], vec![0.0; l]);
        for p in 0..u.spec().total() {
            u.point_into(p, &mut y);
            f.point_into(p, &mut fv);
            disp.q.point_into(p, &mut qv);
            tm.differential_into(&y, &mut jac);
            for a in 0..l {
                w[a] = (0..l).map(|b| jac[a * l + b] * fv[b]).sum();
            }
            orth += dot(&w, &qv);
            scale += dot(&fv, &fv).sqrt() * dot(&qv, &qv).sqrt();
        }
        let cv = u.spec().cell_volume();
        Ok::<_, Error>((disp.rho_total, diss, orth * cv, scale * cv, disp.inside_tube))
    })?;
    let exit_index = rows.iter().position(|r| !r.4);
    let end = exit_index.unwrap_or(rows.len());
    let times = traj.times()[..end].to_vec();
    let rho: Vec<f64> = rows[..end].iter().map(|r| r.0).collect();
    let dissipation: Vec<f64> = rows[..end].iter().map(|r| r.1).collect();
    let orthogonality: Vec<f64> = rows[..end].iter().map(|r| r.2).collect();
    let mut residual: f64 = 0.0;
    for i in 1..end.saturating_sub(1) {
        let drho = (rho[i + 1] - rho[i - 1]) / (times[i + 1] - times[i - 1]);
        residual = residual.max((drho + dissipation[i] + orthogonality[i]).abs());
    }
    let orthogonality_normalized = rows[..end]
        .iter()
        .map(|r| if r.3 > 0.0 { r.2.abs() / r.3 } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(ConstraintReport {
        times,
        rho,
        dissipation,
        orthogonality,
        residual,
        orthogonality_normalized,
        exit_index,
    })
}

/// `(-1)^m Delta^m u` through its Fourier multiplier `|xi|^{2m}`.
fn polyharmonic(u: &Field, m: usize) -> Result<Field> {
    let hat = u.to_spectral()?;
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mult: Vec<f64> = rates(u.spec(), m).into_iter().map(|r| sign * r).collect();
    Ok(hat.apply_real_multiplier(&mult).to_field())
}

/// Normal part of `w = (-1)^{m+1} Delta^m u + F~(u)` for sphere-valued `u`:
/// `max |u . w| / max(||w||_inf, ||Delta^m u||_inf)`.
pub fn tangency_residual(u: &Field, m: usize, tm: &TargetManifold) -> Result<f64> {
    let (d, _) = tm.dist_to_n(u)?;
    if d > 1e-8 {
        return Err(Error::NotTangent(format!("field leaves the sphere by {d:e}")));
    }
    let lap = polyharmonic(u, m)?;
    let f = f_tilde_spectral(u, tm, m)?.to_field();
    let sign = if m.is_multiple_of(2) { -1.0 } else { 1.0 };
    let w = f.add_scaled(sign, &lap)?;
    let l = u.components();
    let normal = (0..u.spec().total())
        .map(|p| {
            let (a, b) = (u.point(p), w.point(p));
            dot(&a[..l], &b[..l]).abs()
        })
        .fold(0.0, f64::max);
    let scale = w.sup_norm().max(lap.sup_norm());
    Ok(if scale > 0.0 { normal / scale } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Largest increase of `E_m` between consecutive samples, 0 when monotone.
    pub max_uphill: f64,
}

pub fn dissipation_report(traj: &Trajectory, m: usize) -> Result<DissipationReport> {
    let energy = par::try_map_collect(traj.len(), |i| energy_m(&traj.fields()[i], m))?;
    let max_uphill = energy.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(DissipationReport {
        times: traj.times().to_vec(),
        energy,
        max_uphill,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(points: usize) -> GridSpec {
        GridSpec::new(1, 2.0 * PI * 8.0, points).unwrap()
    }

    #[test]
    fn bank_maps_into_the_sphere_and_is_seeded() {
        let s = spec(64);
        let tm = TargetManifold::default();
        let a = TestBank::standard(&s, 3).unwrap();
        let b = TestBank::standard(&s, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.of_kind(BankKind::LogOscillation).count(), 3);
        for e in &a.entries {
            assert!(tm.is_on_manifold(&e.field, 1e-10).unwrap(), "{}", e.name);
        }
    }

    #[test]
    fn log_profile_behaves_like_log_away_from_the_centre() {
        let s = spec(256);
        let c = [s.length() / 2.0];
        let lam = log_profile(&s, &c, LOG_MOLLIFIER).unwrap();
        // periodised log is ln|2 sin(pi d / L)| up to a constant; compare differences
        // well outside the mollifier
        let at = |d: f64| lam.data()[((c[0] + d) / s.spacing()).round() as usize];
        // Gaussian smoothing shifts it by sigma^2/2 times its second derivative
        let k = PI / s.length();
        let per = |d: f64| {
            (2.0 * (k * d).sin()).ln() - LOG_MOLLIFIER.powi(2) / 2.0 * k * k / (k * d).sin().powi(2)
        };
        let (d1, d2) = (64.0 * s.spacing(), 112.0 * s.spacing());
        let d = at(d2) - at(d1);
        let expect = per(d2) - per(d1);
        assert!((d - expect).abs() < 5e-3, "{d} vs {expect}");
    }

    #[test]
    fn constants_make_reports_vacuous() {
        let s = spec(32);
        let u0 = Field::constant(s, &[0.0, 0.0, 1.0], 0.0);
        let cyl = CylinderSet::with_default_stride(&s, s.length() / 8.0).unwrap();
        let r = smoothing_report(&u0, 2, &cyl).unwrap();
        assert!(r.vacuous);
        assert!(r.sup_lhs.iter().all(|v| *v < 1e-12));
        let d = distance_report(&u0, 1, &cyl, &TargetManifold::default()).unwrap();
        assert!(d.max_dist < 1e-14);
    }

    #[test]
    fn harmonic_wrap_is_tangent() {
        let s = spec(64);
        let u = equator_wrap(&s, 2).unwrap();
        let r = tangency_residual(&u, 1, &TargetManifold::default()).unwrap();
        assert!(r < 1e-8, "{r}");
    }

    #[test]
    fn on_manifold_trajectory_has_no_penalty() {
        let s = spec(32);
        let u = equator_wrap(&s, 1).unwrap();
        let traj = Trajectory::new(vec![0.0, 0.1, 0.2], vec![u.clone(), u.clone(), u]).unwrap();
        let r = constraint_report(&traj, &TargetManifold::default(), 1).unwrap();
        assert!(r.rho.iter().all(|v| *v < 1e-20));
        assert!(r.residual < 1e-8);
        assert!(r.exit_index.is_none());
        let d = dissipation_report(&traj, 1).unwrap();
        assert!(d.max_uphill < 1e-12);
    }

    #[test]
    fn resampling_preserves_band_limited_fields() {
        let s = spec(32);
        let f = equator_wrap(&s, 3).unwrap();
        let fine = f.to_spectral().unwrap().resampled(&spec(64)).unwrap().to_field();
        for p in 0..64 {
            let x = fine.spec().position(p)[0];
            let q = s.fundamental() * 3.0;
            assert!((fine.data()[p] - (q * x).cos()).abs() < 1e-13);
        }
    }
}
