//! Mild solutions of `u_t + (-1)^m Delta^m u = F~(u)`.
//!
//! [`picard_solve`] iterates the solution map `T(u) = G u0 + S(F~(u))` on whole
//! trajectories starting from `G u0`; [`imex_solve`] is an independent
//! exponential time-differencing march used as an oracle.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{uniform_times, Field, GridSpec, SpectralField, Trajectory};
use crate::nonlinearity::{energy_m, f_tilde_spectral};
use crate::norms::{x_norm, CylinderSet, DEFAULT_CENTER_STRIDE};
use crate::par;
use crate::semigroup::{apply_g_spectral, apply_s_spectral, phi1, phi2, rates, DuhamelScheme};
use crate::target::TargetManifold;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    pub m: usize,
    pub t_final: f64,
    pub steps: usize,
    pub picard_max: usize,
    pub picard_tol: f64,
    pub ball_radius: f64,
    pub seed: u64,
    /// Time reconstruction order of the Duhamel integral (1 or 2).
    pub duhamel_order: usize,
    /// Order of the exponential time-differencing oracle (1 or 2).
    pub imex_order: usize,
    /// Radius cap of the cylinders in the `X_T` norm; `None` means `L/4`.
    pub norm_radius: Option<f64>,
    pub center_stride: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            m: 1,
            t_final: 0.5,
            steps: 256,
            picard_max: 40,
            picard_tol: 1e-9,
            ball_radius: 0.1,
            seed: 0,
            duhamel_order: 2,
            imex_order: 1,
            norm_radius: None,
            center_stride: DEFAULT_CENTER_STRIDE,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=crate::kernel::MAX_ORDER).contains(&self.m) {
            return Err(invalid("m", format!("{} outside 1..=3", self.m)));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(invalid("t_final", format!("{} must be > 0", self.t_final)));
        }
        if self.steps < 8 {
            return Err(invalid("steps", format!("{} must be >= 8", self.steps)));
        }
        if self.picard_max == 0 {
            return Err(invalid("picard_max", "must be >= 1"));
        }
        if !(self.picard_tol > 0.0) {
            return Err(invalid("picard_tol", format!("{} must be > 0", self.picard_tol)));
        }
        if !(self.ball_radius > 0.0) {
            return Err(invalid("ball_radius", format!("{} must be > 0", self.ball_radius)));
        }
        if !(self.duhamel_order == 1 || self.duhamel_order == 2) {
            return Err(invalid("duhamel_order", "must be 1 or 2"));
        }
        if !(self.imex_order == 1 || self.imex_order == 2) {
            return Err(invalid("imex_order", "must be 1 or 2"));
        }
        if self.center_stride == 0 {
            return Err(invalid("center_stride", "must be >= 1"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_times(self.t_final, self.steps)
    }

    pub fn cylinders(&self, spec: &GridSpec) -> Result<CylinderSet> {
        let cap = self.norm_radius.unwrap_or(spec.length() / 4.0);
        CylinderSet::new(spec, cap, self.center_stride)
    }

    fn scheme(&self) -> Result<DuhamelScheme> {
        DuhamelScheme::new(self.duhamel_order, self.dt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// Successive distances grew three times in a row.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    /// `||u^{(j+1)} - u^{(j)}||_X` per iteration.
    pub iterate_distances: Vec<f64>,
    /// Largest ratio of successive distances after the first iteration.
    pub theta_hat: f64,
    pub duhamel_residual: f64,
    /// `max_t max_x dist(u, N)`.
    pub constraint_drift: f64,
    pub energy_trace: Vec<f64>,
}

fn check_u0(u0: &Field, tm: &TargetManifold) -> Result<()> {
    u0.check_finite()?;
    let (d, _) = tm.dist_to_n(u0)?;
    if d > 1e-8 {
        return Err(Error::NotTangent(format!(
            "initial data leave the sphere by {d:e}"
        )));
    }
    Ok(())
}

fn nan_check(fields: &[SpectralField], stage: &'static str, index: usize) -> Result<()> {
    if fields
        .iter()
        .any(|f| f.coeffs().iter().any(|c| !(c.re.is_finite() && c.im.is_finite())))
    {
        return Err(Error::NanAbort { stage, index });
    }
    Ok(())
}

/// Precomputed free evolution `G u0` on the flow's time grid.
pub struct FreeEvolution {
    times: Vec<f64>,
    spectral: Vec<SpectralField>,
    trajectory: Trajectory,
}

impl FreeEvolution {
    pub fn new(u0: &Field, p: &FlowParams) -> Result<Self> {
        p.validate()?;
        let hat = u0.to_spectral()?;
        let times = p.times();
        let spectral = par::map_collect(times.len(), |i| apply_g_spectral(&hat, p.m, times[i]));
        let fields = par::map_collect(times.len(), |i| spectral[i].to_field());
        let trajectory = Trajectory::new(times.clone(), fields)?;
        Ok(Self {
            times,
            spectral,
            trajectory,
        })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }
}

/// `T(u) = G u0 + S(F~(u))` for a trajectory on the flow's time grid.
pub fn solution_map(
    u: &Trajectory,
    free: &FreeEvolution,
    p: &FlowParams,
    tm: &TargetManifold,
) -> Result<Trajectory> {
    if u.times().len() != free.times.len() {
        return Err(Error::TimeGrid("trajectory does not match the flow grid".into()));
    }
    let forcing = par::try_map_collect(u.len(), |i| f_tilde_spectral(&u.fields()[i], tm, p.m))?;
    let s = apply_s_spectral(&forcing, p.m, &p.scheme()?);
    let fields = par::try_map_collect(s.len(), |i| {
        Ok::<Field, Error>(free.spectral[i].add_scaled(1.0, &s[i])?.to_field())
    })?;
    Trajectory::new(free.times.clone(), fields)
}

/// `||a - b||_X`.
pub fn x_distance(a: &Trajectory, b: &Trajectory, m: usize, cyl: &CylinderSet) -> Result<f64> {
    Ok(x_norm(&a.sub(b)?, m, cyl)?.x_norm())
}

/// Picard iteration of the solution map from `u^{(0)} = G u0`.
pub fn picard_solve(
    u0: &Field,
    p: &FlowParams,
    tm: &TargetManifold,
) -> Result<(Trajectory, SolveDiagnostics)> {
    p.validate()?;
    check_u0(u0, tm)?;
    let free = FreeEvolution::new(u0, p)?;
    let cyl = p.cylinders(u0.spec())?;
    let mut u = free.trajectory().clone();
    let mut distances = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut growth = 0;
    for j in 0..p.picard_max {
        let next = solution_map(&u, &free, p, tm).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NanAbort {
                stage: "picard",
                index: j,
            },
            other => other,
        })?;
        if next.fields().iter().any(|f| f.check_finite().is_err()) {
            return Err(Error::NanAbort {
                stage: "picard",
                index: j,
            });
        }
        let d = x_distance(&next, &u, p.m, &cyl)?;
        if !d.is_finite() {
            return Err(Error::NanAbort {
                stage: "picard",
                index: j,
            });
        }
        if let Some(&last) = distances.last() {
            growth = if d > last { growth + 1 } else { 0 };
        }
        distances.push(d);
        u = next;
        if d < p.picard_tol {
            status = SolveStatus::Converged;
            break;
        }
        if growth >= 3 {
            status = SolveStatus::Diverged;
            break;
        }
    }
    let theta_hat = distances
        .windows(2)
        .skip(1)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    let forcing = par::try_map_collect(u.len(), |i| {
        Ok::<Field, Error>(f_tilde_spectral(&u.fields()[i], tm, p.m)?.to_field())
    })?;
    let forcing = Trajectory::new(u.times().to_vec(), forcing)?;
    let residual = crate::semigroup::duhamel_residual(&u, &forcing, u0, p.m, p.duhamel_order)?;
    let drift = par::try_map_collect(u.len(), |i| tm.dist_to_n(&u.fields()[i]).map(|d| d.0))?
        .into_iter()
        .fold(0.0, f64::max);
    let energy_trace = par::try_map_collect(u.len(), |i| energy_m(&u.fields()[i], p.m))?;
    let diagnostics = SolveDiagnostics {
        status,
        iterations: distances.len(),
        iterate_distances: distances,
        theta_hat,
        duhamel_residual: residual,
        constraint_drift: drift,
        energy_trace,
    };
    Ok((u, diagnostics))
}

/// Exponential time differencing: first order, or the second-order
/// Runge-Kutta variant when `p.imex_order == 2`.
pub fn imex_solve(u0: &Field, p: &FlowParams, tm: &TargetManifold) -> Result<Trajectory> {
    p.validate()?;
    check_u0(u0, tm)?;
    let spec = *u0.spec();
    let total = spec.total();
    let dt = p.dt();
    let coefs: Vec<(f64, f64, f64)> = rates(&spec, p.m)
        .into_iter()
        .map(|l| {
            let z = -l * dt;
            (z.exp(), dt * phi1(z), dt * phi2(z))
        })
        .collect();
    let times = p.times();
    let mut hat = u0.to_spectral()?;
    let mut fields = vec![u0.clone().with_time(0.0)];
    // `sum_j w_j(q) * terms_j[slot]` per spectral slot, in parallel over components.
    let combine = |terms: &[(&SpectralField, usize)]| -> SpectralField {
        let mut out = vec![Complex64::new(0.0, 0.0); terms[0].0.coeffs().len()];
        par::for_each_chunk_mut(&mut out, total, |c, block| {
            let off = c * total;
            for (q, v) in block.iter_mut().enumerate() {
                let w = [1.0, coefs[q].0, coefs[q].1, coefs[q].2, -coefs[q].2];
                for (f, which) in terms {
                    *v += f.coeffs()[off + q] * w[*which];
                }
            }
        });
        SpectralField::from_coeffs(spec, terms[0].0.components(), out, 0.0).expect("shape")
    };
    for (i, &t) in times.iter().enumerate().skip(1) {
        let f_n = f_tilde_spectral(fields.last().expect("non-empty"), tm, p.m)?;
        nan_check(std::slice::from_ref(&f_n), "imex", i)?;
        // a = e^z u_n + dt phi1 F_n
        let a = combine(&[(&hat, 1), (&f_n, 2)]);
        let next = if p.imex_order == 2 {
            let fa = f_tilde_spectral(&a.to_field(), tm, p.m)?;
            nan_check(std::slice::from_ref(&fa), "imex", i)?;
            // a + dt phi2 (F(a) - F_n)
            combine(&[(&a, 0), (&fa, 3), (&f_n, 4)])
        } else {
            a
        };
        nan_check(std::slice::from_ref(&next), "imex", i)?;
        fields.push(next.to_field().with_time(t));
        hat = next;
    }
    Trajectory::new(times, fields)
}

/// Real, band-limited Gaussian random field keeping modes with
/// `|k| <= N/8` on every axis.
pub fn band_limited_noise(spec: &GridSpec, components: usize, rng: &mut ChaCha8Rng) -> Field {
    let band = (spec.points() / 8) as i64;
    let total = spec.total();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); components * total];
    for c in 0..components {
        for q in 0..total {
            let k = spec.coords(q);
            if (0..spec.dim()).all(|a| spec.signed_index(k[a]).abs() <= band) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                coeffs[c * total + q] = Complex64::new(re, im);
            }
        }
    }
    SpectralField::from_coeffs(*spec, components, coeffs, 0.0)
        .expect("shape")
        .to_field()
}

/// Perturbation `a(x) + (t/T) b(x)` around `center`, scaled to `X`-distance `radius`.
fn perturbed(
    center: &Trajectory,
    radius: f64,
    m: usize,
    cyl: &CylinderSet,
    rng: &mut ChaCha8Rng,
) -> Result<(Trajectory, f64)> {
    let spec = center.spec();
    let l = center.components();
    let a = band_limited_noise(spec, l, rng);
    let b = band_limited_noise(spec, l, rng);
    let t_final = center.final_time();
    let delta = Trajectory::try_from_fn(center.times().to_vec(), |_, t| {
        a.add_scaled(t / t_final, &b)
    })?;
    let size = x_norm(&delta, m, cyl)?.x_norm();
    let scale = radius / size;
    let fields = center
        .fields()
        .iter()
        .zip(delta.fields())
        .map(|(c, d)| c.add_scaled(scale, d))
        .collect::<Result<Vec<_>>>()?;
    Ok((Trajectory::new(center.times().to_vec(), fields)?, radius))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Largest ratio `||T u - T v||_X / ||u - v||_X`.
    pub theta_hat: f64,
    pub ratios: Vec<f64>,
    /// `||u - v||_X` per pair.
    pub distances: Vec<f64>,
    pub ball_radius: f64,
}

/// Lipschitz ratios of the solution map on random pairs in the ball of radius
/// `p.ball_radius` around `G u0`.
pub fn contraction_probe(
    u0: &Field,
    p: &FlowParams,
    tm: &TargetManifold,
    pairs: usize,
) -> Result<ProbeReport> {
    p.validate()?;
    if pairs < 5 {
        return Err(invalid("pairs", format!("{pairs} must be >= 5")));
    }
    check_u0(u0, tm)?;
    let free = FreeEvolution::new(u0, p)?;
    let cyl = p.cylinders(u0.spec())?;
    let center = free.trajectory();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut draws = Vec::with_capacity(pairs);
    while draws.len() < pairs {
        let ru = p.ball_radius * rng.gen_range(0.25..=1.0);
        let rv = p.ball_radius * rng.gen_range(0.25..=1.0);
        let (u, _) = perturbed(center, ru, p.m, &cyl, &mut rng)?;
        let (v, _) = perturbed(center, rv, p.m, &cyl, &mut rng)?;
        let d = x_distance(&u, &v, p.m, &cyl)?;
        if d >= 1e-12 {
            draws.push((u, v, d));
        }
    }
    let ratios = par::try_map_collect(draws.len(), |i| {
        let (u, v, d) = &draws[i];
        let tu = solution_map(u, &free, p, tm)?;
        let tv = solution_map(v, &free, p, tm)?;
        Ok::<f64, Error>(x_distance(&tu, &tv, p.m, &cyl)? / d)
    })?;
    Ok(ProbeReport {
        theta_hat: ratios.iter().cloned().fold(0.0, f64::max),
        ratios,
        distances: draws.iter().map(|d| d.2).collect(),
        ball_radius: p.ball_radius,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSample {
    /// `||u - G u0||_X`; 0 for the centre itself.
    pub offset: f64,
    /// `[u]_X`.
    pub seminorm: f64,
    /// `||T(u) - G u0||_X`.
    pub image_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallReport {
    pub ball_radius: f64,
    pub samples: Vec<BallSample>,
    /// `min (radius - image_distance)` over samples; negative means a sample left the ball.
    pub worst_margin: f64,
    pub inside: bool,
}

/// Checks that the solution map sends the ball of radius `p.ball_radius`
/// around `G u0` into itself, on the centre and `samples` random points.
pub fn ball_check(
    u0: &Field,
    p: &FlowParams,
    tm: &TargetManifold,
    samples: usize,
) -> Result<BallReport> {
    p.validate()?;
    check_u0(u0, tm)?;
    let free = FreeEvolution::new(u0, p)?;
    let cyl = p.cylinders(u0.spec())?;
    let center = free.trajectory();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed.wrapping_add(1));
    let mut points = vec![(center.clone(), 0.0)];
    for _ in 0..samples {
        let r = p.ball_radius * rng.gen_range(0.25..=1.0);
        points.push(perturbed(center, r, p.m, &cyl, &mut rng)?);
    }
    let out = par::try_map_collect(points.len(), |i| {
        let (u, offset) = &points[i];
        let image = solution_map(u, &free, p, tm)?;
        Ok::<BallSample, Error>(BallSample {
            offset: *offset,
            seminorm: x_norm(u, p.m, &cyl)?.seminorm(),
            image_distance: x_distance(&image, center, p.m, &cyl)?,
        })
    })?;
    let worst_margin = out
        .iter()
        .map(|s| p.ball_radius - s.image_distance)
        .fold(f64::INFINITY, f64::min);
    Ok(BallReport {
        ball_radius: p.ball_radius,
        samples: out,
        worst_margin,
        inside: worst_margin >= 0.0,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(invalid("points", "need at least two positive pairs"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("points", "abscissae coincide"));
    }
    Ok(sxy / sxx)
}
