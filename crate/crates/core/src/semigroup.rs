//! The free evolution `G` and the Duhamel operator `S` for
//! `(d/dt + (-1)^m Delta^m) w = f`, both diagonal in Fourier space.
//!
//! `S` marches each mode exactly through the linear part while the forcing is
//! reconstructed in time as piecewise constant (order 1) or piecewise linear
//! (order 2) between samples.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, SpectralField, Trajectory};
use crate::kernel::multiplier_unchecked;
use crate::par;

/// Below this `|z|` the phi functions switch to their Taylor series.
pub const PHI_SERIES_SWITCH: f64 = 1e-4;

/// `phi_1(z) = (e^z - 1) / z`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < PHI_SERIES_SWITCH {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        z.exp_m1() / z
    }
}

/// `phi_2(z) = (e^z - 1 - z) / z^2`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < PHI_SERIES_SWITCH {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuhamelScheme {
    order: usize,
    dt: f64,
}

impl DuhamelScheme {
    pub fn new(order: usize, dt: f64) -> Result<Self> {
        if !(order == 1 || order == 2) {
            return Err(invalid("order", format!("{order} must be 1 or 2")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("{dt} must be > 0")));
        }
        Ok(Self { order, dt })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Per-step weights `(e^z, w_start, w_end)` for rate `lambda`:
    /// `w(t+dt) = e^z w(t) + w_start f(t) + w_end f(t+dt)` with `z = -lambda dt`.
    pub fn weights(&self, lambda: f64) -> (f64, f64, f64) {
        let z = -lambda * self.dt;
        let e = z.exp();
        match self.order {
            1 => (e, self.dt * phi1(z), 0.0),
            _ => {
                let (p1, p2) = (phi1(z), phi2(z));
                (e, self.dt * (p1 - p2), self.dt * p2)
            }
        }
    }
}

fn check_order(m: usize) -> Result<()> {
    if !(1..=crate::kernel::MAX_ORDER).contains(&m) {
        return Err(invalid("m", format!("{m} outside 1..=3")));
    }
    Ok(())
}

/// `|xi|^{2m}` per spectral slot.
pub(crate) fn rates(spec: &crate::grid::GridSpec, m: usize) -> Vec<f64> {
    spec.wavenumber_sq_table()
        .into_iter()
        .map(|s| s.powi(m as i32))
        .collect()
}

/// `G u0` at time `t`.
pub fn apply_g(u0: &Field, m: usize, t: f64) -> Result<Field> {
    check_order(m)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("{t} must be finite and >= 0")));
    }
    let hat = u0.to_spectral()?;
    Ok(apply_g_spectral(&hat, m, t).to_field())
}

pub(crate) fn apply_g_spectral(hat: &SpectralField, m: usize, t: f64) -> SpectralField {
    let mult: Vec<f64> = hat
        .spec()
        .wavenumber_sq_table()
        .into_iter()
        .map(|s| multiplier_unchecked(s, m, t))
        .collect();
    hat.apply_real_multiplier(&mult).with_time(t)
}

/// `G u0` sampled at every time of `times`.
pub fn g_trajectory(u0: &Field, m: usize, times: &[f64]) -> Result<Trajectory> {
    check_order(m)?;
    let hat = u0.to_spectral()?;
    Trajectory::try_from_fn(times.to_vec(), |_, t| {
        if !(t >= 0.0) {
            return Err(invalid("times", format!("{t} must be >= 0")));
        }
        Ok(apply_g_spectral(&hat, m, t).to_field())
    })
}

fn check_grid(f: &Trajectory, scheme: &DuhamelScheme) -> Result<()> {
    let dt = f.uniform_step().ok_or_else(|| {
        Error::TimeGrid("forcing must sit on a uniform grid with at least two samples".into())
    })?;
    if ((dt - scheme.dt()) / dt).abs() > 1e-9 {
        return Err(Error::TimeGrid(format!(
            "scheme step {} differs from the grid step {dt}",
            scheme.dt()
        )));
    }
    Ok(())
}

/// `S f` on the time grid of `f`; the first sample is 0.
pub fn apply_s(f: &Trajectory, m: usize, scheme: &DuhamelScheme) -> Result<Trajectory> {
    check_order(m)?;
    check_grid(f, scheme)?;
    let hats = par::try_map_collect(f.len(), |i| f.fields()[i].to_spectral())?;
    let out = apply_s_spectral(&hats, m, scheme);
    let fields = par::map_collect(out.len(), |i| out[i].to_field());
    Trajectory::new(f.times().to_vec(), fields)
}

/// Mode-wise exponential integration of spectral forcing samples.
pub(crate) fn apply_s_spectral(
    hats: &[SpectralField],
    m: usize,
    scheme: &DuhamelScheme,
) -> Vec<SpectralField> {
    let first = &hats[0];
    let spec = *first.spec();
    let total = spec.total();
    let lam = rates(&spec, m);
    let weights: Vec<(f64, f64, f64)> = lam.iter().map(|&l| scheme.weights(l)).collect();
    let mut out = Vec::with_capacity(hats.len());
    out.push(SpectralField::zeros(spec, first.components(), first.time()));
    for i in 1..hats.len() {
        let prev = out[i - 1].coeffs();
        let (fa, fb) = (hats[i - 1].coeffs(), hats[i].coeffs());
        let mut next = vec![Complex64::new(0.0, 0.0); prev.len()];
        par::for_each_chunk_mut(&mut next, total, |c, block| {
            let off = c * total;
            for (p, w) in block.iter_mut().enumerate() {
                let (e, wa, wb) = weights[p];
                let q = off + p;
                *w = prev[q] * e + fa[q] * wa + fb[q] * wb;
            }
        });
        out.push(
            SpectralField::from_coeffs(spec, first.components(), next, hats[i].time())
                .expect("shape preserved"),
        );
    }
    out
}

/// `sup_t || u(t) - G u0(t) - S f(t) ||_inf`.
pub fn duhamel_residual(
    u: &Trajectory,
    f: &Trajectory,
    u0: &Field,
    m: usize,
    order: usize,
) -> Result<f64> {
    if !u.same_grid(f) {
        return Err(Error::TimeGrid("u and f must share their time grid".into()));
    }
    let dt = u
        .uniform_step()
        .ok_or_else(|| Error::TimeGrid("non-uniform time grid".into()))?;
    let s = apply_s(f, m, &DuhamelScheme::new(order, dt)?)?;
    let g = g_trajectory(u0, m, u.times())?;
    let worst = par::try_map_collect(u.len(), |i| {
        let r = u.fields()[i]
            .sub(&g.fields()[i])?
            .sub(&s.fields()[i])?;
        Ok::<f64, Error>(r.sup_norm())
    })?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{uniform_times, GridSpec};

    fn spec() -> GridSpec {
        GridSpec::new(1, 2.0 * std::f64::consts::PI * 8.0, 32).unwrap()
    }

    #[test]
    fn phi_functions_are_continuous_at_the_switch() {
        for z in [-PHI_SERIES_SWITCH, PHI_SERIES_SWITCH] {
            let inner = z * (1.0 - 1e-9);
            let outer = z * (1.0 + 1e-9);
            assert!((phi1(inner) - phi1(outer)).abs() < 1e-12);
            assert!((phi2(inner) - phi2(outer)).abs() < 1e-11);
        }
        assert_eq!(phi1(0.0), 1.0);
        assert_eq!(phi2(0.0), 0.5);
        assert!((phi1(-1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn scheme_validation() {
        assert!(DuhamelScheme::new(3, 0.1).is_err());
        assert!(DuhamelScheme::new(1, 0.0).is_err());
    }

    #[test]
    fn g_keeps_constants_and_damps_modes() {
        let s = spec();
        let c = Field::constant(s, &[0.3, -1.0], 0.0);
        let g = apply_g(&c, 2, 5.0).unwrap();
        assert!(g.sub(&c).unwrap().sup_norm() < 1e-15);
        let q = s.fundamental() * 2.0;
        let u0 = Field::from_fn(s, 1, 0.0, |x, o| o[0] = (q * x[0]).cos()).unwrap();
        let t = 0.7;
        let g = apply_g(&u0, 2, t).unwrap();
        let decay = (-t * q.powi(4)).exp();
        for p in 0..32 {
            let x = s.position(p)[0];
            assert!((g.data()[p] - decay * (q * x).cos()).abs() < 1e-12);
        }
        assert_eq!(g.time(), t);
    }

    #[test]
    fn s_of_zero_is_zero() {
        let s = spec();
        let f = Trajectory::new(uniform_times(1.0, 8), vec![Field::zeros(s, 2, 0.0); 9]).unwrap();
        let out = apply_s(&f, 1, &DuhamelScheme::new(2, 0.125).unwrap()).unwrap();
        assert_eq!(out.sup_norm(), 0.0);
    }

    #[test]
    fn mismatched_step_is_rejected() {
        let s = spec();
        let f = Trajectory::new(uniform_times(1.0, 8), vec![Field::zeros(s, 1, 0.0); 9]).unwrap();
        assert!(matches!(
            apply_s(&f, 1, &DuhamelScheme::new(1, 0.1).unwrap()),
            Err(Error::TimeGrid(_))
        ));
    }

    #[test]
    fn residual_of_exact_construction_vanishes() {
        let s = spec();
        let times = uniform_times(0.5, 16);
        let u0 = Field::from_fn(s, 1, 0.0, |x, o| o[0] = (x[0] / 8.0).sin()).unwrap();
        let f = Trajectory::try_from_fn(times.clone(), |_, t| {
            Field::from_fn(s, 1, t, |x, o| o[0] = (x[0] / 4.0).cos() * (1.0 + t))
        })
        .unwrap();
        let sf = apply_s(&f, 2, &DuhamelScheme::new(2, 0.5 / 16.0).unwrap()).unwrap();
        let g = g_trajectory(&u0, 2, &times).unwrap();
        let u = g.add_scaled(1.0, &sf).unwrap();
        assert!(duhamel_residual(&u, &f, &u0, 2, 2).unwrap() < 1e-12);
    }
}
