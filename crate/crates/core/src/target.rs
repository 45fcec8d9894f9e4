//! The round sphere `S^{l-1} ⊂ R^l` as target: projection, its smooth global
//! extension, displacement, penalty and second fundamental form.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Field;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetManifold {
    pub l: usize,
    pub delta_n: f64,
    pub cutoff_inner: f64,
    pub cutoff_outer: f64,
}

impl Default for TargetManifold {
    fn default() -> Self {
        Self {
            l: 3,
            delta_n: 0.45,
            cutoff_inner: 0.4,
            cutoff_outer: 0.5,
        }
    }
}

/// `e^{-1/s}` for `s > 0`, else 0.
fn flat_step(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

fn flat_step_prime(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp() / (s * s)
    } else {
        0.0
    }
}

/// Smooth transition from 0 (`tau <= 0`) to 1 (`tau >= 1`), flat to all orders
/// at both ends. Returns the value and its derivative in `tau`.
fn smooth_transition(tau: f64) -> (f64, f64) {
    if tau <= 0.0 {
        return (0.0, 0.0);
    }
    if tau >= 1.0 {
        return (1.0, 0.0);
    }
    let (a, b) = (flat_step(tau), flat_step(1.0 - tau));
    let (da, db) = (flat_step_prime(tau), -flat_step_prime(1.0 - tau));
    let s = a + b;
    (a / s, (da * s - a * (da + db)) / (s * s))
}

impl TargetManifold {
    pub fn new(l: usize, delta_n: f64, cutoff_inner: f64, cutoff_outer: f64) -> Result<Self> {
        let tm = Self {
            l,
            delta_n,
            cutoff_inner,
            cutoff_outer,
        };
        tm.validate()?;
        Ok(tm)
    }

    pub fn sphere(l: usize) -> Result<Self> {
        Self::new(l, 0.45, 0.4, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(invalid("l", format!("{} must be >= 2", self.l)));
        }
        if !(self.delta_n > 0.0 && self.delta_n < 0.5) {
            return Err(invalid("delta_n", format!("{} outside (0, 1/2)", self.delta_n)));
        }
        if !(self.cutoff_inner > 0.0 && self.cutoff_inner < self.cutoff_outer) {
            return Err(invalid(
                "cutoff_inner",
                format!(
                    "need 0 < {} < cutoff_outer = {}",
                    self.cutoff_inner, self.cutoff_outer
                ),
            ));
        }
        if self.cutoff_outer > 1.0 - self.delta_n {
            return Err(invalid(
                "cutoff_outer",
                format!(
                    "{} reaches into the tube |y| >= {}",
                    self.cutoff_outer,
                    1.0 - self.delta_n
                ),
            ));
        }
        Ok(())
    }

    /// Blend factor `chi(|y|^2)` and `d chi / d(|y|^2)`.
    fn blend(&self, r2: f64) -> (f64, f64) {
        let (a, b) = (self.cutoff_inner.powi(2), self.cutoff_outer.powi(2));
        let (v, d) = smooth_transition((r2 - a) / (b - a));
        (v, d / (b - a))
    }

    /// Smooth extension of the nearest-point projection: `y/|y|` for
    /// `|y| >= cutoff_outer`, blended to 0 inside `cutoff_inner`.
    pub fn project_into(&self, y: &[f64], out: &mut [f64]) {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let (chi, _) = self.blend(r2);
        if chi == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let s = chi / r2.sqrt();
        for (o, v) in out.iter_mut().zip(y) {
            *o = s * v;
        }
    }

    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.project_into(y, &mut out);
        out
    }

    /// Jacobian of the extended projection, row-major `J[a * l + b] = d Pi_a / d y_b`.
    pub fn differential_into(&self, y: &[f64], out: &mut [f64]) {
        let l = y.len();
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let (chi, dchi) = self.blend(r2);
        if chi == 0.0 && dchi == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let r = r2.sqrt();
        for a in 0..l {
            for b in 0..l {
                let delta = if a == b { 1.0 } else { 0.0 };
                out[a * l + b] =
                    2.0 * dchi * y[a] * y[b] / r + chi * (delta - y[a] * y[b] / r2) / r;
            }
        }
    }

    pub fn differential(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len() * y.len()];
        self.differential_into(y, &mut out);
        out
    }

    /// `Q(y) = y - Pi(y) = (1 - chi/|y|) y`, formed as a multiple of `y` so
    /// that it stays exactly radial even when it is tiny.
    pub fn displacement_into(&self, y: &[f64], out: &mut [f64]) {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let (chi, _) = self.blend(r2);
        let r = r2.sqrt();
        let factor = if chi == 1.0 {
            // 1 - 1/r without cancelling
            (r2 - 1.0) / (r * (r + 1.0))
        } else if r > 0.0 {
            1.0 - chi / r
        } else {
            1.0
        };
        for (o, v) in out.iter_mut().zip(y) {
            *o = factor * v;
        }
    }

    pub fn displacement(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.displacement_into(y, &mut out);
        out
    }

    /// `A(y)(v, w) = (v . w) y` for `y` on the sphere and tangent `v`, `w`.
    pub fn second_fundamental(&self, y: &[f64], v: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        const TOL: f64 = 1e-10;
        let norm = dot(y, y).sqrt();
        if (norm - 1.0).abs() > TOL {
            return Err(Error::NotTangent(format!("|y| = {norm} is not on the sphere")));
        }
        for (name, t) in [("v", v), ("w", w)] {
            let ip = dot(t, y);
            if ip.abs() > TOL {
                return Err(Error::NotTangent(format!("{name} . y = {ip:e}")));
            }
        }
        let vw = dot(v, w);
        Ok(y.iter().map(|c| vw * c).collect())
    }

    fn check_components(&self, u: &Field) -> Result<()> {
        if u.components() != self.l {
            return Err(Error::Shape(format!(
                "field has {} components, target lives in R^{}",
                u.components(),
                self.l
            )));
        }
        Ok(())
    }

    /// Pointwise displacement `Q(u)` and the total penalty `int rho(u)`.
    pub fn q_and_rho(&self, u: &Field) -> Result<Displacement> {
        self.check_components(u)?;
        let q = u.map_points(self.l, |y, out| self.displacement_into(y, out));
        let rho_total = 0.5 * q.l2_norm_sq();
        let (max_dist, _) = self.dist_to_n(u)?;
        Ok(Displacement {
            q,
            rho_total,
            max_dist,
            inside_tube: max_dist < self.delta_n,
        })
    }

    /// `| |u(x)| - 1 |` pointwise and its maximum.
    pub fn dist_to_n(&self, u: &Field) -> Result<(f64, Field)> {
        self.check_components(u)?;
        let d = u.map_points(1, |y, out| out[0] = (dot(y, y).sqrt() - 1.0).abs());
        Ok((d.sup_norm(), d))
    }

    /// True when every sample lies on the sphere within `tol`.
    pub fn is_on_manifold(&self, u: &Field, tol: f64) -> Result<bool> {
        Ok(self.dist_to_n(u)?.0 <= tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub q: Field,
    pub rho_total: f64,
    pub max_dist: f64,
    /// False when some sample left the tubular neighbourhood.
    pub inside_tube: bool,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
