//! Per-row forward/backward kernels for the manifold maps used on the tape.
//!
//! Most maps have the radial form `y = g(‖x‖)·x`, whose vector-Jacobian
//! product is `gx = g·gy + h·⟨x, gy⟩·x` with `h(n) = g'(n)/n`. Both `g` and
//! `h` have removable singularities at `n = 0`; below a cutoff they are
//! evaluated from their Taylor series instead.

use crate::scalar::Real;
use crate::tensor::kernels::{dot, norm};

/// Radial map applied row-wise over the last axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialMap<T> {
    /// Exponential map at the origin of the ball with curvature `-c`.
    Exp0 { c: T },
    /// Logarithmic map at the origin of the ball with curvature `-c`.
    Log0 { c: T },
    /// Rescale onto the ball of radius `(1 - eps)/√c` when outside it.
    ProjectBall { c: T, eps: T },
    /// `x / ‖x‖`.
    SphereProject,
}

/// Largest `√c‖x‖` accepted by `artanh`-based maps.
pub(crate) fn artanh_cap<T: Real>() -> T {
    T::one() - T::epsilon() * T::lit(16.0)
}

/// Relative slack above the projection radius treated as on the boundary, so
/// that rounding in a rescaled point never triggers a second rescale.
pub(crate) fn boundary_slack<T: Real>() -> T {
    T::one() + T::epsilon() * T::lit(4.0)
}

pub fn artanh<T: Real>(u: T) -> T {
    T::lit(0.5) * ((T::one() + u) / (T::one() - u)).ln()
}

impl<T: Real> RadialMap<T> {
    /// Returns `(g(n), h(n))`.
    pub fn coefficients(&self, n: T) -> (T, T) {
        match *self {
            RadialMap::Exp0 { c } => {
                let s = c.sqrt();
                let u = s * n;
                if u < T::series_cutoff(2) {
                    let u2 = u * u;
                    let g = T::one() - u2 / T::lit(3.0) + T::lit(2.0 / 15.0) * u2 * u2;
                    let h = c * (T::lit(-2.0 / 3.0) + T::lit(8.0 / 15.0) * u2);
                    (g, h)
                } else {
                    let t = u.tanh();
                    let sech2 = T::one() - t * t;
                    (t / u, c * (u * sech2 - t) / (u * u * u))
                }
            }
            RadialMap::Log0 { c } => {
                let s = c.sqrt();
                let u = (s * n).min(artanh_cap());
                if u < T::series_cutoff(2) {
                    let u2 = u * u;
                    let g = T::one() + u2 / T::lit(3.0) + u2 * u2 / T::lit(5.0);
                    let h = c * (T::lit(2.0 / 3.0) + T::lit(4.0 / 5.0) * u2);
                    (g, h)
                } else {
                    let a = artanh(u);
                    (a / u, c * (u / (T::one() - u * u) - a) / (u * u * u))
                }
            }
            RadialMap::ProjectBall { c, eps } => {
                let s = c.sqrt();
                let limit = (T::one() - eps) / s;
                if n > limit * boundary_slack() {
                    (limit / n, -limit / (n * n * n))
                } else {
                    (T::one(), T::zero())
                }
            }
            RadialMap::SphereProject => (n.recip(), -(n * n * n).recip()),
        }
    }

    pub fn forward_row(&self, x: &[T], out: &mut [T]) {
        let (g, _) = self.coefficients(norm(x));
        for (o, &v) in out.iter_mut().zip(x) {
            *o = g * v;
        }
    }

    pub fn backward_row(&self, x: &[T], gy: &[T], gx: &mut [T]) {
        let (g, h) = self.coefficients(norm(x));
        let xg = dot(x, gy);
        for ((o, &xv), &gv) in gx.iter_mut().zip(x).zip(gy) {
            *o = *o + g * gv + h * xg * xv;
        }
    }
}

/// `sin(n)/n` and `(sin(n)/n)'/n`.
fn sinc_coefficients<T: Real>(n: T) -> (T, T) {
    if n < T::series_cutoff(2) {
        let n2 = n * n;
        (
            T::one() - n2 / T::lit(6.0) + n2 * n2 / T::lit(120.0),
            T::lit(-1.0 / 3.0) + n2 / T::lit(30.0),
        )
    } else {
        let (sin, cos) = n.sin_cos();
        (sin / n, (n * cos - sin) / (n * n * n))
    }
}

/// Exponential map at the north pole `μ = e_last`:
/// `cos(‖v‖)·μ + sin(‖v‖)·v/‖v‖`.
pub fn sphere_exp_mu_row<T: Real>(v: &[T], out: &mut [T]) {
    let n = norm(v);
    let (sinc, _) = sinc_coefficients(n);
    for (o, &x) in out.iter_mut().zip(v) {
        *o = sinc * x;
    }
    let last = out.len() - 1;
    out[last] = out[last] + n.cos();
}

pub fn sphere_exp_mu_backward_row<T: Real>(v: &[T], gy: &[T], gx: &mut [T]) {
    let n = norm(v);
    let (sinc, h) = sinc_coefficients(n);
    let vg = dot(v, gy);
    // d cos(n)/dv = -sinc(n)·v
    let g_last = gy[gy.len() - 1];
    for ((o, &x), &g) in gx.iter_mut().zip(v).zip(gy) {
        *o = *o + sinc * g + (h * vg - sinc * g_last) * x;
    }
}

/// Coefficients of the log map at `μ` for a unit vector with tangential norm
/// `rho` and pole coordinate `z`: `(f, h, f_z)` with `f = atan2(rho, z)/rho`,
/// `h = f_rho/rho`, `f_z = ∂f/∂z`.
fn sphere_log_coefficients<T: Real>(rho: T, z: T) -> (T, T, T) {
    let f_z = -(rho * rho + z * z).recip();
    if z > T::zero() && rho < T::series_cutoff(2) * z {
        let t = rho / z;
        let t2 = t * t;
        let f = (T::one() - t2 / T::lit(3.0) + t2 * t2 / T::lit(5.0)) / z;
        let h = -(T::lit(2.0 / 3.0) - T::lit(4.0 / 5.0) * t2 + T::lit(6.0 / 7.0) * t2 * t2)
            / (z * z * z);
        (f, h, f_z)
    } else {
        let theta = rho.atan2(z);
        let f = theta / rho;
        let h = (z * rho / (rho * rho + z * z) - theta) / (rho * rho * rho);
        (f, h, f_z)
    }
}

/// Logarithmic map at `μ = e_last`: `θ·u/‖u‖` with `u` the component of `x`
/// orthogonal to `μ` and `θ = atan2(‖u‖, x_last)`. Returns `false` at the
/// antipode, where the map is undefined.
pub fn sphere_log_mu_row<T: Real>(x: &[T], out: &mut [T]) -> bool {
    let last = x.len() - 1;
    let z = x[last];
    let rho = norm(&x[..last]);
    if rho == T::zero() && z < T::zero() {
        return false;
    }
    if rho == T::zero() {
        out.iter_mut().for_each(|o| *o = T::zero());
        return true;
    }
    let (f, _, _) = sphere_log_coefficients(rho, z);
    for (o, &v) in out[..last].iter_mut().zip(&x[..last]) {
        *o = f * v;
    }
    out[last] = T::zero();
    true
}

pub fn sphere_log_mu_backward_row<T: Real>(x: &[T], gy: &[T], gx: &mut [T]) {
    let last = x.len() - 1;
    let z = x[last];
    let u = &x[..last];
    let rho = norm(u);
    let (f, h, f_z) = if rho == T::zero() {
        // limit rho -> 0 with z > 0
        (z.recip(), T::lit(-2.0 / 3.0) / (z * z * z), -(z * z).recip())
    } else {
        sphere_log_coefficients(rho, z)
    };
    let ug = dot(u, &gy[..last]);
    for ((o, &uv), &g) in gx[..last].iter_mut().zip(u).zip(&gy[..last]) {
        *o = *o + f * g + h * ug * uv;
    }
    gx[last] = gx[last] + f_z * ug;
}

/// Möbius scalar multiplication coefficient `k = tanh(r·artanh(u))/u` with
/// `u = √c‖x‖`, plus `∂k/∂r` and `h = (∂k/∂‖x‖)/‖x‖`.
pub fn mobius_scale_coefficients<T: Real>(r: T, n: T, c: T) -> (T, T, T) {
    let s = c.sqrt();
    let u = (s * n).min(artanh_cap());
    if u < T::series_cutoff(1) {
        let u2 = u * u;
        let k = r + (r - r * r * r) * u2 / T::lit(3.0);
        let dk_dr = T::one() + (T::one() - T::lit(3.0) * r * r) * u2 / T::lit(3.0);
        let h = c * T::lit(2.0 / 3.0) * (r - r * r * r);
        (k, dk_dr, h)
    } else {
        let a = artanh(u);
        let t = (r * a).tanh();
        let sech2 = T::one() - t * t;
        let k = t / u;
        let dk_dr = sech2 * a / u;
        let h = c * (r * u * sech2 / (T::one() - u * u) - t) / (u * u * u);
        (k, dk_dr, h)
    }
}

/// Hyperbolic distance on the ball, computed as
/// `(2/√c)·artanh(√c‖x − y‖ / √D)` with `D = 1 − 2c⟨x,y⟩ + c²‖x‖²‖y‖²`,
/// which equals `(2/√c)·artanh(√c‖(−x) ⊕ y‖)`.
pub fn poincare_distance_row<T: Real>(x: &[T], y: &[T], c: T) -> T {
    let (w, _) = distance_ratio(x, y, c);
    T::lit(2.0) / c.sqrt() * artanh(w)
}

fn distance_ratio<T: Real>(x: &[T], y: &[T], c: T) -> (T, T) {
    let e = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt();
    let xy = dot(x, y);
    let xx = dot(x, x);
    let yy = dot(y, y);
    let denom = T::one() - T::lit(2.0) * c * xy + c * c * xx * yy;
    let w = (c.sqrt() * e / denom.sqrt()).min(artanh_cap());
    (w, e)
}

/// Accumulates the gradient of `g·distance(x, y)` into `gx` and `gy`.
pub fn poincare_distance_backward_row<T: Real>(
    x: &[T],
    y: &[T],
    c: T,
    g: T,
    gx: &mut [T],
    gy: &mut [T],
) {
    let (w, e) = distance_ratio(x, y, c);
    if e == T::zero() {
        // zero subgradient on the diagonal
        return;
    }
    let s = c.sqrt();
    let xy = dot(x, y);
    let xx = dot(x, x);
    let yy = dot(y, y);
    let denom = T::one() - T::lit(2.0) * c * xy + c * c * xx * yy;
    let dd_dw = T::lit(2.0) / s / (T::one() - w * w);
    let root = denom.sqrt();
    let a = g * dd_dw * s / (e * root);
    let b = g * dd_dw * s * e / (T::lit(2.0) * denom * root);
    for i in 0..x.len() {
        let diff = x[i] - y[i];
        let dden_dx = T::lit(-2.0) * c * y[i] + T::lit(2.0) * c * c * yy * x[i];
        let dden_dy = T::lit(-2.0) * c * x[i] + T::lit(2.0) * c * c * xx * y[i];
        gx[i] = gx[i] + a * diff - b * dden_dx;
        gy[i] = gy[i] - a * diff - b * dden_dy;
    }
}
