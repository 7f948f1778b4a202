//! Pointwise constitutive kernels: velocity-profile corrections, inversion of
//! the power-law stress map, yield-stress profiles and discharge laws.
//!
//! Sign convention for the viscous regime: the vertical shear solves
//! `(1/Re) d_zz u = a`, so a driving acceleration `F` enters as `a = -F`.

use crate::quadrature::{integrate_adaptive, try_integrate_gl16};
use crate::{Error, Result};

/// Relative tolerance of the adaptive quadratures used for discharges.
pub const QUAD_TOL: f64 = 1e-14;

/// One vertical sample of a correction profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub z: f64,
    pub u1: [f64; 2],
}

#[inline]
pub(crate) fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

#[inline]
fn scale(v: [f64; 2], s: f64) -> [f64; 2] {
    [v[0] * s, v[1] * s]
}

#[inline]
fn axpy(a: f64, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
    [a * x[0] + y[0], a * x[1] + y[1]]
}

fn check_depth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Closure(format!("layer depth must be positive, got {h}")))
    }
}

fn check_in_layer(z: f64, b: f64, h: f64) -> Result<()> {
    let tol = 1e-12 * (1.0 + b.abs() + h.abs());
    if z < b - tol || z > b + h + tol {
        return Err(Error::Closure(format!("z={z} outside layer [{b}, {}]", b + h)));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::Closure(format!("viscosity ratio must lie in [0, 1), got {theta}")))
    }
}

/// Parabolic velocity correction of the Newtonian inertial regime.
///
/// Zero depth mean; its shear matches the linear friction stress profile.
pub fn parabolic_correction(z: f64, b: f64, h: f64, re: f64, k: f64, u0: [f64; 2]) -> Result<[f64; 2]> {
    check_depth(h)?;
    check_in_layer(z, b, h)?;
    let re_k = if k == 0.0 { 0.0 } else { re * k };
    let shape = (b + 1.5 * h - z) * (z - b - 0.5 * h) + h * h / 12.0;
    Ok(scale(u0, re_k / (2.0 * h) * shape))
}

/// Velocity correction of the viscoelastic inertial regime.
///
/// Its shear is `(Re k u0 (b+h-z)/h - theta s_hz0 / De) / (1 - theta)` and its
/// depth mean vanishes.
#[allow(clippy::too_many_arguments)]
pub fn viscoelastic_correction(
    z: f64,
    b: f64,
    h: f64,
    re: f64,
    k: f64,
    de: f64,
    theta: f64,
    u0: [f64; 2],
    s_hz0: [f64; 2],
) -> Result<[f64; 2]> {
    check_theta(theta)?;
    check_depth(h)?;
    check_in_layer(z, b, h)?;
    let re_k = if k == 0.0 { 0.0 } else { re * k };
    let w = b + h - z;
    let cu = re_k / (2.0 * h) * (h * h / 3.0 - w * w);
    let cs = -theta / (2.0 * de) * (2.0 * z - (h + 2.0 * b));
    let inv = 1.0 / (1.0 - theta);
    Ok([inv * (cu * u0[0] + cs * s_hz0[0]), inv * (cu * u0[1] + cs * s_hz0[1])])
}

/// `phi_a(x) = (x^2/2 + a)^((n-1)/2) x`.
#[inline]
pub fn phi(x: f64, a: f64, n: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if n == 1.0 {
        return x;
    }
    (0.5 * x * x + a).powf(0.5 * (n - 1.0)) * x
}

/// Derivative of [`phi`] in `x`.
#[inline]
pub fn phi_prime(x: f64, a: f64, n: f64) -> f64 {
    if n == 1.0 {
        return 1.0;
    }
    let s = 0.5 * x * x + a;
    s.powf(0.5 * (n - 3.0)) * (a + 0.5 * n * x * x)
}

/// Inverse of [`phi`] on the nonnegative half-line by safeguarded Newton.
pub fn invert_phi(y: f64, a: f64, n: f64) -> Result<f64> {
    if !(y >= 0.0 && y.is_finite()) || !(a >= 0.0 && a.is_finite()) || !(n > 0.0 && n.is_finite()) {
        return Err(Error::Closure(format!("invert_phi outside its domain (y={y}, a={a}, n={n})")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if n == 1.0 {
        return Ok(y);
    }
    // Both one-term bounds of phi give a bracket side.
    let pure = (2f64.powf(0.5 * (n - 1.0)) * y).powf(1.0 / n);
    let lin = if a > 0.0 { y * a.powf(0.5 * (1.0 - n)) } else { f64::INFINITY };
    let (mut lo, mut hi) = if n > 1.0 {
        (0.0, pure.min(lin))
    } else {
        let lo = if lin.is_finite() { pure.max(lin) } else { pure };
        let mut hi = (2.0 * lo).max(1.0);
        let mut guard = 0;
        while phi(hi, a, n) < y {
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return Err(Error::Closure(format!("invert_phi could not bracket y={y}")));
            }
        }
        (lo, hi)
    };
    let tol = 1e-12 * y.max(1.0);
    let mut x = if n > 1.0 { hi } else { lo };
    for _ in 0..200 {
        let f = phi(x, a, n) - y;
        if f == 0.0 {
            return Ok(x);
        }
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let d = phi_prime(x, a, n);
        let mut xn = x - f / d;
        if !(xn > lo && xn < hi) {
            xn = 0.5 * (lo + hi);
        }
        let done = (xn - x).abs() <= 4.0 * f64::EPSILON * xn.abs() || hi - lo <= 4.0 * f64::EPSILON * hi;
        x = xn;
        if done {
            let r = (phi(x, a, n) - y).abs();
            if r <= tol {
                return Ok(x);
            }
            return Err(Error::Closure(format!("invert_phi stalled at residual {r:e} (y={y}, a={a}, n={n})")));
        }
    }
    Err(Error::Closure(format!("invert_phi did not converge (y={y}, a={a}, n={n})")))
}

/// Admissibility of the shear-thinning (`n < 1`) inertial closure: nonzero
/// horizontal strain and `|u0| < sqrt(2)/(k Re)`.
pub fn check_shear_thinning(n: f64, a: f64, u0_norm: f64, re_k: f64) -> Result<()> {
    if n >= 1.0 {
        return Ok(());
    }
    if !(a > 0.0) {
        return Err(Error::Closure("shear-thinning closure needs nonzero horizontal strain".into()));
    }
    if !(u0_norm * re_k < std::f64::consts::SQRT_2) {
        return Err(Error::Closure(format!(
            "shear-thinning closure needs |u0| < sqrt(2)/(k Re) (|u0| = {u0_norm}, k Re = {re_k})"
        )));
    }
    Ok(())
}

/// Effective depth replacing `h` in the power-law inertial viscous term:
/// the depth integral of `(x^2/2 + a)^((n-1)/2)` with `x = phi_a^{-1}(Re k |u0| (b+h-z)/h)`.
pub fn powerlaw_effective_depth(h: f64, re_k: f64, u0_norm: f64, n: f64, a: f64) -> Result<f64> {
    if h <= 0.0 {
        return Ok(0.0);
    }
    check_shear_thinning(n, a, u0_norm, re_k)?;
    if n == 1.0 {
        return Ok(h);
    }
    try_integrate_gl16(
        |w| {
            let x = invert_phi(re_k * u0_norm * w / h, a, n)?;
            Ok((0.5 * x * x + a).powf(0.5 * (n - 1.0)))
        },
        0.0,
        h,
    )
}

/// Magnitude of the bed value of the power-law inertial correction; the
/// correction at the bed is `-m u0/|u0|` where `m = (1/h) int_0^h w phi_a^{-1}(Re k |u0| w/h) dw`.
pub fn powerlaw_bed_correction(h: f64, re_k: f64, u0_norm: f64, n: f64, a: f64) -> Result<f64> {
    if h <= 0.0 || u0_norm == 0.0 || re_k == 0.0 {
        return Ok(0.0);
    }
    check_shear_thinning(n, a, u0_norm, re_k)?;
    let s = try_integrate_gl16(|w| Ok(w * invert_phi(re_k * u0_norm * w / h, a, n)?), 0.0, h)?;
    Ok(s / h)
}

/// Both [`powerlaw_effective_depth`] and [`powerlaw_bed_correction`] from a
/// single set of inversions.
pub fn powerlaw_depth_terms(h: f64, re_k: f64, u0_norm: f64, n: f64, a: f64) -> Result<(f64, f64)> {
    if h <= 0.0 {
        return Ok((0.0, 0.0));
    }
    check_shear_thinning(n, a, u0_norm, re_k)?;
    if u0_norm == 0.0 || re_k == 0.0 {
        return Ok((powerlaw_effective_depth(h, re_k, u0_norm, n, a)?, 0.0));
    }
    let (xs, ws) = crate::quadrature::gl16();
    let (mid, half) = (0.5 * h, 0.5 * h);
    let (mut he, mut m) = (0.0, 0.0);
    for (xi, wi) in xs.iter().zip(ws) {
        let w = mid + half * xi;
        let x = invert_phi(re_k * u0_norm * w / h, a, n)?;
        he += wi * if n == 1.0 { 1.0 } else { (0.5 * x * x + a).powf(0.5 * (n - 1.0)) };
        m += wi * w * x;
    }
    Ok((he * half, m * half / h))
}

/// Power-law inertial correction profile: shear `phi_a^{-1}(|R|)` along `u0`,
/// zero depth mean.
pub fn powerlaw_correction(z: f64, b: f64, h: f64, re_k: f64, u0: [f64; 2], n: f64, a: f64) -> Result<[f64; 2]> {
    check_depth(h)?;
    check_in_layer(z, b, h)?;
    let un = norm2(u0);
    if un == 0.0 || re_k == 0.0 {
        return Ok([0.0; 2]);
    }
    let m = powerlaw_bed_correction(h, re_k, un, n, a)?;
    let rise = if z > b {
        try_integrate_gl16(|zz| invert_phi(re_k * un * (b + h - zz) / h, a, n), b, z)?
    } else {
        0.0
    };
    Ok(scale(u0, (rise - m) / un))
}

/// Velocity correction in the yield-stress limit of the power law.
///
/// `d_h` is `|D_H u0|` and `div_u` the horizontal divergence; the prefactor
/// uses `sqrt(d_h^2 + div_u^2)`. Requires `0 < |u0| < sqrt(2)/(k Re)` and
/// `d_h > 0`.
#[allow(clippy::too_many_arguments)]
pub fn bingham_profile(
    z: f64,
    b: f64,
    h: f64,
    re: f64,
    k: f64,
    u0: [f64; 2],
    d_h: f64,
    div_u: f64,
) -> Result<[f64; 2]> {
    check_depth(h)?;
    check_in_layer(z, b, h)?;
    let un = norm2(u0);
    let rk = re * k;
    if !(un > 0.0) {
        return Err(Error::Closure("yield-stress profile undefined at |u0| = 0".into()));
    }
    if !(rk * un < std::f64::consts::SQRT_2) {
        return Err(Error::Closure(format!(
            "yield-stress profile needs |u0| < sqrt(2)/(k Re) (|u0| = {un}, k Re = {rk})"
        )));
    }
    if !(d_h > 0.0) {
        return Err(Error::Closure("yield-stress profile needs nonzero horizontal strain".into()));
    }
    let (s1, s2, asn) = bingham_terms(z, b, h, rk * un);
    let strain = d_h.hypot(div_u);
    let c = strain * h / (rk * un) * (2.0 * s1.sqrt() + s2.sqrt() + std::f64::consts::SQRT_2 / (rk * un) * asn.asin());
    Ok(scale(u0, c / un))
}

/// Arguments of the two square roots and of the arcsine in the yield-stress
/// profile, for `r = Re k |u0|`.
pub fn bingham_terms(z: f64, b: f64, h: f64, r: f64) -> (f64, f64, f64) {
    let t = r * (b + h - z) / (std::f64::consts::SQRT_2 * h);
    let s = r / std::f64::consts::SQRT_2;
    (1.0 - t * t, 1.0 - s * s, s)
}

/// Coefficients `[A, B, C]` of the pressure-dependent yield quadratic
/// `A s^2 + B s + C = 0` in the shear magnitude `s` (no surface tension).
pub fn drucker_prager_coefficients(
    u0: [f64; 2],
    h: f64,
    k: f64,
    bi: f64,
    f_z: f64,
    d_norm: f64,
    div_u: f64,
) -> Result<[f64; 3]> {
    let un = norm2(u0);
    if !(un > 0.0) || !(k > 0.0) {
        return Err(Error::Closure("pressure-dependent yield closure needs k > 0 and |u0| > 0".into()));
    }
    let r = h * bi * f_z / (k * un);
    Ok([0.5 - r * r, -2.0 * bi * div_u * r, d_norm * d_norm + (1.0 - bi * bi) * div_u * div_u])
}

/// Shear magnitude `|d_z u1|` of the pressure-dependent yield closure without
/// surface tension: the smallest nonnegative root of the quadratic that also
/// satisfies the unsquared relation `-R s - Bi div_u >= 0`, with
/// `R = h Bi f_z / (k |u0|)`.
pub fn drucker_prager_shear(
    u0: [f64; 2],
    h: f64,
    k: f64,
    bi: f64,
    f_z: f64,
    d_norm: f64,
    div_u: f64,
) -> Result<f64> {
    if !(bi > 0.0) {
        return Err(Error::Closure("pressure-dependent yield closure is degenerate for Bi = 0".into()));
    }
    let [qa, qb, qc] = drucker_prager_coefficients(u0, h, k, bi, f_z, d_norm, div_u)?;
    if qa == 0.0 {
        return Err(Error::Closure("pressure-dependent yield quadratic has a vanishing leading coefficient".into()));
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(Error::Closure("pressure-dependent yield quadratic has no real root".into()));
    }
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    let mut roots = Vec::with_capacity(2);
    if q != 0.0 {
        roots.push(q / qa);
        roots.push(qc / q);
    } else {
        roots.push(0.0);
    }
    let r = h * bi * f_z / (k * norm2(u0));
    let mut best: Option<f64> = None;
    for s in roots {
        let s = if s < 0.0 && s > -1e-14 { 0.0 } else { s };
        if s < 0.0 || !s.is_finite() {
            continue;
        }
        let lhs = -r * s - bi * div_u;
        if lhs < -1e-12 * (1.0 + (r * s).abs() + (bi * div_u).abs()) {
            continue;
        }
        let res = qa * s * s + qb * s + qc;
        let mag = (qa * s * s).abs() + (qb * s).abs() + qc.abs();
        if res.abs() > 1e-12 * mag.max(f64::MIN_POSITIVE) {
            continue;
        }
        best = Some(best.map_or(s, |p: f64| p.min(s)));
    }
    best.ok_or_else(|| Error::Closure("pressure-dependent yield quadratic has no admissible nonnegative root".into()))
}

/// Residual of the general pressure-dependent yield relation at depth
/// `w = b + h - z`, including the surface-tension pressure `gamma_lap = gamma Lap(b+h)`:
/// `Bi s (-f_z w - gamma_lap) - (k |u0| w / h)(Bi div_u + sqrt(d^2 + s^2/2 + div_u^2))`.
#[allow(clippy::too_many_arguments)]
pub fn drucker_prager_residual(
    s: f64,
    w: f64,
    h: f64,
    k: f64,
    bi: f64,
    f_z: f64,
    gamma_lap: f64,
    u0_norm: f64,
    d_norm: f64,
    div_u: f64,
) -> f64 {
    let strain = (d_norm * d_norm + 0.5 * s * s + div_u * div_u).sqrt();
    bi * s * (-f_z * w - gamma_lap) - k * u0_norm * w / h * (bi * div_u + strain)
}

/// Newtonian viscous-regime velocity with slip, for shear forcing `a`.
pub fn newtonian_viscous_velocity(z: f64, b: f64, h: f64, re: f64, k: f64, a: [f64; 2]) -> Result<[f64; 2]> {
    if !(k > 0.0) {
        return Err(Error::Closure("viscous regime requires k > 0".into()));
    }
    check_depth(h)?;
    check_in_layer(z, b, h)?;
    let w = z - b - h;
    Ok(scale(a, re * 0.5 * (w * w - h * h) - h / k))
}

/// Depth-integrated Newtonian viscous-regime velocity: `-a (Re h^3/3 + h^2/k)`.
pub fn newtonian_discharge(h: f64, re: f64, k: f64, a: [f64; 2]) -> Result<[f64; 2]> {
    if !(k > 0.0) {
        return Err(Error::Closure("viscous regime requires k > 0".into()));
    }
    if h < 0.0 {
        return Err(Error::Closure(format!("negative depth {h}")));
    }
    Ok(scale(a, -(re * h * h * h / 3.0 + h * h / k)))
}

/// Shear magnitude of the power-law viscous profile at depth `w` below the
/// surface: the `a = 0` inverse of [`phi`] at `Re |a| w`.
pub fn powerlaw_shear(w: f64, re: f64, n: f64, a_norm: f64) -> Result<f64> {
    invert_phi(re * a_norm * w, 0.0, n)
}

fn check_viscous(h: f64, k: f64, n: f64) -> Result<()> {
    if !(k > 0.0) {
        return Err(Error::Closure("viscous regime requires k > 0".into()));
    }
    if !(n > 0.0) {
        return Err(Error::Closure(format!("power-law exponent must be positive, got {n}")));
    }
    if h < 0.0 {
        return Err(Error::Closure(format!("negative depth {h}")));
    }
    Ok(())
}

/// Shear prefactor `(2^((n-1)/2) Re |a|)^(1/n)`: the shear at depth `w`
/// below the surface is this times `w^(1/n)`.
fn powerlaw_shear_scale(re: f64, n: f64, a_norm: f64) -> f64 {
    (2f64.powf(0.5 * (n - 1.0)) * re * a_norm).powf(1.0 / n)
}

/// Power-law viscous-regime velocity at height `z` (with slip).
#[allow(clippy::too_many_arguments)]
pub fn powerlaw_viscous_velocity(z: f64, b: f64, h: f64, re: f64, k: f64, n: f64, a: [f64; 2]) -> Result<[f64; 2]> {
    check_viscous(h, k, n)?;
    check_depth(h)?;
    check_in_layer(z, b, h)?;
    let an = norm2(a);
    let slip = scale(a, -h / k);
    if an == 0.0 {
        return Ok(slip);
    }
    let e = (n + 1.0) / n;
    let w = (b + h - z).clamp(0.0, h);
    let rise = powerlaw_shear_scale(re, n, an) * n / (n + 1.0) * (h.powf(e) - w.powf(e));
    Ok(axpy(-rise / an, a, slip))
}

/// Depth-integrated power-law viscous-regime velocity:
/// `-a h^2/k - (a/|a|) C n/(2n+1) h^((2n+1)/n)` with `C` the shear prefactor.
pub fn powerlaw_discharge(h: f64, re: f64, k: f64, n: f64, a: [f64; 2]) -> Result<[f64; 2]> {
    check_viscous(h, k, n)?;
    let an = norm2(a);
    let slip = scale(a, -h * h / k);
    if h == 0.0 || an == 0.0 {
        return Ok(slip);
    }
    let shear = powerlaw_shear_scale(re, n, an) * n / (2.0 * n + 1.0) * h.powf((2.0 * n + 1.0) / n);
    Ok(axpy(-shear / an, a, slip))
}

/// [`powerlaw_discharge`] by adaptive quadrature of the inverted shear
/// profile, `-a h^2/k - (a/|a|) int_0^h w s(w) dw`; an independent route for
/// cross-checks.
pub fn powerlaw_discharge_quadrature(h: f64, re: f64, k: f64, n: f64, a: [f64; 2]) -> Result<[f64; 2]> {
    check_viscous(h, k, n)?;
    let an = norm2(a);
    let slip = scale(a, -h * h / k);
    if h == 0.0 || an == 0.0 {
        return Ok(slip);
    }
    let shear = integrate_adaptive(|w| Ok(w * powerlaw_shear(w, re, n, an)?), 0.0, h, QUAD_TOL)?;
    Ok(axpy(-shear / an, a, slip))
}

/// Viscoelastic viscous-regime velocity without the slip term:
/// `((Re/2) a ((z-b-h)^2 - h^2) - (theta/De) s_hz0 (z-b)) / (1-theta)`.
#[allow(clippy::too_many_arguments)]
pub fn viscoelastic_viscous_velocity(
    z: f64,
    b: f64,
    h: f64,
    re: f64,
    de: f64,
    theta: f64,
    a: [f64; 2],
    s_hz0: [f64; 2],
) -> Result<[f64; 2]> {
    check_theta(theta)?;
    check_depth(h)?;
    check_in_layer(z, b, h)?;
    let w = z - b - h;
    let ca = 0.5 * re * (w * w - h * h);
    let cs = -theta / de * (z - b);
    let inv = 1.0 / (1.0 - theta);
    Ok([inv * (ca * a[0] + cs * s_hz0[0]), inv * (ca * a[1] + cs * s_hz0[1])])
}

/// Depth integral of the viscoelastic viscous velocity including the slip
/// `-a h / k`: `-a h^2/k - (Re a h^3/3 + theta s_hz0 h^2/(2 De)) / (1-theta)`.
#[allow(clippy::too_many_arguments)]
pub fn viscoelastic_viscous_discharge(
    h: f64,
    re: f64,
    k: f64,
    de: f64,
    theta: f64,
    a: [f64; 2],
    s_hz0: [f64; 2],
) -> Result<[f64; 2]> {
    check_theta(theta)?;
    if !(k > 0.0) {
        return Err(Error::Closure("viscous regime requires k > 0".into()));
    }
    let inv = 1.0 / (1.0 - theta);
    let ca = -h * h / k - inv * re * h * h * h / 3.0;
    let cs = -inv * theta * h * h / (2.0 * de);
    Ok([ca * a[0] + cs * s_hz0[0], ca * a[1] + cs * s_hz0[1]])
}

/// Shear `d_z u` of the viscoelastic viscous velocity at the bed.
pub fn viscoelastic_viscous_bed_shear(h: f64, re: f64, de: f64, theta: f64, a: [f64; 2], s_hz0: [f64; 2]) -> [f64; 2] {
    let inv = 1.0 / (1.0 - theta);
    [inv * (-re * a[0] * h - theta / de * s_hz0[0]), inv * (-re * a[1] * h - theta / de * s_hz0[1])]
}

/// Evaluate `f` on `nz` equispaced heights spanning `[b, b+h]`.
pub fn sample_profile<F>(nz: usize, b: f64, h: f64, mut f: F) -> Result<Vec<ProfileSample>>
where
    F: FnMut(f64) -> Result<[f64; 2]>,
{
    if nz < 2 {
        return Err(Error::Closure("profile sampling needs at least two heights".into()));
    }
    (0..nz)
        .map(|l| {
            let z = b + h * l as f64 / (nz - 1) as f64;
            Ok(ProfileSample { z, u1: f(z)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    /// Composite 40-point Gauss-Legendre on 64 panels, independent of the
    /// library drivers.
    fn oracle_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let (x, w) = gauss_legendre(40);
        let panels = 64;
        let dz = (b - a) / panels as f64;
        let mut s = 0.0;
        for p in 0..panels {
            let c = a + (p as f64 + 0.5) * dz;
            for (xi, wi) in x.iter().zip(&w) {
                s += wi * f(c + 0.5 * dz * xi);
            }
        }
        0.5 * dz * s
    }

    fn bisect_phi(y: f64, a: f64, n: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0f64);
        while phi(hi, a, n) < y {
            hi *= 2.0;
        }
        for _ in 0..400 {
            let m = 0.5 * (lo + hi);
            if phi(m, a, n) < y {
                lo = m;
            } else {
                hi = m;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn parabolic_bed_and_surface_values() {
        let (re, k, h, b) = (10.0, 0.3, 0.1, 0.4);
        let u0 = [1.0, -2.0];
        let bed = parabolic_correction(b, b, h, re, k, u0).unwrap();
        let top = parabolic_correction(b + h, b, h, re, k, u0).unwrap();
        for c in 0..2 {
            assert!(close(bed[c], -re * k * h / 3.0 * u0[c], 1e-14));
            assert!(close(top[c], re * k * h / 6.0 * u0[c], 1e-14));
        }
        // slip velocity multiplier
        assert!(close(u0[0] + bed[0], u0[0] * (1.0 - h * re * k / 3.0), 1e-14));
    }

    #[test]
    fn parabolic_has_zero_mean_and_linear_stress() {
        let (re, k, h, b) = (7.0, 0.2, 0.3, -0.1);
        let m = oracle_integral(|z| parabolic_correction(z, b, h, re, k, [1.0, 0.0]).unwrap()[0], b, b + h);
        assert!(m.abs() < 1e-15);
        let z = b + 0.37 * h;
        let d = 1e-6;
        let dz = (parabolic_correction(z + d, b, h, re, k, [1.0, 0.0]).unwrap()[0]
            - parabolic_correction(z - d, b, h, re, k, [1.0, 0.0]).unwrap()[0])
            / (2.0 * d);
        assert!(close(dz / re, k * (b + h - z) / h, 1e-8));
    }

    #[test]
    fn parabolic_rejects_dry_layer() {
        assert!(parabolic_correction(0.0, 0.0, 0.0, 1.0, 1.0, [1.0, 0.0]).is_err());
    }

    #[test]
    fn viscoelastic_correction_shear_matches_stress_balance() {
        let (re, k, de, th, h, b) = (5.0, 0.4, 0.7, 0.3, 0.2, 0.05);
        let u0 = [0.6, -0.2];
        let s = [0.3, 0.9];
        let f = |z: f64| viscoelastic_correction(z, b, h, re, k, de, th, u0, s).unwrap();
        for frac in [0.1, 0.5, 0.8] {
            let z = b + frac * h;
            let d = 1e-6;
            let (p, m) = (f(z + d), f(z - d));
            for c in 0..2 {
                let dz = (p[c] - m[c]) / (2.0 * d);
                let want = (re * k * u0[c] * (b + h - z) / h - th / de * s[c]) / (1.0 - th);
                assert!(close(dz, want, 1e-7), "{dz} vs {want}");
            }
        }
        for c in 0..2 {
            let m = oracle_integral(|z| f(z)[c], b, b + h);
            assert!(m.abs() < 1e-14);
        }
    }

    #[test]
    fn viscoelastic_correction_pure_stress_example() {
        // k=0, s=(1,0), theta=0.5, De=1, h=1, b=0, z=1: (1/0.5) * (-0.25 * (2-1)) = -0.5
        let v = viscoelastic_correction(1.0, 0.0, 1.0, 3.0, 0.0, 1.0, 0.5, [0.0; 2], [1.0, 0.0]).unwrap();
        assert!(close(v[0], -0.5, 1e-15) && v[1] == 0.0);
        assert!(viscoelastic_correction(0.5, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, [0.0; 2], [0.0; 2]).is_err());
    }

    #[test]
    fn viscoelastic_correction_small_theta_is_parabolic() {
        let (re, k, h, b) = (4.0, 0.5, 0.3, 0.0);
        let u0 = [1.0, 2.0];
        for frac in [0.0, 0.25, 0.6, 1.0] {
            let z = b + frac * h;
            let v = viscoelastic_correction(z, b, h, re, k, 1.0, 1e-12, u0, [0.0; 2]).unwrap();
            let p = parabolic_correction(z, b, h, re, k, u0).unwrap();
            for c in 0..2 {
                assert!(close(v[c], p[c], 1e-11));
            }
        }
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(2.0, 0.0, 3.0), 4.0);
        assert_eq!(phi(0.0, 1.0, 0.5), 0.0);
        assert_eq!(phi(1.7, 3.0, 1.0), 1.7);
    }

    #[test]
    fn invert_phi_examples() {
        let x = invert_phi(4.0, 0.0, 3.0).unwrap();
        assert!(close(x, bisect_phi(4.0, 0.0, 3.0), 1e-13));
        assert!(close(x, 2.0, 1e-13));
        assert_eq!(invert_phi(2.5, 0.7, 1.0).unwrap(), 2.5);
        assert!(invert_phi(-1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn invert_phi_bound_needs_large_strain() {
        // phi_0(1) = 0.5 for n = 3, so the inverse of 0.5 exceeds 0.5.
        let x = invert_phi(0.5, 0.0, 3.0).unwrap();
        assert!(close(x, 1.0, 1e-13));
    }

    #[test]
    fn invert_phi_round_trip_1000_draws() {
        use proptest::strategy::ValueTree;
        use proptest::test_runner::TestRunner;
        let mut runner = TestRunner::deterministic();
        let strat = (0.0f64..10.0, 0.0f64..5.0, 0.3f64..3.0);
        for _ in 0..1000 {
            let (x, a, n) = strat.new_tree(&mut runner).unwrap().current();
            let y = phi(x, a, n);
            let back = invert_phi(y, a, n).unwrap();
            assert!((back - x).abs() <= 1e-10 * x.max(1.0), "x={x} a={a} n={n} back={back}");
        }
    }

    #[test]
    fn newtonian_discharge_examples() {
        let q = newtonian_discharge(1.0, 3.0, 2.0, [1.0, 0.0]).unwrap();
        assert_eq!(q, [-1.5, 0.0]);
        assert_eq!(newtonian_discharge(0.0, 3.0, 2.0, [1.0, 1.0]).unwrap(), [0.0, 0.0]);
        assert!(newtonian_discharge(1.0, 3.0, 0.0, [1.0, 0.0]).is_err());
    }

    #[test]
    fn newtonian_discharge_matches_profile_quadrature() {
        let (h, re, k, b) = (0.4, 6.0, 1.3, 0.2);
        let a = [0.7, -0.3];
        let q = newtonian_discharge(h, re, k, a).unwrap();
        for c in 0..2 {
            let i = oracle_integral(|z| newtonian_viscous_velocity(z, b, h, re, k, a).unwrap()[c], b, b + h);
            assert!(close(q[c], i, 1e-12));
        }
        let slip = newtonian_viscous_velocity(b, b, h, re, k, a).unwrap();
        assert!(close(slip[0], -a[0] * h / k, 1e-14));
    }

    fn powerlaw_closed_form(h: f64, re: f64, k: f64, n: f64, a: [f64; 2]) -> [f64; 2] {
        let an = norm2(a);
        let c = 2f64.powf(0.5 * (n - 1.0)) * re * an;
        let shear = c.powf(1.0 / n) * n / (2.0 * n + 1.0) * h.powf((2.0 * n + 1.0) / n);
        [-a[0] * h * h / k - a[0] / an * shear, -a[1] * h * h / k - a[1] / an * shear]
    }

    #[test]
    fn powerlaw_discharge_reduces_to_newtonian() {
        for (h, re, k) in [(1.0, 3.0, 2.0), (0.05, 40.0, 0.7), (2.0, 0.1, 9.0)] {
            let a = [0.8, -1.1];
            let p = powerlaw_discharge(h, re, k, 1.0, a).unwrap();
            let q = newtonian_discharge(h, re, k, a).unwrap();
            for c in 0..2 {
                assert!((p[c] - q[c]).abs() <= 1e-12 * q[c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn powerlaw_discharge_n2_without_slip() {
        // k -> infinity removes the slip part.
        let n: f64 = 2.0;
        let d = powerlaw_discharge(1.0, 1.0, 1e300, n, [1.0, 0.0]).unwrap();
        let want = (2f64.sqrt()).powf(0.5) * n / (2.0 * n + 1.0);
        assert!(close(-d[0], want, 1e-12));
    }

    #[test]
    fn powerlaw_velocity_integrates_to_discharge() {
        let (h, re, k, n, b) = (0.6, 2.0, 1.5, 0.6, 0.1);
        let a = [0.4, 0.3];
        let q = powerlaw_discharge(h, re, k, n, a).unwrap();
        for c in 0..2 {
            let i = oracle_integral(|z| powerlaw_viscous_velocity(z, b, h, re, k, n, a).unwrap()[c], b, b + h);
            assert!(close(q[c], i, 1e-9), "{} vs {}", q[c], i);
        }
    }

    #[test]
    fn powerlaw_velocity_matches_shear_quadrature() {
        let (h, re, k, n, b) = (0.7, 3.0, 1.2, 1.8, -0.2);
        let a = [-0.5, 0.9];
        let an = norm2(a);
        for frac in [0.0, 0.2, 0.6, 1.0] {
            let z = b + frac * h;
            let v = powerlaw_viscous_velocity(z, b, h, re, k, n, a).unwrap();
            let rise = integrate_adaptive(|zz| powerlaw_shear(b + h - zz, re, n, an), b, z, QUAD_TOL).unwrap();
            for c in 0..2 {
                assert!(close(v[c], -a[c] * h / k - a[c] / an * rise, 1e-12), "{frac}");
            }
        }
    }

    #[test]
    fn bingham_examples() {
        let (b, h, re, k) = (0.0, 0.5, 2.0, 0.4);
        assert!(bingham_profile(0.2, b, h, re, k, [0.0, 0.0], 1.0, 0.0).is_err());
        assert!(bingham_profile(0.2, b, h, re, k, [2.0, 0.0], 1.0, 0.0).is_err());
        let (s1, _, _) = bingham_terms(b + h, b, h, re * k * 1.0);
        assert_eq!(s1, 1.0);
        let v = bingham_profile(0.3, b, h, re, k, [0.3, 0.4], 0.5, 0.2).unwrap();
        // direction follows u0
        assert!((v[0] * 0.4 - v[1] * 0.3).abs() < 1e-14);
    }

    #[test]
    fn bingham_matches_hand_evaluation() {
        let (b, h, re, k) = (0.1, 0.5, 2.0, 0.4);
        let u0 = [0.6, 0.0];
        let z = 0.35;
        let r = re * k * 0.6;
        let t = r * (b + h - z) / (2f64.sqrt() * h);
        let want = 0.5f64.hypot(0.2) * h / r
            * (2.0 * (1.0 - t * t).sqrt() + (1.0 - r * r / 2.0).sqrt() + 2f64.sqrt() / r * (r / 2f64.sqrt()).asin());
        let v = bingham_profile(z, b, h, re, k, u0, 0.5, 0.2).unwrap();
        assert!(close(v[0], want, 1e-14));
    }

    #[test]
    fn drucker_prager_divergence_free_closed_form() {
        let (u0, h, k, bi, f_z, d) = ([0.3, 0.4], 0.2, 0.1, 0.8, -1.0, 0.7);
        let s = drucker_prager_shear(u0, h, k, bi, f_z, d, 0.0).unwrap();
        let r = h * bi * f_z / (k * 0.5);
        let want = d / (r * r - 0.5).sqrt();
        assert!(close(s, want, 1e-14));
    }

    #[test]
    fn drucker_prager_degenerate_yield() {
        assert!(drucker_prager_shear([1.0, 0.0], 0.2, 0.1, 0.0, -1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn drucker_prager_roots_against_discriminant() {
        let (u0, h, k, bi, f_z, d, div) = ([0.5, 0.0], 0.3, 0.2, 0.6, -1.0, 0.4, -0.3);
        let [qa, qb, qc] = drucker_prager_coefficients(u0, h, k, bi, f_z, d, div).unwrap();
        let disc = qb * qb - 4.0 * qa * qc;
        let r1 = (-qb + disc.sqrt()) / (2.0 * qa);
        let r2 = (-qb - disc.sqrt()) / (2.0 * qa);
        let s = drucker_prager_shear(u0, h, k, bi, f_z, d, div).unwrap();
        assert!(close(s, r1, 1e-12) || close(s, r2, 1e-12));
        // the selected root also solves the unsquared relation at every depth
        for w in [0.01, 0.1, 0.29] {
            let res = drucker_prager_residual(s, w, h, k, bi, f_z, 0.0, 0.5, d, div);
            assert!(res.abs() < 1e-12, "{res}");
        }
    }

    #[test]
    fn viscoelastic_viscous_small_theta_is_newtonian() {
        let (b, h, re, k) = (0.0, 0.4, 3.0, 2.0);
        let a = [1.0, -0.5];
        for frac in [0.0, 0.3, 1.0] {
            let z = b + frac * h;
            let v = viscoelastic_viscous_velocity(z, b, h, re, 1.0, 0.0, a, [0.7, 0.1]).unwrap();
            let n = newtonian_viscous_velocity(z, b, h, re, k, a).unwrap();
            for c in 0..2 {
                assert!(close(v[c] - a[c] * h / k, n[c], 1e-14));
            }
        }
    }

    #[test]
    fn viscoelastic_viscous_discharge_matches_quadrature() {
        let (b, h, re, k, de, th) = (0.2, 0.3, 4.0, 1.5, 0.8, 0.4);
        let a = [0.5, 0.2];
        let s = [-0.3, 0.6];
        let q = viscoelastic_viscous_discharge(h, re, k, de, th, a, s).unwrap();
        for c in 0..2 {
            let i = oracle_integral(
                |z| viscoelastic_viscous_velocity(z, b, h, re, de, th, a, s).unwrap()[c] - a[c] * h / k,
                b,
                b + h,
            );
            assert!(close(q[c], i, 1e-13));
        }
        // stress-free surface: total shear stress vanishes at the top
        let d = 1e-6;
        let f = |z: f64| viscoelastic_viscous_velocity(z, b, h, re, de, th, a, s).unwrap();
        let dz = (f(b + h) [0] - f(b + h - d)[0]) / d;
        assert!(((1.0 - th) * dz + th / de * s[0]).abs() < 1e-5);
        let bed = viscoelastic_viscous_bed_shear(h, re, de, th, a, s);
        let dzb = (f(b + d)[0] - f(b)[0]) / d;
        assert!(close(bed[0], dzb, 1e-5));
    }

    #[test]
    fn powerlaw_inertial_quantities_reduce_to_newtonian() {
        let (h, re_k, u0n) = (0.2, 3.0, 0.7);
        assert!(close(powerlaw_effective_depth(h, re_k, u0n, 1.0, 0.4).unwrap(), h, 1e-15));
        let m = powerlaw_bed_correction(h, re_k, u0n, 1.0, 0.4).unwrap();
        assert!(close(m, re_k * u0n * h / 3.0, 1e-14));
    }

    #[test]
    fn powerlaw_depth_terms_match_separate_routes() {
        for (n, a) in [(1.7, 1.3), (0.6, 0.8), (1.0, 0.0)] {
            let (h, re_k, un) = (0.3, 2.0, 0.4);
            let (he, m) = powerlaw_depth_terms(h, re_k, un, n, a).unwrap();
            assert!(close(he, powerlaw_effective_depth(h, re_k, un, n, a).unwrap(), 1e-14));
            assert!(close(m, powerlaw_bed_correction(h, re_k, un, n, a).unwrap(), 1e-14));
        }
    }

    #[test]
    fn powerlaw_correction_zero_mean_and_bed_value() {
        let (b, h, re_k, n, a) = (0.1, 0.3, 2.0, 1.7, 1.3);
        let u0 = [0.5, -0.4];
        let m = oracle_integral(|z| powerlaw_correction(z, b, h, re_k, u0, n, a).unwrap()[0], b, b + h);
        assert!(m.abs() < 1e-12);
        let bed = powerlaw_correction(b, b, h, re_k, u0, n, a).unwrap();
        let mb = powerlaw_bed_correction(h, re_k, norm2(u0), n, a).unwrap();
        assert!(close(norm2(bed), mb, 1e-14));
    }

    #[test]
    fn shear_thinning_admissibility() {
        assert!(powerlaw_effective_depth(0.1, 10.0, 0.2, 0.5, 0.0).is_err());
        assert!(powerlaw_effective_depth(0.1, 10.0, 0.2, 0.5, 1.0).is_err());
        assert!(powerlaw_effective_depth(0.1, 10.0, 0.1, 0.5, 1.0).is_ok());
    }

    #[test]
    fn sample_profile_spans_layer() {
        let s = sample_profile(5, 1.0, 2.0, |z| Ok([z, 0.0])).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].z, 1.0);
        assert_eq!(s[4].z, 3.0);
    }

    proptest! {
        #[test]
        fn phi_is_monotone(x in 0.0f64..20.0, dx in 1e-6f64..1.0, a in 0.0f64..5.0, n in 0.05f64..4.0) {
            prop_assert!(phi(x + dx, a, n) >= phi(x, a, n));
        }

        #[test]
        fn invert_phi_matches_bisection(y in 0.0f64..50.0, a in 0.0f64..5.0, n in 0.3f64..3.0) {
            let x = invert_phi(y, a, n).unwrap();
            prop_assert!((x - bisect_phi(y, a, n)).abs() <= 1e-10 * x.max(1.0));
            prop_assert!((phi(x, a, n) - y).abs() <= 1e-12 * y.max(1.0));
        }

        #[test]
        fn inverse_bounded_by_argument_for_large_strain(y in 0.0f64..50.0, a in 1.0f64..5.0, n in 1.0f64..4.0) {
            let x = invert_phi(y, a, n).unwrap();
            prop_assert!(x >= 0.0 && x <= y * (1.0 + 1e-14));
        }

        #[test]
        fn powerlaw_discharge_matches_closed_form(
            h in 0.01f64..2.0, re in 0.1f64..20.0, k in 0.1f64..10.0, n in 0.3f64..3.0,
            ax in -2.0f64..2.0, ay in -2.0f64..2.0,
        ) {
            prop_assume!(ax.hypot(ay) > 1e-3);
            let a = [ax, ay];
            let q = powerlaw_discharge_quadrature(h, re, k, n, a).unwrap();
            let c = powerlaw_discharge(h, re, k, n, a).unwrap();
            let o = powerlaw_closed_form(h, re, k, n, a);
            for i in 0..2 {
                prop_assert!((c[i] - o[i]).abs() <= 1e-13 * o[i].abs().max(1e-300) + 1e-300);
            }
            for i in 0..2 {
                prop_assert!((q[i] - c[i]).abs() <= 1e-10 * c[i].abs().max(1e-300) + 1e-300, "{} vs {}", q[i], c[i]);
            }
        }

        #[test]
        fn parabolic_mean_zero(re in 0.1f64..50.0, k in 0.0f64..2.0, h in 0.01f64..3.0, b in -2.0f64..2.0, u in -3.0f64..3.0) {
            let m = oracle_integral(|z| parabolic_correction(z, b, h, re, k, [u, 0.0]).unwrap()[0], b, b + h);
            let s = re * k * h * h * u.abs();
            prop_assert!(m.abs() <= 1e-13 * s.max(1.0));
        }

        #[test]
        fn viscoelastic_mean_zero(
            re in 0.1f64..50.0, k in 0.0f64..2.0, h in 0.01f64..3.0, b in -2.0f64..2.0,
            de in 0.1f64..5.0, th in 0.0f64..0.95, u in -3.0f64..3.0, s in -3.0f64..3.0,
        ) {
            let m = oracle_integral(|z| viscoelastic_correction(z, b, h, re, k, de, th, [u, 0.0], [s, 0.0]).unwrap()[0], b, b + h);
            let scale = (re * k * h * h * u.abs() + th / de * s.abs() * h * h) / (1.0 - th);
            prop_assert!(m.abs() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn bingham_arguments_stay_in_unit_interval(
            frac in 0.0f64..=1.0, h in 0.01f64..2.0, re in 0.1f64..10.0, k in 0.01f64..2.0, t in 0.0f64..0.999,
        ) {
            let un = t * std::f64::consts::SQRT_2 / (re * k);
            let (s1, s2, asn) = bingham_terms(frac * h, 0.0, h, re * k * un);
            prop_assert!((0.0..=1.0).contains(&s1));
            prop_assert!((0.0..=1.0).contains(&s2));
            prop_assert!((0.0..=1.0).contains(&asn));
        }

        #[test]
        fn drucker_prager_root_residual(
            ux in 0.05f64..2.0, h in 0.05f64..1.0, k in 0.05f64..1.0, bi in 0.05f64..2.0,
            d in 0.0f64..2.0, div in -1.0f64..1.0,
        ) {
            match drucker_prager_shear([ux, 0.0], h, k, bi, -1.0, d, div) {
                Ok(s) => {
                    let [qa, qb, qc] = drucker_prager_coefficients([ux, 0.0], h, k, bi, -1.0, d, div).unwrap();
                    let mag = (qa * s * s).abs() + (qb * s).abs() + qc.abs();
                    prop_assert!((qa * s * s + qb * s + qc).abs() <= 1e-12 * mag.max(f64::MIN_POSITIVE));
                    prop_assert!(s >= 0.0);
                }
                Err(Error::Closure(_)) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
