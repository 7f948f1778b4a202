//! Gauss-Legendre quadrature: fixed rules and an adaptive composite driver.

use std::sync::OnceLock;

use crate::{Error, Result};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(P_n(t), P_n'(t))` by the three-term recurrence.
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Cached 16-point rule.
pub fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// 16-point Gauss-Legendre integral of `f` over `[a, b]`.
pub fn integrate_gl16<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let (x, w) = gl16();
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        s += wi * f(c + r * xi);
    }
    s * r
}

/// Fallible variant of [`integrate_gl16`].
pub fn try_integrate_gl16<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64) -> Result<f64> {
    let (x, w) = gl16();
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        s += wi * f(c + r * xi)?;
    }
    Ok(s * r)
}

/// Adaptive composite 16-point Gauss-Legendre quadrature with interval
/// bisection until `|I_whole - I_halves| <= tol * max(1, |I|)`.
pub fn integrate_adaptive<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let whole = try_integrate_gl16(&mut f, a, b)?;
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    adapt(&mut f, a, b, whole, tol, scale, 0)
}

const MAX_DEPTH: usize = 48;

fn adapt<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    scale: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let left = try_integrate_gl16(&mut *f, a, m)?;
    let right = try_integrate_gl16(&mut *f, m, b)?;
    let sum = left + right;
    if (sum - whole).abs() <= tol * scale.max(sum.abs()) || (b - a).abs() <= 1e-300 {
        return Ok(sum);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Closure(format!("adaptive quadrature did not converge on [{a}, {b}]")));
    }
    Ok(adapt(f, a, m, left, tol, scale, depth + 1)? + adapt(f, m, b, right, tol, scale, depth + 1)?)
}
