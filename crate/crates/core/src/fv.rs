//! Finite-volume kernel for the hyperbolic core: MUSCL reconstruction,
//! hydrostatic reconstruction of the bed, and HLL fluxes with passive upwind
//! transport of the conformation components.

use rayon::prelude::*;

use crate::geometry::Grid2D;
use crate::{Error, Result};

/// Slope limiter of the MUSCL reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Limiter {
    #[default]
    Minmod,
    /// Monotonized central.
    Mc,
    /// Unlimited central slopes (for smooth-solution studies).
    None,
}

impl std::str::FromStr for Limiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minmod" => Ok(Limiter::Minmod),
            "mc" => Ok(Limiter::Mc),
            "none" | "unlimited" => Ok(Limiter::None),
            _ => Err(Error::Config(format!("unknown limiter '{s}' (expected minmod, mc or none)"))),
        }
    }
}

#[inline]
fn minmod2(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Limited cell increment from the backward and forward differences.
#[inline]
pub(crate) fn limited_slope(dl: f64, dr: f64, lim: Limiter) -> f64 {
    match lim {
        Limiter::Minmod => minmod2(dl, dr),
        Limiter::Mc => {
            if dl * dr <= 0.0 {
                0.0
            } else {
                let c = 0.5 * (dl + dr);
                c.signum() * c.abs().min(2.0 * dl.abs()).min(2.0 * dr.abs())
            }
        }
        Limiter::None => 0.5 * (dl + dr),
    }
}

/// Number of conformation components carried: xx, xy, yy, hz_x, hz_y, zz.
pub(crate) const NS: usize = 6;

/// Identity conformation in the packed layout.
pub(crate) const S_ID: [f64; NS] = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0];

/// Cell data needed by the hyperbolic operator.
pub(crate) struct FvInput<'a> {
    pub grid: &'a Grid2D,
    pub h: &'a [f64],
    pub b: &'a [f64],
    pub u: &'a [[f64; 2]],
    pub sigma: Option<&'a [[f64; NS]]>,
    /// Effective gravity normal to the mean plane (`-f_z`).
    pub g: f64,
    /// Elastic coefficient `theta / (Re De)`; zero disables the stress flux.
    pub elastic: f64,
    /// FENE extensibility applied to the elastic flux, if any.
    pub fene_b: Option<f64>,
    pub limiter: Limiter,
}

/// Cell rates produced by the hyperbolic operator.
pub(crate) struct FvOutput {
    pub dh: Vec<f64>,
    pub dq: Vec<[f64; 2]>,
    /// Rates of `h sigma` (transport only).
    pub dconf: Option<Vec<[f64; NS]>>,
    /// Largest wave-speed bound over all faces.
    pub max_speed: f64,
}

/// Reconstructed one-sided face state.
#[derive(Debug, Clone, Copy)]
struct Side {
    h: f64,
    b: f64,
    u: [f64; 2],
    s: [f64; NS],
}

/// Per-cell reconstruction along one direction: values at the low and high face.
struct Recon {
    lo: Vec<Side>,
    hi: Vec<Side>,
}

fn reconstruct(inp: &FvInput, dir: usize) -> Recon {
    let g = inp.grid;
    let n = g.len();
    let (di, dj) = if dir == 0 { (1, 0) } else { (0, 1) };
    let pairs: Vec<(Side, Side)> = (0..n)
        .into_par_iter()
        .map(|c| {
            let (i, j) = g.ij(c);
            let l = g.nb(i, j, -di, -dj);
            let r = g.nb(i, j, di, dj);
            let lim = inp.limiter;
            let slope = |f: &dyn Fn(usize) -> f64| limited_slope(f(c) - f(l), f(r) - f(c), lim);
            let h = inp.h[c];
            let eta = |k: usize| inp.h[k] + inp.b[k];
            let dh = slope(&|k| inp.h[k]);
            let deta = slope(&eta);
            let du0 = slope(&|k| inp.u[k][0]);
            let du1 = slope(&|k| inp.u[k][1]);
            let (hl, hh) = (h - 0.5 * dh, h + 0.5 * dh);
            let (el, eh) = (eta(c) - 0.5 * deta, eta(c) + 0.5 * deta);
            let u = inp.u[c];
            let (mut sl, mut sh) = (S_ID, S_ID);
            if let Some(sig) = inp.sigma {
                for m in 0..NS {
                    let d = limited_slope(sig[c][m] - sig[l][m], sig[r][m] - sig[c][m], lim);
                    sl[m] = sig[c][m] - 0.5 * d;
                    sh[m] = sig[c][m] + 0.5 * d;
                }
            }
            (
                Side { h: hl, b: el - hl, u: [u[0] - 0.5 * du0, u[1] - 0.5 * du1], s: sl },
                Side { h: hh, b: eh - hh, u: [u[0] + 0.5 * du0, u[1] + 0.5 * du1], s: sh },
            )
        })
        .collect();
    let (lo, hi) = pairs.into_iter().unzip();
    Recon { lo, hi }
}

/// Numerical flux through one face, in the global frame.
#[derive(Debug, Clone, Copy, Default)]
struct FaceFlux {
    h: f64,
    q: [f64; 2],
    s: [f64; NS],
    /// Hydrostatic corrections of the normal momentum for the low and high cell.
    corr_lo: f64,
    corr_hi: f64,
    speed: f64,
}

fn fene_factor(s: &[f64; NS], b: Option<f64>) -> Result<f64> {
    match b {
        None => Ok(1.0),
        Some(b) => {
            let tr = s[0] + s[2] + s[5];
            if tr >= b {
                return Err(Error::Closure(format!("conformation trace {tr} reached the extensibility bound {b}")));
            }
            Ok(1.0 / (1.0 - tr / b))
        }
    }
}

/// Physical flux and wave speed of a one-sided state for normal direction `dir`.
fn physical(
    h: f64,
    u: [f64; 2],
    s: &[f64; NS],
    dir: usize,
    g: f64,
    elastic: f64,
    fene: Option<f64>,
) -> Result<([f64; 3], f64)> {
    let t = 1 - dir;
    let un = u[dir];
    let ut = u[t];
    let (snn, snt, szz) = if dir == 0 { (s[0], s[1], s[5]) } else { (s[2], s[1], s[5]) };
    let mut c2 = g * h;
    let mut pn = 0.5 * g * h * h;
    let mut pt = 0.0;
    if elastic != 0.0 {
        let f = fene_factor(s, fene)?;
        let e = elastic * f;
        pn -= e * h * (snn - szz);
        pt -= e * h * snt;
        c2 += e * (3.0 * snn.abs() + szz.abs());
    }
    let c = c2.max(0.0).sqrt();
    let mut fx = [0.0; 3];
    fx[0] = h * un;
    fx[1] = h * un * un + pn;
    fx[2] = h * un * ut + pt;
    Ok((fx, c))
}

fn hll(lo: &Side, hi: &Side, dir: usize, g: f64, elastic: f64, fene: Option<f64>) -> Result<FaceFlux> {
    let bstar = lo.b.max(hi.b);
    let hl = (lo.h + lo.b - bstar).max(0.0);
    let hr = (hi.h + hi.b - bstar).max(0.0);
    let t = 1 - dir;
    let ul = if hl > 0.0 { lo.u } else { [0.0; 2] };
    let ur = if hr > 0.0 { hi.u } else { [0.0; 2] };
    let (fl, cl) = physical(hl, ul, &lo.s, dir, g, elastic, fene)?;
    let (fr, cr) = physical(hr, ur, &hi.s, dir, g, elastic, fene)?;
    let sl = (ul[dir] - cl).min(ur[dir] - cr);
    let sr = (ul[dir] + cl).max(ur[dir] + cr);
    let ql = [hl, hl * ul[dir], hl * ul[t]];
    let qr = [hr, hr * ur[dir], hr * ur[t]];
    let mut f = [0.0; 3];
    if hl == 0.0 && hr == 0.0 {
        // dry face
    } else if sl >= 0.0 {
        f = fl;
    } else if sr <= 0.0 {
        f = fr;
    } else {
        for m in 0..3 {
            f[m] = (sr * fl[m] - sl * fr[m] + sl * sr * (qr[m] - ql[m])) / (sr - sl);
        }
    }
    let mut out = FaceFlux { h: f[0], ..Default::default() };
    out.q[dir] = f[1];
    out.q[t] = f[2];
    let up = if f[0] >= 0.0 { &lo.s } else { &hi.s };
    for m in 0..NS {
        out.s[m] = f[0] * up[m];
    }
    out.corr_lo = 0.5 * g * (lo.h * lo.h - hl * hl);
    out.corr_hi = 0.5 * g * (hi.h * hi.h - hr * hr);
    out.speed = sl.abs().max(sr.abs());
    Ok(out)
}

/// Flux divergence plus hydrostatic topography source for `h`, `h u` and `h sigma`.
pub(crate) fn hyperbolic_rates(inp: &FvInput) -> Result<FvOutput> {
    let grid = inp.grid;
    let n = grid.len();
    let mut dh = vec![0.0; n];
    let mut dq = vec![[0.0; 2]; n];
    let mut ds = inp.sigma.map(|_| vec![[0.0; NS]; n]);
    let mut max_speed: f64 = 0.0;
    for dir in 0..2 {
        let rec = reconstruct(inp, dir);
        let (nf_i, nf_j) = if dir == 0 { (grid.nx + 1, grid.ny) } else { (grid.nx, grid.ny + 1) };
        let dx = if dir == 0 { grid.dx } else { grid.dy };
        // Face (fi, fj) lies on the low side of cell (fi, fj) along `dir`.
        let faces: Vec<FaceFlux> = (0..nf_i * nf_j)
            .into_par_iter()
            .map(|f| {
                let (fi, fj) = (f % nf_i, f / nf_i);
                let (lo_c, hi_c) = if dir == 0 {
                    (grid.idx(grid.wrap_x(fi as isize - 1), fj), grid.idx(grid.wrap_x(fi as isize), fj))
                } else {
                    (grid.idx(fi, grid.wrap_y(fj as isize - 1)), grid.idx(fi, grid.wrap_y(fj as isize)))
                };
                hll(&rec.hi[lo_c], &rec.lo[hi_c], dir, inp.g, inp.elastic, inp.fene_b)
            })
            .collect::<Result<_>>()?;
        let face_idx = |i: usize, j: usize| i + nf_i * j;
        let inv = 1.0 / dx;
        for c in 0..n {
            let (i, j) = grid.ij(c);
            let (flo, fhi) = if dir == 0 { (face_idx(i, j), face_idx(i + 1, j)) } else { (face_idx(i, j), face_idx(i, j + 1)) };
            let (a, z) = (&faces[flo], &faces[fhi]);
            max_speed = max_speed.max(a.speed).max(z.speed);
            dh[c] -= (z.h - a.h) * inv;
            dq[c][0] -= (z.q[0] - a.q[0]) * inv;
            dq[c][1] -= (z.q[1] - a.q[1]) * inv;
            // hydrostatic corrections and centered bed source
            let (lo, hi) = (&rec.lo[c], &rec.hi[c]);
            let src = -inp.g * 0.5 * (lo.h + hi.h) * (hi.b - lo.b);
            dq[c][dir] -= (z.corr_lo - a.corr_hi - src) * inv;
            if let Some(ds) = ds.as_mut() {
                for m in 0..NS {
                    ds[c][m] -= (z.s[m] - a.s[m]) * inv;
                }
            }
        }
    }
    Ok(FvOutput { dh, dq, dconf: ds, max_speed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Boundary;

    #[test]
    fn limiter_values() {
        assert_eq!(limited_slope(1.0, 2.0, Limiter::Minmod), 1.0);
        assert_eq!(limited_slope(-1.0, 2.0, Limiter::Minmod), 0.0);
        assert_eq!(limited_slope(1.0, 3.0, Limiter::Mc), 2.0);
        assert_eq!(limited_slope(1.0, 5.0, Limiter::Mc), 2.0);
        assert_eq!(limited_slope(-1.0, 2.0, Limiter::None), 0.5);
    }

    #[test]
    fn lake_at_rest_has_zero_rates() {
        let g = Grid2D::new(16, 5, 0.1, 0.1, Boundary::Periodic, Boundary::Outflow).unwrap();
        let b: Vec<f64> = g.map_cells(|i, j| 0.3 * (0.7 * i as f64).sin() + 0.1 * (j as f64).cos());
        let h: Vec<f64> = b.iter().map(|b| 1.0 - b).collect();
        let u = vec![[0.0; 2]; g.len()];
        for lim in [Limiter::Minmod, Limiter::Mc, Limiter::None] {
            let out = hyperbolic_rates(&FvInput {
                grid: &g,
                h: &h,
                b: &b,
                u: &u,
                sigma: None,
                g: 9.81,
                elastic: 0.0,
                fene_b: None,
                limiter: lim,
            })
            .unwrap();
            for c in 0..g.len() {
                assert!(out.dh[c].abs() < 1e-13);
                assert!(out.dq[c][0].abs() < 1e-12 && out.dq[c][1].abs() < 1e-12, "{:?}", out.dq[c]);
            }
        }
    }

    #[test]
    fn periodic_mass_rates_sum_to_zero() {
        let g = Grid2D::new(12, 7, 0.1, 0.2, Boundary::Periodic, Boundary::Periodic).unwrap();
        let h: Vec<f64> = g.map_cells(|i, j| 1.0 + 0.2 * (i as f64).sin() * (j as f64 * 0.9).cos());
        let b = vec![0.0; g.len()];
        let u: Vec<[f64; 2]> = g.map_cells(|i, j| [(i as f64 * 0.3).cos(), 0.5 * (j as f64).sin()]);
        let out = hyperbolic_rates(&FvInput {
            grid: &g,
            h: &h,
            b: &b,
            u: &u,
            sigma: None,
            g: 1.0,
            elastic: 0.0,
            fene_b: None,
            limiter: Limiter::Minmod,
        })
        .unwrap();
        let s: f64 = out.dh.iter().sum();
        assert!(s.abs() < 1e-12);
    }
}
