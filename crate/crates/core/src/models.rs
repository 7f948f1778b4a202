//! Semi-discrete right-hand sides of every reduced model.
//!
//! Momentum models share one finite-volume core (HLL fluxes with hydrostatic
//! reconstruction, the elastic stress carried inside the flux) plus cell
//! sources for slope forcing, surface tension, viscosity, friction and the
//! conformation stretch. Lubrication models are single conservation laws for
//! `h` whose face discharge comes from the closures.
//!
//! Every rate is a full rate. The parts the stepper integrates exactly are
//! reported separately in [`StiffRates`]: friction acts as `-lambda q`, and
//! relaxation as `-r (h sigma - h I)`.

use crate::closures::{
    newtonian_discharge, norm2, powerlaw_depth_terms, powerlaw_discharge,
    viscoelastic_viscous_discharge,
};
use crate::fv::{self, FvInput, NS, S_ID};
pub use crate::fv::Limiter;
use crate::geometry::{Forcing, Grid2D, Topography};
use crate::state::{Closure, ConformationState, Model, RheologyParams, ShallowState, H_DRY};
use crate::{Error, Result};

/// Grid, bed and forcing shared by every evaluation.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid2D,
    pub topo: Topography,
    pub forcing: Forcing,
    pub limiter: Limiter,
}

impl Setup {
    pub fn new(grid: Grid2D, topo: Topography, forcing: Forcing) -> Result<Self> {
        grid.check_len(topo.b.len())?;
        Ok(Self { grid, topo, forcing, limiter: Limiter::default() })
    }

    pub fn with_limiter(mut self, limiter: Limiter) -> Self {
        self.limiter = limiter;
        self
    }

    /// Effective gravity normal to the mean plane.
    pub fn g_normal(&self) -> f64 {
        self.forcing.g_normal()
    }
}

/// Rates the stepper integrates exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffRates {
    /// Friction rate `lambda` acting on `q`.
    pub friction: Vec<f64>,
    /// Relaxation rate of the normal components (`h sigma_HH`, `h sigma_zz`).
    pub relax_normal: Vec<f64>,
    /// Relaxation rate of `h sigma_Hz`.
    pub relax_shear: Vec<f64>,
}

impl StiffRates {
    fn zeros(n: usize) -> Self {
        Self { friction: vec![0.0; n], relax_normal: vec![0.0; n], relax_shear: vec![0.0; n] }
    }
}

/// Semi-discrete rates of one model evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRhs {
    pub dh_dt: Vec<f64>,
    pub dq_dt: Vec<[f64; 2]>,
    /// Rates of `h sigma` (viscoelastic models only).
    pub dconf_dt: Option<ConformationState>,
    pub stiff: StiffRates,
    /// Cell discharge of lubrication models (their diagnosed `q`).
    pub discharge: Option<Vec<[f64; 2]>>,
    /// Largest face wave-speed bound (zero for lubrication models).
    pub max_speed: f64,
}

pub(crate) fn pack(conf: &ConformationState) -> Vec<[f64; NS]> {
    (0..conf.len())
        .map(|c| {
            let [xx, xy, yy] = conf.s_hh[c];
            let [hx, hy] = conf.s_hz[c];
            [xx, xy, yy, hx, hy, conf.s_zz[c]]
        })
        .collect()
}

pub(crate) fn unpack(v: &[[f64; NS]]) -> ConformationState {
    ConformationState {
        s_hh: v.iter().map(|s| [s[0], s[1], s[2]]).collect(),
        s_hz: v.iter().map(|s| [s[3], s[4]]).collect(),
        s_zz: v.iter().map(|s| s[5]).collect(),
    }
}

/// Cell-wise FENE-P factors `1 / (1 - tr sigma / b)` (all ones for UCM).
pub fn fenep_factors(conf: &ConformationState, params: &RheologyParams) -> Result<Vec<f64>> {
    (0..conf.len())
        .map(|c| {
            params.fene_factor(conf.trace(c)).map_err(|e| Error::Admissibility { cell: c, msg: e.to_string() })
        })
        .collect()
}

fn check_sizes(setup: &Setup, state: &ShallowState, conf: Option<&ConformationState>) -> Result<()> {
    setup.grid.check_len(state.h.len())?;
    setup.grid.check_len(state.q.len())?;
    if let Some(c) = conf {
        setup.grid.check_len(c.len())?;
    }
    Ok(())
}

fn require_model(params: &RheologyParams, allowed: &[Model]) -> Result<()> {
    if allowed.contains(&params.model) {
        Ok(())
    } else {
        Err(Error::Config(format!("model {} cannot be assembled by this operator", params.model)))
    }
}

fn admissibility(cell: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Closure(msg) => Error::Admissibility { cell, msg },
        other => other,
    }
}

/// Cell velocity gradients `[[d_x u_x, d_y u_x], [d_x u_y, d_y u_y]]`.
pub(crate) fn velocity_gradients(grid: &Grid2D, u: &[[f64; 2]]) -> Vec<[[f64; 2]; 2]> {
    let ux: Vec<f64> = u.iter().map(|v| v[0]).collect();
    let uy: Vec<f64> = u.iter().map(|v| v[1]).collect();
    let (ax, ay) = (grid.ddx(&ux), grid.ddy(&ux));
    let (bx, by) = (grid.ddx(&uy), grid.ddy(&uy));
    (0..u.len()).map(|c| [[ax[c], ay[c]], [bx[c], by[c]]]).collect()
}

/// `coef * div(w (D(u) + div(u) I))` with compact face stencils.
fn viscous_term(grid: &Grid2D, coef: f64, w: &[f64], u: &[[f64; 2]], gu: &[[[f64; 2]; 2]]) -> Vec<[f64; 2]> {
    let n = grid.len();
    let mut out = vec![[0.0; 2]; n];
    if coef == 0.0 {
        return out;
    }
    // x-faces: face i sits between cells i-1 and i
    let tau_x = |lo: usize, hi: usize| -> [f64; 2] {
        let dux = (u[hi][0] - u[lo][0]) / grid.dx;
        let dvx = (u[hi][1] - u[lo][1]) / grid.dx;
        let duy = 0.5 * (gu[lo][0][1] + gu[hi][0][1]);
        let dvy = 0.5 * (gu[lo][1][1] + gu[hi][1][1]);
        let wf = 0.5 * (w[lo] + w[hi]);
        [wf * (2.0 * dux + dvy), wf * 0.5 * (duy + dvx)]
    };
    let tau_y = |lo: usize, hi: usize| -> [f64; 2] {
        let duy = (u[hi][0] - u[lo][0]) / grid.dy;
        let dvy = (u[hi][1] - u[lo][1]) / grid.dy;
        let dux = 0.5 * (gu[lo][0][0] + gu[hi][0][0]);
        let dvx = 0.5 * (gu[lo][1][0] + gu[hi][1][0]);
        let wf = 0.5 * (w[lo] + w[hi]);
        [wf * 0.5 * (duy + dvx), wf * (2.0 * dvy + dux)]
    };
    for c in 0..n {
        let (i, j) = grid.ij(c);
        let (xl, xr) = (grid.nb(i, j, -1, 0), grid.nb(i, j, 1, 0));
        let (yl, yr) = (grid.nb(i, j, 0, -1), grid.nb(i, j, 0, 1));
        let (fxl, fxr) = (tau_x(xl, c), tau_x(c, xr));
        let (fyl, fyr) = (tau_y(yl, c), tau_y(c, yr));
        for m in 0..2 {
            out[c][m] = coef * ((fxr[m] - fxl[m]) / grid.dx + (fyr[m] - fyl[m]) / grid.dy);
        }
    }
    out
}

/// Shared momentum part: fluxes, bed source, slope forcing, tension, viscosity.
struct MomentumCore {
    dh: Vec<f64>,
    dq: Vec<[f64; 2]>,
    dconf: Option<Vec<[f64; NS]>>,
    u: Vec<[f64; 2]>,
    gu: Vec<[[f64; 2]; 2]>,
    max_speed: f64,
}

#[allow(clippy::too_many_arguments)]
fn momentum_core(
    setup: &Setup,
    state: &ShallowState,
    sigma: Option<&[[f64; NS]]>,
    elastic: f64,
    fene_b: Option<f64>,
    visc_coef: f64,
    visc_weight: Option<&[f64]>,
    gamma: f64,
) -> Result<MomentumCore> {
    let grid = &setup.grid;
    let u = state.velocities();
    let fvout = fv::hyperbolic_rates(&FvInput {
        grid,
        h: &state.h,
        b: &setup.topo.b,
        u: &u,
        sigma,
        g: setup.g_normal(),
        elastic,
        fene_b,
        limiter: setup.limiter,
    })?;
    let mut dq = fvout.dq;
    let f_h = setup.forcing.f_h;
    for (c, r) in dq.iter_mut().enumerate() {
        r[0] += state.h[c] * f_h[0];
        r[1] += state.h[c] * f_h[1];
    }
    if gamma != 0.0 {
        let eta: Vec<f64> = state.h.iter().zip(&setup.topo.b).map(|(h, b)| h + b).collect();
        let lap = grid.laplacian(&eta);
        let g = grid.grad(&lap);
        for (c, r) in dq.iter_mut().enumerate() {
            r[0] += gamma * state.h[c] * g[c][0];
            r[1] += gamma * state.h[c] * g[c][1];
        }
    }
    let gu = velocity_gradients(grid, &u);
    if visc_coef != 0.0 {
        let w = visc_weight.unwrap_or(&state.h);
        let v = viscous_term(grid, visc_coef, w, &u, &gu);
        for (r, v) in dq.iter_mut().zip(v) {
            r[0] += v[0];
            r[1] += v[1];
        }
    }
    Ok(MomentumCore { dh: fvout.dh, dq, dconf: fvout.dconf, u, gu, max_speed: fvout.max_speed })
}

fn visc_coefficient(params: &RheologyParams, theta: f64) -> f64 {
    if params.re.is_infinite() {
        0.0
    } else {
        2.0 * (1.0 - theta) / params.re
    }
}

/// Newtonian inertial model: shallow water with corrected friction,
/// viscosity and surface tension.
pub fn rhs_newtonian_inertial(setup: &Setup, state: &ShallowState, params: &RheologyParams) -> Result<ModelRhs> {
    require_model(params, &[Model::NewtonianInertial])?;
    check_sizes(setup, state, None)?;
    let core = momentum_core(setup, state, None, 0.0, None, visc_coefficient(params, 0.0), None, params.gamma)?;
    let n = state.len();
    let mut stiff = StiffRates::zeros(n);
    let re_k = params.re_k();
    let mut dq = core.dq;
    for c in 0..n {
        let h = state.h[c];
        if h <= H_DRY {
            continue;
        }
        let corr = if params.slip_correction { 1.0 - h * re_k / 3.0 } else { 1.0 };
        let lam = params.k_friction * corr / h;
        stiff.friction[c] = lam;
        dq[c][0] -= lam * state.q[c][0];
        dq[c][1] -= lam * state.q[c][1];
    }
    Ok(ModelRhs { dh_dt: core.dh, dq_dt: dq, dconf_dt: None, stiff, discharge: None, max_speed: core.max_speed })
}

/// Squared strain invariant `|D_H u|^2 + (div u)^2` of a velocity gradient.
pub(crate) fn strain_invariant(g: &[[f64; 2]; 2]) -> f64 {
    let dxx = g[0][0];
    let dyy = g[1][1];
    let dxy = 0.5 * (g[0][1] + g[1][0]);
    let div = dxx + dyy;
    dxx * dxx + 2.0 * dxy * dxy + dyy * dyy + div * div
}

/// Power-law inertial model: the viscous weight `h` becomes an effective
/// depth and the friction uses the corrected bed velocity.
pub fn rhs_powerlaw_inertial(setup: &Setup, state: &ShallowState, params: &RheologyParams) -> Result<ModelRhs> {
    require_model(params, &[Model::PowerLawInertial])?;
    check_sizes(setup, state, None)?;
    let n = state.len();
    let u = state.velocities();
    let gu = velocity_gradients(&setup.grid, &u);
    let re_k = params.re_k();
    let np = params.n_power;
    let mut h_eff = vec![0.0; n];
    let mut bed = vec![0.0; n];
    for c in 0..n {
        let h = state.h[c];
        if h <= H_DRY {
            continue;
        }
        let a = strain_invariant(&gu[c]);
        let un = norm2(u[c]);
        let (he, m) = powerlaw_depth_terms(h, re_k, un, np, a).map_err(admissibility(c))?;
        h_eff[c] = he;
        if params.slip_correction {
            bed[c] = m;
        }
    }
    let core = momentum_core(setup, state, None, 0.0, None, visc_coefficient(params, 0.0), Some(&h_eff), params.gamma)?;
    let mut stiff = StiffRates::zeros(n);
    let mut dq = core.dq;
    let k = params.k_friction;
    for c in 0..n {
        let h = state.h[c];
        if h <= H_DRY {
            continue;
        }
        let lam = k / h;
        stiff.friction[c] = lam;
        dq[c][0] -= lam * state.q[c][0];
        dq[c][1] -= lam * state.q[c][1];
        let un = norm2(u[c]);
        if un > 0.0 && bed[c] != 0.0 {
            dq[c][0] += k * bed[c] * u[c][0] / un;
            dq[c][1] += k * bed[c] * u[c][1] / un;
        }
    }
    Ok(ModelRhs { dh_dt: core.dh, dq_dt: dq, dconf_dt: None, stiff, discharge: None, max_speed: core.max_speed })
}

#[inline]
fn mat_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `G S + S G^T` for the packed symmetric block `[xx, xy, yy]`.
#[inline]
fn upper_convected(g: &[[f64; 2]; 2], s: [f64; 3]) -> [f64; 3] {
    let m = [[s[0], s[1]], [s[1], s[2]]];
    let mut gs = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            gs[i][j] = g[i][0] * m[0][j] + g[i][1] * m[1][j];
        }
    }
    [2.0 * gs[0][0], gs[0][1] + gs[1][0], 2.0 * gs[1][1]]
}

/// Symmetric `a (x) b + b (x) a` packed as `[xx, xy, yy]`.
#[inline]
fn sym_outer(a: [f64; 2], b: [f64; 2]) -> [f64; 3] {
    [2.0 * a[0] * b[0], a[0] * b[1] + a[1] * b[0], 2.0 * a[1] * b[1]]
}

/// Viscoelastic inertial family: full, high-Weissenberg, slices and
/// slices high-Weissenberg variants.
pub fn rhs_viscoelastic_inertial(
    setup: &Setup,
    state: &ShallowState,
    conf: &ConformationState,
    params: &RheologyParams,
) -> Result<ModelRhs> {
    use Model::*;
    require_model(params, &[ViscoelasticInertial, ViscoelasticInertialHW, ViscoelasticSlices, ViscoelasticSlicesHW])?;
    check_sizes(setup, state, Some(conf))?;
    let theta = params.theta_ve;
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::param("theta_ve", format!("must lie in [0, 1), got {theta}")));
    }
    let grid = &setup.grid;
    let n = state.len();
    let de = params.de;
    let fene = fenep_factors(conf, params)?;
    let fene_b = match params.closure {
        Closure::FeneP => Some(params.b_fene),
        Closure::Ucm => None,
    };
    let sigma = pack(conf);
    let elastic = if params.re.is_infinite() { 0.0 } else { theta / (params.re * de) };
    let core = momentum_core(
        setup,
        state,
        Some(&sigma),
        elastic,
        fene_b,
        visc_coefficient(params, theta),
        None,
        params.gamma,
    )?;
    let mut dq = core.dq;
    let mut ds = core.dconf.expect("conformation transported");
    let mut stiff = StiffRates::zeros(n);
    let re_k = params.re_k();
    let k = params.k_friction;
    let slices = matches!(params.model, ViscoelasticSlices | ViscoelasticSlicesHW);
    let relax = params.model.has_relaxation();
    let inv1t = 1.0 / (1.0 - theta);

    // Slices variant: depth-averaged gradient of the reconstructed vertical velocity.
    let slice_gz = if params.model == ViscoelasticSlices {
        let u = &core.u;
        let grad_b = &setup.topo.grad_b;
        let ub: Vec<f64> = (0..n).map(|c| u[c][0] * grad_b[c][0] + u[c][1] * grad_b[c][1]).collect();
        let div: Vec<f64> = core.gu.iter().map(|g| g[0][0] + g[1][1]).collect();
        let g_ub = grid.grad(&ub);
        let g_div = grid.grad(&div);
        Some(
            (0..n)
                .map(|c| {
                    let h = state.h[c];
                    [
                        g_ub[c][0] + div[c] * grad_b[c][0] - 0.5 * h * g_div[c][0],
                        g_ub[c][1] + div[c] * grad_b[c][1] - 0.5 * h * g_div[c][1],
                    ]
                })
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };

    for c in 0..n {
        let h = state.h[c];
        let s = sigma[c];
        let shh = [s[0], s[1], s[2]];
        let shz = [s[3], s[4]];
        let szz = s[5];
        let g = &core.gu[c];
        let u = core.u[c];
        let div = g[0][0] + g[1][1];

        // friction
        if h > H_DRY {
            let (lam, cross) = if slices || !params.slip_correction {
                (k / h, 0.0)
            } else {
                let depth = if params.cross_term_depth_only { h } else { setup.topo.b[c] + h };
                (k * (1.0 - re_k * h * inv1t / 3.0) / h, k * params.re * theta * depth * inv1t / (2.0 * de))
            };
            stiff.friction[c] = lam;
            dq[c][0] -= lam * state.q[c][0] + cross * shz[0];
            dq[c][1] -= lam * state.q[c][1] + cross * shz[1];
        }

        // stretch
        let w = [0.5 * re_k * u[0] - theta / de * shz[0], 0.5 * re_k * u[1] - theta / de * shz[1]];
        let uc = upper_convected(g, shh);
        for m in 0..3 {
            ds[c][m] += h * uc[m];
        }
        let gs = mat_vec(g, shz);
        ds[c][3] += h * (gs[0] - shz[0] * div);
        ds[c][4] += h * (gs[1] - shz[1] * div);
        ds[c][5] += -2.0 * h * szz * div;
        if !slices {
            let so = sym_outer(shz, w);
            for m in 0..3 {
                ds[c][m] += h * inv1t * so[m];
            }
        }
        if params.model != ViscoelasticSlicesHW {
            ds[c][3] += h * inv1t * w[0] * szz;
            ds[c][4] += h * inv1t * w[1] * szz;
        }
        if let Some(gz) = &slice_gz {
            let sz = mat_vec(&[[shh[0], shh[1]], [shh[1], shh[2]]], gz[c]);
            ds[c][3] += h * sz[0];
            ds[c][4] += h * sz[1];
        }

        // relaxation toward the identity
        if relax {
            let rn = fene[c] / de;
            let rs = 1.0 / de;
            stiff.relax_normal[c] = rn;
            stiff.relax_shear[c] = rs;
            add_relaxation(&mut ds[c], h, &s, rn, rs);
        }
    }
    Ok(ModelRhs { dh_dt: core.dh, dq_dt: dq, dconf_dt: Some(unpack(&ds)), stiff, discharge: None, max_speed: core.max_speed })
}

/// Add `-r (h sigma - h I)` with separate normal and shear rates.
#[inline]
fn add_relaxation(ds: &mut [f64; NS], h: f64, s: &[f64; NS], rn: f64, rs: f64) {
    for m in 0..NS {
        let r = if m == 3 || m == 4 { rs } else { rn };
        ds[m] -= r * (h * s[m] - h * S_ID[m]);
    }
}

/// Shear forcing `a = -F` of the lubrication models at cells (for
/// diagnostics) and at faces; `F = f_H`, or with `theta_small` also the
/// hydrostatic and capillary driving.
struct Driving {
    cell: Vec<[f64; 2]>,
    /// `[x-faces, y-faces]`, face `(i, j)` on the low side of cell `(i, j)`.
    xf: Vec<[f64; 2]>,
    yf: Vec<[f64; 2]>,
}

fn lubrication_driving(setup: &Setup, state: &ShallowState, params: &RheologyParams) -> Driving {
    let grid = &setup.grid;
    let n = grid.len();
    let f_h = setup.forcing.f_h;
    let base = [-f_h[0], -f_h[1]];
    let nxf = grid.nx + 1;
    let nyf = grid.ny + 1;
    if !params.theta_small {
        return Driving { cell: vec![base; n], xf: vec![base; nxf * grid.ny], yf: vec![base; grid.nx * nyf] };
    }
    let f_z = setup.forcing.f_z;
    let gamma = params.gamma;
    let eta: Vec<f64> = state.h.iter().zip(&setup.topo.b).map(|(h, b)| h + b).collect();
    let lap = if gamma != 0.0 { grid.laplacian(&eta) } else { vec![0.0; n] };
    let g_eta = grid.grad(&eta);
    let g_lap = grid.grad(&lap);
    let cell = (0..n)
        .map(|c| {
            [
                base[0] - f_z * g_eta[c][0] - gamma * g_lap[c][0],
                base[1] - f_z * g_eta[c][1] - gamma * g_lap[c][1],
            ]
        })
        .collect();
    let mut xf = vec![[0.0; 2]; nxf * grid.ny];
    for j in 0..grid.ny {
        for i in 0..nxf {
            let lo = grid.idx(grid.wrap_x(i as isize - 1), j);
            let hi = grid.idx(grid.wrap_x(i as isize), j);
            let dn = |f: &[f64]| (f[hi] - f[lo]) / grid.dx;
            let at = |g: &[[f64; 2]]| 0.5 * (g[lo][1] + g[hi][1]);
            xf[i + nxf * j] = [
                base[0] - f_z * dn(&eta) - gamma * dn(&lap),
                base[1] - f_z * at(&g_eta) - gamma * at(&g_lap),
            ];
        }
    }
    let mut yf = vec![[0.0; 2]; grid.nx * nyf];
    for j in 0..nyf {
        for i in 0..grid.nx {
            let lo = grid.idx(i, grid.wrap_y(j as isize - 1));
            let hi = grid.idx(i, grid.wrap_y(j as isize));
            let dn = |f: &[f64]| (f[hi] - f[lo]) / grid.dy;
            let at = |g: &[[f64; 2]]| 0.5 * (g[lo][0] + g[hi][0]);
            yf[i + grid.nx * j] = [
                base[0] - f_z * at(&g_eta) - gamma * at(&g_lap),
                base[1] - f_z * dn(&eta) - gamma * dn(&lap),
            ];
        }
    }
    Driving { cell, xf, yf }
}

/// MUSCL face values `(low-side, high-side)` of a cell field along `dir`.
fn face_states(grid: &Grid2D, f: &[f64], dir: usize, lim: Limiter) -> (Vec<f64>, Vec<f64>) {
    let (di, dj) = if dir == 0 { (1, 0) } else { (0, 1) };
    let mut lo = vec![0.0; f.len()];
    let mut hi = vec![0.0; f.len()];
    for c in 0..f.len() {
        let (i, j) = grid.ij(c);
        let l = grid.nb(i, j, -di, -dj);
        let r = grid.nb(i, j, di, dj);
        let d = fv::limited_slope(f[c] - f[l], f[r] - f[c], lim);
        lo[c] = f[c] - 0.5 * d;
        hi[c] = f[c] + 0.5 * d;
    }
    (lo, hi)
}

/// Conservative update `-div Q` from a face discharge function.
///
/// `flux(dir, lo_cell, hi_cell, h_lo_side, h_hi_side, a_face)` returns the
/// normal discharge through the face.
fn lubrication_divergence<F>(setup: &Setup, state: &ShallowState, drive: &Driving, mut flux: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, usize, usize, f64, f64, [f64; 2]) -> Result<f64>,
{
    let grid = &setup.grid;
    let n = grid.len();
    let mut dh = vec![0.0; n];
    for dir in 0..2 {
        let (flo, fhi) = face_states(grid, &state.h, dir, setup.limiter);
        let (nf_i, nf_j) = if dir == 0 { (grid.nx + 1, grid.ny) } else { (grid.nx, grid.ny + 1) };
        let mut qf = vec![0.0; nf_i * nf_j];
        for fj in 0..nf_j {
            for fi in 0..nf_i {
                let (lo, hi) = if dir == 0 {
                    (grid.idx(grid.wrap_x(fi as isize - 1), fj), grid.idx(grid.wrap_x(fi as isize), fj))
                } else {
                    (grid.idx(fi, grid.wrap_y(fj as isize - 1)), grid.idx(fi, grid.wrap_y(fj as isize)))
                };
                let a = if dir == 0 { drive.xf[fi + nf_i * fj] } else { drive.yf[fi + nf_i * fj] };
                qf[fi + nf_i * fj] = flux(dir, lo, hi, fhi[lo].max(0.0), flo[hi].max(0.0), a)?;
            }
        }
        let inv = 1.0 / if dir == 0 { grid.dx } else { grid.dy };
        for (c, r) in dh.iter_mut().enumerate() {
            let (i, j) = grid.ij(c);
            let (a, z) = if dir == 0 { (i + nf_i * j, i + 1 + nf_i * j) } else { (i + nf_i * j, i + nf_i * (j + 1)) };
            *r -= (qf[z] - qf[a]) * inv;
        }
    }
    Ok(dh)
}

/// Newtonian lubrication model.
pub fn rhs_newtonian_viscous(setup: &Setup, state: &ShallowState, params: &RheologyParams) -> Result<ModelRhs> {
    require_model(params, &[Model::NewtonianViscous])?;
    viscous_power_family(setup, state, params, |h, a| newtonian_discharge(h, params.re, params.k_friction, a))
}

/// Power-law lubrication model.
pub fn rhs_powerlaw_viscous(setup: &Setup, state: &ShallowState, params: &RheologyParams) -> Result<ModelRhs> {
    require_model(params, &[Model::PowerLawViscous])?;
    viscous_power_family(setup, state, params, |h, a| {
        powerlaw_discharge(h, params.re, params.k_friction, params.n_power, a)
    })
}

fn check_viscous_params(params: &RheologyParams) -> Result<()> {
    if !(params.k_friction > 0.0) {
        return Err(Error::param("k_friction", "viscous-regime models require k_friction > 0"));
    }
    Ok(())
}

fn viscous_power_family<Q>(setup: &Setup, state: &ShallowState, params: &RheologyParams, q: Q) -> Result<ModelRhs>
where
    Q: Fn(f64, [f64; 2]) -> Result<[f64; 2]>,
{
    check_viscous_params(params)?;
    check_sizes(setup, state, None)?;
    let drive = lubrication_driving(setup, state, params);
    // Discharge points along -a, so the upwind side follows the sign of -a_n.
    let dh = lubrication_divergence(setup, state, &drive, |dir, lo, hi, h_lo, h_hi, a| {
        let h = if -a[dir] >= 0.0 { h_lo } else { h_hi };
        q(h, a).map(|v| v[dir]).map_err(admissibility(if -a[dir] >= 0.0 { lo } else { hi }))
    })?;
    let n = state.len();
    let discharge = (0..n)
        .map(|c| q(state.h[c].max(0.0), drive.cell[c]).map_err(admissibility(c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelRhs { dh_dt: dh, dq_dt: vec![[0.0; 2]; n], dconf_dt: None, stiff: StiffRates::zeros(n), discharge: Some(discharge), max_speed: 0.0 })
}

/// Depth-averaged shear of the viscoelastic lubrication profile.
fn ve_mean_shear(h: f64, params: &RheologyParams, a: [f64; 2], shz: [f64; 2]) -> [f64; 2] {
    let inv = 1.0 / (1.0 - params.theta_ve);
    let r = params.theta_ve / params.de;
    [inv * (-0.5 * params.re * a[0] * h - r * shz[0]), inv * (-0.5 * params.re * a[1] * h - r * shz[1])]
}

/// Viscoelastic lubrication model: conservation of `h` with the
/// viscoelastic discharge, local ODEs for `h sigma_Hz`, `h sigma_zz`, and the
/// diagnostic `h sigma_HH`.
pub fn rhs_viscoelastic_viscous(
    setup: &Setup,
    state: &ShallowState,
    conf: &ConformationState,
    params: &RheologyParams,
) -> Result<ModelRhs> {
    require_model(params, &[Model::ViscoelasticViscous])?;
    check_viscous_params(params)?;
    check_sizes(setup, state, Some(conf))?;
    let theta = params.theta_ve;
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::param("theta_ve", format!("must lie in [0, 1), got {theta}")));
    }
    let (re, k, de) = (params.re, params.k_friction, params.de);
    let drive = lubrication_driving(setup, state, params);
    let qf = |h: f64, a: [f64; 2], s: [f64; 2]| viscoelastic_viscous_discharge(h, re, k, de, theta, a, s);
    let grid = &setup.grid;
    let mut shz_faces = Vec::with_capacity(2);
    for dir in 0..2 {
        let sx: Vec<f64> = conf.s_hz.iter().map(|s| s[0]).collect();
        let sy: Vec<f64> = conf.s_hz.iter().map(|s| s[1]).collect();
        let (xl, xh) = face_states(grid, &sx, dir, setup.limiter);
        let (yl, yh) = face_states(grid, &sy, dir, setup.limiter);
        shz_faces.push((xl, xh, yl, yh));
    }
    let dh = lubrication_divergence(setup, state, &drive, |dir, lo, hi, h_lo, h_hi, a| {
        let (xl, xh, yl, yh) = &shz_faces[dir];
        let s_lo = [xh[lo], yh[lo]];
        let s_hi = [xl[hi], yl[hi]];
        let mid = qf(0.5 * (h_lo + h_hi), a, [0.5 * (s_lo[0] + s_hi[0]), 0.5 * (s_lo[1] + s_hi[1])])?;
        let v = if mid[dir] >= 0.0 { qf(h_lo, a, s_lo)? } else { qf(h_hi, a, s_hi)? };
        Ok(v[dir])
    })?;
    let n = state.len();
    let mut ds = vec![[0.0; NS]; n];
    let mut stiff = StiffRates::zeros(n);
    let mut discharge = Vec::with_capacity(n);
    for c in 0..n {
        let h = state.h[c];
        let shz = conf.s_hz[c];
        let a = drive.cell[c];
        discharge.push(qf(h.max(0.0), a, shz)?);
        let w = ve_mean_shear(h, params, a, shz);
        let szz = conf.s_zz[c];
        ds[c][3] = h * w[0] * szz;
        ds[c][4] = h * w[1] * szz;
        let so = sym_outer(shz, w);
        for m in 0..3 {
            ds[c][m] = h * so[m];
        }
        let s = [conf.s_hh[c][0], conf.s_hh[c][1], conf.s_hh[c][2], shz[0], shz[1], szz];
        let r = 1.0 / de;
        stiff.relax_normal[c] = r;
        stiff.relax_shear[c] = r;
        add_relaxation(&mut ds[c], h, &s, r, r);
    }
    Ok(ModelRhs {
        dh_dt: dh,
        dq_dt: vec![[0.0; 2]; n],
        dconf_dt: Some(unpack(&ds)),
        stiff,
        discharge: Some(discharge),
        max_speed: 0.0,
    })
}

/// Dispatch on `params.model`.
pub fn rhs(
    setup: &Setup,
    state: &ShallowState,
    conf: Option<&ConformationState>,
    params: &RheologyParams,
) -> Result<ModelRhs> {
    let need_conf = || conf.ok_or_else(|| Error::Config(format!("model {} needs a conformation state", params.model)));
    match params.model {
        Model::NewtonianInertial => rhs_newtonian_inertial(setup, state, params),
        Model::NewtonianViscous => rhs_newtonian_viscous(setup, state, params),
        Model::PowerLawInertial => rhs_powerlaw_inertial(setup, state, params),
        Model::PowerLawViscous => rhs_powerlaw_viscous(setup, state, params),
        Model::ViscoelasticViscous => rhs_viscoelastic_viscous(setup, state, need_conf()?, params),
        _ => rhs_viscoelastic_inertial(setup, state, need_conf()?, params),
    }
}

/// Discharge of the lubrication model selected by `params`.
fn cell_discharge(params: &RheologyParams, h: f64, a: [f64; 2], s_hz: [f64; 2]) -> Result<[f64; 2]> {
    let (re, k) = (params.re, params.k_friction);
    match params.model {
        Model::NewtonianViscous => newtonian_discharge(h, re, k, a),
        Model::PowerLawViscous => powerlaw_discharge(h, re, k, params.n_power, a),
        Model::ViscoelasticViscous => viscoelastic_viscous_discharge(h, re, k, params.de, params.theta_ve, a, s_hz),
        m => Err(Error::Config(format!("model {m} is not a lubrication model"))),
    }
}

/// Cell values of the lubrication shear forcing `a` (minus the driving force).
pub fn lubrication_shear_forcing(setup: &Setup, state: &ShallowState, params: &RheologyParams) -> Vec<[f64; 2]> {
    lubrication_driving(setup, state, params).cell
}

/// Cell discharge of a lubrication model, the diagnosed `q` of its state.
pub fn lubrication_discharge(
    setup: &Setup,
    state: &ShallowState,
    conf: Option<&ConformationState>,
    params: &RheologyParams,
) -> Result<Vec<[f64; 2]>> {
    let drive = lubrication_driving(setup, state, params);
    (0..state.len())
        .map(|c| {
            let s = conf.map_or([0.0; 2], |s| s.s_hz[c]);
            cell_discharge(params, state.h[c].max(0.0), drive.cell[c], s).map_err(admissibility(c))
        })
        .collect()
}

/// Bounds used by the stepper for the lubrication models: the largest
/// advective speed `|dQ/dh|` and the largest mobility `|dQ/da|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LubricationBounds {
    pub speed: f64,
    pub mobility: f64,
}

/// Estimate [`LubricationBounds`] by secant differences of the discharge.
pub fn lubrication_bounds(
    setup: &Setup,
    state: &ShallowState,
    conf: Option<&ConformationState>,
    params: &RheologyParams,
) -> Result<LubricationBounds> {
    let drive = lubrication_driving(setup, state, params);
    let disch = |h: f64, a: [f64; 2], c: usize| cell_discharge(params, h, a, conf.map_or([0.0; 2], |s| s.s_hz[c]));
    let mut b = LubricationBounds { speed: 0.0, mobility: 0.0 };
    for c in 0..state.len() {
        let h = state.h[c].max(0.0);
        if h <= H_DRY {
            continue;
        }
        let a = drive.cell[c];
        let an = norm2(a).max(1e-12);
        let dirv = [a[0] / an, a[1] / an];
        let q0 = disch(h, a, c)?;
        let dh = 1e-6 * h;
        let q1 = disch(h + dh, a, c)?;
        b.speed = b.speed.max(norm2([q1[0] - q0[0], q1[1] - q0[1]]) / dh);
        let da = 1e-6 * an;
        let q2 = disch(h, [a[0] + da * dirv[0], a[1] + da * dirv[1]], c)?;
        let mob_along = norm2([q2[0] - q0[0], q2[1] - q0[1]]) / da;
        let mob_across = norm2(q0) / an;
        b.mobility = b.mobility.max(mob_along).max(mob_across);
    }
    Ok(b)
}
