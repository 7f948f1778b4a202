//! Extrusion of a reduced solution into approximate 3D fields: horizontal
//! velocity profiles, vertical velocity, pressure and stresses on
//! terrain-following Chebyshev layers.
//!
//! A sample `(cell, l)` sits at `z = b + zeta_l h` with
//! `zeta_l = (1 - cos(pi l / (nz - 1))) / 2`. Derivatives at fixed `z` combine
//! central differences along layers with the layer-wise Chebyshev derivative.

use std::path::Path;

use crate::closures::{
    newtonian_viscous_velocity, parabolic_correction, powerlaw_correction, powerlaw_viscous_velocity,
    viscoelastic_correction, viscoelastic_viscous_velocity,
};
use crate::geometry::Grid2D;
use crate::models::{self, Setup};
use crate::quadrature::gauss_legendre;
use crate::state::{ConformationState, Model, RheologyParams, ShallowState, H_DRY};
use crate::{Error, Result};

/// Default number of layers per column.
pub const DEFAULT_NZ: usize = 16;
/// Column names of the 3D CSV.
pub const COLUMNS: [&str; 13] = ["x", "y", "z", "ux", "uy", "uz", "p", "Txx", "Txy", "Tyy", "Txz", "Tyz", "Tzz"];

/// Chebyshev-Lobatto points on `[0, 1]`, ascending.
pub fn chebyshev_lobatto(nz: usize) -> Vec<f64> {
    let n = (nz - 1) as f64;
    (0..nz).map(|l| 0.5 * (1.0 - (std::f64::consts::PI * l as f64 / n).cos())).collect()
}

/// Differentiation matrix of the interpolating polynomial through `x`.
pub fn differentiation_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let w: Vec<f64> = (0..n)
        .map(|j| 1.0 / (0..n).filter(|&k| k != j).map(|k| x[j] - x[k]).product::<f64>())
        .collect();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                d[i][j] = (w[j] / w[i]) / (x[i] - x[j]);
                diag -= d[i][j];
            }
        }
        d[i][i] = diag;
    }
    d
}

/// Cumulative integration matrix: `(S f)_i = int_{x_0}^{x_i} p_f`.
pub fn integration_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let (gx, gw) = gauss_legendre(n);
    let lagrange = |j: usize, s: f64| -> f64 {
        (0..n).filter(|&k| k != j).map(|k| (s - x[k]) / (x[j] - x[k])).product()
    };
    let mut s = vec![vec![0.0; n]; n];
    for i in 1..n {
        let (a, b) = (x[0], x[i]);
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        for (j, row) in s[i].iter_mut().enumerate() {
            *row = r * gx.iter().zip(&gw).map(|(t, w)| w * lagrange(j, c + r * t)).sum::<f64>();
        }
    }
    s
}

/// Approximate 3D fields on `nz` layers per cell; sample `(c, l)` is stored
/// at index `c * nz + l`.
#[derive(Debug, Clone)]
pub struct Extrusion3D {
    pub nz: usize,
    pub zeta: Vec<f64>,
    pub b: Vec<f64>,
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub u_h: Vec<[f64; 2]>,
    pub u_z: Vec<f64>,
    pub p: Vec<f64>,
    /// `[Txx, Txy, Tyy, Txz, Tyz, Tzz]`.
    pub stress: Vec<[f64; 6]>,
    diff: Vec<Vec<f64>>,
    integ: Vec<Vec<f64>>,
}

impl Extrusion3D {
    /// Empty fields on the layers of every (wet) column.
    pub fn new(grid: &Grid2D, b: &[f64], h: &[f64], nz: usize) -> Result<Self> {
        if nz < 4 {
            return Err(Error::param("nz", format!("need at least 4 layers, got {nz}")));
        }
        grid.check_len(b.len())?;
        grid.check_len(h.len())?;
        if let Some(c) = h.iter().position(|&v| !(v > H_DRY)) {
            return Err(Error::Admissibility { cell: c, msg: format!("column depth {} is too small to extrude", h[c]) });
        }
        let zeta = chebyshev_lobatto(nz);
        let n = grid.len() * nz;
        let mut z = Vec::with_capacity(n);
        for c in 0..grid.len() {
            z.extend(zeta.iter().map(|s| b[c] + s * h[c]));
        }
        Ok(Self {
            nz,
            diff: differentiation_matrix(&zeta),
            integ: integration_matrix(&zeta),
            zeta,
            b: b.to_vec(),
            h: h.to_vec(),
            z,
            u_h: vec![[0.0; 2]; n],
            u_z: vec![0.0; n],
            p: vec![0.0; n],
            stress: vec![[0.0; 6]; n],
        })
    }

    #[inline]
    pub fn idx(&self, c: usize, l: usize) -> usize {
        c * self.nz + l
    }

    pub fn n_cells(&self) -> usize {
        self.h.len()
    }

    /// `d/dz` of a sampled field.
    pub fn ddz(&self, f: &[f64]) -> Vec<f64> {
        let nz = self.nz;
        let mut out = vec![0.0; f.len()];
        for c in 0..self.n_cells() {
            let col = &f[c * nz..(c + 1) * nz];
            for l in 0..nz {
                out[c * nz + l] = self.diff[l].iter().zip(col).map(|(d, v)| d * v).sum::<f64>() / self.h[c];
            }
        }
        out
    }

    /// `(d/dx, d/dy, d/dz)` of a sampled field, horizontal derivatives at fixed `z`.
    pub fn gradient(&self, grid: &Grid2D, f: &[f64]) -> Vec<[f64; 3]> {
        let nz = self.nz;
        let fz = self.ddz(f);
        let (bx, by) = (grid.ddx(&self.b), grid.ddy(&self.b));
        let (hx, hy) = (grid.ddx(&self.h), grid.ddy(&self.h));
        let mut out = vec![[0.0; 3]; f.len()];
        for c in 0..self.n_cells() {
            let (i, j) = grid.ij(c);
            let (xl, xr) = (grid.nb(i, j, -1, 0), grid.nb(i, j, 1, 0));
            let (yl, yr) = (grid.nb(i, j, 0, -1), grid.nb(i, j, 0, 1));
            for l in 0..nz {
                let k = c * nz + l;
                let dxs = (f[xr * nz + l] - f[xl * nz + l]) / (2.0 * grid.dx);
                let dys = (f[yr * nz + l] - f[yl * nz + l]) / (2.0 * grid.dy);
                let s = self.zeta[l];
                out[k] = [dxs - (bx[c] + s * hx[c]) * fz[k], dys - (by[c] + s * hy[c]) * fz[k], fz[k]];
            }
        }
        out
    }

    /// Depth average of the horizontal velocity per column.
    pub fn depth_average(&self) -> Vec<[f64; 2]> {
        let nz = self.nz;
        let w = &self.integ[nz - 1];
        (0..self.n_cells())
            .map(|c| {
                let mut m = [0.0; 2];
                for l in 0..nz {
                    let u = self.u_h[c * nz + l];
                    m[0] += w[l] * u[0];
                    m[1] += w[l] * u[1];
                }
                m
            })
            .collect()
    }

    /// Write the 3D CSV.
    pub fn write_csv(&self, path: &Path, grid: &Grid2D) -> Result<()> {
        let rows = (0..self.n_cells()).flat_map(|c| {
            let (i, j) = grid.ij(c);
            (0..self.nz).map(move |l| {
                let k = self.idx(c, l);
                let t = self.stress[k];
                vec![grid.x(i), grid.y(j), self.z[k], self.u_h[k][0], self.u_h[k][1], self.u_z[k], self.p[k], t[0], t[1], t[2], t[3], t[4], t[5]]
            })
        });
        crate::io::write_table(path, &COLUMNS, rows)
    }
}

fn is_inertial(model: Model) -> bool {
    model.has_momentum()
}

fn closure_err(cell: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Closure(msg) => Error::Admissibility { cell, msg },
        other => other,
    }
}

/// Horizontal velocity profile of every column: the depth-mean velocity plus
/// the model correction (inertial models) or the full viscous profile.
/// With `correction == false` every column gets its flat mean velocity.
pub fn reconstruct_profile(
    ext: &mut Extrusion3D,
    setup: &Setup,
    state: &ShallowState,
    conf: Option<&ConformationState>,
    params: &RheologyParams,
    correction: bool,
) -> Result<()> {
    let grid = &setup.grid;
    let nz = ext.nz;
    let n = grid.len();
    let need_conf = || conf.ok_or_else(|| Error::Config(format!("model {} needs a conformation state", params.model)));
    let u0: Vec<[f64; 2]> = if is_inertial(params.model) {
        state.velocities()
    } else {
        let q = models::lubrication_discharge(setup, state, conf, params)?;
        (0..n).map(|c| [q[c][0] / state.h[c], q[c][1] / state.h[c]]).collect()
    };
    if !correction {
        for c in 0..n {
            for l in 0..nz {
                ext.u_h[c * nz + l] = u0[c];
            }
        }
        return Ok(());
    }
    let strain: Vec<f64> = if params.model == Model::PowerLawInertial {
        models::velocity_gradients(grid, &u0).iter().map(models::strain_invariant).collect()
    } else {
        Vec::new()
    };
    let a_lub =
        if is_inertial(params.model) { Vec::new() } else { models::lubrication_shear_forcing(setup, state, params) };
    for c in 0..n {
        let col = ColumnInputs {
            b: ext.b[c],
            h: ext.h[c],
            u0: u0[c],
            a: a_lub.get(c).copied().unwrap_or([0.0; 2]),
            s_hz: conf.map_or([0.0; 2], |cf| cf.s_hz[c]),
            strain: strain.get(c).copied().unwrap_or(0.0),
        };
        if params.model.is_viscoelastic() {
            need_conf()?;
        }
        for l in 0..nz {
            let k = c * nz + l;
            ext.u_h[k] = column_profile(params, &col, ext.z[k]).map_err(closure_err(c))?;
        }
    }
    Ok(())
}

/// Column data entering a velocity profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnInputs {
    pub b: f64,
    pub h: f64,
    /// Depth-mean velocity (inertial models).
    pub u0: [f64; 2],
    /// Lubrication driving (viscous models).
    pub a: [f64; 2],
    pub s_hz: [f64; 2],
    /// Strain invariant of the mean flow (power-law inertial model).
    pub strain: f64,
}

/// Horizontal velocity at height `z` of one column: mean velocity plus the
/// model correction for inertial models, the full profile for viscous ones.
pub fn column_profile(params: &RheologyParams, col: &ColumnInputs, z: f64) -> Result<[f64; 2]> {
    let (re, k, de, th, np) = (params.re, params.k_friction, params.de, params.theta_ve, params.n_power);
    let ColumnInputs { b, h, u0, a, s_hz, strain } = *col;
    let add = |d: [f64; 2]| [u0[0] + d[0], u0[1] + d[1]];
    Ok(match params.model {
        Model::NewtonianInertial => add(parabolic_correction(z, b, h, re, k, u0)?),
        Model::PowerLawInertial => add(powerlaw_correction(z, b, h, params.re_k(), u0, np, strain)?),
        Model::ViscoelasticInertial
        | Model::ViscoelasticInertialHW
        | Model::ViscoelasticSlices
        | Model::ViscoelasticSlicesHW => add(viscoelastic_correction(z, b, h, re, k, de, th, u0, s_hz)?),
        Model::NewtonianViscous => newtonian_viscous_velocity(z, b, h, re, k, a)?,
        Model::PowerLawViscous => powerlaw_viscous_velocity(z, b, h, re, k, np, a)?,
        Model::ViscoelasticViscous => {
            let v = viscoelastic_viscous_velocity(z, b, h, re, de, th, a, s_hz)?;
            [v[0] - a[0] * h / k, v[1] - a[1] * h / k]
        }
    })
}

/// Vertical velocity. Inertial models use `u0 . grad b + (b - z) div u0`;
/// lubrication models integrate continuity of their full profile upward
/// from the no-penetration value.
pub fn reconstruct_uz(ext: &mut Extrusion3D, setup: &Setup, state: &ShallowState, params: &RheologyParams) -> Result<()> {
    let grid = &setup.grid;
    let nz = ext.nz;
    let gb = grid.grad(&ext.b);
    if is_inertial(params.model) {
        let u0 = state.velocities();
        let div = grid.div(&u0);
        for c in 0..grid.len() {
            let base = u0[c][0] * gb[c][0] + u0[c][1] * gb[c][1];
            for l in 0..nz {
                let k = c * nz + l;
                ext.u_z[k] = base + (ext.b[c] - ext.z[k]) * div[c];
            }
        }
        return Ok(());
    }
    let ux: Vec<f64> = ext.u_h.iter().map(|u| u[0]).collect();
    let uy: Vec<f64> = ext.u_h.iter().map(|u| u[1]).collect();
    let gx = ext.gradient(grid, &ux);
    let gy = ext.gradient(grid, &uy);
    for c in 0..grid.len() {
        let ub = ext.u_h[c * nz];
        let base = ub[0] * gb[c][0] + ub[1] * gb[c][1];
        let div: Vec<f64> = (0..nz).map(|l| gx[c * nz + l][0] + gy[c * nz + l][1]).collect();
        for l in 0..nz {
            let int: f64 = ext.integ[l].iter().zip(&div).map(|(s, d)| s * d).sum();
            ext.u_z[c * nz + l] = base - ext.h[c] * int;
        }
    }
    Ok(())
}

/// Stress from finite-difference derivatives of the reconstructed velocity
/// (power-law viscosity where relevant) plus the elastic part
/// `theta/(Re De) (sigma - I)`, constant along each column.
pub fn reconstruct_stress(
    ext: &mut Extrusion3D,
    setup: &Setup,
    conf: Option<&ConformationState>,
    params: &RheologyParams,
) -> Result<()> {
    let grid = &setup.grid;
    let nz = ext.nz;
    let inv_re = params.inv_re();
    let theta = if params.model.is_viscoelastic() { params.theta_ve } else { 0.0 };
    let visc = 2.0 * (1.0 - theta) * inv_re;
    let power = matches!(params.model, Model::PowerLawInertial | Model::PowerLawViscous) && params.n_power != 1.0;
    let ux: Vec<f64> = ext.u_h.iter().map(|u| u[0]).collect();
    let uy: Vec<f64> = ext.u_h.iter().map(|u| u[1]).collect();
    let gx = ext.gradient(grid, &ux);
    let gy = ext.gradient(grid, &uy);
    let gz = ext.gradient(grid, &ext.u_z);
    let elastic = if params.model.is_viscoelastic() && inv_re != 0.0 { theta * inv_re / params.de } else { 0.0 };
    if elastic != 0.0 && conf.is_none() {
        return Err(Error::Config(format!("model {} needs a conformation state", params.model)));
    }
    for c in 0..grid.len() {
        for l in 0..nz {
            let k = c * nz + l;
            let g = [gx[k], gy[k], gz[k]];
            let d = |i: usize, j: usize| 0.5 * (g[i][j] + g[j][i]);
            let dd = [d(0, 0), d(0, 1), d(1, 1), d(0, 2), d(1, 2), d(2, 2)];
            let mut factor = visc;
            if power {
                let norm2 = dd[0] * dd[0] + dd[2] * dd[2] + dd[5] * dd[5] + 2.0 * (dd[1] * dd[1] + dd[3] * dd[3] + dd[4] * dd[4]);
                factor = if norm2 > 0.0 { visc * norm2.powf(0.5 * (params.n_power - 1.0)) } else { 0.0 };
            }
            let mut t = dd.map(|v| factor * v);
            if elastic != 0.0 {
                let cf = conf.expect("checked above");
                let [xx, xy, yy] = cf.s_hh[c];
                let [hx, hy] = cf.s_hz[c];
                let s = [xx - 1.0, xy, yy - 1.0, hx, hy, cf.s_zz[c] - 1.0];
                for m in 0..6 {
                    t[m] += elastic * s[m];
                }
            }
            ext.stress[k] = t;
        }
    }
    Ok(())
}

/// Pressure: hydrostatic plus capillary part, plus the normal viscous stress
/// (`-(2/Re) div u0` for the Newtonian inertial model, the reconstructed
/// `T_zz` otherwise). Needs the stress of [`reconstruct_stress`].
pub fn reconstruct_pressure(ext: &mut Extrusion3D, setup: &Setup, state: &ShallowState, params: &RheologyParams) -> Result<()> {
    let grid = &setup.grid;
    let nz = ext.nz;
    let f_z = setup.forcing.f_z;
    let eta: Vec<f64> = ext.b.iter().zip(&ext.h).map(|(b, h)| b + h).collect();
    let lap = grid.laplacian(&eta);
    let div = if params.model == Model::NewtonianInertial { Some(grid.div(&state.velocities())) } else { None };
    for c in 0..grid.len() {
        for l in 0..nz {
            let k = c * nz + l;
            let normal = match &div {
                Some(d) => -2.0 * params.inv_re() * d[c],
                None => ext.stress[k][5],
            };
            ext.p[k] = f_z * (ext.z[k] - eta[c]) - params.gamma * lap[c] + normal;
        }
    }
    Ok(())
}

/// Full reconstruction: profile, vertical velocity, stress and pressure.
pub fn reconstruct(
    setup: &Setup,
    state: &ShallowState,
    conf: Option<&ConformationState>,
    params: &RheologyParams,
    nz: usize,
    correction: bool,
) -> Result<Extrusion3D> {
    let conf = if params.model.is_viscoelastic() { conf } else { None };
    let mut ext = Extrusion3D::new(&setup.grid, &setup.topo.b, &state.h, nz)?;
    reconstruct_profile(&mut ext, setup, state, conf, params, correction)?;
    reconstruct_uz(&mut ext, setup, state, params)?;
    reconstruct_stress(&mut ext, setup, conf, params)?;
    reconstruct_pressure(&mut ext, setup, state, params)?;
    Ok(ext)
}
