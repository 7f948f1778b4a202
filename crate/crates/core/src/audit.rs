//! Residual audit: evaluate the full free-surface boundary value problem on
//! reconstructed 3D fields and fit the orders of the residuals over a family
//! of scenarios indexed by the thinness parameter `eps`.
//!
//! The solver never sees `eps`; it only enters through the scenario scaling
//! (depth, friction, inverse Reynolds number and bed slopes).

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use crate::geometry::{build_topography, forcing_from_angle, Boundary, Forcing, Grid2D};
use crate::io::fmt17;
use crate::models::{self, Limiter, Setup};
use crate::reconstruct::{reconstruct, Extrusion3D, DEFAULT_NZ};
use crate::state::{ConformationState, Model, RheologyParams, ShallowState};
use crate::timestepper::{step, Scenario};
use crate::{Error, Result};

/// Residuals below this value are treated as round-off.
pub const ROUNDOFF_FLOOR: f64 = 1e-11;
/// Margin below the expected order still counted as a pass.
pub const ORDER_MARGIN: f64 = 0.3;
/// Default sweep values.
pub const DEFAULT_EPS: [f64; 4] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];

/// Equations of the boundary value problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Residual {
    Continuity,
    HorizontalMomentum,
    VerticalMomentum,
    SurfaceDynamic,
    SurfaceTangential,
    BottomFriction,
    Kinematic,
    NoPenetration,
}

impl Residual {
    pub const ALL: [Residual; 8] = [
        Residual::Continuity,
        Residual::HorizontalMomentum,
        Residual::VerticalMomentum,
        Residual::SurfaceDynamic,
        Residual::SurfaceTangential,
        Residual::BottomFriction,
        Residual::Kinematic,
        Residual::NoPenetration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Residual::Continuity => "continuity",
            Residual::HorizontalMomentum => "horizontal_momentum",
            Residual::VerticalMomentum => "vertical_momentum",
            Residual::SurfaceDynamic => "surface_dynamic",
            Residual::SurfaceTangential => "surface_tangential",
            Residual::BottomFriction => "bottom_friction",
            Residual::Kinematic => "kinematic",
            Residual::NoPenetration => "no_penetration",
        }
    }

    pub fn index(self) -> usize {
        Residual::ALL.iter().position(|r| *r == self).expect("listed")
    }
}

impl std::fmt::Display for Residual {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Residual {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Residual::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown residual '{s}'")))
    }
}

/// Expected order of a residual and whether it is inherited from the generic
/// thin-layer orders rather than stated for the model itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedOrder {
    pub order: f64,
    pub inherited: bool,
}

/// Expected residual orders per model.
pub fn expected_order(model: Model, r: Residual) -> ExpectedOrder {
    let order = match r {
        Residual::Continuity | Residual::HorizontalMomentum | Residual::VerticalMomentum => 1.0,
        _ => 2.0,
    };
    ExpectedOrder { order, inherited: model != Model::NewtonianInertial }
}

/// Pointwise residuals; vector equations keep their components, scalar ones
/// use the first slot.
#[derive(Debug, Clone)]
pub struct ResidualFields {
    pub fields: Vec<Vec<[f64; 3]>>,
}

impl ResidualFields {
    /// Add `value` to the first component of every sample of one equation.
    pub fn inject(&mut self, r: Residual, value: f64) {
        for v in &mut self.fields[r.index()] {
            v[0] += value;
        }
    }

    pub fn report(&self) -> ResidualReport {
        let mut values = [0.0; 8];
        for (v, f) in values.iter_mut().zip(&self.fields) {
            *v = f.iter().map(|a| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()).fold(0.0, f64::max);
        }
        ResidualReport { values }
    }
}

/// Sup-norms of the residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub values: [f64; 8],
}

impl ResidualReport {
    pub fn get(&self, r: Residual) -> f64 {
        self.values[r.index()]
    }
}

/// Extrusions before, at the middle of and after a short step of length `dt`.
#[derive(Debug, Clone, Copy)]
pub struct TimePair<'a> {
    pub before: &'a Extrusion3D,
    pub mid: &'a Extrusion3D,
    pub after: &'a Extrusion3D,
    pub dt: f64,
}

fn interior(grid: &Grid2D, c: usize) -> bool {
    let (i, j) = grid.ij(c);
    let ok_x = grid.bc_x == Boundary::Periodic || (i > 0 && i + 1 < grid.nx);
    let ok_y = grid.bc_y == Boundary::Periodic || (j > 0 && j + 1 < grid.ny);
    ok_x && ok_y
}

fn mat(t: &[f64; 6]) -> [[f64; 3]; 3] {
    [[t[0], t[1], t[3]], [t[1], t[2], t[4]], [t[3], t[4], t[5]]]
}

fn mul(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit_normal(g: [f64; 2]) -> [f64; 3] {
    let s = (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
    [-g[0] / s, -g[1] / s, 1.0 / s]
}

/// Divergence of the upward unit normal of the surface `eta`, with the same
/// compact face differences as the five-point Laplacian.
fn normal_divergence(grid: &Grid2D, eta: &[f64]) -> Vec<f64> {
    let g = grid.grad(eta);
    let face = |a: f64, b: f64| -a / (1.0 + a * a + b * b).sqrt();
    (0..grid.len())
        .map(|c| {
            let (i, j) = grid.ij(c);
            let (xl, xr) = (grid.nb(i, j, -1, 0), grid.nb(i, j, 1, 0));
            let (yl, yr) = (grid.nb(i, j, 0, -1), grid.nb(i, j, 0, 1));
            let fx = |lo: usize, hi: usize| face((eta[hi] - eta[lo]) / grid.dx, 0.5 * (g[lo][1] + g[hi][1]));
            let fy = |lo: usize, hi: usize| face((eta[hi] - eta[lo]) / grid.dy, 0.5 * (g[lo][0] + g[hi][0]));
            (fx(c, xr) - fx(xl, c)) / grid.dx + (fy(c, yr) - fy(yl, c)) / grid.dy
        })
        .collect()
}

/// Evaluate every equation of the boundary value problem on the middle
/// extrusion. Bulk equations skip the bottom and top layers; boundary
/// conditions use exactly those layers. Cells adjacent to non-periodic
/// boundaries are skipped.
pub fn residuals(grid: &Grid2D, forcing: &Forcing, params: &RheologyParams, pair: TimePair<'_>) -> Result<ResidualFields> {
    let TimePair { before, mid: e, after, dt } = pair;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive and finite, got {dt}")));
    }
    let nz = e.nz;
    let n = e.n_cells();
    grid.check_len(n)?;
    for other in [before, after] {
        if other.nz != nz || other.n_cells() != n {
            return Err(Error::SizeMismatch { expected: n * nz, got: other.n_cells() * other.nz });
        }
        if other.b != e.b {
            return Err(Error::Grid("snapshots of the pair sit on different beds".into()));
        }
    }
    let comp = |f: &dyn Fn(usize) -> f64| (0..n * nz).map(f).collect::<Vec<f64>>();
    let ux = comp(&|k| e.u_h[k][0]);
    let uy = comp(&|k| e.u_h[k][1]);
    let t: Vec<Vec<f64>> = (0..6).map(|m| comp(&|k| e.stress[k][m])).collect();
    let gux = e.gradient(grid, &ux);
    let guy = e.gradient(grid, &uy);
    let guz = e.gradient(grid, &e.u_z);
    let gp = e.gradient(grid, &e.p);
    let gt: Vec<Vec<[f64; 3]>> = t.iter().map(|f| e.gradient(grid, f)).collect();
    let dh: Vec<f64> = (0..n).map(|c| (after.h[c] - before.h[c]) / dt).collect();
    // Time derivative at fixed z of a sampled field.
    let ddt = |k: usize, c: usize, l: usize, f: &dyn Fn(&Extrusion3D, usize) -> f64, fz: f64| {
        (f(after, k) - f(before, k)) / dt - e.zeta[l] * dh[c] * fz
    };
    let eta: Vec<f64> = e.b.iter().zip(&e.h).map(|(b, h)| b + h).collect();
    let geta = grid.grad(&eta);
    let gb = grid.grad(&e.b);
    let div_n = normal_divergence(grid, &eta);
    let [fx, fy] = forcing.f_h;
    let fz = forcing.f_z;

    let mut fields = vec![Vec::new(); 8];
    for c in (0..n).filter(|&c| interior(grid, c)) {
        for l in 1..nz - 1 {
            let k = c * nz + l;
            let u = [ux[k], uy[k], e.u_z[k]];
            let adv = |g: &[f64; 3]| u[0] * g[0] + u[1] * g[1] + u[2] * g[2];
            let dtx = ddt(k, c, l, &|x, k| x.u_h[k][0], gux[k][2]);
            let dty = ddt(k, c, l, &|x, k| x.u_h[k][1], guy[k][2]);
            let dtz = ddt(k, c, l, &|x, k| x.u_z[k], guz[k][2]);
            let g = |m: usize| gt[m][k];
            fields[0].push([gux[k][0] + guy[k][1] + guz[k][2], 0.0, 0.0]);
            fields[1].push([
                dtx + adv(&gux[k]) + gp[k][0] - g(0)[0] - g(1)[1] - g(3)[2] - fx,
                dty + adv(&guy[k]) + gp[k][1] - g(1)[0] - g(2)[1] - g(4)[2] - fy,
                0.0,
            ]);
            fields[2].push([dtz + adv(&guz[k]) + gp[k][2] - g(3)[0] - g(4)[1] - g(5)[2] - fz, 0.0, 0.0]);
        }
        let top = c * nz + nz - 1;
        let nn = unit_normal(geta[c]);
        let tm = mat(&e.stress[top]);
        let tn = mul(&tm, &nn);
        let ntn = dot(&nn, &tn);
        fields[3].push([-e.p[top] + ntn + params.gamma * div_n[c], 0.0, 0.0]);
        fields[4].push([0, 1, 2].map(|i| tn[i] - ntn * nn[i]));
        let u_top = e.u_h[top];
        fields[6].push([-dh[c] - u_top[0] * geta[c][0] - u_top[1] * geta[c][1] + e.u_z[top], 0.0, 0.0]);

        let bed = c * nz;
        let nb = unit_normal(gb[c]);
        let tm = mat(&e.stress[bed]);
        let tn = mul(&tm, &nb);
        let ntn = dot(&nb, &tn);
        let u = [e.u_h[bed][0], e.u_h[bed][1], e.u_z[bed]];
        let un = dot(&u, &nb);
        let k = params.k_friction;
        fields[5].push([0, 1, 2].map(|i| tn[i] - ntn * nb[i] - k * (u[i] - un * nb[i])));
        fields[7].push([e.u_z[bed] - u[0] * gb[c][0] - u[1] * gb[c][1], 0.0, 0.0]);
    }
    Ok(ResidualFields { fields })
}

/// Additive defect injected into one equation, `c eps^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defect {
    pub residual: Residual,
    pub c: f64,
    pub q: f64,
}

/// Settings of a residual evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    pub nz: usize,
    /// Length of the step used for time derivatives.
    pub delta: f64,
    /// Reconstruct with the model velocity correction; `false` is the
    /// ablation control with flat mean velocities.
    pub correction: bool,
    pub defect: Option<Defect>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { nz: DEFAULT_NZ, delta: 1e-6, correction: true, defect: None }
    }
}

fn average_state(a: &ShallowState, b: &ShallowState) -> Result<ShallowState> {
    let h = a.h.iter().zip(&b.h).map(|(x, y)| 0.5 * (x + y)).collect();
    let q = a.q.iter().zip(&b.q).map(|(x, y)| [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])]).collect();
    ShallowState::new(h, q)
}

fn average_conf(a: &ConformationState, b: &ConformationState) -> ConformationState {
    let avg = |x: f64, y: f64| 0.5 * (x + y);
    ConformationState {
        s_hh: a.s_hh.iter().zip(&b.s_hh).map(|(x, y)| [0, 1, 2].map(|m| avg(x[m], y[m]))).collect(),
        s_hz: a.s_hz.iter().zip(&b.s_hz).map(|(x, y)| [0, 1].map(|m| avg(x[m], y[m]))).collect(),
        s_zz: a.s_zz.iter().zip(&b.s_zz).map(|(x, y)| avg(*x, *y)).collect(),
    }
}

/// Residual fields of a scenario at its initial instant: the time derivative
/// comes from one step of length `opts.delta`, and fields are evaluated on
/// the average of the two snapshots.
pub fn evaluate(scenario: &Scenario, opts: &AuditOptions) -> Result<ResidualFields> {
    let Scenario { setup, params, state, conf } = scenario;
    let conf = if params.model.is_viscoelastic() { conf.as_ref() } else { None };
    let (s2, c2) = step(setup, state, conf, params, opts.delta)?;
    let sm = average_state(state, &s2)?;
    let cm = conf.zip(c2.as_ref()).map(|(a, b)| average_conf(a, b));
    let e1 = reconstruct(setup, state, conf, params, opts.nz, opts.correction)?;
    let e2 = reconstruct(setup, &s2, c2.as_ref(), params, opts.nz, opts.correction)?;
    let em = reconstruct(setup, &sm, cm.as_ref(), params, opts.nz, opts.correction)?;
    residuals(&setup.grid, &setup.forcing, params, TimePair { before: &e1, mid: &em, after: &e2, dt: opts.delta })
}

/// Least-squares order of `value ~ eps^order`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// Fitted order; infinite when the residual sits at round-off.
    pub order: f64,
    pub r2: f64,
    /// Number of points above the round-off floor used in the fit.
    pub points: usize,
    /// Residuals decrease with `eps`.
    pub monotone: bool,
}

/// Fit `log value = order log eps + c` over the points above
/// [`ROUNDOFF_FLOOR`]; with fewer than two such points the order is infinite.
pub fn fit_order(eps: &[f64], values: &[f64]) -> Result<SlopeFit> {
    if eps.len() < 3 || eps.len() != values.len() {
        return Err(Error::param("eps", format!("need at least 3 matching points, got {} and {}", eps.len(), values.len())));
    }
    if eps.iter().chain(values).any(|v| !v.is_finite() || *v < 0.0) || eps.iter().any(|e| *e <= 0.0) {
        return Err(Error::param("values", "residuals and eps must be finite, eps positive"));
    }
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[b].total_cmp(&eps[a]));
    let monotone = order.windows(2).all(|w| values[w[1]] <= values[w[0]]);
    let pts: Vec<(f64, f64)> =
        (0..eps.len()).filter(|&i| values[i] > ROUNDOFF_FLOOR).map(|i| (eps[i].ln(), values[i].ln())).collect();
    if pts.len() < 2 {
        return Ok(SlopeFit { order: f64::INFINITY, r2: 1.0, points: pts.len(), monotone });
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(SlopeFit { order: slope, r2, points: pts.len(), monotone })
}

/// One line of the sweep summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub residual: Residual,
    pub fit: SlopeFit,
    pub expected: ExpectedOrder,
    pub pass: bool,
}

/// Residual reports over a sweep and their fitted orders.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub model: Model,
    pub eps: Vec<f64>,
    pub reports: Vec<ResidualReport>,
    pub fits: Vec<SlopeFit>,
}

impl Sweep {
    pub fn fit(&self, r: Residual) -> SlopeFit {
        self.fits[r.index()]
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        Residual::ALL
            .iter()
            .map(|&r| {
                let fit = self.fit(r);
                let expected = expected_order(self.model, r);
                SummaryRow { residual: r, fit, expected, pass: fit.order >= expected.order - ORDER_MARGIN }
            })
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.summary().iter().all(|r| r.pass)
    }

    /// CSV with columns `epsilon, residual_name, sup_norm`.
    pub fn write_table(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["epsilon", "residual_name", "sup_norm"])?;
        for (e, rep) in self.eps.iter().zip(&self.reports) {
            for r in Residual::ALL {
                w.write_record([fmt17(*e), r.name().to_string(), fmt17(rep.get(r))])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// CSV with columns `residual_name, fitted_order, expected, pass, r2, inherited`.
    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["residual_name", "fitted_order", "expected", "pass", "r2", "inherited"])?;
        for row in self.summary() {
            let order = if row.fit.order.is_infinite() { "inf".to_string() } else { fmt17(row.fit.order) };
            w.write_record([
                row.residual.name().to_string(),
                order,
                fmt17(row.expected.order),
                row.pass.to_string(),
                fmt17(row.fit.r2),
                row.expected.inherited.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(csv::Writer::from_path(path)?)
}

/// Evaluate the family at every `eps` (in parallel) and fit residual orders.
pub fn epsilon_sweep<F>(family: F, eps: &[f64], opts: &AuditOptions) -> Result<Sweep>
where
    F: Fn(f64) -> Result<Scenario> + Sync,
{
    if eps.len() < 3 || eps.windows(2).any(|w| !(w[1] < w[0])) || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::param("eps", format!("need at least 3 positive decreasing values, got {eps:?}")));
    }
    let members: Vec<(Model, ResidualReport)> = eps
        .par_iter()
        .map(|&e| {
            let sc = family(e)?;
            let mut fields = evaluate(&sc, opts)?;
            if let Some(d) = opts.defect {
                fields.inject(d.residual, d.c * e.powf(d.q));
            }
            Ok((sc.params.model, fields.report()))
        })
        .collect::<Result<_>>()?;
    let model = members[0].0;
    if members.iter().any(|m| m.0 != model) {
        return Err(Error::Config("a sweep family must keep one model".into()));
    }
    let reports: Vec<ResidualReport> = members.into_iter().map(|m| m.1).collect();
    let fits = Residual::ALL
        .iter()
        .map(|r| fit_order(eps, &reports.iter().map(|rep| rep.get(*r)).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(Sweep { model, eps: eps.to_vec(), reports, fits })
}

/// Largest difference of fitted orders between two sweeps; residuals at
/// round-off in both are skipped, and round-off in only one gives infinity.
pub fn max_order_difference(a: &Sweep, b: &Sweep) -> f64 {
    Residual::ALL
        .iter()
        .map(|&r| match (a.fit(r).order, b.fit(r).order) {
            (x, y) if x.is_infinite() && y.is_infinite() => 0.0,
            (x, y) if x.is_infinite() || y.is_infinite() => f64::INFINITY,
            (x, y) => (x - y).abs(),
        })
        .fold(0.0, f64::max)
}

/// Built-in scenario families of smooth periodic flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    NewtonianInertial,
    NewtonianViscous,
    ViscoelasticSlices,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::NewtonianInertial, Family::NewtonianViscous, Family::ViscoelasticSlices];

    pub fn name(self) -> &'static str {
        match self {
            Family::NewtonianInertial => "newtonian-inertial",
            Family::NewtonianViscous => "newtonian-viscous",
            Family::ViscoelasticSlices => "viscoelastic-slices",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown audit family '{s}' (expected one of: {})",
                Family::ALL.map(|f| f.name()).join(", ")
            ))
        })
    }
}

/// Parameters shared by every member of a family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyParams {
    /// Cells along x on the unit period; four cells along y.
    pub nx: usize,
    pub gamma: f64,
    /// Inclination angle.
    pub theta: f64,
    /// Translate the profiles by this many cells.
    pub shift: usize,
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self { nx: 512, gamma: 0.1, theta: 0.3, shift: 0 }
    }
}

/// Member `eps` of a family: depth `eps (1 + 0.2 sin 2 pi x)` on the bed
/// `0.1 eps sin(2 pi x + 1)`, with regime-specific scalings.
///
/// * inertial: `Re = 1/eps`, `k = eps`, `u = (1 + 0.3 cos 2 pi x, 0.1)`;
/// * viscous: `Re = 1/eps`, `k = 1`, discharge from the lubrication closure;
/// * slices: inertial scalings with `theta = 1/2`, `De = 1`, smooth normal
///   conformation and shear conformation of size `eps`.
pub fn family_member(family: Family, eps: f64, fp: &FamilyParams) -> Result<Scenario> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("eps", format!("must lie in (0, 1), got {eps}")));
    }
    let dx = 1.0 / fp.nx as f64;
    let grid = Grid2D::new(fp.nx, 4, dx, dx, Boundary::Periodic, Boundary::Periodic)?;
    let x = |i: usize| 2.0 * PI * (grid.x(i) + fp.shift as f64 * dx);
    let b = grid.map_cells(|i, _| 0.1 * eps * (x(i) + 1.0).sin());
    let h = grid.map_cells(|i, _| eps * (1.0 + 0.2 * x(i).sin()));
    let u = grid.map_cells(|i, _| [1.0 + 0.3 * x(i).cos(), 0.1]);
    let setup = Setup::new(grid.clone(), build_topography(&grid, b)?, forcing_from_angle(1.0, fp.theta)?)?
        .with_limiter(Limiter::None);
    let q: Vec<[f64; 2]> = h.iter().zip(&u).map(|(h, u)| [h * u[0], h * u[1]]).collect();
    let base = RheologyParams { gamma: fp.gamma, ..Default::default() };
    let sc = match family {
        Family::NewtonianInertial => {
            let params = RheologyParams { model: Model::NewtonianInertial, re: 1.0 / eps, k_friction: eps, ..base };
            Scenario { setup, params, state: ShallowState::new(h, q)?, conf: None }
        }
        Family::NewtonianViscous => {
            let params = RheologyParams { model: Model::NewtonianViscous, re: 1.0 / eps, k_friction: 1.0, ..base };
            let mut state = ShallowState::at_rest(h);
            state.q = models::lubrication_discharge(&setup, &state, None, &params)?;
            Scenario { setup, params, state, conf: None }
        }
        Family::ViscoelasticSlices => {
            let params = RheologyParams {
                model: Model::ViscoelasticSlices,
                re: 1.0 / eps,
                de: 1.0,
                theta_ve: 0.5,
                k_friction: eps,
                ..base
            };
            let mut conf = ConformationState::identity(grid.len());
            for c in 0..grid.len() {
                let s = x(grid.ij(c).0);
                conf.s_hh[c] = [1.0 + 0.1 * s.cos(), 0.05 * s.sin(), 1.0 - 0.1 * s.cos()];
                conf.s_zz[c] = 1.0 + 0.1 * s.sin();
                conf.s_hz[c] = [0.2 * eps * s.sin(), 0.1 * eps * s.cos()];
            }
            Scenario { setup, params, state: ShallowState::new(h, q)?, conf: Some(conf) }
        }
    };
    sc.params.check()?;
    Ok(sc)
}
