//! Uniform Cartesian grids, bottom topography and slope forcing.
//!
//! Fields are stored cell-centered in row-major order (`i + nx * j`). Lateral
//! boundaries are either periodic or zero-gradient copies of the edge cell;
//! every difference operator here goes through [`Grid2D::wrap_x`] /
//! [`Grid2D::wrap_y`] so that both kinds are handled in one place.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    Outflow,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "outflow" | "outflow-copy" => Ok(Boundary::Outflow),
            other => Err(Error::Config(format!(
                "unknown boundary kind '{other}' (expected periodic or outflow)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub bc_x: Boundary,
    pub bc_y: Boundary,
    /// Coordinates of the lower-left domain corner.
    pub x0: f64,
    pub y0: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, bc_x: Boundary, bc_y: Boundary) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::Grid(format!("need nx, ny >= 3, got {nx} x {ny}")));
        }
        if !(dx > 0.0 && dx.is_finite() && dy > 0.0 && dy.is_finite()) {
            return Err(Error::Grid(format!("cell sizes must be positive, got dx={dx}, dy={dy}")));
        }
        Ok(Self { nx, ny, dx, dy, bc_x, bc_y, x0: 0.0, y0: 0.0 })
    }

    pub fn with_origin(mut self, x0: f64, y0: f64) -> Self {
        self.x0 = x0;
        self.y0 = y0;
        self
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    /// Cell-center abscissa of column `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + (i as f64 + 0.5) * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + (j as f64 + 0.5) * self.dy
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    /// Map a possibly out-of-range column index to a stored column.
    #[inline]
    pub fn wrap_x(&self, i: isize) -> usize {
        wrap(i, self.nx, self.bc_x)
    }

    #[inline]
    pub fn wrap_y(&self, j: isize) -> usize {
        wrap(j, self.ny, self.bc_y)
    }

    /// Index of the cell offset by `(di, dj)` from `(i, j)` under the boundary rules.
    #[inline]
    pub fn nb(&self, i: usize, j: usize, di: isize, dj: isize) -> usize {
        self.idx(self.wrap_x(i as isize + di), self.wrap_y(j as isize + dj))
    }

    /// True when the cell touches a boundary of the stored domain.
    pub fn on_ring(&self, c: usize) -> bool {
        let (i, j) = self.ij(c);
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::SizeMismatch { expected: self.len(), got: n });
        }
        Ok(())
    }

    /// Central difference in x.
    pub fn ddx(&self, f: &[f64]) -> Vec<f64> {
        let s = 0.5 / self.dx;
        self.map_cells(|i, j| (f[self.nb(i, j, 1, 0)] - f[self.nb(i, j, -1, 0)]) * s)
    }

    /// Central difference in y.
    pub fn ddy(&self, f: &[f64]) -> Vec<f64> {
        let s = 0.5 / self.dy;
        self.map_cells(|i, j| (f[self.nb(i, j, 0, 1)] - f[self.nb(i, j, 0, -1)]) * s)
    }

    pub fn grad(&self, f: &[f64]) -> Vec<[f64; 2]> {
        let gx = self.ddx(f);
        let gy = self.ddy(f);
        gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect()
    }

    /// Five-point Laplacian.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let (ax, ay) = (1.0 / (self.dx * self.dx), 1.0 / (self.dy * self.dy));
        self.map_cells(|i, j| {
            let c = f[self.idx(i, j)];
            (f[self.nb(i, j, 1, 0)] - 2.0 * c + f[self.nb(i, j, -1, 0)]) * ax
                + (f[self.nb(i, j, 0, 1)] - 2.0 * c + f[self.nb(i, j, 0, -1)]) * ay
        })
    }

    /// Central-difference divergence of a vector field.
    pub fn div(&self, v: &[[f64; 2]]) -> Vec<f64> {
        let (sx, sy) = (0.5 / self.dx, 0.5 / self.dy);
        self.map_cells(|i, j| {
            (v[self.nb(i, j, 1, 0)][0] - v[self.nb(i, j, -1, 0)][0]) * sx
                + (v[self.nb(i, j, 0, 1)][1] - v[self.nb(i, j, 0, -1)][1]) * sy
        })
    }

    pub fn map_cells<T>(&self, mut f: impl FnMut(usize, usize) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(f(i, j));
            }
        }
        out
    }
}

#[inline]
fn wrap(i: isize, n: usize, bc: Boundary) -> usize {
    let n = n as isize;
    match bc {
        Boundary::Periodic => i.rem_euclid(n) as usize,
        Boundary::Outflow => i.clamp(0, n - 1) as usize,
    }
}

/// Bottom elevation with its cached gradient and Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct Topography {
    pub b: Vec<f64>,
    pub grad_b: Vec<[f64; 2]>,
    pub lap_b: Vec<f64>,
}

/// Build a topography from cell values, computing its derivatives with central differences.
pub fn build_topography(grid: &Grid2D, b_values: Vec<f64>) -> Result<Topography> {
    grid.check_len(b_values.len())?;
    if let Some(cell) = b_values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { field: "b", cell });
    }
    let grad_b = grid.grad(&b_values);
    let lap_b = grid.laplacian(&b_values);
    Ok(Topography { b: b_values, grad_b, lap_b })
}

/// Named analytic profiles: `flat`, `incline:slope` (b = -slope * x),
/// `bump:amplitude,width` (Gaussian centered in the domain),
/// `sine:amplitude,wavenumber` (b = A sin(2 pi m x / Lx)).
pub fn topography_from_spec(grid: &Grid2D, spec: &str) -> Result<Topography> {
    let (name, args) = split_spec(spec);
    let nums = parse_numbers(args, spec)?;
    let want = |n: usize| -> Result<()> {
        if nums.len() != n {
            return Err(Error::Config(format!("topography '{spec}' expects {n} numeric arguments")));
        }
        Ok(())
    };
    let (xc, yc) = (grid.x0 + 0.5 * grid.lx(), grid.y0 + 0.5 * grid.ly());
    let b = match name {
        "flat" => {
            want(0)?;
            vec![0.0; grid.len()]
        }
        "incline" => {
            want(1)?;
            grid.map_cells(|i, _| -nums[0] * grid.x(i))
        }
        "bump" => {
            want(2)?;
            let (a, w) = (nums[0], nums[1]);
            if w <= 0.0 {
                return Err(Error::Config("bump width must be positive".into()));
            }
            grid.map_cells(|i, j| {
                let r2 = (grid.x(i) - xc).powi(2) + (grid.y(j) - yc).powi(2);
                a * (-r2 / (w * w)).exp()
            })
        }
        "sine" => {
            want(2)?;
            let (a, m) = (nums[0], nums[1]);
            let kx = 2.0 * std::f64::consts::PI * m / grid.lx();
            grid.map_cells(|i, _| a * (kx * (grid.x(i) - grid.x0)).sin())
        }
        _ => return Err(Error::Config(format!("unknown topography profile '{spec}'"))),
    };
    build_topography(grid, b)
}

pub(crate) fn split_spec(spec: &str) -> (&str, &str) {
    match spec.split_once(':') {
        Some((n, a)) => (n.trim(), a.trim()),
        None => (spec.trim(), ""),
    }
}

pub(crate) fn parse_numbers(args: &str, spec: &str) -> Result<Vec<f64>> {
    if args.is_empty() {
        return Ok(Vec::new());
    }
    args.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{s}' in '{spec}'")))
        })
        .collect()
}

/// Body force per unit mass in the slope-aligned frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forcing {
    pub g: f64,
    pub theta: f64,
    pub f_h: [f64; 2],
    pub f_z: f64,
}

impl Forcing {
    /// Effective gravity normal to the slope, `-f_z = g cos(theta)`.
    pub fn g_normal(&self) -> f64 {
        -self.f_z
    }
}

pub fn forcing_from_angle(g: f64, theta: f64) -> Result<Forcing> {
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::Forcing(format!("gravity must be finite and >= 0, got {g}")));
    }
    if !(theta.is_finite() && theta.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(Error::Forcing(format!("inclination must satisfy |theta| < pi/2, got {theta}")));
    }
    Ok(Forcing { g, theta, f_h: [g * theta.sin(), 0.0], f_z: -g * theta.cos() })
}
