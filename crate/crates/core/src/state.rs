//! Flow and conformation containers, the rheology parameter record, and
//! validation of both.

use std::fmt;

use crate::{Error, Result};

/// Pivot tolerance for the positive-definiteness test.
pub const SPD_TOL: f64 = 1e-12;

/// Depth below which a cell is treated as dry.
pub const H_DRY: f64 = 1e-12;

/// Depth `h` and momentum `q = h u` per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowState {
    pub h: Vec<f64>,
    pub q: Vec<[f64; 2]>,
}

impl ShallowState {
    pub fn new(h: Vec<f64>, q: Vec<[f64; 2]>) -> Result<Self> {
        if h.len() != q.len() {
            return Err(Error::SizeMismatch { expected: h.len(), got: q.len() });
        }
        Ok(Self { h, q })
    }

    pub fn at_rest(h: Vec<f64>) -> Self {
        let q = vec![[0.0; 2]; h.len()];
        Self { h, q }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Depth-averaged velocity in cell `c` (zero in dry cells).
    #[inline]
    pub fn velocity(&self, c: usize) -> [f64; 2] {
        velocity(self.h[c], self.q[c])
    }

    pub fn velocities(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|c| self.velocity(c)).collect()
    }
}

/// Velocity from depth and momentum, desingularized near dry cells.
#[inline]
pub fn velocity(h: f64, q: [f64; 2]) -> [f64; 2] {
    if h <= H_DRY {
        return [0.0; 2];
    }
    const H_EPS: f64 = 1e-8;
    if h >= H_EPS {
        [q[0] / h, q[1] / h]
    } else {
        let s = 2.0 * h / (h * h + H_EPS * H_EPS);
        [q[0] * s, q[1] * s]
    }
}

/// Symmetric conformation tensor split into horizontal block, shear column and
/// vertical entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformationState {
    /// `[xx, xy, yy]` of the horizontal block.
    pub s_hh: Vec<[f64; 3]>,
    pub s_hz: Vec<[f64; 2]>,
    pub s_zz: Vec<f64>,
}

impl ConformationState {
    pub fn identity(n: usize) -> Self {
        Self { s_hh: vec![[1.0, 0.0, 1.0]; n], s_hz: vec![[0.0; 2]; n], s_zz: vec![1.0; n] }
    }

    pub fn len(&self) -> usize {
        self.s_zz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_zz.is_empty()
    }

    pub fn trace(&self, c: usize) -> f64 {
        self.s_hh[c][0] + self.s_hh[c][2] + self.s_zz[c]
    }

    pub fn set_identity(&mut self, c: usize) {
        self.s_hh[c] = [1.0, 0.0, 1.0];
        self.s_hz[c] = [0.0; 2];
        self.s_zz[c] = 1.0;
    }
}

/// Assemble the full symmetric 3x3 conformation tensor of one cell.
pub fn assemble_sigma3(conf: &ConformationState, cell: usize) -> Result<[[f64; 3]; 3]> {
    if cell >= conf.len() {
        return Err(Error::Index(cell));
    }
    let [xx, xy, yy] = conf.s_hh[cell];
    let [xz, yz] = conf.s_hz[cell];
    let zz = conf.s_zz[cell];
    Ok([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])
}

/// Smallest pivot of an LDLᵀ factorization without pivoting. The matrix is
/// positive definite iff every pivot is positive; the first non-positive pivot
/// is returned as soon as it appears.
pub fn min_cholesky_pivot(m: &[[f64; 3]; 3]) -> f64 {
    let d1 = m[0][0];
    if d1 <= 0.0 {
        return d1;
    }
    let l21 = m[1][0] / d1;
    let l31 = m[2][0] / d1;
    let d2 = m[1][1] - l21 * m[1][0];
    if d2 <= 0.0 {
        return d2;
    }
    let l32 = (m[2][1] - l31 * m[1][0]) / d2;
    let d3 = m[2][2] - l31 * m[2][0] - l32 * l32 * d2;
    d1.min(d2).min(d3)
}

pub fn is_spd(m: &[[f64; 3]; 3]) -> bool {
    min_cholesky_pivot(m) > SPD_TOL
}

/// Eigenvalues of a symmetric 3x3 matrix in ascending order (trigonometric
/// closed form).
pub fn sym3_eigenvalues(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(|a, b| a.total_cmp(b));
        return e;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut bm = *m;
    for (k, row) in bm.iter_mut().enumerate() {
        row[k] -= q;
        for v in row.iter_mut() {
            *v /= p;
        }
    }
    let det = bm[0][0] * (bm[1][1] * bm[2][2] - bm[1][2] * bm[2][1])
        - bm[0][1] * (bm[1][0] * bm[2][2] - bm[1][2] * bm[2][0])
        + bm[0][2] * (bm[1][0] * bm[2][1] - bm[1][1] * bm[2][0]);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut e = [e1, e2, e3];
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

/// Reduced model selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    NewtonianInertial,
    NewtonianViscous,
    PowerLawInertial,
    PowerLawViscous,
    ViscoelasticInertial,
    ViscoelasticInertialHW,
    ViscoelasticSlices,
    ViscoelasticSlicesHW,
    ViscoelasticViscous,
}

impl Model {
    pub const ALL: [Model; 9] = [
        Model::NewtonianInertial,
        Model::NewtonianViscous,
        Model::PowerLawInertial,
        Model::PowerLawViscous,
        Model::ViscoelasticInertial,
        Model::ViscoelasticInertialHW,
        Model::ViscoelasticSlices,
        Model::ViscoelasticSlicesHW,
        Model::ViscoelasticViscous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::NewtonianInertial => "NewtonianInertial",
            Model::NewtonianViscous => "NewtonianViscous",
            Model::PowerLawInertial => "PowerLawInertial",
            Model::PowerLawViscous => "PowerLawViscous",
            Model::ViscoelasticInertial => "ViscoelasticInertial",
            Model::ViscoelasticInertialHW => "ViscoelasticInertialHW",
            Model::ViscoelasticSlices => "ViscoelasticSlices",
            Model::ViscoelasticSlicesHW => "ViscoelasticSlicesHW",
            Model::ViscoelasticViscous => "ViscoelasticViscous",
        }
    }

    pub fn is_viscoelastic(self) -> bool {
        matches!(
            self,
            Model::ViscoelasticInertial
                | Model::ViscoelasticInertialHW
                | Model::ViscoelasticSlices
                | Model::ViscoelasticSlicesHW
                | Model::ViscoelasticViscous
        )
    }

    /// Models that evolve a momentum equation (shallow-water type).
    pub fn has_momentum(self) -> bool {
        !matches!(self, Model::NewtonianViscous | Model::PowerLawViscous | Model::ViscoelasticViscous)
    }

    /// High-Weissenberg variants carry no relaxation term.
    pub fn has_relaxation(self) -> bool {
        self.is_viscoelastic() && !matches!(self, Model::ViscoelasticInertialHW | Model::ViscoelasticSlicesHW)
    }

    /// Models for which the finitely extensible closure is defined.
    pub fn allows_fenep(self) -> bool {
        matches!(self, Model::ViscoelasticInertial | Model::ViscoelasticSlicesHW)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closure {
    Ucm,
    FeneP,
}

impl std::str::FromStr for Closure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UCM" => Ok(Closure::Ucm),
            "FENEP" | "FENE-P" => Ok(Closure::FeneP),
            _ => Err(Error::Config(format!("unknown closure '{s}' (expected UCM or FENEP)"))),
        }
    }
}

/// Nondimensional numbers and model switches.
#[derive(Debug, Clone, PartialEq)]
pub struct RheologyParams {
    /// Reynolds number; `f64::INFINITY` switches viscous terms off.
    pub re: f64,
    pub de: f64,
    /// Polymer viscosity fraction, `0 <= theta_ve < 1`.
    pub theta_ve: f64,
    /// Navier friction coefficient.
    pub k_friction: f64,
    pub gamma: f64,
    pub n_power: f64,
    pub bi: f64,
    /// FENE extensibility; infinity gives the UCM limit.
    pub b_fene: f64,
    pub model: Model,
    pub closure: Closure,
    /// Add hydrostatic and capillary driving to the lubrication discharge.
    pub theta_small: bool,
    /// Apply the `(1 - h Re k / 3)` slip correction in inertial friction.
    /// Disabling it (with `re = inf`, `gamma = 0`) gives the leading-order
    /// shallow-water system.
    pub slip_correction: bool,
    /// Use `h` instead of `b + h` in the viscoelastic cross-friction term.
    pub cross_term_depth_only: bool,
}

impl Default for RheologyParams {
    fn default() -> Self {
        Self {
            re: 10.0,
            de: 1.0,
            theta_ve: 0.0,
            k_friction: 0.0,
            gamma: 0.0,
            n_power: 1.0,
            bi: 0.0,
            b_fene: f64::INFINITY,
            model: Model::NewtonianInertial,
            closure: Closure::Ucm,
            theta_small: false,
            slip_correction: true,
            cross_term_depth_only: false,
        }
    }
}

impl RheologyParams {
    /// Every violated precondition, as human-readable messages naming the field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.re > 0.0) {
            v.push(format!("re must be > 0 (got {})", self.re));
        }
        if self.model.is_viscoelastic() && !(self.de > 0.0 && self.de.is_finite()) {
            v.push(format!("de must be finite and > 0 for viscoelastic models (got {})", self.de));
        }
        if !(0.0..1.0).contains(&self.theta_ve) {
            v.push(format!("theta_ve must lie in [0, 1) (got {})", self.theta_ve));
        }
        if !(self.k_friction >= 0.0 && self.k_friction.is_finite()) {
            v.push(format!("k_friction must be finite and >= 0 (got {})", self.k_friction));
        }
        if !self.model.has_momentum() && !(self.k_friction > 0.0) {
            v.push(format!("k_friction must be > 0 for the viscous-regime model {}", self.model));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            v.push(format!("gamma must be finite and >= 0 (got {})", self.gamma));
        }
        if !(self.n_power > 0.0 && self.n_power.is_finite()) {
            v.push(format!("n_power must be finite and > 0 (got {})", self.n_power));
        }
        if !(self.bi >= 0.0 && self.bi.is_finite()) {
            v.push(format!("bi must be finite and >= 0 (got {})", self.bi));
        }
        if self.closure == Closure::FeneP {
            if !(self.b_fene > 3.0) {
                v.push(format!("b_fene must be > 3 with the FENEP closure (got {})", self.b_fene));
            }
            if !self.model.allows_fenep() {
                v.push(format!("closure FENEP is not defined for model {}", self.model));
            }
        }
        v
    }

    pub fn check(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Weissenberg number `De Re / theta`.
    pub fn weissenberg(&self) -> f64 {
        self.de * self.re / self.theta_ve
    }

    /// `Re * k`, taken as zero when friction vanishes (so that `Re = inf, k = 0` is inviscid).
    pub fn re_k(&self) -> f64 {
        if self.k_friction == 0.0 {
            0.0
        } else {
            self.re * self.k_friction
        }
    }

    /// `1 / Re`, zero for infinite Reynolds number.
    pub fn inv_re(&self) -> f64 {
        1.0 / self.re
    }

    /// The FENE-P factor `1 / (1 - tr / b)`; one for the UCM closure.
    pub fn fene_factor(&self, trace: f64) -> Result<f64> {
        match self.closure {
            Closure::Ucm => Ok(1.0),
            Closure::FeneP => {
                if trace >= self.b_fene {
                    return Err(Error::Closure(format!(
                        "conformation trace {trace} reached the extensibility bound {}",
                        self.b_fene
                    )));
                }
                Ok(1.0 / (1.0 - trace / self.b_fene))
            }
        }
    }
}

/// One violated invariant found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    NegativeDepth { cell: usize, h: f64 },
    NonFinite { cell: usize, field: &'static str },
    MomentumInDryCell { cell: usize },
    NotPositiveDefinite { cell: usize, min_pivot: f64 },
    Extensibility { cell: usize, trace: f64, b_fene: f64 },
    SizeMismatch { field: &'static str, expected: usize, got: usize },
    Parameter(String),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NegativeDepth { cell, h } => write!(f, "negative depth {h} at cell {cell}"),
            Diagnostic::NonFinite { cell, field } => write!(f, "non-finite {field} at cell {cell}"),
            Diagnostic::MomentumInDryCell { cell } => write!(f, "nonzero momentum in dry cell {cell}"),
            Diagnostic::NotPositiveDefinite { cell, min_pivot } => {
                write!(f, "conformation not positive definite at cell {cell} (min pivot {min_pivot})")
            }
            Diagnostic::Extensibility { cell, trace, b_fene } => {
                write!(f, "conformation trace {trace} >= b_fene {b_fene} at cell {cell}")
            }
            Diagnostic::SizeMismatch { field, expected, got } => {
                write!(f, "{field} has {got} cells, expected {expected}")
            }
            Diagnostic::Parameter(m) => write!(f, "{m}"),
        }
    }
}

/// Report every violated invariant of a state; never mutates.
pub fn validate(state: &ShallowState, conf: Option<&ConformationState>, params: &RheologyParams) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = params.violations().into_iter().map(Diagnostic::Parameter).collect();
    let n = state.h.len();
    if state.q.len() != n {
        out.push(Diagnostic::SizeMismatch { field: "q", expected: n, got: state.q.len() });
        return out;
    }
    for c in 0..n {
        let h = state.h[c];
        if !h.is_finite() {
            out.push(Diagnostic::NonFinite { cell: c, field: "h" });
        } else if h < 0.0 {
            out.push(Diagnostic::NegativeDepth { cell: c, h });
        }
        if !(state.q[c][0].is_finite() && state.q[c][1].is_finite()) {
            out.push(Diagnostic::NonFinite { cell: c, field: "q" });
        } else if h == 0.0 && (state.q[c][0] != 0.0 || state.q[c][1] != 0.0) {
            out.push(Diagnostic::MomentumInDryCell { cell: c });
        }
    }
    if let Some(conf) = conf {
        for (field, got) in [("s_hh", conf.s_hh.len()), ("s_hz", conf.s_hz.len()), ("s_zz", conf.s_zz.len())] {
            if got != n {
                out.push(Diagnostic::SizeMismatch { field, expected: n, got });
                return out;
            }
        }
        for c in 0..n {
            let m = assemble_sigma3(conf, c).expect("index checked");
            if m.iter().flatten().any(|v| !v.is_finite()) {
                out.push(Diagnostic::NonFinite { cell: c, field: "sigma" });
                continue;
            }
            let p = min_cholesky_pivot(&m);
            if !(p > SPD_TOL) {
                out.push(Diagnostic::NotPositiveDefinite { cell: c, min_pivot: p });
            }
            if params.closure == Closure::FeneP {
                let tr = conf.trace(c);
                if tr >= params.b_fene {
                    out.push(Diagnostic::Extensibility { cell: c, trace: tr, b_fene: params.b_fene });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn eig_oracle(m: &[[f64; 3]; 3]) -> [f64; 3] {
        let mm = Matrix3::from_fn(|i, j| m[i][j]);
        let mut e: Vec<f64> = mm.symmetric_eigenvalues().iter().cloned().collect();
        e.sort_by(|a, b| a.total_cmp(b));
        [e[0], e[1], e[2]]
    }

    #[test]
    fn equilibrium_state_is_valid() {
        let s = ShallowState::at_rest(vec![1.0; 9]);
        let c = ConformationState::identity(9);
        assert!(validate(&s, Some(&c), &RheologyParams::default()).is_empty());
    }

    #[test]
    fn negative_szz_reported_at_its_cell() {
        let s = ShallowState::at_rest(vec![1.0; 9]);
        let mut c = ConformationState::identity(9);
        c.s_zz[4] = -0.1;
        let d = validate(&s, Some(&c), &RheologyParams::default());
        assert_eq!(d.len(), 1);
        assert!(matches!(d[0], Diagnostic::NotPositiveDefinite { cell: 4, .. }));
    }

    #[test]
    fn fene_trace_violation_reported() {
        let p = RheologyParams {
            model: Model::ViscoelasticInertial,
            closure: Closure::FeneP,
            b_fene: 10.0,
            theta_ve: 0.5,
            ..Default::default()
        };
        let s = ShallowState::at_rest(vec![1.0; 4]);
        let mut c = ConformationState::identity(4);
        c.s_zz[2] = 11.0 - 2.0; // trace = b_fene + 1
        let d = validate(&s, Some(&c), &p);
        assert_eq!(d, vec![Diagnostic::Extensibility { cell: 2, trace: 11.0, b_fene: 10.0 }]);
    }

    #[test]
    fn adversarial_state_reports_exact_set() {
        let mut s = ShallowState::at_rest(vec![1.0; 5]);
        s.h[0] = -1.0;
        s.h[1] = 0.0;
        s.q[1] = [1.0, 0.0];
        s.q[3] = [f64::NAN, 0.0];
        let d = validate(&s, None, &RheologyParams::default());
        assert_eq!(
            d,
            vec![
                Diagnostic::NegativeDepth { cell: 0, h: -1.0 },
                Diagnostic::MomentumInDryCell { cell: 1 },
                Diagnostic::NonFinite { cell: 3, field: "q" },
            ]
        );
    }

    #[test]
    fn assemble_examples() {
        let mut c = ConformationState::identity(2);
        let m = assemble_sigma3(&c, 0).unwrap();
        assert_eq!(m, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        c.s_hh[1] = [2.0, 0.0, 2.0];
        c.s_zz[1] = 0.5;
        let m = assemble_sigma3(&c, 1).unwrap();
        let e = sym3_eigenvalues(&m);
        assert_eq!(e, [0.5, 2.0, 2.0]);
        assert!(is_spd(&m));
        assert!(assemble_sigma3(&c, 2).is_err());
    }

    #[test]
    fn semidefinite_example_fails_spd() {
        let mut c = ConformationState::identity(1);
        c.s_hz[0] = [1.0, 0.0];
        let m = assemble_sigma3(&c, 0).unwrap();
        // characteristic polynomial (1-l)((1-l)^2-1) has roots 0, 1, 2
        let e = sym3_eigenvalues(&m);
        for (a, b) in e.iter().zip([0.0, 1.0, 2.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(!is_spd(&m));
        assert!(min_cholesky_pivot(&m).abs() < 1e-15);
    }

    #[test]
    fn params_violations_name_fields() {
        let p = RheologyParams { theta_ve: 1.2, ..Default::default() };
        let v = p.violations();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("theta_ve"));
        let p = RheologyParams { model: Model::NewtonianViscous, k_friction: 0.0, ..Default::default() };
        assert!(p.violations()[0].contains("k_friction"));
        let p = RheologyParams { closure: Closure::FeneP, b_fene: 2.0, ..Default::default() };
        assert_eq!(p.violations().len(), 2);
    }

    #[test]
    fn fene_factor_values() {
        let p = RheologyParams {
            model: Model::ViscoelasticInertial,
            closure: Closure::FeneP,
            b_fene: 8.0,
            ..Default::default()
        };
        assert_eq!(p.fene_factor(4.0).unwrap(), 2.0);
        assert!(p.fene_factor(8.0).is_err());
        let u = RheologyParams::default();
        assert_eq!(u.fene_factor(1e9).unwrap(), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn assemble_then_extract_is_identity(v in proptest::collection::vec(-5.0f64..5.0, 6)) {
                let c = ConformationState { s_hh: vec![[v[0], v[1], v[2]]], s_hz: vec![[v[3], v[4]]], s_zz: vec![v[5]] };
                let m = assemble_sigma3(&c, 0).unwrap();
                prop_assert_eq!([m[0][0], m[0][1], m[1][1]], c.s_hh[0]);
                prop_assert_eq!([m[0][2], m[1][2]], c.s_hz[0]);
                prop_assert_eq!(m[2][2], c.s_zz[0]);
                for i in 0..3 { for j in 0..3 { prop_assert_eq!(m[i][j], m[j][i]); } }
            }

            #[test]
            fn closed_form_eigenvalues_match_oracle(v in proptest::collection::vec(-5.0f64..5.0, 6)) {
                let m = [[v[0], v[1], v[3]], [v[1], v[2], v[4]], [v[3], v[4], v[5]]];
                let a = sym3_eigenvalues(&m);
                let b = eig_oracle(&m);
                for k in 0..3 {
                    prop_assert!((a[k] - b[k]).abs() < 1e-9 * (1.0 + b[k].abs()));
                }
            }

            #[test]
            fn pivot_sign_agrees_with_min_eigenvalue(v in proptest::collection::vec(-3.0f64..3.0, 6)) {
                let m = [[v[0], v[1], v[3]], [v[1], v[2], v[4]], [v[3], v[4], v[5]]];
                let e = eig_oracle(&m)[0];
                if e.abs() > 1e-6 {
                    prop_assert_eq!(min_cholesky_pivot(&m) > 0.0, e > 0.0);
                }
            }
        }
    }
}
