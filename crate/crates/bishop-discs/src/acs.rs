//! Almost complex structures on domains of `C^2`.
//!
//! A structure is stored as the complex matrix field `A` with
//! `A(Z) v = (J_st + J(Z))^{-1} (J_st - J(Z)) (conj v)`, so that a disc is
//! `J`-holomorphic iff `Z_zetabar = A(Z) conj(Z_zeta)`. Real coordinates are
//! ordered `(Re z, Im z, Re w, Im w)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::grid::{DiscEval, DiscFn, DiscGrid, Point2C};
use crate::ops::{cauchy_green, cauchy_green_at};
use crate::{Error, Result, C64};

pub type M2 = Matrix2<C64>;
pub type M4 = Matrix4<f64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Default central-difference step for derivatives of black-box fields.
pub const FD_STEP: f64 = 1e-5;

pub fn j_st() -> M4 {
    let mut j = M4::zeros();
    for c in 0..2 {
        j[(2 * c + 1, 2 * c)] = 1.0;
        j[(2 * c, 2 * c + 1)] = -1.0;
    }
    j
}

fn nan_m2() -> M2 {
    M2::from_element(C64::new(f64::NAN, f64::NAN))
}

/// Real 4x4 matrix of `u -> C u`.
pub fn real_of_linear(c: &M2) -> M4 {
    let mut m = M4::zeros();
    for col in 0..2 {
        for (k, unit) in [C64::new(1.0, 0.0), I].into_iter().enumerate() {
            for row in 0..2 {
                let v = c[(row, col)] * unit;
                m[(2 * row, 2 * col + k)] = v.re;
                m[(2 * row + 1, 2 * col + k)] = v.im;
            }
        }
    }
    m
}

/// Real 4x4 matrix of `u -> A conj(u)`.
pub fn real_of_antilinear(a: &M2) -> M4 {
    let mut m = M4::zeros();
    for col in 0..2 {
        for (k, unit) in [C64::new(1.0, 0.0), -I].into_iter().enumerate() {
            for row in 0..2 {
                let v = a[(row, col)] * unit;
                m[(2 * row, 2 * col + k)] = v.re;
                m[(2 * row + 1, 2 * col + k)] = v.im;
            }
        }
    }
    m
}

/// Largest singular value of a complex 2x2 matrix.
pub fn op_norm(a: &M2) -> f64 {
    let h = a.adjoint() * a;
    let (p, q, b) = (h[(0, 0)].re, h[(1, 1)].re, h[(0, 1)]);
    let lam = 0.5 * (p + q) + (0.25 * (p - q) * (p - q) + b.norm_sqr()).sqrt();
    lam.max(0.0).sqrt()
}

pub fn max_abs4(m: &M4) -> f64 {
    m.iter().fold(0.0, |acc, v| crate::nan_max(acc, v.abs()))
}

/// `A` from `J` at one point.
pub fn a_from_j(j: &M4) -> Result<M2> {
    let js = j_st();
    let inv = (js + j).try_inverse().ok_or(Error::StructureTooFar)?;
    if !inv.iter().all(|v| v.is_finite()) {
        return Err(Error::StructureTooFar);
    }
    let m = inv * (js - j);
    let mut a = M2::zeros();
    for col in 0..2 {
        for row in 0..2 {
            a[(row, col)] = C64::new(m[(2 * row, 2 * col)], m[(2 * row + 1, 2 * col)]);
        }
    }
    // the map must be antilinear: M(i e) = -i A e
    let defect = max_abs4(&(m - real_of_antilinear(&a)));
    if defect > 1e-8 * (1.0 + max_abs4(&m)) {
        return Err(Error::InvalidStructure(format!(
            "(J_st + J)^-1 (J_st - J) is not antilinear (defect {defect:.3e}); J^2 != -I?"
        )));
    }
    Ok(a)
}

/// `J = J_st (I - Q)(I + Q)^{-1}` with `Q u = A conj(u)`.
pub fn j_from_a(a: &M2) -> Result<M4> {
    let n = op_norm(a);
    if !(n < 1.0) {
        return Err(Error::InvalidStructure(format!("||A|| = {n:.3e} is not below 1")));
    }
    let q = real_of_antilinear(a);
    let id = M4::identity();
    let inv = (id + q)
        .try_inverse()
        .ok_or_else(|| Error::InvalidStructure("I + Q singular".into()))?;
    Ok(j_st() * (id - q) * inv)
}

pub fn j_squared_defect(j: &M4) -> f64 {
    max_abs4(&(j * j + M4::identity()))
}

type FieldFn<T> = Arc<dyn Fn(Point2C) -> T + Send + Sync>;

/// Unit displacement along real coordinate `k`.
fn real_dir(k: usize) -> Point2C {
    let e = [C64::new(1.0, 0.0), I][k % 2];
    if k < 2 {
        Point2C::new(e, ZERO)
    } else {
        Point2C::new(ZERO, e)
    }
}

/// Central-difference partial derivatives along the four real coordinates.
pub fn real_partials<T, F>(f: F, p: Point2C, h: f64) -> [T; 4]
where
    F: Fn(Point2C) -> T,
    T: std::ops::Sub<Output = T> + std::ops::Mul<C64, Output = T>,
{
    std::array::from_fn(|k| {
        let d = real_dir(k) * C64::new(h, 0.0);
        (f(p + d) - f(p - d)) * C64::new(0.5 / h, 0.0)
    })
}

/// `([d/dz, d/dw], [d/dzbar, d/dwbar])` from real partials.
pub fn wirtinger_from_partials(d: &[M2; 4]) -> ([M2; 2], [M2; 2]) {
    let h = C64::new(0.5, 0.0);
    let dz = [(d[0] - d[1] * I) * h, (d[2] - d[3] * I) * h];
    let dzb = [(d[0] + d[1] * I) * h, (d[2] + d[3] * I) * h];
    (dz, dzb)
}

/// The matrix field `Z -> A(Z)` of a structure, with optional analytic derivatives.
#[derive(Clone)]
pub struct AMatrixField {
    a: FieldFn<M2>,
    dz: Option<FieldFn<[M2; 2]>>,
    dzb: Option<FieldFn<[M2; 2]>>,
    step: f64,
}

impl fmt::Debug for AMatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AMatrixField")
            .field("analytic_derivatives", &self.dz.is_some())
            .field("step", &self.step)
            .finish()
    }
}

impl AMatrixField {
    pub fn new(a: impl Fn(Point2C) -> M2 + Send + Sync + 'static) -> Self {
        Self {
            a: Arc::new(a),
            dz: None,
            dzb: None,
            step: FD_STEP,
        }
    }

    pub fn zero() -> Self {
        let mut f = Self::new(|_| M2::zeros());
        f.dz = Some(Arc::new(|_| [M2::zeros(); 2]));
        f.dzb = Some(Arc::new(|_| [M2::zeros(); 2]));
        f
    }

    pub fn with_derivatives(
        mut self,
        dz: impl Fn(Point2C) -> [M2; 2] + Send + Sync + 'static,
        dzb: impl Fn(Point2C) -> [M2; 2] + Send + Sync + 'static,
    ) -> Self {
        self.dz = Some(Arc::new(dz));
        self.dzb = Some(Arc::new(dzb));
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn eval(&self, p: Point2C) -> M2 {
        (self.a)(p)
    }

    /// `[A_z, A_w]` at `p`.
    pub fn a_z(&self, p: Point2C) -> [M2; 2] {
        match &self.dz {
            Some(d) => d(p),
            None => wirtinger_from_partials(&self.real_partials(p)).0,
        }
    }

    /// `[A_zbar, A_wbar]` at `p`.
    pub fn a_zbar(&self, p: Point2C) -> [M2; 2] {
        match &self.dzb {
            Some(d) => d(p),
            None => wirtinger_from_partials(&self.real_partials(p)).1,
        }
    }

    /// Derivatives along the real coordinates `(Re z, Im z, Re w, Im w)`.
    pub fn real_partials(&self, p: Point2C) -> [M2; 4] {
        if let (Some(dz), Some(dzb)) = (&self.dz, &self.dzb) {
            let (a, b) = (dz(p), dzb(p));
            return [a[0] + b[0], (a[0] - b[0]) * I, a[1] + b[1], (a[1] - b[1]) * I];
        }
        real_partials(|q| self.eval(q), p, self.step)
    }

    /// Derivative of `A` at `p` in the real direction `dp`.
    pub fn directional(&self, p: Point2C, dp: Point2C) -> M2 {
        let d = self.real_partials(p);
        let x = dp.to_real();
        (0..4).fold(M2::zeros(), |acc, k| acc + d[k] * C64::new(x[k], 0.0))
    }

    pub fn to_structure(&self) -> AlmostComplexStructure {
        let a = self.clone();
        AlmostComplexStructure::new(move |p| j_from_a(&a.eval(p)).unwrap_or_else(|_| M4::from_element(f64::NAN)))
    }

    /// Sup of `||A||` over the given points.
    pub fn sup_norm(&self, pts: &[Point2C]) -> f64 {
        pts.iter().fold(0.0, |m, &p| crate::nan_max(m, op_norm(&self.eval(p))))
    }
}

/// A structure given by its real `4x4` matrix field.
#[derive(Clone)]
pub struct AlmostComplexStructure {
    j: FieldFn<M4>,
}

impl fmt::Debug for AlmostComplexStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AlmostComplexStructure")
    }
}

impl AlmostComplexStructure {
    pub fn new(j: impl Fn(Point2C) -> M4 + Send + Sync + 'static) -> Self {
        Self { j: Arc::new(j) }
    }

    pub fn standard() -> Self {
        Self::new(|_| j_st())
    }

    pub fn eval(&self, p: Point2C) -> M4 {
        (self.j)(p)
    }

    pub fn a_at(&self, p: Point2C) -> Result<M2> {
        a_from_j(&self.eval(p))
    }

    /// Converts to the canonical `A` encoding; points where the conversion
    /// fails map to NaN matrices.
    pub fn to_a_field(&self) -> AMatrixField {
        let s = self.clone();
        AMatrixField::new(move |p| s.a_at(p).unwrap_or_else(|_| nan_m2()))
    }

    pub fn squared_defect(&self, p: Point2C) -> f64 {
        j_squared_defect(&self.eval(p))
    }
}

/// `A'` from `A` and the Jacobians `Z'_Z`, `Z'_Zbar` at the same point:
/// `A' = (Z'_Z A + Z'_Zbar)(conj(Z'_Z) + conj(Z'_Zbar) A)^{-1}`.
pub fn transform_a_at(a: &M2, zp_z: &M2, zp_zb: &M2) -> Result<M2> {
    let lhs = zp_z * a + zp_zb;
    let rhs = zp_z.map(|v| v.conj()) + zp_zb.map(|v| v.conj()) * a;
    let inv = rhs
        .try_inverse()
        .ok_or_else(|| Error::DegenerateChange("conj(Z'_Zbar) + conj(Z'_Z) A is singular".into()))?;
    if !inv.iter().all(|v| v.is_finite()) || rhs.determinant().norm() < 1e-14 {
        return Err(Error::DegenerateChange(
            "conj(Z'_Zbar) + conj(Z'_Z) A is singular".into(),
        ));
    }
    Ok(lhs * inv)
}

type JacFn = FieldFn<(M2, M2)>;

/// A local diffeomorphism `Z -> Z'` with its complex Jacobians `(Z'_Z, Z'_Zbar)`.
#[derive(Clone)]
pub struct CoordinateChange {
    forward: FieldFn<Point2C>,
    jac: Option<JacFn>,
    step: f64,
}

impl fmt::Debug for CoordinateChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoordinateChange")
            .field("analytic_jacobian", &self.jac.is_some())
            .finish()
    }
}

fn point_sub(a: Point2C, b: Point2C) -> Point2C {
    a - b
}

impl CoordinateChange {
    pub fn new(forward: impl Fn(Point2C) -> Point2C + Send + Sync + 'static) -> Self {
        Self {
            forward: Arc::new(forward),
            jac: None,
            step: FD_STEP,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(Point2C) -> (M2, M2) + Send + Sync + 'static) -> Self {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn identity() -> Self {
        Self::linear(M2::identity())
    }

    /// `Z' = C Z`.
    pub fn linear(c: M2) -> Self {
        Self::new(move |p| {
            let v = c * nalgebra::Vector2::new(p.z, p.w);
            Point2C::new(v[0], v[1])
        })
        .with_jacobian(move |_| (c, M2::zeros()))
    }

    pub fn apply(&self, p: Point2C) -> Point2C {
        (self.forward)(p)
    }

    /// `(Z'_Z, Z'_Zbar)` at `p`.
    pub fn jacobians(&self, p: Point2C) -> (M2, M2) {
        if let Some(j) = &self.jac {
            return j(p);
        }
        let f = |q: Point2C| -> [C64; 2] {
            let v = self.apply(q);
            [v.z, v.w]
        };
        let h = self.step;
        let mut d = [[ZERO; 2]; 4];
        for (k, dk) in d.iter_mut().enumerate() {
            let e = real_dir(k) * C64::new(h, 0.0);
            let (a, b) = (f(p + e), f(p - e));
            *dk = [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)];
        }
        let mut jz = M2::zeros();
        let mut jzb = M2::zeros();
        for row in 0..2 {
            for col in 0..2 {
                let (dx, dy) = (d[2 * col][row], d[2 * col + 1][row]);
                jz[(row, col)] = (dx - I * dy) * 0.5;
                jzb[(row, col)] = (dx + I * dy) * 0.5;
            }
        }
        (jz, jzb)
    }

    /// Real `4x4` Jacobian.
    pub fn real_jacobian(&self, p: Point2C) -> M4 {
        let (jz, jzb) = self.jacobians(p);
        real_of_linear(&jz) + real_of_antilinear(&jzb)
    }

    /// Solves `self.apply(Z) = target` by Newton's method from `guess`.
    pub fn inverse(&self, target: Point2C, guess: Point2C) -> Result<Point2C> {
        let mut p = guess;
        for _ in 0..60 {
            let r = point_sub(self.apply(p), target);
            if r.norm() <= 1e-14 * (1.0 + target.norm()) {
                return Ok(p);
            }
            let jm = self.real_jacobian(p);
            let inv = jm
                .try_inverse()
                .ok_or_else(|| Error::DegenerateChange("singular Jacobian in inversion".into()))?;
            let dx = inv * Vector4::from(r.to_real());
            p = p - Point2C::from_real([dx[0], dx[1], dx[2], dx[3]]);
            if !p.is_finite() {
                break;
            }
        }
        let r = point_sub(self.apply(p), target).norm();
        if r <= 1e-10 * (1.0 + target.norm()) {
            Ok(p)
        } else {
            Err(Error::DegenerateChange(format!(
                "Newton inversion failed (residual {r:.3e})"
            )))
        }
    }

    /// `second o self`. Analytic Jacobians compose by the chain rule.
    pub fn then(&self, second: &CoordinateChange) -> CoordinateChange {
        let (f, g) = (self.clone(), second.clone());
        let mut out = {
            let (f, g) = (f.clone(), g.clone());
            CoordinateChange::new(move |p| g.apply(f.apply(p)))
        };
        if self.jac.is_some() && second.jac.is_some() {
            out = out.with_jacobian(move |p| {
                let (fz, fzb) = f.jacobians(p);
                let (gz, gzb) = g.jacobians(f.apply(p));
                let conj = |m: &M2| m.map(|v| v.conj());
                (gz * fz + gzb * conj(&fzb), gz * fzb + gzb * conj(&fz))
            });
        }
        out
    }
}

/// `A'` at `Z' = phi(Z)`, evaluated at the source point `Z` (no inversion).
pub fn transform_a_from(a: &AMatrixField, phi: &CoordinateChange, z: Point2C) -> Result<M2> {
    let (jz, jzb) = phi.jacobians(z);
    transform_a_at(&a.eval(z), &jz, &jzb)
}

/// `A'(Z')` for the pushed-forward structure.
pub fn transform_a(a: &AMatrixField, phi: &CoordinateChange, zp: Point2C) -> Result<M2> {
    let z = phi.inverse(zp, zp)?;
    transform_a_from(a, phi, z)
}

/// The pushed-forward field `Z' -> A'(Z')`; failures map to NaN.
pub fn transformed_field(a: &AMatrixField, phi: &CoordinateChange) -> AMatrixField {
    let (a, phi) = (a.clone(), phi.clone());
    AMatrixField::new(move |zp| transform_a(&a, &phi, zp).unwrap_or_else(|_| nan_m2()))
}

/// `[A'_z', A'_w']` at `phi(z)`, by differencing `A' o phi` and applying the
/// inverse real Jacobian of `phi`.
pub fn transformed_a_z(a: &AMatrixField, phi: &CoordinateChange, z: Point2C, h: f64) -> Result<[M2; 2]> {
    let g = |q: Point2C| transform_a_from(a, phi, q);
    let mut d = [M2::zeros(); 4];
    for (k, dk) in d.iter_mut().enumerate() {
        let e = real_dir(k) * C64::new(h, 0.0);
        *dk = (g(z + e)? - g(z - e)?) * C64::new(0.5 / h, 0.0);
    }
    let jinv = phi
        .real_jacobian(z)
        .try_inverse()
        .ok_or_else(|| Error::DegenerateChange("singular Jacobian".into()))?;
    let dp: [M2; 4] =
        std::array::from_fn(|l| (0..4).fold(M2::zeros(), |acc, k| acc + d[k] * C64::new(jinv[(k, l)], 0.0)));
    Ok(wirtinger_from_partials(&dp).0)
}

/// Result of [`normalize_along_disc`].
#[derive(Clone, Debug)]
pub struct Normalization {
    pub change: CoordinateChange,
    pub a10: DiscFn,
    pub b10: DiscFn,
    pub a11: DiscFn,
    pub b11: DiscFn,
    /// `max |A'(0, zeta)|` on the verification sample.
    pub residual_a: f64,
    /// `max |A'_Z(0, zeta)|` on the verification sample.
    pub residual_az: f64,
}

impl Normalization {
    /// `A'` in the new coordinates. Its entries already carry finite-difference
    /// noise from the Jacobians, so its own derivatives use a coarser step.
    pub fn field(&self, a: &AMatrixField) -> AMatrixField {
        transformed_field(a, &self.change).with_step(1e-4)
    }
}

fn verification_sample() -> Vec<C64> {
    let mut pts = vec![ZERO];
    for r in [0.3, 0.55, 0.8] {
        for k in 0..8 {
            pts.push(C64::from_polar(r, (k as f64 + 0.25) * std::f64::consts::PI / 4.0));
        }
    }
    pts
}

/// Quadratic change `(z, w) -> (a z + c |z|^2, w + b z + d |z|^2)` with
/// coefficients depending on `w`.
fn quadratic_change(a: DiscEval, b: DiscEval, c: DiscEval, d: DiscEval) -> CoordinateChange {
    CoordinateChange::new(move |p| {
        let zz = p.z.norm_sqr();
        Point2C::new(
            a.eval(p.w) * p.z + c.eval(p.w) * zz,
            p.w + b.eval(p.w) * p.z + d.eval(p.w) * zz,
        )
    })
}

/// Coordinates in which `A(0, zeta) = 0` and `A_Z(0, zeta) = 0` along the
/// disc `zeta -> (0, zeta)`, which must be `J`-holomorphic. Built in two
/// steps: `z1 = z - alpha zbar`, `w1 = w - beta zbar` removes `A(0, w)`; then
/// `z' = a10 z1 + a11 |z1|^2`, `w' = w1 + b10 z1 + b11 |z1|^2` with
/// `a10 = exp(-T beta')` normalized to `a10(0) = 1` and
/// `b10 = a10 (-T(delta' / a10))`.
pub fn normalize_along_disc(a: &AMatrixField, grid: &DiscGrid) -> Result<Normalization> {
    let sample = verification_sample();
    for &s in grid.boundary().nodes().iter().chain(&sample) {
        let m = a.eval(Point2C::new(ZERO, s * 0.999));
        let col = m[(0, 1)].norm().max(m[(1, 1)].norm());
        if col > 1e-8 {
            return Err(Error::Precondition(format!(
                "zeta -> (0, zeta) is not J-holomorphic: |A(0,{s})| second column {col:.3e}"
            )));
        }
        if m[(0, 0)].norm() >= 1.0 - 1e-6 {
            return Err(Error::DegenerateChange("|alpha| reaches 1 so |a10| = |a01|".into()));
        }
    }
    let a1 = a.clone();
    let step1 = {
        let (a, b) = (a1.clone(), a1.clone());
        CoordinateChange::new(move |p| {
            let m = a.eval(Point2C::new(ZERO, p.w));
            Point2C::new(p.z - m[(0, 0)] * p.z.conj(), p.w - m[(1, 0)] * p.z.conj())
        })
        .with_jacobian(move |p| {
            let m0 = Point2C::new(ZERO, p.w);
            let m = b.eval(m0);
            let d = b.real_partials(m0);
            let ([_, dw], [_, dwb]) = wirtinger_from_partials(&d);
            let zb = p.z.conj();
            let one = C64::new(1.0, 0.0);
            let jz = M2::new(one, -dw[(0, 0)] * zb, ZERO, one - dw[(1, 0)] * zb);
            let jzb = M2::new(-m[(0, 0)], -dwb[(0, 0)] * zb, -m[(1, 0)], -dwb[(1, 0)] * zb);
            (jz, jzb)
        })
    };
    // entries of A1_{z1}(0, w) on the w-disc
    let h = 1e-4;
    let az = |w: C64| -> M2 {
        transformed_a_z(a, &step1, Point2C::new(ZERO, w), h)
            .map(|d| d[0])
            .unwrap_or_else(|_| nan_m2())
    };
    let nodes: Vec<M2> = grid.nodes().iter().map(|&w| az(w)).collect();
    let bnodes: Vec<M2> = grid.boundary().nodes().iter().map(|&w| az(w)).collect();
    let entry = |r: usize, c: usize| -> Result<DiscFn> {
        let b = crate::grid::BoundaryFn::from_samples(grid.boundary(), bnodes.iter().map(|m| m[(r, c)]).collect())?;
        DiscFn::from_parts(grid, nodes.iter().map(|m| m[(r, c)]).collect(), b)
    };
    let (alpha, beta, gamma, delta) = (entry(0, 0)?, entry(0, 1)?, entry(1, 0)?, entry(1, 1)?);
    if !(alpha.sup_norm().is_finite() && beta.sup_norm().is_finite()) {
        return Err(Error::DegenerateChange("A_z(0, w) could not be evaluated".into()));
    }
    let tb = cauchy_green(&beta, false);
    let tb0 = cauchy_green_at(&beta, &[ZERO])?[0];
    let a10 = tb.map(|v| (tb0 - v).exp());
    let ratio = delta.zip_map(&a10, |d, a| d / a);
    let b10 = a10.zip_map(&cauchy_green(&ratio, false), |a, t| -a * t);
    let a11 = a10.zip_map(&alpha, |a, al| -a * al);
    let b11 = b10.zip_map(&alpha, |b, al| b * al).zip_map(&gamma, |v, g| -(v + g));
    let step2 = quadratic_change(a10.evaluator(), b10.evaluator(), a11.evaluator(), b11.evaluator());
    let change = step1.then(&step2);

    let mut residual_a: f64 = 0.0;
    let mut residual_az: f64 = 0.0;
    for &s in &sample {
        let p = Point2C::new(ZERO, s);
        let m = transform_a_from(a, &change, p)?;
        residual_a = residual_a.max(op_norm(&m));
        let d = transformed_a_z(a, &change, p, h)?;
        residual_az = residual_az.max(op_norm(&d[0])).max(op_norm(&d[1]));
    }
    Ok(Normalization {
        change,
        a10,
        b10,
        a11,
        b11,
        residual_a,
        residual_az,
    })
}

/// Dilation modes: `Z -> Z / delta`, or `(z, w) -> (z / delta, w / delta^{1/m})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Dilation {
    Isotropic { delta: f64 },
    Anisotropic { delta: f64, m: u32 },
}

impl Dilation {
    pub fn delta(&self) -> f64 {
        match *self {
            Dilation::Isotropic { delta } | Dilation::Anisotropic { delta, .. } => delta,
        }
    }

    /// Diagonal scaling `(c_z, c_w)` of the map `Z' = diag(c) Z`.
    pub fn scales(&self) -> Result<(f64, f64)> {
        let d = self.delta();
        if !(d > 0.0) {
            return Err(Error::Domain(format!("dilation parameter must be positive, got {d}")));
        }
        Ok(match *self {
            Dilation::Isotropic { .. } => (1.0 / d, 1.0 / d),
            Dilation::Anisotropic { m, .. } => {
                if m == 0 {
                    return Err(Error::Domain("anisotropic dilation needs m >= 1".into()));
                }
                (1.0 / d, d.powf(-1.0 / m as f64))
            }
        })
    }

    /// Preimage of `Z'` under the dilation.
    pub fn pull(&self, p: Point2C) -> Result<Point2C> {
        let (cz, cw) = self.scales()?;
        Ok(Point2C::new(p.z / cz, p.w / cw))
    }
}

/// Pushforward of `A` by a dilation: `A'(Z') = C A(C^{-1} Z') C^{-1}`.
pub fn dilate(a: &AMatrixField, d: Dilation) -> Result<AMatrixField> {
    let (cz, cw) = d.scales()?;
    let a = a.clone();
    Ok(AMatrixField::new(move |p| {
        let m = a.eval(Point2C::new(p.z / cz, p.w / cw));
        M2::new(m[(0, 0)], m[(0, 1)] * (cz / cw), m[(1, 0)] * (cw / cz), m[(1, 1)])
    }))
}

/// Pushforward of a `J` field: `J'(Z') = L J(L^{-1} Z') L^{-1}`.
pub fn dilate_j(j: &AlmostComplexStructure, d: Dilation) -> Result<AlmostComplexStructure> {
    let (cz, cw) = d.scales()?;
    let j = j.clone();
    let l = M4::from_diagonal(&Vector4::new(cz, cz, cw, cw));
    let linv = M4::from_diagonal(&Vector4::new(1.0 / cz, 1.0 / cz, 1.0 / cw, 1.0 / cw));
    Ok(AlmostComplexStructure::new(move |p| {
        l * j.eval(Point2C::new(p.z / cz, p.w / cw)) * linv
    }))
}

/// Deterministic sample of the closed unit ball of `C^2`.
pub fn ball_sample() -> Vec<Point2C> {
    let mut pts = vec![Point2C::origin()];
    for r in [0.25, 0.5, 0.75, 1.0] {
        for a in 0..5 {
            let t = a as f64 * std::f64::consts::FRAC_PI_2 / 4.0;
            for b in 0..6 {
                for c in 0..6 {
                    let (pb, pc) = (
                        b as f64 * std::f64::consts::PI / 3.0,
                        c as f64 * std::f64::consts::PI / 3.0 + 0.3,
                    );
                    pts.push(Point2C::new(
                        C64::from_polar(r * t.cos(), pb),
                        C64::from_polar(r * t.sin(), pc),
                    ));
                }
            }
        }
    }
    pts
}

/// Sup over the unit ball of `||J - J_st||` (max entry) for the given `A` field.
pub fn structure_distance(a: &AMatrixField, pts: &[Point2C]) -> f64 {
    let js = j_st();
    pts.iter().fold(0.0, |m, &p| match j_from_a(&a.eval(p)) {
        Ok(j) => m.max(max_abs4(&(j - js))),
        Err(_) => f64::INFINITY,
    })
}

/// `sup |Z_zetabar - A(Z) conj(Z_zeta)|` over the interior nodes.
pub fn jholo_residual(a: &AMatrixField, z: &DiscFn, w: &DiscFn) -> f64 {
    let (zz, zzb) = z.wirtinger();
    let (wz, wzb) = w.wirtinger();
    let mut worst: f64 = 0.0;
    for k in 0..zz.len() {
        let p = Point2C::new(z.interior()[k], w.interior()[k]);
        let m = a.eval(p);
        let r0 = zzb[k] - m[(0, 0)] * zz[k].conj() - m[(0, 1)] * wz[k].conj();
        let r1 = wzb[k] - m[(1, 0)] * zz[k].conj() - m[(1, 1)] * wz[k].conj();
        worst = worst.max(r0.norm()).max(r1.norm());
    }
    worst
}

/// Built-in structure families, selectable from configuration files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum StructureSpec {
    #[default]
    Standard,
    /// `A = eps diag(wbar + z w, zbar + z w)`; `(0, zeta)` is `J`-holomorphic.
    DiagonalPerturbation { eps: f64 },
    /// `A = eps diag(wbar + z, zbar (1 + w))`: block-diagonal `J` whose `w`-entry vanishes on `z = 0`.
    BlockDiagonal { eps: f64 },
    /// Entries of order `|z|^2`, with the second column vanishing on `Re z = 0`.
    Normalized { eps: f64 },
    /// Entries `[a11, a12, a21, a22]` as expressions in `z, w, zb, wb`.
    Custom { entries: [String; 4] },
}

impl StructureSpec {
    pub fn build(&self) -> Result<AMatrixField> {
        Ok(match self {
            StructureSpec::Standard => AMatrixField::zero(),
            StructureSpec::DiagonalPerturbation { eps } => {
                let e = *eps;
                AMatrixField::new(move |p| {
                    let zw = p.z * p.w;
                    M2::new((p.w.conj() + zw) * e, ZERO, ZERO, (p.z.conj() + zw) * e)
                })
            }
            StructureSpec::BlockDiagonal { eps } => {
                let e = *eps;
                AMatrixField::new(move |p| M2::new((p.w.conj() + p.z) * e, ZERO, ZERO, p.z.conj() * (p.w + 1.0) * e))
            }
            StructureSpec::Normalized { eps } => {
                let e = *eps;
                AMatrixField::new(move |p| {
                    let x2 = C64::new(p.z.re * p.z.re, 0.0);
                    M2::new(
                        p.z.conj() * p.z.conj() * (p.w + 1.0) * e,
                        x2 * e,
                        p.z.norm_sqr() * p.w.conj() * e,
                        x2 * (p.w.conj() + 1.0) * e,
                    )
                })
            }
            StructureSpec::Custom { entries } => {
                let ex: Vec<Expr> = entries.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?;
                AMatrixField::new(move |p| M2::new(ex[0].eval(p), ex[1].eval(p), ex[2].eval(p), ex[3].eval(p)))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(a: f64, b: f64, c: f64, d: f64) -> M2 {
        M2::new(
            C64::new(a, 0.5 * b),
            C64::new(b, -c),
            C64::new(c, d),
            C64::new(-d, 0.3 * a),
        )
    }

    #[test]
    fn standard_structure_round_trip() {
        assert_eq!(a_from_j(&j_st()).unwrap(), M2::zeros());
        assert_eq!(j_from_a(&M2::zeros()).unwrap(), j_st());
        assert!(j_squared_defect(&j_st()) == 0.0);
    }

    #[test]
    fn round_trips() {
        let a = m(0.1, -0.2, 0.05, 0.15);
        let j = j_from_a(&a).unwrap();
        assert!(j_squared_defect(&j) < 1e-12);
        let back = a_from_j(&j).unwrap();
        assert!((back - a).norm() < 1e-12);
        assert!(j_from_a(&(a * C64::new(10.0, 0.0))).is_err());
    }

    #[test]
    fn perturbation_slope() {
        // conjugating J_st keeps J^2 = -I
        let r = M4::from_fn(|i, j| ((3 * i + 5 * j) % 7) as f64 / 7.0 - 0.4);
        let eps = [1e-1, 1e-2, 1e-3, 1e-4];
        let norms: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let g = M4::identity() + r * e;
                let j = g * j_st() * g.try_inverse().unwrap();
                assert!(j_squared_defect(&j) < 1e-12);
                op_norm(&a_from_j(&j).unwrap())
            })
            .collect();
        let slope = (norms[0] / norms[3]).ln() / (eps[0] / eps[3]).ln();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn singular_sum_rejected() {
        assert!(matches!(a_from_j(&(-j_st())), Err(Error::StructureTooFar)));
    }

    #[test]
    fn linear_change_formula() {
        let a0 = m(0.05, 0.02, -0.03, 0.04);
        let a = AMatrixField::new(move |_| a0);
        let c = M2::new(
            C64::new(1.0, 0.5),
            C64::new(0.2, 0.0),
            C64::new(0.0, -0.3),
            C64::new(0.8, 0.1),
        );
        let phi = CoordinateChange::linear(c);
        let got = transform_a(&a, &phi, Point2C::new(C64::new(0.1, 0.2), ZERO)).unwrap();
        let want = c * a0 * c.map(|v| v.conj()).try_inverse().unwrap();
        assert!((got - want).norm() < 1e-12);
        let z = AMatrixField::zero();
        assert!(transform_a(&z, &phi, Point2C::origin()).unwrap().norm() < 1e-15);
    }

    #[test]
    fn anisotropic_dilation_of_block_diagonal() {
        let a = StructureSpec::BlockDiagonal { eps: 0.1 }.build().unwrap();
        let pts = ball_sample();
        let d: Vec<f64> = [0.1, 0.01]
            .iter()
            .map(|&delta| structure_distance(&dilate(&a, Dilation::Anisotropic { delta, m: 2 }).unwrap(), &pts))
            .collect();
        let slope = (d[0] / d[1]).ln() / 10f64.ln();
        assert!(slope > 0.4, "slope {slope}");
        assert!(dilate(&a, Dilation::Isotropic { delta: 0.0 }).is_err());
    }

    fn generic(e: f64) -> AMatrixField {
        AMatrixField::new(move |p: Point2C| {
            let (z, w) = (p.z, p.w);
            M2::new(
                (w.conj() + z + w * w) * e,
                z.conj() * e,
                (w + w.conj() * w.conj() + z * w) * e,
                z * w.conj() * e,
            )
        })
    }

    /// `f(zeta) = p + v zeta + A conj(v) zetabar` is exactly `J`-holomorphic for
    /// constant `A`; pushing two such jets through `phi` recovers `A'`.
    #[test]
    fn jet_pushforward_oracle() {
        let a0 = m(0.04, -0.03, 0.02, 0.05);
        let a = AMatrixField::new(move |_| a0);
        let phi = CoordinateChange::new(|p: Point2C| {
            Point2C::new(p.z + p.w * p.w * 0.3 + p.z.conj() * 0.1, p.w + p.z * p.z.conj() * 0.2)
        });
        let p = Point2C::new(C64::new(0.1, 0.05), C64::new(-0.2, 0.1));
        let h = 1e-5;
        let mut cols_bar = M2::zeros();
        let mut cols_conj = M2::zeros();
        for (k, v) in [
            nalgebra::Vector2::new(C64::new(1.0, 0.0), ZERO),
            nalgebra::Vector2::new(I, C64::new(0.5, 0.0)),
        ]
        .into_iter()
        .enumerate()
        {
            let av = a0 * v.map(|x| x.conj());
            let f = |zeta: C64| {
                phi.apply(Point2C::new(
                    p.z + v[0] * zeta + av[0] * zeta.conj(),
                    p.w + v[1] * zeta + av[1] * zeta.conj(),
                ))
            };
            let dx = (f(C64::new(h, 0.0)) - f(C64::new(-h, 0.0))) * C64::new(0.5 / h, 0.0);
            let dy = (f(C64::new(0.0, h)) - f(C64::new(0.0, -h))) * C64::new(0.5 / h, 0.0);
            let fz = (dx - dy * I) * C64::new(0.5, 0.0);
            let fzb = (dx + dy * I) * C64::new(0.5, 0.0);
            cols_bar[(0, k)] = fzb.z;
            cols_bar[(1, k)] = fzb.w;
            cols_conj[(0, k)] = fz.z.conj();
            cols_conj[(1, k)] = fz.w.conj();
        }
        let oracle = cols_bar * cols_conj.try_inverse().unwrap();
        let got = transform_a(&a, &phi, phi.apply(p)).unwrap();
        assert!((got - oracle).norm() < 1e-8, "{}", (got - oracle).norm());
    }

    #[test]
    fn functoriality() {
        let a = generic(0.05);
        let f1 = CoordinateChange::new(|p: Point2C| {
            Point2C::new(
                p.z + p.w * p.w.conj() * 0.1 + p.z.conj() * C64::new(0.0, 0.2),
                p.w + p.z * p.z * 0.05,
            )
        });
        let f2 = CoordinateChange::new(|p: Point2C| {
            Point2C::new(
                p.z * C64::new(1.0, 0.3) + p.z.conj() * p.w * 0.1,
                p.w - p.z.conj() * p.z.conj() * 0.2,
            )
        });
        let p = Point2C::new(C64::new(0.1, -0.05), C64::new(0.2, 0.1));
        let direct = transform_a_from(&a, &f1.then(&f2), p).unwrap();
        let two = transform_a_from(&transformed_field(&a, &f1), &f2, f1.apply(p)).unwrap();
        assert!((direct - two).norm() < 1e-8);
    }

    #[test]
    fn normalization_of_generic_structure() {
        let g = DiscGrid::new(64, 16, 32).unwrap();
        let n = normalize_along_disc(&generic(0.05), &g).unwrap();
        assert!(
            n.residual_a <= 1e-3 && n.residual_az <= 1e-2,
            "{} {}",
            n.residual_a,
            n.residual_az
        );
        let z = normalize_along_disc(&AMatrixField::zero(), &g).unwrap();
        assert!(
            z.residual_a < 1e-10 && z.residual_az < 1e-10,
            "{} {}",
            z.residual_a,
            z.residual_az
        );
        assert!((z.a10.sup_norm() - 1.0).abs() < 1e-14 && z.b10.sup_norm() < 1e-14);
    }

    /// With `A(0, w) = 0` and no `beta'` entry, `a10 = 1` and `b10 = -T(delta')`.
    #[test]
    fn normalization_with_delta_only() {
        let e = 0.05;
        let a = AMatrixField::new(move |p: Point2C| M2::new(ZERO, ZERO, ZERO, p.z * (p.w.conj() + 1.0) * e));
        let g = DiscGrid::new(64, 16, 32).unwrap();
        let n = normalize_along_disc(&a, &g).unwrap();
        assert!((&n.a10 - &DiscFn::constant(&g, C64::new(1.0, 0.0))).sup_norm() < 1e-9);
        let delta = DiscFn::from_fn(&g, |w| (w.conj() + 1.0) * e);
        let want = cauchy_green(&delta, false).scale(C64::new(-1.0, 0.0));
        assert!(n.b10.dist(&want) < 1e-9);
        assert!(n.residual_az <= 1e-3);
    }

    #[test]
    fn normalization_requires_holomorphic_axis() {
        let a = AMatrixField::new(|p: Point2C| M2::new(ZERO, p.w * 0.1, ZERO, ZERO));
        let g = DiscGrid::new(64, 16, 32).unwrap();
        assert!(matches!(normalize_along_disc(&a, &g), Err(Error::Precondition(_))));
    }

    #[test]
    fn jholo_residual_examples() {
        let g = DiscGrid::new(64, 16, 32).unwrap();
        let zero = AMatrixField::zero();
        let z = DiscFn::from_fn(&g, |t| t * t);
        let w = DiscFn::from_fn(&g, |t| (t * 0.5).exp());
        assert!(jholo_residual(&zero, &z, &w) < 1e-10);
        let zb = DiscFn::from_fn(&g, |t| t.conj());
        assert!((jholo_residual(&zero, &zb, &DiscFn::zero(&g)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn isotropic_dilation_slope() {
        let a = StructureSpec::DiagonalPerturbation { eps: 0.1 }.build().unwrap();
        let pts = ball_sample();
        let d: Vec<f64> = [0.02, 0.002]
            .iter()
            .map(|&delta| dilate(&a, Dilation::Isotropic { delta }).unwrap().sup_norm(&pts))
            .collect();
        let slope = (d[0] / d[1]).ln() / 10f64.ln();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
        let zero = dilate(&AMatrixField::zero(), Dilation::Isotropic { delta: 0.3 }).unwrap();
        assert_eq!(zero.sup_norm(&pts), 0.0);
    }

    #[test]
    fn j_field_conversion() {
        let a = generic(0.05);
        let j = a.to_structure();
        let p = Point2C::new(C64::new(0.3, 0.1), C64::new(-0.2, 0.4));
        assert!(j.squared_defect(p) < 1e-12);
        assert!((j.to_a_field().eval(p) - a.eval(p)).norm() < 1e-12);
        let jd = dilate_j(&j, Dilation::Anisotropic { delta: 0.1, m: 2 }).unwrap();
        let ad = dilate(&a, Dilation::Anisotropic { delta: 0.1, m: 2 }).unwrap();
        assert!((jd.to_a_field().eval(p) - ad.eval(p)).norm() < 1e-12);
    }

    #[test]
    fn custom_family_parses() {
        let spec = StructureSpec::Custom {
            entries: ["0.1*wb".into(), "0".into(), "0".into(), "0.1*zb".into()],
        };
        let a = spec.build().unwrap();
        let p = Point2C::new(C64::new(0.2, 0.0), C64::new(0.0, 0.5));
        assert!((a.eval(p)[(0, 0)] - p.w.conj() * 0.1).norm() < 1e-15);
        let bad = StructureSpec::Custom {
            entries: ["wb +".into(), "0".into(), "0".into(), "0".into()],
        };
        assert!(bad.build().is_err());
    }
}
