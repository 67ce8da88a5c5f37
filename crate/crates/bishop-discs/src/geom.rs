//! Real hypersurfaces `E = {rho = 0}` in `C^2` and their Levi forms.
//!
//! The Levi form is evaluated in two ways: as `Delta(rho o f)(0)` over a small
//! `J`-holomorphic disc `f` (convention `Delta = 4 d dbar`, so `Delta |zeta|^2 = 4`),
//! and through the bracket `drho(J[X, JX])`, rescaled by [`BRACKET_TO_LAPLACIAN`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector4};
use serde::{Deserialize, Serialize};

use crate::acs::{dilate, op_norm, AMatrixField, AlmostComplexStructure, CoordinateChange, Dilation, M4};
use crate::bishop::{local_disc, LocalDisc};
use crate::expr::Expr;
use crate::grid::{DiscGrid, Point2C};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Central-difference steps for gradients, Hessians and brackets.
pub const GRAD_STEP: f64 = 1e-5;
pub const HESS_STEP: f64 = 1e-4;
pub const BRACKET_STEP: f64 = 1e-4;

/// Factor turning `drho(J[X, JX])` into the disc-Laplacian scale. Fixed once from
/// `Re z + |w|^2` with the standard structure and `X = (0, 1)`, where both the
/// raw bracket and the Laplacian equal `4`.
pub const BRACKET_TO_LAPLACIAN: f64 = 1.0;

type RhoFn = Arc<dyn Fn(Point2C) -> f64 + Send + Sync>;
type GraphFn = Arc<dyn Fn(f64, C64) -> f64 + Send + Sync>;

/// A hypersurface with defining function `rho` and graph form `x = phi(y, w)`.
#[derive(Clone)]
pub struct Hypersurface {
    rho: RhoFn,
    graph: Option<GraphFn>,
    name: String,
}

impl fmt::Debug for Hypersurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hypersurface({})", self.name)
    }
}

/// Data of the complex tangent line at a point of `E`.
#[derive(Clone, Copy, Debug)]
pub struct TangentData {
    pub point: Point2C,
    /// Unit real vector spanning `H_p(E)` together with its `J`-image.
    pub holomorphic_tangent: Point2C,
    /// Real gradient of `rho`.
    pub normal: [f64; 4],
}

impl Hypersurface {
    /// `rho` only; the graph form is recovered by Newton's method in `x`.
    pub fn new(name: &str, rho: impl Fn(Point2C) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            rho: Arc::new(rho),
            graph: None,
            name: name.to_string(),
        }
    }

    /// `rho = x - phi(y, w)`.
    pub fn from_graph(name: &str, phi: impl Fn(f64, C64) -> f64 + Send + Sync + 'static) -> Self {
        let phi: GraphFn = Arc::new(phi);
        let p2 = phi.clone();
        Self {
            rho: Arc::new(move |p: Point2C| p.z.re - p2(p.z.im, p.w)),
            graph: Some(phi),
            name: name.to_string(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rho(&self, p: Point2C) -> f64 {
        (self.rho)(p)
    }

    /// `x = phi(y, w)` on `E`.
    pub fn graph(&self, y: f64, w: C64) -> Result<f64> {
        if let Some(g) = &self.graph {
            return Ok(g(y, w));
        }
        let f = |x: f64| self.rho(Point2C::new(C64::new(x, y), w));
        let mut x = 0.0;
        for _ in 0..60 {
            let r = f(x);
            let d = (f(x + GRAD_STEP) - f(x - GRAD_STEP)) / (2.0 * GRAD_STEP);
            if d.abs() < 1e-10 {
                return Err(Error::Config(format!("{}: rho_x vanishes, no graph form", self.name)));
            }
            let dx = r / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                return Ok(x);
            }
        }
        if f(x).abs() < 1e-12 {
            Ok(x)
        } else {
            Err(Error::Config(format!("{}: graph solve did not converge", self.name)))
        }
    }

    /// Parametric form `Re Z = h(Im Z, t) = (phi(y, t + i v), t)`.
    pub fn parametric(&self, im: (f64, f64), t: f64) -> Result<(f64, f64)> {
        Ok((self.graph(im.0, C64::new(t, im.1))?, t))
    }

    /// Real gradient in `(Re z, Im z, Re w, Im w)`.
    pub fn real_gradient(&self, p: Point2C) -> [f64; 4] {
        let h = GRAD_STEP;
        std::array::from_fn(|k| {
            let e = unit(k) * C64::new(h, 0.0);
            (self.rho(p + e) - self.rho(p - e)) / (2.0 * h)
        })
    }

    /// `(rho_z, rho_w)`; `rho_zbar`, `rho_wbar` are their conjugates.
    pub fn gradient(&self, p: Point2C) -> [C64; 2] {
        let g = self.real_gradient(p);
        [C64::new(g[0], -g[1]) * 0.5, C64::new(g[2], -g[3]) * 0.5]
    }

    /// Real Hessian by central differences.
    pub fn real_hessian(&self, p: Point2C) -> M4 {
        let h = HESS_STEP;
        let f0 = self.rho(p);
        let mut m = M4::zeros();
        for a in 0..4 {
            let ea = unit(a) * C64::new(h, 0.0);
            m[(a, a)] = (self.rho(p + ea) - 2.0 * f0 + self.rho(p - ea)) / (h * h);
            for b in a + 1..4 {
                let eb = unit(b) * C64::new(h, 0.0);
                let v = (self.rho(p + ea + eb) - self.rho(p + ea - eb) - self.rho(p - ea + eb) + self.rho(p - ea - eb))
                    / (4.0 * h * h);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        m
    }

    /// Complex Hessian `H_{jk} = d^2 rho / dZbar_j dZ_k`.
    pub fn complex_hessian(&self, p: Point2C) -> Matrix2<C64> {
        let r = self.real_hessian(p);
        let i = C64::new(0.0, 1.0);
        Matrix2::from_fn(|j, k| {
            // (d_xj + i d_yj)(d_xk - i d_yk) / 4
            let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
            (C64::new(r[(xj, xk)] + r[(yj, yk)], 0.0) + i * (r[(yj, xk)] - r[(xj, yk)])) * 0.25
        })
    }

    /// Complex tangent data at `p` with respect to `J`.
    pub fn tangent_data(&self, j: &AlmostComplexStructure, p: Point2C) -> Result<TangentData> {
        let g = self.real_gradient(p);
        let [rz, rw] = self.gradient(p);
        let guess = Point2C::new(-rw, rz);
        let x = project_to_h(&g, &j.eval(p), &Vector4::from(guess.to_real()))?;
        let n = x.norm();
        if n < 1e-12 {
            return Err(Error::DegenerateTangent(
                "complex tangent guess projects to zero".into(),
            ));
        }
        let v = x / n;
        Ok(TangentData {
            point: p,
            holomorphic_tangent: Point2C::from_real([v[0], v[1], v[2], v[3]]),
            normal: g,
        })
    }

    /// Image of `E` under `phi`: `rho'(q) = rho(phi^{-1}(q))`, inverted by Newton from `q`.
    pub fn push_forward(&self, phi: &CoordinateChange) -> Hypersurface {
        let s = self.clone();
        let phi = phi.clone();
        Hypersurface::new(&format!("{}-mapped", self.name), move |q| match phi.inverse(q, q) {
            Ok(p) => s.rho(p),
            Err(_) => f64::NAN,
        })
    }

    /// `E_delta` = image of `E` under the dilation: `rho_delta(Z') = c_z rho(L^{-1} Z')`.
    pub fn dilate(&self, d: Dilation) -> Result<Hypersurface> {
        let (cz, _) = d.scales()?;
        let name = format!("{}-dilated", self.name);
        let s = self.clone();
        let s2 = self.clone();
        let rho = move |p: Point2C| match d.pull(p) {
            Ok(q) => cz * s.rho(q),
            Err(_) => f64::NAN,
        };
        let mut out = Hypersurface::new(&name, rho);
        if self.graph.is_some() {
            let (czz, cww) = d.scales()?;
            out.graph = Some(Arc::new(move |y: f64, w: C64| {
                czz * s2.graph(y / czz, w / cww).unwrap_or(f64::NAN)
            }));
        }
        Ok(out)
    }
}

fn unit(k: usize) -> Point2C {
    let e = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)][k % 2];
    if k < 2 {
        Point2C::new(e, ZERO)
    } else {
        Point2C::new(ZERO, e)
    }
}

/// Orthogonal projection of `x` onto `{drho(X) = 0, drho(JX) = 0}`.
fn project_to_h(grad: &[f64; 4], j: &M4, x: &Vector4<f64>) -> Result<Vector4<f64>> {
    let a = Vector4::from(*grad);
    let b = j.transpose() * a;
    let gram = nalgebra::Matrix2::new(a.dot(&a), a.dot(&b), b.dot(&a), b.dot(&b));
    let det = gram.determinant();
    if det.abs() <= 1e-12 * (a.dot(&a) * b.dot(&b)).max(1e-300) || a.norm() < 1e-6 {
        return Err(Error::DegenerateTangent(format!(
            "the differential of rho and its J-rotation are dependent (Gram determinant {det:.3e})"
        )));
    }
    let coef = gram.try_inverse().unwrap() * nalgebra::Vector2::new(a.dot(x), b.dot(x));
    Ok(x - a * coef[0] - b * coef[1])
}

/// Built-in hypersurface families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum HypersurfaceSpec {
    /// `Re z = 0`.
    Flat,
    /// `Re z + sigma |w|^2 = 0`.
    Quadric { sigma: f64 },
    /// `Re z + Re sum_k q_k w^k wbar^{m-k} + tail |w|^{m+1} = 0`, `k = 1..m-1`.
    FiniteType {
        m: u32,
        q: Vec<f64>,
        #[serde(default)]
        tail: f64,
    },
    /// `Re(expr) = 0`.
    Custom { rho: String },
}

/// `Re sum_{k=1}^{m-1} q_k w^k wbar^{m-k}`.
pub fn p_m(m: u32, q: &[f64], w: C64) -> f64 {
    q.iter()
        .enumerate()
        .map(|(i, &qk)| {
            let k = i as i32 + 1;
            (w.powi(k) * w.conj().powi(m as i32 - k)).re * qk
        })
        .sum()
}

impl Default for HypersurfaceSpec {
    fn default() -> Self {
        HypersurfaceSpec::Quadric { sigma: 1.0 }
    }
}

impl HypersurfaceSpec {
    pub fn build(&self) -> Result<Hypersurface> {
        Ok(match self {
            HypersurfaceSpec::Flat => Hypersurface::from_graph("flat", |_, _| 0.0),
            HypersurfaceSpec::Quadric { sigma } => {
                let s = *sigma;
                Hypersurface::from_graph("quadric", move |_, w| -s * w.norm_sqr())
            }
            HypersurfaceSpec::FiniteType { m, q, tail } => {
                if *m < 2 || q.len() != (*m as usize - 1) {
                    return Err(Error::Config(format!(
                        "finite-type needs m >= 2 and m - 1 coefficients, got m = {m}, {} coefficients",
                        q.len()
                    )));
                }
                let (m, q, tail) = (*m, q.clone(), *tail);
                Hypersurface::from_graph("finite-type", move |_, w| {
                    -p_m(m, &q, w) - tail * w.norm().powi(m as i32 + 1)
                })
            }
            HypersurfaceSpec::Custom { rho } => {
                let e = Expr::parse(rho)?;
                Hypersurface::new("custom", move |p| e.eval(p).re)
            }
        })
    }

    /// Model hypersurface approached under the matching dilations.
    pub fn model(&self) -> Option<HypersurfaceSpec> {
        match self {
            HypersurfaceSpec::FiniteType { m, q, .. } => Some(HypersurfaceSpec::FiniteType {
                m: *m,
                q: q.clone(),
                tail: 0.0,
            }),
            HypersurfaceSpec::Custom { .. } => None,
            other => Some(other.clone()),
        }
    }
}

/// `det L(rho) = (-rho_wbar, rho_zbar) H (-rho_w, rho_z)^T` for `J_st`.
pub fn levi_determinant(e: &Hypersurface, p: Point2C) -> f64 {
    let [rz, rw] = e.gradient(p);
    let h = e.complex_hessian(p);
    let x = nalgebra::Vector2::new(-rw, rz);
    let xb = x.map(|v| v.conj());
    (xb.transpose() * h * x)[(0, 0)].re
}

/// Options for [`levi_form_disc`].
#[derive(Clone, Copy, Debug)]
pub struct LeviOptions {
    /// Disc radius in the original variable.
    pub r0: f64,
    /// Outer averaging radius on the rescaled unit disc (the inner one is half).
    pub ring: f64,
    pub n_ring: usize,
}

impl Default for LeviOptions {
    fn default() -> Self {
        Self {
            r0: 1e-2,
            ring: 0.5,
            n_ring: 64,
        }
    }
}

fn levi_grid() -> DiscGrid {
    DiscGrid::new(64, 16, 32).expect("valid grid")
}

/// `Delta(rho o f)(0)` over a local `J`-holomorphic disc with `f(0) = p`,
/// `df(0)(d/d Re zeta) = v`, from circle averages at radii `r` and `r/2`
/// with Richardson extrapolation.
pub fn levi_form_disc(e: &Hypersurface, a: &AMatrixField, p: Point2C, v: Point2C, opts: LeviOptions) -> Result<f64> {
    let rp = e.rho(p);
    if rp.abs() > 1e-8 {
        return Err(Error::Precondition(format!("p is not on E (rho(p) = {rp:.3e})")));
    }
    let disc = local_disc(a, p, v, opts.r0, &levi_grid())?;
    Ok(disc_laplacian(e, &disc, opts))
}

fn disc_laplacian(e: &Hypersurface, disc: &LocalDisc, opts: LeviOptions) -> f64 {
    let u0 = e.rho(disc.center());
    let mean = |r: f64| -> f64 {
        let n = opts.n_ring;
        (0..n)
            .map(|k| e.rho(disc.eval_scaled(C64::from_polar(r, 2.0 * std::f64::consts::PI * k as f64 / n as f64))))
            .sum::<f64>()
            / n as f64
    };
    let r = opts.ring;
    let d1 = 4.0 * (mean(r) - u0) / (r * r);
    let d2 = 4.0 * (mean(0.5 * r) - u0) / (0.25 * r * r);
    // rescaled variable: Delta_zeta = r0^2 Delta_original
    ((4.0 * d2 - d1) / 3.0) / (opts.r0 * opts.r0)
}

/// Raw bracket `drho(J[X, JX])(p)` for the section `X` obtained by projecting
/// the constant extension of `x` onto `H(E)` at every point.
pub fn bracket_raw(e: &Hypersurface, j: &AlmostComplexStructure, p: Point2C, x: Point2C) -> Result<f64> {
    let x0 = Vector4::from(x.to_real());
    let field_x = |q: Point2C| -> Result<Vector4<f64>> { project_to_h(&e.real_gradient(q), &j.eval(q), &x0) };
    let field_jx = |q: Point2C| -> Result<Vector4<f64>> { Ok(j.eval(q) * field_x(q)?) };
    let h = BRACKET_STEP;
    let dir = |f: &dyn Fn(Point2C) -> Result<Vector4<f64>>, along: &Vector4<f64>| -> Result<Vector4<f64>> {
        let s = Point2C::from_real([along[0], along[1], along[2], along[3]]) * C64::new(h, 0.0);
        Ok((f(p + s)? - f(p - s)?) / (2.0 * h))
    };
    let xp = field_x(p)?;
    let jxp = field_jx(p)?;
    let bracket = dir(&field_jx, &xp)? - dir(&field_x, &jxp)?;
    let g = Vector4::from(e.real_gradient(p));
    Ok(g.dot(&(j.eval(p) * bracket)))
}

/// Bracket route on the disc-Laplacian scale.
pub fn levi_form_bracket(e: &Hypersurface, j: &AlmostComplexStructure, p: Point2C, x: Point2C) -> Result<f64> {
    let g = Vector4::from(e.real_gradient(p));
    let xv = Vector4::from(x.to_real());
    let jx = j.eval(p) * xv;
    let scale = g.norm() * xv.norm();
    if g.dot(&xv).abs() > 1e-6 * scale || g.dot(&jx).abs() > 1e-6 * scale {
        return Err(Error::Precondition("X is not in the complex tangent space of E".into()));
    }
    Ok(BRACKET_TO_LAPLACIAN * bracket_raw(e, j, p, x)?)
}

/// `|L^J - L^{J_st}|` at `(p, v)` for a structure normalized at `p`.
pub fn normalized_levi_agreement(
    e: &Hypersurface,
    a: &AMatrixField,
    p: Point2C,
    v: Point2C,
    opts: LeviOptions,
) -> Result<f64> {
    let a0 = op_norm(&a.eval(p));
    let az = a.a_z(p);
    let d = op_norm(&az[0]).max(op_norm(&az[1]));
    if a0 > 1e-6 || d > 1e-6 {
        return Err(Error::Precondition(format!(
            "structure is not normalized at p: |A(p)| = {a0:.3e}, |A_Z(p)| = {d:.3e}"
        )));
    }
    let lj = levi_form_disc(e, a, p, v, opts)?;
    let ls = levi_form_disc(e, &AMatrixField::zero(), p, v, opts)?;
    Ok((lj - ls).abs())
}

/// Sup of `|phi_1 - phi_2|` over graph samples `(y, w)` in the unit ball.
pub fn graph_distance(e1: &Hypersurface, e2: &Hypersurface, samples: &[Point2C]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in samples {
        let d = (e1.graph(p.z.im, p.w)? - e2.graph(p.z.im, p.w)?).abs();
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Sup over the sample of the dilated structure's distance from `J_st`, and of
/// the dilated hypersurface's distance from its model.
pub fn dilation_distances(
    a: &AMatrixField,
    e: Option<(&Hypersurface, &Hypersurface)>,
    d: Dilation,
    samples: &[Point2C],
) -> Result<(f64, Option<f64>)> {
    let ad = dilate(a, d)?;
    let s = crate::acs::structure_distance(&ad, samples);
    let h = match e {
        Some((e, model)) => Some(graph_distance(&e.dilate(d)?, model, samples)?),
        None => None,
    };
    Ok((s, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acs::StructureSpec;

    fn quadric(s: f64) -> Hypersurface {
        HypersurfaceSpec::Quadric { sigma: s }.build().unwrap()
    }

    fn w_dir() -> Point2C {
        Point2C::new(ZERO, C64::new(1.0, 0.0))
    }

    #[test]
    fn gradients_and_hessian() {
        let e = quadric(1.0);
        let p = Point2C::new(C64::new(-0.04, 0.1), C64::new(0.2, 0.0));
        let [rz, rw] = e.gradient(p);
        assert!((rz - 0.5).norm() < 1e-9);
        assert!((rw - p.w.conj()).norm() < 1e-9);
        let h = e.complex_hessian(p);
        assert!((h[(1, 1)] - 1.0).norm() < 1e-6 && h[(0, 0)].norm() < 1e-6 && h[(0, 1)].norm() < 1e-6);
    }

    #[test]
    fn levi_determinant_examples() {
        let o = Point2C::origin();
        assert!(levi_determinant(&HypersurfaceSpec::Flat.build().unwrap(), o).abs() < 1e-9);
        assert!((levi_determinant(&quadric(1.0), o) - 0.25).abs() < 1e-6);
        let e4 = HypersurfaceSpec::Custom {
            rho: "x + abs(w)^4".into(),
        }
        .build()
        .unwrap();
        assert!(levi_determinant(&e4, o).abs() < 1e-6);
        let p = Point2C::new(C64::new(-0.0625, 0.0), C64::new(0.5, 0.0));
        assert!(levi_determinant(&e4, p) > 0.0);
    }

    #[test]
    fn disc_route_quadric_values() {
        let o = Point2C::origin();
        let z = AMatrixField::zero();
        let l = levi_form_disc(&quadric(1.0), &z, o, w_dir(), LeviOptions::default()).unwrap();
        assert!((l - 4.0).abs() < 1e-6, "{l}");
        let l = levi_form_disc(&quadric(-1.0), &z, o, w_dir(), LeviOptions::default()).unwrap();
        assert!((l + 4.0).abs() < 1e-6, "{l}");
        let flat = HypersurfaceSpec::Flat.build().unwrap();
        assert!(
            levi_form_disc(&flat, &z, o, w_dir(), LeviOptions::default())
                .unwrap()
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn bracket_calibration() {
        let js = AlmostComplexStructure::standard();
        let raw = bracket_raw(&quadric(1.0), &js, Point2C::origin(), w_dir()).unwrap();
        assert!((raw * BRACKET_TO_LAPLACIAN - 4.0).abs() < 1e-4, "raw {raw}");
        let flat = HypersurfaceSpec::Flat.build().unwrap();
        assert!(levi_form_bracket(&flat, &js, Point2C::origin(), w_dir()).unwrap().abs() < 1e-6);
    }

    #[test]
    fn graph_newton_matches_explicit() {
        let e = HypersurfaceSpec::Custom {
            rho: "x + 0.5*abs(w)^2 + 0.1*y^2".into(),
        }
        .build()
        .unwrap();
        let w = C64::new(0.3, -0.1);
        assert!((e.graph(0.2, w).unwrap() - (-0.5 * w.norm_sqr() - 0.004)).abs() < 1e-12);
        let p = e.parametric((0.2, -0.1), 0.3).unwrap();
        assert_eq!(p.1, 0.3);
    }

    #[test]
    fn cross_method_on_perturbed_structures() {
        let p = Point2C::origin();
        for (spec, sigma) in [
            (StructureSpec::DiagonalPerturbation { eps: 0.05 }, 1.0),
            (StructureSpec::BlockDiagonal { eps: 0.05 }, -1.0),
            (StructureSpec::Normalized { eps: 0.1 }, 1.0),
        ] {
            let a = spec.build().unwrap();
            let j = a.to_structure();
            let e = quadric(sigma);
            let v = e.tangent_data(&j, p).unwrap().holomorphic_tangent;
            let ld = levi_form_disc(&e, &a, p, v, LeviOptions::default()).unwrap();
            let lb = levi_form_bracket(&e, &j, p, v).unwrap();
            assert!((ld - lb).abs() <= 1e-2 * ld.abs(), "{spec:?}: disc {ld}, bracket {lb}");
        }
    }

    #[test]
    fn tangent_annihilates_dbar_rho() {
        let a = StructureSpec::DiagonalPerturbation { eps: 0.05 }.build().unwrap();
        let j = a.to_structure();
        let e = quadric(1.0);
        let p = Point2C::new(C64::new(-0.04, 0.1), C64::new(0.2, 0.0));
        let t = e.tangent_data(&j, p).unwrap();
        let x = Vector4::from(t.holomorphic_tangent.to_real());
        let g = Vector4::from(t.normal);
        assert!(g.dot(&x).abs() < 1e-8 && g.dot(&(j.eval(p) * x)).abs() < 1e-8);
    }

    #[test]
    fn levi_flat_with_normalized_structure() {
        let a = StructureSpec::Normalized { eps: 0.1 }.build().unwrap();
        let flat = HypersurfaceSpec::Flat.build().unwrap();
        let l = levi_form_disc(&flat, &a, Point2C::origin(), w_dir(), LeviOptions::default()).unwrap();
        assert!(l.abs() < 1e-2, "{l}");
        assert!(
            normalized_levi_agreement(&flat, &a, Point2C::origin(), w_dir(), LeviOptions::default()).unwrap() < 1e-2
        );
    }

    #[test]
    fn normalized_coordinates_recover_standard_levi_form() {
        let g = DiscGrid::new(64, 16, 32).unwrap();
        let a = StructureSpec::DiagonalPerturbation { eps: 0.05 }.build().unwrap();
        let n = crate::acs::normalize_along_disc(&a, &g).unwrap();
        let an = n.field(&a);
        let e = quadric(1.0).push_forward(&n.change);
        let o = Point2C::origin();
        let ls = levi_form_disc(&e, &AMatrixField::zero(), o, w_dir(), LeviOptions::default()).unwrap();
        let diff = normalized_levi_agreement(&e, &an, o, w_dir(), LeviOptions::default()).unwrap();
        assert!(diff <= 1e-2 * (1.0 + ls.abs()), "diff {diff}, L {ls}");
        assert!(matches!(
            normalized_levi_agreement(
                &quadric(1.0),
                &StructureSpec::BlockDiagonal { eps: 0.05 }.build().unwrap(),
                o,
                w_dir(),
                LeviOptions::default()
            ),
            Err(Error::Precondition(_))
        ));
        assert_eq!(
            normalized_levi_agreement(&quadric(1.0), &AMatrixField::zero(), o, w_dir(), LeviOptions::default())
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn tangent_not_in_h_rejected() {
        let js = AlmostComplexStructure::standard();
        let x = Point2C::new(C64::new(1.0, 0.0), ZERO);
        assert!(matches!(
            levi_form_bracket(&quadric(1.0), &js, Point2C::origin(), x),
            Err(Error::Precondition(_))
        ));
    }
}
