//! The linearized Bishop problem.
//!
//! Infinitesimal perturbations `Zdot` of a disc `Z` solve
//! `dbar Zdot - Adot conj(Z_zeta) - A conj(Zdot_zeta) = 0` with
//! `Re(rho_Z Zdot) = 0` on the circle. After `Z1 = Zdot - A conj(Zdot)` and
//! `V = Lambda Z1` this becomes `dbar V = B1 V + B2 conj V`, `Re v1 = 0`,
//! solved through `V = V0 + T1(B1 V + B2 Vbar) + T1*(B1bar Vbar + B2bar V)`
//! with `V0 = 2 K1 Gamma`.

use nalgebra::{DMatrix, Vector4};
use serde::Serialize;

use crate::acs::{AMatrixField, M2};
use crate::bishop::{radial_derivative_at_one, BishopDisc};
use crate::geom::{levi_determinant, Hypersurface};
use crate::grid::{BoundaryFn, DiscFn, DiscGrid, Point2C};
use crate::ops::{cauchy_boundary, cauchy_green, cauchy_green_mu, cauchy_star};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// A pair of disc functions, a map `D -> C^2`.
pub type Pair = [DiscFn; 2];

/// A `2 x 2` matrix field sampled on the interior nodes and on the circle.
#[derive(Clone, Debug)]
pub struct MatField {
    grid: DiscGrid,
    interior: Vec<M2>,
    boundary: Vec<M2>,
}

impl MatField {
    fn from_nodes(grid: &DiscGrid, f: impl Fn(Node) -> M2) -> Self {
        let nb = grid.boundary().n();
        Self {
            grid: grid.clone(),
            interior: (0..grid.n_interior()).map(|k| f(Node::Interior(k))).collect(),
            boundary: (0..nb).map(|k| f(Node::Boundary(k))).collect(),
        }
    }

    pub fn from_fn(grid: &DiscGrid, f: impl Fn(C64) -> M2) -> Self {
        let nodes = grid.nodes();
        let bn = grid.boundary().nodes();
        Self::from_nodes(grid, |n| match n {
            Node::Interior(k) => f(nodes[k]),
            Node::Boundary(k) => f(bn[k]),
        })
    }

    pub fn zero(grid: &DiscGrid) -> Self {
        Self::from_nodes(grid, |_| M2::zeros())
    }

    fn at(&self, n: Node) -> M2 {
        match n {
            Node::Interior(k) => self.interior[k],
            Node::Boundary(k) => self.boundary[k],
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(M2, M2) -> M2) -> Self {
        Self::from_nodes(&self.grid, |n| f(self.at(n), other.at(n)))
    }

    pub fn map(&self, f: impl Fn(M2) -> M2) -> Self {
        Self::from_nodes(&self.grid, |n| f(self.at(n)))
    }

    pub fn entry(&self, i: usize, j: usize) -> DiscFn {
        DiscFn::from_parts(
            &self.grid,
            self.interior.iter().map(|m| m[(i, j)]).collect(),
            BoundaryFn::from_samples(self.grid.boundary(), self.boundary.iter().map(|m| m[(i, j)]).collect()).unwrap(),
        )
        .unwrap()
    }

    fn from_entries(e: &[[DiscFn; 2]; 2]) -> Self {
        let grid = e[0][0].grid().clone();
        Self::from_nodes(&grid, |n| M2::from_fn(|i, j| node_value(&e[i][j], n)))
    }

    /// Sup of the operator norm over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.interior
            .iter()
            .chain(&self.boundary)
            .map(crate::acs::op_norm)
            .fold(0.0, crate::nan_max)
    }

    /// `M v` pointwise.
    pub fn apply(&self, v: &Pair) -> Pair {
        let f = |i: usize| {
            pair_from_nodes(&self.grid, |n| {
                let m = self.at(n);
                m[(i, 0)] * node_value(&v[0], n) + m[(i, 1)] * node_value(&v[1], n)
            })
        };
        [f(0), f(1)]
    }

    pub fn conj(&self) -> Self {
        self.map(|m| m.map(|c| c.conj()))
    }

    fn dbar(&self) -> Self {
        let d = [
            [self.entry(0, 0).d_zetabar(), self.entry(0, 1).d_zetabar()],
            [self.entry(1, 0).d_zetabar(), self.entry(1, 1).d_zetabar()],
        ];
        Self::from_entries(&d)
    }
}

#[derive(Clone, Copy, Debug)]
enum Node {
    Interior(usize),
    Boundary(usize),
}

fn node_value(f: &DiscFn, n: Node) -> C64 {
    match n {
        Node::Interior(k) => f.interior()[k],
        Node::Boundary(k) => f.boundary().samples()[k],
    }
}

fn pair_from_nodes(grid: &DiscGrid, f: impl Fn(Node) -> C64) -> DiscFn {
    let interior = (0..grid.n_interior()).map(|k| f(Node::Interior(k))).collect();
    let b = (0..grid.boundary().n()).map(|k| f(Node::Boundary(k))).collect();
    DiscFn::from_parts(grid, interior, BoundaryFn::from_samples(grid.boundary(), b).unwrap()).unwrap()
}

fn add(a: &Pair, b: &Pair) -> Pair {
    [&a[0] + &b[0], &a[1] + &b[1]]
}

fn sub(a: &Pair, b: &Pair) -> Pair {
    [&a[0] - &b[0], &a[1] - &b[1]]
}

fn conj(a: &Pair) -> Pair {
    [a[0].conj(), a[1].conj()]
}

fn dist(a: &Pair, b: &Pair) -> f64 {
    a[0].dist(&b[0]).max(a[1].dist(&b[1]))
}

fn sup(a: &Pair) -> f64 {
    a[0].sup_norm().max(a[1].sup_norm())
}

/// How `Lambda` is continued into the disc; only its boundary values enter the
/// boundary condition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum LambdaExtension {
    /// Harmonic extension of the boundary values.
    #[default]
    Harmonic,
    /// The defining formula for `lambda` evaluated along `Z` in the interior.
    AlongDisc,
}

#[derive(Clone, Debug)]
pub struct LinearizedCoefficients {
    pub grid: DiscGrid,
    /// `(lambda1, lambda2)`.
    pub lambda: Pair,
    /// `[[lambda1, lambda2], [0, 1]]`.
    pub big_lambda: MatField,
    /// `A(Z)` along the disc.
    pub a: MatField,
    pub a1: MatField,
    pub a2: MatField,
    pub b1: MatField,
    pub b2: MatField,
}

fn inv_i_prime(a: &M2) -> M2 {
    let abar = a.map(|c| c.conj());
    (M2::identity() - a * abar).try_inverse().unwrap_or_else(M2::identity)
}

/// `(A1 e, A2 e)` from the real-linear map `M(Z1) = Adot conj(Z_zeta) - (dbar A) conj(Zdot)`.
fn a1_a2(a: &AMatrixField, p: Point2C, dz: [C64; 2], dzb: [C64; 2]) -> (M2, M2, M2) {
    let am = a.eval(p);
    let ip = inv_i_prime(&am);
    let [az, aw] = a.a_z(p);
    let [azb, awb] = a.a_zbar(p);
    let zeta_conj = nalgebra::Vector2::new(dz[0].conj(), dz[1].conj());
    let dbar_a = az * dzb[0] + aw * dzb[1] + azb * dz[0].conj() + awb * dz[1].conj();
    let m = |z1: nalgebra::Vector2<C64>| -> nalgebra::Vector2<C64> {
        let zd = ip * (z1 + am * z1.map(|c| c.conj()));
        let adot = az * zd[0] + aw * zd[1] + azb * zd[0].conj() + awb * zd[1].conj();
        adot * zeta_conj - dbar_a * zd.map(|c| c.conj())
    };
    let mut a1 = M2::zeros();
    let mut a2 = M2::zeros();
    for k in 0..2 {
        let mut e = nalgebra::Vector2::new(ZERO, ZERO);
        e[k] = ONE;
        let me = m(e);
        let mie = m(e * I);
        let c1 = (me - mie * I) * C64::new(0.5, 0.0);
        let c2 = (me + mie * I) * C64::new(0.5, 0.0);
        a1.set_column(k, &c1);
        a2.set_column(k, &c2);
    }
    (a1, a2, am)
}

/// Coefficients of the linearized problem along a converged disc.
pub fn assemble(
    e: &Hypersurface,
    a: &AMatrixField,
    z: &BishopDisc,
    ext: LambdaExtension,
) -> Result<LinearizedCoefficients> {
    let grid = z.grid().clone();
    let (zz, zzb) = (z.z.d_zeta(), z.z.d_zetabar());
    let (wz, wzb) = (z.w.d_zeta(), z.w.d_zetabar());
    let point = |n: Node| Point2C::new(node_value(&z.z, n), node_value(&z.w, n));
    let lambda_at = |p: Point2C, am: &M2| -> [C64; 2] {
        let ip = inv_i_prime(am);
        let [rz, rw] = e.gradient(p);
        let row = nalgebra::RowVector2::new(rz, rw);
        let rowb = row.map(|c| c.conj());
        let l = row * ip + rowb * ip.map(|c| c.conj()) * am.map(|c| c.conj());
        [l[0], l[1]]
    };
    let mut a_int = Vec::with_capacity(grid.n_interior());
    let mut a1_int = Vec::with_capacity(grid.n_interior());
    let mut a2_int = Vec::with_capacity(grid.n_interior());
    let nb = grid.boundary().n();
    let mut a_bd = Vec::with_capacity(nb);
    let mut a1_bd = Vec::with_capacity(nb);
    let mut a2_bd = Vec::with_capacity(nb);
    for n in (0..grid.n_interior())
        .map(Node::Interior)
        .chain((0..nb).map(Node::Boundary))
    {
        let dz = [node_value(&zz, n), node_value(&wz, n)];
        let dzb = [node_value(&zzb, n), node_value(&wzb, n)];
        let (m1, m2, am) = a1_a2(a, point(n), dz, dzb);
        match n {
            Node::Interior(_) => {
                a_int.push(am);
                a1_int.push(m1);
                a2_int.push(m2);
            }
            Node::Boundary(_) => {
                a_bd.push(am);
                a1_bd.push(m1);
                a2_bd.push(m2);
            }
        }
    }
    let mk = |i: Vec<M2>, b: Vec<M2>| MatField {
        grid: grid.clone(),
        interior: i,
        boundary: b,
    };
    let am = mk(a_int, a_bd);
    let a1 = mk(a1_int, a1_bd);
    let a2 = mk(a2_int, a2_bd);

    let lam_nodes = |n: Node| lambda_at(point(n), &am.at(n));
    let lambda: Pair = match ext {
        LambdaExtension::AlongDisc => [
            pair_from_nodes(&grid, |n| lam_nodes(n)[0]),
            pair_from_nodes(&grid, |n| lam_nodes(n)[1]),
        ],
        LambdaExtension::Harmonic => {
            let b: Vec<[C64; 2]> = (0..nb).map(|k| lam_nodes(Node::Boundary(k))).collect();
            let ext = |c: usize| {
                let bf = BoundaryFn::from_samples(grid.boundary(), b.iter().map(|v| v[c]).collect()).unwrap();
                crate::ops::harmonic_extension(&grid, &bf)
            };
            [ext(0), ext(1)]
        }
    };
    let min_l1 = lambda[0]
        .interior()
        .iter()
        .chain(lambda[0].boundary().samples())
        .map(|c| c.norm())
        .fold(f64::INFINITY, f64::min);
    if min_l1 < 1e-3 {
        return Err(Error::DegenerateBoundary(format!(
            "lambda1 nearly vanishes (min |lambda1| = {min_l1:.3e})"
        )));
    }
    let zero = DiscFn::zero(&grid);
    let one = DiscFn::constant(&grid, ONE);
    let big_lambda = MatField::from_entries(&[[lambda[0].clone(), lambda[1].clone()], [zero, one]]);
    let lam_inv = big_lambda.map(|m| m.try_inverse().unwrap());
    let dbar_lambda = big_lambda.dbar();
    let t1 = dbar_lambda.zip(&lam_inv, |d, li| d * li);
    let t2 = big_lambda.zip(&a1, |l, a| l * a).zip(&lam_inv, |la, li| la * li);
    let b1 = t1.zip(&t2, |x, y| x + y);
    let b2 = big_lambda
        .zip(&a2, |l, a| l * a)
        .zip(&lam_inv, |la, li| la * li.map(|c| c.conj()));
    Ok(LinearizedCoefficients {
        grid,
        lambda,
        big_lambda,
        a: am,
        a1,
        a2,
        b1,
        b2,
    })
}

impl LinearizedCoefficients {
    /// Bare coefficients `B1`, `B2` with `Lambda = I` and `A = 0`.
    pub fn from_b(b1: MatField, b2: MatField) -> Self {
        let grid = b1.grid.clone();
        let id = MatField::from_nodes(&grid, |_| M2::identity());
        Self {
            lambda: [DiscFn::constant(&grid, ONE), DiscFn::zero(&grid)],
            big_lambda: id,
            a: MatField::zero(&grid),
            a1: MatField::zero(&grid),
            a2: MatField::zero(&grid),
            b1,
            b2,
            grid,
        }
    }

    pub fn b_norm(&self) -> f64 {
        self.b1.sup_norm().max(self.b2.sup_norm())
    }

    /// `dbar V - B1 V - B2 Vbar` at the interior nodes.
    pub fn pde_residual(&self, v: &Pair) -> Pair {
        let r = |k: usize| {
            let d = v[k].d_zetabar();
            let b1v = self.b1.apply(v);
            let b2v = self.b2.apply(&conj(v));
            &(&d - &b1v[k]) - &b2v[k]
        };
        [r(0), r(1)]
    }

    /// `L1 u = T1(B1 u) + T1*(B2bar u)`.
    pub fn l1(&self, u: &Pair) -> Pair {
        let x = self.b1.apply(u);
        let y = self.b2.conj().apply(u);
        add(&t1(&x), &t1_star(&y))
    }

    /// `L2 u = T1(B2 u) + T1*(B1bar u)`.
    pub fn l2(&self, u: &Pair) -> Pair {
        let x = self.b2.apply(u);
        let y = self.b1.conj().apply(u);
        add(&t1(&x), &t1_star(&y))
    }

    fn l1_bar(&self, u: &Pair) -> Pair {
        conj(&self.l1(&conj(u)))
    }

    fn l2_bar(&self, u: &Pair) -> Pair {
        conj(&self.l2(&conj(u)))
    }

    /// `Zdot = I'(Z1 + A conj Z1)` with `Z1 = Lambda^{-1} V`.
    pub fn z_dot(&self, v: &Pair) -> (Pair, Pair) {
        let li = self.big_lambda.map(|m| m.try_inverse().unwrap());
        let z1 = li.apply(v);
        let ip = self.a.map(|a| inv_i_prime(&a));
        let az1 = self.a.apply(&conj(&z1));
        let zd = ip.apply(&add(&z1, &az1));
        (z1, zd)
    }

    /// `V = Lambda (Zdot - A conj Zdot)`.
    pub fn v_of(&self, zdot: &Pair) -> Pair {
        let z1 = sub(zdot, &self.a.apply(&conj(zdot)));
        self.big_lambda.apply(&z1)
    }
}

fn t1(u: &Pair) -> Pair {
    [cauchy_green(&u[0], true), cauchy_green(&u[1], true)]
}

fn t1_star(u: &Pair) -> Pair {
    [cauchy_star(&u[0], true), cauchy_star(&u[1], true)]
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RhOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RhOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Perturbation {
    pub v: Pair,
    pub z1: Pair,
    pub z_dot: Pair,
    pub generator: Option<BoundaryFn>,
    pub iterations: usize,
    /// `sup |dbar V - B1 V - B2 Vbar|` (including forcing, if any).
    pub residual_pde: f64,
    /// `sup |Re V - Gamma|` on the circle.
    pub residual_bc: f64,
    pub v_at_one: f64,
}

fn boundary_mismatch(v: &Pair, gamma: &[BoundaryFn; 2]) -> f64 {
    (0..2)
        .map(|k| {
            v[k].boundary()
                .samples()
                .iter()
                .zip(gamma[k].samples())
                .map(|(a, b)| (a.re - b.re).abs())
                .fold(0.0, crate::nan_max)
        })
        .fold(0.0, crate::nan_max)
}

fn check_gamma(grid: &DiscGrid, gamma: &[BoundaryFn; 2]) -> Result<()> {
    for g in gamma {
        if g.grid() != grid.boundary() {
            return Err(Error::Config("boundary data lives on a different grid".into()));
        }
        if !g.is_real() {
            return Err(Error::Domain("Gamma must be real".into()));
        }
        if g.at_one().norm() > 1e-10 {
            return Err(Error::Domain(format!(
                "Gamma(1) must vanish, got {:.3e}",
                g.at_one().norm()
            )));
        }
    }
    Ok(())
}

fn v0_of(grid: &DiscGrid, gamma: &[BoundaryFn; 2]) -> Pair {
    [
        cauchy_boundary(&gamma[0], grid, true).scale(C64::new(2.0, 0.0)),
        cauchy_boundary(&gamma[1], grid, true).scale(C64::new(2.0, 0.0)),
    ]
}

/// Picard iteration for `V = V0 + F + L1 V + L2 Vbar`, where `F` carries the
/// optional forcing `dbar V = B1 V + B2 Vbar + f`.
pub fn solve_rh_forced(
    c: &LinearizedCoefficients,
    gamma: &[BoundaryFn; 2],
    forcing: Option<&Pair>,
    opts: RhOptions,
) -> Result<Perturbation> {
    check_gamma(&c.grid, gamma)?;
    let mut base = v0_of(&c.grid, gamma);
    if let Some(f) = forcing {
        base = add(&base, &add(&t1(f), &t1_star(&conj(f))));
    }
    let mut v = base.clone();
    let mut step = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = add(&base, &add(&c.l1(&v), &c.l2(&conj(&v))));
        let s = dist(&next, &v);
        v = next;
        if !s.is_finite() || (it > 3 && s > step * 1.5 && s > 1e-8) {
            return Err(Error::NonContraction { step: s });
        }
        step = s;
        if step <= opts.tol * (1.0 + sup(&v)) {
            return Ok(finish(c, v, gamma, forcing, it, None));
        }
    }
    Err(Error::NonContraction { step })
}

pub fn solve_rh(c: &LinearizedCoefficients, gamma: &[BoundaryFn; 2], opts: RhOptions) -> Result<Perturbation> {
    solve_rh_forced(c, gamma, None, opts)
}

fn finish(
    c: &LinearizedCoefficients,
    v: Pair,
    gamma: &[BoundaryFn; 2],
    forcing: Option<&Pair>,
    it: usize,
    generator: Option<BoundaryFn>,
) -> Perturbation {
    let mut r = c.pde_residual(&v);
    if let Some(f) = forcing {
        r = sub(&r, f);
    }
    let residual_pde = r[0].sup_interior().max(r[1].sup_interior());
    let residual_bc = boundary_mismatch(&v, gamma);
    let v_at_one = v[0].boundary().at_one().norm().max(v[1].boundary().at_one().norm());
    let (z1, z_dot) = c.z_dot(&v);
    Perturbation {
        v,
        z1,
        z_dot,
        generator,
        iterations: it,
        residual_pde,
        residual_bc,
        v_at_one,
    }
}

fn neumann(x0: &Pair, mut op: impl FnMut(&Pair) -> Result<Pair>, opts: RhOptions) -> Result<Pair> {
    let mut x = x0.clone();
    let mut step = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = add(x0, &op(&x)?);
        let s = dist(&next, &x);
        x = next;
        if !s.is_finite() || (it > 3 && s > step * 1.5 && s > 1e-8) {
            return Err(Error::NonContraction { step: s });
        }
        step = s;
        if step <= opts.tol * (1.0 + sup(&x)) {
            return Ok(x);
        }
    }
    Err(Error::NonContraction { step })
}

/// `R1 V0` and `R2 conj(V0)` with
/// `R1 = [I - L1 - L2 (I - L1bar)^{-1} L2bar]^{-1} - I` and
/// `R2 = (I - L1)^{-1} L2 (I + R1bar)`, each inverse a Neumann series.
pub fn resolvent_terms(c: &LinearizedCoefficients, v0: &Pair, opts: RhOptions) -> Result<(Pair, Pair)> {
    let g = |x: &Pair| -> Result<Pair> {
        let y = neumann(&c.l2_bar(x), |y| Ok(c.l1_bar(y)), opts)?;
        Ok(add(&c.l1(x), &c.l2(&y)))
    };
    let u = neumann(v0, g, opts)?;
    let r1v0 = sub(&u, v0);
    let r2 = neumann(&c.l2(&conj(&u)), |y| Ok(c.l1(y)), opts)?;
    Ok((r1v0, r2))
}

/// `V = V0 + R1 V0 + R2 conj(V0)` with `V0 = 2 K1 Gamma`.
pub fn resolvent_apply(c: &LinearizedCoefficients, gamma: &[BoundaryFn; 2], opts: RhOptions) -> Result<Perturbation> {
    check_gamma(&c.grid, gamma)?;
    let v0 = v0_of(&c.grid, gamma);
    let (r1, r2) = resolvent_terms(c, &v0, opts)?;
    let v = add(&add(&v0, &r1), &r2);
    Ok(finish(c, v, gamma, None, 0, None))
}

/// Generators `(zeta - 1) zeta^k` and `i (zeta - 1) zeta^k`, `k < count`.
pub fn generator_basis(grid: &DiscGrid, count: usize) -> Vec<BoundaryFn> {
    let mut out = Vec::with_capacity(2 * count);
    for k in 0..count as i32 {
        for c in [ONE, I] {
            out.push(BoundaryFn::from_fn(grid.boundary(), move |z| c * (z - 1.0) * z.powi(k)));
        }
    }
    out
}

/// Generators `(zeta - 1) ((1 + conj(zeta0) zeta)/2)^n`, peaking at `zeta0`.
pub fn peak_basis(grid: &DiscGrid, zeta0: C64, count: usize) -> Vec<BoundaryFn> {
    let mut out = Vec::with_capacity(2 * count);
    for n in 1..=count as i32 {
        for c in [ONE, I] {
            out.push(BoundaryFn::from_fn(grid.boundary(), move |z| {
                c * (z - 1.0) * ((1.0 + zeta0.conj() * z) * 0.5).powi(n)
            }));
        }
    }
    out
}

/// Perturbation generated by `phi`: `Gamma = (0, Re phi)`.
pub fn perturbation(c: &LinearizedCoefficients, phi: &BoundaryFn, opts: RhOptions) -> Result<Perturbation> {
    if phi.at_one().norm() > 1e-10 {
        return Err(Error::Domain("generator must vanish at 1".into()));
    }
    let gamma = [BoundaryFn::zero(c.grid.boundary()), phi.re()];
    let mut p = solve_rh(c, &gamma, opts)?;
    p.generator = Some(phi.clone());
    Ok(p)
}

/// Radial derivative at `1` of a disc function.
pub fn d1(f: &DiscFn) -> C64 {
    let ev = f.evaluator();
    radial_derivative_at_one(|r| ev.eval(C64::new(r, 0.0)))
}

/// `sup |det L(rho)|` along `Z` at `n` equally spaced boundary points.
pub fn levi_trace(e: &Hypersurface, z: &BishopDisc, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let p = z.eval(C64::from_polar(1.0, th));
            (th, levi_determinant(e, p))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TangencyReport {
    /// `|d_1 zdot|` per generator.
    pub d1_zdot: Vec<f64>,
    pub max_d1_zdot: f64,
    /// `sup |T[B1 + B2bar mu]^{12}|` on the circle, the leading-order functional.
    pub functional: f64,
    pub levi_trace: Vec<(f64, f64)>,
    pub max_levi_det: f64,
    pub all_tangential: bool,
    pub levi_flat: bool,
    /// The dichotomy: all generators tangential exactly when `det L(rho)` vanishes along the boundary.
    pub consistent: bool,
}

pub const TANGENTIAL_TOL: f64 = 1e-4;
pub const LEVI_DET_TOL: f64 = 1e-3;

pub fn tangency_diagnostic(
    e: &Hypersurface,
    c: &LinearizedCoefficients,
    z: &BishopDisc,
    basis: &[BoundaryFn],
    opts: RhOptions,
) -> Result<TangencyReport> {
    let mut d1s = Vec::with_capacity(basis.len());
    for phi in basis {
        let p = perturbation(c, phi, opts)?;
        d1s.push(d1(&p.z_dot[0]).norm());
    }
    let max_d1 = d1s.iter().cloned().fold(0.0, crate::nan_max);
    let b1 = c.b1.entry(0, 1);
    let b2 = c.b2.entry(0, 1).conj();
    let f = &cauchy_green(&b1, false) + &cauchy_green_mu(&b2, false);
    let functional = f.boundary().sup_norm();
    let trace = levi_trace(e, z, 64);
    let max_det = trace.iter().map(|t| t.1.abs()).fold(0.0, crate::nan_max);
    let all_tangential = max_d1 <= TANGENTIAL_TOL;
    let levi_flat = max_det <= LEVI_DET_TOL;
    Ok(TangencyReport {
        d1_zdot: d1s,
        max_d1_zdot: max_d1,
        functional,
        levi_trace: trace,
        max_levi_det: max_det,
        all_tangential,
        levi_flat,
        consistent: all_tangential == levi_flat,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Rank of the `w`-rows alone.
    pub w_rank: usize,
    /// `max |rho_z zdot + rho_w wdot|(zeta0)` over the basis.
    pub tangency_residual: f64,
}

fn numerical_rank(sv: &[f64]) -> usize {
    let m = sv.iter().cloned().fold(0.0, crate::nan_max);
    sv.iter().filter(|&&s| s > 1e-6 * m && m > 0.0).count()
}

/// Rank of `Zdot -> Zdot(zeta0)` over the span of the basis.
pub fn evaluation_rank(
    e: &Hypersurface,
    c: &LinearizedCoefficients,
    z: &BishopDisc,
    zeta0: C64,
    basis: &[BoundaryFn],
    opts: RhOptions,
) -> Result<RankReport> {
    if basis.len() < 8 {
        return Err(Error::Config(format!(
            "need at least 8 generators, got {}",
            basis.len()
        )));
    }
    if ((zeta0.norm() - 1.0).abs() > 1e-12) || (zeta0 - 1.0).norm() < 0.1 {
        return Err(Error::Domain(
            "zeta0 must lie on the circle with |zeta0 - 1| >= 0.1".into(),
        ));
    }
    let p0 = z.eval(zeta0);
    let [rz, rw] = e.gradient(p0);
    let mut m = DMatrix::<f64>::zeros(4, basis.len());
    let mut worst: f64 = 0.0;
    for (k, phi) in basis.iter().enumerate() {
        let p = perturbation(c, phi, opts)?;
        let zd = p.z_dot[0].boundary().eval(zeta0)?;
        let wd = p.z_dot[1].boundary().eval(zeta0)?;
        m.set_column(k, &Vector4::new(zd.re, zd.im, wd.re, wd.im));
        worst = worst.max((rz * zd + rw * wd).norm());
    }
    let sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    let w_rows = m.rows(2, 2).into_owned();
    let wsv: Vec<f64> = w_rows.svd(false, false).singular_values.iter().cloned().collect();
    Ok(RankReport {
        rank: numerical_rank(&sv),
        singular_values: sv,
        w_rank: numerical_rank(&wsv),
        tangency_residual: worst,
    })
}

/// `R(Z) = Z_zetabar - A(Z) conj(Z_zeta)` at the interior nodes.
pub fn nonlinear_residual(a: &AMatrixField, z: &Pair) -> Pair {
    let grid = z[0].grid();
    let (zz, zzb) = z[0].wirtinger();
    let (wz, wzb) = z[1].wirtinger();
    let n = grid.n_interior();
    let mut r0 = Vec::with_capacity(n);
    let mut r1 = Vec::with_capacity(n);
    for k in 0..n {
        let m = a.eval(Point2C::new(z[0].interior()[k], z[1].interior()[k]));
        r0.push(zzb[k] - m[(0, 0)] * zz[k].conj() - m[(0, 1)] * wz[k].conj());
        r1.push(wzb[k] - m[(1, 0)] * zz[k].conj() - m[(1, 1)] * wz[k].conj());
    }
    [
        DiscFn::from_interior(grid, r0).unwrap(),
        DiscFn::from_interior(grid, r1).unwrap(),
    ]
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FrechetReport {
    /// `sup |L_B Zdot - FD| / sup |FD|`.
    pub relative: f64,
    /// The same after removing the common `dbar Zdot` term, so only the
    /// structure-dependent part is compared; `None` when that part vanishes.
    pub relative_structure_part: Option<f64>,
}

fn sup_interior(p: &Pair) -> f64 {
    p[0].sup_interior().max(p[1].sup_interior())
}

/// Compares `Lambda^{-1}(dbar V - B1 V - B2 Vbar)`, `V = Lambda(Zdot - A conj Zdot)`,
/// with `(R(Z + h Zdot) - R(Z)) / h`.
pub fn frechet_check(
    a: &AMatrixField,
    c: &LinearizedCoefficients,
    z: &BishopDisc,
    zdot: &Pair,
    h: f64,
) -> FrechetReport {
    let base = [z.z.clone(), z.w.clone()];
    let moved = [
        &z.z + &zdot[0].scale(C64::new(h, 0.0)),
        &z.w + &zdot[1].scale(C64::new(h, 0.0)),
    ];
    let r0 = nonlinear_residual(a, &base);
    let r1 = nonlinear_residual(a, &moved);
    let fd = [
        (&r1[0] - &r0[0]).scale(C64::new(1.0 / h, 0.0)),
        (&r1[1] - &r0[1]).scale(C64::new(1.0 / h, 0.0)),
    ];
    let v = c.v_of(zdot);
    let li = c.big_lambda.map(|m| m.try_inverse().unwrap());
    let lb = li.apply(&c.pde_residual(&v));
    let diff = sup_interior(&sub(&lb, &fd));
    let dbar = [zdot[0].d_zetabar(), zdot[1].d_zetabar()];
    let part = sup_interior(&sub(&fd, &dbar));
    let total = sup_interior(&fd).max(1e-300);
    FrechetReport {
        relative: diff / total,
        relative_structure_part: (part > 1e-8 * total).then(|| diff / part),
    }
}

/// Smooth random `2 x 2` fields with entries `sum c_ab zeta^a zetabar^b`, `a + b <= 2`,
/// scaled to sup norm about `scale`.
pub fn random_b(grid: &DiscGrid, seed: u64, scale: f64) -> (MatField, MatField) {
    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![[[ZERO; 6]; 4]; 2];
    for m in coeffs.iter_mut() {
        for e in m.iter_mut() {
            for c in e.iter_mut() {
                *c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
    }
    let field = |k: usize| {
        let cs = coeffs[k];
        let f = MatField::from_fn(grid, move |z| {
            let mono = [ONE, z, z.conj(), z * z, z * z.conj(), z.conj() * z.conj()];
            M2::from_fn(|i, j| cs[2 * i + j].iter().zip(&mono).map(|(c, m)| c * m).sum::<C64>() / 6.0)
        });
        let n = f.sup_norm();
        f.map(|m| m * C64::new(scale / n, 0.0))
    };
    (field(0), field(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acs::StructureSpec;
    use crate::bishop::{solve_bishop, BoundaryData, SolveMode, SolverOptions};
    use crate::geom::HypersurfaceSpec;

    fn grid() -> DiscGrid {
        DiscGrid::new(128, 32, 64).unwrap()
    }

    fn disc(e: &Hypersurface, a: &AMatrixField, g: &DiscGrid, eps: f64) -> BishopDisc {
        let wh = BoundaryFn::from_fn(g.boundary(), |z| (z - 1.0) * eps);
        let data = BoundaryData::from_w_hat(wh, 0.0).unwrap();
        solve_bishop(
            e,
            a,
            &data,
            SolveMode::Pinned(Point2C::origin()),
            g,
            SolverOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn flat_standard_coefficients_vanish() {
        let g = grid();
        let e = HypersurfaceSpec::Flat.build().unwrap();
        let a = AMatrixField::zero();
        let z = disc(&e, &a, &g, 0.1);
        let c = assemble(&e, &a, &z, LambdaExtension::Harmonic).unwrap();
        assert!(c.b1.sup_norm() < 1e-12 && c.b2.sup_norm() < 1e-12 && c.a1.sup_norm() < 1e-12);
        assert!((c.lambda[0].boundary().at_one() - 0.5).norm() < 1e-9);
        assert!(c.lambda[1].sup_norm() < 1e-9);
    }

    #[test]
    fn quadric_b1_from_lambda_only() {
        let g = grid();
        let e = HypersurfaceSpec::Quadric { sigma: 1.0 }.build().unwrap();
        let a = AMatrixField::zero();
        let z = disc(&e, &a, &g, 0.1);
        let c = assemble(&e, &a, &z, LambdaExtension::Harmonic).unwrap();
        assert!(c.b2.sup_norm() < 1e-12);
        // lambda = (1/2, wbar) on the circle, harmonically extended: dbar lambda2 = conj(w_zeta)
        let expect = z.w.d_zeta().conj();
        let b12 = c.b1.entry(0, 1);
        let mut worst: f64 = 0.0;
        for (x, y) in b12.interior().iter().zip(expect.interior()) {
            worst = worst.max((x - y).norm());
        }
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn zero_b_gives_holomorphic_generator() {
        let g = grid();
        let c = LinearizedCoefficients::from_b(MatField::zero(&g), MatField::zero(&g));
        let phi = BoundaryFn::from_fn(g.boundary(), |z| (z - 1.0) * z * C64::new(0.3, 0.2));
        let p = perturbation(&c, &phi, RhOptions::default()).unwrap();
        let exact = DiscFn::from_fn(&g, |z| (z - 1.0) * z * C64::new(0.3, 0.2));
        assert!(p.v[0].sup_norm() < 1e-14);
        assert!(p.v[1].dist(&exact) < 1e-12);
    }

    #[test]
    fn manufactured_solution() {
        let g = grid();
        let (b1, b2) = random_b(&g, 7, 0.1);
        let c = LinearizedCoefficients::from_b(b1, b2);
        let vs: Pair = [
            DiscFn::from_fn(&g, |z| (z - 1.0) * (z.conj() * 0.3 + C64::new(0.1, 0.2) * z * z).exp()),
            DiscFn::from_fn(&g, |z| (z - 1.0) * (z * z.conj() * 0.5 + I * z)),
        ];
        let f = c.pde_residual(&vs);
        let gamma = [vs[0].boundary().re(), vs[1].boundary().re()];
        let p = solve_rh_forced(&c, &gamma, Some(&f), RhOptions::default()).unwrap();
        assert!(dist(&p.v, &vs) < 1e-4, "{}", dist(&p.v, &vs));
    }

    #[test]
    fn resolvent_matches_picard() {
        let g = grid();
        let (b1, b2) = random_b(&g, 11, 0.1);
        let c = LinearizedCoefficients::from_b(b1, b2);
        let gamma = [
            BoundaryFn::from_real_fn(g.boundary(), |z| (z - 1.0).norm_sqr() * 0.3),
            BoundaryFn::from_real_fn(g.boundary(), |z| (z * z - 1.0).re),
        ];
        let a = solve_rh(&c, &gamma, RhOptions::default()).unwrap();
        let b = resolvent_apply(&c, &gamma, RhOptions::default()).unwrap();
        assert!(dist(&a.v, &b.v) < 1e-6);
        assert!(a.residual_pde < 1e-5 && a.residual_bc < 1e-6 && a.v_at_one < 1e-10);
    }

    #[test]
    fn r1_minus_l1_is_second_order() {
        let g = grid();
        let v0 = [
            DiscFn::from_fn(&g, |z| (z - 1.0) * 0.5),
            DiscFn::from_fn(&g, |z| (z * z - 1.0) * I),
        ];
        let mut pts = Vec::new();
        for s in [0.02, 0.04, 0.08] {
            let (b1, b2) = random_b(&g, 3, s);
            let c = LinearizedCoefficients::from_b(b1, b2);
            let (r1, _) = resolvent_terms(&c, &v0, RhOptions::default()).unwrap();
            let d = sup(&sub(&r1, &c.l1(&v0)));
            pts.push((s.ln(), d.ln()));
        }
        let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
        assert!((slope - 2.0).abs() < 0.3, "{slope}");
    }

    #[test]
    fn frechet_oracle_on_perturbed_quadric() {
        let g = grid();
        let e = HypersurfaceSpec::Quadric { sigma: 1.0 }.build().unwrap();
        let a = StructureSpec::DiagonalPerturbation { eps: 0.05 }.build().unwrap();
        let z = disc(&e, &a, &g, 0.1);
        let c = assemble(&e, &a, &z, LambdaExtension::Harmonic).unwrap();
        let zdot = [
            DiscFn::from_fn(&g, |z| z.conj() * 0.3 + z * z),
            DiscFn::from_fn(&g, |z| z * z.conj() * 0.2 + I * z),
        ];
        let r = frechet_check(&a, &c, &z, &zdot, 1e-5);
        assert!(r.relative < 1e-3 && r.relative_structure_part.unwrap() < 1e-3, "{r:?}");
    }

    #[test]
    fn lambda_extensions_agree_on_boundary_diagnostics() {
        let g = grid();
        let e = HypersurfaceSpec::Quadric { sigma: 1.0 }.build().unwrap();
        let a = StructureSpec::Normalized { eps: 0.02 }.build().unwrap();
        let z = disc(&e, &a, &g, 0.1);
        let basis = generator_basis(&g, 3);
        let mut out = Vec::new();
        for ext in [LambdaExtension::Harmonic, LambdaExtension::AlongDisc] {
            let c = assemble(&e, &a, &z, ext).unwrap();
            let d: Vec<C64> = basis
                .iter()
                .map(|phi| d1(&perturbation(&c, phi, RhOptions::default()).unwrap().z_dot[0]))
                .collect();
            out.push(d);
        }
        for (x, y) in out[0].iter().zip(&out[1]) {
            assert!((x - y).norm() < 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn flat_rank_two_and_quadric_rank_three() {
        let g = grid();
        let a = AMatrixField::zero();
        let basis = generator_basis(&g, 8);
        let zeta0 = C64::new(-1.0, 0.0);
        let flat = HypersurfaceSpec::Flat.build().unwrap();
        let z = disc(&flat, &a, &g, 0.1);
        let c = assemble(&flat, &a, &z, LambdaExtension::Harmonic).unwrap();
        let r = evaluation_rank(&flat, &c, &z, zeta0, &basis, RhOptions::default()).unwrap();
        assert_eq!(r.rank, 2);
        assert!(r.tangency_residual < 1e-6);
        let q = HypersurfaceSpec::Quadric { sigma: 1.0 }.build().unwrap();
        let z = disc(&q, &a, &g, 0.1);
        let c = assemble(&q, &a, &z, LambdaExtension::Harmonic).unwrap();
        let r = evaluation_rank(&q, &c, &z, zeta0, &basis, RhOptions::default()).unwrap();
        assert!(r.rank >= 3, "{r:?}");
        let peaks = peak_basis(&g, zeta0, 6);
        let r = evaluation_rank(&q, &c, &z, zeta0, &peaks, RhOptions::default()).unwrap();
        assert_eq!(r.w_rank, 2);
        assert!(evaluation_rank(&q, &c, &z, zeta0, &basis[..4], RhOptions::default()).is_err());
    }

    #[test]
    fn tangency_dichotomy_flat_vs_quadric() {
        let g = grid();
        let a = AMatrixField::zero();
        let basis = generator_basis(&g, 4);
        for (spec, flat) in [
            (HypersurfaceSpec::Flat, true),
            (HypersurfaceSpec::Quadric { sigma: 1.0 }, false),
        ] {
            let e = spec.build().unwrap();
            let z = disc(&e, &a, &g, 0.1);
            let c = assemble(&e, &a, &z, LambdaExtension::Harmonic).unwrap();
            let r = tangency_diagnostic(&e, &c, &z, &basis, RhOptions::default()).unwrap();
            assert_eq!(r.all_tangential, flat, "{r:?}");
            assert!(r.consistent);
        }
    }
}
