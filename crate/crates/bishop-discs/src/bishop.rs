//! Bishop discs: `J`-holomorphic discs whose boundary circle lies in `E`.
//!
//! With `E` in parametric form `Re Z = h(Im Z, t)`, a disc solves
//! `Z = S h(Im Z, t) + i c0 + P(A(Z) conj(Z_zeta))`; the pinned variant uses
//! `S_1`, `P_1` and adds `Z0`, so `Z(1) = Z0`.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::acs::AMatrixField;
use crate::geom::Hypersurface;
use crate::grid::{BoundaryFn, DiscEval, DiscFn, DiscGrid, Point2C};
use crate::ops::{cauchy_green, p_transform, schwarz};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Parametric boundary data.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    /// `Re w` on the circle.
    pub t: BoundaryFn,
    /// Imaginary parts of `Z(0)` in free mode.
    pub c0: [f64; 2],
    /// Holomorphic datum with `w_hat(1) = 0`, when the data came from one.
    pub w_hat: Option<BoundaryFn>,
}

impl BoundaryData {
    pub fn free(t: BoundaryFn, c0: [f64; 2]) -> Result<Self> {
        if !t.is_real() {
            return Err(Error::Domain(format!(
                "t must be real (max |Im| = {:.3e})",
                t.max_imag()
            )));
        }
        Ok(Self { t, c0, w_hat: None })
    }

    /// `t = t0 + Re w_hat`.
    pub fn from_w_hat(w_hat: BoundaryFn, t0: f64) -> Result<Self> {
        let v = w_hat.at_one().norm();
        if v > 1e-10 {
            return Err(Error::Domain(format!("w_hat(1) must vanish, got {v:.3e}")));
        }
        let t = w_hat.map(|c| C64::new(t0 + c.re, 0.0));
        Ok(Self {
            t,
            c0: [0.0, 0.0],
            w_hat: Some(w_hat),
        })
    }

    /// `t = 0`, `c0 = 0`.
    pub fn zero(grid: &DiscGrid) -> Self {
        Self {
            t: BoundaryFn::zero(grid.boundary()),
            c0: [0.0, 0.0],
            w_hat: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolveMode {
    Free,
    Pinned(Point2C),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub omega: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            omega: 0.8,
            tol: 1e-11,
            max_iter: 200,
        }
    }
}

/// Residual thresholds a disc has to meet to be reported as converged.
pub const PDE_TOL: f64 = 1e-6;
pub const BC_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct BishopDisc {
    pub z: DiscFn,
    pub w: DiscFn,
    /// `Z(1)`.
    pub attachment: Point2C,
    pub residual_pde: f64,
    pub residual_bc: f64,
    pub iterations: usize,
    ez: DiscEval,
    ew: DiscEval,
}

impl BishopDisc {
    fn new(e: &Hypersurface, a: &AMatrixField, z: DiscFn, w: DiscFn, iterations: usize) -> Self {
        let residual_pde = crate::acs::jholo_residual(a, &z, &w);
        let residual_bc = boundary_residual(e, &z, &w);
        let attachment = Point2C::new(z.boundary().at_one(), w.boundary().at_one());
        let (ez, ew) = (z.evaluator(), w.evaluator());
        Self {
            z,
            w,
            attachment,
            residual_pde,
            residual_bc,
            iterations,
            ez,
            ew,
        }
    }

    /// Wraps maps built by other means (closed forms, explicit constructions)
    /// and measures their residuals against `E` and `A`.
    pub fn from_maps(e: &Hypersurface, a: &AMatrixField, z: DiscFn, w: DiscFn) -> Result<Self> {
        if z.grid() != w.grid() {
            return Err(Error::Config("disc components live on different grids".into()));
        }
        Ok(Self::new(e, a, z, w, 0))
    }

    pub fn grid(&self) -> &DiscGrid {
        self.z.grid()
    }

    pub fn eval(&self, zeta: C64) -> Point2C {
        Point2C::new(self.ez.eval(zeta), self.ew.eval(zeta))
    }

    /// Rows `(r, theta, Re z, Im z, Re w, Im w)` over the interior nodes and the circle.
    pub fn samples(&self) -> Vec<[f64; 6]> {
        let g = self.grid();
        let mut out = Vec::with_capacity(g.n_interior() + g.boundary().n());
        let nodes = g.nodes();
        for (k, n) in nodes.iter().enumerate() {
            let (z, w) = (self.z.interior()[k], self.w.interior()[k]);
            out.push([n.norm(), n.arg(), z.re, z.im, w.re, w.im]);
        }
        let (zb, wb) = (self.z.boundary().samples(), self.w.boundary().samples());
        for k in 0..g.boundary().n() {
            out.push([1.0, g.boundary().theta(k), zb[k].re, zb[k].im, wb[k].re, wb[k].im]);
        }
        out
    }

    /// Generalized-Bishop check: `Z - T[A(Z) conj(Z_zeta)]` is holomorphic, so the
    /// negative Fourier energy of its boundary trace vanishes.
    pub fn generalized_bishop_defect(&self, a: &AMatrixField) -> f64 {
        let [g1, g2] = forcing(a, &self.z, &self.w);
        let h1 = &self.z - &cauchy_green(&g1, false);
        let h2 = &self.w - &cauchy_green(&g2, false);
        h1.boundary().negative_energy().max(h2.boundary().negative_energy())
    }
}

fn boundary_residual(e: &Hypersurface, z: &DiscFn, w: &DiscFn) -> f64 {
    z.boundary()
        .samples()
        .iter()
        .zip(w.boundary().samples())
        .map(|(&z, &w)| e.rho(Point2C::new(z, w)).abs())
        .fold(0.0, crate::nan_max)
}

/// `A(Z) conj(Z_zeta)` at the interior nodes.
fn forcing(a: &AMatrixField, z: &DiscFn, w: &DiscFn) -> [DiscFn; 2] {
    let grid = z.grid();
    let (zz, _) = z.wirtinger();
    let (wz, _) = w.wirtinger();
    let n = grid.n_interior();
    let mut g1 = Vec::with_capacity(n);
    let mut g2 = Vec::with_capacity(n);
    for k in 0..n {
        let m = a.eval(Point2C::new(z.interior()[k], w.interior()[k]));
        let (cz, cw) = (zz[k].conj(), wz[k].conj());
        g1.push(m[(0, 0)] * cz + m[(0, 1)] * cw);
        g2.push(m[(1, 0)] * cz + m[(1, 1)] * cw);
    }
    [
        DiscFn::from_interior(grid, g1).unwrap(),
        DiscFn::from_interior(grid, g2).unwrap(),
    ]
}

/// Damped Picard iteration for the Bishop equation.
pub fn solve_bishop(
    e: &Hypersurface,
    a: &AMatrixField,
    data: &BoundaryData,
    mode: SolveMode,
    grid: &DiscGrid,
    opts: SolverOptions,
) -> Result<BishopDisc> {
    if data.t.grid() != grid.boundary() {
        return Err(Error::Config("boundary data lives on a different grid".into()));
    }
    let pinned = matches!(mode, SolveMode::Pinned(_));
    let (shift_z, shift_w) = match mode {
        SolveMode::Free => (C64::new(0.0, data.c0[0]), C64::new(0.0, data.c0[1])),
        SolveMode::Pinned(z0) => {
            let r = e.rho(z0);
            if r.abs() > 1e-8 {
                return Err(Error::Precondition(format!(
                    "attachment point is not on E (rho = {r:.3e})"
                )));
            }
            let dt = (data.t.at_one().re - z0.w.re).abs();
            if dt > 1e-10 {
                return Err(Error::Precondition(format!("t(1) differs from Re w0 by {dt:.3e}")));
            }
            (z0.z, z0.w)
        }
    };
    let sw = schwarz(&data.t, grid, pinned)?.map(|v| v + shift_w);
    let t = data.t.samples();

    let mut z = DiscFn::constant(grid, shift_z);
    let mut w = sw.clone();
    let mut step = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let [g1, g2] = forcing(a, &z, &w);
        let zb = z.boundary().samples();
        let wb = w.boundary().samples();
        let mut h = Vec::with_capacity(t.len());
        for k in 0..t.len() {
            h.push(e.graph(zb[k].im, C64::new(t[k].re, wb[k].im))?);
        }
        let h = BoundaryFn::from_real_samples(grid.boundary(), &h)?;
        let zn = &schwarz(&h, grid, pinned)?.map(|v| v + shift_z) + &p_transform(&g1, pinned);
        let wn = &sw + &p_transform(&g2, pinned);
        let zn = z.zip_map(&zn, |o, n| o + (n - o) * opts.omega);
        let wn = w.zip_map(&wn, |o, n| o + (n - o) * opts.omega);
        step = zn.dist(&z).max(wn.dist(&w));
        z = zn;
        w = wn;
        if !step.is_finite() || step > 1e6 {
            break;
        }
        if step <= opts.tol {
            let d = BishopDisc::new(e, a, z, w, it);
            if d.residual_pde > PDE_TOL || d.residual_bc > BC_TOL {
                return Err(Error::NonConvergence {
                    iterations: it,
                    step,
                    residual_pde: d.residual_pde,
                    residual_bc: d.residual_bc,
                });
            }
            return Ok(d);
        }
    }
    let d = BishopDisc::new(e, a, z, w, opts.max_iter);
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        step,
        residual_pde: d.residual_pde,
        residual_bc: d.residual_bc,
    })
}

/// Derivative at `r = 1` of `f(r)` from one-sided second-order differences at
/// steps `0.05` and `0.025`, combined by Richardson extrapolation.
pub fn radial_derivative_at_one<T>(f: impl Fn(f64) -> T) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let f1 = f(1.0);
    let d = |h: f64| (f1 * 3.0 - f(1.0 - h) * 4.0 + f(1.0 - 2.0 * h)) * (0.5 / h);
    let (coarse, fine) = (d(0.05), d(0.025));
    fine * (4.0 / 3.0) - coarse * (1.0 / 3.0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Transversality {
    pub value: f64,
    pub tangential: bool,
}

/// Signed normal component `<grad rho(Z(1)), dZ(d/dr)|_1>`.
pub fn transversality(d: &BishopDisc, e: &Hypersurface) -> Transversality {
    let dz = radial_derivative_at_one(|r| Vector4::from(d.eval(C64::new(r, 0.0)).to_real()));
    let g = Vector4::from(e.real_gradient(d.attachment));
    let value = g.dot(&dz);
    Transversality {
        value,
        tangential: value.abs() <= 1e-6,
    }
}

#[derive(Debug)]
pub struct FamilyMember {
    pub point: Point2C,
    pub disc: Result<BishopDisc>,
}

/// Lifts of one datum `w_hat`, each pinned at its attachment point. Runs the
/// points on scoped threads.
pub fn disc_family(
    e: &Hypersurface,
    a: &AMatrixField,
    w_hat: &BoundaryFn,
    points: &[Point2C],
    grid: &DiscGrid,
    opts: SolverOptions,
) -> Vec<FamilyMember> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(points.len().max(1));
    let chunk = points.len().div_ceil(workers.max(1)).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = points
            .chunks(chunk)
            .map(|ps| {
                s.spawn(move || {
                    ps.iter()
                        .map(|&p| FamilyMember {
                            point: p,
                            disc: BoundaryData::from_w_hat(w_hat.clone(), p.w.re)
                                .and_then(|data| solve_bishop(e, a, &data, SolveMode::Pinned(p), grid, opts)),
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("family worker panicked"))
            .collect()
    })
}

/// A small `J`-holomorphic disc `f` on `|zeta| < r0`, stored through
/// `F(zeta) = f(r0 zeta)` on the unit grid.
#[derive(Clone, Debug)]
pub struct LocalDisc {
    pub f: [DiscFn; 2],
    pub center: Point2C,
    pub r0: f64,
    pub residual_pde: f64,
    pub iterations: usize,
    ev: [DiscEval; 2],
}

impl LocalDisc {
    pub fn center(&self) -> Point2C {
        self.center
    }

    /// `F(zeta) = f(r0 zeta)`.
    pub fn eval_scaled(&self, zeta: C64) -> Point2C {
        Point2C::new(self.ev[0].eval(zeta), self.ev[1].eval(zeta))
    }

    /// `f(zeta)` for `|zeta| <= r0`.
    pub fn eval(&self, zeta: C64) -> Point2C {
        self.eval_scaled(zeta / self.r0)
    }

    /// `Delta f(0)` in the original variable, from circle means with Richardson.
    pub fn laplacian_at_center(&self) -> Point2C {
        let n = 64;
        let mean = |r: f64| {
            (0..n).fold(Point2C::origin(), |acc, k| {
                acc + self.eval_scaled(C64::from_polar(r, 2.0 * std::f64::consts::PI * k as f64 / n as f64))
            }) * C64::new(1.0 / n as f64, 0.0)
        };
        let f0 = self.eval_scaled(ZERO);
        let r = 0.5;
        let d1 = (mean(r) - f0) * C64::new(4.0 / (r * r), 0.0);
        let d2 = (mean(0.5 * r) - f0) * C64::new(16.0 / (r * r), 0.0);
        (d2 * C64::new(4.0, 0.0) - d1) * C64::new(1.0 / (3.0 * self.r0 * self.r0), 0.0)
    }
}

/// Interior fixed point `F = p + c0 + c1 zeta + T[A(F) conj(F_zeta)]` with
/// `F(0) = p` and `dF(0)(d/d Re zeta) = r0 v`.
pub fn local_disc(a: &AMatrixField, p: Point2C, v: Point2C, r0: f64, grid: &DiscGrid) -> Result<LocalDisc> {
    if !(r0 > 0.0) {
        return Err(Error::Domain(format!("disc radius must be positive, got {r0}")));
    }
    let n_t = grid.n_angular();
    let id2 = crate::grid::fft_index(2, n_t);
    let holo = |c0: Point2C, c1: Point2C| -> [DiscFn; 2] {
        [
            DiscFn::from_fn(grid, |zt| p.z + c0.z + c1.z * zt),
            DiscFn::from_fn(grid, |zt| p.w + c0.w + c1.w * zt),
        ]
    };
    let v0 = v * C64::new(r0, 0.0);
    let mut f = holo(Point2C::origin(), v0);
    let tol = 1e-13 * r0 * v.norm().max(1e-300) + 1e-300;
    for it in 1..=200 {
        let g = forcing(a, &f[0], &f[1]);
        let mut next: Vec<DiscFn> = Vec::with_capacity(2);
        let mut c0 = [ZERO; 2];
        let mut c1 = [ZERO; 2];
        let mut tg = Vec::with_capacity(2);
        for k in 0..2 {
            let t = cauchy_green(&g[k], false);
            let modes = g[k].ring_modes();
            let d0: C64 = grid
                .radii()
                .iter()
                .zip(grid.radial_weights())
                .zip(&modes)
                .map(|((r, w), m)| m[id2] * (w / r))
                .sum::<C64>()
                * -2.0;
            let g0 = g[k].evaluator().eval(ZERO);
            c0[k] = -t.evaluator().eval(ZERO);
            c1[k] = v0.component(k) - g0 - d0;
            tg.push(t);
        }
        let base = holo(Point2C::new(c0[0], c0[1]), Point2C::new(c1[0], c1[1]));
        for k in 0..2 {
            next.push(&base[k] + &tg[k]);
        }
        let step = next[0].dist(&f[0]).max(next[1].dist(&f[1]));
        f = [next[0].clone(), next[1].clone()];
        if !step.is_finite() || step > 1e3 * (1.0 + v0.norm()) {
            break;
        }
        if step <= tol {
            let residual_pde = crate::acs::jholo_residual(a, &f[0], &f[1]);
            let ev = [f[0].evaluator(), f[1].evaluator()];
            return Ok(LocalDisc {
                f,
                center: p,
                r0,
                residual_pde,
                iterations: it,
                ev,
            });
        }
    }
    Err(Error::NoDisc(format!("local disc iteration at {p:?} did not contract")))
}
