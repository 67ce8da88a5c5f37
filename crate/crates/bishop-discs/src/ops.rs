//! Singular integral operators on the disc and the circle.
//!
//! Boundary operators (`K`, `S`, `H`, `P_0`) are exact Fourier multipliers.
//! The area operators `T` and `T*` expand their kernels in angular modes:
//! angular mode `m` of `Tf` only sees mode `m + 1` of `f`, through
//!
//! ```text
//! (Tf)_m(r) =  2 int_0^r f_{m+1}(s) (s/r)^{-m} ds     (m < 0)
//! (Tf)_m(r) = -2 int_r^1 f_{m+1}(s) (r/s)^{m}  ds     (m >= 0)
//! ```
//!
//! so every area integral reduces to one-dimensional radial quadratures of the
//! polynomial interpolant through the Gauss nodes. A direct two-dimensional
//! quadrature with singularity subtraction is kept for arbitrary targets.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{fft_index, gauss_legendre, BoundaryFn, DiscFn, DiscGrid, CIRCLE_TOL};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Radial weight rows for one target radius.
#[derive(Clone, Debug)]
pub(crate) struct RowSet {
    /// `neg[(k-1) * n_r + j]`: weights for `int_0^r p(s) (s/r)^k ds`, `k = 1..=n_t/2`.
    neg: Vec<f64>,
    /// `pos[m * n_r + j]`: weights for `int_r^1 p(s) (r/s)^m ds`, `m = 0..n_t/2`.
    pos: Vec<f64>,
}

/// Precomputed radial rows for every ring of a grid and for the circle.
#[derive(Debug)]
pub struct RadialKernels {
    rings: Vec<RowSet>,
    edge: RowSet,
}

impl RadialKernels {
    pub(crate) fn build(grid: &DiscGrid) -> Self {
        let rings = grid.radii().iter().map(|&r| radial_rows(grid, r)).collect();
        let edge = radial_rows(grid, 1.0);
        Self { rings, edge }
    }
}

fn radial_rows(grid: &DiscGrid, rho: f64) -> RowSet {
    let n_r = grid.n_radial();
    let half = grid.n_angular() / 2;
    let mut neg = vec![0.0; half * n_r];
    let mut pos = vec![0.0; half * n_r];

    // int_0^rho: the integrand is a polynomial of degree <= n_r - 1 + half
    let q = (n_r + half) / 2 + 2;
    let (xs, ws) = gauss_legendre(q, 0.0, 1.0);
    for (&x, &w) in xs.iter().zip(&ws) {
        let row = grid.interp_row(rho * x);
        let mut xk = 1.0;
        for k in 1..=half {
            xk *= x;
            let c = rho * w * xk;
            let dst = &mut neg[(k - 1) * n_r..k * n_r];
            for (d, l) in dst.iter_mut().zip(&row) {
                *d += c * l;
            }
        }
    }

    // int_rho^1 with s = rho e^u; the kernel becomes e^{-m u}
    if rho < 1.0 {
        let len = -rho.ln();
        let panels = ((len / 0.25).ceil() as usize).max(1);
        let h = len / panels as f64;
        let (us, uw) = gauss_legendre(16, 0.0, 1.0);
        for p in 0..panels {
            for (&u0, &w0) in us.iter().zip(&uw) {
                let u = (p as f64 + u0) * h;
                let s = rho * u.exp();
                let row = grid.interp_row(s.min(1.0));
                let base = h * w0 * s;
                let decay = (-u).exp();
                let mut km = 1.0;
                for m in 0..half {
                    let c = base * km;
                    if c.abs() < 1e-300 {
                        break;
                    }
                    let dst = &mut pos[m * n_r..(m + 1) * n_r];
                    for (d, l) in dst.iter_mut().zip(&row) {
                        *d += c * l;
                    }
                    km *= decay;
                }
            }
        }
    }
    RowSet { neg, pos }
}

/// Angular modes of `Tf` at a radius, given the radial rows and the ring modes of `f`.
fn t_modes(rows: &RowSet, fmodes: &[Vec<C64>], n_t: usize, out: &mut [C64]) {
    let n_r = fmodes.len();
    let half = n_t / 2;
    out.iter_mut().for_each(|c| *c = ZERO);
    for k in 1..=half {
        // output mode -k from input mode 1 - k
        let src = 1 - k as i64;
        if src <= -(half as i64) {
            continue;
        }
        let si = fft_index(src, n_t);
        let w = &rows.neg[(k - 1) * n_r..k * n_r];
        let mut acc = ZERO;
        for j in 0..n_r {
            acc += fmodes[j][si] * w[j];
        }
        out[fft_index(-(k as i64), n_t)] = 2.0 * acc;
    }
    for m in 0..half.saturating_sub(1) {
        let si = fft_index(m as i64 + 1, n_t);
        let w = &rows.pos[m * n_r..(m + 1) * n_r];
        let mut acc = ZERO;
        for j in 0..n_r {
            acc += fmodes[j][si] * w[j];
        }
        out[fft_index(m as i64, n_t)] = -2.0 * acc;
    }
}

/// Negative-mode coefficients `c_{-k}` of `Tf` on the circle, `k = 1..=n_t/2`.
fn boundary_coeffs(kern: &RadialKernels, fmodes: &[Vec<C64>], n_t: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n_t];
    t_modes(&kern.edge, fmodes, n_t, &mut out);
    (1..=n_t / 2).map(|k| out[fft_index(-(k as i64), n_t)]).collect()
}

fn boundary_from_negative(grid: &DiscGrid, neg: &[C64]) -> BoundaryFn {
    BoundaryFn::from_mode_fn(grid.boundary(), |n| {
        if n < 0 && ((-n) as usize) <= neg.len() {
            neg[(-n - 1) as usize]
        } else {
            ZERO
        }
    })
}

fn pin(f: DiscFn) -> DiscFn {
    let c = f.boundary().at_one();
    f.map(|v| v - c)
}

/// Cauchy-Green transform `Tf(zeta) = (1/2 pi i) iint f(tau)/(tau - zeta) dtau ^ dtaubar`
/// on the grid; `pinned` subtracts the value at `1`.
pub fn cauchy_green(f: &DiscFn, pinned: bool) -> DiscFn {
    let grid = f.grid();
    let kern = grid.kernels();
    let n_t = grid.n_angular();
    let fmodes = f.ring_modes();
    let mut out = vec![vec![ZERO; n_t]; grid.n_radial()];
    for (i, rows) in kern.rings.iter().enumerate() {
        t_modes(rows, &fmodes, n_t, &mut out[i]);
    }
    let interior = grid.synthesize_rings(&out);
    let boundary = boundary_from_negative(grid, &boundary_coeffs(&kern, &fmodes, n_t));
    let t = DiscFn::from_parts(grid, interior, boundary).expect("sizes match");
    if pinned {
        pin(t)
    } else {
        t
    }
}

/// `Tf` at arbitrary points of the closed disc (spectral route).
pub fn cauchy_green_at(f: &DiscFn, targets: &[C64]) -> Result<Vec<C64>> {
    let grid = f.grid();
    let n_t = grid.n_angular();
    let half = (n_t / 2) as i64;
    let fmodes = f.ring_modes();
    let mut modes = vec![ZERO; n_t];
    targets
        .iter()
        .map(|&z| {
            let rho = z.norm();
            if rho > 1.0 + CIRCLE_TOL {
                return Err(Error::Domain(format!(
                    "target {z} lies outside the closed disc; use the exterior evaluation"
                )));
            }
            if rho == 0.0 {
                // only mode 0 survives: -2 int_0^1 f_1(s) ds
                let rows = radial_rows(grid, 1e-12);
                t_modes(&rows, &fmodes, n_t, &mut modes);
                return Ok(modes[0]);
            }
            let rows = radial_rows(grid, rho.min(1.0));
            t_modes(&rows, &fmodes, n_t, &mut modes);
            let th = z.arg();
            let mut acc = ZERO;
            for k in -half..half {
                let c = modes[fft_index(k, n_t)];
                if c != ZERO {
                    acc += c * C64::from_polar(1.0, k as f64 * th);
                }
            }
            Ok(acc)
        })
        .collect()
}

/// `Tf(w)` for `|w| > 1`, where the kernel is smooth: `sum_{k >= 1} c_{-k} w^{-k}`.
pub fn cauchy_green_exterior(f: &DiscFn, w: C64) -> Result<C64> {
    if w.norm() <= 1.0 {
        return Err(Error::Domain(format!("{w} is not exterior to the disc")));
    }
    let grid = f.grid();
    let coeffs = boundary_coeffs(&grid.kernels(), &f.ring_modes(), grid.n_angular());
    let inv = w.inv();
    let mut p = C64::new(1.0, 0.0);
    let mut acc = ZERO;
    for c in coeffs {
        p *= inv;
        acc += c * p;
    }
    Ok(acc)
}

/// Direct area quadrature of `Tf(zeta)` with singularity subtraction
/// `Tf(zeta) = T(f - f(zeta))(zeta) + f(zeta) zetabar` inside the disc and the
/// plain kernel outside it.
pub fn cauchy_green_direct(f: &DiscFn, zeta: C64) -> C64 {
    let grid = f.grid();
    let nodes = grid.nodes();
    let w = grid.quadrature_weights();
    if zeta.norm() > 1.0 {
        let s: C64 = f
            .interior()
            .iter()
            .zip(&nodes)
            .zip(w)
            .map(|((v, t), w)| v / (t - zeta) * w)
            .sum();
        return -s / PI;
    }
    let fz = f.eval(zeta);
    let s: C64 = f
        .interior()
        .iter()
        .zip(&nodes)
        .zip(w)
        .map(|((v, t), w)| {
            let d = t - zeta;
            if d.norm() < 1e-14 {
                ZERO
            } else {
                (v - fz) / d * w
            }
        })
        .sum();
    -s / PI + fz * zeta.conj()
}

/// Extension into the disc of boundary data mode by mode:
/// `c_n zeta^n` for `n >= 0` and `c_n zetabar^{|n|}` for `n < 0`.
pub fn harmonic_extension(grid: &DiscGrid, b: &BoundaryFn) -> DiscFn {
    let n_t = grid.n_angular() as i64;
    let nb = b.n() as i64;
    let modes: Vec<Vec<C64>> = grid
        .radii()
        .iter()
        .map(|&r| {
            let mut ring = vec![ZERO; n_t as usize];
            for n in -nb / 2..nb / 2 {
                let c = b.coeff(n);
                if c == ZERO {
                    continue;
                }
                let v = c * r.powi(n.unsigned_abs() as i32);
                let q = (n + n_t / 2).rem_euclid(n_t) - n_t / 2;
                let wraps = (n - q) / n_t;
                let sign = if wraps % 2 == 0 { 1.0 } else { -1.0 };
                ring[fft_index(q, n_t as usize)] += v * sign;
            }
            ring
        })
        .collect();
    let interior = grid.synthesize_rings(&modes);
    DiscFn::from_parts(grid, interior, b.clone()).expect("sizes match")
}

/// Holomorphic function with the given Taylor coefficients `a_0, a_1, ...`.
pub fn holomorphic_from_taylor(grid: &DiscGrid, taylor: &[C64]) -> DiscFn {
    let b = BoundaryFn::from_mode_fn(grid.boundary(), |n| {
        if n >= 0 && (n as usize) < taylor.len() {
            taylor[n as usize]
        } else {
            ZERO
        }
    });
    harmonic_extension(grid, &b)
}

/// Cauchy integral `Kf`: the non-negative Fourier modes extended holomorphically.
pub fn cauchy_boundary(f: &BoundaryFn, grid: &DiscGrid, pinned: bool) -> DiscFn {
    let k = BoundaryFn::from_mode_fn(grid.boundary(), |n| if n >= 0 { f.coeff(n) } else { ZERO });
    let out = harmonic_extension(grid, &k);
    if pinned {
        pin(out)
    } else {
        out
    }
}

/// `P_0 u`: the mean value.
pub fn mean(u: &BoundaryFn) -> C64 {
    u.coeff(0)
}

fn require_real(u: &BoundaryFn) -> Result<()> {
    if u.is_real() || u.max_imag() <= 1e-12 * (1.0 + u.sup_norm()) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "expected real boundary data (max |Im| = {:.3e})",
            u.max_imag()
        )))
    }
}

/// Boundary values of the Schwarz integral: `u_0 + 2 sum_{n >= 1} u_n zeta^n`.
pub fn schwarz_boundary(u: &BoundaryFn) -> Result<BoundaryFn> {
    require_real(u)?;
    let half = (u.n() / 2) as i64;
    Ok(BoundaryFn::from_mode_fn(u.grid(), |n| {
        if n == 0 {
            C64::new(u.coeff(0).re, 0.0)
        } else if n > 0 && n < half {
            2.0 * u.coeff(n)
        } else {
            ZERO
        }
    }))
}

/// Schwarz integral `Su`, holomorphic with `Re Su = u` on the circle and
/// `Im Su(0) = 0`; `pinned` subtracts the value at `1`.
pub fn schwarz(u: &BoundaryFn, grid: &DiscGrid, pinned: bool) -> Result<DiscFn> {
    let b = schwarz_boundary(u)?;
    let out = harmonic_extension(grid, &b);
    Ok(if pinned { pin(out) } else { out })
}

/// Hilbert transform `Hu = Im(Su)` on the circle (so `cos -> sin`).
pub fn hilbert(u: &BoundaryFn, pinned: bool) -> Result<BoundaryFn> {
    let s = schwarz_boundary(u)?;
    let im: Vec<f64> = s.samples().iter().map(|v| v.im).collect();
    let h = BoundaryFn::from_real_samples(u.grid(), &im)?;
    if pinned {
        let c = h.at_one().re;
        let v: Vec<f64> = im.iter().map(|x| x - c).collect();
        BoundaryFn::from_real_samples(u.grid(), &v)
    } else {
        Ok(h)
    }
}

/// `T* u(zeta) = (1/2 pi i) iint zeta u(tau)/(1 - zeta taubar) dtau ^ dtaubar`,
/// holomorphic in `zeta`; evaluated from its Taylor series
/// `-2 sum_{n >= 0} zeta^{n+1} int_0^1 u_n(s) s^{n+1} ds`.
fn cauchy_star_series(f: &DiscFn) -> DiscFn {
    let grid = f.grid();
    let n_t = grid.n_angular();
    let fmodes = f.ring_modes();
    let r = grid.radii();
    let w = grid.radial_weights();
    let mut taylor = vec![ZERO; n_t / 2 + 1];
    for n in 0..n_t / 2 {
        let idx = fft_index(n as i64, n_t);
        let mut acc = ZERO;
        for j in 0..grid.n_radial() {
            acc += fmodes[j][idx] * (w[j] * r[j].powi(n as i32 + 1));
        }
        taylor[n + 1] = -2.0 * acc;
    }
    holomorphic_from_taylor(grid, &taylor)
}

/// `psi(tau) = -(tau - 1)^2 / (taubar - 1)`, a Lipschitz primitive of `mu`: `dbar psi = mu`.
pub fn mu_primitive(t: C64) -> C64 {
    let d = t.conj() - 1.0;
    if d.norm() < 1e-300 {
        return ZERO;
    }
    -(t - 1.0) * (t - 1.0) / d
}

/// `T(mu h)` for smooth `h`. Since `mu` jumps at `tau = 1`, the product is
/// integrated by parts against `psi`:
/// `T(mu h) = psi h - K(psi h) - T(psi dbar h)`, whose last integrand is Lipschitz.
pub fn cauchy_green_mu(h: &DiscFn, pinned: bool) -> DiscFn {
    let grid = h.grid();
    let psi = DiscFn::from_fn(grid, mu_primitive);
    let g = &psi * h;
    let k = cauchy_boundary(g.boundary(), grid, false);
    let rest = cauchy_green(&(&psi * &h.d_zetabar()), false);
    let out = &(&g - &k) - &rest;
    if pinned {
        pin(out)
    } else {
        out
    }
}

/// `T* f`; the pinned form subtracts the value at `1`.
pub fn cauchy_star(f: &DiscFn, pinned: bool) -> DiscFn {
    let t = cauchy_star_series(f);
    if pinned {
        pin(t)
    } else {
        t
    }
}

/// Direct area quadrature of `T* f(zeta)` for `|zeta| < 1`.
pub fn cauchy_star_direct(f: &DiscFn, zeta: C64) -> C64 {
    let grid = f.grid();
    let s: C64 = f
        .interior()
        .iter()
        .zip(grid.nodes())
        .zip(grid.quadrature_weights())
        .map(|((v, t), w)| v / (1.0 - zeta * t.conj()) * w)
        .sum();
    -zeta * s / PI
}

/// `Pf(zeta) = Tf(zeta) - conj(Tf(1/conj zeta))`; real part vanishes on the circle.
pub fn p_transform(f: &DiscFn, pinned: bool) -> DiscFn {
    let grid = f.grid();
    let t = cauchy_green(f, false);
    // conj(Tf(1/conj zeta)) = sum_k conj(c_{-k}) zeta^k
    let neg: Vec<C64> = (1..=grid.n_angular() as i64 / 2)
        .map(|k| t.boundary().coeff(-k))
        .collect();
    let mut taylor = vec![ZERO; neg.len() + 1];
    for (k, c) in neg.iter().enumerate() {
        taylor[k + 1] = c.conj();
    }
    let refl = holomorphic_from_taylor(grid, &taylor);
    let p = &t - &refl;
    if pinned {
        pin(p)
    } else {
        p
    }
}

/// `mu(tau) = ((tau - 1)/(taubar - 1))^2`, extended by `1` at `tau = 1`.
pub fn mu_value(t: C64) -> C64 {
    let d = t.conj() - 1.0;
    if d.norm() < 1e-300 {
        return C64::new(1.0, 0.0);
    }
    let q = (t - 1.0) / d;
    q * q
}

pub fn mu(grid: &DiscGrid) -> DiscFn {
    DiscFn::from_fn(grid, mu_value)
}

/// Operators whose reordered kernels are available.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmOperator {
    T1,
    T1Star,
    ConjT1,
    ConjT1Star,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Conjugated operator `conj(P(conj g))` applied to `g`.
pub fn conjugated(op: impl Fn(&DiscFn) -> DiscFn, g: &DiscFn) -> DiscFn {
    op(&g.conj()).conj()
}

/// `conj(K1 conj(h))` with `h` taken on the circle.
fn kbar1(h: &DiscFn) -> DiscFn {
    cauchy_boundary(h.conj().boundary(), h.grid(), true).conj()
}

/// Reordered-kernel operators `P^+` and `P^-`, via
/// `T1+ = -T1`, `T1- = -mu^{-1} T1 mu`, `{T1*}+ = mu Kbar1 T1`, `{T1*}- = Kbar1 T1 mu`,
/// and `(Pbar)^+ = conj(P^-)`, `(Pbar)^- = conj(P^+)`.
pub fn plus_minus(op: PmOperator, side: Side, f: &DiscFn) -> Result<DiscFn> {
    let grid = f.grid();
    let m = mu(grid);
    Ok(match (op, side) {
        (PmOperator::T1, Side::Plus) => -&cauchy_green(f, true),
        (PmOperator::T1, Side::Minus) => {
            let t = cauchy_green_mu(f, true);
            -&t.zip_map(&m, |a, b| a / b)
        }
        (PmOperator::T1Star, Side::Plus) => &m * &kbar1(&cauchy_green(f, true)),
        (PmOperator::T1Star, Side::Minus) => kbar1(&cauchy_green_mu(f, true)),
        (PmOperator::ConjT1, s) => {
            let other = if s == Side::Plus { Side::Minus } else { Side::Plus };
            plus_minus(PmOperator::T1, other, &f.conj())?.conj()
        }
        (PmOperator::ConjT1Star, s) => {
            let other = if s == Side::Plus { Side::Minus } else { Side::Plus };
            plus_minus(PmOperator::T1Star, other, &f.conj())?.conj()
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivKind {
    T1,
    T1Star,
}

/// `d_1 T1 f = (1/2 pi i) iint f/(tau - 1)^2 dtau ^ dtaubar` (and the
/// `(taubar - 1)^2` analogue for `T1*`), for `f(1) = 0`. The angular integral
/// is done exactly through the kernel's power series.
pub fn deriv_at_one(kind: DerivKind, f: &DiscFn) -> Result<C64> {
    let f1 = f.boundary().at_one();
    if f1.norm() > 1e-8 {
        return Err(Error::Precondition(format!(
            "derivative at 1 needs f(1) = 0, got |f(1)| = {:.3e}",
            f1.norm()
        )));
    }
    let grid = f.grid();
    let n_t = grid.n_angular();
    let fmodes = f.ring_modes();
    let r = grid.radii();
    let w = grid.radial_weights();
    let mut acc = ZERO;
    for n in 0..n_t / 2 {
        // T1: mode -n pairs with tau^n; T1*: mode n pairs with taubar^n
        let mode = match kind {
            DerivKind::T1 => -(n as i64),
            DerivKind::T1Star => n as i64,
        };
        let idx = fft_index(mode, n_t);
        let mut s = ZERO;
        for j in 0..grid.n_radial() {
            s += fmodes[j][idx] * (w[j] * r[j].powi(n as i32 + 1));
        }
        acc += s * (n as f64 + 1.0);
    }
    Ok(-2.0 * acc)
}

/// Moments `c_n = (1/2 pi i) iint F tau^n dtau ^ dtaubar`, `n = 0..=max_degree`.
pub fn moment_test(f: &DiscFn, max_degree: usize) -> Vec<C64> {
    let grid = f.grid();
    let nodes = grid.nodes();
    let w = grid.quadrature_weights();
    (0..=max_degree)
        .map(|n| {
            let s: C64 = f
                .interior()
                .iter()
                .zip(&nodes)
                .zip(w)
                .map(|((v, t), w)| v * t.powi(n as i32) * w)
                .sum();
            -s / PI
        })
        .collect()
}

/// `f = Su + i v0 + Pg`, reconstructing `f` from `Re f` on the circle,
/// `Im f(0)` and `g = f_zetabar`.
pub fn schwarz_green_reconstruct(u: &BoundaryFn, v0: f64, g: &DiscFn) -> Result<DiscFn> {
    let s = schwarz(u, g.grid(), false)?;
    let p = p_transform(g, false);
    Ok((&s + &p).map(|v| v + C64::new(0.0, v0)))
}

/// `sup |dbar(Tf) - f|` over interior nodes with `r <= r_max`.
pub fn dbar_inverse_check(f: &DiscFn, r_max: f64) -> f64 {
    let t = cauchy_green(f, false);
    let (_, dzb) = t.wirtinger();
    let grid = f.grid();
    let n_t = grid.n_angular();
    let mut worst: f64 = 0.0;
    for (i, &r) in grid.radii().iter().enumerate() {
        if r > r_max {
            continue;
        }
        for j in 0..n_t {
            let k = i * n_t + j;
            worst = worst.max((dzb[k] - f.interior()[k]).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> DiscGrid {
        DiscGrid::new(128, 32, 64).unwrap()
    }

    #[test]
    fn t_of_monomials() {
        let g = grid();
        for (a, b) in [(0, 0), (1, 0), (3, 0), (0, 2), (2, 1), (1, 3), (4, 1)] {
            let f = DiscFn::from_fn(&g, |z| z.powi(a) * z.conj().powi(b));
            let t = cauchy_green(&f, false);
            let exact = |z: C64| {
                let bb = b as f64 + 1.0;
                if a > b {
                    (z.powi(a) * z.conj().powi(b + 1) - z.powi(a - b - 1)) / bb
                } else {
                    z.powi(a) * z.conj().powi(b + 1) / bb
                }
            };
            let e = DiscFn::from_fn(&g, exact);
            assert!(t.dist(&e) < 1e-12, "a={a} b={b} err={}", t.dist(&e));
        }
    }

    #[test]
    fn pinned_values_vanish_at_one() {
        let g = grid();
        let f = DiscFn::from_fn(&g, |z| (z * z.conj()).exp() + z);
        assert!(cauchy_green(&f, true).boundary().at_one().norm() < 1e-12);
        assert!(p_transform(&f, true).boundary().at_one().norm() < 1e-12);
        assert!(cauchy_star(&f, true).boundary().at_one().norm() < 1e-12);
        let u = BoundaryFn::from_real_fn(g.boundary(), |z| (z.re * 2.0).sin() + z.im);
        assert!(schwarz(&u, &g, true).unwrap().boundary().at_one().norm() < 1e-12);
        assert!(hilbert(&u, true).unwrap().at_one().norm() < 1e-12);
        assert!(cauchy_boundary(&u, &g, true).boundary().at_one().norm() < 1e-12);
    }

    #[test]
    fn schwarz_and_hilbert_of_cosine() {
        let g = grid();
        let u = BoundaryFn::from_real_fn(g.boundary(), |z| z.re);
        let s = schwarz(&u, &g, false).unwrap();
        assert!(s.dist(&DiscFn::from_fn(&g, |z| z)) < 1e-12);
        let h = hilbert(&u, false).unwrap();
        for (k, &z) in g.boundary().nodes().iter().enumerate() {
            assert!((h.samples()[k].re - z.im).abs() < 1e-12);
        }
        let bad = BoundaryFn::from_fn(g.boundary(), |z| z);
        assert!(schwarz(&bad, &g, false).is_err());
    }

    #[test]
    fn exterior_value_of_constant() {
        let g = grid();
        let one = DiscFn::constant(&g, C64::new(1.0, 0.0));
        let w = C64::new(1.3, 0.7);
        assert!((cauchy_green_exterior(&one, w).unwrap() - w.inv()).norm() < 1e-12);
        assert!((cauchy_green_direct(&one, w) - w.inv()).norm() < 1e-10);
    }

    #[test]
    fn t_of_mu_times_smooth() {
        // h = (zetabar - 1)^2 s makes mu h = (zeta - 1)^2 s smooth, so plain quadrature is a reference
        let g = grid();
        let s = |z: C64| (z * 0.3).exp() + z.conj() * 0.5;
        let h = DiscFn::from_fn(&g, |z| (z.conj() - 1.0) * (z.conj() - 1.0) * s(z));
        let mh = DiscFn::from_fn(&g, |z| (z - 1.0) * (z - 1.0) * s(z));
        assert!(cauchy_green_mu(&h, false).dist(&cauchy_green(&mh, false)) < 1e-10);
        let one = DiscFn::constant(&g, C64::new(1.0, 0.0));
        let tm = cauchy_green_mu(&one, false);
        // the closed form extends by 0 to zeta = 1
        let exact = DiscFn::from_fn(&g, |z| {
            if (z - 1.0).norm() < 1e-14 {
                ZERO
            } else {
                (z - 1.0) / (z.conj() - 1.0) * (1.0 - z.norm_sqr())
            }
        });
        assert!(tm.dist(&exact) < 1e-10);
    }

    #[test]
    fn deriv_precondition_enforced() {
        let g = grid();
        let f = DiscFn::constant(&g, C64::new(1.0, 0.0));
        assert!(deriv_at_one(DerivKind::T1, &f).is_err());
        let z = DiscFn::zero(&g);
        assert_eq!(deriv_at_one(DerivKind::T1Star, &z).unwrap(), ZERO);
    }
}
