//! Discretizations of the unit circle and the closed unit disc.
//!
//! A [`BoundaryFn`] keeps samples at the N-th roots of unity together with
//! their Fourier coefficients. A [`DiscFn`] keeps samples on a polar tensor
//! grid (Gauss-Legendre in radius, uniform staggered angles) plus a trace on
//! the boundary circle. Angular structure is handled spectrally; radial
//! structure by polynomial interpolation through the Gauss nodes.

use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroUsize;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use gauss_quad::GaussLegendre;
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Tolerance used to decide whether a point lies on the unit circle.
pub const CIRCLE_TOL: f64 = 1e-12;

/// A point `(z, w)` of `C^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2C {
    pub z: C64,
    pub w: C64,
}

impl Point2C {
    pub fn new(z: C64, w: C64) -> Self {
        Self { z, w }
    }

    pub fn origin() -> Self {
        Self::default()
    }

    pub fn norm(&self) -> f64 {
        (self.z.norm_sqr() + self.w.norm_sqr()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.w.is_finite()
    }

    /// Real coordinates `(Re z, Im z, Re w, Im w)`.
    pub fn to_real(&self) -> [f64; 4] {
        [self.z.re, self.z.im, self.w.re, self.w.im]
    }

    pub fn from_real(x: [f64; 4]) -> Self {
        Self::new(C64::new(x[0], x[1]), C64::new(x[2], x[3]))
    }

    pub fn component(&self, k: usize) -> C64 {
        if k == 0 {
            self.z
        } else {
            self.w
        }
    }
}

impl Add for Point2C {
    type Output = Point2C;
    fn add(self, o: Point2C) -> Point2C {
        Point2C::new(self.z + o.z, self.w + o.w)
    }
}

impl Sub for Point2C {
    type Output = Point2C;
    fn sub(self, o: Point2C) -> Point2C {
        Point2C::new(self.z - o.z, self.w - o.w)
    }
}

impl Mul<C64> for Point2C {
    type Output = Point2C;
    fn mul(self, s: C64) -> Point2C {
        Point2C::new(self.z * s, self.w * s)
    }
}

/// Position of Fourier mode `k` in FFT storage order for length `n`.
#[inline]
pub fn fft_index(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Signed mode number stored at FFT position `idx`.
#[inline]
pub fn fft_mode(idx: usize, n: usize) -> i64 {
    if idx < n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

struct BoundaryInner {
    n: usize,
    nodes: Vec<C64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// The N-th roots of unity `e^{2 pi i k / N}`, node 0 being `1`.
#[derive(Clone)]
pub struct BoundaryGrid {
    inner: Arc<BoundaryInner>,
}

impl fmt::Debug for BoundaryGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryGrid").field("n", &self.inner.n).finish()
    }
}

impl PartialEq for BoundaryGrid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n == other.inner.n
    }
}

impl BoundaryGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "boundary grid size must be a power of two >= 4, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let nodes = (0..n)
            .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
            .collect();
        Ok(Self {
            inner: Arc::new(BoundaryInner {
                n,
                nodes,
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn nodes(&self) -> &[C64] {
        &self.inner.nodes
    }

    pub fn node(&self, k: usize) -> C64 {
        self.inner.nodes[k]
    }

    pub fn theta(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.inner.n as f64
    }

    /// Fourier coefficients in FFT order: `c_n = (1/N) sum_k f_k e^{-2 pi i k n / N}`.
    pub fn analyze(&self, samples: &[C64]) -> Result<Vec<C64>> {
        if samples.len() != self.n() {
            return Err(Error::Config(format!(
                "expected {} boundary samples, got {}",
                self.n(),
                samples.len()
            )));
        }
        let mut buf = samples.to_vec();
        self.inner.fwd.process(&mut buf);
        let s = 1.0 / self.n() as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        Ok(buf)
    }

    /// Inverse of [`BoundaryGrid::analyze`].
    pub fn synthesize(&self, coeffs: &[C64]) -> Result<Vec<C64>> {
        if coeffs.len() != self.n() {
            return Err(Error::Config(format!(
                "expected {} Fourier coefficients, got {}",
                self.n(),
                coeffs.len()
            )));
        }
        let mut buf = coeffs.to_vec();
        self.inner.inv.process(&mut buf);
        Ok(buf)
    }
}

/// A function on the unit circle held both as samples and as Fourier data.
#[derive(Clone, Debug)]
pub struct BoundaryFn {
    grid: BoundaryGrid,
    samples: Vec<C64>,
    coeffs: Vec<C64>,
    real: bool,
}

impl BoundaryFn {
    pub fn from_samples(grid: &BoundaryGrid, samples: Vec<C64>) -> Result<Self> {
        let coeffs = grid.analyze(&samples)?;
        Ok(Self {
            grid: grid.clone(),
            samples,
            coeffs,
            real: false,
        })
    }

    /// Real-valued function; imaginary parts of the samples are zeroed.
    pub fn from_real_samples(grid: &BoundaryGrid, samples: &[f64]) -> Result<Self> {
        let s: Vec<C64> = samples.iter().map(|&x| C64::new(x, 0.0)).collect();
        let mut f = Self::from_samples(grid, s)?;
        f.real = true;
        Ok(f)
    }

    /// Coefficients in FFT order.
    pub fn from_coeffs(grid: &BoundaryGrid, coeffs: Vec<C64>) -> Result<Self> {
        let samples = grid.synthesize(&coeffs)?;
        Ok(Self {
            grid: grid.clone(),
            samples,
            coeffs,
            real: false,
        })
    }

    /// Build from a closure of signed mode numbers; modes outside `[-N/2, N/2)` are dropped.
    pub fn from_mode_fn(grid: &BoundaryGrid, f: impl Fn(i64) -> C64) -> Self {
        let n = grid.n();
        let coeffs = (0..n).map(|i| f(fft_mode(i, n))).collect();
        Self::from_coeffs(grid, coeffs).expect("length matches grid")
    }

    pub fn from_fn(grid: &BoundaryGrid, f: impl Fn(C64) -> C64) -> Self {
        let s = grid.nodes().iter().map(|&z| f(z)).collect();
        Self::from_samples(grid, s).expect("length matches grid")
    }

    pub fn from_real_fn(grid: &BoundaryGrid, f: impl Fn(C64) -> f64) -> Self {
        let s: Vec<f64> = grid.nodes().iter().map(|&z| f(z)).collect();
        Self::from_real_samples(grid, &s).expect("length matches grid")
    }

    pub fn zero(grid: &BoundaryGrid) -> Self {
        let mut f = Self::from_coeffs(grid, vec![C64::new(0.0, 0.0); grid.n()]).unwrap();
        f.real = true;
        f
    }

    pub fn grid(&self) -> &BoundaryGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    /// Coefficients in FFT order.
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Coefficient of `zeta^n`; zero outside `[-N/2, N/2)`.
    pub fn coeff(&self, n: i64) -> C64 {
        let half = (self.n() / 2) as i64;
        if n < -half || n >= half {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[fft_index(n, self.n())]
        }
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    /// Largest imaginary part among the samples.
    pub fn max_imag(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| crate::nan_max(m, s.im.abs()))
    }

    /// Mark as real after checking samples, zeroing roundoff imaginary parts.
    pub fn into_real(self, tol: f64) -> Result<Self> {
        let scale = 1.0 + self.sup_norm();
        if self.max_imag() > tol * scale {
            return Err(Error::Domain(format!(
                "boundary function is not real (max |Im| = {:.3e})",
                self.max_imag()
            )));
        }
        let re: Vec<f64> = self.samples.iter().map(|s| s.re).collect();
        Self::from_real_samples(&self.grid, &re)
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| crate::nan_max(m, s.norm()))
    }

    /// Trigonometric-polynomial value at a point of the circle.
    pub fn eval(&self, zeta: C64) -> Result<C64> {
        if (zeta.norm() - 1.0).abs() > CIRCLE_TOL {
            return Err(Error::Domain(format!(
                "evaluation point {zeta} is not on the unit circle"
            )));
        }
        Ok(self.eval_unchecked(zeta))
    }

    /// Evaluates `sum c_n zeta^n` for any nonzero `zeta`.
    pub fn eval_unchecked(&self, zeta: C64) -> C64 {
        let n = self.n();
        let half = (n / 2) as i64;
        let inv = zeta.inv();
        let mut acc = self.coeff(0);
        let mut p = C64::new(1.0, 0.0);
        let mut q = C64::new(1.0, 0.0);
        for k in 1..=half {
            p *= zeta;
            q *= inv;
            if k < half {
                acc += self.coeff(k) * p;
            }
            acc += self.coeff(-k) * q;
        }
        acc
    }

    /// Value at node 0, i.e. at `zeta = 1`.
    pub fn at_one(&self) -> C64 {
        self.samples[0]
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self::from_samples(&self.grid, self.samples.iter().map(|&s| f(s)).collect()).unwrap()
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        assert_eq!(self.n(), other.n(), "boundary grids differ");
        let s = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_samples(&self.grid, s).unwrap()
    }

    pub fn conj(&self) -> Self {
        let mut f = self.map(|s| s.conj());
        f.real = self.real;
        f
    }

    pub fn re(&self) -> Self {
        let re: Vec<f64> = self.samples.iter().map(|s| s.re).collect();
        Self::from_real_samples(&self.grid, &re).unwrap()
    }

    pub fn im(&self) -> Self {
        let im: Vec<f64> = self.samples.iter().map(|s| s.im).collect();
        Self::from_real_samples(&self.grid, &im).unwrap()
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|s| s * c)
    }

    /// Sum of `|c_n|^2` over the negative modes.
    pub fn negative_energy(&self) -> f64 {
        let half = (self.n() / 2) as i64;
        (1..=half).map(|k| self.coeff(-k).norm_sqr()).sum()
    }

    /// Derivative with respect to the angle, spectrally.
    pub fn d_theta(&self) -> Self {
        let half = (self.n() / 2) as i64;
        Self::from_mode_fn(&self.grid, |k| {
            if k == -half {
                C64::new(0.0, 0.0)
            } else {
                self.coeff(k) * C64::new(0.0, k as f64)
            }
        })
    }
}

impl Add for &BoundaryFn {
    type Output = BoundaryFn;
    fn add(self, o: &BoundaryFn) -> BoundaryFn {
        let mut f = self.zip_map(o, |a, b| a + b);
        f.real = self.real && o.real;
        f
    }
}

impl Sub for &BoundaryFn {
    type Output = BoundaryFn;
    fn sub(self, o: &BoundaryFn) -> BoundaryFn {
        let mut f = self.zip_map(o, |a, b| a - b);
        f.real = self.real && o.real;
        f
    }
}

impl Mul for &BoundaryFn {
    type Output = BoundaryFn;
    fn mul(self, o: &BoundaryFn) -> BoundaryFn {
        let mut f = self.zip_map(o, |a, b| a * b);
        f.real = self.real && o.real;
        f
    }
}

struct DiscInner {
    n_r: usize,
    n_t: usize,
    r: Vec<f64>,
    gl_w: Vec<f64>,
    bary: Vec<f64>,
    dmat: Vec<f64>,
    theta: Vec<f64>,
    weights: Vec<f64>,
    boundary: BoundaryGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kernels: OnceLock<Arc<crate::ops::RadialKernels>>,
}

/// Polar tensor grid on the open unit disc with a companion boundary grid.
///
/// Radii are Gauss-Legendre nodes on `(0,1)`; angles are
/// `(j + 1/2) 2 pi / n_t`, staggered against the boundary nodes.
#[derive(Clone)]
pub struct DiscGrid {
    inner: Arc<DiscInner>,
}

impl fmt::Debug for DiscGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscGrid")
            .field("n_radial", &self.inner.n_r)
            .field("n_angular", &self.inner.n_t)
            .field("n_boundary", &self.inner.boundary.n())
            .finish()
    }
}

impl PartialEq for DiscGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n_r == other.inner.n_r
                && self.inner.n_t == other.inner.n_t
                && self.inner.boundary == other.inner.boundary)
    }
}

/// Gauss-Legendre nodes and weights mapped to `(a, b)`, ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("n > 0"));
    let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    pairs.into_iter().map(|(x, w)| (c + h * x, h * w)).unzip()
}

impl DiscGrid {
    /// Defaults: 256 boundary nodes, 64 radial by 128 angular interior nodes.
    pub fn default_grid() -> Self {
        Self::new(256, 64, 128).expect("default grid is valid")
    }

    pub fn new(n_boundary: usize, n_radial: usize, n_angular: usize) -> Result<Self> {
        let boundary = BoundaryGrid::new(n_boundary)?;
        if n_radial < 2 {
            return Err(Error::Config("need at least two radial nodes".into()));
        }
        if n_angular < 4 || !n_angular.is_power_of_two() {
            return Err(Error::Config(format!(
                "angular node count must be a power of two >= 4, got {n_angular}"
            )));
        }
        if n_angular > n_boundary {
            return Err(Error::Config(
                "angular node count may not exceed boundary node count".into(),
            ));
        }
        let (r, gl_w) = gauss_legendre(n_radial, 0.0, 1.0);
        // barycentric weights for Gauss nodes: (-1)^j sqrt((1 - x_j^2) w_j), x on [-1, 1]
        let bary: Vec<f64> = r
            .iter()
            .zip(&gl_w)
            .enumerate()
            .map(|(j, (&s, &w))| {
                let x = 2.0 * s - 1.0;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * ((1.0 - x * x) * 2.0 * w).sqrt()
            })
            .collect();
        let mut dmat = vec![0.0; n_radial * n_radial];
        for i in 0..n_radial {
            let mut diag = 0.0;
            for j in 0..n_radial {
                if i != j {
                    let d = (bary[j] / bary[i]) / (r[i] - r[j]);
                    dmat[i * n_radial + j] = d;
                    diag -= d;
                }
            }
            dmat[i * n_radial + i] = diag;
        }
        let dt = 2.0 * PI / n_angular as f64;
        let theta: Vec<f64> = (0..n_angular).map(|j| (j as f64 + 0.5) * dt).collect();
        let mut weights = Vec::with_capacity(n_radial * n_angular);
        for i in 0..n_radial {
            for _ in 0..n_angular {
                weights.push(gl_w[i] * r[i] * dt);
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            inner: Arc::new(DiscInner {
                n_r: n_radial,
                n_t: n_angular,
                r,
                gl_w,
                bary,
                dmat,
                theta,
                weights,
                boundary,
                fwd: planner.plan_fft_forward(n_angular),
                inv: planner.plan_fft_inverse(n_angular),
                kernels: OnceLock::new(),
            }),
        })
    }

    pub fn n_radial(&self) -> usize {
        self.inner.n_r
    }

    pub fn n_angular(&self) -> usize {
        self.inner.n_t
    }

    pub fn n_interior(&self) -> usize {
        self.inner.n_r * self.inner.n_t
    }

    pub fn boundary(&self) -> &BoundaryGrid {
        &self.inner.boundary
    }

    pub fn radii(&self) -> &[f64] {
        &self.inner.r
    }

    /// Gauss-Legendre weights on `(0,1)` (without the factor `r`).
    pub fn radial_weights(&self) -> &[f64] {
        &self.inner.gl_w
    }

    pub fn angles(&self) -> &[f64] {
        &self.inner.theta
    }

    /// Area weights, ring-major (`i * n_angular + j`).
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.inner.weights
    }

    pub fn node(&self, i: usize, j: usize) -> C64 {
        C64::from_polar(self.inner.r[i], self.inner.theta[j])
    }

    /// All interior nodes, ring-major.
    pub fn nodes(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.n_interior());
        for i in 0..self.inner.n_r {
            for j in 0..self.inner.n_t {
                v.push(self.node(i, j));
            }
        }
        v
    }

    pub(crate) fn kernels(&self) -> Arc<crate::ops::RadialKernels> {
        self.inner
            .kernels
            .get_or_init(|| Arc::new(crate::ops::RadialKernels::build(self)))
            .clone()
    }

    /// Radial barycentric interpolation weights for the point `s`.
    pub fn interp_row(&self, s: f64) -> Vec<f64> {
        let r = &self.inner.r;
        let b = &self.inner.bary;
        let mut row = vec![0.0; r.len()];
        for (j, &rj) in r.iter().enumerate() {
            if (s - rj).abs() < 1e-15 {
                row[j] = 1.0;
                return row;
            }
        }
        let mut den = 0.0;
        for j in 0..r.len() {
            let t = b[j] / (s - r[j]);
            row[j] = t;
            den += t;
        }
        row.iter_mut().for_each(|x| *x /= den);
        row
    }

    /// Radial differentiation matrix entry `D[i][j]`.
    pub fn dmat(&self, i: usize, j: usize) -> f64 {
        self.inner.dmat[i * self.inner.n_r + j]
    }

    /// Ring Fourier coefficients `c_k` with `f(r_i, theta_j) = sum_k c_k e^{i k theta_j}`,
    /// FFT order, one vector per ring.
    pub fn analyze_rings(&self, interior: &[C64]) -> Vec<Vec<C64>> {
        let (n_r, n_t) = (self.inner.n_r, self.inner.n_t);
        let h = PI / n_t as f64;
        let scale = 1.0 / n_t as f64;
        let phase: Vec<C64> = (0..n_t)
            .map(|idx| C64::from_polar(scale, -(fft_mode(idx, n_t) as f64) * h))
            .collect();
        (0..n_r)
            .map(|i| {
                let mut buf = interior[i * n_t..(i + 1) * n_t].to_vec();
                self.inner.fwd.process(&mut buf);
                buf.iter_mut().zip(&phase).for_each(|(c, p)| *c *= p);
                buf
            })
            .collect()
    }

    /// Inverse of [`DiscGrid::analyze_rings`].
    pub fn synthesize_rings(&self, modes: &[Vec<C64>]) -> Vec<C64> {
        let n_t = self.inner.n_t;
        let h = PI / n_t as f64;
        let phase: Vec<C64> = (0..n_t)
            .map(|idx| C64::from_polar(1.0, fft_mode(idx, n_t) as f64 * h))
            .collect();
        let mut out = Vec::with_capacity(self.n_interior());
        for ring in modes {
            let mut buf: Vec<C64> = ring.iter().zip(&phase).map(|(c, p)| c * p).collect();
            self.inner.inv.process(&mut buf);
            out.extend(buf);
        }
        out
    }

    /// Boundary function from angular modes given in the interior (FFT order, length `n_t`).
    /// The Nyquist mode is dropped.
    pub fn boundary_from_modes(&self, modes: &[C64]) -> BoundaryFn {
        let n_t = self.inner.n_t;
        let half = (n_t / 2) as i64;
        BoundaryFn::from_mode_fn(&self.inner.boundary, |k| {
            if k <= -half || k >= half {
                C64::new(0.0, 0.0)
            } else {
                modes[fft_index(k, n_t)]
            }
        })
    }
}

/// A function on the closed disc: interior samples plus a boundary trace.
#[derive(Clone, Debug)]
pub struct DiscFn {
    grid: DiscGrid,
    interior: Vec<C64>,
    boundary: BoundaryFn,
}

impl DiscFn {
    pub fn from_parts(grid: &DiscGrid, interior: Vec<C64>, boundary: BoundaryFn) -> Result<Self> {
        if interior.len() != grid.n_interior() {
            return Err(Error::Config(format!(
                "expected {} interior samples, got {}",
                grid.n_interior(),
                interior.len()
            )));
        }
        if boundary.n() != grid.boundary().n() {
            return Err(Error::Config("boundary trace size does not match grid".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            interior,
            boundary,
        })
    }

    pub fn from_fn(grid: &DiscGrid, f: impl Fn(C64) -> C64) -> Self {
        let interior = grid.nodes().into_iter().map(&f).collect();
        let boundary = BoundaryFn::from_fn(grid.boundary(), &f);
        Self {
            grid: grid.clone(),
            interior,
            boundary,
        }
    }

    pub fn constant(grid: &DiscGrid, c: C64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    pub fn zero(grid: &DiscGrid) -> Self {
        Self::constant(grid, C64::new(0.0, 0.0))
    }

    /// Interior samples given; the boundary trace is extrapolated radially.
    pub fn from_interior(grid: &DiscGrid, interior: Vec<C64>) -> Result<Self> {
        if interior.len() != grid.n_interior() {
            return Err(Error::Config("interior sample count mismatch".into()));
        }
        let boundary = extrapolate_boundary(grid, &interior);
        Ok(Self {
            grid: grid.clone(),
            interior,
            boundary,
        })
    }

    pub fn grid(&self) -> &DiscGrid {
        &self.grid
    }

    pub fn interior(&self) -> &[C64] {
        &self.interior
    }

    pub fn boundary(&self) -> &BoundaryFn {
        &self.boundary
    }

    pub fn into_parts(self) -> (Vec<C64>, BoundaryFn) {
        (self.interior, self.boundary)
    }

    pub fn ring_modes(&self) -> Vec<Vec<C64>> {
        self.grid.analyze_rings(&self.interior)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid.clone(),
            interior: self.interior.iter().map(|&v| f(v)).collect(),
            boundary: self.boundary.map(f),
        }
    }

    /// Pointwise map that also receives the node position.
    pub fn map_with_pos(&self, f: impl Fn(C64, C64) -> C64) -> Self {
        let nodes = self.grid.nodes();
        let interior = self.interior.iter().zip(&nodes).map(|(&v, &p)| f(p, v)).collect();
        let bnodes = self.grid.boundary().nodes();
        let bs = self
            .boundary
            .samples()
            .iter()
            .zip(bnodes)
            .map(|(&v, &p)| f(p, v))
            .collect();
        Self {
            grid: self.grid.clone(),
            interior,
            boundary: BoundaryFn::from_samples(self.grid.boundary(), bs).unwrap(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        assert_eq!(self.grid, other.grid, "disc grids differ");
        Self {
            grid: self.grid.clone(),
            interior: self
                .interior
                .iter()
                .zip(&other.interior)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            boundary: self.boundary.zip_map(&other.boundary, f),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|v| v * c)
    }

    /// `integral over the disc of f dA`.
    pub fn quadrature(&self) -> C64 {
        self.interior
            .iter()
            .zip(self.grid.quadrature_weights())
            .map(|(v, w)| v * w)
            .sum()
    }

    pub fn sup_interior(&self) -> f64 {
        self.interior.iter().fold(0.0, |m, v| crate::nan_max(m, v.norm()))
    }

    pub fn sup_norm(&self) -> f64 {
        crate::nan_max(self.sup_interior(), self.boundary.sup_norm())
    }

    /// Sup of `|f - g|` over interior and boundary nodes.
    pub fn dist(&self, other: &Self) -> f64 {
        (self - other).sup_norm()
    }

    /// Value at a point of the closed disc by spectral angular and polynomial
    /// radial interpolation; points on the circle use the boundary trace.
    pub fn eval(&self, zeta: C64) -> C64 {
        let rho = zeta.norm();
        if (rho - 1.0).abs() <= CIRCLE_TOL {
            return self.boundary.eval_unchecked(zeta / rho);
        }
        let modes = self.ring_modes();
        eval_from_modes(&self.grid, &modes, zeta)
    }

    /// Evaluate at many points, reusing one ring analysis.
    pub fn eval_many(&self, pts: &[C64]) -> Vec<C64> {
        let ev = self.evaluator();
        pts.iter().map(|&p| ev.eval(p)).collect()
    }

    /// Point evaluator with the ring analysis done once.
    pub fn evaluator(&self) -> DiscEval {
        DiscEval {
            grid: self.grid.clone(),
            modes: self.ring_modes(),
            boundary: self.boundary.clone(),
        }
    }

    /// `(d/dr f, d/dtheta f)` at the interior nodes.
    pub fn polar_derivatives(&self) -> (Vec<C64>, Vec<C64>) {
        let g = &self.grid;
        let (n_r, n_t) = (g.n_radial(), g.n_angular());
        let mut dr = vec![C64::new(0.0, 0.0); g.n_interior()];
        for i in 0..n_r {
            for k in 0..n_r {
                let d = g.dmat(i, k);
                if d == 0.0 {
                    continue;
                }
                for j in 0..n_t {
                    dr[i * n_t + j] += self.interior[k * n_t + j] * d;
                }
            }
        }
        let mut modes = self.ring_modes();
        for ring in modes.iter_mut() {
            for (idx, c) in ring.iter_mut().enumerate() {
                let k = fft_mode(idx, n_t);
                *c *= if k == -((n_t / 2) as i64) {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(0.0, k as f64)
                };
            }
        }
        let dt = g.synthesize_rings(&modes);
        (dr, dt)
    }

    /// `(f_zeta, f_zetabar)` at the interior nodes.
    pub fn wirtinger(&self) -> (Vec<C64>, Vec<C64>) {
        let (dr, dt) = self.polar_derivatives();
        let g = &self.grid;
        let n_t = g.n_angular();
        let mut dz = Vec::with_capacity(g.n_interior());
        let mut dzb = Vec::with_capacity(g.n_interior());
        for (i, &r) in g.radii().iter().enumerate() {
            for j in 0..n_t {
                let e = C64::from_polar(0.5, g.angles()[j]);
                let idx = i * n_t + j;
                let a = dr[idx];
                let b = dt[idx] * C64::new(0.0, 1.0 / r);
                dz.push(e.conj() * (a - b));
                dzb.push(e * (a + b));
            }
        }
        (dz, dzb)
    }

    /// `f_zeta` as a disc function, boundary trace extrapolated.
    pub fn d_zeta(&self) -> Self {
        let (dz, _) = self.wirtinger();
        Self::from_interior(&self.grid, dz).unwrap()
    }

    /// `f_zetabar` as a disc function, boundary trace extrapolated.
    pub fn d_zetabar(&self) -> Self {
        let (_, dzb) = self.wirtinger();
        Self::from_interior(&self.grid, dzb).unwrap()
    }
}

/// Cached interpolant of a [`DiscFn`]. Points slightly outside the disc are
/// extrapolated radially.
#[derive(Clone, Debug)]
pub struct DiscEval {
    grid: DiscGrid,
    modes: Vec<Vec<C64>>,
    boundary: BoundaryFn,
}

impl DiscEval {
    pub fn eval(&self, zeta: C64) -> C64 {
        let rho = zeta.norm();
        if (rho - 1.0).abs() <= CIRCLE_TOL {
            self.boundary.eval_unchecked(zeta / rho)
        } else {
            eval_from_modes(&self.grid, &self.modes, zeta)
        }
    }
}

fn eval_from_modes(grid: &DiscGrid, modes: &[Vec<C64>], zeta: C64) -> C64 {
    let n_t = grid.n_angular();
    let half = (n_t / 2) as i64;
    let (rho, th) = (zeta.norm(), zeta.arg());
    let row = grid.interp_row(rho);
    let mut acc = C64::new(0.0, 0.0);
    for idx in 0..n_t {
        let k = fft_mode(idx, n_t);
        if k == -half {
            continue;
        }
        let mut radial = C64::new(0.0, 0.0);
        for (i, ring) in modes.iter().enumerate() {
            radial += ring[idx] * row[i];
        }
        acc += radial * C64::from_polar(1.0, k as f64 * th);
    }
    acc
}

/// Radially extrapolated boundary trace of interior samples.
pub fn extrapolate_boundary(grid: &DiscGrid, interior: &[C64]) -> BoundaryFn {
    let modes = grid.analyze_rings(interior);
    let row = grid.interp_row(1.0);
    let n_t = grid.n_angular();
    let mut at_one = vec![C64::new(0.0, 0.0); n_t];
    for (i, ring) in modes.iter().enumerate() {
        for idx in 0..n_t {
            at_one[idx] += ring[idx] * row[i];
        }
    }
    grid.boundary_from_modes(&at_one)
}

impl Add for &DiscFn {
    type Output = DiscFn;
    fn add(self, o: &DiscFn) -> DiscFn {
        self.zip_map(o, |a, b| a + b)
    }
}

impl Sub for &DiscFn {
    type Output = DiscFn;
    fn sub(self, o: &DiscFn) -> DiscFn {
        self.zip_map(o, |a, b| a - b)
    }
}

impl Mul for &DiscFn {
    type Output = DiscFn;
    fn mul(self, o: &DiscFn) -> DiscFn {
        self.zip_map(o, |a, b| a * b)
    }
}

impl Mul<C64> for &DiscFn {
    type Output = DiscFn;
    fn mul(self, c: C64) -> DiscFn {
        self.scale(c)
    }
}

impl Neg for &DiscFn {
    type Output = DiscFn;
    fn neg(self) -> DiscFn {
        self.map(|v| -v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn constant_and_pure_mode_analysis() {
        let g = BoundaryGrid::new(64).unwrap();
        let one = BoundaryFn::from_fn(&g, |_| c(1.0, 0.0));
        for n in -32..32 {
            let want = if n == 0 { 1.0 } else { 0.0 };
            assert!((one.coeff(n) - want).norm() < 1e-14);
        }
        let e = BoundaryFn::from_fn(&g, |z| z);
        for n in -32..32 {
            let want = if n == 1 { 1.0 } else { 0.0 };
            assert!((e.coeff(n) - want).norm() < 1e-14);
        }
    }

    #[test]
    fn eval_on_circle() {
        let g = BoundaryGrid::new(32).unwrap();
        let e = BoundaryFn::from_fn(&g, |z| z);
        let z = C64::from_polar(1.0, PI / 3.0);
        assert!((e.eval(z).unwrap() - z).norm() < 1e-14);
        assert!(e.eval(c(0.5, 0.0)).is_err());
        let one = BoundaryFn::from_fn(&g, |_| c(1.0, 0.0));
        assert!((one.eval(c(0.0, 1.0)).unwrap() - 1.0).norm() < 1e-14);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(BoundaryGrid::new(100).is_err());
        let g = BoundaryGrid::new(16).unwrap();
        assert!(g.analyze(&[c(0.0, 0.0); 8]).is_err());
        assert!(DiscGrid::new(64, 8, 128).is_err());
    }

    #[test]
    fn disc_weights_sum_to_pi() {
        let g = DiscGrid::new(64, 12, 32).unwrap();
        let s: f64 = g.quadrature_weights().iter().sum();
        assert!((s - PI).abs() < 1e-12 * PI);
    }

    #[test]
    fn staggered_angles_avoid_boundary_nodes() {
        let g = DiscGrid::new(64, 8, 32).unwrap();
        assert!(g.radii().iter().all(|&r| r > 0.0 && r < 1.0));
        let step = 2.0 * PI / 32.0;
        for &t in g.angles() {
            let frac = (t / step).fract();
            assert!((frac - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn wirtinger_of_polynomials() {
        let g = DiscGrid::new(64, 16, 32).unwrap();
        let f = DiscFn::from_fn(&g, |z| z * z * z.conj() + z.conj());
        let (dz, dzb) = f.wirtinger();
        for (k, p) in g.nodes().into_iter().enumerate() {
            let want_dz = 2.0 * p * p.conj();
            let want_dzb = p * p + 1.0;
            assert!((dz[k] - want_dz).norm() < 1e-10, "{}", (dz[k] - want_dz).norm());
            assert!((dzb[k] - want_dzb).norm() < 1e-10);
        }
    }

    #[test]
    fn interpolation_and_extrapolation() {
        let g = DiscGrid::new(64, 16, 32).unwrap();
        let f = DiscFn::from_fn(&g, |z| z * z.conj() + z.powi(3));
        let p = C64::new(0.3, -0.45);
        assert!((f.eval(p) - (p.norm_sqr() + p.powi(3))).norm() < 1e-12);
        let b = extrapolate_boundary(&g, f.interior());
        for (k, &z) in g.boundary().nodes().iter().enumerate() {
            assert!((b.samples()[k] - (1.0 + z.powi(3))).norm() < 1e-11);
        }
    }
}
