//! One-sided filling by a two-parameter family of Bishop discs.
//!
//! The discs are lifts of `w_hat = eps (zeta - 1)` attached at points `q` of a
//! grid in `(Im z, Re w)` on `E`. Each disc is sampled on a polar strip
//! `r in [r*, 1]`, `|arg zeta| <= phi*` around its normal segment `Z_q([r*, 1])`
//! and triangulated; a target point counts as covered when its distance to
//! some triangle is below `eta`. Targets fill
//! `{-c < Re z - phi(Im z, w) < -eta, |Z - p| < c'}`, where `phi` is the graph
//! function of `E`; points closer than `eta` to `E` are left out, since discs
//! lying inside `E` would reach them.

use std::collections::HashMap;

use nalgebra::{Matrix2, Vector2, Vector4};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Check, ExperimentConfig, Report, Table};
use crate::bishop::{disc_family, BishopDisc};
use crate::grid::{fft_mode, BoundaryFn, DiscFn, Point2C};
use crate::{Error, Result, C64};

type V4 = Vector4<f64>;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FillConfig {
    /// Disc size: `w_hat = eps (zeta - 1)`.
    pub eps: f64,
    /// Family points per direction.
    pub n_family: usize,
    /// `eta = eta_factor eps^2`.
    pub eta_factor: f64,
    /// `c = depth_factor eps^2`.
    pub depth_factor: f64,
    /// `c' = radius_factor eps^2`.
    pub radius_factor: f64,
    pub r_star: f64,
    pub strip_halfwidth: f64,
    pub strip_step: f64,
    pub n_targets: usize,
    /// Checks applied to the measured coverage.
    pub min_coverage: Option<f64>,
    pub max_coverage: Option<f64>,
    /// Require every disc to lie in `E` within `1e-8`.
    pub require_contained: bool,
}

impl Default for FillConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            n_family: 9,
            eta_factor: 0.25,
            depth_factor: 0.75,
            radius_factor: 1.0,
            r_star: 0.45,
            strip_halfwidth: 0.3,
            strip_step: 0.02,
            n_targets: 4000,
            min_coverage: Some(0.95),
            max_coverage: None,
            require_contained: false,
        }
    }
}

impl FillConfig {
    pub(super) fn validate(&self) -> Result<()> {
        super::range("fill.eps", self.eps, 1e-3, 0.3)?;
        super::range("fill.eta_factor", self.eta_factor, 1e-3, 1.0)?;
        super::range("fill.depth_factor", self.depth_factor, self.eta_factor, 0.95)?;
        super::range("fill.radius_factor", self.radius_factor, 0.1, 10.0)?;
        super::range("fill.r_star", self.r_star, 0.05, 0.95)?;
        super::range("fill.strip_halfwidth", self.strip_halfwidth, 0.01, 1.5)?;
        super::range("fill.strip_step", self.strip_step, 1e-3, 0.1)?;
        if self.n_family < 2 || self.n_family > 64 {
            return Err(Error::Config(format!(
                "fill.n_family = {} outside [2, 64]",
                self.n_family
            )));
        }
        if self.n_targets == 0 {
            return Err(Error::Config("fill.n_targets must be positive".into()));
        }
        Ok(())
    }

    pub fn eta(&self) -> f64 {
        self.eta_factor * self.eps * self.eps
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// Values of `f` on the polar lattice `radii x phis`, reusing one radial
/// combination of the ring modes per radius.
fn strip_values(f: &DiscFn, radii: &[f64], phis: &[f64]) -> Vec<C64> {
    let grid = f.grid();
    let n_t = grid.n_angular();
    let half = (n_t / 2) as i64;
    let modes = f.ring_modes();
    let mut out = Vec::with_capacity(radii.len() * phis.len());
    for &r in radii {
        if r >= 1.0 {
            out.extend(
                phis.iter()
                    .map(|&p| f.boundary().eval_unchecked(C64::from_polar(1.0, p))),
            );
            continue;
        }
        let row = grid.interp_row(r);
        let comb: Vec<(i64, C64)> = (0..n_t)
            .filter_map(|idx| {
                let k = fft_mode(idx, n_t);
                (k != -half).then(|| (k, modes.iter().zip(&row).map(|(ring, w)| ring[idx] * w).sum()))
            })
            .collect();
        out.extend(phis.iter().map(|&p| {
            comb.iter()
                .map(|(k, c)| c * C64::from_polar(1.0, *k as f64 * p))
                .sum::<C64>()
        }));
    }
    out
}

/// Sampled strip of one disc: `n_r x n_phi` lattice, row-major in `r`.
struct Strip {
    n_phi: usize,
    pts: Vec<V4>,
}

impl Strip {
    fn new(d: &BishopDisc, radii: &[f64], phis: &[f64]) -> Self {
        let z = strip_values(&d.z, radii, phis);
        let w = strip_values(&d.w, radii, phis);
        let pts = z.iter().zip(&w).map(|(z, w)| V4::new(z.re, z.im, w.re, w.im)).collect();
        Self { n_phi: phis.len(), pts }
    }

    fn at(&self, i: usize, j: usize) -> V4 {
        self.pts[i * self.n_phi + j]
    }

    fn n_r(&self) -> usize {
        self.pts.len() / self.n_phi
    }

    fn max_edge(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n_r() {
            for j in 0..self.n_phi {
                if i + 1 < self.n_r() {
                    m = m.max((self.at(i + 1, j) - self.at(i, j)).norm());
                }
                if j + 1 < self.n_phi {
                    m = m.max((self.at(i, j + 1) - self.at(i, j)).norm());
                }
                if i + 1 < self.n_r() && j + 1 < self.n_phi {
                    m = m.max((self.at(i + 1, j + 1) - self.at(i, j)).norm());
                }
            }
        }
        m
    }
}

fn segment_distance(p: &V4, a: &V4, b: &V4) -> f64 {
    let e = b - a;
    let l = e.norm_squared();
    let t = if l > 0.0 {
        ((p - a).dot(&e) / l).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + e * t)).norm()
}

/// Euclidean distance from `p` to the triangle `abc` in `R^4`.
fn triangle_distance(p: &V4, a: &V4, b: &V4, c: &V4) -> f64 {
    let (e0, e1, d) = (b - a, c - a, p - a);
    let g = Matrix2::new(e0.dot(&e0), e0.dot(&e1), e0.dot(&e1), e1.dot(&e1));
    if let Some(gi) = g.try_inverse() {
        let st = gi * Vector2::new(e0.dot(&d), e1.dot(&d));
        if st[0] >= 0.0 && st[1] >= 0.0 && st[0] + st[1] <= 1.0 {
            return (d - e0 * st[0] - e1 * st[1]).norm();
        }
    }
    segment_distance(p, a, b)
        .min(segment_distance(p, a, c))
        .min(segment_distance(p, b, c))
}

/// Spatial hash over the strip nodes with cell size `h`.
struct NodeIndex {
    h: f64,
    cells: HashMap<[i64; 4], Vec<(u32, u32, u32)>>,
}

impl NodeIndex {
    fn key(&self, p: &V4) -> [i64; 4] {
        std::array::from_fn(|k| (p[k] / self.h).floor() as i64)
    }

    fn new(strips: &[Strip], h: f64) -> Self {
        let mut idx = Self {
            h,
            cells: HashMap::new(),
        };
        for (s, strip) in strips.iter().enumerate() {
            for i in 0..strip.n_r() {
                for j in 0..strip.n_phi {
                    let k = idx.key(&strip.at(i, j));
                    idx.cells.entry(k).or_default().push((s as u32, i as u32, j as u32));
                }
            }
        }
        idx
    }

    /// Distance to the triangulated strips, searched only near `p`; returns
    /// `None` when nothing lies within one cell.
    fn distance(&self, strips: &[Strip], p: &V4, stop_below: f64) -> Option<f64> {
        let k0 = self.key(p);
        let mut best: Option<f64> = None;
        for off in 0..81 {
            let mut k = k0;
            let mut o = off;
            for c in k.iter_mut() {
                *c += (o % 3) as i64 - 1;
                o /= 3;
            }
            let Some(nodes) = self.cells.get(&k) else { continue };
            for &(s, i, j) in nodes {
                let st = &strips[s as usize];
                let (i, j) = (i as usize, j as usize);
                for (di, dj) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)] {
                    // quad with lower-left corner (i - di, j - dj)
                    if i < di || j < dj || i - di + 1 >= st.n_r() || j - dj + 1 >= st.n_phi {
                        continue;
                    }
                    let (a, b) = (i - di, j - dj);
                    let q = [st.at(a, b), st.at(a + 1, b), st.at(a, b + 1), st.at(a + 1, b + 1)];
                    let d = triangle_distance(p, &q[0], &q[1], &q[3]).min(triangle_distance(p, &q[0], &q[2], &q[3]));
                    if best.is_none_or(|b| d < b) {
                        best = Some(d);
                        if d < stop_below {
                            return best;
                        }
                    }
                }
            }
        }
        best
    }
}

pub fn run_fill(cfg: &ExperimentConfig) -> Result<Report> {
    let fc = &cfg.fill;
    fc.validate()?;
    let mut report = Report::new("fill", cfg);
    let (eps, eta) = (fc.eps, fc.eta());
    let depth = fc.depth_factor * eps * eps;
    let radius = fc.radius_factor * eps * eps;
    report.tolerance("eta", eta);
    report.tolerance("depth", depth);
    report.tolerance("radius", radius);
    report.tolerance("containment", 1e-8);

    let e = cfg.hypersurface.build()?;
    let a = cfg.structure.build()?;
    let grid = cfg.grid.build()?;
    let p = Point2C::new(C64::new(e.graph(0.0, C64::new(0.0, 0.0))?, 0.0), C64::new(0.0, 0.0));

    // attachment grid in (Im z, Re w); the lift of w_hat reaches Re w down to Re w_q - eps (1 - r*)
    let ya = radius + 0.2 * eps * eps;
    let ys = linspace(-ya, ya, fc.n_family);
    let bs = linspace(-radius - 0.05 * eps, radius + eps * (1.0 - fc.r_star), fc.n_family);
    let mut points = Vec::with_capacity(ys.len() * bs.len());
    for &y in &ys {
        for &b in &bs {
            let w = C64::new(b, 0.0);
            points.push(Point2C::new(C64::new(e.graph(y, w)?, y), w));
        }
    }
    let w_hat = BoundaryFn::from_fn(grid.boundary(), |z| (z - 1.0) * eps);
    let family = disc_family(&e, &a, &w_hat, &points, &grid, cfg.solver);

    let n_r = ((1.0 - fc.r_star) / fc.strip_step).ceil() as usize + 1;
    let radii = linspace(fc.r_star, 1.0, n_r);
    let n_phi = 2 * (fc.strip_halfwidth / fc.strip_step).ceil() as usize + 1;
    let phis = linspace(-fc.strip_halfwidth, fc.strip_halfwidth, n_phi);

    let mut strips = Vec::new();
    let mut failures = Vec::new();
    let mut containment: f64 = 0.0;
    let mut worst_pde: f64 = 0.0;
    let mut disc_rows = Table::new("disc_family", &["member", "r", "phi", "re_z", "im_z", "re_w", "im_w"]);
    for (k, m) in family.iter().enumerate() {
        match &m.disc {
            Ok(d) => {
                let s = Strip::new(d, &radii, &phis);
                for (n, q) in s.pts.iter().enumerate() {
                    containment = containment.max(e.rho(Point2C::from_real([q[0], q[1], q[2], q[3]])).abs());
                    disc_rows.rows.push(vec![
                        k as f64,
                        radii[n / n_phi],
                        phis[n % n_phi],
                        q[0],
                        q[1],
                        q[2],
                        q[3],
                    ]);
                }
                for s in d.samples() {
                    containment = containment.max(e.rho(Point2C::from_real([s[2], s[3], s[4], s[5]])).abs());
                }
                worst_pde = worst_pde.max(d.residual_pde);
                strips.push(s);
            }
            Err(err) => failures.push(serde_json::json!({
                "member": k,
                "attachment": m.point.to_real(),
                "error": err.to_string(),
            })),
        }
    }
    report.check(
        Check::holds("fill/all family members converged", failures.is_empty()).with_note(format!(
            "{} of {} converged",
            strips.len(),
            family.len()
        )),
    );

    let max_edge = strips.iter().map(Strip::max_edge).fold(0.0, crate::nan_max);
    let index = NodeIndex::new(&strips, (eta + max_edge).max(1e-12));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cov = Table::new(
        "coverage",
        &["re_z", "im_z", "re_w", "im_w", "depth", "distance", "covered"],
    );
    let mut covered = 0usize;
    let mut attempts = 0usize;
    while cov.rows.len() < fc.n_targets {
        attempts += 1;
        if attempts > 1000 * fc.n_targets {
            return Err(Error::Config(
                "target region is empty; increase fill.radius_factor".into(),
            ));
        }
        let (y, u, v) = (
            rng.random_range(-radius..radius),
            rng.random_range(-radius..radius),
            rng.random_range(-radius..radius),
        );
        let s = rng.random_range(-depth..-eta);
        let w = C64::new(u, v);
        let z = Point2C::new(C64::new(e.graph(y, w)? + s, y), w);
        if (z - p).norm() >= radius {
            continue;
        }
        let x = V4::from(z.to_real());
        let d = index.distance(&strips, &x, eta).unwrap_or(f64::INFINITY);
        let hit = d < eta;
        covered += hit as usize;
        cov.rows
            .push(vec![x[0], x[1], x[2], x[3], s, d.min(1e3), hit as u8 as f64]);
    }
    let coverage = covered as f64 / fc.n_targets as f64;

    if let Some(lo) = fc.min_coverage {
        report.check(Check::at_least("fill/coverage", coverage, lo));
    }
    if let Some(hi) = fc.max_coverage {
        report.check(Check::at_most("fill/coverage", coverage, hi));
    }
    if fc.require_contained {
        report.check(Check::at_most("fill/discs contained in E", containment, 1e-8));
    }
    report.result("coverage", coverage);
    report.result("targets", fc.n_targets);
    report.result("eta", eta);
    report.result("containment", containment);
    report.result("max_pde_residual", worst_pde);
    report.result("members", family.len());
    report.result("failures", failures);
    report.result("strip_max_edge", max_edge);
    report.tables.push(cov);
    report.tables.push(disc_rows);
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn triangle_distance_cases() {
        let a = V4::zeros();
        let b = V4::new(1.0, 0.0, 0.0, 0.0);
        let c = V4::new(0.0, 1.0, 0.0, 0.0);
        let inside = V4::new(0.2, 0.2, 0.3, 0.4);
        assert!((triangle_distance(&inside, &a, &b, &c) - 0.5).abs() < 1e-14);
        let outside = V4::new(2.0, 0.0, 0.0, 1.0);
        assert!((triangle_distance(&outside, &a, &b, &c) - 2f64.sqrt()).abs() < 1e-14);
        let degenerate = triangle_distance(&outside, &a, &b, &b);
        assert!((degenerate - 2f64.sqrt()).abs() < 1e-14);
    }

    fn v4() -> impl Strategy<Value = V4> {
        proptest::array::uniform4(-1.0f64..1.0).prop_map(V4::from)
    }

    proptest! {
        #[test]
        fn triangle_distance_bounds(p in v4(), a in v4(), b in v4(), c in v4(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let d = triangle_distance(&p, &a, &b, &c);
            let nearest = (p - a).norm().min((p - b).norm()).min((p - c).norm());
            prop_assert!(d >= 0.0 && d <= nearest + 1e-12);
            // every point of the triangle is at distance zero
            let (s, t) = if s + t > 1.0 { (1.0 - s, 1.0 - t) } else { (s, t) };
            let q = a + (b - a) * s + (c - a) * t;
            prop_assert!(triangle_distance(&q, &a, &b, &c) < 1e-9);
        }
    }

    #[test]
    fn strip_values_match_pointwise_evaluation() {
        let g = crate::grid::DiscGrid::new(64, 16, 32).unwrap();
        let f = DiscFn::from_fn(&g, |z| (z * 0.7).exp() + z.conj() * z);
        let radii = [0.3, 0.77, 1.0];
        let phis = [-0.2, 0.0, 1.3];
        let v = strip_values(&f, &radii, &phis);
        let ev = f.evaluator();
        for (n, val) in v.iter().enumerate() {
            let z = C64::from_polar(radii[n / 3], phis[n % 3]);
            assert!((val - ev.eval(z)).norm() < 1e-12);
        }
    }
}
