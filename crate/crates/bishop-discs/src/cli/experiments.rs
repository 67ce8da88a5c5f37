//! Single-disc solves, Levi scans over `E`, and the linearized diagnostics.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Check, ExperimentConfig, Report, Table};
use crate::acs::{AMatrixField, StructureSpec};
use crate::bishop::{solve_bishop, BishopDisc, BoundaryData, SolveMode, BC_TOL, PDE_TOL};
use crate::geom::{levi_form_bracket, levi_form_disc, Hypersurface, HypersurfaceSpec, LeviOptions};
use crate::grid::{BoundaryFn, DiscFn, DiscGrid, Point2C};
use crate::linrh::{
    assemble, evaluation_rank, frechet_check, generator_basis, random_b, resolvent_apply, resolvent_terms, solve_rh,
    tangency_diagnostic, LambdaExtension, LinearizedCoefficients, RhOptions,
};
use crate::{Error, Result, C64};

fn origin_on(e: &Hypersurface) -> Result<Point2C> {
    Ok(Point2C::new(
        C64::new(e.graph(0.0, C64::new(0.0, 0.0))?, 0.0),
        C64::new(0.0, 0.0),
    ))
}

/// Disc with `w_hat = eps (zeta - 1)` pinned at the point of `E` over the origin.
fn basic_disc(
    e: &Hypersurface,
    a: &AMatrixField,
    grid: &DiscGrid,
    eps: f64,
    cfg: &ExperimentConfig,
) -> Result<BishopDisc> {
    let p = origin_on(e)?;
    let w_hat = BoundaryFn::from_fn(grid.boundary(), |z| (z - 1.0) * eps);
    let data = BoundaryData::from_w_hat(w_hat, p.w.re)?;
    solve_bishop(e, a, &data, SolveMode::Pinned(p), grid, cfg.solver)
}

fn disc_table(name: &str, d: &BishopDisc) -> Table {
    let mut t = Table::new(name, &["r", "theta", "re_z", "im_z", "re_w", "im_w"]);
    t.rows = d.samples().iter().map(|r| r.to_vec()).collect();
    t
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscConfig {
    /// `w_hat = eps (zeta - 1)`.
    pub eps: f64,
    /// Iteration budget the solve is checked against.
    pub max_iterations: usize,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            max_iterations: 50,
        }
    }
}

impl DiscConfig {
    pub(super) fn validate(&self) -> Result<()> {
        super::range("disc.eps", self.eps, 1e-4, 0.5)?;
        if self.max_iterations == 0 {
            return Err(Error::Config("disc.max_iterations must be positive".into()));
        }
        Ok(())
    }
}

pub fn run_solve(cfg: &ExperimentConfig) -> Result<Report> {
    let dc = &cfg.disc;
    dc.validate()?;
    let mut report = Report::new("solve", cfg);
    report.tolerance("residual_pde", PDE_TOL);
    report.tolerance("residual_bc", BC_TOL);
    report.tolerance("pin", 1e-10);
    report.tolerance("generalized_bishop", 1e-6);
    let e = cfg.hypersurface.build()?;
    let a = cfg.structure.build()?;
    let grid = cfg.grid.build()?;
    let p = origin_on(&e)?;
    let d = match basic_disc(&e, &a, &grid, dc.eps, cfg) {
        Ok(d) => d,
        Err(err) => {
            report.check(Check::failed("solve/converged", &err));
            return Ok(report.finish());
        }
    };
    report.check(Check::at_most(
        "solve/iterations",
        d.iterations as f64,
        dc.max_iterations as f64,
    ));
    report.check(Check::at_most("solve/residual_pde", d.residual_pde, PDE_TOL));
    report.check(Check::at_most("solve/residual_bc", d.residual_bc, BC_TOL));
    report.check(Check::at_most("solve/Z(1) pinned", (d.attachment - p).norm(), 1e-10));
    let defect = d.generalized_bishop_defect(&a);
    report.check(Check::at_most("solve/generalized Bishop defect", defect, 1e-6));
    if let (HypersurfaceSpec::Quadric { sigma }, StructureSpec::Standard) = (&cfg.hypersurface, &cfg.structure) {
        // Re z = -sigma eps^2 (2 - zeta - zetabar) on the circle, z(1) = 0
        let (s, eps) = (*sigma, dc.eps);
        let dz = d.z.dist(&DiscFn::from_fn(&grid, |t| (t - 1.0) * (2.0 * s * eps * eps)));
        let dw = d.w.dist(&DiscFn::from_fn(&grid, |t| (t - 1.0) * eps));
        report.tolerance("closed_form", 1e-8);
        report.check(Check::at_most("solve/quadric closed form", dz.max(dw), 1e-8));
    }
    report.result("iterations", d.iterations);
    report.result("residual_pde", d.residual_pde);
    report.result("residual_bc", d.residual_bc);
    report.result("attachment", d.attachment.to_real());
    report.result("generalized_bishop_defect", defect);
    report.tables.push(disc_table("disc_0", &d));
    Ok(report.finish())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeviScanConfig {
    /// Points per direction on the `(Im z, Re w)` sample of `E`.
    pub n_points: usize,
    /// Half-width of the sample.
    pub extent: f64,
    /// Radius of the local discs.
    pub r0: f64,
}

impl Default for LeviScanConfig {
    fn default() -> Self {
        Self {
            n_points: 3,
            extent: 0.2,
            r0: 1e-2,
        }
    }
}

impl LeviScanConfig {
    pub(super) fn validate(&self) -> Result<()> {
        super::range("levi.extent", self.extent, 0.0, 1.0)?;
        super::range("levi.r0", self.r0, 1e-4, 0.1)?;
        if self.n_points == 0 || self.n_points > 32 {
            return Err(Error::Config(format!(
                "levi.n_points = {} outside [1, 32]",
                self.n_points
            )));
        }
        Ok(())
    }
}

pub fn run_levi_scan(cfg: &ExperimentConfig) -> Result<Report> {
    let lc = &cfg.levi;
    lc.validate()?;
    let mut report = Report::new("levi-scan", cfg);
    report.tolerance("levi_relative", 1e-2);
    let e = cfg.hypersurface.build()?;
    let a = cfg.structure.build()?;
    let j = a.to_structure();
    let opts = LeviOptions {
        r0: lc.r0,
        ..LeviOptions::default()
    };
    let ticks: Vec<f64> = if lc.n_points == 1 {
        vec![0.0]
    } else {
        (0..lc.n_points)
            .map(|k| -lc.extent + 2.0 * lc.extent * k as f64 / (lc.n_points - 1) as f64)
            .collect()
    };
    let mut table = Table::new(
        "levi_scan",
        &["re_z", "im_z", "re_w", "im_w", "disc", "bracket", "relative"],
    );
    let mut worst: f64 = 0.0;
    for &y in &ticks {
        for &u in &ticks {
            let w = C64::new(u, 0.0);
            let p = Point2C::new(C64::new(e.graph(y, w)?, y), w);
            let v = e.tangent_data(&j, p)?.holomorphic_tangent;
            let ld = levi_form_disc(&e, &a, p, v, opts)?;
            let lb = levi_form_bracket(&e, &j, p, v)?;
            let rel = super::selftest::levi_relative(ld, lb);
            worst = worst.max(rel);
            let x = p.to_real();
            table.rows.push(vec![x[0], x[1], x[2], x[3], ld, lb, rel]);
        }
    }
    report.check(Check::at_most("levi-scan/disc vs bracket", worst, 1e-2));
    report.result("points", table.rows.len());
    report.result("max_relative", worst);
    report.tables.push(table);
    Ok(report.finish())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearizedConfig {
    /// Scale of the reference discs.
    pub eps: f64,
    /// `K`: generators `(zeta - 1) zeta^k` and `i (zeta - 1) zeta^k`, `k < K`.
    pub n_generators: usize,
    /// Evaluation point of the rank diagnostic, as an angle.
    pub zeta0_angle: f64,
    /// Step of the finite-difference Frechet oracle.
    pub frechet_step: f64,
    /// Sizes of the random `B` fields in the `R1 - L1` sweep.
    pub b_scales: Vec<f64>,
    /// Normalized-structure strength in the scenario matrix.
    pub structure_eps: f64,
}

impl Default for LinearizedConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            n_generators: 16,
            zeta0_angle: std::f64::consts::PI,
            frechet_step: 1e-5,
            b_scales: vec![0.04, 0.02, 0.01, 0.005],
            structure_eps: 0.02,
        }
    }
}

impl LinearizedConfig {
    pub(super) fn validate(&self) -> Result<()> {
        super::range("linearized.eps", self.eps, 1e-3, 0.5)?;
        super::range("linearized.frechet_step", self.frechet_step, 1e-9, 1e-2)?;
        super::range("linearized.structure_eps", self.structure_eps, 0.0, 0.5)?;
        if self.n_generators < 4 {
            return Err(Error::Config(
                "linearized.n_generators must be at least 4 (8 basis elements)".into(),
            ));
        }
        if self.b_scales.len() < 2 || self.b_scales.iter().any(|&s| !(s > 0.0 && s < 0.5)) {
            return Err(Error::Config(
                "linearized.b_scales needs two or more values in (0, 0.5)".into(),
            ));
        }
        let z0 = C64::from_polar(1.0, self.zeta0_angle);
        if (z0 - 1.0).norm() < 0.1 {
            return Err(Error::Config(
                "linearized.zeta0_angle must keep zeta0 at distance >= 0.1 from 1".into(),
            ));
        }
        Ok(())
    }
}

/// Real, smooth `Gamma` pair vanishing at `1`.
fn random_gamma(grid: &DiscGrid, rng: &mut ChaCha8Rng) -> [BoundaryFn; 2] {
    std::array::from_fn(|_| {
        let c: Vec<C64> = (0..3)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        BoundaryFn::from_real_fn(grid.boundary(), |z| ((z - 1.0) * (c[0] + c[1] * z + c[2] * z * z)).re)
    })
}

#[derive(Clone, Debug, Serialize)]
struct ScenarioOutcome {
    name: String,
    frechet: f64,
    frechet_structure_part: Option<f64>,
    b_norm: f64,
    path_agreement: f64,
    perturbation_pde: f64,
    perturbation_bc: f64,
    perturbation_v1: f64,
    max_d1_zdot: f64,
    max_levi_det: f64,
    functional: f64,
    all_tangential: bool,
    levi_flat: bool,
    consistent: bool,
    rank: usize,
    w_rank: usize,
    singular_values: Vec<f64>,
    tangency_residual: f64,
    #[serde(skip)]
    levi_trace: Vec<(f64, f64)>,
}

fn scenario(
    name: String,
    e: &HypersurfaceSpec,
    a: &StructureSpec,
    grid: &DiscGrid,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ScenarioOutcome> {
    let lc = &cfg.linearized;
    let e = e.build()?;
    let a = a.build()?;
    let d = basic_disc(&e, &a, grid, lc.eps, cfg)?;
    let c = assemble(&e, &a, &d, LambdaExtension::Harmonic)?;
    let opts = RhOptions::default();

    let zdot = [
        DiscFn::from_fn(grid, |z| z.conj() * 0.3 + z * z),
        DiscFn::from_fn(grid, |z| z * z.conj() * 0.2 + C64::new(0.0, 1.0) * z),
    ];
    let fr = frechet_check(&a, &c, &d, &zdot, lc.frechet_step);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = random_gamma(grid, &mut rng);
    let p1 = solve_rh(&c, &gamma, opts)?;
    let p2 = resolvent_apply(&c, &gamma, opts)?;
    let agree = p1.v[0].dist(&p2.v[0]).max(p1.v[1].dist(&p2.v[1]));

    let basis = generator_basis(grid, lc.n_generators);
    let t = tangency_diagnostic(&e, &c, &d, &basis, opts)?;
    let rk = evaluation_rank(&e, &c, &d, C64::from_polar(1.0, lc.zeta0_angle), &basis, opts)?;
    Ok(ScenarioOutcome {
        name,
        frechet: fr.relative,
        frechet_structure_part: fr.relative_structure_part,
        b_norm: c.b_norm(),
        path_agreement: agree,
        perturbation_pde: p1.residual_pde,
        perturbation_bc: p1.residual_bc,
        perturbation_v1: p1.v_at_one,
        max_d1_zdot: t.max_d1_zdot,
        max_levi_det: t.max_levi_det,
        functional: t.functional,
        all_tangential: t.all_tangential,
        levi_flat: t.levi_flat,
        consistent: t.consistent,
        rank: rk.rank,
        w_rank: rk.w_rank,
        singular_values: rk.singular_values,
        tangency_residual: rk.tangency_residual,
        levi_trace: t.levi_trace,
    })
}

/// `sup |R1 V0 - L1 V0|` for random `B` of the given sizes, and the fitted
/// log-log slope against `|B|`.
fn resolvent_sweep(grid: &DiscGrid, scales: &[f64], seed: u64) -> Result<(Vec<(f64, f64)>, f64)> {
    let v0 = [
        DiscFn::from_fn(grid, |z| (z - 1.0) * C64::new(0.5, 1.0)),
        DiscFn::from_fn(grid, |z| (z - 1.0) * z * C64::new(-1.0, 0.3)),
    ];
    let mut pts = Vec::with_capacity(scales.len());
    for &s in scales {
        let (b1, b2) = random_b(grid, seed, s);
        let c = LinearizedCoefficients::from_b(b1, b2);
        let (r1, _) = resolvent_terms(&c, &v0, RhOptions::default())?;
        let l1 = c.l1(&v0);
        pts.push((c.b_norm(), r1[0].dist(&l1[0]).max(r1[1].dist(&l1[1]))));
    }
    Ok((pts.clone(), fit_slope(&pts)))
}

/// Least-squares slope of `log y` against `log x`.
pub(super) fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn run_linearized(cfg: &ExperimentConfig) -> Result<Report> {
    let lc = &cfg.linearized;
    lc.validate()?;
    let mut report = Report::new("linearized", cfg);
    report.tolerance("frechet_relative", 1e-3);
    report.tolerance("path_agreement", 1e-6);
    report.tolerance("perturbation_pde", 1e-5);
    report.tolerance("perturbation_bc", 1e-6);
    report.tolerance("perturbation_v1", 1e-10);
    report.tolerance("slope", 0.3);
    report.tolerance("tangency_residual", 1e-6);
    let grid = cfg.grid.build()?;

    let surfaces = [
        ("flat", HypersurfaceSpec::Flat),
        ("quadric", HypersurfaceSpec::Quadric { sigma: 1.0 }),
        (
            "finite-type m=2",
            HypersurfaceSpec::FiniteType {
                m: 2,
                q: vec![1.0],
                tail: 0.0,
            },
        ),
    ];
    let structures = [
        ("standard", StructureSpec::Standard),
        ("normalized", StructureSpec::Normalized { eps: lc.structure_eps }),
    ];
    let mut jobs = Vec::new();
    for (sn, s) in &surfaces {
        for (an, a) in &structures {
            jobs.push((format!("{sn}, {an}"), s.clone(), a.clone()));
        }
    }
    let (outcomes, sweep) = std::thread::scope(|sc| {
        let handles: Vec<_> = jobs
            .iter()
            .enumerate()
            .map(|(k, (name, e, a))| {
                let grid = &grid;
                sc.spawn(move || scenario(name.clone(), e, a, grid, cfg, cfg.seed.wrapping_add(k as u64)))
            })
            .collect();
        let sweep = resolvent_sweep(&grid, &lc.b_scales, cfg.seed);
        let outcomes: Vec<_> = handles.into_iter().map(|h| h.join()).collect();
        (outcomes, sweep)
    });

    let mut rows = Vec::new();
    let mut trace = Table::new("levi_trace", &["scenario", "theta", "levi_det"]);
    for (k, (o, (name, _, a))) in outcomes.into_iter().zip(&jobs).enumerate() {
        let o = match o.map_err(|_| Error::Config("scenario worker panicked".into())) {
            Ok(Ok(o)) => o,
            Ok(Err(err)) | Err(err) => {
                report.check(Check::failed(format!("linearized/{name}"), &err));
                continue;
            }
        };
        let n = &o.name;
        let mut fc = Check::at_most(format!("linearized/frechet [{n}]"), o.frechet, 1e-3);
        // with A = 0 the structure part is finite-difference roundoff
        if let (Some(p), false) = (o.frechet_structure_part, *a == StructureSpec::Standard) {
            fc = fc.with_note(format!("structure part alone: {p:.2e}"));
        }
        report.check(fc);
        report.check(Check::at_most(
            format!("linearized/solve_rh vs resolvent [{n}]"),
            o.path_agreement,
            1e-6,
        ));
        report.check(Check::at_most(
            format!("linearized/perturbation pde residual [{n}]"),
            o.perturbation_pde,
            1e-5,
        ));
        report.check(Check::at_most(
            format!("linearized/perturbation boundary residual [{n}]"),
            o.perturbation_bc,
            1e-6,
        ));
        report.check(Check::at_most(
            format!("linearized/perturbation V(1) [{n}]"),
            o.perturbation_v1,
            1e-10,
        ));
        report.check(
            Check::holds(format!("linearized/tangency dichotomy [{n}]"), o.consistent).with_note(format!(
                "max |d1 zdot| {:.2e}, max |det L| {:.2e}",
                o.max_d1_zdot, o.max_levi_det
            )),
        );
        report.check(Check::at_least(
            format!("linearized/rank >= 2 [{n}]"),
            o.rank as f64,
            2.0,
        ));
        if n == "flat, standard" {
            report.check(Check::new(
                "linearized/flat evaluation rank",
                o.rank as f64,
                super::Bound::Equals { target: 2.0 },
            ));
            report.check(Check::at_most(
                "linearized/flat tangency residual",
                o.tangency_residual,
                1e-6,
            ));
        }
        if n == "quadric, standard" {
            report.check(Check::at_least(
                "linearized/quadric evaluation rank",
                o.rank as f64,
                3.0,
            ));
        }
        for (th, det) in &o.levi_trace {
            trace.rows.push(vec![k as f64, *th, *det]);
        }
        rows.push(o);
    }
    match sweep {
        Ok((pts, slope)) => {
            report.check(Check::within("linearized/R1 - L1 slope", slope, 2.0, 0.3));
            report.result("resolvent_sweep", pts);
        }
        Err(err) => report.check(Check::failed("linearized/R1 - L1 slope", &err)),
    }
    report.result("scenario_names", jobs.iter().map(|j| j.0.clone()).collect::<Vec<_>>());
    report.result("scenarios", rows);
    report.tables.push(trace);
    Ok(report.finish())
}
