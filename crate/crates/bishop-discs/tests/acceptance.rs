//! Acceptance run: one line per criterion with its tolerances and runtime.
//! Exits with status 1 when any criterion fails.

use std::path::Path;
use std::time::Instant;

use bishop_discs::acs::{ball_sample, StructureSpec};
use bishop_discs::bishop::{solve_bishop, BoundaryData, SolveMode};
use bishop_discs::cli::{
    run_dilation_study, run_fill, run_finite_type, run_levi_scan, run_linearized, run_selftest, run_solve, Check,
    ExperimentConfig, Report,
};
use bishop_discs::geom::HypersurfaceSpec;
use bishop_discs::grid::{BoundaryFn, Point2C};
use bishop_discs::linrh::{assemble, evaluation_rank, generator_basis, LambdaExtension, RhOptions};
use bishop_discs::C64;

type Outcome = Result<(bool, String), String>;

struct Run {
    failed: usize,
}

impl Run {
    fn criterion(&mut self, n: usize, title: &str, tolerances: &str, budget_s: f64, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let out = f();
        let dt = t.elapsed().as_secs_f64();
        self.report(n, title, tolerances, budget_s, dt, out);
    }

    /// For criteria whose work was timed elsewhere.
    fn report(&mut self, n: usize, title: &str, tolerances: &str, budget_s: f64, dt: f64, out: Outcome) {
        let (ok, detail) = match out {
            Ok((ok, d)) => (ok && dt <= budget_s, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            self.failed += 1;
        }
        println!(
            "[{}] {n:>2} {title:<28} {dt:>7.2} s (budget {budget_s} s)  tol: {tolerances}  {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn checks<'a>(r: &'a Report, prefix: &str) -> Vec<&'a Check> {
    r.checks.iter().filter(|c| c.name.starts_with(prefix)).collect()
}

/// Passes when the selection is nonempty and every check passes; names the failures.
fn all_pass(cs: &[&Check]) -> (bool, String) {
    let bad: Vec<String> = cs
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} = {:.3e}", c.name, c.value))
        .collect();
    if cs.is_empty() {
        (false, "no checks".into())
    } else if bad.is_empty() {
        (true, format!("{} checks", cs.len()))
    } else {
        (false, format!("failed: {}", bad.join("; ")))
    }
}

fn value(r: &Report, name: &str) -> Result<f64, String> {
    r.find(name)
        .map(|c| c.value)
        .ok_or_else(|| format!("missing check {name}"))
}

fn msg(x: impl std::fmt::Display) -> String {
    x.to_string()
}

fn config(path: &str) -> Result<ExperimentConfig, String> {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(path);
    ExperimentConfig::load(&p).map_err(msg)
}

fn finite_type_m2(q1: f64) -> Result<f64, String> {
    let mut cfg = ExperimentConfig::default();
    cfg.finite_type.m = 2;
    cfg.finite_type.q = vec![q1];
    let r = run_finite_type(&cfg).map_err(msg)?;
    let sweep = r.results["sweep"].as_array().ok_or("no sweep")?;
    let mut worst: f64 = 0.0;
    for s in sweep {
        let p = s["poisson"].as_f64().ok_or("bad sweep")?;
        let d = s["radial"].as_f64().ok_or("bad sweep")?;
        worst = bishop_discs::nan_max(worst, (p + 2.0 * q1).abs().max((d + 2.0 * q1).abs()));
    }
    Ok(worst)
}

/// `(rank, tangency residual)` for a disc through the origin with `A = 0`.
fn rank_of(h: HypersurfaceSpec) -> Result<(usize, f64), String> {
    let cfg = ExperimentConfig::default();
    let grid = cfg.grid.build().map_err(msg)?;
    let e = h.build().map_err(msg)?;
    let a = StructureSpec::Standard.build().map_err(msg)?;
    let wh = BoundaryFn::from_fn(grid.boundary(), |z| (z - 1.0) * 0.1);
    let data = BoundaryData::from_w_hat(wh, 0.0).map_err(msg)?;
    let d = solve_bishop(&e, &a, &data, SolveMode::Pinned(Point2C::origin()), &grid, cfg.solver).map_err(msg)?;
    let c = assemble(&e, &a, &d, LambdaExtension::Harmonic).map_err(msg)?;
    let basis = generator_basis(&grid, 16);
    let r = evaluation_rank(&e, &c, &d, C64::new(-1.0, 0.0), &basis, RhOptions::default()).map_err(msg)?;
    Ok((r.rank, r.tangency_residual))
}

fn main() {
    let mut run = Run { failed: 0 };
    let default = ExperimentConfig::default();

    let t = Instant::now();
    let selftest = run_selftest(&default);
    let selftest_s = t.elapsed().as_secs_f64();
    let st = selftest.as_ref().map_err(|x| x.to_string());

    run.report(
        1,
        "operator identities",
        "exact 1e-10, quadrature 1e-4, order >= 1.5",
        30.0,
        selftest_s,
        st.clone().map(|r| all_pass(&checks(r, "ops/"))),
    );
    run.report(
        2,
        "structure algebra",
        "1e-10, functoriality 1e-8, normalization 1e-3/1e-2",
        20.0,
        selftest_s,
        st.clone().map(|r| all_pass(&checks(r, "acs/"))),
    );

    run.criterion(
        3,
        "nonlinear solver",
        "closed form 1e-8, pde 1e-6, bc 1e-8, pin 1e-10, <= 50 it",
        60.0,
        || {
            let mut cs = Vec::new();
            let base = run_solve(&default).map_err(msg)?;
            let closed = value(&base, "solve/quadric closed form")?;
            cs.push(base);
            let pts = ball_sample();
            let mut worst_a: f64 = 0.0;
            // A is linear in eps: pick eps so that sup |A| over the unit ball is 0.02
            let families: [fn(f64) -> StructureSpec; 3] = [
                |eps| StructureSpec::DiagonalPerturbation { eps },
                |eps| StructureSpec::Normalized { eps },
                |eps| StructureSpec::BlockDiagonal { eps },
            ];
            for family in families {
                let unit = family(1.0).build().map_err(msg)?.sup_norm(&pts);
                let s = family(0.02 / unit);
                worst_a = worst_a.max(s.build().map_err(msg)?.sup_norm(&pts));
                let mut cfg = default.clone();
                cfg.structure = s;
                cs.push(run_solve(&cfg).map_err(msg)?);
            }
            let all: Vec<&Check> = cs.iter().flat_map(|r| checks(r, "solve/")).collect();
            let (ok, d) = all_pass(&all);
            Ok((
                ok && worst_a <= 0.02 * (1.0 + 1e-12),
                format!("{d}, closed form {closed:.1e}, sup |A| {worst_a:.3}"),
            ))
        },
    );

    run.criterion(4, "Levi form consistency", "relative 1e-2", 30.0, || {
        let r = st.clone()?;
        let mut cs = checks(r, "levi/");
        let mut scans = Vec::new();
        for h in [
            HypersurfaceSpec::Flat,
            HypersurfaceSpec::Quadric { sigma: 1.0 },
            HypersurfaceSpec::Quadric { sigma: -1.0 },
        ] {
            let mut cfg = default.clone();
            cfg.hypersurface = h;
            scans.push(run_levi_scan(&cfg).map_err(msg)?);
        }
        cs.extend(scans.iter().flat_map(|r| checks(r, "levi-scan/")));
        Ok(all_pass(&cs))
    });

    let t = Instant::now();
    let lin = run_linearized(&default).map_err(msg);
    let lin_s = t.elapsed().as_secs_f64();
    run.report(
        5,
        "linearization oracle",
        "frechet 1e-3, paths 1e-6, slope 2 +- 0.3",
        60.0,
        lin_s,
        lin.clone().and_then(|r| {
            let mut cs = checks(&r, "linearized/frechet");
            cs.extend(checks(&r, "linearized/solve_rh vs resolvent"));
            cs.extend(checks(&r, "linearized/R1 - L1 slope"));
            let slope = value(&r, "linearized/R1 - L1 slope")?;
            let (ok, d) = all_pass(&cs);
            Ok((ok, format!("{d}, slope {slope:.4}")))
        }),
    );
    run.report(
        6,
        "tangency dichotomy",
        "|d1 zdot| 1e-4 vs sup |det L| 1e-3",
        120.0,
        lin_s,
        lin.map(|r| {
            let cs = checks(&r, "linearized/tangency dichotomy");
            let (ok, d) = all_pass(&cs);
            (ok && cs.len() == 6, d)
        }),
    );

    run.criterion(
        7,
        "finite-type construction",
        "m=2 error 1e-4, dual route 1e-3, peak > 0",
        30.0,
        || {
            let e1 = finite_type_m2(1.0)?;
            let e2 = finite_type_m2(0.5)?;
            let mut cfg = default.clone();
            cfg.finite_type.m = 4;
            cfg.finite_type.q = vec![1.0, 1.0, 0.0];
            let r = run_finite_type(&cfg).map_err(msg)?;
            let dual = value(&r, "finite-type/dual-route agreement")?;
            let peak = value(&r, "finite-type/max over theta |(Re z)_nu(1)|")?;
            let ok = e1 <= 1e-4 && e2 <= 1e-4 && dual <= 1e-3 && peak > 0.0;
            Ok((
                ok,
                format!("m=2 errors {e1:.1e} (q1=1), {e2:.1e} (q1=1/2); m=4 dual {dual:.1e}, peak {peak:.4}"),
            ))
        },
    );

    run.criterion(
        8,
        "one-sided filling",
        "quadric >= 0.95, flat <= 0.05 and contained 1e-8",
        120.0,
        || {
            let q = run_fill(&default).map_err(msg)?;
            let f = run_fill(&config("fill-flat.json")?).map_err(msg)?;
            let cq = value(&q, "fill/coverage")?;
            let cf = value(&f, "fill/coverage")?;
            let contained = value(&f, "fill/discs contained in E")?;
            let ok = q.passed && f.passed && cq >= 0.95 && cf <= 0.05 && contained <= 1e-8;
            Ok((
                ok,
                format!("quadric {cq:.3}, flat {cf:.3}, flat containment {contained:.1e}"),
            ))
        },
    );

    run.criterion(
        9,
        "dilation studies",
        "isotropic 1 +- 0.2, anisotropic >= 0.3",
        30.0,
        || {
            let r = run_dilation_study(&default).map_err(msg)?;
            let (ok, d) = all_pass(&checks(&r, "dilate/"));
            let s = |k: &str| {
                r.results[k]
                    .as_array()
                    .map(|a| a.iter().filter_map(|v| v.as_f64()).collect::<Vec<_>>())
            };
            let (iso, an) = (
                s("isotropic_slopes").unwrap_or_default(),
                s("anisotropic_slopes").unwrap_or_default(),
            );
            let ok = ok && an.first().is_some_and(|&v| v >= 0.3);
            Ok((ok, format!("{d}, isotropic {iso:.3?}, anisotropic {an:.3?}")))
        },
    );

    run.criterion(
        10,
        "rank diagnostic",
        "flat rank = 2 with residual 1e-6, quadric rank >= 3",
        30.0,
        || {
            let (rf, tf) = rank_of(HypersurfaceSpec::Flat)?;
            let (rq, _) = rank_of(HypersurfaceSpec::Quadric { sigma: 1.0 })?;
            Ok((
                rf == 2 && tf <= 1e-6 && rq >= 3,
                format!("flat rank {rf} residual {tf:.1e}, quadric rank {rq}"),
            ))
        },
    );

    println!("acceptance: {} of 10 criteria failed", run.failed);
    if run.failed > 0 {
        std::process::exit(1);
    }
}
