//! Distances of dilated structures and hypersurfaces from their models.
//!
//! Isotropic dilations `Z -> Z / delta` flatten a structure with `A(0) = 0`
//! toward `J_st` at rate `delta`, and a hypersurface through `0` with tangent
//! plane `Re z = 0` toward that plane. The anisotropic dilations
//! `(z, w) -> (z / delta, w / delta^{1/m})` send a finite-type hypersurface to
//! its model `Re z + p_m(w) = 0` and a block-diagonal structure to `J_st` at
//! rate `delta^{1/m}`.

use serde::{Deserialize, Serialize};

use super::experiments::fit_slope;
use super::{Check, ExperimentConfig, Report, Table};
use crate::acs::{ball_sample, Dilation, StructureSpec};
use crate::geom::{dilation_distances, HypersurfaceSpec};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DilationConfig {
    pub deltas: Vec<f64>,
    pub isotropic_structure: StructureSpec,
    pub isotropic_hypersurface: HypersurfaceSpec,
    pub anisotropic_structure: StructureSpec,
    pub anisotropic_hypersurface: HypersurfaceSpec,
}

impl Default for DilationConfig {
    fn default() -> Self {
        Self {
            deltas: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
            isotropic_structure: StructureSpec::DiagonalPerturbation { eps: 0.1 },
            isotropic_hypersurface: HypersurfaceSpec::Quadric { sigma: 1.0 },
            anisotropic_structure: StructureSpec::BlockDiagonal { eps: 0.1 },
            anisotropic_hypersurface: HypersurfaceSpec::FiniteType {
                m: 2,
                q: vec![1.0],
                tail: 1.0,
            },
        }
    }
}

impl DilationConfig {
    pub(super) fn validate(&self) -> Result<()> {
        if self.deltas.len() < 2 || self.deltas.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
            return Err(Error::Config(
                "dilation.deltas needs two or more values in (0, 1]".into(),
            ));
        }
        if !matches!(self.anisotropic_hypersurface, HypersurfaceSpec::FiniteType { .. }) {
            return Err(Error::Config(
                "dilation.anisotropic_hypersurface must be finite-type".into(),
            ));
        }
        self.isotropic_structure.build()?;
        self.anisotropic_structure.build()?;
        self.isotropic_hypersurface.build()?;
        Ok(())
    }

    fn m(&self) -> u32 {
        match self.anisotropic_hypersurface {
            HypersurfaceSpec::FiniteType { m, .. } => m,
            _ => 2,
        }
    }
}

struct Sweep {
    structure: Vec<(f64, f64)>,
    hypersurface: Vec<(f64, f64)>,
}

fn sweep(
    a: &StructureSpec,
    e: &HypersurfaceSpec,
    model: &HypersurfaceSpec,
    deltas: &[f64],
    mode: impl Fn(f64) -> Dilation,
) -> Result<Sweep> {
    let a = a.build()?;
    let e = e.build()?;
    let model = model.build()?;
    let pts = ball_sample();
    let mut out = Sweep {
        structure: Vec::new(),
        hypersurface: Vec::new(),
    };
    for &d in deltas {
        let (s, h) = dilation_distances(&a, Some((&e, &model)), mode(d), &pts)?;
        out.structure.push((d, s));
        out.hypersurface.push((d, h.unwrap_or(f64::NAN)));
    }
    Ok(out)
}

/// Slope over the points with a nonzero distance; `NaN` when fewer than two remain.
fn slope(pts: &[(f64, f64)]) -> f64 {
    let p: Vec<(f64, f64)> = pts.iter().copied().filter(|&(_, y)| y > 0.0).collect();
    if p.len() < 2 {
        f64::NAN
    } else {
        fit_slope(&p)
    }
}

pub fn run_dilation_study(cfg: &ExperimentConfig) -> Result<Report> {
    let dc = &cfg.dilation;
    dc.validate()?;
    let m = dc.m();
    let mut report = Report::new("dilate", cfg);
    report.tolerance("isotropic_slope", 0.2);
    report.tolerance("anisotropic_slope_margin", 0.2);

    let iso = sweep(
        &dc.isotropic_structure,
        &dc.isotropic_hypersurface,
        &HypersurfaceSpec::Flat,
        &dc.deltas,
        |delta| Dilation::Isotropic { delta },
    )?;
    let model = dc
        .anisotropic_hypersurface
        .model()
        .ok_or_else(|| Error::Config("no model hypersurface".into()))?;
    let aniso = sweep(
        &dc.anisotropic_structure,
        &dc.anisotropic_hypersurface,
        &model,
        &dc.deltas,
        |delta| Dilation::Anisotropic { delta, m },
    )?;
    let zero = sweep(
        &StructureSpec::Standard,
        &dc.isotropic_hypersurface,
        &HypersurfaceSpec::Flat,
        &dc.deltas,
        |delta| Dilation::Isotropic { delta },
    )?;

    let lower = 1.0 / m as f64 - 0.2;
    let (si, hi) = (slope(&iso.structure), slope(&iso.hypersurface));
    let (sa, ha) = (slope(&aniso.structure), slope(&aniso.hypersurface));
    report.check(Check::within("dilate/isotropic structure slope", si, 1.0, 0.2));
    report.check(Check::within("dilate/isotropic hypersurface slope", hi, 1.0, 0.2));
    report.check(Check::at_least("dilate/anisotropic structure slope", sa, lower));
    report.check(Check::at_least("dilate/anisotropic hypersurface slope", ha, lower));
    let z = zero.structure.iter().map(|p| p.1).fold(0.0, crate::nan_max);
    report.check(Check::at_most("dilate/A = 0 stays J_st", z, 0.0));

    report.result("m", m);
    report.result("isotropic_slopes", [si, hi]);
    report.result("anisotropic_slopes", [sa, ha]);
    let mut t = Table::new(
        "dilation",
        &[
            "delta",
            "iso_structure",
            "iso_hypersurface",
            "aniso_structure",
            "aniso_hypersurface",
            "standard",
        ],
    );
    for k in 0..dc.deltas.len() {
        t.rows.push(vec![
            dc.deltas[k],
            iso.structure[k].1,
            iso.hypersurface[k].1,
            aniso.structure[k].1,
            aniso.hypersurface[k].1,
            zero.structure[k].1,
        ]);
    }
    report.tables.push(t);
    Ok(report.finish())
}
