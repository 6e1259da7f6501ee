//! End-to-end runs assembled from a [`RunConfig`].

use serde::Serialize;

use crate::config::{FrameConfig, RunConfig, StartKind, TrialKind};
use crate::error::{Error, Result};
use crate::fiber::{solve_fiber, solve_grid, window_gap, BandWindow, FiberSpectrum, PlaneWaveBasis, PotentialSpec};
use crate::frames::{
    default_width, eigen_trial, potential_minimum, projection_frame, random_trial, window_projectors, BlochFrame, Trial,
};
use crate::functional::{eval_gauge_functional, FunctionalReport, GaugeField, Overlaps};
use crate::io::Table;
use crate::lattice::{build_lattice, make_kgrid, BravaisLattice, KGrid, Vec3};
use crate::linalg::{c, CMat};
use crate::optimizer::{
    abelian_poisson_oracle, minimize, DescentTrace, OptimizerConfig, RealignEvent, RecenterEvent, SectorResult, Start,
};
use crate::wannier::{decay_fit, default_samples, moments, synthesize, DecayFit, WannierSet};

/// Gap used to accept a band window, in energy units.
pub const GAP_TOL: f64 = 1e-6;

/// Lattice, basis and spectra on the k-grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub lattice: BravaisLattice,
    pub potential: PotentialSpec,
    pub basis: PlaneWaveBasis,
    pub grid: KGrid,
    pub spectra: Vec<FiberSpectrum>,
    pub window: BandWindow,
}

impl Problem {
    /// Solves every fiber; the gap is not checked here.
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let lattice = build_lattice(&cfg.lattice)?;
        let basis = PlaneWaveBasis::new(&lattice, cfg.grid.cutoff);
        let grid = make_kgrid(&lattice, &cfg.grid.sizes)?;
        let spectra = solve_grid(&grid, &basis, &cfg.potential)?;
        Ok(Problem { lattice, potential: cfg.potential.clone(), basis, grid, spectra, window: cfg.window })
    }

    pub fn validated_window(&self) -> Result<BandWindow> {
        crate::fiber::validate_gap(&self.spectra, self.window, GAP_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GapReport {
    pub first: usize,
    pub count: usize,
    pub min_gap: f64,
    pub k_index: usize,
    pub k: Vec<f64>,
    pub open: bool,
}

/// Band table (kIndex, k₁..k_d, E₀..) and the window gap over the grid.
pub fn band_structure(p: &Problem, nbands: usize) -> Result<(Table, GapReport)> {
    let d = p.grid.dim;
    let avail = p.basis.len();
    if p.window.first + p.window.count > avail {
        return Err(Error::WindowOutOfRange { first: p.window.first, count: p.window.count, basis: avail });
    }
    let nb = nbands.min(avail);
    let mut header = vec!["kIndex".to_string()];
    header.extend((1..=d).map(|j| format!("k{j}")));
    header.extend((0..nb).map(|n| format!("E{n}")));
    let mut table = Table { header, rows: Vec::new() };
    let mut worst = (0, f64::INFINITY);
    for (i, s) in p.spectra.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.k[..d].iter().map(|&x| crate::io::fmt_f64(x)));
        row.extend(s.eigenvalues[..nb].iter().map(|&e| crate::io::fmt_f64(e)));
        table.push(row);
        let g = window_gap(s, p.window.first, p.window.count);
        if g < worst.1 {
            worst = (i, g);
        }
    }
    let gap = GapReport {
        first: p.window.first,
        count: p.window.count,
        min_gap: worst.1,
        k_index: worst.0,
        k: p.spectra[worst.0].k[..d].to_vec(),
        open: worst.1 > GAP_TOL,
    };
    Ok((table, gap))
}

/// Projection frame for the configured trial subspace.
pub fn build_frame(p: &Problem, window: &BandWindow, fc: &FrameConfig, seed: u64) -> Result<BlochFrame> {
    let center: Vec3 = match &fc.center {
        Some(v) => {
            let mut x = [0.0; 3];
            x[..v.len()].copy_from_slice(v);
            x
        }
        None => potential_minimum(&p.lattice, &p.potential, 32),
    };
    let width = fc.width.unwrap_or_else(|| default_width(&p.lattice));
    let trial = match fc.trial {
        TrialKind::Eigen => eigen_trial(&solve_fiber(&[0.0; 3], &p.basis, &p.potential)?, window, center, width),
        TrialKind::Random => random_trial(&p.basis, window.count, seed, center, width),
        TrialKind::Constant => constant_trial(&p.basis, window.count),
    };
    projection_frame(&window_projectors(&p.spectra, window), &p.grid, &p.basis, &trial)
}

/// The m lowest plane waves, the same at every k.
pub fn constant_trial(basis: &PlaneWaveBasis, m: usize) -> Trial {
    Trial::Constant(CMat::from_fn(basis.len(), m, |i, a| if i == a { c(1.0, 0.0) } else { c(0.0, 0.0) }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleBlock {
    pub objective: f64,
    pub grad_norm: f64,
    pub poisson_grad_norm: f64,
    pub selected: usize,
    pub best: usize,
    pub sectors: Vec<SectorResult>,
    /// |F_optimizer − F_oracle| / F_oracle, when both ran.
    pub relative_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DescentSummary {
    pub initial_objective: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub centers: Vec<Vec<f64>>,
    pub el_residual: f64,
    pub recenterings: Vec<RecenterEvent>,
    pub realignments: Vec<RealignEvent>,
}

impl DescentSummary {
    pub fn from_trace(t: &DescentTrace) -> Self {
        DescentSummary {
            initial_objective: t.rows[0].f,
            objective: t.objective,
            grad_norm: t.grad_norm,
            converged: t.converged,
            iterations: t.rows.last().map_or(0, |r| r.iter),
            centers: t.centers.clone(),
            el_residual: t.el_residual,
            recenterings: t.recenterings.clone(),
            realignments: t.realignments.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WannierSummary {
    pub centers: Vec<Vec<f64>>,
    pub spreads: Vec<f64>,
    pub total: f64,
    /// Per-band fits; absent when the supercell is too small for a fit.
    pub decay: Option<Vec<DecayFit>>,
    pub decay_error: Option<String>,
}

pub struct Localization {
    pub window: BandWindow,
    pub frame: BlochFrame,
    pub trace: DescentTrace,
    pub functional: FunctionalReport,
    pub oracle: Option<OracleBlock>,
}

impl Localization {
    pub fn final_frame(&self) -> BlochFrame {
        self.frame.rotated(&self.trace.gauge.u)
    }
}

pub fn start_for(kind: StartKind) -> Start {
    match kind {
        StartKind::Identity => Start::Identity,
        StartKind::Random => Start::Random,
        StartKind::Perturbed(eps) => Start::Perturbed(eps),
    }
}

/// Frames, descent and (optionally) the abelian oracle.
pub fn localize(
    p: &Problem,
    fc: &FrameConfig,
    opt: &OptimizerConfig,
    start: StartKind,
    with_oracle: bool,
) -> Result<Localization> {
    let window = p.validated_window()?;
    let frame = build_frame(p, &window, fc, opt.seed)?;
    let ov = Overlaps::new(&frame, &p.grid, &p.basis)?;
    let trace = minimize(&ov, &p.grid, opt, start_for(start))?;
    let functional = eval_gauge_functional(&trace.gauge, &frame, &p.grid, &p.basis)?;
    let oracle = if with_oracle {
        let o = abelian_poisson_oracle(&ov, &p.grid)?;
        Some(OracleBlock {
            objective: o.objective,
            grad_norm: o.grad_norm,
            poisson_grad_norm: o.poisson_grad_norm,
            selected: o.selected,
            best: o.best,
            relative_difference: Some((trace.objective - o.objective).abs() / o.objective.abs()),
            sectors: o.sectors,
        })
    } else {
        None
    };
    Ok(Localization { window, frame, trace, functional, oracle })
}

/// Oracle only, on the frame selected by the config.
pub fn oracle_only(p: &Problem, fc: &FrameConfig, seed: u64) -> Result<OracleBlock> {
    let window = p.validated_window()?;
    let frame = build_frame(p, &window, fc, seed)?;
    let ov = Overlaps::new(&frame, &p.grid, &p.basis)?;
    let o = abelian_poisson_oracle(&ov, &p.grid)?;
    Ok(OracleBlock {
        objective: o.objective,
        grad_norm: o.grad_norm,
        poisson_grad_norm: o.poisson_grad_norm,
        selected: o.selected,
        best: o.best,
        sectors: o.sectors,
        relative_difference: None,
    })
}

/// Supercell synthesis with the configured or default sampling.
pub fn synthesize_set(p: &Problem, frame: &BlochFrame, samples: Option<&[usize]>) -> Result<WannierSet> {
    let defaults = default_samples(p.grid.dim, &p.basis);
    synthesize(frame, &p.grid, &p.lattice, &p.basis, samples.unwrap_or(&defaults))
}

/// Moments and decay fits. A failed fit is reported in the summary and returned
/// as the error so callers can still write the other outputs.
pub fn summarize_wannier(ws: &WannierSet, lat: &BravaisLattice) -> Result<(WannierSummary, Option<Error>)> {
    let mom = moments(ws)?;
    let (decay, err) = match decay_fit(ws, lat) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e)),
    };
    Ok((
        WannierSummary {
            centers: mom.centers,
            spreads: mom.spreads,
            total: mom.total,
            decay,
            decay_error: err.as_ref().map(|e| e.to_string()),
        },
        err,
    ))
}

/// Applies a gauge read from disk to the configured frame.
pub fn apply_gauge(frame: &BlochFrame, gauge: &GaugeField) -> Result<BlochFrame> {
    if gauge.u.len() != frame.coeffs.len() || gauge.nbands() != frame.nbands() {
        return Err(Error::ShapeMismatch(format!(
            "gauge has {} k-points of size {}, frame has {} of size {}",
            gauge.u.len(),
            gauge.nbands(),
            frame.coeffs.len(),
            frame.nbands()
        )));
    }
    let dev = gauge.unitarity_error();
    if !(dev <= 1e-8) {
        return Err(Error::NonOrthonormalInput { k_index: 0, deviation: dev });
    }
    Ok(frame.rotated(&gauge.u))
}
