//! Experiment stages and the files they write.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uq_core::analytic::{log_n_grid, write_curve_csv};
use uq_core::io::{write_complex_grd, write_grd, write_pgm};
use uq_core::region::error_band;
use uq_core::surrogate::{fill_region, inpaint_region, surrounding_value, translate_roi};
use uq_core::synth::{phantom_spot_mask, SimulationReport};
use uq_core::{
    build_region, error_curve, estimate_gamma, kkt_check, kkt_threshold, knockout_test, relative_error, run_chain,
    run_map_solver, scalar_sweep, ChainOutput, CredibleRegion, GridImage, ModelKind, Posterior, Roi, SolveReport,
    SweepConfig, SweepResult, TestOutcome, UqError,
};

use crate::config::{Axis, ChainSection, ExperimentConfig, ExperimentKind, ModelKindName, SweepFamily, Target};
use crate::error::{CliError, CliResult};
use crate::manifest::{file_error, RunManifest};
use crate::problem::{build_problem, Data, Problem};

/// Scalar summary of a MAP solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub model: ModelKind,
    pub height: usize,
    pub width: usize,
    pub n: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub g_at_map: f64,
    pub data_term: f64,
    pub reg_term: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub kkt: f64,
    pub kkt_threshold: f64,
    /// Left out of experiment outputs so reruns are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

impl MapSummary {
    pub fn new(model: &Posterior, report: &SolveReport<f64>, with_time: bool) -> Self {
        let (height, width) = model.shape();
        Self {
            model: model.kind(),
            height,
            width,
            n: model.n(),
            sigma: model.sigma(),
            lambda: model.lambda(),
            g_at_map: report.g_at_map.total,
            data_term: report.g_at_map.data_term,
            reg_term: report.g_at_map.reg_term,
            iterations: report.iterations,
            converged: report.converged,
            primal_residual: report.primal_residual,
            dual_residual: report.dual_residual,
            rho: report.rho,
            tol_primal: report.tol_primal,
            tol_dual: report.tol_dual,
            kkt: kkt_check(model, report),
            kkt_threshold: kkt_threshold(report),
            wall_time_seconds: with_time.then_some(report.wall_time_seconds),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn region(&self, alpha: f64) -> CliResult<CredibleRegion> {
        Ok(build_region(alpha, self.n, self.g_at_map)?)
    }
}

/// Solves for the MAP estimate; a run that exhausts its budget is an error.
pub fn solve(cfg: &ExperimentConfig, model: &Posterior) -> CliResult<SolveReport<f64>> {
    let report = run_map_solver(model, &cfg.solver.admm(), None)?;
    if !report.converged {
        return Err(UqError::Convergence {
            solver: "MAP ADMM",
            iterations: report.iterations,
            residual: report.primal_residual.max(report.dual_residual),
            last_iterate: Vec::new(),
        }
        .into());
    }
    Ok(report)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| file_error(path, e))
}

pub fn regions_csv(alphas: &[f64], n: usize, g_at_map: f64) -> CliResult<String> {
    let mut out = String::from("alpha,n,g_at_map,tau_alpha,gamma_tilde,eta_alpha,band_upper,alpha_valid,tau_in_range\n");
    for &a in alphas {
        let r = build_region(a, n, g_at_map)?;
        let band = error_band(a, n)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            a, n, g_at_map, r.tau_alpha, r.gamma_tilde, band.eta_alpha, band.upper, r.alpha_valid, r.tau_in_range
        )
        .expect("writing to a String");
    }
    Ok(out)
}

/// Converts `[x, y, w, h]` to a row/column ROI.
pub fn roi_from_xywh(r: [usize; 4]) -> Roi {
    Roi::new(r[1], r[0], r[3], r[2])
}

/// The `size × size` window with the largest sum of `|x|`; ties go to the
/// first in row-major order.
pub fn max_mass_roi(x: &GridImage, size: usize) -> CliResult<Roi> {
    let (h, w) = x.shape();
    if size == 0 || size > h || size > w {
        return Err(CliError::config(format!("window {size} does not fit a {h}x{w} image")));
    }
    // summed-area table of |x|
    let mut s = vec![0.0; (h + 1) * (w + 1)];
    for r in 0..h {
        for c in 0..w {
            s[(r + 1) * (w + 1) + c + 1] =
                x.get(r, c).abs() + s[r * (w + 1) + c + 1] + s[(r + 1) * (w + 1) + c] - s[r * (w + 1) + c];
        }
    }
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for r in 0..=h - size {
        for c in 0..=w - size {
            let (r1, c1) = (r + size, c + size);
            let m = s[r1 * (w + 1) + c1] - s[r * (w + 1) + c1] - s[r1 * (w + 1) + c] + s[r * (w + 1) + c];
            if m > best.0 {
                best = (m, r, c);
            }
        }
    }
    Ok(Roi::new(best.1, best.2, size, size))
}

/// Pixel mask of a knockout target, with its bounding ROI when rectangular.
pub fn target_mask(target: &Target, x_map: &GridImage) -> CliResult<(Vec<bool>, Option<Roi>)> {
    let (h, w) = x_map.shape();
    match target {
        Target::PhantomSpots { dilate } => {
            if h != w {
                return Err(CliError::config("phantom-spots needs a square image"));
            }
            Ok((phantom_spot_mask(h, *dilate)?, None))
        }
        Target::Roi { roi } => {
            let roi = roi_from_xywh(*roi);
            Ok((roi.mask(h, w)?, Some(roi)))
        }
        Target::MaxMass { size } => {
            let roi = max_mass_roi(x_map, *size)?;
            Ok((roi.mask(h, w)?, Some(roi)))
        }
    }
}

/// Smallest rectangle covering a mask.
pub fn bounding_roi(mask: &[bool], h: usize, w: usize) -> Option<Roi> {
    let idx: Vec<(usize, usize)> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| (i / w, i % w)).collect();
    let r0 = idx.iter().map(|p| p.0).min()?;
    let r1 = idx.iter().map(|p| p.0).max()?;
    let c0 = idx.iter().map(|p| p.1).min()?;
    let c1 = idx.iter().map(|p| p.1).max()?;
    let roi = Roi::new(r0, c0, r1 - r0 + 1, c1 - c0 + 1);
    roi.check_within(h, w).ok().map(|_| roi)
}

pub fn knockout_rows(model: &Posterior, g_at_map: f64, surrogate: &GridImage, alphas: &[f64]) -> CliResult<Vec<TestOutcome>> {
    alphas
        .iter()
        .map(|&a| Ok(knockout_test(&build_region(a, model.n(), g_at_map)?, model, surrogate)?))
        .collect()
}

pub fn knockout_csv(rows: &[TestOutcome]) -> String {
    let mut out = String::from("alpha,surrogate_g,gamma_tilde,margin,rejected\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.alpha, r.surrogate_g, r.threshold, r.margin, r.rejected).expect("writing to a String");
    }
    out
}

/// A resolved sweep request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPlan {
    pub family: SweepFamily,
    pub axis: Axis,
    pub roi: Roi,
    pub alpha: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub tol: f64,
    pub ring: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub family: String,
    pub roi: Roi,
    pub alpha: f64,
    pub theta0: f64,
    pub lo: f64,
    pub hi: f64,
    pub result: SweepResult,
}

/// Bisects for the range of the family parameter whose surrogates stay in
/// the region.
///
/// Intensity fills the ROI with a constant `θ` starting from its mean MAP
/// value. Shift moves the ROI content by `θ` pixels over the median of its
/// surroundings, starting from 0.
pub fn run_sweep(model: &Posterior, g_at_map: f64, x_map: &GridImage, plan: &SweepPlan) -> CliResult<SweepSummary> {
    let (h, w) = x_map.shape();
    let mask = plan.roi.mask(h, w)?;
    let region = build_region(plan.alpha, model.n(), g_at_map)?;
    let cfg = SweepConfig { tol: plan.tol, ..SweepConfig::default() };
    let (name, theta0, lo, hi, result) = match plan.family {
        SweepFamily::Intensity => {
            let inside: Vec<f64> = x_map.data().iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
            let theta0 = inside.iter().sum::<f64>() / inside.len() as f64;
            let span = 2.0 * (x_map.max() - x_map.min()).max(1e-12);
            let lo = plan.lo.unwrap_or(theta0 - span);
            let hi = plan.hi.unwrap_or(theta0 + span);
            let family = |t: f64| fill_region(x_map, &mask, t);
            let r = scalar_sweep(&region, model, "intensity", family, theta0, lo, hi, cfg)?;
            ("intensity".to_string(), theta0, lo, hi, r)
        }
        SweepFamily::Shift => {
            let bg = surrounding_value(x_map, &mask, plan.ring)?;
            let reach = (match plan.axis {
                Axis::X => w,
                Axis::Y => h,
            } / 4) as f64;
            let lo = plan.lo.unwrap_or(-reach);
            let hi = plan.hi.unwrap_or(reach);
            let roi = plan.roi;
            let axis = plan.axis;
            let family = move |t: f64| match axis {
                Axis::X => translate_roi(x_map, roi, 0.0, t, bg),
                Axis::Y => translate_roi(x_map, roi, t, 0.0, bg),
            };
            let name = match axis {
                Axis::X => "shift-x",
                Axis::Y => "shift-y",
            };
            let r = scalar_sweep(&region, model, name, family, 0.0, lo, hi, cfg)?;
            (name.to_string(), 0.0, lo, hi, r)
        }
    };
    Ok(SweepSummary { family: name, roi: plan.roi, alpha: plan.alpha, theta0, lo, hi, result })
}

/// Step size used when the config leaves it open: `σ²` for models with
/// data, 1 otherwise.
pub fn default_step(model: &Posterior) -> f64 {
    if model.kind() == ModelKind::GenGaussian {
        1.0
    } else {
        model.sigma() * model.sigma()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub samples: usize,
    pub acceptance_rate: f64,
    pub burn_in_acceptance: f64,
    pub final_delta: f64,
    pub ess_estimate: f64,
    pub g_mean: f64,
}

pub fn sample_chain(model: &Posterior, x0: &GridImage, chain: &ChainSection, seed: u64) -> CliResult<(ChainOutput, ChainSummary)> {
    let cfg = chain.chain_config(default_step(model), seed);
    let out = run_chain(model, &cfg, Some(x0))?;
    let summary = ChainSummary {
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        seed: cfg.seed,
        samples: out.g_samples.len(),
        acceptance_rate: out.acceptance_rate,
        burn_in_acceptance: out.burn_in_acceptance,
        final_delta: out.final_delta,
        ess_estimate: out.ess_estimate,
        g_mean: out.g_samples.iter().sum::<f64>() / out.g_samples.len() as f64,
    };
    Ok((out, summary))
}

pub fn gamma_csv(out: &ChainOutput, alphas: &[f64], n: usize, g_at_map: f64) -> CliResult<String> {
    let mut text = String::from("alpha,gamma_hat,mc_std_error,gamma_tilde,relative_error\n");
    for &a in alphas {
        let est = estimate_gamma(out, a)?;
        let region = build_region(a, n, g_at_map)?;
        let rel = relative_error(&region, &est)?;
        writeln!(text, "{},{},{},{},{}", a, est.gamma_hat, est.mc_std_error, region.gamma_tilde, rel).expect("writing to a String");
    }
    Ok(text)
}

pub fn write_problem_files(problem: &Problem, dir: &Path) -> CliResult<()> {
    if let Some(t) = &problem.truth {
        write_grd(t, dir.join("truth.grd"))?;
    }
    match &problem.data {
        Data::Fourier(y) => write_complex_grd(y, dir.join("observation.grd"))?,
        Data::Spatial(y) => write_grd(y, dir.join("observation.grd"))?,
        Data::Absent => {}
    }
    if let Some(rep) = &problem.simulation {
        write_json::<SimulationReport>(&dir.join("simulation.json"), rep)?;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| file_error(dir, e))
}

/// Runs every configured stage, writing outputs and `manifest.json` into
/// `output_dir`. The manifest is written on failure too.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunManifest> {
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    let mut manifest = RunManifest::new(cfg);
    let kind = match (cfg.experiment, &cfg.model) {
        (Some(k), _) => k,
        (None, Some(m)) if m.kind == ModelKindName::TvTomography => ExperimentKind::Mri,
        (None, _) => ExperimentKind::Deconv,
    };
    let result = match kind {
        ExperimentKind::Asymptotics => asymptotics_stages(cfg, &dir, &mut manifest),
        ExperimentKind::Mri | ExperimentKind::Deconv => imaging_stages(cfg, &dir, &mut manifest),
    };
    manifest.finish(&result);
    manifest.write(&dir)?;
    result.map(|()| manifest)
}

fn asymptotics_stages(cfg: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> CliResult<()> {
    let a = &cfg.asymptotics;
    manifest.stage("asymptotics", || {
        let grid = log_n_grid(a.nmax);
        for &q in &a.q {
            let points = error_curve(q, a.lambda, &grid, &cfg.alpha_list)?;
            let mut buf = Vec::new();
            write_curve_csv(&points, &mut buf)?;
            let path = dir.join(format!("asymptotics_q{q}.csv"));
            std::fs::write(&path, buf).map_err(|e| file_error(&path, e))?;
        }
        Ok(())
    })
}

fn imaging_stages(cfg: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> CliResult<()> {
    let problem = manifest.stage("problem", || {
        let p = build_problem(cfg)?;
        write_problem_files(&p, dir)?;
        Ok(p)
    })?;
    manifest.simulation = problem.simulation;
    let model = &problem.model;

    let report = manifest.stage("map", || {
        let report = solve(cfg, model)?;
        write_grd(&report.x_map, dir.join("x_map.grd"))?;
        if report.x_map.height() > 1 {
            write_pgm(&report.x_map, dir.join("x_map.pgm"), 16)?;
        }
        write_json(&dir.join("map_report.json"), &MapSummary::new(model, &report, false))?;
        Ok(report)
    })?;
    let g_map = report.g_at_map.total;
    let x_map = &report.x_map;

    manifest.stage("regions", || write_text(&dir.join("regions.csv"), &regions_csv(&cfg.alpha_list, model.n(), g_map)?))?;

    let mut target_roi = None;
    if let Some(k) = &cfg.knockout {
        target_roi = manifest.stage("knockout", || {
            let (mask, roi) = target_mask(&k.target()?, x_map)?;
            let surrogate = inpaint_region(x_map, &mask, k.ring)?;
            write_grd(&surrogate, dir.join("surrogate.grd"))?;
            let rows = knockout_rows(model, g_map, &surrogate, &cfg.alpha_list)?;
            write_text(&dir.join("knockout.csv"), &knockout_csv(&rows))?;
            let (h, w) = x_map.shape();
            Ok(roi.or_else(|| bounding_roi(&mask, h, w)))
        })?;
    }

    if let Some(s) = &cfg.sweep {
        manifest.stage("sweep", || {
            let roi = match (s.roi, target_roi) {
                (Some(r), _) => roi_from_xywh(r),
                (None, Some(r)) => r,
                (None, None) => return Err(CliError::config("sweep needs sweep.roi or a knockout target")),
            };
            let alpha = s.alpha.unwrap_or_else(|| cfg.alpha_list.iter().copied().fold(f64::INFINITY, f64::min));
            let ring = cfg.knockout.as_ref().map_or(2, |k| k.ring);
            let plan = SweepPlan { family: s.family, axis: s.axis, roi, alpha, lo: s.lo, hi: s.hi, tol: s.tol, ring };
            write_json(&dir.join("sweep.json"), &run_sweep(model, g_map, x_map, &plan)?)
        })?;
    }

    if let Some(c) = &cfg.chain {
        manifest.stage("chain", || {
            let (out, summary) = sample_chain(model, x_map, c, cfg.seed)?;
            write_json(&dir.join("chain_summary.json"), &summary)?;
            write_text(&dir.join("gamma.csv"), &gamma_csv(&out, &cfg.alpha_list, model.n(), g_map)?)?;
            let mut g = String::from("g\n");
            for v in &out.g_samples {
                writeln!(g, "{v}").expect("writing to a String");
            }
            write_text(&dir.join("chain_g.csv"), &g)
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_mass_finds_the_block() {
        let mut x = GridImage::zeros(10, 10);
        for r in 6..9 {
            for c in 2..5 {
                x.set(r, c, -1.0);
            }
        }
        x.set(0, 0, 2.0);
        let roi = max_mass_roi(&x, 3).unwrap();
        assert_eq!(roi, Roi::new(6, 2, 3, 3));
        assert!(max_mass_roi(&x, 11).is_err());
    }

    #[test]
    fn bounding_box_of_mask() {
        let mut m = vec![false; 20];
        m[6] = true; // (1, 1)
        m[13] = true; // (2, 3)
        assert_eq!(bounding_roi(&m, 4, 5), Some(Roi::new(1, 1, 2, 3)));
        assert_eq!(bounding_roi(&[false; 4], 2, 2), None);
    }

    #[test]
    fn roi_order() {
        assert_eq!(roi_from_xywh([1, 2, 3, 4]), Roi::new(2, 1, 4, 3));
    }

    #[test]
    fn regions_table_matches_formula() {
        let text = regions_csv(&[0.1], 100, 5.0).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        let tau = (16.0 * 30f64.ln() / 100.0).sqrt();
        let gamma: f64 = row[4].parse().unwrap();
        assert!((gamma - (5.0 + 100.0 * (tau + 1.0))).abs() < 1e-9);
    }
}
