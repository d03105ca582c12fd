//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uq_core::{AdmmConfig, ChainConfig, SweepConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Mri,
    Deconv,
    Asymptotics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKindName {
    TvTomography,
    L1Deconvolution,
    L1Denoising,
    GenGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKindName,
    /// Noise standard deviation. May be omitted when `data.snr_db` is set.
    pub sigma: Option<f64>,
    pub lambda: f64,
    #[serde(default)]
    pub nonneg: bool,
    /// Exponent of the generalized Gaussian family.
    pub q: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskType {
    Radial,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    #[serde(rename = "type")]
    pub kind: MaskType,
    pub fraction: f64,
    pub lines: usize,
    pub seed: u64,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self { kind: MaskType::Radial, fraction: 0.15, lines: 10, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsfBuiltin {
    Gaussian,
    AiryLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfSection {
    pub builtin: PsfBuiltin,
    /// Kernel image (GRD or PGM); overrides `builtin`.
    pub path: Option<PathBuf>,
    pub width: f64,
    pub size: usize,
}

impl Default for PsfSection {
    fn default() -> Self {
        Self { builtin: PsfBuiltin::Gaussian, path: None, width: 2.5, size: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticTruth {
    Phantom,
    Scene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub observation_path: Option<PathBuf>,
    pub truth_path: Option<PathBuf>,
    /// Synthetic ground truth used when no observation is given; defaults
    /// to the phantom for tomography and the sparse scene otherwise.
    pub synthetic: Option<SyntheticTruth>,
    pub size: usize,
    pub sources: usize,
    pub scene_seed: u64,
    /// Seed of the simulated noise; defaults to the top-level seed.
    pub noise_seed: Option<u64>,
    /// Sets σ from the clean forward image when `model.sigma` is absent.
    pub snr_db: Option<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            observation_path: None,
            truth_path: None,
            synthetic: None,
            size: 64,
            sources: 100,
            scene_seed: 1,
            noise_seed: None,
            snr_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub rho: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub adapt_rho: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = AdmmConfig::<f64>::default();
        Self { rho: d.rho, max_iters: d.max_iters, tol: d.tol_primal, adapt_rho: d.adapt_rho }
    }
}

impl SolverSection {
    pub fn admm(&self) -> AdmmConfig<f64> {
        AdmmConfig {
            rho: self.rho,
            max_iters: self.max_iters,
            tol_primal: self.tol,
            tol_dual: self.tol,
            record_trace: false,
            adapt_rho: self.adapt_rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial step; defaults to σ² (1 for models without data).
    pub step_delta: Option<f64>,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
    pub target_acceptance: Option<f64>,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        let d = ChainConfig::default();
        Self {
            iterations: d.iterations,
            burn_in: d.burn_in,
            thin: d.thin,
            step_delta: None,
            seed: None,
            target_acceptance: d.target_acceptance,
            inner_tol: d.inner_tol,
            inner_max_iters: d.inner_max_iters,
        }
    }
}

impl ChainSection {
    pub fn chain_config(&self, default_delta: f64, default_seed: u64) -> ChainConfig {
        ChainConfig {
            step_delta: self.step_delta.unwrap_or(default_delta),
            moreau_lambda: None,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed.unwrap_or(default_seed),
            target_acceptance: self.target_acceptance,
            inner_tol: self.inner_tol,
            inner_max_iters: self.inner_max_iters,
        }
    }
}

/// Where a knockout or sweep acts.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// The three small spots of the phantom, grown by `dilate` pixels.
    PhantomSpots { dilate: usize },
    /// Rectangle `[x, y, w, h]` (column, row, width, height).
    Roi { roi: [usize; 4] },
    /// The `size × size` window holding the most absolute MAP mass.
    MaxMass { size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    PhantomSpots,
    Roi,
    MaxMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnockoutSection {
    pub region: RegionKind,
    #[serde(default = "one")]
    pub dilate: usize,
    pub roi: Option<[usize; 4]>,
    #[serde(default = "twelve")]
    pub size: usize,
    /// Width of the ring whose median fills the knocked-out pixels.
    #[serde(default = "two")]
    pub ring: usize,
}

impl KnockoutSection {
    pub fn target(&self) -> CliResult<Target> {
        Ok(match self.region {
            RegionKind::PhantomSpots => Target::PhantomSpots { dilate: self.dilate },
            RegionKind::Roi => Target::Roi {
                roi: self.roi.ok_or_else(|| CliError::config("knockout region \"roi\" needs knockout.roi"))?,
            },
            RegionKind::MaxMass => Target::MaxMass { size: self.size },
        })
    }
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn twelve() -> usize {
    12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    Intensity,
    Shift,
}

/// Direction of a shift sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub family: SweepFamily,
    #[serde(default)]
    pub axis: Axis,
    /// Rectangle `[x, y, w, h]`; defaults to the knockout target's bounding box.
    pub roi: Option<[usize; 4]>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    #[serde(default = "default_sweep_tol")]
    pub tol: f64,
    /// Level at which the sweep runs; defaults to the smallest of `alpha_list`.
    pub alpha: Option<f64>,
}

fn default_sweep_tol() -> f64 {
    SweepConfig::default().tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticsSection {
    pub q: Vec<f64>,
    pub lambda: f64,
    pub nmax: usize,
}

impl Default for AsymptoticsSection {
    fn default() -> Self {
        Self { q: vec![1.0, 2.0], lambda: 1.0, nmax: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_alphas")]
    pub alpha_list: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub mask: MaskSection,
    #[serde(default)]
    pub psf: PsfSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub chain: Option<ChainSection>,
    pub knockout: Option<KnockoutSection>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub asymptotics: AsymptoticsSection,
}

fn default_alphas() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.2]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("uq-out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate_values()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::File { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [&mut self.data.observation_path, &mut self.data.truth_path, &mut self.psf.path]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn model(&self) -> CliResult<&ModelSection> {
        self.model.as_ref().ok_or_else(|| CliError::config("missing [model] section"))
    }

    fn validate_values(&self) -> CliResult<()> {
        if self.alpha_list.is_empty() {
            return Err(CliError::config("alpha_list must not be empty"));
        }
        if let Some(a) = self.alpha_list.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(CliError::config(format!("alpha {a} outside (0, 1)")));
        }
        let needs_model = self.experiment != Some(ExperimentKind::Asymptotics);
        if needs_model && self.model.is_none() {
            return Err(CliError::config("missing [model] section"));
        }
        if let Some(m) = &self.model {
            if !(m.lambda > 0.0) {
                return Err(CliError::config(format!("model.lambda must be positive, got {}", m.lambda)));
            }
            if let Some(s) = m.sigma {
                if !(s > 0.0) {
                    return Err(CliError::config(format!("model.sigma must be positive, got {s}")));
                }
            } else if m.kind != ModelKindName::GenGaussian && self.data.snr_db.is_none() {
                return Err(CliError::config("set model.sigma or data.snr_db"));
            }
            if m.kind == ModelKindName::GenGaussian && m.q.is_none() {
                return Err(CliError::config("gen-gaussian needs model.q"));
            }
        }
        if self.asymptotics.q.iter().any(|q| !(*q > 0.0)) || !(self.asymptotics.lambda > 0.0) {
            return Err(CliError::config("asymptotics q and lambda must be positive"));
        }
        if let Some(k) = &self.knockout {
            k.target()?;
        }
        if let Some(s) = &self.sweep {
            if let (Some(lo), Some(hi)) = (s.lo, s.hi) {
                if !(lo < hi) {
                    return Err(CliError::config(format!("sweep range [{lo}, {hi}] is empty")));
                }
            }
            if let Some(a) = s.alpha {
                if !(a > 0.0 && a < 1.0) {
                    return Err(CliError::config(format!("sweep alpha {a} outside (0, 1)")));
                }
            }
        }
        Ok(())
    }

    /// Checks that every referenced input file exists.
    pub fn check_paths(&self) -> CliResult<()> {
        for p in [&self.data.observation_path, &self.data.truth_path, &self.psf.path].into_iter().flatten() {
            if !p.is_file() {
                return Err(CliError::config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Parses `x,y,w,h`.
pub fn parse_roi(text: &str) -> CliResult<[usize; 4]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::config(format!("ROI must be x,y,w,h, got {text:?}")));
    }
    let mut out = [0usize; 4];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| CliError::config(format!("bad ROI component {p:?}")))?;
    }
    if out[2] == 0 || out[3] == 0 {
        return Err(CliError::config("ROI width and height must be positive"));
    }
    Ok(out)
}

/// Parses a comma-separated list of levels in (0, 1).
pub fn parse_alphas(text: &str) -> CliResult<Vec<f64>> {
    let out: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| CliError::config(format!("bad alpha {p:?}"))))
        .collect::<CliResult<_>>()?;
    if out.is_empty() || out.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(CliError::config(format!("alphas must lie in (0, 1): {text:?}")));
    }
    Ok(out)
}
