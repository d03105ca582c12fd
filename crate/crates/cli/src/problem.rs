//! Builds the posterior, ground truth and observation described by a config.

use uq_core::io::{read_complex_grd, read_image};
use uq_core::model::{Forward, Observation};
use uq_core::operators::{Convolution, FourierSampling, PointSpreadFunction, SamplingMask};
use uq_core::synth::{make_phantom, make_sparse_scene, sigma_for_snr, simulate_observation, SimulationReport};
use uq_core::{ComplexImage, GridImage, Posterior};

use crate::config::{ExperimentConfig, MaskType, ModelKindName, PsfBuiltin, SyntheticTruth};
use crate::error::{CliError, CliResult};

/// Measured data, in the domain of the forward operator.
#[derive(Debug, Clone)]
pub enum Data {
    Fourier(ComplexImage),
    Spatial(GridImage),
    Absent,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub model: Posterior,
    pub truth: Option<GridImage>,
    pub data: Data,
    /// Present when the observation was simulated here.
    pub simulation: Option<SimulationReport>,
}

pub fn sampling_mask(cfg: &ExperimentConfig, h: usize, w: usize) -> CliResult<SamplingMask> {
    let m = &cfg.mask;
    Ok(match m.kind {
        MaskType::Radial => SamplingMask::radial(h, w, m.lines, m.seed)?,
        MaskType::Uniform => SamplingMask::uniform(h, w, m.fraction, m.seed)?,
    })
}

pub fn point_spread(cfg: &ExperimentConfig) -> CliResult<PointSpreadFunction<f64>> {
    let p = &cfg.psf;
    if let Some(path) = &p.path {
        return Ok(PointSpreadFunction::new(read_image(path)?, true)?);
    }
    Ok(match p.builtin {
        PsfBuiltin::Gaussian => PointSpreadFunction::gaussian(p.size, p.width)?,
        PsfBuiltin::AiryLike => PointSpreadFunction::airy_like(p.size, p.width)?,
    })
}

/// Ground truth from `data.truth_path`, or synthesized.
pub fn ground_truth(cfg: &ExperimentConfig, kind: ModelKindName) -> CliResult<GridImage> {
    if let Some(path) = &cfg.data.truth_path {
        return Ok(read_image(path)?);
    }
    let which = cfg.data.synthetic.unwrap_or(match kind {
        ModelKindName::TvTomography => SyntheticTruth::Phantom,
        _ => SyntheticTruth::Scene,
    });
    Ok(match which {
        SyntheticTruth::Phantom => make_phantom(cfg.data.size)?,
        SyntheticTruth::Scene => make_sparse_scene(cfg.data.size, cfg.data.sources, cfg.data.scene_seed)?,
    })
}

/// Noise level from `model.sigma`, else from `data.snr_db` and the clean data.
fn noise_level(cfg: &ExperimentConfig, truth: Option<&GridImage>, forward: &Forward<f64>) -> CliResult<f64> {
    let m = cfg.model()?;
    if let Some(s) = m.sigma {
        return Ok(s);
    }
    let snr = cfg.data.snr_db.ok_or_else(|| CliError::config("set model.sigma or data.snr_db"))?;
    let truth = truth.ok_or_else(|| CliError::config("data.snr_db needs a ground truth to set sigma"))?;
    let sigma = match forward {
        Forward::Sampling(op) => {
            // variance over the real components of the kept coefficients
            let clean = op.apply(truth)?;
            let vals: Vec<f64> = clean
                .data()
                .iter()
                .zip(op.mask().keep())
                .filter(|(_, &k)| k)
                .flat_map(|(z, _)| [z.re, z.im])
                .collect();
            let flat = GridImage::new(1, vals.len(), vals)?;
            sigma_for_snr(&flat, snr)
        }
        Forward::Blur(op) => sigma_for_snr(&op.apply(truth)?, snr),
        Forward::Identity => sigma_for_snr(truth, snr),
        Forward::Absent => return Err(CliError::config("data.snr_db needs a forward operator")),
    };
    if !(sigma > 0.0) {
        return Err(CliError::config("ground truth is constant, so data.snr_db cannot set sigma"));
    }
    Ok(sigma)
}

fn noise_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.data.noise_seed.unwrap_or(cfg.seed)
}

/// Reads the observation or simulates it from the ground truth, then builds
/// the posterior.
pub fn build_problem(cfg: &ExperimentConfig) -> CliResult<Problem> {
    cfg.check_paths()?;
    let m = cfg.model()?;
    match m.kind {
        ModelKindName::GenGaussian => {
            let q = m.q.ok_or_else(|| CliError::config("gen-gaussian needs model.q"))?;
            // one row of `data.size` iid coordinates
            let model = Posterior::gen_gaussian(1, cfg.data.size, q, m.lambda)?;
            Ok(Problem { model, truth: None, data: Data::Absent, simulation: None })
        }
        ModelKindName::TvTomography => {
            let (truth, y, simulation) = if let Some(path) = &cfg.data.observation_path {
                let y = read_complex_grd(path)?;
                let truth = cfg.data.truth_path.as_ref().map(read_image).transpose()?;
                (truth, y, None)
            } else {
                let truth = ground_truth(cfg, m.kind)?;
                let (h, w) = truth.shape();
                let forward = Forward::Sampling(FourierSampling::new(sampling_mask(cfg, h, w)?));
                let sigma = noise_level(cfg, Some(&truth), &forward)?;
                let (obs, rep) = simulate_observation(&truth, &forward, sigma, noise_seed(cfg))?;
                let Observation::Fourier(y) = obs else {
                    unreachable!("Fourier sampling yields Fourier data")
                };
                (Some(truth), y, Some(rep))
            };
            let (h, w) = y.shape();
            let mask = sampling_mask(cfg, h, w)?;
            let sigma = match simulation {
                Some(rep) => rep.sigma,
                None => noise_level(cfg, truth.as_ref(), &Forward::Sampling(FourierSampling::new(mask.clone())))?,
            };
            let model = Posterior::tv_tomography(mask, y.clone(), sigma, m.lambda)?.with_nonneg(m.nonneg);
            Ok(Problem { model, truth, data: Data::Fourier(y), simulation })
        }
        ModelKindName::L1Deconvolution | ModelKindName::L1Denoising => {
            let blur = m.kind == ModelKindName::L1Deconvolution;
            let psf = if blur { Some(point_spread(cfg)?) } else { None };
            let forward_for = |h: usize, w: usize| -> CliResult<Forward<f64>> {
                Ok(match &psf {
                    Some(p) => Forward::Blur(Convolution::new(p, h, w)?),
                    None => Forward::Identity,
                })
            };
            let (truth, y, sigma, simulation) = if let Some(path) = &cfg.data.observation_path {
                let y = read_image(path)?;
                let truth = cfg.data.truth_path.as_ref().map(read_image).transpose()?;
                let (h, w) = y.shape();
                let sigma = noise_level(cfg, truth.as_ref(), &forward_for(h, w)?)?;
                (truth, y, sigma, None)
            } else {
                let truth = ground_truth(cfg, m.kind)?;
                let (h, w) = truth.shape();
                let forward = forward_for(h, w)?;
                let sigma = noise_level(cfg, Some(&truth), &forward)?;
                let (obs, rep) = simulate_observation(&truth, &forward, sigma, noise_seed(cfg))?;
                let Observation::Spatial(y) = obs else {
                    unreachable!("spatial operators yield spatial data")
                };
                (Some(truth), y, sigma, Some(rep))
            };
            let model = match &psf {
                Some(p) => Posterior::l1_deconvolution(p, y.clone(), sigma, m.lambda)?,
                None => Posterior::l1_denoising(y.clone(), sigma, m.lambda)?,
            }
            .with_nonneg(m.nonneg);
            Ok(Problem { model, truth, data: Data::Spatial(y), simulation })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use uq_core::ModelKind;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(text).unwrap()
    }

    #[test]
    fn simulated_tomography_is_seeded() {
        let c = cfg(r#"
            experiment = "mri"
            seed = 3
            [model]
            kind = "tv-tomography"
            sigma = 0.01
            lambda = 10.0
            [data]
            size = 32
        "#);
        let a = build_problem(&c).unwrap();
        let b = build_problem(&c).unwrap();
        assert_eq!(a.model.kind(), ModelKind::TvTomography);
        assert_eq!(a.model.n(), 32 * 32);
        let (Data::Fourier(ya), Data::Fourier(yb)) = (&a.data, &b.data) else { panic!("expected Fourier data") };
        assert_eq!(ya, yb);
        assert_eq!(a.simulation.unwrap().sigma, 0.01);
    }

    #[test]
    fn snr_sets_sigma() {
        let c = cfg(r#"
            experiment = "deconv"
            [model]
            kind = "l1-deconvolution"
            lambda = 10.0
            [data]
            size = 32
            sources = 20
            snr_db = 20.0
        "#);
        let p = build_problem(&c).unwrap();
        let rep = p.simulation.unwrap();
        assert!((rep.snr_db - 20.0).abs() < 1e-9, "{}", rep.snr_db);
        assert_eq!(p.model.sigma(), rep.sigma);
    }

    #[test]
    fn gen_gaussian_has_no_data() {
        let c = cfg(r#"
            [model]
            kind = "gen-gaussian"
            lambda = 1.0
            q = 2.0
            [data]
            size = 100
        "#);
        let p = build_problem(&c).unwrap();
        assert_eq!(p.model.n(), 100);
        assert!(matches!(p.data, Data::Absent));
    }

    #[test]
    fn missing_observation_file() {
        let c = cfg(r#"
            [model]
            kind = "l1-denoising"
            sigma = 0.1
            lambda = 1.0
            [data]
            observation_path = "/nonexistent/y.grd"
        "#);
        assert!(matches!(build_problem(&c), Err(CliError::Config(_))));
    }
}
