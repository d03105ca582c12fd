use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use uq_core::analytic::{log_n_grid, write_curve_csv};
use uq_core::io::{read_grd, read_image, write_grd, write_pgm};
use uq_core::synth::{make_phantom, make_sparse_scene};
use uq_core::{error_curve, knockout_test, GridImage};

use uq_cli::config::{parse_alphas, parse_roi, Axis, ChainSection, ExperimentConfig, SweepFamily};
use uq_cli::error::{CliError, CliResult, EXIT_INVALID};
use uq_cli::experiment::{
    gamma_csv, roi_from_xywh, run_sweep, sample_chain, solve, write_json, write_problem_files, write_text, MapSummary,
    SweepPlan,
};
use uq_cli::manifest::file_error;
use uq_cli::problem::build_problem;
use uq_cli::run_experiment;

/// Approximate HPD credible regions for imaging inverse problems.
///
/// UQ_THREADS caps the worker threads.
#[derive(Parser)]
#[command(name = "uq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Intensity,
    Shift,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the test phantom (GRD, or PGM by extension).
    Phantom {
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes a sparse scene of unit impulses.
    Scene {
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 100)]
        sources: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulates the observation described by a config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Computes the MAP estimate and prints its report.
    Map {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        save_map: Option<PathBuf>,
    },
    /// Prints the approximate region for a MAP report.
    Region {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        map_report: PathBuf,
    },
    /// Knockout test of a surrogate image.
    Test {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        map_report: PathBuf,
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    /// Bisects a one-parameter surrogate family against the region.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        map_report: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// x,y,w,h
        #[arg(long)]
        roi: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "x")]
        axis: AxisArg,
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Runs px-MALA from the MAP estimate and estimates the true thresholds.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        burn: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alpha_list: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Writes the relative error curve of the generalized Gaussian family.
    Asymptotics {
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value = "0.01,0.05,0.1,0.2")]
        alphas: String,
        #[arg(long, default_value_t = 10_000)]
        nmax: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs a full experiment and writes its manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID as u8 } else { 0 });
        }
    };
    let result = init_threads().and_then(|()| dispatch(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("UQ_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("UQ_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot start {n} threads: {e}")))
}

fn check_alpha(alpha: f64) -> CliResult<f64> {
    parse_alphas(&alpha.to_string()).map(|_| alpha)
}

fn save_image(img: &GridImage, path: &Path) -> CliResult<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        write_pgm(img, path, 16)?;
    } else {
        write_grd(img, path)?;
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Phantom { size, out } => save_image(&make_phantom(size)?, &out),
        Command::Scene { size, sources, seed, out } => save_image(&make_sparse_scene(size, sources, seed)?, &out),
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problem = build_problem(&cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| file_error(&out, e))?;
            write_problem_files(&problem, &out)
        }
        Command::Map { config, out, save_map } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problem = build_problem(&cfg)?;
            let report = solve(&cfg, &problem.model)?;
            let summary = MapSummary::new(&problem.model, &report, true);
            if let Some(p) = save_map {
                save_image(&report.x_map, &p)?;
            }
            match out {
                Some(p) => write_json(&p, &summary),
                None => print_json(&summary),
            }
        }
        Command::Region { alpha, map_report } => {
            let summary = MapSummary::load(&map_report)?;
            let region = summary.region(check_alpha(alpha)?)?;
            for w in region.warnings() {
                eprintln!("uq: warning: {w}");
            }
            print_json(&region)
        }
        Command::Test { config, map_report, surrogate, alpha } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problem = build_problem(&cfg)?;
            let summary = MapSummary::load(&map_report)?;
            let region = summary.region(check_alpha(alpha)?)?;
            let img = read_image(&surrogate)?;
            print_json(&knockout_test(&region, &problem.model, &img)?)
        }
        Command::Sweep { config, map_report, map, family, roi, alpha, axis, lo, hi, tol } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problem = build_problem(&cfg)?;
            let summary = MapSummary::load(&map_report)?;
            let x_map = read_grd(&map)?;
            let plan = SweepPlan {
                family: match family {
                    FamilyArg::Intensity => SweepFamily::Intensity,
                    FamilyArg::Shift => SweepFamily::Shift,
                },
                axis: match axis {
                    AxisArg::X => Axis::X,
                    AxisArg::Y => Axis::Y,
                },
                roi: roi_from_xywh(parse_roi(&roi)?),
                alpha: check_alpha(alpha)?,
                lo,
                hi,
                tol,
                ring: cfg.knockout.as_ref().map_or(2, |k| k.ring),
            };
            print_json(&run_sweep(&problem.model, summary.g_at_map, &x_map, &plan)?)
        }
        Command::Sample { config, iters, burn, thin, seed, alpha_list, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mut chain = cfg.chain.clone().unwrap_or_else(ChainSection::default);
            if let Some(v) = iters {
                chain.iterations = v;
            }
            if let Some(v) = burn {
                chain.burn_in = v;
            }
            if let Some(v) = thin {
                chain.thin = v;
            }
            if seed.is_some() {
                chain.seed = seed;
            }
            let alphas = match alpha_list {
                Some(s) => parse_alphas(&s)?,
                None => cfg.alpha_list.clone(),
            };
            let problem = build_problem(&cfg)?;
            let report = solve(&cfg, &problem.model)?;
            let (out, summary) = sample_chain(&problem.model, &report.x_map, &chain, cfg.seed)?;
            let table = gamma_csv(&out, &alphas, problem.model.n(), report.g_at_map.total)?;
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| file_error(&dir, e))?;
                    write_json(&dir.join("chain_summary.json"), &summary)?;
                    write_text(&dir.join("gamma.csv"), &table)
                }
                None => {
                    print_json(&summary)?;
                    print!("{table}");
                    Ok(())
                }
            }
        }
        Command::Asymptotics { q, lambda, alphas, nmax, out } => {
            let alphas = parse_alphas(&alphas)?;
            let points = error_curve(q, lambda, &log_n_grid(nmax), &alphas)?;
            let mut buf = Vec::new();
            write_curve_csv(&points, &mut buf)?;
            std::fs::write(&out, buf).map_err(|e| file_error(&out, e))
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let manifest = run_experiment(&cfg)?;
            println!("{}", cfg.output_dir.join(uq_cli::manifest::MANIFEST_NAME).display());
            for s in &manifest.stages {
                eprintln!("uq: {:<12} {:>9.2} s", s.name, s.wall_time_seconds);
            }
            Ok(())
        }
    }
}
