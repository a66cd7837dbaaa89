use std::fs;
use std::path::{Path, PathBuf};

use isodecon_core::chernoff::{build_calibration, recalibrate_tau, ArgminConfig, REFERENCE_AINV};
use isodecon_core::inverse::{iie, iip_draws, posterior_quantile_band, EvaluationGrid};
use isodecon_core::io::{self as files, CalibrationMeta, DrawMeta};
use isodecon_core::rng::stream;
use isodecon_core::simulate::{generate_data, run_coverage, run_figure_scenario, ScenarioConfig};
use isodecon_core::volterra::{default_points, renewal_series_resolvent, solve_resolvent};
use isodecon_core::{parse_kernel_spec, DpPrior, Error, NoiseKernel, ResolventTable, Result};
use serde_json::{json, Value};

use crate::args::*;

pub const DEFAULT_SEED: u64 = 2024;

/// What a command resolved and wrote, for the run manifest.
pub struct Outcome {
    pub config: Value,
    pub seed: u64,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

fn load_scenario(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut config: ScenarioConfig = match path {
        Some(p) => files::read_json(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

pub fn resolvent(args: &ResolventArgs, seed: Option<u64>) -> Result<Outcome> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let kernel = parse_kernel_spec(&args.kernel)?;
    let points = args.points.unwrap_or_else(|| default_points(args.horizon));
    let table = solve_resolvent(&kernel, args.horizon, points)?;
    let oracle = if args.oracle {
        let xs: Vec<f64> = (0..table.len()).map(|n| table.abscissa(n)).collect();
        Some(renewal_series_resolvent(
            &kernel,
            &xs,
            args.oracle_paths,
            seed,
        )?)
    } else {
        None
    };
    ensure_parent(&args.out)?;
    files::write_resolvent_csv(&args.out, &table, oracle.as_deref())?;
    let mut config = to_value(args);
    config["N"] = json!(points);
    config["kernel_resolved"] = json!(kernel.to_string());
    Ok(Outcome {
        config,
        seed,
        outputs: vec![args.out.clone()],
        manifest: files::sidecar(&args.out, ".manifest.json"),
    })
}

struct Model {
    data: Vec<f64>,
    kernel: NoiseKernel,
    table: ResolventTable,
    grid: EvaluationGrid,
}

fn load_model(args: &ModelArgs) -> Result<Model> {
    let data = files::read_observations(&args.data)?;
    let kernel = parse_kernel_spec(&args.kernel)?;
    let table = match &args.resolvent {
        Some(path) => {
            let table = files::read_resolvent_csv(path)?;
            let mismatch = (table.values()[0] * kernel.at_zero() - 1.0).abs();
            if mismatch > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "{}: p(0) = {} does not match 1/k(0) for kernel {kernel}",
                    path.display(),
                    table.values()[0]
                )));
            }
            table
        }
        None => {
            let max = data.iter().copied().fold(0.0, f64::max);
            let horizon = args.horizon.unwrap_or(1.1 * max);
            if horizon.is_nan() || horizon <= 0.0 {
                return Err(Error::InvalidInput(
                    "cannot size a resolvent for data that are all zero".into(),
                ));
            }
            let points = args.points.unwrap_or_else(|| default_points(horizon));
            solve_resolvent(&kernel, horizon, points)?
        }
    };
    let grid = EvaluationGrid::for_data(&data, table.horizon(), args.grid)?;
    Ok(Model {
        data,
        kernel,
        table,
        grid,
    })
}

fn model_config(args: &impl serde::Serialize, model: &Model) -> Value {
    let mut config = to_value(args);
    config["kernel_resolved"] = json!(model.kernel.to_string());
    config["T_resolved"] = json!(model.table.horizon());
    config["N_resolved"] = json!(model.table.len());
    config["grid_horizon"] = json!(model.grid.horizon());
    config["n"] = json!(model.data.len());
    config
}

pub fn estimate(args: &IieArgs, seed: Option<u64>) -> Result<Outcome> {
    let model = load_model(&args.model)?;
    let step = iie(&model.data, &model.table, &model.grid)?;
    ensure_parent(&args.out)?;
    files::write_step_csv(&args.out, &step)?;
    Ok(Outcome {
        config: model_config(args, &model),
        seed: seed.unwrap_or(DEFAULT_SEED),
        outputs: vec![args.out.clone()],
        manifest: files::sidecar(&args.out, ".manifest.json"),
    })
}

pub fn posterior(args: &IipArgs, seed: Option<u64>) -> Result<Outcome> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let model = load_model(&args.model)?;
    let prior = DpPrior::new(args.precision, args.base_shape, args.base_rate)?;
    let set = iip_draws(
        &model.data,
        &prior,
        &model.table,
        &model.grid,
        args.draws,
        seed,
    )?;
    ensure_parent(&args.out)?;
    let draws = files::sidecar(&args.out, ".draws.csv");
    let mean = files::sidecar(&args.out, ".mean.csv");
    let meta = files::sidecar(&args.out, ".meta.json");
    files::write_draws_csv(&draws, &set)?;
    files::write_curve_csv(&mean, set.grid.points(), &set.mean_curve(), "mean")?;
    files::write_json(&meta, &DrawMeta::for_set(&set, Some(&model.kernel)))?;
    Ok(Outcome {
        config: model_config(args, &model),
        seed,
        outputs: vec![draws, mean, meta],
        manifest: files::sidecar(&args.out, ".manifest.json"),
    })
}

pub fn interval(args: &IntervalArgs, seed: Option<u64>) -> Result<Outcome> {
    let meta: DrawMeta = files::read_json(&files::sidecar(&args.draws, ".meta.json"))?;
    let set = files::read_draws_csv(&files::sidecar(&args.draws, ".draws.csv"), &meta)?;
    let tau = match &args.calib {
        Some(path) => recalibrate_tau(args.beta, &files::read_calibration_csv(path)?)?,
        None => {
            if args.beta.is_nan() || args.beta <= 0.0 || args.beta >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "beta must lie in (0, 1), got {}",
                    args.beta
                )));
            }
            args.beta
        }
    };
    let xs = if args.x.is_empty() {
        set.grid.points().to_vec()
    } else {
        args.x.clone()
    };
    ensure_parent(&args.out)?;
    let mut w = csv::Writer::from_path(&args.out).map_err(Error::from)?;
    w.write_record(["x", "lower", "upper", "tau"])
        .map_err(Error::from)?;
    for &x in &xs {
        let band = posterior_quantile_band(&set, x, tau)?;
        w.write_record([
            x.to_string(),
            band.lower.to_string(),
            band.upper.to_string(),
            tau.to_string(),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    let mut config = to_value(args);
    config["tau"] = json!(tau);
    Ok(Outcome {
        config,
        seed: seed.unwrap_or(meta.seed),
        outputs: vec![args.out.clone()],
        manifest: files::sidecar(&args.out, ".manifest.json"),
    })
}

pub fn calibrate(args: &CalibrateArgs, seed: Option<u64>) -> Result<Outcome> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let config = ArgminConfig {
        half_width: args.half_width,
        step: args.step,
        inner: args.inner,
        samples: args.samples,
    };
    let table = build_calibration(&config, seed)?;
    ensure_parent(&args.out)?;
    files::write_calibration_csv(&args.out, &table)?;
    let meta_path = files::sidecar(&args.out, ".meta.json");
    let meta = CalibrationMeta {
        seed,
        config,
        samples: table.sample_count,
        mean: table.mean,
        reference_levels: REFERENCE_AINV.iter().map(|(v, _)| *v).collect(),
    };
    files::write_json(&meta_path, &meta)?;
    Ok(Outcome {
        config: to_value(&config),
        seed,
        outputs: vec![args.out.clone(), meta_path],
        manifest: files::sidecar(&args.out, ".manifest.json"),
    })
}

pub fn coverage(args: &CoverageArgs, seed: Option<u64>) -> Result<Outcome> {
    let config = load_scenario(args.config.as_deref(), seed)?;
    let calib = files::read_calibration_csv(&args.calib)?;
    let report = run_coverage(&config, &calib)?;
    ensure_parent(&args.out)?;
    files::write_json(&args.out, &report)?;
    Ok(Outcome {
        config: json!({ "scenario": config, "calib": args.calib }),
        seed: config.seed,
        outputs: vec![args.out.clone()],
        manifest: files::sidecar(&args.out, ".manifest.json"),
    })
}

pub fn figures(args: &FiguresArgs, seed: Option<u64>) -> Result<Outcome> {
    let config = load_scenario(args.config.as_deref(), seed)?;
    let calib = args
        .calib
        .as_deref()
        .map(files::read_calibration_csv)
        .transpose()?;
    let bundles = run_figure_scenario(&config, calib.as_ref())?;
    fs::create_dir_all(&args.out_dir)?;
    let mut outputs = Vec::new();
    for bundle in &bundles {
        let (curves, bands) = files::write_figure_bundle(&args.out_dir, bundle)?;
        outputs.push(curves);
        outputs.push(bands);
    }
    Ok(Outcome {
        config: json!({ "scenario": config, "calib": args.calib }),
        seed: config.seed,
        outputs,
        manifest: args.out_dir.join("manifest.json"),
    })
}

pub fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<Outcome> {
    let mut config = load_scenario(args.config.as_deref(), seed)?;
    if let Some(n) = args.n {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "sample size must be at least 1".into(),
            ));
        }
        config.sample_size = n;
    }
    let kernel = config.noise_kernel()?;
    let data = generate_data(&config, &kernel, &mut stream(config.seed, &[0]));
    ensure_parent(&args.out)?;
    files::write_observations(&args.out, &data)?;
    Ok(Outcome {
        config: to_value(&config),
        seed: config.seed,
        outputs: vec![args.out.clone()],
        manifest: files::sidecar(&args.out, ".manifest.json"),
    })
}
