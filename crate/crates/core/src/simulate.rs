//! Simulation studies: data `Z = X + Y` with `X ~ Exp(rate)`, coverage of
//! recalibrated credible intervals, and curve bundles for plotting.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chernoff::{limiting_coverage, recalibrate_tau, CalibrationTable};
use crate::error::{Error, Result};
use crate::inverse::{
    iie, iip_draws, posterior_quantile_band, prior_draws, EvaluationGrid, DEFAULT_GRID_POINTS,
};
use crate::kernels::{parse_kernel_spec, NoiseKernel, BUILTIN_NAMES};
use crate::measures::DpPrior;
use crate::rng::{derive_seed, stream};
use crate::volterra::{default_points, solve_resolvent, ResolventTable};

/// One simulation scenario. Every field has a default, so a JSON config
/// only needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Rate of the exponential signal law `F₀`.
    pub signal_rate: f64,
    /// Kernel spec string, e.g. `"lomax:c=10,lambda=1"`.
    pub kernel: String,
    /// Kernels for figure bundles; all six built-ins when empty.
    pub figure_kernels: Vec<String>,
    pub sample_size: usize,
    /// Coverage probes; the signal quartiles when empty.
    pub probes: Vec<f64>,
    /// Target miscoverage.
    pub beta: f64,
    /// Posterior draws per data set.
    pub draws: usize,
    /// Prior draws per figure bundle.
    pub prior_draws: usize,
    pub replications: usize,
    pub seed: u64,
    pub prior: DpPrior,
    pub resolvent_horizon: f64,
    /// Resolvent grid size; derived from the horizon when absent.
    pub resolvent_points: Option<usize>,
    pub grid_points: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            signal_rate: 1.2,
            kernel: "exp:rate=1".into(),
            figure_kernels: Vec::new(),
            sample_size: 200,
            probes: Vec::new(),
            beta: 0.05,
            draws: 1000,
            prior_draws: 20,
            replications: 200,
            seed: 2024,
            prior: DpPrior::default(),
            resolvent_horizon: 20.0,
            resolvent_points: None,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.signal_rate.is_finite() && self.signal_rate > 0.0) {
            return bad(format!(
                "signal_rate must be positive, got {}",
                self.signal_rate
            ));
        }
        if self.sample_size == 0 {
            return bad("sample_size must be at least 1".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.draws < 2 {
            return bad(format!("draws must be at least 2, got {}", self.draws));
        }
        if !(self.resolvent_horizon.is_finite() && self.resolvent_horizon > 0.0) {
            return bad(format!(
                "resolvent_horizon must be positive, got {}",
                self.resolvent_horizon
            ));
        }
        if self.grid_points < 2 {
            return bad(format!(
                "grid_points must be at least 2, got {}",
                self.grid_points
            ));
        }
        if let Some(x) = self.probes.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return bad(format!("probe {x} must be positive"));
        }
        self.prior
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.noise_kernel()?;
        Ok(())
    }

    pub fn noise_kernel(&self) -> Result<NoiseKernel> {
        parse_kernel_spec(&self.kernel)
    }

    /// `F₀(x) = 1 − e^{−rate·x}`.
    pub fn signal_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.signal_rate * x).exp_m1()
        }
    }

    pub fn signal_quantile(&self, q: f64) -> f64 {
        -(-q).ln_1p() / self.signal_rate
    }

    /// Configured probes, or the signal quartiles.
    pub fn probe_points(&self) -> Vec<f64> {
        if self.probes.is_empty() {
            [0.25, 0.5, 0.75]
                .iter()
                .map(|&q| self.signal_quantile(q))
                .collect()
        } else {
            self.probes.clone()
        }
    }

    pub fn resolvent_for(&self, kernel: &NoiseKernel) -> Result<ResolventTable> {
        let points = self
            .resolvent_points
            .unwrap_or_else(|| default_points(self.resolvent_horizon));
        solve_resolvent(kernel, self.resolvent_horizon, points)
    }
}

/// `n` observations `Xᵢ + Yᵢ`.
pub fn generate_data<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    kernel: &NoiseKernel,
    rng: &mut R,
) -> Vec<f64> {
    let signal = Exp::new(config.signal_rate).expect("validated rate");
    (0..config.sample_size)
        .map(|_| {
            let x = signal.sample(rng);
            x + kernel.sample(rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCoverage {
    pub x: f64,
    pub truth: f64,
    /// Coverage of the recalibrated interval.
    pub coverage: f64,
    pub std_error: f64,
    pub mean_width: f64,
    /// Coverage of the interval with nominal credibility `1 − β`.
    pub nominal_coverage: f64,
    pub nominal_std_error: f64,
    pub nominal_mean_width: f64,
    /// Per-replication decisions for the recalibrated interval.
    pub hits: Vec<bool>,
    pub nominal_hits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: ScenarioConfig,
    pub tau: f64,
    /// Limiting coverage of the uncalibrated `(1 − β)` interval under the table.
    pub nominal_limit: f64,
    pub calibration_samples: usize,
    pub probes: Vec<ProbeCoverage>,
    pub runtime_seconds: f64,
}

fn binomial(hits: &[bool]) -> (f64, f64) {
    let r = hits.len() as f64;
    let p = hits.iter().filter(|h| **h).count() as f64 / r;
    (p, (p * (1.0 - p) / r).sqrt())
}

/// Replication `r` draws its data from stream `(seed_r, [0])` and its
/// posterior from master seed `derive(seed_r, [1])`, where
/// `seed_r = derive(config.seed, [r])`.
pub fn run_coverage(config: &ScenarioConfig, calib: &CalibrationTable) -> Result<CoverageReport> {
    config.validate()?;
    if config.replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let start = Instant::now();
    let kernel = config.noise_kernel()?;
    let resolvent = config.resolvent_for(&kernel)?;
    let probes = config.probe_points();
    let tau = recalibrate_tau(config.beta, calib)?;

    // (calibrated, nominal) interval per probe per replication
    type Outcome = Vec<(bool, f64, bool, f64)>;
    let outcomes: Vec<Outcome> = (0..config.replications)
        .into_par_iter()
        .map(|r| -> Result<Outcome> {
            let rep_seed = derive_seed(config.seed, &[r as u64]);
            let data = generate_data(config, &kernel, &mut stream(rep_seed, &[0]));
            let grid = EvaluationGrid::for_data(&data, resolvent.horizon(), config.grid_points)?;
            let draws = iip_draws(
                &data,
                &config.prior,
                &resolvent,
                &grid,
                config.draws,
                derive_seed(rep_seed, &[1]),
            )?;
            probes
                .iter()
                .map(|&x| {
                    let truth = config.signal_cdf(x);
                    let cal = posterior_quantile_band(&draws, x, tau)?;
                    let nom = posterior_quantile_band(&draws, x, config.beta)?;
                    Ok((
                        cal.contains(truth),
                        cal.width(),
                        nom.contains(truth),
                        nom.width(),
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let reps = config.replications as f64;
    let probe_reports = probes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let hits: Vec<bool> = outcomes.iter().map(|o| o[i].0).collect();
            let nominal_hits: Vec<bool> = outcomes.iter().map(|o| o[i].2).collect();
            let (coverage, std_error) = binomial(&hits);
            let (nominal_coverage, nominal_std_error) = binomial(&nominal_hits);
            ProbeCoverage {
                x,
                truth: config.signal_cdf(x),
                coverage,
                std_error,
                mean_width: outcomes.iter().map(|o| o[i].1).sum::<f64>() / reps,
                nominal_coverage,
                nominal_std_error,
                nominal_mean_width: outcomes.iter().map(|o| o[i].3).sum::<f64>() / reps,
                hits,
                nominal_hits,
            }
        })
        .collect();

    Ok(CoverageReport {
        config: config.clone(),
        tau,
        nominal_limit: limiting_coverage(config.beta, calib),
        calibration_samples: calib.sample_count,
        probes: probe_reports,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Curves for one kernel, all on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureBundle {
    pub kernel: String,
    pub xs: Vec<f64>,
    pub truth: Vec<f64>,
    pub iie: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    pub prior_draws: Vec<Vec<f64>>,
    pub posterior_draws: Vec<Vec<f64>>,
    pub band_lower: Vec<f64>,
    pub band_upper: Vec<f64>,
    /// Credibility parameter behind the band.
    pub tau: f64,
}

/// Kernel `i` of the figure list uses master seed `derive(config.seed, [i])`.
/// Bands use `τ = 2A⁻¹(β/2)` when a table is given and `τ = β` otherwise.
pub fn run_figure_scenario(
    config: &ScenarioConfig,
    calib: Option<&CalibrationTable>,
) -> Result<Vec<FigureBundle>> {
    config.validate()?;
    let specs: Vec<String> = if config.figure_kernels.is_empty() {
        BUILTIN_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        config.figure_kernels.clone()
    };
    let tau = match calib {
        Some(table) => recalibrate_tau(config.beta, table)?,
        None => config.beta,
    };
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let kernel = parse_kernel_spec(spec)?;
            let seed = derive_seed(config.seed, &[i as u64]);
            let resolvent = config.resolvent_for(&kernel)?;
            let data = generate_data(config, &kernel, &mut stream(seed, &[0]));
            let grid = EvaluationGrid::for_data(&data, resolvent.horizon(), config.grid_points)?;
            let prior = prior_draws(
                &config.prior,
                &resolvent,
                &grid,
                config.prior_draws,
                derive_seed(seed, &[1]),
            )?;
            let posterior = iip_draws(
                &data,
                &config.prior,
                &resolvent,
                &grid,
                config.draws,
                derive_seed(seed, &[2]),
            )?;
            let estimate = iie(&data, &resolvent, &grid)?;
            let (band_lower, band_upper) = grid
                .points()
                .iter()
                .map(|&x| posterior_quantile_band(&posterior, x, tau).map(|b| (b.lower, b.upper)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            Ok(FigureBundle {
                kernel: kernel.to_string(),
                xs: grid.points().to_vec(),
                truth: grid
                    .points()
                    .iter()
                    .map(|&x| config.signal_cdf(x))
                    .collect(),
                iie: estimate.grid_values(),
                posterior_mean: posterior.mean_curve(),
                prior_draws: prior.iter().map(|d| d.grid_values()).collect(),
                posterior_draws: posterior.draws.iter().map(|d| d.grid_values()).collect(),
                band_lower,
                band_upper,
                tau,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ScenarioConfig {
        ScenarioConfig {
            sample_size: 60,
            draws: 40,
            prior_draws: 3,
            replications: 4,
            resolvent_horizon: 15.0,
            resolvent_points: Some(3001),
            grid_points: 81,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn data_are_nonnegative_and_reproducible() {
        let config = ScenarioConfig {
            sample_size: 10_000,
            ..quick()
        };
        let kernel = config.noise_kernel().unwrap();
        let a = generate_data(&config, &kernel, &mut stream(1, &[]));
        let b = generate_data(&config, &kernel, &mut stream(1, &[]));
        assert_eq!(a, b);
        assert!(a.iter().all(|z| *z >= 0.0));
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        // Var Z = 1/1.44 + 1.
        let sd = (1.0 / 1.44 + 1.0f64).sqrt();
        assert!(
            (mean - (1.0 / 1.2 + 1.0)).abs() < 3.0 * sd / 100.0,
            "{mean}"
        );
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        let probes = c.probe_points();
        assert!((c.signal_cdf(probes[1]) - 0.5).abs() < 1e-15);
        assert!(ScenarioConfig {
            beta: 1.0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(ScenarioConfig {
            kernel: "nope".into(),
            ..c.clone()
        }
        .validate()
        .is_err());
        let parsed: ScenarioConfig = serde_json::from_str(r#"{"sample_size": 50}"#).unwrap();
        assert_eq!(parsed.sample_size, 50);
        assert_eq!(parsed.beta, 0.05);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"sampel_size": 50}"#).is_err());
    }

    fn uniform_table() -> CalibrationTable {
        let samples: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        CalibrationTable::from_samples(&samples).unwrap()
    }

    #[test]
    fn coverage_report_shape() {
        let report = run_coverage(&quick(), &uniform_table()).unwrap();
        assert_eq!(report.probes.len(), 3);
        for p in &report.probes {
            assert_eq!(p.hits.len(), 4);
            assert!((0.0..=1.0).contains(&p.coverage));
        }
        let again = run_coverage(&quick(), &uniform_table()).unwrap();
        assert_eq!(report.probes, again.probes);
        let empty = ScenarioConfig {
            replications: 0,
            ..quick()
        };
        assert!(run_coverage(&empty, &uniform_table()).is_err());
    }

    #[test]
    fn figure_bundle_curves() {
        let config = ScenarioConfig {
            figure_kernels: vec!["exp".into(), "halfcauchy".into()],
            ..quick()
        };
        let bundles = run_figure_scenario(&config, Some(&uniform_table())).unwrap();
        assert_eq!(bundles.len(), 2);
        for b in &bundles {
            for (x, t) in b.xs.iter().zip(&b.truth) {
                assert_eq!(*t, config.signal_cdf(*x));
            }
            assert!(b.iie.windows(2).all(|w| w[1] >= w[0]));
            assert!(b.posterior_mean.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            assert_eq!(b.prior_draws.len(), 3);
            assert_eq!(b.posterior_draws.len(), 40);
            assert!(b.band_lower.iter().zip(&b.band_upper).all(|(l, u)| l <= u));
        }
    }
}
