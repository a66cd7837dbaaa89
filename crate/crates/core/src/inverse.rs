//! From measures to distribution-function estimates.
//!
//! For a measure `μ` on the observations the H-curve is
//! `H(x) = ∫_{[0,x)} p(x − z) dμ(z)`; for the true observable law it is the
//! integrated signal CDF `∫₀ˣ F₀`. Isotonizing `H` (right derivative of its
//! convex minorant) gives the frequentist estimator when `μ` is the
//! empirical measure and a posterior draw when `μ` is a Dirichlet-process
//! posterior draw.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isotonic::{isotonize, SampledCurve, StepCdf};
use crate::measures::{
    draw_dp_posterior, draw_dp_prior, empirical_measure, DiscreteMeasure, DpPrior,
};
use crate::rng::stream;
use crate::volterra::ResolventTable;

/// Number of grid points used when none is requested.
pub const DEFAULT_GRID_POINTS: usize = 401;

/// Uniform abscissae `0 = x₀ < … < x_m = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    horizon: f64,
    points: Vec<f64>,
}

impl EvaluationGrid {
    pub fn uniform(horizon: f64, count: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        if count < 2 {
            return Err(Error::param(format!(
                "grid needs at least 2 points, got {count}"
            )));
        }
        let step = horizon / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|j| j as f64 * step).collect();
        points[count - 1] = horizon;
        Ok(EvaluationGrid { horizon, points })
    }

    /// `T = 1.1 · max(data)`, capped at the resolvent horizon.
    pub fn for_data(data: &[f64], resolvent_horizon: f64, count: usize) -> Result<Self> {
        let max = data.iter().copied().fold(0.0, f64::max);
        let horizon = (1.1 * max).min(resolvent_horizon);
        if horizon <= 0.0 {
            return Err(Error::input(
                "cannot size a grid for data that are all zero",
            ));
        }
        Self::uniform(horizon, count)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check_against(&self, resolvent: &ResolventTable) -> Result<()> {
        if self.horizon > resolvent.horizon() * (1.0 + 1e-12) {
            return Err(Error::input(format!(
                "evaluation grid reaches {} but the resolvent only covers [0, {}]",
                self.horizon,
                resolvent.horizon()
            )));
        }
        Ok(())
    }
}

/// `H(xⱼ) = Σ_{zᵢ < xⱼ} wᵢ p(xⱼ − zᵢ)` on the grid.
pub fn h_curve(
    measure: &DiscreteMeasure,
    resolvent: &ResolventTable,
    grid: &EvaluationGrid,
) -> Result<SampledCurve> {
    grid.check_against(resolvent)?;
    let mut atoms: Vec<(f64, f64)> = measure
        .atoms()
        .iter()
        .copied()
        .zip(measure.weights().iter().copied())
        .filter(|&(_, w)| w > 0.0)
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ys = grid
        .points()
        .iter()
        .map(|&x| {
            let below = atoms.partition_point(|&(z, _)| z < x);
            atoms[..below]
                .iter()
                .map(|&(z, w)| w * resolvent.interpolate(x - z))
                .sum()
        })
        .collect();
    SampledCurve::new(grid.points().to_vec(), ys)
}

/// `Hₙ(x) = n⁻¹ Σᵢ p(x − Zᵢ) 1{Zᵢ < x}` evaluated directly from the sample.
pub fn h_curve_empirical(
    data: &[f64],
    resolvent: &ResolventTable,
    grid: &EvaluationGrid,
) -> Result<SampledCurve> {
    grid.check_against(resolvent)?;
    empirical_measure(data)?;
    let n = data.len() as f64;
    let ys = grid
        .points()
        .iter()
        .map(|&x| {
            let total: f64 = data
                .iter()
                .filter(|&&z| z < x)
                .map(|&z| resolvent.interpolate(x - z))
                .sum();
            total / n
        })
        .collect();
    SampledCurve::new(grid.points().to_vec(), ys)
}

/// Isotonic inverse estimator from the observations.
pub fn iie(data: &[f64], resolvent: &ResolventTable, grid: &EvaluationGrid) -> Result<StepCdf> {
    let measure = empirical_measure(data)?;
    Ok(isotonize(&h_curve(&measure, resolvent, grid)?))
}

/// Isotonized posterior draws sharing one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDrawSet {
    pub grid: EvaluationGrid,
    pub draws: Vec<StepCdf>,
    pub seed: u64,
    pub prior: DpPrior,
    pub sample_size: usize,
}

impl PosteriorDrawSet {
    /// Average of the isotonized draws at each grid point.
    pub fn mean_curve(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.grid.len()];
        for draw in &self.draws {
            for (j, m) in mean.iter_mut().enumerate() {
                *m += draw.value_at_index(j);
            }
        }
        let b = self.draws.len() as f64;
        mean.iter_mut().for_each(|m| *m /= b);
        mean
    }

    /// Each draw's value at `x`.
    pub fn values_at(&self, x: f64) -> Result<Vec<f64>> {
        self.draws.iter().map(|d| d.value_at(x)).collect()
    }
}

/// `count` isotonized posterior draws; draw `b` uses stream `(seed, [b])`.
pub fn iip_draws(
    data: &[f64],
    prior: &DpPrior,
    resolvent: &ResolventTable,
    grid: &EvaluationGrid,
    count: usize,
    seed: u64,
) -> Result<PosteriorDrawSet> {
    if count == 0 {
        return Err(Error::param("need at least one posterior draw"));
    }
    prior.validate()?;
    empirical_measure(data)?;
    grid.check_against(resolvent)?;
    let draws = (0..count)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, &[b as u64]);
            let g = draw_dp_posterior(prior, data, &mut rng)?;
            Ok(isotonize(&h_curve(&g, resolvent, grid)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDrawSet {
        grid: grid.clone(),
        draws,
        seed,
        prior: *prior,
        sample_size: data.len(),
    })
}

/// Isotonized H-curves of prior draws `G ~ DP(M·α)`.
pub fn prior_draws(
    prior: &DpPrior,
    resolvent: &ResolventTable,
    grid: &EvaluationGrid,
    count: usize,
    seed: u64,
) -> Result<Vec<StepCdf>> {
    prior.validate()?;
    grid.check_against(resolvent)?;
    (0..count)
        .into_par_iter()
        .map(|b| {
            let g = draw_dp_prior(prior, &mut stream(seed, &[b as u64]));
            Ok(isotonize(&h_curve(&g, resolvent, grid)?))
        })
        .collect()
}

/// `inf{z : #{vᵢ ≤ z}/B ≥ level}` for ascending `sorted` values.
pub fn inf_quantile(sorted: &[f64], level: f64) -> f64 {
    let b = sorted.len();
    let rank = (level * b as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(b) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub lower: f64,
    pub upper: f64,
}

impl CredibleInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Interval between the posterior quantiles at levels `τ/2` and `1 − τ/2`.
///
/// `x` may be any point of the grid's range: each draw is a step function,
/// so its value at `x` is exact and nothing is interpolated across draws.
pub fn posterior_quantile_band(
    draws: &PosteriorDrawSet,
    x: f64,
    tau: f64,
) -> Result<CredibleInterval> {
    if draws.draws.len() < 2 {
        return Err(Error::input(
            "a credible interval needs at least two posterior draws",
        ));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::param(format!("tau must lie in (0, 1], got {tau}")));
    }
    let mut values = draws.values_at(x)?;
    values.sort_by(f64::total_cmp);
    Ok(CredibleInterval {
        lower: inf_quantile(&values, tau / 2.0),
        upper: inf_quantile(&values, 1.0 - tau / 2.0),
    })
}
