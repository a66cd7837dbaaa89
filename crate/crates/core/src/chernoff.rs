//! Monte Carlo tables for the Bayes–Chernoff variable
//! `Z_B = P(argmin_t {W₁(t) + W₂(t) + t²} ≤ 0 | W₁)`, where `W₁`, `W₂` are
//! independent two-sided Brownian motions.
//!
//! `A(u) = P(Z_B ≤ u)` converts a credibility level into asymptotic
//! coverage: the interval between the posterior `τ/2` and `1 − τ/2`
//! quantiles covers with probability `2A(1 − τ/2) − 1`, so `τ = 2A⁻¹(β/2)`
//! targets coverage `1 − β`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Published values of `A⁻¹(v)`, as `(v, A⁻¹(v))`.
pub const REFERENCE_AINV: [(f64, f64); 22] = [
    (0.700, 0.677),
    (0.750, 0.723),
    (0.800, 0.771),
    (0.850, 0.820),
    (0.900, 0.874),
    (0.910, 0.885),
    (0.920, 0.897),
    (0.930, 0.909),
    (0.940, 0.922),
    (0.950, 0.934),
    (0.960, 0.946),
    (0.965, 0.952),
    (0.970, 0.960),
    (0.975, 0.966),
    (0.980, 0.973),
    (0.985, 0.980),
    (0.990, 0.986),
    (0.995, 0.993),
    (0.996, 0.995),
    (0.997, 0.996),
    (0.998, 0.997),
    (0.999, 0.999),
];

/// Spacing of the dense level grid stored in a [`CalibrationTable`].
pub const TABLE_RESOLUTION: usize = 1000;

/// Discretization of the argmin problem on `[−L, L]` with step `Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArgminConfig {
    pub half_width: f64,
    pub step: f64,
    /// `W₂` paths per `W₁` path.
    pub inner: usize,
    /// Number of `Z_B` samples.
    pub samples: usize,
}

impl Default for ArgminConfig {
    fn default() -> Self {
        ArgminConfig {
            half_width: 4.0,
            step: 0.01,
            inner: 1000,
            samples: 20_000,
        }
    }
}

impl ArgminConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::param(format!(
                "half width must be positive, got {}",
                self.half_width
            )));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::param(format!(
                "time step must be positive, got {}",
                self.step
            )));
        }
        let ratio = self.half_width / self.step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::param(format!(
                "half width {} is not a whole number of steps {}",
                self.half_width, self.step
            )));
        }
        if self.inner == 0 || self.samples == 0 {
            return Err(Error::param(
                "inner replicates and sample count must be at least 1",
            ));
        }
        Ok(())
    }

    /// Grid points on each side of the origin.
    pub fn side_points(&self) -> usize {
        (self.half_width / self.step).round() as usize
    }

    /// `t_i = (i − n)·Δt` for `i = 0, …, 2n`.
    pub fn times(&self) -> Vec<f64> {
        let n = self.side_points() as isize;
        (-n..=n).map(|i| i as f64 * self.step).collect()
    }
}

/// Two-sided Brownian path on [`ArgminConfig::times`]; the origin sits at
/// index `side_points()`. The right side is generated first, then the left,
/// each outward from zero.
pub fn two_sided_bm<R: Rng + ?Sized>(config: &ArgminConfig, rng: &mut R) -> Vec<f64> {
    let n = config.side_points();
    let sd = config.step.sqrt();
    let mut path = vec![0.0; 2 * n + 1];
    let mut w = 0.0;
    for v in path[n + 1..].iter_mut() {
        w += sd * rng.sample::<f64, _>(StandardNormal);
        *v = w;
    }
    w = 0.0;
    for v in path[..n].iter_mut().rev() {
        w += sd * rng.sample::<f64, _>(StandardNormal);
        *v = w;
    }
    path
}

/// Smallest grid time minimizing `w1(t) + w2(t) + t² − slope·t`.
pub fn drifted_argmin(w1: &[f64], w2: &[f64], times: &[f64], slope: f64) -> f64 {
    assert_eq!(w1.len(), times.len(), "path and grid lengths differ");
    assert_eq!(w2.len(), times.len(), "path and grid lengths differ");
    let mut best = 0;
    let mut best_value = f64::INFINITY;
    for (i, &t) in times.iter().enumerate() {
        let value = w1[i] + w2[i] + t * t - slope * t;
        if value < best_value {
            best_value = value;
            best = i;
        }
    }
    times[best]
}

/// One `Z_B` draw: a fresh `W₁` followed by `inner` `W₂` paths.
pub fn sample_zb<R: Rng + ?Sized>(config: &ArgminConfig, rng: &mut R) -> f64 {
    let w1 = two_sided_bm(config, rng);
    sample_zb_given(config, &w1, rng)
}

/// Fraction of `inner` fresh `W₂` paths whose drifted argmin is `≤ 0`,
/// with `W₁` fixed.
///
/// Each `W₂` is streamed once without being stored, comparing the minima
/// over `t < 0`, `t = 0` and `t > 0`. Increments are consumed in the order
/// of [`two_sided_bm`]. When the grid minimum sits exactly at the origin, a
/// fair coin drawn after the path decides the side: on a grid of step `Δt`
/// that event has probability of order `√Δt`, while its continuum
/// counterpart has probability zero.
pub fn sample_zb_given<R: Rng + ?Sized>(config: &ArgminConfig, w1: &[f64], rng: &mut R) -> f64 {
    let n = config.side_points();
    assert_eq!(w1.len(), 2 * n + 1, "W1 does not match the grid");
    let sd = config.step.sqrt();
    let base: Vec<f64> = config
        .times()
        .iter()
        .zip(w1)
        .map(|(t, w)| w + t * t)
        .collect();
    let (left, rest) = base.split_at(n);
    let (origin, right) = (rest[0], &rest[1..]);

    let mut hits = 0usize;
    for _ in 0..config.inner {
        let mut w = 0.0;
        let mut right_min = f64::INFINITY;
        for &b in right {
            w += sd * rng.sample::<f64, _>(StandardNormal);
            right_min = right_min.min(b + w);
        }
        w = 0.0;
        let mut left_min = f64::INFINITY;
        for &b in left.iter().rev() {
            w += sd * rng.sample::<f64, _>(StandardNormal);
            left_min = left_min.min(b + w);
        }
        let hit = if left_min <= origin && left_min <= right_min {
            true
        } else if origin <= right_min {
            rng.next_u32() & 1 == 1
        } else {
            false
        };
        hits += hit as usize;
    }
    hits as f64 / config.inner as f64
}

/// `config.samples` draws of `Z_B`; draw `s` uses stream `(seed, [s])`.
pub fn sample_zb_batch(config: &ArgminConfig, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    Ok((0..config.samples)
        .into_par_iter()
        .map(|s| sample_zb(config, &mut stream(seed, &[s as u64])))
        .collect())
}

/// Monte Carlo quantile function `A⁻¹` of `Z_B` on the levels
/// `v = 0, 0.001, …, 1`, with `A` recovered by inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    levels: Vec<f64>,
    quantiles: Vec<f64>,
    /// Number of `Z_B` samples behind the table.
    pub sample_count: usize,
    /// Sample mean of `Z_B`, when known.
    pub mean: Option<f64>,
}

impl CalibrationTable {
    /// Empirical quantiles with linear interpolation between order
    /// statistics; the end points are pinned to `A⁻¹(0) = 0` and
    /// `A⁻¹(1) = 1`.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("calibration needs at least one Z_B sample"));
        }
        if let Some(z) = samples.iter().find(|z| !(0.0..=1.0).contains(*z)) {
            return Err(Error::Numeric(format!(
                "Z_B sample {z} lies outside [0, 1]"
            )));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let s = sorted.len();
        let levels: Vec<f64> = (0..=TABLE_RESOLUTION)
            .map(|i| i as f64 / TABLE_RESOLUTION as f64)
            .collect();
        let mut quantiles: Vec<f64> = levels
            .iter()
            .map(|&v| {
                let pos = v * (s - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(s - 1);
                sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
            })
            .collect();
        quantiles[0] = 0.0;
        quantiles[TABLE_RESOLUTION] = 1.0;
        Ok(CalibrationTable {
            levels,
            quantiles,
            sample_count: s,
            mean: Some(sorted.iter().sum::<f64>() / s as f64),
        })
    }

    /// Rebuilds a table from stored `(v, A⁻¹(v))` pairs.
    pub fn from_pairs(levels: Vec<f64>, quantiles: Vec<f64>, sample_count: usize) -> Result<Self> {
        if levels.len() != quantiles.len() || levels.len() < 2 {
            return Err(Error::input(
                "calibration table needs matching level/quantile columns",
            ));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input(
                "calibration levels must be strictly increasing",
            ));
        }
        if quantiles.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::input("calibration quantiles must be nondecreasing"));
        }
        if levels[0] != 0.0 || *levels.last().unwrap() != 1.0 {
            return Err(Error::input("calibration levels must span [0, 1]"));
        }
        if quantiles[0] != 0.0 || *quantiles.last().unwrap() != 1.0 {
            return Err(Error::input("calibration quantiles must run from 0 to 1"));
        }
        Ok(CalibrationTable {
            levels,
            quantiles,
            sample_count,
            mean: None,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    /// `A⁻¹(v)`, linear between stored levels.
    pub fn ainv(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        let i = self
            .levels
            .partition_point(|&l| l <= v)
            .clamp(1, self.levels.len() - 1);
        let (v0, v1) = (self.levels[i - 1], self.levels[i]);
        let (q0, q1) = (self.quantiles[i - 1], self.quantiles[i]);
        q0 + (v - v0) / (v1 - v0) * (q1 - q0)
    }

    /// `A(u)` by inverting the quantile table. Where `A⁻¹` is flat at `u`
    /// (an atom of the Monte Carlo law) the midpoint of the flat run is used.
    pub fn cdf(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let q = &self.quantiles;
        let lo = q.partition_point(|&x| x < u);
        let hi = q.partition_point(|&x| x <= u);
        if lo < hi {
            return 0.5 * (self.levels[lo] + self.levels[hi - 1]);
        }
        // q[lo - 1] < u < q[lo]
        let (q0, q1) = (q[lo - 1], q[lo]);
        let (v0, v1) = (self.levels[lo - 1], self.levels[lo]);
        v0 + (u - q0) / (q1 - q0) * (v1 - v0)
    }
}

/// Samples `Z_B` and tabulates its quantile function.
pub fn build_calibration(config: &ArgminConfig, seed: u64) -> Result<CalibrationTable> {
    CalibrationTable::from_samples(&sample_zb_batch(config, seed)?)
}

/// Credibility parameter `τ = 2A⁻¹(β/2)` targeting coverage `1 − β`.
pub fn recalibrate_tau(beta: f64, table: &CalibrationTable) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::param(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(2.0 * table.ainv(beta / 2.0))
}

/// Asymptotic coverage `2A(1 − τ/2) − 1` of the `(1 − τ)`-credible interval.
pub fn limiting_coverage(tau: f64, table: &CalibrationTable) -> f64 {
    2.0 * table.cdf(1.0 - tau / 2.0) - 1.0
}
