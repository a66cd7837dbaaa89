//! The resolvent `p` of a noise kernel: the solution of
//! `∫₀ˣ k(x − t) p(t) dt = x` for `x ≥ 0`.
//!
//! [`solve_resolvent`] uses the trapezoidal recurrence on a uniform grid.
//! [`renewal_series_resolvent`] is an independent Monte Carlo route for
//! nonincreasing kernels: with `J = 1 − k/k(0)` a distribution function,
//! `p(x) = (1 + U(x)) / k(0)` where `U` is the renewal function of `J`.

use rand::Rng;
use rand_distr::Open01;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::NoiseKernel;
use crate::rng::stream;

/// Resolvent values `p(n·h)` for `n = 0, …, N − 1`, with `h = T / (N − 1)`.
///
/// Off-grid values use linear interpolation and `p(u) = 0` for `u < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventTable {
    horizon: f64,
    step: f64,
    values: Vec<f64>,
}

impl ResolventTable {
    /// Wraps precomputed grid values on `[0, horizon]`.
    pub fn from_values(horizon: f64, values: Vec<f64>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param(format!(
                "resolvent horizon must be positive, got {horizon}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::input(
                "resolvent table needs at least two grid points",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "resolvent table contains non-finite values".into(),
            ));
        }
        let step = horizon / (values.len() - 1) as f64;
        Ok(ResolventTable {
            horizon,
            step,
            values,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid abscissa `n·h`.
    pub fn abscissa(&self, n: usize) -> f64 {
        n as f64 * self.step
    }

    /// `p(u)`, failing when `u` lies beyond the table horizon.
    pub fn evaluate(&self, u: f64) -> Result<f64> {
        if u > self.horizon * (1.0 + 1e-12) {
            return Err(Error::input(format!(
                "resolvent requested at {u}, beyond its horizon {}; solve on a longer grid",
                self.horizon
            )));
        }
        Ok(self.interpolate(u))
    }

    /// `p(u)` without the horizon check; clamps to the last value past it.
    #[inline]
    pub(crate) fn interpolate(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        let pos = u / self.step;
        let idx = pos.floor() as usize;
        let last = self.values.len() - 1;
        if idx >= last {
            return self.values[last];
        }
        let frac = pos - idx as f64;
        let lo = self.values[idx];
        lo + frac * (self.values[idx + 1] - lo)
    }
}

/// Default grid size for a horizon: step `h ≤ 10⁻³`, at least 1001 and at
/// most 50001 points.
pub fn default_points(horizon: f64) -> usize {
    ((horizon / 1e-3).ceil() as usize + 1).clamp(1001, 50_001)
}

/// Solves for the resolvent on `[0, horizon]` with `points` grid nodes.
pub fn solve_resolvent(
    kernel: &NoiseKernel,
    horizon: f64,
    points: usize,
) -> Result<ResolventTable> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::param(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if points < 2 {
        return Err(Error::param(format!(
            "need at least 2 grid points, got {points}"
        )));
    }
    let k0 = kernel.at_zero();
    if !(k0.is_finite() && k0 > 0.0) {
        return Err(Error::param(format!(
            "kernel has k(0) = {k0}; need 0 < k(0) < ∞"
        )));
    }
    let step = horizon / (points - 1) as f64;
    let k: Vec<f64> = (0..points)
        .map(|n| kernel.node_value(n as f64 * step))
        .collect();
    if let Some(n) = k.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Numeric(format!(
            "kernel evaluates to {} at grid point x = {}",
            k[n],
            n as f64 * step
        )));
    }

    let mut p = Vec::with_capacity(points);
    p.push(1.0 / k0);
    for n in 1..points {
        // Σ_{j=1}^{n-1} p_j k_{n-j}
        let conv: f64 = p[1..n]
            .iter()
            .zip(k[1..n].iter().rev())
            .map(|(a, b)| a * b)
            .sum();
        let rhs = n as f64 - 0.5 * k[n] * p[0] - conv;
        p.push(2.0 * rhs / k0);
    }
    if let Some(n) = p.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "resolvent recurrence diverged at x = {}",
            n as f64 * step
        )));
    }
    Ok(ResolventTable {
        horizon,
        step,
        values: p,
    })
}

/// Largest deviation `|∫₀^{xₙ} k(xₙ − t) p(t) dt − xₙ|` over the table grid.
///
/// The integral uses the trapezoidal rule on a grid twice as fine as the
/// table, with `k` evaluated exactly and `p` linearly interpolated. On the
/// table's own grid the solver's output satisfies the discrete equation to
/// rounding error, so the refined rule is what exposes discretization
/// error.
pub fn resolvent_residual(table: &ResolventTable, kernel: &NoiseKernel) -> f64 {
    resolvent_residual_refined(table, kernel, 2)
}

/// [`resolvent_residual`] with `refine` quadrature sub-steps per table cell.
pub fn resolvent_residual_refined(
    table: &ResolventTable,
    kernel: &NoiseKernel,
    refine: usize,
) -> f64 {
    let refine = refine.max(1);
    let n_fine = (table.len() - 1) * refine + 1;
    let fine_step = table.step / refine as f64;
    let k: Vec<f64> = (0..n_fine)
        .map(|i| kernel.node_value(i as f64 * fine_step))
        .collect();
    let p: Vec<f64> = (0..n_fine)
        .map(|i| {
            let (cell, off) = (i / refine, i % refine);
            if off == 0 {
                table.values[cell]
            } else {
                let t = off as f64 / refine as f64;
                table.values[cell] + t * (table.values[cell + 1] - table.values[cell])
            }
        })
        .collect();

    (1..table.len())
        .into_par_iter()
        .map(|n| {
            let m = n * refine;
            let interior: f64 = p[1..m]
                .iter()
                .zip(k[1..m].iter().rev())
                .map(|(a, b)| a * b)
                .sum();
            let integral = fine_step * (0.5 * k[m] * p[0] + interior + 0.5 * k[0] * p[m]);
            (integral - table.abscissa(n)).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Monte Carlo estimate of `p(x)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalEstimate {
    pub x: f64,
    pub value: f64,
    pub std_error: f64,
}

/// Points in the quantile tabulation of the inter-arrival law `J`.
pub const RENEWAL_TABLE_POINTS: usize = 10_000;
/// Inter-arrival mass discarded above `J⁻¹(1 − RENEWAL_TAIL_MASS)`.
pub const RENEWAL_TAIL_MASS: f64 = 1e-6;
const PATHS_PER_BLOCK: usize = 1024;

/// Quantile table of `J(x) = 1 − k(x)/k(0)` on a uniform probability grid.
struct InterArrivalQuantiles {
    knots: Vec<f64>,
    top: f64,
}

impl InterArrivalQuantiles {
    fn new(kernel: &NoiseKernel) -> Self {
        let k0 = kernel.at_zero();
        let j = |x: f64| 1.0 - kernel.density(x) / k0;
        let top = 1.0 - RENEWAL_TAIL_MASS;
        let mut hi = 1.0;
        while j(hi) < top && hi < 1e300 {
            hi *= 2.0;
        }
        let invert = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let (mut a, mut b) = (0.0, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if j(mid) < u {
                    a = mid;
                } else {
                    b = mid;
                }
                if b - a <= 1e-15 * b.max(1.0) {
                    break;
                }
            }
            b
        };
        let knots = (0..=RENEWAL_TABLE_POINTS)
            .map(|i| invert(top * i as f64 / RENEWAL_TABLE_POINTS as f64))
            .collect();
        InterArrivalQuantiles { knots, top }
    }

    /// Inverse-CDF draw; `None` for the discarded upper tail.
    fn sample<R: Rng>(&self, rng: &mut R) -> Option<f64> {
        let u: f64 = rng.sample(Open01);
        if u >= self.top {
            return None;
        }
        let pos = u / self.top * RENEWAL_TABLE_POINTS as f64;
        let idx = (pos.floor() as usize).min(RENEWAL_TABLE_POINTS - 1);
        let frac = pos - idx as f64;
        Some(self.knots[idx] + frac * (self.knots[idx + 1] - self.knots[idx]))
    }
}

/// Renewal-series estimate of the resolvent at each of `xs`.
///
/// Requires a nonincreasing kernel. Each path draws inter-arrival times
/// from `J` until their sum exceeds `max(xs)`; the count of partial sums
/// `≤ x` averages to the renewal function. The result depends only on
/// `(seed, paths)`, not on the number of worker threads.
pub fn renewal_series_resolvent(
    kernel: &NoiseKernel,
    xs: &[f64],
    paths: usize,
    seed: u64,
) -> Result<Vec<RenewalEstimate>> {
    if paths == 0 {
        return Err(Error::param("renewal oracle needs at least one path"));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("renewal oracle probe points must be finite"));
    }
    let x_max = xs.iter().copied().fold(0.0, f64::max);
    if !kernel.is_nonincreasing(x_max.max(1.0), 10_001) {
        return Err(Error::input(format!(
            "renewal oracle needs a nonincreasing kernel; {kernel} increases on [0, {x_max}]"
        )));
    }
    let k0 = kernel.at_zero();
    let quantiles = InterArrivalQuantiles::new(kernel);

    // Probe order sorted ascending so one pass over a path's arrivals
    // yields every count.
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();

    let blocks = paths.div_ceil(PATHS_PER_BLOCK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream(seed, &[block as u64]);
            let count = PATHS_PER_BLOCK.min(paths - block * PATHS_PER_BLOCK);
            let mut sum = vec![0.0; xs.len()];
            let mut sum_sq = vec![0.0; xs.len()];
            let mut arrivals = Vec::new();
            for _ in 0..count {
                arrivals.clear();
                let mut arrival = 0.0;
                while let Some(t) = quantiles.sample(&mut rng) {
                    arrival += t;
                    if arrival > x_max {
                        break;
                    }
                    arrivals.push(arrival);
                }
                let mut seen = 0usize;
                for (j, &x) in sorted.iter().enumerate() {
                    while seen < arrivals.len() && arrivals[seen] <= x {
                        seen += 1;
                    }
                    let c = seen as f64;
                    sum[j] += c;
                    sum_sq[j] += c * c;
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = vec![0.0; xs.len()];
    let mut sum_sq = vec![0.0; xs.len()];
    for (s, s2) in &partials {
        for j in 0..xs.len() {
            sum[order[j]] += s[j];
            sum_sq[order[j]] += s2[j];
        }
    }

    let n = paths as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if x <= 0.0 {
                return RenewalEstimate {
                    x,
                    value: if x == 0.0 { 1.0 / k0 } else { 0.0 },
                    std_error: 0.0,
                };
            }
            let mean = sum[i] / n;
            let var = if paths > 1 {
                ((sum_sq[i] - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            RenewalEstimate {
                x,
                value: (1.0 + mean) / k0,
                std_error: (var / n).sqrt() / k0,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{builtin_kernel, load_tabulated, study_kernels};

    fn exp1() -> NoiseKernel {
        builtin_kernel("exp", &[("rate", 1.0)]).unwrap()
    }

    #[test]
    fn exp_kernel_resolvent_is_one_plus_x() {
        // ∫₀ˣ (1 + x − y) e^{−y} dy = x, so p(x) = 1 + x exactly.
        let table = solve_resolvent(&exp1(), 5.0, 5001).unwrap();
        let err = (0..table.len())
            .map(|n| (table.values()[n] - (1.0 + table.abscissa(n))).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn first_value_is_reciprocal_of_k0() {
        for kernel in study_kernels() {
            let table = solve_resolvent(&kernel, 2.0, 201).unwrap();
            assert_eq!(table.values()[0], 1.0 / kernel.at_zero());
        }
    }

    #[test]
    fn uniform_kernel_gives_staircase() {
        let uniform = load_tabulated(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let table = solve_resolvent(&uniform, 3.0, 3001).unwrap();
        let h = table.step();
        for n in 0..table.len() {
            let x = table.abscissa(n);
            let near_jump = (1..=3).any(|j| (x - j as f64).abs() <= 3.0 * h);
            if near_jump {
                continue;
            }
            let expected = x.floor() + 1.0;
            assert!(
                (table.values()[n] - expected).abs() < 1e-2,
                "p({x}) = {} vs {expected}",
                table.values()[n]
            );
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(solve_resolvent(&exp1(), 0.0, 10).is_err());
        assert!(solve_resolvent(&exp1(), 1.0, 1).is_err());
    }

    #[test]
    fn residual_examples() {
        let exact =
            ResolventTable::from_values(5.0, (0..5001).map(|n| 1.0 + n as f64 * 1e-3).collect())
                .unwrap();
        assert!(resolvent_residual(&exact, &exp1()) < 1e-6);

        let zero = ResolventTable::from_values(5.0, vec![0.0; 5001]).unwrap();
        assert!((resolvent_residual(&zero, &exp1()) - 5.0).abs() < 1e-12);

        for kernel in study_kernels() {
            let table = solve_resolvent(&kernel, 5.0, 5001).unwrap();
            let r = resolvent_residual(&table, &kernel);
            assert!(r < 1e-4, "{kernel}: residual {r}");
            // On the solver's own grid the discrete equation holds exactly.
            assert!(resolvent_residual_refined(&table, &kernel, 1) < 1e-9);
        }
    }

    #[test]
    fn decreasing_kernels_give_monotone_resolvents() {
        for kernel in study_kernels() {
            let table = solve_resolvent(&kernel, 10.0, 5001).unwrap();
            let v = table.values();
            assert!(v.iter().all(|&p| p >= -1e-8), "{kernel}");
            assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-8), "{kernel}");
        }
    }

    #[test]
    fn exp_slope_sanity() {
        let table = solve_resolvent(&exp1(), 20.0, 20001).unwrap();
        let slope = table.values().last().unwrap() / 20.0;
        assert!((0.8..=1.2).contains(&slope));
    }

    #[test]
    fn evaluation_rules() {
        let table = solve_resolvent(&exp1(), 2.0, 21).unwrap();
        assert_eq!(table.evaluate(-0.5).unwrap(), 0.0);
        for n in 0..table.len() {
            assert_eq!(
                table.evaluate(table.abscissa(n)).unwrap(),
                table.values()[n]
            );
        }
        let mid = 0.5 * (table.abscissa(3) + table.abscissa(4));
        let mean = 0.5 * (table.values()[3] + table.values()[4]);
        assert!((table.evaluate(mid).unwrap() - mean).abs() < 1e-14);
        assert!(matches!(table.evaluate(2.5), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn renewal_oracle_exp() {
        let est = renewal_series_resolvent(&exp1(), &[0.0, 2.0], 100_000, 3).unwrap();
        assert_eq!(est[0].value, 1.0);
        assert_eq!(est[0].std_error, 0.0);
        // Poisson renewal count: sd sqrt(2), so se ≈ 1.41 / sqrt(paths).
        assert!((est[1].std_error - 2f64.sqrt() / 100_000f64.sqrt()).abs() < 5e-4);
        assert!(
            (est[1].value - 3.0).abs() < 3.0 * est[1].std_error,
            "{:?}",
            est[1]
        );
    }

    #[test]
    fn renewal_oracle_lomax_matches_solver() {
        let lomax = builtin_kernel("lomax", &[("c", 10.0), ("lambda", 1.0)]).unwrap();
        let table = solve_resolvent(&lomax, 2.0, 2001).unwrap();
        let est = renewal_series_resolvent(&lomax, &[1.0], 100_000, 8).unwrap();
        let diff = (est[0].value - table.evaluate(1.0).unwrap()).abs();
        assert!(
            diff < 3.0 * est[0].std_error,
            "{:?} vs {}",
            est[0],
            table.evaluate(1.0).unwrap()
        );
    }

    #[test]
    fn renewal_oracle_errors() {
        assert!(renewal_series_resolvent(&exp1(), &[1.0], 0, 1).is_err());
        let rising = load_tabulated(vec![0.0, 1.0, 2.0], vec![0.5, 1.0, 0.0]).unwrap();
        assert!(renewal_series_resolvent(&rising, &[1.0], 10, 1).is_err());
    }

    #[test]
    fn renewal_oracle_is_thread_independent() {
        let kernel = builtin_kernel("halfnormal", &[]).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| renewal_series_resolvent(&kernel, &[0.5, 1.5], 5000, 21).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
