//! Known noise densities on `[0, ∞)`.
//!
//! Every kernel must have a finite, strictly positive value at the origin;
//! the resolvent solver divides by it.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names accepted by [`builtin_kernel`].
pub const BUILTIN_NAMES: [&str; 6] = [
    "exp",
    "erlang_exp_mix",
    "halfnormal",
    "halfcauchy",
    "lomax",
    "halflogistic",
];

/// Piecewise-linear density given on a grid; zero beyond the last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedKernel {
    grid: Vec<f64>,
    values: Vec<f64>,
    /// Cumulative trapezoid mass at each grid node.
    cumulative: Vec<f64>,
}

impl TabulatedKernel {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::input(format!(
                "tabulated kernel: {} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::input("tabulated kernel needs at least two points"));
        }
        if grid[0] != 0.0 {
            return Err(Error::input("tabulated kernel grid must start at 0"));
        }
        if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input(
                "tabulated kernel grid must be finite and strictly increasing",
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input(
                "tabulated kernel values must be finite and nonnegative",
            ));
        }
        if values[0] <= 0.0 {
            return Err(Error::input(format!(
                "tabulated kernel has k(0) = {}; the resolvent requires k(0) > 0",
                values[0]
            )));
        }
        let mut cumulative = Vec::with_capacity(grid.len());
        cumulative.push(0.0);
        for i in 1..grid.len() {
            let seg = 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
            cumulative.push(cumulative[i - 1] + seg);
        }
        Ok(TabulatedKernel {
            grid,
            values,
            cumulative,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total mass of the table (not forced to one).
    pub fn mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment(&self, x: f64) -> Option<usize> {
        if x < 0.0 || x > *self.grid.last().unwrap() {
            return None;
        }
        let i = self.grid.partition_point(|&g| g <= x);
        Some(i.saturating_sub(1).min(self.grid.len() - 2))
    }

    fn density(&self, x: f64) -> f64 {
        match self.segment(x) {
            None => 0.0,
            Some(i) => {
                let (x0, x1) = (self.grid[i], self.grid[i + 1]);
                let t = (x - x0) / (x1 - x0);
                self.values[i] + t * (self.values[i + 1] - self.values[i])
            }
        }
    }

    fn mass_below(&self, x: f64) -> f64 {
        match self.segment(x) {
            None if x < 0.0 => 0.0,
            None => self.mass(),
            Some(i) => {
                let dx = x - self.grid[i];
                let slope =
                    (self.values[i + 1] - self.values[i]) / (self.grid[i + 1] - self.grid[i]);
                self.cumulative[i] + self.values[i] * dx + 0.5 * slope * dx * dx
            }
        }
    }

    /// Inverts the normalized CDF within the segment that holds `target` mass.
    fn quantile(&self, u: f64) -> f64 {
        let target = u * self.mass();
        let i = self
            .cumulative
            .partition_point(|&c| c < target)
            .saturating_sub(1)
            .min(self.grid.len() - 2);
        let rem = target - self.cumulative[i];
        let width = self.grid[i + 1] - self.grid[i];
        let a = self.values[i];
        let slope = (self.values[i + 1] - a) / width;
        // Solve a*d + slope*d^2/2 = rem for d in [0, width].
        let d = if slope.abs() < 1e-14 * a.max(1.0) {
            if a > 0.0 {
                rem / a
            } else {
                0.0
            }
        } else {
            let disc = (a * a + 2.0 * slope * rem).max(0.0);
            2.0 * rem / (a + disc.sqrt())
        };
        self.grid[i] + d.clamp(0.0, width)
    }
}

/// A known noise density `k` supported on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseKernel {
    Exp {
        rate: f64,
    },
    /// Convex mixture `weight * Erlang(2, rate) + (1 - weight) * Exp(rate)`.
    ErlangExpMix {
        weight: f64,
        rate: f64,
    },
    HalfNormal {
        sigma: f64,
    },
    HalfCauchy {
        gamma: f64,
    },
    Lomax {
        c: f64,
        lambda: f64,
    },
    HalfLogistic {
        scale: f64,
    },
    Tabulated(TabulatedKernel),
}

impl NoiseKernel {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKernel::Exp { .. } => "exp",
            NoiseKernel::ErlangExpMix { .. } => "erlang_exp_mix",
            NoiseKernel::HalfNormal { .. } => "halfnormal",
            NoiseKernel::HalfCauchy { .. } => "halfcauchy",
            NoiseKernel::Lomax { .. } => "lomax",
            NoiseKernel::HalfLogistic { .. } => "halflogistic",
            NoiseKernel::Tabulated(_) => "tabulated",
        }
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            NoiseKernel::Exp { rate } => vec![("rate", rate)],
            NoiseKernel::ErlangExpMix { weight, rate } => vec![("weight", weight), ("rate", rate)],
            NoiseKernel::HalfNormal { sigma } => vec![("sigma", sigma)],
            NoiseKernel::HalfCauchy { gamma } => vec![("gamma", gamma)],
            NoiseKernel::Lomax { c, lambda } => vec![("c", c), ("lambda", lambda)],
            NoiseKernel::HalfLogistic { scale } => vec![("scale", scale)],
            NoiseKernel::Tabulated(_) => Vec::new(),
        }
    }

    /// `k(x)`; zero for negative arguments.
    pub fn density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            NoiseKernel::Exp { rate } => rate * (-rate * x).exp(),
            NoiseKernel::ErlangExpMix { weight, rate } => {
                let e = (-rate * x).exp();
                weight * rate * rate * x * e + (1.0 - weight) * rate * e
            }
            NoiseKernel::HalfNormal { sigma } => {
                let z = x / sigma;
                (FRAC_2_PI).sqrt() / sigma * (-0.5 * z * z).exp()
            }
            NoiseKernel::HalfCauchy { gamma } => {
                let z = x / gamma;
                2.0 / (PI * gamma * (1.0 + z * z))
            }
            NoiseKernel::Lomax { c, lambda } => c / lambda * (1.0 + x / lambda).powf(-(c + 1.0)),
            NoiseKernel::HalfLogistic { scale } => {
                let e = (-x / scale).exp();
                2.0 * e / (scale * (1.0 + e) * (1.0 + e))
            }
            NoiseKernel::Tabulated(ref t) => t.density(x),
        }
    }

    /// Value used on quadrature nodes: the mean of the one-sided limits.
    /// Differs from [`density`](Self::density) only at the cut-off of a
    /// table whose last value is nonzero.
    pub fn node_value(&self, x: f64) -> f64 {
        match self {
            NoiseKernel::Tabulated(t) if x == *t.grid.last().unwrap() => {
                0.5 * t.values.last().unwrap()
            }
            _ => self.density(x),
        }
    }

    /// `k(0)`.
    pub fn at_zero(&self) -> f64 {
        self.density(0.0)
    }

    /// `∫₀ˣ k`. Closed form for the built-in families; exact piecewise
    /// quadratic integration for tables.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            NoiseKernel::Exp { rate } => -(-rate * x).exp_m1(),
            NoiseKernel::ErlangExpMix { weight, rate } => {
                let e = (-rate * x).exp();
                let erlang = 1.0 - e * (1.0 + rate * x);
                weight * erlang + (1.0 - weight) * (1.0 - e)
            }
            NoiseKernel::HalfNormal { sigma } => libm::erf(x / (sigma * std::f64::consts::SQRT_2)),
            NoiseKernel::HalfCauchy { gamma } => FRAC_2_PI * (x / gamma).atan(),
            NoiseKernel::Lomax { c, lambda } => 1.0 - (1.0 + x / lambda).powf(-c),
            NoiseKernel::HalfLogistic { scale } => (0.5 * x / scale).tanh(),
            NoiseKernel::Tabulated(ref t) => t.mass_below(x),
        }
    }

    /// Draws `Y ~ k`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseKernel::Exp { rate } => Exp::new(rate).unwrap().sample(rng),
            NoiseKernel::ErlangExpMix { weight, rate } => {
                if rng.random::<f64>() < weight {
                    Gamma::new(2.0, 1.0 / rate).unwrap().sample(rng)
                } else {
                    Exp::new(rate).unwrap().sample(rng)
                }
            }
            NoiseKernel::HalfNormal { sigma } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                sigma * z.abs()
            }
            NoiseKernel::HalfCauchy { gamma } => {
                let u: f64 = rng.sample(Open01);
                gamma * (0.5 * PI * u).tan()
            }
            NoiseKernel::Lomax { c, lambda } => {
                let u: f64 = rng.sample(Open01);
                lambda * (u.powf(-1.0 / c) - 1.0)
            }
            NoiseKernel::HalfLogistic { scale } => {
                let u: f64 = rng.sample(Open01);
                2.0 * scale * u.atanh()
            }
            NoiseKernel::Tabulated(ref t) => t.quantile(rng.random::<f64>()),
        }
    }

    /// Checks that the density does not increase along a grid on
    /// `[0, upto]` (or over the table nodes for a tabulated kernel).
    pub fn is_nonincreasing(&self, upto: f64, points: usize) -> bool {
        let slack = 1e-12 * self.at_zero();
        let check = |xs: &mut dyn Iterator<Item = f64>| {
            let mut prev = f64::INFINITY;
            for x in xs {
                let k = self.density(x);
                if k > prev + slack {
                    return false;
                }
                prev = k;
            }
            true
        };
        match self {
            NoiseKernel::Tabulated(t) => check(&mut t.grid.iter().copied()),
            _ => {
                let step = upto / (points.max(2) - 1) as f64;
                check(&mut (0..points.max(2)).map(|i| i as f64 * step))
            }
        }
    }
}

impl fmt::Display for NoiseKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let NoiseKernel::Tabulated(t) = self {
            return write!(f, "tabulated[{} points]", t.grid.len());
        }
        write!(f, "{}", self.name())?;
        for (i, (key, value)) in self.params().into_iter().enumerate() {
            let sep = if i == 0 { ':' } else { ',' };
            write!(f, "{sep}{key}={value}")?;
        }
        Ok(())
    }
}

/// Builds one of the named families. Missing parameters take the defaults
/// `exp(rate=1)`, `erlang_exp_mix(weight=0.25, rate=2)`,
/// `halfnormal(sigma=1)`, `halfcauchy(gamma=2)`, `lomax(c=10, lambda=1)`
/// and `halflogistic(scale=1)`.
pub fn builtin_kernel(name: &str, params: &[(&str, f64)]) -> Result<NoiseKernel> {
    let allowed: &[&str] = match name {
        "exp" => &["rate"],
        "erlang_exp_mix" => &["weight", "rate"],
        "halfnormal" => &["sigma"],
        "halfcauchy" => &["gamma"],
        "lomax" => &["c", "lambda"],
        "halflogistic" => &["scale"],
        _ => {
            return Err(Error::param(format!(
                "unknown kernel '{name}' (expected one of {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    for (key, _) in params {
        if !allowed.contains(key) {
            return Err(Error::param(format!(
                "kernel '{name}' has no parameter '{key}' (expected {})",
                allowed.join(", ")
            )));
        }
    }
    let get = |key: &str, default: f64| -> Result<f64> {
        let value = params
            .iter()
            .rev()
            .find(|(k, _)| *k == key)
            .map_or(default, |&(_, v)| v);
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::param(format!(
                "kernel '{name}': parameter {key} must be positive and finite, got {value}"
            )));
        }
        Ok(value)
    };
    let kernel = match name {
        "exp" => NoiseKernel::Exp {
            rate: get("rate", 1.0)?,
        },
        "erlang_exp_mix" => {
            let weight = get("weight", 0.25)?;
            if weight > 1.0 {
                return Err(Error::param(format!(
                    "erlang_exp_mix: weight must lie in (0, 1], got {weight}"
                )));
            }
            NoiseKernel::ErlangExpMix {
                weight,
                rate: get("rate", 2.0)?,
            }
        }
        "halfnormal" => NoiseKernel::HalfNormal {
            sigma: get("sigma", 1.0)?,
        },
        "halfcauchy" => NoiseKernel::HalfCauchy {
            gamma: get("gamma", 2.0)?,
        },
        "lomax" => NoiseKernel::Lomax {
            c: get("c", 10.0)?,
            lambda: get("lambda", 1.0)?,
        },
        "halflogistic" => NoiseKernel::HalfLogistic {
            scale: get("scale", 1.0)?,
        },
        _ => unreachable!(),
    };
    Ok(kernel)
}

/// The six noise laws of the simulation study with their default parameters.
pub fn study_kernels() -> Vec<NoiseKernel> {
    BUILTIN_NAMES
        .iter()
        .map(|name| builtin_kernel(name, &[]).expect("defaults are valid"))
        .collect()
}

pub fn load_tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<NoiseKernel> {
    TabulatedKernel::new(grid, values).map(NoiseKernel::Tabulated)
}

/// Parses `"name"`, `"name:key=value,key=value"` or `"file:PATH"` (a
/// two-column `x,k` CSV).
pub fn parse_kernel_spec(spec: &str) -> Result<NoiseKernel> {
    let spec = spec.trim();
    let (name, rest) = match spec.split_once(':') {
        Some((name, rest)) => (name.trim(), rest.trim()),
        None => (spec, ""),
    };
    if name == "file" {
        return crate::io::read_kernel_csv(std::path::Path::new(rest));
    }
    let mut params = Vec::new();
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("kernel parameter '{item}' is not key=value")))?;
        let value: f64 = value.trim().parse().map_err(|_| {
            Error::Config(format!(
                "kernel parameter '{key}' has non-numeric value '{value}'"
            ))
        })?;
        params.push((key.trim(), value));
    }
    builtin_kernel(name, &params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn at_zero_values() {
        assert_eq!(
            builtin_kernel("exp", &[("rate", 1.0)]).unwrap().at_zero(),
            1.0
        );
        assert_abs_diff_eq!(
            builtin_kernel("halfnormal", &[("sigma", 1.0)])
                .unwrap()
                .at_zero(),
            (2.0 / PI).sqrt(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!((2.0 / PI).sqrt(), 0.797885, epsilon = 1e-6);
        assert_abs_diff_eq!(
            builtin_kernel("lomax", &[("c", 10.0), ("lambda", 1.0)])
                .unwrap()
                .at_zero(),
            10.0,
            epsilon = 1e-12
        );
        let hc = builtin_kernel("halfcauchy", &[("gamma", 2.0)])
            .unwrap()
            .at_zero();
        assert_abs_diff_eq!(hc, 1.0 / PI, epsilon = 1e-15);
        assert_eq!(
            builtin_kernel("erlang_exp_mix", &[]).unwrap().at_zero(),
            1.5
        );
        assert_eq!(builtin_kernel("halflogistic", &[]).unwrap().at_zero(), 0.5);
    }

    #[test]
    fn rejects_unknown_name_and_bad_params() {
        assert!(matches!(
            builtin_kernel("gumbel", &[]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(builtin_kernel("exp", &[("rate", 0.0)]).is_err());
        assert!(builtin_kernel("lomax", &[("c", -1.0)]).is_err());
        assert!(builtin_kernel("halfnormal", &[("sigma", f64::NAN)]).is_err());
        assert!(builtin_kernel("exp", &[("sigma", 1.0)]).is_err());
        assert!(builtin_kernel("erlang_exp_mix", &[("weight", 1.5)]).is_err());
    }

    #[test]
    fn quadrature_matches_closed_form_cdf() {
        for kernel in study_kernels() {
            for &x in &[1.0, 5.0] {
                let numeric = simpson(|t| kernel.density(t), 0.0, x, 20_000);
                let diff = (numeric - kernel.cdf(x)).abs();
                assert!(
                    diff < 1e-3,
                    "{kernel} at {x}: {numeric} vs {}",
                    kernel.cdf(x)
                );
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for kernel in study_kernels() {
            let far = match kernel {
                NoiseKernel::HalfCauchy { .. } => 1e6,
                _ => 200.0,
            };
            assert!((kernel.cdf(far) - 1.0).abs() < 1e-5, "{kernel}");
        }
    }

    #[test]
    fn samplers_match_cdf_ks() {
        let n = 10_000;
        for (i, kernel) in study_kernels().into_iter().enumerate() {
            let mut rng = stream(77, &[i as u64]);
            let mut xs: Vec<f64> = (0..n).map(|_| kernel.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            let ks = xs
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    let f = kernel.cdf(x);
                    (f - j as f64 / n as f64)
                        .abs()
                        .max(((j + 1) as f64 / n as f64 - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.02, "{kernel}: KS = {ks}");
        }
    }

    #[test]
    fn study_kernels_are_decreasing() {
        for kernel in study_kernels() {
            assert!(kernel.is_nonincreasing(50.0, 50_001), "{kernel}");
        }
        let rising = load_tabulated(vec![0.0, 1.0, 2.0], vec![0.5, 1.0, 0.0]).unwrap();
        assert!(!rising.is_nonincreasing(2.0, 10));
    }

    #[test]
    fn tabulated_examples() {
        let flat = load_tabulated(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(flat.density(0.5), 1.0);
        assert_eq!(flat.density(1.0), 1.0);
        assert_eq!(flat.density(1.5), 0.0);
        let ramp = load_tabulated(vec![0.0, 2.0], vec![2.0, 0.0]).unwrap();
        assert_eq!(ramp.density(1.0), 1.0);
        assert!(matches!(
            load_tabulated(vec![0.0, 1.0], vec![0.0, 1.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(load_tabulated(vec![0.0, 1.0, 0.5], vec![1.0, 1.0, 1.0]).is_err());
        assert!(load_tabulated(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn tabulated_sampler_follows_density() {
        let ramp = load_tabulated(vec![0.0, 2.0], vec![1.0, 0.0]).unwrap();
        let mut rng = stream(5, &[]);
        let n = 10_000;
        let mut xs: Vec<f64> = (0..n).map(|_| ramp.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(j, &x)| (ramp.cdf(x) - (j as f64 + 0.5) / n as f64).abs())
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS = {ks}");
    }

    #[test]
    fn at_zero_is_density_at_zero() {
        for kernel in study_kernels() {
            assert_eq!(kernel.at_zero(), kernel.density(0.0));
        }
    }

    #[test]
    fn spec_strings() {
        let k = parse_kernel_spec("lomax:c=10,lambda=1").unwrap();
        assert_eq!(
            k,
            NoiseKernel::Lomax {
                c: 10.0,
                lambda: 1.0
            }
        );
        assert_eq!(
            parse_kernel_spec("exp").unwrap(),
            NoiseKernel::Exp { rate: 1.0 }
        );
        assert_eq!(k.to_string(), "lomax:c=10,lambda=1");
        assert_eq!(parse_kernel_spec(&k.to_string()).unwrap(), k);
        assert!(matches!(
            parse_kernel_spec("exp:rate"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_kernel_spec("exp:rate=x"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn file_spec_reads_a_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        std::fs::write(&path, "x,k\n0,1\n1,1\n").unwrap();
        let k = parse_kernel_spec(&format!("file:{}", path.display())).unwrap();
        assert_eq!(k.at_zero(), 1.0);
        assert!(matches!(
            parse_kernel_spec("file:/no/such/file.csv"),
            Err(Error::Io(_) | Error::Csv(_))
        ));
    }

    #[test]
    fn node_value_splits_the_cutoff_jump() {
        let k = load_tabulated(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(k.node_value(0.5), 1.0);
        assert_eq!(k.node_value(1.0), 0.5);
        assert_eq!(k.node_value(1.5), 0.0);
        let e = NoiseKernel::Exp { rate: 2.0 };
        assert_eq!(e.node_value(0.3), e.density(0.3));
    }
}
