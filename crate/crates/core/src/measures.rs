//! Discrete probability measures and Dirichlet-process draws.
//!
//! Posterior draws use the exact decomposition
//! `G = V·Q + (1 − V)·B` with `V ~ Beta(M, n)`, `Q ~ DP(M·α)` and `B` a
//! Bayesian bootstrap measure on the data.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Stick-breaking stops once the unassigned mass falls below this.
pub const STICK_TOLERANCE: f64 = 1e-8;
/// Hard cap on the number of sticks in one prior draw.
pub const MAX_STICKS: usize = 5000;

/// Atoms on `[0, ∞)` carrying nonnegative weights that sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let measure = DiscreteMeasure { atoms, weights };
        measure.validate()?;
        Ok(measure)
    }

    /// Checks every invariant of the type.
    pub fn validate(&self) -> Result<()> {
        if self.atoms.len() != self.weights.len() {
            return Err(Error::input(format!(
                "measure has {} atoms but {} weights",
                self.atoms.len(),
                self.weights.len()
            )));
        }
        if self.atoms.is_empty() {
            return Err(Error::input("measure has no atoms"));
        }
        if let Some(a) = self.atoms.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::input(format!(
                "atom {a} is not a finite nonnegative value"
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::input(format!(
                "weight {w} is not a finite nonnegative value"
            )));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::input(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `μ([0, x])`.
    pub fn mass_up_to(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .filter(|(a, _)| **a <= x)
            .map(|(_, w)| w)
            .sum()
    }

    /// `w·a + (1 − w)·b`, keeping every atom of both measures.
    pub fn mixture(w: f64, a: &DiscreteMeasure, b: &DiscreteMeasure) -> DiscreteMeasure {
        let mut atoms = Vec::with_capacity(a.len() + b.len());
        let mut weights = Vec::with_capacity(a.len() + b.len());
        atoms.extend_from_slice(&a.atoms);
        weights.extend(a.weights.iter().map(|x| w * x));
        atoms.extend_from_slice(&b.atoms);
        weights.extend(b.weights.iter().map(|x| (1.0 - w) * x));
        DiscreteMeasure { atoms, weights }
    }
}

/// `DP(M·α)` with `α = Gamma(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpPrior {
    pub precision: f64,
    pub base_shape: f64,
    pub base_rate: f64,
}

impl Default for DpPrior {
    fn default() -> Self {
        DpPrior {
            precision: 10.0,
            base_shape: 2.0,
            base_rate: 2.0,
        }
    }
}

impl DpPrior {
    pub fn new(precision: f64, base_shape: f64, base_rate: f64) -> Result<Self> {
        let prior = DpPrior {
            precision,
            base_shape,
            base_rate,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("precision", self.precision),
            ("base shape", self.base_shape),
            ("base rate", self.base_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!(
                    "DP prior {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Distribution function of the base measure.
    pub fn base_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        regularized_lower_gamma(self.base_shape, self.base_rate * x)
    }

    fn base_distribution(&self) -> Gamma<f64> {
        Gamma::new(self.base_shape, 1.0 / self.base_rate).expect("validated prior")
    }
}

/// `P(a, x)` by its power series or continued fraction.
fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    let log_prefactor = a * x.ln() - x - libm::lgamma(a);
    if x < a + 1.0 {
        let (mut term, mut sum, mut n) = (1.0 / a, 1.0 / a, a);
        for _ in 0..500 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * log_prefactor.exp()
    } else {
        // Lentz's method for the upper tail.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - log_prefactor.exp() * h
    }
}

fn check_data(data: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("no observations"));
    }
    if let Some(z) = data.iter().find(|z| !(z.is_finite() && **z >= 0.0)) {
        return Err(Error::input(format!(
            "observation {z} is not a finite nonnegative value"
        )));
    }
    Ok(())
}

/// Equal weights `1/n` on the observations.
pub fn empirical_measure(data: &[f64]) -> Result<DiscreteMeasure> {
    check_data(data)?;
    let w = 1.0 / data.len() as f64;
    Ok(DiscreteMeasure {
        atoms: data.to_vec(),
        weights: vec![w; data.len()],
    })
}

/// Stick-breaking draw from the prior.
pub fn draw_dp_prior<R: Rng + ?Sized>(prior: &DpPrior, rng: &mut R) -> DiscreteMeasure {
    let base = prior.base_distribution();
    let inv_precision = 1.0 / prior.precision;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut leftover = 1.0;
    while leftover >= STICK_TOLERANCE && atoms.len() < MAX_STICKS {
        // Beta(1, M) by inversion.
        let u: f64 = rng.sample(Open01);
        let fraction = -(inv_precision * u.ln()).exp_m1();
        let w = leftover * fraction;
        atoms.push(base.sample(rng));
        weights.push(w);
        leftover -= w;
    }
    *weights.last_mut().expect("at least one stick") += leftover;
    DiscreteMeasure { atoms, weights }
}

/// Dirichlet(1, …, 1) weights on the observations.
pub fn bayesian_bootstrap<R: Rng + ?Sized>(data: &[f64], rng: &mut R) -> Result<DiscreteMeasure> {
    check_data(data)?;
    let mut weights: Vec<f64> = (0..data.len())
        .map(|_| rng.sample::<f64, _>(Exp1))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(DiscreteMeasure {
        atoms: data.to_vec(),
        weights,
    })
}

/// The three ingredients of a posterior draw, before merging.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    /// Weight `V ~ Beta(M, n)` given to the prior part.
    pub prior_share: f64,
    pub prior_part: DiscreteMeasure,
    pub bootstrap_part: DiscreteMeasure,
}

impl PosteriorDraw {
    pub fn merged(&self) -> DiscreteMeasure {
        DiscreteMeasure::mixture(self.prior_share, &self.prior_part, &self.bootstrap_part)
    }
}

/// Posterior draw kept in its decomposed form.
pub fn draw_dp_posterior_parts<R: Rng + ?Sized>(
    prior: &DpPrior,
    data: &[f64],
    rng: &mut R,
) -> Result<PosteriorDraw> {
    check_data(data)?;
    prior.validate()?;
    let a = Gamma::new(prior.precision, 1.0)
        .expect("validated")
        .sample(rng);
    let b = Gamma::new(data.len() as f64, 1.0)
        .expect("n >= 1")
        .sample(rng);
    let prior_share = if a + b > 0.0 { a / (a + b) } else { 0.0 };
    let prior_part = draw_dp_prior(prior, rng);
    let bootstrap_part = bayesian_bootstrap(data, rng)?;
    Ok(PosteriorDraw {
        prior_share,
        prior_part,
        bootstrap_part,
    })
}

/// Draw from `DP(M·α + n·𝔾ₙ)`.
pub fn draw_dp_posterior<R: Rng + ?Sized>(
    prior: &DpPrior,
    data: &[f64],
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    Ok(draw_dp_posterior_parts(prior, data, rng)?.merged())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    fn gamma22_cdf(x: f64) -> f64 {
        1.0 - (-2.0 * x).exp() * (1.0 + 2.0 * x)
    }

    #[test]
    fn base_cdf_matches_closed_form() {
        let prior = DpPrior::default();
        for &x in &[0.1, 0.5, 1.0, 3.0, 10.0] {
            assert_abs_diff_eq!(prior.base_cdf(x), gamma22_cdf(x), epsilon = 1e-13);
        }
        // Shape 1 is the exponential law.
        let e = DpPrior::new(1.0, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(e.base_cdf(3.0), 1.0 - (-1.5f64).exp(), epsilon = 1e-13);
    }

    #[test]
    fn empirical_examples() {
        let m = empirical_measure(&[2.0]).unwrap();
        assert_eq!(m.atoms(), &[2.0]);
        assert_eq!(m.weights(), &[1.0]);
        let m = empirical_measure(&[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(m.weights(), &[1.0 / 3.0; 3]);
        assert!(empirical_measure(&[]).is_err());
        assert!(empirical_measure(&[1.0, -0.1]).is_err());
    }

    #[test]
    fn prior_draws_are_valid_and_rarely_long() {
        let prior = DpPrior::default();
        let mut max_len = 0;
        for s in 0..1000 {
            let g = draw_dp_prior(&prior, &mut stream(1, &[s]));
            g.validate().unwrap();
            max_len = max_len.max(g.len());
        }
        assert!(max_len < MAX_STICKS, "truncation cap reached");
    }

    #[test]
    fn stick_count_tracks_precision_times_log_tolerance() {
        let prior = DpPrior::default();
        let mean_len = (0..1000)
            .map(|s| draw_dp_prior(&prior, &mut stream(2, &[s])).len() as f64)
            .sum::<f64>()
            / 1000.0;
        let expected = 10.0 * (1e8f64).ln();
        assert!(
            (mean_len - expected).abs() < 0.1 * expected,
            "{mean_len} vs {expected}"
        );
    }

    #[test]
    fn tiny_precision_puts_mass_on_first_stick() {
        let prior = DpPrior::new(1e-6, 2.0, 2.0).unwrap();
        let mean_first = (0..200)
            .map(|s| draw_dp_prior(&prior, &mut stream(3, &[s])).weights()[0])
            .sum::<f64>()
            / 200.0;
        assert!(mean_first > 0.999);
    }

    #[test]
    fn prior_mean_is_base_measure() {
        let prior = DpPrior::default();
        let mean = (0..1000)
            .map(|s| draw_dp_prior(&prior, &mut stream(4, &[s])).mass_up_to(1.0))
            .sum::<f64>()
            / 1000.0;
        assert!((mean - gamma22_cdf(1.0)).abs() < 0.03, "{mean}");
    }

    #[test]
    fn bootstrap_moments() {
        let w = bayesian_bootstrap(&[4.0], &mut stream(5, &[])).unwrap();
        assert_eq!(w.weights(), &[1.0]);

        let data = [1.0, 2.0, 3.0];
        let draws: Vec<f64> = (0..10_000)
            .map(|s| {
                bayesian_bootstrap(&data, &mut stream(6, &[s]))
                    .unwrap()
                    .weights()[0]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((mean - 1.0 / 3.0).abs() < 0.01);
        // Beta(1, 2) marginal: (n - 1) / (n² (n + 1)) = 2/36.
        assert!((var - 2.0 / 36.0).abs() < 0.005, "{var}");
        assert!(bayesian_bootstrap(&[], &mut stream(6, &[])).is_err());
    }

    #[test]
    fn vanishing_precision_posterior_is_bootstrap() {
        let prior = DpPrior::new(1e-9, 2.0, 2.0).unwrap();
        let data: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let mut on_data = 0.0;
        for s in 0..50 {
            let draw = draw_dp_posterior_parts(&prior, &data, &mut stream(7, &[s])).unwrap();
            on_data += 1.0 - draw.prior_share;
        }
        assert!(on_data / 50.0 > 1.0 - 1e-6);
    }

    #[test]
    fn single_observation_share() {
        let prior = DpPrior::default();
        let n = 10_000;
        let mean = (0..n)
            .map(|s| {
                let d = draw_dp_posterior_parts(&prior, &[5.0], &mut stream(8, &[s])).unwrap();
                1.0 - d.prior_share
            })
            .sum::<f64>()
            / n as f64;
        // E(1 − V) = n / (M + n) = 1/11; sd of Beta(1, 10) ≈ 0.0791.
        assert!(
            (mean - 1.0 / 11.0).abs() < 3.0 * 0.0791 / (n as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn posterior_draws_are_valid_and_deterministic() {
        let prior = DpPrior::default();
        let data = [0.3, 1.2, 2.5, 0.7];
        let a = draw_dp_posterior(&prior, &data, &mut stream(9, &[1])).unwrap();
        let b = draw_dp_posterior(&prior, &data, &mut stream(9, &[1])).unwrap();
        a.validate().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn posterior_mean_matches_conjugate_formula() {
        let prior = DpPrior::default();
        let mut rng = stream(10, &[]);
        let data: Vec<f64> = (0..200)
            .map(|_| rng.sample::<f64, _>(Exp1) / 1.2 + rng.sample::<f64, _>(Exp1))
            .collect();
        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        let probes = [sorted[50], sorted[100], sorted[150]];
        let empirical = empirical_measure(&data).unwrap();
        for seed in [11u64, 12] {
            let mut sums = [0.0; 3];
            for s in 0..2000 {
                let g = draw_dp_posterior(&prior, &data, &mut stream(seed, &[s])).unwrap();
                for (acc, &x) in sums.iter_mut().zip(&probes) {
                    *acc += g.mass_up_to(x);
                }
            }
            for (acc, &x) in sums.iter().zip(&probes) {
                let expected = (10.0 * prior.base_cdf(x) + 200.0 * empirical.mass_up_to(x)) / 210.0;
                assert!((acc / 2000.0 - expected).abs() < 0.02);
            }
        }
    }

    #[test]
    fn mixture_and_validation() {
        let a = empirical_measure(&[1.0]).unwrap();
        let b = empirical_measure(&[2.0, 3.0]).unwrap();
        let m = DiscreteMeasure::mixture(0.25, &a, &b);
        m.validate().unwrap();
        assert_eq!(m.weights(), &[0.25, 0.375, 0.375]);
        assert!(DiscreteMeasure::new(vec![1.0], vec![0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![-1.0], vec![1.0]).is_err());
        assert!(DpPrior::new(0.0, 2.0, 2.0).is_err());
    }
}
