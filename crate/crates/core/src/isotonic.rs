//! Greatest convex minorants of sampled curves and their right derivatives.
//!
//! The minorant is the lower convex hull of the sample points, which is the
//! GCM of the piecewise-linear interpolant. Its slope sequence coincides
//! with the weighted isotonic regression of the chord slopes (weights equal
//! to the cell widths), which [`pava`] computes independently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Curve values on a strictly increasing grid starting at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl SampledCurve {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::input(format!(
                "curve has {} abscissae but {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::input("curve needs at least two points"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::input("curve contains non-finite values"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("curve abscissae must be strictly increasing"));
        }
        if xs[0] != 0.0 || ys[0] != 0.0 {
            return Err(Error::input(format!(
                "curve must start at the origin, starts at ({}, {})",
                xs[0], ys[0]
            )));
        }
        Ok(SampledCurve { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Chord slopes and widths of consecutive cells.
    pub fn chord_slopes(&self) -> (Vec<f64>, Vec<f64>) {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0]), x[1] - x[0]))
            .unzip()
    }
}

/// Vertices of the lower convex hull; consecutive slopes strictly increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexMinorant {
    knot_xs: Vec<f64>,
    knot_ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl ConvexMinorant {
    /// Builds the minorant directly from hull vertices.
    pub fn from_knots(knot_xs: Vec<f64>, knot_ys: Vec<f64>) -> Result<Self> {
        if knot_xs.len() != knot_ys.len() || knot_xs.len() < 2 {
            return Err(Error::input("minorant needs at least two matching knots"));
        }
        if knot_xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("minorant knots must be strictly increasing"));
        }
        let slopes = segment_slopes(&knot_xs, &knot_ys);
        if slopes.windows(2).any(|s| s[1] <= s[0]) {
            return Err(Error::input("minorant knot slopes must strictly increase"));
        }
        Ok(ConvexMinorant {
            knot_xs,
            knot_ys,
            slopes,
        })
    }

    pub fn knot_xs(&self) -> &[f64] {
        &self.knot_xs
    }

    pub fn knot_ys(&self) -> &[f64] {
        &self.knot_ys
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    fn last_x(&self) -> f64 {
        *self.knot_xs.last().unwrap()
    }

    /// Index of the segment whose half-open span `[xᵢ, xᵢ₊₁)` holds `x`;
    /// the final knot maps to the last segment.
    fn segment(&self, x: f64) -> Result<usize> {
        if !(x >= self.knot_xs[0] && x <= self.last_x()) {
            return Err(Error::input(format!(
                "x = {x} lies outside the minorant domain [{}, {}]",
                self.knot_xs[0],
                self.last_x()
            )));
        }
        let i = self.knot_xs.partition_point(|&k| k <= x);
        Ok(i.saturating_sub(1).min(self.slopes.len() - 1))
    }

    /// Value of the minorant at `x`.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let i = self.segment(x)?;
        Ok(self.knot_ys[i] + self.slopes[i] * (x - self.knot_xs[i]))
    }

    /// Slope immediately to the right of `x`; constant past the last knot.
    pub fn right_derivative(&self, x: f64) -> Result<f64> {
        Ok(self.slopes[self.segment(x)?])
    }
}

fn segment_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
        .collect()
}

/// Lower convex hull by a monotone-chain scan. Collinear points are
/// dropped, so no two consecutive hull segments share a slope.
pub fn gcm(curve: &SampledCurve) -> ConvexMinorant {
    let mut hx: Vec<f64> = Vec::with_capacity(curve.len());
    let mut hy: Vec<f64> = Vec::with_capacity(curve.len());
    for (&x, &y) in curve.xs.iter().zip(&curve.ys) {
        while hx.len() >= 2 {
            let n = hx.len();
            let (x0, y0, x1, y1) = (hx[n - 2], hy[n - 2], hx[n - 1], hy[n - 1]);
            // Keep the middle point only for a strict left turn.
            let cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
            if cross <= 0.0 {
                hx.pop();
                hy.pop();
            } else {
                break;
            }
        }
        hx.push(x);
        hy.push(y);
    }
    let slopes = segment_slopes(&hx, &hy);
    ConvexMinorant {
        knot_xs: hx,
        knot_ys: hy,
        slopes,
    }
}

/// Right-continuous step function: `levels[j]` holds on `[xs[j], xs[j+1])`,
/// and the last level also at the final abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCdf {
    xs: Vec<f64>,
    levels: Vec<f64>,
}

impl StepCdf {
    pub fn new(xs: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || levels.len() + 1 != xs.len() {
            return Err(Error::input(format!(
                "step function needs one level per cell: {} abscissae, {} levels",
                xs.len(),
                levels.len()
            )));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input(
                "step function abscissae must be strictly increasing",
            ));
        }
        Ok(StepCdf { xs, levels })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Value at grid abscissa `j` (the last abscissa repeats the last level).
    pub fn value_at_index(&self, j: usize) -> f64 {
        self.levels[j.min(self.levels.len() - 1)]
    }

    /// Values at every grid abscissa, including the last.
    pub fn grid_values(&self) -> Vec<f64> {
        (0..self.xs.len()).map(|j| self.value_at_index(j)).collect()
    }

    pub fn value_at(&self, x: f64) -> Result<f64> {
        let last = *self.xs.last().unwrap();
        if !(x >= self.xs[0] && x <= last) {
            return Err(Error::input(format!(
                "x = {x} lies outside the step function domain [{}, {last}]",
                self.xs[0]
            )));
        }
        let i = self.xs.partition_point(|&g| g <= x).saturating_sub(1);
        Ok(self.value_at_index(i))
    }

    /// Levels clamped to `[0, 1]` for display as a distribution function.
    pub fn clamped(&self) -> StepCdf {
        StepCdf {
            xs: self.xs.clone(),
            levels: self.levels.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Running integral from the first abscissa.
    pub fn integral(&self) -> Result<SampledCurve> {
        let mut ys = Vec::with_capacity(self.xs.len());
        ys.push(0.0);
        for (j, level) in self.levels.iter().enumerate() {
            ys.push(ys[j] + level * (self.xs[j + 1] - self.xs[j]));
        }
        SampledCurve::new(self.xs.clone(), ys)
    }
}

/// Right derivative of the GCM, one level per grid cell.
pub fn isotonize(curve: &SampledCurve) -> StepCdf {
    let minorant = gcm(curve);
    let mut levels = Vec::with_capacity(curve.len() - 1);
    let mut segment = 0;
    for &x in &curve.xs[..curve.len() - 1] {
        while segment + 1 < minorant.slopes.len() && minorant.knot_xs[segment + 1] <= x {
            segment += 1;
        }
        levels.push(minorant.slopes[segment]);
    }
    StepCdf {
        xs: curve.xs.clone(),
        levels,
    }
}

/// Weighted isotonic (nondecreasing) least-squares fit by pooling adjacent
/// violators.
pub fn pava(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if values.len() != weights.len() {
        return Err(Error::input(format!(
            "pava: {} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::input(format!("pava: weight {w} is not positive")));
    }
    // (mean, total weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut block = (v, w, 1);
        while let Some(&(prev_mean, prev_w, prev_n)) = blocks.last() {
            if prev_mean <= block.0 {
                break;
            }
            blocks.pop();
            let total = prev_w + block.1;
            block = (
                (prev_mean * prev_w + block.0 * block.1) / total,
                total,
                prev_n + block.2,
            );
        }
        blocks.push(block);
    }
    Ok(blocks
        .into_iter()
        .flat_map(|(mean, _, n)| std::iter::repeat_n(mean, n))
        .collect())
}
