//! The quantal response statistical equilibrium model.
//!
//! A typical agent buys with probability `1 / (1 + exp((r - mu) / T))` and
//! sells with the complementary probability. Maximising joint entropy under a
//! feedback constraint with multiplier `1 / S` gives the marginal kernel
//!
//! ```text
//! log f(r) = H_T,mu(r) - tanh((r - mu) / 2T) * (r - alpha) / S + const
//! ```
//!
//! where `H_T,mu` is the binary entropy of the buy/sell choice at `r`.
//! Returns and all four parameters are in %/day.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QrseError, Result};
use crate::stats::{summarize_weighted, SummaryStats};

/// Largest normalized mass a boundary node may carry before the grid is
/// considered too narrow for the distribution.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrseParams {
    /// Fundamental valuation: the return at which buying and selling are equally likely.
    pub mu: f64,
    /// Behavioral temperature `T`.
    pub temp: f64,
    /// Conventional return level that trading feedback pushes toward.
    pub alpha: f64,
    /// Feedback temperature `S`, the inverse multiplier of the feedback constraint.
    pub scale: f64,
}

impl Default for QrseParams {
    fn default() -> Self {
        Self {
            mu: 0.0,
            temp: 1.0,
            alpha: 0.0,
            scale: 1.0,
        }
    }
}

impl QrseParams {
    pub fn new(mu: f64, temp: f64, alpha: f64, scale: f64) -> Result<Self> {
        let p = Self {
            mu,
            temp,
            alpha,
            scale,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.alpha.is_finite()) {
            return Err(QrseError::Parameter(format!(
                "mu and alpha must be finite, got mu={}, alpha={}",
                self.mu, self.alpha
            )));
        }
        if !(self.temp > 0.0 && self.temp.is_finite()) {
            return Err(QrseError::Parameter(format!("T must be positive, got {}", self.temp)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(QrseError::Parameter(format!("S must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    /// Expectation gap `mu - alpha`; zero when expectations are fulfilled.
    pub fn zeta(&self) -> f64 {
        self.mu - self.alpha
    }

    /// Inverse behavioral temperature.
    pub fn beta(&self) -> f64 {
        1.0 / self.temp
    }

    /// Inverse feedback temperature, the feedback constraint's multiplier.
    pub fn gamma(&self) -> f64 {
        1.0 / self.scale
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            mu: self.mu + c,
            alpha: self.alpha + c,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionProbs {
    pub buy: f64,
    pub sell: f64,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logit quantal response: `p_buy = 1/(1+e^{(r-mu)/T})`, `p_sell = 1 - p_buy`.
pub fn conditional_action_prob(r: f64, params: &QrseParams) -> ActionProbs {
    let x = (r - params.mu) / params.temp;
    ActionProbs {
        buy: logistic(-x),
        sell: logistic(x),
    }
}

/// `p_sell - p_buy`, which equals `tanh((r - mu) / 2T)`.
pub fn action_difference(r: f64, params: &QrseParams) -> f64 {
    ((r - params.mu) / (2.0 * params.temp)).tanh()
}

/// Entropy (nats) of the buy/sell choice at `r`.
///
/// Written as `ln(1 + e^{-a}) + a * sigma(-a)` with `a = |r - mu| / T`, which
/// never forms `0 * ln 0` and stays accurate deep into saturation.
pub fn binary_entropy(r: f64, params: &QrseParams) -> f64 {
    let a = ((r - params.mu) / params.temp).abs();
    let e = (-a).exp();
    e.ln_1p() + a * e / (1.0 + e)
}

/// Unnormalized log density of the marginal return distribution.
pub fn kernel_log_density(r: f64, params: &QrseParams) -> f64 {
    binary_entropy(r, params) - action_difference(r, params) * (r - params.alpha) / params.scale
}

/// Equally spaced quadrature grid with trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnGrid {
    lo: f64,
    hi: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ReturnGrid {
    pub const MIN_POINTS: usize = 51;

    /// Grid of `n` nodes on `[lo, hi]`; `n` must be odd and at least 51.
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(QrseError::Parameter(format!("grid bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if n < Self::MIN_POINTS || n % 2 == 0 {
            return Err(QrseError::Parameter(format!(
                "grid needs an odd number of nodes >= {}, got {n}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self::build(lo, hi, n))
    }

    fn build(lo: f64, hi: f64, n: usize) -> Self {
        let step = (hi - lo) / (n - 1) as f64;
        let points = (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
            .collect();
        let weights = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * step } else { step })
            .collect();
        Self {
            lo,
            hi,
            points,
            weights,
        }
    }

    /// Grid around the sample range, widened so the total span grows by
    /// the fraction `padding` (split evenly between both sides).
    pub fn spanning(sample: &[f64], n: usize, padding: f64) -> Result<Self> {
        if sample.is_empty() {
            return Err(QrseError::InsufficientData("cannot span an empty sample".into()));
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in sample {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi <= lo {
            return Err(QrseError::DegenerateWindow(format!("all {} values equal {lo}", sample.len())));
        }
        let pad = 0.5 * padding * (hi - lo);
        Self::new(lo - pad, hi + pad, n)
    }

    /// Grid wide enough that the kernel has decayed by `e^{-40}` from its
    /// peak at both ends.
    pub fn covering(params: &QrseParams, n: usize) -> Result<Self> {
        params.validate()?;
        let center = 0.5 * (params.mu + params.alpha);
        let mut peak = kernel_log_density(params.mu, params)
            .max(kernel_log_density(params.alpha, params))
            .max(kernel_log_density(center, params));
        let mut reach = 1e-3 * (params.temp.min(params.scale)).max(1e-6);
        // Left and right ends are found independently; both must sit far below the peak.
        let mut ends = [f64::NAN; 2];
        for _ in 0..200 {
            let left = center - reach - 0.5 * params.zeta().abs();
            let right = center + reach + 0.5 * params.zeta().abs();
            let kl = kernel_log_density(left, params);
            let kr = kernel_log_density(right, params);
            peak = peak.max(kl).max(kr);
            if ends[0].is_nan() && kl < peak - 40.0 && reach > params.scale {
                ends[0] = left;
            }
            if ends[1].is_nan() && kr < peak - 40.0 && reach > params.scale {
                ends[1] = right;
            }
            if !ends[0].is_nan() && !ends[1].is_nan() {
                break;
            }
            reach *= 1.25;
        }
        if ends.iter().any(|e| e.is_nan()) {
            return Err(QrseError::Parameter(format!("could not bracket the kernel for {params:?}")));
        }
        Self::new(ends[0], ends[1], n)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points.len() - 1) as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the node nearest to `r`, or `None` when `r` lies outside `[lo, hi]`.
    pub fn nearest(&self, r: f64) -> Option<usize> {
        if !(r >= self.lo && r <= self.hi) {
            return None;
        }
        let idx = ((r - self.lo) / self.step()).round() as usize;
        Some(idx.min(self.points.len() - 1))
    }
}

/// Discrete model distribution on a grid: masses per node, split by action.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDistribution {
    pub grid: ReturnGrid,
    pub marginal: Vec<f64>,
    pub joint_buy: Vec<f64>,
    pub joint_sell: Vec<f64>,
}

impl ModelDistribution {
    /// Evaluate the normalized kernel on `grid` without checking coverage.
    ///
    /// Normalization runs in log space over the trapezoid weights, so node
    /// masses are `w_i f(r_i) / sum_j w_j f(r_j)`.
    pub fn evaluate(grid: &ReturnGrid, params: &QrseParams) -> Self {
        let marginal = normalized_masses(grid, params);
        let mut joint_buy = Vec::with_capacity(grid.len());
        let mut joint_sell = Vec::with_capacity(grid.len());
        for (&r, &m) in grid.points().iter().zip(&marginal) {
            let p = conditional_action_prob(r, params);
            joint_buy.push(p.buy * m);
            joint_sell.push(p.sell * m);
        }
        Self {
            grid: grid.clone(),
            marginal,
            joint_buy,
            joint_sell,
        }
    }

    /// Largest mass on either boundary node.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.marginal.len();
        self.marginal[0].max(self.marginal[n - 1])
    }

    /// Draw `n` returns: pick a node by mass, then a uniform offset within its cell.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let mut cdf = Vec::with_capacity(self.marginal.len());
        let mut acc = 0.0;
        for &m in &self.marginal {
            acc += m;
            cdf.push(acc);
        }
        let half = 0.5 * self.grid.step();
        let last = self.marginal.len() - 1;
        (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let i = cdf.partition_point(|&c| c < u).min(last);
                let center = self.grid.points()[i];
                let (a, b) = match i {
                    0 => (center, center + half),
                    _ if i == last => (center - half, center),
                    _ => (center - half, center + half),
                };
                a + (b - a) * rng.random::<f64>()
            })
            .collect()
    }

    /// Write `r,marginal,joint_buy,joint_sell` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "marginal", "joint_buy", "joint_sell"])?;
        for i in 0..self.marginal.len() {
            w.write_record([
                self.grid.points()[i].to_string(),
                self.marginal[i].to_string(),
                self.joint_buy[i].to_string(),
                self.joint_sell[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn normalized_masses(grid: &ReturnGrid, params: &QrseParams) -> Vec<f64> {
    let logs: Vec<f64> = grid
        .points()
        .iter()
        .zip(grid.weights())
        .map(|(&r, &w)| w.ln() + kernel_log_density(r, params))
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut masses: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = masses.iter().sum();
    for m in &mut masses {
        *m /= total;
    }
    masses
}

/// Normalized marginal on `grid`, rejecting grids whose boundary nodes
/// still carry more than [`BOUNDARY_MASS_LIMIT`].
pub fn marginal_density(grid: &ReturnGrid, params: &QrseParams) -> Result<ModelDistribution> {
    params.validate()?;
    let dist = ModelDistribution::evaluate(grid, params);
    let tail = dist.boundary_mass();
    if !(tail <= BOUNDARY_MASS_LIMIT) {
        return Err(QrseError::GridCoverage {
            tail_mass: tail,
            limit: BOUNDARY_MASS_LIMIT,
        });
    }
    Ok(dist)
}

/// Aggregate buy and sell frequencies.
pub fn trading_frequencies(dist: &ModelDistribution) -> (f64, f64) {
    (dist.joint_buy.iter().sum(), dist.joint_sell.iter().sum())
}

/// Realized feedback constraint: `E[tanh((r - mu)/2T) (r - alpha)]` under the model.
pub fn delta(dist: &ModelDistribution, params: &QrseParams) -> f64 {
    dist.grid
        .points()
        .iter()
        .zip(&dist.marginal)
        .map(|(&r, &m)| action_difference(r, params) * (r - params.alpha) * m)
        .sum()
}

pub fn zeta(params: &QrseParams) -> f64 {
    params.zeta()
}

/// Moments of the discrete model distribution.
pub fn model_moments(dist: &ModelDistribution) -> SummaryStats {
    summarize_weighted(dist.grid.points(), &dist.marginal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(mu: f64, temp: f64, alpha: f64, scale: f64) -> QrseParams {
        QrseParams::new(mu, temp, alpha, scale).unwrap()
    }

    #[test]
    fn symmetry_point_is_a_fair_coin() {
        let params = p(0.7, 1.3, -0.2, 2.0);
        let a = conditional_action_prob(0.7, &params);
        assert_eq!((a.buy, a.sell), (0.5, 0.5));
        assert_eq!(action_difference(0.7, &params), 0.0);
        assert!((binary_entropy(0.7, &params) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_logistic_and_tanh() {
        let params = p(0.0, 1.0, 0.0, 1.0);
        let a = conditional_action_prob(1.0, &params);
        assert!((a.sell - 0.7310585786300049).abs() < 1e-12);
        assert!((action_difference(2.0, &params) - 0.7615941559557649).abs() < 1e-12);
    }

    #[test]
    fn hot_agents_act_at_random() {
        let params = p(0.0, 1e3, 0.0, 1.0);
        for i in 0..=20 {
            let r = -10.0 + i as f64;
            let a = conditional_action_prob(r, &params);
            assert!((a.buy - 0.5).abs() < 5e-3 && (a.sell - 0.5).abs() < 5e-3);
        }
    }

    #[test]
    fn entropy_hand_value_and_saturation() {
        let params = p(0.0, 1.0, 0.0, 1.0);
        // -0.26894 ln 0.26894 - 0.73106 ln 0.73106
        let pb = 1.0 / (1.0 + 1f64.exp());
        let direct = -pb * pb.ln() - (1.0 - pb) * (1.0 - pb).ln();
        assert!((binary_entropy(1.0, &params) - direct).abs() < 1e-14);
        assert!((binary_entropy(1.0, &params) - 0.58220).abs() < 1e-5);

        let h = binary_entropy(50.0, &params);
        assert!(h.is_finite() && h >= 0.0 && h < 1e-20);
        let h = binary_entropy(-1e3, &params);
        assert!(h.is_finite() && h >= 0.0);
    }

    #[test]
    fn kernel_at_symmetry_point_and_hand_value() {
        assert!((kernel_log_density(0.3, &p(0.3, 2.0, 0.3, 0.5)) - std::f64::consts::LN_2).abs() < 1e-15);
        // H(2) = ln(1 + e^-2) + 2 sigma(-2) = 0.365334; tanh(1) * 2 = 1.523188
        let k = kernel_log_density(2.0, &p(0.0, 1.0, 0.0, 1.0));
        assert!((k - (-1.157854)).abs() < 1e-6, "{k}");
    }

    #[test]
    fn kernel_even_about_mu_when_mu_equals_alpha() {
        let params = p(0.4, 0.8, 0.4, 1.7);
        for i in 1..50 {
            let d = 0.37 * i as f64;
            let a = kernel_log_density(0.4 + d, &params);
            let b = kernel_log_density(0.4 - d, &params);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(ReturnGrid::new(1.0, 0.0, 101).is_err());
        assert!(ReturnGrid::new(0.0, 1.0, 100).is_err());
        assert!(ReturnGrid::new(0.0, 1.0, 49).is_err());
        let g = ReturnGrid::new(-2.0, 2.0, 51).unwrap();
        let wsum: f64 = g.weights().iter().sum();
        assert!((wsum - 4.0).abs() < 1e-12);
        assert_eq!(g.points()[50], 2.0);
        assert_eq!(g.nearest(-2.0), Some(0));
        assert_eq!(g.nearest(2.0), Some(50));
        assert_eq!(g.nearest(0.039), Some(25));
        assert_eq!(g.nearest(2.1), None);
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let params = p(0.0, 1.0, 0.0, 1.0);
        let grid = ReturnGrid::new(-2.0, 2.0, 101).unwrap();
        assert!(matches!(
            marginal_density(&grid, &params),
            Err(QrseError::GridCoverage { .. })
        ));
        let wide = ReturnGrid::covering(&params, 801).unwrap();
        let dist = marginal_density(&wide, &params).unwrap();
        assert!((dist.marginal.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_model_has_even_frequencies() {
        let params = p(0.0, 1.0, 0.0, 1.0);
        let grid = ReturnGrid::covering(&params, 801).unwrap();
        let dist = marginal_density(&grid, &params).unwrap();
        let (fb, fs) = trading_frequencies(&dist);
        assert!((fb - 0.5).abs() < 1e-10);
        assert!((fb + fs - 1.0).abs() < 1e-10);
        assert!(delta(&dist, &params) > 0.0);
        let m = model_moments(&dist);
        assert!(m.mean.abs() < 1e-10 && m.skew.abs() < 1e-10);
    }

    #[test]
    fn zeta_signs() {
        assert_eq!(zeta(&p(1.0, 1.0, 1.0, 1.0)), 0.0);
        assert_eq!(zeta(&p(2.0, 1.0, 0.0, 1.0)), 2.0);
        assert_eq!(zeta(&p(-2.0, 1.0, 0.0, 1.0)), -2.0);
    }

    #[test]
    fn sampling_reproduces_mean() {
        use rand::SeedableRng;
        let params = p(0.5, 1.0, -0.5, 1.5);
        let grid = ReturnGrid::covering(&params, 4001).unwrap();
        let dist = marginal_density(&grid, &params).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xs = dist.sample(&mut rng, 200_000);
        let m = model_moments(&dist);
        let (mean, sd) = crate::stats::mean_sd(&xs);
        assert!((mean - m.mean).abs() < 4.0 * m.stdev / (xs.len() as f64).sqrt());
        assert!((sd - m.stdev).abs() < 0.01 * m.stdev);
    }
}
