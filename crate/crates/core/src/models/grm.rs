//! Graded response model.
//!
//! For an item with `m` ordered categories, discrimination `a` and strictly
//! increasing boundaries `d[0] < … < d[m-2]`, the probability of answering in
//! category `k` or above is
//!
//! ```text
//! P*(k) = 1                          k = 0
//!       = σ(a (θ - d[k-1]))          0 < k < m
//!       = 0                          k = m
//! ```
//!
//! and the category probability is `P*(k) - P*(k+1)`. Parameters use the
//! `a (θ - d)` form; the slope-intercept form has intercepts `-a d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_sigmoid, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrmItemParams {
    a: f64,
    d: Vec<f64>,
}

impl GrmItemParams {
    pub fn new(a: f64, d: Vec<f64>) -> Result<Self> {
        let p = GrmItemParams { a, d };
        p.validate("grm item")?;
        Ok(p)
    }

    pub fn validate(&self, item: &str) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::params(item, format!("discrimination {} must be positive", self.a)));
        }
        if self.d.is_empty() {
            return Err(Error::params(item, "needs at least one boundary (two categories)"));
        }
        if self.d.iter().any(|x| !x.is_finite()) {
            return Err(Error::params(item, "boundaries must be finite"));
        }
        if self.d.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::params(item, "boundaries must be strictly increasing"));
        }
        Ok(())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.d
    }

    pub fn n_categories(&self) -> usize {
        self.d.len() + 1
    }

    /// `P(X ≥ k | θ)` for category index `k` in `0..=m`.
    pub fn cumulative(&self, theta: f64, k: usize) -> f64 {
        match k {
            0 => 1.0,
            k if k >= self.n_categories() => 0.0,
            k => sigmoid(self.a * (theta - self.d[k - 1])),
        }
    }

    /// Log category probabilities, computed without differencing two
    /// probabilities: `σ(x) - σ(y) = σ(x) σ(-y) (1 - e^{y-x})` for `x > y`.
    pub fn log_probs_into(&self, theta: f64, out: &mut [f64]) {
        let m = self.n_categories();
        debug_assert_eq!(out.len(), m);
        let a = self.a;
        out[0] = log_sigmoid(-a * (theta - self.d[0]));
        for k in 1..m - 1 {
            let x = a * (theta - self.d[k - 1]);
            let y = a * (theta - self.d[k]);
            out[k] = log_sigmoid(x) + log_sigmoid(-y) + (-(y - x).exp_m1()).ln();
        }
        out[m - 1] = log_sigmoid(a * (theta - self.d[m - 2]));
    }

    /// `∂/∂θ ln P(X = k | θ) = a (1 - P*(k) - P*(k+1))`.
    pub fn dlog_prob(&self, theta: f64, k: usize) -> f64 {
        self.a * (1.0 - self.cumulative(theta, k) - self.cumulative(theta, k + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(p: &GrmItemParams, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; p.n_categories()];
        p.log_probs_into(theta, &mut out);
        out.iter().map(|l| l.exp()).collect()
    }

    #[test]
    fn cumulative_midpoint_and_edges() {
        let p = GrmItemParams::new(1.5, vec![-1.0, 0.5]).unwrap();
        assert_eq!(p.cumulative(0.5, 2), 0.5);
        assert_eq!(p.cumulative(-3.0, 0), 1.0);
        assert_eq!(p.cumulative(3.0, 3), 0.0);
        assert!((p.cumulative(0.0, 1) - 0.817574).abs() < 1e-6);
    }

    #[test]
    fn worked_category_probabilities() {
        let p = GrmItemParams::new(1.5, vec![-1.0, 0.5]).unwrap();
        let pr = probs(&p, 0.0);
        // independent evaluation of the adjacent logistic differences
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let exact = [1.0 - s(1.5), s(1.5) - s(-0.75), s(-0.75)];
        for (x, e) in pr.iter().zip(exact) {
            assert!((x - e).abs() < 1e-15);
        }
        // published to five decimals
        for (x, e) in pr.iter().zip([0.18243, 0.49676, 0.32082]) {
            assert!((x - e).abs() < 1e-5, "{pr:?}");
        }
    }

    #[test]
    fn flat_slope_limit() {
        let p = GrmItemParams::new(1e-13, vec![-1.0, 0.5]).unwrap();
        let pr = probs(&p, 0.3);
        assert!((pr[0] - 0.5).abs() < 1e-9);
        assert!(pr[1].abs() < 1e-9);
        assert!((pr[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn tails_stay_finite() {
        let p = GrmItemParams::new(4.0, vec![-2.0, 0.0, 2.0]).unwrap();
        let mut out = vec![0.0; 4];
        p.log_probs_into(40.0, &mut out);
        assert!(out.iter().all(|l| l.is_finite()));
        assert!((out[3]).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(GrmItemParams::new(0.0, vec![0.0]).is_err());
        assert!(GrmItemParams::new(-1.0, vec![0.0]).is_err());
        assert!(GrmItemParams::new(1.0, vec![0.5, 0.5]).is_err());
        assert!(GrmItemParams::new(1.0, vec![]).is_err());
    }
}
