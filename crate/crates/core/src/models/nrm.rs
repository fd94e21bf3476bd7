//! Nominal response model.
//!
//! `P(X = k | θ) = exp(a_k (θ - d_k)) / Σ_h exp(a_h (θ - d_h))`, held in
//! slope-intercept form `a_k θ + c_k` with `c_k = -a_k d_k`. The softmax is
//! unchanged by adding a constant to every slope or every intercept, so the
//! parameters are identified by centering both: `Σ a_k = 0` and
//! `Σ c_k = 0` (equivalently `Σ a_k d_k = 0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{logsumexp, softmax_mean};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrmItemParams {
    a: Vec<f64>,
    c: Vec<f64>,
}

fn centered(v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|x| x - mean).collect()
}

impl NrmItemParams {
    /// Slopes and intercepts; both are centered on construction.
    pub fn new(a: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if a.len() != c.len() {
            return Err(Error::params("nrm item", "slope and intercept counts differ"));
        }
        if a.len() < 2 {
            return Err(Error::params("nrm item", "needs at least two categories"));
        }
        if a.iter().chain(&c).any(|x| !x.is_finite()) {
            return Err(Error::params("nrm item", "parameters must be finite"));
        }
        Ok(NrmItemParams {
            a: centered(a),
            c: centered(c),
        })
    }

    /// Already-identified slopes and intercepts, kept bit for bit. Each set
    /// must sum to zero up to rounding.
    pub fn from_identified(a: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let p = NrmItemParams { a, c };
        p.validate("nrm item")?;
        Ok(p)
    }

    /// From slopes and locations as in `a_k (θ - d_k)`.
    pub fn from_slope_location(a: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if a.len() != d.len() {
            return Err(Error::params("nrm item", "slope and location counts differ"));
        }
        let c = a.iter().zip(&d).map(|(a, d)| -a * d).collect();
        Self::new(a, c)
    }

    pub fn validate(&self, item: &str) -> Result<()> {
        if self.a.len() != self.c.len() || self.a.len() < 2 {
            return Err(Error::params(item, "needs matching slopes and intercepts for ≥ 2 categories"));
        }
        if self.a.iter().chain(&self.c).any(|x| !x.is_finite()) {
            return Err(Error::params(item, "parameters must be finite"));
        }
        let scale = 1.0 + self.a.iter().chain(&self.c).map(|x| x.abs()).sum::<f64>();
        let (sa, sc) = (self.a.iter().sum::<f64>(), self.c.iter().sum::<f64>());
        if sa.abs() > 1e-9 * scale || sc.abs() > 1e-9 * scale {
            return Err(Error::params(item, "slopes and intercepts must each sum to zero"));
        }
        Ok(())
    }

    pub fn slopes(&self) -> &[f64] {
        &self.a
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.c
    }

    /// `d_k = -c_k / a_k`; infinite or NaN where a slope is zero.
    pub fn locations(&self) -> Vec<f64> {
        self.a.iter().zip(&self.c).map(|(a, c)| -c / a).collect()
    }

    pub fn n_categories(&self) -> usize {
        self.a.len()
    }

    /// The same item with categories listed in `order` (new position `j`
    /// takes old category `order[j]`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.a.len() {
            return Err(Error::params("nrm item", "permutation length differs from category count"));
        }
        let a = order.iter().map(|&k| self.a[k]).collect();
        let c = order.iter().map(|&k| self.c[k]).collect();
        Self::new(a, c)
    }

    pub fn log_probs_into(&self, theta: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.a.len());
        for ((slot, a), c) in out.iter_mut().zip(&self.a).zip(&self.c) {
            *slot = a * theta + c;
        }
        let norm = logsumexp(out);
        out.iter_mut().for_each(|v| *v -= norm);
    }

    /// `∂/∂θ ln P(X = k | θ) = a_k - Σ_h P_h a_h`.
    pub fn dlog_prob(&self, theta: f64, k: usize) -> f64 {
        let terms = self.a.iter().zip(&self.c).map(|(a, c)| (a * theta + c, *a));
        self.a[k] - softmax_mean(terms)
    }
}
