//! Generalized graded unfolding model.
//!
//! Observable categories `z = 0..=C` pair with `M = 2C + 1` subjective
//! responses. With `δ = θ - d` and cumulative thresholds `S(z) = τ_1 + … + τ_z`,
//! the subjective-response terms are
//!
//! ```text
//! f(w) = exp{ a [ w δ - Σ_{k=0..w} τ_k ] },   w = 0..=M
//! ```
//!
//! where the stored `τ_1..τ_C` are extended by `τ_0 = τ_{C+1} = 0` and
//! `τ_{M-z+1} = -τ_z`. An observable response combines the two subjective
//! responses on either side of the item location:
//!
//! ```text
//! P(Z = z | θ) ∝ f(z) + f(M - z)
//! ```
//!
//! The sum (not the difference) is what keeps probabilities nonnegative; it
//! is the form of the original unfolding model. Since `f(z) + f(M - z) =
//! 2 e^{a M δ / 2} e^{-a S(z)} cosh(a (M/2 - z) δ)` and the first factor is
//! shared by all categories, the kernel works with
//! `ln w_z = -a S(z) + ln cosh(a (M/2 - z) δ)`. That form is even in `δ`, so
//! the unfolding symmetry around `d` holds bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_cosh, logsumexp, softmax_mean};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgumItemParams {
    a: f64,
    d: f64,
    tau: Vec<f64>,
}

impl GgumItemParams {
    /// `tau` holds `τ_1..τ_C`; the item has `C + 1` observable categories.
    pub fn new(a: f64, d: f64, tau: Vec<f64>) -> Result<Self> {
        let p = GgumItemParams { a, d, tau };
        p.validate("ggum item")?;
        Ok(p)
    }

    pub fn validate(&self, item: &str) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::params(item, format!("discrimination {} must be positive", self.a)));
        }
        if !self.d.is_finite() || self.tau.iter().any(|t| !t.is_finite()) {
            return Err(Error::params(item, "location and thresholds must be finite"));
        }
        if self.tau.is_empty() {
            return Err(Error::params(item, "needs at least one threshold (two categories)"));
        }
        Ok(())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn location(&self) -> f64 {
        self.d
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.tau
    }

    /// `C`, the number of observable categories minus one.
    pub fn c(&self) -> usize {
        self.tau.len()
    }

    /// `M = 2C + 1`.
    pub fn m(&self) -> usize {
        2 * self.c() + 1
    }

    pub fn n_categories(&self) -> usize {
        self.c() + 1
    }

    /// Full threshold vector `τ_0..τ_M` implied by the stored `τ_1..τ_C`.
    pub fn extended_thresholds(&self) -> Vec<f64> {
        let c = self.c();
        let m = self.m();
        let mut t = vec![0.0; m + 1];
        t[1..=c].copy_from_slice(&self.tau);
        for z in 1..=c {
            t[m - z + 1] = -self.tau[z - 1];
        }
        t
    }

    /// `f(0..=M)` evaluated term by term from the definition.
    pub fn subjective_response_terms(&self, theta: f64) -> Vec<f64> {
        let t = self.extended_thresholds();
        let delta = theta - self.d;
        let mut cum = 0.0;
        (0..=self.m())
            .map(|w| {
                cum += t[w];
                (self.a * (w as f64 * delta - cum)).exp()
            })
            .collect()
    }

    fn half_m(&self) -> f64 {
        self.m() as f64 / 2.0
    }

    pub fn log_probs_into(&self, theta: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_categories());
        let delta = theta - self.d;
        let half = self.half_m();
        let mut cum = 0.0;
        for (z, slot) in out.iter_mut().enumerate() {
            if z > 0 {
                cum += self.tau[z - 1];
            }
            *slot = -self.a * cum + log_cosh(self.a * (half - z as f64) * delta);
        }
        let norm = logsumexp(out);
        out.iter_mut().for_each(|v| *v -= norm);
    }

    /// `∂/∂θ ln P(Z = z | θ) = g_z - Σ_w P_w g_w` with
    /// `g_z = a (M/2 - z) tanh(a (M/2 - z) δ)`.
    pub fn dlog_prob(&self, theta: f64, z: usize) -> f64 {
        let delta = theta - self.d;
        let half = self.half_m();
        let mut cum = 0.0;
        // log weights drop the ln 2 of ln cosh, which every category shares;
        // ln cosh and tanh come from the same exp(-2|x|)
        let terms = (0..self.n_categories()).map(|w| {
            if w > 0 {
                cum += self.tau[w - 1];
            }
            let s = self.a * (half - w as f64);
            let x = s * delta;
            let e = (-2.0 * x.abs()).exp();
            let tanh = ((1.0 - e) / (1.0 + e)).copysign(x);
            (-self.a * cum + x.abs() + e.ln_1p(), s * tanh)
        });
        let mean = softmax_mean(terms);
        let s = self.a * (half - z as f64);
        s * (s * delta).tanh() - mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn probs(p: &GgumItemParams, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; p.n_categories()];
        p.log_probs_into(theta, &mut out);
        out.iter().map(|l| l.exp()).collect()
    }

    #[test]
    fn worked_two_category_case() {
        let p = GgumItemParams::new(1.0, 0.0, vec![-1.0]).unwrap();
        let f = p.subjective_response_terms(0.0);
        for (x, e) in f.iter().zip([1.0, E, E, 1.0]) {
            assert!((x - e).abs() < 1e-12, "{f:?}");
        }
        let pr = probs(&p, 0.0);
        assert!((pr[1] - 0.731059).abs() < 1e-6);
        assert!((pr[0] - 0.268941).abs() < 1e-6);
    }

    #[test]
    fn threshold_extension_is_antisymmetric() {
        let p = GgumItemParams::new(1.0, 0.0, vec![-1.5, -0.7, -0.2]).unwrap();
        let t = p.extended_thresholds();
        assert_eq!(t.len(), 8);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[4], 0.0);
        for z in 1..=3 {
            assert_eq!(t[7 - z + 1], -t[z]);
        }
        assert!(t.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn cosh_form_matches_subjective_terms() {
        let p = GgumItemParams::new(1.3, 0.4, vec![-1.2, -0.6, 0.3]).unwrap();
        for &theta in &[-3.0, -0.5, 0.4, 1.7, 4.0] {
            let f = p.subjective_response_terms(theta);
            let m = p.m();
            let num: Vec<f64> = (0..=p.c()).map(|z| f[z] + f[m - z]).collect();
            let total: f64 = num.iter().sum();
            for (x, n) in probs(&p, theta).iter().zip(&num) {
                assert!((x - n / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_peaked_in_theta() {
        let p = GgumItemParams::new(1.5, 0.5, vec![-1.0, -0.5]).unwrap();
        let top = |t: f64| probs(&p, t)[2];
        assert!(top(0.5) > top(-1.5));
        assert!(top(0.5) > top(2.5));
    }

    #[test]
    fn exact_reflection_symmetry() {
        // dyadic offsets so that θ - d is exactly ±δ
        let p = GgumItemParams::new(0.9, -0.25, vec![-2.0, -1.1, 0.4, 0.1]).unwrap();
        for &delta in &[0.015625, 0.5, 1.75, 3.25] {
            assert_eq!(probs(&p, -0.25 + delta), probs(&p, -0.25 - delta));
        }
    }
}
