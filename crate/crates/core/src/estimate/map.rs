//! Modal a posteriori person scoring under a standard normal prior.
//!
//! The log posterior `-θ²/2 + ℓ(θ)` is scanned for sign changes of its
//! derivative on `[-(bound + 1), bound + 1]`; each bracketed local maximum is
//! refined by bisection on the derivative and the highest one wins. Under
//! GGUM the posterior can have several modes; the smaller `|θ|` wins ties
//! and the score is flagged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ResponseMatrix;
use crate::models::{person_loglik, person_loglik_dtheta, CalibratedItem, ItemParams};

use super::em::response_indices;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    /// The search covers `[-(bound + 1), bound + 1]`.
    pub bound: f64,
    /// Spacing of the derivative scan used to bracket modes.
    pub scan_step: f64,
    /// Bracket width at which bisection stops.
    pub tol: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            bound: 6.0,
            scan_step: 0.05,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonScore {
    pub theta: f64,
    /// `1 / sqrt(-∂²/∂θ² log posterior)` at the mode.
    pub se: f64,
    pub n_observed: usize,
    /// More than one local maximum was found.
    pub multimodal: bool,
}

fn log_posterior(items: &[ItemParams], resp: &[Option<usize>], theta: f64) -> f64 {
    -0.5 * theta * theta + person_loglik(items, resp, theta).expect("validated responses")
}

fn slope(items: &[ItemParams], resp: &[Option<usize>], theta: f64) -> f64 {
    -theta + person_loglik_dtheta(items, resp, theta).expect("validated responses")
}

fn validate(items: &[ItemParams], responses: &[Option<usize>]) -> Result<()> {
    if items.len() != responses.len() {
        return Err(Error::InvalidInput(format!(
            "{} responses for {} items",
            responses.len(),
            items.len()
        )));
    }
    for (i, (it, r)) in items.iter().zip(responses).enumerate() {
        if let Some(k) = *r {
            if k >= it.n_categories() {
                return Err(Error::CategoryOutOfRange {
                    item: format!("#{i}"),
                    category: k,
                    n_categories: it.n_categories(),
                });
            }
        }
    }
    Ok(())
}

/// MAP estimate of θ for one response vector (category indices).
pub fn map_score(items: &[ItemParams], responses: &[Option<usize>], opts: &MapOptions) -> Result<PersonScore> {
    validate(items, responses)?;
    let n_observed = responses.iter().filter(|r| r.is_some()).count();
    if n_observed == 0 {
        return Ok(PersonScore {
            theta: 0.0,
            se: 1.0,
            n_observed,
            multimodal: false,
        });
    }

    let limit = opts.bound + 1.0;
    let steps = (2.0 * limit / opts.scan_step).ceil() as usize;
    let at = |j: usize| -limit + 2.0 * limit * j as f64 / steps as f64;

    let mut modes: Vec<f64> = Vec::new();
    let mut g_prev = slope(items, responses, at(0));
    if g_prev <= 0.0 {
        // decreasing from the left edge: the edge itself is a candidate
        modes.push(at(0));
    }
    for j in 1..=steps {
        let t = at(j);
        let g = slope(items, responses, t);
        if g_prev > 0.0 && g <= 0.0 {
            let (mut lo, mut hi) = (at(j - 1), t);
            while hi - lo > opts.tol {
                let mid = 0.5 * (lo + hi);
                if slope(items, responses, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            modes.push(0.5 * (lo + hi));
        }
        g_prev = g;
    }
    if g_prev > 0.0 {
        modes.push(limit);
    }

    let mut best = modes[0];
    let mut best_lp = log_posterior(items, responses, best);
    for &t in &modes[1..] {
        let lp = log_posterior(items, responses, t);
        let tie = (lp - best_lp).abs() <= 1e-12 * (1.0 + best_lp.abs());
        if (lp > best_lp && !tie) || (tie && t.abs() < best.abs()) {
            best = t;
            best_lp = lp;
        }
    }

    let h = 1e-4;
    let curvature = -(slope(items, responses, best + h) - slope(items, responses, best - h)) / (2.0 * h);
    let se = 1.0 / curvature.max(1e-12).sqrt();
    Ok(PersonScore {
        theta: best,
        se,
        n_observed,
        multimodal: modes.len() > 1,
    })
}

/// Scores every person of `m` against calibrated items, matched by id.
pub fn score_matrix(items: &[CalibratedItem], m: &ResponseMatrix, opts: &MapOptions) -> Result<Vec<PersonScore>> {
    let rows = response_indices(items, m)?;
    let params: Vec<ItemParams> = items.iter().map(|it| it.params.clone()).collect();
    rows.par_iter().map(|r| map_score(&params, r, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GgumItemParams, GrmItemParams, NrmItemParams};

    fn dichotomous() -> ItemParams {
        ItemParams::Grm(GrmItemParams::new(1.0, vec![0.0]).unwrap())
    }

    #[test]
    fn all_missing_is_prior_mode() {
        let s = map_score(&[dichotomous()], &[None], &MapOptions::default()).unwrap();
        assert_eq!(s.theta, 0.0);
        assert_eq!(s.se, 1.0);
        assert_eq!(s.n_observed, 0);
    }

    #[test]
    fn single_item_solves_fixed_point() {
        let s = map_score(&[dichotomous()], &[Some(1)], &MapOptions::default()).unwrap();
        // θ + σ(θ) = 1
        let sig = 1.0 / (1.0 + (-s.theta).exp());
        assert!((s.theta + sig - 1.0).abs() < 1e-9);
        assert!((s.theta - 0.4010).abs() < 1e-3);
        // curvature 1 + σ(1-σ)
        let want = 1.0 / (1.0 + sig * (1.0 - sig)).sqrt();
        assert!((s.se - want).abs() < 1e-6);
    }

    #[test]
    fn bottom_response_mirrors_top() {
        let up = map_score(&[dichotomous()], &[Some(1)], &MapOptions::default()).unwrap();
        let down = map_score(&[dichotomous()], &[Some(0)], &MapOptions::default()).unwrap();
        assert!((up.theta + down.theta).abs() < 1e-9);
    }

    #[test]
    fn second_identical_item_moves_further() {
        let one = map_score(&[dichotomous()], &[Some(1)], &MapOptions::default()).unwrap();
        let two = map_score(&[dichotomous(), dichotomous()], &[Some(1), Some(1)], &MapOptions::default()).unwrap();
        assert!(two.theta > one.theta);
    }

    #[test]
    fn shrinks_toward_zero_relative_to_ml() {
        // ML for two items with split responses is finite; MAP must be closer to 0
        let items = [
            ItemParams::Grm(GrmItemParams::new(1.3, vec![-0.5]).unwrap()),
            ItemParams::Grm(GrmItemParams::new(0.8, vec![1.5]).unwrap()),
        ];
        let resp = [Some(1), Some(0)];
        let map = map_score(&items, &resp, &MapOptions::default()).unwrap();
        // ML by bisection on the likelihood derivative alone
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid: f64 = 0.5 * (lo + hi);
            if person_loglik_dtheta(&items, &resp, mid).unwrap() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(map.theta.abs() <= lo.abs());
    }

    #[test]
    fn stays_within_search_range() {
        let items = vec![ItemParams::Grm(GrmItemParams::new(40.0, vec![5.0]).unwrap()); 30];
        let resp = vec![Some(1); 30];
        let s = map_score(&items, &resp, &MapOptions::default()).unwrap();
        assert!(s.theta.is_finite() && s.theta <= 7.0);
        assert!(s.se.is_finite());
    }

    fn item_mirror() -> ItemParams {
        ItemParams::Ggum(GgumItemParams::new(2.5, 0.0, vec![-1.5]).unwrap())
    }

    #[test]
    fn symmetric_ggum_tie_prefers_smaller_magnitude() {
        // a disagreeing response to an unfolding item centred at 0 has two
        // symmetric modes; nothing separates them so the result is flagged
        let item = ItemParams::Ggum(GgumItemParams::new(2.5, 0.0, vec![-1.5]).unwrap());
        let s = map_score(&[item], &[Some(0)], &MapOptions::default()).unwrap();
        assert!(s.multimodal);
        assert!(s.theta.abs() > 0.1);
        let mirrored = map_score(&[item_mirror()], &[Some(0)], &MapOptions::default()).unwrap();
        assert!((mirrored.theta.abs() - s.theta.abs()).abs() < 1e-8);
    }

    #[test]
    fn rejects_out_of_range_category() {
        let item = ItemParams::Nrm(NrmItemParams::new(vec![1.0, -1.0], vec![0.0, 0.0]).unwrap());
        assert!(map_score(&[item], &[Some(2)], &MapOptions::default()).is_err());
    }
}
