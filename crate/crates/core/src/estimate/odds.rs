//! Reading logit-scale scores as odds relative to the scale center.

/// Odds `p / (1 - p)` with `p = σ(θ)`, which is `e^θ`.
pub fn odds(theta: f64) -> f64 {
    theta.exp()
}

/// `odds(a) / odds(b) = e^{a - b}`: depends only on the difference, which
/// is what makes equal score gaps comparable anywhere on the scale.
pub fn odds_ratio(theta_a: f64, theta_b: f64) -> f64 {
    (theta_a - theta_b).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odds_match_logistic_form() {
        for &t in &[-2.5_f64, -1.0, 0.0, 2.0, 3.5] {
            let p = 1.0 / (1.0 + (-t).exp());
            assert!((odds(t) - p / (1.0 - p)).abs() < 1e-9 * odds(t));
        }
        assert_eq!(odds(0.0), 1.0);
        assert_eq!(odds_ratio(1.3, 1.3), 1.0);
    }

    #[test]
    fn equal_gaps_give_equal_ratios() {
        assert!((odds_ratio(-2.5, -1.0) - odds_ratio(2.0, 3.5)).abs() < 1e-12);
    }
}
