//! Small numerically stable scalar helpers shared by the kernels.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow for large `|x|`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `ln cosh(x)`, exact in sign: depends on `|x|` only.
#[inline]
pub fn log_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `Σ e^{l_i} g_i / Σ e^{l_i}` in one pass with one `exp` per term,
/// rescaling whenever a larger log-weight turns up.
pub fn softmax_mean(terms: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (mut max, mut total, mut weighted) = (f64::NEG_INFINITY, 0.0, 0.0);
    for (l, g) in terms {
        if l > max {
            let r = (max - l).exp();
            total = total * r + 1.0;
            weighted = weighted * r + g;
            max = l;
        } else {
            let e = (l - max).exp();
            total += e;
            weighted += e * g;
        }
    }
    weighted / total
}

/// Neumaier compensated sum; order-stable for long likelihood reductions.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_helpers_match_naive_forms() {
        for &x in &[-30.0_f64, -2.0, -0.1, 0.0, 0.7, 5.0, 30.0] {
            let naive = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid(x) - naive).abs() < 1e-15);
            assert!((log_sigmoid(x) - naive.ln()).abs() < 1e-12);
            assert!((log_cosh(x) - x.cosh().ln()).abs() < 1e-12);
        }
        assert!(log_sigmoid(-800.0).is_finite());
        assert!(log_cosh(800.0).is_finite());
    }

    #[test]
    fn logsumexp_handles_large_values() {
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn softmax_mean_matches_two_pass_form() {
        let terms = [(3.0_f64, 0.5_f64), (-700.0, 9.0), (800.0, -1.0), (799.0, 2.0), (0.0, 4.0)];
        let max = 800.0;
        let w: Vec<f64> = terms.iter().map(|(l, _)| (l - max).exp()).collect();
        let naive = terms.iter().zip(&w).map(|((_, g), w)| w * g).sum::<f64>() / w.iter().sum::<f64>();
        assert!((softmax_mean(terms) - naive).abs() < 1e-15);
        assert_eq!(softmax_mean([(1.0, 7.0)]), 7.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
