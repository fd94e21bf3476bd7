//! Quasi-Newton (BFGS) ascent with a backtracking line search.
//!
//! The returned point never scores below the starting point, which is what
//! keeps the EM likelihood trace non-decreasing.

#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub max_iter: usize,
    /// Stop when an iteration improves the objective by less than
    /// `rel_tol * (1 + |f|)`.
    pub rel_tol: f64,
    /// Stop when every gradient component is below `grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            max_iter: 200,
            rel_tol: 1e-13,
            grad_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub x: Vec<f64>,
    pub value: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `f`, which returns the objective and writes its gradient.
/// Non-finite objective values are treated as `-∞`.
pub fn maximize<F>(mut f: F, x0: &[f64], opts: AscentOptions) -> AscentResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return AscentResult { x, value: fx };
    }

    // inverse Hessian approximation of -f, row-major
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];

    for iter in 0..opts.max_iter {
        let scale = 1.0 + fx.abs();
        if g.iter().all(|gi| gi.abs() < opts.grad_tol * scale) {
            break;
        }

        for i in 0..n {
            dir[i] = (0..n).map(|j| h[i * n + j] * g[j]).sum();
        }
        let mut slope = dot(&dir, &g);
        if !(slope > 0.0) {
            // not an ascent direction; fall back to the gradient
            h.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                h[i * n + i] = 1.0;
            }
            dir.copy_from_slice(&g);
            slope = dot(&g, &g);
        }

        let mut step = 1.0;
        let mut f_new = f64::NEG_INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new >= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Armijo failed; still take the last trial if it improved
            if f_new.is_finite() && f_new > fx {
                let improvement = f_new - fx;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                if improvement < opts.rel_tol * scale {
                    break;
                }
                continue;
            }
            break;
        }

        let improvement = f_new - fx;
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        // y for the minimization of -f
        let y: Vec<f64> = (0..n).map(|i| g[i] - g_new[i]).collect();
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if improvement < opts.rel_tol * scale {
            break;
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if iter == 0 {
                let gamma = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n {
                    h[i * n + i] = gamma;
                }
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    }

    AscentResult { x, value: fx }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_peak() {
        let r = maximize(
            |x, g| {
                g[0] = -2.0 * (x[0] - 1.0);
                g[1] = -8.0 * (x[1] + 2.0);
                -(x[0] - 1.0).powi(2) - 4.0 * (x[1] + 2.0).powi(2)
            },
            &[5.0, 5.0],
            AscentOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!((r.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn handles_rosenbrock() {
        let r = maximize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -(-2.0 * (1.0 - a) - 400.0 * a * (b - a * a));
                g[1] = -(200.0 * (b - a * a));
                -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
            },
            &[-1.2, 1.0],
            AscentOptions { max_iter: 500, ..Default::default() },
        );
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn never_returns_worse_than_start() {
        let start = [0.3];
        let f0 = (0.3f64).sin();
        let r = maximize(
            |x, g| {
                g[0] = x[0].cos();
                x[0].sin()
            },
            &start,
            AscentOptions::default(),
        );
        assert!(r.value >= f0);
        assert!((r.x[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-5);
    }

    #[test]
    fn infeasible_trials_are_backtracked() {
        // objective undefined for x <= 0
        let r = maximize(
            |x, g| {
                if x[0] <= 0.0 {
                    return f64::NAN;
                }
                g[0] = 1.0 / x[0] - 1.0;
                x[0].ln() - x[0]
            },
            &[0.1],
            AscentOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-6);
    }
}
