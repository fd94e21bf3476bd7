//! Per-item maximization of the expected complete-data log-likelihood
//! `Σ_q Σ_k r_qk ln P_k(θ_q)` given expected counts `r_qk` from the E-step.
//!
//! Each model is optimized over an unconstrained vector:
//!
//! * GRM: `[ln a, d_0, ln(d_1 - d_0), …]`, so `a > 0` and the boundaries stay
//!   strictly increasing.
//! * GGUM: `[ln a, d, τ_1, …, τ_C]`.
//! * NRM: the first `m - 1` slopes then the first `m - 1` intercepts; the
//!   last of each is minus the sum of the others.

use crate::models::{GgumItemParams, GrmItemParams, ItemParams, ModelKind, NrmItemParams};
use crate::numeric::{log_cosh, log_sigmoid, logsumexp, sigmoid};

use super::optim::{maximize, AscentOptions};

// Walls on log-discrimination and nominal slopes; beyond them the objective
// is undefined and the line search backs off.
const LN_A_MIN: f64 = -7.0;
const LN_A_MAX: f64 = 4.0;
const NRM_SLOPE_MAX: f64 = 25.0;

/// Expected counts for one item over the quadrature nodes.
pub(crate) struct ItemCounts<'a> {
    pub nodes: &'a [f64],
    /// Row-major `nodes × categories`.
    pub counts: &'a [f64],
    pub m: usize,
}

impl ItemCounts<'_> {
    fn row(&self, q: usize) -> &[f64] {
        &self.counts[q * self.m..(q + 1) * self.m]
    }
}

pub(crate) fn encode(params: &ItemParams) -> Vec<f64> {
    match params {
        ItemParams::Grm(p) => {
            let d = p.boundaries();
            let mut u = vec![p.a().ln(), d[0]];
            u.extend(d.windows(2).map(|w| (w[1] - w[0]).ln()));
            u
        }
        ItemParams::Ggum(p) => {
            let mut u = vec![p.a().ln(), p.location()];
            u.extend_from_slice(p.thresholds());
            u
        }
        ItemParams::Nrm(p) => {
            let m = p.n_categories();
            let mut u = p.slopes()[..m - 1].to_vec();
            u.extend_from_slice(&p.intercepts()[..m - 1]);
            u
        }
    }
}

pub(crate) fn decode(kind: ModelKind, m: usize, u: &[f64]) -> Option<ItemParams> {
    if u.iter().any(|x| !x.is_finite()) {
        return None;
    }
    match kind {
        ModelKind::Grm => {
            if !(LN_A_MIN..=LN_A_MAX).contains(&u[0]) {
                return None;
            }
            let mut d = Vec::with_capacity(m - 1);
            d.push(u[1]);
            for g in &u[2..] {
                d.push(d.last().unwrap() + g.exp());
            }
            GrmItemParams::new(u[0].exp(), d).ok().map(ItemParams::Grm)
        }
        ModelKind::Ggum => {
            if !(LN_A_MIN..=LN_A_MAX).contains(&u[0]) {
                return None;
            }
            GgumItemParams::new(u[0].exp(), u[1], u[2..].to_vec()).ok().map(ItemParams::Ggum)
        }
        ModelKind::Nrm => {
            let k = m - 1;
            let full = |free: &[f64]| {
                let mut v = free.to_vec();
                v.push(-free.iter().sum::<f64>());
                v
            };
            let a = full(&u[..k]);
            if a.iter().any(|x| x.abs() > NRM_SLOPE_MAX) {
                return None;
            }
            NrmItemParams::new(a, full(&u[k..])).ok().map(ItemParams::Nrm)
        }
    }
}

/// Objective and gradient with respect to the unconstrained vector.
pub(crate) fn objective(kind: ModelKind, data: &ItemCounts<'_>, u: &[f64], grad: &mut [f64]) -> f64 {
    let Some(params) = decode(kind, data.m, u) else {
        return f64::NAN;
    };
    match &params {
        ItemParams::Grm(p) => grm_objective(p, data, u, grad),
        ItemParams::Ggum(p) => ggum_objective(p, data, grad),
        ItemParams::Nrm(p) => nrm_objective(p, data, grad),
    }
}

fn grm_objective(p: &GrmItemParams, data: &ItemCounts<'_>, u: &[f64], grad: &mut [f64]) -> f64 {
    let m = data.m;
    let a = p.a();
    let d = p.boundaries();
    let mut ga = 0.0;
    let mut gd = vec![0.0; m - 1];
    let mut value = 0.0;

    for (q, &theta) in data.nodes.iter().enumerate() {
        for (k, &r) in data.row(q).iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            // x: lower boundary argument, y: upper boundary argument
            let (dx, dy) = if k == 0 {
                let y = a * (theta - d[0]);
                value += r * log_sigmoid(-y);
                (0.0, -sigmoid(y))
            } else if k == m - 1 {
                let x = a * (theta - d[m - 2]);
                value += r * log_sigmoid(x);
                (sigmoid(-x), 0.0)
            } else {
                let x = a * (theta - d[k - 1]);
                let y = a * (theta - d[k]);
                let gap = x - y;
                value += r * (log_sigmoid(x) + log_sigmoid(-y) + (-(-gap).exp_m1()).ln());
                let inv = 1.0 / gap.exp_m1();
                (sigmoid(-x) + inv, -sigmoid(y) - inv)
            };
            if k > 0 {
                ga += r * dx * (theta - d[k - 1]);
                gd[k - 1] += r * dx * (-a);
            }
            if k < m - 1 {
                ga += r * dy * (theta - d[k]);
                gd[k] += r * dy * (-a);
            }
        }
    }

    grad[0] = a * ga;
    grad[1] = gd.iter().sum();
    // d_j = u_1 + Σ_{l=1..j} exp(u_{l+1})
    let mut tail = 0.0;
    for j in (1..m - 1).rev() {
        tail += gd[j];
        grad[j + 1] = u[j + 1].exp() * tail;
    }
    value
}

fn ggum_objective(p: &GgumItemParams, data: &ItemCounts<'_>, grad: &mut [f64]) -> f64 {
    let m = data.m;
    let a = p.a();
    let tau = p.thresholds();
    let half = p.m() as f64 / 2.0;
    let cum: Vec<f64> = std::iter::once(0.0)
        .chain(tau.iter().scan(0.0, |s, t| {
            *s += t;
            Some(*s)
        }))
        .collect();

    let mut ga = 0.0;
    let mut gd = 0.0;
    let mut gtau = vec![0.0; m - 1];
    let mut value = 0.0;
    let mut lw = vec![0.0; m];
    let mut tanhs = vec![0.0; m];

    for (q, &theta) in data.nodes.iter().enumerate() {
        let row = data.row(q);
        let n_q: f64 = row.iter().sum();
        if n_q == 0.0 {
            continue;
        }
        let delta = theta - p.location();
        for z in 0..m {
            let s = a * (half - z as f64) * delta;
            lw[z] = -a * cum[z] + log_cosh(s);
            tanhs[z] = s.tanh();
        }
        let norm = logsumexp(&lw);
        let mut suffix = 0.0;
        for z in (0..m).rev() {
            let lp = lw[z] - norm;
            value += if row[z] > 0.0 { row[z] * lp } else { 0.0 };
            let e = row[z] - n_q * lp.exp();
            let h = half - z as f64;
            ga += e * (-cum[z] + h * delta * tanhs[z]);
            gd += e * (-a * h * tanhs[z]);
            suffix += e;
            if z >= 1 {
                gtau[z - 1] += -a * suffix;
            }
        }
    }

    grad[0] = a * ga;
    grad[1] = gd;
    grad[2..].copy_from_slice(&gtau);
    value
}

fn nrm_objective(p: &NrmItemParams, data: &ItemCounts<'_>, grad: &mut [f64]) -> f64 {
    let m = data.m;
    let mut ga = vec![0.0; m];
    let mut gc = vec![0.0; m];
    let mut lp = vec![0.0; m];
    let mut value = 0.0;

    for (q, &theta) in data.nodes.iter().enumerate() {
        let row = data.row(q);
        let n_q: f64 = row.iter().sum();
        if n_q == 0.0 {
            continue;
        }
        p.log_probs_into(theta, &mut lp);
        for k in 0..m {
            if row[k] > 0.0 {
                value += row[k] * lp[k];
            }
            let e = row[k] - n_q * lp[k].exp();
            ga[k] += e * theta;
            gc[k] += e;
        }
    }

    let k = m - 1;
    for j in 0..k {
        grad[j] = ga[j] - ga[k];
        grad[k + j] = gc[j] - gc[k];
    }
    value
}

#[cfg(test)]
fn item_objective_value(params: &ItemParams, data: &ItemCounts<'_>) -> f64 {
    let u = encode(params);
    let mut g = vec![0.0; u.len()];
    objective(params.kind(), data, &u, &mut g)
}

/// Improves `current` on the expected counts. `restart_locations` are extra
/// GGUM starting locations; the best end point wins and the result is never
/// worse than `current`.
pub(crate) fn improve_item(current: &ItemParams, data: &ItemCounts<'_>, restart_locations: &[f64]) -> ItemParams {
    let kind = current.kind();
    let opts = AscentOptions::default();
    let run = |start: &ItemParams| {
        let u0 = encode(start);
        let r = maximize(|u, g| objective(kind, data, u, g), &u0, opts);
        (r.value, r.x)
    };

    let (mut best_value, mut best_u) = run(current);
    if let ItemParams::Ggum(p) = current {
        for &loc in restart_locations {
            let Ok(start) = GgumItemParams::new(p.a(), loc, p.thresholds().to_vec()) else {
                continue;
            };
            let (value, u) = run(&ItemParams::Ggum(start));
            if value > best_value {
                best_value = value;
                best_u = u;
            }
        }
    }
    decode(kind, data.m, &best_u).unwrap_or_else(|| current.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts_for(nodes: &[f64], m: usize) -> Vec<f64> {
        // arbitrary positive pseudo-counts with structure in θ
        let mut v = Vec::with_capacity(nodes.len() * m);
        for (q, t) in nodes.iter().enumerate() {
            for k in 0..m {
                v.push(1.0 + ((q * 7 + k * 3) % 5) as f64 + (k as f64 * t).exp().min(20.0));
            }
        }
        v
    }

    fn check_gradient(params: ItemParams) {
        let nodes: Vec<f64> = (0..21).map(|q| -4.0 + 0.4 * q as f64).collect();
        let m = params.n_categories();
        let counts = counts_for(&nodes, m);
        let data = ItemCounts { nodes: &nodes, counts: &counts, m };
        let kind = params.kind();
        let u = encode(&params);
        let mut g = vec![0.0; u.len()];
        objective(kind, &data, &u, &mut g);
        let mut scratch = vec![0.0; u.len()];
        for i in 0..u.len() {
            let h = 1e-6 * (1.0 + u[i].abs());
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (objective(kind, &data, &up, &mut scratch) - objective(kind, &data, &dn, &mut scratch)) / (2.0 * h);
            let tol = 1e-5 * (1.0 + fd.abs());
            assert!((g[i] - fd).abs() < tol, "{kind} param {i}: analytic {} vs fd {fd}", g[i]);
        }
    }

    #[test]
    fn grm_gradient_matches_differences() {
        check_gradient(ItemParams::Grm(GrmItemParams::new(1.3, vec![-1.0, 0.2, 1.1]).unwrap()));
        check_gradient(ItemParams::Grm(GrmItemParams::new(0.6, vec![0.4]).unwrap()));
    }

    #[test]
    fn ggum_gradient_matches_differences() {
        check_gradient(ItemParams::Ggum(GgumItemParams::new(1.1, 0.3, vec![-1.2, -0.5, 0.2]).unwrap()));
    }

    #[test]
    fn nrm_gradient_matches_differences() {
        check_gradient(ItemParams::Nrm(
            NrmItemParams::new(vec![-0.8, 0.1, 0.3, 0.4], vec![0.5, -0.2, 0.1, -0.4]).unwrap(),
        ));
    }

    #[test]
    fn encode_decode_round_trip() {
        let items = [
            ItemParams::Grm(GrmItemParams::new(1.3, vec![-1.0, 0.2, 1.1]).unwrap()),
            ItemParams::Ggum(GgumItemParams::new(1.1, 0.3, vec![-1.2, -0.5]).unwrap()),
            ItemParams::Nrm(NrmItemParams::new(vec![-0.8, 0.1, 0.7], vec![0.5, -0.2, -0.3]).unwrap()),
        ];
        for p in items {
            let back = decode(p.kind(), p.n_categories(), &encode(&p)).unwrap();
            for t in [-2.0, 0.0, 1.5] {
                let (x, y) = (p.probs(t), back.probs(t));
                for (a, b) in x.0.iter().zip(&y.0) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn improvement_is_monotone() {
        let nodes: Vec<f64> = (0..21).map(|q| -4.0 + 0.4 * q as f64).collect();
        let start = ItemParams::Ggum(GgumItemParams::new(1.0, 0.0, vec![-1.0, -0.5]).unwrap());
        let counts = counts_for(&nodes, 3);
        let data = ItemCounts { nodes: &nodes, counts: &counts, m: 3 };
        let before = item_objective_value(&start, &data);
        let after = improve_item(&start, &data, &[-2.0, 2.0]);
        assert!(item_objective_value(&after, &data) >= before);
    }
}
