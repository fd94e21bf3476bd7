use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed rectangular quadrature for a standard normal population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bound(&self) -> f64 {
        self.nodes.last().copied().unwrap_or(0.0)
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.ln()).collect()
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        make_grid(61, 6.0).expect("default grid is valid")
    }
}

/// `n_points` equally spaced nodes on `[-bound, bound]` with weights
/// proportional to the standard normal density, normalized to sum to one.
pub fn make_grid(n_points: usize, bound: f64) -> Result<QuadratureGrid> {
    if n_points < 11 {
        return Err(Error::InvalidInput(format!("grid needs at least 11 points, got {n_points}")));
    }
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::InvalidInput(format!("grid bound must be positive, got {bound}")));
    }
    let step = 2.0 * bound / (n_points - 1) as f64;
    let nodes: Vec<f64> = (0..n_points)
        .map(|q| {
            // mirror the lower half so the grid is exactly symmetric
            let from_low = -bound + step * q as f64;
            let from_high = bound - step * (n_points - 1 - q) as f64;
            if 2 * q < n_points - 1 {
                from_low
            } else if 2 * q == n_points - 1 {
                0.0
            } else {
                from_high
            }
        })
        .collect();
    let dens: Vec<f64> = nodes.iter().map(|t| (-0.5 * t * t).exp()).collect();
    let total: f64 = dens.iter().sum();
    let weights = dens.iter().map(|d| d / total).collect();
    Ok(QuadratureGrid { nodes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_normalized_and_symmetric() {
        let g = make_grid(61, 6.0).unwrap();
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let first: f64 = g.nodes().iter().zip(g.weights()).map(|(t, w)| t * w).sum();
        assert!(first.abs() < 1e-15);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.nodes()[0], -6.0);
        assert_eq!(g.nodes()[60], 6.0);
        assert_eq!(g.nodes()[30], 0.0);
    }

    #[test]
    fn second_moment_is_one() {
        let g = make_grid(61, 6.0).unwrap();
        let second: f64 = g.nodes().iter().zip(g.weights()).map(|(t, w)| t * t * w).sum();
        assert!((second - 1.0).abs() < 1e-6, "{second}");
    }

    #[test]
    fn rejects_small_or_degenerate_grids() {
        assert!(make_grid(10, 6.0).is_err());
        assert!(make_grid(21, 0.0).is_err());
        assert!(make_grid(21, f64::NAN).is_err());
    }
}
