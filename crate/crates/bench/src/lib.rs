//! Shared inputs for the benchmarks: simulated data sets of a given size.

use polyscale_core::models::{GgumItemParams, GrmItemParams, NrmItemParams};
use polyscale_core::simulate::{simulate_responses, SimSpec};
use polyscale_core::{CalibratedItem, ItemParams, ModelKind, ResponseMatrix};

/// Eight five-category items under `model`, with spread locations.
pub fn items(model: ModelKind) -> Vec<CalibratedItem> {
    (0..8)
        .map(|i| {
            let shift = -0.7 + 0.2 * i as f64;
            let a = 0.8 + 0.15 * i as f64;
            let params = match model {
                ModelKind::Grm => {
                    ItemParams::Grm(GrmItemParams::new(a, [-1.5, -0.5, 0.5, 1.5].map(|d| d + shift).to_vec()).unwrap())
                }
                ModelKind::Ggum => ItemParams::Ggum(GgumItemParams::new(a, shift, vec![-1.6, -1.1, -0.6, -0.2]).unwrap()),
                ModelKind::Nrm => ItemParams::Nrm(
                    NrmItemParams::new(
                        [-1.0, -0.4, 0.1, 0.5, 0.8].map(|s| s * a).to_vec(),
                        [-0.3, 0.3, 0.4, 0.0, -0.4].map(|c| c - shift / 5.0).to_vec(),
                    )
                    .unwrap(),
                ),
            };
            CalibratedItem::new(format!("i{i}"), vec![1, 2, 3, 4, 5], params).unwrap()
        })
        .collect()
}

pub fn responses(model: ModelKind, n: usize) -> ResponseMatrix {
    let mut spec = SimSpec::new(model, items(model), n, 2024).unwrap();
    spec.missing_rate = 0.05;
    simulate_responses(&spec).unwrap()
}
