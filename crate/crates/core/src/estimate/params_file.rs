//! JSON parameter files: model, per-item category layout and parameters at
//! full double precision, plus the prior that fixes the scale.
//!
//! Floats are written in shortest round-trip form, so export → import →
//! export is byte-identical. A checksum over the category layout guards
//! against hand edits that reorder or drop categories.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{CalibratedItem, GgumItemParams, GrmItemParams, ItemParams, ModelKind, NrmItemParams};

use super::em::FitResult;

pub const FORMAT: &str = "polyscale-params/1";
const SCALE_NOTE: &str = "logits; population fixed at mean 0, sd 1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mean: f64,
    pub sd: f64,
}

impl Default for Prior {
    fn default() -> Self {
        Prior { mean: 0.0, sd: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub loglik: f64,
    pub n_params: usize,
    pub n_persons: usize,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Calibrated items of one model, ready to score new respondents.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub model: ModelKind,
    pub items: Vec<CalibratedItem>,
    pub prior: Prior,
    pub scale_note: String,
    pub fit: Option<FitSummary>,
}

// GGUM first: untagged matching takes the first shape that fits, and a GGUM
// record is a GRM record plus `tau`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ParamRecord {
    Ggum { a: f64, d: f64, tau: Vec<f64> },
    Grm { a: f64, d: Vec<f64> },
    Nrm { a: Vec<f64>, c: Vec<f64>, d: Vec<Option<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ItemRecord {
    id: String,
    categories: Vec<i64>,
    #[serde(flatten)]
    params: ParamRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileRecord {
    format: String,
    model: ModelKind,
    items: Vec<ItemRecord>,
    prior: Prior,
    scale_note: String,
    layout_checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<FitSummary>,
}

/// SHA-256 over the model name and each item's id and category labels.
pub fn layout_checksum(model: ModelKind, items: &[CalibratedItem]) -> String {
    let mut h = Sha256::new();
    h.update(model.as_str().as_bytes());
    for it in items {
        h.update(b"\n");
        h.update(it.id.as_bytes());
        h.update(b":");
        let cats: Vec<String> = it.categories.iter().map(i64::to_string).collect();
        h.update(cats.join(",").as_bytes());
    }
    hex::encode(h.finalize())
}

fn to_record(p: &ItemParams) -> ParamRecord {
    match p {
        ItemParams::Grm(g) => ParamRecord::Grm {
            a: g.a(),
            d: g.boundaries().to_vec(),
        },
        ItemParams::Ggum(g) => ParamRecord::Ggum {
            a: g.a(),
            d: g.location(),
            tau: g.thresholds().to_vec(),
        },
        ItemParams::Nrm(n) => ParamRecord::Nrm {
            a: n.slopes().to_vec(),
            c: n.intercepts().to_vec(),
            d: n.locations().into_iter().map(|d| d.is_finite().then_some(d)).collect(),
        },
    }
}

fn from_record(model: ModelKind, rec: ItemRecord) -> Result<CalibratedItem> {
    let params = match (model, rec.params) {
        (ModelKind::Grm, ParamRecord::Grm { a, d }) => ItemParams::Grm(GrmItemParams::new(a, d).map_err(|e| rename(e, &rec.id))?),
        (ModelKind::Ggum, ParamRecord::Ggum { a, d, tau }) => {
            ItemParams::Ggum(GgumItemParams::new(a, d, tau).map_err(|e| rename(e, &rec.id))?)
        }
        (ModelKind::Nrm, ParamRecord::Nrm { a, c, .. }) => {
            // locations are derived for readers; slopes and intercepts are authoritative
            ItemParams::Nrm(NrmItemParams::from_identified(a, c).map_err(|e| rename(e, &rec.id))?)
        }
        (_, other) => {
            let found = match other {
                ParamRecord::Grm { .. } => "grm",
                ParamRecord::Ggum { .. } => "ggum",
                ParamRecord::Nrm { .. } => "nrm",
            };
            return Err(Error::params(&rec.id, format!("{found} parameters in a {model} file")));
        }
    };
    CalibratedItem::new(rec.id, rec.categories, params)
}

fn rename(e: Error, id: &str) -> Error {
    match e {
        Error::InvalidParams { reason, .. } => Error::InvalidParams {
            item: id.to_string(),
            reason,
        },
        other => other,
    }
}

pub(crate) fn encode_items(items: &[CalibratedItem]) -> Vec<ItemRecord> {
    items
        .iter()
        .map(|it| ItemRecord {
            id: it.id.clone(),
            categories: it.categories.clone(),
            params: to_record(&it.params),
        })
        .collect()
}

pub(crate) fn decode_items(model: ModelKind, records: Vec<ItemRecord>) -> Result<Vec<CalibratedItem>> {
    records.into_iter().map(|r| from_record(model, r)).collect()
}

impl ParamsFile {
    pub fn from_fit(fit: &FitResult) -> Self {
        ParamsFile {
            model: fit.model,
            items: fit.items.clone(),
            prior: Prior::default(),
            scale_note: SCALE_NOTE.to_string(),
            fit: Some(FitSummary {
                loglik: fit.loglik,
                n_params: fit.n_params,
                n_persons: fit.n_persons,
                aic: fit.aic,
                bic: fit.bic,
                iterations: fit.iterations,
                converged: fit.converged,
            }),
        }
    }

    pub fn item_params(&self) -> Vec<ItemParams> {
        self.items.iter().map(|it| it.params.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = FileRecord {
            format: FORMAT.to_string(),
            model: self.model,
            items: encode_items(&self.items),
            prior: self.prior,
            scale_note: self.scale_note.clone(),
            layout_checksum: layout_checksum(self.model, &self.items),
            fit: self.fit.clone(),
        };
        let mut s = serde_json::to_string_pretty(&rec)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses and validates a parameter file. With `expected` set, a file
    /// for any other model is rejected.
    pub fn from_json(text: &str, expected: Option<ModelKind>) -> Result<Self> {
        let rec: FileRecord = serde_json::from_str(text)?;
        if let Some(want) = expected {
            if want != rec.model {
                return Err(Error::ModelMismatch {
                    expected: want.to_string(),
                    found: rec.model.to_string(),
                });
            }
        }
        if rec.prior.mean != 0.0 || rec.prior.sd != 1.0 {
            return Err(Error::InvalidInput(format!(
                "only a standard normal prior is supported, file has mean {} sd {}",
                rec.prior.mean, rec.prior.sd
            )));
        }
        let model = rec.model;
        let items = decode_items(model, rec.items)?;
        let computed = layout_checksum(model, &items);
        if computed != rec.layout_checksum {
            return Err(Error::LayoutChecksum {
                stored: rec.layout_checksum,
                computed,
            });
        }
        Ok(ParamsFile {
            model,
            items,
            prior: rec.prior,
            scale_note: rec.scale_note,
            fit: rec.fit,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, expected: Option<ModelKind>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, expected)
    }
}

pub fn export_params(fit: &FitResult) -> Result<String> {
    ParamsFile::from_fit(fit).to_json()
}

pub fn import_params(text: &str, expected: ModelKind) -> Result<ParamsFile> {
    ParamsFile::from_json(text, Some(expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(model: ModelKind) -> ParamsFile {
        let items = match model {
            ModelKind::Grm => vec![
                CalibratedItem::new("q1", vec![1, 2, 3], ItemParams::Grm(GrmItemParams::new(1.234567890123, vec![-0.1, 0.7]).unwrap())).unwrap(),
                CalibratedItem::new("q2", vec![0, 1], ItemParams::Grm(GrmItemParams::new(0.3, vec![1.0 / 3.0]).unwrap())).unwrap(),
            ],
            ModelKind::Ggum => vec![CalibratedItem::new(
                "q1",
                vec![1, 2, 3],
                ItemParams::Ggum(GgumItemParams::new(0.9, -0.4, vec![-1.1, -0.2]).unwrap()),
            )
            .unwrap()],
            ModelKind::Nrm => vec![CalibratedItem::new(
                "q1",
                vec![1, 2, 3, 4],
                ItemParams::Nrm(NrmItemParams::new(vec![-1.0, 0.0, 0.2, 0.8], vec![0.1, 0.4, -0.3, -0.2]).unwrap()),
            )
            .unwrap()],
        };
        ParamsFile {
            model,
            items,
            prior: Prior::default(),
            scale_note: SCALE_NOTE.into(),
            fit: None,
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for model in ModelKind::ALL {
            let text = sample(model).to_json().unwrap();
            let back = ParamsFile::from_json(&text, Some(model)).unwrap();
            assert_eq!(back, sample(model));
            assert_eq!(back.to_json().unwrap(), text);
        }
    }

    #[test]
    fn nrm_zero_slope_writes_null_location() {
        let f = sample(ModelKind::Nrm);
        let text = f.to_json().unwrap();
        assert!(text.contains("null"));
        assert!(ParamsFile::from_json(&text, None).is_ok());
    }

    #[test]
    fn uncentered_nominal_record_rejected() {
        let text = sample(ModelKind::Nrm).to_json().unwrap().replacen("0.8", "1.8", 1);
        assert!(matches!(ParamsFile::from_json(&text, None), Err(Error::InvalidParams { .. })));
    }

    #[test]
    fn model_mismatch_rejected() {
        let text = sample(ModelKind::Grm).to_json().unwrap();
        let err = import_params(&text, ModelKind::Nrm).unwrap_err();
        assert!(matches!(err, Error::ModelMismatch { .. }));
    }

    #[test]
    fn invalid_discrimination_rejected() {
        let text = sample(ModelKind::Grm).to_json().unwrap().replacen("\"a\": 1.234567890123", "\"a\": -0.5", 1);
        let err = ParamsFile::from_json(&text, None).unwrap_err();
        assert!(matches!(err, Error::InvalidParams { ref item, .. } if item == "q1"), "{err}");
    }

    #[test]
    fn edited_layout_fails_checksum() {
        let text = sample(ModelKind::Grm).to_json().unwrap();
        let edited = text.replacen("\"q2\"", "\"q9\"", 1);
        assert!(matches!(ParamsFile::from_json(&edited, None), Err(Error::LayoutChecksum { .. })));
    }

    #[test]
    fn wrong_record_shape_for_model() {
        let text = sample(ModelKind::Grm).to_json().unwrap().replacen("\"model\": \"grm\"", "\"model\": \"nrm\"", 1);
        assert!(matches!(ParamsFile::from_json(&text, None), Err(Error::InvalidParams { .. })));
    }
}
