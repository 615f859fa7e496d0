//! Versioned JSON checkpoints.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "model": "elstm",
//!   "dims": {"d": 26, "h": 100, "v": 26},
//!   "seed": 7,
//!   "vocab": ["a", "b", ...],
//!   "params": {"w_f": [[...], ...], "b_f": [...], ...},
//!   "egate": {"window": 25, "lambda": 0.001, "gain": 1.0, "encode_scale": 0.1,
//!             "p_encode": [[...]], "beta": [[...]]}
//! }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use elstm_core::elstm::{EGateConfig, EGateState};
use elstm_core::linalg::Matrix;
use elstm_core::lstm::LstmParams;
use elstm_core::model::{EGate, Model, ModelKind};
use elstm_core::textdata::Vocab;
use serde::{Deserialize, Serialize};

use crate::{LabError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub d: usize,
    pub h: usize,
    pub v: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub w_f: Vec<Vec<f64>>,
    pub w_i: Vec<Vec<f64>>,
    pub w_c: Vec<Vec<f64>>,
    pub w_o: Vec<Vec<f64>>,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
    pub w_y: Vec<Vec<f64>>,
    pub b_y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EGateDoc {
    pub window: usize,
    pub lambda: f64,
    pub gain: f64,
    pub encode_scale: f64,
    pub p_encode: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: String,
    pub dims: Dims,
    pub seed: u64,
    pub vocab: Vec<char>,
    pub params: ParamsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egate: Option<EGateDoc>,
}

fn matrix(name: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<Matrix> {
    let m = Matrix::from_rows(rows).map_err(|e| LabError::Checkpoint(format!("{name}: {e}")))?;
    if m.shape() != shape {
        return Err(LabError::Checkpoint(format!(
            "{name} has shape {:?}, expected {shape:?}",
            m.shape()
        )));
    }
    Ok(m)
}

impl Checkpoint {
    pub fn from_model(model: &Model, vocab: &Vocab, seed: u64) -> Self {
        let p = &model.params;
        Checkpoint {
            format_version: FORMAT_VERSION,
            model: model.kind().as_str().into(),
            dims: Dims {
                d: p.d,
                h: p.h,
                v: p.v,
            },
            seed,
            vocab: vocab.chars().to_vec(),
            params: ParamsDoc {
                w_f: p.w_f.to_rows(),
                w_i: p.w_i.to_rows(),
                w_c: p.w_c.to_rows(),
                w_o: p.w_o.to_rows(),
                b_f: p.b_f.clone(),
                b_i: p.b_i.clone(),
                b_c: p.b_c.clone(),
                b_o: p.b_o.clone(),
                w_y: p.w_y.to_rows(),
                b_y: p.b_y.clone(),
            },
            egate: model.gate.as_ref().map(|g| EGateDoc {
                window: g.config.window,
                lambda: g.config.lambda,
                gain: g.config.gain,
                encode_scale: g.config.encode_scale,
                p_encode: g.state.p_encode().to_rows(),
                beta: g.state.beta().to_rows(),
            }),
        }
    }

    /// Rebuild the model and vocabulary, validating every shape.
    pub fn to_model(&self) -> Result<(Model, Vocab)> {
        if self.format_version != FORMAT_VERSION {
            return Err(LabError::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let kind: ModelKind = self
            .model
            .parse()
            .map_err(|e: elstm_core::Error| LabError::Checkpoint(e.to_string()))?;
        let Dims { d, h, v } = self.dims;
        let mut p = LstmParams::zeros(d, h, v).map_err(|e| LabError::Checkpoint(e.to_string()))?;
        let doc = &self.params;
        p.w_f = matrix("w_f", &doc.w_f, (h, h + d))?;
        p.w_i = matrix("w_i", &doc.w_i, (h, h + d))?;
        p.w_c = matrix("w_c", &doc.w_c, (h, h + d))?;
        p.w_o = matrix("w_o", &doc.w_o, (h, h + d))?;
        p.w_y = matrix("w_y", &doc.w_y, (v, h))?;
        p.b_f = doc.b_f.clone();
        p.b_i = doc.b_i.clone();
        p.b_c = doc.b_c.clone();
        p.b_o = doc.b_o.clone();
        p.b_y = doc.b_y.clone();
        p.validate()
            .map_err(|e| LabError::Checkpoint(e.to_string()))?;

        let vocab = Vocab::from_chars(self.vocab.iter().copied());
        if vocab.chars() != self.vocab.as_slice() || vocab.len() != v || vocab.len() != d {
            return Err(LabError::Checkpoint(format!(
                "vocab must list {v} distinct characters in code-point order"
            )));
        }

        let gate = match (kind, &self.egate) {
            (ModelKind::Lstm, None) => None,
            (ModelKind::Elstm, Some(g)) => {
                let config = EGateConfig {
                    window: g.window,
                    lambda: g.lambda,
                    gain: g.gain,
                    encode_scale: g.encode_scale,
                };
                config
                    .validate()
                    .map_err(|e| LabError::Checkpoint(e.to_string()))?;
                let state = EGateState::from_parts(
                    matrix("egate.p_encode", &g.p_encode, (v, h))?,
                    matrix("egate.beta", &g.beta, (h, h))?,
                );
                Some(EGate { state, config })
            }
            (ModelKind::Lstm, Some(_)) => {
                return Err(LabError::Checkpoint(
                    "lstm checkpoint carries an egate block".into(),
                ))
            }
            (ModelKind::Elstm, None) => {
                return Err(LabError::Checkpoint(
                    "elstm checkpoint lacks an egate block".into(),
                ))
            }
        };
        Ok((Model { params: p, gate }, vocab))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| LabError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => LabError::MissingFile(path.to_path_buf()),
            _ => LabError::io(path, e),
        })?;
        serde_json::from_str(&text).map_err(|e| LabError::Checkpoint(e.to_string()))
    }
}
