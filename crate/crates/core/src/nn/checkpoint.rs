//! JSON container for network parameters: layer shapes plus flat arrays.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    /// row-major `inputs × outputs`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub version: u32,
    pub activation: Activation,
    pub layers: Vec<LayerRecord>,
}

impl From<&Mlp> for NetworkRecord {
    fn from(net: &Mlp) -> Self {
        Self {
            version: FORMAT_VERSION,
            activation: net.activation,
            layers: net
                .layers
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkRecord> for Mlp {
    type Error = Error;

    fn try_from(rec: NetworkRecord) -> Result<Self> {
        if rec.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported network format version {}",
                rec.version
            )));
        }
        if rec.layers.is_empty() {
            return Err(Error::Checkpoint("network has no layers".into()));
        }
        let mut layers = Vec::with_capacity(rec.layers.len());
        for (i, l) in rec.layers.into_iter().enumerate() {
            if i > 0 && layers.last().map(Dense::outputs) != Some(l.inputs) {
                return Err(Error::Checkpoint(format!("layer {i} input width mismatch")));
            }
            let weights = Array2::from_shape_vec((l.inputs, l.outputs), l.weights)
                .map_err(|e| Error::Checkpoint(format!("layer {i}: {e}")))?;
            if l.bias.len() != l.outputs {
                return Err(Error::Checkpoint(format!("layer {i} bias length mismatch")));
            }
            layers.push(Dense {
                weights,
                bias: Array1::from(l.bias),
            });
        }
        Ok(Mlp {
            layers,
            activation: rec.activation,
        })
    }
}

pub fn to_json(net: &Mlp) -> String {
    serde_json::to_string(&NetworkRecord::from(net)).expect("network serializes")
}

pub fn from_json(text: &str) -> Result<Mlp> {
    let rec: NetworkRecord =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Mlp::try_from(rec)
}
