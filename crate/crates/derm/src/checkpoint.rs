//! Self-describing JSON model checkpoints.
//!
//! Layout (field names are part of the format):
//!
//! ```json
//! {
//!   "format": "cae-checkpoint",
//!   "version": 1,
//!   "dims": [8, 4, 2, 4, 8],
//!   "activations": ["relu", "relu", "relu", "linear"],
//!   "k": 2,
//!   "seed": 42,
//!   "config": { ... TrainConfig ... },
//!   "scaler": { "mean": [...], "std": [...] } | null,
//!   "autoencoders": [ { "layers": [ { "weights": [...], "bias": [...] } ] } ]
//! }
//! ```
//!
//! Weights are flat row-major `in_dim x out_dim` arrays. JSON numbers are
//! written in shortest round-trip form, so save/load reproduces every
//! f64 bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Activation, LayerParams, MlpParams};
use crate::collaborative::{CollabModel, TrainConfig};
use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

const FORMAT: &str = "cae-checkpoint";
const VERSION: u32 = 1;

/// A trained model bundled with everything needed to reuse it: the
/// config it was trained under and the feature scaler, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: CollabModel,
    pub config: TrainConfig,
    pub scaler: Option<Scaler>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dims: Vec<usize>,
    activations: Vec<String>,
    k: usize,
    seed: u64,
    config: TrainConfig,
    scaler: Option<Scaler>,
    autoencoders: Vec<AutoencoderFile>,
}

#[derive(Serialize, Deserialize)]
struct AutoencoderFile {
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let first = &self.model.autoencoders()[0];
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: VERSION,
            dims: first.dims(),
            activations: first.activations().iter().map(|a| a.to_string()).collect(),
            k: self.model.k(),
            seed: self.config.seed,
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            autoencoders: self
                .model
                .autoencoders()
                .iter()
                .map(|ae| AutoencoderFile {
                    layers: ae
                        .layers()
                        .iter()
                        .map(|l| LayerFile {
                            weights: l.weights().data().to_vec(),
                            bias: l.bias().to_vec(),
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(json)?;
        if file.format != FORMAT {
            return Err(Error::Param(format!(
                "not a {FORMAT} file (format = '{}')",
                file.format
            )));
        }
        if file.version != VERSION {
            return Err(Error::Param(format!(
                "unsupported checkpoint version {}",
                file.version
            )));
        }
        if file.dims.len() < 2 || file.activations.len() != file.dims.len() - 1 {
            return Err(Error::Shape("dims/activations length mismatch".into()));
        }
        if file.autoencoders.len() != file.k {
            return Err(Error::Shape(format!(
                "k = {} but {} autoencoders present",
                file.k,
                file.autoencoders.len()
            )));
        }
        let activations: Vec<Activation> = file
            .activations
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;

        let mut autoencoders = Vec::with_capacity(file.k);
        for ae in &file.autoencoders {
            if ae.layers.len() != file.dims.len() - 1 {
                return Err(Error::Shape(format!(
                    "{} layers for {} dims",
                    ae.layers.len(),
                    file.dims.len()
                )));
            }
            let mut layers = Vec::with_capacity(ae.layers.len());
            for (l, layer) in ae.layers.iter().enumerate() {
                let (rows, cols) = (file.dims[l], file.dims[l + 1]);
                layers.push(LayerParams::new(
                    Matrix::from_vec(rows, cols, layer.weights.clone())?,
                    layer.bias.clone(),
                    activations[l],
                )?);
            }
            autoencoders.push(MlpParams::from_layers(layers)?);
        }
        Ok(Checkpoint {
            model: CollabModel::from_parts(autoencoders)?,
            config: file.config,
            scaler: file.scaler,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
