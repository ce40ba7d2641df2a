//! Single-document JSON checkpoints: layer widths, flattened parameters,
//! optional Adam state, and a format-version field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, AdamState, LayerSpec, Mlp, NnError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerField {
    width: usize,
    activation: String,
    layer_norm: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub input_dim: usize,
    layers: Vec<LayerField>,
    pub params: Vec<f64>,
    pub adam: Option<AdamState>,
    /// Hash of the run config that produced this checkpoint, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl Checkpoint {
    pub fn from_mlp(net: &Mlp, adam: Option<&AdamState>) -> Self {
        let layers = net
            .layer_specs()
            .iter()
            .map(|s| LayerField {
                width: s.width,
                activation: match s.activation {
                    Activation::Identity => "identity".to_string(),
                    Activation::Gelu => "gelu".to_string(),
                },
                layer_norm: s.layer_norm,
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            input_dim: net.input_dim(),
            layers,
            params: net.flat_params(),
            adam: adam.cloned(),
            config_hash: None,
        }
    }

    pub fn to_mlp(&self) -> Result<(Mlp, Option<AdamState>), NnError> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(NnError::BadCheckpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let mut specs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let activation = match layer.activation.as_str() {
                "identity" => Activation::Identity,
                "gelu" => Activation::Gelu,
                other => {
                    return Err(NnError::BadCheckpoint(format!("unknown activation {other:?}")))
                }
            };
            specs.push(LayerSpec { width: layer.width, activation, layer_norm: layer.layer_norm });
        }
        let mut net = Mlp::zeroed(self.input_dim, &specs);
        net.set_flat_params(&self.params)?;
        if let Some(adam) = &self.adam {
            if adam.param_count() != net.param_count() {
                return Err(NnError::BadCheckpoint(format!(
                    "adam state has {} entries for {} params",
                    adam.param_count(),
                    net.param_count()
                )));
            }
        }
        Ok((net, self.adam.clone()))
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
