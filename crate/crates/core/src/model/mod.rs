//! Graph encoder: edge-updated graph attention layers, baseline layers for
//! ablations, readout, and the optimiser.

mod adam;
mod checkpoint;
mod layers;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::{Gradients, Tape, Tensor, Var};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use layers::{
    baseline_layer, case_representation, encode_case, eugat_layer, gnn_layer, readout, GraphIndex, LayerInput,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnnKind {
    #[default]
    Eugat,
    Edgegat,
    Gat,
    Gcn,
}

impl FromStr for GnnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eugat" => Ok(GnnKind::Eugat),
            "edgegat" => Ok(GnnKind::Edgegat),
            "gat" => Ok(GnnKind::Gat),
            "gcn" => Ok(GnnKind::Gcn),
            other => Err(Error::Config(format!("unknown gnn kind `{other}`"))),
        }
    }
}

impl fmt::Display for GnnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GnnKind::Eugat => "eugat",
            GnnKind::Edgegat => "edgegat",
            GnnKind::Gat => "gat",
            GnnKind::Gcn => "gcn",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutKind {
    #[default]
    GlobalNode,
    Average,
}

impl FromStr for ReadoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" | "global_node" => Ok(ReadoutKind::GlobalNode),
            "avg" | "average" => Ok(ReadoutKind::Average),
            other => Err(Error::Config(format!("unknown readout `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub in_dim: usize,
    /// Must equal `in_dim`: both updates are residual.
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub leaky_slope: f64,
    pub gnn_kind: GnnKind,
    pub readout_kind: ReadoutKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            heads: 2,
            in_dim: 64,
            hidden_dim: 64,
            dropout_rate: 0.1,
            leaky_slope: 0.01,
            gnn_kind: GnnKind::Eugat,
            readout_kind: ReadoutKind::GlobalNode,
        }
    }
}

impl ModelConfig {
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.in_dim = dim;
        self.hidden_dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.heads < 1 {
            return Err(Error::Config("heads must be >= 1".into()));
        }
        if self.in_dim < 1 {
            return Err(Error::Config("in_dim must be >= 1".into()));
        }
        if self.hidden_dim != self.in_dim {
            return Err(Error::Config(format!(
                "hidden_dim ({}) must equal in_dim ({})",
                self.hidden_dim, self.in_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky_slope must be finite".into()));
        }
        Ok(())
    }
}

/// Weights of one attention head in one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    /// `d' × d`, applied to node features.
    pub w_node: Tensor,
    /// `d' × d`, applied to edge features.
    pub w_edge: Tensor,
    /// `3d' × 1` node attention vector.
    pub att_node: Tensor,
    /// `3d' × 1` edge attention vector.
    pub att_edge: Tensor,
}

impl HeadParams {
    fn zeros(d: usize, dh: usize) -> Self {
        HeadParams {
            w_node: Tensor::zeros(dh, d),
            w_edge: Tensor::zeros(dh, d),
            att_node: Tensor::zeros(3 * dh, 1),
            att_edge: Tensor::zeros(3 * dh, 1),
        }
    }
}

/// All trainable weights, indexed `[layer][head]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EugatParams {
    pub layers: Vec<Vec<HeadParams>>,
}

pub const HEAD_TENSOR_NAMES: [&str; 4] = ["w_node", "w_edge", "att_node", "att_edge"];

impl EugatParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        EugatParams {
            layers: (0..config.layers)
                .map(|_| (0..config.heads).map(|_| HeadParams::zeros(config.in_dim, config.hidden_dim)).collect())
                .collect(),
        }
    }

    /// Glorot-uniform initialisation: matrices in `±√(6/(d+d'))`, attention
    /// vectors in `±√(6/(3d'+1))`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (d, dh) = (config.in_dim, config.hidden_dim);
        let mat_bound = (6.0 / (d + dh) as f64).sqrt();
        let vec_bound = (6.0 / (3 * dh + 1) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |t: &mut Tensor, b: f64| {
            for x in t.data_mut() {
                *x = rng.gen_range(-b..=b);
            }
        };
        let mut p = Self::zeros(config);
        for layer in &mut p.layers {
            for h in layer {
                fill(&mut h.w_node, mat_bound);
                fill(&mut h.w_edge, mat_bound);
                fill(&mut h.att_node, vec_bound);
                fill(&mut h.att_edge, vec_bound);
            }
        }
        Ok(p)
    }

    pub fn num_tensors(&self) -> usize {
        self.layers.iter().map(|l| l.len() * 4).sum()
    }

    /// Flat `(name, tensor)` list in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(self.num_tensors());
        for (l, layer) in self.layers.iter().enumerate() {
            for (k, h) in layer.iter().enumerate() {
                for (name, t) in HEAD_TENSOR_NAMES.iter().zip([&h.w_node, &h.w_edge, &h.att_node, &h.att_edge]) {
                    out.push((format!("layer{l}.head{k}.{name}"), t));
                }
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for h in layer {
                out.push(&mut h.w_node);
                out.push(&mut h.w_edge);
                out.push(&mut h.att_node);
                out.push(&mut h.att_edge);
            }
        }
        out
    }

    /// Registers every tensor on `tape`, as trainable leaves when `trainable`.
    pub fn bind(&self, tape: &Tape, trainable: bool) -> BoundParams {
        let leaf = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        BoundParams {
            layers: self
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|h| HeadVars {
                            w_node: leaf(&h.w_node),
                            w_edge: leaf(&h.w_edge),
                            att_node: leaf(&h.att_node),
                            att_edge: leaf(&h.att_edge),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub w_node: Var,
    pub w_edge: Var,
    pub att_node: Var,
    pub att_edge: Var,
}

/// [`EugatParams`] registered on a tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub layers: Vec<Vec<HeadVars>>,
}

impl BoundParams {
    /// Rebuilds the structure from variables in canonical order, e.g. leaves
    /// created by a gradient checker.
    pub fn from_vars(config: &ModelConfig, vars: &[Var]) -> Result<Self> {
        if vars.len() != config.layers * config.heads * 4 {
            return Err(Error::Config(format!(
                "expected {} parameter variables, got {}",
                config.layers * config.heads * 4,
                vars.len()
            )));
        }
        let mut it = vars.chunks(4);
        let layers = (0..config.layers)
            .map(|_| {
                (0..config.heads)
                    .map(|_| {
                        let c = it.next().expect("length checked");
                        HeadVars {
                            w_node: c[0],
                            w_edge: c[1],
                            att_node: c[2],
                            att_edge: c[3],
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(BoundParams { layers })
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|h| [h.w_node, h.w_edge, h.att_node, h.att_edge])
            .collect()
    }

    /// Gradients in canonical order; tensors nothing flowed into get zeros.
    pub fn gradients(&self, grads: &Gradients, params: &EugatParams) -> Vec<Tensor> {
        self.vars()
            .into_iter()
            .zip(params.named_tensors())
            .map(|(v, (_, t))| grads.get_or_zeros(v, t.shape()))
            .collect()
    }
}
