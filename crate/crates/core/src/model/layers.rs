use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{BoundParams, GnnKind, HeadVars, ModelConfig, ReadoutKind};
use crate::error::{Error, Result};
use crate::features::{FeaturedCasePair, FeaturedGraph};
use crate::ndiff::{Tape, Tensor, Var};
use crate::tacg::CaseGraph;

/// Edge bookkeeping for message passing. Edges are visited sorted by
/// destination so each node's incoming edges form one softmax segment.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphIndex {
    pub num_nodes: usize,
    pub num_edges: usize,
    /// Original edge ids in destination order.
    pub order: Vec<usize>,
    /// Position of each original edge inside `order`.
    pub inverse: Vec<usize>,
    pub src_sorted: Vec<usize>,
    pub dst_sorted: Vec<usize>,
    pub in_degree: Vec<usize>,
    pub global_node: Option<usize>,
}

impl GraphIndex {
    pub fn new(graph: &CaseGraph) -> Self {
        let n = graph.num_nodes();
        let mut order: Vec<usize> = (0..graph.num_edges()).collect();
        order.sort_by_key(|&e| graph.edges[e].dst);
        let mut inverse = vec![0; order.len()];
        for (pos, &e) in order.iter().enumerate() {
            inverse[e] = pos;
        }
        let src_sorted = order.iter().map(|&e| graph.edges[e].src).collect();
        let dst_sorted: Vec<usize> = order.iter().map(|&e| graph.edges[e].dst).collect();
        let mut in_degree = vec![0; n];
        for &d in &dst_sorted {
            in_degree[d] += 1;
        }
        GraphIndex {
            num_nodes: n,
            num_edges: order.len(),
            order,
            inverse,
            src_sorted,
            dst_sorted,
            in_degree,
            global_node: graph.global_node(),
        }
    }
}

/// Node and edge representations flowing between layers.
#[derive(Clone, Copy, Debug)]
pub struct LayerInput {
    /// `num_nodes × d`
    pub nodes: Var,
    /// `num_edges × d`, rows in original edge order.
    pub edges: Var,
}

fn project(tape: &Tape, x: Var, w: Var) -> Result<Var> {
    let wt = tape.transpose(w)?;
    tape.matmul(x, wt)
}

/// One edge-updated attention layer. Node and edge updates both read the
/// layer's input representations; outputs are residual.
pub fn eugat_layer(
    tape: &Tape,
    input: LayerInput,
    index: &GraphIndex,
    heads: &[HeadVars],
    cfg: &ModelConfig,
    update_edges: bool,
) -> Result<LayerInput> {
    if index.num_edges == 0 {
        return Ok(input);
    }
    let slope = cfg.leaky_slope;
    let mut node_msgs = Vec::with_capacity(heads.len());
    let mut edge_scores = Vec::with_capacity(heads.len());
    let q_sorted_input = tape.gather_rows(input.edges, &index.order)?;
    for h in heads {
        let p = project(tape, input.nodes, h.w_node)?;
        let q = project(tape, q_sorted_input, h.w_edge)?;
        let p_dst = tape.gather_rows(p, &index.dst_sorted)?;
        let p_src = tape.gather_rows(p, &index.src_sorted)?;

        let cat = tape.concat_cols(&[p_dst, p_src, q])?;
        let raw = tape.matmul(cat, h.att_node)?;
        let alpha = tape.segment_softmax(tape.leaky_relu(raw, slope)?, &index.dst_sorted)?;
        let msg = tape.scale_rows(tape.add(p_src, q)?, alpha)?;
        node_msgs.push(tape.scatter_add_rows(msg, &index.dst_sorted, index.num_nodes)?);

        if update_edges {
            let cat_e = tape.concat_cols(&[p_dst, q, p_src])?;
            edge_scores.push(tape.leaky_relu(tape.matmul(cat_e, h.att_edge)?, slope)?);
        }
    }
    let nodes = tape.add(input.nodes, tape.mean(&node_msgs)?)?;
    let edges = if update_edges {
        let s = tape.gather_rows(tape.mean(&edge_scores)?, &index.inverse)?;
        tape.add_col_broadcast(input.edges, s)?
    } else {
        input.edges
    };
    Ok(LayerInput { nodes, edges })
}

/// Plain attention (`Gat`) or normalised convolution (`Gcn`); edges pass
/// through unchanged.
pub fn baseline_layer(
    tape: &Tape,
    input: LayerInput,
    index: &GraphIndex,
    heads: &[HeadVars],
    cfg: &ModelConfig,
    kind: GnnKind,
) -> Result<LayerInput> {
    let dh = cfg.hidden_dim;
    let mut msgs = Vec::with_capacity(heads.len());
    match kind {
        GnnKind::Gat => {
            if index.num_edges == 0 {
                return Ok(input);
            }
            for h in heads {
                let p = project(tape, input.nodes, h.w_node)?;
                let p_dst = tape.gather_rows(p, &index.dst_sorted)?;
                let p_src = tape.gather_rows(p, &index.src_sorted)?;
                let att = tape.slice_rows(h.att_node, 0, 2 * dh)?;
                let raw = tape.matmul(tape.concat_cols(&[p_dst, p_src])?, att)?;
                let alpha = tape.segment_softmax(tape.leaky_relu(raw, cfg.leaky_slope)?, &index.dst_sorted)?;
                let msg = tape.scale_rows(p_src, alpha)?;
                msgs.push(tape.scatter_add_rows(msg, &index.dst_sorted, index.num_nodes)?);
            }
        }
        GnnKind::Gcn => {
            let deg: Vec<f64> = index.in_degree.iter().map(|&d| d as f64 + 1.0).collect();
            let self_w = tape.constant(Tensor::column_vector(deg.iter().map(|d| 1.0 / d).collect()));
            let edge_w = (index.num_edges > 0).then(|| {
                tape.constant(Tensor::column_vector(
                    index
                        .src_sorted
                        .iter()
                        .zip(&index.dst_sorted)
                        .map(|(&u, &v)| 1.0 / (deg[u] * deg[v]).sqrt())
                        .collect(),
                ))
            });
            for h in heads {
                let p = project(tape, input.nodes, h.w_node)?;
                let mut agg = tape.scale_rows(p, self_w)?;
                if let Some(w) = edge_w {
                    let m = tape.scale_rows(tape.gather_rows(p, &index.src_sorted)?, w)?;
                    agg = tape.add(agg, tape.scatter_add_rows(m, &index.dst_sorted, index.num_nodes)?)?;
                }
                msgs.push(agg);
            }
        }
        GnnKind::Eugat | GnnKind::Edgegat => {
            return Err(Error::op("baseline_layer", format!("{kind} is not a baseline")));
        }
    }
    Ok(LayerInput {
        nodes: tape.add(input.nodes, tape.mean(&msgs)?)?,
        edges: input.edges,
    })
}

fn dropout(tape: &Tape, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
    let (r, c) = tape.shape(x);
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..r * c).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
    tape.mul(x, tape.constant(Tensor::from_vec(r, c, mask)?))
}

/// Dispatches on `cfg.gnn_kind`, then applies inverted dropout when an rng
/// is supplied (training mode).
pub fn gnn_layer(
    tape: &Tape,
    input: LayerInput,
    index: &GraphIndex,
    heads: &[HeadVars],
    cfg: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<LayerInput> {
    let out = match cfg.gnn_kind {
        GnnKind::Eugat => eugat_layer(tape, input, index, heads, cfg, true)?,
        GnnKind::Edgegat => eugat_layer(tape, input, index, heads, cfg, false)?,
        kind => baseline_layer(tape, input, index, heads, cfg, kind)?,
    };
    match rng {
        Some(rng) if cfg.dropout_rate > 0.0 => Ok(LayerInput {
            nodes: dropout(tape, out.nodes, cfg.dropout_rate, rng)?,
            edges: if index.num_edges > 0 {
                dropout(tape, out.edges, cfg.dropout_rate, rng)?
            } else {
                out.edges
            },
        }),
        _ => Ok(out),
    }
}

pub fn readout(tape: &Tape, nodes: Var, index: &GraphIndex, kind: ReadoutKind) -> Result<Var> {
    match kind {
        ReadoutKind::GlobalNode => {
            let g = index.global_node.ok_or(Error::NoGlobalNode)?;
            tape.gather_rows(nodes, &[g])
        }
        ReadoutKind::Average => tape.mean_rows(nodes),
    }
}

/// Runs all layers over one graph and returns its `1 × d` readout.
pub fn encode_case(
    tape: &Tape,
    graph: &FeaturedGraph,
    params: &BoundParams,
    cfg: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    if graph.dim() != cfg.in_dim {
        return Err(Error::DimMismatch {
            expected: cfg.in_dim,
            found: graph.dim(),
        });
    }
    let index = GraphIndex::new(&graph.graph);
    if cfg.readout_kind == ReadoutKind::GlobalNode && index.global_node.is_none() {
        return Err(Error::NoGlobalNode);
    }
    let mut state = LayerInput {
        nodes: tape.constant(graph.node_features.clone()),
        edges: tape.constant(graph.edge_features.clone()),
    };
    for heads in &params.layers {
        state = gnn_layer(tape, state, &index, heads, cfg, rng.as_deref_mut())?;
    }
    readout(tape, state.nodes, &index, cfg.readout_kind)
}

/// `1 × 2d` case vector: fact readout followed by issue readout.
pub fn case_representation(
    tape: &Tape,
    pair: &FeaturedCasePair,
    params: &BoundParams,
    cfg: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let f = encode_case(tape, &pair.fact, params, cfg, rng.as_deref_mut())?;
    let i = encode_case(tape, &pair.issue, params, cfg, rng)?;
    tape.concat_cols(&[f, i])
}
