//! Graph augmentation: relation-edge dropping and column feature masking.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeaturedCasePair, FeaturedGraph};
use crate::ndiff::Tensor;
use crate::tacg::{CaseGraph, Edge, EdgeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugMethod {
    None,
    #[default]
    EdgeDrop,
    FeatMaskNode,
    FeatMaskEdge,
}

impl AugMethod {
    /// Resolves on/off switches to a single method; more than one is rejected.
    pub fn from_flags(edge_drop: bool, mask_node: bool, mask_edge: bool) -> Result<Self> {
        match (edge_drop, mask_node, mask_edge) {
            (false, false, false) => Ok(AugMethod::None),
            (true, false, false) => Ok(AugMethod::EdgeDrop),
            (false, true, false) => Ok(AugMethod::FeatMaskNode),
            (false, false, true) => Ok(AugMethod::FeatMaskEdge),
            _ => Err(Error::Config("only one augmentation method may be active per view".into())),
        }
    }
}

impl FromStr for AugMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AugMethod::None),
            "edge-drop" | "edge_drop" => Ok(AugMethod::EdgeDrop),
            "mask-node" | "feat_mask_node" => Ok(AugMethod::FeatMaskNode),
            "mask-edge" | "feat_mask_edge" => Ok(AugMethod::FeatMaskEdge),
            other => Err(Error::Config(format!("unknown augmentation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub method: AugMethod,
    /// Probability that a relation edge is dropped.
    pub epsilon: f64,
    pub p_node: f64,
    pub p_edge: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            method: AugMethod::EdgeDrop,
            epsilon: 0.1,
            p_node: 0.1,
            p_edge: 0.1,
            seed: 0,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} outside [0, 1]")))
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        check_prob("epsilon", self.epsilon)?;
        check_prob("p_node", self.p_node)?;
        check_prob("p_edge", self.p_edge)
    }
}

/// Keeps the relation edges flagged in `keep` (indexed by relation-edge
/// order) and every global link, renumbering edge ids.
pub fn retain_relation_edges(g: &FeaturedGraph, keep: &[bool]) -> FeaturedGraph {
    let mut edges = Vec::with_capacity(g.graph.num_edges());
    let mut rows = Vec::with_capacity(g.graph.num_edges() * g.dim());
    let mut rel = 0;
    for e in &g.graph.edges {
        let kept = match e.kind {
            EdgeKind::GlobalLink => true,
            EdgeKind::Relation => {
                rel += 1;
                keep[rel - 1]
            }
        };
        if kept {
            edges.push(Edge { id: edges.len(), ..e.clone() });
            rows.extend_from_slice(g.edge_features.row(e.id));
        }
    }
    let n = edges.len();
    FeaturedGraph {
        graph: CaseGraph {
            role: g.graph.role,
            nodes: g.graph.nodes.clone(),
            edges,
        },
        node_features: g.node_features.clone(),
        edge_features: Tensor::from_vec(n, g.dim(), rows).expect("row count matches edge count"),
    }
}

fn drop_graph(g: &FeaturedGraph, epsilon: f64, rng: &mut ChaCha8Rng) -> FeaturedGraph {
    let keep: Vec<bool> = (0..g.graph.relation_edge_count()).map(|_| rng.gen::<f64>() >= epsilon).collect();
    retain_relation_edges(g, &keep)
}

/// Drops each relation edge independently with probability `epsilon`.
/// Global links and nodes are untouched.
pub fn edge_drop(pair: &FeaturedCasePair, epsilon: f64, rng: &mut ChaCha8Rng) -> Result<FeaturedCasePair> {
    check_prob("epsilon", epsilon)?;
    Ok(FeaturedCasePair {
        case_id: pair.case_id.clone(),
        fact: drop_graph(&pair.fact, epsilon, rng),
        issue: drop_graph(&pair.issue, epsilon, rng),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskTarget {
    Node,
    Edge,
}

/// Samples a column mask with each column masked with probability `p`.
pub fn sample_column_mask(dim: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    (0..dim).map(|_| rng.gen::<f64>() < p).collect()
}

pub fn apply_column_mask(t: &Tensor, mask: &[bool]) -> Tensor {
    let mut out = t.clone();
    for r in 0..out.rows() {
        for (x, &m) in out.row_mut(r).iter_mut().zip(mask) {
            if m {
                *x = 0.0;
            }
        }
    }
    out
}

fn mask_graph(g: &FeaturedGraph, target: MaskTarget, p: f64, rng: &mut ChaCha8Rng) -> FeaturedGraph {
    let mask = sample_column_mask(g.dim(), p, rng);
    let mut out = g.clone();
    match target {
        MaskTarget::Node => out.node_features = apply_column_mask(&g.node_features, &mask),
        MaskTarget::Edge => out.edge_features = apply_column_mask(&g.edge_features, &mask),
    }
    out
}

/// Zeroes feature columns of the targeted matrix; fact and issue graphs draw
/// independent masks.
pub fn feature_mask(
    pair: &FeaturedCasePair,
    target: MaskTarget,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FeaturedCasePair> {
    check_prob("p", p)?;
    Ok(FeaturedCasePair {
        case_id: pair.case_id.clone(),
        fact: mask_graph(&pair.fact, target, p, rng),
        issue: mask_graph(&pair.issue, target, p, rng),
    })
}

/// Produces one augmented view according to `cfg.method`.
pub fn augment_view(pair: &FeaturedCasePair, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<FeaturedCasePair> {
    match cfg.method {
        AugMethod::None => Ok(pair.clone()),
        AugMethod::EdgeDrop => edge_drop(pair, cfg.epsilon, rng),
        AugMethod::FeatMaskNode => feature_mask(pair, MaskTarget::Node, cfg.p_node, rng),
        AugMethod::FeatMaskEdge => feature_mask(pair, MaskTarget::Edge, cfg.p_edge, rng),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::features::{featurize_document, PromptTemplateSet, StubEncoder, TemplateId};
    use crate::tacg::{CaseDocument, RelationTriplet};

    fn pair() -> FeaturedCasePair {
        let doc = CaseDocument {
            case_id: "c".into(),
            fact_text: "facts".into(),
            issue_text: "issues".into(),
            fact_triplets: vec![RelationTriplet::new("a", "r", "b"), RelationTriplet::new("b", "s", "c")],
            issue_triplets: vec![RelationTriplet::new("x", "q", "y")],
        };
        featurize_document(&doc, true, &StubEncoder::new(6, 1).unwrap(), &PromptTemplateSet::get(TemplateId::P0))
            .unwrap()
    }

    #[test]
    fn degenerate_rates() {
        let p = pair();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(edge_drop(&p, 0.0, &mut rng).unwrap(), p);
        assert_eq!(feature_mask(&p, MaskTarget::Node, 0.0, &mut rng).unwrap(), p);
        let all = edge_drop(&p, 1.0, &mut rng).unwrap();
        for (g, orig) in all.graphs().into_iter().zip(p.graphs()) {
            assert_eq!(g.graph.relation_edge_count(), 0);
            assert_eq!(g.graph.num_edges(), orig.graph.num_edges() - orig.graph.relation_edge_count());
            assert_eq!(g.graph.nodes, orig.graph.nodes);
            g.validate().unwrap();
        }
        let masked = feature_mask(&p, MaskTarget::Edge, 1.0, &mut rng).unwrap();
        assert!(masked.fact.edge_features.data().iter().all(|&x| x == 0.0));
        assert_eq!(masked.fact.node_features, p.fact.node_features);
    }

    #[test]
    fn flags_reject_composition() {
        assert_eq!(AugMethod::from_flags(true, false, false).unwrap(), AugMethod::EdgeDrop);
        assert!(AugMethod::from_flags(true, true, false).is_err());
        assert!(AugMethod::from_flags(false, true, true).is_err());
    }

    #[test]
    fn out_of_range_rate_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(edge_drop(&pair(), 1.5, &mut rng).is_err());
        assert!(AugmentConfig {
            p_node: -0.1,
            ..AugmentConfig::default()
        }
        .validate()
        .is_err());
    }
}
