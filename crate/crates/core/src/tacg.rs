//! Text-attributed case graphs.
//!
//! Each case yields two directed graphs, one over its fact triplets and one
//! over its issue triplets. Entities become nodes (deduplicated by trimmed
//! surface), every triplet becomes a relation edge from head to tail, and an
//! optional virtual global node is linked to every entity in both directions.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `(head, relation, tail)` triple. Serialized as a three-element list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[String; 3]", into = "[String; 3]")]
pub struct RelationTriplet {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl From<[String; 3]> for RelationTriplet {
    fn from([head, relation, tail]: [String; 3]) -> Self {
        RelationTriplet {
            head,
            relation,
            tail,
        }
    }
}

impl From<RelationTriplet> for [String; 3] {
    fn from(t: RelationTriplet) -> Self {
        [t.head, t.relation, t.tail]
    }
}

impl RelationTriplet {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        RelationTriplet {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        for (name, field) in [("head", &self.head), ("relation", &self.relation), ("tail", &self.tail)] {
            if field.trim().is_empty() {
                return Err(Error::Triplet {
                    index,
                    msg: format!("empty {name}"),
                });
            }
        }
        Ok(())
    }

    /// The clause `head relation tail`, single-space joined after trimming.
    pub fn sentence(&self) -> String {
        format!("{} {} {}", self.head.trim(), self.relation.trim(), self.tail.trim())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDocument {
    pub case_id: String,
    pub fact_text: String,
    pub issue_text: String,
    pub fact_triplets: Vec<RelationTriplet>,
    pub issue_triplets: Vec<RelationTriplet>,
}

impl CaseDocument {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Error::Document {
            case_id: self.case_id.clone(),
            msg: msg.to_string(),
        };
        if self.case_id.trim().is_empty() {
            return Err(bad("empty case id"));
        }
        if self.fact_text.trim().is_empty() && !self.fact_triplets.is_empty() {
            return Err(bad("fact text is empty but fact triplets are present"));
        }
        if self.issue_text.trim().is_empty() && !self.issue_triplets.is_empty() {
            return Err(bad("issue text is empty but issue triplets are present"));
        }
        Ok(())
    }

    /// Text used for lexical matching: facts then issues.
    pub fn lexical_text(&self) -> String {
        format!("{} {}", self.fact_text, self.issue_text)
    }
}

/// Checks corpus-level invariants (unique ids, per-document validity).
pub fn validate_corpus(docs: &[CaseDocument]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for d in docs {
        d.validate()?;
        if !seen.insert(d.case_id.as_str()) {
            return Err(Error::Document {
                case_id: d.case_id.clone(),
                msg: "duplicate case id".into(),
            });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphRole {
    Fact,
    Issue,
}

impl GraphRole {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphRole::Fact => "fact",
            GraphRole::Issue => "issue",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Entity,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Relation,
    GlobalLink,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub surface: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    /// Relation text for relation edges; empty for global links.
    pub relation_surface: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseGraph {
    pub role: GraphRole,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl CaseGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn global_node(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Global)
    }

    pub fn entity_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Entity).count()
    }

    pub fn relation_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Relation).count()
    }

    /// Node identity qualified by the graph it lives in.
    pub fn qualified_id(&self, node: usize) -> (GraphRole, usize) {
        (self.role, node)
    }

    /// Outgoing neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.src].push(e.dst);
        }
        adj
    }

    /// Copy without the global node and its links.
    pub fn strip_global(&self) -> CaseGraph {
        let Some(g) = self.global_node() else {
            return self.clone();
        };
        let remap = |i: usize| if i > g { i - 1 } else { i };
        let nodes = self
            .nodes
            .iter()
            .filter(|n| n.kind != NodeKind::Global)
            .enumerate()
            .map(|(i, n)| Node { id: i, ..n.clone() })
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| e.kind != EdgeKind::GlobalLink)
            .enumerate()
            .map(|(i, e)| Edge {
                id: i,
                src: remap(e.src),
                dst: remap(e.dst),
                ..e.clone()
            })
            .collect();
        CaseGraph {
            role: self.role,
            nodes,
            edges,
        }
    }

    /// Copy with a global node appended and linked to every entity. A graph
    /// that already has one is returned unchanged.
    pub fn attach_global(&self) -> CaseGraph {
        if self.global_node().is_some() {
            return self.clone();
        }
        let mut out = self.clone();
        let g = out.nodes.len();
        out.nodes.push(Node {
            id: g,
            surface: String::new(),
            kind: NodeKind::Global,
        });
        for v in 0..g {
            for (src, dst) in [(g, v), (v, g)] {
                let id = out.edges.len();
                out.edges.push(Edge {
                    id,
                    src,
                    dst,
                    kind: EdgeKind::GlobalLink,
                    relation_surface: String::new(),
                });
            }
        }
        out
    }
}

/// Builds one case graph. Nodes are ordered by first appearance of their
/// surface; relation edges follow triplet order, then global links.
pub fn build_case_graph(triplets: &[RelationTriplet], include_global: bool) -> Result<CaseGraph> {
    build_role_graph(GraphRole::Fact, triplets, include_global)
}

fn node_for<'a>(surface: &'a str, index: &mut HashMap<&'a str, usize>, nodes: &mut Vec<Node>) -> usize {
    *index.entry(surface).or_insert_with(|| {
        nodes.push(Node {
            id: nodes.len(),
            surface: surface.to_string(),
            kind: NodeKind::Entity,
        });
        nodes.len() - 1
    })
}

pub(crate) fn build_role_graph(role: GraphRole, triplets: &[RelationTriplet], include_global: bool) -> Result<CaseGraph> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut edges = Vec::with_capacity(triplets.len());
    for (i, t) in triplets.iter().enumerate() {
        t.validate(i)?;
        let h = node_for(t.head.trim(), &mut index, &mut nodes);
        let tl = node_for(t.tail.trim(), &mut index, &mut nodes);
        edges.push(Edge {
            id: i,
            src: h,
            dst: tl,
            kind: EdgeKind::Relation,
            relation_surface: t.relation.trim().to_string(),
        });
    }
    let graph = CaseGraph { role, nodes, edges };
    Ok(if include_global { graph.attach_global() } else { graph })
}

/// Builds the fact and issue graphs of one document.
pub fn build_case_pair(doc: &CaseDocument, include_global: bool) -> Result<(CaseGraph, CaseGraph)> {
    doc.validate()?;
    let wrap = |role: GraphRole| {
        move |e: Error| Error::GraphRole {
            role: role.as_str(),
            source: Box::new(e),
        }
    };
    let fact = build_role_graph(GraphRole::Fact, &doc.fact_triplets, include_global).map_err(wrap(GraphRole::Fact))?;
    let issue = build_role_graph(GraphRole::Issue, &doc.issue_triplets, include_global).map_err(wrap(GraphRole::Issue))?;
    Ok((fact, issue))
}
