//! Node and edge features for case graphs.
//!
//! Every entity node, relation edge and global node is described by a prompt
//! rendered from one of the template sets below. Prompts are either encoded
//! in-process by [`StubEncoder`] or exported, encoded by an external model,
//! and loaded back through [`load_embeddings`]. Global-link edges carry no
//! text of their own: they copy the feature row of their entity endpoint.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ndiff::Tensor;
use crate::tacg::{CaseDocument, CaseGraph, EdgeKind, NodeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    None,
    #[default]
    P0,
    P1,
    P2,
    P3,
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TemplateId::None),
            "p0" => Ok(TemplateId::P0),
            "p1" => Ok(TemplateId::P1),
            "p2" => Ok(TemplateId::P2),
            "p3" => Ok(TemplateId::P3),
            other => Err(Error::Config(format!("unknown template `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    Head,
    Tail,
    Relation,
    FactGlobal,
    IssueGlobal,
    WholeCase,
}

impl PromptRole {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptRole::Head => "head",
            PromptRole::Tail => "tail",
            PromptRole::Relation => "relation",
            PromptRole::FactGlobal => "fact_global",
            PromptRole::IssueGlobal => "issue_global",
            PromptRole::WholeCase => "whole_case",
        }
    }
}

impl fmt::Display for PromptRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "head" => PromptRole::Head,
            "tail" => PromptRole::Tail,
            "relation" => PromptRole::Relation,
            "fact_global" => PromptRole::FactGlobal,
            "issue_global" => PromptRole::IssueGlobal,
            "whole_case" => PromptRole::WholeCase,
            other => return Err(Error::UnknownRole(other.to_string())),
        })
    }
}

/// Prompt templates. Triplet templates may contain `{sentence}` and `{span}`
/// slots; the global prompts are a prefix followed by the section text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplateSet {
    pub template_id: TemplateId,
    pub head_template: &'static str,
    pub tail_template: &'static str,
    pub relation_template: &'static str,
    pub fact_prefix: &'static str,
    pub issue_prefix: &'static str,
}

impl PromptTemplateSet {
    pub fn get(id: TemplateId) -> PromptTemplateSet {
        match id {
            TemplateId::None => PromptTemplateSet {
                template_id: id,
                head_template: "{span}",
                tail_template: "{span}",
                relation_template: "{span}",
                fact_prefix: "",
                issue_prefix: "",
            },
            TemplateId::P0 => PromptTemplateSet {
                template_id: id,
                head_template: "Given the following sentence, {sentence}, the head entity of legal relation triplet is: {span}",
                tail_template: "Given the following sentence, {sentence}, the tail entity of legal relation triplet is: {span}",
                relation_template:
                    "Given the following sentence, {sentence}, the relation between two entities of legal relation triplet is: {span}",
                fact_prefix: "Legal facts: ",
                issue_prefix: "Legal issues: ",
            },
            TemplateId::P1 => PromptTemplateSet {
                template_id: id,
                head_template: concat!(
                    "You are a legal knowledge extraction system tasked with constructing knowledge graphs from legal texts. ",
                    "Please identify and encode the following head entity that captures the meaningful legal relationships in the case: {span}"
                ),
                tail_template: concat!(
                    "You are a legal knowledge extraction system tasked with constructing knowledge graphs from legal texts. ",
                    "Please identify and encode the following tail entity that captures the meaningful legal relationships in the case: {span}"
                ),
                relation_template: concat!(
                    "You are a legal knowledge extraction system tasked with constructing knowledge graphs from legal texts. ",
                    "Please identify and encode the following relations that captures the meaningful legal relationships in the case: {span}"
                ),
                fact_prefix: concat!(
                    "You are a legal assistant trained to extract and encode structured legal information from case texts, ",
                    "identify and encode the following legal fact: "
                ),
                issue_prefix: concat!(
                    "You are a legal assistant trained to extract and encode structured legal information from case texts, ",
                    "identify and encode the following legal issue: "
                ),
            },
            TemplateId::P2 => PromptTemplateSet {
                template_id: id,
                head_template: "Given the following sentence, {sentence}, the head entity of legal relation triplet is:",
                tail_template: "Given the following sentence, {sentence}, the tail entity of legal relation triplet is:",
                relation_template: "Given the following sentence, {sentence}, the relation between two entities of legal relation triplet is",
                fact_prefix: "Legal facts: ",
                issue_prefix: "Legal issues: ",
            },
            TemplateId::P3 => PromptTemplateSet {
                template_id: id,
                head_template: "Instruction: Encode the legal head entity, {span}, from the following legal sentence: {sentence}.",
                tail_template: "Instruction: Encode the legal tail entity, {span}, from the following legal sentence: {sentence}.",
                relation_template: "Instruction: Encode the legal relation, {span}, from the following legal sentence: {sentence}.",
                fact_prefix: "Legal facts: ",
                issue_prefix: "Legal issues: ",
            },
        }
    }
}

/// Substitutes `{sentence}` and `{span}` in one left-to-right pass.
fn fill(template: &str, sentence: &str, span: &str) -> String {
    let mut out = String::with_capacity(template.len() + sentence.len() + span.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(r) = tail.strip_prefix("{sentence}") {
            out.push_str(sentence);
            rest = r;
        } else if let Some(r) = tail.strip_prefix("{span}") {
            out.push_str(span);
            rest = r;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// Renders a triplet or global prompt. For global roles the `span` is the
/// section text and `sentence` is ignored.
pub fn render_prompt(set: &PromptTemplateSet, role: PromptRole, sentence: &str, span: &str) -> Result<String> {
    Ok(match role {
        PromptRole::Head => fill(set.head_template, sentence, span),
        PromptRole::Tail => fill(set.tail_template, sentence, span),
        PromptRole::Relation => fill(set.relation_template, sentence, span),
        PromptRole::FactGlobal => format!("{}{}", set.fact_prefix, span),
        PromptRole::IssueGlobal => format!("{}{}", set.issue_prefix, span),
        PromptRole::WholeCase => return Err(Error::UnknownRole(role.to_string())),
    })
}

/// Whole-case prompt used for exporting case-level encoding requests.
pub fn render_whole_case_prompt(doc: &CaseDocument) -> String {
    format!(
        "# System Prompt\nThe following contains key components of a legal case.\n\n# User Prompt\nLegal facts: {}.\nLegal issues: {}.",
        doc.fact_text, doc.issue_text
    )
}

/// Stable key of a prompt: the first 16 bytes of its SHA-256, hex encoded.
pub fn prompt_key(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    hex::encode(&digest[..16])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub key: String,
    pub role: PromptRole,
    pub prompt: String,
}

impl EmbeddingRequest {
    pub fn new(role: PromptRole, prompt: String) -> Self {
        EmbeddingRequest {
            key: prompt_key(&prompt),
            role,
            prompt,
        }
    }
}

/// Anything that turns an encoding request into a feature vector.
pub trait EmbeddingProvider: Sync {
    fn dim(&self) -> usize;

    fn embed(&self, request: &EmbeddingRequest) -> Option<Vec<f64>>;
}

/// Deterministic hashed bag-of-tokens encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StubEncoder {
    pub dim: usize,
    pub seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ splitmix(seed);
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(h)
}

impl StubEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("stub encoder needs dim >= 2, got {dim}")));
        }
        Ok(StubEncoder { dim, seed })
    }

    /// Unit-norm encoding of `text`. Each whitespace token adds ±1 at a hashed
    /// index; texts without tokens (or whose tokens cancel) map to `e_0`.
    pub fn encode(&self, text: &str) -> Vec<f64> {
        stub_encode(text, self.dim, self.seed)
    }
}

pub fn stub_encode(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for tok in text.split_whitespace() {
        let h = token_hash(tok, seed);
        let idx = (h % dim as u64) as usize;
        v[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

impl EmbeddingProvider for StubEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, request: &EmbeddingRequest) -> Option<Vec<f64>> {
        Some(self.encode(&request.prompt))
    }
}

/// Precomputed embeddings keyed by prompt key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingMap {
    dim: usize,
    map: HashMap<String, Vec<f64>>,
}

impl EmbeddingMap {
    pub fn new(dim: usize) -> Self {
        EmbeddingMap {
            dim,
            map: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.map.get(key).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Adds a record, collapsing identical duplicates.
    pub fn insert(&mut self, key: String, vector: Vec<f64>, line: usize) -> Result<()> {
        if self.map.is_empty() && self.dim == 0 {
            self.dim = vector.len();
        }
        if vector.len() != self.dim {
            return Err(Error::WidthMismatch {
                expected: self.dim,
                found: vector.len(),
                line,
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEmbedding(line));
        }
        match self.map.get(&key) {
            Some(existing) if *existing != vector => Err(Error::ConflictingKey(key)),
            Some(_) => Ok(()),
            None => {
                self.map.insert(key, vector);
                Ok(())
            }
        }
    }
}

impl EmbeddingProvider for EmbeddingMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, request: &EmbeddingRequest) -> Option<Vec<f64>> {
        self.map.get(&request.key).cloned()
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    key: String,
    vector: Vec<f64>,
}

/// Reads an embedding file: one JSON object `{"key", "vector"}` per line.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingMap> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map = EmbeddingMap::new(0);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let msg = e.to_string();
                if line.contains("NaN") || line.contains("Infinity") || msg.contains("out of range") {
                    return Err(Error::NonFiniteEmbedding(line_no));
                }
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg,
                });
            }
        };
        map.insert(rec.key, rec.vector, line_no)?;
    }
    Ok(map)
}

/// Writes embeddings in the format read by [`load_embeddings`], sorted by key.
pub fn write_embeddings<'a>(
    path: &Path,
    records: impl IntoIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let mut sorted: Vec<_> = records.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = Vec::new();
    for (key, vector) in sorted {
        let rec = EmbeddingRecord {
            key: key.to_string(),
            vector: vector.to_vec(),
        };
        serde_json::to_writer(&mut out, &rec).expect("in-memory write");
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `{"key", "role", "prompt"}` lines.
pub fn write_prompt_export(path: &Path, requests: &[EmbeddingRequest]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in requests {
        serde_json::to_writer(&mut w, r).expect("serializable");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_prompt_export(path: &Path) -> Result<Vec<EmbeddingRequest>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Role and source sentence of an entity node's first occurrence.
fn first_occurrence(graph: &CaseGraph, node: usize) -> Option<(PromptRole, usize)> {
    graph.edges.iter().find_map(|e| {
        if e.kind != EdgeKind::Relation {
            None
        } else if e.src == node {
            Some((PromptRole::Head, e.id))
        } else if e.dst == node {
            Some((PromptRole::Tail, e.id))
        } else {
            None
        }
    })
}

fn edge_sentence(graph: &CaseGraph, edge: usize) -> String {
    let e = &graph.edges[edge];
    format!(
        "{} {} {}",
        graph.nodes[e.src].surface, e.relation_surface, graph.nodes[e.dst].surface
    )
}

/// The request that defines each node (`nodes`) and each relation edge
/// (`edges`, `None` for global links).
#[derive(Clone, Debug)]
pub struct GraphRequests {
    pub nodes: Vec<EmbeddingRequest>,
    pub edges: Vec<Option<EmbeddingRequest>>,
}

pub fn graph_requests(graph: &CaseGraph, section_text: &str, set: &PromptTemplateSet) -> Result<GraphRequests> {
    let global_role = match graph.role {
        crate::tacg::GraphRole::Fact => PromptRole::FactGlobal,
        crate::tacg::GraphRole::Issue => PromptRole::IssueGlobal,
    };
    let mut nodes = Vec::with_capacity(graph.num_nodes());
    for n in &graph.nodes {
        let req = match n.kind {
            NodeKind::Global => EmbeddingRequest::new(global_role, render_prompt(set, global_role, "", section_text)?),
            NodeKind::Entity => {
                let (role, edge) = first_occurrence(graph, n.id)
                    .ok_or_else(|| Error::op("graph_requests", format!("entity node {} has no relation edge", n.id)))?;
                let sentence = edge_sentence(graph, edge);
                EmbeddingRequest::new(role, render_prompt(set, role, &sentence, &n.surface)?)
            }
        };
        nodes.push(req);
    }
    let mut edges = Vec::with_capacity(graph.num_edges());
    for e in &graph.edges {
        edges.push(match e.kind {
            EdgeKind::GlobalLink => None,
            EdgeKind::Relation => {
                let sentence = edge_sentence(graph, e.id);
                Some(EmbeddingRequest::new(
                    PromptRole::Relation,
                    render_prompt(set, PromptRole::Relation, &sentence, &e.relation_surface)?,
                ))
            }
        });
    }
    Ok(GraphRequests { nodes, edges })
}

/// All encoding requests needed for a corpus, deduplicated by key in first
/// appearance order. Two different prompts sharing a key is a hard error.
pub fn export_requests(
    docs: &[CaseDocument],
    set: &PromptTemplateSet,
    include_global: bool,
    include_whole_case: bool,
) -> Result<Vec<EmbeddingRequest>> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out: Vec<EmbeddingRequest> = Vec::new();
    let mut push = |r: EmbeddingRequest, out: &mut Vec<EmbeddingRequest>| -> Result<()> {
        match seen.get(&r.key) {
            Some(&i) if out[i].prompt != r.prompt => Err(Error::KeyCollision { key: r.key }),
            Some(_) => Ok(()),
            None => {
                seen.insert(r.key.clone(), out.len());
                out.push(r);
                Ok(())
            }
        }
    };
    for doc in docs {
        let (fact, issue) = crate::tacg::build_case_pair(doc, include_global)?;
        for (g, text) in [(&fact, &doc.fact_text), (&issue, &doc.issue_text)] {
            let reqs = graph_requests(g, text, set)?;
            for r in reqs.nodes.into_iter().chain(reqs.edges.into_iter().flatten()) {
                push(r, &mut out)?;
            }
        }
        if include_whole_case {
            push(
                EmbeddingRequest::new(PromptRole::WholeCase, render_whole_case_prompt(doc)),
                &mut out,
            )?;
        }
    }
    Ok(out)
}

/// A case graph together with its feature matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturedGraph {
    pub graph: CaseGraph,
    /// `num_nodes × dim`
    pub node_features: Tensor,
    /// `num_edges × dim`
    pub edge_features: Tensor,
}

impl FeaturedGraph {
    pub fn dim(&self) -> usize {
        self.node_features.cols()
    }

    /// Checks shapes, finiteness and the global-link reuse rule.
    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        if self.node_features.rows() != g.num_nodes() || self.edge_features.rows() != g.num_edges() {
            return Err(Error::op(
                "featured_graph",
                format!(
                    "feature rows ({}, {}) do not match graph ({}, {})",
                    self.node_features.rows(),
                    self.edge_features.rows(),
                    g.num_nodes(),
                    g.num_edges()
                ),
            ));
        }
        if !self.node_features.is_finite() || !self.edge_features.is_finite() {
            return Err(Error::NonFinite { op: "featured_graph" });
        }
        for e in g.edges.iter().filter(|e| e.kind == EdgeKind::GlobalLink) {
            let ent = if g.nodes[e.src].kind == NodeKind::Entity { e.src } else { e.dst };
            if self.edge_features.row(e.id) != self.node_features.row(ent) {
                return Err(Error::op("featured_graph", format!("global link {} does not reuse node {ent}", e.id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeaturedCasePair {
    pub case_id: String,
    pub fact: FeaturedGraph,
    pub issue: FeaturedGraph,
}

impl FeaturedCasePair {
    pub fn dim(&self) -> usize {
        self.fact.dim()
    }

    pub fn graphs(&self) -> [&FeaturedGraph; 2] {
        [&self.fact, &self.issue]
    }
}

fn featurize_graph(
    graph: CaseGraph,
    section_text: &str,
    provider: &dyn EmbeddingProvider,
    set: &PromptTemplateSet,
    missing: &mut Vec<String>,
) -> Result<FeaturedGraph> {
    let dim = provider.dim();
    let reqs = graph_requests(&graph, section_text, set)?;
    let mut lookup = |r: &EmbeddingRequest| -> Vec<f64> {
        match provider.embed(r) {
            Some(v) => v,
            None => {
                if !missing.contains(&r.key) {
                    missing.push(r.key.clone());
                }
                vec![0.0; dim]
            }
        }
    };
    let node_rows: Vec<Vec<f64>> = reqs.nodes.iter().map(&mut lookup).collect();
    let mut edge_rows = Vec::with_capacity(graph.num_edges());
    for (e, req) in graph.edges.iter().zip(&reqs.edges) {
        edge_rows.push(match req {
            Some(r) => lookup(r),
            None => {
                let ent = if graph.nodes[e.src].kind == NodeKind::Entity { e.src } else { e.dst };
                node_rows[ent].clone()
            }
        });
    }
    Ok(FeaturedGraph {
        node_features: Tensor::from_rows(&node_rows, dim)?,
        edge_features: Tensor::from_rows(&edge_rows, dim)?,
        graph,
    })
}

/// Attaches features to a document's fact and issue graphs.
pub fn attach_features(
    doc: &CaseDocument,
    fact: CaseGraph,
    issue: CaseGraph,
    provider: &dyn EmbeddingProvider,
    set: &PromptTemplateSet,
) -> Result<FeaturedCasePair> {
    let mut missing = Vec::new();
    let fact = featurize_graph(fact, &doc.fact_text, provider, set, &mut missing)?;
    let issue = featurize_graph(issue, &doc.issue_text, provider, set, &mut missing)?;
    if !missing.is_empty() {
        return Err(Error::MissingKeys {
            count: missing.len(),
            sample: missing.into_iter().take(10).collect(),
        });
    }
    let pair = FeaturedCasePair {
        case_id: doc.case_id.clone(),
        fact,
        issue,
    };
    for g in pair.graphs() {
        g.validate()?;
    }
    Ok(pair)
}

/// Builds both graphs of `doc` and attaches features.
pub fn featurize_document(
    doc: &CaseDocument,
    include_global: bool,
    provider: &dyn EmbeddingProvider,
    set: &PromptTemplateSet,
) -> Result<FeaturedCasePair> {
    let (fact, issue) = crate::tacg::build_case_pair(doc, include_global)?;
    attach_features(doc, fact, issue, provider, set)
}
