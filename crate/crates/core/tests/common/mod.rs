//! Independent reference implementations used as test oracles. Everything
//! here is written with plain loops over `Vec<f64>` and shares no code with
//! the library's tensor kernels.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use legalgraph::features::{featurize_document, FeaturedCasePair, PromptTemplateSet, StubEncoder, TemplateId};
use legalgraph::model::{EugatParams, HeadParams};
use legalgraph::ndiff::Tensor;
use legalgraph::tacg::{CaseDocument, RelationTriplet};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn from_mat(m: &Mat, cols: usize) -> Tensor {
    Tensor::from_rows(m, cols).unwrap()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// `W · x` for a row-major `W` of shape `out × in`.
fn apply(w: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| (0..w.cols()).map(|j| w.get(i, j) * x[j]).sum())
        .collect()
}

fn att(a: &Tensor, parts: &[&[f64]]) -> f64 {
    let mut s = 0.0;
    let mut k = 0;
    for p in parts {
        for &x in *p {
            s += a.get(k, 0) * x;
            k += 1;
        }
    }
    s
}

/// One edge-updated attention layer written straight from its defining
/// equations. `edges[e] = (src, dst)`.
pub fn eugat_oracle(
    hv: &Mat,
    he: &Mat,
    edges: &[(usize, usize)],
    heads: &[HeadParams],
    slope: f64,
    update_edges: bool,
) -> (Mat, Mat) {
    let n = hv.len();
    let d = hv.first().map_or(0, Vec::len);
    if edges.is_empty() {
        return (hv.clone(), he.clone());
    }
    let k = heads.len() as f64;
    let mut node_out = hv.clone();
    let mut edge_out = he.clone();
    for h in heads {
        let p: Mat = hv.iter().map(|x| apply(&h.w_node, x)).collect();
        let q: Mat = he.iter().map(|x| apply(&h.w_edge, x)).collect();
        for v in 0..n {
            let incoming: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].1 == v).collect();
            if incoming.is_empty() {
                continue;
            }
            let scores: Vec<f64> = incoming
                .iter()
                .map(|&e| leaky(att(&h.att_node, &[&p[v], &p[edges[e].0], &q[e]]), slope))
                .collect();
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            for (i, &e) in incoming.iter().enumerate() {
                let alpha = (scores[i] - m).exp() / z;
                for c in 0..d {
                    node_out[v][c] += alpha * (p[edges[e].0][c] + q[e][c]) / k;
                }
            }
        }
        if update_edges {
            for (e, &(u, v)) in edges.iter().enumerate() {
                let s = leaky(att(&h.att_edge, &[&p[v], &q[e], &p[u]]), slope);
                for c in 0..d {
                    edge_out[e][c] += s / k;
                }
            }
        }
    }
    (node_out, edge_out)
}

/// Plain attention without edge terms; uses the first `2d` entries of the
/// node attention vector.
pub fn gat_oracle(hv: &Mat, edges: &[(usize, usize)], heads: &[HeadParams], slope: f64) -> Mat {
    let n = hv.len();
    let d = hv.first().map_or(0, Vec::len);
    let k = heads.len() as f64;
    let mut out = hv.clone();
    for h in heads {
        let p: Mat = hv.iter().map(|x| apply(&h.w_node, x)).collect();
        for v in 0..n {
            let incoming: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].1 == v).collect();
            if incoming.is_empty() {
                continue;
            }
            let scores: Vec<f64> = incoming
                .iter()
                .map(|&e| leaky(att(&h.att_node, &[&p[v], &p[edges[e].0]]), slope))
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for (i, &e) in incoming.iter().enumerate() {
                for c in 0..d {
                    out[v][c] += scores[i].exp() / z * p[edges[e].0][c] / k;
                }
            }
        }
    }
    out
}

/// Symmetric-normalised convolution with self weight `1/deg`, where
/// `deg = in-degree + 1`.
pub fn gcn_oracle(hv: &Mat, edges: &[(usize, usize)], heads: &[HeadParams]) -> Mat {
    let n = hv.len();
    let d = hv.first().map_or(0, Vec::len);
    let k = heads.len() as f64;
    let mut deg = vec![1.0; n];
    for &(_, v) in edges {
        deg[v] += 1.0;
    }
    let mut out = hv.clone();
    for h in heads {
        let p: Mat = hv.iter().map(|x| apply(&h.w_node, x)).collect();
        for v in 0..n {
            for c in 0..d {
                let mut a = p[v][c] / deg[v];
                for &(u, w) in edges {
                    if w == v {
                        a += p[u][c] / (deg[u] * deg[v]).sqrt();
                    }
                }
                out[v][c] += a / k;
            }
        }
    }
    out
}

/// Per-query metrics computed by brute force from their textbook
/// definitions, with the ideal DCG taken over the retrieved relevant count.
#[derive(Clone, Debug)]
pub struct OracleMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rr: f64,
    pub ap: f64,
    pub ndcg: f64,
    pub ndcg_all: f64,
}

pub fn oracle_query(ranked: &[String], rel: &BTreeSet<String>, k: usize) -> OracleMetrics {
    let top: Vec<&String> = ranked.iter().take(k).collect();
    let is_rel = |r: usize| rel.contains(top[r]);
    let tp = (0..top.len()).filter(|&r| is_rel(r)).count() as f64;
    let precision = tp / k as f64;
    let recall = tp / rel.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let rr = (0..top.len()).find(|&r| is_rel(r)).map_or(0.0, |r| 1.0 / (r as f64 + 1.0));
    // Precision at rank r recomputed from scratch for every hit.
    let mut ap = 0.0;
    for r in 0..top.len() {
        if is_rel(r) {
            let hits_to_r = (0..=r).filter(|&i| is_rel(i)).count() as f64;
            ap += hits_to_r / (r as f64 + 1.0);
        }
    }
    ap /= rel.len().min(k) as f64;
    let dcg: f64 = (0..top.len())
        .filter(|&r| is_rel(r))
        .map(|r| 1.0 / (r as f64 + 2.0).log2())
        .sum();
    let ideal = |m: usize| -> f64 { (1..=m).map(|i| 1.0 / (i as f64 + 1.0).log2()).sum() };
    let idcg = ideal(tp as usize);
    let idcg_all = ideal(rel.len().min(k));
    OracleMetrics {
        precision,
        recall,
        f1,
        rr,
        ap,
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
        ndcg_all: if idcg_all > 0.0 { dcg / idcg_all } else { 0.0 },
    }
}

/// BM25 from raw token lists, one query token at a time.
pub fn bm25_oracle(docs: &[Vec<String>], query: &[String], doc: usize, k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let len = docs[doc].len() as f64;
    let mut s = 0.0;
    for t in query {
        let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
        let tf = docs[doc].iter().filter(|x| *x == t).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avgdl));
    }
    s
}

/// Contrastive loss from plain similarity values: `numerator` holds the
/// positive (and augmented positive) similarities, `others` the negatives.
pub fn gcl_oracle(numerator: &[f64], others: &[f64], tau: f64) -> f64 {
    let num: f64 = numerator.iter().map(|s| (s / tau).exp()).sum();
    let den: f64 = num + others.iter().map(|s| (s / tau).exp()).sum::<f64>();
    -(num / den).ln()
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (nu * nv)
}

pub fn doc(id: &str, facts: &[(&str, &str, &str)], issues: &[(&str, &str, &str)]) -> CaseDocument {
    let trip = |xs: &[(&str, &str, &str)]| -> Vec<RelationTriplet> {
        xs.iter().map(|(h, r, t)| RelationTriplet::new(*h, *r, *t)).collect()
    };
    let text = |xs: &[(&str, &str, &str)]| -> String {
        xs.iter().map(|(h, r, t)| format!("{h} {r} {t}.")).collect::<Vec<_>>().join(" ")
    };
    CaseDocument {
        case_id: id.into(),
        fact_text: text(facts),
        issue_text: text(issues),
        fact_triplets: trip(facts),
        issue_triplets: trip(issues),
    }
}

/// A small case whose fact graph has four entities and whose issue graph
/// has two; with the global node both stay within eight nodes.
pub fn small_doc() -> CaseDocument {
    doc(
        "small",
        &[
            ("the tenant", "signed", "the lease"),
            ("the landlord", "drafted", "the lease"),
            ("the tenant", "paid", "the deposit"),
        ],
        &[("the deposit", "was withheld by", "the landlord")],
    )
}

pub fn featured(doc: &CaseDocument, dim: usize, include_global: bool) -> FeaturedCasePair {
    let enc = StubEncoder::new(dim, 7).unwrap();
    featurize_document(doc, include_global, &enc, &PromptTemplateSet::get(TemplateId::P0)).unwrap()
}

pub fn relation_edges(pair_graph: &legalgraph::tacg::CaseGraph) -> Vec<(usize, usize)> {
    pair_graph.edges.iter().map(|e| (e.src, e.dst)).collect()
}

/// Counts per key, for frequency checks.
pub fn histogram<K: std::hash::Hash + Eq>(xs: impl IntoIterator<Item = K>) -> HashMap<K, usize> {
    let mut h = HashMap::new();
    for x in xs {
        *h.entry(x).or_insert(0) += 1;
    }
    h
}

/// Two-sided exact binomial test: returns true when `k` successes in `n`
/// trials are consistent with rate `p` at significance `alpha`.
pub fn binomial_consistent(k: u64, n: u64, p: f64, alpha: f64) -> bool {
    if p == 0.0 {
        return k == 0;
    }
    if p == 1.0 {
        return k == n;
    }
    let mut lnf = vec![0.0; n as usize + 1];
    for i in 1..=n as usize {
        lnf[i] = lnf[i - 1] + (i as f64).ln();
    }
    let pmf = |i: u64| -> f64 {
        (lnf[n as usize] - lnf[i as usize] - lnf[(n - i) as usize] + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln())
            .exp()
    };
    let pk = pmf(k);
    // Sum of probabilities of outcomes no more likely than the observed one.
    let pval: f64 = (0..=n).map(pmf).filter(|&q| q <= pk * (1.0 + 1e-9)).sum();
    pval >= alpha
}

pub fn random_params(cfg: &legalgraph::model::ModelConfig, seed: u64) -> EugatParams {
    EugatParams::init(cfg, seed).unwrap()
}

/// Runs the end-to-end gradient check of the contrastive loss over case
/// representations: 2 layers, 2 heads, `d = 4`, graphs of at most 8 nodes.
pub fn end_to_end_gradcheck(
    gnn: legalgraph::model::GnnKind,
    aug_mode: legalgraph::objective::AugMode,
) -> legalgraph::ndiff::GradCheckReport {
    use legalgraph::augment::edge_drop;
    use legalgraph::model::{case_representation, BoundParams, ModelConfig};
    use legalgraph::ndiff::grad_check;
    use legalgraph::objective::{gcl_loss, AugMode, GclTerms, LossConfig};
    use rand::SeedableRng;

    let cfg = ModelConfig {
        layers: 2,
        heads: 2,
        gnn_kind: gnn,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    }
    .with_dim(4);
    let query = featured(&small_doc(), 4, true);
    let positive = featured(
        &doc(
            "pos",
            &[("the tenant", "signed", "the lease"), ("the tenant", "owes", "rent")],
            &[("the landlord", "kept", "the deposit")],
        ),
        4,
        true,
    );
    let easy = featured(
        &doc("easy", &[("a driver", "hit", "a cyclist")], &[("the driver", "denies", "negligence")]),
        4,
        true,
    );
    let hard = featured(
        &doc(
            "hard",
            &[("the tenant", "left", "the flat"), ("the flat", "needed", "repairs")],
            &[("the tenant", "disputes", "the repairs")],
        ),
        4,
        true,
    );
    for p in [&query, &positive, &easy, &hard] {
        for g in p.graphs() {
            assert!(g.graph.num_nodes() <= 8);
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let aug = edge_drop(&positive, 0.5, &mut rng).unwrap();
    let loss_cfg = LossConfig {
        tau: 0.5,
        aug_mode,
        ..LossConfig::default()
    };
    let params = random_params(&cfg, 11);
    let tensors: Vec<Tensor> = params.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
    grad_check(
        |tape, vars| {
            let bound = BoundParams::from_vars(&cfg, vars)?;
            let rep = |p: &FeaturedCasePair| case_representation(tape, p, &bound, &cfg, None);
            let terms = GclTerms {
                query: Some(rep(&query)?),
                positive: Some(rep(&positive)?),
                aug_positive: if aug_mode == AugMode::AugPos { Some(rep(&aug)?) } else { None },
                easy: vec![rep(&easy)?],
                aug_easy: Vec::new(),
                hard: vec![rep(&hard)?],
            };
            gcl_loss(tape, &terms, &loss_cfg)
        },
        &tensors,
        1e-6,
        1e-4,
    )
    .unwrap()
}

/// Runs one library layer of `cfg.gnn_kind` over `graph` with the given
/// inputs and returns `(nodes, edges)`.
pub fn run_layer(
    graph: &legalgraph::tacg::CaseGraph,
    hv: &Mat,
    he: &Mat,
    heads: &[HeadParams],
    cfg: &legalgraph::model::ModelConfig,
) -> (Mat, Mat) {
    use legalgraph::model::{gnn_layer, GraphIndex, LayerInput};
    let d = cfg.in_dim;
    let tape = legalgraph::ndiff::Tape::new();
    let params = EugatParams {
        layers: vec![heads.to_vec()],
    };
    let bound = params.bind(&tape, false);
    let input = LayerInput {
        nodes: tape.constant(from_mat(hv, d)),
        edges: tape.constant(Tensor::from_rows(he, d).unwrap()),
    };
    let out = gnn_layer(&tape, input, &GraphIndex::new(graph), &bound.layers[0], cfg, None).unwrap();
    let nodes = to_mat(&tape.value(out.nodes));
    let edges = to_mat(&tape.value(out.edges));
    (nodes, edges)
}

/// The 2-node, 1-edge instance at `d = 2`, `K = 1`: returns the largest
/// absolute deviation of the library layer from the equations expanded by
/// hand.
pub fn hand_instance_error() -> f64 {
    use legalgraph::model::ModelConfig;
    use legalgraph::tacg::build_case_graph;
    let graph = build_case_graph(&[RelationTriplet::new("a", "r", "b")], false).unwrap();
    let cfg = ModelConfig {
        layers: 1,
        heads: 1,
        leaky_slope: 0.2,
        ..ModelConfig::default()
    }
    .with_dim(2);
    let h0 = [0.5, -1.0];
    let h1 = [0.25, 2.0];
    let e = [1.0, 0.5];
    let head = HeadParams {
        w_node: Tensor::from_vec(2, 2, vec![0.1, 0.2, -0.3, 0.4]).unwrap(),
        w_edge: Tensor::from_vec(2, 2, vec![0.5, -0.1, 0.2, 0.3]).unwrap(),
        att_node: Tensor::column_vector(vec![0.3, -0.2, 0.1, 0.4, -0.5, 0.6]),
        att_edge: Tensor::column_vector(vec![-0.7, 0.2, 0.05, -0.3, 0.9, -0.1]),
    };
    let (nodes, edges) = run_layer(&graph, &vec![h0.to_vec(), h1.to_vec()], &vec![e.to_vec()], &[head], &cfg);

    // W_n h0 = (0.1·0.5 + 0.2·(−1), −0.3·0.5 + 0.4·(−1)) = (−0.15, −0.55)
    // W_n h1 = (0.1·0.25 + 0.2·2, −0.3·0.25 + 0.4·2) = (0.425, 0.725)
    // W_e e  = (0.5·1 − 0.1·0.5, 0.2·1 + 0.3·0.5) = (0.45, 0.35)
    let wn_h0 = [0.1 * 0.5 + -0.2, -0.3 * 0.5 + -0.4];
    let wn_h1 = [0.1 * 0.25 + 0.2 * 2.0, -0.3 * 0.25 + 0.4 * 2.0];
    let we_e = [0.5 * 1.0 - 0.1 * 0.5, 0.2 * 1.0 + 0.3 * 0.5];
    // Node b has one in-neighbour, so its attention weight is exactly 1 and
    // node a has none, so it passes through.
    let expect_h0 = h0;
    let expect_h1 = [h1[0] + wn_h0[0] + we_e[0], h1[1] + wn_h0[1] + we_e[1]];
    // Edge score reads [W_n h_dst ‖ W_e e ‖ W_n h_src].
    let raw = -0.7 * wn_h1[0] + 0.2 * wn_h1[1] + 0.05 * we_e[0] - 0.3 * we_e[1] + 0.9 * wn_h0[0] - 0.1 * wn_h0[1];
    let s = if raw > 0.0 { raw } else { 0.2 * raw };
    let expect_e = [e[0] + s, e[1] + s];

    let expected_nodes = vec![expect_h0.to_vec(), expect_h1.to_vec()];
    let expected_edges = vec![expect_e.to_vec()];
    max_abs_diff(&nodes, &expected_nodes).max(max_abs_diff(&edges, &expected_edges))
}

/// A random directed graph with `n` entity nodes and `m` relation edges,
/// optionally with the global node attached.
pub fn random_graph(n: usize, m: usize, include_global: bool, seed: u64) -> legalgraph::tacg::CaseGraph {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut trips: Vec<RelationTriplet> = (0..n.saturating_sub(1))
        .map(|i| RelationTriplet::new(format!("n{i}"), "r", format!("n{}", i + 1)))
        .collect();
    while trips.len() < m.max(1) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        trips.push(RelationTriplet::new(format!("n{a}"), format!("r{}", trips.len()), format!("n{b}")));
    }
    legalgraph::tacg::build_case_graph(&trips, include_global).unwrap()
}

pub fn random_mat(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Mat {
    use rand::Rng;
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Zero parameters must leave every layer kind, both readouts and the case
/// representation exactly at their inputs.
pub fn residual_identity_holds() -> bool {
    use legalgraph::model::{case_representation, GnnKind, ModelConfig, ReadoutKind};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let graph = random_graph(6, 9, true, 4);
    let hv = random_mat(graph.num_nodes(), 4, &mut rng);
    let he = random_mat(graph.num_edges(), 4, &mut rng);
    let pair = featured(&small_doc(), 4, true);
    let plain = featured(&small_doc(), 4, false);
    for gnn in [GnnKind::Eugat, GnnKind::Edgegat, GnnKind::Gat, GnnKind::Gcn] {
        let cfg = ModelConfig {
            gnn_kind: gnn,
            ..ModelConfig::default()
        }
        .with_dim(4);
        let zeros = EugatParams::zeros(&cfg);
        let (n, e) = run_layer(&graph, &hv, &he, &zeros.layers[0], &cfg);
        if n != hv || e != he {
            return false;
        }
        let tape = legalgraph::ndiff::Tape::new();
        let bound = zeros.bind(&tape, false);
        let h = case_representation(&tape, &pair, &bound, &cfg, None).unwrap();
        let g = |fg: &legalgraph::features::FeaturedGraph| {
            fg.node_features.row(fg.graph.global_node().unwrap()).to_vec()
        };
        let expect: Vec<f64> = g(&pair.fact).into_iter().chain(g(&pair.issue)).collect();
        if tape.value(h).data() != expect.as_slice() {
            return false;
        }
        let avg_cfg = ModelConfig {
            readout_kind: ReadoutKind::Average,
            ..cfg.clone()
        };
        let h = case_representation(&tape, &plain, &bound, &avg_cfg, None).unwrap();
        let mean = |fg: &legalgraph::features::FeaturedGraph| -> Vec<f64> {
            let t = &fg.node_features;
            (0..t.cols())
                .map(|c| (0..t.rows()).map(|r| t.get(r, c)).sum::<f64>() / t.rows() as f64)
                .collect()
        };
        let expect: Vec<f64> = mean(&plain.fact).into_iter().chain(mean(&plain.issue)).collect();
        if tape.value(h).data() != expect.as_slice() {
            return false;
        }
    }
    true
}

/// Evaluates the library loss on constant row vectors: the query `q` and one
/// vector per candidate slot.
pub fn library_loss(
    q: &[f64],
    pos: &[f64],
    aug_pos: Option<&[f64]>,
    easy: &[Vec<f64>],
    aug_easy: &[Vec<f64>],
    hard: &[Vec<f64>],
    cfg: &legalgraph::objective::LossConfig,
) -> legalgraph::Result<f64> {
    use legalgraph::objective::{gcl_loss, GclTerms};
    let tape = legalgraph::ndiff::Tape::new();
    let c = |v: &[f64]| tape.constant(Tensor::row_vector(v.to_vec()));
    let terms = GclTerms {
        query: Some(c(q)),
        positive: Some(c(pos)),
        aug_positive: aug_pos.map(c),
        easy: easy.iter().map(|v| c(v)).collect(),
        aug_easy: aug_easy.iter().map(|v| c(v)).collect(),
        hard: hard.iter().map(|v| c(v)).collect(),
    };
    let out = gcl_loss(&tape, &terms, cfg)?;
    let v = tape.value(out).item();
    Ok(v)
}

/// Largest deviation from the closed forms when every similarity is equal,
/// over a grid of easy and hard negative counts.
pub fn loss_symmetry_error() -> f64 {
    use legalgraph::objective::{AugMode, LossConfig};
    let v = vec![0.3, -0.2, 0.9];
    let mut worst: f64 = 0.0;
    for n in 0..5usize {
        for m in 0..5usize {
            let easy = vec![v.clone(); n];
            let hard = vec![v.clone(); m];
            for tau in [0.05, 0.1, 1.0] {
                let none = LossConfig {
                    tau,
                    aug_mode: AugMode::None,
                    ..LossConfig::default()
                };
                let got = library_loss(&v, &v, None, &easy, &[], &hard, &none).unwrap();
                let expect = -(1.0 / (1.0 + (n + m) as f64)).ln();
                worst = worst.max((got - expect).abs());
                let pos = LossConfig {
                    tau,
                    aug_mode: AugMode::AugPos,
                    ..LossConfig::default()
                };
                let got = library_loss(&v, &v, Some(&v), &easy, &[], &hard, &pos).unwrap();
                let expect = -(2.0 / (2.0 + (n + m) as f64)).ln();
                worst = worst.max((got - expect).abs());
            }
        }
    }
    worst
}

pub const BM25_FIXTURE: [(&str, &str); 5] = [
    ("d1", "The tenant paid the deposit and the landlord kept the deposit."),
    ("d2", "A driver struck a cyclist at the junction; the driver denied fault."),
    ("d3", "The landlord refused repairs and the tenant withheld rent."),
    ("d4", "The court considered whether the deposit was lawfully withheld."),
    ("d5", "Negligence requires a duty of care, a breach and resulting damage."),
];

pub const BM25_QUERIES: [&str; 4] = [
    "tenant deposit withheld landlord",
    "the driver the driver",
    "duty of care breach",
    "unrelated words entirely",
];

/// Largest deviation of the library's BM25 scores (both the per-document
/// and the postings path) from the direct formula on the 5-document
/// fixture.
pub fn bm25_fixture_error() -> f64 {
    use legalgraph::lexical::{tokenize, Bm25Index, DEFAULT_B, DEFAULT_K1};
    let index = Bm25Index::build(BM25_FIXTURE, DEFAULT_K1, DEFAULT_B).unwrap();
    let toks: Vec<Vec<String>> = BM25_FIXTURE.iter().map(|(_, t)| tokenize(t)).collect();
    let mut worst: f64 = 0.0;
    for q in BM25_QUERIES {
        let qt = tokenize(q);
        let all = index.score_all(q);
        for (i, (id, _)) in BM25_FIXTURE.iter().enumerate() {
            let expect = bm25_oracle(&toks, &qt, i, DEFAULT_K1, DEFAULT_B);
            worst = worst.max((index.score(q, id).unwrap() - expect).abs());
            worst = worst.max((all[i] - expect).abs());
        }
    }
    worst
}

/// Hard negatives by brute force: score every document, drop the query and
/// its relevant set, sort by score then id, keep `m`.
pub fn brute_force_hard(
    index: &legalgraph::lexical::Bm25Index,
    ids: &[&str],
    query_id: &str,
    query_text: &str,
    relevant: &[&str],
    m: usize,
) -> Vec<String> {
    let mut scored: Vec<(f64, &str)> = ids
        .iter()
        .filter(|id| **id != query_id && !relevant.contains(id))
        .map(|id| (index.score(query_text, id).unwrap(), *id))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    scored.into_iter().take(m).map(|(_, id)| id.to_string()).collect()
}

/// Hard mining on the fixture agrees with brute force for every query
/// document, relevant subset and list length.
pub fn hard_mining_matches() -> bool {
    use legalgraph::lexical::{Bm25Index, DEFAULT_B, DEFAULT_K1};
    use legalgraph::objective::mine_hard_negatives;
    use std::collections::HashSet;
    let index = Bm25Index::build(BM25_FIXTURE, DEFAULT_K1, DEFAULT_B).unwrap();
    let ids: Vec<&str> = BM25_FIXTURE.iter().map(|(id, _)| *id).collect();
    for (qid, text) in BM25_FIXTURE {
        for mask in 0u32..32 {
            let relevant: Vec<&str> = ids.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, id)| *id).collect();
            let rel_set: HashSet<&str> = relevant.iter().copied().collect();
            for m in 0..=5 {
                let got = mine_hard_negatives(qid, text, &rel_set, &index, m);
                let expect = brute_force_hard(&index, &ids, qid, text, &relevant, m);
                if got.ids != expect || got.short != (expect.len() < m) {
                    return false;
                }
            }
        }
    }
    true
}

/// Builds a run whose lists keep the given order.
pub fn run_from_lists(lists: &[(String, Vec<String>)]) -> legalgraph::eval::RunRanking {
    use legalgraph::lexical::Scored;
    let mut run = legalgraph::eval::RunRanking::default();
    for (q, ids) in lists {
        let scored = ids
            .iter()
            .enumerate()
            .map(|(i, id)| Scored {
                id: id.clone(),
                score: (ids.len() - i) as f64,
            })
            .collect();
        run.insert_scored(q.clone(), scored);
    }
    run
}

/// The single-query worked example: four relevant, hits at ranks 1 and 3.
pub fn worked_example() -> (legalgraph::eval::RunRanking, legalgraph::eval::Qrels) {
    let mut qrels = legalgraph::eval::Qrels::default();
    for c in ["a", "c", "x", "y"] {
        qrels.insert("q", c);
    }
    let list: Vec<String> = ["a", "b", "c", "d", "e", "f"].iter().map(|s| s.to_string()).collect();
    (run_from_lists(&[("q".into(), list)]), qrels)
}

pub fn worked_example_ok() -> bool {
    use legalgraph::eval::{metrics_at_k, MetricOptions};
    let (run, qrels) = worked_example();
    let m = metrics_at_k(&run, &qrels, 5, &MetricOptions::default()).unwrap().metrics;
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    close(m.precision, 0.4, 1e-12)
        && close(m.recall, 0.5, 1e-12)
        && close(m.mrr, 1.0, 1e-12)
        && close(m.map, (1.0 + 2.0 / 3.0) / 4.0, 1e-12)
        && close(m.map, 0.4167, 1e-4)
        && close(m.ndcg, 1.5 / (1.0 + 1.0 / 3f64.log2()), 1e-12)
        && close(m.ndcg, 0.9198, 1e-4)
}

/// A random instance: `nq` queries over a pool of `pool` ids, each with a
/// random relevant set and a random ranking of random length.
pub fn random_instance(
    seed: u64,
) -> (legalgraph::eval::RunRanking, legalgraph::eval::Qrels, Vec<(String, Vec<String>)>, usize) {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<String> = (0..rng.gen_range(3..15)).map(|i| format!("c{i}")).collect();
    let k = rng.gen_range(1..8);
    let nq = rng.gen_range(1..6);
    let mut qrels = legalgraph::eval::Qrels::default();
    let mut lists = Vec::new();
    for q in 0..nq {
        let qid = format!("q{q}");
        let nrel = rng.gen_range(1..=pool.len());
        for c in pool.choose_multiple(&mut rng, nrel) {
            qrels.insert(qid.clone(), c.clone());
        }
        let len = rng.gen_range(0..=pool.len());
        let ranked: Vec<String> = pool.choose_multiple(&mut rng, len).cloned().collect();
        lists.push((qid, ranked));
    }
    (run_from_lists(&lists), qrels, lists, k)
}

/// Largest deviation between library and brute-force metrics over one
/// random instance, both per query and aggregated.
pub fn random_instance_error(seed: u64) -> f64 {
    use legalgraph::eval::{metrics_at_k, IdcgMode, MetricOptions};
    let (run, qrels, lists, k) = random_instance(seed);
    let mut worst: f64 = 0.0;
    for idcg in [IdcgMode::RetrievedIdeal, IdcgMode::AllRelevant] {
        let opts = MetricOptions {
            idcg,
            ..MetricOptions::default()
        };
        let ev = metrics_at_k(&run, &qrels, k, &opts).unwrap();
        let oracle: Vec<OracleMetrics> = lists
            .iter()
            .map(|(q, ranked)| oracle_query(ranked, qrels.relevant(q).unwrap(), k))
            .collect();
        for (m, o) in ev.per_query.iter().zip(&oracle) {
            let ndcg = if idcg == IdcgMode::AllRelevant { o.ndcg_all } else { o.ndcg };
            for (a, b) in [
                (m.precision, o.precision),
                (m.recall, o.recall),
                (m.f1, o.f1),
                (m.reciprocal_rank, o.rr),
                (m.average_precision, o.ap),
                (m.ndcg, ndcg),
            ] {
                worst = worst.max((a - b).abs());
            }
        }
        let n = oracle.len() as f64;
        let mean = |f: &dyn Fn(&OracleMetrics) -> f64| oracle.iter().map(f).sum::<f64>() / n;
        let tp: f64 = oracle.iter().map(|o| o.precision * k as f64).sum();
        let rel: f64 = lists.iter().map(|(q, _)| qrels.relevant(q).unwrap().len() as f64).sum();
        let (mp, mr) = (tp / (k as f64 * n), tp / rel);
        let micro = if mp + mr > 0.0 { 2.0 * mp * mr / (mp + mr) } else { 0.0 };
        let m = &ev.metrics;
        for (a, b) in [
            (m.precision, mean(&|o| o.precision)),
            (m.recall, mean(&|o| o.recall)),
            (m.micro_f1, micro),
            (m.macro_f1, mean(&|o| o.f1)),
            (m.mrr, mean(&|o| o.rr)),
            (m.map, mean(&|o| o.ap)),
            (
                m.ndcg,
                mean(&|o| if idcg == IdcgMode::AllRelevant { o.ndcg_all } else { o.ndcg }),
            ),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// A featured pair whose feature matrices are all ones, so any zeroed
/// column reveals the mask that produced it.
pub fn ones_pair(dim: usize) -> FeaturedCasePair {
    let mut p = featured(&small_doc(), dim, true);
    for g in [&mut p.fact, &mut p.issue] {
        g.node_features = Tensor::filled(g.node_features.rows(), dim, 1.0);
        g.edge_features = Tensor::filled(g.edge_features.rows(), dim, 1.0);
    }
    p
}

/// Counts `(dropped, trials)` for edge dropping at rate `eps` over `seeds`.
pub fn edge_drop_counts(eps: f64, seeds: u64) -> (u64, u64) {
    use legalgraph::augment::edge_drop;
    use rand::SeedableRng;
    let pair = featured(&small_doc(), 4, true);
    let rel = (pair.fact.graph.relation_edge_count() + pair.issue.graph.relation_edge_count()) as u64;
    let mut dropped = 0;
    for s in 0..seeds {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
        let out = edge_drop(&pair, eps, &mut rng).unwrap();
        let kept = (out.fact.graph.relation_edge_count() + out.issue.graph.relation_edge_count()) as u64;
        dropped += rel - kept;
    }
    (dropped, rel * seeds)
}

/// Counts `(masked columns, trials)` for feature masking of `target` at
/// rate `p` over `seeds`.
pub fn mask_counts(target: legalgraph::augment::MaskTarget, p: f64, seeds: u64) -> (u64, u64) {
    use legalgraph::augment::{feature_mask, MaskTarget};
    use rand::SeedableRng;
    let dim = 8;
    let pair = ones_pair(dim);
    let mut masked = 0;
    for s in 0..seeds {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
        let out = feature_mask(&pair, target, p, &mut rng).unwrap();
        for g in out.graphs() {
            let t = match target {
                MaskTarget::Node => &g.node_features,
                MaskTarget::Edge => &g.edge_features,
            };
            masked += (0..dim).filter(|&c| t.get(0, c) == 0.0).count() as u64;
        }
    }
    (masked, 2 * dim as u64 * seeds)
}

/// Binomial tests at 99.9% over 500 seeds for every augmentation, plus the
/// exact identity at rate zero.
pub fn augmentation_ok() -> bool {
    use legalgraph::augment::{edge_drop, feature_mask, MaskTarget};
    use rand::SeedableRng;
    for eps in [0.1, 0.3, 0.5] {
        let (k, n) = edge_drop_counts(eps, 500);
        if !binomial_consistent(k, n, eps, 1e-3) {
            return false;
        }
    }
    for target in [MaskTarget::Node, MaskTarget::Edge] {
        for p in [0.1, 0.3, 0.5] {
            let (k, n) = mask_counts(target, p, 500);
            if !binomial_consistent(k, n, p, 1e-3) {
                return false;
            }
        }
    }
    let pair = featured(&small_doc(), 4, true);
    for s in 0..50 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
        if edge_drop(&pair, 0.0, &mut rng).unwrap() != pair {
            return false;
        }
        for target in [MaskTarget::Node, MaskTarget::Edge] {
            if feature_mask(&pair, target, 0.0, &mut rng).unwrap() != pair {
                return false;
            }
        }
    }
    true
}

/// A reduced configuration that trains in about a second.
pub fn small_config(seed: u64) -> legalgraph::pipeline::RunConfig {
    let mut cfg = legalgraph::pipeline::RunConfig::default();
    cfg.seed = seed;
    cfg.epochs = 3;
    cfg.model = cfg.model.clone().with_dim(16);
    cfg.synth.seed = seed;
    cfg.synth.num_candidates = 60;
    cfg.synth.num_train_queries = 20;
    cfg.synth.num_test_queries = 10;
    cfg.synth.num_topics = 12;
    cfg.synth.relevant_per_query = 3.0;
    cfg
}

/// Runs the command-line binary in `dir` with `args`, returning the exit
/// status and captured stderr.
pub fn cli(dir: &std::path::Path, args: &[&str]) -> (bool, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_legalgraph"))
        .arg("--dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Writes the reduced configuration for `seed` into `dir` and returns its
/// path.
pub fn write_small_config(dir: &std::path::Path, seed: u64) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, small_config(seed).to_toml().unwrap()).unwrap();
    p
}

/// synth, train, retrieve and evaluate through the binary; returns the
/// checkpoint and report bytes.
pub fn cli_full_run(dir: &std::path::Path, config: &std::path::Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let c = config.to_str().unwrap();
    for stage in ["synth", "train", "retrieve", "evaluate"] {
        let (ok, _, err) = cli(dir, &["--config", c, stage]);
        if !ok {
            return Err(format!("{stage}: {err}"));
        }
    }
    let cfg = small_config(0);
    let read = |p: &std::path::Path| std::fs::read(dir.join(p)).map_err(|e| e.to_string());
    Ok((read(&cfg.paths.checkpoint)?, read(&cfg.paths.report)?))
}

/// Two complete command-line runs with the same configuration produce
/// byte-identical checkpoints and reports.
pub fn cli_runs_identical() -> Result<bool, String> {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = write_small_config(root.path(), 9);
    let dir = root.path().join("out");
    let first = cli_full_run(&dir, &config)?;
    std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
    let second = cli_full_run(&dir, &config)?;
    Ok(first == second)
}
