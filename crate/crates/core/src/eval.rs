//! Retrieval metrics at a cutoff, two-stage reranking and run/qrels files.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexical::{rank_order, Scored};

/// Relevance judgments: query id to relevant candidate ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    pub map: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn insert(&mut self, query: impl Into<String>, candidate: impl Into<String>) {
        self.map.entry(query.into()).or_default().insert(candidate.into());
    }

    pub fn relevant(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.map.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Every query has a relevant id and every relevant id is in `pool`.
    pub fn validate(&self, pool: &HashSet<&str>) -> Result<()> {
        for (q, rel) in &self.map {
            if rel.is_empty() {
                return Err(Error::Config(format!("query `{q}` has no relevant candidates")));
            }
            if let Some(c) = rel.iter().find(|c| !pool.contains(c.as_str())) {
                return Err(Error::Config(format!("relevant id `{c}` of query `{q}` is not in the pool")));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut q = Qrels::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => {
                    q.insert(a.trim(), b.trim())
                }
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        msg: "expected `query_id<TAB>candidate_id`".into(),
                    })
                }
            }
        }
        Ok(q)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (q, rel) in &self.map {
            for c in rel {
                let _ = writeln!(s, "{q}\t{c}");
            }
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Ranked candidates per query, best first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRanking {
    pub map: BTreeMap<String, Vec<Scored>>,
}

impl RunRanking {
    /// Sorts `scored` by score descending then id ascending and stores it.
    pub fn insert_scored(&mut self, query: impl Into<String>, mut scored: Vec<Scored>) {
        scored.sort_by(rank_order);
        self.map.insert(query.into(), scored);
    }

    pub fn ids(&self, query: &str) -> Option<Vec<&str>> {
        self.map.get(query).map(|v| v.iter().map(|s| s.id.as_str()).collect())
    }

    pub fn validate(&self) -> Result<()> {
        for (q, list) in &self.map {
            let mut seen = HashSet::new();
            for s in list {
                if s.id == *q {
                    return Err(Error::Config(format!("query `{q}` appears in its own ranking")));
                }
                if !seen.insert(s.id.as_str()) {
                    return Err(Error::Config(format!("duplicate id `{}` in ranking of `{q}`", s.id)));
                }
            }
        }
        Ok(())
    }

    pub fn truncate(&mut self, k: usize) {
        for list in self.map.values_mut() {
            list.truncate(k);
        }
    }

    /// Tab-separated `query, candidate, rank, score` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (q, list) in &self.map {
            for (r, c) in list.iter().enumerate() {
                let _ = writeln!(s, "{q}\t{}\t{}\t{}", c.id, r + 1, c.score);
            }
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows: BTreeMap<String, Vec<(usize, Scored)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad("expected `query<TAB>candidate<TAB>rank<TAB>score`"));
            }
            let rank: usize = f[2].parse().map_err(|_| bad("bad rank"))?;
            let score: f64 = f[3].parse().map_err(|_| bad("bad score"))?;
            rows.entry(f[0].to_string()).or_default().push((
                rank,
                Scored {
                    id: f[1].to_string(),
                    score,
                },
            ));
        }
        let mut run = RunRanking::default();
        for (q, mut list) in rows {
            list.sort_by_key(|(r, _)| *r);
            run.map.insert(q, list.into_iter().map(|(_, s)| s).collect());
        }
        Ok(run)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroF1Mode {
    /// Mean of per-query F1.
    #[default]
    PerQuery,
    /// F1 of the mean precision and mean recall.
    OfMeans,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapNorm {
    /// Divide by `min(|relevant|, K)`.
    #[default]
    MinRelevantK,
    /// Divide by the number of relevant hits in the top K.
    Hits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdcgMode {
    /// Ideal reordering of the retrieved top K.
    #[default]
    RetrievedIdeal,
    /// Ideal ranking of all relevant cases, truncated to K.
    AllRelevant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricOptions {
    pub macro_f1: MacroF1Mode,
    pub map_norm: MapNorm,
    pub idcg: IdcgMode,
}

/// The seven metrics as fractions in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub mrr: f64,
    pub map: f64,
    pub ndcg: f64,
}

impl MetricSet {
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.precision,
            self.recall,
            self.micro_f1,
            self.macro_f1,
            self.mrr,
            self.map,
            self.ndcg,
        ]
    }

    /// Percentages rounded to one decimal.
    pub fn percentages(&self) -> MetricSet {
        let p = |x: f64| (x * 1000.0).round() / 10.0;
        MetricSet {
            precision: p(self.precision),
            recall: p(self.recall),
            micro_f1: p(self.micro_f1),
            macro_f1: p(self.macro_f1),
            mrr: p(self.mrr),
            map: p(self.map),
            ndcg: p(self.ndcg),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub true_positives: usize,
    pub relevant: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub reciprocal_rank: f64,
    pub average_precision: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub k: usize,
    pub metrics: MetricSet,
    pub per_query: Vec<QueryMetrics>,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn dcg(gains: impl Iterator<Item = bool>) -> f64 {
    gains
        .enumerate()
        .filter(|(_, g)| *g)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum()
}

fn query_metrics(qid: &str, ranked: &[&str], rel: &BTreeSet<String>, k: usize, opts: &MetricOptions) -> QueryMetrics {
    let top = &ranked[..ranked.len().min(k)];
    let hits: Vec<bool> = top.iter().map(|c| rel.contains(*c)).collect();
    let tp = hits.iter().filter(|h| **h).count();
    let precision = tp as f64 / k as f64;
    let recall = tp as f64 / rel.len() as f64;
    let reciprocal_rank = hits.iter().position(|h| *h).map_or(0.0, |i| 1.0 / (i + 1) as f64);
    let mut seen = 0;
    let mut ap_sum = 0.0;
    for (i, &h) in hits.iter().enumerate() {
        if h {
            seen += 1;
            ap_sum += seen as f64 / (i + 1) as f64;
        }
    }
    let ap_den = match opts.map_norm {
        MapNorm::MinRelevantK => rel.len().min(k),
        MapNorm::Hits => tp,
    };
    let average_precision = if ap_den == 0 { 0.0 } else { ap_sum / ap_den as f64 };
    let ideal_hits = match opts.idcg {
        IdcgMode::RetrievedIdeal => tp,
        IdcgMode::AllRelevant => rel.len().min(k),
    };
    let idcg = dcg((0..ideal_hits).map(|_| true));
    let ndcg = if idcg == 0.0 { 0.0 } else { dcg(hits.iter().copied()) / idcg };
    QueryMetrics {
        query_id: qid.to_string(),
        true_positives: tp,
        relevant: rel.len(),
        precision,
        recall,
        f1: f1(precision, recall),
        reciprocal_rank,
        average_precision,
        ndcg,
    }
}

/// Computes the metrics at cutoff `k` for every query in `qrels`.
pub fn metrics_at_k(run: &RunRanking, qrels: &Qrels, k: usize, opts: &MetricOptions) -> Result<Evaluation> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if qrels.is_empty() {
        return Err(Error::Config("qrels contain no queries".into()));
    }
    let mut per_query = Vec::with_capacity(qrels.len());
    for (q, rel) in &qrels.map {
        let ranked = run.ids(q).ok_or_else(|| Error::MissingQuery(q.clone()))?;
        if rel.is_empty() {
            return Err(Error::Config(format!("query `{q}` has no relevant candidates")));
        }
        per_query.push(query_metrics(q, &ranked, rel, k, opts));
    }
    let n = per_query.len() as f64;
    let mean = |f: fn(&QueryMetrics) -> f64| per_query.iter().map(f).sum::<f64>() / n;
    let tp: usize = per_query.iter().map(|m| m.true_positives).sum();
    let relevant: usize = per_query.iter().map(|m| m.relevant).sum();
    let retrieved = k * per_query.len();
    let micro_f1 = f1(tp as f64 / retrieved as f64, tp as f64 / relevant as f64);
    let precision = mean(|m| m.precision);
    let recall = mean(|m| m.recall);
    let macro_f1 = match opts.macro_f1 {
        MacroF1Mode::PerQuery => mean(|m| m.f1),
        MacroF1Mode::OfMeans => f1(precision, recall),
    };
    Ok(Evaluation {
        k,
        metrics: MetricSet {
            precision,
            recall,
            micro_f1,
            macro_f1,
            mrr: mean(|m| m.reciprocal_rank),
            map: mean(|m| m.average_precision),
            ndcg: mean(|m| m.ndcg),
        },
        per_query,
    })
}

/// Output of [`two_stage`].
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStageRun {
    pub run: RunRanking,
    /// Queries whose first-stage list was shorter than `k`.
    pub short_queries: Vec<String>,
}

/// Reranks each first-stage list by `rerank(query, candidate)` and keeps
/// the top `k`.
pub fn two_stage(
    stage1: &RunRanking,
    mut rerank: impl FnMut(&str, &str) -> Result<f64>,
    k: usize,
) -> Result<TwoStageRun> {
    let mut run = RunRanking::default();
    let mut short_queries = Vec::new();
    for (q, list) in &stage1.map {
        if list.len() < k {
            short_queries.push(q.clone());
        }
        let mut scored = Vec::with_capacity(list.len());
        for c in list {
            scored.push(Scored {
                id: c.id.clone(),
                score: rerank(q, &c.id)?,
            });
        }
        run.insert_scored(q.clone(), scored);
    }
    run.truncate(k);
    Ok(TwoStageRun { run, short_queries })
}

/// Machine-readable evaluation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub k: usize,
    /// Percentages with one decimal.
    pub metrics: MetricSet,
    pub per_query: Vec<QueryMetrics>,
    pub rankings: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub flagged_queries: Vec<String>,
}

impl Report {
    pub fn new(eval: &Evaluation, run: &RunRanking, flagged_queries: Vec<String>) -> Self {
        Report {
            k: eval.k,
            metrics: eval.metrics.percentages(),
            per_query: eval.per_query.clone(),
            rankings: run
                .map
                .iter()
                .map(|(q, l)| (q.clone(), l.iter().take(eval.k).map(|s| s.id.clone()).collect()))
                .collect(),
            flagged_queries,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::op("report", e.to_string()))
    }

    pub fn summary_line(&self) -> String {
        let m = &self.metrics;
        format!(
            "P@{k}={:.1} R@{k}={:.1} MiF1={:.1} MaF1={:.1} MRR@{k}={:.1} MAP@{k}={:.1} NDCG@{k}={:.1}",
            m.precision,
            m.recall,
            m.micro_f1,
            m.macro_f1,
            m.mrr,
            m.map,
            m.ndcg,
            k = self.k
        )
    }
}
