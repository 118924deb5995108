use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{Dataset, FeatureStore};
use crate::error::{Error, Result};
use crate::eval::{two_stage, RunRanking};
use crate::features::FeaturedCasePair;
use crate::lexical::{Bm25Index, Scored};
use crate::model::{case_representation, EugatParams, ModelConfig};
use crate::ndiff::Tape;
use crate::objective::{similarity, SimilarityKind};

/// Case vectors in evaluation mode (no dropout), one per input pair.
pub fn encode_pairs(params: &EugatParams, model: &ModelConfig, pairs: &[&FeaturedCasePair]) -> Result<Vec<Vec<f64>>> {
    pairs
        .par_iter()
        .map(|p| {
            if p.dim() != model.in_dim {
                return Err(Error::DimMismatch {
                    expected: model.in_dim,
                    found: p.dim(),
                });
            }
            let tape = Tape::new();
            let bound = params.bind(&tape, false);
            let h = case_representation(&tape, p, &bound, model, None)?;
            let v = tape.value(h).data().to_vec();
            Ok(v)
        })
        .collect()
}

/// Encoded candidate pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedPool {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl EncodedPool {
    pub fn encode(params: &EugatParams, model: &ModelConfig, store: &FeatureStore, ids: &[String]) -> Result<Self> {
        let pairs: Vec<&FeaturedCasePair> = ids.iter().map(|id| store.get(id)).collect::<Result<_>>()?;
        Ok(EncodedPool {
            ids: ids.to_vec(),
            vectors: encode_pairs(params, model, &pairs)?,
        })
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|c| c == id)
    }
}

/// Sidecar holding pool encodings for one checkpoint and feature setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolCache {
    pub key: String,
    pub pool: EncodedPool,
}

impl PoolCache {
    pub fn sidecar_path(checkpoint: &Path) -> std::path::PathBuf {
        let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
        name.push(".pool.json");
        checkpoint.with_file_name(name)
    }

    /// Returns the cached pool when present and keyed by `key`.
    pub fn load_matching(path: &Path, key: &str) -> Option<EncodedPool> {
        let text = std::fs::read_to_string(path).ok()?;
        let cache: PoolCache = serde_json::from_str(&text).ok()?;
        (cache.key == key).then_some(cache.pool)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::op("pool_cache", e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn cosine_scores(query: &[f64], pool: &EncodedPool, allowed: Option<&HashSet<&str>>, qid: &str) -> Result<Vec<Scored>> {
    let mut out = Vec::with_capacity(pool.ids.len());
    for (id, v) in pool.ids.iter().zip(&pool.vectors) {
        if id == qid || allowed.is_some_and(|a| !a.contains(id.as_str())) {
            continue;
        }
        out.push(Scored {
            id: id.clone(),
            score: similarity(query, v, SimilarityKind::Cosine)?,
        });
    }
    Ok(out)
}

/// Ranks the whole pool by cosine similarity for each query.
pub fn rank_one_stage(queries: &[(String, Vec<f64>)], pool: &EncodedPool, k: usize) -> Result<RunRanking> {
    let lists: Vec<(String, Vec<Scored>)> = queries
        .par_iter()
        .map(|(q, v)| cosine_scores(v, pool, None, q).map(|s| (q.clone(), s)))
        .collect::<Result<_>>()?;
    let mut run = RunRanking::default();
    for (q, s) in lists {
        run.insert_scored(q, s);
    }
    run.truncate(k);
    Ok(run)
}

/// BM25 top-`k` for each query, excluding the query itself.
pub fn bm25_run(index: &Bm25Index, dataset: &Dataset, query_ids: &[String], k: usize) -> Result<RunRanking> {
    let mut run = RunRanking::default();
    for q in query_ids {
        let doc = dataset.get(q).ok_or_else(|| Error::UnknownDoc(q.clone()))?;
        let exclude = HashSet::from([q.as_str()]);
        run.map.insert(q.clone(), index.top_k(&doc.lexical_text(), k, &exclude));
    }
    Ok(run)
}

/// BM25 shortlist of `stage1_k`, reranked by cosine and cut to `k`.
/// Returns the run and the queries whose shortlist was shorter than `k`.
pub fn rank_two_stage(
    queries: &[(String, Vec<f64>)],
    pool: &EncodedPool,
    index: &Bm25Index,
    dataset: &Dataset,
    stage1_k: usize,
    k: usize,
) -> Result<(RunRanking, Vec<String>)> {
    let ids: Vec<String> = queries.iter().map(|(q, _)| q.clone()).collect();
    let stage1 = bm25_run(index, dataset, &ids, stage1_k)?;
    let qvec: std::collections::HashMap<&str, &Vec<f64>> = queries.iter().map(|(q, v)| (q.as_str(), v)).collect();
    let out = two_stage(
        &stage1,
        |q, c| {
            let pos = pool.position(c).ok_or_else(|| Error::UnknownDoc(c.to_string()))?;
            similarity(qvec[q], &pool.vectors[pos], SimilarityKind::Cosine)
        },
        k,
    )?;
    Ok((out.run, out.short_queries))
}
