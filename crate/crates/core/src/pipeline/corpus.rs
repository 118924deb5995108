use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{derive_seed, RunConfig};
use crate::augment::retain_relation_edges;
use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::features::{
    featurize_document, load_embeddings, EmbeddingProvider, FeaturedCasePair, PromptTemplateSet, StubEncoder,
};
use crate::tacg::{validate_corpus, CaseDocument};

/// Validated case documents with lookup by id.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub docs: Vec<CaseDocument>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(docs: Vec<CaseDocument>) -> Result<Self> {
        validate_corpus(&docs)?;
        let index = docs.iter().enumerate().map(|(i, d)| (d.case_id.clone(), i)).collect();
        Ok(Dataset { docs, index })
    }

    pub fn get(&self, id: &str) -> Option<&CaseDocument> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut docs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: CaseDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            docs.push(doc);
        }
        Self::new(docs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for d in &self.docs {
            serde_json::to_writer(&mut out, d).map_err(|e| Error::op("corpus", e.to_string()))?;
            out.push(b'\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    /// Documents that are not queries in any of `qrels`, in corpus order.
    pub fn candidate_pool(&self, qrels: &[&Qrels]) -> Vec<String> {
        let queries: HashSet<&str> = qrels.iter().flat_map(|q| q.queries()).collect();
        self.docs
            .iter()
            .map(|d| d.case_id.as_str())
            .filter(|id| !queries.contains(id))
            .map(str::to_string)
            .collect()
    }

    /// `(id, fact + issue text)` pairs for the given ids.
    pub fn lexical_texts<'a>(&'a self, ids: &'a [String]) -> Result<Vec<(String, String)>> {
        ids.iter()
            .map(|id| {
                self.get(id)
                    .map(|d| (id.clone(), d.lexical_text()))
                    .ok_or_else(|| Error::UnknownDoc(id.clone()))
            })
            .collect()
    }
}

/// Featured case pairs keyed by case id.
#[derive(Clone, Debug, Default)]
pub struct FeatureStore {
    pub dim: usize,
    pairs: HashMap<String, FeaturedCasePair>,
}

impl FeatureStore {
    pub fn get(&self, id: &str) -> Result<&FeaturedCasePair> {
        self.pairs.get(id).ok_or_else(|| Error::UnknownDoc(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn insert(&mut self, pair: FeaturedCasePair) {
        self.pairs.insert(pair.case_id.clone(), pair);
    }
}

/// Keeps each relation edge with probability `keep`, seeded per case.
pub fn prune_pair(pair: &FeaturedCasePair, keep: f64, seed: u64) -> FeaturedCasePair {
    if keep >= 1.0 {
        return pair.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["edge-keep", &pair.case_id]));
    let mut prune = |g: &crate::features::FeaturedGraph| {
        let mask: Vec<bool> = (0..g.graph.relation_edge_count()).map(|_| rng.gen::<f64>() < keep).collect();
        retain_relation_edges(g, &mask)
    };
    let fact = prune(&pair.fact);
    let issue = prune(&pair.issue);
    FeaturedCasePair {
        case_id: pair.case_id.clone(),
        fact,
        issue,
    }
}

/// The configured embedding source: the embedding file when set, else the
/// hashing encoder at the model's input width.
pub fn embedding_provider(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>> {
    match &cfg.paths.embeddings {
        Some(p) => {
            let map = load_embeddings(&cfg.paths.resolve(p))?;
            Ok(Box::new(map))
        }
        None => Ok(Box::new(StubEncoder::new(cfg.model.in_dim, cfg.features.encoder_seed)?)),
    }
}

/// Builds and featurises graphs for `docs`, applying static edge pruning.
pub fn featurize_corpus(docs: &[CaseDocument], cfg: &RunConfig, provider: &dyn EmbeddingProvider) -> Result<FeatureStore> {
    if provider.dim() != cfg.model.in_dim {
        return Err(Error::DimMismatch {
            expected: cfg.model.in_dim,
            found: provider.dim(),
        });
    }
    let set = PromptTemplateSet::get(cfg.features.template);
    let pairs: Vec<FeaturedCasePair> = docs
        .par_iter()
        .map(|d| {
            let p = featurize_document(d, cfg.features.include_global, provider, &set)?;
            Ok(prune_pair(&p, cfg.features.edge_keep, cfg.seed))
        })
        .collect::<Result<_>>()?;
    let mut store = FeatureStore {
        dim: provider.dim(),
        pairs: HashMap::with_capacity(pairs.len()),
    };
    for p in pairs {
        store.insert(p);
    }
    Ok(store)
}
