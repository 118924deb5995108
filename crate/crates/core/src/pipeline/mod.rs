//! End-to-end orchestration: configuration, corpus handling, synthetic data,
//! training, indexing and retrieval.

mod config;
mod corpus;
mod retrieve;
mod synth;
mod train;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use config::{
    FeatureConfig, LexicalConfig, PathsConfig, RetrievalConfig, RunConfig, BATCH_GRID, LR_GRID,
};
pub use corpus::{embedding_provider, featurize_corpus, prune_pair, Dataset, FeatureStore};
pub use retrieve::{bm25_run, encode_pairs, rank_one_stage, rank_two_stage, EncodedPool, PoolCache};
pub use synth::{synth_generate, SyntheticCorpus, SyntheticSpec};
pub use train::{mine_all_hard, train, TrainInputs, TrainOutput, TrainStats};

use crate::error::{Error, Result};
use crate::eval::{metrics_at_k, Evaluation, Qrels, RunRanking};
use crate::lexical::Bm25Index;
use crate::model::EugatParams;

/// Deterministic sub-seed for a named purpose.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Worker cap from `LEXA_THREADS`; `None` means machine parallelism.
pub fn worker_count() -> Result<Option<usize>> {
    match std::env::var("LEXA_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("LEXA_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a pool sized by [`worker_count`].
pub fn with_workers<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count()? {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Seeded initial parameters for `cfg`.
pub fn init_params(cfg: &RunConfig) -> Result<EugatParams> {
    EugatParams::init(&cfg.model, derive_seed(cfg.seed, &["init"]))
}

pub fn evaluate_run(cfg: &RunConfig, run: &RunRanking, qrels: &Qrels) -> Result<Evaluation> {
    metrics_at_k(run, qrels, cfg.retrieval.k, &cfg.metrics)
}

/// A corpus with features and the lexical index, ready for training and
/// retrieval.
pub struct Prepared {
    pub dataset: Dataset,
    pub train_qrels: Qrels,
    pub test_qrels: Qrels,
    /// Candidate ids: every document that is not a query.
    pub pool: Vec<String>,
    pub store: FeatureStore,
    pub bm25: Bm25Index,
}

impl Prepared {
    pub fn new(cfg: &RunConfig, dataset: Dataset, train_qrels: Qrels, test_qrels: Qrels) -> Result<Self> {
        cfg.validate()?;
        let pool = dataset.candidate_pool(&[&train_qrels, &test_qrels]);
        let pool_set: HashSet<&str> = pool.iter().map(String::as_str).collect();
        train_qrels.validate(&pool_set)?;
        test_qrels.validate(&pool_set)?;
        let provider = embedding_provider(cfg)?;
        let store = featurize_corpus(&dataset.docs, cfg, provider.as_ref())?;
        let bm25 = Bm25Index::build(dataset.lexical_texts(&pool)?, cfg.lexical.k1, cfg.lexical.b)?;
        Ok(Prepared {
            dataset,
            train_qrels,
            test_qrels,
            pool,
            store,
            bm25,
        })
    }

    pub fn from_synthetic(cfg: &RunConfig) -> Result<Self> {
        let s = synth_generate(&cfg.synth)?;
        Self::new(cfg, Dataset::new(s.docs)?, s.train_qrels, s.test_qrels)
    }

    /// Trains from the seeded initialisation. With a validation fraction the
    /// best epoch by validation NDCG is returned.
    pub fn train(
        &self,
        cfg: &RunConfig,
        on_epoch: &mut dyn FnMut(usize, &EugatParams, f64) -> Result<()>,
    ) -> Result<TrainOutput> {
        let (train_q, val_q) = self.split_validation(cfg);
        let (hard, short) = mine_all_hard(&self.dataset, &self.bm25, &train_q, cfg.loss.n_hard)?;
        let inputs = TrainInputs {
            store: &self.store,
            pool: &self.pool,
            qrels: &train_q,
            hard: &hard,
        };
        let mut best: Option<(f64, usize, EugatParams)> = None;
        let mut val_scores = Vec::new();
        let mut hook = |epoch: usize, params: &EugatParams, loss: f64| -> Result<()> {
            if let Some(val) = &val_q {
                let pool = EncodedPool::encode(params, &cfg.model, &self.store, &self.pool)?;
                let run = self.retrieve(cfg, params, &pool, val)?.0;
                let ndcg = evaluate_run(cfg, &run, val)?.metrics.ndcg;
                val_scores.push(ndcg);
                if best.as_ref().is_none_or(|(b, _, _)| ndcg > *b) {
                    best = Some((ndcg, epoch, params.clone()));
                }
            }
            on_epoch(epoch, params, loss)
        };
        let mut out = train(cfg, &inputs, init_params(cfg)?, &mut hook)?;
        out.stats.short_hard = short;
        out.stats.validation_ndcg = val_scores;
        if let Some((_, epoch, params)) = best {
            out.stats.best_epoch = Some(epoch);
            out.params = params;
        }
        Ok(out)
    }

    fn split_validation(&self, cfg: &RunConfig) -> (Qrels, Option<Qrels>) {
        if cfg.validation_fraction <= 0.0 {
            return (self.train_qrels.clone(), None);
        }
        let mut ids: Vec<&str> = self.train_qrels.queries().collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["validation"])));
        let n_val = ((ids.len() as f64 * cfg.validation_fraction).ceil() as usize).min(ids.len().saturating_sub(1));
        let mut train_q = Qrels::default();
        let mut val_q = Qrels::default();
        for (i, q) in ids.iter().enumerate() {
            let target = if i < n_val { &mut val_q } else { &mut train_q };
            target.map.insert(q.to_string(), self.train_qrels.map[*q].clone());
        }
        (train_q, (!val_q.is_empty()).then_some(val_q))
    }

    pub fn encode_pool(&self, cfg: &RunConfig, params: &EugatParams) -> Result<EncodedPool> {
        EncodedPool::encode(params, &cfg.model, &self.store, &self.pool)
    }

    /// Ranks the pool for every query of `queries`, one- or two-stage per
    /// `cfg.retrieval`. Also returns queries with a short first stage.
    pub fn retrieve(
        &self,
        cfg: &RunConfig,
        params: &EugatParams,
        pool: &EncodedPool,
        queries: &Qrels,
    ) -> Result<(RunRanking, Vec<String>)> {
        let ids: Vec<String> = queries.queries().map(str::to_string).collect();
        let pairs = ids.iter().map(|q| self.store.get(q)).collect::<Result<Vec<_>>>()?;
        let vecs = encode_pairs(params, &cfg.model, &pairs)?;
        let qv: Vec<(String, Vec<f64>)> = ids.into_iter().zip(vecs).collect();
        let r = &cfg.retrieval;
        if r.two_stage {
            rank_two_stage(&qv, pool, &self.bm25, &self.dataset, r.stage1_k, r.k)
        } else {
            Ok((rank_one_stage(&qv, pool, r.k)?, Vec::new()))
        }
    }

    pub fn bm25_run(&self, cfg: &RunConfig, queries: &Qrels) -> Result<RunRanking> {
        let ids: Vec<String> = queries.queries().map(str::to_string).collect();
        bm25_run(&self.bm25, &self.dataset, &ids, cfg.retrieval.k)
    }

    /// Encodes the pool and evaluates `params` on the test queries.
    pub fn evaluate_params(&self, cfg: &RunConfig, params: &EugatParams) -> Result<Evaluation> {
        let pool = self.encode_pool(cfg, params)?;
        let (run, _) = self.retrieve(cfg, params, &pool, &self.test_qrels)?;
        evaluate_run(cfg, &run, &self.test_qrels)
    }
}
