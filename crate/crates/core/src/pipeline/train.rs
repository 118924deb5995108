use std::collections::{HashMap, HashSet};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Dataset, FeatureStore};
use super::{derive_seed, RunConfig};
use crate::augment::augment_view;
use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::features::FeaturedCasePair;
use crate::lexical::Bm25Index;
use crate::model::{adam_step, case_representation, AdamState, BoundParams, EugatParams};
use crate::ndiff::{Tape, Var};
use crate::objective::{gcl_loss, mine_hard_negatives, AugMode, GclTerms};

/// Everything the loop reads besides the configuration.
pub struct TrainInputs<'a> {
    pub store: &'a FeatureStore,
    /// Candidate ids negatives and positives are drawn from.
    pub pool: &'a [String],
    pub qrels: &'a Qrels,
    /// Mined hard negatives per training query, best first.
    pub hard: &'a HashMap<String, Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// Mean loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean loss per optimiser step.
    pub step_losses: Vec<f64>,
    /// Queries skipped at least once, with the reason.
    pub skipped: Vec<(String, String)>,
    /// Configured and mean effective easy-negative counts.
    pub configured_easy: usize,
    pub effective_easy: f64,
    /// Queries whose hard-negative list came up short.
    pub short_hard: Vec<String>,
    /// Validation NDCG per epoch when a validation split is configured.
    pub validation_ndcg: Vec<f64>,
    pub best_epoch: Option<usize>,
}

pub struct TrainOutput {
    pub params: EugatParams,
    pub stats: TrainStats,
}

/// Mines `m` hard negatives for every query of `qrels` over `index`.
pub fn mine_all_hard(
    dataset: &Dataset,
    index: &Bm25Index,
    qrels: &Qrels,
    m: usize,
) -> Result<(HashMap<String, Vec<String>>, Vec<String>)> {
    let mut out = HashMap::new();
    let mut short = Vec::new();
    for (q, rel) in &qrels.map {
        let doc = dataset.get(q).ok_or_else(|| Error::UnknownDoc(q.clone()))?;
        let rel: HashSet<&str> = rel.iter().map(String::as_str).collect();
        let h = mine_hard_negatives(q, &doc.lexical_text(), &rel, index, m);
        if h.short {
            short.push(q.clone());
        }
        out.insert(q.clone(), h.ids);
    }
    Ok((out, short))
}

struct Sample<'a> {
    qid: &'a str,
    relevant: HashSet<&'a str>,
    positive: &'a str,
    easy: Vec<&'a str>,
    hard: Vec<&'a str>,
}

struct Encoder<'t, 'a> {
    tape: &'t Tape,
    bound: &'t BoundParams,
    cfg: &'a RunConfig,
    store: &'a FeatureStore,
    dropout: ChaCha8Rng,
}

impl Encoder<'_, '_> {
    fn pair(&mut self, pair: &FeaturedCasePair) -> Result<Var> {
        case_representation(self.tape, pair, self.bound, &self.cfg.model, Some(&mut self.dropout))
    }

    fn id(&mut self, id: &str) -> Result<Var> {
        let pair = self.store.get(id)?;
        self.pair(pair)
    }

    fn augmented(&mut self, id: &str, rng: &mut ChaCha8Rng) -> Result<Var> {
        let view = augment_view(self.store.get(id)?, &self.cfg.augment, rng)?;
        self.pair(&view)
    }
}

/// Contrastive training with Adam. Deterministic given the configuration.
/// `on_epoch` sees the parameters after each epoch with its mean loss.
pub fn train(
    cfg: &RunConfig,
    inputs: &TrainInputs<'_>,
    init: EugatParams,
    on_epoch: &mut dyn FnMut(usize, &EugatParams, f64) -> Result<()>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut params = init;
    let mut adam = AdamState::new(&params);
    let mut stats = TrainStats {
        configured_easy: cfg.loss.n_easy,
        ..TrainStats::default()
    };
    let pool_set: HashSet<&str> = inputs.pool.iter().map(String::as_str).collect();
    let mut queries: Vec<&str> = inputs.qrels.queries().collect();
    let mut skipped: HashMap<String, String> = HashMap::new();
    let mut easy_total = 0usize;
    let mut easy_count = 0usize;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["epoch", &epoch.to_string()]));
        queries.sort_unstable();
        queries.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_n = 0usize;
        for (b, chunk) in queries.chunks(cfg.batch_size).enumerate() {
            let mut samples = Vec::with_capacity(chunk.len());
            for &qid in chunk {
                let relevant: HashSet<&str> = inputs
                    .qrels
                    .relevant(qid)
                    .map(|r| r.iter().map(String::as_str).collect())
                    .unwrap_or_default();
                let mut positives: Vec<&str> =
                    relevant.iter().copied().filter(|c| pool_set.contains(c)).collect();
                positives.sort_unstable();
                let Some(&positive) = positives.choose(&mut rng) else {
                    skipped.entry(qid.to_string()).or_insert_with(|| "no relevant candidate in pool".into());
                    continue;
                };
                let mut easy: Vec<&str> = inputs
                    .pool
                    .iter()
                    .map(String::as_str)
                    .filter(|c| !relevant.contains(c) && *c != qid)
                    .choose_multiple(&mut rng, cfg.loss.n_easy);
                easy.shuffle(&mut rng);
                let hard: Vec<&str> = inputs
                    .hard
                    .get(qid)
                    .map(|h| h.iter().take(cfg.loss.n_hard).map(String::as_str).collect())
                    .unwrap_or_default();
                samples.push(Sample {
                    qid,
                    relevant,
                    positive,
                    easy,
                    hard,
                });
            }
            let tape = Tape::new();
            let bound = params.bind(&tape, true);
            let mut enc = Encoder {
                tape: &tape,
                bound: &bound,
                cfg,
                store: inputs.store,
                dropout: ChaCha8Rng::seed_from_u64(derive_seed(
                    cfg.seed,
                    &["dropout", &epoch.to_string(), &b.to_string()],
                )),
            };
            let mut reps = Vec::with_capacity(samples.len());
            for s in &samples {
                reps.push((enc.id(s.qid)?, enc.id(s.positive)?));
            }
            let mut inbatch_aug: HashMap<usize, Var> = HashMap::new();
            let mut losses = Vec::new();
            for (i, s) in samples.iter().enumerate() {
                let mut aug_rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["aug", &epoch.to_string(), s.qid]));
                let mut terms = GclTerms {
                    query: Some(reps[i].0),
                    positive: Some(reps[i].1),
                    ..GclTerms::default()
                };
                if cfg.loss.aug_mode == AugMode::AugPos {
                    terms.aug_positive = Some(enc.augmented(s.positive, &mut aug_rng)?);
                }
                for &e in &s.easy {
                    terms.easy.push(enc.id(e)?);
                    if cfg.loss.aug_mode == AugMode::AugEasyNeg {
                        terms.aug_easy.push(enc.augmented(e, &mut aug_rng)?);
                    }
                }
                if cfg.loss.use_in_batch_negatives {
                    let mut seen: HashSet<&str> = s.easy.iter().copied().collect();
                    for (j, o) in samples.iter().enumerate() {
                        if j == i || s.relevant.contains(o.positive) || o.positive == s.qid || !seen.insert(o.positive) {
                            continue;
                        }
                        terms.easy.push(reps[j].1);
                        if cfg.loss.aug_mode == AugMode::AugEasyNeg {
                            let v = match inbatch_aug.get(&j) {
                                Some(&v) => v,
                                None => {
                                    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(
                                        cfg.seed,
                                        &["aug-inbatch", &epoch.to_string(), o.qid],
                                    ));
                                    let v = enc.augmented(o.positive, &mut r)?;
                                    inbatch_aug.insert(j, v);
                                    v
                                }
                            };
                            terms.aug_easy.push(v);
                        }
                    }
                }
                for &h in &s.hard {
                    terms.hard.push(enc.id(h)?);
                }
                if terms.easy.is_empty() && terms.hard.is_empty() {
                    skipped.entry(s.qid.to_string()).or_insert_with(|| "no available negative".into());
                    continue;
                }
                easy_total += terms.easy.len();
                easy_count += 1;
                losses.push(gcl_loss(&tape, &terms, &cfg.loss)?);
            }
            if losses.is_empty() {
                continue;
            }
            let loss = tape.mean(&losses)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite { op: "train" });
            }
            let grads = tape.backward(loss)?;
            let grads = bound.gradients(&grads, &params);
            adam_step(&mut params, &grads, &mut adam, &cfg.optimizer)?;
            stats.step_losses.push(value);
            epoch_sum += value * losses.len() as f64;
            epoch_n += losses.len();
        }
        let mean = if epoch_n == 0 { f64::NAN } else { epoch_sum / epoch_n as f64 };
        stats.epoch_losses.push(mean);
        log::info!("epoch {} loss {:.6}", epoch + 1, mean);
        on_epoch(epoch, &params, mean)?;
    }
    for (q, why) in &skipped {
        log::warn!("query {q} skipped: {why}");
    }
    let mut skipped: Vec<(String, String)> = skipped.into_iter().collect();
    skipped.sort();
    stats.skipped = skipped;
    stats.effective_easy = if easy_count == 0 {
        0.0
    } else {
        easy_total as f64 / easy_count as f64
    };
    Ok(TrainOutput { params, stats })
}
