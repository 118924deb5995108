use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::tacg::{CaseDocument, RelationTriplet};

/// Shape of a generated corpus. Cases carry a primary topic and sometimes a
/// secondary one; a query is relevant to the candidates sharing its primary
/// topic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_candidates: usize,
    pub num_train_queries: usize,
    pub num_test_queries: usize,
    pub num_topics: usize,
    /// Triplets in the fact section.
    pub triplets_per_case: usize,
    /// Triplets in the issue section.
    pub issue_triplets: usize,
    /// Relation concepts per topic.
    pub vocab_per_topic: usize,
    /// Entity concepts per topic.
    pub entities_per_topic: usize,
    /// Surface variants per concept; each case uses one variant per concept.
    pub synonyms: usize,
    /// Entities shared by all topics.
    pub shared_entities: usize,
    /// Relation words of noise triplets.
    pub noise_vocab: usize,
    /// Share of clauses that also appear as extracted triplets; the rest are
    /// only present in the section text.
    pub extraction_rate: f64,
    /// Share of triplets drawn from the noise vocabulary.
    pub noise_rate: f64,
    /// Probability that a case has a secondary topic.
    pub secondary_rate: f64,
    /// Share of topical fact triplets drawn from the secondary topic.
    pub secondary_share: f64,
    pub relevant_per_query: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_candidates: 200,
            num_train_queries: 100,
            num_test_queries: 50,
            num_topics: 40,
            triplets_per_case: 16,
            issue_triplets: 4,
            vocab_per_topic: 3,
            entities_per_topic: 0,
            synonyms: 1,
            shared_entities: 20,
            noise_vocab: 10,
            extraction_rate: 0.7,
            noise_rate: 0.6,
            secondary_rate: 1.0,
            secondary_share: 0.7,
            relevant_per_query: 4.68,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.num_topics < 2 {
            return bad("num_topics must be >= 2");
        }
        if self.relevant_per_query < 1.0 {
            return bad("relevant_per_query must be >= 1");
        }
        if self.num_candidates < self.num_topics {
            return bad("need at least one candidate per topic");
        }
        if self.triplets_per_case == 0 || self.issue_triplets == 0 || self.vocab_per_topic == 0 || self.synonyms == 0 {
            return bad("triplets_per_case, vocab_per_topic and synonyms must be positive");
        }
        if self.noise_vocab < 1 || self.shared_entities < 2 {
            return bad("noise_vocab must be >= 1 and shared_entities >= 2");
        }
        if [self.noise_rate, self.secondary_rate, self.secondary_share, self.extraction_rate]
            .iter()
            .any(|r| !(0.0..=1.0).contains(r))
        {
            return bad("rates must lie in [0, 1]");
        }
        Ok(())
    }
}

/// A generated corpus with its train and test judgments.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub docs: Vec<CaseDocument>,
    pub train_qrels: Qrels,
    pub test_qrels: Qrels,
    /// Primary topic per document, in `docs` order.
    pub topics: Vec<usize>,
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

fn words(n: usize, syllables: usize, rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if used.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Vocab {
    /// `[topic][concept][variant]` relation words.
    relations: Vec<Vec<Vec<String>>>,
    /// `[topic][concept][variant]` entity words.
    entities: Vec<Vec<Vec<String>>>,
    shared_entities: Vec<String>,
    noise_relations: Vec<String>,
}

impl Vocab {
    fn new(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut used = HashSet::new();
        let mut concepts = |n: usize, syll: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<Vec<String>>> {
            (0..spec.num_topics)
                .map(|_| (0..n).map(|_| words(spec.synonyms, syll, rng, &mut used)).collect())
                .collect()
        };
        let relations = concepts(spec.vocab_per_topic, 2, rng);
        let entities = concepts(spec.entities_per_topic, 3, rng);
        let shared_entities = words(spec.shared_entities, 3, rng, &mut used);
        let noise_relations = words(spec.noise_vocab, 2, rng, &mut used);
        Vocab {
            relations,
            entities,
            shared_entities,
            noise_relations,
        }
    }
}

/// Per-case surface choice: one variant per concept of a topic.
struct Dialect {
    relations: Vec<String>,
    entities: Vec<String>,
}

impl Dialect {
    fn new(vocab: &Vocab, t: usize, rng: &mut ChaCha8Rng) -> Self {
        let pick = |c: &Vec<Vec<String>>, rng: &mut ChaCha8Rng| -> Vec<String> {
            c.iter().map(|v| v.choose(rng).unwrap().clone()).collect()
        };
        Dialect {
            relations: pick(&vocab.relations[t], rng),
            entities: pick(&vocab.entities[t], rng),
        }
    }

    fn triplet(&self, vocab: &Vocab, rng: &mut ChaCha8Rng) -> RelationTriplet {
        let entity = |rng: &mut ChaCha8Rng| -> String {
            let pool = vocab.shared_entities.len() + self.entities.len();
            let i = rng.gen_range(0..pool);
            let w = if i < self.entities.len() {
                &self.entities[i]
            } else {
                &vocab.shared_entities[i - self.entities.len()]
            };
            w.clone()
        };
        let h = entity(rng);
        let mut tl = entity(rng);
        while tl == h {
            tl = entity(rng);
        }
        RelationTriplet::new(h, self.relations.choose(rng).unwrap().clone(), tl)
    }
}

fn noise_triplet(vocab: &Vocab, rng: &mut ChaCha8Rng) -> RelationTriplet {
    let h = vocab.shared_entities.choose(rng).unwrap();
    let mut tl = vocab.shared_entities.choose(rng).unwrap();
    while tl == h {
        tl = vocab.shared_entities.choose(rng).unwrap();
    }
    RelationTriplet::new(
        h.clone(),
        vocab.noise_relations.choose(rng).unwrap().clone(),
        tl.clone(),
    )
}

fn text_of(triplets: &[RelationTriplet]) -> String {
    triplets.iter().map(|t| format!("{}.", t.sentence())).collect::<Vec<_>>().join(" ")
}

/// Keeps each clause with probability `rate`, and at least one.
fn extracted(mut clauses: Vec<RelationTriplet>, rate: f64, rng: &mut ChaCha8Rng) -> Vec<RelationTriplet> {
    if rate >= 1.0 {
        return clauses;
    }
    let first = rng.gen_range(0..clauses.len());
    let mut i = 0;
    clauses.retain(|_| {
        let keep = i == first || rng.gen::<f64>() < rate;
        i += 1;
        keep
    });
    clauses
}

fn make_case(
    id: String,
    primary: usize,
    spec: &SyntheticSpec,
    vocab: &Vocab,
    rng: &mut ChaCha8Rng,
) -> CaseDocument {
    let secondary = (rng.gen::<f64>() < spec.secondary_rate).then(|| {
        let s = rng.gen_range(0..spec.num_topics - 1);
        if s >= primary {
            s + 1
        } else {
            s
        }
    });
    let main = Dialect::new(vocab, primary, rng);
    let side = secondary.map(|s| Dialect::new(vocab, s, rng));
    let fact_n = spec.triplets_per_case;
    let issue_n = spec.issue_triplets;
    let mut fact = Vec::with_capacity(fact_n);
    for _ in 0..fact_n {
        fact.push(if rng.gen::<f64>() < spec.noise_rate {
            noise_triplet(vocab, rng)
        } else {
            match &side {
                Some(d) if rng.gen::<f64>() < spec.secondary_share => d.triplet(vocab, rng),
                _ => main.triplet(vocab, rng),
            }
        });
    }
    let mut issue = Vec::with_capacity(issue_n);
    for _ in 0..issue_n {
        issue.push(if rng.gen::<f64>() < spec.noise_rate / 2.0 {
            noise_triplet(vocab, rng)
        } else {
            main.triplet(vocab, rng)
        });
    }
    let fact_text = text_of(&fact);
    let issue_text = text_of(&issue);
    CaseDocument {
        case_id: id,
        fact_text,
        issue_text,
        fact_triplets: extracted(fact, spec.extraction_rate, rng),
        issue_triplets: extracted(issue, spec.extraction_rate, rng),
    }
}

/// Generates a corpus: candidates `c0000…`, train queries `q0000…`, test
/// queries `t0000…`.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = Vocab::new(spec, &mut rng);

    let mut order: Vec<usize> = (0..spec.num_topics).collect();
    order.shuffle(&mut rng);
    let cand_topics: Vec<usize> = (0..spec.num_candidates).map(|i| order[i % spec.num_topics]).collect();
    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); spec.num_topics];
    for (i, &t) in cand_topics.iter().enumerate() {
        by_topic[t].push(i);
    }
    let mean_group = spec.num_candidates as f64 / spec.num_topics as f64;
    if mean_group < spec.relevant_per_query * 0.8 {
        return Err(Error::Synthetic(format!(
            "{} candidates over {} topics cannot reach {} relevant per query",
            spec.num_candidates, spec.num_topics, spec.relevant_per_query
        )));
    }
    let keep = (spec.relevant_per_query / mean_group).min(1.0);

    let mut docs = Vec::new();
    let mut topics = Vec::new();
    for (i, &t) in cand_topics.iter().enumerate() {
        docs.push(make_case(format!("c{i:04}"), t, spec, &vocab, &mut rng));
        topics.push(t);
    }
    let mut split = |prefix: &str, n: usize, docs: &mut Vec<CaseDocument>, topics: &mut Vec<usize>| {
        let mut q = Qrels::default();
        for i in 0..n {
            let t = rng.gen_range(0..spec.num_topics);
            let id = format!("{prefix}{i:04}");
            docs.push(make_case(id.clone(), t, spec, &vocab, &mut rng));
            topics.push(t);
            let group = &by_topic[t];
            let mut rel: BTreeSet<usize> = group.iter().copied().filter(|_| rng.gen::<f64>() < keep).collect();
            if rel.is_empty() {
                rel.insert(*group.choose(&mut rng).unwrap());
            }
            for c in rel {
                q.insert(id.clone(), format!("c{c:04}"));
            }
        }
        q
    };
    let train_qrels = split("q", spec.num_train_queries, &mut docs, &mut topics);
    let test_qrels = split("t", spec.num_test_queries, &mut docs, &mut topics);
    Ok(SyntheticCorpus {
        docs,
        train_qrels,
        test_qrels,
        topics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let spec = SyntheticSpec {
            num_topics: 10,
            ..SyntheticSpec::default()
        };
        let a = synth_generate(&spec).unwrap();
        assert_eq!(a, synth_generate(&spec).unwrap());
        crate::tacg::validate_corpus(&a.docs).unwrap();
        assert_eq!(a.docs.len(), 350);
        for d in &a.docs {
            crate::tacg::build_case_pair(d, true).unwrap();
        }
    }

    #[test]
    fn infeasible_target_rejected() {
        let spec = SyntheticSpec {
            num_candidates: 40,
            num_topics: 40,
            ..SyntheticSpec::default()
        };
        assert!(matches!(synth_generate(&spec), Err(Error::Synthetic(_))));
    }
}
