//! Okapi BM25 over case texts.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug)]
pub struct Bm25Index {
    pub k1: f64,
    pub b: f64,
    doc_ids: Vec<String>,
    positions: HashMap<String, usize>,
    term_counts: Vec<HashMap<String, u32>>,
    doc_len: Vec<usize>,
    avgdl: f64,
    df: HashMap<String, usize>,
    postings: HashMap<String, Vec<(usize, u32)>>,
}

/// A scored candidate; ordering is score descending then id ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: String,
    pub score: f64,
}

pub fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

impl Bm25Index {
    pub fn build<I, S, T>(corpus: I, k1: f64, b: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut doc_ids = Vec::new();
        let mut positions = HashMap::new();
        let mut term_counts = Vec::new();
        let mut doc_len = Vec::new();
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (id, text) in corpus {
            let id = id.into();
            let pos = doc_ids.len();
            if positions.insert(id.clone(), pos).is_some() {
                return Err(Error::Config(format!("duplicate document id `{id}`")));
            }
            let tokens = tokenize(text.as_ref());
            let mut counts: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *counts.entry(t.clone()).or_default() += 1;
            }
            let mut terms: Vec<(&String, &u32)> = counts.iter().collect();
            terms.sort();
            for (t, &c) in terms {
                *df.entry(t.clone()).or_default() += 1;
                postings.entry(t.clone()).or_default().push((pos, c));
            }
            doc_ids.push(id);
            doc_len.push(tokens.len());
            term_counts.push(counts);
        }
        if doc_ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let avgdl = doc_len.iter().sum::<usize>() as f64 / doc_len.len() as f64;
        Ok(Bm25Index {
            k1,
            b,
            doc_ids,
            positions,
            term_counts,
            doc_len,
            avgdl,
            df,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_len(&self, id: &str) -> Result<usize> {
        Ok(self.doc_len[self.position(id)?])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn term_count(&self, id: &str, term: &str) -> Result<u32> {
        Ok(self.term_counts[self.position(id)?].get(term).copied().unwrap_or(0))
    }

    fn position(&self, id: &str) -> Result<usize> {
        self.positions.get(id).copied().ok_or_else(|| Error::UnknownDoc(id.to_string()))
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: f64, len: usize) -> f64 {
        let norm = self.k1 * (1.0 - self.b + self.b * len as f64 / self.avgdl);
        idf * tf * (self.k1 + 1.0) / (tf + norm)
    }

    /// Score of one document. Repeated query tokens each contribute.
    pub fn score(&self, query: &str, doc_id: &str) -> Result<f64> {
        let pos = self.position(doc_id)?;
        let counts = &self.term_counts[pos];
        Ok(tokenize(query)
            .iter()
            .filter_map(|t| counts.get(t).map(|&tf| self.term_weight(self.idf(t), tf as f64, self.doc_len[pos])))
            .sum())
    }

    /// Scores of every document, in index order.
    pub fn score_all(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.len()];
        for t in tokenize(query) {
            if let Some(list) = self.postings.get(&t) {
                let idf = self.idf(&t);
                for &(pos, tf) in list {
                    scores[pos] += self.term_weight(idf, tf as f64, self.doc_len[pos]);
                }
            }
        }
        scores
    }

    /// Top `k` documents by score, skipping `exclude`.
    pub fn top_k(&self, query: &str, k: usize, exclude: &HashSet<&str>) -> Vec<Scored> {
        let mut all: Vec<Scored> = self
            .score_all(query)
            .into_iter()
            .zip(&self.doc_ids)
            .filter(|(_, id)| !exclude.contains(id.as_str()))
            .map(|(score, id)| Scored { id: id.clone(), score })
            .collect();
        all.sort_by(rank_order);
        all.truncate(k);
        all
    }
}
