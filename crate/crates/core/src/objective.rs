//! Similarity functions, the graph contrastive loss, and BM25 hard-negative
//! mining.

use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexical::Bm25Index;
use crate::ndiff::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    Dot,
    #[default]
    Cosine,
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(SimilarityKind::Dot),
            "cosine" | "cos" => Ok(SimilarityKind::Cosine),
            other => Err(Error::Config(format!("unknown similarity `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugMode {
    None,
    #[default]
    AugPos,
    AugEasyNeg,
}

impl FromStr for AugMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AugMode::None),
            "aug_pos" | "aug-pos" => Ok(AugMode::AugPos),
            "aug_easy_neg" | "aug-easy-neg" => Ok(AugMode::AugEasyNeg),
            other => Err(Error::Config(format!("unknown aug mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub tau: f64,
    pub similarity: SimilarityKind,
    pub n_easy: usize,
    pub n_hard: usize,
    pub aug_mode: AugMode,
    pub use_in_batch_negatives: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 0.1,
            similarity: SimilarityKind::Cosine,
            n_easy: 1,
            n_hard: 1,
            aug_mode: AugMode::AugPos,
            use_in_batch_negatives: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Plain similarity of two vectors.
pub fn similarity(u: &[f64], v: &[f64], kind: SimilarityKind) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    match kind {
        SimilarityKind::Dot => Ok(dot),
        SimilarityKind::Cosine => {
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nu == 0.0 || nv == 0.0 {
                return Err(Error::Similarity("cosine similarity of a zero vector".into()));
            }
            Ok(dot / (nu * nv))
        }
    }
}

/// Differentiable similarity of two `1 × n` rows, as a `1 × 1` var.
pub fn similarity_var(tape: &Tape, u: Var, v: Var, kind: SimilarityKind) -> Result<Var> {
    match kind {
        SimilarityKind::Dot => tape.dot(u, v),
        SimilarityKind::Cosine => {
            for x in [u, v] {
                if tape.value(x).data().iter().all(|&e| e == 0.0) {
                    return Err(Error::Similarity("cosine similarity of a zero vector".into()));
                }
            }
            tape.dot(tape.l2_normalize(u)?, tape.l2_normalize(v)?)
        }
    }
}

/// Inputs to [`gcl_loss`]: case vectors registered on one tape.
#[derive(Clone, Debug, Default)]
pub struct GclTerms {
    pub query: Option<Var>,
    pub positive: Option<Var>,
    pub aug_positive: Option<Var>,
    pub easy: Vec<Var>,
    pub aug_easy: Vec<Var>,
    pub hard: Vec<Var>,
}

/// Contrastive loss `−log(num/den)` where the numerator holds the positive
/// (and its augmented view under `AugPos`) and the denominator adds every
/// negative. Exponents are shifted by their maximum before `exp`.
pub fn gcl_loss(tape: &Tape, terms: &GclTerms, cfg: &LossConfig) -> Result<Var> {
    cfg.validate()?;
    let q = terms.query.ok_or_else(|| Error::op("gcl_loss", "missing query"))?;
    let pos = terms.positive.ok_or_else(|| Error::op("gcl_loss", "missing positive"))?;
    if terms.aug_positive.is_some() != (cfg.aug_mode == AugMode::AugPos) {
        return Err(Error::op("gcl_loss", "augmented positive must be present exactly under aug_pos"));
    }
    if !terms.aug_easy.is_empty() && cfg.aug_mode != AugMode::AugEasyNeg {
        return Err(Error::op("gcl_loss", "augmented easy negatives given outside aug_easy_neg"));
    }
    if cfg.aug_mode == AugMode::AugEasyNeg && terms.aug_easy.len() != terms.easy.len() {
        return Err(Error::op("gcl_loss", "one augmented view is required per easy negative"));
    }
    let mut numer = vec![pos];
    numer.extend(terms.aug_positive);
    let num_count = numer.len();
    let others = numer
        .into_iter()
        .chain(terms.easy.iter().copied())
        .chain(terms.aug_easy.iter().copied())
        .chain(terms.hard.iter().copied());
    let mut logits = Vec::new();
    for d in others {
        let s = similarity_var(tape, q, d, cfg.similarity)?;
        logits.push(tape.scale(s, 1.0 / cfg.tau).map_err(|e| match e {
            Error::NonFinite { .. } => Error::LossOverflow { tau: cfg.tau },
            other => other,
        })?);
    }
    let z = tape.concat_rows(&logits)?;
    let (shift, num_shift) = {
        let zv = tape.value(z);
        if !zv.is_finite() {
            return Err(Error::LossOverflow { tau: cfg.tau });
        }
        let max = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (max(zv.data()), max(&zv.data()[..num_count]))
    };
    // Each log-sum-exp gets its own shift so neither sum can underflow.
    let den = tape.add_scalar(tape.log(tape.sum(tape.exp(tape.add_scalar(z, -shift)?)?)?)?, shift)?;
    let zn = tape.slice_rows(z, 0, num_count)?;
    let num = tape.add_scalar(tape.log(tape.sum(tape.exp(tape.add_scalar(zn, -num_shift)?)?)?)?, num_shift)?;
    tape.sub(den, num)
}

/// Result of hard-negative mining.
#[derive(Clone, Debug, PartialEq)]
pub struct HardNegatives {
    pub ids: Vec<String>,
    /// Set when fewer than the requested count were available.
    pub short: bool,
}

/// The `m` highest-BM25 candidates for `query_text` that are neither
/// relevant nor the query itself. Ties go to the smaller id.
pub fn mine_hard_negatives(
    query_id: &str,
    query_text: &str,
    relevant: &HashSet<&str>,
    index: &Bm25Index,
    m: usize,
) -> HardNegatives {
    if m == 0 {
        return HardNegatives {
            ids: Vec::new(),
            short: false,
        };
    }
    let mut exclude = relevant.clone();
    exclude.insert(query_id);
    let ids: Vec<String> = index.top_k(query_text, m, &exclude).into_iter().map(|s| s.id).collect();
    HardNegatives {
        short: ids.len() < m,
        ids,
    }
}
