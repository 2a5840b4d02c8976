//! Count-based backoff n-gram language model.
//!
//! Supplies the plausibility bonus P_ngram(u|E) in the speaker utility: the
//! probability of a descriptor's words following the words already uttered.
//! Conditional probabilities use add-k smoothing over vocab ∪ {UNK}; unseen
//! contexts back off to shorter ones with a fixed per-level penalty
//! (stupid backoff). The model is a plain count table behind a small
//! probabilistic interface, so a heavier LM can be swapped in later.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::semantics::Descriptor;
use crate::{real, Real};

/// Start-of-expression padding symbol. Never part of the vocabulary.
pub const START: &str = "<s>";

/// Multiplicative penalty applied per backoff level.
pub const BACKOFF_PENALTY: f64 = 0.4;

/// Default model order (trigram).
pub const DEFAULT_ORDER: usize = 3;

/// Default add-k smoothing constant.
pub const DEFAULT_SMOOTHING_K: f64 = 0.1;

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("empty corpus: train on at least one non-empty line or use the Off model")]
    EmptyCorpus,
    #[error("invalid n-gram order {0}: must be at least 1")]
    InvalidOrder(usize),
    #[error("invalid smoothing k {0}: must be positive")]
    InvalidSmoothing(f64),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Trained count-based model of order `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramModel<R> {
    order: usize,
    smoothing_k: R,
    /// Context (0 to n-1 preceding words, possibly start padding) to
    /// next-word counts.
    counts: BTreeMap<Vec<String>, BTreeMap<String, u64>>,
    vocab: BTreeSet<String>,
}

impl<R: Real> NgramModel<R> {
    /// Count all k-gram occurrences (k ≤ n) over a tokenized corpus.
    pub fn train<S, T>(corpus: &[S], order: usize) -> Result<Self, NgramError>
    where
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        Self::train_with_smoothing(corpus, order, real(DEFAULT_SMOOTHING_K))
    }

    pub fn train_with_smoothing<S, T>(
        corpus: &[S],
        order: usize,
        smoothing_k: R,
    ) -> Result<Self, NgramError>
    where
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        if order < 1 {
            return Err(NgramError::InvalidOrder(order));
        }
        if !smoothing_k.is_finite() || smoothing_k <= R::zero() {
            return Err(NgramError::InvalidSmoothing(
                smoothing_k.to_f64().unwrap_or(f64::NAN),
            ));
        }

        let mut counts: BTreeMap<Vec<String>, BTreeMap<String, u64>> = BTreeMap::new();
        let mut vocab = BTreeSet::new();
        let mut any = false;
        for line in corpus {
            let tokens: Vec<String> = line
                .as_ref()
                .iter()
                .map(|t| t.as_ref().to_lowercase())
                .collect();
            if tokens.is_empty() {
                continue;
            }
            any = true;
            let mut padded: Vec<String> = vec![START.to_owned(); order - 1];
            padded.extend(tokens.iter().cloned());
            for (i, word) in tokens.iter().enumerate() {
                vocab.insert(word.clone());
                let end = order - 1 + i;
                for ctx_len in 0..order {
                    let context = padded[end - ctx_len..end].to_vec();
                    *counts
                        .entry(context)
                        .or_default()
                        .entry(word.clone())
                        .or_insert(0) += 1;
                }
            }
        }
        if !any {
            return Err(NgramError::EmptyCorpus);
        }
        Ok(NgramModel {
            order,
            smoothing_k,
            counts,
            vocab,
        })
    }

    /// Train from raw text: one expression per line, whitespace-tokenized,
    /// lowercased.
    pub fn train_from_text(text: &str, order: usize) -> Result<Self, NgramError> {
        let lines: Vec<Vec<String>> = text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_owned).collect())
            .collect();
        Self::train(&lines, order)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Vec<String>> {
        self.counts.keys()
    }

    /// Smoothed conditional P(word | context) for a context of the trained
    /// table, over vocab ∪ {UNK}. The context must be seen; callers wanting
    /// backoff use [`NgramModel::word_prob`].
    pub fn table_prob(&self, word: &str, context: &[String]) -> Option<R> {
        let table = self.counts.get(context)?;
        let total: u64 = table.values().sum();
        let count = if self.vocab.contains(word) {
            table.get(word).copied().unwrap_or(0)
        } else {
            0 // out-of-vocab words share the UNK slot
        };
        let v = self.vocab.len() as u64 + 1;
        let num = R::from_u64(count).unwrap() + self.smoothing_k;
        let den = R::from_u64(total).unwrap() + self.smoothing_k * R::from_u64(v).unwrap();
        Some(num / den)
    }

    /// P(word | context) with stupid backoff: unseen contexts drop their
    /// oldest word and multiply in the penalty, down to the unigram table.
    pub fn word_prob(&self, word: &str, context: &[String]) -> R {
        let mut ctx = context;
        let mut penalty = R::one();
        loop {
            if let Some(p) = self.table_prob(word, ctx) {
                return penalty * p;
            }
            debug_assert!(!ctx.is_empty(), "empty context is always in the table");
            ctx = &ctx[1..];
            penalty = penalty * real(BACKOFF_PENALTY);
        }
    }

    /// Probability of a word sequence following `history`, as the product
    /// of per-word conditionals over a sliding context window.
    pub fn sequence_prob(&self, words: &[&str], history: &[String]) -> R {
        let mut running: Vec<String> = vec![START.to_owned(); self.order - 1];
        running.extend(history.iter().map(|w| w.to_lowercase()));
        let mut p = R::one();
        for word in words {
            let word = word.to_lowercase();
            let ctx = &running[running.len() - (self.order - 1)..];
            p = p * self.word_prob(&word, ctx);
            running.push(word);
        }
        p
    }

    /// Serialize to the model-file schema.
    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            order: self.order,
            smoothing_k: self.smoothing_k,
            counts: self
                .counts
                .iter()
                .map(|(ctx, table)| (ctx.join(" "), table.clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, NgramError> {
        let doc: ModelDoc<R> = serde_json::from_slice(bytes)?;
        if doc.order < 1 {
            return Err(NgramError::InvalidOrder(doc.order));
        }
        if !doc.smoothing_k.is_finite() || doc.smoothing_k <= R::zero() {
            return Err(NgramError::InvalidSmoothing(
                doc.smoothing_k.to_f64().unwrap_or(f64::NAN),
            ));
        }
        let mut counts: BTreeMap<Vec<String>, BTreeMap<String, u64>> = BTreeMap::new();
        let mut vocab = BTreeSet::new();
        for (ctx, table) in doc.counts {
            let context: Vec<String> = if ctx.is_empty() {
                Vec::new()
            } else {
                ctx.split(' ').map(str::to_owned).collect()
            };
            for word in table.keys() {
                if context.is_empty() {
                    vocab.insert(word.clone());
                }
            }
            counts.insert(context, table);
        }
        Ok(NgramModel {
            order: doc.order,
            smoothing_k: doc.smoothing_k,
            counts,
            vocab,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc<R> {
    order: usize,
    smoothing_k: R,
    /// Context words joined by a single space; empty string is the unigram
    /// context.
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

/// The language-model slot of the speaker utility: absent or trained.
///
/// With `Off`, the P_ngram term is exactly 0 and the utility degrades to
/// standard RSA.
#[derive(Clone, Debug)]
pub enum LanguageModel<R> {
    Off,
    Ngram(NgramModel<R>),
}

impl<R: Real> LanguageModel<R> {
    /// P_ngram of a descriptor's surface following the history words.
    pub fn descriptor_prob(&self, descriptor: &Descriptor, history: &[String]) -> R {
        match self {
            LanguageModel::Off => R::zero(),
            LanguageModel::Ngram(model) => {
                let words: Vec<&str> = descriptor.words().collect();
                model.sequence_prob(&words, history)
            }
        }
    }
}
