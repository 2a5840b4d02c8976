//! Simulated-comprehension evaluation harness.
//!
//! Classifies each generated expression against the scene by categorical
//! truth (does a unique object satisfy every descriptor?), mirrors the
//! survey error taxonomy, and aggregates outcome counts plus overlap
//! metrics over a dataset of scenes with reference expressions.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{bleu, meteor_exact, rouge_l, MetricsError};
use crate::ngram::LanguageModel;
use crate::prep::{self, AlignmentResult, ALIGN_OVERLAP_MIN};
use crate::rsa::{self, Expression, RsaConfig};
use crate::scene::{self, ObjectId};
use crate::semantics::{self, Descriptor, ThresholdTable};
use crate::{real, Real};

/// How a simulated listener fares on an expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The target is the unique satisfier.
    True,
    /// Something else (but not the target) satisfies the expression.
    False,
    /// The target satisfies it, but so do others.
    UnderInformative,
    /// Nothing satisfies the expression.
    NoMatch,
    /// Proxy: the described referent was not a detected context object.
    NotHighlighted,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::True => "true",
            Outcome::False => "false",
            Outcome::UnderInformative => "under_informative",
            Outcome::NoMatch => "no_match",
            Outcome::NotHighlighted => "not_highlighted",
        };
        f.write_str(s)
    }
}

/// Classify an expression by categorical truth.
///
/// The match set M is every object satisfying all descriptors. A target
/// that was appended without any well-overlapping detection classifies as
/// `NotHighlighted` regardless of M — the referent was never a detected
/// context object, which is this harness's stand-in for the survey's
/// "best match is not highlighted" response.
pub fn classify<R: Real>(
    descriptors: &[Descriptor],
    target: &ObjectId,
    alignment: &AlignmentResult<R>,
) -> Outcome {
    if alignment.added_new && alignment.best_overlap < real(ALIGN_OVERLAP_MIN) {
        return Outcome::NotHighlighted;
    }
    let mut matches: Option<BTreeSet<&ObjectId>> = None;
    for d in descriptors {
        let ext: BTreeSet<&ObjectId> = d.extension.iter().collect();
        matches = Some(match matches {
            None => ext,
            Some(m) => m.intersection(&ext).copied().collect(),
        });
    }
    let matches = matches.unwrap_or_default();
    if matches.is_empty() {
        Outcome::NoMatch
    } else if matches.contains(target) {
        if matches.len() == 1 {
            Outcome::True
        } else {
            Outcome::UnderInformative
        }
    } else {
        Outcome::False
    }
}

/// Accuracy over instances where the pipeline saw the referent at all:
/// True / (True + False + UnderInformative). `None` when the denominator
/// is zero. Counts may be fractional (e.g. percentages).
pub fn adjusted_accuracy<R: Real>(true_: R, false_: R, under_informative: R) -> Option<R> {
    let denom = true_ + false_ + under_informative;
    if denom > R::zero() {
        Some(true_ / denom)
    } else {
        None
    }
}

/// Outcome tallies over a dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    #[serde(rename = "true")]
    pub true_: usize,
    #[serde(rename = "false")]
    pub false_: usize,
    pub under_informative: usize,
    pub no_match: usize,
    pub not_highlighted: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::True => self.true_ += 1,
            Outcome::False => self.false_ += 1,
            Outcome::UnderInformative => self.under_informative += 1,
            Outcome::NoMatch => self.no_match += 1,
            Outcome::NotHighlighted => self.not_highlighted += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_ + self.false_ + self.under_informative + self.no_match + self.not_highlighted
    }

    pub fn merge(&mut self, other: &OutcomeCounts) {
        self.true_ += other.true_;
        self.false_ += other.false_;
        self.under_informative += other.under_informative;
        self.no_match += other.no_match;
        self.not_highlighted += other.not_highlighted;
    }
}

/// Aggregate report over a dataset run.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport<R> {
    pub n_instances: usize,
    pub counts: OutcomeCounts,
    pub raw_accuracy: R,
    pub adjusted_accuracy: Option<R>,
    /// Overlap metrics averaged per instance over the `n_scored` instances
    /// that produced an expression and had references.
    pub bleu: R,
    pub rouge_l: R,
    pub meteor: R,
    pub n_scored: usize,
    /// How often the pragmatic listener's argmax recovers the target.
    pub listener_accuracy: R,
    pub n_errored: usize,
}

/// One dataset instance: a scene file plus reference expressions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub scene: PathBuf,
    pub references: Vec<String>,
}

/// Per-instance evaluation record.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceRow<R> {
    pub scene: String,
    pub outcome: Outcome,
    pub expression: Option<String>,
    pub bleu: Option<R>,
    pub rouge_l: Option<R>,
    pub meteor: Option<R>,
    pub listener_correct: Option<bool>,
    pub error: Option<String>,
}

/// A full evaluation run: the aggregate report plus per-instance rows.
#[derive(Clone, Debug, Serialize)]
pub struct EvalRun<R> {
    pub aggregation: &'static str,
    pub report: MetricsReport<R>,
    pub instances: Vec<InstanceRow<R>>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset line {line}: {source}")]
    Jsonl {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Load a JSONL dataset; `scene` paths are resolved against the dataset
/// file's directory.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetEntry>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: DatasetEntry =
            serde_json::from_str(line).map_err(|source| EvalError::Jsonl {
                line: i + 1,
                source,
            })?;
        if entry.scene.is_relative() {
            entry.scene = base.join(&entry.scene);
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    Ok(entries)
}

/// Run the full pipeline over every dataset entry and aggregate.
///
/// Per-instance failures (unreadable files, validation errors, generation
/// errors) are recorded as `NoMatch` with an error note; they never abort
/// the run. Overlap metrics are averaged per instance over scored rows.
pub fn evaluate_dataset<R: Real>(
    entries: &[DatasetEntry],
    cfg: &RsaConfig<R>,
    theta: &ThresholdTable<R>,
    lm: &LanguageModel<R>,
) -> Result<EvalRun<R>, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let instances: Vec<InstanceRow<R>> = entries
        .iter()
        .map(|e| evaluate_instance(e, cfg, theta, lm))
        .collect();
    let report = aggregate(&instances);
    Ok(EvalRun {
        aggregation: "per-instance mean over scored instances",
        report,
        instances,
    })
}

fn evaluate_instance<R: Real>(
    entry: &DatasetEntry,
    cfg: &RsaConfig<R>,
    theta: &ThresholdTable<R>,
    lm: &LanguageModel<R>,
) -> InstanceRow<R> {
    let scene_name = entry.scene.display().to_string();
    match run_pipeline(entry, cfg, theta, lm) {
        Ok(row) => row,
        Err(message) => InstanceRow {
            scene: scene_name,
            outcome: Outcome::NoMatch,
            expression: None,
            bleu: None,
            rouge_l: None,
            meteor: None,
            listener_correct: None,
            error: Some(message),
        },
    }
}

fn run_pipeline<R: Real>(
    entry: &DatasetEntry,
    cfg: &RsaConfig<R>,
    theta: &ThresholdTable<R>,
    lm: &LanguageModel<R>,
) -> Result<InstanceRow<R>, String> {
    let bytes = fs::read(&entry.scene).map_err(|e| format!("read: {e}"))?;
    let scene = scene::parse_scene::<R>(&bytes).map_err(|e| e.to_string())?;
    let prepared = prep::prepare(scene).map_err(|e| e.to_string())?;
    let space = semantics::categorize(&prepared, theta).map_err(|e| e.to_string())?;
    let prior = semantics::salience_prior(&prepared.scene).map_err(|e| e.to_string())?;
    let target = prepared.alignment.target_id.clone();
    let (expression, _trace) =
        rsa::generate(&space, &target, &prior, lm, cfg).map_err(|e| e.to_string())?;

    let outcome = classify(expression.descriptors(), &target, &prepared.alignment);
    let listener_correct = rsa::pragmatic_listener(expression.descriptors(), &prior, &space, lm, cfg)
        .ok()
        .and_then(|posterior| posterior.argmax().map(|id| *id == target));

    let (b, r, m) = score_against_references(&expression, &entry.references);
    Ok(InstanceRow {
        scene: entry.scene.display().to_string(),
        outcome,
        expression: Some(expression.text()),
        bleu: b,
        rouge_l: r,
        meteor: m,
        listener_correct,
        error: None,
    })
}

fn score_against_references<R: Real>(
    expression: &Expression,
    references: &[String],
) -> (Option<R>, Option<R>, Option<R>) {
    let refs: Vec<Vec<String>> = references
        .iter()
        .map(|r| r.split_whitespace().map(str::to_lowercase).collect())
        .filter(|r: &Vec<String>| !r.is_empty())
        .collect();
    if refs.is_empty() {
        return (None, None, None);
    }
    let cand = expression.rendered().to_vec();
    (
        bleu(&cand, &refs, 4).ok(),
        rouge_l(&cand, &refs).ok(),
        meteor_exact(&cand, &refs).ok(),
    )
}

fn aggregate<R: Real>(instances: &[InstanceRow<R>]) -> MetricsReport<R> {
    let mut counts = OutcomeCounts::default();
    let mut bleu_sum = R::zero();
    let mut rouge_sum = R::zero();
    let mut meteor_sum = R::zero();
    let mut n_scored = 0usize;
    let mut listener_hits = 0usize;
    let mut n_errored = 0usize;

    for row in instances {
        counts.add(row.outcome);
        if row.error.is_some() {
            n_errored += 1;
        }
        if let (Some(b), Some(r), Some(m)) = (row.bleu, row.rouge_l, row.meteor) {
            bleu_sum += b;
            rouge_sum += r;
            meteor_sum += m;
            n_scored += 1;
        }
        if row.listener_correct == Some(true) {
            listener_hits += 1;
        }
    }

    let n = instances.len();
    let n_r = R::from_usize(n).unwrap();
    let mean = |sum: R| {
        if n_scored > 0 {
            sum / R::from_usize(n_scored).unwrap()
        } else {
            R::zero()
        }
    };
    MetricsReport {
        n_instances: n,
        counts,
        raw_accuracy: R::from_usize(counts.true_).unwrap() / n_r,
        adjusted_accuracy: adjusted_accuracy(
            R::from_usize(counts.true_).unwrap(),
            R::from_usize(counts.false_).unwrap(),
            R::from_usize(counts.under_informative).unwrap(),
        ),
        bleu: mean(bleu_sum),
        rouge_l: mean(rouge_sum),
        meteor: mean(meteor_sum),
        n_scored,
        listener_accuracy: R::from_usize(listener_hits).unwrap() / n_r,
        n_errored,
    }
}
