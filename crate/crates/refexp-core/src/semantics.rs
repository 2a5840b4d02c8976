//! Threshold semantics: graded scores to categorical truth.
//!
//! A descriptor is a single predicate the speaker can utter — a type,
//! attribute, grounded relation, or ordinal — together with its extension,
//! the set of objects it is literally true of. Extensions are fixed here,
//! once, by comparing scores against the threshold table; everything
//! downstream reasons over categorical truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prep::PreparedScene;
use crate::scene::{GradedScene, ObjectId};
use crate::{real, Real};

/// Cutoffs for truthful application of a label to an object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable<R> {
    pub theta_type: R,
    pub theta_attr: R,
    pub theta_rel: R,
}

impl<R: Real> Default for ThresholdTable<R> {
    fn default() -> Self {
        ThresholdTable {
            theta_type: real(0.3),
            theta_attr: real(0.3),
            theta_rel: real(0.5),
        }
    }
}

impl<R: Real> ThresholdTable<R> {
    pub fn validate(&self) -> Result<(), SemanticsError> {
        for (name, v) in [
            ("theta.type", self.theta_type),
            ("theta.attr", self.theta_attr),
            ("theta.rel", self.theta_rel),
        ] {
            if !v.is_finite() || v < R::zero() || v > R::one() {
                return Err(SemanticsError::InvalidThreshold {
                    name,
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }
}

/// What kind of predicate a descriptor is.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Type,
    Attribute,
    Relation,
    Ordinal,
}

/// A single predicate with its literal extension.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Descriptor {
    pub kind: DescriptorKind,
    /// Lowercase word sequence, e.g. "with frisbee", "second from left".
    pub surface: String,
    /// Objects the predicate is true of. Never empty inside a space.
    pub extension: BTreeSet<ObjectId>,
}

impl Descriptor {
    pub fn is_true_of(&self, id: &ObjectId) -> bool {
        self.extension.contains(id)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.surface.split_whitespace()
    }

    pub fn word_count(&self) -> usize {
        self.words().count()
    }
}

/// Literal truth of a descriptor for an object of the scene: 1 or 0.
pub fn truth<R: Real>(
    scene: &GradedScene<R>,
    descriptor: &Descriptor,
    id: &ObjectId,
) -> Result<u8, SemanticsError> {
    if !scene.contains(id) {
        return Err(SemanticsError::UnknownObject { id: id.clone() });
    }
    Ok(u8::from(descriptor.is_true_of(id)))
}

/// The utterance space: deduplicated descriptors in a fixed canonical order
/// (kind, then surface), which greedy tie-breaking relies on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescriptorSpace {
    descriptors: Vec<Descriptor>,
}

impl DescriptorSpace {
    /// Assemble a space directly: descriptors sharing (kind, surface) merge
    /// extensions, empty extensions are dropped, and the result is sorted
    /// into canonical order.
    pub fn from_descriptors(descriptors: impl IntoIterator<Item = Descriptor>) -> Self {
        let mut table: BTreeMap<(DescriptorKind, String), BTreeSet<ObjectId>> = BTreeMap::new();
        for d in descriptors {
            table
                .entry((d.kind, d.surface))
                .or_default()
                .extend(d.extension);
        }
        let descriptors = table
            .into_iter()
            .filter(|(_, ext)| !ext.is_empty())
            .map(|((kind, surface), extension)| Descriptor {
                kind,
                surface,
                extension,
            })
            .collect();
        DescriptorSpace { descriptors }
    }

    pub fn descriptors(&self) -> &[Descriptor] {
        &self.descriptors
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Descriptor> {
        self.descriptors.iter()
    }

    pub fn find(&self, kind: DescriptorKind, surface: &str) -> Option<&Descriptor> {
        self.descriptors
            .iter()
            .find(|d| d.kind == kind && d.surface == surface)
    }

    /// Map a word sequence onto descriptors by greedy longest match.
    ///
    /// Articles are skipped; words that start no known surface are returned
    /// as unresolved. Used by the comprehension side, where expressions
    /// arrive as plain text.
    pub fn resolve_words<'a>(&'a self, words: &[&str]) -> ResolvedWords<'a> {
        let mut descriptors: Vec<&'a Descriptor> = Vec::new();
        let mut unresolved = Vec::new();
        let mut i = 0;
        while i < words.len() {
            if matches!(words[i], "the" | "a" | "an") {
                i += 1;
                continue;
            }
            let mut best: Option<(&Descriptor, usize)> = None;
            for d in &self.descriptors {
                let ws: Vec<&str> = d.words().collect();
                if ws.len() > words.len() - i || ws.is_empty() {
                    continue;
                }
                if ws.iter().zip(&words[i..]).all(|(a, b)| a == b) {
                    let better = match best {
                        Some((_, n)) => ws.len() > n,
                        None => true,
                    };
                    if better {
                        best = Some((d, ws.len()));
                    }
                }
            }
            match best {
                Some((d, n)) => {
                    if !descriptors.contains(&d) {
                        descriptors.push(d);
                    }
                    i += n;
                }
                None => {
                    unresolved.push(words[i].to_owned());
                    i += 1;
                }
            }
        }
        ResolvedWords {
            descriptors,
            unresolved,
        }
    }
}

/// Result of mapping free text onto a descriptor space.
#[derive(Debug)]
pub struct ResolvedWords<'a> {
    pub descriptors: Vec<&'a Descriptor>,
    pub unresolved: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("scene yields no descriptors")]
    NoDescriptors,
    #[error("unknown object id {id}")]
    UnknownObject { id: ObjectId },
    #[error("scene has no objects")]
    EmptyScene,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("threshold {name} out of range: {value}")]
    InvalidThreshold { name: &'static str, value: f64 },
}

/// Build the utterance space for a prepared scene.
///
/// One Type descriptor per type label that clears `theta_type` somewhere,
/// Attributes analogously, one Ordinal per synthesized label, and one
/// Relation descriptor per (predicate, related-object class) pair whose
/// relation score clears `theta_rel`. Descriptors sharing (kind, surface)
/// merge extensions; empty extensions never occur by construction.
pub fn categorize<R: Real>(
    prepared: &PreparedScene<R>,
    theta: &ThresholdTable<R>,
) -> Result<DescriptorSpace, SemanticsError> {
    theta.validate()?;
    let scene = &prepared.scene;
    let mut table: BTreeMap<(DescriptorKind, String), BTreeSet<ObjectId>> = BTreeMap::new();

    for obj in &scene.objects {
        for (label, &score) in &obj.type_scores {
            if score >= theta.theta_type {
                table
                    .entry((DescriptorKind::Type, normalize_surface(label)))
                    .or_default()
                    .insert(obj.id.clone());
            }
        }
        for (label, &score) in &obj.attribute_scores {
            if score >= theta.theta_attr {
                table
                    .entry((DescriptorKind::Attribute, normalize_surface(label)))
                    .or_default()
                    .insert(obj.id.clone());
            }
        }
    }

    for (id, label) in &prepared.ordinals {
        table
            .entry((DescriptorKind::Ordinal, normalize_surface(label)))
            .or_default()
            .insert(id.clone());
    }

    for rel in &scene.relations {
        if rel.score < theta.theta_rel {
            continue;
        }
        let class = scene
            .object(&rel.object)
            .and_then(|o| o.argmax_type())
            .ok_or_else(|| SemanticsError::UnknownObject {
                id: rel.object.clone(),
            })?;
        let surface = normalize_surface(&format!("{} {}", rel.predicate, class));
        table
            .entry((DescriptorKind::Relation, surface))
            .or_default()
            .insert(rel.subject.clone());
    }

    let space = DescriptorSpace::from_descriptors(table.into_iter().map(
        |((kind, surface), extension)| Descriptor {
            kind,
            surface,
            extension,
        },
    ));
    if space.is_empty() {
        return Err(SemanticsError::NoDescriptors);
    }
    Ok(space)
}

fn normalize_surface(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// A probability distribution over object identifiers.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution<R> {
    probs: BTreeMap<ObjectId, R>,
}

impl<R: Real> Distribution<R> {
    const SUM_TOLERANCE: f64 = 1e-9;

    /// Wrap an already-normalized probability map, validating it.
    pub fn new(probs: BTreeMap<ObjectId, R>) -> Result<Self, SemanticsError> {
        if probs.is_empty() {
            return Err(SemanticsError::InvalidDistribution("empty".to_owned()));
        }
        let mut sum = R::zero();
        for (id, &p) in &probs {
            if !p.is_finite() || p < R::zero() {
                return Err(SemanticsError::InvalidDistribution(format!(
                    "negative or non-finite probability for {id}"
                )));
            }
            sum += p;
        }
        if (sum - R::one()).abs() > real(Self::SUM_TOLERANCE) {
            return Err(SemanticsError::InvalidDistribution(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Distribution { probs })
    }

    /// Normalize non-negative weights into a distribution.
    pub fn from_weights(weights: BTreeMap<ObjectId, R>) -> Result<Self, SemanticsError> {
        let mut total = R::zero();
        for (id, &w) in &weights {
            if !w.is_finite() || w < R::zero() {
                return Err(SemanticsError::InvalidDistribution(format!(
                    "negative or non-finite weight for {id}"
                )));
            }
            total += w;
        }
        if total <= R::zero() {
            return Err(SemanticsError::InvalidDistribution(
                "all weights are zero".to_owned(),
            ));
        }
        let probs = weights.into_iter().map(|(id, w)| (id, w / total)).collect();
        Ok(Distribution { probs })
    }

    pub fn prob(&self, id: &ObjectId) -> R {
        self.probs.get(id).copied().unwrap_or_else(R::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ObjectId, R)> {
        self.probs.iter().map(|(id, &p)| (id, p))
    }

    pub fn ids(&self) -> impl Iterator<Item = &ObjectId> {
        self.probs.keys()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn in_support(&self, id: &ObjectId) -> bool {
        self.prob(id) > R::zero()
    }

    pub fn support(&self) -> impl Iterator<Item = &ObjectId> {
        self.probs
            .iter()
            .filter(|(_, &p)| p > R::zero())
            .map(|(id, _)| id)
    }

    /// The most probable id; ties go to the lexicographically first.
    pub fn argmax(&self) -> Option<&ObjectId> {
        let mut best: Option<(&ObjectId, R)> = None;
        for (id, &p) in &self.probs {
            match best {
                Some((_, bp)) if p <= bp => {}
                _ => best = Some((id, p)),
            }
        }
        best.map(|(id, _)| id)
    }

    /// Shannon entropy in bits, with 0·log 0 = 0.
    pub fn entropy_bits(&self) -> R {
        let mut h = R::zero();
        for &p in self.probs.values() {
            if p > R::zero() {
                h = h - p * p.log2();
            }
        }
        h
    }
}

/// Prior over objects proportional to salience, defined as box area.
pub fn salience_prior<R: Real>(scene: &GradedScene<R>) -> Result<Distribution<R>, SemanticsError> {
    if scene.objects.is_empty() {
        return Err(SemanticsError::EmptyScene);
    }
    let weights = scene
        .objects
        .iter()
        .map(|o| (o.id.clone(), o.area()))
        .collect();
    Distribution::from_weights(weights)
}
