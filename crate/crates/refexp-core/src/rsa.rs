//! The iterative RSA speaker and its listeners.
//!
//! One descriptor is emitted per step: the literal listener reweights the
//! object prior by categorical truth, the speaker scores candidates by
//! `log(P_L0(target|u) + P_ngram(u|E)) + cost(u)` and picks via softmax
//! (greedy argmax or seeded sampling), and the loop stops once the
//! listener's belief entropy falls to the stop threshold or the length
//! budget runs out. The pragmatic listener inverts the speaker for
//! comprehension.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ngram::LanguageModel;
use crate::scene::ObjectId;
use crate::semantics::{Descriptor, DescriptorKind, DescriptorSpace, Distribution};
use crate::{real, Real};

/// Descriptor choice policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Greedy,
    Sample,
}

/// Whether the n-gram bonus participates in the utility.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmWeight {
    #[default]
    On,
    Off,
}

/// Knobs of the iterative speaker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsaConfig<R> {
    /// Speaker rationality; 0 means indifferent.
    pub alpha: R,
    /// Maximum descriptors per expression (T).
    pub max_len: usize,
    /// Stop once listener entropy is at or below this many bits (K).
    pub entropy_stop: R,
    /// Brevity pressure: cost(u) = -beta * word_count(u).
    pub cost_weight: R,
    pub mode: Mode,
    /// Generator seed, used in `Sample` mode.
    pub seed: u64,
    pub lm_weight: LmWeight,
}

impl<R: Real> Default for RsaConfig<R> {
    fn default() -> Self {
        RsaConfig {
            alpha: R::one(),
            max_len: 4,
            entropy_stop: real(0.1),
            cost_weight: R::zero(),
            mode: Mode::Greedy,
            seed: 0,
            lm_weight: LmWeight::On,
        }
    }
}

impl<R: Real> RsaConfig<R> {
    pub fn validate(&self) -> Result<(), RsaError> {
        if !self.alpha.is_finite() || self.alpha < R::zero() {
            return Err(RsaError::InvalidConfig("alpha must be >= 0".to_owned()));
        }
        if self.max_len < 1 {
            return Err(RsaError::InvalidConfig("max_len must be >= 1".to_owned()));
        }
        if !self.entropy_stop.is_finite() || self.entropy_stop < R::zero() {
            return Err(RsaError::InvalidConfig(
                "entropy_stop must be >= 0".to_owned(),
            ));
        }
        if !self.cost_weight.is_finite() || self.cost_weight < R::zero() {
            return Err(RsaError::InvalidConfig("beta must be >= 0".to_owned()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RsaError {
    #[error("descriptor eliminates all candidates")]
    DescriptorEliminatesAll,
    #[error("speaker has no utterable descriptor")]
    NoUtterableDescriptor,
    #[error("expression incompatible with scene")]
    ExpressionIncompatible,
    #[error("target {id} not in prior support")]
    TargetNotInSupport { id: ObjectId },
    #[error("expression must be non-empty")]
    EmptyExpression,
    #[error("duplicate descriptor {surface:?} in expression")]
    DuplicateDescriptor { surface: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// An ordered descriptor sequence with its surface realization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Expression {
    descriptors: Vec<Descriptor>,
    rendered: Vec<String>,
}

impl Expression {
    /// Build from descriptors in generation order; rejects duplicates.
    pub fn new(descriptors: Vec<Descriptor>) -> Result<Self, RsaError> {
        if descriptors.is_empty() {
            return Err(RsaError::EmptyExpression);
        }
        for (i, d) in descriptors.iter().enumerate() {
            if descriptors[..i]
                .iter()
                .any(|p| p.kind == d.kind && p.surface == d.surface)
            {
                return Err(RsaError::DuplicateDescriptor {
                    surface: d.surface.clone(),
                });
            }
        }
        let rendered = render(&descriptors);
        Ok(Expression {
            descriptors,
            rendered,
        })
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

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.descriptors.iter().map(|d| d.surface.as_str())
    }

    pub fn contains_surface(&self, surface: &str) -> bool {
        self.surfaces().any(|s| s == surface)
    }

    /// Realized word sequence.
    pub fn rendered(&self) -> &[String] {
        &self.rendered
    }

    /// Realized phrase.
    pub fn text(&self) -> String {
        self.rendered.join(" ")
    }
}

/// Realize descriptors as words: ordinals, then attributes, the type(s),
/// then relations, each group in generation order; "the" is prepended
/// exactly when an ordinal is present.
pub fn render(descriptors: &[Descriptor]) -> Vec<String> {
    let mut words = Vec::new();
    let has_ordinal = descriptors
        .iter()
        .any(|d| d.kind == DescriptorKind::Ordinal);
    if has_ordinal {
        words.push("the".to_owned());
    }
    for kind in [
        DescriptorKind::Ordinal,
        DescriptorKind::Attribute,
        DescriptorKind::Type,
        DescriptorKind::Relation,
    ] {
        for d in descriptors.iter().filter(|d| d.kind == kind) {
            words.extend(d.words().map(str::to_owned));
        }
    }
    words
}

/// Words uttered so far, in generation order; the LM conditions on these.
pub fn history_words(history: &[Descriptor]) -> Vec<String> {
    history
        .iter()
        .flat_map(|d| d.words().map(str::to_owned))
        .collect()
}

/// Eq-style literal listener: zero out objects the descriptor is false of,
/// renormalize the rest.
pub fn literal_listener<R: Real>(
    descriptor: &Descriptor,
    prior: &Distribution<R>,
) -> Result<Distribution<R>, RsaError> {
    let mut weights = BTreeMap::new();
    let mut any = false;
    for (id, p) in prior.iter() {
        let w = if descriptor.is_true_of(id) {
            p
        } else {
            R::zero()
        };
        if w > R::zero() {
            any = true;
        }
        weights.insert(id.clone(), w);
    }
    if !any {
        return Err(RsaError::DescriptorEliminatesAll);
    }
    Ok(Distribution::from_weights(weights).expect("positive mass remains"))
}

/// Speaker utility of uttering `descriptor` for `target` after `history`:
/// `log(P_L0(target|u) + P_ngram(u|E)) + cost(u)`, −∞ when both terms
/// inside the log are zero.
pub fn utility<R: Real>(
    descriptor: &Descriptor,
    target: &ObjectId,
    prior: &Distribution<R>,
    history: &[Descriptor],
    lm: &LanguageModel<R>,
    cfg: &RsaConfig<R>,
) -> R {
    let mut denom = R::zero();
    for (id, p) in prior.iter() {
        if descriptor.is_true_of(id) {
            denom += p;
        }
    }
    let literal = if descriptor.is_true_of(target) && denom > R::zero() {
        prior.prob(target) / denom
    } else {
        R::zero()
    };
    let ngram = match cfg.lm_weight {
        LmWeight::Off => R::zero(),
        LmWeight::On => lm.descriptor_prob(descriptor, &history_words(history)),
    };
    let inner = literal + ngram;
    if inner > R::zero() {
        let cost = -cfg.cost_weight * R::from_usize(descriptor.word_count()).unwrap();
        inner.ln() + cost
    } else {
        R::neg_infinity()
    }
}

/// Softmax of `alpha`-scaled utilities; −∞ entries get probability exactly 0.
/// Errors when nothing has finite utility.
pub fn speaker_softmax<R: Real>(utilities: &[R], alpha: R) -> Result<Vec<R>, RsaError> {
    let scaled: Vec<R> = utilities
        .iter()
        .map(|&u| if u.is_finite() { alpha * u } else { u })
        .collect();
    let max = scaled
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(None, |acc: Option<R>, s| match acc {
            Some(m) if m >= s => Some(m),
            _ => Some(s),
        });
    let Some(max) = max else {
        return Err(RsaError::NoUtterableDescriptor);
    };
    let weights: Vec<R> = scaled
        .iter()
        .map(|&s| {
            if s.is_finite() {
                (s - max).exp()
            } else {
                R::zero()
            }
        })
        .collect();
    let z: R = weights.iter().copied().sum();
    Ok(weights.into_iter().map(|w| w / z).collect())
}

/// The pragmatic speaker's distribution over utterable candidates.
#[derive(Clone, Debug)]
pub struct SpeakerDistribution<R> {
    /// Indices into the caller's candidate slice, in original order.
    pub indices: Vec<usize>,
    pub utilities: Vec<R>,
    pub probs: Vec<R>,
}

impl<R: Real> SpeakerDistribution<R> {
    /// Greedy choice: position (into `indices`) of the highest utility,
    /// earliest on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &u) in self.utilities.iter().enumerate() {
            if u > self.utilities[best] {
                best = i;
            }
        }
        best
    }

    /// Seeded draw from the distribution.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let r: f64 = rng.gen();
        let mut cum = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            cum += p.to_f64().unwrap_or(0.0);
            if r < cum {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Score candidates for `target`: prune those sharing no extension with the
/// prior's support or already uttered, then softmax the utilities.
pub fn pragmatic_speaker<R: Real>(
    target: &ObjectId,
    prior: &Distribution<R>,
    candidates: &[&Descriptor],
    history: &[Descriptor],
    lm: &LanguageModel<R>,
    cfg: &RsaConfig<R>,
) -> Result<SpeakerDistribution<R>, RsaError> {
    let mut indices = Vec::new();
    let mut utilities = Vec::new();
    for (i, d) in candidates.iter().enumerate() {
        let uttered = history
            .iter()
            .any(|h| h.kind == d.kind && h.surface == d.surface);
        if uttered {
            continue;
        }
        let overlaps = prior.support().any(|id| d.is_true_of(id));
        if !overlaps {
            continue;
        }
        indices.push(i);
        utilities.push(utility(d, target, prior, history, lm, cfg));
    }
    if indices.is_empty() {
        return Err(RsaError::NoUtterableDescriptor);
    }
    let probs = speaker_softmax(&utilities, cfg.alpha)?;
    Ok(SpeakerDistribution {
        indices,
        utilities,
        probs,
    })
}

/// Comprehension: apply the pragmatic listener descriptor by descriptor,
/// mirroring generation. Each step reweights the belief by the probability
/// that a speaker aiming at each object would have said the descriptor.
pub fn pragmatic_listener<R: Real>(
    expression: &[Descriptor],
    prior: &Distribution<R>,
    space: &DescriptorSpace,
    lm: &LanguageModel<R>,
    cfg: &RsaConfig<R>,
) -> Result<Distribution<R>, RsaError> {
    cfg.validate()?;
    if expression.is_empty() {
        return Err(RsaError::EmptyExpression);
    }
    let candidates: Vec<&Descriptor> = space.iter().collect();
    let mut belief = prior.clone();
    for t in 0..expression.len() {
        let uttered = &expression[t];
        let history = &expression[..t];
        let mut weights = BTreeMap::new();
        for (id, p) in belief.iter() {
            let w = if p > R::zero() {
                let speaker_prob =
                    match pragmatic_speaker(id, &belief, &candidates, history, lm, cfg) {
                        Ok(speaker) => speaker
                            .indices
                            .iter()
                            .position(|&ci| {
                                candidates[ci].kind == uttered.kind
                                    && candidates[ci].surface == uttered.surface
                            })
                            .map(|pos| speaker.probs[pos])
                            .unwrap_or_else(R::zero),
                        Err(RsaError::NoUtterableDescriptor) => R::zero(),
                        Err(e) => return Err(e),
                    };
                speaker_prob * p
            } else {
                R::zero()
            };
            weights.insert(id.clone(), w);
        }
        belief =
            Distribution::from_weights(weights).map_err(|_| RsaError::ExpressionIncompatible)?;
    }
    Ok(belief)
}

/// Per-candidate scores recorded for one generation step.
#[derive(Clone, Debug, Serialize)]
pub struct CandidateScore<R> {
    pub kind: DescriptorKind,
    pub surface: String,
    /// P_L0(target | u) under the step's prior.
    pub literal: R,
    /// P_ngram(u | E) given the history so far.
    pub ngram: R,
    pub cost: R,
    pub utility: R,
    pub speaker_prob: R,
}

/// One step of the generation loop.
#[derive(Clone, Debug, Serialize)]
pub struct TraceStep<R> {
    pub step: usize,
    pub entropy_before: R,
    /// Utterable candidates after pruning, in space order.
    pub candidates: Vec<CandidateScore<R>>,
    /// Index of the chosen candidate within `candidates`.
    pub chosen: usize,
    pub posterior: Distribution<R>,
    pub entropy_after: R,
}

/// Full record of a generation run; the explainability surface.
#[derive(Clone, Debug, Serialize)]
pub struct GenerationTrace<R> {
    pub steps: Vec<TraceStep<R>>,
    /// Set when the speaker ran out of descriptors before the entropy stop.
    pub truncated: bool,
}

/// Iterative RSA generation.
///
/// Runs at most `max_len` steps, stopping early once the listener's entropy
/// is at or below `entropy_stop` — except that the first step always runs,
/// so the expression is never empty. If the speaker runs dry mid-way, the
/// expression built so far is returned with the trace marked truncated.
pub fn generate<R: Real>(
    space: &DescriptorSpace,
    target: &ObjectId,
    prior: &Distribution<R>,
    lm: &LanguageModel<R>,
    cfg: &RsaConfig<R>,
) -> Result<(Expression, GenerationTrace<R>), RsaError> {
    cfg.validate()?;
    if !prior.in_support(target) {
        return Err(RsaError::TargetNotInSupport { id: target.clone() });
    }

    let candidates: Vec<&Descriptor> = space.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut belief = prior.clone();
    let mut chosen: Vec<Descriptor> = Vec::new();
    let mut steps = Vec::new();
    let mut truncated = false;

    for step in 1..=cfg.max_len {
        let entropy_before = belief.entropy_bits();
        if step > 1 && entropy_before <= cfg.entropy_stop {
            break;
        }
        let speaker = match pragmatic_speaker(target, &belief, &candidates, &chosen, lm, cfg) {
            Ok(s) => s,
            Err(RsaError::NoUtterableDescriptor) if !chosen.is_empty() => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let pick = match cfg.mode {
            Mode::Greedy => speaker.argmax(),
            Mode::Sample => speaker.sample(&mut rng),
        };
        let descriptor = candidates[speaker.indices[pick]].clone();
        let posterior = literal_listener(&descriptor, &belief)?;

        let records = speaker
            .indices
            .iter()
            .zip(&speaker.utilities)
            .zip(&speaker.probs)
            .map(|((&ci, &u), &p)| {
                let d = candidates[ci];
                let ngram = match cfg.lm_weight {
                    LmWeight::Off => R::zero(),
                    LmWeight::On => lm.descriptor_prob(d, &history_words(&chosen)),
                };
                let mut denom = R::zero();
                for (id, pr) in belief.iter() {
                    if d.is_true_of(id) {
                        denom += pr;
                    }
                }
                let literal = if d.is_true_of(target) && denom > R::zero() {
                    belief.prob(target) / denom
                } else {
                    R::zero()
                };
                CandidateScore {
                    kind: d.kind,
                    surface: d.surface.clone(),
                    literal,
                    ngram,
                    cost: -cfg.cost_weight * R::from_usize(d.word_count()).unwrap(),
                    utility: u,
                    speaker_prob: p,
                }
            })
            .collect();

        steps.push(TraceStep {
            step,
            entropy_before,
            candidates: records,
            chosen: pick,
            posterior: posterior.clone(),
            entropy_after: posterior.entropy_bits(),
        });
        belief = posterior;
        chosen.push(descriptor);
    }

    let expression = Expression::new(chosen)?;
    Ok((expression, GenerationTrace { steps, truncated }))
}
