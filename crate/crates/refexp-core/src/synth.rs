//! Seeded synthetic scenes with known discriminability, plus the naive
//! brute-force oracle used in equivalence tests.
//!
//! The generator builds scenes the default threshold table interprets in a
//! controlled way: a guarantee states whether (and how) a descriptor
//! separating the target from its rivals exists. Indistinguishable pairs
//! use crossed type scores — both labels clear the threshold on both
//! objects while the argmax classes differ — so ordinal labels, which
//! always separate same-category pairs, never break the ambiguity.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ngram::LanguageModel;
use crate::rsa::{LmWeight, RsaConfig};
use crate::scene::{BoundingBox, GradedObject, GradedRelation, GradedScene, ObjectId, TargetSpec};
use crate::semantics::{DescriptorKind, DescriptorSpace, Distribution};
use crate::{real, Real};

const TYPE_POOL: [&str; 10] = [
    "dog", "cat", "train", "pizza", "car", "bird", "chair", "plant", "boat", "horse",
];
const ATTR_POOL: [&str; 10] = [
    "red", "small", "fluffy", "cooking", "striped", "shiny", "old", "bright", "wet", "tall",
];
const PRED_POOL: [&str; 4] = ["with", "near", "holding", "on"];

const IMAGE_W: f64 = 320.0;
const IMAGE_H: f64 = 240.0;
const MAX_OBJECTS: usize = 8;

// Guarantees are stated relative to the default thresholds.
const THETA_TYPE: f64 = 0.3;
const THETA_ATTR: f64 = 0.3;
const THETA_REL: f64 = 0.5;

/// What kind of separating descriptor the generated scene provides.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Guarantee {
    /// The target's argmax type is held by no other object.
    UniqueType,
    /// Exactly one above-threshold attribute separates the target from all
    /// same-type objects.
    UniqueAttribute,
    /// Only a relation separates the target from its crossed-type twin.
    RelationOnly,
    /// No descriptor subset separates the target from its twin.
    Ambiguous,
}

/// Generation knobs. Guarantees hold under the default [`crate::semantics::ThresholdTable`].
#[derive(Clone, Debug)]
pub struct SynthParams {
    pub n_objects: RangeInclusive<usize>,
    /// Size of the filler type-label vocabulary.
    pub n_types: RangeInclusive<usize>,
    /// Attributes drawn per object.
    pub n_attributes: RangeInclusive<usize>,
    /// Extra relations among filler objects.
    pub n_relations: RangeInclusive<usize>,
    /// Jitter amplitude of scores inside their threshold band, in [0, 1].
    pub score_noise: f64,
    pub guarantee: Guarantee,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_objects: 2..=6,
            n_types: 2..=4,
            n_attributes: 0..=2,
            n_relations: 0..=2,
            score_noise: 0.5,
            guarantee: Guarantee::UniqueType,
            seed: 0,
        }
    }
}

/// A generated scene with the identities its guarantee is stated about.
#[derive(Clone, Debug)]
pub struct SynthScene<R> {
    pub scene: GradedScene<R>,
    pub target_id: ObjectId,
    /// The indistinguishable partner, when the guarantee creates one.
    pub twin_id: Option<ObjectId>,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible synth params: {0}")]
    Infeasible(String),
    #[error("oracle bounds exceeded: {0}")]
    OracleBounds(String),
    #[error("oracle speaker has no utterable descriptor at the first step")]
    OracleStuck,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Target,
    Twin,
    Distractor,
    Relatum,
    Filler,
}

/// Deterministically generate a scene honoring the requested guarantee.
pub fn generate_scene<R: Real>(params: &SynthParams) -> Result<SynthScene<R>, SynthError> {
    validate_params(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = params.score_noise.clamp(0.0, 1.0);

    let min_objects = match params.guarantee {
        Guarantee::UniqueType | Guarantee::Ambiguous | Guarantee::UniqueAttribute => 2,
        Guarantee::RelationOnly => 3,
    };
    let n = sample_range(&mut rng, &params.n_objects)
        .max(min_objects)
        .min(MAX_OBJECTS);

    // Roles over slots, shuffled so the target lands anywhere.
    let mut roles = vec![Role::Filler; n];
    match params.guarantee {
        Guarantee::UniqueType => {
            roles[0] = Role::Target;
        }
        Guarantee::UniqueAttribute => {
            roles[0] = Role::Target;
            let distractors = 1 + sample_range(&mut rng, &(0..=(n - 2).min(1)));
            for slot in roles.iter_mut().take(1 + distractors).skip(1) {
                *slot = Role::Distractor;
            }
        }
        Guarantee::RelationOnly => {
            roles[0] = Role::Target;
            roles[1] = Role::Twin;
            roles[2] = Role::Relatum;
        }
        Guarantee::Ambiguous => {
            roles[0] = Role::Target;
            roles[1] = Role::Twin;
        }
    }
    roles.shuffle(&mut rng);

    let mut type_pool: Vec<&str> = TYPE_POOL.to_vec();
    type_pool.shuffle(&mut rng);
    let mut attr_pool: Vec<&str> = ATTR_POOL.to_vec();
    attr_pool.shuffle(&mut rng);

    let filler_label_count = sample_range(&mut rng, &params.n_types).max(1);
    // Specials reserve the first few labels; fillers cycle over the rest.
    let (special_labels, rest) = type_pool.split_at(3);
    let filler_labels: Vec<&str> = rest.iter().copied().take(filler_label_count).collect();

    let above_t = |rng: &mut ChaCha8Rng| band(rng, THETA_TYPE + 0.05, 0.95, noise);
    let lo_above_t = |rng: &mut ChaCha8Rng| band(rng, THETA_TYPE + 0.05, 0.55, noise);
    let hi_above_t = |rng: &mut ChaCha8Rng| band(rng, 0.75, 0.95, noise);
    let below_t = |rng: &mut ChaCha8Rng| band(rng, 0.02, THETA_TYPE - 0.05, noise);
    let above_a = |rng: &mut ChaCha8Rng| band(rng, THETA_ATTR + 0.05, 0.95, noise);
    let below_a = |rng: &mut ChaCha8Rng| band(rng, 0.02, THETA_ATTR - 0.05, noise);
    let above_r = |rng: &mut ChaCha8Rng| band(rng, THETA_REL + 0.05, 0.95, noise);
    let below_r = |rng: &mut ChaCha8Rng| band(rng, 0.05, THETA_REL - 0.05, noise);

    // Shared attribute pattern for twin constructions.
    let pair_attr: Option<(&str, f64)> = if rng.gen_bool(0.5) {
        let label = attr_pool[0];
        let score = if rng.gen_bool(0.5) {
            above_a(&mut rng)
        } else {
            below_a(&mut rng)
        };
        Some((label, score))
    } else {
        None
    };
    let unique_attr = attr_pool[0];
    let extra_attrs: Vec<&str> = attr_pool[1..].to_vec();

    let mut objects: Vec<GradedObject<R>> = Vec::with_capacity(n);
    let mut target_id = None;
    let mut twin_id = None;
    let mut relatum_id = None;
    let mut filler_ids: Vec<ObjectId> = Vec::new();

    for (i, role) in roles.iter().enumerate() {
        let id = ObjectId::new(format!("o{i}"));
        let bbox = slot_box(&mut rng, i);
        let mut types: BTreeMap<String, f64> = BTreeMap::new();
        let mut attrs: BTreeMap<String, f64> = BTreeMap::new();

        match (params.guarantee, role) {
            (Guarantee::UniqueType, Role::Target) => {
                types.insert(special_labels[0].to_owned(), above_t(&mut rng));
            }
            (Guarantee::UniqueType, Role::Filler) => {
                let label = filler_labels[i % filler_labels.len()];
                types.insert(label.to_owned(), above_t(&mut rng));
                if rng.gen_bool(0.3) {
                    types.insert(special_labels[0].to_owned(), below_t(&mut rng));
                }
            }
            (Guarantee::UniqueAttribute, Role::Target) => {
                types.insert(special_labels[0].to_owned(), above_t(&mut rng));
                attrs.insert(unique_attr.to_owned(), above_a(&mut rng));
            }
            (Guarantee::UniqueAttribute, Role::Distractor) => {
                types.insert(special_labels[0].to_owned(), above_t(&mut rng));
                if rng.gen_bool(0.4) {
                    attrs.insert(unique_attr.to_owned(), below_a(&mut rng));
                }
            }
            (Guarantee::UniqueAttribute, Role::Filler) => {
                let label = filler_labels[i % filler_labels.len()];
                types.insert(label.to_owned(), above_t(&mut rng));
            }
            (Guarantee::RelationOnly | Guarantee::Ambiguous, Role::Target) => {
                types.insert(special_labels[0].to_owned(), hi_above_t(&mut rng));
                types.insert(special_labels[1].to_owned(), lo_above_t(&mut rng));
                if let Some((label, score)) = pair_attr {
                    attrs.insert(label.to_owned(), score);
                }
            }
            (Guarantee::RelationOnly | Guarantee::Ambiguous, Role::Twin) => {
                types.insert(special_labels[0].to_owned(), lo_above_t(&mut rng));
                types.insert(special_labels[1].to_owned(), hi_above_t(&mut rng));
                if let Some((label, score)) = pair_attr {
                    attrs.insert(label.to_owned(), score);
                }
            }
            (Guarantee::RelationOnly, Role::Relatum) => {
                types.insert(special_labels[2].to_owned(), above_t(&mut rng));
            }
            (Guarantee::RelationOnly | Guarantee::Ambiguous, Role::Filler) => {
                let label = filler_labels[i % filler_labels.len()];
                types.insert(label.to_owned(), above_t(&mut rng));
            }
            _ => unreachable!("role/guarantee combinations are fixed above"),
        }

        // Decorative attributes; the separating attribute never leaks here,
        // twins keep identical patterns, and the UniqueAttribute target
        // keeps exactly its one separator.
        if !matches!(
            (params.guarantee, role),
            (Guarantee::Ambiguous | Guarantee::RelationOnly, Role::Target)
                | (Guarantee::Ambiguous | Guarantee::RelationOnly, Role::Twin)
                | (Guarantee::UniqueAttribute, Role::Target)
        ) {
            let extra = sample_range(&mut rng, &params.n_attributes).min(extra_attrs.len());
            for k in 0..extra {
                let label = extra_attrs[(i + k) % extra_attrs.len()];
                let score = if rng.gen_bool(0.5) {
                    above_a(&mut rng)
                } else {
                    below_a(&mut rng)
                };
                attrs.entry(label.to_owned()).or_insert(score);
            }
        }

        match role {
            Role::Target => target_id = Some(id.clone()),
            Role::Twin => twin_id = Some(id.clone()),
            Role::Relatum => relatum_id = Some(id.clone()),
            _ => filler_ids.push(id.clone()),
        }
        objects.push(GradedObject {
            id,
            bbox,
            type_scores: lift_scores(types),
            attribute_scores: lift_scores(attrs),
        });
    }

    let target_id = target_id.expect("a target role is always assigned");
    let mut relations: Vec<GradedRelation<R>> = Vec::new();

    match params.guarantee {
        Guarantee::RelationOnly => {
            let relatum = relatum_id.expect("relation scenes have a relatum");
            let pred = PRED_POOL[sample_range(&mut rng, &(0..=PRED_POOL.len() - 1))];
            relations.push(GradedRelation {
                subject: target_id.clone(),
                predicate: pred.to_owned(),
                object: relatum.clone(),
                score: real(above_r(&mut rng)),
            });
            if rng.gen_bool(0.5) {
                relations.push(GradedRelation {
                    subject: twin_id.clone().expect("relation scenes have a twin"),
                    predicate: pred.to_owned(),
                    object: relatum,
                    score: real(below_r(&mut rng)),
                });
            }
        }
        Guarantee::Ambiguous => {
            // Optional symmetric relation: same predicate to the same
            // relatum from both pair members, both above threshold.
            if let Some(relatum) = filler_ids.first() {
                if rng.gen_bool(0.4) {
                    let pred = PRED_POOL[sample_range(&mut rng, &(0..=PRED_POOL.len() - 1))];
                    for subject in [
                        target_id.clone(),
                        twin_id.clone().expect("ambiguous scenes have a twin"),
                    ] {
                        relations.push(GradedRelation {
                            subject,
                            predicate: pred.to_owned(),
                            object: relatum.clone(),
                            score: real(above_r(&mut rng)),
                        });
                    }
                }
            }
        }
        _ => {}
    }

    // Filler-to-filler relations only: they can never separate the target.
    if filler_ids.len() >= 2 {
        let extra = sample_range(&mut rng, &params.n_relations);
        for _ in 0..extra {
            let a = sample_range(&mut rng, &(0..=filler_ids.len() - 1));
            let mut b = sample_range(&mut rng, &(0..=filler_ids.len() - 1));
            if a == b {
                b = (b + 1) % filler_ids.len();
            }
            let pred = PRED_POOL[sample_range(&mut rng, &(0..=PRED_POOL.len() - 1))];
            let score: f64 = rng.gen_range(0.05..0.95);
            relations.push(GradedRelation {
                subject: filler_ids[a].clone(),
                predicate: pred.to_owned(),
                object: filler_ids[b].clone(),
                score: real(score),
            });
        }
    }

    let target_obj = objects
        .iter()
        .find(|o| o.id == target_id)
        .expect("target object exists");
    let target = TargetSpec {
        bbox: target_obj.bbox,
        type_scores: target_obj.type_scores.clone(),
        attribute_scores: target_obj.attribute_scores.clone(),
    };

    Ok(SynthScene {
        scene: GradedScene {
            image_id: format!("synth-{}", params.seed),
            width: real(IMAGE_W),
            height: real(IMAGE_H),
            objects,
            relations,
            target,
        },
        target_id,
        twin_id,
    })
}

fn validate_params(params: &SynthParams) -> Result<(), SynthError> {
    for (name, range) in [
        ("n_objects", &params.n_objects),
        ("n_types", &params.n_types),
        ("n_attributes", &params.n_attributes),
        ("n_relations", &params.n_relations),
    ] {
        if range.is_empty() {
            return Err(SynthError::Infeasible(format!("{name} range is empty")));
        }
    }
    if params.guarantee == Guarantee::UniqueAttribute && *params.n_attributes.end() == 0 {
        return Err(SynthError::Infeasible(
            "UniqueAttribute requires at least one attribute".to_owned(),
        ));
    }
    if !(0.0..=1.0).contains(&params.score_noise) {
        return Err(SynthError::Infeasible(format!(
            "score_noise {} outside [0, 1]",
            params.score_noise
        )));
    }
    Ok(())
}

fn sample_range(rng: &mut ChaCha8Rng, range: &RangeInclusive<usize>) -> usize {
    if range.start() == range.end() {
        *range.start()
    } else {
        rng.gen_range(range.clone())
    }
}

fn band(rng: &mut ChaCha8Rng, lo: f64, hi: f64, noise: f64) -> f64 {
    let u: f64 = rng.gen();
    lo + u * noise * (hi - lo)
}

fn slot_box<R: Real>(rng: &mut ChaCha8Rng, slot: usize) -> BoundingBox<R> {
    let w = rng.gen_range(10.0..34.0);
    let h = rng.gen_range(10.0..40.0);
    let x = 5.0 + slot as f64 * 39.0 + rng.gen_range(0.0..4.0);
    let y = rng.gen_range(5.0..(IMAGE_H - h - 5.0));
    BoundingBox::new(real(x), real(y), real(w), real(h))
}

fn lift_scores<R: Real>(scores: BTreeMap<String, f64>) -> BTreeMap<String, R> {
    scores.into_iter().map(|(k, v)| (k, real(v))).collect()
}

/// Step-by-step record of the oracle's run.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleRun {
    pub chosen: Vec<(DescriptorKind, String)>,
    pub truncated: bool,
}

/// Exhaustive re-derivation of greedy generation with naive loops.
///
/// Deliberately shares no numeric helpers with the engine: the listener
/// update, utility, argmax, and entropy are recomputed from first
/// principles here so a shared bug cannot hide. Greedy only.
pub fn brute_force_oracle<R: Real>(
    space: &DescriptorSpace,
    target: &ObjectId,
    prior: &Distribution<R>,
    lm: &LanguageModel<R>,
    cfg: &RsaConfig<R>,
) -> Result<OracleRun, SynthError> {
    if space.len() > 20 {
        return Err(SynthError::OracleBounds(format!(
            "{} descriptors (limit 20)",
            space.len()
        )));
    }
    if prior.len() > 6 {
        return Err(SynthError::OracleBounds(format!(
            "{} objects (limit 6)",
            prior.len()
        )));
    }

    let mut probs: Vec<(ObjectId, R)> = prior.iter().map(|(id, p)| (id.clone(), p)).collect();
    let mut chosen: Vec<(DescriptorKind, String)> = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut truncated = false;

    for step in 1..=cfg.max_len {
        let mut entropy = R::zero();
        for (_, p) in &probs {
            if *p > R::zero() {
                entropy = entropy - *p * p.log2();
            }
        }
        if step > 1 && entropy <= cfg.entropy_stop {
            break;
        }

        let mut best: Option<(usize, R)> = None;
        for (i, d) in space.iter().enumerate() {
            if chosen.iter().any(|(k, s)| *k == d.kind && s == &d.surface) {
                continue;
            }
            let mut overlaps = false;
            for (id, p) in &probs {
                if *p > R::zero() && d.extension.contains(id) {
                    overlaps = true;
                }
            }
            if !overlaps {
                continue;
            }

            let mut denom = R::zero();
            let mut target_mass = R::zero();
            for (id, p) in &probs {
                if d.extension.contains(id) {
                    denom += *p;
                    if id == target {
                        target_mass = *p;
                    }
                }
            }
            let literal = if d.extension.contains(target) && denom > R::zero() {
                target_mass / denom
            } else {
                R::zero()
            };
            let ngram = match cfg.lm_weight {
                LmWeight::Off => R::zero(),
                LmWeight::On => lm.descriptor_prob(d, &words),
            };
            let inside = literal + ngram;
            if inside > R::zero() {
                let cost = -cfg.cost_weight * R::from_usize(d.word_count()).unwrap();
                let utility = inside.ln() + cost;
                let better = match best {
                    Some((_, bu)) => utility > bu,
                    None => true,
                };
                if better {
                    best = Some((i, utility));
                }
            }
        }

        let Some((pick, _)) = best else {
            if chosen.is_empty() {
                return Err(SynthError::OracleStuck);
            }
            truncated = true;
            break;
        };

        let d = &space.descriptors()[pick];
        let mut total = R::zero();
        for (id, p) in &probs {
            if d.extension.contains(id) {
                total += *p;
            }
        }
        for (id, p) in probs.iter_mut() {
            *p = if d.extension.contains(id) {
                *p / total
            } else {
                R::zero()
            };
        }
        words.extend(d.words().map(str::to_owned));
        chosen.push((d.kind, d.surface.clone()));
    }

    Ok(OracleRun { chosen, truncated })
}
