//! Target alignment and ordinal-relation synthesis.
//!
//! Before generation the annotated target box must be tied to a concrete
//! context object: reuse a detected object when one covers the target well
//! enough and carries the same class, otherwise append the target box as a
//! new object. Ordinal labels ("left", "second from left", "right") are then
//! synthesized per category over the post-alignment scene.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::scene::{BoundingBox, GradedObject, GradedScene, ObjectId};
use crate::{real, Real};

/// Minimum coverage of the target box for a context object to be reused.
pub const ALIGN_OVERLAP_MIN: f64 = 0.8;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("unclassifiable target: target has no type scores")]
    UnclassifiableTarget,
}

/// Overlap measure used during target alignment. Coverage-of-target is the
/// default reading; IoU stays available for callers that prefer it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OverlapMode {
    #[default]
    Coverage,
    Iou,
}

impl OverlapMode {
    pub fn measure<R: Real>(self, a: &BoundingBox<R>, target: &BoundingBox<R>) -> R {
        match self {
            OverlapMode::Coverage => overlap_ratio(a, target),
            OverlapMode::Iou => iou(a, target),
        }
    }
}

/// How much of `target` the box `a` covers: intersection area over target
/// area. This is deliberately not IoU; see [`iou`] for the alternative.
pub fn overlap_ratio<R: Real>(a: &BoundingBox<R>, target: &BoundingBox<R>) -> R {
    intersection_area(a, target) / target.area()
}

/// Intersection over union, provided as the alternative overlap measure.
pub fn iou<R: Real>(a: &BoundingBox<R>, b: &BoundingBox<R>) -> R {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= R::zero() {
        R::zero()
    } else {
        inter / union
    }
}

fn intersection_area<R: Real>(a: &BoundingBox<R>, b: &BoundingBox<R>) -> R {
    let left = a.x.max(b.x);
    let top = a.y.max(b.y);
    let right = (a.x + a.w).min(b.x + b.w);
    let bottom = (a.y + a.h).min(b.y + b.h);
    let w = (right - left).max(R::zero());
    let h = (bottom - top).max(R::zero());
    w * h
}

/// Outcome of tying the target box to a scene object.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult<R> {
    /// The object now designated as the referent.
    pub target_id: ObjectId,
    /// Whether the target box was appended as a new object.
    pub added_new: bool,
    /// Best target coverage among pre-existing context objects.
    pub best_overlap: R,
    /// Whether the best-overlap object carries the target's class.
    pub alignment_class_match: bool,
}

/// Designate a referent object for the scene's target box.
///
/// A context object is reused when it covers at least 80% of the target box
/// and shares the target's argmax class; ties go to the higher overlap, then
/// the lexicographically smaller id. Otherwise the annotated target is
/// appended as a new object under a fresh id.
pub fn align_target<R: Real>(
    scene: GradedScene<R>,
) -> Result<(GradedScene<R>, AlignmentResult<R>), PrepError> {
    align_target_with(scene, OverlapMode::Coverage)
}

/// [`align_target`] with an explicit overlap measure.
pub fn align_target_with<R: Real>(
    scene: GradedScene<R>,
    mode: OverlapMode,
) -> Result<(GradedScene<R>, AlignmentResult<R>), PrepError> {
    let target_class = scene
        .target
        .argmax_type()
        .ok_or(PrepError::UnclassifiableTarget)?
        .to_owned();

    let min_overlap: R = real(ALIGN_OVERLAP_MIN);
    let mut best_overall: Option<(R, &GradedObject<R>)> = None;
    let mut best_match: Option<(R, &ObjectId)> = None;
    for obj in &scene.objects {
        let ov = mode.measure(&obj.bbox, &scene.target.bbox);
        let better = match best_overall {
            Some((best, _)) => ov > best,
            None => true,
        };
        if better {
            best_overall = Some((ov, obj));
        }
        if ov >= min_overlap && obj.argmax_type() == Some(target_class.as_str()) {
            let better = match best_match {
                Some((bo, bid)) => ov > bo || (ov == bo && obj.id < *bid),
                None => true,
            };
            if better {
                best_match = Some((ov, &obj.id));
            }
        }
    }

    let best_overlap = best_overall.map(|(ov, _)| ov).unwrap_or_else(R::zero);
    let alignment_class_match = best_overall
        .map(|(_, obj)| obj.argmax_type() == Some(target_class.as_str()))
        .unwrap_or(false);

    if let Some((_, id)) = best_match {
        let result = AlignmentResult {
            target_id: id.clone(),
            added_new: false,
            best_overlap,
            alignment_class_match,
        };
        return Ok((scene, result));
    }

    let mut scene = scene;
    let id = fresh_id(&scene);
    scene.objects.push(GradedObject {
        id: id.clone(),
        bbox: scene.target.bbox,
        type_scores: scene.target.type_scores.clone(),
        attribute_scores: scene.target.attribute_scores.clone(),
    });
    let result = AlignmentResult {
        target_id: id,
        added_new: true,
        best_overlap,
        alignment_class_match,
    };
    Ok((scene, result))
}

fn fresh_id<R: Real>(scene: &GradedScene<R>) -> ObjectId {
    let mut candidate = "target".to_owned();
    let mut n = 0u32;
    while scene.contains(&ObjectId::new(candidate.clone())) {
        n += 1;
        candidate = format!("target_{n}");
    }
    ObjectId::new(candidate)
}

/// Assign ordinal labels within each category of the (aligned) scene.
///
/// Categories with at least two members are sorted by box x-center
/// (ties: y-center, then id); the first member is "left", the last "right",
/// and interior members "k-th from left". Singleton categories get nothing.
pub fn synthesize_ordinals<R: Real>(scene: &GradedScene<R>) -> Vec<(ObjectId, String)> {
    let mut by_class: BTreeMap<&str, Vec<&GradedObject<R>>> = BTreeMap::new();
    for obj in &scene.objects {
        if let Some(class) = obj.argmax_type() {
            by_class.entry(class).or_default().push(obj);
        }
    }

    let mut labels = Vec::new();
    for (_, mut members) in by_class {
        if members.len() < 2 {
            continue;
        }
        members.sort_by(|a, b| {
            a.bbox
                .x_center()
                .partial_cmp(&b.bbox.x_center())
                .unwrap()
                .then(a.bbox.y_center().partial_cmp(&b.bbox.y_center()).unwrap())
                .then(a.id.cmp(&b.id))
        });
        let n = members.len();
        for (k, obj) in members.iter().enumerate() {
            let label = if k == 0 {
                "left".to_owned()
            } else if k == n - 1 {
                "right".to_owned()
            } else {
                format!("{} from left", ordinal_word(k + 1))
            };
            labels.push((obj.id.clone(), label));
        }
    }
    labels
}

fn ordinal_word(k: usize) -> String {
    match k {
        2 => "second".to_owned(),
        3 => "third".to_owned(),
        4 => "fourth".to_owned(),
        5 => "fifth".to_owned(),
        6 => "sixth".to_owned(),
        7 => "seventh".to_owned(),
        8 => "eighth".to_owned(),
        9 => "ninth".to_owned(),
        10 => "tenth".to_owned(),
        _ => format!("{k}th"),
    }
}

/// A scene ready for descriptor extraction: target designated, ordinals in.
#[derive(Clone, Debug)]
pub struct PreparedScene<R> {
    pub scene: GradedScene<R>,
    pub alignment: AlignmentResult<R>,
    pub ordinals: Vec<(ObjectId, String)>,
}

/// Run alignment then ordinal synthesis (ordinals must cover a possibly
/// added target, so the order matters).
pub fn prepare<R: Real>(scene: GradedScene<R>) -> Result<PreparedScene<R>, PrepError> {
    let (scene, alignment) = align_target(scene)?;
    let ordinals = synthesize_ordinals(&scene);
    Ok(PreparedScene {
        scene,
        alignment,
        ordinals,
    })
}
