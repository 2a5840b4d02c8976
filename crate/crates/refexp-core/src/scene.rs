//! Graded scene-graph data model and scene-file ingestion.
//!
//! A scene is the symbolic "world" the generator reasons over: objects with
//! scored type/attribute labels, scored binary relations between them, and
//! the annotated target box. Scores are raw detector confidences in `[0,1]`;
//! nothing here is thresholded yet.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

/// Identifier of an object, unique within its scene.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_owned())
    }
}

/// Axis-aligned box in pixel coordinates, COCO convention: top-left origin,
/// `(x, y, w, h)` with `w > 0` and `h > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox<R> {
    pub x: R,
    pub y: R,
    pub w: R,
    pub h: R,
}

impl<R: Real> BoundingBox<R> {
    pub fn new(x: R, y: R, w: R, h: R) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn area(&self) -> R {
        self.w * self.h
    }

    pub fn x_center(&self) -> R {
        self.x + self.w / crate::real(2.0)
    }

    pub fn y_center(&self) -> R {
        self.y + self.h / crate::real(2.0)
    }

    fn is_well_formed(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > R::zero()
            && self.h > R::zero()
    }
}

/// A detected object with graded type and attribute scores.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedObject<R> {
    pub id: ObjectId,
    pub bbox: BoundingBox<R>,
    pub type_scores: BTreeMap<String, R>,
    pub attribute_scores: BTreeMap<String, R>,
}

impl<R: Real> GradedObject<R> {
    /// Box area in px²; the salience measure.
    pub fn area(&self) -> R {
        self.bbox.area()
    }

    /// The object's class: the type label with the highest score.
    /// Score ties go to the lexicographically first label.
    pub fn argmax_type(&self) -> Option<&str> {
        argmax_label(&self.type_scores)
    }
}

/// A scored directed relation between two objects of the same scene.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedRelation<R> {
    pub subject: ObjectId,
    pub predicate: String,
    pub object: ObjectId,
    pub score: R,
}

/// The annotated target region, classified the same way context objects are.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec<R> {
    pub bbox: BoundingBox<R>,
    pub type_scores: BTreeMap<String, R>,
    pub attribute_scores: BTreeMap<String, R>,
}

impl<R: Real> TargetSpec<R> {
    pub fn argmax_type(&self) -> Option<&str> {
        argmax_label(&self.type_scores)
    }
}

/// A validated graded scene. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedScene<R> {
    pub image_id: String,
    pub width: R,
    pub height: R,
    pub objects: Vec<GradedObject<R>>,
    pub relations: Vec<GradedRelation<R>>,
    pub target: TargetSpec<R>,
}

impl<R: Real> GradedScene<R> {
    pub fn object(&self, id: &ObjectId) -> Option<&GradedObject<R>> {
        self.objects.iter().find(|o| &o.id == id)
    }

    pub fn contains(&self, id: &ObjectId) -> bool {
        self.object(id).is_some()
    }

    pub fn object_ids(&self) -> impl Iterator<Item = &ObjectId> {
        self.objects.iter().map(|o| &o.id)
    }
}

fn argmax_label<R: Real>(scores: &BTreeMap<String, R>) -> Option<&str> {
    let mut best: Option<(&str, R)> = None;
    for (label, &score) in scores {
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((label, score)),
        }
    }
    best.map(|(label, _)| label)
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed scene document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid image dimensions {width} x {height}")]
    InvalidDimensions { width: f64, height: f64 },
    #[error("duplicate object id {id:?}")]
    DuplicateId { id: String },
    #[error("object {id:?} has empty type scores")]
    EmptyTypeScores { id: String },
    #[error("score out of range at {path}: {value}")]
    ScoreOutOfRange { path: String, value: f64 },
    #[error("invalid bounding box at {path}: {reason}")]
    InvalidBox { path: String, reason: String },
    #[error("unresolved relation endpoint at {path}: {id:?}")]
    UnresolvedEndpoint { path: String, id: String },
    #[error("relation at {path} relates {id:?} to itself")]
    SelfRelation { path: String, id: String },
}

// Wire format for scene files. Kept separate from the domain types so
// validation and box clamping happen in exactly one place.

#[derive(Serialize, Deserialize)]
struct SceneDoc<R> {
    image_id: String,
    width: R,
    height: R,
    objects: Vec<ObjectDoc<R>>,
    #[serde(default = "Vec::new")]
    relations: Vec<RelationDoc<R>>,
    target: TargetDoc<R>,
}

#[derive(Serialize, Deserialize)]
struct ObjectDoc<R> {
    id: String,
    bbox: [R; 4],
    types: BTreeMap<String, R>,
    #[serde(default = "BTreeMap::new")]
    attributes: BTreeMap<String, R>,
}

#[derive(Serialize, Deserialize)]
struct RelationDoc<R> {
    subject: String,
    predicate: String,
    object: String,
    score: R,
}

#[derive(Serialize, Deserialize)]
struct TargetDoc<R> {
    bbox: [R; 4],
    #[serde(default = "BTreeMap::new")]
    types: BTreeMap<String, R>,
    #[serde(default = "BTreeMap::new")]
    attributes: BTreeMap<String, R>,
}

/// Parse and validate a scene file.
///
/// Boxes poking past the image bounds are clamped with a warning; every
/// other invariant violation is an error.
pub fn parse_scene<R: Real>(bytes: &[u8]) -> Result<GradedScene<R>, SceneError> {
    let doc: SceneDoc<R> = serde_json::from_slice(bytes)?;
    scene_from_doc(doc)
}

/// Serialize a scene back to the scene-file schema (compact JSON).
pub fn serialize_scene<R: Real>(scene: &GradedScene<R>) -> String {
    serde_json::to_string(&scene_to_doc(scene)).expect("scene serializes")
}

/// Like [`serialize_scene`], but pretty-printed.
pub fn serialize_scene_pretty<R: Real>(scene: &GradedScene<R>) -> String {
    serde_json::to_string_pretty(&scene_to_doc(scene)).expect("scene serializes")
}

fn scene_from_doc<R: Real>(doc: SceneDoc<R>) -> Result<GradedScene<R>, SceneError> {
    if !(doc.width.is_finite() && doc.height.is_finite())
        || doc.width <= R::zero()
        || doc.height <= R::zero()
    {
        return Err(SceneError::InvalidDimensions {
            width: doc.width.to_f64().unwrap_or(f64::NAN),
            height: doc.height.to_f64().unwrap_or(f64::NAN),
        });
    }

    let mut seen = BTreeSet::new();
    let mut objects = Vec::with_capacity(doc.objects.len());
    for (i, obj) in doc.objects.into_iter().enumerate() {
        if !seen.insert(obj.id.clone()) {
            return Err(SceneError::DuplicateId { id: obj.id });
        }
        if obj.types.is_empty() {
            return Err(SceneError::EmptyTypeScores { id: obj.id });
        }
        let path = format!("objects[{i}]");
        check_scores(&obj.types, &format!("{path}.types"))?;
        check_scores(&obj.attributes, &format!("{path}.attributes"))?;
        let bbox = clamp_box(
            &doc.image_id,
            &format!("{path}.bbox"),
            obj.bbox,
            doc.width,
            doc.height,
        )?;
        objects.push(GradedObject {
            id: ObjectId(obj.id),
            bbox,
            type_scores: obj.types,
            attribute_scores: obj.attributes,
        });
    }

    let mut relations = Vec::with_capacity(doc.relations.len());
    for (i, rel) in doc.relations.into_iter().enumerate() {
        let path = format!("relations[{i}]");
        if rel.subject == rel.object {
            return Err(SceneError::SelfRelation {
                path,
                id: rel.subject,
            });
        }
        for (role, id) in [("subject", &rel.subject), ("object", &rel.object)] {
            if !seen.contains(id) {
                return Err(SceneError::UnresolvedEndpoint {
                    path: format!("{path}.{role}"),
                    id: id.clone(),
                });
            }
        }
        check_score(rel.score, &format!("{path}.score"))?;
        relations.push(GradedRelation {
            subject: ObjectId(rel.subject),
            predicate: rel.predicate,
            object: ObjectId(rel.object),
            score: rel.score,
        });
    }

    check_scores(&doc.target.types, "target.types")?;
    check_scores(&doc.target.attributes, "target.attributes")?;
    let target_bbox = clamp_box(
        &doc.image_id,
        "target.bbox",
        doc.target.bbox,
        doc.width,
        doc.height,
    )?;

    Ok(GradedScene {
        image_id: doc.image_id,
        width: doc.width,
        height: doc.height,
        objects,
        relations,
        target: TargetSpec {
            bbox: target_bbox,
            type_scores: doc.target.types,
            attribute_scores: doc.target.attributes,
        },
    })
}

fn scene_to_doc<R: Real>(scene: &GradedScene<R>) -> SceneDoc<R> {
    SceneDoc {
        image_id: scene.image_id.clone(),
        width: scene.width,
        height: scene.height,
        objects: scene
            .objects
            .iter()
            .map(|o| ObjectDoc {
                id: o.id.0.clone(),
                bbox: [o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h],
                types: o.type_scores.clone(),
                attributes: o.attribute_scores.clone(),
            })
            .collect(),
        relations: scene
            .relations
            .iter()
            .map(|r| RelationDoc {
                subject: r.subject.0.clone(),
                predicate: r.predicate.clone(),
                object: r.object.0.clone(),
                score: r.score,
            })
            .collect(),
        target: TargetDoc {
            bbox: [
                scene.target.bbox.x,
                scene.target.bbox.y,
                scene.target.bbox.w,
                scene.target.bbox.h,
            ],
            types: scene.target.type_scores.clone(),
            attributes: scene.target.attribute_scores.clone(),
        },
    }
}

fn check_scores<R: Real>(scores: &BTreeMap<String, R>, path: &str) -> Result<(), SceneError> {
    for (label, &score) in scores {
        check_score(score, &format!("{path}[{label:?}]"))?;
    }
    Ok(())
}

fn check_score<R: Real>(score: R, path: &str) -> Result<(), SceneError> {
    if !score.is_finite() || score < R::zero() || score > R::one() {
        return Err(SceneError::ScoreOutOfRange {
            path: path.to_owned(),
            value: score.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

fn clamp_box<R: Real>(
    image_id: &str,
    path: &str,
    raw: [R; 4],
    width: R,
    height: R,
) -> Result<BoundingBox<R>, SceneError> {
    let bbox = BoundingBox::new(raw[0], raw[1], raw[2], raw[3]);
    if !bbox.is_well_formed() {
        return Err(SceneError::InvalidBox {
            path: path.to_owned(),
            reason: "sides must be finite with w > 0 and h > 0".to_owned(),
        });
    }
    let inside = bbox.x >= R::zero()
        && bbox.y >= R::zero()
        && bbox.x + bbox.w <= width
        && bbox.y + bbox.h <= height;
    if inside {
        return Ok(bbox);
    }
    let x = bbox.x.max(R::zero()).min(width);
    let y = bbox.y.max(R::zero()).min(height);
    let right = (bbox.x + bbox.w).max(R::zero()).min(width);
    let bottom = (bbox.y + bbox.h).max(R::zero()).min(height);
    let clamped = BoundingBox::new(x, y, right - x, bottom - y);
    if !clamped.is_well_formed() {
        return Err(SceneError::InvalidBox {
            path: path.to_owned(),
            reason: "box lies entirely outside the image".to_owned(),
        });
    }
    if clamped != bbox {
        log::warn!("scene {image_id}: clamped {path} to image bounds");
    }
    Ok(clamped)
}
