//! Catalog, scene and candidate types, and the scale-invariant features
//! shared by both classification methods.
//!
//! A scene carries only box dimensions and labels. Everything downstream
//! is computed from ratios (own aspect ratio, frontal-area ratios against
//! the other boxes of the same scene), so the camera distance at which the
//! shelf photo was taken drops out.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

/// Reserved for composite keys in serialized models.
pub const KEY_SEPARATOR: char = '|';

string_id!(GroupId);
string_id!(ClassId);

/// One size variant of a group, with its true physical dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub class_id: ClassId,
    #[serde(rename = "w_mm")]
    pub width_mm: f64,
    #[serde(rename = "h_mm")]
    pub height_mm: f64,
}

impl VariantSpec {
    pub fn area_mm2(&self) -> f64 {
        self.width_mm * self.height_mm
    }
}

/// A brand: visually identical products that differ only in size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group_id: GroupId,
    pub variants: Vec<VariantSpec>,
}

impl GroupSpec {
    /// Number of size variants (`u` when this group acts as context).
    pub fn n_variants(&self) -> usize {
        self.variants.len()
    }

    pub fn class_index(&self, class: &ClassId) -> Option<usize> {
        self.variants.iter().position(|v| &v.class_id == class)
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        self.variants.iter().map(|v| v.class_id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CatalogRepr", into = "CatalogRepr")]
pub struct Catalog {
    groups: Vec<GroupSpec>,
}

#[derive(Serialize, Deserialize)]
struct CatalogRepr {
    groups: Vec<GroupSpec>,
}

impl TryFrom<CatalogRepr> for Catalog {
    type Error = Error;

    fn try_from(repr: CatalogRepr) -> Result<Self> {
        Catalog::new(repr.groups)
    }
}

impl From<Catalog> for CatalogRepr {
    fn from(c: Catalog) -> Self {
        CatalogRepr { groups: c.groups }
    }
}

impl Catalog {
    pub fn new(groups: Vec<GroupSpec>) -> Result<Self> {
        let mut group_ids = HashSet::new();
        let mut class_ids = HashSet::new();
        for g in &groups {
            if g.group_id.as_str().contains(KEY_SEPARATOR) {
                return Err(Error::Data(format!("group_id `{}` contains `{KEY_SEPARATOR}`", g.group_id)));
            }
            if !group_ids.insert(&g.group_id) {
                return Err(Error::Data(format!("duplicate group_id `{}`", g.group_id)));
            }
            if g.variants.is_empty() {
                return Err(Error::Data(format!("group `{}` has no variants", g.group_id)));
            }
            for v in &g.variants {
                if !(v.width_mm > 0.0 && v.height_mm > 0.0)
                    || !v.width_mm.is_finite()
                    || !v.height_mm.is_finite()
                {
                    return Err(Error::Data(format!(
                        "variant `{}` has non-positive dimensions",
                        v.class_id
                    )));
                }
                if v.class_id.as_str().contains(KEY_SEPARATOR) {
                    return Err(Error::Data(format!("class_id `{}` contains `{KEY_SEPARATOR}`", v.class_id)));
                }
                if !class_ids.insert(&v.class_id) {
                    return Err(Error::Data(format!("duplicate class_id `{}`", v.class_id)));
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn group(&self, id: &GroupId) -> Option<&GroupSpec> {
        self.groups.iter().find(|g| &g.group_id == id)
    }

    pub fn group_index(&self, id: &GroupId) -> Option<usize> {
        self.groups.iter().position(|g| &g.group_id == id)
    }

    pub fn require_group(&self, id: &GroupId) -> Result<&GroupSpec> {
        self.group(id).ok_or_else(|| Error::UnknownGroup(id.to_string()))
    }

    pub fn n_variants(&self, id: &GroupId) -> Option<usize> {
        self.group(id).map(GroupSpec::n_variants)
    }

    pub fn group_ids(&self) -> Vec<GroupId> {
        self.groups.iter().map(|g| g.group_id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedBox {
    pub box_id: String,
    #[serde(rename = "w")]
    pub width_px: f64,
    #[serde(rename = "h")]
    pub height_px: f64,
    #[serde(rename = "group")]
    pub group_id: GroupId,
    #[serde(rename = "class")]
    pub class_id: Option<ClassId>,
}

impl DetectedBox {
    pub fn new(
        box_id: impl Into<String>,
        width_px: f64,
        height_px: f64,
        group_id: impl Into<GroupId>,
        class_id: Option<ClassId>,
    ) -> Self {
        Self {
            box_id: box_id.into(),
            width_px,
            height_px,
            group_id: group_id.into(),
            class_id,
        }
    }

    fn has_valid_dims(&self) -> bool {
        self.width_px > 0.0
            && self.height_px > 0.0
            && self.width_px.is_finite()
            && self.height_px.is_finite()
    }

    fn check(&self) -> Result<()> {
        if self.has_valid_dims() {
            Ok(())
        } else {
            Err(Error::InvalidBox {
                box_id: self.box_id.clone(),
                width: self.width_px,
                height: self.height_px,
            })
        }
    }
}

/// All boxes detected in one shelf image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub boxes: Vec<DetectedBox>,
}

impl Scene {
    /// Copy of the scene with every pixel dimension multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> Scene {
        Scene {
            scene_id: self.scene_id.clone(),
            boxes: self
                .boxes
                .iter()
                .map(|b| DetectedBox {
                    width_px: b.width_px * s,
                    height_px: b.height_px * s,
                    ..b.clone()
                })
                .collect(),
        }
    }

    /// Distinct groups present in the scene.
    pub fn groups(&self) -> BTreeSet<&GroupId> {
        self.boxes.iter().map(|b| &b.group_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextEntry {
    /// `area(other) / area(candidate)`
    pub area_ratio: f64,
    pub group_id: GroupId,
}

/// Scale-invariant view of one candidate box within its scene.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFeatures {
    /// Own aspect ratio, width / height.
    pub r: f64,
    /// One entry per other box in the scene, in scene order.
    pub context: Vec<ContextEntry>,
}

pub fn aspect_ratio(b: &DetectedBox) -> Result<f64> {
    b.check()?;
    Ok(b.width_px / b.height_px)
}

pub fn frontal_area(b: &DetectedBox) -> Result<f64> {
    b.check()?;
    Ok(b.width_px * b.height_px)
}

pub fn extract_candidate_features(scene: &Scene, candidate_index: usize) -> Result<CandidateFeatures> {
    let cand = scene.boxes.get(candidate_index).ok_or(Error::IndexOutOfRange {
        index: candidate_index,
        len: scene.boxes.len(),
    })?;
    let r = aspect_ratio(cand)?;
    let own_area = frontal_area(cand)?;
    let context = scene
        .boxes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != candidate_index)
        .map(|(_, other)| {
            Ok(ContextEntry {
                area_ratio: frontal_area(other)? / own_area,
                group_id: other.group_id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateFeatures { r, context })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnknownGroup,
    ClassNotInGroup,
    NonPositiveDimension,
    DuplicateBoxId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub box_id: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "box {}: {}", self.box_id, self.message)
    }
}

/// Checks a scene against a catalog; an empty list means the scene is valid.
pub fn validate_scene(scene: &Scene, catalog: &Catalog) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for b in &scene.boxes {
        if !seen.insert(b.box_id.as_str()) {
            out.push(Violation {
                kind: ViolationKind::DuplicateBoxId,
                box_id: b.box_id.clone(),
                message: "duplicate box_id".into(),
            });
        }
        if !b.has_valid_dims() {
            out.push(Violation {
                kind: ViolationKind::NonPositiveDimension,
                box_id: b.box_id.clone(),
                message: format!("non-positive dimension ({} x {})", b.width_px, b.height_px),
            });
        }
        match catalog.group(&b.group_id) {
            None => out.push(Violation {
                kind: ViolationKind::UnknownGroup,
                box_id: b.box_id.clone(),
                message: format!("unknown group `{}`", b.group_id),
            }),
            Some(g) => {
                if let Some(c) = &b.class_id {
                    if g.class_index(c).is_none() {
                        out.push(Violation {
                            kind: ViolationKind::ClassNotInGroup,
                            box_id: b.box_id.clone(),
                            message: format!("class `{c}` not in group `{}`", b.group_id),
                        });
                    }
                }
            }
        }
    }
    out
}
