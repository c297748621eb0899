//! Object asset library with semantic metadata plus the commonsense
//! size-reference table consumed by scene lint and refinement.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::Vec3;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("failed to read catalog file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("duplicate asset id '{0}'")]
    DuplicateId(String),
    #[error("asset '{id}': {reason}")]
    Invalid { id: String, reason: String },
    #[error("size reference '{category}': {reason}")]
    InvalidSizeReference { category: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetSource {
    Ycb,
    Robotwin,
    Partnet,
}

/// One catalog entry: bounding extents and semantic flags, no meshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetRecord {
    pub id: String,
    pub source: AssetSource,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    /// Axis-aligned bounding extents at scale 1.0, meters.
    pub nominal_dims: Vec3,
    #[serde(default)]
    pub semantic_tags: Vec<String>,
    pub graspable: bool,
    pub articulated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_joint_limits: Option<(f64, f64)>,
}

impl AssetRecord {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.semantic_tags.iter().any(|t| t == tag)
    }

    fn validate(&self) -> Result<(), CatalogError> {
        let fail = |reason: &str| {
            Err(CatalogError::Invalid {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if !self.nominal_dims.all_positive() {
            return fail("nominal_dims must be componentwise positive");
        }
        if self.articulated {
            if self.source != AssetSource::Partnet {
                return fail("articulated assets must come from partnet");
            }
            match &self.model_id {
                None => return fail("articulated assets require a model_id"),
                Some(m) if m.is_empty() || !m.bytes().all(|b| b.is_ascii_digit()) => {
                    return Err(CatalogError::Invalid {
                        id: self.id.clone(),
                        reason: format!("model_id '{m}' is not a decimal integer string"),
                    });
                }
                Some(_) => {}
            }
        }
        if let Some((lo, hi)) = self.default_joint_limits {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return fail("default_joint_limits must be a finite (low, high) pair");
            }
        }
        Ok(())
    }
}

/// Expected real-world dimensions for a category, with a multiplicative
/// tolerance window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeReference {
    pub category: String,
    pub expected_dims: Vec3,
    pub tolerance_factor: f64,
}

impl SizeReference {
    fn validate(&self) -> Result<(), CatalogError> {
        if !self.expected_dims.all_positive() {
            return Err(CatalogError::InvalidSizeReference {
                category: self.category.clone(),
                reason: "expected_dims must be componentwise positive".into(),
            });
        }
        if !(self.tolerance_factor >= 1.0) {
            return Err(CatalogError::InvalidSizeReference {
                category: self.category.clone(),
                reason: "tolerance_factor must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Per-axis ratio of the scaled asset dims to the category reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeDeviation {
    pub ratios: Vec3,
    pub flagged: bool,
    pub tolerance_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    records: Vec<AssetRecord>,
    #[serde(default)]
    size_references: Vec<SizeReference>,
}

/// Immutable after load; shareable across workers.
#[derive(Debug, Clone)]
pub struct Catalog {
    records: Vec<AssetRecord>,
    by_id: BTreeMap<String, usize>,
    size_refs: BTreeMap<String, SizeReference>,
}

impl Catalog {
    pub fn from_str(text: &str) -> Result<Catalog, CatalogError> {
        let file: CatalogFile =
            serde_yaml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        let mut by_id = BTreeMap::new();
        for (i, rec) in file.records.iter().enumerate() {
            rec.validate()?;
            if by_id.insert(rec.id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId(rec.id.clone()));
            }
        }
        let mut size_refs = BTreeMap::new();
        for r in &file.size_references {
            r.validate()?;
            size_refs.insert(r.category.clone(), r.clone());
        }
        Ok(Catalog {
            records: file.records,
            by_id,
            size_refs,
        })
    }

    pub fn load(path: &Path) -> Result<Catalog, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Catalog::from_str(&text)
    }

    /// The catalog shipped with the repository.
    pub fn builtin() -> Catalog {
        Catalog::from_str(include_str!("../assets/catalog.yaml"))
            .expect("builtin catalog must be valid")
    }

    pub fn serialize(&self) -> String {
        let file = CatalogFile {
            records: self.records.clone(),
            size_references: self.size_refs.values().cloned().collect(),
        };
        serde_yaml::to_string(&file).expect("catalog serialization cannot fail")
    }

    pub fn get(&self, id: &str) -> Option<&AssetRecord> {
        self.by_id.get(id).map(|i| &self.records[*i])
    }

    pub fn records(&self) -> &[AssetRecord] {
        &self.records
    }

    pub fn ids_by_source(&self, source: AssetSource) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| r.source == source)
            .map(|r| r.id.as_str())
            .collect()
    }

    pub fn size_reference(&self, category: &str) -> Option<&SizeReference> {
        self.size_refs.get(category)
    }

    /// Order-preserving list of names absent from the catalog; empty = valid.
    pub fn validate_references(&self, names: &[String]) -> Vec<String> {
        names
            .iter()
            .filter(|n| !self.by_id.contains_key(n.as_str()))
            .cloned()
            .collect()
    }
}

/// Compare scaled asset dims to the category's size reference, when present.
pub fn size_deviation(record: &AssetRecord, scale: f64, catalog: &Catalog) -> Option<SizeDeviation> {
    assert!(scale > 0.0, "scale must be positive");
    let reference = catalog.size_reference(&record.category)?;
    let tol = reference.tolerance_factor;
    let ratios = Vec3::new(
        scale * record.nominal_dims.x() / reference.expected_dims.x(),
        scale * record.nominal_dims.y() / reference.expected_dims.y(),
        scale * record.nominal_dims.z() / reference.expected_dims.z(),
    );
    let flagged = ratios.0.iter().any(|r| *r <= 1.0 / tol || *r >= tol);
    Some(SizeDeviation {
        ratios,
        flagged,
        tolerance_factor: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_catalog() -> Catalog {
        Catalog::from_str(
            r#"
records:
  - id: apple
    source: ycb
    category: apple
    nominal_dims: [0.08, 0.08, 0.08]
    semantic_tags: [spherical]
    graspable: true
    articulated: false
  - id: bowl
    source: robotwin
    category: bowl
    nominal_dims: [0.15, 0.15, 0.06]
    semantic_tags: [container]
    graspable: true
    articulated: false
  - id: microwave
    source: partnet
    category: microwave
    model_id: "7310"
    nominal_dims: [1.2, 1.0, 0.6]
    semantic_tags: [container]
    graspable: false
    articulated: true
    default_joint_limits: [0.0, 1.57]
size_references:
  - category: microwave
    expected_dims: [0.6, 0.5, 0.3]
    tolerance_factor: 2.0
"#,
        )
        .unwrap()
    }

    #[test]
    fn loads_three_records() {
        let c = small_catalog();
        assert_eq!(c.records().len(), 3);
        assert!(c.get("microwave").unwrap().articulated);
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = Catalog::from_str(
            r#"
records:
  - { id: apple, source: ycb, category: apple, nominal_dims: [0.08, 0.08, 0.08], graspable: true, articulated: false }
  - { id: apple, source: ycb, category: apple, nominal_dims: [0.09, 0.09, 0.09], graspable: true, articulated: false }
"#,
        )
        .unwrap_err();
        match err {
            CatalogError::DuplicateId(id) => assert_eq!(id, "apple"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_numeric_model_id_rejected() {
        let err = Catalog::from_str(
            r#"
records:
  - id: cabinet
    source: partnet
    category: cabinet
    model_id: "cabinet_001"
    nominal_dims: [0.8, 0.4, 1.0]
    graspable: false
    articulated: true
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("cabinet_001"));
    }

    #[test]
    fn validate_references_returns_missing_subset() {
        let c = small_catalog();
        assert!(c
            .validate_references(&["apple".into(), "bowl".into()])
            .is_empty());
        assert!(c.validate_references(&[]).is_empty());
        assert_eq!(
            c.validate_references(&["apple".into(), "unicorn".into()]),
            vec!["unicorn".to_string()]
        );
    }

    #[test]
    fn size_deviation_flags_oversize_microwave() {
        let c = small_catalog();
        let rec = c.get("microwave").unwrap();
        let dev = size_deviation(rec, 1.0, &c).unwrap();
        assert_eq!(dev.ratios, Vec3::new(2.0, 2.0, 2.0));
        assert!(dev.flagged);

        let dev_half = size_deviation(rec, 0.5, &c).unwrap();
        assert_eq!(dev_half.ratios, Vec3::new(1.0, 1.0, 1.0));
        assert!(!dev_half.flagged);
    }

    #[test]
    fn size_deviation_absent_without_reference() {
        let c = small_catalog();
        let rec = c.get("apple").unwrap();
        assert!(size_deviation(rec, 1.0, &c).is_none());
    }

    #[test]
    fn size_deviation_is_scale_homogeneous() {
        let c = small_catalog();
        let rec = c.get("microwave").unwrap();
        let d1 = size_deviation(rec, 0.7, &c).unwrap();
        let d2 = size_deviation(rec, 1.4, &c).unwrap();
        for a in 0..3 {
            assert!((d2.ratios[a] - 2.0 * d1.ratios[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn serialize_round_trips() {
        let c = Catalog::builtin();
        let text = c.serialize();
        let again = Catalog::from_str(&text).unwrap();
        assert_eq!(c.records(), again.records());
        assert_eq!(text, again.serialize());
    }

    #[test]
    fn builtin_catalog_has_paper_scale_size_refs() {
        let c = Catalog::builtin();
        let mw = c.size_reference("microwave").unwrap();
        assert_eq!(mw.expected_dims, Vec3::new(0.6, 0.5, 0.3));
        assert_eq!(mw.tolerance_factor, 2.0);
        assert!(c.size_reference("apple").is_some());
        assert!(c.size_reference("bowl").is_some());
    }

    #[test]
    fn reference_validation_splits_over_concatenation() {
        let c = small_catalog();
        let a = vec!["apple".to_string(), "ghost".to_string()];
        let b = vec!["bowl".to_string(), "phantom".to_string()];
        let joined: Vec<String> = a.iter().chain(b.iter()).cloned().collect();
        let mut split = c.validate_references(&a);
        split.extend(c.validate_references(&b));
        assert_eq!(c.validate_references(&joined), split);
    }
}
