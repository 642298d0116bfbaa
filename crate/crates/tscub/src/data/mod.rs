//! Dataset file formats, the synthetic benchmark generator, and loading.
//!
//! A dataset directory holds one manifest plus one JSON record per clip:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/clips/<domain>/<id>.json
//! ```
//!
//! Clip records are single-line JSON; coordinates round-trip losslessly for
//! finite doubles. Unknown fields are ignored on load for forward
//! compatibility. Action labels of the target domain's train split are
//! stripped at load time; the same files serve labeled evaluation.

pub mod runconfig;
pub mod synth;

pub use runconfig::{PreprocessConfig, RunConfig, TrainSettings};
pub use synth::{generate_domain_clips, mix_seed, SynthConfig, MOTION_NAMES};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Domain, DomainTag, JointSchema, Sample, SkeletonSequence};

pub const MANIFEST_VERSION: u32 = 1;
pub const CLIP_VERSION: u32 = 1;

/// One skeleton clip on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipRecord {
    pub schema_version: u32,
    pub id: String,
    pub domain: String,
    /// Action class name in the owning domain's naming space.
    pub action: Option<String>,
    /// `[persons][frames][joints][dims]`.
    pub frames: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainRole {
    Source,
    Target,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainInfo {
    pub name: String,
    pub role: DomainRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split {other} (expected train or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct SplitLists {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Dataset manifest: schema, classes, domain pairing, splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub joint_schema: JointSchema,
    /// Source-domain class names; class index = position in this list.
    pub classes: Vec<String>,
    /// Source class name ↔ target class name, a bijection on the shared
    /// class subset.
    pub class_pairing: Vec<(String, String)>,
    pub domains: Vec<DomainInfo>,
    /// Domain name → split id lists.
    pub splits: BTreeMap<String, SplitLists>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest version {}",
                self.schema_version
            )));
        }
        for (i, (src, _)) in self.class_pairing.iter().enumerate() {
            if !self.classes.contains(src) {
                return Err(Error::Manifest(format!(
                    "pairing references unknown source class {src}"
                )));
            }
            for (src2, tgt2) in &self.class_pairing[i + 1..] {
                if src == src2 || &self.class_pairing[i].1 == tgt2 {
                    return Err(Error::Manifest(format!(
                        "class pairing is not a bijection: duplicate {src} or {tgt2}"
                    )));
                }
            }
        }
        for d in &self.domains {
            if !self.splits.contains_key(&d.name) {
                return Err(Error::Manifest(format!("domain {} has no splits", d.name)));
            }
        }
        Ok(())
    }

    pub fn domain(&self, name: &str) -> Result<&DomainInfo> {
        self.domains
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Manifest(format!("unknown domain {name}")))
    }

    pub fn source_domain(&self) -> Result<&DomainInfo> {
        self.domains
            .iter()
            .find(|d| d.role == DomainRole::Source)
            .ok_or_else(|| Error::Manifest("manifest has no source domain".into()))
    }

    pub fn target_domain(&self) -> Result<&DomainInfo> {
        self.domains
            .iter()
            .find(|d| d.role == DomainRole::Target)
            .ok_or_else(|| Error::Manifest("manifest has no target domain".into()))
    }

    /// Class index for an action name in the given domain's naming space.
    pub fn class_index(&self, role: DomainRole, action: &str) -> Result<usize> {
        let source_name = match role {
            DomainRole::Source => action,
            DomainRole::Target => self
                .class_pairing
                .iter()
                .find(|(_, tgt)| tgt == action)
                .map(|(src, _)| src.as_str())
                .ok_or_else(|| {
                    Error::Manifest(format!("target class {action} not in pairing map"))
                })?,
        };
        self.classes
            .iter()
            .position(|c| c == source_name)
            .ok_or_else(|| Error::Manifest(format!("unknown class {source_name}")))
    }
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn clip_path(dir: &Path, domain: &str, id: &str) -> PathBuf {
    dir.join("clips").join(domain).join(format!("{id}.json"))
}

pub fn save_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = manifest_path(dir);
    let body = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    std::fs::write(&path, body + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = manifest_path(dir);
    let body =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let manifest: Manifest = serde_json::from_str(&body)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_clip(dir: &Path, record: &ClipRecord) -> Result<()> {
    let path = clip_path(dir, &record.domain, &record.id);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let body = serde_json::to_string(record).expect("clip serializes");
    std::fs::write(&path, body + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_clip(dir: &Path, domain: &str, id: &str) -> Result<ClipRecord> {
    let path = clip_path(dir, domain, id);
    let body =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&body).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Convert a skeleton sequence into a clip record.
pub fn sequence_to_record(
    id: &str,
    domain: &str,
    action: Option<&str>,
    seq: &SkeletonSequence,
) -> ClipRecord {
    let mut persons = Vec::with_capacity(seq.persons());
    for p in 0..seq.persons() {
        let mut frames = Vec::with_capacity(seq.frames());
        for f in 0..seq.frames() {
            let mut joints = Vec::with_capacity(seq.joints());
            for j in 0..seq.joints() {
                joints.push(seq.joint(p, f, j).to_vec());
            }
            frames.push(joints);
        }
        persons.push(frames);
    }
    ClipRecord {
        schema_version: CLIP_VERSION,
        id: id.to_string(),
        domain: domain.to_string(),
        action: action.map(str::to_string),
        frames: persons,
    }
}

/// Validate a clip record against the manifest schema and build the
/// in-memory sequence. A joint is marked absent when it is exactly zero in
/// every frame of that person.
pub fn record_to_sequence(
    record: &ClipRecord,
    schema: &Arc<JointSchema>,
    dims: usize,
) -> Result<SkeletonSequence> {
    let persons = record.frames.len();
    if persons == 0 || persons > 2 {
        return Err(Error::ClipValidation {
            id: record.id.clone(),
            field: "frames",
            detail: format!("expected 1-2 persons, got {persons}"),
        });
    }
    let frame_count = record.frames[0].len();
    if frame_count == 0 {
        return Err(Error::ClipValidation {
            id: record.id.clone(),
            field: "frames",
            detail: "zero frames".into(),
        });
    }
    let joints = schema.len();
    let mut seq = SkeletonSequence::zeros(persons, frame_count, dims, Arc::clone(schema));
    for (p, person) in record.frames.iter().enumerate() {
        if person.len() != frame_count {
            return Err(Error::ClipValidation {
                id: record.id.clone(),
                field: "frames",
                detail: format!(
                    "person {p} has {} frames, person 0 has {frame_count}",
                    person.len()
                ),
            });
        }
        let mut any_nonzero = vec![false; joints];
        for (f, frame) in person.iter().enumerate() {
            if frame.len() != joints {
                return Err(Error::ClipValidation {
                    id: record.id.clone(),
                    field: "frames",
                    detail: format!("frame {f} has {} joints, schema has {joints}", frame.len()),
                });
            }
            for (j, coords) in frame.iter().enumerate() {
                if coords.len() != dims {
                    return Err(Error::ClipValidation {
                        id: record.id.clone(),
                        field: "frames",
                        detail: format!(
                            "frame {f} joint {j} has {} coords, expected {dims}",
                            coords.len()
                        ),
                    });
                }
                for (d, &v) in coords.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::ClipValidation {
                            id: record.id.clone(),
                            field: "frames",
                            detail: format!("non-finite coordinate at frame {f} joint {j}"),
                        });
                    }
                    if v != 0.0 {
                        any_nonzero[j] = true;
                    }
                    seq.set(p, f, j, d, v);
                }
            }
        }
        for (j, &present) in any_nonzero.iter().enumerate() {
            seq.set_present(p, j, present);
        }
    }
    Ok(seq)
}

/// Load one domain split. Action labels are mapped into the source class
/// index space via the pairing map; labels of the target train split are
/// stripped.
pub fn load_domain(dir: &Path, domain_name: &str, split: Split) -> Result<Domain> {
    let manifest = load_manifest(dir)?;
    load_domain_with_manifest(dir, &manifest, domain_name, split)
}

pub fn load_domain_with_manifest(
    dir: &Path,
    manifest: &Manifest,
    domain_name: &str,
    split: Split,
) -> Result<Domain> {
    let info = manifest.domain(domain_name)?;
    let lists = manifest
        .splits
        .get(domain_name)
        .ok_or_else(|| Error::Manifest(format!("domain {domain_name} has no splits")))?;
    let ids = match split {
        Split::Train => &lists.train,
        Split::Test => &lists.test,
    };
    let schema = Arc::new(manifest.joint_schema.clone());
    let dims = infer_dims(dir, info, ids)?;
    let blind = split == Split::Train && info.role == DomainRole::Target;
    let mut samples = Vec::with_capacity(ids.len());
    for id in ids {
        let record = load_clip(dir, domain_name, id)?;
        let sequence = record_to_sequence(&record, &schema, dims)?;
        let action_label = if blind {
            None
        } else {
            record
                .action
                .as_deref()
                .map(|a| manifest.class_index(info.role, a))
                .transpose()?
        };
        samples.push(Sample {
            id: id.clone(),
            sequence,
            action_label,
            perm_label: None,
            domain_tag: match info.role {
                DomainRole::Source => DomainTag::Source,
                DomainRole::Target => DomainTag::Target,
            },
        });
    }
    Ok(Domain::new(domain_name, samples))
}

fn infer_dims(dir: &Path, info: &DomainInfo, ids: &[String]) -> Result<usize> {
    let Some(first) = ids.first() else {
        return Err(Error::Manifest(format!("domain {} split is empty", info.name)));
    };
    let record = load_clip(dir, &info.name, first)?;
    record
        .frames
        .first()
        .and_then(|p| p.first())
        .and_then(|f| f.first())
        .map(|c| c.len())
        .ok_or_else(|| Error::ClipValidation {
            id: record.id.clone(),
            field: "frames",
            detail: "empty clip".into(),
        })
}

/// Names of the two synthetic domains.
pub const SOURCE_DOMAIN: &str = "source";
pub const TARGET_DOMAIN: &str = "target";

/// Generate the synthetic benchmark and write it as a dataset directory.
pub fn generate_synthetic_dataset(cfg: &SynthConfig, dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let classes = cfg.class_names();
    let train_n = cfg.train_count();
    let mut splits = BTreeMap::new();
    for (domain, shifted) in [(SOURCE_DOMAIN, false), (TARGET_DOMAIN, true)] {
        let clips = generate_domain_clips(cfg, shifted)?;
        let mut lists = SplitLists::default();
        for clip in &clips {
            let id = format!("{}_{:04}", classes[clip.class], clip.index);
            let record =
                sequence_to_record(&id, domain, Some(&classes[clip.class]), &clip.sequence);
            save_clip(dir, &record)?;
            if clip.index < train_n {
                lists.train.push(id);
            } else {
                lists.test.push(id);
            }
        }
        splits.insert(domain.to_string(), lists);
    }
    let manifest = Manifest {
        schema_version: MANIFEST_VERSION,
        joint_schema: JointSchema::canonical25(),
        class_pairing: classes.iter().map(|c| (c.clone(), c.clone())).collect(),
        classes,
        domains: vec![
            DomainInfo {
                name: SOURCE_DOMAIN.into(),
                role: DomainRole::Source,
            },
            DomainInfo {
                name: TARGET_DOMAIN.into(),
                role: DomainRole::Target,
            },
        ],
        splits,
    };
    manifest.validate()?;
    save_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Write a preprocessed copy of a dataset (same layout, updated schema).
pub fn save_dataset(
    dir: &Path,
    manifest: &Manifest,
    domains: &[(String, Vec<(String, Option<String>, SkeletonSequence)>)],
) -> Result<()> {
    save_manifest(dir, manifest)?;
    for (domain, clips) in domains {
        for (id, action, seq) in clips {
            let record = sequence_to_record(id, domain, action.as_deref(), seq);
            save_clip(dir, &record)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            num_classes: 3,
            clips_per_class: 4,
            train_fraction: 0.5,
            min_frames: 8,
            max_frames: 10,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn generate_and_load_round_trip() {
        let dir = tempdir().unwrap();
        let manifest = generate_synthetic_dataset(&small_cfg(), dir.path()).unwrap();
        assert_eq!(manifest.classes.len(), 3);

        let src = load_domain(dir.path(), SOURCE_DOMAIN, Split::Train).unwrap();
        assert_eq!(src.len(), 6); // 3 classes x 2 train clips
        assert!(src.samples.iter().all(|s| s.action_label.is_some()));
        assert!(src.samples.iter().all(|s| s.domain_tag == DomainTag::Source));

        // Target train labels are blinded even though the files carry them.
        let tgt_train = load_domain(dir.path(), TARGET_DOMAIN, Split::Train).unwrap();
        assert!(tgt_train.samples.iter().all(|s| s.action_label.is_none()));
        let raw = load_clip(dir.path(), TARGET_DOMAIN, &tgt_train.samples[0].id).unwrap();
        assert!(raw.action.is_some(), "file keeps the label for evaluation");

        let tgt_test = load_domain(dir.path(), TARGET_DOMAIN, Split::Test).unwrap();
        assert!(tgt_test.samples.iter().all(|s| s.action_label.is_some()));
    }

    #[test]
    fn clip_round_trip_is_lossless() {
        let dir = tempdir().unwrap();
        generate_synthetic_dataset(&small_cfg(), dir.path()).unwrap();
        let manifest = load_manifest(dir.path()).unwrap();
        let id = &manifest.splits[SOURCE_DOMAIN].train[0];
        let record = load_clip(dir.path(), SOURCE_DOMAIN, id).unwrap();
        save_clip(dir.path(), &record).unwrap();
        let again = load_clip(dir.path(), SOURCE_DOMAIN, id).unwrap();
        assert_eq!(record.frames, again.frames);
        for (a, b) in record
            .frames
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .zip(again.frames.iter().flatten().flatten().flatten())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        generate_synthetic_dataset(&small_cfg(), d1.path()).unwrap();
        generate_synthetic_dataset(&small_cfg(), d2.path()).unwrap();
        let manifest = load_manifest(d1.path()).unwrap();
        for id in manifest.splits[TARGET_DOMAIN]
            .train
            .iter()
            .chain(&manifest.splits[TARGET_DOMAIN].test)
        {
            let a = std::fs::read(clip_path(d1.path(), TARGET_DOMAIN, id)).unwrap();
            let b = std::fs::read(clip_path(d2.path(), TARGET_DOMAIN, id)).unwrap();
            assert_eq!(a, b, "clip {id} differs between runs");
        }
    }

    #[test]
    fn truncated_clip_is_rejected_with_id() {
        let dir = tempdir().unwrap();
        generate_synthetic_dataset(&small_cfg(), dir.path()).unwrap();
        let manifest = load_manifest(dir.path()).unwrap();
        let id = manifest.splits[SOURCE_DOMAIN].train[0].clone();
        let mut record = load_clip(dir.path(), SOURCE_DOMAIN, &id).unwrap();
        record.frames[0][2].pop(); // drop one joint from frame 2
        save_clip(dir.path(), &record).unwrap();
        let err = load_domain(dir.path(), SOURCE_DOMAIN, Split::Train).unwrap_err();
        assert!(err.to_string().contains(&id), "error should name the clip: {err}");
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let dir = tempdir().unwrap();
        generate_synthetic_dataset(&small_cfg(), dir.path()).unwrap();
        let manifest = load_manifest(dir.path()).unwrap();
        let id = manifest.splits[SOURCE_DOMAIN].train[0].clone();
        let path = clip_path(dir.path(), SOURCE_DOMAIN, &id);
        let body = std::fs::read_to_string(&path).unwrap();
        let patched = body.replacen('{', "{\"future_field\":42,", 1);
        std::fs::write(&path, patched).unwrap();
        assert!(load_domain(dir.path(), SOURCE_DOMAIN, Split::Train).is_ok());
    }

    #[test]
    fn non_bijective_pairing_rejected() {
        let dir = tempdir().unwrap();
        generate_synthetic_dataset(&small_cfg(), dir.path()).unwrap();
        let mut manifest = load_manifest(dir.path()).unwrap();
        let dup = manifest.class_pairing[0].clone();
        manifest.class_pairing.push(dup);
        assert!(manifest.validate().is_err());

        let mut manifest2 = load_manifest(dir.path()).unwrap();
        manifest2.class_pairing[1].1 = manifest2.class_pairing[0].1.clone();
        assert!(manifest2.validate().is_err());
    }

    #[test]
    fn target_labels_map_through_pairing() {
        let dir = tempdir().unwrap();
        generate_synthetic_dataset(&small_cfg(), dir.path()).unwrap();
        let mut manifest = load_manifest(dir.path()).unwrap();
        // Rename target classes and keep the pairing consistent.
        for (src, tgt) in &mut manifest.class_pairing {
            *tgt = format!("tgt_{src}");
        }
        for id in manifest.splits[TARGET_DOMAIN].train.clone() {
            let mut record = load_clip(dir.path(), TARGET_DOMAIN, &id).unwrap();
            record.action = record.action.map(|a| format!("tgt_{a}"));
            save_clip(dir.path(), &record).unwrap();
        }
        for id in manifest.splits[TARGET_DOMAIN].test.clone() {
            let mut record = load_clip(dir.path(), TARGET_DOMAIN, &id).unwrap();
            record.action = record.action.map(|a| format!("tgt_{a}"));
            save_clip(dir.path(), &record).unwrap();
        }
        save_manifest(dir.path(), &manifest).unwrap();
        let tgt = load_domain(dir.path(), TARGET_DOMAIN, Split::Test).unwrap();
        // Labels land in the source index space.
        for s in &tgt.samples {
            let label = s.action_label.unwrap();
            assert!(label < manifest.classes.len());
            let class = &manifest.classes[label];
            assert!(s.id.starts_with(class.as_str()));
        }
    }
}
