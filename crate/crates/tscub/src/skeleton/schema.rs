//! Joint naming, body-part grouping, and the canonical 25-joint layout.
//!
//! The canonical layout follows the common 25-joint depth-sensor skeleton.
//! Every joint belongs to exactly one of five body-part groups; group member
//! order is mirror-aligned, i.e. the k-th joint of the left arm corresponds
//! anatomically to the k-th joint of the right arm. Limb-swap transforms and
//! joint-subset selection rely on that alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five body-part groups a joint can belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    Trunk,
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
}

impl BodyPart {
    pub const ALL: [BodyPart; 5] = [
        BodyPart::Trunk,
        BodyPart::LeftArm,
        BodyPart::RightArm,
        BodyPart::LeftLeg,
        BodyPart::RightLeg,
    ];
}

/// One named joint with its group assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub part: BodyPart,
}

/// Ordered joint list with body-part grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSchema {
    joints: Vec<Joint>,
}

pub const RIGHT_SHOULDER: &str = "right_shoulder";
pub const LEFT_SHOULDER: &str = "left_shoulder";
pub const SPINE_BASE: &str = "spine_base";
pub const SPINE: &str = "spine";

/// Canonical 25-joint table: index, name, group.
///
/// | idx | name           | group     | idx | name           | group     |
/// |-----|----------------|-----------|-----|----------------|-----------|
/// | 0   | spine_base     | trunk     | 13  | left_knee      | left_leg  |
/// | 1   | spine_mid      | trunk     | 14  | left_ankle     | left_leg  |
/// | 2   | neck           | trunk     | 15  | left_foot      | left_leg  |
/// | 3   | head           | trunk     | 16  | right_hip      | right_leg |
/// | 4   | left_shoulder  | left_arm  | 17  | right_knee     | right_leg |
/// | 5   | left_elbow     | left_arm  | 18  | right_ankle    | right_leg |
/// | 6   | left_wrist     | left_arm  | 19  | right_foot     | right_leg |
/// | 7   | left_hand      | left_arm  | 20  | spine          | trunk     |
/// | 8   | right_shoulder | right_arm | 21  | left_hand_tip  | left_arm  |
/// | 9   | right_elbow    | right_arm | 22  | left_thumb     | left_arm  |
/// | 10  | right_wrist    | right_arm | 23  | right_hand_tip | right_arm |
/// | 11  | right_hand     | right_arm | 24  | right_thumb    | right_arm |
/// | 12  | left_hip       | left_leg  |     |                |           |
const CANONICAL25: [(&str, BodyPart); 25] = [
    ("spine_base", BodyPart::Trunk),
    ("spine_mid", BodyPart::Trunk),
    ("neck", BodyPart::Trunk),
    ("head", BodyPart::Trunk),
    ("left_shoulder", BodyPart::LeftArm),
    ("left_elbow", BodyPart::LeftArm),
    ("left_wrist", BodyPart::LeftArm),
    ("left_hand", BodyPart::LeftArm),
    ("right_shoulder", BodyPart::RightArm),
    ("right_elbow", BodyPart::RightArm),
    ("right_wrist", BodyPart::RightArm),
    ("right_hand", BodyPart::RightArm),
    ("left_hip", BodyPart::LeftLeg),
    ("left_knee", BodyPart::LeftLeg),
    ("left_ankle", BodyPart::LeftLeg),
    ("left_foot", BodyPart::LeftLeg),
    ("right_hip", BodyPart::RightLeg),
    ("right_knee", BodyPart::RightLeg),
    ("right_ankle", BodyPart::RightLeg),
    ("right_foot", BodyPart::RightLeg),
    ("spine", BodyPart::Trunk),
    ("left_hand_tip", BodyPart::LeftArm),
    ("left_thumb", BodyPart::LeftArm),
    ("right_hand_tip", BodyPart::RightArm),
    ("right_thumb", BodyPart::RightArm),
];

impl JointSchema {
    /// The canonical 25-joint schema.
    pub fn canonical25() -> Self {
        JointSchema {
            joints: CANONICAL25
                .iter()
                .map(|&(name, part)| Joint {
                    name: name.to_string(),
                    part,
                })
                .collect(),
        }
    }

    /// Build a schema from an explicit joint list. Every body-part group must
    /// be nonempty and names must be unique.
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        let schema = JointSchema { joints };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        for part in BodyPart::ALL {
            if !self.joints.iter().any(|j| j.part == part) {
                return Err(Error::InvalidArgument(format!(
                    "joint schema leaves body part {part:?} empty"
                )));
            }
        }
        for (i, a) in self.joints.iter().enumerate() {
            if self.joints[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate joint name {}",
                    a.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.joints[idx].name
    }

    pub fn part(&self, idx: usize) -> BodyPart {
        self.joints[idx].part
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownJoint(name.to_string()))
    }

    /// Indices of the joints in `part`, in schema order.
    pub fn part_indices(&self, part: BodyPart) -> Vec<usize> {
        self.joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.part == part)
            .map(|(i, _)| i)
            .collect()
    }

    /// Restrict the schema to `names`, preserving canonical order.
    /// Returns the reduced schema and the kept indices into `self`.
    pub fn subset(&self, names: &[&str]) -> Result<(JointSchema, Vec<usize>)> {
        let mut keep = Vec::with_capacity(names.len());
        for &name in names {
            let idx = self.require(name)?;
            if keep.contains(&idx) {
                return Err(Error::InvalidArgument(format!(
                    "joint {name} listed twice in subset"
                )));
            }
            keep.push(idx);
        }
        keep.sort_unstable();
        let joints = keep.iter().map(|&i| self.joints[i].clone()).collect();
        Ok((JointSchema::new(joints)?, keep))
    }
}

fn retained(removed: &[&str]) -> Vec<&'static str> {
    CANONICAL25
        .iter()
        .map(|&(name, _)| name)
        .filter(|name| !removed.contains(name))
        .collect()
}

/// 22-joint subset: drops spine_mid and both thumbs.
pub fn subset_nj22() -> Vec<&'static str> {
    retained(&["spine_mid", "left_thumb", "right_thumb"])
}

/// 18-joint subset: additionally drops hands and ankles.
pub fn subset_nj18() -> Vec<&'static str> {
    retained(&[
        "spine_mid",
        "left_hand",
        "right_hand",
        "left_ankle",
        "right_ankle",
        "left_thumb",
        "right_thumb",
    ])
}

/// 12-joint subset: major joints only.
pub fn subset_nj12() -> Vec<&'static str> {
    retained(&[
        "spine_mid",
        "left_hand",
        "right_hand",
        "left_ankle",
        "right_ankle",
        "left_wrist",
        "right_wrist",
        "left_elbow",
        "right_elbow",
        "left_knee",
        "right_knee",
        "left_thumb",
        "right_thumb",
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_group_sizes() {
        let s = JointSchema::canonical25();
        assert_eq!(s.len(), 25);
        assert_eq!(s.part_indices(BodyPart::Trunk).len(), 5);
        assert_eq!(s.part_indices(BodyPart::LeftArm).len(), 6);
        assert_eq!(s.part_indices(BodyPart::RightArm).len(), 6);
        assert_eq!(s.part_indices(BodyPart::LeftLeg).len(), 4);
        assert_eq!(s.part_indices(BodyPart::RightLeg).len(), 4);
    }

    #[test]
    fn mirror_alignment() {
        let s = JointSchema::canonical25();
        let la = s.part_indices(BodyPart::LeftArm);
        let ra = s.part_indices(BodyPart::RightArm);
        for (&l, &r) in la.iter().zip(&ra) {
            assert_eq!(
                s.name(l).replace("left", "x"),
                s.name(r).replace("right", "x")
            );
        }
        let ll = s.part_indices(BodyPart::LeftLeg);
        let rl = s.part_indices(BodyPart::RightLeg);
        for (&l, &r) in ll.iter().zip(&rl) {
            assert_eq!(
                s.name(l).replace("left", "x"),
                s.name(r).replace("right", "x")
            );
        }
    }

    #[test]
    fn reference_joints_present() {
        let s = JointSchema::canonical25();
        for name in [RIGHT_SHOULDER, LEFT_SHOULDER, SPINE_BASE, SPINE] {
            assert!(s.index_of(name).is_some(), "missing {name}");
        }
    }

    #[test]
    fn subset_sizes() {
        assert_eq!(subset_nj22().len(), 22);
        assert_eq!(subset_nj18().len(), 18);
        assert_eq!(subset_nj12().len(), 12);
    }

    #[test]
    fn subsets_keep_groups_nonempty_and_arms_mirrored() {
        let full = JointSchema::canonical25();
        for names in [subset_nj22(), subset_nj18(), subset_nj12()] {
            let (s, _) = full.subset(&names).unwrap();
            for part in BodyPart::ALL {
                assert!(!s.part_indices(part).is_empty());
            }
            assert_eq!(
                s.part_indices(BodyPart::LeftArm).len(),
                s.part_indices(BodyPart::RightArm).len()
            );
            assert_eq!(
                s.part_indices(BodyPart::LeftLeg).len(),
                s.part_indices(BodyPart::RightLeg).len()
            );
        }
    }

    #[test]
    fn unknown_joint_rejected() {
        let s = JointSchema::canonical25();
        assert!(s.subset(&["left_shoulder", "tail"]).is_err());
    }
}
