//! Skeleton sequence types and raw-data preprocessing.
//!
//! A [`SkeletonSequence`] is one clip: `persons × frames × joints × dims`
//! coordinates plus a per-person per-joint presence mask. Absent joints are
//! exact-zero padded and flagged absent in the mask; padded persons are
//! all-zero with an all-absent mask. All preprocessing operations are pure.

mod preprocess;
pub mod schema;

pub use preprocess::{
    add_gaussian_noise, resample_frames, rotate_normalize, select_joints, subset_by_name,
    RotationReport,
};
pub use schema::{BodyPart, Joint, JointSchema};

use std::sync::Arc;

use crate::error::{Error, Result};

/// One skeleton clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    persons: usize,
    frames: usize,
    dims: usize,
    schema: Arc<JointSchema>,
    /// Row-major `[persons][frames][joints][dims]`.
    data: Vec<f64>,
    /// Row-major `[persons][joints]`.
    presence: Vec<bool>,
}

impl SkeletonSequence {
    /// All-zero clip with every joint marked present.
    pub fn zeros(persons: usize, frames: usize, dims: usize, schema: Arc<JointSchema>) -> Self {
        let joints = schema.len();
        SkeletonSequence {
            persons,
            frames,
            dims,
            data: vec![0.0; persons * frames * joints * dims],
            presence: vec![true; persons * joints],
            schema,
        }
    }

    /// Build from raw coordinates; validates shape and finiteness.
    pub fn from_data(
        persons: usize,
        frames: usize,
        dims: usize,
        schema: Arc<JointSchema>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if persons == 0 || frames == 0 || !(dims == 2 || dims == 3) {
            return Err(Error::InvalidArgument(format!(
                "bad sequence dims: persons={persons} frames={frames} dims={dims}"
            )));
        }
        let expect = persons * frames * schema.len() * dims;
        if data.len() != expect {
            return Err(Error::ShapeMismatch {
                op: "SkeletonSequence::from_data",
                detail: format!("got {} values, expected {expect}", data.len()),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate {bad}"
            )));
        }
        let presence = vec![true; persons * schema.len()];
        Ok(SkeletonSequence {
            persons,
            frames,
            dims,
            schema,
            data,
            presence,
        })
    }

    pub fn persons(&self) -> usize {
        self.persons
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.schema.len()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn schema(&self) -> &JointSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<JointSchema> {
        Arc::clone(&self.schema)
    }

    #[inline]
    fn idx(&self, person: usize, frame: usize, joint: usize, dim: usize) -> usize {
        ((person * self.frames + frame) * self.schema.len() + joint) * self.dims + dim
    }

    #[inline]
    pub fn get(&self, person: usize, frame: usize, joint: usize, dim: usize) -> f64 {
        self.data[self.idx(person, frame, joint, dim)]
    }

    #[inline]
    pub fn set(&mut self, person: usize, frame: usize, joint: usize, dim: usize, v: f64) {
        let i = self.idx(person, frame, joint, dim);
        self.data[i] = v;
    }

    /// Coordinates of one joint in one frame.
    pub fn joint(&self, person: usize, frame: usize, joint: usize) -> &[f64] {
        let i = self.idx(person, frame, joint, 0);
        &self.data[i..i + self.dims]
    }

    pub fn is_present(&self, person: usize, joint: usize) -> bool {
        self.presence[person * self.schema.len() + joint]
    }

    pub fn set_present(&mut self, person: usize, joint: usize, present: bool) {
        let k = self.schema.len();
        self.presence[person * k + joint] = present;
    }

    /// Mark a person slot absent and zero its coordinates.
    pub fn pad_person(&mut self, person: usize) {
        let k = self.schema.len();
        for j in 0..k {
            self.presence[person * k + j] = false;
        }
        let start = self.idx(person, 0, 0, 0);
        let len = self.frames * k * self.dims;
        for v in &mut self.data[start..start + len] {
            *v = 0.0;
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Max absolute coordinate difference against another sequence of the
    /// same shape.
    pub fn max_abs_diff(&self, other: &SkeletonSequence) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Which domain a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainTag {
    Source,
    Target,
}

/// One training/evaluation sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub sequence: SkeletonSequence,
    /// Action class index; present on source-train samples, absent on
    /// target-train samples.
    pub action_label: Option<usize>,
    /// Permutation class index; present once the sample has passed through
    /// augmentation.
    pub perm_label: Option<usize>,
    pub domain_tag: DomainTag,
}

/// A named, ordered collection of samples sharing one joint schema.
#[derive(Debug, Clone)]
pub struct Domain {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl Domain {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Self {
        Domain {
            name: name.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_data_validates() {
        let schema = Arc::new(JointSchema::canonical25());
        assert!(SkeletonSequence::from_data(1, 2, 3, Arc::clone(&schema), vec![0.0; 10]).is_err());
        let mut vals = vec![0.0; 2 * 25 * 3];
        vals[5] = f64::NAN;
        assert!(SkeletonSequence::from_data(1, 2, 3, Arc::clone(&schema), vals).is_err());
        assert!(
            SkeletonSequence::from_data(1, 2, 3, schema, vec![0.0; 2 * 25 * 3]).is_ok()
        );
    }

    #[test]
    fn pad_person_zeroes_and_flags() {
        let schema = Arc::new(JointSchema::canonical25());
        let mut seq = SkeletonSequence::zeros(2, 3, 3, schema);
        seq.set(1, 1, 4, 0, 7.0);
        seq.pad_person(1);
        assert_eq!(seq.get(1, 1, 4, 0), 0.0);
        assert!(!seq.is_present(1, 4));
        assert!(seq.is_present(0, 4));
    }
}
