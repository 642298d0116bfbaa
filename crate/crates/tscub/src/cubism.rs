//! Block-permutation transforms over skeleton clips and the machinery that
//! turns them into self-supervised classification data.
//!
//! Two families of transforms create the pretext tasks: temporal segment
//! reordering (clip split into `N` uniform contiguous segments, segments
//! permuted) and spatial limb swaps (left/right arm blocks or left/right leg
//! blocks exchanged). Alternative tasks (frame reversal, joint-list jigsaw,
//! limb freezing, coupled temporal+spatial) are provided for comparison runs.
//!
//! Label 0 always denotes the identity transform. Block permutations are
//! enumerated in lexicographic order, so a label maps to the same transform
//! everywhere.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{BodyPart, Domain, DomainTag, Sample, SkeletonSequence};

/// Transform family of a [`PermutationSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// Reorder temporal segments; `N!` classes.
    Temporal,
    /// Swap limb coordinate blocks; 3 classes (identity, arms, legs).
    Spatial,
    /// Reverse the frame order; 2 classes.
    TemFlip,
    /// Permute thirds of the flat joint list; 6 classes.
    SpaJigsaw,
    /// Hold arm and leg joints at their frame-0 pose; 2 classes.
    Freeze,
    /// Temporal and spatial transform composed; `N! * 3` classes.
    Coupled,
}

/// A concrete labelled transform instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationSpec {
    kind: TransformKind,
    label: usize,
    num_classes: usize,
    /// Temporal segment count (temporal/coupled kinds).
    segments: usize,
    /// Block-level permutation: output block `i` takes input block
    /// `block_map[i]`. Empty for kinds without a static block structure
    /// (tem_flip, freeze).
    block_map: Vec<usize>,
}

/// Joint-list segment count for the jigsaw task.
const JIGSAW_SEGMENTS: usize = 3;

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Permutation of `0..n` with lexicographic rank `rank`.
fn lex_permutation(rank: usize, n: usize) -> Vec<usize> {
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    let mut rem = rank;
    for i in (1..=n).rev() {
        let f = factorial(i - 1);
        out.push(items.remove(rem / f));
        rem %= f;
    }
    out
}

fn lex_rank(perm: &[usize]) -> usize {
    let n = perm.len();
    let mut rank = 0;
    for i in 0..n {
        let smaller = perm[i + 1..].iter().filter(|&&x| x < perm[i]).count();
        rank += smaller * factorial(n - 1 - i);
    }
    rank
}

fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Split `0..len` into `n` contiguous blocks as uniform as possible; the
/// first `len % n` blocks carry one extra element.
fn uniform_blocks(len: usize, n: usize) -> Vec<std::ops::Range<usize>> {
    let base = len / n;
    let extra = len % n;
    let mut blocks = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let size = base + usize::from(i < extra);
        blocks.push(start..start + size);
        start += size;
    }
    blocks
}

impl PermutationSpec {
    pub fn temporal(label: usize, segments: usize) -> Result<Self> {
        if segments < 2 {
            return Err(Error::InvalidArgument(format!(
                "temporal transform needs at least 2 segments, got {segments}"
            )));
        }
        let num_classes = factorial(segments);
        if label >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "temporal label {label} out of range for {segments} segments ({num_classes} classes)"
            )));
        }
        Ok(PermutationSpec {
            kind: TransformKind::Temporal,
            label,
            num_classes,
            segments,
            block_map: lex_permutation(label, segments),
        })
    }

    pub fn spatial(label: usize) -> Result<Self> {
        // Block layout: [trunk, left_arm, right_arm, left_leg, right_leg].
        let block_map = match label {
            0 => vec![0, 1, 2, 3, 4],
            1 => vec![0, 2, 1, 3, 4],
            2 => vec![0, 1, 2, 4, 3],
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "spatial label {label} out of range (3 classes)"
                )))
            }
        };
        Ok(PermutationSpec {
            kind: TransformKind::Spatial,
            label,
            num_classes: 3,
            segments: 0,
            block_map,
        })
    }

    pub fn tem_flip(label: usize) -> Result<Self> {
        if label >= 2 {
            return Err(Error::InvalidArgument(format!(
                "tem_flip label {label} out of range (2 classes)"
            )));
        }
        Ok(PermutationSpec {
            kind: TransformKind::TemFlip,
            label,
            num_classes: 2,
            segments: 0,
            block_map: Vec::new(),
        })
    }

    pub fn spa_jigsaw(label: usize) -> Result<Self> {
        let num_classes = factorial(JIGSAW_SEGMENTS);
        if label >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "spa_jigsaw label {label} out of range ({num_classes} classes)"
            )));
        }
        Ok(PermutationSpec {
            kind: TransformKind::SpaJigsaw,
            label,
            num_classes,
            segments: JIGSAW_SEGMENTS,
            block_map: lex_permutation(label, JIGSAW_SEGMENTS),
        })
    }

    pub fn freeze(label: usize) -> Result<Self> {
        if label >= 2 {
            return Err(Error::InvalidArgument(format!(
                "freeze label {label} out of range (2 classes)"
            )));
        }
        Ok(PermutationSpec {
            kind: TransformKind::Freeze,
            label,
            num_classes: 2,
            segments: 0,
            block_map: Vec::new(),
        })
    }

    /// Coupled transform: `label = temporal_label * 3 + spatial_label`.
    pub fn coupled(label: usize, segments: usize) -> Result<Self> {
        let num_classes = factorial(segments) * 3;
        if label >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "coupled label {label} out of range ({num_classes} classes)"
            )));
        }
        Ok(PermutationSpec {
            kind: TransformKind::Coupled,
            label,
            num_classes,
            segments,
            block_map: lex_permutation(label / 3, segments),
        })
    }

    pub fn new(kind: TransformKind, label: usize, segments: usize) -> Result<Self> {
        match kind {
            TransformKind::Temporal => Self::temporal(label, segments),
            TransformKind::Spatial => Self::spatial(label),
            TransformKind::TemFlip => Self::tem_flip(label),
            TransformKind::SpaJigsaw => Self::spa_jigsaw(label),
            TransformKind::Freeze => Self::freeze(label),
            TransformKind::Coupled => Self::coupled(label, segments),
        }
    }

    /// Size of the label space for a transform family.
    pub fn class_count(kind: TransformKind, segments: usize) -> usize {
        match kind {
            TransformKind::Temporal => factorial(segments),
            TransformKind::Spatial => 3,
            TransformKind::TemFlip | TransformKind::Freeze => 2,
            TransformKind::SpaJigsaw => factorial(JIGSAW_SEGMENTS),
            TransformKind::Coupled => factorial(segments) * 3,
        }
    }

    /// Every spec of a family, by ascending label.
    pub fn all(kind: TransformKind, segments: usize) -> Vec<Self> {
        (0..Self::class_count(kind, segments))
            .map(|l| Self::new(kind, l, segments).expect("label in range"))
            .collect()
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn block_map(&self) -> &[usize] {
        &self.block_map
    }

    pub fn is_identity(&self) -> bool {
        self.label == 0
    }

    /// Spec whose transform inverts this one. `None` for the freeze task,
    /// which is not invertible.
    ///
    /// For block-partitioned kinds (temporal, spa_jigsaw and the temporal
    /// factor of coupled) the inverse spec restores the input exactly when
    /// the partition is uniform, i.e. the block count divides the frame
    /// (or joint) count; with ragged blocks the induced map is still a
    /// bijection but its inverse permutes unequal-sized blocks and falls
    /// outside the family.
    pub fn inverse(&self) -> Option<Self> {
        match self.kind {
            TransformKind::Temporal => {
                let label = lex_rank(&invert_perm(&self.block_map));
                Some(Self::temporal(label, self.segments).expect("rank in range"))
            }
            // Arm swap and leg swap are involutions.
            TransformKind::Spatial => Some(self.clone()),
            TransformKind::TemFlip => Some(self.clone()),
            TransformKind::SpaJigsaw => {
                let label = lex_rank(&invert_perm(&self.block_map));
                Some(Self::spa_jigsaw(label).expect("rank in range"))
            }
            TransformKind::Freeze => {
                if self.label == 0 {
                    Some(self.clone())
                } else {
                    None
                }
            }
            TransformKind::Coupled => {
                let (t, s) = self.coupled_parts();
                let ti = t.inverse()?.label;
                let si = s.inverse()?.label;
                Some(Self::coupled(ti * 3 + si, self.segments).expect("rank in range"))
            }
        }
    }

    /// Temporal and spatial factors of a coupled spec.
    pub fn coupled_parts(&self) -> (PermutationSpec, PermutationSpec) {
        assert_eq!(self.kind, TransformKind::Coupled, "not a coupled spec");
        (
            Self::temporal(self.label / 3, self.segments).expect("label in range"),
            Self::spatial(self.label % 3).expect("label in range"),
        )
    }
}

/// Reorder the clip's temporal segments according to `spec`.
pub fn temporal_permute(seq: &SkeletonSequence, spec: &PermutationSpec) -> Result<SkeletonSequence> {
    if spec.kind != TransformKind::Temporal {
        return Err(Error::InvalidArgument(format!(
            "temporal_permute given {:?} spec",
            spec.kind
        )));
    }
    if spec.segments > seq.frames() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} frames into {} segments",
            seq.frames(),
            spec.segments
        )));
    }
    if spec.is_identity() {
        return Ok(seq.clone());
    }
    let blocks = uniform_blocks(seq.frames(), spec.segments);
    let mut frame_map = Vec::with_capacity(seq.frames());
    for &src_block in &spec.block_map {
        frame_map.extend(blocks[src_block].clone());
    }
    Ok(remap_frames(seq, &frame_map))
}

/// Swap limb coordinate blocks according to `spec`. The swap matches the
/// k-th joint of one limb group with the k-th joint of its mirror group, so
/// the groups being swapped must have equal joint counts.
pub fn spatial_permute(seq: &SkeletonSequence, spec: &PermutationSpec) -> Result<SkeletonSequence> {
    if spec.kind != TransformKind::Spatial {
        return Err(Error::InvalidArgument(format!(
            "spatial_permute given {:?} spec",
            spec.kind
        )));
    }
    if spec.is_identity() {
        return Ok(seq.clone());
    }
    let schema = seq.schema();
    let (a, b) = match spec.label {
        1 => (BodyPart::LeftArm, BodyPart::RightArm),
        _ => (BodyPart::LeftLeg, BodyPart::RightLeg),
    };
    let left = schema.part_indices(a);
    let right = schema.part_indices(b);
    if left.len() != right.len() {
        return Err(Error::InvalidArgument(format!(
            "{a:?} and {b:?} have unequal joint counts ({} vs {})",
            left.len(),
            right.len()
        )));
    }
    let mut joint_map: Vec<usize> = (0..seq.joints()).collect();
    for (&l, &r) in left.iter().zip(&right) {
        joint_map[l] = r;
        joint_map[r] = l;
    }
    Ok(remap_joints(seq, &joint_map))
}

/// Apply one of the alternative pretext transforms.
pub fn alt_transform(seq: &SkeletonSequence, spec: &PermutationSpec) -> Result<SkeletonSequence> {
    match spec.kind {
        TransformKind::TemFlip => {
            if spec.is_identity() {
                return Ok(seq.clone());
            }
            let frame_map: Vec<usize> = (0..seq.frames()).rev().collect();
            Ok(remap_frames(seq, &frame_map))
        }
        TransformKind::SpaJigsaw => {
            if spec.is_identity() {
                return Ok(seq.clone());
            }
            if spec.segments > seq.joints() {
                return Err(Error::InvalidArgument(format!(
                    "cannot split {} joints into {} segments",
                    seq.joints(),
                    spec.segments
                )));
            }
            let blocks = uniform_blocks(seq.joints(), spec.segments);
            let mut joint_map = Vec::with_capacity(seq.joints());
            for &src_block in &spec.block_map {
                joint_map.extend(blocks[src_block].clone());
            }
            Ok(remap_joints(seq, &joint_map))
        }
        TransformKind::Freeze => {
            if spec.is_identity() {
                return Ok(seq.clone());
            }
            let schema = seq.schema();
            let mut limb = vec![false; seq.joints()];
            for part in [
                BodyPart::LeftArm,
                BodyPart::RightArm,
                BodyPart::LeftLeg,
                BodyPart::RightLeg,
            ] {
                for j in schema.part_indices(part) {
                    limb[j] = true;
                }
            }
            let mut out = seq.clone();
            for p in 0..seq.persons() {
                for f in 1..seq.frames() {
                    for (j, &is_limb) in limb.iter().enumerate() {
                        if !is_limb {
                            continue;
                        }
                        for d in 0..seq.dims() {
                            out.set(p, f, j, d, seq.get(p, 0, j, d));
                        }
                    }
                }
            }
            Ok(out)
        }
        TransformKind::Coupled => {
            let (t, s) = spec.coupled_parts();
            spatial_permute(&temporal_permute(seq, &t)?, &s)
        }
        other => Err(Error::InvalidArgument(format!(
            "alt_transform given {other:?} spec"
        ))),
    }
}

/// Apply any transform family.
pub fn apply_transform(seq: &SkeletonSequence, spec: &PermutationSpec) -> Result<SkeletonSequence> {
    match spec.kind {
        TransformKind::Temporal => temporal_permute(seq, spec),
        TransformKind::Spatial => spatial_permute(seq, spec),
        _ => alt_transform(seq, spec),
    }
}

/// Output frame `i` takes input frame `frame_map[i]`; joints untouched.
fn remap_frames(seq: &SkeletonSequence, frame_map: &[usize]) -> SkeletonSequence {
    let mut out = seq.clone();
    for p in 0..seq.persons() {
        for (dst, &src) in frame_map.iter().enumerate() {
            for j in 0..seq.joints() {
                for d in 0..seq.dims() {
                    out.set(p, dst, j, d, seq.get(p, src, j, d));
                }
            }
        }
    }
    out
}

/// Output joint `j` takes input joint `joint_map[j]` in every frame; the
/// presence mask is permuted alongside.
fn remap_joints(seq: &SkeletonSequence, joint_map: &[usize]) -> SkeletonSequence {
    let mut out = seq.clone();
    for p in 0..seq.persons() {
        for (dst, &src) in joint_map.iter().enumerate() {
            out.set_present(p, dst, seq.is_present(p, src));
        }
        for f in 0..seq.frames() {
            for (dst, &src) in joint_map.iter().enumerate() {
                for d in 0..seq.dims() {
                    out.set(p, f, dst, d, seq.get(p, f, src, d));
                }
            }
        }
    }
    out
}

/// Ratio-controlled batch mixing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixConfig {
    /// Fraction of ordered (label 0) samples per batch, in (0, 1].
    pub ordered_ratio: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ordered_ratio > 0.0 && self.ordered_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ordered_ratio must be in (0, 1], got {}",
                self.ordered_ratio
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Deck that deals non-identity labels in near-equal proportion: a shuffled
/// copy of `1..num_classes`, reshuffled whenever exhausted.
struct LabelDeck {
    labels: Vec<usize>,
    pos: usize,
}

impl LabelDeck {
    fn new(num_classes: usize) -> Self {
        LabelDeck {
            labels: (1..num_classes).collect(),
            pos: usize::MAX,
        }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos >= self.labels.len() {
            self.labels.shuffle(rng);
            self.pos = 0;
        }
        let l = self.labels[self.pos];
        self.pos += 1;
        l
    }
}

/// Build the augmented domain for one epoch: every sample is either kept
/// ordered (perm label 0) or replaced by a transformed copy whose label is
/// drawn in equal proportion from the non-identity classes. Batch-sized
/// runs of the input order each contain `round(ordered_ratio * batch)`
/// ordered samples. Action labels are carried through unchanged.
pub fn build_augmented_domain(
    dom: &Domain,
    kind: TransformKind,
    segments: usize,
    mix: &MixConfig,
) -> Result<Domain> {
    mix.validate()?;
    if dom.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "domain {} is empty",
            dom.name
        )));
    }
    let num_classes = PermutationSpec::class_count(kind, segments);
    let mut rng = ChaCha8Rng::seed_from_u64(mix.rng_seed);
    let mut deck = LabelDeck::new(num_classes);
    let mut samples = Vec::with_capacity(dom.len());

    for chunk in dom.samples.chunks(mix.batch_size) {
        let n_ordered = ((mix.ordered_ratio * chunk.len() as f64).round() as usize).min(chunk.len());
        let mut positions: Vec<usize> = (0..chunk.len()).collect();
        positions.shuffle(&mut rng);
        let mut labels = vec![0usize; chunk.len()];
        for &pos in positions.iter().skip(n_ordered) {
            labels[pos] = deck.draw(&mut rng);
        }
        for (sample, &label) in chunk.iter().zip(&labels) {
            let mut out = sample.clone();
            if label != 0 {
                let spec = PermutationSpec::new(kind, label, segments)?;
                out.sequence = apply_transform(&sample.sequence, &spec)?;
            }
            out.perm_label = Some(label);
            samples.push(out);
        }
    }
    Ok(Domain::new(dom.name.clone(), samples))
}

/// One mixed batch: the source half followed by the target half.
#[derive(Debug, Clone)]
pub struct Batch {
    pub samples: Vec<Sample>,
}

impl Batch {
    pub fn source_count(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.domain_tag == DomainTag::Source)
            .count()
    }
}

/// Pair source and target samples into equal-count batches covering one
/// epoch: each batch takes one half-batch group from each domain. Groups
/// are the same consecutive runs [`build_augmented_domain`] balanced, so
/// the per-batch ordered ratio is preserved; full groups are shuffled by
/// `seed` (partial trailing groups stay last). Every sample of the larger
/// domain is visited exactly once; the smaller domain's groups are
/// recycled. The final batch may be short when the larger domain size is
/// not a multiple of `batch_size / 2`.
pub fn mixed_batches(
    src: &Domain,
    tgt: &Domain,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::InvalidArgument(
            "mixed_batches requires nonempty source and target domains".into(),
        ));
    }
    if batch_size < 2 || batch_size % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "paired batches need an even batch_size of at least 2, got {batch_size}"
        )));
    }
    let half = batch_size / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src_order = shuffled_groups(src.len(), half, &mut rng);
    let tgt_order = shuffled_groups(tgt.len(), half, &mut rng);

    // The larger domain drives the epoch; the smaller one is recycled
    // through a wrapping cursor.
    let src_drives = src.len() >= tgt.len();
    let (driver, follower) = if src_drives {
        (&src_order, &tgt_order)
    } else {
        (&tgt_order, &src_order)
    };
    let n_batches = driver.len().div_ceil(half);
    let mut cursor = 0usize;
    let mut batches = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let drive_ix = &driver[b * half..((b + 1) * half).min(driver.len())];
        let mut follow_ix = Vec::with_capacity(drive_ix.len());
        for _ in 0..drive_ix.len() {
            follow_ix.push(follower[cursor % follower.len()]);
            cursor += 1;
        }
        let (src_ix, tgt_ix) = if src_drives {
            (drive_ix, follow_ix.as_slice())
        } else {
            (follow_ix.as_slice(), drive_ix)
        };
        let mut samples = Vec::with_capacity(2 * drive_ix.len());
        for &i in src_ix {
            samples.push(src.samples[i].clone());
        }
        for &i in tgt_ix {
            samples.push(tgt.samples[i].clone());
        }
        batches.push(Batch { samples });
    }
    Ok(batches)
}

/// Flat index order where consecutive `group`-sized runs are kept intact
/// (preserving the ratio balance of [`build_augmented_domain`]) but the
/// full runs are shuffled; a trailing partial run stays last.
fn shuffled_groups(len: usize, group: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let all: Vec<usize> = (0..len).collect();
    let mut groups: Vec<&[usize]> = all.chunks(group).collect();
    let full = if len % group == 0 {
        groups.len()
    } else {
        groups.len() - 1
    };
    groups[..full].shuffle(rng);
    groups.concat()
}

/// Source-only batches for target-free training; every sample visited once.
pub fn source_batches(src: &Domain, batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if src.is_empty() {
        return Err(Error::InvalidArgument("source domain is empty".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..src.len()).collect();
    order.shuffle(&mut rng);
    Ok(order
        .chunks(batch_size)
        .map(|chunk| Batch {
            samples: chunk.iter().map(|&i| src.samples[i].clone()).collect(),
        })
        .collect())
}
