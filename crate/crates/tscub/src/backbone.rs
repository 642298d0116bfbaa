//! Compact co-occurrence CNN over skeleton clips.
//!
//! Per person, a position branch (raw coordinates as a D-channel image over
//! frames × joints) and a motion branch (frame-wise forward differences,
//! last frame zero-padded) each run conv→PReLU→conv→PReLU→maxpool with their
//! own weights. Branch outputs are concatenated along channels, passed
//! through one more conv and a dense layer to a feature vector, and
//! per-person features are fused by element-wise maximum before the two
//! classifier heads (action classes and permutation classes).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{he_normal, softmax_rows, Graph, NodeId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::skeleton::SkeletonSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Input frame count; clips must be resampled to this length.
    pub frames: usize,
    pub joints: usize,
    pub coord_dim: usize,
    /// Channel widths: per-branch stage 1, per-branch stage 2, post-concat.
    pub conv1_width: usize,
    pub conv2_width: usize,
    pub conv3_width: usize,
    pub feature_dim: usize,
    pub num_action_classes: usize,
    pub num_perm_classes: usize,
    /// Dropout rate on the fused feature vector; active only in training.
    pub dropout: f64,
}

impl BackboneConfig {
    /// Desk-scale defaults; class counts must still be set per run.
    pub fn default_dims(num_action_classes: usize, num_perm_classes: usize) -> Self {
        BackboneConfig {
            frames: 16,
            joints: 25,
            coord_dim: 3,
            conv1_width: 16,
            conv2_width: 32,
            conv3_width: 32,
            feature_dim: 128,
            num_action_classes,
            num_perm_classes,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 || self.joints < 2 {
            return Err(Error::InvalidArgument(format!(
                "backbone needs frames >= 2 and joints >= 2, got {}x{}",
                self.frames, self.joints
            )));
        }
        if !(self.coord_dim == 2 || self.coord_dim == 3) {
            return Err(Error::InvalidArgument(format!(
                "coord_dim must be 2 or 3, got {}",
                self.coord_dim
            )));
        }
        if self.feature_dim == 0
            || self.conv1_width == 0
            || self.conv2_width == 0
            || self.conv3_width == 0
        {
            return Err(Error::InvalidArgument("zero layer width".into()));
        }
        if self.num_action_classes == 0 || self.num_perm_classes == 0 {
            return Err(Error::InvalidArgument("zero class count".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Spatial size after the branch pooling stage.
    fn pooled(&self) -> (usize, usize) {
        (self.frames / 2, self.joints / 2)
    }

    fn flat_dim(&self) -> usize {
        let (h, w) = self.pooled();
        self.conv3_width * h * w
    }
}

/// Register freshly initialized backbone parameters. He-normal weights,
/// zero biases, PReLU slopes at 0.25.
pub fn init_params(cfg: &BackboneConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for branch in ["pos", "mot"] {
        let c1 = [cfg.conv1_width, cfg.coord_dim, 3, 3];
        store.register(
            &format!("{branch}.conv1.w"),
            he_normal(&c1, cfg.coord_dim * 9, &mut rng),
        )?;
        store.register(&format!("{branch}.conv1.b"), Tensor::zeros(&[cfg.conv1_width]))?;
        store.register(
            &format!("{branch}.conv1.a"),
            Tensor::filled(&[cfg.conv1_width], 0.25),
        )?;
        let c2 = [cfg.conv2_width, cfg.conv1_width, 3, 3];
        store.register(
            &format!("{branch}.conv2.w"),
            he_normal(&c2, cfg.conv1_width * 9, &mut rng),
        )?;
        store.register(&format!("{branch}.conv2.b"), Tensor::zeros(&[cfg.conv2_width]))?;
        store.register(
            &format!("{branch}.conv2.a"),
            Tensor::filled(&[cfg.conv2_width], 0.25),
        )?;
    }
    let c3 = [cfg.conv3_width, 2 * cfg.conv2_width, 3, 3];
    store.register("fuse.conv3.w", he_normal(&c3, 2 * cfg.conv2_width * 9, &mut rng))?;
    store.register("fuse.conv3.b", Tensor::zeros(&[cfg.conv3_width]))?;
    store.register("fuse.conv3.a", Tensor::filled(&[cfg.conv3_width], 0.25))?;
    store.register(
        "fuse.fc.w",
        he_normal(&[cfg.flat_dim(), cfg.feature_dim], cfg.flat_dim(), &mut rng),
    )?;
    store.register("fuse.fc.b", Tensor::zeros(&[cfg.feature_dim]))?;
    store.register("fuse.fc.a", Tensor::filled(&[cfg.feature_dim], 0.25))?;
    store.register(
        "head.action.w",
        he_normal(
            &[cfg.feature_dim, cfg.num_action_classes],
            cfg.feature_dim,
            &mut rng,
        ),
    )?;
    store.register("head.action.b", Tensor::zeros(&[cfg.num_action_classes]))?;
    store.register(
        "head.perm.w",
        he_normal(
            &[cfg.feature_dim, cfg.num_perm_classes],
            cfg.feature_dim,
            &mut rng,
        ),
    )?;
    store.register("head.perm.b", Tensor::zeros(&[cfg.num_perm_classes]))?;
    Ok(store)
}

/// Per-person network inputs for one batch.
#[derive(Debug, Clone)]
pub struct PersonInput {
    /// `[B, D, F, K]` raw coordinates.
    pub position: Tensor,
    /// `[B, D, F, K]` frame-wise forward differences, last frame zero.
    pub motion: Tensor,
}

#[derive(Debug, Clone)]
pub struct BatchInput {
    pub persons: Vec<PersonInput>,
    pub batch: usize,
}

/// Pack clips into network tensors. Clips must already be resampled to
/// `cfg.frames`; person slots are zero-padded up to the widest clip.
pub fn assemble_batch(seqs: &[&SkeletonSequence], cfg: &BackboneConfig) -> Result<BatchInput> {
    if seqs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for s in seqs {
        if s.frames() != cfg.frames || s.joints() != cfg.joints || s.dims() != cfg.coord_dim {
            return Err(Error::ShapeMismatch {
                op: "assemble_batch",
                detail: format!(
                    "clip {}x{}x{} vs configured {}x{}x{}",
                    s.frames(),
                    s.joints(),
                    s.dims(),
                    cfg.frames,
                    cfg.joints,
                    cfg.coord_dim
                ),
            });
        }
    }
    let batch = seqs.len();
    let max_persons = seqs.iter().map(|s| s.persons()).max().unwrap_or(1);
    let (d, f, k) = (cfg.coord_dim, cfg.frames, cfg.joints);
    let mut persons = Vec::with_capacity(max_persons);
    for m in 0..max_persons {
        let mut position = Tensor::zeros(&[batch, d, f, k]);
        let mut motion = Tensor::zeros(&[batch, d, f, k]);
        {
            let pos = position.data_mut();
            for (b, seq) in seqs.iter().enumerate() {
                if m >= seq.persons() {
                    continue;
                }
                for di in 0..d {
                    for fi in 0..f {
                        for ki in 0..k {
                            pos[((b * d + di) * f + fi) * k + ki] = seq.get(m, fi, ki, di);
                        }
                    }
                }
            }
        }
        {
            let pos = position.data();
            let mot = motion.data_mut();
            for b in 0..batch {
                for di in 0..d {
                    for fi in 0..f - 1 {
                        let row = ((b * d + di) * f + fi) * k;
                        let next = row + k;
                        for ki in 0..k {
                            mot[row + ki] = pos[next + ki] - pos[row + ki];
                        }
                    }
                }
            }
        }
        persons.push(PersonInput { position, motion });
    }
    Ok(BatchInput { persons, batch })
}

/// Graph handles to the backbone outputs.
pub struct ForwardNodes {
    pub features: NodeId,
    pub action_logits: NodeId,
    pub perm_logits: NodeId,
}

struct BranchParams {
    w1: NodeId,
    b1: NodeId,
    a1: NodeId,
    w2: NodeId,
    b2: NodeId,
    a2: NodeId,
}

/// Build the forward graph for one batch. `dropout_mask`, when given, is
/// multiplied onto the fused feature vector (training mode); pass `None`
/// for inference.
pub fn forward(
    g: &mut Graph,
    store: &ParamStore,
    input: &BatchInput,
    cfg: &BackboneConfig,
    dropout_mask: Option<&Tensor>,
) -> Result<ForwardNodes> {
    cfg.validate()?;
    let branch_params = |g: &mut Graph, name: &str| -> Result<BranchParams> {
        Ok(BranchParams {
            w1: g.param(store, &format!("{name}.conv1.w"))?,
            b1: g.param(store, &format!("{name}.conv1.b"))?,
            a1: g.param(store, &format!("{name}.conv1.a"))?,
            w2: g.param(store, &format!("{name}.conv2.w"))?,
            b2: g.param(store, &format!("{name}.conv2.b"))?,
            a2: g.param(store, &format!("{name}.conv2.a"))?,
        })
    };
    let pos_params = branch_params(g, "pos")?;
    let mot_params = branch_params(g, "mot")?;
    let w3 = g.param(store, "fuse.conv3.w")?;
    let b3 = g.param(store, "fuse.conv3.b")?;
    let a3 = g.param(store, "fuse.conv3.a")?;
    let fw = g.param(store, "fuse.fc.w")?;
    let fb = g.param(store, "fuse.fc.b")?;
    let fa = g.param(store, "fuse.fc.a")?;

    let run_branch = |g: &mut Graph, x: NodeId, p: &BranchParams| -> Result<NodeId> {
        let c1 = g.conv2d(x, p.w1, Some(p.b1), 1, 1)?;
        let r1 = g.prelu(c1, p.a1)?;
        let c2 = g.conv2d(r1, p.w2, Some(p.b2), 1, 1)?;
        let r2 = g.prelu(c2, p.a2)?;
        g.maxpool2d(r2, (2, 2), (2, 2))
    };

    let mut fused: Option<NodeId> = None;
    for person in &input.persons {
        let pos = g.input(person.position.clone());
        let mot = g.input(person.motion.clone());
        let pb = run_branch(g, pos, &pos_params)?;
        let mb = run_branch(g, mot, &mot_params)?;
        let cat = g.concat_channels(pb, mb)?;
        let c3 = g.conv2d(cat, w3, Some(b3), 1, 1)?;
        let r3 = g.prelu(c3, a3)?;
        let flat = g.reshape(r3, &[input.batch, cfg.flat_dim()])?;
        let fc = g.dense(flat, fw, Some(fb))?;
        let feat = g.prelu(fc, fa)?;
        fused = Some(match fused {
            None => feat,
            Some(prev) => g.max_elem(prev, feat)?,
        });
    }
    let mut features = fused.expect("at least one person");
    if let Some(mask) = dropout_mask {
        features = g.mul_const(features, mask.clone())?;
    }

    let aw = g.param(store, "head.action.w")?;
    let ab = g.param(store, "head.action.b")?;
    let action_logits = g.dense(features, aw, Some(ab))?;
    let pw = g.param(store, "head.perm.w")?;
    let pb2 = g.param(store, "head.perm.b")?;
    let perm_logits = g.dense(features, pw, Some(pb2))?;
    Ok(ForwardNodes {
        features,
        action_logits,
        perm_logits,
    })
}

/// Inverted-dropout mask: entries are `0` with probability `rate`, else
/// `1 / (1 - rate)`. Returns `None` when `rate == 0`.
pub fn dropout_mask(
    batch: usize,
    feature_dim: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Tensor> {
    use rand::Rng;
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    let mut mask = Tensor::zeros(&[batch, feature_dim]);
    for v in mask.data_mut() {
        *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
    }
    Some(mask)
}

/// Element-wise maximum across per-person feature tensors.
pub fn fuse_person_features(features: &[Tensor]) -> Tensor {
    assert!(!features.is_empty(), "fuse over zero persons");
    let mut out = features[0].clone();
    for f in &features[1..] {
        for (o, &v) in out.data_mut().iter_mut().zip(f.data()) {
            if v > *o {
                *o = v;
            }
        }
    }
    out
}

/// Batched inference: softmax scores from both heads.
pub struct Prediction {
    pub action_scores: Vec<Vec<f64>>,
    pub perm_scores: Vec<Vec<f64>>,
}

pub fn predict(
    store: &ParamStore,
    seqs: &[&SkeletonSequence],
    cfg: &BackboneConfig,
    eval_batch: usize,
) -> Result<Prediction> {
    let mut action_scores = Vec::with_capacity(seqs.len());
    let mut perm_scores = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(eval_batch.max(1)) {
        let input = assemble_batch(chunk, cfg)?;
        let mut g = Graph::new();
        let nodes = forward(&mut g, store, &input, cfg, None)?;
        let asm = softmax_rows(g.value(nodes.action_logits));
        let psm = softmax_rows(g.value(nodes.perm_logits));
        for row in asm.data().chunks(cfg.num_action_classes) {
            action_scores.push(row.to_vec());
        }
        for row in psm.data().chunks(cfg.num_perm_classes) {
            perm_scores.push(row.to_vec());
        }
    }
    Ok(Prediction {
        action_scores,
        perm_scores,
    })
}
