//! Multi-task training of one pretext stream and the two-stream procedure.
//!
//! One stream minimizes `J_c + λ·J_aux`: the action cross-entropy over
//! source samples (ordered and permuted alike) plus the permutation-label
//! cross-entropy over every sample in the batch. Paired batches hold equal
//! counts of source and target samples; in target-free mode batches are
//! source-only, which restricts the auxiliary sum to the source domain.
//! Augmented copies are drawn freshly every epoch. Everything is seeded;
//! identical configurations produce bit-identical parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, Graph, NodeId, ParamStore, Tensor};
use crate::backbone::{self, BackboneConfig, ForwardNodes};
use crate::cubism::{self, Batch, MixConfig, PermutationSpec, TransformKind};
use crate::data::mix_seed;
use crate::error::{Error, Result};
use crate::fusion::argmax;
use crate::skeleton::{Domain, DomainTag, SkeletonSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Pretext transform family of this stream.
    pub stream: TransformKind,
    /// Temporal segment count N (temporal/coupled streams).
    pub segments: usize,
    /// Training epochs Γ.
    pub epochs: usize,
    /// Auxiliary loss trade-off λ.
    pub lambda: f64,
    /// Ordered-sample ratio p.
    pub ordered_ratio: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Train without any target-domain data.
    pub target_free: bool,
}

impl TrainConfig {
    pub fn temporal() -> Self {
        TrainConfig {
            stream: TransformKind::Temporal,
            segments: 3,
            epochs: 60,
            lambda: 0.1,
            ordered_ratio: 0.8,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 1,
            target_free: false,
        }
    }

    pub fn spatial() -> Self {
        TrainConfig {
            stream: TransformKind::Spatial,
            ordered_ratio: 0.6,
            ..TrainConfig::temporal()
        }
    }

    pub fn num_perm_classes(&self) -> usize {
        PermutationSpec::class_count(self.stream, self.segments)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.ordered_ratio > 0.0 && self.ordered_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ordered_ratio must be in (0, 1], got {}",
                self.ordered_ratio
            )));
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "batch_size must be even and >= 2, got {}",
                self.batch_size
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub j_c: f64,
    pub j_aux: f64,
    pub total: f64,
    pub action_accuracy_source: f64,
    pub ordering_accuracy_source: f64,
    pub ordering_accuracy_target: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// Worst observed |total - (J_c + λ·J_aux)| across all steps.
    pub decomposition_max_err: f64,
}

impl TrainReport {
    /// Line-oriented serialization: one JSON record per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "record": "header",
                "config": &self.config,
                "decomposition_max_err": self.decomposition_max_err,
            })
        ));
        for e in &self.epochs {
            let mut v = serde_json::to_value(e).expect("epoch serializes");
            v.as_object_mut()
                .expect("object")
                .insert("record".into(), "epoch".into());
            out.push_str(&format!("{v}\n"));
        }
        out
    }
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: f64,
    pub j_c: f64,
    pub j_aux: f64,
}

/// Labels and masks of one assembled batch.
pub struct BatchMeta {
    pub action_labels: Vec<usize>,
    /// Rows participating in the action loss (source rows).
    pub action_mask: Vec<bool>,
    pub perm_labels: Vec<usize>,
}

impl BatchMeta {
    pub fn from_batch(batch: &Batch) -> Result<Self> {
        let mut action_labels = Vec::with_capacity(batch.samples.len());
        let mut action_mask = Vec::with_capacity(batch.samples.len());
        let mut perm_labels = Vec::with_capacity(batch.samples.len());
        for s in &batch.samples {
            let is_source = s.domain_tag == DomainTag::Source;
            match (is_source, s.action_label) {
                (true, Some(y)) => {
                    action_labels.push(y);
                    action_mask.push(true);
                }
                (true, None) => {
                    return Err(Error::InvalidArgument(format!(
                        "source sample {} lacks an action label",
                        s.id
                    )));
                }
                // Target action labels are never read.
                (false, _) => {
                    action_labels.push(0);
                    action_mask.push(false);
                }
            }
            perm_labels.push(s.perm_label.ok_or_else(|| {
                Error::InvalidArgument(format!("sample {} lacks a permutation label", s.id))
            })?);
        }
        if !action_mask.iter().any(|&m| m) {
            return Err(Error::InvalidArgument(
                "batch has no source samples; action loss undefined".into(),
            ));
        }
        Ok(BatchMeta {
            action_labels,
            action_mask,
            perm_labels,
        })
    }
}

/// Probabilities returned alongside the loss node for accuracy tracking.
pub struct LossNodes {
    pub total: NodeId,
    pub action_probs: Tensor,
    pub perm_probs: Tensor,
}

/// Build `J_c + λ·J_aux` on the graph: action cross-entropy over source
/// rows, permutation cross-entropy over all rows.
pub fn total_loss(
    g: &mut Graph,
    out: &ForwardNodes,
    meta: &BatchMeta,
    lambda: f64,
) -> Result<(LossNodes, LossBreakdown)> {
    let (jc_node, action_probs) =
        g.softmax_cross_entropy(out.action_logits, &meta.action_labels, &meta.action_mask)?;
    let all = vec![true; meta.perm_labels.len()];
    let (jaux_node, perm_probs) =
        g.softmax_cross_entropy(out.perm_logits, &meta.perm_labels, &all)?;
    let scaled = g.scale(jaux_node, lambda)?;
    let total = g.add(jc_node, scaled)?;
    let breakdown = LossBreakdown {
        total: g.value(total).item(),
        j_c: g.value(jc_node).item(),
        j_aux: g.value(jaux_node).item(),
    };
    Ok((
        LossNodes {
            total,
            action_probs,
            perm_probs,
        },
        breakdown,
    ))
}

fn accuracy_over<F>(probs: &Tensor, labels: &[usize], select: F) -> Option<f64>
where
    F: Fn(usize) -> bool,
{
    let c = probs.shape()[1];
    let mut n = 0usize;
    let mut correct = 0usize;
    for (row, &label) in labels.iter().enumerate() {
        if !select(row) {
            continue;
        }
        n += 1;
        if argmax(&probs.data()[row * c..(row + 1) * c]) == label {
            correct += 1;
        }
    }
    (n > 0).then(|| correct as f64 / n as f64)
}

/// Train one pretext stream (Tem-Cub when `cfg.stream` is temporal,
/// Spa-Cub when spatial). `tgt = None` or `cfg.target_free` trains without
/// target data.
pub fn train_stream(
    src: &Domain,
    tgt: Option<&Domain>,
    cfg: &TrainConfig,
    bb: &BackboneConfig,
) -> Result<(ParamStore, TrainReport)> {
    cfg.validate()?;
    bb.validate()?;
    if bb.num_perm_classes != cfg.num_perm_classes() {
        return Err(Error::InvalidArgument(format!(
            "backbone has {} permutation classes but the stream needs {}",
            bb.num_perm_classes,
            cfg.num_perm_classes()
        )));
    }
    if src.is_empty() {
        return Err(Error::InvalidArgument("source domain is empty".into()));
    }
    let tgt = if cfg.target_free { None } else { tgt };

    let mut store = backbone::init_params(bb, mix_seed(cfg.seed, &[0]))?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[1]));
    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let half = cfg.batch_size / 2;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut decomposition_max_err = 0.0f64;

    for epoch in 0..cfg.epochs {
        let group = if tgt.is_some() { half } else { cfg.batch_size };
        let src_aug = cubism::build_augmented_domain(
            src,
            cfg.stream,
            cfg.segments,
            &MixConfig {
                ordered_ratio: cfg.ordered_ratio,
                batch_size: group,
                rng_seed: mix_seed(cfg.seed, &[2, epoch as u64]),
            },
        )?;
        let batches = match tgt {
            Some(tgt) => {
                let tgt_aug = cubism::build_augmented_domain(
                    tgt,
                    cfg.stream,
                    cfg.segments,
                    &MixConfig {
                        ordered_ratio: cfg.ordered_ratio,
                        batch_size: group,
                        rng_seed: mix_seed(cfg.seed, &[3, epoch as u64]),
                    },
                )?;
                cubism::mixed_batches(
                    &src_aug,
                    &tgt_aug,
                    cfg.batch_size,
                    mix_seed(cfg.seed, &[4, epoch as u64]),
                )?
            }
            None => cubism::source_batches(
                &src_aug,
                cfg.batch_size,
                mix_seed(cfg.seed, &[4, epoch as u64]),
            )?,
        };

        let mut sums = (0.0f64, 0.0f64, 0.0f64);
        let mut acc_action = MeanAcc::default();
        let mut acc_ord_src = MeanAcc::default();
        let mut acc_ord_tgt = MeanAcc::default();
        for (step, batch) in batches.iter().enumerate() {
            let meta = BatchMeta::from_batch(batch)?;
            let seqs: Vec<&SkeletonSequence> =
                batch.samples.iter().map(|s| &s.sequence).collect();
            let input = backbone::assemble_batch(&seqs, bb)?;
            let mask = backbone::dropout_mask(
                input.batch,
                bb.feature_dim,
                bb.dropout,
                &mut dropout_rng,
            );

            store.zero_grads();
            let mut g = Graph::new();
            let run = (|| -> Result<(LossNodes, LossBreakdown)> {
                let nodes = backbone::forward(&mut g, &store, &input, bb, mask.as_ref())?;
                total_loss(&mut g, &nodes, &meta, cfg.lambda)
            })();
            let (nodes, breakdown) = match run {
                Ok(ok) => ok,
                Err(Error::NonFinite { op }) => {
                    return Err(Error::Diverged {
                        epoch,
                        step,
                        detail: format!("non-finite value in {op}"),
                    })
                }
                Err(e) => return Err(e),
            };
            g.backward(nodes.total, &mut store)?;
            store.adam_step(&adam)?;

            decomposition_max_err = decomposition_max_err
                .max((breakdown.total - (breakdown.j_c + cfg.lambda * breakdown.j_aux)).abs());
            sums.0 += breakdown.j_c;
            sums.1 += breakdown.j_aux;
            sums.2 += breakdown.total;
            let is_source: Vec<bool> = batch
                .samples
                .iter()
                .map(|s| s.domain_tag == DomainTag::Source)
                .collect();
            acc_action.push(accuracy_over(&nodes.action_probs, &meta.action_labels, |r| {
                is_source[r]
            }));
            acc_ord_src.push(accuracy_over(&nodes.perm_probs, &meta.perm_labels, |r| {
                is_source[r]
            }));
            acc_ord_tgt.push(accuracy_over(&nodes.perm_probs, &meta.perm_labels, |r| {
                !is_source[r]
            }));
        }
        let steps = batches.len();
        epochs.push(EpochRecord {
            epoch,
            steps,
            j_c: sums.0 / steps as f64,
            j_aux: sums.1 / steps as f64,
            total: sums.2 / steps as f64,
            action_accuracy_source: acc_action.mean().unwrap_or(0.0),
            ordering_accuracy_source: acc_ord_src.mean().unwrap_or(0.0),
            ordering_accuracy_target: acc_ord_tgt.mean(),
        });
    }

    Ok((
        store,
        TrainReport {
            config: cfg.clone(),
            epochs,
            decomposition_max_err,
        },
    ))
}

#[derive(Default)]
struct MeanAcc {
    sum: f64,
    n: usize,
}

impl MeanAcc {
    fn push(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.sum += v;
            self.n += 1;
        }
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Train the temporal stream then the spatial stream with independent
/// parameter sets.
pub fn train_ts_cub(
    src: &Domain,
    tgt: Option<&Domain>,
    cfg_t: &TrainConfig,
    cfg_s: &TrainConfig,
    bb_t: &BackboneConfig,
    bb_s: &BackboneConfig,
) -> Result<((ParamStore, TrainReport), (ParamStore, TrainReport))> {
    if cfg_t.stream != TransformKind::Temporal || cfg_s.stream != TransformKind::Spatial {
        return Err(Error::InvalidArgument(
            "train_ts_cub expects a temporal config followed by a spatial config".into(),
        ));
    }
    let temporal = train_stream(src, tgt, cfg_t, bb_t)?;
    let spatial = train_stream(src, tgt, cfg_s, bb_s)?;
    Ok((temporal, spatial))
}

/// Supervised source-only baseline: no augmentation (p = 1), no auxiliary
/// loss (λ = 0), no target data.
pub fn source_only_baseline(
    src: &Domain,
    cfg: &TrainConfig,
    bb: &BackboneConfig,
) -> Result<(ParamStore, TrainReport)> {
    let cfg = TrainConfig {
        lambda: 0.0,
        ordered_ratio: 1.0,
        target_free: true,
        ..cfg.clone()
    };
    train_stream(src, None, &cfg, bb)
}

/// Permutation-head accuracy over a domain whose clips are transformed
/// with labels assigned round-robin across the full label space.
pub fn eval_ordering_accuracy(
    store: &ParamStore,
    bb: &BackboneConfig,
    domain: &Domain,
    kind: TransformKind,
    segments: usize,
    eval_batch: usize,
) -> Result<f64> {
    if domain.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation domain".into()));
    }
    let classes = PermutationSpec::class_count(kind, segments);
    let mut transformed = Vec::with_capacity(domain.len());
    let mut labels = Vec::with_capacity(domain.len());
    for (i, sample) in domain.samples.iter().enumerate() {
        let label = i % classes;
        let spec = PermutationSpec::new(kind, label, segments)?;
        transformed.push(cubism::apply_transform(&sample.sequence, &spec)?);
        labels.push(label);
    }
    let refs: Vec<&SkeletonSequence> = transformed.iter().collect();
    let pred = backbone::predict(store, &refs, bb, eval_batch)?;
    let correct = pred
        .perm_scores
        .iter()
        .zip(&labels)
        .filter(|(scores, &label)| argmax(scores) == label)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::checkpoint_to_bytes;
    use crate::data::{generate_domain_clips, PreprocessConfig, SynthConfig};
    use crate::skeleton::Sample;

    fn tiny_domains(clips_per_class: usize) -> (Domain, Domain) {
        let synth = SynthConfig {
            num_classes: 3,
            clips_per_class,
            min_frames: 10,
            max_frames: 12,
            seed: 5,
            ..Default::default()
        };
        let pre = PreprocessConfig {
            frames: 8,
            ..Default::default()
        };
        let mk = |shifted: bool, tag: DomainTag, labeled: bool| {
            let clips = generate_domain_clips(&synth, shifted).unwrap();
            let samples = clips
                .into_iter()
                .enumerate()
                .map(|(i, c)| Sample {
                    id: format!("clip-{i}"),
                    sequence: c.sequence,
                    action_label: labeled.then_some(c.class),
                    perm_label: None,
                    domain_tag: tag,
                })
                .collect();
            pre.apply(&Domain::new("d", samples)).unwrap()
        };
        (
            mk(false, DomainTag::Source, true),
            mk(true, DomainTag::Target, false),
        )
    }

    fn tiny_bb(perm_classes: usize) -> BackboneConfig {
        BackboneConfig {
            frames: 8,
            joints: 25,
            coord_dim: 3,
            conv1_width: 4,
            conv2_width: 4,
            conv3_width: 4,
            feature_dim: 16,
            num_action_classes: 3,
            num_perm_classes: perm_classes,
            dropout: 0.0,
        }
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::temporal()
        }
    }

    #[test]
    fn step_bookkeeping() {
        // 10 samples per domain, half-batch 2 -> exactly ceil(10/2) steps.
        let (src, tgt) = tiny_domains(4);
        let src = Domain::new("s", src.samples.into_iter().take(10).collect());
        let tgt = Domain::new("t", tgt.samples.into_iter().take(10).collect());
        let cfg = tiny_cfg();
        let (_, report) = train_stream(&src, Some(&tgt), &cfg, &tiny_bb(6)).unwrap();
        assert_eq!(report.epochs.len(), 1);
        assert_eq!(report.epochs[0].steps, 5);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let (src, tgt) = tiny_domains(2);
        let cfg = TrainConfig {
            epochs: 2,
            ..tiny_cfg()
        };
        let (p1, r1) = train_stream(&src, Some(&tgt), &cfg, &tiny_bb(6)).unwrap();
        let (p2, r2) = train_stream(&src, Some(&tgt), &cfg, &tiny_bb(6)).unwrap();
        assert_eq!(checkpoint_to_bytes(&p1, b""), checkpoint_to_bytes(&p2, b""));
        assert_eq!(r1.to_jsonl(), r2.to_jsonl());
    }

    #[test]
    fn loss_decomposition_holds() {
        let (src, tgt) = tiny_domains(3);
        let cfg = TrainConfig {
            epochs: 2,
            lambda: 0.37,
            ..tiny_cfg()
        };
        let (_, report) = train_stream(&src, Some(&tgt), &cfg, &tiny_bb(6)).unwrap();
        assert!(
            report.decomposition_max_err < 1e-9,
            "decomposition err {}",
            report.decomposition_max_err
        );
    }

    #[test]
    fn lambda_zero_total_equals_action_loss() {
        let (src, tgt) = tiny_domains(2);
        let cfg = TrainConfig {
            lambda: 0.0,
            ..tiny_cfg()
        };
        let (_, report) = train_stream(&src, Some(&tgt), &cfg, &tiny_bb(6)).unwrap();
        for e in &report.epochs {
            assert_eq!(e.total, e.j_c);
        }
    }

    #[test]
    fn scalar_resummation_oracle() {
        // Recompute both loss terms with independent scalar loops.
        let (src, tgt) = tiny_domains(2);
        let cfg = tiny_cfg();
        let bb = tiny_bb(6);
        let src_aug = cubism::build_augmented_domain(
            &src,
            TransformKind::Temporal,
            3,
            &MixConfig {
                ordered_ratio: 0.5,
                batch_size: 2,
                rng_seed: 3,
            },
        )
        .unwrap();
        let tgt_aug = cubism::build_augmented_domain(
            &tgt,
            TransformKind::Temporal,
            3,
            &MixConfig {
                ordered_ratio: 0.5,
                batch_size: 2,
                rng_seed: 4,
            },
        )
        .unwrap();
        let batches = cubism::mixed_batches(&src_aug, &tgt_aug, 4, 5).unwrap();
        let store = backbone::init_params(&bb, 9).unwrap();
        for batch in batches.iter().take(4) {
            let meta = BatchMeta::from_batch(batch).unwrap();
            let seqs: Vec<&SkeletonSequence> =
                batch.samples.iter().map(|s| &s.sequence).collect();
            let input = backbone::assemble_batch(&seqs, &bb).unwrap();
            let mut g = Graph::new();
            let nodes = backbone::forward(&mut g, &store, &input, &bb, None).unwrap();
            let action_logits = g.value(nodes.action_logits).clone();
            let perm_logits = g.value(nodes.perm_logits).clone();
            let (_, breakdown) = total_loss(&mut g, &nodes, &meta, cfg.lambda).unwrap();

            let ce = |logits: &Tensor, labels: &[usize], mask: &dyn Fn(usize) -> bool| -> f64 {
                let c = logits.shape()[1];
                let mut sum = 0.0;
                let mut n = 0usize;
                for (row, &label) in labels.iter().enumerate() {
                    if !mask(row) {
                        continue;
                    }
                    let z = &logits.data()[row * c..(row + 1) * c];
                    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = z.iter().map(|&v| (v - zmax).exp()).sum();
                    sum += denom.ln() - (z[label] - zmax);
                    n += 1;
                }
                sum / n as f64
            };
            let jc = ce(&action_logits, &meta.action_labels, &|r| meta.action_mask[r]);
            let jaux = ce(&perm_logits, &meta.perm_labels, &|_| true);
            let total = jc + cfg.lambda * jaux;
            assert!((breakdown.j_c - jc).abs() < 1e-9);
            assert!((breakdown.j_aux - jaux).abs() < 1e-9);
            assert!((breakdown.total - total).abs() < 1e-9);
        }
    }

    #[test]
    fn target_labels_are_provably_unused() {
        let (src, mut tgt) = tiny_domains(2);
        let cfg = TrainConfig {
            epochs: 2,
            ..tiny_cfg()
        };
        let (clean, _) = train_stream(&src, Some(&tgt), &cfg, &tiny_bb(6)).unwrap();
        // Plant garbage action labels on all target samples.
        for (i, s) in tgt.samples.iter_mut().enumerate() {
            s.action_label = Some(i * 31 % 3);
        }
        let (dirty, _) = train_stream(&src, Some(&tgt), &cfg, &tiny_bb(6)).unwrap();
        assert_eq!(
            checkpoint_to_bytes(&clean, b""),
            checkpoint_to_bytes(&dirty, b"")
        );
    }

    #[test]
    fn target_free_ignores_target_entirely() {
        let (src, tgt) = tiny_domains(2);
        let cfg = TrainConfig {
            target_free: true,
            ..tiny_cfg()
        };
        let with_tgt = train_stream(&src, Some(&tgt), &cfg, &tiny_bb(6)).unwrap();
        let without = train_stream(&src, None, &cfg, &tiny_bb(6)).unwrap();
        assert_eq!(
            checkpoint_to_bytes(&with_tgt.0, b""),
            checkpoint_to_bytes(&without.0, b"")
        );
        assert!(with_tgt.1.epochs[0].ordering_accuracy_target.is_none());
    }

    #[test]
    fn baseline_equals_stream_reduction() {
        let (src, _) = tiny_domains(2);
        let cfg = TrainConfig {
            epochs: 2,
            lambda: 0.5,
            ordered_ratio: 0.7,
            ..tiny_cfg()
        };
        let (base, _) = source_only_baseline(&src, &cfg, &tiny_bb(6)).unwrap();
        let reduced = TrainConfig {
            lambda: 0.0,
            ordered_ratio: 1.0,
            target_free: true,
            ..cfg
        };
        let (direct, _) = train_stream(&src, None, &reduced, &tiny_bb(6)).unwrap();
        assert_eq!(
            checkpoint_to_bytes(&base, b""),
            checkpoint_to_bytes(&direct, b"")
        );
    }

    #[test]
    fn ts_cub_streams_match_standalone_runs() {
        let (src, tgt) = tiny_domains(2);
        let cfg_t = tiny_cfg();
        let cfg_s = TrainConfig {
            stream: TransformKind::Spatial,
            ..tiny_cfg()
        };
        let ((pt, _), (ps, _)) = train_ts_cub(
            &src,
            Some(&tgt),
            &cfg_t,
            &cfg_s,
            &tiny_bb(6),
            &tiny_bb(3),
        )
        .unwrap();
        let (lone_t, _) = train_stream(&src, Some(&tgt), &cfg_t, &tiny_bb(6)).unwrap();
        let (lone_s, _) = train_stream(&src, Some(&tgt), &cfg_s, &tiny_bb(3)).unwrap();
        assert_eq!(checkpoint_to_bytes(&pt, b""), checkpoint_to_bytes(&lone_t, b""));
        assert_eq!(checkpoint_to_bytes(&ps, b""), checkpoint_to_bytes(&lone_s, b""));
    }

    #[test]
    fn zero_source_batch_rejected() {
        let (_, tgt) = tiny_domains(1);
        let batch = Batch {
            samples: tgt
                .samples
                .iter()
                .cloned()
                .map(|mut s| {
                    s.perm_label = Some(0);
                    s
                })
                .collect(),
        };
        assert!(BatchMeta::from_batch(&batch).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let (src, tgt) = tiny_domains(2);
        // Adam keeps step sizes near the learning rate regardless of
        // gradient scale, so only an overflow-level rate forces weights
        // (and the next forward pass) out of f64 range.
        let cfg = TrainConfig {
            learning_rate: 1e308,
            epochs: 5,
            ..tiny_cfg()
        };
        match train_stream(&src, Some(&tgt), &cfg, &tiny_bb(6)) {
            Err(Error::Diverged { .. }) => {}
            Err(other) => panic!("expected divergence, got a different error: {other}"),
            Ok(_) => panic!("expected divergence, training completed"),
        }
    }

    #[test]
    fn mismatched_perm_classes_rejected() {
        let (src, tgt) = tiny_domains(1);
        let cfg = tiny_cfg();
        assert!(train_stream(&src, Some(&tgt), &cfg, &tiny_bb(3)).is_err());
    }
}
