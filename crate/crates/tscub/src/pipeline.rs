//! End-to-end pipeline stages over dataset directories: train a stream,
//! evaluate a checkpoint, fuse score files, and the self-test suite.
//!
//! Checkpoints are self-contained: the parameter blob embeds the backbone
//! configuration, stream settings, preprocessing, and class names, so
//! evaluation needs only the checkpoint and a dataset directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::{load_checkpoint, save_checkpoint, ParamStore};
use crate::backbone::{self, BackboneConfig};
use crate::cubism::TransformKind;
use crate::data::{
    self, load_domain_with_manifest, load_manifest, mix_seed, Manifest, RunConfig, Split,
};
use crate::error::{Error, Result};
use crate::fusion::{self, EvalReport, FusionConfig, FusionMethod, Metrics};
use crate::skeleton::{Domain, SkeletonSequence};
use crate::trainer::{self, TrainConfig, TrainReport};

pub const EVAL_BATCH: usize = 64;

/// Which training run a CLI invocation performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSpec {
    Baseline,
    Temporal,
    Spatial,
}

impl StreamSpec {
    pub fn name(&self) -> &'static str {
        match self {
            StreamSpec::Baseline => "baseline",
            StreamSpec::Temporal => "tem-cub",
            StreamSpec::Spatial => "spa-cub",
        }
    }

    fn seed_tag(&self) -> u64 {
        match self {
            StreamSpec::Baseline => 10,
            StreamSpec::Temporal => 11,
            StreamSpec::Spatial => 12,
        }
    }
}

/// Metadata embedded in every checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stream: StreamSpec,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub preprocess: data::PreprocessConfig,
    pub classes: Vec<String>,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub stream: String,
    pub config_hash: String,
    pub seed: u64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub final_j_total: f64,
    pub final_action_accuracy_source: f64,
    pub final_ordering_accuracy_target: Option<f64>,
    pub decomposition_max_err: f64,
}

pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub report_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: TrainSummary,
    pub report: TrainReport,
}

/// Resolve the stream-specific training configuration from the run config.
pub fn stream_train_config(run: &RunConfig, stream: StreamSpec) -> TrainConfig {
    let t = &run.train;
    let (kind, lambda, ratio) = match stream {
        // The baseline reduces to λ=0, p=1 inside source_only_baseline; the
        // stream kind only sizes the (unused) permutation head.
        StreamSpec::Baseline => (TransformKind::Temporal, 0.0, 1.0),
        StreamSpec::Temporal => (TransformKind::Temporal, t.lambda_t, t.ordered_ratio_t),
        StreamSpec::Spatial => (TransformKind::Spatial, t.lambda_s, t.ordered_ratio_s),
    };
    TrainConfig {
        stream: kind,
        segments: t.segments,
        epochs: t.epochs,
        lambda,
        ordered_ratio: ratio,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        seed: mix_seed(t.seed, &[stream.seed_tag()]),
        target_free: t.target_free,
    }
}

/// Backbone configuration for a dataset + run config + stream.
fn resolve_backbone(
    run: &RunConfig,
    manifest: &Manifest,
    sample_seq: &SkeletonSequence,
    train_cfg: &TrainConfig,
) -> BackboneConfig {
    BackboneConfig {
        frames: run.preprocess.frames,
        joints: sample_seq.joints(),
        coord_dim: sample_seq.dims(),
        conv1_width: run.backbone.conv1_width,
        conv2_width: run.backbone.conv2_width,
        conv3_width: run.backbone.conv3_width,
        feature_dim: run.backbone.feature_dim,
        num_action_classes: manifest.classes.len(),
        num_perm_classes: train_cfg.num_perm_classes(),
        dropout: run.backbone.dropout,
    }
}

/// Train one stream (or the source-only baseline) from a dataset directory
/// and write checkpoint, per-epoch report, and summary into `out_dir`.
pub fn train_pipeline(
    data_dir: &Path,
    run: &RunConfig,
    stream: StreamSpec,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let manifest = load_manifest(data_dir)?;
    let source_name = manifest.source_domain()?.name.clone();
    let target_name = manifest.target_domain()?.name.clone();
    let src_raw = load_domain_with_manifest(data_dir, &manifest, &source_name, Split::Train)?;
    let src = run.preprocess.apply(&src_raw)?;

    let train_cfg = stream_train_config(run, stream);
    let use_target = stream != StreamSpec::Baseline && !train_cfg.target_free;
    let tgt = if use_target {
        let raw = load_domain_with_manifest(data_dir, &manifest, &target_name, Split::Train)?;
        Some(run.preprocess.apply(&raw)?)
    } else {
        None
    };

    let bb = resolve_backbone(run, &manifest, &src.samples[0].sequence, &train_cfg);
    let (store, report) = match stream {
        StreamSpec::Baseline => trainer::source_only_baseline(&src, &train_cfg, &bb)?,
        _ => trainer::train_stream(&src, tgt.as_ref(), &train_cfg, &bb)?,
    };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let meta = CheckpointMeta {
        stream,
        backbone: bb,
        train: train_cfg.clone(),
        preprocess: run.preprocess.clone(),
        classes: manifest.classes.clone(),
        config_hash: run.hash(),
    };
    let meta_bytes = serde_json::to_vec(&meta).expect("meta serializes");
    let checkpoint_path = out_dir.join(format!("{}.ckpt", stream.name()));
    save_checkpoint(&store, &meta_bytes, &checkpoint_path)?;

    let report_path = out_dir.join(format!("{}.report.jsonl", stream.name()));
    std::fs::write(&report_path, report.to_jsonl())
        .map_err(|e| Error::io(report_path.display().to_string(), e))?;

    let last = report.epochs.last().expect("at least one epoch");
    let summary = TrainSummary {
        stream: stream.name().to_string(),
        config_hash: meta.config_hash.clone(),
        seed: train_cfg.seed,
        epochs: report.epochs.len(),
        steps_per_epoch: last.steps,
        final_j_total: last.total,
        final_action_accuracy_source: last.action_accuracy_source,
        final_ordering_accuracy_target: last.ordering_accuracy_target,
        decomposition_max_err: report.decomposition_max_err,
    };
    let summary_path = out_dir.join(format!("{}.summary.json", stream.name()));
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )
    .map_err(|e| Error::io(summary_path.display().to_string(), e))?;

    Ok(TrainOutcome {
        checkpoint_path,
        report_path,
        summary_path,
        summary,
        report,
    })
}

/// One scored sample in a score file (JSON lines).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub label: usize,
    pub scores: Vec<f64>,
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut body = String::new();
    for r in records {
        body.push_str(&serde_json::to_string(r).expect("score serializes"));
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub stream: String,
    pub domain: String,
    pub split: String,
    pub config_hash: String,
    pub accuracy: f64,
    /// Permutation-head accuracy over round-robin transformed clips.
    pub ordering_accuracy: f64,
    pub num_samples: usize,
}

pub struct EvalOutcome {
    pub metrics: Metrics,
    pub summary: EvalSummary,
    pub records: Vec<ScoreRecord>,
    pub scores_path: PathBuf,
    pub metrics_path: PathBuf,
    pub confusion_path: PathBuf,
}

/// Evaluate a checkpoint on one domain split; writes per-sample scores,
/// metrics JSON, and the confusion matrix CSV.
pub fn eval_pipeline(
    data_dir: &Path,
    checkpoint: &Path,
    domain_name: &str,
    split: Split,
    out_dir: &Path,
) -> Result<EvalOutcome> {
    let (store, meta) = load_stream_checkpoint(checkpoint)?;
    let manifest = load_manifest(data_dir)?;
    if manifest.classes != meta.classes {
        return Err(Error::Checkpoint(format!(
            "checkpoint classes {:?} do not match dataset classes {:?}",
            meta.classes, manifest.classes
        )));
    }
    let raw = load_domain_with_manifest(data_dir, &manifest, domain_name, split)?;
    let domain = meta.preprocess.apply(&raw)?;
    let labeled: Vec<(&str, usize, &SkeletonSequence)> = domain
        .samples
        .iter()
        .filter_map(|s| {
            s.action_label
                .map(|y| (s.id.as_str(), y, &s.sequence))
        })
        .collect();
    if labeled.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "split has no labeled samples to evaluate (domain {domain_name})"
        )));
    }
    let seqs: Vec<&SkeletonSequence> = labeled.iter().map(|(_, _, s)| *s).collect();
    let pred = backbone::predict(&store, &seqs, &meta.backbone, EVAL_BATCH)?;
    let labels: Vec<usize> = labeled.iter().map(|(_, y, _)| *y).collect();
    let metrics = fusion::evaluate(&pred.action_scores, &labels, meta.classes.len())?;
    let ordering_accuracy = trainer::eval_ordering_accuracy(
        &store,
        &meta.backbone,
        &domain,
        meta.train.stream,
        meta.train.segments,
        EVAL_BATCH,
    )?;

    let records: Vec<ScoreRecord> = labeled
        .iter()
        .zip(&pred.action_scores)
        .map(|((id, y, _), scores)| ScoreRecord {
            id: (*id).to_string(),
            label: *y,
            scores: scores.clone(),
        })
        .collect();

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let split_name = match split {
        Split::Train => "train",
        Split::Test => "test",
    };
    let base = format!("{}.{domain_name}.{split_name}", meta.stream.name());
    let scores_path = out_dir.join(format!("{base}.scores.jsonl"));
    write_scores(&scores_path, &records)?;

    let summary = EvalSummary {
        stream: meta.stream.name().to_string(),
        domain: domain_name.to_string(),
        split: split_name.to_string(),
        config_hash: meta.config_hash.clone(),
        accuracy: metrics.overall_accuracy,
        ordering_accuracy,
        num_samples: metrics.num_samples,
    };
    let metrics_path = out_dir.join(format!("{base}.metrics.json"));
    let body = serde_json::json!({
        "summary": &summary,
        "metrics": &metrics,
    });
    std::fs::write(
        &metrics_path,
        serde_json::to_string_pretty(&body).expect("metrics serialize") + "\n",
    )
    .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;

    let confusion_path = out_dir.join(format!("{base}.confusion.csv"));
    std::fs::write(&confusion_path, metrics.confusion_csv(&manifest.classes))
        .map_err(|e| Error::io(confusion_path.display().to_string(), e))?;

    Ok(EvalOutcome {
        metrics,
        summary,
        records,
        scores_path,
        metrics_path,
        confusion_path,
    })
}

pub fn load_stream_checkpoint(path: &Path) -> Result<(ParamStore, CheckpointMeta)> {
    let (store, meta_bytes) = load_checkpoint(path)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
    Ok((store, meta))
}

pub struct FuseOutcome {
    pub report: EvalReport,
    pub report_path: PathBuf,
    pub primary: Metrics,
}

/// Fuse two score files and evaluate. With `all_methods`, the report covers
/// all four fusion rules plus both input streams.
pub fn fuse_pipeline(
    scores_a: &Path,
    scores_b: &Path,
    cfg: &FusionConfig,
    all_methods: bool,
    config_hash: String,
    seeds: Vec<u64>,
    class_names: Vec<String>,
    out_path: &Path,
) -> Result<FuseOutcome> {
    cfg.validate()?;
    let a = read_scores(scores_a)?;
    let b = read_scores(scores_b)?;
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "score files differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(&b) {
        if x.id != y.id || x.label != y.label {
            return Err(Error::InvalidArgument(format!(
                "score files disagree on sample {} vs {}",
                x.id, y.id
            )));
        }
    }
    let labels: Vec<usize> = a.iter().map(|r| r.label).collect();
    let num_classes = class_names.len();

    let mut report = EvalReport::new(config_hash, seeds, class_names);
    let fused_for = |method: FusionMethod| -> Result<Vec<Vec<f64>>> {
        let mcfg = FusionConfig { method, ..*cfg };
        a.iter()
            .zip(&b)
            .map(|(x, y)| fusion::fuse_scores(&x.scores, &y.scores, &mcfg))
            .collect()
    };
    let primary = fusion::evaluate(&fused_for(cfg.method)?, &labels, num_classes)?;
    if all_methods {
        let stream_a: Vec<Vec<f64>> = a.iter().map(|r| r.scores.clone()).collect();
        let stream_b: Vec<Vec<f64>> = b.iter().map(|r| r.scores.clone()).collect();
        report.push(
            "stream-1",
            None,
            fusion::evaluate(&stream_a, &labels, num_classes)?,
        );
        report.push(
            "stream-2",
            None,
            fusion::evaluate(&stream_b, &labels, num_classes)?,
        );
        for method in FusionMethod::ALL {
            let metrics = fusion::evaluate(&fused_for(method)?, &labels, num_classes)?;
            report.push(format!("fused-{}", method.name()), Some(method), metrics);
        }
    } else {
        report.push(
            format!("fused-{}", cfg.method.name()),
            Some(cfg.method),
            primary.clone(),
        );
    }
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    std::fs::write(out_path, report.to_json() + "\n")
        .map_err(|e| Error::io(out_path.display().to_string(), e))?;
    Ok(FuseOutcome {
        report,
        report_path: out_path.to_path_buf(),
        primary,
    })
}

/// Generate the synthetic benchmark dataset into `dir`.
pub fn generate_pipeline(run: &RunConfig, dir: &Path) -> Result<Manifest> {
    data::generate_synthetic_dataset(&run.synth, dir)
}

/// Materialize a preprocessed copy of a dataset.
pub fn preprocess_pipeline(
    in_dir: &Path,
    out_dir: &Path,
    cfg: &data::PreprocessConfig,
) -> Result<()> {
    let manifest = load_manifest(in_dir)?;
    let mut out_manifest = manifest.clone();
    if let Some(names) = crate::skeleton::subset_by_name(&cfg.joint_subset)? {
        let (schema, _) = manifest.joint_schema.subset(&names)?;
        out_manifest.joint_schema = schema;
    }
    let mut domains = Vec::new();
    for info in &manifest.domains {
        // Load with labels intact regardless of role; preprocessing must not
        // blind the stored files.
        let lists = &manifest.splits[&info.name];
        let mut clips = Vec::new();
        for id in lists.train.iter().chain(&lists.test) {
            let record = data::load_clip(in_dir, &info.name, id)?;
            let schema = std::sync::Arc::new(manifest.joint_schema.clone());
            let dims = record.frames[0][0][0].len();
            let seq = data::record_to_sequence(&record, &schema, dims)?;
            let sample_domain = Domain::new(
                info.name.clone(),
                vec![crate::skeleton::Sample {
                    id: id.clone(),
                    sequence: seq,
                    action_label: None,
                    perm_label: None,
                    domain_tag: crate::skeleton::DomainTag::Source,
                }],
            );
            let processed = cfg.apply(&sample_domain)?;
            clips.push((
                id.clone(),
                record.action.clone(),
                processed.samples[0].sequence.clone(),
            ));
        }
        domains.push((info.name.clone(), clips));
    }
    data::save_dataset(out_dir, &out_manifest, &domains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SynthConfig;
    use tempfile::tempdir;

    fn quick_run_config() -> RunConfig {
        let mut run = RunConfig::default();
        run.synth = SynthConfig {
            num_classes: 3,
            clips_per_class: 8,
            min_frames: 10,
            max_frames: 12,
            seed: 3,
            ..Default::default()
        };
        run.preprocess.frames = 8;
        run.backbone.conv1_width = 4;
        run.backbone.conv2_width = 4;
        run.backbone.conv3_width = 4;
        run.backbone.feature_dim = 16;
        run.train.epochs = 2;
        run.train.batch_size = 8;
        run
    }

    #[test]
    fn end_to_end_train_eval_fuse() {
        let dir = tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let out_dir = dir.path().join("out");
        let run = quick_run_config();
        generate_pipeline(&run, &data_dir).unwrap();

        let tem = train_pipeline(&data_dir, &run, StreamSpec::Temporal, &out_dir).unwrap();
        let spa = train_pipeline(&data_dir, &run, StreamSpec::Spatial, &out_dir).unwrap();
        assert!(tem.checkpoint_path.exists());
        assert!(tem.report_path.exists());

        let ev_t = eval_pipeline(
            &data_dir,
            &tem.checkpoint_path,
            data::TARGET_DOMAIN,
            Split::Test,
            &out_dir,
        )
        .unwrap();
        let ev_s = eval_pipeline(
            &data_dir,
            &spa.checkpoint_path,
            data::TARGET_DOMAIN,
            Split::Test,
            &out_dir,
        )
        .unwrap();
        assert_eq!(ev_t.records.len(), 12); // 3 classes x 4 test clips
        assert!((0.0..=1.0).contains(&ev_t.summary.accuracy));

        let fused = fuse_pipeline(
            &ev_t.scores_path,
            &ev_s.scores_path,
            &run.fusion,
            true,
            run.hash(),
            vec![run.train.seed],
            vec!["a".into(), "b".into(), "c".into()],
            &out_dir.join("fused.json"),
        )
        .unwrap();
        assert_eq!(fused.report.entries.len(), 6); // 2 streams + 4 methods
        let parsed = EvalReport::from_json(
            &std::fs::read_to_string(&fused.report_path).unwrap(),
        )
        .unwrap();
        assert_eq!(parsed, fused.report);
    }

    #[test]
    fn degenerate_wam_equals_stream_eval() {
        let dir = tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let out_dir = dir.path().join("out");
        let run = quick_run_config();
        generate_pipeline(&run, &data_dir).unwrap();
        let tem = train_pipeline(&data_dir, &run, StreamSpec::Temporal, &out_dir).unwrap();
        let spa = train_pipeline(&data_dir, &run, StreamSpec::Spatial, &out_dir).unwrap();
        let ev_t = eval_pipeline(
            &data_dir,
            &tem.checkpoint_path,
            data::TARGET_DOMAIN,
            Split::Test,
            &out_dir,
        )
        .unwrap();
        let ev_s = eval_pipeline(
            &data_dir,
            &spa.checkpoint_path,
            data::TARGET_DOMAIN,
            Split::Test,
            &out_dir,
        )
        .unwrap();
        let cfg = FusionConfig {
            method: FusionMethod::Wam,
            lambda1: 1.0,
            lambda2: 0.0,
        };
        let fused = fuse_pipeline(
            &ev_t.scores_path,
            &ev_s.scores_path,
            &cfg,
            false,
            run.hash(),
            vec![],
            vec!["a".into(), "b".into(), "c".into()],
            &out_dir.join("fused1.json"),
        )
        .unwrap();
        assert_eq!(fused.primary.overall_accuracy, ev_t.metrics.overall_accuracy);
        assert_eq!(fused.primary.confusion, ev_t.metrics.confusion);
    }

    #[test]
    fn preprocess_pipeline_writes_reduced_dataset() {
        let dir = tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let pre_dir = dir.path().join("pre");
        let run = quick_run_config();
        generate_pipeline(&run, &data_dir).unwrap();
        let cfg = data::PreprocessConfig {
            frames: 6,
            joint_subset: "nj12".into(),
            ..Default::default()
        };
        preprocess_pipeline(&data_dir, &pre_dir, &cfg).unwrap();
        let manifest = load_manifest(&pre_dir).unwrap();
        assert_eq!(manifest.joint_schema.len(), 12);
        let domain = data::load_domain(&pre_dir, data::SOURCE_DOMAIN, Split::Train).unwrap();
        assert!(domain
            .samples
            .iter()
            .all(|s| s.sequence.frames() == 6 && s.sequence.joints() == 12));
    }
}
