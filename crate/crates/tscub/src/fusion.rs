//! Two-stream score fusion and evaluation metrics.
//!
//! Fusion combines per-class softmax scores from the temporal and spatial
//! streams into one prediction. Four rules are provided: weighted arithmetic
//! mean, weighted root-squared mean, weighted geometric mean, and
//! element-wise max pooling. Fused scores are renormalized to sum to one
//! (argmax is unaffected) and ties resolve toward the lower class index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class nonnegative scores summing to one.
pub type ScoreVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    /// `λ1·s1 + λ2·s2`
    Wam,
    /// `sqrt(λ1·s1² + λ2·s2²)` element-wise
    Wrsm,
    /// `s1^λ1 · s2^λ2` element-wise
    Wgm,
    /// `max(s1, s2)` element-wise
    Mp,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 4] = [
        FusionMethod::Wam,
        FusionMethod::Wrsm,
        FusionMethod::Wgm,
        FusionMethod::Mp,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wam" => Ok(FusionMethod::Wam),
            "wrsm" => Ok(FusionMethod::Wrsm),
            "wgm" => Ok(FusionMethod::Wgm),
            "mp" => Ok(FusionMethod::Mp),
            other => Err(Error::InvalidArgument(format!(
                "unknown fusion method {other} (expected wam, wrsm, wgm or mp)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FusionMethod::Wam => "wam",
            FusionMethod::Wrsm => "wrsm",
            FusionMethod::Wgm => "wgm",
            FusionMethod::Mp => "mp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub method: FusionMethod,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            method: FusionMethod::Wam,
            lambda1: 0.6,
            lambda2: 0.4,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda1 + self.lambda2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "fusion weights must be nonnegative with positive sum, got ({}, {})",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }
}

/// Fuse two score vectors; the result is renormalized to sum to one.
pub fn fuse_scores(s1: &[f64], s2: &[f64], cfg: &FusionConfig) -> Result<ScoreVector> {
    cfg.validate()?;
    if s1.len() != s2.len() || s1.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "fuse_scores",
            detail: format!("{} vs {} classes", s1.len(), s2.len()),
        });
    }
    let (l1, l2) = (cfg.lambda1, cfg.lambda2);
    let mut out: Vec<f64> = match cfg.method {
        FusionMethod::Wam => s1.iter().zip(s2).map(|(&a, &b)| l1 * a + l2 * b).collect(),
        FusionMethod::Wrsm => s1
            .iter()
            .zip(s2)
            .map(|(&a, &b)| (l1 * a * a + l2 * b * b).sqrt())
            .collect(),
        // 0^λ is taken as 0.
        FusionMethod::Wgm => s1
            .iter()
            .zip(s2)
            .map(|(&a, &b)| a.powf(l1) * b.powf(l2))
            .collect(),
        FusionMethod::Mp => s1.iter().zip(s2).map(|(&a, &b)| a.max(b)).collect(),
    };
    let sum: f64 = out.iter().sum();
    if sum > 0.0 {
        for v in &mut out {
            *v /= sum;
        }
    } else {
        // Degenerate all-zero fusion (possible for WGM on disjoint supports).
        let uniform = 1.0 / out.len() as f64;
        out.fill(uniform);
    }
    Ok(out)
}

/// Index of the largest score; ties resolve to the lower class index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Classification metrics over one evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall_accuracy: f64,
    /// Per-class accuracy, indexed by ground-truth class; `None` for classes
    /// with no ground-truth samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Rows = ground truth, columns = predicted, rows normalized to one
    /// (all-zero row for empty classes).
    pub confusion: Vec<Vec<f64>>,
    pub class_counts: Vec<usize>,
    pub num_samples: usize,
}

/// Evaluate argmax predictions against ground-truth labels over
/// `num_classes` classes.
pub fn evaluate(predictions: &[ScoreVector], labels: &[usize], num_classes: usize) -> Result<Metrics> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "evaluate needs matching nonempty prediction/label lists, got {} vs {}",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = vec![0usize; num_classes];
    let mut raw = vec![vec![0usize; num_classes]; num_classes];
    let mut correct = 0usize;
    for (scores, &label) in predictions.iter().zip(labels) {
        if label >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        if scores.len() != num_classes {
            return Err(Error::ShapeMismatch {
                op: "evaluate",
                detail: format!("{} scores vs {num_classes} classes", scores.len()),
            });
        }
        let pred = argmax(scores);
        counts[label] += 1;
        raw[label][pred] += 1;
        if pred == label {
            correct += 1;
        }
    }
    let confusion = raw
        .iter()
        .zip(&counts)
        .map(|(row, &n)| {
            row.iter()
                .map(|&c| if n > 0 { c as f64 / n as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let per_class = raw
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(c, (row, &n))| (n > 0).then(|| row[c] as f64 / n as f64))
        .collect();
    Ok(Metrics {
        overall_accuracy: correct as f64 / predictions.len() as f64,
        per_class_accuracy: per_class,
        confusion,
        class_counts: counts,
        num_samples: predictions.len(),
    })
}

impl Metrics {
    /// Confusion matrix as CSV with a header row of predicted class names.
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("truth\\pred");
        for name in class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&class_names[i]);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// One stream's (or fused) result inside an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub method: Option<FusionMethod>,
    pub metrics: Metrics,
}

/// Machine-readable evaluation artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// Hash of the run configuration that produced the scores.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub class_names: Vec<String>,
    pub entries: Vec<ReportEntry>,
    /// Wall-clock stamp (excluded from determinism comparisons).
    pub timestamp_ms: u64,
}

impl EvalReport {
    pub fn new(config_hash: String, seeds: Vec<u64>, class_names: Vec<String>) -> Self {
        EvalReport {
            schema_version: 1,
            config_hash,
            seeds,
            class_names,
            entries: Vec::new(),
            timestamp_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, method: Option<FusionMethod>, metrics: Metrics) {
        self.entries.push(ReportEntry {
            name: name.into(),
            method,
            metrics,
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            path: "<report>".into(),
            detail: e.to_string(),
        })
    }

    /// Human-readable comparison table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>8} {:>10}\n",
            "entry", "method", "accuracy"
        ));
        out.push_str(&format!("{}\n", "-".repeat(44)));
        for e in &self.entries {
            out.push_str(&format!(
                "{:<24} {:>8} {:>9.2}%\n",
                e.name,
                e.method.map_or("-", |m| m.name()),
                100.0 * e.metrics.overall_accuracy
            ));
        }
        out
    }
}
