//! Run configuration: one structured-text (TOML) file drives every
//! pipeline stage; command-line flags override individual fields.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::synth::SynthConfig;
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::skeleton::{self, Domain};

/// Preprocessing applied to every clip before training or evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Rotation normalization around the vertical axis.
    pub rotate: bool,
    /// Resample every clip to this frame count.
    pub frames: usize,
    /// Joint subset preset: full, nj22, nj18 or nj12.
    pub joint_subset: String,
    /// Gaussian perturbation std in normalized [-1, 1] scale; 0 disables.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            rotate: true,
            frames: 16,
            joint_subset: "full".into(),
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }
}

impl PreprocessConfig {
    /// Apply to a whole domain, in order: rotate, subset, resample, noise.
    pub fn apply(&self, domain: &Domain) -> Result<Domain> {
        let subset = skeleton::subset_by_name(&self.joint_subset)?;
        let mut samples = Vec::with_capacity(domain.len());
        for (i, sample) in domain.samples.iter().enumerate() {
            let mut seq = sample.sequence.clone();
            if self.rotate {
                let (rotated, _report) = skeleton::rotate_normalize(&seq)?;
                seq = rotated;
            }
            if let Some(names) = &subset {
                seq = skeleton::select_joints(&seq, names)?;
            }
            seq = skeleton::resample_frames(&seq, self.frames)?;
            if self.noise_sigma > 0.0 {
                let clip_seed = crate::data::mix_seed(self.noise_seed, &[i as u64]);
                seq = skeleton::add_gaussian_noise(&seq, self.noise_sigma, clip_seed)?;
            }
            let mut out = sample.clone();
            out.sequence = seq;
            samples.push(out);
        }
        Ok(Domain::new(domain.name.clone(), samples))
    }
}

/// Training hyper-parameters for both streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Loss trade-off per stream.
    pub lambda_t: f64,
    pub lambda_s: f64,
    /// Ordered-sample ratio per stream.
    pub ordered_ratio_t: f64,
    pub ordered_ratio_s: f64,
    /// Temporal segment count N.
    pub segments: usize,
    /// Train without any target-domain data.
    pub target_free: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 1,
            lambda_t: 0.1,
            lambda_s: 0.1,
            ordered_ratio_t: 0.8,
            ordered_ratio_s: 0.6,
            segments: 3,
            target_free: false,
        }
    }
}

/// Backbone dimensions exposed in the run config (class counts and input
/// shape are derived from the dataset and stream).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneDims {
    pub conv1_width: usize,
    pub conv2_width: usize,
    pub conv3_width: usize,
    pub feature_dim: usize,
    pub dropout: f64,
}

impl Default for BackboneDims {
    fn default() -> Self {
        BackboneDims {
            conv1_width: 16,
            conv2_width: 32,
            conv3_width: 32,
            feature_dim: 128,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunConfig {
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub backbone: BackboneDims,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub fusion: FusionConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let body =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&body).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Hash of the effective configuration, recorded in reports.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_dataset, load_domain, Split, SOURCE_DOMAIN};
    use tempfile::tempdir;

    #[test]
    fn toml_round_trip_and_hash() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let parsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.hash(), cfg.hash());

        let mut other = cfg.clone();
        other.train.seed += 1;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let parsed: RunConfig = toml::from_str("[train]\nepochs = 3\n").unwrap();
        assert_eq!(parsed.train.epochs, 3);
        assert_eq!(parsed.train.batch_size, TrainSettings::default().batch_size);
        assert_eq!(parsed.preprocess, PreprocessConfig::default());
    }

    #[test]
    fn preprocess_shapes_domain() {
        let dir = tempdir().unwrap();
        let synth = SynthConfig {
            num_classes: 2,
            clips_per_class: 2,
            min_frames: 9,
            max_frames: 12,
            ..Default::default()
        };
        generate_synthetic_dataset(&synth, dir.path()).unwrap();
        let domain = load_domain(dir.path(), SOURCE_DOMAIN, Split::Train).unwrap();
        let cfg = PreprocessConfig {
            frames: 6,
            joint_subset: "nj22".into(),
            ..Default::default()
        };
        let out = cfg.apply(&domain).unwrap();
        for s in &out.samples {
            assert_eq!(s.sequence.frames(), 6);
            assert_eq!(s.sequence.joints(), 22);
        }
    }
}
