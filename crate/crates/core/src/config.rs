//! The declarative run configuration: one TOML file plus a seed fixes every
//! artifact a run produces.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::dataio::SegmentationConfig;
use crate::features::FeatureConfig;
use crate::gini::Weighting;
use crate::model::ModelConfig;
use crate::seeding::derive_seed;
use crate::synth::{ClutterConfig, TargetConfig};
use crate::trainer::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid [{section}] config: {message}")]
    Invalid { section: &'static str, message: String },
}

/// Synthetic scenario: primary-target cells carrying a Doppler tone in
/// K-distributed clutter, plus clutter-only cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub prf_hz: f64,
    pub target_cells: usize,
    pub target_len: usize,
    pub clutter_cells: usize,
    pub clutter_len: usize,
    pub shape_nu: f64,
    pub mean_power: f64,
    pub speckle_corr_rho: f64,
    pub doppler_hz: f64,
    pub scr_db: f64,
    pub amp_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            prf_hz: 1000.0,
            target_cells: 1,
            target_len: 131_072,
            clutter_cells: 12,
            clutter_len: 102_400,
            shape_nu: 0.5,
            mean_power: 1.0,
            speckle_corr_rho: 0.9,
            doppler_hz: 100.0,
            scr_db: 15.0,
            amp_jitter: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn clutter(&self, seed: u64) -> ClutterConfig {
        ClutterConfig {
            shape_nu: self.shape_nu,
            mean_power: self.mean_power,
            speckle_corr_rho: self.speckle_corr_rho,
            seed,
        }
    }

    pub fn target(&self, seed: u64) -> TargetConfig {
        TargetConfig {
            doppler_hz: self.doppler_hz,
            scr_db: self.scr_db,
            amp_jitter: self.amp_jitter,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GiniConfig {
    pub weighting: Weighting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    pub preset_pfa: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self { preset_pfa: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub alphas: Vec<f64>,
    /// Whether `pipeline` also runs the sweep.
    pub in_pipeline: bool,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.1, 0.3, 1.0],
            in_pipeline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(with = "crate::seeding::toml_u64")]
    pub seed: u64,
    pub data: SegmentationConfig,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub gini: GiniConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub detect: DetectConfig,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            data: SegmentationConfig::default(),
            synth: SynthConfig::default(),
            features: FeatureConfig::default(),
            gini: GiniConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            detect: DetectConfig::default(),
            ablate: AblateConfig::default(),
        }
    }
}

/// Stream tags for [`RunConfig::stream_seed`].
pub mod stream {
    pub const SYNTH: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const MODEL: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const AUGMENT: u64 = 5;
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text, "<inline>")
    }

    fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: shown.clone(),
            source,
        })?;
        Self::parse(&text, &shown)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Independent seed for one consumer of randomness.
    pub fn stream_seed(&self, tag: u64) -> u64 {
        derive_seed(self.seed, &[tag])
    }

    /// Train config with its seed filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.stream_seed(stream::TRAIN),
            ..self.train.clone()
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            seed: self.stream_seed(stream::AUGMENT),
            ..self.augment.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |section, message: String| Err(ConfigError::Invalid { section, message });
        if let Err(e) = self.data.validate() {
            return invalid("data", e.to_string());
        }
        let s = &self.synth;
        if let Err(e) = s.clutter(0).validate() {
            return invalid("synth", e.to_string());
        }
        if !(s.prf_hz > 0.0 && s.prf_hz.is_finite()) {
            return invalid("synth", format!("prf_hz {}", s.prf_hz));
        }
        if s.doppler_hz.abs() >= s.prf_hz / 2.0 {
            return invalid("synth", format!("doppler_hz {} aliases at prf {}", s.doppler_hz, s.prf_hz));
        }
        if s.target_cells == 0 || s.clutter_cells == 0 {
            return invalid("synth", "need at least one target and one clutter cell".into());
        }
        if s.target_len < self.data.seg_len || s.clutter_len < self.data.seg_len {
            return invalid("synth", format!("cell lengths must reach seg_len {}", self.data.seg_len));
        }
        if let Err(e) = self.features.validate(self.data.seg_len) {
            return invalid("features", e.to_string());
        }
        if let Err(e) = self.augment.validate() {
            return invalid("augment", e.to_string());
        }
        if let Err(e) = self.model.validate() {
            return invalid("model", e.to_string());
        }
        if self.model.seg_len != self.data.seg_len {
            return invalid(
                "model",
                format!("seg_len {} differs from [data] seg_len {}", self.model.seg_len, self.data.seg_len),
            );
        }
        if let Err(e) = self.train.validate() {
            return invalid("train", e.to_string());
        }
        let p = self.detect.preset_pfa;
        if !(p > 0.0 && p < 1.0) {
            return invalid("detect", format!("preset_pfa {p} outside (0, 1)"));
        }
        if self.ablate.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return invalid("ablate", "alphas must be finite and ≥ 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 9;
        cfg.train.alpha = 0.3;
        cfg.gini.weighting = Weighting::Rank;
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_sections() {
        let cfg = RunConfig::from_toml("seed = 4\n[data]\nstride_target = 65\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.data.stride_target, 65);
        assert_eq!(cfg.data.seg_len, 512);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 32);
    }

    #[test]
    fn unknown_keys_rejected() {
        for doc in ["bogus = 1", "[train]\nlearning_rate = 0.1", "[nosuch]\nx = 1", "[augment]\nseed = 3"] {
            assert!(matches!(RunConfig::from_toml(doc), Err(ConfigError::Parse { .. })), "{doc}");
        }
    }

    #[test]
    fn semantic_errors_name_the_section() {
        let cases = [
            ("[train]\nlr = -1.0", "train"),
            ("[detect]\npreset_pfa = 1.5", "detect"),
            ("[synth]\ndoppler_hz = 600.0", "synth"),
            ("[model]\nseg_len = 256", "model"),
            ("[ablate]\nalphas = [-0.1]", "ablate"),
        ];
        for (doc, want) in cases {
            match RunConfig::from_toml(doc) {
                Err(ConfigError::Invalid { section, .. }) => assert_eq!(section, want),
                other => panic!("{doc}: {other:?}"),
            }
        }
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = RunConfig::load("/no/such/run.toml").unwrap_err();
        assert!(err.to_string().contains("/no/such/run.toml"));
    }

    #[test]
    fn stream_seeds_differ() {
        let cfg = RunConfig::default();
        let seeds: Vec<u64> = (1..=5).map(|t| cfg.stream_seed(t)).collect();
        let mut dedup = seeds.clone();
        dedup.dedup();
        assert_eq!(seeds, dedup);
        assert_eq!(cfg.train_config().seed, cfg.stream_seed(stream::TRAIN));
    }
}
