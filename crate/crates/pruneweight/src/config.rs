//! TOML pipeline configuration. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pruneweight_core::dataset::{DatasetSpec, Generator};
use pruneweight_core::diffusion::{
    DenoiserConfig, NoiseSchedule, Sampler, WeightMode, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS,
};
use pruneweight_core::encoder::ClassifierConfig;
use pruneweight_core::numerics::DEFAULT_REG;
use pruneweight_core::pruning::ScoreMethod;
use pruneweight_core::rng::stage_seed;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub prune: PruneSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub dro: DroSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub eval: EvalSection,
}

/// Either a generator spec or a path to an existing `.lds` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    /// `identity`, `pca` or `classifier`.
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Pre-trained `.enc` file; overrides `kind`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        Self {
            kind: "identity".into(),
            components: None,
            hidden: c.hidden,
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneSection {
    /// `gaussian`, `gaussian_per_class`, `moderate_ds`, `uniform_random` or
    /// `none`.
    pub method: String,
    pub ratio: f64,
    pub reg: f64,
}

impl Default for PruneSection {
    fn default() -> Self {
        Self {
            method: "moderate_ds".into(),
            ratio: 0.1,
            reg: DEFAULT_REG,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub time_dim: usize,
    pub class_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = DenoiserConfig::new(1, 1);
        Self {
            hidden: d.hidden,
            time_dim: d.time_dim,
            class_dim: d.class_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub p_uncond: f64,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 32,
            learning_rate: 0.02,
            p_uncond: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DroSection {
    pub enabled: bool,
    pub eta: f64,
    pub smoothing: f64,
    /// Defaults to `max(1, round(0.1 · reference.epochs))`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_uncond: Option<f64>,
}

impl Default for DroSection {
    fn default() -> Self {
        Self {
            enabled: true,
            eta: 0.1,
            smoothing: 1e-3,
            epochs: None,
            batch_size: None,
            learning_rate: None,
            p_uncond: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub p_uncond: f64,
    /// Share of epochs spent on the coreset before switching to the full
    /// data; absent means no annealing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anneal_ratio: Option<f64>,
    /// `multiplier` or `resample`.
    pub weight_mode: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let r = ReferenceSection::default();
        Self {
            epochs: r.epochs,
            batch_size: r.batch_size,
            learning_rate: r.learning_rate,
            p_uncond: r.p_uncond,
            anneal_ratio: None,
            weight_mode: "multiplier".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    /// `ddpm` or `ddim`.
    pub sampler: String,
    /// DDIM step count.
    pub steps: usize,
    pub per_class: usize,
    pub guidance: f64,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            sampler: "ddpm".into(),
            steps: 50,
            per_class: 500,
            guidance: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// `pipeline` (the encoder written by `prune`) or `identity`.
    pub encoder: String,
    pub svg: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            encoder: "pipeline".into(),
            svg: true,
        }
    }
}

/// How the coreset is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PruneMethod {
    Score(ScoreMethod),
    UniformRandom,
    None,
}

impl PruneMethod {
    /// Stratified methods keep `round(R · n_j)` per class; the rest keep
    /// `round(R · n)` overall.
    pub fn is_stratified(self) -> bool {
        !matches!(self, Self::Score(ScoreMethod::Gaussian))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Generate(DatasetSpec),
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalEncoder {
    Pipeline,
    Identity,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Reads and validates a config. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        resolve(&mut cfg.dataset.path);
        resolve(&mut cfg.encoder.path);
        resolve(&mut cfg.out_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.dataset_source()?;
        if let Some(p) = &self.encoder.path {
            if !p.is_file() {
                return Err(CliError::config(format!("encoder file not found: {}", p.display())));
            }
        } else {
            self.encoder_kind()?;
        }
        let method = self.prune_method()?;
        if !(self.prune.ratio > 0.0 && self.prune.ratio <= 1.0) {
            return Err(CliError::config(format!("prune.ratio must lie in (0, 1], got {}", self.prune.ratio)));
        }
        if method == PruneMethod::None && self.prune.ratio != 1.0 {
            return Err(CliError::config("prune.method = \"none\" requires ratio = 1.0"));
        }
        self.schedule()?;
        self.denoiser_config(1, 2).validate()?;
        self.weight_mode()?;
        self.sampler()?;
        self.eval_encoder()?;
        if let Some(a) = self.train.anneal_ratio {
            if !(a > 0.0 && a <= 1.0) {
                return Err(CliError::config("train.anneal_ratio must lie in (0, 1]"));
            }
        }
        for (name, b) in [
            ("reference.batch_size", self.reference.batch_size),
            ("train.batch_size", self.train.batch_size),
            ("encoder.batch_size", self.encoder.batch_size),
        ] {
            if b == 0 {
                return Err(CliError::config(format!("{name} must be positive")));
            }
        }
        if self.sample.per_class == 0 {
            return Err(CliError::config("sample.per_class must be positive"));
        }
        Ok(())
    }

    pub fn dataset_source(&self) -> CliResult<DatasetSource> {
        let d = &self.dataset;
        match (&d.path, &d.generator) {
            (Some(_), Some(_)) => Err(CliError::config("dataset: give either path or generator, not both")),
            (Some(p), None) => {
                if d.classes.is_some() || d.per_class.is_some() || d.dim.is_some() {
                    return Err(CliError::config("dataset: classes/per_class/dim only apply to generators"));
                }
                if !p.is_file() {
                    return Err(CliError::config(format!("dataset file not found: {}", p.display())));
                }
                Ok(DatasetSource::File(p.clone()))
            }
            (None, Some(g)) => {
                let generator: Generator = g.parse()?;
                let spec = DatasetSpec {
                    generator,
                    classes: d.classes.ok_or_else(|| CliError::config("dataset.classes is required"))?,
                    per_class: d.per_class.ok_or_else(|| CliError::config("dataset.per_class is required"))?,
                    dim: match generator {
                        Generator::SpriteImages => d.dim.unwrap_or(0),
                        _ => d.dim.ok_or_else(|| CliError::config("dataset.dim is required"))?,
                    },
                    seed: self.stage_seed("gen-data"),
                };
                spec.validate()?;
                Ok(DatasetSource::Generate(spec))
            }
            (None, None) => Err(CliError::config("dataset: either path or generator is required")),
        }
    }

    pub fn encoder_kind(&self) -> CliResult<&str> {
        match self.encoder.kind.as_str() {
            k @ ("identity" | "classifier") => Ok(k),
            "pca" => {
                if self.encoder.components.is_none() {
                    return Err(CliError::config("encoder.components is required for pca"));
                }
                Ok("pca")
            }
            other => Err(CliError::config(format!("unknown encoder kind {other:?}"))),
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            hidden: self.encoder.hidden.clone(),
            epochs: self.encoder.epochs,
            batch_size: self.encoder.batch_size,
            learning_rate: self.encoder.learning_rate,
            seed: self.stage_seed("encoder"),
        }
    }

    pub fn prune_method(&self) -> CliResult<PruneMethod> {
        match self.prune.method.as_str() {
            "uniform_random" => Ok(PruneMethod::UniformRandom),
            "none" => Ok(PruneMethod::None),
            other => Ok(PruneMethod::Score(other.parse()?)),
        }
    }

    pub fn schedule(&self) -> CliResult<NoiseSchedule> {
        let s = &self.schedule;
        Ok(NoiseSchedule::linear(s.steps, s.beta_start, s.beta_end)?)
    }

    pub fn denoiser_config(&self, dim: usize, classes: usize) -> DenoiserConfig {
        DenoiserConfig {
            dim,
            classes,
            hidden: self.model.hidden.clone(),
            time_dim: self.model.time_dim,
            class_dim: self.model.class_dim,
        }
    }

    pub fn weight_mode(&self) -> CliResult<WeightMode> {
        match self.train.weight_mode.as_str() {
            "multiplier" => Ok(WeightMode::Multiplier),
            "resample" => Ok(WeightMode::Resample),
            other => Err(CliError::config(format!("unknown train.weight_mode {other:?}"))),
        }
    }

    pub fn sampler(&self) -> CliResult<Sampler> {
        match self.sample.sampler.as_str() {
            "ddpm" => Ok(Sampler::Ddpm),
            "ddim" => Ok(Sampler::Ddim {
                steps: self.sample.steps,
            }),
            other => Err(CliError::config(format!("unknown sample.sampler {other:?}"))),
        }
    }

    pub fn eval_encoder(&self) -> CliResult<EvalEncoder> {
        match self.eval.encoder.as_str() {
            "pipeline" => Ok(EvalEncoder::Pipeline),
            "identity" => Ok(EvalEncoder::Identity),
            other => Err(CliError::config(format!("unknown eval.encoder {other:?}"))),
        }
    }

    /// Proxy budget: explicit, or 10% of the reference epochs (at least 1).
    pub fn dro_epochs(&self) -> usize {
        self.dro
            .epochs
            .unwrap_or_else(|| ((self.reference.epochs as f64 * 0.1).round() as usize).max(1))
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}
