//! Run configuration: a strict JSON document with per-section defaults.
//! Unknown keys are rejected so ablation matrices stay archivable and typos
//! surface immediately.

use crate::encoder::{FusionNorm, PosMode, SamplerConfig};
use crate::error::Error;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    #[default]
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

/// Whether an annotation's quality average includes its own self-IoU term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QualitySelf {
    #[default]
    Include,
    Exclude,
}

/// Which regression heads contribute to the L1 loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RegHeads {
    #[default]
    Both,
    /// Start-end head only.
    Boundary,
    /// Center-width head only.
    Centerness,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_v: usize,
    pub d_l: usize,
    pub d_m: usize,
    pub d_w: usize,
    pub t_m: usize,
    pub blocks: usize,
    pub heads: usize,
    pub kernel: usize,
}

impl Default for ModelSection {
    /// Desk-scale defaults. Full-scale values from the original setup are
    /// t_m = 128, d_v = d_l = d_m = 512, d_w = 300, blocks = 3.
    fn default() -> Self {
        ModelSection {
            d_v: 32,
            d_l: 32,
            d_m: 32,
            d_w: 32,
            t_m: 32,
            blocks: 2,
            heads: 4,
            kernel: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub lambda: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection { lambda: 0.02 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 32,
            lr: 1e-3,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSection {
    /// Size of the clustered prediction set.
    pub n: usize,
}

impl Default for InferSection {
    fn default() -> Self {
        InferSection { n: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub g: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            alpha: 0.5,
            beta: 0.4,
            n: 5,
            g: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub pos_mode: PosMode,
    pub fusion_norm: FusionNorm,
    pub min_loss: Switch,
    pub single_branch_only: SwitchOff,
    pub quality_self: QualitySelf,
    pub reg_heads: RegHeads,
}

/// A switch that defaults to off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchOff {
    On,
    Off,
}

impl Default for SwitchOff {
    fn default() -> Self {
        SwitchOff::Off
    }
}

impl SwitchOff {
    pub fn is_on(self) -> bool {
        self == SwitchOff::On
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sampler: SamplerConfig,
    pub loss: LossSection,
    pub train: TrainSection,
    pub infer: InferSection,
    pub eval: EvalSection,
    pub ablation: AblationSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Error> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let m = &self.model;
        if m.d_v != m.d_l || m.d_l != m.d_m {
            return Err(Error::config(
                "model.d_v",
                format!(
                    "d_v, d_l, d_m must be equal for fusion (got {}, {}, {})",
                    m.d_v, m.d_l, m.d_m
                ),
            ));
        }
        if m.d_l == 0 || m.d_l % 2 != 0 {
            return Err(Error::config(
                "model.d_l",
                "must be positive and even (the recurrent state splits in two)",
            ));
        }
        if m.heads == 0 || m.d_m % m.heads != 0 {
            return Err(Error::config(
                "model.heads",
                format!("must divide d_m = {}", m.d_m),
            ));
        }
        if m.d_m < 2 {
            return Err(Error::config("model.d_m", "must be at least 2"));
        }
        if m.kernel % 2 == 0 || m.kernel == 0 {
            return Err(Error::config("model.kernel", "must be odd"));
        }
        if m.blocks == 0 {
            return Err(Error::config("model.blocks", "must be at least 1"));
        }
        if m.t_m == 0 {
            return Err(Error::config("model.t_m", "must be at least 1"));
        }
        if m.d_w == 0 {
            return Err(Error::config("model.d_w", "must be at least 1"));
        }
        let s = &self.sampler;
        if !(s.sigma_train > 0.0) || !(s.sigma_infer > 0.0) {
            return Err(Error::config("sampler.sigma_train", "sigmas must be positive"));
        }
        if s.k_train == 0 {
            return Err(Error::config("sampler.k_train", "must be at least 1"));
        }
        if s.k_infer == 0 {
            return Err(Error::config("sampler.k_infer", "must be at least 1"));
        }
        if !(self.loss.lambda >= 0.0) || !self.loss.lambda.is_finite() {
            return Err(Error::config("loss.lambda", "must be finite and non-negative"));
        }
        if self.train.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(self.train.lr >= 0.0) || !self.train.lr.is_finite() {
            return Err(Error::config("train.lr", "must be finite and non-negative"));
        }
        if self.infer.n == 0 {
            return Err(Error::config("infer.n", "must be at least 1"));
        }
        let e = &self.eval;
        if !(e.alpha > 0.0 && e.alpha <= 1.0) {
            return Err(Error::config("eval.alpha", "must be in (0, 1]"));
        }
        if !(e.beta >= 0.0 && e.beta < 1.0) {
            return Err(Error::config("eval.beta", "must be in [0, 1)"));
        }
        if e.n == 0 {
            return Err(Error::config("eval.n", "must be at least 1"));
        }
        if e.g == 0 {
            return Err(Error::config("eval.g", "must be at least 1"));
        }
        Ok(())
    }
}
