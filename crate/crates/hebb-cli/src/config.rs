//! Named experiment configurations and the TOML run-configuration file.
//!
//! Every named configuration resolves to a complete network description
//! plus per-stage learning settings; the TOML file selects a name and may
//! override individual knobs. Unknown keys in the file are errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use hebb::arch::{build_depthwise_journe, build_journe, build_lagani, build_residual_journe, NetworkSpec};
use hebb::hebbian::{Competition, HebbianLayerConfig, LateralConfig, LearningRule, PresynapticMode};
use hebb::{Error, Result};

/// Every configuration name the runner recognizes.
pub const ALL_CONFIG_NAMES: &[&str] = &[
    "SoftWTA",
    "Lagani-HardWTA",
    "Lagani_Deep-HardWTA",
    "Backpropagation",
    "HardWTA",
    "HardWTA-BCM",
    "Presynaptic/HardWTA",
    "Temporal/HardWTA",
    "Homeostatic/HardWTA",
    "Surr/HardWTA",
    "Depthwise-HardWTA",
    "Residual-HardWTA",
    "Dale_Depth-Surr/HardWTA-BCM",
    "No-WTA",
    "Optimal-HardWTA",
    "SoftWTA-Surr-BCM",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Stl10,
}

impl DatasetKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(Self::Mnist),
            "cifar10" => Ok(Self::Cifar10),
            "stl10" => Ok(Self::Stl10),
            other => Err(Error::Parameter(format!(
                "unknown dataset '{other}' (expected mnist, cifar10, or stl10)"
            ))),
        }
    }

    pub fn channels(self) -> usize {
        match self {
            Self::Mnist => 1,
            _ => 3,
        }
    }

    /// Horizontal flips only make sense for natural images.
    pub fn flip_augment(self) -> bool {
        !matches!(self, Self::Mnist)
    }
}

/// A fully resolved experiment: architecture, learning settings, and the
/// preprocessing/initialization switches tied to the configuration family.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub name: String,
    pub spec: NetworkSpec,
    pub layer_configs: Vec<HebbianLayerConfig>,
    /// Train the stack end-to-end by gradient descent instead of the
    /// two-phase protocol.
    pub backprop: bool,
    /// Whiten inputs with train-fitted ZCA statistics.
    pub zca: bool,
    /// Use the wide Gaussian weight initialization of soft competition.
    pub soft_init: bool,
}

fn lateral(sigma_e: f32, sigma_i: f32, kernel_size: usize) -> Option<LateralConfig> {
    Some(LateralConfig { sigma_e, sigma_i, kernel_size })
}

fn hard_base() -> HebbianLayerConfig {
    HebbianLayerConfig {
        rule: LearningRule::Grossberg,
        competition: Competition::Hard,
        eta: 0.1,
        cosine: true,
        ..Default::default()
    }
}

/// Resolve one of the named configurations for a dataset.
pub fn named_configuration(name: &str, dataset: DatasetKind) -> Result<ResolvedConfig> {
    let ch = dataset.channels();
    let journe = || build_journe(3, ch);
    let (spec, layer_configs, backprop, zca, soft_init): (NetworkSpec, Vec<HebbianLayerConfig>, bool, bool, bool) =
        match name {
            "SoftWTA" => {
                // soft competition learns with a declining per-stage rate
                let etas = [0.08f32, 0.04, 0.02, 0.01];
                let spec = journe()?;
                let cfgs = (0..spec.stage_count())
                    .map(|s| HebbianLayerConfig {
                        rule: LearningRule::SoftHebb,
                        competition: Competition::Soft,
                        eta: etas[s.min(etas.len() - 1)],
                        cosine: false,
                        ..Default::default()
                    })
                    .collect();
                (spec, cfgs, false, false, true)
            }
            "Lagani-HardWTA" | "Lagani_Deep-HardWTA" => {
                if ch != 3 {
                    return Err(Error::Parameter(format!(
                        "configuration '{name}' requires an RGB dataset"
                    )));
                }
                let depth = if name == "Lagani-HardWTA" { 3 } else { 4 };
                (build_lagani(depth)?, vec![hard_base()], false, true, false)
            }
            "Backpropagation" => (journe()?, vec![HebbianLayerConfig::default()], true, false, false),
            "HardWTA" => (journe()?, vec![hard_base()], false, true, false),
            "HardWTA-BCM" => {
                let cfg = HebbianLayerConfig { rule: LearningRule::Bcm, ..hard_base() };
                (journe()?, vec![cfg], false, true, false)
            }
            "Presynaptic/HardWTA" => {
                let cfg = HebbianLayerConfig {
                    presynaptic: Some(PresynapticMode::Linear),
                    ..hard_base()
                };
                (journe()?, vec![cfg], false, true, false)
            }
            "Temporal/HardWTA" => {
                let cfg = HebbianLayerConfig { temporal_buffer: Some(500), ..hard_base() };
                (journe()?, vec![cfg], false, true, false)
            }
            "Homeostatic/HardWTA" => {
                let cfg = HebbianLayerConfig { homeostatic_k: Some(2.0), ..hard_base() };
                (journe()?, vec![cfg], false, true, false)
            }
            "Surr/HardWTA" => {
                let cfg = HebbianLayerConfig { lateral: lateral(1.2, 1.3, 5), ..hard_base() };
                (journe()?, vec![cfg], false, true, false)
            }
            "Depthwise-HardWTA" => {
                if ch != 3 {
                    return Err(Error::Parameter(format!(
                        "configuration '{name}' requires an RGB dataset"
                    )));
                }
                (build_depthwise_journe()?, vec![hard_base()], false, true, false)
            }
            "Residual-HardWTA" => {
                if ch != 3 {
                    return Err(Error::Parameter(format!(
                        "configuration '{name}' requires an RGB dataset"
                    )));
                }
                (build_residual_journe()?, vec![hard_base()], false, true, false)
            }
            "Dale_Depth-Surr/HardWTA-BCM" => {
                if ch != 3 {
                    return Err(Error::Parameter(format!(
                        "configuration '{name}' requires an RGB dataset"
                    )));
                }
                let cfg = HebbianLayerConfig {
                    rule: LearningRule::Bcm,
                    lateral: lateral(1.2, 1.3, 5),
                    dale: true,
                    ..hard_base()
                };
                (build_depthwise_journe()?, vec![cfg], false, true, false)
            }
            "No-WTA" => {
                let cfg = HebbianLayerConfig { competition: Competition::None, ..hard_base() };
                (journe()?, vec![cfg], false, false, false)
            }
            "Optimal-HardWTA" => {
                let mk = |eta: f32, decay: f32, se: f32, si: f32, k: usize| HebbianLayerConfig {
                    rule: LearningRule::Bcm,
                    theta_decay: decay,
                    eta,
                    lateral: lateral(se, si, k),
                    ..hard_base()
                };
                let cfgs = vec![
                    mk(0.1, 0.3, 1.2, 1.3, 5),
                    mk(0.08, 0.35, 1.0, 1.2, 3),
                    mk(0.05, 0.35, 0.8, 1.1, 3),
                ];
                (journe()?, cfgs, false, true, false)
            }
            "SoftWTA-Surr-BCM" => {
                let cfg = HebbianLayerConfig {
                    rule: LearningRule::Bcm,
                    competition: Competition::Soft,
                    eta: 0.05,
                    lateral: lateral(1.2, 1.3, 5),
                    ..Default::default()
                };
                (journe()?, vec![cfg], false, false, true)
            }
            other => {
                return Err(Error::Parameter(format!("unknown configuration name '{other}'")));
            }
        };
    for cfg in &layer_configs {
        cfg.validate()?;
    }
    Ok(ResolvedConfig {
        name: name.to_string(),
        spec,
        layer_configs,
        backprop,
        zca,
        soft_init,
    })
}

// ---------------------------------------------------------------------------
// TOML run-configuration file
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: ExperimentSection,
    pub architecture: Option<ArchitectureSection>,
    /// Per-stage overrides keyed by 1-based layer number.
    pub layer: Option<BTreeMap<String, LayerSection>>,
    pub classifier: Option<ClassifierSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub dataset: String,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
    /// Use only the first N training images (desk-scale runs).
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub hebbian_batch: Option<usize>,
    pub zca_eps: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSection {
    /// Divide every internal channel count by this factor.
    pub width_divisor: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    pub eta: Option<f32>,
    pub theta_decay: Option<f32>,
    pub inv_temp: Option<f32>,
    pub sigma_e: Option<f32>,
    pub sigma_i: Option<f32>,
    pub lateral_kernel: Option<usize>,
    pub presynaptic: Option<String>,
    pub temporal_buffer: Option<usize>,
    pub homeostatic_k: Option<f32>,
    pub dale: Option<bool>,
    pub cosine: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    pub epochs: Option<usize>,
    pub base_lr: Option<f32>,
    pub dropout: Option<f32>,
    pub batch_size: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config file: {e}")))
    }

    /// Resolve the named configuration and fold in the file's overrides.
    pub fn resolve(&self) -> Result<(ResolvedConfig, DatasetKind)> {
        let dataset = DatasetKind::parse(&self.experiment.dataset)?;
        let mut resolved = named_configuration(&self.experiment.name, dataset)?;
        if let Some(arch) = &self.architecture {
            if let Some(div) = arch.width_divisor {
                resolved.spec = resolved.spec.scale_width(div)?;
            }
        }
        if let Some(layers) = &self.layer {
            let stages = resolved.spec.stage_count();
            // broadcast a single shared config before applying per-stage edits
            if resolved.layer_configs.len() == 1 && stages > 1 {
                resolved.layer_configs = vec![resolved.layer_configs[0].clone(); stages];
            }
            for (key, section) in layers {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::Format(format!("layer key '{key}' is not a number")))?;
                if idx == 0 || idx > stages {
                    return Err(Error::Parameter(format!(
                        "layer {idx} out of range (network has {stages} learning stages)"
                    )));
                }
                apply_layer_overrides(&mut resolved.layer_configs[idx - 1], section)?;
            }
            for cfg in &resolved.layer_configs {
                cfg.validate()?;
            }
        }
        Ok((resolved, dataset))
    }
}

fn apply_layer_overrides(cfg: &mut HebbianLayerConfig, s: &LayerSection) -> Result<()> {
    if let Some(v) = s.eta {
        cfg.eta = v;
    }
    if let Some(v) = s.theta_decay {
        cfg.theta_decay = v;
    }
    if let Some(v) = s.inv_temp {
        cfg.inv_temp = v;
    }
    match (s.sigma_e, s.sigma_i, s.lateral_kernel) {
        (None, None, None) => {}
        (se, si, k) => {
            let base = cfg.lateral;
            cfg.lateral = Some(LateralConfig {
                sigma_e: se.or(base.map(|l| l.sigma_e)).ok_or_else(|| {
                    Error::Parameter("lateral override needs sigma_e".into())
                })?,
                sigma_i: si.or(base.map(|l| l.sigma_i)).ok_or_else(|| {
                    Error::Parameter("lateral override needs sigma_i".into())
                })?,
                kernel_size: k.or(base.map(|l| l.kernel_size)).ok_or_else(|| {
                    Error::Parameter("lateral override needs lateral_kernel".into())
                })?,
            });
        }
    }
    if let Some(mode) = &s.presynaptic {
        cfg.presynaptic = Some(match mode.as_str() {
            "linear" => PresynapticMode::Linear,
            "softmax" => PresynapticMode::Softmax,
            "l2" => PresynapticMode::L2,
            other => {
                return Err(Error::Parameter(format!(
                    "unknown presynaptic mode '{other}' (expected linear, softmax, or l2)"
                )))
            }
        });
    }
    if let Some(v) = s.temporal_buffer {
        cfg.temporal_buffer = Some(v);
    }
    if let Some(v) = s.homeostatic_k {
        cfg.homeostatic_k = Some(v);
    }
    if let Some(v) = s.dale {
        cfg.dale = v;
    }
    if let Some(v) = s.cosine {
        cfg.cosine = v;
    }
    Ok(())
}
