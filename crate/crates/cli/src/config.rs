//! Run configuration: one TOML file naming the backbone, accelerator,
//! search hyperparameters and evaluator. Relative paths are resolved against
//! the directory of the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use eenas_core::arch::{sample_architecture, BackboneSpec, ExitHeadSpec, SearchSpace};
use eenas_core::eval::{
    toy_dataset, Evaluator, ExternalEvaluator, OracleConfig, OracleEvaluator, ToyEvaluator, ToyNet, TrainingConfig,
};
use eenas_core::hwcost::AcceleratorSpec;
use eenas_core::nas::{EvaluatorKind, NasConfig};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled backbone name (`table3`, `table3_rederived`, `toy_dense`) or
    /// a path to a backbone table.
    pub backbone: Option<String>,
    /// Path to an accelerator TOML; the built-in defaults otherwise.
    pub accelerator: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub evaluator: Option<EvaluatorKind>,
    pub space: Option<SpaceConfig>,
    pub nas: NasConfig,
    pub oracle: OracleConfig,
    pub toy: ToyConfig,
    pub external: ExternalConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub heads: Vec<ExitHeadSpec>,
    pub quant_bits: Vec<u8>,
    #[serde(default = "default_backbone_bits")]
    pub backbone_bits: u8,
}

fn default_backbone_bits() -> u8 {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub samples: usize,
    pub data_seed: u64,
    pub training: TrainingConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            samples: 1500,
            data_seed: 0,
            training: TrainingConfig {
                epochs: 30,
                learning_rate: 0.05,
                batch_size: 32,
                ..TrainingConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalConfig {
    /// Directory holding `<hash>.json` evaluation reports.
    pub dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub evaluator: Option<EvaluatorKind>,
}

/// Everything a command needs, validated.
pub struct Resolved {
    pub space: SearchSpace,
    pub spec: AcceleratorSpec,
    pub nas: NasConfig,
    pub out: PathBuf,
    oracle: OracleConfig,
    toy: ToyConfig,
    external_dir: Option<PathBuf>,
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_backbone(name: Option<&str>, base: &Path) -> Result<(BackboneSpec, bool), CliError> {
    Ok(match name.unwrap_or("table3") {
        "table3" => (BackboneSpec::mobilenetv2_table3(), false),
        "table3_rederived" => (BackboneSpec::mobilenetv2_table3_rederived(), false),
        "toy_dense" => (BackboneSpec::toy_dense(), true),
        path => {
            let p = resolve_path(base, Path::new(path));
            (BackboneSpec::from_file(&p).map_err(|e| CliError::Config(e.to_string()))?, false)
        }
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Load every referenced input and apply the overrides.
    pub fn resolve(self, base: &Path, over: &Overrides) -> Result<Resolved, CliError> {
        let (backbone, toy) = load_backbone(self.backbone.as_deref(), base)?;
        let backbone = Arc::new(backbone);
        let space = match &self.space {
            Some(s) => SearchSpace::new(backbone, s.heads.clone(), s.quant_bits.clone(), s.backbone_bits)
                .map_err(|e| CliError::Config(e.to_string()))?,
            None if toy => SearchSpace::toy(),
            None => SearchSpace::with_defaults(backbone),
        };
        let spec = match &self.accelerator {
            Some(p) => AcceleratorSpec::from_file(resolve_path(base, p)).map_err(|e| CliError::Config(e.to_string()))?,
            None => AcceleratorSpec::default(),
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let mut nas = self.nas.clone();
        if let Some(seed) = over.seed.or(self.seed) {
            nas.seed = seed;
        }
        if let Some(kind) = over.evaluator.or(self.evaluator) {
            nas.evaluator = kind;
        }
        nas.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let out = over
            .out
            .clone()
            .or_else(|| self.out.as_ref().map(|p| resolve_path(base, p)))
            .unwrap_or_else(|| PathBuf::from("eenas-out"));
        Ok(Resolved {
            space,
            spec,
            nas,
            out,
            oracle: self.oracle,
            toy: self.toy,
            external_dir: self.external.dir.map(|d| resolve_path(base, &d)),
        })
    }
}

impl Resolved {
    /// Build the configured evaluator, checking that it can handle this space.
    pub fn evaluator(&self) -> Result<Box<dyn Evaluator>, CliError> {
        let config_err = CliError::Config;
        Ok(match self.nas.evaluator {
            EvaluatorKind::Oracle => Box::new(OracleEvaluator {
                config: self.oracle.clone(),
                seed: self.nas.seed,
            }),
            EvaluatorKind::Toy => {
                let probe = self
                    .space
                    .decode(&sample_architecture(&self.space, 0))
                    .map_err(|e| config_err(e.to_string()))?;
                ToyNet::new(&probe, 0).map_err(|e| config_err(format!("toy evaluator: {e}")))?;
                if self.toy.samples < 5 {
                    return Err(config_err("toy dataset needs at least 5 samples".into()));
                }
                let mut training = self.toy.training.clone();
                training.seed = self.nas.seed;
                Box::new(ToyEvaluator {
                    data: toy_dataset(self.toy.samples, self.toy.data_seed),
                    config: training,
                })
            }
            EvaluatorKind::External => {
                let dir = self
                    .external_dir
                    .as_ref()
                    .ok_or_else(|| config_err("external evaluator needs [external] dir".into()))?;
                if !dir.is_dir() {
                    return Err(config_err(format!("external report directory {} does not exist", dir.display())));
                }
                Box::new(ExternalEvaluator::new(dir.clone()))
            }
        })
    }
}
