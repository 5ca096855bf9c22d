//! Experiment configuration: one JSON file drives every pipeline stage.
//! Unset fields fall back to the training defaults; unknown keys are
//! rejected by name.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use graphfed::model::ModelConfig;
use graphfed::preprocess::PprMethod;
use graphfed::privacy::{LDPConfig, LdpTarget};
use graphfed::runtime::{AggregationMode, RunConfig, SamplingKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbmSpec {
    pub blocks: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_shift: f64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        SbmSpec {
            blocks: vec![50; 4],
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 16,
            feature_shift: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSpec {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    /// Optional `id,client` assignment; when present it wins over the
    /// partition regime below.
    #[serde(default)]
    pub partition: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Sbm(SbmSpec),
    Csv(CsvSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionRegime {
    Nonoverlapping,
    Overlapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    pub regime: PartitionRegime,
    /// Client count; under the overlapping regime this is the number of
    /// base parts, each sampled `samples_per_part` times.
    pub clients: usize,
    pub samples_per_part: usize,
    pub sample_frac: f64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            regime: PartitionRegime::Nonoverlapping,
            clients: 5,
            samples_per_part: 2,
            sample_frac: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub nu: f64,
    pub ppr_method: PprMethod,
    pub ppr_tol: f64,
    pub tau: f64,
    pub gamma: f64,
    pub split: (f64, f64, f64),
    pub mode: AggregationMode,
    pub sampling: SamplingKind,
    pub layers: usize,
    pub heads: usize,
    pub d: usize,
    pub pe_dim: usize,
    pub n_s: usize,
    pub n_g: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub delta: f64,
    pub lambda: f64,
    pub ldp_targets: LdpTarget,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub dump_similarity: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::Sbm(SbmSpec::default()),
            partition: PartitionSpec::default(),
            rounds: 100,
            local_epochs: 1,
            batch_size: 64,
            nu: 0.15,
            ppr_method: PprMethod::Exact,
            ppr_tol: 1e-6,
            tau: 5.0,
            gamma: 0.9,
            split: (0.2, 0.4, 0.4),
            mode: AggregationMode::Personalized,
            sampling: SamplingKind::Ppr,
            layers: 2,
            heads: 4,
            d: 128,
            pe_dim: 8,
            n_s: 16,
            n_g: 10,
            dropout: 0.0,
            lr: 0.001,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            delta: 0.002,
            lambda: 0.001,
            ldp_targets: LdpTarget::GlobalNodesOnly,
            out_dir: PathBuf::from("out"),
            seed: 0,
            dump_similarity: false,
        }
    }
}

impl ExperimentConfig {
    /// Materializes the run configuration once the dataset dimensions are
    /// known.
    pub fn to_run_config(&self, feature_dim: usize, num_classes: usize) -> RunConfig {
        RunConfig {
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            nu: self.nu,
            ppr_method: self.ppr_method,
            ppr_tol: self.ppr_tol,
            tau: self.tau,
            gamma: self.gamma,
            split: self.split,
            mode: self.mode,
            sampling: self.sampling,
            model: ModelConfig {
                layers: self.layers,
                heads: self.heads,
                d: self.d,
                feature_dim,
                pe_dim: self.pe_dim,
                n_s: self.n_s,
                n_g: self.n_g,
                num_classes,
                dropout: self.dropout,
            },
            adam: graphfed::model::AdamHyper {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
                weight_decay: self.weight_decay,
            },
            ldp: LDPConfig {
                delta: self.delta,
                lambda: self.lambda,
                targets: self.ldp_targets,
            },
            seed: self.seed,
        }
    }

    /// Checks every constraint that does not depend on dataset dimensions.
    pub fn validate(&self) -> Result<()> {
        // placeholder dims exercise the structural model constraints
        self.to_run_config(1, 2)
            .validate()
            .map_err(anyhow::Error::from)?;
        if self.partition.clients == 0 {
            bail!("invalid value for `partition.clients`: must be positive");
        }
        if self.partition.regime == PartitionRegime::Overlapping {
            if self.partition.samples_per_part == 0 {
                bail!("invalid value for `partition.samples_per_part`: must be positive");
            }
            if !(self.partition.sample_frac > 0.0 && self.partition.sample_frac <= 1.0) {
                bail!("invalid value for `partition.sample_frac`: must lie in (0, 1]");
            }
        }
        if let DatasetSpec::Sbm(s) = &self.dataset {
            if s.blocks.is_empty() || s.blocks.iter().any(|&b| b == 0) {
                bail!("invalid value for `dataset.sbm.blocks`: need nonempty positive blocks");
            }
            for (name, p) in [("p_in", s.p_in), ("p_out", s.p_out)] {
                if !(0.0..=1.0).contains(&p) {
                    bail!("invalid value for `dataset.sbm.{name}`: must lie in [0, 1]");
                }
            }
            if s.feature_dim == 0 {
                bail!("invalid value for `dataset.sbm.feature_dim`: must be positive");
            }
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_yields_full_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.rounds, 100);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.n_s, 16);
        assert_eq!(cfg.n_g, 10);
        assert_eq!(cfg.d, 128);
        assert_eq!(cfg.pe_dim, 8);
        assert_eq!(cfg.tau, 5.0);
        assert_eq!(cfg.gamma, 0.9);
        assert_eq!(cfg.nu, 0.15);
        assert_eq!(cfg.lr, 0.001);
        assert_eq!(cfg.weight_decay, 5e-4);
        assert_eq!(cfg.delta, 0.002);
        assert_eq!(cfg.lambda, 0.001);
        assert_eq!(cfg.split, (0.2, 0.4, 0.4));
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let err = serde_json::from_str::<ExperimentConfig>("{\"bogus\": 1}").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn divisibility_violation_is_reported() {
        let cfg: ExperimentConfig = serde_json::from_str("{\"d\": 130, \"heads\": 4}").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("d"), "{err}");
    }

    #[test]
    fn serialize_parse_round_trip_is_identity() {
        let mut cfg = ExperimentConfig::default();
        cfg.rounds = 7;
        cfg.dataset = DatasetSpec::Csv(CsvSpec {
            nodes: "n.csv".into(),
            edges: "e.csv".into(),
            partition: None,
        });
        cfg.mode = AggregationMode::Uniform;
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn overlapping_regime_checks_its_fields() {
        let mut cfg = ExperimentConfig::default();
        cfg.partition.regime = PartitionRegime::Overlapping;
        cfg.partition.sample_frac = 0.0;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("sample_frac"), "{err}");
    }
}
