//! Flat pipeline configuration: defaults, then the TOML file, then
//! `--set key=value`, then dedicated flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use malscope_core::code::{GraphTrainConfig, MuInit, NeighborMode, SkipGramConfig, Weighting};
use malscope_core::encoder::{BiLstmTrainConfig, CnnConfig, CnnTrainConfig};
use malscope_core::fusion::{ForestParams, MaxFeatures, MlpTrainConfig};
use malscope_core::nn::{CellMode, Padding};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SEED_ENV: &str = "FALCON_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,

    pub bidirectional: bool,
    pub payload_only: bool,

    pub cnn_c1: usize,
    pub cnn_c2: usize,
    pub cnn_padding: String,
    pub cnn_epochs: usize,
    pub cnn_lr: f64,
    pub cnn_dropout: f64,
    pub cnn_batch: usize,

    pub lstm_hidden: usize,
    pub lstm_batch: usize,
    pub lstm_epochs: usize,
    pub lstm_lr: f64,
    pub lstm_cap: usize,
    /// 0 means full BPTT.
    pub lstm_truncation: usize,
    pub lstm_cell: String,

    pub sg_dim: usize,
    pub sg_window: usize,
    pub sg_negatives: usize,
    pub sg_epochs: usize,
    pub sg_lr: f64,

    pub graph_p: usize,
    pub graph_rounds: usize,
    pub graph_layers: usize,
    pub graph_weighting: String,
    pub graph_neighbor: String,
    pub graph_mu_init: String,
    pub graph_epochs: usize,
    pub graph_batch: usize,
    pub graph_lr: f64,

    pub head_width: usize,
    pub head_linear: bool,
    pub head_epochs: usize,
    pub head_batch: usize,
    pub head_lr: f64,

    pub classifier: String,
    pub rf_n_estimators: usize,
    pub rf_max_depth: usize,
    pub rf_min_samples_split: usize,
    pub rf_max_features: String,
    pub rf_bootstrap: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let rf = ForestParams::paper();
        Self {
            seed: 0,
            out: PathBuf::from("runs"),
            bidirectional: true,
            payload_only: false,
            cnn_c1: 16,
            cnn_c2: 32,
            cnn_padding: "valid".into(),
            cnn_epochs: 50,
            cnn_lr: 0.001,
            cnn_dropout: 0.5,
            cnn_batch: 8,
            lstm_hidden: 64,
            lstm_batch: 8,
            lstm_epochs: 50,
            lstm_lr: 0.001,
            lstm_cap: 2_000,
            lstm_truncation: 0,
            lstm_cell: "standard".into(),
            sg_dim: 64,
            sg_window: 5,
            sg_negatives: 5,
            sg_epochs: 5,
            sg_lr: 0.025,
            graph_p: 64,
            graph_rounds: 3,
            graph_layers: 2,
            graph_weighting: "uniform".into(),
            graph_neighbor: "undirected".into(),
            graph_mu_init: "zero".into(),
            graph_epochs: 30,
            graph_batch: 8,
            graph_lr: 0.001,
            head_width: 64,
            head_linear: false,
            head_epochs: 100,
            head_batch: 32,
            head_lr: 0.001,
            classifier: "forest".into(),
            rf_n_estimators: rf.n_estimators,
            rf_max_depth: rf.max_depth,
            rf_min_samples_split: rf.min_samples_split,
            rf_max_features: "sqrt".into(),
            rf_bootstrap: rf.bootstrap,
        }
    }
}

/// Flag-level overrides, applied last.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub file: Option<PathBuf>,
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paper_cell: bool,
    pub linear_head: bool,
    pub payload_only: bool,
    pub random_init: bool,
    pub unidirectional: bool,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `key=value` where value is read as a TOML literal, falling back to a
/// bare string.
fn parse_assignment(kv: &str) -> Result<(String, toml::Value), CliError> {
    let (k, v) = kv
        .split_once('=')
        .ok_or_else(|| usage(format!("--set expects key=value, got {kv:?}")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(usage(format!("--set has an empty key in {kv:?}")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

impl PipelineConfig {
    pub fn load(o: &Overrides) -> Result<Self, CliError> {
        let mut table = match &o.file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for kv in &o.set {
            let (k, v) = parse_assignment(kv)?;
            table.insert(k, v);
        }
        let seed_given = table.contains_key("seed");
        let mut cfg: PipelineConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| usage(format!("config: {}", e.message())))?;
        if let Some(seed) = o.seed {
            cfg.seed = seed;
        } else if !seed_given {
            if let Ok(v) = std::env::var(SEED_ENV) {
                cfg.seed = v
                    .trim()
                    .parse()
                    .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
            }
        }
        if let Some(out) = &o.out {
            cfg.out = out.clone();
        }
        if o.paper_cell {
            cfg.lstm_cell = "paper".into();
        }
        if o.linear_head {
            cfg.head_linear = true;
        }
        if o.payload_only {
            cfg.payload_only = true;
        }
        if o.random_init {
            cfg.graph_mu_init = "random".into();
        }
        if o.unidirectional {
            cfg.bidirectional = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("cnn_c1", self.cnn_c1),
            ("cnn_c2", self.cnn_c2),
            ("cnn_batch", self.cnn_batch),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_batch", self.lstm_batch),
            ("lstm_cap", self.lstm_cap),
            ("sg_dim", self.sg_dim),
            ("sg_window", self.sg_window),
            ("graph_p", self.graph_p),
            ("graph_rounds", self.graph_rounds),
            ("graph_layers", self.graph_layers),
            ("graph_batch", self.graph_batch),
            ("head_width", self.head_width),
            ("head_batch", self.head_batch),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(usage(format!("{k} must be at least 1")));
        }
        for (k, v) in [
            ("cnn_lr", self.cnn_lr),
            ("lstm_lr", self.lstm_lr),
            ("sg_lr", self.sg_lr),
            ("graph_lr", self.graph_lr),
            ("head_lr", self.head_lr),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(usage(format!("{k} must be a finite non-negative number, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.cnn_dropout) {
            return Err(usage(format!("cnn_dropout must be in [0, 1), got {}", self.cnn_dropout)));
        }
        self.padding()?;
        self.cell()?;
        self.weighting()?;
        self.neighbor()?;
        self.mu_init()?;
        self.classifier_kind()?;
        self.forest_params()?.validate().map_err(|e| usage(e.to_string()))?;
        if self.cnn_config()?.final_side() == 0 {
            return Err(usage("CNN geometry leaves no spatial extent"));
        }
        Ok(())
    }

    pub fn padding(&self) -> Result<Padding, CliError> {
        Padding::from_str(&self.cnn_padding).map_err(|e| usage(format!("cnn_padding: {e}")))
    }

    pub fn cell(&self) -> Result<CellMode, CliError> {
        match self.lstm_cell.as_str() {
            "standard" => Ok(CellMode::Standard),
            "paper" => Ok(CellMode::Paper),
            other => Err(usage(format!("lstm_cell must be standard or paper, got {other:?}"))),
        }
    }

    pub fn weighting(&self) -> Result<Weighting, CliError> {
        self.graph_weighting.parse().map_err(|e: String| usage(format!("graph_weighting: {e}")))
    }

    pub fn neighbor(&self) -> Result<NeighborMode, CliError> {
        self.graph_neighbor.parse().map_err(|e: String| usage(format!("graph_neighbor: {e}")))
    }

    pub fn mu_init(&self) -> Result<MuInit, CliError> {
        self.graph_mu_init.parse().map_err(|e: String| usage(format!("graph_mu_init: {e}")))
    }

    pub fn classifier_kind(&self) -> Result<Classifier, CliError> {
        self.classifier.parse()
    }

    pub fn cnn_config(&self) -> Result<CnnConfig, CliError> {
        Ok(CnnConfig {
            c1: self.cnn_c1,
            c2: self.cnn_c2,
            padding: self.padding()?,
            dropout: self.cnn_dropout,
        })
    }

    pub fn cnn_train(&self) -> Result<CnnTrainConfig, CliError> {
        Ok(CnnTrainConfig {
            arch: self.cnn_config()?,
            epochs: self.cnn_epochs,
            lr: self.cnn_lr,
            batch_size: self.cnn_batch,
            seed: derive_seed(self.seed, "cnn"),
        })
    }

    pub fn bilstm_train(&self) -> Result<BiLstmTrainConfig, CliError> {
        Ok(BiLstmTrainConfig {
            hidden: self.lstm_hidden,
            epochs: self.lstm_epochs,
            batch_size: self.lstm_batch,
            lr: self.lstm_lr,
            truncation: (self.lstm_truncation > 0).then_some(self.lstm_truncation),
            cap: self.lstm_cap,
            cell: self.cell()?,
            seed: derive_seed(self.seed, "bilstm"),
        })
    }

    pub fn skipgram(&self) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.sg_dim,
            window: self.sg_window,
            negatives: self.sg_negatives,
            epochs: self.sg_epochs,
            lr: self.sg_lr,
            seed: derive_seed(self.seed, "opcode2vec"),
        }
    }

    pub fn graph_train(&self) -> GraphTrainConfig {
        GraphTrainConfig {
            epochs: self.graph_epochs,
            batch_size: self.graph_batch,
            lr: self.graph_lr,
            seed: derive_seed(self.seed, "graph-train"),
        }
    }

    pub fn head_train(&self, stage: &str) -> MlpTrainConfig {
        MlpTrainConfig {
            hidden: self.head_width,
            epochs: self.head_epochs,
            batch_size: self.head_batch,
            lr: self.head_lr,
            linear_head: self.head_linear,
            seed: derive_seed(self.seed, stage),
        }
    }

    pub fn forest_params(&self) -> Result<ForestParams, CliError> {
        Ok(ForestParams {
            n_estimators: self.rf_n_estimators,
            max_depth: self.rf_max_depth,
            min_samples_split: self.rf_min_samples_split,
            max_features: MaxFeatures::from_str(&self.rf_max_features)
                .map_err(|e| usage(format!("rf_max_features: {e}")))?,
            bootstrap: self.rf_bootstrap,
            seed: derive_seed(self.seed, "forest"),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Forest,
    Mlp,
}

impl FromStr for Classifier {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "forest" | "rf" => Ok(Classifier::Forest),
            "mlp" => Ok(Classifier::Mlp),
            _ => Err(usage(format!("classifier must be forest or mlp, got {s:?}"))),
        }
    }
}

/// Independent per-stage seed from the master seed.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}

pub fn read_config_file(path: &Path) -> Result<PipelineConfig, CliError> {
    PipelineConfig::load(&Overrides {
        file: Some(path.to_path_buf()),
        ..Default::default()
    })
}
