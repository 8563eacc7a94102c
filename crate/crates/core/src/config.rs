//! Experiment configuration: one TOML file with sections, unknown keys rejected.
//!
//! ```toml
//! seed = 0
//!
//! [space]
//! num_nodes = 3
//! feature_dim = 8
//! op_widths = [4, 8, 16]
//!
//! [data]
//! kind = "spirals"
//! n_train = 10000
//!
//! [train]
//! algorithm = "spos"
//! scheduler = "calr"
//! use_ms = true
//!
//! [clusters]
//! mode = "operation_based"
//! edges = "random"       # or "first", or an explicit list such as [0, 2]
//!
//! [oracle]
//! epochs = 40
//! seeds = [0, 1, 2]
//!
//! [search]
//! mode = "evolutionary"
//! constraint = 600
//! ```
//!
//! Every key is optional; omitted keys take the defaults of [`ExperimentConfig::default`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DatasetKind, DatasetParams};
use crate::error::{Error, Result};
use crate::optim::ClusterMode;
use crate::search::EvolutionParams;
use crate::space::{OpTag, OperationKind, SearchSpaceSpec};
use crate::trainers::{OracleConfig, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Drives supernet initialization, sampling, cluster choice and the EA.
    pub seed: u64,
    pub space: SpaceConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub clusters: ClusterConfig,
    pub oracle: OracleConfig,
    pub metrics: MetricsConfig,
    pub search: SearchConfig,
    pub harness: HarnessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceConfig {
    pub num_nodes: usize,
    /// Defaults to the complete DAG over `num_nodes`.
    pub edges: Option<Vec<(usize, usize)>>,
    pub feature_dim: usize,
    /// Hidden widths of the narrow, mid and wide dense ops.
    pub op_widths: [usize; 3],
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            num_nodes: 3,
            edges: None,
            feature_dim: 8,
            op_widths: [4, 8, 16],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub kind: DatasetKind,
    pub n_train: usize,
    pub n_val: usize,
    pub classes: usize,
    pub input_dim: usize,
    pub noise: f64,
    /// Fixed across training seeds so every run ranks against the same oracle.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Spirals,
            n_train: 10_000,
            n_val: 1000,
            classes: 3,
            input_dim: 2,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedEdgePolicy {
    First,
    Random,
}

/// Which edges key operation-based clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgePolicy {
    Named(NamedEdgePolicy),
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub mode: ClusterMode,
    pub edges: EdgePolicy,
    /// Edges to pick under `first`/`random`; ignored for explicit lists.
    pub num_edges: usize,
    /// Cluster count in random mode.
    pub num_random_clusters: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            mode: ClusterMode::OperationBased,
            edges: EdgePolicy::Named(NamedEdgePolicy::Random),
            num_edges: 1,
            num_random_clusters: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub top_fraction: f64,
    /// Trace vectors per consistency window; defaults to about one epoch.
    pub window: Option<usize>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            top_fraction: 0.3,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exhaustive,
    Evolutionary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Parameter-count ceiling.
    pub constraint: Option<u64>,
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_prob: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let ea = EvolutionParams::default();
        Self {
            mode: SearchMode::Exhaustive,
            constraint: None,
            population: ea.population,
            generations: ea.generations,
            mutation_rate: ea.mutation_rate,
            crossover_prob: ea.crossover_prob,
        }
    }
}

impl SearchConfig {
    pub fn evolution(&self) -> EvolutionParams {
        EvolutionParams {
            population: self.population,
            generations: self.generations,
            mutation_rate: self.mutation_rate,
            crossover_prob: self.crossover_prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    /// Build (or load) the stand-alone table; evaluation needs it.
    pub use_oracle: bool,
    pub cache_dir: PathBuf,
    /// Write supernet checkpoints next to the other outputs.
    pub save_checkpoints: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            use_oracle: true,
            cache_dir: PathBuf::from("oracle_cache"),
            save_checkpoints: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.space_spec()?;
        if !(self.metrics.top_fraction > 0.0 && self.metrics.top_fraction <= 1.0) {
            return Err(Error::config("metrics.top_fraction must lie in (0, 1]"));
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::config(
                "train.epochs and train.batch_size must be positive",
            ));
        }
        if self.oracle.seeds.is_empty() {
            return Err(Error::config("oracle.seeds must not be empty"));
        }
        if let EdgePolicy::Explicit(edges) = &self.clusters.edges {
            if edges.is_empty() {
                return Err(Error::config("clusters.edges list is empty"));
            }
        }
        Ok(())
    }

    pub fn space_spec(&self) -> Result<SearchSpaceSpec> {
        let s = &self.space;
        let [narrow, mid, wide] = s.op_widths;
        let ops = vec![
            OperationKind::ZEROIZE,
            OperationKind::SKIP,
            OperationKind::dense(OpTag::DenseNarrow, narrow),
            OperationKind::dense(OpTag::DenseMid, mid),
            OperationKind::dense(OpTag::DenseWide, wide),
        ];
        let edges = s
            .edges
            .clone()
            .unwrap_or_else(|| SearchSpaceSpec::complete_dag_edges(s.num_nodes));
        SearchSpaceSpec::new(
            s.num_nodes,
            edges,
            ops,
            self.data.input_dim,
            s.feature_dim,
            self.data.classes,
        )
    }

    pub fn dataset_params(&self) -> DatasetParams {
        let d = &self.data;
        DatasetParams {
            kind: d.kind,
            n_train: d.n_train,
            n_val: d.n_val,
            classes: d.classes,
            input_dim: d.input_dim,
            noise: d.noise,
            seed: d.seed,
        }
    }

    /// Training config with the experiment seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Key of the stand-alone table: everything that determines it and nothing else.
    pub fn oracle_key(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            space: SearchSpaceSpec,
            data: DatasetParams,
            oracle: &'a OracleConfig,
        }
        let key = Key {
            space: self.space_spec()?,
            data: self.dataset_params(),
            oracle: &self.oracle,
        };
        let json = serde_json::to_string(&key).expect("oracle key serializes");
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }
}
