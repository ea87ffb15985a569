//! Run configuration: a TOML file with one table per subsystem.
//!
//! User files and `--set section.key=value` overrides are merged over the
//! complete default configuration, so the resolved copy written into every
//! run directory lists every parameter explicitly.

use std::path::{Path, PathBuf};

use lmsnn::data;
use lmsnn::lattice::{DistanceProfile, InhibitionSchedule, ScheduleKind};
use lmsnn::network::{ArchitectureKind, NetworkConfig, RetryPolicy};
use lmsnn::{EncoderParams, LifParams, Scheme, StdpParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::CliError;

pub const OUTPUT_ROOT_ENV: &str = "LMSNN_OUTPUT_ROOT";
pub const MNIST_DIR_ENV: &str = "LMSNN_MNIST_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Mnist,
    Frames,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub seeds: Vec<u64>,
    /// Relative paths resolve against `$LMSNN_OUTPUT_ROOT` (or the working directory).
    pub output_dir: String,
    /// Worker threads for seeds and grid cells.
    pub workers: usize,
    pub precision: Precision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Directory with the four standard MNIST IDX files; empty = `$LMSNN_MNIST_DIR`.
    pub mnist_dir: String,
    pub train_manifest: String,
    pub test_manifest: String,
    /// Leading training examples to use; -1 = all.
    pub train_examples: i64,
    /// Leading test examples to use; -1 = all.
    pub test_examples: i64,
    /// Labeling uses the last `label_examples` training examples.
    pub label_examples: usize,
    /// Resample the training set to this many examples per class; 0 = off.
    pub rebalance_per_class: usize,
    pub rebalance_with_replacement: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub architecture: ArchitectureKind,
    pub n_neurons: usize,
    pub dt_ms: f64,
    pub rest_ms: f64,
    /// Target sum of each neuron's input weights; 0 disables normalization.
    pub c_norm: f64,
    pub init_weight_max: f64,
    pub relay_strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InhibitionSection {
    pub kind: ScheduleKind,
    pub c_inhib: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub p_low: f64,
    pub p_grow: f64,
    pub sqrt_distance: bool,
    /// Absolute two-level switch point in examples; -1 = `p_low` x planned examples.
    pub low_examples: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub max_rate_hz: f64,
    pub duration_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub passes: u32,
    /// Shuffle the training order of every pass (seeded); off keeps file order.
    pub shuffle: bool,
    /// Online estimate window in examples; 0 disables estimates.
    pub estimate_window: usize,
    pub estimate_scheme: String,
    pub smooth_radius: usize,
    /// Write a filter map every this many examples; 0 = only at the end.
    pub snapshot_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsitySection {
    /// Fraction of input synapses removed before training.
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub schemes: Vec<String>,
    pub ngram_order: usize,
    /// Fit the n-gram table from the plastic training presentations of the
    /// labeling window instead of re-presenting them with frozen weights.
    pub ngram_online: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub p_low: Vec<f64>,
    pub c_min: Vec<f64>,
    pub c_max: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub network: NetworkSection,
    pub excitatory: LifParams<f64>,
    pub inhibitory: LifParams<f64>,
    pub stdp: StdpParams<f64>,
    pub inhibition: InhibitionSection,
    pub encoder: EncoderSection,
    pub retry: RetryPolicy,
    pub training: TrainingSection,
    pub sparsity: SparsitySection,
    pub readout: ReadoutSection,
    pub grid: GridSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sched = InhibitionSchedule::default();
        let enc = EncoderParams::default();
        RunConfig {
            run: RunSection {
                name: "lmsnn".into(),
                seeds: vec![1],
                output_dir: "runs/lmsnn".into(),
                workers: 1,
                precision: Precision::F64,
            },
            data: DataSection {
                source: DataSource::Mnist,
                mnist_dir: String::new(),
                train_manifest: String::new(),
                test_manifest: String::new(),
                train_examples: -1,
                test_examples: -1,
                label_examples: 12_000,
                rebalance_per_class: 0,
                rebalance_with_replacement: true,
            },
            network: NetworkSection {
                architecture: ArchitectureKind::ThreeLayer,
                n_neurons: 625,
                dt_ms: 0.5,
                rest_ms: 150.0,
                c_norm: 78.4,
                init_weight_max: 1.0,
                relay_strength: lmsnn::network::DEFAULT_RELAY_STRENGTH,
            },
            excitatory: LifParams::excitatory(),
            inhibitory: LifParams::inhibitory(),
            stdp: StdpParams::default(),
            inhibition: InhibitionSection {
                kind: sched.kind,
                c_inhib: sched.c_inhib,
                c_min: sched.c_min,
                c_max: sched.c_max,
                p_low: sched.p_low,
                p_grow: sched.p_grow,
                sqrt_distance: false,
                low_examples: -1,
            },
            encoder: EncoderSection {
                max_rate_hz: enc.max_rate_hz,
                duration_ms: enc.duration_ms,
            },
            retry: RetryPolicy::default(),
            training: TrainingSection {
                passes: 1,
                shuffle: false,
                estimate_window: 250,
                estimate_scheme: "all".into(),
                smooth_radius: 10,
                snapshot_every: 0,
            },
            sparsity: SparsitySection { level: 0.0 },
            readout: ReadoutSection {
                schemes: Scheme::ALL_SCHEMES.iter().map(|s| s.name().to_string()).collect(),
                ngram_order: 2,
                ngram_online: false,
            },
            grid: GridSection {
                p_low: vec![0.1, 0.25],
                c_min: vec![0.1, 1.0, 2.5],
                c_max: vec![15.0, 17.5, 20.0],
            },
        }
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Table(b), Value::Table(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses the right-hand side of `--set`; bare words become strings.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

impl RunConfig {
    /// Default config merged with an optional file and `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        Self::load_over(RunConfig::default(), path, overrides)
    }

    /// Like [`RunConfig::load`] but starting from `base` instead of the defaults.
    pub fn load_over(base: RunConfig, path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = Value::try_from(base).expect("config serializes");
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let patch: toml::Table = text
                .parse()
                .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
            merge(&mut value, Value::Table(patch));
        }
        let mut errors = Vec::new();
        for ov in overrides {
            let Some((key, raw)) = ov.split_once('=') else {
                errors.push(format!("override '{ov}' is not of the form section.key=value"));
                continue;
            };
            let mut patch = parse_value(raw.trim());
            for part in key.trim().split('.').rev() {
                let mut t = toml::Table::new();
                t.insert(part.to_string(), patch);
                patch = Value::Table(t);
            }
            merge(&mut value, patch);
        }
        if !errors.is_empty() {
            return Err(CliError::Validation(errors));
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the resolved TOML, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>, CliError> {
        let mut out = Vec::new();
        let mut errors = Vec::new();
        for s in &self.readout.schemes {
            match s.parse::<Scheme>() {
                Ok(s) if !out.contains(&s) => out.push(s),
                Ok(_) => {}
                Err(e) => errors.push(e.to_string()),
            }
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(CliError::Validation(errors))
        }
    }

    pub fn estimate_scheme(&self) -> Result<Scheme, CliError> {
        self.training
            .estimate_scheme
            .parse()
            .map_err(|e: lmsnn::Error| CliError::Validation(vec![e.to_string()]))
    }

    pub fn schedule(&self) -> InhibitionSchedule {
        let i = &self.inhibition;
        InhibitionSchedule {
            kind: i.kind,
            c_inhib: i.c_inhib,
            c_min: i.c_min,
            c_max: i.c_max,
            p_low: i.p_low,
            p_grow: i.p_grow,
            profile: if i.sqrt_distance {
                DistanceProfile::SqrtEuclidean
            } else {
                DistanceProfile::Euclidean
            },
        }
    }

    pub fn network(&self, n_input: usize) -> NetworkConfig {
        let n = &self.network;
        NetworkConfig {
            kind: n.architecture,
            n_input,
            n_neurons: n.n_neurons,
            dt_ms: n.dt_ms,
            rest_ms: n.rest_ms,
            exc: self.excitatory,
            inh: self.inhibitory,
            stdp: self.stdp,
            c_norm: (n.c_norm > 0.0).then_some(n.c_norm),
            init_weight_max: n.init_weight_max,
            relay_strength: n.relay_strength,
            inhibition: self.schedule(),
            low_examples: u64::try_from(self.inhibition.low_examples).ok(),
        }
    }

    pub fn encoder(&self) -> EncoderParams {
        EncoderParams {
            max_rate_hz: self.encoder.max_rate_hz,
            duration_ms: self.encoder.duration_ms,
            dt_ms: self.network.dt_ms,
            rng_seed: 0,
        }
    }

    /// Every violation at once; nothing is simulated before this passes.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        // n_input is only known after loading data; any positive value checks the rest.
        out.extend(self.network(1).violations());
        if self.network.c_norm < 0.0 {
            out.push(format!("network.c_norm must be >= 0 (got {})", self.network.c_norm));
        }
        if self.inhibition.low_examples < -1 {
            out.push("inhibition.low_examples must be -1 or >= 0".into());
        }
        out.extend(self.encoder().violations().into_iter().map(|v| format!("encoder: {v}")));
        if !(self.retry.boost_hz >= 0.0) {
            out.push(format!("retry.boost_hz must be >= 0 (got {})", self.retry.boost_hz));
        }
        if self.run.seeds.is_empty() {
            out.push("run.seeds must list at least one seed".into());
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.run.seeds {
            if !seen.insert(s) {
                out.push(format!("run.seeds lists seed {s} twice"));
            }
        }
        if self.run.workers == 0 {
            out.push("run.workers must be >= 1".into());
        }
        if self.run.output_dir.trim().is_empty() {
            out.push("run.output_dir must not be empty".into());
        }
        if self.data.train_examples == 0 || self.data.train_examples < -1 {
            out.push("data.train_examples must be -1 (all) or > 0".into());
        }
        if self.data.test_examples == 0 || self.data.test_examples < -1 {
            out.push("data.test_examples must be -1 (all) or > 0".into());
        }
        if self.data.label_examples == 0 {
            out.push("data.label_examples must be > 0".into());
        }
        if self.data.source == DataSource::Frames
            && (self.data.train_manifest.is_empty() || self.data.test_manifest.is_empty())
        {
            out.push("data.source = frames needs data.train_manifest and data.test_manifest".into());
        }
        if self.training.passes == 0 {
            out.push("training.passes must be >= 1".into());
        }
        match self.estimate_scheme() {
            Ok(Scheme::Distance) => out.push("training.estimate_scheme cannot be distance".into()),
            Ok(_) => {}
            Err(CliError::Validation(v)) => out.extend(v.into_iter().map(|m| format!("training.estimate_scheme: {m}"))),
            Err(e) => out.push(e.to_string()),
        }
        if !(0.0..=1.0).contains(&self.sparsity.level) {
            out.push(format!("sparsity.level must lie in [0, 1] (got {})", self.sparsity.level));
        }
        if self.readout.schemes.is_empty() {
            out.push("readout.schemes must name at least one scheme".into());
        }
        if let Err(CliError::Validation(v)) = self.schemes() {
            out.extend(v.into_iter().map(|m| format!("readout.schemes: {m}")));
        }
        if self.readout.ngram_order == 0 {
            out.push("readout.ngram_order must be >= 1".into());
        }
        for (name, list) in [("p_low", &self.grid.p_low), ("c_min", &self.grid.c_min), ("c_max", &self.grid.c_max)] {
            if list.is_empty() {
                out.push(format!("grid.{name} must not be empty"));
            }
        }
        for &p in &self.grid.p_low {
            if !(0.0..=1.0).contains(&p) {
                out.push(format!("grid.p_low values must lie in [0, 1] (got {p})"));
            }
        }
        for &c in self.grid.c_min.iter().chain(&self.grid.c_max) {
            if !(c >= 0.0) {
                out.push(format!("grid inhibition levels must be >= 0 (got {c})"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(v))
        }
    }

    /// Root directory of this run.
    pub fn output_root(&self) -> PathBuf {
        let p = PathBuf::from(&self.run.output_dir);
        if p.is_absolute() {
            return p;
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(p),
            None => p,
        }
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_root().join(format!("seed-{seed}"))
    }

    pub fn mnist_dir(&self) -> PathBuf {
        if !self.data.mnist_dir.is_empty() {
            return PathBuf::from(&self.data.mnist_dir);
        }
        std::env::var_os(MNIST_DIR_ENV).map_or_else(|| PathBuf::from("data/mnist"), PathBuf::from)
    }

    /// Loads (train, test) as configured, after truncation.
    pub fn load_data(&self) -> Result<(data::Dataset, data::Dataset), CliError> {
        let (train, test) = match self.data.source {
            DataSource::Mnist => {
                let dir = self.mnist_dir();
                let (ti, tl) = data::mnist_paths(&dir, true);
                let (vi, vl) = data::mnist_paths(&dir, false);
                (
                    data::load_idx(&ti, &tl).map_err(CliError::data)?,
                    data::load_idx(&vi, &vl).map_err(CliError::data)?,
                )
            }
            DataSource::Frames => (
                data::load_frames(Path::new(&self.data.train_manifest)).map_err(CliError::data)?,
                data::load_frames(Path::new(&self.data.test_manifest)).map_err(CliError::data)?,
            ),
        };
        let take = |d: data::Dataset, limit: i64| -> Result<data::Dataset, CliError> {
            match usize::try_from(limit) {
                Ok(n) if n < d.len() => Ok(d.subset(&(0..n).collect::<Vec<_>>())?),
                _ => Ok(d),
            }
        };
        Ok((take(train, self.data.train_examples)?, take(test, self.data.test_examples)?))
    }
}
