//! Train, label and test stages for one seed. Each stage reads and writes
//! artifacts in the seed's run directory, so stages can run separately.

use std::fs;
use std::path::{Path, PathBuf};

use lmsnn::checkpoint::{Checkpoint, WeightSection};
use lmsnn::data::{self, Dataset};
use lmsnn::eval::{self, ConvergenceCurve, TrialResult};
use lmsnn::network::{self, EstimateOptions, ExampleLog, Phase, TrainObserver, TrainOptions, TrainingLog};
use lmsnn::readout::NgramTable;
use lmsnn::{readout, visual, Architecture, Scalar, Scheme, SpikeRecord, Streams};
use log::{info, warn};
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::config::{Precision, RunConfig};
use crate::error::CliError;

pub const MODEL_FILE: &str = "model.ckpt";
pub const LABELS_FILE: &str = "labels.ckpt";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub seed: u64,
    pub log: TrainingLog,
    pub recomputations: u32,
    pub curve: Option<ConvergenceCurve>,
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub train: TrainOutcome,
    pub trials: Vec<TrialResult>,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn csv_file(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

fn map_write(path: &Path, r: lmsnn::Result<()>) -> Result<(), CliError> {
    r.map_err(|e| match e {
        lmsnn::Error::Io { path, source } => CliError::Io { path, source },
        other => CliError::Runtime(format!("{}: {other}", path.display())),
    })
}

/// SHA-256 over the input weights and adaptive thresholds.
pub fn model_hash<F: Scalar>(arch: &Architecture<F>) -> String {
    let mut h = Sha256::new();
    for w in arch.input.weights() {
        h.update(w.to_f64_lossy().to_le_bytes());
    }
    for t in &arch.exc.theta {
        h.update(t.to_f64_lossy().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Applies class rebalancing if configured.
pub fn training_set(cfg: &RunConfig, seed: u64, train: &Dataset) -> Result<Dataset, CliError> {
    if cfg.data.rebalance_per_class == 0 {
        return Ok(train.clone());
    }
    let streams = Streams::new(seed);
    Ok(data::rebalance(
        train,
        cfg.data.rebalance_per_class,
        streams.sub_seed("rebalance", 0),
        cfg.data.rebalance_with_replacement,
    )?)
}

fn sparsity_mask(cfg: &RunConfig, streams: &Streams, n_input: usize) -> Result<Option<Vec<bool>>, CliError> {
    if cfg.sparsity.level <= 0.0 {
        return Ok(None);
    }
    let m = data::make_sparsity_mask(
        n_input,
        cfg.network.n_neurons,
        cfg.sparsity.level,
        streams.sub_seed("sparsity", 0),
    )?;
    Ok(Some(m.mask))
}

struct Observer<'a> {
    every: usize,
    dir: &'a Path,
    height: usize,
    width: usize,
    /// Examples after this count feed `online`.
    online_from: u64,
    online: Option<NgramTable>,
}

impl<F: Scalar> TrainObserver<F> for Observer<'_> {
    fn on_example(&mut self, arch: &Architecture<F>, log: &ExampleLog, record: &SpikeRecord) -> lmsnn::Result<()> {
        if self.every > 0 && log.examples_seen % self.every as u64 == 0 {
            let img = visual::filter_map(&arch.input, arch.lattice(), self.height, self.width)?;
            img.write(&self.dir.join(format!("filters_{:07}.pgm", log.examples_seen)))?;
        }
        if let Some(table) = self.online.as_mut() {
            if log.examples_seen > self.online_from {
                table.observe(record, log.label)?;
            }
        }
        Ok(())
    }
}

fn train_generic<F: Scalar>(cfg: &RunConfig, seed: u64, train: &Dataset, dir: &Path) -> Result<TrainOutcome, CliError> {
    let train = training_set(cfg, seed, train)?;
    let streams = Streams::new(seed);
    let net = cfg.network(train.pixels());
    let mask = sparsity_mask(cfg, &streams, train.pixels())?;
    let mut arch: Architecture<F> = Architecture::new(&net, &streams, mask)?;
    let encoder = cfg.encoder();
    let estimate = match cfg.training.estimate_window {
        0 => None,
        w => Some(EstimateOptions {
            window: w,
            scheme: cfg.estimate_scheme()?,
            ngram_order: cfg.readout.ngram_order,
        }),
    };
    let n = train.len();
    let total = u64::from(cfg.training.passes) * n as u64;
    let mut log = TrainingLog::default();
    let online = if cfg.readout.ngram_online {
        Some(NgramTable::new(cfg.readout.ngram_order, train.n_classes())?)
    } else {
        None
    };
    let mut observer = Observer {
        every: cfg.training.snapshot_every,
        dir,
        height: train.height(),
        width: train.width(),
        online_from: total.saturating_sub(cfg.data.label_examples.min(n) as u64),
        online,
    };
    for pass in 0..cfg.training.passes {
        let mut order: Vec<usize> = (0..n).collect();
        if cfg.training.shuffle {
            order.shuffle(&mut streams.indexed("order", u64::from(pass)));
        }
        let options = TrainOptions {
            total_planned: total,
            examples_seen: u64::from(pass) * n as u64,
            retry: cfg.retry,
            estimate,
            limit: None,
        };
        let epoch = network::train_epoch(&mut arch, &train, &order, &encoder, &streams, &options, &mut observer)?;
        info!(
            "seed {seed}: pass {} done, {} examples, inhibition level {:?}",
            pass + 1,
            epoch.examples.len(),
            arch.inhibition_level()
        );
        log.extend(epoch);
    }
    let flagged = log.examples.iter().filter(|e| e.below_floor).count();
    if flagged > 0 {
        warn!("seed {seed}: {flagged} training examples stayed below the spike floor");
    }

    let mut ck = Checkpoint::default();
    ck.set("kind", "model")
        .set("seed", seed)
        .set("config_sha256", cfg.hash())
        .set("examples_seen", total)
        .set("inhibition_level", arch.inhibition_level().unwrap_or(0.0))
        .set("recomputations", arch.recomputations())
        .set("height", train.height())
        .set("width", train.width())
        .set("n_classes", train.n_classes())
        .set("model_sha256", model_hash(&arch));
    ck.weights = Some(WeightSection::from_connection(&arch.input));
    ck.theta = Some(arch.exc.theta.iter().map(|t| t.to_f64_lossy()).collect());
    ck.ngram = observer.online;
    let model_path = dir.join(MODEL_FILE);
    map_write(&model_path, ck.write(&model_path))?;

    let filters = dir.join("filters.pgm");
    map_write(
        &filters,
        visual::filter_map(&arch.input, arch.lattice(), train.height(), train.width()).and_then(|img| img.write(&filters)),
    )?;

    let mut w = csv::Writer::from_writer(csv_file(&dir.join("training_log.csv"))?);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("writing training log: {e}"));
    w.write_record(["examples_seen", "dataset_index", "label", "spikes", "attempts", "level"])
        .map_err(csv_err)?;
    for e in &log.examples {
        w.write_record([
            e.examples_seen.to_string(),
            e.dataset_index.to_string(),
            e.label.to_string(),
            e.spikes.to_string(),
            e.attempts.to_string(),
            e.level.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&dir.join("training_log.csv"), e))?;

    let mut w = csv::Writer::from_writer(csv_file(&dir.join("inhibition_changes.csv"))?);
    w.write_record(["examples_seen", "level"]).map_err(csv_err)?;
    for (seen, level) in &log.inhibition_changes {
        w.write_record([seen.to_string(), level.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&dir.join("inhibition_changes.csv"), e))?;

    let curve = estimate.map(|_| ConvergenceCurve::new(log.estimates.clone(), cfg.training.smooth_radius));
    if let Some(c) = &curve {
        let path = dir.join("convergence.csv");
        map_write(&path, c.write_csv(csv_file(&path)?))?;
    }
    Ok(TrainOutcome {
        seed,
        recomputations: arch.recomputations(),
        log,
        curve,
    })
}

/// Rebuilds a trained network from its checkpoint.
pub fn restore<F: Scalar>(cfg: &RunConfig, seed: u64, model: &Checkpoint, n_input: usize) -> Result<Architecture<F>, CliError> {
    let net = cfg.network(n_input);
    let mut arch: Architecture<F> = Architecture::new(&net, &Streams::new(seed), None)?;
    let weights = model
        .weights
        .as_ref()
        .ok_or_else(|| CliError::Data("model checkpoint has no weight section".into()))?;
    weights.apply_to(&mut arch.input)?;
    let theta = model
        .theta
        .as_ref()
        .ok_or_else(|| CliError::Data("model checkpoint has no threshold section".into()))?;
    if theta.len() != arch.n_neurons() {
        return Err(CliError::Data(format!(
            "checkpoint has {} thresholds, network has {} neurons",
            theta.len(),
            arch.n_neurons()
        )));
    }
    arch.exc.theta = theta.iter().map(|&t| F::of(t)).collect();
    let level: f64 = model
        .get("inhibition_level")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Data("model checkpoint lacks inhibition_level".into()))?;
    arch.set_inhibition_level(level);
    Ok(arch)
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::read(path).map_err(CliError::data)
}

fn label_generic<F: Scalar>(cfg: &RunConfig, seed: u64, train: &Dataset, dir: &Path, model_path: &Path) -> Result<(), CliError> {
    let model = read_checkpoint(model_path)?;
    let train = training_set(cfg, seed, train)?;
    let mut arch: Architecture<F> = restore(cfg, seed, &model, train.pixels())?;
    let n = cfg.data.label_examples.min(train.len());
    if n == 0 {
        return Err(CliError::Validation(vec!["labeling subset is empty".into()]));
    }
    let indices: Vec<usize> = (train.len() - n..train.len()).collect();
    let before = model_hash(&arch);
    let streams = Streams::new(seed);
    let records = network::record_phase(&mut arch, &train, &indices, &cfg.encoder(), &streams, Phase::Label, &cfg.retry)?;
    let after = model_hash(&arch);
    if before != after {
        return Err(CliError::Runtime("weights changed during the labeling phase".into()));
    }
    let pairs = || records.iter().zip(&indices).map(|(r, &i)| (r, train.label(i)));
    let assignment = readout::fit_labels(pairs(), train.n_classes())?;
    let table = match (&model.ngram, cfg.readout.ngram_online) {
        (Some(t), true) => t.clone(),
        (None, true) => return Err(CliError::Data("model checkpoint has no online n-gram table".into())),
        (_, false) => readout::fit_ngrams(pairs(), cfg.readout.ngram_order, train.n_classes())?,
    };
    info!(
        "seed {seed}: labeled {} of {} neurons on {n} examples",
        assignment.assigned(),
        assignment.n_neurons
    );
    let map = dir.join("assignments.ppm");
    map_write(
        &map,
        visual::assignment_map(&assignment.labels, arch.lattice(), 8).and_then(|img| img.write(&map)),
    )?;
    let mut ck = Checkpoint::default();
    ck.set("kind", "labels")
        .set("seed", seed)
        .set("model_sha256", after)
        .set("label_examples", n);
    ck.assignment = Some(assignment);
    ck.ngram = Some(table);
    let path = dir.join(LABELS_FILE);
    map_write(&path, ck.write(&path))
}

fn test_generic<F: Scalar>(
    cfg: &RunConfig,
    seed: u64,
    test: &Dataset,
    dir: &Path,
    model_path: &Path,
    labels_path: &Path,
) -> Result<Vec<TrialResult>, CliError> {
    if test.is_empty() {
        return Err(CliError::Validation(vec!["test set is empty".into()]));
    }
    let schemes = cfg.schemes()?;
    let model = read_checkpoint(model_path)?;
    let labels = read_checkpoint(labels_path)?;
    let mut arch: Architecture<F> = restore(cfg, seed, &model, test.pixels())?;
    if labels.get("model_sha256") != Some(model_hash(&arch).as_str()) {
        return Err(CliError::Data(format!(
            "{} was fitted on a different model than {}",
            labels_path.display(),
            model_path.display()
        )));
    }
    let assignment = labels.assignment.as_ref();
    let needs_assignment = schemes.iter().any(|s| *s != Scheme::Ngram);
    if needs_assignment && assignment.is_none() {
        return Err(CliError::Data("rate and distance schemes need a label assignment".into()));
    }
    if schemes.contains(&Scheme::Ngram) && labels.ngram.is_none() {
        return Err(CliError::Data("n-gram scheme needs an n-gram table".into()));
    }
    let indices: Vec<usize> = (0..test.len()).collect();
    let truths: Vec<usize> = indices.iter().map(|&i| test.label(i)).collect();
    let streams = Streams::new(seed);
    let needs_records = schemes.iter().any(|s| *s != Scheme::Distance);
    let records = if needs_records {
        network::record_phase(&mut arch, test, &indices, &cfg.encoder(), &streams, Phase::Test, &cfg.retry)?
    } else {
        Vec::new()
    };
    let mut trials = Vec::new();
    for scheme in schemes {
        let predictions: Vec<usize> = match scheme {
            Scheme::All => records
                .iter()
                .map(|r| readout::classify_all(r, assignment.expect("checked")).class)
                .collect(),
            Scheme::Confidence => records
                .iter()
                .map(|r| readout::classify_confidence(r, assignment.expect("checked")).class)
                .collect(),
            Scheme::Ngram => records
                .iter()
                .map(|r| readout::classify_ngram(r, labels.ngram.as_ref().expect("checked"), assignment).class)
                .collect(),
            Scheme::Distance => indices
                .iter()
                .map(|&i| {
                    readout::classify_distance(&test.intensities(i), &arch.input, assignment.expect("checked"))
                        .map(|p| p.class)
                })
                .collect::<lmsnn::Result<_>>()?,
        };
        let confusion = eval::confusion(&predictions, &truths, test.n_classes())?;
        let path = dir.join(format!("confusion_{scheme}.csv"));
        map_write(&path, confusion.write_csv(csv_file(&path)?, false))?;
        let accuracy = eval::accuracy(&predictions, &truths)?;
        info!("seed {seed}: {scheme} accuracy {:.2}%", 100.0 * accuracy);
        trials.push(TrialResult { seed, scheme, accuracy });
    }
    let path = dir.join("results.csv");
    map_write(&path, eval::write_trials_csv(&trials, csv_file(&path)?))?;
    Ok(trials)
}

fn prepare_dir(cfg: &RunConfig, seed: u64) -> Result<PathBuf, CliError> {
    let dir = cfg.seed_dir(seed);
    create_dir(&dir)?;
    let mut resolved = cfg.clone();
    resolved.run.seeds = vec![seed];
    write_file(&dir.join(RESOLVED_CONFIG), resolved.to_toml())?;
    Ok(dir)
}

pub fn train(cfg: &RunConfig, seed: u64, train: &Dataset) -> Result<TrainOutcome, CliError> {
    let dir = prepare_dir(cfg, seed)?;
    match cfg.run.precision {
        Precision::F64 => train_generic::<f64>(cfg, seed, train, &dir),
        Precision::F32 => train_generic::<f32>(cfg, seed, train, &dir),
    }
}

pub fn label(cfg: &RunConfig, seed: u64, train: &Dataset, model: Option<&Path>) -> Result<(), CliError> {
    let dir = cfg.seed_dir(seed);
    create_dir(&dir)?;
    let model = model.map_or_else(|| dir.join(MODEL_FILE), Path::to_path_buf);
    match cfg.run.precision {
        Precision::F64 => label_generic::<f64>(cfg, seed, train, &dir, &model),
        Precision::F32 => label_generic::<f32>(cfg, seed, train, &dir, &model),
    }
}

pub fn test(
    cfg: &RunConfig,
    seed: u64,
    test: &Dataset,
    model: Option<&Path>,
    labels: Option<&Path>,
) -> Result<Vec<TrialResult>, CliError> {
    let dir = cfg.seed_dir(seed);
    create_dir(&dir)?;
    let model = model.map_or_else(|| dir.join(MODEL_FILE), Path::to_path_buf);
    let labels = labels.map_or_else(|| dir.join(LABELS_FILE), Path::to_path_buf);
    match cfg.run.precision {
        Precision::F64 => test_generic::<f64>(cfg, seed, test, &dir, &model, &labels),
        Precision::F32 => test_generic::<f32>(cfg, seed, test, &dir, &model, &labels),
    }
}

/// Full train, label and test for one seed.
pub fn run_seed(cfg: &RunConfig, seed: u64, train_set: &Dataset, test_set: &Dataset) -> Result<SeedOutcome, CliError> {
    let t = train(cfg, seed, train_set)?;
    label(cfg, seed, train_set, None)?;
    let trials = test(cfg, seed, test_set, None, None)?;
    Ok(SeedOutcome { train: t, trials })
}
