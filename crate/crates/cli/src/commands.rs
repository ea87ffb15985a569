//! CLI verbs. Seeds and grid cells fan out over a worker pool; each job owns
//! its network and writes into its own directory.

use std::fs;
use std::path::{Path, PathBuf};

use lmsnn::checkpoint::Checkpoint;
use lmsnn::eval::{self, ConvergenceCurve, EstimatePoint, TrialResult};
use lmsnn::lattice::ScheduleKind;
use lmsnn::{visual, Architecture, Lattice, Scheme};
use log::{error, info};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{self, SeedOutcome, TrainOutcome, RESOLVED_CONFIG};

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

fn write_root_config(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let root = cfg.output_root();
    fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
    let path = root.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_toml()).map_err(|e| CliError::io(&path, e))?;
    Ok(root)
}

/// Runs `job` for every configured seed; returns results in seed order or the first error.
fn per_seed<T: Send>(cfg: &RunConfig, job: impl Fn(u64) -> Result<T, CliError> + Sync) -> Result<Vec<T>, CliError> {
    let results: Vec<Result<T, CliError>> =
        pool(cfg.run.workers)?.install(|| cfg.run.seeds.par_iter().map(|&s| job(s)).collect());
    results.into_iter().collect()
}

fn write_trials(path: &Path, trials: &[TrialResult]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    eval::write_trials_csv(trials, file).map_err(CliError::from)
}

pub fn train(cfg: &RunConfig) -> Result<Vec<TrainOutcome>, CliError> {
    write_root_config(cfg)?;
    let (train, _) = cfg.load_data()?;
    per_seed(cfg, |seed| pipeline::train(cfg, seed, &train))
}

pub fn label(cfg: &RunConfig, model: Option<&Path>) -> Result<(), CliError> {
    if model.is_some() && cfg.run.seeds.len() > 1 {
        return Err(CliError::Validation(vec!["--checkpoint needs exactly one seed".into()]));
    }
    let (train, _) = cfg.load_data()?;
    per_seed(cfg, |seed| pipeline::label(cfg, seed, &train, model)).map(|_| ())
}

pub fn test(cfg: &RunConfig, model: Option<&Path>, labels: Option<&Path>) -> Result<Vec<TrialResult>, CliError> {
    if (model.is_some() || labels.is_some()) && cfg.run.seeds.len() > 1 {
        return Err(CliError::Validation(vec!["--checkpoint/--labels need exactly one seed".into()]));
    }
    let root = write_root_config(cfg)?;
    let (_, test) = cfg.load_data()?;
    let trials: Vec<TrialResult> = per_seed(cfg, |seed| pipeline::test(cfg, seed, &test, model, labels))?
        .into_iter()
        .flatten()
        .collect();
    write_trials(&root.join("results.csv"), &trials)?;
    Ok(trials)
}

/// Train, label and test every seed.
pub fn run(cfg: &RunConfig) -> Result<Vec<SeedOutcome>, CliError> {
    let root = write_root_config(cfg)?;
    let (train, test) = cfg.load_data()?;
    let outcomes = per_seed(cfg, |seed| pipeline::run_seed(cfg, seed, &train, &test))?;
    let trials: Vec<TrialResult> = outcomes.iter().flat_map(|o| o.trials.clone()).collect();
    write_trials(&root.join("results.csv"), &trials)?;
    Ok(outcomes)
}

/// One two-level parameter combination of a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub p_low: f64,
    pub c_min: f64,
    pub c_max: f64,
}

impl GridCell {
    pub fn dir_name(&self) -> String {
        format!("cell_plow{}_cmin{}_cmax{}", self.p_low, self.c_min, self.c_max)
    }
}

/// Cells in table order: `p_low` outermost, then `c_min`, then `c_max`.
pub fn grid_cells(cfg: &RunConfig) -> Vec<GridCell> {
    let mut out = Vec::new();
    for &p_low in &cfg.grid.p_low {
        for &c_min in &cfg.grid.c_min {
            for &c_max in &cfg.grid.c_max {
                out.push(GridCell { p_low, c_min, c_max });
            }
        }
    }
    out
}

/// Settings of the 625-neuron two-level parameter table: 18 cells x 5 seeds.
pub fn lattice625_preset(cfg: &mut RunConfig) {
    cfg.network.n_neurons = 625;
    cfg.run.seeds = (1..=5).collect();
    cfg.grid.p_low = vec![0.1, 0.25];
    cfg.grid.c_min = vec![0.1, 1.0, 2.5];
    cfg.grid.c_max = vec![15.0, 17.5, 20.0];
    cfg.readout.schemes = vec!["distance".into(), "all".into(), "confidence".into()];
}

pub const GRID_SCHEMES: [Scheme; 3] = [Scheme::Distance, Scheme::All, Scheme::Confidence];

#[derive(Clone, Debug)]
pub struct GridRow {
    pub cell: GridCell,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<(u64, String)>,
}

pub fn cell_config(cfg: &RunConfig, cell: &GridCell) -> RunConfig {
    let mut c = cfg.clone();
    c.inhibition.kind = ScheduleKind::TwoLevel;
    c.inhibition.p_low = cell.p_low;
    c.inhibition.c_min = cell.c_min;
    c.inhibition.c_max = cell.c_max;
    c.run.output_dir = cfg.output_root().join(cell.dir_name()).to_string_lossy().into_owned();
    c
}

/// Runs every cell x seed; failed jobs are recorded and the grid continues.
pub fn grid(cfg: &RunConfig) -> Result<Vec<GridRow>, CliError> {
    let root = write_root_config(cfg)?;
    let cells = grid_cells(cfg);
    let configs: Vec<RunConfig> = cells.iter().map(|c| cell_config(cfg, c)).collect();
    for c in &configs {
        c.validate()?;
    }
    let (train, test) = cfg.load_data()?;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|k| cfg.run.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results: Vec<(usize, u64, Result<SeedOutcome, CliError>)> = pool(cfg.run.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(k, seed)| {
                let r = pipeline::run_seed(&configs[k], seed, &train, &test);
                if let Err(e) = &r {
                    error!("grid cell {} seed {seed} failed: {e}", cells[k].dir_name());
                }
                (k, seed, r)
            })
            .collect()
    });
    let mut rows: Vec<GridRow> = cells
        .iter()
        .map(|&cell| GridRow {
            cell,
            trials: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (k, seed, r) in results {
        match r {
            Ok(o) => rows[k].trials.extend(o.trials),
            Err(e) => rows[k].failures.push((seed, e.to_string())),
        }
    }
    write_grid_csv(&root.join("grid.csv"), &rows)?;
    let all: Vec<TrialResult> = rows.iter().flat_map(|r| r.trials.clone()).collect();
    let path = root.join("grid_trials.csv");
    let mut w = csv::Writer::from_writer(fs::File::create(&path).map_err(|e| CliError::io(&path, e))?);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("writing {}: {e}", path.display()));
    w.write_record(["p_low", "c_min", "c_max", "seed", "scheme", "accuracy"]).map_err(csv_err)?;
    for row in &rows {
        for t in &row.trials {
            w.write_record([
                row.cell.p_low.to_string(),
                row.cell.c_min.to_string(),
                row.cell.c_max.to_string(),
                t.seed.to_string(),
                t.scheme.to_string(),
                format!("{:.6}", t.accuracy),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    info!("grid: {} cells, {} trials", rows.len(), all.len());
    Ok(rows)
}

pub fn grid_header() -> Vec<String> {
    let mut h: Vec<String> = vec!["p_low".into(), "c_min".into(), "c_max".into()];
    for s in GRID_SCHEMES {
        h.push(format!("{s}_mean"));
        h.push(format!("{s}_std"));
    }
    h.push("seeds_ok".into());
    h.push("seeds_failed".into());
    h
}

/// Table layout: one row per cell, mean and standard deviation (percent) per scheme.
pub fn write_grid_csv(path: &Path, rows: &[GridRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(fs::File::create(path).map_err(|e| CliError::io(path, e))?);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("writing {}: {e}", path.display()));
    w.write_record(grid_header()).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.cell.p_low.to_string(), row.cell.c_min.to_string(), row.cell.c_max.to_string()];
        for s in GRID_SCHEMES {
            let accs: Vec<f64> = row.trials.iter().filter(|t| t.scheme == s).map(|t| 100.0 * t.accuracy).collect();
            if accs.is_empty() {
                rec.push(String::new());
                rec.push(String::new());
            } else {
                let (m, sd) = eval::mean_std(&accs);
                rec.push(format!("{m:.2}"));
                rec.push(format!("{sd:.2}"));
            }
        }
        let ok = row
            .trials
            .iter()
            .map(|t| t.seed)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        rec.push(ok.to_string());
        rec.push(row.failures.len().to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn checkpoint_dims(ck: &Checkpoint) -> Result<(usize, usize), CliError> {
    let get = |k: &str| -> Result<usize, CliError> {
        ck.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Data(format!("checkpoint lacks '{k}'")))
    };
    Ok((get("height")?, get("width")?))
}

pub fn export_filters(cfg: &RunConfig, model: &Path, out: &Path) -> Result<(), CliError> {
    let ck = Checkpoint::read(model).map_err(CliError::data)?;
    let (h, w) = checkpoint_dims(&ck)?;
    let seed = ck.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
    let arch: Architecture<f64> = pipeline::restore(cfg, seed, &ck, h * w)?;
    let img = visual::filter_map(&arch.input, arch.lattice(), h, w)?;
    img.write(out).map_err(CliError::from)
}

pub fn export_assignments(labels: &Path, out: &Path, cell: usize) -> Result<(), CliError> {
    let ck = Checkpoint::read(labels).map_err(CliError::data)?;
    let a = ck
        .assignment
        .ok_or_else(|| CliError::Data(format!("{} has no label assignment", labels.display())))?;
    let lattice = Lattice::for_neurons(a.n_neurons)?;
    visual::assignment_map(&a.labels, &lattice, cell)?
        .write(out)
        .map_err(CliError::from)
}

fn read_curve(path: &Path) -> Result<Vec<EstimatePoint>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let parse = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok());
        match (parse(0), parse(1)) {
            (Some(seen), Some(acc)) => points.push(EstimatePoint {
                examples_seen: seen as u64,
                accuracy: acc,
                partial: false,
            }),
            _ => return Err(CliError::Data(format!("{}: malformed row {:?}", path.display(), rec))),
        }
    }
    Ok(points)
}

/// Re-smooths every seed's raw online estimates with `radius` and writes the
/// per-seed curves side by side with their mean.
pub fn estimate_curve(cfg: &RunConfig, radius: usize) -> Result<PathBuf, CliError> {
    let root = cfg.output_root();
    let mut curves = Vec::new();
    for &seed in &cfg.run.seeds {
        let path = cfg.seed_dir(seed).join("convergence.csv");
        curves.push((seed, ConvergenceCurve::new(read_curve(&path)?, radius)));
    }
    let len = curves.iter().map(|(_, c)| c.points.len()).min().unwrap_or(0);
    let out = root.join(format!("convergence_r{radius}.csv"));
    let mut w = csv::Writer::from_writer(fs::File::create(&out).map_err(|e| CliError::io(&out, e))?);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("writing {}: {e}", out.display()));
    let mut header = vec!["examples_seen".to_string()];
    header.extend(curves.iter().map(|(s, _)| format!("seed_{s}")));
    header.push("mean".into());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..len {
        let vals: Vec<f64> = curves.iter().map(|(_, c)| c.smoothed[i]).collect();
        let mut rec = vec![curves[0].1.points[i].examples_seen.to_string()];
        rec.extend(vals.iter().map(|v| format!("{v:.6}")));
        rec.push(format!("{:.6}", eval::mean_std(&vals).0));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&out, e))?;
    Ok(out)
}
