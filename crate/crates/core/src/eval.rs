//! Accuracy, confusion matrices, online convergence estimates and smoothing.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::SpikeRecord;
use crate::readout::{self, Scheme};

/// Fraction of predictions equal to the truth.
pub fn accuracy(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Input("accuracy of an empty prediction set".into()));
    }
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Row = true class, column = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub cells: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            cells: vec![0; n_classes * n_classes],
        }
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.cells[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, i)).sum()
    }

    /// `trace / total`; `None` when empty.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    /// Per-row percentages; empty rows stay zero.
    pub fn normalized(&self) -> Vec<f64> {
        let k = self.n_classes;
        let mut out = vec![0.0; k * k];
        for i in 0..k {
            let row = &self.cells[i * k..(i + 1) * k];
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                continue;
            }
            for j in 0..k {
                out[i * k + j] = 100.0 * row[j] as f64 / sum as f64;
            }
        }
        out
    }

    /// Adds another matrix's counts.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::Shape("confusion matrices of different size".into()));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
        Ok(())
    }

    /// Header `true,pred_0..pred_{k-1}`, then one row of counts per true class.
    pub fn write_csv<W: Write>(&self, out: W, percentages: bool) -> Result<()> {
        let k = self.n_classes;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true".to_string()];
        header.extend((0..k).map(|j| format!("pred_{j}")));
        w.write_record(&header).map_err(csv_err)?;
        let norm = self.normalized();
        for i in 0..k {
            let mut row = vec![i.to_string()];
            for j in 0..k {
                row.push(if percentages {
                    format!("{:.6}", norm[i * k + j])
                } else {
                    self.get(i, j).to_string()
                });
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Input(format!("csv: {e}"))
}

pub fn confusion(predictions: &[usize], truths: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut m = ConfusionMatrix::new(n_classes);
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::Input(format!(
                "label pair (true {t}, predicted {p}) out of range for {n_classes} classes"
            )));
        }
        m.cells[t * n_classes + p] += 1;
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatePoint {
    pub examples_seen: u64,
    pub accuracy: f64,
    /// Computed on a final window shorter than the configured size.
    pub partial: bool,
}

/// Labels neurons on `previous`, then classifies `current` with `scheme`.
///
/// The distance scheme needs the weight matrix and is not available here.
pub fn online_estimate(
    previous: &[(SpikeRecord, usize)],
    current: &[(SpikeRecord, usize)],
    scheme: Scheme,
    n_classes: usize,
    ngram_order: usize,
) -> Result<f64> {
    if previous.is_empty() || current.is_empty() {
        return Err(Error::Input("online estimate needs two non-empty windows".into()));
    }
    let assign = readout::fit_labels(previous.iter().map(|(r, c)| (r, *c)), n_classes)?;
    let truths: Vec<usize> = current.iter().map(|(_, c)| *c).collect();
    let predictions: Vec<usize> = match scheme {
        Scheme::All => current.iter().map(|(r, _)| readout::classify_all(r, &assign).class).collect(),
        Scheme::Confidence => current
            .iter()
            .map(|(r, _)| readout::classify_confidence(r, &assign).class)
            .collect(),
        Scheme::Ngram => {
            let table = readout::fit_ngrams(previous.iter().map(|(r, c)| (r, *c)), ngram_order, n_classes)?;
            current
                .iter()
                .map(|(r, _)| readout::classify_ngram(r, &table, Some(&assign)).class)
                .collect()
        }
        Scheme::Distance => {
            return Err(Error::Input(
                "online estimates support the all, confidence and ngram schemes".into(),
            ))
        }
    };
    accuracy(&predictions, &truths)
}

/// Mean of each value with up to `radius` neighbours on each side, truncated at the ends.
pub fn smooth(values: &[f64], radius: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            if radius == 0 {
                return values[i];
            }
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub points: Vec<EstimatePoint>,
    pub smoothed: Vec<f64>,
}

impl ConvergenceCurve {
    pub fn new(points: Vec<EstimatePoint>, radius: usize) -> Self {
        let raw: Vec<f64> = points.iter().map(|p| p.accuracy).collect();
        let smoothed = smooth(&raw, radius);
        ConvergenceCurve { points, smoothed }
    }

    /// Smoothed value of the last point at or before `examples_seen`.
    pub fn smoothed_at(&self, examples_seen: u64) -> Option<f64> {
        self.points
            .iter()
            .rposition(|p| p.examples_seen <= examples_seen)
            .map(|i| self.smoothed[i])
    }

    /// Header `examples_seen,raw,smoothed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["examples_seen", "raw", "smoothed"]).map_err(csv_err)?;
        for (p, s) in self.points.iter().zip(&self.smoothed) {
            w.write_record([
                p.examples_seen.to_string(),
                format!("{:.6}", p.accuracy),
                format!("{s:.6}"),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Sample mean and standard deviation (n - 1 denominator, 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub scheme: Scheme,
    pub accuracy: f64,
}

/// Writes `seed,scheme,accuracy,std`: one row per trial (std empty), then one
/// `mean` row per scheme carrying the mean and standard deviation over seeds.
pub fn write_trials_csv<W: Write>(trials: &[TrialResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "scheme", "accuracy", "std"]).map_err(csv_err)?;
    for t in trials {
        w.write_record([t.seed.to_string(), t.scheme.to_string(), format!("{:.6}", t.accuracy), String::new()])
            .map_err(csv_err)?;
    }
    for s in Scheme::ALL_SCHEMES {
        let accs: Vec<f64> = trials.iter().filter(|t| t.scheme == s).map(|t| t.accuracy).collect();
        if accs.is_empty() {
            continue;
        }
        let (m, sd) = mean_std(&accs);
        w.write_record(["mean".to_string(), s.to_string(), format!("{m:.6}"), format!("{sd:.6}")])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
