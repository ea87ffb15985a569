//! Neuron labeling and the classification read-outs.
//!
//! Rate schemes (`all`, `confidence`) use per-neuron spike counts; `distance`
//! compares the image with each neuron's filter; `ngram` votes with the
//! ordered excitatory spike sequence. Every argmax breaks ties toward the
//! lowest class (or neuron) index.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::SpikeRecord;
use crate::plasticity::Connection;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    All,
    Confidence,
    Distance,
    Ngram,
}

impl Scheme {
    pub const ALL_SCHEMES: [Scheme; 4] = [Scheme::All, Scheme::Confidence, Scheme::Distance, Scheme::Ngram];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::All => "all",
            Scheme::Confidence => "confidence",
            Scheme::Distance => "distance",
            Scheme::Ngram => "ngram",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Scheme::All),
            "confidence" | "proportion" => Ok(Scheme::Confidence),
            "distance" => Ok(Scheme::Distance),
            "ngram" | "n-gram" | "n_gram" => Ok(Scheme::Ngram),
            other => Err(Error::Input(format!(
                "unknown scheme '{other}' (expected all, confidence, distance or ngram)"
            ))),
        }
    }
}

/// A predicted class. `flagged` marks predictions made without any evidence
/// (no relevant spikes or votes), which default to class 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub class: usize,
    pub flagged: bool,
}

impl Prediction {
    fn from_scores(scores: &[f64]) -> Self {
        match argmax(scores) {
            Some(c) if scores[c] > 0.0 => Prediction { class: c, flagged: false },
            _ => Prediction { class: 0, flagged: true },
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Per-neuron class statistics gathered in the labeling phase.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelAssignment {
    pub n_classes: usize,
    pub n_neurons: usize,
    /// `n_neurons x n_classes`, each row sums to 1 or is all zero.
    pub proportions: Vec<f64>,
    /// `None` for neurons that never fired.
    pub labels: Vec<Option<usize>>,
    /// `n_neurons x n_classes` mean spike count per class-`c` example.
    pub mean_rates: Vec<f64>,
}

impl LabelAssignment {
    pub fn proportion_row(&self, neuron: usize) -> &[f64] {
        &self.proportions[neuron * self.n_classes..(neuron + 1) * self.n_classes]
    }

    pub fn mean_rate_row(&self, neuron: usize) -> &[f64] {
        &self.mean_rates[neuron * self.n_classes..(neuron + 1) * self.n_classes]
    }

    pub fn assigned(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Number of neurons carrying each label.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes];
        for c in self.labels.iter().flatten() {
            h[*c] += 1;
        }
        h
    }
}

/// Labels each neuron with the class it fires most for on average.
pub fn fit_labels<'a, I>(records: I, n_classes: usize) -> Result<LabelAssignment>
where
    I: IntoIterator<Item = (&'a SpikeRecord, usize)>,
{
    let mut totals: Vec<f64> = Vec::new();
    let mut per_class = vec![0u64; n_classes];
    let mut n_neurons = None;
    for (record, class) in records {
        let n = *n_neurons.get_or_insert(record.counts.len());
        if record.counts.len() != n {
            return Err(Error::Shape(format!(
                "record {} has {} neurons, expected {n}",
                record.example_id,
                record.counts.len()
            )));
        }
        if class >= n_classes {
            return Err(Error::Input(format!("label {class} out of range for {n_classes} classes")));
        }
        if totals.is_empty() {
            totals = vec![0.0; n * n_classes];
        }
        per_class[class] += 1;
        for (i, &c) in record.counts.iter().enumerate() {
            totals[i * n_classes + class] += f64::from(c);
        }
    }
    let Some(n_neurons) = n_neurons else {
        return Err(Error::Input("cannot fit labels on an empty record set".into()));
    };

    let mut proportions = vec![0.0; n_neurons * n_classes];
    let mut mean_rates = vec![0.0; n_neurons * n_classes];
    let mut labels = vec![None; n_neurons];
    for i in 0..n_neurons {
        let row = &totals[i * n_classes..(i + 1) * n_classes];
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            continue;
        }
        for c in 0..n_classes {
            proportions[i * n_classes + c] = row[c] / sum;
            if per_class[c] > 0 {
                mean_rates[i * n_classes + c] = row[c] / per_class[c] as f64;
            }
        }
        labels[i] = argmax(&mean_rates[i * n_classes..(i + 1) * n_classes]);
    }
    Ok(LabelAssignment {
        n_classes,
        n_neurons,
        proportions,
        labels,
        mean_rates,
    })
}

/// Average spike count of the neurons carrying each label; highest average wins.
pub fn classify_all(record: &SpikeRecord, assign: &LabelAssignment) -> Prediction {
    let mut sums = vec![0.0; assign.n_classes];
    let mut members = vec![0usize; assign.n_classes];
    for (label, &count) in assign.labels.iter().zip(&record.counts) {
        if let Some(c) = label {
            sums[*c] += f64::from(count);
            members[*c] += 1;
        }
    }
    let scores: Vec<f64> = sums
        .iter()
        .zip(&members)
        .map(|(&s, &m)| if m > 0 { s / m as f64 } else { 0.0 })
        .collect();
    Prediction::from_scores(&scores)
}

/// Spike counts weighted by each neuron's class proportions.
pub fn classify_confidence(record: &SpikeRecord, assign: &LabelAssignment) -> Prediction {
    let k = assign.n_classes;
    let mut scores = vec![0.0; k];
    for (i, &count) in record.counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let c = f64::from(count);
        for (s, p) in scores.iter_mut().zip(assign.proportion_row(i)) {
            *s += c * p;
        }
    }
    Prediction::from_scores(&scores)
}

/// Label of the assigned neuron whose filter is closest (Euclidean) to the image.
///
/// The image is first rescaled so its sum equals the connection's `c_norm`
/// (no rescaling without one). Equidistant filters resolve to the lower neuron index.
pub fn classify_distance<F: Scalar>(
    image: &[f64],
    input: &Connection<F>,
    assign: &LabelAssignment,
) -> Result<Prediction> {
    let n_pre = input.n_pre();
    let n_post = input.n_post();
    if image.len() != n_pre {
        return Err(Error::Shape(format!(
            "image has {} pixels, filters have {n_pre}",
            image.len()
        )));
    }
    if assign.labels.len() != n_post {
        return Err(Error::Shape(format!(
            "assignment covers {} neurons, connection has {n_post}",
            assign.labels.len()
        )));
    }
    if assign.assigned() == 0 {
        return Err(Error::Contract("distance read-out needs at least one labeled neuron".into()));
    }
    let sum: f64 = image.iter().sum();
    let scale = match input.c_norm() {
        Some(c) if sum > 0.0 => c.to_f64_lossy() / sum,
        _ => 1.0,
    };
    let mut dist = vec![0.0f64; n_post];
    let w = input.weights();
    for (i, &x) in image.iter().enumerate() {
        let x = x * scale;
        for (d, wij) in dist.iter_mut().zip(&w[i * n_post..(i + 1) * n_post]) {
            let diff = wij.to_f64_lossy() - x;
            *d += diff * diff;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, &d) in dist.iter().enumerate() {
        if assign.labels[j].is_none() {
            continue;
        }
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    let (j, _) = best.expect("at least one labeled neuron");
    Ok(Prediction {
        class: assign.labels[j].expect("labeled"),
        flagged: false,
    })
}

/// Class vote counts of every length-`n` window of neuron indices seen in labeling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramTable {
    pub n: usize,
    pub n_classes: usize,
    pub counts: BTreeMap<Vec<u32>, Vec<u64>>,
}

impl NgramTable {
    pub fn new(n: usize, n_classes: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("n-gram order must be >= 1".into()));
        }
        Ok(NgramTable {
            n,
            n_classes,
            counts: BTreeMap::new(),
        })
    }

    /// Adds the windows of one record with known class.
    pub fn observe(&mut self, record: &SpikeRecord, class: usize) -> Result<()> {
        if class >= self.n_classes {
            return Err(Error::Input(format!(
                "label {class} out of range for {} classes",
                self.n_classes
            )));
        }
        let seq: Vec<u32> = record.sequence().collect();
        for w in seq.windows(self.n) {
            let entry = self
                .counts
                .entry(w.to_vec())
                .or_insert_with(|| vec![0; self.n_classes]);
            entry[class] += 1;
        }
        Ok(())
    }

    /// Adds another table's counts (commutative).
    pub fn merge(&mut self, other: &NgramTable) -> Result<()> {
        if other.n != self.n || other.n_classes != self.n_classes {
            return Err(Error::Shape("cannot merge n-gram tables of different shape".into()));
        }
        for (k, v) in &other.counts {
            let e = self.counts.entry(k.clone()).or_insert_with(|| vec![0; self.n_classes]);
            for (a, b) in e.iter_mut().zip(v) {
                *a += b;
            }
        }
        Ok(())
    }

    pub fn total_votes(&self) -> u64 {
        self.counts.values().flatten().sum()
    }
}

pub fn fit_ngrams<'a, I>(records: I, n: usize, n_classes: usize) -> Result<NgramTable>
where
    I: IntoIterator<Item = (&'a SpikeRecord, usize)>,
{
    let mut table = NgramTable::new(n, n_classes)?;
    for (r, c) in records {
        table.observe(r, c)?;
    }
    Ok(table)
}

/// Sums the class votes of the record's windows. Without any votes, falls
/// back to [`classify_all`] when an assignment is given, else flags class 0.
pub fn classify_ngram(
    record: &SpikeRecord,
    table: &NgramTable,
    fallback: Option<&LabelAssignment>,
) -> Prediction {
    let mut votes = vec![0.0f64; table.n_classes];
    let seq: Vec<u32> = record.sequence().collect();
    for w in seq.windows(table.n) {
        if let Some(v) = table.counts.get(w) {
            for (a, &b) in votes.iter_mut().zip(v) {
                *a += b as f64;
            }
        }
    }
    if votes.iter().any(|&v| v > 0.0) {
        return Prediction::from_scores(&votes);
    }
    match fallback {
        Some(a) => classify_all(record, a),
        None => Prediction { class: 0, flagged: true },
    }
}
