//! Network assembly and the clock-driven presentation loop.
//!
//! Two architectures share one input connection (input -> excitatory, STDP):
//!
//! * **three-layer**: every excitatory neuron drives its own inhibitory
//!   partner one-to-one, and inhibitory neuron `k` inhibits excitatory
//!   neuron `j` with weight `inh_matrix[k][j]` (zero for `j == k`).
//! * **two-layer recurrent**: the inhibitory relay is dropped and
//!   `inh_matrix` connects excitatory neurons to each other directly.
//!
//! The relay strength defaults to a value that makes the partner fire in the
//! same step as its excitatory neuron, so in both architectures a spike at
//! step `t` inhibits the rest of the layer from step `t + 1` on.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encoding::{boost_rates, encode, EncoderParams, SpikeTrain};
use crate::error::{Error, Result};
use crate::eval::{self, EstimatePoint};
use crate::lattice::{InhibitionMatrix, InhibitionSchedule, Lattice, ScheduleKind};
use crate::neuron::{LifParams, NeuronGroup};
use crate::plasticity::{Connection, StdpParams};
use crate::readout::Scheme;
use crate::rng::Streams;
use crate::scalar::Scalar;

/// Excitatory -> inhibitory relay strength. From rest, one excitatory spike
/// pushes the default inhibitory neuron over threshold within the same step.
pub const DEFAULT_RELAY_STRENGTH: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    ThreeLayer,
    TwoLayerRecurrent,
}

impl ArchitectureKind {
    pub fn name(&self) -> &'static str {
        match self {
            ArchitectureKind::ThreeLayer => "three_layer",
            ArchitectureKind::TwoLayerRecurrent => "two_layer_recurrent",
        }
    }
}

/// Simulation phase. Only `Train` runs STDP and threshold adaptation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Train,
    Label,
    Test,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Label => "label",
            Phase::Test => "test",
        }
    }

    pub fn is_plastic(&self) -> bool {
        matches!(self, Phase::Train)
    }
}

/// Everything needed to build an [`Architecture`]; all values in `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub kind: ArchitectureKind,
    pub n_input: usize,
    pub n_neurons: usize,
    pub dt_ms: f64,
    /// Quiet interval after each presentation, applied in closed form.
    pub rest_ms: f64,
    pub exc: LifParams<f64>,
    pub inh: LifParams<f64>,
    pub stdp: StdpParams<f64>,
    pub c_norm: Option<f64>,
    /// Initial weights are uniform in `[0, init_weight_max)` before normalization.
    pub init_weight_max: f64,
    pub relay_strength: f64,
    pub inhibition: InhibitionSchedule,
    /// Absolute two-level switch point, overriding `p_low * total_planned`.
    pub low_examples: Option<u64>,
}

impl NetworkConfig {
    pub fn mnist(n_neurons: usize) -> Self {
        NetworkConfig {
            kind: ArchitectureKind::ThreeLayer,
            n_input: 784,
            n_neurons,
            dt_ms: 0.5,
            rest_ms: 150.0,
            exc: LifParams::excitatory(),
            inh: LifParams::inhibitory(),
            stdp: StdpParams::default(),
            c_norm: Some(78.4),
            init_weight_max: 1.0,
            relay_strength: DEFAULT_RELAY_STRENGTH,
            inhibition: InhibitionSchedule::default(),
            low_examples: None,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = Lattice::for_neurons(self.n_neurons) {
            out.push(e.to_string());
        }
        if self.n_input == 0 {
            out.push("n_input must be > 0".into());
        }
        if !(self.dt_ms > 0.0) {
            out.push(format!("dt_ms must be > 0 (got {})", self.dt_ms));
        }
        if !(self.rest_ms >= 0.0) {
            out.push(format!("rest_ms must be >= 0 (got {})", self.rest_ms));
        }
        out.extend(self.exc.violations().into_iter().map(|v| format!("excitatory neurons: {v}")));
        if self.kind == ArchitectureKind::ThreeLayer {
            out.extend(self.inh.violations().into_iter().map(|v| format!("inhibitory neurons: {v}")));
        }
        out.extend(self.stdp.violations());
        if let Some(c) = self.c_norm {
            if !(c > 0.0) {
                out.push(format!("c_norm must be > 0 (got {c})"));
            }
        }
        if !(self.init_weight_max > 0.0) {
            out.push(format!("init_weight_max must be > 0 (got {})", self.init_weight_max));
        }
        if !(self.relay_strength >= 0.0) {
            out.push(format!("relay_strength must be >= 0 (got {})", self.relay_strength));
        }
        out.extend(self.inhibition.violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Input(v.join("; ")))
        }
    }
}

/// Excitatory-layer raster of one presentation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpikeRecord {
    pub example_id: u64,
    /// `(timestep, neuron)` sorted by timestep, ties by ascending neuron index.
    pub events: Vec<(u32, u32)>,
    pub counts: Vec<u32>,
    /// Presentations used, including the first.
    pub attempts: u32,
    /// Set when the retry cap was hit without reaching the spike floor.
    pub below_floor: bool,
}

impl SpikeRecord {
    pub fn new(example_id: u64, n_neurons: usize) -> Self {
        SpikeRecord {
            example_id,
            events: Vec::new(),
            counts: vec![0; n_neurons],
            attempts: 1,
            below_floor: false,
        }
    }

    /// Builds a record from unordered events, establishing the ordering invariant.
    pub fn from_events(example_id: u64, n_neurons: usize, mut events: Vec<(u32, u32)>) -> Self {
        events.sort_unstable();
        let mut r = SpikeRecord::new(example_id, n_neurons);
        for &(_, n) in &events {
            r.counts[n as usize] += 1;
        }
        r.events = events;
        r
    }

    pub fn total(&self) -> u64 {
        self.events.len() as u64
    }

    /// Neuron indices in firing order.
    pub fn sequence(&self) -> impl Iterator<Item = u32> + '_ {
        self.events.iter().map(|&(_, n)| n)
    }
}

/// Re-presentation policy for examples that elicit too few excitatory spikes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub min_spikes: u32,
    pub boost_hz: f64,
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            min_spikes: 5,
            boost_hz: 32.0,
            max_retries: 5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Architecture<F> {
    kind: ArchitectureKind,
    lattice: Lattice,
    pub input: Connection<F>,
    schedule: InhibitionSchedule,
    low_examples: Option<u64>,
    pub exc: NeuronGroup<F>,
    pub inh: Option<NeuronGroup<F>>,
    relay_strength: F,
    inh_matrix: InhibitionMatrix<F>,
    level: Option<f64>,
    recomputations: u32,
    dt: F,
    rest_ms: f64,
    exc_in: Vec<F>,
    inh_in: Vec<F>,
    relay_in: Vec<F>,
    zeros: Vec<F>,
    inhibitors: Vec<u32>,
    fired: Vec<u32>,
}

impl<F: Scalar> Architecture<F> {
    /// Builds a network with random initial input weights drawn from `streams`.
    pub fn new(config: &NetworkConfig, streams: &Streams, mask: Option<Vec<bool>>) -> Result<Self> {
        config.validate()?;
        let mut rng = streams.stream("weights");
        let input = Connection::random(
            config.n_input,
            config.n_neurons,
            F::of(config.init_weight_max),
            &mut rng,
        );
        Self::with_connection(config, input, mask)
    }

    /// Builds a network around explicit input weights (masked, then normalized if `c_norm` is set).
    pub fn with_connection(
        config: &NetworkConfig,
        mut input: Connection<F>,
        mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        config.validate()?;
        if input.n_pre() != config.n_input || input.n_post() != config.n_neurons {
            return Err(Error::Shape(format!(
                "input connection is {}x{}, network expects {}x{}",
                input.n_pre(),
                input.n_post(),
                config.n_input,
                config.n_neurons
            )));
        }
        let lattice = Lattice::for_neurons(config.n_neurons)?;
        if let Some(mask) = mask {
            input.set_mask(mask)?;
        }
        input.set_stdp(Some(config.stdp.cast()));
        input.set_c_norm(config.c_norm.map(F::of));
        input.normalize_incoming();

        let n = config.n_neurons;
        let exc = NeuronGroup::new(n, config.exc.cast())?;
        let inh = match config.kind {
            ArchitectureKind::ThreeLayer => Some(NeuronGroup::new(n, config.inh.cast())?),
            ArchitectureKind::TwoLayerRecurrent => None,
        };
        let mut arch = Architecture {
            kind: config.kind,
            lattice,
            input,
            schedule: config.inhibition,
            low_examples: config.low_examples,
            exc,
            inh,
            relay_strength: F::of(config.relay_strength),
            inh_matrix: InhibitionMatrix::zeros(n),
            level: None,
            recomputations: 0,
            dt: F::of(config.dt_ms),
            rest_ms: config.rest_ms,
            exc_in: vec![F::zero(); n],
            inh_in: vec![F::zero(); n],
            relay_in: vec![F::zero(); n],
            zeros: vec![F::zero(); n],
            inhibitors: Vec::new(),
            fired: Vec::new(),
        };
        arch.update_inhibition(0, 1);
        Ok(arch)
    }

    pub fn kind(&self) -> ArchitectureKind {
        self.kind
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn n_neurons(&self) -> usize {
        self.exc.len()
    }

    pub fn n_input(&self) -> usize {
        self.input.n_pre()
    }

    pub fn schedule(&self) -> &InhibitionSchedule {
        &self.schedule
    }

    pub fn inhibition_matrix(&self) -> &InhibitionMatrix<F> {
        &self.inh_matrix
    }

    pub fn inhibition_level(&self) -> Option<f64> {
        self.level
    }

    /// How many times the inhibitory matrix has been materialized.
    pub fn recomputations(&self) -> u32 {
        self.recomputations
    }

    /// Level the schedule prescribes after `examples_seen` of `total_planned` examples.
    pub fn scheduled_level(&self, examples_seen: u64, total_planned: u64) -> f64 {
        if self.schedule.kind == ScheduleKind::TwoLevel {
            let low = self.low_examples.unwrap_or_else(|| {
                (self.schedule.p_low * total_planned as f64 - 1e-9).ceil().max(0.0) as u64
            });
            self.schedule.level_at_example(examples_seen, low)
        } else {
            let progress = if total_planned == 0 {
                1.0
            } else {
                examples_seen as f64 / total_planned as f64
            };
            self.schedule.effective_level(progress)
        }
    }

    /// Refreshes the inhibitory matrix if the scheduled level changed. Returns true on change.
    pub fn update_inhibition(&mut self, examples_seen: u64, total_planned: u64) -> bool {
        let level = self.scheduled_level(examples_seen, total_planned);
        self.set_inhibition_level(level)
    }

    pub fn set_inhibition_level(&mut self, level: f64) -> bool {
        if self.level == Some(level) {
            return false;
        }
        self.inh_matrix = self.schedule.matrix(&self.lattice, level);
        self.level = Some(level);
        self.recomputations += 1;
        true
    }

    /// Runs one presentation window and returns the excitatory raster.
    ///
    /// Afterwards neuron state is reset (thresholds kept). In the training
    /// phase traces and thresholds also decay over the rest period and the
    /// input weights are renormalized.
    pub fn present(&mut self, spikes: &SpikeTrain, phase: Phase) -> Result<SpikeRecord> {
        if spikes.n_inputs() != self.n_input() {
            return Err(Error::Shape(format!(
                "spike train has {} inputs, network expects {}",
                spikes.n_inputs(),
                self.n_input()
            )));
        }
        let learn = phase.is_plastic();
        self.exc.set_adapt_threshold(learn);
        let trace_decay = if learn {
            Some(self.input.trace_decay(self.dt)?)
        } else {
            None
        };
        let n = self.n_neurons();
        let mut record = SpikeRecord::new(0, n);
        self.inhibitors.clear();

        for t in 0..spikes.n_steps() {
            let active = spikes.active(t);
            self.exc_in.iter_mut().for_each(|x| *x = F::zero());
            self.input.accumulate(active, &mut self.exc_in);
            self.inh_in.iter_mut().for_each(|x| *x = F::zero());
            self.inh_matrix.accumulate(&self.inhibitors, &mut self.inh_in);

            let spiked = self.exc.step(self.dt, &self.exc_in, &self.inh_in)?;
            self.fired.clear();
            self.fired
                .extend(spiked.iter().enumerate().filter_map(|(i, &s)| s.then_some(i as u32)));
            for &j in &self.fired {
                record.events.push((t as u32, j));
                record.counts[j as usize] += 1;
            }

            self.inhibitors.clear();
            match self.inh.as_mut() {
                Some(inh) => {
                    for &j in &self.fired {
                        self.relay_in[j as usize] = self.relay_strength;
                    }
                    let relay = inh.step(self.dt, &self.relay_in, &self.zeros)?;
                    self.inhibitors
                        .extend(relay.iter().enumerate().filter_map(|(i, &s)| s.then_some(i as u32)));
                    for &j in &self.fired {
                        self.relay_in[j as usize] = F::zero();
                    }
                }
                None => self.inhibitors.extend_from_slice(&self.fired),
            }

            if let Some(decay) = trace_decay {
                self.input.update_traces_indexed(decay, active, &self.fired);
                if !self.fired.is_empty() || !active.is_empty() {
                    self.input.stdp_step_indexed(active, &self.fired)?;
                }
            }
        }

        self.exc.reset_state();
        if let Some(inh) = self.inh.as_mut() {
            inh.reset_state();
        }
        if learn {
            let rest = F::of(self.rest_ms);
            self.exc.decay_theta_for(rest);
            if let Some(s) = self.input.stdp() {
                let f = (-rest / s.tau_trace).exp();
                self.input.scale_traces(f);
            }
            self.input.normalize_incoming();
        }
        Ok(record)
    }

    /// Encodes and presents `image`, boosting the input rate and retrying
    /// while the excitatory layer fires fewer than `policy.min_spikes` spikes.
    /// `seed_for_attempt` supplies the encoder seed of each attempt.
    pub fn present_with_retry(
        &mut self,
        image: &[f64],
        encoder: &EncoderParams,
        phase: Phase,
        policy: &RetryPolicy,
        seed_for_attempt: impl Fn(u32) -> u64,
    ) -> Result<SpikeRecord> {
        let mut params = *encoder;
        let mut attempt = 0u32;
        loop {
            let train = encode(image, &params.with_seed(seed_for_attempt(attempt)))?;
            let mut record = self.present(&train, phase)?;
            record.attempts = attempt + 1;
            let enough = record.total() >= u64::from(policy.min_spikes);
            if enough || attempt >= policy.max_retries {
                record.below_floor = !enough;
                return Ok(record);
            }
            params = boost_rates(&params, policy.boost_hz)?;
            attempt += 1;
        }
    }

    pub fn cast<G: Scalar>(&self) -> Architecture<G> {
        let n = self.n_neurons();
        let cast_group = |g: &NeuronGroup<F>| -> NeuronGroup<G> {
            let c = |v: &[F]| v.iter().map(|x| G::of(x.to_f64_lossy())).collect::<Vec<G>>();
            let mut out = NeuronGroup::new(g.len(), g.params().cast()).expect("validated params");
            out.v = c(&g.v);
            out.g_e = c(&g.g_e);
            out.g_i = c(&g.g_i);
            out.theta = c(&g.theta);
            out.refrac_remaining = c(&g.refrac_remaining);
            out.spiked = g.spiked.clone();
            out.set_adapt_threshold(g.adapt_threshold());
            out
        };
        let mut arch = Architecture {
            kind: self.kind,
            lattice: self.lattice,
            input: self.input.cast(),
            schedule: self.schedule,
            low_examples: self.low_examples,
            exc: cast_group(&self.exc),
            inh: self.inh.as_ref().map(cast_group),
            relay_strength: G::of(self.relay_strength.to_f64_lossy()),
            inh_matrix: InhibitionMatrix::zeros(n),
            level: None,
            recomputations: 0,
            dt: G::of(self.dt.to_f64_lossy()),
            rest_ms: self.rest_ms,
            exc_in: vec![G::zero(); n],
            inh_in: vec![G::zero(); n],
            relay_in: vec![G::zero(); n],
            zeros: vec![G::zero(); n],
            inhibitors: Vec::new(),
            fired: Vec::new(),
        };
        if let Some(level) = self.level {
            arch.set_inhibition_level(level);
        }
        arch.recomputations = self.recomputations;
        arch
    }
}

/// Seed of the encoder stream for one presentation attempt.
pub fn encoder_seed(streams: &Streams, phase: Phase, example: u64, attempt: u32) -> u64 {
    streams.sub_seed(phase.name(), (example << 8) | u64::from(attempt.min(255)))
}

/// Online accuracy estimation settings used during training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateOptions {
    pub window: usize,
    pub scheme: Scheme,
    pub ngram_order: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            window: 250,
            scheme: Scheme::All,
            ngram_order: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    /// Denominator of training progress (passes x dataset size).
    pub total_planned: u64,
    /// Examples already seen before this epoch.
    pub examples_seen: u64,
    pub retry: RetryPolicy,
    pub estimate: Option<EstimateOptions>,
    /// Stop after this many examples of the epoch.
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleLog {
    pub examples_seen: u64,
    pub dataset_index: usize,
    pub label: usize,
    pub spikes: u64,
    pub attempts: u32,
    pub below_floor: bool,
    pub level: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub examples: Vec<ExampleLog>,
    /// `(examples_seen, level)` at each materialization of the inhibition matrix.
    pub inhibition_changes: Vec<(u64, f64)>,
    pub estimates: Vec<EstimatePoint>,
}

impl TrainingLog {
    pub fn extend(&mut self, other: TrainingLog) {
        self.examples.extend(other.examples);
        self.inhibition_changes.extend(other.inhibition_changes);
        self.estimates.extend(other.estimates);
    }
}

/// Hook invoked after every training example.
pub trait TrainObserver<F> {
    fn on_example(&mut self, _arch: &Architecture<F>, _log: &ExampleLog, _record: &SpikeRecord) -> Result<()> {
        Ok(())
    }
}

impl<F> TrainObserver<F> for () {}

/// One pass over `order` (indices into `dataset`) in the training phase.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch<F: Scalar>(
    arch: &mut Architecture<F>,
    dataset: &Dataset,
    order: &[usize],
    encoder: &EncoderParams,
    streams: &Streams,
    options: &TrainOptions,
    observer: &mut dyn TrainObserver<F>,
) -> Result<TrainingLog> {
    if order.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut log = TrainingLog::default();
    if options.examples_seen == 0 {
        if let Some(level) = arch.inhibition_level() {
            log.inhibition_changes.push((0, level));
        }
    }
    let mut window: Vec<(SpikeRecord, usize)> = Vec::new();
    let mut previous: Option<Vec<(SpikeRecord, usize)>> = None;
    let mut seen = options.examples_seen;
    let take = options.limit.unwrap_or(order.len()).min(order.len());

    for &idx in &order[..take] {
        if arch.update_inhibition(seen, options.total_planned) {
            log.inhibition_changes.push((seen, arch.inhibition_level().unwrap_or(0.0)));
        }
        let image = dataset.intensities(idx);
        let label = dataset.label(idx);
        let mut record = arch.present_with_retry(&image, encoder, Phase::Train, &options.retry, |a| {
            encoder_seed(streams, Phase::Train, seen, a)
        })?;
        record.example_id = seen;
        seen += 1;
        let entry = ExampleLog {
            examples_seen: seen,
            dataset_index: idx,
            label,
            spikes: record.total(),
            attempts: record.attempts,
            below_floor: record.below_floor,
            level: arch.inhibition_level().unwrap_or(0.0),
        };
        observer.on_example(arch, &entry, &record)?;
        log.examples.push(entry);

        if let Some(est) = options.estimate {
            window.push((record, label));
            if window.len() == est.window {
                if let Some(prev) = previous.as_ref() {
                    let acc = eval::online_estimate(prev, &window, est.scheme, dataset.n_classes(), est.ngram_order)?;
                    log.estimates.push(EstimatePoint {
                        examples_seen: seen,
                        accuracy: acc,
                        partial: false,
                    });
                }
                previous = Some(std::mem::take(&mut window));
            }
        }
    }
    if let (Some(est), Some(prev)) = (options.estimate, previous.as_ref()) {
        if !window.is_empty() {
            let acc = eval::online_estimate(prev, &window, est.scheme, dataset.n_classes(), est.ngram_order)?;
            log.estimates.push(EstimatePoint {
                examples_seen: seen,
                accuracy: acc,
                partial: true,
            });
        }
    }
    Ok(log)
}

/// Presents `indices` with frozen weights and returns one record per example.
pub fn record_phase<F: Scalar>(
    arch: &mut Architecture<F>,
    dataset: &Dataset,
    indices: &[usize],
    encoder: &EncoderParams,
    streams: &Streams,
    phase: Phase,
    retry: &RetryPolicy,
) -> Result<Vec<SpikeRecord>> {
    if phase.is_plastic() {
        return Err(Error::Contract("record_phase runs label/test phases only".into()));
    }
    indices
        .iter()
        .map(|&idx| {
            let image = dataset.intensities(idx);
            let mut r = arch.present_with_retry(&image, encoder, phase, retry, |a| {
                encoder_seed(streams, phase, idx as u64, a)
            })?;
            r.example_id = idx as u64;
            Ok(r)
        })
        .collect()
}
