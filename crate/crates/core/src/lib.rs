//! Clock-driven simulator for lattice-map spiking neural networks.
//!
//! Conductance-based LIF neurons with adaptive thresholds learn input filters
//! through online STDP, while distance-dependent lateral inhibition on a
//! square lattice organizes them into a topographic map. The numeric core is
//! generic over the scalar type ([`Scalar`], implemented for `f32` and `f64`);
//! the aliases below fix it to one precision.

pub mod checkpoint;
pub mod data;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod lattice;
pub mod network;
pub mod neuron;
pub mod plasticity;
pub mod pnm;
pub mod readout;
pub mod rng;
pub mod scalar;
pub mod visual;

pub use checkpoint::Checkpoint;
pub use data::{Dataset, SparsityMask};
pub use encoding::{EncoderParams, SpikeTrain};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, ConvergenceCurve, EstimatePoint};
pub use lattice::{DistanceProfile, InhibitionMatrix, InhibitionSchedule, Lattice, ScheduleKind};
pub use network::{
    Architecture, ArchitectureKind, NetworkConfig, Phase, RetryPolicy, SpikeRecord, TrainOptions, TrainingLog,
};
pub use neuron::{LifParams, NeuronGroup};
pub use plasticity::{Connection, StdpParams};
pub use readout::{LabelAssignment, NgramTable, Prediction, Scheme};
pub use rng::Streams;
pub use scalar::Scalar;

pub type ArchitectureF64 = Architecture<f64>;
pub type ArchitectureF32 = Architecture<f32>;
pub type NeuronGroupF64 = NeuronGroup<f64>;
pub type NeuronGroupF32 = NeuronGroup<f32>;
pub type ConnectionF64 = Connection<f64>;
pub type ConnectionF32 = Connection<f32>;
pub type InhibitionMatrixF64 = InhibitionMatrix<f64>;
pub type InhibitionMatrixF32 = InhibitionMatrix<f32>;
