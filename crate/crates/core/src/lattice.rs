//! Lattice geometry and inhibitory weight matrices.
//!
//! Excitatory neuron `i` sits at `(i % side, i / side)` on a square grid.
//! Inhibition between two neurons grows linearly with their Euclidean
//! distance and is capped:
//!
//! ```text
//! inhib(i, j) = min(c_inhib * dist(i, j), c_max)     i != j
//! inhib(i, i) = 0
//! ```
//!
//! Matrix entries are magnitudes; the network adds them to the inhibitory
//! conductance of the target neuron.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    side: usize,
}

impl Lattice {
    pub fn new(side: usize) -> Self {
        Lattice { side }
    }

    /// Lattice holding exactly `n` neurons; fails unless `n` is a perfect square.
    pub fn for_neurons(n: usize) -> Result<Self> {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n || n == 0 {
            return Err(Error::Input(format!(
                "n_neurons = {n} is not a positive perfect square; lattice needs side^2 neurons"
            )));
        }
        Ok(Lattice { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        self.side == 0
    }

    pub fn position(&self, i: usize) -> (usize, usize) {
        (i % self.side, i / self.side)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (xi, yi) = self.position(i);
        let (xj, yj) = self.position(j);
        let dx = xi as f64 - xj as f64;
        let dy = yi as f64 - yj as f64;
        (dx * dx + dy * dy).sqrt()
    }

    /// Largest distance between two lattice sites.
    pub fn max_distance(&self) -> f64 {
        let s = self.side.saturating_sub(1) as f64;
        (2.0 * s * s).sqrt()
    }
}

/// How lattice distance enters the inhibition profile.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceProfile {
    /// `c_inhib * d`
    #[default]
    Euclidean,
    /// `c_inhib * sqrt(d)`, the alternative reading of the inhibition profile.
    SqrtEuclidean,
}

/// Dense `n x n` inhibitory weight matrix, row = source neuron, column = target.
#[derive(Clone, Debug, PartialEq)]
pub struct InhibitionMatrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Scalar> InhibitionMatrix<F> {
    pub fn zeros(n: usize) -> Self {
        InhibitionMatrix {
            n,
            data: vec![F::zero(); n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, source: usize, target: usize) -> F {
        self.data[source * self.n + target]
    }

    pub fn row(&self, source: usize) -> &[F] {
        &self.data[source * self.n..(source + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    /// Adds the rows of the given source neurons into `out`.
    pub fn accumulate(&self, sources: &[u32], out: &mut [F]) {
        for &s in sources {
            for (o, w) in out.iter_mut().zip(self.row(s as usize)) {
                *o += *w;
            }
        }
    }
}

/// Distance-dependent inhibition, capped at `c_max`, zero on the diagonal.
pub fn pairwise_inhibition<F: Scalar>(lattice: &Lattice, c_inhib: f64, c_max: f64) -> InhibitionMatrix<F> {
    pairwise_inhibition_with(lattice, c_inhib, c_max, DistanceProfile::Euclidean)
}

pub fn pairwise_inhibition_with<F: Scalar>(
    lattice: &Lattice,
    c_inhib: f64,
    c_max: f64,
    profile: DistanceProfile,
) -> InhibitionMatrix<F> {
    let n = lattice.len();
    let mut m = InhibitionMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = lattice.distance(i, j);
            let d = match profile {
                DistanceProfile::Euclidean => d,
                DistanceProfile::SqrtEuclidean => d.sqrt(),
            };
            let raw = c_inhib * d;
            m.data[i * n + j] = F::of(if raw < c_max { raw } else { c_max });
        }
    }
    m
}

/// Uniform inhibition `level` between all distinct neurons (the non-topographic baseline).
pub fn constant_inhibition<F: Scalar>(n: usize, level: f64) -> InhibitionMatrix<F> {
    let mut m = InhibitionMatrix::zeros(n);
    let level = F::of(level);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m.data[i * n + j] = level;
            }
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Uniform inhibition `c_inhib` (no lattice profile).
    Constant,
    /// Distance profile with fixed `c_inhib`.
    Increasing,
    /// Distance profile whose scale grows linearly from `c_min` to `c_max` over `p_grow`.
    Growing,
    /// Distance profile at `c_min` until `p_low`, then `c_max`.
    TwoLevel,
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::Increasing => "increasing",
            ScheduleKind::Growing => "growing",
            ScheduleKind::TwoLevel => "two_level",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InhibitionSchedule {
    pub kind: ScheduleKind,
    pub c_inhib: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub p_low: f64,
    pub p_grow: f64,
    #[serde(default)]
    pub profile: DistanceProfile,
}

impl Default for InhibitionSchedule {
    fn default() -> Self {
        InhibitionSchedule {
            kind: ScheduleKind::TwoLevel,
            c_inhib: 1.0,
            c_min: 1.0,
            c_max: 20.0,
            p_low: 0.1,
            p_grow: 1.0,
            profile: DistanceProfile::Euclidean,
        }
    }
}

impl InhibitionSchedule {
    pub fn constant(level: f64) -> Self {
        InhibitionSchedule {
            kind: ScheduleKind::Constant,
            c_inhib: level,
            c_min: 0.0,
            c_max: level,
            ..Default::default()
        }
    }

    pub fn two_level(p_low: f64, c_min: f64, c_max: f64) -> Self {
        InhibitionSchedule {
            kind: ScheduleKind::TwoLevel,
            c_min,
            c_max,
            p_low,
            ..Default::default()
        }
    }

    pub fn growing(p_grow: f64, c_min: f64, c_max: f64) -> Self {
        InhibitionSchedule {
            kind: ScheduleKind::Growing,
            c_min,
            c_max,
            p_grow,
            ..Default::default()
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, x) in [("c_inhib", self.c_inhib), ("c_min", self.c_min), ("c_max", self.c_max)] {
            if !(x >= 0.0) || !x.is_finite() {
                out.push(format!("inhibition {name} must be finite and >= 0 (got {x})"));
            }
        }
        if !(self.c_min <= self.c_max) {
            out.push(format!(
                "inhibition c_min ({}) must not exceed c_max ({})",
                self.c_min, self.c_max
            ));
        }
        for (name, x) in [("p_low", self.p_low), ("p_grow", self.p_grow)] {
            if !(0.0..=1.0).contains(&x) {
                out.push(format!("inhibition {name} must lie in [0, 1] (got {x})"));
            }
        }
        out
    }

    /// Inhibition scale in force at training progress `progress` in `[0, 1]`.
    ///
    /// Growing with `p_grow = 0` jumps straight to `c_max`. For two-level the
    /// boundary `progress == p_low` already belongs to the high phase.
    pub fn effective_level(&self, progress: f64) -> f64 {
        let progress = progress.clamp(0.0, 1.0);
        match self.kind {
            ScheduleKind::Constant | ScheduleKind::Increasing => self.c_inhib,
            ScheduleKind::Growing => {
                let frac = if self.p_grow <= 0.0 {
                    1.0
                } else {
                    (progress / self.p_grow).min(1.0)
                };
                self.c_min + (self.c_max - self.c_min) * frac
            }
            ScheduleKind::TwoLevel => {
                if progress < self.p_low {
                    self.c_min
                } else {
                    self.c_max
                }
            }
        }
    }

    /// Two-level level keyed by an absolute example count instead of a fraction.
    pub fn level_at_example(&self, examples_seen: u64, low_examples: u64) -> f64 {
        if examples_seen < low_examples {
            self.c_min
        } else {
            self.c_max
        }
    }

    /// Inhibitory weights for the given scale.
    pub fn matrix<F: Scalar>(&self, lattice: &Lattice, level: f64) -> InhibitionMatrix<F> {
        match self.kind {
            ScheduleKind::Constant => constant_inhibition(lattice.len(), level),
            _ => pairwise_inhibition_with(lattice, level, self.c_max, self.profile),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let l = Lattice::new(5);
        // (0,0) -> index 0, (3,4) -> index 4*5+3
        let m: InhibitionMatrix<f64> = pairwise_inhibition(&l, 1.0, 17.5);
        assert_eq!(m.get(0, 23), 5.0);
        assert_eq!(m.get(23, 0), 5.0);
        assert_eq!(m.get(7, 7), 0.0);
    }

    #[test]
    fn cap_applies_beyond_c_max() {
        let l = Lattice::new(26);
        // (0,0) to (25,0) is distance 25.
        let m: InhibitionMatrix<f64> = pairwise_inhibition(&l, 1.0, 17.5);
        assert_eq!(m.get(0, 25), 17.5);
    }

    #[test]
    fn sqrt_profile() {
        let l = Lattice::new(5);
        let m: InhibitionMatrix<f64> =
            pairwise_inhibition_with(&l, 2.0, 100.0, DistanceProfile::SqrtEuclidean);
        assert!((m.get(0, 4) - 2.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_matrix() {
        let m: InhibitionMatrix<f64> = constant_inhibition(3, 20.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), if i == j { 0.0 } else { 20.0 });
            }
        }
        let z: InhibitionMatrix<f64> = constant_inhibition(3, 0.0);
        assert!(z.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_level_boundaries() {
        let s = InhibitionSchedule::two_level(0.1, 1.0, 20.0);
        assert_eq!(s.effective_level(0.05), 1.0);
        assert_eq!(s.effective_level(0.1), 20.0);
        assert_eq!(s.effective_level(0.9), 20.0);
        assert_eq!(s.level_at_example(5_999, 6_000), 1.0);
        assert_eq!(s.level_at_example(6_000, 6_000), 20.0);
    }

    #[test]
    fn growing_interpolates() {
        let s = InhibitionSchedule::growing(1.0, 0.1, 17.5);
        assert!((s.effective_level(0.5) - 8.8).abs() < 1e-12);
        let jump = InhibitionSchedule::growing(0.0, 0.1, 17.5);
        assert_eq!(jump.effective_level(0.0), 17.5);
        let half = InhibitionSchedule::growing(0.5, 0.0, 10.0);
        assert_eq!(half.effective_level(0.75), 10.0);
    }

    #[test]
    fn lattice_rejects_non_square() {
        assert!(Lattice::for_neurons(600).is_err());
        assert!(Lattice::for_neurons(0).is_err());
        assert_eq!(Lattice::for_neurons(625).unwrap().side(), 25);
    }

    #[test]
    fn schedule_validation() {
        let mut s = InhibitionSchedule::two_level(1.5, 3.0, 2.0);
        s.c_inhib = -1.0;
        assert_eq!(s.violations().len(), 3);
    }
}
