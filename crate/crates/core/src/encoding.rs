//! Poisson rate coding of grayscale images.
//!
//! Each pixel fires independently in each step with probability
//! `intensity * max_rate * dt / 1000`. Spike times are drawn as geometric
//! gaps between successes, which is exactly the per-step Bernoulli process
//! but costs one random draw per spike instead of one per pixel per step.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// Rate for a full-intensity pixel, Hz.
    pub max_rate_hz: f64,
    /// Presentation window, ms.
    pub duration_ms: f64,
    pub dt_ms: f64,
    pub rng_seed: u64,
}

impl Default for EncoderParams {
    fn default() -> Self {
        EncoderParams {
            max_rate_hz: 63.75,
            duration_ms: 350.0,
            dt_ms: 0.5,
            rng_seed: 0,
        }
    }
}

impl EncoderParams {
    /// Spike probability per step of a full-intensity pixel.
    pub fn max_step_probability(&self) -> f64 {
        self.max_rate_hz * self.dt_ms / 1000.0
    }

    pub fn steps(&self) -> usize {
        (self.duration_ms / self.dt_ms + 1e-9).floor() as usize
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.max_rate_hz >= 0.0) || !self.max_rate_hz.is_finite() {
            out.push(format!("max_rate_hz must be finite and >= 0 (got {})", self.max_rate_hz));
        }
        if !(self.duration_ms > 0.0) {
            out.push(format!("duration_ms must be > 0 (got {})", self.duration_ms));
        }
        if !(self.dt_ms > 0.0) {
            out.push(format!("dt_ms must be > 0 (got {})", self.dt_ms));
        }
        if !(self.max_step_probability() < 1.0) {
            out.push(format!(
                "max_rate_hz * dt_ms / 1000 must be < 1 (got {})",
                self.max_step_probability()
            ));
        }
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

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Spike raster of an input layer, stored as the sorted list of active inputs per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeTrain {
    n_inputs: usize,
    steps: Vec<Vec<u32>>,
}

impl SpikeTrain {
    pub fn silent(n_inputs: usize, steps: usize) -> Self {
        SpikeTrain {
            n_inputs,
            steps: vec![Vec::new(); steps],
        }
    }

    /// Builds a train from a dense `steps x n_inputs` boolean raster.
    pub fn from_dense(rows: &[Vec<bool>]) -> Result<Self> {
        let n_inputs = rows.first().map_or(0, Vec::len);
        let mut steps = Vec::with_capacity(rows.len());
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n_inputs {
                return Err(Error::Shape(format!(
                    "spike raster row {t} has {} columns, expected {n_inputs}",
                    row.len()
                )));
            }
            steps.push(
                row.iter()
                    .enumerate()
                    .filter_map(|(i, &s)| s.then_some(i as u32))
                    .collect(),
            );
        }
        Ok(SpikeTrain { n_inputs, steps })
    }

    pub fn from_active(n_inputs: usize, mut steps: Vec<Vec<u32>>) -> Result<Self> {
        for (t, step) in steps.iter_mut().enumerate() {
            step.sort_unstable();
            step.dedup();
            if let Some(&bad) = step.iter().find(|&&i| i as usize >= n_inputs) {
                return Err(Error::Shape(format!(
                    "input {bad} at step {t} out of range for {n_inputs} inputs"
                )));
            }
        }
        Ok(SpikeTrain { n_inputs, steps })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Inputs that fire at step `t`, ascending.
    pub fn active(&self, t: usize) -> &[u32] {
        &self.steps[t]
    }

    pub fn is_spike(&self, t: usize, input: usize) -> bool {
        self.steps[t].binary_search(&(input as u32)).is_ok()
    }

    pub fn total_spikes(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    /// Per-input spike counts.
    pub fn counts(&self) -> Vec<u32> {
        let mut c = vec![0u32; self.n_inputs];
        for step in &self.steps {
            for &i in step {
                c[i as usize] += 1;
            }
        }
        c
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        self.steps
            .iter()
            .map(|s| {
                let mut row = vec![false; self.n_inputs];
                for &i in s {
                    row[i as usize] = true;
                }
                row
            })
            .collect()
    }
}

/// Encodes `image` (intensities in `[0, 1]`) using the seed in `params`.
pub fn encode(image: &[f64], params: &EncoderParams) -> Result<SpikeTrain> {
    let mut rng = StreamRng::seed_from_u64(params.rng_seed);
    encode_with(image, params, &mut rng)
}

pub fn encode_with<R: Rng + ?Sized>(image: &[f64], params: &EncoderParams, rng: &mut R) -> Result<SpikeTrain> {
    params.validate()?;
    if let Some((i, x)) = image.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Input(format!("pixel {i} has intensity {x}, outside [0, 1]")));
    }
    let n_steps = params.steps();
    let mut steps: Vec<Vec<u32>> = vec![Vec::new(); n_steps];
    let p_max = params.max_step_probability();
    for (pixel, &x) in image.iter().enumerate() {
        let p = x * p_max;
        if p <= 0.0 {
            continue;
        }
        let log_q = (-p).ln_1p();
        let mut t = 0usize;
        loop {
            // u in (0, 1]; gap = number of failures before the next success.
            let u = 1.0 - rng.random::<f64>();
            let gap = (u.ln() / log_q).floor();
            if !(gap < (n_steps - t) as f64) {
                break;
            }
            t += gap as usize;
            steps[t].push(pixel as u32);
            t += 1;
            if t >= n_steps {
                break;
            }
        }
    }
    Ok(SpikeTrain {
        n_inputs: image.len(),
        steps,
    })
}

/// Raises the full-intensity rate by `boost_hz`, used when an example drives too few output spikes.
pub fn boost_rates(params: &EncoderParams, boost_hz: f64) -> Result<EncoderParams> {
    if !(boost_hz >= 0.0) {
        return Err(Error::Input(format!("rate boost must be >= 0 (got {boost_hz})")));
    }
    let boosted = EncoderParams {
        max_rate_hz: params.max_rate_hz + boost_hz,
        ..*params
    };
    if !(boosted.max_step_probability() < 1.0) {
        return Err(Error::Input(format!(
            "boosted rate {} Hz gives per-step spike probability {} >= 1",
            boosted.max_rate_hz,
            boosted.max_step_probability()
        )));
    }
    Ok(boosted)
}
