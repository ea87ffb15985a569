//! Conductance-based leaky integrate-and-fire populations.
//!
//! A [`NeuronGroup`] advances one fixed timestep at a time with forward Euler:
//!
//! ```text
//! tau_v dv/dt = (v_rest - v) + g_e (E_exc - v) + g_i (E_inh - v)
//! tau_g dg/dt = -g
//! ```
//!
//! Within a step the order is frozen as: conductances receive this step's
//! increments, conductances (and the adaptive threshold) decay by their exact
//! exponential factor, non-refractory neurons integrate the membrane equation
//! with the updated conductances, and neurons at or above threshold spike and
//! reset. A neuron that enters a step already at or above threshold spikes
//! without integrating.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Fixed parameters of a homogeneous LIF population. Potentials in mV, times in ms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifParams<F> {
    pub v_rest: F,
    pub v_reset: F,
    pub v_thresh_base: F,
    pub tau_v: F,
    pub e_exc: F,
    pub e_inh: F,
    pub tau_ge: F,
    pub tau_gi: F,
    pub refractory: F,
    pub theta_plus: F,
    pub tau_theta: F,
    pub theta_enabled: bool,
}

impl LifParams<f64> {
    /// Excitatory population with an adaptive threshold.
    pub fn excitatory() -> Self {
        LifParams {
            v_rest: -65.0,
            v_reset: -65.0,
            v_thresh_base: -52.0,
            tau_v: 100.0,
            e_exc: 0.0,
            e_inh: -100.0,
            tau_ge: 1.0,
            tau_gi: 2.0,
            refractory: 5.0,
            theta_plus: 0.05,
            tau_theta: 1e7,
            theta_enabled: true,
        }
    }

    /// Inhibitory relay population (three-layer architecture only).
    pub fn inhibitory() -> Self {
        LifParams {
            v_rest: -60.0,
            v_reset: -45.0,
            v_thresh_base: -40.0,
            tau_v: 10.0,
            e_exc: 0.0,
            e_inh: -85.0,
            tau_ge: 1.0,
            tau_gi: 2.0,
            refractory: 2.0,
            theta_plus: 0.0,
            tau_theta: 1e7,
            theta_enabled: false,
        }
    }
}

impl<F: Scalar> LifParams<F> {
    pub fn cast<G: Scalar>(&self) -> LifParams<G> {
        let c = |x: F| G::of(x.to_f64_lossy());
        LifParams {
            v_rest: c(self.v_rest),
            v_reset: c(self.v_reset),
            v_thresh_base: c(self.v_thresh_base),
            tau_v: c(self.tau_v),
            e_exc: c(self.e_exc),
            e_inh: c(self.e_inh),
            tau_ge: c(self.tau_ge),
            tau_gi: c(self.tau_gi),
            refractory: c(self.refractory),
            theta_plus: c(self.theta_plus),
            tau_theta: c(self.tau_theta),
            theta_enabled: self.theta_enabled,
        }
    }

    /// Returns every violated constraint, empty when the parameters are usable.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let zero = F::zero();
        for (name, tau) in [
            ("tau_v", self.tau_v),
            ("tau_ge", self.tau_ge),
            ("tau_gi", self.tau_gi),
            ("tau_theta", self.tau_theta),
        ] {
            if !(tau > zero) {
                out.push(format!("{name} must be > 0 (got {tau})"));
            }
        }
        if !(self.refractory >= zero) {
            out.push(format!("refractory must be >= 0 (got {})", self.refractory));
        }
        if !(self.theta_plus >= zero) {
            out.push(format!("theta_plus must be >= 0 (got {})", self.theta_plus));
        }
        if !(self.v_reset <= self.v_thresh_base) {
            out.push(format!(
                "v_reset ({}) must not exceed v_thresh_base ({})",
                self.v_reset, self.v_thresh_base
            ));
        }
        for (name, x) in [
            ("v_rest", self.v_rest),
            ("e_exc", self.e_exc),
            ("e_inh", self.e_inh),
        ] {
            if !x.is_finite() {
                out.push(format!("{name} must be finite"));
            }
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
}

/// Dynamic state of `n` neurons sharing one [`LifParams`].
#[derive(Clone, Debug)]
pub struct NeuronGroup<F> {
    params: LifParams<F>,
    pub v: Vec<F>,
    pub g_e: Vec<F>,
    pub g_i: Vec<F>,
    pub theta: Vec<F>,
    pub refrac_remaining: Vec<F>,
    pub spiked: Vec<bool>,
    /// When false the adaptive threshold neither grows nor decays (evaluation phases).
    adapt_threshold: bool,
}

impl<F: Scalar> NeuronGroup<F> {
    pub fn new(n: usize, params: LifParams<F>) -> Result<Self> {
        params.validate()?;
        Ok(NeuronGroup {
            params,
            v: vec![params.v_rest; n],
            g_e: vec![F::zero(); n],
            g_i: vec![F::zero(); n],
            theta: vec![F::zero(); n],
            refrac_remaining: vec![F::zero(); n],
            spiked: vec![false; n],
            adapt_threshold: true,
        })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn params(&self) -> &LifParams<F> {
        &self.params
    }

    /// Enables or freezes threshold adaptation. Frozen thresholds keep their values.
    pub fn set_adapt_threshold(&mut self, on: bool) {
        self.adapt_threshold = on;
    }

    pub fn adapt_threshold(&self) -> bool {
        self.adapt_threshold
    }

    fn theta_active(&self) -> bool {
        self.params.theta_enabled && self.adapt_threshold
    }

    /// Advances the group by `dt` ms. Returns the spike flags of this step.
    pub fn step(&mut self, dt: F, exc_input: &[F], inh_input: &[F]) -> Result<&[bool]> {
        let n = self.len();
        check_len("excitatory input", exc_input.len(), n)?;
        check_len("inhibitory input", inh_input.len(), n)?;
        if !(dt > F::zero()) {
            return Err(Error::Input(format!("dt must be > 0 (got {dt})")));
        }
        let p = self.params;
        let decay_ge = (-dt / p.tau_ge).exp();
        let decay_gi = (-dt / p.tau_gi).exp();
        let theta_active = self.theta_active();
        let decay_theta = (-dt / p.tau_theta).exp();
        let k = dt / p.tau_v;
        // Refractory counters below this are treated as expired (absorbs dt rounding).
        let eps = dt * F::of(1e-9);

        for i in 0..n {
            let ge = (self.g_e[i] + exc_input[i]) * decay_ge;
            let gi = (self.g_i[i] + inh_input[i]) * decay_gi;
            self.g_e[i] = ge;
            self.g_i[i] = gi;
            if theta_active {
                self.theta[i] *= decay_theta;
            }
            self.spiked[i] = false;

            let r = self.refrac_remaining[i];
            if r > F::zero() {
                let left = r - dt;
                self.refrac_remaining[i] = if left <= eps { F::zero() } else { left };
                continue;
            }

            let threshold = p.v_thresh_base + self.theta[i];
            let mut v = self.v[i];
            if v < threshold {
                v += k * ((p.v_rest - v) + ge * (p.e_exc - v) + gi * (p.e_inh - v));
            }
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "membrane potential of neuron {i} became {v} (g_e={ge}, g_i={gi})"
                )));
            }
            if v >= threshold {
                self.spiked[i] = true;
                v = p.v_reset;
                self.refrac_remaining[i] = p.refractory;
                if theta_active {
                    self.theta[i] += p.theta_plus;
                }
            }
            self.v[i] = v;
        }
        if !self.g_e.iter().chain(self.g_i.iter()).all(|g| g.is_finite()) {
            return Err(Error::Numerical("conductance became non-finite".into()));
        }
        Ok(&self.spiked)
    }

    /// Clears dynamic state between examples. `theta` is learned and is kept.
    pub fn reset_state(&mut self) {
        let v_rest = self.params.v_rest;
        self.v.iter_mut().for_each(|v| *v = v_rest);
        self.g_e.iter_mut().for_each(|g| *g = F::zero());
        self.g_i.iter_mut().for_each(|g| *g = F::zero());
        self.refrac_remaining.iter_mut().for_each(|r| *r = F::zero());
        self.spiked.iter_mut().for_each(|s| *s = false);
    }

    /// Applies `elapsed` ms of threshold decay in closed form (used for rest periods).
    pub fn decay_theta_for(&mut self, elapsed: F) {
        if self.theta_active() {
            let f = (-elapsed / self.params.tau_theta).exp();
            self.theta.iter_mut().for_each(|t| *t *= f);
        }
    }
}
