//! Dense synaptic connections with online STDP.
//!
//! Traces are kept per neuron: one `x_pre` entry per presynaptic neuron and
//! one `x_post` entry per postsynaptic neuron. Each step the traces decay by
//! `exp(-dt / tau_trace)` and are then set to exactly 1 where a spike occurred.
//! The weight rule is the soft-bounded pair
//!
//! ```text
//! on post spike j:  w_ij += eta_post * x_pre_i  * (w_max - w_ij)
//! on pre spike i:   w_ij -= eta_pre  * x_post_j * w_ij
//! ```
//!
//! with the post rule applied before the pre rule when both fire in one step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdpParams<F> {
    pub eta_pre: F,
    pub eta_post: F,
    pub w_max: F,
    pub tau_trace: F,
}

impl Default for StdpParams<f64> {
    fn default() -> Self {
        StdpParams {
            eta_pre: 1e-4,
            eta_post: 1e-2,
            w_max: 1.0,
            tau_trace: 20.0,
        }
    }
}

impl<F: Scalar> StdpParams<F> {
    pub fn cast<G: Scalar>(&self) -> StdpParams<G> {
        StdpParams {
            eta_pre: G::of(self.eta_pre.to_f64_lossy()),
            eta_post: G::of(self.eta_post.to_f64_lossy()),
            w_max: G::of(self.w_max.to_f64_lossy()),
            tau_trace: G::of(self.tau_trace.to_f64_lossy()),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eta_pre >= F::zero()) {
            out.push(format!("eta_pre must be >= 0 (got {})", self.eta_pre));
        }
        if !(self.eta_post >= F::zero()) {
            out.push(format!("eta_post must be >= 0 (got {})", self.eta_post));
        }
        if !(self.w_max > F::zero()) {
            out.push(format!("w_max must be > 0 (got {})", self.w_max));
        }
        if !(self.tau_trace > F::zero()) {
            out.push(format!("tau_trace must be > 0 (got {})", self.tau_trace));
        }
        out
    }
}

/// All-to-all (optionally masked) weights from `n_pre` to `n_post` neurons, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Connection<F> {
    n_pre: usize,
    n_post: usize,
    w: Vec<F>,
    pub x_pre: Vec<F>,
    pub x_post: Vec<F>,
    mask: Option<Vec<bool>>,
    stdp: Option<StdpParams<F>>,
    c_norm: Option<F>,
}

impl<F: Scalar> Connection<F> {
    pub fn new(n_pre: usize, n_post: usize) -> Self {
        Connection {
            n_pre,
            n_post,
            w: vec![F::zero(); n_pre * n_post],
            x_pre: vec![F::zero(); n_pre],
            x_post: vec![F::zero(); n_post],
            mask: None,
            stdp: None,
            c_norm: None,
        }
    }

    pub fn from_weights(n_pre: usize, n_post: usize, w: Vec<F>) -> Result<Self> {
        check_len("weight matrix", w.len(), n_pre * n_post)?;
        if let Some(bad) = w.iter().find(|x| !(**x >= F::zero()) || !x.is_finite()) {
            return Err(Error::Input(format!("weights must be finite and >= 0, found {bad}")));
        }
        let mut c = Connection::new(n_pre, n_post);
        c.w = w;
        Ok(c)
    }

    /// Weights drawn uniformly from `[0, scale)`.
    pub fn random<R: Rng + ?Sized>(n_pre: usize, n_post: usize, scale: F, rng: &mut R) -> Self {
        let mut c = Connection::new(n_pre, n_post);
        for w in &mut c.w {
            *w = scale * F::of(rng.random::<f64>());
        }
        c
    }

    pub fn n_pre(&self) -> usize {
        self.n_pre
    }

    pub fn n_post(&self) -> usize {
        self.n_post
    }

    pub fn weights(&self) -> &[F] {
        &self.w
    }

    #[inline]
    pub fn weight(&self, pre: usize, post: usize) -> F {
        self.w[pre * self.n_post + post]
    }

    /// Incoming weights of postsynaptic neuron `post` (its filter).
    pub fn column(&self, post: usize) -> Vec<F> {
        (0..self.n_pre).map(|i| self.weight(i, post)).collect()
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    #[inline]
    fn exists(&self, idx: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[idx])
    }

    /// Installs a synapse mask (`true` = synapse exists) and zeroes removed synapses.
    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        check_len("synapse mask", mask.len(), self.n_pre * self.n_post)?;
        for (w, keep) in self.w.iter_mut().zip(&mask) {
            if !keep {
                *w = F::zero();
            }
        }
        self.mask = Some(mask);
        Ok(())
    }

    /// Replaces the whole weight matrix; entries of removed synapses are forced to 0.
    pub fn set_weights(&mut self, w: Vec<F>) -> Result<()> {
        check_len("weight matrix", w.len(), self.n_pre * self.n_post)?;
        if let Some(bad) = w.iter().find(|x| !(**x >= F::zero()) || !x.is_finite()) {
            return Err(Error::Input(format!("weights must be finite and >= 0, found {bad}")));
        }
        self.w = w;
        if let Some(mask) = &self.mask {
            for (w, keep) in self.w.iter_mut().zip(mask) {
                if !keep {
                    *w = F::zero();
                }
            }
        }
        Ok(())
    }

    /// Overwrites one weight; ignored for synapses removed by the mask.
    pub fn set_weight(&mut self, pre: usize, post: usize, value: F) {
        let idx = pre * self.n_post + post;
        if self.exists(idx) {
            self.w[idx] = value;
        }
    }

    pub fn stdp(&self) -> Option<&StdpParams<F>> {
        self.stdp.as_ref()
    }

    pub fn set_stdp(&mut self, stdp: Option<StdpParams<F>>) {
        self.stdp = stdp;
    }

    pub fn c_norm(&self) -> Option<F> {
        self.c_norm
    }

    pub fn set_c_norm(&mut self, c_norm: Option<F>) {
        self.c_norm = c_norm;
    }

    /// Adds the weight rows of the active presynaptic neurons into `out` (length `n_post`).
    pub fn accumulate(&self, active_pre: &[u32], out: &mut [F]) {
        debug_assert_eq!(out.len(), self.n_post);
        for &i in active_pre {
            let row = &self.w[i as usize * self.n_post..(i as usize + 1) * self.n_post];
            for (o, w) in out.iter_mut().zip(row) {
                *o += *w;
            }
        }
    }

    /// Decays both traces by `exp(-dt / tau_trace)`, then sets spiking entries to 1.
    pub fn update_traces(&mut self, dt: F, pre_spikes: &[bool], post_spikes: &[bool]) -> Result<()> {
        check_len("presynaptic spikes", pre_spikes.len(), self.n_pre)?;
        check_len("postsynaptic spikes", post_spikes.len(), self.n_post)?;
        let decay = self.trace_decay(dt)?;
        let pre = indices(pre_spikes);
        let post = indices(post_spikes);
        self.update_traces_indexed(decay, &pre, &post);
        Ok(())
    }

    pub(crate) fn trace_decay(&self, dt: F) -> Result<F> {
        let tau = self
            .stdp
            .as_ref()
            .map(|s| s.tau_trace)
            .ok_or_else(|| Error::Contract("trace update requires STDP parameters".into()))?;
        Ok((-dt / tau).exp())
    }

    pub(crate) fn update_traces_indexed(&mut self, decay: F, pre: &[u32], post: &[u32]) {
        self.x_pre.iter_mut().for_each(|x| *x *= decay);
        self.x_post.iter_mut().for_each(|x| *x *= decay);
        for &i in pre {
            self.x_pre[i as usize] = F::one();
        }
        for &j in post {
            self.x_post[j as usize] = F::one();
        }
    }

    /// Scales both traces by `factor` (closed-form decay over a rest period).
    pub fn scale_traces(&mut self, factor: F) {
        self.x_pre.iter_mut().for_each(|x| *x *= factor);
        self.x_post.iter_mut().for_each(|x| *x *= factor);
    }

    /// Applies the STDP rule for this step's spikes. Traces must already be updated.
    pub fn stdp_step(&mut self, pre_spikes: &[bool], post_spikes: &[bool]) -> Result<()> {
        check_len("presynaptic spikes", pre_spikes.len(), self.n_pre)?;
        check_len("postsynaptic spikes", post_spikes.len(), self.n_post)?;
        self.stdp_step_indexed(&indices(pre_spikes), &indices(post_spikes))
    }

    pub(crate) fn stdp_step_indexed(&mut self, pre: &[u32], post: &[u32]) -> Result<()> {
        let s = *self
            .stdp
            .as_ref()
            .ok_or_else(|| Error::Contract("stdp_step called on a connection without STDP".into()))?;
        let n_post = self.n_post;
        let zero = F::zero();
        for &j in post {
            let j = j as usize;
            for i in 0..self.n_pre {
                let idx = i * n_post + j;
                if !self.exists(idx) {
                    continue;
                }
                let w = self.w[idx];
                let nw = w + s.eta_post * self.x_pre[i] * (s.w_max - w);
                self.w[idx] = nw.max(zero).min(s.w_max.max(w));
            }
        }
        // Removed synapses hold w = 0, so the multiplicative depression leaves them at 0.
        for &i in pre {
            let row = &mut self.w[i as usize * n_post..(i as usize + 1) * n_post];
            for (w, xp) in row.iter_mut().zip(&self.x_post) {
                let nw = *w - s.eta_pre * *xp * *w;
                *w = nw.max(zero);
            }
        }
        Ok(())
    }

    /// Rescales each column's existing synapses so they sum to `c_norm`.
    /// Columns summing to zero are left untouched; a connection without `c_norm` is unchanged.
    pub fn normalize_incoming(&mut self) {
        let Some(target) = self.c_norm else {
            return;
        };
        let n_post = self.n_post;
        let mut sums = vec![F::zero(); n_post];
        for row in self.w.chunks_exact(n_post) {
            for (s, w) in sums.iter_mut().zip(row) {
                *s += *w;
            }
        }
        let factors: Vec<F> = sums
            .iter()
            .map(|&s| if s > F::zero() { target / s } else { F::one() })
            .collect();
        for row in self.w.chunks_exact_mut(n_post) {
            for (w, f) in row.iter_mut().zip(&factors) {
                *w *= *f;
            }
        }
    }

    pub fn reset_traces(&mut self) {
        self.x_pre.iter_mut().for_each(|x| *x = F::zero());
        self.x_post.iter_mut().for_each(|x| *x = F::zero());
    }

    pub fn cast<G: Scalar>(&self) -> Connection<G> {
        let c = |v: &[F]| v.iter().map(|x| G::of(x.to_f64_lossy())).collect::<Vec<G>>();
        Connection {
            n_pre: self.n_pre,
            n_post: self.n_post,
            w: c(&self.w),
            x_pre: c(&self.x_pre),
            x_post: c(&self.x_post),
            mask: self.mask.clone(),
            stdp: self.stdp.map(|s| s.cast()),
            c_norm: self.c_norm.map(|x| G::of(x.to_f64_lossy())),
        }
    }
}

fn indices(flags: &[bool]) -> Vec<u32> {
    flags
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i as u32))
        .collect()
}
