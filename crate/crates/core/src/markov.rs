//! Two-state Markov chain over antenna visibility indicators.
//!
//! State `1` means the path is visible at that antenna. The chain is
//! parameterised by its stationary ones-probability `phi` and the
//! `1 -> 0` transition probability `p10`; the remaining transitions follow
//! from stationarity. Forward/backward messages are normalised probabilities
//! of state `1`, so every recursion is a ratio of two small sums and stays
//! inside `(0, 1)` without rescaling.

use crate::error::{invalid, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovPrior<T> {
    /// Stationary probability of state 1.
    pub phi: T,
    /// P(s_n = 0 | s_{n-1} = 1).
    pub p10: T,
    /// P(s_n = 1 | s_{n-1} = 0).
    pub p01: T,
    /// P(s_n = 0 | s_{n-1} = 0).
    pub p00: T,
    /// P(s_n = 1 | s_{n-1} = 1).
    pub p11: T,
}

impl<T: Real> MarkovPrior<T> {
    pub fn new(phi: T, p10: T) -> Result<Self> {
        if !(phi > T::zero() && phi < T::one()) {
            return invalid(format!(
                "markov phi must lie in (0,1), got {}",
                phi.as_f64()
            ));
        }
        if !(p10 > T::zero() && p10 < T::one()) {
            return invalid(format!(
                "markov p10 must lie in (0,1), got {}",
                p10.as_f64()
            ));
        }
        let p01 = phi * p10 / (T::one() - phi);
        if p01 >= T::one() {
            return invalid(format!(
                "phi={} with p10={} gives p01 >= 1",
                phi.as_f64(),
                p10.as_f64()
            ));
        }
        Ok(Self {
            phi,
            p10,
            p01,
            p00: T::one() - p01,
            p11: T::one() - p10,
        })
    }

    /// Probability of reaching state 1 after one step from a state-1 probability `prev`.
    pub fn predict(&self, prev: T) -> T {
        self.p01 * (T::one() - prev) + self.p11 * prev
    }
}

/// Forward and backward chain messages, each the probability of `s_n = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMessages<T> {
    pub forward: Vec<T>,
    pub backward: Vec<T>,
}

/// Runs the forward and backward recursions given per-antenna likelihood
/// messages `pi_out[n]` (the normalised evidence for `s_n = 1`).
///
/// `psi_f0` is the prior probability of the first state, and the last
/// backward message is fixed at 1/2.
pub fn forward_backward<T: Real>(
    pi_out: &[T],
    prior: &MarkovPrior<T>,
    psi_f0: T,
) -> ChainMessages<T> {
    let n = pi_out.len();
    let one = T::one();
    let half = T::lit(0.5);
    let mut forward = vec![T::zero(); n];
    let mut backward = vec![T::zero(); n];
    if n == 0 {
        return ChainMessages { forward, backward };
    }
    forward[0] = psi_f0;
    for i in 1..n {
        let f = forward[i - 1];
        let p = pi_out[i - 1];
        let w0 = (one - f) * (one - p);
        let w1 = f * p;
        forward[i] = (prior.p01 * w0 + prior.p11 * w1) / (w0 + w1);
    }
    // p_0 = p10 + p00 and p_1 = p11 + p01 normalise the two unnormalised
    // backward likelihoods against each other.
    let p0 = prior.p10 + prior.p00;
    let p1 = prior.p11 + prior.p01;
    backward[n - 1] = half;
    for i in (0..n - 1).rev() {
        let b = backward[i + 1];
        let p = pi_out[i + 1];
        let w0 = (one - b) * (one - p);
        let w1 = b * p;
        backward[i] = (prior.p10 * w0 + prior.p11 * w1) / (p0 * w0 + p1 * w1);
    }
    ChainMessages { forward, backward }
}

/// Prior-from-neighbours message into the t-factor: combines forward and backward.
pub fn pi_in<T: Real>(psi_f: T, psi_b: T) -> T {
    let one = T::one();
    let a = psi_f * psi_b;
    a / (a + (one - psi_f) * (one - psi_b))
}

/// Posterior belief of `s_n = 1`.
pub fn visibility_belief<T: Real>(psi_f: T, psi_b: T, pi_out: T) -> T {
    let one = T::one();
    let a = psi_f * psi_b * pi_out;
    a / (a + (one - psi_f) * (one - psi_b) * (one - pi_out))
}
