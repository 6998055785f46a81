//! Visibility layer: per-antenna support indicators coupled by a two-state
//! Markov chain.

use nalgebra::DVector;

use super::messages::{clamp_prob, pi_out, spike_slab_posterior};
use super::XMessage;
use crate::markov::{forward_backward, pi_in, visibility_belief, MarkovPrior};
use crate::scalar::{abs2, Cplx, Real};

/// How the support prior fed to the measurement layer is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer2Control<T: Real> {
    /// Forward-backward over the Markov chain every iteration.
    Adaptive,
    /// `pi_in` held at the given values and never updated.
    Frozen(DVector<T>),
}

#[derive(Debug, Clone)]
pub struct Layer2State<T: Real> {
    pub pi_out: DVector<T>,
    pub pi_in: DVector<T>,
    pub psi_f: DVector<T>,
    pub psi_b: DVector<T>,
    pub s_belief: DVector<T>,
    /// Prior probability of the first chain state, refreshed from the beliefs.
    pub psi_f0: T,
    pub x_in_mean: DVector<Cplx<T>>,
    pub x_in_var: DVector<T>,
}

impl<T: Real> Layer2State<T> {
    pub(crate) fn new(
        n: usize,
        phi_init: T,
        control: &Layer2Control<T>,
        eps: T,
        init_var: T,
    ) -> Self {
        let half = T::lit(0.5);
        let pi_in0 = match control {
            Layer2Control::Adaptive => DVector::from_element(n, clamp_prob(phi_init, eps)),
            Layer2Control::Frozen(v) => v.map(|p| clamp_prob(p, eps)),
        };
        Self {
            pi_out: DVector::from_element(n, half),
            s_belief: pi_in0.clone(),
            pi_in: pi_in0,
            psi_f: DVector::from_element(n, phi_init),
            psi_b: DVector::from_element(n, half),
            psi_f0: phi_init,
            x_in_mean: DVector::from_element(n, Cplx::new(T::zero(), T::zero())),
            x_in_var: DVector::from_element(n, init_var),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn update(
        &mut self,
        t_ext_mean: &DVector<Cplx<T>>,
        t_ext_var: &DVector<T>,
        x_out_mean: &DVector<Cplx<T>>,
        x_out_var: &DVector<T>,
        prior: &MarkovPrior<T>,
        control: &Layer2Control<T>,
        eps: T,
        x_message: XMessage,
        x_cap: T,
    ) {
        let n = self.pi_out.len();
        for i in 0..n {
            self.pi_out[i] = pi_out(
                t_ext_mean[i],
                t_ext_var[i],
                x_out_mean[i],
                x_out_var[i],
                eps,
            );
        }
        match control {
            Layer2Control::Adaptive => {
                let msgs = forward_backward(self.pi_out.as_slice(), prior, self.psi_f0);
                for i in 0..n {
                    let f = clamp_prob(msgs.forward[i], eps);
                    let b = clamp_prob(msgs.backward[i], eps);
                    self.psi_f[i] = f;
                    self.psi_b[i] = b;
                    self.pi_in[i] = clamp_prob(pi_in(f, b), eps);
                    self.s_belief[i] = clamp_prob(visibility_belief(f, b, self.pi_out[i]), eps);
                }
                let mean = self.s_belief.sum() / T::from_usize(n.max(1)).unwrap();
                self.psi_f0 = clamp_prob(mean, eps);
            }
            Layer2Control::Frozen(_) => {
                let one = T::one();
                for i in 0..n {
                    let a = self.pi_in[i] * self.pi_out[i];
                    let b = a / (a + (one - self.pi_in[i]) * (one - self.pi_out[i]));
                    self.s_belief[i] = clamp_prob(b, eps);
                }
            }
        }
        match x_message {
            XMessage::Direct => {
                self.x_in_mean.copy_from(t_ext_mean);
                self.x_in_var.copy_from(t_ext_var);
            }
            XMessage::Projected => {
                for i in 0..n {
                    let (m, v) = project_x(
                        self.pi_in[i],
                        x_cap,
                        t_ext_mean[i],
                        t_ext_var[i],
                        x_out_mean[i],
                        x_out_var[i],
                    );
                    self.x_in_mean[i] = m;
                    self.x_in_var[i] = v;
                }
            }
        }
    }
}

/// Gaussian projection of the message into `x_n` when `t_n = s_n x_n` and
/// `s_n ~ Bernoulli(pi_in)`: the posterior of `x_n` is moment-matched and the
/// prior `(x_out, x_var)` divided back out. The result is never wider than
/// `cap * t_var`.
fn project_x<T: Real>(
    pi_in: T,
    cap: T,
    t_ext: Cplx<T>,
    t_var: T,
    x_out: Cplx<T>,
    x_var: T,
) -> (Cplx<T>, T) {
    let one = T::one();
    let s = spike_slab_posterior(pi_in, x_out, x_var, t_ext, t_var);
    let w = s.omega;
    let delta = s.slab_mean - x_out;
    let var = w * s.slab_var + (one - w) * x_var + w * (one - w) * abs2(delta);
    // an antenna that is surely invisible says nothing about x_n
    let min_prec = T::one() / (cap * t_var);
    let prec = (one / var - one / x_var).max(min_prec);
    let v = one / prec;
    let m = x_out + delta * (w / var * v);
    (m, v)
}
