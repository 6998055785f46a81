//! Scalar message computations shared by both update modes.
//!
//! Complex Gaussian density convention: `CN(x; m, v) = exp(-|x-m|^2 / v) / (pi v)`.
//! Every density ratio is formed in the log domain.

use crate::scalar::{abs2, Cplx, Real};

/// `ln CN(x; mean, var)`.
#[inline]
pub fn cn_log_density<T: Real>(x: Cplx<T>, mean: Cplx<T>, var: T) -> T {
    -abs2(x - mean) / var - (T::pi() * var).ln()
}

#[inline]
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn clamp_prob<T: Real>(p: T, eps: T) -> T {
    p.max(eps).min(T::one() - eps)
}

/// Posterior mean of the coefficient precision under its Gamma belief,
/// `(xi + 1) / (eta + |c|^2 + var)`, with the denominator floored.
#[inline]
pub fn gamma_posterior<T: Real>(c_hat: Cplx<T>, c_var: T, xi: T, eta: T, floor: T) -> T {
    (xi + T::one()) / (eta + abs2(c_hat) + c_var).max(floor)
}

/// Log-likelihood ratio `ln CN(t_ext; x_out, v_t + v_x) - ln CN(0; t_ext, v_t)`
/// between the visible and invisible hypotheses for one antenna.
#[inline]
pub fn visibility_llr<T: Real>(t_ext: Cplx<T>, t_var: T, x_out: Cplx<T>, x_var: T) -> T {
    let zero = Cplx::new(T::zero(), T::zero());
    cn_log_density(t_ext, x_out, t_var + x_var) - cn_log_density(zero, t_ext, t_var)
}

/// Evidence for `s_n = 1` carried by the t-factor.
#[inline]
pub fn pi_out<T: Real>(t_ext: Cplx<T>, t_var: T, x_out: Cplx<T>, x_var: T, eps: T) -> T {
    clamp_prob(logistic(visibility_llr(t_ext, t_var, x_out, x_var)), eps)
}

/// Moments of the spike-and-slab posterior of one `t_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeSlab<T> {
    pub mean: Cplx<T>,
    pub var: T,
    /// Posterior probability of the slab.
    pub omega: T,
    pub slab_mean: Cplx<T>,
    pub slab_var: T,
}

/// Combines the prior `(1 - pi) delta(t) + pi CN(t; x_out, x_var)` with the
/// Gaussian likelihood `CN(t; t_ext, t_var)`.
pub fn spike_slab_posterior<T: Real>(
    pi_in: T,
    x_out: Cplx<T>,
    x_var: T,
    t_ext: Cplx<T>,
    t_var: T,
) -> SpikeSlab<T> {
    let one = T::one();
    let slab_var = t_var * x_var / (t_var + x_var);
    let slab_mean = (t_ext / t_var + x_out / x_var) * slab_var;
    let omega = if pi_in <= T::zero() {
        T::zero()
    } else if pi_in >= one {
        one
    } else {
        logistic((pi_in / (one - pi_in)).ln() + visibility_llr(t_ext, t_var, x_out, x_var))
    };
    // second moment of the mixture minus the squared mean
    let var = omega * ((one - omega) * abs2(slab_mean) + slab_var);
    SpikeSlab {
        mean: slab_mean * omega,
        var,
        omega,
        slab_mean,
        slab_var,
    }
}
