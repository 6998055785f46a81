//! Measurement layer: linear mixing `z = A t`, Gaussian likelihood with
//! unknown noise precision, and the spike-and-slab posterior of `t`.

use nalgebra::{DMatrix, DVector};

use super::messages::spike_slab_posterior;
use super::{EdgeMessages, Params, UpdateMode};
use crate::scalar::{abs2, Cplx, Real};

#[derive(Debug, Clone)]
pub struct Layer3State<T: Real> {
    pub t_hat: DVector<Cplx<T>>,
    pub t_var: DVector<T>,
    /// Likelihood message on `t` handed to the visibility layer.
    pub t_ext_mean: DVector<Cplx<T>>,
    pub t_ext_var: DVector<T>,
    pub z_ext_mean: DVector<Cplx<T>>,
    pub z_ext_var: DVector<T>,
    pub z_hat: DVector<Cplx<T>>,
    pub z_var: DVector<T>,
    pub beta_hat: T,
    /// Slab probability of each `t_n`.
    pub omega: DVector<T>,
    residual: DVector<Cplx<T>>,
    edges: Option<EdgeMessages<T>>,
}

impl<T: Real> Layer3State<T> {
    pub(crate) fn new(
        r: &DVector<Cplx<T>>,
        n: usize,
        mode: UpdateMode,
        init_var: T,
        beta_init: Option<T>,
        var_floor: T,
    ) -> Self {
        let m = r.len();
        let zero = Cplx::new(T::zero(), T::zero());
        let energy: T = r.iter().fold(T::zero(), |acc, z| acc + abs2(*z));
        let beta_hat =
            beta_init.unwrap_or_else(|| T::from_usize(m).unwrap() / energy.max(var_floor));
        let edges = match mode {
            UpdateMode::VectorizedApprox => None,
            UpdateMode::EdgeExact => Some(EdgeMessages::new(
                m,
                n,
                T::one() / (T::from_usize(m).unwrap() * init_var),
            )),
        };
        Self {
            t_hat: DVector::from_element(n, zero),
            t_var: DVector::from_element(n, init_var),
            t_ext_mean: DVector::from_element(n, zero),
            t_ext_var: DVector::from_element(n, init_var),
            // starting from z_ext = r makes the first Onsager correction vanish
            z_ext_mean: r.clone(),
            z_ext_var: DVector::from_element(m, T::one()),
            z_hat: DVector::from_element(m, zero),
            z_var: DVector::from_element(m, T::zero()),
            beta_hat,
            omega: DVector::from_element(n, T::one()),
            residual: DVector::from_element(m, zero),
            edges,
        }
    }

    /// Posterior of `z` under the current noise precision, then the EM refresh
    /// of `beta_hat` from that posterior.
    fn noise_and_output(&mut self, r: &DVector<Cplx<T>>, p: &Params<T>) {
        let m = r.len();
        for i in 0..m {
            let v = self.z_ext_var[i];
            let zv = (v / (T::one() + self.beta_hat * v)).max(p.var_floor);
            self.z_var[i] = zv;
            self.z_hat[i] = (r[i] * self.beta_hat + self.z_ext_mean[i] / v) * zv;
        }
        let mut acc = T::zero();
        for i in 0..m {
            acc += abs2(r[i] - self.z_hat[i]) + self.z_var[i];
        }
        self.beta_hat = T::from_usize(m).unwrap() / acc.max(p.var_floor);
        if let Some(cap) = p.beta_max {
            self.beta_hat = self.beta_hat.min(cap);
        }
    }

    fn denoise(
        &mut self,
        pi_in: &DVector<T>,
        x_mean: &DVector<Cplx<T>>,
        x_var: &DVector<T>,
        p: &Params<T>,
    ) {
        for i in 0..self.t_hat.len() {
            let s = spike_slab_posterior(
                pi_in[i],
                x_mean[i],
                x_var[i],
                self.t_ext_mean[i],
                self.t_ext_var[i],
            );
            self.t_hat[i] = s.mean;
            self.t_var[i] = s.var.max(p.var_floor);
            self.omega[i] = s.omega;
        }
    }

    /// One pass of the layer given the spike-and-slab prior `(pi_in, x_mean, x_var)`.
    pub(crate) fn update(
        &mut self,
        pi_in: &DVector<T>,
        x_mean: &DVector<Cplx<T>>,
        x_var: &DVector<T>,
        a: &DMatrix<Cplx<T>>,
        a_abs2: &DMatrix<T>,
        r: &DVector<Cplx<T>>,
        p: &Params<T>,
    ) {
        if self.edges.is_some() {
            self.update_edges(a, a_abs2, r, p);
        } else {
            self.update_vectorized(a, a_abs2, r, p);
        }
        self.denoise(pi_in, x_mean, x_var, p);
    }

    fn update_vectorized(
        &mut self,
        a: &DMatrix<Cplx<T>>,
        a_abs2: &DMatrix<T>,
        r: &DVector<Cplx<T>>,
        p: &Params<T>,
    ) {
        let m = a.nrows();
        let z_var = (a_abs2 * &self.t_var).map(|v| v.max(p.var_floor));
        let mut z_mean = a * &self.t_hat;
        if p.onsager {
            for i in 0..m {
                z_mean[i] -= self.residual[i] * z_var[i];
            }
        }
        self.z_ext_mean = z_mean;
        self.z_ext_var = z_var;
        self.noise_and_output(r, p);
        let noise_var = T::one() / self.beta_hat;
        let inv = DVector::from_fn(m, |i, _| T::one() / (noise_var + self.z_ext_var[i]));
        let residual = DVector::from_fn(m, |i, _| (r[i] - self.z_ext_mean[i]) * inv[i]);
        let prec = a_abs2.tr_mul(&inv);
        let back = a.ad_mul(&residual);
        for k in 0..self.t_hat.len() {
            let ev = (T::one() / prec[k]).max(p.var_floor);
            let em = self.t_hat[k] + back[k] * ev;
            self.t_ext_var[k] = p.damp(ev, self.t_ext_var[k]);
            self.t_ext_mean[k] = p.damp_c(em, self.t_ext_mean[k]);
        }
        self.residual = residual;
    }

    fn update_edges(
        &mut self,
        a: &DMatrix<Cplx<T>>,
        a_abs2: &DMatrix<T>,
        r: &DVector<Cplx<T>>,
        p: &Params<T>,
    ) {
        let (m, n) = a.shape();
        let (mean_back, var_back) =
            self.edges
                .as_ref()
                .expect("edge messages")
                .leave_one_out(&self.t_hat, &self.t_var, p);
        let zero = Cplx::new(T::zero(), T::zero());
        let mut z_mean = DVector::from_element(m, zero);
        let mut z_var = DVector::from_element(m, T::zero());
        for k in 0..n {
            for i in 0..m {
                z_mean[i] += a[(i, k)] * mean_back[(i, k)];
                z_var[i] += a_abs2[(i, k)] * var_back[(i, k)];
            }
        }
        z_var.iter_mut().for_each(|v| *v = v.max(p.var_floor));
        self.z_ext_mean = z_mean;
        self.z_ext_var = z_var;
        self.noise_and_output(r, p);
        let noise_var = T::one() / self.beta_hat;
        let edges = self.edges.as_mut().expect("edge messages");
        for k in 0..n {
            for i in 0..m {
                let av = a[(i, k)];
                let a2 = a_abs2[(i, k)];
                let denom =
                    (noise_var + self.z_ext_var[i] - a2 * var_back[(i, k)]).max(p.var_floor);
                let prec = a2 / denom;
                let pm = av.conj() * (r[i] - self.z_ext_mean[i] + av * mean_back[(i, k)]) / denom;
                edges.prec[(i, k)] = p.damp(prec, edges.prec[(i, k)]);
                edges.pmean[(i, k)] = p.damp_c(pm, edges.pmean[(i, k)]);
            }
        }
        let (em, ev) = edges.aggregate(p);
        self.t_ext_mean = em;
        self.t_ext_var = ev;
    }
}
