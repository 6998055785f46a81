//! Angular-domain layer: hierarchical Gamma-Gaussian prior on the angular
//! coefficients `c` and the linear map `x = D c`.

use nalgebra::{DMatrix, DVector};

use super::messages::gamma_posterior;
use super::{EdgeMessages, Params, UpdateMode};
use crate::scalar::{Cplx, Real};

#[derive(Debug, Clone)]
pub struct Layer1State<T: Real> {
    pub c_hat: DVector<Cplx<T>>,
    pub c_var: DVector<T>,
    pub gamma_hat: DVector<T>,
    /// Extrinsic input to the coefficient posterior.
    pub c_ext_mean: DVector<Cplx<T>>,
    pub c_ext_var: DVector<T>,
    /// Prior message on `x` handed to the visibility layer.
    pub x_out_mean: DVector<Cplx<T>>,
    pub x_out_var: DVector<T>,
    residual: DVector<Cplx<T>>,
    edges: Option<EdgeMessages<T>>,
}

impl<T: Real> Layer1State<T> {
    pub(crate) fn new(n: usize, q: usize, mode: UpdateMode, init_var: T) -> Self {
        let zero = Cplx::new(T::zero(), T::zero());
        let edges = match mode {
            UpdateMode::VectorizedApprox => None,
            // N equal edge precisions adding up to 1/init_var
            UpdateMode::EdgeExact => Some(EdgeMessages::new(
                n,
                q,
                T::one() / (T::from_usize(n).unwrap() * init_var),
            )),
        };
        Self {
            c_hat: DVector::from_element(q, zero),
            c_var: DVector::from_element(q, init_var),
            gamma_hat: DVector::from_element(q, T::one() / init_var),
            c_ext_mean: DVector::from_element(q, zero),
            c_ext_var: DVector::from_element(q, init_var),
            x_out_mean: DVector::from_element(n, zero),
            x_out_var: DVector::from_element(n, init_var),
            residual: DVector::from_element(n, zero),
            edges,
        }
    }

    fn posterior(&mut self, p: &Params<T>) {
        for q in 0..self.c_hat.len() {
            let g = gamma_posterior(self.c_hat[q], self.c_var[q], p.xi, p.eta, p.var_floor);
            self.gamma_hat[q] = g;
            let ev = self.c_ext_var[q];
            let denom = T::one() + ev * g;
            self.c_var[q] = (ev / denom).max(p.var_floor);
            self.c_hat[q] = self.c_ext_mean[q] / denom;
        }
    }

    /// One pass of the layer given the antenna-domain message `(x_in_mean, x_in_var)`.
    pub(crate) fn update(
        &mut self,
        x_in_mean: &DVector<Cplx<T>>,
        x_in_var: &DVector<T>,
        dict: &DMatrix<Cplx<T>>,
        dict_abs2: &DMatrix<T>,
        p: &Params<T>,
    ) {
        self.posterior(p);
        if self.edges.is_some() {
            self.update_edges(x_in_mean, x_in_var, dict, dict_abs2, p);
        } else {
            self.update_vectorized(x_in_mean, x_in_var, dict, dict_abs2, p);
        }
    }

    fn update_vectorized(
        &mut self,
        x_in_mean: &DVector<Cplx<T>>,
        x_in_var: &DVector<T>,
        dict: &DMatrix<Cplx<T>>,
        dict_abs2: &DMatrix<T>,
        p: &Params<T>,
    ) {
        let n = dict.nrows();
        let x_var = (dict_abs2 * &self.c_var).map(|v| v.max(p.var_floor));
        let mut x_mean = dict * &self.c_hat;
        if p.onsager {
            for i in 0..n {
                x_mean[i] -= self.residual[i] * x_var[i];
            }
        }
        let inv = DVector::from_fn(n, |i, _| T::one() / (x_in_var[i] + x_var[i]));
        let residual = DVector::from_fn(n, |i, _| (x_in_mean[i] - x_mean[i]) * inv[i]);
        let prec = dict_abs2.tr_mul(&inv);
        let back = dict.ad_mul(&residual);
        for q in 0..self.c_hat.len() {
            let ev = (T::one() / prec[q]).max(p.var_floor);
            let em = self.c_hat[q] + back[q] * ev;
            self.c_ext_var[q] = p.damp(ev, self.c_ext_var[q]);
            self.c_ext_mean[q] = p.damp_c(em, self.c_ext_mean[q]);
        }
        self.x_out_mean = x_mean;
        self.x_out_var = x_var;
        self.residual = residual;
    }

    fn update_edges(
        &mut self,
        x_in_mean: &DVector<Cplx<T>>,
        x_in_var: &DVector<T>,
        dict: &DMatrix<Cplx<T>>,
        dict_abs2: &DMatrix<T>,
        p: &Params<T>,
    ) {
        let edges = self.edges.as_mut().expect("edge messages");
        let (n, q) = dict.shape();
        // coefficient -> factor messages
        let (mean_back, var_back) = edges.leave_one_out(&self.c_hat, &self.c_var, p);
        let zero = Cplx::new(T::zero(), T::zero());
        let mut x_mean = DVector::from_element(n, zero);
        let mut x_var = DVector::from_element(n, T::zero());
        for k in 0..q {
            for i in 0..n {
                x_mean[i] += dict[(i, k)] * mean_back[(i, k)];
                x_var[i] += dict_abs2[(i, k)] * var_back[(i, k)];
            }
        }
        x_var.iter_mut().for_each(|v| *v = v.max(p.var_floor));
        // factor -> coefficient messages in precision form
        for k in 0..q {
            for i in 0..n {
                let d = dict[(i, k)];
                let d2 = dict_abs2[(i, k)];
                let denom = (x_in_var[i] + x_var[i] - d2 * var_back[(i, k)]).max(p.var_floor);
                let prec = d2 / denom;
                let pm = d.conj() * (x_in_mean[i] - x_mean[i] + d * mean_back[(i, k)]) / denom;
                edges.prec[(i, k)] = p.damp(prec, edges.prec[(i, k)]);
                edges.pmean[(i, k)] = p.damp_c(pm, edges.pmean[(i, k)]);
            }
        }
        let (em, ev) = edges.aggregate(p);
        self.c_ext_mean = em;
        self.c_ext_var = ev;
        self.x_out_mean = x_mean;
        self.x_out_var = x_var;
    }
}
