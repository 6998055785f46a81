#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlgamp::frontend::combined_noise;
use tlgamp::{
    build_dictionary, gen_combiners, ArrayGeometry, NoiseModel, ObservationF64, Preprocessor,
    VisibilityVector, C64,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-modulus plane wave on dictionary grid point `q` of `q_size`.
pub fn on_grid_wave(n: usize, q: usize, q_size: usize) -> DVector<C64> {
    let u = -1.0 + 2.0 * q as f64 / q_size as f64;
    DVector::from_fn(n, |i, _| {
        C64::from_polar(1.0, -std::f64::consts::PI * i as f64 * u)
    })
}

pub fn masked(t: &DVector<C64>, mask: &VisibilityVector) -> DVector<C64> {
    DVector::from_fn(t.len(), |i, _| {
        if mask.mask[i] {
            t[i]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub struct Setup {
    pub obs: ObservationF64,
    pub noise_var: f64,
}

/// Observes `t` through `k` random combiners of `n_rf` chains with the given
/// noise variance, including whitening and rotation.
pub fn observe(
    t: &DVector<C64>,
    k: usize,
    n_rf: usize,
    q: usize,
    noise_var: f64,
    seed: u64,
) -> Setup {
    let n = t.len();
    let mut r = rng(seed);
    let w = gen_combiners::<f64, _>(k, n, n_rf, &mut r).unwrap();
    let noise = NoiseModel::new(noise_var, &w).unwrap();
    let pre = Preprocessor::new(&w, &noise).unwrap();
    let dict = build_dictionary::<f64>(n, q).unwrap();
    let mut y = w.stacked.adjoint() * t;
    if noise_var > 0.0 {
        y += combined_noise(&w, noise_var, &mut r);
    }
    Setup {
        obs: pre.observe(&y, &dict, f64::NAN).unwrap(),
        noise_var,
    }
}

pub fn geometry(n_rx: usize) -> ArrayGeometry<f64> {
    ArrayGeometry::new(n_rx, 16, 30e9).unwrap()
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn rel_err(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    (a - b).norm() / b.norm()
}

pub fn share(obs: &ObservationF64) -> (Arc<nalgebra::DMatrix<C64>>, Arc<nalgebra::DMatrix<C64>>) {
    (Arc::clone(&obs.a_matrix), Arc::clone(&obs.dictionary))
}
