//! Reference estimators: least squares and the oracle-assisted TL-GAMP
//! variants.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::channel::VisibilityVector;
use crate::error::{invalid, Error, Result};
use crate::frontend::{CombinerSet, WhitenedObservation};
use crate::gamp::{run_with_control, GampConfig, Layer2Control, SubchannelEstimate};
use crate::scalar::{Cplx, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaselineKind {
    Ls,
    OracleVr,
    OracleAod,
    OracleBoth,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] =
        [Self::Ls, Self::OracleVr, Self::OracleAod, Self::OracleBoth];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ls => "ls",
            Self::OracleVr => "oracle_vr",
            Self::OracleAod => "oracle_aod",
            Self::OracleBoth => "oracle_both",
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .map_or_else(|| invalid(format!("unknown baseline `{s}`")), Ok)
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Linear least-squares subchannel estimator `h = W (W^H W)^{-1} y`.
///
/// With `M >= N_R` this is the ordinary inverse `(W W^H)^{-1} W y`; with
/// `M < N_R` it is the minimum-norm solution of `W^H h = y`.
#[derive(Debug, Clone)]
pub struct LsEstimator<T: Real> {
    /// `N_R x M` solution operator.
    pub operator: DMatrix<Cplx<T>>,
    pub underdetermined: bool,
    /// A ridge had to be added to make the Gram matrix invertible.
    pub regularized: bool,
}

impl<T: Real> LsEstimator<T> {
    pub fn new(combiners: &CombinerSet<T>) -> Result<Self> {
        let w = &combiners.stacked;
        let (n, m) = w.shape();
        let underdetermined = m < n;
        let gram = if underdetermined {
            w.ad_mul(w)
        } else {
            w * w.adjoint()
        };
        let (inv, regularized) = match gram.clone().cholesky() {
            Some(c) => (c.inverse(), false),
            None => {
                let k = gram.nrows();
                let scale = gram
                    .diagonal()
                    .iter()
                    .map(|z| z.re)
                    .fold(T::zero(), |a, b| a.max(b));
                let ridge = DMatrix::<Cplx<T>>::identity(k, k)
                    * Cplx::new(scale.max(T::one()) * T::lit(1e-10), T::zero());
                let c = (gram + ridge)
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite)?;
                (c.inverse(), true)
            }
        };
        let operator = if underdetermined { w * inv } else { inv * w };
        Ok(Self {
            operator,
            underdetermined,
            regularized,
        })
    }

    pub fn estimate(&self, y: &DVector<Cplx<T>>) -> Result<DVector<Cplx<T>>> {
        if y.len() != self.operator.ncols() {
            return Err(Error::DimensionMismatch {
                what: "observation length",
                expected: self.operator.ncols(),
                got: y.len(),
            });
        }
        Ok(&self.operator * y)
    }
}

/// TL-GAMP with the visibility layer replaced by the true mask.
pub fn oracle_vr_run<T: Real>(
    obs: &WhitenedObservation<T>,
    cfg: &GampConfig,
    mask: &VisibilityVector,
    truth: Option<&DVector<Cplx<T>>>,
) -> Result<SubchannelEstimate<T>> {
    run_with_control(obs, cfg, truth, &Layer2Control::Frozen(mask.to_real()))
}

/// TL-GAMP with the support prior frozen at the constant `phi`, i.e. the
/// Markov layer switched off.
pub fn frozen_support_run<T: Real>(
    obs: &WhitenedObservation<T>,
    cfg: &GampConfig,
    phi: f64,
    truth: Option<&DVector<Cplx<T>>>,
) -> Result<SubchannelEstimate<T>> {
    if !(phi > 0.0 && phi <= 1.0) {
        return invalid(format!("support prior must lie in (0, 1], got {phi}"));
    }
    let control = Layer2Control::Frozen(DVector::from_element(obs.n(), T::lit(phi)));
    run_with_control(obs, cfg, truth, &control)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::gen_combiners;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ls_exact_when_square_and_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = gen_combiners::<f64, _>(4, 32, 8, &mut rng).unwrap();
        let ls = LsEstimator::new(&w).unwrap();
        assert!(!ls.underdetermined);
        let h = DVector::from_fn(32, |i, _| Cplx::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05));
        let y = w.stacked.adjoint() * &h;
        let est = ls.estimate(&y).unwrap();
        assert!((est - h).norm() < 1e-8);
    }

    #[test]
    fn ls_min_norm_when_underdetermined() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = gen_combiners::<f64, _>(2, 32, 8, &mut rng).unwrap();
        let ls = LsEstimator::new(&w).unwrap();
        assert!(ls.underdetermined);
        let h = DVector::from_fn(32, |i, _| Cplx::new((i as f64).sin(), (i as f64).cos()));
        let y = w.stacked.adjoint() * &h;
        let est = ls.estimate(&y).unwrap();
        // consistent with the data but not the truth
        assert!((w.stacked.adjoint() * &est - &y).norm() < 1e-9);
        assert!((&est - &h).norm() > 1e-3);
        // minimum norm: no component in the null space of W^H
        assert!(est.norm() <= h.norm());
    }

    #[test]
    fn baseline_names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.as_str().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("lmmse".parse::<BaselineKind>().is_err());
    }
}
