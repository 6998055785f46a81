//! Pilot transmission, combining, noise whitening and the unitary
//! preprocessing that turns each aligned subframe into a GAMP-ready
//! observation `r = A t + n` with white noise.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{steer_tx, ArrayGeometry};
use crate::error::{invalid, Error, Result};
use crate::scalar::{abs2, Cplx, Real};

/// Analog combiners for the `K` time slots of one subframe.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerSet<T: Real> {
    /// `K` matrices of shape `N_R x N_RF`.
    pub per_slot: Vec<DMatrix<Cplx<T>>>,
    /// `N_R x M` concatenation `[W_1, ..., W_K]`.
    pub stacked: DMatrix<Cplx<T>>,
}

impl<T: Real> CombinerSet<T> {
    pub fn n_rx(&self) -> usize {
        self.stacked.nrows()
    }

    pub fn n_rf(&self) -> usize {
        self.per_slot.first().map_or(0, |w| w.ncols())
    }

    pub fn m(&self) -> usize {
        self.stacked.ncols()
    }
}

/// Draws `K` combiners with i.i.d. entries from `{-1/sqrt(N_R), +1/sqrt(N_R)}`.
pub fn gen_combiners<T: Real, R: Rng + ?Sized>(
    k: usize,
    n_rx: usize,
    n_rf: usize,
    rng: &mut R,
) -> Result<CombinerSet<T>> {
    if k == 0 || n_rf == 0 || n_rx == 0 {
        return invalid("combiner set needs K >= 1, N_RF >= 1 and N_R >= 1");
    }
    let amp = T::one() / T::from_usize(n_rx).unwrap().sqrt();
    let per_slot: Vec<DMatrix<Cplx<T>>> = (0..k)
        .map(|_| {
            DMatrix::from_fn(n_rx, n_rf, |_, _| {
                let v = if rng.random::<bool>() { amp } else { -amp };
                Cplx::new(v, T::zero())
            })
        })
        .collect();
    let mut stacked = DMatrix::zeros(n_rx, k * n_rf);
    for (i, w) in per_slot.iter().enumerate() {
        stacked.columns_mut(i * n_rf, n_rf).copy_from(w);
    }
    Ok(CombinerSet { per_slot, stacked })
}

/// Combined-noise statistics for one combiner set.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel<T: Real> {
    pub variance: T,
    /// `blkdiag(sigma^2 W_k^H W_k)`.
    pub covariance: DMatrix<Cplx<T>>,
    /// Lower-triangular Cholesky factor `B` with `covariance = B B^H`.
    pub factor: DMatrix<Cplx<T>>,
    /// `B^{-1}`.
    pub whitener: DMatrix<Cplx<T>>,
}

impl<T: Real> NoiseModel<T> {
    /// With `variance == 0` the factor is taken from the unit-variance
    /// structure so that the whitener stays well defined.
    pub fn new(variance: T, combiners: &CombinerSet<T>) -> Result<Self> {
        if variance < T::zero() || !variance.is_finite_val() {
            return invalid("noise variance must be finite and non-negative");
        }
        let m = combiners.m();
        let n_rf = combiners.n_rf();
        let mut structure = DMatrix::zeros(m, m);
        for (i, w) in combiners.per_slot.iter().enumerate() {
            structure
                .view_mut((i * n_rf, i * n_rf), (n_rf, n_rf))
                .copy_from(&(w.adjoint() * w));
        }
        let chol = structure
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        // rounding lets a singular structure slip through with a tiny pivot
        let pivots: Vec<T> = l.diagonal().iter().map(|z| z.re).collect();
        let pmax = pivots.iter().copied().fold(T::zero(), |a, b| a.max(b));
        if pivots.iter().any(|&d| d <= pmax * T::lit(1e-7)) {
            return Err(Error::NotPositiveDefinite);
        }
        let (covariance, factor) = if variance > T::zero() {
            let s = Cplx::new(variance, T::zero());
            let sd = Cplx::new(variance.sqrt(), T::zero());
            (structure * s, l * sd)
        } else {
            (DMatrix::zeros(m, m), l)
        };
        let identity = DMatrix::<Cplx<T>>::identity(m, m);
        let whitener = factor
            .solve_lower_triangular(&identity)
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            variance,
            covariance,
            factor,
            whitener,
        })
    }

    pub fn whiten(&self, y: &DVector<Cplx<T>>) -> Result<DVector<Cplx<T>>> {
        if y.len() != self.whitener.ncols() {
            return Err(Error::DimensionMismatch {
                what: "observation length",
                expected: self.whitener.ncols(),
                got: y.len(),
            });
        }
        Ok(&self.whitener * y)
    }
}

/// Draws the combined noise vector `[W_1^H n_1; ...; W_K^H n_K]`.
pub fn combined_noise<T: Real, R: Rng + ?Sized>(
    combiners: &CombinerSet<T>,
    variance: T,
    rng: &mut R,
) -> DVector<Cplx<T>> {
    let n = combiners.n_rx();
    let n_rf = combiners.n_rf();
    let s = (variance.as_f64() * 0.5).sqrt();
    let mut out = DVector::zeros(combiners.m());
    for (i, w) in combiners.per_slot.iter().enumerate() {
        let noise = DVector::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Cplx::new(T::lit(re * s), T::lit(im * s))
        });
        out.rows_mut(i * n_rf, n_rf)
            .copy_from(&(w.adjoint() * noise));
    }
    out
}

/// One received pilot subframe, kept split into signal and noise parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Subframe<T: Real> {
    pub signal: DVector<Cplx<T>>,
    pub noise: DVector<Cplx<T>>,
}

impl<T: Real> Subframe<T> {
    pub fn received(&self) -> DVector<Cplx<T>> {
        &self.signal + &self.noise
    }

    pub fn snr_db(&self) -> Result<f64> {
        receive_snr_db(&self.signal, &self.noise)
    }
}

/// `y_p = W^H H f_p + n_p` with unit pilot symbols.
pub fn simulate_subframe<T: Real, R: Rng + ?Sized>(
    channel: &DMatrix<Cplx<T>>,
    beam: &DVector<Cplx<T>>,
    combiners: &CombinerSet<T>,
    noise_variance: T,
    rng: &mut R,
) -> Result<Subframe<T>> {
    if channel.ncols() != beam.len() {
        return Err(Error::DimensionMismatch {
            what: "transmit beam length",
            expected: channel.ncols(),
            got: beam.len(),
        });
    }
    if channel.nrows() != combiners.n_rx() {
        return Err(Error::DimensionMismatch {
            what: "channel rows vs combiner rows",
            expected: combiners.n_rx(),
            got: channel.nrows(),
        });
    }
    let signal = combiners.stacked.adjoint() * (channel * beam);
    let noise = if noise_variance > T::zero() {
        combined_noise(combiners, noise_variance, rng)
    } else {
        DVector::zeros(combiners.m())
    };
    Ok(Subframe { signal, noise })
}

/// Receive SNR `10 log10(|signal|^2 / |noise|^2)`.
pub fn receive_snr_db<T: Real>(signal: &DVector<Cplx<T>>, noise: &DVector<Cplx<T>>) -> Result<f64> {
    let ps: f64 = signal.iter().map(|z| abs2(*z).as_f64()).sum();
    if ps <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    let pn: f64 = noise.iter().map(|z| abs2(*z).as_f64()).sum();
    Ok(10.0 * (ps / pn).log10())
}

/// Noise variance whose expected combined-noise power puts the given mean
/// combined-signal power at `target_db`.
///
/// `E |n|^2 = sigma^2 |W|_F^2`, so the map from variance to expected SNR is
/// strictly monotone and solvable directly.
pub fn noise_variance_for_snr<T: Real>(
    mean_signal_power: f64,
    combiners: &CombinerSet<T>,
    target_db: f64,
) -> Result<f64> {
    if mean_signal_power <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    let wf: f64 = combiners.stacked.iter().map(|z| abs2(*z).as_f64()).sum();
    Ok(mean_signal_power / (wf * 10f64.powf(target_db / 10.0)))
}

/// Whitening plus economy SVD of `P = B^{-1} W^H`.
///
/// Depends only on the combiners and the noise model, so it is built once and
/// shared across every path and estimator of a trial.
#[derive(Debug, Clone)]
pub struct Preprocessor<T: Real> {
    pub whitener: DMatrix<Cplx<T>>,
    /// `U^H`, `M x M`.
    pub u_adj: DMatrix<Cplx<T>>,
    pub singular_values: Vec<T>,
    /// `A = Lambda V^H`, `M x N_R`.
    pub a_matrix: Arc<DMatrix<Cplx<T>>>,
    /// True when a singular value had to be floored.
    pub rank_deficient: bool,
}

impl<T: Real> Preprocessor<T> {
    pub fn new(combiners: &CombinerSet<T>, noise: &NoiseModel<T>) -> Result<Self> {
        let p = &noise.whitener * combiners.stacked.adjoint();
        Self::from_p(p, noise.whitener.clone())
    }

    /// Decomposes an arbitrary full-row-rank `P` (`M <= N_R`).
    pub fn from_p(p: DMatrix<Cplx<T>>, whitener: DMatrix<Cplx<T>>) -> Result<Self> {
        let (m, n) = p.shape();
        if m > n {
            return invalid(format!(
                "P must have at most as many rows as columns ({m} x {n})"
            ));
        }
        let svd = p.svd(true, true);
        let u = svd.u.ok_or(Error::NotPositiveDefinite)?;
        let v_t = svd.v_t.ok_or(Error::NotPositiveDefinite)?;
        let mut sv: Vec<T> = svd.singular_values.iter().copied().collect();
        let smax = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
        let floor = smax * T::lit(1e-12);
        let mut rank_deficient = false;
        for s in sv.iter_mut() {
            if *s < floor {
                *s = floor;
                rank_deficient = true;
            }
        }
        let mut a = v_t;
        for (i, s) in sv.iter().enumerate() {
            let s = Cplx::new(*s, T::zero());
            a.row_mut(i).iter_mut().for_each(|z| *z *= s);
        }
        Ok(Self {
            whitener,
            u_adj: u.adjoint(),
            singular_values: sv,
            a_matrix: Arc::new(a),
            rank_deficient,
        })
    }

    pub fn m(&self) -> usize {
        self.u_adj.nrows()
    }

    /// `r = U^H y~` for an already whitened observation.
    pub fn unitary_transform(&self, ytilde: &DVector<Cplx<T>>) -> DVector<Cplx<T>> {
        &self.u_adj * ytilde
    }

    /// Whitens and rotates a raw received subframe.
    pub fn observe(
        &self,
        y: &DVector<Cplx<T>>,
        dictionary: &AngularDictionary<T>,
        snr_db: f64,
    ) -> Result<WhitenedObservation<T>> {
        if y.len() != self.m() {
            return Err(Error::DimensionMismatch {
                what: "observation length",
                expected: self.m(),
                got: y.len(),
            });
        }
        let r = &self.u_adj * (&self.whitener * y);
        Ok(WhitenedObservation {
            r,
            a_matrix: Arc::clone(&self.a_matrix),
            dictionary: Arc::clone(&dictionary.matrix),
            snr_db,
        })
    }
}

/// A GAMP-ready observation `r = A t + n`, `n ~ CN(0, beta^{-1} I)`.
#[derive(Debug, Clone)]
pub struct WhitenedObservation<T: Real> {
    pub r: DVector<Cplx<T>>,
    pub a_matrix: Arc<DMatrix<Cplx<T>>>,
    pub dictionary: Arc<DMatrix<Cplx<T>>>,
    pub snr_db: f64,
}

impl<T: Real> WhitenedObservation<T> {
    pub fn new(
        r: DVector<Cplx<T>>,
        a_matrix: Arc<DMatrix<Cplx<T>>>,
        dictionary: Arc<DMatrix<Cplx<T>>>,
    ) -> Result<Self> {
        if a_matrix.nrows() != r.len() {
            return Err(Error::DimensionMismatch {
                what: "measurement rows vs observation length",
                expected: a_matrix.nrows(),
                got: r.len(),
            });
        }
        if dictionary.nrows() != a_matrix.ncols() {
            return Err(Error::DimensionMismatch {
                what: "dictionary rows vs antennas",
                expected: a_matrix.ncols(),
                got: dictionary.nrows(),
            });
        }
        Ok(Self {
            r,
            a_matrix,
            dictionary,
            snr_db: f64::NAN,
        })
    }

    pub fn m(&self) -> usize {
        self.r.len()
    }

    pub fn n(&self) -> usize {
        self.a_matrix.ncols()
    }

    pub fn q(&self) -> usize {
        self.dictionary.ncols()
    }
}

/// Angular-domain dictionary: array responses on a uniform grid of spatial
/// frequencies `u_q = -1 + 2q/Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDictionary<T: Real> {
    pub matrix: Arc<DMatrix<Cplx<T>>>,
    pub q_size: usize,
}

pub fn build_dictionary<T: Real>(n_rx: usize, q: usize) -> Result<AngularDictionary<T>> {
    if q < n_rx {
        return invalid(format!("dictionary size Q={q} must be at least N_R={n_rx}"));
    }
    let scale = T::one() / T::from_usize(n_rx).unwrap().sqrt();
    let pi = T::pi();
    let matrix = DMatrix::from_fn(n_rx, q, |n, k| {
        let u = -T::one() + T::lit(2.0) * T::from_usize(k).unwrap() / T::from_usize(q).unwrap();
        let phase = -pi * T::from_usize(n).unwrap() * u;
        Cplx::new(phase.cos() * scale, phase.sin() * scale)
    });
    Ok(AngularDictionary {
        matrix: Arc::new(matrix),
        q_size: q,
    })
}

/// `N_T`-point DFT transmit codebook (columns are steering vectors on the
/// grid `sin(psi) = -1 + 2k/N_T`).
pub fn dft_codebook<T: Real>(geometry: &ArrayGeometry<T>) -> Vec<DVector<Cplx<T>>> {
    let n = geometry.n_tx;
    (0..n)
        .map(|k| {
            let u = -1.0 + 2.0 * k as f64 / n as f64;
            steer_tx(T::lit(u.asin()), geometry)
        })
        .collect()
}

/// Picks `p0` transmit beams for the AoD phase at random from the DFT
/// codebook, cycling through shuffled copies so beams repeat only when
/// `p0 > N_T`.
pub fn phase_one_beams<T: Real, R: Rng + ?Sized>(
    geometry: &ArrayGeometry<T>,
    p0: usize,
    rng: &mut R,
) -> DMatrix<Cplx<T>> {
    let book = dft_codebook(geometry);
    let mut order: Vec<usize> = Vec::with_capacity(p0);
    while order.len() < p0 {
        let mut idx: Vec<usize> = (0..book.len()).collect();
        idx.shuffle(rng);
        order.extend(idx);
    }
    order.truncate(p0);
    let mut f = DMatrix::zeros(geometry.n_tx, p0);
    for (j, &k) in order.iter().enumerate() {
        f.set_column(j, &book[k]);
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct AodEstimate<T> {
    pub angles: Vec<T>,
    /// Number of requested paths for which no separate peak was found.
    pub missing: usize,
}

/// Grid-correlation AoD estimator over the Phase-I pilot block `Y_0`.
///
/// The score of a candidate angle is `|R F^H a_T(psi)|^2 / |F^H a_T(psi)|^2`
/// with `R` the pilot block after the responses of the other angles have been
/// projected out. Angles are picked greedily on the grid, at least one
/// beamwidth apart, re-picked against each other until the set settles, and
/// finally polished off the grid by a local search.
pub fn estimate_aods_grid<T: Real>(
    y0: &DMatrix<Cplx<T>>,
    beams: &DMatrix<Cplx<T>>,
    geometry: &ArrayGeometry<T>,
    n_paths: usize,
    grid_size: usize,
) -> Result<AodEstimate<T>> {
    if y0.ncols() != beams.ncols() {
        return Err(Error::DimensionMismatch {
            what: "pilot columns vs transmit beams",
            expected: beams.ncols(),
            got: y0.ncols(),
        });
    }
    if grid_size < 2 {
        return invalid("AoD grid needs at least two points");
    }
    let grid: Vec<f64> = (0..grid_size)
        .map(|k| -1.0 + 2.0 * k as f64 / grid_size as f64)
        .collect();
    let beams_adj = beams.adjoint();
    let atoms: Vec<DVector<Cplx<T>>> = grid
        .iter()
        .map(|&u| &beams_adj * steer_tx(T::lit(u.asin()), geometry))
        .collect();
    // normalising by the beam coverage makes a single noiseless path peak
    // exactly at its own angle
    let coverage: Vec<f64> = atoms.iter().map(|a| a.norm_squared().as_f64()).collect();
    let cov_floor = 1e-3 * coverage.iter().copied().fold(0.0, f64::max);
    let g = grid_size;
    // one beamwidth (2/N_T in spatial frequency) expressed in grid steps
    let min_sep = (g as f64 / geometry.n_tx as f64).floor().max(1.0) as usize;
    let circ = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d.min(g - d)
    };
    // pilot block with the responses of `keep` projected out
    let residual = |keep: &[usize]| -> DMatrix<Cplx<T>> {
        if keep.is_empty() {
            return y0.clone();
        }
        let basis =
            DMatrix::from_columns(&keep.iter().map(|&c| atoms[c].clone()).collect::<Vec<_>>());
        match basis.ad_mul(&basis).try_inverse() {
            Some(inv) => y0 - y0 * &basis * inv * basis.adjoint(),
            None => y0.clone(),
        }
    };
    let pick = |resid: &DMatrix<Cplx<T>>, others: &[usize]| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..g {
            if others.iter().any(|&c| circ(c, k) < min_sep) {
                continue;
            }
            let score = (resid * &atoms[k]).norm_squared().as_f64() / (coverage[k] + cov_floor);
            if score > 0.0 && best.is_none_or(|(_, s)| score > s) {
                best = Some((k, score));
            }
        }
        best.map(|(k, _)| k)
    };
    let mut chosen: Vec<usize> = Vec::with_capacity(n_paths);
    while chosen.len() < n_paths {
        match pick(&residual(&chosen), &chosen) {
            Some(k) => chosen.push(k),
            None => break,
        }
    }
    // re-pick each angle with every other path removed, until nothing moves
    for _ in 0..3 {
        let mut moved = false;
        for i in 0..chosen.len() {
            let others: Vec<usize> = chosen
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &c)| c)
                .collect();
            if let Some(k) = pick(&residual(&others), &others) {
                moved |= k != chosen[i];
                chosen[i] = k;
            }
        }
        if !moved {
            break;
        }
    }
    let missing = n_paths - chosen.len();

    // off-grid polish: local search within one grid step of each pick
    let wrap = |u: f64| {
        if u < -1.0 {
            u + 2.0
        } else if u >= 1.0 {
            u - 2.0
        } else {
            u
        }
    };
    let atom = |u: f64| &beams_adj * steer_tx(T::lit(u.asin()), geometry);
    let mut fine: Vec<f64> = chosen.iter().map(|&k| grid[k]).collect();
    let step = 2.0 / g as f64;
    let sub = 16;
    for _ in 0..2 {
        for i in 0..fine.len() {
            let others: Vec<DVector<Cplx<T>>> = fine
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &u)| atom(u))
                .collect();
            let resid = if others.is_empty() {
                y0.clone()
            } else {
                let basis = DMatrix::from_columns(&others);
                match basis.ad_mul(&basis).try_inverse() {
                    Some(inv) => y0 - y0 * &basis * inv * basis.adjoint(),
                    None => continue,
                }
            };
            let centre = fine[i];
            let mut best = (centre, f64::NEG_INFINITY);
            for k in -sub..=sub {
                let u = wrap(centre + step * k as f64 / sub as f64);
                let a = atom(u);
                let den = a.norm_squared().as_f64() + cov_floor;
                let score = (&resid * &a).norm_squared().as_f64() / den;
                if score > best.1 {
                    best = (u, score);
                }
            }
            fine[i] = best.0;
        }
    }
    Ok(AodEstimate {
        angles: fine.iter().map(|&u| T::lit(u.asin())).collect(),
        missing,
    })
}

/// Phase-II subframes: one per AoD, each transmitted on `a_T(aod)`.
pub fn beam_align_observe<T: Real, R: Rng + ?Sized>(
    channel: &DMatrix<Cplx<T>>,
    aods: &[T],
    geometry: &ArrayGeometry<T>,
    combiners: &CombinerSet<T>,
    noise_variance: T,
    rng: &mut R,
) -> Result<Vec<Subframe<T>>> {
    aods.iter()
        .map(|&psi| {
            let f = steer_tx(psi, geometry);
            simulate_subframe(channel, &f, combiners, noise_variance, rng)
        })
        .collect()
}
