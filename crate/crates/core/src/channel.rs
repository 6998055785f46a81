//! Near-field, spatially non-stationary multipath channel synthesis.
//!
//! A channel is a sum of `L` rank-one path terms. Each path couples a
//! far-field transmit steering vector at the user with a Fresnel-approximated
//! spherical-wavefront receive steering vector at the base station, and the
//! receive side is gated by a binary visibility mask.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::markov::MarkovPrior;
use crate::scalar::{cis, Cplx, Real};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform linear arrays at both ends of the link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry<T> {
    pub n_rx: usize,
    pub n_tx: usize,
    pub spacing: T,
    pub wavelength: T,
    pub carrier_hz: T,
}

impl<T: Real> ArrayGeometry<T> {
    /// Half-wavelength arrays at the given carrier frequency.
    pub fn new(n_rx: usize, n_tx: usize, carrier_hz: T) -> Result<Self> {
        if n_tx == 0 || n_rx <= n_tx {
            return invalid(format!(
                "need n_rx > n_tx > 0, got n_rx={n_rx}, n_tx={n_tx}"
            ));
        }
        if !(carrier_hz > T::zero()) {
            return invalid("carrier frequency must be positive");
        }
        let wavelength = T::lit(SPEED_OF_LIGHT) / carrier_hz;
        Ok(Self {
            n_rx,
            n_tx,
            spacing: wavelength * T::lit(0.5),
            wavelength,
            carrier_hz,
        })
    }

    fn wavenumber(&self) -> T {
        T::two_pi() / self.wavelength
    }
}

/// Binary visibility mask of one path over the receive array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityVector {
    pub mask: Vec<bool>,
}

impl VisibilityVector {
    pub fn full(n: usize) -> Self {
        Self {
            mask: vec![true; n],
        }
    }

    pub fn from_block(n: usize, start: usize, len: usize) -> Self {
        let mask = (0..n).map(|i| i >= start && i < start + len).collect();
        Self { mask }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.mask.len() as f64
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    pub fn to_real<T: Real>(&self) -> DVector<T> {
        DVector::from_iterator(
            self.mask.len(),
            self.mask
                .iter()
                .map(|&b| if b { T::one() } else { T::zero() }),
        )
    }

    /// Shared visible elements divided by the smaller visible count.
    pub fn overlap(&self, other: &Self) -> f64 {
        let both = self
            .mask
            .iter()
            .zip(&other.mask)
            .filter(|(&a, &b)| a && b)
            .count();
        let denom = self.count().min(other.count()).max(1);
        both as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathParams<T> {
    pub gain: Cplx<T>,
    pub aoa_rad: T,
    pub distance_m: T,
    pub aod_rad: T,
    pub visibility: VisibilityVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T: Real> {
    /// `N_R x N_T` channel matrix.
    pub matrix: DMatrix<Cplx<T>>,
    pub paths: Vec<PathParams<T>>,
    /// Per-path receive-side contributions `h_l`.
    pub subchannels: Vec<DVector<Cplx<T>>>,
}

impl<T: Real> ChannelRealization<T> {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn aods(&self) -> Vec<T> {
        self.paths.iter().map(|p| p.aod_rad).collect()
    }
}

/// Transmit steering vector, unit norm.
pub fn steer_tx<T: Real>(aod_rad: T, geometry: &ArrayGeometry<T>) -> DVector<Cplx<T>> {
    let n = geometry.n_tx;
    let scale = T::one() / T::from_usize(n).unwrap().sqrt();
    let step = -geometry.wavenumber() * geometry.spacing * aod_rad.sin();
    DVector::from_fn(n, |i, _| cis(step * T::from_usize(i).unwrap()) * scale)
}

/// Wave-path difference of element `index` (0-based) relative to the first element.
pub fn fresnel_path_difference<T: Real>(aoa_rad: T, distance_m: T, index: usize, spacing: T) -> T {
    let x = spacing * T::from_usize(index).unwrap();
    let c = aoa_rad.cos();
    -x * aoa_rad.sin() + x * x * c * c / (T::lit(2.0) * distance_m)
}

/// Near-field receive steering vector under the Fresnel approximation, unit norm.
pub fn steer_rx_nf<T: Real>(
    aoa_rad: T,
    distance_m: T,
    geometry: &ArrayGeometry<T>,
) -> Result<DVector<Cplx<T>>> {
    if !(distance_m > T::zero()) {
        return invalid(format!(
            "distance must be positive, got {}",
            distance_m.as_f64()
        ));
    }
    let n = geometry.n_rx;
    let k = geometry.wavenumber();
    let scale = T::one() / T::from_usize(n).unwrap().sqrt();
    Ok(DVector::from_fn(n, |i, _| {
        cis(k * fresnel_path_difference(aoa_rad, distance_m, i, geometry.spacing)) * scale
    }))
}

/// Plane-wave receive steering vector (the `r -> inf` limit of [`steer_rx_nf`]).
pub fn steer_rx_ff<T: Real>(aoa_rad: T, geometry: &ArrayGeometry<T>) -> DVector<Cplx<T>> {
    let n = geometry.n_rx;
    let scale = T::one() / T::from_usize(n).unwrap().sqrt();
    let step = -geometry.wavenumber() * geometry.spacing * aoa_rad.sin();
    DVector::from_fn(n, |i, _| cis(step * T::from_usize(i).unwrap()) * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibilityModel {
    /// One run of visible antennas at a uniformly random offset.
    ContiguousBlock,
    /// A draw from the stationary visibility chain, conditioned to be non-empty.
    Markov,
}

impl std::str::FromStr for VisibilityModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contiguous_block" => Ok(Self::ContiguousBlock),
            "markov" => Ok(Self::Markov),
            other => invalid(format!("unknown visibility model '{other}'")),
        }
    }
}

impl std::fmt::Display for VisibilityModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ContiguousBlock => "contiguous_block",
            Self::Markov => "markov",
        })
    }
}

/// Draws a visibility mask of length `n`.
///
/// For [`VisibilityModel::Markov`] the chain's stationary probability is
/// `fraction` and its `1 -> 0` transition probability is taken from `prior`.
pub fn sample_visibility<T: Real, R: Rng + ?Sized>(
    n: usize,
    fraction: T,
    model: VisibilityModel,
    prior: &MarkovPrior<T>,
    rng: &mut R,
) -> Result<VisibilityVector> {
    let f = fraction.as_f64();
    if !(f > 0.0 && f <= 1.0) {
        return invalid(format!("visibility fraction must lie in (0,1], got {f}"));
    }
    if n == 0 {
        return invalid("visibility length must be positive");
    }
    if f == 1.0 {
        return Ok(VisibilityVector::full(n));
    }
    match model {
        VisibilityModel::ContiguousBlock => {
            let len = ((f * n as f64).round() as usize).clamp(1, n);
            let start = rng.random_range(0..=n - len);
            Ok(VisibilityVector::from_block(n, start, len))
        }
        VisibilityModel::Markov => {
            let chain = MarkovPrior::new(fraction, prior.p10)?;
            let p01 = chain.p01.as_f64();
            let p11 = chain.p11.as_f64();
            loop {
                let mut mask = Vec::with_capacity(n);
                let mut s = rng.random::<f64>() < f;
                mask.push(s);
                for _ in 1..n {
                    let p = if s { p11 } else { p01 };
                    s = rng.random::<f64>() < p;
                    mask.push(s);
                }
                if mask.iter().any(|&b| b) {
                    return Ok(VisibilityVector { mask });
                }
            }
        }
    }
}

/// Sums the rank-one path contributions into the channel matrix.
pub fn assemble_channel<T: Real>(
    paths: Vec<PathParams<T>>,
    geometry: &ArrayGeometry<T>,
) -> Result<ChannelRealization<T>> {
    if paths.is_empty() {
        return invalid("at least one path is required");
    }
    let scale = T::from_usize(geometry.n_tx * geometry.n_rx).unwrap().sqrt();
    let mut matrix = DMatrix::zeros(geometry.n_rx, geometry.n_tx);
    let mut subchannels = Vec::with_capacity(paths.len());
    for p in &paths {
        if p.visibility.len() != geometry.n_rx {
            return Err(Error::DimensionMismatch {
                what: "visibility mask length",
                expected: geometry.n_rx,
                got: p.visibility.len(),
            });
        }
        let a_r = steer_rx_nf(p.aoa_rad, p.distance_m, geometry)?;
        let g = p.gain * scale;
        let h = DVector::from_fn(geometry.n_rx, |i, _| {
            if p.visibility.mask[i] {
                a_r[i] * g
            } else {
                Cplx::new(T::zero(), T::zero())
            }
        });
        let a_t = steer_tx(p.aod_rad, geometry);
        matrix += &h * a_t.adjoint();
        subchannels.push(h);
    }
    Ok(ChannelRealization {
        matrix,
        paths,
        subchannels,
    })
}

/// Matrix form `sqrt(N_T N_R) A_R G A_T^H` of the same channel.
pub fn channel_matrix_form<T: Real>(
    paths: &[PathParams<T>],
    geometry: &ArrayGeometry<T>,
) -> Result<DMatrix<Cplx<T>>> {
    let l = paths.len();
    let mut a_r = DMatrix::zeros(geometry.n_rx, l);
    let mut a_t = DMatrix::zeros(geometry.n_tx, l);
    let mut g = DMatrix::zeros(l, l);
    for (k, p) in paths.iter().enumerate() {
        let ar = steer_rx_nf(p.aoa_rad, p.distance_m, geometry)?;
        let s = p.visibility.to_real::<T>();
        for i in 0..geometry.n_rx {
            a_r[(i, k)] = ar[i] * s[i];
        }
        a_t.set_column(k, &steer_tx(p.aod_rad, geometry));
        g[(k, k)] = p.gain;
    }
    let scale = Cplx::new(
        T::from_usize(geometry.n_tx * geometry.n_rx).unwrap().sqrt(),
        T::zero(),
    );
    Ok(a_r * g * a_t.adjoint() * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Near-field, spatially non-stationary.
    NfSns,
    /// Near-field, spatially stationary.
    NfSs,
    /// Far-field, spatially stationary.
    FfSs,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nf_sns" => Ok(Self::NfSns),
            "nf_ss" => Ok(Self::NfSs),
            "ff_ss" => Ok(Self::FfSs),
            other => invalid(format!("unknown scenario kind '{other}'")),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NfSns => "nf_sns",
            Self::NfSs => "nf_ss",
            Self::FfSs => "ff_ss",
        })
    }
}

/// How departure angles are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AodModel {
    /// Independent uniform on (-pi/2, pi/2).
    Uniform,
    /// Distinct points of the `N_T`-point DFT grid, so transmit steering
    /// vectors of different paths are exactly orthogonal.
    OrthogonalGrid,
}

impl std::str::FromStr for AodModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "orthogonal_grid" => Ok(Self::OrthogonalGrid),
            other => invalid(format!("unknown aod model '{other}'")),
        }
    }
}

impl std::fmt::Display for AodModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::OrthogonalGrid => "orthogonal_grid",
        })
    }
}

/// Per-path visibility fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VrFraction<T> {
    Fixed(T),
    /// Uniform on `[lo, hi]`, independently per path.
    Uniform(T, T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T> {
    pub geometry: ArrayGeometry<T>,
    pub n_paths: usize,
    pub distance_min_m: T,
    pub distance_max_m: T,
    pub ff_distance_m: T,
    pub vr_fraction: VrFraction<T>,
    pub vr_model: VisibilityModel,
    /// `1 -> 0` transition probability used by Markov-sampled masks.
    pub vr_markov_p10: T,
    /// Largest tolerated pairwise VR overlap before a block is redrawn.
    pub vr_max_overlap: f64,
    pub aod_model: AodModel,
    /// Variance of the circularly-symmetric Gaussian path gains.
    pub gain_variance: T,
}

impl<T: Real> ScenarioConfig<T> {
    pub fn new(geometry: ArrayGeometry<T>, n_paths: usize) -> Self {
        Self {
            geometry,
            n_paths,
            distance_min_m: T::lit(2.0),
            distance_max_m: T::lit(10.0),
            ff_distance_m: T::lit(200.0),
            vr_fraction: VrFraction::Fixed(T::lit(0.25)),
            vr_model: VisibilityModel::ContiguousBlock,
            vr_markov_p10: T::lit(0.05),
            vr_max_overlap: 0.5,
            aod_model: AodModel::Uniform,
            gain_variance: T::one(),
        }
    }
}

const MAX_VR_REDRAWS: usize = 1000;

fn open_angle<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    // uniform on the open interval (-pi/2, pi/2)
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return T::lit((u - 0.5) * std::f64::consts::PI);
        }
    }
}

fn complex_gaussian<T: Real, R: Rng + ?Sized>(variance: T, rng: &mut R) -> Cplx<T> {
    let s = (variance.as_f64() * 0.5).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Cplx::new(T::lit(re * s), T::lit(im * s))
}

fn draw_fraction<T: Real, R: Rng + ?Sized>(spec: VrFraction<T>, rng: &mut R) -> T {
    match spec {
        VrFraction::Fixed(f) => f,
        VrFraction::Uniform(lo, hi) => {
            let u: f64 = rng.random();
            T::lit(lo.as_f64() + u * (hi.as_f64() - lo.as_f64()))
        }
    }
}

/// Draws one channel realization of the requested scenario kind.
pub fn make_scenario<T: Real, R: Rng + ?Sized>(
    kind: ScenarioKind,
    config: &ScenarioConfig<T>,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    let geo = &config.geometry;
    let n = geo.n_rx;
    if config.n_paths == 0 {
        return invalid("scenario needs at least one path");
    }
    if !(config.distance_min_m > T::zero() && config.distance_max_m >= config.distance_min_m) {
        return invalid("distance range must satisfy 0 < min <= max");
    }
    match kind {
        ScenarioKind::FfSs => {
            if config.ff_distance_m < T::lit(200.0) {
                return invalid("ff_ss scenarios need a distance of at least 200 m");
            }
        }
        ScenarioKind::NfSns => match config.vr_fraction {
            VrFraction::Fixed(f) if !(f > T::zero() && f < T::one()) => {
                return invalid("nf_sns scenarios need a visibility fraction in (0,1)");
            }
            VrFraction::Uniform(lo, hi) if !(lo > T::zero() && hi <= T::one() && lo <= hi) => {
                return invalid("nf_sns fraction range must lie in (0,1]");
            }
            _ => {}
        },
        ScenarioKind::NfSs => {}
    }
    if config.aod_model == AodModel::OrthogonalGrid && config.n_paths > geo.n_tx {
        return invalid("orthogonal AoD grid cannot host more paths than transmit antennas");
    }

    let aods: Vec<T> = match config.aod_model {
        AodModel::Uniform => (0..config.n_paths).map(|_| open_angle(rng)).collect(),
        AodModel::OrthogonalGrid => {
            // grid points sin(psi) = -1 + 2k/N_T, skipping k = 0 (psi = -pi/2)
            let mut pool: Vec<usize> = (1..geo.n_tx).collect();
            let mut out = Vec::with_capacity(config.n_paths);
            for _ in 0..config.n_paths {
                let i = rng.random_range(0..pool.len());
                let k = pool.swap_remove(i);
                let u = -1.0 + 2.0 * k as f64 / geo.n_tx as f64;
                out.push(T::lit(u.asin()));
            }
            out
        }
    };

    let markov = MarkovPrior::new(T::lit(0.5), config.vr_markov_p10)?;
    let mut paths: Vec<PathParams<T>> = Vec::with_capacity(config.n_paths);
    for aod in aods {
        let gain = complex_gaussian(config.gain_variance, rng);
        let aoa = open_angle(rng);
        let distance = match kind {
            ScenarioKind::FfSs => config.ff_distance_m,
            _ => {
                let u: f64 = rng.random();
                T::lit(
                    config.distance_min_m.as_f64()
                        + u * (config.distance_max_m.as_f64() - config.distance_min_m.as_f64()),
                )
            }
        };
        let visibility = match kind {
            ScenarioKind::NfSns => {
                let fraction = draw_fraction(config.vr_fraction, rng);
                let len = ((fraction.as_f64() * n as f64).round() as usize).clamp(1, n);
                // distinctness is only enforced when it is geometrically achievable
                let min_overlap = (2 * len).saturating_sub(n) as f64 / len as f64;
                let enforce = min_overlap <= config.vr_max_overlap;
                let mut mask = sample_visibility(n, fraction, config.vr_model, &markov, rng)?;
                let mut tries = 0;
                while enforce
                    && tries < MAX_VR_REDRAWS
                    && paths
                        .iter()
                        .any(|p| p.visibility.overlap(&mask) > config.vr_max_overlap)
                {
                    mask = sample_visibility(n, fraction, config.vr_model, &markov, rng)?;
                    tries += 1;
                }
                mask
            }
            _ => VisibilityVector::full(n),
        };
        paths.push(PathParams {
            gain,
            aoa_rad: aoa,
            distance_m: distance,
            aod_rad: aod,
            visibility,
        });
    }
    assemble_channel(paths, geo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geo() -> ArrayGeometry<f64> {
        ArrayGeometry::new(256, 16, 30e9).unwrap()
    }

    #[test]
    fn tx_broadside_is_flat() {
        let a = steer_tx(0.0, &geo());
        for z in a.iter() {
            assert!((z.re - 0.25).abs() < 1e-15 && z.im.abs() < 1e-15);
        }
    }

    #[test]
    fn tx_phase_progression_at_thirty_degrees() {
        let g = ArrayGeometry::new(8, 4, 30e9).unwrap();
        let a = steer_tx(std::f64::consts::FRAC_PI_6, &g);
        let expected = [0.0, -0.5, -1.0, -1.5];
        for (z, e) in a.iter().zip(expected) {
            let target = Cplx::from_polar(0.5, e * std::f64::consts::PI);
            assert!((z - target).norm() < 1e-12);
        }
    }

    #[test]
    fn fresnel_term_at_broadside() {
        let d: f64 = fresnel_path_difference(0.0, 5.0, 100, 0.005);
        assert!((d - 0.025).abs() < 1e-15);
    }

    #[test]
    fn rx_reference_element_has_zero_phase() {
        let a = steer_rx_nf(0.7, 3.0, &geo()).unwrap();
        assert!((a[0].re - 1.0 / 16.0).abs() < 1e-15);
        assert!(a[0].im.abs() < 1e-15);
    }

    #[test]
    fn rx_far_limit() {
        let g = geo();
        let nf = steer_rx_nf(0.4, 1e9, &g).unwrap();
        let ff = steer_rx_ff(0.4, &g);
        for (a, b) in nf.iter().zip(ff.iter()) {
            let dphi = (a / b).arg().abs();
            assert!(dphi < 1e-6);
        }
    }

    #[test]
    fn rx_rejects_non_positive_distance() {
        assert!(steer_rx_nf(0.1, 0.0, &geo()).is_err());
        assert!(steer_rx_nf(0.1, -1.0, &geo()).is_err());
    }

    #[test]
    fn geometry_invariants() {
        let g = geo();
        assert!((g.spacing - g.wavelength / 2.0).abs() < 1e-18);
        assert!(ArrayGeometry::<f64>::new(16, 16, 30e9).is_err());
        assert!(ArrayGeometry::<f64>::new(16, 0, 30e9).is_err());
    }

    #[test]
    fn block_visibility_has_exact_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prior = MarkovPrior::new(0.5, 0.05).unwrap();
        for _ in 0..50 {
            let v = sample_visibility(
                256,
                0.25,
                VisibilityModel::ContiguousBlock,
                &prior,
                &mut rng,
            )
            .unwrap();
            assert_eq!(v.count(), 64);
            let first = v.mask.iter().position(|&b| b).unwrap();
            assert!(v.mask[first..first + 64].iter().all(|&b| b));
        }
        let full = sample_visibility(256, 1.0, VisibilityModel::Markov, &prior, &mut rng).unwrap();
        assert!(full.is_full());
        assert!(sample_visibility(256, 0.0, VisibilityModel::Markov, &prior, &mut rng).is_err());
        assert!(sample_visibility(256, 1.5, VisibilityModel::Markov, &prior, &mut rng).is_err());
    }

    #[test]
    fn markov_visibility_matches_stationary_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let prior = MarkovPrior::new(0.5, 0.05).unwrap();
        let mut ones = 0usize;
        let mut total = 0usize;
        // 10^5 antenna draws in chains of length 1000
        for _ in 0..100 {
            let v =
                sample_visibility(1000, 0.25, VisibilityModel::Markov, &prior, &mut rng).unwrap();
            ones += v.count();
            total += v.len();
        }
        let frac = ones as f64 / total as f64;
        assert!((frac - 0.25).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn single_full_path_is_rank_one_outer_product() {
        let g = geo();
        let p = PathParams {
            gain: Cplx::new(1.0, 0.0),
            aoa_rad: 0.3,
            distance_m: 6.0,
            aod_rad: -0.2,
            visibility: VisibilityVector::full(256),
        };
        let ch = assemble_channel(vec![p], &g).unwrap();
        let expected = steer_rx_nf(0.3, 6.0, &g).unwrap()
            * steer_tx(-0.2, &g).adjoint()
            * Cplx::new(64.0, 0.0);
        assert!((&ch.matrix - expected).norm() < 1e-12);
        let sv = ch.matrix.clone().singular_values();
        assert!(sv[1] / sv[0] < 1e-12);
    }

    #[test]
    fn path_sum_and_matrix_form_agree() {
        let g = geo();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ScenarioConfig::new(g, 4);
        let ch = make_scenario(ScenarioKind::NfSns, &cfg, &mut rng).unwrap();
        let mf = channel_matrix_form(&ch.paths, &g).unwrap();
        assert!((&ch.matrix - mf).norm() < 1e-12 * ch.matrix.norm().max(1.0));
        let sv = ch.matrix.clone().singular_values();
        assert!(sv[4] / sv[0] < 1e-10, "rank must not exceed 4");
    }

    #[test]
    fn mismatched_mask_is_rejected() {
        let g = geo();
        let p = PathParams {
            gain: Cplx::new(1.0, 0.0),
            aoa_rad: 0.1,
            distance_m: 5.0,
            aod_rad: 0.0,
            visibility: VisibilityVector::full(10),
        };
        assert!(matches!(
            assemble_channel(vec![p], &g),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(assemble_channel::<f64>(vec![], &g).is_err());
    }

    #[test]
    fn scenario_kinds() {
        let g = geo();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = ScenarioConfig::new(g, 4);
        let ff = make_scenario(ScenarioKind::FfSs, &cfg, &mut rng).unwrap();
        assert!(ff
            .paths
            .iter()
            .all(|p| p.visibility.is_full() && p.distance_m >= 200.0));
        let ss = make_scenario(ScenarioKind::NfSs, &cfg, &mut rng).unwrap();
        assert!(ss
            .paths
            .iter()
            .all(|p| p.visibility.is_full() && p.distance_m <= 10.0));
        let sns = make_scenario(ScenarioKind::NfSns, &cfg, &mut rng).unwrap();
        for (i, p) in sns.paths.iter().enumerate() {
            assert_eq!(p.visibility.count(), 64);
            for q in &sns.paths[..i] {
                assert!(p.visibility.overlap(&q.visibility) <= 0.5);
            }
        }
        let mut bad = cfg.clone();
        bad.vr_fraction = VrFraction::Fixed(1.0);
        assert!(make_scenario(ScenarioKind::NfSns, &bad, &mut rng).is_err());
        let mut near = cfg.clone();
        near.ff_distance_m = 50.0;
        assert!(make_scenario(ScenarioKind::FfSs, &near, &mut rng).is_err());
    }

    #[test]
    fn orthogonal_grid_aods_are_orthogonal() {
        let g = geo();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut cfg = ScenarioConfig::new(g, 4);
        cfg.aod_model = AodModel::OrthogonalGrid;
        let ch = make_scenario(ScenarioKind::NfSns, &cfg, &mut rng).unwrap();
        for i in 0..4 {
            for j in 0..i {
                let a = steer_tx(ch.paths[i].aod_rad, &g);
                let b = steer_tx(ch.paths[j].aod_rad, &g);
                assert!(a.dotc(&b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn scenarios_are_deterministic_under_seed() {
        let g = geo();
        let cfg = ScenarioConfig::new(g, 4);
        let a =
            make_scenario(ScenarioKind::NfSns, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b =
            make_scenario(ScenarioKind::NfSns, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }
}
