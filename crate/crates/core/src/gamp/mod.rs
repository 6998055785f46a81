//! Three-layer GAMP subchannel estimator.
//!
//! Layer 1 models the angular coefficients `c` with a Gamma-Gaussian prior
//! and maps them to the antenna domain through `x = D c`. Layer 2 couples the
//! per-antenna visibility indicators with a Markov chain. Layer 3 handles the
//! linear measurement `r = A t + n` with `t_n = s_n x_n`.

mod layer1;
mod layer2;
mod layer3;
pub mod messages;

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

pub use layer1::Layer1State;
pub use layer2::{Layer2Control, Layer2State};
pub use layer3::Layer3State;

use crate::channel::steer_tx;
use crate::channel::ArrayGeometry;
use crate::error::{invalid, Error, Result};
use crate::frontend::WhitenedObservation;
use crate::markov::MarkovPrior;
use crate::scalar::{abs2, is_finite_c, Cplx, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Large-system approximations: one matrix-vector product per direction.
    #[default]
    VectorizedApprox,
    /// Full per-edge message bookkeeping.
    EdgeExact,
}

impl FromStr for UpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vectorized" | "vectorized_approx" => Ok(Self::VectorizedApprox),
            "edge_exact" => Ok(Self::EdgeExact),
            other => invalid(format!("unknown update mode `{other}`")),
        }
    }
}

impl std::fmt::Display for UpdateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::VectorizedApprox => "vectorized",
            Self::EdgeExact => "edge_exact",
        })
    }
}

/// Form of the message from the visibility layer into the angular layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XMessage {
    /// The likelihood message of `t_n`, passed through unchanged.
    Direct,
    /// Support-weighted Gaussian projection: antennas believed invisible
    /// stop constraining the angular coefficients.
    #[default]
    Projected,
}

impl FromStr for XMessage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "projected" => Ok(Self::Projected),
            other => invalid(format!("unknown x message form `{other}`")),
        }
    }
}

impl std::fmt::Display for XMessage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Projected => "projected",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GampConfig {
    pub xi: f64,
    pub eta: f64,
    pub p10: f64,
    pub phi_init: f64,
    pub max_iter: usize,
    /// Stop once `|t_new - t_old| / |t_old|` drops below this.
    pub tol: f64,
    pub prob_clamp: f64,
    pub var_floor: f64,
    pub mode: UpdateMode,
    pub x_message: XMessage,
    /// Largest factor by which the projected message may be wider than the
    /// likelihood message of `t_n`.
    pub x_inflation_cap: f64,
    /// Weight of the new extrinsic message; 1 disables damping.
    pub damping: f64,
    pub onsager: bool,
    /// Initial variance of the coefficient and subchannel beliefs; `None`
    /// picks `|r|^2 / |A|_F^2`.
    pub init_var: Option<f64>,
    /// Starting noise precision; `None` uses `M / |r|^2`.
    pub beta_init: Option<f64>,
    /// Upper bound on the learned noise precision. Whitened noise has unit
    /// precision, so the default is 1; `None` leaves it free.
    pub beta_max: Option<f64>,
    /// Keep a copy of `t_hat` after every iteration.
    pub keep_history: bool,
}

impl Default for GampConfig {
    fn default() -> Self {
        Self {
            xi: 0.01,
            eta: 1e-6,
            p10: 0.05,
            phi_init: 0.5,
            max_iter: 20,
            tol: 1e-5,
            prob_clamp: 1e-12,
            var_floor: 1e-14,
            mode: UpdateMode::VectorizedApprox,
            x_message: XMessage::Projected,
            x_inflation_cap: 3.0,
            damping: 0.6,
            onsager: true,
            init_var: Some(1.0),
            beta_init: Some(1.0),
            beta_max: Some(1.0),
            keep_history: false,
        }
    }
}

impl GampConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                invalid(format!("gamp.{name} must be positive and finite, got {v}"))
            }
        };
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return invalid(format!(
                "gamp.xi must be finite and non-negative, got {}",
                self.xi
            ));
        }
        pos(self.eta, "eta")?;
        pos(self.tol, "tol")?;
        pos(self.var_floor, "var_floor")?;
        if !(self.x_inflation_cap.is_finite() && self.x_inflation_cap >= 1.0) {
            return invalid(format!(
                "gamp.x_inflation_cap must be finite and at least 1, got {}",
                self.x_inflation_cap
            ));
        }
        if let Some(v) = self.init_var {
            pos(v, "init_var")?;
        }
        if let Some(v) = self.beta_init {
            pos(v, "beta_init")?;
        }
        if let Some(v) = self.beta_max {
            pos(v, "beta_max")?;
        }
        if !(self.p10 > 0.0 && self.p10 < 1.0) {
            return invalid(format!("gamp.p10 must lie in (0, 1), got {}", self.p10));
        }
        if !(self.phi_init > 0.0 && self.phi_init < 1.0) {
            return invalid(format!(
                "gamp.phi_init must lie in (0, 1), got {}",
                self.phi_init
            ));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return invalid(format!(
                "gamp.prob_clamp must lie in (0, 0.5), got {}",
                self.prob_clamp
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return invalid(format!(
                "gamp.damping must lie in (0, 1], got {}",
                self.damping
            ));
        }
        if self.max_iter == 0 {
            return invalid("gamp.max_iter must be at least 1");
        }
        // p01 must stay a probability
        MarkovPrior::new(self.phi_init, self.p10)?;
        Ok(())
    }
}

/// Scalar parameters in the working precision.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Params<T> {
    pub xi: T,
    pub eta: T,
    pub var_floor: T,
    pub onsager: bool,
    pub damping: T,
    /// Smallest admissible leave-one-out precision, relative to the posterior.
    pub loo_guard: T,
    pub x_cap: T,
    pub beta_max: Option<T>,
}

impl<T: Real> Params<T> {
    fn from_config(cfg: &GampConfig) -> Self {
        Self {
            xi: T::lit(cfg.xi),
            eta: T::lit(cfg.eta),
            var_floor: T::lit(cfg.var_floor),
            onsager: cfg.onsager,
            damping: T::lit(cfg.damping),
            loo_guard: T::lit(1e-2),
            x_cap: T::lit(cfg.x_inflation_cap),
            beta_max: cfg.beta_max.map(T::lit),
        }
    }

    #[inline]
    pub fn damp(&self, new: T, old: T) -> T {
        self.damping * new + (T::one() - self.damping) * old
    }

    #[inline]
    pub fn damp_c(&self, new: Cplx<T>, old: Cplx<T>) -> Cplx<T> {
        new * self.damping + old * (T::one() - self.damping)
    }
}

/// Factor-to-variable messages of a dense linear factor, one per edge, in
/// precision form.
#[derive(Debug, Clone)]
pub(crate) struct EdgeMessages<T: Real> {
    /// `prec[(i, k)]`: precision sent from factor `i` to variable `k`.
    pub prec: DMatrix<T>,
    /// Precision-weighted mean of the same message.
    pub pmean: DMatrix<Cplx<T>>,
}

impl<T: Real> EdgeMessages<T> {
    pub fn new(factors: usize, variables: usize, init_prec: T) -> Self {
        Self {
            prec: DMatrix::from_element(factors, variables, init_prec),
            pmean: DMatrix::from_element(factors, variables, Cplx::new(T::zero(), T::zero())),
        }
    }

    /// Variable-to-factor messages: the posterior with the edge's own
    /// contribution divided out.
    pub fn leave_one_out(
        &self,
        mean: &DVector<Cplx<T>>,
        var: &DVector<T>,
        p: &Params<T>,
    ) -> (DMatrix<Cplx<T>>, DMatrix<T>) {
        let (f, v) = self.prec.shape();
        let mut m_out = DMatrix::from_element(f, v, Cplx::new(T::zero(), T::zero()));
        let mut v_out = DMatrix::from_element(f, v, T::zero());
        for k in 0..v {
            let post_prec = T::one() / var[k].max(p.var_floor);
            let post_pm = mean[k] * post_prec;
            let guard = post_prec * p.loo_guard;
            for i in 0..f {
                let prec = (post_prec - self.prec[(i, k)]).max(guard);
                let vv = T::one() / prec;
                v_out[(i, k)] = vv;
                m_out[(i, k)] = (post_pm - self.pmean[(i, k)]) * vv;
            }
        }
        (m_out, v_out)
    }

    /// Product of all incoming messages at each variable.
    pub fn aggregate(&self, p: &Params<T>) -> (DVector<Cplx<T>>, DVector<T>) {
        let (f, v) = self.prec.shape();
        let mut mean = DVector::from_element(v, Cplx::new(T::zero(), T::zero()));
        let mut var = DVector::from_element(v, T::zero());
        for k in 0..v {
            let mut prec = T::zero();
            let mut pm = Cplx::new(T::zero(), T::zero());
            for i in 0..f {
                prec += self.prec[(i, k)];
                pm += self.pmean[(i, k)];
            }
            let vv = (T::one() / prec).max(p.var_floor);
            var[k] = vv;
            mean[k] = pm * vv;
        }
        (mean, var)
    }
}

/// All messages of one estimator instance.
#[derive(Debug, Clone)]
pub struct GampState<T: Real> {
    pub layer1: Layer1State<T>,
    pub layer2: Layer2State<T>,
    pub layer3: Layer3State<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// NaN when no truth was supplied.
    pub nmse: f64,
    pub beta_hat: f64,
    pub mean_belief: f64,
}

#[derive(Debug, Clone)]
pub struct SubchannelEstimate<T: Real> {
    pub t_hat: DVector<Cplx<T>>,
    pub t_var: DVector<T>,
    pub s_belief: DVector<T>,
    pub pi_in: DVector<T>,
    pub c_hat: DVector<Cplx<T>>,
    pub beta_hat: T,
    pub trace: Vec<TraceRow>,
    pub iters_run: usize,
    pub converged: bool,
    pub diverged: bool,
    /// `t_hat` after each iteration when `keep_history` is set.
    pub history: Vec<DVector<Cplx<T>>>,
}

impl<T: Real> SubchannelEstimate<T> {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,nmse,beta_hat,mean_belief\n");
        for row in &self.trace {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:.6}",
                row.iteration, row.nmse, row.beta_hat, row.mean_belief
            );
        }
        out
    }
}

fn sq_norm<T: Real>(v: &DVector<Cplx<T>>) -> f64 {
    v.iter().map(|z| abs2(*z).as_f64()).sum()
}

fn rel_nmse<T: Real>(est: &DVector<Cplx<T>>, truth: &DVector<Cplx<T>>) -> f64 {
    let den = sq_norm(truth);
    let num: f64 = est
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| abs2(*a - *b).as_f64())
        .sum();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn all_finite<T: Real>(s: &GampState<T>) -> bool {
    s.layer3.t_hat.iter().all(|z| is_finite_c(*z))
        && s.layer3.t_var.iter().all(|v| v.is_finite_val())
        && s.layer3.beta_hat.is_finite_val()
        && s.layer1.c_hat.iter().all(|z| is_finite_c(*z))
        && s.layer2.s_belief.iter().all(|v| v.is_finite_val())
}

fn snapshot<T: Real>(s: &GampState<T>, c: &DVector<Cplx<T>>) -> Snapshot<T> {
    Snapshot {
        t_hat: s.layer3.t_hat.clone(),
        t_var: s.layer3.t_var.clone(),
        s_belief: s.layer2.s_belief.clone(),
        pi_in: s.layer2.pi_in.clone(),
        c_hat: c.clone(),
        beta_hat: s.layer3.beta_hat,
    }
}

struct Snapshot<T: Real> {
    t_hat: DVector<Cplx<T>>,
    t_var: DVector<T>,
    s_belief: DVector<T>,
    pi_in: DVector<T>,
    c_hat: DVector<Cplx<T>>,
    beta_hat: T,
}

/// Runs TL-GAMP on one whitened subchannel observation.
pub fn run_subchannel_estimation<T: Real>(
    obs: &WhitenedObservation<T>,
    cfg: &GampConfig,
    truth: Option<&DVector<Cplx<T>>>,
) -> Result<SubchannelEstimate<T>> {
    run_with_control(obs, cfg, truth, &Layer2Control::Adaptive)
}

/// As [`run_subchannel_estimation`] with explicit control of the visibility layer.
pub fn run_with_control<T: Real>(
    obs: &WhitenedObservation<T>,
    cfg: &GampConfig,
    truth: Option<&DVector<Cplx<T>>>,
    control: &Layer2Control<T>,
) -> Result<SubchannelEstimate<T>> {
    cfg.validate()?;
    let (m, n, q) = (obs.m(), obs.n(), obs.q());
    if let Some(t) = truth {
        if t.len() != n {
            return Err(Error::DimensionMismatch {
                what: "truth length",
                expected: n,
                got: t.len(),
            });
        }
    }
    if let Layer2Control::Frozen(v) = control {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                what: "frozen support prior length",
                expected: n,
                got: v.len(),
            });
        }
    }
    if m == 0 || n == 0 || q == 0 {
        return invalid("empty observation");
    }
    let p = Params::<T>::from_config(cfg);
    let eps = T::lit(cfg.prob_clamp);
    let prior = MarkovPrior::new(T::lit(cfg.phi_init), T::lit(cfg.p10))?;
    let a = obs.a_matrix.as_ref();
    let d = obs.dictionary.as_ref();
    let a_abs2 = a.map(abs2);
    let d_abs2 = d.map(abs2);
    let r = &obs.r;

    let init_var = match cfg.init_var {
        Some(v) => T::lit(v),
        None => {
            let a_energy: f64 = a_abs2.iter().map(|v| v.as_f64()).sum();
            let auto = sq_norm(r) / a_energy;
            T::lit(if auto.is_finite() && auto > cfg.var_floor {
                auto
            } else {
                1.0
            })
        }
    };
    let mut state = GampState {
        layer1: Layer1State::new(n, q, cfg.mode, init_var),
        layer2: Layer2State::new(n, T::lit(cfg.phi_init), control, eps, init_var),
        layer3: Layer3State::new(
            r,
            n,
            cfg.mode,
            init_var,
            cfg.beta_init.map(T::lit),
            p.var_floor,
        ),
    };

    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut history = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    let mut iters_run = 0;
    // the all-zero initial estimate has NMSE exactly 1
    let mut best_nmse = 1.0;
    let mut best = snapshot(&state, &state.layer1.c_hat);
    let mut last_finite = snapshot(&state, &state.layer1.c_hat);

    for it in 1..=cfg.max_iter {
        let t_old = state.layer3.t_hat.clone();
        let l2 = &mut state.layer2;
        state
            .layer1
            .update(&l2.x_in_mean, &l2.x_in_var, d, &d_abs2, &p);
        // before the first measurement pass there is no likelihood on t to weigh
        if it > 1 {
            l2.update(
                &state.layer3.t_ext_mean,
                &state.layer3.t_ext_var,
                &state.layer1.x_out_mean,
                &state.layer1.x_out_var,
                &prior,
                control,
                eps,
                cfg.x_message,
                p.x_cap,
            );
        }
        state.layer3.update(
            &l2.pi_in,
            &state.layer1.x_out_mean,
            &state.layer1.x_out_var,
            a,
            &a_abs2,
            r,
            &p,
        );
        iters_run = it;

        if !all_finite(&state) {
            diverged = true;
            break;
        }
        let nmse = truth.map_or(f64::NAN, |t| rel_nmse(&state.layer3.t_hat, t));
        let mean_belief = state
            .layer2
            .s_belief
            .iter()
            .map(|v| v.as_f64())
            .sum::<f64>()
            / n as f64;
        trace.push(TraceRow {
            iteration: it,
            nmse,
            beta_hat: state.layer3.beta_hat.as_f64(),
            mean_belief,
        });
        if cfg.keep_history {
            history.push(state.layer3.t_hat.clone());
        }
        last_finite = snapshot(&state, &state.layer1.c_hat);
        if nmse.is_finite() {
            if nmse < best_nmse {
                best_nmse = nmse;
                best = snapshot(&state, &state.layer1.c_hat);
            }
            if nmse > 10.0 {
                diverged = true;
                break;
            }
        }
        let change = rel_nmse(&state.layer3.t_hat, &t_old).sqrt();
        if sq_norm(&t_old) > 0.0 && change < cfg.tol {
            converged = true;
            break;
        }
    }

    let out = if diverged {
        if truth.is_some() {
            best
        } else {
            last_finite
        }
    } else {
        last_finite
    };
    Ok(SubchannelEstimate {
        t_hat: out.t_hat,
        t_var: out.t_var,
        s_belief: out.s_belief,
        pi_in: out.pi_in,
        c_hat: out.c_hat,
        beta_hat: out.beta_hat,
        trace,
        iters_run,
        converged,
        diverged,
        history,
    })
}

/// `H_hat = sum_l t_l a_T(psi_l)^H`.
pub fn assemble_full_channel<T: Real>(
    subchannels: &[DVector<Cplx<T>>],
    aods: &[T],
    geometry: &ArrayGeometry<T>,
) -> Result<DMatrix<Cplx<T>>> {
    if subchannels.len() != aods.len() {
        return Err(Error::DimensionMismatch {
            what: "subchannel estimates vs AoDs",
            expected: aods.len(),
            got: subchannels.len(),
        });
    }
    let mut h = DMatrix::zeros(geometry.n_rx, geometry.n_tx);
    for (t, &psi) in subchannels.iter().zip(aods) {
        if t.len() != geometry.n_rx {
            return Err(Error::DimensionMismatch {
                what: "subchannel length",
                expected: geometry.n_rx,
                got: t.len(),
            });
        }
        h += t * steer_tx(psi, geometry).adjoint();
    }
    Ok(h)
}
