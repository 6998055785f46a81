//! Near-field spatially non-stationary XL-MIMO channel synthesis, the
//! two-phase pilot front end, and three-layer GAMP (TL-GAMP) subchannel
//! estimation.
//!
//! Every numerical routine is generic over the real scalar ([`Real`], `f32`
//! or `f64`); the aliases at the bottom of this file fix it to `f64`.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod frontend;
pub mod gamp;
pub mod markov;
pub mod metrics;
pub mod scalar;

pub use baselines::{frozen_support_run, oracle_vr_run, BaselineKind, LsEstimator};
pub use channel::{
    assemble_channel, channel_matrix_form, make_scenario, sample_visibility, steer_rx_ff,
    steer_rx_nf, steer_tx, AodModel, ArrayGeometry, ChannelRealization, PathParams, ScenarioConfig,
    ScenarioKind, VisibilityModel, VisibilityVector, VrFraction,
};
pub use error::{Error, Result};
pub use frontend::{
    beam_align_observe, build_dictionary, estimate_aods_grid, gen_combiners,
    noise_variance_for_snr, phase_one_beams, receive_snr_db, simulate_subframe, AngularDictionary,
    AodEstimate, CombinerSet, NoiseModel, Preprocessor, Subframe, WhitenedObservation,
};
pub use gamp::{
    assemble_full_channel, run_subchannel_estimation, run_with_control, GampConfig, GampState,
    Layer2Control, SubchannelEstimate, TraceRow, UpdateMode, XMessage,
};
pub use markov::MarkovPrior;
pub use metrics::{nmse, nmse_db, vr_metrics, VrMetrics};
pub use scalar::{Cplx, Real};

pub type C64 = Cplx<f64>;
pub type ArrayGeometryF64 = ArrayGeometry<f64>;
pub type ScenarioConfigF64 = ScenarioConfig<f64>;
pub type ChannelF64 = ChannelRealization<f64>;
pub type CombinerSetF64 = CombinerSet<f64>;
pub type NoiseModelF64 = NoiseModel<f64>;
pub type PreprocessorF64 = Preprocessor<f64>;
pub type ObservationF64 = WhitenedObservation<f64>;
pub type DictionaryF64 = AngularDictionary<f64>;
pub type EstimateF64 = SubchannelEstimate<f64>;
pub type MarkovPriorF64 = MarkovPrior<f64>;
pub type LsEstimatorF64 = LsEstimator<f64>;
