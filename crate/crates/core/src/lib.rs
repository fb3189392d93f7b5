//! Passive ranging of a moving acoustic source from a single receiver's
//! spectrogram using the waveguide invariant.
//!
//! The crate is organized as a pipeline: [`spectral`] turns pressure into
//! calibrated spectrograms, [`striation`] maps them onto candidate striations,
//! [`inference`] scores candidates by likelihood, [`baselines`] provides the
//! slope-based and tonal-only comparison methods, [`simulate`] generates
//! ground-truth data and [`tracks`] turns position logs into range-rate
//! profiles. [`montecarlo`] ties them together for benchmark sweeps.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod baselines;
pub mod error;
pub mod inference;
pub mod montecarlo;
pub mod simulate;
pub mod spectral;
pub mod striation;
pub mod tracks;

pub use error::{Error, Result};
pub use inference::{ml_estimate, LikelihoodResult, MlOptions, Search};
pub use simulate::{synth_spectrogram, ChannelModel, GroundTruth, SimConfig};
pub use spectral::{partition_band, BandPartition, NoiseProfile, Spectrogram, TimeSeries};
pub use striation::{ParamVector, RangeAxis, RateProfile, StriationGrid};
