//! Single-channel speech enhancement: modulation-domain Kalman filtering in the
//! amplitude and log-power domains, classical spectral gain rules, late
//! reverberation suppression and weighted-prediction-error dereverberation,
//! plus the degradation and metric tooling used to evaluate them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod armodel;
pub mod dereverb;
pub mod error;
pub mod evalkit;
pub mod gainrules;
pub mod modkf;
pub mod stft;

pub use error::{Error, Result};
pub use armodel::ArModel;
pub use dereverb::{LrsvConfig, RirParams, WpeConfig};
pub use evalkit::MetricReport;
pub use gainrules::{BaselineConfig, GainMethod, SnrPair};
pub use modkf::{KfState, ModKfConfig, ModKfVariant, NoiseState, ObservationModel, PhaseModel};
pub use stft::{RealSpectrogram, SpectralDomain, Spectrogram, StftGeometry, WindowKind};
