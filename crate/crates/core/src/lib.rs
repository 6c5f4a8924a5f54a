//! DFT-s-OFDM with frequency-domain spectral shaping (FDSS) and spectrum
//! extension (SE): waveform synthesis, PAPR and cubic-metric measurement,
//! analytic PAPR bounds and optimal shifts, fading channels with an
//! MRC+MMSE receiver, effective-SINR rate analysis and SE-size search.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod bounds;
pub mod channel;
pub mod constellation;
pub mod error;
pub mod metrics;
pub mod optimizer;
pub mod receiver;
pub mod rng;
pub mod scalar;
pub mod waveform;
pub mod window;

pub use constellation::ConstellationKind;
pub use error::{Error, Result};
pub use scalar::Real;
pub use waveform::WaveformConfig;

pub type Constellation = constellation::Constellation<f64>;
pub type Window = window::FdssWindow<f64>;
pub type OfdmSymbol = waveform::OfdmSymbol<f64>;
pub type Modulator = waveform::Modulator<f64>;
pub type ChannelRealization = channel::ChannelRealization<f64>;
pub type CombinedGains = receiver::CombinedGains<f64>;
pub type PaprSimulation = metrics::PaprSimulation<f64>;
pub type LinkSimulation = receiver::LinkSimulation<f64>;
pub type PaprSearch = optimizer::PaprSearch<f64>;
pub type CapaSearch = optimizer::CapaSearch<f64>;

/// Single-precision instantiations, mainly for faster Monte Carlo.
pub mod f32 {
    pub type Constellation = crate::constellation::Constellation<f32>;
    pub type Window = crate::window::FdssWindow<f32>;
    pub type Modulator = crate::waveform::Modulator<f32>;
    pub type PaprSimulation = crate::metrics::PaprSimulation<f32>;
    pub type PaprSearch = crate::optimizer::PaprSearch<f32>;
}
