//! AWGN and tapped-delay-line Rayleigh block-fading channels.
//!
//! Tap delays are scaled by the delay spread and rounded to the nearest
//! sample at rate `Nfft·scs`; taps that land on the same sample are merged
//! with their powers summed. The allocation occupies subcarriers
//! `0..Nsc` of the FFT grid.

use std::sync::OnceLock;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cis, from_usize, lit, Real};
use crate::waveform::WaveformConfig;
use crate::window::FdssWindow;

const TDL_C_TABLE: &str = include_str!("../data/tdl_c.csv");

#[derive(Deserialize)]
struct TableRow {
    #[allow(dead_code)]
    tap: usize,
    normalized_delay: f64,
    power_db: f64,
}

/// TDL-C `(normalized delay, power dB)` pairs.
pub fn tdl_c_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(TDL_C_TABLE.as_bytes())
            .deserialize::<TableRow>()
            .map(|r| {
                let r = r.expect("bundled TDL-C table is well formed");
                (r.normalized_delay, r.power_db)
            })
            .collect()
    })
}

/// Channel model in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChannelProfile {
    Awgn,
    TdlC { delay_spread_s: f64, scs_hz: f64 },
}

/// Config-file form: `{kind="awgn"}` or `{kind="tdlc", delay_spread_ns=300, scs_khz=15}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChannelSpec {
    Awgn,
    Tdlc { delay_spread_ns: f64, scs_khz: f64 },
}

impl ChannelSpec {
    pub fn profile(&self) -> Result<ChannelProfile> {
        let p = match *self {
            ChannelSpec::Awgn => ChannelProfile::Awgn,
            ChannelSpec::Tdlc { delay_spread_ns, scs_khz } => ChannelProfile::TdlC {
                delay_spread_s: delay_spread_ns * 1e-9,
                scs_hz: scs_khz * 1e3,
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn label(&self) -> String {
        match self {
            ChannelSpec::Awgn => "awgn".into(),
            ChannelSpec::Tdlc { delay_spread_ns, .. } => format!("tdlc-{delay_spread_ns}ns"),
        }
    }
}

impl ChannelProfile {
    pub fn tdl_c(delay_spread_s: f64, scs_hz: f64) -> Result<Self> {
        let p = ChannelProfile::TdlC { delay_spread_s, scs_hz };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if let ChannelProfile::TdlC { delay_spread_s, scs_hz } = *self {
            if !(delay_spread_s >= 0.0 && delay_spread_s.is_finite()) {
                return Err(Error::invalid("delay_spread", format!("{delay_spread_s} s is not a valid spread")));
            }
            if !(scs_hz > 0.0 && scs_hz.is_finite()) {
                return Err(Error::invalid("scs", format!("{scs_hz} Hz is not a valid spacing")));
            }
        }
        Ok(())
    }

    /// Physical taps `(delay in seconds, linear power)`, powers summing to one.
    pub fn taps(&self) -> Vec<(f64, f64)> {
        match *self {
            ChannelProfile::Awgn => vec![(0.0, 1.0)],
            ChannelProfile::TdlC { delay_spread_s, .. } => {
                let table = tdl_c_table();
                let total: f64 = table.iter().map(|&(_, p)| 10f64.powf(p / 10.0)).sum();
                table
                    .iter()
                    .map(|&(d, p)| (d * delay_spread_s, 10f64.powf(p / 10.0) / total))
                    .collect()
            }
        }
    }

    /// Maps the taps onto the sample grid of `cfg`.
    pub fn sampled(&self, cfg: &WaveformConfig) -> Result<SampledProfile> {
        self.validate()?;
        cfg.validate()?;
        let mut merged: Vec<(usize, f64)> = Vec::new();
        let rate = match *self {
            ChannelProfile::Awgn => 0.0,
            ChannelProfile::TdlC { scs_hz, .. } => cfg.nfft as f64 * scs_hz,
        };
        for (delay, power) in self.taps() {
            let n = (delay * rate).round() as usize;
            match merged.iter_mut().find(|(d, _)| *d == n) {
                Some(slot) => slot.1 += power,
                None => merged.push((n, power)),
            }
        }
        merged.sort_by_key(|&(d, _)| d);
        let max_delay = merged.last().map_or(0, |&(d, _)| d);
        if max_delay > 0 && max_delay >= cfg.ncp {
            return Err(Error::DelayExceedsCp {
                delay: max_delay,
                ncp: cfg.ncp,
            });
        }
        Ok(SampledProfile {
            delays: merged.iter().map(|&(d, _)| d).collect(),
            powers: merged.iter().map(|&(_, p)| p).collect(),
            nfft: cfg.nfft,
            nsc: cfg.nsc,
            fading: !matches!(self, ChannelProfile::Awgn),
        })
    }
}

/// Tap profile on the sample grid of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledProfile {
    delays: Vec<usize>,
    powers: Vec<f64>,
    nfft: usize,
    nsc: usize,
    fading: bool,
}

impl SampledProfile {
    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Whether realizations are random (false for AWGN).
    pub fn is_fading(&self) -> bool {
        self.fading
    }

    /// One block-fading realization. AWGN consumes no randomness.
    pub fn realize<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization<T> {
        let taps: Vec<Complex<T>> = if !self.fading {
            vec![Complex::new(T::one(), T::zero())]
        } else {
            self.powers
                .iter()
                .map(|&p| {
                    let s = (p / 2.0).sqrt();
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex::new(lit(re * s), lit(im * s))
                })
                .collect()
        };
        ChannelRealization::from_taps(taps, self.delays.clone(), self.nfft, self.nsc)
    }
}

/// One channel draw: complex taps and the per-subcarrier response `H̄[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization<T> {
    pub taps: Vec<Complex<T>>,
    pub delays: Vec<usize>,
    pub freq_response: Vec<Complex<T>>,
}

impl<T: Real> ChannelRealization<T> {
    /// `H̄[k] = Σ_p h_p·exp(−j2πk·d_p/Nfft)` for `k = 0..nsc`.
    pub fn from_taps(taps: Vec<Complex<T>>, delays: Vec<usize>, nfft: usize, nsc: usize) -> Self {
        let two_pi = lit::<T>(2.0) * T::PI();
        let freq_response = (0..nsc)
            .map(|k| {
                taps.iter()
                    .zip(&delays)
                    .map(|(&h, &d)| h * cis(-two_pi * from_usize::<T>((k * d) % nfft) / from_usize::<T>(nfft)))
                    .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
            })
            .collect();
        ChannelRealization {
            taps,
            delays,
            freq_response,
        }
    }

    /// Identity channel over `nsc` subcarriers.
    pub fn identity(nsc: usize) -> Self {
        Self::from_taps(vec![Complex::new(T::one(), T::zero())], vec![0], 1, nsc)
    }

    pub fn total_power(&self) -> T {
        self.taps.iter().map(|h| h.norm_sqr()).sum()
    }
}

/// One realization of `profile` on the grid of `cfg`.
pub fn realize<T: Real, R: Rng + ?Sized>(
    profile: &ChannelProfile,
    cfg: &WaveformConfig,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    Ok(profile.sampled(cfg)?.realize(rng))
}

/// `H[k] = √snr·W[k]·H̄[k]`.
pub fn effective_subcarrier_gain<T: Real>(
    re: &ChannelRealization<T>,
    w: &FdssWindow<T>,
    snr: T,
) -> Result<Vec<Complex<T>>> {
    if re.freq_response.len() != w.nsc() {
        return Err(Error::DimensionMismatch {
            what: "channel response",
            expected: w.nsc(),
            got: re.freq_response.len(),
        });
    }
    if !(snr >= T::zero()) {
        return Err(Error::invalid("snr", "linear SNR must be non-negative"));
    }
    let g = snr.sqrt();
    Ok(re
        .freq_response
        .iter()
        .zip(w.coeffs())
        .map(|(&h, &c)| h * (g * c))
        .collect())
}
