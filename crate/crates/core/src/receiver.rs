//! Frequency-domain receiver for DFT-s-OFDM with spectrum extension.
//!
//! ```text
//! y ──FFT/√Nfft──▶ Y[k] ──×H*[k]──▶ R[k] ──fold k+Ndata onto k──▶ R̃[k]
//!   ──/(G[k]+1)──▶ unshift by L ──IDFT/√Ndata──▶ r[m]
//! ```
//!
//! With perfect CSI and unit-variance frequency-domain noise, every
//! demodulated symbol is `r[m] = g0·x[m] + ICI + noise`, and the effective
//! SINR `g0/(1−g0)` follows from the combined gains
//! `G[k] = |H[k]|² + |H[k+Ndata]|²` (first `Ne` bins) or `|H[k]|²`.

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::channel::{effective_subcarrier_gain, SampledProfile};
use crate::constellation::{Constellation, ConstellationKind};
use crate::error::{Error, Result};
use crate::rng::{trial_rng, Stream, TrialRng};
use crate::scalar::{cis, compensated_sum, from_db10, from_usize, lit, to_f64, Real};
use crate::waveform::{ModWorkspace, Modulator, WaveformConfig};
use crate::window::FdssWindow;

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

/// `Y[k] = (1/√Nfft) Σ_n y[n]·exp(−j2πkn/Nfft)` for `k = 0..Nsc`.
pub fn demodulate_fft<T: Real>(y: &[Complex<T>], cfg: &WaveformConfig) -> Result<Vec<Complex<T>>> {
    check_len("received block", cfg.nfft, y.len())?;
    let mut buf = y.to_vec();
    FftPlanner::new().plan_fft_forward(cfg.nfft).process(&mut buf);
    let g = T::one() / from_usize::<T>(cfg.nfft).sqrt();
    buf.truncate(cfg.nsc);
    buf.iter_mut().for_each(|v| *v = *v * g);
    Ok(buf)
}

/// Per-bin combined gains `G[k]`, `k = 0..Ndata`.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedGains<T> {
    pub g: Vec<T>,
}

impl<T: Real> CombinedGains<T> {
    /// Gains of the combining receiver for effective subcarrier gains `h`.
    pub fn combining(h: &[Complex<T>], cfg: &WaveformConfig) -> Result<Self> {
        check_len("subcarrier gains", cfg.nsc, h.len())?;
        let mut g: Vec<T> = h[..cfg.ndata].iter().map(|v| v.norm_sqr()).collect();
        for k in 0..cfg.ne() {
            g[k % cfg.ndata] = g[k % cfg.ndata] + h[k + cfg.ndata].norm_sqr();
        }
        Ok(CombinedGains { g })
    }

    /// Gains of the basic receiver that keeps only the `Ndata` bins starting at `Ne/2`.
    pub fn basic(h: &[Complex<T>], cfg: &WaveformConfig) -> Result<Self> {
        check_len("subcarrier gains", cfg.nsc, h.len())?;
        let ne = cfg.ne();
        if ne % 2 != 0 {
            return Err(Error::OddExtension(ne));
        }
        Ok(CombinedGains {
            g: h[ne / 2..ne / 2 + cfg.ndata].iter().map(|v| v.norm_sqr()).collect(),
        })
    }

    pub fn ndata(&self) -> usize {
        self.g.len()
    }
}

/// MRC output: combined observations, gains and per-bin noise variances.
#[derive(Clone, Debug, PartialEq)]
pub struct Combined<T> {
    pub r: Vec<Complex<T>>,
    pub gains: CombinedGains<T>,
    /// Noise variance of each combined bin (equal to `G[k]`).
    pub noise_var: Vec<T>,
}

/// `R[k] = H*[k]·Y[k]`, folded as `R̃[k mod Ndata] += R[k+Ndata]` for `k < Ne`.
pub fn mrc_combine<T: Real>(y: &[Complex<T>], h: &[Complex<T>], cfg: &WaveformConfig) -> Result<Combined<T>> {
    check_len("received bins", cfg.nsc, y.len())?;
    let gains = CombinedGains::combining(h, cfg)?;
    let mut r: Vec<Complex<T>> = (0..cfg.ndata).map(|k| h[k].conj() * y[k]).collect();
    for k in 0..cfg.ne() {
        r[k % cfg.ndata] = r[k % cfg.ndata] + h[k + cfg.ndata].conj() * y[k + cfg.ndata];
    }
    let noise_var = gains.g.clone();
    Ok(Combined { r, gains, noise_var })
}

/// MMSE scaling `R̃/(G+1)`, shift reversal and unitary IDFT.
pub fn mmse_despread<T: Real>(r: &[Complex<T>], gains: &CombinedGains<T>, cfg: &WaveformConfig) -> Result<Vec<Complex<T>>> {
    let ifft = FftPlanner::new().plan_fft_inverse(cfg.ndata);
    let mut out = vec![Complex::new(T::zero(), T::zero()); cfg.ndata];
    mmse_despread_into(r, gains, cfg, ifft.as_ref(), &mut out)?;
    Ok(out)
}

fn mmse_despread_into<T: Real>(
    r: &[Complex<T>],
    gains: &CombinedGains<T>,
    cfg: &WaveformConfig,
    ifft: &dyn Fft<T>,
    out: &mut [Complex<T>],
) -> Result<()> {
    check_len("combined bins", cfg.ndata, r.len())?;
    check_len("combined gains", cfg.ndata, gains.g.len())?;
    let n = cfg.ndata;
    let l = cfg.shift();
    // R̃′[k] = R̃_eq[(k − L) mod Ndata]
    for (k, o) in out.iter_mut().enumerate() {
        let src = (k + n - l) % n;
        *o = r[src] / (gains.g[src] + T::one());
    }
    ifft.process(out);
    let g = T::one() / from_usize::<T>(n).sqrt();
    out.iter_mut().for_each(|v| *v = *v * g);
    Ok(())
}

/// Effective SINR and rate of one realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub g0: f64,
    pub sinr_eff: f64,
    pub rate_bpcu: f64,
}

/// Smallest `1 − g0` represented; larger gains saturate here.
pub const MIN_RESIDUAL: f64 = 1e-300;

/// `g0 = mean G/(G+1)`, `SINR = g0/(1−g0)`, rate `(Ndata/Nsc)·log2(1/(1−g0))`.
///
/// `1 − g0` is evaluated as `mean 1/(G+1)` to keep precision at high SNR, and
/// saturates at [`MIN_RESIDUAL`].
pub fn effective_sinr<T: Real>(gains: &CombinedGains<T>, nsc: usize) -> Result<RateResult> {
    if gains.g.is_empty() {
        return Err(Error::Empty("combined gains"));
    }
    if gains.g.iter().any(|&g| !(g >= T::zero())) {
        return Err(Error::invalid("combined gains", "gains must be non-negative"));
    }
    let n = gains.g.len() as f64;
    let g0 = compensated_sum(gains.g.iter().map(|&g| to_f64(g / (g + T::one())))) / n;
    let residual = (compensated_sum(gains.g.iter().map(|&g| to_f64(T::one() / (g + T::one())))) / n).max(MIN_RESIDUAL);
    Ok(RateResult {
        g0,
        sinr_eff: g0 / residual,
        rate_bpcu: gains.g.len() as f64 / nsc as f64 * (-residual.log2()),
    })
}

/// Effective SINR of the receiver that discards the extension bins.
pub fn effective_sinr_basic<T: Real>(h: &[Complex<T>], cfg: &WaveformConfig) -> Result<RateResult> {
    effective_sinr(&CombinedGains::basic(h, cfg)?, cfg.nsc)
}

/// Gaussian tail `Q(x) = erfc(x/√2)/2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Mean of `Q(√sinr)` over realizations.
pub fn ber_qpsk_theoretical(sinr_samples: &[f64]) -> Result<f64> {
    if sinr_samples.is_empty() {
        return Err(Error::Empty("SINR samples"));
    }
    Ok(compensated_sum(sinr_samples.iter().map(|&s| q_function(s.max(0.0).sqrt()))) / sinr_samples.len() as f64)
}

/// Decomposition `r[m] = Σ_a g_a·x[m−a] + noise` of the demodulated symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct InterferenceTerms {
    /// `g_a` for `a = 0..Ndata`; `g_0` is the useful gain.
    pub taps: Vec<Complex<f64>>,
    pub g0: f64,
    pub sigma2_ici: f64,
    pub sigma2_noise: f64,
}

/// `g_a = (exp(j2πLa/Ndata)/Ndata)·Σ_k G[k]/(G[k]+1)·exp(j2πka/Ndata)`.
pub fn interference_terms<T: Real>(gains: &CombinedGains<T>, cfg: &WaveformConfig) -> Result<InterferenceTerms> {
    check_len("combined gains", cfg.ndata, gains.g.len())?;
    let n = cfg.ndata;
    let l = cfg.shift();
    let d: Vec<f64> = gains.g.iter().map(|&g| to_f64(g / (g + T::one()))).collect();
    let two_pi = 2.0 * std::f64::consts::PI;
    let taps: Vec<Complex<f64>> = (0..n)
        .map(|a| {
            let s: Complex<f64> = d
                .iter()
                .enumerate()
                .map(|(k, &dk)| cis(two_pi * ((k * a) % n) as f64 / n as f64) * dk)
                .sum();
            cis(two_pi * ((l * a) % n) as f64 / n as f64) * s / n as f64
        })
        .collect();
    let sigma2_ici = compensated_sum(taps[1..].iter().map(|t| t.norm_sqr()));
    let sigma2_noise = compensated_sum(gains.g.iter().map(|&g| {
        let g = to_f64(g);
        g / ((g + 1.0) * (g + 1.0))
    })) / n as f64;
    Ok(InterferenceTerms {
        g0: taps[0].re,
        taps,
        sigma2_ici,
        sigma2_noise,
    })
}

/// Monte Carlo mean of rate and effective SINR for one SE size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub ne: usize,
    pub rate_bpcu: f64,
    pub sinr_eff_db_mean: f64,
    pub g0_mean: f64,
}

/// Mean rate over `trials` channel realizations for each `Ne` in `ne_grid`,
/// with common realizations across the grid. The window fixes `Nsc`; the
/// profile must be sampled for the same `Nsc`.
pub fn rate_curve<T: Real>(
    window: &FdssWindow<T>,
    profile: &SampledProfile,
    snr_db: f64,
    ne_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<RatePoint>> {
    let nsc = window.nsc();
    if trials == 0 {
        return Err(Error::Empty("trial set"));
    }
    if ne_grid.is_empty() {
        return Err(Error::Empty("SE grid"));
    }
    if let Some(&bad) = ne_grid.iter().find(|&&ne| ne >= nsc) {
        return Err(Error::invalid("ne", format!("Ne = {bad} leaves no data subcarriers (Nsc = {nsc})")));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db", "must be finite"));
    }
    let snr: T = from_db10(lit(snr_db));
    let trials_n = if profile.is_fading() { trials } else { 1 };
    let per_trial: Vec<Vec<RateResult>> = (0..trials_n as u64)
        .into_par_iter()
        .map(|t| {
            let re = profile.realize::<T, _>(&mut trial_rng(seed, Stream::Channel, t));
            let h = effective_subcarrier_gain(&re, window, snr).expect("window and profile share Nsc");
            let mag: Vec<T> = h.iter().map(|v| v.norm_sqr()).collect();
            ne_grid
                .iter()
                .map(|&ne| {
                    let ndata = nsc - ne;
                    let mut g = mag[..ndata].to_vec();
                    for k in 0..ne {
                        g[k % ndata] = g[k % ndata] + mag[k + ndata];
                    }
                    effective_sinr(&CombinedGains { g }, nsc).expect("non-empty gains")
                })
                .collect()
        })
        .collect();
    let n = per_trial.len() as f64;
    Ok(ne_grid
        .iter()
        .enumerate()
        .map(|(i, &ne)| RatePoint {
            ne,
            rate_bpcu: compensated_sum(per_trial.iter().map(|r| r[i].rate_bpcu)) / n,
            sinr_eff_db_mean: compensated_sum(per_trial.iter().map(|r| 10.0 * r[i].sinr_eff.log10())) / n,
            g0_mean: compensated_sum(per_trial.iter().map(|r| r[i].g0)) / n,
        })
        .collect())
}

/// Simulated against predicted QPSK bit error rate at one SNR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber_sim: f64,
    /// Mean `Q(√SINR_eff)` over the simulated realizations.
    pub ber_theory: f64,
}

impl BerPoint {
    /// Binomial standard deviation of the simulated rate around the prediction.
    pub fn sigma(&self) -> f64 {
        (self.ber_theory * (1.0 - self.ber_theory) / self.bits as f64).sqrt()
    }
}

/// Hard-decision Gray-QPSK link through the full chain: modulation, CP,
/// block-fading convolution, noise, CP removal, FFT, MRC, MMSE, IDFT.
///
/// Trial `t` uses channel, symbol and noise substreams `t` of the seed, so
/// configurations that differ only in `Ne` or SNR see the same channel draws.
pub struct LinkSimulation<T: Real> {
    cfg: WaveformConfig,
    window: FdssWindow<T>,
    profile: SampledProfile,
    modulator: Modulator<T>,
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
    qpsk: Constellation<T>,
}

struct LinkWorkspace<T> {
    modulation: ModWorkspace<T>,
    rx: Vec<Complex<T>>,
    freq: Vec<Complex<T>>,
    symbols: Vec<Complex<T>>,
    despread: Vec<Complex<T>>,
}

impl<T: Real> LinkSimulation<T> {
    pub fn new(cfg: WaveformConfig, window: FdssWindow<T>, profile: SampledProfile) -> Result<Self> {
        let modulator = Modulator::new(cfg, &window)?;
        let mut planner = FftPlanner::new();
        Ok(LinkSimulation {
            cfg,
            profile,
            modulator,
            window,
            fft: planner.plan_fft_forward(cfg.nfft),
            ifft: planner.plan_fft_inverse(cfg.ndata),
            qpsk: Constellation::new(ConstellationKind::Qpsk),
        })
    }

    fn workspace(&self) -> LinkWorkspace<T> {
        let zero = Complex::new(T::zero(), T::zero());
        LinkWorkspace {
            modulation: self.modulator.workspace(),
            rx: vec![zero; self.cfg.nfft],
            freq: vec![zero; self.cfg.nfft],
            symbols: Vec::new(),
            despread: vec![zero; self.cfg.ndata],
        }
    }

    /// Bit errors and effective SINR of trial `t`.
    fn trial(&self, ws: &mut LinkWorkspace<T>, snr: T, seed: u64, t: u64) -> (u64, f64) {
        let cfg = &self.cfg;
        let re = self.profile.realize::<T, _>(&mut trial_rng(seed, Stream::Channel, t));
        let mut sym_rng = trial_rng(seed, Stream::Symbols, t);
        let labels = self.qpsk.draw_labels(cfg.ndata, &mut sym_rng);
        self.qpsk.map_into(&labels, &mut ws.symbols);
        let s = self
            .modulator
            .modulate_into(&ws.symbols, &mut ws.modulation)
            .expect("dimensions fixed at construction");

        // y[n] = √snr·Σ_p h_p·s[(n − d_p) mod Nfft] + z[n]: the CP turns the
        // linear convolution into a circular one over the retained samples.
        let amp = snr.sqrt();
        let nfft = cfg.nfft;
        let mut noise_rng: TrialRng = trial_rng(seed, Stream::Noise, t);
        let half = lit::<T>(std::f64::consts::FRAC_1_SQRT_2);
        for n in 0..nfft {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (&h, &d) in re.taps.iter().zip(&re.delays) {
                acc = acc + h * s[(n + nfft - d) % nfft];
            }
            let zr: f64 = noise_rng.sample(StandardNormal);
            let zi: f64 = noise_rng.sample(StandardNormal);
            ws.rx[n] = acc * amp + Complex::new(lit::<T>(zr), lit::<T>(zi)) * half;
        }

        ws.freq.copy_from_slice(&ws.rx);
        self.fft.process(&mut ws.freq);
        let g = T::one() / from_usize::<T>(nfft).sqrt();
        let y: Vec<Complex<T>> = ws.freq[..cfg.nsc].iter().map(|v| *v * g).collect();
        let h = effective_subcarrier_gain(&re, &self.window, snr).expect("window and profile share Nsc");
        let combined = mrc_combine(&y, &h, cfg).expect("dimensions fixed at construction");
        mmse_despread_into(&combined.r, &combined.gains, cfg, self.ifft.as_ref(), &mut ws.despread)
            .expect("dimensions fixed at construction");
        let errors = ws
            .despread
            .iter()
            .zip(&labels)
            .enumerate()
            .map(|(m, (&r, &l))| u64::from((self.qpsk.demap(r, m) ^ l).count_ones()))
            .sum();
        let sinr = effective_sinr(&combined.gains, cfg.nsc).expect("non-empty gains").sinr_eff;
        (errors, sinr)
    }

    pub fn config(&self) -> &WaveformConfig {
        &self.cfg
    }

    /// Runs `trials` independent blocks of one OFDM symbol each.
    pub fn run(&self, snr_db: f64, trials: usize, seed: u64) -> Result<BerPoint> {
        if trials == 0 {
            return Err(Error::Empty("trial set"));
        }
        if !snr_db.is_finite() {
            return Err(Error::invalid("snr_db", "must be finite"));
        }
        let snr: T = from_db10(lit(snr_db));
        let results: Vec<(u64, f64)> = (0..trials as u64)
            .into_par_iter()
            .map_init(|| self.workspace(), |ws, t| self.trial(ws, snr, seed, t))
            .collect();
        let errors: u64 = results.iter().map(|r| r.0).sum();
        let bits = (trials * self.cfg.ndata * 2) as u64;
        let sinrs: Vec<f64> = results.iter().map(|r| r.1).collect();
        Ok(BerPoint {
            snr_db,
            bits,
            errors,
            ber_sim: errors as f64 / bits as f64,
            ber_theory: ber_qpsk_theoretical(&sinrs)?,
        })
    }
}
