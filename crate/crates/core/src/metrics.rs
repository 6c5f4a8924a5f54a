//! PAPR under the statistical and instantaneous mean-power definitions, the
//! raw cubic metric, and seeded Monte Carlo CCDF estimation.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::rng::{trial_rng, Stream, TrialRng};
use crate::scalar::{db10, from_usize, lit, to_f64, Real};
use crate::waveform::{ModWorkspace, Modulator, WaveformConfig};
use crate::window::FdssWindow;

fn peak_power<T: Real>(samples: &[Complex<T>]) -> T {
    samples.iter().map(|s| s.norm_sqr()).fold(T::zero(), |a, b| a.max(b))
}

fn mean_power<T: Real>(samples: &[Complex<T>]) -> T {
    samples.iter().map(|s| s.norm_sqr()).sum::<T>() / from_usize(samples.len())
}

/// PAPR against the ensemble mean power `Nsc/Nfft`:
/// `10·log10((Nfft/Nsc)·max_n |s[n]|²)`.
pub fn papr_statistical<T: Real>(samples: &[Complex<T>], cfg: &WaveformConfig) -> T {
    db10(from_usize::<T>(cfg.nfft) / from_usize::<T>(cfg.nsc) * peak_power(samples))
}

/// PAPR′ against the arithmetic mean power of the given samples.
pub fn papr_instantaneous<T: Real>(samples: &[Complex<T>]) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Empty("sample sequence"));
    }
    Ok(db10(peak_power(samples) / mean_power(samples)))
}

/// Raw cubic metric `20·log10(rms(|s/rms(s)|³))` with `rms(v) = sqrt(mean |v|²)`.
pub fn cubic_metric<T: Real>(samples: &[Complex<T>]) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Empty("sample sequence"));
    }
    let p = mean_power(samples);
    // |s/rms|^6 averaged, then square-rooted
    let m6 = samples
        .iter()
        .map(|s| {
            let r = s.norm_sqr() / p;
            r * r * r
        })
        .sum::<T>()
        / from_usize(samples.len());
    Ok(lit::<T>(20.0) * m6.sqrt().log10())
}

/// Empirical CCDF, `P(X > threshold)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcdfCurve {
    pub thresholds_db: Vec<f64>,
    pub ccdf: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReadout {
    pub level: f64,
    pub value_db: f64,
}

/// CCDF plus per-level threshold readouts and the largest sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcdfEstimate {
    pub curve: CcdfCurve,
    pub readouts: Vec<LevelReadout>,
    pub max_db: f64,
}

impl CcdfEstimate {
    /// Threshold exceeded with probability `level`, if that level was requested.
    pub fn at(&self, level: f64) -> Option<f64> {
        self.readouts
            .iter()
            .find(|r| (r.level - level).abs() <= 1e-12 * level.max(1.0))
            .map(|r| r.value_db)
    }

    /// Builds the estimate from per-trial values (order irrelevant).
    pub fn from_samples(mut values: Vec<f64>, levels: &[f64], seed: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("trial set"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("trial value", "NaN"));
        }
        for &p in levels {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid("ccdf level", format!("{p} outside (0, 1)")));
            }
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        let readouts = levels
            .iter()
            .map(|&level| LevelReadout {
                level,
                value_db: quantile_sorted(&values, level),
            })
            .collect();
        let curve = ccdf_curve(&values, default_thresholds(&values), seed);
        Ok(CcdfEstimate {
            curve,
            readouts,
            max_db: *values.last().expect("nonempty"),
        })
    }
}

/// Threshold exceeded with probability `level` in ascending-sorted samples,
/// interpolated linearly (in dB) between neighbouring order statistics.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (1.0 - level) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// 0.1 dB grid spanning the samples.
fn default_thresholds(sorted: &[f64]) -> Vec<f64> {
    let lo = (sorted[0] * 10.0).floor() as i64;
    let hi = (sorted[sorted.len() - 1] * 10.0).ceil() as i64;
    (lo..=hi).map(|i| i as f64 / 10.0).collect()
}

pub fn ccdf_curve(sorted: &[f64], thresholds_db: Vec<f64>, seed: u64) -> CcdfCurve {
    let n = sorted.len() as f64;
    let ccdf = thresholds_db
        .iter()
        .map(|&t| {
            let at_or_below = sorted.partition_point(|&v| v <= t);
            (sorted.len() - at_or_below) as f64 / n
        })
        .collect();
    CcdfCurve {
        thresholds_db,
        ccdf,
        trials: sorted.len(),
        seed,
    }
}

fn warn_if_thin(trials: usize, levels: &[f64]) {
    if let Some(min) = levels.iter().cloned().reduce(f64::min) {
        if (trials as f64) < 10.0 / min {
            log::warn!("{trials} trials are fewer than 10/{min}; tail readouts will be noisy");
        }
    }
}

/// Runs `trials` independent trials in parallel. Trial `t` receives its own
/// random source `trial_rng(seed, Symbols, t)` and a per-thread state from
/// `init`, so results do not depend on the thread count.
pub fn sample_trials<S, I, G>(trials: usize, seed: u64, init: I, generator: G) -> Vec<f64>
where
    I: Fn() -> S + Sync + Send,
    G: Fn(&mut S, &mut TrialRng) -> f64 + Sync + Send,
{
    (0..trials as u64)
        .into_par_iter()
        .map_init(&init, |state, t| {
            let mut rng = trial_rng(seed, Stream::Symbols, t);
            generator(state, &mut rng)
        })
        .collect()
}

/// Monte Carlo CCDF of a per-trial statistic.
pub fn ccdf<G>(generator: G, trials: usize, levels: &[f64], seed: u64) -> Result<CcdfEstimate>
where
    G: Fn(&mut TrialRng) -> f64 + Sync + Send,
{
    ccdf_with_state(trials, levels, seed, || (), |_, rng| generator(rng))
}

pub fn ccdf_with_state<S, I, G>(trials: usize, levels: &[f64], seed: u64, init: I, generator: G) -> Result<CcdfEstimate>
where
    I: Fn() -> S + Sync + Send,
    G: Fn(&mut S, &mut TrialRng) -> f64 + Sync + Send,
{
    if trials == 0 {
        return Err(Error::Empty("trial set"));
    }
    warn_if_thin(trials, levels);
    CcdfEstimate::from_samples(sample_trials(trials, seed, init, generator), levels, seed)
}

/// Which per-trial statistic a PAPR simulation reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaprMetric {
    /// Peak over one symbol against the ensemble mean `Nsc/Nfft`.
    Statistical,
    /// Peak against the arithmetic mean of the CP-OFDM signal.
    Instantaneous,
    /// Raw cubic metric of the CP-OFDM signal.
    CubicMetric,
}

/// Seeded PAPR/CM Monte Carlo for one constellation, configuration and window.
///
/// Each trial draws `Nsc` labels per OFDM symbol and uses the first `Ndata`,
/// so trials with the same index share symbols across different SE sizes
/// (common random numbers).
pub struct PaprSimulation<T: Real> {
    constellation: Constellation<T>,
    modulator: Modulator<T>,
    metric: PaprMetric,
    symbols: usize,
}

pub struct PaprWorkspace<T> {
    labels: Vec<usize>,
    symbols: Vec<Complex<T>>,
    modulation: ModWorkspace<T>,
    signal: Vec<Complex<T>>,
}

impl<T: Real> PaprSimulation<T> {
    pub fn new(constellation: Constellation<T>, cfg: WaveformConfig, window: &FdssWindow<T>) -> Result<Self> {
        Ok(PaprSimulation {
            constellation,
            modulator: Modulator::new(cfg, window)?,
            metric: PaprMetric::Statistical,
            symbols: 1,
        })
    }

    /// Selects the statistic and the number of CP-OFDM symbols per trial.
    /// The statistical PAPR always uses one symbol.
    pub fn with_metric(mut self, metric: PaprMetric, symbols: usize) -> Result<Self> {
        if symbols == 0 {
            return Err(Error::invalid("symbols", "at least one OFDM symbol per trial"));
        }
        if metric == PaprMetric::Statistical && symbols != 1 {
            return Err(Error::invalid("symbols", "statistical PAPR is defined per single symbol"));
        }
        self.metric = metric;
        self.symbols = symbols;
        Ok(self)
    }

    pub fn config(&self) -> &WaveformConfig {
        self.modulator.config()
    }

    pub fn workspace(&self) -> PaprWorkspace<T> {
        PaprWorkspace {
            labels: Vec::new(),
            symbols: Vec::new(),
            modulation: self.modulator.workspace(),
            signal: Vec::new(),
        }
    }

    /// One trial's statistic in dB.
    pub fn trial(&self, ws: &mut PaprWorkspace<T>, rng: &mut TrialRng) -> f64 {
        let cfg = *self.modulator.config();
        let draw = |ws: &mut PaprWorkspace<T>, rng: &mut TrialRng| {
            ws.labels = self.constellation.draw_labels(cfg.nsc, rng);
            self.constellation.map_into(&ws.labels[..cfg.ndata], &mut ws.symbols);
            self.modulator
                .modulate_into(&ws.symbols, &mut ws.modulation)
                .expect("dimensions fixed at construction");
        };
        match self.metric {
            PaprMetric::Statistical => {
                draw(ws, rng);
                to_f64(papr_statistical(ws.modulation.samples(), &cfg))
            }
            PaprMetric::Instantaneous | PaprMetric::CubicMetric => {
                let mut signal = std::mem::take(&mut ws.signal);
                signal.clear();
                for _ in 0..self.symbols {
                    draw(ws, rng);
                    let body = ws.modulation.samples();
                    signal.extend_from_slice(&body[cfg.nfft - cfg.ncp.min(cfg.nfft)..]);
                    signal.extend_from_slice(body);
                }
                let v = match self.metric {
                    PaprMetric::Instantaneous => papr_instantaneous(&signal),
                    _ => cubic_metric(&signal),
                }
                .expect("nonempty signal");
                ws.signal = signal;
                to_f64(v)
            }
        }
    }

    /// Per-trial values for trials `0..trials` under `seed`.
    pub fn sample(&self, trials: usize, seed: u64) -> Vec<f64> {
        sample_trials(trials, seed, || self.workspace(), |ws, rng| self.trial(ws, rng))
    }

    pub fn ccdf(&self, trials: usize, levels: &[f64], seed: u64) -> Result<CcdfEstimate> {
        ccdf_with_state(trials, levels, seed, || self.workspace(), |ws, rng| self.trial(ws, rng))
    }
}

/// The classic CCDF readout levels.
pub const STANDARD_LEVELS: [f64; 3] = [1e-1, 1e-2, 1e-3];
