use std::path::Path;

use serde::{Deserialize, Serialize};

use fdss_se::bounds::NfftPolicy;
use fdss_se::channel::ChannelSpec;
use fdss_se::metrics::{PaprMetric, STANDARD_LEVELS};
use fdss_se::optimizer::{ne_grid, SeMethod, ShiftPolicy};
use fdss_se::window::WindowSpec;
use fdss_se::{ConstellationKind, WaveformConfig};

use crate::CliError;

/// One experiment, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_constellation")]
    pub constellation: ConstellationKind,
    pub waveform: WaveformSection,
    #[serde(default = "default_window")]
    pub window: WindowSpec,
    #[serde(default = "default_channel")]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub monte_carlo: MonteCarloSection,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// SNR points for rate, BER and capacity-based runs.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub optimizer: Option<OptimizerSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    pub nsc: usize,
    #[serde(default)]
    pub ne: usize,
    pub nfft: usize,
    #[serde(default)]
    pub ncp: usize,
    #[serde(default)]
    pub shift: ShiftPolicy,
    #[serde(default = "default_nfft_policy")]
    pub nfft_policy: NfftPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_metric")]
    pub metric: PaprMetric,
    /// CP-OFDM symbols per trial for the instantaneous metrics.
    #[serde(default = "default_symbols")]
    pub symbols: usize,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        MonteCarloSection {
            trials: default_trials(),
            seed: 0,
            levels: default_levels(),
            metric: default_metric(),
            symbols: default_symbols(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Ne,
    L,
    Ripple,
}

/// Swept parameter, given either as explicit `values` or as an inclusive
/// `start`/`stop`/`step` range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<SeMethod>,
    pub ne_max: usize,
    #[serde(default = "one")]
    pub ne_step: usize,
    /// Unit-step refinement around coarse optima when `ne_step > 1`.
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub restrict_weak_shaping: bool,
    /// Offset of the corrected-bound column in `bound-sweep`.
    #[serde(default)]
    pub k_db: f64,
    /// Cross-evaluate PAPR and rate optima at this SNR in `se-opt`.
    #[serde(default)]
    pub tradeoff_snr_db: Option<f64>,
}

fn default_constellation() -> ConstellationKind {
    ConstellationKind::Qpsk
}
fn default_window() -> WindowSpec {
    WindowSpec::Flat
}
fn default_channel() -> ChannelSpec {
    ChannelSpec::Awgn
}
fn default_nfft_policy() -> NfftPolicy {
    NfftPolicy::Fixed
}
fn default_trials() -> usize {
    100_000
}
fn default_levels() -> Vec<f64> {
    STANDARD_LEVELS.to_vec()
}
fn default_metric() -> PaprMetric {
    PaprMetric::Statistical
}
fn default_symbols() -> usize {
    1
}
fn default_methods() -> Vec<SeMethod> {
    vec![SeMethod::BoundU]
}
fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks every field that does not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        self.window.validate()?;
        self.channel.profile()?;
        let mc = &self.monte_carlo;
        if mc.trials == 0 {
            return Err(CliError::Config(
                "monte_carlo.trials must be positive".into(),
            ));
        }
        if mc.levels.is_empty() {
            return Err(CliError::Config(
                "monte_carlo.levels must not be empty".into(),
            ));
        }
        if let Some(bad) = mc.levels.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(CliError::Config(format!("CCDF level {bad} outside (0, 1)")));
        }
        if let Some(bad) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return Err(CliError::Config(format!(
                "snr_db entry {bad} is not finite"
            )));
        }
        self.base_config()?;
        if let Some(sweep) = &self.sweep {
            sweep.values()?;
        }
        if let Some(opt) = &self.optimizer {
            if opt.ne_step == 0 {
                return Err(CliError::Config(
                    "optimizer.ne_step must be positive".into(),
                ));
            }
            if opt.ne_max >= self.waveform.nsc {
                return Err(CliError::Config(format!(
                    "optimizer.ne_max = {} leaves no data subcarriers (nsc = {})",
                    opt.ne_max, self.waveform.nsc
                )));
            }
            if opt.methods.is_empty() {
                return Err(CliError::Config(
                    "optimizer.methods must not be empty".into(),
                ));
            }
        }
        Ok(())
    }

    /// Waveform configuration at `ne` with the configured shift policy.
    pub fn config_at(&self, ne: usize) -> Result<WaveformConfig, CliError> {
        let w = &self.waveform;
        if ne >= w.nsc {
            return Err(CliError::Config(format!(
                "ne = {ne} leaves no data subcarriers (nsc = {})",
                w.nsc
            )));
        }
        let l = w.shift.shift(self.constellation, w.nsc - ne, ne);
        Ok(WaveformConfig::with_extension(w.nsc, ne, w.nfft, w.ncp, l)?)
    }

    pub fn base_config(&self) -> Result<WaveformConfig, CliError> {
        self.config_at(self.waveform.ne)
    }

    /// The `ne` grid of the optimizer section.
    pub fn optimizer_grid(&self) -> Result<(Vec<usize>, &OptimizerSection), CliError> {
        let opt = self
            .optimizer
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [optimizer] section".into()))?;
        Ok((ne_grid(opt.ne_max, opt.ne_step), opt))
    }

    pub fn require_snr(&self) -> Result<&[f64], CliError> {
        if self.snr_db.is_empty() {
            return Err(CliError::Config("snr_db must list at least one SNR".into()));
        }
        Ok(&self.snr_db)
    }
}

impl Sweep {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let values = match (self.start, self.stop, self.step) {
            (None, None, None) => self.values.clone(),
            (Some(start), Some(stop), Some(step)) if self.values.is_empty() => {
                if !(step.is_finite() && step != 0.0) || (stop - start) * step < 0.0 {
                    return Err(CliError::Config(format!(
                        "sweep range {start}..{stop} cannot be walked with step {step}"
                    )));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| start + step * i as f64).collect()
            }
            _ => {
                return Err(CliError::Config(
                    "sweep needs either `values` or all of `start`, `stop`, `step`".into(),
                ))
            }
        };
        if values.is_empty() {
            return Err(CliError::Config("sweep has no points".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Config(format!("sweep value {bad} is not finite")));
        }
        if matches!(self.axis, Axis::Ne) {
            if let Some(bad) = values.iter().find(|v| **v < 0.0 || v.fract() != 0.0) {
                return Err(CliError::Config(format!(
                    "ne sweep value {bad} is not a non-negative integer"
                )));
            }
        }
        if matches!(self.axis, Axis::L) {
            if let Some(bad) = values.iter().find(|v| v.fract() != 0.0) {
                return Err(CliError::Config(format!(
                    "L sweep value {bad} is not an integer"
                )));
            }
        }
        Ok(values)
    }
}
