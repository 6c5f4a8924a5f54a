//! Grid searches for the PAPR-optimal and rate-optimal SE sizes, and the
//! rate/PAPR trade-off between them.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    calibrate_gap, corrected_bound, optimal_shift, papr_upper_qam_approx, papr_upper_u, NfftPolicy,
};
use crate::channel::ChannelProfile;
use crate::constellation::{Constellation, ConstellationKind};
use crate::error::{Error, Result};
use crate::metrics::PaprSimulation;
use crate::receiver::rate_curve;
use crate::scalar::{to_f64, Real};
use crate::waveform::WaveformConfig;
use crate::window::FdssWindow;

/// How the circular shift `L` is chosen for each `Ne`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum ShiftPolicy {
    /// `L = 0`, single-side extension.
    #[default]
    Zero,
    /// `L = Ndata − ⌊Ne/2⌋`, the symmetric double-side extension.
    Symmetric,
    /// The constellation's optimal-shift formula on branch `lambda`.
    Optimal { lambda: i64 },
    Fixed { l: i64 },
}

impl ShiftPolicy {
    pub fn shift(self, kind: ConstellationKind, ndata: usize, ne: usize) -> i64 {
        match self {
            ShiftPolicy::Zero => 0,
            ShiftPolicy::Symmetric => optimal_shift(ConstellationKind::Pi2Bpsk, ndata, ne, 2),
            ShiftPolicy::Optimal { lambda } => optimal_shift(kind, ndata, ne, lambda),
            ShiftPolicy::Fixed { l } => l,
        }
    }
}

/// Objective evaluated per `Ne`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SeMethod {
    BoundU,
    QamApprox,
    CorrectedBound { k_db: f64 },
    MonteCarloCcdf { level: f64 },
    Capacity { snr_db: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeSearchResult {
    pub ne_opt: usize,
    pub objective_at_opt: f64,
    /// `(ne, objective)` in ascending `ne`.
    pub curve: Vec<(usize, f64)>,
    pub method: SeMethod,
}

impl SeSearchResult {
    fn from_curve(mut curve: Vec<(usize, f64)>, method: SeMethod, maximize: bool) -> Result<Self> {
        curve.sort_by_key(|&(ne, _)| ne);
        curve.dedup_by_key(|&mut (ne, _)| ne);
        let mut best: Option<(usize, f64)> = None;
        for &(ne, v) in &curve {
            if v.is_nan() {
                return Err(Error::invalid("objective", format!("NaN at Ne = {ne}")));
            }
            let better = match best {
                None => true,
                Some((_, b)) => {
                    if maximize {
                        v > b
                    } else {
                        v < b
                    }
                }
            };
            if better {
                best = Some((ne, v));
            }
        }
        let (ne_opt, objective_at_opt) = best.ok_or(Error::Empty("SE grid"))?;
        Ok(SeSearchResult {
            ne_opt,
            objective_at_opt,
            curve,
            method,
        })
    }

    /// Objective at `ne`, if evaluated.
    pub fn at(&self, ne: usize) -> Option<f64> {
        self.curve.iter().find(|&&(n, _)| n == ne).map(|&(_, v)| v)
    }
}

/// `0, step, 2·step, …` up to `max`.
pub fn ne_grid(max: usize, step: usize) -> Vec<usize> {
    (0..=max).step_by(step.max(1)).collect()
}

/// Ripple above which bound-based searches are prone to a spurious minimum
/// at large `Ne`.
pub const WEAK_SHAPING_RIPPLE_DB: f64 = -4.0;
/// Largest `Ne/Nsc` visited under weak shaping when the range guard is on.
pub const WEAK_SHAPING_MAX_FRACTION: f64 = 0.3;

/// PAPR-optimal SE size search for one constellation and window.
#[derive(Clone, Debug)]
pub struct PaprSearch<T: Real> {
    pub constellation: Constellation<T>,
    pub window: FdssWindow<T>,
    pub nfft: usize,
    pub shift: ShiftPolicy,
    pub nfft_policy: NfftPolicy,
    pub method: SeMethod,
    pub trials: usize,
    pub seed: u64,
    /// Drop `Ne > 0.3·Nsc` from bound-based searches under weak shaping.
    pub restrict_weak_shaping: bool,
}

impl<T: Real> PaprSearch<T> {
    pub fn new(constellation: Constellation<T>, window: FdssWindow<T>, nfft: usize, method: SeMethod) -> Self {
        PaprSearch {
            constellation,
            window,
            nfft,
            shift: ShiftPolicy::Zero,
            nfft_policy: NfftPolicy::RoundUp,
            method,
            trials: 100_000,
            seed: 0,
            restrict_weak_shaping: false,
        }
    }

    pub fn nsc(&self) -> usize {
        self.window.nsc()
    }

    /// Configuration for `ne` with `L` from the shift policy.
    pub fn config(&self, ne: usize) -> Result<WaveformConfig> {
        let nsc = self.nsc();
        if ne >= nsc {
            return Err(Error::invalid("ne", format!("Ne = {ne} leaves no data subcarriers (Nsc = {nsc})")));
        }
        let l = self.shift.shift(self.constellation.kind(), nsc - ne, ne);
        WaveformConfig::with_extension(nsc, ne, self.nfft, 0, l)
    }

    fn is_bound(&self) -> bool {
        matches!(
            self.method,
            SeMethod::BoundU | SeMethod::QamApprox | SeMethod::CorrectedBound { .. }
        )
    }

    fn bound_u(&self, ne: usize) -> Result<f64> {
        let cfg = self.nfft_policy.apply(&self.config(ne)?)?;
        Ok(papr_upper_u(&self.constellation, &cfg, &self.window)?.value_db)
    }

    /// Objective at `ne` in dB (lower is better).
    pub fn objective(&self, ne: usize) -> Result<f64> {
        match self.method {
            SeMethod::BoundU => self.bound_u(ne),
            SeMethod::QamApprox => {
                let cfg = self.nfft_policy.apply(&self.config(ne)?)?;
                Ok(papr_upper_qam_approx(&self.constellation, &cfg, &self.window)?.value_db)
            }
            SeMethod::CorrectedBound { k_db } => Ok(corrected_bound(self.bound_u(ne)?, k_db, ne, self.nsc())),
            SeMethod::MonteCarloCcdf { level } => self.simulated(ne, level),
            SeMethod::Capacity { .. } => Err(Error::invalid("method", "capacity is not a PAPR objective")),
        }
    }

    /// Simulated PAPR readout at `level` for `ne`, drawn with common random numbers.
    pub fn simulated(&self, ne: usize, level: f64) -> Result<f64> {
        let sim = PaprSimulation::new(self.constellation.clone(), self.config(ne)?, &self.window)?;
        let est = sim.ccdf(self.trials, &[level], self.seed)?;
        Ok(est.readouts[0].value_db)
    }

    /// Gap between the bound and the simulated readout at `Ne = 0`.
    pub fn calibrate_k(&self, level: f64) -> Result<f64> {
        Ok(calibrate_gap(self.bound_u(0)?, self.simulated(0, level)?))
    }

    fn feasible(&self, grid: &[usize]) -> Result<Vec<usize>> {
        let nsc = self.nsc();
        let mut grid: Vec<usize> = grid.to_vec();
        if let Some(&bad) = grid.iter().find(|&&ne| ne >= nsc) {
            return Err(Error::invalid("ne", format!("Ne = {bad} leaves no data subcarriers (Nsc = {nsc})")));
        }
        if self.is_bound() {
            if self.nfft_policy == NfftPolicy::Fixed {
                grid.retain(|&ne| self.nfft % (nsc - ne) == 0);
            }
            let weak = to_f64(self.window.ripple_db()?) > WEAK_SHAPING_RIPPLE_DB;
            if self.restrict_weak_shaping && weak {
                grid.retain(|&ne| ne as f64 <= WEAK_SHAPING_MAX_FRACTION * nsc as f64);
            }
        }
        if grid.is_empty() {
            return Err(Error::Empty("feasible SE grid"));
        }
        Ok(grid)
    }

    pub fn curve(&self, grid: &[usize]) -> Result<Vec<(usize, f64)>> {
        self.feasible(grid)?
            .into_iter()
            .map(|ne| Ok((ne, self.objective(ne)?)))
            .collect()
    }

    pub fn search(&self, grid: &[usize]) -> Result<SeSearchResult> {
        SeSearchResult::from_curve(self.curve(grid)?, self.method, false)
    }

    /// Coarse search followed by a unit-step scan around the coarse minimizer.
    pub fn search_refined(&self, coarse: &[usize], step: usize) -> Result<SeSearchResult> {
        let first = self.search(coarse)?;
        let lo = first.ne_opt.saturating_sub(step.saturating_sub(1));
        let hi = (first.ne_opt + step.saturating_sub(1)).min(self.nsc() - 1);
        let extra: Vec<usize> = (lo..=hi).filter(|ne| first.at(*ne).is_none()).collect();
        let mut curve = first.curve;
        if !extra.is_empty() {
            if let Ok(more) = self.curve(&extra) {
                curve.extend(more);
            }
        }
        SeSearchResult::from_curve(curve, self.method, false)
    }
}

/// PAPR-optimal SE size over `ne_grid`.
pub fn search_ne_papr<T: Real>(search: &PaprSearch<T>, ne_grid: &[usize]) -> Result<SeSearchResult> {
    search.search(ne_grid)
}

/// Rate-optimal SE size search for one window and channel.
#[derive(Clone, Debug)]
pub struct CapaSearch<T: Real> {
    pub window: FdssWindow<T>,
    pub profile: ChannelProfile,
    pub nfft: usize,
    pub ncp: usize,
    pub trials: usize,
    pub seed: u64,
}

impl<T: Real> CapaSearch<T> {
    /// Mean achievable rate (bits per channel use) for each `Ne`.
    pub fn curve(&self, snr_db: f64, grid: &[usize]) -> Result<Vec<(usize, f64)>> {
        let nsc = self.window.nsc();
        let cfg = WaveformConfig::new(nsc, nsc, self.nfft, self.ncp, 0)?;
        let sampled = self.profile.sampled(&cfg)?;
        Ok(rate_curve(&self.window, &sampled, snr_db, grid, self.trials, self.seed)?
            .into_iter()
            .map(|p| (p.ne, p.rate_bpcu))
            .collect())
    }

    pub fn search(&self, snr_db: f64, grid: &[usize]) -> Result<SeSearchResult> {
        SeSearchResult::from_curve(self.curve(snr_db, grid)?, SeMethod::Capacity { snr_db }, true)
    }
}

/// Rate-optimal SE size over `ne_grid` at `snr_db`.
pub fn search_ne_capa<T: Real>(search: &CapaSearch<T>, snr_db: f64, ne_grid: &[usize]) -> Result<SeSearchResult> {
    search.search(snr_db, ne_grid)
}

/// Both optima and each metric evaluated at both, plus the rate of plain
/// DFT-s-OFDM (no shaping, no extension) on the same channel draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub snr_db: f64,
    pub ne_papr: usize,
    pub ne_capa: usize,
    pub papr_at_zero_db: f64,
    pub papr_at_ne_papr_db: f64,
    pub papr_at_ne_capa_db: f64,
    pub rate_plain: f64,
    pub rate_at_zero: f64,
    pub rate_at_ne_papr: f64,
    pub rate_at_ne_capa: f64,
    /// `ne_capa ≤ ne_papr` when both are positive; reported, not enforced.
    pub capa_below_papr: bool,
}

impl TradeoffReport {
    /// Relative rate loss against plain DFT-s-OFDM.
    pub fn loss(&self, rate: f64) -> f64 {
        1.0 - rate / self.rate_plain
    }

    pub fn loss_at_zero(&self) -> f64 {
        self.loss(self.rate_at_zero)
    }

    pub fn loss_at_ne_papr(&self) -> f64 {
        self.loss(self.rate_at_ne_papr)
    }

    pub fn loss_at_ne_capa(&self) -> f64 {
        self.loss(self.rate_at_ne_capa)
    }
}

pub fn tradeoff_report<T: Real>(
    papr: &PaprSearch<T>,
    capa: &CapaSearch<T>,
    snr_db: f64,
    ne_grid: &[usize],
) -> Result<TradeoffReport> {
    if papr.nsc() != capa.window.nsc() {
        return Err(Error::DimensionMismatch {
            what: "window length",
            expected: papr.nsc(),
            got: capa.window.nsc(),
        });
    }
    let p = papr.search(ne_grid)?;
    let c = capa.search(snr_db, ne_grid)?;
    let papr_at = |ne: usize| p.at(ne).map_or_else(|| papr.objective(ne), Ok);
    let extra: Vec<usize> = [0, p.ne_opt].into_iter().filter(|ne| c.at(*ne).is_none()).collect();
    let extra_rates = if extra.is_empty() { Vec::new() } else { capa.curve(snr_db, &extra)? };
    let rate_at = |ne: usize| {
        c.at(ne)
            .or_else(|| extra_rates.iter().find(|&&(n, _)| n == ne).map(|&(_, v)| v))
            .expect("rate evaluated for every reported Ne")
    };
    let plain = CapaSearch {
        window: FdssWindow::<T>::flat(capa.window.nsc())?,
        ..capa.clone()
    }
    .curve(snr_db, &[0])?[0]
        .1;
    Ok(TradeoffReport {
        snr_db,
        ne_papr: p.ne_opt,
        ne_capa: c.ne_opt,
        papr_at_zero_db: papr_at(0)?,
        papr_at_ne_papr_db: p.objective_at_opt,
        papr_at_ne_capa_db: papr_at(c.ne_opt)?,
        rate_plain: plain,
        rate_at_zero: rate_at(0),
        rate_at_ne_papr: rate_at(p.ne_opt),
        rate_at_ne_capa: c.objective_at_opt,
        capa_below_papr: c.ne_opt == 0 || p.ne_opt == 0 || c.ne_opt <= p.ne_opt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hann(nsc: usize, ripple: f64) -> FdssWindow<f64> {
        FdssWindow::<f64>::deformed_hann(nsc, 10f64.powf(ripple / 20.0)).unwrap()
    }

    #[test]
    fn extremum_selection() {
        let r = SeSearchResult::from_curve(vec![(4, 2.0), (0, 3.0), (8, 2.0)], SeMethod::BoundU, false).unwrap();
        assert_eq!((r.ne_opt, r.objective_at_opt), (4, 2.0));
        assert_eq!(r.curve[0].0, 0);
        let r = SeSearchResult::from_curve(vec![(0, 1.0), (2, 1.5)], SeMethod::Capacity { snr_db: 0.0 }, true).unwrap();
        assert_eq!(r.ne_opt, 2);
        assert!(SeSearchResult::from_curve(vec![], SeMethod::BoundU, false).is_err());
    }

    #[test]
    fn shift_policies() {
        assert_eq!(ShiftPolicy::Zero.shift(ConstellationKind::Qpsk, 86, 10), 0);
        assert_eq!(ShiftPolicy::Symmetric.shift(ConstellationKind::Qpsk, 86, 10), 81);
        assert_eq!(ShiftPolicy::Optimal { lambda: 0 }.shift(ConstellationKind::Qpsk, 86, 10), 6);
        assert_eq!(ShiftPolicy::Fixed { l: -3 }.shift(ConstellationKind::Qpsk, 86, 10), -3);
    }

    #[test]
    fn fixed_policy_filters_grid() {
        let mut s = PaprSearch::new(Constellation::new(ConstellationKind::Qpsk), hann(24, -8.0), 96, SeMethod::BoundU);
        s.nfft_policy = NfftPolicy::Fixed;
        let r = s.search(&[0, 1, 5, 8, 12]).unwrap();
        let nes: Vec<usize> = r.curve.iter().map(|p| p.0).collect();
        // Ndata ∈ {24, 16, 12} divide 96
        assert_eq!(nes, vec![0, 8, 12]);
        assert_eq!(s.search(&[1, 5]).unwrap_err(), Error::Empty("feasible SE grid"));
        assert!(s.search(&[24]).is_err());
    }

    #[test]
    fn bound_curve_has_interior_minimum() {
        let s = PaprSearch::new(
            Constellation::new(ConstellationKind::Qpsk),
            FdssWindow::<f64>::kaiser(48, 2.0).unwrap(),
            512,
            SeMethod::BoundU,
        );
        let r = s.search(&ne_grid(30, 2)).unwrap();
        assert!(r.ne_opt > 0 && r.ne_opt < 30, "{r:?}");
    }

    #[test]
    fn weak_shaping_guard() {
        let mut s = PaprSearch::new(Constellation::new(ConstellationKind::Qpsk), hann(40, -2.0), 256, SeMethod::BoundU);
        s.restrict_weak_shaping = true;
        let r = s.search(&ne_grid(30, 2)).unwrap();
        assert!(r.curve.iter().all(|&(ne, _)| ne <= 12));
    }

    #[test]
    fn corrected_bound_shifts_curve() {
        let base = PaprSearch::new(Constellation::new(ConstellationKind::Qpsk), hann(24, -8.0), 192, SeMethod::BoundU);
        let corr = PaprSearch {
            method: SeMethod::CorrectedBound { k_db: 1.0 },
            ..base.clone()
        };
        let a = base.objective(0).unwrap();
        let b = corr.objective(0).unwrap();
        assert!((a - b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_visits_neighbours() {
        let s = PaprSearch::new(
            Constellation::new(ConstellationKind::Qpsk),
            FdssWindow::<f64>::kaiser(48, 2.0).unwrap(),
            512,
            SeMethod::BoundU,
        );
        let coarse = s.search(&ne_grid(32, 4)).unwrap();
        let fine = s.search_refined(&ne_grid(32, 4), 4).unwrap();
        assert!(fine.objective_at_opt <= coarse.objective_at_opt);
        assert!(fine.curve.len() > coarse.curve.len());
    }

    #[test]
    fn monte_carlo_objective_deterministic() {
        let mut s = PaprSearch::new(
            Constellation::new(ConstellationKind::Qpsk),
            FdssWindow::<f64>::kaiser(24, 2.0).unwrap(),
            128,
            SeMethod::MonteCarloCcdf { level: 0.1 },
        );
        s.trials = 2000;
        let a = s.search(&[0, 4, 8]).unwrap();
        let b = s.search(&[0, 4, 8]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn capacity_high_snr_prefers_no_extension() {
        let c = CapaSearch {
            window: hann(48, -11.0),
            profile: ChannelProfile::tdl_c(300e-9, 15e3).unwrap(),
            nfft: 512,
            ncp: 36,
            trials: 300,
            seed: 1,
        };
        let r = c.search(30.0, &ne_grid(20, 4)).unwrap();
        assert_eq!(r.ne_opt, 0);
        let flat = CapaSearch {
            window: FdssWindow::<f64>::flat(48).unwrap(),
            ..c.clone()
        };
        assert_eq!(flat.search(10.0, &ne_grid(20, 4)).unwrap().ne_opt, 0);
    }

    #[test]
    fn report_cross_evaluates() {
        let mut papr = PaprSearch::new(Constellation::new(ConstellationKind::Qpsk), hann(48, -14.0), 512, SeMethod::BoundU);
        papr.trials = 1000;
        let capa = CapaSearch {
            window: hann(48, -14.0),
            profile: ChannelProfile::tdl_c(300e-9, 15e3).unwrap(),
            nfft: 512,
            ncp: 36,
            trials: 200,
            seed: 2,
        };
        let r = tradeoff_report(&papr, &capa, 5.0, &ne_grid(24, 1)).unwrap();
        assert!(r.rate_plain > r.rate_at_zero);
        assert!(r.rate_at_ne_capa >= r.rate_at_zero);
        assert!(r.rate_at_ne_capa >= r.rate_at_ne_papr);
        assert!(r.papr_at_ne_papr_db <= r.papr_at_zero_db);
        assert!(r.loss_at_ne_capa() <= r.loss_at_zero());
    }
}
