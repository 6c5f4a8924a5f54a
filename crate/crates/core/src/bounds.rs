//! Analytic PAPR upper bounds, QAM approximation, optimal circular shifts and
//! the pulse phase-difference identity.
//!
//! With `s[n] = (1/√Nfft) Σ_m x[m]·p_m[n]`, expanding `|s[n]|²` and bounding
//! each cross term by the worst phase difference among constellation symbols
//! gives
//!
//! ```text
//! PAPR ≤ U  = (A²/Nsc)·max_n Σ_{i,j} |p_i[n]||p_j[n]|·u(i−j)
//!      ≤ GU = (A²/Nsc)·max_n (Σ_i |p_i[n]|)²
//! u(d) = max_{ω∈Ω} |cos(d·θ + ω)|,   θ = φ − (2L + Ne − 1)·π/Ndata
//! ```
//!
//! When `Nfft/Ndata` is integral and `Ndata·θ ≡ 0 (mod π)` the sum is
//! periodic in `n` with period `Nfft/Ndata`, so only that many samples need to
//! be scanned. This always holds for QAM; for π/2-BPSK it needs even `Ndata`.

use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, ConstellationKind};
use crate::error::{Error, Result};
use crate::scalar::{db10, from_usize, lit, to_f64, wrap, Real};
use crate::waveform::{kernel_magnitude, WaveformConfig};
use crate::window::FdssWindow;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundVariant {
    U,
    Gu,
    QamApprox,
    Corrected { k_db: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub value_db: f64,
    /// Maximizing sample, reduced modulo `Nfft/Ndata`.
    pub argmax_n: usize,
    pub variant: BoundVariant,
}

/// Which samples the bound maximization visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SearchRange {
    /// One pulse spacing when the periodicity condition holds, all samples
    /// otherwise.
    #[default]
    Restricted,
    Exhaustive,
}

/// How a bound-based search picks `Nfft` when the configured size is not a
/// multiple of `Ndata`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NfftPolicy {
    /// Use the configured `Nfft`; configurations it does not support are
    /// rejected.
    Fixed,
    /// Use the smallest multiple of `Ndata` not below the configured `Nfft`.
    #[default]
    RoundUp,
}

impl NfftPolicy {
    pub fn apply(self, cfg: &WaveformConfig) -> Result<WaveformConfig> {
        match self {
            NfftPolicy::Fixed => {
                cfg.require_pulse_spacing()?;
                Ok(*cfg)
            }
            NfftPolicy::RoundUp => {
                let nfft = cfg.nfft.div_ceil(cfg.ndata) * cfg.ndata;
                WaveformConfig::new(cfg.ndata, cfg.nsc, nfft, cfg.ncp, cfg.shift_l)
            }
        }
    }
}

/// `d·θ/π` as an exact fraction `num/(2·Ndata)` with `num` in `[0, 2·Ndata)`.
fn lag_phase_fraction(phi_halves: i128, cfg: &WaveformConfig, d: usize) -> i128 {
    let ndata = cfg.ndata as i128;
    let d = d as i128;
    let slope = 2 * i128::from(cfg.shift_l) + cfg.ne() as i128 - 1;
    (d * phi_halves * ndata - 2 * d * slope).rem_euclid(2 * ndata)
}

/// `φ` in units of `π/2` (0 for QAM, 1 for π/2-BPSK).
fn phi_halves<T: Real>(c: &Constellation<T>) -> i128 {
    (to_f64(c.phi()) / std::f64::consts::FRAC_PI_2).round() as i128
}

/// `u(d)` for `d = 0..Ndata`; `u_ij = u(|i − j|)`.
pub fn u_by_lag<T: Real>(c: &Constellation<T>, cfg: &WaveformConfig) -> Vec<T> {
    let ph = phi_halves(c);
    let denom = from_usize::<T>(2 * cfg.ndata);
    (0..cfg.ndata)
        .map(|d| {
            let frac = lag_phase_fraction(ph, cfg, d) as f64;
            let angle = T::PI() * lit::<T>(frac) / denom;
            c.omega_set()
                .iter()
                .map(|&w| (angle + w).cos().abs())
                .fold(T::zero(), |a, b| a.max(b))
        })
        .collect()
}

/// Full `Ndata × Ndata` matrix of `u_ij`.
pub fn u_matrix<T: Real>(c: &Constellation<T>, cfg: &WaveformConfig) -> Vec<Vec<T>> {
    let u = u_by_lag(c, cfg);
    (0..cfg.ndata)
        .map(|i| (0..cfg.ndata).map(|j| u[i.abs_diff(j)]).collect())
        .collect()
}

/// Whether `Ndata·θ ≡ 0 (mod π)`, which makes `u` circulant.
pub fn is_periodic<T: Real>(c: &Constellation<T>, cfg: &WaveformConfig) -> bool {
    (phi_halves(c) * cfg.ndata as i128) % 2 == 0
}

/// Maximizes `Σ_{i,j} a_i a_j u(|i−j|)` over the scanned samples, where
/// `a_i = |p0[(n − spacing·i) mod Nfft]|`. `u = None` means all ones.
fn max_quadratic<T: Real>(mag: &[T], spacing: usize, ndata: usize, u: Option<&[T]>, samples: usize) -> (T, usize) {
    let nfft = mag.len();
    let mut a = vec![T::zero(); ndata];
    let mut best = (T::neg_infinity(), 0);
    for n in 0..samples {
        for (i, ai) in a.iter_mut().enumerate() {
            *ai = mag[(n + nfft - (spacing * i) % nfft) % nfft];
        }
        let value = match u {
            None => {
                let s: T = a.iter().copied().sum();
                s * s
            }
            Some(u) => {
                let mut total = T::zero();
                for i in 0..ndata {
                    let mut cross = T::zero();
                    for j in i + 1..ndata {
                        cross = cross + a[j] * u[j - i];
                    }
                    total = total + a[i] * (a[i] * u[0] + lit::<T>(2.0) * cross);
                }
                total
            }
        };
        if value > best.0 {
            best = (value, n);
        }
    }
    best
}

fn evaluate<T: Real>(
    c: &Constellation<T>,
    cfg: &WaveformConfig,
    w: &FdssWindow<T>,
    general: bool,
    range: SearchRange,
) -> Result<BoundResult> {
    let spacing = cfg.require_pulse_spacing()?;
    let mag = kernel_magnitude(cfg, w)?;
    let restricted = range == SearchRange::Restricted && (general || is_periodic(c, cfg));
    let samples = if restricted { spacing } else { cfg.nfft };
    let u = (!general).then(|| u_by_lag(c, cfg));
    let (peak, n) = max_quadratic(&mag, spacing, cfg.ndata, u.as_deref(), samples);
    let value = c.peak_amplitude_sq() / from_usize::<T>(cfg.nsc) * peak;
    Ok(BoundResult {
        value_db: to_f64(db10(value)),
        argmax_n: n % spacing,
        variant: if general { BoundVariant::Gu } else { BoundVariant::U },
    })
}

/// The constellation-aware bound `U`.
pub fn papr_upper_u<T: Real>(c: &Constellation<T>, cfg: &WaveformConfig, w: &FdssWindow<T>) -> Result<BoundResult> {
    evaluate(c, cfg, w, false, SearchRange::Restricted)
}

pub fn papr_upper_u_with<T: Real>(
    c: &Constellation<T>,
    cfg: &WaveformConfig,
    w: &FdssWindow<T>,
    range: SearchRange,
) -> Result<BoundResult> {
    evaluate(c, cfg, w, false, range)
}

/// The general bound `GU` (every `u_ij = 1`).
pub fn papr_upper_gu<T: Real>(c: &Constellation<T>, cfg: &WaveformConfig, w: &FdssWindow<T>) -> Result<BoundResult> {
    evaluate(c, cfg, w, true, SearchRange::Restricted)
}

pub fn papr_upper_gu_with<T: Real>(
    c: &Constellation<T>,
    cfg: &WaveformConfig,
    w: &FdssWindow<T>,
    range: SearchRange,
) -> Result<BoundResult> {
    evaluate(c, cfg, w, true, range)
}

/// QAM bound approximated by a QPSK sub-constellation scaled to the QAM peak
/// energy: `A²_dB + U(QPSK)`.
pub fn papr_upper_qam_approx<T: Real>(
    c: &Constellation<T>,
    cfg: &WaveformConfig,
    w: &FdssWindow<T>,
) -> Result<BoundResult> {
    if !c.kind().is_qam() {
        return Err(Error::invalid(
            "constellation",
            format!("QAM approximation needs a QAM alphabet, got {}", c.kind()),
        ));
    }
    let qpsk = Constellation::<T>::new(ConstellationKind::Qpsk);
    let base = papr_upper_u(&qpsk, cfg, w)?;
    Ok(BoundResult {
        value_db: base.value_db + to_f64(db10(c.peak_amplitude_sq())),
        argmax_n: base.argmax_n,
        variant: BoundVariant::QamApprox,
    })
}

/// Shift `L ∈ [0, Ndata)` placing the neighbouring-pulse phase difference at
/// its PAPR-friendliest value for the `lambda`-th branch.
///
/// π/2-BPSK: nearest integer to `λ·Ndata/2 − (Ne−1)/2`.
/// QAM: nearest integer to `(2λ+1)·Ndata/8 − (Ne−1)/2`.
/// Exact halves round down, so `λ = 2` with even `Ne` yields the symmetric
/// layout `L = Ndata − Ne/2`.
pub fn optimal_shift(kind: ConstellationKind, ndata: usize, ne: usize, lambda: i64) -> i64 {
    let (ndata, ne, lambda) = (ndata as i128, ne as i128, i128::from(lambda));
    let l = match kind {
        // (λ·Ndata − Ne + 1)/2
        ConstellationKind::Pi2Bpsk => (lambda * ndata - ne + 1).div_euclid(2),
        // ((2λ+1)·Ndata − 4Ne + 4)/8, halves rounded down
        _ => ((2 * lambda + 1) * ndata - 4 * ne + 4 + 3).div_euclid(8),
    };
    l.rem_euclid(ndata.max(1)) as i64
}

/// Phase difference between neighbouring pulses modulo π:
/// `−(2π/Ndata)·(L + (Ne−1)/2)`.
pub fn neighbor_phase_diff<T: Real>(cfg: &WaveformConfig) -> T {
    let twice = 2 * i128::from(cfg.shift_l) + cfg.ne() as i128 - 1;
    // −π·twice/Ndata reduced modulo π, using the exact integer numerator
    let r = (-twice).rem_euclid(cfg.ndata as i128);
    wrap(T::PI() * lit::<T>(r as f64) / from_usize::<T>(cfg.ndata), T::PI())
}

/// Bound corrected by the simulation gap `k_db` measured at `Ne = 0`, applied
/// in full at `Ne = 0` and fading linearly to nothing at `Ne = Nsc`.
pub fn corrected_bound(bound_db: f64, k_db: f64, ne: usize, nsc: usize) -> f64 {
    bound_db - k_db * (1.0 - ne as f64 / nsc as f64)
}

pub fn corrected_result(bound: BoundResult, k_db: f64, ne: usize, nsc: usize) -> BoundResult {
    BoundResult {
        value_db: corrected_bound(bound.value_db, k_db, ne, nsc),
        argmax_n: bound.argmax_n,
        variant: BoundVariant::Corrected { k_db },
    }
}

/// Gap between a bound and a simulated readout, floored at zero.
pub fn calibrate_gap(bound_db: f64, simulated_db: f64) -> f64 {
    (bound_db - simulated_db).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::pulses;
    use num_complex::Complex;

    fn qpsk() -> Constellation<f64> {
        Constellation::new(ConstellationKind::Qpsk)
    }

    fn bpsk() -> Constellation<f64> {
        Constellation::new(ConstellationKind::Pi2Bpsk)
    }

    /// Direct double sum over pulses with the floating point θ, all samples.
    fn brute_bound(c: &Constellation<f64>, cfg: &WaveformConfig, w: &FdssWindow<f64>, general: bool) -> f64 {
        let p = pulses(cfg, w).unwrap();
        let theta = c.phi() - (2.0 * cfg.shift_l as f64 + cfg.ne() as f64 - 1.0) * std::f64::consts::PI / cfg.ndata as f64;
        let mut best = 0.0f64;
        for n in 0..cfg.nfft {
            let mut s = 0.0;
            for i in 0..cfg.ndata {
                for j in 0..cfg.ndata {
                    let d = i as f64 - j as f64;
                    let u = if general {
                        1.0
                    } else {
                        c.omega_set().iter().map(|&w| (d * theta + w).cos().abs()).fold(0.0, f64::max)
                    };
                    s += p[i][n].norm() * p[j][n].norm() * u;
                }
            }
            best = best.max(s);
        }
        10.0 * (c.peak_amplitude_sq() / cfg.nsc as f64 * best).log10()
    }

    #[test]
    fn diagonal_is_one_and_qpsk_floor() {
        let cfg = WaveformConfig::with_extension(20, 4, 128, 0, 3).unwrap();
        for kind in ConstellationKind::ALL {
            let u = u_by_lag(&Constellation::<f64>::new(kind), &cfg);
            assert!((u[0] - 1.0).abs() < 1e-15);
            assert!(u.iter().all(|&v| (0.0..=1.0 + 1e-15).contains(&v)));
        }
        let u = u_by_lag(&qpsk(), &cfg);
        assert!(u.iter().all(|&v| v >= std::f64::consts::FRAC_1_SQRT_2 - 1e-12));
        let m = u_matrix(&qpsk(), &cfg);
        assert_eq!(m[3][7], m[7][3]);
        assert_eq!(m[2][5], u[3]);
    }

    #[test]
    fn u_matches_float_theta() {
        for (kind, ne, l) in [(ConstellationKind::Qpsk, 5, 2), (ConstellationKind::Pi2Bpsk, 3, -7), (ConstellationKind::Qam16, 0, 11)] {
            let c = Constellation::<f64>::new(kind);
            let cfg = WaveformConfig::with_extension(24, ne, 128, 0, l).unwrap();
            let theta = c.phi() - (2.0 * l as f64 + ne as f64 - 1.0) * std::f64::consts::PI / cfg.ndata as f64;
            for (d, u) in u_by_lag(&c, &cfg).iter().enumerate() {
                let direct = c.omega_set().iter().map(|&w| (d as f64 * theta + w).cos().abs()).fold(0.0, f64::max);
                assert!((u - direct).abs() < 1e-12, "{kind} d={d}");
            }
        }
    }

    #[test]
    fn bpsk_formula_minimizes_neighbour_term() {
        for (ndata, ne) in [(24usize, 3usize), (30, 4), (17, 6)] {
            let nsc = ndata + ne;
            let nfft = 4 * nsc;
            let u1 = |l: i64| u_by_lag(&bpsk(), &WaveformConfig::new(ndata, nsc, nfft, 0, l).unwrap())[1];
            let best = (0..ndata as i64).map(u1).fold(f64::INFINITY, f64::min);
            // every branch lands within one half-step of the ideal phase, and
            // the branch with matching parity hits it exactly
            let step = (std::f64::consts::PI / ndata as f64).sin();
            let hits = (0..4)
                .map(|lambda| u1(optimal_shift(ConstellationKind::Pi2Bpsk, ndata, ne, lambda)))
                .inspect(|&u| assert!(u <= best + step + 1e-12, "ndata {ndata} ne {ne}"))
                .filter(|&u| (u - best).abs() < 1e-12)
                .count();
            assert!(hits >= 2, "ndata {ndata} ne {ne}");
        }
    }

    #[test]
    fn shift_formula_examples() {
        assert_eq!(optimal_shift(ConstellationKind::Qpsk, 86, 10, 0), 6);
        for ne in [2, 4, 10, 20] {
            assert_eq!(optimal_shift(ConstellationKind::Pi2Bpsk, 96 - ne, ne, 2), (96 - ne - ne / 2) as i64);
        }
        assert_eq!(optimal_shift(ConstellationKind::Qpsk, 8, 0, 0), 1);
        let l = optimal_shift(ConstellationKind::Pi2Bpsk, 10, 0, 0);
        assert!((0..10).contains(&l));
        // ties fall to the smaller integer: Ndata=10, Ne=2 → 9.5
        assert_eq!(optimal_shift(ConstellationKind::Pi2Bpsk, 10, 2, 2), 9);
    }

    #[test]
    fn neighbour_phase_matches_pulses() {
        for (ndata, ne, l) in [(16usize, 0usize, 0i64), (16, 4, 5), (12, 3, -2), (20, 6, 13)] {
            let cfg = WaveformConfig::new(ndata, ndata + ne, 8 * ndata, 0, l).unwrap();
            let w = FdssWindow::<f64>::deformed_hann(cfg.nsc, 0.3).unwrap();
            let p = pulses(&cfg, &w).unwrap();
            let analytic = neighbor_phase_diff::<f64>(&cfg);
            let mut checked = 0;
            for n in 0..cfg.nfft {
                if p[0][n].norm() > 1e-3 && p[1][n].norm() > 1e-3 {
                    let r: Complex<f64> = p[1][n] / p[0][n];
                    let numeric = wrap(r.arg(), std::f64::consts::PI);
                    let diff = wrap(numeric - analytic + 0.5, std::f64::consts::PI) - 0.5;
                    assert!(diff.abs() < 1e-9, "cfg {cfg:?} n {n}: {numeric} vs {analytic}");
                    checked += 1;
                }
            }
            assert!(checked > 0);
        }
    }

    #[test]
    fn phase_diff_zero_and_quarter() {
        // odd Ne with λ = 1 zeroes the difference
        let ndata = 20;
        let ne = 5;
        let l = optimal_shift(ConstellationKind::Pi2Bpsk, ndata, ne, 1);
        let cfg = WaveformConfig::new(ndata, ndata + ne, 128, 0, l).unwrap();
        let d: f64 = neighbor_phase_diff(&cfg);
        assert!(d.min(std::f64::consts::PI - d) < 1e-12);
        // QAM shift puts the difference near π/4 modulo π/2
        for ne in [0usize, 4, 10] {
            let ndata = 86;
            let l = optimal_shift(ConstellationKind::Qpsk, ndata, ne, 0);
            let cfg = WaveformConfig::new(ndata, ndata + ne, 512, 0, l).unwrap();
            let d: f64 = neighbor_phase_diff(&cfg);
            let r = wrap(d, std::f64::consts::FRAC_PI_2);
            assert!((r - std::f64::consts::FRAC_PI_4).abs() <= std::f64::consts::PI / ndata as f64 + 1e-12);
        }
    }

    #[test]
    fn restricted_equals_exhaustive_and_brute() {
        let cases = [
            (ConstellationKind::Qpsk, 12, 4, 0, 0.4),
            (ConstellationKind::Pi2Bpsk, 10, 2, 9, 0.2),
            (ConstellationKind::Qam16, 8, 3, 5, 0.6),
            (ConstellationKind::Pi2Bpsk, 9, 2, 4, 0.5),
        ];
        for (kind, ndata, ne, l, beta) in cases {
            let c = Constellation::<f64>::new(kind);
            let cfg = WaveformConfig::new(ndata, ndata + ne, 8 * ndata, 0, l).unwrap();
            let w = FdssWindow::<f64>::deformed_hann(cfg.nsc, beta).unwrap();
            let r = papr_upper_u_with(&c, &cfg, &w, SearchRange::Restricted).unwrap();
            let e = papr_upper_u_with(&c, &cfg, &w, SearchRange::Exhaustive).unwrap();
            assert!((r.value_db - e.value_db).abs() < 1e-12, "{kind}");
            assert!((e.value_db - brute_bound(&c, &cfg, &w, false)).abs() < 1e-9);
            let g = papr_upper_gu(&c, &cfg, &w).unwrap();
            assert!((g.value_db - brute_bound(&c, &cfg, &w, true)).abs() < 1e-9);
            assert!(g.value_db >= r.value_db - 1e-12);
            assert!(r.argmax_n < cfg.nfft / cfg.ndata);
        }
    }

    #[test]
    fn single_pulse_bound() {
        let cfg = WaveformConfig::new(1, 3, 16, 0, 0).unwrap();
        let w = FdssWindow::<f64>::deformed_hann(3, 0.5).unwrap();
        let mag = kernel_magnitude(&cfg, &w).unwrap();
        let peak = mag.iter().map(|m| m * m).fold(0.0, f64::max);
        let b = papr_upper_u(&qpsk(), &cfg, &w).unwrap();
        assert!((b.value_db - 10.0 * (peak / 3.0).log10()).abs() < 1e-12);
    }

    #[test]
    fn qam_approx_offsets_qpsk() {
        let cfg = WaveformConfig::with_extension(24, 4, 240, 0, 0).unwrap();
        let w = FdssWindow::<f64>::kaiser(24, 2.0).unwrap();
        let q = papr_upper_u(&qpsk(), &cfg, &w).unwrap();
        let a = papr_upper_qam_approx(&Constellation::new(ConstellationKind::Qam16), &cfg, &w).unwrap();
        assert!((a.value_db - q.value_db - 10.0 * 1.8f64.log10()).abs() < 1e-12);
        let id = papr_upper_qam_approx(&qpsk(), &cfg, &w).unwrap();
        assert!((id.value_db - q.value_db).abs() < 1e-12);
        assert!(papr_upper_qam_approx(&bpsk(), &cfg, &w).is_err());
    }

    #[test]
    fn higher_order_narrows_gap() {
        let cfg = WaveformConfig::with_extension(24, 4, 240, 0, 0).unwrap();
        let w = FdssWindow::<f64>::kaiser(24, 2.0).unwrap();
        let gap = |kind| {
            let c = Constellation::<f64>::new(kind);
            papr_upper_gu(&c, &cfg, &w).unwrap().value_db - papr_upper_u(&c, &cfg, &w).unwrap().value_db
        };
        assert!(gap(ConstellationKind::Qam64) < gap(ConstellationKind::Qpsk));
    }

    #[test]
    fn flat_gu_is_finite() {
        let cfg = WaveformConfig::with_extension(16, 0, 64, 0, 0).unwrap();
        let w = FdssWindow::<f64>::flat(16).unwrap();
        let g = papr_upper_gu(&qpsk(), &cfg, &w).unwrap();
        assert!(g.value_db.is_finite());
        // every pulse aligned in phase: at least the single-pulse peak, and U below it
        assert!(g.value_db >= -1e-12);
        assert!(g.value_db >= papr_upper_u(&qpsk(), &cfg, &w).unwrap().value_db);
    }

    #[test]
    fn divisibility_and_policy() {
        let cfg = WaveformConfig::with_extension(24, 5, 128, 0, 0).unwrap();
        let w = FdssWindow::<f64>::flat(24).unwrap();
        assert_eq!(
            papr_upper_u(&qpsk(), &cfg, &w).unwrap_err(),
            Error::NotDivisible { nfft: 128, ndata: 19 }
        );
        assert!(NfftPolicy::Fixed.apply(&cfg).is_err());
        let up = NfftPolicy::RoundUp.apply(&cfg).unwrap();
        assert_eq!(up.nfft, 133);
        assert!(papr_upper_u(&qpsk(), &up, &w).is_ok());
    }

    #[test]
    fn corrected_bound_endpoints() {
        assert_eq!(corrected_bound(10.0, 2.0, 0, 96), 8.0);
        assert_eq!(corrected_bound(10.0, 2.0, 96, 96), 10.0);
        assert_eq!(calibrate_gap(5.0, 6.0), 0.0);
    }

    #[test]
    fn f32_bound_tracks_f64() {
        let cfg = WaveformConfig::with_extension(24, 4, 240, 0, 0).unwrap();
        let b64 = papr_upper_u(&qpsk(), &cfg, &FdssWindow::<f64>::kaiser(24, 2.0).unwrap()).unwrap();
        let b32 = papr_upper_u(
            &Constellation::<f32>::new(ConstellationKind::Qpsk),
            &cfg,
            &FdssWindow::<f32>::kaiser(24, 2.0).unwrap(),
        )
        .unwrap();
        assert!((b64.value_db - b32.value_db).abs() < 1e-4);
    }
}
