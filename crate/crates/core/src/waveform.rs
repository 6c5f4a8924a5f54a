//! DFT-s-OFDM transmit chain with FDSS and spectrum extension.
//!
//! ```text
//! x[m] ──DFT(Ndata)/√Ndata──▶ X[h] ──extend+shift──▶ X^se[k] ──×W[k]──▶ IFFT(Nfft)/√Nfft ──▶ s[n]
//! ```
//!
//! Equivalently `s[n] = (1/√Nfft) Σ_m x[m]·p_m[n]` with the time/phase shifted
//! pulses `p_m` of [`pulses`]. The cyclic prefix is not part of
//! [`OfdmSymbol`]; peaks are searched over `0 ≤ n < Nfft` and the prefix only
//! repeats samples. [`OfdmSymbol::with_cyclic_prefix`] builds CP-OFDM
//! time series for multi-symbol measurements.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cis, from_usize, lit, Real};
use crate::window::FdssWindow;

/// Integer dimensions of one DFT-s-OFDM symbol. `Ne = Nsc − Ndata` is derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub ndata: usize,
    pub nsc: usize,
    pub nfft: usize,
    pub ncp: usize,
    /// Circular shift `L`; any integer, applied modulo `Ndata`.
    pub shift_l: i64,
}

/// Smallest oversampling `Nfft/Ndata` for which sampled peaks track the
/// analog envelope.
pub const MIN_OVERSAMPLING: usize = 4;

impl WaveformConfig {
    pub fn new(ndata: usize, nsc: usize, nfft: usize, ncp: usize, shift_l: i64) -> Result<Self> {
        let cfg = WaveformConfig {
            ndata,
            nsc,
            nfft,
            ncp,
            shift_l,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration with `Ndata = nsc − ne`.
    pub fn with_extension(nsc: usize, ne: usize, nfft: usize, ncp: usize, shift_l: i64) -> Result<Self> {
        if ne >= nsc {
            return Err(Error::invalid("ne", format!("Ne = {ne} leaves no data subcarriers (Nsc = {nsc})")));
        }
        Self::new(nsc - ne, nsc, nfft, ncp, shift_l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ndata == 0 {
            return Err(Error::invalid("ndata", "Ndata must be at least 1"));
        }
        if self.nsc < self.ndata {
            return Err(Error::invalid(
                "nsc",
                format!("Nsc = {} smaller than Ndata = {}", self.nsc, self.ndata),
            ));
        }
        if self.nfft < MIN_OVERSAMPLING * self.ndata {
            return Err(Error::invalid(
                "nfft",
                format!(
                    "Nfft = {} below {}·Ndata = {}",
                    self.nfft,
                    MIN_OVERSAMPLING,
                    MIN_OVERSAMPLING * self.ndata
                ),
            ));
        }
        if self.nsc > self.nfft {
            return Err(Error::invalid(
                "nsc",
                format!("Nsc = {} exceeds Nfft = {}", self.nsc, self.nfft),
            ));
        }
        Ok(())
    }

    /// SE size `Ne = Nsc − Ndata`.
    pub fn ne(&self) -> usize {
        self.nsc - self.ndata
    }

    /// `L mod Ndata` in `[0, Ndata)`.
    pub fn shift(&self) -> usize {
        self.shift_l.rem_euclid(self.ndata as i64) as usize
    }

    pub fn with_shift(mut self, shift_l: i64) -> Self {
        self.shift_l = shift_l;
        self
    }

    /// Pulse spacing `Nfft/Ndata` in samples, if integral.
    pub fn pulse_spacing(&self) -> Option<usize> {
        (self.nfft % self.ndata == 0).then(|| self.nfft / self.ndata)
    }

    pub fn require_pulse_spacing(&self) -> Result<usize> {
        self.pulse_spacing().ok_or(Error::NotDivisible {
            nfft: self.nfft,
            ndata: self.ndata,
        })
    }

    fn check_window<T>(&self, w: &FdssWindow<T>) -> Result<()>
    where
        T: Real,
    {
        if w.nsc() != self.nsc {
            return Err(Error::DimensionMismatch {
                what: "window length",
                expected: self.nsc,
                got: w.nsc(),
            });
        }
        Ok(())
    }
}

/// One DFT-s-OFDM symbol body, `s[n]` for `0 ≤ n < Nfft`.
#[derive(Clone, Debug, PartialEq)]
pub struct OfdmSymbol<T> {
    pub samples: Vec<Complex<T>>,
}

impl<T: Real> OfdmSymbol<T> {
    /// CP-OFDM samples: the last `ncp` samples followed by the body.
    pub fn with_cyclic_prefix(&self, ncp: usize) -> Vec<Complex<T>> {
        let n = self.samples.len();
        let ncp = ncp.min(n);
        let mut out = Vec::with_capacity(n + ncp);
        out.extend_from_slice(&self.samples[n - ncp..]);
        out.extend_from_slice(&self.samples);
        out
    }

    pub fn mean_power(&self) -> T {
        let n = from_usize::<T>(self.samples.len());
        self.samples.iter().map(|s| s.norm_sqr()).sum::<T>() / n
    }

    /// `(n, re, im)` CSV rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["n", "re", "im"])?;
        for (n, s) in self.samples.iter().enumerate() {
            wtr.write_record([n.to_string(), format!("{:.17e}", s.re), format!("{:.17e}", s.im)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn scale<T: Real>(buf: &mut [Complex<T>], g: T) {
    for v in buf.iter_mut() {
        *v = *v * g;
    }
}

/// Unitary DFT precoding `X[h] = (1/√Ndata) Σ_m x[m]·exp(−j2πhm/Ndata)`.
pub fn dft_precode<T: Real>(x: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    if x.is_empty() {
        return Err(Error::Empty("symbol block"));
    }
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
    scale(&mut buf, T::one() / from_usize::<T>(x.len()).sqrt());
    Ok(buf)
}

/// `X^se[k] = X[(k + L) mod Ndata]`, `k = 0..Nsc−1`.
pub fn spectrum_extend<T: Real>(x: &[Complex<T>], nsc: usize, shift_l: i64) -> Result<Vec<Complex<T>>> {
    let ndata = x.len();
    if ndata == 0 {
        return Err(Error::Empty("subcarrier block"));
    }
    if nsc < ndata {
        return Err(Error::invalid("nsc", format!("Nsc = {nsc} smaller than Ndata = {ndata}")));
    }
    let l = shift_l.rem_euclid(ndata as i64) as usize;
    Ok((0..nsc).map(|k| x[(k + l) % ndata]).collect())
}

/// Reusable transmitter for one configuration and window.
///
/// FFT plans are shared immutably; all mutable state lives in a
/// [`ModWorkspace`], so concurrent use from several threads only needs one
/// workspace per thread.
#[derive(Clone)]
pub struct Modulator<T: Real> {
    cfg: WaveformConfig,
    window: Vec<T>,
    dft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
    scratch_len: usize,
}

pub struct ModWorkspace<T> {
    freq: Vec<Complex<T>>,
    grid: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T> ModWorkspace<T> {
    /// Samples of the most recent [`Modulator::modulate_into`] call.
    pub fn samples(&self) -> &[Complex<T>] {
        &self.grid
    }
}

impl<T: Real> Modulator<T> {
    pub fn new(cfg: WaveformConfig, window: &FdssWindow<T>) -> Result<Self> {
        cfg.validate()?;
        cfg.check_window(window)?;
        let mut planner = FftPlanner::new();
        let dft = planner.plan_fft_forward(cfg.ndata);
        let ifft = planner.plan_fft_inverse(cfg.nfft);
        let scratch_len = dft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len());
        Ok(Modulator {
            cfg,
            window: window.coeffs().to_vec(),
            dft,
            ifft,
            scratch_len,
        })
    }

    pub fn config(&self) -> &WaveformConfig {
        &self.cfg
    }

    pub fn workspace(&self) -> ModWorkspace<T> {
        let zero = Complex::new(T::zero(), T::zero());
        ModWorkspace {
            freq: vec![zero; self.cfg.ndata],
            grid: vec![zero; self.cfg.nfft],
            scratch: vec![zero; self.scratch_len],
        }
    }

    /// Runs the chain into `ws`; the result is `ws.samples()`.
    pub fn modulate_into<'w>(&self, x: &[Complex<T>], ws: &'w mut ModWorkspace<T>) -> Result<&'w [Complex<T>]> {
        let cfg = &self.cfg;
        if x.len() != cfg.ndata {
            return Err(Error::DimensionMismatch {
                what: "symbol block",
                expected: cfg.ndata,
                got: x.len(),
            });
        }
        ws.freq.copy_from_slice(x);
        self.dft.process_with_scratch(&mut ws.freq, &mut ws.scratch);
        let g = T::one() / (from_usize::<T>(cfg.ndata) * from_usize::<T>(cfg.nfft)).sqrt();
        let l = cfg.shift();
        let zero = Complex::new(T::zero(), T::zero());
        ws.grid.fill(zero);
        let mut h = l;
        for (k, &w) in self.window.iter().enumerate() {
            ws.grid[k] = ws.freq[h] * (w * g);
            h += 1;
            if h == cfg.ndata {
                h = 0;
            }
        }
        self.ifft.process_with_scratch(&mut ws.grid, &mut ws.scratch);
        Ok(&ws.grid)
    }

    pub fn modulate(&self, x: &[Complex<T>]) -> Result<OfdmSymbol<T>> {
        let mut ws = self.workspace();
        self.modulate_into(x, &mut ws)?;
        Ok(OfdmSymbol { samples: ws.grid })
    }
}

/// `s[n] = (1/√Nfft) Σ_k W[k]·X^se[k]·exp(j2πnk/Nfft)`, `0 ≤ n < Nfft`.
pub fn modulate<T: Real>(cfg: &WaveformConfig, w: &FdssWindow<T>, x: &[Complex<T>]) -> Result<OfdmSymbol<T>> {
    Modulator::new(*cfg, w)?.modulate(x)
}

/// Kernel pulse `p0[n] = (1/√Ndata) Σ_k W[k]·exp(j2πkn/Nfft)`.
pub fn pulse_kernel<T: Real>(cfg: &WaveformConfig, w: &FdssWindow<T>) -> Result<Vec<Complex<T>>> {
    cfg.validate()?;
    cfg.check_window(w)?;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); cfg.nfft];
    for (b, &c) in buf.iter_mut().zip(w.coeffs()) {
        *b = Complex::new(c, T::zero());
    }
    FftPlanner::new().plan_fft_inverse(cfg.nfft).process(&mut buf);
    scale(&mut buf, T::one() / from_usize::<T>(cfg.ndata).sqrt());
    Ok(buf)
}

/// `|p0[n]|` for all `n`.
pub fn kernel_magnitude<T: Real>(cfg: &WaveformConfig, w: &FdssWindow<T>) -> Result<Vec<T>> {
    Ok(pulse_kernel(cfg, w)?.iter().map(|p| p.norm()).collect())
}

/// The `Ndata` pulses `p_m[n] = exp(−j2πLm/Ndata)·p0[(n − (Nfft/Ndata)·m) mod Nfft]`.
pub fn pulses<T: Real>(cfg: &WaveformConfig, w: &FdssWindow<T>) -> Result<Vec<Vec<Complex<T>>>> {
    let spacing = cfg.require_pulse_spacing()?;
    let p0 = pulse_kernel(cfg, w)?;
    let nfft = cfg.nfft;
    let two_pi = lit::<T>(2.0) * T::PI();
    let ndata = from_usize::<T>(cfg.ndata);
    let l = cfg.shift();
    Ok((0..cfg.ndata)
        .map(|m| {
            let phase = cis(-two_pi * from_usize::<T>((l * m) % cfg.ndata) / ndata);
            let offset = (spacing * m) % nfft;
            (0..nfft).map(|n| phase * p0[(n + nfft - offset) % nfft]).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{Constellation, ConstellationKind};
    use crate::rng::{trial_rng, Stream};

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    /// Direct-summation DFT used as an oracle.
    fn naive_dft(x: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|h| {
                x.iter()
                    .enumerate()
                    .map(|(m, &v)| v * cis(-2.0 * std::f64::consts::PI * (h * m) as f64 / n))
                    .sum::<Complex<f64>>()
                    / n.sqrt()
            })
            .collect()
    }

    #[test]
    fn config_rules() {
        let cfg = WaveformConfig::with_extension(96, 10, 2048, 144, -3).unwrap();
        assert_eq!(cfg.ndata, 86);
        assert_eq!(cfg.ne(), 10);
        assert_eq!(cfg.shift(), 83);
        assert!(WaveformConfig::new(10, 9, 64, 0, 0).is_err());
        assert!(WaveformConfig::new(10, 12, 39, 0, 0).is_err());
        assert!(WaveformConfig::new(4, 20, 16, 0, 0).is_err());
        assert!(WaveformConfig::with_extension(8, 8, 64, 0, 0).is_err());
        assert_eq!(WaveformConfig::new(16, 20, 64, 0, 0).unwrap().pulse_spacing(), Some(4));
        assert_eq!(WaveformConfig::new(12, 20, 64, 0, 0).unwrap().pulse_spacing(), None);
    }

    #[test]
    fn dft_of_delta_and_constant() {
        let n = 8;
        let mut delta = vec![c(0.0, 0.0); n];
        delta[0] = c(1.0, 0.0);
        for v in dft_precode(&delta).unwrap() {
            assert!((v - c(1.0 / (n as f64).sqrt(), 0.0)).norm() < 1e-14);
        }
        let ones = vec![c(1.0, 0.0); n];
        let x = dft_precode(&ones).unwrap();
        assert!((x[0] - c((n as f64).sqrt(), 0.0)).norm() < 1e-12);
        assert!(x[1..].iter().all(|v| v.norm() < 1e-12));
        assert!(dft_precode::<f64>(&[]).is_err());
    }

    #[test]
    fn dft_matches_direct_summation() {
        let q = Constellation::<f64>::new(ConstellationKind::Qam16);
        let x = q.draw_symbols(7, &mut trial_rng(3, Stream::Symbols, 0));
        let fast = dft_precode(&x).unwrap();
        for (a, b) in fast.iter().zip(naive_dft(&x)) {
            assert!((a - b).norm() < 1e-10);
        }
        let e_in: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let e_out: f64 = fast.iter().map(|v| v.norm_sqr()).sum();
        assert!((e_in - e_out).abs() < 1e-10);
    }

    #[test]
    fn extension_layouts() {
        let x: Vec<Complex<f64>> = (0..10).map(|i| c(i as f64, 0.0)).collect();
        assert_eq!(spectrum_extend(&x, 10, 0).unwrap(), x);
        let single = spectrum_extend(&x, 14, 0).unwrap();
        let idx: Vec<usize> = single.iter().map(|v| v.re as usize).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1, 2, 3]);
        // symmetric double-side: L = Ndata − Ne/2, two repeated symbols on each side
        let sym = spectrum_extend(&x, 14, 8).unwrap();
        let idx: Vec<usize> = sym.iter().map(|v| v.re as usize).collect();
        assert_eq!(idx, vec![8, 9, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1]);
        assert!(spectrum_extend(&x, 9, 0).is_err());
    }

    #[test]
    fn single_subcarrier_is_constant_envelope() {
        let cfg = WaveformConfig::new(1, 1, 16, 0, 0).unwrap();
        let w = FdssWindow::<f64>::flat(1).unwrap();
        let s = modulate(&cfg, &w, &[c(1.0, 0.0)]).unwrap();
        for v in &s.samples {
            assert!((v.norm() - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn flat_delta_is_dirichlet_pulse() {
        let (ndata, nfft) = (12usize, 64usize);
        let cfg = WaveformConfig::new(ndata, ndata, nfft, 0, 0).unwrap();
        let w = FdssWindow::<f64>::flat(ndata).unwrap();
        let mut x = vec![c(0.0, 0.0); ndata];
        x[0] = c(1.0, 0.0);
        let s = modulate(&cfg, &w, &x).unwrap();
        let pi = std::f64::consts::PI;
        for (n, v) in s.samples.iter().enumerate() {
            // closed-form Dirichlet kernel, divided by sqrt(Ndata·Nfft)
            let nf = n as f64;
            let mag = if n == 0 {
                ndata as f64
            } else {
                (pi * ndata as f64 * nf / nfft as f64).sin() / (pi * nf / nfft as f64).sin()
            };
            let expect = cis(pi * nf * (ndata as f64 - 1.0) / nfft as f64) * mag / ((ndata * nfft) as f64).sqrt();
            assert!((v - expect).norm() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn parseval_through_chain() {
        let cfg = WaveformConfig::with_extension(24, 6, 128, 0, 5).unwrap();
        let w = FdssWindow::<f64>::kaiser(24, 2.5).unwrap();
        let q = Constellation::<f64>::new(ConstellationKind::Qpsk);
        let x = q.draw_symbols(cfg.ndata, &mut trial_rng(1, Stream::Symbols, 0));
        let s = modulate(&cfg, &w, &x).unwrap();
        let xse = spectrum_extend(&dft_precode(&x).unwrap(), cfg.nsc, cfg.shift_l).unwrap();
        let freq: f64 = w.coeffs().iter().zip(&xse).map(|(w, v)| w * w * v.norm_sqr()).sum();
        let time: f64 = s.samples.iter().map(|v| v.norm_sqr()).sum();
        assert!((freq - time).abs() < 1e-10);
    }

    #[test]
    fn mean_power_is_nsc_over_nfft() {
        let cfg = WaveformConfig::with_extension(24, 4, 256, 0, 0).unwrap();
        let w = FdssWindow::<f64>::deformed_hann(24, 0.3).unwrap();
        let q = Constellation::<f64>::new(ConstellationKind::Qpsk);
        let m = Modulator::new(cfg, &w).unwrap();
        let mut ws = m.workspace();
        let trials = 4000;
        let mut acc = 0.0;
        for t in 0..trials {
            let x = q.draw_symbols(cfg.ndata, &mut trial_rng(2, Stream::Symbols, t));
            let s = m.modulate_into(&x, &mut ws).unwrap();
            acc += s.iter().map(|v| v.norm_sqr()).sum::<f64>() / cfg.nfft as f64;
        }
        let mean = acc / trials as f64;
        let expect = cfg.nsc as f64 / cfg.nfft as f64;
        assert!((mean / expect - 1.0).abs() < 0.01, "{mean} vs {expect}");
    }

    #[test]
    fn flat_kernel_peak() {
        let cfg = WaveformConfig::with_extension(20, 4, 128, 0, 0).unwrap();
        let p0 = pulse_kernel(&cfg, &FdssWindow::<f64>::flat(20).unwrap()).unwrap();
        assert!((p0[0].norm() - 20.0 / 16f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pulses_reconstruct_modulation() {
        let cfg = WaveformConfig::with_extension(20, 4, 128, 0, 3).unwrap();
        let w = FdssWindow::<f64>::deformed_hann(20, 0.4).unwrap();
        let q = Constellation::<f64>::new(ConstellationKind::Qam16);
        let x = q.draw_symbols(cfg.ndata, &mut trial_rng(4, Stream::Symbols, 0));
        let p = pulses(&cfg, &w).unwrap();
        let s = modulate(&cfg, &w, &x).unwrap();
        for n in 0..cfg.nfft {
            let v: Complex<f64> = (0..cfg.ndata).map(|m| x[m] * p[m][n]).sum::<Complex<f64>>() / (cfg.nfft as f64).sqrt();
            assert!((v - s.samples[n]).norm() < 1e-10);
        }
        assert_eq!(p[0], pulse_kernel(&cfg, &w).unwrap());
    }

    #[test]
    fn pulses_need_integral_spacing() {
        let cfg = WaveformConfig::with_extension(20, 8, 64, 0, 0).unwrap();
        let w = FdssWindow::<f64>::flat(20).unwrap();
        assert_eq!(pulses(&cfg, &w).unwrap_err(), Error::NotDivisible { nfft: 64, ndata: 12 });
    }

    #[test]
    fn window_length_checked() {
        let cfg = WaveformConfig::with_extension(20, 4, 128, 0, 0).unwrap();
        let w = FdssWindow::<f64>::flat(19).unwrap();
        assert!(matches!(Modulator::new(cfg, &w), Err(Error::DimensionMismatch { .. })));
        let m = Modulator::new(cfg, &FdssWindow::<f64>::flat(20).unwrap()).unwrap();
        assert!(m.modulate(&[c(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn cyclic_prefix_repeats_tail() {
        let s = OfdmSymbol {
            samples: (0..8).map(|i| c(i as f64, 0.0)).collect(),
        };
        let cp = s.with_cyclic_prefix(3);
        assert_eq!(cp.len(), 11);
        assert_eq!(&cp[..3], &s.samples[5..]);
    }

    #[test]
    fn single_precision_chain() {
        let cfg = WaveformConfig::with_extension(24, 4, 128, 0, 0).unwrap();
        let w32 = FdssWindow::<f32>::kaiser(24, 2.0).unwrap();
        let w64 = FdssWindow::<f64>::kaiser(24, 2.0).unwrap();
        let q = Constellation::<f64>::new(ConstellationKind::Qpsk);
        let x = q.draw_symbols(cfg.ndata, &mut trial_rng(9, Stream::Symbols, 0));
        let x32: Vec<Complex<f32>> = x.iter().map(|v| Complex::new(v.re as f32, v.im as f32)).collect();
        let a = modulate(&cfg, &w64, &x).unwrap();
        let b = modulate(&cfg, &w32, &x32).unwrap();
        for (u, v) in a.samples.iter().zip(&b.samples) {
            assert!((u.re - v.re as f64).abs() < 1e-5 && (u.im - v.im as f64).abs() < 1e-5);
        }
    }
}
