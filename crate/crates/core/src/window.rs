//! Single-parameter FDSS window families.
//!
//! Every window is real, symmetric (`W[k] = W[Nsc-1-k]`) and normalized to
//! `Σ W[k]² = Nsc`, so the transmit power does not depend on the SE size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowFamily<T> {
    Flat,
    DeformedHann { beta: T },
    Kaiser { kappa: T },
    /// User-supplied coefficients.
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdssWindow<T> {
    coeffs: Vec<T>,
    family: WindowFamily<T>,
}

/// Zeroth-order modified Bessel function of the first kind, by power series.
///
/// Terms `((x/2)^k / k!)²` are summed until the term ratio to the running sum
/// drops below 1e-16 (or the working epsilon, whichever is larger).
pub fn bessel_i0<T: Real>(x: T) -> T {
    let q = x * x / lit(4.0);
    let stop = lit::<T>(1e-16).max(T::epsilon() / lit(4.0));
    let mut term = T::one();
    let mut sum = T::one();
    let mut k = 1usize;
    loop {
        let kk = from_usize::<T>(k);
        term = term * q / (kk * kk);
        sum = sum + term;
        if term <= stop * sum || k > 500 {
            return sum;
        }
        k += 1;
    }
}

/// Hann shaping parameter whose ripple is `ripple_db` (≈ `20·log10 β`).
pub fn hann_beta_from_ripple_db<T: Real>(ripple_db: T) -> T {
    lit::<T>(10.0).powf(ripple_db / lit(20.0))
}

/// Side-tap magnitude `b` of the 3-tap filter `[-b, 1, -b]` equivalent to
/// the deformed Hann window with parameter `beta`.
pub fn three_tap_b_from_beta<T: Real>(beta: T) -> T {
    (T::one() - beta) / (lit::<T>(2.0) * (T::one() + beta))
}

/// Inverse of [`three_tap_b_from_beta`].
pub fn beta_from_three_tap_b<T: Real>(b: T) -> T {
    let two_b = lit::<T>(2.0) * b;
    (T::one() - two_b) / (T::one() + two_b)
}

fn check_nsc(nsc: usize) -> Result<()> {
    if nsc < 2 {
        return Err(Error::invalid("nsc", format!("window length {nsc} < 2")));
    }
    Ok(())
}

/// Rescales `coeffs` so that their energy equals their count.
fn normalize<T: Real>(coeffs: &mut [T]) {
    let energy: T = coeffs.iter().map(|&w| w * w).sum();
    let g = (from_usize::<T>(coeffs.len()) / energy).sqrt();
    for w in coeffs.iter_mut() {
        *w = *w * g;
    }
}

/// Averages mirrored pairs so that symmetry holds bit-for-bit.
fn symmetrize<T: Real>(coeffs: &mut [T]) {
    let n = coeffs.len();
    for k in 0..n / 2 {
        let avg = (coeffs[k] + coeffs[n - 1 - k]) / lit(2.0);
        coeffs[k] = avg;
        coeffs[n - 1 - k] = avg;
    }
}

impl<T: Real> FdssWindow<T> {
    /// No shaping: `W[k] = 1`.
    pub fn flat(nsc: usize) -> Result<Self> {
        if nsc == 0 {
            return Err(Error::invalid("nsc", "window length 0"));
        }
        Ok(FdssWindow {
            coeffs: vec![T::one(); nsc],
            family: WindowFamily::Flat,
        })
    }

    /// Deformed Hann window
    /// `W[k] = (1/ω)(1 − ((1−β)/(1+β))·cos((2πk+π)/Nsc))`.
    ///
    /// The closed-form `ω` is exact for `Nsc ≥ 3`; the energy is re-checked
    /// numerically so `Nsc = 2` also meets the normalization.
    pub fn deformed_hann(nsc: usize, beta: T) -> Result<Self> {
        check_nsc(nsc)?;
        if !(beta > T::zero() && beta <= T::one()) {
            return Err(Error::invalid("beta", format!("{beta} outside (0, 1]")));
        }
        let a = (T::one() - beta) / (T::one() + beta);
        let omega = (T::one() + a * a / lit(2.0)).sqrt();
        let n = from_usize::<T>(nsc);
        let two_pi = lit::<T>(2.0) * T::PI();
        let mut coeffs: Vec<T> = (0..nsc)
            .map(|k| {
                let theta = (two_pi * from_usize::<T>(k) + T::PI()) / n;
                (T::one() - a * theta.cos()) / omega
            })
            .collect();
        symmetrize(&mut coeffs);
        normalize(&mut coeffs);
        Ok(FdssWindow {
            coeffs,
            family: WindowFamily::DeformedHann { beta },
        })
    }

    /// Kaiser window `W[k] ∝ I0(κ·sqrt(1 − (k−γ)²/γ²))`, `γ = (Nsc−1)/2`,
    /// normalized numerically.
    pub fn kaiser(nsc: usize, kappa: T) -> Result<Self> {
        check_nsc(nsc)?;
        if !(kappa >= T::zero()) || !kappa.is_finite() {
            return Err(Error::invalid("kappa", format!("{kappa} is negative or not finite")));
        }
        let gamma = from_usize::<T>(nsc - 1) / lit(2.0);
        let i0_kappa = bessel_i0(kappa);
        let mut coeffs: Vec<T> = (0..nsc)
            .map(|k| {
                let r = (from_usize::<T>(k) - gamma) / gamma;
                let arg = (T::one() - r * r).max(T::zero());
                bessel_i0(kappa * arg.sqrt()) / i0_kappa
            })
            .collect();
        symmetrize(&mut coeffs);
        normalize(&mut coeffs);
        Ok(FdssWindow {
            coeffs,
            family: WindowFamily::Kaiser { kappa },
        })
    }

    /// Deformed Hann window equivalent to the 3-tap filter `[-b, 1, -b]`,
    /// i.e. `β = (1−2b)/(1+2b)`. The filter's linear phase ramp only shifts
    /// the OFDM symbol circularly and is dropped; the half-index shift that
    /// makes the window symmetric is part of [`FdssWindow::deformed_hann`].
    pub fn three_tap_equivalent(nsc: usize, b: T) -> Result<Self> {
        if !(b >= T::zero() && b < lit(0.5)) {
            return Err(Error::invalid("b", format!("{b} outside [0, 1/2)")));
        }
        Self::deformed_hann(nsc, beta_from_three_tap_b(b))
    }

    /// Kaiser window whose ripple equals `ripple_db` (≤ 0), found by bisection
    /// on `κ` (the ripple is monotone in `κ`).
    pub fn kaiser_with_ripple(nsc: usize, ripple_db: T) -> Result<Self> {
        let kappa = kaiser_kappa_for_ripple(nsc, ripple_db)?;
        Self::kaiser(nsc, kappa)
    }

    /// Wraps arbitrary positive symmetric coefficients, normalizing their energy.
    pub fn from_coeffs(mut coeffs: Vec<T>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Empty("window"));
        }
        let n = coeffs.len();
        let tol = lit::<T>(1e-9);
        for k in 0..n / 2 {
            if (coeffs[k] - coeffs[n - 1 - k]).abs() > tol {
                return Err(Error::invalid("window", format!("not symmetric at index {k}")));
            }
        }
        normalize(&mut coeffs);
        Ok(FdssWindow {
            coeffs,
            family: WindowFamily::Custom,
        })
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn nsc(&self) -> usize {
        self.coeffs.len()
    }

    pub fn family(&self) -> WindowFamily<T> {
        self.family
    }

    /// Maximum power ripple `20·log10(min W / max W)`, always ≤ 0.
    pub fn ripple_db(&self) -> Result<T> {
        ripple_db(&self.coeffs)
    }

    /// `(index, coefficient)` CSV rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["index", "coefficient"])?;
        for (k, w) in self.coeffs.iter().enumerate() {
            wtr.write_record([k.to_string(), format!("{w:.17e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn ripple_db<T: Real>(coeffs: &[T]) -> Result<T> {
    if coeffs.is_empty() {
        return Err(Error::Empty("window"));
    }
    if let Some(index) = coeffs.iter().position(|&w| !(w > T::zero())) {
        return Err(Error::NonPositiveCoefficient { index });
    }
    let (lo, hi) = coeffs
        .iter()
        .fold((T::infinity(), T::zero()), |(lo, hi), &w| (lo.min(w), hi.max(w)));
    Ok(lit::<T>(20.0) * (lo / hi).log10())
}

/// Smallest `κ` with Kaiser ripple equal to `ripple_db`.
pub fn kaiser_kappa_for_ripple<T: Real>(nsc: usize, ripple_db: T) -> Result<T> {
    check_nsc(nsc)?;
    if !(ripple_db <= T::zero()) {
        return Err(Error::invalid("ripple_db", format!("{ripple_db} > 0")));
    }
    let ripple_at = |kappa: T| -> Result<T> { FdssWindow::kaiser(nsc, kappa)?.ripple_db() };
    let (mut lo, mut hi) = (T::zero(), T::one());
    while ripple_at(hi)? > ripple_db {
        hi = hi * lit(2.0);
        if hi > lit(200.0) {
            return Err(Error::invalid("ripple_db", format!("{ripple_db} dB unreachable")));
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) / lit(2.0);
        if ripple_at(mid)? > ripple_db {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    Ok((lo + hi) / lit(2.0))
}

/// Window description as written in experiment configs:
/// `{family="hann", ripple_db=-11}`, `{family="kaiser", kappa=2}`,
/// `{family="flat"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum WindowSpec {
    Flat,
    Hann {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ripple_db: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    Kaiser {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ripple_db: Option<f64>,
    },
}

impl WindowSpec {
    pub fn hann_ripple(ripple_db: f64) -> Self {
        WindowSpec::Hann {
            ripple_db: Some(ripple_db),
            beta: None,
        }
    }

    pub fn kaiser(kappa: f64) -> Self {
        WindowSpec::Kaiser {
            kappa: Some(kappa),
            ripple_db: None,
        }
    }

    /// Same family with its shaping re-targeted to `ripple_db`.
    pub fn with_ripple(&self, ripple_db: f64) -> Self {
        match self {
            WindowSpec::Flat | WindowSpec::Hann { .. } => WindowSpec::hann_ripple(ripple_db),
            WindowSpec::Kaiser { .. } => WindowSpec::Kaiser {
                kappa: None,
                ripple_db: Some(ripple_db),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WindowSpec::Flat => Ok(()),
            WindowSpec::Hann { ripple_db, beta } => match (ripple_db, beta) {
                (Some(r), None) if r <= 0.0 && r.is_finite() => Ok(()),
                (None, Some(b)) if b > 0.0 && b <= 1.0 => Ok(()),
                _ => Err(Error::invalid(
                    "window",
                    "hann needs exactly one of ripple_db ≤ 0 or beta in (0, 1]",
                )),
            },
            WindowSpec::Kaiser { kappa, ripple_db } => match (kappa, ripple_db) {
                (Some(k), None) if k >= 0.0 && k.is_finite() => Ok(()),
                (None, Some(r)) if r <= 0.0 && r.is_finite() => Ok(()),
                _ => Err(Error::invalid(
                    "window",
                    "kaiser needs exactly one of kappa ≥ 0 or ripple_db ≤ 0",
                )),
            },
        }
    }

    pub fn build<T: Real>(&self, nsc: usize) -> Result<FdssWindow<T>> {
        self.validate()?;
        match *self {
            WindowSpec::Flat => FdssWindow::flat(nsc),
            WindowSpec::Hann { ripple_db, beta } => {
                let beta = match (ripple_db, beta) {
                    (Some(r), _) => hann_beta_from_ripple_db(lit::<T>(r)),
                    (_, Some(b)) => lit(b),
                    _ => unreachable!("validated"),
                };
                FdssWindow::deformed_hann(nsc, beta)
            }
            WindowSpec::Kaiser { kappa, ripple_db } => match (kappa, ripple_db) {
                (Some(k), _) => FdssWindow::kaiser(nsc, lit(k)),
                (_, Some(r)) => FdssWindow::kaiser_with_ripple(nsc, lit(r)),
                _ => unreachable!("validated"),
            },
        }
    }

    pub fn label(&self) -> String {
        match *self {
            WindowSpec::Flat => "flat".into(),
            WindowSpec::Hann { ripple_db: Some(r), .. } => format!("hann({r} dB)"),
            WindowSpec::Hann { beta: Some(b), .. } => format!("hann(beta={b})"),
            WindowSpec::Kaiser { kappa: Some(k), .. } => format!("kaiser(kappa={k})"),
            WindowSpec::Kaiser { ripple_db: Some(r), .. } => format!("kaiser({r} dB)"),
            _ => "invalid".into(),
        }
    }
}
