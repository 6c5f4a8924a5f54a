//! Modulation alphabets and the phase geometry consumed by the PAPR bounds.
//!
//! Points are stored in label order: `points[label]` is the symbol carrying
//! the bit pattern `label` (MSB first). Square QAM uses reflected-binary Gray
//! coding independently on the I and Q axes, the I axis taking the upper
//! half of the label bits. π/2-BPSK maps bit 0 to `+1` and bit 1 to `-1`;
//! the π/2 progression is applied per symbol index when drawing, not stored
//! in the alphabet.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, wrap, Real};

/// Deduplication tolerance for phase differences, in radians.
pub const OMEGA_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstellationKind {
    #[serde(rename = "pi2bpsk")]
    Pi2Bpsk,
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
    #[serde(rename = "64qam")]
    Qam64,
}

impl ConstellationKind {
    pub const ALL: [ConstellationKind; 4] = [
        ConstellationKind::Pi2Bpsk,
        ConstellationKind::Qpsk,
        ConstellationKind::Qam16,
        ConstellationKind::Qam64,
    ];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            ConstellationKind::Pi2Bpsk => 1,
            ConstellationKind::Qpsk => 2,
            ConstellationKind::Qam16 => 4,
            ConstellationKind::Qam64 => 6,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    /// True for the square QAM alphabets (QPSK included).
    pub fn is_qam(self) -> bool {
        !matches!(self, ConstellationKind::Pi2Bpsk)
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstellationKind::Pi2Bpsk => "pi2bpsk",
            ConstellationKind::Qpsk => "qpsk",
            ConstellationKind::Qam16 => "16qam",
            ConstellationKind::Qam64 => "64qam",
        }
    }
}

impl fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstellationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConstellationKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("constellation", format!("unknown kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constellation<T> {
    kind: ConstellationKind,
    points: Vec<Complex<T>>,
    phi: T,
    peak_amplitude_sq: T,
    omega_set: Vec<T>,
    /// Amplitude of one PAM step per axis (QAM only).
    axis_scale: T,
}

#[inline]
fn gray(level: usize) -> usize {
    level ^ (level >> 1)
}

impl<T: Real> Constellation<T> {
    pub fn new(kind: ConstellationKind) -> Self {
        let (points, phi, axis_scale) = match kind {
            ConstellationKind::Pi2Bpsk => (
                vec![Complex::new(T::one(), T::zero()), Complex::new(-T::one(), T::zero())],
                T::FRAC_PI_2(),
                T::one(),
            ),
            _ => {
                let bits_axis = kind.bits_per_symbol() / 2;
                let levels = 1usize << bits_axis;
                let m = kind.order();
                // Unit average energy: E|x|^2 = 2 (M-1)/3 for odd-integer grids.
                let scale = T::one() / lit::<T>(2.0 * (m as f64 - 1.0) / 3.0).sqrt();
                let amp = |level: usize| {
                    (lit::<T>(2.0) * from_usize::<T>(level) - from_usize::<T>(levels - 1)) * scale
                };
                let mut points = vec![Complex::new(T::zero(), T::zero()); m];
                for li in 0..levels {
                    for lq in 0..levels {
                        let label = (gray(li) << bits_axis) | gray(lq);
                        points[label] = Complex::new(amp(li), amp(lq));
                    }
                }
                (points, T::zero(), scale)
            }
        };
        let peak_amplitude_sq = points
            .iter()
            .map(|p| p.norm_sqr())
            .fold(T::zero(), |a, b| a.max(b));
        let omega_set = omega_set_of(&points);
        Constellation {
            kind,
            points,
            phi,
            peak_amplitude_sq,
            omega_set,
            axis_scale,
        }
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    /// Alphabet in label order.
    pub fn points(&self) -> &[Complex<T>] {
        &self.points
    }

    /// Incremental rotation per symbol index, radians.
    pub fn phi(&self) -> T {
        self.phi
    }

    /// Largest symbol energy A_C².
    pub fn peak_amplitude_sq(&self) -> T {
        self.peak_amplitude_sq
    }

    /// Phase differences among symbols modulo π, ascending.
    pub fn omega_set(&self) -> &[T] {
        &self.omega_set
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.kind.bits_per_symbol()
    }

    /// Rotation `exp(j·phi·m)` applied to the symbol at index `m`.
    ///
    /// For π/2-BPSK the powers of `j` are produced exactly.
    pub fn rotation(&self, m: usize) -> Complex<T> {
        match self.kind {
            ConstellationKind::Pi2Bpsk => match m % 4 {
                0 => Complex::new(T::one(), T::zero()),
                1 => Complex::new(T::zero(), T::one()),
                2 => Complex::new(-T::one(), T::zero()),
                _ => Complex::new(T::zero(), -T::one()),
            },
            _ => Complex::new(T::one(), T::zero()),
        }
    }

    /// Uniform random labels.
    pub fn draw_labels<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let m = self.points.len();
        (0..n).map(|_| rng.random_range(0..m)).collect()
    }

    /// Maps labels to rotated symbols; element `m` is `points[label]·exp(j·phi·m)`.
    pub fn map(&self, labels: &[usize]) -> Vec<Complex<T>> {
        let mut out = Vec::with_capacity(labels.len());
        self.map_into(labels, &mut out);
        out
    }

    pub fn map_into(&self, labels: &[usize], out: &mut Vec<Complex<T>>) {
        out.clear();
        out.extend(
            labels
                .iter()
                .enumerate()
                .map(|(m, &l)| self.points[l] * self.rotation(m)),
        );
    }

    /// i.i.d. uniform symbols with the per-index rotation applied.
    pub fn draw_symbols<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Complex<T>> {
        let labels = self.draw_labels(n, rng);
        self.map(&labels)
    }

    /// Hard-decision label for a received sample at symbol index `m`.
    pub fn demap(&self, y: Complex<T>, m: usize) -> usize {
        let y = y * self.rotation(m).conj();
        match self.kind {
            ConstellationKind::Pi2Bpsk => usize::from(y.re < T::zero()),
            _ => {
                let bits_axis = self.kind.bits_per_symbol() / 2;
                let levels = 1usize << bits_axis;
                let level = |v: T| {
                    let top = from_usize::<T>(levels - 1);
                    let idx = ((v / self.axis_scale + top) / lit(2.0)).round();
                    let idx = idx.max(T::zero()).min(top);
                    idx.to_usize().unwrap_or(0)
                };
                (gray(level(y.re)) << bits_axis) | gray(level(y.im))
            }
        }
    }
}

/// Pairwise phase differences `(arg p − arg q) mod π`, deduplicated and
/// sorted. Zero points carry no phase and are skipped.
pub fn omega_set_of<T: Real>(points: &[Complex<T>]) -> Vec<T> {
    let pi = T::PI();
    let tol = lit::<T>(OMEGA_TOLERANCE).max(T::epsilon() * lit(64.0));
    let args: Vec<T> = points
        .iter()
        .filter(|p| p.norm_sqr() > T::zero())
        .map(|p| p.arg())
        .collect();
    let mut diffs = Vec::with_capacity(args.len() * args.len());
    for &a in &args {
        for &b in &args {
            let mut d = wrap(a - b, pi);
            if pi - d < tol {
                d = T::zero();
            }
            diffs.push(d);
        }
    }
    if diffs.is_empty() {
        return vec![T::zero()];
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).expect("finite phases"));
    let mut out: Vec<T> = Vec::new();
    for d in diffs {
        match out.last() {
            Some(&last) if d - last < tol => {}
            _ => out.push(d),
        }
    }
    out
}
