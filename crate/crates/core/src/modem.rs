//! Constellations, bit/symbol mapping, and minimum-distance demapping under an
//! estimated complex channel (rotated and scaled decision regions).
//!
//! A symbol index is the integer value of its bit tuple (MSB first), so the
//! Gray property lives in the geometry: neighbouring points differ in one bit.
//!
//! ```text
//! QPSK (unit circle)            16-QAM ({-3,-1,+1,+3}^2 / sqrt(10))
//!   00 -> e^{i pi/4}              I level from (b0 b1), Q level from (b2 b3):
//!   01 -> e^{i 3pi/4}             00 -> -3   01 -> -1   11 -> +1   10 -> +3
//!   11 -> e^{i 5pi/4}
//!   10 -> e^{i 7pi/4}
//! ```
//!
//! Both constellations have unit average energy and 4-fold rotational
//! symmetry, which is what the receiver's phase-ambiguity resolution relies on.

use num_complex::Complex64;
use thiserror::Error;

/// One complex baseband sample: in-phase is the real part, quadrature the
/// imaginary part.
pub type IqSample = Complex64;

/// Modulation family used to build a [`Constellation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Psk,
    Qam,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModemError {
    #[error("unsupported constellation: order {order} with scheme {scheme:?}")]
    Unsupported { order: usize, scheme: Scheme },
    #[error("bit sequence length {len} is not a multiple of {bits_per_symbol}")]
    RaggedBits { len: usize, bits_per_symbol: usize },
    #[error("demap gain must be > 0, got {0}")]
    NonPositiveGain(f64),
}

/// An ordered, unit-average-energy symbol set with its bit mapping.
#[derive(Debug, Clone)]
pub struct Constellation {
    points: Vec<Complex64>,
    bits_per_symbol: usize,
    rotational_symmetry_order: usize,
    scheme: Scheme,
}

impl Constellation {
    /// Builds a supported constellation: (4, Psk) for QPSK or (16, Qam).
    pub fn new(order: usize, scheme: Scheme) -> Result<Self, ModemError> {
        match (order, scheme) {
            (4, Scheme::Psk) => Ok(Self {
                points: (0..4).map(qpsk_point).collect(),
                bits_per_symbol: 2,
                rotational_symmetry_order: 4,
                scheme,
            }),
            (16, Scheme::Qam) => Ok(Self {
                points: (0..16).map(qam16_point).collect(),
                bits_per_symbol: 4,
                rotational_symmetry_order: 4,
                scheme,
            }),
            _ => Err(ModemError::Unsupported { order, scheme }),
        }
    }

    pub fn qpsk() -> Self {
        Self::new(4, Scheme::Psk).expect("QPSK is always supported")
    }

    pub fn qam16() -> Self {
        Self::new(16, Scheme::Qam).expect("16-QAM is always supported")
    }

    /// Number of symbols M.
    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Count of plane rotations that map the point set onto itself.
    pub fn rotational_symmetry_order(&self) -> usize {
        self.rotational_symmetry_order
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// True when every point sits at the same radius (QPSK); the receiver uses
    /// a simpler phase estimator in that case.
    pub fn is_equal_magnitude(&self) -> bool {
        let r0 = self.points[0].norm();
        self.points.iter().all(|p| (p.norm() - r0).abs() < 1e-9)
    }

    /// Bit tuple (MSB first) for a symbol index.
    pub fn bits_of_index(&self, index: usize) -> Vec<bool> {
        (0..self.bits_per_symbol)
            .rev()
            .map(|b| (index >> b) & 1 == 1)
            .collect()
    }

    /// Symbol index for a bit tuple (MSB first). Callers pass exactly
    /// `bits_per_symbol` bits.
    pub fn index_of_bits(&self, bits: &[bool]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
    }
}

fn qpsk_point(index: usize) -> Complex64 {
    // Gray map on the unit circle: 00, 01, 11, 10 walk counter-clockwise from
    // pi/4, i.e. indices 0, 1, 3, 2. Components are written out as +/-(1/sqrt 2)
    // rather than computed through `from_polar` so mirror-image points are
    // exact reflections bit for bit; nearest-point ties then resolve the same
    // way on every platform.
    let c = std::f64::consts::FRAC_1_SQRT_2;
    match index {
        0 => Complex64::new(c, c),
        1 => Complex64::new(-c, c),
        3 => Complex64::new(-c, -c),
        _ => Complex64::new(c, -c),
    }
}

fn qam16_point(index: usize) -> Complex64 {
    let i_level = gray_pair_level(index >> 3 & 1 == 1, index >> 2 & 1 == 1);
    let q_level = gray_pair_level(index >> 1 & 1 == 1, index & 1 == 1);
    Complex64::new(i_level, q_level) / 10f64.sqrt()
}

/// Per-axis Gray code on the 4 amplitude levels: 00 -> -3, 01 -> -1,
/// 11 -> +1, 10 -> +3. Adjacent levels differ in exactly one bit.
fn gray_pair_level(hi: bool, lo: bool) -> f64 {
    match (hi, lo) {
        (false, false) => -3.0,
        (false, true) => -1.0,
        (true, true) => 1.0,
        (true, false) => 3.0,
    }
}

/// Maps a bit sequence to symbols; the length must divide evenly into
/// `bits_per_symbol` tuples.
pub fn modulate(bits: &[bool], c: &Constellation) -> Result<Vec<Complex64>, ModemError> {
    if bits.len() % c.bits_per_symbol() != 0 {
        return Err(ModemError::RaggedBits {
            len: bits.len(),
            bits_per_symbol: c.bits_per_symbol(),
        });
    }
    Ok(bits
        .chunks(c.bits_per_symbol())
        .map(|tuple| c.point(c.index_of_bits(tuple)))
        .collect())
}

/// Nearest-point decision under an estimated channel: returns
/// `argmin_j |y - gain * e^{i phase} * s_j|^2`, ties broken toward the lowest
/// index. Equivalent to rotating the decision regions by `phase` and scaling
/// them by `gain`.
pub fn demap(
    y: IqSample,
    c: &Constellation,
    gain: f64,
    phase: f64,
) -> Result<usize, ModemError> {
    if !(gain > 0.0) {
        return Err(ModemError::NonPositiveGain(gain));
    }
    let channel = Complex64::from_polar(gain, phase);
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (j, s) in c.points().iter().enumerate() {
        let d2 = (y - channel * s).norm_sqr();
        if d2 < best_d2 {
            best_d2 = d2;
            best = j;
        }
    }
    Ok(best)
}
