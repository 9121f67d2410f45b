//! Closed-form performance predictors for the blind mixture-fitting receiver.
//!
//! Everything here is a pure function of scalar link parameters:
//!
//!   * [`q_function`] -- the standard normal tail Q(z).
//!   * [`em_error_bound`] -- the centroid-error bound for EM after t
//!     iterations, (1/2^t) E0 + (3 R_max / kappa) sqrt(C3h M d ln N / N),
//!     with its sample-size applicability condition
//!     [`check_sample_size`].
//!   * [`phase_mismatch`] -- the residual reference-phase error of a blind
//!     fit on N samples, phi = atan(6 M sqrt(C3h M d ln N / N)), clamped to
//!     [0, pi/4] where the rotated-reference SER formulas are valid.
//!   * [`ser_single_user`] / [`ser_noma_two_user`] -- QPSK symbol error rate
//!     approximations under that phase mismatch, for one user and for a
//!     two-user superposition decoded by successive cancellation:
//!
//!     ```text
//!     P1 ~ [Q(a sin(pi/4 - phi1)) + Q(a sin(pi/4 + phi1))
//!         + Q(b sin(pi/4 - phi1)) + Q(b sin(pi/4 + phi1))] / 4
//!     P2 ~  Q(s2 sin(pi/4 - phi2)) + Q(s2 sin(pi/4 + phi2))
//!     ```
//!
//!     with s_i = sqrt(2 gamma_i), a = s1 + s2, b = s1 - s2.
//!   * [`ser_noma_reference`] -- the full-CSI strong-user reference
//!     Q(sqrt(g1) + sqrt(g2)) + Q(sqrt(g1) - sqrt(g2)).
//!   * [`centroid_geometry`] -- R_min, R_max, and the minimum component
//!     weight of the superposed constellation, feeding [`TheoryParams`].
//!
//! The derived constants C2h = C2 ln(M (2 R_max + sqrt(d))) and
//! C3h = C3 ln(M (3 R_max^2 + sqrt(d))) are always recomputed from the
//! primitive fields, never cached. C0-C2 have no numeric values in the
//! underlying analysis and default to 1; C3 acts as a calibration constant
//! for the SER predictions and defaults to 0.005.

use crate::channel::ChannelState;
use crate::modem::Constellation;
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_4, SQRT_2};
use thiserror::Error;

/// Largest superposed-constellation size [`centroid_geometry`] will
/// enumerate; beyond this the exhaustive pairwise scan becomes impractical.
pub const MAX_CENTROIDS: usize = 16_384;

/// Errors raised by predictor parameter validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    /// A [`TheoryParams`] field violates its documented range.
    #[error("theory parameter {field} is out of range (got {value})")]
    InvalidParams { field: &'static str, value: f64 },
    /// Successive cancellation decodes the stronger user first.
    #[error("SIC ordering requires gamma1 >= gamma2 (got gamma1 = {gamma1}, gamma2 = {gamma2})")]
    SicOrdering { gamma1: f64, gamma2: f64 },
    /// Centroid geometry needs at least two centroids.
    #[error("need at least two superposed centroids (got {count})")]
    NotEnoughCentroids { count: usize },
    /// The superposed constellation is too large to enumerate.
    #[error("{count} centroids exceed the supported cap of {cap}")]
    TooManyCentroids { count: usize, cap: usize },
    /// Two centroids coincide, so R_min (and with it every bound) degenerates.
    #[error("coincident centroids: minimum pairwise distance {r_min} is not positive")]
    DegenerateGeometry { r_min: f64 },
}

/// Parameters of the EM error bound and sample-size condition.
///
/// `c2_hat`/`c3_hat` are methods rather than fields so they can never go
/// stale when a primitive field changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    /// Universal constants of the underlying analysis; no numeric values are
    /// known, so c0..c2 default to 1 and c3 to the calibration default 0.005.
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Minimum mixture weight; at most 1/m (uniform symbols give exactly 1/m).
    pub kappa: f64,
    /// Minimum distance between distinct true centroids.
    pub r_min: f64,
    /// Maximum distance between true centroids.
    pub r_max: f64,
    /// Sample dimension (2 for IQ data).
    pub d: usize,
    /// Mixture component count M.
    pub m: usize,
    /// Sample size N.
    pub n: usize,
}

impl Default for TheoryParams {
    /// Single-user unit-SNR QPSK at the default sample size: the centroid
    /// square has side sqrt(2) and diagonal 2, and uniform symbols give
    /// kappa = 1/4.
    fn default() -> Self {
        Self {
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 0.005,
            kappa: 0.25,
            r_min: SQRT_2,
            r_max: 2.0,
            d: 2,
            m: 4,
            n: 500,
        }
    }
}

impl TheoryParams {
    /// Checks every field range: positive constants, 0 < kappa <= 1/m,
    /// 0 < r_min <= r_max, d >= 1, m >= 1, n >= 2.
    pub fn validate(&self) -> Result<(), TheoryError> {
        let positive = [
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
        ];
        for (field, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(TheoryError::InvalidParams { field, value });
            }
        }
        if self.m < 1 {
            return Err(TheoryError::InvalidParams {
                field: "m",
                value: self.m as f64,
            });
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0 / self.m as f64) {
            return Err(TheoryError::InvalidParams {
                field: "kappa",
                value: self.kappa,
            });
        }
        if !(self.r_min > 0.0) || !self.r_max.is_finite() || self.r_min > self.r_max {
            return Err(TheoryError::InvalidParams {
                field: "r_min/r_max",
                value: self.r_min,
            });
        }
        if self.d < 1 {
            return Err(TheoryError::InvalidParams {
                field: "d",
                value: self.d as f64,
            });
        }
        if self.n < 2 {
            return Err(TheoryError::InvalidParams {
                field: "n",
                value: self.n as f64,
            });
        }
        Ok(())
    }

    /// C2h = C2 ln(M (2 R_max + sqrt(d))), recomputed on every call.
    pub fn c2_hat(&self) -> f64 {
        self.c2 * (self.m as f64 * (2.0 * self.r_max + (self.d as f64).sqrt())).ln()
    }

    /// C3h = C3 ln(M (3 R_max^2 + sqrt(d))), recomputed on every call.
    pub fn c3_hat(&self) -> f64 {
        self.c3 * (self.m as f64 * (3.0 * self.r_max * self.r_max + (self.d as f64).sqrt())).ln()
    }
}

/// Standard normal tail probability Q(z) = P(Z > z), evaluated through the
/// complementary error function: Q(z) = erfc(z / sqrt(2)) / 2.
///
/// Finite inputs give probabilities in [0, 1]; NaN propagates.
pub fn q_function(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Upper bound on the worst-case centroid error after `t` EM iterations from
/// an initial error of `init_error`:
///
/// ```text
/// (1/2^t) init_error + (3 R_max / kappa) sqrt(C3h M d ln(N) / N)
/// ```
///
/// The first term halves every iteration; the second is the statistical
/// floor the iterates converge to.
pub fn em_error_bound(
    params: &TheoryParams,
    t: u32,
    init_error: f64,
) -> Result<f64, TheoryError> {
    params.validate()?;
    if !(init_error >= 0.0) || !init_error.is_finite() {
        return Err(TheoryError::InvalidParams {
            field: "init_error",
            value: init_error,
        });
    }
    let n = params.n as f64;
    let floor = (3.0 * params.r_max / params.kappa)
        * (params.c3_hat() * params.m as f64 * params.d as f64 * n.ln() / n).sqrt();
    Ok(0.5f64.powi(t.min(i32::MAX as u32) as i32) * init_error + floor)
}

/// Sample-size condition for the EM error bound to apply:
///
/// ```text
/// ln(N)/N <= min( kappa^2 / (144 C2h M d),
///                 kappa^2 init_error^2 / (9 C3h R_max^2 M d) )
/// ```
///
/// The comparison is inclusive: a sample size exactly on the boundary
/// satisfies the condition.
pub fn check_sample_size(params: &TheoryParams, init_error: f64) -> Result<bool, TheoryError> {
    params.validate()?;
    if !(init_error >= 0.0) || !init_error.is_finite() {
        return Err(TheoryError::InvalidParams {
            field: "init_error",
            value: init_error,
        });
    }
    let n = params.n as f64;
    let md = params.m as f64 * params.d as f64;
    let lhs = n.ln() / n;
    let rhs_mixing = params.kappa * params.kappa / (144.0 * params.c2_hat() * md);
    let rhs_floor = params.kappa * params.kappa * init_error * init_error
        / (9.0 * params.c3_hat() * params.r_max * params.r_max * md);
    Ok(lhs <= rhs_mixing.min(rhs_floor))
}

/// Source of the scale entering the derived constant C3h: either the
/// farthest-centroid distance directly, or a user SNR (for unit-energy QPSK
/// the farthest centroids are 2 sqrt(gamma) apart, so 3 R_max^2 = 12 gamma).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseSource {
    /// C3h = C3 ln(M (3 r_max^2 + sqrt(d))).
    FromRmax(f64),
    /// C3h = C3 ln(M (12 gamma + sqrt(d))).
    FromSnr(f64),
}

/// Residual phase error of a blind reference fitted to `n` samples:
///
/// ```text
/// phi = atan(6 M sqrt(C3h M d ln(N) / N)),  clamped to [0, pi/4]
/// ```
///
/// The clamp marks the regime where the rotated-reference SER formulas stop
/// being informative (they require |phi| <= pi/4); a returned pi/4 therefore
/// reads as "no useful phase guarantee at this sample size".
///
/// # Panics
/// If `m` or `d` is zero, `n < 2`, `c3 < 0`, or the source scale is negative.
/// (`c3 = 0` is allowed and gives the perfect-reference limit phi = 0.)
pub fn phase_mismatch(m: usize, d: usize, n: usize, c3: f64, source: PhaseSource) -> f64 {
    assert!(m >= 1, "component count must be at least 1 (got {m})");
    assert!(d >= 1, "dimension must be at least 1 (got {d})");
    assert!(n >= 2, "sample size must be at least 2 (got {n})");
    assert!(c3 >= 0.0, "c3 must be nonnegative (got {c3})");
    let scale = match source {
        PhaseSource::FromRmax(r_max) => {
            assert!(r_max >= 0.0, "r_max must be nonnegative (got {r_max})");
            3.0 * r_max * r_max
        }
        PhaseSource::FromSnr(gamma) => {
            assert!(gamma >= 0.0, "gamma must be nonnegative (got {gamma})");
            12.0 * gamma
        }
    };
    // The log argument is at least m * sqrt(d) >= 1, so c3_hat >= 0 and the
    // square root below is always real.
    let c3_hat = c3 * (m as f64 * (scale + (d as f64).sqrt())).ln();
    let nf = n as f64;
    let phi = (6.0 * m as f64 * (c3_hat * m as f64 * d as f64 * nf.ln() / nf).sqrt()).atan();
    phi.min(FRAC_PI_4)
}

/// QPSK SER when the receiver's reference constellation is rotated by `phi`:
/// Q(s sin(pi/4 - phi)) + Q(s sin(pi/4 + phi)) with s = sqrt(2 gamma).
/// Reduces to 2 Q(sqrt(gamma)) at phi = 0 and is even in phi.
///
/// # Panics
/// If `gamma` is negative.
pub fn ser_qpsk_phase_mismatch(gamma: f64, phi: f64) -> f64 {
    assert!(gamma >= 0.0, "gamma must be nonnegative (got {gamma})");
    rotated_pair((2.0 * gamma).sqrt(), phi)
}

/// The recurring two-term pattern Q(s sin(pi/4 - phi)) + Q(s sin(pi/4 + phi)).
fn rotated_pair(s: f64, phi: f64) -> f64 {
    q_function(s * (FRAC_PI_4 - phi).sin()) + q_function(s * (FRAC_PI_4 + phi).sin())
}

/// Predicted SER of a lone QPSK user decoded blindly from `n` samples: the
/// rotated-reference formula evaluated at the phase mismatch implied by
/// (m, d, n, c3) with the SNR-sourced scale.
///
/// # Panics
/// As [`phase_mismatch`], plus `gamma < 0`.
pub fn ser_single_user(gamma: f64, n: usize, m: usize, d: usize, c3: f64) -> f64 {
    assert!(gamma >= 0.0, "gamma must be nonnegative (got {gamma})");
    let phi = phase_mismatch(m, d, n, c3, PhaseSource::FromSnr(gamma));
    rotated_pair((2.0 * gamma).sqrt(), phi)
}

/// Predicted per-user SERs (p1, p2) of a two-user QPSK superposition decoded
/// by successive cancellation of user 1 (the stronger). Both users' phase
/// mismatches come from [`phase_mismatch`] with M = 4, d = 2, and their own
/// SNR; user 2's formula is exactly the single-user one at gamma2.
///
/// Errors if `gamma1 < gamma2` (the cancellation order assumption).
///
/// # Panics
/// If `gamma2` is negative or the phase-mismatch preconditions fail.
pub fn ser_noma_two_user(
    gamma1: f64,
    gamma2: f64,
    n: usize,
    c3: f64,
) -> Result<(f64, f64), TheoryError> {
    if !(gamma1 >= gamma2) {
        return Err(TheoryError::SicOrdering { gamma1, gamma2 });
    }
    assert!(gamma2 >= 0.0, "gamma2 must be nonnegative (got {gamma2})");
    let phi1 = phase_mismatch(4, 2, n, c3, PhaseSource::FromSnr(gamma1));
    let phi2 = phase_mismatch(4, 2, n, c3, PhaseSource::FromSnr(gamma2));
    let s1 = (2.0 * gamma1).sqrt();
    let s2 = (2.0 * gamma2).sqrt();
    let p1 = 0.25 * (rotated_pair(s1 + s2, phi1) + rotated_pair(s1 - s2, phi1));
    let p2 = rotated_pair(s2, phi2);
    Ok((p1, p2))
}

/// Full-CSI reference SER for the stronger of two superposed QPSK users:
/// Q(sqrt(gamma1) + sqrt(gamma2)) + Q(sqrt(gamma1) - sqrt(gamma2)).
///
/// # Panics
/// If either SNR is negative.
pub fn ser_noma_reference(gamma1: f64, gamma2: f64) -> f64 {
    assert!(
        gamma1 >= 0.0 && gamma2 >= 0.0,
        "SNRs must be nonnegative (got {gamma1}, {gamma2})"
    );
    q_function(gamma1.sqrt() + gamma2.sqrt()) + q_function(gamma1.sqrt() - gamma2.sqrt())
}

/// Geometry of the true superposed constellation: extreme pairwise centroid
/// distances and the minimum component weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidGeometry {
    /// Distance between the closest pair of centroids.
    pub r_min: f64,
    /// Distance between the farthest pair of centroids.
    pub r_max: f64,
    /// Minimum mixture weight; 1/M^K for K users with equiprobable symbols.
    pub kappa: f64,
}

/// Enumerates the M^K centroids sum_i sqrt(P_i) h_i u_i over all joint symbol
/// tuples u and scans their pairwise distances.
///
/// Errors when fewer than two centroids exist, when the enumeration would
/// exceed [`MAX_CENTROIDS`], or when two centroids coincide (degenerate
/// geometry, e.g. a zero-SNR user).
pub fn centroid_geometry(
    states: &[ChannelState],
    constellation: &Constellation,
) -> Result<CentroidGeometry, TheoryError> {
    if states.is_empty() {
        return Err(TheoryError::NotEnoughCentroids { count: 1 });
    }
    let order = constellation.order();
    let count = order
        .checked_pow(states.len() as u32)
        .filter(|&c| c <= MAX_CENTROIDS)
        .ok_or(TheoryError::TooManyCentroids {
            count: usize::MAX,
            cap: MAX_CENTROIDS,
        })?;
    if count > MAX_CENTROIDS {
        return Err(TheoryError::TooManyCentroids {
            count,
            cap: MAX_CENTROIDS,
        });
    }

    let amplitudes: Vec<Complex64> = states.iter().map(ChannelState::effective_amplitude).collect();
    let mut centroids = Vec::with_capacity(count);
    let mut digits = vec![0usize; states.len()];
    loop {
        let centroid = amplitudes
            .iter()
            .zip(&digits)
            .map(|(amp, &symbol)| amp * constellation.point(symbol))
            .sum::<Complex64>();
        centroids.push(centroid);
        // Mixed-radix increment over the joint symbol tuple.
        let mut position = 0;
        loop {
            if position == digits.len() {
                break;
            }
            digits[position] += 1;
            if digits[position] < order {
                break;
            }
            digits[position] = 0;
            position += 1;
        }
        if position == digits.len() {
            break;
        }
    }

    let mut r_min = f64::INFINITY;
    let mut r_max: f64 = 0.0;
    for i in 0..centroids.len() {
        for j in (i + 1)..centroids.len() {
            let distance = (centroids[i] - centroids[j]).norm();
            r_min = r_min.min(distance);
            r_max = r_max.max(distance);
        }
    }
    if !(r_min > 0.0) {
        return Err(TheoryError::DegenerateGeometry { r_min });
    }
    Ok(CentroidGeometry {
        r_min,
        r_max,
        kappa: 1.0 / count as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Params matching the frozen oracle case: kappa = 0.25, R_max = 6,
    /// M = 4, d = 2, C2 = C3 = 1.
    fn oracle_params(n: usize) -> TheoryParams {
        TheoryParams {
            c2: 1.0,
            c3: 1.0,
            kappa: 0.25,
            r_min: 1.0,
            r_max: 6.0,
            n,
            ..TheoryParams::default()
        }
    }

    #[test]
    fn q_of_zero_is_exactly_one_half() {
        assert_eq!(q_function(0.0), 0.5);
    }

    #[test]
    fn q_matches_the_quadrature_oracle() {
        // Frozen from adaptive quadrature of the normal density.
        assert_abs_diff_eq!(q_function(1.0), 0.15865525393145705, epsilon = 1e-10);
        assert_abs_diff_eq!(q_function(2.0), 0.0227501319481792072, epsilon = 1e-12);
        assert_abs_diff_eq!(q_function(-2.0), 0.9772498680518207928, epsilon = 1e-12);
    }

    #[test]
    fn q_satisfies_the_reflection_identity_on_a_grid() {
        for i in 0..=32 {
            let z = -4.0 + 0.25 * i as f64;
            assert_abs_diff_eq!(q_function(z) + q_function(-z), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn q_is_strictly_decreasing() {
        let mut previous = q_function(-8.0);
        for i in 1..=64 {
            let z = -8.0 + 0.25 * i as f64;
            let value = q_function(z);
            assert!(
                value < previous,
                "Q not strictly decreasing at z = {z}: {value} >= {previous}"
            );
            previous = value;
        }
    }

    #[test]
    fn em_error_bound_reaches_the_statistical_floor_as_iterations_grow() {
        // Frozen floor value for the oracle params at N = 1000.
        let params = oracle_params(1000);
        let bound = em_error_bound(&params, 1_000_000, 2.0).unwrap();
        assert_abs_diff_eq!(bound, 41.73966913741620055, epsilon = 1e-12);
    }

    #[test]
    fn em_error_bound_matches_the_frozen_finite_iteration_value() {
        let params = oracle_params(1000);
        let bound = em_error_bound(&params, 3, 2.0).unwrap();
        assert_abs_diff_eq!(bound, 41.98966913741620055, epsilon = 1e-12);
    }

    #[test]
    fn em_error_bound_initial_term_halves_each_iteration() {
        let params = oracle_params(1000);
        let floor = em_error_bound(&params, 1_000_000, 0.0).unwrap();
        for t in 0..20 {
            let now = em_error_bound(&params, t, 8.0).unwrap() - floor;
            let next = em_error_bound(&params, t + 1, 8.0).unwrap() - floor;
            assert_abs_diff_eq!(next, now / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn em_error_bound_decreases_with_sample_size() {
        let values: Vec<f64> = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| em_error_bound(&oracle_params(n), 5, 1.0).unwrap())
            .collect();
        assert!(
            values[0] > values[1] && values[1] > values[2],
            "bound not strictly decreasing over N grid: {values:?}"
        );
    }

    #[test]
    fn em_error_bound_is_non_increasing_in_iterations() {
        let params = oracle_params(500);
        let mut previous = f64::INFINITY;
        for t in 0..50 {
            let bound = em_error_bound(&params, t, 3.0).unwrap();
            assert!(
                bound <= previous,
                "bound rose from {previous} to {bound} at t = {t}"
            );
            previous = bound;
        }
    }

    #[test]
    fn em_error_bound_rejects_invalid_params() {
        let mut params = oracle_params(1000);
        params.kappa = 0.5; // exceeds 1/m = 0.25
        assert!(matches!(
            em_error_bound(&params, 1, 1.0),
            Err(TheoryError::InvalidParams { field: "kappa", .. })
        ));
        let params = oracle_params(1000);
        assert!(matches!(
            em_error_bound(&params, 1, -1.0),
            Err(TheoryError::InvalidParams { field: "init_error", .. })
        ));
    }

    #[test]
    fn sample_size_condition_fails_at_the_frozen_small_n_case() {
        // N = 10: ln(N)/N = 0.23, far above both right-hand sides
        // (1.36e-5 and 3.96e-6 from the independent evaluation).
        assert!(!check_sample_size(&oracle_params(10), 1.0).unwrap());
    }

    #[test]
    fn sample_size_condition_holds_for_astronomical_n() {
        assert!(check_sample_size(&oracle_params(1_000_000_000_000), 1.0).unwrap());
    }

    #[test]
    fn sample_size_condition_flips_exactly_once_at_the_threshold() {
        // The condition is monotone in N (ln N / N decreasing for N >= 3), so
        // there is a single crossing; locate it and confirm the flip.
        let holds = |n: usize| check_sample_size(&oracle_params(n), 1.0).unwrap();
        let (mut lo, mut hi) = (10usize, 10_000_000);
        assert!(!holds(lo) && holds(hi), "bracketing assumption broken");
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if holds(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!(!holds(lo) && holds(lo + 1), "no clean threshold at N = {lo}");
    }

    #[test]
    fn phase_mismatch_vanishes_for_enormous_sample_sizes() {
        let phi = phase_mismatch(4, 2, 1_000_000_000_000_000, 0.005, PhaseSource::FromSnr(10.0));
        assert!(phi >= 0.0 && phi <= 1e-5, "phi = {phi} has not vanished");
    }

    #[test]
    fn phase_mismatch_snr_and_rmax_sources_agree_for_qpsk() {
        // 3 (2 sqrt(gamma))^2 = 12 gamma, so the SNR source is the R_max
        // source at the QPSK diagonal.
        for gamma in [0.5, 1.0, 10.0, 40.0] {
            let from_snr = phase_mismatch(4, 2, 100_000, 0.005, PhaseSource::FromSnr(gamma));
            let from_rmax = phase_mismatch(
                4,
                2,
                100_000,
                0.005,
                PhaseSource::FromRmax(2.0 * gamma.sqrt()),
            );
            assert_abs_diff_eq!(from_snr, from_rmax, epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_mismatch_clamps_to_quarter_pi_at_small_sample_sizes() {
        assert_eq!(
            phase_mismatch(4, 2, 500, 0.005, PhaseSource::FromSnr(10.0)),
            FRAC_PI_4
        );
        assert_eq!(
            phase_mismatch(4, 2, 500, 0.005, PhaseSource::FromRmax(6.0)),
            FRAC_PI_4
        );
    }

    #[test]
    fn phase_mismatch_matches_the_independent_evaluation() {
        // Frozen from 40-digit arithmetic at n = 10^6, c3 = 0.005.
        assert_abs_diff_eq!(
            phase_mismatch(4, 2, 1_000_000, 0.005, PhaseSource::FromSnr(10.0)),
            0.044343238614014602603,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            phase_mismatch(4, 2, 1_000_000, 0.005, PhaseSource::FromRmax(6.0)),
            0.043969117569523879777,
            epsilon = 1e-12
        );
    }

    #[test]
    fn phase_mismatch_with_zero_c3_is_zero() {
        assert_eq!(phase_mismatch(4, 2, 500, 0.0, PhaseSource::FromSnr(10.0)), 0.0);
    }

    #[test]
    fn single_user_ser_with_perfect_reference_is_twice_q_sqrt_gamma() {
        // c3 = 0 forces phi = 0, collapsing the formula to 2 Q(sqrt(gamma)).
        // Frozen: 2 Q(sqrt(10)) = 1.5654022580025497e-3.
        let got = ser_single_user(10.0, 500, 4, 2, 0.0);
        assert_abs_diff_eq!(got, 1.5654022580025497e-3, epsilon = 1e-12);
        assert_abs_diff_eq!(
            got,
            2.0 * q_function(10.0f64.sqrt()),
            epsilon = 1e-15
        );
    }

    #[test]
    fn single_user_ser_matches_the_independent_evaluation() {
        // Frozen at gamma = 10, n = 10^6, c3 = 0.005 (phi not clamped).
        assert_abs_diff_eq!(
            ser_single_user(10.0, 1_000_000, 4, 2, 0.005),
            0.0017526438294691601706,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rotated_reference_ser_is_even_in_phi() {
        for gamma in [0.5, 4.0, 10.0] {
            for i in 0..8 {
                let phi = FRAC_PI_4 * i as f64 / 8.0;
                assert_eq!(
                    ser_qpsk_phase_mismatch(gamma, phi),
                    ser_qpsk_phase_mismatch(gamma, -phi),
                    "not even at gamma = {gamma}, phi = {phi}"
                );
            }
        }
    }

    #[test]
    fn rotated_reference_ser_monotonicity_grid() {
        // Non-increasing in gamma at fixed phi; non-decreasing in phi on
        // [0, pi/4) at fixed gamma.
        for i in 0..8 {
            let phi = FRAC_PI_4 * i as f64 / 8.0;
            let mut previous = f64::INFINITY;
            for g in 1..=40 {
                let value = ser_qpsk_phase_mismatch(g as f64 * 0.5, phi);
                assert!(value <= previous, "SER rose in gamma at phi = {phi}");
                previous = value;
            }
        }
        for g in [0.5, 2.0, 10.0] {
            let mut previous = 0.0;
            for i in 0..16 {
                let phi = FRAC_PI_4 * i as f64 / 16.0;
                let value = ser_qpsk_phase_mismatch(g, phi);
                assert!(value >= previous, "SER fell in phi at gamma = {g}");
                previous = value;
            }
        }
    }

    #[test]
    fn two_user_ser_matches_the_frozen_values() {
        // gamma1 = 15.85 (12 dB above gamma2 = 2), n = 500, c3 = 0.005:
        // both phases clamp to pi/4.
        let (p1, p2) = ser_noma_two_user(15.85, 2.0, 500, 0.005).unwrap();
        assert_abs_diff_eq!(p1, 0.25003538988496770681, epsilon = 1e-12);
        assert_abs_diff_eq!(p2, 0.5227501319481792072, epsilon = 1e-12);
        // Same SNRs at n = 10^6: phases well inside the valid range.
        let (p1, p2) = ser_noma_two_user(15.85, 2.0, 1_000_000, 0.005).unwrap();
        assert_abs_diff_eq!(p1, 0.002718060447668713923, epsilon = 1e-12);
        assert_abs_diff_eq!(p2, 0.15821449218981769948, epsilon = 1e-12);
    }

    #[test]
    fn two_user_ser_with_perfect_reference_halves_the_reference_formula() {
        // At phi = 0 the four quarter-weighted terms pair up into
        // (1/2)[Q(sqrt(g1) + sqrt(g2)) + Q(sqrt(g1) - sqrt(g2))].
        let (p1, _) = ser_noma_two_user(10.0, 1.0, 500, 0.0).unwrap();
        assert_abs_diff_eq!(p1, 0.5 * ser_noma_reference(10.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn weak_user_formula_is_exactly_the_single_user_formula() {
        for n in [100usize, 1000, 100_000] {
            for (g1, g2) in [(10.0, 2.0), (15.85, 15.85), (40.0, 0.5)] {
                let (_, p2) = ser_noma_two_user(g1, g2, n, 0.005).unwrap();
                assert_eq!(
                    p2,
                    ser_single_user(g2, n, 4, 2, 0.005),
                    "user-2 formula diverged at g2 = {g2}, n = {n}"
                );
            }
        }
    }

    #[test]
    fn two_user_ser_rejects_inverted_ordering() {
        assert_eq!(
            ser_noma_two_user(1.0, 2.0, 500, 0.005).unwrap_err(),
            TheoryError::SicOrdering {
                gamma1: 1.0,
                gamma2: 2.0
            }
        );
    }

    #[test]
    fn reference_ser_degenerates_to_single_user_without_an_interferer() {
        let got = ser_noma_reference(10.0, 0.0);
        assert_eq!(got, 2.0 * q_function(10.0f64.sqrt()));
    }

    #[test]
    fn reference_ser_at_equal_snrs_pins_the_second_term_at_one_half() {
        let gamma = 3.7;
        let got = ser_noma_reference(gamma, gamma);
        assert_eq!(got, q_function(2.0 * gamma.sqrt()) + 0.5);
    }

    #[test]
    fn reference_ser_matches_the_q_oracle() {
        assert_abs_diff_eq!(
            ser_noma_reference(10.0, 1.0),
            0.015314144749523961585,
            epsilon = 1e-12
        );
    }

    #[test]
    fn qpsk_centroid_geometry_is_the_scaled_square() {
        let gamma = 9.0f64;
        let state = ChannelState::from_snr(gamma, 0.0).unwrap();
        let geometry = centroid_geometry(&[state], &Constellation::qpsk()).unwrap();
        assert_abs_diff_eq!(geometry.r_max, 2.0 * gamma.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(geometry.r_min, SQRT_2 * gamma.sqrt(), epsilon = 1e-12);
        assert_eq!(geometry.kappa, 0.25);
    }

    #[test]
    fn centroid_geometry_is_rotation_invariant() {
        let reference = centroid_geometry(
            &[ChannelState::from_snr(4.0, 0.0).unwrap()],
            &Constellation::qpsk(),
        )
        .unwrap();
        for i in 1..8 {
            let rotated = centroid_geometry(
                &[ChannelState::from_snr(4.0, 0.7 * i as f64).unwrap()],
                &Constellation::qpsk(),
            )
            .unwrap();
            assert_abs_diff_eq!(rotated.r_min, reference.r_min, epsilon = 1e-12);
            assert_abs_diff_eq!(rotated.r_max, reference.r_max, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_user_centroid_geometry_matches_a_brute_force_scan() {
        let constellation = Constellation::qpsk();
        let states = [
            ChannelState::from_snr(10.0, 0.9).unwrap(),
            ChannelState::from_snr(2.5, -1.7).unwrap(),
        ];
        let geometry = centroid_geometry(&states, &constellation).unwrap();
        // Independent enumeration with explicit nested symbol loops.
        let mut centroids = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                centroids.push(
                    states[0].effective_amplitude() * constellation.point(a)
                        + states[1].effective_amplitude() * constellation.point(b),
                );
            }
        }
        let mut r_min = f64::INFINITY;
        let mut r_max: f64 = 0.0;
        for i in 0..16 {
            for j in (i + 1)..16 {
                let d = (centroids[i] - centroids[j]).norm();
                r_min = r_min.min(d);
                r_max = r_max.max(d);
            }
        }
        assert_abs_diff_eq!(geometry.r_min, r_min, epsilon = 1e-12);
        assert_abs_diff_eq!(geometry.r_max, r_max, epsilon = 1e-12);
        assert_eq!(geometry.kappa, 1.0 / 16.0);
    }

    #[test]
    fn centroid_geometry_rejects_degenerate_and_oversized_inputs() {
        let constellation = Constellation::qpsk();
        // A zero-SNR user duplicates every centroid.
        let states = [
            ChannelState::from_snr(4.0, 0.0).unwrap(),
            ChannelState::from_snr(0.0, 0.0).unwrap(),
        ];
        assert!(matches!(
            centroid_geometry(&states, &constellation),
            Err(TheoryError::DegenerateGeometry { .. })
        ));
        assert_eq!(
            centroid_geometry(&[], &constellation).unwrap_err(),
            TheoryError::NotEnoughCentroids { count: 1 }
        );
        // 4^8 = 65536 exceeds the enumeration cap.
        let many = vec![ChannelState::from_snr(1.0, 0.0).unwrap(); 8];
        assert!(matches!(
            centroid_geometry(&many, &constellation),
            Err(TheoryError::TooManyCentroids { .. })
        ));
    }

    #[test]
    fn params_validation_covers_every_field() {
        assert!(TheoryParams::default().validate().is_ok());
        let cases: Vec<(&str, TheoryParams)> = vec![
            ("c3", TheoryParams { c3: 0.0, ..TheoryParams::default() }),
            ("kappa", TheoryParams { kappa: 0.3, ..TheoryParams::default() }),
            ("kappa", TheoryParams { kappa: 0.0, ..TheoryParams::default() }),
            ("r_min/r_max", TheoryParams { r_min: 3.0, r_max: 2.0, ..TheoryParams::default() }),
            ("r_min/r_max", TheoryParams { r_min: 0.0, ..TheoryParams::default() }),
            ("d", TheoryParams { d: 0, ..TheoryParams::default() }),
            ("m", TheoryParams { m: 0, ..TheoryParams::default() }),
            ("n", TheoryParams { n: 1, ..TheoryParams::default() }),
        ];
        for (field, params) in cases {
            match params.validate() {
                Err(TheoryError::InvalidParams { field: got, .. }) => {
                    assert_eq!(got, field, "wrong field reported")
                }
                other => panic!("expected InvalidParams for {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn derived_constants_follow_their_formulas() {
        let params = oracle_params(1000);
        assert_abs_diff_eq!(
            params.c2_hat(),
            (4.0 * (12.0 + SQRT_2)).ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            params.c3_hat(),
            (4.0 * (108.0 + SQRT_2)).ln(),
            epsilon = 1e-15
        );
    }
}
