//! Blind and reference receivers for the uplink superposition.
//!
//! The blind chain treats the received frame as an M-component Gaussian
//! mixture, fits it by EM, and reads the strongest remaining user off the
//! fitted centroids:
//!
//!   1. [`estimate_phase_and_gain`] turns M centroids into a gain magnitude
//!      and a reference phase known only modulo the constellation's
//!      rotational symmetry;
//!   2. [`resolve_ambiguity`] picks the symmetry branch whose phase is
//!      closest to the MMSE pilot estimate h = (x^H x + 1)^-1 x^H y;
//!   3. the frame is demapped against gain * e^{i phase} and the
//!      reconstructed contribution is subtracted from the residual.
//!
//! [`gmm_sic_detect`] repeats this for a known user count (successive
//! interference cancellation), [`grant_free_detect`] repeats it while the
//! residual power stays above the noise floor, stopping at a user cap.
//! [`mld_full_csi`] and [`mld_pilot_csi`] are the coherent baselines:
//! exhaustive joint maximum-likelihood detection with true channels and with
//! per-user least-squares channel estimates from time-orthogonal pilots.

use crate::channel::{ChannelError, ChannelState};
use crate::gmm::{self, EmConfig, GmmError, MixtureModel};
use crate::modem::{demap, Constellation, ModemError};
use crate::IqSample;
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Relative headroom over the noise power in the grant-free stopping rule:
/// detection rounds continue while the residual power exceeds
/// `noise_power * (1 + GRANT_FREE_MARGIN)`. The margin absorbs the sampling
/// variance of the residual-power estimate so pure noise is not mistaken for
/// one more user.
pub const GRANT_FREE_MARGIN: f64 = 0.1;

/// Cap on `users * order^users` for the exhaustive joint search; K = 5 QPSK
/// users or K = 3 16-QAM users fit, anything larger is refused.
pub const MLD_ENUMERATION_CAP: usize = 16_384;

/// Grid resolution of the 16-QAM rotation search within one symmetry sector.
const QAM_PHASE_GRID_STEPS: usize = 720;

/// Errors raised by the receivers.
#[derive(Debug, Error)]
pub enum ReceiverError {
    /// A fitted centroid sits at the origin, so its phase is undefined.
    #[error("mixture component {component} sits at the origin; phase is undefined")]
    DegenerateFit { component: usize },
    /// The ambiguity set is empty.
    #[error("no candidate phases supplied")]
    NoCandidatePhases,
    /// Pilot transmit and receive streams disagree in length.
    #[error("pilot streams disagree in length (tx {tx}, rx {rx})")]
    MismatchedPilots { tx: usize, rx: usize },
    /// All pilot symbols have zero energy (or there are none).
    #[error("pilot energy is zero; the channel phase is unobservable")]
    ZeroPilotEnergy,
    /// A pilot slot index points outside the frame.
    #[error("user {user} pilot position {position} outside frame of length {length}")]
    PilotOutOfRange {
        user: usize,
        position: usize,
        length: usize,
    },
    /// A pilot symbol index points outside the constellation.
    #[error("user {user} pilot symbol {symbol} outside constellation of order {order}")]
    PilotSymbolOutOfRange {
        user: usize,
        symbol: usize,
        order: usize,
    },
    /// Detection with a known user count needs one pilot set per user.
    #[error("need one pilot set per user (got {pilot_sets} for {users} users)")]
    PilotSetCountMismatch { pilot_sets: usize, users: usize },
    /// Per-user detection needs one constellation per user.
    #[error("need one constellation per user (got {constellations} for {users} users)")]
    ConstellationCountMismatch { constellations: usize, users: usize },
    /// User counts and caps must be at least 1.
    #[error("user count must be at least 1 (got {0})")]
    InvalidUserCount(usize),
    /// The received frame has no samples.
    #[error("received frame is empty")]
    EmptyFrame,
    /// The grant-free stopping rule needs a positive noise power.
    #[error("noise power must be positive (got {0})")]
    InvalidNoisePower(f64),
    /// The joint hypothesis space is too large to enumerate.
    #[error("joint search of {combinations} hypotheses exceeds the cap of {cap}")]
    CombinatorialCap { combinations: usize, cap: usize },
    /// Truth streams passed for scoring do not match the report shape.
    #[error("truth streams do not match the report ({detail})")]
    TruthShapeMismatch { detail: String },
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Modem(#[from] ModemError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Known pilot symbols of one user and the frame slots that carry them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserPilots {
    symbols: Vec<usize>,
    positions: Vec<usize>,
}

impl UserPilots {
    /// Pairs pilot symbol indices with their slot positions; the two lists
    /// must have equal length.
    pub fn new(symbols: Vec<usize>, positions: Vec<usize>) -> Result<Self, ReceiverError> {
        if symbols.len() != positions.len() {
            return Err(ReceiverError::MismatchedPilots {
                tx: symbols.len(),
                rx: positions.len(),
            });
        }
        Ok(Self { symbols, positions })
    }

    /// Transmitted pilot symbol indices.
    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    /// Frame slots carrying the pilots.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Number of pilot symbols.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    /// True when the user has no pilots.
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Checks slot and symbol ranges against a frame and constellation.
    fn check(
        &self,
        user: usize,
        frame_len: usize,
        c: &Constellation,
    ) -> Result<(), ReceiverError> {
        for &position in &self.positions {
            if position >= frame_len {
                return Err(ReceiverError::PilotOutOfRange {
                    user,
                    position,
                    length: frame_len,
                });
            }
        }
        for &symbol in &self.symbols {
            if symbol >= c.order() {
                return Err(ReceiverError::PilotSymbolOutOfRange {
                    user,
                    symbol,
                    order: c.order(),
                });
            }
        }
        Ok(())
    }

    /// Modulated pilot waveform.
    fn modulated(&self, c: &Constellation) -> Vec<IqSample> {
        self.symbols.iter().map(|&s| c.point(s)).collect()
    }
}

/// Blind estimate of one user's channel: magnitude, resolved phase, and the
/// rotational-symmetry branch phases the resolution chose between.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// Estimated |h| (nonnegative).
    pub gain_magnitude: f64,
    /// Resolved channel phase in radians; always one of `candidate_phases`.
    pub phase: f64,
    /// The symmetry-equivalent phases before pilot resolution, mutually
    /// separated by 2 pi / symmetry order.
    pub candidate_phases: Vec<f64>,
}

impl ChannelEstimate {
    /// The estimate as a complex gain `|h| e^{i phase}`.
    pub fn complex_gain(&self) -> Complex64 {
        Complex64::from_polar(self.gain_magnitude, self.phase)
    }
}

/// Outcome of a multi-user detection pass.
#[derive(Debug, Clone)]
pub struct DetectionReport {
    frame_len: usize,
    per_user_symbols: Vec<Vec<usize>>,
    per_user_estimates: Vec<ChannelEstimate>,
    per_user_pilot_positions: Vec<Vec<usize>>,
    per_user_ser: Option<Vec<f64>>,
    detected_user_count: usize,
    residual_power_trace: Vec<f64>,
}

impl DetectionReport {
    /// Length of the received frame the report describes.
    pub fn frame_length(&self) -> usize {
        self.frame_len
    }

    /// Number of users detected (for a known-count pass this equals the
    /// requested count).
    pub fn detected_user_count(&self) -> usize {
        self.detected_user_count
    }

    /// Detected symbol indices per user at the user's non-pilot slots, in
    /// slot order; length is the frame length minus that user's pilot count.
    pub fn per_user_symbols(&self) -> &[Vec<usize>] {
        &self.per_user_symbols
    }

    /// Channel estimates in detection order (strongest residual user first).
    pub fn per_user_estimates(&self) -> &[ChannelEstimate] {
        &self.per_user_estimates
    }

    /// Pilot slots that were excluded from each user's symbol sequence.
    pub fn per_user_pilot_positions(&self) -> &[Vec<usize>] {
        &self.per_user_pilot_positions
    }

    /// Symbol error rates from the last `score_against` call, if any.
    pub fn per_user_ser(&self) -> Option<&[f64]> {
        self.per_user_ser.as_deref()
    }

    /// Mean residual power before detection and after each cancellation.
    pub fn residual_power_trace(&self) -> &[f64] {
        &self.residual_power_trace
    }

    /// Scores the detected sequences against full-length transmitted symbol
    /// streams (one per detected user, in detection order). Pilot slots are
    /// excluded from the error count. Stores and returns the per-user symbol
    /// error rates.
    pub fn score_against(&mut self, truth: &[Vec<usize>]) -> Result<&[f64], ReceiverError> {
        if truth.len() < self.detected_user_count {
            return Err(ReceiverError::TruthShapeMismatch {
                detail: format!(
                    "{} truth streams for {} detected users",
                    truth.len(),
                    self.detected_user_count
                ),
            });
        }
        let mut rates = Vec::with_capacity(self.detected_user_count);
        for user in 0..self.detected_user_count {
            if truth[user].len() != self.frame_len {
                return Err(ReceiverError::TruthShapeMismatch {
                    detail: format!(
                        "truth stream {} has length {}, frame has {}",
                        user,
                        truth[user].len(),
                        self.frame_len
                    ),
                });
            }
            let pilot_slots = &self.per_user_pilot_positions[user];
            let detected = &self.per_user_symbols[user];
            let mut errors = 0usize;
            let mut compared = 0usize;
            for (slot, &sent) in truth[user].iter().enumerate() {
                if pilot_slots.contains(&slot) {
                    continue;
                }
                if detected[compared] != sent {
                    errors += 1;
                }
                compared += 1;
            }
            debug_assert_eq!(compared, detected.len());
            rates.push(if compared == 0 {
                0.0
            } else {
                errors as f64 / compared as f64
            });
        }
        self.per_user_ser = Some(rates);
        Ok(self.per_user_ser.as_deref().unwrap())
    }
}

/// Wraps an angle to the principal branch (-pi, pi].
fn wrap_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Absolute circular distance between two angles, in [0, pi].
fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// The rotational-symmetry ambiguity set of a phase offset: the offset plus
/// every multiple of 2 pi / `symmetry_order`, wrapped to (-pi, pi].
pub fn phase_candidates(offset: f64, symmetry_order: usize) -> Vec<f64> {
    assert!(symmetry_order >= 1, "symmetry order must be at least 1");
    (0..symmetry_order)
        .map(|k| wrap_angle(offset + TAU * k as f64 / symmetry_order as f64))
        .collect()
}

/// Mean of |y_n|^2 over a frame.
fn mean_power(samples: &[IqSample]) -> f64 {
    samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Reads a gain magnitude and a reference phase offset off fitted mixture
/// centroids.
///
/// For equal-magnitude constellations (QPSK) each centroid is matched to its
/// nearest nominal phase and the signed angular offsets are combined by a
/// circular mean; the gain is the mean centroid magnitude over the mean
/// nominal magnitude. This equals averaging the raw centroid phases whenever
/// no offset wraps past the symmetry sector, and stays correct when one does.
///
/// For 16-QAM the rotation is found by scanning one symmetry sector
/// [-pi/4, pi/4) on a fine grid, assigning each centroid to the nearest
/// scaled-rotated nominal point and refining the gain by least squares at
/// each step, then polishing the best grid angle with a parabolic fit.
///
/// The returned phase is an offset within one symmetry sector; the true
/// channel phase is that offset plus an unknown multiple of
/// 2 pi / symmetry order (see [`phase_candidates`] / [`resolve_ambiguity`]).
///
/// Errors if any centroid sits at the origin.
pub fn estimate_phase_and_gain(
    model: &MixtureModel,
    c: &Constellation,
) -> Result<(f64, f64), ReceiverError> {
    let means = model.means();
    for (component, mu) in means.iter().enumerate() {
        if !(mu.norm() > 0.0) {
            return Err(ReceiverError::DegenerateFit { component });
        }
    }
    let nominal_mean_magnitude =
        c.points().iter().map(|s| s.norm()).sum::<f64>() / c.order() as f64;

    if c.is_equal_magnitude() {
        // Each centroid's offset to its nearest nominal phase lives on a
        // circle of period 2 pi / symmetry, so the circular mean must be
        // taken there: scale the offsets up to the full circle, average the
        // unit vectors, and scale back. (Scaling by the symmetry order also
        // makes the nominal-phase choice drop out algebraically.) Without
        // this, offsets straddling the sector edge -- +45 and -45 degrees
        // say the same thing -- would average to zero.
        let symmetry = c.rotational_symmetry_order() as f64;
        let anchor = c.point(0).arg();
        let mut mean_vector = Complex64::new(0.0, 0.0);
        for mu in means {
            mean_vector += Complex64::from_polar(1.0, symmetry * (mu.arg() - anchor));
        }
        let phase = mean_vector.arg() / symmetry;
        let gain =
            means.iter().map(|mu| mu.norm()).sum::<f64>() / means.len() as f64 / nominal_mean_magnitude;
        return Ok((phase, gain));
    }

    // Amplitude-bearing constellation: grid search the rotation over one
    // symmetry sector with a least-squares gain at each candidate angle.
    let sector = TAU / c.rotational_symmetry_order() as f64;
    let fallback_gain =
        means.iter().map(|mu| mu.norm()).sum::<f64>() / means.len() as f64 / nominal_mean_magnitude;
    let evaluate = |phi: f64| -> (f64, f64) {
        let rotation = Complex64::from_polar(1.0, phi);
        // Assign with the magnitude-ratio gain, refine the gain by least
        // squares on that assignment, then measure the residual cost.
        let mut assigned: Vec<Complex64> = Vec::with_capacity(means.len());
        for mu in means {
            let mut best = c.point(0) * rotation;
            let mut best_d2 = f64::INFINITY;
            for s in c.points() {
                let candidate = s * rotation;
                let d2 = (mu - candidate * fallback_gain).norm_sqr();
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = candidate;
                }
            }
            assigned.push(best);
        }
        let numerator: f64 = means
            .iter()
            .zip(&assigned)
            .map(|(mu, s)| (mu * s.conj()).re)
            .sum();
        let denominator: f64 = assigned.iter().map(|s| s.norm_sqr()).sum();
        let gain = if numerator > 0.0 && denominator > 0.0 {
            numerator / denominator
        } else {
            fallback_gain
        };
        let cost: f64 = means
            .iter()
            .map(|mu| {
                c.points()
                    .iter()
                    .map(|s| (mu - s * rotation * gain).norm_sqr())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        (cost, gain)
    };

    let step = sector / QAM_PHASE_GRID_STEPS as f64;
    let grid_phi = |i: usize| -> f64 { -sector / 2.0 + step * i as f64 };
    let mut best_index = 0usize;
    let mut best_cost = f64::INFINITY;
    let mut best_gain = fallback_gain;
    for i in 0..QAM_PHASE_GRID_STEPS {
        let (cost, gain) = evaluate(grid_phi(i));
        if cost < best_cost {
            best_cost = cost;
            best_index = i;
            best_gain = gain;
        }
    }
    let mut best_phi = grid_phi(best_index);
    // Parabolic refinement through the best grid point and its neighbours
    // (the cost is locally quadratic in the rotation once assignments lock).
    if best_index > 0 && best_index + 1 < QAM_PHASE_GRID_STEPS {
        let (c_left, _) = evaluate(grid_phi(best_index - 1));
        let (c_right, _) = evaluate(grid_phi(best_index + 1));
        let curvature = c_left - 2.0 * best_cost + c_right;
        if curvature > 0.0 {
            let refined = best_phi + 0.5 * step * (c_left - c_right) / curvature;
            let (cost, gain) = evaluate(refined);
            if cost <= best_cost {
                best_phi = refined;
                best_gain = gain;
            }
        }
    }
    Ok((best_phi, best_gain))
}

/// Picks the candidate phase closest (in circular distance) to the phase of
/// the MMSE pilot channel estimate h = (sum |x|^2 + 1)^-1 sum conj(x) y.
/// Ties go to the lower-index candidate.
///
/// Errors if the candidate list is empty, the pilot streams disagree in
/// length, or the pilots carry no energy.
pub fn resolve_ambiguity(
    candidates: &[f64],
    pilot_tx: &[IqSample],
    pilot_rx: &[IqSample],
) -> Result<f64, ReceiverError> {
    if candidates.is_empty() {
        return Err(ReceiverError::NoCandidatePhases);
    }
    if pilot_tx.len() != pilot_rx.len() {
        return Err(ReceiverError::MismatchedPilots {
            tx: pilot_tx.len(),
            rx: pilot_rx.len(),
        });
    }
    let energy: f64 = pilot_tx.iter().map(|x| x.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(ReceiverError::ZeroPilotEnergy);
    }
    let correlation: Complex64 = pilot_tx
        .iter()
        .zip(pilot_rx)
        .map(|(x, y)| x.conj() * y)
        .sum();
    let mmse_estimate = correlation / (energy + 1.0);
    let target = mmse_estimate.arg();
    let mut best = 0usize;
    let mut best_distance = f64::INFINITY;
    for (k, &phase) in candidates.iter().enumerate() {
        let distance = angular_distance(phase, target);
        if distance < best_distance {
            best_distance = distance;
            best = k;
        }
    }
    Ok(candidates[best])
}

/// Fits the residual mixture from sector initializations at two anchor
/// rotations, returning both candidate fits.
///
/// A single sector anchor is fragile: when the cluster centers straddle the
/// fixed sector boundaries, every initial mean lands between two clusters
/// and EM can stall near that symmetric saddle. Anchors half a sector apart
/// guarantee that one initialization sees the clusters well inside sectors.
/// The caller decides between the two by cancellation quality, not by
/// likelihood: with a strong secondary user, each symbol cluster is itself a
/// cluster of sub-clusters, and the saddle configuration (means at the
/// midpoints of adjacent clusters, half a sector off) can reach a *higher*
/// mixture likelihood than the symbol-aligned fit, while explaining far less
/// received energy once its reconstruction is subtracted.
fn anchor_fits(
    samples: &[IqSample],
    c: &Constellation,
    config: &EmConfig,
) -> Result<[gmm::GmmFit; 2], ReceiverError> {
    let components = c.order();
    let direct = gmm::fit(samples, components, config)?;
    let half_sector = PI / components as f64;
    let spin = Complex64::from_polar(1.0, -half_sector);
    let rotated: Vec<IqSample> = samples.iter().map(|y| y * spin).collect();
    let seed = gmm::init_by_sectors(&rotated, components)?;
    let unspin = Complex64::from_polar(1.0, half_sector);
    let means: Vec<Complex64> = seed.means().iter().map(|mu| mu * unspin).collect();
    let seed = MixtureModel::new(seed.weights().to_vec(), means, seed.covariances().to_vec())?;
    let alternate = gmm::fit_from(samples, seed, config)?;
    Ok([direct, alternate])
}

/// Estimate-resolve-demap-subtract for one fitted mixture; returns the
/// candidate round outcome and its post-cancellation mean residual power.
fn cancellation_candidate(
    residual: &[IqSample],
    fit: &gmm::GmmFit,
    c: &Constellation,
    pilots: Option<&UserPilots>,
) -> Result<(f64, ChannelEstimate, Vec<usize>, Vec<IqSample>), ReceiverError> {
    let (offset, gain) = estimate_phase_and_gain(fit.model(), c)?;
    let candidates = phase_candidates(offset, c.rotational_symmetry_order());
    let phase = match pilots {
        Some(p) if !p.is_empty() => {
            let tx = p.modulated(c);
            let rx: Vec<IqSample> = p.positions.iter().map(|&slot| residual[slot]).collect();
            resolve_ambiguity(&candidates, &tx, &rx)?
        }
        // Without pilots the symmetry branch is unobservable; the first
        // candidate keeps cancellation exact (a symmetry rotation relabels
        // symbols without changing the reconstructed waveform) even though
        // the symbol labels may be rotated.
        _ => candidates[0],
    };
    let estimate = ChannelEstimate {
        gain_magnitude: gain,
        phase,
        candidate_phases: candidates,
    };
    let channel = estimate.complex_gain();
    let mut detected = Vec::with_capacity(residual.len());
    let mut cancelled = Vec::with_capacity(residual.len());
    for y in residual.iter() {
        let symbol = demap(*y, c, gain, phase)?;
        detected.push(symbol);
        cancelled.push(y - channel * c.point(symbol));
    }
    Ok((mean_power(&cancelled), estimate, detected, cancelled))
}

/// One blind detection round on the current residual: fit from both anchor
/// initializations, run estimate-resolve-demap-subtract for each, and commit
/// the candidate whose cancellation leaves the lower mean residual power
/// (strictly lower: ties keep the unrotated anchor). Residual power is the
/// SIC-native selection statistic -- the correct fit removes the user's
/// whole received energy, while a symmetry-saddle fit leaves most of it.
fn blind_round(
    residual: &mut [IqSample],
    c: &Constellation,
    pilots: Option<&UserPilots>,
    config: &EmConfig,
) -> Result<(ChannelEstimate, Vec<usize>), ReceiverError> {
    let fits = anchor_fits(residual, c, config)?;
    let mut best: Option<(f64, ChannelEstimate, Vec<usize>, Vec<IqSample>)> = None;
    for fit in &fits {
        let candidate = cancellation_candidate(residual, fit, c, pilots)?;
        if best.as_ref().is_none_or(|(power, ..)| candidate.0 < *power) {
            best = Some(candidate);
        }
    }
    let (_, estimate, detected, cancelled) = best.expect("two candidates were evaluated");
    residual.copy_from_slice(&cancelled);
    Ok((estimate, detected))
}

/// Drops a user's pilot slots from a full-length detected stream.
fn strip_pilot_slots(detected: &[usize], pilot_positions: &[usize]) -> Vec<usize> {
    detected
        .iter()
        .enumerate()
        .filter(|(slot, _)| !pilot_positions.contains(slot))
        .map(|(_, &symbol)| symbol)
        .collect()
}

/// Joint blind channel estimation and detection for a known number of users
/// by successive interference cancellation.
///
/// Users must be supplied strongest-first (one pilot set per user, in the
/// same order): each round fits an `order`-component mixture to the residual
/// frame, which captures the strongest user left, then cancels it. Pilot
/// slots take part in clustering but are excluded from the reported symbol
/// sequences and from scoring.
pub fn gmm_sic_detect(
    received: &[IqSample],
    user_count: usize,
    c: &Constellation,
    pilots: &[UserPilots],
    config: &EmConfig,
) -> Result<DetectionReport, ReceiverError> {
    if user_count == 0 {
        return Err(ReceiverError::InvalidUserCount(0));
    }
    gmm_sic_detect_mixed(received, &vec![c.clone(); user_count], pilots, config)
}

/// [`gmm_sic_detect`] for users with per-user constellations (mixed
/// modulation orders): round u fits `constellations[u].order()` components
/// and demaps against that user's symbol set.
pub fn gmm_sic_detect_mixed(
    received: &[IqSample],
    constellations: &[Constellation],
    pilots: &[UserPilots],
    config: &EmConfig,
) -> Result<DetectionReport, ReceiverError> {
    let user_count = constellations.len();
    if user_count == 0 {
        return Err(ReceiverError::InvalidUserCount(0));
    }
    if received.is_empty() {
        return Err(ReceiverError::EmptyFrame);
    }
    if pilots.len() != user_count {
        return Err(ReceiverError::PilotSetCountMismatch {
            pilot_sets: pilots.len(),
            users: user_count,
        });
    }
    for (user, set) in pilots.iter().enumerate() {
        set.check(user, received.len(), &constellations[user])?;
    }

    let mut residual = received.to_vec();
    let mut trace = vec![mean_power(&residual)];
    let mut per_user_symbols = Vec::with_capacity(user_count);
    let mut per_user_estimates = Vec::with_capacity(user_count);
    let mut per_user_pilot_positions = Vec::with_capacity(user_count);
    for (set, c) in pilots.iter().zip(constellations) {
        let (estimate, detected) = blind_round(&mut residual, c, Some(set), config)?;
        trace.push(mean_power(&residual));
        per_user_symbols.push(strip_pilot_slots(&detected, &set.positions));
        per_user_estimates.push(estimate);
        per_user_pilot_positions.push(set.positions.clone());
    }
    Ok(DetectionReport {
        frame_len: received.len(),
        per_user_symbols,
        per_user_estimates,
        per_user_pilot_positions,
        per_user_ser: None,
        detected_user_count: user_count,
        residual_power_trace: trace,
    })
}

/// Blind detection when the user count is unknown: rounds of fit-estimate-
/// cancel continue while the mean residual power exceeds
/// `noise_power * (1 + GRANT_FREE_MARGIN)`, up to `max_users` rounds.
///
/// `pilots[r]` resolves the phase ambiguity of round r's user; rounds beyond
/// the supplied pilot sets fall back to the unresolved first candidate (the
/// cancellation stays sound, the symbol labels may be rotated).
pub fn grant_free_detect(
    received: &[IqSample],
    noise_power: f64,
    c: &Constellation,
    pilots: &[UserPilots],
    config: &EmConfig,
    max_users: usize,
) -> Result<DetectionReport, ReceiverError> {
    if !(noise_power > 0.0) || !noise_power.is_finite() {
        return Err(ReceiverError::InvalidNoisePower(noise_power));
    }
    if max_users == 0 {
        return Err(ReceiverError::InvalidUserCount(0));
    }
    if received.is_empty() {
        return Err(ReceiverError::EmptyFrame);
    }
    for (user, set) in pilots.iter().enumerate() {
        set.check(user, received.len(), c)?;
    }

    let mut residual = received.to_vec();
    let mut trace = vec![mean_power(&residual)];
    let mut per_user_symbols = Vec::new();
    let mut per_user_estimates = Vec::new();
    let mut per_user_pilot_positions = Vec::new();
    while *trace.last().unwrap() > noise_power * (1.0 + GRANT_FREE_MARGIN)
        && per_user_estimates.len() < max_users
    {
        let round_pilots = pilots.get(per_user_estimates.len());
        let (estimate, detected) = blind_round(&mut residual, c, round_pilots, config)?;
        trace.push(mean_power(&residual));
        let positions = round_pilots.map(|p| p.positions.clone()).unwrap_or_default();
        per_user_symbols.push(strip_pilot_slots(&detected, &positions));
        per_user_estimates.push(estimate);
        per_user_pilot_positions.push(positions);
    }
    let detected_user_count = per_user_estimates.len();
    Ok(DetectionReport {
        frame_len: received.len(),
        per_user_symbols,
        per_user_estimates,
        per_user_pilot_positions,
        per_user_ser: None,
        detected_user_count,
        residual_power_trace: trace,
    })
}

/// Exhaustive joint maximum-likelihood detection with known channels: per
/// sample, the symbol tuple minimizing |y - sum_i sqrt(P_i) h_i s_{u_i}|^2
/// over all order^K tuples. Ties go to the lexicographically smallest tuple
/// (user 0's symbol most significant). Returns one full-length symbol stream
/// per user.
pub fn mld_full_csi(
    received: &[IqSample],
    states: &[ChannelState],
    c: &Constellation,
) -> Result<Vec<Vec<usize>>, ReceiverError> {
    if states.is_empty() {
        return Err(ReceiverError::InvalidUserCount(0));
    }
    mld_full_csi_mixed(received, states, &vec![c.clone(); states.len()])
}

/// [`mld_full_csi`] with per-user constellations: the search runs over all
/// prod_i order_i mixed-radix tuples.
pub fn mld_full_csi_mixed(
    received: &[IqSample],
    states: &[ChannelState],
    constellations: &[Constellation],
) -> Result<Vec<Vec<usize>>, ReceiverError> {
    let users = states.len();
    if users == 0 {
        return Err(ReceiverError::InvalidUserCount(0));
    }
    if constellations.len() != users {
        return Err(ReceiverError::ConstellationCountMismatch {
            constellations: constellations.len(),
            users,
        });
    }
    let orders: Vec<usize> = constellations.iter().map(Constellation::order).collect();
    let combinations = orders
        .iter()
        .try_fold(1usize, |acc, &order| {
            acc.checked_mul(order)
                .filter(|combos| combos.saturating_mul(users) <= MLD_ENUMERATION_CAP)
        })
        .ok_or(ReceiverError::CombinatorialCap {
            combinations: usize::MAX,
            cap: MLD_ENUMERATION_CAP,
        })?;
    if combinations * users > MLD_ENUMERATION_CAP {
        return Err(ReceiverError::CombinatorialCap {
            combinations: combinations * users,
            cap: MLD_ENUMERATION_CAP,
        });
    }

    // Tuple index j encodes user 0 in the most significant digit (mixed
    // radix: user u's place value is the product of the orders after u), so
    // ascending j is lexicographic tuple order and the strict < argmin
    // keeps the lexicographically smallest tie.
    let amplitudes: Vec<Complex64> = states.iter().map(ChannelState::effective_amplitude).collect();
    let mut place_values = vec![1usize; users];
    for user in (0..users.saturating_sub(1)).rev() {
        place_values[user] = place_values[user + 1] * orders[user + 1];
    }
    let mut superposed = Vec::with_capacity(combinations);
    for j in 0..combinations {
        let mut point = Complex64::new(0.0, 0.0);
        for (user, amplitude) in amplitudes.iter().enumerate() {
            let symbol = (j / place_values[user]) % orders[user];
            point += amplitude * constellations[user].point(symbol);
        }
        superposed.push(point);
    }

    let mut streams = vec![Vec::with_capacity(received.len()); users];
    for &y in received {
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for (j, &point) in superposed.iter().enumerate() {
            let d2 = (y - point).norm_sqr();
            if d2 < best_d2 {
                best_d2 = d2;
                best = j;
            }
        }
        for (user, stream) in streams.iter_mut().enumerate() {
            stream.push((best / place_values[user]) % orders[user]);
        }
    }
    Ok(streams)
}

/// Joint maximum-likelihood detection with channels estimated from each
/// user's own pilots by least squares, h_i = sum conj(x) y / sum |x|^2 over
/// that user's slots (other users' signals act as noise there, which is why
/// pilot slots should be time-orthogonal across users).
pub fn mld_pilot_csi(
    received: &[IqSample],
    pilots: &[UserPilots],
    c: &Constellation,
) -> Result<Vec<Vec<usize>>, ReceiverError> {
    if pilots.is_empty() {
        return Err(ReceiverError::InvalidUserCount(0));
    }
    mld_pilot_csi_mixed(received, pilots, &vec![c.clone(); pilots.len()])
}

/// [`mld_pilot_csi`] with per-user constellations.
pub fn mld_pilot_csi_mixed(
    received: &[IqSample],
    pilots: &[UserPilots],
    constellations: &[Constellation],
) -> Result<Vec<Vec<usize>>, ReceiverError> {
    if pilots.is_empty() {
        return Err(ReceiverError::InvalidUserCount(0));
    }
    if constellations.len() != pilots.len() {
        return Err(ReceiverError::ConstellationCountMismatch {
            constellations: constellations.len(),
            users: pilots.len(),
        });
    }
    let mut states = Vec::with_capacity(pilots.len());
    for ((user, set), c) in pilots.iter().enumerate().zip(constellations) {
        set.check(user, received.len(), c)?;
        let tx = set.modulated(c);
        let energy: f64 = tx.iter().map(|x| x.norm_sqr()).sum();
        if !(energy > 0.0) {
            return Err(ReceiverError::ZeroPilotEnergy);
        }
        let correlation: Complex64 = tx
            .iter()
            .zip(&set.positions)
            .map(|(x, &slot)| x.conj() * received[slot])
            .sum();
        states.push(ChannelState::new(correlation / energy, 1.0)?);
    }
    mld_full_csi_mixed(received, &states, constellations)
}
