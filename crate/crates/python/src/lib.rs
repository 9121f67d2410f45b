//! Python bindings for the NOMA link-level simulator.
//!
//! The module mirrors the Rust library surface thinly: constellations and
//! channel states are small wrapper classes, IQ samples cross the boundary
//! as Python `complex` values, and the Monte Carlo harness is exposed as a
//! single call from config text to CSV text. Everything that takes a seed is
//! deterministic for a fixed seed.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nomalink::channel::{transmit as core_transmit, ChannelState};
use nomalink::gmm::{fit as core_fit, EmConfig, GmmFit};
use nomalink::harness::{render_csv, run_experiment, ExperimentConfig};
use nomalink::modem::{demap as core_demap, modulate as core_modulate, Constellation};
use nomalink::receiver::{
    gmm_sic_detect as core_gmm_sic, grant_free_detect as core_grant_free,
    mld_full_csi as core_mld_full, mld_pilot_csi as core_mld_pilot, DetectionReport, UserPilots,
};
use nomalink::theory;

fn value_error<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn build_pilots(pilots: Vec<(Vec<usize>, Vec<usize>)>) -> PyResult<Vec<UserPilots>> {
    pilots
        .into_iter()
        .map(|(symbols, positions)| UserPilots::new(symbols, positions).map_err(value_error))
        .collect()
}

fn em_config(epsilon: f64, max_iterations: usize, covariance_floor: f64) -> EmConfig {
    EmConfig {
        epsilon,
        max_iterations,
        covariance_floor,
    }
}

/// A complex symbol constellation with Gray-coded bit mapping.
#[pyclass(name = "Constellation", frozen, from_py_object)]
#[derive(Clone)]
struct PyConstellation {
    inner: Constellation,
}

#[pymethods]
impl PyConstellation {
    /// Unit-energy QPSK (4 points on the diagonals).
    #[staticmethod]
    fn qpsk() -> Self {
        Self {
            inner: Constellation::qpsk(),
        }
    }

    /// Unit-energy Gray-mapped 16-QAM.
    #[staticmethod]
    fn qam16() -> Self {
        Self {
            inner: Constellation::qam16(),
        }
    }

    /// Number of constellation points.
    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    /// Bits carried per symbol.
    #[getter]
    fn bits_per_symbol(&self) -> usize {
        self.inner.bits_per_symbol()
    }

    /// Order of the rotational symmetry group (4 for QPSK and 16-QAM).
    #[getter]
    fn rotational_symmetry_order(&self) -> usize {
        self.inner.rotational_symmetry_order()
    }

    /// The complex point for a symbol index.
    fn point(&self, index: usize) -> PyResult<Complex64> {
        if index >= self.inner.order() {
            return Err(PyValueError::new_err(format!(
                "symbol index {index} out of range for order {}",
                self.inner.order()
            )));
        }
        Ok(self.inner.point(index))
    }

    /// All points, indexed by symbol.
    fn points(&self) -> Vec<Complex64> {
        self.inner.points().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Constellation(order={})", self.inner.order())
    }
}

/// A frozen per-packet channel: complex gain and transmit power.
#[pyclass(name = "ChannelState", frozen, from_py_object)]
#[derive(Clone)]
struct PyChannelState {
    inner: ChannelState,
}

#[pymethods]
impl PyChannelState {
    /// Build from a complex gain and a transmit power.
    #[new]
    fn new(gain: Complex64, power: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ChannelState::new(gain, power).map_err(value_error)?,
        })
    }

    /// Build a unit-power state with the given received SNR and phase.
    #[staticmethod]
    fn from_snr(snr: f64, phase: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ChannelState::from_snr(snr, phase).map_err(value_error)?,
        })
    }

    /// The complex channel gain h.
    #[getter]
    fn gain(&self) -> Complex64 {
        self.inner.gain()
    }

    /// Transmit power P.
    #[getter]
    fn power(&self) -> f64 {
        self.inner.power()
    }

    /// Received SNR, P |h|^2 (noise power 1).
    #[getter]
    fn snr(&self) -> f64 {
        self.inner.snr()
    }

    /// sqrt(P) h, the amplitude multiplying each transmitted symbol.
    #[getter]
    fn effective_amplitude(&self) -> Complex64 {
        self.inner.effective_amplitude()
    }

    fn __repr__(&self) -> String {
        format!("ChannelState(snr={:.6})", self.inner.snr())
    }
}

/// A fitted Gaussian mixture with its convergence record.
#[pyclass(name = "GmmFit", frozen)]
struct PyGmmFit {
    inner: GmmFit,
}

#[pymethods]
impl PyGmmFit {
    /// Fitted component means.
    fn means(&self) -> Vec<Complex64> {
        self.inner.means().to_vec()
    }

    /// Fitted component weights (sum to 1).
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    /// Fitted 2x2 covariances, row-major.
    fn covariances(&self) -> Vec<[f64; 4]> {
        self.inner
            .covariances()
            .iter()
            .map(|s| [s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]])
            .collect()
    }

    /// Most likely component per sample.
    fn hard_assignments(&self) -> Vec<usize> {
        self.inner.hard_assignments().to_vec()
    }

    /// Hard-assignment log-likelihood per iteration (the stopping statistic).
    fn loglik_trace(&self) -> Vec<f64> {
        self.inner.loglik_trace().to_vec()
    }

    /// Marginal log-likelihood per iteration; non-decreasing under EM.
    fn soft_loglik_trace(&self) -> Vec<f64> {
        self.inner.soft_loglik_trace().to_vec()
    }

    /// Number of M-steps performed.
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations()
    }

    fn __repr__(&self) -> String {
        format!(
            "GmmFit(components={}, iterations={})",
            self.inner.means().len(),
            self.inner.iterations()
        )
    }
}

/// Outcome of a blind multi-user detection pass.
#[pyclass(name = "DetectionReport", frozen)]
struct PyDetectionReport {
    inner: DetectionReport,
}

#[pymethods]
impl PyDetectionReport {
    /// Number of users the detector committed to.
    #[getter]
    fn detected_user_count(&self) -> usize {
        self.inner.detected_user_count()
    }

    /// Detected symbol indices per user, own pilot slots stripped.
    fn per_user_symbols(&self) -> Vec<Vec<usize>> {
        self.inner.per_user_symbols().to_vec()
    }

    /// Per-user channel estimates as (gain_magnitude, phase,
    /// candidate_phases) tuples.
    fn per_user_estimates(&self) -> Vec<(f64, f64, Vec<f64>)> {
        self.inner
            .per_user_estimates()
            .iter()
            .map(|e| (e.gain_magnitude, e.phase, e.candidate_phases.clone()))
            .collect()
    }

    /// Mean residual power after each cancellation round.
    fn residual_power_trace(&self) -> Vec<f64> {
        self.inner.residual_power_trace().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "DetectionReport(users={}, frame={})",
            self.inner.detected_user_count(),
            self.inner.frame_length()
        )
    }
}

/// Gaussian tail probability Q(z).
#[pyfunction]
fn q_function(z: f64) -> f64 {
    theory::q_function(z)
}

/// Residual phase error of a blind reference fitted to n samples, with the
/// cluster radius bound derived from the SNR.
#[pyfunction]
#[pyo3(signature = (snr, n, m=4, d=2, c3=0.005))]
fn phase_mismatch_from_snr(snr: f64, n: usize, m: usize, d: usize, c3: f64) -> f64 {
    theory::phase_mismatch(m, d, n, c3, theory::PhaseSource::FromSnr(snr))
}

/// Residual phase error with the cluster radius bound given directly.
#[pyfunction]
#[pyo3(signature = (rmax, n, m=4, d=2, c3=0.005))]
fn phase_mismatch_from_rmax(rmax: f64, n: usize, m: usize, d: usize, c3: f64) -> f64 {
    theory::phase_mismatch(m, d, n, c3, theory::PhaseSource::FromRmax(rmax))
}

/// QPSK SER at SNR gamma with a phase-mismatched reference rotated by phi.
#[pyfunction]
fn ser_qpsk_phase_mismatch(gamma: f64, phi: f64) -> f64 {
    theory::ser_qpsk_phase_mismatch(gamma, phi)
}

/// Closed-form blind single-user SER prediction at blocklength n.
#[pyfunction]
#[pyo3(signature = (gamma, n, m=4, d=2, c3=0.005))]
fn ser_single_user(gamma: f64, n: usize, m: usize, d: usize, c3: f64) -> f64 {
    theory::ser_single_user(gamma, n, m, d, c3)
}

/// Closed-form blind two-user SER predictions (strong, weak) at blocklength
/// n; gamma1 must exceed gamma2.
#[pyfunction]
#[pyo3(signature = (gamma1, gamma2, n, c3=0.005))]
fn ser_noma_two_user(gamma1: f64, gamma2: f64, n: usize, c3: f64) -> PyResult<(f64, f64)> {
    theory::ser_noma_two_user(gamma1, gamma2, n, c3).map_err(value_error)
}

/// Reference strong-user SER with perfectly aligned constellations.
#[pyfunction]
fn ser_noma_reference(gamma1: f64, gamma2: f64) -> f64 {
    theory::ser_noma_reference(gamma1, gamma2)
}

/// Map a bit sequence onto constellation symbols.
#[pyfunction]
fn modulate(bits: Vec<bool>, constellation: &PyConstellation) -> PyResult<Vec<Complex64>> {
    core_modulate(&bits, &constellation.inner).map_err(value_error)
}

/// Nearest-point demapping of one sample under a gain/phase hypothesis.
#[pyfunction]
fn demap(y: Complex64, constellation: &PyConstellation, gain: f64, phase: f64) -> PyResult<usize> {
    core_demap(y, &constellation.inner, gain, phase).map_err(value_error)
}

/// Superimpose per-user waveforms through their channels and add complex
/// Gaussian noise; deterministic for a fixed seed.
#[pyfunction]
fn transmit(
    waveforms: Vec<Vec<Complex64>>,
    states: Vec<PyChannelState>,
    noise_variance: f64,
    seed: u64,
) -> PyResult<Vec<Complex64>> {
    let states: Vec<ChannelState> = states.into_iter().map(|s| s.inner).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    core_transmit(&waveforms, &states, noise_variance, &mut rng).map_err(value_error)
}

/// Fit a Gaussian mixture by EM with deterministic sector initialization.
#[pyfunction]
#[pyo3(signature = (samples, components, epsilon=1.0, max_iterations=100, covariance_floor=1e-6))]
fn fit_gaussian_mixture(
    samples: Vec<Complex64>,
    components: usize,
    epsilon: f64,
    max_iterations: usize,
    covariance_floor: f64,
) -> PyResult<PyGmmFit> {
    let fit = core_fit(
        &samples,
        components,
        &em_config(epsilon, max_iterations, covariance_floor),
    )
    .map_err(value_error)?;
    Ok(PyGmmFit { inner: fit })
}

/// Blind joint channel estimation and detection for a known user count via
/// GMM clustering and successive interference cancellation. Pilots are
/// (symbols, positions) pairs, one per user, strongest user first.
#[pyfunction]
#[pyo3(signature = (received, user_count, constellation, pilots, epsilon=1.0, max_iterations=100))]
fn gmm_sic_detect(
    received: Vec<Complex64>,
    user_count: usize,
    constellation: &PyConstellation,
    pilots: Vec<(Vec<usize>, Vec<usize>)>,
    epsilon: f64,
    max_iterations: usize,
) -> PyResult<PyDetectionReport> {
    let pilots = build_pilots(pilots)?;
    let report = core_gmm_sic(
        &received,
        user_count,
        &constellation.inner,
        &pilots,
        &em_config(epsilon, max_iterations, 1e-6),
    )
    .map_err(value_error)?;
    Ok(PyDetectionReport { inner: report })
}

/// Blind detection with an unknown user count: rounds continue while the
/// residual power exceeds the noise power (plus margin), up to max_users.
#[pyfunction]
#[pyo3(signature = (received, noise_power, constellation, pilots, max_users, epsilon=1.0, max_iterations=100))]
fn grant_free_detect(
    received: Vec<Complex64>,
    noise_power: f64,
    constellation: &PyConstellation,
    pilots: Vec<(Vec<usize>, Vec<usize>)>,
    max_users: usize,
    epsilon: f64,
    max_iterations: usize,
) -> PyResult<PyDetectionReport> {
    let pilots = build_pilots(pilots)?;
    let report = core_grant_free(
        &received,
        noise_power,
        &constellation.inner,
        &pilots,
        &em_config(epsilon, max_iterations, 1e-6),
        max_users,
    )
    .map_err(value_error)?;
    Ok(PyDetectionReport { inner: report })
}

/// Joint maximum-likelihood detection with full channel knowledge;
/// returns full-length symbol streams per user.
#[pyfunction]
fn mld_full_csi(
    received: Vec<Complex64>,
    states: Vec<PyChannelState>,
    constellation: &PyConstellation,
) -> PyResult<Vec<Vec<usize>>> {
    let states: Vec<ChannelState> = states.into_iter().map(|s| s.inner).collect();
    core_mld_full(&received, &states, &constellation.inner).map_err(value_error)
}

/// Joint maximum-likelihood detection with least-squares channel estimates
/// from each user's own pilot slots.
#[pyfunction]
fn mld_pilot_csi(
    received: Vec<Complex64>,
    pilots: Vec<(Vec<usize>, Vec<usize>)>,
    constellation: &PyConstellation,
) -> PyResult<Vec<Vec<usize>>> {
    let pilots = build_pilots(pilots)?;
    core_mld_pilot(&received, &pilots, &constellation.inner).map_err(value_error)
}

/// Parse a TOML experiment config and raise ValueError if it is invalid.
#[pyfunction]
fn validate_config(config_toml: &str) -> PyResult<()> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(value_error)?;
    cfg.validate().map_err(value_error)
}

/// Run a full Monte Carlo experiment from TOML config text and return the
/// result table as CSV text (same format as the CLI).
#[pyfunction]
fn run_experiment_csv(config_toml: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(value_error)?;
    let rows = run_experiment(&cfg).map_err(value_error)?;
    render_csv(&rows).map_err(value_error)
}

#[pymodule(name = "_native")]
fn nomalink_native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConstellation>()?;
    m.add_class::<PyChannelState>()?;
    m.add_class::<PyGmmFit>()?;
    m.add_class::<PyDetectionReport>()?;
    m.add_function(wrap_pyfunction!(q_function, m)?)?;
    m.add_function(wrap_pyfunction!(phase_mismatch_from_snr, m)?)?;
    m.add_function(wrap_pyfunction!(phase_mismatch_from_rmax, m)?)?;
    m.add_function(wrap_pyfunction!(ser_qpsk_phase_mismatch, m)?)?;
    m.add_function(wrap_pyfunction!(ser_single_user, m)?)?;
    m.add_function(wrap_pyfunction!(ser_noma_two_user, m)?)?;
    m.add_function(wrap_pyfunction!(ser_noma_reference, m)?)?;
    m.add_function(wrap_pyfunction!(modulate, m)?)?;
    m.add_function(wrap_pyfunction!(demap, m)?)?;
    m.add_function(wrap_pyfunction!(transmit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gaussian_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(gmm_sic_detect, m)?)?;
    m.add_function(wrap_pyfunction!(grant_free_detect, m)?)?;
    m.add_function(wrap_pyfunction!(mld_full_csi, m)?)?;
    m.add_function(wrap_pyfunction!(mld_pilot_csi, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment_csv, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pilot_conversion_round_trips_symbols_and_positions() {
        let pilots = build_pilots(vec![(vec![0, 0], vec![0, 1]), (vec![3], vec![2])]).unwrap();
        assert_eq!(pilots.len(), 2);
        assert_eq!(pilots[0].symbols(), &[0, 0]);
        assert_eq!(pilots[1].positions(), &[2]);
    }

    #[test]
    fn pilot_conversion_rejects_mismatched_lengths() {
        assert!(build_pilots(vec![(vec![0, 0], vec![0])]).is_err());
    }

    #[test]
    fn em_config_passes_fields_through() {
        let config = em_config(2.5, 42, 1e-9);
        assert_eq!(config.epsilon, 2.5);
        assert_eq!(config.max_iterations, 42);
        assert_eq!(config.covariance_floor, 1e-9);
    }
}
