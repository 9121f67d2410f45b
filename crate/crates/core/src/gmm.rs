//! Expectation-maximization fitting of two-dimensional Gaussian mixtures.
//!
//! Superimposing K users on an AWGN uplink turns the received IQ cloud into an
//! M-component Gaussian mixture (one component per joint symbol), so blind
//! clustering of that cloud is mixture fitting. A sample z = (i, q) is scored
//! against component j by the bivariate normal density
//!
//! ```text
//! g_j(z) = exp(-(z - mu_j)^T Sigma_j^-1 (z - mu_j) / 2) / (2 pi sqrt|Sigma_j|)
//! ```
//!
//! and the fit alternates the classic two steps:
//!
//!   E-step   r_ij = w_j g_j(z_i) / sum_k w_k g_k(z_i)      (responsibilities)
//!   M-step   w_j  = sum_i r_ij / N
//!            mu_j = sum_i r_ij z_i / sum_i r_ij
//!            Sig_j = sum_i r_ij (z_i - mu_j)(z_i - mu_j)^T / sum_i r_ij + floor*I
//!
//! Iteration stops when the hard-assignment log-likelihood
//! l = sum_i ln(w_{m_i} g_{m_i}(z_i)), with m_i the argmax responsibility of
//! sample i, improves by less than `epsilon`. That statistic mixes hard
//! assignments with soft-updated parameters, so it is used purely as a
//! stopping rule; the marginal log-likelihood sum_i ln sum_j w_j g_j(z_i) --
//! the quantity EM actually ascends -- is recorded separately so callers can
//! check the usual monotonicity guarantee.
//!
//! Initialization is deterministic: the plane is split into `component_count`
//! equal angular sectors around the sample centroid and each component starts
//! at its sector's sample mean with identity covariance and uniform weight.
//! The whole pipeline is therefore a pure function of the input samples.

use crate::modem::IqSample;
use nalgebra::{Cholesky, Matrix2};
use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

/// Relative share of the total sample mass below which a component counts as
/// empty and gets re-seeded during the M-step.
const EMPTY_COMPONENT_MASS: f64 = 1e-8;

/// Densities are floored at the smallest positive normal before taking logs,
/// so log-likelihoods stay finite even for samples far outside the fit.
const LN_DENSITY_FLOOR: f64 = -708.3964185322641; // ln(f64::MIN_POSITIVE)

/// Errors raised by mixture construction and fitting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GmmError {
    /// Fitting M components needs at least M samples.
    #[error("need at least as many samples as components (got {samples} samples for {components} components)")]
    TooFewSamples { samples: usize, components: usize },
    /// A mixture must contain at least one component.
    #[error("mixture must have at least one component")]
    NoComponents,
    /// Weight, mean, and covariance lists must line up one-to-one.
    #[error("component lists disagree: {weights} weights, {means} means, {covariances} covariances")]
    MismatchedComponentCounts {
        weights: usize,
        means: usize,
        covariances: usize,
    },
    /// Weights must be nonnegative and sum to 1 within 1e-9.
    #[error("weights must be nonnegative and sum to 1 (sum was {sum})")]
    InvalidWeights { sum: f64 },
    /// Covariances must be symmetric within 1e-9 of their largest entry.
    #[error("covariance is asymmetric (off-diagonal skew {skew})")]
    AsymmetricCovariance { skew: f64 },
    /// Covariances must be positive-definite (checked via the determinant and
    /// leading minor of the 2x2 matrix).
    #[error("covariance is not positive-definite (determinant {determinant})")]
    SingularCovariance { determinant: f64 },
    /// Responsibility rows must be probability vectors.
    #[error("responsibility row {row} is not a probability vector (sum {sum})")]
    InvalidResponsibilities { row: usize, sum: f64 },
    /// A flat responsibility buffer must divide evenly into rows.
    #[error("responsibility buffer of {values} values is not divisible into rows of {components}")]
    RaggedResponsibilities { values: usize, components: usize },
    /// Samples and responsibility rows must correspond one-to-one.
    #[error("sample count {samples} does not match responsibility row count {rows}")]
    DimensionMismatch { samples: usize, rows: usize },
    /// EM configuration fields must be positive.
    #[error("EM config field {field} must be positive (got {value})")]
    InvalidConfig { field: &'static str, value: f64 },
}

/// Stopping and regularization knobs for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Minimum improvement of the hard-assignment log-likelihood per
    /// iteration; below this the fit is declared converged.
    pub epsilon: f64,
    /// Hard cap on EM iterations (M-step count).
    pub max_iterations: usize,
    /// Ridge added to every updated covariance as `covariance_floor * I`,
    /// keeping components invertible even when a cluster degenerates.
    pub covariance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            max_iterations: 100,
            covariance_floor: 1e-6,
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<(), GmmError> {
        if !(self.epsilon > 0.0) {
            return Err(GmmError::InvalidConfig {
                field: "epsilon",
                value: self.epsilon,
            });
        }
        if self.max_iterations < 1 {
            return Err(GmmError::InvalidConfig {
                field: "max_iterations",
                value: self.max_iterations as f64,
            });
        }
        if !(self.covariance_floor > 0.0) {
            return Err(GmmError::InvalidConfig {
                field: "covariance_floor",
                value: self.covariance_floor,
            });
        }
        Ok(())
    }
}

/// Parameters of a 2-D Gaussian mixture: weights, means (as IQ points), and
/// per-component 2x2 covariances. Construction validates the invariants, so a
/// value of this type is always safe to evaluate or sample from.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    weights: Vec<f64>,
    means: Vec<Complex64>,
    covariances: Vec<Matrix2<f64>>,
}

impl MixtureModel {
    /// Builds a mixture after checking that the component lists line up, the
    /// weights form a probability vector (sum within 1e-9 of 1), and every
    /// covariance is symmetric positive-definite.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Complex64>,
        covariances: Vec<Matrix2<f64>>,
    ) -> Result<Self, GmmError> {
        if weights.len() != means.len() || weights.len() != covariances.len() {
            return Err(GmmError::MismatchedComponentCounts {
                weights: weights.len(),
                means: means.len(),
                covariances: covariances.len(),
            });
        }
        if weights.is_empty() {
            return Err(GmmError::NoComponents);
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(GmmError::InvalidWeights { sum });
        }
        for cov in &covariances {
            check_covariance(cov)?;
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    /// Number of mixture components M.
    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    /// Component weights, summing to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Component means as IQ points.
    pub fn means(&self) -> &[Complex64] {
        &self.means
    }

    /// Component covariances.
    pub fn covariances(&self) -> &[Matrix2<f64>] {
        &self.covariances
    }

    /// Lower Cholesky factor of component `index`'s covariance; always exists
    /// because construction requires positive-definite covariances.
    pub fn covariance_cholesky(&self, index: usize) -> Matrix2<f64> {
        Cholesky::new(self.covariances[index])
            .expect("covariance validated positive-definite at construction")
            .l()
    }

    /// Mixture density sum_j w_j g_j(z) evaluated in the direct domain
    /// (underflows to 0 far from every component).
    pub fn density(&self, z: IqSample) -> f64 {
        component_evals(self)
            .map(|eval| eval.log_weighted_density(z).exp())
            .sum()
    }

    /// Returns a copy with components reordered by `permutation` (a bijection
    /// on 0..M given as the new order of old indices).
    pub fn permuted(&self, permutation: &[usize]) -> Self {
        assert_eq!(
            permutation.len(),
            self.component_count(),
            "permutation length must equal the component count"
        );
        Self {
            weights: permutation.iter().map(|&j| self.weights[j]).collect(),
            means: permutation.iter().map(|&j| self.means[j]).collect(),
            covariances: permutation.iter().map(|&j| self.covariances[j]).collect(),
        }
    }
}

/// Row-stochastic N x M responsibility matrix: entry (i, j) is the posterior
/// probability that sample i came from component j.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    values: Vec<f64>,
    components: usize,
}

impl Responsibilities {
    /// Wraps a flat row-major buffer, checking that rows divide evenly, all
    /// entries lie in [0, 1], and each row sums to 1 within 1e-9.
    pub fn new(values: Vec<f64>, components: usize) -> Result<Self, GmmError> {
        if components == 0 {
            return Err(GmmError::NoComponents);
        }
        if values.len() % components != 0 {
            return Err(GmmError::RaggedResponsibilities {
                values: values.len(),
                components,
            });
        }
        for (row, chunk) in values.chunks_exact(components).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if chunk.iter().any(|r| !(*r >= 0.0 && *r <= 1.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(GmmError::InvalidResponsibilities { row, sum });
            }
        }
        Ok(Self { values, components })
    }

    /// Number of samples N (rows).
    pub fn sample_count(&self) -> usize {
        self.values.len() / self.components
    }

    /// Number of components M (columns).
    pub fn component_count(&self) -> usize {
        self.components
    }

    /// Responsibility row for sample `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.components..(i + 1) * self.components]
    }

    /// Iterator over all rows in sample order.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.components)
    }

    /// Argmax component per sample; ties resolve to the lowest index.
    pub fn hard_assignments(&self) -> Vec<usize> {
        self.rows()
            .map(|row| {
                let mut best = 0usize;
                let mut best_r = row[0];
                for (j, &r) in row.iter().enumerate().skip(1) {
                    if r > best_r {
                        best_r = r;
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Result of an EM fit: the fitted mixture plus the per-sample posteriors and
/// the convergence record.
#[derive(Debug, Clone)]
pub struct GmmFit {
    model: MixtureModel,
    responsibilities: Responsibilities,
    hard_assignments: Vec<usize>,
    loglik_trace: Vec<f64>,
    soft_loglik_trace: Vec<f64>,
    iterations: usize,
}

impl GmmFit {
    /// Fitted mixture parameters.
    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    /// Shorthand for the fitted component weights.
    pub fn weights(&self) -> &[f64] {
        self.model.weights()
    }

    /// Shorthand for the fitted component means.
    pub fn means(&self) -> &[Complex64] {
        self.model.means()
    }

    /// Shorthand for the fitted component covariances.
    pub fn covariances(&self) -> &[Matrix2<f64>] {
        self.model.covariances()
    }

    /// Final responsibilities under the fitted parameters.
    pub fn responsibilities(&self) -> &Responsibilities {
        &self.responsibilities
    }

    /// Final argmax component per sample (ties to the lowest index).
    pub fn hard_assignments(&self) -> &[usize] {
        &self.hard_assignments
    }

    /// Hard-assignment log-likelihood per iteration, starting at the
    /// initialization (index 0). This is the stopping statistic.
    pub fn loglik_trace(&self) -> &[f64] {
        &self.loglik_trace
    }

    /// Marginal log-likelihood per iteration, aligned with
    /// [`GmmFit::loglik_trace`]. Non-decreasing by the EM guarantee.
    pub fn soft_loglik_trace(&self) -> &[f64] {
        &self.soft_loglik_trace
    }

    /// Number of M-steps performed before stopping.
    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Per-component quantities precomputed once per pass over the samples:
/// log-weight, mean, inverse covariance, and the log normalization constant.
struct ComponentEval {
    ln_weight: f64,
    mean: Complex64,
    inv00: f64,
    inv01: f64,
    inv11: f64,
    ln_norm: f64,
}

impl ComponentEval {
    /// ln(w g(z)); -inf when the weight is zero or the density underflows.
    fn log_weighted_density(&self, z: IqSample) -> f64 {
        self.ln_weight + self.log_density(z)
    }

    /// ln g(z) via the quadratic form in the precomputed inverse covariance.
    fn log_density(&self, z: IqSample) -> f64 {
        let dx = z.re - self.mean.re;
        let dy = z.im - self.mean.im;
        let quad = self.inv00 * dx * dx + 2.0 * self.inv01 * dx * dy + self.inv11 * dy * dy;
        -0.5 * quad + self.ln_norm
    }
}

fn check_covariance(cov: &Matrix2<f64>) -> Result<(f64, f64), GmmError> {
    let scale = cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let skew = cov[(0, 1)] - cov[(1, 0)];
    if !(skew.abs() <= 1e-9 * scale) {
        return Err(GmmError::AsymmetricCovariance { skew });
    }
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    // A symmetric 2x2 matrix is positive-definite iff its determinant and
    // leading entry are both positive.
    if !(det > 0.0 && cov[(0, 0)] > 0.0) || !det.is_finite() {
        return Err(GmmError::SingularCovariance { determinant: det });
    }
    Ok((det, scale))
}

fn component_evals(model: &MixtureModel) -> impl Iterator<Item = ComponentEval> + '_ {
    let ln_tau = TAU.ln();
    model.weights.iter().zip(&model.means).zip(&model.covariances).map(
        move |((&w, &mean), cov)| {
            let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
            ComponentEval {
                ln_weight: w.ln(),
                mean,
                inv00: cov[(1, 1)] / det,
                inv01: -0.5 * (cov[(0, 1)] + cov[(1, 0)]) / det,
                inv11: cov[(0, 0)] / det,
                ln_norm: -ln_tau - 0.5 * det.ln(),
            }
        },
    )
}

/// Bivariate normal density `exp(-(z-mu)^T cov^-1 (z-mu)/2) / (2 pi sqrt|cov|)`.
///
/// Errors if `cov` is not symmetric positive-definite.
pub fn gaussian_pdf(z: IqSample, mean: IqSample, cov: &Matrix2<f64>) -> Result<f64, GmmError> {
    let (det, _) = check_covariance(cov)?;
    let dx = z.re - mean.re;
    let dy = z.im - mean.im;
    let quad =
        (cov[(1, 1)] * dx * dx - (cov[(0, 1)] + cov[(1, 0)]) * dx * dy + cov[(0, 0)] * dy * dy)
            / det;
    Ok((-0.5 * quad).exp() / (TAU * det.sqrt()))
}

/// Deterministic initial mixture: split the plane into `component_count`
/// equal angular sectors around the sample centroid, seed each component at
/// its sector's sample mean with identity covariance and weight 1/M. A sector
/// that captures no samples falls back to the centroid plus a unit vector
/// along the sector bisector, keeping every mean distinct and finite.
pub fn init_by_sectors(
    samples: &[IqSample],
    component_count: usize,
) -> Result<MixtureModel, GmmError> {
    if component_count == 0 {
        return Err(GmmError::NoComponents);
    }
    if samples.len() < component_count {
        return Err(GmmError::TooFewSamples {
            samples: samples.len(),
            components: component_count,
        });
    }
    let centroid = samples.iter().sum::<Complex64>() / samples.len() as f64;
    let mut sums = vec![Complex64::new(0.0, 0.0); component_count];
    let mut counts = vec![0usize; component_count];
    for &z in samples {
        let mut angle = (z - centroid).arg();
        if angle < 0.0 {
            angle += TAU;
        }
        let sector = (((angle / TAU) * component_count as f64) as usize).min(component_count - 1);
        sums[sector] += z;
        counts[sector] += 1;
    }
    let means = sums
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(j, (sum, &count))| {
            if count > 0 {
                sum / count as f64
            } else {
                let bisector = TAU * (j as f64 + 0.5) / component_count as f64;
                centroid + Complex64::from_polar(1.0, bisector)
            }
        })
        .collect();
    MixtureModel::new(
        vec![1.0 / component_count as f64; component_count],
        means,
        vec![Matrix2::identity(); component_count],
    )
}

/// E-step: posterior responsibilities r_ij = w_j g_j(z_i) / sum_k w_k g_k(z_i),
/// evaluated in the log domain so widely separated components cannot underflow
/// each other. If every weighted density underflows to zero for a sample (all
/// log terms are -inf), that row falls back to the uniform vector 1/M.
pub fn e_step(samples: &[IqSample], model: &MixtureModel) -> Responsibilities {
    let evals: Vec<ComponentEval> = component_evals(model).collect();
    let m = evals.len();
    let mut values = Vec::with_capacity(samples.len() * m);
    let mut terms = vec![0.0f64; m];
    for &z in samples {
        let mut max_term = f64::NEG_INFINITY;
        for (term, eval) in terms.iter_mut().zip(&evals) {
            *term = eval.log_weighted_density(z);
            max_term = max_term.max(*term);
        }
        values.extend_from_slice(normalize_log_row(&mut terms, max_term));
    }
    Responsibilities {
        values,
        components: m,
    }
}

/// Turns log-domain terms into a normalized probability row in place, using
/// the max-shifted exponential trick. A row whose maximum is -inf (every
/// density underflowed) becomes the uniform distribution.
fn normalize_log_row(terms: &mut [f64], max_term: f64) -> &[f64] {
    if max_term == f64::NEG_INFINITY {
        terms.fill(1.0 / terms.len() as f64);
        return terms;
    }
    let mut sum = 0.0;
    for term in terms.iter_mut() {
        *term = (*term - max_term).exp();
        sum += *term;
    }
    for term in terms.iter_mut() {
        *term /= sum;
    }
    terms
}

/// M-step: re-estimates weights, means, and covariances from the current
/// responsibilities, adding `covariance_floor * I` to every covariance. A
/// component whose responsibility mass drops below 1e-8 of the sample count is
/// re-seeded at the not-yet-claimed sample with the lowest mixture density
/// under the surviving components (identity covariance, one sample's worth of
/// weight), and the weights are renormalized.
pub fn m_step(
    samples: &[IqSample],
    responsibilities: &Responsibilities,
    covariance_floor: f64,
) -> Result<MixtureModel, GmmError> {
    let n = samples.len();
    if n != responsibilities.sample_count() {
        return Err(GmmError::DimensionMismatch {
            samples: n,
            rows: responsibilities.sample_count(),
        });
    }
    let m = responsibilities.component_count();

    let mut mass = vec![0.0f64; m];
    let mut mean_sums = vec![Complex64::new(0.0, 0.0); m];
    for (&z, row) in samples.iter().zip(responsibilities.rows()) {
        for j in 0..m {
            mass[j] += row[j];
            mean_sums[j] += row[j] * z;
        }
    }

    let empty_threshold = EMPTY_COMPONENT_MASS * n as f64;
    let healthy: Vec<bool> = mass.iter().map(|&s| s >= empty_threshold).collect();

    let mut weights = vec![0.0f64; m];
    let mut means = vec![Complex64::new(0.0, 0.0); m];
    let mut covariances = vec![Matrix2::identity(); m];
    for j in 0..m {
        if !healthy[j] {
            continue;
        }
        weights[j] = mass[j] / n as f64;
        means[j] = mean_sums[j] / mass[j];
        let (mut sxx, mut sxy, mut syy) = (0.0f64, 0.0f64, 0.0f64);
        for (&z, row) in samples.iter().zip(responsibilities.rows()) {
            let dx = z.re - means[j].re;
            let dy = z.im - means[j].im;
            sxx += row[j] * dx * dx;
            sxy += row[j] * dx * dy;
            syy += row[j] * dy * dy;
        }
        covariances[j] = Matrix2::new(
            sxx / mass[j] + covariance_floor,
            sxy / mass[j],
            sxy / mass[j],
            syy / mass[j] + covariance_floor,
        );
    }

    if healthy.iter().any(|&h| !h) {
        reseed_empty_components(
            samples,
            &healthy,
            &mut weights,
            &mut means,
            &mut covariances,
        );
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
    }

    MixtureModel::new(weights, means, covariances)
}

/// Places each empty component on the sample least explained by the healthy
/// components: samples are ranked by mixture density under the freshly updated
/// healthy parameters and claimed lowest-first, one per empty component, so
/// re-seeded means are always distinct. Each re-seeded component gets identity
/// covariance and one sample's worth of weight (renormalized by the caller).
fn reseed_empty_components(
    samples: &[IqSample],
    healthy: &[bool],
    weights: &mut [f64],
    means: &mut [Complex64],
    covariances: &mut [Matrix2<f64>],
) {
    let healthy_model = MixtureModel {
        weights: healthy
            .iter()
            .zip(weights.iter())
            .filter(|(&h, _)| h)
            .map(|(_, &w)| w)
            .collect(),
        means: healthy
            .iter()
            .zip(means.iter())
            .filter(|(&h, _)| h)
            .map(|(_, &mu)| mu)
            .collect(),
        covariances: healthy
            .iter()
            .zip(covariances.iter())
            .filter(|(&h, _)| h)
            .map(|(_, &cov)| cov)
            .collect(),
    };
    // Rank ascending by density; ties keep the original sample order. At
    // least one component is always healthy because the responsibility mass
    // across all components equals the sample count.
    let mut ranked: Vec<(f64, usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, &z)| (healthy_model.density(z), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut next = ranked.iter();
    let per_sample_weight = 1.0 / samples.len() as f64;
    for j in 0..healthy.len() {
        if healthy[j] {
            continue;
        }
        let &(_, i) = next.next().expect("more empty components than samples");
        weights[j] = per_sample_weight;
        means[j] = samples[i];
        covariances[j] = Matrix2::identity();
    }
}

/// Hard-assignment log-likelihood sum_i ln(w_{m_i} g_{m_i}(z_i)) where m_i is
/// `assignments[i]`. Each per-sample density is floored at the smallest
/// positive normal before the log, so the result is always finite.
pub fn hard_loglik(samples: &[IqSample], model: &MixtureModel, assignments: &[usize]) -> f64 {
    assert_eq!(
        samples.len(),
        assignments.len(),
        "one assignment per sample"
    );
    let evals: Vec<ComponentEval> = component_evals(model).collect();
    samples
        .iter()
        .zip(assignments)
        .map(|(&z, &j)| evals[j].log_weighted_density(z).max(LN_DENSITY_FLOOR))
        .sum()
}

/// Marginal log-likelihood sum_i ln sum_j w_j g_j(z_i), the quantity EM
/// ascends. Per-sample terms are floored like in [`hard_loglik`].
pub fn marginal_loglik(samples: &[IqSample], model: &MixtureModel) -> f64 {
    let evals: Vec<ComponentEval> = component_evals(model).collect();
    let mut terms = vec![0.0f64; evals.len()];
    samples
        .iter()
        .map(|&z| {
            let mut max_term = f64::NEG_INFINITY;
            for (term, eval) in terms.iter_mut().zip(&evals) {
                *term = eval.log_weighted_density(z);
                max_term = max_term.max(*term);
            }
            if max_term == f64::NEG_INFINITY {
                return LN_DENSITY_FLOOR;
            }
            let sum: f64 = terms.iter().map(|t| (t - max_term).exp()).sum();
            (max_term + sum.ln()).max(LN_DENSITY_FLOOR)
        })
        .sum()
}

/// Fits a `component_count`-component mixture to the samples starting from the
/// deterministic sector initialization. See [`fit_from`] for the loop itself.
pub fn fit(
    samples: &[IqSample],
    component_count: usize,
    config: &EmConfig,
) -> Result<GmmFit, GmmError> {
    fit_from(samples, init_by_sectors(samples, component_count)?, config)
}

/// Runs the EM loop from an explicit initial mixture: alternate M-step and
/// E-step, record both log-likelihood traces after every update, and stop as
/// soon as the hard-assignment statistic improves by less than
/// `config.epsilon` or `config.max_iterations` M-steps have run.
pub fn fit_from(
    samples: &[IqSample],
    initial: MixtureModel,
    config: &EmConfig,
) -> Result<GmmFit, GmmError> {
    config.validate()?;
    if samples.len() < initial.component_count() {
        return Err(GmmError::TooFewSamples {
            samples: samples.len(),
            components: initial.component_count(),
        });
    }

    let mut model = initial;
    let mut responsibilities = e_step(samples, &model);
    let mut assignments = responsibilities.hard_assignments();
    let mut previous = hard_loglik(samples, &model, &assignments);
    let mut loglik_trace = vec![previous];
    let mut soft_loglik_trace = vec![marginal_loglik(samples, &model)];
    let mut iterations = 0;

    for _ in 0..config.max_iterations {
        model = m_step(samples, &responsibilities, config.covariance_floor)?;
        responsibilities = e_step(samples, &model);
        assignments = responsibilities.hard_assignments();
        let current = hard_loglik(samples, &model, &assignments);
        loglik_trace.push(current);
        soft_loglik_trace.push(marginal_loglik(samples, &model));
        iterations += 1;
        if current - previous < config.epsilon {
            break;
        }
        previous = current;
    }

    Ok(GmmFit {
        model,
        responsibilities,
        hard_assignments: assignments,
        loglik_trace,
        soft_loglik_trace,
        iterations,
    })
}
