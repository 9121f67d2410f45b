//! Experiment configuration: a flat TOML file mapped onto
//! [`ExperimentConfig`] with defaults, plus validation.
//!
//! Grammar: one `key = value` pair per line, no tables. Keys and defaults:
//!
//! | key                 | type        | default            | meaning                                          |
//! |---------------------|-------------|--------------------|--------------------------------------------------|
//! | `scenario`          | string      | required           | one of the [`Scenario`] names below              |
//! | `snr_db_grid`       | float array | required           | weakest user's SNR in dB, one run per entry      |
//! | `blocklength`       | integer     | required           | symbols per frame (pilots included)              |
//! | `trials`            | integer     | required           | Monte Carlo trials per grid point                |
//! | `seed`              | integer     | `0`                | base seed for the per-trial RNG streams          |
//! | `snr_gap_db`        | float       | `9` (`15` mixed)   | received-power gap between adjacent users        |
//! | `pilot_count`       | integer     | `2`                | pilot symbols per user                           |
//! | `epsilon`           | float       | `1.0`              | EM stopping threshold                            |
//! | `c3`                | float       | `0.005`            | calibration constant for the SER predictors      |
//! | `noise_variance`    | float       | `1.0`              | total complex noise variance (0 = noise-free)    |
//! | `power_pool_db`     | float array | `[0,5,10,15,20]`   | grant-free pool offsets added to the grid value  |
//! | `active_user_range` | int array   | `[1, 3]`           | grant-free active-count range (inclusive)        |
//! | `max_users`         | integer     | `4`                | grant-free cap on detection rounds              |
//!
//! Scenario names are snake case: `single_user`, `noma2`, `noma3`,
//! `mixed_modulation`, `grant_free`, `theory_only`. Unknown keys are
//! rejected so typos fail loudly instead of silently using a default.

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Which experiment family a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// One QPSK user; blind receiver vs coherent and pilot MLD.
    SingleUser,
    /// Two QPSK users separated by `snr_gap_db`.
    Noma2,
    /// Three QPSK users, each `snr_gap_db` apart.
    Noma3,
    /// Two users: strong 16-QAM over weak QPSK (default gap 15 dB).
    MixedModulation,
    /// Unknown active-user count, Rayleigh fading, power pool; throughput
    /// is the figure of merit.
    GrantFree,
    /// No trials: closed-form SER predictions on the grid only.
    TheoryOnly,
}

impl Scenario {
    /// Snake-case name used in config files and the CSV `scenario` column.
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SingleUser => "single_user",
            Scenario::Noma2 => "noma2",
            Scenario::Noma3 => "noma3",
            Scenario::MixedModulation => "mixed_modulation",
            Scenario::GrantFree => "grant_free",
            Scenario::TheoryOnly => "theory_only",
        }
    }

    /// Number of simultaneously transmitting users; for grant-free this is
    /// the largest possible active count and for theory-only it is zero.
    pub fn user_count(self, active_user_range: [usize; 2]) -> usize {
        match self {
            Scenario::SingleUser => 1,
            Scenario::Noma2 | Scenario::MixedModulation => 2,
            Scenario::Noma3 => 3,
            Scenario::GrantFree => active_user_range[1],
            Scenario::TheoryOnly => 0,
        }
    }
}

/// Full description of one experiment; see the module docs for the file
/// grammar and defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Weakest user's SNR in dB, one experiment cell per entry. Stronger
    /// users sit `snr_gap_db` apart above it; the grant-free pool offsets
    /// are added on top of each entry.
    pub snr_db_grid: Vec<f64>,
    pub blocklength: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Received-power gap between adjacent users in dB. Defaults to 9, or
    /// 15 for the mixed-modulation scenario; see [`ExperimentConfig::gap_db`].
    #[serde(default)]
    pub snr_gap_db: Option<f64>,
    #[serde(default = "default_pilot_count")]
    pub pilot_count: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_c3")]
    pub c3: f64,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
    #[serde(default = "default_power_pool_db")]
    pub power_pool_db: Vec<f64>,
    #[serde(default = "default_active_user_range")]
    pub active_user_range: [usize; 2],
    #[serde(default = "default_max_users")]
    pub max_users: usize,
}

fn default_pilot_count() -> usize {
    2
}

fn default_epsilon() -> f64 {
    1.0
}

fn default_c3() -> f64 {
    0.005
}

fn default_noise_variance() -> f64 {
    1.0
}

fn default_power_pool_db() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 15.0, 20.0]
}

fn default_active_user_range() -> [usize; 2] {
    [1, 3]
}

fn default_max_users() -> usize {
    4
}

impl ExperimentConfig {
    /// Parses a flat TOML document and validates it.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file.
    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ConfigRead {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The effective inter-user gap in dB (scenario-dependent default).
    pub fn gap_db(&self) -> f64 {
        self.snr_gap_db.unwrap_or(match self.scenario {
            Scenario::MixedModulation => 15.0,
            _ => 9.0,
        })
    }

    /// Number of users the scenario transmits (grant-free: the maximum).
    pub fn user_count(&self) -> usize {
        self.scenario.user_count(self.active_user_range)
    }

    /// Checks every invariant; called by the parsing constructors, and again
    /// by [`super::run_experiment`] so directly-built configs get the same
    /// screening.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |field: &'static str, detail: String| -> Result<(), HarnessError> {
            Err(HarnessError::InvalidConfig { field, detail })
        };
        if self.trials < 1 {
            return invalid("trials", "must be at least 1".into());
        }
        if self.snr_db_grid.is_empty() {
            return invalid("snr_db_grid", "must have at least one entry".into());
        }
        if let Some(bad) = self.snr_db_grid.iter().find(|v| !v.is_finite()) {
            return invalid("snr_db_grid", format!("entries must be finite, got {bad}"));
        }
        if let Some(gap) = self.snr_gap_db {
            if !gap.is_finite() {
                return invalid("snr_gap_db", format!("must be finite, got {gap}"));
            }
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return invalid("epsilon", format!("must be positive, got {}", self.epsilon));
        }
        if !(self.c3 >= 0.0) || !self.c3.is_finite() {
            return invalid("c3", format!("must be non-negative, got {}", self.c3));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return invalid(
                "noise_variance",
                format!("must be non-negative, got {}", self.noise_variance),
            );
        }
        if self.scenario != Scenario::TheoryOnly {
            if self.pilot_count < 1 {
                return invalid("pilot_count", "must be at least 1".into());
            }
            // Grant-free reserves a pilot block for every round the detector
            // may run, not just for the users that happen to be active.
            let pilot_users = match self.scenario {
                Scenario::GrantFree => self.max_users,
                _ => self.user_count(),
            };
            if self.blocklength <= self.pilot_count * pilot_users {
                return invalid(
                    "blocklength",
                    format!(
                        "{} does not exceed pilot_count * users = {}",
                        self.blocklength,
                        self.pilot_count * pilot_users
                    ),
                );
            }
        }
        if self.scenario == Scenario::GrantFree {
            if !(self.noise_variance > 0.0) {
                return invalid(
                    "noise_variance",
                    "grant-free stopping compares the residual against the noise power, \
                     which must be positive"
                        .into(),
                );
            }
            if self.power_pool_db.is_empty() {
                return invalid("power_pool_db", "must have at least one level".into());
            }
            if let Some(bad) = self.power_pool_db.iter().find(|v| !v.is_finite()) {
                return invalid("power_pool_db", format!("levels must be finite, got {bad}"));
            }
            let [lo, hi] = self.active_user_range;
            if lo < 1 || lo > hi {
                return invalid(
                    "active_user_range",
                    format!("need 1 <= min <= max, got [{lo}, {hi}]"),
                );
            }
            if hi > self.power_pool_db.len() {
                return invalid(
                    "active_user_range",
                    format!(
                        "max {hi} exceeds the {} power-pool levels (users pick distinct levels)",
                        self.power_pool_db.len()
                    ),
                );
            }
            if self.max_users < hi {
                return invalid(
                    "max_users",
                    format!("cap {} below the largest active count {hi}", self.max_users),
                );
            }
        }
        Ok(())
    }
}
