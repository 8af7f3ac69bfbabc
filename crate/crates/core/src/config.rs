//! Scenario files.
//!
//! A scenario is a TOML document whose physical fields carry explicit units
//! (see [`crate::units`]). Loading resolves everything to linear SI values once;
//! [`Scenario::to_toml`] echoes the resolved form back, together with the
//! derived link and reward quantities, and re-parses to an identical scenario.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{LinkDerived, LinkParams};
use crate::environment::{CostParams, Environment};
use crate::error::{Error, Result};
use crate::learner::LearnerParams;
use crate::policies::PolicySpec;
use crate::qtable::StateSpace;
use crate::units::{self, Dimension};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Train one table, evaluate it over every evaluation seed.
    #[default]
    SingleTable,
    /// Train a fresh table for each evaluation run.
    RetrainPerRun,
}

impl TrainingMode {
    pub fn label(self) -> &'static str {
        match self {
            TrainingMode::SingleTable => "single_table",
            TrainingMode::RetrainPerRun => "retrain_per_run",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSettings {
    pub step_size: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub iterations: u64,
    pub checkpoint_every: u64,
    pub progress_every: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSettings {
    /// Slots per evaluation episode.
    pub horizon: u64,
    pub runs: u64,
    pub seed: u64,
    pub policies: Vec<PolicySpec>,
    pub beta1_grid: Vec<f64>,
    pub convergence_grid: Vec<u64>,
    pub training_mode: TrainingMode,
}

/// Fully resolved scenario, linear SI units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub request_probs: Vec<f64>,
    pub user_weights: Vec<f64>,
    pub delivery_phase_s: f64,
    pub max_age: u32,
    pub link: LinkParams,
    pub sensing_energy_j: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub learner: LearnerSettings,
    pub evaluation: EvaluationSettings,
    pub output_dir: PathBuf,
}

/// Everything computed from a scenario before simulation starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derived {
    pub link: LinkDerived,
    pub slot_s: f64,
    pub energy_mj: f64,
    pub reward_constant_base: f64,
    pub reward_constant: f64,
    pub state_action_pairs: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    network: RawNetwork,
    link: RawLink,
    cost: RawCost,
    learner: RawLearner,
    evaluation: RawEvaluation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<RawOutput>,
    /// Informational echo; ignored on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    derived: Option<toml::Table>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    users: usize,
    request_probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user_weights: Option<Vec<f64>>,
    delivery_phase: String,
    update_phase: String,
    max_age_slots: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    packet_size: String,
    bandwidth: String,
    transmit_power: String,
    mean_channel_gain: String,
    noise_density: String,
    sensing_energy: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    beta1: f64,
    beta2: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLearner {
    step_size: f64,
    discount: f64,
    epsilon_start: f64,
    epsilon_end: f64,
    iterations: u64,
    #[serde(default)]
    checkpoint_every: Option<u64>,
    #[serde(default)]
    progress_every: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvaluation {
    horizon: u64,
    runs: u64,
    seed: u64,
    policies: Vec<String>,
    #[serde(default)]
    beta1_grid: Vec<f64>,
    #[serde(default)]
    convergence_grid: Vec<u64>,
    #[serde(default)]
    training_mode: TrainingMode,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: PathBuf,
}

const DEFAULT_CHECKPOINT_EVERY: u64 = 10_000_000;

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::resolve(raw)
    }

    fn resolve(raw: RawScenario) -> Result<Self> {
        let net = raw.network;
        if net.users == 0 {
            return Err(Error::Config("network.users must be >= 1".into()));
        }
        if net.request_probs.len() != net.users {
            return Err(Error::Config(format!(
                "network.request_probs has {} entries for {} users",
                net.request_probs.len(),
                net.users
            )));
        }
        let user_weights = net
            .user_weights
            .unwrap_or_else(|| CostParams::uniform_weights(net.users));
        let link = LinkParams {
            packet_size_bits: units::parse(&raw.link.packet_size, Dimension::Data)?,
            update_phase_s: units::parse(&net.update_phase, Dimension::Time)?,
            bandwidth_hz: units::parse(&raw.link.bandwidth, Dimension::Frequency)?,
            transmit_power_w: units::parse(&raw.link.transmit_power, Dimension::Power)?,
            mean_channel_gain: units::parse(&raw.link.mean_channel_gain, Dimension::Gain)?,
            noise_density_w_per_hz: units::parse(&raw.link.noise_density, Dimension::PowerDensity)?,
        };
        let l = raw.learner;
        let e = raw.evaluation;
        let policies = e
            .policies
            .iter()
            .map(|p| p.parse())
            .collect::<Result<Vec<PolicySpec>>>()?;
        let scenario = Scenario {
            name: raw.name,
            request_probs: net.request_probs,
            user_weights,
            delivery_phase_s: units::parse(&net.delivery_phase, Dimension::Time)?,
            max_age: net.max_age_slots,
            link,
            sensing_energy_j: units::parse(&raw.link.sensing_energy, Dimension::Energy)?,
            beta1: raw.cost.beta1,
            beta2: raw.cost.beta2,
            learner: LearnerSettings {
                step_size: l.step_size,
                discount: l.discount,
                epsilon_start: l.epsilon_start,
                epsilon_end: l.epsilon_end,
                iterations: l.iterations,
                checkpoint_every: l.checkpoint_every.unwrap_or(DEFAULT_CHECKPOINT_EVERY),
                progress_every: l
                    .progress_every
                    .unwrap_or_else(|| (l.iterations / 100).max(1)),
            },
            evaluation: EvaluationSettings {
                horizon: e.horizon,
                runs: e.runs,
                seed: e.seed,
                policies,
                beta1_grid: e.beta1_grid,
                convergence_grid: e.convergence_grid,
                training_mode: e.training_mode,
            },
            output_dir: raw
                .output
                .map(|o| o.dir)
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delivery_phase_s.is_finite() && self.delivery_phase_s > 0.0) {
            return Err(Error::param("delivery_phase", "must be > 0"));
        }
        if !(self.sensing_energy_j.is_finite() && self.sensing_energy_j >= 0.0) {
            return Err(Error::param("sensing_energy", "must be >= 0"));
        }
        if self.learner.checkpoint_every == 0 || self.learner.progress_every == 0 {
            return Err(Error::Config(
                "checkpoint/progress intervals must be >= 1".into(),
            ));
        }
        if self.evaluation.horizon == 0 {
            return Err(Error::param("horizon", "must be >= 1"));
        }
        self.link.validate()?;
        self.learner_params().validate()?;
        self.environment()?;
        self.state_space()?;
        Ok(())
    }

    pub fn users(&self) -> usize {
        self.request_probs.len()
    }

    pub fn slot_seconds(&self) -> f64 {
        self.link.update_phase_s + self.delivery_phase_s
    }

    /// `E = E_s + p * D_u`, in millijoules.
    pub fn update_energy_mj(&self) -> f64 {
        (self.sensing_energy_j + self.link.transmit_power_w * self.link.update_phase_s) * 1e3
    }

    pub fn cost_params(&self) -> Result<CostParams> {
        CostParams::new(
            self.beta1,
            self.beta2,
            self.user_weights.clone(),
            self.update_energy_mj(),
        )
    }

    pub fn environment(&self) -> Result<Environment> {
        let derived = self.link.derive()?;
        Environment::new(
            self.request_probs.clone(),
            derived.failure_prob,
            self.max_age,
            self.slot_seconds(),
            self.cost_params()?,
        )
    }

    pub fn learner_params(&self) -> LearnerParams {
        LearnerParams {
            step_size: self.learner.step_size,
            discount: self.learner.discount,
            epsilon_start: self.learner.epsilon_start,
            epsilon_end: self.learner.epsilon_end,
            iterations: self.learner.iterations,
        }
    }

    pub fn state_space(&self) -> Result<StateSpace> {
        StateSpace::new(self.users(), self.max_age)
    }

    pub fn derived(&self) -> Result<Derived> {
        let cost = self.cost_params()?;
        let slot_s = self.slot_seconds();
        Ok(Derived {
            link: self.link.derive()?,
            slot_s,
            energy_mj: cost.energy_mj,
            reward_constant_base: cost.base_reward_constant(self.max_age, slot_s),
            reward_constant: cost.padded_reward_constant(self.max_age, slot_s),
            state_action_pairs: self.state_space()?.num_entries(),
        })
    }

    pub fn with_beta1(&self, beta1: f64) -> Self {
        Self {
            beta1,
            ..self.clone()
        }
    }

    pub fn with_iterations(&self, iterations: u64) -> Self {
        let mut s = self.clone();
        s.learner.iterations = iterations;
        s
    }

    /// Identifies the table a training run of this scenario produces: every
    /// field that shapes the dynamics, the reward or the learning schedule.
    /// Seeds, evaluation settings and paths are excluded.
    pub fn fingerprint(&self) -> u64 {
        let mut canon = String::new();
        let mut put = |name: &str, v: f64| {
            let _ = write!(canon, "{name}={:016x};", v.to_bits());
        };
        put("users", self.users() as f64);
        for (i, p) in self.request_probs.iter().enumerate() {
            put(&format!("p{i}"), *p);
        }
        for (i, w) in self.user_weights.iter().enumerate() {
            put(&format!("w{i}"), *w);
        }
        put("d_d", self.delivery_phase_s);
        put("d_u", self.link.update_phase_s);
        put("m_max", f64::from(self.max_age));
        put("f", self.link.packet_size_bits);
        put("b", self.link.bandwidth_hz);
        put("p", self.link.transmit_power_w);
        put("g", self.link.mean_channel_gain);
        put("n0", self.link.noise_density_w_per_hz);
        put("e_s", self.sensing_energy_j);
        put("beta1", self.beta1);
        put("beta2", self.beta2);
        put("alpha", self.learner.step_size);
        put("lambda", self.learner.discount);
        put("eps0", self.learner.epsilon_start);
        put("eps1", self.learner.epsilon_end);
        let _ = write!(canon, "t_max={};", self.learner.iterations);
        let digest = Sha256::digest(canon.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    /// Resolved scenario in linear units, plus a `[derived]` section.
    pub fn to_toml(&self) -> Result<String> {
        let derived = self.derived()?;
        let mut d = toml::Table::new();
        let mut put = |k: &str, v: f64| {
            d.insert(k.to_string(), toml::Value::Float(v));
        };
        put("required_rate_bps", derived.link.required_rate_bps);
        put("snr_threshold", derived.link.snr_threshold);
        put("mean_snr", derived.link.mean_snr);
        put("failure_prob", derived.link.failure_prob);
        put("slot_s", derived.slot_s);
        put("update_energy_mj", derived.energy_mj);
        put("reward_constant_base", derived.reward_constant_base);
        put("reward_constant", derived.reward_constant);
        d.insert(
            "state_action_pairs".into(),
            toml::Value::Integer(derived.state_action_pairs as i64),
        );
        d.insert(
            "fingerprint".into(),
            toml::Value::String(format!("{:016x}", self.fingerprint())),
        );

        let raw = RawScenario {
            name: self.name.clone(),
            network: RawNetwork {
                users: self.users(),
                request_probs: self.request_probs.clone(),
                user_weights: Some(self.user_weights.clone()),
                delivery_phase: units::format_si(self.delivery_phase_s, Dimension::Time),
                update_phase: units::format_si(self.link.update_phase_s, Dimension::Time),
                max_age_slots: self.max_age,
            },
            link: RawLink {
                packet_size: units::format_si(self.link.packet_size_bits, Dimension::Data),
                bandwidth: units::format_si(self.link.bandwidth_hz, Dimension::Frequency),
                transmit_power: units::format_si(self.link.transmit_power_w, Dimension::Power),
                mean_channel_gain: units::format_si(self.link.mean_channel_gain, Dimension::Gain),
                noise_density: units::format_si(
                    self.link.noise_density_w_per_hz,
                    Dimension::PowerDensity,
                ),
                sensing_energy: units::format_si(self.sensing_energy_j, Dimension::Energy),
            },
            cost: RawCost {
                beta1: self.beta1,
                beta2: self.beta2,
            },
            learner: RawLearner {
                step_size: self.learner.step_size,
                discount: self.learner.discount,
                epsilon_start: self.learner.epsilon_start,
                epsilon_end: self.learner.epsilon_end,
                iterations: self.learner.iterations,
                checkpoint_every: Some(self.learner.checkpoint_every),
                progress_every: Some(self.learner.progress_every),
            },
            evaluation: RawEvaluation {
                horizon: self.evaluation.horizon,
                runs: self.evaluation.runs,
                seed: self.evaluation.seed,
                policies: self
                    .evaluation
                    .policies
                    .iter()
                    .map(|p| p.to_string())
                    .collect(),
                beta1_grid: self.evaluation.beta1_grid.clone(),
                convergence_grid: self.evaluation.convergence_grid.clone(),
                training_mode: self.evaluation.training_mode,
            },
            output: Some(RawOutput {
                dir: self.output_dir.clone(),
            }),
            derived: Some(d),
        };
        toml::to_string(&raw).map_err(|e| Error::Config(e.to_string()))
    }
}
