use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::EpsilonSchedule;
use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::nn::{q_network_spec, validate_specs, Activation, LayerSpec};

/// Q-network shapes compared in the architecture ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// No hidden layer.
    Linear,
    /// One hidden layer of 128 ReLU units.
    Relu1,
    /// Two hidden layers of 128 ReLU units.
    Relu2,
    /// Two hidden layers of 128 tanh units.
    Tanh2,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Linear,
        Architecture::Relu1,
        Architecture::Relu2,
        Architecture::Tanh2,
    ];

    pub fn layers(self, env: EnvId) -> Vec<LayerSpec> {
        let (i, o) = (env.obs_dim(), env.num_actions());
        match self {
            Architecture::Linear => q_network_spec(i, o, 0, 128, Activation::Identity),
            Architecture::Relu1 => q_network_spec(i, o, 1, 128, Activation::Relu),
            Architecture::Relu2 => q_network_spec(i, o, 2, 128, Activation::Relu),
            Architecture::Tanh2 => q_network_spec(i, o, 2, 128, Activation::Tanh),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::Relu1 => "relu1x128",
            Architecture::Relu2 => "relu2x128",
            Architecture::Tanh2 => "tanh2x128",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Architecture::Linear),
            "relu1" | "relu1x128" => Ok(Architecture::Relu1),
            "relu2" | "relu2x128" => Ok(Architecture::Relu2),
            "tanh2" | "tanh2x128" => Ok(Architecture::Tanh2),
            other => Err(Error::Usage(format!(
                "unknown architecture '{other}' (expected linear, relu1, relu2 or tanh2)"
            ))),
        }
    }
}

/// Every knob of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvId,
    pub architecture: Vec<LayerSpec>,
    pub schedule: EpsilonSchedule,
    pub total_env_steps: u64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub target_sync_period: u64,
    pub seed: u64,
    pub learn_start: usize,
    pub snapshot_steps: Vec<u64>,
    pub timeout_bootstrap: bool,
}

pub const BATCH_SIZE: usize = 256;
pub const GAMMA: f64 = 0.99;
pub const ALPHA: f64 = 5e-4;
pub const TARGET_SYNC_PERIOD: u64 = 1000;
pub const MOUNTAIN_CAR_SNAPSHOTS: [u64; 4] = [10_000, 20_000, 40_000, 160_000];

pub fn default_buffer_capacity(env: EnvId) -> usize {
    match env {
        EnvId::MountainCar => 200_000,
        EnvId::CartPole | EnvId::Acrobot => 50_000,
    }
}

pub fn default_total_steps(env: EnvId) -> u64 {
    match env {
        EnvId::MountainCar => 160_000,
        EnvId::CartPole | EnvId::Acrobot => 100_000,
    }
}

pub fn default_snapshot_steps(env: EnvId) -> Vec<u64> {
    match env {
        EnvId::MountainCar => MOUNTAIN_CAR_SNAPSHOTS.to_vec(),
        EnvId::CartPole | EnvId::Acrobot => Vec::new(),
    }
}

impl TrainConfig {
    /// Published hyper-parameters for `env`: two 128-unit ReLU layers,
    /// greedy policy, batch 256, gamma 0.99, Adam 5e-4, sync every 1000 steps.
    pub fn defaults(env: EnvId) -> Self {
        TrainConfig {
            env,
            architecture: Architecture::Relu2.layers(env),
            schedule: EpsilonSchedule::greedy(),
            total_env_steps: default_total_steps(env),
            buffer_capacity: default_buffer_capacity(env),
            batch_size: BATCH_SIZE,
            gamma: GAMMA,
            alpha: ALPHA,
            target_sync_period: TARGET_SYNC_PERIOD,
            seed: 0,
            learn_start: BATCH_SIZE,
            snapshot_steps: default_snapshot_steps(env),
            timeout_bootstrap: true,
        }
    }

    pub fn with_architecture(mut self, arch: Architecture) -> Self {
        self.architecture = arch.layers(self.env);
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_specs(&self.architecture)?;
        let first = self.architecture[0];
        let last = self.architecture[self.architecture.len() - 1];
        if first.input_dim != self.env.obs_dim() || last.output_dim != self.env.num_actions() {
            return Err(Error::Config(format!(
                "network maps {} -> {} but {} needs {} -> {}",
                first.input_dim,
                last.output_dim,
                self.env,
                self.env.obs_dim(),
                self.env.num_actions()
            )));
        }
        if last.activation != Activation::Identity {
            return Err(Error::Config("Q-network output layer must be identity".into()));
        }
        self.schedule.validate()?;
        if self.buffer_capacity == 0 || self.batch_size == 0 || self.target_sync_period == 0 {
            return Err(Error::Config(
                "buffer_capacity, batch_size and target_sync_period must be positive".into(),
            ));
        }
        if self.learn_start < self.batch_size {
            return Err(Error::Config(format!(
                "learn_start {} is smaller than batch_size {}",
                self.learn_start, self.batch_size
            )));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::Config("batch_size exceeds buffer_capacity".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha {} must be positive", self.alpha)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Parses a JSON config; absent fields take the defaults of its `env`
    /// (MountainCar when `env` is absent too).
    pub fn from_json(text: &str) -> Result<Self> {
        let partial: PartialConfig = serde_json::from_str(text)?;
        let config = partial.resolve();
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    env: Option<EnvId>,
    architecture: Option<Vec<LayerSpec>>,
    schedule: Option<EpsilonSchedule>,
    total_env_steps: Option<u64>,
    buffer_capacity: Option<usize>,
    batch_size: Option<usize>,
    gamma: Option<f64>,
    alpha: Option<f64>,
    target_sync_period: Option<u64>,
    seed: Option<u64>,
    learn_start: Option<usize>,
    snapshot_steps: Option<Vec<u64>>,
    timeout_bootstrap: Option<bool>,
}

impl PartialConfig {
    fn resolve(self) -> TrainConfig {
        let d = TrainConfig::defaults(self.env.unwrap_or(EnvId::MountainCar));
        let batch_size = self.batch_size.unwrap_or(d.batch_size);
        TrainConfig {
            env: d.env,
            architecture: self.architecture.unwrap_or(d.architecture),
            schedule: self.schedule.unwrap_or(d.schedule),
            total_env_steps: self.total_env_steps.unwrap_or(d.total_env_steps),
            buffer_capacity: self.buffer_capacity.unwrap_or(d.buffer_capacity),
            batch_size,
            gamma: self.gamma.unwrap_or(d.gamma),
            alpha: self.alpha.unwrap_or(d.alpha),
            target_sync_period: self.target_sync_period.unwrap_or(d.target_sync_period),
            seed: self.seed.unwrap_or(d.seed),
            learn_start: self.learn_start.unwrap_or(batch_size),
            snapshot_steps: self.snapshot_steps.unwrap_or(d.snapshot_steps),
            timeout_bootstrap: self.timeout_bootstrap.unwrap_or(d.timeout_bootstrap),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_hyper_parameters() {
        let mc = TrainConfig::defaults(EnvId::MountainCar);
        assert_eq!(mc.buffer_capacity, 200_000);
        assert_eq!(mc.batch_size, 256);
        assert_eq!(mc.gamma, 0.99);
        assert_eq!(mc.alpha, 5e-4);
        assert_eq!(mc.target_sync_period, 1000);
        assert_eq!(mc.learn_start, 256);
        assert_eq!(mc.snapshot_steps, vec![10_000, 20_000, 40_000, 160_000]);
        assert_eq!(mc.schedule, EpsilonSchedule::greedy());
        let widths: Vec<_> = mc.architecture.iter().map(|l| (l.output_dim, l.activation)).collect();
        assert_eq!(
            widths,
            vec![(128, Activation::Relu), (128, Activation::Relu), (3, Activation::Identity)]
        );
        assert!(mc.validate().is_ok());
        for env in [EnvId::CartPole, EnvId::Acrobot] {
            let c = TrainConfig::defaults(env);
            assert_eq!(c.buffer_capacity, 50_000);
            assert!(c.validate().is_ok());
        }
    }

    #[test]
    fn empty_json_is_mountain_car_defaults() {
        assert_eq!(TrainConfig::from_json("{}").unwrap(), TrainConfig::defaults(EnvId::MountainCar));
    }

    #[test]
    fn missing_fields_follow_the_env() {
        let c = TrainConfig::from_json(r#"{"env":"cartpole","seed":9}"#).unwrap();
        assert_eq!(c.buffer_capacity, 50_000);
        assert_eq!(c.architecture[0].input_dim, 4);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn json_round_trip() {
        let mut c = TrainConfig::defaults(EnvId::Acrobot).with_architecture(Architecture::Tanh2);
        c.schedule = EpsilonSchedule::decay_to_zero(10_000);
        c.seed = u64::MAX;
        assert_eq!(TrainConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(TrainConfig::from_json(r#"{"bogus":1}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"gamma":1.5}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"batch_size":512,"learn_start":100}"#).is_err());
        let mut c = TrainConfig::defaults(EnvId::MountainCar);
        c.architecture = Architecture::Relu2.layers(EnvId::CartPole);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn architecture_shapes() {
        let env = EnvId::MountainCar;
        assert_eq!(Architecture::Linear.layers(env).len(), 1);
        assert_eq!(Architecture::Relu1.layers(env).len(), 2);
        assert_eq!(Architecture::Tanh2.layers(env)[1].activation, Activation::Tanh);
        for a in Architecture::ALL {
            assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
        }
    }
}
