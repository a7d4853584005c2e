use crate::agent::EpsilonSchedule;
use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::experiment::config::{Architecture, TrainConfig};
use crate::rng::mix_seed;

/// Runs sharing everything but the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub name: String,
    pub runs: Vec<TrainConfig>,
}

impl Group {
    pub fn run_dir_name(index: usize) -> String {
        format!("seed_{index}")
    }
}

/// Seed of run `index` in a grid built from `base_seed`. The same index gets
/// the same seed in every group, so variants are compared on paired seeds.
pub fn run_seed(base_seed: u64, index: usize) -> u64 {
    mix_seed(base_seed, index as u64)
}

fn group(name: String, template: TrainConfig, seeds: usize, base_seed: u64) -> Group {
    let runs = (0..seeds)
        .map(|i| TrainConfig {
            seed: run_seed(base_seed, i),
            ..template.clone()
        })
        .collect();
    Group { name, runs }
}

fn schedule_label(s: &EpsilonSchedule) -> String {
    match *s {
        EpsilonSchedule::Constant { value: 0.0 } => "greedy".into(),
        EpsilonSchedule::Constant { value } => format!("eps{value}"),
        EpsilonSchedule::LinearDecay { decay_steps, .. } => format!("decay{}k", decay_steps / 1000),
    }
}

fn with_schedule(env: EnvId, schedule: EpsilonSchedule) -> TrainConfig {
    TrainConfig {
        schedule,
        ..TrainConfig::defaults(env)
    }
}

/// Epsilon ablation on MountainCar: greedy vs decays over 25k and 100k
/// steps, 5 seeds each.
pub fn figure1(base_seed: u64) -> Vec<Group> {
    [
        EpsilonSchedule::greedy(),
        EpsilonSchedule::decay_to_zero(25_000),
        EpsilonSchedule::decay_to_zero(100_000),
    ]
    .iter()
    .map(|s| {
        let name = format!("mountaincar-{}", schedule_label(s));
        group(name, with_schedule(EnvId::MountainCar, *s), 5, base_seed)
    })
    .collect()
}

/// Greedy vs a 10k-step decay on CartPole and Acrobot, 10 seeds each.
pub fn figure2(base_seed: u64) -> Vec<Group> {
    let mut groups = Vec::new();
    for env in [EnvId::CartPole, EnvId::Acrobot] {
        for s in [EpsilonSchedule::greedy(), EpsilonSchedule::decay_to_zero(10_000)] {
            let name = format!("{}-{}", env.name(), schedule_label(&s));
            groups.push(group(name, with_schedule(env, s), 10, base_seed));
        }
    }
    groups
}

/// Greedy MountainCar with each of the four Q-network shapes, 5 seeds each.
pub fn figure3(base_seed: u64) -> Vec<Group> {
    Architecture::ALL
        .iter()
        .map(|a| {
            let template = TrainConfig::defaults(EnvId::MountainCar).with_architecture(*a);
            group(format!("mountaincar-{}", a.name()), template, 5, base_seed)
        })
        .collect()
}

pub fn figure(number: u32, base_seed: u64) -> Result<Vec<Group>> {
    match number {
        1 => Ok(figure1(base_seed)),
        2 => Ok(figure2(base_seed)),
        3 => Ok(figure3(base_seed)),
        n => Err(Error::Usage(format!("no preset for figure {n} (expected 1, 2 or 3)"))),
    }
}
