use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::agent::Agent;
use crate::envs::trace::TraceRecord;
use crate::envs::EnvState;
use crate::error::{Error, Result};
use crate::experiment::config::TrainConfig;
use crate::nn::{AdamConfig, MlpParams};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{Rng, Stream};

pub const VERSION_STAMP: &str = concat!("dqnlab ", env!("CARGO_PKG_VERSION"));

/// One finished episode. Steps are 1-based global environment steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub start_step: u64,
    pub length: u64,
    pub ret: f64,
}

impl EpisodeRecord {
    pub fn end_step(&self) -> u64 {
        self.start_step + self.length - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: TrainConfig,
    pub episodes: Vec<EpisodeRecord>,
    /// Every environment step of the run, in order.
    pub trace: Vec<TraceRecord>,
    /// Online-network parameters right after the listed step.
    pub snapshots: BTreeMap<u64, MlpParams>,
    pub version: String,
}

impl RunLog {
    pub fn empty(config: TrainConfig) -> Self {
        RunLog {
            config,
            episodes: Vec::new(),
            trace: Vec::new(),
            snapshots: BTreeMap::new(),
            version: VERSION_STAMP.to_string(),
        }
    }

    /// Return of the latest episode that ended at or before `step`.
    pub fn latest_return_at(&self, step: u64) -> Option<f64> {
        let idx = self.episodes.partition_point(|e| e.end_step() <= step);
        idx.checked_sub(1).map(|i| self.episodes[i].ret)
    }

    /// Returns of the episodes ending in `(from, to]`.
    pub fn returns_ending_in(&self, from: u64, to: u64) -> Vec<f64> {
        self.episodes
            .iter()
            .filter(|e| e.end_step() > from && e.end_step() <= to)
            .map(|e| e.ret)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    pub loss: Option<f64>,
    pub finished_episode: Option<EpisodeRecord>,
}

/// Training loop that can be advanced one environment step at a time.
///
/// Each step: pick an action (epsilon from the schedule at the number of
/// steps already taken), step the environment, store the transition, train
/// on one sampled minibatch once the buffer holds `learn_start` transitions,
/// then copy the target network on sync boundaries.
pub struct Trainer {
    config: TrainConfig,
    agent: Agent,
    buffer: ReplayBuffer,
    env_rng: Rng,
    action_rng: Rng,
    replay_rng: Rng,
    state: EnvState,
    episode_start: u64,
    episode_return: f64,
    log: RunLog,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut init_rng = Rng::for_stream(config.seed, Stream::Init);
        let mut env_rng = Rng::for_stream(config.seed, Stream::Env);
        let params = MlpParams::glorot(&config.architecture, &mut init_rng)?;
        let agent = Agent::new(
            params,
            AdamConfig::with_alpha(config.alpha),
            config.gamma,
            config.target_sync_period,
        )?;
        let state = config.env.reset(&mut env_rng);
        Ok(Trainer {
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            action_rng: Rng::for_stream(config.seed, Stream::Action),
            replay_rng: Rng::for_stream(config.seed, Stream::Replay),
            env_rng,
            agent,
            state,
            episode_start: 1,
            episode_return: 0.0,
            log: RunLog::empty(config.clone()),
            config,
        })
    }

    pub fn steps_done(&self) -> u64 {
        self.agent.env_steps
    }

    pub fn is_finished(&self) -> bool {
        self.agent.env_steps >= self.config.total_env_steps
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn into_log(self) -> RunLog {
        self.log
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let step = self.agent.env_steps + 1;
        self.step_inner(step)
            .map_err(|e| Error::Training(format!("seed {} step {step}: {e}", self.config.seed)))
    }

    fn step_inner(&mut self, step: u64) -> Result<StepOutcome> {
        let obs = self.state.obs();
        let epsilon = self.config.schedule.epsilon_at(step - 1);
        let action = self.agent.select_action(&obs, epsilon, &mut self.action_rng)?;
        let result = self.state.step(action)?;

        let terminal = result.done && !(result.terminal_is_timeout && self.config.timeout_bootstrap);
        self.buffer.push(Transition {
            s: obs,
            a: action,
            r: result.reward,
            s_next: result.next_obs,
            done: terminal,
        });
        self.log.trace.push(TraceRecord {
            step,
            obs,
            action,
            reward: result.reward,
            next_obs: result.next_obs,
            done: result.done,
            timeout: result.terminal_is_timeout,
        });
        self.episode_return += result.reward;
        self.agent.env_steps = step;

        let loss = if self.buffer.len() >= self.config.learn_start {
            let batch = self.buffer.sample(self.config.batch_size, &mut self.replay_rng)?;
            Some(self.agent.train_step(&batch)?)
        } else {
            None
        };
        self.agent.maybe_sync_target();
        if self.config.snapshot_steps.contains(&step) {
            self.log.snapshots.insert(step, self.agent.online.clone());
        }

        let finished_episode = if result.done {
            let record = EpisodeRecord {
                start_step: self.episode_start,
                length: step - self.episode_start + 1,
                ret: self.episode_return,
            };
            self.log.episodes.push(record);
            self.state = self.config.env.reset(&mut self.env_rng);
            self.episode_start = step + 1;
            self.episode_return = 0.0;
            Some(record)
        } else {
            self.state = result.next;
            None
        };
        Ok(StepOutcome {
            step,
            loss,
            finished_episode,
        })
    }
}

/// Runs `config` to completion.
pub fn run_training(config: &TrainConfig) -> Result<RunLog> {
    let mut trainer = Trainer::new(config.clone())?;
    while !trainer.is_finished() {
        trainer.step()?;
    }
    Ok(trainer.into_log())
}

/// Runs every config on a pool of `parallelism` worker threads. Results come
/// back in input order; a failed run does not stop the others.
pub fn run_grid(configs: &[TrainConfig], parallelism: usize) -> Vec<Result<RunLog>> {
    run_pool(configs, parallelism, run_training)
}

/// Applies `job` to every item on `parallelism` scoped worker threads,
/// returning results in input order.
pub fn run_pool<T, R, F>(items: &[T], parallelism: usize, job: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let workers = parallelism.clamp(1, items.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = job(&items[i]);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every item ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::EpsilonSchedule;
    use crate::envs::EnvId;
    use crate::experiment::config::Architecture;

    fn small(env: EnvId, steps: u64, seed: u64) -> TrainConfig {
        let mut c = TrainConfig::defaults(env).with_architecture(Architecture::Relu1);
        c.total_env_steps = steps;
        c.batch_size = 32;
        c.learn_start = 32;
        c.seed = seed;
        c.snapshot_steps = vec![100, 250];
        c
    }

    #[test]
    fn zero_steps_gives_empty_log() {
        let mut c = TrainConfig::defaults(EnvId::MountainCar);
        c.total_env_steps = 0;
        let log = run_training(&c).unwrap();
        assert!(log.episodes.is_empty() && log.trace.is_empty() && log.snapshots.is_empty());
        assert_eq!(log.config, c);
        assert_eq!(log.version, VERSION_STAMP);
    }

    #[test]
    fn repeat_runs_are_identical() {
        let c = small(EnvId::CartPole, 600, 3);
        let a = run_training(&c).unwrap();
        let b = run_training(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.snapshots.keys().copied().collect::<Vec<_>>(), vec![100, 250]);
    }

    #[test]
    fn episodes_tile_the_trace() {
        let c = small(EnvId::CartPole, 800, 11);
        let log = run_training(&c).unwrap();
        assert_eq!(log.trace.len(), 800);
        let mut expected_start = 1;
        for e in &log.episodes {
            assert_eq!(e.start_step, expected_start);
            let rewards: f64 = log.trace[(e.start_step - 1) as usize..e.end_step() as usize]
                .iter()
                .map(|t| t.reward)
                .sum();
            assert_eq!(rewards, e.ret);
            assert!(log.trace[e.end_step() as usize - 1].done);
            let (lo, hi) = EnvId::CartPole.return_bounds();
            assert!((lo..=hi).contains(&e.ret));
            expected_start = e.end_step() + 1;
        }
    }

    #[test]
    fn mountain_car_first_episode_times_out() {
        let mut c = TrainConfig::defaults(EnvId::MountainCar);
        c.total_env_steps = 200;
        let log = run_training(&c).unwrap();
        assert_eq!(log.episodes.len(), 1);
        assert_eq!(log.episodes[0].ret, -200.0);
        assert!(log.trace[199].timeout);
    }

    #[test]
    fn decay_schedule_explores_early() {
        let mut c = small(EnvId::MountainCar, 400, 5);
        c.schedule = EpsilonSchedule::decay_to_zero(10_000);
        let log = run_training(&c).unwrap();
        let mut seen = [false; 3];
        for t in &log.trace {
            seen[t.action] = true;
        }
        assert_eq!(seen, [true; 3]);
    }

    #[test]
    fn grid_is_independent_of_parallelism() {
        let configs: Vec<_> = (0..3).map(|s| small(EnvId::Acrobot, 300, s)).collect();
        let serial: Vec<_> = run_grid(&configs, 1).into_iter().map(Result::unwrap).collect();
        let parallel: Vec<_> = run_grid(&configs, 8).into_iter().map(Result::unwrap).collect();
        assert_eq!(serial, parallel);
        assert_eq!(serial[2].config.seed, 2);
    }

    #[test]
    fn grid_reports_failures_per_run() {
        let good = small(EnvId::CartPole, 50, 0);
        let mut bad = good.clone();
        bad.batch_size = 0;
        let results = run_grid(&[bad, good], 2);
        assert!(results[0].is_err());
        assert!(results[1].is_ok());
    }

    #[test]
    fn latest_return_lookup() {
        let mut log = RunLog::empty(TrainConfig::defaults(EnvId::MountainCar));
        log.episodes = vec![
            EpisodeRecord { start_step: 1, length: 200, ret: -200.0 },
            EpisodeRecord { start_step: 201, length: 150, ret: -150.0 },
        ];
        assert_eq!(log.latest_return_at(199), None);
        assert_eq!(log.latest_return_at(200), Some(-200.0));
        assert_eq!(log.latest_return_at(349), Some(-200.0));
        assert_eq!(log.latest_return_at(350), Some(-150.0));
        assert_eq!(log.returns_ending_in(200, 400), vec![-150.0]);
    }
}
