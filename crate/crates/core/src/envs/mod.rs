//! Classic-control tasks with deterministic dynamics and seeded resets.
//!
//! The only randomness is the initial state, drawn from the caller's [`Rng`].
//! Stepping is a pure function of `(state, action)`.

pub mod acrobot;
pub mod cartpole;
pub mod mountain_car;
pub mod trace;

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MAX_OBS_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    MountainCar,
    CartPole,
    Acrobot,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::MountainCar, EnvId::CartPole, EnvId::Acrobot];

    pub fn obs_dim(self) -> usize {
        match self {
            EnvId::MountainCar => 2,
            EnvId::CartPole => 4,
            EnvId::Acrobot => 6,
        }
    }

    /// Length of the physical state vector (differs from `obs_dim` for Acrobot).
    pub fn physics_dim(self) -> usize {
        match self {
            EnvId::MountainCar => 2,
            EnvId::CartPole | EnvId::Acrobot => 4,
        }
    }

    pub fn num_actions(self) -> usize {
        match self {
            EnvId::MountainCar => 3,
            EnvId::CartPole => 2,
            EnvId::Acrobot => 3,
        }
    }

    pub fn step_limit(self) -> u32 {
        match self {
            EnvId::MountainCar => 200,
            EnvId::CartPole => 200,
            EnvId::Acrobot => 500,
        }
    }

    /// Reward paid on every step.
    pub fn step_reward(self) -> f64 {
        match self {
            EnvId::CartPole => 1.0,
            EnvId::MountainCar | EnvId::Acrobot => -1.0,
        }
    }

    /// Inclusive bounds of an undiscounted episode return.
    pub fn return_bounds(self) -> (f64, f64) {
        let limit = self.step_limit() as f64;
        match self {
            EnvId::CartPole => (1.0, limit),
            _ => (-limit, -1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvId::MountainCar => "mountaincar",
            EnvId::CartPole => "cartpole",
            EnvId::Acrobot => "acrobot",
        }
    }

    /// Fresh episode with a seeded initial state.
    ///
    /// MountainCar: position ~ U[-0.6, -0.4), velocity 0. CartPole: each
    /// component ~ U[-0.05, 0.05). Acrobot: each of the two angles and two
    /// angular velocities ~ U[-0.1, 0.1).
    pub fn reset(self, rng: &mut Rng) -> EnvState {
        let mut physics = [0.0; 4];
        match self {
            EnvId::MountainCar => {
                physics[0] = rng.uniform_range(mountain_car::RESET_LOW, mountain_car::RESET_HIGH);
            }
            EnvId::CartPole => {
                let b = cartpole::RESET_BOUND;
                physics.iter_mut().for_each(|x| *x = rng.uniform_range(-b, b));
            }
            EnvId::Acrobot => {
                let b = acrobot::RESET_BOUND;
                physics.iter_mut().for_each(|x| *x = rng.uniform_range(-b, b));
            }
        }
        EnvState::from_physics(self, physics)
    }

    /// Success predicate behind the goal-termination of the task. CartPole has
    /// no goal state, so its predicate is always false.
    pub fn goal_region(self) -> fn(&[f64]) -> bool {
        match self {
            EnvId::MountainCar => |obs| obs[0] >= mountain_car::GOAL_POSITION,
            EnvId::CartPole => |_| false,
            EnvId::Acrobot => |obs| {
                // cos(t1 + t2) = cos t1 cos t2 - sin t1 sin t2
                let cos12 = obs[0] * obs[2] - obs[1] * obs[3];
                -obs[0] - cos12 > 1.0
            },
        }
    }

    pub fn in_goal(self, obs: &[f64]) -> bool {
        (self.goal_region())(obs)
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mountaincar" | "mountaincar-v0" | "mountain-car" => Ok(EnvId::MountainCar),
            "cartpole" | "cartpole-v0" => Ok(EnvId::CartPole),
            "acrobot" | "acrobot-v1" | "acrobat" | "acrobat-v1" => Ok(EnvId::Acrobot),
            other => Err(Error::Usage(format!("unknown environment '{other}'"))),
        }
    }
}

/// Fixed-capacity observation vector; derefs to a slice of length `dim`.
#[derive(Clone, Copy, PartialEq)]
pub struct Obs {
    values: [f64; MAX_OBS_DIM],
    dim: u8,
}

impl Obs {
    pub fn from_slice(values: &[f64]) -> Self {
        assert!(values.len() <= MAX_OBS_DIM, "observation too long");
        let mut buf = [0.0; MAX_OBS_DIM];
        buf[..values.len()].copy_from_slice(values);
        Obs {
            values: buf,
            dim: values.len() as u8,
        }
    }
}

impl Deref for Obs {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values[..self.dim as usize]
    }
}

impl fmt::Debug for Obs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

/// Physical state of one episode in progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub env: EnvId,
    /// MountainCar `(p, v, 0, 0)`; CartPole `(x, x_dot, theta, theta_dot)`;
    /// Acrobot `(theta1, theta2, dtheta1, dtheta2)`.
    pub physics: [f64; 4],
    pub steps_in_episode: u32,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next: EnvState,
    pub next_obs: Obs,
    pub reward: f64,
    pub done: bool,
    /// The episode ended because the step limit ran out, not at a goal or failure.
    pub terminal_is_timeout: bool,
}

impl EnvState {
    pub fn from_physics(env: EnvId, physics: [f64; 4]) -> Self {
        EnvState {
            env,
            physics,
            steps_in_episode: 0,
            done: false,
        }
    }

    /// MountainCar state at `(position, velocity)`.
    pub fn mountain_car(position: f64, velocity: f64) -> Self {
        EnvState::from_physics(EnvId::MountainCar, [position, velocity, 0.0, 0.0])
    }

    pub fn obs(&self) -> Obs {
        let s = &self.physics;
        match self.env {
            EnvId::MountainCar => Obs::from_slice(&s[..2]),
            EnvId::CartPole => Obs::from_slice(s),
            EnvId::Acrobot => Obs::from_slice(&[
                s[0].cos(),
                s[0].sin(),
                s[1].cos(),
                s[1].sin(),
                s[2],
                s[3],
            ]),
        }
    }

    pub fn step(&self, action: usize) -> Result<StepResult> {
        let env = self.env;
        if action >= env.num_actions() {
            return Err(Error::Usage(format!(
                "action {action} out of range for {env} ({} actions)",
                env.num_actions()
            )));
        }
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        let (physics, terminated) = match env {
            EnvId::MountainCar => {
                let (p, v, goal) = mountain_car::advance(self.physics[0], self.physics[1], action);
                ([p, v, 0.0, 0.0], goal)
            }
            EnvId::CartPole => cartpole::advance(self.physics, action),
            EnvId::Acrobot => acrobot::advance(self.physics, action),
        };
        let steps = self.steps_in_episode + 1;
        let timeout = !terminated && steps >= env.step_limit();
        let done = terminated || timeout;
        let next = EnvState {
            env,
            physics,
            steps_in_episode: steps,
            done,
        };
        Ok(StepResult {
            next,
            next_obs: next.obs(),
            reward: env.step_reward(),
            done,
            terminal_is_timeout: timeout,
        })
    }
}

/// `sum_t gamma^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn dims_and_actions() {
        assert_eq!(
            EnvId::ALL.map(|e| (e.obs_dim(), e.num_actions())),
            [(2, 3), (4, 2), (6, 3)]
        );
    }

    #[test]
    fn mountain_car_reset_range() {
        let mut rng = Rng::new(17);
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let s = EnvId::MountainCar.reset(&mut rng);
            assert_eq!(s.physics[1], 0.0);
            assert!((-0.6..=-0.4).contains(&s.physics[0]));
            assert_eq!(s.steps_in_episode, 0);
            assert!(!s.done);
            sum += s.physics[0];
        }
        assert!((sum / 10_000.0 + 0.5).abs() < 0.005);
    }

    #[test]
    fn cartpole_and_acrobot_reset_ranges() {
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            let c = EnvId::CartPole.reset(&mut rng);
            assert!(c.obs().iter().all(|x| x.abs() <= 0.1));
            let a = EnvId::Acrobot.reset(&mut rng);
            assert!(a.physics.iter().all(|x| x.abs() <= 0.1));
            assert!(a.obs()[..4].iter().all(|x| x.abs() <= 1.0));
        }
    }

    #[test]
    fn resets_with_equal_seeds_are_identical() {
        for env in EnvId::ALL {
            let a = env.reset(&mut Rng::new(42));
            let b = env.reset(&mut Rng::new(42));
            assert_eq!(a.physics.map(f64::to_bits), b.physics.map(f64::to_bits));
        }
    }

    #[test]
    fn step_rejects_bad_action_and_finished_episode() {
        let s = EnvId::CartPole.reset(&mut Rng::new(1));
        assert!(matches!(s.step(2), Err(Error::Usage(_))));
        let mut done = s;
        done.done = true;
        assert!(matches!(done.step(0), Err(Error::Usage(_))));
    }

    #[test]
    fn mountain_car_times_out_at_200() {
        let mut s = EnvState::mountain_car(-0.5, 0.0);
        for i in 1..=200 {
            let r = s.step(1).unwrap();
            assert_eq!(r.reward, -1.0);
            assert_eq!(r.done, i == 200);
            assert_eq!(r.terminal_is_timeout, i == 200);
            s = r.next;
        }
        assert!(s.step(1).is_err());
    }

    #[test]
    fn mountain_car_goal_is_not_a_timeout() {
        let s = EnvState::mountain_car(0.49, 0.07);
        let r = s.step(2).unwrap();
        assert!(r.done);
        assert!(!r.terminal_is_timeout);
        assert!(EnvId::MountainCar.in_goal(&r.next_obs));
    }

    #[test]
    fn goal_predicates() {
        assert!(EnvId::MountainCar.in_goal(&[0.5, 0.0]));
        assert!(!EnvId::MountainCar.in_goal(&[0.49, 0.07]));
        assert!(!EnvId::CartPole.in_goal(&[0.0, 0.0, 0.0, 0.0]));
        assert!(!EnvId::CartPole.in_goal(&[100.0, 0.0, 3.0, 0.0]));
        let up = EnvState::from_physics(EnvId::Acrobot, [std::f64::consts::PI, 0.0, 0.0, 0.0]);
        assert!(EnvId::Acrobot.in_goal(&up.obs()));
        let down = EnvState::from_physics(EnvId::Acrobot, [0.0; 4]);
        assert!(!EnvId::Acrobot.in_goal(&down.obs()));
    }

    #[test]
    fn discounted_return_examples() {
        assert!((discounted_return(&[-1.0, -1.0, -1.0], 0.99) + 2.9701).abs() < 1e-12);
        assert_eq!(discounted_return(&[], 0.99), 0.0);
        assert_eq!(discounted_return(&[5.0, 100.0], 0.0), 5.0);
    }

    #[test]
    fn env_names_parse() {
        for env in EnvId::ALL {
            assert_eq!(env.name().parse::<EnvId>().unwrap(), env);
        }
        assert_eq!("acrobat-v1".parse::<EnvId>().unwrap(), EnvId::Acrobot);
        assert!("pendulum".parse::<EnvId>().is_err());
    }

    fn env_strategy() -> impl Strategy<Value = EnvId> {
        prop_oneof![Just(EnvId::MountainCar), Just(EnvId::CartPole), Just(EnvId::Acrobot)]
    }

    proptest! {
        #[test]
        fn episodes_respect_bounds_rewards_and_limits(
            env in env_strategy(),
            seed in any::<u64>(),
            actions in prop::collection::vec(0usize..3, 1..700),
        ) {
            let mut rng = Rng::new(seed);
            let mut s = env.reset(&mut rng);
            for a in actions {
                let r = s.step(a % env.num_actions()).unwrap();
                prop_assert_eq!(r.reward, env.step_reward());
                prop_assert!(r.next.steps_in_episode <= env.step_limit());
                let o = &r.next_obs;
                match env {
                    EnvId::MountainCar => {
                        prop_assert!((-1.2..=0.6).contains(&o[0]));
                        prop_assert!(o[1].abs() <= 0.07);
                    }
                    EnvId::Acrobot => {
                        prop_assert!(o[..4].iter().all(|x| x.abs() <= 1.0));
                        prop_assert!(o[4].abs() <= acrobot::MAX_VEL_1);
                        prop_assert!(o[5].abs() <= acrobot::MAX_VEL_2);
                    }
                    EnvId::CartPole => {
                        if r.done && !r.terminal_is_timeout {
                            prop_assert!(o[0].abs() > 2.4 || o[2].abs() > cartpole::theta_threshold());
                        }
                    }
                }
                if r.done {
                    prop_assert!(r.next.step(0).is_err());
                    s = env.reset(&mut rng);
                } else {
                    s = r.next;
                }
            }
        }

        #[test]
        fn step_is_pure(env in env_strategy(), seed in any::<u64>(), a in 0usize..3) {
            let s = env.reset(&mut Rng::new(seed));
            let a = a % env.num_actions();
            let x = s.step(a).unwrap();
            let y = s.step(a).unwrap();
            prop_assert_eq!(x.next.physics.map(f64::to_bits), y.next.physics.map(f64::to_bits));
        }
    }
}
