//! Reference dynamics used to cross-check [`crate::envs`].
//!
//! This is a line-by-line transcription of the classic-control reference
//! sources (state held as a plain vector, generic RK4 over an augmented state
//! for Acrobot). It shares no code with the production environments, so the
//! conformance checks below compare two independent implementations.

use std::f64::consts::PI;
use std::io::Read;

use crate::envs::{EnvId, EnvState};
use crate::error::{Error, Result};
use crate::rng::Rng;

fn reference_mountain_car(state: &mut [f64], action: usize) -> bool {
    let force = 0.001;
    let gravity = 0.0025;
    let (min_position, max_position, max_speed, goal_position) = (-1.2, 0.6, 0.07, 0.5);
    let mut position = state[0];
    let mut velocity = state[1];
    velocity += (action as f64 - 1.0) * force + (3.0 * position).cos() * (-gravity);
    velocity = clip(velocity, -max_speed, max_speed);
    position += velocity;
    position = clip(position, min_position, max_position);
    if position == min_position && velocity < 0.0 {
        velocity = 0.0;
    }
    state[0] = position;
    state[1] = velocity;
    position >= goal_position && velocity >= 0.0
}

fn reference_cartpole(state: &mut [f64], action: usize) -> bool {
    let gravity = 9.8;
    let masscart = 1.0;
    let masspole = 0.1;
    let total_mass = masspole + masscart;
    let length = 0.5;
    let polemass_length = masspole * length;
    let force_mag = 10.0;
    let tau = 0.02;
    let theta_threshold_radians = 12.0 * 2.0 * PI / 360.0;
    let x_threshold = 2.4;

    let (x, x_dot, theta, theta_dot) = (state[0], state[1], state[2], state[3]);
    let force = if action == 1 { force_mag } else { -force_mag };
    let costheta = theta.cos();
    let sintheta = theta.sin();
    let temp = (force + polemass_length * theta_dot.powi(2) * sintheta) / total_mass;
    let thetaacc = (gravity * sintheta - costheta * temp)
        / (length * (4.0 / 3.0 - masspole * costheta.powi(2) / total_mass));
    let xacc = temp - polemass_length * thetaacc * costheta / total_mass;
    let x = x + tau * x_dot;
    let x_dot = x_dot + tau * xacc;
    let theta = theta + tau * theta_dot;
    let theta_dot = theta_dot + tau * thetaacc;
    state.copy_from_slice(&[x, x_dot, theta, theta_dot]);
    x < -x_threshold || x > x_threshold || theta < -theta_threshold_radians || theta > theta_threshold_radians
}

fn acrobot_dsdt(s_augmented: &[f64]) -> Vec<f64> {
    let m1: f64 = 1.0;
    let m2: f64 = 1.0;
    let l1: f64 = 1.0;
    let lc1: f64 = 0.5;
    let lc2: f64 = 0.5;
    let i1 = 1.0;
    let i2 = 1.0;
    let g = 9.8;
    let a = s_augmented[4];
    let theta1 = s_augmented[0];
    let theta2 = s_augmented[1];
    let dtheta1 = s_augmented[2];
    let dtheta2 = s_augmented[3];
    let d1 = m1 * lc1.powi(2) + m2 * (l1.powi(2) + lc2.powi(2) + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2.powi(2) + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2.powi(2) * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1.powi(2) * theta2.sin() - phi2)
        / (m2 * lc2.powi(2) + i2 - d2.powi(2) / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    vec![dtheta1, dtheta2, ddtheta1, ddtheta2, 0.0]
}

fn rk4(derivs: impl Fn(&[f64]) -> Vec<f64>, y0: &[f64], t: &[f64]) -> Vec<f64> {
    let mut y = y0.to_vec();
    for i in 0..t.len() - 1 {
        let dt = t[i + 1] - t[i];
        let dt2 = dt / 2.0;
        let shifted = |k: &[f64], h: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + h * b).collect() };
        let k1 = derivs(&y);
        let k2 = derivs(&shifted(&k1, dt2));
        let k3 = derivs(&shifted(&k2, dt2));
        let k4 = derivs(&shifted(&k3, dt));
        y = (0..y.len())
            .map(|j| y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect();
    }
    y
}

fn wrap(mut x: f64, m: f64, big_m: f64) -> f64 {
    let diff = big_m - m;
    while x > big_m {
        x -= diff;
    }
    while x < m {
        x += diff;
    }
    x
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

fn reference_acrobot(state: &mut [f64], action: usize) -> bool {
    let torque = [-1.0, 0.0, 1.0][action];
    let mut s_augmented = state.to_vec();
    s_augmented.push(torque);
    let ns = rk4(acrobot_dsdt, &s_augmented, &[0.0, 0.2]);
    state[0] = wrap(ns[0], -PI, PI);
    state[1] = wrap(ns[1], -PI, PI);
    state[2] = clip(ns[2], -4.0 * PI, 4.0 * PI);
    state[3] = clip(ns[3], -9.0 * PI, 9.0 * PI);
    -state[0].cos() - (state[1] + state[0]).cos() > 1.0
}

/// Steps the reference model in place; returns whether the task terminated
/// (goal or failure, not the step limit).
pub fn reference_step(env: EnvId, state: &mut [f64], action: usize) -> bool {
    match env {
        EnvId::MountainCar => reference_mountain_car(state, action),
        EnvId::CartPole => reference_cartpole(state, action),
        EnvId::Acrobot => reference_acrobot(state, action),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conformance {
    pub env: EnvId,
    pub steps: usize,
    pub episodes: usize,
    /// Largest per-component absolute deviation over all compared states.
    pub max_abs_error: f64,
    /// Steps where the two models disagreed on termination.
    pub termination_mismatches: usize,
}

impl Conformance {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_abs_error < tol && self.termination_mismatches == 0
    }
}

/// Drives the production environment and the reference model side by side for
/// `steps` steps of uniformly random actions. Both start every episode from the
/// same recorded reset state and otherwise evolve independently.
pub fn compare_random_rollout(env: EnvId, steps: usize, seed: u64) -> Result<Conformance> {
    let mut rng = Rng::new(seed);
    let mut report = Conformance {
        env,
        steps,
        episodes: 0,
        max_abs_error: 0.0,
        termination_mismatches: 0,
    };
    let dim = env.physics_dim();
    let mut ours = env.reset(&mut rng);
    let mut theirs = ours.physics[..dim].to_vec();
    let mut count = 0u32;
    report.episodes = 1;
    for _ in 0..steps {
        let action = rng.below(env.num_actions());
        let r = ours.step(action)?;
        let terminated = reference_step(env, &mut theirs, action);
        count += 1;
        for (a, b) in r.next.physics[..dim].iter().zip(&theirs) {
            report.max_abs_error = report.max_abs_error.max((a - b).abs());
        }
        if terminated != (r.done && !r.terminal_is_timeout) {
            report.termination_mismatches += 1;
        }
        if r.done || terminated || count == env.step_limit() {
            ours = env.reset(&mut rng);
            theirs = ours.physics[..dim].to_vec();
            count = 0;
            report.episodes += 1;
        } else {
            ours = r.next;
        }
    }
    Ok(report)
}

/// Replays a recorded reference trace (`step,reset,s*,action,n*,reward,terminated`,
/// as written by `tests/fixtures/gen_gym_traces.py`) through the production
/// environment, reloading the recorded state at each episode start.
pub fn compare_recorded_trace<R: Read>(env: EnvId, reader: R) -> Result<Conformance> {
    let dim = env.physics_dim();
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 * dim + 5 {
        return Err(Error::Format(format!("trace for {env} should have {} columns", 2 * dim + 5)));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("'{s}': {e}")));
    let mut report = Conformance {
        env,
        steps: 0,
        episodes: 0,
        max_abs_error: 0.0,
        termination_mismatches: 0,
    };
    let mut current: Option<EnvState> = None;
    for row in rdr.records() {
        let row = row?;
        if &row[1] == "1" || current.is_none() {
            let mut physics = [0.0; 4];
            for i in 0..dim {
                physics[i] = num(&row[2 + i])?;
            }
            current = Some(EnvState::from_physics(env, physics));
            report.episodes += 1;
        }
        let state = current.expect("set above");
        let action = row[2 + dim].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?;
        let r = state.step(action)?;
        for i in 0..dim {
            let expected = num(&row[3 + dim + i])?;
            report.max_abs_error = report.max_abs_error.max((r.next.physics[i] - expected).abs());
        }
        let terminated = &row[4 + 2 * dim] == "1";
        if terminated != (r.done && !r.terminal_is_timeout) {
            report.termination_mismatches += 1;
        }
        report.steps += 1;
        current = if r.done { None } else { Some(r.next) };
    }
    Ok(report)
}
