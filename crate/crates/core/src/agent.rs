//! Double-DQN learner: behaviour policy, bootstrap targets, minibatch updates
//! and periodic hard target-network copies.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::envs::Obs;
use crate::error::{Error, Result};
use crate::nn::{self, adam_step, AdamConfig, AdamState, MlpParams};
use crate::replay::Transition;
use crate::rng::Rng;

const CHECKPOINT_MAGIC: &[u8; 8] = b"DQNCKPT1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSchedule {
    Constant { value: f64 },
    LinearDecay { start: f64, end: f64, decay_steps: u64 },
}

impl EpsilonSchedule {
    pub fn greedy() -> Self {
        EpsilonSchedule::Constant { value: 0.0 }
    }

    /// Linear decay from 1 to 0 over `decay_steps` environment steps.
    pub fn decay_to_zero(decay_steps: u64) -> Self {
        EpsilonSchedule::LinearDecay {
            start: 1.0,
            end: 0.0,
            decay_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        match *self {
            EpsilonSchedule::Constant { value } if unit(value) => Ok(()),
            EpsilonSchedule::LinearDecay {
                start,
                end,
                decay_steps,
            } if unit(start) && unit(end) && end <= start && decay_steps > 0 => Ok(()),
            _ => Err(Error::Config(format!("invalid epsilon schedule {self:?}"))),
        }
    }

    /// Exploration rate after `step` environment steps.
    pub fn epsilon_at(&self, step: u64) -> f64 {
        match *self {
            EpsilonSchedule::Constant { value } => value,
            EpsilonSchedule::LinearDecay {
                start,
                end,
                decay_steps,
            } => {
                let frac = step as f64 / decay_steps as f64;
                end.max(start + (end - start) * frac).clamp(0.0, 1.0)
            }
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    argmax_iter(values.iter().copied())
}

fn argmax_iter(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if i == 0 || v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

fn stack_rows<'a>(rows: impl ExactSizeIterator<Item = &'a Obs>, dim: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * dim);
    for r in rows {
        if r.len() != dim {
            return Err(Error::Shape(format!("observation has {} entries, expected {dim}", r.len())));
        }
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((n, dim), flat).map_err(|e| Error::Shape(e.to_string()))
}

/// Double-DQN regression targets: `r` for terminals, otherwise
/// `r + gamma * Q_target(s', argmax_a Q_online(s', a))`.
pub fn ddqn_targets(
    batch: &[Transition],
    online: &MlpParams,
    target: &MlpParams,
    gamma: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let next = stack_rows(batch.iter().map(|t| &t.s_next), online.input_dim())?;
    let q_online = online.predict_batch(next.view())?;
    let q_target = target.predict_batch(next.view())?;
    if q_online.iter().chain(q_target.iter()).any(|q| !q.is_finite()) {
        return Err(Error::Training("non-finite network output while building targets".into()));
    }
    let mut ys = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        let y = if t.done {
            t.r
        } else {
            let best = argmax_iter(q_online.row(i).iter().copied());
            t.r + gamma * q_target[[i, best]]
        };
        if !y.is_finite() {
            return Err(Error::Training(format!("non-finite bootstrap target for batch element {i}")));
        }
        ys.push(y);
    }
    Ok(ys)
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub online: MlpParams,
    pub target: MlpParams,
    pub opt: AdamState,
    pub adam: AdamConfig,
    pub gamma: f64,
    pub env_steps: u64,
    pub target_sync_period: u64,
}

impl Agent {
    /// Online network `params`, target initialised as an exact copy.
    pub fn new(params: MlpParams, adam: AdamConfig, gamma: f64, target_sync_period: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma {gamma} outside [0, 1]")));
        }
        if target_sync_period == 0 {
            return Err(Error::Config("target sync period must be positive".into()));
        }
        Ok(Agent {
            target: params.clone(),
            opt: AdamState::new(&params),
            online: params,
            adam,
            gamma,
            env_steps: 0,
            target_sync_period,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.online.output_dim()
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.online.predict(obs)
    }

    /// With probability `epsilon` a uniform action, otherwise the greedy one.
    /// No random numbers are consumed when `epsilon` is 0.
    pub fn select_action(&self, obs: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
        if epsilon > 0.0 && rng.uniform() < epsilon {
            return Ok(rng.below(self.num_actions()));
        }
        Ok(argmax(&self.q_values(obs)?))
    }

    /// One Adam step on the mean squared TD error of `batch`. Returns the
    /// loss before the update.
    pub fn train_step(&mut self, batch: &[Transition]) -> Result<f64> {
        let targets = ddqn_targets(batch, &self.online, &self.target, self.gamma)?;
        let states = stack_rows(batch.iter().map(|t| &t.s), self.online.input_dim())?;
        let (q, cache) = self.online.forward_batch(states.view())?;
        let n = batch.len() as f64;
        let mut out_grad = Array2::<f64>::zeros(q.dim());
        let mut loss = 0.0;
        for (i, (t, y)) in batch.iter().zip(&targets).enumerate() {
            if t.a >= q.ncols() {
                return Err(Error::Usage(format!("stored action {} out of range", t.a)));
            }
            let residual = q[[i, t.a]] - y;
            loss += residual * residual;
            out_grad[[i, t.a]] = 2.0 * residual / n;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss {loss}")));
        }
        let grad = self.online.backward_batch(&cache, out_grad.view())?;
        adam_step(&mut self.online, &grad, &mut self.opt, &self.adam)?;
        Ok(loss)
    }

    /// Copies the online network into the target when `env_steps` is a
    /// positive multiple of the sync period. Returns whether a copy happened.
    pub fn maybe_sync_target(&mut self) -> bool {
        if self.env_steps > 0 && self.env_steps.is_multiple_of(self.target_sync_period) {
            self.target.clone_from(&self.online);
            true
        } else {
            false
        }
    }

    /// Checkpoint layout (little-endian): magic `DQNCKPT1`, u64 env_steps,
    /// u64 target_sync_period, f64 gamma, f64 alpha, f64 beta1, f64 beta2,
    /// f64 eps, u64 adam step count, then four network snapshots: online,
    /// target, Adam first moments, Adam second moments.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&self.env_steps.to_le_bytes())?;
        w.write_all(&self.target_sync_period.to_le_bytes())?;
        for x in [self.gamma, self.adam.alpha, self.adam.beta1, self.adam.beta2, self.adam.eps] {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&self.opt.t.to_le_bytes())?;
        for p in [&self.online, &self.target, &self.opt.m, &self.opt.v] {
            p.write_snapshot(&mut w)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not an agent checkpoint".into()));
        }
        let env_steps = nn::read_u64(&mut r)?;
        let target_sync_period = nn::read_u64(&mut r)?;
        let gamma = nn::read_f64(&mut r)?;
        let adam = AdamConfig {
            alpha: nn::read_f64(&mut r)?,
            beta1: nn::read_f64(&mut r)?,
            beta2: nn::read_f64(&mut r)?,
            eps: nn::read_f64(&mut r)?,
        };
        let t = nn::read_u64(&mut r)?;
        let online = MlpParams::read_snapshot(&mut r)?;
        let target = MlpParams::read_snapshot(&mut r)?;
        let m = MlpParams::read_snapshot(&mut r)?;
        let v = MlpParams::read_snapshot(&mut r)?;
        if !(online.same_shape(&target) && online.same_shape(&m) && online.same_shape(&v)) {
            return Err(Error::Format("checkpoint networks disagree in shape".into()));
        }
        Ok(Agent {
            online,
            target,
            opt: AdamState { m, v, t },
            adam,
            gamma,
            env_steps,
            target_sync_period,
        })
    }
}
