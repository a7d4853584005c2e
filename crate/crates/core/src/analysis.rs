//! MountainCar phase-space diagnostics: visit histograms over transition
//! windows, one-step vector fields under a fixed controller, and rollouts
//! from random initial states.

use std::io::Write;

use crate::agent::argmax;
use crate::envs::mountain_car::{self, MAX_POSITION, MAX_SPEED, MIN_POSITION, NO_PUSH};
use crate::envs::trace::TraceRecord;
use crate::envs::{EnvId, EnvState};
use crate::error::{Error, Result};
use crate::experiment::RunLog;
use crate::nn::MlpParams;
use crate::rng::Rng;

pub const POSITION_RANGE: (f64, f64) = (MIN_POSITION, MAX_POSITION);
pub const VELOCITY_RANGE: (f64, f64) = (-MAX_SPEED, MAX_SPEED);
pub const DEFAULT_BINS: (usize, usize) = (100, 100);
pub const DEFAULT_FIELD_GRID: (usize, usize) = (40, 40);
/// Counts at or above this render as white.
pub const RENDER_CEILING: u64 = 100;
pub const PGM_MAXVAL: u64 = 255;

/// The `n` trace records with steps in `(checkpoint - n, checkpoint]`.
pub fn transition_window(log: &RunLog, checkpoint: u64, n: u64) -> Result<Vec<TraceRecord>> {
    if n == 0 {
        return Err(Error::Analysis("window length must be positive".into()));
    }
    let first = checkpoint.checked_sub(n).map(|s| s + 1).ok_or_else(|| {
        Error::Analysis(format!(
            "window of {n} transitions before step {checkpoint} starts before step 1"
        ))
    })?;
    let start = log.trace.partition_point(|t| t.step < first);
    let window = log.trace.get(start..start + n as usize).unwrap_or(&[]);
    let contiguous = window.len() == n as usize
        && window.iter().zip(first..).all(|(t, s)| t.step == s);
    if !contiguous {
        let have = match (log.trace.first(), log.trace.last()) {
            (Some(a), Some(b)) => format!("{}..={}", a.step, b.step),
            _ => "nothing".into(),
        };
        return Err(Error::Analysis(format!(
            "trace is missing steps in {first}..={checkpoint} (it holds {have})"
        )));
    }
    Ok(window.to_vec())
}

/// Earliest step whose resulting observation lies in the goal region.
pub fn first_goal_step(log: &RunLog) -> Option<u64> {
    let env = log.config.env;
    log.trace.iter().find(|t| env.in_goal(&t.next_obs)).map(|t| t.step)
}

/// Visit counts over the MountainCar state box. `counts[row][col]` has
/// velocity bin `row` (lowest velocity first) and position bin `col`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHistogram {
    pub counts: Vec<Vec<u64>>,
    pub position_range: (f64, f64),
    pub velocity_range: (f64, f64),
    pub ceiling: u64,
}

fn bin(x: f64, (lo, hi): (f64, f64), n: usize) -> Option<usize> {
    if !(lo..=hi).contains(&x) {
        return None;
    }
    Some((((x - lo) / (hi - lo) * n as f64) as usize).min(n - 1))
}

impl PhaseHistogram {
    pub fn new((rows, cols): (usize, usize)) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Analysis(format!("histogram needs positive bins, got {rows}x{cols}")));
        }
        Ok(PhaseHistogram {
            counts: vec![vec![0; cols]; rows],
            position_range: POSITION_RANGE,
            velocity_range: VELOCITY_RANGE,
            ceiling: RENDER_CEILING,
        })
    }

    pub fn rows(&self) -> usize {
        self.counts.len()
    }

    pub fn cols(&self) -> usize {
        self.counts[0].len()
    }

    pub fn add(&mut self, position: f64, velocity: f64) -> Result<()> {
        let col = bin(position, self.position_range, self.cols());
        let row = bin(velocity, self.velocity_range, self.rows());
        match (row, col) {
            (Some(r), Some(c)) => {
                self.counts[r][c] += 1;
                Ok(())
            }
            _ => Err(Error::Analysis(format!(
                "state ({position}, {velocity}) lies outside the MountainCar state box"
            ))),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn gray_level(&self, count: u64) -> u64 {
        let c = count.min(self.ceiling) as f64;
        (PGM_MAXVAL as f64 * c / self.ceiling as f64).round() as u64
    }

    /// Plain (P2) graymap, highest velocity on the top line and position
    /// increasing to the right.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "P2")?;
        writeln!(w, "{} {}", self.cols(), self.rows())?;
        writeln!(w, "{PGM_MAXVAL}")?;
        for row in self.counts.iter().rev() {
            let line: Vec<String> = row.iter().map(|&c| self.gray_level(c).to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Raw counts, one line per velocity bin starting from the lowest
    /// velocity, no header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in &self.counts {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Bins the pre-step observation of every MountainCar record.
pub fn phase_histogram(trace: &[TraceRecord], bins: (usize, usize)) -> Result<PhaseHistogram> {
    let mut h = PhaseHistogram::new(bins)?;
    for t in trace {
        if t.obs.len() != 2 {
            return Err(Error::Analysis(format!(
                "step {} is not a MountainCar observation",
                t.step
            )));
        }
        h.add(t.obs[0], t.obs[1])?;
    }
    Ok(h)
}

/// Controller applied at every state of a field or rollout.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Argmax of the network's Q-values, lowest index on ties.
    Greedy(&'a MlpParams),
    /// Always the zero-force action.
    Uncontrolled,
}

impl Policy<'_> {
    pub fn action(&self, obs: &[f64]) -> Result<usize> {
        match self {
            Policy::Greedy(net) => Ok(argmax(&net.predict(obs)?)),
            Policy::Uncontrolled => Ok(NO_PUSH),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Policy::Greedy(_) => "greedy",
            Policy::Uncontrolled => "uncontrolled",
        }
    }

    fn check(&self) -> Result<()> {
        if let Policy::Greedy(net) = self {
            if net.input_dim() != 2 || net.output_dim() != 3 {
                return Err(Error::Analysis(format!(
                    "network maps {} -> {}, MountainCar needs 2 -> 3",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub position: f64,
    pub velocity: f64,
    pub action: usize,
    pub dp: f64,
    pub dv: f64,
}

fn linspace((lo, hi): (f64, f64), n: usize, i: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// State change over one step from `(position, velocity)` under `policy`.
pub fn field_point(policy: Policy<'_>, position: f64, velocity: f64) -> Result<FieldPoint> {
    let action = policy.action(&[position, velocity])?;
    let (p, v, _) = mountain_car::advance(position, velocity, action);
    Ok(FieldPoint {
        position,
        velocity,
        action,
        dp: p - position,
        dv: v - velocity,
    })
}

/// One-step state change at each point of an evenly spaced grid over the
/// state box, endpoints included. Points are ordered velocity-major.
pub fn vector_field(policy: Policy<'_>, (rows, cols): (usize, usize)) -> Result<Vec<FieldPoint>> {
    if rows < 2 || cols < 2 {
        return Err(Error::Analysis(format!("vector field grid must be at least 2x2, got {rows}x{cols}")));
    }
    policy.check()?;
    let mut points = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let velocity = linspace(VELOCITY_RANGE, rows, r);
        for c in 0..cols {
            points.push(field_point(policy, linspace(POSITION_RANGE, cols, c), velocity)?);
        }
    }
    Ok(points)
}

pub fn write_field_csv<W: Write>(w: W, field: &[FieldPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["p", "v", "dp", "dv"])?;
    for f in field {
        out.write_record([f.position, f.velocity, f.dp, f.dv].map(|x| x.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(position, velocity)` from the initial state onwards.
    pub states: Vec<(f64, f64)>,
    pub reached_goal: bool,
}

/// `n` MountainCar episodes from fresh resets drawn from `rng`, each
/// following `policy` for at most `max_steps` steps.
pub fn rollout_random_inits(
    policy: Policy<'_>,
    n: usize,
    max_steps: usize,
    rng: &mut Rng,
) -> Result<Vec<Trajectory>> {
    policy.check()?;
    let env = EnvId::MountainCar;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut state: EnvState = env.reset(rng);
        let mut states = vec![(state.physics[0], state.physics[1])];
        let mut reached_goal = false;
        while states.len() <= max_steps && !state.done {
            let step = state.step(policy.action(&state.obs())?)?;
            state = step.next;
            states.push((state.physics[0], state.physics[1]));
            reached_goal |= env.in_goal(&step.next_obs);
        }
        out.push(Trajectory { states, reached_goal });
    }
    Ok(out)
}

pub fn write_trajectories_csv<W: Write>(w: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["traj_id", "t", "p", "v"])?;
    for (id, traj) in trajectories.iter().enumerate() {
        for (t, (p, v)) in traj.states.iter().enumerate() {
            out.write_record([id.to_string(), t.to_string(), p.to_string(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Obs;
    use crate::experiment::TrainConfig;
    use crate::nn::{q_network_spec, Activation};
    use crate::rng::Rng;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn record(step: u64, p: f64, v: f64) -> TraceRecord {
        TraceRecord {
            step,
            obs: Obs::from_slice(&[p, v]),
            action: 1,
            reward: -1.0,
            next_obs: Obs::from_slice(&[p, v]),
            done: false,
            timeout: false,
        }
    }

    fn log_with_steps(steps: std::ops::RangeInclusive<u64>) -> RunLog {
        let mut log = RunLog::empty(TrainConfig::defaults(EnvId::MountainCar));
        log.trace = steps.map(|s| record(s, -0.5, 0.0)).collect();
        log
    }

    #[test]
    fn window_before_checkpoint() {
        let log = log_with_steps(1..=12_000);
        let w = transition_window(&log, 10_000, 1000).unwrap();
        assert_eq!(w.len(), 1000);
        assert_eq!((w[0].step, w[999].step), (9001, 10_000));
        let one = transition_window(&log, 10_000, 1).unwrap();
        assert_eq!(one.iter().map(|t| t.step).collect::<Vec<_>>(), vec![10_000]);
        // A window may start at step 1.
        assert_eq!(transition_window(&log, 1000, 1000).unwrap()[0].step, 1);
    }

    #[test]
    fn window_errors_name_the_range() {
        let log = log_with_steps(1..=12_000);
        let err = transition_window(&log, 500, 1000).unwrap_err().to_string();
        assert!(err.contains("before step 500"), "{err}");
        let err = transition_window(&log, 13_000, 1000).unwrap_err().to_string();
        assert!(err.contains("12001..=13000"), "{err}");
        let partial = log_with_steps(5_000..=12_000);
        assert!(transition_window(&partial, 5_500, 1000).is_err());
    }

    #[test]
    fn no_goal_means_none() {
        let log = log_with_steps(1..=300);
        assert_eq!(first_goal_step(&log), None);
    }

    #[test]
    fn first_goal_is_earliest() {
        let mut log = log_with_steps(1..=40_000);
        for s in [37_412, 39_000] {
            log.trace[s as usize - 1].next_obs = Obs::from_slice(&[0.5, 0.01]);
        }
        assert_eq!(first_goal_step(&log), Some(37_412));
    }

    #[test]
    fn empty_histogram() {
        let h = phase_histogram(&[], DEFAULT_BINS).unwrap();
        assert_eq!(h.total(), 0);
        assert_eq!((h.rows(), h.cols()), (100, 100));
    }

    #[test]
    fn repeated_state_saturates() {
        let trace: Vec<_> = (1..=150).map(|s| record(s, -0.5, 0.0)).collect();
        let h = phase_histogram(&trace, DEFAULT_BINS).unwrap();
        let nonzero: Vec<_> = h.counts.iter().flatten().filter(|&&c| c > 0).collect();
        assert_eq!(nonzero, vec![&150]);
        assert_eq!(h.gray_level(150), 255);
        assert_eq!(h.gray_level(100), 255);
        assert_eq!(h.gray_level(50), 128);
        assert_eq!(h.gray_level(0), 0);
        // Position -0.5 is 0.7 / 1.8 of the way along 100 bins, velocity 0 is the middle.
        assert_eq!(h.counts[50][38], 150);
    }

    #[test]
    fn box_edges_fall_in_edge_bins() {
        let trace = [record(1, -1.2, -0.07), record(2, 0.6, 0.07)];
        let h = phase_histogram(&trace, (10, 10)).unwrap();
        assert_eq!(h.counts[0][0], 1);
        assert_eq!(h.counts[9][9], 1);
    }

    #[test]
    fn out_of_box_is_an_error() {
        assert!(phase_histogram(&[record(1, 0.7, 0.0)], DEFAULT_BINS).is_err());
        assert!(phase_histogram(&[record(1, 0.0, -0.08)], DEFAULT_BINS).is_err());
    }

    #[test]
    fn pgm_layout() {
        let trace = [record(1, 0.6, 0.07), record(2, 0.6, 0.07)];
        let h = phase_histogram(&trace, (2, 3)).unwrap();
        let mut buf = Vec::new();
        h.write_pgm(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "P2\n3 2\n255\n0 0 5\n0 0 0\n");
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,0,0\n0,0,2\n");
    }

    #[test]
    fn uncontrolled_valley_bottom_is_still() {
        let f = field_point(Policy::Uncontrolled, -PI / 6.0, 0.0).unwrap();
        assert_eq!(f.action, NO_PUSH);
        assert!(f.dp.abs() < 1e-15 && f.dv.abs() < 1e-15, "{f:?}");
    }

    #[test]
    fn uncontrolled_drift_from_origin() {
        // Gymnasium MountainCar-v0 from (0, 0.05) under action 1 lands on
        // (0.0475, 0.0475).
        let f = field_point(Policy::Uncontrolled, 0.0, 0.05).unwrap();
        assert!(f.dp > 0.0);
        assert!((f.dp - 0.0475).abs() < 1e-15);
        assert!((f.dv - -0.0025).abs() < 1e-15);
    }

    #[test]
    fn field_grid_covers_the_box() {
        let field = vector_field(Policy::Uncontrolled, DEFAULT_FIELD_GRID).unwrap();
        assert_eq!(field.len(), 1600);
        assert_eq!((field[0].position, field[0].velocity), (-1.2, -0.07));
        let last = field[1599];
        assert_eq!((last.position, last.velocity), (0.6, 0.07));
        assert!(vector_field(Policy::Uncontrolled, (1, 5)).is_err());
    }

    #[test]
    fn constant_network_pushes_left() {
        let specs = q_network_spec(2, 3, 2, 8, Activation::Relu);
        let mut net = MlpParams::zeros(&specs).unwrap();
        net.shift_output_bias(1.5);
        let field = vector_field(Policy::Greedy(&net), (5, 5)).unwrap();
        assert!(field.iter().all(|f| f.action == 0));
        for f in &field {
            let (p, v, _) = mountain_car::advance(f.position, f.velocity, 0);
            assert_eq!((f.dp, f.dv), (p - f.position, v - f.velocity));
        }
    }

    #[test]
    fn field_never_leaves_the_box() {
        let net = MlpParams::glorot(&q_network_spec(2, 3, 2, 128, Activation::Relu), &mut Rng::new(3)).unwrap();
        for policy in [Policy::Uncontrolled, Policy::Greedy(&net)] {
            for f in vector_field(policy, (21, 21)).unwrap() {
                let p = f.position + f.dp;
                let v = f.velocity + f.dv;
                assert!((MIN_POSITION..=MAX_POSITION).contains(&p));
                assert!((-MAX_SPEED..=MAX_SPEED).contains(&v));
            }
        }
    }

    #[test]
    fn zero_step_rollouts() {
        let trajs = rollout_random_inits(Policy::Uncontrolled, 4, 0, &mut Rng::new(1)).unwrap();
        assert_eq!(trajs.len(), 4);
        for t in &trajs {
            assert_eq!(t.states.len(), 1);
            assert!((-0.6..-0.4).contains(&t.states[0].0));
            assert!(!t.reached_goal);
        }
    }

    #[test]
    fn rollouts_stop_at_the_step_limit() {
        let trajs = rollout_random_inits(Policy::Uncontrolled, 2, 1000, &mut Rng::new(2)).unwrap();
        assert!(trajs.iter().all(|t| t.states.len() == 201));
    }

    #[test]
    fn rollouts_are_deterministic() {
        let net = MlpParams::glorot(&q_network_spec(2, 3, 2, 128, Activation::Relu), &mut Rng::new(9)).unwrap();
        let a = rollout_random_inits(Policy::Greedy(&net), 10, 200, &mut Rng::new(4)).unwrap();
        let b = rollout_random_inits(Policy::Greedy(&net), 10, 200, &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_network_shape_rejected() {
        let net = MlpParams::zeros(&q_network_spec(4, 2, 1, 8, Activation::Relu)).unwrap();
        assert!(vector_field(Policy::Greedy(&net), (4, 4)).is_err());
    }

    #[test]
    fn csv_outputs() {
        let field = vector_field(Policy::Uncontrolled, (2, 2)).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &field).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("p,v,dp,dv\n-1.2,-0.07,"));
        assert_eq!(text.lines().count(), 5);

        let trajs = rollout_random_inits(Policy::Uncontrolled, 2, 3, &mut Rng::new(0)).unwrap();
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, &trajs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("traj_id,t,p,v\n0,0,"));
        assert_eq!(text.lines().count(), 1 + 2 * 4);
    }

    proptest! {
        #[test]
        fn histogram_conserves_counts(
            states in prop::collection::vec((-1.2f64..=0.6, -0.07f64..=0.07), 0..300),
            rows in 1usize..40,
            cols in 1usize..40,
        ) {
            let trace: Vec<_> = states.iter().enumerate().map(|(i, &(p, v))| record(i as u64 + 1, p, v)).collect();
            let h = phase_histogram(&trace, (rows, cols)).unwrap();
            prop_assert_eq!(h.total(), states.len() as u64);
        }
    }
}
