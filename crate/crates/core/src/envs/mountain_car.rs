//! MountainCar-v0: an underpowered car in a valley, state `(position, velocity)`.

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const GOAL_VELOCITY: f64 = 0.0;
pub const FORCE: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;
pub const RESET_LOW: f64 = -0.6;
pub const RESET_HIGH: f64 = -0.4;
/// Action with no applied force.
pub const NO_PUSH: usize = 1;

/// Advances `(position, velocity)` by one step. Returns the new state and
/// whether it terminates at the goal.
pub fn advance(position: f64, velocity: f64, action: usize) -> (f64, f64, bool) {
    let push = action as f64 - 1.0;
    let mut v = velocity + (push * FORCE + (3.0 * position).cos() * -GRAVITY);
    v = v.clamp(-MAX_SPEED, MAX_SPEED);
    let p = (position + v).clamp(MIN_POSITION, MAX_POSITION);
    if p == MIN_POSITION && v < 0.0 {
        v = 0.0;
    }
    let at_goal = p >= GOAL_POSITION && v >= GOAL_VELOCITY;
    (p, v, at_goal)
}
