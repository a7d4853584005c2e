//! Acrobot-v1: two-link underactuated pendulum, state
//! `(theta1, theta2, dtheta1, dtheta2)`, torque on the second joint,
//! one RK4 step of `dt = 0.2 s` per action.

use std::f64::consts::PI;

pub const DT: f64 = 0.2;
pub const LINK_LENGTH_1: f64 = 1.0;
pub const LINK_MASS_1: f64 = 1.0;
pub const LINK_MASS_2: f64 = 1.0;
pub const LINK_COM_POS_1: f64 = 0.5;
pub const LINK_COM_POS_2: f64 = 0.5;
pub const LINK_MOI: f64 = 1.0;
pub const MAX_VEL_1: f64 = 4.0 * PI;
pub const MAX_VEL_2: f64 = 9.0 * PI;
pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];
pub const RESET_BOUND: f64 = 0.1;
const G: f64 = 9.8;

/// Time derivative of `(theta1, theta2, dtheta1, dtheta2)` under `torque`
/// (the "book" equations of motion).
fn derivative(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2, l1) = (LINK_MASS_1, LINK_MASS_2, LINK_LENGTH_1);
    let (lc1, lc2) = (LINK_COM_POS_1, LINK_COM_POS_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let [theta1, theta2, dtheta1, dtheta2] = s;
    let cos2 = theta2.cos();
    let sin2 = theta2.sin();

    let d1 = m1 * (lc1 * lc1) + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * cos2) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * cos2) + i2;
    let phi2 = m2 * lc2 * G * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * (dtheta2 * dtheta2) * sin2
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin2
        + (m1 * lc1 + m2 * l1) * G * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * (dtheta1 * dtheta1) * sin2 - phi2)
        / (m2 * (lc2 * lc2) + i2 - (d2 * d2) / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn axpy(y: [f64; 4], h: f64, k: [f64; 4]) -> [f64; 4] {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]]
}

/// Maps an angle into `[-pi, pi]` by whole turns.
pub fn wrap_angle(mut x: f64) -> f64 {
    let span = PI - -PI;
    while x > PI {
        x -= span;
    }
    while x < -PI {
        x += span;
    }
    x
}

/// Tip above the bar: `-cos(theta1) - cos(theta1 + theta2) > 1`.
pub fn tip_above_bar(theta1: f64, theta2: f64) -> bool {
    -theta1.cos() - (theta2 + theta1).cos() > 1.0
}

pub fn advance(s: [f64; 4], action: usize) -> ([f64; 4], bool) {
    let torque = TORQUES[action];
    let half = DT / 2.0;
    let k1 = derivative(s, torque);
    let k2 = derivative(axpy(s, half, k1), torque);
    let k3 = derivative(axpy(s, half, k2), torque);
    let k4 = derivative(axpy(s, DT, k3), torque);
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = s[i] + DT / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    next[0] = wrap_angle(next[0]);
    next[1] = wrap_angle(next[1]);
    next[2] = next[2].clamp(-MAX_VEL_1, MAX_VEL_1);
    next[3] = next[3].clamp(-MAX_VEL_2, MAX_VEL_2);
    (next, tip_above_bar(next[0], next[1]))
}
