//! CartPole-v0: a pole hinged on a cart, state `(x, x_dot, theta, theta_dot)`,
//! explicit Euler integration with `tau = 0.02 s`.

pub const GRAVITY: f64 = 9.8;
pub const MASS_CART: f64 = 1.0;
pub const MASS_POLE: f64 = 0.1;
pub const TOTAL_MASS: f64 = MASS_POLE + MASS_CART;
/// Half the pole length.
pub const LENGTH: f64 = 0.5;
pub const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
pub const FORCE_MAG: f64 = 10.0;
pub const TAU: f64 = 0.02;
pub const X_THRESHOLD: f64 = 2.4;
pub const RESET_BOUND: f64 = 0.05;

/// 12 degrees.
pub fn theta_threshold() -> f64 {
    12.0 * 2.0 * std::f64::consts::PI / 360.0
}

/// One Euler step; returns the next state and whether the pole or cart left
/// the allowed region.
pub fn advance(s: [f64; 4], action: usize) -> ([f64; 4], bool) {
    let [x, x_dot, theta, theta_dot] = s;
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let (sin_t, cos_t) = theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * (theta_dot * theta_dot) * sin_t) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin_t - cos_t * temp)
        / (LENGTH * (4.0 / 3.0 - MASS_POLE * (cos_t * cos_t) / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_t / TOTAL_MASS;

    let next = [
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    ];
    let limit = theta_threshold();
    let failed = next[0] < -X_THRESHOLD
        || next[0] > X_THRESHOLD
        || next[2] < -limit
        || next[2] > limit;
    (next, failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_right_from_rest() {
        let (s, failed) = advance([0.0; 4], 1);
        assert!(!failed);
        assert!(s[1] > 0.0);
        assert!(s[3] < 0.0);
        // Frozen against gymnasium CartPole-v0.
        assert_eq!(s, [0.0, 0.1951219512195122, 0.0, -0.2926829268292683]);
    }

    #[test]
    fn push_left_generic_state() {
        let (s, _) = advance([0.01, -0.02, 0.03, 0.04], 0);
        assert_eq!(
            s,
            [0.009600000000000001, -0.21553901710278936, 0.030799999999999998, 0.34199522377603914]
        );
    }

    #[test]
    fn fails_past_angle_limit() {
        let (_, failed) = advance([0.0, 0.0, 0.21, 1.0], 1);
        assert!(failed);
        let (_, failed) = advance([2.39, 1.0, 0.0, 0.0], 1);
        assert!(failed);
    }
}
