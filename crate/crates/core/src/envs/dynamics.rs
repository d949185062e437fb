//! Pure step functions for the three classic-control systems, using the
//! Gymnasium classic-control constants.

use std::f64::consts::PI;

use super::{ContinuousState, StepOutcome};
use crate::error::{Error, Result};

pub mod mountain_car {
    pub const MIN_POSITION: f64 = -1.2;
    pub const MAX_POSITION: f64 = 0.6;
    pub const MAX_SPEED: f64 = 0.07;
    pub const GOAL_POSITION: f64 = 0.5;
    pub const GOAL_VELOCITY: f64 = 0.0;
    pub const FORCE: f64 = 0.001;
    pub const GRAVITY: f64 = 0.0025;
    pub const N_ACTIONS: usize = 3;
}

pub mod cart_pole {
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    pub const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
    /// Half the pole length.
    pub const LENGTH: f64 = 0.5;
    pub const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
    pub const FORCE_MAG: f64 = 10.0;
    pub const TAU: f64 = 0.02;
    pub const X_THRESHOLD: f64 = 2.4;
    pub const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
    pub const N_ACTIONS: usize = 2;
}

pub mod acrobot {
    use std::f64::consts::PI;

    pub const DT: f64 = 0.2;
    pub const LINK_LENGTH_1: f64 = 1.0;
    pub const LINK_LENGTH_2: f64 = 1.0;
    pub const LINK_MASS_1: f64 = 1.0;
    pub const LINK_MASS_2: f64 = 1.0;
    pub const LINK_COM_POS_1: f64 = 0.5;
    pub const LINK_COM_POS_2: f64 = 0.5;
    pub const LINK_MOI: f64 = 1.0;
    pub const GRAVITY: f64 = 9.8;
    pub const MAX_VEL_1: f64 = 4.0 * PI;
    pub const MAX_VEL_2: f64 = 9.0 * PI;
    pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];
    pub const N_ACTIONS: usize = 3;
}

fn check_action(action: usize, n_actions: usize) -> Result<()> {
    if action >= n_actions {
        return Err(Error::InvalidAction { action, n_actions });
    }
    Ok(())
}

fn check_dim(s: &ContinuousState, dim: usize) -> Result<()> {
    if s.dim() != dim {
        return Err(Error::shape(format!("{dim}-dimensional state"), format!("{}-dimensional state", s.dim())));
    }
    Ok(())
}

/// One MountainCar step from `(position, velocity)`. Terminates when the car
/// reaches `position ≥ 0.5` with non-negative velocity; reward is −1 per step.
pub fn mountain_car_step(s: &ContinuousState, action: usize) -> Result<StepOutcome> {
    use mountain_car::*;
    check_dim(s, 2)?;
    check_action(action, N_ACTIONS)?;
    let (mut position, mut velocity) = (s[0], s[1]);
    velocity += (action as f64 - 1.0) * FORCE + (3.0 * position).cos() * -GRAVITY;
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    position += velocity;
    position = position.clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    let terminated = position >= GOAL_POSITION && velocity >= GOAL_VELOCITY;
    Ok(StepOutcome {
        next_state: ContinuousState::new(vec![position, velocity]),
        reward: -1.0,
        terminated,
        truncated: false,
    })
}

/// One Euler step of the cart-pole from `(x, ẋ, θ, θ̇)`. Action 1 pushes
/// right, action 0 pushes left; reward is +1 on every step, including the
/// one that ends the episode.
pub fn cart_pole_step(s: &ContinuousState, action: usize) -> Result<StepOutcome> {
    use cart_pole::*;
    check_dim(s, 4)?;
    check_action(action, N_ACTIONS)?;
    let (x, x_dot, theta, theta_dot) = (s[0], s[1], s[2], s[3]);
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let (sin, cos) = theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin - cos * temp) / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;

    let x = x + TAU * x_dot;
    let x_dot = x_dot + TAU * x_acc;
    let theta = theta + TAU * theta_dot;
    let theta_dot = theta_dot + TAU * theta_acc;

    let terminated = !(-X_THRESHOLD..=X_THRESHOLD).contains(&x) || !(-THETA_THRESHOLD..=THETA_THRESHOLD).contains(&theta);
    Ok(StepOutcome {
        next_state: ContinuousState::new(vec![x, x_dot, theta, theta_dot]),
        reward: 1.0,
        terminated,
        truncated: false,
    })
}

/// Time derivative of `(θ₁, θ₂, ω₁, ω₂)` under applied torque `torque`.
fn acrobot_derivs(s: [f64; 4], torque: f64) -> [f64; 4] {
    use acrobot::*;
    let (m1, m2) = (LINK_MASS_1, LINK_MASS_2);
    let l1 = LINK_LENGTH_1;
    let (lc1, lc2) = (LINK_COM_POS_1, LINK_COM_POS_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let g = GRAVITY;
    let [theta1, theta2, dtheta1, dtheta2] = s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4(s: [f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |a: [f64; 4], k: [f64; 4], h: f64| std::array::from_fn::<f64, 4, _>(|i| a[i] + h * k[i]);
    let k1 = acrobot_derivs(s, torque);
    let k2 = acrobot_derivs(add(s, k1, dt / 2.0), torque);
    let k3 = acrobot_derivs(add(s, k2, dt / 2.0), torque);
    let k4 = acrobot_derivs(add(s, k3, dt), torque);
    std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Wraps an angle into `[−π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI { -PI } else { w }
}

/// One RK4 step of the internal Acrobot state `(θ₁, θ₂, ω₁, ω₂)`, followed by
/// angle wrapping and velocity clipping. Returns the new state and whether
/// the tip has risen above the target height.
pub fn acrobot_step_internal(s: [f64; 4], action: usize) -> Result<([f64; 4], bool)> {
    use acrobot::*;
    check_action(action, N_ACTIONS)?;
    let n = rk4(s, TORQUES[action], DT);
    let next = [
        wrap_angle(n[0]),
        wrap_angle(n[1]),
        n[2].clamp(-MAX_VEL_1, MAX_VEL_1),
        n[3].clamp(-MAX_VEL_2, MAX_VEL_2),
    ];
    Ok((next, acrobot_terminal(next[0], next[1])))
}

pub fn acrobot_terminal(theta1: f64, theta2: f64) -> bool {
    -theta1.cos() - (theta1 + theta2).cos() > 1.0
}

/// `(cos θ₁, sin θ₁, cos θ₂, sin θ₂, ω₁, ω₂)` for an internal state.
pub fn acrobot_observation(s: [f64; 4]) -> ContinuousState {
    let (s1, c1) = s[0].sin_cos();
    let (s2, c2) = s[1].sin_cos();
    ContinuousState::new(vec![c1, s1, c2, s2, s[2], s[3]])
}

/// Recovers the internal state from an observation through `atan2`.
pub fn acrobot_internal(obs: &ContinuousState) -> Result<[f64; 4]> {
    check_dim(obs, 6)?;
    Ok([obs[1].atan2(obs[0]), obs[3].atan2(obs[2]), obs[4], obs[5]])
}

/// One Acrobot step from a 6-dimensional observation. Reward is −1 on every
/// step that does not reach the target height and 0 on the one that does.
pub fn acrobot_step(obs: &ContinuousState, action: usize) -> Result<StepOutcome> {
    let (next, terminated) = acrobot_step_internal(acrobot_internal(obs)?, action)?;
    Ok(acrobot_outcome(next, terminated))
}

pub(crate) fn acrobot_outcome(next: [f64; 4], terminated: bool) -> StepOutcome {
    StepOutcome {
        next_state: acrobot_observation(next),
        reward: if terminated { 0.0 } else { -1.0 },
        terminated,
        truncated: false,
    }
}

/// Total mechanical energy of the Acrobot with the pivot as potential zero,
/// angles measured from hanging straight down.
pub fn acrobot_energy(s: [f64; 4]) -> f64 {
    use acrobot::*;
    let [t1, t2, w1, w2] = s;
    let (l1, lc1, lc2) = (LINK_LENGTH_1, LINK_COM_POS_1, LINK_COM_POS_2);
    let v2_sq = l1 * l1 * w1 * w1 + lc2 * lc2 * (w1 + w2) * (w1 + w2) + 2.0 * l1 * lc2 * w1 * (w1 + w2) * t2.cos();
    let kinetic = 0.5 * (LINK_MASS_1 * lc1 * lc1 + LINK_MOI) * w1 * w1
        + 0.5 * LINK_MASS_2 * v2_sq
        + 0.5 * LINK_MOI * (w1 + w2) * (w1 + w2);
    let potential = -LINK_MASS_1 * GRAVITY * lc1 * t1.cos() - LINK_MASS_2 * GRAVITY * (l1 * t1.cos() + lc2 * (t1 + t2).cos());
    kinetic + potential
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(v: &[f64]) -> ContinuousState {
        ContinuousState::new(v.to_vec())
    }

    #[test]
    fn mountain_car_first_step() {
        let out = mountain_car_step(&st(&[-0.5, 0.0]), 1).unwrap();
        let v = -0.0025 * (-1.5f64).cos();
        assert_eq!(out.next_state[1], v);
        assert_eq!(out.next_state[0], -0.5 + v);
        assert_eq!(out.reward, -1.0);
        assert!(!out.terminated);
    }

    #[test]
    fn mountain_car_goal_and_wall() {
        let out = mountain_car_step(&st(&[0.49, 0.07]), 2).unwrap();
        assert!(out.terminated);
        assert_eq!(out.reward, -1.0);
        let out = mountain_car_step(&st(&[-1.2, -0.05]), 0).unwrap();
        assert_eq!(out.next_state.as_slice(), &[-1.2, 0.0]);
        assert!(mountain_car_step(&st(&[0.0, 0.0]), 3).is_err());
        assert!(mountain_car_step(&st(&[0.0]), 0).is_err());
    }

    #[test]
    fn mountain_car_valley_zero_crossing() {
        let x = -PI / 6.0;
        let out = mountain_car_step(&st(&[x, 0.0]), 1).unwrap();
        assert!(out.next_state[1].abs() < 1e-18);
    }

    #[test]
    fn cart_pole_termination_and_reward() {
        let out = cart_pole_step(&st(&[0.0, 0.0, 0.2094, 2.0]), 1).unwrap();
        assert!(out.terminated);
        assert_eq!(out.reward, 1.0);
        let out = cart_pole_step(&st(&[0.0; 4]), 0).unwrap();
        assert!(!out.terminated);
        assert!(cart_pole_step(&st(&[0.0; 4]), 2).is_err());
    }

    #[test]
    fn acrobot_rest_is_equilibrium() {
        // cos(−π/2) rounds to 6e-17, so rest is a fixed point up to rounding.
        let mut s = [0.0; 4];
        for _ in 0..100 {
            s = acrobot_step_internal(s, 1).unwrap().0;
        }
        assert!(s.iter().all(|x| x.abs() < 1e-12), "{s:?}");
        let (_, done) = acrobot_step_internal([0.0; 4], 1).unwrap();
        assert!(!done);
    }

    #[test]
    fn acrobot_terminal_threshold() {
        // Tip height −cosθ₁ − cos(θ₁+θ₂) = 1 + δ with the first link straight up.
        let delta: f64 = 1e-9;
        assert!(acrobot_terminal(PI, -PI / 2.0 + delta.asin()));
        assert!(!acrobot_terminal(PI, -PI / 2.0 - delta.asin()));
        assert!(!acrobot_terminal(0.0, 0.0));
    }

    #[test]
    fn acrobot_observation_round_trip() {
        let s = [0.3, -2.0, 1.0, -3.0];
        let back = acrobot_internal(&acrobot_observation(s)).unwrap();
        for i in 0..4 {
            assert!((back[i] - s[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-10.0, -PI, 0.0, PI, 3.5, 100.0] {
            let w = wrap_angle(x);
            assert!((-PI..PI).contains(&w), "{x} -> {w}");
            assert!(((x - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((x - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}
