//! MountainCar, CartPole and Acrobot with uniform grid discretization.
//!
//! The systems are deterministic; randomness only enters through the
//! initial state, drawn from an explicitly seeded generator at reset.

mod dynamics;
mod grid;

use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use dynamics::{
    acrobot, acrobot_energy, acrobot_internal, acrobot_observation, acrobot_step, acrobot_step_internal,
    acrobot_terminal, cart_pole, cart_pole_step, mountain_car, mountain_car_step, wrap_angle,
};
pub use grid::{discretize, GridSpec};

/// Default per-episode step cap.
pub const DEFAULT_EPISODE_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousState(Vec<f64>);

impl ContinuousState {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Index<usize> for ContinuousState {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for ContinuousState {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: ContinuousState,
    pub reward: f64,
    pub terminated: bool,
    /// Set when the episode cap is hit on a non-terminal step.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    MountainCar,
    CartPole,
    Acrobot,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::MountainCar, EnvKind::CartPole, EnvKind::Acrobot];

    pub fn name(self) -> &'static str {
        match self {
            Self::MountainCar => "mountaincar",
            Self::CartPole => "cartpole",
            Self::Acrobot => "acrobot",
        }
    }

    pub fn n_actions(self) -> usize {
        match self {
            Self::MountainCar => mountain_car::N_ACTIONS,
            Self::CartPole => cart_pole::N_ACTIONS,
            Self::Acrobot => acrobot::N_ACTIONS,
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            Self::MountainCar => 2,
            Self::CartPole => 4,
            Self::Acrobot => 6,
        }
    }

    /// Discretization bounds per observation dimension.
    ///
    /// CartPole velocities are unbounded; they are clipped to `ẋ ∈ [−3, 3]` and
    /// `θ̇ ∈ [−3.5, 3.5]`, the conventional ranges for tabular agents.
    pub fn bounds(self) -> Vec<(f64, f64)> {
        match self {
            Self::MountainCar => vec![
                (mountain_car::MIN_POSITION, mountain_car::MAX_POSITION),
                (-mountain_car::MAX_SPEED, mountain_car::MAX_SPEED),
            ],
            Self::CartPole => vec![
                (-cart_pole::X_THRESHOLD, cart_pole::X_THRESHOLD),
                (-3.0, 3.0),
                (-cart_pole::THETA_THRESHOLD, cart_pole::THETA_THRESHOLD),
                (-3.5, 3.5),
            ],
            Self::Acrobot => vec![
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-acrobot::MAX_VEL_1, acrobot::MAX_VEL_1),
                (-acrobot::MAX_VEL_2, acrobot::MAX_VEL_2),
            ],
        }
    }

    /// Bin counts used when no grid is given: 40², 12⁴ and 6⁶.
    pub fn default_bins(self) -> Vec<usize> {
        match self {
            Self::MountainCar => vec![40; 2],
            Self::CartPole => vec![12; 4],
            Self::Acrobot => vec![6; 6],
        }
    }

    /// The full-scale grids: 40², 150⁴ and 30⁶.
    pub fn nominal_bins(self) -> Vec<usize> {
        match self {
            Self::MountainCar => vec![40; 2],
            Self::CartPole => vec![150; 4],
            Self::Acrobot => vec![30; 6],
        }
    }

    pub fn grid(self, bins: &[usize]) -> Result<GridSpec> {
        if bins.len() != self.state_dim() {
            return Err(Error::shape(
                format!("{} bin counts for {}", self.state_dim(), self.name()),
                format!("{} bin counts", bins.len()),
            ));
        }
        let (lower, upper) = self.bounds().into_iter().unzip();
        GridSpec::new(bins.to_vec(), lower, upper)
    }

    pub fn default_grid(self) -> GridSpec {
        self.grid(&self.default_bins()).expect("built-in grids are valid")
    }

    /// Bound on the per-step reward magnitude.
    pub fn max_abs_reward(self) -> f64 {
        1.0
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown environment '{s}' (expected mountaincar, cartpole or acrobot)")))
    }
}

/// Parses a `d1,d2,...` bin-count list.
pub fn parse_bins(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidArgument(format!("bad bin count '{x}': {e}")))
        })
        .collect()
}

/// A running episode of one of the three systems.
///
/// Each instance owns its episode state and start-state generator; parallel
/// runs construct their own instances.
#[derive(Clone, Debug)]
pub struct Environment {
    kind: EnvKind,
    episode_cap: usize,
    rng: ChaCha8Rng,
    /// Position/velocity state for MountainCar and CartPole; `(θ₁, θ₂, ω₁, ω₂)`
    /// for Acrobot.
    internal: Vec<f64>,
    steps: usize,
}

impl Environment {
    pub fn new(kind: EnvKind, episode_cap: usize, rng: ChaCha8Rng) -> Result<Self> {
        if episode_cap == 0 {
            return Err(Error::InvalidArgument("episode cap must be at least 1".into()));
        }
        let mut env = Self {
            kind,
            episode_cap,
            rng,
            internal: Vec::new(),
            steps: 0,
        };
        env.reset();
        Ok(env)
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn episode_steps(&self) -> usize {
        self.steps
    }

    /// Draws a fresh start state and returns its observation.
    pub fn reset(&mut self) -> ContinuousState {
        self.internal = match self.kind {
            EnvKind::MountainCar => vec![self.rng.gen_range(-0.6..-0.4), 0.0],
            EnvKind::CartPole => (0..4).map(|_| self.rng.gen_range(-0.05..0.05)).collect(),
            EnvKind::Acrobot => (0..4).map(|_| self.rng.gen_range(-0.1..0.1)).collect(),
        };
        self.steps = 0;
        self.observation()
    }

    pub fn observation(&self) -> ContinuousState {
        match self.kind {
            EnvKind::Acrobot => acrobot_observation(self.acrobot_state()),
            _ => ContinuousState::new(self.internal.clone()),
        }
    }

    fn acrobot_state(&self) -> [f64; 4] {
        [self.internal[0], self.internal[1], self.internal[2], self.internal[3]]
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let mut out = match self.kind {
            EnvKind::MountainCar => mountain_car_step(&ContinuousState::new(self.internal.clone()), action)?,
            EnvKind::CartPole => cart_pole_step(&ContinuousState::new(self.internal.clone()), action)?,
            EnvKind::Acrobot => {
                // Stepping the angles directly avoids the atan2 round trip.
                let (next, terminated) = acrobot_step_internal(self.acrobot_state(), action)?;
                self.internal = next.to_vec();
                dynamics::acrobot_outcome(next, terminated)
            }
        };
        if self.kind != EnvKind::Acrobot {
            self.internal = out.next_state.as_slice().to_vec();
        }
        self.steps += 1;
        out.truncated = !out.terminated && self.steps >= self.episode_cap;
        Ok(out)
    }
}
