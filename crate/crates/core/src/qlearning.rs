//! Tabular Q-learning whose update target comes from the classical, the
//! consistent or the advantage operator.
//!
//! The advantage target uses the greedy policy, so its advantage term is
//! `q[s][a] − max_b q[s][b]`. β advances once per Q-update.
//!
//! # Learning curves
//!
//! A run spends a global budget of `step_cap` environment steps across as
//! many episodes as fit. Each episode keeps a running discounted return
//! `Σ_{j≤k} γ^j R_{j+1}` that restarts at zero. The curve value at a global
//! step is the running total of the first episode until it ends; from then
//! on it holds the final total of the most recently ended episode, so a
//! terminated episode's total is padded forward until the next one ends.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{discretize, EnvKind, Environment, GridSpec, DEFAULT_EPISODE_CAP};
use crate::error::{Error, Result};
use crate::mdp::{argmax, QTable, ValueTable};
use crate::operators::BetaSchedule;
use crate::seed::stream_rng;

/// Tables with more entries than this are stored sparsely.
pub const DENSE_LIMIT: u64 = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorVariant {
    Classical,
    Consistent,
    Advantage,
}

impl OperatorVariant {
    pub const ALL: [OperatorVariant; 3] = [Self::Classical, Self::Consistent, Self::Advantage];

    pub fn name(self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::Consistent => "consistent",
            Self::Advantage => "advantage",
        }
    }
}

impl fmt::Display for OperatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown operator '{s}' (expected classical, consistent or advantage)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub variant: OperatorVariant,
    /// Required by the advantage variant, ignored otherwise.
    pub beta: Option<BetaSchedule>,
    pub episode_cap: usize,
    /// Global step budget of a run; also the curve length.
    pub step_cap: usize,
    /// Per-episode multiplier on ε, floored at `epsilon_min`.
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    /// Per-episode multiplier on α, floored at `alpha_min`.
    pub alpha_decay: f64,
    pub alpha_min: f64,
}

impl AgentConfig {
    /// α = 0.1, ε = 0.1, γ = 0.99, no decay, 10 000-step episodes and budget;
    /// the advantage variant gets the default β schedule for γ.
    pub fn new(variant: OperatorVariant) -> Self {
        let gamma = 0.99;
        Self {
            alpha: 0.1,
            epsilon: 0.1,
            gamma,
            variant,
            beta: (variant == OperatorVariant::Advantage).then(|| BetaSchedule::default_for(gamma)),
            episode_cap: DEFAULT_EPISODE_CAP,
            step_cap: 10_000,
            epsilon_decay: 1.0,
            epsilon_min: 0.0,
            alpha_decay: 1.0,
            alpha_min: 0.0,
        }
    }

    /// The same configuration under another variant. Switching to advantage
    /// without a schedule installs the default one.
    pub fn with_variant(&self, variant: OperatorVariant) -> Self {
        let mut c = self.clone();
        c.variant = variant;
        if variant == OperatorVariant::Advantage && c.beta.is_none() {
            c.beta = Some(BetaSchedule::default_for(c.gamma));
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.variant == OperatorVariant::Advantage && self.beta.is_none() {
            return bad("the advantage variant requires a beta schedule".into());
        }
        if self.episode_cap == 0 || self.step_cap == 0 {
            return bad("episode and step caps must be at least 1".into());
        }
        for (name, d) in [("epsilon_decay", self.epsilon_decay), ("alpha_decay", self.alpha_decay)] {
            if !(d > 0.0 && d <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {d}"));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_min) || !(0.0..=1.0).contains(&self.alpha_min) {
            return bad("epsilon_min and alpha_min must lie in [0, 1]".into());
        }
        Ok(())
    }

    fn epsilon_at(&self, episode: usize) -> f64 {
        decayed(self.epsilon, self.epsilon_decay, self.epsilon_min, episode)
    }

    fn alpha_at(&self, episode: usize) -> f64 {
        decayed(self.alpha, self.alpha_decay, self.alpha_min, episode)
    }
}

fn decayed(x0: f64, rate: f64, floor: f64, episode: usize) -> f64 {
    if rate == 1.0 {
        x0
    } else {
        (x0 * rate.powf(episode as f64)).max(floor)
    }
}

/// Sampled update target for `(s, a, r, s_next)`.
///
/// `beta_j` only enters the advantage variant. A terminated step has no
/// future term.
#[allow(clippy::too_many_arguments)]
pub fn td_target(
    variant: OperatorVariant,
    q: &QTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    terminated: bool,
    gamma: f64,
    beta_j: f64,
) -> f64 {
    let future = if terminated {
        0.0
    } else if variant == OperatorVariant::Consistent && s_next == s {
        q.get(s, a)
    } else {
        q.max_value(s_next)
    };
    let target = r + gamma * future;
    if variant == OperatorVariant::Advantage && beta_j != 0.0 {
        target + beta_j * (q.get(s, a) - q.max_value(s))
    } else {
        target
    }
}

/// `q[s][a] ← (1 − α) q[s][a] + α · target`.
pub fn q_update(q: &mut QTable, s: usize, a: usize, target: f64, alpha: f64) {
    let old = q.get(s, a);
    q.set(s, a, (1.0 - alpha) * old + alpha * target);
}

/// ε-greedy action; greedy ties go to the lowest index.
pub fn select_action(q: &QTable, s: usize, epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.n_actions())
    } else {
        argmax(q.row(s))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    /// Padded running discounted return per global step.
    pub curve: Vec<f64>,
    pub episodes_completed: usize,
    /// Length of every completed episode, in order.
    pub episode_lengths: Vec<usize>,
    /// Whether each completed episode terminated (as opposed to truncating).
    pub episode_terminated: Vec<bool>,
    /// Steps spent in the episode the budget cut off.
    pub unfinished_steps: usize,
    pub q_abs_max: f64,
}

/// Curve of one run from the rewards of its consecutive episodes, the last
/// of which may be unfinished; `γ = 1` gives undiscounted totals.
pub fn padded_curve(episodes: &[Vec<f64>], gamma: f64, len: usize) -> Vec<f64> {
    let mut curve = Vec::with_capacity(len);
    let mut held: Option<f64> = None;
    for (i, rewards) in episodes.iter().enumerate() {
        let finished = i + 1 < episodes.len();
        let mut total = 0.0;
        let mut discount = 1.0;
        for (k, r) in rewards.iter().enumerate() {
            total += discount * r;
            discount *= gamma;
            let ends_here = finished && k + 1 == rewards.len();
            curve.push(if ends_here { total } else { held.unwrap_or(total) });
        }
        if finished {
            held = Some(total);
        }
    }
    let last = curve.last().copied().unwrap_or(0.0);
    curve.resize(len, held.unwrap_or(last));
    curve.truncate(len);
    curve
}

fn new_table(n_cells: u64, n_actions: usize) -> QTable {
    if n_cells * n_actions as u64 <= DENSE_LIMIT {
        QTable::zeros(n_cells as usize, n_actions)
    } else {
        QTable::sparse(n_cells as usize, n_actions, 0.0)
    }
}

/// One training run of `config.step_cap` environment steps.
///
/// Stream 0 of `seed` draws start states and stream 1 drives exploration, so
/// runs sharing a seed see the same start states whatever their variant.
pub fn run_training(env: EnvKind, grid: &GridSpec, config: &AgentConfig, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    if grid.dims() != env.state_dim() {
        return Err(Error::shape(format!("{}-dimensional grid", env.state_dim()), format!("{}-dimensional grid", grid.dims())));
    }
    let n_actions = env.n_actions();
    let mut environment = Environment::new(env, config.episode_cap, stream_rng(seed, 0))?;
    let mut explore = stream_rng(seed, 1);
    let mut q = new_table(grid.n_cells(), n_actions);
    let schedule = config.beta.unwrap_or_else(BetaSchedule::zero);
    let gamma = config.gamma;

    let len = config.step_cap;
    let mut curve = Vec::with_capacity(len);
    let mut running = 0.0;
    let mut discount = 1.0;
    let mut held: Option<f64> = None;
    let mut episode_steps = 0;
    let mut episode_lengths = Vec::new();
    let mut episode_terminated = Vec::new();

    let mut s = discretize(&environment.observation(), grid)?;
    let (mut epsilon, mut alpha) = (config.epsilon_at(0), config.alpha_at(0));
    for j in 0..len {
        let a = select_action(&q, s, epsilon, &mut explore);
        let out = environment.step(a)?;
        let s_next = discretize(&out.next_state, grid)?;
        let beta_j = if config.variant == OperatorVariant::Advantage { schedule.beta_at(j as u64) } else { 0.0 };
        let target = td_target(config.variant, &q, s, a, out.reward, s_next, out.terminated, gamma, beta_j);
        q_update(&mut q, s, a, target, alpha);

        running += discount * out.reward;
        discount *= gamma;
        episode_steps += 1;
        s = s_next;
        if out.done() {
            held = Some(running);
            curve.push(running);
            episode_lengths.push(episode_steps);
            episode_terminated.push(out.terminated);
            running = 0.0;
            discount = 1.0;
            episode_steps = 0;
            s = discretize(&environment.reset(), grid)?;
            let e = episode_lengths.len();
            epsilon = config.epsilon_at(e);
            alpha = config.alpha_at(e);
        } else {
            curve.push(held.unwrap_or(running));
        }
    }
    let episodes_completed = episode_lengths.len();

    let q_abs_max = q.abs_max();

    Ok(RunRecord {
        seed,
        curve,
        episodes_completed,
        episode_lengths,
        episode_terminated,
        unfinished_steps: episode_steps,
        q_abs_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q3() -> QTable {
        QTable::from_rows(&[vec![1.0, 3.0], vec![2.0, -1.0], vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn terminated_target_is_reward() {
        for v in OperatorVariant::ALL {
            assert_eq!(td_target(v, &q3(), 0, 0, -1.0, 1, true, 0.9, 0.0), -1.0);
        }
        // The advantage term still applies on a terminal step.
        assert_eq!(td_target(OperatorVariant::Advantage, &q3(), 0, 0, -1.0, 1, true, 0.9, 0.5), -2.0);
    }

    #[test]
    fn targets_by_variant() {
        let q = q3();
        let classical = td_target(OperatorVariant::Classical, &q, 0, 0, 1.0, 1, false, 0.9, 0.0);
        assert_eq!(classical, 1.0 + 0.9 * 2.0);
        assert_eq!(td_target(OperatorVariant::Consistent, &q, 0, 0, 1.0, 1, false, 0.9, 0.0), classical);
        assert_eq!(td_target(OperatorVariant::Consistent, &q, 0, 0, 1.0, 0, false, 0.9, 0.0), 1.0 + 0.9 * 1.0);
        assert_eq!(td_target(OperatorVariant::Advantage, &q, 0, 1, 1.0, 1, false, 0.9, 0.7), classical);
        assert_eq!(td_target(OperatorVariant::Advantage, &q, 0, 0, 1.0, 1, false, 0.9, 0.5), classical - 1.0);
    }

    #[test]
    fn update_rule() {
        let mut q = QTable::zeros(1, 1);
        q_update(&mut q, 0, 0, 2.0, 0.5);
        assert_eq!(q.get(0, 0), 1.0);
        q_update(&mut q, 0, 0, 7.0, 1.0);
        assert_eq!(q.get(0, 0), 7.0);
        q_update(&mut q, 0, 0, 7.0, 0.3);
        assert_eq!(q.get(0, 0), 7.0);
    }

    #[test]
    fn greedy_selection_breaks_ties_low() {
        let q = QTable::from_rows(&[vec![1.0, 1.0, 0.0]]).unwrap();
        let mut rng = stream_rng(0, 0);
        assert!((0..100).all(|_| select_action(&q, 0, 0.0, &mut rng) == 0));
    }

    #[test]
    fn padded_curve_example() {
        // A 3-step episode, then an unfinished one, in a 5-step budget.
        let c = padded_curve(&[vec![-1.0; 3], vec![-1.0; 2]], 1.0, 5);
        assert_eq!(c, vec![-1.0, -2.0, -3.0, -3.0, -3.0]);
        let c = padded_curve(&[vec![-1.0; 4]], 0.0, 4);
        assert_eq!(c, vec![-1.0; 4]);
        let c = padded_curve(&[vec![1.0; 2], vec![1.0; 4], vec![1.0]], 0.5, 7);
        assert_eq!(c, vec![1.0, 1.5, 1.5, 1.5, 1.5, 1.875, 1.875]);
    }

    #[test]
    fn config_validation() {
        let mut c = AgentConfig::new(OperatorVariant::Advantage);
        assert!(c.validate().is_ok());
        c.beta = None;
        assert!(c.validate().is_err());
        let mut c = AgentConfig::new(OperatorVariant::Classical);
        c.alpha = 0.0;
        assert!(c.validate().is_err());
        assert!("sarsa".parse::<OperatorVariant>().is_err());
    }

    #[test]
    fn run_length_and_determinism() {
        let mut c = AgentConfig::new(OperatorVariant::Classical);
        c.step_cap = 3_000;
        let g = EnvKind::MountainCar.default_grid();
        let a = run_training(EnvKind::MountainCar, &g, &c, 11).unwrap();
        let b = run_training(EnvKind::MountainCar, &g, &c, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.curve.len(), 3_000);
        assert_eq!(a.episode_lengths.iter().sum::<usize>() + a.unfinished_steps, 3_000);
    }

    #[test]
    fn sparse_table_for_nominal_grid() {
        let mut c = AgentConfig::new(OperatorVariant::Consistent);
        c.step_cap = 500;
        let g = EnvKind::CartPole.grid(&EnvKind::CartPole.nominal_bins()).unwrap();
        let r = run_training(EnvKind::CartPole, &g, &c, 3).unwrap();
        assert_eq!(r.curve.len(), 500);
        assert!(r.episodes_completed > 0);
    }
}
