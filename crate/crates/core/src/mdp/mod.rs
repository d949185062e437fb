//! Finite MDP model, policies, value tables and the quantities derived from
//! them (greedy policy, state values, advantage, sup-norm distance).

mod format;
mod tables;

pub use format::{parse_mdp, write_mdp};
pub use tables::{QTable, VTable, ValueTable};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on transition-row and policy-row sums.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A finite MDP with rewards stored per transition `r(s, a, s')`.
///
/// Tensors are flattened row-major: index `(s * n_actions + a) * n_states + s'`.
/// The expected reward `r(s, a)` is derived once at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    reward_sa: Vec<f64>,
}

impl Mdp {
    /// Builds an MDP and rejects it unless [`validate_mdp`] reports no issue.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self::from_parts(n_states, n_actions, transition, reward, gamma)?;
        let report = validate_mdp(&mdp);
        if report.is_valid() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(report.to_string()))
        }
    }

    /// Builds an MDP checking only tensor shapes. Use [`validate_mdp`] to
    /// diagnose the result.
    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp(format!(
                "empty dimensions: {n_states} states, {n_actions} actions"
            )));
        }
        let len = n_states
            .checked_mul(n_actions)
            .and_then(|x| x.checked_mul(n_states))
            .ok_or_else(|| Error::InvalidMdp("tensor size overflows".into()))?;
        if transition.len() != len {
            return Err(Error::shape(format!("{len} transition entries"), transition.len()));
        }
        if reward.len() != len {
            return Err(Error::shape(format!("{len} reward entries"), reward.len()));
        }
        let reward_sa = transition
            .chunks_exact(n_states)
            .zip(reward.chunks_exact(n_states))
            .map(|(p, r)| p.iter().zip(r).map(|(p, r)| p * r).sum())
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            reward_sa,
        })
    }

    /// Builds an MDP from nested `[s][a][s']` tensors.
    pub fn from_nested(
        transition: &[Vec<Vec<f64>>],
        reward: &[Vec<Vec<f64>>],
        gamma: f64,
    ) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        let flatten = |t: &[Vec<Vec<f64>>], what: &str| -> Result<Vec<f64>> {
            if t.len() != n_states {
                return Err(Error::shape(format!("{n_states} {what} states"), t.len()));
            }
            let mut out = Vec::with_capacity(n_states * n_actions * n_states);
            for (s, rows) in t.iter().enumerate() {
                if rows.len() != n_actions {
                    return Err(Error::shape(
                        format!("{n_actions} actions at {what} state {s}"),
                        rows.len(),
                    ));
                }
                for row in rows {
                    if row.len() != n_states {
                        return Err(Error::shape(format!("{n_states} successors"), row.len()));
                    }
                    out.extend_from_slice(row);
                }
            }
            Ok(out)
        };
        let p = flatten(transition, "transition")?;
        let r = flatten(reward, "reward")?;
        Self::new(n_states, n_actions, p, r, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same dynamics and rewards under a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..self.clone() }
    }

    /// Transition row `P[s][a][·]`. Panics on out-of-range indices.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// Reward row `r[s][a][·]`. Panics on out-of-range indices.
    #[inline]
    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.reward[start..start + self.n_states]
    }

    #[inline]
    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition_row(s, a)[next]
    }

    #[inline]
    pub fn reward_sas(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward_row(s, a)[next]
    }

    /// `r(s, a) = Σ_{s'} P[s][a][s'] · r[s][a][s']`.
    pub fn reward_sa(&self, s: usize, a: usize) -> Result<f64> {
        self.check_index(s, a)?;
        Ok(self.expected_reward(s, a))
    }

    #[inline]
    pub(crate) fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.reward_sa[s * self.n_actions + a]
    }

    fn check_index(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::IndexOutOfRange(format!("state {s} of {}", self.n_states)));
        }
        if a >= self.n_actions {
            return Err(Error::IndexOutOfRange(format!("action {a} of {}", self.n_actions)));
        }
        Ok(())
    }

    /// Total self-transition mass `Σ_{s,a} P[s][a][s]`.
    pub fn self_transition_mass(&self) -> f64 {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.transition_prob(s, a, s))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ValidationIssue {
    RowSum { state: usize, action: usize, sum: f64 },
    ProbabilityRange { state: usize, action: usize, next: usize, p: f64 },
    NonFiniteReward { state: usize, action: usize, next: usize },
    DiscountRange { gamma: f64 },
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::RowSum { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            Self::ProbabilityRange { state, action, next, p } => {
                write!(f, "P[{state}][{action}][{next}] = {p} outside [0, 1]")
            }
            Self::NonFiniteReward { state, action, next } => {
                write!(f, "r[{state}][{action}][{next}] is not finite")
            }
            Self::DiscountRange { gamma } => write!(f, "discount {gamma} outside [0, 1)"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Lists every violated invariant of `m`. An empty report means valid.
pub fn validate_mdp(m: &Mdp) -> ValidationReport {
    let mut issues = Vec::new();
    if !(0.0..1.0).contains(&m.gamma) {
        issues.push(ValidationIssue::DiscountRange { gamma: m.gamma });
    }
    for s in 0..m.n_states {
        for a in 0..m.n_actions {
            let row = m.transition_row(s, a);
            for (next, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    issues.push(ValidationIssue::ProbabilityRange { state: s, action: a, next, p });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= SIMPLEX_TOL) {
                issues.push(ValidationIssue::RowSum { state: s, action: a, sum });
            }
            for (next, r) in m.reward_row(s, a).iter().enumerate() {
                if !r.is_finite() {
                    issues.push(ValidationIssue::NonFiniteReward { state: s, action: a, next });
                }
            }
        }
    }
    ValidationReport { issues }
}

/// A stochastic policy `π[s][a]`; each row lies on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidPolicy("empty policy".into()));
        }
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.into_iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::InvalidPolicy(format!(
                    "row {s} has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidPolicy(format!("row {s} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {sum}")));
            }
            probs.extend(row);
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        assert!(n_states > 0 && n_actions > 0, "policy dimensions must be positive");
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// One-hot policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        if actions.is_empty() || n_actions == 0 {
            return Err(Error::InvalidPolicy("empty policy".into()));
        }
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidPolicy(format!("action {a} in state {s} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    /// Random policy; roughly a third of the rows are one-hot.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> Self {
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states {
            if rng.gen_bool(1.0 / 3.0) {
                let pick = rng.gen_range(0..n_actions);
                probs.extend((0..n_actions).map(|a| if a == pick { 1.0 } else { 0.0 }));
            } else {
                let w: Vec<f64> = (0..n_actions).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let total: f64 = w.iter().sum();
                probs.extend(w.into_iter().map(|x| x / total));
            }
        }
        Self { n_states, n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// The chosen action of every state if the policy is deterministic.
    pub fn actions(&self) -> Option<Vec<usize>> {
        (0..self.n_states)
            .map(|s| {
                let row = self.row(s);
                let a = row.iter().position(|&p| p == 1.0)?;
                row.iter()
                    .enumerate()
                    .all(|(b, &p)| b == a || p == 0.0)
                    .then_some(a)
            })
            .collect()
    }

    pub(crate) fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.n_states != n_states || self.n_actions != n_actions {
            return Err(Error::shape(
                format!("policy {n_states}x{n_actions}"),
                format!("{}x{}", self.n_states, self.n_actions),
            ));
        }
        Ok(())
    }
}

/// Index of the largest entry; ties go to the lowest index.
#[inline]
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Deterministic greedy policy with lowest-index tie-breaking.
pub fn greedy_policy(q: &QTable) -> Policy {
    let actions: Vec<usize> = (0..q.n_states()).map(|s| argmax(&q.row(s))).collect();
    Policy::deterministic(&actions, q.n_actions()).expect("argmax is always in range")
}

/// `v[s] = Σ_a π[s][a] · q[s][a]`.
pub fn state_values_from_q(q: &QTable, pi: &Policy) -> Result<VTable> {
    pi.check_shape(q.n_states(), q.n_actions())?;
    let values = (0..q.n_states())
        .map(|s| policy_average(&q.row(s), pi.row(s)))
        .collect();
    Ok(VTable::new(values))
}

#[inline]
pub(crate) fn policy_average(q_row: &[f64], pi_row: &[f64]) -> f64 {
    q_row.iter().zip(pi_row).map(|(q, p)| p * q).sum()
}

/// `A[s][a] = q[s][a] − Σ_b π[s][b] · q[s][b]`.
pub fn advantage(q: &QTable, pi: &Policy) -> Result<QTable> {
    let v = state_values_from_q(q, pi)?;
    let mut out = QTable::zeros(q.n_states(), q.n_actions());
    for s in 0..q.n_states() {
        for (a, x) in q.row(s).iter().enumerate() {
            out.set(s, a, x - v[s]);
        }
    }
    Ok(out)
}

/// `max |f − g|` over all entries.
pub fn sup_norm_distance<T: ValueTable>(f: &T, g: &T) -> Result<f64> {
    f.sup_distance(g)
}

/// Random valid MDP. Rows are sparse at random (each successor kept with
/// probability 1/2, at least one kept) so self-loops and absorbing
/// transitions both occur. Rewards are uniform in `reward_range`.
pub fn random_mdp(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    reward_range: (f64, f64),
    gamma: f64,
) -> Result<Mdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument("random_mdp needs at least one state and action".into()));
    }
    let (lo, hi) = reward_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidArgument(format!("bad reward range ({lo}, {hi})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = n_states * n_actions * n_states;
    let mut transition = Vec::with_capacity(len);
    for _ in 0..n_states * n_actions {
        let mut w: Vec<f64> = (0..n_states)
            .map(|_| if rng.gen_bool(0.5) { rng.gen::<f64>() + 1e-3 } else { 0.0 })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            w[rng.gen_range(0..n_states)] = 1.0;
        }
        let total: f64 = w.iter().sum();
        transition.extend(w.into_iter().map(|x| x / total));
    }
    let reward = (0..len)
        .map(|_| if lo == hi { lo } else { rng.gen_range(lo..hi) })
        .collect();
    Mdp::new(n_states, n_actions, transition, reward, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Mdp {
        Mdp::from_nested(
            &[
                vec![vec![1.0, 0.0], vec![0.5, 0.5]],
                vec![vec![0.0, 1.0], vec![0.3, 0.7]],
            ],
            &[
                vec![vec![5.0, 0.0], vec![2.0, 4.0]],
                vec![vec![0.0, 1.0], vec![1.0, -1.0]],
            ],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn valid_two_state_has_empty_report() {
        assert!(validate_mdp(&two_state()).is_valid());
    }

    #[test]
    fn row_sum_violation_is_located() {
        let p = vec![0.5, 0.6, 0.5, 0.5];
        let m = Mdp::from_parts(2, 1, p, vec![0.0; 4], 0.9).unwrap();
        let report = validate_mdp(&m);
        assert_eq!(report.issues.len(), 1);
        match report.issues[0] {
            ValidationIssue::RowSum { state, action, sum } => {
                assert_eq!((state, action), (0, 0));
                assert!((sum - 1.1).abs() < 1e-12);
            }
            ref other => panic!("unexpected issue {other:?}"),
        }
    }

    #[test]
    fn discount_of_one_is_rejected() {
        let m = Mdp::from_parts(1, 1, vec![1.0], vec![0.0], 1.0).unwrap();
        let report = validate_mdp(&m);
        assert_eq!(report.issues, vec![ValidationIssue::DiscountRange { gamma: 1.0 }]);
        assert!(Mdp::new(1, 1, vec![1.0], vec![0.0], 1.0).is_err());
    }

    #[test]
    fn negative_probability_and_nan_reward_reported() {
        let m = Mdp::from_parts(2, 1, vec![1.5, -0.5, 0.0, 1.0], vec![f64::NAN, 0.0, 0.0, 0.0], 0.5)
            .unwrap();
        let report = validate_mdp(&m);
        assert_eq!(report.issues.len(), 3);
    }

    #[test]
    fn reward_sa_examples() {
        let m = two_state();
        assert_eq!(m.reward_sa(0, 0).unwrap(), 5.0);
        assert_eq!(m.reward_sa(0, 1).unwrap(), 3.0);
        assert!(m.reward_sa(2, 0).is_err());
        assert!(m.reward_sa(0, 2).is_err());
    }

    #[test]
    fn reward_sa_matches_summation_oracle() {
        let m = random_mdp(7, 4, 3, (-5.0, 5.0), 0.9).unwrap();
        for s in 0..4 {
            for a in 0..3 {
                let mut oracle = 0.0;
                for next in 0..4 {
                    oracle += m.transition_prob(s, a, next) * m.reward_sas(s, a, next);
                }
                assert!((m.reward_sa(s, a).unwrap() - oracle).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn greedy_examples() {
        let q = QTable::from_rows(&[vec![1.0, 3.0, 2.0], vec![2.0, 2.0, 0.0]]).unwrap();
        let pi = greedy_policy(&q);
        assert_eq!(pi.actions(), Some(vec![1, 0]));
        assert_eq!(pi.row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn state_values_examples() {
        let q = QTable::from_rows(&[vec![0.0, 4.0]]).unwrap();
        let uniform = Policy::uniform(1, 2);
        assert_eq!(state_values_from_q(&q, &uniform).unwrap()[0], 2.0);
        let one_hot = Policy::deterministic(&[1], 2).unwrap();
        assert_eq!(state_values_from_q(&q, &one_hot).unwrap()[0], 4.0);
        let wrong = Policy::uniform(2, 2);
        assert!(state_values_from_q(&q, &wrong).is_err());
    }

    #[test]
    fn advantage_examples() {
        let q = QTable::from_rows(&[vec![0.0, 4.0]]).unwrap();
        let a = advantage(&q, &Policy::uniform(1, 2)).unwrap();
        assert_eq!(a.row(0).as_ref(), &[-2.0, 2.0]);
        let greedy = advantage(&q, &greedy_policy(&q)).unwrap();
        assert_eq!(greedy.get(0, 1), 0.0);
        assert!(advantage(&q, &Policy::uniform(1, 3)).is_err());
    }

    #[test]
    fn sup_norm_examples() {
        let f = VTable::new(vec![1.0, -3.0, 2.0]);
        let zero = VTable::new(vec![0.0; 3]);
        assert_eq!(sup_norm_distance(&f, &f).unwrap(), 0.0);
        assert_eq!(sup_norm_distance(&f, &zero).unwrap(), 3.0);
        assert!(sup_norm_distance(&f, &VTable::new(vec![0.0; 2])).is_err());
    }

    #[test]
    fn random_mdp_is_deterministic_and_valid() {
        let a = random_mdp(1, 3, 2, (-1.0, 1.0), 0.9).unwrap();
        let b = random_mdp(1, 3, 2, (-1.0, 1.0), 0.9).unwrap();
        assert_eq!(a, b);
        assert!(validate_mdp(&a).is_valid());
        for s in 0..3 {
            for act in 0..2 {
                let sum: f64 = a.transition_row(s, act).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
        assert!(random_mdp(1, 0, 2, (-1.0, 1.0), 0.9).is_err());
    }

    #[test]
    fn policy_rejects_bad_rows() {
        assert!(Policy::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(Policy::new(vec![vec![1.5, -0.5]]).is_err());
        assert!(Policy::new(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
        assert!(Policy::deterministic(&[3], 2).is_err());
    }
}
