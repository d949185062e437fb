//! Bellman-type operators on value tables.
//!
//! All operators are pure: they read the input table and return a fresh one.
//! Expectations are summed over successors in ascending order, and within a
//! successor over actions in ascending order, so results are reproducible
//! bit for bit.

mod beta;

pub use beta::BetaSchedule;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mdp::{argmax, policy_average, Mdp, Policy, QTable, VTable, ValueTable};

fn check_q(m: &Mdp, q: &QTable) -> Result<()> {
    if q.n_states() != m.n_states() || q.n_actions() != m.n_actions() {
        return Err(Error::shape(
            format!("q table {}x{}", m.n_states(), m.n_actions()),
            format!("{}x{}", q.n_states(), q.n_actions()),
        ));
    }
    Ok(())
}

#[inline]
fn row_max(row: &[f64]) -> f64 {
    row[argmax(row)]
}

/// `out[s] = max_a [ r(s,a) + γ Σ_{s'} P[s][a][s'] v[s'] ]`.
pub fn apply_optimality_v(m: &Mdp, v: &VTable) -> Result<VTable> {
    if v.len() != m.n_states() {
        return Err(Error::shape(format!("v table of {}", m.n_states()), v.len()));
    }
    let out = (0..m.n_states())
        .map(|s| {
            (0..m.n_actions())
                .map(|a| {
                    let future: f64 = m
                        .transition_row(s, a)
                        .iter()
                        .zip(v.values())
                        .map(|(p, x)| p * x)
                        .sum();
                    m.expected_reward(s, a) + m.gamma() * future
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(VTable::new(out))
}

/// Applies `r(s,a) + γ Σ_{s'} P[s][a][s'] · next_value(s, a, s')` entrywise.
fn backup(m: &Mdp, next_value: impl Fn(usize, usize, usize) -> f64) -> QTable {
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut values = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let future: f64 = m
                .transition_row(s, a)
                .iter()
                .enumerate()
                .map(|(next, p)| p * next_value(s, a, next))
                .sum();
            values.push(m.expected_reward(s, a) + m.gamma() * future);
        }
    }
    QTable::from_vec(ns, na, values).expect("shape matches the MDP")
}

/// `out[s][a] = r(s,a) + γ Σ_{s'} P[s][a][s'] max_{a'} q[s'][a']`.
pub fn apply_optimality_q(m: &Mdp, q: &QTable) -> Result<QTable> {
    check_q(m, q)?;
    let maxes: Vec<f64> = (0..m.n_states()).map(|s| row_max(q.row(s))).collect();
    Ok(backup(m, |_, _, next| maxes[next]))
}

/// `out[s][a] = r(s,a) + γ Σ_{s'} P[s][a][s'] Σ_{a'} π[s'][a'] q[s'][a']`.
pub fn apply_expectation_q(m: &Mdp, pi: &Policy, q: &QTable) -> Result<QTable> {
    check_q(m, q)?;
    pi.check_shape(m.n_states(), m.n_actions())?;
    let means: Vec<f64> = (0..m.n_states())
        .map(|s| policy_average(q.row(s), pi.row(s)))
        .collect();
    Ok(backup(m, |_, _, next| means[next]))
}

/// Consistent operator: a self-transition bootstraps from `q[s][a]` itself
/// instead of the successor's maximum.
///
/// `out[s][a] = r(s,a) + γ Σ_{s'} P[s][a][s'] [ 1{s'≠s} max_{a'} q[s'][a'] + 1{s'=s} q[s][a] ]`.
pub fn apply_consistent(m: &Mdp, q: &QTable) -> Result<QTable> {
    check_q(m, q)?;
    let maxes: Vec<f64> = (0..m.n_states()).map(|s| row_max(q.row(s))).collect();
    Ok(backup(m, |s, a, next| if next == s { q.get(s, a) } else { maxes[next] }))
}

/// Expectation operator plus `β (q[s][a] − Σ_b π[s][b] q[s][b])`.
///
/// With `β = 0` this returns exactly [`apply_expectation_q`].
pub fn apply_advantage(m: &Mdp, pi: &Policy, q: &QTable, beta: f64) -> Result<QTable> {
    if !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be finite, got {beta}")));
    }
    let mut out = apply_expectation_q(m, pi, q)?;
    if beta == 0.0 {
        return Ok(out);
    }
    for s in 0..m.n_states() {
        let row = q.row(s);
        let v = policy_average(row, pi.row(s));
        for (o, x) in out.row_mut(s).iter_mut().zip(row) {
            *o += beta * (x - v);
        }
    }
    Ok(out)
}

/// A value-function operator over a fixed MDP.
pub trait BellmanOperator {
    type Table: ValueTable;

    fn apply(&self, m: &Mdp, f: &Self::Table) -> Result<Self::Table>;

    /// Nominal sup-norm contraction factor, `None` when the operator is not
    /// a contraction in general.
    fn contraction_factor(&self, m: &Mdp) -> Option<f64>;

    /// The advantage coefficient, for operators that carry one.
    fn beta(&self) -> Option<f64> {
        None
    }
}

/// Tag naming one of the five operators, as used by the CLI and configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorTag {
    OptimalityV,
    OptimalityQ,
    ExpectationQ,
    Consistent,
    Advantage,
}

impl OperatorTag {
    pub const ALL: [OperatorTag; 5] = [
        Self::OptimalityV,
        Self::OptimalityQ,
        Self::ExpectationQ,
        Self::Consistent,
        Self::Advantage,
    ];

    /// The four operators that are γ-contractions.
    pub const CONTRACTIONS: [OperatorTag; 4] =
        [Self::OptimalityV, Self::OptimalityQ, Self::ExpectationQ, Self::Consistent];

    pub fn name(self) -> &'static str {
        match self {
            Self::OptimalityV => "optimality-v",
            Self::OptimalityQ => "optimality-q",
            Self::ExpectationQ => "expectation-q",
            Self::Consistent => "consistent",
            Self::Advantage => "advantage",
        }
    }

    pub fn needs_policy(self) -> bool {
        matches!(self, Self::ExpectationQ | Self::Advantage)
    }
}

impl fmt::Display for OperatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown operator '{s}' (expected optimality-v | optimality-q | expectation-q | consistent | advantage)"
                ))
            })
    }
}

/// A fully specified operator. Policy-dependent kinds carry their policy and
/// the advantage kind carries a finite `β ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    OptimalityV,
    OptimalityQ,
    ExpectationQ(Policy),
    Consistent,
    Advantage { policy: Policy, beta: f64 },
}

impl OperatorKind {
    pub fn advantage(policy: Policy, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")));
        }
        Ok(Self::Advantage { policy, beta })
    }

    /// Builds the operator named by `tag`, supplying `policy` and `beta`
    /// where the kind needs them.
    pub fn from_tag(tag: OperatorTag, policy: Option<Policy>, beta: Option<f64>) -> Result<Self> {
        let need_policy = || {
            policy
                .clone()
                .ok_or_else(|| Error::InvalidArgument(format!("{tag} requires a policy")))
        };
        match tag {
            OperatorTag::OptimalityV => Ok(Self::OptimalityV),
            OperatorTag::OptimalityQ => Ok(Self::OptimalityQ),
            OperatorTag::Consistent => Ok(Self::Consistent),
            OperatorTag::ExpectationQ => Ok(Self::ExpectationQ(need_policy()?)),
            OperatorTag::Advantage => Self::advantage(need_policy()?, beta.unwrap_or(0.0)),
        }
    }

    pub fn tag(&self) -> OperatorTag {
        match self {
            Self::OptimalityV => OperatorTag::OptimalityV,
            Self::OptimalityQ => OperatorTag::OptimalityQ,
            Self::ExpectationQ(_) => OperatorTag::ExpectationQ,
            Self::Consistent => OperatorTag::Consistent,
            Self::Advantage { .. } => OperatorTag::Advantage,
        }
    }

    pub fn policy(&self) -> Option<&Policy> {
        match self {
            Self::ExpectationQ(pi) | Self::Advantage { policy: pi, .. } => Some(pi),
            _ => None,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            Self::Advantage { beta, .. } => Some(*beta),
            _ => None,
        }
    }

    pub fn contraction_factor(&self, m: &Mdp) -> Option<f64> {
        match self {
            Self::Advantage { beta, .. } if *beta != 0.0 => None,
            _ => Some(m.gamma()),
        }
    }

    /// Whether the operator acts on state values rather than action values.
    pub fn acts_on_v(&self) -> bool {
        matches!(self, Self::OptimalityV)
    }

    /// Applies a Q-operator. Errors for [`OperatorKind::OptimalityV`].
    pub fn apply_q(&self, m: &Mdp, q: &QTable) -> Result<QTable> {
        match self {
            Self::OptimalityV => Err(Error::InvalidArgument(
                "optimality-v acts on state values, not action values".into(),
            )),
            Self::OptimalityQ => apply_optimality_q(m, q),
            Self::ExpectationQ(pi) => apply_expectation_q(m, pi, q),
            Self::Consistent => apply_consistent(m, q),
            Self::Advantage { policy, beta } => apply_advantage(m, policy, q, *beta),
        }
    }
}

/// Adapter running a Q-valued [`OperatorKind`] through [`BellmanOperator`].
#[derive(Clone, Debug)]
pub struct QOperator(OperatorKind);

impl QOperator {
    pub fn new(kind: OperatorKind) -> Result<Self> {
        if kind.acts_on_v() {
            return Err(Error::InvalidArgument("optimality-v is not a Q-operator".into()));
        }
        Ok(Self(kind))
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.0
    }
}

impl BellmanOperator for QOperator {
    type Table = QTable;

    fn apply(&self, m: &Mdp, f: &QTable) -> Result<QTable> {
        self.0.apply_q(m, f)
    }

    fn contraction_factor(&self, m: &Mdp) -> Option<f64> {
        self.0.contraction_factor(m)
    }

    fn beta(&self) -> Option<f64> {
        self.0.beta()
    }
}

/// The state-value optimality operator.
#[derive(Clone, Copy, Debug, Default)]
pub struct OptimalityV;

impl BellmanOperator for OptimalityV {
    type Table = VTable;

    fn apply(&self, m: &Mdp, f: &VTable) -> Result<VTable> {
        apply_optimality_v(m, f)
    }

    fn contraction_factor(&self, m: &Mdp) -> Option<f64> {
        Some(m.gamma())
    }
}
