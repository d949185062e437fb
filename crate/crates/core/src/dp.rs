//! Fixed-point iteration with convergence traces, policy evaluation, policy
//! iteration, and an exact linear-solve oracle for `q_π`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{argmax, greedy_policy, Mdp, Policy, QTable, ValueTable};
use crate::operators::{apply_expectation_q, BellmanOperator, OperatorKind, QOperator};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Slack allowed on the geometric bound `‖f_n − f*‖ ≤ γⁿ ‖f_0 − f*‖`.
pub const RATE_BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Termination {
    Converged,
    MaxIters,
    /// An iterate contained a non-finite value.
    Diverged,
}

/// One entry per iterate `f_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `‖f_{k+1} − f_k‖_∞`.
    pub residual: f64,
    /// `‖f_k − f_final‖_∞`, filled in after the run; the final iterate
    /// stands in for the unknown fixed point.
    pub dist_to_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
    pub terminated: Termination,
}

impl IterationTrace {
    pub fn converged(&self) -> bool {
        self.terminated == Termination::Converged
    }

    /// Number of operator applications performed.
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.residual)
    }

    /// CSV with columns `iter,residual,dist_to_final`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,residual,dist_to_final\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.16e},{:.16e}\n", r.iteration, r.residual, r.dist_to_final));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct FixedPoint<T> {
    pub table: T,
    pub trace: IterationTrace,
}

impl<T> FixedPoint<T> {
    pub fn converged(&self) -> bool {
        self.trace.converged()
    }
}

/// Iterates `f_{k+1} = T f_k` until `‖T f_k − f_k‖_∞ ≤ tol` and returns that
/// `f_k`. Hitting `max_iters` is reported through the trace, not as an error,
/// since non-contracting operators may legitimately fail to settle.
pub fn fixed_point_iterate<O: BellmanOperator>(
    op: &O,
    m: &Mdp,
    f0: O::Table,
    tol: f64,
    max_iters: usize,
) -> Result<FixedPoint<O::Table>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let mut iterates = vec![f0];
    let mut residuals = Vec::new();
    let mut terminated = Termination::MaxIters;
    for _ in 0..max_iters {
        let current = iterates.last().expect("non-empty");
        let next = op.apply(m, current)?;
        let residual = next.sup_distance(current)?;
        residuals.push(residual);
        if residual <= tol {
            terminated = Termination::Converged;
            break;
        }
        if !next.is_finite() {
            iterates.push(next);
            terminated = Termination::Diverged;
            break;
        }
        iterates.push(next);
    }
    // When converged the last iterate is the f_k that passed the test and the
    // trace covers f_0..=f_k; otherwise it covers every iterate produced.
    let table = iterates.last().expect("non-empty").clone();
    let records = residuals
        .iter()
        .zip(&iterates)
        .enumerate()
        .map(|(k, (&residual, f))| {
            Ok(TraceRecord {
                iteration: k,
                residual,
                dist_to_final: f.sup_distance(&table)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FixedPoint {
        table,
        trace: IterationTrace { records, terminated },
    })
}

/// Fixed point of `q = r + γ P Π q` by Gaussian elimination with partial
/// pivoting on the `(S·A)`-dimensional system.
pub fn exact_q_pi(m: &Mdp, pi: &Policy) -> Result<QTable> {
    pi.check_shape(m.n_states(), m.n_actions())?;
    let (ns, na) = (m.n_states(), m.n_actions());
    let n = ns * na;
    // Augmented matrix [I − γ P Π | r], row-major with n + 1 columns.
    let w = n + 1;
    let mut a = vec![0.0; n * w];
    for s in 0..ns {
        for act in 0..na {
            let i = s * na + act;
            a[i * w + i] += 1.0;
            for (next, &p) in m.transition_row(s, act).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for b in 0..na {
                    a[i * w + next * na + b] -= m.gamma() * p * pi.prob(next, b);
                }
            }
            a[i * w + n] = m.expected_reward(s, act);
        }
    }
    let x = solve_augmented(&mut a, n)?;
    let q = QTable::from_vec(ns, na, x)?;
    let residual = apply_expectation_q(m, pi, &q)?.sup_distance(&q)?;
    debug_assert!(residual <= 1e-10 * (1.0 + q.abs_max()), "residual {residual}");
    Ok(q)
}

fn solve_augmented(a: &mut [f64], n: usize) -> Result<Vec<f64>> {
    let w = n + 1;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * w + col].abs().total_cmp(&a[j * w + col].abs()))
            .expect("non-empty range");
        if a[pivot * w + col].abs() < 1e-300 {
            return Err(Error::SingularSystem(col));
        }
        if pivot != col {
            for k in 0..w {
                a.swap(pivot * w + k, col * w + k);
            }
        }
        let d = a[col * w + col];
        for row in col + 1..n {
            let factor = a[row * w + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..w {
                a[row * w + k] -= factor * a[col * w + k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = a[row * w + n];
        for k in row + 1..n {
            acc -= a[row * w + k] * x[k];
        }
        x[row] = acc / a[row * w + row];
    }
    Ok(x)
}

/// Iterates the expectation operator for `pi` from the zero table.
pub fn policy_evaluation(m: &Mdp, pi: &Policy, tol: f64, max_iters: usize) -> Result<FixedPoint<QTable>> {
    let op = QOperator::new(OperatorKind::ExpectationQ(pi.clone()))?;
    fixed_point_iterate(&op, m, QTable::zeros(m.n_states(), m.n_actions()), tol, max_iters)
}

/// Value iteration on action values: the optimality operator from zero.
pub fn value_iteration(m: &Mdp, tol: f64, max_iters: usize) -> Result<FixedPoint<QTable>> {
    let op = QOperator::new(OperatorKind::OptimalityQ)?;
    fixed_point_iterate(&op, m, QTable::zeros(m.n_states(), m.n_actions()), tol, max_iters)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub eval_iterations: usize,
    pub changed_states: usize,
}

#[derive(Clone, Debug)]
pub struct PolicyIterationResult {
    pub policy: Policy,
    pub q: QTable,
    pub outer: Vec<OuterRecord>,
    pub converged: bool,
}

/// Alternates evaluation (to `tol`) and greedy improvement until the policy
/// stops changing.
///
/// Improvement keeps a state's current action when it is within `10·tol` of
/// the best, which stops evaluation noise from flipping near-tied actions
/// forever. Otherwise the greedy choice breaks ties toward the lowest index.
pub fn policy_iteration(m: &Mdp, pi0: &Policy, tol: f64, max_outer: usize) -> Result<PolicyIterationResult> {
    pi0.check_shape(m.n_states(), m.n_actions())?;
    let mut pi = pi0.clone();
    let mut outer = Vec::new();
    for iteration in 0..max_outer {
        let eval = policy_evaluation(m, &pi, tol, DEFAULT_MAX_ITERS)?;
        let q = eval.table;
        let current = pi.actions();
        let improved: Vec<usize> = (0..m.n_states())
            .map(|s| {
                let row = q.row(s);
                let best = argmax(row);
                match &current {
                    Some(acts) if row[acts[s]] >= row[best] - 10.0 * tol => acts[s],
                    _ => best,
                }
            })
            .collect();
        let changed_states = match &current {
            Some(acts) => acts.iter().zip(&improved).filter(|(a, b)| a != b).count(),
            None => m.n_states(),
        };
        outer.push(OuterRecord {
            iteration,
            eval_iterations: eval.trace.iterations(),
            changed_states,
        });
        if changed_states == 0 {
            return Ok(PolicyIterationResult { policy: pi, q, outer, converged: true });
        }
        pi = Policy::deterministic(&improved, m.n_actions())?;
    }
    let q = policy_evaluation(m, &pi, tol, DEFAULT_MAX_ITERS)?.table;
    Ok(PolicyIterationResult { policy: pi, q, outer, converged: false })
}

/// Greedy policy of the optimal action values, by value iteration.
pub fn optimal_policy(m: &Mdp, tol: f64) -> Result<Policy> {
    Ok(greedy_policy(&value_iteration(m, tol, DEFAULT_MAX_ITERS)?.table))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RateStatus {
    Checked,
    InsufficientData,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub status: RateStatus,
    /// Iterations at which `‖f_n − f*‖ > γⁿ ‖f_0 − f*‖ + slack`.
    pub violations: Vec<usize>,
    /// Least-squares slope of `ln ‖f_n − f*‖` against `n`.
    pub log_slope: Option<f64>,
}

impl RateReport {
    pub fn bound_holds(&self) -> bool {
        self.status == RateStatus::Checked && self.violations.is_empty()
    }

    pub fn empirical_rate(&self) -> Option<f64> {
        self.log_slope.map(f64::exp)
    }
}

/// Checks the geometric bound at every recorded iterate and fits the
/// empirical convergence rate.
///
/// The slope fit only uses distances well above the proxy error of the final
/// iterate, `res_K / (1 − γ)`, where the retroactive distance is reliable.
pub fn convergence_rate_check(trace: &IterationTrace, gamma: f64) -> RateReport {
    if trace.records.len() < 3 {
        return RateReport {
            status: RateStatus::InsufficientData,
            violations: Vec::new(),
            log_slope: None,
        };
    }
    let d0 = trace.records[0].dist_to_final;
    let violations = trace
        .records
        .iter()
        .filter(|r| r.dist_to_final > gamma.powi(r.iteration as i32) * d0 + RATE_BOUND_SLACK)
        .map(|r| r.iteration)
        .collect();

    let proxy_err = trace.final_residual() / (1.0 - gamma).max(1e-12);
    let floor = (100.0 * proxy_err).max(f64::MIN_POSITIVE);
    let points: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| r.dist_to_final > floor)
        .map(|r| (r.iteration as f64, r.dist_to_final.ln()))
        .collect();
    let log_slope = (points.len() >= 2).then(|| {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        sxy / sxx
    });
    RateReport {
        status: RateStatus::Checked,
        violations,
        log_slope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{random_mdp, VTable};
    use crate::operators::OptimalityV;

    fn absorbing(r: f64, gamma: f64) -> Mdp {
        Mdp::from_nested(&[vec![vec![1.0]]], &[vec![vec![r]]], gamma).unwrap()
    }

    #[test]
    fn absorbing_state_fixed_point() {
        let m = absorbing(1.0, 0.9);
        let fp = value_iteration(&m, 1e-10, DEFAULT_MAX_ITERS).unwrap();
        assert!(fp.converged());
        assert!((fp.table.get(0, 0) - 10.0).abs() < 1e-8);
    }

    #[test]
    fn starting_at_fixed_point_converges_immediately() {
        let m = absorbing(1.0, 0.5);
        let op = QOperator::new(OperatorKind::OptimalityQ).unwrap();
        let fp = fixed_point_iterate(&op, &m, QTable::filled(1, 1, 2.0), 1e-10, 10).unwrap();
        assert!(fp.converged());
        assert_eq!(fp.trace.iterations(), 1);
        assert!(fp.trace.final_residual() <= 1e-10);
    }

    #[test]
    fn invalid_arguments() {
        let m = absorbing(1.0, 0.5);
        let op = QOperator::new(OperatorKind::OptimalityQ).unwrap();
        assert!(fixed_point_iterate(&op, &m, QTable::zeros(1, 1), 0.0, 10).is_err());
        assert!(fixed_point_iterate(&op, &m, QTable::zeros(1, 1), 1e-3, 0).is_err());
    }

    #[test]
    fn max_iters_is_flagged_not_an_error() {
        let m = absorbing(1.0, 0.99);
        let fp = value_iteration(&m, 1e-10, 5).unwrap();
        assert!(!fp.converged());
        assert_eq!(fp.trace.iterations(), 5);
    }

    #[test]
    fn exact_q_pi_examples() {
        let m = absorbing(1.0, 0.5);
        let q = exact_q_pi(&m, &Policy::uniform(1, 1)).unwrap();
        assert!((q.get(0, 0) - 2.0).abs() < 1e-12);

        let m0 = random_mdp(3, 4, 2, (-1.0, 1.0), 0.0).unwrap();
        let q0 = exact_q_pi(&m0, &Policy::uniform(4, 2)).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                assert!((q0.get(s, a) - m0.reward_sa(s, a).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_q_pi_residual_is_tiny() {
        for seed in 0..30 {
            let m = random_mdp(seed, 8, 3, (-10.0, 10.0), 0.95).unwrap();
            let pi = Policy::random(&mut crate::seed::stream_rng(seed, 0), 8, 3);
            let q = exact_q_pi(&m, &pi).unwrap();
            let res = apply_expectation_q(&m, &pi, &q).unwrap().sup_distance(&q).unwrap();
            assert!(res <= 1e-10, "seed {seed}: residual {res}");
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let mut a = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        assert!(matches!(solve_augmented(&mut a, 2), Err(Error::SingularSystem(0))));
    }

    #[test]
    fn policy_evaluation_examples() {
        // Symmetric two-state MDP: equal rewards, swap or stay with equal odds.
        let p = vec![vec![vec![0.5, 0.5]; 2]; 2];
        let r = vec![vec![vec![1.0, 1.0]; 2]; 2];
        let m = Mdp::from_nested(&p, &r, 0.9).unwrap();
        let q = policy_evaluation(&m, &Policy::uniform(2, 2), 1e-12, DEFAULT_MAX_ITERS).unwrap().table;
        for s in 0..2 {
            for a in 0..2 {
                assert!((q.get(s, a) - q.get(0, 0)).abs() < 1e-9);
            }
        }

        let m0 = random_mdp(5, 3, 2, (-1.0, 1.0), 0.0).unwrap();
        let fp = policy_evaluation(&m0, &Policy::uniform(3, 2), 1e-10, 10).unwrap();
        assert!(fp.converged());
        assert!(fp.trace.iterations() <= 2);
        for s in 0..3 {
            for a in 0..2 {
                assert_eq!(fp.table.get(s, a), m0.reward_sa(s, a).unwrap());
            }
        }
    }

    #[test]
    fn dominant_action_policy_iteration() {
        // Action 1 pays 1 more than action 0 everywhere, same dynamics.
        let m = random_mdp(9, 4, 2, (0.0, 1.0), 0.9).unwrap();
        let mut p = Vec::new();
        let mut r = Vec::new();
        for s in 0..4 {
            let row = m.transition_row(s, 0).to_vec();
            p.push(vec![row.clone(), row]);
            r.push(vec![vec![0.0; 4], vec![1.0; 4]]);
        }
        let m = Mdp::from_nested(&p, &r, 0.9).unwrap();
        let res = policy_iteration(&m, &Policy::deterministic(&[0; 4], 2).unwrap(), 1e-10, 50).unwrap();
        assert!(res.converged);
        assert!(res.outer.len() <= 2);
        assert_eq!(res.policy.actions(), Some(vec![1; 4]));
    }

    #[test]
    fn policy_iteration_from_optimal_policy() {
        let m = random_mdp(17, 6, 3, (-5.0, 5.0), 0.9).unwrap();
        let pi_star = optimal_policy(&m, 1e-12).unwrap();
        let res = policy_iteration(&m, &pi_star, 1e-10, 50).unwrap();
        assert!(res.converged);
        assert_eq!(res.outer.len(), 1);
        assert_eq!(res.policy, pi_star);
    }

    #[test]
    fn policy_iteration_matches_value_iteration() {
        for seed in 0..20 {
            let m = random_mdp(seed, 6, 3, (-5.0, 5.0), 0.9).unwrap();
            let res = policy_iteration(&m, &Policy::uniform(6, 3), 1e-10, 100).unwrap();
            assert!(res.converged);
            let vi = value_iteration(&m, 1e-10, DEFAULT_MAX_ITERS).unwrap().table;
            assert!(res.q.sup_distance(&vi).unwrap() <= 1e-6, "seed {seed}");
            // Returned policy is greedy (up to tolerance) w.r.t. its own values.
            let acts = res.policy.actions().unwrap();
            for s in 0..6 {
                assert!(res.q.get(s, acts[s]) >= res.q.max_value(s) - 1e-9);
            }
        }
    }

    #[test]
    fn rate_check_examples() {
        let m = random_mdp(23, 5, 3, (-5.0, 5.0), 0.9).unwrap();
        let fp = value_iteration(&m, 1e-12, DEFAULT_MAX_ITERS).unwrap();
        let report = convergence_rate_check(&fp.trace, 0.9);
        assert!(report.bound_holds(), "{report:?}");
        assert!(report.log_slope.unwrap() <= 0.9f64.ln() + 0.05);

        let start = fp.table.clone();
        let op = QOperator::new(OperatorKind::OptimalityQ).unwrap();
        let again = fixed_point_iterate(&op, &m, start, 1e-10, 10).unwrap();
        let short = convergence_rate_check(&again.trace, 0.9);
        assert_eq!(short.status, RateStatus::InsufficientData);

        let v = fixed_point_iterate(&OptimalityV, &m, VTable::zeros(5), 1e-12, DEFAULT_MAX_ITERS).unwrap();
        assert!(convergence_rate_check(&v.trace, 0.9).bound_holds());
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let fp = value_iteration(&absorbing(1.0, 0.5), 1e-6, 100).unwrap();
        let csv = fp.trace.to_csv();
        assert!(csv.starts_with("iter,residual,dist_to_final\n"));
        assert_eq!(csv.lines().count(), fp.trace.iterations() + 1);
    }
}
