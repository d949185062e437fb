//! Randomized, replayable checks of operator properties: contraction,
//! monotonicity, non-contraction of the advantage operator, optimality
//! preservation and gap increase.
//!
//! Every violation carries the full instance (MDP document, policy, tables,
//! β) so [`Witness::replay`] can re-evaluate it from scratch.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dp::{value_iteration, DEFAULT_MAX_ITERS};
use crate::error::{Error, Result};
use crate::mdp::{
    greedy_policy, parse_mdp, random_mdp, state_values_from_q, write_mdp, Mdp, Policy, QTable,
    VTable, ValueTable,
};
use crate::operators::{
    apply_advantage, apply_optimality_q, apply_optimality_v, BetaSchedule, OperatorKind,
    OperatorTag,
};
use crate::seed::{split_seed, stream_rng};

pub const CONTRACTION_SLACK: f64 = 1e-10;
pub const MONOTONICITY_SLACK: f64 = 1e-12;
pub const REPLAY_TOL: f64 = 1e-12;
/// Margin below `V` for an action to count as strictly suboptimal.
pub const SUBOPTIMAL_MARGIN: f64 = 1e-6;
pub const GAP_SLACK: f64 = 1e-8;
/// Residual both paired sequences must reach before their last iterate is
/// treated as the limit.
pub const LIMIT_GATE: f64 = 1e-8;

pub const MAX_STATES: usize = 10;
pub const MAX_ACTIONS: usize = 4;
pub const TABLE_RANGE: f64 = 100.0;
const REWARD_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A replayable record of one measured inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub trial: usize,
    /// Seed the instance was generated from, when it was generated.
    pub mdp_seed: Option<u64>,
    /// The instance in the plain-text MDP format.
    pub mdp: String,
    pub operator: String,
    pub policy: Option<Vec<Vec<f64>>>,
    pub beta: Option<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub state: usize,
    pub action: Option<usize>,
    /// The side of the inequality that was too large.
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub operator: Option<String>,
    pub trials: usize,
    pub violations: Vec<Witness>,
    pub inconclusive: usize,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl PropertyReport {
    fn from_trials(property: &str, operator: Option<String>, trials: usize, violations: Vec<Witness>) -> Self {
        let verdict = if violations.is_empty() { Verdict::Pass } else { Verdict::Fail };
        Self {
            property: property.into(),
            operator,
            trials,
            violations,
            inconclusive: 0,
            verdict,
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

struct Instance {
    seed: u64,
    mdp: Mdp,
    policy: Policy,
}

fn draw_instance(rng: &mut ChaCha8Rng, trial_seed: u64, min_actions: usize, gamma: Option<f64>) -> Result<Instance> {
    let ns = rng.gen_range(1..=MAX_STATES);
    let na = rng.gen_range(min_actions..=MAX_ACTIONS);
    let gamma = gamma.unwrap_or_else(|| rng.gen_range(0.0..0.99));
    let mdp = random_mdp(trial_seed, ns, na, REWARD_RANGE, gamma)?;
    let policy = Policy::random(rng, ns, na);
    Ok(Instance { seed: trial_seed, mdp, policy })
}

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-TABLE_RANGE..TABLE_RANGE)).collect()
}

fn policy_rows(pi: &Policy) -> Vec<Vec<f64>> {
    (0..pi.n_states()).map(|s| pi.row(s).to_vec()).collect()
}

/// Applies the operator named by `tag` to a flat table.
fn apply_flat(tag: OperatorTag, m: &Mdp, pi: &Policy, beta: f64, f: &[f64]) -> Result<Vec<f64>> {
    if tag == OperatorTag::OptimalityV {
        return Ok(apply_optimality_v(m, &VTable::new(f.to_vec()))?.values().to_vec());
    }
    let kind = OperatorKind::from_tag(tag, Some(pi.clone()), Some(beta))?;
    let q = QTable::from_vec(m.n_states(), m.n_actions(), f.to_vec())?;
    Ok(kind.apply_q(m, &q)?.dense_values().expect("operators return dense tables").to_vec())
}

fn table_len(tag: OperatorTag, m: &Mdp) -> usize {
    if tag == OperatorTag::OptimalityV {
        m.n_states()
    } else {
        m.n_states() * m.n_actions()
    }
}

fn locate(tag: OperatorTag, m: &Mdp, idx: usize) -> (usize, Option<usize>) {
    if tag == OperatorTag::OptimalityV {
        (idx, None)
    } else {
        (idx / m.n_actions(), Some(idx % m.n_actions()))
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> (f64, usize) {
    a.iter()
        .zip(b)
        .enumerate()
        .fold((0.0, 0), |(best, at), (i, (x, y))| {
            let d = (x - y).abs();
            if d > best { (d, i) } else { (best, at) }
        })
}

/// `(‖Tu − Tv‖, γ‖u − v‖, argmax index)` for a pair of flat tables.
fn contraction_sides(tag: OperatorTag, m: &Mdp, pi: &Policy, beta: f64, u: &[f64], v: &[f64]) -> Result<(f64, f64, usize)> {
    let tu = apply_flat(tag, m, pi, beta, u)?;
    let tv = apply_flat(tag, m, pi, beta, v)?;
    let (lhs, at) = sup_diff(&tu, &tv);
    let (dist, _) = sup_diff(u, v);
    Ok((lhs, m.gamma() * dist, at))
}

fn validate_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    Ok(())
}

/// Draws random instances (≤ 10 states, ≤ 4 actions) and random table pairs
/// in `[−100, 100]`, and checks `‖Tu − Tv‖ ≤ γ‖u − v‖ + 1e-10`.
///
/// `beta` is only used by the advantage operator.
pub fn check_contraction(tag: OperatorTag, beta: f64, trials: usize, seed: u64) -> Result<PropertyReport> {
    validate_trials(trials)?;
    let mut violations = Vec::new();
    for trial in 0..trials {
        let trial_seed = split_seed(seed, trial as u64);
        let mut rng = stream_rng(trial_seed, 1);
        let inst = draw_instance(&mut rng, trial_seed, 1, None)?;
        let n = table_len(tag, &inst.mdp);
        let u = random_values(&mut rng, n);
        let v = if rng.gen_ratio(1, 20) { u.clone() } else { random_values(&mut rng, n) };
        let (lhs, rhs, at) = contraction_sides(tag, &inst.mdp, &inst.policy, beta, &u, &v)?;
        if lhs > rhs + CONTRACTION_SLACK {
            let (state, action) = locate(tag, &inst.mdp, at);
            violations.push(Witness {
                trial,
                mdp_seed: Some(inst.seed),
                mdp: write_mdp(&inst.mdp),
                operator: tag.name().into(),
                policy: tag.needs_policy().then(|| policy_rows(&inst.policy)),
                beta: (tag == OperatorTag::Advantage).then_some(beta),
                u,
                v,
                state,
                action,
                lhs,
                rhs,
            });
        }
    }
    Ok(PropertyReport::from_trials("contraction", Some(tag.name().into()), trials, violations))
}

/// Draws random `u` and `v = u + d` with `d ≥ 0`, and checks `Tu ≤ Tv`
/// entrywise within 1e-12.
pub fn check_monotonicity(tag: OperatorTag, beta: f64, trials: usize, seed: u64) -> Result<PropertyReport> {
    validate_trials(trials)?;
    let mut violations = Vec::new();
    for trial in 0..trials {
        let trial_seed = split_seed(seed, trial as u64);
        let mut rng = stream_rng(trial_seed, 2);
        let inst = draw_instance(&mut rng, trial_seed, 1, None)?;
        let n = table_len(tag, &inst.mdp);
        let u = random_values(&mut rng, n);
        let identical = rng.gen_ratio(1, 20);
        let v: Vec<f64> = u
            .iter()
            .map(|x| {
                if identical || rng.gen_ratio(1, 3) {
                    *x
                } else {
                    x + rng.gen_range(0.0..TABLE_RANGE / 2.0)
                }
            })
            .collect();
        let tu = apply_flat(tag, &inst.mdp, &inst.policy, beta, &u)?;
        let tv = apply_flat(tag, &inst.mdp, &inst.policy, beta, &v)?;
        let worst = tu
            .iter()
            .zip(&tv)
            .enumerate()
            .filter(|(_, (a, b))| **a > **b + MONOTONICITY_SLACK)
            .max_by(|x, y| (x.1 .0 - x.1 .1).total_cmp(&(y.1 .0 - y.1 .1)));
        if let Some((at, (&lhs, &rhs))) = worst {
            let (state, action) = locate(tag, &inst.mdp, at);
            violations.push(Witness {
                trial,
                mdp_seed: Some(inst.seed),
                mdp: write_mdp(&inst.mdp),
                operator: tag.name().into(),
                policy: tag.needs_policy().then(|| policy_rows(&inst.policy)),
                beta: (tag == OperatorTag::Advantage).then_some(beta),
                u,
                v,
                state,
                action,
                lhs,
                rhs,
            });
        }
    }
    Ok(PropertyReport::from_trials("monotonicity", Some(tag.name().into()), trials, violations))
}

/// Searches for `(MDP, π, u, v)` with `‖T_a u − T_a v‖ > γ‖u − v‖` for the
/// advantage operator with coefficient `beta` and discount `gamma`, stopping
/// at the first witness.
///
/// A found witness gives verdict `Pass` (non-contraction demonstrated); an
/// exhausted budget gives `Inconclusive`. With `beta = 0` no witness exists.
pub fn find_noncontraction_witness(beta: f64, gamma: f64, trials: usize, seed: u64) -> Result<PropertyReport> {
    validate_trials(trials)?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let tag = OperatorTag::Advantage;
    let mut attempted = 0;
    let mut witnesses = Vec::new();
    for trial in 0..trials {
        attempted += 1;
        let trial_seed = split_seed(seed, trial as u64);
        let mut rng = stream_rng(trial_seed, 3);
        let inst = draw_instance(&mut rng, trial_seed, 2, Some(gamma))?;
        let n = table_len(tag, &inst.mdp);
        let u = random_values(&mut rng, n);
        let v = random_values(&mut rng, n);
        let (lhs, rhs, at) = contraction_sides(tag, &inst.mdp, &inst.policy, beta, &u, &v)?;
        if lhs > rhs + CONTRACTION_SLACK {
            let (state, action) = locate(tag, &inst.mdp, at);
            witnesses.push(Witness {
                trial,
                mdp_seed: Some(inst.seed),
                mdp: write_mdp(&inst.mdp),
                operator: tag.name().into(),
                policy: Some(policy_rows(&inst.policy)),
                beta: Some(beta),
                u,
                v,
                state,
                action,
                lhs,
                rhs,
            });
            break;
        }
    }
    let found = !witnesses.is_empty();
    Ok(PropertyReport {
        property: "noncontraction".into(),
        operator: Some(tag.name().into()),
        trials: attempted,
        violations: witnesses,
        inconclusive: usize::from(!found),
        verdict: if found { Verdict::Pass } else { Verdict::Inconclusive },
        notes: if found {
            Vec::new()
        } else {
            vec![format!("no witness in {attempted} trials (beta = {beta}, gamma = {gamma})")]
        },
    })
}

impl Witness {
    /// Re-evaluates the stored inequality from the stored instance and
    /// returns the freshly measured `(lhs, rhs)`.
    pub fn replay(&self) -> Result<(f64, f64)> {
        let m = parse_mdp(&self.mdp)?;
        let tag: OperatorTag = self.operator.parse()?;
        let pi = match &self.policy {
            Some(rows) => Policy::new(rows.clone())?,
            None => Policy::uniform(m.n_states(), m.n_actions()),
        };
        let beta = self.beta.unwrap_or(0.0);
        if self.u.len() != self.v.len() || self.u.len() != table_len(tag, &m) {
            return Err(Error::InvalidArgument("witness tables do not match the instance".into()));
        }
        let tu = apply_flat(tag, &m, &pi, beta, &self.u)?;
        let tv = apply_flat(tag, &m, &pi, beta, &self.v)?;
        let idx = match self.action {
            Some(a) => self.state * m.n_actions() + a,
            None => self.state,
        };
        // Contraction-type witnesses compare norms; monotonicity witnesses
        // compare the entries at the recorded cell.
        let (dist, _) = sup_diff(&self.u, &self.v);
        let (lhs_norm, _) = sup_diff(&tu, &tv);
        if (lhs_norm - self.lhs).abs() <= REPLAY_TOL && (m.gamma() * dist - self.rhs).abs() <= REPLAY_TOL {
            Ok((lhs_norm, m.gamma() * dist))
        } else {
            Ok((tu[idx], tv[idx]))
        }
    }

    /// Whether a replay reproduces the stored measurements within 1e-12.
    pub fn reproduces(&self) -> bool {
        self.replay()
            .map(|(l, r)| (l - self.lhs).abs() <= REPLAY_TOL && (r - self.rhs).abs() <= REPLAY_TOL)
            .unwrap_or(false)
    }
}

/// Final iterates of the paired classical / advantage sequences.
#[derive(Clone, Debug)]
pub struct PairedLimits {
    pub classical: QTable,
    pub advantage: QTable,
    pub iterations: usize,
    pub classical_residual: f64,
    pub advantage_residual: f64,
    pub gated: bool,
}

/// Runs `Q_b ← T* Q_b` and `Q_a ← T^{π} Q_a + β_k (Q_a − V_a)` from zero, with
/// `π` greedy w.r.t. the current `Q_a` and `β_k` from `schedule`.
///
/// Stops at `k_max`, or earlier once both residuals are below 1e-12 and
/// `β_k < 1e-13`, after which further iterates no longer move. The limits
/// are `gated` when both final residuals are below [`LIMIT_GATE`].
pub fn paired_iteration(m: &Mdp, schedule: &BetaSchedule, k_max: usize) -> Result<PairedLimits> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut qb = QTable::zeros(ns, na);
    let mut qa = QTable::zeros(ns, na);
    let (mut rb, mut ra) = (f64::INFINITY, f64::INFINITY);
    let mut k = 0;
    while k < k_max {
        let beta = schedule.beta_at(k as u64);
        let next_b = apply_optimality_q(m, &qb)?;
        let pi = greedy_policy(&qa);
        let next_a = apply_advantage(m, &pi, &qa, beta)?;
        rb = next_b.sup_distance(&qb)?;
        ra = next_a.sup_distance(&qa)?;
        qb = next_b;
        qa = next_a;
        k += 1;
        if !qa.is_finite() {
            break;
        }
        if rb <= 1e-12 && ra <= 1e-12 && schedule.beta_at(k as u64) < 1e-13 {
            break;
        }
    }
    Ok(PairedLimits {
        gated: rb < LIMIT_GATE && ra < LIMIT_GATE && qa.is_finite(),
        classical: qb,
        advantage: qa,
        iterations: k,
        classical_residual: rb,
        advantage_residual: ra,
    })
}

fn gaps(q: &QTable) -> Result<QTable> {
    let v = state_values_from_q(q, &greedy_policy(q))?;
    let mut out = q.clone();
    for s in 0..q.n_states() {
        for x in out.row_mut(s) {
            *x -= v[s];
        }
    }
    Ok(out)
}

fn limit_witness(m: &Mdp, schedule: &BetaSchedule, state: usize, action: usize, lhs: f64, rhs: f64, op: &str) -> Witness {
    Witness {
        trial: 0,
        mdp_seed: None,
        mdp: write_mdp(m),
        operator: op.into(),
        policy: None,
        beta: Some(schedule.beta0()),
        u: Vec::new(),
        v: Vec::new(),
        state,
        action: Some(action),
        lhs,
        rhs,
    }
}

fn inconclusive_report(property: &str, limits: &PairedLimits) -> PropertyReport {
    PropertyReport {
        property: property.into(),
        operator: Some("advantage".into()),
        trials: 1,
        violations: Vec::new(),
        inconclusive: 1,
        verdict: Verdict::Inconclusive,
        notes: vec![format!(
            "limit gate not met after {} iterations (classical residual {:e}, advantage residual {:e})",
            limits.iterations, limits.classical_residual, limits.advantage_residual
        )],
    }
}

/// Optimality preservation: wherever the classical limit has
/// `Q < V − 1e-6`, the advantage limit must have `Q < V`.
pub fn check_optimality_preservation(m: &Mdp, schedule: &BetaSchedule, k_max: usize) -> Result<PropertyReport> {
    let limits = paired_iteration(m, schedule, k_max)?;
    optimality_preservation_from(m, schedule, &limits)
}

fn optimality_preservation_from(m: &Mdp, schedule: &BetaSchedule, limits: &PairedLimits) -> Result<PropertyReport> {
    const NAME: &str = "optimality-preservation";
    if !limits.gated {
        return Ok(inconclusive_report(NAME, limits));
    }
    let gb = gaps(&limits.classical)?;
    let ga = gaps(&limits.advantage)?;
    let mut violations = Vec::new();
    for s in 0..m.n_states() {
        for a in 0..m.n_actions() {
            if gb.get(s, a) < -SUBOPTIMAL_MARGIN && ga.get(s, a) >= 0.0 {
                violations.push(limit_witness(m, schedule, s, a, ga.get(s, a), 0.0, "advantage"));
            }
        }
    }
    let mut report = PropertyReport::from_trials(NAME, Some("advantage".into()), 1, violations);
    report.notes.push(format!("limit taken at iteration {}", limits.iterations));
    Ok(report)
}

/// Gap increase: `|Q_b − V_b| ≤ |Q_a − V_a| + 1e-8` at every `(s, a)` of the
/// paired limits.
pub fn check_gap_increasing(m: &Mdp, schedule: &BetaSchedule, k_max: usize) -> Result<PropertyReport> {
    let limits = paired_iteration(m, schedule, k_max)?;
    gap_increasing_from(m, schedule, &limits)
}

fn gap_increasing_from(m: &Mdp, schedule: &BetaSchedule, limits: &PairedLimits) -> Result<PropertyReport> {
    const NAME: &str = "gap-increasing";
    if !limits.gated {
        return Ok(inconclusive_report(NAME, limits));
    }
    let gb = gaps(&limits.classical)?;
    let ga = gaps(&limits.advantage)?;
    let mut violations = Vec::new();
    for s in 0..m.n_states() {
        for a in 0..m.n_actions() {
            let (b, adv) = (gb.get(s, a).abs(), ga.get(s, a).abs());
            if b > adv + GAP_SLACK {
                violations.push(limit_witness(m, schedule, s, a, b, adv, "advantage"));
            }
        }
    }
    let mut report = PropertyReport::from_trials(NAME, Some("advantage".into()), 1, violations);
    report.notes.push(format!("limit taken at iteration {}", limits.iterations));
    Ok(report)
}

pub const DEFAULT_K_MAX: usize = 100_000;

/// Both well-behaving checks over `instances` random 5-state MDPs with
/// 2–4 actions and `γ ∈ [0.5, 0.95]`, using the default schedule
/// (geometric, `β₀ = γ`, `λ = 0.999`) unless `schedule` overrides it.
#[derive(Clone, Debug, Serialize)]
pub struct WellBehavingSummary {
    pub preservation: PropertyReport,
    pub gap: PropertyReport,
    /// Seeds of instances whose limits were not gated.
    pub inconclusive_seeds: Vec<u64>,
}

pub fn check_well_behaving_batch(
    instances: usize,
    seed: u64,
    schedule: Option<BetaSchedule>,
    k_max: usize,
) -> Result<WellBehavingSummary> {
    validate_trials(instances)?;
    let mut preservation = PropertyReport::from_trials("optimality-preservation", Some("advantage".into()), instances, Vec::new());
    let mut gap = PropertyReport::from_trials("gap-increasing", Some("advantage".into()), instances, Vec::new());
    let mut inconclusive_seeds = Vec::new();
    for trial in 0..instances {
        let trial_seed = split_seed(seed, trial as u64);
        let mut rng = stream_rng(trial_seed, 4);
        let na = rng.gen_range(2..=MAX_ACTIONS);
        let gamma = rng.gen_range(0.5..0.95);
        let m = random_mdp(trial_seed, 5, na, REWARD_RANGE, gamma)?;
        let sched = schedule.unwrap_or_else(|| BetaSchedule::default_for(gamma));
        let limits = paired_iteration(&m, &sched, k_max)?;
        if !limits.gated {
            inconclusive_seeds.push(trial_seed);
        }
        for (report, sub) in [
            (&mut preservation, optimality_preservation_from(&m, &sched, &limits)?),
            (&mut gap, gap_increasing_from(&m, &sched, &limits)?),
        ] {
            report.inconclusive += sub.inconclusive;
            report.violations.extend(sub.violations.into_iter().map(|mut w| {
                w.trial = trial;
                w.mdp_seed = Some(trial_seed);
                w
            }));
        }
    }
    for report in [&mut preservation, &mut gap] {
        report.verdict = if !report.violations.is_empty() {
            Verdict::Fail
        } else if report.inconclusive * 20 >= instances {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
        report.notes.push(format!("{} of {} instances inconclusive", report.inconclusive, instances));
    }
    Ok(WellBehavingSummary { preservation, gap, inconclusive_seeds })
}

/// Fixed points of the classical and consistent operators side by side.
#[derive(Clone, Debug)]
pub struct GapSummary {
    pub classical: QTable,
    pub consistent: QTable,
    pub sup_norm_difference: f64,
    /// Per state: do the two greedy policies pick the same action?
    pub greedy_agreement: Vec<bool>,
    pub agreement_rate: f64,
    pub policies_coincide: bool,
}

pub fn consistent_vs_classical_gap(m: &Mdp, tol: f64) -> Result<GapSummary> {
    let classical = value_iteration(m, tol, DEFAULT_MAX_ITERS)?;
    let op = crate::operators::QOperator::new(OperatorKind::Consistent)?;
    let consistent = crate::dp::fixed_point_iterate(
        &op,
        m,
        QTable::zeros(m.n_states(), m.n_actions()),
        tol,
        DEFAULT_MAX_ITERS,
    )?;
    let (classical, consistent) = (classical.table, consistent.table);
    let pc = greedy_policy(&classical).actions().expect("greedy policies are deterministic");
    let pk = greedy_policy(&consistent).actions().expect("greedy policies are deterministic");
    let greedy_agreement: Vec<bool> = pc.iter().zip(&pk).map(|(a, b)| a == b).collect();
    let agree = greedy_agreement.iter().filter(|x| **x).count();
    Ok(GapSummary {
        sup_norm_difference: classical.sup_distance(&consistent)?,
        agreement_rate: agree as f64 / m.n_states() as f64,
        policies_coincide: agree == m.n_states(),
        greedy_agreement,
        classical,
        consistent,
    })
}
