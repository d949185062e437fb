use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bellman_core::dp::{
    exact_q_pi, fixed_point_iterate, policy_iteration, FixedPoint, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use bellman_core::envs::{parse_bins, EnvKind};
use bellman_core::harness::{export_csv, render_plot, ExperimentSpec, LearningCurve, RunStatus};
use bellman_core::mdp::{greedy_policy, parse_mdp, Mdp, Policy, QTable, VTable};
use bellman_core::operators::{OperatorKind, OperatorTag, OptimalityV, QOperator};
use bellman_core::qlearning::OperatorVariant;
use bellman_core::verify::{
    check_contraction, check_monotonicity, check_well_behaving_batch, find_noncontraction_witness, PropertyReport,
    Verdict, DEFAULT_K_MAX,
};
use bellman_core::BetaSchedule;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bellman", version, about = "Bellman operators, exact solvers, property checks and tabular Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an MDP file with one operator.
    Solve(SolveArgs),
    /// Run a randomized property check.
    Verify(VerifyArgs),
    /// Train one operator variant and write its averaged curve.
    Train(TrainArgs),
    /// Train several variants on paired seeds; writes curves.csv, curves.svg and manifest.txt.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Iterate the operator to its fixed point.
    Iterate,
    /// Solve the linear system for expectation-q.
    Exact,
    /// Policy iteration from --policy.
    PolicyIteration,
}

#[derive(Args)]
struct SolveArgs {
    /// MDP file in the text format.
    mdp: PathBuf,
    #[arg(long, default_value = "optimality-q")]
    operator: String,
    /// `uniform` or comma-separated actions, one per state.
    #[arg(long)]
    policy: Option<String>,
    /// Constant advantage coefficient.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, value_enum, default_value = "iterate")]
    method: Method,
    /// Write the residual trace as CSV (iter,residual,dist_to_final).
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Property {
    Contraction,
    Monotonicity,
    Noncontraction,
    OptimalityPreservation,
    GapIncreasing,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    property: Property,
    /// Operator to check; contraction and monotonicity default to all four
    /// contraction operators.
    #[arg(long)]
    operator: Option<String>,
    /// Trials, or MDP instances for the well-behaving properties.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Advantage coefficient for the non-contraction search and advantage checks.
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    /// Discount for the non-contraction search.
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// β schedule for the well-behaving properties; defaults to geometric:γ:0.999 per instance.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    k_max: usize,
    /// Write the report(s) as JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct AgentArgs {
    #[arg(long, default_value = "mountaincar")]
    env: String,
    /// Bin counts per dimension, e.g. 40,40.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Step budget of each run; also the curve length.
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 10_000)]
    episode_cap: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    /// geometric:<beta0>:<lambda> or invsq:<beta0>; defaults to geometric:γ:0.999.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    epsilon_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon_min: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha_min: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Leave the standard-error columns out of the CSV.
    #[arg(long)]
    no_se: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long, default_value = "classical")]
    operator: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long, default_value = "classical,consistent,advantage")]
    compare: String,
    /// Rerun the experiment a manifest describes; other settings are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::Train(a) => train(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn parse_policy(spec: &str, m: &Mdp) -> Result<Policy> {
    if spec == "uniform" {
        return Ok(Policy::uniform(m.n_states(), m.n_actions()));
    }
    let actions = spec
        .split(',')
        .map(|x| x.trim().parse::<usize>().with_context(|| format!("bad action '{x}'")))
        .collect::<Result<Vec<_>>>()?;
    if actions.len() != m.n_states() {
        bail!("policy lists {} actions for {} states", actions.len(), m.n_states());
    }
    Ok(Policy::deterministic(&actions, m.n_actions())?)
}

fn print_q(q: &QTable) {
    println!("# s a q");
    for s in 0..q.n_states() {
        for a in 0..q.n_actions() {
            println!("{s} {a} {:.17e}", q.get(s, a));
        }
    }
    let greedy: Vec<String> = greedy_policy(q)
        .actions()
        .expect("greedy policies are deterministic")
        .iter()
        .map(|a| a.to_string())
        .collect();
    println!("# greedy policy: {}", greedy.join(","));
}

fn report_trace<T>(fp: &FixedPoint<T>, trace_out: Option<&Path>) -> Result<()> {
    let t = &fp.trace;
    eprintln!("{:?} after {} iterations, final residual {:e}", t.terminated, t.iterations(), t.final_residual());
    if let Some(path) = trace_out {
        fs::write(path, t.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn solve(a: SolveArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&a.mdp).with_context(|| format!("reading {}", a.mdp.display()))?;
    let m = parse_mdp(&text)?;
    let tag: OperatorTag = a.operator.parse()?;
    let policy = a.policy.as_deref().map(|p| parse_policy(p, &m)).transpose()?;
    match a.method {
        Method::Exact => {
            if tag != OperatorTag::ExpectationQ {
                bail!("--method exact only applies to expectation-q");
            }
            let pi = policy.context("expectation-q needs --policy")?;
            print_q(&exact_q_pi(&m, &pi)?);
            Ok(ExitCode::SUCCESS)
        }
        Method::PolicyIteration => {
            let pi0 = policy.unwrap_or_else(|| Policy::uniform(m.n_states(), m.n_actions()));
            let r = policy_iteration(&m, &pi0, a.tol, a.max_iters)?;
            eprintln!("policy iteration: {} outer iterations, converged = {}", r.outer.len(), r.converged);
            print_q(&r.q);
            Ok(if r.converged { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Method::Iterate if tag == OperatorTag::OptimalityV => {
            let fp = fixed_point_iterate(&OptimalityV, &m, VTable::zeros(m.n_states()), a.tol, a.max_iters)?;
            report_trace(&fp, a.trace_out.as_deref())?;
            println!("# s v");
            for (s, v) in fp.table.values().iter().enumerate() {
                println!("{s} {v:.17e}");
            }
            Ok(if fp.converged() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Method::Iterate => {
            let kind = OperatorKind::from_tag(tag, policy, Some(a.beta))?;
            let op = QOperator::new(kind)?;
            let fp = fixed_point_iterate(&op, &m, QTable::zeros(m.n_states(), m.n_actions()), a.tol, a.max_iters)?;
            report_trace(&fp, a.trace_out.as_deref())?;
            print_q(&fp.table);
            Ok(if fp.converged() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn exit_for(verdicts: impl IntoIterator<Item = Verdict>) -> ExitCode {
    let v: Vec<Verdict> = verdicts.into_iter().collect();
    if v.contains(&Verdict::Fail) {
        ExitCode::from(1)
    } else if v.contains(&Verdict::Inconclusive) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn summarize(r: &PropertyReport) {
    println!(
        "{} [{}]: {:?} ({} trials, {} violations, {} inconclusive)",
        r.property,
        r.operator.as_deref().unwrap_or("-"),
        r.verdict,
        r.trials,
        r.violations.len(),
        r.inconclusive
    );
    for n in &r.notes {
        println!("  {n}");
    }
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let (json, verdicts) = match a.property {
        Property::Contraction | Property::Monotonicity => {
            let tags: Vec<OperatorTag> = match &a.operator {
                Some(op) => vec![op.parse()?],
                None => OperatorTag::CONTRACTIONS.to_vec(),
            };
            let mut reports = Vec::new();
            for tag in tags {
                let r = if a.property == Property::Contraction {
                    check_contraction(tag, a.beta, a.trials, a.seed)?
                } else {
                    check_monotonicity(tag, a.beta, a.trials, a.seed)?
                };
                summarize(&r);
                reports.push(r);
            }
            (serde_json::to_string_pretty(&reports)?, reports.iter().map(|r| r.verdict).collect::<Vec<_>>())
        }
        Property::Noncontraction => {
            let r = find_noncontraction_witness(a.beta, a.gamma, a.trials, a.seed)?;
            summarize(&r);
            if let Some(w) = r.violations.first() {
                println!("  witness: trial {}, lhs {:e} > rhs {:e}, replay reproduces: {}", w.trial, w.lhs, w.rhs, w.reproduces());
            }
            (serde_json::to_string_pretty(&r)?, vec![r.verdict])
        }
        Property::OptimalityPreservation | Property::GapIncreasing => {
            let schedule = a.schedule.as_deref().map(str::parse::<BetaSchedule>).transpose()?;
            let s = check_well_behaving_batch(a.trials, a.seed, schedule, a.k_max)?;
            let r = if a.property == Property::OptimalityPreservation { &s.preservation } else { &s.gap };
            summarize(r);
            if !s.inconclusive_seeds.is_empty() {
                println!("  inconclusive instance seeds: {:?}", s.inconclusive_seeds);
            }
            (serde_json::to_string_pretty(r)?, vec![r.verdict])
        }
    };
    if let Some(path) = a.report_out {
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(exit_for(verdicts))
}

fn spec_from(agent: &AgentArgs, variants: Vec<OperatorVariant>) -> Result<ExperimentSpec> {
    let env: EnvKind = agent.env.parse()?;
    let mut spec = ExperimentSpec::new(env);
    if let Some(g) = &agent.grid {
        spec.bins = parse_bins(g)?;
        spec.grid()?;
    }
    spec.variants = variants;
    spec.runs = agent.runs;
    spec.master_seed = agent.seed;
    spec.se_columns = !agent.no_se;
    let c = &mut spec.agent;
    c.alpha = agent.alpha;
    c.epsilon = agent.epsilon;
    c.gamma = agent.gamma;
    c.step_cap = agent.steps;
    c.episode_cap = agent.episode_cap;
    c.epsilon_decay = agent.epsilon_decay;
    c.epsilon_min = agent.epsilon_min;
    c.alpha_decay = agent.alpha_decay;
    c.alpha_min = agent.alpha_min;
    spec.beta = match &agent.beta {
        Some(b) => b.parse()?,
        None => BetaSchedule::default_for(agent.gamma),
    };
    for c in spec.configs() {
        c.validate()?;
    }
    Ok(spec)
}

/// Runs `spec` and writes curves.csv, curves.svg and manifest.txt into `out`.
/// A failed run still leaves a manifest recording how far it got.
fn run_and_write(spec: &ExperimentSpec, out: &Path) -> Result<Vec<LearningCurve>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = out.join("manifest.txt");
    let curves = match spec.run() {
        Ok(c) => c,
        Err(e) => {
            let completed = match &e {
                bellman_core::Error::RunFailed { completed, .. } => *completed,
                _ => 0,
            };
            fs::write(&manifest, spec.to_manifest(&RunStatus::Failed { completed, message: e.to_string() }))?;
            return Err(e.into());
        }
    };
    export_csv(&curves, spec.se_columns, &out.join("curves.csv"))?;
    render_plot(&curves, &out.join("curves.svg"))?;
    fs::write(&manifest, spec.to_manifest(&RunStatus::Complete))?;
    for c in &curves {
        println!("{:<12} final mean {:.6} (se {:.3e}, {} runs)", c.label, c.final_mean(), c.se.last().copied().unwrap_or(0.0), c.runs);
    }
    println!("wrote {}", out.display());
    Ok(curves)
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let variant: OperatorVariant = a.operator.parse()?;
    let spec = spec_from(&a.agent, vec![variant])?;
    run_and_write(&spec, &a.out)?;
    Ok(ExitCode::SUCCESS)
}

fn experiment(a: ExperimentArgs) -> Result<ExitCode> {
    let spec = match &a.manifest {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentSpec::parse_manifest(&text)?
        }
        None => {
            let variants = a
                .compare
                .split(',')
                .map(|v| v.trim().parse::<OperatorVariant>())
                .collect::<bellman_core::Result<Vec<_>>>()?;
            spec_from(&a.agent, variants)?
        }
    };
    run_and_write(&spec, &a.out)?;
    Ok(ExitCode::SUCCESS)
}
