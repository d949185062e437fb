//! Monte Carlo orchestration: paired independent runs per operator variant,
//! curve aggregation, CSV export, manifests and SVG plots.

mod export;
mod manifest;
mod plot;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::envs::{EnvKind, GridSpec};
use crate::error::{Error, Result};
use crate::qlearning::{run_training, AgentConfig, RunRecord};
use crate::seed::split_seed;

pub use export::{curves_to_csv, export_csv, parse_csv, CsvTable};
pub use manifest::{ExperimentSpec, RunStatus};
pub use plot::{render_plot, render_svg};

#[derive(Clone, Debug, PartialEq)]
pub struct LearningCurve {
    pub label: String,
    pub env: EnvKind,
    /// Mean over runs at every step.
    pub mean: Vec<f64>,
    /// Standard error of the mean at every step; zero for a single run.
    pub se: Vec<f64>,
    pub runs: usize,
    /// Hash of every parameter and seed behind this curve.
    pub fingerprint: String,
    /// Hash of the same, leaving out the operator variant and β.
    pub plan_fingerprint: String,
}

impl LearningCurve {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("curves are non-empty")
    }

    /// Curves are comparable when only their operator settings differ.
    pub fn comparable(&self, other: &Self) -> bool {
        self.plan_fingerprint == other.plan_fingerprint
    }
}

/// Lowercase hex SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn describe_plan(env: EnvKind, grid: &GridSpec, c: &AgentConfig, runs: usize, master_seed: u64) -> String {
    format!(
        "env={env};bins={:?};lower={:?};upper={:?};alpha={:e};epsilon={:e};gamma={:e};episode_cap={};step_cap={};\
         epsilon_decay={:e};epsilon_min={:e};alpha_decay={:e};alpha_min={:e};runs={runs};master_seed={master_seed};seed_split=splitmix64",
        grid.bins(),
        grid.lower(),
        grid.upper(),
        c.alpha,
        c.epsilon,
        c.gamma,
        c.episode_cap,
        c.step_cap,
        c.epsilon_decay,
        c.epsilon_min,
        c.alpha_decay,
        c.alpha_min,
    )
}

fn fingerprints(env: EnvKind, grid: &GridSpec, c: &AgentConfig, runs: usize, master_seed: u64) -> (String, String) {
    let plan = describe_plan(env, grid, c, runs, master_seed);
    let beta = match (c.variant, c.beta) {
        (crate::qlearning::OperatorVariant::Advantage, Some(b)) => b.to_string(),
        _ => "none".into(),
    };
    (sha256_hex(&format!("{plan};variant={};beta={beta}", c.variant)), sha256_hex(&plan))
}

/// Aggregates run curves in run-index order.
pub fn aggregate(records: &[RunRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = records.first().ok_or_else(|| Error::InvalidArgument("no runs to aggregate".into()))?;
    let len = first.curve.len();
    if records.iter().any(|r| r.curve.len() != len) {
        return Err(Error::InvalidArgument("run curves differ in length".into()));
    }
    let n = records.len() as f64;
    let mut mean = vec![0.0; len];
    for r in records {
        for (m, x) in mean.iter_mut().zip(&r.curve) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut se = vec![0.0; len];
    if records.len() > 1 {
        for r in records {
            for ((s, x), m) in se.iter_mut().zip(&r.curve).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        se.iter_mut().for_each(|s| *s = (*s / (n - 1.0)).sqrt() / n.sqrt());
    }
    Ok((mean, se))
}

fn check_shared_plan(configs: &[AgentConfig]) -> Result<()> {
    let strip = |c: &AgentConfig| {
        let mut c = c.clone();
        c.variant = crate::qlearning::OperatorVariant::Classical;
        c.beta = None;
        c
    };
    let base = strip(&configs[0]);
    if configs.iter().any(|c| strip(c) != base) {
        return Err(Error::InvalidArgument("configs may differ only in operator variant and beta schedule".into()));
    }
    Ok(())
}

/// Runs `runs` paired training runs for every config and averages them.
///
/// Run `i` uses `split_seed(master_seed, i)` under every config, so the
/// start states of run `i` are shared across variants. Results are
/// identical for any worker count.
pub fn monte_carlo(env: EnvKind, grid: &GridSpec, configs: &[AgentConfig], runs: usize, master_seed: u64) -> Result<Vec<LearningCurve>> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if configs.is_empty() {
        return Err(Error::InvalidArgument("at least one config is required".into()));
    }
    for c in configs {
        c.validate()?;
    }
    check_shared_plan(configs)?;

    let mut curves = Vec::with_capacity(configs.len());
    let mut completed = 0;
    for (k, config) in configs.iter().enumerate() {
        let results: Vec<Result<RunRecord>> = (0..runs)
            .into_par_iter()
            .map(|i| run_training(env, grid, config, split_seed(master_seed, i as u64)))
            .collect();
        let mut records = Vec::with_capacity(runs);
        for r in results {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => {
                    return Err(Error::RunFailed {
                        completed: completed + records.len(),
                        message: format!("config {k} ({}): {e}", config.variant),
                    })
                }
            }
        }
        completed += records.len();
        let (mean, se) = aggregate(&records)?;
        let (fingerprint, plan_fingerprint) = fingerprints(env, grid, config, runs, master_seed);
        let base = config.variant.name().to_string();
        let taken = configs[..k].iter().filter(|c| c.variant == config.variant).count();
        curves.push(LearningCurve {
            label: if taken == 0 { base } else { format!("{base}_{}", taken + 1) },
            env,
            mean,
            se,
            runs,
            fingerprint,
            plan_fingerprint,
        });
    }
    Ok(curves)
}
