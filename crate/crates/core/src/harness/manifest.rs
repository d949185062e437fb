use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{monte_carlo, sha256_hex, LearningCurve};
use crate::envs::{parse_bins, EnvKind, GridSpec};
use crate::error::{Error, Result};
use crate::operators::BetaSchedule;
use crate::qlearning::{AgentConfig, OperatorVariant};
use crate::seed::split_seed;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to rerun an experiment bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub env: EnvKind,
    pub bins: Vec<usize>,
    pub variants: Vec<OperatorVariant>,
    /// Shared agent settings; its `variant` and `beta` are ignored.
    pub agent: AgentConfig,
    /// Schedule for the advantage variant.
    pub beta: BetaSchedule,
    pub runs: usize,
    pub master_seed: u64,
    pub se_columns: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Complete,
    Failed { completed: usize, message: String },
}

impl ExperimentSpec {
    /// Defaults for `env`: its default grid, all three variants, the default
    /// agent settings and β schedule, 100 runs.
    pub fn new(env: EnvKind) -> Self {
        let agent = AgentConfig::new(OperatorVariant::Classical);
        Self {
            env,
            bins: env.default_bins(),
            variants: OperatorVariant::ALL.to_vec(),
            beta: BetaSchedule::default_for(agent.gamma),
            agent,
            runs: 100,
            master_seed: 0,
            se_columns: true,
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        self.env.grid(&self.bins)
    }

    pub fn configs(&self) -> Vec<AgentConfig> {
        self.variants
            .iter()
            .map(|&v| {
                let mut c = self.agent.clone();
                c.variant = v;
                c.beta = (v == OperatorVariant::Advantage).then_some(self.beta);
                c
            })
            .collect()
    }

    pub fn run(&self) -> Result<Vec<LearningCurve>> {
        monte_carlo(self.env, &self.grid()?, &self.configs(), self.runs, self.master_seed)
    }

    fn body(&self) -> String {
        let a = &self.agent;
        let bounds: Vec<String> = self.env.bounds().iter().map(|(lo, hi)| format!("[{lo},{hi}]")).collect();
        let variants: Vec<&str> = self.variants.iter().map(|v| v.name()).collect();
        let bins: Vec<String> = self.bins.iter().map(|b| b.to_string()).collect();
        let mut s = String::new();
        for (k, v) in [
            ("env", self.env.to_string()),
            ("grid", bins.join(",")),
            ("bounds", bounds.join(";")),
            ("operators", variants.join(",")),
            ("beta", self.beta.to_string()),
            ("alpha", a.alpha.to_string()),
            ("epsilon", a.epsilon.to_string()),
            ("gamma", a.gamma.to_string()),
            ("epsilon_decay", a.epsilon_decay.to_string()),
            ("epsilon_min", a.epsilon_min.to_string()),
            ("alpha_decay", a.alpha_decay.to_string()),
            ("alpha_min", a.alpha_min.to_string()),
            ("episode_cap", a.episode_cap.to_string()),
            ("steps", a.step_cap.to_string()),
            ("runs", self.runs.to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("seed_split", "splitmix64".into()),
            ("se_columns", self.se_columns.to_string()),
        ] {
            writeln!(s, "{k} = {v}").expect("writing to a String");
        }
        s
    }

    /// Hash of every parameter and seed.
    pub fn fingerprint(&self) -> String {
        sha256_hex(&self.body())
    }

    fn run_seeds(&self) -> String {
        (0..self.runs as u64)
            .map(|i| split_seed(self.master_seed, i).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// The manifest text, `key = value` per line.
    pub fn to_manifest(&self, status: &RunStatus) -> String {
        let mut s = String::from("# bellman experiment manifest\n");
        if self.env == EnvKind::CartPole {
            s.push_str("# cartpole velocity bounds are conventional clipping ranges\n");
        }
        writeln!(s, "version = {VERSION}").expect("writing to a String");
        s.push_str(&self.body());
        match status {
            RunStatus::Complete => s.push_str("status = complete\n"),
            RunStatus::Failed { completed, message } => {
                writeln!(s, "status = failed after {completed} runs: {}", message.replace('\n', " ")).expect("writing to a String")
            }
        }
        writeln!(s, "fingerprint = {}", self.fingerprint()).expect("writing to a String");
        writeln!(s, "run_seeds = {}", self.run_seeds()).expect("writing to a String");
        s
    }

    /// Parses a manifest, checking its fingerprint and seed list when present.
    pub fn parse_manifest(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected 'key = value', found '{line}'") })?;
            if kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Parse { line: i + 1, message: format!("duplicate key '{}'", k.trim()) });
            }
        }
        let take = |kv: &mut BTreeMap<String, (usize, String)>, k: &str| {
            kv.remove(k).ok_or_else(|| Error::Parse { line: 0, message: format!("missing key '{k}'") })
        };
        fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| Error::Parse { line, message: format!("bad {key} '{v}': {e}") })
        }
        let kv = &mut kv;
        let (l, env) = take(kv, "env")?;
        let env: EnvKind = env.parse().map_err(|e| Error::Parse { line: l, message: format!("{e}") })?;
        let (l, grid) = take(kv, "grid")?;
        let bins = parse_bins(&grid).map_err(|e| Error::Parse { line: l, message: format!("{e}") })?;
        let (l, ops) = take(kv, "operators")?;
        let variants = ops
            .split(',')
            .map(|v| v.trim().parse::<OperatorVariant>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Parse { line: l, message: format!("{e}") })?;
        let (l, beta) = take(kv, "beta")?;
        let beta: BetaSchedule = beta.parse().map_err(|e| Error::Parse { line: l, message: format!("{e}") })?;

        let mut agent = AgentConfig::new(OperatorVariant::Classical);
        let mut f = |key: &str| -> Result<f64> {
            let (l, v) = take(kv, key)?;
            num(l, key, &v)
        };
        agent.alpha = f("alpha")?;
        agent.epsilon = f("epsilon")?;
        agent.gamma = f("gamma")?;
        agent.epsilon_decay = f("epsilon_decay")?;
        agent.epsilon_min = f("epsilon_min")?;
        agent.alpha_decay = f("alpha_decay")?;
        agent.alpha_min = f("alpha_min")?;
        let mut u = |key: &str| -> Result<usize> {
            let (l, v) = take(kv, key)?;
            num(l, key, &v)
        };
        agent.episode_cap = u("episode_cap")?;
        agent.step_cap = u("steps")?;
        let runs = u("runs")?;
        let (l, seed) = take(kv, "master_seed")?;
        let master_seed: u64 = num(l, "master_seed", &seed)?;
        let (l, se) = take(kv, "se_columns")?;
        let se_columns: bool = num(l, "se_columns", &se)?;

        let spec = Self { env, bins, variants, agent, beta, runs, master_seed, se_columns };
        spec.grid()?;
        for c in spec.configs() {
            c.validate()?;
        }

        let (l, split) = take(kv, "seed_split")?;
        if split != "splitmix64" {
            return Err(Error::Parse { line: l, message: format!("unknown seed splitting '{split}'") });
        }
        if let Some((l, bounds)) = kv.remove("bounds") {
            if bounds != spec.body().lines().find_map(|x| x.strip_prefix("bounds = ")).unwrap_or_default() {
                return Err(Error::Parse { line: l, message: "bounds differ from the built-in bounds of this build".into() });
            }
        }
        if let Some((l, fp)) = kv.remove("fingerprint") {
            if fp != spec.fingerprint() {
                return Err(Error::Parse { line: l, message: "fingerprint does not match the parameters".into() });
            }
        }
        if let Some((l, seeds)) = kv.remove("run_seeds") {
            if seeds != spec.run_seeds() {
                return Err(Error::Parse { line: l, message: "run seeds do not match master_seed".into() });
            }
        }
        kv.remove("version");
        kv.remove("status");
        if let Some((k, (l, _))) = kv.iter().next() {
            return Err(Error::Parse { line: *l, message: format!("unknown key '{k}'") });
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let mut spec = ExperimentSpec::new(EnvKind::CartPole);
        spec.agent.alpha = 0.123456789;
        spec.runs = 7;
        spec.master_seed = u64::MAX;
        spec.beta = BetaSchedule::inverse_square(0.25).unwrap();
        let text = spec.to_manifest(&RunStatus::Complete);
        assert_eq!(ExperimentSpec::parse_manifest(&text).unwrap(), spec);
        let failed = spec.to_manifest(&RunStatus::Failed { completed: 3, message: "boom".into() });
        assert!(failed.contains("status = failed after 3 runs: boom"));
        assert_eq!(ExperimentSpec::parse_manifest(&failed).unwrap(), spec);
    }

    #[test]
    fn tampering_detected() {
        let spec = ExperimentSpec::new(EnvKind::MountainCar);
        let text = spec.to_manifest(&RunStatus::Complete);
        assert!(ExperimentSpec::parse_manifest(&text.replace("alpha = 0.1", "alpha = 0.2")).is_err());
        assert!(ExperimentSpec::parse_manifest(&text.replace("master_seed = 0", "master_seed = 1")).is_err());
        assert!(ExperimentSpec::parse_manifest(&format!("{text}colour = red\n")).is_err());
        assert!(ExperimentSpec::parse_manifest("env = mountaincar\n").is_err());
    }

    #[test]
    fn fingerprint_tracks_parameters() {
        let a = ExperimentSpec::new(EnvKind::Acrobot);
        let mut b = a.clone();
        b.agent.epsilon = 0.2;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
