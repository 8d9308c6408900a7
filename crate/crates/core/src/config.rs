//! Experiment configuration: a flat key-value text format with dotted
//! sections, typed validation, and `--override key=value` support.
//!
//! Schema (defaults in parentheses):
//! ```text
//! maze = grid-medium            # asset name or path to a maze file
//! algo = saw                    # gcbc | gcivl_awr | hiql | gcwae | ris | saw
//! dataset.mode = navigate       # navigate | stitch
//! dataset.epsilon = 0.3
//! dataset.n_traj = 1000
//! dataset.max_len = 200
//! dataset.seed = 0
//! dataset.path =                # optional: load a JSONL dataset instead of generating
//! hp.tau = 0.7
//! hp.gamma = 0.99
//! hp.alpha = 3.0
//! hp.beta = 3.0
//! hp.beta_ris = 3.0
//! hp.k = 25
//! hp.lr_v = 8.0
//! hp.lr_pi = 1.0
//! hp.target_period = 100
//! hp.w_max = 100.0
//! hp.v_init = 0.0
//! hp.steps_value = 100000
//! hp.steps_sub = 50000
//! hp.steps_policy = 100000
//! hp.batch_size = 256
//! mix.p_cur = 0.2
//! mix.p_future = 0.5
//! mix.p_random = 0.3
//! mix.uniform_random = false    # random goals uniform over distinct visited states
//! policy_goals.include_current = true
//! policy_goals.p_random_goal = 0.0
//! policy_goals.uniform_random = false
//! saw.use_one_step = true       # false ablates the one-step term
//! eval.episodes_per_pair = 10
//! eval.mode = argmax            # argmax | sample
//! eval.max_steps =              # optional; default 4x maze diameter
//! seeds = 0                     # comma-separated
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dataset::{DatasetMode, GoalMixture, PolicyGoalConfig};
use crate::env::{assets, parse_maze, GridWorld};
use crate::error::{Error, Result};
use crate::policy::ActMode;
use crate::value::Hyperparams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Gcbc,
    GcivlAwr,
    Hiql,
    Gcwae,
    Ris,
    Saw,
}

impl Algo {
    pub const ALL: [Algo; 6] =
        [Algo::Gcbc, Algo::GcivlAwr, Algo::Hiql, Algo::Gcwae, Algo::Ris, Algo::Saw];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Gcbc => "gcbc",
            Algo::GcivlAwr => "gcivl_awr",
            Algo::Hiql => "hiql",
            Algo::Gcwae => "gcwae",
            Algo::Ris => "ris",
            Algo::Saw => "saw",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algo {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub mode: DatasetMode,
    pub epsilon: f64,
    pub n_traj: usize,
    pub max_len: usize,
    pub seed: u64,
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub episodes_per_pair: usize,
    pub mode: ActMode,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub maze: String,
    pub algo: Algo,
    pub dataset: DatasetConfig,
    pub hp: Hyperparams,
    pub mix: GoalMixture,
    pub policy_goals: PolicyGoalConfig,
    pub saw_use_one_step: bool,
    pub eval: EvalConfig,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            maze: "grid-medium".into(),
            algo: Algo::Saw,
            dataset: DatasetConfig {
                mode: DatasetMode::Navigate,
                epsilon: 0.3,
                n_traj: 1000,
                max_len: 200,
                seed: 0,
                path: None,
            },
            hp: Hyperparams::default(),
            mix: GoalMixture::default(),
            policy_goals: PolicyGoalConfig::default(),
            saw_use_one_step: true,
            eval: EvalConfig { episodes_per_pair: 10, mode: ActMode::Argmax, max_steps: None },
            seeds: vec![0],
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got {v:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl ExperimentConfig {
    /// Apply one `key = value` assignment. Unknown keys are config errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "maze" => self.maze = v.to_string(),
            "algo" => self.algo = v.parse()?,
            "dataset.mode" => self.dataset.mode = v.parse()?,
            "dataset.epsilon" => self.dataset.epsilon = parse_num(key, v)?,
            "dataset.n_traj" => self.dataset.n_traj = parse_num(key, v)?,
            "dataset.max_len" => self.dataset.max_len = parse_num(key, v)?,
            "dataset.seed" => self.dataset.seed = parse_num(key, v)?,
            "dataset.path" => {
                self.dataset.path = if v.is_empty() { None } else { Some(v.to_string()) }
            }
            "hp.tau" => self.hp.tau = parse_num(key, v)?,
            "hp.gamma" => self.hp.gamma = parse_num(key, v)?,
            "hp.alpha" => self.hp.alpha = parse_num(key, v)?,
            "hp.beta" => self.hp.beta = parse_num(key, v)?,
            "hp.beta_ris" => self.hp.beta_ris = parse_num(key, v)?,
            "hp.k" => self.hp.k = parse_num(key, v)?,
            "hp.lr_v" => self.hp.lr_v = parse_num(key, v)?,
            "hp.lr_pi" => self.hp.lr_pi = parse_num(key, v)?,
            "hp.target_period" => self.hp.target_period = parse_num(key, v)?,
            "hp.w_max" => self.hp.w_max = parse_num(key, v)?,
            "hp.v_init" => self.hp.v_init = parse_num(key, v)?,
            "hp.steps_value" => self.hp.steps_value = parse_num(key, v)?,
            "hp.steps_sub" => self.hp.steps_sub = parse_num(key, v)?,
            "hp.steps_policy" => self.hp.steps_policy = parse_num(key, v)?,
            "hp.batch_size" => self.hp.batch_size = parse_num(key, v)?,
            "mix.p_cur" => self.mix.p_cur = parse_num(key, v)?,
            "mix.p_future" => self.mix.p_future = parse_num(key, v)?,
            "mix.p_random" => self.mix.p_random = parse_num(key, v)?,
            "mix.uniform_random" => self.mix.uniform_random = parse_bool(key, v)?,
            "policy_goals.include_current" => {
                self.policy_goals.include_current_goal = parse_bool(key, v)?
            }
            "policy_goals.p_random_goal" => self.policy_goals.p_random_goal = parse_num(key, v)?,
            "policy_goals.uniform_random" => {
                self.policy_goals.uniform_random = parse_bool(key, v)?
            }
            "saw.use_one_step" => self.saw_use_one_step = parse_bool(key, v)?,
            "eval.episodes_per_pair" => self.eval.episodes_per_pair = parse_num(key, v)?,
            "eval.mode" => {
                self.eval.mode = match v {
                    "argmax" => ActMode::Argmax,
                    "sample" => ActMode::Sample,
                    _ => return Err(Error::Config(format!("eval.mode: unknown mode {v:?}"))),
                }
            }
            "eval.max_steps" => {
                self.eval.max_steps =
                    if v.is_empty() { None } else { Some(parse_num(key, v)?) }
            }
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .map(|s| parse_num::<u64>(key, s.trim()))
                    .collect::<Result<_>>()?;
                if self.seeds.is_empty() {
                    return Err(Error::Config("seeds: empty list".into()));
                }
            }
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        self.mix.validate()?;
        if !(0.0..=1.0).contains(&self.dataset.epsilon) {
            return Err(Error::Config(format!(
                "dataset.epsilon {} outside [0, 1]",
                self.dataset.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.policy_goals.p_random_goal) {
            return Err(Error::Config("policy_goals.p_random_goal outside [0, 1]".into()));
        }
        if self.dataset.n_traj == 0 || self.dataset.max_len == 0 {
            return Err(Error::Config("dataset.n_traj and dataset.max_len must be >= 1".into()));
        }
        if self.eval.episodes_per_pair == 0 {
            return Err(Error::Config("eval.episodes_per_pair must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: empty list".into()));
        }
        Ok(())
    }

    /// Resolve the maze field: a bundled asset name, else a file path.
    pub fn load_maze(&self) -> Result<GridWorld> {
        let text = match assets::by_name(&self.maze) {
            Some(t) => t.to_string(),
            None => std::fs::read_to_string(&self.maze).map_err(|e| {
                Error::Config(format!("maze {:?}: not a bundled asset and {e}", self.maze))
            })?,
        };
        parse_maze(&text)
    }

    /// Canonical text rendering: every key in schema order with 17-digit
    /// floats, so equal configs hash identically.
    pub fn canonical(&self) -> String {
        use crate::value::fmt_f64 as f;
        let mut s = String::new();
        let mut w = |k: &str, v: String| {
            let _ = writeln_pair(&mut s, k, &v);
        };
        w("maze", self.maze.clone());
        w("algo", self.algo.name().into());
        w("dataset.mode", self.dataset.mode.to_string());
        w("dataset.epsilon", f(self.dataset.epsilon));
        w("dataset.n_traj", self.dataset.n_traj.to_string());
        w("dataset.max_len", self.dataset.max_len.to_string());
        w("dataset.seed", self.dataset.seed.to_string());
        w("dataset.path", self.dataset.path.clone().unwrap_or_default());
        w("hp.tau", f(self.hp.tau));
        w("hp.gamma", f(self.hp.gamma));
        w("hp.alpha", f(self.hp.alpha));
        w("hp.beta", f(self.hp.beta));
        w("hp.beta_ris", f(self.hp.beta_ris));
        w("hp.k", self.hp.k.to_string());
        w("hp.lr_v", f(self.hp.lr_v));
        w("hp.lr_pi", f(self.hp.lr_pi));
        w("hp.target_period", self.hp.target_period.to_string());
        w("hp.w_max", f(self.hp.w_max));
        w("hp.v_init", f(self.hp.v_init));
        w("hp.steps_value", self.hp.steps_value.to_string());
        w("hp.steps_sub", self.hp.steps_sub.to_string());
        w("hp.steps_policy", self.hp.steps_policy.to_string());
        w("hp.batch_size", self.hp.batch_size.to_string());
        w("mix.p_cur", f(self.mix.p_cur));
        w("mix.p_future", f(self.mix.p_future));
        w("mix.p_random", f(self.mix.p_random));
        w("mix.uniform_random", self.mix.uniform_random.to_string());
        w(
            "policy_goals.include_current",
            self.policy_goals.include_current_goal.to_string(),
        );
        w("policy_goals.p_random_goal", f(self.policy_goals.p_random_goal));
        w(
            "policy_goals.uniform_random",
            self.policy_goals.uniform_random.to_string(),
        );
        w("saw.use_one_step", self.saw_use_one_step.to_string());
        w("eval.episodes_per_pair", self.eval.episodes_per_pair.to_string());
        w(
            "eval.mode",
            match self.eval.mode {
                ActMode::Argmax => "argmax".into(),
                ActMode::Sample => "sample".into(),
            },
        );
        w(
            "eval.max_steps",
            self.eval.max_steps.map(|m| m.to_string()).unwrap_or_default(),
        );
        w(
            "seeds",
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        s
    }
}

fn writeln_pair(s: &mut String, k: &str, v: &str) -> std::fmt::Result {
    writeln!(s, "{k} = {v}")
}

/// Parse the flat key-value format: one `key = value` per line, `#` starts a
/// comment, blank lines ignored. Later assignments override earlier ones.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with_overrides(text, &[])
}

pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", ln + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    for ov in overrides {
        let (k, v) = ov
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {ov:?}: expected key=value")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut cfg = ExperimentConfig::default();
    for (k, v) in &pairs {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Keys accepted by `run_sweep` as a sweep parameter, with values applied via
/// `ExperimentConfig::set`.
pub fn is_sweepable(key: &str) -> bool {
    let mut probe = ExperimentConfig::default();
    // a key is sweepable if `set` recognizes it with some representative value
    for candidate in ["1", "0.5", "true", "navigate", "argmax", "saw"] {
        if probe.set(key, candidate).is_ok() {
            return true;
        }
    }
    false
}

/// Ordered map of all config pairs for manifest emission.
pub fn as_map(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    cfg.canonical()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.hp.tau, 0.7);
        assert_eq!(cfg.hp.k, 25);
    }

    #[test]
    fn parse_roundtrip_via_canonical() {
        let cfg = ExperimentConfig::default();
        let back = parse_config(&cfg.canonical()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.canonical(), back.canonical());
    }

    #[test]
    fn parse_with_comments_and_overrides() {
        let text = "algo = hiql  # comment\nhp.tau = 0.9\n\n# full-line comment\nseeds = 1, 2, 3\n";
        let cfg =
            parse_config_with_overrides(text, &["hp.tau=0.8".into(), "hp.k=5".into()]).unwrap();
        assert_eq!(cfg.algo, Algo::Hiql);
        assert_eq!(cfg.hp.tau, 0.8);
        assert_eq!(cfg.hp.k, 5);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
    }

    #[test]
    fn unknown_key_is_config_error() {
        assert!(matches!(parse_config("hp.nonexistent = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(parse_config("hp.tau = 1.5\n").is_err());
        assert!(parse_config("hp.gamma = 0\n").is_err());
        assert!(parse_config("dataset.epsilon = -0.1\n").is_err());
        assert!(parse_config("seeds = \n").is_err());
    }

    #[test]
    fn sweepable_keys() {
        assert!(is_sweepable("hp.beta"));
        assert!(is_sweepable("hp.k"));
        assert!(is_sweepable("dataset.epsilon"));
        assert!(!is_sweepable("hp.nope"));
    }

    #[test]
    fn bundled_maze_loads() {
        let cfg = ExperimentConfig::default();
        let env = cfg.load_maze().unwrap();
        assert!(env.num_free() > 0);
    }
}
