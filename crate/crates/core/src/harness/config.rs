//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` are comments. List values are comma-separated.
//! Learning rates are looked up most-specific first: `beta.<algo>@<M>`,
//! then `beta.<algo>`, then `beta`; `beta_c` follows the same pattern.
//! Fisher methods may be overridden per estimator or algorithm with
//! `fisher.<tag>`, and schedules per algorithm with `schedule.<algo>`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::bpg::{BpgModel, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::estimate::Estimator;
use crate::fisher::FisherMethod;
use crate::optimize::UpdateRule;

const KEYS: &[&str] = &[
    "experiment",
    "env",
    "estimators",
    "algorithms",
    "M",
    "repetitions",
    "updates",
    "schedule",
    "beta",
    "beta_c",
    "tau",
    "sigma_r",
    "gamma",
    "fisher",
    "model",
    "gptd_sigma2",
    "state_width",
    "fisher_weight",
    "theta0",
    "eval_every",
    "eval_episodes",
    "tolerance",
    "natural",
    "seed",
    "out",
    "truth",
    "walk_states",
    "ship_tilings",
    "ship_tiles",
];

const PREFIXES: &[&str] = &["beta.", "beta_c.", "fisher.", "schedule."];

/// Parsed but uninterpreted entries, in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", i + 1), "expected `key = value`")
            })?;
            let key = key.trim().to_string();
            let known = KEYS.contains(&key.as_str()) || PREFIXES.iter().any(|p| key.starts_with(p));
            if !known {
                return Err(Error::config(key, "unknown key"));
            }
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::config(key, "given more than once"));
            }
        }
        Ok(Self { entries })
    }

    /// Sets or replaces one entry, e.g. from a command-line override.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            parse_real_like(s)
                .parse::<T>()
                .map_err(|e| Error::config(key, format!("cannot parse `{s}`: {e}")))
        })
        .collect()
}

/// Accepts `inf` spelled as `∞`.
fn parse_real_like(s: &str) -> &str {
    if s == "∞" {
        "inf"
    } else {
        s
    }
}

/// Optimization algorithms as named in configs and CSV output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AlgoTag {
    Mcpg,
    Bpg,
    Bpng,
    BpgVar,
    Bac,
}

impl AlgoTag {
    pub const ALL: [AlgoTag; 5] = [
        AlgoTag::Mcpg,
        AlgoTag::Bpg,
        AlgoTag::Bpng,
        AlgoTag::BpgVar,
        AlgoTag::Bac,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AlgoTag::Mcpg => "mcpg",
            AlgoTag::Bpg => "bpg",
            AlgoTag::Bpng => "bpng",
            AlgoTag::BpgVar => "bpg-var",
            AlgoTag::Bac => "bac",
        }
    }

    pub fn index(self) -> u64 {
        AlgoTag::ALL
            .iter()
            .position(|a| *a == self)
            .expect("listed") as u64
    }

    pub fn rule(self, natural: bool) -> UpdateRule {
        match self {
            AlgoTag::Bpng => UpdateRule::NaturalDet,
            AlgoTag::BpgVar => UpdateRule::CovScaled,
            AlgoTag::Bac if natural => UpdateRule::Natural,
            _ => UpdateRule::Plain,
        }
    }
}

impl FromStr for AlgoTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgoTag::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::config("algorithms", format!("unknown algorithm `{s}`")))
    }
}

impl std::fmt::Display for AlgoTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    /// `β₀ · 20 / (20 + j)`
    Lqr,
    /// `β₀ β_c / (β_c + j)`
    Hyperbolic,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "lqr" => Ok(ScheduleKind::Lqr),
            "hyperbolic" => Ok(ScheduleKind::Hyperbolic),
            _ => Err(Error::config("schedule", format!("unknown schedule `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Theta0 {
    /// The policy family's default parameters.
    Default,
    /// Drawn from the family's initializer, shared across algorithms within
    /// a run.
    Random,
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Truth {
    Exact,
    /// Frozen Monte-Carlo reference gradient.
    Fixture(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub env: String,
    pub estimators: Vec<Estimator>,
    pub algorithms: Vec<AlgoTag>,
    pub sample_sizes: Vec<usize>,
    pub repetitions: usize,
    pub updates: usize,
    pub schedule: ScheduleKind,
    pub tau: f64,
    pub sigma_r: f64,
    pub gamma: Option<f64>,
    pub fisher: FisherMethod,
    pub model: BpgModel,
    pub gptd_sigma2: f64,
    pub state_width: Option<f64>,
    pub fisher_weight: Option<f64>,
    pub theta0: Theta0,
    pub eval_every: usize,
    pub eval_episodes: Option<usize>,
    pub tolerance: f64,
    pub natural: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub truth: Truth,
    pub walk_states: Option<usize>,
    pub ship_tilings: Option<usize>,
    pub ship_tiles: Option<[usize; 4]>,
    raw: RawConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let env = raw
            .get("env")
            .ok_or_else(|| Error::config("env", "missing"))?
            .to_string();
        let experiment = raw.get("experiment").unwrap_or(&env).to_string();
        let estimators = raw.parse_list("estimators")?.unwrap_or_default();
        let algorithms = raw.parse_list("algorithms")?.unwrap_or_default();
        let sample_sizes: Vec<usize> = raw.parse_list("M")?.unwrap_or_else(|| vec![10]);
        if sample_sizes.is_empty() || sample_sizes.contains(&0) {
            return Err(Error::config("M", "sample sizes must be at least 1"));
        }
        let repetitions = raw.parse_value("repetitions")?.unwrap_or(1000);
        if repetitions == 0 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        let tau = raw.parse_value("tau")?.unwrap_or(DEFAULT_TAU);
        if !(tau > 0.0) {
            return Err(Error::config("tau", "must be positive"));
        }
        let sigma_r = raw.parse_value("sigma_r")?.unwrap_or(0.0);
        if !(sigma_r >= 0.0) {
            return Err(Error::config("sigma_r", "must be nonnegative"));
        }
        let gamma = raw.parse_value::<f64>("gamma")?;
        if let Some(g) = gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::config("gamma", "must lie in [0, 1]"));
            }
        }
        let gptd_sigma2 = raw.parse_value("gptd_sigma2")?.unwrap_or(1.0);
        if !(gptd_sigma2 >= 0.0) {
            return Err(Error::config("gptd_sigma2", "must be nonnegative"));
        }
        let theta0 = match raw.get("theta0") {
            None | Some("default") => Theta0::Default,
            Some("random") => Theta0::Random,
            Some(v) => Theta0::Fixed(parse_list("theta0", v)?),
        };
        let truth = match raw.get("truth") {
            None | Some("exact") => Truth::Exact,
            Some(v) => match v.strip_prefix("fixture:") {
                Some(path) => Truth::Fixture(PathBuf::from(path)),
                None => {
                    return Err(Error::config(
                        "truth",
                        format!("expected `exact` or `fixture:<path>`, got `{v}`"),
                    ))
                }
            },
        };
        let ship_tiles = match raw.parse_list::<usize>("ship_tiles")? {
            None => None,
            Some(v) if v.len() == 4 => Some([v[0], v[1], v[2], v[3]]),
            Some(_) => return Err(Error::config("ship_tiles", "expected four tile counts")),
        };
        let natural = match raw.get("natural") {
            None | Some("false") => false,
            Some("true") => true,
            Some(v) => {
                return Err(Error::config(
                    "natural",
                    format!("expected true or false, got `{v}`"),
                ))
            }
        };
        let config = Self {
            experiment,
            env,
            estimators,
            algorithms,
            sample_sizes,
            repetitions,
            updates: raw.parse_value("updates")?.unwrap_or(100),
            schedule: raw
                .parse_value("schedule")?
                .unwrap_or(ScheduleKind::Constant),
            tau,
            sigma_r,
            gamma,
            fisher: raw.parse_value("fisher")?.unwrap_or(FisherMethod::Analytic),
            model: raw.parse_value("model")?.unwrap_or(BpgModel::One),
            gptd_sigma2,
            state_width: raw.parse_value("state_width")?,
            fisher_weight: raw.parse_value("fisher_weight")?,
            theta0,
            eval_every: raw.parse_value("eval_every")?.unwrap_or(1),
            eval_episodes: raw.parse_value("eval_episodes")?,
            tolerance: raw.parse_value("tolerance")?.unwrap_or(0.0),
            natural,
            seed: raw.parse_value("seed")?.unwrap_or(1),
            out: raw.get("out").map(PathBuf::from),
            truth,
            walk_states: raw.parse_value("walk_states")?,
            ship_tilings: raw.parse_value("ship_tilings")?,
            ship_tiles,
            raw,
        };
        config.check_overrides()?;
        Ok(config)
    }

    fn check_overrides(&self) -> Result<()> {
        for (key, value) in self.raw.entries() {
            if let Some(rest) = key.strip_prefix("fisher.") {
                value
                    .parse::<FisherMethod>()
                    .map_err(|_| Error::config(key, format!("unknown Fisher method `{value}`")))?;
                let known = Estimator::ALL.iter().any(|e| e.tag() == rest)
                    || AlgoTag::ALL.iter().any(|a| a.tag() == rest);
                if !known {
                    return Err(Error::config(
                        key,
                        format!("unknown estimator or algorithm `{rest}`"),
                    ));
                }
            }
            if let Some(rest) = key.strip_prefix("schedule.") {
                rest.parse::<AlgoTag>()
                    .map_err(|_| Error::config(key, format!("unknown algorithm `{rest}`")))?;
                value.parse::<ScheduleKind>()?;
            }
            for prefix in ["beta.", "beta_c."] {
                if let Some(rest) = key.strip_prefix(prefix) {
                    let algo = rest.split('@').next().unwrap_or_default();
                    algo.parse::<AlgoTag>()
                        .map_err(|_| Error::config(key, format!("unknown algorithm `{algo}`")))?;
                    if let Some(m) = rest.split_once('@').map(|(_, m)| m) {
                        m.parse::<usize>()
                            .map_err(|_| Error::config(key, format!("bad sample size `{m}`")))?;
                    }
                    parse_list::<f64>(key, value)?;
                }
            }
        }
        Ok(())
    }

    /// Fisher method for an estimator or algorithm tag.
    pub fn fisher_for(&self, tag: &str) -> FisherMethod {
        self.raw
            .get(&format!("fisher.{tag}"))
            .and_then(|v| v.parse().ok())
            .unwrap_or(self.fisher)
    }

    /// Schedule shape for an algorithm.
    pub fn schedule_for(&self, algo: AlgoTag) -> ScheduleKind {
        self.raw
            .get(&format!("schedule.{}", algo.tag()))
            .and_then(|v| v.parse().ok())
            .unwrap_or(self.schedule)
    }

    fn lookup(&self, base: &str, algo: AlgoTag, m: usize) -> Result<Option<Vec<f64>>> {
        for key in [
            format!("{base}.{}@{m}", algo.tag()),
            format!("{base}.{}", algo.tag()),
            base.to_string(),
        ] {
            if let Some(v) = self.raw.parse_list::<f64>(&key)? {
                return Ok(Some(v));
            }
        }
        Ok(None)
    }

    /// Base learning rates for `algo` at sample size `m`.
    pub fn beta(&self, algo: AlgoTag, m: usize) -> Result<Vec<f64>> {
        self.lookup("beta", algo, m)?
            .ok_or_else(|| Error::config("beta", format!("no learning rate for {algo} at M = {m}")))
    }

    /// Decay constant for `algo` at sample size `m`; infinite by default.
    pub fn beta_c(&self, algo: AlgoTag, m: usize) -> Result<f64> {
        Ok(self
            .lookup("beta_c", algo, m)?
            .and_then(|v| v.first().copied())
            .unwrap_or(f64::INFINITY))
    }

    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }
}
