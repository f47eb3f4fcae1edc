//! Experiment configuration: a flat `key = value` text format with
//! `[section]` headers and `#` comments.
//!
//! ```text
//! [group]
//! kind = surface      # surface | free
//! genus = 2
//!
//! [walk]
//! step = lazy:0.1     # srw | lazy:P | table:WORD=P,...
//!
//! [ball]
//! radius = 8
//!
//! [green]
//! r = crit*0.9
//! ```
//!
//! Every key has a profile default; see [`ExperimentConfig::for_profile`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use hyperwalk_core::group::GroupKind;
use hyperwalk_core::green::Solver;
use hyperwalk_core::Presentation;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{section}.{key}`")]
    UnknownKey { section: String, key: String },
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("{0} exceeds the declared budget")]
    Budget(String),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Profile {
    Smoke,
    Desk,
    Deep,
}

impl FromStr for Profile {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "smoke" => Ok(Profile::Smoke),
            "desk" => Ok(Profile::Desk),
            "deep" => Ok(Profile::Deep),
            _ => Err(ConfigError::Value { key: "profile".into(), msg: format!("`{s}` is not smoke, desk or deep") }),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Smoke => "smoke",
            Profile::Desk => "desk",
            Profile::Deep => "deep",
        })
    }
}

/// `r` given directly or as a multiple of the estimated critical R̂.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum RSpec {
    Value(f64),
    Crit(f64),
}

impl RSpec {
    pub fn resolve(self, r_hat: f64) -> f64 {
        match self {
            RSpec::Value(v) => v,
            RSpec::Crit(f) => f * r_hat,
        }
    }
}

impl FromStr for RSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(f) = s.strip_prefix("crit*") {
            let f: f64 = f.trim().parse().map_err(|_| format!("bad factor in `{s}`"))?;
            if !(f > 0.0) {
                return Err(format!("factor in `{s}` must be positive"));
            }
            return Ok(RSpec::Crit(f));
        }
        if s == "crit" {
            return Ok(RSpec::Crit(1.0));
        }
        let v: f64 = s.parse().map_err(|_| format!("`{s}` is neither a number nor crit*FACTOR"))?;
        if !(v >= 0.0) {
            return Err(format!("r = {v} must be nonnegative"));
        }
        Ok(RSpec::Value(v))
    }
}

impl fmt::Display for RSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RSpec::Value(v) => write!(f, "{v}"),
            RSpec::Crit(c) => write!(f, "crit*{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub group: GroupKind,
    pub step: String,
    pub radius: usize,
    /// `auto`, `exact` or `radial`.
    pub ball_mode: String,
    pub state_budget: u64,
    /// Largest ball used for the spectral-radius estimate.
    pub spectral_radius: usize,
    pub r: RSpec,
    pub r_grid: Vec<RSpec>,
    /// Relative distances δ for critical fits, r = R̂(1 − δ).
    pub delta_grid: Vec<f64>,
    /// δ_work: the working point R̂_work = R̂(1 − δ_work).
    pub delta_work: f64,
    pub solver: Solver,
    pub tol: f64,
    pub depth: usize,
    pub chain_budget: usize,
    pub theta: f64,
    pub n_range: (usize, usize),
    pub parity: Option<usize>,
    pub trials: usize,
    pub target: String,
    pub max_len: usize,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
}

const KEYS: &[(&str, &[&str])] = &[
    ("group", &["kind", "genus", "rank"]),
    ("walk", &["step"]),
    ("ball", &["radius", "mode", "budget"]),
    ("spectral", &["radius"]),
    ("green", &["r", "r_grid", "delta_grid", "delta_work", "solver", "tol"]),
    ("thermo", &["depth", "chain_budget", "theta"]),
    ("fit", &["n_min", "n_max", "parity"]),
    ("mc", &["trials", "target", "seed"]),
    ("geometry", &["max_len"]),
    ("run", &["profile", "threads", "out", "cache"]),
];

fn default_deltas() -> Vec<f64> {
    vec![1e-3, 2e-3, 4e-3, 7e-3, 0.01, 0.015, 0.02, 0.03, 0.05, 0.07, 0.1, 0.15, 0.2, 0.3]
}

impl ExperimentConfig {
    /// Genus-2 simple random walk with the budget of the given profile.
    pub fn for_profile(profile: Profile) -> Self {
        let (radius, depth) = match profile {
            Profile::Smoke => (5, 2),
            Profile::Desk => (8, 3),
            Profile::Deep => (9, 4),
        };
        ExperimentConfig {
            profile,
            group: GroupKind::Surface { genus: 2 },
            step: "srw".into(),
            radius,
            ball_mode: "auto".into(),
            state_budget: 60_000_000,
            spectral_radius: radius,
            r: RSpec::Crit(0.9),
            r_grid: vec![RSpec::Crit(0.6), RSpec::Crit(0.8), RSpec::Crit(0.9)],
            delta_grid: default_deltas(),
            delta_work: 1e-3,
            solver: Solver::ConjugateGradient,
            tol: 1e-12,
            depth,
            chain_budget: 2_000_000,
            theta: 2.0,
            n_range: (100, 2000),
            parity: Some(0),
            trials: 10_000,
            target: "a1".into(),
            max_len: radius,
            seed: 1,
            threads: 1,
            out: PathBuf::from("out"),
            cache: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = parse_entries(text)?;
        let profile = match entries.get(&("run".to_string(), "profile".to_string())) {
            Some(v) => v.parse()?,
            None => Profile::Desk,
        };
        let mut cfg = Self::for_profile(profile);
        cfg.apply(&entries)?;
        Ok(cfg)
    }

    fn apply(&mut self, entries: &BTreeMap<(String, String), String>) -> Result<(), ConfigError> {
        let get = |s: &str, k: &str| entries.get(&(s.to_string(), k.to_string())).map(String::as_str);
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
            v.parse().map_err(|_| ConfigError::Value { key: key.into(), msg: format!("cannot parse `{v}`") })
        }
        if let Some(kind) = get("group", "kind") {
            self.group = match kind {
                "surface" => GroupKind::Surface { genus: num("group.genus", get("group", "genus").unwrap_or("2"))? },
                "free" => GroupKind::Free { rank: num("group.rank", get("group", "rank").unwrap_or("2"))? },
                _ => return Err(ConfigError::Value { key: "group.kind".into(), msg: format!("`{kind}`") }),
            };
        } else if let Some(g) = get("group", "genus") {
            self.group = GroupKind::Surface { genus: num("group.genus", g)? };
        } else if let Some(k) = get("group", "rank") {
            self.group = GroupKind::Free { rank: num("group.rank", k)? };
        }
        if let Some(v) = get("walk", "step") {
            self.step = v.to_string();
        }
        if let Some(v) = get("ball", "radius") {
            self.radius = num("ball.radius", v)?;
            self.spectral_radius = self.radius;
            self.max_len = self.radius;
        }
        if let Some(v) = get("ball", "mode") {
            if !matches!(v, "auto" | "exact" | "radial") {
                return Err(ConfigError::Value { key: "ball.mode".into(), msg: format!("`{v}`") });
            }
            self.ball_mode = v.to_string();
        }
        if let Some(v) = get("ball", "budget") {
            self.state_budget = num("ball.budget", v)?;
        }
        if let Some(v) = get("spectral", "radius") {
            self.spectral_radius = num("spectral.radius", v)?;
        }
        if let Some(v) = get("green", "r") {
            self.r = v.parse().map_err(|msg| ConfigError::Value { key: "green.r".into(), msg })?;
        }
        if let Some(v) = get("green", "r_grid") {
            self.r_grid = list(v)
                .map(|s| s.parse().map_err(|msg| ConfigError::Value { key: "green.r_grid".into(), msg }))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = get("green", "delta_grid") {
            self.delta_grid = list(v).map(|s| num("green.delta_grid", s)).collect::<Result<_, _>>()?;
        }
        if let Some(v) = get("green", "delta_work") {
            self.delta_work = num("green.delta_work", v)?;
        }
        if let Some(v) = get("green", "solver") {
            self.solver = match v {
                "cg" => Solver::ConjugateGradient,
                "fixed-point" => Solver::FixedPoint,
                _ => return Err(ConfigError::Value { key: "green.solver".into(), msg: format!("`{v}`") }),
            };
        }
        if let Some(v) = get("green", "tol") {
            self.tol = num("green.tol", v)?;
        }
        if let Some(v) = get("thermo", "depth") {
            self.depth = num("thermo.depth", v)?;
        }
        if let Some(v) = get("thermo", "chain_budget") {
            self.chain_budget = num("thermo.chain_budget", v)?;
        }
        if let Some(v) = get("thermo", "theta") {
            self.theta = num("thermo.theta", v)?;
        }
        if let Some(v) = get("fit", "n_min") {
            self.n_range.0 = num("fit.n_min", v)?;
        }
        if let Some(v) = get("fit", "n_max") {
            self.n_range.1 = num("fit.n_max", v)?;
        }
        if let Some(v) = get("fit", "parity") {
            self.parity = match v {
                "even" => Some(0),
                "odd" => Some(1),
                "all" => None,
                _ => return Err(ConfigError::Value { key: "fit.parity".into(), msg: format!("`{v}`") }),
            };
        }
        if let Some(v) = get("mc", "trials") {
            self.trials = num("mc.trials", v)?;
        }
        if let Some(v) = get("mc", "target") {
            self.target = v.to_string();
        }
        if let Some(v) = get("mc", "seed") {
            self.seed = num("mc.seed", v)?;
        }
        if let Some(v) = get("geometry", "max_len") {
            self.max_len = num("geometry.max_len", v)?;
        }
        if let Some(v) = get("run", "threads") {
            self.threads = num("run.threads", v)?;
        }
        if let Some(v) = get("run", "out") {
            self.out = PathBuf::from(v);
        }
        if let Some(v) = get("run", "cache") {
            self.cache = Some(PathBuf::from(v));
        }
        self.validate()
    }

    /// Resolves the presentation and checks the declared budgets.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.presentation()?;
        hyperwalk_core::walk::StepDistribution::parse(&p, &self.step)
            .map_err(|e| ConfigError::Value { key: "walk.step".into(), msg: e.to_string() })?;
        if self.n_range.0 >= self.n_range.1 {
            return Err(ConfigError::Value { key: "fit.n_min".into(), msg: "n_min must be below n_max".into() });
        }
        if !(self.delta_work > 0.0 && self.delta_work < 0.5) {
            return Err(ConfigError::Value { key: "green.delta_work".into(), msg: "must lie in (0, 0.5)".into() });
        }
        if self.depth == 0 {
            return Err(ConfigError::Value { key: "thermo.depth".into(), msg: "must be at least 1".into() });
        }
        if self.threads == 0 {
            return Err(ConfigError::Value { key: "run.threads".into(), msg: "must be at least 1".into() });
        }
        if p.is_surface() || self.ball_mode == "exact" {
            // ball sizes follow the growth series; reject radii past the budget
            let aut = hyperwalk_core::Automaton::build(&p);
            let size: u128 = aut.sphere_counts(self.radius.max(self.spectral_radius)).iter().sum();
            if size > self.state_budget as u128 {
                return Err(ConfigError::Budget(format!("ball of radius {} ({size} elements)", self.radius)));
            }
        }
        Ok(())
    }

    pub fn presentation(&self) -> Result<Presentation, ConfigError> {
        Presentation::from_kind(self.group).map_err(|e| ConfigError::Value { key: "group".into(), msg: e.to_string() })
    }

    /// Canonical `section.key = value` lines, sorted; the basis of the hash.
    pub fn canonical(&self) -> String {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("group", self.group.to_string());
        put("walk.step", self.step.clone());
        put("ball.radius", self.radius.to_string());
        put("ball.mode", self.ball_mode.clone());
        put("ball.budget", self.state_budget.to_string());
        put("spectral.radius", self.spectral_radius.to_string());
        put("green.r", self.r.to_string());
        put("green.r_grid", self.r_grid.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","));
        put("green.delta_grid", self.delta_grid.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","));
        put("green.delta_work", self.delta_work.to_string());
        put("green.solver", format!("{:?}", self.solver));
        put("green.tol", self.tol.to_string());
        put("thermo.depth", self.depth.to_string());
        put("thermo.chain_budget", self.chain_budget.to_string());
        put("thermo.theta", self.theta.to_string());
        put("fit.n_range", format!("{}..{}", self.n_range.0, self.n_range.1));
        put("fit.parity", format!("{:?}", self.parity));
        put("mc.trials", self.trials.to_string());
        put("mc.target", self.target.clone());
        put("mc.seed", self.seed.to_string());
        put("geometry.max_len", self.max_len.to_string());
        put("run.profile", self.profile.to_string());
        m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_entries(text: &str) -> Result<BTreeMap<(String, String), String>, ConfigError> {
    let mut out = BTreeMap::new();
    let mut section = String::from("run");
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: "unterminated section header".into() })?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::Syntax { line: i + 1, msg: format!("unknown section `{name}`") });
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: format!("expected key = value, got `{line}`") })?;
        let (k, v) = (k.trim(), v.trim());
        let known = KEYS.iter().find(|(s, _)| *s == section).map_or(false, |(_, keys)| keys.contains(&k));
        if !known {
            return Err(ConfigError::UnknownKey { section, key: k.to_string() });
        }
        if out.insert((section.clone(), k.to_string()), v.to_string()).is_some() {
            return Err(ConfigError::Syntax { line: i + 1, msg: format!("duplicate key `{k}`") });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_defaults() {
        let cfg = ExperimentConfig::parse(
            "# free group run\n[group]\nkind = free\nrank = 3\n[walk]\nstep = srw\n[ball]\nradius = 12 # comment\n[green]\nr = crit*0.8\nr_grid = 0.5, crit*0.9\n[run]\nprofile = smoke\n",
        )
        .unwrap();
        assert_eq!(cfg.group, GroupKind::Free { rank: 3 });
        assert_eq!(cfg.radius, 12);
        assert_eq!(cfg.r, RSpec::Crit(0.8));
        assert_eq!(cfg.r_grid, vec![RSpec::Value(0.5), RSpec::Crit(0.9)]);
        assert_eq!(cfg.profile, Profile::Smoke);
        assert_eq!(cfg.depth, 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ExperimentConfig::parse("[ball]\nradiuss = 3"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(ExperimentConfig::parse("[nope]"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(ExperimentConfig::parse("[ball]\nradius 3"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(ExperimentConfig::parse("[ball]\nradius = 30"), Err(ConfigError::Budget(_))));
        assert!(ExperimentConfig::parse("[walk]\nstep = lazy:1.5").is_err());
        assert!("crit*-1".parse::<RSpec>().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::for_profile(Profile::Desk);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.depth = 4;
        assert_ne!(a.hash(), b.hash());
        b.out = PathBuf::from("elsewhere");
        b.depth = 3;
        assert_eq!(a.hash(), b.hash());
    }
}
