//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Vectors are comma separated,
//! lists of vectors are separated by `;`. Keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `kind` | `gaussian-mab`, `bernoulli-mab`, `linear-bandit` or `tabular-mdp` |
//! | `family` | `grid` (default) or `list` |
//! | `arms` | arm count for MAB grids when `truth` is absent |
//! | `actions` | linear bandit action vectors |
//! | `layers`, `actions_per_state`, `transitions` | tabular structure; one transition row per non-final `(s, a)`, state-major |
//! | `grid.lo`, `grid.hi`, `grid.step` | axis applied to every free parameter |
//! | `grid.axis.<i>` | `lo,hi,step` override for axis `i` |
//! | `grid.transition_step` | tabular: also enumerate transition rows on this simplex lattice |
//! | `grid.cap` | instance count limit |
//! | `instances` | `list` families: one free-parameter vector per member |
//! | `truth` / `truth_index` | the environment, by parameters or by family index |
//! | `algorithm` | `t2c`, `ucb` or `etc` |
//! | `etc.m` | plays per decision before committing (`etc`) |
//! | `n`, `seeds`, `base_seed`, `checkpoints`, `threads`, `out` | run control |
//! | `t2c.on_infeasible` | `ucb` (default) or `escalate` |
//! | `record_wall_time` | write measured times instead of 0 (breaks byte-identical output) |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::decision::HypothesisFamily;
use crate::error::{Error, Result};
use crate::families::{
    build_grid_family, build_instance, Axis, BernoulliMabParams, FamilyKind, GaussianMabParams, GridSpec,
    LinearBanditParams, Params, TabularMdpParams, DEFAULT_INSTANCE_CAP,
};
use crate::t2c::{InfeasiblePolicy, MIN_HORIZON};

const KNOWN_KEYS: &[&str] = &[
    "kind",
    "family",
    "arms",
    "actions",
    "layers",
    "actions_per_state",
    "transitions",
    "grid.lo",
    "grid.hi",
    "grid.step",
    "grid.transition_step",
    "grid.cap",
    "instances",
    "truth",
    "truth_index",
    "algorithm",
    "etc.m",
    "n",
    "seeds",
    "base_seed",
    "checkpoints",
    "threads",
    "out",
    "t2c.on_infeasible",
    "record_wall_time",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    T2c,
    Ucb,
    Etc,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::T2c => "t2c",
            Algorithm::Ucb => "ucb",
            Algorithm::Etc => "etc",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "t2c" => Ok(Self::T2c),
            "ucb" => Ok(Self::Ucb),
            "etc" => Ok(Self::Etc),
            _ => Err(format!("unknown algorithm `{s}` (t2c|ucb|etc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    Grid(GridSpec),
    List(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruthSpec {
    Index(usize),
    Params(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: FamilyKind,
    /// Shared structure; free parameters are placeholders.
    pub template: Params,
    pub family: FamilySpec,
    pub truth: TruthSpec,
    pub algorithm: Algorithm,
    pub etc_m: Option<usize>,
    pub n: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub checkpoints: Vec<usize>,
    pub threads: usize,
    pub out: PathBuf,
    pub on_infeasible: InfeasiblePolicy,
    pub record_wall_time: bool,
}

/// Geometric checkpoints `10², 10³, 10⁴` below `n`, then `n`.
pub fn default_checkpoints(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [100, 1_000, 10_000].into_iter().filter(|&c| c < n).collect();
    v.push(n);
    v
}

fn parse_real(s: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("`{s}` is not a number"))
        .and_then(|v| if v.is_finite() { Ok(v) } else { Err(format!("`{s}` is not finite")) })
}

/// Integer that may be written in scientific notation, e.g. `1e5`.
pub fn parse_count(s: &str) -> std::result::Result<usize, String> {
    let v = parse_real(s)?;
    if v < 0.0 || v.fract() != 0.0 || v > 9.0e15 {
        return Err(format!("`{s}` is not a non-negative integer"));
    }
    Ok(v as usize)
}

fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(parse_real).collect()
}

fn parse_vectors(s: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    s.split(';').map(parse_vector).collect()
}

struct Entries {
    map: BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn get<T>(&mut self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Option<T> {
        let raw = self.take(key)?;
        match parse(&raw) {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{key}: {e}"));
                None
            }
        }
    }

    fn require<T>(&mut self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Option<T> {
        if !self.map.contains_key(key) {
            self.errors.push(format!("{key}: required"));
            return None;
        }
        self.get(key, parse)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parse and validate; every problem found is reported in one
    /// [`Error::Config`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Entries {
            map: BTreeMap::new(),
            errors: Vec::new(),
        };
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                entries.errors.push(format!("line {}: expected `key = value`", no + 1));
                continue;
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KNOWN_KEYS.contains(&k.as_str()) && !k.starts_with("grid.axis.") {
                entries.errors.push(format!("line {}: unknown key `{k}`", no + 1));
            } else if entries.map.insert(k.clone(), v).is_some() {
                entries.errors.push(format!("line {}: duplicate key `{k}`", no + 1));
            }
        }
        let cfg = Self::from_entries(&mut entries);
        match cfg {
            Some(c) if entries.errors.is_empty() => {
                let violations = c.violations();
                if violations.is_empty() {
                    Ok(c)
                } else {
                    Err(Error::Config(violations))
                }
            }
            _ => Err(Error::Config(entries.errors)),
        }
    }

    fn from_entries(e: &mut Entries) -> Option<Self> {
        let kind = e.require("kind", |s| FamilyKind::from_str(s).map_err(|err| err.to_string()));
        let family_mode = e.get("family", |s| match s {
            "grid" | "list" => Ok(s.to_string()),
            _ => Err(format!("unknown family mode `{s}` (grid|list)")),
        });
        let truth_vec = e.get("truth", parse_vector);
        let truth_index = e.get("truth_index", parse_count);
        let instances = e.get("instances", parse_vectors);
        let arms = e.get("arms", parse_count);
        let algorithm = e.get("algorithm", |s| s.parse::<Algorithm>()).unwrap_or(Algorithm::T2c);
        let etc_m = e.get("etc.m", parse_count);
        let n = e.require("n", parse_count);
        let seeds = e.get("seeds", parse_count).unwrap_or(1);
        let base_seed = e
            .get("base_seed", |s| s.trim().parse::<u64>().map_err(|_| format!("`{s}` is not a u64")))
            .unwrap_or(0);
        let checkpoints = e.get("checkpoints", |s| s.split(',').map(parse_count).collect::<std::result::Result<Vec<_>, _>>());
        let threads = e.get("threads", parse_count).unwrap_or(1);
        let out = e.take("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"));
        let on_infeasible = e
            .get("t2c.on_infeasible", |s| s.parse::<InfeasiblePolicy>().map_err(|err| err.to_string()))
            .unwrap_or_default();
        let record_wall_time = e
            .get("record_wall_time", |s| s.parse::<bool>().map_err(|_| format!("`{s}` is not true/false")))
            .unwrap_or(false);

        let kind = kind?;
        let template = Self::template(kind, e, truth_vec.as_ref(), instances.as_ref(), arms)?;

        let family = if family_mode.as_deref() == Some("list") {
            match instances {
                Some(list) => FamilySpec::List(list),
                None => {
                    e.errors.push("instances: required for list families".into());
                    return None;
                }
            }
        } else {
            if instances.is_some() {
                e.errors.push("instances: only valid with family = list".into());
            }
            FamilySpec::Grid(Self::grid(e, &template)?)
        };
        let truth = match (truth_vec, truth_index) {
            (Some(v), None) => TruthSpec::Params(v),
            (None, Some(i)) => TruthSpec::Index(i),
            (None, None) => {
                e.errors.push("truth: one of `truth` or `truth_index` is required".into());
                return None;
            }
            (Some(_), Some(_)) => {
                e.errors.push("truth: give `truth` or `truth_index`, not both".into());
                return None;
            }
        };
        let n = n?;
        let leftover: Vec<String> = e.map.keys().cloned().collect();
        for k in leftover {
            e.errors.push(format!("{k}: not used by kind {kind}"));
        }
        Some(Self {
            kind,
            template,
            family,
            truth,
            algorithm,
            etc_m,
            n,
            seeds,
            base_seed,
            checkpoints: checkpoints.unwrap_or_else(|| default_checkpoints(n)),
            threads,
            out,
            on_infeasible,
            record_wall_time,
        })
    }

    fn template(
        kind: FamilyKind,
        e: &mut Entries,
        truth: Option<&Vec<f64>>,
        instances: Option<&Vec<Vec<f64>>>,
        arms: Option<usize>,
    ) -> Option<Params> {
        let arm_count = || arms.or(truth.map(Vec::len)).or(instances.and_then(|l| l.first().map(Vec::len)));
        match kind {
            FamilyKind::GaussianMab | FamilyKind::BernoulliMab => {
                let Some(k) = arm_count() else {
                    e.errors.push("arms: cannot infer the arm count; set `arms` or `truth`".into());
                    return None;
                };
                Some(if kind == FamilyKind::GaussianMab {
                    GaussianMabParams { means: vec![0.0; k] }.into()
                } else {
                    BernoulliMabParams { probs: vec![0.5; k] }.into()
                })
            }
            FamilyKind::LinearBandit => {
                let actions = e.require("actions", parse_vectors)?;
                let d = actions.first().map_or(0, Vec::len);
                Some(LinearBanditParams { actions, theta: vec![0.0; d] }.into())
            }
            FamilyKind::TabularMdp => {
                let layers = e.require("layers", |s| s.split(',').map(parse_count).collect::<std::result::Result<Vec<_>, _>>())?;
                let actions = e.require("actions_per_state", parse_count)?;
                let states: usize = layers.iter().sum();
                let last = layers.last().copied().unwrap_or(0);
                let rows = e.get("transitions", parse_vectors).unwrap_or_default();
                let needed = (states - last) * actions;
                if rows.len() != needed {
                    e.errors.push(format!("transitions: need {needed} rows, got {}", rows.len()));
                    return None;
                }
                let mut it = rows.into_iter();
                let transitions = (0..states)
                    .map(|s| {
                        (0..actions)
                            .map(|_| if s < states - last { it.next().expect("counted") } else { Vec::new() })
                            .collect()
                    })
                    .collect();
                Some(
                    TabularMdpParams {
                        layers,
                        actions,
                        transitions,
                        reward_means: vec![vec![0.0; actions]; states],
                    }
                    .into(),
                )
            }
        }
    }

    fn grid(e: &mut Entries, template: &Params) -> Option<GridSpec> {
        let dim = template.free_len();
        let lo = e.get("grid.lo", parse_real);
        let hi = e.get("grid.hi", parse_real);
        let step = e.get("grid.step", parse_real);
        let mut axes: Vec<Option<Axis>> = match (lo, hi, step) {
            (Some(lo), Some(hi), Some(step)) => vec![Some(Axis::new(lo, hi, step)); dim],
            _ => vec![None; dim],
        };
        let overrides: Vec<String> = e.map.keys().filter(|k| k.starts_with("grid.axis.")).cloned().collect();
        for key in overrides {
            let idx = key["grid.axis.".len()..].parse::<usize>().ok().filter(|&i| i < dim);
            let spec = e.get(&key, parse_vector);
            match (idx, spec) {
                (Some(i), Some(v)) if v.len() == 3 => axes[i] = Some(Axis::new(v[0], v[1], v[2])),
                (Some(i), Some(v)) if v.len() == 1 => axes[i] = Some(Axis::point(v[0])),
                (None, _) => e.errors.push(format!("{key}: axis index must be below {dim}")),
                (_, Some(_)) => e.errors.push(format!("{key}: expected `lo,hi,step` or a single value")),
                _ => {}
            }
        }
        if axes.iter().any(Option::is_none) {
            e.errors.push("grid: set grid.lo, grid.hi and grid.step, or every grid.axis.<i>".into());
            return None;
        }
        let mut spec = GridSpec::new(axes.into_iter().map(|a| a.expect("checked")).collect());
        spec.transition_step = e.get("grid.transition_step", parse_real);
        spec.cap = e.get("grid.cap", parse_count).unwrap_or(DEFAULT_INSTANCE_CAP);
        Some(spec)
    }

    /// Semantic checks that do not need the family to be built.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.algorithm == Algorithm::T2c && self.n < MIN_HORIZON {
            v.push(format!("n: t2c needs n ≥ {MIN_HORIZON}, got {}", self.n));
        }
        if self.n == 0 {
            v.push("n: must be positive".into());
        }
        if self.seeds == 0 {
            v.push("seeds: must be at least 1".into());
        }
        if self.threads == 0 {
            v.push("threads: must be at least 1".into());
        }
        if self.checkpoints.is_empty() {
            v.push("checkpoints: must not be empty".into());
        }
        if self.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            v.push("checkpoints: must be strictly increasing".into());
        }
        if self.checkpoints.iter().any(|&c| c == 0 || c > self.n) {
            v.push(format!("checkpoints: must lie in 1..={}", self.n));
        }
        if self.etc_m == Some(0) {
            v.push("etc.m: must be positive".into());
        }
        v
    }

    /// Apply command-line overrides and re-validate.
    pub fn with_overrides(
        mut self,
        n: Option<usize>,
        seeds: Option<usize>,
        threads: Option<usize>,
        out: Option<PathBuf>,
    ) -> Result<Self> {
        if let Some(n) = n {
            self.n = n;
            self.checkpoints.retain(|&c| c < n);
            self.checkpoints.push(n);
        }
        if let Some(s) = seeds {
            self.seeds = s;
        }
        if let Some(t) = threads {
            self.threads = t;
        }
        if let Some(o) = out {
            self.out = o;
        }
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(v))
        }
    }

    /// Build the hypothesis family and return it with the number of lattice
    /// points dropped for having tied optima.
    pub fn build_family(&self) -> Result<(HypothesisFamily, usize)> {
        match &self.family {
            FamilySpec::Grid(g) => {
                let gf = build_grid_family(&self.template, g)?;
                Ok((gf.family, gf.dropped_ties))
            }
            FamilySpec::List(list) => {
                let members = list
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        build_instance(self.template.with_free_values(v)?)
                            .map_err(|e| Error::Config(vec![format!("instances[{i}]: {e}")]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((HypothesisFamily::new(members)?, 0))
            }
        }
    }

    /// Index of the truth in `family`.
    pub fn truth_index(&self, family: &HypothesisFamily) -> Result<usize> {
        match &self.truth {
            TruthSpec::Index(i) if *i < family.len() => Ok(*i),
            TruthSpec::Index(i) => Err(Error::Config(vec![format!(
                "truth_index: {i} out of range for a family of {}",
                family.len()
            )])),
            TruthSpec::Params(v) => {
                let f = build_instance(self.template.with_free_values(v)?)
                    .map_err(|e| Error::Config(vec![format!("truth: {e}")]))?;
                family
                    .position(&f)
                    .ok_or_else(|| Error::Config(vec!["truth: not a member of the family".into()]))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ARM: &str = "
        kind = gaussian-mab
        grid.lo = 0
        grid.hi = 1
        grid.step = 0.1   # coarse
        truth = 0.5, 0.0
        n = 1e4
        seeds = 3
    ";

    #[test]
    fn parses_two_arm_grid() {
        let c = ExperimentConfig::parse(TWO_ARM).unwrap();
        assert_eq!(c.kind, FamilyKind::GaussianMab);
        assert_eq!(c.n, 10_000);
        assert_eq!(c.checkpoints, vec![100, 1000, 10_000]);
        assert_eq!(c.algorithm, Algorithm::T2c);
        let (fam, dropped) = c.build_family().unwrap();
        assert_eq!(fam.len() + dropped, 121);
        let t = c.truth_index(&fam).unwrap();
        assert_eq!(fam.instance(t).flat_params(), vec![0.5, 0.0]);
    }

    #[test]
    fn collects_every_violation() {
        let text = "kind = gaussian-mab\nfoo = 1\nn = 8\nseeds = 0\ntruth = 0.5,0\ngrid.lo=0\ngrid.hi=1\ngrid.step=0.5";
        let Err(Error::Config(v)) = ExperimentConfig::parse(text) else {
            panic!("expected config error")
        };
        assert!(v.iter().any(|m| m.contains("foo")), "{v:?}");
        let text = "kind = gaussian-mab\nn = 8\nseeds = 0\ntruth = 0.5,0\ngrid.lo=0\ngrid.hi=1\ngrid.step=0.5";
        let Err(Error::Config(v)) = ExperimentConfig::parse(text) else {
            panic!("expected config error")
        };
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn list_family_and_axis_override() {
        let text = "kind = linear-bandit\nactions = 1,0; 0,1\ngrid.axis.0 = 0.5\ngrid.axis.1 = -1,1,0.5\ntruth = 0.5,0\nn=100\nalgorithm=ucb";
        let c = ExperimentConfig::parse(text).unwrap();
        let (fam, dropped) = c.build_family().unwrap();
        assert_eq!(fam.len(), 4);
        assert_eq!(dropped, 1);
        let text = "kind = bernoulli-mab\nfamily = list\ninstances = 0.5,0.2; 0.3,0.6\ntruth_index = 1\nn = 50\nalgorithm = ucb";
        let c = ExperimentConfig::parse(text).unwrap();
        let (fam, _) = c.build_family().unwrap();
        assert_eq!(c.truth_index(&fam).unwrap(), 1);
    }

    #[test]
    fn tabular_template() {
        let text = "kind = tabular-mdp\nlayers = 1,2\nactions_per_state = 2\ntransitions = 0.5,0.5; 1,0\ngrid.lo = -0.5\ngrid.hi = 0.5\ngrid.step = 0.5\ntruth = 0.5,0,0,0.5,-0.5,0\nn = 100\ngrid.cap = 1000";
        let c = ExperimentConfig::parse(text).unwrap();
        let (fam, dropped) = c.build_family().unwrap();
        assert_eq!(fam.len() + dropped, 729);
        assert!(c.truth_index(&fam).is_ok());
    }

    #[test]
    fn missing_file_names_path() {
        let err = ExperimentConfig::from_file("/nonexistent/x.cfg").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.cfg"));
    }
}
