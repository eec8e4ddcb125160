//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Per-network keys
//! are written `network.<k>.<field>` with `k` counting from zero. Every key is checked
//! when it is read, and errors carry the line they come from. [`RunConfig::emit`]
//! writes every key in a fixed order with defaults filled in, so parsing the emitted
//! text gives back the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use cascade_core::montecarlo::Engine;
use cascade_core::strategy::Interval;
use cascade_core::{CouplingMatrix, CouplingStrategy, Distribution, NetworkConfig, SwoBounds, SwoSolver, Topology};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required key `{0}`")]
    Missing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    MeanField,
    MonteCarlo,
}

/// Monte-Carlo engine choice. `Auto` picks complete mixing when every network is fully
/// connected and has no imported graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMode {
    Auto,
    Complete,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Sbd,
    Swo,
    Fcc,
}

impl StrategyKind {
    fn name(self) -> &'static str {
        match self {
            StrategyKind::Sbd => "sbd",
            StrategyKind::Swo => "swo",
            StrategyKind::Fcc => "fcc",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "sbd" => Some(StrategyKind::Sbd),
            "swo" => Some(StrategyKind::Swo),
            "fcc" => Some(StrategyKind::Fcc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkEntry {
    pub config: NetworkConfig,
    /// Edge list replacing the generated topology.
    pub edges: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub networks: Vec<NetworkEntry>,
    /// Attack fractions for single runs (`meanfield`, `simulate`).
    pub attack: Vec<f64>,
    /// Direction scaled by the attack size in searches.
    pub attack_shape: Vec<f64>,
    pub strategy: StrategyKind,
    pub coupling: Option<CouplingMatrix>,
    pub swo_solver: SwoSolver,
    /// Row-major bounds on the coupling entries; `None` means unconstrained.
    pub swo_bounds: Option<Vec<Interval>>,
    pub compare: Vec<StrategyKind>,
    pub engine: EngineKind,
    pub mc_mode: McMode,
    pub seed: u64,
    pub runs: usize,
    pub max_steps: usize,
    pub tol: f64,
    pub resolution: f64,
    pub sweep_step: f64,
    pub clip_floor: f64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn network_configs(&self) -> Vec<NetworkConfig> {
        self.networks.iter().map(|n| n.config.clone()).collect()
    }

    /// Batch seeds: `seed, seed + 1, ..., seed + runs - 1`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn mc_engine(&self) -> Engine {
        match self.mc_mode {
            McMode::Complete => Engine::Complete,
            McMode::Local => Engine::Local,
            McMode::Auto if self.networks.iter().any(|n| n.edges.is_some()) => Engine::Local,
            McMode::Auto => Engine::for_networks(&self.network_configs()),
        }
    }

    pub fn swo_strategy(&self) -> CouplingStrategy {
        let n = self.networks.len();
        let bounds = match &self.swo_bounds {
            // validated while parsing
            Some(entries) => SwoBounds::from_entries(n, entries.clone()).expect("bounds were validated"),
            None => SwoBounds::unconstrained(n),
        };
        CouplingStrategy::StepwiseOptimal { bounds, solver: self.swo_solver }
    }

    pub fn strategy_of(&self, kind: StrategyKind) -> CouplingStrategy {
        match kind {
            StrategyKind::Sbd => CouplingStrategy::SizeBased,
            StrategyKind::Swo => self.swo_strategy(),
            StrategyKind::Fcc => CouplingStrategy::Fixed(self.coupling.clone().expect("fcc requires a coupling")),
        }
    }

    pub fn strategy(&self) -> CouplingStrategy {
        self.strategy_of(self.strategy)
    }

    /// Normalized text form.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        put("runs", self.runs.to_string());
        put(
            "engine",
            match self.engine {
                EngineKind::MeanField => "meanfield",
                EngineKind::MonteCarlo => "montecarlo",
            }
            .into(),
        );
        put(
            "mc_mode",
            match self.mc_mode {
                McMode::Auto => "auto",
                McMode::Complete => "complete",
                McMode::Local => "local",
            }
            .into(),
        );
        put("max_steps", self.max_steps.to_string());
        put("tol", self.tol.to_string());
        put("resolution", self.resolution.to_string());
        put("sweep_step", self.sweep_step.to_string());
        put("clip_floor", self.clip_floor.to_string());
        put("strategy", self.strategy.name().into());
        if let Some(m) = &self.coupling {
            put("coupling", m.to_string());
        }
        match self.swo_solver {
            SwoSolver::ClosedFormUniform => put("swo_solver", "closed_form".into()),
            SwoSolver::MultiNetQp => put("swo_solver", "multinet".into()),
            SwoSolver::Grid { resolution } => {
                put("swo_solver", "grid".into());
                put("swo_grid_resolution", resolution.to_string());
            }
        }
        if let Some(b) = &self.swo_bounds {
            put("swo_bounds", format_bounds(b, self.networks.len()));
        }
        put("compare", self.compare.iter().map(|k| k.name()).collect::<Vec<_>>().join(" "));
        put("attack", join(&self.attack));
        put("attack_shape", join(&self.attack_shape));
        put("out_dir", self.out_dir.display().to_string());
        for (k, net) in self.networks.iter().enumerate() {
            put(&format!("network.{k}.nodes"), net.config.node_count.to_string());
            put(&format!("network.{k}.load"), net.config.load.to_string());
            put(&format!("network.{k}.space"), net.config.space.to_string());
            match &net.edges {
                Some(path) => put(&format!("network.{k}.edges"), path.display().to_string()),
                None => put(&format!("network.{k}.topology"), net.config.topology.to_string()),
            }
        }
        out
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn format_bounds(entries: &[Interval], n: usize) -> String {
    entries
        .chunks(n)
        .map(|row| row.iter().map(|iv| format!("{}:{}", iv.lo, iv.hi)).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join(";")
}

const GLOBAL_KEYS: &[&str] = &[
    "seed",
    "runs",
    "engine",
    "mc_mode",
    "max_steps",
    "tol",
    "resolution",
    "sweep_step",
    "clip_floor",
    "strategy",
    "coupling",
    "swo_solver",
    "swo_grid_resolution",
    "swo_bounds",
    "compare",
    "attack",
    "attack_shape",
    "out_dir",
];

const NETWORK_FIELDS: &[&str] = &["nodes", "load", "space", "topology", "edges"];

/// Value with the line it was read from.
struct Entry {
    line: usize,
    value: String,
}

struct Fields {
    global: BTreeMap<String, Entry>,
    networks: BTreeMap<usize, BTreeMap<String, Entry>>,
}

impl Fields {
    fn get<T>(
        &self,
        key: &str,
        default: Option<T>,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<T, ConfigError> {
        match self.global.get(key) {
            Some(e) => parse(&e.value).map_err(|m| ConfigError::Line { line: e.line, message: format!("{key}: {m}") }),
            None => default.ok_or_else(|| ConfigError::Missing(key.into())),
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.global.get(key).map_or(0, |e| e.line)
    }
}

fn tokenize(text: &str) -> Result<Fields, ConfigError> {
    let mut fields = Fields { global: BTreeMap::new(), networks: BTreeMap::new() };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| ConfigError::Line { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim().to_string());
        if value.is_empty() {
            return Err(err(format!("{key}: empty value")));
        }
        let entry = Entry { line, value };
        let slot = if let Some(rest) = key.strip_prefix("network.") {
            let (idx, field) = rest.split_once('.').ok_or_else(|| err(format!("unknown key `{key}`")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad network index in `{key}`")))?;
            if !NETWORK_FIELDS.contains(&field) {
                return Err(err(format!("unknown key `{key}`")));
            }
            fields.networks.entry(idx).or_default().entry(field.to_string())
        } else {
            if !GLOBAL_KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            fields.global.entry(key.to_string())
        };
        match slot {
            std::collections::btree_map::Entry::Occupied(prev) => {
                return Err(err(format!("duplicate key `{key}` (first set on line {})", prev.get().line)));
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(entry);
            }
        }
    }
    Ok(fields)
}

fn number<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse `{s}` as a number"))
}

fn in_range(lo: f64, hi: f64, lo_open: bool) -> impl Fn(&str) -> Result<f64, String> {
    move |s| {
        let v: f64 = number(s)?;
        let ok = v.is_finite() && v <= hi && if lo_open { v > lo } else { v >= lo };
        if ok {
            Ok(v)
        } else {
            let open = if lo_open { "(" } else { "[" };
            Err(format!("{v} is outside {open}{lo}, {hi}]"))
        }
    }
}

fn fractions(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| in_range(0.0, 1.0, false)(p.trim())).collect()
}

fn parse_matrix(s: &str) -> Result<CouplingMatrix, String> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| row.split(',').map(|x| number::<f64>(x.trim())).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(format!("coupling must be square, rows are {:?} long", rows.iter().map(Vec::len).collect::<Vec<_>>()));
    }
    CouplingMatrix::new(n, rows.concat()).map_err(|e| e.to_string())
}

fn parse_bounds(s: &str) -> Result<Vec<Vec<Interval>>, String> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|cell| {
                    let (lo, hi) = cell.trim().split_once(':').ok_or_else(|| format!("expected `lo:hi`, got `{cell}`"))?;
                    let lo = in_range(0.0, 1.0, false)(lo.trim())?;
                    let hi = in_range(0.0, 1.0, false)(hi.trim())?;
                    Interval::new(lo, hi).map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect()
}

/// Parses the flat key-value format.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let fields = tokenize(text)?;

    let mut networks = Vec::new();
    for (expected, (&idx, net)) in fields.networks.iter().enumerate() {
        let first_line = net.values().map(|e| e.line).min().unwrap_or(0);
        let at = |key: &str| net.get(key).map_or(first_line, |e| e.line);
        if idx != expected {
            return Err(ConfigError::Line { line: first_line, message: format!("network {expected} is missing before network {idx}") });
        }
        let need = |key: &str| net.get(key).ok_or_else(|| ConfigError::Missing(format!("network.{idx}.{key}")));
        let field_err = |key: &str, message: String| ConfigError::Line { line: at(key), message: format!("network.{idx}.{key}: {message}") };
        let node_count: usize = number(&need("nodes")?.value).map_err(|m| field_err("nodes", m))?;
        if node_count == 0 {
            return Err(field_err("nodes", "must be at least 1".into()));
        }
        let load: Distribution = need("load")?.value.parse().map_err(|e: cascade_core::ModelError| field_err("load", e.to_string()))?;
        let space: Distribution =
            need("space")?.value.parse().map_err(|e: cascade_core::ModelError| field_err("space", e.to_string()))?;
        let topology: Topology = match net.get("topology") {
            Some(e) => e.value.parse().map_err(|e: cascade_core::ModelError| field_err("topology", e.to_string()))?,
            None => Topology::Complete,
        };
        let edges = net.get("edges").map(|e| PathBuf::from(&e.value));
        if edges.is_some() && net.contains_key("topology") {
            return Err(field_err("edges", "`edges` and `topology` cannot both be set".into()));
        }
        let config = NetworkConfig { id: idx, node_count, load, space, topology };
        config.validate().map_err(|e| field_err("topology", e.to_string()))?;
        networks.push(NetworkEntry { config, edges });
    }
    if networks.is_empty() {
        return Err(ConfigError::Missing("network.0.nodes".into()));
    }
    let n = networks.len();

    let per_network = |key: &str, default: Vec<f64>| -> Result<Vec<f64>, ConfigError> {
        let v = fields.get(key, Some(default), fractions)?;
        if v.len() != n {
            return Err(ConfigError::Line {
                line: fields.line_of(key),
                message: format!("{key}: expected {n} values, got {}", v.len()),
            });
        }
        Ok(v)
    };
    let mut first_only = vec![0.0; n];
    first_only[0] = 1.0;
    let attack = per_network("attack", vec![0.0; n])?;
    let attack_shape = per_network("attack_shape", first_only)?;

    let strategy = fields.get("strategy", Some(StrategyKind::Swo), |s| {
        StrategyKind::parse(s).ok_or_else(|| format!("expected sbd | swo | fcc, got `{s}`"))
    })?;
    let coupling = match fields.global.get("coupling") {
        Some(_) => Some(fields.get("coupling", None, parse_matrix)?),
        None => None,
    };
    if let Some(m) = &coupling {
        if m.n() != n {
            return Err(ConfigError::Line {
                line: fields.line_of("coupling"),
                message: format!("coupling: matrix is {}x{} but there are {n} networks", m.n(), m.n()),
            });
        }
    }
    let default_solver = if n == 2 { "closed_form" } else { "multinet" };
    let solver_name = fields.get("swo_solver", Some(default_solver.to_string()), |s| Ok(s.to_string()))?;
    let swo_solver = match solver_name.as_str() {
        "closed_form" | "multinet" if fields.global.contains_key("swo_grid_resolution") => {
            return Err(ConfigError::Line {
                line: fields.line_of("swo_grid_resolution"),
                message: "swo_grid_resolution only applies to swo_solver = grid".into(),
            });
        }
        "closed_form" => SwoSolver::ClosedFormUniform,
        "multinet" => SwoSolver::MultiNetQp,
        "grid" => SwoSolver::Grid { resolution: fields.get("swo_grid_resolution", Some(1e-3), in_range(0.0, 1.0, true))? },
        other => {
            return Err(ConfigError::Line {
                line: fields.line_of("swo_solver"),
                message: format!("swo_solver: expected closed_form | grid | multinet, got `{other}`"),
            })
        }
    };
    if n != 2 && swo_solver != SwoSolver::MultiNetQp {
        return Err(ConfigError::Line {
            line: fields.line_of("swo_solver"),
            message: format!("swo_solver: only multinet handles {n} networks"),
        });
    }
    let swo_bounds = match fields.global.get("swo_bounds") {
        None => None,
        Some(e) => {
            let err = |message: String| ConfigError::Line { line: e.line, message: format!("swo_bounds: {message}") };
            let rows = parse_bounds(&e.value).map_err(err)?;
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(err(format!("expected {n} rows of {n} intervals")));
            }
            let entries = rows.concat();
            let b = SwoBounds::from_entries(n, entries.clone()).map_err(|x| err(x.to_string()))?;
            b.check_feasible().map_err(|x| err(x.to_string()))?;
            if entries.iter().all(|iv| *iv == Interval::UNIT) {
                None
            } else {
                Some(entries)
            }
        }
    };
    let compare = fields.get("compare", Some(vec![StrategyKind::Sbd, StrategyKind::Swo]), |s| {
        s.split_whitespace()
            .map(|k| StrategyKind::parse(k).ok_or_else(|| format!("expected sbd | swo | fcc, got `{k}`")))
            .collect()
    })?;
    let needs_coupling = strategy == StrategyKind::Fcc || compare.contains(&StrategyKind::Fcc);
    if needs_coupling && coupling.is_none() {
        return Err(ConfigError::Missing("coupling".into()));
    }

    let engine = fields.get("engine", Some(EngineKind::MeanField), |s| match s {
        "meanfield" => Ok(EngineKind::MeanField),
        "montecarlo" => Ok(EngineKind::MonteCarlo),
        _ => Err(format!("expected meanfield | montecarlo, got `{s}`")),
    })?;
    let mc_mode = fields.get("mc_mode", Some(McMode::Auto), |s| match s {
        "auto" => Ok(McMode::Auto),
        "complete" => Ok(McMode::Complete),
        "local" => Ok(McMode::Local),
        _ => Err(format!("expected auto | complete | local, got `{s}`")),
    })?;
    let positive = |s: &str| -> Result<usize, String> {
        let v: usize = number(s)?;
        if v == 0 {
            Err("must be at least 1".into())
        } else {
            Ok(v)
        }
    };

    Ok(RunConfig {
        networks,
        attack,
        attack_shape,
        strategy,
        coupling,
        swo_solver,
        swo_bounds,
        compare,
        engine,
        mc_mode,
        seed: fields.get("seed", Some(0), number)?,
        runs: fields.get("runs", Some(100), positive)?,
        max_steps: fields.get("max_steps", Some(cascade_core::meanfield::DEFAULT_MAX_STEPS), positive)?,
        tol: fields.get("tol", Some(1e-3), in_range(0.0, 0.5, true))?,
        resolution: fields.get("resolution", Some(0.05), in_range(0.0, 1.0, true))?,
        sweep_step: fields.get("sweep_step", Some(0.05), in_range(0.0, 1.0, true))?,
        clip_floor: fields.get("clip_floor", Some(0.0), in_range(0.0, 1.0, false))?,
        out_dir: fields.get("out_dir", Some(PathBuf::from("out")), |s| Ok(PathBuf::from(s)))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTICAL: &str = "\
# two identical fully connected networks
network.0.nodes = 1000000
network.0.load = point:75
network.0.space = uniform:20,180
network.1.nodes = 1000000
network.1.load = point:75
network.1.space = uniform:20,180
attack = 0.3, 0
";

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse_config(IDENTICAL).unwrap();
        assert_eq!(cfg.networks.len(), 2);
        assert_eq!(cfg.strategy, StrategyKind::Swo);
        assert_eq!(cfg.attack_shape, vec![1.0, 0.0]);
        let text = cfg.emit();
        assert_eq!(parse_config(&text).unwrap(), cfg);
        assert_eq!(parse_config(&text).unwrap().emit(), text);
    }

    #[test]
    fn out_of_range_coupling_is_rejected() {
        let text = format!("{IDENTICAL}strategy = fcc\ncoupling = 1.3,-0.3;0.5,0.5\n");
        let err = parse_config(&text).unwrap_err();
        match err {
            ConfigError::Line { line, message } => {
                assert_eq!(line, 10);
                assert!(message.starts_with("coupling:"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_point_at_the_line() {
        let cases = [
            ("network.0.nodes = 10\nbogus = 1\n", 2, "unknown key"),
            ("network.0.nodes = 10\nnetwork.0.load = point:1\nnetwork.0.space = uniform:5,1\n", 3, "network.0.space"),
            ("network.0.nodes = 10\nnetwork.0.load = point:1\nnetwork.0.space = uniform:1,5\ntol = 0\n", 4, "outside"),
            ("seed = 1\nseed = 2\n", 2, "duplicate"),
            ("just text\n", 1, "key = value"),
            ("network.0.nodes = 10\nnetwork.0.load = point:1\nnetwork.0.space = uniform:1,5\nattack = 0.5,0.5\n", 4, "expected 1 values"),
        ];
        for (text, line, needle) in cases {
            match parse_config(text) {
                Err(ConfigError::Line { line: l, message }) => {
                    assert_eq!(l, line, "{text}: {message}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn missing_pieces_are_named() {
        assert_eq!(parse_config("seed = 1\n").unwrap_err(), ConfigError::Missing("network.0.nodes".into()));
        let text = format!("{IDENTICAL}strategy = fcc\n");
        assert_eq!(parse_config(&text).unwrap_err(), ConfigError::Missing("coupling".into()));
        let gap = "network.0.nodes = 1\nnetwork.0.load = point:1\nnetwork.0.space = point:1\nnetwork.2.nodes = 1\n";
        assert!(matches!(parse_config(gap), Err(ConfigError::Line { line: 4, .. })));
    }

    #[test]
    fn bounds_and_grid_solver_survive_emission() {
        let text = format!("{IDENTICAL}swo_solver = grid\nswo_grid_resolution = 0.01\nswo_bounds = 0.2:0.8,0:1;0:1,0.5:1\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.swo_solver, SwoSolver::Grid { resolution: 0.01 });
        assert_eq!(cfg.swo_strategy().label(), "SWO(bounded)");
        assert_eq!(parse_config(&cfg.emit()).unwrap(), cfg);
    }
}
