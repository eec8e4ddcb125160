//! Subcommand dispatch and artifact writing.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cascade_core::meanfield::MeanFieldSystem;
use cascade_core::montecarlo::{mc_run, Graph, McOutcome, NodePopulation};
use cascade_core::search::{
    attack_sweep, compare_strategies, critical_attack_size, fcc_grid_sweep, unit_grid, write_heatmap_csv,
    write_sweep_csv, CriticalKind, CriticalSize, Evaluator, Scenario,
};
use cascade_core::{AttackSpec, MeanFieldOutcome};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{EngineKind, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    MeanField,
    Simulate,
    Critical,
    Sweep,
    Heatmap,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::MeanField => "meanfield",
            Command::Simulate => "simulate",
            Command::Critical => "critical",
            Command::Sweep => "sweep",
            Command::Heatmap => "heatmap",
            Command::Compare => "compare",
        }
    }
}

/// Written next to the CSV files of every run.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub core_version: String,
    pub config_sha256: String,
    pub config: String,
    pub engine: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
}

/// What a run printed and wrote.
#[derive(Debug)]
pub struct RunReport {
    pub lines: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub fn config_hash(normalized: &str) -> String {
    let digest = Sha256::digest(normalized.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn load_graphs(cfg: &RunConfig, base: &Path) -> Result<Vec<Option<Arc<Graph>>>> {
    cfg.networks
        .iter()
        .map(|net| {
            let Some(path) = &net.edges else { return Ok(None) };
            let path = if path.is_absolute() { path.clone() } else { base.join(path) };
            let file = File::open(&path).with_context(|| format!("opening edge list {}", path.display()))?;
            let graph = Graph::read_edge_list(BufReader::new(file), Some(net.config.node_count))
                .with_context(|| format!("reading edge list {}", path.display()))?;
            Ok(Some(Arc::new(graph)))
        })
        .collect()
}

fn scenario(cfg: &RunConfig, graphs: &[Option<Arc<Graph>>]) -> Result<Scenario> {
    let evaluator = match cfg.engine {
        EngineKind::MeanField => {
            if graphs.iter().any(Option::is_some) {
                bail!("imported edge lists need engine = montecarlo");
            }
            Evaluator::MeanField { max_steps: cfg.max_steps }
        }
        EngineKind::MonteCarlo => {
            Evaluator::MonteCarlo { engine: cfg.mc_engine(), seeds: cfg.seeds(), max_steps: cfg.max_steps }
        }
    };
    let mut sc = Scenario::new(cfg.network_configs(), cfg.attack_shape.clone(), evaluator)?;
    for (k, g) in graphs.iter().enumerate() {
        if let Some(g) = g {
            sc = sc.with_graph(k, g.clone())?;
        }
    }
    Ok(sc)
}

fn create(dir: &Path, name: &str, outputs: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    outputs.push(path);
    Ok(BufWriter::new(file))
}

fn kind_name(c: &CriticalSize) -> &'static str {
    match c.kind {
        CriticalKind::Found => "found",
        CriticalKind::NoBreakdown => "no_breakdown",
    }
}

fn outcome_name(o: &McOutcome) -> &'static str {
    match o {
        McOutcome::Survived(_) => "survived",
        McOutcome::Breakdown => "breakdown",
        McOutcome::NonConverged(_) => "non_converged",
    }
}

/// Runs one subcommand. Relative edge-list paths resolve against `base`.
pub fn run(command: Command, cfg: &RunConfig, base: &Path) -> Result<RunReport> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let graphs = load_graphs(cfg, base)?;
    let mut lines = Vec::new();
    let mut outputs = Vec::new();
    let mut seeds = Vec::new();

    match command {
        Command::MeanField => {
            if graphs.iter().any(Option::is_some) {
                bail!("the mean-field recursion ignores edge lists; use simulate");
            }
            let sys = MeanFieldSystem::new(cfg.network_configs(), AttackSpec::new(cfg.attack.clone())?)?;
            let traj = sys.run(&cfg.strategy(), cfg.max_steps)?;
            traj.write_csv(create(dir, "trajectory.csv", &mut outputs)?)?;
            let outcome = match &traj.outcome {
                MeanFieldOutcome::NoCascade => "NoCascade".to_string(),
                MeanFieldOutcome::Survived(f) => format!("Survived {f:?}"),
                MeanFieldOutcome::Breakdown => "Breakdown".to_string(),
                MeanFieldOutcome::NonConverged(f) => format!("NonConverged {f:?}"),
            };
            lines.push(format!("outcome: {outcome}"));
            lines.push(format!("steps: {}", traj.steps()));
            lines.push(format!("surviving fraction: {}", traj.surviving_fraction(&sys)));
        }
        Command::Simulate => {
            seeds = cfg.seeds();
            let nets = cfg.network_configs();
            let attack = AttackSpec::new(cfg.attack.clone())?;
            let strategy = cfg.strategy();
            let engine = cfg.mc_engine();
            let runs = seeds
                .par_iter()
                .map(|&seed| {
                    let mut pop = NodePopulation::sample(&nets, seed);
                    for (k, g) in graphs.iter().enumerate() {
                        if let Some(g) = g {
                            pop.networks[k].graph = Some(g.clone());
                        }
                    }
                    mc_run(&nets, &pop, &attack, &strategy, engine, cfg.max_steps)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut summary = csv_writer(create(dir, "summary.csv", &mut outputs)?);
            summary.write_record(["seed", "outcome", "steps", "surviving_fraction"])?;
            for (seed, run) in seeds.iter().zip(&runs) {
                summary.write_record(&[
                    seed.to_string(),
                    outcome_name(&run.outcome).to_string(),
                    run.records.len().to_string(),
                    run.surviving_fraction().to_string(),
                ])?;
                run.write_csv(create(dir, &format!("trajectories/seed_{seed}.csv"), &mut outputs)?)?;
            }
            summary.flush()?;
            let broken = runs.iter().filter(|r| r.is_breakdown()).count();
            let mean = runs.iter().map(|r| r.surviving_fraction()).sum::<f64>() / runs.len() as f64;
            lines.push(format!("runs: {}  breakdowns: {broken}", runs.len()));
            lines.push(format!("mean surviving fraction: {mean}"));
        }
        Command::Critical => {
            let sc = scenario(cfg, &graphs)?;
            seeds = sc_seeds(&sc);
            let strategy = cfg.strategy();
            let c = critical_attack_size(&sc, &strategy, cfg.tol)?;
            let mut w = csv_writer(create(dir, "critical.csv", &mut outputs)?);
            w.write_record(["strategy", "critical_size", "lo", "hi", "kind"])?;
            w.write_record(&[strategy.label(), c.estimate.to_string(), c.lo.to_string(), c.hi.to_string(), kind_name(&c).into()])?;
            w.flush()?;
            lines.push(format!("{} critical attack size: {} (bracket [{}, {}], {})", strategy.label(), c.estimate, c.lo, c.hi, kind_name(&c)));
        }
        Command::Sweep => {
            let sc = scenario(cfg, &graphs)?;
            seeds = sc_seeds(&sc);
            let points = attack_sweep(&sc, &cfg.strategy(), &unit_grid(cfg.sweep_step))?;
            write_sweep_csv(&points, create(dir, "sweep.csv", &mut outputs)?)?;
            lines.push(format!("{} attack sizes written", points.len()));
        }
        Command::Heatmap => {
            let sc = scenario(cfg, &graphs)?;
            seeds = sc_seeds(&sc);
            let cells = fcc_grid_sweep(&sc, cfg.resolution, cfg.clip_floor, cfg.tol)?;
            write_heatmap_csv(&cells, create(dir, "heatmap.csv", &mut outputs)?)?;
            if let Some(best) = cells.iter().max_by(|a, b| a.critical_size.total_cmp(&b.critical_size)) {
                lines.push(format!(
                    "{} cells; best FCC({}, {}) with critical attack size {}",
                    cells.len(),
                    best.alpha,
                    best.beta,
                    best.critical_size
                ));
            }
        }
        Command::Compare => {
            let sc = scenario(cfg, &graphs)?;
            seeds = sc_seeds(&sc);
            let strategies: Vec<_> = cfg.compare.iter().map(|&k| cfg.strategy_of(k)).collect();
            let results = compare_strategies(&sc, &strategies, &unit_grid(cfg.sweep_step), cfg.tol)?;
            let mut table = csv_writer(create(dir, "compare.csv", &mut outputs)?);
            table.write_record(["strategy", "critical_size", "lo", "hi", "kind"])?;
            let mut sweeps = csv_writer(create(dir, "compare_sweep.csv", &mut outputs)?);
            sweeps.write_record(["strategy", "attack", "mean_fraction", "std", "n_runs"])?;
            for r in &results {
                let c = &r.critical;
                table.write_record(&[r.label.clone(), c.estimate.to_string(), c.lo.to_string(), c.hi.to_string(), kind_name(c).into()])?;
                for p in &r.sweep {
                    sweeps.write_record(&[
                        r.label.clone(),
                        p.attack.to_string(),
                        p.mean_fraction.to_string(),
                        p.std.to_string(),
                        p.n_runs.to_string(),
                    ])?;
                }
                lines.push(format!("{:<14} {:.6} ({})", r.label, c.estimate, kind_name(c)));
            }
            table.flush()?;
            sweeps.flush()?;
        }
    }

    let normalized = cfg.emit();
    let manifest = Manifest {
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: cascade_core::VERSION.into(),
        config_sha256: config_hash(&normalized),
        config: normalized,
        engine: if command == Command::Simulate || (command != Command::MeanField && cfg.engine == EngineKind::MonteCarlo) {
            format!("montecarlo:{:?}", cfg.mc_engine()).to_lowercase()
        } else {
            "meanfield".into()
        },
        seeds,
        outputs: outputs.iter().map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string()).collect(),
    };
    let manifest_path = dir.join("manifest.json");
    let mut f = BufWriter::new(File::create(&manifest_path)?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    f.flush()?;
    Ok(RunReport { lines, outputs, manifest: manifest_path })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn sc_seeds(sc: &Scenario) -> Vec<u64> {
    match &sc.evaluator {
        Evaluator::MonteCarlo { seeds, .. } => seeds.clone(),
        Evaluator::MeanField { .. } => Vec::new(),
    }
}
