//! Critical attack sizes, attack sweeps, coupling heatmaps and strategy comparisons.
//!
//! An attack of size `s` removes `s * shape_k` of network `k` (clamped to `[0, 1]`).
//! The critical size is the smallest `s` that ends in breakdown, located by bisection
//! on `[0, 1]` under the assumption that breakdown is monotone in `s`.

use std::io;
use std::sync::Arc;

use rayon::prelude::*;

use crate::coupling::CouplingMatrix;
use crate::error::{ModelError, StrategyError};
use crate::meanfield::MeanFieldSystem;
use crate::model::{validate_system, AttackSpec, NetworkConfig};
use crate::montecarlo::{mc_run, Engine, Graph, NodePopulation};
use crate::strategy::CouplingStrategy;

/// Populations are kept in memory across evaluations while their estimated size stays
/// below this many bytes.
const CACHE_BYTE_LIMIT: f64 = 1.0e9;

/// Rough footprint of one sampled population: per-node draws plus adjacency lists.
fn population_bytes(networks: &[NetworkConfig]) -> f64 {
    networks
        .iter()
        .map(|c| {
            let n = c.node_count as f64;
            n * 32.0 + c.topology.mean_degree().unwrap_or(0.0) * n * 4.0
        })
        .sum()
}

/// How a single attack is played out.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluator {
    MeanField { max_steps: usize },
    /// Breakdown when more than half of the seeds break down.
    MonteCarlo { engine: Engine, seeds: Vec<u64>, max_steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub breakdown: bool,
    pub mean_fraction: f64,
    pub std: f64,
    pub n_runs: usize,
}

/// A system ready for repeated evaluations. Monte-Carlo populations depend only on the
/// seed, never on the attack, and are sampled once when they fit in memory.
pub struct Scenario {
    pub networks: Vec<NetworkConfig>,
    pub shape: Vec<f64>,
    pub evaluator: Evaluator,
    cache: Vec<NodePopulation>,
    graphs: Vec<Option<Arc<Graph>>>,
}

impl Scenario {
    pub fn new(networks: Vec<NetworkConfig>, shape: Vec<f64>, evaluator: Evaluator) -> Result<Self, ModelError> {
        if shape.len() != networks.len() {
            return Err(ModelError::DimensionMismatch { expected: networks.len(), got: shape.len() });
        }
        if shape.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ModelError::Parse(format!("attack shape must be non-negative, got {shape:?}")));
        }
        validate_system(&networks, &AttackSpec::scaled(&shape, 0.0))?;
        let cache = match &evaluator {
            Evaluator::MonteCarlo { seeds, .. } => {
                if population_bytes(&networks) * seeds.len() as f64 <= CACHE_BYTE_LIMIT {
                    seeds.par_iter().map(|&s| NodePopulation::sample(&networks, s)).collect()
                } else {
                    Vec::new()
                }
            }
            Evaluator::MeanField { .. } => Vec::new(),
        };
        let graphs = vec![None; networks.len()];
        Ok(Scenario { networks, shape, evaluator, cache, graphs })
    }

    /// Uses `graph` for network `k` in every Monte-Carlo run instead of a generated one.
    pub fn with_graph(mut self, k: usize, graph: Arc<Graph>) -> Result<Self, ModelError> {
        let expected = self.networks.get(k).map(|c| c.node_count);
        if expected != Some(graph.node_count()) {
            return Err(ModelError::InvalidNetwork {
                id: k,
                reason: format!("graph has {} nodes, network has {expected:?}", graph.node_count()),
            });
        }
        for pop in &mut self.cache {
            pop.networks[k].graph = Some(graph.clone());
        }
        self.graphs[k] = Some(graph);
        Ok(self)
    }

    fn population(&self, seed: u64) -> NodePopulation {
        let mut pop = NodePopulation::sample(&self.networks, seed);
        for (k, g) in self.graphs.iter().enumerate() {
            if let Some(g) = g {
                pop.networks[k].graph = Some(g.clone());
            }
        }
        pop
    }

    pub fn attack(&self, size: f64) -> AttackSpec {
        AttackSpec::scaled(&self.shape, size)
    }

    /// Plays out an attack of the given size.
    pub fn evaluate(&self, size: f64, strategy: &CouplingStrategy) -> Result<Evaluation, StrategyError> {
        let attack = self.attack(size);
        match &self.evaluator {
            Evaluator::MeanField { max_steps } => {
                let sys = MeanFieldSystem::new(self.networks.clone(), attack)?;
                let traj = sys.run(strategy, *max_steps)?;
                Ok(Evaluation {
                    breakdown: traj.outcome.is_breakdown(),
                    mean_fraction: traj.surviving_fraction(&sys),
                    std: 0.0,
                    n_runs: 1,
                })
            }
            Evaluator::MonteCarlo { engine, seeds, max_steps } => {
                let runs: Vec<(bool, f64)> = (0..seeds.len())
                    .into_par_iter()
                    .map(|i| {
                        let owned;
                        let pop = match self.cache.get(i) {
                            Some(p) => p,
                            None => {
                                owned = self.population(seeds[i]);
                                &owned
                            }
                        };
                        let run = mc_run(&self.networks, pop, &attack, strategy, *engine, *max_steps)?;
                        Ok((run.is_breakdown(), run.surviving_fraction()))
                    })
                    .collect::<Result<_, StrategyError>>()?;
                let n = runs.len();
                let broken = runs.iter().filter(|r| r.0).count();
                let (mean, std) = mean_std(runs.iter().map(|r| r.1));
                Ok(Evaluation { breakdown: 2 * broken > n, mean_fraction: mean, std, n_runs: n })
            }
        }
    }
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalKind {
    /// Breakdown inside the bracket.
    Found,
    /// Even the full attack leaves survivors.
    NoBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalSize {
    /// Bracket midpoint (1.0 when there is no breakdown).
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub kind: CriticalKind,
}

/// Bisection for the smallest breaking attack size. `breaks` must be monotone.
pub fn bisect_critical<E>(mut breaks: impl FnMut(f64) -> Result<bool, E>, tol: f64) -> Result<CriticalSize, E> {
    if !breaks(1.0)? {
        return Ok(CriticalSize { estimate: 1.0, lo: 1.0, hi: 1.0, kind: CriticalKind::NoBreakdown });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    if breaks(0.0)? {
        return Ok(CriticalSize { estimate: 0.0, lo: 0.0, hi: 0.0, kind: CriticalKind::Found });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if breaks(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalSize { estimate: 0.5 * (lo + hi), lo, hi, kind: CriticalKind::Found })
}

pub fn critical_attack_size(
    scenario: &Scenario,
    strategy: &CouplingStrategy,
    tol: f64,
) -> Result<CriticalSize, StrategyError> {
    bisect_critical(|s| scenario.evaluate(s, strategy).map(|e| e.breakdown), tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub attack: f64,
    pub mean_fraction: f64,
    pub std: f64,
    pub n_runs: usize,
}

/// Surviving fraction over a grid of attack sizes.
pub fn attack_sweep(
    scenario: &Scenario,
    strategy: &CouplingStrategy,
    grid: &[f64],
) -> Result<Vec<SweepPoint>, StrategyError> {
    grid.par_iter()
        .map(|&a| {
            let e = scenario.evaluate(a, strategy)?;
            Ok(SweepPoint { attack: a, mean_fraction: e.mean_fraction, std: e.std, n_runs: e.n_runs })
        })
        .collect()
}

/// `0, step, 2 step, ..., 1` (the last point is exactly one).
pub fn unit_grid(step: f64) -> Vec<f64> {
    let k = (1.0 / step).round().max(1.0) as usize;
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapCell {
    pub alpha: f64,
    pub beta: f64,
    pub critical_size: f64,
}

/// Critical attack size for every fixed coupling `(alpha, beta)` on a grid of the
/// given resolution. Values below `clip_floor` are raised to it.
pub fn fcc_grid_sweep(
    scenario: &Scenario,
    resolution: f64,
    clip_floor: f64,
    tol: f64,
) -> Result<Vec<HeatmapCell>, StrategyError> {
    if scenario.networks.len() != 2 {
        return Err(ModelError::DimensionMismatch { expected: 2, got: scenario.networks.len() }.into());
    }
    let axis = unit_grid(resolution);
    let cells: Vec<(f64, f64)> = axis.iter().flat_map(|&a| axis.iter().map(move |&b| (a, b))).collect();
    cells
        .par_iter()
        .map(|&(alpha, beta)| {
            let m = CouplingMatrix::two(alpha, beta).map_err(ModelError::from)?;
            let c = critical_attack_size(scenario, &CouplingStrategy::Fixed(m), tol)?;
            Ok(HeatmapCell { alpha, beta, critical_size: c.estimate.max(clip_floor) })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub label: String,
    pub sweep: Vec<SweepPoint>,
    pub critical: CriticalSize,
}

/// Sweep and critical size of several strategies. Monte-Carlo runs use the same seeds,
/// hence the same populations and attacked nodes, for every strategy.
pub fn compare_strategies(
    scenario: &Scenario,
    strategies: &[CouplingStrategy],
    grid: &[f64],
    tol: f64,
) -> Result<Vec<StrategyResult>, StrategyError> {
    strategies
        .par_iter()
        .map(|s| {
            Ok(StrategyResult {
                label: s.label(),
                sweep: attack_sweep(scenario, s, grid)?,
                critical: critical_attack_size(scenario, s, tol)?,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: io::Write>(points: &[SweepPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["attack", "mean_fraction", "std", "n_runs"])?;
    for p in points {
        w.write_record(&[p.attack.to_string(), p.mean_fraction.to_string(), p.std.to_string(), p.n_runs.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_heatmap_csv<W: io::Write>(cells: &[HeatmapCell], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "beta", "critical_size"])?;
    for c in cells {
        w.write_record(&[c.alpha.to_string(), c.beta.to_string(), c.critical_size.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
