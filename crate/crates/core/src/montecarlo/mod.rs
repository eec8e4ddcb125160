//! Finite-population simulation of the cascade.
//!
//! Nodes get their load and free space drawn once per seed ([`NodePopulation`]). The
//! attack removes the first `round(p N)` nodes of a per-seed random order, so larger
//! attacks always contain smaller ones.
//!
//! Two engines share the same step structure:
//!
//! * [`Engine::Complete`]: every survivor of a network receives the same share, so a
//!   network is described by one level and the survivors sorted by free space.
//! * [`Engine::Local`]: a failed node hands its load to its live neighbours in its own
//!   network, and to its partner node (same index modulo the network size) plus the
//!   partner's live neighbours in another network. With no live recipient the share is
//!   spread over every survivor of the target network, which is also how networks
//!   without a graph behave.

pub mod graph;

use std::io;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coupling::CouplingMatrix;
use crate::error::StrategyError;
use crate::model::{AttackSpec, NetworkConfig, Topology};
use crate::strategy::{CouplingStrategy, NetworkView, SystemView};

pub use graph::{barabasi_albert, erdos_renyi, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Complete,
    Local,
}

impl Engine {
    /// Complete mixing when every network is fully connected, local otherwise.
    pub fn for_networks(cfgs: &[NetworkConfig]) -> Self {
        if cfgs.iter().all(|c| c.topology == Topology::Complete) {
            Engine::Complete
        } else {
            Engine::Local
        }
    }
}

/// Per-node draws for one network.
#[derive(Debug, Clone)]
pub struct NetworkNodes {
    pub load: Vec<f64>,
    pub space: Vec<f64>,
    /// Attack order: the first `round(p N)` entries are removed.
    pub attack_order: Vec<u32>,
    pub graph: Option<Arc<Graph>>,
    by_space: Vec<u32>,
}

impl NetworkNodes {
    pub fn new(load: Vec<f64>, space: Vec<f64>, attack_order: Vec<u32>, graph: Option<Arc<Graph>>) -> Self {
        let mut by_space: Vec<u32> = (0..space.len() as u32).collect();
        by_space.sort_by(|a, b| space[*a as usize].total_cmp(&space[*b as usize]).then(a.cmp(b)));
        NetworkNodes { load, space, attack_order, graph, by_space }
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct NodePopulation {
    pub networks: Vec<NetworkNodes>,
}

impl NodePopulation {
    /// Draws loads, free spaces, the attack order and the graph of every network from
    /// independent streams of one seed.
    pub fn sample(cfgs: &[NetworkConfig], seed: u64) -> Self {
        let networks = cfgs
            .iter()
            .enumerate()
            .map(|(k, cfg)| {
                let stream = |purpose: u64| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(4 * k as u64 + purpose);
                    rng
                };
                let n = cfg.node_count;
                let mut rng = stream(0);
                let load: Vec<f64> = (0..n).map(|_| cfg.load.sample(&mut rng)).collect();
                let space: Vec<f64> = (0..n).map(|_| cfg.space.sample(&mut rng)).collect();
                let mut order: Vec<u32> = (0..n as u32).collect();
                order.shuffle(&mut stream(1));
                let graph = match cfg.topology {
                    Topology::Complete => None,
                    Topology::ErdosRenyi { mean_degree } => Some(Arc::new(erdos_renyi(n, mean_degree, &mut stream(2)))),
                    Topology::BarabasiAlbert { mean_degree } => {
                        Some(Arc::new(barabasi_albert(n, mean_degree, &mut stream(2))))
                    }
                };
                NetworkNodes::new(load, space, order, graph)
            })
            .collect();
        NodePopulation { networks }
    }

    /// Replaces the graph of network `k`, e.g. with one read from an edge list.
    pub fn with_graph(mut self, k: usize, graph: Graph) -> Self {
        self.networks[k].graph = Some(Arc::new(graph));
        self
    }
}

#[derive(Debug, Clone)]
struct NetState {
    alive: Vec<bool>,
    received: Vec<f64>,
    n_alive: usize,
    level: f64,
    sum_received: f64,
    // complete engine: survivors by free space, deaths advance the cursor
    order: Vec<u32>,
    prefix_load: Vec<f64>,
    cursor: usize,
    pending: Vec<u32>,
    pool: f64,
    last_step: f64,
}

/// Simulation state between steps.
#[derive(Debug, Clone)]
pub struct McState {
    pub t: usize,
    engine: Engine,
    nets: Vec<NetState>,
    stamp: Vec<Vec<u32>>,
    touched: Vec<Vec<u32>>,
}

/// Removes the attacked nodes; their loads form the first pools.
pub fn apply_attack(pop: &NodePopulation, attack: &AttackSpec, engine: Engine) -> McState {
    let nets = pop
        .networks
        .iter()
        .zip(attack.fractions())
        .map(|(nodes, &p)| {
            let n = nodes.len();
            let killed = ((p * n as f64).round() as usize).min(n);
            let mut alive = vec![true; n];
            let pending: Vec<u32> = nodes.attack_order[..killed].to_vec();
            for &i in &pending {
                alive[i as usize] = false;
            }
            let pool = pending.iter().map(|&i| nodes.load[i as usize]).sum();
            let (order, prefix_load) = if engine == Engine::Complete {
                let order: Vec<u32> = nodes.by_space.iter().copied().filter(|&i| alive[i as usize]).collect();
                let mut prefix = Vec::with_capacity(order.len() + 1);
                prefix.push(0.0);
                let mut acc = 0.0;
                for &i in &order {
                    acc += nodes.load[i as usize];
                    prefix.push(acc);
                }
                (order, prefix)
            } else {
                (Vec::new(), Vec::new())
            };
            NetState {
                alive,
                received: if engine == Engine::Local { vec![0.0; n] } else { Vec::new() },
                n_alive: n - killed,
                level: 0.0,
                sum_received: 0.0,
                order,
                prefix_load,
                cursor: 0,
                pending,
                pool,
                last_step: 0.0,
            }
        })
        .collect::<Vec<_>>();
    let sizes: Vec<usize> = pop.networks.iter().map(NetworkNodes::len).collect();
    McState {
        t: 0,
        engine,
        nets,
        stamp: if engine == Engine::Local { sizes.iter().map(|&n| vec![u32::MAX; n]).collect() } else { Vec::new() },
        touched: vec![Vec::new(); sizes.len()],
    }
}

impl McState {
    pub fn n_alive(&self) -> Vec<usize> {
        self.nets.iter().map(|s| s.n_alive).collect()
    }

    /// Load released by the nodes that failed most recently, per network.
    pub fn pools(&self) -> Vec<f64> {
        self.nets.iter().map(|s| s.pool).collect()
    }

    /// Mean extra load carried by the survivors of each network.
    pub fn levels(&self) -> Vec<f64> {
        self.nets.iter().map(|s| s.level).collect()
    }

    pub fn alive(&self) -> Vec<bool> {
        self.nets.iter().map(|s| s.n_alive > 0).collect()
    }

    /// Load carried by survivors plus load waiting in the pools, per network.
    pub fn held_load(&self, pop: &NodePopulation) -> Vec<f64> {
        self.nets
            .iter()
            .zip(&pop.networks)
            .map(|(s, nodes)| {
                let own: f64 = match self.engine {
                    Engine::Complete => s.prefix_load[s.prefix_load.len() - 1] - s.prefix_load[s.cursor],
                    Engine::Local => nodes.load.iter().zip(&s.alive).filter(|(_, a)| **a).map(|(l, _)| l).sum(),
                };
                own + s.sum_received + s.pool
            })
            .collect()
    }

    pub fn view(&self, cfgs: &[NetworkConfig], attack: &AttackSpec) -> SystemView {
        SystemView {
            t: self.t,
            networks: self
                .nets
                .iter()
                .zip(cfgs)
                .enumerate()
                .map(|(k, (s, cfg))| NetworkView {
                    node_count: cfg.node_count as f64,
                    attack: attack[k],
                    n_alive: s.n_alive as f64,
                    failed_fraction: 1.0 - s.n_alive as f64 / cfg.node_count as f64,
                    level: s.level,
                    last_step: s.last_step,
                    pool: s.pool,
                    load_mean: cfg.load.mean(),
                    space: cfg.space,
                })
                .collect(),
        }
    }

    /// Hands the pending pools to the survivors and returns the number of new failures.
    pub fn step(&mut self, pop: &NodePopulation, coupling: &CouplingMatrix) -> usize {
        match self.engine {
            Engine::Complete => self.step_complete(pop, coupling),
            Engine::Local => self.step_local(pop, coupling),
        }
    }

    fn step_complete(&mut self, pop: &NodePopulation, coupling: &CouplingMatrix) -> usize {
        let received = coupling.route(&self.pools());
        let mut deaths = 0;
        for (k, s) in self.nets.iter_mut().enumerate() {
            s.pending.clear();
            s.last_step = if s.n_alive > 0 { received[k] / s.n_alive as f64 } else { 0.0 };
            s.level += s.last_step;
            let nodes = &pop.networks[k];
            let start = s.cursor;
            while s.cursor < s.order.len() && nodes.space[s.order[s.cursor] as usize] < s.level {
                s.cursor += 1;
            }
            let k_dead = s.cursor - start;
            s.pending.extend_from_slice(&s.order[start..s.cursor]);
            s.pool = s.prefix_load[s.cursor] - s.prefix_load[start] + k_dead as f64 * s.level;
            s.n_alive -= k_dead;
            s.sum_received = s.level * s.n_alive as f64;
            deaths += k_dead;
        }
        self.t += 1;
        deaths
    }

    fn step_local(&mut self, pop: &NodePopulation, coupling: &CouplingMatrix) -> usize {
        let n = self.nets.len();
        let stamp_id = self.t as u32;
        let mut broadcast = vec![0.0; n];
        let mut placed = vec![0.0; n];
        for list in &mut self.touched {
            list.clear();
        }
        let mut recipients: Vec<u32> = Vec::new();
        for x in 0..n {
            let pending = std::mem::take(&mut self.nets[x].pending);
            for &i in &pending {
                let amount = pop.networks[x].load[i as usize] + self.nets[x].received[i as usize];
                for y in 0..n {
                    let share = amount * coupling.get(x, y);
                    if share == 0.0 {
                        continue;
                    }
                    recipients.clear();
                    let target = &pop.networks[y];
                    let alive = &self.nets[y].alive;
                    if let Some(g) = &target.graph {
                        let anchor = if x == y { i as usize } else { i as usize % target.len() };
                        if x != y && alive[anchor] {
                            recipients.push(anchor as u32);
                        }
                        recipients.extend(g.neighbors(anchor).iter().copied().filter(|&j| alive[j as usize]));
                    }
                    if recipients.is_empty() {
                        broadcast[y] += share;
                        continue;
                    }
                    let each = share / recipients.len() as f64;
                    let net = &mut self.nets[y];
                    for &j in &recipients {
                        net.received[j as usize] += each;
                        if self.stamp[y][j as usize] != stamp_id {
                            self.stamp[y][j as usize] = stamp_id;
                            self.touched[y].push(j);
                        }
                    }
                    placed[y] += share;
                }
            }
        }
        let mut deaths = 0;
        for y in 0..n {
            let nodes = &pop.networks[y];
            let s = &mut self.nets[y];
            let spread = broadcast[y] > 0.0 && s.n_alive > 0;
            if spread {
                let each = broadcast[y] / s.n_alive as f64;
                for (r, a) in s.received.iter_mut().zip(&s.alive) {
                    if *a {
                        *r += each;
                    }
                }
                placed[y] += broadcast[y];
            }
            s.last_step = if s.n_alive > 0 { placed[y] / s.n_alive as f64 } else { 0.0 };
            s.sum_received += placed[y];
            let mut dead = Vec::new();
            let mut check = |j: usize| {
                if s.alive[j] && s.received[j] > nodes.space[j] {
                    dead.push(j as u32);
                }
            };
            if spread {
                (0..nodes.len()).for_each(&mut check);
            } else {
                self.touched[y].iter().for_each(|&j| check(j as usize));
            }
            s.pool = 0.0;
            for &j in &dead {
                let j = j as usize;
                s.alive[j] = false;
                s.pool += nodes.load[j] + s.received[j];
                s.sum_received -= s.received[j];
            }
            s.n_alive -= dead.len();
            s.level = if s.n_alive > 0 { s.sum_received / s.n_alive as f64 } else { 0.0 };
            deaths += dead.len();
            s.pending = dead;
        }
        self.t += 1;
        deaths
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McNetworkRecord {
    pub n_alive: usize,
    /// Load routed at this step.
    pub released: f64,
    pub q_step: f64,
    /// Mean extra load of the survivors after the step.
    pub q_cum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRecord {
    pub t: usize,
    pub networks: Vec<McNetworkRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum McOutcome {
    /// No node failed in the last step; surviving fraction per network.
    Survived(Vec<f64>),
    /// No node left anywhere.
    Breakdown,
    NonConverged(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub records: Vec<McRecord>,
    pub couplings: Vec<CouplingMatrix>,
    pub outcome: McOutcome,
    /// Survivors per network at the end.
    pub n_alive: Vec<usize>,
    /// Node count per network.
    pub sizes: Vec<usize>,
}

impl McRun {
    pub fn is_breakdown(&self) -> bool {
        self.outcome == McOutcome::Breakdown
    }

    pub fn surviving_fraction(&self) -> f64 {
        let total: usize = self.sizes.iter().sum();
        self.n_alive.iter().sum::<usize>() as f64 / total as f64
    }

    /// Same columns as the mean-field trajectory: `t,network,f,n_alive,F,Q_step,Q_cum`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "network", "f", "n_alive", "F", "Q_step", "Q_cum"])?;
        for r in &self.records {
            for (k, n) in r.networks.iter().enumerate() {
                let f = 1.0 - n.n_alive as f64 / self.sizes[k] as f64;
                w.write_record(&[
                    r.t.to_string(),
                    k.to_string(),
                    f.to_string(),
                    n.n_alive.to_string(),
                    n.released.to_string(),
                    n.q_step.to_string(),
                    n.q_cum.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples the population for `seed` and runs one cascade on it.
pub fn mc_run_seeded(
    cfgs: &[NetworkConfig],
    attack: &AttackSpec,
    strategy: &CouplingStrategy,
    seed: u64,
    max_steps: usize,
) -> Result<McRun, StrategyError> {
    let pop = NodePopulation::sample(cfgs, seed);
    mc_run(cfgs, &pop, attack, strategy, Engine::for_networks(cfgs), max_steps)
}

/// Runs one cascade on a sampled population.
pub fn mc_run(
    cfgs: &[NetworkConfig],
    pop: &NodePopulation,
    attack: &AttackSpec,
    strategy: &CouplingStrategy,
    engine: Engine,
    max_steps: usize,
) -> Result<McRun, StrategyError> {
    let sizes: Vec<usize> = pop.networks.iter().map(NetworkNodes::len).collect();
    let mut state = apply_attack(pop, attack, engine);
    let mut records = Vec::new();
    let mut couplings = Vec::new();
    let fractions = |s: &McState| s.nets.iter().zip(&sizes).map(|(n, &size)| n.n_alive as f64 / size as f64).collect();
    let finish = |state: &McState, records, couplings, outcome| McRun {
        records,
        couplings,
        outcome,
        n_alive: state.n_alive(),
        sizes: sizes.clone(),
    };
    for _ in 0..=max_steps {
        if state.nets.iter().all(|s| s.n_alive == 0) {
            return Ok(finish(&state, records, couplings, McOutcome::Breakdown));
        }
        let decision = strategy.decide(&state.view(cfgs, attack))?;
        let m = decision.matrix.restrict_to_live(&state.alive());
        let pools = state.pools();
        let deaths = state.step(pop, &m);
        records.push(McRecord {
            t: state.t - 1,
            networks: state
                .nets
                .iter()
                .zip(&pools)
                .map(|(s, &released)| McNetworkRecord {
                    n_alive: s.n_alive + s.pending.len(),
                    released,
                    q_step: s.last_step,
                    q_cum: s.level,
                })
                .collect(),
        });
        couplings.push(m);
        if deaths == 0 {
            let fr = fractions(&state);
            return Ok(finish(&state, records, couplings, McOutcome::Survived(fr)));
        }
    }
    if state.nets.iter().all(|s| s.n_alive == 0) {
        return Ok(finish(&state, records, couplings, McOutcome::Breakdown));
    }
    let fr = fractions(&state);
    Ok(finish(&state, records, couplings, McOutcome::NonConverged(fr)))
}
