//! Deterministic mean-field cascade for interconnected networks.
//!
//! Every step has two halves. First each network works out how many of its nodes are
//! now dead given the load its survivors already carry, and how much load the newly
//! dead release ([`Released`]). Then the coupling matrix routes those pools to the
//! survivors ([`Released::redistribute`]). A strategy sees the state between the two
//! halves and picks the matrix.

use std::io;

use crate::coupling::CouplingMatrix;
use crate::error::{ModelError, StrategyError};
use crate::model::{validate_system, AttackSpec, NetworkConfig};
use crate::strategy::{CouplingStrategy, NetworkView, SystemView};

/// Default cap on cascade steps.
pub const DEFAULT_MAX_STEPS: usize = 100_000;

/// A network is dead once fewer than one node survives. The cascade stops once no
/// network changes by one node or more in a step.
pub const NODE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkState {
    /// Failed fraction `f_t`.
    pub failed_fraction: f64,
    /// Surviving nodes `N_t`.
    pub n_alive: f64,
    /// Failed load released at this step `F_t`.
    pub released: f64,
    /// Extra load per survivor placed at this step.
    pub q_step: f64,
    /// Cumulative extra load per survivor.
    pub q_cum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub t: usize,
    pub networks: Vec<NetworkState>,
}

impl MeanFieldState {
    pub fn q_cum(&self) -> Vec<f64> {
        self.networks.iter().map(|s| s.q_cum).collect()
    }
}

/// First half of a step: deaths and released load, before routing.
#[derive(Debug, Clone, PartialEq)]
pub struct Released {
    pub t: usize,
    pub failed_fraction: Vec<f64>,
    pub n_alive: Vec<f64>,
    pub pools: Vec<f64>,
    /// Cumulative level reached before this step (`Q_{t-1}`, zero at `t = 0`).
    pub level: Vec<f64>,
    /// Increment of the previous step (`dQ_{t-1}`).
    pub last_step: Vec<f64>,
}

impl Released {
    /// Routes the pools through `coupling`. A network with no survivors that still
    /// receives load gets an infinite level.
    pub fn redistribute(&self, coupling: &CouplingMatrix) -> MeanFieldState {
        let received = coupling.route(&self.pools);
        let networks = (0..self.pools.len())
            .map(|k| {
                let n = self.n_alive[k];
                let q_step = if n > 0.0 {
                    received[k] / n
                } else if received[k] > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                NetworkState {
                    failed_fraction: self.failed_fraction[k],
                    n_alive: n,
                    released: self.pools[k],
                    q_step,
                    q_cum: self.level[k] + q_step,
                }
            })
            .collect();
        MeanFieldState { t: self.t, networks }
    }

    pub fn alive(&self) -> Vec<bool> {
        self.n_alive.iter().map(|n| *n >= NODE_THRESHOLD).collect()
    }

    pub fn view(&self, system: &MeanFieldSystem) -> SystemView {
        SystemView {
            t: self.t,
            networks: system
                .networks
                .iter()
                .enumerate()
                .map(|(i, cfg)| NetworkView {
                    node_count: cfg.node_count as f64,
                    attack: system.attack[i],
                    n_alive: self.n_alive[i],
                    failed_fraction: self.failed_fraction[i],
                    level: self.level[i],
                    last_step: self.last_step[i],
                    pool: self.pools[i],
                    load_mean: cfg.load.mean(),
                    space: cfg.space,
                })
                .collect(),
        }
    }
}

/// How the initial attack plays out, judged from the first redistribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitiationCase {
    /// Every network's level is below the smallest free space: nothing more fails.
    NoCascade,
    /// Some but not all networks exceed their smallest free space.
    Partial,
    /// Every network exceeds its smallest free space.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeanFieldOutcome {
    NoCascade,
    /// Cascade stopped; surviving fraction `N_t / N` per network.
    Survived(Vec<f64>),
    /// Every network lost all its nodes.
    Breakdown,
    /// Step cap hit; surviving fractions at the last step.
    NonConverged(Vec<f64>),
}

impl MeanFieldOutcome {
    pub fn is_breakdown(&self) -> bool {
        matches!(self, MeanFieldOutcome::Breakdown)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldTrajectory {
    pub states: Vec<MeanFieldState>,
    /// Matrix actually applied at each step (after moving load off dead networks).
    pub couplings: Vec<CouplingMatrix>,
    pub outcome: MeanFieldOutcome,
}

impl MeanFieldTrajectory {
    pub fn steps(&self) -> usize {
        self.states.len()
    }

    pub fn last(&self) -> &MeanFieldState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Surviving share of all nodes in the system at the end.
    pub fn surviving_fraction(&self, system: &MeanFieldSystem) -> f64 {
        if self.outcome.is_breakdown() {
            return 0.0;
        }
        let total: f64 = system.networks.iter().map(|c| c.node_count as f64).sum();
        self.last().networks.iter().map(|s| s.n_alive).sum::<f64>() / total
    }

    /// Writes `t,network,f,n_alive,F,Q_step,Q_cum`, one row per network and step.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "network", "f", "n_alive", "F", "Q_step", "Q_cum"])?;
        for s in &self.states {
            for (k, n) in s.networks.iter().enumerate() {
                w.write_record(&[
                    s.t.to_string(),
                    k.to_string(),
                    n.failed_fraction.to_string(),
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

/// Networks plus the initial attack.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldSystem {
    pub networks: Vec<NetworkConfig>,
    pub attack: AttackSpec,
}

impl MeanFieldSystem {
    pub fn new(networks: Vec<NetworkConfig>, attack: AttackSpec) -> Result<Self, ModelError> {
        validate_system(&networks, &attack)?;
        Ok(MeanFieldSystem { networks, attack })
    }

    pub fn n(&self) -> usize {
        self.networks.len()
    }

    /// Attacked nodes and the load they release at `t = 0`.
    pub fn release_initial(&self) -> Released {
        let n = self.n();
        let mut out = Released {
            t: 0,
            failed_fraction: Vec::with_capacity(n),
            n_alive: Vec::with_capacity(n),
            pools: Vec::with_capacity(n),
            level: vec![0.0; n],
            last_step: vec![0.0; n],
        };
        for (cfg, &p) in self.networks.iter().zip(self.attack.fractions()) {
            let size = cfg.node_count as f64;
            out.failed_fraction.push(p);
            out.n_alive.push((1.0 - p) * size);
            out.pools.push(size * p * cfg.load.mean());
        }
        out
    }

    /// Deaths and released load at step `prev.t + 1`. `prev2_qcum` is the level two
    /// steps back (zeros when `prev` is the initial state).
    pub fn release(&self, prev: &MeanFieldState, prev2_qcum: &[f64]) -> Released {
        let n = self.n();
        let mut out = Released {
            t: prev.t + 1,
            failed_fraction: Vec::with_capacity(n),
            n_alive: Vec::with_capacity(n),
            pools: Vec::with_capacity(n),
            level: prev.q_cum(),
            last_step: prev.networks.iter().map(|s| s.q_step).collect(),
        };
        for (k, cfg) in self.networks.iter().enumerate() {
            let p = self.attack[k];
            let size = cfg.node_count as f64;
            let q1 = prev.networks[k].q_cum;
            let sf1 = cfg.space.survival(q1);
            let sf2 = cfg.space.survival(prev2_qcum[k]);
            let f = 1.0 - (1.0 - p) * sf1;
            let dying = (sf2 - sf1).max(0.0);
            out.failed_fraction.push(f);
            out.n_alive.push((1.0 - f) * size);
            out.pools.push(if dying > 0.0 { size * (1.0 - p) * dying * (cfg.load.mean() + q1) } else { 0.0 });
        }
        out
    }

    /// Initial state under a given coupling.
    pub fn init(&self, coupling: &CouplingMatrix) -> Result<MeanFieldState, ModelError> {
        self.check_coupling(coupling)?;
        Ok(self.release_initial().redistribute(coupling))
    }

    /// One full step under a given coupling, routed exactly as given.
    pub fn step(
        &self,
        prev: &MeanFieldState,
        prev2_qcum: &[f64],
        coupling: &CouplingMatrix,
    ) -> Result<MeanFieldState, ModelError> {
        self.check_coupling(coupling)?;
        Ok(self.release(prev, prev2_qcum).redistribute(coupling))
    }

    fn check_coupling(&self, coupling: &CouplingMatrix) -> Result<(), ModelError> {
        if coupling.n() != self.n() {
            return Err(ModelError::DimensionMismatch { expected: self.n(), got: coupling.n() });
        }
        Ok(())
    }

    /// Classifies the initial state by comparing each level with the smallest free space.
    pub fn classify_initiation(&self, state0: &MeanFieldState) -> InitiationCase {
        let over = self
            .networks
            .iter()
            .zip(&state0.networks)
            .filter(|(cfg, s)| s.q_cum > cfg.space.support_min())
            .count();
        match over {
            0 => InitiationCase::NoCascade,
            k if k == self.n() => InitiationCase::Full,
            _ => InitiationCase::Partial,
        }
    }

    /// Runs the cascade to its end. Load headed for a dead network is re-targeted
    /// onto the live ones.
    pub fn run(&self, strategy: &CouplingStrategy, max_steps: usize) -> Result<MeanFieldTrajectory, StrategyError> {
        let mut states = Vec::new();
        let mut couplings = Vec::new();
        let apply = |rel: &Released| -> Result<(MeanFieldState, CouplingMatrix), StrategyError> {
            let decision = strategy.decide(&rel.view(self))?;
            if decision.matrix.n() != self.n() {
                return Err(ModelError::DimensionMismatch { expected: self.n(), got: decision.matrix.n() }.into());
            }
            let m = decision.matrix.restrict_to_live(&rel.alive());
            Ok((rel.redistribute(&m), m))
        };

        let rel0 = self.release_initial();
        let all_dead = |rel: &Released| rel.alive().iter().all(|a| !a);
        let (s0, m0) = apply(&rel0)?;
        let dead0 = all_dead(&rel0);
        states.push(s0);
        couplings.push(m0);
        if dead0 {
            return Ok(MeanFieldTrajectory { states, couplings, outcome: MeanFieldOutcome::Breakdown });
        }
        if self.classify_initiation(&states[0]) == InitiationCase::NoCascade {
            return Ok(MeanFieldTrajectory { states, couplings, outcome: MeanFieldOutcome::NoCascade });
        }

        let mut prev2 = vec![0.0; self.n()];
        for _ in 0..max_steps {
            let prev = states.last().expect("non-empty");
            let rel = self.release(prev, &prev2);
            let settled = rel.n_alive.iter().zip(&prev.networks).all(|(n, p)| (n - p.n_alive).abs() < NODE_THRESHOLD);
            let dead = all_dead(&rel);
            prev2 = prev.q_cum();
            let (s, m) = apply(&rel)?;
            states.push(s);
            couplings.push(m);
            if dead {
                return Ok(MeanFieldTrajectory { states, couplings, outcome: MeanFieldOutcome::Breakdown });
            }
            if settled {
                let fr = self.fractions(states.last().expect("non-empty"));
                return Ok(MeanFieldTrajectory { states, couplings, outcome: MeanFieldOutcome::Survived(fr) });
            }
        }
        let fr = self.fractions(states.last().expect("non-empty"));
        Ok(MeanFieldTrajectory { states, couplings, outcome: MeanFieldOutcome::NonConverged(fr) })
    }

    fn fractions(&self, s: &MeanFieldState) -> Vec<f64> {
        s.networks.iter().zip(&self.networks).map(|(st, c)| st.n_alive / c.node_count as f64).collect()
    }
}

/// State of the grouped recursion for `m` identical networks attacked alike, tracked
/// through a single per-network level `Q_t` against which free space is compared at
/// scale `m Q_t`. With `m = 1` it is the single-network mean-field recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupState {
    pub t: usize,
    /// Per-network level `Q_t`.
    pub q: f64,
    /// Level one step earlier.
    pub q_prev: f64,
    /// Surviving share `(1 - p) P[S >= m Q_t]` implied by the current level.
    pub surviving: f64,
}

/// Parameters of the identical-group recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdenticalGroup {
    pub networks: usize,
    pub attack: f64,
    pub load: crate::dist::Distribution,
    pub space: crate::dist::Distribution,
}

impl IdenticalGroup {
    pub fn initial(&self) -> GroupState {
        let m = self.networks as f64;
        let p = self.attack;
        let q = if p < 1.0 { self.load.mean() * p / (m * (1.0 - p)) } else { f64::INFINITY };
        GroupState { t: 0, q, q_prev: 0.0, surviving: (1.0 - p) * self.space.survival(m * q) }
    }

    /// `Q_{t+1} = Q_t + E[(L + m Q_t) 1{m Q_{t-1} < S <= m Q_t}] / (m P[S >= m Q_t])`
    /// for a continuous free space.
    pub fn step(&self, s: &GroupState) -> GroupState {
        let m = self.networks as f64;
        let hi = m * s.q;
        let lo = m * s.q_prev;
        let denom = m * self.space.survival(hi);
        let mass = (self.space.survival(lo) - self.space.survival(hi)).max(0.0);
        let q = if denom > 0.0 {
            s.q + mass * (self.load.mean() + hi) / denom
        } else {
            f64::INFINITY
        };
        GroupState { t: s.t + 1, q, q_prev: s.q, surviving: (1.0 - self.attack) * self.space.survival(m * q) }
    }

    /// Iterates until the surviving share moves by less than `tol` or nothing survives.
    pub fn run(&self, tol: f64, max_steps: usize) -> Vec<GroupState> {
        let mut out = vec![self.initial()];
        for _ in 0..max_steps {
            let cur = *out.last().expect("non-empty");
            if cur.surviving <= 0.0 {
                break;
            }
            let next = self.step(&cur);
            let done = (next.surviving - cur.surviving).abs() < tol;
            out.push(next);
            if done {
                break;
            }
        }
        out
    }
}
