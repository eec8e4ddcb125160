//! Coupling strategies: how the failed load released at a step is split between
//! networks.
//!
//! * [`CouplingStrategy::Fixed`] keeps one matrix for the whole cascade.
//! * [`CouplingStrategy::SizeBased`] sets every row proportional to the surviving node
//!   counts, so each survivor in the system receives the same increment.
//! * [`CouplingStrategy::StepwiseOptimal`] greedily picks the matrix that minimizes the
//!   predicted extra load released at the next step.

mod multinet;
mod swo;

pub use multinet::{multinet_objective, swo_solve_multinet, MultiNetSolution, KKT_TOLERANCE};
pub use swo::{
    swo_build_uniform, swo_objective_general, swo_objective_matrix, swo_solve_box, swo_solve_exact,
    swo_solve_grid, swo_solve_grid_refined, BoxSolution, SwoCoefficients,
};

use crate::coupling::CouplingMatrix;
use crate::dist::Distribution;
use crate::error::StrategyError;

/// Grid step used for the step-wise optimum when no closed form applies.
pub const FALLBACK_GRID_RESOLUTION: f64 = 1e-3;

/// Per-network quantities a strategy may look at when choosing the coupling for the
/// current step.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkView {
    /// Initial node count `N_X`.
    pub node_count: f64,
    /// Initial attack fraction `p_X`.
    pub attack: f64,
    /// Survivors right now, before this step's load is placed.
    pub n_alive: f64,
    /// Failed fraction so far.
    pub failed_fraction: f64,
    /// Cumulative extra load already absorbed by each survivor (`Q_{X(t-1)}`).
    pub level: f64,
    /// Extra load per survivor placed at the previous step (`ΔQ_{X(t-1)}`).
    pub last_step: f64,
    /// Failed load released by this network at the current step (`F_{Xt}`).
    pub pool: f64,
    /// Mean initial load `E[L_X]`.
    pub load_mean: f64,
    /// Free-space distribution of the network.
    pub space: Distribution,
}

impl NetworkView {
    /// A network counts as alive while it has at least one surviving node.
    pub fn is_alive(&self) -> bool {
        self.n_alive >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemView {
    pub t: usize,
    pub networks: Vec<NetworkView>,
}

impl SystemView {
    pub fn n(&self) -> usize {
        self.networks.len()
    }

    pub fn alive_mask(&self) -> Vec<bool> {
        self.networks.iter().map(NetworkView::is_alive).collect()
    }
}

/// Closed interval `[lo, hi]` inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self, StrategyError> {
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(StrategyError::InvalidBounds(format!("need 0 <= lo <= hi <= 1, got [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Per-entry box constraints on the coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SwoBounds {
    n: usize,
    entries: Vec<Interval>,
}

impl SwoBounds {
    /// No constraint beyond `[0, 1]`.
    pub fn unconstrained(n: usize) -> Self {
        SwoBounds { n, entries: vec![Interval::UNIT; n * n] }
    }

    /// Constrains only the in-net (diagonal) ratios.
    pub fn in_net(n: usize, diagonal: Interval) -> Self {
        let mut b = Self::unconstrained(n);
        for i in 0..n {
            b.entries[i * n + i] = diagonal;
        }
        b
    }

    pub fn from_entries(n: usize, entries: Vec<Interval>) -> Result<Self, StrategyError> {
        if entries.len() != n * n {
            return Err(StrategyError::InvalidBounds(format!("expected {} intervals, got {}", n * n, entries.len())));
        }
        let b = SwoBounds { n, entries };
        b.check_feasible()?;
        Ok(b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> Interval {
        self.entries[row * self.n + col]
    }

    pub fn entries(&self) -> &[Interval] {
        &self.entries
    }

    /// Every row must admit entries summing to one.
    pub fn check_feasible(&self) -> Result<(), StrategyError> {
        for row in 0..self.n {
            let (lo, hi) = (0..self.n).fold((0.0, 0.0), |(lo, hi), j| {
                let iv = self.get(row, j);
                (lo + iv.lo, hi + iv.hi)
            });
            if lo > 1.0 + 1e-12 || hi < 1.0 - 1e-12 {
                return Err(StrategyError::InfeasibleBounds { row });
            }
        }
        Ok(())
    }

    /// Feasible ranges of `(alpha, beta)` for a two-network system, folding the
    /// off-diagonal limits into the diagonal ones.
    pub fn alpha_beta(&self) -> Result<(Interval, Interval), StrategyError> {
        if self.n != 2 {
            return Err(StrategyError::Unsupported { solver: "two-network bounds", needs: "n = 2".into() });
        }
        let fold = |row: usize, diag: usize, off: usize| {
            let d = self.get(diag / 2, diag % 2);
            let o = self.get(off / 2, off % 2);
            d.intersect(&Interval { lo: 1.0 - o.hi, hi: 1.0 - o.lo })
                .ok_or(StrategyError::InfeasibleBounds { row })
        };
        Ok((fold(0, 0, 1)?, fold(1, 3, 2)?))
    }
}

/// Which solver the step-wise optimization uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwoSolver {
    /// Quadratic model for uniform free space, solved in closed form with the boundary
    /// search. Non-uniform spaces fall back to the refined grid.
    ClosedFormUniform,
    /// Exhaustive grid over `(alpha, beta)` at the given step.
    Grid { resolution: f64 },
    /// Pairwise-exchange solver for the `n`-network quadratic program.
    MultiNetQp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingStrategy {
    /// Fixed coupling coefficients.
    Fixed(CouplingMatrix),
    /// Size-based dynamic coupling.
    SizeBased,
    /// Step-wise optimization.
    StepwiseOptimal { bounds: SwoBounds, solver: SwoSolver },
}

impl CouplingStrategy {
    pub fn fixed_two(alpha: f64, beta: f64) -> Result<Self, StrategyError> {
        Ok(CouplingStrategy::Fixed(CouplingMatrix::two(alpha, beta).map_err(crate::error::ModelError::from)?))
    }

    /// Unconstrained two-network step-wise optimization with the closed-form solver.
    pub fn swo() -> Self {
        CouplingStrategy::StepwiseOptimal { bounds: SwoBounds::unconstrained(2), solver: SwoSolver::ClosedFormUniform }
    }

    pub fn label(&self) -> String {
        match self {
            CouplingStrategy::Fixed(m) if m.n() == 2 => format!("FCC({},{})", m.alpha(), m.beta()),
            CouplingStrategy::Fixed(m) => format!("FCC[{m}]"),
            CouplingStrategy::SizeBased => "SBD".into(),
            CouplingStrategy::StepwiseOptimal { bounds, .. } => {
                if bounds.entries().iter().all(|iv| *iv == Interval::UNIT) {
                    "SWO".into()
                } else {
                    "SWO(bounded)".into()
                }
            }
        }
    }

    /// Chooses the coupling matrix for the current step.
    ///
    /// When no network has survivors the identity is returned, so no load moves.
    pub fn decide(&self, view: &SystemView) -> Result<CouplingDecision, StrategyError> {
        let n = view.n();
        let alive = view.alive_mask();
        if !alive.iter().any(|a| *a) {
            return Ok(CouplingDecision::plain(CouplingMatrix::identity(n)));
        }
        match self {
            CouplingStrategy::Fixed(m) => {
                if m.n() != n {
                    return Err(crate::error::ModelError::DimensionMismatch { expected: n, got: m.n() }.into());
                }
                Ok(CouplingDecision::plain(m.clone()))
            }
            CouplingStrategy::SizeBased => {
                let counts: Vec<f64> = view.networks.iter().map(|v| if v.is_alive() { v.n_alive } else { 0.0 }).collect();
                let m = sbd_matrix(&counts)?;
                Ok(CouplingDecision::plain(m))
            }
            CouplingStrategy::StepwiseOptimal { bounds, solver } => {
                if bounds.n() != n {
                    return Err(crate::error::ModelError::DimensionMismatch { expected: n, got: bounds.n() }.into());
                }
                swo::decide_stepwise(view, bounds, *solver)
            }
        }
    }
}

/// The coupling matrix chosen for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingDecision {
    pub matrix: CouplingMatrix,
    /// Predicted extra load released at the next step (step-wise optimization only).
    pub objective: Option<f64>,
    /// Row-major flags: entry sits on a limit of its allowed interval.
    pub at_boundary: Vec<bool>,
}

impl CouplingDecision {
    fn plain(matrix: CouplingMatrix) -> Self {
        let at_boundary = matrix.entries().iter().map(|v| *v == 0.0 || *v == 1.0).collect();
        CouplingDecision { matrix, objective: None, at_boundary }
    }
}

/// Size-based coefficients for two networks: `alpha = n_A / (n_A + n_B)`,
/// `beta = n_B / (n_A + n_B)`.
pub fn sbd_coefficients(n_alive_a: f64, n_alive_b: f64) -> Result<(f64, f64), StrategyError> {
    let total = n_alive_a + n_alive_b;
    if !(total > 0.0) {
        return Err(StrategyError::NoSurvivors);
    }
    Ok((n_alive_a / total, n_alive_b / total))
}

/// Size-based matrix for any number of networks: every row proportional to the
/// surviving counts.
pub fn sbd_matrix(n_alive: &[f64]) -> Result<CouplingMatrix, StrategyError> {
    CouplingMatrix::proportional(n_alive).ok_or(StrategyError::NoSurvivors)
}
