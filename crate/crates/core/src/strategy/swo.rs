//! Two-network step-wise optimization.
//!
//! The cost of a coupling choice is the failed load it is predicted to release at the
//! next step. For network `i` with survivors `n_i` sitting at level `q_i`, an increment
//! `dq_i` fails a share `(P[S >= q_i] - P[S >= q_i + dq_i]) / P[S >= q_i]` of them, and
//! each failing node carries `E[L_i] + q_i + dq_i`.
//!
//! For uniform free space `U(s0, s0 + d)` that share is `delta_i = (dq_i - e_i) / w_i`
//! clipped to `[0, 1]`, with `e_i = max(0, s0 - q_i)` and `w_i = s0 + d - max(q_i, s0)`.
//! Inside the clip the cost is the quadratic `n_i w_i delta_i^2 + n_i (h_i + e_i) delta_i`
//! with `h_i = E[L_i] + q_i`, which is what [`SwoCoefficients`] expands in
//! `(alpha, beta)`.

use super::{CouplingDecision, Interval, NetworkView, SwoBounds, SwoSolver, SystemView, FALLBACK_GRID_RESOLUTION};
use crate::coupling::CouplingMatrix;
use crate::error::{ModelError, StrategyError};

const COARSE_GRID: f64 = 0.05;
const CLIP_SLACK: f64 = 1e-12;

/// A network can take load only if it is alive and some of its survivors still have
/// free space at their current level.
pub(crate) fn usable(v: &NetworkView) -> bool {
    v.is_alive() && v.space.survival(v.level) > 0.0
}

/// Predicted failed load released by one network after receiving `dq` per survivor.
/// Networks that cannot take load contribute nothing.
pub(crate) fn network_cost(v: &NetworkView, dq: f64) -> f64 {
    if !usable(v) || dq <= 0.0 {
        return 0.0;
    }
    let s0 = v.space.survival(v.level);
    let s1 = v.space.survival(v.level + dq);
    let dn = v.n_alive * (s0 - s1) / s0;
    dn * (v.load_mean + v.level + dq)
}

/// Per-survivor increments produced by routing the current pools through `entries`
/// (row-major `n x n`).
pub(crate) fn increments(view: &SystemView, entries: &[f64]) -> Vec<f64> {
    let n = view.n();
    (0..n)
        .map(|k| {
            let v = &view.networks[k];
            if v.n_alive <= 0.0 {
                return 0.0;
            }
            let received: f64 = (0..n).map(|i| view.networks[i].pool * entries[i * n + k]).sum();
            received / v.n_alive
        })
        .collect()
}

/// Exact predicted cost of a full coupling matrix (any number of networks).
pub fn swo_objective_matrix(entries: &[f64], view: &SystemView) -> f64 {
    increments(view, entries).iter().zip(&view.networks).map(|(dq, v)| network_cost(v, *dq)).sum()
}

/// Exact predicted cost for a two-network system at in-net ratios `(alpha, beta)`.
pub fn swo_objective_general(alpha: f64, beta: f64, view: &SystemView) -> f64 {
    swo_objective_matrix(&[alpha, 1.0 - alpha, 1.0 - beta, beta], view)
}

/// Quadratic cost model for two networks with uniform free space:
/// `K_a2 a^2 + K_b2 b^2 + K_ab a b + K_a a + K_b b + K_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwoCoefficients {
    pub k_alpha2: f64,
    pub k_beta2: f64,
    pub k_alphabeta: f64,
    pub k_alpha: f64,
    pub k_beta: f64,
    pub k_const: f64,
    // delta_A = ca + a1 alpha - b1 beta, delta_B = cb + a2 beta - b2 alpha
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
    ca: f64,
    cb: f64,
}

impl SwoCoefficients {
    pub fn eval(&self, alpha: f64, beta: f64) -> f64 {
        self.k_alpha2 * alpha * alpha
            + self.k_beta2 * beta * beta
            + self.k_alphabeta * alpha * beta
            + self.k_alpha * alpha
            + self.k_beta * beta
            + self.k_const
    }

    pub fn gradient(&self, alpha: f64, beta: f64) -> (f64, f64) {
        (
            2.0 * self.k_alpha2 * alpha + self.k_alphabeta * beta + self.k_alpha,
            2.0 * self.k_beta2 * beta + self.k_alphabeta * alpha + self.k_beta,
        )
    }

    /// Unclipped failing shares `(delta_A, delta_B)` at `(alpha, beta)`.
    pub fn deltas(&self, alpha: f64, beta: f64) -> (f64, f64) {
        (self.ca + self.a1 * alpha - self.b1 * beta, self.cb + self.a2 * beta - self.b2 * alpha)
    }

    fn scale(&self) -> f64 {
        [self.k_alpha2, self.k_beta2, self.k_alphabeta, self.k_alpha, self.k_beta, self.k_const]
            .iter()
            .map(|k| k.abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE)
    }
}

/// Builds the quadratic model. A network that cannot take load is left out, so the
/// coefficients describe the remaining one only.
pub fn swo_build_uniform(view: &SystemView) -> Result<SwoCoefficients, StrategyError> {
    if view.n() != 2 {
        return Err(StrategyError::Unsupported { solver: "closed-form", needs: "n = 2".into() });
    }
    let mut parts = [(0.0, 0.0, 0.0, 0.0); 2]; // (n_i, w_i, e_i, h_i)
    for (i, v) in view.networks.iter().enumerate() {
        let Some((lo, hi)) = (match v.space {
            crate::dist::Distribution::Uniform { lo, hi } => Some((lo, hi)),
            _ => None,
        }) else {
            return Err(StrategyError::Unsupported { solver: "closed-form", needs: "uniform free space".into() });
        };
        let w = hi - v.level.max(lo);
        if usable(v) && w > 0.0 {
            parts[i] = (v.n_alive, w, (lo - v.level).max(0.0), v.load_mean + v.level);
        }
    }
    let (fa, fb) = (view.networks[0].pool, view.networks[1].pool);
    let ratio = |f: f64, (n, w, _, _): (f64, f64, f64, f64)| if n > 0.0 { f / (n * w) } else { 0.0 };
    let offset = |(n, w, e, _): (f64, f64, f64, f64)| if n > 0.0 { e / w } else { 0.0 };
    let (a1, b1) = (ratio(fa, parts[0]), ratio(fb, parts[0]));
    let (a2, b2) = (ratio(fb, parts[1]), ratio(fa, parts[1]));
    let ca = b1 - offset(parts[0]);
    let cb = b2 - offset(parts[1]);
    let big_a = parts[0].0 * parts[0].1;
    let big_b = parts[1].0 * parts[1].1;
    let ua = parts[0].0 * (parts[0].3 + parts[0].2);
    let ub = parts[1].0 * (parts[1].3 + parts[1].2);
    let ga = 2.0 * big_a * ca + ua;
    let gb = 2.0 * big_b * cb + ub;
    Ok(SwoCoefficients {
        k_alpha2: big_a * a1 * a1 + big_b * b2 * b2,
        k_beta2: big_a * b1 * b1 + big_b * a2 * a2,
        k_alphabeta: -2.0 * (big_a * a1 * b1 + big_b * a2 * b2),
        k_alpha: a1 * ga - b2 * gb,
        k_beta: -b1 * ga + a2 * gb,
        k_const: big_a * ca * ca + ua * ca + big_b * cb * cb + ub * cb,
        a1,
        b1,
        a2,
        b2,
        ca,
        cb,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSolution {
    pub alpha: f64,
    pub beta: f64,
    pub value: f64,
    pub at_boundary: [bool; 2],
}

impl BoxSolution {
    fn new(alpha: f64, beta: f64, value: f64, a: &Interval, b: &Interval) -> Self {
        let edge = |x: f64, iv: &Interval| x == iv.lo || x == iv.hi;
        BoxSolution { alpha, beta, value, at_boundary: [edge(alpha, a), edge(beta, b)] }
    }
}

/// Keeps the better of two candidates; near-equal values go to the smaller alpha,
/// then the smaller beta.
fn pick(best: Option<(f64, f64, f64)>, cand: (f64, f64, f64), tol: f64) -> Option<(f64, f64, f64)> {
    match best {
        None => Some(cand),
        Some(b) => {
            let tied_smaller = (cand.2 - b.2).abs() <= tol && (cand.0, cand.1) < (b.0, b.1);
            if cand.2 < b.2 - tol || tied_smaller {
                Some(cand)
            } else {
                Some(b)
            }
        }
    }
}

/// Minimizer of `a x^2 + b x` over `iv` for `a >= 0`.
fn min_1d(a: f64, b: f64, iv: &Interval) -> f64 {
    if a > 0.0 {
        iv.clamp(-b / (2.0 * a))
    } else if b < 0.0 {
        iv.hi
    } else {
        iv.lo
    }
}

/// Minimizes the quadratic model over the box: interior stationary point when it is
/// feasible and unique, otherwise the best point on the four edges.
pub fn swo_solve_box(k: &SwoCoefficients, alpha_iv: Interval, beta_iv: Interval) -> BoxSolution {
    let tol = 1e-12 * k.scale();
    let mut best = None;
    let det = 4.0 * k.k_alpha2 * k.k_beta2 - k.k_alphabeta * k.k_alphabeta;
    let det_scale = 4.0 * k.k_alpha2.abs() * k.k_beta2.abs() + k.k_alphabeta * k.k_alphabeta;
    if det > 1e-12 * det_scale {
        let a = (-k.k_alpha * 2.0 * k.k_beta2 + k.k_beta * k.k_alphabeta) / det;
        let b = (-k.k_beta * 2.0 * k.k_alpha2 + k.k_alpha * k.k_alphabeta) / det;
        if alpha_iv.contains(a) && beta_iv.contains(b) {
            best = pick(best, (a, b, k.eval(a, b)), tol);
        }
    }
    for a in [alpha_iv.lo, alpha_iv.hi] {
        let b = min_1d(k.k_beta2, k.k_alphabeta * a + k.k_beta, &beta_iv);
        best = pick(best, (a, b, k.eval(a, b)), tol);
        for b in [beta_iv.lo, beta_iv.hi] {
            best = pick(best, (a, b, k.eval(a, b)), tol);
        }
    }
    for b in [beta_iv.lo, beta_iv.hi] {
        let a = min_1d(k.k_alpha2, k.k_alphabeta * b + k.k_alpha, &alpha_iv);
        best = pick(best, (a, b, k.eval(a, b)), tol);
    }
    let (a, b, v) = best.expect("at least one candidate");
    BoxSolution::new(a, b, v, &alpha_iv, &beta_iv)
}

fn lattice(iv: &Interval, resolution: f64) -> Vec<f64> {
    let steps = ((iv.hi - iv.lo) / resolution - 1e-9).ceil().max(0.0) as usize;
    (0..=steps).map(|k| (iv.lo + k as f64 * resolution).min(iv.hi)).collect()
}

fn grid_over(view: &SystemView, alphas: &[f64], betas: &[f64], a: &Interval, b: &Interval) -> BoxSolution {
    let mut best: Option<(f64, f64, f64)> = None;
    for &x in alphas {
        for &y in betas {
            let v = swo_objective_general(x, y, view);
            if best.is_none_or(|(_, _, bv)| v < bv) {
                best = Some((x, y, v));
            }
        }
    }
    let (x, y, v) = best.expect("non-empty grid");
    BoxSolution::new(x, y, v, a, b)
}

/// Exhaustive grid over the box with the exact objective. Among exact ties the
/// smallest alpha, then the smallest beta, wins.
pub fn swo_solve_grid(view: &SystemView, alpha_iv: Interval, beta_iv: Interval, resolution: f64) -> BoxSolution {
    grid_over(view, &lattice(&alpha_iv, resolution), &lattice(&beta_iv, resolution), &alpha_iv, &beta_iv)
}

/// Coarse grid at 0.05 followed by a fine grid at `resolution` over the coarse cells
/// around the coarse optimum.
pub fn swo_solve_grid_refined(
    view: &SystemView,
    alpha_iv: Interval,
    beta_iv: Interval,
    resolution: f64,
) -> BoxSolution {
    if resolution >= COARSE_GRID {
        return swo_solve_grid(view, alpha_iv, beta_iv, resolution);
    }
    let coarse = swo_solve_grid(view, alpha_iv, beta_iv, COARSE_GRID);
    let near = |x: f64, iv: &Interval| -> Vec<f64> {
        lattice(iv, resolution).into_iter().filter(|v| (v - x).abs() <= COARSE_GRID + 1e-12).collect()
    };
    let fine = grid_over(view, &near(coarse.alpha, &alpha_iv), &near(coarse.beta, &beta_iv), &alpha_iv, &beta_iv);
    if fine.value <= coarse.value {
        fine
    } else {
        coarse
    }
}

/// Best point for uniform spaces: the quadratic box optimum when both predicted
/// shares stay inside `[0, 1]` and no coarse grid point beats it, otherwise the best of
/// the refined grid on the exact objective and the size-based split. Other space
/// families go straight to the refined grid.
pub fn swo_solve_exact(view: &SystemView, alpha_iv: Interval, beta_iv: Interval) -> Result<BoxSolution, StrategyError> {
    let all_uniform = view.networks.iter().all(|v| v.space.is_uniform());
    if !all_uniform {
        let grid = swo_solve_grid_refined(view, alpha_iv, beta_iv, FALLBACK_GRID_RESOLUTION);
        return Ok(with_size_based_candidate(view, grid, alpha_iv, beta_iv));
    }
    let k = swo_build_uniform(view)?;
    let mut sol = swo_solve_box(&k, alpha_iv, beta_iv);
    sol.value = swo_objective_general(sol.alpha, sol.beta, view);
    let (da, db) = k.deltas(sol.alpha, sol.beta);
    let inside = |d: f64, v: &NetworkView| !usable(v) || (-CLIP_SLACK..=1.0 + CLIP_SLACK).contains(&d);
    let valid = inside(da, &view.networks[0]) && inside(db, &view.networks[1]);
    let tol = 1e-9 * sol.value.abs().max(1e-300);
    if valid {
        let coarse = swo_solve_grid(view, alpha_iv, beta_iv, COARSE_GRID);
        if coarse.value >= sol.value - tol {
            return Ok(sol);
        }
    }
    let grid = swo_solve_grid_refined(view, alpha_iv, beta_iv, FALLBACK_GRID_RESOLUTION);
    let best = if grid.value < sol.value - tol { grid } else { sol };
    Ok(with_size_based_candidate(view, best, alpha_iv, beta_iv))
}

/// The size-based split is always a candidate when the bounds allow it.
fn with_size_based_candidate(view: &SystemView, best: BoxSolution, a: Interval, b: Interval) -> BoxSolution {
    let Ok((sa, sb)) = super::sbd_coefficients(view.networks[0].n_alive, view.networks[1].n_alive) else {
        return best;
    };
    if !(a.contains(sa) && b.contains(sb)) {
        return best;
    }
    let v = swo_objective_general(sa, sb, view);
    if v < best.value {
        BoxSolution::new(sa, sb, v, &a, &b)
    } else {
        best
    }
}

pub(crate) fn decide_stepwise(
    view: &SystemView,
    bounds: &SwoBounds,
    solver: SwoSolver,
) -> Result<CouplingDecision, StrategyError> {
    let n = view.n();
    if solver == SwoSolver::MultiNetQp {
        let sol = super::swo_solve_multinet(view, bounds)?;
        return Ok(CouplingDecision { matrix: sol.matrix, objective: Some(sol.objective), at_boundary: sol.at_boundary });
    }
    if n != 2 {
        return Err(StrategyError::Unsupported {
            solver: if solver == SwoSolver::ClosedFormUniform { "closed-form" } else { "grid" },
            needs: "n = 2".into(),
        });
    }
    let (alpha_iv, beta_iv) = bounds.alpha_beta()?;
    let open = [usable(&view.networks[0]), usable(&view.networks[1])];
    let sol = match open {
        [true, true] => match solver {
            SwoSolver::ClosedFormUniform => swo_solve_exact(view, alpha_iv, beta_iv)?,
            SwoSolver::Grid { resolution } => {
                if !(resolution > 0.0 && resolution <= 1.0) {
                    return Err(StrategyError::InvalidBounds(format!("grid resolution {resolution}")));
                }
                swo_solve_grid(view, alpha_iv, beta_iv, resolution)
            }
            SwoSolver::MultiNetQp => unreachable!(),
        },
        // Only one network can take load, so everything goes there whatever the bounds.
        [true, false] => BoxSolution { alpha: 1.0, beta: 0.0, value: 0.0, at_boundary: [true, true] },
        [false, true] => BoxSolution { alpha: 0.0, beta: 1.0, value: 0.0, at_boundary: [true, true] },
        [false, false] => {
            let counts: Vec<f64> = view.networks.iter().map(|v| if v.is_alive() { v.n_alive } else { 0.0 }).collect();
            let m = super::sbd_matrix(&counts)?;
            BoxSolution { alpha: m.alpha(), beta: m.beta(), value: 0.0, at_boundary: [false, false] }
        }
    };
    let matrix = CouplingMatrix::two(sol.alpha, sol.beta).map_err(ModelError::from)?;
    let objective = swo_objective_general(sol.alpha, sol.beta, view);
    let [ba, bb] = sol.at_boundary;
    Ok(CouplingDecision { matrix, objective: Some(objective), at_boundary: vec![ba, ba, bb, bb] })
}
