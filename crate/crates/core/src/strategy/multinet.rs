//! Step-wise optimization for any number of networks.
//!
//! With uniform free space the predicted cost is the sum over networks of
//! `n_i w_i delta_i^2 + n_i (h_i + e_i) delta_i`, where `delta_i` is linear in column `i`
//! of the coupling matrix. The feasible set is a product of boxed simplices (one per
//! row). The solver repeatedly shifts mass inside a row between the two columns that
//! violate the optimality conditions the most, with an exact line search, until no
//! such shift helps.

use super::swo::{swo_objective_matrix, usable};
use super::{SwoBounds, SystemView};
use crate::coupling::CouplingMatrix;
use crate::dist::Distribution;
use crate::error::{ModelError, StrategyError};

/// Natural residual `||x - P(x - grad f(x))||_inf` on the normalized objective at which
/// the solver stops.
pub const KKT_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 1_000_000;
const EXCHANGE_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiNetSolution {
    pub matrix: CouplingMatrix,
    /// Exact predicted cost at `matrix`.
    pub objective: f64,
    /// Natural residual reached on the normalized quadratic model.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub at_boundary: Vec<bool>,
}

/// Quadratic model in column form: network `i` contributes
/// `big_i delta_i^2 + lin_i delta_i` with `delta_i = sum_j x_ji g_ji - off_i`.
struct Model {
    n: usize,
    big: Vec<f64>,
    lin: Vec<f64>,
    off: Vec<f64>,
    // g[j * n + i] = F_j / (n_i w_i)
    g: Vec<f64>,
    scale: f64,
}

impl Model {
    fn build(view: &SystemView) -> Result<Self, StrategyError> {
        let n = view.n();
        let mut big = vec![0.0; n];
        let mut lin = vec![0.0; n];
        let mut off = vec![0.0; n];
        let mut g = vec![0.0; n * n];
        for (i, v) in view.networks.iter().enumerate() {
            let Distribution::Uniform { lo, hi } = v.space else {
                return Err(StrategyError::Unsupported { solver: "multi-network QP", needs: "uniform free space".into() });
            };
            if !usable(v) {
                continue;
            }
            let w = hi - v.level.max(lo);
            let e = (lo - v.level).max(0.0);
            big[i] = v.n_alive * w;
            lin[i] = v.n_alive * (v.load_mean + v.level + e);
            off[i] = e / w;
            for j in 0..n {
                g[j * n + i] = view.networks[j].pool / (v.n_alive * w);
            }
        }
        let scale = lin.iter().chain(&big).map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        Ok(Model { n, big, lin, off, g, scale })
    }

    fn deltas(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| x[j * self.n + i] * self.g[j * self.n + i]).sum::<f64>() - self.off[i]).collect()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.deltas(x).iter().enumerate().map(|(i, d)| self.big[i] * d * d + self.lin[i] * d).sum::<f64>() / self.scale
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.deltas(x);
        let mut out = vec![0.0; self.n * self.n];
        for j in 0..self.n {
            for i in 0..self.n {
                out[j * self.n + i] = (2.0 * self.big[i] * d[i] + self.lin[i]) * self.g[j * self.n + i] / self.scale;
            }
        }
        out
    }
}

/// Euclidean projection of `v` onto `{x : sum x = 1, lo <= x <= hi}`.
fn project_row(v: &[f64], lo: &[f64], hi: &[f64], out: &mut [f64]) {
    let total = |tau: f64| -> f64 { v.iter().zip(lo).zip(hi).map(|((x, l), h)| (x - tau).clamp(*l, *h)).sum() };
    let mut a = v.iter().zip(hi).map(|(x, h)| x - h).fold(f64::INFINITY, f64::min);
    let mut b = v.iter().zip(lo).map(|(x, l)| x - l).fold(f64::NEG_INFINITY, f64::max);
    // total(a) >= 1 >= total(b), total decreasing in tau
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if total(mid) >= 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let tau = 0.5 * (a + b);
    for ((o, x), (l, h)) in out.iter_mut().zip(v).zip(lo.iter().zip(hi)) {
        *o = (x - tau).clamp(*l, *h);
    }
    // push the rounding residue into an entry with room for it
    let residue = 1.0 - out.iter().sum::<f64>();
    if let Some(k) = (0..out.len()).find(|&k| out[k] + residue >= lo[k] && out[k] + residue <= hi[k]) {
        out[k] += residue;
    }
}

struct Feasible {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Feasible {
    /// Bounds with the columns of networks that cannot take load closed. A row that
    /// becomes infeasible that way is reopened on the open columns.
    fn new(view: &SystemView, bounds: &SwoBounds) -> Result<Self, StrategyError> {
        bounds.check_feasible()?;
        let n = view.n();
        let open: Vec<bool> = view.networks.iter().map(usable).collect();
        let mut lo = vec![0.0; n * n];
        let mut hi = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                if open[c] {
                    let iv = bounds.get(r, c);
                    lo[r * n + c] = iv.lo;
                    hi[r * n + c] = iv.hi;
                }
            }
            let (sl, sh): (f64, f64) = (0..n).fold((0.0, 0.0), |(a, b), c| (a + lo[r * n + c], b + hi[r * n + c]));
            if sl > 1.0 + 1e-12 || sh < 1.0 - 1e-12 {
                for c in 0..n {
                    lo[r * n + c] = 0.0;
                    hi[r * n + c] = if open[c] { 1.0 } else { 0.0 };
                }
            }
        }
        Ok(Feasible { n, lo, hi })
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            let s = r * n..(r + 1) * n;
            project_row(&x[s.clone()], &self.lo[s.clone()], &self.hi[s.clone()], &mut out[s]);
        }
        out
    }
}

/// For two networks the cost depends on `(alpha, beta)` only through the net transfer
/// `alpha F_A - beta F_B`, so the minimizers form a segment. Moves to its end with the
/// smallest alpha, then the smallest beta.
fn canonical_pair(x: &[f64], feas: &Feasible, fa: f64, fb: f64) -> Vec<f64> {
    let a_lo = feas.lo[0].max(1.0 - feas.hi[1]);
    let a_hi = feas.hi[0].min(1.0 - feas.lo[1]);
    let b_lo = feas.lo[3].max(1.0 - feas.hi[2]);
    let b_hi = feas.hi[3].min(1.0 - feas.lo[2]);
    let c = x[0] * fa - x[3] * fb;
    let (alpha, beta) = match (fa > 0.0, fb > 0.0) {
        (false, false) => (a_lo, b_lo),
        (false, true) => (a_lo, x[3]),
        (true, false) => (x[0], b_lo),
        (true, true) => {
            let alpha = ((c + b_lo * fb) / fa).clamp(a_lo, a_hi).min(x[0]);
            (alpha, ((alpha * fa - c) / fb).clamp(b_lo, b_hi))
        }
    };
    vec![alpha, 1.0 - alpha, 1.0 - beta, beta]
}

/// Moves mass inside one row from the column with the largest marginal cost to the one
/// with the smallest, among columns that can give and take. The amount is the exact
/// minimizer along that direction. Returns `false` once no pair improves.
fn exchange_step(model: &Model, feas: &Feasible, x: &mut [f64]) -> bool {
    let n = model.n;
    let grad = model.gradient(x);
    let mut best: Option<(usize, usize, usize, f64)> = None;
    for j in 0..n {
        for a in 0..n {
            let ka = j * n + a;
            if x[ka] >= feas.hi[ka] - 1e-15 {
                continue;
            }
            for b in 0..n {
                let kb = j * n + b;
                if a == b || x[kb] <= feas.lo[kb] + 1e-15 {
                    continue;
                }
                let gain = grad[kb] - grad[ka];
                if best.is_none_or(|(_, _, _, g)| gain > g) {
                    best = Some((j, a, b, gain));
                }
            }
        }
    }
    let Some((j, a, b, gain)) = best else { return false };
    if gain <= EXCHANGE_TOLERANCE {
        return false;
    }
    let (ka, kb) = (j * n + a, j * n + b);
    let room = (feas.hi[ka] - x[ka]).min(x[kb] - feas.lo[kb]);
    let curvature = (model.big[a] * model.g[ka].powi(2) + model.big[b] * model.g[kb].powi(2)) / model.scale;
    let t = if curvature > 0.0 { (gain / (2.0 * curvature)).min(room) } else { room };
    if !(t > 0.0) {
        return false;
    }
    x[ka] += t;
    x[kb] -= t;
    true
}

fn natural_residual(model: &Model, feas: &Feasible, x: &[f64]) -> f64 {
    let g = model.gradient(x);
    let step: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
    let p = feas.project(&step);
    x.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Solves the `n`-network quadratic program under per-entry bounds.
///
/// Starts from the size-based matrix projected onto the bounds. For a state that is
/// symmetric under permuting the networks that start is already optimal, so the result
/// keeps the symmetry.
pub fn swo_solve_multinet(view: &SystemView, bounds: &SwoBounds) -> Result<MultiNetSolution, StrategyError> {
    let n = view.n();
    if bounds.n() != n {
        return Err(ModelError::DimensionMismatch { expected: n, got: bounds.n() }.into());
    }
    let model = Model::build(view)?;
    let feas = Feasible::new(view, bounds)?;
    let open: Vec<f64> = view.networks.iter().map(|v| if usable(v) { v.n_alive } else { 0.0 }).collect();
    let start = match CouplingMatrix::proportional(&open) {
        Some(m) => m.entries().to_vec(),
        None => CouplingMatrix::identity(n).entries().to_vec(),
    };
    let mut x = feas.project(&start);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && exchange_step(&model, &feas, &mut x) {
        iterations += 1;
    }
    let mut residual = natural_residual(&model, &feas, &x);
    if n == 2 && view.networks.iter().all(usable) {
        x = canonical_pair(&x, &feas, view.networks[0].pool, view.networks[1].pool);
        residual = natural_residual(&model, &feas, &x);
    }
    let at_boundary = x
        .iter()
        .zip(feas.lo.iter().zip(&feas.hi))
        .map(|(v, (l, h))| (v - l).abs() <= 1e-9 || (v - h).abs() <= 1e-9)
        .collect();
    let objective = swo_objective_matrix(&x, view);
    let matrix = CouplingMatrix::new(n, x).map_err(ModelError::from)?;
    Ok(MultiNetSolution { matrix, objective, kkt_residual: residual, iterations, at_boundary })
}

/// Quadratic-model cost of `entries` (un-normalized), for comparing solvers.
pub fn multinet_objective(entries: &[f64], view: &SystemView) -> Result<f64, StrategyError> {
    let model = Model::build(view)?;
    Ok(model.value(entries) * model.scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{swo_build_uniform, swo_solve_box, Interval, NetworkView};
    use proptest::prelude::*;

    fn net(n_alive: f64, pool: f64, level: f64, lo: f64, hi: f64, load_mean: f64) -> NetworkView {
        NetworkView {
            node_count: 1e6,
            attack: 0.0,
            n_alive,
            failed_fraction: 1.0 - n_alive / 1e6,
            level,
            last_step: 0.0,
            pool,
            load_mean,
            space: Distribution::uniform(lo, hi).unwrap(),
        }
    }

    #[test]
    fn row_projection_respects_bounds() {
        let mut out = [0.0; 3];
        project_row(&[0.9, 0.8, -0.3], &[0.0, 0.0, 0.1], &[1.0, 0.5, 1.0], &mut out);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(out[1] <= 0.5 && out[2] >= 0.1);
    }

    #[test]
    fn infeasible_bounds_rejected() {
        let v = SystemView { t: 0, networks: vec![net(5e5, 1e5, 0.0, 20.0, 180.0, 75.0); 3] };
        let mut entries = vec![Interval::UNIT; 9];
        entries[0] = Interval { lo: 0.6, hi: 1.0 };
        entries[1] = Interval { lo: 0.6, hi: 1.0 };
        let b = SwoBounds { n: 3, entries };
        assert_eq!(swo_solve_multinet(&v, &b), Err(StrategyError::InfeasibleBounds { row: 0 }));
    }

    #[test]
    fn symmetric_state_gives_symmetric_matrix() {
        let v = SystemView { t: 2, networks: vec![net(4e5, 2e6, 30.0, 20.0, 180.0, 75.0); 3] };
        let s = swo_solve_multinet(&v, &SwoBounds::unconstrained(3)).unwrap();
        assert!(s.kkt_residual < KKT_TOLERANCE);
        let m = &s.matrix;
        for i in 0..3 {
            for j in 0..3 {
                // invariant under swapping any two networks
                assert!((m.get(i, j) - m.get(j, i)).abs() < 1e-9);
                assert!((m.get(i, i) - m.get(0, 0)).abs() < 1e-9);
            }
        }
    }

    fn any_two() -> impl Strategy<Value = SystemView> {
        let one = (1e4..1e6f64, 0.0..3e7f64, 0.0..20.0f64, 10.0..60.0f64, 40.0..200.0f64, 5.0..100.0f64);
        (one.clone(), one).prop_map(|(a, b)| {
            let mk = |(n, f, q, lo, w, l): (f64, f64, f64, f64, f64, f64)| net(n, f, q, lo, lo + w, l);
            SystemView { t: 1, networks: vec![mk(a), mk(b)] }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reduces_to_box_solver_for_two_networks(v in any_two()) {
            let k = swo_build_uniform(&v).unwrap();
            let b = swo_solve_box(&k, Interval::UNIT, Interval::UNIT);
            let s = swo_solve_multinet(&v, &SwoBounds::unconstrained(2)).unwrap();
            prop_assert!(s.kkt_residual < KKT_TOLERANCE, "res {:e} iters {}", s.kkt_residual, s.iterations);
            prop_assert!((s.matrix.alpha() - b.alpha).abs() < 1e-6, "{} vs {}", s.matrix.alpha(), b.alpha);
            prop_assert!((s.matrix.beta() - b.beta).abs() < 1e-6, "{} vs {}", s.matrix.beta(), b.beta);
        }

        #[test]
        fn never_worse_than_size_based(v in any_two(), extra in (1e4..1e6f64, 0.0..3e7f64, 0.0..20.0f64)) {
            let mut v = v;
            v.networks.push(net(extra.0, extra.1, extra.2, 20.0, 180.0, 75.0));
            let s = swo_solve_multinet(&v, &SwoBounds::unconstrained(3)).unwrap();
            let counts: Vec<f64> = v.networks.iter().map(|n| n.n_alive).collect();
            let sbd = CouplingMatrix::proportional(&counts).unwrap();
            let q_opt = multinet_objective(s.matrix.entries(), &v).unwrap();
            let q_sbd = multinet_objective(sbd.entries(), &v).unwrap();
            prop_assert!(q_opt <= q_sbd + 1e-9 * q_sbd.abs().max(1.0));
        }
    }
}
