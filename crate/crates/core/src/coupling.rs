//! Row-stochastic coupling matrices.
//!
//! Entry `(i, j)` is the fraction of the failed load released by network `i` that is
//! handed to the survivors of network `j`. For two networks the diagonal entries are the
//! in-net ratios `alpha` (network A) and `beta` (network B).

use std::fmt;

use thiserror::Error;

/// Maximum deviation of a row sum from one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingViolation {
    #[error("coupling matrix needs {expected} entries for n = {n}, got {got}")]
    Shape { n: usize, expected: usize, got: usize },
    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, not 1")]
    RowSum { row: usize, sum: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CouplingMatrix {
    /// Builds a matrix from row-major entries, rejecting anything that is not
    /// row-stochastic.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self, CouplingViolation> {
        let m = CouplingMatrix { n, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CouplingViolation> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(CouplingViolation::Shape { n, expected: n * n, got: bad.len() * n });
        }
        Self::new(n, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        CouplingMatrix { n, entries }
    }

    /// `[[alpha, 1 - alpha], [1 - beta, beta]]`.
    pub fn two(alpha: f64, beta: f64) -> Result<Self, CouplingViolation> {
        Self::new(2, vec![alpha, 1.0 - alpha, 1.0 - beta, beta])
    }

    /// Row-stochastic matrix whose every row is proportional to `weights`.
    pub fn proportional(weights: &[f64]) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let n = weights.len();
        let row: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let entries = (0..n).flat_map(|_| row.iter().copied()).collect();
        Some(CouplingMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.n..(row + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// In-net ratio of network A (two-network systems).
    pub fn alpha(&self) -> f64 {
        self.get(0, 0)
    }

    /// In-net ratio of network B (two-network systems).
    pub fn beta(&self) -> f64 {
        self.get(1, 1)
    }

    pub fn validate(&self) -> Result<(), CouplingViolation> {
        validate_coupling(self.n, &self.entries)
    }

    /// Load received by each network: `R_k = sum_i pools_i * m_{i,k}`.
    pub fn route(&self, pools: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| (0..self.n).map(|i| pools[i] * self.get(i, k)).sum())
            .collect()
    }

    /// Re-targets each row onto the networks flagged alive, keeping the relative weights
    /// among live targets. A row with no weight on any live network sends its load to
    /// the live networks uniformly. When nothing is alive the matrix is returned
    /// unchanged.
    pub fn restrict_to_live(&self, alive: &[bool]) -> CouplingMatrix {
        let live_count = alive.iter().filter(|a| **a).count();
        if live_count == 0 || live_count == self.n {
            return self.clone();
        }
        let mut entries = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let live_mass: f64 = row.iter().zip(alive).filter(|(_, a)| **a).map(|(v, _)| v).sum();
            for (j, v) in row.iter().enumerate() {
                entries.push(match (alive[j], live_mass > 0.0) {
                    (false, _) => 0.0,
                    (true, true) => v / live_mass,
                    (true, false) => 1.0 / live_count as f64,
                });
            }
        }
        CouplingMatrix { n: self.n, entries }
    }
}

impl fmt::Display for CouplingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            if i > 0 {
                write!(f, ";")?;
            }
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{v}")?;
            }
        }
        Ok(())
    }
}

/// Accepts iff every entry lies in `[0, 1]` and every row sums to one within
/// [`ROW_SUM_TOLERANCE`]. Reports the first violation in row-major order.
pub fn validate_coupling(n: usize, entries: &[f64]) -> Result<(), CouplingViolation> {
    if entries.len() != n * n {
        return Err(CouplingViolation::Shape { n, expected: n * n, got: entries.len() });
    }
    for row in 0..n {
        let r = &entries[row * n..(row + 1) * n];
        if let Some((col, &value)) = r.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(CouplingViolation::EntryOutOfRange { row, col, value });
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(CouplingViolation::RowSum { row, sum });
        }
    }
    Ok(())
}
