//! Load and free-space distributions.
//!
//! Every node draws its initial load and its free space independently from one of these
//! families. The mean-field engine only ever needs the mean of the load and the tail
//! probabilities of the free space, both available in closed form.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution as _, Exp};

use crate::error::ModelError;

/// Declarative description of a non-negative scalar distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// `shift + Exp(rate)`.
    ShiftedExponential { shift: f64, rate: f64 },
    /// Degenerate at `value`.
    Point { value: f64 },
}

impl Distribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, ModelError> {
        let d = Distribution::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn shifted_exponential(shift: f64, rate: f64) -> Result<Self, ModelError> {
        let d = Distribution::ShiftedExponential { shift, rate };
        d.validate()?;
        Ok(d)
    }

    pub fn point(value: f64) -> Result<Self, ModelError> {
        let d = Distribution::Point { value };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = match *self {
            Distribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo,
            Distribution::ShiftedExponential { shift, rate } => {
                shift.is_finite() && rate.is_finite() && shift >= 0.0 && rate > 0.0
            }
            Distribution::Point { value } => value.is_finite() && value >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidDistribution(*self))
        }
    }

    /// `P[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Uniform { lo, hi } => {
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
            Distribution::ShiftedExponential { shift, rate } => {
                if x <= shift {
                    0.0
                } else {
                    -(-rate * (x - shift)).exp_m1()
                }
            }
            Distribution::Point { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `P[X >= x]`, the probability that a node with this much free space survives a
    /// cumulative extra load of `x` (failure needs the load to strictly exceed capacity).
    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            Distribution::Point { value } => {
                if x <= value {
                    1.0
                } else {
                    0.0
                }
            }
            // Continuous families: P[X >= x] = 1 - P[X <= x].
            Distribution::Uniform { lo, hi } => {
                if x <= lo {
                    1.0
                } else if x >= hi {
                    0.0
                } else {
                    (hi - x) / (hi - lo)
                }
            }
            Distribution::ShiftedExponential { shift, rate } => {
                if x <= shift {
                    1.0
                } else if x == f64::INFINITY {
                    0.0
                } else {
                    (-rate * (x - shift)).exp()
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::ShiftedExponential { shift, rate } => shift + 1.0 / rate,
            Distribution::Point { value } => value,
        }
    }

    /// Smallest value in the support.
    pub fn support_min(&self) -> f64 {
        match *self {
            Distribution::Uniform { lo, .. } => lo,
            Distribution::ShiftedExponential { shift, .. } => shift,
            Distribution::Point { value } => value,
        }
    }

    /// Largest value in the support (`+inf` for the exponential family).
    pub fn support_max(&self) -> f64 {
        match *self {
            Distribution::Uniform { hi, .. } => hi,
            Distribution::ShiftedExponential { .. } => f64::INFINITY,
            Distribution::Point { value } => value,
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, Distribution::Uniform { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            Distribution::ShiftedExponential { shift, rate } => {
                shift + Exp::new(rate).expect("validated rate").sample(rng)
            }
            Distribution::Point { value } => value,
        }
    }
}

impl fmt::Display for Distribution {
    /// Round-trippable text form used by the run config (`uniform:20,180`, ...).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Distribution::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Distribution::ShiftedExponential { shift, rate } => write!(f, "shifted_exp:{shift},{rate}"),
            Distribution::Point { value } => write!(f, "point:{value}"),
        }
    }
}

impl std::str::FromStr for Distribution {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::Parse(format!("cannot parse distribution `{s}`"));
        let (kind, args) = s.trim().split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind.trim(), nums.as_slice()) {
            ("uniform", [lo, hi]) => Distribution::uniform(*lo, *hi),
            ("shifted_exp", [shift, rate]) => Distribution::shifted_exponential(*shift, *rate),
            ("point", [v]) => Distribution::point(*v),
            _ => Err(bad()),
        }
    }
}
