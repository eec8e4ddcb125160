//! Static description of the interdependent system: per-network parameters and the
//! initial attack.

use std::fmt;
use std::str::FromStr;

use crate::dist::Distribution;
use crate::error::ModelError;

/// How failed load spreads inside one network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    /// Fully connected: failed load is shared equally by every survivor.
    Complete,
    /// G(N, p) with `p = mean_degree / (N - 1)`.
    ErdosRenyi { mean_degree: f64 },
    /// Preferential attachment with `ceil(mean_degree / 2)` edges per arriving node.
    BarabasiAlbert { mean_degree: f64 },
}

impl Topology {
    pub fn mean_degree(&self) -> Option<f64> {
        match *self {
            Topology::Complete => None,
            Topology::ErdosRenyi { mean_degree } | Topology::BarabasiAlbert { mean_degree } => Some(mean_degree),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Topology::Complete => write!(f, "complete"),
            Topology::ErdosRenyi { mean_degree } => write!(f, "er:{mean_degree}"),
            Topology::BarabasiAlbert { mean_degree } => write!(f, "ba:{mean_degree}"),
        }
    }
}

impl FromStr for Topology {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "complete" {
            return Ok(Topology::Complete);
        }
        let bad = || ModelError::Parse(format!("cannot parse topology `{s}` (complete | er:<k> | ba:<k>)"));
        let (kind, k) = s.split_once(':').ok_or_else(bad)?;
        let mean_degree: f64 = k.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "er" => Ok(Topology::ErdosRenyi { mean_degree }),
            "ba" => Ok(Topology::BarabasiAlbert { mean_degree }),
            _ => Err(bad()),
        }
    }
}

/// Static parameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub id: usize,
    pub node_count: usize,
    pub load: Distribution,
    pub space: Distribution,
    pub topology: Topology,
}

impl NetworkConfig {
    pub fn complete(id: usize, node_count: usize, load: Distribution, space: Distribution) -> Self {
        NetworkConfig { id, node_count, load, space, topology: Topology::Complete }
    }

    pub fn with_topology(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: String| Err(ModelError::InvalidNetwork { id: self.id, reason });
        if self.node_count == 0 {
            return fail("node_count must be at least 1".into());
        }
        self.load.validate()?;
        self.space.validate()?;
        if let Some(k) = self.topology.mean_degree() {
            if !(k > 0.0 && k < self.node_count as f64) {
                return fail(format!("mean degree {k} must lie in (0, {})", self.node_count));
            }
        }
        Ok(())
    }
}

/// Fraction of nodes removed from each network at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec(Vec<f64>);

impl AttackSpec {
    pub fn new(fractions: Vec<f64>) -> Result<Self, ModelError> {
        for (index, &value) in fractions.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::InvalidAttack { index, value });
            }
        }
        Ok(AttackSpec(fractions))
    }

    /// `scale * shape`, each component clamped into `[0, 1]`.
    pub fn scaled(shape: &[f64], scale: f64) -> Self {
        AttackSpec(shape.iter().map(|s| (s * scale).clamp(0.0, 1.0)).collect())
    }

    pub fn fractions(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for AttackSpec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Checks a set of networks against an attack vector.
pub fn validate_system(networks: &[NetworkConfig], attack: &AttackSpec) -> Result<(), ModelError> {
    if networks.is_empty() {
        return Err(ModelError::DimensionMismatch { expected: 1, got: 0 });
    }
    if attack.len() != networks.len() {
        return Err(ModelError::DimensionMismatch { expected: networks.len(), got: attack.len() });
    }
    networks.iter().try_for_each(NetworkConfig::validate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(k: Topology) -> NetworkConfig {
        NetworkConfig::complete(0, 100, Distribution::point(1.0).unwrap(), Distribution::uniform(0.0, 1.0).unwrap())
            .with_topology(k)
    }

    #[test]
    fn degree_must_fit_node_count() {
        assert!(net(Topology::ErdosRenyi { mean_degree: 40.0 }).validate().is_ok());
        assert!(net(Topology::ErdosRenyi { mean_degree: 100.0 }).validate().is_err());
        assert!(net(Topology::BarabasiAlbert { mean_degree: 0.0 }).validate().is_err());
    }

    #[test]
    fn attack_range_checked() {
        assert!(AttackSpec::new(vec![0.0, 1.0]).is_ok());
        assert_eq!(
            AttackSpec::new(vec![0.2, 1.5]),
            Err(ModelError::InvalidAttack { index: 1, value: 1.5 })
        );
    }

    #[test]
    fn topology_text_round_trip() {
        for t in [Topology::Complete, Topology::ErdosRenyi { mean_degree: 40.0 }, Topology::BarabasiAlbert { mean_degree: 20.0 }] {
            assert_eq!(t.to_string().parse::<Topology>().unwrap(), t);
        }
        assert!("ws:4".parse::<Topology>().is_err());
    }
}
