use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub const MIN_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingPolicy {
    Uniform,
    /// Geometric spacing over the first eighth of the nodes, uniform after.
    GeometricNearZero,
}

/// How to lay out a radial grid on `[eps0, s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nodes: usize,
    pub policy: SpacingPolicy,
    /// Inner cutoff as a fraction of the outer radius (`eps0 = s · inner_fraction`).
    pub inner_fraction: f64,
    /// Upper bound on the node spacing; raises the node count for large radii.
    pub max_step: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nodes: 512, policy: SpacingPolicy::Uniform, inner_fraction: 1e-4, max_step: None }
    }
}

impl GridSpec {
    pub fn uniform(nodes: usize) -> Self {
        Self { nodes, ..Self::default() }
    }

    /// Uniform grid whose spacing never exceeds `max_step` (at least 512 nodes).
    pub fn resolving(max_step: f64) -> Self {
        Self { max_step: Some(max_step), ..Self::default() }
    }

    /// Node count actually used for outer radius `s`.
    pub fn node_count(&self, s: f64) -> usize {
        match self.max_step {
            Some(h) if h > 0.0 => self.nodes.max(((s / h).ceil() as usize) + 1),
            _ => self.nodes,
        }
    }

    /// Same layout, with the node count frozen at what radius `s` would use.
    pub fn frozen_for(&self, s: f64) -> Self {
        Self { nodes: self.node_count(s), max_step: None, ..*self }
    }
}

/// Strictly increasing nodes in `(0, s]` ending exactly at `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    s: f64,
    nodes: Vec<f64>,
    policy: SpacingPolicy,
}

impl RadialGrid {
    pub fn new(s: f64, spec: &GridSpec) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return domain(format!("outer radius must be positive, got {s}"));
        }
        if !(spec.inner_fraction > 0.0 && spec.inner_fraction < 1.0) {
            return domain(format!("inner fraction must lie in (0, 1), got {}", spec.inner_fraction));
        }
        let n = spec.node_count(s);
        if n < MIN_NODES {
            return domain(format!("radial grid needs at least {MIN_NODES} nodes, got {n}"));
        }
        let eps0 = s * spec.inner_fraction;
        let uniform = |n: usize| -> Vec<f64> {
            let h = (s - eps0) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { s } else { eps0 + h * i as f64 }).collect()
        };
        let nodes = match spec.policy {
            SpacingPolicy::Uniform => uniform(n),
            SpacingPolicy::GeometricNearZero => {
                let m = n / 8;
                let h = s / (n - m) as f64;
                if eps0 >= h {
                    uniform(n)
                } else {
                    let ratio = h / eps0;
                    let mut nodes: Vec<f64> =
                        (0..m).map(|j| eps0 * ratio.powf(j as f64 / m as f64)).collect();
                    nodes.extend((0..n - m).map(|k| if k == n - m - 1 { s } else { h * (k + 1) as f64 }));
                    nodes
                }
            }
        };
        Ok(Self { s, nodes, policy: spec.policy })
    }

    /// Wraps explicit nodes after checking the grid invariants.
    pub fn from_nodes(s: f64, nodes: Vec<f64>, policy: SpacingPolicy) -> Result<Self> {
        if nodes.len() < MIN_NODES {
            return domain(format!("radial grid needs at least {MIN_NODES} nodes, got {}", nodes.len()));
        }
        if nodes[0] <= 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("grid nodes must be positive and strictly increasing");
        }
        if *nodes.last().unwrap() != s {
            return domain("last grid node must equal the outer radius");
        }
        Ok(Self { s, nodes, policy })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn policy(&self) -> SpacingPolicy {
        self.policy
    }

    /// Index `i` with `nodes[i] ≤ r ≤ nodes[i+1]`, or `None` outside the grid.
    pub(crate) fn locate(&self, r: f64) -> Option<usize> {
        let n = self.nodes.len();
        if !(r >= self.nodes[0] && r <= self.s) {
            return None;
        }
        let i = self.nodes.partition_point(|&x| x <= r);
        Some(i.saturating_sub(1).min(n - 2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_invariants() {
        let g = RadialGrid::new(2.0, &GridSpec::uniform(512)).unwrap();
        assert_eq!(g.len(), 512);
        assert_eq!(*g.nodes().last().unwrap(), 2.0);
        assert!((g.nodes()[0] - 2e-4).abs() < 1e-18);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn geometric_grid_invariants() {
        let spec = GridSpec { policy: SpacingPolicy::GeometricNearZero, ..GridSpec::uniform(256) };
        let g = RadialGrid::new(3.0, &spec).unwrap();
        assert_eq!(g.len(), 256);
        assert_eq!(*g.nodes().last().unwrap(), 3.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(g.nodes()[1] - g.nodes()[0] < g.nodes()[255] - g.nodes()[254]);
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(RadialGrid::new(1.0, &GridSpec::uniform(1)).is_err());
        assert!(RadialGrid::new(1.0, &GridSpec::uniform(63)).is_err());
        assert!(RadialGrid::new(0.0, &GridSpec::uniform(64)).is_err());
    }

    #[test]
    fn max_step_raises_node_count() {
        let spec = GridSpec::resolving(0.01);
        assert_eq!(spec.node_count(2.0), 512);
        assert_eq!(spec.node_count(50.0), 5001);
        assert_eq!(spec.frozen_for(50.0).node_count(51.0), 5001);
    }

    #[test]
    fn locate_brackets() {
        let g = RadialGrid::new(1.0, &GridSpec::uniform(64)).unwrap();
        assert_eq!(g.locate(1.0), Some(62));
        assert_eq!(g.locate(g.nodes()[0]), Some(0));
        assert_eq!(g.locate(0.0), None);
        assert_eq!(g.locate(1.5), None);
    }
}
