use serde::Serialize;

use crate::layerize::LayeredCircuit;
use crate::tensorize::TensorizedCircuit;

/// Size and sparsity summary of a layered circuit.
///
/// Sparsity is the number of edges divided by the number of edges a dense
/// interconnection of every pair of adjacent layers would have.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircuitStats {
    pub nodes_total: usize,
    pub nodes_per_layer: Vec<usize>,
    pub edges_total: usize,
    /// Edges between layer `l` and `l + 1`.
    pub edges_per_layer: Vec<usize>,
    pub sparsity: f64,
    /// Sparsity of each adjacent layer pair.
    pub layer_sparsity: Vec<f64>,
}

impl CircuitStats {
    pub fn from_sizes(nodes_per_layer: Vec<usize>, edges_per_layer: Vec<usize>) -> Self {
        assert_eq!(edges_per_layer.len() + 1, nodes_per_layer.len().max(1));
        let dense: Vec<usize> = nodes_per_layer.windows(2).map(|w| w[0] * w[1]).collect();
        let ratio = |e: usize, d: usize| if d == 0 { 0.0 } else { e as f64 / d as f64 };
        let edges_total = edges_per_layer.iter().sum();
        CircuitStats {
            nodes_total: nodes_per_layer.iter().sum(),
            sparsity: ratio(edges_total, dense.iter().sum()),
            layer_sparsity: edges_per_layer.iter().zip(&dense).map(|(&e, &d)| ratio(e, d)).collect(),
            nodes_per_layer,
            edges_total,
            edges_per_layer,
        }
    }

    pub fn from_layered(lc: &LayeredCircuit) -> Self {
        let nodes = lc.layer_sizes();
        let edges = lc.layers()[1..]
            .iter()
            .map(|layer| layer.iter().map(|n| n.children.len()).sum())
            .collect();
        Self::from_sizes(nodes, edges)
    }

    pub fn from_tensorized(tc: &TensorizedCircuit) -> Self {
        let mut nodes = vec![tc.num_inputs()];
        nodes.extend(tc.layers().iter().map(|l| l.width()));
        let edges = tc.layers().iter().map(|l| l.num_edges()).collect();
        Self::from_sizes(nodes, edges)
    }

    pub fn num_layers(&self) -> usize {
        self.nodes_per_layer.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_layer_pair() {
        let s = CircuitStats::from_sizes(vec![8, 7], vec![9]);
        assert_eq!(s.nodes_total, 15);
        assert_eq!(s.sparsity, 9.0 / 56.0);
    }

    #[test]
    fn fully_dense() {
        let s = CircuitStats::from_sizes(vec![2, 2], vec![4]);
        assert_eq!(s.sparsity, 1.0);
        assert_eq!(s.layer_sparsity, vec![1.0]);
    }

    #[test]
    fn no_layers() {
        let s = CircuitStats::from_sizes(vec![0], vec![]);
        assert_eq!(s.sparsity, 0.0);
        assert_eq!(s.edges_total, 0);
    }
}
