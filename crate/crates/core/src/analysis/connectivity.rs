//! Block averages of the lifted connectivity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::approx::{BlockLayout, LiftedSystem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivitySummary {
    /// `means[i][j]`: mean of the block with rows in group `i` and columns in
    /// group `j`.
    pub means: Vec<Vec<f64>>,
    pub block_sizes: Vec<usize>,
}

/// Means of the `WP` blocks of a lifted system.
pub fn block_connectivity_means(lifted: &LiftedSystem) -> Result<ConnectivitySummary> {
    let layout = lifted
        .block_layout
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("block means need a block layout".into()))?;
    block_means(&lifted.connectivity, layout)
}

/// Block means of `m`; entries are summed row by row, left to right, and the
/// sum divided by the block size.
pub fn block_means(m: &DMatrix<f64>, layout: &BlockLayout) -> Result<ConnectivitySummary> {
    if m.nrows() != layout.total() || m.ncols() != layout.total() {
        return Err(Error::InvalidParameter(format!(
            "matrix is {}x{} but the layout covers {}",
            m.nrows(),
            m.ncols(),
            layout.total()
        )));
    }
    let groups = layout.sizes().len();
    let means = (0..groups)
        .map(|i| {
            (0..groups)
                .map(|j| {
                    let mut sum = 0.0;
                    for r in layout.range(i) {
                        for c in layout.range(j) {
                            sum += m[(r, c)];
                        }
                    }
                    sum / (layout.sizes()[i] * layout.sizes()[j]) as f64
                })
                .collect()
        })
        .collect();
    Ok(ConnectivitySummary { means, block_sizes: layout.sizes().to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::approx::{init_network, lift};

    fn layout() -> BlockLayout {
        BlockLayout::uniform(3, 45).unwrap()
    }

    #[test]
    fn all_ones_blocks() {
        let s = block_means(&DMatrix::from_element(45, 45, 1.0), &layout()).unwrap();
        assert!(s.means.iter().flatten().all(|&m| m == 1.0));
        assert_eq!(s.block_sizes, vec![15, 15, 15]);
    }

    #[test]
    fn scaled_identity_blocks() {
        let c = 2.0;
        let s = block_means(&(DMatrix::identity(45, 45) * c), &layout()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { c / 15.0 } else { 0.0 };
                assert_eq!(s.means[i][j], want);
            }
        }
    }

    #[test]
    fn uneven_blocks() {
        let l = BlockLayout::new(vec![1, 2]).unwrap();
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let s = block_means(&m, &l).unwrap();
        assert_eq!(s.means, vec![vec![1.0, 2.5], vec![5.5, 7.0]]);
    }

    #[test]
    fn lifted_system_needs_layout() {
        let dense = init_network(3, 6, None, Activation::tanh(), 1).unwrap();
        assert!(block_connectivity_means(&lift(&dense)).is_err());
        let blocked = init_network(3, 6, Some(BlockLayout::uniform(3, 6).unwrap()), Activation::tanh(), 1).unwrap();
        let s = block_connectivity_means(&lift(&blocked)).unwrap();
        assert_eq!(s.means.len(), 3);
    }

    #[test]
    fn mismatched_matrix_is_rejected() {
        assert!(block_means(&DMatrix::zeros(44, 45), &layout()).is_err());
    }
}
