//! Embedded k-disk subdivision trees with certified bounded geometry.
//!
//! The construction pushes a strongly epsilon-bounded disk through g = f^p
//! one step at a time; after each push the parameter cube is dyadically
//! bisected until every child chart is certified strongly epsilon-bounded
//! again. Children near the pushed boundary are colored blue, interior ones
//! red, and nearby red children form admissible families. Atoms of the
//! resulting level partitions play the role of the Yomdin partition.
//!
//! Exact dyadic cells keep the combinatorics precise at any depth. Geometry
//! is float: for constant-Jacobian systems the chart evaluation is exact in
//! the relative frame at every depth; for nonlinear systems orbit shadowing
//! limits trustworthy depth to roughly 35 / (p * top exponent) levels, which
//! covers every nonlinear run in this crate.

mod cell;
mod chart;
mod certify;
mod subdivide;
mod tree;

pub use cell::{cells_tile_parent, cells_tile_unit_cube, DyadicCell};
pub use chart::{grid_points, BaseEmbedding, Chart, ChartGrid, Evaluator};
pub use certify::{certify_chart, BoundedCoupleReport};
pub use subdivide::{subdivide_step, SubdivideOutcome};
pub use tree::{
    check_geometry, estimate_epsilon0, grow_focused, grow_tree, max_profile_spread,
    snapshot_lines, DiskTree, GeometryGates, NodeColor, ProfileEntry, ProfileRange, SnapshotNode,
    TreeNode,
};

use crate::linalg::Mat;
use crate::systems::{SmoothSystem, TorusPoint};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiskTreeError {
    #[error("grid too coarse: {pts} points per axis, need at least {needed}")]
    GridTooCoarse { pts: usize, needed: usize },
    #[error("geometry blowup: cell at depth {} (cap {cap}) still not certifiable: {cell:?}", cell.depth)]
    GeometryBlowup { cell: DyadicCell, cap: u32 },
    #[error("root disk is not strongly epsilon-bounded: |chart|_r = {chart_norm:.4e} > {threshold:.4e}")]
    RootNotBounded { chart_norm: f64, threshold: f64 },
    #[error("level {level} beyond tree depth {depth}")]
    LevelOutOfRange { level: u32, depth: u32 },
    #[error("point does not resolve to a cell of the disk")]
    PointOutsideDisk,
}

/// Parameters of the subdivision machinery.
#[derive(Debug, Clone)]
pub struct TreeConfig {
    /// Scale epsilon of the strong bound.
    pub epsilon: f64,
    /// Block length: g = f^p.
    pub p: u32,
    /// Sample-grid points per parameter axis.
    pub grid_per_axis: usize,
    /// Smoothness order r used by certification (seminorms up to r-1 / r).
    pub order_r: u32,
    /// Bisection depth cap per subdivision step.
    pub depth_cap: u32,
    /// Admissible-family size cap; larger merges are split and counted.
    pub family_cap: usize,
    /// Total node cap; growth truncates with a marker beyond it.
    pub node_cap: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            epsilon: 0.05,
            p: 3,
            grid_per_axis: 17,
            order_r: 3,
            depth_cap: 12,
            family_cap: 64,
            node_cap: 2_000_000,
        }
    }
}

/// An affine k-disk through `center` spanned by the given directions, scaled
/// to sit safely inside the strong epsilon bound.
pub fn affine_disk(center: &TorusPoint, directions: &[Vec<f64>], epsilon: f64) -> Arc<BaseEmbedding> {
    let k = directions.len();
    let d = center.dim();
    let scale = 0.8 * epsilon / (k as f64).sqrt();
    let frame = Mat::from_fn(d, k, |r, c| {
        let dir = &directions[c];
        let n = crate::linalg::norm(dir);
        scale * dir[r] / n
    });
    Arc::new(BaseEmbedding::Affine { x0: center.coords().to_vec(), frame })
}

/// Numerically estimated leading expansion directions at `x`: propagate an
/// orthonormal frame for a while and keep the top-k columns.
pub fn unstable_directions(system: &SmoothSystem, x: &TorusPoint, k: usize, steps: usize) -> Vec<Vec<f64>> {
    let d = system.dim();
    let mut q = Mat::identity(d);
    let mut cur = x.clone();
    for _ in 0..steps {
        let b = system.jacobian(cur.coords()).matmul(&q);
        let (qq, _) = b.qr_diag();
        q = qq;
        cur = system.apply(&cur);
    }
    (0..k).map(|c| q.col(c)).collect()
}
