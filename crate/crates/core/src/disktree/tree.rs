//! The colored subdivision tree of a disk under g = f^p, its Yomdin
//! partition atoms, per-node expansion profiles, and the geometric gates
//! (distortion, tangent oscillation, diameter contraction, tiling).

use super::cell::{cells_tile_parent, cells_tile_unit_cube, DyadicCell};
use super::certify::certify_chart;
use super::chart::{BaseEmbedding, Chart, Evaluator};
use super::subdivide::subdivide_step;
use super::{DiskTreeError, TreeConfig};
use crate::exterior::wedge_vector;
use crate::linalg::{norm, Mat};
use crate::systems::{jacobian_cocycle, SmoothSystem, TorusPoint};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeColor {
    Red,
    Blue,
}

/// Integer expansion profile of one g-step at a witness point: l is the
/// floored log wedge stretch along the disk tangent, l' the ceiled log+ of
/// the strongest lower-order expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ProfileEntry {
    pub l: i64,
    pub lp: i64,
}

/// Min/max of the profile integers over every grid witness of the node's
/// charts; the family-stability lemma says max - min <= 1.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileRange {
    pub l_min: i64,
    pub l_max: i64,
    pub lp_min: i64,
    pub lp_max: i64,
}

#[derive(Debug)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub level: u32,
    pub color: NodeColor,
    pub charts: Vec<Chart>,
    pub profile: ProfileEntry,
    pub range: ProfileRange,
}

#[derive(Debug)]
pub struct DiskTree {
    pub cfg: TreeConfig,
    pub k: usize,
    pub base: Arc<BaseEmbedding>,
    pub nodes: Vec<TreeNode>,
    /// Node ids per level.
    pub levels: Vec<Vec<usize>>,
    /// Set when growth stopped at the node cap; the deepest level is partial.
    pub truncated: bool,
    /// Levels below this were expanded only along the focus branch.
    pub focused_below: Option<u32>,
}

/// Profile of one g-step at a witness: the wedge image of the unit tangent
/// k-vector under wedge^k dg, and the strongest lower-order expansion.
fn profile_at(
    system: &SmoothSystem,
    p: u32,
    anchor: &[f64],
    tangent: &Mat,
) -> (f64, f64) {
    let k = tangent.cols();
    let dg = jacobian_cocycle(system, &TorusPoint::new(anchor.to_vec()), p as i64).matrix;
    let mut w = wedge_vector(tangent);
    let nw = norm(&w);
    for x in w.iter_mut() {
        *x /= nw;
    }
    let cg = crate::exterior::compound_matrix(&dg, k).expect("k within range");
    let l_raw = norm(&cg.entries.matvec(&w)).ln();
    let mut lp_raw = 0.0f64;
    for kp in 1..k {
        lp_raw = lp_raw.max(crate::exterior::log_wedge_norm(&dg, kp).expect("kp in range"));
    }
    (l_raw, lp_raw.max(0.0))
}

fn node_profile(system: &SmoothSystem, p: u32, charts: &[Chart]) -> (ProfileEntry, ProfileRange) {
    let mut entry = None;
    let mut range = ProfileRange { l_min: i64::MAX, l_max: i64::MIN, lp_min: i64::MAX, lp_max: i64::MIN };
    for chart in charts {
        for (anchor, tangent) in chart.grid.anchors.iter().zip(&chart.grid.tangents) {
            let (l_raw, lp_raw) = profile_at(system, p, anchor, tangent);
            let l = l_raw.floor() as i64;
            let lp = lp_raw.ceil() as i64;
            if entry.is_none() {
                entry = Some(ProfileEntry { l, lp });
            }
            range.l_min = range.l_min.min(l);
            range.l_max = range.l_max.max(l);
            range.lp_min = range.lp_min.min(lp);
            range.lp_max = range.lp_max.max(lp);
        }
    }
    (entry.expect("node has at least one chart"), range)
}

impl DiskTree {
    pub fn depth(&self) -> u32 {
        self.levels.len() as u32 - 1
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn level_nodes(&self, level: u32) -> &[usize] {
        &self.levels[level as usize]
    }

    pub fn children_of(&self, id: usize) -> Vec<usize> {
        let level = self.nodes[id].level as usize + 1;
        if level >= self.levels.len() {
            return Vec::new();
        }
        self.levels[level]
            .iter()
            .copied()
            .filter(|&c| self.nodes[c].parent == Some(id))
            .collect()
    }

    /// Path of node ids from the root to `id`, inclusive.
    pub fn path_to_root(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// The per-level profile entries along the path to a level-n node:
    /// entries i = 0..n-1 from the ancestors at levels 0..n-1.
    pub fn hyp_profile(&self, leaf: usize) -> Vec<ProfileEntry> {
        let path = self.path_to_root(leaf);
        path[..path.len() - 1].iter().map(|&id| self.nodes[id].profile).collect()
    }

    /// Family-worst profile along the path: min l and max l' over each
    /// ancestor family's grid witnesses.
    pub fn hyp_profile_worst(&self, leaf: usize) -> Vec<ProfileEntry> {
        let path = self.path_to_root(leaf);
        path[..path.len() - 1]
            .iter()
            .map(|&id| {
                let r = self.nodes[id].range;
                ProfileEntry { l: r.l_min, lp: r.lp_max }
            })
            .collect()
    }

    /// The unique level-l chart whose parameter cell contains the point;
    /// boundary ties go to the lexicographically smallest cell corner.
    pub fn atom_of_param(&self, t: &[f64], level: u32) -> Result<(usize, usize), DiskTreeError> {
        if level as usize >= self.levels.len() {
            return Err(DiskTreeError::LevelOutOfRange { level, depth: self.depth() });
        }
        if t.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(DiskTreeError::PointOutsideDisk);
        }
        let mut hits: Vec<(usize, usize)> = Vec::new();
        for &id in &self.levels[level as usize] {
            for (ci, chart) in self.nodes[id].charts.iter().enumerate() {
                if chart.cell.contains_point(t) {
                    hits.push((id, ci));
                }
            }
        }
        let cell_of = |&(id, ci): &(usize, usize)| -> &DyadicCell { &self.nodes[id].charts[ci].cell };
        hits.sort_by(|a, b| {
            let (ca, cb) = (cell_of(a), cell_of(b));
            let da = ca.lo();
            let db = cb.lo();
            da.partial_cmp(&db).unwrap().then((ca.depth, a.0, a.1).cmp(&(cb.depth, b.0, b.1)))
        });
        hits.into_iter().next().ok_or(DiskTreeError::PointOutsideDisk)
    }

    /// Resolve a torus point through the base embedding, then descend. Only
    /// meaningful for affine bases (least squares against the frame).
    pub fn atom_of_torus(&self, x: &TorusPoint, level: u32) -> Result<(usize, usize), DiskTreeError> {
        let (x0, frame) = match self.base.as_ref() {
            BaseEmbedding::Affine { x0, frame } => (x0, frame),
            _ => return Err(DiskTreeError::PointOutsideDisk),
        };
        let d = x0.len();
        // Min-image lift of x - x0 per axis.
        let rhs: Vec<f64> = (0..d)
            .map(|i| {
                let mut r = (x.coords()[i] - x0[i]).rem_euclid(1.0);
                if r > 0.5 {
                    r -= 1.0;
                }
                r
            })
            .collect();
        let gram = frame.transpose().matmul(frame);
        let t = gram.inverse().matvec(&frame.transpose().matvec(&rhs));
        let residual = norm(&crate::linalg::sub(&frame.matvec(&t), &rhs));
        if residual > 1e-8 || t.iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
            return Err(DiskTreeError::PointOutsideDisk);
        }
        let t: Vec<f64> = t.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        self.atom_of_param(&t, level)
    }

    /// Exact parameter tiling at a level (skipped below a focus split, where
    /// the level is intentionally partial).
    pub fn level_tiles_exactly(&self, level: u32) -> bool {
        let cells: Vec<DyadicCell> = self.levels[level as usize]
            .iter()
            .flat_map(|&id| self.nodes[id].charts.iter().map(|c| c.cell.clone()))
            .collect();
        cells_tile_unit_cube(&cells)
    }
}

fn root_chart(
    system: &SmoothSystem,
    base: &Arc<BaseEmbedding>,
    cfg: &TreeConfig,
) -> Result<Chart, DiskTreeError> {
    let cell = DyadicCell::root(base.k());
    let chart =
        Evaluator::new(system, cfg.p, base.clone(), cell.clone(), 0, cfg.grid_per_axis).eval(&cell);
    let report = certify_chart(&chart, cfg.epsilon, cfg.order_r)?;
    if !report.strongly_bounded {
        return Err(DiskTreeError::RootNotBounded {
            chart_norm: report.chart_norm_r,
            threshold: 0.9 * cfg.epsilon / (base.k() as f64).sqrt(),
        });
    }
    Ok(chart)
}

/// Grow the full tree to depth n. Every node of every level is expanded;
/// exceeding the node cap leaves a truncated tree with the flag set.
pub fn grow_tree(
    system: &SmoothSystem,
    base: Arc<BaseEmbedding>,
    cfg: &TreeConfig,
    n: u32,
) -> Result<DiskTree, DiskTreeError> {
    grow_inner(system, base, cfg, n, None)
}

/// Grow a focused tree: below `split_level` only the branch whose parameter
/// cell contains `focus` is expanded; from there to depth n the subtree is
/// complete. Keeps deep runs tractable while every retained node is built by
/// the same subdivision as the full tree.
pub fn grow_focused(
    system: &SmoothSystem,
    base: Arc<BaseEmbedding>,
    cfg: &TreeConfig,
    n: u32,
    focus: &[f64],
    split_level: u32,
) -> Result<DiskTree, DiskTreeError> {
    grow_inner(system, base, cfg, n, Some((focus.to_vec(), split_level)))
}

fn grow_inner(
    system: &SmoothSystem,
    base: Arc<BaseEmbedding>,
    cfg: &TreeConfig,
    n: u32,
    focus: Option<(Vec<f64>, u32)>,
) -> Result<DiskTree, DiskTreeError> {
    let k = base.k();
    let root = root_chart(system, &base, cfg)?;
    let (profile, range) = node_profile(system, cfg.p, std::slice::from_ref(&root));
    let mut tree = DiskTree {
        cfg: cfg.clone(),
        k,
        base,
        nodes: vec![TreeNode {
            id: 0,
            parent: None,
            level: 0,
            color: NodeColor::Red,
            charts: vec![root],
            profile,
            range,
        }],
        levels: vec![vec![0]],
        truncated: false,
        focused_below: focus.as_ref().map(|(_, s)| *s),
    };

    for level in 0..n {
        let parents: Vec<usize> = match &focus {
            Some((point, split)) if level < *split => {
                // Only the branch containing the focus point continues.
                let (id, _) = tree.atom_of_param(point, level)?;
                vec![id]
            }
            _ => tree.levels[level as usize].clone(),
        };
        let mut next = Vec::new();
        for pid in parents {
            for chart in tree.nodes[pid].charts.clone() {
                let out = subdivide_step(system, &chart, cfg)?;
                let mut push_node = |charts: Vec<Chart>, color: NodeColor, tree: &mut DiskTree| {
                    let (profile, range) = node_profile(system, cfg.p, &charts);
                    let id = tree.nodes.len();
                    tree.nodes.push(TreeNode {
                        id,
                        parent: Some(pid),
                        level: level + 1,
                        color,
                        charts,
                        profile,
                        range,
                    });
                    next.push(id);
                };
                for family in out.red_families {
                    push_node(family, NodeColor::Red, &mut tree);
                }
                for chart in out.blue {
                    push_node(vec![chart], NodeColor::Blue, &mut tree);
                }
                if tree.nodes.len() > cfg.node_cap {
                    tree.truncated = true;
                    tree.levels.push(next);
                    return Ok(tree);
                }
            }
        }
        tree.levels.push(next);
    }
    Ok(tree)
}

/// Geometric gate results over a whole tree.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryGates {
    /// max over charts of (sup wedge / inf wedge); lemma bound sqrt(2).
    pub max_distortion: f64,
    /// max over charts of pairwise tangent-plane Cayley angle; lemma bound pi/6.
    pub max_oscillation: f64,
    /// max over (node, level) of diam(preimage) / (eps 2^{l-n}); bound 1 + 1e-3.
    pub max_diameter_ratio: f64,
    /// Exact dyadic tiling at every complete level.
    pub tiling_exact: bool,
}

pub fn check_geometry(system: &SmoothSystem, tree: &DiskTree) -> GeometryGates {
    let mut max_distortion: f64 = 0.0;
    let mut max_oscillation: f64 = 0.0;
    for node in &tree.nodes {
        for chart in &node.charts {
            let lw_max = chart.grid.log_wedge.iter().cloned().fold(f64::MIN, f64::max);
            let lw_min = chart.grid.log_wedge.iter().cloned().fold(f64::MAX, f64::min);
            max_distortion = max_distortion.max((lw_max - lw_min).exp());
            let planes: Vec<Vec<f64>> = chart
                .grid
                .tangents
                .iter()
                .map(|t| {
                    let mut w = wedge_vector(t);
                    let n = norm(&w);
                    for x in w.iter_mut() {
                        *x /= n;
                    }
                    w
                })
                .collect();
            for i in 0..planes.len() {
                for j in i + 1..planes.len() {
                    let c = crate::linalg::dot(&planes[i], &planes[j]).abs().clamp(-1.0, 1.0);
                    max_oscillation = max_oscillation.max(c.acos());
                }
            }
        }
    }

    // Diameter contraction: preimages of every atom at every earlier level.
    let mut max_diameter_ratio: f64 = 0.0;
    for node in &tree.nodes {
        if node.level == 0 {
            continue;
        }
        for chart in &node.charts {
            for ell in 0..=node.level {
                let ev = Evaluator::new(
                    system,
                    tree.cfg.p,
                    tree.base.clone(),
                    chart.cell.clone(),
                    ell,
                    tree.cfg.grid_per_axis,
                );
                let pre = ev.eval(&chart.cell);
                let allowed = tree.cfg.epsilon * ((ell as f64) - (node.level as f64)).exp2();
                max_diameter_ratio = max_diameter_ratio.max(pre.grid.diameter() / allowed);
            }
        }
    }

    let first_complete = tree.focused_below.unwrap_or(0);
    let mut tiling_exact = true;
    for level in 0..tree.levels.len() as u32 {
        if level < first_complete {
            continue;
        }
        if tree.focused_below.is_some() {
            // Focused trees tile the split atom, not the unit cube.
            let split = tree.focused_below.unwrap();
            if level <= split {
                continue;
            }
            let ancestor_cells: Vec<DyadicCell> = tree.levels[split as usize]
                .iter()
                .flat_map(|&id| tree.nodes[id].charts.iter().map(|c| c.cell.clone()))
                .collect();
            let cells: Vec<DyadicCell> = tree.levels[level as usize]
                .iter()
                .flat_map(|&id| tree.nodes[id].charts.iter().map(|c| c.cell.clone()))
                .collect();
            // Group by which split-atom cell contains them.
            for anc in &ancestor_cells {
                let group: Vec<DyadicCell> =
                    cells.iter().filter(|c| anc.contains(c)).cloned().collect();
                if !group.is_empty() && !cells_tile_parent(anc, &group) {
                    tiling_exact = false;
                }
            }
        } else if !tree.level_tiles_exactly(level) {
            tiling_exact = false;
        }
    }

    GeometryGates { max_distortion, max_oscillation, max_diameter_ratio, tiling_exact }
}

/// Largest profile spread over all nodes: the family-stability lemma bounds
/// both components by 1.
pub fn max_profile_spread(tree: &DiskTree) -> (i64, i64) {
    let mut l_spread = 0;
    let mut lp_spread = 0;
    for node in &tree.nodes {
        l_spread = l_spread.max(node.range.l_max - node.range.l_min);
        lp_spread = lp_spread.max(node.range.lp_max - node.range.lp_min);
    }
    (l_spread, lp_spread)
}

/// Scale estimate eps_0(g): the largest epsilon in a dyadic sweep for which
/// probe estimates satisfy |d^s g at scale 2 eps| <= 3 eps |d_x g|; falls
/// back to 0.05 when no sweep value passes.
pub fn estimate_epsilon0(system: &SmoothSystem, p: u32, order_r: u32) -> f64 {
    let d = system.dim();
    let probes: Vec<Vec<f64>> = crate::systems::probe_grid(d, 4).collect();
    'sweep: for &eps in &[0.4, 0.2, 0.1, 0.05, 0.025, 0.0125] {
        for x in &probes {
            let dg = jacobian_cocycle(system, &TorusPoint::new(x.clone()), p as i64)
                .matrix
                .spectral_norm();
            // Rescaled local map w -> g(x + 2 eps w) on the unit ball;
            // s-th seminorm scales like (2 eps)^s sup |d^s g|.
            for s in 1..=order_r {
                let local = local_seminorm(system, p, x, s, 2.0 * eps);
                if local > 3.0 * eps * dg {
                    continue 'sweep;
                }
            }
        }
        return eps;
    }
    0.05
}

/// Crude sup |d^s of w -> g(x + h w)| along coordinate directions by
/// repeated central differencing with step h/4.
fn local_seminorm(system: &SmoothSystem, p: u32, x: &[f64], s: u32, h: f64) -> f64 {
    let d = system.dim();
    let step = 0.25f64;
    let g_at = |w: &[f64]| -> Vec<f64> {
        let mut y: Vec<f64> = x.iter().zip(w).map(|(a, b)| a + h * b).collect();
        for _ in 0..p {
            y = system.apply_lift(&y);
        }
        y
    };
    let mut best: f64 = 0.0;
    for axis in 0..d {
        // s-th forward difference along the axis, normalized by step^s.
        let mut vals: Vec<Vec<f64>> = (0..=s)
            .map(|i| {
                let mut w = vec![0.0; d];
                w[axis] = -0.5 + i as f64 * step;
                g_at(&w)
            })
            .collect();
        for _ in 0..s {
            vals = vals.windows(2).map(|p| crate::linalg::sub(&p[1], &p[0])).collect();
        }
        let mag = norm(&vals[0]) / step.powi(s as i32);
        best = best.max(mag);
    }
    best
}

/// One line per node, loadable for resumed structural analysis.
#[derive(Debug, Serialize, serde::Deserialize)]
pub struct SnapshotNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub level: u32,
    pub color: String,
    pub cells: Vec<(u32, Vec<u128>)>,
    pub profile: (i64, i64),
    pub grid_digest: u64,
}

pub fn snapshot_lines(tree: &DiskTree) -> Vec<SnapshotNode> {
    tree.nodes
        .iter()
        .map(|n| {
            let mut digest = 0xcbf29ce484222325u64;
            for chart in &n.charts {
                for off in &chart.grid.offsets {
                    for v in off {
                        for b in v.to_le_bytes() {
                            digest ^= b as u64;
                            digest = digest.wrapping_mul(0x100000001b3);
                        }
                    }
                }
            }
            SnapshotNode {
                id: n.id,
                parent: n.parent,
                level: n.level,
                color: match n.color {
                    NodeColor::Red => "red".to_string(),
                    NodeColor::Blue => "blue".to_string(),
                },
                cells: n.charts.iter().map(|c| (c.cell.depth, c.cell.idx.clone())).collect(),
                profile: (n.profile.l, n.profile.lp),
                grid_digest: digest,
            }
        })
        .collect()
}
