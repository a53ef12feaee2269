//! One subdivision step: push a certified chart through g = f^p and bisect
//! dyadically until every child is again strongly epsilon-bounded.
//!
//! Children whose image comes within 2 epsilon of the pushed parent's
//! boundary are blue; the remaining red children are merged into admissible
//! families when their images share an epsilon-neighborhood.

use super::cell::DyadicCell;
use super::certify::certify_chart;
use super::chart::{Chart, Evaluator};
use super::{DiskTreeError, TreeConfig};
use crate::linalg::{norm, sub};
use crate::systems::SmoothSystem;

#[derive(Debug)]
pub struct SubdivideOutcome {
    pub red_families: Vec<Vec<Chart>>,
    pub blue: Vec<Chart>,
    pub candidates_tested: usize,
    pub family_overflow_events: usize,
}

impl SubdivideOutcome {
    pub fn red_chart_count(&self) -> usize {
        self.red_families.iter().map(|f| f.len()).sum()
    }

    pub fn blue_chart_count(&self) -> usize {
        self.blue.len()
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, i: usize) -> usize {
        if self.0[i] != i {
            let r = self.find(self.0[i]);
            self.0[i] = r;
        }
        self.0[i]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub fn subdivide_step(
    system: &SmoothSystem,
    chart: &Chart,
    cfg: &TreeConfig,
) -> Result<SubdivideOutcome, DiskTreeError> {
    let eval = Evaluator::new(
        system,
        cfg.p,
        chart.base.clone(),
        chart.cell.clone(),
        chart.pushforward + 1,
        cfg.grid_per_axis,
    );

    // Certified dyadic bisection.
    let mut stack = vec![chart.cell.clone()];
    let mut children: Vec<Chart> = Vec::new();
    let mut candidates_tested = 0;
    while let Some(cell) = stack.pop() {
        if cell.depth - chart.cell.depth > cfg.depth_cap {
            return Err(DiskTreeError::GeometryBlowup { cell, cap: cfg.depth_cap });
        }
        let candidate = eval.eval(&cell);
        candidates_tested += 1;
        let report = certify_chart(&candidate, cfg.epsilon, cfg.order_r)?;
        if report.strongly_bounded {
            children.push(candidate);
        } else {
            stack.extend(cell.children());
        }
    }
    // Deterministic order regardless of stack traversal.
    children.sort_by(|a, b| (a.cell.depth, &a.cell.idx).cmp(&(b.cell.depth, &b.cell.idx)));

    // Boundary proximity in the shared offset frame of the evaluator. A
    // child that kept the whole parent cell (no bisection was needed) keeps
    // the parent geometry and stays red.
    let boundary = eval.boundary_offsets(&chart.cell);
    let is_blue = |c: &Chart| -> bool {
        if c.cell == chart.cell {
            return false;
        }
        let (center, radius) = c.grid.bounding_sphere();
        let near = boundary.iter().any(|b| {
            let gap = norm(&sub(b, &center));
            gap <= radius + 2.0 * cfg.epsilon
        });
        if !near {
            return false;
        }
        c.grid
            .offsets
            .iter()
            .any(|o| boundary.iter().any(|b| norm(&sub(o, b)) <= 2.0 * cfg.epsilon))
    };

    let mut blue = Vec::new();
    let mut red = Vec::new();
    for c in children {
        if is_blue(&c) {
            blue.push(c);
        } else {
            red.push(c);
        }
    }

    // Merge red children sharing an epsilon-neighborhood via bounding spheres.
    let spheres: Vec<(Vec<f64>, f64)> = red.iter().map(|c| c.grid.bounding_sphere()).collect();
    let mut uf = UnionFind::new(red.len());
    for i in 0..red.len() {
        for j in i + 1..red.len() {
            let gap = norm(&sub(&spheres[i].0, &spheres[j].0));
            if gap <= spheres[i].1 + spheres[j].1 + cfg.epsilon {
                uf.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<Chart>> = std::collections::BTreeMap::new();
    for (i, c) in red.into_iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(c);
    }
    let mut red_families = Vec::new();
    let mut family_overflow_events = 0;
    for (_, group) in groups {
        if group.len() > cfg.family_cap {
            family_overflow_events += 1;
            for chunk in group.chunks(cfg.family_cap) {
                red_families.push(chunk.to_vec());
            }
        } else {
            red_families.push(group);
        }
    }

    Ok(SubdivideOutcome { red_families, blue, candidates_tested, family_overflow_events })
}
