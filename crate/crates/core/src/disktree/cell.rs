//! Exact dyadic sub-cubes of the parameter cube [0,1]^k.
//!
//! All axes share one depth because subdivision always bisects every axis at
//! once. Coordinates are integers, so tiling checks are exact with no float
//! tolerance; at depth j the cell is prod_i [idx_i, idx_i + 1] / 2^j.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DyadicCell {
    pub depth: u32,
    pub idx: Vec<u128>,
}

impl DyadicCell {
    pub fn root(k: usize) -> Self {
        DyadicCell { depth: 0, idx: vec![0; k] }
    }

    pub fn k(&self) -> usize {
        self.idx.len()
    }

    /// Side length 2^-depth; exactly representable for depth < 1022.
    pub fn size(&self) -> f64 {
        (-(self.depth as f64)).exp2()
    }

    pub fn volume(&self) -> f64 {
        (-((self.depth as f64) * self.k() as f64)).exp2()
    }

    /// Lower corner as f64 (rounds below resolution 2^-52; callers needing
    /// exact geometry use `offset_within` instead).
    pub fn lo(&self) -> Vec<f64> {
        self.idx.iter().map(|&i| i as f64 * self.size()).collect()
    }

    /// All 2^k children one bisection deeper, in lexicographic corner order.
    pub fn children(&self) -> Vec<DyadicCell> {
        let k = self.k();
        (0..(1usize << k))
            .map(|bits| DyadicCell {
                depth: self.depth + 1,
                idx: (0..k)
                    .map(|axis| 2 * self.idx[axis] + ((bits >> axis) & 1) as u128)
                    .collect(),
            })
            .collect()
    }

    pub fn contains(&self, other: &DyadicCell) -> bool {
        if other.depth < self.depth {
            return false;
        }
        let shift = other.depth - self.depth;
        self.idx
            .iter()
            .zip(&other.idx)
            .all(|(&a, &b)| b >> shift == a)
    }

    /// Exact offset of `other`'s lower corner from this cell's lower corner,
    /// in absolute parameter units. Requires `self.contains(other)` so the
    /// integer numerators stay small and the conversion is exact.
    pub fn offset_within(&self, other: &DyadicCell) -> Vec<f64> {
        debug_assert!(self.contains(other));
        let shift = other.depth - self.depth;
        let scale = (-(other.depth as f64)).exp2();
        self.idx
            .iter()
            .zip(&other.idx)
            .map(|(&a, &b)| (b - (a << shift)) as f64 * scale)
            .collect()
    }

    /// Does the closed cell contain the parameter point?
    pub fn contains_point(&self, t: &[f64]) -> bool {
        let s = self.size();
        self.idx.iter().zip(t).all(|(&i, &x)| {
            let lo = i as f64 * s;
            x >= lo && x <= lo + s
        })
    }
}

/// Exact tiling check: do the cells partition [0,1]^k? Counts cells per depth
/// and merges 2^k siblings upward; the partition property is equivalent to
/// everything merging into a single depth-0 cell. Integer arithmetic only.
///
/// Counting alone cannot detect two overlapping cells balanced by a missing
/// one elsewhere, so the caller also gets a duplicate check: cells sorted and
/// deduplicated first, which catches identical cells; properly overlapping
/// dyadic cells of different depth are caught by the volume merge.
pub fn cells_tile_unit_cube(cells: &[DyadicCell]) -> bool {
    if cells.is_empty() {
        return false;
    }
    let k = cells[0].k();
    let mut sorted: Vec<&DyadicCell> = cells.iter().collect();
    sorted.sort_by(|a, b| (a.depth, &a.idx).cmp(&(b.depth, &b.idx)));
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return false;
        }
    }
    // Nesting violations: a cell containing another cannot happen in a tiling.
    // Cheap scan: group by depth and check each cell's ancestor at every
    // shallower occupied depth is absent. Depth count is small (<= ~100).
    use std::collections::{BTreeMap, HashSet};
    let mut by_depth: BTreeMap<u32, HashSet<&Vec<u128>>> = BTreeMap::new();
    for c in cells {
        by_depth.entry(c.depth).or_default().insert(&c.idx);
    }
    let depths: Vec<u32> = by_depth.keys().copied().collect();
    for c in cells {
        for &d in depths.iter().filter(|&&d| d < c.depth) {
            let shift = c.depth - d;
            let anc: Vec<u128> = c.idx.iter().map(|&i| i >> shift).collect();
            if by_depth[&d].contains(&anc) {
                return false;
            }
        }
    }
    // Volume merge in exact integers.
    let mut count: BTreeMap<u32, u128> = BTreeMap::new();
    for c in cells {
        *count.entry(c.depth).or_insert(0) += 1;
    }
    let merge_unit = 1u128 << k;
    while let Some((&d, _)) = count.iter().next_back() {
        if d == 0 {
            break;
        }
        let n = count.remove(&d).unwrap();
        if n % merge_unit != 0 {
            return false;
        }
        *count.entry(d - 1).or_insert(0) += n / merge_unit;
    }
    count.get(&0) == Some(&1)
}

/// Tiling check relative to a parent cell: rebase every cell to
/// parent-relative coordinates and run the unit-cube check.
pub fn cells_tile_parent(parent: &DyadicCell, cells: &[DyadicCell]) -> bool {
    if cells.iter().any(|c| !parent.contains(c)) {
        return false;
    }
    let rebased: Vec<DyadicCell> = cells
        .iter()
        .map(|c| {
            let shift = c.depth - parent.depth;
            DyadicCell {
                depth: shift,
                idx: c
                    .idx
                    .iter()
                    .zip(&parent.idx)
                    .map(|(&ci, &pi)| ci - (pi << shift))
                    .collect(),
            }
        })
        .collect();
    cells_tile_unit_cube(&rebased)
}
