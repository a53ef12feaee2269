//! Embedded k-disk charts and their grid evaluation.
//!
//! A chart is g^m composed with an analytic base embedding restricted to a
//! dyadic parameter cell, where g = f^p. Geometry is cached on a tensor grid:
//! image offsets relative to a reference corner, wrapped anchor points for
//! evaluating d g, tangent matrices, and log wedge values.
//!
//! Offsets are always formed from exact within-cell parameter differences,
//! so for constant-Jacobian systems they stay accurate at any depth. For
//! nonlinear systems the per-point orbit evaluation is accurate while
//! (orbit length) x (expansion rate) stays well under the 2^52 float
//! resolution; the tree growers document that regime.

use super::cell::DyadicCell;
use crate::exterior::wedge_vector;
use crate::linalg::{norm, Mat};
use crate::systems::{wrap_unit, SmoothSystem};
use std::sync::Arc;

/// Analytic base embedding [0,1]^k -> R^d (a lift of the torus embedding).
#[derive(Debug, Clone)]
pub enum BaseEmbedding {
    /// t -> x0 + T t
    Affine { x0: Vec<f64>, frame: Mat },
    /// t -> x0 + T t + (1/2) sum_i e_i (t' Q_i t), one symmetric Q_i per
    /// output component. Used by the certification tests, where the
    /// seminorms have closed forms.
    Quadratic { x0: Vec<f64>, frame: Mat, quad: Vec<Mat> },
}

impl BaseEmbedding {
    pub fn dim(&self) -> usize {
        match self {
            BaseEmbedding::Affine { x0, .. } | BaseEmbedding::Quadratic { x0, .. } => x0.len(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            BaseEmbedding::Affine { frame, .. } | BaseEmbedding::Quadratic { frame, .. } => {
                frame.cols()
            }
        }
    }

    pub fn eval(&self, t: &[f64]) -> Vec<f64> {
        match self {
            BaseEmbedding::Affine { x0, frame } => {
                crate::linalg::add(x0, &frame.matvec(t))
            }
            BaseEmbedding::Quadratic { x0, frame, quad } => {
                let mut y = crate::linalg::add(x0, &frame.matvec(t));
                for (i, q) in quad.iter().enumerate() {
                    y[i] += 0.5 * crate::linalg::dot(t, &q.matvec(t));
                }
                y
            }
        }
    }

    /// Exact difference eval(t_ref + dt) - eval(t_ref), organized so that a
    /// tiny dt never cancels against O(1) positions.
    pub fn eval_offset(&self, t_ref: &[f64], dt: &[f64]) -> Vec<f64> {
        match self {
            BaseEmbedding::Affine { frame, .. } => frame.matvec(dt),
            BaseEmbedding::Quadratic { frame, quad, .. } => {
                let mut y = frame.matvec(dt);
                for (i, q) in quad.iter().enumerate() {
                    // (1/2)((t+dt)'Q(t+dt) - t'Qt) = t'Q dt + (1/2) dt'Q dt
                    y[i] += crate::linalg::dot(t_ref, &q.matvec(dt))
                        + 0.5 * crate::linalg::dot(dt, &q.matvec(dt));
                }
                y
            }
        }
    }

    pub fn jacobian(&self, t: &[f64]) -> Mat {
        match self {
            BaseEmbedding::Affine { frame, .. } => frame.clone(),
            BaseEmbedding::Quadratic { frame, quad, .. } => {
                let mut j = frame.clone();
                for (i, q) in quad.iter().enumerate() {
                    let row = q.matvec(t);
                    for (c, v) in row.iter().enumerate() {
                        j[(i, c)] += v;
                    }
                }
                j
            }
        }
    }
}

/// Cached tensor-grid geometry of a chart.
#[derive(Debug, Clone)]
pub struct ChartGrid {
    pub pts_per_axis: usize,
    /// Image positions relative to the evaluation reference (lift metric).
    pub offsets: Vec<Vec<f64>>,
    /// Wrapped torus positions along the numerically shadowed orbit.
    pub anchors: Vec<Vec<f64>>,
    /// d x k derivative of the chart map at each grid node.
    pub tangents: Vec<Mat>,
    /// log |wedge^k d chart| at each grid node.
    pub log_wedge: Vec<f64>,
}

impl ChartGrid {
    pub fn node_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.offsets.len() {
            for j in i + 1..self.offsets.len() {
                best = best.max(norm(&crate::linalg::sub(&self.offsets[i], &self.offsets[j])));
            }
        }
        best
    }

    /// Bounding sphere (center, radius) of the grid image in offset space.
    pub fn bounding_sphere(&self) -> (Vec<f64>, f64) {
        let d = self.offsets[0].len();
        let n = self.offsets.len() as f64;
        let mut center = vec![0.0; d];
        for o in &self.offsets {
            for (c, v) in center.iter_mut().zip(o) {
                *c += v / n;
            }
        }
        let radius = self
            .offsets
            .iter()
            .map(|o| norm(&crate::linalg::sub(o, &center)))
            .fold(0.0, f64::max);
        (center, radius)
    }
}

/// Multi-index grid of g points per axis over [0,1]^k, flattened with axis 0
/// fastest. Endpoints included.
pub fn grid_points(k: usize, g: usize) -> Vec<Vec<f64>> {
    assert!(g >= 2);
    let total = g.pow(k as u32);
    (0..total)
        .map(|mut flat| {
            (0..k)
                .map(|_| {
                    let i = flat % g;
                    flat /= g;
                    i as f64 / (g - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// One chart of the subdivision tree: g^pushforward O base O cell.
#[derive(Debug, Clone)]
pub struct Chart {
    pub base: Arc<BaseEmbedding>,
    pub cell: DyadicCell,
    /// Number of applications of g = f^p.
    pub pushforward: u32,
    pub grid: ChartGrid,
}

impl Chart {
    pub fn k(&self) -> usize {
        self.cell.k()
    }
}

/// Evaluation session: every chart evaluated through one evaluator shares a
/// reference cell, so offsets of different charts are directly comparable.
pub struct Evaluator<'a> {
    pub system: &'a SmoothSystem,
    pub p: u32,
    pub base: Arc<BaseEmbedding>,
    pub ref_cell: DyadicCell,
    pub pushforward: u32,
    pub grid_per_axis: usize,
    /// f^( p * pushforward ) for constant-Jacobian systems.
    chain: Option<Mat>,
    /// Rebased reference orbit: r_j stays in [0,1)^d and c_j is the integer
    /// correction subtracted at step j. Every grid-point orbit subtracts the
    /// same corrections, so lattice wrapping never tears offsets apart.
    ref_orbit: Vec<Vec<f64>>,
    corrections: Vec<Vec<f64>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        system: &'a SmoothSystem,
        p: u32,
        base: Arc<BaseEmbedding>,
        ref_cell: DyadicCell,
        pushforward: u32,
        grid_per_axis: usize,
    ) -> Self {
        let steps = (p * pushforward) as usize;
        let chain = if system.constant_jacobian() {
            let a = system.jacobian(&vec![0.0; system.dim()]);
            let mut m = Mat::identity(system.dim());
            for _ in 0..steps {
                m = a.matmul(&m);
            }
            Some(m)
        } else {
            None
        };
        // Reference orbit rebased into [0,1)^d, recording each step's integer
        // correction.
        let raw0 = base.eval(&ref_cell.lo());
        let mut r: Vec<f64> = raw0.iter().map(|&x| wrap_unit(x)).collect();
        let mut ref_orbit = vec![r.clone()];
        let mut corrections = vec![crate::linalg::sub(&raw0, &r)];
        for _ in 0..steps {
            let raw = system.apply_lift(&r);
            let wrapped: Vec<f64> = raw.iter().map(|&x| wrap_unit(x)).collect();
            corrections.push(crate::linalg::sub(&raw, &wrapped));
            r = wrapped;
            ref_orbit.push(r.clone());
        }
        Evaluator {
            system,
            p,
            base,
            ref_cell,
            pushforward,
            grid_per_axis,
            chain,
            ref_orbit,
            corrections,
        }
    }

    /// Evaluate the chart on `cell` (must be contained in the reference cell)
    /// with offsets relative to the reference corner image.
    pub fn eval(&self, cell: &DyadicCell) -> Chart {
        debug_assert!(self.ref_cell.contains(cell));
        let k = cell.k();
        let d = self.system.dim();
        let g = self.grid_per_axis;
        let ts = grid_points(k, g);
        let cell_base_offset = self.ref_cell.offset_within(cell);
        let ref_lo = self.ref_cell.lo();
        let size = cell.size();
        let steps = (self.p * self.pushforward) as usize;

        let mut offsets = Vec::with_capacity(ts.len());
        let mut anchors = Vec::with_capacity(ts.len());
        let mut tangents = Vec::with_capacity(ts.len());
        let mut log_wedge = Vec::with_capacity(ts.len());

        for t in &ts {
            // Exact within-reference parameter displacement.
            let dparam: Vec<f64> = (0..k).map(|a| cell_base_offset[a] + size * t[a]).collect();
            let param_abs: Vec<f64> = (0..k).map(|a| ref_lo[a] + dparam[a]).collect();
            let base_jac_scaled = {
                let bj = self.base.jacobian(&param_abs);
                Mat::from_fn(d, k, |r, c| bj[(r, c)] * size)
            };
            let (offset, tangent) = match &self.chain {
                Some(chain) => {
                    let off = chain.matvec(&self.base.eval_offset(&ref_lo, &dparam));
                    let tan = chain.matmul(&base_jac_scaled);
                    (off, tan)
                }
                None => {
                    // Start from the rebased reference plus an exact offset,
                    // then subtract the reference's integer corrections so
                    // the whole grid shares one lattice representative.
                    let mut v = crate::linalg::add(
                        &self.ref_orbit[0],
                        &self.base.eval_offset(&ref_lo, &dparam),
                    );
                    let mut tan = base_jac_scaled;
                    for j in 0..steps {
                        let wrapped: Vec<f64> = v.iter().map(|&x| wrap_unit(x)).collect();
                        tan = self.system.jacobian(&wrapped).matmul(&tan);
                        v = crate::linalg::sub(&self.system.apply_lift(&v), &self.corrections[j + 1]);
                    }
                    (crate::linalg::sub(&v, &self.ref_orbit[steps]), tan)
                }
            };
            let anchor: Vec<f64> = self.ref_orbit[steps]
                .iter()
                .zip(&offset)
                .map(|(r, o)| wrap_unit(r + o))
                .collect();
            let lw = norm(&wedge_vector(&tangent)).ln();
            offsets.push(offset);
            anchors.push(anchor);
            tangents.push(tangent);
            log_wedge.push(lw);
        }

        Chart {
            base: self.base.clone(),
            cell: cell.clone(),
            pushforward: self.pushforward,
            grid: ChartGrid { pts_per_axis: g, offsets, anchors, tangents, log_wedge },
        }
    }

    /// Image offsets of the boundary of `cell` (faces of the parameter cube),
    /// used by the blue/red classification. A pair of opposite faces whose
    /// images coincide modulo the integer lattice is a wrap-around (the image
    /// closes up on the torus) and carries no boundary, so it is dropped.
    pub fn boundary_offsets(&self, cell: &DyadicCell) -> Vec<Vec<f64>> {
        let chart = self.eval(cell);
        let g = self.grid_per_axis;
        let k = cell.k();
        let d = chart.grid.offsets[0].len();
        let mut stride = vec![1usize; k];
        for a in 1..k {
            stride[a] = stride[a - 1] * g;
        }
        let wraps: Vec<bool> = (0..k)
            .map(|axis| {
                chart.grid.offsets.iter().enumerate().all(|(flat, off0)| {
                    if (flat / stride[axis]) % g != 0 {
                        return true;
                    }
                    let off1 = &chart.grid.offsets[flat + (g - 1) * stride[axis]];
                    (0..d).all(|i| {
                        let delta = off1[i] - off0[i];
                        (delta - delta.round()).abs() < 1e-9
                    })
                })
            })
            .collect();
        let mut out = Vec::new();
        for (flat, off) in chart.grid.offsets.iter().enumerate() {
            let mut rem = flat;
            let mut on_boundary = false;
            for axis in 0..k {
                let i = rem % g;
                rem /= g;
                if (i == 0 || i == g - 1) && !wraps[axis] {
                    on_boundary = true;
                }
            }
            if on_boundary {
                out.push(off.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine_base() -> Arc<BaseEmbedding> {
        Arc::new(BaseEmbedding::Affine {
            x0: vec![0.3, 0.4],
            frame: Mat::from_rows(&[vec![0.04], vec![0.02]]),
        })
    }

    #[test]
    fn grid_points_shape() {
        let pts = grid_points(2, 3);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert_eq!(pts[8], vec![1.0, 1.0]);
        assert_eq!(pts[1], vec![0.5, 0.0]);
    }

    #[test]
    fn affine_chart_zero_pushforward() {
        let sys = SmoothSystem::from_id("cat2").unwrap();
        let cell = DyadicCell::root(1);
        let ev = Evaluator::new(&sys, 1, affine_base(), cell.clone(), 0, 5);
        let chart = ev.eval(&cell);
        // Offsets are the affine image of the parameter grid.
        let last = &chart.grid.offsets[4];
        assert!((last[0] - 0.04).abs() < 1e-15);
        assert!((last[1] - 0.02).abs() < 1e-15);
        // Tangent constant, wedge = |T|.
        let expect = (0.04f64 * 0.04 + 0.02 * 0.02).sqrt().ln();
        for lw in &chart.grid.log_wedge {
            assert!((lw - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_pushforward_matches_direct_orbit() {
        let sys = SmoothSystem::from_id("cat2").unwrap();
        let cell = DyadicCell::root(1);
        let ev = Evaluator::new(&sys, 1, affine_base(), cell.clone(), 3, 5);
        let chart = ev.eval(&cell);
        // Direct computation at t = 1: A^3 (x0 + T) - A^3 x0 = A^3 T.
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]);
        let a3 = a.matmul(&a).matmul(&a);
        let expect = a3.matvec(&[0.04, 0.02]);
        let got = &chart.grid.offsets[4];
        assert!((got[0] - expect[0]).abs() < 1e-12);
        assert!((got[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_offsets_agree_with_linear_path_at_eps_zero() {
        // cat2_perturbed with eps=0 is rejected? eps=0 is allowed and equals cat2.
        let lin = SmoothSystem::from_id("cat2").unwrap();
        let per = SmoothSystem::from_id("cat2_perturbed:eps=0").unwrap();
        let cell = DyadicCell::root(1).children()[1].clone();
        let root = DyadicCell::root(1);
        let ev_l = Evaluator::new(&lin, 2, affine_base(), root.clone(), 2, 4);
        let ev_p = Evaluator::new(&per, 2, affine_base(), root, 2, 4);
        let (cl, cp) = (ev_l.eval(&cell), ev_p.eval(&cell));
        for (a, b) in cl.grid.offsets.iter().zip(&cp.grid.offsets) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn deep_cell_offsets_survive_float_depth() {
        // Depth 80 cells are far below 2^-52; the exact dyadic route must
        // still produce nonzero, correctly scaled offsets for linear systems.
        let sys = SmoothSystem::from_id("cat2").unwrap();
        let mut cell = DyadicCell::root(1);
        for _ in 0..80 {
            cell = cell.children()[0].clone();
        }
        let ev = Evaluator::new(&sys, 1, affine_base(), cell.clone(), 0, 3);
        let chart = ev.eval(&cell);
        let width = norm(&crate::linalg::sub(
            &chart.grid.offsets[2],
            &chart.grid.offsets[0],
        ));
        let expect = (0.04f64 * 0.04 + 0.02 * 0.02).sqrt() * (-(80f64)).exp2();
        assert!((width - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn quadratic_base_jacobian_consistent() {
        let base = BaseEmbedding::Quadratic {
            x0: vec![0.1, 0.2],
            frame: Mat::from_rows(&[vec![0.05], vec![0.0]]),
            quad: vec![Mat::from_rows(&[vec![0.0]]), Mat::from_rows(&[vec![0.02]])],
        };
        let h = 1e-6;
        let j = base.jacobian(&[0.3]);
        let fp = base.eval(&[0.3 + h]);
        let fm = base.eval(&[0.3 - h]);
        for r in 0..2 {
            let fd = (fp[r] - fm[r]) / (2.0 * h);
            assert!((fd - j[(r, 0)]).abs() < 1e-8);
        }
        // eval_offset consistent with eval differences.
        let diff = crate::linalg::sub(&base.eval(&[0.37]), &base.eval(&[0.3]));
        let off = base.eval_offset(&[0.3], &[0.07]);
        for (a, b) in diff.iter().zip(&off) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
