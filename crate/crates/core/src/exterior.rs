//! Exterior-power linear algebra in small fixed dimensions.
//!
//! Compound matrices are indexed by lexicographically sorted k-subsets of
//! {0..d-1}; serialized matrices use that order, row-major. The norm on
//! wedge k-vectors is the Euclidean Gram norm.

use crate::linalg::{dot, norm, Mat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExteriorError {
    #[error("k = {k} out of range 1..={d}")]
    BadK { k: usize, d: usize },
    #[error("degenerate frame: Gram determinant {0:.3e} <= 1e-12")]
    DegenerateFrame(f64),
    #[error("hypothesis not applicable: measured K = {0:.4} exceeds 1/2")]
    NotApplicable(f64),
}

/// Lexicographically sorted k-subsets of {0..d-1}.
pub fn k_subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    assert!(k >= 1 && k <= d);
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // Advance to the next sorted subset.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + d - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

pub fn binomial(d: usize, k: usize) -> usize {
    if k > d {
        return 0;
    }
    let k = k.min(d - k);
    let mut num = 1usize;
    for i in 0..k {
        num = num * (d - i) / (i + 1);
    }
    num
}

/// The compound matrix wedge^k A acting on the C(d,k)-dimensional exterior
/// power: entry (I, J) is the k x k minor of A with rows I and columns J.
#[derive(Debug, Clone)]
pub struct ExteriorMatrix {
    pub k: usize,
    pub d: usize,
    pub entries: Mat,
}

fn minor(a: &Mat, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    Mat::from_fn(k, k, |r, c| a[(rows[r], cols[c])]).det()
}

pub fn compound_matrix(a: &Mat, k: usize) -> Result<ExteriorMatrix, ExteriorError> {
    let d = a.rows();
    assert_eq!(a.rows(), a.cols(), "compound of non-square matrix");
    if k < 1 || k > d {
        return Err(ExteriorError::BadK { k, d });
    }
    let subsets = k_subsets(d, k);
    let m = subsets.len();
    let entries = Mat::from_fn(m, m, |i, j| minor(a, &subsets[i], &subsets[j]));
    Ok(ExteriorMatrix { k, d, entries })
}

/// |wedge^k A| = product of the k largest singular values of A. Coincides
/// with the spectral norm of the compound matrix.
pub fn wedge_norm(a: &Mat, k: usize) -> Result<f64, ExteriorError> {
    let d = a.rows();
    if k < 1 || k > d {
        return Err(ExteriorError::BadK { k, d });
    }
    let sv = a.singular_values();
    Ok(sv[..k].iter().product())
}

/// Same quantity in log form, safe when the product of singular values
/// overflows; used by the long-horizon cocycle propagation.
pub fn log_wedge_norm(a: &Mat, k: usize) -> Result<f64, ExteriorError> {
    let d = a.rows();
    if k < 1 || k > d {
        return Err(ExteriorError::BadK { k, d });
    }
    let sv = a.singular_values();
    Ok(sv[..k].iter().map(|s| s.ln()).sum())
}

/// Unnormalized Plücker coordinates of the column span of a d x k matrix:
/// the k x k minors over sorted row subsets. The Euclidean norm of this
/// vector is |wedge^k M| = sqrt(Gram determinant).
pub fn wedge_vector(m: &Mat) -> Vec<f64> {
    let d = m.rows();
    let k = m.cols();
    let cols: Vec<usize> = (0..k).collect();
    k_subsets(d, k)
        .iter()
        .map(|rows| minor_rect(m, rows, &cols))
        .collect()
}

fn minor_rect(a: &Mat, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    Mat::from_fn(k, k, |r, c| a[(rows[r], cols[c])]).det()
}

/// k linearly independent vectors spanning a k-plane of R^d.
#[derive(Debug, Clone)]
pub struct KFrame {
    pub vectors: Vec<Vec<f64>>,
}

impl KFrame {
    pub fn new(vectors: Vec<Vec<f64>>) -> Self {
        KFrame { vectors }
    }

    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    pub fn d(&self) -> usize {
        self.vectors[0].len()
    }

    /// Columns are the frame vectors.
    pub fn as_matrix(&self) -> Mat {
        Mat::from_fn(self.d(), self.k(), |r, c| self.vectors[c][r])
    }

    pub fn gram_det(&self) -> f64 {
        let k = self.k();
        Mat::from_fn(k, k, |i, j| dot(&self.vectors[i], &self.vectors[j])).det()
    }
}

/// Normalized Plücker embedding of the frame's span, sign fixed by the first
/// coordinate of magnitude above 1e-12 being positive.
pub fn plucker_embed(frame: &KFrame) -> Result<Vec<f64>, ExteriorError> {
    let g = frame.gram_det();
    if g <= 1e-12 {
        return Err(ExteriorError::DegenerateFrame(g));
    }
    let mut v = wedge_vector(&frame.as_matrix());
    let n = norm(&v);
    for x in v.iter_mut() {
        *x /= n;
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
    Ok(v)
}

/// A k-plane stored as an orthonormal basis (rows).
#[derive(Debug, Clone)]
pub struct Subspace {
    pub basis: Mat,
}

impl Subspace {
    /// Orthonormalize a spanning set (rows of the input).
    pub fn from_span(span: &Mat) -> Result<Self, ExteriorError> {
        let (q, rdiag) = span.transpose().qr_diag();
        if rdiag.iter().any(|&r| r < 1e-12) {
            return Err(ExteriorError::DegenerateFrame(rdiag.iter().product()));
        }
        Ok(Subspace { basis: q.transpose() })
    }

    pub fn k(&self) -> usize {
        self.basis.rows()
    }

    pub fn d(&self) -> usize {
        self.basis.cols()
    }

    /// Orthogonal projector onto the plane.
    pub fn projector(&self) -> Mat {
        self.basis.transpose().matmul(&self.basis)
    }
}

/// Stationary angles, Cayley distance, and the max-min angle between two
/// k-planes.
#[derive(Debug, Clone)]
pub struct AngleReport {
    /// Ascending stationary angles theta_1 <= ... <= theta_k.
    pub stationary: Vec<f64>,
    /// cos d_c = prod cos theta_i, clipped to [-1, 1].
    pub cayley: f64,
    /// The largest stationary angle; equals the max-min angle between the planes.
    pub maxmin: f64,
}

pub fn subspace_angles(f: &Subspace, g: &Subspace) -> AngleReport {
    assert_eq!(f.k(), g.k(), "planes of different dimension");
    // cos(theta_i) are the singular values of F G^T for orthonormal bases.
    let prod = f.basis.matmul(&g.basis.transpose());
    let mut cosines = prod.singular_values();
    for c in cosines.iter_mut() {
        *c = c.clamp(-1.0, 1.0);
    }
    // Singular values descend, so angles ascend.
    let stationary: Vec<f64> = cosines.iter().map(|c| c.acos()).collect();
    let cos_cayley: f64 = cosines.iter().product::<f64>().clamp(-1.0, 1.0);
    AngleReport {
        maxmin: *stationary.last().unwrap(),
        cayley: cos_cayley.acos(),
        stationary,
    }
}

#[derive(Debug, Clone)]
pub struct WedgeAngleBound {
    pub satisfied: bool,
    pub cayley_bound: f64,
    pub measured_cayley: f64,
    pub measured_k: f64,
}

/// Bound on the Cayley distance of two image planes from the wedge-vector
/// deviation |w^k A - w^k B| <= K |w^k A|, valid for K <= 1/2:
/// d_c <= arccos(1 - K^2 / (2(1-K))).
pub fn angle_bound_from_wedge(a: &Mat, b: &Mat, k_param: f64) -> Result<WedgeAngleBound, ExteriorError> {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let wa = wedge_vector(a);
    let wb = wedge_vector(b);
    let diff = norm(&crate::linalg::sub(&wa, &wb));
    let measured_k = diff / norm(&wa);
    if !(k_param <= 0.5) || measured_k > k_param {
        return Err(ExteriorError::NotApplicable(measured_k.max(k_param)));
    }
    let bound = (1.0 - k_param * k_param / (2.0 * (1.0 - k_param))).clamp(-1.0, 1.0).acos();
    let plane_a = Subspace::from_span(&a.transpose())?;
    let plane_b = Subspace::from_span(&b.transpose())?;
    let measured = subspace_angles(&plane_a, &plane_b).cayley;
    Ok(WedgeAngleBound {
        satisfied: measured <= bound + 1e-12,
        cayley_bound: bound,
        measured_cayley: measured,
        measured_k,
    })
}

/// Greedy upper estimate of the covering number of a finite point set by
/// Euclidean balls of radius r: each round centers a ball on the point
/// covering the most still-uncovered points (ties to the lowest index).
/// Deterministic and never below the true optimum.
pub fn covering_number(points: &[Vec<f64>], r: f64) -> usize {
    assert!(r > 0.0, "radius must be positive");
    let n = points.len();
    let within: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| norm(&crate::linalg::sub(&points[i], &points[j])) <= r)
                .collect()
        })
        .collect();
    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut count = 0;
    while remaining > 0 {
        let mut best = 0;
        let mut best_gain = 0;
        for i in 0..n {
            let gain = within[i].iter().filter(|&&j| !covered[j]).count();
            if gain > best_gain {
                best_gain = gain;
                best = i;
            }
        }
        for &j in &within[best] {
            if !covered[j] {
                covered[j] = true;
                remaining -= 1;
            }
        }
        count += 1;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn subsets_lex_order() {
        assert_eq!(
            k_subsets(4, 2),
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(k_subsets(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn compound_k1_is_matrix_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_mat(&mut rng, 3, 3);
        let c = compound_matrix(&a, 1).unwrap();
        assert!(c.entries.sub(&a).max_abs() == 0.0);
    }

    #[test]
    fn compound_top_power_is_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_mat(&mut rng, 4, 4);
        let c = compound_matrix(&a, 4).unwrap();
        assert_eq!(c.entries.rows(), 1);
        assert!((c.entries[(0, 0)] - a.det()).abs() < 1e-12);
    }

    #[test]
    fn compound_entries_are_minors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_mat(&mut rng, 3, 3);
        let c = compound_matrix(&a, 2).unwrap();
        let subs = k_subsets(3, 2);
        for (i, rows) in subs.iter().enumerate() {
            for (j, cols) in subs.iter().enumerate() {
                let m = Mat::from_fn(2, 2, |r, s| a[(rows[r], cols[s])]).det();
                assert!((c.entries[(i, j)] - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compound_rejects_bad_k() {
        let a = Mat::identity(3);
        assert!(compound_matrix(&a, 0).is_err());
        assert!(compound_matrix(&a, 4).is_err());
    }

    #[test]
    fn functoriality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let d = rng.gen_range(2..=5);
            let k = rng.gen_range(1..=d);
            let a = random_mat(&mut rng, d, d);
            let b = random_mat(&mut rng, d, d);
            let lhs = compound_matrix(&a.matmul(&b), k).unwrap().entries;
            let rhs = compound_matrix(&a, k)
                .unwrap()
                .entries
                .matmul(&compound_matrix(&b, k).unwrap().entries);
            let scale = lhs.max_abs().max(1e-12);
            assert!(lhs.sub(&rhs).max_abs() / scale < 1e-9);
        }
    }

    #[test]
    fn wedge_norm_examples() {
        assert!((wedge_norm(&Mat::identity(4), 2).unwrap() - 1.0).abs() < 1e-12);
        let diag = Mat::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert!((wedge_norm(&diag, 2).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn wedge_norm_is_compound_spectral_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_mat(&mut rng, 4, 4);
            let w = wedge_norm(&a, 2).unwrap();
            // Power iteration on C^T C as an independent route to the spectral norm.
            let c = compound_matrix(&a, 2).unwrap().entries;
            let ctc = c.transpose().matmul(&c);
            let mut v = vec![1.0; ctc.rows()];
            for _ in 0..500 {
                let w = ctc.matvec(&v);
                let n = norm(&w);
                v = w.into_iter().map(|x| x / n).collect();
            }
            let lam = norm(&ctc.matvec(&v));
            assert!((w - lam.sqrt()).abs() / w.max(1e-12) < 1e-9, "{w} vs {}", lam.sqrt());
        }
    }

    #[test]
    fn wedge_norm_inverse_product_at_least_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let a = random_mat(&mut rng, 3, 3);
            if a.det().abs() < 1e-3 {
                continue;
            }
            for k in 1..=3 {
                let prod = wedge_norm(&a, k).unwrap() * wedge_norm(&a.inverse(), k).unwrap();
                assert!(prod >= 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn plucker_standard_frame() {
        let frame = KFrame::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let v = plucker_embed(&frame).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn plucker_scale_invariant() {
        let frame = KFrame::new(vec![vec![1.0, 2.0, 0.5], vec![0.0, 1.0, 1.0]]);
        let scaled = KFrame::new(vec![vec![2.0, 4.0, 1.0], vec![0.0, 2.0, 2.0]]);
        let a = plucker_embed(&frame).unwrap();
        let b = plucker_embed(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn plucker_tilted_frame() {
        // (e1+e2) wedge e3 = e1^e3 + e2^e3 -> (0, 1, 1)/sqrt(2) on {01},{02},{12}.
        let frame = KFrame::new(vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let v = plucker_embed(&frame).unwrap();
        let s = 1.0 / 2.0f64.sqrt();
        assert!((v[0] - 0.0).abs() < 1e-12);
        assert!((v[1] - s).abs() < 1e-12);
        assert!((v[2] - s).abs() < 1e-12);
    }

    #[test]
    fn plucker_rejects_degenerate() {
        let frame = KFrame::new(vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]);
        assert!(matches!(plucker_embed(&frame), Err(ExteriorError::DegenerateFrame(_))));
    }

    #[test]
    fn plucker_basis_change_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let v1: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v2: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let frame = KFrame::new(vec![v1.clone(), v2.clone()]);
            if frame.gram_det() < 1e-6 {
                continue;
            }
            // Another basis of the same plane.
            let w1: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| 2.0 * a + b).collect();
            let w2: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a - 3.0 * b).collect();
            let other = KFrame::new(vec![w1, w2]);
            let pa = plucker_embed(&frame).unwrap();
            let pb = plucker_embed(&other).unwrap();
            for (x, y) in pa.iter().zip(&pb) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn angles_identical_planes() {
        let f = Subspace::from_span(&Mat::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]))
            .unwrap();
        let rep = subspace_angles(&f, &f);
        assert!(rep.stationary.iter().all(|a| a.abs() < 1e-7));
        assert!(rep.cayley.abs() < 1e-7);
    }

    #[test]
    fn angles_orthogonal_lines() {
        let f = Subspace::from_span(&Mat::from_rows(&[vec![1.0, 0.0]])).unwrap();
        let g = Subspace::from_span(&Mat::from_rows(&[vec![0.0, 1.0]])).unwrap();
        let rep = subspace_angles(&f, &g);
        assert!((rep.maxmin - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn angles_single_tilt() {
        let alpha = 0.7f64;
        let f = Subspace::from_span(&Mat::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]))
            .unwrap();
        let g = Subspace::from_span(&Mat::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, alpha.cos(), alpha.sin()],
        ]))
        .unwrap();
        let rep = subspace_angles(&f, &g);
        assert!(rep.stationary[0].abs() < 1e-7);
        assert!((rep.stationary[1] - alpha).abs() < 1e-10);
    }

    #[test]
    fn sin_maxmin_equals_projector_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let f = Subspace::from_span(&random_mat(&mut rng, 2, 4)).unwrap();
            let g = Subspace::from_span(&random_mat(&mut rng, 2, 4)).unwrap();
            let rep = subspace_angles(&f, &g);
            let pd = f.projector().sub(&g.projector()).spectral_norm();
            assert!((rep.maxmin.sin() - pd).abs() < 1e-8, "{} vs {}", rep.maxmin.sin(), pd);
        }
    }

    #[test]
    fn cayley_dominates_maxmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let f = Subspace::from_span(&random_mat(&mut rng, 2, 4)).unwrap();
            let g = Subspace::from_span(&random_mat(&mut rng, 2, 4)).unwrap();
            let rep = subspace_angles(&f, &g);
            assert!(rep.cayley.cos() <= rep.maxmin.cos() + 1e-12);
        }
    }

    #[test]
    fn wedge_angle_bound_identical() {
        let a = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.3, 0.4]]);
        let rep = angle_bound_from_wedge(&a, &a, 0.1).unwrap();
        assert!(rep.satisfied);
        assert!(rep.measured_cayley.abs() < 1e-7);
    }

    #[test]
    fn wedge_angle_bound_k_tenth_under_pi_six() {
        let bound = (1.0f64 - 0.01 / 1.8).acos();
        assert!(bound < std::f64::consts::FRAC_PI_6);
        let a = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let rep = angle_bound_from_wedge(&a, &a, 0.1).unwrap();
        assert!((rep.cayley_bound - bound).abs() < 1e-12);
    }

    #[test]
    fn wedge_angle_bound_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut checked = 0;
        for _ in 0..1000 {
            let a = random_mat(&mut rng, 4, 2);
            let frame = KFrame::new(vec![a.col(0), a.col(1)]);
            if frame.gram_det() < 0.1 {
                continue;
            }
            let pert = random_mat(&mut rng, 4, 2).scale(0.01);
            let b = a.add(&pert);
            match angle_bound_from_wedge(&a, &b, 0.05) {
                Ok(rep) => {
                    assert!(rep.satisfied, "cayley {} > bound {}", rep.measured_cayley, rep.cayley_bound);
                    checked += 1;
                }
                Err(ExteriorError::NotApplicable(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
        assert!(checked > 500, "too few applicable perturbations: {checked}");
    }

    #[test]
    fn wedge_angle_hypothesis_rejected() {
        let a = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(
            angle_bound_from_wedge(&a, &b, 0.9),
            Err(ExteriorError::NotApplicable(_))
        ));
    }

    #[test]
    fn covering_number_basics() {
        assert_eq!(covering_number(&[vec![0.0, 0.0]], 1.0), 1);
        assert_eq!(covering_number(&[vec![0.0], vec![3.0]], 1.0), 2);
        // Monotone nonincreasing in r.
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![(i % 10) as f64 / 9.0, (i / 10) as f64 / 9.0])
            .collect();
        let c1 = covering_number(&pts, 0.2);
        let c2 = covering_number(&pts, 0.4);
        let c3 = covering_number(&pts, 1.0);
        assert!(c1 >= c2 && c2 >= c3);
        assert!(c3 >= 1 && c3 <= 2);
        // Greedy never beats the exhaustive optimum on small instances.
        let small: Vec<Vec<f64>> = vec![vec![0.0], vec![0.9], vec![1.8], vec![4.0]];
        let greedy = covering_number(&small, 1.0);
        let optimum = 2; // centers 0.9 and 4.0
        assert!(greedy >= optimum);
    }
}
