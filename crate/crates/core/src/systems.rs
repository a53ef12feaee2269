//! Example diffeomorphisms of the flat torus T^d with exact derivatives.
//!
//! The zoo: linear toral automorphisms in d = 2,3,4, trigonometric
//! perturbations f(x) = Ax + eps*s(x) with s a fixed vector of sines,
//! products, and skew products over a north-south circle map. Systems are
//! addressable by string id, e.g. `cat2`, `cat2_perturbed:eps=0.1`,
//! `product:cat2,cat2`, `skew:ns,cat2_path`.
//!
//! All maps are evaluated on lifts R^d -> R^d; the linear part commutes
//! with integer translations and the perturbations are 1-periodic, so the
//! lift descends to the torus.

use crate::linalg::Mat;
use thiserror::Error;

const TWO_PI: f64 = std::f64::consts::TAU;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("unknown system id `{0}`")]
    UnknownId(String),
    #[error("bad parameter in system id `{0}`: {1}")]
    BadParameter(String, String),
    #[error("eps={eps} too large for `{name}`: eps*|ds| = {gain:.4} >= 1/|A^-1| = {budget:.4}")]
    NotADiffeomorphism { name: String, eps: f64, gain: f64, budget: f64 },
    #[error("jacobian disagrees with finite differences: max relative error {0:.3e}")]
    JacobianMismatch(f64),
    #[error("forward/inverse composition error {0:.3e} exceeds 1e-10")]
    InverseMismatch(f64),
}

/// A point of T^d, every coordinate in [0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        let coords = coords.into_iter().map(wrap_unit).collect();
        TorusPoint { coords }
    }

    pub fn origin(d: usize) -> Self {
        TorusPoint { coords: vec![0.0; d] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Distance in the flat torus metric (min over integer translates).
    pub fn dist(&self, other: &TorusPoint) -> f64 {
        torus_dist(&self.coords, &other.coords)
    }
}

pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

pub fn torus_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut d = (x - y).rem_euclid(1.0);
            if d > 0.5 {
                d = 1.0 - d;
            }
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Derivative of an orbit segment: d_x f^n.
#[derive(Debug, Clone)]
pub struct Jacobian {
    pub matrix: Mat,
    pub base: TorusPoint,
    pub steps: i64,
}

/// The sine perturbation s: R^d -> R^d, s_i(x) = sin(2 pi x_{i+1 mod d}) / (2 pi).
/// The 1/(2 pi) factor keeps |ds| <= 1 so moderate eps stays a diffeomorphism.
fn sine_field(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..d).map(|i| (TWO_PI * x[(i + 1) % d]).sin() / TWO_PI).collect()
}

fn sine_field_jacobian(x: &[f64]) -> Mat {
    let d = x.len();
    let mut m = Mat::zeros(d, d);
    for i in 0..d {
        let j = (i + 1) % d;
        m[(i, j)] = (TWO_PI * x[j]).cos();
    }
    m
}

/// North-south circle map g(t) = t - a sin(2 pi t)/(2 pi); attracting fixed
/// point at t = 0, repelling at t = 1/2, for a in (0,1).
#[derive(Debug, Clone)]
pub struct CircleMap {
    pub contraction: f64,
}

impl CircleMap {
    fn apply(&self, t: f64) -> f64 {
        t - self.contraction * (TWO_PI * t).sin() / TWO_PI
    }

    fn derivative(&self, t: f64) -> f64 {
        1.0 - self.contraction * (TWO_PI * t).cos()
    }

    fn invert(&self, t: f64) -> f64 {
        // Monotone lift; Newton from t converges since |g - id| < a/(2 pi).
        let mut s = t;
        for _ in 0..100 {
            let delta = (self.apply(s) - t) / self.derivative(s);
            s -= delta;
            if delta.abs() < 1e-15 {
                break;
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
enum Rule {
    /// x -> A x
    Linear { fwd: Mat, inv: Mat },
    /// x -> A x + eps * s(x)
    Perturbed { fwd: Mat, inv: Mat, eps: f64 },
    /// (x, y) -> (f x, g y) on the product torus
    Product(Box<SmoothSystem>, Box<SmoothSystem>),
    /// (t, x) -> (g t, A x + eps sin(2 pi t) s(x))
    Skew { base: CircleMap, fwd: Mat, inv: Mat, eps: f64 },
}

/// A smooth diffeomorphism of T^d with exact forward/inverse/derivative rules.
#[derive(Debug, Clone)]
pub struct SmoothSystem {
    rule: Rule,
    dim: usize,
    name: String,
    /// Smoothness proxy: analytic examples report a finite working order.
    pub smoothness: u32,
}

impl SmoothSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Linear systems (and products of them) have position-independent
    /// Jacobians, which several grid suprema exploit.
    pub fn constant_jacobian(&self) -> bool {
        match &self.rule {
            Rule::Linear { .. } => true,
            Rule::Perturbed { .. } | Rule::Skew { .. } => false,
            Rule::Product(a, b) => a.constant_jacobian() && b.constant_jacobian(),
        }
    }

    /// Forward map on the lift R^d.
    pub fn apply_lift(&self, x: &[f64]) -> Vec<f64> {
        match &self.rule {
            Rule::Linear { fwd, .. } => fwd.matvec(x),
            Rule::Perturbed { fwd, eps, .. } => {
                let mut y = fwd.matvec(x);
                let s = sine_field(x);
                for (yi, si) in y.iter_mut().zip(&s) {
                    *yi += eps * si;
                }
                y
            }
            Rule::Product(a, b) => {
                let (xa, xb) = x.split_at(a.dim);
                let mut y = a.apply_lift(xa);
                y.extend(b.apply_lift(xb));
                y
            }
            Rule::Skew { base, fwd, eps, .. } => {
                let t = x[0];
                let fiber = &x[1..];
                let mut y = Vec::with_capacity(self.dim);
                y.push(base.apply(t));
                let mut fy = fwd.matvec(fiber);
                let s = sine_field(fiber);
                let gain = eps * (TWO_PI * t).sin();
                for (yi, si) in fy.iter_mut().zip(&s) {
                    *yi += gain * si;
                }
                y.extend(fy);
                y
            }
        }
    }

    /// Inverse map on the lift.
    pub fn invert_lift(&self, y: &[f64]) -> Vec<f64> {
        match &self.rule {
            Rule::Linear { inv, .. } => inv.matvec(y),
            Rule::Perturbed { inv, eps, .. } => {
                // Fixed point of x = A^-1 (y - eps s(x)); contraction since
                // eps |ds| |A^-1| < 1 was checked at construction.
                let mut x = inv.matvec(y);
                for _ in 0..200 {
                    let s = sine_field(&x);
                    let target: Vec<f64> =
                        y.iter().zip(&s).map(|(yi, si)| yi - eps * si).collect();
                    let next = inv.matvec(&target);
                    let delta: f64 = next
                        .iter()
                        .zip(&x)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    x = next;
                    if delta < 1e-15 {
                        break;
                    }
                }
                x
            }
            Rule::Product(a, b) => {
                let (ya, yb) = y.split_at(a.dim);
                let mut x = a.invert_lift(ya);
                x.extend(b.invert_lift(yb));
                x
            }
            Rule::Skew { base, inv, eps, .. } => {
                let t_prev = base.invert(y[0]);
                let gain = eps * (TWO_PI * t_prev).sin();
                let fiber = &y[1..];
                let mut x = inv.matvec(fiber);
                for _ in 0..200 {
                    let s = sine_field(&x);
                    let target: Vec<f64> =
                        fiber.iter().zip(&s).map(|(yi, si)| yi - gain * si).collect();
                    let next = inv.matvec(&target);
                    let delta: f64 = next
                        .iter()
                        .zip(&x)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    x = next;
                    if delta < 1e-15 {
                        break;
                    }
                }
                let mut out = Vec::with_capacity(self.dim);
                out.push(t_prev);
                out.extend(x);
                out
            }
        }
    }

    pub fn apply(&self, x: &TorusPoint) -> TorusPoint {
        TorusPoint::new(self.apply_lift(x.coords()))
    }

    pub fn invert(&self, y: &TorusPoint) -> TorusPoint {
        TorusPoint::new(self.invert_lift(y.coords()))
    }

    /// d_x f; depends only on x mod 1.
    pub fn jacobian(&self, x: &[f64]) -> Mat {
        match &self.rule {
            Rule::Linear { fwd, .. } => fwd.clone(),
            Rule::Perturbed { fwd, eps, .. } => {
                fwd.add(&sine_field_jacobian(x).scale(*eps))
            }
            Rule::Product(a, b) => {
                let (xa, xb) = x.split_at(a.dim);
                let ja = a.jacobian(xa);
                let jb = b.jacobian(xb);
                let mut m = Mat::zeros(self.dim, self.dim);
                for r in 0..a.dim {
                    for c in 0..a.dim {
                        m[(r, c)] = ja[(r, c)];
                    }
                }
                for r in 0..b.dim {
                    for c in 0..b.dim {
                        m[(a.dim + r, a.dim + c)] = jb[(r, c)];
                    }
                }
                m
            }
            Rule::Skew { base, fwd, eps, .. } => {
                let t = x[0];
                let fiber = &x[1..];
                let k = fiber.len();
                let mut m = Mat::zeros(self.dim, self.dim);
                m[(0, 0)] = base.derivative(t);
                let s = sine_field(fiber);
                let dt_gain = eps * TWO_PI * (TWO_PI * t).cos();
                let fiber_jac = fwd.add(&sine_field_jacobian(fiber).scale(eps * (TWO_PI * t).sin()));
                for r in 0..k {
                    m[(1 + r, 0)] = dt_gain * s[r];
                    for c in 0..k {
                        m[(1 + r, 1 + c)] = fiber_jac[(r, c)];
                    }
                }
                m
            }
        }
    }

    /// d_x f^{-1} = (d_{f^{-1} x} f)^{-1}.
    pub fn inverse_jacobian(&self, x: &[f64]) -> Mat {
        let pre = self.invert_lift(x);
        self.jacobian(&pre).inverse()
    }

    fn new_linear(name: &str, fwd: Mat) -> Self {
        let d = fwd.rows();
        let inv = fwd.inverse();
        SmoothSystem { rule: Rule::Linear { fwd, inv }, dim: d, name: name.to_string(), smoothness: 6 }
    }

    fn new_perturbed(name: &str, fwd: Mat, eps: f64) -> Result<Self, SystemError> {
        let d = fwd.rows();
        let inv = fwd.inverse();
        // |ds| <= 1 by the 1/(2 pi) normalization of the sine field; check on
        // a probe grid anyway so a future field change cannot silently break it.
        let mut ds_max: f64 = 0.0;
        for probe in probe_grid(d, 8) {
            ds_max = ds_max.max(sine_field_jacobian(&probe).spectral_norm());
        }
        let budget = 1.0 / inv.spectral_norm();
        if eps.abs() * ds_max >= budget {
            return Err(SystemError::NotADiffeomorphism {
                name: name.to_string(),
                eps,
                gain: eps.abs() * ds_max,
                budget,
            });
        }
        Ok(SmoothSystem {
            rule: Rule::Perturbed { fwd, inv, eps },
            dim: d,
            name: name.to_string(),
            smoothness: 6,
        })
    }

    fn new_product(a: SmoothSystem, b: SmoothSystem) -> Self {
        let dim = a.dim + b.dim;
        let name = format!("product:{},{}", a.name, b.name);
        SmoothSystem { rule: Rule::Product(Box::new(a), Box::new(b)), dim, name, smoothness: 6 }
    }

    fn new_skew(name: &str, base: CircleMap, fwd: Mat, eps: f64) -> Result<Self, SystemError> {
        let d = fwd.rows() + 1;
        let inv = fwd.inverse();
        let budget = 1.0 / inv.spectral_norm();
        if eps.abs() >= budget {
            return Err(SystemError::NotADiffeomorphism {
                name: name.to_string(),
                eps,
                gain: eps.abs(),
                budget,
            });
        }
        Ok(SmoothSystem { rule: Rule::Skew { base, fwd, inv, eps }, dim: d, name: name.to_string(), smoothness: 6 })
    }

    /// Parse a zoo identifier. See module docs for the grammar.
    pub fn from_id(id: &str) -> Result<Self, SystemError> {
        let (head, args) = match id.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (id, None),
        };
        match head {
            "identity2" | "identity3" | "identity4" => {
                let d = head.as_bytes()[8] as usize - b'0' as usize;
                Ok(SmoothSystem::new_linear(head, Mat::identity(d)))
            }
            "cat2" => Ok(SmoothSystem::new_linear(
                "cat2",
                Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]),
            )),
            "cat3" => Ok(SmoothSystem::new_linear(
                // Companion matrix of t^3 - t - 1: hyperbolic in SL(3, Z).
                "cat3",
                Mat::from_rows(&[
                    vec![0.0, 1.0, 0.0],
                    vec![0.0, 0.0, 1.0],
                    vec![1.0, 1.0, 0.0],
                ]),
            )),
            "cat4" => {
                let a = SmoothSystem::from_id("cat2")?;
                let b = SmoothSystem::from_id("cat2")?;
                let mut sys = SmoothSystem::new_product(a, b);
                sys.name = "cat4".to_string();
                Ok(sys)
            }
            "cat2_perturbed" => {
                let eps = parse_eps(id, args, 0.1)?;
                SmoothSystem::new_perturbed(
                    &format!("cat2_perturbed:eps={eps}"),
                    Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]),
                    eps,
                )
            }
            "product" => {
                let args = args.ok_or_else(|| {
                    SystemError::BadParameter(id.to_string(), "product needs two ids".into())
                })?;
                let (a, b) = args.split_once(',').ok_or_else(|| {
                    SystemError::BadParameter(id.to_string(), "product needs two ids".into())
                })?;
                Ok(SmoothSystem::new_product(
                    SmoothSystem::from_id(a)?,
                    SmoothSystem::from_id(b)?,
                ))
            }
            "skew" => {
                let args = args.unwrap_or("ns,cat2_path");
                let (base_id, fiber_id) = args.split_once(',').ok_or_else(|| {
                    SystemError::BadParameter(id.to_string(), "skew needs base,fiber".into())
                })?;
                if base_id != "ns" {
                    return Err(SystemError::BadParameter(
                        id.to_string(),
                        format!("unknown skew base `{base_id}`"),
                    ));
                }
                if fiber_id != "cat2_path" {
                    return Err(SystemError::BadParameter(
                        id.to_string(),
                        format!("unknown skew fiber `{fiber_id}`"),
                    ));
                }
                SmoothSystem::new_skew(
                    &format!("skew:{args}"),
                    CircleMap { contraction: 0.5 },
                    Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]),
                    0.1,
                )
            }
            _ => Err(SystemError::UnknownId(id.to_string())),
        }
    }

    /// Probe-grid validation of the analytic rules: central finite differences
    /// of the map against the Jacobian (<= 1e-6 relative) and forward-inverse
    /// composition (<= 1e-10).
    pub fn validate(&self, grid_per_axis: usize) -> Result<(), SystemError> {
        let h = 1e-5;
        let mut worst_jac: f64 = 0.0;
        let mut worst_inv: f64 = 0.0;
        for x in probe_grid(self.dim, grid_per_axis) {
            let jac = self.jacobian(&x);
            let scale = jac.max_abs().max(1.0);
            for j in 0..self.dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fp = self.apply_lift(&xp);
                let fm = self.apply_lift(&xm);
                for i in 0..self.dim {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    worst_jac = worst_jac.max((fd - jac[(i, j)]).abs() / scale);
                }
            }
            let round_trip = self.invert_lift(&self.apply_lift(&x));
            for i in 0..self.dim {
                worst_inv = worst_inv.max((round_trip[i] - x[i]).abs());
            }
        }
        if worst_jac > 1e-6 {
            return Err(SystemError::JacobianMismatch(worst_jac));
        }
        if worst_inv > 1e-10 {
            return Err(SystemError::InverseMismatch(worst_inv));
        }
        Ok(())
    }
}

fn parse_eps(id: &str, args: Option<&str>, default: f64) -> Result<f64, SystemError> {
    match args {
        None => Ok(default),
        Some(a) => {
            let v = a.strip_prefix("eps=").ok_or_else(|| {
                SystemError::BadParameter(id.to_string(), "expected eps=<value>".into())
            })?;
            v.parse::<f64>()
                .map_err(|e| SystemError::BadParameter(id.to_string(), e.to_string()))
        }
    }
}

/// Cell-center probe grid, g points per axis.
pub fn probe_grid(d: usize, g: usize) -> impl Iterator<Item = Vec<f64>> {
    let total = g.pow(d as u32);
    (0..total).map(move |mut idx| {
        let mut x = Vec::with_capacity(d);
        for _ in 0..d {
            let i = idx % g;
            idx /= g;
            x.push((i as f64 + 0.5) / g as f64);
        }
        x
    })
}

/// Forward orbit x, f x, ..., f^n x (length n+1), wrapped to the torus.
pub fn apply_orbit(system: &SmoothSystem, x: &TorusPoint, n: usize) -> Vec<TorusPoint> {
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(x.clone());
    let mut cur = x.clone();
    for _ in 0..n {
        cur = system.apply(&cur);
        orbit.push(cur.clone());
    }
    orbit
}

/// Chain-rule product d_{f^{n-1}x} f ... d_x f. Negative n routes through the
/// inverse-Jacobian rule; n = 0 gives the identity.
pub fn jacobian_cocycle(system: &SmoothSystem, x: &TorusPoint, n: i64) -> Jacobian {
    let d = system.dim();
    let mut m = Mat::identity(d);
    if n >= 0 {
        let mut cur = x.clone();
        for _ in 0..n {
            m = system.jacobian(cur.coords()).matmul(&m);
            cur = system.apply(&cur);
        }
    } else {
        let mut cur = x.clone();
        for _ in 0..(-n) {
            let pre = system.invert(&cur);
            m = system.jacobian(pre.coords()).inverse().matmul(&m);
            cur = pre;
        }
    }
    Jacobian { matrix: m, base: x.clone(), steps: n }
}

/// M_{f^n} on a probe grid: max over grid_density^d cell centers of
/// max(|d_x f^n|, |d_x f^{-n}|) in spectral norm. Monotone nondecreasing in
/// grid_density for constant-Jacobian systems and asymptotically in general.
pub fn derivative_bound(system: &SmoothSystem, n: u32, grid_density: usize) -> f64 {
    assert!(n >= 1, "derivative_bound needs n >= 1");
    assert!(grid_density >= 8, "grid_density >= 8 required");
    let eval = |x: &TorusPoint| -> f64 {
        let fwd = jacobian_cocycle(system, x, n as i64).matrix.spectral_norm();
        let bwd = jacobian_cocycle(system, x, -(n as i64)).matrix.spectral_norm();
        fwd.max(bwd)
    };
    if system.constant_jacobian() {
        return eval(&TorusPoint::origin(system.dim()));
    }
    let mut best: f64 = 0.0;
    for x in probe_grid(system.dim(), grid_density) {
        best = best.max(eval(&TorusPoint::new(x)));
    }
    best
}

/// Finite-horizon upper proxy for the derivative growth rate R(f):
/// (1/n_max) log M_{f^{n_max}} on the default probe grid (32 per axis in
/// d <= 2, 8 per axis above).
pub fn r_growth(system: &SmoothSystem, n_max: u32) -> f64 {
    assert!(n_max >= 4, "r_growth needs n_max >= 4");
    let grid = if system.dim() <= 2 { 32 } else { 8 };
    derivative_bound(system, n_max, grid).ln() / n_max as f64
}
