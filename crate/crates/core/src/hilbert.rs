//! Blocks of the direct sum, grid functions on one block, trapezoid
//! quadrature, finite-difference stencils and the expressions
//! `l(u) = −u″ + iAu` and `l⁺(v) = −v″ − iA*v`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{OpError, Result};
use crate::linalg::{self, c, CMat, CVec, I};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-10;
pub const RECONSTRUCTION_TOL: f64 = 1e-10;
pub const MIN_NODES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    a: f64,
    b: f64,
    length: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(OpError::InvalidInterval { a, b });
        }
        Ok(Self { a, b, length: b - a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self, m: usize) -> f64 {
        self.length / (m - 1) as f64
    }

    pub fn node(&self, m: usize, k: usize) -> f64 {
        if k == m - 1 {
            self.b
        } else {
            self.a + k as f64 * self.spacing(m)
        }
    }
}

/// Hermitian positive-definite coefficient `A` with its cached spectral data.
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    matrix: CMat,
    eigenvalues: Vec<f64>,
    eigenvectors: CMat,
    sqrt: CMat,
    inv_sqrt: CMat,
}

impl CoefficientMatrix {
    /// Validates and factors `A`. Inputs that are not Hermitian to
    /// `1e−12` relative Frobenius error or whose smallest eigenvalue is not
    /// above `1e−10` are rejected as given.
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(OpError::Shape(format!(
                "coefficient must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(OpError::NonFinite("coefficient matrix"));
        }
        let scale = linalg::frobenius(&matrix);
        let asym = linalg::frobenius(&(&matrix - matrix.adjoint()));
        if asym > HERMITIAN_TOL * scale {
            return Err(OpError::NotHermitian {
                residual: if scale > 0.0 { asym / scale } else { asym },
            });
        }
        let (eigenvalues, eigenvectors) = linalg::hermitian_eigen(&matrix);
        let min_eig = eigenvalues[0];
        if min_eig <= POSITIVITY_TOL {
            return Err(OpError::NotPositiveDefinite { min_eig });
        }
        let sqrt = spectral_function(&eigenvalues, &eigenvectors, f64::sqrt);
        let inv_sqrt = spectral_function(&eigenvalues, &eigenvectors, |x| 1.0 / x.sqrt());
        let out = Self {
            matrix,
            eigenvalues,
            eigenvectors,
            sqrt,
            inv_sqrt,
        };
        debug_assert!(out.reconstruction_error() <= RECONSTRUCTION_TOL);
        Ok(out)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut m = CMat::zeros(d, d);
        for (j, &x) in diag.iter().enumerate() {
            m[(j, j)] = c(x, 0.0);
        }
        Self::new(m)
    }

    pub fn scalar(alpha: f64, d: usize) -> Result<Self> {
        Self::from_real_diagonal(&vec![alpha; d])
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Eigenvalues α_1 ≤ … ≤ α_d.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unitary Q with A = Q diag(α) Q*.
    pub fn eigenvectors(&self) -> &CMat {
        &self.eigenvectors
    }

    pub fn sqrt(&self) -> &CMat {
        &self.sqrt
    }

    pub fn inv_sqrt(&self) -> &CMat {
        &self.inv_sqrt
    }

    pub fn spectral_norm(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty")
    }

    /// Worst relative Frobenius error of `Q diag(α) Q*` and `(A^{1/2})²` against `A`.
    pub fn reconstruction_error(&self) -> f64 {
        let scale = linalg::frobenius(&self.matrix);
        let rebuilt = spectral_function(&self.eigenvalues, &self.eigenvectors, |x| x);
        let e1 = linalg::frobenius(&(rebuilt - &self.matrix));
        let e2 = linalg::frobenius(&(&self.sqrt * &self.sqrt - &self.matrix));
        e1.max(e2) / scale
    }

    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.matrix[(i, j)] * v[j]).sum())
            .collect()
    }
}

fn spectral_function(values: &[f64], vectors: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let diag = CVec::from_iterator(values.len(), values.iter().map(|&x| c(f(x), 0.0)));
    vectors * CMat::from_diagonal(&diag) * vectors.adjoint()
}

/// One summand of the direct sum: the interval Δ_n and the coefficient A_n.
#[derive(Debug, Clone)]
pub struct Block {
    pub index: usize,
    pub interval: Interval,
    pub coefficient: CoefficientMatrix,
}

impl Block {
    pub fn new(index: usize, interval: Interval, coefficient: CoefficientMatrix) -> Self {
        Self {
            index,
            interval,
            coefficient,
        }
    }

    pub fn dim(&self) -> usize {
        self.coefficient.dim()
    }

    /// Samples `f` on the block's `m`-node grid.
    pub fn sample<F>(&self, m: usize, f: F) -> Result<GridFunction>
    where
        F: Fn(f64) -> Vec<Complex64>,
    {
        GridFunction::sample(self.interval, self.dim(), m, f)
    }
}

/// Vector-valued function sampled on the uniform grid `t_k = a + k·h`,
/// `k = 0..m−1`, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    interval: Interval,
    dim: usize,
    m: usize,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn from_values(interval: Interval, dim: usize, m: usize, values: Vec<Complex64>) -> Result<Self> {
        if m < MIN_NODES {
            return Err(OpError::GridTooCoarse { need: MIN_NODES, got: m });
        }
        if dim == 0 || values.len() != m * dim {
            return Err(OpError::Shape(format!(
                "expected {} values for m = {m}, d = {dim}, got {}",
                m * dim,
                values.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(OpError::NonFinite("grid function"));
        }
        Ok(Self {
            interval,
            dim,
            m,
            values,
        })
    }

    pub fn sample<F>(interval: Interval, dim: usize, m: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<Complex64>,
    {
        if m < MIN_NODES {
            return Err(OpError::GridTooCoarse { need: MIN_NODES, got: m });
        }
        let mut values = Vec::with_capacity(m * dim);
        for k in 0..m {
            let v = f(interval.node(m, k));
            if v.len() != dim {
                return Err(OpError::Shape(format!("sampler returned {} components, expected {dim}", v.len())));
            }
            values.extend(v);
        }
        Self::from_values(interval, dim, m, values)
    }

    pub fn zeros(interval: Interval, dim: usize, m: usize) -> Result<Self> {
        Self::from_values(interval, dim, m, vec![Complex64::new(0.0, 0.0); m * dim])
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.interval.spacing(self.m)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn node_value(&self, k: usize) -> &[Complex64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if self.interval != other.interval || self.m != other.m || self.dim != other.dim {
            return Err(OpError::Shape(format!(
                "grid functions differ: ({:?}, m={}, d={}) vs ({:?}, m={}, d={})",
                self.interval, self.m, self.dim, other.interval, other.m, other.dim
            )));
        }
        Ok(())
    }

    fn map_nodes(&self, f: impl Fn(usize) -> Vec<Complex64>) -> GridFunction {
        let mut values = Vec::with_capacity(self.values.len());
        for k in 0..self.m {
            values.extend(f(k));
        }
        GridFunction {
            values,
            ..self.clone()
        }
    }

    /// `α·self + β·other`
    pub fn combine(&self, alpha: Complex64, other: &GridFunction, beta: Complex64) -> Result<GridFunction> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        Ok(GridFunction {
            values,
            ..self.clone()
        })
    }

    pub fn scale(&self, alpha: Complex64) -> GridFunction {
        GridFunction {
            values: self.values.iter().map(|x| alpha * x).collect(),
            ..self.clone()
        }
    }
}

/// Trapezoid-rule `∫ Σ_j u_j · conj(v_j) dt`.
pub fn inner_product(u: &GridFunction, v: &GridFunction) -> Result<Complex64> {
    u.check_compatible(v)?;
    let d = u.dim;
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..u.m {
        let w = if k == 0 || k == u.m - 1 { 0.5 } else { 1.0 };
        let node: Complex64 = (0..d).map(|j| u.values[k * d + j] * v.values[k * d + j].conj()).sum();
        sum += node * w;
    }
    Ok(sum * u.spacing())
}

pub fn norm_sqr(u: &GridFunction) -> f64 {
    inner_product(u, u).map(|z| z.re).unwrap_or(f64::NAN)
}

/// Three-point one-sided first derivatives at (a, b).
pub(crate) fn endpoint_first_derivatives(u: &GridFunction) -> (Vec<Complex64>, Vec<Complex64>) {
    let (m, d, h) = (u.m, u.dim, u.spacing());
    let at = |k: usize, j: usize| u.values[k * d + j];
    let left = (0..d)
        .map(|j| (-3.0 * at(0, j) + 4.0 * at(1, j) - at(2, j)) / (2.0 * h))
        .collect();
    let right = (0..d)
        .map(|j| (3.0 * at(m - 1, j) - 4.0 * at(m - 2, j) + at(m - 3, j)) / (2.0 * h))
        .collect();
    (left, right)
}

/// Five-point fourth-order one-sided first derivatives at (a, b).
fn endpoint_first_derivatives_fourth_order(u: &GridFunction) -> (Vec<Complex64>, Vec<Complex64>) {
    const W: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    let (m, d, h) = (u.m, u.dim, u.spacing());
    let at = |k: usize, j: usize| u.values[k * d + j];
    let left = (0..d)
        .map(|j| W.iter().enumerate().map(|(k, &w)| w * at(k, j)).sum::<Complex64>() / (12.0 * h))
        .collect();
    let right = (0..d)
        .map(|j| -W.iter().enumerate().map(|(k, &w)| w * at(m - 1 - k, j)).sum::<Complex64>() / (12.0 * h))
        .collect();
    (left, right)
}

/// Second-order finite-difference derivative of order 1 or 2: central
/// differences inside, one-sided second-order stencils at both endpoints.
pub fn derivative(u: &GridFunction, order: u8) -> Result<GridFunction> {
    if u.m < MIN_NODES {
        return Err(OpError::GridTooCoarse { need: MIN_NODES, got: u.m });
    }
    let (m, d, h) = (u.m, u.dim, u.spacing());
    let at = |k: usize, j: usize| u.values[k * d + j];
    match order {
        1 => {
            let (left, right) = endpoint_first_derivatives(u);
            Ok(u.map_nodes(|k| match k {
                0 => left.clone(),
                k if k == m - 1 => right.clone(),
                k => (0..d).map(|j| (at(k + 1, j) - at(k - 1, j)) / (2.0 * h)).collect(),
            }))
        }
        2 => {
            let h2 = h * h;
            Ok(u.map_nodes(|k| match k {
                0 => (0..d)
                    .map(|j| (2.0 * at(0, j) - 5.0 * at(1, j) + 4.0 * at(2, j) - at(3, j)) / h2)
                    .collect(),
                k if k == m - 1 => (0..d)
                    .map(|j| (2.0 * at(m - 1, j) - 5.0 * at(m - 2, j) + 4.0 * at(m - 3, j) - at(m - 4, j)) / h2)
                    .collect(),
                k => (0..d)
                    .map(|j| (at(k - 1, j) - 2.0 * at(k, j) + at(k + 1, j)) / h2)
                    .collect(),
            }))
        }
        other => Err(OpError::Invalid(format!("derivative order must be 1 or 2, got {other}"))),
    }
}

fn check_block(block: &Block, u: &GridFunction) -> Result<()> {
    if u.dim != block.dim() {
        return Err(OpError::Shape(format!(
            "grid function has {} components, block {} has d = {}",
            u.dim,
            block.index,
            block.dim()
        )));
    }
    if u.interval != block.interval {
        return Err(OpError::Shape(format!("grid function is not on block {}", block.index)));
    }
    Ok(())
}

fn expression(block: &Block, u: &GridFunction, sign: f64) -> Result<GridFunction> {
    check_block(block, u)?;
    let second = derivative(u, 2)?;
    let coeff = &block.coefficient;
    Ok(u.map_nodes(|k| {
        let au = coeff.apply(u.node_value(k));
        second
            .node_value(k)
            .iter()
            .zip(au)
            .map(|(upp, a)| -upp + I * sign * a)
            .collect()
    }))
}

/// `l(u) = −u″ + iAu` nodewise.
pub fn apply_expression(block: &Block, u: &GridFunction) -> Result<GridFunction> {
    expression(block, u, 1.0)
}

/// `l⁺(v) = −v″ − iA*v` nodewise (A* = A).
pub fn apply_adjoint_expression(block: &Block, v: &GridFunction) -> Result<GridFunction> {
    expression(block, v, -1.0)
}

/// `A·u` nodewise.
pub fn apply_coefficient(block: &Block, u: &GridFunction) -> Result<GridFunction> {
    check_block(block, u)?;
    Ok(u.map_nodes(|k| block.coefficient.apply(u.node_value(k))))
}

/// True iff `u` and `u′` vanish at both endpoints within `tol`.
///
/// Endpoint derivatives here use the five-point fourth-order one-sided
/// stencil; the three-point stencil's `O(h²)` truncation would dominate
/// typical tolerances on functions that vanish to second order.
pub fn minimal_domain_test(u: &GridFunction, tol: f64) -> bool {
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let (da, db) = endpoint_first_derivatives_fourth_order(u);
    [norm(u.node_value(0)), norm(u.node_value(u.m - 1)), norm(&da), norm(&db)]
        .iter()
        .all(|&x| x <= tol)
}

fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (4.0 * s * (1.0 - s))).exp()
    }
}

/// Deterministic element of the pre-minimal domain: `Σ_k φ_k(t) f_k` with
/// compactly supported smooth factors `φ_k(t) = sin²(kπs)·β(s)`,
/// `s = (t − a)/ℓ`, `β` the standard bump, and random complex `f_k`.
pub fn generate_minimal_domain_function(block: &Block, seed: u64, m: usize) -> Result<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = block.dim();
    let terms = rng.gen_range(1..=3usize);
    let coeffs: Vec<Vec<Complex64>> = (0..terms)
        .map(|_| {
            (0..d)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    let iv = block.interval;
    block.sample(m, |t| {
        let s = (t - iv.a()) / iv.length();
        let mut out = vec![Complex64::new(0.0, 0.0); d];
        for (k, f) in coeffs.iter().enumerate() {
            let phi = (((k + 1) as f64) * PI * s).sin().powi(2) * bump(s);
            for (o, fj) in out.iter_mut().zip(f) {
                *o += fj * phi;
            }
        }
        out
    })
}
