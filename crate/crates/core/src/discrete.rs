//! Finite-difference realization of an extension on one block, a dense
//! eigensolver, normality residuals and the grid-level norm identities.
//!
//! Unknowns are the interior nodal values plus the endpoint values that the
//! boundary condition leaves free. Writing the condition as
//! `P_𝔇 γ₁u = 0` and `γ₂u = Λγ₁u` on `𝔇^⊥` (see
//! [`crate::boundary::self_adjoint_split`]), endpoint derivatives enter the
//! ghost-point closure only through `Λ`, and the discrete form
//!
//! ```text
//! a(u, v) = Σ_k (u_{k+1} − u_k, v_{k+1} − v_k)/h − (Λγ₁u, γ₁v)_𝔥
//! ```
//!
//! is Hermitian for every unitary `W`. The matrix is expressed in coordinates
//! orthonormal for the trapezoid inner product, so `D*` is the discrete
//! adjoint. Dirichlet, periodic and Neumann reduce to the tridiagonal,
//! circulant and ghost-point closures, of sizes `(m−2)d`, `(m−1)d` and `md`.

use nalgebra::Schur;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::analytic::{sort_eigenvalues, Eigenvalue, Engine};
use crate::boundary::{self, BoundaryUnitary};
use crate::error::{OpError, Result};
use crate::hilbert::{self, Block, GridFunction};
use crate::linalg::{self, c, CMat, CVec, I};

pub const MIN_DISCRETE_NODES: usize = 8;
pub const DEFAULT_SIZE_CAP: usize = 4000;
pub const CONSTRAINT_TOL: f64 = 1e-8;
pub const MATCH_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    /// Stencil order of the interior second difference.
    pub stencil_order: usize,
    /// Number of free endpoint coordinates (dim 𝔇^⊥).
    pub robin_rank: usize,
    /// Number of Dirichlet-constrained endpoint directions (dim 𝔇).
    pub dirichlet_rank: usize,
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub block_index: usize,
    matrix: CMat,
    scheme: Scheme,
    h: f64,
    m: usize,
    dim: usize,
    /// `S·B`: endpoint values `(u(a), u(b))` from the free coordinates.
    endpoint_map: CMat,
    interval: hilbert::Interval,
}

impl DiscreteOperator {
    pub fn from_matrix(block_index: usize, matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(OpError::Shape("operator matrix must be square".into()));
        }
        let n = matrix.nrows();
        Ok(Self {
            block_index,
            matrix,
            scheme: Scheme {
                stencil_order: 0,
                robin_rank: 0,
                dirichlet_rank: 0,
            },
            h: f64::NAN,
            m: n,
            dim: 1,
            endpoint_map: CMat::zeros(0, 0),
            interval: hilbert::Interval::new(0.0, 1.0)?,
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    /// Hermitian part `(D + D*)/2`.
    pub fn real_part(&self) -> CMat {
        (&self.matrix + self.matrix.adjoint()).scale(0.5)
    }

    /// Hermitian `(D − D*)/(2i)`.
    pub fn imag_part(&self) -> CMat {
        (&self.matrix - self.matrix.adjoint()) * c(0.0, -0.5)
    }

    fn interior(&self) -> usize {
        (self.m - 2) * self.dim
    }

    /// Coordinates of a grid function: interior values and the scaled
    /// projection of its endpoint values onto the free directions.
    pub fn coordinates(&self, u: &GridFunction) -> Result<CVec> {
        if u.nodes() != self.m || u.dim() != self.dim || u.interval() != self.interval {
            return Err(OpError::Shape("grid function does not match the discretization".into()));
        }
        let d = self.dim;
        let mut x = CVec::zeros(self.size());
        for k in 1..self.m - 1 {
            for j in 0..d {
                x[(k - 1) * d + j] = u.node_value(k)[j];
            }
        }
        let ends = CVec::from_iterator(2 * d, u.node_value(0).iter().chain(u.node_value(self.m - 1)).copied());
        let free = self.endpoint_map.adjoint() * ends;
        for (i, v) in free.iter().enumerate() {
            x[self.interior() + i] = v / SQRT_2;
        }
        Ok(x)
    }

    /// Grid function represented by coordinates `x`.
    pub fn grid_function(&self, x: &CVec) -> Result<GridFunction> {
        if x.len() != self.size() {
            return Err(OpError::Shape("coordinate vector has the wrong length".into()));
        }
        let d = self.dim;
        let free = CVec::from_iterator(self.scheme.robin_rank, (0..self.scheme.robin_rank).map(|i| x[self.interior() + i] * SQRT_2));
        let ends = &self.endpoint_map * free;
        let mut values = Vec::with_capacity(self.m * d);
        values.extend(ends.rows(0, d).iter());
        values.extend(x.rows(0, self.interior()).iter());
        values.extend(ends.rows(d, d).iter());
        GridFunction::from_values(self.interval, d, self.m, values)
    }
}

fn check_nodes(m: usize, need: usize) -> Result<()> {
    if m < need {
        return Err(OpError::GridTooCoarse { need, got: m });
    }
    Ok(())
}

fn build(block: &Block, w: &BoundaryUnitary, m: usize, sign: f64) -> Result<DiscreteOperator> {
    check_nodes(m, hilbert::MIN_NODES)?;
    let d = block.dim();
    if w.dim() != d {
        return Err(OpError::Shape(format!("block {} has d = {d}, boundary operator has d = {}", block.index, w.dim())));
    }
    let split = boundary::self_adjoint_split(w)?;
    let r = split.robin_basis.ncols();
    let h = block.interval.spacing(m);
    let interior_nodes = m - 2;
    let ni = interior_nodes * d;
    let n = ni + r;
    let a = block.coefficient.matrix();

    // S·B with S = diag(−E, E), so that γ₁u = B·c.
    let mut endpoint_map = split.robin_basis.clone();
    for i in 0..d {
        for j in 0..r {
            endpoint_map[(i, j)] = -endpoint_map[(i, j)];
        }
    }
    let left = endpoint_map.rows(0, d).into_owned();
    let right = endpoint_map.rows(d, d).into_owned();

    let h2 = h * h;
    let mut mat = CMat::zeros(n, n);
    // Interior second differences and nodewise iA (or −iA for the adjoint).
    for k in 0..interior_nodes {
        for j in 0..d {
            let row = k * d + j;
            mat[(row, row)] += c(2.0 / h2, 0.0);
            if k > 0 {
                mat[(row, row - d)] += c(-1.0 / h2, 0.0);
            }
            if k + 1 < interior_nodes {
                mat[(row, row + d)] += c(-1.0 / h2, 0.0);
            }
            for jj in 0..d {
                mat[(row, k * d + jj)] += I * sign * a[(j, jj)];
            }
        }
    }
    if r > 0 {
        // Free endpoint coordinates carry trapezoid weight 1/2; orthonormal
        // scaling multiplies couplings by √2 and the diagonal block by 2.
        let last = (interior_nodes - 1) * d;
        for j in 0..d {
            for q in 0..r {
                mat[(j, ni + q)] += -left[(j, q)] * (SQRT_2 / h2);
                mat[(ni + q, j)] += -left[(j, q)].conj() * (SQRT_2 / h2);
                mat[(last + j, ni + q)] += -right[(j, q)] * (SQRT_2 / h2);
                mat[(ni + q, last + j)] += -right[(j, q)].conj() * (SQRT_2 / h2);
            }
        }
        let edge = left.adjoint() * &left + right.adjoint() * &right;
        let lambda = &split.robin_operator;
        let a2 = linalg::block_diag2(a);
        let a_free = split.robin_basis.adjoint() * a2 * &split.robin_basis;
        for p in 0..r {
            for q in 0..r {
                mat[(ni + p, ni + q)] += edge[(p, q)] * (2.0 / h2) - lambda[(p, q)] * (2.0 / h) + I * sign * a_free[(p, q)];
            }
        }
    }
    if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(OpError::NonFinite("discrete operator"));
    }
    Ok(DiscreteOperator {
        block_index: block.index,
        matrix: mat,
        scheme: Scheme {
            stencil_order: 2,
            robin_rank: r,
            dirichlet_rank: 2 * d - r,
        },
        h,
        m,
        dim: d,
        endpoint_map,
        interval: block.interval,
    })
}

/// Matrix size [`discretize`] would produce, without assembling it.
pub fn discretized_size(block: &Block, w: &BoundaryUnitary, m: usize) -> Result<usize> {
    check_nodes(m, MIN_DISCRETE_NODES)?;
    let r = boundary::self_adjoint_split(w)?.robin_basis.ncols();
    Ok((m - 2) * block.dim() + r)
}

/// Matrix realization of `−u″ + iAu` under `(W − E)γ₁u + i(W + E)γ₂u = 0`
/// on the `m`-node grid of `block`.
pub fn discretize(block: &Block, w: &BoundaryUnitary, m: usize) -> Result<DiscreteOperator> {
    check_nodes(m, MIN_DISCRETE_NODES)?;
    build(block, w, m, 1.0)
}

/// Same closure applied to the formally adjoint expression `−v″ − iAv`.
pub fn discretize_adjoint(block: &Block, w: &BoundaryUnitary, m: usize) -> Result<DiscreteOperator> {
    check_nodes(m, MIN_DISCRETE_NODES)?;
    build(block, w, m, -1.0)
}

/// Eigenvalues of a discrete operator, one entry per eigenvalue.
#[derive(Debug, Clone)]
pub struct DiscreteSpectrum {
    pub eigenvalues: Vec<Eigenvalue>,
    /// Some eigenvalue cluster has (numerically) collinear eigenvectors.
    pub defective: bool,
    /// Frobenius norm of the matrix.
    pub matrix_norm: f64,
}

impl DiscreteSpectrum {
    pub fn max_relative_residual(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.residual).fold(0.0, f64::max) / self.matrix_norm.max(f64::MIN_POSITIVE)
    }

    /// Merges eigenvalues closer than `tol` into one entry with summed multiplicity.
    pub fn clustered(&self, tol: f64) -> Vec<Eigenvalue> {
        cluster(&self.eigenvalues, tol)
    }
}

pub fn cluster(values: &[Eigenvalue], tol: f64) -> Vec<Eigenvalue> {
    let mut out: Vec<Eigenvalue> = Vec::new();
    for e in values {
        match out
            .iter_mut()
            .find(|o| o.block_index == e.block_index && (o.lambda - e.lambda).norm() <= tol)
        {
            Some(o) => {
                o.multiplicity += e.multiplicity;
                o.residual = o.residual.max(e.residual);
            }
            None => out.push(e.clone()),
        }
    }
    sort_eigenvalues(&mut out);
    out
}

pub fn eigen(op: &DiscreteOperator) -> Result<DiscreteSpectrum> {
    eigen_with_cap(op, DEFAULT_SIZE_CAP)
}

/// Full spectrum by complex Schur decomposition (Hessenberg reduction and
/// shifted QR). Each eigenvalue is paired with the eigenvector obtained by
/// back substitution in the triangular factor and reported at the Rayleigh
/// quotient of that vector, which minimizes `‖Dv − λv‖`.
pub fn eigen_with_cap(op: &DiscreteOperator, cap: usize) -> Result<DiscreteSpectrum> {
    let n = op.size();
    if n > cap {
        return Err(OpError::SizeCap { size: n, cap });
    }
    let matrix_norm = linalg::frobenius(&op.matrix);
    if n == 0 {
        return Ok(DiscreteSpectrum {
            eigenvalues: Vec::new(),
            defective: false,
            matrix_norm,
        });
    }
    let schur = Schur::try_new(op.matrix.clone(), f64::EPSILON, 1000 * n).ok_or(OpError::NoConvergence { converged: 0, size: n })?;
    let (q, t) = schur.unpack();
    let smin = (f64::EPSILON * matrix_norm).max(f64::MIN_POSITIVE);
    let mut vectors: Vec<CVec> = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let lam = t[(k, k)];
        let mut y = CVec::zeros(n);
        y[k] = c(1.0, 0.0);
        for j in (0..k).rev() {
            let s: Complex64 = (j + 1..=k).map(|l| t[(j, l)] * y[l]).sum();
            let mut denom = t[(j, j)] - lam;
            if denom.norm() < smin {
                denom = c(smin, 0.0);
            }
            y[j] = -s / denom;
        }
        let mut v = &q * y;
        let nv = v.norm();
        v /= c(nv, 0.0);
        let dv = &op.matrix * &v;
        let rq = v.dotc(&dv);
        let r_schur = (&dv - &v * lam).norm();
        let r_rq = (&dv - &v * rq).norm();
        let (lambda, residual) = if r_rq <= r_schur { (rq, r_rq) } else { (lam, r_schur) };
        values.push(Eigenvalue::new(lambda, op.block_index, 1, residual, Engine::Discrete));
        vectors.push(v);
    }
    let mut defective = false;
    let close = 1e-6 * matrix_norm.max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (values[i].lambda - values[j].lambda).norm() <= close && vectors[i].dotc(&vectors[j]).norm() > 1.0 - 1e-6 {
                defective = true;
            }
        }
    }
    sort_eigenvalues(&mut values);
    Ok(DiscreteSpectrum {
        eigenvalues: values,
        defective,
        matrix_norm,
    })
}

/// `‖D*D − DD*‖_F / ‖D‖_F²`, accumulated over nonzero entries only.
pub fn normality_residual(op: &DiscreteOperator) -> f64 {
    let a = &op.matrix;
    let n = a.nrows();
    let norm2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    if norm2 == 0.0 {
        return 0.0;
    }
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let mut cols: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    for j in 0..n {
        for i in 0..n {
            let z = a[(i, j)];
            if z.re != 0.0 || z.im != 0.0 {
                rows[i].push((j, z));
                cols[j].push((i, z));
            }
        }
    }
    let mut diff = vec![Complex64::new(0.0, 0.0); n * n];
    // (D*D)_{ij} = Σ_k conj(D_ki) D_kj
    for row in &rows {
        for &(i, x) in row {
            for &(j, y) in row {
                diff[i * n + j] += x.conj() * y;
            }
        }
    }
    // (DD*)_{ij} = Σ_k D_ik conj(D_jk)
    for col in &cols {
        for &(i, x) in col {
            for &(j, y) in col {
                diff[i * n + j] -= x * y.conj();
            }
        }
    }
    diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / norm2
}

/// `h²·‖[Re D, Im D]‖_F`. For a non-admissible pair the commutator sits at
/// the boundary rows and grows like `1/h²`, so this stays of order one under
/// refinement while [`normality_residual`] decays.
pub fn scaled_commutator(op: &DiscreteOperator) -> f64 {
    let comm = linalg::commutator(&op.real_part(), &op.imag_part());
    linalg::frobenius(&comm) * op.spacing().powi(2)
}

fn random_smooth_function(block: &Block, m: usize, rng: &mut ChaCha8Rng) -> Result<GridFunction> {
    let d = block.dim();
    let modes = 4;
    let coeffs: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..modes)
        .map(|k| {
            let scale = 1.0 / (1.0 + k as f64).powi(2);
            let mut draw = || {
                (0..d)
                    .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
                    .collect::<Vec<_>>()
            };
            (draw(), draw())
        })
        .collect();
    let iv = block.interval;
    block.sample(m, |t| {
        let s = (t - iv.a()) / iv.length();
        let mut out = vec![c(0.0, 0.0); d];
        for (k, (ca, sa)) in coeffs.iter().enumerate() {
            let (cs, sn) = ((k as f64 * PI * s).cos(), (k as f64 * PI * s).sin());
            for j in 0..d {
                out[j] += ca[j] * cs + sa[j] * sn;
            }
        }
        out
    })
}

/// Cubic Hermite polynomials with unit value or unit slope at one endpoint.
fn hermite_corrections(block: &Block, m: usize) -> Result<Vec<GridFunction>> {
    let d = block.dim();
    let iv = block.interval;
    let ell = iv.length();
    let shapes: [fn(f64) -> f64; 4] = [
        |s| 2.0 * s.powi(3) - 3.0 * s * s + 1.0,
        |s| s.powi(3) - 2.0 * s * s + s,
        |s| -2.0 * s.powi(3) + 3.0 * s * s,
        |s| s.powi(3) - s * s,
    ];
    let mut out = Vec::with_capacity(4 * d);
    for shape in shapes {
        for j in 0..d {
            out.push(block.sample(m, |t| {
                let mut v = vec![c(0.0, 0.0); d];
                v[j] = c(shape((t - iv.a()) / ell), 0.0);
                v
            })?);
        }
    }
    Ok(out)
}

/// Adds the minimum-norm Hermite correction that makes `u` satisfy the
/// grid boundary condition.
pub fn project_onto_boundary_condition(block: &Block, w: &BoundaryUnitary, u: &GridFunction) -> Result<GridFunction> {
    let corrections = hermite_corrections(block, u.nodes())?;
    let d = block.dim();
    let mut k = CMat::zeros(2 * d, corrections.len());
    for (col, psi) in corrections.iter().enumerate() {
        k.set_column(col, &boundary::boundary_residual(w, psi)?.to_vector());
    }
    let sv = linalg::singular_values(&k);
    let sigma_min = *sv.last().unwrap_or(&0.0);
    if sigma_min <= 1e-12 * sv.first().copied().unwrap_or(1.0) {
        return Err(OpError::ProjectionSingular { sigma_min });
    }
    let rhs = -boundary::boundary_residual(w, u)?.to_vector();
    let svd = nalgebra::SVD::new(k, true, true);
    let coeffs = svd.solve(&rhs, 0.0).map_err(|e| OpError::Invalid(e.to_string()))?;
    let mut out = u.clone();
    for (psi, &a) in corrections.iter().zip(coeffs.iter()) {
        out = out.combine(c(1.0, 0.0), psi, a)?;
    }
    Ok(out)
}

/// Largest relative gap `|‖l(u)‖² − ‖l⁺(u)‖²| / ‖l(u)‖²` over `samples`
/// random smooth grid functions satisfying the boundary condition.
pub fn normality_identity_on_domain(block: &Block, w: &BoundaryUnitary, samples: usize, m: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(OpError::Invalid("at least one sample is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let raw = random_smooth_function(block, m, &mut rng)?;
        let u = project_onto_boundary_condition(block, w, &raw)?;
        let residual = boundary::boundary_residual(w, &u)?.norm();
        if residual > CONSTRAINT_TOL {
            return Err(OpError::ProjectionSingular { sigma_min: residual });
        }
        let lu = hilbert::norm_sqr(&hilbert::apply_expression(block, &u)?);
        let lpu = hilbert::norm_sqr(&hilbert::apply_adjoint_expression(block, &u)?);
        worst = worst.max((lu - lpu).abs() / lu);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormIdentity {
    /// ‖−u″ + iAu‖²
    pub lhs: f64,
    /// ‖u″‖² + ‖Au‖²
    pub rhs: f64,
    pub defect: f64,
}

/// Compares `‖−u″ + iAu‖²` with `‖u″‖² + ‖Au‖²`; the defect equals
/// `−2·Im(u″, Au)` and vanishes on the minimal domain.
pub fn norm_identity_check(block: &Block, u: &GridFunction) -> Result<NormIdentity> {
    let lu = hilbert::apply_expression(block, u)?;
    let upp = hilbert::derivative(u, 2)?;
    let au = hilbert::apply_coefficient(block, u)?;
    let lhs = hilbert::norm_sqr(&lu);
    let rhs = hilbert::norm_sqr(&upp) + hilbert::norm_sqr(&au);
    Ok(NormIdentity { lhs, rhs, defect: lhs - rhs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ConvergenceOrder {
    Estimated(f64),
    /// Errors at round-off level on every grid.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub reference: Complex64,
    /// (m, h, |λ_h − λ|)
    pub errors: Vec<(usize, f64, f64)>,
    pub order: ConvergenceOrder,
}

pub const EXACT_TOL: f64 = 1e-12;

/// Least-squares slope of `log|λ_h − λ|` against `log h`.
pub fn convergence_study(block: &Block, w: &BoundaryUnitary, m_list: &[usize], reference: Complex64) -> Result<ConvergenceReport> {
    if m_list.len() < 3 || m_list.windows(2).any(|p| p[0] >= p[1]) {
        return Err(OpError::Invalid("m_list must be strictly increasing with at least 3 entries".into()));
    }
    let mut errors = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let op = discretize(block, w, m)?;
        let spec = eigen(&op)?;
        let nearest = spec
            .eigenvalues
            .iter()
            .map(|e| (e.lambda - reference).norm())
            .fold(f64::INFINITY, f64::min);
        if nearest > MATCH_RADIUS {
            return Err(OpError::Matching {
                reference: format!("{reference}"),
                radius: MATCH_RADIUS,
                m,
            });
        }
        errors.push((m, op.spacing(), nearest));
    }
    let order = if errors.iter().all(|e| e.2 <= EXACT_TOL) {
        ConvergenceOrder::Exact
    } else {
        let pts: Vec<(f64, f64)> = errors.iter().map(|&(_, h, e)| (h.ln(), e.max(f64::MIN_POSITIVE).ln())).collect();
        ConvergenceOrder::Estimated(least_squares_slope(&pts))
    };
    Ok(ConvergenceReport { reference, errors, order })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
