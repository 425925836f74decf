//! Boundary values `γ₁u = (−u(a), u(b))`, `γ₂u = (u′(a), u′(b))` in
//! `𝔥 = H ⊕ H`, and unitary boundary operators `W` selecting the extension
//! `(W − E)γ₁u + i(W + E)γ₂u = 0`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OpError, Result};
use crate::hilbert::{endpoint_first_derivatives, CoefficientMatrix, GridFunction};
use crate::linalg::{self, c, CMat, CVec, I};

pub const UNITARY_TOL: f64 = 1e-10;
pub const COMMUTATOR_TOL: f64 = 1e-8;

/// Element `(top, bottom)` of `𝔥 = H ⊕ H`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryVector {
    pub top: Vec<Complex64>,
    pub bottom: Vec<Complex64>,
}

impl BoundaryVector {
    pub fn new(top: Vec<Complex64>, bottom: Vec<Complex64>) -> Result<Self> {
        if top.len() != bottom.len() {
            return Err(OpError::Shape(format!("boundary halves differ: {} vs {}", top.len(), bottom.len())));
        }
        if top.iter().chain(&bottom).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(OpError::NonFinite("boundary vector"));
        }
        Ok(Self { top, bottom })
    }

    pub fn dim(&self) -> usize {
        self.top.len()
    }

    pub fn to_vector(&self) -> CVec {
        CVec::from_iterator(2 * self.dim(), self.top.iter().chain(&self.bottom).copied())
    }

    pub fn from_vector(v: &CVec) -> Self {
        let d = v.len() / 2;
        Self {
            top: v.rows(0, d).iter().copied().collect(),
            bottom: v.rows(d, d).iter().copied().collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    /// `(x, y)_𝔥 = Σ x_i conj(y_i)`
    pub fn inner(&self, other: &BoundaryVector) -> Complex64 {
        self.to_vector().iter().zip(other.to_vector().iter()).map(|(x, y)| x * y.conj()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
    Neumann,
    Custom,
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryKind::Periodic => "periodic",
            BoundaryKind::Dirichlet => "dirichlet",
            BoundaryKind::Neumann => "neumann",
            BoundaryKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for BoundaryKind {
    type Err = OpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(BoundaryKind::Periodic),
            "dirichlet" => Ok(BoundaryKind::Dirichlet),
            "neumann" => Ok(BoundaryKind::Neumann),
            "custom" | "matrix" => Ok(BoundaryKind::Custom),
            other => Err(OpError::UnknownKind(other.to_string())),
        }
    }
}

/// Unitary `W` on `𝔥 = C^d ⊕ C^d`.
#[derive(Debug, Clone)]
pub struct BoundaryUnitary {
    matrix: CMat,
    kind: BoundaryKind,
}

impl BoundaryUnitary {
    /// Wraps `matrix`, rejecting it when `‖W*W − E‖_F > 1e−10`.
    pub fn new(matrix: CMat, kind: BoundaryKind) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || !n.is_multiple_of(2) || matrix.ncols() != n {
            return Err(OpError::Shape(format!(
                "boundary operator must be 2d x 2d, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(OpError::NonFinite("boundary operator"));
        }
        let residual = linalg::unitarity_residual(&matrix);
        if residual > UNITARY_TOL {
            return Err(OpError::NotUnitary { residual });
        }
        Ok(Self { matrix, kind })
    }

    pub fn custom(matrix: CMat) -> Result<Self> {
        Self::new(matrix, BoundaryKind::Custom)
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    /// Dimension d of each copy of H.
    pub fn dim(&self) -> usize {
        self.matrix.nrows() / 2
    }

    /// The canonical kind whose matrix equals this one entrywise, if any.
    pub fn canonical_kind(&self) -> Option<BoundaryKind> {
        [BoundaryKind::Periodic, BoundaryKind::Dirichlet, BoundaryKind::Neumann]
            .into_iter()
            .find(|&k| {
                let canon = canonical_unitary(k, self.dim()).expect("canonical kinds are valid");
                linalg::frobenius(&(&canon.matrix - &self.matrix)) <= 1e-14
            })
    }

    /// Conjugate by a unitary `U`: `U W U*`.
    pub fn conjugated(&self, u: &CMat) -> Result<Self> {
        Self::new(u * &self.matrix * u.adjoint(), BoundaryKind::Custom)
    }
}

fn check_dim(w: &BoundaryUnitary, d: usize) -> Result<()> {
    if w.dim() != d {
        return Err(OpError::Shape(format!("boundary operator acts on d = {}, function has d = {d}", w.dim())));
    }
    Ok(())
}

pub fn gamma1(u: &GridFunction) -> BoundaryVector {
    let m = u.nodes();
    BoundaryVector {
        top: u.node_value(0).iter().map(|z| -z).collect(),
        bottom: u.node_value(m - 1).to_vec(),
    }
}

pub fn gamma2(u: &GridFunction) -> BoundaryVector {
    let (left, right) = endpoint_first_derivatives(u);
    BoundaryVector {
        top: left,
        bottom: right,
    }
}

/// `(W − E)γ₁u + i(W + E)γ₂u`
pub fn boundary_residual(w: &BoundaryUnitary, u: &GridFunction) -> Result<BoundaryVector> {
    check_dim(w, u.dim())?;
    Ok(BoundaryVector::from_vector(&residual_from_values(
        w,
        &gamma1(u).to_vector(),
        &gamma2(u).to_vector(),
    )))
}

pub(crate) fn residual_from_values(w: &BoundaryUnitary, g1: &CVec, g2: &CVec) -> CVec {
    let n = w.matrix.nrows();
    let e = CMat::identity(n, n);
    (&w.matrix - &e) * g1 + (&w.matrix + &e) * g2 * I
}

/// Boundary unitaries of the classical closures.
///
/// * periodic: `[[0, −E], [−E, 0]]` (u(a) = u(b), u′(a) = u′(b))
/// * dirichlet: `−E` (γ₁u = 0)
/// * neumann: `+E` (γ₂u = 0)
pub fn canonical_unitary(kind: BoundaryKind, d: usize) -> Result<BoundaryUnitary> {
    if d == 0 {
        return Err(OpError::Invalid("dimension must be at least 1".into()));
    }
    let n = 2 * d;
    let matrix = match kind {
        BoundaryKind::Periodic => {
            let mut w = CMat::zeros(n, n);
            for j in 0..d {
                w[(j, d + j)] = c(-1.0, 0.0);
                w[(d + j, j)] = c(-1.0, 0.0);
            }
            w
        }
        BoundaryKind::Dirichlet => -CMat::identity(n, n),
        BoundaryKind::Neumann => CMat::identity(n, n),
        BoundaryKind::Custom => return Err(OpError::UnknownKind("custom has no canonical matrix".into())),
    };
    Ok(BoundaryUnitary { matrix, kind })
}

/// Outcome of the normality test for one `(W, A)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// ‖W*W − E‖_F
    pub w_residual: f64,
    /// ‖V*V − E‖_F with V = diag(A^{1/2}, A^{1/2})·W·diag(A^{−1/2}, A^{−1/2})
    pub v_residual: f64,
    /// ‖W·diag(A, A) − diag(A, A)·W‖_F
    pub commutator_norm: f64,
    /// Whether the V-unitarity and commutator criteria agree.
    pub consistent: bool,
}

/// Tests whether `W` and its conjugate `V` by `diag(A^{1/2}, A^{1/2})` are
/// both unitary. The equivalent criterion `[W, diag(A, A)] = 0` is computed
/// alongside; disagreement is flagged through `consistent`.
pub fn admissibility_check(w: &BoundaryUnitary, a: &CoefficientMatrix) -> Result<Admissibility> {
    check_dim(w, a.dim())?;
    let sqrt2 = linalg::block_diag2(a.sqrt());
    let inv_sqrt2 = linalg::block_diag2(a.inv_sqrt());
    let a2 = linalg::block_diag2(a.matrix());
    let v = &sqrt2 * &w.matrix * &inv_sqrt2;
    let w_residual = linalg::unitarity_residual(&w.matrix);
    let v_residual = linalg::unitarity_residual(&v);
    let commutator_norm = linalg::frobenius(&linalg::commutator(&w.matrix, &a2));
    let v_ok = w_residual <= UNITARY_TOL && v_residual <= UNITARY_TOL;
    let comm_ok = commutator_norm <= COMMUTATOR_TOL;
    Ok(Admissibility {
        admissible: v_ok,
        w_residual,
        v_residual,
        commutator_norm,
        consistent: v_ok == (comm_ok && w_residual <= UNITARY_TOL),
    })
}

/// Decomposition of the boundary condition into a Dirichlet part and a
/// Robin part.
///
/// `𝔥 = 𝔇 ⊕ 𝔇^⊥` with `𝔇 = ker(W + E)`. On `𝔇` the condition reads
/// `P_𝔇 γ₁u = 0`; on `𝔇^⊥` it reads `γ₂u = Λ γ₁u` with the Hermitian
/// Cayley transform `Λ = i(W + E)^{-1}(W − E)` restricted to `𝔇^⊥`.
#[derive(Debug, Clone)]
pub struct BoundarySplit {
    /// Orthonormal basis of `𝔇^⊥` (2d × r).
    pub robin_basis: CMat,
    /// `Λ` in that basis (r × r, Hermitian).
    pub robin_operator: CMat,
}

pub const DIRICHLET_EIGEN_TOL: f64 = 1e-12;
pub const ENCODING_CONDITION_CAP: f64 = 1e12;

pub fn self_adjoint_split(w: &BoundaryUnitary) -> Result<BoundarySplit> {
    let n = w.matrix.nrows();
    // For unitary W, W ω = −1 exactly where Re W has eigenvalue −1.
    let re_w = (&w.matrix + w.matrix.adjoint()).scale(0.5);
    let (values, vectors) = linalg::hermitian_eigen(&re_w);
    let keep: Vec<usize> = (0..n).filter(|&j| values[j] + 1.0 > DIRICHLET_EIGEN_TOL).collect();
    let r = keep.len();
    let mut basis = CMat::zeros(n, r);
    for (col, &j) in keep.iter().enumerate() {
        basis.set_column(col, &vectors.column(j));
    }
    if r == 0 {
        return Ok(BoundarySplit {
            robin_basis: basis,
            robin_operator: CMat::zeros(0, 0),
        });
    }
    let w_r = basis.adjoint() * &w.matrix * &basis;
    let e = CMat::identity(r, r);
    let plus = &w_r + &e;
    let condition = linalg::condition_number(&plus);
    if condition > ENCODING_CONDITION_CAP {
        return Err(OpError::BoundaryEncoding { condition });
    }
    let inv = plus.try_inverse().ok_or(OpError::BoundaryEncoding {
        condition: f64::INFINITY,
    })?;
    let lambda = inv * (&w_r - &e) * I;
    let lambda = (&lambda + lambda.adjoint()).scale(0.5);
    Ok(BoundarySplit {
        robin_basis: basis,
        robin_operator: lambda,
    })
}
