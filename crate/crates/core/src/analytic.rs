//! Exact-ODE spectral engine.
//!
//! In the eigenbasis of `A = Q diag(α) Q*` the equation `−u″ + iAu = λu`
//! decouples into scalar problems with fundamental pair
//! `{cosh(μ(t−a)), sinh(μ(t−a))/μ}`, `μ² = iα_j − λ`. Both functions are even
//! in `μ`, so only `μ²` enters and the branch of the square root is
//! immaterial. Plugging the `2d` fundamental solutions into the boundary
//! condition gives the characteristic matrix `M(λ)`; eigenvalues are the
//! zeros of `det M(λ)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::boundary::{BoundaryKind, BoundaryUnitary};
use crate::error::{OpError, Result};
use crate::hilbert::Block;
use crate::linalg::{self, c, CMat, I};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    Discrete,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Analytic => "analytic",
            Engine::Discrete => "discrete",
        })
    }
}

/// A point of the spectrum with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub lambda: Complex64,
    pub block_index: usize,
    pub multiplicity: usize,
    pub residual: f64,
    pub engine: Engine,
    /// All blocks contributing this value (more than one after a union merge).
    pub blocks: Vec<usize>,
    /// False when the boundary operator fails the normality test for the block.
    pub admissible: bool,
}

impl Eigenvalue {
    pub fn new(lambda: Complex64, block_index: usize, multiplicity: usize, residual: f64, engine: Engine) -> Self {
        Self {
            lambda,
            block_index,
            multiplicity,
            residual,
            engine,
            blocks: vec![block_index],
            admissible: true,
        }
    }
}

pub fn sort_eigenvalues(values: &mut [Eigenvalue]) {
    values.sort_by(|a, b| linalg::cmp_complex(&a.lambda, &b.lambda).then(a.block_index.cmp(&b.block_index)));
}

/// Rectangle `[re_min, re_max] × [im_min, im_max]` with its scan lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub scan_re: usize,
    pub scan_im: usize,
}

pub const DEFAULT_SCAN: (usize, usize) = (40, 20);

impl SearchRegion {
    pub fn new(re: (f64, f64), im: (f64, f64), scan: (usize, usize)) -> Result<Self> {
        if !(re.0 < re.1) || !(im.0 < im.1) {
            return Err(OpError::Invalid(format!("search region must satisfy min < max, got re {re:?}, im {im:?}")));
        }
        if scan.0 < 8 || scan.1 < 8 {
            return Err(OpError::Invalid(format!("scan counts must be at least 8, got {scan:?}")));
        }
        Ok(Self {
            re_min: re.0,
            re_max: re.1,
            im_min: im.0,
            im_max: im.1,
            scan_re: scan.0,
            scan_im: scan.1,
        })
    }

    pub fn with_default_scan(re: (f64, f64), im: (f64, f64)) -> Result<Self> {
        Self::new(re, im, DEFAULT_SCAN)
    }

    pub fn contains(&self, z: Complex64, slack: f64) -> bool {
        z.re >= self.re_min - slack && z.re <= self.re_max + slack && z.im >= self.im_min - slack && z.im <= self.im_max + slack
    }

    fn node(&self, i: usize, j: usize) -> Complex64 {
        let x = self.re_min + (self.re_max - self.re_min) * i as f64 / (self.scan_re - 1) as f64;
        let y = self.im_min + (self.im_max - self.im_min) * j as f64 / (self.scan_im - 1) as f64;
        c(x, y)
    }
}

const SMALL_ARGUMENT: f64 = 1e-6;

/// `sinh(z)/z`, continuous through `z = 0`.
fn sinhc(z: Complex64) -> Complex64 {
    if z.norm() < SMALL_ARGUMENT {
        1.0 + z * z / 6.0
    } else {
        z.sinh() / z
    }
}

/// Boundary data `[γ₁; γ₂]` of the fundamental system, one column per solution.
fn cauchy_data(block: &Block, lambda: Complex64) -> CMat {
    let d = block.dim();
    let ell = block.interval.length();
    let q = block.coefficient.eigenvectors();
    let alphas = block.coefficient.eigenvalues();
    let mut data = CMat::zeros(4 * d, 2 * d);
    for (j, &alpha) in alphas.iter().enumerate() {
        let mu2 = I * alpha - lambda;
        let z = mu2.sqrt() * ell;
        let ch = z.cosh();
        let shc = sinhc(z);
        for r in 0..d {
            let qr = q[(r, j)];
            // cosh-type: u(a) = q, u'(a) = 0, u(b) = cosh·q, u'(b) = μ²ℓ·sinhc·q
            data[(r, j)] = -qr;
            data[(d + r, j)] = ch * qr;
            data[(2 * d + r, j)] = c(0.0, 0.0);
            data[(3 * d + r, j)] = mu2 * ell * shc * qr;
            // sinh-type: u(a) = 0, u'(a) = q, u(b) = ℓ·sinhc·q, u'(b) = cosh·q
            data[(r, d + j)] = c(0.0, 0.0);
            data[(d + r, d + j)] = ell * shc * qr;
            data[(2 * d + r, d + j)] = qr;
            data[(3 * d + r, d + j)] = ch * qr;
        }
    }
    data
}

fn apply_condition(w: &BoundaryUnitary, data: &CMat) -> CMat {
    let n = w.matrix().nrows();
    let e = CMat::identity(n, n);
    let g1 = data.rows(0, n);
    let g2 = data.rows(n, n);
    (w.matrix() - &e) * g1 + (w.matrix() + &e) * g2 * I
}

fn check_dims(block: &Block, w: &BoundaryUnitary) -> Result<()> {
    if block.dim() != w.dim() {
        return Err(OpError::Shape(format!(
            "block {} has d = {}, boundary operator has d = {}",
            block.index,
            block.dim(),
            w.dim()
        )));
    }
    Ok(())
}

/// `M(λ) = (W − E)Γ₁(λ) + i(W + E)Γ₂(λ)`
pub fn characteristic_matrix(block: &Block, w: &BoundaryUnitary, lambda: Complex64) -> Result<CMat> {
    check_dims(block, w)?;
    Ok(apply_condition(w, &cauchy_data(block, lambda)))
}

/// Characteristic function normalized by the boundary-data column norms of
/// the fundamental system: `det M(λ) / Π_k ‖[γ₁; γ₂]_k‖`. Its modulus is
/// invariant under rescaling the fundamental solutions.
pub fn normalized_determinant(block: &Block, w: &BoundaryUnitary, lambda: Complex64) -> Result<Complex64> {
    check_dims(block, w)?;
    Ok(normalized_det_unchecked(block, w, lambda))
}

fn normalized_det_unchecked(block: &Block, w: &BoundaryUnitary, lambda: Complex64) -> Complex64 {
    let data = cauchy_data(block, lambda);
    normalized_det_from_data(w, &data)
}

fn normalized_det_from_data(w: &BoundaryUnitary, data: &CMat) -> Complex64 {
    let scale: f64 = data.column_iter().map(|col| col.norm()).product();
    linalg::determinant(&apply_condition(w, data)) / scale
}

/// `M(λ)` with unit-norm fundamental boundary data, used for rank decisions.
fn normalized_matrix(block: &Block, w: &BoundaryUnitary, lambda: Complex64) -> CMat {
    let mut data = cauchy_data(block, lambda);
    for mut col in data.column_iter_mut() {
        let n = col.norm();
        col /= c(n, 0.0);
    }
    apply_condition(w, &data)
}

pub const NEWTON_MAX_ITER: usize = 50;
pub const DEDUP_RADIUS: f64 = 1e-6;
pub const RANK_TOL: f64 = 1e-8;

struct NewtonOutcome {
    root: Complex64,
    residual: f64,
}

/// Newton iteration with a central-difference derivative. When successive
/// steps shrink at a steady linear rate `r`, the root is treated as having
/// order `p = 1/(1 − r)` and steps are scaled by `p` to restore quadratic
/// convergence.
fn newton(f: &impl Fn(Complex64) -> Complex64, seed: Complex64, dim: usize) -> Option<NewtonOutcome> {
    let mut z = seed;
    let mut prev_step: Option<Complex64> = None;
    let mut order = 1.0;
    let mut stable_rate = 0usize;
    for _ in 0..NEWTON_MAX_ITER {
        let fz = f(z);
        if !fz.re.is_finite() || !fz.im.is_finite() {
            return None;
        }
        if fz.norm() == 0.0 {
            return Some(NewtonOutcome { root: z, residual: 0.0 });
        }
        let hd = 1e-7 * (1.0 + z.norm());
        let dfz = (f(z + hd) - f(z - hd)) / (2.0 * hd);
        if dfz.norm() == 0.0 || !dfz.re.is_finite() {
            return None;
        }
        let step = fz / dfz;
        if let Some(prev) = prev_step {
            let ratio = step / prev;
            let r = ratio.norm();
            if order == 1.0 && ratio.re > 0.0 && ratio.im.abs() < 0.1 * r && (0.3..0.95).contains(&r) {
                stable_rate += 1;
                if stable_rate >= 2 {
                    order = (1.0 / (1.0 - r)).round().clamp(1.0, (2 * dim) as f64);
                }
            } else {
                stable_rate = 0;
            }
        }
        prev_step = Some(step);
        let delta = step * order;
        z -= delta;
        if delta.norm() <= 1e-14 * (1.0 + z.norm()) {
            let residual = f(z).norm();
            return Some(NewtonOutcome { root: z, residual });
        }
    }
    None
}

/// Scans `region` for zeros of the normalized characteristic function,
/// refines each local minimum of `|f|` on the scan lattice by Newton, and
/// keeps converged roots inside the region whose residual is at most `tol`.
/// Roots closer than `1e−6` are merged; multiplicity is the rank
/// deficiency of the normalized `M(λ)`.
pub fn det_root_search(block: &Block, w: &BoundaryUnitary, region: &SearchRegion, tol: f64) -> Result<Vec<Eigenvalue>> {
    check_dims(block, w)?;
    if !(tol > 0.0) {
        return Err(OpError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let (nr, ni) = (region.scan_re, region.scan_im);
    let f = |z: Complex64| normalized_det_unchecked(block, w, z);
    let grid: Vec<f64> = (0..nr * ni)
        .into_par_iter()
        .map(|idx| f(region.node(idx / ni, idx % ni)).norm())
        .collect();
    let at = |i: usize, j: usize| grid[i * ni + j];
    let mut seeds = Vec::new();
    for i in 0..nr {
        for j in 0..ni {
            let v = at(i, j);
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || ii < 0 || jj < 0 || ii >= nr as i64 || jj >= ni as i64 {
                        continue;
                    }
                    if at(ii as usize, jj as usize) < v {
                        is_min = false;
                    }
                }
            }
            if is_min {
                seeds.push(region.node(i, j));
            }
        }
    }
    let dim = block.dim();
    let mut roots: Vec<NewtonOutcome> = seeds
        .par_iter()
        .filter_map(|&s| newton(&f, s, dim))
        .filter(|o| o.residual <= tol && region.contains(o.root, 1e-9 * (1.0 + o.root.norm())))
        .collect();
    roots.sort_by(|a, b| linalg::cmp_complex(&a.root, &b.root));

    let mut clusters: Vec<NewtonOutcome> = Vec::new();
    for r in roots {
        match clusters.iter_mut().find(|c| (c.root - r.root).norm() <= DEDUP_RADIUS) {
            Some(existing) => {
                if r.residual < existing.residual {
                    *existing = r;
                }
            }
            None => clusters.push(r),
        }
    }

    let admissible = crate::boundary::admissibility_check(w, &block.coefficient)?.admissible;
    let mut out: Vec<Eigenvalue> = clusters
        .into_iter()
        .map(|r| {
            let sv = linalg::singular_values(&normalized_matrix(block, w, r.root));
            // For unitary W every singular value of [W − E, i(W + E)] equals 2.
            let deficiency = sv.iter().filter(|&&s| s <= RANK_TOL * 2.0).count();
            let mut ev = Eigenvalue::new(r.root, block.index, deficiency.max(1), r.residual, Engine::Analytic);
            ev.admissible = admissible;
            ev
        })
        .collect();
    sort_eigenvalues(&mut out);
    Ok(out)
}

/// Closed-form spectra of the canonical extensions.
///
/// * periodic: `(2πk/ℓ)² + iα_j`, `k = 0..k_max`, multiplicity 2 for `k ≥ 1`
/// * dirichlet: `(πk/ℓ)² + iα_j`, `k = 1..k_max`
/// * neumann: `(πk/ℓ)² + iα_j`, `k = 0..k_max`
///
/// Repeated coefficient eigenvalues add their multiplicities.
pub fn analytic_spectrum(kind: BoundaryKind, block: &Block, k_max: usize) -> Result<Vec<Eigenvalue>> {
    let ell = block.interval.length();
    let (freq, k_start) = match kind {
        BoundaryKind::Periodic => (2.0 * PI / ell, 0),
        BoundaryKind::Dirichlet => (PI / ell, 1),
        BoundaryKind::Neumann => (PI / ell, 0),
        BoundaryKind::Custom => return Err(OpError::UnknownKind("custom has no closed-form spectrum".into())),
    };
    let mut out: Vec<Eigenvalue> = Vec::new();
    for &alpha in block.coefficient.eigenvalues() {
        for k in k_start..=k_max {
            let lambda = c((freq * k as f64).powi(2), alpha);
            let mult = if kind == BoundaryKind::Periodic && k >= 1 { 2 } else { 1 };
            match out.iter_mut().find(|e| (e.lambda - lambda).norm() <= 1e-12 * (1.0 + lambda.norm())) {
                Some(e) => e.multiplicity += mult,
                None => out.push(Eigenvalue::new(lambda, block.index, mult, 0.0, Engine::Analytic)),
            }
        }
    }
    sort_eigenvalues(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::canonical_unitary;
    use crate::hilbert::{CoefficientMatrix, Interval};

    fn block(diag: &[f64]) -> Block {
        Block::new(1, Interval::new(0.0, 1.0).unwrap(), CoefficientMatrix::from_real_diagonal(diag).unwrap())
    }

    fn values(ev: &[Eigenvalue]) -> Vec<Complex64> {
        ev.iter().map(|e| e.lambda).collect()
    }

    #[test]
    fn characteristic_matrix_examples() {
        let b1 = block(&[1.0]);
        let dir = canonical_unitary(BoundaryKind::Dirichlet, 1).unwrap();
        let f = normalized_determinant(&b1, &dir, c(PI * PI, 1.0)).unwrap();
        assert!(f.norm() <= 1e-10, "{f}");
        let f = normalized_determinant(&b1, &dir, c(1.0, 1.0)).unwrap();
        assert!(f.norm() > 1e-3, "{f}");
        // Closed form for Dirichlet: det M = 4·(−sinh(μℓ)/μ).
        let m = characteristic_matrix(&b1, &dir, c(1.0, 1.0)).unwrap();
        let expect = -4.0 * (1.0f64).sin();
        assert!((linalg::determinant(&m) - c(expect, 0.0)).norm() < 1e-12);

        let b2 = block(&[2.0]);
        let per = canonical_unitary(BoundaryKind::Periodic, 1).unwrap();
        assert!(normalized_determinant(&b2, &per, c(0.0, 2.0)).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn degenerate_mu_is_continuous() {
        let b = block(&[2.0]);
        let per = canonical_unitary(BoundaryKind::Neumann, 1).unwrap();
        let at = normalized_determinant(&b, &per, c(0.0, 2.0)).unwrap();
        let near = normalized_determinant(&b, &per, c(1e-9, 2.0)).unwrap();
        assert!(at.norm() < 1e-14 && near.norm() < 1e-8);
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let b = block(&[1.0, 3.0]);
        let per = canonical_unitary(BoundaryKind::Periodic, 2).unwrap();
        let z = c(5.0, 1.7);
        let data = cauchy_data(&b, z);
        let mut scaled = data.clone();
        scaled.column_mut(0).scale_mut(7.5);
        scaled.column_mut(3).scale_mut(1e-3);
        let mut rotated = scaled.clone();
        rotated.column_mut(1).iter_mut().for_each(|x| *x *= c(0.0, 2.0));
        let f0 = normalized_det_from_data(&per, &data).norm();
        assert!((normalized_det_from_data(&per, &scaled).norm() - f0).abs() < 1e-14);
        assert!((normalized_det_from_data(&per, &rotated).norm() - f0).abs() < 1e-14);
    }

    #[test]
    fn root_search_dirichlet() {
        let b = block(&[1.0]);
        let w = canonical_unitary(BoundaryKind::Dirichlet, 1).unwrap();
        let region = SearchRegion::with_default_scan((0.0, 50.0), (0.0, 2.0)).unwrap();
        let found = det_root_search(&b, &w, &region, 1e-10).unwrap();
        let expect = [c(PI * PI, 1.0), c(4.0 * PI * PI, 1.0)];
        assert_eq!(found.len(), 2, "{:?}", values(&found));
        for (e, x) in found.iter().zip(expect) {
            assert!((e.lambda - x).norm() < 1e-8, "{} vs {}", e.lambda, x);
            assert_eq!(e.multiplicity, 1);
        }
    }

    #[test]
    fn root_search_periodic_region_without_roots() {
        let b = block(&[2.0]);
        let w = canonical_unitary(BoundaryKind::Periodic, 1).unwrap();
        let region = SearchRegion::with_default_scan((1.0, 30.0), (1.0, 3.0)).unwrap();
        assert!(det_root_search(&b, &w, &region, 1e-10).unwrap().is_empty());
        let low = SearchRegion::with_default_scan((0.0, 1.0), (0.0, 0.5)).unwrap();
        for kind in [BoundaryKind::Periodic, BoundaryKind::Dirichlet, BoundaryKind::Neumann] {
            let w = canonical_unitary(kind, 2).unwrap();
            assert!(det_root_search(&block(&[1.0, 2.0]), &w, &low, 1e-10).unwrap().is_empty());
        }
    }

    #[test]
    fn root_search_finds_double_periodic_root() {
        let b = block(&[2.0]);
        let w = canonical_unitary(BoundaryKind::Periodic, 1).unwrap();
        let region = SearchRegion::with_default_scan((0.0, 50.0), (0.0, 3.0)).unwrap();
        let found = det_root_search(&b, &w, &region, 1e-10).unwrap();
        assert_eq!(found.len(), 2, "{:?}", values(&found));
        assert!((found[0].lambda - c(0.0, 2.0)).norm() < 1e-8 && found[0].multiplicity == 1);
        assert!((found[1].lambda - c(4.0 * PI * PI, 2.0)).norm() < 1e-8, "{}", found[1].lambda);
        assert_eq!(found[1].multiplicity, 2);
    }

    #[test]
    fn analytic_spectrum_examples() {
        let per = analytic_spectrum(BoundaryKind::Periodic, &block(&[2.0]), 1).unwrap();
        assert_eq!(values(&per), vec![c(0.0, 2.0), c(4.0 * PI * PI, 2.0)]);
        assert_eq!(per.iter().map(|e| e.multiplicity).collect::<Vec<_>>(), vec![1, 2]);
        let dir = analytic_spectrum(BoundaryKind::Dirichlet, &block(&[1.0]), 2).unwrap();
        assert_eq!(values(&dir), vec![c(PI * PI, 1.0), c(4.0 * PI * PI, 1.0)]);
        let neu = analytic_spectrum(BoundaryKind::Neumann, &block(&[1.0, 2.0]), 0).unwrap();
        assert_eq!(values(&neu), vec![c(0.0, 1.0), c(0.0, 2.0)]);
        let rep = analytic_spectrum(BoundaryKind::Neumann, &block(&[2.0, 2.0]), 0).unwrap();
        assert_eq!(rep.len(), 1);
        assert_eq!(rep[0].multiplicity, 2);
    }

    #[test]
    fn region_validation() {
        assert!(SearchRegion::new((1.0, 0.0), (0.0, 1.0), (10, 10)).is_err());
        assert!(SearchRegion::new((0.0, 1.0), (0.0, 1.0), (4, 10)).is_err());
    }
}
