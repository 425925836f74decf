//! Truncated direct sums of blocks: problem validation, union of per-block
//! spectra, block projection, and series diagnostics.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{det_root_search, sort_eigenvalues, Eigenvalue, SearchRegion};
use crate::boundary::{admissibility_check, Admissibility, BoundaryUnitary};
use crate::discrete::{self, least_squares_slope};
use crate::error::{OpError, Result};
use crate::hilbert::{self, Block, CoefficientMatrix, GridFunction, Interval};

pub const MERGE_TOL: f64 = 1e-8;
pub const DIVERGENCE_EXPONENT: f64 = 0.9;
pub const QUADRATURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MultipointProblem {
    blocks: Vec<Block>,
    extensions: Vec<BoundaryUnitary>,
    admissibility: Vec<Admissibility>,
}

impl MultipointProblem {
    /// Blocks must be ordered with `b_n ≤ a_{n+1}`, and each `W_n` must act
    /// on `𝔥 = H ⊕ H` of the block's dimension.
    pub fn new(blocks: Vec<Block>, extensions: Vec<BoundaryUnitary>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(OpError::Invalid("a problem needs at least one block".into()));
        }
        if blocks.len() != extensions.len() {
            return Err(OpError::Shape(format!("{} blocks but {} boundary operators", blocks.len(), extensions.len())));
        }
        for (n, pair) in blocks.windows(2).enumerate() {
            if pair[1].interval.a() < pair[0].interval.b() {
                return Err(OpError::Ordering {
                    index: n + 2,
                    start: pair[1].interval.a(),
                    prev_end: pair[0].interval.b(),
                });
            }
        }
        let admissibility = blocks
            .iter()
            .zip(&extensions)
            .map(|(b, w)| admissibility_check(w, &b.coefficient))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            blocks,
            extensions,
            admissibility,
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn extensions(&self) -> &[BoundaryUnitary] {
        &self.extensions
    }

    pub fn admissibility(&self) -> &[Admissibility] {
        &self.admissibility
    }

    /// True iff every `(W_n, A_n)` pair is admissible.
    pub fn is_normal(&self) -> bool {
        self.admissibility.iter().all(|a| a.admissible)
    }

    /// Per-block characteristic-determinant roots, blocks in parallel.
    pub fn analytic_spectra(&self, region: &SearchRegion, tol: f64) -> Result<Vec<Vec<Eigenvalue>>> {
        self.blocks
            .par_iter()
            .zip(self.extensions.par_iter())
            .map(|(b, w)| det_root_search(b, w, region, tol))
            .collect()
    }

    /// Per-block spectra of the `m`-node discretization, blocks in parallel.
    pub fn discrete_spectra(&self, m: usize, cap: usize) -> Result<Vec<discrete::DiscreteSpectrum>> {
        self.blocks
            .par_iter()
            .zip(self.extensions.par_iter())
            .map(|(b, w)| {
                let size = discrete::discretized_size(b, w, m)?;
                if size > cap {
                    return Err(OpError::SizeCap { size, cap });
                }
                let op = discrete::discretize(b, w, m)?;
                let mut spec = discrete::eigen_with_cap(&op, cap)?;
                for e in &mut spec.eigenvalues {
                    e.admissible = admissibility_check(w, &b.coefficient)?.admissible;
                }
                Ok(spec)
            })
            .collect()
    }
}

/// Union of per-block spectra. Values within [`MERGE_TOL`] of each other
/// are merged, multiplicities summed and contributing blocks recorded.
pub fn aggregate_spectrum(per_block: &[Vec<Eigenvalue>]) -> Vec<Eigenvalue> {
    let mut all: Vec<Eigenvalue> = per_block.iter().flatten().cloned().collect();
    sort_eigenvalues(&mut all);
    let mut out: Vec<Eigenvalue> = Vec::new();
    for e in all {
        match out.iter_mut().find(|o| (o.lambda - e.lambda).norm() <= MERGE_TOL) {
            Some(o) => {
                o.multiplicity += e.multiplicity;
                o.residual = o.residual.max(e.residual);
                o.admissible &= e.admissible;
                for b in e.blocks {
                    if !o.blocks.contains(&b) {
                        o.blocks.push(b);
                    }
                }
                o.blocks.sort_unstable();
            }
            None => out.push(e),
        }
    }
    sort_eigenvalues(&mut out);
    out
}

/// Extension data of block `n` (1-based).
pub fn project_block(problem: &MultipointProblem, n: usize) -> Result<(Block, BoundaryUnitary)> {
    if n == 0 || n > problem.len() {
        return Err(OpError::IndexOutOfRange { index: n, count: problem.len() });
    }
    Ok((problem.blocks[n - 1].clone(), problem.extensions[n - 1].clone()))
}

/// `u_n(t) = c_n sin²(nπ(t − a_n)/ℓ_n) f_n` on consecutive blocks, with
/// `α_n = n^alpha_exponent`, `c_n = (4/(3ℓ_n))^{1/2}·n^c_exponent` and
/// `f_n = α_n e_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSpec {
    pub n: usize,
    /// Block lengths; a single entry applies to every block.
    pub lengths: Vec<f64>,
    pub alpha_exponent: f64,
    pub c_exponent: f64,
    pub dim: usize,
}

impl CounterexampleSpec {
    /// `α_n = 1/n` and `c_n = (4/(3ℓ_n))^{1/2}/α_n` on unit blocks.
    pub fn standard(n: usize) -> Self {
        Self {
            n,
            lengths: vec![1.0],
            alpha_exponent: -1.0,
            c_exponent: 1.0,
            dim: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 {
            return Err(OpError::Invalid("counterexample needs N ≥ 1 and d ≥ 1".into()));
        }
        if self.lengths.is_empty() || (self.lengths.len() != 1 && self.lengths.len() != self.n) {
            return Err(OpError::Shape(format!("expected 1 or {} block lengths, got {}", self.n, self.lengths.len())));
        }
        if self.lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(OpError::Invalid("block lengths must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn length(&self, n: usize) -> f64 {
        if self.lengths.len() == 1 {
            self.lengths[0]
        } else {
            self.lengths[n - 1]
        }
    }

    pub fn alpha(&self, n: usize) -> f64 {
        (n as f64).powf(self.alpha_exponent)
    }

    pub fn c(&self, n: usize) -> f64 {
        (4.0 / (3.0 * self.length(n))).sqrt() * (n as f64).powf(self.c_exponent)
    }

    /// Block `n` (1-based), placed right after block `n − 1`, with `A = E`.
    pub fn block(&self, n: usize) -> Result<Block> {
        self.validate()?;
        if n == 0 || n > self.n {
            return Err(OpError::IndexOutOfRange { index: n, count: self.n });
        }
        let a: f64 = (1..n).map(|k| self.length(k)).sum();
        Ok(Block::new(n, Interval::new(a, a + self.length(n))?, CoefficientMatrix::scalar(1.0, self.dim)?))
    }

    /// `u_n` sampled on `m` nodes of block `n`.
    pub fn block_function(&self, n: usize, m: usize) -> Result<GridFunction> {
        let block = self.block(n)?;
        let (a, ell) = (block.interval.a(), block.interval.length());
        let amp = self.c(n) * self.alpha(n);
        let d = self.dim;
        block.sample(m, |t| {
            let mut v = vec![Complex64::new(0.0, 0.0); d];
            v[0] = Complex64::new(amp * (n as f64 * std::f64::consts::PI * (t - a) / ell).sin().powi(2), 0.0);
            v
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleNorms {
    /// Closed form `(3/4)·α_n²·c_n²·ℓ_n`.
    pub per_block: Vec<f64>,
    pub partial_sum: f64,
    /// Trapezoid quadrature of `‖u_n‖²`, exact for this trigonometric polynomial.
    pub quadrature: Vec<f64>,
    /// max_n |quadrature_n − per_block_n| / per_block_n
    pub max_relative_discrepancy: f64,
    pub consistent: bool,
}

/// Per-block squared norms of the counterexample and their partial sum.
pub fn counterexample_norms(spec: &CounterexampleSpec) -> Result<CounterexampleNorms> {
    spec.validate()?;
    let per_block: Vec<f64> = (1..=spec.n)
        .map(|n| 0.75 * spec.alpha(n).powi(2) * spec.c(n).powi(2) * spec.length(n))
        .collect();
    let partial_sum = per_block.iter().sum();
    let quadrature = (1..=spec.n)
        .map(|n| spec.block_function(n, 16 * n + 1).map(|u| hilbert::norm_sqr(&u)))
        .collect::<Result<Vec<_>>>()?;
    let max_relative_discrepancy = per_block
        .iter()
        .zip(&quadrature)
        .map(|(p, q)| (q - p).abs() / p)
        .fold(0.0, f64::max);
    Ok(CounterexampleNorms {
        per_block,
        partial_sum,
        quadrature,
        max_relative_discrepancy,
        consistent: max_relative_discrepancy <= QUADRATURE_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBound {
    pub sup_norm: f64,
    pub bounded: bool,
}

/// `sup_n ‖A_n‖` over the retained blocks, compared with `c`.
pub fn bounded_coefficient_check(problem: &MultipointProblem, c: f64) -> CoefficientBound {
    let sup_norm = problem
        .blocks
        .iter()
        .map(|b| b.coefficient.spectral_norm())
        .fold(0.0, f64::max);
    CoefficientBound {
        sup_norm,
        bounded: sup_norm <= c * (1.0 + 1e-12),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    /// (N, Σ_{n ≤ N} norm_n)
    pub partial_sums: Vec<(usize, f64)>,
    /// Log-log slope of the partial sums against N.
    pub exponent: f64,
    pub divergent: bool,
}

/// Growth of the partial sums of a truncated norm sequence.
pub fn direct_sum_membership(norms: &[f64], n_list: &[usize]) -> Result<MembershipReport> {
    if norms.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(OpError::Invalid("norm sequence must be nonnegative and finite".into()));
    }
    if n_list.len() < 2 {
        return Err(OpError::Invalid("need at least two truncation levels".into()));
    }
    if let Some(&n) = n_list.iter().find(|&&n| n == 0 || n > norms.len()) {
        return Err(OpError::IndexOutOfRange { index: n, count: norms.len() });
    }
    let mut prefix = Vec::with_capacity(norms.len() + 1);
    prefix.push(0.0);
    for x in norms {
        prefix.push(prefix.last().unwrap() + x);
    }
    let partial_sums: Vec<(usize, f64)> = n_list.iter().map(|&n| (n, prefix[n])).collect();
    let pts: Vec<(f64, f64)> = partial_sums
        .iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|&(n, s)| ((n as f64).ln(), s.ln()))
        .collect();
    let exponent = if pts.len() >= 2 { least_squares_slope(&pts) } else { 0.0 };
    Ok(MembershipReport {
        partial_sums,
        exponent,
        divergent: exponent >= DIVERGENCE_EXPONENT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{analytic_spectrum, Engine};
    use crate::boundary::{canonical_unitary, BoundaryKind};
    use crate::linalg::{c, CMat};
    use std::f64::consts::PI;

    fn ev(lambda: Complex64, block: usize) -> Eigenvalue {
        Eigenvalue::new(lambda, block, 1, 0.0, Engine::Analytic)
    }

    fn unit_block(index: usize, a: f64, diag: &[f64]) -> Block {
        Block::new(index, Interval::new(a, a + 1.0).unwrap(), CoefficientMatrix::from_real_diagonal(diag).unwrap())
    }

    fn problem(kinds: &[BoundaryKind], diag: &[f64]) -> MultipointProblem {
        let blocks = (0..kinds.len()).map(|n| unit_block(n + 1, n as f64, diag)).collect();
        let ws = kinds.iter().map(|&k| canonical_unitary(k, diag.len()).unwrap()).collect();
        MultipointProblem::new(blocks, ws).unwrap()
    }

    #[test]
    fn union_examples() {
        let got = aggregate_spectrum(&[vec![ev(c(0.0, 1.0), 1), ev(c(4.0 * PI * PI, 1.0), 1)], vec![ev(c(0.0, 2.0), 2)]]);
        let lambdas: Vec<Complex64> = got.iter().map(|e| e.lambda).collect();
        assert_eq!(lambdas, vec![c(0.0, 1.0), c(0.0, 2.0), c(4.0 * PI * PI, 1.0)]);

        let got = aggregate_spectrum(&[vec![ev(c(0.0, 1.0), 1)], vec![ev(c(0.0, 1.0), 2)]]);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].multiplicity, 2);
        assert_eq!(got[0].blocks, vec![1, 2]);
    }

    #[test]
    fn union_of_identical_periodic_blocks() {
        let per_block: Vec<Vec<Eigenvalue>> = (1..=3)
            .map(|n| analytic_spectrum(BoundaryKind::Periodic, &unit_block(n, n as f64, &[2.0]), 1).unwrap())
            .collect();
        let got = aggregate_spectrum(&per_block);
        assert_eq!(got.len(), 2);
        assert_eq!((got[0].lambda, got[0].multiplicity), (c(0.0, 2.0), 3));
        assert!((got[1].lambda - c(4.0 * PI * PI, 2.0)).norm() < 1e-12);
        assert_eq!(got[1].multiplicity, 6);
        assert_eq!(got[1].blocks, vec![1, 2, 3]);
    }

    #[test]
    fn ordering_is_enforced() {
        let blocks = vec![unit_block(1, 0.0, &[1.0]), unit_block(2, 0.5, &[1.0])];
        let ws = vec![canonical_unitary(BoundaryKind::Dirichlet, 1).unwrap(); 2];
        assert!(matches!(MultipointProblem::new(blocks, ws), Err(OpError::Ordering { index: 2, .. })));
    }

    #[test]
    fn non_admissible_pair_clears_normal_flag() {
        let mut w = CMat::identity(4, 4);
        w[(0, 0)] = c(0.0, 0.0);
        w[(1, 1)] = c(0.0, 0.0);
        w[(0, 1)] = c(1.0, 0.0);
        w[(1, 0)] = c(1.0, 0.0);
        let blocks = vec![unit_block(1, 0.0, &[1.0, 4.0]), unit_block(2, 1.0, &[1.0, 4.0])];
        let ws = vec![canonical_unitary(BoundaryKind::Periodic, 2).unwrap(), BoundaryUnitary::custom(w).unwrap()];
        let p = MultipointProblem::new(blocks, ws).unwrap();
        assert!(!p.is_normal());
        assert!(p.admissibility()[0].admissible);
    }

    #[test]
    fn projection_examples() {
        let p = problem(&[BoundaryKind::Periodic; 3], &[1.0, 2.0]);
        assert!(p.is_normal());
        let (b, w) = project_block(&p, 2).unwrap();
        assert_eq!(b.index, 2);
        assert_eq!(w.kind(), BoundaryKind::Periodic);
        assert!(discrete::normality_residual(&discrete::discretize(&b, &w, 201).unwrap()) <= 1e-12);
        assert!(matches!(project_block(&p, 4), Err(OpError::IndexOutOfRange { index: 4, count: 3 })));
        assert!(project_block(&p, 0).is_err());

        let mixed = problem(&[BoundaryKind::Periodic, BoundaryKind::Dirichlet, BoundaryKind::Neumann], &[1.0, 2.0]);
        for n in 1..=3 {
            let (b, w) = project_block(&mixed, n).unwrap();
            assert!(discrete::normality_residual(&discrete::discretize(&b, &w, 201).unwrap()) <= 1e-12);
        }
    }

    #[test]
    fn counterexample_closed_form() {
        let spec = CounterexampleSpec::standard(5);
        let norms = counterexample_norms(&spec).unwrap();
        for p in &norms.per_block {
            assert!((p - 1.0).abs() <= 1e-12);
        }
        assert!((norms.partial_sum - 5.0).abs() <= 1e-12);
        for n in 1..=5 {
            let u = spec.block_function(n, 2001).unwrap();
            assert!(hilbert::minimal_domain_test(&u, 1e-6), "block {n}");
        }
        let summable = CounterexampleSpec {
            alpha_exponent: -2.0,
            ..CounterexampleSpec::standard(50)
        };
        let norms = counterexample_norms(&summable).unwrap();
        for (n, p) in norms.per_block.iter().enumerate() {
            let k = (n + 1) as f64;
            assert!((p - 1.0 / (k * k)).abs() <= 1e-12);
        }
        assert!(norms.partial_sum < PI * PI / 6.0);
    }

    #[test]
    fn counterexample_quadrature_is_three_eighths() {
        // ∫ sin⁴ over whole periods is 3/8 of the length.
        let norms = counterexample_norms(&CounterexampleSpec::standard(20)).unwrap();
        for q in &norms.quadrature {
            assert!((q - 0.5).abs() <= 1e-12, "{q}");
        }
        assert!(!norms.consistent);
    }

    #[test]
    fn counterexample_blocks_are_consecutive() {
        let spec = CounterexampleSpec {
            lengths: vec![1.0, 0.5, 2.0],
            ..CounterexampleSpec::standard(3)
        };
        let b3 = spec.block(3).unwrap();
        assert_eq!((b3.interval.a(), b3.interval.b()), (1.5, 3.5));
        for p in counterexample_norms(&spec).unwrap().per_block {
            assert!((p - 1.0).abs() <= 1e-12);
        }
        assert!(counterexample_norms(&CounterexampleSpec { n: 0, ..spec.clone() }).is_err());
        assert!(counterexample_norms(&CounterexampleSpec { lengths: vec![1.0, 1.0], ..spec }).is_err());
    }

    #[test]
    fn coefficient_bounds() {
        let p = problem(&[BoundaryKind::Dirichlet; 3], &[1.0, 2.0]);
        assert_eq!(bounded_coefficient_check(&p, 2.0), CoefficientBound { sup_norm: 2.0, bounded: true });

        let blocks: Vec<Block> = (1..=10)
            .map(|n| Block::new(n, Interval::new(n as f64, n as f64 + 1.0).unwrap(), CoefficientMatrix::scalar(n as f64, 1).unwrap()))
            .collect();
        let ws = vec![canonical_unitary(BoundaryKind::Dirichlet, 1).unwrap(); 10];
        let p = MultipointProblem::new(blocks, ws).unwrap();
        let r = bounded_coefficient_check(&p, 5.0);
        assert!((r.sup_norm - 10.0).abs() < 1e-12 && !r.bounded);

        let blocks = vec![unit_block(1, 0.0, &[1.0, 4.5]), unit_block(2, 1.0, &[2.0, 3.0])];
        let ws = vec![canonical_unitary(BoundaryKind::Neumann, 2).unwrap(); 2];
        let r = bounded_coefficient_check(&MultipointProblem::new(blocks, ws).unwrap(), 4.0);
        assert!((r.sup_norm - 4.5).abs() < 1e-12 && !r.bounded);
    }

    #[test]
    fn membership_examples() {
        let n_list = [10, 20, 40, 80, 160];
        let ones = counterexample_norms(&CounterexampleSpec::standard(160)).unwrap().per_block;
        let r = direct_sum_membership(&ones, &n_list).unwrap();
        assert!((r.exponent - 1.0).abs() <= 0.05 && r.divergent);
        for &(n, s) in &r.partial_sums {
            assert!((s - n as f64).abs() < 1e-9);
        }
        let squares: Vec<f64> = (1..=160).map(|n| 1.0 / (n * n) as f64).collect();
        let r = direct_sum_membership(&squares, &n_list).unwrap();
        assert!(!r.divergent);
        assert!((r.partial_sums.last().unwrap().1 - PI * PI / 6.0).abs() < 1e-2);
        let r = direct_sum_membership(&[0.0; 20], &[5, 10, 20]).unwrap();
        assert!(!r.divergent && r.partial_sums.iter().all(|p| p.1 == 0.0));
        assert!(direct_sum_membership(&[1.0, -1.0], &[1, 2]).is_err());
        assert!(direct_sum_membership(&[1.0], &[1, 2]).is_err());
    }
}
