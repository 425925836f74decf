//! JSON problem configuration.
//!
//! ```json
//! {
//!   "schema_version": "1",
//!   "blocks": [
//!     { "interval": [0, 1],
//!       "A": { "re": [[2]], "im": [[0]] },
//!       "W": { "kind": "periodic" } }
//!   ],
//!   "grid": { "m": 101 },
//!   "search": { "re": [0, 50], "im": [0, 3], "scan": [40, 20] },
//!   "tolerances": { "root": 1e-8 }
//! }
//! ```
//!
//! Complex matrices are given as separate real and imaginary parts; `im`
//! may be omitted. A custom boundary operator uses
//! `{"kind": "matrix", "re": ..., "im": ...}`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::analytic::{SearchRegion, DEFAULT_SCAN};
use crate::boundary::{canonical_unitary, BoundaryKind, BoundaryUnitary};
use crate::directsum::MultipointProblem;
use crate::error::OpError;
use crate::hilbert::{Block, CoefficientMatrix, Interval};
use crate::linalg::{c, CMat};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
}

fn invalid(location: impl Into<String>, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        location: location.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub kind: String,
    #[serde(default)]
    pub re: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub interval: [f64; 2],
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    #[serde(rename = "W")]
    pub w: BoundarySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub m: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { m: 101 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub re: [f64; 2],
    pub im: [f64; 2],
    #[serde(default = "default_scan")]
    pub scan: [usize; 2],
}

fn default_scan() -> [usize; 2] {
    [DEFAULT_SCAN.0, DEFAULT_SCAN.1]
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            re: [0.0, 50.0],
            im: [0.0, 3.0],
            scan: default_scan(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Residual bound for accepting a characteristic-determinant root.
    pub root: f64,
    /// Bound on the discrete normality residual.
    pub normality: f64,
    /// Bound on the relative gap in `‖l(u)‖² = ‖l⁺(u)‖²`.
    pub identity: f64,
    pub identity_samples: usize,
    pub identity_m: usize,
    pub eigen_cap: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root: 1e-8,
            normality: 1e-12,
            identity: 1e-4,
            identity_samples: 20,
            identity_m: 401,
            eigen_cap: crate::discrete::DEFAULT_SIZE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: String,
    pub blocks: Vec<BlockSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub search: SearchSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    pub problem: MultipointProblem,
    pub region: SearchRegion,
}

fn complex_matrix(location: &str, re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> Result<CMat, ConfigError> {
    let n = re.len();
    if n == 0 || re.iter().any(|row| row.len() != n) {
        return Err(invalid(location, "re must be a non-empty square matrix"));
    }
    if let Some(im) = im {
        if im.len() != n || im.iter().any(|row| row.len() != n) {
            return Err(invalid(location, format!("im must be {n}x{n} like re")));
        }
    }
    Ok(CMat::from_fn(n, n, |i, j| c(re[i][j], im.map_or(0.0, |m| m[i][j]))))
}

fn boundary(location: &str, spec: &BoundarySpec, d: usize) -> Result<BoundaryUnitary, ConfigError> {
    match spec.kind.as_str() {
        "matrix" => {
            let re = spec.re.as_deref().ok_or_else(|| invalid(location, "kind \"matrix\" requires re"))?;
            let m = complex_matrix(location, re, spec.im.as_deref())?;
            if m.nrows() != 2 * d {
                return Err(invalid(location, format!("W must be {0}x{0} for d = {d}, got {1}x{1}", 2 * d, m.nrows())));
            }
            BoundaryUnitary::custom(m).map_err(|e| match e {
                OpError::NotUnitary { residual } => invalid(location, format!("W not unitary, residual ‖W*W − E‖_F = {residual:.3e}")),
                other => invalid(location, other),
            })
        }
        other => {
            let kind: BoundaryKind = other.parse().map_err(|e| invalid(format!("{location}.kind"), e))?;
            if spec.re.is_some() || spec.im.is_some() {
                return Err(invalid(location, format!("kind \"{other}\" takes no matrix entries")));
            }
            canonical_unitary(kind, d).map_err(|e| invalid(location, e))
        }
    }
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Checks every invariant and builds the problem.
    pub fn validate(self) -> Result<Problem, ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("unsupported version \"{}\" (expected \"{SCHEMA_VERSION}\")", self.schema_version)));
        }
        if self.blocks.is_empty() {
            return Err(invalid("blocks", "at least one block is required"));
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut ws = Vec::with_capacity(self.blocks.len());
        for (i, spec) in self.blocks.iter().enumerate() {
            let n = i + 1;
            let loc = format!("block {n}");
            let [a, b] = spec.interval;
            let interval = Interval::new(a, b).map_err(|e| invalid(format!("{loc}: interval"), e))?;
            let a_mat = complex_matrix(&format!("{loc}: A"), &spec.a.re, spec.a.im.as_deref())?;
            let coefficient = CoefficientMatrix::new(a_mat).map_err(|e| match e {
                OpError::NotHermitian { residual } => invalid(&loc, format!("A not Hermitian (relative asymmetry {residual:.3e})")),
                OpError::NotPositiveDefinite { min_eig } => invalid(&loc, format!("A not positive definite (smallest eigenvalue {min_eig:.3e})")),
                other => invalid(format!("{loc}: A"), other),
            })?;
            let d = coefficient.dim();
            ws.push(boundary(&format!("{loc}: W"), &spec.w, d)?);
            blocks.push(Block::new(n, interval, coefficient));
        }
        let problem = MultipointProblem::new(blocks, ws).map_err(|e| invalid("blocks", e))?;
        let s = self.search;
        let region = SearchRegion::new((s.re[0], s.re[1]), (s.im[0], s.im[1]), (s.scan[0], s.scan[1])).map_err(|e| invalid("search", e))?;
        if self.grid.m < crate::discrete::MIN_DISCRETE_NODES {
            return Err(invalid("grid.m", format!("need at least {} nodes, got {}", crate::discrete::MIN_DISCRETE_NODES, self.grid.m)));
        }
        let t = self.tolerances;
        let positive = [("root", t.root), ("normality", t.normality), ("identity", t.identity)];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid(format!("tolerances.{name}"), format!("must be positive, got {v}")));
        }
        if t.identity_samples == 0 || t.identity_m < crate::hilbert::MIN_NODES {
            return Err(invalid("tolerances", "identity_samples must be ≥ 1 and identity_m ≥ 5"));
        }
        Ok(Problem {
            config: self,
            problem,
            region,
        })
    }
}

pub fn parse_config(text: &str) -> Result<Problem, ConfigError> {
    ProblemConfig::from_json(text)?.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_block(a: &str, w: &str) -> String {
        format!(r#"{{"schema_version": "1", "blocks": [{{"interval": [0, 1], "A": {a}, "W": {w}}}]}}"#)
    }

    #[test]
    fn periodic_block_parses() {
        let p = parse_config(&one_block(r#"{"re": [[2]]}"#, r#"{"kind": "periodic"}"#)).unwrap();
        assert_eq!(p.problem.len(), 1);
        assert_eq!(p.problem.extensions()[0].kind(), BoundaryKind::Periodic);
        assert_eq!(p.config.grid.m, 101);
        assert!(p.problem.is_normal());
    }

    #[test]
    fn non_hermitian_a_is_located() {
        let err = parse_config(&one_block(r#"{"re": [[0, 1], [0, 0]]}"#, r#"{"kind": "dirichlet"}"#)).unwrap_err();
        assert!(err.to_string().starts_with("block 1: A not Hermitian"), "{err}");
    }

    #[test]
    fn non_unitary_w_reports_residual() {
        let err = parse_config(&one_block(r#"{"re": [[1]]}"#, r#"{"kind": "matrix", "re": [[0.5, 0], [0, 0.5]]}"#)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("block 1: W") && msg.contains("not unitary") && msg.contains("1.061e0"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = parse_config("{\n  \"schema_version\": \"1\",\n  \"blocks\": [\n}").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 4, .. }), "{err}");
    }

    #[test]
    fn other_validation_failures() {
        let bad_kind = parse_config(&one_block(r#"{"re": [[1]]}"#, r#"{"kind": "robin"}"#)).unwrap_err();
        assert!(bad_kind.to_string().contains("block 1: W.kind"));
        let indefinite = parse_config(&one_block(r#"{"re": [[-1]]}"#, r#"{"kind": "neumann"}"#)).unwrap_err();
        assert!(indefinite.to_string().contains("not positive definite"));
        let overlap = r#"{"schema_version": "1", "blocks": [
            {"interval": [0, 1], "A": {"re": [[1]]}, "W": {"kind": "dirichlet"}},
            {"interval": [0.5, 2], "A": {"re": [[1]]}, "W": {"kind": "dirichlet"}}]}"#;
        assert!(parse_config(overlap).unwrap_err().to_string().contains("block 2 starts at 0.5"));
        let wrong_size = parse_config(&one_block(r#"{"re": [[1]]}"#, r#"{"kind": "matrix", "re": [[1]]}"#)).unwrap_err();
        assert!(wrong_size.to_string().contains("must be 2x2"));
        let version = parse_config(r#"{"schema_version": "2", "blocks": []}"#).unwrap_err();
        assert!(version.to_string().contains("schema_version"));
    }

    #[test]
    fn complex_entries() {
        let text = one_block(r#"{"re": [[2, 0.5], [0.5, 3]], "im": [[0, -0.5], [0.5, 0]]}"#, r#"{"kind": "matrix", "re": [[0,0,1,0],[0,0,0,1],[1,0,0,0],[0,1,0,0]]}"#);
        let p = parse_config(&text).unwrap();
        assert_eq!(p.problem.blocks()[0].coefficient.matrix()[(0, 1)], c(0.5, -0.5));
        assert_eq!(p.problem.extensions()[0].kind(), BoundaryKind::Custom);
    }
}
