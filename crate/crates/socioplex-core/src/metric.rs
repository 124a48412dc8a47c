//! The weighted research distance between agents.
//!
//! Five categorical component distances (institution, field overlap, PhD
//! school, past collaboration, citation link) each score 0 for the same
//! agent, 1 for a match, 2 otherwise. The R-distance is their weighted sum
//! with nonnegative weights summing to 1, which makes it a genuine metric
//! with values in [0, 2].

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentRecord, AgentSet};

/// Number of component distances combined into the R-distance.
pub const FACTOR_COUNT: usize = 5;

/// Names of the five factors, in component order.
pub const FACTOR_NAMES: [&str; FACTOR_COUNT] =
    ["institution", "fields", "phd", "collaboration", "citation"];

/// Tolerance on the weight-sum invariant for programmatic construction.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Hand-typed weights within this tolerance of summing to 1 are renormalized.
pub const PARSE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("weight k{} is negative ({value})", index + 1)]
    Negative { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    SumOutOfRange { sum: f64 },
    #[error("expected {FACTOR_COUNT} comma-separated weights, found {found}")]
    Count { found: usize },
    #[error("unparseable weight {text:?}")]
    Unparseable { text: String },
}

/// The five factor weights; nonnegative, summing to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    k: [f64; FACTOR_COUNT],
}

impl Weights {
    /// Construct weights, enforcing the simplex invariant strictly
    /// (sum within [`SIMPLEX_TOLERANCE`] of 1).
    pub fn new(k: [f64; FACTOR_COUNT]) -> Result<Weights, WeightError> {
        for (index, &value) in k.iter().enumerate() {
            if value < 0.0 || !value.is_finite() {
                return Err(WeightError::Negative { index, value });
            }
        }
        let sum: f64 = k.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(WeightError::SumOutOfRange { sum });
        }
        Ok(Weights { k })
    }

    /// Construct weights from raw values, renormalizing if the sum is
    /// within [`PARSE_TOLERANCE`] of 1 and rejecting otherwise.
    pub fn renormalized(k: [f64; FACTOR_COUNT]) -> Result<Weights, WeightError> {
        for (index, &value) in k.iter().enumerate() {
            if value < 0.0 || !value.is_finite() {
                return Err(WeightError::Negative { index, value });
            }
        }
        let sum: f64 = k.iter().sum();
        if (sum - 1.0).abs() > PARSE_TOLERANCE {
            return Err(WeightError::SumOutOfRange { sum });
        }
        Ok(Weights { k: k.map(|v| v / sum) })
    }

    /// Parse the CLI syntax `k1,k2,k3,k4,k5`.
    pub fn parse(text: &str) -> Result<Weights, WeightError> {
        let parts: Vec<&str> = text.split(',').collect();
        if parts.len() != FACTOR_COUNT {
            return Err(WeightError::Count { found: parts.len() });
        }
        let mut k = [0.0; FACTOR_COUNT];
        for (slot, part) in k.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse::<f64>()
                .map_err(|_| WeightError::Unparseable { text: (*part).to_owned() })?;
        }
        Weights::renormalized(k)
    }

    /// Equal weights, 0.2 each.
    pub fn equal() -> Weights {
        Weights { k: [0.2; FACTOR_COUNT] }
    }

    pub fn as_array(&self) -> [f64; FACTOR_COUNT] {
        self.k
    }

    pub fn get(&self, index: usize) -> f64 {
        self.k[index]
    }
}

impl std::fmt::Display for Weights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{},{}", self.k[0], self.k[1], self.k[2], self.k[3], self.k[4])
    }
}

/// The five component distances for one pair of agents, each in {0, 1, 2}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentVector {
    d: [u8; FACTOR_COUNT],
}

impl ComponentVector {
    pub fn new(d: [u8; FACTOR_COUNT]) -> ComponentVector {
        debug_assert!(d.iter().all(|&v| v <= 2));
        ComponentVector { d }
    }

    pub fn as_array(&self) -> [u8; FACTOR_COUNT] {
        self.d
    }

    /// All components zero, which happens only when an agent is compared
    /// with itself.
    pub fn is_zero(&self) -> bool {
        self.d.iter().all(|&v| v == 0)
    }
}

fn normalized_field(code: &str) -> String {
    code.trim().to_lowercase()
}

fn shares_field(a: &AgentRecord, b: &AgentRecord) -> bool {
    a.fields
        .iter()
        .any(|fa| b.fields.iter().any(|fb| normalized_field(fa) == normalized_field(fb)))
}

fn linked(a: &AgentRecord, b: &AgentRecord, pick: fn(&AgentRecord) -> &std::collections::BTreeSet<String>) -> bool {
    pick(a).contains(&b.id) || pick(b).contains(&a.id)
}

/// Compute the five component distances between two agents.
///
/// Same id gives the all-zero vector; otherwise each component is 1 on a
/// match and 2 otherwise. Collaboration and citation links count in either
/// direction.
pub fn component_distances(a: &AgentRecord, b: &AgentRecord) -> ComponentVector {
    if a.id == b.id {
        return ComponentVector::new([0; FACTOR_COUNT]);
    }
    let score = |matched: bool| if matched { 1 } else { 2 };
    ComponentVector::new([
        score(a.institution == b.institution),
        score(shares_field(a, b)),
        score(a.phd_institution == b.phd_institution),
        score(linked(a, b, |r| &r.collaborators)),
        score(linked(a, b, |r| &r.citations)),
    ])
}

/// The weighted sum of component distances; in [0, 2], zero only for the
/// all-zero vector.
pub fn r_distance(cv: ComponentVector, weights: &Weights) -> f64 {
    cv.as_array()
        .iter()
        .zip(weights.as_array())
        .map(|(&d, k)| f64::from(d) * k)
        .sum()
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix has {rows} rows but {ids} ids")]
    RowCountMismatch { rows: usize, ids: usize },
    #[error("row {row} has {len} entries, expected {expected}")]
    RowLengthMismatch { row: usize, len: usize, expected: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    ids: Vec<String>,
    entries: Vec<Vec<f64>>,
}

/// A symmetric pairwise dissimilarity matrix with labeled rows.
///
/// Matrices produced by [`distance_matrix`] are metrics by construction;
/// externally loaded matrices may not be, which is what [`verify_metric`]
/// is for.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    entries: Vec<f64>, // row-major n x n
}

impl DistanceMatrix {
    /// Build from explicit rows. Only shape and finiteness are checked.
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<DistanceMatrix, MatrixError> {
        let n = ids.len();
        if rows.len() != n {
            return Err(MatrixError::RowCountMismatch { rows: rows.len(), ids: n });
        }
        let mut entries = Vec::with_capacity(n * n);
        for (row, values) in rows.iter().enumerate() {
            if values.len() != n {
                return Err(MatrixError::RowLengthMismatch { row, len: values.len(), expected: n });
            }
            for (col, &value) in values.iter().enumerate() {
                if !value.is_finite() {
                    return Err(MatrixError::NonFinite { row, col });
                }
                entries.push(value);
            }
        }
        Ok(DistanceMatrix { ids, entries })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n() + j]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        (0..n).map(|i| self.entries[i * n..(i + 1) * n].to_vec()).collect()
    }

    pub fn to_json_string(&self) -> String {
        let doc = MatrixJson { ids: self.ids.clone(), entries: self.rows() };
        serde_json::to_string_pretty(&doc).expect("matrix serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<DistanceMatrix, MatrixError> {
        let doc: MatrixJson = serde_json::from_str(text)?;
        DistanceMatrix::new(doc.ids, doc.entries)
    }

    pub fn save(&self, path: &Path) -> Result<(), MatrixError> {
        let mut writer = BufWriter::new(File::create(path)?);
        writer.write_all(self.to_json_string().as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DistanceMatrix, MatrixError> {
        let reader = BufReader::new(File::open(path)?);
        let doc: MatrixJson = serde_json::from_reader(reader)?;
        DistanceMatrix::new(doc.ids, doc.entries)
    }
}

/// Compute the full pairwise R-distance matrix for an agent set.
pub fn distance_matrix(agents: &AgentSet, weights: &Weights) -> DistanceMatrix {
    let n = agents.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = r_distance(component_distances(agents.get(i), agents.get(j)), weights);
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    DistanceMatrix { ids: agents.ids(), entries }
}

/// Everything that stops a matrix from being a metric, listed exhaustively.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    /// Ordered triples (i, j, k) with m[i][k] > m[i][j] + m[j][k] + tolerance.
    pub triangle_violations: Vec<(usize, usize, usize)>,
    /// Pairs (i, j), i < j, with m[i][j] != m[j][i] beyond tolerance.
    pub asymmetric_pairs: Vec<(usize, usize)>,
    /// Indices with a nonzero diagonal entry beyond tolerance.
    pub nonzero_diagonal: Vec<usize>,
}

impl MetricReport {
    pub fn is_metric(&self) -> bool {
        self.triangle_violations.is_empty()
            && self.asymmetric_pairs.is_empty()
            && self.nonzero_diagonal.is_empty()
    }
}

/// Brute-force check of symmetry, zero diagonal, and every triangle
/// inequality. Quadratic in memory-free passes, cubic in time.
pub fn verify_metric(m: &DistanceMatrix, tolerance: f64) -> MetricReport {
    let n = m.n();
    let mut report = MetricReport::default();
    for i in 0..n {
        if m.get(i, i).abs() > tolerance {
            report.nonzero_diagonal.push(i);
        }
        for j in (i + 1)..n {
            if (m.get(i, j) - m.get(j, i)).abs() > tolerance {
                report.asymmetric_pairs.push((i, j));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in 0..n {
                if k == j {
                    continue;
                }
                if m.get(i, k) > m.get(i, j) + m.get(j, k) + tolerance {
                    report.triangle_violations.push((i, j, k));
                }
            }
        }
    }
    report
}
