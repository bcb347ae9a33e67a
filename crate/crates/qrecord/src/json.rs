//! JSON documents for models, tables, bound reports and fit results.
//!
//! A model lists its labels, its Hilbert-space dimension, one density matrix
//! per preparation and one block per (detection, outcome). Matrices are arrays
//! of rows and every entry is a `[re, im]` pair:
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "preparations": ["a0"], "detections": ["b0"], "outcomes": ["c0", "c1"],
//!   "rho": [[[[1, 0], [0, 0]], [[0, 0], [0, 0]]]],
//!   "resolution": [[ <E(b0)(c0)>, <E(b0)(c1)> ]]
//! }
//! ```
//!
//! A table keys each defined row by `"a|b"`, so labels may not contain `|`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use qrecord_core::constraints::{BoundDirection, BoundReport, BOUND_TOL};
use qrecord_core::fit::FitResult;
use qrecord_core::linalg::{ComplexMatrix, HermitianOperator, LinalgError};
use qrecord_core::model::{KnobModel, KnobSet, KnobSpace, ModelError, RelFreqTable};
use qrecord_core::C64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROW_KEY_SEPARATOR: char = '|';

#[derive(Debug, Error)]
pub enum JsonError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("label {0:?} contains the row-key separator '|'")]
    SeparatorInLabel(String),
    #[error("row key {0:?} is not of the form \"a|b\"")]
    BadRowKey(String),
    #[error("declared dimension {declared} but {what} is {got}x{got}")]
    Dimension { declared: usize, what: String, got: usize },
    #[error("{what}: {source}")]
    Matrix { what: String, source: LinalgError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, JsonError>;

pub type MatrixDoc = Vec<Vec<[f64; 2]>>;

fn matrix_doc(m: &ComplexMatrix) -> MatrixDoc {
    m.rows().map(|row| row.iter().map(|z| [z.re, z.im]).collect()).collect()
}

fn operator_from_doc(doc: &MatrixDoc, declared: usize, what: String) -> Result<HermitianOperator> {
    let rows = doc.iter().map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect()).collect();
    let matrix = ComplexMatrix::from_rows(rows).map_err(|source| JsonError::Matrix {
        what: what.clone(),
        source,
    })?;
    if matrix.dim() != declared {
        return Err(JsonError::Dimension {
            declared,
            what,
            got: matrix.dim(),
        });
    }
    HermitianOperator::new(matrix).map_err(|source| JsonError::Matrix { what, source })
}

fn count(set: KnobSet, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(ModelError::Count { set, got, expected }.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub dimension: usize,
    pub preparations: Vec<String>,
    pub detections: Vec<String>,
    pub outcomes: Vec<String>,
    pub rho: Vec<MatrixDoc>,
    pub resolution: Vec<Vec<MatrixDoc>>,
}

impl ModelDoc {
    pub fn from_model(model: &KnobModel) -> Self {
        let space = model.space();
        ModelDoc {
            dimension: model.dim(),
            preparations: space.a_settings().to_vec(),
            detections: space.b_settings().to_vec(),
            outcomes: space.outcomes().to_vec(),
            rho: model.densities().iter().map(|r| matrix_doc(r.matrix())).collect(),
            resolution: (0..space.n_b())
                .map(|b| model.resolution(b).iter().map(|e| matrix_doc(e.matrix())).collect())
                .collect(),
        }
    }

    /// Rebuilds and validates the model.
    pub fn to_model(&self) -> Result<KnobModel> {
        let space = KnobSpace::new(&self.preparations, &self.detections, &self.outcomes)?;
        count(KnobSet::Preparation, self.rho.len(), space.n_a())?;
        count(KnobSet::Detection, self.resolution.len(), space.n_b())?;
        let rho = self
            .preparations
            .iter()
            .zip(&self.rho)
            .map(|(a, m)| operator_from_doc(m, self.dimension, format!("rho({a})")))
            .collect::<Result<Vec<_>>>()?;
        let mut resolution = Vec::with_capacity(self.resolution.len());
        for (b, blocks) in self.detections.iter().zip(&self.resolution) {
            if blocks.len() != self.outcomes.len() {
                return Err(ModelError::BlockCount {
                    b: b.clone(),
                    got: blocks.len(),
                    expected: self.outcomes.len(),
                }
                .into());
            }
            let ops = self
                .outcomes
                .iter()
                .zip(blocks)
                .map(|(c, m)| operator_from_doc(m, self.dimension, format!("E({b})({c})")))
                .collect::<Result<Vec<_>>>()?;
            resolution.push(ops);
        }
        Ok(KnobModel::new(space, rho, resolution)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDoc {
    pub preparations: Vec<String>,
    pub detections: Vec<String>,
    pub outcomes: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

fn check_labels(labels: &[String]) -> Result<()> {
    match labels.iter().find(|l| l.contains(ROW_KEY_SEPARATOR)) {
        Some(l) => Err(JsonError::SeparatorInLabel(l.clone())),
        None => Ok(()),
    }
}

impl TableDoc {
    pub fn from_table(nu: &RelFreqTable) -> Result<Self> {
        let space = nu.space();
        for labels in [space.a_settings(), space.b_settings()] {
            check_labels(labels)?;
        }
        let rows = nu
            .rows()
            .iter()
            .map(|(&(a, b), row)| {
                let key = format!("{}{ROW_KEY_SEPARATOR}{}", space.a_settings()[a], space.b_settings()[b]);
                (key, row.clone())
            })
            .collect();
        Ok(TableDoc {
            preparations: space.a_settings().to_vec(),
            detections: space.b_settings().to_vec(),
            outcomes: space.outcomes().to_vec(),
            rows,
        })
    }

    pub fn to_table(&self) -> Result<RelFreqTable> {
        check_labels(&self.preparations)?;
        check_labels(&self.detections)?;
        let space = KnobSpace::new(&self.preparations, &self.detections, &self.outcomes)?;
        let mut rows = Vec::with_capacity(self.rows.len());
        for (key, row) in &self.rows {
            let (a, b) = key
                .split_once(ROW_KEY_SEPARATOR)
                .filter(|(_, b)| !b.contains(ROW_KEY_SEPARATOR))
                .ok_or_else(|| JsonError::BadRowKey(key.clone()))?;
            rows.push((a, b, row.clone()));
        }
        Ok(RelFreqTable::from_labeled_rows(space, rows)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRowDoc {
    pub labels: Vec<String>,
    pub bound: f64,
    pub attained: f64,
    pub satisfied: bool,
}

/// `worst_margin` is `null` when the report has no rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReportDoc {
    pub direction: String,
    pub tolerance: f64,
    pub all_satisfied: bool,
    pub worst_margin: Option<f64>,
    pub partial_scan: bool,
    pub rows: Vec<BoundRowDoc>,
}

impl BoundReportDoc {
    pub fn from_report(report: &BoundReport) -> Self {
        BoundReportDoc {
            direction: match report.direction {
                BoundDirection::Upper => "upper",
                BoundDirection::Lower => "lower",
            }
            .to_string(),
            tolerance: BOUND_TOL,
            all_satisfied: report.all_satisfied(),
            worst_margin: report.worst_margin.is_finite().then_some(report.worst_margin),
            partial_scan: report.partial_scan,
            rows: report
                .rows
                .iter()
                .map(|r| BoundRowDoc {
                    labels: r.labels.clone(),
                    bound: r.bound,
                    attained: r.attained,
                    satisfied: r.satisfied,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResultDoc {
    pub omega: f64,
    pub lambda: f64,
    pub b: f64,
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl FitResultDoc {
    pub fn from_result(r: &FitResult) -> Self {
        FitResultDoc {
            omega: r.omega,
            lambda: r.lambda,
            b: r.b,
            objective: r.objective,
            residuals: r.residuals.clone(),
            converged: r.converged,
            iterations: r.iterations,
            warnings: r.warnings.iter().map(|w| w.message()).collect(),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<KnobModel> {
    read_json::<ModelDoc>(path)?.to_model()
}

pub fn load_table(path: impl AsRef<Path>) -> Result<RelFreqTable> {
    read_json::<TableDoc>(path)?.to_table()
}
