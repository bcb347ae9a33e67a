//! Knob spaces, relative-frequency tables and knob-parameterized models.
//!
//! A [`KnobModel`] assigns a density operator to every preparation setting
//! `a` and a projective resolution of the identity (one projector per outcome
//! bin `c`) to every detection setting `b`. It predicts
//! `mu(a, b)(c) = Tr[rho(a) E(b)(c)]`, which is compared against the
//! experimental [`RelFreqTable`] `nu(a, b)(c)`.
//!
//! Outcome bins generate the outcome algebra: the probability of a union of
//! bins is the sum over its members, so only bins are stored.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;
// Float methods come from std when it is linked and from num-traits otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{
    self, hermitian_sqrt, validate_density, validate_resolution, HermitianOperator,
    LinalgError, ValidationReport,
};

/// Tolerance of the row-sum invariant of a relative-frequency table.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Agreement tolerance used by [`is_restriction`].
pub const RESTRICTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("knob set {set} is empty")]
    EmptySet { set: KnobSet },
    #[error("duplicate label {label:?} in knob set {set}")]
    DuplicateLabel { set: KnobSet, label: String },
    #[error("unknown label {label:?} in knob set {set}")]
    UnknownLabel { set: KnobSet, label: String },
    #[error("row {a}|{b} has {len} entries, expected {expected}")]
    RowLength { a: String, b: String, len: usize, expected: usize },
    #[error("row {a}|{b} sums to {sum}, expected 1")]
    RowSum { a: String, b: String, sum: f64 },
    #[error("row {a}|{b} has entry {value} outside [0, 1]")]
    ValueOutOfRange { a: String, b: String, value: f64 },
    #[error("table is not defined on any (a, b) pair")]
    EmptyTable,
    #[error("trial record is empty")]
    EmptyRecord,
    #[error("rho({a}) is not a density operator: {report:?}")]
    InvalidDensity { a: String, report: ValidationReport },
    #[error("E({b}) is not a projective resolution: {report:?}")]
    InvalidResolution { b: String, report: ValidationReport },
    #[error("operator for {what} has dimension {got}, expected {expected}")]
    Dimension { what: String, got: usize, expected: usize },
    #[error("resolution for {b} has {got} blocks, expected {expected}")]
    BlockCount { b: String, got: usize, expected: usize },
    #[error("expected {expected} entries for knob set {set}, got {got}")]
    Count { set: KnobSet, got: usize, expected: usize },
    #[error("distributions have mismatched support ({left} vs {right})")]
    SupportMismatch { left: usize, right: usize },
    #[error("distribution sums to {sum}, expected 1")]
    NotADistribution { sum: f64 },
    #[error("models are defined over different knob spaces")]
    SpaceMismatch,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = core::result::Result<T, ModelError>;

/// An `(a, b, c)` index triple.
pub type Cell = (usize, usize, usize);

/// Which of the three label sets a label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnobSet {
    Preparation,
    Detection,
    Outcome,
}

impl fmt::Display for KnobSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnobSet::Preparation => "A",
            KnobSet::Detection => "B",
            KnobSet::Outcome => "C",
        })
    }
}

/// Ordered label sets `A` (preparation), `B` (detection) and `C` (outcomes).
///
/// Labels are opaque; a compound knob setting is just a label such as
/// `"laser=on,delay=3"`. Fixing one sub-knob is a filter on the labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnobSpace {
    a_settings: Vec<String>,
    b_settings: Vec<String>,
    outcomes: Vec<String>,
}

impl KnobSpace {
    pub fn new<S: Into<String>>(
        a_settings: impl IntoIterator<Item = S>,
        b_settings: impl IntoIterator<Item = S>,
        outcomes: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let collect = |set: KnobSet, it: &mut dyn Iterator<Item = String>| -> Result<Vec<String>> {
            let labels: Vec<String> = it.collect();
            if labels.is_empty() {
                return Err(ModelError::EmptySet { set });
            }
            for (i, l) in labels.iter().enumerate() {
                if labels[..i].contains(l) {
                    return Err(ModelError::DuplicateLabel { set, label: l.clone() });
                }
            }
            Ok(labels)
        };
        Ok(Self {
            a_settings: collect(KnobSet::Preparation, &mut a_settings.into_iter().map(Into::into))?,
            b_settings: collect(KnobSet::Detection, &mut b_settings.into_iter().map(Into::into))?,
            outcomes: collect(KnobSet::Outcome, &mut outcomes.into_iter().map(Into::into))?,
        })
    }

    /// Space with generated labels `a0.., b0.., c0..`.
    pub fn with_sizes(n_a: usize, n_b: usize, n_c: usize) -> Result<Self> {
        use alloc::format;
        Self::new(
            (0..n_a).map(|i| format!("a{i}")),
            (0..n_b).map(|i| format!("b{i}")),
            (0..n_c).map(|i| format!("c{i}")),
        )
    }

    pub fn a_settings(&self) -> &[String] {
        &self.a_settings
    }

    pub fn b_settings(&self) -> &[String] {
        &self.b_settings
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn n_a(&self) -> usize {
        self.a_settings.len()
    }

    pub fn n_b(&self) -> usize {
        self.b_settings.len()
    }

    pub fn n_c(&self) -> usize {
        self.outcomes.len()
    }

    pub fn index_a(&self, label: &str) -> Result<usize> {
        lookup(&self.a_settings, label, KnobSet::Preparation)
    }

    pub fn index_b(&self, label: &str) -> Result<usize> {
        lookup(&self.b_settings, label, KnobSet::Detection)
    }

    pub fn index_c(&self, label: &str) -> Result<usize> {
        lookup(&self.outcomes, label, KnobSet::Outcome)
    }
}

fn lookup(labels: &[String], label: &str, set: KnobSet) -> Result<usize> {
    labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| ModelError::UnknownLabel {
            set,
            label: label.into(),
        })
}

/// Relative frequencies `nu(a, b)(c)`, possibly defined on only some `(a, b)`.
///
/// Rows are keyed by `(a index, b index)`; each row holds one value per
/// outcome and sums to one within [`ROW_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct RelFreqTable {
    space: KnobSpace,
    rows: BTreeMap<(usize, usize), Vec<f64>>,
}

impl RelFreqTable {
    pub fn new(space: KnobSpace, rows: BTreeMap<(usize, usize), Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(ModelError::EmptyTable);
        }
        for (&(ai, bi), row) in &rows {
            let (a, b) = match (space.a_settings.get(ai), space.b_settings.get(bi)) {
                (Some(a), Some(b)) => (a.clone(), b.clone()),
                (None, _) => {
                    return Err(ModelError::Count {
                        set: KnobSet::Preparation,
                        got: ai + 1,
                        expected: space.n_a(),
                    })
                }
                (_, None) => {
                    return Err(ModelError::Count {
                        set: KnobSet::Detection,
                        got: bi + 1,
                        expected: space.n_b(),
                    })
                }
            };
            check_row(&a, &b, row, space.n_c())?;
        }
        Ok(Self { space, rows })
    }

    /// Builds a table from `(a label, b label, row)` triples.
    pub fn from_labeled_rows<'s>(
        space: KnobSpace,
        rows: impl IntoIterator<Item = (&'s str, &'s str, Vec<f64>)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (a, b, row) in rows {
            map.insert((space.index_a(a)?, space.index_b(b)?), row);
        }
        Self::new(space, map)
    }

    pub fn space(&self) -> &KnobSpace {
        &self.space
    }

    pub fn rows(&self) -> &BTreeMap<(usize, usize), Vec<f64>> {
        &self.rows
    }

    /// Pairs on which the table is defined, in index order.
    pub fn defined_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.keys().copied()
    }

    pub fn is_defined(&self, a: usize, b: usize) -> bool {
        self.rows.contains_key(&(a, b))
    }

    pub fn row(&self, a: usize, b: usize) -> Option<&[f64]> {
        self.rows.get(&(a, b)).map(Vec::as_slice)
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> Option<f64> {
        self.row(a, b).and_then(|r| r.get(c).copied())
    }

    /// Relative frequency of a union of outcome bins.
    pub fn event(&self, a: usize, b: usize, bins: impl IntoIterator<Item = usize>) -> Option<f64> {
        let row = self.row(a, b)?;
        Some(bins.into_iter().map(|c| row[c]).sum())
    }
}

fn check_row(a: &str, b: &str, row: &[f64], n_c: usize) -> Result<()> {
    if row.len() != n_c {
        return Err(ModelError::RowLength {
            a: a.into(),
            b: b.into(),
            len: row.len(),
            expected: n_c,
        });
    }
    if let Some(&value) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(ModelError::ValueOutOfRange {
            a: a.into(),
            b: b.into(),
            value,
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(ModelError::RowSum {
            a: a.into(),
            b: b.into(),
            sum,
        });
    }
    Ok(())
}

/// Raw trials `(a, b, c)` as recorded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialRecord {
    pub trials: Vec<(String, String, String)>,
}

impl TrialRecord {
    pub fn push(&mut self, a: impl Into<String>, b: impl Into<String>, c: impl Into<String>) {
        self.trials.push((a.into(), b.into(), c.into()));
    }
}

/// Ratio of trials with outcome `c` among those with setting `(a, b)`.
///
/// The table is defined exactly on the pairs that occur in the record.
pub fn relfreq_from_trials(record: &TrialRecord, space: &KnobSpace) -> Result<RelFreqTable> {
    if record.trials.is_empty() {
        return Err(ModelError::EmptyRecord);
    }
    let mut counts: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
    for (a, b, c) in &record.trials {
        let key = (space.index_a(a)?, space.index_b(b)?);
        let ci = space.index_c(c)?;
        counts.entry(key).or_insert_with(|| alloc::vec![0; space.n_c()])[ci] += 1;
    }
    let rows = counts
        .into_iter()
        .map(|(key, row)| {
            let total: u64 = row.iter().sum();
            (key, row.iter().map(|&k| k as f64 / total as f64).collect())
        })
        .collect();
    RelFreqTable::new(space.clone(), rows)
}

/// Knob-parameterized model `(rho, E)` over a [`KnobSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct KnobModel {
    space: KnobSpace,
    dim: usize,
    rho: Vec<HermitianOperator>,
    resolution: Vec<Vec<HermitianOperator>>,
}

impl KnobModel {
    /// `rho` is indexed by preparation setting, `resolution[b][c]` by detection
    /// setting and outcome. Every density and resolution is validated.
    pub fn new(
        space: KnobSpace,
        rho: Vec<HermitianOperator>,
        resolution: Vec<Vec<HermitianOperator>>,
    ) -> Result<Self> {
        let model = Self::new_unvalidated(space, rho, resolution)?;
        for (a, r) in model.space.a_settings.iter().zip(&model.rho) {
            let report = validate_density(r);
            if !report.is_valid() {
                return Err(ModelError::InvalidDensity { a: a.clone(), report });
            }
        }
        for (b, blocks) in model.space.b_settings.iter().zip(&model.resolution) {
            let mats: Vec<_> = blocks.iter().map(|e| e.matrix().clone()).collect();
            let report = validate_resolution(&mats);
            if !report.is_valid() {
                return Err(ModelError::InvalidResolution { b: b.clone(), report });
            }
        }
        Ok(model)
    }

    /// Shape checks only; used by constructions that are valid by design and
    /// verify themselves in tests.
    pub(crate) fn new_unvalidated(
        space: KnobSpace,
        rho: Vec<HermitianOperator>,
        resolution: Vec<Vec<HermitianOperator>>,
    ) -> Result<Self> {
        if rho.len() != space.n_a() {
            return Err(ModelError::Count {
                set: KnobSet::Preparation,
                got: rho.len(),
                expected: space.n_a(),
            });
        }
        if resolution.len() != space.n_b() {
            return Err(ModelError::Count {
                set: KnobSet::Detection,
                got: resolution.len(),
                expected: space.n_b(),
            });
        }
        let dim = rho[0].dim();
        for (a, r) in space.a_settings.iter().zip(&rho) {
            if r.dim() != dim {
                return Err(ModelError::Dimension {
                    what: alloc::format!("rho({a})"),
                    got: r.dim(),
                    expected: dim,
                });
            }
        }
        for (b, blocks) in space.b_settings.iter().zip(&resolution) {
            if blocks.len() != space.n_c() {
                return Err(ModelError::BlockCount {
                    b: b.clone(),
                    got: blocks.len(),
                    expected: space.n_c(),
                });
            }
            for (c, e) in space.outcomes.iter().zip(blocks) {
                if e.dim() != dim {
                    return Err(ModelError::Dimension {
                        what: alloc::format!("E({b})({c})"),
                        got: e.dim(),
                        expected: dim,
                    });
                }
            }
        }
        Ok(Self {
            space,
            dim,
            rho,
            resolution,
        })
    }

    pub fn space(&self) -> &KnobSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self, a: usize) -> &HermitianOperator {
        &self.rho[a]
    }

    pub fn densities(&self) -> &[HermitianOperator] {
        &self.rho
    }

    pub fn resolution(&self, b: usize) -> &[HermitianOperator] {
        &self.resolution[b]
    }

    pub fn effect(&self, b: usize, c: usize) -> &HermitianOperator {
        &self.resolution[b][c]
    }

    /// `Tr[rho(a) E(b)(c)]` by index, clamped to `[0, 1]`.
    pub fn probability_at(&self, a: usize, b: usize, c: usize) -> f64 {
        // both operands are Hermitian, so the trace is real up to roundoff
        let m = self.rho[a].matrix() * self.resolution[b][c].matrix();
        m.trace().re.clamp(0.0, 1.0)
    }

    /// Induced outcome distribution `mu(a, b)(.)`.
    pub fn distribution(&self, a: usize, b: usize) -> Vec<f64> {
        (0..self.space.n_c()).map(|c| self.probability_at(a, b, c)).collect()
    }

    /// Model with `A` and `B` cut down to the given labels, in the given order.
    pub fn restrict(&self, a_labels: &[&str], b_labels: &[&str]) -> Result<Self> {
        let a_idx = a_labels
            .iter()
            .map(|l| self.space.index_a(l))
            .collect::<Result<Vec<_>>>()?;
        let b_idx = b_labels
            .iter()
            .map(|l| self.space.index_b(l))
            .collect::<Result<Vec<_>>>()?;
        let space = KnobSpace::new(
            a_labels.iter().copied(),
            b_labels.iter().copied(),
            self.space.outcomes.iter().map(String::as_str),
        )?;
        Self::new_unvalidated(
            space,
            a_idx.iter().map(|&i| self.rho[i].clone()).collect(),
            b_idx.iter().map(|&i| self.resolution[i].clone()).collect(),
        )
    }

    /// Largest `|Tr[rho(a)E(b)(c)] - nu(a,b)(c)|` over the defined pairs, with
    /// the indices where it occurs.
    pub fn factorization_error(&self, nu: &RelFreqTable) -> Result<(f64, Option<Cell>)> {
        if self.space != nu.space {
            return Err(ModelError::SpaceMismatch);
        }
        let mut worst = (0.0, None);
        for ((a, b), row) in &nu.rows {
            for (c, &v) in row.iter().enumerate() {
                let err = (self.probability_at(*a, *b, c) - v).abs();
                if worst.1.is_none() || err > worst.0 {
                    worst = (err, Some((*a, *b, c)));
                }
            }
        }
        Ok(worst)
    }

    /// Table of the model's own predictions on every `(a, b)` pair.
    pub fn induced_table(&self) -> Result<RelFreqTable> {
        let mut rows = BTreeMap::new();
        for a in 0..self.space.n_a() {
            for b in 0..self.space.n_b() {
                let mut row = self.distribution(a, b);
                // absorb roundoff so the row-sum invariant holds exactly enough
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= sum);
                rows.insert((a, b), row);
            }
        }
        RelFreqTable::new(self.space.clone(), rows)
    }
}

/// `mu(a, b)(c)` by label.
pub fn probability(model: &KnobModel, a: &str, b: &str, c: &str) -> Result<f64> {
    let s = model.space();
    Ok(model.probability_at(s.index_a(a)?, s.index_b(b)?, s.index_c(c)?))
}

/// `Tr[r1^(1/2) r2^(1/2)]` of two density operators.
pub fn overlap(r1: &HermitianOperator, r2: &HermitianOperator) -> Result<f64> {
    for (a, r) in [("r1", r1), ("r2", r2)] {
        let report = validate_density(r);
        if !report.is_valid() {
            return Err(ModelError::InvalidDensity { a: a.into(), report });
        }
    }
    let s1 = hermitian_sqrt(r1)?;
    let s2 = hermitian_sqrt(r2)?;
    Ok(linalg::trace_product(&s1, &s2)?.max(0.0))
}

/// Distance between two finite distributions over the same outcome bins.
pub trait DistributionDistance {
    fn distance(&self, p: &[f64], q: &[f64]) -> f64;
}

/// `(1/2) sum |p_c - q_c|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TotalVariation;

impl DistributionDistance for TotalVariation {
    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Bhattacharyya angle `arccos sum sqrt(p_c q_c)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BhattacharyyaAngle;

impl DistributionDistance for BhattacharyyaAngle {
    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        let bc: f64 = p.iter().zip(q).map(|(a, b)| (a.max(0.0) * b.max(0.0)).sqrt()).sum();
        bc.min(1.0).acos()
    }
}

const DISTRIBUTION_SUM_TOL: f64 = 1e-10;

/// Total-variation distance between two distributions.
pub fn statistical_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    statistical_distance_with(p, q, &TotalVariation)
}

pub fn statistical_distance_with(p: &[f64], q: &[f64], metric: &impl DistributionDistance) -> Result<f64> {
    if p.len() != q.len() {
        return Err(ModelError::SupportMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    for d in [p, q] {
        let sum: f64 = d.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOL {
            return Err(ModelError::NotADistribution { sum });
        }
    }
    Ok(metric.distance(p, q))
}

/// `max over (a, b)` of the statistical distance between the two models'
/// outcome distributions.
pub fn model_distance(m1: &KnobModel, m2: &KnobModel) -> Result<f64> {
    model_distance_with(m1, m2, &TotalVariation)
}

pub fn model_distance_with(m1: &KnobModel, m2: &KnobModel, metric: &impl DistributionDistance) -> Result<f64> {
    if m1.space != m2.space {
        return Err(ModelError::SpaceMismatch);
    }
    let mut worst = 0.0f64;
    for a in 0..m1.space.n_a() {
        for b in 0..m1.space.n_b() {
            let d = statistical_distance_with(&m1.distribution(a, b), &m2.distribution(a, b), metric)?;
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

/// True when `small`'s settings are subsets of `big`'s and the two models
/// assign the same operators to every shared setting.
pub fn is_restriction(small: &KnobModel, big: &KnobModel) -> bool {
    if small.dim != big.dim || small.space.outcomes != big.space.outcomes {
        return false;
    }
    let a_ok = small.space.a_settings.iter().enumerate().all(|(i, label)| {
        big.space
            .index_a(label)
            .is_ok_and(|j| small.rho[i].max_abs_diff(&big.rho[j]) <= RESTRICTION_TOL)
    });
    let b_ok = small.space.b_settings.iter().enumerate().all(|(i, label)| {
        big.space.index_b(label).is_ok_and(|j| {
            small.resolution[i]
                .iter()
                .zip(&big.resolution[j])
                .all(|(e, f)| e.max_abs_diff(f) <= RESTRICTION_TOL)
        })
    });
    a_ok && b_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ComplexMatrix;
    use crate::C64;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::FRAC_1_SQRT_2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qubit_model(rho: HermitianOperator) -> KnobModel {
        let space = KnobSpace::new(["a"], ["b"], ["0", "1"]).unwrap();
        let e = vec![
            HermitianOperator::from_real_diag(&[1.0, 0.0]),
            HermitianOperator::from_real_diag(&[0.0, 1.0]),
        ];
        KnobModel::new(space, vec![rho], vec![e]).unwrap()
    }

    fn plus_state() -> HermitianOperator {
        HermitianOperator::projector_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])
    }

    #[test]
    fn knob_space_rejects_empty_and_duplicates() {
        assert_eq!(
            KnobSpace::new(Vec::<&str>::new(), vec!["b"], vec!["c"]),
            Err(ModelError::EmptySet {
                set: KnobSet::Preparation
            })
        );
        assert!(matches!(
            KnobSpace::new(["a"], ["b", "b"], ["c"]),
            Err(ModelError::DuplicateLabel {
                set: KnobSet::Detection,
                ..
            })
        ));
    }

    #[test]
    fn probability_examples() {
        let m = qubit_model(HermitianOperator::from_real_diag(&[1.0, 0.0]));
        assert_eq!(probability(&m, "a", "b", "0").unwrap(), 1.0);
        let m = qubit_model(HermitianOperator::identity(2).scale(0.5));
        assert_eq!(probability(&m, "a", "b", "0").unwrap(), 0.5);
        assert!(matches!(
            probability(&m, "a", "nope", "0"),
            Err(ModelError::UnknownLabel { .. })
        ));
    }

    #[test]
    fn model_rejects_invalid_density() {
        let space = KnobSpace::new(["a"], ["b"], ["0", "1"]).unwrap();
        let e = vec![
            HermitianOperator::from_real_diag(&[1.0, 0.0]),
            HermitianOperator::from_real_diag(&[0.0, 1.0]),
        ];
        let bad = HermitianOperator::from_real_diag(&[0.5, 0.6]);
        assert!(matches!(
            KnobModel::new(space, vec![bad], vec![e]),
            Err(ModelError::InvalidDensity { .. })
        ));
    }

    #[test]
    fn relfreq_examples() {
        let space = KnobSpace::new(["a"], ["b"], ["c0", "c1"]).unwrap();
        let mut rec = TrialRecord::default();
        for c in ["c0", "c0", "c1", "c1"] {
            rec.push("a", "b", c);
        }
        let t = relfreq_from_trials(&rec, &space).unwrap();
        assert_eq!(t.row(0, 0).unwrap(), &[0.5, 0.5]);

        let mut rec = TrialRecord::default();
        rec.push("a", "b", "c0");
        let t = relfreq_from_trials(&rec, &space).unwrap();
        assert_eq!(t.get(0, 0, 0), Some(1.0));

        assert_eq!(
            relfreq_from_trials(&TrialRecord::default(), &space),
            Err(ModelError::EmptyRecord)
        );
    }

    #[test]
    fn relfreq_defined_only_on_observed_pairs() {
        let space = KnobSpace::new(["a0", "a1"], ["b0", "b1"], ["x", "y", "z"]).unwrap();
        let mut rec = TrialRecord::default();
        rec.push("a0", "b1", "x");
        rec.push("a1", "b0", "z");
        rec.push("a1", "b0", "y");
        let t = relfreq_from_trials(&rec, &space).unwrap();
        assert_eq!(t.defined_pairs().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        assert!(!t.is_defined(0, 0));
    }

    #[test]
    fn relfreq_sampling_converges_to_source_distribution() {
        let space = KnobSpace::new(["a"], ["b"], ["0", "1", "2"]).unwrap();
        let p = [0.2, 0.5, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut rec = TrialRecord::default();
        for _ in 0..1000 {
            let u: f64 = rng.random();
            let c = if u < p[0] { "0" } else if u < p[0] + p[1] { "1" } else { "2" };
            rec.push("a", "b", c);
        }
        let t = relfreq_from_trials(&rec, &space).unwrap();
        let row = t.row(0, 0).unwrap();
        let dev = row.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 5.0 / (1000f64).sqrt(), "deviation {dev}");
        assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn table_reports_offending_row() {
        let space = KnobSpace::new(["a"], ["b"], ["0", "1"]).unwrap();
        let err = RelFreqTable::from_labeled_rows(space, [("a", "b", vec![0.3, 0.3])]).unwrap_err();
        assert!(matches!(err, ModelError::RowSum { ref a, ref b, .. } if a == "a" && b == "b"));
    }

    #[test]
    fn overlap_examples() {
        let p0 = HermitianOperator::from_real_diag(&[1.0, 0.0]);
        let p1 = HermitianOperator::from_real_diag(&[0.0, 1.0]);
        assert_abs_diff_eq!(overlap(&p0, &p0).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(overlap(&p0, &p1).unwrap(), 0.0, epsilon = 1e-14);
        let mixed = HermitianOperator::identity(2).scale(0.5);
        // sqrt(I/2) = I/sqrt(2), so the overlap is Tr[|0><0|]/sqrt(2)
        assert_abs_diff_eq!(overlap(&mixed, &p0).unwrap(), FRAC_1_SQRT_2, epsilon = 1e-14);
        assert!(overlap(&HermitianOperator::from_real_diag(&[0.5, 0.6]), &p0).is_err());
    }

    #[test]
    fn overlap_of_pure_states_is_squared_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let mut rand_unit = || {
                let v: Vec<C64> = (0..3)
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                v.into_iter().map(|z| z / n).collect::<Vec<_>>()
            };
            let (u, w) = (rand_unit(), rand_unit());
            let ip: C64 = u.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
            let (ru, rw) = (HermitianOperator::projector(&u), HermitianOperator::projector(&w));
            let o = overlap(&ru, &rw).unwrap();
            assert_abs_diff_eq!(o, ip.norm_sqr(), epsilon = 1e-10);
            assert_abs_diff_eq!(o, overlap(&rw, &ru).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn statistical_distance_examples() {
        assert_eq!(statistical_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(statistical_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(statistical_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(
            statistical_distance(&[1.0], &[0.5, 0.5]),
            Err(ModelError::SupportMismatch { .. })
        ));
        assert!(matches!(
            statistical_distance(&[0.4, 0.4], &[0.5, 0.5]),
            Err(ModelError::NotADistribution { .. })
        ));
    }

    #[test]
    fn bhattacharyya_angle_is_pluggable() {
        let d = statistical_distance_with(&[1.0, 0.0], &[0.0, 1.0], &BhattacharyyaAngle).unwrap();
        assert_abs_diff_eq!(d, core::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        let m = qubit_model(plus_state());
        assert_eq!(model_distance_with(&m, &m, &BhattacharyyaAngle).unwrap(), 0.0);
    }

    #[test]
    fn model_distance_examples() {
        let m = qubit_model(plus_state());
        assert_eq!(model_distance(&m, &m).unwrap(), 0.0);
        // (0.8, 0.2) vs (0.5, 0.5): TV 0.3
        let m2 = qubit_model(HermitianOperator::from_real_diag(&[0.8, 0.2]));
        assert_abs_diff_eq!(model_distance(&m, &m2).unwrap(), 0.3, epsilon = 1e-14);
        let other = KnobModel::new(
            KnobSpace::new(["x"], ["b"], ["0", "1"]).unwrap(),
            vec![plus_state()],
            vec![m.resolution(0).to_vec()],
        )
        .unwrap();
        assert_eq!(model_distance(&m, &other), Err(ModelError::SpaceMismatch));
    }

    fn two_setting_model(perturb: f64) -> KnobModel {
        let space = KnobSpace::new(["a0", "a1"], ["b0", "b1"], ["0", "1"]).unwrap();
        let z = vec![
            HermitianOperator::from_real_diag(&[1.0, 0.0]),
            HermitianOperator::from_real_diag(&[0.0, 1.0]),
        ];
        let x = vec![
            plus_state(),
            HermitianOperator::projector_real(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]),
        ];
        let rho1 = HermitianOperator::from_real_diag(&[0.25 + perturb, 0.75 - perturb]);
        KnobModel::new(space, vec![plus_state(), rho1], vec![z, x]).unwrap()
    }

    #[test]
    fn restriction_examples() {
        let m = two_setting_model(0.0);
        assert!(is_restriction(&m, &m));
        let small = m.restrict(&["a1"], &["b0", "b1"]).unwrap();
        assert!(is_restriction(&small, &m));
        assert!(!is_restriction(&m, &small));
        let perturbed = two_setting_model(1e-3);
        assert!(!is_restriction(&perturbed, &m));
    }

    #[test]
    fn induced_distribution_is_a_distribution() {
        let m = two_setting_model(0.0);
        for a in 0..2 {
            for b in 0..2 {
                let d = m.distribution(a, b);
                assert!(d.iter().all(|&p| p >= 0.0));
                assert_abs_diff_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn factorization_error_finds_the_worst_entry() {
        let m = two_setting_model(0.0);
        let nu = m.induced_table().unwrap();
        assert!(m.factorization_error(&nu).unwrap().0 < 1e-14);
        let shifted = two_setting_model(0.1);
        let (err, at) = shifted.factorization_error(&nu).unwrap();
        assert_abs_diff_eq!(err, 0.1, epsilon = 1e-12);
        assert_eq!(at.map(|(a, b, _)| (a, b)), Some((1, 0)));
    }

    #[test]
    fn model_distance_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let space = KnobSpace::with_sizes(2, 2, 2).unwrap();
        let mut random_model = || {
            let rho = (0..2)
                .map(|_| {
                    let p: f64 = rng.random();
                    let off = C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
                        * (p * (1.0 - p)).sqrt();
                    HermitianOperator::new(
                        ComplexMatrix::from_rows(vec![vec![C64::new(p, 0.0), off], vec![off.conj(), C64::new(1.0 - p, 0.0)]])
                            .unwrap(),
                    )
                    .unwrap()
                })
                .collect();
            let res = (0..2)
                .map(|_| {
                    let th: f64 = rng.random_range(0.0..core::f64::consts::PI);
                    let (s, c) = th.sin_cos();
                    vec![
                        HermitianOperator::projector_real(&[c, s]),
                        HermitianOperator::projector_real(&[-s, c]),
                    ]
                })
                .collect();
            KnobModel::new(space.clone(), rho, res).unwrap()
        };
        for _ in 0..30 {
            let (x, y, z) = (random_model(), random_model(), random_model());
            let xy = model_distance(&x, &y).unwrap();
            let yx = model_distance(&y, &x).unwrap();
            let yz = model_distance(&y, &z).unwrap();
            let xz = model_distance(&x, &z).unwrap();
            assert!(xy >= 0.0);
            assert_abs_diff_eq!(xy, yx, epsilon = 1e-15);
            assert!(xz <= xy + yz + 1e-10);
        }
    }
}
