//! Necessary conditions on any model fitting a relative-frequency table.
//!
//! Two bounds follow from a table alone:
//!
//! - an upper bound on the overlap `Tr[sqrt(rho(a1)) sqrt(rho(a2))]` of two
//!   preparations, from how well some detection setting tells them apart;
//! - a lower bound on `||E(b1)(c) - E(b2)(c)||`, from how differently two
//!   detection settings respond to a common preparation.
//!
//! The `check_*` functions first confirm the model reproduces the table
//! (within [`FACTORIZATION_TOL`]) and then compare every bound against the
//! model's actual value.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;
// Float methods come from std when it is linked and from num-traits otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{hermitian_sqrt, operator_norm, trace_product, HermitianOperator, LinalgError};
use crate::model::{KnobModel, ModelError, RelFreqTable};

/// Slack granted to the model side of every bound comparison.
pub const BOUND_TOL: f64 = 1e-8;

/// Largest `|Tr[rho E] - nu|` for which a model counts as fitting a table.
pub const FACTORIZATION_TOL: f64 = 1e-9;

/// Outcome sets up to this size get an exhaustive subset scan.
pub const EXHAUSTIVE_SUBSET_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("preparations {a1} and {a2} share no defined detection setting")]
    NoCommonDetection { a1: String, a2: String },
    #[error("detection settings {b1} and {b2} share no defined preparation")]
    NoCommonPreparation { b1: String, b2: String },
    #[error("model does not reproduce the table: error {error:e} at ({a}, {b}, {c})")]
    Factorization { error: f64, a: String, b: String, c: String },
    #[error("index out of range")]
    OutOfRange,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = core::result::Result<T, ConstraintError>;

/// Which side of the inequality the model value must fall on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundDirection {
    /// `attained <= bound + BOUND_TOL`
    Upper,
    /// `attained >= bound - BOUND_TOL`
    Lower,
}

impl BoundDirection {
    pub fn satisfied(self, attained: f64, bound: f64) -> bool {
        match self {
            BoundDirection::Upper => attained <= bound + BOUND_TOL,
            BoundDirection::Lower => attained >= bound - BOUND_TOL,
        }
    }

    /// Signed slack; negative means violated before tolerance.
    pub fn margin(self, attained: f64, bound: f64) -> f64 {
        match self {
            BoundDirection::Upper => bound - attained,
            BoundDirection::Lower => attained - bound,
        }
    }
}

impl fmt::Display for BoundDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundDirection::Upper => "upper",
            BoundDirection::Lower => "lower",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    /// `[a1, a2]` for overlap rows, `[b1, b2, c]` for separation rows.
    pub labels: Vec<String>,
    pub bound: f64,
    pub attained: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub direction: BoundDirection,
    pub rows: Vec<BoundRow>,
    /// Smallest margin over all rows; `+inf` when there are no rows.
    pub worst_margin: f64,
    /// Set when some subset scan was restricted to singletons and complements.
    pub partial_scan: bool,
}

impl BoundReport {
    fn new(direction: BoundDirection) -> Self {
        BoundReport {
            direction,
            rows: Vec::new(),
            worst_margin: f64::INFINITY,
            partial_scan: false,
        }
    }

    fn push(&mut self, labels: Vec<String>, bound: f64, attained: f64) {
        let margin = self.direction.margin(attained, bound);
        self.worst_margin = self.worst_margin.min(margin);
        self.rows.push(BoundRow {
            labels,
            bound,
            attained,
            satisfied: self.direction.satisfied(attained, bound),
        });
    }

    pub fn all_satisfied(&self) -> bool {
        self.rows.iter().all(|r| r.satisfied)
    }
}

/// Overlap bound value and whether the outcome-subset scan was complete.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapBound {
    pub value: f64,
    pub partial_scan: bool,
}

// Bitmasks of the outcome subsets scanned. The empty set and the whole set
// always give 1 and are only used when no proper subset exists.
fn outcome_subsets(n_c: usize) -> (Vec<Vec<usize>>, bool) {
    if n_c == 1 {
        return (vec![vec![0]], false);
    }
    if n_c <= EXHAUSTIVE_SUBSET_LIMIT {
        let full = (1usize << n_c) - 1;
        let sets = (1..full)
            .map(|mask| (0..n_c).filter(|c| mask & (1 << c) != 0).collect())
            .collect();
        (sets, false)
    } else {
        let mut sets = Vec::with_capacity(2 * n_c);
        for c in 0..n_c {
            sets.push(vec![c]);
            sets.push((0..n_c).filter(|&d| d != c).collect());
        }
        (sets, true)
    }
}

/// `min_{b, omega} sqrt(nu(a2, b)(omega)) + sqrt(1 - nu(a1, b)(omega))` over
/// detection settings defined for both preparations.
pub fn overlap_upper_bound(nu: &RelFreqTable, a1: usize, a2: usize) -> Result<OverlapBound> {
    let b_settings: Vec<usize> = (0..nu.space().n_b()).collect();
    overlap_upper_bound_over(nu, a1, a2, &b_settings)
}

/// [`overlap_upper_bound`] restricted to the listed detection settings.
pub fn overlap_upper_bound_over(nu: &RelFreqTable, a1: usize, a2: usize, b_settings: &[usize]) -> Result<OverlapBound> {
    let space = nu.space();
    if a1 >= space.n_a() || a2 >= space.n_a() || b_settings.iter().any(|&b| b >= space.n_b()) {
        return Err(ConstraintError::OutOfRange);
    }
    let (subsets, partial_scan) = outcome_subsets(space.n_c());
    let mut best: Option<f64> = None;
    for &b in b_settings {
        let (Some(r1), Some(r2)) = (nu.row(a1, b), nu.row(a2, b)) else {
            continue;
        };
        for omega in &subsets {
            let p1: f64 = omega.iter().map(|&c| r1[c]).sum();
            let p2: f64 = omega.iter().map(|&c| r2[c]).sum();
            let value = p2.clamp(0.0, 1.0).sqrt() + (1.0 - p1).clamp(0.0, 1.0).sqrt();
            best = Some(best.map_or(value, |v: f64| v.min(value)));
        }
    }
    match best {
        Some(value) => Ok(OverlapBound { value, partial_scan }),
        None => Err(ConstraintError::NoCommonDetection {
            a1: space.a_settings()[a1].clone(),
            a2: space.a_settings()[a2].clone(),
        }),
    }
}

/// `max_a |nu(a, b1)(c) - nu(a, b2)(c)|` over preparations defined for both
/// detection settings.
pub fn resolution_separation_lower_bound(nu: &RelFreqTable, b1: usize, b2: usize, c: usize) -> Result<f64> {
    let space = nu.space();
    if b1 >= space.n_b() || b2 >= space.n_b() || c >= space.n_c() {
        return Err(ConstraintError::OutOfRange);
    }
    (0..space.n_a())
        .filter_map(|a| Some((nu.get(a, b1, c)? - nu.get(a, b2, c)?).abs()))
        .reduce(f64::max)
        .ok_or_else(|| ConstraintError::NoCommonPreparation {
            b1: space.b_settings()[b1].clone(),
            b2: space.b_settings()[b2].clone(),
        })
}

/// Fails with the worst-fitting `(a, b, c)` unless the model reproduces `nu`
/// within [`FACTORIZATION_TOL`].
pub fn ensure_factorizes(model: &KnobModel, nu: &RelFreqTable) -> Result<()> {
    let (error, worst) = model.factorization_error(nu)?;
    if error <= FACTORIZATION_TOL {
        return Ok(());
    }
    let space = model.space();
    let (a, b, c) = worst.expect("a positive error has a location");
    Err(ConstraintError::Factorization {
        error,
        a: space.a_settings()[a].clone(),
        b: space.b_settings()[b].clone(),
        c: space.outcomes()[c].clone(),
    })
}

/// Compares every ordered pair `a1 != a2` sharing a defined detection setting
/// against [`overlap_upper_bound`].
pub fn check_overlap_constraint(model: &KnobModel, nu: &RelFreqTable) -> Result<BoundReport> {
    ensure_factorizes(model, nu)?;
    let space = model.space();
    let roots = model
        .densities()
        .iter()
        .map(hermitian_sqrt)
        .collect::<core::result::Result<Vec<HermitianOperator>, _>>()?;
    let mut report = BoundReport::new(BoundDirection::Upper);
    for a1 in 0..space.n_a() {
        for a2 in 0..space.n_a() {
            if a1 == a2 {
                continue;
            }
            let bound = match overlap_upper_bound(nu, a1, a2) {
                Ok(bound) => bound,
                Err(ConstraintError::NoCommonDetection { .. }) => continue,
                Err(e) => return Err(e),
            };
            let attained = trace_product(roots[a1].matrix(), roots[a2].matrix())?.max(0.0);
            report.partial_scan |= bound.partial_scan;
            report.push(
                vec![space.a_settings()[a1].clone(), space.a_settings()[a2].clone()],
                bound.value,
                attained,
            );
        }
    }
    Ok(report)
}

/// Compares `||E(b1)(c) - E(b2)(c)||` for every `b1 < b2` and every `c`
/// against [`resolution_separation_lower_bound`].
pub fn check_separation_constraint(model: &KnobModel, nu: &RelFreqTable) -> Result<BoundReport> {
    ensure_factorizes(model, nu)?;
    let space = model.space();
    let mut report = BoundReport::new(BoundDirection::Lower);
    for b1 in 0..space.n_b() {
        for b2 in (b1 + 1)..space.n_b() {
            for c in 0..space.n_c() {
                let bound = match resolution_separation_lower_bound(nu, b1, b2, c) {
                    Ok(bound) => bound,
                    Err(ConstraintError::NoCommonPreparation { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let attained = operator_norm(&(model.effect(b1, c) - model.effect(b2, c)));
                report.push(
                    vec![
                        space.b_settings()[b1].clone(),
                        space.b_settings()[b2].clone(),
                        space.outcomes()[c].to_string(),
                    ],
                    bound,
                    attained,
                );
            }
        }
    }
    Ok(report)
}
