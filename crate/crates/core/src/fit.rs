//! Least-squares recovery of `(omega, lambda, b)` from a disagreement record.
//!
//! The model curve is the closed-form on-edge probability evaluated at
//! `omega * t`. The search seeds a regular grid over the bounds, then refines
//! the best few seeds with a Nelder–Mead simplex working in coordinates
//! normalized to the unit box, where out-of-box trial points are projected
//! back onto the box.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use thiserror::Error;
// Float methods come from std when it is linked and from num-traits otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::flipflop::{disagreement_probability, DisagreementCurve, ModelParams};
use crate::linalg::{hermitian_eigendecomposition, HermitianOperator};

/// Fewest data points accepted by [`fit`].
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {MIN_POINTS} data points, got {got}")]
    TooFewPoints { got: usize },
    #[error("bounds for {param} must be finite with min < max, got ({min}, {max})")]
    InvalidBounds { param: &'static str, min: f64, max: f64 },
    #[error("b bounds must be positive")]
    NonPositiveWidth,
    #[error("omega must be positive")]
    NonPositiveOmega,
    #[error("pinned omega {0} must be positive and finite")]
    BadPinnedOmega(f64),
    #[error("grid_seeds, refine_top and max_iters must be at least 1")]
    BadCounts,
    #[error("tolerance must be positive and finite")]
    BadTolerance,
}

pub type Result<T> = core::result::Result<T, FitError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub const fn new(min: f64, max: f64) -> Self {
        Bounds { min, max }
    }

    fn check(&self, param: &'static str) -> Result<()> {
        if self.min.is_finite() && self.max.is_finite() && self.min < self.max {
            Ok(())
        } else {
            Err(FitError::InvalidBounds {
                param,
                min: self.min,
                max: self.max,
            })
        }
    }

    fn at_fraction(&self, z: f64) -> f64 {
        self.min + (self.max - self.min) * z
    }

    fn contains(&self, x: f64) -> bool {
        (self.min..=self.max).contains(&x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub omega: Bounds,
    pub lambda: Bounds,
    pub b: Bounds,
    /// Seeds per axis of the initial grid.
    pub grid_seeds: usize,
    /// Number of best seeds refined by the simplex.
    pub refine_top: usize,
    /// Simplex diameter, in unit-box coordinates, at which refinement stops.
    pub tolerance: f64,
    /// Iteration cap per refinement.
    pub max_iters: usize,
    /// When set, `omega` is held at this value and only `(lambda, b)` move.
    pub pinned_omega: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            omega: Bounds::new(0.25, 4.0),
            lambda: Bounds::new(0.2, 4.0),
            b: Bounds::new(0.2, 2.0),
            grid_seeds: 8,
            refine_top: 8,
            tolerance: 1e-9,
            max_iters: 5000,
            pinned_omega: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.omega.check("omega")?;
        self.lambda.check("lambda")?;
        self.b.check("b")?;
        if self.b.min <= 0.0 {
            return Err(FitError::NonPositiveWidth);
        }
        if self.omega.min <= 0.0 {
            return Err(FitError::NonPositiveOmega);
        }
        if let Some(w) = self.pinned_omega {
            if !(w.is_finite() && w > 0.0) {
                return Err(FitError::BadPinnedOmega(w));
            }
        }
        if self.grid_seeds == 0 || self.refine_top == 0 || self.max_iters == 0 {
            return Err(FitError::BadCounts);
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(FitError::BadTolerance);
        }
        Ok(())
    }

    fn free_bounds(&self) -> Vec<Bounds> {
        match self.pinned_omega {
            Some(_) => vec![self.lambda, self.b],
            None => vec![self.omega, self.lambda, self.b],
        }
    }

    // (omega, lambda, b) from unit-box coordinates.
    fn params(&self, z: &[f64]) -> [f64; 3] {
        match self.pinned_omega {
            Some(w) => [w, self.lambda.at_fraction(z[0]), self.b.at_fraction(z[1])],
            None => [
                self.omega.at_fraction(z[0]),
                self.lambda.at_fraction(z[1]),
                self.b.at_fraction(z[2]),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    /// All probabilities are equal, so the record carries no shape.
    ConstantData,
    /// The residual Jacobian is (numerically) rank deficient at the optimum.
    RankDeficient { condition: f64 },
    /// Refinement stopped at the iteration cap.
    IterationLimit,
    /// A fitted parameter sits on its bound.
    AtBound { param: &'static str },
}

impl fmt::Display for FitWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitWarning::ConstantData => f.write_str("constant data: parameters are not identifiable"),
            FitWarning::RankDeficient { condition } => {
                write!(f, "degenerate fit: Jacobian condition number {condition:.3e}")
            }
            FitWarning::IterationLimit => f.write_str("simplex did not shrink below tolerance"),
            FitWarning::AtBound { param } => write!(f, "{param} is at its bound"),
        }
    }
}

impl FitWarning {
    pub fn message(&self) -> String {
        use alloc::string::ToString;
        self.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub omega: f64,
    pub lambda: f64,
    pub b: f64,
    /// Sum of squared residuals.
    pub objective: f64,
    /// `model - data` per point.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<FitWarning>,
}

/// `model(omega t_i; lambda, b) - data_i` for every point.
pub fn residuals(omega: f64, lambda: f64, b: f64, data: &DisagreementCurve) -> Vec<f64> {
    let params = match ModelParams::new(lambda, b, 0.0) {
        Ok(p) => p,
        Err(_) => return vec![f64::INFINITY; data.len()],
    };
    data.times()
        .iter()
        .zip(data.probabilities())
        .map(|(&t, &y)| {
            disagreement_probability(omega * t, &params).expect("on-edge parameters have a closed form") - y
        })
        .collect()
}

/// Sum of squared residuals.
pub fn objective(omega: f64, lambda: f64, b: f64, data: &DisagreementCurve) -> f64 {
    residuals(omega, lambda, b, data).iter().map(|r| r * r).sum()
}

/// Outcome of one bounded simplex run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub diameter: f64,
    pub converged: bool,
}

fn project(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, p) in simplex.iter().enumerate() {
        for q in &simplex[i + 1..] {
            let dist = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            d = d.max(dist);
        }
    }
    d
}

/// Nelder–Mead on the unit box `[0, 1]^n`.
///
/// Trial points are projected onto the box. Stops when the largest
/// vertex-to-vertex distance drops below `tol` or after `max_iters`
/// iterations.
pub fn nelder_mead_unit_box(
    mut f: impl FnMut(&[f64]) -> f64,
    start: &[f64],
    step: f64,
    tol: f64,
    max_iters: usize,
) -> SimplexResult {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut x0 = start.to_vec();
    project(&mut x0);
    simplex.push(x0.clone());
    for i in 0..n {
        let mut x = x0.clone();
        x[i] = if x[i] + step <= 1.0 { x[i] + step } else { x[i] - step };
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    let mut iterations = 0;

    loop {
        // order vertices by value, ties by coordinates
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| cmp_point(values[a], &simplex[a], values[b], &simplex[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let d = diameter(&simplex);
        if d < tol || iterations >= max_iters {
            return SimplexResult {
                x: simplex[0].clone(),
                value: values[0],
                iterations,
                diameter: d,
                converged: d < tol,
            };
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64)
            .collect();
        let towards = |coef: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            project(&mut x);
            x
        };

        let xr = towards(1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = towards(2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = towards(0.5);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = towards(-0.5);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..=n {
            let x: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            values[i] = f(&x);
            simplex[i] = x;
        }
    }
}

fn cmp_point(fa: f64, a: &[f64], fb: f64, b: &[f64]) -> Ordering {
    fa.total_cmp(&fb).then_with(|| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Fits `(omega, lambda, b)` to an on-edge disagreement record.
///
/// Degenerate records (constant data, or a rank-deficient Jacobian at the
/// optimum) are flagged with `converged = false` and a warning rather than
/// an error.
pub fn fit(data: &DisagreementCurve, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if data.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints { got: data.len() });
    }
    let dims = config.free_bounds().len();
    let eval = |z: &[f64]| {
        let [w, l, b] = config.params(z);
        let value = objective(w, l, b, data);
        if value.is_finite() {
            value
        } else {
            f64::INFINITY
        }
    };

    // grid seeds at cell centres
    let g = config.grid_seeds;
    let mut seeds: Vec<(f64, Vec<f64>)> = Vec::with_capacity(g.pow(dims as u32));
    let mut idx = vec![0usize; dims];
    loop {
        let z: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) / g as f64).collect();
        seeds.push((eval(&z), z));
        let mut k = 0;
        while k < dims {
            idx[k] += 1;
            if idx[k] < g {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dims {
            break;
        }
    }
    seeds.sort_by(|a, b| cmp_point(a.0, &a.1, b.0, &b.1));

    let step = 0.5 / g as f64;
    let mut best: Option<SimplexResult> = None;
    let mut total_iterations = 0;
    for (_, z) in seeds.iter().take(config.refine_top) {
        let run = nelder_mead_unit_box(eval, z, step, config.tolerance, config.max_iters);
        total_iterations += run.iterations;
        let better = match &best {
            None => true,
            Some(b) => cmp_point(run.value, &run.x, b.value, &b.x).is_lt(),
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one seed is refined");
    let [omega, lambda, b] = config.params(&best.x);
    let residuals = residuals(omega, lambda, b, data);
    let objective = residuals.iter().map(|r| r * r).sum();

    let mut warnings = Vec::new();
    let first = data.probabilities()[0];
    let constant = data.probabilities().iter().all(|&p| p == first);
    if constant {
        warnings.push(FitWarning::ConstantData);
    }
    let condition = jacobian_condition(config, &best.x, data);
    if condition.is_nan() || condition >= 1e12 {
        warnings.push(FitWarning::RankDeficient { condition });
    }
    if !best.converged {
        warnings.push(FitWarning::IterationLimit);
    }
    let mut at_bound = |param: &'static str, bounds: &Bounds, value: f64| {
        if bounds.contains(value) && (value == bounds.min || value == bounds.max) {
            warnings.push(FitWarning::AtBound { param });
        }
    };
    if config.pinned_omega.is_none() {
        at_bound("omega", &config.omega, omega);
    }
    at_bound("lambda", &config.lambda, lambda);
    at_bound("b", &config.b, b);

    let degenerate = warnings
        .iter()
        .any(|w| matches!(w, FitWarning::ConstantData | FitWarning::RankDeficient { .. }));
    Ok(FitResult {
        omega,
        lambda,
        b,
        objective,
        residuals,
        converged: best.converged && !degenerate,
        iterations: total_iterations,
        warnings,
    })
}

// Condition number of J^T J for the residuals in unit-box coordinates,
// by central differences. Infinite when J^T J is singular.
fn jacobian_condition(config: &FitConfig, z: &[f64], data: &DisagreementCurve) -> f64 {
    let n = z.len();
    let h = 1e-6;
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (z.to_vec(), z.to_vec());
            lo[k] = (lo[k] - h).max(0.0);
            hi[k] = (hi[k] + h).min(1.0);
            let width = hi[k] - lo[k];
            let [w0, l0, b0] = config.params(&lo);
            let [w1, l1, b1] = config.params(&hi);
            let r0 = residuals(w0, l0, b0, data);
            let r1 = residuals(w1, l1, b1, data);
            r1.iter().zip(&r0).map(|(a, b)| (a - b) / width).collect()
        })
        .collect();
    let jtj = crate::linalg::ComplexMatrix::from_fn(n, |i, j| {
        crate::C64::new(columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum(), 0.0)
    });
    let Ok(op) = HermitianOperator::new(jtj) else {
        return f64::INFINITY;
    };
    let eig = hermitian_eigendecomposition(&op);
    let max = eig.values[0];
    let min = eig.values[n - 1];
    if max <= 0.0 || min <= max * 1e-300 {
        f64::INFINITY
    } else {
        max / min
    }
}
