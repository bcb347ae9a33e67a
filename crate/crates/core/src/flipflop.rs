//! Model α: two readings of a metastable 1-bit recorder.
//!
//! Two particles at `x` and `y` sit on an inverted parabolic hump and are
//! coupled by `λ (x - y)² / 4`. In the rotated coordinates
//! `u = (x + y)/√2` and `v = (x - y)/√2` the problem separates into an
//! inverted oscillator in `u` and an oscillator with spring `λ - 1` in `v`.
//! Starting from a product Gaussian of width `b` centred at `(c, c)`, the
//! density stays Gaussian in `(u, v)` with widths `B1(t)` and `B2(t)`.
//!
//! Everything here is dimensionless: time in units of `1/ω` and length in
//! units of `sqrt(ħ / mω)`. [`PhysicalParams`] converts at the boundary.
//!
//! A reading is `0` for a negative coordinate and `1` for a positive one.
//! The readings disagree in the quadrants where `x·y < 0`.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_2_PI, PI, SQRT_2};
use core::fmt;

use thiserror::Error;
// Float methods come from std when it is linked and from num-traits otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::quadrature::{integrate, QuadratureConfig, QuadratureError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlipflopError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("the closed form needs c = 0 (got c = {c}); use quadrant_disagreement_numeric")]
    BiasedPacket { c: f64 },
    #[error("times and probabilities differ in length ({times} vs {probabilities})")]
    CurveLength { times: usize, probabilities: usize },
    #[error("probability {value} at index {index} is outside [0, 1]")]
    ProbabilityRange { index: usize, value: f64 },
    #[error("times must be strictly increasing (index {index})")]
    NonMonotoneTimes { index: usize },
    #[error("widths are not finite at t = {t}")]
    WidthOverflow { t: f64 },
    #[error("quadrant integration failed: {0}")]
    Quadrature(#[from] QuadratureError),
}

pub type Result<T> = core::result::Result<T, FlipflopError>;

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(FlipflopError::NonPositive { name, value })
    }
}

fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(FlipflopError::NonFinite { name, value })
    }
}

/// Dimensionless parameters of model α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Coupling; any real value.
    pub lambda: f64,
    /// Initial packet width.
    pub b: f64,
    /// Bias: the packet starts centred at `(c, c)`.
    pub c: f64,
    /// Quantum spreading factor `ħ² / (ω² m² b_phys⁴)`, which is `1/b⁴` in
    /// natural units. Setting it to 0 gives the classical limit.
    pub hfac: f64,
}

impl ModelParams {
    /// Parameters in natural units, with `hfac = 1/b⁴`.
    pub fn new(lambda: f64, b: f64, c: f64) -> Result<Self> {
        let b = positive("b", b)?;
        Self::with_hfac(lambda, b, c, 1.0 / (b * b * b * b))
    }

    pub fn with_hfac(lambda: f64, b: f64, c: f64, hfac: f64) -> Result<Self> {
        let lambda = finite("lambda", lambda)?;
        let b = positive("b", b)?;
        let c = finite("c", c)?;
        if !(hfac.is_finite() && hfac >= 0.0) {
            return Err(FlipflopError::NonFinite { name: "hfac", value: hfac });
        }
        Ok(ModelParams { lambda, b, c, hfac })
    }

    /// `B1²(t)`, the variance scale along `u`.
    pub fn b1_squared(&self, t: f64) -> f64 {
        b1_squared(self.b, t, self.hfac)
    }

    /// `B2²(t)`, the variance scale along `v`.
    pub fn b2_squared(&self, t: f64) -> f64 {
        b2_squared(self.b, self.lambda, t, self.hfac)
    }
}

/// A parameter set in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub mass: f64,
    pub spring: f64,
    pub hbar: f64,
    pub lambda: f64,
    /// Initial packet width (length).
    pub width: f64,
    /// Initial packet centre (length).
    pub bias: f64,
}

/// Unit scales used to move between physical and natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    /// `sqrt(k/m)`, one over the natural time unit.
    pub omega: f64,
    /// `sqrt(ħ / (m ω))`, the natural length unit.
    pub length: f64,
    pub mass: f64,
    pub hbar: f64,
}

impl PhysicalParams {
    pub fn omega(&self) -> f64 {
        (self.spring / self.mass).sqrt()
    }

    pub fn length_scale(&self) -> f64 {
        (self.hbar / (self.mass * self.omega())).sqrt()
    }

    pub fn scales(&self) -> Result<Scales> {
        positive("mass", self.mass)?;
        positive("spring", self.spring)?;
        positive("hbar", self.hbar)?;
        Ok(Scales {
            omega: self.omega(),
            length: self.length_scale(),
            mass: self.mass,
            hbar: self.hbar,
        })
    }

    /// Natural-unit parameters together with the scales needed to go back.
    pub fn to_dimensionless(&self) -> Result<(ModelParams, Scales)> {
        let scales = self.scales()?;
        positive("width", self.width)?;
        finite("bias", self.bias)?;
        let b = self.width / scales.length;
        let m_omega = scales.mass * scales.omega;
        let hfac = (self.hbar / (m_omega * self.width * self.width)).powi(2);
        let params = ModelParams::with_hfac(self.lambda, b, self.bias / scales.length, hfac)?;
        Ok((params, scales))
    }

    /// Disagreement probability at physical time `t`.
    pub fn disagreement_probability(&self, t: f64) -> Result<f64> {
        let (params, scales) = self.to_dimensionless()?;
        disagreement_probability(scales.omega * t, &params)
    }
}

impl Scales {
    pub fn to_physical(&self, params: &ModelParams) -> PhysicalParams {
        PhysicalParams {
            mass: self.mass,
            spring: self.mass * self.omega * self.omega,
            hbar: self.hbar,
            lambda: params.lambda,
            width: params.b * self.length,
            bias: params.c * self.length,
        }
    }
}

const SERIES_MU: f64 = 1e-9;

/// `sin²(√(λ-1) t)/(λ-1)`, continued through `t²` at `λ = 1` to
/// `sinh²(√(1-λ) t)/(1-λ)` below it.
pub fn s_lambda(lambda: f64, t: f64) -> f64 {
    let mu = lambda - 1.0;
    let t2 = t * t;
    if mu.abs() < SERIES_MU && (mu * t2).abs() < 1e-2 {
        return t2 * (1.0 - mu * t2 / 3.0 + 2.0 * mu * mu * t2 * t2 / 45.0);
    }
    if mu > 0.0 {
        let k = mu.sqrt();
        let s = libm::sin(k * t);
        s * s / mu
    } else {
        let k = (-mu).sqrt();
        let s = libm::sinh(k * t);
        s * s / -mu
    }
}

// ln s_lambda for lambda < 1, valid when sinh overflows.
fn ln_s_lambda_hyperbolic(lambda: f64, t: f64) -> f64 {
    let k2 = 1.0 - lambda;
    2.0 * ln_sinh(k2.sqrt() * t) - libm::log(k2)
}

fn ln_sinh(x: f64) -> f64 {
    x - core::f64::consts::LN_2 + libm::log1p(-libm::exp(-2.0 * x))
}

fn ln_cosh(x: f64) -> f64 {
    let x = x.abs();
    x - core::f64::consts::LN_2 + libm::log1p(libm::exp(-2.0 * x))
}

/// `b²[1 + (hfac + 1) sinh² t]`.
pub fn b1_squared(b: f64, t: f64, hfac: f64) -> f64 {
    let s = libm::sinh(t);
    b * b * (1.0 + (hfac + 1.0) * s * s)
}

/// `b²[1 + (hfac - (λ-1)) s_λ(t)]`.
pub fn b2_squared(b: f64, lambda: f64, t: f64, hfac: f64) -> f64 {
    b * b * (1.0 + (hfac - (lambda - 1.0)) * s_lambda(lambda, t))
}

/// `B2²/B1²`, with a logarithmic fallback once both overflow.
fn width_ratio(t: f64, p: &ModelParams) -> f64 {
    let mu = p.lambda - 1.0;
    let s = libm::sinh(t);
    let num = 1.0 + (p.hfac - mu) * s_lambda(p.lambda, t);
    let den = 1.0 + (p.hfac + 1.0) * s * s;
    if num.is_finite() && den.is_finite() {
        return num / den;
    }
    if num.is_finite() {
        return 0.0;
    }
    let ln_num = libm::log(p.hfac - mu) + ln_s_lambda_hyperbolic(p.lambda, t);
    let ln_den = libm::log(p.hfac + 1.0) + 2.0 * ln_sinh(t);
    libm::exp(ln_num - ln_den)
}

/// `|ψ(x, y, t)|²`.
pub fn joint_density(x: f64, y: f64, t: f64, p: &ModelParams) -> f64 {
    let b1 = p.b1_squared(t);
    let b2 = p.b2_squared(t);
    let u = (x + y) / SQRT_2;
    let v = (x - y) / SQRT_2;
    let du = u - p.c * SQRT_2 * libm::cosh(t);
    let value = libm::exp(-du * du / b1 - v * v / b2) / (PI * (b1 * b2).sqrt());
    if value.is_finite() {
        value
    } else {
        0.0
    }
}

/// Closed-form probability that the two readings disagree, for an on-edge
/// packet (`c = 0`): `(2/π) atan(B2/B1)`.
pub fn disagreement_probability(t: f64, p: &ModelParams) -> Result<f64> {
    if p.c != 0.0 {
        return Err(FlipflopError::BiasedPacket { c: p.c });
    }
    Ok(FRAC_2_PI * libm::atan(width_ratio(t, p).sqrt()))
}

/// The `ħ → 0` limit: `(2/π) atan(|cos(√(λ-1) ωt) / cosh(ωt)|)`, with
/// `cos` replaced by `cosh(√(1-λ) ωt)` for `λ < 1`.
pub fn classical_disagreement(t: f64, lambda: f64, omega: f64) -> f64 {
    let wt = omega * t;
    let mu = lambda - 1.0;
    let ratio = if mu >= 0.0 {
        (libm::cos(mu.sqrt() * wt) / libm::cosh(wt)).abs()
    } else {
        libm::exp(ln_cosh((-mu).sqrt() * wt) - ln_cosh(wt))
    };
    FRAC_2_PI * libm::atan(ratio)
}

/// Joint readings of the two particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Reading {
    /// Both read 0: `x < 0, y < 0`.
    R00,
    /// `x < 0, y > 0`.
    R01,
    /// `x > 0, y < 0`.
    R10,
    /// Both read 1: `x > 0, y > 0`.
    R11,
}

impl Reading {
    pub const ALL: [Reading; 4] = [Reading::R00, Reading::R01, Reading::R10, Reading::R11];

    pub fn label(self) -> &'static str {
        match self {
            Reading::R00 => "00",
            Reading::R01 => "01",
            Reading::R10 => "10",
            Reading::R11 => "11",
        }
    }

    pub fn of_point(x: f64, y: f64) -> Self {
        match (x > 0.0, y > 0.0) {
            (false, false) => Reading::R00,
            (false, true) => Reading::R01,
            (true, false) => Reading::R10,
            (true, true) => Reading::R11,
        }
    }

    pub fn is_disagreement(self) -> bool {
        matches!(self, Reading::R01 | Reading::R10)
    }
}

impl fmt::Display for Reading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Probability mass of each quadrant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrantProbabilities {
    pub r00: f64,
    pub r01: f64,
    pub r10: f64,
    pub r11: f64,
    /// Summed quadrature error estimate.
    pub error: f64,
}

impl QuadrantProbabilities {
    pub fn get(&self, reading: Reading) -> f64 {
        match reading {
            Reading::R00 => self.r00,
            Reading::R01 => self.r01,
            Reading::R10 => self.r10,
            Reading::R11 => self.r11,
        }
    }

    pub fn disagreement(&self) -> f64 {
        self.r01 + self.r10
    }
}

/// Integrates the density over each quadrant, for any bias `c`.
///
/// In `(u, v)` the quadrants are `R11 = {u > |v|}`, `R00 = {u < -|v|}` and
/// the discord quadrants `{|u| < |v|}` split by the sign of `v`. The `u`
/// integral is a Gaussian CDF, leaving an adaptive integral over `v ≥ 0`.
pub fn quadrant_probabilities(t: f64, p: &ModelParams) -> Result<QuadrantProbabilities> {
    let b1 = p.b1_squared(t).sqrt();
    let b2 = p.b2_squared(t).sqrt();
    let centre = p.c * SQRT_2 * libm::cosh(t);
    if !(b1.is_finite() && b2.is_finite() && centre.is_finite()) || b1 == 0.0 || b2 == 0.0 {
        return Err(FlipflopError::WidthOverflow { t });
    }
    let g = |v: f64| libm::exp(-(v * v) / (b2 * b2)) / (PI.sqrt() * b2);
    // P(u < -v) and P(u > v) for the u-marginal.
    let below = |v: f64| 0.5 * libm::erfc((v + centre) / b1);
    let above = |v: f64| 0.5 * libm::erfc((v - centre) / b1);
    let cfg = QuadratureConfig {
        abs_tol: 1e-13,
        rel_tol: 0.0,
        max_intervals: 4000,
    };
    let upper = 12.0 * b2;
    let r00 = integrate(|v| 2.0 * g(v) * below(v), 0.0, upper, &cfg)?;
    let r11 = integrate(|v| 2.0 * g(v) * above(v), 0.0, upper, &cfg)?;
    let half = integrate(|v| g(v) * (1.0 - below(v) - above(v)), 0.0, upper, &cfg)?;
    Ok(QuadrantProbabilities {
        r00: r00.value,
        r01: half.value,
        r10: half.value,
        r11: r11.value,
        error: r00.error + r11.error + 2.0 * half.error,
    })
}

/// Disagreement probability by quadrature, valid for any bias.
pub fn quadrant_disagreement_numeric(t: f64, p: &ModelParams) -> Result<f64> {
    Ok(quadrant_probabilities(t, p)?.disagreement())
}

/// Whether a curve's time axis is in natural or physical units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnits {
    Dimensionless,
    Physical,
}

impl TimeUnits {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeUnits::Dimensionless => "dimensionless",
            TimeUnits::Physical => "physical",
        }
    }
}

impl fmt::Display for TimeUnits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for TimeUnits {
    type Err = ();

    fn from_str(s: &str) -> core::result::Result<Self, ()> {
        match s {
            "dimensionless" => Ok(TimeUnits::Dimensionless),
            "physical" => Ok(TimeUnits::Physical),
            _ => Err(()),
        }
    }
}

/// Disagreement probability sampled on a strictly increasing time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DisagreementCurve {
    times: Vec<f64>,
    probabilities: Vec<f64>,
    units: TimeUnits,
}

impl DisagreementCurve {
    pub fn new(times: Vec<f64>, probabilities: Vec<f64>, units: TimeUnits) -> Result<Self> {
        if times.len() != probabilities.len() {
            return Err(FlipflopError::CurveLength {
                times: times.len(),
                probabilities: probabilities.len(),
            });
        }
        for (index, &t) in times.iter().enumerate() {
            finite("time", t)?;
            if index > 0 && t <= times[index - 1] {
                return Err(FlipflopError::NonMonotoneTimes { index });
            }
        }
        if let Some((index, &value)) = probabilities
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(FlipflopError::ProbabilityRange { index, value });
        }
        Ok(DisagreementCurve {
            times,
            probabilities,
            units,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn units(&self) -> TimeUnits {
        self.units
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Indices of strict interior local maxima.
    pub fn local_maxima(&self) -> Vec<usize> {
        let p = &self.probabilities;
        (1..p.len().saturating_sub(1))
            .filter(|&i| p[i] > p[i - 1] && p[i] > p[i + 1])
            .collect()
    }
}

/// `0, dt, 2 dt, ...` up to `t_max` inclusive (the endpoint is snapped when
/// it lies within rounding of a grid point).
pub fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    positive("dt", dt)?;
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(FlipflopError::NonFinite { name: "t_max", value: t_max });
    }
    let steps = libm::floor(t_max / dt + 1e-9) as usize;
    Ok((0..=steps).map(|i| i as f64 * dt).collect())
}

/// Closed-form curve over `times` (natural units).
pub fn disagreement_curve(times: &[f64], p: &ModelParams) -> Result<DisagreementCurve> {
    let probabilities = times
        .iter()
        .map(|&t| disagreement_probability(t, p))
        .collect::<Result<Vec<_>>>()?;
    DisagreementCurve::new(times.to_vec(), probabilities, TimeUnits::Dimensionless)
}

/// Quadrature curve over `times`; works for any bias.
pub fn numeric_curve(times: &[f64], p: &ModelParams) -> Result<DisagreementCurve> {
    let probabilities = times
        .iter()
        .map(|&t| quadrant_disagreement_numeric(t, p).map(|v| v.clamp(0.0, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    DisagreementCurve::new(times.to_vec(), probabilities, TimeUnits::Dimensionless)
}

/// Classical-limit curve over `times`, in units of `1/omega`.
pub fn classical_curve(times: &[f64], lambda: f64, omega: f64) -> Result<DisagreementCurve> {
    let probabilities = times.iter().map(|&t| classical_disagreement(t, lambda, omega)).collect();
    let units = if omega == 1.0 {
        TimeUnits::Dimensionless
    } else {
        TimeUnits::Physical
    };
    DisagreementCurve::new(times.to_vec(), probabilities, units)
}
