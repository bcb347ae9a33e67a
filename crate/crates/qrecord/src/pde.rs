//! Split-step Fourier solver for the two-particle recorder equation
//!
//! `i ∂ψ/∂t = ½(-∂²/∂x² - ∂²/∂y² - x² - y² + (λ/2)(x - y)²) ψ`
//!
//! on the periodic square `[-L, L)²` with `n` points per axis. Each step is a
//! Strang splitting: half a potential step, a full kinetic step in Fourier
//! space, half a potential step. Row and column transforms run in parallel;
//! every transform is independent so results do not depend on scheduling.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use qrecord_core::flipflop::Reading;
use qrecord_core::linalg::{hermitian_eigendecomposition, ComplexMatrix, HermitianOperator};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Largest accepted time step.
pub const MAX_DT: f64 = 0.01;
/// Smallest accepted grid.
pub const MIN_POINTS: usize = 64;
/// Width of the boundary band watched for leakage, in cells.
pub const BOUNDARY_BAND: usize = 2;
/// Band mass above which the domain is considered too small.
pub const LEAKAGE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("grid size {0} must be a power of two and at least {MIN_POINTS}")]
    GridSize(usize),
    #[error("half width {0} must be positive and finite")]
    HalfWidth(f64),
    #[error("time step {0} must lie in (0, {MAX_DT}]")]
    TimeStep(f64),
    #[error("packet width {0} must be positive and finite")]
    PacketWidth(f64),
    #[error("packet (6b + |c| = {extent}) does not fit inside the domain half width {half_width}")]
    PacketTooWide { extent: f64, half_width: f64 },
    #[error("target time {target} lies before the current time {current}")]
    Backwards { target: f64, current: f64 },
    #[error(
        "boundary leakage {mass:e} exceeds {LEAKAGE_THRESHOLD:e} at t = {t}; enlarge the domain (--L) or shorten the horizon"
    )]
    Leakage { t: f64, mass: f64 },
    #[error("states live on different grids")]
    GridMismatch,
    #[error("Gaussian fit failed: {0}")]
    Fit(&'static str),
}

pub type Result<T> = std::result::Result<T, PdeError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    half_width: f64,
    dt: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64, dt: f64) -> Result<Self> {
        if n < MIN_POINTS || !n.is_power_of_two() {
            return Err(PdeError::GridSize(n));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(PdeError::HalfWidth(half_width));
        }
        if !(dt.is_finite() && dt > 0.0 && dt <= MAX_DT) {
            return Err(PdeError::TimeStep(dt));
        }
        Ok(GridSpec { n, half_width, dt })
    }

    /// `n = 256`, `L = 12`, `dt = 0.005`.
    pub fn standard() -> Self {
        GridSpec {
            n: 256,
            half_width: 12.0,
            dt: 0.005,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Coordinate of node `i`; node `n/2` sits exactly at 0.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        wavenumbers(self.n, self.dx())
    }
}

pub(crate) fn wavenumbers(n: usize, dx: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * dx);
    (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
            m * dk
        })
        .collect()
}

/// `ψ(x_i, y_j)` stored row-major with `i` (the `x` index) as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    spec: GridSpec,
    psi: Vec<C64>,
    t: f64,
}

impl GridState {
    pub fn from_parts(spec: GridSpec, psi: Vec<C64>, t: f64) -> Result<Self> {
        if psi.len() != spec.n * spec.n {
            return Err(PdeError::GridMismatch);
        }
        Ok(GridState { spec, psi, t })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn psi(&self) -> &[C64] {
        &self.psi
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.psi[i * self.spec.n + j]
    }

    /// `|ψ|²` per node (a density, not yet multiplied by the cell area).
    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Discrete `L²` norm squared, `Σ |ψ|² dx²`.
    pub fn norm_sqr(&self) -> f64 {
        let dx = self.spec.dx();
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx * dx
    }

    /// Discrete `L²` distance to another state on the same grid.
    pub fn l2_distance(&self, other: &GridState) -> Result<f64> {
        if self.spec.n != other.spec.n || self.spec.half_width != other.spec.half_width {
            return Err(PdeError::GridMismatch);
        }
        let dx = self.spec.dx();
        let s: f64 = self.psi.iter().zip(&other.psi).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((s * dx * dx).sqrt())
    }

    /// Probability mass within [`BOUNDARY_BAND`] cells of the domain edge.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.spec.n;
        let dx = self.spec.dx();
        let band = BOUNDARY_BAND;
        let mut s = 0.0;
        for i in 0..n {
            let edge_row = i < band || i >= n - band;
            let row = &self.psi[i * n..(i + 1) * n];
            if edge_row {
                s += row.iter().map(|z| z.norm_sqr()).sum::<f64>();
            } else {
                s += row[..band].iter().chain(&row[n - band..]).map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        s * dx * dx
    }
}

/// Product Gaussian `exp(-(x-c)²/2b²) exp(-(y-c)²/2b²)`, normalized on the
/// grid.
pub fn init_packet(spec: GridSpec, b: f64, c: f64) -> Result<GridState> {
    if !(b.is_finite() && b > 0.0) {
        return Err(PdeError::PacketWidth(b));
    }
    let extent = 6.0 * b + c.abs();
    if extent.is_nan() || extent >= spec.half_width {
        return Err(PdeError::PacketTooWide {
            extent,
            half_width: spec.half_width,
        });
    }
    let n = spec.n;
    let profile: Vec<f64> = spec
        .coords()
        .iter()
        .map(|x| (-(x - c) * (x - c) / (2.0 * b * b)).exp())
        .collect();
    let mut psi: Vec<C64> = (0..n * n)
        .map(|k| C64::new(profile[k / n] * profile[k % n], 0.0))
        .collect();
    let dx = spec.dx();
    let norm = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx * dx).sqrt();
    psi.iter_mut().for_each(|z| *z /= norm);
    Ok(GridState { spec, psi, t: 0.0 })
}

/// `|Σ|ψ|² dx² - 1|`.
pub fn norm_check(state: &GridState) -> f64 {
    (state.norm_sqr() - 1.0).abs()
}

/// What [`Propagator::evolve`] does when the boundary band gets too heavy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakagePolicy {
    /// Stop with [`PdeError::Leakage`].
    Error,
    /// Keep going and report the largest band mass seen.
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveReport {
    pub steps: usize,
    /// Step actually used, so that the target time is hit exactly.
    pub dt_used: f64,
    /// Largest boundary-band mass observed after any step.
    pub max_boundary_mass: f64,
    /// Time at which the band mass first exceeded the threshold.
    pub leakage_onset: Option<f64>,
}

/// Evolution operator for a fixed grid and coupling.
pub struct Propagator {
    spec: GridSpec,
    lambda: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    potential: Vec<f64>,
    k2_half: Vec<f64>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("spec", &self.spec)
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl Propagator {
    pub fn new(spec: GridSpec, lambda: f64) -> Self {
        let n = spec.n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let x = spec.coords();
        let potential = (0..n * n)
            .map(|k| {
                let (xi, yj) = (x[k / n], x[k % n]);
                let d = xi - yj;
                0.5 * (-xi * xi - yj * yj + 0.5 * lambda * d * d)
            })
            .collect();
        let k2_half = spec.wavenumbers().iter().map(|k| 0.5 * k * k).collect();
        Propagator {
            spec,
            lambda,
            forward,
            inverse,
            potential,
            k2_half,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Potential `V(x_i, y_j)` per node.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    fn fft_rows(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.spec.n;
        data.par_chunks_mut(n).for_each_init(
            || vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
            |scratch, row| plan.process_with_scratch(row, scratch),
        );
    }

    fn fft2(&self, psi: &mut [C64], buffer: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.spec.n;
        self.fft_rows(psi, plan);
        transpose(psi, buffer, n);
        self.fft_rows(buffer, plan);
        transpose(buffer, psi, n);
    }

    /// Advances `state` to `t_target`, using the largest step not above
    /// `spec.dt` that divides the interval evenly.
    pub fn evolve(&self, state: &mut GridState, t_target: f64, policy: LeakagePolicy) -> Result<EvolveReport> {
        if state.spec != self.spec {
            return Err(PdeError::GridMismatch);
        }
        if t_target < state.t {
            return Err(PdeError::Backwards {
                target: t_target,
                current: state.t,
            });
        }
        let span = t_target - state.t;
        let steps = (span / self.spec.dt - 1e-9).ceil().max(0.0) as usize;
        let mut report = EvolveReport {
            steps,
            dt_used: 0.0,
            max_boundary_mass: state.boundary_mass(),
            leakage_onset: None,
        };
        if steps == 0 {
            state.t = t_target;
            return Ok(report);
        }
        let dt = span / steps as f64;
        report.dt_used = dt;
        let n = self.spec.n;
        let half_v: Vec<C64> = self.potential.iter().map(|v| C64::from_polar(1.0, -0.5 * dt * v)).collect();
        let kin_1d: Vec<C64> = self.k2_half.iter().map(|k| C64::from_polar(1.0, -dt * k)).collect();
        let scale = 1.0 / (n * n) as f64;
        let mut buffer = vec![C64::new(0.0, 0.0); n * n];
        let t0 = state.t;

        for step in 0..steps {
            let psi = &mut state.psi;
            psi.par_iter_mut().zip(half_v.par_iter()).for_each(|(z, p)| *z *= p);
            self.fft2(psi, &mut buffer, &self.forward);
            psi.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let ki = kin_1d[i] * scale;
                row.iter_mut().zip(&kin_1d).for_each(|(z, kj)| *z *= ki * kj);
            });
            self.fft2(psi, &mut buffer, &self.inverse);
            psi.par_iter_mut().zip(half_v.par_iter()).for_each(|(z, p)| *z *= p);

            state.t = if step + 1 == steps {
                t_target
            } else {
                t0 + (step + 1) as f64 * dt
            };
            let band = state.boundary_mass();
            report.max_boundary_mass = report.max_boundary_mass.max(band);
            if band > LEAKAGE_THRESHOLD {
                if report.leakage_onset.is_none() {
                    report.leakage_onset = Some(state.t);
                }
                if policy == LeakagePolicy::Error {
                    return Err(PdeError::Leakage { t: state.t, mass: band });
                }
            }
        }
        Ok(report)
    }
}

fn transpose(src: &[C64], dst: &mut [C64], n: usize) {
    dst.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, z) in row.iter_mut().enumerate() {
            *z = src[i * n + j];
        }
    });
}

/// Weight of a node for reading `r`: 1 inside the open quadrant, ½ on an
/// axis bordering it, ¼ at the origin.
fn quadrant_weight(reading: Reading, x: f64, y: f64) -> f64 {
    let side = |v: f64, positive: bool| {
        if v == 0.0 {
            0.5
        } else if (v > 0.0) == positive {
            1.0
        } else {
            0.0
        }
    };
    let (px, py) = match reading {
        Reading::R00 => (false, false),
        Reading::R01 => (false, true),
        Reading::R10 => (true, false),
        Reading::R11 => (true, true),
    };
    side(x, px) * side(y, py)
}

/// Probability mass in the quadrant of `reading`.
pub fn quadrant_mass(state: &GridState, reading: Reading) -> f64 {
    let spec = state.spec;
    let n = spec.n;
    let x = spec.coords();
    let dx = spec.dx();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = quadrant_weight(reading, x[i], x[j]);
            if w > 0.0 {
                total += w * state.psi[i * n + j].norm_sqr();
            }
        }
    }
    total * dx * dx
}

/// Mass where `x·y < 0`, axis nodes counted at half weight.
pub fn disagreement_from_grid(state: &GridState) -> f64 {
    quadrant_mass(state, Reading::R01) + quadrant_mass(state, Reading::R10)
}

/// Variances of `u = (x+y)/√2` and `v = (x-y)/√2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvVariances {
    pub u: f64,
    pub v: f64,
}

/// Raw second central moments of the grid density.
pub fn moment_variances(state: &GridState) -> UvVariances {
    let spec = state.spec;
    let n = spec.n;
    let x = spec.coords();
    let dx2 = spec.dx() * spec.dx();
    let (mut m0, mut mu, mut mv, mut muu, mut mvv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let p = state.psi[i * n + j].norm_sqr() * dx2;
            let u = (x[i] + x[j]) / std::f64::consts::SQRT_2;
            let v = (x[i] - x[j]) / std::f64::consts::SQRT_2;
            m0 += p;
            mu += p * u;
            mv += p * v;
            muu += p * u * u;
            mvv += p * v * v;
        }
    }
    let (eu, ev) = (mu / m0, mv / m0);
    UvVariances {
        u: muu / m0 - eu * eu,
        v: mvv / m0 - ev * ev,
    }
}

/// Variances from a Gaussian fit of `ln |ψ|²`.
///
/// Nodes with density above `1e-3` of the peak that lie in the inner half of
/// the domain enter a weighted least-squares fit of `ln ρ` to a general
/// quadratic in `(x, y)`, each row weighted by `ρ`. The quadratic part is
/// `-½ zᵀ P z`; the covariance is `P⁻¹`. Tails cut off or wrapped by the
/// periodic boundary barely affect the fit, unlike raw moments.
pub fn gaussian_fit_variances(state: &GridState) -> Result<UvVariances> {
    let spec = state.spec;
    let n = spec.n;
    let x = spec.coords();
    let rho = state.density();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(PdeError::Fit("empty state"));
    }
    let inner = spec.half_width / 2.0;
    let mut ata = [[0.0f64; 6]; 6];
    let mut atb = [0.0f64; 6];
    let mut rows = 0usize;
    for i in 0..n {
        for j in 0..n {
            let r = rho[i * n + j];
            let (xi, yj) = (x[i], x[j]);
            if r <= 1e-3 * peak || xi.abs() >= inner || yj.abs() >= inner {
                continue;
            }
            rows += 1;
            let a = [1.0, xi * xi, yj * yj, xi * yj, xi, yj];
            let w2 = r * r;
            let target = r.ln();
            for p in 0..6 {
                atb[p] += w2 * a[p] * target;
                for q in 0..6 {
                    ata[p][q] += w2 * a[p] * a[q];
                }
            }
        }
    }
    if rows < 6 {
        return Err(PdeError::Fit("too few nodes above the density floor"));
    }
    let coef = solve_symmetric(&ata, &atb)?;
    // ln ρ = c0 + c1 x² + c2 y² + c3 xy + ... = c0 - ½ zᵀ P z + ...
    let (pxx, pyy, pxy) = (-2.0 * coef[1], -2.0 * coef[2], -coef[3]);
    let det = pxx * pyy - pxy * pxy;
    if !(det > 0.0 && pxx > 0.0) {
        return Err(PdeError::Fit("fitted quadratic is not a Gaussian"));
    }
    let (sxx, syy, sxy) = (pyy / det, pxx / det, -pxy / det);
    Ok(UvVariances {
        u: 0.5 * (sxx + syy + 2.0 * sxy),
        v: 0.5 * (sxx + syy - 2.0 * sxy),
    })
}

// Solves a small symmetric positive definite system via its eigenbasis.
fn solve_symmetric(a: &[[f64; 6]; 6], b: &[f64; 6]) -> Result<[f64; 6]> {
    // Jacobi scaling keeps the x², x and 1 columns comparable.
    let d: Vec<f64> = (0..6).map(|i| a[i][i].sqrt().max(f64::MIN_POSITIVE)).collect();
    let m = ComplexMatrix::from_fn(6, |i, j| C64::new(a[i][j] / (d[i] * d[j]), 0.0));
    let op = HermitianOperator::new(m).map_err(|_| PdeError::Fit("normal matrix is not symmetric"))?;
    let eig = hermitian_eigendecomposition(&op);
    let top = eig.values[0];
    if eig.values[5].is_nan() || eig.values[5] <= top * 1e-14 {
        return Err(PdeError::Fit("normal matrix is singular"));
    }
    let mut out = [0.0; 6];
    for k in 0..6 {
        let v: Vec<f64> = (0..6).map(|i| eig.vectors[(i, k)].re).collect();
        let proj: f64 = (0..6).map(|i| v[i] * b[i] / d[i]).sum::<f64>() / eig.values[k];
        for i in 0..6 {
            out[i] += proj * v[i];
        }
    }
    for i in 0..6 {
        out[i] /= d[i];
    }
    Ok(out)
}
