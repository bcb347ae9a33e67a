//! One-dimensional split-step solver for `i ∂φ/∂t = ½(-∂² + κ s²) φ`.
//!
//! In `u = (x+y)/√2`, `v = (x-y)/√2` the two-particle problem is a product of
//! such problems, with `κ = -1` along `u` and `κ = λ - 1` along `v`.
//! [`separation_check`] evolves both factors and the full grid side by side
//! and compares the tensor product against the grid state.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::pde::{init_packet, wavenumbers, GridSpec, GridState, LeakagePolicy, PdeError, Propagator, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    points: usize,
    spacing: f64,
}

impl Line {
    pub fn new(points: usize, spacing: f64) -> Result<Self> {
        if points < 2 || !points.is_power_of_two() {
            return Err(PdeError::GridSize(points));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(PdeError::HalfWidth(spacing));
        }
        Ok(Line { points, spacing })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `s_m = (m - points/2) h`.
    pub fn coord(&self, m: usize) -> f64 {
        (m as f64 - (self.points / 2) as f64) * self.spacing
    }
}

/// Normalized `exp(-(s - centre)² / 2b²)` on the line.
pub fn gaussian_line(line: &Line, centre: f64, b: f64) -> Vec<C64> {
    let mut psi: Vec<C64> = (0..line.points)
        .map(|m| {
            let d = line.coord(m) - centre;
            C64::new((-d * d / (2.0 * b * b)).exp(), 0.0)
        })
        .collect();
    let norm = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * line.spacing).sqrt();
    psi.iter_mut().for_each(|z| *z /= norm);
    psi
}

/// Takes `steps` Strang steps of size `dt`.
pub fn evolve_line(line: &Line, psi: &mut [C64], kappa: f64, dt: f64, steps: usize) {
    let n = line.points;
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let half_v: Vec<C64> = (0..n)
        .map(|m| {
            let s = line.coord(m);
            C64::from_polar(1.0, -0.25 * dt * kappa * s * s)
        })
        .collect();
    let scale = 1.0 / n as f64;
    let kin: Vec<C64> = wavenumbers(n, line.spacing)
        .iter()
        .map(|k| C64::from_polar(scale, -0.5 * dt * k * k))
        .collect();
    let mut scratch = vec![C64::new(0.0, 0.0); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
    for _ in 0..steps {
        psi.iter_mut().zip(&half_v).for_each(|(z, p)| *z *= p);
        forward.process_with_scratch(psi, &mut scratch);
        psi.iter_mut().zip(&kin).for_each(|(z, k)| *z *= k);
        inverse.process_with_scratch(psi, &mut scratch);
        psi.iter_mut().zip(&half_v).for_each(|(z, p)| *z *= p);
    }
}

/// `(mean, variance)` of `|φ|²` on the line.
pub fn line_moments(line: &Line, psi: &[C64]) -> (f64, f64) {
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (m, z) in psi.iter().enumerate() {
        let p = z.norm_sqr();
        let s = line.coord(m);
        m0 += p;
        m1 += p * s;
        m2 += p * s * s;
    }
    let mean = m1 / m0;
    (mean, m2 / m0 - mean * mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    /// The full two-dimensional state at the target time.
    pub grid: GridState,
    /// Discrete `L²` distance between the grid and the tensor product.
    pub l2_difference: f64,
    pub max_abs_difference: f64,
}

/// Evolves the grid problem and its `(u, v)` factors to time `t` and compares.
///
/// The factor lines have spacing `dx/√2` and `2n` points, so that grid node
/// `(i, j)` lands exactly on line nodes `i + j` (for `u`) and `i - j + n`
/// (for `v`).
pub fn separation_check(spec: GridSpec, lambda: f64, b: f64, c: f64, t: f64) -> Result<SeparationReport> {
    let n = spec.n();
    let mut grid = init_packet(spec, b, c)?;
    let report = Propagator::new(spec, lambda).evolve(&mut grid, t, LeakagePolicy::Error)?;

    let line = Line::new(2 * n, spec.dx() / std::f64::consts::SQRT_2)?;
    let mut phi = gaussian_line(&line, std::f64::consts::SQRT_2 * c, b);
    let mut chi = gaussian_line(&line, 0.0, b);
    evolve_line(&line, &mut phi, -1.0, report.dt_used, report.steps);
    evolve_line(&line, &mut chi, lambda - 1.0, report.dt_used, report.steps);

    let dx = spec.dx();
    let mut sum = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let product = phi[i + j] * chi[i + n - j];
            let d = (grid.at(i, j) - product).norm();
            sum += d * d;
            worst = worst.max(d);
        }
    }
    Ok(SeparationReport {
        grid,
        l2_difference: (sum * dx * dx).sqrt(),
        max_abs_difference: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn line_coordinates() {
        let line = Line::new(8, 0.5).unwrap();
        assert_eq!(line.coord(4), 0.0);
        assert_eq!(line.coord(0), -2.0);
        assert!(Line::new(6, 0.5).is_err());
    }

    #[test]
    fn free_line_packet_spreads() {
        // free Gaussian: variance (b² / 2)(1 + t² / b⁴)
        let line = Line::new(1024, 0.05).unwrap();
        let b = 0.7;
        let mut psi = gaussian_line(&line, 0.0, b);
        evolve_line(&line, &mut psi, 0.0, 0.01, 100);
        let (mean, var) = line_moments(&line, &psi);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 0.5 * b * b * (1.0 + 1.0 / (b * b * b * b)), epsilon = 1e-8);
    }

    #[test]
    fn harmonic_line_is_periodic() {
        // κ = 1 with b = 1 is the ground state
        let line = Line::new(256, 0.08).unwrap();
        let psi0 = gaussian_line(&line, 0.0, 1.0);
        let mut psi = psi0.clone();
        evolve_line(&line, &mut psi, 1.0, 0.01, 200);
        let overlap: C64 = psi0.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum::<C64>() * line.spacing();
        assert_abs_diff_eq!(overlap.norm(), 1.0, epsilon = 1e-8);
    }
}
