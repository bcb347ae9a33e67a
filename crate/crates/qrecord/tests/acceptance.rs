//! Acceptance suite. Every criterion prints one `PASS` or `FAIL` line with the
//! measured quantity and its runtime; the process exits non-zero if any fail.
//!
//! Run alone with `cargo test -p qrecord --test acceptance`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use qrecord::pde::{
    disagreement_from_grid, gaussian_fit_variances, init_packet, moment_variances, GridSpec, GridState,
    LeakagePolicy, Propagator,
};
use qrecord_core::constraints::{check_overlap_constraint, check_separation_constraint, BoundReport};
use qrecord_core::fit::{fit, FitConfig, FitResult};
use qrecord_core::flipflop::{
    classical_disagreement, disagreement_curve, disagreement_probability, time_grid, DisagreementCurve, ModelParams,
    TimeUnits,
};
use qrecord_core::linalg::{operator_norm, validate_resolution, ComplexMatrix, HermitianOperator};
use qrecord_core::model::{model_distance, overlap, KnobModel, KnobSpace, RelFreqTable};
use qrecord_core::synthesis::{generate_inequivalent_model, synthesize_model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

const LAMBDA: f64 = 1.81;
const B: f64 = 0.556;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

fn run(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let verdict = if out.passed { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} {verdict} {name}: {} [{:.2}s, budget {}s]",
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    if elapsed > budget {
        println!("             note: runtime exceeded the budget");
    }
    out.passed
}

fn on_edge_start() -> Outcome {
    let lambdas = [-1.0, 0.5, 1.0, LAMBDA, 3.0];
    let widths = [0.2, 0.4, B, 1.0, 2.0];
    let mut worst: f64 = 0.0;
    for &lambda in &lambdas {
        for &b in &widths {
            let p = ModelParams::new(lambda, b, 0.0).unwrap();
            worst = worst.max((disagreement_probability(0.0, &p).unwrap() - 0.5).abs());
        }
    }
    Outcome::new(worst <= 1e-12, format!("max |Pr(0) - 1/2| = {worst:.2e} on 5x5 (lambda, b)"))
}

fn reference_oscillation() -> Outcome {
    let p = ModelParams::new(LAMBDA, B, 0.0).unwrap();
    let curve = disagreement_curve(&time_grid(6.0, 0.01).unwrap(), &p).unwrap();
    let maxima: Vec<f64> = curve.local_maxima().iter().map(|&i| curve.times()[i]).collect();
    let period = PI / (LAMBDA - 1.0).sqrt();
    let nodes: Vec<(f64, f64)> = (0..)
        .map(|k| k as f64 * period)
        .take_while(|&t| t <= 6.0)
        .map(|t| (t, disagreement_probability(t, &p).unwrap()))
        .collect();
    let decreasing = nodes.windows(2).all(|w| w[1].1 < w[0].1);
    let node_text: Vec<String> = nodes.iter().map(|(t, v)| format!("Pr({t:.3})={v:.5}")).collect();
    Outcome::new(
        !maxima.is_empty() && decreasing && nodes.len() >= 2,
        format!("interior maxima at t = {maxima:.2?}; nodes {}", node_text.join(", ")),
    )
}

struct PdeRun {
    times: Vec<f64>,
    states: Vec<GridState>,
    max_boundary_mass: f64,
    leakage_onset: Option<f64>,
}

fn pde_run() -> PdeRun {
    let spec = GridSpec::new(256, 12.0, 0.005).unwrap();
    let mut state = init_packet(spec, B, 0.0).unwrap();
    let propagator = Propagator::new(spec, LAMBDA);
    let times = vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    let mut states = Vec::new();
    let mut max_boundary_mass: f64 = 0.0;
    let mut leakage_onset = None;
    for &t in &times {
        let r = propagator.evolve(&mut state, t, LeakagePolicy::Record).unwrap();
        max_boundary_mass = max_boundary_mass.max(r.max_boundary_mass);
        leakage_onset = leakage_onset.or(r.leakage_onset);
        states.push(state.clone());
    }
    PdeRun {
        times,
        states,
        max_boundary_mass,
        leakage_onset,
    }
}

fn analytic_vs_pde(run: &PdeRun) -> Outcome {
    let p = ModelParams::new(LAMBDA, B, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for (t, state) in run.times.iter().zip(&run.states) {
        let err = (disagreement_probability(*t, &p).unwrap() - disagreement_from_grid(state)).abs();
        if err > worst {
            worst = err;
            at = *t;
        }
    }
    let leak = match run.leakage_onset {
        Some(t) => format!("boundary band above 1e-10 from t = {t:.3}, max {:.2e}", run.max_boundary_mass),
        None => format!("max boundary mass {:.2e}", run.max_boundary_mass),
    };
    Outcome::new(worst <= 5e-3, format!("max error {worst:.3e} at t = {at} (tol 5e-3); {leak}"))
}

fn envelope_widths(run: &PdeRun) -> Outcome {
    let p = ModelParams::new(LAMBDA, B, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for (t, state) in run.times.iter().zip(&run.states) {
        if ![0.5, 1.0, 2.0].contains(t) {
            continue;
        }
        let (eu, ev) = (p.b1_squared(*t) / 2.0, p.b2_squared(*t) / 2.0);
        let fitted = gaussian_fit_variances(state).unwrap();
        let ru = (fitted.u / eu - 1.0).abs();
        let rv = (fitted.v / ev - 1.0).abs();
        worst = worst.max(ru).max(rv);
        let raw = moment_variances(state);
        notes.push(format!(
            "t={t}: fit rel ({ru:.1e}, {rv:.1e}), raw moments rel ({:.1e}, {:.1e})",
            (raw.u / eu - 1.0).abs(),
            (raw.v / ev - 1.0).abs()
        ));
    }
    Outcome::new(
        worst <= 1e-3,
        format!("max relative error {worst:.2e} (tol 1e-3); {}", notes.join("; ")),
    )
}

fn classical_limit() -> Outcome {
    let times = time_grid(3.0, 0.001).unwrap();
    let mut worst: f64 = 0.0;
    for lambda in [1.2, LAMBDA, 3.0] {
        let p = ModelParams::with_hfac(lambda, B, 0.0, 1e-12).unwrap();
        for &t in &times {
            let q = disagreement_probability(t, &p).unwrap();
            worst = worst.max((q - classical_disagreement(t, lambda, 1.0)).abs());
        }
    }
    Outcome::new(worst <= 1e-4, format!("max deviation {worst:.2e} (tol 1e-4) on 3001 times x 3 couplings"))
}

fn lambda_continuity() -> Outcome {
    let times = time_grid(5.0, 0.001).unwrap();
    let at = |lambda: f64, t: f64| disagreement_probability(t, &ModelParams::new(lambda, B, 0.0).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for &t in &times {
        let mid = at(1.0, t);
        worst = worst.max((at(1.0 + 1e-6, t) - mid).abs()).max((at(1.0 - 1e-6, t) - mid).abs());
    }
    Outcome::new(worst < 1e-6, format!("max |Pr(1 +/- 1e-6) - Pr(1)| = {worst:.2e} (tol 1e-6)"))
}

fn random_row(rng: &mut ChaCha8Rng, n_c: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n_c)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.random_range(0..n_c)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let last = (0..n_c).rev().find(|&c| w[c] > 0.0).unwrap();
    let others: f64 = w.iter().enumerate().filter(|&(c, _)| c != last).map(|(_, x)| x).sum();
    w[last] = 1.0 - others;
    w
}

fn random_table(rng: &mut ChaCha8Rng, n_a: usize, n_b: usize, n_c: usize, min_b: usize) -> RelFreqTable {
    let space = KnobSpace::with_sizes(n_a, n_b, n_c).unwrap();
    let mut rows = BTreeMap::new();
    for a in 0..n_a {
        for b in 0..n_b {
            if b < min_b || rng.random_bool(0.8) {
                rows.insert((a, b), random_row(rng, n_c));
            }
        }
    }
    if rows.is_empty() {
        rows.insert((0, 0), random_row(rng, n_c));
    }
    RelFreqTable::new(space, rows).unwrap()
}

fn seeded_tables() -> Vec<RelFreqTable> {
    (0..100u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n_a, n_b, n_c) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=5));
            random_table(&mut rng, n_a, n_b, n_c, 0)
        })
        .collect()
}

fn synthesis_exactness(tables: &[RelFreqTable]) -> Outcome {
    let mut fact: f64 = 0.0;
    let mut ovl: f64 = 0.0;
    let mut bad_resolutions = 0;
    for nu in tables {
        let model = synthesize_model(nu).model;
        fact = fact.max(model.factorization_error(nu).unwrap().0);
        let n_a = nu.space().n_a();
        for a1 in 0..n_a {
            for a2 in (a1 + 1)..n_a {
                ovl = ovl.max(overlap(model.rho(a1), model.rho(a2)).unwrap());
            }
        }
        for b in 0..nu.space().n_b() {
            let blocks: Vec<ComplexMatrix> = model.resolution(b).iter().map(|e| e.matrix().clone()).collect();
            if !validate_resolution(&blocks).is_valid() {
                bad_resolutions += 1;
            }
        }
    }
    Outcome::new(
        fact < 1e-12 && ovl < 1e-14 && bad_resolutions == 0,
        format!(
            "100 tables: max factorization error {fact:.2e}, max overlap {ovl:.2e}, invalid resolutions {bad_resolutions}"
        ),
    )
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

fn random_unitary_columns(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<C64>> {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<C64> = (0..dim).map(|_| complex_gaussian(rng)).collect();
        for u in &cols {
            let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            v.iter_mut().zip(u).for_each(|(x, a)| *x -= proj * a);
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|z| *z /= norm);
            cols.push(v);
        }
    }
    cols
}

fn random_density(rng: &mut ChaCha8Rng, dim: usize) -> HermitianOperator {
    let rank = rng.random_range(1..=dim);
    let g = ComplexMatrix::from_fn(dim, |_, j| if j < rank { complex_gaussian(rng) } else { C64::new(0.0, 0.0) });
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    HermitianOperator::symmetrized(&m.scale(1.0 / tr))
}

fn random_model(rng: &mut ChaCha8Rng, dim: usize, n_a: usize, n_b: usize, n_c: usize) -> KnobModel {
    let space = KnobSpace::with_sizes(n_a, n_b, n_c).unwrap();
    let rho = (0..n_a).map(|_| random_density(rng, dim)).collect();
    let resolution = (0..n_b)
        .map(|_| {
            let cols = random_unitary_columns(rng, dim);
            let mut blocks = vec![HermitianOperator::zeros(dim); n_c];
            for col in &cols {
                let c = rng.random_range(0..n_c);
                blocks[c] = &blocks[c] + &HermitianOperator::projector(col);
            }
            blocks
        })
        .collect();
    KnobModel::new(space, rho, resolution).unwrap()
}

fn violations(report: &BoundReport) -> usize {
    report.rows.iter().filter(|r| !r.satisfied).count()
}

fn constraint_theorems(tables: &[RelFreqTable]) -> Outcome {
    let mut rows = 0;
    let mut bad = 0;
    let mut worst: f64 = f64::INFINITY;
    let mut tally = |model: &KnobModel, nu: &RelFreqTable| {
        for report in [
            check_overlap_constraint(model, nu).unwrap(),
            check_separation_constraint(model, nu).unwrap(),
        ] {
            rows += report.rows.len();
            bad += violations(&report);
            worst = worst.min(report.worst_margin);
        }
    };
    for nu in tables {
        tally(&synthesize_model(nu).model, nu);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let dim = rng.random_range(2..=8);
        let (n_a, n_b, n_c) = (rng.random_range(2..=4), rng.random_range(2..=4), rng.random_range(2..=4));
        let model = random_model(&mut rng, dim, n_a, n_b, n_c);
        let nu = model.induced_table().unwrap();
        tally(&model, &nu);
    }
    Outcome::new(
        bad == 0,
        format!("{rows} bound rows from 100 synthesized + 20 hand-built models, {bad} violations, worst margin {worst:.2e}"),
    )
}

fn non_uniqueness() -> Outcome {
    let mut worst_distance: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (n_a, n_b, n_c) = (rng.random_range(1..=4), rng.random_range(2..=4), rng.random_range(2..=5));
        let nu = random_table(&mut rng, n_a, n_b, n_c, n_b);
        let base = synthesize_model(&nu).model;
        let inq = generate_inequivalent_model(&nu, seed).unwrap();
        worst_distance = worst_distance.max(model_distance(&base, &inq.model).unwrap());
        let gap = operator_norm(&(inq.model.effect(inq.b1, inq.outcome) - inq.model.effect(inq.b2, inq.outcome)));
        let base_gap = operator_norm(&(base.effect(inq.b1, inq.outcome) - base.effect(inq.b2, inq.outcome)));
        // The extra block forces the gap to one regardless of the base model.
        worst_gap = worst_gap.max((gap - 1.0).abs());
        assert!(base_gap <= 1.0 + 1e-12);
    }
    Outcome::new(
        worst_distance < 1e-12 && worst_gap < 1e-12,
        format!("20 tables: max model distance {worst_distance:.2e}, max |gap - 1| = {worst_gap:.2e}"),
    )
}

fn synthetic_record(noise: Option<(u64, f64)>) -> DisagreementCurve {
    let p = ModelParams::new(LAMBDA, B, 0.0).unwrap();
    let times: Vec<f64> = (0..60).map(|i| 6.0 * i as f64 / 59.0).collect();
    let mut probs: Vec<f64> = times.iter().map(|&t| disagreement_probability(t, &p).unwrap()).collect();
    if let Some((seed, sigma)) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        probs.iter_mut().for_each(|y| *y = (*y + normal.sample(&mut rng)).clamp(0.0, 1.0));
    }
    DisagreementCurve::new(times, probs, TimeUnits::Dimensionless).unwrap()
}

fn within(r: &FitResult, tol: f64) -> bool {
    (r.lambda - LAMBDA).abs() <= tol && (r.b - B).abs() <= tol
}

fn fit_recovery() -> Outcome {
    let config = FitConfig::default();
    let clean = fit(&synthetic_record(None), &config).unwrap();
    let clean_ok = within(&clean, 0.01);
    let mut hits = 0;
    let mut pinned_hits = 0;
    let mut spread = Vec::new();
    for seed in 0..20u64 {
        let data = synthetic_record(Some((seed, 0.01)));
        let r = fit(&data, &config).unwrap();
        hits += within(&r, 0.05) as usize;
        spread.push((r.lambda - LAMBDA).abs().max((r.b - B).abs()));
        let pinned = FitConfig {
            pinned_omega: Some(1.0),
            ..config.clone()
        };
        pinned_hits += within(&fit(&data, &pinned).unwrap(), 0.05) as usize;
    }
    spread.sort_by(f64::total_cmp);
    Outcome::new(
        clean_ok && hits >= 18,
        format!(
            "noiseless lambda={:.5} b={:.5}; noisy within 0.05 in {hits}/20 (need 18), median max-deviation {:.3}; \
             with omega pinned to 1 (informational) {pinned_hits}/20",
            clean.lambda, clean.b, spread[10]
        ),
    )
}

fn convergence_order() -> Outcome {
    let evolve = |dt: f64| {
        let spec = GridSpec::new(256, 12.0, dt).unwrap();
        let mut state = init_packet(spec, B, 0.0).unwrap();
        Propagator::new(spec, LAMBDA).evolve(&mut state, 1.0, LeakagePolicy::Record).unwrap();
        state
    };
    let states: Vec<GridState> = (0..5).map(|k| evolve(0.01 / f64::powi(2.0, k))).collect();
    let dx = states[0].spec().dx();
    let errors: Vec<f64> = states
        .windows(2)
        .map(|w| {
            let s: f64 = w[0].psi().iter().zip(w[1].psi()).map(|(a, b)| (a - b).norm_sqr()).sum();
            (s * dx * dx).sqrt()
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|e| e[0] / e[1]).collect();
    Outcome::new(
        ratios.iter().all(|r| (3.5..=4.5).contains(r)),
        format!(
            "errors [{}], ratios {ratios:.4?}",
            errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let mut passed = Vec::new();
    passed.push(run(1, "on-edge start", secs(1), on_edge_start));
    passed.push(run(2, "oscillation at the fitted parameters", secs(1), reference_oscillation));
    let start = Instant::now();
    let pde = pde_run();
    println!("             shared grid run to t = 3 took {:.2}s", start.elapsed().as_secs_f64());
    passed.push(run(3, "closed form vs split-step grid", secs(120), || analytic_vs_pde(&pde)));
    passed.push(run(4, "envelope widths", secs(120), || envelope_widths(&pde)));
    passed.push(run(5, "classical limit", secs(1), classical_limit));
    passed.push(run(6, "lambda branch continuity", secs(1), lambda_continuity));
    let tables = seeded_tables();
    passed.push(run(7, "synthesis exactness", secs(30), || synthesis_exactness(&tables)));
    passed.push(run(8, "overlap and separation bounds", secs(30), || constraint_theorems(&tables)));
    passed.push(run(9, "inequivalent models", secs(10), non_uniqueness));
    passed.push(run(10, "fit recovery", secs(120), fit_recovery));
    passed.push(run(11, "split-step convergence order", secs(180), convergence_order));
    let failed: Vec<usize> = passed
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all 11 criteria PASS");
    } else {
        println!("acceptance: FAIL for criteria {failed:?}");
        std::process::exit(1);
    }
}
