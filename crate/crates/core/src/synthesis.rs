//! Exact model synthesis from a relative-frequency table.
//!
//! The Hilbert space is a direct sum of one block `H_a` per preparation
//! setting, each of dimension `|C|`. The preparation `|a>` is the first basis
//! vector of its block, and for every `(a, b)` a real Householder reflection
//! maps it onto the weight vector `sqrt(nu(a, b)(.))`. The reflection's
//! columns are the outcome vectors `|c(a, b)>`, so
//! `|<c(a, b)|a>|^2 = nu(a, b)(c)` and distinct preparations never overlap.
//!
//! [`generate_inequivalent_model`] appends a one-dimensional block on which
//! two detection settings disagree completely; the predicted frequencies are
//! untouched while the resolution norm gap becomes 1.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
// Float methods come from std when it is linked and from num-traits otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::HermitianOperator;
use crate::model::{KnobModel, RelFreqTable};
use crate::C64;

/// Row-sum tolerance accepted by [`householder_basis`].
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

const IDENTITY_GUARD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("weight {value} at position {index} is negative or not finite")]
    BadWeight { index: usize, value: f64 },
    #[error("no weights given")]
    Empty,
    #[error("need at least two detection settings, got {got}")]
    TooFewDetectionSettings { got: usize },
    #[error("need at least two outcomes, got {got}")]
    TooFewOutcomes { got: usize },
}

/// Orthonormal real vectors `f_1..f_n` with `|<f_c|e_1>|^2 = weights[c]`.
///
/// The vectors are the columns of the Householder reflection that sends
/// `e_1` to `sqrt(weights)`. All components are real; the component along
/// `e_1` is non-negative.
pub fn householder_basis(weights: &[f64]) -> Result<Vec<Vec<f64>>, SynthesisError> {
    let n = weights.len();
    if n == 0 {
        return Err(SynthesisError::Empty);
    }
    if let Some((index, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !w.is_finite() || **w < 0.0)
    {
        return Err(SynthesisError::BadWeight { index, value });
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(SynthesisError::WeightSum { sum });
    }

    let w: Vec<f64> = weights.iter().map(|x| x.sqrt()).collect();
    // u = e_1 - w
    let mut u: Vec<f64> = w.iter().map(|x| -x).collect();
    u[0] += 1.0;
    let norm_sq: f64 = u.iter().map(|x| x * x).sum();
    let identity = norm_sq.sqrt() < IDENTITY_GUARD;

    let basis = (0..n)
        .map(|c| {
            (0..n)
                .map(|i| {
                    let delta = if i == c { 1.0 } else { 0.0 };
                    if identity {
                        delta
                    } else {
                        delta - 2.0 * u[i] * u[c] / norm_sq
                    }
                })
                .collect()
        })
        .collect();
    Ok(basis)
}

/// Synthesized model together with its block structure.
#[derive(Debug, Clone)]
pub struct SynthesizedModel {
    pub model: KnobModel,
    /// Dimension of `H_a`, per preparation setting.
    pub block_dims: Vec<usize>,
    /// `|a>` in the coordinates of its own block.
    pub a_vectors: Vec<Vec<f64>>,
}

impl SynthesizedModel {
    /// Offset of block `a` in the full space.
    pub fn block_offset(&self, a: usize) -> usize {
        self.block_dims[..a].iter().sum()
    }
}

/// Builds a model reproducing `nu` exactly with pairwise-orthogonal pure
/// preparations.
///
/// Pairs where `nu` is undefined get the uniform-weight basis on their block;
/// only defined pairs are guaranteed to factor.
pub fn synthesize_model(nu: &RelFreqTable) -> SynthesizedModel {
    let parts = build_blocks(nu, |_| None);
    let space = nu.space().clone();
    let model = KnobModel::new_unvalidated(space, parts.rho, parts.resolution)
        .expect("synthesized operators have consistent shapes");
    SynthesizedModel {
        model,
        block_dims: parts.block_dims,
        a_vectors: parts.a_vectors,
    }
}

struct Blocks {
    rho: Vec<HermitianOperator>,
    resolution: Vec<Vec<HermitianOperator>>,
    block_dims: Vec<usize>,
    a_vectors: Vec<Vec<f64>>,
}

// `rotation(a)` optionally rotates every vector of block `a`.
fn build_blocks(nu: &RelFreqTable, rotation: impl Fn(usize) -> Option<Vec<Vec<f64>>>) -> Blocks {
    let space = nu.space();
    let (n_a, n_b, n_c) = (space.n_a(), space.n_b(), space.n_c());
    let dim = n_a * n_c;
    let uniform = vec![1.0 / n_c as f64; n_c];

    let mut rho = Vec::with_capacity(n_a);
    let mut a_vectors = Vec::with_capacity(n_a);
    let mut resolution = vec![vec![HermitianOperator::zeros(dim); n_c]; n_b];

    for a in 0..n_a {
        let offset = a * n_c;
        let rot = rotation(a);
        let apply = |v: &[f64]| -> Vec<f64> {
            match &rot {
                Some(q) => q.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect(),
                None => v.to_vec(),
            }
        };

        let mut e1 = vec![0.0; n_c];
        e1[0] = 1.0;
        let a_vec = apply(&e1);
        rho.push(HermitianOperator::projector_real(&a_vec).embed(dim, offset));
        a_vectors.push(a_vec);

        for (b, blocks) in resolution.iter_mut().enumerate() {
            let weights = nu.row(a, b).unwrap_or(&uniform);
            let basis = householder_basis(weights).expect("table rows are valid weight vectors");
            for (c, f) in basis.iter().enumerate() {
                let p = HermitianOperator::projector_real(&apply(f)).embed(dim, offset);
                blocks[c] = &blocks[c] + &p;
            }
        }
    }
    Blocks {
        rho,
        resolution,
        block_dims: vec![n_c; n_a],
        a_vectors,
    }
}

/// A model fitting the same table as [`synthesize_model`] but with
/// `||E(b1)(c) - E(b2)(c)|| = 1`.
#[derive(Debug, Clone)]
pub struct InequivalentModel {
    pub model: KnobModel,
    pub b1: usize,
    pub b2: usize,
    pub outcome: usize,
    /// Index of the appended one-dimensional block `H_perp`.
    pub perp_index: usize,
}

/// Appends a one-dimensional block `H_perp` that no preparation touches.
///
/// On `H_perp`, `E(b2)(c)` is the identity and `E(b1)(c)` vanishes (every
/// other detection setting sends `H_perp` to an outcome other than `c`).
/// The seed picks `(b1, b2, c)` and a random real rotation inside each
/// preparation block, so different seeds give different models.
pub fn generate_inequivalent_model(nu: &RelFreqTable, seed: u64) -> Result<InequivalentModel, SynthesisError> {
    let space = nu.space();
    let (n_a, n_b, n_c) = (space.n_a(), space.n_b(), space.n_c());
    if n_b < 2 {
        return Err(SynthesisError::TooFewDetectionSettings { got: n_b });
    }
    if n_c < 2 {
        return Err(SynthesisError::TooFewOutcomes { got: n_c });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b1 = rng.random_range(0..n_b);
    let b2 = (b1 + rng.random_range(1..n_b)) % n_b;
    let outcome = rng.random_range(0..n_c);
    let elsewhere = (outcome + rng.random_range(1..n_c)) % n_c;
    let rotations: Vec<Vec<Vec<f64>>> = (0..n_a).map(|_| random_orthogonal(&mut rng, n_c)).collect();

    let parts = build_blocks(nu, |a| Some(rotations[a].clone()));
    let base_dim = n_a * n_c;
    let dim = base_dim + 1;
    let mut perp = vec![C64::new(0.0, 0.0); dim];
    perp[base_dim] = C64::new(1.0, 0.0);
    let perp_proj = HermitianOperator::projector(&perp);

    let rho = parts.rho.iter().map(|r| r.embed(dim, 0)).collect();
    let resolution = parts
        .resolution
        .iter()
        .enumerate()
        .map(|(b, blocks)| {
            let target = if b == b2 { outcome } else { elsewhere };
            blocks
                .iter()
                .enumerate()
                .map(|(c, e)| {
                    let e = e.embed(dim, 0);
                    if c == target {
                        &e + &perp_proj
                    } else {
                        e
                    }
                })
                .collect()
        })
        .collect();
    let model = KnobModel::new_unvalidated(space.clone(), rho, resolution)
        .expect("extended operators have consistent shapes");
    Ok(InequivalentModel {
        model,
        b1,
        b2,
        outcome,
        perp_index: base_dim,
    })
}

// Product of `n` Householder reflections with random directions; rows of the
// returned matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..n {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if norm_sq < 1e-6 {
            continue;
        }
        // Q <- Q (I - 2 v v^T / |v|^2)
        for row in q.iter_mut() {
            let dot: f64 = row.iter().zip(&v).map(|(x, y)| x * y).sum();
            let k = 2.0 * dot / norm_sq;
            row.iter_mut().zip(&v).for_each(|(x, y)| *x -= k * y);
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{operator_norm, validate_resolution};
    use crate::model::{model_distance, overlap, KnobSpace};
    use alloc::collections::BTreeMap;
    use approx::assert_abs_diff_eq;

    fn dot(u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    fn assert_orthonormal(f: &[Vec<f64>]) {
        for i in 0..f.len() {
            for j in 0..f.len() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot(&f[i], &f[j]), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn householder_degenerate_target_is_identity() {
        let f = householder_basis(&[1.0, 0.0]).unwrap();
        assert_eq!(f, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn householder_quarter_three_quarters() {
        let f = householder_basis(&[0.25, 0.75]).unwrap();
        assert_orthonormal(&f);
        assert_abs_diff_eq!(f[0][0].abs(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1][0].abs(), 0.8660254037844386, epsilon = 1e-12);
    }

    #[test]
    fn householder_uniform_four() {
        let f = householder_basis(&[0.25; 4]).unwrap();
        assert_orthonormal(&f);
        for fc in &f {
            assert_abs_diff_eq!(fc[0] * fc[0], 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn householder_rejects_bad_weights() {
        assert_eq!(householder_basis(&[]), Err(SynthesisError::Empty));
        assert!(matches!(
            householder_basis(&[0.5, 0.6]),
            Err(SynthesisError::WeightSum { .. })
        ));
        assert!(matches!(
            householder_basis(&[1.5, -0.5]),
            Err(SynthesisError::BadWeight { index: 1, .. })
        ));
    }

    fn table(n_a: usize, n_b: usize, rows: &[((usize, usize), Vec<f64>)]) -> RelFreqTable {
        let n_c = rows[0].1.len();
        let space = KnobSpace::with_sizes(n_a, n_b, n_c).unwrap();
        RelFreqTable::new(space, rows.iter().cloned().collect::<BTreeMap<_, _>>()).unwrap()
    }

    #[test]
    fn single_setting_table() {
        let nu = table(1, 1, &[((0, 0), vec![0.25, 0.75])]);
        let s = synthesize_model(&nu);
        assert_eq!(s.model.dim(), 2);
        assert_eq!(s.a_vectors[0], vec![1.0, 0.0]);
        // preparation coefficients along the outcome vectors: (0.5, sqrt 0.75)
        let f = householder_basis(&[0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(dot(&f[0], &s.a_vectors[0]).abs(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(dot(&f[1], &s.a_vectors[0]).abs(), 0.75f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.model.probability_at(0, 0, 0), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(s.model.probability_at(0, 0, 1), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_row_gives_block_identity() {
        let nu = table(2, 1, &[((0, 0), vec![1.0, 0.0]), ((1, 0), vec![0.5, 0.5])]);
        let s = synthesize_model(&nu);
        assert_eq!(s.model.probability_at(0, 0, 0), 1.0);
        let e = s.model.effect(0, 0);
        // identity on block a0
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(e[(i, j)].re, expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn partial_table_uses_uniform_basis_off_domain() {
        let nu = table(2, 2, &[((0, 0), vec![0.1, 0.9]), ((1, 1), vec![0.6, 0.4])]);
        let s = synthesize_model(&nu);
        assert!(s.model.factorization_error(&nu).unwrap().0 < 1e-12);
        assert_abs_diff_eq!(s.model.probability_at(0, 1, 0), 0.5, epsilon = 1e-12);
        for b in 0..2 {
            let blocks: Vec<_> = s.model.resolution(b).iter().map(|e| e.matrix().clone()).collect();
            assert!(validate_resolution(&blocks).is_valid());
        }
    }

    #[test]
    fn synthesized_preparations_do_not_overlap() {
        let nu = table(
            3,
            1,
            &[
                ((0, 0), vec![0.2, 0.8]),
                ((1, 0), vec![0.5, 0.5]),
                ((2, 0), vec![0.9, 0.1]),
            ],
        );
        let s = synthesize_model(&nu);
        assert_eq!(s.block_offset(2), 4);
        for a in 0..3 {
            for b in 0..3 {
                let o = overlap(s.model.rho(a), s.model.rho(b)).unwrap();
                assert_abs_diff_eq!(o, if a == b { 1.0 } else { 0.0 }, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn inequivalent_model_fits_and_separates() {
        let nu = table(
            2,
            2,
            &[
                ((0, 0), vec![0.3, 0.7]),
                ((0, 1), vec![0.3, 0.7]),
                ((1, 0), vec![0.6, 0.4]),
                ((1, 1), vec![0.6, 0.4]),
            ],
        );
        let base = synthesize_model(&nu).model;
        for seed in [1, 2, 3] {
            let inq = generate_inequivalent_model(&nu, seed).unwrap();
            assert!(inq.model.factorization_error(&nu).unwrap().0 < 1e-12);
            assert!(model_distance(&base, &inq.model).unwrap() < 1e-12);
            let gap = operator_norm(&(inq.model.effect(inq.b1, inq.outcome) - inq.model.effect(inq.b2, inq.outcome)));
            assert_abs_diff_eq!(gap, 1.0, epsilon = 1e-12);
            let e2 = inq.model.effect(inq.b2, inq.outcome);
            let e1 = inq.model.effect(inq.b1, inq.outcome);
            assert_eq!(e2[(inq.perp_index, inq.perp_index)].re, 1.0);
            assert_eq!(e1[(inq.perp_index, inq.perp_index)].re, 0.0);
            for b in 0..2 {
                let blocks: Vec<_> = inq.model.resolution(b).iter().map(|e| e.matrix().clone()).collect();
                assert!(validate_resolution(&blocks).is_valid());
            }
        }
        let m1 = generate_inequivalent_model(&nu, 1).unwrap().model;
        let m2 = generate_inequivalent_model(&nu, 2).unwrap().model;
        assert_ne!(m1, m2);
    }

    #[test]
    fn inequivalent_model_needs_two_settings_and_outcomes() {
        let nu = table(1, 1, &[((0, 0), vec![0.5, 0.5])]);
        assert_eq!(
            generate_inequivalent_model(&nu, 0).unwrap_err(),
            SynthesisError::TooFewDetectionSettings { got: 1 }
        );
        let nu = table(1, 2, &[((0, 0), vec![1.0]), ((0, 1), vec![1.0])]);
        assert_eq!(
            generate_inequivalent_model(&nu, 0).unwrap_err(),
            SynthesisError::TooFewOutcomes { got: 1 }
        );
    }
}
