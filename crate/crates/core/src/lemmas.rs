//! Randomized oracles for the matrix identities and inequalities the
//! analysis relies on.
//!
//! Each lemma draws a random instance from a per-trial seed and returns a
//! measured value together with the bound it must not exceed.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::nonmax_witness;
use crate::model::{dg, SignedPermutation};
use crate::random::{self, Rng};
use crate::stiefel::{
    complement_seeded, manifold_gradient, project_tangent, retract_approx, retract_approx_tangent, retract_exact,
    retract_exact_svd, skewness_defect, tangent, Metric, TangentPerturbation,
};

/// Outcome of one randomized instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Check {
    pub value: f64,
    pub bound: f64,
}

impl Check {
    fn at_most(value: f64, bound: f64) -> Self {
        Check { value, bound }
    }

    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.bound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Seed of the first failing trial, replayable with [`run_lemma_trial`].
    pub first_failure_seed: Option<u64>,
    /// Largest value/bound ratio seen.
    pub worst_ratio: f64,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

type LemmaFn = fn(&mut Rng) -> Check;

const LEMMAS: &[(&str, LemmaFn)] = &[
    ("perm_diag", perm_diag),
    ("perm_diag_sign", perm_diag_sign),
    ("perm_dg", perm_dg),
    ("diag_perm", diag_perm),
    ("orthosim_diag", orthosim_diag),
    ("commute_diag", commute_diag),
    ("commute_blockdiag", commute_blockdiag),
    ("blockdiag_diag", blockdiag_diag),
    ("rtdr_diag", rtdr_diag),
    ("rtdr_ii_sqr", rtdr_ii_sqr),
    ("rtdr_ii_b_i", rtdr_ii_b_i),
    ("sorted_permute", sorted_permute),
    ("tr_ab", tr_ab),
    ("tr_ad", tr_ad),
    ("tr_atda_omega", tr_atda_omega),
    ("tr_atad", tr_atad),
    ("tr_askew_d", tr_askew_d),
    ("tr_askew_bsymm", tr_askew_bsymm),
    ("skew_symm_ii", skew_symm_ii),
    ("stiefel_tangent", stiefel_tangent),
    ("stiefel_tangent_para", stiefel_tangent_para),
    ("stiefel_tangent_proj", stiefel_tangent_proj),
    ("stiefel_gradients", stiefel_gradients),
    ("stiefel_svd", stiefel_svd),
    ("stiefel_proj_appr", stiefel_proj_appr),
    ("stiefel_proj_appr_tangent", stiefel_proj_appr_tangent),
    ("skew_symm_diag_nonzero", skew_symm_diag_nonzero),
];

pub fn lemma_names() -> Vec<&'static str> {
    LEMMAS.iter().map(|(n, _)| *n).collect()
}

fn trial_rng(lemma_index: usize, seed: u64) -> Rng {
    random::rng(seed ^ ((lemma_index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Replays one trial of the named lemma.
pub fn run_lemma_trial(name: &str, seed: u64) -> Option<Check> {
    let idx = LEMMAS.iter().position(|(n, _)| *n == name)?;
    Some((LEMMAS[idx].1)(&mut trial_rng(idx, seed)))
}

/// Runs every lemma on `trials` instances with seeds `seed, seed+1, …`.
pub fn run_lemma_suite(seed: u64, trials: usize) -> Vec<LemmaReport> {
    LEMMAS
        .par_iter()
        .enumerate()
        .map(|(idx, (name, f))| {
            let mut failures = 0;
            let mut first = None;
            let mut worst = 0.0_f64;
            for t in 0..trials {
                let s = seed.wrapping_add(t as u64);
                let check = f(&mut trial_rng(idx, s));
                let ratio = if check.bound > 0.0 {
                    check.value / check.bound
                } else if check.value <= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(if ratio.is_nan() { f64::INFINITY } else { ratio });
                if !check.passed() {
                    failures += 1;
                    first.get_or_insert(s);
                }
            }
            LemmaReport {
                name: name.to_string(),
                trials,
                failures,
                first_failure_seed: first,
                worst_ratio: worst,
            }
        })
        .collect()
}

const EXACT: f64 = 1e-12;

fn dim(rng: &mut Rng) -> usize {
    rng.random_range(2..=7)
}

fn random_diag(rng: &mut Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-3.0..3.0)).collect()
}

/// Strictly descending positive entries with gaps of at least 0.1.
fn sorted_distinct(rng: &mut Rng, k: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(k);
    let mut v = rng.random_range(0.1..1.0);
    for _ in 0..k {
        x.push(v);
        v += rng.random_range(0.1..1.0);
    }
    x.reverse();
    x
}

fn diag(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(d))
}

fn off_diagonal_max(m: &DMatrix<f64>) -> f64 {
    let mut out = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                out = out.max(m[(i, j)].abs());
            }
        }
    }
    out
}

fn random_signed_perm(rng: &mut Rng, k: usize) -> SignedPermutation {
    SignedPermutation::new(random::random_permutation(rng, k), random::random_signs(rng, k)).expect("valid by construction")
}

fn perm_diag(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let d = random_diag(rng, k);
    let p = SignedPermutation::from_perm(random::random_permutation(rng, k)).expect("valid");
    let out = p.matrix().transpose() * diag(&d) * p.matrix();
    let expect: Vec<f64> = p.perm().iter().map(|&i| d[i]).collect();
    Check::at_most((out - diag(&expect)).amax(), EXACT)
}

fn perm_diag_sign(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let d = random_diag(rng, k);
    let p = random_signed_perm(rng, k);
    let out = p.matrix().transpose() * diag(&d) * p.matrix();
    let expect: Vec<f64> = p.perm().iter().map(|&i| d[i]).collect();
    Check::at_most((out - diag(&expect)).amax(), EXACT)
}

fn perm_dg(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let a = random::gaussian_matrix(rng, k, k);
    let p = SignedPermutation::from_perm(random::random_permutation(rng, k)).expect("valid").matrix();
    let lhs = dg(&(p.transpose() * &a * &p)).expect("square");
    let rhs = p.transpose() * dg(&a).expect("square") * &p;
    Check::at_most((lhs - rhs).amax(), EXACT)
}

fn diag_perm(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let d = diag(&random_diag(rng, k));
    let p = SignedPermutation::from_perm(random::random_permutation(rng, k)).expect("valid").matrix();
    let dstar = p.transpose() * &d * &p;
    Check::at_most((&d * &p - &p * &dstar).amax() + off_diagonal_max(&dstar), EXACT)
}

/// A generic orthogonal similarity of a distinct-entry diagonal is not
/// diagonal, while a signed permutation keeps it diagonal.
fn orthosim_diag(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let d = diag(&sorted_distinct(rng, k));
    let q = random::random_orthogonal(rng, k);
    let generic = off_diagonal_max(&(q.transpose() * &d * &q));
    let p = random_signed_perm(rng, k).matrix();
    let signed = off_diagonal_max(&(p.transpose() * &d * &p));
    // value ≤ 0 iff the generic case is visibly non-diagonal and the signed case is diagonal
    let value = if generic > 1e-6 { signed } else { 1.0 };
    Check::at_most(value, EXACT)
}

/// Orthogonal projection of S onto {X : XD = DX}, computed from the
/// numerical null space of X ↦ XD − DX.
fn commutant_projection(s: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let k = d.len();
    let n2 = k * k;
    // vec(XD − DX) = L vec(X) with column-major vec: entry (i,j) scales by d_j − d_i
    let mut l = DMatrix::zeros(n2, n2);
    for j in 0..k {
        for i in 0..k {
            l[(j * k + i, j * k + i)] = d[j] - d[i];
        }
    }
    // mixed operator: the null space is not read off a diagonal
    let mut rng = random::rng(7);
    let q = random::random_orthogonal(&mut rng, n2);
    let l = &q * l * q.transpose();
    // null vectors of QLQᵀ map back to those of L through Qᵀ
    let svd = l.svd(false, true);
    let vt = svd.v_t.expect("requested Vᵀ");
    let vec_s = DVector::from_column_slice(s.as_slice());
    let mut proj = DVector::zeros(n2);
    for (r, sigma) in svd.singular_values.iter().enumerate() {
        if *sigma < 1e-8 {
            let v = q.transpose() * vt.row(r).transpose();
            proj += &v * v.dot(&vec_s);
        }
    }
    DMatrix::from_column_slice(k, k, proj.as_slice())
}

fn commute_diag(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let d = sorted_distinct(rng, k);
    let s = random::gaussian_matrix(rng, k, k);
    let x = commutant_projection(&s, &d);
    let dm = diag(&d);
    let commutes = (&x * &dm - &dm * &x).amax();
    let keeps_diagonal = (x.diagonal() - s.diagonal()).amax();
    Check::at_most(off_diagonal_max(&x).max(commutes).max(keeps_diagonal), 1e-10)
}

/// Random contiguous block sizes summing to k.
fn random_blocks(rng: &mut Rng, k: usize) -> Vec<usize> {
    let mut rest = k;
    let mut blocks = Vec::new();
    while rest > 0 {
        let s = rng.random_range(1..=rest.min(3));
        blocks.push(s);
        rest -= s;
    }
    blocks
}

fn block_owner(blocks: &[usize]) -> Vec<usize> {
    blocks.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect()
}

fn tied_diagonal(rng: &mut Rng, blocks: &[usize]) -> Vec<f64> {
    let values = sorted_distinct(rng, blocks.len());
    blocks.iter().zip(values).flat_map(|(&s, v)| std::iter::repeat_n(v, s)).collect()
}

fn commute_blockdiag(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let blocks = random_blocks(rng, k);
    let owner = block_owner(&blocks);
    let d = tied_diagonal(rng, &blocks);
    let s = random::gaussian_matrix(rng, k, k);
    let x = commutant_projection(&s, &d);
    let mut outside = 0.0_f64;
    let mut inside = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            if owner[i] == owner[j] {
                inside = inside.max((x[(i, j)] - s[(i, j)]).abs());
            } else {
                outside = outside.max(x[(i, j)].abs());
            }
        }
    }
    Check::at_most(outside.max(inside), 1e-10)
}

fn block_orthogonal(rng: &mut Rng, blocks: &[usize]) -> DMatrix<f64> {
    let k: usize = blocks.iter().sum();
    let mut u = DMatrix::zeros(k, k);
    let mut start = 0;
    for &s in blocks {
        u.view_mut((start, start), (s, s)).copy_from(&random::random_orthogonal(rng, s));
        start += s;
    }
    u
}

fn blockdiag_diag(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let blocks = random_blocks(rng, k);
    let d = diag(&tied_diagonal(rng, &blocks));
    let u = block_orthogonal(rng, &blocks);
    Check::at_most((u.transpose() * &d * &u - &d).amax(), 1e-12 * d.amax().max(1.0) * 10.0)
}

fn rtdr_diag(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let d = random_diag(rng, k);
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let r = random::random_orthogonal(rng, k);
    let m = r.transpose() * diag(&d) * &r;
    let excess = m.diagonal().iter().map(|x| (lo - x).max(x - hi)).fold(f64::NEG_INFINITY, f64::max);
    Check::at_most(excess, EXACT)
}

fn rtdr_ii_sqr(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let d = sorted_distinct(rng, k);
    let bound: f64 = d.iter().map(|x| x * x).sum();
    let r = random::random_orthogonal(rng, k);
    let m = r.transpose() * diag(&d) * &r;
    let value: f64 = m.diagonal().iter().map(|x| x * x).sum();
    let p = random_signed_perm(rng, k).matrix();
    let at_perm: f64 = (p.transpose() * diag(&d) * &p).diagonal().iter().map(|x| x * x).sum();
    // random R stays below the bound and a signed permutation attains it
    Check::at_most((value - bound).max((at_perm - bound).abs()), 1e-10)
}

fn rtdr_ii_b_i(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let d = sorted_distinct(rng, k);
    let b = sorted_distinct(rng, k);
    let best: f64 = d.iter().zip(&b).map(|(x, y)| x * y).sum();
    let r = random::random_orthogonal(rng, k);
    let m = r.transpose() * diag(&d) * &r;
    let value: f64 = m.diagonal().iter().zip(&b).map(|(x, y)| x * y).sum();
    Check::at_most(value - best, 1e-10)
}

fn sorted_permute(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let a = sorted_distinct(rng, k);
    let b = sorted_distinct(rng, k);
    let p = SignedPermutation::from_perm(random::random_permutation(rng, k)).expect("valid").matrix();
    let permuted = p.transpose() * diag(&a) * &p;
    let value = (permuted * diag(&b)).trace() - (diag(&a) * diag(&b)).trace();
    Check::at_most(value, 1e-10)
}

fn tr_ab(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let a = random::gaussian_matrix(rng, k, k);
    let b = random::gaussian_matrix(rng, k, k);
    let sum: f64 = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| a[(i, j)] * b[(j, i)]).sum();
    Check::at_most(((&a * &b).trace() - sum).abs(), EXACT)
}

fn tr_ad(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let a = random::gaussian_matrix(rng, k, k);
    let d = random_diag(rng, k);
    let sum: f64 = (0..k).map(|i| a[(i, i)] * d[i]).sum();
    Check::at_most(((&a * diag(&d)).trace() - sum).abs(), EXACT)
}

fn tr_atda_omega(rng: &mut Rng) -> Check {
    let n = dim(rng);
    let m = rng.random_range(1..=n);
    let a = random::gaussian_matrix(rng, n, m);
    let d = random_diag(rng, n);
    let o = random_diag(rng, m);
    let lhs = (a.transpose() * diag(&d) * &a * diag(&o)).trace();
    let mut rhs = 0.0;
    for i in 0..m {
        for k in 0..n {
            rhs += a[(k, i)].powi(2) * d[k] * o[i];
        }
    }
    Check::at_most((lhs - rhs).abs(), 1e-11)
}

fn tr_atad(rng: &mut Rng) -> Check {
    let n = dim(rng);
    let m = rng.random_range(1..=n);
    let a = random::gaussian_matrix(rng, n, m);
    let d = random_diag(rng, m);
    let lhs = (a.transpose() * &a * diag(&d)).trace();
    let mut rhs = 0.0;
    for i in 0..m {
        for k in 0..n {
            rhs += a[(k, i)].powi(2) * d[i];
        }
    }
    Check::at_most((lhs - rhs).abs(), 1e-11)
}

fn tr_askew_d(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let a = random::random_skew(rng, k);
    let d = diag(&random_diag(rng, k));
    let ad = &a * &d;
    let diag_max = ad.diagonal().amax();
    Check::at_most(ad.trace().abs().max(diag_max), EXACT)
}

fn tr_askew_bsymm(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let a = random::random_skew(rng, k);
    let b = random::random_symmetric(rng, k);
    Check::at_most((&a * &b).trace().abs(), EXACT)
}

fn skew_symm_ii(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let a = random::random_skew(rng, k);
    let b = random::random_symmetric(rng, k);
    let ab = &a * &b;
    let ba = &b * &a;
    Check::at_most((ab.diagonal() + ba.diagonal()).amax(), EXACT)
}

fn frame_instance(rng: &mut Rng) -> (usize, usize, DMatrix<f64>) {
    let n = dim(rng);
    let m = rng.random_range(1..=n);
    let x = random::random_frame(rng, n, m);
    (n, m, x)
}

fn stiefel_tangent(rng: &mut Rng) -> Check {
    let (n, m, x) = frame_instance(rng);
    let z = random::gaussian_matrix(rng, n, m);
    let delta = project_tangent(&x, &z);
    let trace = (x.transpose() * &delta).trace().abs();
    Check::at_most(skewness_defect(&x, &delta).max(trace), 1e-10)
}

fn stiefel_tangent_para(rng: &mut Rng) -> Check {
    let (n, m, x) = frame_instance(rng);
    let frame = complement_seeded(&x, rng.random()).expect("orthonormal");
    let a = random::random_skew(rng, m);
    let b = random::gaussian_matrix(rng, n - m, m);
    let pert = TangentPerturbation::new(&a, b.clone()).expect("skew");
    let delta = tangent(&frame, &pert).expect("shapes");
    let a_back = x.transpose() * &delta;
    let b_back = frame.x_perp().transpose() * &delta;
    let err = (a_back - a).amax().max((b_back - b).amax());
    Check::at_most(err.max(skewness_defect(&x, &delta)), 1e-10)
}

fn stiefel_tangent_proj(rng: &mut Rng) -> Check {
    let (n, m, x) = frame_instance(rng);
    let z = random::gaussian_matrix(rng, n, m);
    let delta = project_tangent(&x, &z);
    let idempotent = (project_tangent(&x, &delta) - &delta).amax();
    let normal = project_tangent(&x, &x).amax();
    let frame = complement_seeded(&x, rng.random()).expect("orthonormal");
    let xtz = x.transpose() * &z;
    let a = (&xtz - xtz.transpose()) * 0.5;
    let b = frame.x_perp().transpose() * &z;
    let rebuilt = tangent(&frame, &TangentPerturbation::new(&a, b).expect("skew")).expect("shapes");
    Check::at_most(idempotent.max(normal).max((rebuilt - delta).amax()), 1e-10)
}

fn stiefel_gradients(rng: &mut Rng) -> Check {
    let (n, m, x) = frame_instance(rng);
    let g = random::gaussian_matrix(rng, n, m);
    let e = manifold_gradient(Metric::Embedded, &g, &x);
    let c = manifold_gradient(Metric::Canonical, &g, &x);
    Check::at_most(skewness_defect(&x, &e).max(skewness_defect(&x, &c)), 1e-10)
}

fn stiefel_svd(rng: &mut Rng) -> Check {
    let (n, m, x0) = frame_instance(rng);
    let x = &x0 + random::gaussian_matrix(rng, n, m) * 0.3;
    let (Ok(w), Ok(w_svd)) = (retract_exact(&x), retract_exact_svd(&x)) else {
        return Check::at_most(f64::INFINITY, 0.0);
    };
    let agree = (&w - &w_svd).amax();
    let defect = (w.transpose() * &w - DMatrix::identity(m, m)).norm();
    let other = random::random_frame(rng, n, m);
    let closer = (&x - &w).norm() - (&x - other).norm();
    Check::at_most(agree.max(defect).max(closer), 1e-10)
}

fn stiefel_proj_appr(rng: &mut Rng) -> Check {
    let (n, m, x) = frame_instance(rng);
    let z = project_tangent(&x, &random::gaussian_matrix(rng, n, m));
    let norm = z.norm();
    if norm == 0.0 {
        return Check::at_most(0.0, 1e-8);
    }
    let delta = z * (1e-3 / norm);
    let exact = retract_exact(&(&x + &delta)).expect("full rank");
    Check::at_most((retract_approx(&x, &delta) - exact).norm(), 1e-8)
}

fn stiefel_proj_appr_tangent(rng: &mut Rng) -> Check {
    let (n, m, x) = frame_instance(rng);
    let frame = complement_seeded(&x, rng.random()).expect("orthonormal");
    let a = random::random_skew(rng, m) * 0.01;
    let b = random::gaussian_matrix(rng, n - m, m) * 0.01;
    let pert = TangentPerturbation::new(&a, b).expect("skew");
    let delta = tangent(&frame, &pert).expect("shapes");
    let via_delta = retract_approx(&x, &delta);
    let via_ab = retract_approx_tangent(&frame, &pert).expect("shapes");
    Check::at_most((via_delta - via_ab).amax(), EXACT)
}

fn skew_symm_diag_nonzero(rng: &mut Rng) -> Check {
    let k = dim(rng);
    let mut b = random::random_symmetric(rng, k);
    // sparse entries, so some rows have no off-diagonal element
    for i in 0..k {
        for j in 0..i {
            if rng.random_bool(0.5) {
                b[(i, j)] = 0.0;
                b[(j, i)] = 0.0;
            }
        }
    }
    if off_diagonal_max(&b) == 0.0 {
        b[(0, 1)] = 1.0;
        b[(1, 0)] = 1.0;
    }
    let Ok(a) = nonmax_witness(&b) else {
        return Check::at_most(f64::INFINITY, 0.0);
    };
    let skew = (&a + a.transpose()).amax();
    let ab = &a * &b;
    let best = (0..k)
        .map(|j| {
            let offsum: f64 = (0..k).filter(|&i| i != j).map(|i| b[(j, i)].abs()).sum();
            if offsum > 0.0 && (ab[(j, j)] - offsum).abs() < 1e-12 {
                0.0
            } else {
                1.0
            }
        })
        .fold(1.0_f64, f64::min);
    Check::at_most(skew.max(best), EXACT)
}
