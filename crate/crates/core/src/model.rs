//! Problem data: covariance spectrum, weight matrices, gains, signed
//! permutations and the diagonal operators built on them.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_serde;
use crate::random;

/// Flags for [`build_covariance_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CovarianceOptions {
    /// Accept repeated eigenvalues (non-increasing instead of strictly decreasing).
    pub allow_ties: bool,
    /// Use V = I instead of a random orthogonal basis.
    pub identity_basis: bool,
}

/// Ground-truth spectrum (V, Λ) and the assembled covariance C = VΛVᵀ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovarianceRepr", into = "CovarianceRepr")]
pub struct CovarianceModel {
    eigenvalues: Vec<f64>,
    v: DMatrix<f64>,
    c: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct CovarianceRepr {
    n: usize,
    eigenvalues: Vec<f64>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
}

impl TryFrom<CovarianceRepr> for CovarianceModel {
    type Error = Error;

    fn try_from(r: CovarianceRepr) -> Result<Self> {
        if r.eigenvalues.len() != r.n {
            return Err(Error::Shape(format!(
                "n = {} but {} eigenvalues given",
                r.n,
                r.eigenvalues.len()
            )));
        }
        let v = matrix_serde::from_rows(&r.v, r.n).map_err(Error::Shape)?;
        CovarianceModel::from_parts(r.eigenvalues, v, true)
    }
}

impl From<CovarianceModel> for CovarianceRepr {
    fn from(m: CovarianceModel) -> Self {
        CovarianceRepr {
            n: m.n(),
            v: matrix_serde::to_rows(&m.v),
            eigenvalues: m.eigenvalues,
        }
    }
}

impl CovarianceModel {
    /// Assembles C from a given spectrum and orthogonal eigenvector matrix.
    pub fn from_parts(eigenvalues: Vec<f64>, v: DMatrix<f64>, allow_ties: bool) -> Result<Self> {
        validate_spectrum(&eigenvalues, allow_ties)?;
        let n = eigenvalues.len();
        if v.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "V is {}×{}, expected {n}×{n}",
                v.nrows(),
                v.ncols()
            )));
        }
        let defect = (v.transpose() * &v - DMatrix::identity(n, n)).norm();
        if defect > 1e-10 {
            return Err(Error::NotOrthonormal { defect });
        }
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&eigenvalues));
        let c = &v * lambda * v.transpose();
        let c = (&c + c.transpose()) * 0.5;
        Ok(CovarianceModel { eigenvalues, v, c })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthogonal V, one eigenvector per column.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// V_m, the top-m eigenvectors.
    pub fn principal_frame(&self, m: usize) -> DMatrix<f64> {
        self.v.columns(0, m).into_owned()
    }

    /// Eigen-coordinates A = VᵀW.
    pub fn eigen_coordinates(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        self.v.transpose() * w
    }

    /// Whether two eigenvalues coincide within a relative tolerance.
    pub fn has_ties(&self, rel_tol: f64) -> bool {
        let scale = self.eigenvalues[0].abs().max(f64::MIN_POSITIVE);
        self.eigenvalues
            .windows(2)
            .any(|p| (p[0] - p[1]).abs() <= rel_tol * scale)
    }
}

/// Builds a covariance with strictly descending eigenvalues and a random
/// orthogonal eigenbasis drawn from `seed`.
pub fn build_covariance(eigenvalues: &[f64], seed: u64) -> Result<CovarianceModel> {
    build_covariance_with(eigenvalues, seed, CovarianceOptions::default())
}

pub fn build_covariance_with(
    eigenvalues: &[f64],
    seed: u64,
    opts: CovarianceOptions,
) -> Result<CovarianceModel> {
    validate_spectrum(eigenvalues, opts.allow_ties)?;
    let n = eigenvalues.len();
    let v = if opts.identity_basis {
        DMatrix::identity(n, n)
    } else {
        random::random_orthogonal(&mut random::rng(seed), n)
    };
    CovarianceModel::from_parts(eigenvalues.to_vec(), v, opts.allow_ties)
}

fn validate_spectrum(eigenvalues: &[f64], allow_ties: bool) -> Result<()> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidSpectrum("no eigenvalues".into()));
    }
    if let Some(x) = eigenvalues.iter().find(|x| !x.is_finite() || **x <= 0.0) {
        return Err(Error::InvalidSpectrum(format!("{x} is not a positive finite value")));
    }
    for (i, p) in eigenvalues.windows(2).enumerate() {
        let ok = if allow_ties { p[0] >= p[1] } else { p[0] > p[1] };
        if !ok {
            let need = if allow_ties { "non-increasing" } else { "strictly descending" };
            return Err(Error::InvalidSpectrum(format!(
                "eigenvalues must be {need}: λ{} = {} vs λ{} = {}",
                i + 1,
                p[0],
                i + 2,
                p[1]
            )));
        }
    }
    Ok(())
}

/// The n×m state of a learning rule. Only the shape is checked.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let (n, m) = w.shape();
        if m == 0 || m > n {
            return Err(Error::Shape(format!("weight matrix is {n}×{m}, need 1 ≤ m ≤ n")));
        }
        Ok(WeightMatrix(w))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn m(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// ‖WᵀW − Ω‖_F, with Ω = I when `omega` is `None`.
    pub fn orthonormality_defect(&self, omega: Option<&[f64]>) -> f64 {
        orthonormality_defect(&self.0, omega)
    }
}

impl Deref for WeightMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn orthonormality_defect(w: &DMatrix<f64>, omega: Option<&[f64]>) -> f64 {
    let mut g = w.transpose() * w;
    for j in 0..g.ncols() {
        g[(j, j)] -= omega.map_or(1.0, |o| o[j]);
    }
    g.norm()
}

/// Fixed diagonal gains Θ and Ω.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSpec {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl GainSpec {
    pub fn new(theta: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        let g = GainSpec { theta, omega };
        g.validate()?;
        Ok(g)
    }

    /// Θ = Ω = I.
    pub fn identity(m: usize) -> Self {
        GainSpec {
            theta: vec![1.0; m],
            omega: vec![1.0; m],
        }
    }

    /// Θ = Ω = diag(m, m−1, …, 1)/m.
    pub fn linear(m: usize) -> Self {
        let g: Vec<f64> = (0..m).map(|j| (m - j) as f64 / m as f64).collect();
        GainSpec {
            theta: g.clone(),
            omega: g,
        }
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.omega.len() {
            return Err(Error::Shape(format!(
                "|theta| = {} but |omega| = {}",
                self.theta.len(),
                self.omega.len()
            )));
        }
        for (name, g) in [("theta", &self.theta), ("omega", &self.omega)] {
            if g.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                return Err(Error::Config(format!("{name} must be strictly positive")));
            }
        }
        Ok(())
    }

    pub fn theta_distinct(&self) -> bool {
        strictly_descending(&self.theta)
    }

    pub fn omega_distinct(&self) -> bool {
        strictly_descending(&self.omega)
    }

    pub fn theta_matrix(&self) -> DMatrix<f64> {
        diag_matrix(&self.theta)
    }

    pub fn omega_matrix(&self) -> DMatrix<f64> {
        diag_matrix(&self.omega)
    }
}

fn strictly_descending(x: &[f64]) -> bool {
    x.windows(2).all(|p| p[0] > p[1])
}

pub(crate) fn diag_matrix(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(d))
}

/// A signed permutation ΞP over k indices.
///
/// As a matrix, column j holds `signs[j]` in row `perm[j]`, so `V·matrix()`
/// has columns ±v_{perm[j]}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PermRepr", into = "PermRepr")]
pub struct SignedPermutation {
    perm: Vec<usize>,
    signs: Vec<i8>,
}

#[derive(Serialize, Deserialize)]
struct PermRepr {
    perm: Vec<usize>,
    signs: Vec<i8>,
}

impl TryFrom<PermRepr> for SignedPermutation {
    type Error = Error;

    fn try_from(r: PermRepr) -> Result<Self> {
        SignedPermutation::new(r.perm, r.signs)
    }
}

impl From<SignedPermutation> for PermRepr {
    fn from(p: SignedPermutation) -> Self {
        PermRepr {
            perm: p.perm,
            signs: p.signs,
        }
    }
}

impl SignedPermutation {
    pub fn new(perm: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        let k = perm.len();
        if signs.len() != k {
            return Err(Error::Shape(format!("{k} indices but {} signs", signs.len())));
        }
        let mut seen = vec![false; k];
        for &p in &perm {
            if p >= k || seen[p] {
                return Err(Error::Descriptor(format!("{perm:?} is not a permutation of 0..{k}")));
            }
            seen[p] = true;
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::Descriptor("signs must be ±1".into()));
        }
        Ok(SignedPermutation { perm, signs })
    }

    pub fn identity(k: usize) -> Self {
        SignedPermutation {
            perm: (0..k).collect(),
            signs: vec![1; k],
        }
    }

    pub fn from_perm(perm: Vec<usize>) -> Result<Self> {
        let k = perm.len();
        Self::new(perm, vec![1; k])
    }

    /// Permutation of `0..n` whose leading entries are `chosen`, followed by
    /// the remaining indices in ascending order.
    pub fn selecting(n: usize, chosen: &[usize]) -> Result<Self> {
        let mut perm = chosen.to_vec();
        perm.extend((0..n).filter(|i| !chosen.contains(i)));
        Self::from_perm(perm)
    }

    pub fn with_signs(mut self, signs: Vec<i8>) -> Result<Self> {
        self.signs = signs;
        Self::new(self.perm, self.signs)
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let k = self.len();
        let mut m = DMatrix::zeros(k, k);
        for (j, (&p, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            m[(p, j)] = f64::from(s);
        }
        m
    }
}

/// dg{M}: the diagonal of a square matrix, zeros elsewhere.
pub fn dg(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!("dg needs a square matrix, got {}×{}", m.nrows(), m.ncols())));
    }
    Ok(DMatrix::from_diagonal(&m.diagonal()))
}

pub(crate) fn check_cw(c: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<()> {
    if !c.is_square() || c.nrows() != w.nrows() {
        return Err(Error::Shape(format!(
            "C is {}×{}, W is {}×{}",
            c.nrows(),
            c.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

/// D = diag{w_jᵀCw_j}, returned as its diagonal.
pub fn response_diag(c: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_cw(c, w)?;
    let cw = c * w;
    Ok(DVector::from_fn(w.ncols(), |j, _| w.column(j).dot(&cw.column(j))))
}

/// D* = diag{w_jᵀCWWᵀw_j}, returned as its diagonal.
pub fn cross_diag(c: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_cw(c, w)?;
    let g = w.transpose() * c * w;
    let wtw = w.transpose() * w;
    Ok(DVector::from_fn(w.ncols(), |j, _| g.row(j).dot(&wtw.column(j).transpose())))
}
