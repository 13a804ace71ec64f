//! Tangent parametrization, projections, retractions and manifold gradients
//! for orthonormal n×m frames.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_serde;
use crate::random;

const COMPLEMENT_SEED: u64 = 0x5eed_c0de;

/// A tangent step Δ = XA + X⊥B with A skew-symmetric.
///
/// Only the strictly lower triangle of A is stored, so A + Aᵀ = 0 holds
/// exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TangentRepr")]
pub struct TangentPerturbation {
    m: usize,
    /// Row-major strictly lower triangle: (1,0), (2,0), (2,1), (3,0), …
    a_lower: Vec<f64>,
    #[serde(with = "matrix_serde")]
    b: DMatrix<f64>,
}

#[derive(Deserialize)]
struct TangentRepr {
    m: usize,
    a_lower: Vec<f64>,
    b: Vec<Vec<f64>>,
}

impl TryFrom<TangentRepr> for TangentPerturbation {
    type Error = String;

    fn try_from(r: TangentRepr) -> std::result::Result<Self, String> {
        let b = matrix_serde::from_rows(&r.b, r.m)?;
        if b.ncols() != r.m {
            return Err(format!("B has {} columns, expected {}", b.ncols(), r.m));
        }
        if r.a_lower.len() != r.m * r.m.saturating_sub(1) / 2 {
            return Err(format!("a_lower has {} entries for m = {}", r.a_lower.len(), r.m));
        }
        Ok(TangentPerturbation {
            m: r.m,
            a_lower: r.a_lower,
            b,
        })
    }
}

fn lower_index(k: usize, j: usize) -> usize {
    debug_assert!(k > j);
    k * (k - 1) / 2 + j
}

impl TangentPerturbation {
    pub fn zeros(n: usize, m: usize) -> Self {
        TangentPerturbation {
            m,
            a_lower: vec![0.0; m * m.saturating_sub(1) / 2],
            b: DMatrix::zeros(n - m, m),
        }
    }

    /// Takes A's strictly lower triangle; fails if A is not skew within 1e-12.
    pub fn new(a: &DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let m = a.nrows();
        if !a.is_square() || b.ncols() != m {
            return Err(Error::Shape(format!(
                "A is {}×{}, B is {}×{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let asym = (a + a.transpose()).amax();
        if asym > 1e-12 * a.amax().max(1.0) {
            return Err(Error::Shape(format!("A is not skew-symmetric (‖A+Aᵀ‖_max = {asym:.3e})")));
        }
        let mut a_lower = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for k in 1..m {
            for j in 0..k {
                a_lower.push(a[(k, j)]);
            }
        }
        Ok(TangentPerturbation { m, a_lower, b })
    }

    /// A = e_k e_jᵀ − e_j e_kᵀ (so A_kj = 1), B = 0.
    pub fn single_a(n: usize, m: usize, k: usize, j: usize) -> Self {
        let mut p = Self::zeros(n, m);
        if k > j {
            p.a_lower[lower_index(k, j)] = 1.0;
        } else {
            p.a_lower[lower_index(j, k)] = -1.0;
        }
        p
    }

    /// A = 0, B = e_k e_jᵀ.
    pub fn single_b(n: usize, m: usize, k: usize, j: usize) -> Self {
        let mut p = Self::zeros(n, m);
        p.b[(k, j)] = 1.0;
        p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.m + self.b.nrows()
    }

    pub fn a(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.m, self.m);
        for k in 1..self.m {
            for j in 0..k {
                let v = self.a_lower[lower_index(k, j)];
                a[(k, j)] = v;
                a[(j, k)] = -v;
            }
        }
        a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn scaled(&self, s: f64) -> Self {
        TangentPerturbation {
            m: self.m,
            a_lower: self.a_lower.iter().map(|x| x * s).collect(),
            b: &self.b * s,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a_lower.iter().all(|x| *x == 0.0) && self.b.iter().all(|x| *x == 0.0)
    }
}

/// An orthonormal frame X together with an orthonormal basis X⊥ of its
/// complement.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameWithComplement {
    x: DMatrix<f64>,
    x_perp: DMatrix<f64>,
}

impl FrameWithComplement {
    /// Checks that [X | X⊥] is orthogonal within 1e-10.
    pub fn from_parts(x: DMatrix<f64>, x_perp: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if x_perp.nrows() != n || x.ncols() + x_perp.ncols() != n {
            return Err(Error::Shape(format!(
                "X is {}×{}, X⊥ is {}×{}",
                x.nrows(),
                x.ncols(),
                x_perp.nrows(),
                x_perp.ncols()
            )));
        }
        let mut full = DMatrix::zeros(n, n);
        full.columns_mut(0, x.ncols()).copy_from(&x);
        full.columns_mut(x.ncols(), x_perp.ncols()).copy_from(&x_perp);
        let defect = (full.transpose() * full - DMatrix::identity(n, n)).norm();
        if defect > 1e-10 {
            return Err(Error::NotOrthonormal { defect });
        }
        Ok(FrameWithComplement { x, x_perp })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_perp(&self) -> &DMatrix<f64> {
        &self.x_perp
    }
}

/// Completes X to an orthogonal basis via full QR of [X | G] with seeded
/// Gaussian G.
pub fn complement(x: &DMatrix<f64>) -> Result<FrameWithComplement> {
    complement_seeded(x, COMPLEMENT_SEED)
}

pub fn complement_seeded(x: &DMatrix<f64>, seed: u64) -> Result<FrameWithComplement> {
    let (n, m) = x.shape();
    if m > n {
        return Err(Error::Shape(format!("frame is {n}×{m}")));
    }
    let defect = (x.transpose() * x - DMatrix::identity(m, m)).norm();
    if defect > 1e-8 {
        return Err(Error::NotOrthonormal { defect });
    }
    let mut ext = DMatrix::zeros(n, n);
    ext.columns_mut(0, m).copy_from(x);
    ext.columns_mut(m, n - m)
        .copy_from(&random::gaussian_matrix(&mut random::rng(seed), n, n - m));
    let q = ext.qr().q();
    let x_perp = q.columns(m, n - m).into_owned();
    FrameWithComplement::from_parts(x.clone(), x_perp)
}

/// Δ = XA + X⊥B.
pub fn tangent(frame: &FrameWithComplement, pert: &TangentPerturbation) -> Result<DMatrix<f64>> {
    if pert.m() != frame.x.ncols() || pert.b.nrows() != frame.x_perp.ncols() {
        return Err(Error::Shape(format!(
            "perturbation for n={}, m={} applied to a {}×{} frame",
            pert.n(),
            pert.m(),
            frame.x.nrows(),
            frame.x.ncols()
        )));
    }
    Ok(&frame.x * pert.a() + &frame.x_perp * &pert.b)
}

/// Z − ½X(XᵀZ + ZᵀX).
pub fn project_tangent(x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let xtz = x.transpose() * z;
    z - x * (&xtz + xtz.transpose()) * 0.5
}

/// ‖XᵀΔ + ΔᵀX‖_F.
pub fn skewness_defect(x: &DMatrix<f64>, delta: &DMatrix<f64>) -> f64 {
    let xtd = x.transpose() * delta;
    (&xtd + xtd.transpose()).norm()
}

/// Polar factor X(XᵀX)^(−1/2), computed from the eigendecomposition of XᵀX
/// and polished by one Newton–Schulz step.
pub fn retract_exact(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(x.transpose() * x);
    let min_eig = eig.eigenvalues.min();
    if !(min_eig > 1e-24) {
        return Err(Error::Singular { min_eig });
    }
    let q = &eig.eigenvectors;
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let w = x * q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    let m = w.ncols();
    let wtw = w.transpose() * &w;
    Ok(&w * (DMatrix::identity(m, m) * 1.5 - wtw * 0.5))
}

/// Polar factor UVᵀ from the thin SVD X = UΣVᵀ.
pub fn retract_exact_svd(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let smin = svd.singular_values.min();
    if !(smin > 1e-12) {
        return Err(Error::Singular { min_eig: smin * smin });
    }
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    Ok(u * vt)
}

/// X̄ + Δ − ½X̄ΔᵀΔ.
pub fn retract_approx(xbar: &DMatrix<f64>, delta: &DMatrix<f64>) -> DMatrix<f64> {
    xbar + delta - xbar * (delta.transpose() * delta) * 0.5
}

/// X̄(I + A − ½[AᵀA + BᵀB]) + X̄⊥B.
pub fn retract_approx_tangent(frame: &FrameWithComplement, pert: &TangentPerturbation) -> Result<DMatrix<f64>> {
    tangent(frame, pert)?;
    let m = pert.m();
    let a = pert.a();
    let b = pert.b();
    let inner = DMatrix::identity(m, m) + &a - (a.transpose() * &a + b.transpose() * b) * 0.5;
    Ok(&frame.x * inner + &frame.x_perp * b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Embedded,
    Canonical,
}

/// Riemannian gradient at X of a function with Euclidean gradient G.
pub fn manifold_gradient(metric: Metric, g: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    match metric {
        Metric::Embedded => project_tangent(x, g),
        Metric::Canonical => g - x * g.transpose() * x,
    }
}
