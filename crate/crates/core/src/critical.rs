//! Second-order behaviour of the constrained objectives at fixed points.
//!
//! A tangent step from W̄ is written W = W̄(I + A − ½[AᵀA + BᵀB]) + W̄⊥B
//! where W̄⊥ spans the unselected eigenvectors. With H = W̄ᵀCW̄, h_j = H_jj
//! and Λ̌ = W̄⊥ᵀCW̄⊥ the quadratic change of the objective is
//!
//! - traditional: ½Σ_j θ_j [Σ_k A²_kj (λ̂_k − λ̂_j) + Σ_k B²_kj (λ̌_k − λ̂_j)]
//! - novel, diagonal H: ½Σ_j h_j [Σ_k A²_kj (h_k − h_j) + Σ_k B²_kj (λ̌_k − h_j)]
//! - novel, general H: ½Σ_j h_j {(AᵀHA)_jj − [(AᵀA + BᵀB)H]_jj + (BᵀΛ̌B)_jj} + Σ_j [(AᵀH)_jj]²

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_points::{construct_fixed_point, unselected_frame, FixedPointCase, FixedPointDescriptor};
use crate::model::{CovarianceModel, WeightMatrix};
use crate::objectives::{gradient, objective, ObjectiveKind};
use crate::stiefel::{manifold_gradient, retract_approx_tangent, FrameWithComplement, Metric, TangentPerturbation};

const OFF_DIAGONAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    LocalMaximum,
    NotMaximum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalClassification {
    pub verdict: Verdict,
    /// A probe with positive ΔJ; present iff the verdict is `NotMaximum`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<TangentPerturbation>,
    /// Largest closed-form ΔJ over the probe set.
    pub margin: f64,
}

/// JSON row of a classification table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub case: FixedPointCase,
    pub selection: Vec<usize>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<TangentPerturbation>,
    pub margin: f64,
}

impl CriticalClassification {
    pub fn report(&self, desc: &FixedPointDescriptor) -> ClassificationReport {
        ClassificationReport {
            case: desc.case,
            selection: desc.selection.perm()[..desc.m].to_vec(),
            verdict: self.verdict,
            witness: self.witness.clone(),
            margin: self.margin,
        }
    }
}

fn stiefel_point(desc: &FixedPointDescriptor, model: &CovarianceModel) -> Result<WeightMatrix> {
    if desc.omega.is_some() {
        return Err(Error::Descriptor(format!(
            "case {} is scaled by omega and does not lie on the Stiefel manifold",
            desc.case
        )));
    }
    construct_fixed_point(desc, model)
}

/// (W̄, W̄⊥) with W̄⊥ spanned by the unselected eigenvectors.
pub fn fixed_point_frame(desc: &FixedPointDescriptor, model: &CovarianceModel) -> Result<FrameWithComplement> {
    let w = stiefel_point(desc, model)?;
    FrameWithComplement::from_parts(w.into_inner(), unselected_frame(desc, model))
}

fn max_off_diagonal(h: &DMatrix<f64>) -> f64 {
    let mut out = 0.0_f64;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            if i != j {
                out = out.max(h[(i, j)].abs());
            }
        }
    }
    out
}

/// Quadratic-order ΔJ of a tangent step from the fixed point `desc`.
pub fn delta_j_closed(
    kind: &ObjectiveKind,
    model: &CovarianceModel,
    desc: &FixedPointDescriptor,
    pert: &TangentPerturbation,
) -> Result<f64> {
    let w = stiefel_point(desc, model)?;
    let (n, m) = (model.n(), desc.m);
    if pert.m() != m || pert.n() != n {
        return Err(Error::Shape(format!(
            "perturbation for n={}, m={} at a fixed point with n={n}, m={m}",
            pert.n(),
            pert.m()
        )));
    }
    let a = pert.a();
    let b = pert.b();
    let lam_check = desc.unselected_eigenvalues(model);
    match kind {
        ObjectiveKind::Traditional { theta } => {
            if theta.len() != m {
                return Err(Error::Shape(format!("|theta| = {} but m = {m}", theta.len())));
            }
            let u = desc.inner_frame();
            let signed_identity = (0..m).all(|i| (0..m).all(|j| {
                let target = if i == j { 1.0 } else { 0.0 };
                (u[(i, j)].abs() - target).abs() < 1e-10
            }));
            if !signed_identity {
                return Err(Error::Descriptor(
                    "the traditional closed form needs an unrotated eigenvector selection".into(),
                ));
            }
            let lam_hat = desc.selected_eigenvalues(model);
            let mut sum = 0.0;
            for j in 0..m {
                let mut inner = 0.0;
                for k in 0..m {
                    inner += a[(k, j)].powi(2) * (lam_hat[k] - lam_hat[j]);
                }
                for k in 0..n - m {
                    inner += b[(k, j)].powi(2) * (lam_check[k] - lam_hat[j]);
                }
                sum += theta[j] * inner;
            }
            Ok(0.5 * sum)
        }
        ObjectiveKind::Novel => {
            let h = w.transpose() * model.covariance() * &*w;
            let hd: Vec<f64> = h.diagonal().iter().copied().collect();
            if max_off_diagonal(&h) <= OFF_DIAGONAL_TOL * h.amax().max(1.0) {
                let mut sum = 0.0;
                for j in 0..m {
                    let mut inner = 0.0;
                    for k in 0..m {
                        inner += a[(k, j)].powi(2) * (hd[k] - hd[j]);
                    }
                    for k in 0..n - m {
                        inner += b[(k, j)].powi(2) * (lam_check[k] - hd[j]);
                    }
                    sum += hd[j] * inner;
                }
                Ok(0.5 * sum)
            } else {
                let lam_check_m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam_check));
                let ath = a.transpose() * &h;
                let atha = &ath * &a;
                let sh = (a.transpose() * &a + b.transpose() * b) * &h;
                let blb = b.transpose() * lam_check_m * b;
                let mut sum = 0.0;
                let mut sq = 0.0;
                for j in 0..m {
                    sum += hd[j] * (atha[(j, j)] - sh[(j, j)] + blb[(j, j)]);
                    sq += ath[(j, j)].powi(2);
                }
                Ok(0.5 * sum + sq)
            }
        }
    }
}

/// J(retract_approx(W̄, ε·Δ)) − J(W̄).
pub fn delta_j_numeric(
    kind: &ObjectiveKind,
    model: &CovarianceModel,
    frame: &FrameWithComplement,
    pert: &TangentPerturbation,
    eps: f64,
) -> Result<f64> {
    let c = model.covariance();
    let w = retract_approx_tangent(frame, &pert.scaled(eps))?;
    Ok(objective(kind, c, &w)? - objective(kind, c, frame.x())?)
}

/// Skew A with (AH)_jj = Σ_{k≠j} |H_jk| > 0, for the last row j of H that has
/// a non-zero off-diagonal entry.
pub fn nonmax_witness(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !h.is_square() {
        return Err(Error::Shape(format!("H is {}×{}", h.nrows(), h.ncols())));
    }
    let m = h.nrows();
    let sign = |x: f64| {
        if x.abs() <= OFF_DIAGONAL_TOL {
            0.0
        } else {
            x.signum()
        }
    };
    let row = (0..m)
        .rev()
        .find(|&j| (0..m).any(|i| i != j && sign(h[(i, j)]) != 0.0))
        .ok_or(Error::NoWitness { tol: OFF_DIAGONAL_TOL })?;
    let mut a = DMatrix::zeros(m, m);
    for i in (0..m).filter(|&i| i != row) {
        let s = sign(h[(i, row)]);
        a[(row, i)] = s;
        a[(i, row)] = -s;
    }
    Ok(a)
}

/// ‖canonical Stiefel gradient‖_F at the constructed point, relative to
/// ‖∂J/∂W‖_F.
pub fn stationarity(kind: &ObjectiveKind, model: &CovarianceModel, desc: &FixedPointDescriptor) -> Result<f64> {
    let w = stiefel_point(desc, model)?;
    let g = gradient(kind, model.covariance(), &w)?;
    Ok(manifold_gradient(Metric::Canonical, &g, &w).norm() / g.norm().max(1.0))
}

/// Lemma witness (novel objective with non-diagonal H) followed by every
/// single-entry A and every single-entry B.
pub fn probe_set(kind: &ObjectiveKind, model: &CovarianceModel, desc: &FixedPointDescriptor) -> Result<Vec<TangentPerturbation>> {
    let w = stiefel_point(desc, model)?;
    let (n, m) = (model.n(), desc.m);
    let mut probes = Vec::new();
    if kind.is_novel() {
        let h = w.transpose() * model.covariance() * &*w;
        if max_off_diagonal(&h) > OFF_DIAGONAL_TOL * h.amax().max(1.0) {
            probes.push(TangentPerturbation::new(&nonmax_witness(&h)?, DMatrix::zeros(n - m, m))?);
        }
    }
    for k in 1..m {
        for j in 0..k {
            probes.push(TangentPerturbation::single_a(n, m, k, j));
        }
    }
    for k in 0..n - m {
        for j in 0..m {
            probes.push(TangentPerturbation::single_b(n, m, k, j));
        }
    }
    Ok(probes)
}

/// ΔJ threshold below which a probe counts as non-increasing.
pub fn delta_tolerance(model: &CovarianceModel) -> f64 {
    1e-10 * model.covariance().norm().max(1.0).powi(2)
}

pub fn classify(kind: &ObjectiveKind, model: &CovarianceModel, desc: &FixedPointDescriptor) -> Result<CriticalClassification> {
    let residual = stationarity(kind, model, desc)?;
    let tolerance = 1e-9;
    if residual > tolerance {
        return Err(Error::NotFixedPoint { residual, tolerance });
    }
    let tol = delta_tolerance(model);
    let mut margin = f64::NEG_INFINITY;
    let mut witness = None;
    for probe in probe_set(kind, model, desc)? {
        let dj = delta_j_closed(kind, model, desc, &probe)?;
        if dj > tol && witness.is_none() {
            witness = Some(probe);
        }
        margin = margin.max(dj);
    }
    if !margin.is_finite() {
        margin = 0.0;
    }
    Ok(CriticalClassification {
        verdict: if witness.is_some() {
            Verdict::NotMaximum
        } else {
            Verdict::LocalMaximum
        },
        witness,
        margin,
    })
}
