//! The traditional and novel objective functions with their gradients.
//!
//! Traditional: J = ½ tr{WᵀCWΘ}, ∂J/∂W = CWΘ.
//! Novel: J = ¼ Σ_j (w_jᵀCw_j)², ∂J/∂W = CW·diag{w_jᵀCw_j}.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{check_cw, diag_matrix, response_diag, GainSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveKind {
    Traditional { theta: Vec<f64> },
    Novel,
}

impl ObjectiveKind {
    pub fn traditional(gains: &GainSpec) -> Self {
        ObjectiveKind::Traditional {
            theta: gains.theta.clone(),
        }
    }

    pub fn is_novel(&self) -> bool {
        matches!(self, ObjectiveKind::Novel)
    }

    fn theta_for(&self, m: usize) -> Result<Option<&[f64]>> {
        match self {
            ObjectiveKind::Traditional { theta } if theta.len() != m => Err(Error::Shape(format!(
                "|theta| = {} but W has {m} columns",
                theta.len()
            ))),
            ObjectiveKind::Traditional { theta } => Ok(Some(theta)),
            ObjectiveKind::Novel => Ok(None),
        }
    }
}

pub fn objective(kind: &ObjectiveKind, c: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<f64> {
    let d = response_diag(c, w)?;
    Ok(match kind.theta_for(w.ncols())? {
        Some(theta) => 0.5 * d.iter().zip(theta).map(|(d, t)| d * t).sum::<f64>(),
        None => 0.25 * d.iter().map(|d| d * d).sum::<f64>(),
    })
}

pub fn gradient(kind: &ObjectiveKind, c: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_cw(c, w)?;
    let gain = match kind.theta_for(w.ncols())? {
        Some(theta) => diag_matrix(theta),
        None => DMatrix::from_diagonal(&response_diag(c, w)?),
    };
    Ok(c * w * gain)
}

/// Max entrywise deviation between central finite differences of the
/// objective and the analytic gradient, relative to the largest gradient
/// entry. Returns 0 when both vanish.
pub fn gradient_check(kind: &ObjectiveKind, c: &DMatrix<f64>, w: &DMatrix<f64>, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let g = gradient(kind, c, w)?;
    let mut fd = DMatrix::zeros(w.nrows(), w.ncols());
    let mut wp = w.clone();
    for j in 0..w.ncols() {
        for i in 0..w.nrows() {
            let x = w[(i, j)];
            wp[(i, j)] = x + step;
            let up = objective(kind, c, &wp)?;
            wp[(i, j)] = x - step;
            let down = objective(kind, c, &wp)?;
            wp[(i, j)] = x;
            fd[(i, j)] = (up - down) / (2.0 * step);
        }
    }
    let scale = g.amax().max(fd.amax());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((fd - g).amax() / scale)
}
