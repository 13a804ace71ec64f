//! Closed-form fixed-point families and the fixed-point equations they solve.
//!
//! With S = (V·ΞP)[:, :m] holding the selected signed eigenvectors, the
//! constructed points are
//!
//! | case          | W̄              |
//! |---------------|-----------------|
//! | T, TwJ1, N1   | S·R             |
//! | TwC1          | S·R·Ω^½         |
//! | TwJ2          | S               |
//! | TwC2          | S·Ω^½           |
//! | N2            | S·U*ᵀP*         |

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_serde;
use crate::model::{diag_matrix, response_diag, CovarianceModel, GainSpec, SignedPermutation, WeightMatrix};
use crate::objectives::{objective, ObjectiveKind};
use crate::random::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FixedPointCase {
    T,
    TwJ1,
    TwC1,
    N1,
    TwJ2,
    TwC2,
    N2,
}

impl FixedPointCase {
    pub const ALL: [FixedPointCase; 7] = [
        FixedPointCase::T,
        FixedPointCase::TwJ1,
        FixedPointCase::TwC1,
        FixedPointCase::N1,
        FixedPointCase::TwJ2,
        FixedPointCase::TwC2,
        FixedPointCase::N2,
    ];

    fn takes_rotation(self) -> bool {
        matches!(
            self,
            FixedPointCase::T | FixedPointCase::TwJ1 | FixedPointCase::TwC1 | FixedPointCase::N1
        )
    }

    fn takes_omega(self) -> bool {
        matches!(self, FixedPointCase::TwC1 | FixedPointCase::TwC2)
    }
}

impl fmt::Display for FixedPointCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for FixedPointCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixedPointCase::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown fixed-point case `{s}`; valid: T, TwJ1, TwC1, N1, TwJ2, TwC2, N2")))
    }
}

/// Block-diagonal orthogonal U* with its block sizes and the inner
/// permutation P*.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mixer {
    pub blocks: Vec<usize>,
    #[serde(with = "matrix_serde")]
    pub matrix: DMatrix<f64>,
    pub inner_perm: Vec<usize>,
}

impl Mixer {
    /// Sylvester-Hadamard blocks with identity inner permutation.
    pub fn hadamard(blocks: &[usize]) -> Result<Self> {
        let matrix = hadamard_mixer(blocks)?;
        Ok(Mixer {
            blocks: blocks.to_vec(),
            inner_perm: (0..matrix.nrows()).collect(),
            matrix,
        })
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.blocks.iter().sum::<usize>() != m || self.blocks.contains(&0) {
            return Err(Error::Descriptor(format!("mixer blocks {:?} do not partition {m}", self.blocks)));
        }
        if self.matrix.shape() != (m, m) {
            return Err(Error::Descriptor(format!("mixer is {}×{}, expected {m}×{m}", self.matrix.nrows(), self.matrix.ncols())));
        }
        let mut start = 0;
        let mut owner = vec![0; m];
        for (b, &s) in self.blocks.iter().enumerate() {
            owner[start..start + s].fill(b);
            start += s;
        }
        for i in 0..m {
            for j in 0..m {
                if owner[i] != owner[j] && self.matrix[(i, j)].abs() > 1e-12 {
                    return Err(Error::Descriptor("mixer is not block-diagonal".into()));
                }
            }
        }
        let defect = (self.matrix.transpose() * &self.matrix - DMatrix::identity(m, m)).norm();
        if defect > 1e-10 {
            return Err(Error::Descriptor(format!("mixer is not orthogonal (defect {defect:.3e})")));
        }
        SignedPermutation::from_perm(self.inner_perm.clone())
            .map_err(|_| Error::Descriptor(format!("inner permutation {:?} is invalid", self.inner_perm)))?;
        if self.inner_perm.len() != m {
            return Err(Error::Descriptor("inner permutation has the wrong length".into()));
        }
        Ok(())
    }

    /// U*ᵀP*.
    fn inner(&self) -> DMatrix<f64> {
        let p = SignedPermutation::from_perm(self.inner_perm.clone())
            .expect("validated")
            .matrix();
        self.matrix.transpose() * p
    }
}

/// Symbolic description of a constructed fixed point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointDescriptor {
    pub case: FixedPointCase,
    pub m: usize,
    /// Signed permutation over n; its first m entries choose the eigenvectors.
    pub selection: SignedPermutation,
    #[serde(default, with = "matrix_serde::option", skip_serializing_if = "Option::is_none")]
    pub rotation: Option<DMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixer: Option<Mixer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
}

impl FixedPointDescriptor {
    /// Eigenvector selection with no rotation, mixer or scaling (TwJ2 form).
    pub fn eigenbasis(selection: SignedPermutation, m: usize) -> Self {
        FixedPointDescriptor {
            case: FixedPointCase::TwJ2,
            m,
            selection,
            rotation: None,
            mixer: None,
            omega: None,
        }
    }

    pub fn rotated(case: FixedPointCase, selection: SignedPermutation, rotation: DMatrix<f64>) -> Self {
        FixedPointDescriptor {
            case,
            m: rotation.nrows(),
            selection,
            rotation: Some(rotation),
            mixer: None,
            omega: None,
        }
    }

    pub fn mixed(selection: SignedPermutation, mixer: Mixer) -> Self {
        FixedPointDescriptor {
            case: FixedPointCase::N2,
            m: mixer.matrix.nrows(),
            selection,
            rotation: None,
            mixer: Some(mixer),
            omega: None,
        }
    }

    pub fn with_omega(mut self, omega: Vec<f64>) -> Self {
        self.omega = Some(omega);
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let m = self.m;
        let case = self.case;
        if m == 0 || m > n {
            return Err(Error::Descriptor(format!("m = {m} with n = {n}")));
        }
        if self.selection.len() != n {
            return Err(Error::Descriptor(format!("selection over {} indices, model has n = {n}", self.selection.len())));
        }
        match (&self.rotation, case.takes_rotation()) {
            (None, true) => return Err(Error::Descriptor(format!("case {case} needs a rotation"))),
            (Some(_), false) => return Err(Error::Descriptor(format!("case {case} forbids a rotation"))),
            (Some(r), true) => {
                if r.shape() != (m, m) {
                    return Err(Error::Descriptor(format!("rotation is {}×{}, expected {m}×{m}", r.nrows(), r.ncols())));
                }
                let defect = (r.transpose() * r - DMatrix::identity(m, m)).norm();
                if defect > 1e-10 {
                    return Err(Error::Descriptor(format!("rotation is not orthogonal (defect {defect:.3e})")));
                }
            }
            (None, false) => {}
        }
        match (&self.mixer, case == FixedPointCase::N2) {
            (None, true) => return Err(Error::Descriptor("case N2 needs a mixer".into())),
            (Some(_), false) => return Err(Error::Descriptor(format!("case {case} forbids a mixer"))),
            (Some(mx), true) => mx.validate(m)?,
            (None, false) => {}
        }
        match (&self.omega, case.takes_omega()) {
            (None, true) => return Err(Error::Descriptor(format!("case {case} needs omega"))),
            (Some(_), false) => return Err(Error::Descriptor(format!("case {case} forbids omega"))),
            (Some(o), true) => {
                if o.len() != m || o.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::Descriptor(format!("omega must hold {m} positive values")));
                }
            }
            (None, false) => {}
        }
        Ok(())
    }

    /// The m×m factor multiplying S: R, U*ᵀP* or I.
    pub fn inner_frame(&self) -> DMatrix<f64> {
        if let Some(r) = &self.rotation {
            r.clone()
        } else if let Some(mx) = &self.mixer {
            mx.inner()
        } else {
            DMatrix::identity(self.m, self.m)
        }
    }

    /// λ̂: eigenvalues of the selected eigenvectors, in selection order.
    pub fn selected_eigenvalues(&self, model: &CovarianceModel) -> Vec<f64> {
        self.selection.perm()[..self.m]
            .iter()
            .map(|&i| model.eigenvalues()[i])
            .collect()
    }

    /// λ̌: eigenvalues of the unselected eigenvectors, in permutation order.
    pub fn unselected_eigenvalues(&self, model: &CovarianceModel) -> Vec<f64> {
        self.selection.perm()[self.m..]
            .iter()
            .map(|&i| model.eigenvalues()[i])
            .collect()
    }
}

/// S = (V·ΞP)[:, :m].
pub fn selected_frame(desc: &FixedPointDescriptor, model: &CovarianceModel) -> DMatrix<f64> {
    (model.eigenvectors() * desc.selection.matrix()).columns(0, desc.m).into_owned()
}

/// (V·ΞP)[:, m:], the complement spanned by the unselected eigenvectors.
pub fn unselected_frame(desc: &FixedPointDescriptor, model: &CovarianceModel) -> DMatrix<f64> {
    let n = model.n();
    (model.eigenvectors() * desc.selection.matrix())
        .columns(desc.m, n - desc.m)
        .into_owned()
}

pub fn construct_fixed_point(desc: &FixedPointDescriptor, model: &CovarianceModel) -> Result<WeightMatrix> {
    desc.validate(model.n())?;
    let mut w = selected_frame(desc, model) * desc.inner_frame();
    if let Some(o) = &desc.omega {
        w *= diag_matrix(&o.iter().map(|x| x.sqrt()).collect::<Vec<_>>());
    }
    WeightMatrix::new(w)
}

/// Block-diagonal matrix of normalized Sylvester-Hadamard blocks H/√s.
pub fn hadamard_mixer(block_sizes: &[usize]) -> Result<DMatrix<f64>> {
    let m: usize = block_sizes.iter().sum();
    let mut out = DMatrix::zeros(m, m);
    let mut start = 0;
    for &s in block_sizes {
        if s == 0 || !s.is_power_of_two() {
            return Err(Error::HadamardSize(s));
        }
        let h = sylvester(s) / (s as f64).sqrt();
        out.view_mut((start, start), (s, s)).copy_from(&h);
        start += s;
    }
    Ok(out)
}

fn sylvester(s: usize) -> DMatrix<f64> {
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < s {
        let k = h.nrows();
        let mut next = DMatrix::zeros(2 * k, 2 * k);
        next.view_mut((0, 0), (k, k)).copy_from(&h);
        next.view_mut((0, k), (k, k)).copy_from(&h);
        next.view_mut((k, 0), (k, k)).copy_from(&h);
        next.view_mut((k, k), (k, k)).copy_from(&(-&h));
        h = next;
    }
    h
}

/// Frobenius norm of the left-hand side of the case's fixed-point equation.
pub fn fp_residual(case: FixedPointCase, model: &CovarianceModel, w: &DMatrix<f64>, gains: &GainSpec) -> Result<f64> {
    let c = model.covariance();
    crate::model::check_cw(c, w)?;
    let m = w.ncols();
    let need = |g: &[f64], name: &str| -> Result<DMatrix<f64>> {
        if g.len() != m {
            return Err(Error::Shape(format!("|{name}| = {} but W has {m} columns", g.len())));
        }
        Ok(diag_matrix(g))
    };
    let cw = c * w;
    let wtcw = w.transpose() * &cw;
    let lhs = match case {
        FixedPointCase::T => &cw - w * &wtcw,
        FixedPointCase::TwJ1 => {
            let th = need(&gains.theta, "theta")?;
            &cw * &th - w * &wtcw * &th
        }
        FixedPointCase::TwC1 => {
            let oi = need(&gains.omega.iter().map(|o| 1.0 / o).collect::<Vec<_>>(), "omega")?;
            &cw - w * oi * &wtcw
        }
        FixedPointCase::N1 => {
            let d = DMatrix::from_diagonal(&response_diag(c, w)?);
            &cw * &d - w * &wtcw * &d
        }
        FixedPointCase::TwJ2 => {
            let th = need(&gains.theta, "theta")?;
            &cw * &th - w * &th * &wtcw
        }
        FixedPointCase::TwC2 => {
            let oi = need(&gains.omega.iter().map(|o| 1.0 / o).collect::<Vec<_>>(), "omega")?;
            &cw - w * &wtcw * oi
        }
        FixedPointCase::N2 => {
            let d = DMatrix::from_diagonal(&response_diag(c, w)?);
            &cw * &d - w * &d * &wtcw
        }
    };
    Ok(lhs.norm())
}

/// 1e-10, scaled by ‖C‖_F when that exceeds one.
pub fn residual_tolerance(model: &CovarianceModel) -> f64 {
    1e-10 * model.covariance().norm().max(1.0)
}

pub fn fp_objective(kind: &ObjectiveKind, model: &CovarianceModel, desc: &FixedPointDescriptor) -> Result<f64> {
    let w = construct_fixed_point(desc, model)?;
    objective(kind, model.covariance(), &w)
}

/// All ordered m-tuples of distinct indices from 0..n.
pub fn ordered_selections(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                rec(n, m, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, m, &mut Vec::with_capacity(m), &mut out);
    out
}

/// Largest-first partition of m into powers of two.
pub fn power_of_two_blocks(m: usize) -> Vec<usize> {
    let mut rest = m;
    let mut blocks = Vec::new();
    while rest > 0 {
        let s = 1 << (usize::BITS - 1 - rest.leading_zeros());
        blocks.push(s);
        rest -= s;
    }
    blocks
}

/// A random valid descriptor of the given case: random ordered selection
/// and signs, random rotation or Hadamard mixer with random inner
/// permutation, and `omega` for the TwC cases.
pub fn random_descriptor(rng: &mut Rng, case: FixedPointCase, n: usize, m: usize, omega: &[f64]) -> Result<FixedPointDescriptor> {
    let selection = SignedPermutation::new(random::random_permutation(rng, n), random::random_signs(rng, n))?;
    let mut desc = FixedPointDescriptor {
        case,
        m,
        selection,
        rotation: None,
        mixer: None,
        omega: None,
    };
    if case.takes_rotation() {
        desc.rotation = Some(random::random_orthogonal(rng, m));
    }
    if case.takes_omega() {
        desc.omega = Some(omega.to_vec());
    }
    if case == FixedPointCase::N2 {
        let mut mixer = Mixer::hadamard(&power_of_two_blocks(m))?;
        mixer.inner_perm = random::random_permutation(rng, m);
        desc.mixer = Some(mixer);
    }
    desc.validate(n)?;
    Ok(desc)
}
