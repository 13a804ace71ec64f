//! Averaged learning rules τẆ = f(C, W) and their negative-term taxonomy.
//!
//! The returned right-hand sides are un-normalized; τ is absorbed into the
//! integrator's step size. D = diag{w_jᵀCw_j} and D* = diag{w_jᵀCWWᵀw_j}
//! are recomputed from the given W on every call.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_cw, cross_diag, diag_matrix, response_diag, GainSpec};
use crate::objectives::ObjectiveKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RuleId {
    TwJ2S,
    N2S,
    TwJL,
    NL,
    TL,
    TSE,
    TSC,
    NSE,
    NSC,
    OjaSubspace,
    OjaWeighted,
    Xu15b,
    /// NL without its CWD* term (positive coefficient lowered to 4).
    /// Ablation only; not part of [`RuleId::ALL`].
    NlNoCross,
}

impl RuleId {
    pub const ALL: [RuleId; 12] = [
        RuleId::TwJ2S,
        RuleId::N2S,
        RuleId::TwJL,
        RuleId::NL,
        RuleId::TL,
        RuleId::TSE,
        RuleId::TSC,
        RuleId::NSE,
        RuleId::NSC,
        RuleId::OjaSubspace,
        RuleId::OjaWeighted,
        RuleId::Xu15b,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::TwJ2S => "twj2s",
            RuleId::N2S => "n2s",
            RuleId::TwJL => "twjl",
            RuleId::NL => "nl",
            RuleId::TL => "tl",
            RuleId::TSE => "tse",
            RuleId::TSC => "tsc",
            RuleId::NSE => "nse",
            RuleId::NSC => "nsc",
            RuleId::OjaSubspace => "oja",
            RuleId::OjaWeighted => "ojaw",
            RuleId::Xu15b => "xu15b",
            RuleId::NlNoCross => "nl-nodstar",
        }
    }

    pub fn valid_names() -> String {
        RuleId::ALL
            .iter()
            .chain(std::iter::once(&RuleId::NlNoCross))
            .map(|r| r.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Uses the response diagonal D (novel objective family).
    pub fn is_novel(self) -> bool {
        matches!(
            self,
            RuleId::N2S | RuleId::NL | RuleId::NSE | RuleId::NSC | RuleId::NlNoCross
        )
    }

    pub fn uses_theta(self) -> bool {
        matches!(
            self,
            RuleId::TwJ2S | RuleId::TwJL | RuleId::TSE | RuleId::TSC | RuleId::Xu15b
        )
    }

    pub fn uses_omega(self) -> bool {
        self == RuleId::OjaWeighted
    }

    /// Rules whose PCA behaviour relies on pairwise-different gains.
    /// TSE and TSC are plain manifold gradients and also accept Θ = I.
    pub fn requires_distinct_gains(self) -> bool {
        matches!(
            self,
            RuleId::TwJ2S | RuleId::TwJL | RuleId::Xu15b | RuleId::OjaWeighted
        )
    }

    /// Expected to perform PCA rather than only PSA.
    pub fn is_pca(self) -> bool {
        !matches!(self, RuleId::OjaSubspace | RuleId::TL)
    }

    /// Ω of the constraint WᵀW = Ω the rule converges to; `None` means I.
    pub fn constraint_omega(self, gains: &GainSpec) -> Option<Vec<f64>> {
        self.uses_omega().then(|| gains.omega.clone())
    }

    /// The objective whose maximization the rule performs.
    pub fn objective_kind(self, gains: &GainSpec) -> ObjectiveKind {
        if self.is_novel() {
            ObjectiveKind::Novel
        } else if self.uses_theta() {
            ObjectiveKind::traditional(gains)
        } else {
            ObjectiveKind::Traditional {
                theta: vec![1.0; gains.m()],
            }
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleId::ALL
            .iter()
            .chain(std::iter::once(&RuleId::NlNoCross))
            .copied()
            .find(|r| r.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownRule {
                name: s.to_string(),
                valid: RuleId::valid_names(),
            })
    }
}

impl From<RuleId> for String {
    fn from(r: RuleId) -> String {
        r.as_str().to_string()
    }
}

impl TryFrom<String> for RuleId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Negative terms of a rule written with a generic diagonal D (Θ, D or I).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermProfile {
    pub ww_cwd: bool,
    pub wdw_cw: bool,
    pub cwdw_w: bool,
    pub cww_wd: bool,
    pub cw_dstar: bool,
    pub n_t: usize,
    /// Coefficient of the positive term CWD once every negative term has
    /// unit coefficient.
    pub positive_coefficient: f64,
    /// D = I, so some of the five term shapes coincide; the flags keep one
    /// representative per coinciding group.
    pub coincident_terms: bool,
    /// Outside the term taxonomy; flags are derived from the rule's formula.
    pub untabulated: bool,
}

impl TermProfile {
    fn new(flags: [bool; 5], positive: f64) -> Self {
        TermProfile {
            ww_cwd: flags[0],
            wdw_cw: flags[1],
            cwdw_w: flags[2],
            cww_wd: flags[3],
            cw_dstar: flags[4],
            n_t: flags.iter().filter(|f| **f).count(),
            positive_coefficient: positive,
            coincident_terms: false,
            untabulated: false,
        }
    }

    pub fn flags(&self) -> [bool; 5] {
        [self.ww_cwd, self.wdw_cw, self.cwdw_w, self.cww_wd, self.cw_dstar]
    }
}

pub fn term_profile(rule: RuleId) -> TermProfile {
    const F: bool = false;
    const T: bool = true;
    match rule {
        RuleId::TwJ2S | RuleId::N2S | RuleId::TSC | RuleId::NSC => TermProfile::new([F, T, F, F, F], 1.0),
        RuleId::TwJL => TermProfile::new([T, T, T, T, F], 4.0),
        RuleId::NL => TermProfile::new([T, T, T, T, T], 5.0),
        RuleId::TSE | RuleId::NSE => TermProfile::new([T, T, F, F, F], 2.0),
        RuleId::Xu15b => TermProfile::new([F, T, T, F, F], 2.0),
        RuleId::OjaSubspace => TermProfile {
            coincident_terms: true,
            ..TermProfile::new([T, F, F, F, F], 1.0)
        },
        RuleId::TL => TermProfile {
            coincident_terms: true,
            ..TermProfile::new([T, F, F, T, F], 2.0)
        },
        RuleId::OjaWeighted => TermProfile {
            untabulated: true,
            ..TermProfile::new([T, F, F, F, F], 1.0)
        },
        RuleId::NlNoCross => TermProfile {
            untabulated: true,
            ..TermProfile::new([T, T, T, T, F], 4.0)
        },
    }
}

/// Checks that `gains` can drive `rule` on an m-column W.
pub fn check_gains(rule: RuleId, gains: &GainSpec, m: usize) -> Result<()> {
    let err = |reason: String| Error::Gains {
        rule: rule.as_str().to_string(),
        reason,
    };
    if !(rule.uses_theta() || rule.uses_omega()) {
        return Ok(());
    }
    if gains.theta.len() != m || gains.omega.len() != m {
        return Err(err(format!(
            "need {m} gains, got |theta| = {}, |omega| = {}",
            gains.theta.len(),
            gains.omega.len()
        )));
    }
    gains.validate().map_err(|e| err(e.to_string()))?;
    if rule.requires_distinct_gains() {
        if rule.uses_theta() && !gains.theta_distinct() {
            return Err(err("theta must be strictly descending".into()));
        }
        if rule.uses_omega() && !gains.omega_distinct() {
            return Err(err("omega must be strictly descending".into()));
        }
    }
    Ok(())
}

pub fn rule_rhs(rule: RuleId, c: &DMatrix<f64>, w: &DMatrix<f64>, gains: &GainSpec) -> Result<DMatrix<f64>> {
    check_cw(c, w)?;
    check_gains(rule, gains, w.ncols())?;
    let cw = c * w;
    let wt = w.transpose();
    let wtcw = &wt * &cw;
    let wtw = &wt * w;
    let gain = || -> Result<DMatrix<f64>> {
        Ok(if rule.is_novel() {
            DMatrix::from_diagonal(&response_diag(c, w)?)
        } else {
            diag_matrix(&gains.theta)
        })
    };
    let out = match rule {
        RuleId::TwJ2S | RuleId::N2S | RuleId::TSC | RuleId::NSC => {
            let d = gain()?;
            &cw * &d - w * &d * &wtcw
        }
        RuleId::TSE | RuleId::NSE => {
            let d = gain()?;
            &cw * &d - (w * &wtcw * &d + w * &d * &wtcw) * 0.5
        }
        RuleId::TwJL | RuleId::NlNoCross => {
            let d = gain()?;
            &cw * &d * 4.0 - (w * &wtcw * &d + w * &d * &wtcw + &cw * &d * &wtw + &cw * &wtw * &d)
        }
        RuleId::NL => {
            let d = gain()?;
            let dstar = DMatrix::from_diagonal(&cross_diag(c, w)?);
            &cw * &d * 5.0
                - (w * &wtcw * &d + w * &d * &wtcw + &cw * &d * &wtw + &cw * dstar + &cw * &wtw * &d)
        }
        RuleId::TL => &cw * 4.0 - (w * &wtcw * 2.0 + &cw * &wtw * 2.0),
        RuleId::OjaSubspace => &cw - w * &wtcw,
        RuleId::OjaWeighted => {
            let omega_inv = diag_matrix(&gains.omega.iter().map(|o| 1.0 / o).collect::<Vec<_>>());
            &cw - w * &wtcw * omega_inv
        }
        RuleId::Xu15b => {
            let d = gain()?;
            &cw * &d * 2.0 - (w * &d * &wtcw + &cw * &d * &wtw)
        }
    };
    Ok(out)
}
